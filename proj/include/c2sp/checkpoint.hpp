#pragma once

#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "c2sp/compression.hpp"
#include "c2sp/layers.hpp"

namespace c2sp {

// Model checkpoint container:
//   magic "C2SPMODL" | version u8 | config block (u32 LE byte length +
//   key=value lines) | named sections, each: name length u16 LE + name bytes
//   + element count u64 LE + 64-bit LE reals. Sections run to end of file.

using ConfigMap = std::map<std::string, std::string>;

struct Section {
    std::string name;
    std::vector<double> values;
};

inline std::string encode_config(const ConfigMap& cfg) {
    std::string out;
    for (const auto& [k, v] : cfg) out += k + "=" + v + "\n";
    return out;
}

inline ConfigMap decode_config(const std::string& text) {
    ConfigMap cfg;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t eol = text.find('\n', pos);
        if (eol == std::string::npos) eol = text.size();
        const std::string line = text.substr(pos, eol - pos);
        pos = eol + 1;
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) throw format_error("checkpoint config: malformed line");
        cfg[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return cfg;
}

inline std::string encode_checkpoint(const ConfigMap& cfg, const std::vector<Section>& sections) {
    std::string out = "C2SPMODL";
    out.push_back(1);
    const std::string cfg_text = encode_config(cfg);
    detail::put_u32_le(out, static_cast<std::uint32_t>(cfg_text.size()));
    out += cfg_text;
    for (const auto& s : sections) {
        if (s.name.size() > 0xffff) throw format_error("checkpoint: section name too long");
        out.push_back(static_cast<char>(s.name.size() & 0xff));
        out.push_back(static_cast<char>((s.name.size() >> 8) & 0xff));
        out += s.name;
        const std::uint64_t n = s.values.size();
        for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((n >> (8 * i)) & 0xff));
        for (double v : s.values) detail::put_f64_le(out, v);
    }
    return out;
}

inline void decode_checkpoint(const std::string& blob, ConfigMap& cfg,
                              std::vector<Section>& sections) {
    auto fail = [](std::size_t off, const std::string& what) {
        throw format_error("checkpoint: " + what + " at byte offset " + std::to_string(off));
    };
    const auto* p = reinterpret_cast<const unsigned char*>(blob.data());
    if (blob.size() < 13) fail(blob.size(), "truncated header");
    if (std::memcmp(p, "C2SPMODL", 8) != 0) fail(0, "bad magic");
    if (p[8] != 1) fail(8, "unsupported version");
    const std::uint32_t cfg_len = detail::get_u32_le(p + 9);
    if (blob.size() < 13 + cfg_len) fail(13, "truncated config block");
    cfg = decode_config(blob.substr(13, cfg_len));
    std::size_t off = 13 + cfg_len;
    sections.clear();
    while (off < blob.size()) {
        if (off + 2 > blob.size()) fail(off, "truncated section name length");
        const std::size_t name_len = p[off] | (static_cast<std::size_t>(p[off + 1]) << 8);
        off += 2;
        if (off + name_len + 8 > blob.size()) fail(off, "truncated section header");
        Section s;
        s.name = blob.substr(off, name_len);
        off += name_len;
        std::uint64_t count = 0;
        for (int i = 0; i < 8; ++i) count |= static_cast<std::uint64_t>(p[off + i]) << (8 * i);
        off += 8;
        if (off + count * 8 > blob.size()) fail(off, "truncated section payload");
        s.values.resize(count);
        for (std::uint64_t i = 0; i < count; ++i, off += 8)
            s.values[i] = detail::get_f64_le(p + off);
        sections.push_back(std::move(s));
    }
}

inline void write_checkpoint(const std::string& path, const ConfigMap& cfg,
                             const std::vector<Section>& sections) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw format_error("checkpoint: cannot open " + path);
    const std::string blob = encode_checkpoint(cfg, sections);
    f.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    if (!f) throw format_error("checkpoint: write failed for " + path);
}

inline void read_checkpoint(const std::string& path, ConfigMap& cfg,
                            std::vector<Section>& sections) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw format_error("checkpoint: cannot open " + path);
    std::string blob((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    decode_checkpoint(blob, cfg, sections);
}

// Copy section values into live parameter tensors and batchnorm stats.
inline void load_into(const std::vector<Section>& sections, std::vector<NamedParam> params,
                      const std::vector<std::pair<std::string, BatchNormLayer*>>& bns = {}) {
    for (const auto& s : sections) {
        bool matched = false;
        for (auto& p : params) {
            if (p.name == s.name) {
                if (p.tensor.size() != s.values.size()) {
                    throw format_error("checkpoint: section " + s.name + " holds " +
                                       std::to_string(s.values.size()) + " values, expected " +
                                       std::to_string(p.tensor.size()));
                }
                p.tensor.values() = s.values;
                matched = true;
                break;
            }
        }
        if (matched) continue;
        for (const auto& [prefix, bn] : bns) {
            if (s.name == prefix + ".running_mean") {
                bn->stats.mean = s.values;
                bn->stats.initialized = true;
                matched = true;
            } else if (s.name == prefix + ".running_var") {
                bn->stats.var = s.values;
                bn->stats.initialized = true;
                matched = true;
            }
        }
    }
}

}  // namespace c2sp
