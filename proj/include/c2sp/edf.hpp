#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "c2sp/common.hpp"

namespace c2sp {

// Seizure annotation, seconds from recording start.
struct Annotation {
    double onset_s = 0.0;
    double offset_s = 0.0;
};

// Annotated multichannel EEG. `samples[c]` holds channel c in physical units;
// `start_time_s` places the recording on its subject's global timeline.
struct Recording {
    std::string id;
    double start_time_s = 0.0;
    double sample_rate = 256.0;
    std::vector<std::vector<double>> samples;  // [C][T]
    std::vector<Annotation> annotations;

    std::size_t n_channels() const { return samples.size(); }
    std::size_t n_samples() const { return samples.empty() ? 0 : samples[0].size(); }
    double duration_s() const { return static_cast<double>(n_samples()) / sample_rate; }
    double end_time_s() const { return start_time_s + duration_s(); }
};

namespace detail {

// Seconds since 2000-01-01 00:00:00 <-> EDF "dd.mm.yy" + "hh.mm.ss".
inline bool leap_year(int y) { return (y % 4 == 0 && y % 100 != 0) || y % 400 == 0; }

inline int days_in_month(int y, int m) {
    static const int d[12] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
    return m == 2 && leap_year(y) ? 29 : d[m - 1];
}

inline std::int64_t civil_to_epoch_days(int y, int m, int d) {
    std::int64_t days = 0;
    for (int yy = 2000; yy < y; ++yy) days += leap_year(yy) ? 366 : 365;
    for (int mm = 1; mm < m; ++mm) days += days_in_month(y, mm);
    return days + d - 1;
}

inline void epoch_days_to_civil(std::int64_t days, int& y, int& m, int& d) {
    y = 2000;
    while (days >= (leap_year(y) ? 366 : 365)) days -= leap_year(y) ? 366 : 365, ++y;
    m = 1;
    while (days >= days_in_month(y, m)) days -= days_in_month(y, m), ++m;
    d = static_cast<int>(days) + 1;
}

inline std::string fixed_field(const std::string& s, std::size_t width) {
    std::string out = s.substr(0, width);
    out.resize(width, ' ');
    return out;
}

inline long parse_long_field(const std::string& raw, std::size_t offset, const char* what) {
    std::size_t pos = 0;
    long v = 0;
    try {
        v = std::stol(raw, &pos);
    } catch (const std::exception&) {
        throw format_error(std::string("EDF: malformed ") + what + " field at byte offset " +
                           std::to_string(offset));
    }
    while (pos < raw.size() && raw[pos] == ' ') ++pos;
    if (pos != raw.size()) {
        throw format_error(std::string("EDF: malformed ") + what + " field at byte offset " +
                           std::to_string(offset));
    }
    return v;
}

inline double parse_double_field(const std::string& raw, std::size_t offset, const char* what) {
    std::size_t pos = 0;
    double v = 0.0;
    try {
        v = std::stod(raw, &pos);
    } catch (const std::exception&) {
        throw format_error(std::string("EDF: malformed ") + what + " field at byte offset " +
                           std::to_string(offset));
    }
    while (pos < raw.size() && raw[pos] == ' ') ++pos;
    if (pos != raw.size()) {
        throw format_error(std::string("EDF: malformed ") + what + " field at byte offset " +
                           std::to_string(offset));
    }
    return v;
}

}  // namespace detail

// Minimal EDF subset: 16-bit integer samples, one uniform rate across all
// signals, no EDF+ annotation channels.
inline Recording read_edf(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw format_error("EDF: cannot open " + path);
    std::string blob((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

    auto field = [&](std::size_t offset, std::size_t width) {
        if (offset + width > blob.size()) {
            throw format_error("EDF: truncated header at byte offset " + std::to_string(offset));
        }
        return blob.substr(offset, width);
    };

    Recording rec;
    const std::string version = field(0, 8);
    if (version.substr(0, 1) != "0") throw format_error("EDF: bad version field at byte offset 0");
    rec.id = field(8, 80);
    while (!rec.id.empty() && rec.id.back() == ' ') rec.id.pop_back();

    const std::string date = field(168, 8);  // dd.mm.yy
    const std::string time = field(176, 8);  // hh.mm.ss
    if (date[2] != '.' || date[5] != '.') {
        throw format_error("EDF: malformed start date at byte offset 168");
    }
    if (time[2] != '.' || time[5] != '.') {
        throw format_error("EDF: malformed start time at byte offset 176");
    }
    const int dd = static_cast<int>(detail::parse_long_field(date.substr(0, 2), 168, "date"));
    const int mo = static_cast<int>(detail::parse_long_field(date.substr(3, 2), 171, "date"));
    const int yy = static_cast<int>(detail::parse_long_field(date.substr(6, 2), 174, "date"));
    const int hh = static_cast<int>(detail::parse_long_field(time.substr(0, 2), 176, "time"));
    const int mi = static_cast<int>(detail::parse_long_field(time.substr(3, 2), 179, "time"));
    const int ss = static_cast<int>(detail::parse_long_field(time.substr(6, 2), 182, "time"));
    rec.start_time_s =
        static_cast<double>(detail::civil_to_epoch_days(2000 + yy, mo, dd)) * 86400.0 +
        hh * 3600.0 + mi * 60.0 + ss;

    const long n_records = detail::parse_long_field(field(236, 8), 236, "record count");
    const double record_dur = detail::parse_double_field(field(244, 8), 244, "record duration");
    const long n_signals = detail::parse_long_field(field(252, 4), 252, "signal count");
    if (n_records < 0 || record_dur <= 0.0 || n_signals <= 0) {
        throw format_error("EDF: inconsistent header counts at byte offset 236");
    }

    const std::size_t ns = static_cast<std::size_t>(n_signals);
    const std::size_t sig_base = 256;
    // Per-signal field blocks: label 16, transducer 80, dim 8, phys min 8,
    // phys max 8, dig min 8, dig max 8, prefilter 80, samples/record 8.
    const std::size_t off_pmin = sig_base + ns * (16 + 80 + 8);
    const std::size_t off_pmax = off_pmin + ns * 8;
    const std::size_t off_dmin = off_pmax + ns * 8;
    const std::size_t off_dmax = off_dmin + ns * 8;
    const std::size_t off_spr = off_dmax + ns * 8 + ns * 80;
    const std::size_t data_off = sig_base + ns * 256;

    std::vector<double> pmin(ns), pmax(ns), dmin(ns), dmax(ns);
    std::vector<std::size_t> spr(ns);
    for (std::size_t s = 0; s < ns; ++s) {
        pmin[s] = detail::parse_double_field(field(off_pmin + s * 8, 8), off_pmin + s * 8,
                                             "physical min");
        pmax[s] = detail::parse_double_field(field(off_pmax + s * 8, 8), off_pmax + s * 8,
                                             "physical max");
        dmin[s] = detail::parse_double_field(field(off_dmin + s * 8, 8), off_dmin + s * 8,
                                             "digital min");
        dmax[s] = detail::parse_double_field(field(off_dmax + s * 8, 8), off_dmax + s * 8,
                                             "digital max");
        const long n = detail::parse_long_field(field(off_spr + s * 8, 8), off_spr + s * 8,
                                                "samples per record");
        if (n <= 0) throw format_error("EDF: bad samples-per-record at byte offset " +
                                       std::to_string(off_spr + s * 8));
        spr[s] = static_cast<std::size_t>(n);
        if (dmax[s] == dmin[s]) {
            throw format_error("EDF: degenerate digital range at byte offset " +
                               std::to_string(off_dmin + s * 8));
        }
    }
    for (std::size_t s = 1; s < ns; ++s) {
        if (spr[s] != spr[0]) {
            throw format_error("EDF: unsupported file, sample rate differs across channels");
        }
    }
    rec.sample_rate = static_cast<double>(spr[0]) / record_dur;

    const std::size_t total = static_cast<std::size_t>(n_records) * spr[0];
    const std::size_t record_bytes = [&] {
        std::size_t b = 0;
        for (std::size_t s = 0; s < ns; ++s) b += spr[s] * 2;
        return b;
    }();
    if (blob.size() < data_off + static_cast<std::size_t>(n_records) * record_bytes) {
        throw format_error("EDF: truncated sample data at byte offset " +
                           std::to_string(blob.size()));
    }

    rec.samples.assign(ns, std::vector<double>(total, 0.0));
    const auto* bytes = reinterpret_cast<const unsigned char*>(blob.data());
    for (std::size_t r = 0; r < static_cast<std::size_t>(n_records); ++r) {
        std::size_t off = data_off + r * record_bytes;
        for (std::size_t s = 0; s < ns; ++s) {
            const double scale = (pmax[s] - pmin[s]) / (dmax[s] - dmin[s]);
            for (std::size_t i = 0; i < spr[s]; ++i) {
                const std::int16_t dig = static_cast<std::int16_t>(
                    static_cast<std::uint16_t>(bytes[off]) |
                    (static_cast<std::uint16_t>(bytes[off + 1]) << 8));
                off += 2;
                rec.samples[s][r * spr[s] + i] = (dig - dmin[s]) * scale + pmin[s];
            }
        }
    }
    return rec;
}

// EDF writer. Physical samples are quantized to the 16-bit digital range, so
// a write/read round trip is exact at 16-bit resolution (and bit-exact on the
// digital values themselves).
inline void write_edf(const Recording& rec, const std::string& path, double phys_min = 0.0,
                      double phys_max = 0.0) {
    const std::size_t ns = rec.n_channels();
    if (ns == 0 || rec.n_samples() == 0) throw config_error("write_edf: empty recording");
    const std::size_t spr = static_cast<std::size_t>(rec.sample_rate);
    if (std::fabs(rec.sample_rate - static_cast<double>(spr)) > 1e-9) {
        throw config_error("write_edf: integer sample rates only");
    }
    if (rec.n_samples() % spr != 0) {
        throw config_error("write_edf: sample count must be a whole number of 1 s records");
    }
    const std::size_t n_records = rec.n_samples() / spr;

    if (phys_min == 0.0 && phys_max == 0.0) {
        double mx = 1e-6;
        for (const auto& ch : rec.samples)
            for (double v : ch) mx = std::max(mx, std::fabs(v));
        phys_max = mx;
        phys_min = -mx;
    }
    const double dmin = -32768.0, dmax = 32767.0;
    const double inv_scale = (dmax - dmin) / (phys_max - phys_min);

    const std::int64_t start = static_cast<std::int64_t>(std::llround(rec.start_time_s));
    const std::int64_t day = start / 86400, tod = start % 86400;
    int y, m, d;
    detail::epoch_days_to_civil(day, y, m, d);
    char date[32], time[16];
    std::snprintf(date, sizeof date, "%02d.%02d.%02d", d % 100, m % 100, y % 100);
    std::snprintf(time, sizeof time, "%02d.%02d.%02d", static_cast<int>(tod / 3600),
                  static_cast<int>((tod / 60) % 60), static_cast<int>(tod % 60));

    std::string out;
    auto f = [&](const std::string& s, std::size_t w) { out += detail::fixed_field(s, w); };
    f("0", 8);
    f(rec.id, 80);
    f("c2sp synthetic eeg", 80);
    f(date, 8);
    f(time, 8);
    f(std::to_string(256 + ns * 256), 8);
    f("", 44);
    f(std::to_string(n_records), 8);
    f("1", 8);
    f(std::to_string(ns), 4);
    for (std::size_t s = 0; s < ns; ++s) f("EEG CH" + std::to_string(s), 16);
    for (std::size_t s = 0; s < ns; ++s) f("synthetic", 80);
    for (std::size_t s = 0; s < ns; ++s) f("uV", 8);
    char buf[32];
    for (std::size_t s = 0; s < ns; ++s) {
        std::snprintf(buf, sizeof buf, "%-8.6g", phys_min);
        f(std::string(buf).substr(0, 8), 8);
    }
    for (std::size_t s = 0; s < ns; ++s) {
        std::snprintf(buf, sizeof buf, "%-8.6g", phys_max);
        f(std::string(buf).substr(0, 8), 8);
    }
    for (std::size_t s = 0; s < ns; ++s) f("-32768", 8);
    for (std::size_t s = 0; s < ns; ++s) f("32767", 8);
    for (std::size_t s = 0; s < ns; ++s) f("none", 80);
    for (std::size_t s = 0; s < ns; ++s) f(std::to_string(spr), 8);
    for (std::size_t s = 0; s < ns; ++s) f("", 32);

    out.reserve(out.size() + n_records * ns * spr * 2);
    for (std::size_t r = 0; r < n_records; ++r)
        for (std::size_t s = 0; s < ns; ++s)
            for (std::size_t i = 0; i < spr; ++i) {
                const double v = rec.samples[s][r * spr + i];
                double dig = std::round((v - phys_min) * inv_scale + dmin);
                dig = std::min(std::max(dig, dmin), dmax);
                const std::int16_t q = static_cast<std::int16_t>(dig);
                out.push_back(static_cast<char>(q & 0xff));
                out.push_back(static_cast<char>((q >> 8) & 0xff));
            }

    std::ofstream file(path, std::ios::binary);
    if (!file) throw format_error("write_edf: cannot open " + path);
    file.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!file) throw format_error("write_edf: write failed for " + path);
}

}  // namespace c2sp
