#pragma once

#include <cstdio>
#include <cstring>
#include <fstream>
#include <string>

#include "c2sp/ops.hpp"
#include "c2sp/tensor.hpp"

namespace c2sp {

// Exact rational compression ratio, parsed from strings like "1/8".
struct Ratio {
    std::uint64_t num = 1;
    std::uint64_t den = 1;

    double value() const { return static_cast<double>(num) / static_cast<double>(den); }

    static Ratio parse(const std::string& s) {
        const auto slash = s.find('/');
        if (slash == std::string::npos) {
            throw config_error("ratio must be a fraction like \"1/4\", got \"" + s + "\"");
        }
        Ratio r;
        try {
            r.num = std::stoull(s.substr(0, slash));
            r.den = std::stoull(s.substr(slash + 1));
        } catch (const std::exception&) {
            throw config_error("ratio \"" + s + "\" is not a valid fraction");
        }
        if (r.num == 0 || r.den == 0) throw config_error("ratio terms must be positive");
        return r;
    }

    std::string str() const { return std::to_string(num) + "/" + std::to_string(den); }

    bool operator==(const Ratio& o) const { return num == o.num && den == o.den; }

    // The ratios the reference protocol sweeps; others are accepted but
    // flagged experimental by callers.
    bool is_supported() const {
        return num == 1 && (den == 2 || den == 4 || den == 8 || den == 16);
    }
};

inline std::size_t compressed_len(Ratio r, std::size_t n_in) {
    // M = round(r * N), exact rational rounding (half up).
    return static_cast<std::size_t>((r.num * n_in + r.den / 2) / r.den);
}

// Straight-through binarizer: forward thresholds at zero, backward passes the
// gradient unchanged where |latent| <= 1 and blocks it elsewhere.
inline Tensor binarize_ste(const Tensor& latent) {
    Tensor out = Tensor::zeros(latent.shape());
    const double* pl = latent.data();
    double* po = out.data();
    for (std::size_t i = 0; i < latent.size(); ++i) po[i] = pl[i] > 0.0 ? 1.0 : 0.0;
    if (grad_enabled() && latent.requires_grad()) {
        out.set_requires_grad(true);
        auto li = latent.impl(), oi = out.impl();
        Tape::current().record([li, oi] {
            const double* g = oi->grad_data();
            const double* pl = li->values.data();
            double* dl = li->grad_data();
            for (std::size_t i = 0; i < li->size(); ++i) {
                if (std::fabs(pl[i]) <= 1.0) dl[i] += g[i];
            }
        });
    }
    return out;
}

enum class MatrixMode : std::uint8_t { Float = 0, Binary = 1 };

// The learnable sensing operator W, shared across all signal channels.
// Float mode: `weights` is the matrix itself. Binary mode: `weights` is the
// latent real-valued carrier and the effective matrix is binarize(weights).
struct CompressionMatrix {
    std::size_t n_in = 0;   // N, samples per window per channel
    std::size_t n_out = 0;  // M, compressed length
    MatrixMode mode = MatrixMode::Float;
    Tensor weights;  // [MxN]

    static CompressionMatrix create(Ratio r, std::size_t n_in, MatrixMode mode, Rng& rng) {
        const std::size_t m = compressed_len(r, n_in);
        if (m == 0 || m >= n_in) {
            throw config_error("compression ratio " + r.str() + " with N=" +
                               std::to_string(n_in) + " gives M=" + std::to_string(m));
        }
        CompressionMatrix cm;
        cm.n_in = n_in;
        cm.n_out = m;
        cm.mode = mode;
        // Locality-preserving initialization: row i starts as the average of
        // the input block [i*N/M, (i+1)*N/M) plus small noise for symmetry
        // breaking. Keeping measurements temporally ordered means the
        // convolutional decoder begins from an interpolation problem rather
        // than a dense inversion, which makes joint training converge far
        // faster than a dense random projection would. Binary mode gets the
        // sign-equivalent latent carrier (positive inside the block), so the
        // effective matrix starts as the same block selector.
        cm.weights = Tensor::randn({m, n_in}, rng,
                                   0.02 / std::sqrt(static_cast<double>(n_in)), true);
        double* w = cm.weights.data();
        for (std::size_t i = 0; i < m; ++i) {
            const std::size_t j0 = i * n_in / m, j1 = (i + 1) * n_in / m;
            if (mode == MatrixMode::Binary) {
                for (std::size_t j = 0; j < n_in; ++j)
                    w[i * n_in + j] += j >= j0 && j < j1 ? 0.5 : -0.5;
            } else {
                for (std::size_t j = j0; j < j1; ++j)
                    w[i * n_in + j] += 1.0 / static_cast<double>(j1 - j0);
            }
        }
        return cm;
    }

    // Matrix applied in every forward pass. Differentiable w.r.t. weights.
    Tensor effective() const {
        return mode == MatrixMode::Binary ? binarize_ste(weights) : weights;
    }
};

// z = W x, per channel. x is [NxC] column-per-channel.
inline Tensor compress(const CompressionMatrix& m, const Tensor& x) {
    if (x.ndim() != 2 || x.dim(0) != m.n_in) {
        throw dim_error("compress: expected " + std::to_string(m.n_in) + " rows, got " +
                        shape_str(x.shape()));
    }
    return matmul(m.effective(), x);
}

// Batched layout used in training: x [BxCxN] -> z [BxCxM]. Each (b,c) row is
// one channel window; z[b,c,:] = W x[b,c,:].
inline Tensor compress_batch(const CompressionMatrix& m, const Tensor& x) {
    if (x.ndim() != 3 || x.dim(2) != m.n_in) {
        throw dim_error("compress_batch: expected [BxCx" + std::to_string(m.n_in) + "], got " +
                        shape_str(x.shape()));
    }
    const std::size_t B = x.dim(0), C = x.dim(1);
    Tensor flat = reshape(x, {B * C, m.n_in});
    Tensor z = matmul_nt(flat, m.effective());
    return reshape(z, {B, C, m.n_out});
}

// ---------------------------------------------------------------------------
// matrix file: magic "C2SP" | version u8=1 | mode u8 | N u32 LE | M u32 LE |
// payload. Float payload: 64-bit LE reals row-major. Binary payload: packed
// bits, 8 entries per byte LSB-first, row-major, zero-padded final byte.
// ---------------------------------------------------------------------------

namespace detail {

inline void put_u32_le(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline std::uint32_t get_u32_le(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline void put_f64_le(std::string& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

inline double get_f64_le(const unsigned char* p) {
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

}  // namespace detail

inline std::string encode_matrix(const CompressionMatrix& m) {
    std::string out = "C2SP";
    out.push_back(1);  // format version
    out.push_back(static_cast<char>(m.mode));
    detail::put_u32_le(out, static_cast<std::uint32_t>(m.n_in));
    detail::put_u32_le(out, static_cast<std::uint32_t>(m.n_out));
    NoGradGuard ng;
    const Tensor eff = m.effective();
    const double* p = eff.data();
    const std::size_t count = m.n_out * m.n_in;
    if (m.mode == MatrixMode::Float) {
        for (std::size_t i = 0; i < count; ++i) detail::put_f64_le(out, p[i]);
    } else {
        unsigned char byte = 0;
        for (std::size_t i = 0; i < count; ++i) {
            if (p[i] != 0.0) byte |= static_cast<unsigned char>(1u << (i % 8));
            if (i % 8 == 7) {
                out.push_back(static_cast<char>(byte));
                byte = 0;
            }
        }
        if (count % 8 != 0) out.push_back(static_cast<char>(byte));
    }
    return out;
}

inline void export_matrix(const CompressionMatrix& m, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw format_error("export_matrix: cannot open " + path);
    const std::string blob = encode_matrix(m);
    f.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    if (!f) throw format_error("export_matrix: write failed for " + path);
}

inline CompressionMatrix decode_matrix(const std::string& blob) {
    auto fail = [](std::size_t offset, const std::string& what) {
        throw format_error("matrix file: " + what + " at byte offset " + std::to_string(offset));
    };
    const auto* p = reinterpret_cast<const unsigned char*>(blob.data());
    if (blob.size() < 14) fail(blob.size(), "truncated header");
    if (std::memcmp(p, "C2SP", 4) != 0) fail(0, "bad magic");
    if (p[4] != 1) fail(4, "unsupported version " + std::to_string(p[4]));
    if (p[5] > 1) fail(5, "unknown mode " + std::to_string(p[5]));
    CompressionMatrix m;
    m.mode = static_cast<MatrixMode>(p[5]);
    m.n_in = detail::get_u32_le(p + 6);
    m.n_out = detail::get_u32_le(p + 10);
    const std::size_t count = m.n_out * m.n_in;
    const std::size_t payload =
        m.mode == MatrixMode::Float ? count * 8 : (count + 7) / 8;
    if (blob.size() != 14 + payload) fail(blob.size(), "payload size mismatch");
    std::vector<double> vals(count, 0.0);
    if (m.mode == MatrixMode::Float) {
        for (std::size_t i = 0; i < count; ++i) vals[i] = detail::get_f64_le(p + 14 + i * 8);
    } else {
        for (std::size_t i = 0; i < count; ++i) {
            const unsigned char byte = p[14 + i / 8];
            // Imported binary matrices carry the effective {0,1} entries; the
            // latent carrier is a training-time object and is not exported.
            vals[i] = (byte >> (i % 8)) & 1u ? 1.0 : 0.0;
        }
    }
    m.weights = Tensor::from({m.n_out, m.n_in}, std::move(vals));
    return m;
}

inline CompressionMatrix import_matrix(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw format_error("import_matrix: cannot open " + path);
    std::string blob((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return decode_matrix(blob);
}

}  // namespace c2sp
