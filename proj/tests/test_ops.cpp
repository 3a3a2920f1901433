#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "c2sp/ops.hpp"

using namespace c2sp;

namespace {

// Brute-force reference product, triple nested loop.
std::vector<double> matmul_loop(const Tensor& a, const Tensor& b) {
    const std::size_t M = a.dim(0), N = a.dim(1), K = b.dim(1);
    std::vector<double> out(M * K, 0.0);
    for (std::size_t i = 0; i < M; ++i)
        for (std::size_t j = 0; j < K; ++j)
            for (std::size_t k = 0; k < N; ++k)
                out[i * K + j] += a.data()[i * N + k] * b.data()[k * K + j];
    return out;
}

// Brute-force reference cross-correlation, [CxL] input.
std::vector<double> conv_loop(const Tensor& in, const Tensor& ker, std::size_t stride,
                              std::size_t padding) {
    const std::size_t Ci = in.dim(0), L = in.dim(1);
    const std::size_t Co = ker.dim(0), K = ker.dim(2);
    const std::size_t Lo = (L + 2 * padding - K) / stride + 1;
    std::vector<double> out(Co * Lo, 0.0);
    for (std::size_t co = 0; co < Co; ++co)
        for (std::size_t t = 0; t < Lo; ++t)
            for (std::size_t ci = 0; ci < Ci; ++ci)
                for (std::size_t k = 0; k < K; ++k) {
                    const long pos = static_cast<long>(t * stride + k) -
                                     static_cast<long>(padding);
                    if (pos < 0 || pos >= static_cast<long>(L)) continue;
                    out[co * Lo + t] += ker.data()[(co * Ci + ci) * K + k] *
                                        in.data()[ci * L + static_cast<std::size_t>(pos)];
                }
    return out;
}

}  // namespace

TEST_CASE("matmul: identity and zero cases") {
    Tensor I = Tensor::from({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    Tensor b = Tensor::from({3, 2}, {1, 2, 3, 4, 5, 6});
    CHECK(matmul(I, b).values() == b.values());
    Tensor z = Tensor::zeros({3, 3});
    const Tensor zb = matmul(z, b);
    for (double v : zb.values()) CHECK(v == 0.0);
}

TEST_CASE("matmul: loop oracle on random 4x5 * 5x3") {
    Rng rng(7);
    Tensor a = Tensor::randn({4, 5}, rng, 1.0);
    Tensor b = Tensor::randn({5, 3}, rng, 1.0);
    Tensor c = matmul(a, b);
    const auto ref = matmul_loop(a, b);
    for (std::size_t i = 0; i < ref.size(); ++i) CHECK(std::fabs(c.data()[i] - ref[i]) < 1e-12);
    CHECK_THROWS_AS(matmul(a, a), dim_error);
}

TEST_CASE("matmul_nt matches matmul against explicit transpose") {
    Rng rng(9);
    Tensor a = Tensor::randn({6, 4}, rng, 1.0);
    Tensor b = Tensor::randn({3, 4}, rng, 1.0);  // used as b^T
    Tensor bt = Tensor::zeros({4, 3});
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 4; ++j) bt.data()[j * 3 + i] = b.data()[i * 4 + j];
    Tensor x = matmul_nt(a, b);
    Tensor y = matmul(a, bt);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::fabs(x.data()[i] - y.data()[i]) < 1e-12);
}

TEST_CASE("conv1d: kernel [1] sums input channels") {
    Tensor in = Tensor::from({2, 4}, {1, 2, 3, 4, 10, 20, 30, 40});
    Tensor ker = Tensor::from({1, 2, 1}, {1, 1});
    Tensor out = conv1d(in, ker, 1, 0);
    CHECK(out.shape() == std::vector<std::size_t>{1, 4});
    CHECK(out.data()[0] == 11.0);
    CHECK(out.data()[3] == 44.0);
}

TEST_CASE("conv1d: unit impulse is identity") {
    Tensor in = Tensor::from({1, 5}, {3, 1, 4, 1, 5});
    Tensor ker = Tensor::from({1, 1, 1}, {1});
    CHECK(conv1d(in, ker, 1, 0).values() == in.values());
}

TEST_CASE("conv1d: loop oracle on 3x16 input, 4x3x3 kernels, stride 2, padding 1") {
    Rng rng(13);
    Tensor in = Tensor::randn({3, 16}, rng, 1.0);
    Tensor ker = Tensor::randn({4, 3, 3}, rng, 1.0);
    Tensor out = conv1d(in, ker, 2, 1);
    const auto ref = conv_loop(in, ker, 2, 1);
    CHECK(out.size() == ref.size());
    for (std::size_t i = 0; i < ref.size(); ++i) CHECK(std::fabs(out.data()[i] - ref[i]) < 1e-12);
}

TEST_CASE("conv1d: kernel longer than padded input errors") {
    Tensor in = Tensor::zeros({1, 3});
    Tensor ker = Tensor::zeros({1, 1, 7});
    CHECK_THROWS_AS(conv1d(in, ker, 1, 0), dim_error);
}

TEST_CASE("batchnorm1d: constant input maps to ~0 with identity affine") {
    Tensor x = Tensor::full({2, 3, 8}, 5.0);
    Tensor gamma = Tensor::full({3}, 1.0);
    Tensor beta = Tensor::zeros({3});
    RunningStats rs;
    Tensor y = batchnorm1d(x, gamma, beta, 1e-5, true, rs);
    for (std::size_t i = 0; i < y.size(); ++i) CHECK(std::fabs(y.data()[i]) < 1e-6);
}

TEST_CASE("batchnorm1d: gamma = 0 gives beta broadcast") {
    Rng rng(3);
    Tensor x = Tensor::randn({2, 3, 4}, rng, 1.0);
    Tensor gamma = Tensor::zeros({3});
    Tensor beta = Tensor::from({3}, {1, -2, 0.5});
    RunningStats rs;
    Tensor y = batchnorm1d(x, gamma, beta, 1e-5, true, rs);
    for (std::size_t b = 0; b < 2; ++b)
        for (std::size_t c = 0; c < 3; ++c)
            for (std::size_t t = 0; t < 4; ++t)
                CHECK(y.data()[(b * 3 + c) * 4 + t] == beta.data()[c]);
}

TEST_CASE("batchnorm1d: two-pass statistics oracle on random 2x3x8") {
    Rng rng(17);
    Tensor x = Tensor::randn({2, 3, 8}, rng, 2.0);
    Tensor gamma = Tensor::full({3}, 1.0);
    Tensor beta = Tensor::zeros({3});
    RunningStats rs;
    Tensor y = batchnorm1d(x, gamma, beta, 1e-5, true, rs);
    // Per-channel output mean ~ 0, variance ~ 1 (up to eps correction).
    for (std::size_t c = 0; c < 3; ++c) {
        double mean = 0.0;
        for (std::size_t b = 0; b < 2; ++b)
            for (std::size_t t = 0; t < 8; ++t) mean += y.data()[(b * 3 + c) * 8 + t];
        mean /= 16.0;
        CHECK(std::fabs(mean) < 1e-10);
        double var = 0.0;
        for (std::size_t b = 0; b < 2; ++b)
            for (std::size_t t = 0; t < 8; ++t) {
                const double d = y.data()[(b * 3 + c) * 8 + t] - mean;
                var += d * d;
            }
        var /= 16.0;
        CHECK(std::fabs(var - 1.0) < 1e-4);  // eps = 1e-5 shifts variance slightly
    }
    // Running stats vs direct two-pass computation of the batch stats.
    for (std::size_t c = 0; c < 3; ++c) {
        double mean = 0.0;
        for (std::size_t b = 0; b < 2; ++b)
            for (std::size_t t = 0; t < 8; ++t) mean += x.data()[(b * 3 + c) * 8 + t];
        mean /= 16.0;
        double var = 0.0;
        for (std::size_t b = 0; b < 2; ++b)
            for (std::size_t t = 0; t < 8; ++t) {
                const double d = x.data()[(b * 3 + c) * 8 + t] - mean;
                var += d * d;
            }
        var /= 16.0;
        // First training call seeds the running stats with the batch stats.
        CHECK(rs.mean[c] == doctest::Approx(mean).epsilon(1e-12));
        CHECK(rs.var[c] == doctest::Approx(var).epsilon(1e-9));
    }
}

TEST_CASE("batchnorm1d: eval mode without stats is a state error") {
    Tensor x = Tensor::zeros({1, 2, 4});
    Tensor gamma = Tensor::full({2}, 1.0);
    Tensor beta = Tensor::zeros({2});
    RunningStats rs;
    CHECK_THROWS_AS(batchnorm1d(x, gamma, beta, 1e-5, false, rs), state_error);
}

TEST_CASE("relu and leaky_relu") {
    Tensor x = Tensor::from({1, 1, 3}, {-1, 0, 2});
    Tensor r = relu(x);
    CHECK(r.values() == std::vector<double>{0, 0, 2});
    Tensor l = leaky_relu(x, 0.1);
    CHECK(l.data()[0] == doctest::Approx(-0.1));
    CHECK(l.data()[2] == 2.0);
}

TEST_CASE("softmax rows sum to 1 and form a simplex") {
    Rng rng(23);
    Tensor x = Tensor::randn({5, 2}, rng, 3.0);
    Tensor p = softmax(x);
    for (std::size_t i = 0; i < 5; ++i) {
        const double s = p.data()[i * 2] + p.data()[i * 2 + 1];
        CHECK(std::fabs(s - 1.0) < 1e-12);
        CHECK(p.data()[i * 2] >= 0.0);
        CHECK(p.data()[i * 2 + 1] >= 0.0);
    }
}

TEST_CASE("maxpool1d: values and first-index tie rule") {
    Tensor x = Tensor::from({1, 1, 6}, {1, 3, 3, 2, 5, 0});
    Tensor y = maxpool1d(x, 2, 2);
    CHECK(y.values() == std::vector<double>{3, 3, 5});
    // Gradient routes to the first of the tied entries.
    Tensor xg = Tensor::from({1, 1, 2}, {4, 4}, true);
    backward(sum(maxpool1d(xg, 2, 2)));
    CHECK(xg.grad()[0] == 1.0);
    CHECK(xg.grad()[1] == 0.0);
}

TEST_CASE("global_avg_pool equals per-channel time mean") {
    Rng rng(29);
    Tensor x = Tensor::randn({2, 3, 7}, rng, 1.0);
    Tensor y = global_avg_pool(x);
    CHECK(y.shape() == std::vector<std::size_t>{2, 3});
    for (std::size_t b = 0; b < 2; ++b)
        for (std::size_t c = 0; c < 3; ++c) {
            double m = 0.0;
            for (std::size_t t = 0; t < 7; ++t) m += x.data()[(b * 3 + c) * 7 + t];
            CHECK(y.data()[b * 3 + c] == doctest::Approx(m / 7.0).epsilon(1e-14));
        }
}

TEST_CASE("upsample_linear: identity at same length") {
    Rng rng(31);
    Tensor x = Tensor::randn({1, 2, 9}, rng, 1.0);
    CHECK(upsample_linear(x, 9).values() == x.values());
}

TEST_CASE("upsample_linear: ramp doubles with endpoints preserved") {
    Tensor x = Tensor::from({1, 1, 3}, {0, 1, 2});
    Tensor y = upsample_linear(x, 5);
    CHECK(y.data()[0] == 0.0);
    CHECK(y.data()[4] == 2.0);
    for (std::size_t i = 0; i < 5; ++i)
        CHECK(y.data()[i] == doctest::Approx(0.5 * static_cast<double>(i)).epsilon(1e-14));
}

TEST_CASE("cross_entropy: perfect, uniform, and floor behavior") {
    Tensor onehot = Tensor::from({2, 2}, {1, 0, 0, 1});
    Tensor perfect = Tensor::from({2, 2}, {1, 0, 0, 1});
    CHECK(cross_entropy(perfect, onehot).item() <= 1e-11);

    Tensor uniform = Tensor::full({2, 2}, 0.5);
    CHECK(std::fabs(cross_entropy(uniform, onehot).item() - std::log(2.0)) < 1e-12);
}

TEST_CASE("mse: zero on equal inputs, closed form on shift") {
    Rng rng(37);
    Tensor a = Tensor::randn({4, 4}, rng, 1.0);
    CHECK(mse(a, a).item() == 0.0);
    Tensor b = a.clone();
    for (std::size_t i = 0; i < b.size(); ++i) b.data()[i] += 1.0;
    CHECK(mse(a, b).item() == doctest::Approx(1.0).epsilon(1e-14));
    // Loop oracle on a random pair.
    Tensor c = Tensor::randn({4, 4}, rng, 1.0);
    double ref = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a.data()[i] - c.data()[i];
        ref += d * d;
    }
    ref /= static_cast<double>(a.size());
    CHECK(std::fabs(mse(a, c).item() - ref) < 1e-12);
}

TEST_CASE("reshape preserves values and size") {
    Tensor a = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
    Tensor b = reshape(a, {3, 2});
    CHECK(b.values() == a.values());
    CHECK_THROWS_AS(reshape(a, {4, 2}), dim_error);
}
