#pragma once

#include <string>
#include <vector>

#include "c2sp/ops.hpp"

namespace c2sp {

// Named parameter handle; checkpoints store parameters section-by-section
// under these names.
struct NamedParam {
    std::string name;
    Tensor tensor;
};

struct Conv1dLayer {
    Tensor weight;  // [CoutxCinxK]
    Tensor bias;    // optional
    std::size_t stride = 1;
    std::size_t padding = 0;

    static Conv1dLayer create(std::size_t c_in, std::size_t c_out, std::size_t k,
                              std::size_t stride, std::size_t padding, bool with_bias, Rng& rng) {
        Conv1dLayer l;
        l.stride = stride;
        l.padding = padding;
        // He fan-in init.
        const double stddev = std::sqrt(2.0 / static_cast<double>(c_in * k));
        l.weight = Tensor::randn({c_out, c_in, k}, rng, stddev, true);
        if (with_bias) l.bias = Tensor::zeros({c_out}, true);
        return l;
    }

    Tensor forward(const Tensor& x) const { return conv1d(x, weight, stride, padding, bias); }

    void collect(const std::string& prefix, std::vector<NamedParam>& out) const {
        out.push_back({prefix + ".weight", weight});
        if (bias.defined()) out.push_back({prefix + ".bias", bias});
    }
};

struct BatchNormLayer {
    Tensor gamma;
    Tensor beta;
    RunningStats stats;
    double eps = 1e-5;
    double momentum = 0.1;

    static BatchNormLayer create(std::size_t channels) {
        BatchNormLayer l;
        l.gamma = Tensor::full({channels}, 1.0, true);
        l.beta = Tensor::zeros({channels}, true);
        return l;
    }

    Tensor forward(const Tensor& x, bool training) {
        return batchnorm1d(x, gamma, beta, eps, training, stats, momentum);
    }

    void collect(const std::string& prefix, std::vector<NamedParam>& out) {
        out.push_back({prefix + ".gamma", gamma});
        out.push_back({prefix + ".beta", beta});
    }

    // Running statistics travel with checkpoints but are not optimized.
    void collect_state(const std::string& prefix, std::vector<NamedParam>& out) const {
        if (!stats.initialized) return;
        out.push_back({prefix + ".running_mean", Tensor::from({stats.mean.size()}, stats.mean)});
        out.push_back({prefix + ".running_var", Tensor::from({stats.var.size()}, stats.var)});
    }
};

struct LinearLayer {
    Tensor weight;  // [outxin]
    Tensor bias;    // [out]

    static LinearLayer create(std::size_t in, std::size_t out, Rng& rng) {
        LinearLayer l;
        const double stddev = std::sqrt(2.0 / static_cast<double>(in));
        l.weight = Tensor::randn({out, in}, rng, stddev, true);
        l.bias = Tensor::zeros({out}, true);
        return l;
    }

    Tensor forward(const Tensor& x) const { return linear(x, weight, bias); }

    void collect(const std::string& prefix, std::vector<NamedParam>& out) const {
        out.push_back({prefix + ".weight", weight});
        out.push_back({prefix + ".bias", bias});
    }
};

}  // namespace c2sp
