#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "c2sp/layers.hpp"

namespace c2sp {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Standard Adam with bias correction over a fixed list of named parameters.
class Adam {
  public:
    Adam() = default;

    Adam(std::vector<NamedParam> params, AdamConfig cfg)
        : params_(std::move(params)), cfg_(cfg) {
        m_.resize(params_.size());
        v_.resize(params_.size());
        for (std::size_t i = 0; i < params_.size(); ++i) {
            m_[i].assign(params_[i].tensor.size(), 0.0);
            v_[i].assign(params_[i].tensor.size(), 0.0);
        }
    }

    std::size_t step_count() const { return step_; }
    const AdamConfig& config() const { return cfg_; }
    std::vector<NamedParam>& params() { return params_; }

    void zero_grad() {
        for (auto& p : params_) p.tensor.zero_grad();
    }

    // One update from the gradients currently stored on the parameters.
    // Non-finite gradients abort with a diagnostic naming the parameter.
    void step() {
        ++step_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
        for (std::size_t i = 0; i < params_.size(); ++i) {
            Tensor& t = params_[i].tensor;
            const double* g = t.grad();
            double* x = t.data();
            double* m = m_[i].data();
            double* v = v_[i].data();
            for (std::size_t j = 0; j < t.size(); ++j) {
                if (!std::isfinite(g[j])) {
                    throw numeric_error("adam: non-finite gradient at step " +
                                        std::to_string(step_) + ", parameter " +
                                        params_[i].name + "[" + std::to_string(j) +
                                        "], value " + std::to_string(g[j]));
                }
                m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g[j];
                v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g[j] * g[j];
                const double mhat = m[j] / bc1;
                const double vhat = v[j] / bc2;
                x[j] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
            }
        }
    }

    // Optimizer state for mid-training checkpoints.
    std::vector<NamedParam> state() const {
        std::vector<NamedParam> out;
        for (std::size_t i = 0; i < params_.size(); ++i) {
            out.push_back({"adam.m." + params_[i].name,
                           Tensor::from({m_[i].size()}, m_[i])});
            out.push_back({"adam.v." + params_[i].name,
                           Tensor::from({v_[i].size()}, v_[i])});
        }
        out.push_back({"adam.step", Tensor::scalar(static_cast<double>(step_))});
        return out;
    }

    void load_state(const std::vector<NamedParam>& state) {
        for (const auto& s : state) {
            if (s.name == "adam.step") {
                step_ = static_cast<std::size_t>(s.tensor.item());
                continue;
            }
            for (std::size_t i = 0; i < params_.size(); ++i) {
                if (s.name == "adam.m." + params_[i].name) {
                    m_[i] = s.tensor.values();
                } else if (s.name == "adam.v." + params_[i].name) {
                    v_[i] = s.tensor.values();
                }
            }
        }
    }

  private:
    std::vector<NamedParam> params_;
    AdamConfig cfg_;
    std::vector<std::vector<double>> m_, v_;
    std::size_t step_ = 0;
};

}  // namespace c2sp
