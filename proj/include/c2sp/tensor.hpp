#pragma once

#include <algorithm>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <utility>
#include <vector>

#include "c2sp/common.hpp"

namespace c2sp {

namespace detail {

struct TensorImpl {
    std::vector<std::size_t> shape;
    std::vector<double> values;
    std::vector<double> grad;  // allocated lazily, same length as values
    bool requires_grad = false;

    std::size_t size() const { return values.size(); }

    double* grad_data() {
        if (grad.size() != values.size()) grad.assign(values.size(), 0.0);
        return grad.data();
    }
};

inline std::size_t shape_product(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t e : shape) n *= e;
    return n;
}

}  // namespace detail

inline std::string shape_str(const std::vector<std::size_t>& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << "x";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

// Dense 64-bit tensor with shared storage. Copies are shallow; the value
// buffer is shared between copies, which is what parameter handles need.
class Tensor {
  public:
    Tensor() = default;

    static Tensor zeros(std::vector<std::size_t> shape, bool requires_grad = false) {
        Tensor t;
        t.impl_ = std::make_shared<detail::TensorImpl>();
        t.impl_->shape = std::move(shape);
        t.impl_->values.assign(detail::shape_product(t.impl_->shape), 0.0);
        t.impl_->requires_grad = requires_grad;
        return t;
    }

    static Tensor full(std::vector<std::size_t> shape, double v, bool requires_grad = false) {
        Tensor t = zeros(std::move(shape), requires_grad);
        std::fill(t.impl_->values.begin(), t.impl_->values.end(), v);
        return t;
    }

    static Tensor from(std::vector<std::size_t> shape, std::vector<double> values,
                       bool requires_grad = false) {
        if (detail::shape_product(shape) != values.size()) {
            throw dim_error("tensor init: " + shape_str(shape) + " does not hold " +
                            std::to_string(values.size()) + " values");
        }
        Tensor t;
        t.impl_ = std::make_shared<detail::TensorImpl>();
        t.impl_->shape = std::move(shape);
        t.impl_->values = std::move(values);
        t.impl_->requires_grad = requires_grad;
        return t;
    }

    static Tensor scalar(double v) { return from({1}, {v}); }

    static Tensor randn(std::vector<std::size_t> shape, Rng& rng, double stddev,
                        bool requires_grad = false) {
        Tensor t = zeros(std::move(shape), requires_grad);
        for (double& x : t.impl_->values) x = rng.normal(0.0, stddev);
        return t;
    }

    bool defined() const { return impl_ != nullptr; }
    const std::vector<std::size_t>& shape() const { return impl_->shape; }
    std::size_t dim(std::size_t i) const { return impl_->shape.at(i); }
    std::size_t ndim() const { return impl_->shape.size(); }
    std::size_t size() const { return impl_->size(); }

    double* data() { return impl_->values.data(); }
    const double* data() const { return impl_->values.data(); }
    std::vector<double>& values() { return impl_->values; }
    const std::vector<double>& values() const { return impl_->values; }

    bool requires_grad() const { return impl_ && impl_->requires_grad; }
    void set_requires_grad(bool rg) { impl_->requires_grad = rg; }

    // Gradient accumulator; allocated (zeroed) on first access.
    double* grad() { return impl_->grad_data(); }
    const std::vector<double>& grad_values() const { return impl_->grad; }
    bool has_grad() const { return impl_ && impl_->grad.size() == impl_->values.size(); }
    void zero_grad() {
        if (impl_) impl_->grad.assign(impl_->values.size(), 0.0);
    }

    double item() const {
        if (size() != 1) throw dim_error("item() on non-scalar tensor " + shape_str(shape()));
        return impl_->values[0];
    }

    // Deep copy with detached storage (no autograd history).
    Tensor clone() const {
        Tensor t;
        t.impl_ = std::make_shared<detail::TensorImpl>();
        t.impl_->shape = impl_->shape;
        t.impl_->values = impl_->values;
        t.impl_->requires_grad = impl_->requires_grad;
        return t;
    }

    std::shared_ptr<detail::TensorImpl> impl() const { return impl_; }

  private:
    std::shared_ptr<detail::TensorImpl> impl_;
};

// Define-by-run tape. One tape per thread; a forward pass appends adjoint
// closures in execution order and backward() replays them in reverse.
class Tape {
  public:
    static Tape& current() {
        thread_local Tape tape;
        return tape;
    }

    void record(std::function<void()> adjoint) { nodes_.push_back(std::move(adjoint)); }
    void clear() { nodes_.clear(); }
    std::size_t size() const { return nodes_.size(); }

    void replay_reverse() {
        for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
    }

  private:
    std::vector<std::function<void()>> nodes_;
};

namespace detail {
inline bool& grad_mode() {
    thread_local bool enabled = true;
    return enabled;
}
}  // namespace detail

inline bool grad_enabled() { return detail::grad_mode(); }

struct NoGradGuard {
    NoGradGuard() : prev_(detail::grad_mode()) { detail::grad_mode() = false; }
    ~NoGradGuard() { detail::grad_mode() = prev_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

  private:
    bool prev_;
};

// Reverse pass from a scalar loss. Consumes (clears) the current tape.
inline void backward(Tensor loss) {
    if (!loss.defined() || loss.size() != 1) {
        throw dim_error("backward() expects a scalar loss");
    }
    if (!loss.requires_grad()) {
        Tape::current().clear();
        return;
    }
    loss.grad()[0] += 1.0;
    Tape::current().replay_reverse();
    Tape::current().clear();
}

}  // namespace c2sp
