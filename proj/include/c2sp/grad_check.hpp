#pragma once

#include <cmath>
#include <functional>

#include "c2sp/tensor.hpp"

namespace c2sp {

// Finite-difference oracle. f must be scalar-valued and smooth at `point`
// (nudge inputs off relu kinks before calling). Returns the max over
// coordinates of |analytic - numeric| / max(1, |analytic|, |numeric|).
//
// When max_coords > 0 and the tensor is larger, a seeded subsample of
// coordinates is checked instead of all of them.
inline double grad_check(const std::function<Tensor(const Tensor&)>& f, Tensor point, double h,
                         std::size_t max_coords = 0, std::uint64_t subsample_seed = 0) {
    point.set_requires_grad(true);
    point.zero_grad();
    Tape::current().clear();
    Tensor loss = f(point);
    backward(loss);
    std::vector<double> analytic(point.grad(), point.grad() + point.size());

    std::vector<std::size_t> coords;
    if (max_coords > 0 && point.size() > max_coords) {
        Rng rng(derive_seed(subsample_seed, 0x6c));
        for (std::size_t i = 0; i < max_coords; ++i)
            coords.push_back(static_cast<std::size_t>(rng.below(point.size())));
    } else {
        coords.resize(point.size());
        for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
    }

    double worst = 0.0;
    {
        NoGradGuard ng;
        double* p = point.data();
        for (std::size_t i : coords) {
            const double saved = p[i];
            p[i] = saved + h;
            const double fp = f(point).item();
            p[i] = saved - h;
            const double fm = f(point).item();
            p[i] = saved;
            const double numeric = (fp - fm) / (2.0 * h);
            const double denom = std::max({1.0, std::fabs(analytic[i]), std::fabs(numeric)});
            worst = std::max(worst, std::fabs(analytic[i] - numeric) / denom);
        }
    }
    return worst;
}

}  // namespace c2sp
