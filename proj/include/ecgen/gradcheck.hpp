#pragma once

// Central finite-difference gradient verification. The function under test is
// re-evaluated from scratch for every perturbed coordinate, so it must be
// deterministic (seed any internal sampling per call).

#include <functional>
#include <span>
#include <vector>

#include "ecgen/tensor.hpp"

namespace ecgen {

// f() reads the current values of `inputs` (leaf tensors) and returns a scalar.
// Returns max over all coordinates of |analytic - central| / max(1, |analytic|).
// eps must lie in [1e-7, 1e-3].
inline double grad_check(const std::function<Tensor()>& f, std::span<Tensor> inputs, double eps) {
    if (eps < 1e-7 || eps > 1e-3)
        throw ContractError(strf("grad_check: eps %g outside [1e-7, 1e-3]", eps));
    for (auto& t : inputs) {
        if (!t.requires_grad())
            throw ContractError("grad_check: all inputs must require gradients");
        t.zero_grad();
    }
    Tensor loss = f();
    if (loss.size() != 1)
        throw ContractError("grad_check: function must be scalar-valued");
    if (!loss.all_finite()) throw NumericError("grad_check: non-finite function value");
    backward(loss);

    std::vector<std::vector<double>> analytic;
    for (auto& t : inputs) analytic.emplace_back(t.grad().begin(), t.grad().end());

    double worst = 0;
    for (size_t ti = 0; ti < inputs.size(); ++ti) {
        auto x = inputs[ti].mutable_data();
        for (size_t i = 0; i < x.size(); ++i) {
            double orig = x[i];
            x[i] = orig + eps;
            double fp = f().item();
            x[i] = orig - eps;
            double fm = f().item();
            x[i] = orig;
            if (!std::isfinite(fp) || !std::isfinite(fm))
                throw NumericError(strf("grad_check: non-finite value at input %zu coordinate %zu", ti, i));
            double numeric = (fp - fm) / (2 * eps);
            double a = analytic[ti][i];
            double rel = std::fabs(a - numeric) / std::max(1.0, std::fabs(a));
            worst = std::max(worst, rel);
        }
    }
    return worst;
}

}  // namespace ecgen
