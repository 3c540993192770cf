#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "n3l/tensor.hpp"

namespace n3l::testing {

// Precision targets for the active scalar type. In float32 builds finite
// differences are only a coarse sanity check.
#ifdef N3L_FLOAT32
inline constexpr double grad_rel_tol = 5e-2;
inline constexpr double grad_step = 1e-3;
inline constexpr double grad_abs_floor = 2e-3;
inline constexpr double value_tol = 1e-5;
#else
inline constexpr double grad_rel_tol = 1e-4;
inline constexpr double grad_step = 1e-5;
inline constexpr double grad_abs_floor = 1e-8;
inline constexpr double value_tol = 1e-12;
#endif

struct GradCheckResult {
    bool ok = true;
    std::size_t checked = 0;
    double worst_rel = 0;
    std::string detail;
};

// Compares the tape gradient of `loss()` w.r.t. every element of `inputs`
// against central finite differences. An element passes when the relative
// error is within `rel_tol` or the absolute error is below `abs_floor`.
// With `sample` > 0 only that many elements, drawn uniformly across all inputs, are checked.
inline GradCheckResult grad_check(const std::function<nn::Tensor()>& loss, std::vector<nn::Tensor> inputs,
                                  double rel_tol = grad_rel_tol, double h = grad_step, double abs_floor = grad_abs_floor,
                                  std::size_t sample = 0,
                                  std::uint64_t sample_seed = 0) {
    GradCheckResult result;
    for (auto& t : inputs) t.zero_grad();
    loss().backward();
    std::vector<std::vector<double>> analytic;
    for (auto& t : inputs) analytic.emplace_back(t.grad().begin(), t.grad().end());

    std::vector<std::pair<std::size_t, std::size_t>> coords;
    for (std::size_t p = 0; p < inputs.size(); ++p)
        for (std::size_t i = 0; i < inputs[p].data().size(); ++i) coords.emplace_back(p, i);
    if (sample > 0 && sample < coords.size()) {
        std::mt19937_64 rng(sample_seed);
        std::shuffle(coords.begin(), coords.end(), rng);
        coords.resize(sample);
    }

    nn::NoGradGuard no_grad;
    for (const auto& [p, i] : coords) {
        auto data = inputs[p].data();
        const real saved = data[i];
        data[i] = saved + static_cast<real>(h);
        const double up = loss().item();
        data[i] = saved - static_cast<real>(h);
        const double down = loss().item();
        data[i] = saved;
        const double numeric = (up - down) / (2 * h);
        const double a = analytic[p][i];
        const double err = std::abs(a - numeric);
        const double scale = std::max(std::abs(a), std::abs(numeric));
        ++result.checked;
        if (err <= abs_floor) continue;
        const double rel = err / scale;
        result.worst_rel = std::max(result.worst_rel, rel);
        if (rel > rel_tol && result.ok) {
            result.ok = false;
            result.detail = "input " + std::to_string(p) + " element " + std::to_string(i) + ": analytic " +
                            std::to_string(a) + " vs numeric " + std::to_string(numeric);
        }
    }
    return result;
}

}  // namespace n3l::testing
