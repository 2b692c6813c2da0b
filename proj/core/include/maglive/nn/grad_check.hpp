#pragma once

#include "maglive/nn/tensor.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace maglive::nn {

struct GradCheckOptions {
    double step = 1e-5;
    double abs_floor = 1e-8;
    // 0 checks every element; otherwise at most this many seeded-random
    // elements per parameter.
    std::size_t max_elements_per_param = 0;
    std::uint64_t seed = 0;
    // Times the step may shrink tenfold when the difference interval crosses
    // a non-differentiable point. 0 keeps the plain central difference.
    std::size_t kink_retries = 0;
};

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::string worst_param;
    std::size_t worst_index = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
    std::size_t elements_checked = 0;
    std::size_t kinks_narrowed = 0;  // elements re-measured with a smaller step
};

// Compares reverse-mode gradients against central differences. `forward` must
// rebuild the graph from the current parameter values and return a scalar.
// Relative error is |a - n| / max(|a|, |n|, abs_floor).
GradCheckResult grad_check(const std::function<Tensor()>& forward, const std::vector<Parameter*>& params,
                           const GradCheckOptions& options = {});

}  // namespace maglive::nn
