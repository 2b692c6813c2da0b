#include "maglive/nn/grad_check.hpp"

#include "maglive/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

namespace maglive::nn {

GradCheckResult grad_check(const std::function<Tensor()>& forward, const std::vector<Parameter*>& params,
                           const GradCheckOptions& options) {
    GradCheckResult result;
    for (auto* p : params) p->tensor.zero_grad();
    const Tensor out = forward();
    if (out.size() != 1) throw UsageError("grad_check needs a scalar output, got " + to_string(out.shape()));
    out.backward();
    const double loss = out.item();

    std::mt19937_64 rng(options.seed);
    for (auto* p : params) {
        const std::vector<double> analytic = p->tensor.grad().empty()
                                                 ? std::vector<double>(p->count(), 0.0)
                                                 : std::vector<double>(p->tensor.grad().begin(), p->tensor.grad().end());
        std::vector<std::size_t> indices(p->count());
        std::iota(indices.begin(), indices.end(), std::size_t{0});
        if (options.max_elements_per_param && indices.size() > options.max_elements_per_param) {
            std::shuffle(indices.begin(), indices.end(), rng);
            indices.resize(options.max_elements_per_param);
            std::sort(indices.begin(), indices.end());
        }
        auto values = p->tensor.mutable_values();
        for (std::size_t i : indices) {
            const double original = values[i];
            auto central = [&](double h) {
                values[i] = original + h;
                const double plus = forward().item();
                values[i] = original - h;
                const double minus = forward().item();
                values[i] = original;
                return (plus - minus) / (2.0 * h);
            };
            double step = options.step;
            double numeric = central(step);
            for (std::size_t attempt = 0; attempt < options.kink_retries; ++attempt) {
                // On a smooth stretch halving the step moves the estimate by
                // O(step^2). A larger shift means a ReLU or max-pool switch lies
                // inside the interval, so retry on a narrower one.
                const double half = central(0.5 * step);
                const double scale = std::max(std::abs(numeric), std::abs(half));
                const double roundoff = 8.0 * std::numeric_limits<double>::epsilon() * std::abs(loss) / step;
                if (std::abs(numeric - half) <= std::max(1e-5 * scale, roundoff)) break;
                if (attempt == 0) ++result.kinks_narrowed;
                step *= 0.1;
                numeric = central(step);
            }

            const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), options.abs_floor});
            const double rel = std::abs(analytic[i] - numeric) / denom;
            ++result.elements_checked;
            if (rel > result.max_rel_error) {
                result.max_rel_error = rel;
                result.worst_param = p->name;
                result.worst_index = i;
                result.worst_analytic = analytic[i];
                result.worst_numeric = numeric;
            }
        }
    }
    return result;
}

}  // namespace maglive::nn
