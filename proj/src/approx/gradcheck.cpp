#include "gpae/approx/gradcheck.hpp"

#include <cmath>

namespace gpae::approx {

GradCheckReport grad_check(std::vector<ParamBlock> blocks, const std::function<double()>& loss,
                           const std::function<void()>& compute_grads, double step) {
    GradCheckReport report;
    report.step = step;
    compute_grads();
    // Snapshot the analytic gradients before finite differences mutate state.
    std::vector<Vec> analytic;
    analytic.reserve(blocks.size());
    for (const auto& block : blocks) analytic.push_back(*block.grad);

    for (std::size_t k = 0; k < blocks.size(); ++k) {
        GradCheckBlockResult result;
        result.name = blocks[k].name;
        Vec& params = *blocks[k].value;
        for (std::size_t idx = 0; idx < params.size(); ++idx) {
            const double saved = params[idx];
            params[idx] = saved + step;
            const double up = loss();
            params[idx] = saved - step;
            const double down = loss();
            params[idx] = saved;
            const double fd = (up - down) / (2.0 * step);
            const double ga = analytic[k][idx];
            const double rel = std::abs(ga - fd) / std::max(1e-8, std::abs(ga) + std::abs(fd));
            result.max_rel_error = std::max(result.max_rel_error, rel);
        }
        report.blocks.push_back(result);
    }
    return report;
}

}  // namespace gpae::approx
