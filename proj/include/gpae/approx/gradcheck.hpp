#pragma once

#include <functional>
#include <string>
#include <vector>

#include "gpae/approx/nets.hpp"

namespace gpae::approx {

struct GradCheckBlockResult {
    std::string name;
    double max_rel_error = 0.0;
};

struct GradCheckReport {
    double step = 0.0;
    std::vector<GradCheckBlockResult> blocks;
    int excluded_points = 0;  // boundary contexts that were flagged and skipped
    double max_rel_error() const {
        double m = 0.0;
        for (const auto& b : blocks) m = std::max(m, b.max_rel_error);
        return m;
    }
};

// Central-difference comparison of analytic gradients against the loss
// closure, per parameter block. compute_grads must zero and then accumulate
// analytic gradients for the current parameters; loss must be a pure
// function of the parameters.
GradCheckReport grad_check(std::vector<ParamBlock> blocks, const std::function<double()>& loss,
                           const std::function<void()>& compute_grads, double step);

}  // namespace gpae::approx
