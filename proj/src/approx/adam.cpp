#include "gpae/approx/adam.hpp"

#include <cmath>

namespace gpae::approx {

double Adam::current_lr() const {
    if (!opts_.anneal || opts_.total_steps <= 0) return opts_.lr;
    const double progress =
        std::min(1.0, static_cast<double>(step_count_) / static_cast<double>(opts_.total_steps));
    return opts_.lr * (1.0 - progress);
}

bool Adam::step(std::vector<ParamBlock> blocks, std::string* diagnostic) {
    for (const auto& block : blocks) {
        for (double g : *block.grad) {
            if (!std::isfinite(g)) {
                if (diagnostic) {
                    *diagnostic = "non-finite gradient in block '" + block.name + "'";
                }
                return false;
            }
        }
    }
    if (m_.size() != blocks.size()) {
        m_.clear();
        v_.clear();
        for (const auto& block : blocks) {
            m_.emplace_back(block.value->size(), 0.0);
            v_.emplace_back(block.value->size(), 0.0);
        }
    }
    const double lr = current_lr();
    ++step_count_;
    const double bc1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(step_count_));
    const double bc2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(step_count_));
    for (std::size_t k = 0; k < blocks.size(); ++k) {
        Vec& p = *blocks[k].value;
        const Vec& g = *blocks[k].grad;
        Vec& m = m_[k];
        Vec& v = v_[k];
        for (std::size_t idx = 0; idx < p.size(); ++idx) {
            m[idx] = opts_.beta1 * m[idx] + (1.0 - opts_.beta1) * g[idx];
            v[idx] = opts_.beta2 * v[idx] + (1.0 - opts_.beta2) * g[idx] * g[idx];
            const double mhat = m[idx] / bc1;
            const double vhat = v[idx] / bc2;
            p[idx] -= lr * mhat / (std::sqrt(vhat) + opts_.eps);
        }
    }
    return true;
}

}  // namespace gpae::approx
