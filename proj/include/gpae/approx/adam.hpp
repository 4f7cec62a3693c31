#pragma once

#include <optional>
#include <string>
#include <vector>

#include "gpae/approx/nets.hpp"

namespace gpae::approx {

// Adaptive-moment optimizer with bias correction and optional linear
// learning-rate annealing to zero over a known number of steps.
class Adam {
public:
    struct Options {
        double lr = 5e-4;
        double beta1 = 0.9;
        double beta2 = 0.999;
        double eps = 1e-8;
        bool anneal = false;
        long total_steps = 0;  // required when anneal is true
    };

    Adam() = default;
    explicit Adam(Options opts) : opts_(opts) {}

    // Applies one update over the given blocks using their accumulated
    // gradients. Returns false (and leaves parameters untouched) when any
    // gradient entry is non-finite; `diagnostic` then names the block.
    bool step(std::vector<ParamBlock> blocks, std::string* diagnostic = nullptr);

    double current_lr() const;
    long step_count() const { return step_count_; }
    const Options& options() const { return opts_; }

private:
    Options opts_;
    long step_count_ = 0;
    std::vector<Vec> m_;
    std::vector<Vec> v_;
};

}  // namespace gpae::approx
