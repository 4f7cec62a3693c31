#pragma once

#include <vector>

#include "gpae/common.hpp"

namespace gpae {

// One environment step. Behavior log-probabilities are recorded at
// collection time and never recomputed from a (possibly mutated) policy.
struct Transition {
    int state = 0;
    std::vector<int> observations;   // per agent
    std::vector<int> actions;        // per agent
    double reward = 0.0;
    Vec behavior_logp;               // per agent, log mu^i(a^i|o^i)
};

struct Trajectory {
    std::vector<Transition> steps;
    bool terminal = true;

    int length() const { return static_cast<int>(steps.size()); }
    double undiscounted_return() const {
        double r = 0.0;
        for (const auto& t : steps) r += t.reward;
        return r;
    }
    double discounted_return(double gamma) const {
        double r = 0.0, g = 1.0;
        for (const auto& t : steps) {
            r += g * t.reward;
            g *= gamma;
        }
        return r;
    }
};

}  // namespace gpae
