#pragma once

#include <vector>

#include "gpae/model.hpp"
#include "gpae/trajectory.hpp"

namespace gpae {

struct WeightedTrajectory {
    Trajectory traj;
    double probability = 0.0;
};

// Thrown when exact enumeration would exceed the configured leaf budget.
struct EnumerationBudgetExceeded : std::runtime_error {
    explicit EnumerationBudgetExceeded(const std::string& what) : std::runtime_error(what) {}
};

// Samples one episode of `horizon` steps under the behavior policy,
// recording per-step behavior log-probabilities. Deterministic given rng.
Trajectory rollout(const DecPomdp& model, const TabularPolicy& behavior, Rng& rng, int horizon);

// Same, but the first state and joint action are forced. The recorded
// behavior log-probabilities of the forced step are the behavior policy's
// actual values, so importance ratios downstream stay meaningful.
Trajectory rollout_from_root(const DecPomdp& model, const TabularPolicy& behavior, Rng& rng,
                             int horizon, int root_state, int root_joint_action);

// Exhaustively enumerates every positive-probability trajectory of the given
// horizon together with its probability. The walk counts actual branches
// (positive-probability transitions, observations and actions) and refuses
// with EnumerationBudgetExceeded once the running leaf count passes the
// budget; nothing is silently truncated.
std::vector<WeightedTrajectory> enumerate_trajectories(const DecPomdp& model,
                                                       const TabularPolicy& policy, int horizon,
                                                       long budget = 1000000);

// Enumeration conditioned on a forced first step (s_0, a_0); probabilities
// are conditional on that root and sum to 1.
std::vector<WeightedTrajectory> enumerate_from_root(const DecPomdp& model,
                                                    const TabularPolicy& policy, int horizon,
                                                    int root_state, int root_joint_action,
                                                    long budget = 1000000);

// Exact expected episodic return under the policy via backward induction.
double expected_return(const DecPomdp& model, const TabularPolicy& policy, bool discounted);

}  // namespace gpae
