#pragma once

#include <optional>
#include <vector>

#include "gpae/approx/nets.hpp"

namespace gpae::approx {

// One actor-loss sample. rho_old is the ratio between the iteration-start
// policy snapshot and the collection-time policy; logp_old is the stored
// collection-time log-probability of the taken action.
struct ActorSample {
    int agent = 0;
    int obs = 0;
    int action = 0;
    double advantage = 0.0;
    double logp_old = 0.0;
    double rho_old = 1.0;
};

struct ActorLossOptions {
    double clip_eps = 0.2;
    double entropy_coef = 0.01;
};

struct ActorLossStats {
    double loss = 0.0;        // negated clipped objective minus entropy bonus
    double objective = 0.0;   // mean clipped surrogate
    double entropy = 0.0;     // mean policy entropy
    bool any_boundary = false;  // a sample sat on a clip/min switch point
};

// Off-policy clipped surrogate: mean over samples of
//   min(rho * A, clip(rho, rho_old (1 - eps), rho_old (1 + eps)) * A)
// with rho = pi_theta(a|o) / exp(logp_old), plus an entropy bonus. At exact
// clip boundaries the unclipped branch's gradient is taken. Gradients are
// accumulated into the policy blocks when accumulate is set.
ActorLossStats actor_loss(PolicyNet& policy, const std::vector<ActorSample>& samples,
                          const ActorLossOptions& opts, bool accumulate,
                          double boundary_margin = 0.0);

struct CriticSample {
    Vec state_feat;
    Vec comp_feat;
    Vec own_probs;
    double target = 0.0;
};

// Mean squared error between the critic output and frozen targets.
double critic_loss(CriticNet& critic, const std::vector<CriticSample>& samples, bool accumulate);

struct ValueSample {
    Vec features;
    double target = 0.0;
};

double value_loss(ValueMlp& net, const std::vector<ValueSample>& samples, bool accumulate);

}  // namespace gpae::approx
