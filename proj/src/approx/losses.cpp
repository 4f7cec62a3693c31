#include "gpae/approx/losses.hpp"

#include <cmath>

namespace gpae::approx {

ActorLossStats actor_loss(PolicyNet& policy, const std::vector<ActorSample>& samples,
                          const ActorLossOptions& opts, bool accumulate,
                          double boundary_margin) {
    ActorLossStats stats;
    if (samples.empty()) return stats;
    const double inv_n = 1.0 / static_cast<double>(samples.size());
    for (const ActorSample& sample : samples) {
        PolicyNet::Cache cache;
        const Vec probs = policy.forward(sample.agent, sample.obs, &cache);
        const int count = cache.action_count;
        const double p_old = std::exp(sample.logp_old);
        const double rho = probs[sample.action] / p_old;
        const double lo = sample.rho_old * (1.0 - opts.clip_eps);
        const double hi = sample.rho_old * (1.0 + opts.clip_eps);
        const double clipped_rho = std::min(hi, std::max(lo, rho));
        const double unclipped = rho * sample.advantage;
        const double clipped = clipped_rho * sample.advantage;
        const double objective = std::min(unclipped, clipped);

        double entropy = 0.0;
        for (int k = 0; k < count; ++k) {
            if (probs[k] > 0.0) entropy -= probs[k] * std::log(probs[k]);
        }
        stats.objective += objective * inv_n;
        stats.entropy += entropy * inv_n;
        stats.loss += (-objective - opts.entropy_coef * entropy) * inv_n;

        if (boundary_margin > 0.0) {
            const bool outside = rho < lo || rho > hi;
            if (std::abs(rho - lo) < boundary_margin || std::abs(rho - hi) < boundary_margin ||
                (outside &&
                 std::abs(unclipped - clipped) <
                     boundary_margin * (1.0 + std::abs(sample.advantage)))) {
                stats.any_boundary = true;
            }
            for (double pre : cache.pre1) {
                if (std::abs(pre) < 1e-4) stats.any_boundary = true;
            }
            for (double pre : cache.pre2) {
                if (std::abs(pre) < 1e-4) stats.any_boundary = true;
            }
        }
        if (!accumulate) continue;

        // d(objective)/d(rho): the unclipped branch wins ties by convention;
        // when the clipped branch is strictly smaller, rho sits outside the
        // band and the branch is constant in rho.
        const double dobj_drho = unclipped <= clipped ? sample.advantage : 0.0;
        Vec dprobs(probs.size(), 0.0);
        dprobs[sample.action] += -dobj_drho / p_old * inv_n;
        for (int k = 0; k < count; ++k) {
            if (probs[k] > 0.0) {
                dprobs[k] += opts.entropy_coef * (std::log(probs[k]) + 1.0) * inv_n;
            }
        }
        const Vec dlogits = softmax_backward(probs, dprobs, count);
        policy.backward(cache, dlogits);
    }
    return stats;
}

double critic_loss(CriticNet& critic, const std::vector<CriticSample>& samples, bool accumulate) {
    if (samples.empty()) return 0.0;
    const double inv_n = 1.0 / static_cast<double>(samples.size());
    double loss = 0.0;
    for (const CriticSample& sample : samples) {
        CriticNet::Cache cache;
        const double out =
            critic.forward(sample.state_feat, sample.comp_feat, sample.own_probs, &cache);
        const double err = out - sample.target;
        loss += err * err * inv_n;
        if (accumulate) critic.backward(cache, 2.0 * err * inv_n);
    }
    return loss;
}

double value_loss(ValueMlp& net, const std::vector<ValueSample>& samples, bool accumulate) {
    if (samples.empty()) return 0.0;
    const double inv_n = 1.0 / static_cast<double>(samples.size());
    double loss = 0.0;
    for (const ValueSample& sample : samples) {
        ValueMlp::Cache cache;
        const double out = net.forward(sample.features, &cache);
        const double err = out - sample.target;
        loss += err * err * inv_n;
        if (accumulate) net.backward(cache, 2.0 * err * inv_n);
    }
    return loss;
}

}  // namespace gpae::approx
