#include "gpae/estimators.hpp"

#include <cmath>
#include <stdexcept>

#include "gpae/oracle.hpp"

namespace gpae {

double CriticView::state_value(const Trajectory&, int) const {
    throw std::runtime_error("critic does not provide V(s)");
}
double CriticView::joint_q(const Trajectory&, int) const {
    throw std::runtime_error("critic does not provide joint Q");
}
double CriticView::joint_q_substitute(const Trajectory&, int, int, int) const {
    throw std::runtime_error("critic does not provide joint Q");
}
double CriticView::expected_reward(const Trajectory&, int, int) const {
    throw std::runtime_error("critic does not provide expected reward");
}
Vec CriticView::own_action_probs(const Trajectory&, int, int) const {
    throw std::runtime_error("critic does not provide action probabilities");
}

OracleCritic::OracleCritic(const DecPomdp& model, const TabularPolicy& policy)
    : model_(&model), joint_(model.joint()) {
    q_ = std::make_shared<JointQTable>(exact_joint_q(model, policy));
    for (int i = 0; i < model.num_agents; ++i) {
        eq_tables_.push_back(
            std::make_shared<PerAgentValueTable>(counterfactual_value(*q_, model, policy, i)));
    }
    v_ = exact_state_values(model, policy);
    marginals_ = state_action_marginals(model, policy);
}

double OracleCritic::eq(const Trajectory& traj, int t, int agent) const {
    if (t >= traj.length()) return 0.0;
    const Transition& tr = traj.steps[t];
    const int comp = joint_.complement_of(joint_.encode(tr.actions), agent);
    return eq_tables_[agent]->at(t, tr.state, comp);
}

double OracleCritic::state_value(const Trajectory& traj, int t) const {
    if (t >= traj.length()) return 0.0;
    return v_[t][traj.steps[t].state];
}

double OracleCritic::joint_q(const Trajectory& traj, int t) const {
    if (t >= traj.length()) return 0.0;
    const Transition& tr = traj.steps[t];
    return q_->at(t, tr.state, joint_.encode(tr.actions));
}

double OracleCritic::joint_q_substitute(const Trajectory& traj, int t, int agent,
                                        int own_action) const {
    if (t >= traj.length()) return 0.0;
    const Transition& tr = traj.steps[t];
    const int comp = joint_.complement_of(joint_.encode(tr.actions), agent);
    return q_->at(t, tr.state, joint_.compose(agent, own_action, comp));
}

double OracleCritic::expected_reward(const Trajectory& traj, int t, int agent) const {
    if (t >= traj.length()) return 0.0;
    const Transition& tr = traj.steps[t];
    const int joint_action = joint_.encode(tr.actions);
    const int comp = joint_.complement_of(joint_action, agent);
    double er = 0.0;
    for (int a = 0; a < model_->actions_per_agent[agent]; ++a) {
        er += marginals_[agent][tr.state][a] *
              model_->reward[tr.state][joint_.compose(agent, a, comp)];
    }
    return er;
}

Vec OracleCritic::own_action_probs(const Trajectory& traj, int t, int agent) const {
    const Transition& tr = traj.steps[t];
    return marginals_[agent][tr.state];
}

TableCritic::TableCritic(const DecPomdp& model, std::vector<PerAgentValueTable> eq_tables)
    : model_(&model), joint_(model.joint()), tables_(std::move(eq_tables)) {}

double TableCritic::eq(const Trajectory& traj, int t, int agent) const {
    if (t >= traj.length()) return 0.0;
    const Transition& tr = traj.steps[t];
    const int comp = joint_.complement_of(joint_.encode(tr.actions), agent);
    return tables_[agent].at(t, tr.state, comp);
}

double TableCritic::state_value(const Trajectory& traj, int t) const {
    if (model_->num_agents != 1) {
        throw std::runtime_error("TableCritic provides V only for single-agent models");
    }
    if (t >= traj.length()) return 0.0;
    return tables_[0].at(t, traj.steps[t].state, 0);
}

std::vector<Vec> per_agent_td_errors(const Trajectory& traj, const CriticView& critic,
                                     double gamma) {
    const int T = traj.length();
    const int n = T > 0 ? static_cast<int>(traj.steps[0].actions.size()) : 0;
    std::vector<Vec> deltas(n, Vec(T, 0.0));
    for (int i = 0; i < n; ++i) {
        for (int t = 0; t < T; ++t) {
            deltas[i][t] =
                traj.steps[t].reward + gamma * critic.eq(traj, t + 1, i) - critic.eq(traj, t, i);
        }
    }
    return deltas;
}

AdvantageSeries gpae_advantages(const std::vector<Vec>& deltas, const TraceWeights& traces, double gamma) {
    const int n = static_cast<int>(deltas.size());
    const int T = n > 0 ? static_cast<int>(deltas[0].size()) : 0;
    if (traces.length() != T) {
        throw std::invalid_argument("gpae: trace length does not match TD-error length");
    }
    AdvantageSeries adv;
    adv.estimator = "gpae";
    adv.gamma = gamma;
    adv.lambda = traces.lambda;
    adv.scheme = traces.scheme;
    adv.eta = traces.eta;
    adv.values.assign(n, Vec(T, 0.0));
    for (int i = 0; i < n; ++i) {
        double next = 0.0;
        for (int t = T - 1; t >= 0; --t) {
            const double carry = t + 1 < T ? traces.c[t + 1][i] * next : 0.0;
            next = deltas[i][t] + gamma * carry;
            adv.values[i][t] = next;
        }
    }
    return adv;
}

AdvantageSeries gae(const Trajectory& traj, const CriticView& critic, double gamma, double lambda,
                    int num_agents) {
    const int T = traj.length();
    AdvantageSeries adv;
    adv.estimator = "gae";
    adv.gamma = gamma;
    adv.lambda = lambda;
    adv.values.assign(num_agents, Vec(T, 0.0));
    Vec shared(T, 0.0);
    double next = 0.0;
    for (int t = T - 1; t >= 0; --t) {
        const double delta = traj.steps[t].reward + gamma * critic.state_value(traj, t + 1) -
                             critic.state_value(traj, t);
        next = delta + gamma * lambda * (t + 1 < T ? next : 0.0);
        shared[t] = next;
    }
    for (int i = 0; i < num_agents; ++i) adv.values[i] = shared;
    return adv;
}

AdvantageSeries coma(const Trajectory& traj, const CriticView& critic) {
    const int T = traj.length();
    const int n = T > 0 ? static_cast<int>(traj.steps[0].actions.size()) : 0;
    AdvantageSeries adv;
    adv.estimator = "coma";
    adv.values.assign(n, Vec(T, 0.0));
    for (int i = 0; i < n; ++i) {
        for (int t = 0; t < T; ++t) {
            const double q_taken = critic.joint_q(traj, t);
            const Vec probs = critic.own_action_probs(traj, t, i);
            double baseline = 0.0;
            for (std::size_t a = 0; a < probs.size(); ++a) {
                if (probs[a] == 0.0) continue;
                baseline += probs[a] * critic.joint_q_substitute(traj, t, i, static_cast<int>(a));
            }
            adv.values[i][t] = q_taken - baseline;
        }
    }
    return adv;
}

AdvantageSeries dae(const Trajectory& traj, const CriticView& critic, double gamma, double lambda,
                    double beta) {
    if (beta < 0.0 || beta > 1.0) throw std::invalid_argument("dae: beta must be in [0,1]");
    const int T = traj.length();
    const int n = T > 0 ? static_cast<int>(traj.steps[0].actions.size()) : 0;
    AdvantageSeries adv;
    adv.estimator = "dae";
    adv.gamma = gamma;
    adv.lambda = lambda;
    adv.beta = beta;
    adv.values.assign(n, Vec(T, 0.0));

    // A^i_t = GAE_t - S^i_t where S^i_t = beta*E[r_t] + gamma*lambda*beta*S^i_{t+1}
    // collects the beta^{l+1}-weighted expected-reward corrections.
    Vec shared(T, 0.0);
    double next = 0.0;
    for (int t = T - 1; t >= 0; --t) {
        const double delta = traj.steps[t].reward + gamma * critic.state_value(traj, t + 1) -
                             critic.state_value(traj, t);
        next = delta + gamma * lambda * (t + 1 < T ? next : 0.0);
        shared[t] = next;
    }
    for (int i = 0; i < n; ++i) {
        double corr = 0.0;
        for (int t = T - 1; t >= 0; --t) {
            corr = beta * critic.expected_reward(traj, t, i) +
                   gamma * lambda * beta * (t + 1 < T ? corr : 0.0);
            adv.values[i][t] = shared[t] - corr;
        }
    }
    return adv;
}

AdvantageGapStat advantage_gap(const AdvantageSeries& adv,
                               const std::vector<std::uint8_t>& events, int anomalous_agent) {
    return advantage_gap_pooled({adv}, {events}, anomalous_agent);
}

AdvantageGapStat advantage_gap_pooled(const std::vector<AdvantageSeries>& adv,
                                      const std::vector<std::vector<std::uint8_t>>& events,
                                      int anomalous_agent) {
    if (adv.size() != events.size()) {
        throw std::invalid_argument("advantage_gap: series/event size mismatch");
    }
    AdvantageGapStat stat;
    double sum = 0.0;
    for (std::size_t k = 0; k < adv.size(); ++k) {
        const AdvantageSeries& a = adv[k];
        const int n = a.num_agents();
        if (n < 2) throw std::invalid_argument("advantage_gap: needs at least two agents");
        if (static_cast<int>(events[k].size()) != a.length()) {
            throw std::invalid_argument("advantage_gap: event log length mismatch");
        }
        for (int t = 0; t < a.length(); ++t) {
            if (!events[k][t]) continue;
            double others = 0.0;
            for (int j = 0; j < n; ++j) {
                if (j != anomalous_agent) others += a.values[j][t];
            }
            sum += others / (n - 1) - a.values[anomalous_agent][t];
            ++stat.events;
        }
    }
    if (stat.events > 0) stat.mean = sum / static_cast<double>(stat.events);
    return stat;
}

}  // namespace gpae
