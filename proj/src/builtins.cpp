#include "gpae/builtins.hpp"

#include <cmath>
#include <stdexcept>

namespace gpae {

namespace {

// Stationary greedy policy from joint value iteration, decentralized by
// splitting the greedy joint action into per-agent components. Ties break
// toward the smallest joint index so every agent resolves them identically.
TabularPolicy greedy_stationary_policy(const DecPomdp& model) {
    const JointActionSpace joint = model.joint();
    const int S = model.num_states;
    const int A = joint.num_joint();
    Vec value(S, 0.0);
    Vec next(S, 0.0);
    for (int sweep = 0; sweep < 1000; ++sweep) {
        double delta = 0.0;
        for (int s = 0; s < S; ++s) {
            double best = -1e300;
            for (int a = 0; a < A; ++a) {
                double q = model.reward[s][a];
                for (int sp = 0; sp < S; ++sp) {
                    const double p = model.transition[s][a][sp];
                    if (p > 0.0) q += model.discount * p * value[sp];
                }
                if (q > best) best = q;
            }
            next[s] = best;
            delta = std::max(delta, std::abs(next[s] - value[s]));
        }
        value = next;
        if (delta < 1e-12) break;
    }

    TabularPolicy policy;
    policy.full_support = false;
    policy.per_agent.resize(model.num_agents);
    for (int i = 0; i < model.num_agents; ++i) {
        policy.per_agent[i].assign(model.obs_per_agent[i],
                                   Vec(model.actions_per_agent[i], 0.0));
    }
    // Built-ins use identity observations, so obs index == state index.
    for (int s = 0; s < S; ++s) {
        int best_a = 0;
        double best = -1e300;
        for (int a = 0; a < A; ++a) {
            double q = model.reward[s][a];
            for (int sp = 0; sp < S; ++sp) {
                const double p = model.transition[s][a][sp];
                if (p > 0.0) q += model.discount * p * value[sp];
            }
            if (q > best + 1e-12) {
                best = q;
                best_a = a;
            }
        }
        const std::vector<int> parts = joint.decode(best_a);
        for (int i = 0; i < model.num_agents; ++i) {
            policy.per_agent[i][s][parts[i]] = 1.0;
        }
    }
    return policy;
}

TabularPolicy tilted_policy(const DecPomdp& model) {
    TabularPolicy policy;
    policy.full_support = true;
    policy.per_agent.resize(model.num_agents);
    for (int i = 0; i < model.num_agents; ++i) {
        const int A = model.actions_per_agent[i];
        Vec row(A, 0.0);
        double norm = 0.0;
        for (int a = 0; a < A; ++a) {
            row[a] = static_cast<double>(A - a);
            norm += row[a];
        }
        for (int a = 0; a < A; ++a) row[a] /= norm;
        policy.per_agent[i].assign(model.obs_per_agent[i], row);
    }
    return policy;
}

void finalize_bundle(BuiltinBundle& bundle, bool with_optimal) {
    const ValidationReport report = validate_model(bundle.model);
    if (!report.ok()) {
        throw std::logic_error("builtin '" + bundle.name + "' failed validation: " +
                               report.summary());
    }
    bundle.uniform = uniform_policy(bundle.model);
    bundle.tilted = tilted_policy(bundle.model);
    if (with_optimal) bundle.optimal = greedy_stationary_policy(bundle.model);
}

BuiltinBundle make_matrix_team(const nlohmann::json& params) {
    const int n = params.value("num_agents", 2);
    const int A = params.value("num_actions", 2);
    BuiltinBundle bundle;
    bundle.name = "matrix_team";
    DecPomdp model = make_identity_observation_model(n, 1, std::vector<int>(n, A));
    model.discount = params.value("discount", 0.95);
    model.horizon = params.value("horizon", 8);
    model.reward_bound = 1.0;
    const JointActionSpace joint = model.joint();
    for (int a = 0; a < joint.num_joint(); ++a) {
        const std::vector<int> parts = joint.decode(a);
        bool all_equal = true;
        for (int i = 1; i < n; ++i) all_equal = all_equal && parts[i] == parts[0];
        double r = 0.0;
        if (all_equal) r = parts[0] == 0 ? 1.0 : 0.5;
        model.reward[0][a] = r;
        model.transition[0][a][0] = 1.0;
    }
    bundle.model = std::move(model);
    finalize_bundle(bundle, true);
    return bundle;
}

// Two agents on a line of `length` cells, starting at opposite ends. Moving
// onto the same cell pays +1 and absorbs into the goal state.
BuiltinBundle make_chain_gather(const nlohmann::json& params) {
    const int L = params.value("length", 3);
    if (L < 2) throw std::invalid_argument("chain_gather: length must be >= 2");
    BuiltinBundle bundle;
    bundle.name = "chain_gather";
    const int S = L * L + 1;  // joint positions plus absorbing goal
    const int goal = S - 1;
    DecPomdp model = make_identity_observation_model(2, S, {2, 2});
    model.discount = params.value("discount", 0.95);
    model.horizon = params.value("horizon", 6);
    model.reward_bound = 1.0;
    const JointActionSpace joint = model.joint();

    auto move = [L](int pos, int action) {
        const int next = action == 0 ? pos - 1 : pos + 1;
        return std::max(0, std::min(L - 1, next));
    };

    for (int p0 = 0; p0 < L; ++p0) {
        for (int p1 = 0; p1 < L; ++p1) {
            const int s = p0 * L + p1;
            for (int a = 0; a < joint.num_joint(); ++a) {
                const std::vector<int> parts = joint.decode(a);
                const int q0 = move(p0, parts[0]);
                const int q1 = move(p1, parts[1]);
                if (q0 == q1) {
                    model.transition[s][a][goal] = 1.0;
                    model.reward[s][a] = 1.0;
                } else {
                    model.transition[s][a][q0 * L + q1] = 1.0;
                }
            }
        }
    }
    for (int a = 0; a < joint.num_joint(); ++a) model.transition[goal][a][goal] = 1.0;
    model.initial_dist.assign(S, 0.0);
    model.initial_dist[0 * L + (L - 1)] = 1.0;

    bundle.model = std::move(model);
    bundle.goal_state = goal;
    finalize_bundle(bundle, true);
    return bundle;
}

BuiltinBundle make_single_chain(const nlohmann::json& params) {
    const int L = params.value("length", 4);
    if (L < 2) throw std::invalid_argument("single_chain: length must be >= 2");
    BuiltinBundle bundle;
    bundle.name = "single_chain";
    DecPomdp model = make_identity_observation_model(1, L, {2});
    model.discount = params.value("discount", 0.9);
    model.horizon = params.value("horizon", 5);
    model.reward_bound = 1.0;
    const int goal = L - 1;
    for (int s = 0; s < L; ++s) {
        for (int a = 0; a < 2; ++a) {
            if (s == goal) {
                model.transition[s][a][goal] = 1.0;
                continue;
            }
            const int next = std::max(0, std::min(L - 1, a == 0 ? s - 1 : s + 1));
            model.transition[s][a][next] = 1.0;
            if (next == goal) model.reward[s][a] = 1.0;
        }
    }
    bundle.model = std::move(model);
    bundle.goal_state = goal;
    finalize_bundle(bundle, true);
    return bundle;
}

// matrix_team or chain_gather extended with a designated stop action, plus a
// default anomaly configuration mirroring the 5% stop perturbation.
BuiltinBundle make_anomaly_team(const nlohmann::json& params) {
    const std::string base = params.value("base", "matrix");
    BuiltinBundle bundle;
    bundle.name = "anomaly_team";

    if (base == "matrix") {
        const int n = 2;
        DecPomdp model = make_identity_observation_model(n, 1, {3, 3});
        model.discount = params.value("discount", 0.95);
        model.horizon = params.value("horizon", 8);
        model.reward_bound = 1.3;
        const JointActionSpace joint = model.joint();
        const double contrib[3] = {0.5, 0.2, 0.0};
        for (int a = 0; a < joint.num_joint(); ++a) {
            const std::vector<int> parts = joint.decode(a);
            double r = contrib[parts[0]] + contrib[parts[1]];
            if (parts[0] == 0 && parts[1] == 0) r += 0.3;
            model.reward[0][a] = r;
            model.transition[0][a][0] = 1.0;
        }
        bundle.model = std::move(model);
    } else if (base == "chain") {
        const int L = params.value("length", 3);
        const int S = L * L + 1;
        const int goal = S - 1;
        DecPomdp model = make_identity_observation_model(2, S, {3, 3});
        model.discount = params.value("discount", 0.95);
        model.horizon = params.value("horizon", 6);
        model.reward_bound = 1.0;
        model.initial_dist.assign(S, 0.0);
        model.initial_dist[0 * L + (L - 1)] = 1.0;
        const JointActionSpace joint3 = model.joint();
        // Action 2 is "stop": the agent stays in place.
        auto move = [L](int pos, int action) {
            if (action == 2) return pos;
            const int next = action == 0 ? pos - 1 : pos + 1;
            return std::max(0, std::min(L - 1, next));
        };
        for (int p0 = 0; p0 < L; ++p0) {
            for (int p1 = 0; p1 < L; ++p1) {
                const int s = p0 * L + p1;
                for (int a = 0; a < joint3.num_joint(); ++a) {
                    const std::vector<int> parts = joint3.decode(a);
                    const int q0 = move(p0, parts[0]);
                    const int q1 = move(p1, parts[1]);
                    if (q0 == q1) {
                        model.transition[s][a][goal] = 1.0;
                        model.reward[s][a] = 1.0;
                    } else {
                        model.transition[s][a][q0 * L + q1] = 1.0;
                    }
                }
            }
        }
        for (int a = 0; a < joint3.num_joint(); ++a) model.transition[goal][a][goal] = 1.0;
        bundle.goal_state = goal;
        bundle.model = std::move(model);
    } else {
        throw std::invalid_argument("anomaly_team: unknown base '" + base + "'");
    }

    AnomalyConfig anomaly;
    anomaly.agent_index = params.value("anomaly_agent", 0);
    anomaly.probability = params.value("anomaly_probability", 0.05);
    anomaly.forced_action = params.value("forced_action", 2);
    bundle.anomaly = anomaly;

    finalize_bundle(bundle, true);
    return bundle;
}

}  // namespace

BuiltinBundle make_builtin(const std::string& name, const nlohmann::json& params) {
    if (name == "matrix_team") return make_matrix_team(params);
    if (name == "chain_gather") return make_chain_gather(params);
    if (name == "single_chain") return make_single_chain(params);
    if (name == "anomaly_team") return make_anomaly_team(params);
    throw std::invalid_argument("unknown builtin model '" + name + "'");
}

TabularPolicy wrap_anomaly(const TabularPolicy& policy, const AnomalyConfig& cfg,
                           const DecPomdp& model) {
    if (cfg.agent_index < 0 || cfg.agent_index >= model.num_agents) {
        throw std::invalid_argument("wrap_anomaly: agent index out of range");
    }
    if (cfg.forced_action < 0 || cfg.forced_action >= model.actions_per_agent[cfg.agent_index]) {
        throw std::invalid_argument("wrap_anomaly: forced action out of range");
    }
    if (cfg.probability < 0.0 || cfg.probability > 1.0) {
        throw std::invalid_argument("wrap_anomaly: probability outside [0,1]");
    }
    TabularPolicy wrapped = policy;
    if (cfg.probability == 0.0) return wrapped;
    auto& tables = wrapped.per_agent[cfg.agent_index];
    for (auto& row : tables) {
        for (std::size_t a = 0; a < row.size(); ++a) {
            row[a] = (1.0 - cfg.probability) * row[a] +
                     (static_cast<int>(a) == cfg.forced_action ? cfg.probability : 0.0);
        }
    }
    wrapped.full_support = policy.full_support && cfg.probability < 1.0;
    return wrapped;
}

std::vector<std::uint8_t> anomaly_events(const Trajectory& traj, const AnomalyConfig& cfg) {
    std::vector<std::uint8_t> events(traj.steps.size(), 0);
    for (std::size_t t = 0; t < traj.steps.size(); ++t) {
        events[t] = traj.steps[t].actions[cfg.agent_index] == cfg.forced_action ? 1 : 0;
    }
    return events;
}

}  // namespace gpae
