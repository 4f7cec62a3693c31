#include "gpae/oracle.hpp"

#include <cmath>
#include <stdexcept>

#include "gpae/estimators.hpp"
#include "gpae/rollout.hpp"

namespace gpae {

double PerAgentValueTable::sup_norm() const {
    double m = 0.0;
    for (const auto& stage : values) {
        for (const auto& row : stage) {
            for (double v : row) m = std::max(m, std::abs(v));
        }
    }
    return m;
}

PerAgentValueTable PerAgentValueTable::zeros(const DecPomdp& model, int agent) {
    PerAgentValueTable table;
    table.agent = agent;
    table.horizon = model.horizon;
    table.num_states = model.num_states;
    table.num_complement = model.joint().num_complement(agent);
    table.values.assign(table.horizon,
                        std::vector<Vec>(table.num_states, Vec(table.num_complement, 0.0)));
    return table;
}

double sup_norm_distance(const PerAgentValueTable& a, const PerAgentValueTable& b) {
    if (a.horizon != b.horizon || a.num_states != b.num_states ||
        a.num_complement != b.num_complement) {
        throw std::invalid_argument("sup_norm_distance: table shapes differ");
    }
    double m = 0.0;
    for (int t = 0; t < a.horizon; ++t) {
        for (int s = 0; s < a.num_states; ++s) {
            for (int c = 0; c < a.num_complement; ++c) {
                m = std::max(m, std::abs(a.values[t][s][c] - b.values[t][s][c]));
            }
        }
    }
    return m;
}

namespace {

// Joint action probability Prod_i marg[i][s][a_i] from precomputed
// state-conditional marginals.
double joint_prob(const std::vector<std::vector<Vec>>& marg, int s,
                  const std::vector<int>& actions) {
    double p = 1.0;
    for (std::size_t i = 0; i < actions.size(); ++i) {
        p *= marg[i][s][actions[i]];
        if (p == 0.0) return 0.0;
    }
    return p;
}

void check_behavior_support(const DecPomdp& model,
                            const std::vector<std::vector<Vec>>& target_marg,
                            const std::vector<std::vector<Vec>>& behavior_marg) {
    for (int i = 0; i < model.num_agents; ++i) {
        for (int s = 0; s < model.num_states; ++s) {
            for (int a = 0; a < model.actions_per_agent[i]; ++a) {
                if (behavior_marg[i][s][a] <= 0.0 && target_marg[i][s][a] > 0.0) {
                    throw std::runtime_error(
                        "behavior policy has zero mass on a target-supported action "
                        "(agent " + std::to_string(i) + ", state " + std::to_string(s) +
                        ", action " + std::to_string(a) + "): importance ratio is infinite");
                }
            }
        }
    }
}

}  // namespace

JointQTable exact_joint_q(const DecPomdp& model, const TabularPolicy& policy) {
    const JointActionSpace joint = model.joint();
    const int S = model.num_states;
    const int A = joint.num_joint();
    const int H = model.horizon;
    const auto marg = state_action_marginals(model, policy);

    JointQTable q;
    q.horizon = H;
    q.num_states = S;
    q.num_joint = A;
    q.discount = model.discount;
    q.values.assign(H, std::vector<Vec>(S, Vec(A, 0.0)));

    Vec v_next(S, 0.0);  // V_{t+1}, zero at the horizon
    for (int t = H - 1; t >= 0; --t) {
        for (int s = 0; s < S; ++s) {
            for (int a = 0; a < A; ++a) {
                double val = model.reward[s][a];
                if (t + 1 < H) {
                    double cont = 0.0;
                    for (int sp = 0; sp < S; ++sp) {
                        const double p = model.transition[s][a][sp];
                        if (p > 0.0) cont += p * v_next[sp];
                    }
                    val += model.discount * cont;
                }
                q.values[t][s][a] = val;
            }
        }
        for (int s = 0; s < S; ++s) {
            double v = 0.0;
            for (int a = 0; a < A; ++a) {
                const double pa = joint_prob(marg, s, joint.decode(a));
                if (pa > 0.0) v += pa * q.values[t][s][a];
            }
            v_next[s] = v;
        }
    }
    return q;
}

std::vector<Vec> exact_state_values(const DecPomdp& model, const TabularPolicy& policy) {
    const JointQTable q = exact_joint_q(model, policy);
    const JointActionSpace joint = model.joint();
    const auto marg = state_action_marginals(model, policy);
    std::vector<Vec> v(q.horizon, Vec(q.num_states, 0.0));
    for (int t = 0; t < q.horizon; ++t) {
        for (int s = 0; s < q.num_states; ++s) {
            double val = 0.0;
            for (int a = 0; a < q.num_joint; ++a) {
                const double pa = joint_prob(marg, s, joint.decode(a));
                if (pa > 0.0) val += pa * q.values[t][s][a];
            }
            v[t][s] = val;
        }
    }
    return v;
}

PerAgentValueTable counterfactual_value(const JointQTable& q, const DecPomdp& model,
                                        const TabularPolicy& policy, int agent) {
    if (agent < 0 || agent >= model.num_agents) {
        throw std::out_of_range("counterfactual_value: agent index out of range");
    }
    const JointActionSpace joint = model.joint();
    const auto marg = state_action_marginals(model, policy);
    PerAgentValueTable table = PerAgentValueTable::zeros(model, agent);
    table.provenance = TableProvenance::OracleExact;
    for (int t = 0; t < table.horizon; ++t) {
        for (int s = 0; s < table.num_states; ++s) {
            for (int c = 0; c < table.num_complement; ++c) {
                double val = 0.0;
                for (int a = 0; a < model.actions_per_agent[agent]; ++a) {
                    const double p = marg[agent][s][a];
                    if (p > 0.0) val += p * q.values[t][s][joint.compose(agent, a, c)];
                }
                table.values[t][s][c] = val;
            }
        }
    }
    return table;
}

PerAgentValueTable apply_operator(const OperatorConfig& cfg, const PerAgentValueTable& input) {
    const DecPomdp& model = *cfg.model;
    const JointActionSpace joint = model.joint();
    const int S = model.num_states;
    const int A = joint.num_joint();
    const int H = model.horizon;
    const int i = cfg.agent;
    const double gamma = model.discount * cfg.fault_gamma_scale;
    if (cfg.lambda <= 0.0 || cfg.lambda > 1.0) {
        throw std::invalid_argument("apply_operator: lambda must be in (0,1]");
    }
    if (input.horizon != H || input.num_states != S ||
        input.num_complement != joint.num_complement(i)) {
        throw std::invalid_argument("apply_operator: input table shape mismatch");
    }

    const auto target_marg = state_action_marginals(model, *cfg.target);
    const bool off_policy = cfg.behavior != nullptr;
    const auto behavior_marg =
        off_policy ? state_action_marginals(model, *cfg.behavior) : target_marg;
    if (off_policy) check_behavior_support(model, target_marg, behavior_marg);

    // Per-(s, a_joint) trace weight and behavior probability, reused at every
    // stage (policies are stationary).
    std::vector<Vec> behavior_joint(S, Vec(A, 0.0));
    std::vector<Vec> trace(S, Vec(A, 0.0));
    for (int s = 0; s < S; ++s) {
        for (int a = 0; a < A; ++a) {
            const std::vector<int> actions = joint.decode(a);
            const double pb = joint_prob(behavior_marg, s, actions);
            behavior_joint[s][a] = pb;
            if (pb == 0.0) continue;
            double rho_i = target_marg[i][s][actions[i]] / behavior_marg[i][s][actions[i]];
            double rho_comp = 1.0;
            for (int j = 0; j < model.num_agents; ++j) {
                if (j == i) continue;
                rho_comp *= target_marg[j][s][actions[j]] / behavior_marg[j][s][actions[j]];
            }
            trace[s][a] = trace_weight(cfg.scheme, cfg.lambda, cfg.eta, rho_i, rho_comp);
        }
    }

    PerAgentValueTable out = PerAgentValueTable::zeros(model, i);
    out.provenance = input.provenance;

    // h_u(s, a): expected trace-weighted TD-error tail from stage u onward,
    // conditioned on (s_u, a_u) = (s, a). Computed backward in u.
    std::vector<Vec> h_next(S, Vec(A, 0.0));
    for (int u = H - 1; u >= 0; --u) {
        // Expected input value at the next stage under the behavior policy's
        // complement actions, per next state.
        Vec ef_next(S, 0.0);
        if (u + 1 < H) {
            for (int sp = 0; sp < S; ++sp) {
                double ef = 0.0;
                for (int c = 0; c < input.num_complement; ++c) {
                    double pc = 1.0;
                    int rem = c;
                    // complement digits are ordered by ascending agent index
                    for (int j = model.num_agents - 1; j >= 0; --j) {
                        if (j == i) continue;
                        const int digit = rem % model.actions_per_agent[j];
                        rem /= model.actions_per_agent[j];
                        pc *= behavior_marg[j][sp][digit];
                        if (pc == 0.0) break;
                    }
                    if (pc > 0.0) ef += pc * input.values[u + 1][sp][c];
                }
                ef_next[sp] = ef;
            }
        }
        // W_{u+1}(s') = E_{a' ~ mu}[c(s',a') h_{u+1}(s',a')].
        Vec w_next(S, 0.0);
        if (u + 1 < H) {
            for (int sp = 0; sp < S; ++sp) {
                double w = 0.0;
                for (int ap = 0; ap < A; ++ap) {
                    const double pb = behavior_joint[sp][ap];
                    if (pb > 0.0) w += pb * trace[sp][ap] * h_next[sp][ap];
                }
                w_next[sp] = w;
            }
        }
        std::vector<Vec> h(S, Vec(A, 0.0));
        for (int s = 0; s < S; ++s) {
            for (int a = 0; a < A; ++a) {
                const int comp = joint.complement_of(a, i);
                double delta = model.reward[s][a] - input.values[u][s][comp];
                double carry = 0.0;
                if (u + 1 < H) {
                    double cont = 0.0;
                    double wsum = 0.0;
                    for (int sp = 0; sp < S; ++sp) {
                        const double p = model.transition[s][a][sp];
                        if (p > 0.0) {
                            cont += p * ef_next[sp];
                            wsum += p * w_next[sp];
                        }
                    }
                    delta += gamma * cont;
                    carry = gamma * wsum;
                }
                h[s][a] = delta + carry;
            }
        }
        // First action is drawn with the untruncated ratio, which reduces
        // the outer expectation to the target policy's own-action marginal.
        for (int s = 0; s < S; ++s) {
            for (int c = 0; c < input.num_complement; ++c) {
                double acc = 0.0;
                for (int a = 0; a < model.actions_per_agent[i]; ++a) {
                    const double p = target_marg[i][s][a];
                    if (p > 0.0) acc += p * h[s][joint.compose(i, a, c)];
                }
                out.values[u][s][c] = input.values[u][s][c] + acc;
            }
        }
        h_next = std::move(h);
    }
    return out;
}

PerAgentValueTable apply_operator_enumeration(const OperatorConfig& cfg,
                                              const PerAgentValueTable& input, long budget) {
    const DecPomdp& model = *cfg.model;
    const JointActionSpace joint = model.joint();
    const int S = model.num_states;
    const int H = model.horizon;
    const int i = cfg.agent;
    const double gamma = model.discount * cfg.fault_gamma_scale;

    const auto target_marg = state_action_marginals(model, *cfg.target);
    const bool off_policy = cfg.behavior != nullptr;
    const TabularPolicy& mu = off_policy ? *cfg.behavior : *cfg.target;
    const auto behavior_marg = off_policy ? state_action_marginals(model, mu) : target_marg;
    if (off_policy) check_behavior_support(model, target_marg, behavior_marg);

    // Enumeration works on a horizon-truncated copy of the model so that the
    // tail from stage u covers exactly stages u..H-1.
    PerAgentValueTable out = PerAgentValueTable::zeros(model, i);
    out.provenance = input.provenance;
    for (int u = 0; u < H; ++u) {
        DecPomdp truncated = model;
        truncated.horizon = H - u;
        for (int s = 0; s < S; ++s) {
            for (int c = 0; c < input.num_complement; ++c) {
                double acc = 0.0;
                for (int ai = 0; ai < model.actions_per_agent[i]; ++ai) {
                    const double pa = target_marg[i][s][ai];
                    if (pa == 0.0) continue;
                    const int root = joint.compose(i, ai, c);
                    const auto trajs =
                        enumerate_from_root(truncated, mu, truncated.horizon, s, root, budget);
                    double expectation = 0.0;
                    for (const auto& wt : trajs) {
                        double sum = 0.0;
                        double discount_pow = 1.0;
                        double trace_prod = 1.0;
                        for (int l = 0; l < wt.traj.length(); ++l) {
                            const Transition& tr = wt.traj.steps[l];
                            const int a = joint.encode(tr.actions);
                            const int comp = joint.complement_of(a, i);
                            if (l >= 1) {
                                double rho_i =
                                    target_marg[i][tr.state][tr.actions[i]] /
                                    behavior_marg[i][tr.state][tr.actions[i]];
                                double rho_comp = 1.0;
                                for (int j = 0; j < model.num_agents; ++j) {
                                    if (j == i) continue;
                                    rho_comp *= target_marg[j][tr.state][tr.actions[j]] /
                                                behavior_marg[j][tr.state][tr.actions[j]];
                                }
                                trace_prod *=
                                    trace_weight(cfg.scheme, cfg.lambda, cfg.eta, rho_i, rho_comp);
                            }
                            double next_f = 0.0;
                            if (l + 1 < wt.traj.length()) {
                                const Transition& nx = wt.traj.steps[l + 1];
                                const int ncomp =
                                    joint.complement_of(joint.encode(nx.actions), i);
                                next_f = input.values[u + l + 1][nx.state][ncomp];
                            }
                            const double delta =
                                tr.reward + gamma * next_f - input.values[u + l][tr.state][comp];
                            sum += discount_pow * trace_prod * delta;
                            discount_pow *= gamma;
                        }
                        expectation += wt.probability * sum;
                    }
                    acc += pa * expectation;
                }
                out.values[u][s][c] = input.values[u][s][c] + acc;
            }
        }
    }
    return out;
}

OperatorReport fixed_point(const OperatorConfig& cfg, const PerAgentValueTable& init, double tol,
                           int max_iter) {
    if (tol <= 0.0) throw std::invalid_argument("fixed_point: tol must be positive");
    OperatorReport report;
    PerAgentValueTable current = init;
    for (int k = 0; k < max_iter; ++k) {
        PerAgentValueTable next = apply_operator(cfg, current);
        const double delta = sup_norm_distance(next, current);
        report.deltas.push_back(delta);
        if (report.deltas.size() >= 2) {
            const double prev = report.deltas[report.deltas.size() - 2];
            report.ratios.push_back(prev > 1e-300 ? delta / prev : 0.0);
        }
        current = std::move(next);
        report.iterations = k + 1;
        if (delta < tol) {
            report.converged = true;
            break;
        }
    }
    report.final_delta = report.deltas.empty() ? 0.0 : report.deltas.back();
    report.fixed_point = std::move(current);
    return report;
}

std::vector<Vec> expected_root_advantage(const DecPomdp& model, const TabularPolicy& target,
                                         const TabularPolicy& behavior,
                                         const RootAdvantageConfig& cfg,
                                         const std::vector<PerAgentValueTable>& critic_tables,
                                         int agent) {
    const JointActionSpace joint = model.joint();
    const int S = model.num_states;
    const int A = joint.num_joint();
    const TableCritic critic(model, critic_tables);

    std::vector<Vec> out(S, Vec(A, 0.0));
    for (int s = 0; s < S; ++s) {
        for (int a = 0; a < A; ++a) {
            const auto trajs =
                enumerate_from_root(model, behavior, model.horizon, s, a, cfg.budget);
            double expectation = 0.0;
            for (const auto& wt : trajs) {
                const auto deltas = per_agent_td_errors(wt.traj, critic, model.discount);
                const IsrSeries isr = compute_isr(wt.traj, target);
                const TraceWeights traces = truncate(isr, cfg.scheme, cfg.lambda, cfg.eta);
                const AdvantageSeries adv = gpae_advantages(deltas, traces, model.discount);
                expectation += wt.probability * adv.values[agent][0];
            }
            out[s][a] = expectation;
        }
    }
    return out;
}

std::vector<std::vector<Vec>> dt_fixed_point_policy(const DecPomdp& model,
                                                    const TabularPolicy& target,
                                                    const TabularPolicy& behavior, double eta,
                                                    int agent) {
    const JointActionSpace joint = model.joint();
    const auto target_marg = state_action_marginals(model, target);
    const auto behavior_marg = state_action_marginals(model, behavior);
    const int S = model.num_states;
    const int C = joint.num_complement(agent);
    const int Ai = model.actions_per_agent[agent];

    std::vector<std::vector<Vec>> policy(S, std::vector<Vec>(C, Vec(Ai, 0.0)));
    for (int s = 0; s < S; ++s) {
        for (int c = 0; c < C; ++c) {
            double rho_comp = 1.0;
            int rem = c;
            for (int j = model.num_agents - 1; j >= 0; --j) {
                if (j == agent) continue;
                const int digit = rem % model.actions_per_agent[j];
                rem /= model.actions_per_agent[j];
                const double mu = behavior_marg[j][s][digit];
                rho_comp = mu > 0.0 ? rho_comp * target_marg[j][s][digit] / mu : 0.0;
            }
            double norm = 0.0;
            for (int a = 0; a < Ai; ++a) {
                const double w = std::min(behavior_marg[agent][s][a],
                                          target_marg[agent][s][a] * std::min(eta, rho_comp));
                policy[s][c][a] = w;
                norm += w;
            }
            if (norm > 0.0) {
                for (int a = 0; a < Ai; ++a) policy[s][c][a] /= norm;
            }
        }
    }
    return policy;
}

PerAgentValueTable random_value_table(const DecPomdp& model, int agent, Rng& rng) {
    PerAgentValueTable table = PerAgentValueTable::zeros(model, agent);
    const double bound = model.reward_bound / (1.0 - model.discount);
    for (auto& stage : table.values) {
        for (auto& row : stage) {
            for (double& v : row) v = rng.uniform(-bound, bound);
        }
    }
    return table;
}

}  // namespace gpae
