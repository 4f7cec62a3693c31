#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "gpae/correction.hpp"
#include "gpae/model.hpp"

namespace gpae {

// Stage-indexed joint action values Q_t(s, a_joint), t in [0, horizon).
// Stage indexing keeps episodic expectations exact; Q_horizon is zero by
// convention.
struct JointQTable {
    int horizon = 0;
    int num_states = 0;
    int num_joint = 0;
    double discount = 0.0;
    std::vector<std::vector<Vec>> values;  // [t][s][a_joint]

    double at(int t, int s, int a) const { return t >= horizon ? 0.0 : values[t][s][a]; }
};

enum class TableProvenance { OracleExact, Learned, ArbitraryTestInput };

// Per-agent counterfactual values EQ^i_t(s, a^{-i}) with agent i's own
// action marginalized out. The complement index follows JointActionSpace.
struct PerAgentValueTable {
    int agent = 0;
    int horizon = 0;
    int num_states = 0;
    int num_complement = 0;
    TableProvenance provenance = TableProvenance::ArbitraryTestInput;
    std::vector<std::vector<Vec>> values;  // [t][s][complement]

    double at(int t, int s, int comp) const { return t >= horizon ? 0.0 : values[t][s][comp]; }
    double sup_norm() const;
    static PerAgentValueTable zeros(const DecPomdp& model, int agent);
};

double sup_norm_distance(const PerAgentValueTable& a, const PerAgentValueTable& b);

// Everything one operator application needs. On-policy evaluation is the
// special case behavior == target with lambda-only traces.
struct OperatorConfig {
    const DecPomdp* model = nullptr;
    const TabularPolicy* target = nullptr;
    const TabularPolicy* behavior = nullptr;  // nullptr => on-policy
    TraceScheme scheme = TraceScheme::LambdaOnly;
    double lambda = 1.0;
    double eta = 1.05;
    int agent = 0;
    // Test-harness fault injection: scales the discount used inside the
    // operator. 1.0 in all legitimate runs.
    double fault_gamma_scale = 1.0;
};

struct OperatorReport {
    int iterations = 0;
    bool converged = false;
    Vec deltas;              // sup-norm change per iteration
    Vec ratios;              // deltas[k+1] / deltas[k]
    double final_delta = 0.0;
    PerAgentValueTable fixed_point;
};

JointQTable exact_joint_q(const DecPomdp& model, const TabularPolicy& policy);

// Stage-indexed state values V_t(s) under the policy.
std::vector<Vec> exact_state_values(const DecPomdp& model, const TabularPolicy& policy);

PerAgentValueTable counterfactual_value(const JointQTable& q, const DecPomdp& model,
                                        const TabularPolicy& policy, int agent);

// Exact one-step dynamic-programming application of the per-agent value
// iteration operator (on-policy form when cfg.behavior is null, generalized
// off-policy form otherwise).
PerAgentValueTable apply_operator(const OperatorConfig& cfg, const PerAgentValueTable& input);

// Literal trajectory-sum evaluation of the same operator via exhaustive
// enumeration; kept as an independent cross-check of the DP recursion.
PerAgentValueTable apply_operator_enumeration(const OperatorConfig& cfg,
                                              const PerAgentValueTable& input,
                                              long budget = 1000000);

OperatorReport fixed_point(const OperatorConfig& cfg, const PerAgentValueTable& init, double tol,
                           int max_iter);

struct RootAdvantageConfig {
    TraceScheme scheme = TraceScheme::LambdaOnly;
    double lambda = 1.0;
    double eta = 1.05;
    long budget = 1000000;
};

// Exhaustive expectation of the per-agent advantage sum started at t = 0,
// conditioned on (s_0, a_0) and evaluated through the production estimator
// path on every enumerated trajectory. critic_tables holds one table per
// agent. Shape of the result: [s][a_joint].
std::vector<Vec> expected_root_advantage(const DecPomdp& model, const TabularPolicy& target,
                                         const TabularPolicy& behavior,
                                         const RootAdvantageConfig& cfg,
                                         const std::vector<PerAgentValueTable>& critic_tables,
                                         int agent);

// Diagnostic: the stationary policy characterizing the off-policy fixed
// point under double truncation, per (state, complement) context.
// Shape: [s][complement][own_action].
std::vector<std::vector<Vec>> dt_fixed_point_policy(const DecPomdp& model,
                                                    const TabularPolicy& target,
                                                    const TabularPolicy& behavior, double eta,
                                                    int agent);

// Draws a uniformly random table within the value bound M_r / (1 - gamma).
PerAgentValueTable random_value_table(const DecPomdp& model, int agent, Rng& rng);

}  // namespace gpae
