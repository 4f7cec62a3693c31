#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "gpae/correction.hpp"
#include "gpae/model.hpp"
#include "gpae/trajectory.hpp"

namespace gpae {

struct JointQTable;
struct PerAgentValueTable;

// Capability interface the estimators draw critic values from. Queries at
// t == length bootstrap to 0 (episodic terminal convention). Implementations
// may refuse capabilities they do not provide by throwing.
class CriticView {
public:
    virtual ~CriticView() = default;

    // EQ^i at step t, i.e. agent i's own action marginalized out against
    // the realized actions of the others. Required by every estimator here.
    virtual double eq(const Trajectory& traj, int t, int agent) const = 0;

    virtual double state_value(const Trajectory& traj, int t) const;
    virtual double joint_q(const Trajectory& traj, int t) const;
    // Q at step t with agent i's action replaced by own_action.
    virtual double joint_q_substitute(const Trajectory& traj, int t, int agent,
                                      int own_action) const;
    // E_{a^i ~ pi^i}[r(s_t, a^i, a^{-i}_t)].
    virtual double expected_reward(const Trajectory& traj, int t, int agent) const;
    // pi^i(.|o^i_t), needed by the counterfactual baseline.
    virtual Vec own_action_probs(const Trajectory& traj, int t, int agent) const;
};

// Exact tables from the oracle module; the reference critic for every
// identity check.
class OracleCritic : public CriticView {
public:
    OracleCritic(const DecPomdp& model, const TabularPolicy& policy);

    double eq(const Trajectory& traj, int t, int agent) const override;
    double state_value(const Trajectory& traj, int t) const override;
    double joint_q(const Trajectory& traj, int t) const override;
    double joint_q_substitute(const Trajectory& traj, int t, int agent,
                              int own_action) const override;
    double expected_reward(const Trajectory& traj, int t, int agent) const override;
    Vec own_action_probs(const Trajectory& traj, int t, int agent) const override;

    const PerAgentValueTable& eq_table(int agent) const { return *eq_tables_[agent]; }
    const JointQTable& q_table() const { return *q_; }

private:
    const DecPomdp* model_;
    JointActionSpace joint_;
    std::shared_ptr<JointQTable> q_;
    std::vector<std::shared_ptr<PerAgentValueTable>> eq_tables_;
    std::vector<Vec> v_;                     // [t][s]
    std::vector<std::vector<Vec>> marginals_;  // [agent][s][a]
};

// Test-oriented critic over caller-provided per-agent EQ tables; for n = 1
// the single table doubles as V.
class TableCritic : public CriticView {
public:
    TableCritic(const DecPomdp& model, std::vector<PerAgentValueTable> eq_tables);
    double eq(const Trajectory& traj, int t, int agent) const override;
    double state_value(const Trajectory& traj, int t) const override;

private:
    const DecPomdp* model_;
    JointActionSpace joint_;
    std::vector<PerAgentValueTable> tables_;
};

struct AdvantageSeries {
    std::string estimator;
    double gamma = 0.0;
    double lambda = 0.0;
    double beta = 0.0;
    TraceScheme scheme = TraceScheme::LambdaOnly;
    double eta = 0.0;
    std::vector<Vec> values;  // [agent][t]

    int num_agents() const { return static_cast<int>(values.size()); }
    int length() const { return values.empty() ? 0 : static_cast<int>(values[0].size()); }
};

// delta^i_t = r_t + gamma * EQ^i_{t+1} - EQ^i_t, shape [agent][t].
std::vector<Vec> per_agent_td_errors(const Trajectory& traj, const CriticView& critic,
                                     double gamma);

// A^i_t = sum_{l >= t} gamma^{l-t} (prod_{j=t+1}^l c^i_j) delta^i_l, via a
// single backward pass. Lambda-only traces reproduce the on-policy form.
AdvantageSeries gpae_advantages(const std::vector<Vec>& deltas, const TraceWeights& traces, double gamma);

// Shared-advantage baseline: standard GAE on the team reward, replicated
// identically for every agent.
AdvantageSeries gae(const Trajectory& traj, const CriticView& critic, double gamma, double lambda,
                    int num_agents);

// One-step counterfactual baseline.
AdvantageSeries coma(const Trajectory& traj, const CriticView& critic);

// Difference-reward estimator with bias-credit parameter beta.
AdvantageSeries dae(const Trajectory& traj, const CriticView& critic, double gamma, double lambda,
                    double beta);

struct AdvantageGapStat {
    long events = 0;
    double mean = 0.0;  // undefined when events == 0
    bool empty() const { return events == 0; }
};

// Advantage gap at anomaly events: mean over j != i of A^j_t minus A^i_t,
// pooled over all events. Returns an explicitly empty result when no event
// fired.
AdvantageGapStat advantage_gap(const AdvantageSeries& adv,
                               const std::vector<std::uint8_t>& events, int anomalous_agent);

AdvantageGapStat advantage_gap_pooled(const std::vector<AdvantageSeries>& adv,
                                      const std::vector<std::vector<std::uint8_t>>& events,
                                      int anomalous_agent);

}  // namespace gpae
