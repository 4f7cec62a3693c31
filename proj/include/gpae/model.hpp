#pragma once

#include <optional>
#include <string>
#include <vector>

#include "gpae/common.hpp"

namespace gpae {

// Mixed-radix indexing over the joint action space, including the
// "complement" index over all agents except one. The complement keeps the
// remaining agents in ascending order, so for agent i the digits are
// (a^0, ..., a^{i-1}, a^{i+1}, ..., a^{n-1}).
class JointActionSpace {
public:
    JointActionSpace() = default;
    explicit JointActionSpace(std::vector<int> actions_per_agent);

    int num_agents() const { return static_cast<int>(sizes_.size()); }
    int num_joint() const { return num_joint_; }
    int num_actions(int agent) const { return sizes_[agent]; }
    int num_complement(int agent) const;

    int encode(const std::vector<int>& actions) const;
    std::vector<int> decode(int joint) const;
    int agent_action(int joint, int agent) const;

    // Index of a^{-i} within the complement space.
    int complement_of(int joint, int agent) const;
    // Joint index from (agent's own action, complement index).
    int compose(int agent, int own_action, int complement) const;

private:
    std::vector<int> sizes_;
    int num_joint_ = 1;
};

// Tabular cooperative Dec-POMDP. All tables are dense, row-major nested
// vectors: transition[s][a_joint][s'], reward[s][a_joint],
// observation[agent][s][o], initial_dist[s].
struct DecPomdp {
    int num_agents = 1;
    int num_states = 1;
    std::vector<int> actions_per_agent;
    std::vector<int> obs_per_agent;
    std::vector<std::vector<Vec>> transition;
    std::vector<Vec> reward;
    std::vector<std::vector<Vec>> observation;
    Vec initial_dist;
    double discount = 0.99;
    int horizon = 1;
    double reward_bound = 1.0;

    JointActionSpace joint() const { return JointActionSpace(actions_per_agent); }
    bool identity_observations() const;
};

// Per-agent conditional action tables: per_agent[i][obs][action].
struct TabularPolicy {
    std::vector<std::vector<Vec>> per_agent;
    bool full_support = false;

    int num_agents() const { return static_cast<int>(per_agent.size()); }
    const Vec& probs(int agent, int obs) const { return per_agent[agent][obs]; }
    double prob(int agent, int obs, int action) const { return per_agent[agent][obs][action]; }
};

struct ValidationIssue {
    std::string what;
    long index = -1;
};

struct ValidationReport {
    std::vector<ValidationIssue> issues;
    bool ok() const { return issues.empty(); }
    std::string summary() const;
};

ValidationReport validate_model(const DecPomdp& model);
ValidationReport validate_policy(const DecPomdp& model, const TabularPolicy& policy);

// Effective state-conditional action marginals pi^i(a|s) obtained by
// integrating the observation channel: sum_o O(o|s,i) pi^i(a|o). Exact for
// memoryless policies; identity observations make this a plain copy.
// Returned shape: [agent][state][action].
std::vector<std::vector<Vec>> state_action_marginals(const DecPomdp& model,
                                                     const TabularPolicy& policy);

TabularPolicy uniform_policy(const DecPomdp& model);

// Convenience constructors used by built-ins and tests.
DecPomdp make_identity_observation_model(int num_agents, int num_states,
                                         std::vector<int> actions_per_agent);

}  // namespace gpae
