#include "gpae/model.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

namespace gpae {

namespace {
constexpr double kRowSumTol = 1e-12;
}

JointActionSpace::JointActionSpace(std::vector<int> actions_per_agent)
    : sizes_(std::move(actions_per_agent)) {
    num_joint_ = 1;
    for (int s : sizes_) {
        if (s < 1) throw std::invalid_argument("JointActionSpace: action count < 1");
        num_joint_ *= s;
    }
}

int JointActionSpace::num_complement(int agent) const {
    return num_joint_ / sizes_[agent];
}

int JointActionSpace::encode(const std::vector<int>& actions) const {
    int idx = 0;
    for (std::size_t i = 0; i < sizes_.size(); ++i) {
        idx = idx * sizes_[i] + actions[i];
    }
    return idx;
}

std::vector<int> JointActionSpace::decode(int joint) const {
    std::vector<int> actions(sizes_.size());
    for (std::size_t i = sizes_.size(); i-- > 0;) {
        actions[i] = joint % sizes_[i];
        joint /= sizes_[i];
    }
    return actions;
}

int JointActionSpace::agent_action(int joint, int agent) const {
    for (std::size_t i = sizes_.size(); i-- > 0;) {
        const int digit = joint % sizes_[i];
        if (static_cast<int>(i) == agent) return digit;
        joint /= sizes_[i];
    }
    throw std::out_of_range("JointActionSpace::agent_action: bad agent index");
}

int JointActionSpace::complement_of(int joint, int agent) const {
    const std::vector<int> actions = decode(joint);
    int idx = 0;
    for (std::size_t i = 0; i < sizes_.size(); ++i) {
        if (static_cast<int>(i) == agent) continue;
        idx = idx * sizes_[i] + actions[i];
    }
    return idx;
}

int JointActionSpace::compose(int agent, int own_action, int complement) const {
    std::vector<int> actions(sizes_.size());
    for (std::size_t i = sizes_.size(); i-- > 0;) {
        if (static_cast<int>(i) == agent) continue;
        actions[i] = complement % sizes_[i];
        complement /= sizes_[i];
    }
    actions[agent] = own_action;
    return encode(actions);
}

bool DecPomdp::identity_observations() const {
    for (int i = 0; i < num_agents; ++i) {
        if (obs_per_agent[i] != num_states) return false;
        for (int s = 0; s < num_states; ++s) {
            for (int o = 0; o < num_states; ++o) {
                const double expected = (o == s) ? 1.0 : 0.0;
                if (observation[i][s][o] != expected) return false;
            }
        }
    }
    return true;
}

std::string ValidationReport::summary() const {
    if (ok()) return "ok";
    std::ostringstream os;
    for (const auto& issue : issues) {
        os << issue.what;
        if (issue.index >= 0) os << " [index " << issue.index << "]";
        os << "; ";
    }
    return os.str();
}

namespace {

void check_distribution_rows(const std::vector<Vec>& rows, const std::string& name,
                             ValidationReport& report) {
    for (std::size_t r = 0; r < rows.size(); ++r) {
        double sum = 0.0;
        for (double p : rows[r]) {
            if (p < 0.0 || p > 1.0 || !std::isfinite(p)) {
                report.issues.push_back({name + " entry outside [0,1]", static_cast<long>(r)});
                break;
            }
            sum += p;
        }
        if (std::abs(sum - 1.0) > kRowSumTol) {
            report.issues.push_back({name + " row does not sum to 1", static_cast<long>(r)});
        }
    }
}

}  // namespace

ValidationReport validate_model(const DecPomdp& model) {
    ValidationReport report;
    const int n = model.num_agents;
    const int S = model.num_states;
    if (n < 1) report.issues.push_back({"num_agents < 1", -1});
    if (S < 1) report.issues.push_back({"num_states < 1", -1});
    if (static_cast<int>(model.actions_per_agent.size()) != n)
        report.issues.push_back({"actions_per_agent size mismatch", -1});
    if (model.discount < 0.0 || model.discount >= 1.0)
        report.issues.push_back({"discount outside [0,1)", -1});
    if (model.horizon < 1) report.issues.push_back({"horizon < 1", -1});
    if (!report.ok()) return report;

    const JointActionSpace joint = model.joint();
    const int A = joint.num_joint();

    if (static_cast<int>(model.transition.size()) != S) {
        report.issues.push_back({"transition table has wrong state count", -1});
        return report;
    }
    for (int s = 0; s < S; ++s) {
        if (static_cast<int>(model.transition[s].size()) != A) {
            report.issues.push_back({"transition table has wrong action count", s});
            return report;
        }
        check_distribution_rows(model.transition[s], "transition(s=" + std::to_string(s) + ")",
                                report);
    }

    if (static_cast<int>(model.reward.size()) != S) {
        report.issues.push_back({"reward table has wrong state count", -1});
        return report;
    }
    for (int s = 0; s < S; ++s) {
        for (int a = 0; a < A; ++a) {
            const double r = model.reward[s][a];
            if (!std::isfinite(r) || std::abs(r) > model.reward_bound) {
                report.issues.push_back(
                    {"reward exceeds reward_bound at state " + std::to_string(s),
                     static_cast<long>(a)});
            }
        }
    }

    if (static_cast<int>(model.observation.size()) != n ||
        static_cast<int>(model.obs_per_agent.size()) != n) {
        report.issues.push_back({"observation table has wrong agent count", -1});
        return report;
    }
    for (int i = 0; i < n; ++i) {
        check_distribution_rows(model.observation[i], "observation(agent=" + std::to_string(i) + ")",
                                report);
    }

    check_distribution_rows({model.initial_dist}, "initial_dist", report);
    return report;
}

ValidationReport validate_policy(const DecPomdp& model, const TabularPolicy& policy) {
    ValidationReport report;
    if (policy.num_agents() != model.num_agents) {
        report.issues.push_back({"policy agent count mismatch", -1});
        return report;
    }
    for (int i = 0; i < model.num_agents; ++i) {
        if (static_cast<int>(policy.per_agent[i].size()) != model.obs_per_agent[i]) {
            report.issues.push_back({"policy observation count mismatch for agent", i});
            continue;
        }
        check_distribution_rows(policy.per_agent[i], "policy(agent=" + std::to_string(i) + ")",
                                report);
        for (std::size_t o = 0; o < policy.per_agent[i].size(); ++o) {
            if (static_cast<int>(policy.per_agent[i][o].size()) != model.actions_per_agent[i]) {
                report.issues.push_back({"policy action count mismatch for agent", i});
                break;
            }
            if (policy.full_support) {
                for (double p : policy.per_agent[i][o]) {
                    if (p <= 0.0) {
                        report.issues.push_back(
                            {"full-support policy has zero probability for agent", i});
                        break;
                    }
                }
            }
        }
    }
    return report;
}

std::vector<std::vector<Vec>> state_action_marginals(const DecPomdp& model,
                                                     const TabularPolicy& policy) {
    std::vector<std::vector<Vec>> marg(model.num_agents);
    for (int i = 0; i < model.num_agents; ++i) {
        marg[i].assign(model.num_states, Vec(model.actions_per_agent[i], 0.0));
        for (int s = 0; s < model.num_states; ++s) {
            for (int o = 0; o < model.obs_per_agent[i]; ++o) {
                const double po = model.observation[i][s][o];
                if (po == 0.0) continue;
                for (int a = 0; a < model.actions_per_agent[i]; ++a) {
                    marg[i][s][a] += po * policy.prob(i, o, a);
                }
            }
        }
    }
    return marg;
}

TabularPolicy uniform_policy(const DecPomdp& model) {
    TabularPolicy policy;
    policy.full_support = true;
    policy.per_agent.resize(model.num_agents);
    for (int i = 0; i < model.num_agents; ++i) {
        const int A = model.actions_per_agent[i];
        policy.per_agent[i].assign(model.obs_per_agent[i], Vec(A, 1.0 / A));
    }
    return policy;
}

DecPomdp make_identity_observation_model(int num_agents, int num_states,
                                         std::vector<int> actions_per_agent) {
    DecPomdp model;
    model.num_agents = num_agents;
    model.num_states = num_states;
    model.actions_per_agent = std::move(actions_per_agent);
    model.obs_per_agent.assign(num_agents, num_states);
    const int A = model.joint().num_joint();
    model.transition.assign(num_states, std::vector<Vec>(A, Vec(num_states, 0.0)));
    model.reward.assign(num_states, Vec(A, 0.0));
    model.observation.resize(num_agents);
    for (int i = 0; i < num_agents; ++i) {
        model.observation[i].assign(num_states, Vec(num_states, 0.0));
        for (int s = 0; s < num_states; ++s) model.observation[i][s][s] = 1.0;
    }
    model.initial_dist.assign(num_states, 0.0);
    model.initial_dist[0] = 1.0;
    return model;
}

}  // namespace gpae
