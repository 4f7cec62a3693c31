#include "gpae/rollout.hpp"

#include <cmath>
#include <functional>

namespace gpae {

namespace {

int sample_row(const Vec& probs, Rng& rng, const char* what) {
    double total = 0.0;
    for (double p : probs) total += p;
    if (total <= 0.0) {
        throw std::runtime_error(std::string("model corruption: all-zero ") + what + " row");
    }
    return rng.categorical(probs);
}

Transition make_step(const DecPomdp& model, const TabularPolicy& behavior, Rng& rng, int state) {
    Transition tr;
    tr.state = state;
    tr.observations.resize(model.num_agents);
    tr.actions.resize(model.num_agents);
    tr.behavior_logp.resize(model.num_agents);
    for (int i = 0; i < model.num_agents; ++i) {
        tr.observations[i] = sample_row(model.observation[i][state], rng, "observation");
        const Vec& probs = behavior.probs(i, tr.observations[i]);
        tr.actions[i] = sample_row(probs, rng, "policy");
        const double p = probs[tr.actions[i]];
        tr.behavior_logp[i] = std::log(p);
    }
    return tr;
}

}  // namespace

Trajectory rollout(const DecPomdp& model, const TabularPolicy& behavior, Rng& rng, int horizon) {
    if (horizon > model.horizon) {
        throw std::invalid_argument("rollout: horizon exceeds model horizon");
    }
    Trajectory traj;
    traj.steps.reserve(horizon);
    const JointActionSpace joint = model.joint();
    int state = sample_row(model.initial_dist, rng, "initial distribution");
    for (int t = 0; t < horizon; ++t) {
        Transition tr = make_step(model, behavior, rng, state);
        const int a = joint.encode(tr.actions);
        tr.reward = model.reward[state][a];
        traj.steps.push_back(tr);
        state = sample_row(model.transition[state][a], rng, "transition");
    }
    traj.terminal = horizon == model.horizon;
    return traj;
}

Trajectory rollout_from_root(const DecPomdp& model, const TabularPolicy& behavior, Rng& rng,
                             int horizon, int root_state, int root_joint_action) {
    Trajectory traj;
    traj.steps.reserve(horizon);
    const JointActionSpace joint = model.joint();
    const std::vector<int> root_actions = joint.decode(root_joint_action);

    Transition first;
    first.state = root_state;
    first.observations.resize(model.num_agents);
    first.actions = root_actions;
    first.behavior_logp.resize(model.num_agents);
    for (int i = 0; i < model.num_agents; ++i) {
        first.observations[i] = sample_row(model.observation[i][root_state], rng, "observation");
        const double p = behavior.prob(i, first.observations[i], root_actions[i]);
        first.behavior_logp[i] = std::log(p);
    }
    first.reward = model.reward[root_state][root_joint_action];
    traj.steps.push_back(first);

    int state = sample_row(model.transition[root_state][root_joint_action], rng, "transition");
    for (int t = 1; t < horizon; ++t) {
        Transition tr = make_step(model, behavior, rng, state);
        const int a = joint.encode(tr.actions);
        tr.reward = model.reward[state][a];
        traj.steps.push_back(tr);
        state = sample_row(model.transition[state][a], rng, "transition");
    }
    traj.terminal = horizon == model.horizon;
    return traj;
}

namespace {

// Depth-first enumeration over (observations, actions, next state) branches.
// The per-step observation combinations are expanded recursively per agent.
class Enumerator {
public:
    Enumerator(const DecPomdp& model, const TabularPolicy& policy, int horizon, long budget)
        : model_(model), policy_(policy), joint_(model.joint()), horizon_(horizon),
          budget_(budget) {}

    std::vector<WeightedTrajectory> from_initial() {
        for (int s = 0; s < model_.num_states; ++s) {
            const double p0 = model_.initial_dist[s];
            if (p0 > 0.0) expand_step(s, 0, p0);
        }
        return std::move(out_);
    }

    std::vector<WeightedTrajectory> from_root(int root_state, int root_joint_action) {
        std::vector<int> obs(model_.num_agents, 0);
        expand_observations(root_state, 0, 1.0, obs,
                            [&](double obs_prob, const std::vector<int>& o) {
                                emit_forced_action(root_state, root_joint_action, o, obs_prob);
                            });
        return std::move(out_);
    }

private:
    template <typename Fn>
    void expand_observations(int state, int agent, double partial, std::vector<int>& obs,
                             const Fn& emit) {
        if (agent == model_.num_agents) {
            emit(partial, obs);
            return;
        }
        for (int o = 0; o < model_.obs_per_agent[agent]; ++o) {
            const double po = model_.observation[agent][state][o];
            if (po == 0.0) continue;
            obs[agent] = o;
            expand_observations(state, agent + 1, partial * po, obs, emit);
        }
    }

    void expand_step(int state, int depth, double prob) {
        std::vector<int> obs(model_.num_agents, 0);
        expand_observations(state, 0, 1.0, obs,
                            [&](double obs_prob, const std::vector<int>& o) {
                                expand_actions(state, depth, prob * obs_prob, o);
                            });
    }

    void expand_actions(int state, int depth, double prob, const std::vector<int>& obs) {
        const int A = joint_.num_joint();
        for (int a = 0; a < A; ++a) {
            const std::vector<int> actions = joint_.decode(a);
            double pa = 1.0;
            for (int i = 0; i < model_.num_agents; ++i) {
                pa *= policy_.prob(i, obs[i], actions[i]);
                if (pa == 0.0) break;
            }
            if (pa == 0.0) continue;
            push_transition(state, obs, actions, a);
            descend(state, a, depth, prob * pa);
            stack_.pop_back();
        }
    }

    void emit_forced_action(int state, int joint_action, const std::vector<int>& obs,
                            double prob) {
        const std::vector<int> actions = joint_.decode(joint_action);
        push_transition(state, obs, actions, joint_action);
        descend(state, joint_action, 0, prob);
        stack_.pop_back();
    }

    void push_transition(int state, const std::vector<int>& obs, const std::vector<int>& actions,
                         int joint_action) {
        Transition tr;
        tr.state = state;
        tr.observations = obs;
        tr.actions = actions;
        tr.reward = model_.reward[state][joint_action];
        tr.behavior_logp.resize(model_.num_agents);
        for (int i = 0; i < model_.num_agents; ++i) {
            tr.behavior_logp[i] = std::log(policy_.prob(i, obs[i], actions[i]));
        }
        stack_.push_back(tr);
    }

    void descend(int state, int joint_action, int depth, double prob) {
        if (depth + 1 == horizon_) {
            if (static_cast<long>(out_.size()) >= budget_) {
                throw EnumerationBudgetExceeded(
                    "enumerate_trajectories: leaf budget " + std::to_string(budget_) +
                    " exceeded");
            }
            WeightedTrajectory wt;
            wt.traj.steps = stack_;
            wt.traj.terminal = horizon_ == model_.horizon;
            wt.probability = prob;
            out_.push_back(std::move(wt));
            return;
        }
        for (int sp = 0; sp < model_.num_states; ++sp) {
            const double pt = model_.transition[state][joint_action][sp];
            if (pt > 0.0) expand_step(sp, depth + 1, prob * pt);
        }
    }

    const DecPomdp& model_;
    const TabularPolicy& policy_;
    JointActionSpace joint_;
    int horizon_;
    long budget_;
    std::vector<Transition> stack_;
    std::vector<WeightedTrajectory> out_;
};

}  // namespace

std::vector<WeightedTrajectory> enumerate_trajectories(const DecPomdp& model,
                                                       const TabularPolicy& policy, int horizon,
                                                       long budget) {
    Enumerator e(model, policy, horizon, budget);
    return e.from_initial();
}

std::vector<WeightedTrajectory> enumerate_from_root(const DecPomdp& model,
                                                    const TabularPolicy& policy, int horizon,
                                                    int root_state, int root_joint_action,
                                                    long budget) {
    Enumerator e(model, policy, horizon, budget);
    return e.from_root(root_state, root_joint_action);
}

double expected_return(const DecPomdp& model, const TabularPolicy& policy, bool discounted) {
    const auto marg = state_action_marginals(model, policy);
    const JointActionSpace joint = model.joint();
    const int S = model.num_states;
    const int A = joint.num_joint();
    const double gamma = discounted ? model.discount : 1.0;

    Vec value(S, 0.0);
    for (int t = model.horizon - 1; t >= 0; --t) {
        Vec next(S, 0.0);
        for (int s = 0; s < S; ++s) {
            double v = 0.0;
            for (int a = 0; a < A; ++a) {
                const std::vector<int> actions = joint.decode(a);
                double pa = 1.0;
                for (int i = 0; i < model.num_agents; ++i) pa *= marg[i][s][actions[i]];
                if (pa == 0.0) continue;
                double q = model.reward[s][a];
                for (int sp = 0; sp < S; ++sp) {
                    const double pt = model.transition[s][a][sp];
                    if (pt > 0.0) q += gamma * pt * value[sp];
                }
                v += pa * q;
            }
            next[s] = v;
        }
        value = next;
    }
    double j = 0.0;
    for (int s = 0; s < S; ++s) j += model.initial_dist[s] * value[s];
    return j;
}

}  // namespace gpae
