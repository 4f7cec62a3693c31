#pragma once

#include <deque>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "gpae/approx/adam.hpp"
#include "gpae/approx/losses.hpp"
#include "gpae/approx/nets.hpp"
#include "gpae/builtins.hpp"
#include "gpae/estimators.hpp"

#include "json.hpp"

namespace gpae {

enum class EstimatorKind { GpaeOff, GpaeOn, Gae, Coma, Dae };

std::string to_string(EstimatorKind kind);
EstimatorKind estimator_from_string(const std::string& name);

struct TrainConfig {
    std::string env = "chain_gather";
    nlohmann::json env_params = nlohmann::json::object();
    EstimatorKind estimator = EstimatorKind::GpaeOff;
    TraceScheme scheme = TraceScheme::DoubleTruncation;
    double gamma = 0.99;
    double lambda = 0.95;
    double eta = 1.05;
    double clip_eps = 0.2;
    double entropy_coef = 0.01;
    int update_epochs = 5;
    double learning_rate = 5e-4;
    bool anneal_lr = true;
    int rollout_steps = 128;  // per environment per iteration
    int num_envs = 8;
    long total_timesteps = 0;
    int reuse_batches = 4;  // window length M; on-policy modes force 1
    double dae_beta = 0.5;
    std::uint64_t seed = 1;
    bool normalize_advantages = true;
    int target_sync_every = 1;  // iterations between hard target copies
    int hidden = 128;
    int minibatch = 0;  // 0: whole window as a single batch
    bool single_thread = false;
    bool anomaly_enabled = false;  // wraps the behavior policy during collection
    int anomaly_agent = 0;
    double anomaly_probability = 0.05;
    int anomaly_forced_action = 0;

    nlohmann::json to_json() const;
    static TrainConfig from_json(const nlohmann::json& j);
};

struct MetricsRecord {
    long iteration = 0;
    long env_steps = 0;
    double mean_return = 0.0;
    double success_rate = std::nan("");
    double actor_loss = 0.0;
    double critic_loss = 0.0;
    double entropy = 0.0;
    double delta_a = std::nan("");
    double delta_c = std::nan("");
    double wall_clock_s = 0.0;
};

struct CollectionBatch {
    long policy_version = 0;
    std::vector<Trajectory> trajectories;
};

class ReplayWindow {
public:
    explicit ReplayWindow(int capacity) : capacity_(capacity) {}
    void push(CollectionBatch batch);
    const std::deque<CollectionBatch>& batches() const { return batches_; }
    int capacity() const { return capacity_; }
    long total_steps() const;

private:
    int capacity_ = 1;
    std::deque<CollectionBatch> batches_;
};

struct EvalResult {
    int episodes = 0;
    double mean_return = std::nan("");
    double success_rate = std::nan("");
    bool empty() const { return episodes == 0; }
};

// Critic view over the learned approximators; which capabilities exist
// depends on the estimator the nets were trained for.
class LearnedCritic : public CriticView {
public:
    LearnedCritic(EstimatorKind kind, const DecPomdp& model, const approx::PolicyNet* policy,
                  const approx::CriticNet* eq_net, const approx::ValueMlp* v_net,
                  const approx::ValueMlp* q_net, const approx::CriticNet* reward_net,
                  bool eq_from_target);

    double eq(const Trajectory& traj, int t, int agent) const override;
    double state_value(const Trajectory& traj, int t) const override;
    double joint_q(const Trajectory& traj, int t) const override;
    double joint_q_substitute(const Trajectory& traj, int t, int agent,
                              int own_action) const override;
    double expected_reward(const Trajectory& traj, int t, int agent) const override;
    Vec own_action_probs(const Trajectory& traj, int t, int agent) const override;

    Vec joint_action_features(const Trajectory& traj, int t, int substitute_agent,
                              int substitute_action) const;

private:
    EstimatorKind kind_;
    const DecPomdp* model_;
    JointActionSpace joint_;
    const approx::PolicyNet* policy_;
    const approx::CriticNet* eq_net_;
    const approx::ValueMlp* v_net_;
    const approx::ValueMlp* q_net_;
    const approx::CriticNet* reward_net_;
    bool eq_from_target_ = false;
};

class Trainer {
public:
    explicit Trainer(TrainConfig cfg);

    // Runs the full loop; emits one record per iteration through the sink.
    void run(const std::function<void(const MetricsRecord&)>& sink);

    // Single pieces, exposed for tests and experiments.
    CollectionBatch collect(long version);
    void push_batch(CollectionBatch batch) { window_.push(std::move(batch)); }
    EvalResult evaluate(int episodes, Rng& rng, bool greedy) const;
    EvalResult evaluate_with_anomaly(int episodes, Rng& rng) const;
    // Episodes sampled under the current behavior policy (anomaly mixture
    // included), with stored behavior log-probs; does not advance training
    // state.
    std::vector<Trajectory> sample_behavior_episodes(int count, Rng& rng) const;

    // Advantage series for one trajectory under the current nets, through
    // the production estimator path for this configuration.
    AdvantageSeries estimate_advantages(const Trajectory& traj) const;

    const TrainConfig& config() const { return cfg_; }
    const BuiltinBundle& bundle() const { return bundle_; }
    const ReplayWindow& window() const { return window_; }
    long env_steps() const { return env_steps_; }
    const approx::PolicyNet& policy() const { return policy_; }
    approx::CriticNet& eq_net() { return eq_net_; }
    std::optional<AnomalyConfig> anomaly_config() const;

    // Sampled behavior distribution at an observation, including the anomaly
    // mixture when enabled.
    Vec behavior_probs(int agent, int obs) const;

    nlohmann::json checkpoint() const;

    // Values consumed by the most recent update, for invariant checks.
    const std::vector<AdvantageSeries>& last_advantages() const { return last_advantages_; }

private:
    struct WindowTargets {
        std::vector<AdvantageSeries> advantages;            // per trajectory
        std::vector<std::vector<Vec>> eq_targets;           // [traj][agent][t]
        std::vector<std::vector<Vec>> own_probs;            // [traj][t] flattened per agent below
        std::vector<approx::CriticSample> critic_samples;   // GPAE / reward model
        std::vector<approx::ValueSample> value_samples;     // V or Q heads
        std::vector<approx::ActorSample> actor_samples;
    };

    WindowTargets compute_targets();
    double critic_update(WindowTargets& targets);
    double actor_update(WindowTargets& targets, approx::ActorLossStats* stats);
    Trajectory sample_episode(Rng& rng) const;
    LearnedCritic critic_view(bool eq_from_target) const;

    TrainConfig cfg_;
    BuiltinBundle bundle_;
    JointActionSpace joint_;
    approx::PolicyNet policy_;
    approx::CriticNet eq_net_;      // GPAE estimators
    approx::ValueMlp v_net_;        // GAE / DAE
    approx::ValueMlp q_net_;        // COMA
    approx::CriticNet reward_net_;  // DAE expected-reward model
    approx::Adam actor_opt_;
    approx::Adam critic_opt_;
    approx::Adam reward_opt_;
    bool reward_opt_has_state_ = false;
    ReplayWindow window_;
    Rng root_rng_;
    std::vector<Rng> env_rngs_;
    long env_steps_ = 0;
    long iteration_ = 0;
    int episode_len_ = 1;
    std::vector<AdvantageSeries> last_advantages_;
};

}  // namespace gpae
