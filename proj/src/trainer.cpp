#include "gpae/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>

namespace gpae {

std::string to_string(EstimatorKind kind) {
    switch (kind) {
        case EstimatorKind::GpaeOff: return "gpae_off";
        case EstimatorKind::GpaeOn: return "gpae_on";
        case EstimatorKind::Gae: return "gae";
        case EstimatorKind::Coma: return "coma";
        case EstimatorKind::Dae: return "dae";
    }
    return "?";
}

EstimatorKind estimator_from_string(const std::string& name) {
    if (name == "gpae_off") return EstimatorKind::GpaeOff;
    if (name == "gpae_on") return EstimatorKind::GpaeOn;
    if (name == "gae") return EstimatorKind::Gae;
    if (name == "coma") return EstimatorKind::Coma;
    if (name == "dae") return EstimatorKind::Dae;
    throw std::invalid_argument("unknown estimator '" + name + "'");
}

nlohmann::json TrainConfig::to_json() const {
    nlohmann::json j;
    j["env"] = env;
    j["env_params"] = env_params;
    j["estimator"] = to_string(estimator);
    j["scheme"] = gpae::to_string(scheme);
    j["gamma"] = gamma;
    j["lambda"] = lambda;
    j["eta"] = eta;
    j["clip_eps"] = clip_eps;
    j["entropy_coef"] = entropy_coef;
    j["update_epochs"] = update_epochs;
    j["learning_rate"] = learning_rate;
    j["anneal_lr"] = anneal_lr;
    j["rollout_steps"] = rollout_steps;
    j["num_envs"] = num_envs;
    j["total_timesteps"] = total_timesteps;
    j["reuse_batches"] = reuse_batches;
    j["dae_beta"] = dae_beta;
    j["seed"] = seed;
    j["normalize_advantages"] = normalize_advantages;
    j["target_sync_every"] = target_sync_every;
    j["hidden"] = hidden;
    j["minibatch"] = minibatch;
    j["single_thread"] = single_thread;
    j["anomaly_enabled"] = anomaly_enabled;
    j["anomaly_agent"] = anomaly_agent;
    j["anomaly_probability"] = anomaly_probability;
    j["anomaly_forced_action"] = anomaly_forced_action;
    return j;
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
    TrainConfig cfg;
    cfg.env = j.value("env", cfg.env);
    cfg.env_params = j.value("env_params", cfg.env_params);
    if (j.contains("estimator")) cfg.estimator = estimator_from_string(j.at("estimator"));
    if (j.contains("scheme")) cfg.scheme = trace_scheme_from_string(j.at("scheme"));
    cfg.gamma = j.value("gamma", cfg.gamma);
    cfg.lambda = j.value("lambda", cfg.lambda);
    cfg.eta = j.value("eta", cfg.eta);
    cfg.clip_eps = j.value("clip_eps", cfg.clip_eps);
    cfg.entropy_coef = j.value("entropy_coef", cfg.entropy_coef);
    cfg.update_epochs = j.value("update_epochs", cfg.update_epochs);
    cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
    cfg.anneal_lr = j.value("anneal_lr", cfg.anneal_lr);
    cfg.rollout_steps = j.value("rollout_steps", cfg.rollout_steps);
    cfg.num_envs = j.value("num_envs", cfg.num_envs);
    cfg.total_timesteps = j.value("total_timesteps", cfg.total_timesteps);
    cfg.reuse_batches = j.value("reuse_batches", cfg.reuse_batches);
    cfg.dae_beta = j.value("dae_beta", cfg.dae_beta);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.normalize_advantages = j.value("normalize_advantages", cfg.normalize_advantages);
    cfg.target_sync_every = j.value("target_sync_every", cfg.target_sync_every);
    cfg.hidden = j.value("hidden", cfg.hidden);
    cfg.minibatch = j.value("minibatch", cfg.minibatch);
    cfg.single_thread = j.value("single_thread", cfg.single_thread);
    cfg.anomaly_enabled = j.value("anomaly_enabled", cfg.anomaly_enabled);
    cfg.anomaly_agent = j.value("anomaly_agent", cfg.anomaly_agent);
    cfg.anomaly_probability = j.value("anomaly_probability", cfg.anomaly_probability);
    cfg.anomaly_forced_action = j.value("anomaly_forced_action", cfg.anomaly_forced_action);
    if (cfg.gamma < 0.0 || cfg.gamma >= 1.0) throw std::invalid_argument("config field 'gamma' outside [0,1)");
    if (cfg.lambda <= 0.0 || cfg.lambda > 1.0) throw std::invalid_argument("config field 'lambda' outside (0,1]");
    if (cfg.clip_eps <= 0.0) throw std::invalid_argument("config field 'clip_eps' must be positive");
    if (cfg.reuse_batches < 1) throw std::invalid_argument("config field 'reuse_batches' must be >= 1");
    return cfg;
}

void ReplayWindow::push(CollectionBatch batch) {
    batches_.push_back(std::move(batch));
    while (static_cast<int>(batches_.size()) > capacity_) batches_.pop_front();
}

long ReplayWindow::total_steps() const {
    long steps = 0;
    for (const auto& b : batches_) {
        for (const auto& t : b.trajectories) steps += t.length();
    }
    return steps;
}

LearnedCritic::LearnedCritic(EstimatorKind kind, const DecPomdp& model,
                             const approx::PolicyNet* policy, const approx::CriticNet* eq_net,
                             const approx::ValueMlp* v_net, const approx::ValueMlp* q_net,
                             const approx::CriticNet* reward_net, bool eq_from_target)
    : kind_(kind), model_(&model), joint_(model.joint()), policy_(policy), eq_net_(eq_net),
      v_net_(v_net), q_net_(q_net), reward_net_(reward_net), eq_from_target_(eq_from_target) {}

double LearnedCritic::eq(const Trajectory& traj, int t, int agent) const {
    if (t >= traj.length()) return 0.0;
    const Transition& tr = traj.steps[t];
    const Vec probs = policy_->forward(agent, tr.observations[agent]);
    return eq_net_->forward(eq_net_->state_features(agent, tr.state),
                            eq_net_->complement_features(agent, tr.actions),
                            eq_net_->pad_probs(probs), nullptr, eq_from_target_);
}

double LearnedCritic::state_value(const Trajectory& traj, int t) const {
    if (t >= traj.length()) return 0.0;
    Vec x(model_->num_states, 0.0);
    x[traj.steps[t].state] = 1.0;
    return v_net_->forward(x);
}

Vec LearnedCritic::joint_action_features(const Trajectory& traj, int t, int substitute_agent,
                                         int substitute_action) const {
    const Transition& tr = traj.steps[t];
    int max_actions = 0;
    for (int i = 0; i < model_->num_agents; ++i) {
        max_actions = std::max(max_actions, model_->actions_per_agent[i]);
    }
    Vec x(model_->num_states + model_->num_agents * max_actions, 0.0);
    x[tr.state] = 1.0;
    for (int i = 0; i < model_->num_agents; ++i) {
        const int action = i == substitute_agent ? substitute_action : tr.actions[i];
        x[model_->num_states + i * max_actions + action] = 1.0;
    }
    return x;
}

double LearnedCritic::joint_q(const Trajectory& traj, int t) const {
    if (t >= traj.length()) return 0.0;
    return q_net_->forward(joint_action_features(traj, t, -1, -1));
}

double LearnedCritic::joint_q_substitute(const Trajectory& traj, int t, int agent,
                                         int own_action) const {
    if (t >= traj.length()) return 0.0;
    return q_net_->forward(joint_action_features(traj, t, agent, own_action));
}

double LearnedCritic::expected_reward(const Trajectory& traj, int t, int agent) const {
    if (t >= traj.length()) return 0.0;
    const Transition& tr = traj.steps[t];
    const Vec probs = policy_->forward(agent, tr.observations[agent]);
    return reward_net_->forward(reward_net_->state_features(agent, tr.state),
                                reward_net_->complement_features(agent, tr.actions),
                                reward_net_->pad_probs(probs));
}

Vec LearnedCritic::own_action_probs(const Trajectory& traj, int t, int agent) const {
    return policy_->forward(agent, traj.steps[t].observations[agent]);
}

namespace {

int max_action_count(const DecPomdp& model) {
    int m = 0;
    for (int i = 0; i < model.num_agents; ++i) m = std::max(m, model.actions_per_agent[i]);
    return m;
}

}  // namespace

Trainer::Trainer(TrainConfig cfg)
    : cfg_(std::move(cfg)), bundle_(make_builtin(cfg_.env, cfg_.env_params)),
      joint_(bundle_.model.joint()), window_(cfg_.reuse_batches), root_rng_(cfg_.seed) {
    const DecPomdp& model = bundle_.model;
    episode_len_ = model.horizon;
    Rng init_rng = root_rng_.spawn(0xa11c);
    policy_ = approx::PolicyNet(model, cfg_.hidden, init_rng);
    eq_net_ = approx::CriticNet(model, cfg_.hidden, init_rng);
    v_net_ = approx::ValueMlp(model.num_states, cfg_.hidden, init_rng);
    q_net_ = approx::ValueMlp(model.num_states + model.num_agents * max_action_count(model),
                              cfg_.hidden, init_rng);
    reward_net_ = approx::CriticNet(model, cfg_.hidden, init_rng);

    const int episodes_per_env = std::max(1, (cfg_.rollout_steps + episode_len_ - 1) / episode_len_);
    const long steps_per_iter =
        static_cast<long>(cfg_.num_envs) * episodes_per_env * episode_len_;
    const long planned_iters =
        cfg_.total_timesteps > 0 ? (cfg_.total_timesteps + steps_per_iter - 1) / steps_per_iter : 0;
    const int chunks = cfg_.minibatch > 0 ? std::max(1, cfg_.reuse_batches) : 1;

    approx::Adam::Options opt;
    opt.lr = cfg_.learning_rate;
    opt.anneal = cfg_.anneal_lr;
    opt.total_steps = std::max<long>(1, planned_iters * cfg_.update_epochs * chunks);
    actor_opt_ = approx::Adam(opt);
    critic_opt_ = approx::Adam(opt);

    for (int e = 0; e < cfg_.num_envs; ++e) env_rngs_.push_back(root_rng_.spawn(1000 + e));

    if (cfg_.anomaly_enabled) {
        if (cfg_.anomaly_agent < 0 || cfg_.anomaly_agent >= model.num_agents ||
            cfg_.anomaly_forced_action < 0 ||
            cfg_.anomaly_forced_action >= model.actions_per_agent[cfg_.anomaly_agent]) {
            throw std::invalid_argument("anomaly configuration invalid for this model");
        }
    }
}

std::optional<AnomalyConfig> Trainer::anomaly_config() const {
    if (!cfg_.anomaly_enabled) return std::nullopt;
    AnomalyConfig a;
    a.agent_index = cfg_.anomaly_agent;
    a.probability = cfg_.anomaly_probability;
    a.forced_action = cfg_.anomaly_forced_action;
    return a;
}

Vec Trainer::behavior_probs(int agent, int obs) const {
    Vec probs = policy_.forward(agent, obs);
    if (cfg_.anomaly_enabled && agent == cfg_.anomaly_agent) {
        const double p = cfg_.anomaly_probability;
        for (std::size_t a = 0; a < probs.size(); ++a) {
            probs[a] = (1.0 - p) * probs[a] +
                       (static_cast<int>(a) == cfg_.anomaly_forced_action ? p : 0.0);
        }
    }
    return probs;
}

Trajectory Trainer::sample_episode(Rng& rng) const {
    const DecPomdp& model = bundle_.model;
    Trajectory traj;
    traj.steps.reserve(episode_len_);
    int state = rng.categorical(model.initial_dist);
    for (int t = 0; t < episode_len_; ++t) {
        Transition tr;
        tr.state = state;
        tr.observations.resize(model.num_agents);
        tr.actions.resize(model.num_agents);
        tr.behavior_logp.resize(model.num_agents);
        for (int i = 0; i < model.num_agents; ++i) {
            tr.observations[i] = rng.categorical(model.observation[i][state]);
            const Vec probs = behavior_probs(i, tr.observations[i]);
            tr.actions[i] = rng.categorical(probs);
            tr.behavior_logp[i] = std::log(probs[tr.actions[i]]);
        }
        const int a = joint_.encode(tr.actions);
        tr.reward = model.reward[state][a];
        traj.steps.push_back(tr);
        state = rng.categorical(model.transition[state][a]);
    }
    traj.terminal = true;
    return traj;
}

std::vector<Trajectory> Trainer::sample_behavior_episodes(int count, Rng& rng) const {
    std::vector<Trajectory> out;
    out.reserve(count);
    for (int k = 0; k < count; ++k) out.push_back(sample_episode(rng));
    return out;
}

CollectionBatch Trainer::collect(long version) {
    CollectionBatch batch;
    batch.policy_version = version;
    for (int e = 0; e < cfg_.num_envs; ++e) {
        int collected = 0;
        while (collected < cfg_.rollout_steps) {
            batch.trajectories.push_back(sample_episode(env_rngs_[e]));
            collected += episode_len_;
            env_steps_ += episode_len_;
        }
    }
    return batch;
}

LearnedCritic Trainer::critic_view(bool eq_from_target) const {
    return LearnedCritic(cfg_.estimator, bundle_.model, &policy_, &eq_net_, &v_net_, &q_net_,
                         &reward_net_, eq_from_target);
}

AdvantageSeries Trainer::estimate_advantages(const Trajectory& traj) const {
    switch (cfg_.estimator) {
        case EstimatorKind::GpaeOff:
        case EstimatorKind::GpaeOn: {
            const LearnedCritic critic = critic_view(true);
            const auto deltas = per_agent_td_errors(traj, critic, cfg_.gamma);
            const IsrSeries isr = compute_isr(traj, [this](int agent, int obs, int action) {
                return policy_.forward(agent, obs)[action];
            });
            const TraceScheme scheme = cfg_.estimator == EstimatorKind::GpaeOff
                                           ? cfg_.scheme
                                           : TraceScheme::LambdaOnly;
            const TraceWeights traces = truncate(isr, scheme, cfg_.lambda, cfg_.eta);
            return gpae_advantages(deltas, traces, cfg_.gamma);
        }
        case EstimatorKind::Gae:
            return gae(traj, critic_view(false), cfg_.gamma, cfg_.lambda,
                       bundle_.model.num_agents);
        case EstimatorKind::Coma:
            return coma(traj, critic_view(false));
        case EstimatorKind::Dae:
            return dae(traj, critic_view(false), cfg_.gamma, cfg_.lambda, cfg_.dae_beta);
    }
    throw std::logic_error("estimate_advantages: unreachable");
}

Trainer::WindowTargets Trainer::compute_targets() {
    WindowTargets targets;
    const DecPomdp& model = bundle_.model;
    const LearnedCritic target_critic = critic_view(true);
    const LearnedCritic main_critic = critic_view(false);

    for (const auto& batch : window_.batches()) {
        for (const Trajectory& traj : batch.trajectories) {
            AdvantageSeries adv = estimate_advantages(traj);
            const int T = traj.length();
            std::vector<Vec> eq_targ(model.num_agents, Vec(T, 0.0));

            for (int t = 0; t < T; ++t) {
                const Transition& tr = traj.steps[t];
                for (int i = 0; i < model.num_agents; ++i) {
                    const Vec probs = policy_.forward(i, tr.observations[i]);
                    const double logp_old = tr.behavior_logp[i];
                    const double rho = probs[tr.actions[i]] / std::exp(logp_old);

                    approx::ActorSample actor;
                    actor.agent = i;
                    actor.obs = tr.observations[i];
                    actor.action = tr.actions[i];
                    actor.advantage = adv.values[i][t];
                    actor.logp_old = logp_old;
                    actor.rho_old = rho;  // current snapshot vs collection policy
                    targets.actor_samples.push_back(actor);

                    if (cfg_.estimator == EstimatorKind::GpaeOff ||
                        cfg_.estimator == EstimatorKind::GpaeOn) {
                        const double base = target_critic.eq(traj, t, i);
                        const double targ = base + std::min(1.0, rho) * adv.values[i][t];
                        eq_targ[i][t] = targ;
                        approx::CriticSample sample;
                        sample.state_feat = eq_net_.state_features(i, tr.state);
                        sample.comp_feat = eq_net_.complement_features(i, tr.actions);
                        sample.own_probs = eq_net_.pad_probs(probs);
                        sample.target = targ;
                        targets.critic_samples.push_back(sample);
                    } else if (cfg_.estimator == EstimatorKind::Dae) {
                        approx::CriticSample sample;
                        sample.state_feat = reward_net_.state_features(i, tr.state);
                        sample.comp_feat = reward_net_.complement_features(i, tr.actions);
                        sample.own_probs = reward_net_.pad_probs(probs);
                        sample.target = tr.reward;
                        targets.critic_samples.push_back(sample);
                    }
                }
                if (cfg_.estimator == EstimatorKind::Gae || cfg_.estimator == EstimatorKind::Dae) {
                    // Lambda-return regression target for the state-value head.
                    Vec x(model.num_states, 0.0);
                    x[tr.state] = 1.0;
                    double lambda_return;
                    if (cfg_.estimator == EstimatorKind::Gae) {
                        lambda_return = adv.values[0][t] + main_critic.state_value(traj, t);
                    } else {
                        // DAE advantages embed the reward correction; use a
                        // plain GAE pass for the V target instead.
                        const AdvantageSeries plain =
                            gae(traj, main_critic, cfg_.gamma, cfg_.lambda, 1);
                        lambda_return = plain.values[0][t] + main_critic.state_value(traj, t);
                    }
                    targets.value_samples.push_back({x, lambda_return});
                } else if (cfg_.estimator == EstimatorKind::Coma) {
                    // Monte-Carlo return-to-go regression for the joint-Q head.
                    double g = 0.0, w = 1.0;
                    for (int l = t; l < T; ++l) {
                        g += w * traj.steps[l].reward;
                        w *= cfg_.gamma;
                    }
                    targets.value_samples.push_back(
                        {main_critic.joint_action_features(traj, t, -1, -1), g});
                }
            }
            targets.eq_targets.push_back(std::move(eq_targ));
            targets.advantages.push_back(std::move(adv));
        }
    }
    return targets;
}

double Trainer::actor_update(WindowTargets& targets, approx::ActorLossStats* stats_out) {
    approx::ActorLossOptions opts;
    opts.clip_eps = cfg_.clip_eps;
    opts.entropy_coef = cfg_.entropy_coef;
    const auto& samples = targets.actor_samples;
    double loss = 0.0;
    const int chunk =
        cfg_.minibatch > 0 ? cfg_.minibatch : static_cast<int>(samples.size());
    for (std::size_t start = 0; start < samples.size();
         start += static_cast<std::size_t>(chunk)) {
        const std::size_t end = std::min(samples.size(), start + chunk);
        std::vector<approx::ActorSample> part(samples.begin() + start, samples.begin() + end);
        policy_.zero_grad();
        const approx::ActorLossStats stats = actor_loss(policy_, part, opts, true);
        std::string diag;
        if (!actor_opt_.step(policy_.param_blocks(), &diag)) {
            throw std::runtime_error("actor update rejected: " + diag);
        }
        loss += stats.loss * static_cast<double>(part.size());
        if (stats_out) {
            stats_out->entropy = stats.entropy;
            stats_out->objective = stats.objective;
        }
    }
    return samples.empty() ? 0.0 : loss / static_cast<double>(samples.size());
}

double Trainer::critic_update(WindowTargets& targets) {
    std::string diag;
    double loss = 0.0;
    switch (cfg_.estimator) {
        case EstimatorKind::GpaeOff:
        case EstimatorKind::GpaeOn: {
            eq_net_.zero_grad();
            loss = critic_loss(eq_net_, targets.critic_samples, true);
            if (!critic_opt_.step(eq_net_.param_blocks(), &diag)) {
                throw std::runtime_error("critic update rejected: " + diag);
            }
            break;
        }
        case EstimatorKind::Gae: {
            v_net_.zero_grad();
            loss = value_loss(v_net_, targets.value_samples, true);
            if (!critic_opt_.step(v_net_.param_blocks(), &diag)) {
                throw std::runtime_error("critic update rejected: " + diag);
            }
            break;
        }
        case EstimatorKind::Coma: {
            q_net_.zero_grad();
            loss = value_loss(q_net_, targets.value_samples, true);
            if (!critic_opt_.step(q_net_.param_blocks(), &diag)) {
                throw std::runtime_error("critic update rejected: " + diag);
            }
            break;
        }
        case EstimatorKind::Dae: {
            v_net_.zero_grad();
            loss = value_loss(v_net_, targets.value_samples, true);
            if (!critic_opt_.step(v_net_.param_blocks(), &diag)) {
                throw std::runtime_error("critic update rejected: " + diag);
            }
            reward_net_.zero_grad();
            const double rloss = critic_loss(reward_net_, targets.critic_samples, true);
            if (!reward_opt_has_state_) {
                approx::Adam::Options opt = critic_opt_.options();
                reward_opt_ = approx::Adam(opt);
                reward_opt_has_state_ = true;
            }
            if (!reward_opt_.step(reward_net_.param_blocks(), &diag)) {
                throw std::runtime_error("reward-model update rejected: " + diag);
            }
            loss += rloss;
            break;
        }
    }
    if (!std::isfinite(loss)) throw std::runtime_error("non-finite critic loss");
    return loss;
}

EvalResult Trainer::evaluate(int episodes, Rng& rng, bool greedy) const {
    EvalResult result;
    result.episodes = episodes;
    if (episodes == 0) return result;
    const DecPomdp& model = bundle_.model;
    double total_return = 0.0;
    int successes = 0;
    for (int ep = 0; ep < episodes; ++ep) {
        int state = rng.categorical(model.initial_dist);
        double ep_return = 0.0;
        bool success = false;
        for (int t = 0; t < episode_len_; ++t) {
            std::vector<int> actions(model.num_agents);
            for (int i = 0; i < model.num_agents; ++i) {
                const int obs = rng.categorical(model.observation[i][state]);
                const Vec probs = policy_.forward(i, obs);
                if (greedy) {
                    actions[i] = static_cast<int>(
                        std::max_element(probs.begin(), probs.end()) - probs.begin());
                } else {
                    actions[i] = rng.categorical(probs);
                }
            }
            const int a = joint_.encode(actions);
            ep_return += model.reward[state][a];
            state = rng.categorical(model.transition[state][a]);
            if (bundle_.goal_state >= 0 && state == bundle_.goal_state) success = true;
        }
        total_return += ep_return;
        if (success) ++successes;
    }
    result.mean_return = total_return / episodes;
    if (bundle_.goal_state >= 0) {
        result.success_rate = static_cast<double>(successes) / episodes;
    }
    return result;
}

EvalResult Trainer::evaluate_with_anomaly(int episodes, Rng& rng) const {
    EvalResult result;
    result.episodes = episodes;
    if (episodes == 0) return result;
    const DecPomdp& model = bundle_.model;
    double total_return = 0.0;
    int successes = 0;
    for (int ep = 0; ep < episodes; ++ep) {
        int state = rng.categorical(model.initial_dist);
        double ep_return = 0.0;
        bool success = false;
        for (int t = 0; t < episode_len_; ++t) {
            std::vector<int> actions(model.num_agents);
            for (int i = 0; i < model.num_agents; ++i) {
                const int obs = rng.categorical(model.observation[i][state]);
                actions[i] = rng.categorical(behavior_probs(i, obs));
            }
            const int a = joint_.encode(actions);
            ep_return += model.reward[state][a];
            state = rng.categorical(model.transition[state][a]);
            if (bundle_.goal_state >= 0 && state == bundle_.goal_state) success = true;
        }
        total_return += ep_return;
        if (success) ++successes;
    }
    result.mean_return = total_return / episodes;
    if (bundle_.goal_state >= 0) {
        result.success_rate = static_cast<double>(successes) / episodes;
    }
    return result;
}

void Trainer::run(const std::function<void(const MetricsRecord&)>& sink) {
    const auto start = std::chrono::steady_clock::now();
    const std::optional<AnomalyConfig> anomaly = anomaly_config();

    while (env_steps_ < cfg_.total_timesteps) {
        CollectionBatch batch = collect(iteration_);
        double batch_return = 0.0;
        int batch_success = 0;
        for (const auto& traj : batch.trajectories) {
            batch_return += traj.undiscounted_return();
            if (bundle_.goal_state >= 0) {
                bool success = false;
                for (const auto& step : traj.steps) {
                    if (step.state == bundle_.goal_state || step.reward >= 1.0 - 1e-9) {
                        success = true;
                    }
                }
                if (success) ++batch_success;
            }
        }
        const std::size_t batch_count = batch.trajectories.size();
        window_.push(std::move(batch));

        WindowTargets targets = compute_targets();
        last_advantages_ = targets.advantages;

        // Diagnostics computed on the freshly collected batch (the window
        // tail) before advantage normalization.
        double delta_a = std::nan("");
        if (anomaly) {
            std::vector<AdvantageSeries> tail_adv;
            std::vector<std::vector<std::uint8_t>> tail_events;
            const auto& newest = window_.batches().back();
            const std::size_t offset = targets.advantages.size() - newest.trajectories.size();
            for (std::size_t k = 0; k < newest.trajectories.size(); ++k) {
                tail_adv.push_back(targets.advantages[offset + k]);
                tail_events.push_back(anomaly_events(newest.trajectories[k], *anomaly));
            }
            const AdvantageGapStat stat =
                advantage_gap_pooled(tail_adv, tail_events, anomaly->agent_index);
            if (!stat.empty()) delta_a = stat.mean;
        }
        double delta_c = std::nan("");
        if (cfg_.estimator == EstimatorKind::GpaeOff ||
            cfg_.estimator == EstimatorKind::GpaeOn) {
            std::vector<IsrSeries> series;
            std::vector<TraceWeights> weights;
            const TraceScheme scheme = cfg_.estimator == EstimatorKind::GpaeOff
                                           ? cfg_.scheme
                                           : TraceScheme::LambdaOnly;
            for (const auto& b : window_.batches()) {
                for (const auto& traj : b.trajectories) {
                    IsrSeries isr = compute_isr(traj, [this](int agent, int obs, int action) {
                        return policy_.forward(agent, obs)[action];
                    });
                    weights.push_back(truncate(isr, scheme, cfg_.lambda, cfg_.eta));
                    series.push_back(std::move(isr));
                }
            }
            delta_c = gap_metric(series, weights).mean_gap;
        }

        if (cfg_.normalize_advantages && !targets.actor_samples.empty()) {
            double mean = 0.0;
            for (const auto& s : targets.actor_samples) mean += s.advantage;
            mean /= static_cast<double>(targets.actor_samples.size());
            double var = 0.0;
            for (const auto& s : targets.actor_samples) {
                var += (s.advantage - mean) * (s.advantage - mean);
            }
            const double stddev =
                std::sqrt(var / static_cast<double>(targets.actor_samples.size()));
            for (auto& s : targets.actor_samples) {
                s.advantage = (s.advantage - mean) / (stddev + 1e-8);
            }
        }

        double actor_loss_sum = 0.0;
        double critic_loss_sum = 0.0;
        approx::ActorLossStats stats;
        for (int epoch = 0; epoch < cfg_.update_epochs; ++epoch) {
            actor_loss_sum += actor_update(targets, &stats);
            critic_loss_sum += critic_update(targets);
        }
        if (cfg_.target_sync_every > 0 && (iteration_ + 1) % cfg_.target_sync_every == 0) {
            eq_net_.sync_target();
        }

        MetricsRecord record;
        record.iteration = iteration_;
        record.env_steps = env_steps_;
        record.mean_return = batch_count > 0 ? batch_return / batch_count : 0.0;
        if (bundle_.goal_state >= 0 && batch_count > 0) {
            record.success_rate = static_cast<double>(batch_success) / batch_count;
        }
        record.actor_loss = actor_loss_sum / cfg_.update_epochs;
        record.critic_loss = critic_loss_sum / cfg_.update_epochs;
        record.entropy = stats.entropy;
        record.delta_a = delta_a;
        record.delta_c = delta_c;
        record.wall_clock_s =
            cfg_.single_thread
                ? 0.0
                : std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        sink(record);
        ++iteration_;
    }
    eq_net_.sync_target();
}

nlohmann::json Trainer::checkpoint() const {
    nlohmann::json j;
    j["format_version"] = 1;
    j["config"] = cfg_.to_json();
    j["env_steps"] = env_steps_;
    nlohmann::json blocks = nlohmann::json::object();
    auto dump = [&blocks](const char* prefix, std::vector<approx::ParamBlock> param_blocks) {
        for (const auto& block : param_blocks) {
            blocks[std::string(prefix) + block.name] = *block.value;
        }
    };
    dump("", const_cast<approx::PolicyNet&>(policy_).param_blocks());
    dump("", const_cast<approx::CriticNet&>(eq_net_).param_blocks());
    switch (cfg_.estimator) {
        case EstimatorKind::Gae:
            dump("v.", const_cast<approx::ValueMlp&>(v_net_).param_blocks());
            break;
        case EstimatorKind::Coma:
            dump("q.", const_cast<approx::ValueMlp&>(q_net_).param_blocks());
            break;
        case EstimatorKind::Dae:
            dump("v.", const_cast<approx::ValueMlp&>(v_net_).param_blocks());
            dump("r.", const_cast<approx::CriticNet&>(reward_net_).param_blocks());
            break;
        default:
            break;
    }
    j["blocks"] = blocks;
    return j;
}

}  // namespace gpae
