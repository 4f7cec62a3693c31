#pragma once

#include <string>
#include <vector>

#include "gpae/common.hpp"
#include "gpae/model.hpp"

namespace gpae::approx {

// Row-major dense layer. Gradients are accumulated into a mirror struct so
// forward passes stay const and mini-batch summation order is fixed.
struct Dense {
    int in = 0;
    int out = 0;
    Vec w;  // [out][in]
    Vec b;  // [out]

    void init(int in_dim, int out_dim, Rng& rng, double scale);
    void init_zero(int in_dim, int out_dim);
    Vec forward(const Vec& x) const;
    // dy -> dx; accumulates into gw/gb.
    Vec backward(const Vec& x, const Vec& dy, Vec& gw, Vec& gb) const;
};

struct DenseGrad {
    Vec w;
    Vec b;
    void match(const Dense& layer);
    void zero();
};

inline Vec relu(const Vec& x) {
    Vec y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
    return y;
}

inline Vec relu_backward(const Vec& pre, const Vec& dy) {
    Vec dx(pre.size());
    for (std::size_t i = 0; i < pre.size(); ++i) dx[i] = pre[i] > 0.0 ? dy[i] : 0.0;
    return dx;
}

Vec softmax(const Vec& logits, int count);
// dprobs -> dlogits for the leading `count` entries; the rest stay zero.
Vec softmax_backward(const Vec& probs, const Vec& dprobs, int count);

// Named parameter block view, shared by the optimizer and the gradient
// checker. Pointers stay valid while the owning net is alive.
struct ParamBlock {
    std::string name;
    Vec* value = nullptr;
    Vec* grad = nullptr;
};

// Categorical policy shared across agents; the agent identity is appended to
// the observation one-hot. Two relu hidden layers, linear logit head.
class PolicyNet {
public:
    PolicyNet() = default;
    PolicyNet(const DecPomdp& model, int hidden, Rng& rng);

    struct Cache {
        Vec x, pre1, h1, pre2, h2, logits, probs;
        int agent = 0;
        int action_count = 0;
    };

    // Returns the action distribution for the agent at this observation.
    Vec forward(int agent, int obs, Cache* cache = nullptr) const;
    // dlogits (length max_actions; entries past the agent's action count are
    // ignored) -> parameter gradients.
    void backward(const Cache& cache, const Vec& dlogits);

    Vec features(int agent, int obs) const;
    std::vector<ParamBlock> param_blocks();
    void zero_grad();
    int max_actions() const { return max_actions_; }
    int num_actions(int agent) const { return actions_per_agent_[agent]; }
    int feature_dim() const { return feature_dim_; }

    Dense l1, l2, head;
    DenseGrad g1, g2, ghead;

private:
    int num_agents_ = 0;
    int max_obs_ = 0;
    int max_actions_ = 0;
    int feature_dim_ = 0;
    std::vector<int> actions_per_agent_;
};

// Centralized per-agent critic with three input branches: global state (with
// agent identity), encoded complement actions, and the agent's own action
// probabilities. Branch widths are half the trunk width so the concatenation
// matches a plain critic of the configured width. Carries a target copy of
// its parameters for stable regression targets.
class CriticNet {
public:
    CriticNet() = default;
    CriticNet(const DecPomdp& model, int hidden, Rng& rng);

    struct Cache {
        Vec x_state, x_comp, x_probs;
        Vec pre1, h1, pre2, h2, pre3, h3;
        Vec concat, pre_c, hc;
        double out = 0.0;
    };

    double forward(const Vec& state_feat, const Vec& comp_feat, const Vec& own_probs,
                   Cache* cache = nullptr, bool use_target = false) const;
    // dout -> parameter gradients (main parameters only).
    void backward(const Cache& cache, double dout);

    Vec state_features(int agent, int state) const;
    Vec complement_features(int agent, const std::vector<int>& actions) const;
    Vec pad_probs(const Vec& probs) const;

    void sync_target();
    std::vector<ParamBlock> param_blocks();
    void zero_grad();

    int state_dim() const { return state_dim_; }
    int comp_dim() const { return comp_dim_; }
    int probs_dim() const { return max_actions_; }

    Dense b_state, b_comp, b_probs, combine, out_head;
    Dense t_state, t_comp, t_probs, t_combine, t_out_head;  // target copy
    DenseGrad g_state, g_comp, g_probs, g_combine, g_out;

private:
    int num_agents_ = 0;
    int num_states_ = 0;
    int max_actions_ = 0;
    int state_dim_ = 0;
    int comp_dim_ = 0;
};

// Generic scalar head used for the baseline critics (V, joint Q, reward
// model). Same two-hidden-layer shape as the policy trunk.
class ValueMlp {
public:
    ValueMlp() = default;
    ValueMlp(int in_dim, int hidden, Rng& rng);

    struct Cache {
        Vec x, pre1, h1, pre2, h2;
        double out = 0.0;
    };

    double forward(const Vec& x, Cache* cache = nullptr) const;
    void backward(const Cache& cache, double dout);
    std::vector<ParamBlock> param_blocks();
    void zero_grad();

    Dense l1, l2, head;
    DenseGrad g1, g2, ghead;
};

}  // namespace gpae::approx
