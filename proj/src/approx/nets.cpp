#include "gpae/approx/nets.hpp"

#include <algorithm>
#include <cmath>

namespace gpae::approx {

namespace {

// Gram-Schmidt orthogonalization of Gaussian rows, scaled for relu layers.
// Falls back to the raw Gaussian row when the residual degenerates (more
// rows than columns).
void orthogonal_init(Vec& w, int out, int in, Rng& rng, double scale) {
    w.assign(static_cast<std::size_t>(out) * in, 0.0);
    for (int r = 0; r < out; ++r) {
        for (int c = 0; c < in; ++c) w[r * in + c] = rng.gaussian();
        for (int p = 0; p < std::min(r, in); ++p) {
            double dot = 0.0;
            for (int c = 0; c < in; ++c) dot += w[r * in + c] * w[p * in + c];
            for (int c = 0; c < in; ++c) w[r * in + c] -= dot * w[p * in + c];
        }
        double norm = 0.0;
        for (int c = 0; c < in; ++c) norm += w[r * in + c] * w[r * in + c];
        norm = std::sqrt(norm);
        if (norm < 1e-8) {
            for (int c = 0; c < in; ++c) w[r * in + c] = rng.gaussian() * scale / std::sqrt(in);
        } else {
            for (int c = 0; c < in; ++c) w[r * in + c] *= scale / norm;
        }
    }
}

}  // namespace

void Dense::init(int in_dim, int out_dim, Rng& rng, double scale) {
    in = in_dim;
    out = out_dim;
    orthogonal_init(w, out, in, rng, scale);
    b.assign(out, 0.0);
}

void Dense::init_zero(int in_dim, int out_dim) {
    in = in_dim;
    out = out_dim;
    w.assign(static_cast<std::size_t>(out) * in, 0.0);
    b.assign(out, 0.0);
}

Vec Dense::forward(const Vec& x) const {
    Vec y(out);
    for (int r = 0; r < out; ++r) {
        double acc = b[r];
        const double* row = w.data() + static_cast<std::size_t>(r) * in;
        for (int c = 0; c < in; ++c) acc += row[c] * x[c];
        y[r] = acc;
    }
    return y;
}

Vec Dense::backward(const Vec& x, const Vec& dy, Vec& gw, Vec& gb) const {
    Vec dx(in, 0.0);
    for (int r = 0; r < out; ++r) {
        const double g = dy[r];
        if (g == 0.0) continue;
        gb[r] += g;
        const double* row = w.data() + static_cast<std::size_t>(r) * in;
        double* grow = gw.data() + static_cast<std::size_t>(r) * in;
        for (int c = 0; c < in; ++c) {
            grow[c] += g * x[c];
            dx[c] += g * row[c];
        }
    }
    return dx;
}

void DenseGrad::match(const Dense& layer) {
    w.assign(layer.w.size(), 0.0);
    b.assign(layer.b.size(), 0.0);
}

void DenseGrad::zero() {
    std::fill(w.begin(), w.end(), 0.0);
    std::fill(b.begin(), b.end(), 0.0);
}

Vec softmax(const Vec& logits, int count) {
    Vec probs(logits.size(), 0.0);
    double max_logit = -1e300;
    for (int k = 0; k < count; ++k) max_logit = std::max(max_logit, logits[k]);
    double norm = 0.0;
    for (int k = 0; k < count; ++k) {
        probs[k] = std::exp(logits[k] - max_logit);
        norm += probs[k];
    }
    for (int k = 0; k < count; ++k) probs[k] /= norm;
    return probs;
}

Vec softmax_backward(const Vec& probs, const Vec& dprobs, int count) {
    double dot = 0.0;
    for (int k = 0; k < count; ++k) dot += probs[k] * dprobs[k];
    Vec dlogits(probs.size(), 0.0);
    for (int k = 0; k < count; ++k) dlogits[k] = probs[k] * (dprobs[k] - dot);
    return dlogits;
}

PolicyNet::PolicyNet(const DecPomdp& model, int hidden, Rng& rng) {
    num_agents_ = model.num_agents;
    actions_per_agent_ = model.actions_per_agent;
    max_obs_ = 0;
    max_actions_ = 0;
    for (int i = 0; i < model.num_agents; ++i) {
        max_obs_ = std::max(max_obs_, model.obs_per_agent[i]);
        max_actions_ = std::max(max_actions_, model.actions_per_agent[i]);
    }
    feature_dim_ = max_obs_ + num_agents_;
    l1.init(feature_dim_, hidden, rng, std::sqrt(2.0));
    l2.init(hidden, hidden, rng, std::sqrt(2.0));
    // Near-zero head so the initial policy is uniform.
    head.init_zero(hidden, max_actions_);
    g1.match(l1);
    g2.match(l2);
    ghead.match(head);
}

Vec PolicyNet::features(int agent, int obs) const {
    Vec x(feature_dim_, 0.0);
    x[obs] = 1.0;
    x[max_obs_ + agent] = 1.0;
    return x;
}

Vec PolicyNet::forward(int agent, int obs, Cache* cache) const {
    const Vec x = features(agent, obs);
    const Vec pre1 = l1.forward(x);
    const Vec h1 = relu(pre1);
    const Vec pre2 = l2.forward(h1);
    const Vec h2 = relu(pre2);
    const Vec logits = head.forward(h2);
    const int count = actions_per_agent_[agent];
    Vec probs = softmax(logits, count);
    if (cache) {
        cache->x = x;
        cache->pre1 = pre1;
        cache->h1 = h1;
        cache->pre2 = pre2;
        cache->h2 = h2;
        cache->logits = logits;
        cache->probs = probs;
        cache->agent = agent;
        cache->action_count = count;
    }
    return probs;
}

void PolicyNet::backward(const Cache& cache, const Vec& dlogits) {
    const Vec dh2 = head.backward(cache.h2, dlogits, ghead.w, ghead.b);
    const Vec dpre2 = relu_backward(cache.pre2, dh2);
    const Vec dh1 = l2.backward(cache.h1, dpre2, g2.w, g2.b);
    const Vec dpre1 = relu_backward(cache.pre1, dh1);
    (void)l1.backward(cache.x, dpre1, g1.w, g1.b);
}

std::vector<ParamBlock> PolicyNet::param_blocks() {
    return {{"policy.l1.w", &l1.w, &g1.w}, {"policy.l1.b", &l1.b, &g1.b},
            {"policy.l2.w", &l2.w, &g2.w}, {"policy.l2.b", &l2.b, &g2.b},
            {"policy.head.w", &head.w, &ghead.w}, {"policy.head.b", &head.b, &ghead.b}};
}

void PolicyNet::zero_grad() {
    g1.zero();
    g2.zero();
    ghead.zero();
}

CriticNet::CriticNet(const DecPomdp& model, int hidden, Rng& rng) {
    num_agents_ = model.num_agents;
    num_states_ = model.num_states;
    max_actions_ = 0;
    for (int i = 0; i < model.num_agents; ++i) {
        max_actions_ = std::max(max_actions_, model.actions_per_agent[i]);
    }
    state_dim_ = num_states_ + num_agents_;
    comp_dim_ = std::max(1, (num_agents_ - 1) * max_actions_);
    const int branch = std::max(2, hidden / 2);
    b_state.init(state_dim_, branch, rng, std::sqrt(2.0));
    b_comp.init(comp_dim_, branch, rng, std::sqrt(2.0));
    b_probs.init(max_actions_, branch, rng, std::sqrt(2.0));
    combine.init(3 * branch, hidden, rng, std::sqrt(2.0));
    out_head.init_zero(hidden, 1);
    t_state = b_state;
    t_comp = b_comp;
    t_probs = b_probs;
    t_combine = combine;
    t_out_head = out_head;
    g_state.match(b_state);
    g_comp.match(b_comp);
    g_probs.match(b_probs);
    g_combine.match(combine);
    g_out.match(out_head);
}

Vec CriticNet::state_features(int agent, int state) const {
    Vec x(state_dim_, 0.0);
    x[state] = 1.0;
    x[num_states_ + agent] = 1.0;
    return x;
}

Vec CriticNet::complement_features(int agent, const std::vector<int>& actions) const {
    Vec x(comp_dim_, 0.0);
    int slot = 0;
    for (int j = 0; j < num_agents_; ++j) {
        if (j == agent) continue;
        x[slot * max_actions_ + actions[j]] = 1.0;
        ++slot;
    }
    return x;
}

Vec CriticNet::pad_probs(const Vec& probs) const {
    Vec x(max_actions_, 0.0);
    for (std::size_t k = 0; k < probs.size(); ++k) x[k] = probs[k];
    return x;
}

double CriticNet::forward(const Vec& state_feat, const Vec& comp_feat, const Vec& own_probs,
                          Cache* cache, bool use_target) const {
    const Dense& d1 = use_target ? t_state : b_state;
    const Dense& d2 = use_target ? t_comp : b_comp;
    const Dense& d3 = use_target ? t_probs : b_probs;
    const Dense& dc = use_target ? t_combine : combine;
    const Dense& dhead = use_target ? t_out_head : out_head;

    const Vec pre1 = d1.forward(state_feat);
    const Vec h1 = relu(pre1);
    const Vec pre2 = d2.forward(comp_feat);
    const Vec h2 = relu(pre2);
    const Vec pre3 = d3.forward(own_probs);
    const Vec h3 = relu(pre3);
    Vec concat;
    concat.reserve(h1.size() + h2.size() + h3.size());
    concat.insert(concat.end(), h1.begin(), h1.end());
    concat.insert(concat.end(), h2.begin(), h2.end());
    concat.insert(concat.end(), h3.begin(), h3.end());
    const Vec pre_c = dc.forward(concat);
    const Vec hc = relu(pre_c);
    const double out = dhead.forward(hc)[0];
    if (cache) {
        cache->x_state = state_feat;
        cache->x_comp = comp_feat;
        cache->x_probs = own_probs;
        cache->pre1 = pre1;
        cache->h1 = h1;
        cache->pre2 = pre2;
        cache->h2 = h2;
        cache->pre3 = pre3;
        cache->h3 = h3;
        cache->concat = concat;
        cache->pre_c = pre_c;
        cache->hc = hc;
        cache->out = out;
    }
    return out;
}

void CriticNet::backward(const Cache& cache, double dout) {
    const Vec dhc = out_head.backward(cache.hc, Vec{dout}, g_out.w, g_out.b);
    const Vec dpre_c = relu_backward(cache.pre_c, dhc);
    const Vec dconcat = combine.backward(cache.concat, dpre_c, g_combine.w, g_combine.b);
    const std::size_t n1 = cache.h1.size();
    const std::size_t n2 = cache.h2.size();
    const std::size_t n3 = cache.h3.size();
    const Vec d1(dconcat.begin(), dconcat.begin() + n1);
    const Vec d2(dconcat.begin() + n1, dconcat.begin() + n1 + n2);
    const Vec d3(dconcat.begin() + n1 + n2, dconcat.begin() + n1 + n2 + n3);
    (void)b_state.backward(cache.x_state, relu_backward(cache.pre1, d1), g_state.w, g_state.b);
    (void)b_comp.backward(cache.x_comp, relu_backward(cache.pre2, d2), g_comp.w, g_comp.b);
    (void)b_probs.backward(cache.x_probs, relu_backward(cache.pre3, d3), g_probs.w, g_probs.b);
}

void CriticNet::sync_target() {
    t_state = b_state;
    t_comp = b_comp;
    t_probs = b_probs;
    t_combine = combine;
    t_out_head = out_head;
}

std::vector<ParamBlock> CriticNet::param_blocks() {
    return {{"critic.state.w", &b_state.w, &g_state.w},
            {"critic.state.b", &b_state.b, &g_state.b},
            {"critic.comp.w", &b_comp.w, &g_comp.w},
            {"critic.comp.b", &b_comp.b, &g_comp.b},
            {"critic.probs.w", &b_probs.w, &g_probs.w},
            {"critic.probs.b", &b_probs.b, &g_probs.b},
            {"critic.combine.w", &combine.w, &g_combine.w},
            {"critic.combine.b", &combine.b, &g_combine.b},
            {"critic.out.w", &out_head.w, &g_out.w},
            {"critic.out.b", &out_head.b, &g_out.b}};
}

void CriticNet::zero_grad() {
    g_state.zero();
    g_comp.zero();
    g_probs.zero();
    g_combine.zero();
    g_out.zero();
}

ValueMlp::ValueMlp(int in_dim, int hidden, Rng& rng) {
    l1.init(in_dim, hidden, rng, std::sqrt(2.0));
    l2.init(hidden, hidden, rng, std::sqrt(2.0));
    head.init_zero(hidden, 1);
    g1.match(l1);
    g2.match(l2);
    ghead.match(head);
}

double ValueMlp::forward(const Vec& x, Cache* cache) const {
    const Vec pre1 = l1.forward(x);
    const Vec h1 = relu(pre1);
    const Vec pre2 = l2.forward(h1);
    const Vec h2 = relu(pre2);
    const double out = head.forward(h2)[0];
    if (cache) {
        cache->x = x;
        cache->pre1 = pre1;
        cache->h1 = h1;
        cache->pre2 = pre2;
        cache->h2 = h2;
        cache->out = out;
    }
    return out;
}

void ValueMlp::backward(const Cache& cache, double dout) {
    const Vec dh2 = head.backward(cache.h2, Vec{dout}, ghead.w, ghead.b);
    const Vec dpre2 = relu_backward(cache.pre2, dh2);
    const Vec dh1 = l2.backward(cache.h1, dpre2, g2.w, g2.b);
    (void)l1.backward(cache.x, relu_backward(cache.pre1, dh1), g1.w, g1.b);
}

std::vector<ParamBlock> ValueMlp::param_blocks() {
    return {{"value.l1.w", &l1.w, &g1.w}, {"value.l1.b", &l1.b, &g1.b},
            {"value.l2.w", &l2.w, &g2.w}, {"value.l2.b", &l2.b, &g2.b},
            {"value.head.w", &head.w, &ghead.w}, {"value.head.b", &head.b, &ghead.b}};
}

void ValueMlp::zero_grad() {
    g1.zero();
    g2.zero();
    ghead.zero();
}

}  // namespace gpae::approx
