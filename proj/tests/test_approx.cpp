#include "doctest.h"

#include <cmath>

#include "gpae/approx/adam.hpp"
#include "gpae/approx/gradcheck.hpp"
#include "gpae/approx/losses.hpp"
#include "gpae/approx/nets.hpp"
#include "gpae/builtins.hpp"

using namespace gpae;
using namespace gpae::approx;

TEST_CASE("policy forward: zero-initialized head gives the uniform distribution") {
    const BuiltinBundle bundle = make_builtin("anomaly_team");
    Rng rng(1);
    PolicyNet net(bundle.model, 16, rng);
    for (int agent = 0; agent < 2; ++agent) {
        const Vec probs = net.forward(agent, 0);
        for (int a = 0; a < net.num_actions(agent); ++a) {
            CHECK(probs[a] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
        }
    }
}

TEST_CASE("policy forward: distributions normalize and log-probs are consistent") {
    const BuiltinBundle bundle = make_builtin("chain_gather");
    Rng rng(2);
    PolicyNet net(bundle.model, 16, rng);
    for (double& w : net.head.w) w = 0.5 * rng.gaussian();
    for (int obs = 0; obs < bundle.model.num_states; ++obs) {
        const Vec probs = net.forward(0, obs);
        double sum = 0.0;
        for (int a = 0; a < net.num_actions(0); ++a) {
            CHECK(probs[a] > 0.0);
            sum += probs[a];
        }
        CHECK(std::abs(sum - 1.0) < 1e-9);
        // log of the forward probability matches an independent log-softmax.
        PolicyNet::Cache cache;
        net.forward(0, obs, &cache);
        double norm = 0.0;
        double max_logit = *std::max_element(cache.logits.begin(),
                                             cache.logits.begin() + net.num_actions(0));
        for (int a = 0; a < net.num_actions(0); ++a) {
            norm += std::exp(cache.logits[a] - max_logit);
        }
        for (int a = 0; a < net.num_actions(0); ++a) {
            const double logp = cache.logits[a] - max_logit - std::log(norm);
            CHECK(std::abs(std::log(probs[a]) - logp) < 1e-9);
        }
    }
}

TEST_CASE("critic forward: zero head outputs zero and is deterministic") {
    const BuiltinBundle bundle = make_builtin("anomaly_team");
    Rng rng(3);
    CriticNet net(bundle.model, 16, rng);
    const Vec state = net.state_features(0, 0);
    const Vec comp = net.complement_features(0, {0, 1});
    const Vec probs = net.pad_probs({0.2, 0.3, 0.5});
    CHECK(net.forward(state, comp, probs) == 0.0);
    for (double& w : net.out_head.w) w = 0.3 * rng.gaussian();
    const double a = net.forward(state, comp, probs);
    const double b = net.forward(state, comp, probs);
    CHECK(a == b);
}

TEST_CASE("critic output is sensitive to the own-action probability branch") {
    const BuiltinBundle bundle = make_builtin("anomaly_team");
    Rng rng(4);
    CriticNet net(bundle.model, 16, rng);
    for (double& w : net.out_head.w) w = 0.3 * rng.gaussian();
    const Vec state = net.state_features(0, 0);
    const Vec comp = net.complement_features(0, {0, 1});
    const double a = net.forward(state, comp, net.pad_probs({1.0, 0.0, 0.0}));
    const double b = net.forward(state, comp, net.pad_probs({0.0, 0.0, 1.0}));
    CHECK(std::abs(a - b) > 1e-6);
}

TEST_CASE("backward: constant loss produces zero gradients") {
    const BuiltinBundle bundle = make_builtin("matrix_team");
    Rng rng(5);
    PolicyNet net(bundle.model, 8, rng);
    net.zero_grad();
    PolicyNet::Cache cache;
    net.forward(0, 0, &cache);
    net.backward(cache, Vec(net.max_actions(), 0.0));
    for (const auto& block : net.param_blocks()) {
        for (double g : *block.grad) CHECK(g == 0.0);
    }
}

TEST_CASE("backward: single linear layer squared loss matches the closed form") {
    Dense layer;
    layer.init_zero(3, 1);
    layer.w = {0.5, -1.0, 2.0};
    layer.b = {0.25};
    const Vec x = {1.0, 2.0, -0.5};
    const Vec y = layer.forward(x);
    const double target = 3.0;
    // loss = (y - target)^2, dL/dw = 2 (y - target) x.
    Vec gw(3, 0.0), gb(1, 0.0);
    layer.backward(x, {2.0 * (y[0] - target)}, gw, gb);
    for (int c = 0; c < 3; ++c) {
        CHECK(gw[c] == doctest::Approx(2.0 * (y[0] - target) * x[c]).epsilon(1e-12));
    }
    CHECK(gb[0] == doctest::Approx(2.0 * (y[0] - target)).epsilon(1e-12));
}

TEST_CASE("full nets pass a finite-difference spot check") {
    const BuiltinBundle bundle = make_builtin("anomaly_team");
    Rng rng(6);
    CriticNet net(bundle.model, 8, rng);
    for (double& w : net.out_head.w) w = 0.3 * rng.gaussian();
    const std::vector<CriticSample> batch = {
        {net.state_features(1, 0), net.complement_features(1, {2, 0}),
         net.pad_probs({0.3, 0.4, 0.3}), 0.7}};
    const auto report = grad_check(
        net.param_blocks(), [&]() { return critic_loss(net, batch, false); },
        [&]() {
            net.zero_grad();
            critic_loss(net, batch, true);
        },
        1e-5);
    CHECK(report.max_rel_error() < 1e-4);
}

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
    Dense layer;
    layer.init_zero(2, 1);
    layer.w = {1.0, -1.0};
    DenseGrad grad;
    grad.match(layer);
    Adam opt(Adam::Options{});
    std::vector<ParamBlock> blocks = {{"w", &layer.w, &grad.w}, {"b", &layer.b, &grad.b}};
    CHECK(opt.step(blocks));
    CHECK(layer.w[0] == 1.0);
    CHECK(layer.w[1] == -1.0);
}

TEST_CASE("adam: first bias-corrected step equals minus the learning rate") {
    Vec param = {0.0};
    Vec grad = {1.0};
    Adam::Options opts;
    opts.lr = 0.001;
    Adam opt(opts);
    CHECK(opt.step({{"p", &param, &grad}}));
    CHECK(param[0] == doctest::Approx(-0.001).epsilon(1e-6));
}

TEST_CASE("adam: linear annealing halves the rate at half progress") {
    Adam::Options opts;
    opts.lr = 0.01;
    opts.anneal = true;
    opts.total_steps = 10;
    Adam opt(opts);
    Vec param = {0.0};
    Vec grad = {0.0};
    for (int k = 0; k < 5; ++k) CHECK(opt.step({{"p", &param, &grad}}));
    CHECK(opt.current_lr() == doctest::Approx(0.005).epsilon(1e-12));
}

TEST_CASE("adam: non-finite gradients are rejected with a diagnostic") {
    Vec param = {1.0};
    Vec grad = {std::nan("")};
    Adam opt(Adam::Options{});
    std::string diag;
    CHECK_FALSE(opt.step({{"p", &param, &grad}}, &diag));
    CHECK(param[0] == 1.0);
    CHECK(diag.find("p") != std::string::npos);
}

TEST_CASE("target network: sync copies, cadence leaves it stale in between") {
    const BuiltinBundle bundle = make_builtin("anomaly_team");
    Rng rng(7);
    CriticNet net(bundle.model, 8, rng);
    const Vec state = net.state_features(0, 0);
    const Vec comp = net.complement_features(0, {1, 0});
    const Vec probs = net.pad_probs({0.4, 0.3, 0.3});
    // Before any sync the target equals the initialization.
    CHECK(net.forward(state, comp, probs, nullptr, true) ==
          net.forward(state, comp, probs, nullptr, false));
    // Drift the main parameters; the target must hold still until synced.
    for (double& w : net.out_head.w) w += 0.5;
    const double main_out = net.forward(state, comp, probs, nullptr, false);
    const double target_out = net.forward(state, comp, probs, nullptr, true);
    CHECK(main_out != target_out);
    net.sync_target();
    CHECK(net.forward(state, comp, probs, nullptr, true) == main_out);
}

TEST_CASE("actor loss: fresh on-policy batch reduces to the standard clipped surrogate") {
    const BuiltinBundle bundle = make_builtin("anomaly_team");
    Rng rng(8);
    PolicyNet net(bundle.model, 8, rng);
    ActorSample sample;
    sample.agent = 0;
    sample.obs = 0;
    sample.action = 1;
    sample.advantage = 1.0;
    sample.rho_old = 1.0;
    sample.logp_old = std::log(net.forward(0, 0)[1]);  // rho = 1 at the snapshot
    ActorLossOptions opts;
    opts.entropy_coef = 0.0;
    const ActorLossStats stats = actor_loss(net, {sample}, opts, false);
    CHECK(stats.objective == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("actor loss: clipped branch has zero gradient far outside the band") {
    const BuiltinBundle bundle = make_builtin("anomaly_team");
    Rng rng(9);
    PolicyNet net(bundle.model, 8, rng);
    ActorSample sample;
    sample.agent = 0;
    sample.obs = 0;
    sample.action = 0;
    sample.advantage = 1.0;
    sample.rho_old = 1.0;
    // rho = p / p_old = 3 with the uniform initial policy: far above 1 + eps.
    sample.logp_old = std::log(net.forward(0, 0)[0] / 3.0);
    ActorLossOptions opts;
    opts.entropy_coef = 0.0;
    net.zero_grad();
    actor_loss(net, {sample}, opts, true);
    for (const auto& block : net.param_blocks()) {
        for (double g : *block.grad) CHECK(g == 0.0);
    }
}

TEST_CASE("gradcheck report flags excluded boundary points") {
    GradCheckReport report;
    report.blocks.push_back({"a", 2e-5});
    report.blocks.push_back({"b", 7e-6});
    CHECK(report.max_rel_error() == doctest::Approx(2e-5));
}
