#include "doctest.h"

#include <cmath>

#include "gpae/builtins.hpp"
#include "gpae/estimators.hpp"
#include "gpae/experiments.hpp"
#include "gpae/oracle.hpp"
#include "gpae/rollout.hpp"

using namespace gpae;

namespace {

TabularPolicy perturbed_for_test(const BuiltinBundle& bundle) {
    return perturb_policy(bundle.tilted, 0.3);
}

DecPomdp single_state_model(double reward, double discount, int horizon) {
    DecPomdp model = make_identity_observation_model(1, 1, {1});
    model.transition[0][0][0] = 1.0;
    model.reward[0][0] = reward;
    model.reward_bound = std::max(1.0, std::abs(reward));
    model.discount = discount;
    model.horizon = horizon;
    return model;
}

}  // namespace

TEST_CASE("exact_joint_q on the one-state one-action model") {
    const DecPomdp model = single_state_model(1.0, 0.5, 2);
    const TabularPolicy policy = uniform_policy(model);
    const JointQTable q = exact_joint_q(model, policy);
    CHECK(q.values[0][0][0] == doctest::Approx(1.5).epsilon(1e-15));
    CHECK(q.values[1][0][0] == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("exact_joint_q is identically zero for zero rewards") {
    const DecPomdp model = single_state_model(0.0, 0.9, 5);
    const JointQTable q = exact_joint_q(model, uniform_policy(model));
    for (const auto& stage : q.values) {
        for (const auto& row : stage) {
            for (double v : row) CHECK(v == 0.0);
        }
    }
}

TEST_CASE("exact_joint_q matches monte-carlo estimates on chain_gather") {
    const BuiltinBundle bundle = make_builtin("chain_gather");
    const JointQTable q = exact_joint_q(bundle.model, bundle.tilted);
    const JointActionSpace joint = bundle.model.joint();
    Rng rng(5);
    const int samples_per_cell = 2500;  // 40 cells -> 1e5 rollouts
    for (int s = 0; s < bundle.model.num_states; ++s) {
        for (int a = 0; a < joint.num_joint(); ++a) {
            double sum = 0.0, sum_sq = 0.0;
            for (int k = 0; k < samples_per_cell; ++k) {
                const Trajectory traj = rollout_from_root(bundle.model, bundle.tilted, rng,
                                                          bundle.model.horizon, s, a);
                const double g = traj.discounted_return(bundle.model.discount);
                sum += g;
                sum_sq += g * g;
            }
            const double mean = sum / samples_per_cell;
            const double var =
                std::max((sum_sq / samples_per_cell - mean * mean) / (samples_per_cell - 1),
                         1e-12);
            CHECK(std::abs(mean - q.values[0][s][a]) < 3.0 * std::sqrt(var) + 1e-9);
        }
    }
}

TEST_CASE("counterfactual_value marginalizes the agent's own action") {
    // pi^0 uniform over 2 actions, Q slice {2, 4} -> EQ = 3.
    DecPomdp model = make_identity_observation_model(2, 1, {2, 2});
    for (int a = 0; a < 4; ++a) model.transition[0][a][0] = 1.0;
    model.horizon = 1;
    model.reward_bound = 4.0;
    const JointActionSpace joint = model.joint();
    model.reward[0][joint.encode({0, 0})] = 2.0;
    model.reward[0][joint.encode({1, 0})] = 4.0;
    model.reward[0][joint.encode({0, 1})] = 1.0;
    model.reward[0][joint.encode({1, 1})] = 3.0;
    const TabularPolicy policy = uniform_policy(model);
    const JointQTable q = exact_joint_q(model, policy);
    const PerAgentValueTable eq = counterfactual_value(q, model, policy, 0);
    CHECK(eq.values[0][0][0] == doctest::Approx(3.0).epsilon(1e-15));
    CHECK(eq.values[0][0][1] == doctest::Approx(2.0).epsilon(1e-15));

    // Deterministic policy selects a single slice.
    TabularPolicy det = policy;
    det.per_agent[0][0] = {0.0, 1.0};
    det.full_support = false;
    const JointQTable q2 = exact_joint_q(model, det);
    const PerAgentValueTable eq2 = counterfactual_value(q2, model, det, 0);
    CHECK(eq2.values[0][0][0] == doctest::Approx(q2.values[0][0][joint.encode({1, 0})]));
}

TEST_CASE("counterfactual_value on a single-agent model reduces to V") {
    const BuiltinBundle bundle = make_builtin("single_chain");
    const JointQTable q = exact_joint_q(bundle.model, bundle.tilted);
    const PerAgentValueTable eq = counterfactual_value(q, bundle.model, bundle.tilted, 0);
    const auto v = exact_state_values(bundle.model, bundle.tilted);
    for (int t = 0; t < bundle.model.horizon; ++t) {
        for (int s = 0; s < bundle.model.num_states; ++s) {
            CHECK(eq.values[t][s][0] == doctest::Approx(v[t][s]).epsilon(1e-12));
        }
    }
    CHECK_THROWS_AS(counterfactual_value(q, bundle.model, bundle.tilted, 3), std::out_of_range);
}

TEST_CASE("on-policy operator holds the exact fixed point in place") {
    for (const char* name : {"matrix_team", "chain_gather", "single_chain"}) {
        const BuiltinBundle bundle = make_builtin(name);
        const JointQTable q = exact_joint_q(bundle.model, bundle.tilted);
        for (int agent = 0; agent < bundle.model.num_agents; ++agent) {
            const PerAgentValueTable eq =
                counterfactual_value(q, bundle.model, bundle.tilted, agent);
            for (double lambda : {1.0, 0.7}) {
                OperatorConfig cfg;
                cfg.model = &bundle.model;
                cfg.target = &bundle.tilted;
                cfg.lambda = lambda;
                cfg.agent = agent;
                const PerAgentValueTable out = apply_operator(cfg, eq);
                CHECK(sup_norm_distance(out, eq) < 1e-10);
            }
        }
    }
}

TEST_CASE("operator on a zero-reward model maps zero to zero") {
    DecPomdp model = single_state_model(0.0, 0.9, 4);
    const TabularPolicy policy = uniform_policy(model);
    OperatorConfig cfg;
    cfg.model = &model;
    cfg.target = &policy;
    cfg.lambda = 0.8;
    const PerAgentValueTable zero = PerAgentValueTable::zeros(model, 0);
    const PerAgentValueTable out = apply_operator(cfg, zero);
    CHECK(out.sup_norm() == 0.0);
}

TEST_CASE("on-policy operator contracts random pairs by at least gamma") {
    const BuiltinBundle bundle = make_builtin("chain_gather");
    Rng rng(13);
    OperatorConfig cfg;
    cfg.model = &bundle.model;
    cfg.target = &bundle.tilted;
    cfg.agent = 1;
    for (double lambda : {0.5, 0.95, 1.0}) {
        cfg.lambda = lambda;
        for (int pair = 0; pair < 20; ++pair) {
            const PerAgentValueTable f1 = random_value_table(bundle.model, 1, rng);
            const PerAgentValueTable f2 = random_value_table(bundle.model, 1, rng);
            const double den = sup_norm_distance(f1, f2);
            if (den < 1e-9) continue;
            const double num =
                sup_norm_distance(apply_operator(cfg, f1), apply_operator(cfg, f2));
            CHECK(num / den <= bundle.model.discount + 1e-9);
        }
    }
}

TEST_CASE("operator DP recursion equals literal trajectory enumeration") {
    const BuiltinBundle bundle = make_builtin("matrix_team", nlohmann::json{{"horizon", 4}});
    Rng rng(17);
    OperatorConfig cfg;
    cfg.model = &bundle.model;
    cfg.target = &bundle.tilted;
    cfg.agent = 0;

    SUBCASE("on-policy, lambda < 1") {
        cfg.lambda = 0.8;
        const PerAgentValueTable f = random_value_table(bundle.model, 0, rng);
        CHECK(sup_norm_distance(apply_operator(cfg, f), apply_operator_enumeration(cfg, f)) <
              1e-10);
    }
    SUBCASE("off-policy with double truncation") {
        const TabularPolicy behavior = perturbed_for_test(bundle);
        cfg.behavior = &behavior;
        cfg.scheme = TraceScheme::DoubleTruncation;
        cfg.lambda = 0.9;
        cfg.eta = 1.05;
        const PerAgentValueTable f = random_value_table(bundle.model, 0, rng);
        CHECK(sup_norm_distance(apply_operator(cfg, f), apply_operator_enumeration(cfg, f)) <
              1e-10);
    }
}

TEST_CASE("off-policy operator reduces to on-policy with mu = pi and lambda traces") {
    const BuiltinBundle bundle = make_builtin("chain_gather");
    Rng rng(19);
    OperatorConfig on;
    on.model = &bundle.model;
    on.target = &bundle.tilted;
    on.lambda = 0.9;
    on.agent = 0;
    OperatorConfig off = on;
    off.behavior = &bundle.tilted;
    off.scheme = TraceScheme::LambdaOnly;
    for (int k = 0; k < 10; ++k) {
        const PerAgentValueTable f = random_value_table(bundle.model, 0, rng);
        CHECK(sup_norm_distance(apply_operator(on, f), apply_operator(off, f)) <= 1e-12);
    }
}

TEST_CASE("off-policy operator with full joint ratios shares the on-policy fixed point") {
    const BuiltinBundle bundle = make_builtin("matrix_team");
    const TabularPolicy behavior = perturbed_for_test(bundle);
    const JointQTable q = exact_joint_q(bundle.model, bundle.tilted);
    const PerAgentValueTable eq = counterfactual_value(q, bundle.model, bundle.tilted, 0);
    OperatorConfig cfg;
    cfg.model = &bundle.model;
    cfg.target = &bundle.tilted;
    cfg.behavior = &behavior;
    cfg.scheme = TraceScheme::Untruncated;
    cfg.lambda = 1.0;
    cfg.agent = 0;
    const OperatorReport report =
        fixed_point(cfg, PerAgentValueTable::zeros(bundle.model, 0), 1e-11, 100);
    CHECK(report.converged);
    CHECK(sup_norm_distance(report.fixed_point, eq) < 1e-10);
}

TEST_CASE("off-policy operator rejects behavior without support") {
    const BuiltinBundle bundle = make_builtin("matrix_team");
    TabularPolicy behavior = bundle.tilted;
    behavior.per_agent[0][0] = {1.0, 0.0};  // zero mass on a target-supported action
    behavior.full_support = false;
    OperatorConfig cfg;
    cfg.model = &bundle.model;
    cfg.target = &bundle.tilted;
    cfg.behavior = &behavior;
    cfg.scheme = TraceScheme::DoubleTruncation;
    const PerAgentValueTable f = PerAgentValueTable::zeros(bundle.model, 0);
    CHECK_THROWS_AS(apply_operator(cfg, f), std::runtime_error);
}

TEST_CASE("fixed-point iteration diagnostics") {
    const BuiltinBundle bundle = make_builtin("chain_gather");
    const JointQTable q = exact_joint_q(bundle.model, bundle.tilted);
    const PerAgentValueTable eq = counterfactual_value(q, bundle.model, bundle.tilted, 0);
    OperatorConfig cfg;
    cfg.model = &bundle.model;
    cfg.target = &bundle.tilted;
    cfg.lambda = 1.0;
    cfg.agent = 0;

    SUBCASE("starting at the fixed point converges in one iteration") {
        const OperatorReport report = fixed_point(cfg, eq, 1e-9, 10);
        CHECK(report.converged);
        CHECK(report.iterations == 1);
    }
    SUBCASE("starting from zero reaches the oracle fixed point") {
        const OperatorReport report =
            fixed_point(cfg, PerAgentValueTable::zeros(bundle.model, 0), 1e-10, 50);
        CHECK(report.converged);
        CHECK(sup_norm_distance(report.fixed_point, eq) < 1e-8);
    }
    SUBCASE("ratio sequence respects the tightened constant for lambda < 1") {
        cfg.lambda = 0.6;
        Rng rng(23);
        const OperatorReport report =
            fixed_point(cfg, random_value_table(bundle.model, 0, rng), 1e-10, 300);
        CHECK(report.converged);
        const double gamma = bundle.model.discount;
        const double bound = gamma * (1.0 - cfg.lambda) / (1.0 - gamma * cfg.lambda);
        for (std::size_t k = 0; k + 1 < report.deltas.size(); ++k) {
            if (report.deltas[k] > 1e-8) CHECK(report.ratios[k] <= bound + 1e-6);
        }
    }
    SUBCASE("non-convergence is reported, not thrown") {
        const OperatorReport report =
            fixed_point(cfg, PerAgentValueTable::zeros(bundle.model, 0), 1e-30, 3);
        CHECK_FALSE(report.converged);
        CHECK(report.iterations == 3);
    }
}

TEST_CASE("expected_root_advantage telescopes to Q - EQ with exact critics") {
    const BuiltinBundle bundle = make_builtin("matrix_team");
    const JointQTable q = exact_joint_q(bundle.model, bundle.tilted);
    std::vector<PerAgentValueTable> tables;
    for (int i = 0; i < bundle.model.num_agents; ++i) {
        tables.push_back(counterfactual_value(q, bundle.model, bundle.tilted, i));
    }
    const JointActionSpace joint = bundle.model.joint();
    RootAdvantageConfig rc;
    rc.scheme = TraceScheme::LambdaOnly;
    rc.lambda = 1.0;
    const auto era =
        expected_root_advantage(bundle.model, bundle.tilted, bundle.tilted, rc, tables, 0);
    for (int a = 0; a < joint.num_joint(); ++a) {
        const double expected = q.values[0][0][a] - tables[0].values[0][0][joint.complement_of(a, 0)];
        CHECK(era[0][a] == doctest::Approx(expected).epsilon(1e-12));
    }
}

TEST_CASE("expected_root_advantage is zero on a zero-reward model") {
    DecPomdp model = make_identity_observation_model(2, 1, {2, 2});
    for (int a = 0; a < 4; ++a) model.transition[0][a][0] = 1.0;
    model.horizon = 3;
    const TabularPolicy policy = uniform_policy(model);
    std::vector<PerAgentValueTable> tables = {PerAgentValueTable::zeros(model, 0),
                                              PerAgentValueTable::zeros(model, 1)};
    RootAdvantageConfig rc;
    const auto era = expected_root_advantage(model, policy, policy, rc, tables, 0);
    for (double v : era[0]) CHECK(v == 0.0);
}

TEST_CASE("double-truncated root advantage bias stays within the analytic bound") {
    const BuiltinBundle bundle = make_builtin("matrix_team");
    const TabularPolicy behavior = perturbed_for_test(bundle);
    const JointQTable q_pi = exact_joint_q(bundle.model, bundle.tilted);
    const JointQTable q_mu = exact_joint_q(bundle.model, behavior);
    std::vector<PerAgentValueTable> tables;
    for (int i = 0; i < bundle.model.num_agents; ++i) {
        tables.push_back(counterfactual_value(q_pi, bundle.model, bundle.tilted, i));
    }
    const JointActionSpace joint = bundle.model.joint();
    RootAdvantageConfig rc;
    rc.scheme = TraceScheme::DoubleTruncation;
    rc.lambda = 1.0;
    rc.eta = 1.05;
    const auto era =
        expected_root_advantage(bundle.model, bundle.tilted, behavior, rc, tables, 0);
    const double gamma = bundle.model.discount;
    const double m_r = bundle.model.reward_bound;
    // Analytic bias budget: the reward-mismatch term plus the value-weight
    // term, both evaluated numerically from M_r and gamma.
    const double b2_bound = 2.0 * m_r * gamma / ((1.0 - gamma) * (1.0 - gamma)) +
                            m_r / ((1.0 - gamma) * (1.0 - gamma)) - m_r / (1.0 - gamma);
    for (int a = 0; a < joint.num_joint(); ++a) {
        const double exact =
            q_pi.values[0][0][a] - tables[0].values[0][0][joint.complement_of(a, 0)];
        const double bias = era[0][a] - exact;
        const double b1_bound =
            q_mu.values[0][0][a] - q_pi.values[0][0][a] + m_r / (1.0 - gamma);
        CHECK(bias <= b1_bound + b2_bound + 1e-9);
    }
}

TEST_CASE("oracle EQ tables remain within the value bound") {
    for (const char* name : {"matrix_team", "chain_gather", "single_chain", "anomaly_team"}) {
        const BuiltinBundle bundle = make_builtin(name);
        const JointQTable q = exact_joint_q(bundle.model, bundle.tilted);
        const double bound =
            bundle.model.reward_bound / (1.0 - bundle.model.discount) + 1e-9;
        for (int agent = 0; agent < bundle.model.num_agents; ++agent) {
            const PerAgentValueTable eq =
                counterfactual_value(q, bundle.model, bundle.tilted, agent);
            CHECK(eq.sup_norm() <= bound);
        }
    }
}

TEST_CASE("dt fixed-point policy is a valid distribution tilted toward the target") {
    const BuiltinBundle bundle = make_builtin("matrix_team");
    const TabularPolicy behavior = perturbed_for_test(bundle);
    const auto pstar = dt_fixed_point_policy(bundle.model, bundle.tilted, behavior, 1.05, 0);
    for (const auto& rows : pstar) {
        for (const auto& row : rows) {
            double sum = 0.0;
            for (double p : row) {
                CHECK(p >= 0.0);
                sum += p;
            }
            CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
        }
    }
}
