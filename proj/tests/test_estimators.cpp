#include "doctest.h"

#include <cmath>

#include "gpae/builtins.hpp"
#include "gpae/estimators.hpp"
#include "gpae/experiments.hpp"
#include "gpae/oracle.hpp"
#include "gpae/rollout.hpp"

using namespace gpae;

namespace {

TraceWeights lambda_traces(int length, int agents, double lambda) {
    IsrSeries isr;
    isr.individual.assign(length, Vec(agents, 1.0));
    isr.complement.assign(length, Vec(agents, 1.0));
    isr.joint.assign(length, 1.0);
    return truncate(isr, TraceScheme::LambdaOnly, lambda, 1.05);
}

}  // namespace

TEST_CASE("per-agent TD errors with a zero critic equal the rewards") {
    const BuiltinBundle bundle = make_builtin("matrix_team");
    Rng rng(2);
    const Trajectory traj = rollout(bundle.model, bundle.tilted, rng, bundle.model.horizon);
    const TableCritic critic(bundle.model, {PerAgentValueTable::zeros(bundle.model, 0),
                                            PerAgentValueTable::zeros(bundle.model, 1)});
    const auto deltas = per_agent_td_errors(traj, critic, 0.99);
    for (int i = 0; i < 2; ++i) {
        for (int t = 0; t < traj.length(); ++t) {
            CHECK(deltas[i][t] == doctest::Approx(traj.steps[t].reward).epsilon(1e-15));
        }
    }
}

TEST_CASE("terminal TD error bootstraps to zero") {
    // r = 1, EQ at the final stage 0.4, gamma = 0.99 -> delta = 0.6.
    DecPomdp model = make_identity_observation_model(1, 1, {1});
    model.transition[0][0][0] = 1.0;
    model.reward[0][0] = 1.0;
    model.horizon = 1;
    PerAgentValueTable table = PerAgentValueTable::zeros(model, 0);
    table.values[0][0][0] = 0.4;
    const TableCritic critic(model, {table});
    Trajectory traj;
    Transition tr;
    tr.state = 0;
    tr.actions = {0};
    tr.observations = {0};
    tr.reward = 1.0;
    tr.behavior_logp = {0.0};
    traj.steps.push_back(tr);
    const auto deltas = per_agent_td_errors(traj, critic, 0.99);
    CHECK(deltas[0][0] == doctest::Approx(0.6).epsilon(1e-15));
}

TEST_CASE("expected TD error vanishes at the exact fixed point") {
    const BuiltinBundle bundle = make_builtin("matrix_team");
    const OracleCritic critic(bundle.model, bundle.tilted);
    const auto trajs =
        enumerate_trajectories(bundle.model, bundle.tilted, bundle.model.horizon);
    for (int agent = 0; agent < 2; ++agent) {
        for (int t = 0; t < bundle.model.horizon; ++t) {
            double expectation = 0.0;
            for (const auto& wt : trajs) {
                expectation +=
                    wt.probability * per_agent_td_errors(wt.traj, critic, bundle.model.discount)[agent][t];
            }
            CHECK(std::abs(expectation) < 1e-10);
        }
    }
}

TEST_CASE("gpae: lambda -> 0 limit keeps only the instantaneous TD error") {
    const std::vector<Vec> deltas = {{1.0, -2.0, 0.5, 3.0}};
    IsrSeries isr;
    isr.individual.assign(4, Vec(1, 1.0));
    isr.complement.assign(4, Vec(1, 1.0));
    isr.joint.assign(4, 1.0);
    TraceWeights traces = truncate(isr, TraceScheme::LambdaOnly, 1e-12, 1.05);
    const AdvantageSeries adv = gpae_advantages(deltas, traces, 0.9);
    for (int t = 0; t < 4; ++t) {
        CHECK(adv.values[0][t] == doctest::Approx(deltas[0][t]).epsilon(1e-9));
    }
}

TEST_CASE("gpae: undiscounted telescoping example") {
    const std::vector<Vec> deltas = {{1.0, 0.0}};
    const AdvantageSeries adv = gpae_advantages(deltas, lambda_traces(2, 1, 1.0), 1.0);
    CHECK(adv.values[0][0] == doctest::Approx(1.0));
    CHECK(adv.values[0][1] == doctest::Approx(0.0));
}

TEST_CASE("gpae rejects mismatched trace lengths") {
    const std::vector<Vec> deltas = {{1.0, 0.0, 2.0}};
    CHECK_THROWS_AS(gpae_advantages(deltas, lambda_traces(2, 1, 0.9), 0.9), std::invalid_argument);
}

TEST_CASE("single-agent reduction: gpae with lambda traces equals gae") {
    const BuiltinBundle bundle = make_builtin("single_chain");
    Rng rng(77);
    for (int k = 0; k < 100; ++k) {
        // Random critic table; for n = 1 it backs both EQ and V.
        PerAgentValueTable table = random_value_table(bundle.model, 0, rng);
        const TableCritic critic(bundle.model, {table});
        const Trajectory traj = rollout(bundle.model, bundle.tilted, rng, bundle.model.horizon);
        const auto deltas = per_agent_td_errors(traj, critic, 0.97);
        const IsrSeries isr = compute_isr(traj, bundle.tilted);
        const TraceWeights traces = truncate(isr, TraceScheme::LambdaOnly, 0.9, 1.05);
        const AdvantageSeries a = gpae_advantages(deltas, traces, 0.97);
        const AdvantageSeries b = gae(traj, critic, 0.97, 0.9, 1);
        for (int t = 0; t < traj.length(); ++t) {
            CHECK(std::abs(a.values[0][t] - b.values[0][t]) <= 1e-12);
        }
    }
}

TEST_CASE("on-policy data: truncation scheme does not change gpae") {
    const BuiltinBundle bundle = make_builtin("anomaly_team");
    const OracleCritic critic(bundle.model, bundle.tilted);
    Rng rng(31);
    for (int k = 0; k < 10; ++k) {
        const Trajectory traj = rollout(bundle.model, bundle.tilted, rng, bundle.model.horizon);
        const auto deltas = per_agent_td_errors(traj, critic, bundle.model.discount);
        const IsrSeries isr = compute_isr(traj, bundle.tilted);
        const AdvantageSeries base =
            gpae_advantages(deltas, truncate(isr, TraceScheme::LambdaOnly, 0.95, 1.05),
                 bundle.model.discount);
        for (TraceScheme scheme :
             {TraceScheme::SingleTruncation, TraceScheme::IndividualTruncation,
              TraceScheme::DoubleTruncation}) {
            const AdvantageSeries other =
                gpae_advantages(deltas, truncate(isr, scheme, 0.95, 1.05), bundle.model.discount);
            for (int i = 0; i < 2; ++i) {
                for (int t = 0; t < traj.length(); ++t) {
                    CHECK(std::abs(base.values[i][t] - other.values[i][t]) <= 1e-12);
                }
            }
        }
    }
}

TEST_CASE("gae: zero critic with gamma = lambda = 1 gives remaining returns") {
    const BuiltinBundle bundle = make_builtin("matrix_team");
    const TableCritic critic(bundle.model, {PerAgentValueTable::zeros(bundle.model, 0),
                                            PerAgentValueTable::zeros(bundle.model, 1)});
    Rng rng(8);
    const Trajectory traj = rollout(bundle.model, bundle.tilted, rng, bundle.model.horizon);
    const AdvantageSeries adv = gae(traj, critic, 1.0, 1.0, 2);
    for (int t = 0; t < traj.length(); ++t) {
        double remaining = 0.0;
        for (int l = t; l < traj.length(); ++l) remaining += traj.steps[l].reward;
        CHECK(adv.values[0][t] == doctest::Approx(remaining).epsilon(1e-12));
    }
}

TEST_CASE("gae: lambda = 0 reduces to one-step TD errors and is agent-identical") {
    const BuiltinBundle bundle = make_builtin("chain_gather");
    const OracleCritic critic(bundle.model, bundle.tilted);
    Rng rng(12);
    const Trajectory traj = rollout(bundle.model, bundle.tilted, rng, bundle.model.horizon);
    const AdvantageSeries adv = gae(traj, critic, 0.95, 1e-14, 2);
    for (int t = 0; t < traj.length(); ++t) {
        const double expected = traj.steps[t].reward + 0.95 * critic.state_value(traj, t + 1) -
                                critic.state_value(traj, t);
        CHECK(adv.values[0][t] == doctest::Approx(expected).epsilon(1e-9));
        CHECK(adv.values[0][t] == adv.values[1][t]);  // exact cross-agent equality
    }
}

TEST_CASE("coma: deterministic own policy zeroes the advantage") {
    const BuiltinBundle bundle = make_builtin("matrix_team");
    REQUIRE(bundle.optimal.has_value());
    const OracleCritic critic(bundle.model, *bundle.optimal);
    Rng rng(14);
    const Trajectory traj = rollout(bundle.model, *bundle.optimal, rng, bundle.model.horizon);
    const AdvantageSeries adv = coma(traj, critic);
    for (int i = 0; i < 2; ++i) {
        for (int t = 0; t < traj.length(); ++t) {
            CHECK(adv.values[i][t] == doctest::Approx(0.0).epsilon(1e-12));
        }
    }
}

TEST_CASE("coma: worked counterfactual baseline example") {
    // Q slice {1, 3}, uniform own policy, taken action has Q = 3 -> A = 1.
    DecPomdp model = make_identity_observation_model(1, 1, {2});
    model.transition[0][0][0] = 1.0;
    model.transition[0][1][0] = 1.0;
    model.reward[0][0] = 1.0;
    model.reward[0][1] = 3.0;
    model.reward_bound = 3.0;
    model.horizon = 1;
    const TabularPolicy policy = uniform_policy(model);
    const OracleCritic critic(model, policy);
    Trajectory traj;
    Transition tr;
    tr.state = 0;
    tr.actions = {1};
    tr.observations = {0};
    tr.reward = 3.0;
    tr.behavior_logp = {std::log(0.5)};
    traj.steps.push_back(tr);
    const AdvantageSeries adv = coma(traj, critic);
    CHECK(adv.values[0][0] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("coma: expected advantage under the target policy is zero") {
    const BuiltinBundle bundle = make_builtin("anomaly_team");
    const OracleCritic critic(bundle.model, bundle.tilted);
    const auto trajs = enumerate_trajectories(bundle.model, bundle.tilted, 3);
    for (int agent = 0; agent < 2; ++agent) {
        double expectation = 0.0;
        for (const auto& wt : trajs) {
            expectation += wt.probability * coma(wt.traj, critic).values[agent][0];
        }
        CHECK(std::abs(expectation) < 1e-10);
    }
}

TEST_CASE("dae: beta = 0 reduces to gae elementwise") {
    const BuiltinBundle bundle = make_builtin("anomaly_team");
    const OracleCritic critic(bundle.model, bundle.tilted);
    Rng rng(25);
    const Trajectory traj = rollout(bundle.model, bundle.tilted, rng, bundle.model.horizon);
    const AdvantageSeries d = dae(traj, critic, 0.99, 0.95, 0.0);
    const AdvantageSeries g = gae(traj, critic, 0.99, 0.95, 2);
    for (int i = 0; i < 2; ++i) {
        for (int t = 0; t < traj.length(); ++t) {
            CHECK(std::abs(d.values[i][t] - g.values[i][t]) <= 1e-12);
        }
    }
}

TEST_CASE("dae: single-action agent with beta = 1, lambda -> 0") {
    // With one action, E[r] = r, so delta = gamma V' - V at every step.
    DecPomdp model = make_identity_observation_model(1, 2, {1, 2});
    const JointActionSpace joint = model.joint();
    for (int s = 0; s < 2; ++s) {
        for (int a = 0; a < joint.num_joint(); ++a) model.transition[s][a][1 - s] = 1.0;
    }
    model.reward[0][0] = 0.5;
    model.reward[0][1] = 1.0;
    model.reward[1][0] = -0.5;
    model.reward[1][1] = 0.25;
    model.horizon = 4;
    model.discount = 0.9;
    const TabularPolicy policy = uniform_policy(model);
    const OracleCritic critic(model, policy);
    Rng rng(26);
    const Trajectory traj = rollout(model, policy, rng, model.horizon);
    const AdvantageSeries adv = dae(traj, critic, 0.9, 1e-14, 1.0);
    for (int t = 0; t < traj.length(); ++t) {
        const double expected =
            0.9 * critic.state_value(traj, t + 1) - critic.state_value(traj, t);
        CHECK(adv.values[0][t] == doctest::Approx(expected).epsilon(1e-8));
    }
}

TEST_CASE("dae: backward pass matches the direct double summation") {
    const BuiltinBundle bundle = make_builtin("matrix_team");
    const OracleCritic critic(bundle.model, bundle.tilted);
    Rng rng(27);
    const double gamma = 0.99, lambda = 0.95, beta = 0.5;
    for (int k = 0; k < 5; ++k) {
        const Trajectory traj = rollout(bundle.model, bundle.tilted, rng, bundle.model.horizon);
        const AdvantageSeries adv = dae(traj, critic, gamma, lambda, beta);
        const int T = traj.length();
        for (int i = 0; i < 2; ++i) {
            for (int t = 0; t < T; ++t) {
                double direct = 0.0;
                for (int l = 0; t + l < T; ++l) {
                    const double delta =
                        traj.steps[t + l].reward -
                        std::pow(beta, l + 1) * critic.expected_reward(traj, t + l, i) +
                        gamma * critic.state_value(traj, t + l + 1) -
                        critic.state_value(traj, t + l);
                    direct += std::pow(gamma * lambda, l) * delta;
                }
                CHECK(adv.values[i][t] == doctest::Approx(direct).epsilon(1e-10));
            }
        }
    }
}

TEST_CASE("advantage_gap: identical series gives exactly zero") {
    AdvantageSeries adv;
    adv.values = {{1.0, 2.0}, {1.0, 2.0}};
    const AdvantageGapStat stat = advantage_gap(adv, {1, 1}, 0);
    CHECK(stat.events == 2);
    CHECK(stat.mean == 0.0);
}

TEST_CASE("advantage_gap: two-agent worked example") {
    AdvantageSeries adv;
    adv.values = {{0.0}, {2.0}};  // anomalous agent 0 at t = 0
    const AdvantageGapStat stat = advantage_gap(adv, {1}, 0);
    CHECK(stat.events == 1);
    CHECK(stat.mean == doctest::Approx(2.0));
}

TEST_CASE("advantage_gap: no events yields an explicitly empty result") {
    AdvantageSeries adv;
    adv.values = {{1.0}, {0.5}};
    const AdvantageGapStat stat = advantage_gap(adv, {0}, 0);
    CHECK(stat.empty());
}

TEST_CASE("gpae separates the anomalous agent with exact critics") {
    const BuiltinBundle bundle = make_builtin("anomaly_team");
    const AnomalyConfig anomaly = *bundle.anomaly;
    const TabularPolicy mu = wrap_anomaly(bundle.tilted, anomaly, bundle.model);
    const OracleCritic critic(bundle.model, bundle.tilted);
    Rng rng(99);
    std::vector<AdvantageSeries> all_adv;
    std::vector<std::vector<std::uint8_t>> all_events;
    for (int k = 0; k < 200; ++k) {
        const Trajectory traj = rollout(bundle.model, mu, rng, bundle.model.horizon);
        const auto deltas = per_agent_td_errors(traj, critic, bundle.model.discount);
        const IsrSeries isr = compute_isr(traj, bundle.tilted);
        const TraceWeights traces = truncate(isr, TraceScheme::DoubleTruncation, 0.95, 1.05);
        all_adv.push_back(gpae_advantages(deltas, traces, bundle.model.discount));
        all_events.push_back(anomaly_events(traj, anomaly));
    }
    const AdvantageGapStat stat = advantage_gap_pooled(all_adv, all_events, anomaly.agent_index);
    CHECK(stat.events > 0);
    CHECK(stat.mean > 0.0);
}
