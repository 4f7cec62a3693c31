#include "doctest.h"

#include "gpae/builtins.hpp"
#include "gpae/model.hpp"

using namespace gpae;

TEST_CASE("joint action space round-trips and complement indexing") {
    JointActionSpace joint({2, 3, 2});
    CHECK(joint.num_joint() == 12);
    for (int a = 0; a < joint.num_joint(); ++a) {
        const auto parts = joint.decode(a);
        CHECK(joint.encode(parts) == a);
        for (int i = 0; i < 3; ++i) {
            CHECK(joint.agent_action(a, i) == parts[i]);
            const int comp = joint.complement_of(a, i);
            CHECK(joint.compose(i, parts[i], comp) == a);
        }
    }
    CHECK(joint.num_complement(0) == 6);
    CHECK(joint.num_complement(1) == 4);
}

TEST_CASE("validate_model passes for identity observation uniform model") {
    DecPomdp model = make_identity_observation_model(2, 3, {2, 2});
    for (int s = 0; s < 3; ++s) {
        for (int a = 0; a < 4; ++a) {
            for (int sp = 0; sp < 3; ++sp) model.transition[s][a][sp] = 1.0 / 3.0;
        }
    }
    CHECK(validate_model(model).ok());
}

TEST_CASE("validate_model reports bad transition row with its index") {
    DecPomdp model = make_identity_observation_model(1, 2, {2});
    model.transition[0][0][0] = 0.9;  // row sums to 0.9
    model.transition[0][1][0] = 1.0;
    model.transition[1][0][1] = 1.0;
    model.transition[1][1][1] = 1.0;
    const ValidationReport report = validate_model(model);
    CHECK_FALSE(report.ok());
    bool found = false;
    for (const auto& issue : report.issues) {
        if (issue.what.find("transition(s=0)") != std::string::npos && issue.index == 0) {
            found = true;
        }
    }
    CHECK(found);
}

TEST_CASE("validate_model flags reward beyond the bound") {
    DecPomdp model = make_identity_observation_model(1, 1, {1});
    model.transition[0][0][0] = 1.0;
    model.reward[0][0] = 2.0;
    model.reward_bound = 1.0;
    CHECK_FALSE(validate_model(model).ok());
}

TEST_CASE("all built-ins validate and expose reference policies") {
    for (const char* name : {"matrix_team", "chain_gather", "single_chain", "anomaly_team"}) {
        const BuiltinBundle bundle = make_builtin(name);
        CHECK(validate_model(bundle.model).ok());
        CHECK(validate_policy(bundle.model, bundle.uniform).ok());
        CHECK(validate_policy(bundle.model, bundle.tilted).ok());
        CHECK(bundle.tilted.full_support);
    }
    CHECK_THROWS_AS(make_builtin("no_such_model"), std::invalid_argument);
}

TEST_CASE("built-in shapes") {
    CHECK(make_builtin("single_chain").model.num_agents == 1);
    const BuiltinBundle matrix = make_builtin("matrix_team");
    CHECK(matrix.model.joint().num_joint() == 4);
    const BuiltinBundle anomaly = make_builtin("anomaly_team");
    CHECK(anomaly.anomaly.has_value());
    CHECK(anomaly.anomaly->probability == 0.05);
    CHECK(anomaly.model.actions_per_agent[0] == 3);
}

TEST_CASE("wrap_anomaly with p = 0 is an exact identity") {
    const BuiltinBundle bundle = make_builtin("anomaly_team");
    AnomalyConfig cfg = *bundle.anomaly;
    cfg.probability = 0.0;
    const TabularPolicy wrapped = wrap_anomaly(bundle.tilted, cfg, bundle.model);
    for (int i = 0; i < bundle.model.num_agents; ++i) {
        for (std::size_t o = 0; o < bundle.tilted.per_agent[i].size(); ++o) {
            for (std::size_t a = 0; a < bundle.tilted.per_agent[i][o].size(); ++a) {
                CHECK(wrapped.per_agent[i][o][a] == bundle.tilted.per_agent[i][o][a]);
            }
        }
    }
}

TEST_CASE("wrap_anomaly with p = 1 is deterministic at the forced action") {
    const BuiltinBundle bundle = make_builtin("anomaly_team");
    AnomalyConfig cfg = *bundle.anomaly;
    cfg.probability = 1.0;
    const TabularPolicy wrapped = wrap_anomaly(bundle.uniform, cfg, bundle.model);
    for (const auto& row : wrapped.per_agent[cfg.agent_index]) {
        CHECK(row[cfg.forced_action] == doctest::Approx(1.0).epsilon(1e-15));
    }
}

TEST_CASE("wrap_anomaly mixture arithmetic matches the 5% stop perturbation") {
    // Uniform over 4 actions including the stop: 0.05 + 0.95 * 0.25 = 0.2875.
    DecPomdp model = make_identity_observation_model(2, 1, {4, 4});
    for (int a = 0; a < model.joint().num_joint(); ++a) model.transition[0][a][0] = 1.0;
    TabularPolicy uniform = uniform_policy(model);
    AnomalyConfig cfg;
    cfg.agent_index = 0;
    cfg.probability = 0.05;
    cfg.forced_action = 3;
    const TabularPolicy wrapped = wrap_anomaly(uniform, cfg, model);
    CHECK(wrapped.per_agent[0][0][3] == doctest::Approx(0.2875).epsilon(1e-12));
    CHECK(wrapped.per_agent[0][0][0] == doctest::Approx(0.2375).epsilon(1e-12));
    double sum = 0.0;
    for (double p : wrapped.per_agent[0][0]) sum += p;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("wrap_anomaly rejects invalid indices") {
    const BuiltinBundle bundle = make_builtin("matrix_team");
    AnomalyConfig cfg;
    cfg.agent_index = 5;
    cfg.forced_action = 0;
    CHECK_THROWS_AS(wrap_anomaly(bundle.uniform, cfg, bundle.model), std::invalid_argument);
    cfg.agent_index = 0;
    cfg.forced_action = 7;
    CHECK_THROWS_AS(wrap_anomaly(bundle.uniform, cfg, bundle.model), std::invalid_argument);
}

TEST_CASE("distribution rows of built-ins sum to one within 1e-12") {
    for (const char* name : {"matrix_team", "chain_gather", "single_chain", "anomaly_team"}) {
        const BuiltinBundle bundle = make_builtin(name);
        const DecPomdp& model = bundle.model;
        for (int s = 0; s < model.num_states; ++s) {
            for (int a = 0; a < model.joint().num_joint(); ++a) {
                double sum = 0.0;
                for (double p : model.transition[s][a]) sum += p;
                CHECK(std::abs(sum - 1.0) < 1e-12);
            }
        }
        for (const auto& policy : {bundle.uniform, bundle.tilted}) {
            for (const auto& agent_rows : policy.per_agent) {
                for (const auto& row : agent_rows) {
                    double sum = 0.0;
                    for (double p : row) sum += p;
                    CHECK(std::abs(sum - 1.0) < 1e-12);
                }
            }
        }
    }
}
