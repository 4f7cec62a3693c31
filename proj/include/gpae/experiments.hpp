#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "gpae/builtins.hpp"
#include "gpae/oracle.hpp"
#include "gpae/trainer.hpp"

#include "json.hpp"

namespace gpae {

// ---------------------------------------------------------------- verify --

struct VerifyConfig {
    std::vector<std::string> models = {"matrix_team", "chain_gather", "single_chain",
                                       "anomaly_team"};
    int contraction_pairs = 20;
    std::vector<double> lambdas = {0.5, 0.95, 1.0};
    std::uint64_t seed = 1;
    // Test-harness fault injection; 1.0 in legitimate runs.
    double fault_gamma_scale = 1.0;
    long enumeration_budget = 1000000;

    static VerifyConfig from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

struct ClaimResult {
    std::string claim;
    bool pass = false;
    bool informational = false;
    nlohmann::json measured;
};

// Runs the oracle property suite and writes one JSON certificate per claim
// under out_dir/certificates. Returns the claim results in emission order.
std::vector<ClaimResult> run_verify(const VerifyConfig& cfg,
                                    const std::filesystem::path& out_dir);

// Behavior perturbation used across experiments: (1-kappa) * policy +
// kappa * uniform, per agent and observation.
TabularPolicy perturb_policy(const TabularPolicy& policy, double kappa);

// --------------------------------------------------------------- compare --

struct CompareConfig {
    std::string env = "matrix_team";
    nlohmann::json env_params = nlohmann::json::object();
    int seeds = 20;
    int trajectories_per_seed = 50;
    double behavior_noise = 0.3;
    double lambda = 0.95;
    double eta = 1.05;
    std::vector<double> eta_sweep = {1.0, 1.05, 1.1, 1.15};
    long train_steps = 0;  // 0 skips the downstream-return column
    nlohmann::json train_overrides = nlohmann::json::object();
    std::uint64_t seed = 1;

    static CompareConfig from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

struct CompareRow {
    std::string scheme;
    double lambda = 0.0;
    double eta = 0.0;
    int seed = 0;
    double d_individual = 0.0;
    double d_joint = 0.0;
    double gap = 0.0;
    double downstream_return = std::nan("");
};

std::vector<CompareRow> run_compare(const CompareConfig& cfg,
                                    const std::filesystem::path& out_dir);

// ------------------------------------------------------------------- gap --

struct GapConfig {
    std::vector<std::string> estimators = {"gae", "coma", "dae", "gpae_on", "gpae_off"};
    int seeds = 20;
    int eval_trajectories = 64;
    int eval_episodes = 128;
    nlohmann::json train = nlohmann::json::object();  // TrainConfig template
    std::uint64_t seed = 1;

    static GapConfig from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

struct GapRow {
    std::string estimator;
    int seed = 0;
    double delta_a = std::nan("");
    long events = 0;
    double performance = std::nan("");
    double success_rate = std::nan("");
};

std::vector<GapRow> run_gap(const GapConfig& cfg, const std::filesystem::path& out_dir);

// ------------------------------------------------------------- gradcheck --

struct GradcheckConfig {
    std::string env = "anomaly_team";
    nlohmann::json env_params = nlohmann::json::object();
    int points = 50;
    double step = 1e-5;
    int hidden = 16;
    std::uint64_t seed = 1;

    static GradcheckConfig from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

struct GradcheckResult {
    double max_rel_error_critic = 0.0;
    double max_rel_error_actor = 0.0;
    int excluded_points = 0;
    bool pass = false;
};

GradcheckResult run_gradcheck(const GradcheckConfig& cfg, const std::filesystem::path& out_dir);

// ----------------------------------------------------------------- stats --

// One-sided p-value for H0: mean <= 0 using a Student-t test.
double one_sided_t_pvalue(const Vec& samples);

}  // namespace gpae
