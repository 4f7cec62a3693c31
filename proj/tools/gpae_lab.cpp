#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "gpae/experiments.hpp"
#include "gpae/serialize.hpp"
#include "gpae/trainer.hpp"

namespace {

namespace fs = std::filesystem;

constexpr int kExitOk = 0;
constexpr int kExitClaimFailure = 1;
constexpr int kExitUsage = 2;

fs::path resolve_out_dir(const std::string& out_flag) {
    if (!out_flag.empty()) return fs::path(out_flag);
    if (const char* env = std::getenv("GPAE_LAB_OUT")) return fs::path(env);
    return fs::path("out");
}

nlohmann::json load_config(const std::string& path) {
    try {
        return gpae::read_json_file(path);
    } catch (const nlohmann::json::parse_error& e) {
        throw std::invalid_argument("config '" + path + "' is not valid JSON: " + e.what());
    }
}

struct CommonArgs {
    std::string config_path;
    std::string out_dir;
    long long seed = -1;
    bool single_thread = false;
    int verbosity = 0;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "JSON config file")->required();
    cmd->add_option("--out", args.out_dir, "output directory (default: $GPAE_LAB_OUT or ./out)");
    cmd->add_option("--seed", args.seed, "seed override");
    cmd->add_flag("--single-thread", args.single_thread,
                  "force deterministic single-threaded execution");
    cmd->add_flag("-v,--verbose", args.verbosity, "verbose output");
}

int cmd_verify(const CommonArgs& args) {
    nlohmann::json j = load_config(args.config_path);
    gpae::VerifyConfig cfg = gpae::VerifyConfig::from_json(j);
    if (args.seed >= 0) cfg.seed = static_cast<std::uint64_t>(args.seed);
    const fs::path out = resolve_out_dir(args.out_dir);
    const auto results = gpae::run_verify(cfg, out);
    bool all_pass = true;
    for (const auto& claim : results) {
        std::cout << (claim.pass ? "[PASS] " : "[FAIL] ") << claim.claim
                  << (claim.informational ? " (informational)" : "") << "\n";
        if (!claim.pass && !claim.informational) all_pass = false;
    }
    std::cout << "certificates written to " << (out / "certificates").string() << "\n";
    return all_pass ? kExitOk : kExitClaimFailure;
}

int cmd_train(const CommonArgs& args) {
    nlohmann::json j = load_config(args.config_path);
    gpae::TrainConfig cfg = gpae::TrainConfig::from_json(j);
    if (args.seed >= 0) cfg.seed = static_cast<std::uint64_t>(args.seed);
    if (args.single_thread) cfg.single_thread = true;
    const fs::path out = resolve_out_dir(args.out_dir);
    fs::create_directories(out);

    gpae::Trainer trainer(cfg);
    gpae::CsvWriter metrics(out / "metrics.csv", gpae::metrics_columns(), cfg.to_json());
    bool aborted = false;
    std::string abort_reason;
    try {
        trainer.run([&](const gpae::MetricsRecord& record) {
            metrics.row(gpae::metrics_row(record));
            if (args.verbosity > 0) {
                std::cout << "iter " << record.iteration << " steps " << record.env_steps
                          << " return " << record.mean_return << "\n";
            }
        });
    } catch (const std::exception& e) {
        aborted = true;
        abort_reason = e.what();
    }
    metrics.close();
    gpae::write_json_file(out / "checkpoint.json", trainer.checkpoint());
    if (aborted) {
        std::cerr << "training aborted: " << abort_reason << "\n"
                  << "partial metrics written to " << (out / "metrics.csv").string() << "\n";
        return kExitClaimFailure;
    }
    if (args.verbosity > 0) {
        std::cout << "metrics written to " << (out / "metrics.csv").string() << "\n";
    }
    return kExitOk;
}

int cmd_compare(const CommonArgs& args) {
    nlohmann::json j = load_config(args.config_path);
    gpae::CompareConfig cfg = gpae::CompareConfig::from_json(j);
    if (args.seed >= 0) cfg.seed = static_cast<std::uint64_t>(args.seed);
    const fs::path out = resolve_out_dir(args.out_dir);
    const auto rows = gpae::run_compare(cfg, out);
    std::cout << rows.size() << " rows written to " << (out / "compare.csv").string() << "\n";
    return kExitOk;
}

int cmd_gap(const CommonArgs& args) {
    nlohmann::json j = load_config(args.config_path);
    gpae::GapConfig cfg = gpae::GapConfig::from_json(j);
    if (args.seed >= 0) cfg.seed = static_cast<std::uint64_t>(args.seed);
    const fs::path out = resolve_out_dir(args.out_dir);
    const auto rows = gpae::run_gap(cfg, out);
    std::cout << rows.size() << " rows written to " << (out / "gap_delta_a.csv").string()
              << " and " << (out / "gap_performance.csv").string() << "\n";
    return kExitOk;
}

int cmd_gradcheck(const CommonArgs& args) {
    nlohmann::json j = load_config(args.config_path);
    gpae::GradcheckConfig cfg = gpae::GradcheckConfig::from_json(j);
    if (args.seed >= 0) cfg.seed = static_cast<std::uint64_t>(args.seed);
    const fs::path out = resolve_out_dir(args.out_dir);
    const auto result = gpae::run_gradcheck(cfg, out);
    std::cout << (result.pass ? "[PASS]" : "[FAIL]")
              << " gradcheck: critic max rel err " << result.max_rel_error_critic
              << ", actor max rel err " << result.max_rel_error_actor << ", excluded "
              << result.excluded_points << " boundary points\n";
    return result.pass ? kExitOk : kExitClaimFailure;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"gpae-lab: per-agent advantage estimation laboratory"};
    app.require_subcommand(1);

    CommonArgs verify_args, train_args, compare_args, gap_args, gradcheck_args;
    CLI::App* verify = app.add_subcommand("verify", "run the theorem certification suite");
    add_common(verify, verify_args);
    CLI::App* train = app.add_subcommand("train", "run the training loop");
    add_common(train, train_args);
    CLI::App* compare = app.add_subcommand("compare", "truncation-scheme gap comparison");
    add_common(compare, compare_args);
    CLI::App* gap = app.add_subcommand("gap", "anomaly advantage-gap experiment");
    add_common(gap, gap_args);
    CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient check");
    add_common(gradcheck, gradcheck_args);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (verify->parsed()) return cmd_verify(verify_args);
        if (train->parsed()) return cmd_train(train_args);
        if (compare->parsed()) return cmd_compare(compare_args);
        if (gap->parsed()) return cmd_gap(gap_args);
        if (gradcheck->parsed()) return cmd_gradcheck(gradcheck_args);
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitClaimFailure;
    }
    return kExitUsage;
}
