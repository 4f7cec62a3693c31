#include "gpae/serialize.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

namespace gpae {

nlohmann::json model_to_json(const DecPomdp& model) {
    nlohmann::json j;
    j["schema"] = "gpae.model.v1";
    j["num_agents"] = model.num_agents;
    j["num_states"] = model.num_states;
    j["actions_per_agent"] = model.actions_per_agent;
    j["obs_per_agent"] = model.obs_per_agent;
    j["transition"] = model.transition;
    j["reward"] = model.reward;
    j["observation"] = model.observation;
    j["initial_dist"] = model.initial_dist;
    j["discount"] = model.discount;
    j["horizon"] = model.horizon;
    j["reward_bound"] = model.reward_bound;
    return j;
}

DecPomdp model_from_json(const nlohmann::json& j) {
    DecPomdp model;
    model.num_agents = j.at("num_agents");
    model.num_states = j.at("num_states");
    model.actions_per_agent = j.at("actions_per_agent").get<std::vector<int>>();
    model.obs_per_agent = j.at("obs_per_agent").get<std::vector<int>>();
    model.transition = j.at("transition").get<std::vector<std::vector<Vec>>>();
    model.reward = j.at("reward").get<std::vector<Vec>>();
    model.observation = j.at("observation").get<std::vector<std::vector<Vec>>>();
    model.initial_dist = j.at("initial_dist").get<Vec>();
    model.discount = j.at("discount");
    model.horizon = j.at("horizon");
    model.reward_bound = j.at("reward_bound");
    return model;
}

nlohmann::json policy_to_json(const TabularPolicy& policy) {
    nlohmann::json j;
    j["schema"] = "gpae.policy.v1";
    j["per_agent"] = policy.per_agent;
    j["full_support"] = policy.full_support;
    return j;
}

TabularPolicy policy_from_json(const nlohmann::json& j) {
    TabularPolicy policy;
    policy.per_agent = j.at("per_agent").get<std::vector<std::vector<Vec>>>();
    policy.full_support = j.value("full_support", false);
    return policy;
}

std::string trajectory_to_jsonl(const Trajectory& traj) {
    std::ostringstream os;
    for (const auto& step : traj.steps) {
        nlohmann::json j;
        j["state"] = step.state;
        j["observations"] = step.observations;
        j["actions"] = step.actions;
        j["reward"] = step.reward;
        j["behavior_logp"] = step.behavior_logp;
        os << j.dump() << "\n";
    }
    return os.str();
}

Trajectory trajectory_from_jsonl(const std::string& text) {
    Trajectory traj;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) break;
        const nlohmann::json j = nlohmann::json::parse(line);
        Transition step;
        step.state = j.at("state");
        step.observations = j.at("observations").get<std::vector<int>>();
        step.actions = j.at("actions").get<std::vector<int>>();
        step.reward = j.at("reward");
        step.behavior_logp = j.at("behavior_logp").get<Vec>();
        traj.steps.push_back(std::move(step));
    }
    return traj;
}

nlohmann::json operator_report_to_json(const OperatorReport& report) {
    nlohmann::json j;
    j["schema"] = "gpae.operator_report.v1";
    j["iterations"] = report.iterations;
    j["converged"] = report.converged;
    j["deltas"] = report.deltas;
    j["ratios"] = report.ratios;
    j["final_delta"] = report.final_delta;
    return j;
}

std::string format_double(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

std::string config_hash_hex(const nlohmann::json& config) {
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << fnv1a(config.dump());
    return os.str();
}

struct CsvWriter::Impl {
    std::ofstream out;
};

CsvWriter::CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& columns,
                     const nlohmann::json& config)
    : impl_(std::make_unique<Impl>()) {
    std::filesystem::create_directories(path.parent_path());
    impl_->out.open(path);
    if (!impl_->out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
    impl_->out << "# " << kToolVersion << " config_hash=" << config_hash_hex(config) << "\n";
    for (std::size_t c = 0; c < columns.size(); ++c) {
        impl_->out << columns[c] << (c + 1 < columns.size() ? "," : "");
    }
    impl_->out << "\n";
}

void CsvWriter::row(const std::vector<std::string>& cells) {
    for (std::size_t c = 0; c < cells.size(); ++c) {
        impl_->out << cells[c] << (c + 1 < cells.size() ? "," : "");
    }
    impl_->out << "\n";
}

void CsvWriter::close() {
    if (impl_->out.is_open()) impl_->out.close();
}

CsvWriter::~CsvWriter() { close(); }

void write_text_file(const std::filesystem::path& path, const std::string& content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
    out << content;
}

void write_json_file(const std::filesystem::path& path, const nlohmann::json& j) {
    write_text_file(path, j.dump(2) + "\n");
}

nlohmann::json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
    nlohmann::json j;
    in >> j;
    return j;
}

std::vector<std::string> metrics_columns() {
    return {"iteration", "env_steps",  "mean_return", "success_rate", "actor_loss",
            "critic_loss", "entropy",  "delta_a",     "delta_c",      "wall_clock_s"};
}

std::vector<std::string> metrics_row(const MetricsRecord& r) {
    return {std::to_string(r.iteration), std::to_string(r.env_steps), format_double(r.mean_return),
            format_double(r.success_rate), format_double(r.actor_loss),
            format_double(r.critic_loss), format_double(r.entropy), format_double(r.delta_a),
            format_double(r.delta_c), format_double(r.wall_clock_s)};
}

}  // namespace gpae
