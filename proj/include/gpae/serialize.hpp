#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "gpae/correction.hpp"
#include "gpae/estimators.hpp"
#include "gpae/model.hpp"
#include "gpae/oracle.hpp"
#include "gpae/trainer.hpp"
#include "gpae/trajectory.hpp"

#include "json.hpp"

namespace gpae {

inline constexpr const char* kToolVersion = "gpae-lab 0.1.0";

nlohmann::json model_to_json(const DecPomdp& model);
DecPomdp model_from_json(const nlohmann::json& j);

nlohmann::json policy_to_json(const TabularPolicy& policy);
TabularPolicy policy_from_json(const nlohmann::json& j);

// Trajectories serialize to JSON lines, one transition per line; a blank
// line separates trajectories when several are written to one stream.
std::string trajectory_to_jsonl(const Trajectory& traj);
Trajectory trajectory_from_jsonl(const std::string& text);

nlohmann::json operator_report_to_json(const OperatorReport& report);

// 17-significant-digit formatting so emitted doubles round-trip exactly.
std::string format_double(double v);

std::string config_hash_hex(const nlohmann::json& config);

// CSV writer with the fixed metadata comment + header convention used by
// every emitted table.
class CsvWriter {
public:
    CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& columns,
              const nlohmann::json& config);
    void row(const std::vector<std::string>& cells);
    void close();
    ~CsvWriter();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

void write_text_file(const std::filesystem::path& path, const std::string& content);
void write_json_file(const std::filesystem::path& path, const nlohmann::json& j);
nlohmann::json read_json_file(const std::filesystem::path& path);

std::vector<std::string> metrics_columns();
std::vector<std::string> metrics_row(const MetricsRecord& record);

}  // namespace gpae
