#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gpae/model.hpp"
#include "gpae/trajectory.hpp"

#include "json.hpp"

namespace gpae {

// Anomalous-behavior configuration: with probability p the designated agent
// executes the forced action instead of following its policy. The mixture is
// applied at the distribution level so importance ratios stay well defined;
// realized forced actions are recovered per trajectory via anomaly_events.
struct AnomalyConfig {
    int agent_index = 0;
    double probability = 0.05;
    int forced_action = 0;
    std::vector<std::uint8_t> event_log;  // attached per trajectory when used
};

struct BuiltinBundle {
    std::string name;
    DecPomdp model;
    TabularPolicy uniform;
    TabularPolicy tilted;                   // full-support, non-uniform reference
    std::optional<TabularPolicy> optimal;   // greedy joint policy where meaningful
    int goal_state = -1;                    // absorbing success state, -1 if none
    std::optional<AnomalyConfig> anomaly;
};

// name in {matrix_team, chain_gather, single_chain, anomaly_team}.
// params is a JSON object; unknown names throw std::invalid_argument.
BuiltinBundle make_builtin(const std::string& name, const nlohmann::json& params = {});

// mu^i = (1-p) * pi^i + p * delta(forced_action) for the designated agent.
TabularPolicy wrap_anomaly(const TabularPolicy& policy, const AnomalyConfig& cfg,
                           const DecPomdp& model);

// Marks timesteps where the designated agent's realized action equals the
// forced action. Length equals the trajectory length.
std::vector<std::uint8_t> anomaly_events(const Trajectory& traj, const AnomalyConfig& cfg);

}  // namespace gpae
