/*
 Copyright 2026 The ddpc Authors

 Licensed under the Apache License, Version 2.0 (the "License");
 you may not use this file except in compliance with the License.
 You may obtain a copy of the License at

      https://www.apache.org/licenses/LICENSE-2.0

 Unless required by applicable law or agreed to in writing, software
 distributed under the License is distributed on an "AS IS" BASIS,
 WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 See the License for the specific language governing permissions and
 limitations under the License.
*/
#ifndef DDPC_HARNESS_HPP
#define DDPC_HARNESS_HPP

#include "ddpc/deepc.hpp"
#include "ddpc/linsys.hpp"
#include "ddpc/types.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace ddpc::harness {

/// Schema violation in a scenario document. `key()` is the dotted path.
class ScenarioError : public std::invalid_argument {
public:
    ScenarioError(std::string key, const std::string& what)
        : std::invalid_argument("scenario key '" + key + "': " + what), key_(std::move(key)) {}
    const std::string& key() const { return key_; }

private:
    std::string key_;
};

struct AgentConfig {
    Vector start;  // position, metres
    Vector goal;
};

enum class Collection { closed_loop, open_loop };

struct ScenarioConfig {
    std::string name = "scenario";
    std::string model = "drone";  // "drone" or a model document path
    linsys::StateSpace plant = linsys::make_drone_model();
    std::vector<AgentConfig> agents;
    std::vector<int> position_indices{0, 1, 2};

    int T_p = 1;
    int T_f = 30;
    int T_num = 214;

    double q_position = 1.0;
    double q_other = 0.0;
    double r_input = 0.0;

    double d_safe = 0.3;
    Matrix phi;  // N x N
    double sigma_scale = 0.01;
    double sigma_growth = 1.0;

    deepc::Box input_bounds;
    std::optional<deepc::Box> output_bounds;

    double excitation_lo = -0.5;
    double excitation_hi = 0.5;
    Collection collection = Collection::closed_loop;
    double feedback_q = 1.0;
    double feedback_r = 1.0;

    std::uint64_t data_seed = 1;
    std::uint64_t mc_seed = 2;

    double solver_eps = 1e-6;
    int solver_max_iters = 200;

    int steps = 150;
    bool soft_collisions = false;
    bool noisy_data = false;
    int n_scp = 1;
    double anchor_swirl = 0.3;
    double anchor_speed = 0.25;  // m/s
    Vector swirl_axis;
    deepc::Controller controller = deepc::Controller::deepc;

    int N() const { return static_cast<int>(agents.size()); }

    /// Canonical document with every default filled in.
    std::string to_json() const;
    /// SHA-256 of the canonical document.
    std::string hash() const;
    /// SHA-256 over the fields that determine the collected data only.
    std::string collection_hash() const;
};

/// Parse and validate. `base_dir` resolves relative model paths.
ScenarioConfig scenario_from_json(const std::string& text, const std::filesystem::path& base_dir = {});
ScenarioConfig parse_scenario(const std::filesystem::path& path);
void validate(const ScenarioConfig& cfg);

/// Overrides from the command line; unset fields keep scenario values.
struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<double> solver_eps;
    std::optional<int> scp_iters;
    bool soft_collisions = false;
    std::optional<deepc::Controller> controller;
    std::optional<int> steps;
};

void apply_overrides(ScenarioConfig& cfg, const Overrides& o);

// ---------------------------------------------------------------------------
// Data collection

struct AgentData {
    linsys::FeedbackGain gain;
    linsys::TrajectoryDataset data;
    double w_norm_2 = 0.0;
    double w_norm_inf = 0.0;
    int w_rows = 0;
    int w_cols = 0;
};

/// Per-agent seed: data_seed + agent index.
std::uint64_t agent_seed(const ScenarioConfig& cfg, int agent);

/// Start state of an agent (positions set, everything else zero).
Vector initial_state(const ScenarioConfig& cfg, int agent);

/// Gain, data and W norms for one agent; `collection` overrides the scenario mode.
AgentData collect_agent(const ScenarioConfig& cfg, int agent, std::optional<Collection> collection = {});

struct CollectResult {
    std::vector<AgentData> agents;
};

/// Collect every agent and write agent_<i>.json plus norms.csv into `out`.
CollectResult cmd_collect(const ScenarioConfig& cfg, const std::filesystem::path& out);

// ---------------------------------------------------------------------------
// Missions

struct Metrics {
    double min_pairwise_distance = 0.0;
    std::vector<double> terminal_error;
    double max_input_violation = 0.0;
    double mean_solve_seconds = 0.0;
    double max_solve_seconds = 0.0;
    int total_qp_iterations = 0;
    int max_qp_iterations = 0;
    int soft_steps = 0;
    std::vector<double> w_norm_2;
    std::vector<double> w_norm_inf;
};

/// Mission inputs built from a scenario and its datasets.
deepc::MissionSetup mission_setup(const ScenarioConfig& cfg, const std::vector<linsys::TrajectoryDataset>& data);

Metrics compute_metrics(const ScenarioConfig& cfg, const deepc::MissionLog& log);

/// Hard invariants: distance >= d_safe, inputs within bounds, no abort.
bool invariants_hold(const ScenarioConfig& cfg, const deepc::MissionLog& log, const Metrics& metrics);

struct RunResult {
    deepc::MissionLog log;
    Metrics metrics;
    bool ok = false;
};

/// Load datasets from `data`, run, write the log into `out`.
RunResult cmd_run(const ScenarioConfig& cfg, const std::filesystem::path& data, const std::filesystem::path& out);

/// Write the log CSVs and summary.json.
void write_log(const ScenarioConfig& cfg, const deepc::MissionLog& log, const Metrics& metrics,
               const std::filesystem::path& out);

// ---------------------------------------------------------------------------
// Log files

/// Per-step, per-agent samples read back from a log directory.
struct LoadedLog {
    std::string scenario_hash;
    int agents = 0;
    double dt = 0.0;
    double d_safe = 0.0;
    std::vector<int> position_indices;
    std::vector<std::vector<Vector>> states;  // [step][agent], steps 0..S
    std::vector<std::vector<Vector>> inputs;  // [step][agent], steps 0..S-1
    std::vector<std::vector<Vector>> outputs;
};

LoadedLog load_log(const std::filesystem::path& dir);

struct Comparison {
    int steps = 0;
    std::vector<double> input_diff;   // per step, max abs over agents and channels
    std::vector<double> output_diff;
    double max_input_diff = 0.0;
    double max_output_diff = 0.0;
    double max_input_diff_relative = 0.0;
    double max_output_diff_relative = 0.0;
};

/// Errors if the logs differ in agent count, step count or scenario.
Comparison cmd_compare(const std::filesystem::path& a, const std::filesystem::path& b);

/// Plot-ready CSVs: trajectory_3d, projections, distances, thrust.
void cmd_plotdata(const std::filesystem::path& log, const std::filesystem::path& out);

}  // namespace ddpc::harness

#endif  // DDPC_HARNESS_HPP
