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
#include "ddpc/behavior.hpp"
#include "ddpc/csv.hpp"
#include "ddpc/harness.hpp"

#include "json_util.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <limits>

namespace ddpc::harness {

namespace {

using detail::json;
namespace fs = std::filesystem;

std::string agent_file(int i) { return fmt::format("agent_{}.json", i); }

Vector positions(const ScenarioConfig& c, const Vector& y) {
    Vector p(static_cast<Eigen::Index>(c.position_indices.size()));
    for (std::size_t k = 0; k < c.position_indices.size(); ++k) p(static_cast<Eigen::Index>(k)) = y(c.position_indices[k]);
    return p;
}

Vector output_with_positions(const ScenarioConfig& c, const Vector& pos) {
    Vector y = Vector::Zero(c.plant.q());
    for (std::size_t k = 0; k < c.position_indices.size(); ++k) y(c.position_indices[k]) = pos(static_cast<Eigen::Index>(k));
    return y;
}

std::vector<std::string> numbered(const std::string& prefix, int count) {
    std::vector<std::string> out;
    for (int k = 0; k < count; ++k) out.push_back(fmt::format("{}{}", prefix, k));
    return out;
}

std::vector<std::string> pair_columns(int N) {
    std::vector<std::string> out;
    for (int i = 0; i < N; ++i) {
        for (int j = i + 1; j < N; ++j) out.push_back(fmt::format("d_{}_{}", i, j));
    }
    return out;
}

std::vector<std::string> row_of(std::initializer_list<std::string> head, const Vector& v) {
    std::vector<std::string> r(head);
    for (Eigen::Index k = 0; k < v.size(); ++k) r.push_back(format_number(v(k)));
    return r;
}

CsvTable agent_table(const std::vector<std::vector<Vector>>& series, const std::string& prefix, int width) {
    CsvTable t;
    t.header = {"step", "agent"};
    for (auto& h : numbered(prefix, width)) t.header.push_back(h);
    for (std::size_t s = 0; s < series.size(); ++s) {
        for (std::size_t i = 0; i < series[s].size(); ++i) {
            t.rows.push_back(row_of({std::to_string(s), std::to_string(i)}, series[s][i]));
        }
    }
    return t;
}

std::vector<std::vector<Vector>> read_agent_table(const fs::path& path, int agents, int width, const std::string& prefix) {
    const CsvTable t = read_csv(path);
    std::vector<std::vector<Vector>> out;
    const auto step_col = t.column("step");
    const auto agent_col = t.column("agent");
    std::vector<std::size_t> cols;
    for (const auto& h : numbered(prefix, width)) cols.push_back(t.column(h));
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const auto s = static_cast<std::size_t>(t.number(r, step_col));
        const auto i = static_cast<std::size_t>(t.number(r, agent_col));
        if (s >= out.size()) out.resize(s + 1, std::vector<Vector>(static_cast<std::size_t>(agents)));
        if (i >= static_cast<std::size_t>(agents)) throw std::invalid_argument(path.string() + ": agent index out of range");
        Vector v(width);
        for (int k = 0; k < width; ++k) v(k) = t.number(r, cols[static_cast<std::size_t>(k)]);
        out[s][i] = std::move(v);
    }
    return out;
}

}  // namespace

std::uint64_t agent_seed(const ScenarioConfig& cfg, int agent) {
    return cfg.data_seed + static_cast<std::uint64_t>(agent);
}

Vector initial_state(const ScenarioConfig& cfg, int agent) {
    const Vector y = output_with_positions(cfg, cfg.agents.at(static_cast<std::size_t>(agent)).start);
    return cfg.plant.C().completeOrthogonalDecomposition().solve(y);
}

AgentData collect_agent(const ScenarioConfig& cfg, int agent, std::optional<Collection> collection) {
    const auto& plant = cfg.plant;
    const Collection mode = collection.value_or(cfg.collection);
    const Vector x0 = initial_state(cfg, agent);
    const Matrix excitation =
        linsys::uniform_excitation(plant.m(), cfg.T_num, cfg.excitation_lo, cfg.excitation_hi, agent_seed(cfg, agent));
    AgentData out;
    if (mode == Collection::closed_loop) {
        out.gain = linsys::design_stabilizing_gain(plant, cfg.feedback_q * Matrix::Identity(plant.n(), plant.n()),
                                                   cfg.feedback_r * Matrix::Identity(plant.m(), plant.m()));
        out.data = linsys::simulate_closed_loop(plant, out.gain, excitation, x0);
    } else {
        out.gain.K = Matrix::Zero(plant.m(), plant.q());
        out.data = linsys::simulate_open_loop(plant, excitation, x0);
    }
    const int L = behavior::excitation_order(cfg.T_p, cfg.T_f, plant.n());
    if (!behavior::is_persistently_exciting(out.data.u, L)) {
        throw std::runtime_error(fmt::format(
            "agent {}: collected inputs are not persistently exciting of order {}; "
            "increase T_num or widen the excitation range",
            agent, L));
    }
    const auto W = behavior::build_behavior_matrix(out.data, cfg.T_p, cfg.T_f, plant);
    out.w_norm_2 = behavior::norm_2(W.W());
    out.w_norm_inf = behavior::norm_inf(W.W());
    out.w_rows = W.rows();
    out.w_cols = W.n_cols();
    return out;
}

CollectResult cmd_collect(const ScenarioConfig& cfg, const fs::path& out) {
    fs::create_directories(out);
    CollectResult result;
    CsvTable norms;
    norms.header = {"agent", "rows", "cols", "norm_2", "norm_inf", "open_loop_norm_2", "open_loop_norm_inf"};
    for (int i = 0; i < cfg.N(); ++i) {
        AgentData d = collect_agent(cfg, i);
        AgentData open = cfg.collection == Collection::open_loop ? d : collect_agent(cfg, i, Collection::open_loop);
        json extra = {
            {"agent", i},
            {"collection", cfg.collection == Collection::closed_loop ? "closed" : "open"},
            {"collection_hash", cfg.collection_hash()},
            {"seed", agent_seed(cfg, i)},
            {"K", detail::matrix_to_json(d.gain.K)},
        };
        behavior::save_dataset(d.data, out / agent_file(i), extra.dump());
        norms.rows.push_back({std::to_string(i), std::to_string(d.w_rows), std::to_string(d.w_cols),
                              format_number(d.w_norm_2), format_number(d.w_norm_inf), format_number(open.w_norm_2),
                              format_number(open.w_norm_inf)});
        spdlog::info("agent {}: W {}x{}, |W|_2 = {:.6g}, |W|_inf = {:.6g} (open loop {:.6g}, {:.6g})", i, d.w_rows,
                     d.w_cols, d.w_norm_2, d.w_norm_inf, open.w_norm_2, open.w_norm_inf);
        result.agents.push_back(std::move(d));
    }
    write_csv(out / "norms.csv", norms);
    detail::write_text_file(out / "scenario.json", cfg.to_json() + "\n");
    return result;
}

deepc::MissionSetup mission_setup(const ScenarioConfig& cfg, const std::vector<linsys::TrajectoryDataset>& data) {
    detail::require_dims(static_cast<int>(data.size()) == cfg.N(), "one dataset per agent is required");
    const auto& plant = cfg.plant;
    const int m = plant.m(), q = plant.q(), Tf = cfg.T_f;

    Vector qdiag = Vector::Constant(q, cfg.q_other);
    for (int idx : cfg.position_indices) qdiag(idx) = cfg.q_position;
    Matrix Q = Matrix::Zero(q * Tf, q * Tf);
    for (int k = 0; k < Tf; ++k) Q.block(k * q, k * q, q, q) = qdiag.asDiagonal();
    const Matrix R = cfg.r_input * Matrix::Identity(m * Tf, m * Tf);

    deepc::CollisionGeometry geometry{
        deepc::selection_matrix(cfg.position_indices, q),
        deepc::covariance_schedule(cfg.sigma_scale * Matrix::Identity(q, q), cfg.sigma_growth, Tf)};

    deepc::MissionSetup setup;
    setup.d_safe = cfg.d_safe;
    setup.phi = cfg.phi;
    setup.steps = cfg.steps;
    setup.controller = cfg.controller;
    setup.anchor_swirl = cfg.anchor_swirl;
    setup.anchor_speed = cfg.anchor_speed;
    setup.swirl_axis = cfg.swirl_axis;
    setup.options.solver.eps_prim = cfg.solver_eps;
    setup.options.solver.eps_dual = cfg.solver_eps;
    setup.options.solver.max_iters = cfg.solver_max_iters;
    setup.options.n_scp = cfg.n_scp;
    setup.options.soft_collisions = cfg.soft_collisions;
    setup.options.noisy.enabled = cfg.noisy_data;

    for (int i = 0; i < cfg.N(); ++i) {
        const Vector x0 = initial_state(cfg, i);
        const Vector y0 = plant.C() * x0;
        Vector r(q * Tf);
        const Vector goal = output_with_positions(cfg, cfg.agents[static_cast<std::size_t>(i)].goal);
        for (int k = 0; k < Tf; ++k) r.segment(k * q, q) = goal;
        deepc::AgentWindow window{Vector::Zero(m * cfg.T_p), y0.replicate(cfg.T_p, 1)};
        deepc::AgentSpec spec{behavior::build_behavior_matrix(data[static_cast<std::size_t>(i)], cfg.T_p, Tf, plant),
                              Q,
                              R,
                              r,
                              cfg.input_bounds,
                              cfg.output_bounds,
                              geometry};
        setup.agents.push_back(deepc::MissionAgent{plant, x0, std::move(spec), std::move(window)});
    }
    return setup;
}

Metrics compute_metrics(const ScenarioConfig& cfg, const deepc::MissionLog& log) {
    Metrics mt;
    const auto history = log.state_history();
    const Matrix& C = cfg.plant.C();
    mt.min_pairwise_distance = std::numeric_limits<double>::infinity();
    for (const auto& xs : history) {
        for (std::size_t i = 0; i < xs.size(); ++i) {
            for (std::size_t j = i + 1; j < xs.size(); ++j) {
                const double d = (positions(cfg, C * xs[i]) - positions(cfg, C * xs[j])).norm();
                mt.min_pairwise_distance = std::min(mt.min_pairwise_distance, d);
            }
        }
    }
    if (!history.empty()) {
        for (int i = 0; i < cfg.N(); ++i) {
            const Vector p = positions(cfg, C * history.back()[static_cast<std::size_t>(i)]);
            mt.terminal_error.push_back((p - cfg.agents[static_cast<std::size_t>(i)].goal).norm());
        }
    }
    double seconds = 0.0;
    for (const auto& s : log.steps) {
        for (const auto& u : s.u) {
            const double over = (u - cfg.input_bounds.hi).maxCoeff();
            const double under = (cfg.input_bounds.lo - u).maxCoeff();
            mt.max_input_violation = std::max({mt.max_input_violation, over, under});
        }
        seconds += s.solve_seconds;
        mt.max_solve_seconds = std::max(mt.max_solve_seconds, s.solve_seconds);
        mt.total_qp_iterations += s.qp_iterations;
        mt.max_qp_iterations = std::max(mt.max_qp_iterations, s.qp_iterations);
        mt.soft_steps += s.soft ? 1 : 0;
    }
    mt.mean_solve_seconds = log.steps.empty() ? 0.0 : seconds / static_cast<double>(log.steps.size());
    return mt;
}

bool invariants_hold(const ScenarioConfig& cfg, const deepc::MissionLog& log, const Metrics& mt) {
    return !log.aborted && static_cast<int>(log.steps.size()) == cfg.steps && mt.min_pairwise_distance >= cfg.d_safe &&
           mt.max_input_violation <= 0.0;
}

RunResult cmd_run(const ScenarioConfig& cfg, const fs::path& data_dir, const fs::path& out) {
    std::vector<linsys::TrajectoryDataset> data;
    std::vector<double> n2, ninf;
    const std::string expected = cfg.collection_hash();
    for (int i = 0; i < cfg.N(); ++i) {
        const fs::path path = data_dir / agent_file(i);
        const json doc = json::parse(detail::read_text_file(path));
        if (doc.value("collection_hash", std::string()) != expected) {
            throw std::runtime_error(fmt::format("{} was collected for a different scenario; run collect again", path.string()));
        }
        data.push_back(behavior::dataset_from_json(doc.dump()));
    }
    deepc::MissionSetup setup = mission_setup(cfg, data);
    for (const auto& a : setup.agents) {
        n2.push_back(behavior::norm_2(a.spec.behavior.W()));
        ninf.push_back(behavior::norm_inf(a.spec.behavior.W()));
    }
    RunResult result;
    result.log = deepc::run_mission(setup);
    result.metrics = compute_metrics(cfg, result.log);
    result.metrics.w_norm_2 = n2;
    result.metrics.w_norm_inf = ninf;
    result.ok = invariants_hold(cfg, result.log, result.metrics);
    write_log(cfg, result.log, result.metrics, out);
    return result;
}

void write_log(const ScenarioConfig& cfg, const deepc::MissionLog& log, const Metrics& mt, const fs::path& out) {
    fs::create_directories(out);
    const int N = cfg.N();
    const auto history = log.state_history();
    std::vector<std::vector<Vector>> inputs, outputs;
    for (const auto& s : log.steps) {
        inputs.push_back(s.u);
        outputs.push_back(s.y);
    }
    write_csv(out / "states.csv", agent_table(history, "x", cfg.plant.n()));
    write_csv(out / "inputs.csv", agent_table(inputs, "u", cfg.plant.m()));
    write_csv(out / "outputs.csv", agent_table(outputs, "y", cfg.plant.q()));

    const int p = static_cast<int>(cfg.position_indices.size());
    CsvTable pos, dist;
    pos.header = {"step", "time", "agent"};
    for (auto& h : numbered("p", p)) pos.header.push_back(h);
    dist.header = {"step", "time"};
    for (auto& h : pair_columns(N)) dist.header.push_back(h);
    for (std::size_t s = 0; s < history.size(); ++s) {
        const std::string step = std::to_string(s);
        const std::string time = format_number(static_cast<double>(s) * log.dt);
        std::vector<Vector> ps;
        for (int i = 0; i < N; ++i) {
            ps.push_back(positions(cfg, cfg.plant.C() * history[s][static_cast<std::size_t>(i)]));
            pos.rows.push_back(row_of({step, time, std::to_string(i)}, ps.back()));
        }
        std::vector<std::string> row{step, time};
        for (int i = 0; i < N; ++i) {
            for (int j = i + 1; j < N; ++j) row.push_back(format_number((ps[i] - ps[j]).norm()));
        }
        dist.rows.push_back(std::move(row));
    }
    write_csv(out / "positions.csv", pos);
    write_csv(out / "distances.csv", dist);

    CsvTable obj, qpt, timing;
    obj.header = {"step", "objective", "status", "soft"};
    qpt.header = {"step", "qp_iterations", "scp_iterations", "min_constraint_slack", "active_constraints"};
    timing.header = {"step", "solve_seconds"};
    for (std::size_t s = 0; s < log.steps.size(); ++s) {
        const auto& r = log.steps[s];
        const std::string step = std::to_string(s);
        obj.rows.push_back({step, format_number(r.objective), qp::to_string(r.status), r.soft ? "1" : "0"});
        qpt.rows.push_back({step, std::to_string(r.qp_iterations), std::to_string(r.scp_iterations),
                            format_number(r.min_constraint_slack), std::to_string(r.active_constraints)});
        timing.rows.push_back({step, format_number(r.solve_seconds)});
    }
    write_csv(out / "objective.csv", obj);
    write_csv(out / "qp.csv", qpt);
    write_csv(out / "timing.csv", timing);

    json summary = {
        {"name", cfg.name},
        {"scenario_hash", cfg.hash()},
        {"collection_hash", cfg.collection_hash()},
        {"seeds", {{"data", cfg.data_seed}, {"mc", cfg.mc_seed}}},
        {"controller", cfg.controller == deepc::Controller::deepc ? "deepc" : "model"},
        {"agents", N},
        {"n", cfg.plant.n()},
        {"m", cfg.plant.m()},
        {"q", cfg.plant.q()},
        {"dt", log.dt},
        {"d_safe", cfg.d_safe},
        {"position_indices", cfg.position_indices},
        {"steps_requested", cfg.steps},
        {"steps_completed", log.steps.size()},
        {"aborted", log.aborted},
        {"error", log.error},
        {"metrics",
         {{"min_pairwise_distance", N > 1 ? json(mt.min_pairwise_distance) : json(nullptr)},
          {"terminal_error", mt.terminal_error},
          {"max_input_violation", mt.max_input_violation},
          {"total_qp_iterations", mt.total_qp_iterations},
          {"max_qp_iterations", mt.max_qp_iterations},
          {"soft_steps", mt.soft_steps},
          {"w_norm_2", mt.w_norm_2},
          {"w_norm_inf", mt.w_norm_inf}}},
        {"invariants_hold", invariants_hold(cfg, log, mt)},
    };
    detail::write_text_file(out / "summary.json", summary.dump(1) + "\n");
}

LoadedLog load_log(const fs::path& dir) {
    const json s = json::parse(detail::read_text_file(dir / "summary.json"));
    LoadedLog log;
    log.scenario_hash = s.at("collection_hash").get<std::string>();
    log.agents = s.at("agents").get<int>();
    log.dt = s.at("dt").get<double>();
    log.d_safe = s.at("d_safe").get<double>();
    log.position_indices = s.at("position_indices").get<std::vector<int>>();
    const int n = s.at("n").get<int>(), m = s.at("m").get<int>(), q = s.at("q").get<int>();
    log.states = read_agent_table(dir / "states.csv", log.agents, n, "x");
    log.inputs = read_agent_table(dir / "inputs.csv", log.agents, m, "u");
    log.outputs = read_agent_table(dir / "outputs.csv", log.agents, q, "y");
    return log;
}

Comparison cmd_compare(const fs::path& a, const fs::path& b) {
    const LoadedLog la = load_log(a);
    const LoadedLog lb = load_log(b);
    if (la.scenario_hash != lb.scenario_hash) throw std::invalid_argument("logs come from different scenarios");
    if (la.agents != lb.agents) throw std::invalid_argument("logs have different agent counts");
    if (la.inputs.size() != lb.inputs.size() || la.states.size() != lb.states.size()) {
        throw std::invalid_argument(fmt::format("logs have different step counts ({} vs {})", la.inputs.size(),
                                                lb.inputs.size()));
    }
    Comparison c;
    c.steps = static_cast<int>(la.inputs.size());
    double u_scale = 0.0, y_scale = 0.0;
    for (int s = 0; s < c.steps; ++s) {
        double du = 0.0, dy = 0.0;
        for (int i = 0; i < la.agents; ++i) {
            const auto& ua = la.inputs[s][i];
            const auto& ya = la.outputs[s][i];
            du = std::max(du, (ua - lb.inputs[s][i]).cwiseAbs().maxCoeff());
            dy = std::max(dy, (ya - lb.outputs[s][i]).cwiseAbs().maxCoeff());
            u_scale = std::max(u_scale, ua.cwiseAbs().maxCoeff());
            y_scale = std::max(y_scale, ya.cwiseAbs().maxCoeff());
        }
        c.input_diff.push_back(du);
        c.output_diff.push_back(dy);
        c.max_input_diff = std::max(c.max_input_diff, du);
        c.max_output_diff = std::max(c.max_output_diff, dy);
    }
    c.max_input_diff_relative = u_scale > 0 ? c.max_input_diff / u_scale : c.max_input_diff;
    c.max_output_diff_relative = y_scale > 0 ? c.max_output_diff / y_scale : c.max_output_diff;
    return c;
}

void cmd_plotdata(const fs::path& log_dir, const fs::path& out) {
    const LoadedLog log = load_log(log_dir);
    const json s = json::parse(detail::read_text_file(log_dir / "summary.json"));
    const int N = log.agents;
    const int n = s.at("n").get<int>();
    const int m = s.at("m").get<int>();
    (void)n;
    // States carry outputs only through C; positions come from the positions log.
    const CsvTable pos_in = read_csv(log_dir / "positions.csv");
    const int p = static_cast<int>(log.position_indices.size());
    const std::vector<std::string> axis = p == 3 ? std::vector<std::string>{"x", "y", "z"} : numbered("p", p);

    std::vector<std::vector<Vector>> pos;
    {
        const auto sc = pos_in.column("step");
        const auto ac = pos_in.column("agent");
        for (std::size_t r = 0; r < pos_in.rows.size(); ++r) {
            const auto st = static_cast<std::size_t>(pos_in.number(r, sc));
            const auto ag = static_cast<std::size_t>(pos_in.number(r, ac));
            if (st >= pos.size()) pos.resize(st + 1, std::vector<Vector>(static_cast<std::size_t>(N)));
            Vector v(p);
            for (int k = 0; k < p; ++k) v(k) = pos_in.number(r, pos_in.column(fmt::format("p{}", k)));
            pos[st][ag] = std::move(v);
        }
    }

    CsvTable traj, proj, dist, thrust;
    traj.header = {"step", "time", "agent"};
    for (const auto& a : axis) traj.header.push_back(a);
    proj.header = {"step", "time", "agent", "view", "h", "v"};
    dist.header = {"step", "time", "d_safe"};
    for (auto& h : pair_columns(N)) dist.header.push_back(h);
    thrust.header = {"step", "time"};
    for (int i = 0; i < N; ++i) {
        for (int k = 0; k < m; ++k) thrust.header.push_back(fmt::format("a{}_u{}", i, k + 1));
    }

    const std::vector<std::tuple<std::string, int, int>> views{{"top_xy", 0, 1}, {"side_xz", 0, 2}, {"side_yz", 1, 2}};
    for (std::size_t st = 0; st < pos.size(); ++st) {
        const std::string step = std::to_string(st);
        const std::string time = format_number(static_cast<double>(st) * log.dt);
        for (int i = 0; i < N; ++i) {
            const Vector& v = pos[st][static_cast<std::size_t>(i)];
            traj.rows.push_back(row_of({step, time, std::to_string(i)}, v));
            if (p == 3) {
                for (const auto& [name, h, w] : views) {
                    proj.rows.push_back({step, time, std::to_string(i), name, format_number(v(h)), format_number(v(w))});
                }
            }
        }
        std::vector<std::string> row{step, time, format_number(log.d_safe)};
        for (int i = 0; i < N; ++i) {
            for (int j = i + 1; j < N; ++j) {
                row.push_back(format_number((pos[st][static_cast<std::size_t>(i)] - pos[st][static_cast<std::size_t>(j)]).norm()));
            }
        }
        dist.rows.push_back(std::move(row));
    }
    for (std::size_t st = 0; st < log.inputs.size(); ++st) {
        std::vector<std::string> row{std::to_string(st), format_number(static_cast<double>(st) * log.dt)};
        for (int i = 0; i < N; ++i) {
            for (int k = 0; k < m; ++k) row.push_back(format_number(log.inputs[st][static_cast<std::size_t>(i)](k)));
        }
        thrust.rows.push_back(std::move(row));
    }
    fs::create_directories(out);
    write_csv(out / "trajectory_3d.csv", traj);
    write_csv(out / "projections.csv", proj);
    write_csv(out / "distances.csv", dist);
    write_csv(out / "thrust.csv", thrust);
}

}  // namespace ddpc::harness
