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
#include "ddpc/csv.hpp"
#include "ddpc/harness.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <iostream>

namespace {

namespace h = ddpc::harness;

constexpr int kExitOk = 0;
constexpr int kExitInvariant = 1;
constexpr int kExitError = 2;

void configure_logging() {
    auto logger = spdlog::stderr_color_mt("ddpc");
    spdlog::set_default_logger(logger);
    spdlog::set_pattern("[%l] %v");
    spdlog::set_level(spdlog::level::info);
    if (const char* level = std::getenv("DDPC_LOG_LEVEL")) {
        spdlog::set_level(spdlog::level::from_str(level));
    }
}

void print_metrics(const h::ScenarioConfig& cfg, const h::RunResult& r) {
    const auto& m = r.metrics;
    fmt::print("scenario          {} ({})\n", cfg.name, cfg.hash().substr(0, 16));
    fmt::print("steps             {}/{}{}\n", r.log.steps.size(), cfg.steps, r.log.aborted ? " (aborted)" : "");
    if (r.log.aborted) fmt::print("error             {}\n", r.log.error);
    if (cfg.N() > 1) fmt::print("min distance      {:.6f} m (d_safe {})\n", m.min_pairwise_distance, cfg.d_safe);
    for (std::size_t i = 0; i < m.terminal_error.size(); ++i) {
        fmt::print("terminal error {:<2} {:.3e} m\n", i, m.terminal_error[i]);
    }
    fmt::print("input violation   {:.3e} N\n", m.max_input_violation);
    fmt::print("solve time        mean {:.3f} s, max {:.3f} s\n", m.mean_solve_seconds, m.max_solve_seconds);
    fmt::print("qp iterations     total {}, max {}\n", m.total_qp_iterations, m.max_qp_iterations);
    fmt::print("soft steps        {}\n", m.soft_steps);
    for (std::size_t i = 0; i < m.w_norm_2.size(); ++i) {
        fmt::print("|W_{}|_2 {:.6g}  |W_{}|_inf {:.6g}\n", i, m.w_norm_2[i], i, m.w_norm_inf[i]);
    }
    fmt::print("invariants        {}\n", r.ok ? "hold" : "VIOLATED");
}

}  // namespace

int main(int argc, char** argv) {
    configure_logging();
    CLI::App app{"Data-driven predictive control for multi-agent missions"};
    app.require_subcommand(1);

    h::Overrides overrides;
    std::uint64_t seed = 0;
    double solver_eps = 0.0;
    int scp_iters = 0;
    app.add_option("--seed", seed, "Data collection seed override");
    app.add_option("--solver-eps", solver_eps, "QP primal and dual tolerance")->check(CLI::PositiveNumber);
    app.add_option("--scp-iters", scp_iters, "Collision re-linearisation passes per step")->check(CLI::PositiveNumber);
    app.add_flag("--soft-collisions", overrides.soft_collisions, "Soften collision constraints from the start");

    std::string scenario, out, data, controller, log_a, log_b, compare_out;
    int steps = -1;

    auto* collect = app.add_subcommand("collect", "Collect closed-loop data and build W for every agent");
    collect->add_option("--scenario", scenario, "Scenario file")->required()->check(CLI::ExistingFile);
    collect->add_option("--out", out, "Dataset directory")->required();

    auto* run = app.add_subcommand("run", "Run a mission from collected data");
    run->add_option("--scenario", scenario, "Scenario file")->required()->check(CLI::ExistingFile);
    run->add_option("--data", data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
    run->add_option("--out", out, "Log directory")->required();
    run->add_option("--controller", controller, "deepc or model")->check(CLI::IsMember({"deepc", "model"}));
    run->add_option("--steps", steps, "Mission length override")->check(CLI::NonNegativeNumber);

    auto* compare = app.add_subcommand("compare", "Per-step differences between two logs");
    compare->add_option("logA", log_a, "First log directory")->required()->check(CLI::ExistingDirectory);
    compare->add_option("logB", log_b, "Second log directory")->required()->check(CLI::ExistingDirectory);
    compare->add_option("--out", compare_out, "Write compare.csv here");

    auto* plot = app.add_subcommand("plotdata", "Plot-ready CSVs from a log");
    plot->add_option("log", log_a, "Log directory")->required()->check(CLI::ExistingDirectory);
    plot->add_option("--out", out, "Output directory")->required();

    CLI11_PARSE(app, argc, argv);

    if (app.count("--seed")) overrides.seed = seed;
    if (app.count("--solver-eps")) overrides.solver_eps = solver_eps;
    if (app.count("--scp-iters")) overrides.scp_iters = scp_iters;
    if (!controller.empty()) {
        overrides.controller = controller == "model" ? ddpc::deepc::Controller::model : ddpc::deepc::Controller::deepc;
    }
    if (steps >= 0) overrides.steps = steps;

    try {
        if (collect->parsed() || run->parsed()) {
            auto cfg = h::parse_scenario(scenario);
            h::apply_overrides(cfg, overrides);
            if (collect->parsed()) {
                const auto res = h::cmd_collect(cfg, out);
                for (std::size_t i = 0; i < res.agents.size(); ++i) {
                    const auto& a = res.agents[i];
                    fmt::print("agent {} W {}x{} |W|_2 {:.6g} |W|_inf {:.6g}\n", i, a.w_rows, a.w_cols, a.w_norm_2,
                               a.w_norm_inf);
                }
                return kExitOk;
            }
            const auto res = h::cmd_run(cfg, data, out);
            print_metrics(cfg, res);
            return res.ok ? kExitOk : kExitInvariant;
        }
        if (compare->parsed()) {
            const auto c = h::cmd_compare(log_a, log_b);
            fmt::print("steps               {}\n", c.steps);
            fmt::print("max input diff      {:.6e} (relative {:.6e})\n", c.max_input_diff, c.max_input_diff_relative);
            fmt::print("max output diff     {:.6e} (relative {:.6e})\n", c.max_output_diff, c.max_output_diff_relative);
            if (!compare_out.empty()) {
                h::CsvTable t;
                t.header = {"step", "input_diff", "output_diff"};
                for (int s = 0; s < c.steps; ++s) {
                    t.rows.push_back({std::to_string(s), h::format_number(c.input_diff[s]),
                                      h::format_number(c.output_diff[s])});
                }
                h::write_csv(std::filesystem::path(compare_out) / "compare.csv", t);
            }
            return kExitOk;
        }
        if (plot->parsed()) {
            h::cmd_plotdata(log_a, out);
            return kExitOk;
        }
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return kExitError;
    }
    return kExitOk;
}
