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
#include "ddpc/digest.hpp"
#include "ddpc/harness.hpp"

#include "json_util.hpp"

#include <fmt/format.h>

#include <cmath>
#include <set>

namespace ddpc::harness {

namespace {

using detail::json;

/// Object view that records which keys were read and rejects the rest.
class Reader {
public:
    Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ScenarioError(path_.empty() ? "<root>" : path_, "must be an object");
    }
    ~Reader() = default;

    std::string key(const std::string& k) const { return path_.empty() ? k : path_ + "." + k; }
    bool has(const std::string& k) const { return j_.contains(k) && !j_.at(k).is_null(); }

    const json& at(const std::string& k) {
        seen_.insert(k);
        if (!j_.contains(k)) throw ScenarioError(key(k), "is required");
        return j_.at(k);
    }

    template <class T>
    T get(const std::string& k) {
        const json& v = at(k);
        try {
            return v.get<T>();
        } catch (const json::exception&) {
            throw ScenarioError(key(k), "has the wrong type");
        }
    }

    template <class T>
    T get(const std::string& k, T fallback) {
        seen_.insert(k);
        if (!has(k)) return fallback;
        return get<T>(k);
    }

    double number(const std::string& k) {
        const json& v = at(k);
        if (!v.is_number()) throw ScenarioError(key(k), "must be a number");
        return v.get<double>();
    }
    double number(const std::string& k, double fallback) {
        seen_.insert(k);
        return has(k) ? number(k) : fallback;
    }

    std::optional<Reader> object(const std::string& k) {
        seen_.insert(k);
        if (!has(k)) return std::nullopt;
        return Reader(j_.at(k), key(k));
    }

    void mark(const std::string& k) { seen_.insert(k); }

    void finish() const {
        for (const auto& [k, v] : j_.items()) {
            if (!seen_.count(k)) throw ScenarioError(key(k), "is not a recognised key");
        }
    }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

Vector number_vector(const json& v, const std::string& key) {
    if (!v.is_array()) throw ScenarioError(key, "must be an array of numbers");
    Vector out(static_cast<Eigen::Index>(v.size()));
    for (std::size_t k = 0; k < v.size(); ++k) {
        if (!v[k].is_number()) throw ScenarioError(key, "must be an array of numbers");
        out(static_cast<Eigen::Index>(k)) = v[k].get<double>();
    }
    return out;
}

/// Scalar (broadcast to `dim`) or vector of length `dim`.
Vector broadcast(const json& v, int dim, const std::string& key) {
    if (v.is_number()) return Vector::Constant(dim, v.get<double>());
    Vector out = number_vector(v, key);
    if (out.size() != dim) throw ScenarioError(key, fmt::format("must have {} entries", dim));
    return out;
}

deepc::Box read_box(Reader& r, int dim, double lo, double hi) {
    deepc::Box box{Vector::Constant(dim, lo), Vector::Constant(dim, hi)};
    if (r.has("lo")) box.lo = broadcast(r.at("lo"), dim, r.key("lo"));
    if (r.has("hi")) box.hi = broadcast(r.at("hi"), dim, r.key("hi"));
    r.mark("lo");
    r.mark("hi");
    r.finish();
    return box;
}

json box_json(const deepc::Box& b) { return {{"lo", detail::vector_to_json(b.lo)}, {"hi", detail::vector_to_json(b.hi)}}; }

json vec_json(const Vector& v) { return detail::vector_to_json(v); }

std::string controller_name(deepc::Controller c) { return c == deepc::Controller::deepc ? "deepc" : "model"; }

json model_json(const linsys::StateSpace& p) { return json::parse(linsys::model_to_json(p)); }

json collection_fields(const ScenarioConfig& c) {
    json agents = json::array();
    for (const auto& a : c.agents) agents.push_back(vec_json(a.start));
    return {
        {"plant", model_json(c.plant)},
        {"starts", agents},
        {"position_indices", c.position_indices},
        {"T_p", c.T_p},
        {"T_f", c.T_f},
        {"T_num", c.T_num},
        {"excitation", {{"lo", c.excitation_lo}, {"hi", c.excitation_hi}}},
        {"collection", c.collection == Collection::closed_loop ? "closed" : "open"},
        {"feedback", {{"q", c.feedback_q}, {"r", c.feedback_r}}},
        {"data_seed", c.data_seed},
    };
}

}  // namespace

std::string ScenarioConfig::to_json() const {
    json agents_j = json::array();
    for (const auto& a : agents) agents_j.push_back({{"start", vec_json(a.start)}, {"goal", vec_json(a.goal)}});
    json doc = {
        {"name", name},
        {"model", model},
        {"plant", model_json(plant)},
        {"N", N()},
        {"agents", agents_j},
        {"position_indices", position_indices},
        {"T_p", T_p},
        {"T_f", T_f},
        {"T_num", T_num},
        {"weights", {{"q_position", q_position}, {"q_other", q_other}, {"r", r_input}}},
        {"d_safe", d_safe},
        {"phi", detail::matrix_to_json(phi)},
        {"sigma", {{"scale", sigma_scale}, {"growth", sigma_growth}}},
        {"input_bounds", box_json(input_bounds)},
        {"output_bounds", output_bounds ? box_json(*output_bounds) : json(nullptr)},
        {"excitation", {{"lo", excitation_lo}, {"hi", excitation_hi}}},
        {"collection", collection == Collection::closed_loop ? "closed" : "open"},
        {"feedback", {{"q", feedback_q}, {"r", feedback_r}}},
        {"seeds", {{"data", data_seed}, {"mc", mc_seed}}},
        {"solver", {{"eps", solver_eps}, {"max_iters", solver_max_iters}}},
        {"mission",
         {{"steps", steps},
          {"soft_collisions", soft_collisions},
          {"noisy_data", noisy_data},
          {"n_scp", n_scp},
          {"anchor_swirl", anchor_swirl},
          {"anchor_speed", anchor_speed},
          {"swirl_axis", vec_json(swirl_axis)},
          {"controller", controller_name(controller)}}},
    };
    return doc.dump(1);
}

std::string ScenarioConfig::hash() const { return sha256_hex(to_json()); }

std::string ScenarioConfig::collection_hash() const { return sha256_hex(collection_fields(*this).dump()); }

ScenarioConfig scenario_from_json(const std::string& text, const std::filesystem::path& base_dir) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw std::invalid_argument(std::string("scenario is not valid JSON: ") + e.what());
    }
    Reader r(doc, "");
    ScenarioConfig c;
    c.name = r.get<std::string>("name", c.name);
    c.model = r.get<std::string>("model");
    if (c.model == "drone") {
        c.plant = linsys::make_drone_model();
    } else {
        std::filesystem::path p = c.model;
        if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
        try {
            c.plant = linsys::load_model(p);
        } catch (const std::exception& e) {
            throw ScenarioError("model", e.what());
        }
    }
    // Derived field written by to_json; accepted so canonical documents re-parse.
    r.mark("plant");
    const int n = c.plant.n(), m = c.plant.m(), q = c.plant.q();

    const json& agents = r.at("agents");
    if (!agents.is_array() || agents.empty()) throw ScenarioError("agents", "must be a non-empty array");
    if (r.has("position_indices")) {
        c.position_indices.clear();
        const json& pi = r.at("position_indices");
        if (!pi.is_array() || pi.empty()) throw ScenarioError("position_indices", "must be a non-empty array");
        for (const auto& v : pi) {
            if (!v.is_number_integer()) throw ScenarioError("position_indices", "must hold integers");
            c.position_indices.push_back(v.get<int>());
        }
    } else {
        r.mark("position_indices");
    }
    const int p = static_cast<int>(c.position_indices.size());
    for (std::size_t i = 0; i < agents.size(); ++i) {
        Reader a(agents[i], fmt::format("agents[{}]", i));
        AgentConfig ac;
        ac.start = number_vector(a.at("start"), a.key("start"));
        ac.goal = number_vector(a.at("goal"), a.key("goal"));
        if (ac.start.size() != p || ac.goal.size() != p) {
            throw ScenarioError(a.key("start"), fmt::format("start and goal must have {} coordinates", p));
        }
        a.finish();
        c.agents.push_back(std::move(ac));
    }
    if (r.has("N") && r.get<int>("N") != c.N()) throw ScenarioError("N", "disagrees with the number of agents");
    r.mark("N");

    c.T_p = r.get<int>("T_p");
    c.T_f = r.get<int>("T_f");
    c.T_num = r.get<int>("T_num");
    if (r.has("dt") && std::abs(r.number("dt") - c.plant.dt()) > 1e-12) {
        throw ScenarioError("dt", "disagrees with the model sampling time");
    }
    r.mark("dt");

    if (auto w = r.object("weights")) {
        c.q_position = w->number("q_position", c.q_position);
        c.q_other = w->number("q_other", c.q_other);
        c.r_input = w->number("r", c.r_input);
        w->finish();
    }
    c.d_safe = r.number("d_safe");

    c.phi = Matrix::Constant(c.N(), c.N(), 0.1);
    if (r.has("phi")) {
        const json& ph = r.at("phi");
        if (ph.is_number()) {
            c.phi.setConstant(ph.get<double>());
        } else {
            try {
                c.phi = detail::matrix_from_json(ph, "phi");
            } catch (const std::exception& e) {
                throw ScenarioError("phi", e.what());
            }
        }
    } else {
        r.mark("phi");
    }
    if (auto s = r.object("sigma")) {
        c.sigma_scale = s->number("scale", c.sigma_scale);
        c.sigma_growth = s->number("growth", c.sigma_growth);
        s->finish();
    }
    c.input_bounds = {Vector::Constant(m, -0.7007), Vector::Constant(m, 0.2993)};
    if (auto b = r.object("input_bounds")) c.input_bounds = read_box(*b, m, -0.7007, 0.2993);
    if (auto b = r.object("output_bounds")) c.output_bounds = read_box(*b, q, -qp::kInf, qp::kInf);
    if (auto e = r.object("excitation")) {
        c.excitation_lo = e->number("lo", c.excitation_lo);
        c.excitation_hi = e->number("hi", c.excitation_hi);
        e->finish();
    }
    const auto mode = r.get<std::string>("collection", "closed");
    if (mode == "closed") {
        c.collection = Collection::closed_loop;
    } else if (mode == "open") {
        c.collection = Collection::open_loop;
    } else {
        throw ScenarioError("collection", "must be \"closed\" or \"open\"");
    }
    if (auto f = r.object("feedback")) {
        c.feedback_q = f->number("q", c.feedback_q);
        c.feedback_r = f->number("r", c.feedback_r);
        f->finish();
    }
    if (auto s = r.object("seeds")) {
        c.data_seed = s->get<std::uint64_t>("data", c.data_seed);
        c.mc_seed = s->get<std::uint64_t>("mc", c.mc_seed);
        s->finish();
    }
    if (auto s = r.object("solver")) {
        c.solver_eps = s->number("eps", c.solver_eps);
        c.solver_max_iters = s->get<int>("max_iters", c.solver_max_iters);
        s->finish();
    }
    c.swirl_axis = Vector::Zero(0);
    if (p == 3) c.swirl_axis = Eigen::Vector3d(1.0, 2.0, 3.0).normalized();
    if (auto ms = r.object("mission")) {
        c.steps = ms->get<int>("steps", c.steps);
        c.soft_collisions = ms->get<bool>("soft_collisions", c.soft_collisions);
        c.noisy_data = ms->get<bool>("noisy_data", c.noisy_data);
        c.n_scp = ms->get<int>("n_scp", c.n_scp);
        c.anchor_swirl = ms->number("anchor_swirl", c.anchor_swirl);
        c.anchor_speed = ms->number("anchor_speed", c.anchor_speed);
        if (ms->has("swirl_axis")) c.swirl_axis = number_vector(ms->at("swirl_axis"), ms->key("swirl_axis"));
        ms->mark("swirl_axis");
        const auto ctl = ms->get<std::string>("controller", "deepc");
        if (ctl == "deepc") {
            c.controller = deepc::Controller::deepc;
        } else if (ctl == "model") {
            c.controller = deepc::Controller::model;
        } else {
            throw ScenarioError(ms->key("controller"), "must be \"deepc\" or \"model\"");
        }
        ms->finish();
    }
    r.finish();
    (void)n;
    validate(c);
    return c;
}

ScenarioConfig parse_scenario(const std::filesystem::path& path) {
    return scenario_from_json(detail::read_text_file(path), path.parent_path());
}

void validate(const ScenarioConfig& c) {
    const int n = c.plant.n(), m = c.plant.m(), q = c.plant.q();
    if (c.N() < 1) throw ScenarioError("agents", "at least one agent is required");
    for (int idx : c.position_indices) {
        if (idx < 0 || idx >= q) throw ScenarioError("position_indices", "index outside the output vector");
    }
    if (std::set<int>(c.position_indices.begin(), c.position_indices.end()).size() != c.position_indices.size()) {
        throw ScenarioError("position_indices", "indices must be distinct");
    }
    if (c.T_p < 1) throw ScenarioError("T_p", "must be >= 1");
    if (c.T_f < 1) throw ScenarioError("T_f", "must be >= 1");
    const int L = behavior::excitation_order(c.T_p, c.T_f, n);
    const int needed = behavior::min_samples(m, L);
    if (c.T_num < needed) {
        throw ScenarioError("T_num", fmt::format("needs at least (m+1)L-1 = ({}+1)*{}-1 = {} samples, got {}", m, L,
                                                 needed, c.T_num));
    }
    if (!(c.d_safe > 0.0)) throw ScenarioError("d_safe", "must be positive");
    if (c.phi.rows() != c.N() || c.phi.cols() != c.N()) throw ScenarioError("phi", "must be a scalar or N x N");
    for (int i = 0; i < c.N(); ++i) {
        for (int j = i + 1; j < c.N(); ++j) {
            if (!(c.phi(i, j) > 0.0 && c.phi(i, j) <= 0.5)) throw ScenarioError("phi", "entries must lie in (0, 0.5]");
        }
    }
    if (!(c.sigma_scale >= 0.0)) throw ScenarioError("sigma.scale", "must be non-negative");
    if (!(c.sigma_growth >= 1.0)) throw ScenarioError("sigma.growth", "must be >= 1");
    if (c.q_position < 0 || c.q_other < 0 || c.r_input < 0) throw ScenarioError("weights", "must be non-negative");
    for (int k = 0; k < m; ++k) {
        if (!(c.input_bounds.lo(k) <= c.input_bounds.hi(k))) throw ScenarioError("input_bounds", "lo exceeds hi");
    }
    if (c.output_bounds) {
        for (int k = 0; k < q; ++k) {
            if (!(c.output_bounds->lo(k) <= c.output_bounds->hi(k))) {
                throw ScenarioError("output_bounds", "lo exceeds hi");
            }
        }
    }
    if (!(c.excitation_lo < c.excitation_hi)) throw ScenarioError("excitation", "lo must be below hi");
    if (!(c.feedback_q > 0 && c.feedback_r > 0)) throw ScenarioError("feedback", "weights must be positive");
    if (!(c.solver_eps > 0)) throw ScenarioError("solver.eps", "must be positive");
    if (c.solver_max_iters < 1) throw ScenarioError("solver.max_iters", "must be >= 1");
    if (c.steps < 0) throw ScenarioError("mission.steps", "must be non-negative");
    if (c.n_scp < 1) throw ScenarioError("mission.n_scp", "must be >= 1");
    if (!(c.anchor_speed > 0.0)) throw ScenarioError("mission.anchor_speed", "must be positive");
    if (c.anchor_swirl != 0.0 && (c.position_indices.size() != 3 || c.swirl_axis.size() != 3 ||
                                  c.swirl_axis.norm() == 0.0)) {
        throw ScenarioError("mission.anchor_swirl", "needs three position coordinates and a nonzero swirl_axis");
    }
    for (int i = 0; i < c.N(); ++i) {
        for (int j = i + 1; j < c.N(); ++j) {
            const double d = (c.agents[i].start - c.agents[j].start).norm();
            if (d < c.d_safe) {
                throw ScenarioError("agents", fmt::format("agents {} and {} start {:.3g} m apart, below d_safe", i, j, d));
            }
        }
    }
}

void apply_overrides(ScenarioConfig& c, const Overrides& o) {
    if (o.seed) c.data_seed = *o.seed;
    if (o.solver_eps) c.solver_eps = *o.solver_eps;
    if (o.scp_iters) c.n_scp = *o.scp_iters;
    if (o.soft_collisions) c.soft_collisions = true;
    if (o.controller) c.controller = *o.controller;
    if (o.steps) c.steps = *o.steps;
    validate(c);
}

}  // namespace ddpc::harness
