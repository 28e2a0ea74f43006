#include "ofp/cli/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string_view>

#include <json.hpp>

#include "ofp/hash.hpp"
#include "ofp/io.hpp"

namespace ofp::cli {
namespace {

using Json = nlohmann::ordered_json;

class Node {
public:
    Node(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) fail("expected an object");
    }

    [[noreturn]] void fail(const std::string& what) const { throw ConfigError(path_.empty() ? "/" : path_, what); }

    void allow(std::initializer_list<std::string_view> keys) const {
        for (const auto& [k, v] : j_.items())
            if (std::find(keys.begin(), keys.end(), k) == keys.end())
                throw ConfigError(path_ + "/" + k, "unknown key");
    }

    [[nodiscard]] bool has(std::string_view key) const { return j_.contains(key) && !j_.at(std::string(key)).is_null(); }

    [[nodiscard]] Node child(std::string_view key) const { return {j_.at(std::string(key)), at(key)}; }

    [[nodiscard]] std::string at(std::string_view key) const { return path_ + "/" + std::string(key); }

    void read(std::string_view key, double& out) const {
        if (!has(key)) return;
        const auto& v = j_.at(std::string(key));
        if (!v.is_number()) throw ConfigError(at(key), "expected a number");
        out = v.get<double>();
        if (!std::isfinite(out)) throw ConfigError(at(key), "must be finite");
    }

    template <class Int>
    void read_int(std::string_view key, Int& out) const {
        if (!has(key)) return;
        const auto& v = j_.at(std::string(key));
        if (!v.is_number_integer()) throw ConfigError(at(key), "expected an integer");
        if (v.is_number_unsigned()) {
            out = static_cast<Int>(v.get<std::uint64_t>());
        } else {
            const auto x = v.get<std::int64_t>();
            if (x < 0 && !std::is_signed_v<Int>) throw ConfigError(at(key), "must be non-negative");
            out = static_cast<Int>(x);
        }
    }

    void read(std::string_view key, std::string& out) const {
        if (!has(key)) return;
        const auto& v = j_.at(std::string(key));
        if (!v.is_string()) throw ConfigError(at(key), "expected a string");
        out = v.get<std::string>();
    }

    void read(std::string_view key, std::vector<double>& out) const {
        if (!has(key)) return;
        out = numbers(j_.at(std::string(key)), at(key));
    }

    void read(std::string_view key, ParameterPoint& out) const {
        if (!has(key)) return;
        Node obj = child(key);
        ParameterPoint p;
        for (const auto& [name, v] : obj.j_.items()) {
            const auto where = obj.at(name);
            if (!v.is_number()) throw ConfigError(where, "expected a number");
            try {
                p.set(name, v.get<double>());
            } catch (const InvalidInput& e) {
                throw ConfigError(where, e.what());
            }
        }
        out = std::move(p);
    }

    [[nodiscard]] const Json& json() const { return j_; }

    static std::vector<double> numbers(const Json& v, const std::string& where) {
        if (!v.is_array()) throw ConfigError(where, "expected an array of numbers");
        std::vector<double> out;
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (!v[i].is_number()) throw ConfigError(where + "/" + std::to_string(i), "expected a number");
            out.push_back(v[i].get<double>());
        }
        return out;
    }

private:
    const Json& j_;
    std::string path_;
};

ControlAxes parse_axes(const std::string& s, const std::string& where) {
    if (s == "x") return ControlAxes::kX;
    if (s == "xy") return ControlAxes::kXY;
    throw ConfigError(where, "axis must be \"x\" or \"xy\"");
}

std::string axes_name(ControlAxes a) { return a == ControlAxes::kX ? "x" : "xy"; }

void read_ensemble(const Node& n, EnsembleSpec& e) {
    n.allow({"t1_s", "t2_s", "center_rad_per_s", "fwhm_rad_per_s", "n_points", "support_halfwidth", "rf_scale"});
    n.read("t1_s", e.relaxation.t1);
    n.read("t2_s", e.relaxation.t2);
    n.read("center_rad_per_s", e.center);
    n.read("fwhm_rad_per_s", e.fwhm);
    n.read_int("n_points", e.n_points);
    n.read("support_halfwidth", e.support_halfwidth);
    n.read("rf_scale", e.rf_scale);
    try {
        e.validate();
    } catch (const InvalidInput& err) {
        n.fail(err.what());
    }
}

void read_field(const Node& n, FieldSource& f, const std::filesystem::path& base_dir) {
    n.allow({"source", "path", "n_pulses", "delay_s", "amplitude_rad", "seed", "axis"});
    std::string source = "optimize";
    n.read("source", source);
    if (source == "file") f.kind = FieldSourceKind::kFile;
    else if (source == "optimize") f.kind = FieldSourceKind::kOptimize;
    else if (source == "random") f.kind = FieldSourceKind::kRandom;
    else throw ConfigError(n.at("source"), "must be one of file, optimize, random");
    std::string path;
    n.read("path", path);
    if (f.kind == FieldSourceKind::kFile) {
        if (path.empty()) n.fail("file source needs \"path\"");
        f.path = std::filesystem::path(path).is_absolute() ? std::filesystem::path(path) : base_dir / path;
    }
    n.read_int("n_pulses", f.n_pulses);
    n.read("delay_s", f.delay_t);
    n.read("amplitude_rad", f.amplitude);
    n.read_int("seed", f.seed);
    std::string axis = axes_name(f.axes);
    n.read("axis", axis);
    f.axes = parse_axes(axis, n.at("axis"));
    if (f.n_pulses == 0) throw ConfigError(n.at("n_pulses"), "must be positive");
    if (!(f.delay_t > 0.0)) throw ConfigError(n.at("delay_s"), "must be positive");
    if (!(f.amplitude >= 0.0)) throw ConfigError(n.at("amplitude_rad"), "must be non-negative");
}

void read_optimizer(const Node& n, OptimizerConfig& o) {
    n.allow({"max_iterations", "step_size_rad", "backtrack", "growth", "gradient_tolerance", "seed",
             "multi_starts", "init_amplitude_rad", "objective", "clip_rad"});
    n.read_int("max_iterations", o.max_iterations);
    n.read("step_size_rad", o.step_size);
    n.read("backtrack", o.backtrack);
    n.read("growth", o.growth);
    n.read("gradient_tolerance", o.gradient_tolerance);
    n.read_int("seed", o.seed);
    n.read_int("multi_starts", o.multi_starts);
    n.read("init_amplitude_rad", o.init_amplitude);
    std::string objective = "figure_of_merit";
    n.read("objective", objective);
    if (objective == "figure_of_merit") o.objective = Objective::kFigureOfMerit;
    else if (objective == "tracking") o.objective = Objective::kTracking;
    else throw ConfigError(n.at("objective"), "must be figure_of_merit or tracking");
    if (n.has("clip_rad")) {
        double c = 0.0;
        n.read("clip_rad", c);
        o.clip = c;
    }
    try {
        o.validate();
    } catch (const InvalidInput& e) {
        n.fail(e.what());
    }
}

void read_estimator(const Node& n, FitConfig& c) {
    n.allow({"free_parameters", "fd_step", "max_iterations", "tolerance", "strategy"});
    if (n.has("free_parameters")) {
        const auto& v = n.json().at("free_parameters");
        if (!v.is_array()) throw ConfigError(n.at("free_parameters"), "expected an array of names");
        c.free_parameters.clear();
        for (const auto& s : v) {
            if (!s.is_string()) throw ConfigError(n.at("free_parameters"), "expected an array of names");
            c.free_parameters.push_back(s.get<std::string>());
        }
    }
    n.read("fd_step", c.fd_step);
    n.read_int("max_iterations", c.max_iterations);
    n.read("tolerance", c.tolerance);
    std::string strategy = "gradient_descent";
    n.read("strategy", strategy);
    if (strategy == "gradient_descent") c.strategy = FitStrategy::kGradientDescent;
    else if (strategy == "levenberg_marquardt") c.strategy = FitStrategy::kLevenbergMarquardt;
    else throw ConfigError(n.at("strategy"), "must be gradient_descent or levenberg_marquardt");
    try {
        c.validate();
    } catch (const InvalidInput& e) {
        n.fail(e.what());
    }
}

void read_noise(const Node& n, NoiseConfig& c) {
    n.allow({"epsilons", "draws", "seed", "width", "min_success", "parameter"});
    n.read("epsilons", c.epsilons);
    n.read_int("draws", c.draws);
    n.read_int("seed", c.seed);
    std::string width = "stddev";
    n.read("width", width);
    if (width == "stddev") c.width = WidthMethod::kStdDev;
    else if (width == "mad") c.width = WidthMethod::kMad;
    else throw ConfigError(n.at("width"), "must be stddev or mad");
    n.read("min_success", c.min_success);
    n.read("parameter", c.parameter);
    for (double e : c.epsilons)
        if (!(e >= 0.0) || !std::isfinite(e)) throw ConfigError(n.at("epsilons"), "noise levels must be finite and >= 0");
    if (c.draws < 2) throw ConfigError(n.at("draws"), "need at least 2 draws");
    if (!(c.min_success > 0.0 && c.min_success <= 1.0)) throw ConfigError(n.at("min_success"), "must be in (0, 1]");
}

std::string strategy_name(FitStrategy s) {
    return s == FitStrategy::kGradientDescent ? "gradient_descent" : "levenberg_marquardt";
}

Json point_json(const ParameterPoint& p) {
    Json j = Json::object();
    for (const auto& v : p.values()) j[v.name] = v.value;
    return j;
}

std::size_t line_of(const std::string& text, std::size_t byte) {
    byte = std::min(byte, text.size());
    return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<long>(byte), '\n'));
}

}  // namespace

std::vector<ParameterPoint> ExperimentConfig::points() const { return parameter_grid(grid); }

std::string ExperimentConfig::canonical() const {
    Json j;
    j["scenario"] = scenario;
    const auto& e = ensemble;
    j["ensemble"] = {{"t1_s", e.relaxation.t1},         {"t2_s", e.relaxation.t2},
                     {"center_rad_per_s", e.center},    {"fwhm_rad_per_s", e.fwhm},
                     {"n_points", e.n_points},          {"support_halfwidth", e.support_halfwidth},
                     {"rf_scale", e.rf_scale}};
    Json g = Json::array();
    for (const auto& [name, values] : grid) g.push_back({name, values});
    j["grid"] = g;
    j["truth"] = point_json(truth);
    static constexpr const char* kSources[] = {"file", "optimize", "random"};
    j["field"] = {{"source", kSources[static_cast<int>(field.kind)]},
                  {"file_hash", hex64(field_file_hash)},
                  {"n_pulses", field.n_pulses},
                  {"delay_s", field.delay_t},
                  {"amplitude_rad", field.amplitude},
                  {"seed", field.seed},
                  {"axis", axes_name(field.axes)}};
    const auto& o = optimizer;
    j["optimizer"] = {{"max_iterations", o.max_iterations},
                      {"step_size_rad", o.step_size},
                      {"backtrack", o.backtrack},
                      {"growth", o.growth},
                      {"gradient_tolerance", o.gradient_tolerance},
                      {"seed", o.seed},
                      {"multi_starts", o.multi_starts},
                      {"init_amplitude_rad", o.init_amplitude},
                      {"objective", o.objective == Objective::kTracking ? "tracking" : "figure_of_merit"},
                      {"clip_rad", o.clip ? Json(*o.clip) : Json()}};
    j["baseline"] = {{"amplitude_rad", baseline.amplitude}, {"seed", baseline.seed}};
    j["estimator"] = {{"free_parameters", estimator.free_parameters},
                      {"fd_step", estimator.fd_step},
                      {"max_iterations", estimator.max_iterations},
                      {"tolerance", estimator.tolerance},
                      {"strategy", strategy_name(estimator.strategy)}};
    j["noise"] = {{"epsilons", noise.epsilons},
                  {"draws", noise.draws},
                  {"seed", noise.seed},
                  {"width", noise.width == WidthMethod::kMad ? "mad" : "stddev"},
                  {"min_success", noise.min_success},
                  {"parameter", noise.parameter}};
    j["ir"] = {{"n_points", ir.n_points},
               {"spacing_s", ir.spacing},
               {"max_iterations", ir.fit.max_iterations},
               {"tolerance", ir.fit.tolerance}};
    j["scan"] = {{"fwhm_rad_per_s", scan.fwhm_grid},
                 {"epsilon", scan.epsilon},
                 {"seed", scan.seed},
                 {"plateau_rel_tol", scan.plateau_rel_tol},
                 {"start", point_json(scan.start)}};
    return j.dump();
}

std::uint64_t ExperimentConfig::hash() const { return Fnv1a{}.str(canonical()).digest(); }

ExperimentConfig parse_config(const std::string& text, const std::filesystem::path& base_dir) {
    Json root;
    try {
        root = Json::parse(text, nullptr, true, true);
    } catch (const Json::parse_error& e) {
        throw ConfigError("line " + std::to_string(line_of(text, e.byte)), "malformed JSON");
    }
    const Node n(root, "");
    n.allow({"scenario", "output_dir", "ensemble", "grid", "truth", "field", "optimizer", "baseline",
             "estimator", "noise", "ir", "scan"});

    ExperimentConfig c;
    n.read("scenario", c.scenario);
    std::string out;
    n.read("output_dir", out);
    if (!out.empty()) c.output_dir = std::filesystem::path(out).is_absolute() ? std::filesystem::path(out) : base_dir / out;
    else c.output_dir = base_dir;

    if (n.has("ensemble")) read_ensemble(n.child("ensemble"), c.ensemble);

    if (n.has("grid")) {
        const Node g = n.child("grid");
        for (const auto& [name, values] : g.json().items()) {
            try {
                parameter_info(name);
            } catch (const InvalidInput&) {
                throw ConfigError(g.at(name), "unknown parameter");
            }
            auto v = Node::numbers(values, g.at(name));
            if (v.empty()) throw ConfigError(g.at(name), "empty value list");
            c.grid.emplace_back(name, std::move(v));
        }
    }
    n.read("truth", c.truth);

    if (n.has("field")) read_field(n.child("field"), c.field, base_dir);
    if (n.has("optimizer")) read_optimizer(n.child("optimizer"), c.optimizer);
    c.optimizer.axes = c.field.axes;
    if (n.has("baseline")) {
        const Node b = n.child("baseline");
        b.allow({"amplitude_rad", "seed"});
        b.read("amplitude_rad", c.baseline.amplitude);
        b.read_int("seed", c.baseline.seed);
    }
    if (n.has("estimator")) read_estimator(n.child("estimator"), c.estimator);
    if (n.has("noise")) read_noise(n.child("noise"), c.noise);
    if (n.has("ir")) {
        const Node r = n.child("ir");
        r.allow({"n_points", "spacing_s", "max_iterations", "tolerance"});
        r.read_int("n_points", c.ir.n_points);
        r.read("spacing_s", c.ir.spacing);
        r.read_int("max_iterations", c.ir.fit.max_iterations);
        r.read("tolerance", c.ir.fit.tolerance);
        if (c.ir.n_points < 2) throw ConfigError(r.at("n_points"), "need at least 2 points");
        if (!(c.ir.spacing > 0.0)) throw ConfigError(r.at("spacing_s"), "must be positive");
    }
    if (n.has("scan")) {
        const Node s = n.child("scan");
        s.allow({"fwhm_rad_per_s", "epsilon", "seed", "plateau_rel_tol", "start"});
        s.read("fwhm_rad_per_s", c.scan.fwhm_grid);
        s.read("epsilon", c.scan.epsilon);
        s.read_int("seed", c.scan.seed);
        s.read("plateau_rel_tol", c.scan.plateau_rel_tol);
        s.read("start", c.scan.start);
    }

    if (c.field.kind == FieldSourceKind::kFile) {
        std::ifstream in(c.field.path);
        if (!in) throw ConfigError("/field/path", "cannot open " + c.field.path.string());
        try {
            c.field_file_hash = hash_sequence(read_pulse_sequence(in));
        } catch (const std::exception& e) {
            throw ConfigError("/field/path", e.what());
        }
    }
    return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path.string(), "cannot open config file");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), path.parent_path().empty() ? std::filesystem::path(".") : path.parent_path());
}

}  // namespace ofp::cli
