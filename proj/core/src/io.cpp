#include "ofp/io.hpp"

#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "ofp/error.hpp"
#include "ofp/hash.hpp"

namespace ofp {

using Json = nlohmann::ordered_json;

namespace {

constexpr int kFormatVersion = 1;

void comment_line(std::ostream& os, std::string_view comment) {
    if (!comment.empty()) os << "# " << comment << '\n';
}

double parse_double(std::string_view field, std::size_t line, std::string_view what) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
    if (ec != std::errc{} || ptr != field.data() + field.size())
        throw ParseError("bad " + std::string(what) + " value '" + std::string(field) + "'", line);
    return v;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        const auto pos = s.find(sep, start);
        out.push_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos) return out;
        start = pos + 1;
    }
}

Json provenance_json(const Provenance& p) {
    Json j = Json::object();
    for (const auto& [k, v] : p) j[k] = v;
    return j;
}

Json parse_json(std::istream& is) {
    try {
        return Json::parse(is);
    } catch (const Json::parse_error& e) {
        throw ParseError(e.what());
    }
}

void expect_format(const Json& j, std::string_view format) {
    if (!j.is_object() || !j.contains("format") || j["format"] != format)
        throw ParseError("expected a '" + std::string(format) + "' document");
    if (!j.contains("version") || j["version"] != kFormatVersion)
        throw ParseError("unsupported " + std::string(format) + " version");
}

Json sequence_json(const PulseSequence& seq) {
    Json pulses = Json::array();
    for (const auto& p : seq.pulses) pulses.push_back({p.theta_x, p.theta_y});
    return Json{{"delay_t", seq.delay_t}, {"pulses", std::move(pulses)}};
}

PulseSequence sequence_from(const Json& j) {
    PulseSequence seq;
    try {
        seq.delay_t = j.at("delay_t").get<double>();
        for (const auto& p : j.at("pulses")) {
            if (!p.is_array() || p.size() != 2) throw ParseError("each pulse must be a [theta_x, theta_y] pair");
            seq.pulses.push_back({p[0].get<double>(), p[1].get<double>()});
        }
    } catch (const Json::exception& e) {
        throw ParseError(std::string("pulse sequence: ") + e.what());
    }
    try {
        seq.validate();
    } catch (const InvalidInput& e) {
        throw ParseError(std::string("pulse sequence: ") + e.what());
    }
    return seq;
}

Json ensemble_json(const EnsembleSpec& e) {
    return Json{{param::kT1, e.relaxation.t1},
                {param::kT2, e.relaxation.t2},
                {param::kCenter, e.center},
                {param::kFwhm, e.fwhm},
                {"n_points", e.n_points},
                {"support_halfwidth", e.support_halfwidth},
                {param::kRfScale, e.rf_scale}};
}

EnsembleSpec ensemble_from(const Json& j) {
    EnsembleSpec e;
    e.relaxation.t1 = j.at(param::kT1).get<double>();
    e.relaxation.t2 = j.at(param::kT2).get<double>();
    e.center = j.at(param::kCenter).get<double>();
    e.fwhm = j.at(param::kFwhm).get<double>();
    e.n_points = j.at("n_points").get<int>();
    e.support_halfwidth = j.at("support_halfwidth").get<double>();
    e.rf_scale = j.at(param::kRfScale).get<double>();
    return e;
}

Json point_json(const ParameterPoint& p) {
    Json j = Json::array();
    for (const auto& v : p.values()) j.push_back({v.name, v.value});
    return j;
}

ParameterPoint point_from(const Json& j) {
    ParameterPoint p;
    for (const auto& kv : j) {
        const auto name = kv.at(0).get<std::string>();
        if (p.contains(name)) throw ParseError("duplicate parameter '" + name + "'");
        p.set(name, kv.at(1).get<double>());
    }
    return p;
}

std::string csv_value(double x) { return std::isnan(x) ? "nan" : format_double(x); }

}  // namespace

std::string format_double(double x) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x, std::chars_format::general, 17);
    if (ec != std::errc{}) throw InvalidInput("cannot format double");
    return {buf, ptr};
}

void write_trajectory_csv(std::ostream& os, const Trajectory& traj, double delay_t, std::string_view comment) {
    comment_line(os, comment);
    os << "k,t,mx,my\n";
    for (std::size_t k = 0; k < traj.size(); ++k) {
        const auto idx = k + 1;
        os << idx << ',' << format_double(delay_t * static_cast<double>(idx)) << ','
           << format_double(traj.samples[k].mx) << ',' << format_double(traj.samples[k].my) << '\n';
    }
}

Trajectory read_trajectory_csv(std::istream& is) {
    Trajectory traj;
    std::string line;
    std::size_t lineno = 0;
    bool header = false;
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line.front() == '#') continue;
        if (!header) {
            if (line != "k,t,mx,my") throw ParseError("expected header 'k,t,mx,my'", lineno);
            header = true;
            continue;
        }
        const auto fields = split(line, ',');
        if (fields.size() != 4)
            throw ParseError("expected 4 fields, got " + std::to_string(fields.size()), lineno);
        const double k = parse_double(fields[0], lineno, "k");
        if (k != static_cast<double>(traj.size() + 1)) throw ParseError("sample index out of sequence", lineno);
        parse_double(fields[1], lineno, "t");
        const double mx = parse_double(fields[2], lineno, "mx");
        const double my = parse_double(fields[3], lineno, "my");
        if (!std::isfinite(mx) || !std::isfinite(my)) throw ParseError("non-finite sample", lineno);
        traj.samples.push_back({mx, my});
    }
    if (!header) throw ParseError("missing header 'k,t,mx,my'", lineno);
    if (traj.empty()) throw ParseError("trajectory has no samples", lineno);
    return traj;
}

void write_pulse_sequence(std::ostream& os, const PulseSequence& seq, const Provenance& provenance) {
    Json j{{"format", "ofp-pulse-sequence"}, {"version", kFormatVersion}};
    const auto body = sequence_json(seq);
    j["delay_t"] = body["delay_t"];
    j["pulses"] = body["pulses"];
    if (!provenance.empty()) j["provenance"] = provenance_json(provenance);
    os << j.dump(1) << '\n';
}

PulseSequence read_pulse_sequence(std::istream& is, Provenance* provenance) {
    const auto j = parse_json(is);
    expect_format(j, "ofp-pulse-sequence");
    auto seq = sequence_from(j);
    if (provenance) {
        provenance->clear();
        if (j.contains("provenance"))
            for (const auto& [k, v] : j["provenance"].items())
                provenance->emplace_back(k, v.is_string() ? v.get<std::string>() : v.dump());
    }
    return seq;
}

void write_dictionary(std::ostream& os, const Dictionary& dict) {
    Json entries = Json::array();
    for (const auto& e : dict.entries) {
        Json traj = Json::array();
        for (const auto& s : e.trajectory.samples) traj.push_back({s.mx, s.my});
        entries.push_back({{"parameters", point_json(e.parameters)}, {"trajectory", std::move(traj)}});
    }
    const Json j{{"format", "ofp-dictionary"},
                 {"version", kFormatVersion},
                 {"ensemble", ensemble_json(dict.ensemble)},
                 {"ensemble_hash", hex64(dict.ensemble_hash)},
                 {"field", sequence_json(dict.field)},
                 {"field_hash", hex64(dict.field_hash)},
                 {"entries", std::move(entries)}};
    os << j.dump() << '\n';
}

Dictionary read_dictionary(std::istream& is, std::optional<std::uint64_t> expected_field_hash) {
    const auto j = parse_json(is);
    expect_format(j, "ofp-dictionary");
    Dictionary dict;
    try {
        dict.ensemble = ensemble_from(j.at("ensemble"));
        dict.field = sequence_from(j.at("field"));
        dict.ensemble_hash = parse_hex64(j.at("ensemble_hash").get<std::string>());
        dict.field_hash = parse_hex64(j.at("field_hash").get<std::string>());
        for (const auto& e : j.at("entries")) {
            DictionaryEntry entry;
            entry.parameters = point_from(e.at("parameters"));
            for (const auto& s : e.at("trajectory")) {
                if (!s.is_array() || s.size() != 2) throw ParseError("each sample must be an [mx, my] pair");
                entry.trajectory.samples.push_back({s[0].get<double>(), s[1].get<double>()});
            }
            dict.entries.push_back(std::move(entry));
        }
    } catch (const Json::exception& e) {
        throw ParseError(std::string("dictionary: ") + e.what());
    }
    if (expected_field_hash && *expected_field_hash != dict.field_hash)
        throw InvalidInput("dictionary was built for field " + hex64(dict.field_hash) + ", expected " +
                           hex64(*expected_field_hash));
    dict.validate();
    return dict;
}

void write_recognition_map_csv(std::ostream& os, const RecognitionMap& map, std::string_view comment) {
    comment_line(os, comment);
    for (std::size_t m = 0; m < map.n; ++m) {
        for (std::size_t k = 0; k < map.n; ++k) os << (k ? "," : "") << format_double(map(m, k));
        os << '\n';
    }
}

void write_recognition_map_sidecar(std::ostream& os, const RecognitionMap& map, const Provenance& provenance) {
    Json j{{"format", "ofp-recognition-map"},
           {"version", kFormatVersion},
           {"n", map.n},
           {"min_off_diagonal", map.min_off_diagonal}};
    if (!provenance.empty()) j["provenance"] = provenance_json(provenance);
    os << j.dump(1) << '\n';
}

void write_trace_csv(std::ostream& os, const OptimizationTrace& trace, std::string_view comment) {
    comment_line(os, comment);
    os << "iteration,c_n,grad_norm,step\n";
    for (std::size_t i = 0; i < trace.values.size(); ++i)
        os << i << ',' << format_double(trace.values[i]) << ',' << format_double(trace.grad_norms[i]) << ','
           << format_double(trace.steps[i]) << '\n';
}

void write_scan_csv(std::ostream& os, std::span<const ScanRow> rows, std::string_view comment) {
    comment_line(os, comment);
    os << "fwhm,t2,omega_bar,residual,t2_star\n";
    constexpr double nan = std::numeric_limits<double>::quiet_NaN();
    for (const auto& r : rows)
        os << csv_value(r.fwhm) << ',' << csv_value(r.ok ? r.t2 : nan) << ',' << csv_value(r.ok ? r.center : nan)
           << ',' << csv_value(r.ok ? r.residual : nan) << ',' << csv_value(r.ok ? r.t2_star : nan) << '\n';
}

void write_width_csv(std::ostream& os, const WidthReport& report, std::string_view comment) {
    comment_line(os, comment);
    os << "epsilon,mean,width,draws,failures,method\n";
    for (const auto& r : report.rows)
        os << format_double(r.epsilon) << ',' << format_double(r.mean) << ',' << format_double(r.width) << ','
           << r.draws << ',' << r.failures << ',' << report.method << '\n';
}

void write_ratio_csv(std::ostream& os, std::span<const RatioRow> rows, std::string_view comment) {
    comment_line(os, comment);
    os << "epsilon,ratio,std_error\n";
    for (const auto& r : rows)
        os << format_double(r.epsilon) << ',' << (r.ratio ? format_double(*r.ratio) : std::string("undefined"))
           << ',' << (r.ratio ? format_double(r.std_error) : std::string("undefined")) << '\n';
}

void write_estimation_report(std::ostream& os, const EstimationReport& report, const Provenance& provenance) {
    Json j{{"format", "ofp-estimation-report"},
           {"version", kFormatVersion},
           {"matched_index", report.matched_index},
           {"matched_parameters", point_json(report.matched_parameters)},
           {"matched_residual", report.matched_residual},
           {"tie", report.tie},
           {"refined_parameters", point_json(report.refined_parameters)},
           {"final_residual", report.final_residual},
           {"iterations", report.iterations},
           {"converged", report.converged},
           {"residual_history", report.residual_history},
           {"entry_residuals", report.entry_residuals}};
    if (!provenance.empty()) j["provenance"] = provenance_json(provenance);
    os << j.dump(1) << '\n';
}

}  // namespace ofp
