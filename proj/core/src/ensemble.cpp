#include "ofp/ensemble.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>

#include "ofp/error.hpp"

namespace ofp {

namespace {

constexpr std::array<ParameterInfo, 5> kRegistry{{
    {param::kT1, 1e-4, 1e3},
    {param::kT2, 1e-4, 1e3},
    {param::kFwhm, 0.0, 1e5},
    {param::kCenter, -1e5, 1e5},
    {param::kRfScale, 1e-3, 10.0},
}};

}  // namespace

const ParameterInfo& parameter_info(std::string_view name) {
    for (const auto& info : kRegistry)
        if (info.name == name) return info;
    throw InvalidInput("unknown parameter '" + std::string(name) + "'");
}

std::span<const ParameterInfo> known_parameters() { return kRegistry; }

ParameterPoint::ParameterPoint(std::initializer_list<Parameter> values) {
    for (const auto& p : values) {
        if (contains(p.name)) throw InvalidInput("duplicate parameter '" + p.name + "'");
        set(p.name, p.value);
    }
}

void ParameterPoint::set(std::string_view name, double value) {
    parameter_info(name);
    for (auto& p : values_) {
        if (p.name == name) {
            p.value = value;
            return;
        }
    }
    values_.push_back({std::string(name), value});
}

std::optional<double> ParameterPoint::find(std::string_view name) const {
    for (const auto& p : values_)
        if (p.name == name) return p.value;
    return std::nullopt;
}

double ParameterPoint::get(std::string_view name) const {
    if (auto v = find(name)) return *v;
    throw InvalidInput("parameter '" + std::string(name) + "' not present");
}

std::string ParameterPoint::to_string() const {
    std::ostringstream os;
    os.precision(6);
    for (std::size_t i = 0; i < values_.size(); ++i)
        os << (i ? " " : "") << values_[i].name << "=" << values_[i].value;
    return os.str();
}

void ParameterPoint::validate() const {
    if (values_.empty()) throw InvalidInput("parameter point is empty");
    for (const auto& p : values_) {
        const auto& info = parameter_info(p.name);
        if (!(std::isfinite(p.value) && p.value >= info.lower && p.value <= info.upper))
            throw InvalidInput("parameter '" + p.name + "' outside admissible range");
    }
}

void EnsembleSpec::validate() const {
    relaxation.validate();
    if (!(fwhm >= 0.0 && std::isfinite(fwhm))) throw InvalidInput("fwhm must be >= 0");
    if (!std::isfinite(center)) throw InvalidInput("center must be finite");
    if (n_points < 1) throw InvalidInput("n_points must be >= 1");
    if (!(rf_scale > 0.0 && std::isfinite(rf_scale))) throw InvalidInput("rf_scale must be > 0");
}

EnsembleSpec apply_parameters(EnsembleSpec base, const ParameterPoint& point) {
    for (const auto& p : point.values()) {
        if (p.name == param::kT1) base.relaxation.t1 = p.value;
        else if (p.name == param::kT2) base.relaxation.t2 = p.value;
        else if (p.name == param::kFwhm) base.fwhm = p.value;
        else if (p.name == param::kCenter) base.center = p.value;
        else if (p.name == param::kRfScale) base.rf_scale = p.value;
    }
    return base;
}

double parameter_value(const EnsembleSpec& spec, std::string_view name) {
    if (name == param::kT1) return spec.relaxation.t1;
    if (name == param::kT2) return spec.relaxation.t2;
    if (name == param::kFwhm) return spec.fwhm;
    if (name == param::kCenter) return spec.center;
    if (name == param::kRfScale) return spec.rf_scale;
    throw InvalidInput("unknown parameter '" + std::string(name) + "'");
}

SpinEnsemble make_ensemble(const EnsembleSpec& spec) {
    spec.validate();
    if (spec.fwhm == 0.0) {
        SpinEnsemble ens;
        ens.relaxation = spec.relaxation;
        ens.isochromats.push_back({spec.center, spec.rf_scale, 1.0});
        return ens;
    }
    return make_lorentzian_ensemble({spec.center, spec.fwhm, spec.n_points, spec.support_halfwidth},
                                    spec.rf_scale, spec.relaxation);
}

std::vector<ParameterPoint> parameter_grid(
    std::span<const std::pair<std::string, std::vector<double>>> axes) {
    if (axes.empty()) throw InvalidInput("parameter grid has no axes");
    std::vector<ParameterPoint> out{ParameterPoint{}};
    for (const auto& [name, values] : axes) {
        if (values.empty()) throw InvalidInput("parameter axis '" + name + "' is empty");
        std::vector<ParameterPoint> next;
        next.reserve(out.size() * values.size());
        for (const auto& base : out) {
            if (base.contains(name)) throw InvalidInput("duplicate parameter '" + name + "'");
            for (double v : values) {
                auto p = base;
                p.set(name, v);
                next.push_back(std::move(p));
            }
        }
        out = std::move(next);
    }
    return out;
}

}  // namespace ofp
