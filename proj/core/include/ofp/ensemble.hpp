#pragma once

// Named physical parameters and the template that turns a parameter point into
// a concrete spin ensemble.

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ofp/bloch.hpp"

namespace ofp {

namespace param {
inline constexpr std::string_view kT1 = "t1_s";
inline constexpr std::string_view kT2 = "t2_s";
inline constexpr std::string_view kFwhm = "fwhm_rad_per_s";
inline constexpr std::string_view kCenter = "center_rad_per_s";
inline constexpr std::string_view kRfScale = "rf_scale";
}  // namespace param

/// Admissible range of one named parameter. Fits project onto [lower, upper].
struct ParameterInfo {
    std::string_view name;
    double lower;
    double upper;
};

/// Registry lookup; throws InvalidInput for unknown names.
const ParameterInfo& parameter_info(std::string_view name);
std::span<const ParameterInfo> known_parameters();

struct Parameter {
    std::string name;
    double value = 0.0;
    friend bool operator==(const Parameter&, const Parameter&) = default;
};

/// Ordered tuple of named parameter values. Names are unique and must be
/// known to the registry.
class ParameterPoint {
public:
    ParameterPoint() = default;
    ParameterPoint(std::initializer_list<Parameter> values);

    void set(std::string_view name, double value);
    [[nodiscard]] double get(std::string_view name) const;
    [[nodiscard]] std::optional<double> find(std::string_view name) const;
    [[nodiscard]] bool contains(std::string_view name) const { return find(name).has_value(); }

    [[nodiscard]] const std::vector<Parameter>& values() const noexcept { return values_; }
    [[nodiscard]] std::size_t size() const noexcept { return values_.size(); }
    [[nodiscard]] std::string to_string() const;

    /// Throws InvalidInput if any value is outside its admissible range.
    void validate() const;

    friend bool operator==(const ParameterPoint&, const ParameterPoint&) = default;

private:
    std::vector<Parameter> values_;
};

/// Everything needed to build the ensemble of one dictionary system. A zero
/// fwhm means a homogeneous sample: one isochromat at `center`.
struct EnsembleSpec {
    RelaxationParams relaxation{1.0, 0.1};
    double center = 0.0;  // rad/s
    double fwhm = 0.0;    // rad/s
    int n_points = 101;
    double support_halfwidth = 5.0;
    double rf_scale = 1.0;

    void validate() const;
    friend bool operator==(const EnsembleSpec&, const EnsembleSpec&) = default;
};

/// Copy of `base` with every parameter present in `point` overridden.
EnsembleSpec apply_parameters(EnsembleSpec base, const ParameterPoint& point);

/// Value the template assigns to a named parameter.
double parameter_value(const EnsembleSpec& spec, std::string_view name);

SpinEnsemble make_ensemble(const EnsembleSpec& spec);

/// Cartesian product of per-parameter value lists, first axis varying slowest.
std::vector<ParameterPoint> parameter_grid(
    std::span<const std::pair<std::string, std::vector<double>>> axes);

}  // namespace ofp
