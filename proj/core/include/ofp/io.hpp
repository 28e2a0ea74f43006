#pragma once

// File formats. CSV files may start with '#'-prefixed comment lines (the
// provenance header); readers skip them. Floats are written with 17
// significant digits so values round-trip exactly. Structured files are JSON
// with a "format" tag and integer "version".

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ofp/bloch.hpp"
#include "ofp/estimator.hpp"
#include "ofp/fingerprint.hpp"
#include "ofp/grape.hpp"
#include "ofp/noise.hpp"

namespace ofp {

/// Ordered key/value annotations embedded in structured files.
using Provenance = std::vector<std::pair<std::string, std::string>>;

std::string format_double(double x);

void write_trajectory_csv(std::ostream& os, const Trajectory& traj, double delay_t,
                          std::string_view comment = {});
/// Expects the header `k,t,mx,my`. Throws ParseError with the offending line.
Trajectory read_trajectory_csv(std::istream& is);

void write_pulse_sequence(std::ostream& os, const PulseSequence& seq, const Provenance& provenance = {});
PulseSequence read_pulse_sequence(std::istream& is, Provenance* provenance = nullptr);

void write_dictionary(std::ostream& os, const Dictionary& dict);
/// Recomputes both hashes. When `expected_field_hash` is given, a dictionary
/// built for a different field is rejected with InvalidInput.
Dictionary read_dictionary(std::istream& is, std::optional<std::uint64_t> expected_field_hash = {});

void write_recognition_map_csv(std::ostream& os, const RecognitionMap& map, std::string_view comment = {});
void write_recognition_map_sidecar(std::ostream& os, const RecognitionMap& map, const Provenance& provenance = {});

void write_trace_csv(std::ostream& os, const OptimizationTrace& trace, std::string_view comment = {});
void write_scan_csv(std::ostream& os, std::span<const ScanRow> rows, std::string_view comment = {});
void write_width_csv(std::ostream& os, const WidthReport& report, std::string_view comment = {});
void write_ratio_csv(std::ostream& os, std::span<const RatioRow> rows, std::string_view comment = {});

void write_estimation_report(std::ostream& os, const EstimationReport& report, const Provenance& provenance = {});

}  // namespace ofp
