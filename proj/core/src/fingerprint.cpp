#include "ofp/fingerprint.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ofp/error.hpp"
#include "ofp/hash.hpp"
#include "ofp/parallel.hpp"

namespace ofp {

namespace {

// Residuals closer than this to the minimum are reported as ties.
constexpr double kTieTolerance = 1e-14;

void require_same_shape(const Trajectory& f, const Trajectory& g) {
    if (f.size() != g.size())
        throw DimensionError("trajectory lengths differ: " + std::to_string(f.size()) + " vs " +
                             std::to_string(g.size()));
}

}  // namespace

double inner_product(const Trajectory& f, const Trajectory& g) {
    require_same_shape(f, g);
    double acc = 0.0;
    for (std::size_t k = 0; k < f.size(); ++k)
        acc += f.samples[k].mx * g.samples[k].mx + f.samples[k].my * g.samples[k].my;
    return acc;
}

double norm(const Trajectory& f) { return std::sqrt(inner_product(f, f)); }

double distance(const Trajectory& f, const Trajectory& g) {
    require_same_shape(f, g);
    const double nf = norm(f);
    const double ng = norm(g);
    if (!(nf > 0.0) || !(ng > 0.0)) throw DegenerateSignal("distance of a zero-norm signal");
    // Evaluated as a squared difference of unit vectors rather than 2(1 - cos)
    // so that nearly identical signals keep full relative precision.
    double acc = 0.0;
    for (std::size_t k = 0; k < f.size(); ++k) {
        const double dx = f.samples[k].mx / nf - g.samples[k].mx / ng;
        const double dy = f.samples[k].my / nf - g.samples[k].my / ng;
        acc += dx * dx + dy * dy;
    }
    return std::min(acc, 4.0);
}

WeightMatrix::WeightMatrix(std::size_t n, double fill) : n_(n), mu_(n * n, fill) {}

void WeightMatrix::set(std::size_t m, std::size_t n, double value) {
    if (m >= n_ || n >= n_) throw DimensionError("weight index out of range");
    mu_[m * n_ + n] = value;
    mu_[n * n_ + m] = value;
}

void WeightMatrix::validate() const {
    for (std::size_t m = 0; m < n_; ++m) {
        for (std::size_t n = 0; n < n_; ++n) {
            const double w = (*this)(m, n);
            if (!(w >= 0.0) || !std::isfinite(w)) throw InvalidInput("weights must be finite and >= 0");
            if (w != (*this)(n, m)) throw InvalidInput("weight matrix must be symmetric");
        }
    }
}

std::vector<Trajectory> Dictionary::trajectories() const {
    std::vector<Trajectory> out;
    out.reserve(entries.size());
    for (const auto& e : entries) out.push_back(e.trajectory);
    return out;
}

void Dictionary::validate() const {
    if (entries.empty()) throw InvalidInput("dictionary is empty");
    if (field_hash != hash_sequence(field))
        throw InvalidInput("dictionary field hash does not match its pulse sequence");
    if (ensemble_hash != hash_ensemble_spec(ensemble))
        throw InvalidInput("dictionary ensemble hash does not match its ensemble spec");
    for (std::size_t i = 0; i < entries.size(); ++i) {
        if (entries[i].trajectory.size() != field.count())
            throw DimensionError("dictionary entry " + std::to_string(i) +
                                 " length differs from the pulse count");
        for (std::size_t j = 0; j < i; ++j)
            if (entries[i].parameters == entries[j].parameters)
                throw InvalidInput("dictionary entries " + std::to_string(j) + " and " +
                                   std::to_string(i) + " share parameters");
    }
}

Dictionary build_dictionary(const EnsembleSpec& ensemble, std::span<const ParameterPoint> points,
                            const PulseSequence& field, int threads) {
    if (points.empty()) throw InvalidInput("no parameter points");
    Dictionary dict;
    dict.ensemble = ensemble;
    dict.field = field;
    dict.field_hash = hash_sequence(field);
    dict.ensemble_hash = hash_ensemble_spec(ensemble);
    dict.entries.resize(points.size());
    parallel_for(points.size(), threads, [&](std::size_t i) {
        points[i].validate();
        const auto spec = apply_parameters(ensemble, points[i]);
        dict.entries[i] = {points[i], simulate_fingerprint(make_ensemble(spec), field)};
    });
    dict.validate();
    return dict;
}

double figure_of_merit(std::span<const Trajectory> signals, const WeightMatrix& weights) {
    const std::size_t n = signals.size();
    if (n == 0) throw InvalidInput("figure of merit of an empty dictionary");
    if (weights.size() != n) throw DimensionError("weight matrix size differs from dictionary size");
    double acc = 0.0;
    for (std::size_t m = 0; m < n; ++m)
        for (std::size_t k = m + 1; k < n; ++k)
            acc += (weights(m, k) + weights(k, m)) * distance(signals[m], signals[k]);
    return acc / (2.0 * static_cast<double>(n * n));
}

double figure_of_merit(const Dictionary& dict, const WeightMatrix& weights) {
    return figure_of_merit(dict.trajectories(), weights);
}

RecognitionMap recognition_map(std::span<const Trajectory> signals, int threads) {
    RecognitionMap map;
    map.n = signals.size();
    map.values.assign(map.n * map.n, 0.0);
    // Row m fills the upper triangle; the lower half is mirrored afterwards.
    parallel_for(map.n, threads, [&](std::size_t m) {
        for (std::size_t k = m + 1; k < map.n; ++k)
            map.values[m * map.n + k] = distance(signals[m], signals[k]);
    });
    double lo = std::numeric_limits<double>::infinity();
    for (std::size_t m = 0; m < map.n; ++m) {
        for (std::size_t k = m + 1; k < map.n; ++k) {
            map.values[k * map.n + m] = map.values[m * map.n + k];
            lo = std::min(lo, map.values[m * map.n + k]);
        }
    }
    map.min_off_diagonal = map.n > 1 ? lo : 0.0;
    return map;
}

RecognitionMap recognition_map(const Dictionary& dict, int threads) {
    const auto signals = dict.trajectories();
    return recognition_map(signals, threads);
}

Match recognize(const Dictionary& dict, const Trajectory& g) {
    if (dict.entries.empty()) throw InvalidInput("dictionary is empty");
    if (!(norm(g) > 0.0)) throw DegenerateSignal("measured signal has zero norm");
    Match match;
    match.residuals.reserve(dict.size());
    for (const auto& e : dict.entries) match.residuals.push_back(distance(e.trajectory, g));
    const auto best = std::min_element(match.residuals.begin(), match.residuals.end());
    match.index = static_cast<std::size_t>(best - match.residuals.begin());
    match.residual = *best;
    match.parameters = dict.entries[match.index].parameters;
    for (std::size_t i = 0; i < match.residuals.size(); ++i)
        if (i != match.index && match.residuals[i] - match.residual <= kTieTolerance) match.tie = true;
    return match;
}

}  // namespace ofp
