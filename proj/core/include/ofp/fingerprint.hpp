#pragma once

// Dictionaries of simulated fingerprints, the normalized distance D between
// signals, the dictionary figure of merit C_N and nearest-entry recognition.
//
// Signals are compared through the discrete scalar product that sums the
// pointwise products of both transverse components over all samples.

#include <cstdint>
#include <span>
#include <vector>

#include "ofp/bloch.hpp"
#include "ofp/ensemble.hpp"

namespace ofp {

double inner_product(const Trajectory& f, const Trajectory& g);
double norm(const Trajectory& f);

/// D = |f/|f| - g/|g||^2 = 2(1 - cos angle), in [0, 4].
/// Throws DegenerateSignal if either norm is zero.
double distance(const Trajectory& f, const Trajectory& g);

/// Symmetric non-negative N x N weights. The diagonal is never read.
class WeightMatrix {
public:
    WeightMatrix() = default;
    explicit WeightMatrix(std::size_t n, double fill = 1.0);

    static WeightMatrix ones(std::size_t n) { return WeightMatrix(n, 1.0); }

    [[nodiscard]] std::size_t size() const noexcept { return n_; }
    [[nodiscard]] double operator()(std::size_t m, std::size_t n) const { return mu_[m * n_ + n]; }
    /// Sets both (m, n) and (n, m).
    void set(std::size_t m, std::size_t n, double value);
    void validate() const;

private:
    std::size_t n_ = 0;
    std::vector<double> mu_;
};

struct DictionaryEntry {
    ParameterPoint parameters;
    Trajectory trajectory;
    friend bool operator==(const DictionaryEntry&, const DictionaryEntry&) = default;
};

struct Dictionary {
    EnsembleSpec ensemble;  // template; entries override the named parameters
    PulseSequence field;
    std::vector<DictionaryEntry> entries;
    std::uint64_t field_hash = 0;
    std::uint64_t ensemble_hash = 0;

    [[nodiscard]] std::size_t size() const noexcept { return entries.size(); }
    [[nodiscard]] std::vector<Trajectory> trajectories() const;
    /// Shape, uniqueness and hash checks.
    void validate() const;
    friend bool operator==(const Dictionary&, const Dictionary&) = default;
};

Dictionary build_dictionary(const EnsembleSpec& ensemble, std::span<const ParameterPoint> points,
                            const PulseSequence& field, int threads = 1);

/// C_N = 1/(2N^2) sum_{m,n} mu_mn D[f_m, f_n].
double figure_of_merit(std::span<const Trajectory> signals, const WeightMatrix& weights);
double figure_of_merit(const Dictionary& dict, const WeightMatrix& weights);

struct RecognitionMap {
    std::size_t n = 0;
    std::vector<double> values;     // row-major N x N
    double min_off_diagonal = 0.0;  // 0 when N == 1

    [[nodiscard]] double operator()(std::size_t m, std::size_t k) const { return values[m * n + k]; }
};

RecognitionMap recognition_map(std::span<const Trajectory> signals, int threads = 1);
RecognitionMap recognition_map(const Dictionary& dict, int threads = 1);

struct Match {
    std::size_t index = 0;
    ParameterPoint parameters;
    double residual = 0.0;
    bool tie = false;                // another entry attains the same minimum
    std::vector<double> residuals;   // D[f_n, g] for every entry
};

/// Entry minimizing D[f_n, g]; the lowest index wins ties.
Match recognize(const Dictionary& dict, const Trajectory& g);

}  // namespace ofp
