#pragma once

#include "focalcal/dataset.hpp"
#include "focalcal/metrics.hpp"
#include "focalcal/params.hpp"

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace focalcal {

enum class Criterion { ece, nll };

std::string_view to_string(Criterion c) noexcept;
Criterion criterion_from_string(std::string_view s);

struct GridSpec {
    std::vector<double> gamma_values;
    double t_min = 0.01;
    double t_max = 5.0;
    double t_step = 0.01;
    Criterion criterion = Criterion::ece;
    std::size_t n_bins = kDefaultBins;

    /// Throws ParameterError on a malformed grid.
    void validate() const;

    /// t_min, t_min + step, ... up to t_max inclusive, each rounded to 12 decimals.
    std::vector<double> temperatures() const;

    /// {-0.5, -0.25, 0.05, 0.25, 0.37, 0.5, 0.75, 1, 5}
    static std::vector<double> default_gammas();

    /// default_gammas() with T from 0.01 to 5 in steps of 0.01.
    static GridSpec default_protocol(Criterion c = Criterion::ece);
};

struct TraceEntry {
    CalibratorParams params;
    double value = 0.0;
};

struct FitResult {
    CalibratorParams best;
    double criterion_value = 0.0;
    std::vector<TraceEntry> trace;
    GridSpec grid;
    std::string method;
};

/// Criterion value of a calibrator on a dataset, computed exactly as
/// ece_equal_mass / nll would on apply_calibrator's output.
double evaluate_criterion(const LabeledLogits& data, const CalibratorParams& params, Criterion criterion,
                          std::size_t n_bins = kDefaultBins);

/// Evaluates the criterion at one temperature for several gammas, sharing the
/// softmax and the gamma-independent focal terms between them.
class GridEvaluator {
public:
    GridEvaluator(const LabeledLogits& data, Criterion criterion, std::size_t n_bins);

    std::vector<double> evaluate(double temperature, std::span<const double> gammas);

private:
    const LabeledLogits& data_;
    Criterion criterion_;
    std::size_t n_bins_;
};

/// Returns the trace index of the best entry: lowest value, then T closest to
/// 1, then gamma closest to 0, then earliest.
std::size_t select_best(const std::vector<TraceEntry>& trace);

FitResult fit_temperature(const LabeledLogits& val, GridSpec grid);
FitResult fit_focal_temperature(const LabeledLogits& val, const GridSpec& grid);

/// Fits T at two probe gammas, draws the line T(gamma) through the two optima
/// and evaluates one candidate per grid gamma on it (T snapped to the grid).
/// Probes default to the smallest and largest non-zero grid gammas.
FitResult fit_focal_temperature_line(const LabeledLogits& val, const GridSpec& grid,
                                     std::optional<std::pair<double, double>> probe_gammas = std::nullopt);

PredictionBatch apply_calibrator(const LabeledLogits& data, const CalibratorParams& params);

}  // namespace focalcal
