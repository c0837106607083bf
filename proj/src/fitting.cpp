#include "focalcal/fitting.hpp"

#include "focalcal/core.hpp"
#include "focalcal/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>

namespace focalcal {

namespace {

double round12(double x) { return std::round(x * 1e12) / 1e12; }

void check_gammas(std::span<const double> gammas) {
    for (double g : gammas) check_calibration_gamma(g);
}

bool better(const TraceEntry& a, const TraceEntry& b) {
    if (a.value != b.value) return a.value < b.value;
    const double ta = std::abs(a.params.temperature - 1.0);
    const double tb = std::abs(b.params.temperature - 1.0);
    if (ta != tb) return ta < tb;
    return std::abs(a.params.gamma_ev) < std::abs(b.params.gamma_ev);
}

FitResult finish(std::vector<TraceEntry> trace, const GridSpec& grid, std::string method) {
    FitResult r;
    const std::size_t best = select_best(trace);
    r.best = trace[best].params;
    r.criterion_value = trace[best].value;
    r.trace = std::move(trace);
    r.grid = grid;
    r.method = std::move(method);
    return r;
}

// Optimal T index for a single gamma over the whole T grid; appends the sweep
// to the trace.
std::size_t sweep(GridEvaluator& eval, const std::vector<double>& temps, double gamma, CalibratorFamily family,
                  std::vector<TraceEntry>& trace) {
    const std::size_t first = trace.size();
    const double g[] = {gamma};
    for (double t : temps) {
        trace.push_back({{gamma, t, family}, eval.evaluate(t, g)[0]});
    }
    std::vector<TraceEntry> part(trace.begin() + static_cast<std::ptrdiff_t>(first), trace.end());
    return select_best(part);
}

}  // namespace

std::string_view to_string(Criterion c) noexcept { return c == Criterion::ece ? "ece" : "nll"; }

Criterion criterion_from_string(std::string_view s) {
    if (s == "ece") return Criterion::ece;
    if (s == "nll") return Criterion::nll;
    throw ParameterError("unknown criterion '" + std::string(s) + "'");
}

void GridSpec::validate() const {
    if (!(std::isfinite(t_min) && t_min > 0.0)) throw ParameterError("t_min must be > 0");
    if (!(std::isfinite(t_step) && t_step > 0.0)) throw ParameterError("t_step must be > 0");
    if (!(std::isfinite(t_max) && t_max >= t_min)) throw ParameterError("t_max must be >= t_min");
    if (gamma_values.empty()) throw ParameterError("gamma grid is empty");
    if (n_bins == 0) throw ParameterError("number of bins must be positive");
    for (std::size_t i = 0; i < gamma_values.size(); ++i) {
        if (!std::isfinite(gamma_values[i])) throw ParameterError("non-finite gamma in grid");
        for (std::size_t j = 0; j < i; ++j) {
            if (gamma_values[i] == gamma_values[j]) {
                throw ParameterError("duplicate gamma " + std::to_string(gamma_values[i]) + " in grid");
            }
        }
    }
}

std::vector<double> GridSpec::temperatures() const {
    const auto count = static_cast<std::size_t>(std::floor((t_max - t_min) / t_step + 1e-9)) + 1;
    std::vector<double> ts(count);
    for (std::size_t i = 0; i < count; ++i) ts[i] = round12(t_min + static_cast<double>(i) * t_step);
    return ts;
}

std::vector<double> GridSpec::default_gammas() { return {-0.5, -0.25, 0.05, 0.25, 0.37, 0.5, 0.75, 1.0, 5.0}; }

GridSpec GridSpec::default_protocol(Criterion c) {
    GridSpec g;
    g.gamma_values = default_gammas();
    g.criterion = c;
    return g;
}

GridEvaluator::GridEvaluator(const LabeledLogits& data, Criterion criterion, std::size_t n_bins)
    : data_(data), criterion_(criterion), n_bins_(n_bins) {
    if (n_bins == 0) throw ParameterError("number of bins must be positive");
}

std::vector<double> GridEvaluator::evaluate(double temperature, std::span<const double> gammas) {
    const Temperature temp{temperature};
    const std::size_t n = data_.n_classes();
    const std::size_t rows = data_.size();
    const std::size_t ng = gammas.size();

    std::vector<double> q(n), log1m(n), shape(n), out(n);
    std::vector<double> conf;
    std::vector<std::uint8_t> correct;
    std::vector<CompensatedSum> loss;
    if (criterion_ == Criterion::ece) {
        conf.resize(ng * rows);
        correct.resize(ng * rows);
    } else {
        loss.resize(ng);
    }

    const bool focal = std::any_of(gammas.begin(), gammas.end(), [](double g) { return g != 0.0; });
    for (std::size_t i = 0; i < rows; ++i) {
        temperature_scale_into(data_.row(i), temp, q);
        if (focal) detail::focal_terms(q, log1m, shape);
        for (std::size_t g = 0; g < ng; ++g) {
            detail::focal_combine(q, log1m, shape, gammas[g], out);
            if (criterion_ == Criterion::ece) {
                const std::size_t k = argmax(out);
                conf[g * rows + i] = out[k];
                correct[g * rows + i] = k == data_.label(i);
            } else {
                loss[g].add(cross_entropy(out, data_.label(i)));
            }
        }
    }

    std::vector<double> values(ng);
    for (std::size_t g = 0; g < ng; ++g) {
        if (criterion_ == Criterion::ece) {
            values[g] = ece_from_scores(std::span(conf).subspan(g * rows, rows),
                                        std::span(correct).subspan(g * rows, rows), n_bins_);
        } else {
            values[g] = loss[g].value() / static_cast<double>(rows);
        }
    }
    return values;
}

double evaluate_criterion(const LabeledLogits& data, const CalibratorParams& params, Criterion criterion,
                          std::size_t n_bins) {
    params.validate();
    GridEvaluator eval(data, criterion, n_bins);
    const double g[] = {params.gamma_ev};
    return eval.evaluate(params.temperature, g)[0];
}

std::size_t select_best(const std::vector<TraceEntry>& trace) {
    if (trace.empty()) throw ParameterError("no candidates evaluated");
    std::size_t best = 0;
    for (std::size_t i = 1; i < trace.size(); ++i) {
        if (better(trace[i], trace[best])) best = i;
    }
    return best;
}

FitResult fit_temperature(const LabeledLogits& val, GridSpec grid) {
    grid.gamma_values = {0.0};
    grid.validate();
    GridEvaluator eval(val, grid.criterion, grid.n_bins);
    std::vector<TraceEntry> trace;
    sweep(eval, grid.temperatures(), 0.0, CalibratorFamily::temperature, trace);
    return finish(std::move(trace), grid, "ts");
}

FitResult fit_focal_temperature(const LabeledLogits& val, const GridSpec& grid) {
    grid.validate();
    check_gammas(grid.gamma_values);
    const auto temps = grid.temperatures();
    GridEvaluator eval(val, grid.criterion, grid.n_bins);

    std::vector<std::vector<double>> by_t;
    by_t.reserve(temps.size());
    for (double t : temps) by_t.push_back(eval.evaluate(t, grid.gamma_values));

    std::vector<TraceEntry> trace;
    trace.reserve(grid.gamma_values.size() * temps.size());
    for (std::size_t g = 0; g < grid.gamma_values.size(); ++g) {
        for (std::size_t t = 0; t < temps.size(); ++t) {
            trace.push_back({{grid.gamma_values[g], temps[t], CalibratorFamily::focal_temperature}, by_t[t][g]});
        }
    }
    return finish(std::move(trace), grid, "fts");
}

FitResult fit_focal_temperature_line(const LabeledLogits& val, const GridSpec& grid,
                                     std::optional<std::pair<double, double>> probe_gammas) {
    grid.validate();
    check_gammas(grid.gamma_values);
    const auto temps = grid.temperatures();
    const std::size_t m = temps.size();
    if (grid.gamma_values.size() > m) {
        throw ParameterError("line search needs no more gammas than temperatures");
    }

    if (!probe_gammas) {
        std::vector<double> nz;
        for (double g : grid.gamma_values) {
            if (g != 0.0) nz.push_back(g);
        }
        if (nz.size() < 2) nz = grid.gamma_values;
        const auto [lo, hi] = std::minmax_element(nz.begin(), nz.end());
        probe_gammas = {*lo, *hi};
    }
    const auto [g1, g2] = *probe_gammas;
    if (!(g1 != g2)) throw ParameterError("probe gammas must be distinct");
    check_calibration_gamma(g1);
    check_calibration_gamma(g2);

    GridEvaluator eval(val, grid.criterion, grid.n_bins);
    std::vector<TraceEntry> trace(2 * m);
    const double probes[] = {g1, g2};
    for (std::size_t t = 0; t < m; ++t) {
        const auto v = eval.evaluate(temps[t], probes);
        trace[t] = {{g1, temps[t], CalibratorFamily::focal_temperature}, v[0]};
        trace[m + t] = {{g2, temps[t], CalibratorFamily::focal_temperature}, v[1]};
    }
    const auto best_in = [&](std::size_t first) {
        return select_best(std::vector<TraceEntry>(trace.begin() + static_cast<std::ptrdiff_t>(first),
                                                   trace.begin() + static_cast<std::ptrdiff_t>(first + m)));
    };
    const double t1 = temps[best_in(0)];
    const double t2 = temps[best_in(m)];

    // candidates on the line, grouped by T index so each T is one pass
    std::vector<std::size_t> idx(grid.gamma_values.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        const double g = grid.gamma_values[i];
        const double t_line = t1 + (t2 - t1) * (g - g1) / (g2 - g1);
        const double pos = std::round((t_line - grid.t_min) / grid.t_step);
        idx[i] = static_cast<std::size_t>(std::clamp(pos, 0.0, static_cast<double>(m - 1)));
    }
    std::vector<double> values(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (std::find(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(i), idx[i]) !=
            idx.begin() + static_cast<std::ptrdiff_t>(i)) {
            continue;
        }
        std::vector<double> gs;
        for (std::size_t j = i; j < idx.size(); ++j) {
            if (idx[j] == idx[i]) gs.push_back(grid.gamma_values[j]);
        }
        const auto v = eval.evaluate(temps[idx[i]], gs);
        for (std::size_t j = i, k = 0; j < idx.size(); ++j) {
            if (idx[j] == idx[i]) values[j] = v[k++];
        }
    }
    for (std::size_t i = 0; i < idx.size(); ++i) {
        trace.push_back({{grid.gamma_values[i], temps[idx[i]], CalibratorFamily::focal_temperature}, values[i]});
    }
    return finish(std::move(trace), grid, "fts-line");
}

PredictionBatch apply_calibrator(const LabeledLogits& data, const CalibratorParams& params) {
    params.validate();
    const std::size_t n = data.n_classes();
    std::vector<double> probs(data.size() * n);
    for (std::size_t i = 0; i < data.size(); ++i) {
        focal_temperature_transform_into(data.row(i), params, std::span(probs).subspan(i * n, n));
    }
    return PredictionBatch(n, std::move(probs), data.labels());
}

}  // namespace focalcal
