#include "focalcal/analysis.hpp"

#include "focalcal/error.hpp"

#include <boost/math/tools/roots.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

namespace focalcal {

namespace {

double round12(double x) { return std::round(x * 1e12) / 1e12; }

struct SearchOutcome {
    double temperature = 1.0;
    double error = std::numeric_limits<double>::infinity();
    std::size_t evaluations = 0;
};

template <class ErrorFn>
SearchOutcome search_temperature(const TemperatureSearch& search, ErrorFn&& error_at) {
    SearchOutcome best;
    auto scan = [&](double lo, double hi, double h) {
        const auto k0 = static_cast<long long>(std::ceil(lo / h - 1e-9));
        const auto k1 = static_cast<long long>(std::floor(hi / h + 1e-9));
        for (long long k = std::max(k0, 1LL); k <= k1; ++k) {
            const double t = round12(static_cast<double>(k) * h);
            const double e = error_at(t);
            ++best.evaluations;
            if (e < best.error) {
                best.error = e;
                best.temperature = t;
            }
        }
    };
    scan(search.t_min, search.t_max, search.steps[0]);
    if (best.evaluations == 0) throw ParameterError("temperature search range holds no grid point");
    for (std::size_t i = 1; i < search.steps.size(); ++i) {
        const double centre = best.temperature;
        const double reach = search.steps[i - 1];
        scan(std::max(search.t_min, centre - reach), std::min(search.t_max, centre + reach), search.steps[i]);
    }
    return best;
}

}  // namespace

void LogitGrid::validate() const {
    if (!(std::isfinite(lo) && std::isfinite(hi) && lo < hi)) throw ParameterError("logit grid needs lo < hi");
    if (!(std::isfinite(step) && step > 0.0)) throw ParameterError("logit grid step must be > 0");
}

std::vector<double> LogitGrid::points() const {
    validate();
    const auto k0 = static_cast<long long>(std::floor(lo / step)) + 1;
    const auto k1 = static_cast<long long>(std::ceil(hi / step)) - 1;
    std::vector<double> pts;
    for (long long k = k0; k <= k1; ++k) {
        const double s = static_cast<double>(k) * step;
        if (s > lo && s < hi) pts.push_back(s);
    }
    if (pts.empty()) throw DomainError("logit grid holds no points");
    return pts;
}

void TemperatureSearch::validate() const {
    if (!(std::isfinite(t_min) && t_min > 0.0 && std::isfinite(t_max) && t_max >= t_min)) {
        throw ParameterError("temperature search needs 0 < t_min <= t_max");
    }
    if (steps.empty()) throw ParameterError("temperature search needs at least one step");
    for (double h : steps) {
        if (!(std::isfinite(h) && h > 0.0)) throw ParameterError("temperature search steps must be > 0");
    }
}

MatchResult minimax_match_binary(double gamma, const LogitGrid& grid, const TemperatureSearch& search) {
    search.validate();
    const auto s = grid.points();
    std::vector<double> fc(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) fc[i] = focal_calib_binary_logit(s[i], gamma);

    const auto best = search_temperature(search, [&](double t) {
        double err = 0.0;
        for (std::size_t i = 0; i < s.size(); ++i) err = std::max(err, std::abs(fc[i] - sigmoid(s[i] / t)));
        return err;
    });

    MatchResult r;
    r.gamma = gamma;
    r.dim = 2;
    r.best_temperature = best.temperature;
    r.best_inverse_temperature = 1.0 / best.temperature;
    r.max_abs_error = best.error;
    r.evaluations = best.evaluations;
    r.points = s.size();
    r.grid = grid;
    return r;
}

SimplexMatcher::SimplexMatcher(std::size_t dim, LogitGrid grid, std::size_t max_points)
    : dim_(dim), grid_(grid) {
    if (dim < 3) throw ParameterError("simplex matching needs dim >= 3");
    if (max_points == 0) throw ParameterError("max_points must be positive");

    auto count_for = [&](std::size_t per_axis) {
        double c = 1.0;
        for (std::size_t d = 0; d + 1 < dim_; ++d) c *= static_cast<double>(per_axis);
        return c;
    };
    auto axis = grid_.points();
    while (count_for(axis.size()) > static_cast<double>(max_points)) {
        grid_.step *= 2.0;
        coarsened_ = true;
        axis = grid_.points();
    }
    count_ = static_cast<std::size_t>(count_for(axis.size()));

    logits_.resize(count_ * dim_);
    probs_.resize(count_ * dim_);
    std::vector<std::size_t> idx(dim_ - 1, 0);
    for (std::size_t i = 0; i < count_; ++i) {
        double* z = &logits_[i * dim_];
        for (std::size_t d = 0; d + 1 < dim_; ++d) z[d] = axis[idx[d]];
        z[dim_ - 1] = 0.0;
        temperature_scale_into(std::span<const double>(z, dim_), Temperature{1.0},
                               std::span<double>(&probs_[i * dim_], dim_));
        for (std::size_t d = 0; d + 1 < dim_; ++d) {
            if (++idx[d] < axis.size()) break;
            idx[d] = 0;
        }
    }
}

MatchResult SimplexMatcher::match(double gamma, const TemperatureSearch& search) const {
    search.validate();
    std::vector<double> focal(probs_.size());
    for (std::size_t i = 0; i < count_; ++i) {
        focal_calib_multiclass_into(std::span<const double>(&probs_[i * dim_], dim_), gamma,
                                    std::span<double>(&focal[i * dim_], dim_));
    }

    std::vector<double> ts(dim_);
    const auto best = search_temperature(search, [&](double t) {
        const Temperature temp{t};
        double err = 0.0;
        for (std::size_t i = 0; i < count_; ++i) {
            temperature_scale_into(std::span<const double>(&logits_[i * dim_], dim_), temp, ts);
            for (std::size_t d = 0; d < dim_; ++d) err = std::max(err, std::abs(focal[i * dim_ + d] - ts[d]));
        }
        return err;
    });

    MatchResult r;
    r.gamma = gamma;
    r.dim = dim_;
    r.best_temperature = best.temperature;
    r.best_inverse_temperature = 1.0 / best.temperature;
    r.max_abs_error = best.error;
    r.evaluations = best.evaluations;
    r.points = count_;
    r.grid = grid_;
    r.coarsened = coarsened_;
    return r;
}

MatchResult minimax_match_simplex(std::size_t dim, double gamma, const LogitGrid& grid,
                                  const TemperatureSearch& search, std::size_t max_points) {
    return SimplexMatcher(dim, grid, max_points).match(gamma, search);
}

LinearFit linear_fit_gamma_invT(std::size_t dim, const std::vector<double>& gammas, const LogitGrid& grid,
                                const TemperatureSearch& search, std::size_t max_points) {
    if (dim < 2 || dim > 4) throw ParameterError("linear fit supports dim 2, 3 or 4");
    if (gammas.size() < 10) throw ParameterError("linear fit needs at least 10 gammas");

    LinearFit fit;
    fit.dim = dim;
    if (dim == 2) {
        for (double g : gammas) fit.matches.push_back(minimax_match_binary(g, grid, search));
    } else {
        const SimplexMatcher matcher(dim, grid, max_points);
        for (double g : gammas) fit.matches.push_back(matcher.match(g, search));
    }

    const auto n = static_cast<double>(gammas.size());
    double mx = 0.0, my = 0.0;
    for (const auto& m : fit.matches) {
        mx += m.gamma;
        my += m.best_inverse_temperature;
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0;
    for (const auto& m : fit.matches) {
        sxx += (m.gamma - mx) * (m.gamma - mx);
        sxy += (m.gamma - mx) * (m.best_inverse_temperature - my);
    }
    if (sxx == 0.0) throw ParameterError("linear fit needs distinct gammas");
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;

    double sq = 0.0;
    for (const auto& m : fit.matches) {
        const double res = m.best_inverse_temperature - (fit.slope * m.gamma + fit.intercept);
        sq += res * res;
        fit.max_abs_residual = std::max(fit.max_abs_residual, std::abs(res));
    }
    fit.rmse = std::sqrt(sq / n);
    return fit;
}

BoundResult bound_check(double gamma, const LogitGrid& grid, double t_step) {
    if (!(std::isfinite(gamma) && gamma > 0.0)) throw ParameterError("bound check needs gamma > 0");
    if (!(std::isfinite(t_step) && t_step > 0.0)) throw ParameterError("bound search step must be > 0");
    const auto s = grid.points();

    BoundResult r;
    r.gamma = gamma;
    r.grid = grid;
    r.t_step = t_step;
    r.points = s.size();
    r.theoretical_lower_T = 1.0 / (gamma + 1.0);
    r.theoretical_upper_T = 1.0 / (gamma + 1.0 - std::log(gamma + 1.0) / 2.0);
    const double steep = gamma + 1.0;
    const double soft = gamma + 1.0 - std::log(gamma + 1.0) / 2.0;

    double beta_min = std::numeric_limits<double>::infinity();
    double beta_max = -std::numeric_limits<double>::infinity();
    for (double si : s) {
        const double l = focal_calib_binary_logit_space(si, gamma);
        bool ok;
        if (si > 0.0) {
            ok = si * soft < l && l < si * steep;
        } else if (si < 0.0) {
            ok = si * steep < l && l < si * soft;
        } else {
            ok = l == 0.0;
        }
        if (!ok) {
            if (r.violations++ == 0) {
                std::ostringstream os;
                os.precision(17);
                os << "gamma=" << gamma << " s=" << si << " logit(FC)=" << l;
                r.witness = os.str();
            }
        }
        if (si != 0.0) {
            const double beta = l / si;
            beta_min = std::min(beta_min, beta);
            beta_max = std::max(beta_max, beta);
        }
    }

    r.experimental_lower_T = round12(std::floor(1.0 / beta_max / t_step + 1e-9) * t_step);
    r.experimental_upper_T = round12(std::ceil(1.0 / beta_min / t_step - 1e-9) * t_step);
    // The grid pair must still sandwich the map.
    if (r.experimental_lower_T * beta_max > 1.0 + 1e-12 || r.experimental_upper_T * beta_min < 1.0 - 1e-12) {
        r.experimental_lower_T = round12(r.experimental_lower_T - t_step);
        r.experimental_upper_T = round12(r.experimental_upper_T + t_step);
    }
    const bool tight = r.theoretical_lower_T <= r.experimental_lower_T &&
                       r.experimental_lower_T <= r.experimental_upper_T &&
                       r.experimental_upper_T <= r.theoretical_upper_T;
    if (!tight) {
        ++r.violations;
        if (r.witness.empty()) r.witness = "experimental bounds fall outside the closed-form pair";
    }
    return r;
}

bool ConfidenceScan::passed() const noexcept {
    return std::all_of(rows.begin(), rows.end(), [](const auto& r) { return r.violations == 0; });
}

ConfidenceScan confidence_raising_scan(const std::vector<std::size_t>& dims, const std::vector<double>& gammas,
                                       std::size_t samples, std::uint64_t seed) {
    if (samples == 0) throw ParameterError("sample count must be positive");
    for (double g : gammas) {
        if (!(std::isfinite(g) && g >= 0.0)) throw ParameterError("confidence scan needs gamma >= 0");
    }
    for (std::size_t d : dims) {
        if (d < 2) throw ParameterError("confidence scan needs dim >= 2");
    }

    ConfidenceScan scan;
    scan.seed = seed;
    std::mt19937_64 rng(seed);
    std::exponential_distribution<double> expo(1.0);

    for (std::size_t dim : dims) {
        for (double g : gammas) {
            ConfidenceScanRow row;
            row.dim = dim;
            row.gamma = g;
            row.samples = samples;
            row.min_margin = std::numeric_limits<double>::infinity();
            ProbVector q(dim), out(dim);
            for (std::size_t i = 0; i < samples; ++i) {
                double sum = 0.0;
                for (double& x : q) {
                    x = expo(rng);
                    sum += x;
                }
                for (double& x : q) x = clamp_prob(x / sum);
                focal_calib_multiclass_into(q, g, out);
                const double margin = out[argmax(out)] - q[argmax(q)];
                if (margin < row.min_margin) {
                    row.min_margin = margin;
                    if (row.violations == 0) row.witness = q;
                }
                if (margin < -kConfidenceTolerance) {
                    if (row.violations++ == 0) row.witness = q;
                }
            }
            scan.rows.push_back(std::move(row));
        }
    }
    return scan;
}

std::vector<ProbVector> random_simplex_points(std::size_t n, std::size_t count, std::uint64_t seed,
                                              double min_entry) {
    if (n < 2) throw ParameterError("simplex points need n >= 2");
    if (!(min_entry >= 0.0 && min_entry * static_cast<double>(n) < 1.0)) {
        throw ParameterError("min_entry must lie in [0, 1/n)");
    }
    std::mt19937_64 rng(seed);
    std::exponential_distribution<double> expo(1.0);
    std::vector<ProbVector> pts;
    pts.reserve(count);
    ProbVector p(n);
    while (pts.size() < count) {
        double sum = 0.0;
        for (double& x : p) {
            x = expo(rng);
            sum += x;
        }
        bool ok = true;
        for (double& x : p) {
            x /= sum;
            ok = ok && x >= min_entry;
        }
        if (ok) pts.push_back(p);
    }
    return pts;
}

bool PropernessScan::passed() const noexcept {
    return std::all_of(rows.begin(), rows.end(), [](const auto& r) { return r.passed; });
}

namespace {

// Interior points of the simplex grid with spacing 1/k, n = 2 or 3.
std::vector<ProbVector> simplex_grid(std::size_t n, double step) {
    const auto k = static_cast<long long>(std::llround(1.0 / step));
    if (k < static_cast<long long>(n) || std::abs(static_cast<double>(k) * step - 1.0) > 1e-9) {
        throw ParameterError("simplex grid step must be 1/k for an integer k >= n");
    }
    const double kd = static_cast<double>(k);
    std::vector<ProbVector> pts;
    if (n == 2) {
        for (long long i = 1; i < k; ++i) pts.push_back({static_cast<double>(k - i) / kd, static_cast<double>(i) / kd});
    } else if (n == 3) {
        for (long long i = 1; i < k; ++i) {
            for (long long j = 1; i + j < k; ++j) {
                pts.push_back({static_cast<double>(i) / kd, static_cast<double>(j) / kd,
                               static_cast<double>(k - i - j) / kd});
            }
        }
    } else {
        throw ParameterError("simplex grids are supported for n = 2 and n = 3");
    }
    return pts;
}

}  // namespace

PropernessScan properness_scan(const std::vector<ProbVector>& truths, double gamma, double step) {
    if (!(std::isfinite(gamma) && gamma >= 0.0)) throw ParameterError("properness scan needs gamma >= 0");
    for (const auto& p : truths) {
        if (p.size() != 2 && p.size() != 3) throw ParameterError("properness scan supports n = 2 and n = 3");
    }
    PropernessScan scan;
    scan.gamma = gamma;
    scan.step = step;

    for (std::size_t n : {std::size_t{2}, std::size_t{3}}) {
        bool needed = false;
        for (const auto& p : truths) needed = needed || p.size() == n;
        if (!needed) continue;

        const auto grid = simplex_grid(n, step);
        // Per grid point, the loss of each class under the properized loss.
        std::vector<double> loss(grid.size() * n);
        for (std::size_t i = 0; i < grid.size(); ++i) {
            const ProbVector u = focal_calib_inverse_multiclass(grid[i], gamma);
            for (std::size_t c = 0; c < n; ++c) loss[i * n + c] = focal_loss(u, c, gamma);
        }

        for (const auto& p : truths) {
            if (p.size() != n) continue;
            for (double x : p) {
                if (!(x > 0.0 && x < 1.0)) throw DomainError("ground truth must lie in the simplex interior");
            }
            std::size_t arg = 0;
            double best = std::numeric_limits<double>::infinity();
            for (std::size_t i = 0; i < grid.size(); ++i) {
                double risk = 0.0;
                for (std::size_t c = 0; c < n; ++c) risk += p[c] * loss[i * n + c];
                if (risk < best) {
                    best = risk;
                    arg = i;
                }
            }
            PropernessRow row;
            row.truth = p;
            row.minimizer = grid[arg];
            for (std::size_t c = 0; c < n; ++c) row.linf = std::max(row.linf, std::abs(grid[arg][c] - p[c]));
            row.passed = row.linf <= 2.0 * step + 1e-12;
            scan.rows.push_back(std::move(row));
        }
    }
    return scan;
}

double focal_risk_minimizer(double p_true, double gamma) {
    if (!(p_true > 0.0 && p_true < 1.0)) throw DomainError("p_true must lie in (0, 1)");
    if (!(std::isfinite(gamma) && gamma >= 0.0)) throw ParameterError("focal risk needs gamma >= 0");
    auto slope = [&](double q) {
        return p_true * focal_loss_grad(q, gamma) - (1.0 - p_true) * focal_loss_grad(1.0 - q, gamma);
    };
    const auto [a, b] = boost::math::tools::bisect(slope, kProbEpsilon, 1.0 - kProbEpsilon,
                                                   [](double x, double y) { return y - x <= 1e-13; });
    return 0.5 * (a + b);
}

LandscapeTable loss_landscape_table(const ProbVector& truth, double gamma, double step,
                                    std::vector<double> percentiles) {
    const std::size_t n = truth.size();
    if (n != 2 && n != 3) throw ParameterError("loss landscape supports n = 2 and n = 3");
    if (!(std::isfinite(gamma) && gamma >= 0.0)) throw ParameterError("loss landscape needs gamma >= 0");
    double total = 0.0;
    for (double x : truth) {
        if (!(x >= 0.0 && x <= 1.0)) throw DomainError("ground truth entries must lie in [0, 1]");
        total += x;
    }
    if (std::abs(total - 1.0) > 1e-9) throw DomainError("ground truth must sum to 1");
    for (double pc : percentiles) {
        if (!(pc >= 0.0 && pc <= 100.0)) throw ParameterError("percentiles must lie in [0, 100]");
    }

    LandscapeTable table;
    table.truth = truth;
    table.gamma = gamma;
    table.step = step;
    table.percentiles = std::move(percentiles);

    for (const auto& q : simplex_grid(n, step)) {
        const ProbVector u = gamma == 0.0 ? q : focal_calib_inverse_multiclass(q, gamma);
        LandscapeRow row;
        row.q = q;
        for (std::size_t i = 0; i < n; ++i) {
            if (truth[i] == 0.0) continue;
            double brier = 0.0;
            for (std::size_t k = 0; k < n; ++k) {
                const double d = q[k] - (k == i ? 1.0 : 0.0);
                brier += d * d;
            }
            row.risk[0] += truth[i] * brier;
            row.risk[1] += truth[i] * cross_entropy(q, i);
            row.risk[2] += truth[i] * focal_loss(q, i, gamma);
            row.risk[3] += truth[i] * focal_loss(u, i, gamma);
        }
        table.rows.push_back(std::move(row));
    }

    for (std::size_t l = 0; l < kLandscapeLosses.size(); ++l) {
        std::vector<double> v;
        v.reserve(table.rows.size());
        for (const auto& r : table.rows) v.push_back(r.risk[l]);
        std::sort(v.begin(), v.end());
        for (double pc : table.percentiles) {
            // nearest-rank percentile
            auto rank = static_cast<std::size_t>(std::ceil(pc / 100.0 * static_cast<double>(v.size())));
            rank = std::clamp<std::size_t>(rank, 1, v.size());
            table.levels[l].push_back(v[rank - 1]);
        }
    }
    return table;
}

}  // namespace focalcal
