#pragma once

#include "focalcal/core.hpp"

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace focalcal {

/// Points k * step with lo < k * step < hi (open interval, 0 hit exactly).
struct LogitGrid {
    double lo = -20.0;
    double hi = 20.0;
    double step = 0.01;

    void validate() const;
    std::vector<double> points() const;
};

/// Coarse-to-fine search over T. Stage 0 scans multiples of steps[0] in
/// [t_min, t_max]; every later stage scans multiples of steps[i] within
/// ±steps[i-1] of the incumbent.
struct TemperatureSearch {
    double t_min = 0.01;
    double t_max = 5.0;
    std::vector<double> steps = {0.1, 0.01, 0.001, 0.0001};

    void validate() const;
};

struct MatchResult {
    double gamma = 0.0;
    std::size_t dim = 2;
    double best_temperature = 1.0;
    double best_inverse_temperature = 1.0;
    double max_abs_error = 0.0;
    std::size_t evaluations = 0;
    std::size_t points = 0;
    LogitGrid grid;
    bool coarsened = false;  // grid step enlarged to respect max_points
};

MatchResult minimax_match_binary(double gamma, const LogitGrid& grid, const TemperatureSearch& search = {});

/// Enumerates logit vectors of length dim with the last entry fixed at 0 and
/// the others on `grid`; compares the focal map of their softmax against
/// temperature scaling in the L∞ norm.
class SimplexMatcher {
public:
    SimplexMatcher(std::size_t dim, LogitGrid grid, std::size_t max_points);

    MatchResult match(double gamma, const TemperatureSearch& search = {}) const;

    std::size_t size() const noexcept { return count_; }
    const LogitGrid& grid() const noexcept { return grid_; }
    bool coarsened() const noexcept { return coarsened_; }

private:
    std::size_t dim_;
    LogitGrid grid_;
    bool coarsened_ = false;
    std::size_t count_ = 0;
    std::vector<double> logits_;  // count_ x dim_
    std::vector<double> probs_;   // softmax of logits_
};

inline constexpr std::size_t kDefaultMaxSimplexPoints = 4'000'000;

MatchResult minimax_match_simplex(std::size_t dim, double gamma, const LogitGrid& grid,
                                  const TemperatureSearch& search = {},
                                  std::size_t max_points = kDefaultMaxSimplexPoints);

struct LinearFit {
    std::size_t dim = 2;
    double slope = 0.0;
    double intercept = 0.0;
    double rmse = 0.0;
    double max_abs_residual = 0.0;
    std::string method = "least-squares";
    std::vector<MatchResult> matches;
};

/// Least-squares line through (gamma, 1/T_best). Needs at least 10 gammas.
LinearFit linear_fit_gamma_invT(std::size_t dim, const std::vector<double>& gammas, const LogitGrid& grid,
                                const TemperatureSearch& search = {},
                                std::size_t max_points = kDefaultMaxSimplexPoints);

struct BoundResult {
    double gamma = 0.0;
    double theoretical_lower_T = 0.0;
    double theoretical_upper_T = 0.0;
    double experimental_lower_T = 0.0;
    double experimental_upper_T = 0.0;
    LogitGrid grid;
    double t_step = 0.001;
    std::size_t points = 0;
    std::size_t violations = 0;
    std::string witness;

    bool passed() const noexcept { return violations == 0; }
};

/// Checks logit(FC(s)) lies strictly between s / T_upper and s / T_lower for
/// s > 0 (reversed for s < 0, equal at 0) with the closed-form pair
/// T_lower = 1/(gamma+1), T_upper = 1/(gamma+1-log(gamma+1)/2), then finds the
/// tightest pair on the t_step grid that still sandwiches the map.
BoundResult bound_check(double gamma, const LogitGrid& grid, double t_step = 0.001);

struct ConfidenceScanRow {
    std::size_t dim = 0;
    double gamma = 0.0;
    std::size_t samples = 0;
    std::size_t violations = 0;
    double min_margin = 0.0;  // min over samples of max(p̂) - max(q)
    ProbVector witness;
};

struct ConfidenceScan {
    std::uint64_t seed = 0;
    std::vector<ConfidenceScanRow> rows;

    bool passed() const noexcept;
};

/// Slack allowed for rounding when comparing max(p̂) with max(q).
inline constexpr double kConfidenceTolerance = 4.0 * 2.220446049250313e-16;

ConfidenceScan confidence_raising_scan(const std::vector<std::size_t>& dims, const std::vector<double>& gammas,
                                       std::size_t samples, std::uint64_t seed);

struct PropernessRow {
    ProbVector truth;
    ProbVector minimizer;
    double linf = 0.0;
    bool passed = false;
};

struct PropernessScan {
    double gamma = 0.0;
    double step = 0.001;
    std::vector<PropernessRow> rows;

    bool passed() const noexcept;
};

/// `count` Dirichlet(1) draws on the n-simplex, redrawn until every entry is
/// at least `min_entry`.
std::vector<ProbVector> random_simplex_points(std::size_t n, std::size_t count, std::uint64_t seed,
                                              double min_entry = 0.0);

/// Minimises the conditional risk of the properized focal loss over the
/// interior simplex grid with spacing `step`; n = 2 or 3. A truth passes when
/// the minimiser lies within 2 * step of it in L∞.
PropernessScan properness_scan(const std::vector<ProbVector>& truths, double gamma, double step);

/// argmin over q of p FL(q) + (1-p) FL(1-q), FL(q) = -(1-q)^gamma log q.
double focal_risk_minimizer(double p_true, double gamma);

inline constexpr std::array<const char*, 4> kLandscapeLosses = {"brier", "cross_entropy", "focal", "properized_focal"};

struct LandscapeRow {
    ProbVector q;
    std::array<double, 4> risk{};  // ordered as kLandscapeLosses
};

struct LandscapeTable {
    ProbVector truth;
    double gamma = 0.0;
    double step = 0.01;
    std::vector<double> percentiles = {3.0, 12.0, 20.0};
    std::vector<LandscapeRow> rows;
    std::array<std::vector<double>, 4> levels;  // risk value at each percentile, per loss
};

/// Conditional risk Σ p_i L(q, i) over the interior grid of the simplex
/// (n = 2: q_1 in (0,1); n = 3: the triangle) for the Brier score, cross
/// entropy, focal loss and properized focal loss.
LandscapeTable loss_landscape_table(const ProbVector& truth, double gamma, double step,
                                    std::vector<double> percentiles = {3.0, 12.0, 20.0});

}  // namespace focalcal
