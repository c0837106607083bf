#pragma once

// Calibration maps and losses: softmax, temperature scaling, the binary and
// multiclass focal calibration maps with their inverses, focal and
// cross-entropy losses, their derivatives and the properized focal loss.
//
// All functions are pure. Probabilities are clamped to [kProbEpsilon,
// 1 - kProbEpsilon] before any logarithm or division.

#include "focalcal/params.hpp"

#include <cstddef>
#include <span>
#include <vector>

namespace focalcal {

inline constexpr double kProbEpsilon = 1e-12;

/// Above this |logit| the binary map switches to its logit-space form.
inline constexpr double kLogitRegimeSwitch = 30.0;

using ProbVector = std::vector<double>;
using LogitVector = std::vector<double>;

/// Clamp a probability into [eps, 1 - eps]. Throws DomainError if `p` is NaN
/// or outside [0, 1].
double clamp_prob(double p);

double sigmoid(double s) noexcept;

/// Numerically stable softmax. Output entries are clamped to [eps, 1 - eps].
/// Throws DomainError on non-finite input.
ProbVector softmax(std::span<const double> logits);

ProbVector temperature_scale(std::span<const double> logits, Temperature t);

/// Allocation-free temperature scaling; `out.size()` must equal `logits.size()`.
void temperature_scale_into(std::span<const double> logits, Temperature t, std::span<double> out);

/// Binary focal calibration map applied to the positive-class probability.
double focal_calib_binary(double q, double gamma);

/// The same map written as a function of the logit s, FC(s) = p̂(sigmoid(s)).
/// Stable for |s| up to ~700.
double focal_calib_binary_logit(double s, double gamma);

/// logit(FC(s)) = (gamma + 1) s - log f(s), computed without passing through
/// probability space. Used by the bound and matching analyses.
double focal_calib_binary_logit_space(double s, double gamma);

ProbVector focal_calib_multiclass(std::span<const double> q, double gamma);
void focal_calib_multiclass_into(std::span<const double> q, double gamma, std::span<double> out);

/// Inverse of the binary map by bisection on (eps, 1 - eps).
/// Throws NumericError if `p` cannot be bracketed.
double focal_calib_inverse_binary(double p, double gamma);

/// Inverse of the multiclass map. Reduces to a 1-D search for the
/// normalisation constant with a nested 1-D inversion per coordinate.
/// n = 2 goes through the binary inverse. For gamma < 0 and n >= 3 the map is
/// not injective (the per-coordinate weight peaks inside (0, 1)); the inverse
/// returned is the one with every coordinate below the peak, and NumericError
/// is thrown when none exists.
ProbVector focal_calib_inverse_multiclass(std::span<const double> p, double gamma);

double cross_entropy(std::span<const double> q, std::size_t label);

/// Focal loss -(1 - q_label)^gamma log q_label. Requires gamma >= 0.
double focal_loss(std::span<const double> q, std::size_t label, double gamma);

/// d/dq of -(1 - q)^gamma log q.
double focal_loss_grad(double q, double gamma);

/// d²/dq² of -(1 - q)^gamma log q.
double focal_loss_second_deriv(double q, double gamma);

/// Focal loss pre-composed with the inverse multiclass map; a proper loss.
double properized_focal_loss(std::span<const double> q, std::size_t label, double gamma);

/// Temperature-scaled softmax followed by the multiclass focal map.
ProbVector focal_temperature_transform(std::span<const double> logits, const CalibratorParams& params);
void focal_temperature_transform_into(std::span<const double> logits, const CalibratorParams& params,
                                      std::span<double> out);

/// Index of the largest entry; ties go to the lowest index.
std::size_t argmax(std::span<const double> v) noexcept;

/// Throws ParameterError if the calibration map with this gamma is not a
/// strictly increasing bijection (checked numerically on a dense grid).
/// Only negative gammas need the check; non-negative ones return at once.
void check_calibration_gamma(double gamma);

namespace detail {

// The multiclass map factors into gamma-independent per-entry terms
// (log(1 - q), q log q / (1 - q)) and a cheap gamma-dependent combination.
// Grid searches reuse the terms across gammas; focal_calib_multiclass_into
// goes through exactly the same two steps, so results are bit-identical.
void focal_terms(std::span<const double> q, std::span<double> log1m, std::span<double> shape);
void focal_combine(std::span<const double> q, std::span<const double> log1m, std::span<const double> shape,
                   double gamma, std::span<double> out);

/// log of the unnormalised multiclass weight w(u) = u (1-u)^-gamma / (1 - gamma u log u / (1-u)).
double log_focal_weight(double u, double gamma);

}  // namespace detail

}  // namespace focalcal
