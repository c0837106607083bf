#include "focalcal/core.hpp"

#include "focalcal/error.hpp"

#include <boost/math/tools/minima.hpp>
#include <boost/math/tools/roots.hpp>
#include <boost/math/tools/toms748_solve.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <sstream>
#include <string>

namespace focalcal {

namespace {

// Beyond this |gamma| the factor (1-q)^-gamma can overflow on clamped inputs,
// so the multiclass map falls back to log-space weights.
constexpr double kDirectGammaLimit = 25.0;

constexpr int kRootBits = 48;
constexpr std::uintmax_t kMaxRootIterations = 200;

void require_map_gamma(double gamma) {
    if (!std::isfinite(gamma) || gamma <= -1.0) {
        throw ParameterError("calibration-map gamma must be finite and > -1, got " + std::to_string(gamma));
    }
}

void require_loss_gamma(double gamma) {
    if (!std::isfinite(gamma) || gamma < 0.0) {
        throw ParameterError("focal loss requires gamma >= 0, got " + std::to_string(gamma));
    }
}

void require_finite(std::span<const double> v) {
    for (double x : v) {
        if (!std::isfinite(x)) throw DomainError("non-finite logit");
    }
}

// e^s log(1 + e^-s), evaluated without overflow for any finite s.
double exp_log1p_exp_neg(double s) {
    if (s > 0.0) {
        const double x = std::exp(-s);
        return x == 0.0 ? 1.0 : std::log1p(x) / x;
    }
    return std::exp(s) * (-s + std::log1p(std::exp(s)));
}

// Solves log w(u) = log_y for u in [eps, 1 - eps]; saturates at the ends.
// Upper end of the interval on which the focal weight increases. For
// gamma < 0 the weight peaks inside (0, 1) and falls towards 1.
double weight_branch_end(double gamma) {
    if (gamma >= 0.0) return 1.0 - kProbEpsilon;
    auto neg = [gamma](double u) { return -detail::log_focal_weight(u, gamma); };
    std::uintmax_t iters = kMaxRootIterations;
    return boost::math::tools::brent_find_minima(neg, kProbEpsilon, 1.0 - kProbEpsilon, 40, iters).first;
}

double inverse_weight(double log_y, double gamma, double hi) {
    constexpr double lo = kProbEpsilon;
    auto f = [&](double u) { return detail::log_focal_weight(u, gamma) - log_y; };
    const double flo = f(lo);
    if (flo >= 0.0) return lo;
    const double fhi = f(hi);
    if (fhi <= 0.0) return hi;

    std::uintmax_t iters = kMaxRootIterations;
    const auto [a, b] = boost::math::tools::toms748_solve(f, lo, hi, flo, fhi,
                                                          boost::math::tools::eps_tolerance<double>(kRootBits), iters);
    if (iters >= kMaxRootIterations) throw NumericError("inverse focal weight did not converge");
    return 0.5 * (a + b);
}

}  // namespace

Temperature::Temperature(double t) : t_(t) {
    if (!std::isfinite(t) || t <= 0.0) {
        throw ParameterError("temperature must be finite and > 0, got " + std::to_string(t));
    }
}

std::string_view to_string(CalibratorFamily f) noexcept {
    switch (f) {
    case CalibratorFamily::temperature: return "temperature";
    case CalibratorFamily::focal: return "focal";
    case CalibratorFamily::focal_temperature: return "focal-temperature";
    }
    return "unknown";
}

CalibratorFamily family_from_string(std::string_view s) {
    if (s == "temperature") return CalibratorFamily::temperature;
    if (s == "focal") return CalibratorFamily::focal;
    if (s == "focal-temperature") return CalibratorFamily::focal_temperature;
    throw ParameterError("unknown calibrator family '" + std::string(s) + "'");
}

void CalibratorParams::validate() const {
    Temperature{temperature};
    require_map_gamma(gamma_ev);
    if (family == CalibratorFamily::temperature && gamma_ev != 0.0) {
        throw ParameterError("temperature family requires gamma_ev = 0");
    }
    if (family == CalibratorFamily::focal && temperature != 1.0) {
        throw ParameterError("focal family requires temperature = 1");
    }
}

double clamp_prob(double p) {
    if (!(p >= 0.0 && p <= 1.0)) {
        throw DomainError("probability outside [0, 1]: " + std::to_string(p));
    }
    return std::clamp(p, kProbEpsilon, 1.0 - kProbEpsilon);
}

double sigmoid(double s) noexcept {
    if (s >= 0.0) return 1.0 / (1.0 + std::exp(-s));
    const double e = std::exp(s);
    return e / (1.0 + e);
}

std::size_t argmax(std::span<const double> v) noexcept {
    std::size_t best = 0;
    for (std::size_t k = 1; k < v.size(); ++k) {
        if (v[k] > v[best]) best = k;
    }
    return best;
}

ProbVector softmax(std::span<const double> logits) {
    return temperature_scale(logits, Temperature{1.0});
}

ProbVector temperature_scale(std::span<const double> logits, Temperature t) {
    ProbVector out(logits.size());
    temperature_scale_into(logits, t, out);
    return out;
}

void temperature_scale_into(std::span<const double> logits, Temperature t, std::span<double> out) {
    if (logits.empty()) throw DomainError("empty logit vector");
    if (out.size() != logits.size()) throw DomainError("output size mismatch");
    require_finite(logits);

    const double temp = t.value();
    double top = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < logits.size(); ++k) {
        out[k] = logits[k] / temp;
        top = std::max(top, out[k]);
    }
    double sum = 0.0;
    for (double& x : out) {
        x = std::exp(x - top);
        sum += x;
    }
    for (double& x : out) x = std::clamp(x / sum, kProbEpsilon, 1.0 - kProbEpsilon);
}

double focal_calib_binary_logit_space(double s, double gamma) {
    require_map_gamma(gamma);
    const double num = gamma * exp_log1p_exp_neg(s) + 1.0;
    const double den = 1.0 + gamma * exp_log1p_exp_neg(-s);
    return (gamma + 1.0) * s - std::log(num / den);
}

double focal_calib_binary_logit(double s, double gamma) {
    if (!std::isfinite(s)) throw DomainError("non-finite logit");
    return sigmoid(focal_calib_binary_logit_space(s, gamma));
}

double focal_calib_binary(double q, double gamma) {
    const double qc = clamp_prob(q);
    require_map_gamma(gamma);
    if (gamma == 0.0) return qc;

    const double s = std::log(qc) - std::log1p(-qc);
    if (std::abs(s) > kLogitRegimeSwitch) return focal_calib_binary_logit(s, gamma);

    const double ratio = (1.0 - qc) / qc;
    const double num = (1.0 - qc) - gamma * qc * std::log(qc);
    const double den = qc - gamma * (1.0 - qc) * std::log1p(-qc);
    return 1.0 / (1.0 + std::pow(ratio, gamma) * num / den);
}

namespace detail {

void focal_terms(std::span<const double> q, std::span<double> log1m, std::span<double> shape) {
    for (std::size_t k = 0; k < q.size(); ++k) {
        log1m[k] = std::log(1.0 - q[k]);
        shape[k] = q[k] * std::log(q[k]) / (1.0 - q[k]);
    }
}

void focal_combine(std::span<const double> q, std::span<const double> log1m, std::span<const double> shape,
                   double gamma, std::span<double> out) {
    const std::size_t n = q.size();
    if (gamma == 0.0) {
        if (q.data() != out.data()) std::copy(q.begin(), q.end(), out.begin());
        return;
    }
    double sum = 0.0;
    if (std::abs(gamma) <= kDirectGammaLimit) {
        for (std::size_t k = 0; k < n; ++k) {
            const double w = q[k] * std::exp(-gamma * log1m[k]) / (1.0 - gamma * shape[k]);
            out[k] = w;
            sum += w;
        }
    } else {
        double top = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < n; ++k) {
            out[k] = std::log(q[k]) - gamma * log1m[k] - std::log(1.0 - gamma * shape[k]);
            top = std::max(top, out[k]);
        }
        for (std::size_t k = 0; k < n; ++k) {
            out[k] = std::exp(out[k] - top);
            sum += out[k];
        }
    }
    const double inv = 1.0 / sum;
    for (std::size_t k = 0; k < n; ++k) out[k] *= inv;
}

double log_focal_weight(double u, double gamma) {
    const double log1m = std::log(1.0 - u);
    const double shape = u * std::log(u) / (1.0 - u);
    return std::log(u) - gamma * log1m - std::log(1.0 - gamma * shape);
}

}  // namespace detail

void focal_calib_multiclass_into(std::span<const double> q, double gamma, std::span<double> out) {
    if (q.size() < 2) throw DomainError("multiclass map needs at least two classes");
    if (out.size() != q.size()) throw DomainError("output size mismatch");
    require_map_gamma(gamma);

    // `out` may alias `q`; each entry is read before it is written.
    for (std::size_t k = 0; k < q.size(); ++k) out[k] = clamp_prob(q[k]);
    if (gamma == 0.0) return;

    std::vector<double> log1m(q.size());
    std::vector<double> shape(q.size());
    detail::focal_terms(out, log1m, shape);
    detail::focal_combine(out, log1m, shape, gamma, out);
}

ProbVector focal_calib_multiclass(std::span<const double> q, double gamma) {
    ProbVector out(q.size());
    focal_calib_multiclass_into(q, gamma, out);
    return out;
}

double focal_calib_inverse_binary(double p, double gamma) {
    const double pc = clamp_prob(p);
    require_map_gamma(gamma);
    if (gamma == 0.0) return pc;

    constexpr double lo = kProbEpsilon;
    constexpr double hi = 1.0 - kProbEpsilon;
    auto f = [&](double q) { return focal_calib_binary(q, gamma) - pc; };
    const double flo = f(lo);
    const double fhi = f(hi);
    if (flo > 0.0 || fhi < 0.0) {
        std::ostringstream msg;
        msg << "cannot bracket inverse of binary focal map: p=" << pc << " gamma=" << gamma << " map range ["
            << flo + pc << ", " << fhi + pc << "]";
        throw NumericError(msg.str());
    }
    if (flo == 0.0) return lo;
    if (fhi == 0.0) return hi;

    const auto [a, b] = boost::math::tools::bisect(f, lo, hi, [](double x, double y) { return y - x <= 1e-12; });
    return 0.5 * (a + b);
}

ProbVector focal_calib_inverse_multiclass(std::span<const double> p, double gamma) {
    const std::size_t n = p.size();
    if (n < 2) throw DomainError("multiclass inverse needs at least two classes");
    require_map_gamma(gamma);

    ProbVector pc(n);
    for (std::size_t k = 0; k < n; ++k) pc[k] = clamp_prob(p[k]);
    if (gamma == 0.0) return pc;
    if (n == 2) {
        const double q = focal_calib_inverse_binary(pc[0] / (pc[0] + pc[1]), gamma);
        return {q, 1.0 - q};
    }

    std::vector<double> log_p(n);
    std::transform(pc.begin(), pc.end(), log_p.begin(), [](double x) { return std::log(x); });
    const auto [min_it, max_it] = std::minmax_element(log_p.begin(), log_p.end());
    if (*min_it == *max_it) return ProbVector(n, 1.0 / static_cast<double>(n));

    // u_j = w^-1(c p_j). With c = w(1/n) / max p every u_j <= 1/n, with
    // c = w(1/n) / min p every u_j >= 1/n, so the root of sum(u) = 1 lies between.
    const double branch_end = weight_branch_end(gamma);
    const double log_w_ref = detail::log_focal_weight(1.0 / static_cast<double>(n), gamma);
    const double lc_lo = log_w_ref - *max_it;
    const double lc_hi = log_w_ref - *min_it;

    auto excess = [&](double lc) {
        double sum = 0.0;
        for (double lp : log_p) sum += inverse_weight(lc + lp, gamma, branch_end);
        return sum - 1.0;
    };
    const double flo = excess(lc_lo);
    const double fhi = excess(lc_hi);
    if (flo > 0.0 || fhi < 0.0) {
        throw NumericError("normalisation constant of the inverse focal map is not bracketed (gamma=" +
                           std::to_string(gamma) + ")");
    }

    double lc = lc_lo;
    if (fhi == 0.0) {
        lc = lc_hi;
    } else if (flo != 0.0) {
        std::uintmax_t iters = kMaxRootIterations;
        const auto [a, b] = boost::math::tools::toms748_solve(
            excess, lc_lo, lc_hi, flo, fhi, boost::math::tools::eps_tolerance<double>(kRootBits), iters);
        if (iters >= kMaxRootIterations) throw NumericError("inverse focal map did not converge");
        lc = 0.5 * (a + b);
    }

    ProbVector u(n);
    double sum = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        u[k] = inverse_weight(lc + log_p[k], gamma, branch_end);
        sum += u[k];
    }
    for (double& x : u) x /= sum;

    if (gamma < 0.0) {
        // a coordinate pinned at the peak has no preimage on the increasing branch
        const ProbVector back = focal_calib_multiclass(u, gamma);
        for (std::size_t k = 0; k < n; ++k) {
            if (std::abs(back[k] - pc[k]) > 1e-8) {
                throw NumericError("no preimage of the focal map with gamma=" + std::to_string(gamma) +
                                   " whose coordinates all lie below the weight peak " + std::to_string(branch_end));
            }
        }
    }
    return u;
}

double cross_entropy(std::span<const double> q, std::size_t label) {
    if (label >= q.size()) throw DomainError("label " + std::to_string(label) + " out of range");
    return -std::log(clamp_prob(q[label]));
}

double focal_loss(std::span<const double> q, std::size_t label, double gamma) {
    require_loss_gamma(gamma);
    if (label >= q.size()) throw DomainError("label " + std::to_string(label) + " out of range");
    const double qc = clamp_prob(q[label]);
    return -std::pow(1.0 - qc, gamma) * std::log(qc);
}

double focal_loss_grad(double q, double gamma) {
    require_loss_gamma(gamma);
    const double qc = clamp_prob(q);
    const double r = 1.0 - qc;
    return gamma * std::pow(r, gamma - 1.0) * std::log(qc) - std::pow(r, gamma) / qc;
}

double focal_loss_second_deriv(double q, double gamma) {
    require_loss_gamma(gamma);
    const double qc = clamp_prob(q);
    const double r = 1.0 - qc;
    return gamma * std::pow(r, gamma - 1.0) / qc - gamma * (gamma - 1.0) * std::pow(r, gamma - 2.0) * std::log(qc) +
           (gamma * std::pow(r, gamma - 1.0) * qc + std::pow(r, gamma)) / (qc * qc);
}

double properized_focal_loss(std::span<const double> q, std::size_t label, double gamma) {
    require_loss_gamma(gamma);
    if (label >= q.size()) throw DomainError("label " + std::to_string(label) + " out of range");
    if (gamma == 0.0) return cross_entropy(q, label);
    const ProbVector u = focal_calib_inverse_multiclass(q, gamma);
    return focal_loss(u, label, gamma);
}

void focal_temperature_transform_into(std::span<const double> logits, const CalibratorParams& params,
                                      std::span<double> out) {
    temperature_scale_into(logits, Temperature{params.temperature}, out);
    focal_calib_multiclass_into(out, params.gamma_ev, out);
}

ProbVector focal_temperature_transform(std::span<const double> logits, const CalibratorParams& params) {
    ProbVector out(logits.size());
    focal_temperature_transform_into(logits, params, out);
    return out;
}

void check_calibration_gamma(double gamma) {
    require_map_gamma(gamma);
    if (gamma >= 0.0) return;
    constexpr int kPoints = 10000;
    double prev = -1.0;
    for (int i = 0; i < kPoints; ++i) {
        const double q = (i + 0.5) / kPoints;
        const double v = focal_calib_binary(q, gamma);
        if (!(v > prev) || !std::isfinite(v)) {
            std::ostringstream msg;
            msg << "focal calibration map with gamma=" << gamma << " is not strictly increasing near q=" << q;
            throw ParameterError(msg.str());
        }
        prev = v;
    }
}

}  // namespace focalcal
