#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace oracle {

long double sigmoid(long double s) { return 1.0L / (1.0L + std::exp(-s)); }

long double binary_map(long double q, long double gamma) {
    const long double ratio = std::pow((1.0L - q) / q, gamma);
    const long double num = (1.0L - q) - gamma * q * std::log(q);
    const long double den = q - gamma * (1.0L - q) * std::log(1.0L - q);
    return 1.0L / (1.0L + ratio * num / den);
}

std::vector<long double> multiclass_map(const std::vector<double>& q, long double gamma) {
    std::vector<long double> w(q.size());
    long double total = 0.0L;
    for (std::size_t k = 0; k < q.size(); ++k) {
        const long double qk = q[k];
        w[k] = 1.0L / (std::pow(1.0L - qk, gamma) * (gamma * std::log(qk) / (1.0L - qk) - 1.0L / qk));
        total += w[k];
    }
    for (auto& x : w) x /= total;
    return w;
}

std::vector<long double> softmax(const std::vector<double>& z, long double temperature) {
    const long double top = *std::max_element(z.begin(), z.end());
    std::vector<long double> e(z.size());
    long double total = 0.0L;
    for (std::size_t k = 0; k < z.size(); ++k) {
        e[k] = std::exp((z[k] - top) / temperature);
        total += e[k];
    }
    for (auto& x : e) x /= total;
    return e;
}

long double focal(long double q, long double gamma) { return -std::pow(1.0L - q, gamma) * std::log(q); }

double central_diff(const std::function<double(double)>& f, double x, double h) {
    return (f(x + h) - f(x - h)) / (2.0 * h);
}

double second_diff(const std::function<double(double)>& f, double x, double h) {
    return (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h);
}

double golden_section(const std::function<double(double)>& f, double a, double b, double tol) {
    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = b - inv_phi * (b - a);
    double d = a + inv_phi * (b - a);
    double fc = f(c), fd = f(d);
    while (b - a > tol) {
        if (fc < fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    return 0.5 * (a + b);
}

double bisect_inverse(const std::function<long double(long double)>& f, long double target, long double lo,
                      long double hi, int iterations) {
    for (int i = 0; i < iterations; ++i) {
        const long double mid = 0.5L * (lo + hi);
        if (f(mid) < target) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    return static_cast<double>(0.5L * (lo + hi));
}

namespace {

std::vector<double> open_grid(double lo, double hi, double step) {
    std::vector<double> s;
    const auto k0 = static_cast<long>(std::floor(lo / step)) + 1;
    const auto k1 = static_cast<long>(std::ceil(hi / step)) - 1;
    for (long k = k0; k <= k1; ++k) s.push_back(static_cast<double>(k) * step);
    return s;
}

}  // namespace

// gamma s - log A + log B with the two factors of the closed form written in
// terms of s so nothing rounds to 1.
long double binary_map_logit(long double s, long double gamma) {
    const long double q = sigmoid(s), qm = sigmoid(-s);
    const long double lq = -std::log1p(std::exp(-s)), lqm = -std::log1p(std::exp(s));
    const long double a = qm - gamma * q * lq;
    const long double b = q - gamma * qm * lqm;
    return gamma * s - std::log(a) + std::log(b);
}

Bounds brute_force_bounds(double gamma, double lo, double hi, double step, double t_step) {
    const auto s = open_grid(lo, hi, step);
    std::vector<long double> l(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) l[i] = binary_map_logit(s[i], gamma);

    // T sandwiches from above (steeper) when s/T >= logit FC(s) for s > 0.
    auto steeper = [&](long double t) {
        for (std::size_t i = 0; i < s.size(); ++i) {
            const long double ts = s[i] / t;
            if (s[i] > 0 && ts < l[i]) return false;
            if (s[i] < 0 && ts > l[i]) return false;
        }
        return true;
    };
    auto softer = [&](long double t) {
        for (std::size_t i = 0; i < s.size(); ++i) {
            const long double ts = s[i] / t;
            if (s[i] > 0 && ts > l[i]) return false;
            if (s[i] < 0 && ts < l[i]) return false;
        }
        return true;
    };
    Bounds b;
    const long kmax = std::lround(2.0 / t_step);
    for (long k = 1; k <= kmax; ++k) {
        const double t = std::round(static_cast<double>(k) * t_step * 1e12) / 1e12;
        if (steeper(t)) b.lower = t;
    }
    for (long k = kmax; k >= 1; --k) {
        const double t = std::round(static_cast<double>(k) * t_step * 1e12) / 1e12;
        if (softer(t)) b.upper = t;
    }
    return b;
}

double binary_gap(double gamma, double temperature, double lo, double hi, double step) {
    double worst = 0.0;
    for (double s : open_grid(lo, hi, step)) {
        const long double fc = binary_map(sigmoid(s), gamma);
        worst = std::max(worst, static_cast<double>(std::fabs(fc - sigmoid(s / temperature))));
    }
    return worst;
}

double naive_ece(const std::vector<double>& confidence, const std::vector<int>& correct, std::size_t bins) {
    const std::size_t n = confidence.size();
    std::vector<std::pair<double, int>> v;
    for (std::size_t i = 0; i < n; ++i) v.emplace_back(confidence[i], correct[i]);
    std::stable_sort(v.begin(), v.end());
    double ece = 0.0;
    for (std::size_t b = 0; b < bins; ++b) {
        const std::size_t lo = b * n / bins, hi = (b + 1) * n / bins;
        if (lo == hi) continue;
        double c = 0.0, a = 0.0;
        for (std::size_t i = lo; i < hi; ++i) {
            c += v[i].first;
            a += v[i].second;
        }
        const double m = static_cast<double>(hi - lo);
        ece += m / static_cast<double>(n) * std::fabs(a / m - c / m);
    }
    return ece;
}

focalcal::LabeledLogits synthetic(std::size_t rows, std::size_t n, double gamma, double temperature, double sigma,
                                  std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, sigma);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::vector<double> logits(rows * n);
    std::vector<std::size_t> labels(rows);
    std::vector<double> z(n), q(n);
    for (std::size_t i = 0; i < rows; ++i) {
        for (auto& x : z) x = normal(rng);
        const auto sm = softmax(z, temperature);
        for (std::size_t k = 0; k < n; ++k) q[k] = std::clamp(static_cast<double>(sm[k]), 1e-15, 1.0 - 1e-15);
        const auto p = gamma == 0.0 ? sm : multiclass_map(q, gamma);
        const double u = unif(rng);
        long double acc = 0.0L;
        std::size_t y = n - 1;
        for (std::size_t k = 0; k < n; ++k) {
            acc += p[k];
            if (u < acc) {
                y = k;
                break;
            }
        }
        std::copy(z.begin(), z.end(), logits.begin() + static_cast<std::ptrdiff_t>(i * n));
        labels[i] = y;
    }
    return focalcal::LabeledLogits(n, std::move(logits), std::move(labels));
}

focalcal::LabeledLogits slice(const focalcal::LabeledLogits& d, std::size_t begin, std::size_t end) {
    const std::size_t n = d.n_classes();
    std::vector<double> logits(d.logits().begin() + static_cast<std::ptrdiff_t>(begin * n),
                               d.logits().begin() + static_cast<std::ptrdiff_t>(end * n));
    std::vector<std::size_t> labels(d.labels().begin() + static_cast<std::ptrdiff_t>(begin),
                                    d.labels().begin() + static_cast<std::ptrdiff_t>(end));
    return focalcal::LabeledLogits(n, std::move(logits), std::move(labels));
}

}  // namespace oracle
