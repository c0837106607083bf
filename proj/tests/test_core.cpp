#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "focalcal/core.hpp"
#include "focalcal/error.hpp"
#include "support/oracles.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <vector>

using namespace focalcal;

namespace {

std::vector<double> random_simplex(std::mt19937_64& rng, std::size_t n) {
    std::exponential_distribution<double> e(1.0);
    std::vector<double> q(n);
    double s = 0.0;
    for (auto& x : q) s += (x = e(rng));
    for (auto& x : q) x /= s;
    return q;
}

std::vector<double> unit_grid(double step) {
    std::vector<double> g;
    for (int k = 1; k * step < 1.0 - 1e-12; ++k) g.push_back(k * step);
    return g;
}

const double kGammas[] = {0.05, 0.25, 0.5, 1.0, 2.0, 3.0, 5.0, 7.0, 10.0};

}  // namespace

TEST_CASE("clamp_prob") {
    CHECK(clamp_prob(0.0) == kProbEpsilon);
    CHECK(clamp_prob(1.0) == 1.0 - kProbEpsilon);
    CHECK(clamp_prob(0.3) == 0.3);
    CHECK_THROWS_AS(clamp_prob(-0.1), DomainError);
    CHECK_THROWS_AS(clamp_prob(1.5), DomainError);
    CHECK_THROWS_AS(clamp_prob(std::nan("")), DomainError);
}

TEST_CASE("softmax") {
    const auto half = softmax(std::vector<double>{0.0, 0.0});
    CHECK(half[0] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(half[1] == doctest::Approx(0.5).epsilon(1e-15));

    const auto sat = softmax(std::vector<double>{100.0, 0.0});
    CHECK(sat[0] == doctest::Approx(1.0 - kProbEpsilon).epsilon(1e-15));
    CHECK(sat[1] == kProbEpsilon);

    const auto uni = softmax(std::vector<double>(10, 3.0));
    for (double p : uni) CHECK(p == doctest::Approx(0.1).epsilon(1e-14));

    CHECK_THROWS_AS(softmax(std::vector<double>{}), DomainError);
    CHECK_THROWS_AS(softmax(std::vector<double>{1.0, std::numeric_limits<double>::infinity()}), DomainError);
    CHECK_THROWS_AS(softmax(std::vector<double>{1.0, std::nan("")}), DomainError);
}

TEST_CASE("softmax and temperature scaling agree with the long-double oracle") {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> nd(0.0, 3.0);
    for (int trial = 0; trial < 500; ++trial) {
        std::vector<double> z(2 + trial % 7);
        for (auto& x : z) x = nd(rng);
        const double t = 0.2 + 0.01 * (trial % 300);
        const auto got = temperature_scale(z, Temperature{t});
        const auto want = oracle::softmax(z, t);
        double sum = 0.0;
        for (std::size_t k = 0; k < z.size(); ++k) {
            const double w = std::max(static_cast<double>(want[k]), kProbEpsilon);
            CHECK(std::abs(got[k] - w) <= 1e-15 + 1e-13 * w);
            sum += got[k];
        }
        // clamping each entry at kProbEpsilon can add up to n * kProbEpsilon
        CHECK(std::abs(sum - 1.0) <= 1e-14 + z.size() * kProbEpsilon);
        CHECK(argmax(got) == argmax(z));
    }
}

TEST_CASE("temperature scaling at T=1 is softmax bit for bit") {
    const std::vector<double> z{1.5, -0.25, 3.0, 0.0};
    CHECK(temperature_scale(z, Temperature{1.0}) == softmax(z));
    const auto sharp = temperature_scale(std::vector<double>{1.0, 0.0}, Temperature{0.5});
    CHECK(sharp[0] == doctest::Approx(1.0 / (1.0 + std::exp(-2.0))).epsilon(1e-15));
}

TEST_CASE("Temperature rejects non-positive values") {
    CHECK_THROWS_AS(Temperature{0.0}, ParameterError);
    CHECK_THROWS_AS(Temperature{-1.0}, ParameterError);
    CHECK_THROWS_AS(Temperature{std::nan("")}, ParameterError);
    CHECK_THROWS_AS(Temperature{std::numeric_limits<double>::infinity()}, ParameterError);
    CHECK(Temperature{0.7}.value() == 0.7);
}

TEST_CASE("binary map: identity, fixed point and symmetry") {
    for (double q : unit_grid(0.001)) {
        CHECK(std::abs(focal_calib_binary(q, 0.0) - q) <= 1e-12);
        for (double g : kGammas) {
            const double a = focal_calib_binary(q, g);
            const double b = focal_calib_binary(1.0 - q, g);
            CHECK(std::abs(a + b - 1.0) <= 1e-12);
        }
    }
    for (double g : kGammas) CHECK(std::abs(focal_calib_binary(0.5, g) - 0.5) <= 1e-12);
    CHECK(focal_calib_binary(0.3, 0.0) == 0.3);
}

TEST_CASE("binary map matches the closed form evaluated in long double") {
    for (double g : {-0.5, -0.25, 0.05, 0.5, 1.0, 2.0, 3.0, 5.0, 10.0}) {
        for (double q : unit_grid(0.0005)) {
            const double want = static_cast<double>(oracle::binary_map(q, g));
            CHECK(std::abs(focal_calib_binary(q, g) - want) <= 1e-13);
        }
    }
}

TEST_CASE("binary map is confidence raising and monotone") {
    for (double g : kGammas) {
        double prev = 0.0;
        for (double q : unit_grid(0.001)) {
            const double p = focal_calib_binary(q, g);
            CHECK(p >= prev);
            // increments below double spacing near 1 round to zero
            if (1.0 - prev > 1e-12) CHECK(p > prev);
            prev = p;
            if (q > 0.5) CHECK(p > q);
            if (q < 0.5) CHECK(p < q);
        }
    }
    // negative gamma bends the other way
    CHECK(focal_calib_binary(0.8, -0.5) < 0.8);
    CHECK(focal_calib_binary(0.2, -0.5) > 0.2);
}

TEST_CASE("binary map domain") {
    CHECK(focal_calib_binary(0.0, 2.0) >= 0.0);
    CHECK(focal_calib_binary(1.0, 2.0) <= 1.0);
    CHECK_THROWS_AS(focal_calib_binary(1.2, 2.0), DomainError);
    CHECK_THROWS_AS(focal_calib_binary(0.5, -1.0), ParameterError);
    CHECK_THROWS_AS(focal_calib_binary(0.5, std::nan("")), ParameterError);
}

TEST_CASE("logit form agrees with probability form") {
    for (double g : kGammas) {
        for (int k = -3000; k <= 3000; ++k) {
            const double s = k * 0.01;
            const double via_prob = focal_calib_binary(sigmoid(s), g);
            CHECK(std::abs(focal_calib_binary_logit(s, g) - via_prob) <= 1e-12);
        }
    }
}

TEST_CASE("logit-space form matches the oracle and stays finite far out") {
    for (double g : kGammas) {
        for (int k = -400; k <= 400; ++k) {
            const double s = k * 0.1;
            const double got = focal_calib_binary_logit_space(s, g);
            const double want = static_cast<double>(oracle::binary_map_logit(s, g));
            CHECK(std::abs(got - want) <= 1e-12 * std::max(1.0, std::abs(want)));
            CHECK(focal_calib_binary_logit_space(-s, g) == doctest::Approx(-got).epsilon(1e-14));
        }
        CHECK(focal_calib_binary_logit_space(0.0, g) == 0.0);
        CHECK(std::isfinite(focal_calib_binary_logit_space(700.0, g)));
        CHECK(focal_calib_binary_logit(700.0, g) == 1.0);
        CHECK(focal_calib_binary_logit(-700.0, g) >= 0.0);
    }
    CHECK_THROWS_AS(focal_calib_binary_logit(std::nan(""), 1.0), DomainError);
}

TEST_CASE("multiclass map matches the unnormalised-weight oracle") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 2000; ++trial) {
        const auto q = random_simplex(rng, 2 + trial % 9);
        for (double g : {0.05, 0.5, 1.0, 3.0, 9.0, 24.0, 30.0, 60.0}) {
            std::vector<double> qc(q);
            for (auto& x : qc) x = clamp_prob(x);
            const auto got = focal_calib_multiclass(q, g);
            const auto want = oracle::multiclass_map(qc, g);
            double sum = 0.0;
            for (std::size_t k = 0; k < q.size(); ++k) {
                CHECK(std::abs(got[k] - static_cast<double>(want[k])) <= 1e-12);
                sum += got[k];
            }
            CHECK(std::abs(sum - 1.0) <= 1e-12);
            CHECK(argmax(got) == argmax(q));
        }
    }
}

TEST_CASE("multiclass map: identity and uniform fixed point") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 500; ++trial) {
        const auto q = random_simplex(rng, 3 + trial % 5);
        const auto p = focal_calib_multiclass(q, 0.0);
        for (std::size_t k = 0; k < q.size(); ++k) CHECK(p[k] == clamp_prob(q[k]));
    }
    for (std::size_t n : {2u, 3u, 4u, 10u, 100u}) {
        for (double g : kGammas) {
            const auto p = focal_calib_multiclass(std::vector<double>(n, 1.0 / n), g);
            for (double x : p) CHECK(std::abs(x - 1.0 / n) <= 1e-12);
        }
    }
}

TEST_CASE("multiclass map at n=2 equals the binary map") {
    for (double g : kGammas) {
        for (double q : unit_grid(0.001)) {
            const auto p = focal_calib_multiclass(std::vector<double>{1.0 - q, q}, g);
            CHECK(std::abs(p[1] - focal_calib_binary(q, g)) <= 1e-9);
        }
    }
}

TEST_CASE("multiclass map is permutation equivariant and aliasing safe") {
    const std::vector<double> q{0.2, 0.5, 0.3};
    const std::vector<double> r{0.3, 0.2, 0.5};
    const auto a = focal_calib_multiclass(q, 2.0);
    const auto b = focal_calib_multiclass(r, 2.0);
    CHECK(a[0] == doctest::Approx(b[1]).epsilon(1e-15));
    CHECK(a[1] == doctest::Approx(b[2]).epsilon(1e-15));
    CHECK(a[2] == doctest::Approx(b[0]).epsilon(1e-15));

    std::vector<double> inplace(q);
    focal_calib_multiclass_into(inplace, 2.0, inplace);
    CHECK(inplace == a);
    CHECK_THROWS_AS(focal_calib_multiclass(std::vector<double>{1.0}, 1.0), DomainError);
}

TEST_CASE("binary inverse round trips and agrees with oracle bisection") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(1e-6, 1.0 - 1e-6);
    for (int trial = 0; trial < 2000; ++trial) {
        const double p = u(rng);
        const double g = kGammas[trial % std::size(kGammas)];
        const double q = focal_calib_inverse_binary(p, g);
        CHECK(std::abs(focal_calib_binary(q, g) - p) <= 1e-9);
        if (trial % 20 == 0) {
            const double want = oracle::bisect_inverse([g](long double x) { return oracle::binary_map(x, g); }, p,
                                                       1e-12L, 1.0L - 1e-12L);
            CHECK(std::abs(q - want) <= 1e-9);
        }
    }
    CHECK(focal_calib_inverse_binary(0.37, 0.0) == 0.37);
    CHECK(focal_calib_inverse_binary(0.5, 3.0) == doctest::Approx(0.5).epsilon(1e-11));
}

TEST_CASE("multiclass inverse round trips") {
    std::mt19937_64 rng(9);
    for (int trial = 0; trial < 1000; ++trial) {
        const auto p = random_simplex(rng, 2 + trial % 5);
        bool interior = true;
        for (double x : p) interior = interior && x > 1e-9;
        if (!interior) continue;
        const double g = kGammas[trial % std::size(kGammas)];
        const auto q = focal_calib_inverse_multiclass(p, g);
        const auto back = focal_calib_multiclass(q, g);
        for (std::size_t k = 0; k < p.size(); ++k) CHECK(std::abs(back[k] - p[k]) <= 1e-8);
    }
    const auto uni = focal_calib_inverse_multiclass(std::vector<double>(4, 0.25), 2.0);
    for (double x : uni) CHECK(x == 0.25);
}

TEST_CASE("multiclass inverse with negative gamma") {
    const std::vector<double> q{0.5, 0.3, 0.2};
    const auto p = focal_calib_multiclass(q, -0.5);
    const auto back = focal_calib_inverse_multiclass(p, -0.5);
    for (std::size_t k = 0; k < 3; ++k) CHECK(std::abs(back[k] - q[k]) <= 1e-9);

    // n = 2 is a bijection for every admissible gamma
    const auto two = focal_calib_inverse_multiclass(focal_calib_multiclass(std::vector<double>{0.97, 0.03}, -0.5), -0.5);
    CHECK(std::abs(two[0] - 0.97) <= 1e-9);

    // the weight peaks near 0.736 at gamma = -0.5
    const auto high = focal_calib_multiclass(std::vector<double>{0.9, 0.06, 0.04}, -0.5);
    CHECK_THROWS_AS(focal_calib_inverse_multiclass(high, -0.5), NumericError);
}

TEST_CASE("multiclass map can lower the top probability for flat vectors and small gamma") {
    std::vector<double> q{0.079117347368813942, 0.2275910989806105,  0.042612953279542315, 0.049651901798297142,
                          0.037705242861376026, 0.063567036321462086, 0.12822747508434298,  0.13002152465019476,
                          0.15228157397939429,  0.089223845675965904};
    const auto got = focal_calib_multiclass(q, 0.5);
    const auto want = oracle::multiclass_map(q, 0.5L);
    for (std::size_t k = 0; k < q.size(); ++k) CHECK(std::abs(got[k] - static_cast<double>(want[k])) <= 1e-13);
    CHECK(got[1] < q[1] - 5e-4);
    CHECK(argmax(got) == 1);
}

TEST_CASE("losses") {
    const std::vector<double> q{0.2, 0.7, 0.1};
    CHECK(cross_entropy(q, 1) == doctest::Approx(-std::log(0.7)).epsilon(1e-15));
    CHECK(focal_loss(q, 1, 0.0) == cross_entropy(q, 1));
    CHECK(focal_loss(q, 1, 2.0) == doctest::Approx(-0.09 * std::log(0.7)).epsilon(1e-14));
    CHECK(std::isfinite(cross_entropy(std::vector<double>{1.0, 0.0}, 1)));
    CHECK_THROWS_AS(cross_entropy(q, 3), DomainError);
    CHECK_THROWS_AS(focal_loss(q, 0, -0.5), ParameterError);
    CHECK_THROWS_AS(focal_loss(q, 5, 1.0), DomainError);
}

TEST_CASE("focal loss derivatives match finite differences") {
    for (double g : {0.0, 0.5, 1.0, 2.0, 3.0, 5.0}) {
        for (double q : unit_grid(0.01)) {
            const auto fl = [g](double x) { return static_cast<double>(oracle::focal(x, g)); };
            const double grad = focal_loss_grad(q, g);
            const double fd = oracle::central_diff(fl, q, 1e-6 * std::min(q, 1.0 - q));
            CHECK(std::abs(grad - fd) <= 1e-6 * std::abs(fd) + 1e-9);

            const auto gr = [g](double x) { return focal_loss_grad(x, g); };
            const double second = focal_loss_second_deriv(q, g);
            const double fd2 = oracle::central_diff(gr, q, 1e-6 * std::min(q, 1.0 - q));
            CHECK(second > 0.0);
            CHECK(std::abs(second - fd2) <= 1e-5 * std::abs(fd2));
        }
    }
    CHECK(focal_loss_second_deriv(0.5, 1.0) == doctest::Approx(6.0).epsilon(1e-14));
    CHECK(focal_loss_second_deriv(0.5, 0.0) == doctest::Approx(4.0).epsilon(1e-14));
    CHECK(focal_loss_grad(0.5, 0.0) == doctest::Approx(-2.0).epsilon(1e-14));
    CHECK(std::abs(focal_loss_grad(1.0, 2.0)) < 1e-20);
}

TEST_CASE("properized focal loss") {
    const std::vector<double> q{0.6, 0.3, 0.1};
    CHECK(properized_focal_loss(q, 0, 0.0) == cross_entropy(q, 0));
    const auto u = focal_calib_inverse_multiclass(q, 2.0);
    CHECK(properized_focal_loss(q, 2, 2.0) == focal_loss(u, 2, 2.0));

    // binary: on the positive instance it sits below focal loss for q < 0.5
    // and above it for q > 0.5
    for (double p : unit_grid(0.05)) {
        const std::vector<double> v{1.0 - p, p};
        const double proper = properized_focal_loss(v, 1, 3.0);
        const double plain = focal_loss(v, 1, 3.0);
        if (p < 0.5 - 1e-9) CHECK(proper < plain);
        if (p > 0.5 + 1e-9) CHECK(proper > plain);
    }
    CHECK_THROWS_AS(properized_focal_loss(q, 0, -1.0), ParameterError);
}

TEST_CASE("focal temperature transform composes the two stages") {
    const std::vector<double> z{2.0, -1.0, 0.5, 0.0};
    const CalibratorParams p{1.5, 0.8, CalibratorFamily::focal_temperature};
    const auto got = focal_temperature_transform(z, p);
    CHECK(got == focal_calib_multiclass(temperature_scale(z, Temperature{0.8}), 1.5));
    CHECK(focal_temperature_transform(z, CalibratorParams::identity()) == softmax(z));
    CHECK_THROWS_AS(focal_temperature_transform(z, CalibratorParams{1.0, 0.0}), ParameterError);
}

TEST_CASE("calibrator params") {
    CHECK_NOTHROW(CalibratorParams::identity().validate());
    CHECK_THROWS_AS((CalibratorParams{1.0, 1.0, CalibratorFamily::temperature}.validate()), ParameterError);
    CHECK_THROWS_AS((CalibratorParams{1.0, 2.0, CalibratorFamily::focal}.validate()), ParameterError);
    CHECK_NOTHROW((CalibratorParams{1.0, 1.0, CalibratorFamily::focal}.validate()));
    CHECK(family_from_string("focal-temperature") == CalibratorFamily::focal_temperature);
    CHECK(to_string(CalibratorFamily::temperature) == "temperature");
    CHECK_THROWS_AS(family_from_string("platt"), ParameterError);
}

TEST_CASE("negative gamma check") {
    CHECK_NOTHROW(check_calibration_gamma(-0.5));
    CHECK_NOTHROW(check_calibration_gamma(-0.25));
    CHECK_NOTHROW(check_calibration_gamma(3.0));
    CHECK_THROWS_AS(check_calibration_gamma(-1.0), ParameterError);
    CHECK_THROWS_AS(check_calibration_gamma(-2.0), ParameterError);
}

TEST_CASE("argmax breaks ties toward the lowest index") {
    CHECK(argmax(std::vector<double>{0.5, 0.5}) == 0);
    CHECK(argmax(std::vector<double>{0.1, 0.45, 0.45}) == 1);
}
