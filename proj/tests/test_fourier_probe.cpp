#include <doctest.h>

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "chainlab/errors.hpp"
#include "chainlab/fourier_probe.hpp"
#include "chainlab/parallel.hpp"
#include "oracles.hpp"

using namespace chainlab;

namespace {

constexpr double kPi = std::numbers::pi;

PointCloudMeasure origin() { return PointCloudMeasure(2, {0.0, 0.0}, {1.0}); }

PointCloudMeasure cosine_pair() { return PointCloudMeasure(2, {0.5, 0.0, -0.5, 0.0}, {0.5, 0.5}); }

}  // namespace

TEST_SUITE("fourier_probe") {

TEST_CASE("mu_hat examples") {
    const std::vector<double> xi1 = {1.0, 0.0}, xi_half = {0.5, 0.0}, xi_any = {3.7, -1.2};
    const auto one = mu_hat(origin(), nullptr, xi_any);
    CHECK(one.real() == 1.0);
    CHECK(one.imag() == 0.0);
    const auto a = mu_hat(cosine_pair(), nullptr, xi1);
    CHECK(a.real() == doctest::Approx(-1.0));
    CHECK(std::abs(a.imag()) < 1e-15);
    CHECK(std::abs(mu_hat(cosine_pair(), nullptr, xi_half)) < 1e-15);
    CHECK_THROWS_AS(mu_hat(origin(), nullptr, std::vector<double>{1.0}), ValidationError);
}

TEST_CASE("mu_hat is bounded, normalized and Hermitian") {
    const auto oc = oracle::random_cloud(5, 60, 2);
    const auto c = oc.measure();
    const std::vector<double> zero = {0.0, 0.0};
    CHECK(std::abs(mu_hat(c, nullptr, zero) - std::complex<double>(1.0, 0.0)) < 1e-15);
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-20.0, 20.0);
    for (int trial = 0; trial < 50; ++trial) {
        const std::vector<double> xi = {u(rng), u(rng)}, minus = {-xi[0], -xi[1]};
        const auto v = mu_hat(c, nullptr, xi);
        CHECK(std::abs(v) <= 1.0 + 1e-14);
        CHECK(std::abs(mu_hat(c, nullptr, minus) - std::conj(v)) < 1e-14);
        CHECK(std::abs(v - oracle::mu_hat(oc, {}, xi)) < 1e-12);
    }
}

TEST_CASE("mu_hat with a field matches the oracle") {
    const auto oc = oracle::random_cloud(9, 40, 3);
    const auto c = oc.measure();
    DensityField f;
    for (std::size_t i = 0; i < c.size(); ++i) f.values.push_back(0.5 + static_cast<double>(i % 7));
    const std::vector<double> xi = {0.3, -2.0, 1.1};
    CHECK(std::abs(mu_hat(c, &f, xi) - oracle::mu_hat(oc, f.values, xi)) < 1e-12);
    DensityField bad;
    bad.values = {1.0};
    CHECK_THROWS_AS(mu_hat(c, &bad, xi), ValidationError);
}

TEST_CASE("single-point shell energy equals the shell area") {
    for (const double R : {1.0, 2.0}) {
        const auto m = shell_energy(origin(), R, 2000, 1);
        CHECK(m.estimate == doctest::Approx(3.0 * kPi * R * R).epsilon(1e-12));
        CHECK(m.standard_error == doctest::Approx(0.0).scale(1e-300));
        CHECK(m.samples == 2000);
    }
    CHECK_THROWS_AS(shell_energy(origin(), 1.0, 999, 1), ValidationError);
    CHECK_THROWS_AS(shell_energy(origin(), 0.0, 1000, 1), ValidationError);
}

TEST_CASE("single-point energy integral closed forms") {
    for (const double r_max : {1.0, 2.0}) {
        const auto r = energy_integral(origin(), nullptr, 1.0, r_max, 4000, 2);
        CHECK(r.value == doctest::Approx(2.0 * kPi * r_max).epsilon(1e-12));
        CHECK(r.value >= 0.0);
    }
    const auto c = oracle::random_cloud(2, 20, 2).measure();
    const auto zero = DensityField::constant(c.size(), 0.0);
    CHECK(energy_integral(c, &zero, 1.0, 3.0, 1000, 4).value == 0.0);
    CHECK_THROWS_AS(energy_integral(origin(), nullptr, 0.0, 1.0, 100, 1), ValidationError);
    CHECK_THROWS_AS(energy_integral(origin(), nullptr, 2.0, 1.0, 100, 1), ValidationError);
}

TEST_CASE("doubling samples shrinks the standard error by sqrt 2") {
    const auto c = oracle::two_points(0.3).measure();
    const auto a = shell_energy(c, 2.0, 40000, 11);
    const auto b = shell_energy(c, 2.0, 80000, 12);
    const double ratio = a.standard_error / b.standard_error;
    CHECK(ratio == doctest::Approx(std::sqrt(2.0)).epsilon(0.2));
    CHECK(b.estimate == doctest::Approx(a.estimate).epsilon(0.05));

    const auto e1 = energy_integral(c, nullptr, 1.0, 4.0, 40000, 13);
    const auto e2 = energy_integral(c, nullptr, 1.0, 4.0, 80000, 14);
    CHECK(e1.standard_error / e2.standard_error == doctest::Approx(std::sqrt(2.0)).epsilon(0.2));
}

TEST_CASE("shell energy is reproducible for a seed and thread count independent") {
    const auto c = ifs_generate(four_corner_cantor(0.45), 4);
    set_thread_count(1);
    const auto a = shell_energy(c, 5.0, 3000, 7);
    set_thread_count(3);
    const auto b = shell_energy(c, 5.0, 3000, 7);
    set_thread_count(0);
    CHECK(a.estimate == b.estimate);
    CHECK(a.standard_error == b.standard_error);
}

TEST_CASE("frequency window and dyadic radii") {
    const auto c = ifs_generate(four_corner_cantor(0.45), 5);
    const auto w = frequency_window(c);
    CHECK(w.lo == doctest::Approx(1.0 / c.diameter()));
    CHECK(w.hi == doctest::Approx(1.0 / (4.0 * c.min_spacing())));
    const auto radii = dyadic_shell_radii(w, 10);
    REQUIRE(!radii.empty());
    for (std::size_t i = 0; i < radii.size(); ++i) {
        CHECK(radii[i] >= w.lo);
        CHECK(2.0 * radii[i] <= w.hi * (1 + 1e-12));
        if (i > 0) CHECK(radii[i] == doctest::Approx(radii[i - 1] / 2));
    }
    CHECK(dyadic_shell_radii(w, 2).size() == 2);
    CHECK_THROWS_AS(frequency_window(origin()), UndefinedError);
}

TEST_CASE("shell exponent agrees with the box-counting codimension") {
    const auto c = ifs_generate(four_corner_cantor(0.45), 6);
    const auto w = frequency_window(c);
    const auto report = shell_energy_scan(c, dyadic_shell_radii(w, 3), 3000, 21);
    REQUIRE(report.exponent);
    for (std::size_t i = 0; i < report.radii.size(); ++i) {
        CHECK(report.energies[i] >= 0.0);
        CHECK(report.standard_errors[i] >= 0.0);
        if (i > 0) CHECK(report.radii[i] > report.radii[i - 1]);
    }
    const auto box = box_dimension_estimate(c, geometric_ladder(c.diameter() / 4, 2 * c.min_spacing(), 8));
    CHECK(std::abs(*report.exponent - (2.0 - box.slope)) <= 0.4);
}

TEST_CASE("schur bound examples and oracle") {
    CHECK(schur_bound(oracle::two_points(1.0).measure(), 1.0) == doctest::Approx(0.5));
    CHECK(schur_bound(origin(), 1.0) == 0.0);
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        auto oc = oracle::random_cloud(seed, 50, 2 + static_cast<int>(seed % 2));
        for (int a = 0; a < oc.d; ++a) oc.coords[oc.d + a] = oc.coords[a];
        for (const double alpha : {0.5, 1.3}) {
            CHECK(schur_bound(oc.measure(), alpha) == doctest::Approx(oracle::schur(oc, alpha)).epsilon(1e-12));
        }
    }
    CHECK_THROWS_AS(schur_bound(origin(), 2.0), ValidationError);
}

}  // TEST_SUITE
