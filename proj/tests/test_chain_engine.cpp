#include <doctest.h>

#include <cmath>
#include <map>
#include <numbers>
#include <random>

#include "chainlab/chain_engine.hpp"
#include "chainlab/errors.hpp"
#include "chainlab/parallel.hpp"
#include "oracles.hpp"

using namespace chainlab;

namespace {

const double kSqrt2 = std::sqrt(2.0);

struct Fixture {
    oracle::Cloud oc;
    PointCloudMeasure cloud;
    GridIndex index;
    Fixture(oracle::Cloud c, double cell) : oc(std::move(c)), cloud(oc.measure()), index(build_grid(cloud, cell)) {}
};

}  // namespace

TEST_SUITE("chain_engine") {

TEST_CASE("band kernel values") {
    const AnnulusKernel k(1.0, 0.1);
    CHECK(kernel_eval(k, 1.05) == doctest::Approx(5.0));
    CHECK(kernel_eval(k, 1.2) == 0.0);
    CHECK(kernel_eval(k, 0.9) == doctest::Approx(5.0));
    CHECK(kernel_eval(k, 1.1) == doctest::Approx(5.0));
}

TEST_CASE("probability normalization divides by the sphere area") {
    const AnnulusKernel k2(2.0, 0.1, KernelNormalization::probability, 2);
    CHECK(k2.band_value() == doctest::Approx(5.0 / (2 * std::numbers::pi * 2.0)));
    const AnnulusKernel k3(1.0, 0.1, KernelNormalization::probability, 3);
    CHECK(k3.band_value() == doctest::Approx(5.0 / (4 * std::numbers::pi)));
    CHECK(unit_sphere_area(1) == doctest::Approx(2.0));
    CHECK_THROWS_AS(AnnulusKernel(1.0, 0.1, KernelNormalization::probability, 0), ValidationError);
}

TEST_CASE("kernel validation") {
    CHECK_THROWS_AS(AnnulusKernel(1.0, 1.0), ValidationError);
    CHECK_THROWS_AS(AnnulusKernel(1.0, 0.0), ValidationError);
    CHECK_THROWS_AS(AnnulusKernel(0.0, 0.1), ValidationError);
}

TEST_CASE("operator on the square corners") {
    Fixture f(oracle::square4(), 0.3);
    const auto one = DensityField::constant(4);
    const auto a = apply_spherical_operator(f.index, f.cloud, one, AnnulusKernel(1.0, 0.1));
    for (const double v : a.values) CHECK(v == doctest::Approx(2.5));
    REQUIRE(a.gaps_applied.size() == 1);
    CHECK(a.gaps_applied[0].first == 1.0);
    const auto b = apply_spherical_operator(f.index, f.cloud, one, AnnulusKernel(kSqrt2, 0.1));
    for (const double v : b.values) CHECK(v == doctest::Approx(1.25));
    const auto z = apply_spherical_operator(f.index, f.cloud, DensityField::constant(4, 0.0), AnnulusKernel(1.0, 0.1));
    for (const double v : z.values) CHECK(v == 0.0);
}

TEST_CASE("operator rejects misaligned or negative fields") {
    Fixture f(oracle::square4(), 0.3);
    CHECK_THROWS_AS(apply_spherical_operator(f.index, f.cloud, DensityField::constant(3), AnnulusKernel(1.0, 0.1)),
                    ValidationError);
    auto neg = DensityField::constant(4);
    neg.values[2] = -1.0;
    CHECK_THROWS_AS(apply_spherical_operator(f.index, f.cloud, neg, AnnulusKernel(1.0, 0.1)), ValidationError);
}

TEST_CASE("chain density on the square corners") {
    Fixture f(oracle::square4(), 0.3);
    CHECK(chain_density(f.index, f.cloud, std::vector<double>{1.0}, 0.1) == doctest::Approx(2.5));
    CHECK(chain_density(f.index, f.cloud, std::vector<double>{1.0, 1.0}, 0.1) == doctest::Approx(6.25));
    CHECK(chain_density(f.index, f.cloud, std::vector<double>{1.0, kSqrt2}, 0.1) == doctest::Approx(3.125));
    CHECK(chain_density_bruteforce(f.cloud, std::vector<double>{1.0, 1.0}, 0.1) == doctest::Approx(6.25));
    CHECK(oracle::chain_density(f.oc, {1.0, 1.0}, 0.1) == doctest::Approx(6.25));
    CHECK(oracle::chain_density(f.oc, {1.0, kSqrt2}, 0.1) == doctest::Approx(3.125));
}

TEST_CASE("brute force on a single point and its guard") {
    PointCloudMeasure one(2, {0.2, 0.2}, {1.0});
    CHECK(chain_density_bruteforce(one, std::vector<double>{0.5, 0.5}, 0.1) == 0.0);
    const auto big = oracle::random_cloud(3, 200, 2).measure();
    CHECK_THROWS_AS(chain_density_bruteforce(big, std::vector<double>{0.3, 0.3, 0.3, 0.3}, 0.05), CapacityError);
}

TEST_CASE("gaps must exceed eps") {
    Fixture f(oracle::square4(), 0.3);
    CHECK_THROWS_AS(chain_density(f.index, f.cloud, std::vector<double>{1.0, 0.05}, 0.1), ValidationError);
    CHECK_THROWS_AS(chain_density(f.index, f.cloud, std::vector<double>{}, 0.1), ValidationError);
}

TEST_CASE("indexed density equals full enumeration on random clouds") {
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 24; ++trial) {
        const int d = 2 + trial % 2;
        const int k = 1 + trial % 3;
        const std::size_t n = k == 3 ? 24 : 50;
        Fixture f(oracle::random_cloud(500 + trial, n, d), 0.05 + 0.3 * u(rng));
        const double eps = 0.03 + 0.1 * u(rng);
        std::vector<double> gaps;
        for (int i = 0; i < k; ++i) gaps.push_back(eps + 0.05 + 0.6 * u(rng));
        const double expected = oracle::chain_density(f.oc, gaps, eps);
        const double got = chain_density(f.index, f.cloud, gaps, eps);
        CHECK(got == doctest::Approx(expected).epsilon(1e-10));
        CHECK(chain_density_bruteforce(f.cloud, gaps, eps) == doctest::Approx(expected).epsilon(1e-10));
    }
}

TEST_CASE("operator linearity and positivity") {
    Fixture f(oracle::random_cloud(8, 400, 2), 0.1);
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    DensityField a, b, c;
    for (std::size_t i = 0; i < 400; ++i) {
        a.values.push_back(u(rng));
        b.values.push_back(u(rng));
        c.values.push_back(2.0 * a.values.back() + 3.0 * b.values.back());
    }
    const AnnulusKernel k(0.3, 0.05);
    const auto ta = apply_spherical_operator(f.index, f.cloud, a, k);
    const auto tb = apply_spherical_operator(f.index, f.cloud, b, k);
    const auto tc = apply_spherical_operator(f.index, f.cloud, c, k);
    for (std::size_t i = 0; i < 400; ++i) {
        CHECK(tc.values[i] == doctest::Approx(2.0 * ta.values[i] + 3.0 * tb.values[i]).epsilon(1e-12));
        CHECK(ta.values[i] >= 0.0);
    }
}

TEST_CASE("reversing the gap order preserves the density") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        Fixture f(oracle::random_cloud(seed, 300, 2), 0.1);
        const double a = chain_density(f.index, f.cloud, std::vector<double>{0.2, 0.45}, 0.04);
        const double b = chain_density(f.index, f.cloud, std::vector<double>{0.45, 0.2}, 0.04);
        CHECK(a == doctest::Approx(b).epsilon(1e-10));
    }
}

TEST_CASE("density is bounded by the k-th power of the largest band average") {
    const auto c = ifs_generate(four_corner_cantor(0.45), 6);
    const auto g = build_grid(c, 0.03);
    for (const double t : {0.2, 0.56, 0.9}) {
        const double eps = 0.02;
        const auto one = apply_spherical_operator(g, c, DensityField::constant(c.size()), AnnulusKernel(t, eps));
        const double sup = *std::max_element(one.values.begin(), one.values.end());
        for (int k = 1; k <= 3; ++k) {
            const std::vector<double> gaps(static_cast<std::size_t>(k), t);
            CHECK(chain_density(g, c, gaps, eps) <= std::pow(sup, k) * (1 + 1e-12));
        }
    }
}

TEST_CASE("results do not depend on the thread count") {
    const auto c = ifs_generate(four_corner_cantor(0.45), 6);
    const auto g = build_grid(c, 0.03);
    const std::vector<double> gaps = {0.5, 0.3, 0.5};
    set_thread_count(1);
    const auto f1 = chain_fields(g, c, gaps, 0.02);
    const auto s1 = sample_chains(g, c, gaps, 0.02, 200, 5);
    set_thread_count(4);
    const auto f4 = chain_fields(g, c, gaps, 0.02);
    const auto s4 = sample_chains(g, c, gaps, 0.02, 200, 5);
    set_thread_count(0);
    for (std::size_t j = 0; j < f1.size(); ++j) CHECK(f1[j].values == f4[j].values);
    for (std::size_t i = 0; i < s1.size(); ++i) CHECK(s1[i].vertices == s4[i].vertices);
}

TEST_CASE("good sets on the square corners") {
    Fixture f(oracle::square4(), 0.3);
    const AnnulusKernel k(1.0, 0.1);
    const auto all = good_set_extract(f.index, f.cloud, nullptr, k, 2.0);
    CHECK(all.members.size() == 4);
    CHECK(all.mass == doctest::Approx(1.0));
    const auto none = good_set_extract(f.index, f.cloud, nullptr, k, 3.0);
    CHECK(none.members.empty());
    CHECK(none.mass == 0.0);
}

TEST_CASE("good set at threshold zero is the support of the operator") {
    Fixture f(oracle::random_cloud(4, 300, 2), 0.1);
    const AnnulusKernel k(0.9, 0.02);
    const auto set = good_set_extract(f.index, f.cloud, nullptr, k, 0.0);
    const auto tf = apply_spherical_operator(f.index, f.cloud, DensityField::constant(300), k);
    std::vector<std::size_t> expected;
    for (std::size_t i = 0; i < 300; ++i)
        if (tf.values[i] > 0.0) expected.push_back(i);
    CHECK(set.members == expected);
    CHECK(!expected.empty());
    CHECK(expected.size() < 300);
}

TEST_CASE("good-set schedule stays non-empty when the density clears twice c(1)") {
    const auto c = ifs_generate(four_corner_cantor(0.45), 6);
    const auto g = build_grid(c, 0.03);
    const AnnulusKernel k(0.56, 0.03);
    const double c1_density = chain_density(g, c, std::vector<double>{0.56}, 0.03);
    const double c1 = 0.25 * c1_density;
    REQUIRE(c1_density > 2 * c1);
    const auto sets = good_set_schedule(g, c, k, c1, 4);
    REQUIRE(sets.size() == 4);
    for (std::size_t j = 0; j < sets.size(); ++j) {
        CHECK(sets[j].mass > 0.0);
        CHECK(sets[j].mass <= 1.0);
        if (j > 0) CHECK(sets[j].threshold == doctest::Approx(0.5 * sets[j - 1].threshold * sets[j - 1].mass));
    }
    // members really clear their threshold against the restricted measure
    const auto& g2 = sets[1];
    DensityField ind = DensityField::constant(c.size(), 0.0);
    for (const auto i : sets[0].members) ind.values[i] = 1.0;
    const auto tf = apply_spherical_operator(g, c, ind, k);
    for (const auto i : g2.members) CHECK(tf.values[i] > g2.threshold);
}

TEST_CASE("sampled chains on the square: half are bounce-backs") {
    Fixture f(oracle::square4(), 0.3);
    const auto chains = sample_chains(f.index, f.cloud, std::vector<double>{1.0, 1.0}, 0.1, 1000, 42, 1e-9);
    REQUIRE(chains.size() == 1000);
    std::size_t degenerate = 0;
    std::map<std::vector<std::size_t>, int> counts;
    for (const auto& c : chains) {
        if (c.degenerate) ++degenerate;
        CHECK(c.degenerate == (c.vertices[0] == c.vertices[2]));
        for (const double g : c.gaps) CHECK(std::abs(g - 1.0) <= 0.1);
        CHECK(c.weight > 0.0);
        ++counts[c.vertices];
    }
    CHECK(static_cast<double>(degenerate) / 1000 == doctest::Approx(0.5).epsilon(0.1));
    // the 16 admissible triples are equally likely
    CHECK(counts.size() == 16);
    for (const auto& [v, n] : counts) CHECK(n > 25);
}

TEST_CASE("sampler edge cases") {
    Fixture f(oracle::square4(), 0.3);
    CHECK(sample_chains(f.index, f.cloud, std::vector<double>{3.0}, 0.1, 10, 1).empty());
    CHECK(sample_chains(f.index, f.cloud, std::vector<double>{1.0}, 0.1, 0, 1).empty());
    const auto a = sample_chains(f.index, f.cloud, std::vector<double>{1.0, 1.0}, 0.1, 50, 9);
    const auto b = sample_chains(f.index, f.cloud, std::vector<double>{1.0, 1.0}, 0.1, 50, 9);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].vertices == b[i].vertices);
}

TEST_CASE("sampled chain frequencies follow the exact chain measure") {
    // every admissible pair (x1, x2) for k = 1 has probability w1 w2 / C
    Fixture f(oracle::random_cloud(17, 40, 2), 0.2);
    const double eps = 0.1, t = 0.5;
    const double density = chain_density(f.index, f.cloud, std::vector<double>{t}, eps);
    const auto chains = sample_chains(f.index, f.cloud, std::vector<double>{t}, eps, 40000, 3);
    std::map<std::pair<std::size_t, std::size_t>, int> counts;
    for (const auto& c : chains) ++counts[{c.vertices[0], c.vertices[1]}];
    double chi2 = 0.0;
    int cells = 0;
    for (std::size_t a = 0; a < 40; ++a)
        for (std::size_t b = 0; b < 40; ++b) {
            if (a == b || !oracle::in_band(f.oc.dist(a, b), t, eps)) {
                CHECK(counts.count({a, b}) == 0);
                continue;
            }
            const double p = f.oc.weights[a] * f.oc.weights[b] / (2 * eps) / density;
            const double expected = p * 40000;
            const double seen = counts.count({a, b}) ? counts[{a, b}] : 0;
            chi2 += (seen - expected) * (seen - expected) / expected;
            ++cells;
        }
    REQUIRE(cells > 10);
    // generous bound: mean cells - 1, sd sqrt(2 cells)
    CHECK(chi2 < cells + 6 * std::sqrt(2.0 * cells));
}

TEST_CASE("degenerate fractions on the square") {
    Fixture f(oracle::square4(), 0.3);
    DegeneracyOptions o;
    o.delta = 1e-9;
    const auto same = degenerate_mass_fraction(f.index, f.cloud, std::vector<double>{1.0, 1.0}, 0.1, o);
    CHECK(same.exact);
    CHECK(same.value == doctest::Approx(0.5));
    const auto mixed = degenerate_mass_fraction(f.index, f.cloud, std::vector<double>{1.0, kSqrt2}, 0.1, o);
    CHECK(mixed.value == 0.0);
}

TEST_CASE("two points only bounce") {
    Fixture f(oracle::two_points(1.0), 0.3);
    const auto r = degenerate_mass_fraction(f.index, f.cloud, std::vector<double>{1.0, 1.0}, 0.1);
    CHECK(r.value == doctest::Approx(1.0));
    CHECK(!find_nondegenerate_chain(f.index, f.cloud, std::vector<double>{1.0, 1.0}, 0.1, 0.5, 1, 200));
}

TEST_CASE("zero density makes the fraction undefined") {
    Fixture f(oracle::square4(), 0.3);
    CHECK_THROWS_AS(degenerate_mass_fraction(f.index, f.cloud, std::vector<double>{3.0, 3.0}, 0.1), UndefinedError);
    DegeneracyOptions sampled;
    sampled.exact_work_budget = 0;
    CHECK_THROWS_AS(degenerate_mass_fraction(f.index, f.cloud, std::vector<double>{3.0, 3.0}, 0.1, sampled),
                    UndefinedError);
}

TEST_CASE("exact degenerate mass equals full enumeration") {
    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 16; ++trial) {
        const int k = 1 + trial % 3;
        const std::size_t n = k == 3 ? 22 : 40;
        Fixture f(oracle::random_cloud(900 + trial, n, 2 + trial % 2), 0.15);
        const double eps = 0.08 + 0.1 * u(rng);
        const double delta = 0.3 * u(rng);
        std::vector<double> gaps;
        for (int i = 0; i < k; ++i) gaps.push_back(eps + 0.05 + 0.4 * u(rng));
        const double expected = oracle::degenerate_mass(f.oc, gaps, eps, delta);
        const double got = degenerate_mass_exact(f.index, f.cloud, gaps, eps, delta);
        CHECK(got == doctest::Approx(expected).epsilon(1e-10).scale(1e-300));
    }
}

TEST_CASE("sampled degeneracy agrees with the exact value") {
    const auto c = ifs_generate(four_corner_cantor(0.45), 5);
    const auto g = build_grid(c, 0.05);
    const std::vector<double> gaps = {0.56, 0.56};
    DegeneracyOptions exact;
    exact.force_exact = true;
    DegeneracyOptions sampled;
    sampled.exact_work_budget = 0;
    sampled.samples = 20000;
    sampled.seed = 4;
    const auto e = degenerate_mass_fraction(g, c, gaps, 0.05, exact);
    const auto s = degenerate_mass_fraction(g, c, gaps, 0.05, sampled);
    CHECK(e.exact);
    CHECK(!s.exact);
    CHECK(s.standard_error > 0.0);
    CHECK(std::abs(s.value - e.value) <= 4 * s.standard_error + 1e-3);
}

TEST_CASE("non-degenerate chain on the square") {
    Fixture f(oracle::square4(), 0.3);
    const auto chain = find_nondegenerate_chain(f.index, f.cloud, std::vector<double>{1.0, 1.0}, 0.1, 0.5, 7, 100);
    REQUIRE(chain);
    CHECK(!chain->degenerate);
    for (std::size_t a = 0; a < 3; ++a)
        for (std::size_t b = a + 1; b < 3; ++b) CHECK(f.oc.dist(chain->vertices[a], chain->vertices[b]) >= 1.0);
    const auto again = find_nondegenerate_chain(f.index, f.cloud, std::vector<double>{1.0, 1.0}, 0.1, 0.5, 7, 100);
    CHECK(again->vertices == chain->vertices);
}

}  // TEST_SUITE
