#include "chainlab/experiments.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <sstream>
#include <unordered_set>

#include "chainlab/chain_engine.hpp"
#include "chainlab/errors.hpp"
#include "chainlab/parallel.hpp"
#include "chainlab/random.hpp"
#include "chainlab/stats.hpp"

namespace chainlab {

void check_eps_ladder(const PointCloudMeasure& cloud, std::span<const double> gaps, std::span<const double> ladder,
                      const LadderOptions& options) {
    require(!gaps.empty(), "eps ladder: need at least one gap");
    require(!ladder.empty(), "eps ladder: empty ladder");
    require(std::isfinite(options.discreteness_factor) && options.discreteness_factor >= 0.0,
            "eps ladder: discreteness factor must be >= 0");
    const double min_gap = *std::min_element(gaps.begin(), gaps.end());
    const double guard = options.discreteness_factor * cloud.min_spacing();
    for (std::size_t i = 0; i < ladder.size(); ++i) {
        const double e = ladder[i];
        require(std::isfinite(e) && e > 0.0, "eps ladder: rungs must be positive");
        if (i > 0) require(e < ladder[i - 1], "eps ladder: rungs must be strictly decreasing");
        if (e < guard) {
            std::ostringstream msg;
            msg.precision(6);
            msg << "eps ladder: rung " << e << " is below the discreteness guard " << options.discreteness_factor
                << " * min_spacing = " << guard;
            throw ValidationError(msg.str());
        }
        require(e < min_gap, "eps ladder: every rung must be smaller than the smallest gap");
    }
}

std::vector<double> dyadic_eps_ladder(const PointCloudMeasure& cloud, int first, int last) {
    require(first <= last, "dyadic ladder: first exponent exceeds last");
    require(cloud.diameter() > 0.0, "dyadic ladder: cloud has zero diameter");
    std::vector<double> ladder;
    for (int j = first; j <= last; ++j) ladder.push_back(std::ldexp(cloud.diameter(), -j));
    return ladder;
}

ScalingReport eps_scaling(const GridIndex& index, const PointCloudMeasure& cloud, std::span<const double> gaps,
                          std::span<const double> ladder, const LadderOptions& options) {
    check_same_cloud(index, cloud);
    check_eps_ladder(cloud, gaps, ladder, options);
    require(ladder.size() >= 2, "eps_scaling: need at least two rungs");
    ScalingReport report;
    report.k = static_cast<int>(gaps.size());
    report.gaps.assign(gaps.begin(), gaps.end());
    report.eps.assign(ladder.begin(), ladder.end());
    for (const double e : ladder) {
        const double density = chain_density(index, cloud, gaps, e);
        report.densities.push_back(density);
        report.masses.push_back(density * std::pow(2.0 * e, report.k));
    }
    const bool all_positive =
        std::all_of(report.masses.begin(), report.masses.end(), [](double m) { return m > 0.0; });
    if (all_positive) {
        const auto fit = log_log_fit(report.eps, report.masses);
        report.slope = fit.slope;
        report.fit_residual = fit.rms_residual;
    }
    return report;
}

std::vector<double> open_grid(double lo, double hi, int n) {
    require(n >= 1, "grid: need at least one point");
    require(std::isfinite(lo) && std::isfinite(hi) && lo < hi, "grid: need lo < hi");
    std::vector<double> grid(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) grid[static_cast<std::size_t>(i)] = lo + (hi - lo) * (i + 1) / (n + 1);
    return grid;
}

GapScanReport gap_interval_scan(const GridIndex& index, const PointCloudMeasure& cloud, int k,
                                std::span<const double> grid, double eps, ThresholdRule rule) {
    check_same_cloud(index, cloud);
    require(!grid.empty(), "gap_interval_scan: empty grid");
    require(k >= 1, "gap_interval_scan: k must be >= 1");
    require(std::isfinite(eps) && eps > 0.0, "gap_interval_scan: eps must be positive");
    require(std::isfinite(rule.value) && rule.value >= 0.0, "gap_interval_scan: threshold must be >= 0");
    for (const double t : grid) require(std::isfinite(t) && t > eps, "gap_interval_scan: grid points must exceed eps");

    GapScanReport report;
    report.k = k;
    report.eps = eps;
    report.rule = rule;
    report.grid.assign(grid.begin(), grid.end());
    for (const double t : grid) {
        const std::vector<double> gaps(static_cast<std::size_t>(k), t);
        report.densities.push_back(chain_density(index, cloud, gaps, eps));
    }

    std::vector<double> positive;
    for (const double v : report.densities)
        if (v > 0.0) positive.push_back(v);
    if (positive.empty()) return report;
    if (rule.kind == ThresholdRule::Kind::absolute) {
        report.threshold = rule.value;
    } else {
        std::sort(positive.begin(), positive.end());
        const std::size_t m = positive.size();
        const double median = m % 2 ? positive[m / 2] : 0.5 * (positive[m / 2 - 1] + positive[m / 2]);
        report.threshold = rule.value * median;
    }

    const auto qualifies = [&](std::size_t i) {
        return report.densities[i] > 0.0 && report.densities[i] >= report.threshold;
    };
    const std::size_t peak = static_cast<std::size_t>(
        std::max_element(report.densities.begin(), report.densities.end()) - report.densities.begin());
    if (!qualifies(peak)) return report;
    std::size_t first = peak, last = peak;
    while (first > 0 && qualifies(first - 1)) --first;
    while (last + 1 < grid.size() && qualifies(last + 1)) ++last;
    report.interval = GapInterval{grid[first], grid[last], first, last};
    return report;
}

namespace {

struct LinearSolve {
    double m = 0.0;
    double a = 0.0;
    double sse = 0.0;
};

LinearSolve solve_for_beta(std::span<const double> eps, std::span<const double> y, double beta) {
    std::vector<double> x(eps.size());
    for (std::size_t i = 0; i < eps.size(); ++i) x[i] = std::pow(eps[i], beta);
    const auto fit = least_squares(x, y);
    LinearSolve s;
    s.m = fit.intercept;
    s.a = fit.slope;
    s.sse = fit.rms_residual * fit.rms_residual * static_cast<double>(eps.size());
    return s;
}

}  // namespace

EpsLadderResult fit_eps_limit(std::span<const double> eps, std::span<const double> densities, int k) {
    require(eps.size() == densities.size(), "density_limit: ladder and densities differ in length");
    require(eps.size() >= 3, "density_limit: need at least three rungs");
    EpsLadderResult r;
    r.eps.assign(eps.begin(), eps.end());
    r.densities.assign(densities.begin(), densities.end());
    const std::size_t n = eps.size();
    const auto set_residuals = [&] {
        r.residuals.resize(n);
        for (std::size_t i = 0; i < n; ++i) r.residuals[i] = densities[i] - r.m_est;
    };

    const auto [lo_it, hi_it] = std::minmax_element(densities.begin(), densities.end());
    const double lo = *lo_it, hi = *hi_it;
    if (hi == 0.0) {
        r.degenerate = true;
        r.m_est = 0.0;
        set_residuals();
        r.note = "all densities are zero; decay exponent undefined";
        return r;
    }
    if (hi - lo <= 1e-12 * std::abs(hi)) {
        r.degenerate = true;
        r.m_est = compensated_sum(densities) / static_cast<double>(n);
        set_residuals();
        r.note = "densities constant along the ladder; decay exponent undefined";
        return r;
    }

    std::vector<double> masses(n);
    for (std::size_t i = 0; i < n; ++i) masses[i] = densities[i] * std::pow(2.0 * eps[i], k);
    const auto [mlo, mhi] = std::minmax_element(masses.begin(), masses.end());
    if (k >= 1 && *mlo > 0.0 && *mhi - *mlo <= 1e-9 * *mhi) {
        r.atomic_regime = true;
        r.converged = false;
        r.m_est = std::numeric_limits<double>::quiet_NaN();
        set_residuals();
        r.note = "raw band masses constant along the ladder: atoms dominate and densities grow like eps^-k";
        return r;
    }

    constexpr double step = 0.01, beta_max = 4.0;
    double best_beta = step;
    double best_sse = std::numeric_limits<double>::infinity();
    for (int i = 1; i * step <= beta_max + 1e-12; ++i) {
        const double b = i * step;
        const double sse = solve_for_beta(eps, densities, b).sse;
        if (sse < best_sse) {
            best_sse = sse;
            best_beta = b;
        }
    }
    double a = std::max(best_beta - step, 1e-6), b = std::min(best_beta + step, beta_max);
    const double g = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = b - g * (b - a), d = a + g * (b - a);
    double fc = solve_for_beta(eps, densities, c).sse, fd = solve_for_beta(eps, densities, d).sse;
    for (int it = 0; it < 60; ++it) {
        if (fc < fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = solve_for_beta(eps, densities, c).sse;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = solve_for_beta(eps, densities, d).sse;
        }
    }
    double beta = 0.5 * (a + b);
    auto sol = solve_for_beta(eps, densities, beta);
    if (best_sse < sol.sse) {
        beta = best_beta;
        sol = solve_for_beta(eps, densities, beta);
    }
    r.beta = beta;
    r.m_est = sol.m;
    r.amplitude = sol.a;
    r.fit_rms = std::sqrt(sol.sse / static_cast<double>(n));
    set_residuals();
    r.converged = r.fit_rms <= 0.1 * r.m_est;
    if (!r.converged) r.note = "fit residual exceeds 10% of the extrapolated limit";
    return r;
}

EpsLadderResult density_limit(const GridIndex& index, const PointCloudMeasure& cloud, std::span<const double> gaps,
                              std::span<const double> ladder, const LadderOptions& options) {
    check_same_cloud(index, cloud);
    require(ladder.size() >= 3, "density_limit: need at least three rungs");
    check_eps_ladder(cloud, gaps, ladder, options);
    std::vector<double> densities;
    for (const double e : ladder) densities.push_back(chain_density(index, cloud, gaps, e));
    return fit_eps_limit(ladder, densities, static_cast<int>(gaps.size()));
}

namespace {

constexpr double kExactPairLimit = 1.1e9;
constexpr std::size_t kBoxTableLimit = std::size_t{1} << 28;

std::size_t box_count_per_axis(const PointCloudMeasure& cloud, double eta) {
    const double nb = std::floor(cloud.diameter() / eta) + 1.0;
    if (nb > 4e9) throw CapacityError("distance_set_volume: eta is too small for the cloud diameter");
    return static_cast<std::size_t>(nb);
}

DistSetReport exact_pairs(const PointCloudMeasure& cloud, int k, double eta) {
    require(k == 1 || k == 2, "distance_set_volume: exact-pairs mode supports k = 1 or 2");
    const std::size_t n = cloud.size();
    if (static_cast<double>(n) * static_cast<double>(n) > kExactPairLimit)
        throw CapacityError("distance_set_volume: exact-pairs mode is limited to about 33000 points");
    const std::size_t nb = box_count_per_axis(cloud, eta);
    const std::size_t table = k == 1 ? nb : nb * nb;
    if (k == 2 && (nb > (std::size_t{1} << 16) || table > kBoxTableLimit))
        throw CapacityError("distance_set_volume: too many boxes for the exact table");

    DistSetReport report;
    report.k = k;
    report.eta = eta;
    report.mode = DistSetMode::exact_pairs;
    std::vector<char> occupied(table, 0);
    const int d = cloud.dimension();
    const double* coords = cloud.coords().data();

    // boxes[x] = distinct distance boxes seen from x
    std::vector<std::vector<std::uint32_t>> boxes(n);
    parallel_for(n, [&](std::size_t begin, std::size_t end) {
        std::vector<char> seen(nb, 0);
        for (std::size_t x = begin; x < end; ++x) {
            auto& list = boxes[x];
            for (std::size_t y = 0; y < n; ++y) {
                if (y == x) continue;
                double s2 = 0.0;
                for (int a = 0; a < d; ++a) {
                    const double diff = coords[x * d + a] - coords[y * d + a];
                    s2 += diff * diff;
                }
                if (s2 == 0.0) continue;
                const auto b = static_cast<std::size_t>(std::floor(std::sqrt(s2) / eta));
                const std::size_t bb = std::min(b, nb - 1);
                if (!seen[bb]) {
                    seen[bb] = 1;
                    list.push_back(static_cast<std::uint32_t>(bb));
                }
            }
            for (const auto b : list) seen[b] = 0;
        }
    });

    double tuples = 0.0;
    for (std::size_t x = 0; x < n; ++x) {
        const auto& list = boxes[x];
        if (k == 1) {
            for (const auto b : list) occupied[b] = 1;
            tuples += static_cast<double>(list.size());
        } else {
            // x is the middle vertex: gap pairs (|x - x1|, |x3 - x|)
            for (const auto b1 : list)
                for (const auto b2 : list) occupied[static_cast<std::size_t>(b1) * nb + b2] = 1;
            tuples += static_cast<double>(list.size()) * static_cast<double>(list.size());
        }
    }
    report.occupied = static_cast<std::size_t>(std::count(occupied.begin(), occupied.end(), 1));
    report.samples = static_cast<std::size_t>(tuples);
    report.volume = static_cast<double>(report.occupied) * std::pow(eta, k);
    return report;
}

// One uniform band-graph step from slot `current`; returns false when no
// neighbour is found within the redraw budget.
bool walk_step(const GridIndex& index, double diameter, double eps_ref, std::size_t current, Rng& rng,
               std::vector<SlotRange>& blocks, std::vector<std::size_t>& prefix, std::vector<std::size_t>& pool,
               std::size_t& next, double& gap) {
    const int d = index.dimension();
    const std::span<const double> x(index.slot_point(current), static_cast<std::size_t>(d));
    for (int redraw = 0; redraw < 32; ++redraw) {
        const double t = diameter * (1.0 - uniform01(rng));
        const double lo = std::max(0.0, t - eps_ref), hi = t + eps_ref;
        blocks.clear();
        index.shell_blocks(x, lo, hi, blocks);
        prefix.assign(1, 0);
        for (const auto& b : blocks) prefix.push_back(prefix.back() + (b.end - b.begin));
        const std::size_t total = prefix.back();
        if (total == 0) continue;
        const auto accept = [&](std::size_t slot, double& r) {
            if (slot == current) return false;
            const double* p = index.slot_point(slot);
            double s2 = 0.0;
            for (int a = 0; a < d; ++a) {
                const double diff = p[a] - x[a];
                s2 += diff * diff;
            }
            r = std::sqrt(s2);
            return r > 0.0 && r >= lo && r <= hi;
        };
        for (int attempt = 0; attempt < 64; ++attempt) {
            const std::size_t u = uniform_below(rng, total);
            const std::size_t bi =
                static_cast<std::size_t>(std::upper_bound(prefix.begin(), prefix.end(), u) - prefix.begin()) - 1;
            const std::size_t slot = blocks[bi].begin + (u - prefix[bi]);
            double r = 0.0;
            if (accept(slot, r)) {
                next = slot;
                gap = r;
                return true;
            }
        }
        // sparse shell: enumerate it, which keeps the choice uniform
        pool.clear();
        for (const auto& b : blocks)
            for (std::size_t s = b.begin; s < b.end; ++s) {
                double r = 0.0;
                if (accept(s, r)) pool.push_back(s);
            }
        if (pool.empty()) continue;
        next = pool[uniform_below(rng, pool.size())];
        const double* p = index.slot_point(next);
        double s2 = 0.0;
        for (int a = 0; a < d; ++a) s2 += (p[a] - x[a]) * (p[a] - x[a]);
        gap = std::sqrt(s2);
        return true;
    }
    return false;
}

DistSetReport sampled_walks(const GridIndex& index, const PointCloudMeasure& cloud, int k, double eta,
                            const DistSetOptions& options) {
    require(k >= 1, "distance_set_volume: k must be >= 1");
    require(options.samples >= 1, "distance_set_volume: need at least one sample");
    const double diameter = cloud.diameter();
    const double eps_ref = options.eps_ref.value_or(diameter / 32.0);
    require(std::isfinite(eps_ref) && eps_ref > 0.0, "distance_set_volume: reference eps must be positive");
    const std::size_t nb = box_count_per_axis(cloud, eta);
    const int bits = std::max(1, static_cast<int>(std::bit_width(nb)));
    if (bits * k > 64) throw CapacityError("distance_set_volume: box keys do not fit in 64 bits");

    DistSetReport report;
    report.k = k;
    report.eta = eta;
    report.mode = DistSetMode::sampled;
    report.eps_ref = eps_ref;

    const std::size_t n = index.size();
    std::vector<double> cumulative(n);
    double acc = 0.0;
    for (std::size_t s = 0; s < n; ++s) {
        acc += index.slot_weight(s);
        cumulative[s] = acc;
    }

    constexpr std::size_t block = 4096;
    const std::size_t blocks_total = (options.samples + block - 1) / block;
    std::vector<std::vector<std::uint64_t>> keys(blocks_total);
    parallel_for(blocks_total, [&](std::size_t begin, std::size_t end) {
        std::vector<SlotRange> shell;
        std::vector<std::size_t> prefix, pool;
        for (std::size_t bi = begin; bi < end; ++bi) {
            Rng rng(derive_seed(options.seed, bi));
            const std::size_t count = std::min(block, options.samples - bi * block);
            auto& out = keys[bi];
            out.reserve(count);
            for (std::size_t i = 0; i < count; ++i) {
                const double u = uniform01(rng) * acc;
                std::size_t cur = static_cast<std::size_t>(
                    std::upper_bound(cumulative.begin(), cumulative.end(), u) - cumulative.begin());
                cur = std::min(cur, n - 1);
                std::uint64_t key = 0;
                bool ok = true;
                for (int step = 0; step < k && ok; ++step) {
                    std::size_t next = 0;
                    double gap = 0.0;
                    ok = walk_step(index, diameter, eps_ref, cur, rng, shell, prefix, pool, next, gap);
                    if (!ok) break;
                    const auto b = std::min(static_cast<std::uint64_t>(std::floor(gap / eta)),
                                            static_cast<std::uint64_t>(nb - 1));
                    key = (key << bits) | b;
                    cur = next;
                }
                if (ok) out.push_back(key);
            }
        }
    });

    std::unordered_set<std::uint64_t> occupied;
    for (const auto& out : keys) {
        report.samples += out.size();
        occupied.insert(out.begin(), out.end());
    }
    report.occupied = occupied.size();
    report.volume = static_cast<double>(report.occupied) * std::pow(eta, k);
    return report;
}

}  // namespace

DistSetReport distance_set_volume(const GridIndex& index, const PointCloudMeasure& cloud, int k, double eta,
                                  const DistSetOptions& options) {
    check_same_cloud(index, cloud);
    require(std::isfinite(eta) && eta > 0.0, "distance_set_volume: eta must be positive");
    require(k >= 1, "distance_set_volume: k must be >= 1");
    if (cloud.size() < 2 || cloud.diameter() == 0.0) {
        DistSetReport empty;
        empty.k = k;
        empty.eta = eta;
        empty.mode = options.mode;
        if (options.mode == DistSetMode::sampled) empty.eps_ref = options.eps_ref.value_or(0.0);
        return empty;
    }
    if (options.mode == DistSetMode::exact_pairs) return exact_pairs(cloud, k, eta);
    return sampled_walks(index, cloud, k, eta, options);
}

}  // namespace chainlab
