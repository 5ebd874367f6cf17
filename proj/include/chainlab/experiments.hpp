#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "chainlab/measures.hpp"
#include "chainlab/spatial_index.hpp"

namespace chainlab {

struct LadderOptions {
    /// Every rung must be >= factor * min_spacing; 0 disables the guard.
    double discreteness_factor = 3.0;
};

/// Validates an eps ladder: strictly decreasing, above the discreteness
/// guard, below the smallest gap.
void check_eps_ladder(const PointCloudMeasure& cloud, std::span<const double> gaps, std::span<const double> ladder,
                      const LadderOptions& options);

/// rungs = 2^-first .. 2^-last times the cloud diameter
std::vector<double> dyadic_eps_ladder(const PointCloudMeasure& cloud, int first, int last);

struct ScalingReport {
    int k = 0;
    std::vector<double> gaps;
    std::vector<double> eps;
    std::vector<double> masses;     // mu^{k+1} of the eps-band event
    std::vector<double> densities;  // C_k^eps = mass / (2 eps)^k
    std::optional<double> slope;    // log mass vs log eps; empty when any mass is 0
    double fit_residual = 0.0;
};

ScalingReport eps_scaling(const GridIndex& index, const PointCloudMeasure& cloud, std::span<const double> gaps,
                          std::span<const double> ladder, const LadderOptions& options = {});

struct ThresholdRule {
    enum class Kind { fraction_of_median, absolute };
    Kind kind = Kind::fraction_of_median;
    double value = 0.1;
};

struct GapInterval {
    double lo = 0.0;
    double hi = 0.0;
    std::size_t first = 0;  // grid positions, inclusive
    std::size_t last = 0;
};

struct GapScanReport {
    int k = 1;
    double eps = 0.0;
    std::vector<double> grid;
    std::vector<double> densities;
    std::optional<GapInterval> interval;
    double threshold = 0.0;
    ThresholdRule rule;
};

/// n interior points lo + (hi - lo) (i + 1) / (n + 1).
std::vector<double> open_grid(double lo, double hi, int n);

/// Chain density with all k gaps equal to each grid value. The reported
/// interval is the maximal run of grid points with positive density at or
/// above the threshold that contains the densest grid point.
GapScanReport gap_interval_scan(const GridIndex& index, const PointCloudMeasure& cloud, int k,
                                std::span<const double> grid, double eps, ThresholdRule rule = {});

struct EpsLadderResult {
    std::vector<double> eps;
    std::vector<double> densities;
    double m_est = 0.0;                // NaN when the limit is undefined
    std::vector<double> residuals;     // density - m_est
    std::optional<double> beta;        // density ~ M + A eps^beta
    double amplitude = 0.0;
    double fit_rms = 0.0;
    bool converged = true;
    bool degenerate = false;           // densities constant (or all zero): beta not fitted
    bool atomic_regime = false;        // raw band masses constant: densities grow like eps^-k
    std::string note;
};

/// Fits density = M + A eps^beta, beta in (0, 4], by a beta scan with
/// golden-section refinement and linear least squares for (M, A).
EpsLadderResult fit_eps_limit(std::span<const double> eps, std::span<const double> densities, int k);

EpsLadderResult density_limit(const GridIndex& index, const PointCloudMeasure& cloud, std::span<const double> gaps,
                              std::span<const double> ladder, const LadderOptions& options = {});

enum class DistSetMode { exact_pairs, sampled };

struct DistSetOptions {
    DistSetMode mode = DistSetMode::exact_pairs;
    std::size_t samples = 1'000'000;
    std::uint64_t seed = 0;
    std::optional<double> eps_ref;  // sampled mode; default diameter / 32
};

struct DistSetReport {
    int k = 1;
    double eta = 0.0;
    std::size_t occupied = 0;
    double volume = 0.0;
    std::size_t samples = 0;
    DistSetMode mode = DistSetMode::exact_pairs;
    double eps_ref = 0.0;
};

/// Counts eta-boxes of R^k hit by gap vectors (|x^2 - x^1|, ..., |x^{k+1} - x^k|)
/// with consecutive vertices distinct; volume = count * eta^k.
DistSetReport distance_set_volume(const GridIndex& index, const PointCloudMeasure& cloud, int k, double eta,
                                  const DistSetOptions& options = {});

}  // namespace chainlab
