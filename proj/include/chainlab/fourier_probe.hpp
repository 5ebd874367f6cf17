#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "chainlab/chain_engine.hpp"
#include "chainlab/measures.hpp"

namespace chainlab {

/// sum_j f(x_j) w_j exp(-2 pi i x_j . xi), with f = 1 when absent.
std::complex<double> mu_hat(const PointCloudMeasure& cloud, const DensityField* f, std::span<const double> xi);

struct McEstimate {
    double estimate = 0.0;
    double standard_error = 0.0;
    std::size_t samples = 0;
};

/// Monte Carlo estimate of the integral of |mu_hat|^2 over R <= |xi| <= 2R,
/// from uniform draws in the shell.
McEstimate shell_energy(const PointCloudMeasure& cloud, double R, std::size_t samples, std::uint64_t seed);

/// Frequencies where the cloud still resolves the measure:
/// 1/diameter <= |xi| <= 1/(4 min_spacing).
struct FrequencyWindow {
    double lo = 0.0;
    double hi = 0.0;
};

FrequencyWindow frequency_window(const PointCloudMeasure& cloud);

/// Dyadic radii R, R/2, ... with the whole shell [R, 2R] inside the window,
/// largest first, at most max_rungs of them.
std::vector<double> dyadic_shell_radii(const FrequencyWindow& window, int max_rungs);

struct ShellEnergyReport {
    std::vector<double> radii;  // increasing
    std::vector<double> energies;
    std::vector<double> standard_errors;
    std::optional<double> exponent;  // slope of log energy vs log R
    double fit_residual = 0.0;
    std::size_t samples = 0;         // per shell
};

ShellEnergyReport shell_energy_scan(const PointCloudMeasure& cloud, std::vector<double> radii, std::size_t samples,
                                    std::uint64_t seed);

struct EnergyIntegralResult {
    double alpha = 0.0;
    double r_max = 0.0;
    double value = 0.0;
    double standard_error = 0.0;
    std::size_t samples = 0;
};

/// Monte Carlo estimate of the integral of |f mu_hat|^2 |xi|^-alpha over
/// |xi| <= r_max. Radii are drawn with density proportional to
/// r^(d-1-alpha), stratified in the radial CDF; directions are uniform.
EnergyIntegralResult energy_integral(const PointCloudMeasure& cloud, const DensityField* f, double alpha,
                                     double r_max, std::size_t samples, std::uint64_t seed);

/// sup_x sum_{y : |x - y| > 0} |x - y|^(alpha - d) w_y.
double schur_bound(const PointCloudMeasure& cloud, double alpha);

}  // namespace chainlab
