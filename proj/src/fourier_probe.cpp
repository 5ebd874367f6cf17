#include "chainlab/fourier_probe.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "chainlab/errors.hpp"
#include "chainlab/parallel.hpp"
#include "chainlab/random.hpp"
#include "chainlab/stats.hpp"

namespace chainlab {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr std::size_t kSampleBlock = 1024;

std::vector<double> field_weights(const PointCloudMeasure& cloud, const DensityField* f) {
    std::vector<double> fw(cloud.weights().begin(), cloud.weights().end());
    if (f) {
        require(f->values.size() == cloud.size(), "mu_hat: field is not aligned with the cloud");
        for (std::size_t i = 0; i < fw.size(); ++i) fw[i] *= f->values[i];
    }
    return fw;
}

std::complex<double> transform(const double* coords, const std::vector<double>& fw, int d, const double* xi) {
    double re = 0.0, im = 0.0;
    for (std::size_t j = 0; j < fw.size(); ++j) {
        double dot = 0.0;
        for (int a = 0; a < d; ++a) dot += coords[j * d + a] * xi[a];
        const double phase = -kTwoPi * dot;
        re += fw[j] * std::cos(phase);
        im += fw[j] * std::sin(phase);
    }
    return {re, im};
}

void random_direction(Rng& rng, int d, double* out) {
    double norm2 = 0.0;
    do {
        norm2 = 0.0;
        for (int a = 0; a < d; ++a) {
            out[a] = standard_normal(rng);
            norm2 += out[a] * out[a];
        }
    } while (norm2 == 0.0);
    const double inv = 1.0 / std::sqrt(norm2);
    for (int a = 0; a < d; ++a) out[a] *= inv;
}

// Mean and standard error of per-sample values, summed in sample order.
McEstimate summarize(const std::vector<double>& values) {
    McEstimate m;
    m.samples = values.size();
    const double n = static_cast<double>(values.size());
    m.estimate = compensated_sum(values) / n;
    std::vector<double> sq(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) sq[i] = (values[i] - m.estimate) * (values[i] - m.estimate);
    const double var = values.size() > 1 ? compensated_sum(sq) / (n - 1.0) : 0.0;
    m.standard_error = std::sqrt(var / n);
    return m;
}

// values[i] = sample(i, rng) with one stream per block of samples.
template <class F>
std::vector<double> draw_samples(std::size_t samples, std::uint64_t seed, F&& sample) {
    std::vector<double> values(samples);
    const std::size_t blocks = (samples + kSampleBlock - 1) / kSampleBlock;
    parallel_for(blocks, [&](std::size_t begin, std::size_t end) {
        for (std::size_t b = begin; b < end; ++b) {
            Rng rng(derive_seed(seed, b));
            const std::size_t stop = std::min(samples, (b + 1) * kSampleBlock);
            for (std::size_t i = b * kSampleBlock; i < stop; ++i) values[i] = sample(i, rng);
        }
    });
    return values;
}

}  // namespace

std::complex<double> mu_hat(const PointCloudMeasure& cloud, const DensityField* f, std::span<const double> xi) {
    require(xi.size() == static_cast<std::size_t>(cloud.dimension()), "mu_hat: frequency has wrong dimension");
    for (const double v : xi) require(std::isfinite(v), "mu_hat: frequency must be finite");
    const auto fw = field_weights(cloud, f);
    return transform(cloud.coords().data(), fw, cloud.dimension(), xi.data());
}

McEstimate shell_energy(const PointCloudMeasure& cloud, double R, std::size_t samples, std::uint64_t seed) {
    require(std::isfinite(R) && R > 0.0, "shell_energy: R must be positive");
    require(samples >= 1000, "shell_energy: need at least 1000 samples");
    const int d = cloud.dimension();
    const double volume = unit_sphere_area(d) / d * (std::pow(2.0 * R, d) - std::pow(R, d));
    const double lo_d = std::pow(R, d), hi_d = std::pow(2.0 * R, d);
    const auto fw = field_weights(cloud, nullptr);
    const double* coords = cloud.coords().data();
    const auto values = draw_samples(samples, seed, [&](std::size_t, Rng& rng) {
        std::vector<double> xi(static_cast<std::size_t>(d));
        random_direction(rng, d, xi.data());
        const double r = std::pow(lo_d + (hi_d - lo_d) * uniform01(rng), 1.0 / d);
        for (auto& v : xi) v *= r;
        return std::norm(transform(coords, fw, d, xi.data()));
    });
    auto m = summarize(values);
    m.estimate *= volume;
    m.standard_error *= volume;
    return m;
}

FrequencyWindow frequency_window(const PointCloudMeasure& cloud) {
    if (cloud.diameter() == 0.0 || cloud.min_spacing() == 0.0)
        throw UndefinedError("frequency window: cloud has no nonzero spacing");
    return {1.0 / cloud.diameter(), 1.0 / (4.0 * cloud.min_spacing())};
}

std::vector<double> dyadic_shell_radii(const FrequencyWindow& window, int max_rungs) {
    require(max_rungs >= 1, "dyadic_shell_radii: need at least one rung");
    std::vector<double> radii;
    for (double R = window.hi / 2.0; R >= window.lo && static_cast<int>(radii.size()) < max_rungs; R /= 2.0)
        radii.push_back(R);
    return radii;
}

ShellEnergyReport shell_energy_scan(const PointCloudMeasure& cloud, std::vector<double> radii, std::size_t samples,
                                    std::uint64_t seed) {
    require(!radii.empty(), "shell_energy_scan: no radii");
    std::sort(radii.begin(), radii.end());
    ShellEnergyReport report;
    report.radii = radii;
    report.samples = samples;
    for (std::size_t j = 0; j < radii.size(); ++j) {
        const auto m = shell_energy(cloud, radii[j], samples, derive_seed(seed, j));
        report.energies.push_back(m.estimate);
        report.standard_errors.push_back(m.standard_error);
    }
    const bool positive =
        std::all_of(report.energies.begin(), report.energies.end(), [](double e) { return e > 0.0; });
    if (radii.size() >= 2 && positive) {
        const auto fit = log_log_fit(report.radii, report.energies);
        report.exponent = fit.slope;
        report.fit_residual = fit.rms_residual;
    }
    return report;
}

EnergyIntegralResult energy_integral(const PointCloudMeasure& cloud, const DensityField* f, double alpha,
                                     double r_max, std::size_t samples, std::uint64_t seed) {
    const int d = cloud.dimension();
    require(std::isfinite(alpha) && alpha > 0.0 && alpha < d, "energy_integral: alpha must lie in (0, d)");
    require(std::isfinite(r_max) && r_max > 0.0, "energy_integral: R_max must be positive");
    require(samples >= 1, "energy_integral: need at least one sample");
    const auto fw = field_weights(cloud, f);
    const double* coords = cloud.coords().data();
    const double power = d - alpha;
    const double scale = unit_sphere_area(d) * std::pow(r_max, power) / power;
    const double n = static_cast<double>(samples);
    const auto values = draw_samples(samples, seed, [&](std::size_t i, Rng& rng) {
        const double u = (static_cast<double>(i) + uniform01(rng)) / n;
        const double r = r_max * std::pow(u, 1.0 / power);
        std::vector<double> xi(static_cast<std::size_t>(d));
        random_direction(rng, d, xi.data());
        for (auto& v : xi) v *= r;
        return std::norm(transform(coords, fw, d, xi.data()));
    });
    const auto m = summarize(values);
    EnergyIntegralResult result;
    result.alpha = alpha;
    result.r_max = r_max;
    result.value = m.estimate * scale;
    result.standard_error = m.standard_error * scale;
    result.samples = samples;
    return result;
}

double schur_bound(const PointCloudMeasure& cloud, double alpha) {
    const int d = cloud.dimension();
    require(std::isfinite(alpha) && alpha < d, "schur_bound: alpha must be below d");
    const std::size_t n = cloud.size();
    if (n < 2) return 0.0;
    const double half_power = 0.5 * (alpha - d);
    const double* coords = cloud.coords().data();
    std::vector<double> rows(n, 0.0);
    parallel_for(n, [&](std::size_t begin, std::size_t end) {
        for (std::size_t x = begin; x < end; ++x) {
            double sum = 0.0;
            for (std::size_t y = 0; y < n; ++y) {
                double s2 = 0.0;
                for (int a = 0; a < d; ++a) {
                    const double diff = coords[x * d + a] - coords[y * d + a];
                    s2 += diff * diff;
                }
                if (s2 > 0.0) sum += std::exp(half_power * std::log(s2)) * cloud.weight(y);
            }
            rows[x] = sum;
        }
    });
    return *std::max_element(rows.begin(), rows.end());
}

}  // namespace chainlab
