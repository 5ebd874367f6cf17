#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "chainlab/measures.hpp"
#include "chainlab/random.hpp"
#include "chainlab/spatial_index.hpp"

namespace chainlab {

enum class KernelNormalization {
    band,        // 1/(2 eps) on the closed band |r - t| <= eps
    probability  // band value divided by the sphere area |S^{d-1}| t^{d-1}
};

/// Thickened spherical kernel with a box radial profile.
struct AnnulusKernel {
    double t;
    double eps;
    KernelNormalization mode = KernelNormalization::band;
    int dimension = 0;  // required for probability mode

    AnnulusKernel(double t, double eps, KernelNormalization mode = KernelNormalization::band,
                  int dimension = 0);

    double lower() const { return t - eps; }
    double upper() const { return t + eps; }
    /// Kernel value anywhere inside the band.
    double band_value() const;
};

double kernel_eval(const AnnulusKernel& kernel, double r);

/// Surface area of the unit sphere S^{d-1} in R^d.
double unit_sphere_area(int d);

/// Scalar function on cloud points, aligned with cloud indices.
struct DensityField {
    std::vector<double> values;
    std::vector<std::pair<double, double>> gaps_applied;  // (t, eps) in application order

    static DensityField constant(std::size_t n, double value = 1.0);
};

/// (T f)(x) = sum over band neighbours y != x of K(|x - y|) f(y) w_y.
DensityField apply_spherical_operator(const GridIndex& index, const PointCloudMeasure& cloud,
                                      const DensityField& f, const AnnulusKernel& kernel);

/// Fields f_0 = 1, f_j = T_j f_{j-1} for the band kernels (gaps[j-1], eps).
std::vector<DensityField> chain_fields(const GridIndex& index, const PointCloudMeasure& cloud,
                                       std::span<const double> gaps, double eps);

/// C_k^eps = sum_x f_k(x) w_x.
double chain_density(const GridIndex& index, const PointCloudMeasure& cloud, std::span<const double> gaps,
                     double eps);

inline constexpr double kBruteForceTermLimit = 1e9;

/// Direct (k+1)-fold sum over index tuples with consecutive vertices
/// distinct. Zero kernel factors prune their subtree, which leaves the sum
/// exact. Throws CapacityError when N^(k+1) exceeds max_terms.
double chain_density_bruteforce(const PointCloudMeasure& cloud, std::span<const double> gaps, double eps,
                                double max_terms = kBruteForceTermLimit);

/// Vertex pair counts as coincident when closer than delta, or at the same
/// location.
inline bool vertices_coincide(double distance, double delta) { return distance < delta || distance == 0.0; }

struct Chain {
    std::vector<std::size_t> vertices;  // x^1 .. x^{k+1}
    std::vector<double> gaps;           // |x^{i+1} - x^i|
    double weight = 0.0;
    bool degenerate = false;
};

/// True when some vertex pair of the chain coincides at threshold delta.
bool chain_is_degenerate(const PointCloudMeasure& cloud, const Chain& chain, double delta);

struct GoodSet {
    int level = 1;
    double threshold = 0.0;
    std::vector<std::size_t> members;
    double mass = 0.0;
};

/// Points whose operator value against mu (or mu restricted to the given
/// set) exceeds c.
GoodSet good_set_extract(const GridIndex& index, const PointCloudMeasure& cloud, const GoodSet* restriction,
                         const AnnulusKernel& kernel, double c);

/// G(1), ..., G(levels) with c(j+1) = c(j) mass(G(j)) / 2.
std::vector<GoodSet> good_set_schedule(const GridIndex& index, const PointCloudMeasure& cloud,
                                       const AnnulusKernel& kernel, double c1, int levels);

/// Exact sampler for the discrete eps-approximate chain measure. The last
/// vertex is drawn with probability f_k(x) w_x / C, then each earlier vertex
/// among band neighbours with probability proportional to
/// K f_{j-1}(y) w_y. Inversion follows the index's slot order.
class ChainSampler {
public:
    ChainSampler(const GridIndex& index, const PointCloudMeasure& cloud, std::vector<double> gaps, double eps,
                 std::optional<double> delta = std::nullopt);

    double density() const { return density_; }
    bool empty() const { return !(density_ > 0.0); }
    const std::vector<DensityField>& fields() const { return fields_; }
    double delta() const { return delta_; }

    Chain draw(Rng& rng) const;

private:
    const GridIndex* index_;
    const PointCloudMeasure* cloud_;
    std::vector<double> gaps_;
    double eps_;
    double delta_;
    std::vector<DensityField> fields_;
    std::vector<double> last_cumulative_;
    double density_ = 0.0;
};

std::vector<Chain> sample_chains(const GridIndex& index, const PointCloudMeasure& cloud,
                                 std::span<const double> gaps, double eps, std::size_t n, std::uint64_t seed,
                                 std::optional<double> delta = std::nullopt);

struct DegeneracyOptions {
    std::optional<double> delta;        // default eps
    double exact_work_budget = 4e8;     // estimated inner-loop visits allowed for the exact path
    bool force_exact = false;
    std::size_t samples = 20000;        // sampled path
    std::uint64_t seed = 0;
};

struct DegenerateFraction {
    double value = 0.0;
    double standard_error = 0.0;
    bool exact = true;
    std::size_t samples = 0;
    double delta = 0.0;
    double density = 0.0;
    double degenerate_mass = 0.0;  // exact path only
};

/// Share of the eps-approximate chain mass carried by chains with a
/// coincident vertex pair. Exact for k <= 3 when the estimated enumeration
/// work fits the budget; otherwise estimated from sampled chains with a
/// binomial standard error.
DegenerateFraction degenerate_mass_fraction(const GridIndex& index, const PointCloudMeasure& cloud,
                                            std::span<const double> gaps, double eps,
                                            const DegeneracyOptions& options = {});

/// Exact coincident-chain mass via backward enumeration. Prefixes that
/// already coincide are closed with the cached field value, and the first
/// vertex is enumerated only inside delta-balls of the fixed vertices.
double degenerate_mass_exact(const GridIndex& index, const PointCloudMeasure& cloud,
                             std::span<const double> gaps, double eps, double delta);

std::optional<Chain> find_nondegenerate_chain(const GridIndex& index, const PointCloudMeasure& cloud,
                                              std::span<const double> gaps, double eps, double delta,
                                              std::uint64_t seed, std::size_t max_draws);

}  // namespace chainlab
