#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace chainlab {

/// One contraction x -> ratio * x + translation.
struct IfsMap {
    double ratio = 0.5;
    std::vector<double> translation;
};

/// Iterated function system of similarities with a probability vector.
/// An empty weight vector means uniform weights.
struct IfsSpec {
    int dimension = 2;
    std::vector<IfsMap> maps;
    std::vector<double> weights;

    /// Throws ValidationError on any broken invariant.
    void validate() const;
    std::vector<double> resolved_weights() const;
    /// Fixed point of the first map, the default generation seed.
    std::vector<double> first_fixed_point() const;
};

/// Finitely supported probability measure on R^d.
///
/// Coordinates are stored row-major (point i occupies
/// coords[i*d .. i*d + d)). Diameter and minimum nonzero spacing are
/// computed once at construction; instances are immutable afterwards and
/// safe to share between threads.
class PointCloudMeasure {
public:
    PointCloudMeasure(int dimension, std::vector<double> coords, std::vector<double> weights);

    int dimension() const { return dimension_; }
    std::size_t size() const { return weights_.size(); }
    std::span<const double> point(std::size_t i) const {
        return {coords_.data() + i * static_cast<std::size_t>(dimension_),
                static_cast<std::size_t>(dimension_)};
    }
    std::span<const double> coords() const { return coords_; }
    std::span<const double> weights() const { return weights_; }
    double weight(std::size_t i) const { return weights_[i]; }
    double diameter() const { return diameter_; }
    /// Smallest nonzero pairwise distance; 0 for single-point clouds or
    /// clouds made only of duplicates.
    double min_spacing() const { return min_spacing_; }
    /// Process-unique identity used to check that an index belongs to
    /// this cloud.
    std::uint64_t id() const { return id_; }

    double distance(std::size_t i, std::size_t j) const;

private:
    int dimension_;
    std::vector<double> coords_;
    std::vector<double> weights_;
    double diameter_ = 0.0;
    double min_spacing_ = 0.0;
    std::uint64_t id_ = 0;
};

double euclidean_distance(std::span<const double> a, std::span<const double> b);

/// Largest point count ifs_generate will produce.
inline constexpr std::size_t kMaxGeneratedPoints = 10'000'000;

/// Level-th images of seed_point under all compositions of the maps, with
/// product weights. Level L+1 is the union over maps i of S_i(level L), with
/// the block for map i stored contiguously.
PointCloudMeasure ifs_generate(const IfsSpec& spec, int level,
                               std::optional<std::vector<double>> seed_point = std::nullopt);

/// Four maps of the given ratio anchored at the corners of the unit cube
/// face in d = 2 (translations 0 and 1 - ratio per axis).
IfsSpec four_corner_cantor(double ratio);

/// Geometric ladder hi, hi*q, ..., lo with n rungs (strictly decreasing).
std::vector<double> geometric_ladder(double hi, double lo, int rungs);

struct BallConditionReport {
    double s = 0.0;            // exponent the ratios are normalized by
    double s_est = 0.0;        // fitted slope of log sup-mass vs log r
    double fit_residual = 0.0;
    std::vector<double> radii;        // strictly decreasing
    std::vector<double> sup_mass;     // sup over sampled centers of mu(B(x, r))
    std::vector<double> max_ratio;    // sup_mass / r^s
    std::size_t centers_sampled = 0;
};

struct CenterPlan {
    std::size_t max_centers = 4096;
};

BallConditionReport ball_condition_scan(const PointCloudMeasure& cloud, double s,
                                        std::vector<double> radii, CenterPlan centers = {},
                                        std::uint64_t seed = 0);

struct DimensionEstimate {
    double slope = 0.0;
    double intercept = 0.0;
    double residual = 0.0;
    std::vector<double> box_sizes;  // decreasing
    std::vector<std::int64_t> counts;
};

DimensionEstimate box_dimension_estimate(const PointCloudMeasure& cloud,
                                         std::vector<double> box_sizes);

/// Ball mass mu(B(center, r)), closed ball.
double ball_mass(const PointCloudMeasure& cloud, std::span<const double> center, double r);

}  // namespace chainlab
