#include "chainlab/measures.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numeric>
#include <unordered_map>

#include "chainlab/errors.hpp"
#include "chainlab/parallel.hpp"
#include "chainlab/random.hpp"
#include "chainlab/stats.hpp"

namespace chainlab {

namespace {

std::atomic<std::uint64_t> g_next_cloud_id{1};

constexpr double kWeightTolerance = 1e-12;

double squared_distance(const double* a, const double* b, int d) {
    double s = 0.0;
    for (int k = 0; k < d; ++k) {
        const double diff = a[k] - b[k];
        s += diff * diff;
    }
    return s;
}

// Exact diameter: a farthest-point sweep gives a lower bound, then only
// points whose farthest bounding-box corner could beat it are compared.
double compute_diameter(int d, const std::vector<double>& coords, std::size_t n) {
    if (n < 2) return 0.0;
    const double* c = coords.data();
    std::size_t a = 0;
    double best2 = 0.0;
    for (int sweep = 0; sweep < 4; ++sweep) {
        std::size_t far = a;
        double far2 = -1.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double s = squared_distance(c + a * d, c + i * d, d);
            if (s > far2) {
                far2 = s;
                far = i;
            }
        }
        if (far2 <= best2 && sweep > 0) break;
        best2 = std::max(best2, far2);
        a = far;
    }
    std::vector<double> lo(d, std::numeric_limits<double>::infinity());
    std::vector<double> hi(d, -std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < n; ++i) {
        for (int k = 0; k < d; ++k) {
            lo[k] = std::min(lo[k], c[i * d + k]);
            hi[k] = std::max(hi[k], c[i * d + k]);
        }
    }
    std::vector<std::size_t> candidates;
    const double cutoff = best2 * (1.0 - 1e-12);
    for (std::size_t i = 0; i < n; ++i) {
        double far2 = 0.0;
        for (int k = 0; k < d; ++k) {
            const double e = std::max(c[i * d + k] - lo[k], hi[k] - c[i * d + k]);
            far2 += e * e;
        }
        if (far2 >= cutoff) candidates.push_back(i);
    }
    for (std::size_t p = 0; p < candidates.size(); ++p) {
        for (std::size_t q = p + 1; q < candidates.size(); ++q) {
            best2 = std::max(best2, squared_distance(c + candidates[p] * d, c + candidates[q] * d, d));
        }
    }
    return std::sqrt(best2);
}

struct CellHash {
    std::size_t operator()(const std::vector<std::int64_t>& key) const {
        std::uint64_t h = 0x84222325cbf29ce4ULL;
        for (const auto v : key) h = splitmix64(h ^ static_cast<std::uint64_t>(v));
        return static_cast<std::size_t>(h);
    }
};

// Exact smallest nonzero spacing by grid bucketing. Any pair closer than the
// cell size lies in adjacent cells, so once a nonzero pair within one cell
// width has been found the minimum over adjacent cells is the global one.
double compute_min_spacing(int d, const std::vector<double>& coords, std::size_t n, double diameter) {
    if (n < 2 || diameter <= 0.0) return 0.0;
    const double* c = coords.data();
    std::vector<double> lo(d, std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < n; ++i)
        for (int k = 0; k < d; ++k) lo[k] = std::min(lo[k], c[i * d + k]);

    double h = diameter / std::ceil(std::pow(static_cast<double>(n), 1.0 / d));
    for (;;) {
        std::unordered_map<std::vector<std::int64_t>, std::vector<std::size_t>, CellHash> cells;
        std::vector<std::int64_t> key(d);
        for (std::size_t i = 0; i < n; ++i) {
            for (int k = 0; k < d; ++k)
                key[k] = static_cast<std::int64_t>(std::floor((c[i * d + k] - lo[k]) / h));
            cells[key].push_back(i);
        }
        double best2 = std::numeric_limits<double>::infinity();
        std::vector<std::int64_t> offset(d), probe(d);
        for (const auto& [cell, members] : cells) {
            std::fill(offset.begin(), offset.end(), -1);
            for (;;) {
                for (int k = 0; k < d; ++k) probe[k] = cell[k] + offset[k];
                auto it = cells.find(probe);
                if (it != cells.end()) {
                    for (const auto i : members) {
                        for (const auto j : it->second) {
                            if (j <= i) continue;
                            const double s = squared_distance(c + i * d, c + j * d, d);
                            if (s > 0.0 && s < best2) best2 = s;
                        }
                    }
                }
                int k = 0;
                while (k < d && offset[k] == 1) offset[k++] = -1;
                if (k == d) break;
                ++offset[k];
            }
        }
        if (best2 <= h * h) return std::sqrt(best2);
        if (h > 2.0 * diameter) return std::isfinite(best2) ? std::sqrt(best2) : 0.0;
        h *= 4.0;
    }
}

}  // namespace

double euclidean_distance(std::span<const double> a, std::span<const double> b) {
    return std::sqrt(squared_distance(a.data(), b.data(), static_cast<int>(a.size())));
}

PointCloudMeasure::PointCloudMeasure(int dimension, std::vector<double> coords,
                                     std::vector<double> weights)
    : dimension_(dimension), coords_(std::move(coords)), weights_(std::move(weights)) {
    require(dimension_ >= 1, "cloud: dimension must be >= 1");
    require(!weights_.empty(), "cloud: at least one point is required");
    require(coords_.size() == weights_.size() * static_cast<std::size_t>(dimension_),
            "cloud: coordinate count does not match weights * dimension");
    for (const double w : weights_)
        require(std::isfinite(w) && w >= 0.0, "cloud: weights must be finite and non-negative");
    const double total = compensated_sum(weights_);
    require(std::abs(total - 1.0) <= kWeightTolerance, "cloud: weights must sum to 1");
    for (const double x : coords_) require(std::isfinite(x), "cloud: coordinates must be finite");
    diameter_ = compute_diameter(dimension_, coords_, weights_.size());
    min_spacing_ = compute_min_spacing(dimension_, coords_, weights_.size(), diameter_);
    id_ = g_next_cloud_id.fetch_add(1);
}

double PointCloudMeasure::distance(std::size_t i, std::size_t j) const {
    return euclidean_distance(point(i), point(j));
}

void IfsSpec::validate() const {
    require(dimension >= 1, "ifs: dimension must be >= 1");
    require(!maps.empty(), "ifs: at least one map is required");
    for (const auto& m : maps) {
        require(m.ratio > 0.0 && m.ratio < 1.0, "ifs: every ratio must lie in (0, 1)");
        require(m.translation.size() == static_cast<std::size_t>(dimension),
                "ifs: translation length must equal dimension");
        for (const double v : m.translation) require(std::isfinite(v), "ifs: translation must be finite");
    }
    if (!weights.empty()) {
        require(weights.size() == maps.size(), "ifs: one weight per map is required");
        double total = 0.0;
        for (const double w : weights) {
            require(std::isfinite(w) && w >= 0.0, "ifs: weights must be non-negative");
            total += w;
        }
        require(std::abs(total - 1.0) <= kWeightTolerance, "ifs: weights must sum to 1");
    }
}

std::vector<double> IfsSpec::resolved_weights() const {
    if (!weights.empty()) return weights;
    return std::vector<double>(maps.size(), 1.0 / static_cast<double>(maps.size()));
}

std::vector<double> IfsSpec::first_fixed_point() const {
    validate();
    const auto& m = maps.front();
    std::vector<double> x(dimension);
    for (int k = 0; k < dimension; ++k) x[k] = m.translation[k] / (1.0 - m.ratio);
    return x;
}

PointCloudMeasure ifs_generate(const IfsSpec& spec, int level,
                               std::optional<std::vector<double>> seed_point) {
    spec.validate();
    require(level >= 0, "ifs_generate: level must be non-negative");
    const std::size_t m = spec.maps.size();
    std::size_t count = 1;
    for (int l = 0; l < level; ++l) {
        if (count > kMaxGeneratedPoints / m)
            throw CapacityError("ifs_generate: (map count)^level exceeds " +
                                std::to_string(kMaxGeneratedPoints) + " points");
        count *= m;
    }
    const int d = spec.dimension;
    std::vector<double> seed = seed_point ? *seed_point : spec.first_fixed_point();
    require(seed.size() == static_cast<std::size_t>(d), "ifs_generate: seed point has wrong dimension");

    const auto map_weights = spec.resolved_weights();
    std::vector<double> coords = seed;
    std::vector<double> weights{1.0};
    for (int l = 0; l < level; ++l) {
        const std::size_t n = weights.size();
        std::vector<double> next_coords(n * m * d);
        std::vector<double> next_weights(n * m);
        for (std::size_t i = 0; i < m; ++i) {
            const auto& map = spec.maps[i];
            for (std::size_t p = 0; p < n; ++p) {
                const std::size_t q = i * n + p;
                for (int k = 0; k < d; ++k)
                    next_coords[q * d + k] = map.ratio * coords[p * d + k] + map.translation[k];
                next_weights[q] = map_weights[i] * weights[p];
            }
        }
        coords = std::move(next_coords);
        weights = std::move(next_weights);
    }
    // Products of the map weights can drift from 1 by a few ulps per level.
    const double total = compensated_sum(weights);
    if (total > 0.0 && total != 1.0)
        for (auto& w : weights) w /= total;
    return PointCloudMeasure(d, std::move(coords), std::move(weights));
}

IfsSpec four_corner_cantor(double ratio) {
    IfsSpec spec;
    spec.dimension = 2;
    const double far = 1.0 - ratio;
    for (const auto& t : {std::vector<double>{0.0, 0.0}, std::vector<double>{far, 0.0},
                          std::vector<double>{0.0, far}, std::vector<double>{far, far}}) {
        spec.maps.push_back({ratio, t});
    }
    return spec;
}

std::vector<double> geometric_ladder(double hi, double lo, int rungs) {
    require(rungs >= 2, "geometric_ladder: need at least two rungs");
    require(hi > lo && lo > 0.0, "geometric_ladder: need hi > lo > 0");
    std::vector<double> out(rungs);
    const double q = std::log(lo / hi) / (rungs - 1);
    for (int i = 0; i < rungs; ++i) out[i] = hi * std::exp(q * i);
    out.front() = hi;
    out.back() = lo;
    return out;
}

double ball_mass(const PointCloudMeasure& cloud, std::span<const double> center, double r) {
    double mass = 0.0;
    for (std::size_t i = 0; i < cloud.size(); ++i)
        if (euclidean_distance(cloud.point(i), center) <= r) mass += cloud.weight(i);
    return mass;
}

namespace {

void check_scale_range(const PointCloudMeasure& cloud, const std::vector<double>& scales,
                       const char* what) {
    if (cloud.size() < 2 || cloud.min_spacing() <= 0.0) return;
    const double lo = cloud.min_spacing() * (1.0 - 1e-9);
    const double hi = cloud.diameter() * (1.0 + 1e-9);
    for (const double r : scales)
        require(r >= lo && r <= hi,
                std::string(what) + ": every scale must lie within [min_spacing, diameter]");
}

std::vector<double> sorted_strictly_decreasing(std::vector<double> values, const char* what) {
    for (const double v : values)
        require(std::isfinite(v) && v > 0.0, std::string(what) + ": scales must be positive");
    std::sort(values.begin(), values.end(), std::greater<>());
    for (std::size_t i = 1; i < values.size(); ++i)
        require(values[i] < values[i - 1], std::string(what) + ": scales must be distinct");
    return values;
}

}  // namespace

BallConditionReport ball_condition_scan(const PointCloudMeasure& cloud, double s,
                                        std::vector<double> radii, CenterPlan centers,
                                        std::uint64_t seed) {
    const int d = cloud.dimension();
    require(s > 0.0 && s <= d, "ball_condition_scan: s must lie in (0, d]");
    require(!radii.empty(), "ball_condition_scan: radii ladder is empty");
    require(radii.size() >= 2, "ball_condition_scan: need at least two radii to fit an exponent");
    require(centers.max_centers >= 1, "ball_condition_scan: need at least one center");
    radii = sorted_strictly_decreasing(std::move(radii), "ball_condition_scan");
    check_scale_range(cloud, radii, "ball_condition_scan");

    const std::size_t n = cloud.size();
    std::vector<std::size_t> center_ids;
    if (n <= centers.max_centers) {
        center_ids.resize(n);
        std::iota(center_ids.begin(), center_ids.end(), 0);
    } else {
        std::vector<double> cumulative(n);
        std::partial_sum(cloud.weights().begin(), cloud.weights().end(), cumulative.begin());
        Rng rng(seed);
        center_ids.reserve(centers.max_centers);
        for (std::size_t c = 0; c < centers.max_centers; ++c) {
            const double u = uniform01(rng) * cumulative.back();
            auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
            center_ids.push_back(std::min<std::size_t>(it - cumulative.begin(), n - 1));
        }
    }

    // ascending copy for bucketing distances
    std::vector<double> ascending(radii.rbegin(), radii.rend());
    const std::size_t nr = radii.size();
    std::vector<double> per_center(center_ids.size() * nr);
    parallel_for(center_ids.size(), [&](std::size_t begin, std::size_t end) {
        std::vector<double> bucket(nr + 1);
        for (std::size_t c = begin; c < end; ++c) {
            std::fill(bucket.begin(), bucket.end(), 0.0);
            const auto x = cloud.point(center_ids[c]);
            for (std::size_t j = 0; j < n; ++j) {
                const double r = euclidean_distance(x, cloud.point(j));
                const auto b = std::lower_bound(ascending.begin(), ascending.end(), r) - ascending.begin();
                bucket[b] += cloud.weight(j);
            }
            double running = 0.0;
            for (std::size_t b = 0; b < nr; ++b) {
                running += bucket[b];
                per_center[c * nr + b] = running;  // mass within ascending[b]
            }
        }
    });

    BallConditionReport report;
    report.s = s;
    report.radii = radii;
    report.centers_sampled = center_ids.size();
    report.sup_mass.assign(nr, 0.0);
    for (std::size_t c = 0; c < center_ids.size(); ++c)
        for (std::size_t b = 0; b < nr; ++b)
            report.sup_mass[nr - 1 - b] = std::max(report.sup_mass[nr - 1 - b], per_center[c * nr + b]);
    report.max_ratio.resize(nr);
    for (std::size_t i = 0; i < nr; ++i) report.max_ratio[i] = report.sup_mass[i] / std::pow(radii[i], s);
    const auto fit = log_log_fit(report.radii, report.sup_mass);
    report.s_est = fit.slope;
    report.fit_residual = fit.rms_residual;
    return report;
}

DimensionEstimate box_dimension_estimate(const PointCloudMeasure& cloud, std::vector<double> box_sizes) {
    require(box_sizes.size() >= 3, "box_dimension_estimate: need at least three ladder rungs");
    box_sizes = sorted_strictly_decreasing(std::move(box_sizes), "box_dimension_estimate");
    check_scale_range(cloud, box_sizes, "box_dimension_estimate");

    const int d = cloud.dimension();
    const std::size_t n = cloud.size();
    std::vector<double> lo(d, std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < n; ++i)
        for (int k = 0; k < d; ++k) lo[k] = std::min(lo[k], cloud.point(i)[k]);

    DimensionEstimate est;
    est.box_sizes = box_sizes;
    std::vector<std::int64_t> keys(n * d);
    std::vector<std::size_t> order(n);
    for (const double h : box_sizes) {
        for (std::size_t i = 0; i < n; ++i)
            for (int k = 0; k < d; ++k)
                keys[i * d + k] = static_cast<std::int64_t>(std::floor((cloud.point(i)[k] - lo[k]) / h));
        std::iota(order.begin(), order.end(), 0);
        auto less = [&](std::size_t a, std::size_t b) {
            return std::lexicographical_compare(keys.begin() + a * d, keys.begin() + a * d + d,
                                                keys.begin() + b * d, keys.begin() + b * d + d);
        };
        std::sort(order.begin(), order.end(), less);
        std::int64_t count = n > 0 ? 1 : 0;
        for (std::size_t i = 1; i < n; ++i)
            if (less(order[i - 1], order[i])) ++count;
        est.counts.push_back(count);
    }
    std::vector<double> x, y;
    for (std::size_t i = 0; i < box_sizes.size(); ++i) {
        x.push_back(std::log(1.0 / box_sizes[i]));
        y.push_back(std::log(static_cast<double>(est.counts[i])));
    }
    const auto fit = least_squares(x, y);
    est.slope = fit.slope;
    est.intercept = fit.intercept;
    est.residual = fit.rms_residual;
    return est;
}

}  // namespace chainlab
