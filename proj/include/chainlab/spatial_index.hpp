#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "chainlab/measures.hpp"

namespace chainlab {

struct Neighbor {
    std::size_t index;  // cloud point index
    double distance;
};

/// Contiguous run of slots (positions in the index's cell-major ordering).
struct SlotRange {
    std::size_t begin;
    std::size_t end;
};

/// Uniform-grid cell index over a point cloud.
///
/// Points are bucketed by floor((x - origin) / cell_size) and stored
/// cell-major (last axis fastest) with their coordinates and weights copied
/// into that order, so that a run of cells along the last axis is one
/// contiguous block of slots. Immutable after construction; concurrent
/// queries are safe.
class GridIndex {
public:
    GridIndex(const PointCloudMeasure& cloud, double cell_size,
              std::optional<std::vector<double>> origin = std::nullopt);

    int dimension() const { return dimension_; }
    double cell_size() const { return cell_size_; }
    std::span<const double> origin() const { return origin_; }
    std::span<const std::int64_t> extents() const { return extents_; }
    std::uint64_t cloud_id() const { return cloud_id_; }
    std::size_t size() const { return slot_index_.size(); }
    std::size_t occupied_cells() const { return keys_.size(); }

    std::vector<std::int64_t> cell_of(std::span<const double> x) const;
    /// Cloud indices stored in a cell, in input order.
    std::vector<std::size_t> cell_members(std::span<const std::int64_t> cell) const;
    /// Every occupied cell with its members, in cell-major order.
    std::map<std::vector<std::int64_t>, std::vector<std::size_t>> cells() const;
    /// occupancy -> number of cells with that many points
    std::map<std::size_t, std::size_t> occupancy_histogram() const;

    std::size_t slot_index(std::size_t slot) const { return slot_index_[slot]; }
    double slot_weight(std::size_t slot) const { return slot_weight_[slot]; }
    const double* slot_point(std::size_t slot) const {
        return slot_coords_.data() + slot * static_cast<std::size_t>(dimension_);
    }
    /// Slot holding cloud point i.
    std::size_t slot_of(std::size_t index) const { return index_slot_[index]; }

    /// Slot ranges covering every cell that intersects the closed shell
    /// lo <= |y - center| <= hi. Ranges are appended to out in cell order.
    void shell_blocks(std::span<const double> center, double lo, double hi,
                      std::vector<SlotRange>& out) const;

    /// Calls f(slot, distance) for every slot with lo <= |y - center| <= hi.
    /// The band test compares the square-rooted distance against lo and hi.
    template <class F>
    void for_each_in_shell(std::span<const double> center, double lo, double hi, F&& f) const {
        std::vector<SlotRange> blocks;
        shell_blocks(center, lo, hi, blocks);
        const int d = dimension_;
        const double* x = center.data();
        for (const auto& b : blocks) {
            for (std::size_t s = b.begin; s < b.end; ++s) {
                const double* p = slot_coords_.data() + s * static_cast<std::size_t>(d);
                double s2 = 0.0;
                for (int k = 0; k < d; ++k) {
                    const double diff = p[k] - x[k];
                    s2 += diff * diff;
                }
                const double r = std::sqrt(s2);
                if (r >= lo && r <= hi) f(s, r);
            }
        }
    }

    /// Number of slots a shell query inspects (points in intersecting cells).
    std::size_t visited_in_shell(std::span<const double> center, double lo, double hi) const;

    /// First slot whose linear cell key is >= key.
    std::size_t first_slot_at_or_after(std::int64_t key) const;

private:
    std::int64_t linear_key(std::span<const std::int64_t> cell) const;

    int dimension_;
    double cell_size_;
    std::uint64_t cloud_id_;
    std::vector<double> origin_;
    std::vector<std::int64_t> extents_;
    std::vector<std::int64_t> strides_;
    std::vector<std::int64_t> keys_;        // sorted occupied linear keys
    std::vector<std::size_t> offsets_;      // keys_.size() + 1 slot offsets
    std::vector<std::uint32_t> dense_start_;  // optional per-linear-key slot offsets
    std::vector<std::size_t> slot_index_;
    std::vector<std::size_t> index_slot_;
    std::vector<double> slot_coords_;
    std::vector<double> slot_weight_;
};

GridIndex build_grid(const PointCloudMeasure& cloud, double cell_size);

/// 2*eps clamped to [min_spacing, diameter/4]; min_spacing wins when the
/// interval is empty.
double default_cell_size(const PointCloudMeasure& cloud, double eps);

/// Points y with t - eps <= |y - center| <= t + eps, in index slot order.
std::vector<Neighbor> annulus_query(const GridIndex& index, std::span<const double> center, double t,
                                    double eps);

/// Uniform partition of [lo, hi] into count bins; the last bin is closed.
struct HistogramBins {
    double lo = 0.0;
    double hi = 1.0;
    int count = 64;

    double width() const { return (hi - lo) / count; }
    double center(int b) const { return lo + (b + 0.5) * width(); }
    /// Bin of value v, or -1 when v lies outside [lo, hi].
    int bin_of(double v) const;
};

HistogramBins diameter_bins(const PointCloudMeasure& cloud, int count);

/// mu x mu mass of ordered off-diagonal pairs per distance bin.
std::vector<double> pair_gap_histogram(const GridIndex& index, const PointCloudMeasure& cloud,
                                       const HistogramBins& bins);

/// Center of the heaviest bin.
double histogram_mode(const HistogramBins& bins, std::span<const double> masses);

void check_same_cloud(const GridIndex& index, const PointCloudMeasure& cloud);

}  // namespace chainlab
