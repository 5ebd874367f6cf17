#include "chainlab/spatial_index.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

#include "chainlab/errors.hpp"
#include "chainlab/parallel.hpp"

namespace chainlab {

namespace {

constexpr std::int64_t kDenseLimit = std::int64_t{1} << 22;
constexpr std::int64_t kKeyLimit = std::int64_t{1} << 62;

struct ShellWalk {
    const GridIndex* index;
    const double* center;
    double lo2;
    double hi2;
    double hi;
    double margin;
    std::vector<SlotRange>* out;
};

}  // namespace

GridIndex::GridIndex(const PointCloudMeasure& cloud, double cell_size, std::optional<std::vector<double>> origin)
    : dimension_(cloud.dimension()), cell_size_(cell_size), cloud_id_(cloud.id()) {
    require(std::isfinite(cell_size) && cell_size > 0.0, "build_grid: cell_size must be positive");
    const int d = dimension_;
    const std::size_t n = cloud.size();
    if (origin) {
        require(origin->size() == static_cast<std::size_t>(d), "build_grid: origin has wrong dimension");
        origin_ = *origin;
    } else {
        origin_.assign(d, std::numeric_limits<double>::infinity());
        for (std::size_t i = 0; i < n; ++i)
            for (int k = 0; k < d; ++k) origin_[k] = std::min(origin_[k], cloud.point(i)[k]);
    }

    std::vector<std::int64_t> cell_coords(n * d);
    std::vector<std::int64_t> lo(d, std::numeric_limits<std::int64_t>::max());
    std::vector<std::int64_t> hi(d, std::numeric_limits<std::int64_t>::min());
    for (std::size_t i = 0; i < n; ++i) {
        for (int k = 0; k < d; ++k) {
            const double c = std::floor((cloud.point(i)[k] - origin_[k]) / cell_size_);
            if (std::abs(c) > 1e15) throw CapacityError("build_grid: cell coordinate out of range");
            cell_coords[i * d + k] = static_cast<std::int64_t>(c);
            lo[k] = std::min(lo[k], cell_coords[i * d + k]);
            hi[k] = std::max(hi[k], cell_coords[i * d + k]);
        }
    }
    // An explicit origin may put points at negative cell coordinates; the
    // linearization then shifts by the smallest occupied cell.
    extents_.resize(d);
    strides_.resize(d);
    std::vector<std::int64_t> shift(d);
    for (int k = 0; k < d; ++k) {
        shift[k] = std::min<std::int64_t>(lo[k], 0);
        extents_[k] = hi[k] - shift[k] + 1;
    }
    std::int64_t total = 1;
    for (int k = d - 1; k >= 0; --k) {
        strides_[k] = total;
        if (total > kKeyLimit / extents_[k]) throw CapacityError("build_grid: too many cells to linearize");
        total *= extents_[k];
    }
    if (std::any_of(shift.begin(), shift.end(), [](std::int64_t s) { return s != 0; })) {
        for (int k = 0; k < d; ++k) origin_[k] += static_cast<double>(shift[k]) * cell_size_;
        for (std::size_t i = 0; i < n; ++i)
            for (int k = 0; k < d; ++k) cell_coords[i * d + k] -= shift[k];
    }

    std::vector<std::int64_t> point_key(n);
    for (std::size_t i = 0; i < n; ++i)
        point_key[i] = linear_key({cell_coords.data() + i * d, static_cast<std::size_t>(d)});

    slot_index_.resize(n);
    std::iota(slot_index_.begin(), slot_index_.end(), 0);
    std::stable_sort(slot_index_.begin(), slot_index_.end(),
                     [&](std::size_t a, std::size_t b) { return point_key[a] < point_key[b]; });
    index_slot_.resize(n);
    slot_coords_.resize(n * d);
    slot_weight_.resize(n);
    for (std::size_t s = 0; s < n; ++s) {
        const std::size_t i = slot_index_[s];
        index_slot_[i] = s;
        std::copy_n(cloud.point(i).data(), d, slot_coords_.data() + s * d);
        slot_weight_[s] = cloud.weight(i);
        if (s == 0 || point_key[i] != keys_.back()) {
            keys_.push_back(point_key[i]);
            offsets_.push_back(s);
        }
    }
    offsets_.push_back(n);

    if (total <= kDenseLimit && n < std::numeric_limits<std::uint32_t>::max()) {
        dense_start_.resize(static_cast<std::size_t>(total) + 1);
        std::size_t pos = 0;
        for (std::int64_t key = 0; key <= total; ++key) {
            while (pos < keys_.size() && keys_[pos] < key) ++pos;
            dense_start_[key] = static_cast<std::uint32_t>(offsets_[pos]);
        }
    }
}

std::int64_t GridIndex::linear_key(std::span<const std::int64_t> cell) const {
    std::int64_t key = 0;
    for (int k = 0; k < dimension_; ++k) key += cell[k] * strides_[k];
    return key;
}

std::size_t GridIndex::first_slot_at_or_after(std::int64_t key) const {
    if (!dense_start_.empty()) return dense_start_[static_cast<std::size_t>(key)];
    const auto it = std::lower_bound(keys_.begin(), keys_.end(), key);
    return offsets_[it - keys_.begin()];
}

std::vector<std::int64_t> GridIndex::cell_of(std::span<const double> x) const {
    require(x.size() == static_cast<std::size_t>(dimension_), "cell_of: wrong dimension");
    std::vector<std::int64_t> cell(dimension_);
    for (int k = 0; k < dimension_; ++k)
        cell[k] = static_cast<std::int64_t>(std::floor((x[k] - origin_[k]) / cell_size_));
    return cell;
}

std::vector<std::size_t> GridIndex::cell_members(std::span<const std::int64_t> cell) const {
    for (int k = 0; k < dimension_; ++k)
        if (cell[k] < 0 || cell[k] >= extents_[k]) return {};
    const std::int64_t key = linear_key(cell);
    const auto it = std::lower_bound(keys_.begin(), keys_.end(), key);
    if (it == keys_.end() || *it != key) return {};
    const auto pos = static_cast<std::size_t>(it - keys_.begin());
    std::vector<std::size_t> members(slot_index_.begin() + offsets_[pos], slot_index_.begin() + offsets_[pos + 1]);
    return members;
}

std::map<std::vector<std::int64_t>, std::vector<std::size_t>> GridIndex::cells() const {
    std::map<std::vector<std::int64_t>, std::vector<std::size_t>> out;
    for (std::size_t pos = 0; pos < keys_.size(); ++pos) {
        std::vector<std::int64_t> cell(dimension_);
        std::int64_t key = keys_[pos];
        for (int k = 0; k < dimension_; ++k) {
            cell[k] = key / strides_[k];
            key %= strides_[k];
        }
        out.emplace(std::move(cell), std::vector<std::size_t>(slot_index_.begin() + offsets_[pos],
                                                               slot_index_.begin() + offsets_[pos + 1]));
    }
    return out;
}

std::map<std::size_t, std::size_t> GridIndex::occupancy_histogram() const {
    std::map<std::size_t, std::size_t> hist;
    for (std::size_t pos = 0; pos < keys_.size(); ++pos) ++hist[offsets_[pos + 1] - offsets_[pos]];
    return hist;
}

namespace {

// Recursion over the leading axes, tracking squared min/max distance from the
// center to the cell slab; the last axis is resolved into contiguous runs.
void walk_axis(ShellWalk& w, int axis, double min2, double max2, std::int64_t key_base,
               const std::vector<std::int64_t>& extents, const std::vector<std::int64_t>& strides,
               std::span<const double> origin, double h) {
    const int d = static_cast<int>(extents.size());
    const double x = w.center[axis];
    const double reach = std::sqrt(std::max(0.0, w.hi2 - min2)) + w.margin;
    const double f_lo = std::max(std::floor((x - reach - origin[axis]) / h), 0.0);
    const double f_hi = std::min(std::floor((x + reach - origin[axis]) / h), static_cast<double>(extents[axis] - 1));
    if (!(f_lo <= f_hi)) return;
    const auto c_lo = static_cast<std::int64_t>(f_lo);
    const auto c_hi = static_cast<std::int64_t>(f_hi);

    if (axis == d - 1) {
        std::int64_t run_start = -1;
        auto flush = [&](std::int64_t run_end) {
            if (run_start < 0) return;
            const std::size_t b = w.index->first_slot_at_or_after(key_base + run_start);
            const std::size_t e = w.index->first_slot_at_or_after(key_base + run_end + 1);
            if (e > b) w.out->push_back({b, e});
            run_start = -1;
        };
        for (std::int64_t c = c_lo; c <= c_hi; ++c) {
            const double lo_b = origin[axis] + static_cast<double>(c) * h - w.margin;
            const double hi_b = lo_b + h + 2.0 * w.margin;
            const double gap = std::max({0.0, lo_b - x, x - hi_b});
            const double far = std::max(std::abs(x - lo_b), std::abs(x - hi_b));
            const bool keep = (min2 + gap * gap <= w.hi2) && (max2 + far * far >= w.lo2);
            if (keep) {
                if (run_start < 0) run_start = c;
            } else {
                flush(c - 1);
            }
        }
        flush(c_hi);
        return;
    }

    for (std::int64_t c = c_lo; c <= c_hi; ++c) {
        const double lo_b = origin[axis] + static_cast<double>(c) * h - w.margin;
        const double hi_b = lo_b + h + 2.0 * w.margin;
        const double gap = std::max({0.0, lo_b - x, x - hi_b});
        const double far = std::max(std::abs(x - lo_b), std::abs(x - hi_b));
        const double next_min2 = min2 + gap * gap;
        if (next_min2 > w.hi2) continue;
        walk_axis(w, axis + 1, next_min2, max2 + far * far, key_base + c * strides[axis], extents, strides,
                  origin, h);
    }
}

}  // namespace

void GridIndex::shell_blocks(std::span<const double> center, double lo, double hi,
                             std::vector<SlotRange>& out) const {
    require(center.size() == static_cast<std::size_t>(dimension_), "shell query: center has wrong dimension");
    if (hi < 0.0 || keys_.empty()) return;
    ShellWalk w{this, center.data(), std::max(lo, 0.0) * std::max(lo, 0.0), hi * hi, hi,
                cell_size_ * 1e-9 + 1e-12 * (hi + 1.0), &out};
    // squared-bound comparisons get a relative cushion so pruning never drops
    // a point the exact sqrt test would accept
    w.hi2 = (hi + w.margin) * (hi + w.margin);
    w.lo2 = std::max(0.0, lo - w.margin);
    w.lo2 *= w.lo2;
    walk_axis(w, 0, 0.0, 0.0, 0, extents_, strides_, origin_, cell_size_);
}

std::size_t GridIndex::visited_in_shell(std::span<const double> center, double lo, double hi) const {
    std::vector<SlotRange> blocks;
    shell_blocks(center, lo, hi, blocks);
    std::size_t total = 0;
    for (const auto& b : blocks) total += b.end - b.begin;
    return total;
}

GridIndex build_grid(const PointCloudMeasure& cloud, double cell_size) { return GridIndex(cloud, cell_size); }

double default_cell_size(const PointCloudMeasure& cloud, double eps) {
    if (cloud.diameter() <= 0.0) return std::max(2.0 * eps, 1.0);
    const double upper = cloud.diameter() / 4.0;
    double h = std::min(2.0 * eps, upper);
    if (cloud.min_spacing() > 0.0) h = std::max(h, cloud.min_spacing());
    return h;
}

void check_same_cloud(const GridIndex& index, const PointCloudMeasure& cloud) {
    require(index.cloud_id() == cloud.id() && index.size() == cloud.size(),
            "index was not built over this cloud");
}

std::vector<Neighbor> annulus_query(const GridIndex& index, std::span<const double> center, double t, double eps) {
    require(std::isfinite(t) && t > 0.0, "annulus_query: t must be positive");
    require(std::isfinite(eps) && eps > 0.0, "annulus_query: eps must be positive");
    require(eps < t, "annulus_query: eps must be smaller than t (band would touch the center)");
    std::vector<Neighbor> out;
    index.for_each_in_shell(center, t - eps, t + eps,
                            [&](std::size_t slot, double r) { out.push_back({index.slot_index(slot), r}); });
    return out;
}

int HistogramBins::bin_of(double v) const {
    if (!(v >= lo && v <= hi)) return -1;
    const int b = static_cast<int>(std::floor((v - lo) / width()));
    return std::clamp(b, 0, count - 1);
}

HistogramBins diameter_bins(const PointCloudMeasure& cloud, int count) {
    require(count >= 1, "histogram: need at least one bin");
    return {0.0, cloud.diameter() > 0.0 ? cloud.diameter() : 1.0, count};
}

std::vector<double> pair_gap_histogram(const GridIndex& index, const PointCloudMeasure& cloud,
                                       const HistogramBins& bins) {
    check_same_cloud(index, cloud);
    require(bins.count >= 1, "pair_gap_histogram: need at least one bin");
    require(bins.hi > bins.lo, "pair_gap_histogram: empty bin range");
    const std::size_t n = index.size();
    const int d = index.dimension();
    const std::size_t nb = static_cast<std::size_t>(bins.count);
    // Fixed-size row chunks reduced in chunk order, independent of threads.
    constexpr std::size_t kChunk = 256;
    const std::size_t chunks = (n + kChunk - 1) / kChunk;
    std::vector<double> partial(chunks * nb, 0.0);
    parallel_for(n, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            double* row = partial.data() + (i / kChunk) * nb;
            const double* p = index.slot_point(i);
            const double wi = index.slot_weight(i);
            for (std::size_t j = i + 1; j < n; ++j) {
                const double* q = index.slot_point(j);
                double s2 = 0.0;
                for (int k = 0; k < d; ++k) {
                    const double diff = p[k] - q[k];
                    s2 += diff * diff;
                }
                const int b = bins.bin_of(std::sqrt(s2));
                if (b >= 0) row[b] += 2.0 * wi * index.slot_weight(j);
            }
        }
    });
    std::vector<double> masses(nb, 0.0);
    for (std::size_t c = 0; c < chunks; ++c)
        for (std::size_t b = 0; b < nb; ++b) masses[b] += partial[c * nb + b];
    return masses;
}

double histogram_mode(const HistogramBins& bins, std::span<const double> masses) {
    require(!masses.empty(), "histogram_mode: empty histogram");
    const auto it = std::max_element(masses.begin(), masses.end());
    return bins.center(static_cast<int>(it - masses.begin()));
}

}  // namespace chainlab
