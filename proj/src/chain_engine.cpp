#include "chainlab/chain_engine.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "chainlab/errors.hpp"
#include "chainlab/parallel.hpp"

namespace chainlab {

AnnulusKernel::AnnulusKernel(double t_, double eps_, KernelNormalization mode_, int dimension_)
    : t(t_), eps(eps_), mode(mode_), dimension(dimension_) {
    require(std::isfinite(t) && t > 0.0, "kernel: t must be positive");
    require(std::isfinite(eps) && eps > 0.0, "kernel: eps must be positive");
    require(eps < t, "kernel: eps must be smaller than t");
    if (mode == KernelNormalization::probability)
        require(dimension >= 1, "kernel: probability normalization needs the ambient dimension");
}

double AnnulusKernel::band_value() const {
    const double value = 1.0 / (2.0 * eps);
    if (mode == KernelNormalization::band) return value;
    return value / (unit_sphere_area(dimension) * std::pow(t, dimension - 1));
}

double kernel_eval(const AnnulusKernel& kernel, double r) {
    return (r >= kernel.lower() && r <= kernel.upper()) ? kernel.band_value() : 0.0;
}

double unit_sphere_area(int d) {
    require(d >= 1, "unit_sphere_area: d must be >= 1");
    return 2.0 * std::pow(std::numbers::pi, 0.5 * d) / std::tgamma(0.5 * d);
}

DensityField DensityField::constant(std::size_t n, double value) {
    DensityField f;
    f.values.assign(n, value);
    return f;
}

namespace {

void check_kernel(const AnnulusKernel& kernel, const PointCloudMeasure& cloud) {
    if (kernel.mode == KernelNormalization::probability)
        require(kernel.dimension == cloud.dimension(), "kernel dimension does not match the cloud");
}

void check_gaps(std::span<const double> gaps, double eps) {
    require(!gaps.empty(), "chain: need at least one gap");
    require(std::isfinite(eps) && eps > 0.0, "chain: eps must be positive");
    for (const double t : gaps) require(std::isfinite(t) && t > eps, "chain: every gap must exceed eps");
}

double distance_between(const double* a, const double* b, int d) {
    double s2 = 0.0;
    for (int k = 0; k < d; ++k) {
        const double diff = a[k] - b[k];
        s2 += diff * diff;
    }
    return std::sqrt(s2);
}

}  // namespace

DensityField apply_spherical_operator(const GridIndex& index, const PointCloudMeasure& cloud, const DensityField& f,
                                      const AnnulusKernel& kernel) {
    check_same_cloud(index, cloud);
    check_kernel(kernel, cloud);
    const std::size_t n = cloud.size();
    require(f.values.size() == n, "apply_spherical_operator: field is not aligned with the cloud");
    for (const double v : f.values)
        require(std::isfinite(v) && v >= 0.0, "apply_spherical_operator: field values must be finite and >= 0");

    // f * w in slot order keeps the inner loop on contiguous memory
    std::vector<double> fw(n);
    for (std::size_t s = 0; s < n; ++s) fw[s] = f.values[index.slot_index(s)] * index.slot_weight(s);

    const double value = kernel.band_value();
    const double lo = kernel.lower();
    const double hi = kernel.upper();
    DensityField out;
    out.values.assign(n, 0.0);
    out.gaps_applied = f.gaps_applied;
    out.gaps_applied.emplace_back(kernel.t, kernel.eps);
    parallel_for(n, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            const std::size_t self = index.slot_of(i);
            double sum = 0.0;
            index.for_each_in_shell(cloud.point(i), lo, hi, [&](std::size_t slot, double) {
                if (slot != self) sum += fw[slot];
            });
            out.values[i] = value * sum;
        }
    });
    return out;
}

std::vector<DensityField> chain_fields(const GridIndex& index, const PointCloudMeasure& cloud,
                                       std::span<const double> gaps, double eps) {
    check_gaps(gaps, eps);
    std::vector<DensityField> fields;
    fields.reserve(gaps.size() + 1);
    fields.push_back(DensityField::constant(cloud.size()));
    for (const double t : gaps)
        fields.push_back(apply_spherical_operator(index, cloud, fields.back(), AnnulusKernel(t, eps)));
    return fields;
}

namespace {

double integrate(const PointCloudMeasure& cloud, const DensityField& f) {
    double total = 0.0;
    for (std::size_t i = 0; i < cloud.size(); ++i) total += f.values[i] * cloud.weight(i);
    return total;
}

}  // namespace

double chain_density(const GridIndex& index, const PointCloudMeasure& cloud, std::span<const double> gaps,
                     double eps) {
    const auto fields = chain_fields(index, cloud, gaps, eps);
    return integrate(cloud, fields.back());
}

double chain_density_bruteforce(const PointCloudMeasure& cloud, std::span<const double> gaps, double eps,
                                double max_terms) {
    check_gaps(gaps, eps);
    const std::size_t n = cloud.size();
    const std::size_t k = gaps.size();
    if (std::pow(static_cast<double>(n), static_cast<double>(k + 1)) > max_terms)
        throw CapacityError("chain_density_bruteforce: N^(k+1) exceeds the enumeration guard");
    std::vector<AnnulusKernel> kernels;
    for (const double t : gaps) kernels.emplace_back(t, eps);
    const int d = cloud.dimension();
    const double* coords = cloud.coords().data();

    // level j fixes x^j given x^{j+1}; kernel j-1 joins them
    auto recurse = [&](auto&& self, std::size_t level, std::size_t current, double partial) -> double {
        if (level == 0) return partial;
        const AnnulusKernel& kernel = kernels[level - 1];
        double sum = 0.0;
        for (std::size_t y = 0; y < n; ++y) {
            if (y == current) continue;
            const double kv = kernel_eval(kernel, distance_between(coords + current * d, coords + y * d, d));
            if (kv == 0.0) continue;
            sum += self(self, level - 1, y, partial * kv * cloud.weight(y));
        }
        return sum;
    };
    double total = 0.0;
    for (std::size_t x = 0; x < n; ++x) total += recurse(recurse, k, x, cloud.weight(x));
    return total;
}

bool chain_is_degenerate(const PointCloudMeasure& cloud, const Chain& chain, double delta) {
    for (std::size_t a = 0; a < chain.vertices.size(); ++a)
        for (std::size_t b = a + 1; b < chain.vertices.size(); ++b)
            if (vertices_coincide(cloud.distance(chain.vertices[a], chain.vertices[b]), delta)) return true;
    return false;
}

GoodSet good_set_extract(const GridIndex& index, const PointCloudMeasure& cloud, const GoodSet* restriction,
                         const AnnulusKernel& kernel, double c) {
    require(std::isfinite(c) && c >= 0.0, "good_set_extract: threshold must be >= 0");
    const std::size_t n = cloud.size();
    DensityField g;
    if (restriction) {
        g = DensityField::constant(n, 0.0);
        for (const auto i : restriction->members) {
            require(i < n, "good_set_extract: restriction does not index this cloud");
            g.values[i] = 1.0;
        }
    } else {
        g = DensityField::constant(n, 1.0);
    }
    const auto tg = apply_spherical_operator(index, cloud, g, kernel);
    GoodSet set;
    set.level = restriction ? restriction->level + 1 : 1;
    set.threshold = c;
    for (std::size_t i = 0; i < n; ++i) {
        if (tg.values[i] > c) {
            set.members.push_back(i);
            set.mass += cloud.weight(i);
        }
    }
    set.mass = std::min(set.mass, 1.0);
    return set;
}

std::vector<GoodSet> good_set_schedule(const GridIndex& index, const PointCloudMeasure& cloud,
                                       const AnnulusKernel& kernel, double c1, int levels) {
    require(levels >= 1, "good_set_schedule: need at least one level");
    std::vector<GoodSet> sets;
    sets.push_back(good_set_extract(index, cloud, nullptr, kernel, c1));
    for (int j = 1; j < levels; ++j) {
        const GoodSet& prev = sets.back();
        const double c = 0.5 * prev.threshold * prev.mass;
        sets.push_back(good_set_extract(index, cloud, &prev, kernel, c));
    }
    return sets;
}

ChainSampler::ChainSampler(const GridIndex& index, const PointCloudMeasure& cloud, std::vector<double> gaps,
                           double eps, std::optional<double> delta)
    : index_(&index), cloud_(&cloud), gaps_(std::move(gaps)), eps_(eps), delta_(delta.value_or(eps)) {
    check_same_cloud(index, cloud);
    require(delta_ >= 0.0, "sampler: delta must be >= 0");
    fields_ = chain_fields(index, cloud, gaps_, eps_);
    const auto& top = fields_.back().values;
    last_cumulative_.resize(cloud.size());
    double running = 0.0;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        running += top[i] * cloud.weight(i);
        last_cumulative_[i] = running;
    }
    density_ = running;
}

Chain ChainSampler::draw(Rng& rng) const {
    require(!empty(), "sampler: chain density is zero");
    const std::size_t k = gaps_.size();
    Chain chain;
    chain.vertices.assign(k + 1, 0);
    chain.gaps.assign(k, 0.0);

    const double u = uniform01(rng) * density_;
    auto it = std::upper_bound(last_cumulative_.begin(), last_cumulative_.end(), u);
    std::size_t current = std::min<std::size_t>(it - last_cumulative_.begin(), cloud_->size() - 1);
    while (current > 0 && fields_[k].values[current] * cloud_->weight(current) <= 0.0) --current;
    chain.vertices[k] = current;
    double weight = cloud_->weight(current);

    std::vector<std::size_t> slots;
    std::vector<double> cumulative, radii;
    for (std::size_t j = k; j >= 1; --j) {
        const AnnulusKernel kernel(gaps_[j - 1], eps_);
        const auto& prev = fields_[j - 1].values;
        const std::size_t self = index_->slot_of(current);
        slots.clear();
        cumulative.clear();
        radii.clear();
        double running = 0.0;
        index_->for_each_in_shell(cloud_->point(current), kernel.lower(), kernel.upper(),
                                  [&](std::size_t slot, double r) {
                                      if (slot == self) return;
                                      const double p = prev[index_->slot_index(slot)] * index_->slot_weight(slot);
                                      if (p <= 0.0) return;
                                      running += p;
                                      slots.push_back(slot);
                                      cumulative.push_back(running);
                                      radii.push_back(r);
                                  });
        if (slots.empty()) throw Error("sampler: no admissible predecessor for a positive-density vertex");
        const double v = uniform01(rng) * running;
        const auto pos = std::min<std::size_t>(
            std::upper_bound(cumulative.begin(), cumulative.end(), v) - cumulative.begin(), slots.size() - 1);
        const std::size_t next = index_->slot_index(slots[pos]);
        chain.vertices[j - 1] = next;
        chain.gaps[j - 1] = radii[pos];
        weight *= kernel.band_value() * cloud_->weight(next);
        current = next;
    }
    chain.weight = weight;
    chain.degenerate = chain_is_degenerate(*cloud_, chain, delta_);
    return chain;
}

std::vector<Chain> sample_chains(const GridIndex& index, const PointCloudMeasure& cloud, std::span<const double> gaps,
                                 double eps, std::size_t n, std::uint64_t seed, std::optional<double> delta) {
    if (n == 0) return {};
    ChainSampler sampler(index, cloud, {gaps.begin(), gaps.end()}, eps, delta);
    if (sampler.empty()) return {};
    // chain i has its own stream, so the output does not depend on threads
    std::vector<Chain> chains(n);
    parallel_for(n, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            Rng rng(derive_seed(seed, i));
            chains[i] = sampler.draw(rng);
        }
    });
    return chains;
}

namespace {

struct DegenerateWalk {
    const GridIndex& index;
    const PointCloudMeasure& cloud;
    const std::vector<DensityField>& fields;
    std::vector<AnnulusKernel> kernels;
    double delta;
    int d;
};

bool coincides_with_any(const DegenerateWalk& w, const double* p, const std::vector<std::size_t>& fixed,
                        std::size_t count) {
    for (std::size_t m = 0; m < count; ++m)
        if (vertices_coincide(distance_between(p, w.cloud.point(fixed[m]).data(), w.d), w.delta)) return true;
    return false;
}

// fixed holds x^{k+1}, x^k, ..., x^{level+1}; partial is the weight of that
// prefix. Returns the coincident mass over all completions.
double degenerate_walk(const DegenerateWalk& w, std::size_t level, std::vector<std::size_t>& fixed, double partial) {
    const std::size_t current = fixed.back();
    const AnnulusKernel& kernel = w.kernels[level - 1];
    const double kv = kernel.band_value();
    const double* cur = w.cloud.point(current).data();
    double sum = 0.0;

    if (level == 1) {
        // x^1 must sit in the band of x^2 and coincide with a fixed vertex;
        // the union of delta-balls is walked ball by ball, skipping points
        // already claimed by an earlier ball.
        for (std::size_t m = 0; m < fixed.size(); ++m) {
            w.index.for_each_in_shell(w.cloud.point(fixed[m]), 0.0, w.delta, [&](std::size_t slot, double r) {
                if (!vertices_coincide(r, w.delta)) return;
                const std::size_t y = w.index.slot_index(slot);
                if (y == current) return;
                const double* p = w.index.slot_point(slot);
                const double band_r = distance_between(p, cur, w.d);
                if (!(band_r >= kernel.lower() && band_r <= kernel.upper())) return;
                if (coincides_with_any(w, p, fixed, m)) return;
                sum += partial * kv * w.index.slot_weight(slot);
            });
        }
        return sum;
    }

    const auto& prev = w.fields[level - 1].values;
    const std::size_t self = w.index.slot_of(current);
    std::vector<std::pair<std::size_t, double>> band;
    w.index.for_each_in_shell(w.cloud.point(current), kernel.lower(), kernel.upper(),
                              [&](std::size_t slot, double) {
                                  if (slot != self) band.emplace_back(slot, w.index.slot_weight(slot));
                              });
    for (const auto& [slot, weight] : band) {
        const std::size_t y = w.index.slot_index(slot);
        const double next_partial = partial * kv * weight;
        if (next_partial == 0.0) continue;
        if (coincides_with_any(w, w.index.slot_point(slot), fixed, fixed.size())) {
            sum += next_partial * prev[y];
        } else {
            fixed.push_back(y);
            sum += degenerate_walk(w, level - 1, fixed, next_partial);
            fixed.pop_back();
        }
    }
    return sum;
}

double estimate_exact_work(const GridIndex& index, const PointCloudMeasure& cloud, std::span<const double> gaps,
                           double eps, double delta) {
    const std::size_t n = cloud.size();
    const std::size_t probes = std::min<std::size_t>(n, 64);
    std::vector<double> band_mean(gaps.size(), 0.0);
    double ball_mean = 0.0;
    for (std::size_t p = 0; p < probes; ++p) {
        const std::size_t i = p * n / probes;
        for (std::size_t j = 0; j < gaps.size(); ++j)
            band_mean[j] += static_cast<double>(index.visited_in_shell(cloud.point(i), gaps[j] - eps, gaps[j] + eps));
        ball_mean += static_cast<double>(index.visited_in_shell(cloud.point(i), 0.0, delta));
    }
    for (auto& b : band_mean) b /= static_cast<double>(probes);
    ball_mean /= static_cast<double>(probes);
    double work = static_cast<double>(n);
    for (std::size_t j = 1; j < gaps.size(); ++j) work *= std::max(1.0, band_mean[j]);
    return work * (1.0 + static_cast<double>(gaps.size()) * ball_mean);
}

}  // namespace

double degenerate_mass_exact(const GridIndex& index, const PointCloudMeasure& cloud, std::span<const double> gaps,
                             double eps, double delta) {
    check_same_cloud(index, cloud);
    require(delta >= 0.0, "degenerate_mass_exact: delta must be >= 0");
    const auto fields = chain_fields(index, cloud, gaps, eps);
    DegenerateWalk walk{index, cloud, fields, {}, delta, cloud.dimension()};
    for (const double t : gaps) walk.kernels.emplace_back(t, eps);
    const std::size_t n = cloud.size();
    const std::size_t k = gaps.size();
    std::vector<double> per_point(n, 0.0);
    parallel_for(n, [&](std::size_t begin, std::size_t end) {
        std::vector<std::size_t> fixed;
        for (std::size_t x = begin; x < end; ++x) {
            if (fields[k].values[x] <= 0.0) continue;
            fixed.assign(1, x);
            per_point[x] = degenerate_walk(walk, k, fixed, cloud.weight(x));
        }
    });
    double total = 0.0;
    for (const double v : per_point) total += v;
    return total;
}

DegenerateFraction degenerate_mass_fraction(const GridIndex& index, const PointCloudMeasure& cloud,
                                            std::span<const double> gaps, double eps,
                                            const DegeneracyOptions& options) {
    check_same_cloud(index, cloud);
    check_gaps(gaps, eps);
    DegenerateFraction result;
    result.delta = options.delta.value_or(eps);
    require(result.delta >= 0.0, "degenerate_mass_fraction: delta must be >= 0");

    const bool exact_allowed = gaps.size() <= 3;
    const bool exact = exact_allowed &&
                       (options.force_exact ||
                        estimate_exact_work(index, cloud, gaps, eps, result.delta) <= options.exact_work_budget);
    if (exact) {
        const double density = chain_density(index, cloud, gaps, eps);
        if (!(density > 0.0))
            throw UndefinedError("degenerate_mass_fraction: chain density is zero, fraction undefined");
        result.degenerate_mass = degenerate_mass_exact(index, cloud, gaps, eps, result.delta);
        result.density = density;
        result.value = std::clamp(result.degenerate_mass / density, 0.0, 1.0);
        result.exact = true;
        return result;
    }

    require(options.samples >= 1, "degenerate_mass_fraction: need at least one sample");
    const auto chains = sample_chains(index, cloud, gaps, eps, options.samples, options.seed, result.delta);
    if (chains.empty())
        throw UndefinedError("degenerate_mass_fraction: chain density is zero, fraction undefined");
    std::size_t hits = 0;
    for (const auto& c : chains)
        if (c.degenerate) ++hits;
    const double n = static_cast<double>(options.samples);
    result.value = static_cast<double>(hits) / n;
    result.standard_error = std::sqrt(result.value * (1.0 - result.value) / n);
    result.exact = false;
    result.samples = options.samples;
    result.density = chain_density(index, cloud, gaps, eps);
    return result;
}

std::optional<Chain> find_nondegenerate_chain(const GridIndex& index, const PointCloudMeasure& cloud,
                                              std::span<const double> gaps, double eps, double delta,
                                              std::uint64_t seed, std::size_t max_draws) {
    require(delta >= 0.0, "find_nondegenerate_chain: delta must be >= 0");
    ChainSampler sampler(index, cloud, {gaps.begin(), gaps.end()}, eps, delta);
    if (sampler.empty()) return std::nullopt;
    Rng rng(seed);
    for (std::size_t draw = 0; draw < max_draws; ++draw) {
        Chain chain = sampler.draw(rng);
        if (!chain.degenerate) return chain;
    }
    return std::nullopt;
}

}  // namespace chainlab
