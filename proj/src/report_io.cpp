#include "chainlab/report_io.hpp"

#include <cmath>
#include <ostream>
#include <sstream>

#include "chainlab/cloud_io.hpp"

namespace chainlab {

using nlohmann::json;

namespace {

json number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json numbers(const std::vector<double>& values) {
    json a = json::array();
    for (const double v : values) a.push_back(number(v));
    return a;
}

json optional_number(const std::optional<double>& v) { return v ? number(*v) : json(nullptr); }

std::string cell(double v) { return std::isfinite(v) ? format_number(v) : std::string(); }

}  // namespace

json to_json(const BallConditionReport& r) {
    return {{"s", number(r.s)},
            {"s_est", number(r.s_est)},
            {"fit_residual", number(r.fit_residual)},
            {"radii", numbers(r.radii)},
            {"sup_mass", numbers(r.sup_mass)},
            {"max_ratio", numbers(r.max_ratio)},
            {"centers_sampled", r.centers_sampled}};
}

json to_json(const DimensionEstimate& r) {
    return {{"slope", number(r.slope)},
            {"intercept", number(r.intercept)},
            {"residual", number(r.residual)},
            {"box_sizes", numbers(r.box_sizes)},
            {"counts", r.counts}};
}

json to_json(const ScalingReport& r) {
    return {{"k", r.k},
            {"gaps", numbers(r.gaps)},
            {"eps", numbers(r.eps)},
            {"masses", numbers(r.masses)},
            {"densities", numbers(r.densities)},
            {"slope", optional_number(r.slope)},
            {"slope_defined", r.slope.has_value()},
            {"fit_residual", number(r.fit_residual)}};
}

json to_json(const GapScanReport& r) {
    json interval = nullptr;
    if (r.interval)
        interval = {{"lo", number(r.interval->lo)},
                    {"hi", number(r.interval->hi)},
                    {"first", r.interval->first},
                    {"last", r.interval->last}};
    return {{"k", r.k},
            {"eps", number(r.eps)},
            {"grid", numbers(r.grid)},
            {"densities", numbers(r.densities)},
            {"interval", interval},
            {"threshold", number(r.threshold)},
            {"threshold_rule",
             r.rule.kind == ThresholdRule::Kind::absolute ? "absolute" : "fraction-of-median"},
            {"threshold_value", number(r.rule.value)}};
}

json to_json(const EpsLadderResult& r) {
    return {{"eps", numbers(r.eps)},
            {"densities", numbers(r.densities)},
            {"m_est", number(r.m_est)},
            {"residuals", numbers(r.residuals)},
            {"beta", optional_number(r.beta)},
            {"amplitude", number(r.amplitude)},
            {"fit_rms", number(r.fit_rms)},
            {"converged", r.converged},
            {"degenerate", r.degenerate},
            {"atomic_regime", r.atomic_regime},
            {"note", r.note}};
}

json to_json(const DistSetReport& r) {
    return {{"k", r.k},
            {"eta", number(r.eta)},
            {"occupied", r.occupied},
            {"volume", number(r.volume)},
            {"samples", r.samples},
            {"mode", r.mode == DistSetMode::exact_pairs ? "exact-pairs" : "sampled"},
            {"eps_ref", number(r.eps_ref)}};
}

json to_json(const ShellEnergyReport& r) {
    return {{"radii", numbers(r.radii)},
            {"energies", numbers(r.energies)},
            {"standard_errors", numbers(r.standard_errors)},
            {"exponent", optional_number(r.exponent)},
            {"fit_residual", number(r.fit_residual)},
            {"samples", r.samples}};
}

json to_json(const EnergyIntegralResult& r) {
    return {{"alpha", number(r.alpha)},
            {"r_max", number(r.r_max)},
            {"value", number(r.value)},
            {"standard_error", number(r.standard_error)},
            {"samples", r.samples}};
}

json to_json(const McEstimate& r) {
    return {{"estimate", number(r.estimate)}, {"standard_error", number(r.standard_error)}, {"samples", r.samples}};
}

json to_json(const DegenerateFraction& r) {
    return {{"value", number(r.value)},
            {"standard_error", number(r.standard_error)},
            {"exact", r.exact},
            {"samples", r.samples},
            {"delta", number(r.delta)},
            {"density", number(r.density)},
            {"degenerate_mass", number(r.degenerate_mass)}};
}

json to_json(const Chain& c, const PointCloudMeasure& cloud) {
    json vertices = json::array();
    for (const auto i : c.vertices) {
        const auto p = cloud.point(i);
        vertices.push_back(numbers({p.begin(), p.end()}));
    }
    return {{"vertices", vertices},
            {"indices", c.vertices},
            {"gaps", numbers(c.gaps)},
            {"weight", number(c.weight)},
            {"degenerate", c.degenerate}};
}

json index_stats(const GridIndex& index) {
    json occupancy = json::array();
    for (const auto& [count, cells] : index.occupancy_histogram()) occupancy.push_back({count, cells});
    std::vector<double> origin(index.origin().begin(), index.origin().end());
    std::vector<std::int64_t> extents(index.extents().begin(), index.extents().end());
    return {{"dimension", index.dimension()},
            {"cell_size", number(index.cell_size())},
            {"origin", numbers(origin)},
            {"extents", extents},
            {"points", index.size()},
            {"occupied_cells", index.occupied_cells()},
            {"occupancy", occupancy}};
}

std::string to_csv(const BallConditionReport& r) {
    std::ostringstream out;
    out << "r,sup_mass,max_ratio\n";
    for (std::size_t i = 0; i < r.radii.size(); ++i)
        out << cell(r.radii[i]) << ',' << cell(r.sup_mass[i]) << ',' << cell(r.max_ratio[i]) << '\n';
    return out.str();
}

std::string to_csv(const DimensionEstimate& r) {
    std::ostringstream out;
    out << "box_size,count\n";
    for (std::size_t i = 0; i < r.box_sizes.size(); ++i) out << cell(r.box_sizes[i]) << ',' << r.counts[i] << '\n';
    return out.str();
}

std::string to_csv(const ScalingReport& r) {
    std::ostringstream out;
    out << "eps,mass,density\n";
    for (std::size_t i = 0; i < r.eps.size(); ++i)
        out << cell(r.eps[i]) << ',' << cell(r.masses[i]) << ',' << cell(r.densities[i]) << '\n';
    return out.str();
}

std::string to_csv(const GapScanReport& r) {
    std::ostringstream out;
    out << "t,density,in_interval\n";
    for (std::size_t i = 0; i < r.grid.size(); ++i) {
        const bool inside = r.interval && i >= r.interval->first && i <= r.interval->last;
        out << cell(r.grid[i]) << ',' << cell(r.densities[i]) << ',' << (inside ? 1 : 0) << '\n';
    }
    return out.str();
}

std::string to_csv(const EpsLadderResult& r) {
    std::ostringstream out;
    out << "eps,density,residual\n";
    for (std::size_t i = 0; i < r.eps.size(); ++i)
        out << cell(r.eps[i]) << ',' << cell(r.densities[i]) << ','
            << (i < r.residuals.size() ? cell(r.residuals[i]) : std::string()) << '\n';
    return out.str();
}

std::string to_csv(const ShellEnergyReport& r) {
    std::ostringstream out;
    out << "R,energy,standard_error\n";
    for (std::size_t i = 0; i < r.radii.size(); ++i)
        out << cell(r.radii[i]) << ',' << cell(r.energies[i]) << ',' << cell(r.standard_errors[i]) << '\n';
    return out.str();
}

void write_field_csv(std::ostream& out, const PointCloudMeasure& cloud, const DensityField& f) {
    out << "index";
    for (int a = 0; a < cloud.dimension(); ++a) out << ",x" << a;
    out << ",weight,value\n";
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        out << i;
        for (const double v : cloud.point(i)) out << ',' << format_number(v);
        out << ',' << format_number(cloud.weight(i)) << ',' << cell(f.values[i]) << '\n';
    }
}

void write_chains_jsonl(std::ostream& out, const PointCloudMeasure& cloud, const std::vector<Chain>& chains) {
    for (const auto& c : chains) out << to_json(c, cloud).dump() << '\n';
}

}  // namespace chainlab
