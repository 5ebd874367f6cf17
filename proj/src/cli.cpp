#include "chainlab/cli.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "chainlab/chain_engine.hpp"
#include "chainlab/cloud_io.hpp"
#include "chainlab/errors.hpp"
#include "chainlab/experiments.hpp"
#include "chainlab/fourier_probe.hpp"
#include "chainlab/measures.hpp"
#include "chainlab/parallel.hpp"
#include "chainlab/report_io.hpp"
#include "chainlab/spatial_index.hpp"

namespace chainlab {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct ExperimentSpec {
    std::string name;
    std::string help;
    std::vector<std::string> options;  // value options, beyond the common ones
    std::vector<std::string> flags;
    bool needs_source = true;
};

const std::vector<ExperimentSpec>& experiment_specs() {
    static const std::vector<ExperimentSpec> specs = {
        {"generate", "sample an IFS measure and write it as a point-cloud CSV", {}, {}, false},
        {"ballcond", "ball-condition scan", {"s", "radii", "centers"}, {}},
        {"boxdim", "box-counting dimension", {"sizes"}, {}},
        {"density", "chain density C_k^eps for fixed gaps", {"gaps", "eps"}, {"index-stats"}},
        {"scan-gaps", "scan equal gaps for an interval of positive density",
         {"k", "grid", "grid-lo", "grid-hi", "eps", "threshold-rule", "threshold"}, {"index-stats"}},
        {"scaling", "eps scaling of raw chain masses", {"gaps", "ladder", "guard"}, {"index-stats"}},
        {"limit", "eps -> 0 extrapolation of chain densities", {"gaps", "ladder", "guard"}, {"index-stats"}},
        {"find-chain", "sample chains and report the degenerate mass fraction",
         {"gaps", "eps", "delta", "max-draws", "chains", "samples"}, {"index-stats"}},
        {"distset", "distance-set volume", {"k", "eta", "mode", "samples", "eps-ref"}, {"index-stats"}},
        {"fourier", "Fourier transform diagnostics", {"mode", "R", "alpha", "r-max", "xi", "samples", "rungs"}, {}},
        {"schur", "Schur row-sum bound", {"alpha"}, {}},
    };
    return specs;
}

const ExperimentSpec& spec_for(const std::string& name) {
    for (const auto& s : experiment_specs())
        if (s.name == name) return s;
    throw ValidationError("unknown experiment '" + name + "'");
}

const std::vector<std::string> kCommonKeys = {"experiment", "seed", "threads", "out", "run-dir"};
const std::vector<std::string> kSourceKeys = {"cloud", "ifs", "level"};

void check_keys(const ExperimentSpec& spec, const json& config) {
    std::set<std::string> allowed(kCommonKeys.begin(), kCommonKeys.end());
    if (spec.needs_source) {
        allowed.insert(kSourceKeys.begin(), kSourceKeys.end());
    } else {
        allowed.insert("ifs");
        allowed.insert("level");
    }
    allowed.insert(spec.options.begin(), spec.options.end());
    allowed.insert(spec.flags.begin(), spec.flags.end());
    for (const auto& [key, value] : config.items())
        if (!allowed.count(key))
            throw ValidationError("unknown parameter '" + key + "' for experiment '" + spec.name + "'");
}

double parse_number(const std::string& text, const std::string& key) {
    const auto first = text.find_first_not_of(" \t");
    const auto last = text.find_last_not_of(" \t");
    if (first == std::string::npos) throw ValidationError("parameter '" + key + "' must be a number");
    const char* b = text.data() + first;
    const char* e = text.data() + last + 1;
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(b, e, v);
    if (ec != std::errc() || ptr != e || !std::isfinite(v))
        throw ValidationError("parameter '" + key + "' must be a number, got '" + text + "'");
    return v;
}

// Typed access to a config object; every value read is recorded in echo.
class Params {
public:
    explicit Params(const json& config) : cfg_(config) {}

    bool has(const std::string& key) const { return cfg_.contains(key) && !cfg_[key].is_null(); }
    json& echo() { return echo_; }
    const json& raw(const std::string& key) const { return cfg_[key]; }

    double number(const std::string& key, std::optional<double> fallback = std::nullopt) {
        double v;
        if (!has(key)) {
            if (!fallback) missing(key);
            v = *fallback;
        } else {
            v = to_number(cfg_[key], key);
        }
        echo_[key] = v;
        return v;
    }

    long long integer(const std::string& key, std::optional<long long> fallback = std::nullopt) {
        long long v;
        if (!has(key)) {
            if (!fallback) missing(key);
            v = *fallback;
        } else {
            const double d = to_number(cfg_[key], key);
            if (d != std::floor(d) || std::abs(d) > 9.0e15)
                throw ValidationError("parameter '" + key + "' must be an integer");
            v = static_cast<long long>(d);
        }
        echo_[key] = v;
        return v;
    }

    std::uint64_t seed() {
        std::uint64_t v = 0;
        if (has("seed")) {
            const json& j = cfg_["seed"];
            if (j.is_number_unsigned()) {
                v = j.get<std::uint64_t>();
            } else if (j.is_number_integer() && j.get<long long>() >= 0) {
                v = static_cast<std::uint64_t>(j.get<long long>());
            } else if (j.is_string()) {
                const auto& s = j.get_ref<const std::string&>();
                const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
                if (ec != std::errc() || ptr != s.data() + s.size())
                    throw ValidationError("parameter 'seed' must be a non-negative 64-bit integer");
            } else {
                throw ValidationError("parameter 'seed' must be a non-negative 64-bit integer");
            }
        }
        echo_["seed"] = v;
        return v;
    }

    std::vector<double> list(const std::string& key, std::optional<std::vector<double>> fallback = std::nullopt) {
        std::vector<double> v;
        if (!has(key)) {
            if (!fallback) missing(key);
            v = *fallback;
        } else if (cfg_[key].is_array()) {
            for (const auto& x : cfg_[key]) v.push_back(to_number(x, key));
        } else if (cfg_[key].is_string()) {
            std::stringstream ss(cfg_[key].get<std::string>());
            std::string item;
            while (std::getline(ss, item, ',')) v.push_back(parse_number(item, key));
        } else {
            v.push_back(to_number(cfg_[key], key));
        }
        if (v.empty()) throw ValidationError("parameter '" + key + "' must not be empty");
        echo_[key] = v;
        return v;
    }

    std::string text(const std::string& key, std::optional<std::string> fallback = std::nullopt) {
        std::string v;
        if (!has(key)) {
            if (!fallback) missing(key);
            v = *fallback;
        } else {
            if (!cfg_[key].is_string()) throw ValidationError("parameter '" + key + "' must be a string");
            v = cfg_[key].get<std::string>();
        }
        echo_[key] = v;
        return v;
    }

    // number, or the word "auto" resolved by the callback
    double number_or_auto(const std::string& key, const std::function<double()>& resolve,
                          bool auto_by_default = false) {
        const bool is_auto = has(key) ? (cfg_[key].is_string() && cfg_[key].get<std::string>() == "auto")
                                      : auto_by_default;
        if (!has(key) && !auto_by_default) missing(key);
        if (is_auto) {
            echo_[key] = "auto";
            return resolve();
        }
        return number(key);
    }

    bool flag(const std::string& key) {
        bool v = false;
        if (has(key)) {
            if (cfg_[key].is_boolean())
                v = cfg_[key].get<bool>();
            else if (cfg_[key].is_string())
                v = cfg_[key].get<std::string>() == "true";
            else
                throw ValidationError("parameter '" + key + "' must be a boolean");
        }
        echo_[key] = v;
        return v;
    }

private:
    [[noreturn]] static void missing(const std::string& key) {
        throw ValidationError("missing required parameter '" + key + "'");
    }

    static double to_number(const json& j, const std::string& key) {
        if (j.is_number()) return j.get<double>();
        if (j.is_string()) return parse_number(j.get<std::string>(), key);
        throw ValidationError("parameter '" + key + "' must be a number");
    }

    const json& cfg_;
    json echo_ = json::object();
};

std::string absolute_path(const std::string& path) { return fs::absolute(fs::path(path)).lexically_normal().string(); }

IfsSpec resolve_ifs(Params& p) {
    if (!p.has("ifs")) throw ValidationError("missing required parameter 'ifs'");
    const json& raw = p.raw("ifs");
    if (raw.is_object()) {
        auto spec = ifs_from_json(raw);
        p.echo()["ifs"] = ifs_to_json(spec);
        return spec;
    }
    require(raw.is_string(), "parameter 'ifs' must be a path, 'cantor:<ratio>' or an inline object");
    const std::string text = raw.get<std::string>();
    if (text.rfind("cantor:", 0) == 0) {
        const double ratio = parse_number(text.substr(7), "ifs");
        p.echo()["ifs"] = text;
        return four_corner_cantor(ratio);
    }
    const std::string path = absolute_path(text);
    p.echo()["ifs"] = path;
    return load_ifs_json(path);
}

PointCloudMeasure load_source(Params& p) {
    const bool has_cloud = p.has("cloud"), has_ifs = p.has("ifs");
    require(has_cloud != has_ifs, "exactly one input source is required: 'cloud' or 'ifs'");
    if (has_cloud) {
        require(!p.has("level"), "parameter 'level' only applies to an 'ifs' source");
        require(p.raw("cloud").is_string(), "parameter 'cloud' must be a path");
        const std::string path = absolute_path(p.raw("cloud").get<std::string>());
        p.echo()["cloud"] = path;
        return load_cloud_csv(path);
    }
    const auto spec = resolve_ifs(p);
    const auto level = p.integer("level");
    require(level >= 0 && level <= 64, "parameter 'level' must lie in [0, 64]");
    return ifs_generate(spec, static_cast<int>(level));
}

double auto_eps(const PointCloudMeasure& cloud) {
    return std::max(cloud.diameter() / 128.0, 3.0 * cloud.min_spacing());
}

std::string fmt(double v) { return std::isfinite(v) ? format_number(v) : std::string("undefined"); }

std::string fmt_list(const std::vector<double>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + fmt(v[i]);
    return s;
}

struct Output {
    json result = json::object();
    std::string csv;
    std::vector<std::pair<std::string, std::string>> extras;  // file name -> content
    std::ostringstream summary;
};

GridIndex make_index(Params& p, const PointCloudMeasure& cloud, double eps, Output& o) {
    GridIndex index = build_grid(cloud, default_cell_size(cloud, eps));
    if (p.flag("index-stats")) o.extras.emplace_back("index_stats.json", index_stats(index).dump(2) + "\n");
    return index;
}

void describe_cloud(const PointCloudMeasure& cloud, Output& o) {
    o.result["cloud"] = {{"points", cloud.size()},
                         {"dimension", cloud.dimension()},
                         {"diameter", cloud.diameter()},
                         {"min_spacing", cloud.min_spacing()}};
    o.summary << "points: " << cloud.size() << "\ndiameter: " << fmt(cloud.diameter())
              << "\nmin_spacing: " << fmt(cloud.min_spacing()) << '\n';
}

std::vector<double> default_ladder(const PointCloudMeasure& cloud, int rungs) {
    require(cloud.size() >= 2 && cloud.min_spacing() > 0.0, "cloud needs two distinct points for a default ladder");
    return geometric_ladder(cloud.diameter() / 4.0, 2.0 * cloud.min_spacing(), rungs);
}

void run_generate(Params& p, std::uint64_t, Output& o) {
    const auto spec = resolve_ifs(p);
    const auto level = p.integer("level");
    require(level >= 0 && level <= 64, "parameter 'level' must lie in [0, 64]");
    const auto cloud = ifs_generate(spec, static_cast<int>(level));
    std::ostringstream csv;
    write_cloud_csv(csv, cloud);
    o.extras.emplace_back("cloud.csv", csv.str());
    o.result["level"] = level;
    describe_cloud(cloud, o);
}

void run_ballcond(Params& p, std::uint64_t seed, Output& o) {
    const auto cloud = load_source(p);
    const double s = p.number("s");
    const auto radii = p.list("radii", default_ladder(cloud, 8));
    const auto centers = p.integer("centers", 4096);
    require(centers >= 1, "parameter 'centers' must be >= 1");
    const auto r = ball_condition_scan(cloud, s, radii, CenterPlan{static_cast<std::size_t>(centers)}, seed);
    describe_cloud(cloud, o);
    o.result["report"] = to_json(r);
    o.csv = to_csv(r);
    o.summary << "s_est: " << fmt(r.s_est) << "\nmax_ratio: "
              << fmt(*std::max_element(r.max_ratio.begin(), r.max_ratio.end())) << '\n';
}

void run_boxdim(Params& p, std::uint64_t, Output& o) {
    const auto cloud = load_source(p);
    const auto sizes = p.list("sizes", default_ladder(cloud, 8));
    const auto r = box_dimension_estimate(cloud, sizes);
    describe_cloud(cloud, o);
    o.result["report"] = to_json(r);
    o.csv = to_csv(r);
    o.summary << "box_dimension: " << fmt(r.slope) << '\n';
}

void run_density(Params& p, std::uint64_t, Output& o) {
    const auto cloud = load_source(p);
    const auto gaps = p.list("gaps");
    const double eps = p.number_or_auto("eps", [&] { return auto_eps(cloud); });
    const auto index = make_index(p, cloud, eps, o);
    const auto fields = chain_fields(index, cloud, gaps, eps);
    double density = 0.0;
    for (std::size_t i = 0; i < cloud.size(); ++i) density += fields.back().values[i] * cloud.weight(i);
    const int k = static_cast<int>(gaps.size());
    const double mass = density * std::pow(2.0 * eps, k);
    describe_cloud(cloud, o);
    o.result["k"] = k;
    o.result["gaps"] = gaps;
    o.result["eps"] = eps;
    o.result["density"] = density;
    o.result["raw_mass"] = mass;
    std::ostringstream field;
    write_field_csv(field, cloud, fields.back());
    o.extras.emplace_back("field.csv", field.str());
    o.summary << "eps: " << fmt(eps) << "\ndensity: " << fmt(density) << "\nraw_mass: " << fmt(mass) << '\n';
}

void run_scan_gaps(Params& p, std::uint64_t, Output& o) {
    const auto cloud = load_source(p);
    const auto k = p.integer("k", 1);
    require(k >= 1 && k <= 64, "parameter 'k' must lie in [1, 64]");
    const auto n = p.integer("grid", 64);
    require(n >= 1 && n <= 100000, "parameter 'grid' must lie in [1, 100000]");
    const double eps = p.number_or_auto("eps", [&] { return auto_eps(cloud); });
    // grid points must clear eps, so the default open grid starts there
    const double lo = p.number("grid-lo", eps);
    const double hi = p.number("grid-hi", cloud.diameter());
    const std::string rule_name = p.text("threshold-rule", "fraction-of-median");
    ThresholdRule rule;
    if (rule_name == "absolute")
        rule.kind = ThresholdRule::Kind::absolute;
    else
        require(rule_name == "fraction-of-median",
                "parameter 'threshold-rule' must be 'fraction-of-median' or 'absolute'");
    rule.value = p.number("threshold", 0.1);
    const auto grid = open_grid(lo, hi, static_cast<int>(n));
    const auto index = make_index(p, cloud, eps, o);
    const auto r = gap_interval_scan(index, cloud, static_cast<int>(k), grid, eps, rule);
    describe_cloud(cloud, o);
    o.result["report"] = to_json(r);
    o.csv = to_csv(r);
    o.summary << "eps: " << fmt(eps) << '\n';
    if (r.interval)
        o.summary << "interval: [" << fmt(r.interval->lo) << ", " << fmt(r.interval->hi) << "]\n";
    else
        o.summary << "interval: none\n";
    // cross-check against the distance histogram when the O(N^2) pass is cheap
    if (cloud.size() >= 2 && cloud.size() <= 32768 && cloud.diameter() > 0.0) {
        const auto bins = diameter_bins(cloud, static_cast<int>(n));
        const auto masses = pair_gap_histogram(index, cloud, bins);
        const double mode = histogram_mode(bins, masses);
        const bool inside = r.interval && mode >= r.interval->lo && mode <= r.interval->hi;
        o.result["histogram_mode"] = mode;
        o.result["mode_in_interval"] = inside;
        o.summary << "histogram_mode: " << fmt(mode) << (inside ? " (inside)" : " (outside)") << '\n';
    }
}

struct LadderInputs {
    std::vector<double> gaps;
    std::vector<double> ladder;
    LadderOptions options;
};

LadderInputs ladder_inputs(Params& p, const PointCloudMeasure& cloud) {
    LadderInputs in;
    in.gaps = p.list("gaps");
    in.ladder = p.list("ladder", cloud.diameter() > 0.0 ? dyadic_eps_ladder(cloud, 3, 7) : std::vector<double>{});
    in.options.discreteness_factor = p.number("guard", 3.0);
    return in;
}

void run_scaling(Params& p, std::uint64_t, Output& o) {
    const auto cloud = load_source(p);
    const auto in = ladder_inputs(p, cloud);
    check_eps_ladder(cloud, in.gaps, in.ladder, in.options);
    const auto index = make_index(p, cloud, in.ladder.back(), o);
    const auto r = eps_scaling(index, cloud, in.gaps, in.ladder, in.options);
    describe_cloud(cloud, o);
    o.result["report"] = to_json(r);
    o.csv = to_csv(r);
    o.summary << "k: " << r.k << "\nslope: " << (r.slope ? fmt(*r.slope) : "undefined (zero mass)") << '\n';
}

void run_limit(Params& p, std::uint64_t, Output& o) {
    const auto cloud = load_source(p);
    const auto in = ladder_inputs(p, cloud);
    check_eps_ladder(cloud, in.gaps, in.ladder, in.options);
    const auto index = make_index(p, cloud, in.ladder.back(), o);
    const auto r = density_limit(index, cloud, in.gaps, in.ladder, in.options);
    describe_cloud(cloud, o);
    o.result["report"] = to_json(r);
    o.csv = to_csv(r);
    o.summary << "m_est: " << fmt(r.m_est) << "\nbeta: " << (r.beta ? fmt(*r.beta) : "undefined")
              << "\nconverged: " << (r.converged ? "yes" : "no") << '\n';
    if (!r.note.empty()) o.summary << "note: " << r.note << '\n';
}

void run_find_chain(Params& p, std::uint64_t seed, Output& o) {
    const auto cloud = load_source(p);
    const auto gaps = p.list("gaps");
    const double eps = p.number_or_auto("eps", [&] { return auto_eps(cloud); });
    // delta defaults to eps; the literal "eps" keeps echoed configs replayable
    const bool delta_is_eps = !p.has("delta") || p.raw("delta") == json("eps");
    const double delta = delta_is_eps ? (p.echo()["delta"] = "eps", eps) : p.number("delta");
    const auto max_draws = p.integer("max-draws", 100000);
    require(max_draws >= 1, "parameter 'max-draws' must be >= 1");
    const auto chains = p.integer("chains", 0);
    require(chains >= 0 && chains <= 10'000'000, "parameter 'chains' must lie in [0, 1e7]");
    const auto samples = p.integer("samples", 20000);
    require(samples >= 1, "parameter 'samples' must be >= 1");
    const auto index = make_index(p, cloud, eps, o);

    DegeneracyOptions dopt;
    dopt.delta = delta;
    dopt.samples = static_cast<std::size_t>(samples);
    dopt.seed = derive_seed(seed, 1);
    const auto fraction = degenerate_mass_fraction(index, cloud, gaps, eps, dopt);
    const auto chain = find_nondegenerate_chain(index, cloud, gaps, eps, delta, seed, static_cast<std::size_t>(max_draws));

    describe_cloud(cloud, o);
    o.result["gaps"] = gaps;
    o.result["eps"] = eps;
    o.result["delta"] = delta;
    o.result["degenerate_fraction"] = to_json(fraction);
    o.result["found"] = chain.has_value();
    o.result["chain"] = chain ? to_json(*chain, cloud) : json(nullptr);
    if (chains > 0) {
        const auto drawn = sample_chains(index, cloud, gaps, eps, static_cast<std::size_t>(chains),
                                         derive_seed(seed, 2), delta);
        std::ostringstream lines;
        write_chains_jsonl(lines, cloud, drawn);
        o.extras.emplace_back("chains.jsonl", lines.str());
        o.result["chains_written"] = drawn.size();
    }
    o.summary << "eps: " << fmt(eps) << "\ndensity: " << fmt(fraction.density)
              << "\ndegenerate_fraction: " << fmt(fraction.value) << (fraction.exact ? " (exact)" : " (sampled)")
              << '\n';
    if (chain) {
        std::string v;
        for (std::size_t i = 0; i < chain->vertices.size(); ++i)
            v += (i ? "," : "") + std::to_string(chain->vertices[i]);
        o.summary << "chain: " << v << "\nrealized_gaps: " << fmt_list(chain->gaps) << '\n';
    } else {
        o.summary << "chain: none found\n";
    }
}

void run_distset(Params& p, std::uint64_t seed, Output& o) {
    const auto cloud = load_source(p);
    const auto k = p.integer("k", 2);
    require(k >= 1 && k <= 64, "parameter 'k' must lie in [1, 64]");
    const double eta = p.number_or_auto("eta", [&] { return cloud.diameter() / 64.0; }, true);
    const std::string mode = p.text("mode", "sampled");
    DistSetOptions opt;
    if (mode == "exact-pairs")
        opt.mode = DistSetMode::exact_pairs;
    else
        require(mode == "sampled", "parameter 'mode' must be 'exact-pairs' or 'sampled'");
    opt.seed = seed;
    if (opt.mode == DistSetMode::sampled) {
        const auto samples = p.integer("samples", 100000);
        require(samples >= 1, "parameter 'samples' must be >= 1");
        opt.samples = static_cast<std::size_t>(samples);
        opt.eps_ref = p.number_or_auto("eps-ref", [&] { return cloud.diameter() / 32.0; }, true);
    }
    const double cell_eps = opt.eps_ref.value_or(cloud.diameter() / 32.0);
    const auto index = make_index(p, cloud, cell_eps > 0.0 ? cell_eps : 1.0, o);
    const auto r = distance_set_volume(index, cloud, static_cast<int>(k), eta, opt);
    describe_cloud(cloud, o);
    o.result["report"] = to_json(r);
    o.summary << "occupied_boxes: " << r.occupied << "\nvolume: " << fmt(r.volume) << '\n';
}

void run_fourier(Params& p, std::uint64_t seed, Output& o) {
    const auto cloud = load_source(p);
    const std::string mode = p.text("mode", "scan");
    describe_cloud(cloud, o);
    if (mode == "mu-hat") {
        const auto xi = p.list("xi");
        const auto v = mu_hat(cloud, nullptr, xi);
        o.result["xi"] = xi;
        o.result["real"] = v.real();
        o.result["imag"] = v.imag();
        o.summary << "mu_hat: " << fmt(v.real()) << " + " << fmt(v.imag()) << "i\n";
    } else if (mode == "shell") {
        const double R = p.number("R");
        const auto samples = p.integer("samples", 20000);
        require(samples >= 1, "parameter 'samples' must be >= 1");
        const auto m = shell_energy(cloud, R, static_cast<std::size_t>(samples), seed);
        o.result["R"] = R;
        o.result["energy"] = to_json(m);
        o.summary << "shell_energy: " << fmt(m.estimate) << " +- " << fmt(m.standard_error) << '\n';
    } else if (mode == "energy") {
        const double alpha = p.number("alpha");
        const double r_max = p.number("r-max");
        const auto samples = p.integer("samples", 20000);
        require(samples >= 1, "parameter 'samples' must be >= 1");
        const auto r = energy_integral(cloud, nullptr, alpha, r_max, static_cast<std::size_t>(samples), seed);
        o.result["energy_integral"] = to_json(r);
        o.summary << "energy_integral: " << fmt(r.value) << " +- " << fmt(r.standard_error) << '\n';
    } else {
        require(mode == "scan", "parameter 'mode' must be 'scan', 'shell', 'energy' or 'mu-hat'");
        const auto samples = p.integer("samples", 20000);
        require(samples >= 1, "parameter 'samples' must be >= 1");
        const auto rungs = p.integer("rungs", 4);
        require(rungs >= 2 && rungs <= 64, "parameter 'rungs' must lie in [2, 64]");
        const auto window = frequency_window(cloud);
        const auto radii = dyadic_shell_radii(window, static_cast<int>(rungs));
        if (radii.size() < 2) throw UndefinedError("frequency window holds fewer than two dyadic shells");
        const auto r = shell_energy_scan(cloud, radii, static_cast<std::size_t>(samples), seed);
        o.result["window"] = {{"lo", window.lo}, {"hi", window.hi}};
        o.result["report"] = to_json(r);
        o.csv = to_csv(r);
        o.summary << "window: [" << fmt(window.lo) << ", " << fmt(window.hi) << "]\nexponent: "
                  << (r.exponent ? fmt(*r.exponent) : "undefined") << '\n';
    }
}

void run_schur(Params& p, std::uint64_t, Output& o) {
    const auto cloud = load_source(p);
    const double alpha = p.number("alpha");
    const double bound = schur_bound(cloud, alpha);
    describe_cloud(cloud, o);
    o.result["alpha"] = alpha;
    o.result["bound"] = bound;
    o.summary << "schur_bound: " << fmt(bound) << '\n';
}

using Runner = void (*)(Params&, std::uint64_t, Output&);

Runner runner_for(const std::string& name) {
    static const std::map<std::string, Runner> runners = {
        {"generate", run_generate}, {"ballcond", run_ballcond},     {"boxdim", run_boxdim},
        {"density", run_density},   {"scan-gaps", run_scan_gaps},   {"scaling", run_scaling},
        {"limit", run_limit},       {"find-chain", run_find_chain}, {"distset", run_distset},
        {"fourier", run_fourier},   {"schur", run_schur},
    };
    return runners.at(name);
}

std::string utc_stamp(std::chrono::system_clock::time_point t, const char* format) {
    const std::time_t tt = std::chrono::system_clock::to_time_t(t);
    std::tm tm{};
    gmtime_r(&tt, &tm);
    char buf[64];
    std::strftime(buf, sizeof buf, format, &tm);
    return buf;
}

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << content;
    if (!out) throw Error("failed writing " + path.string());
}

int report_error(std::ostream& err, const char* kind, const std::string& message, int code) {
    const json e = {{"error", kind}, {"message", message}, {"exit_code", code}};
    err << e.dump() << '\n';
    return code;
}

json load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open config file '" + path + "'");
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ValidationError("config file '" + path + "' is not valid JSON: " + e.what());
    }
    require(doc.is_object(), "config file must hold a JSON object");
    // a manifest replays its echoed config
    if (doc.contains("config") && doc["config"].is_object()) return doc["config"];
    return doc;
}

}  // namespace

const std::vector<std::string>& experiment_names() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> v;
        for (const auto& s : experiment_specs()) v.push_back(s.name);
        return v;
    }();
    return names;
}

int run_experiment(const json& config, std::ostream& out, std::ostream& err) {
    const auto wall_start = std::chrono::steady_clock::now();
    const auto started = std::chrono::system_clock::now();
    try {
        require(config.is_object(), "config must be a JSON object");
        require(config.contains("experiment") && config["experiment"].is_string(),
                "missing required parameter 'experiment'");
        const std::string name = config["experiment"].get<std::string>();
        const auto& spec = spec_for(name);
        check_keys(spec, config);

        Params p(config);
        p.echo()["experiment"] = name;
        const std::uint64_t seed = p.seed();
        if (p.has("threads")) {
            const auto threads = p.integer("threads");
            require(threads >= 1 && threads <= 4096, "parameter 'threads' must lie in [1, 4096]");
            set_thread_count(static_cast<unsigned>(threads));
        }

        fs::path dir;
        if (p.has("out")) {
            dir = absolute_path(p.text("out"));
        } else {
            const std::string base = absolute_path(p.text("run-dir", "runs"));
            dir = fs::path(base) / (name + "-" + utc_stamp(started, "%Y%m%dT%H%M%SZ") + "-seed" +
                                    std::to_string(seed));
        }

        Output o;
        runner_for(name)(p, seed, o);

        json result = {{"experiment", name}, {"seed", seed}};
        result.update(o.result);

        fs::create_directories(dir);
        write_file(dir / "result.json", result.dump(2) + "\n");
        if (!o.csv.empty()) write_file(dir / "result.csv", o.csv);
        for (const auto& [file, content] : o.extras) write_file(dir / file, content);
        std::ostringstream summary;
        summary << "experiment: " << name << "\nseed: " << seed << '\n' << o.summary.str();
        write_file(dir / "summary.txt", summary.str());

        const double wall =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();
        const json manifest = {{"tool", "chainlab"},
                               {"version", kVersion},
                               {"experiment", name},
                               {"config", p.echo()},
                               {"output_dir", dir.string()},
                               {"threads", thread_count()},
                               {"started_utc", utc_stamp(started, "%Y-%m-%dT%H:%M:%SZ")},
                               {"wall_time_seconds", wall}};
        write_file(dir / "manifest.json", manifest.dump(2) + "\n");
        out << summary.str() << "output: " << dir.string() << '\n';
        return 0;
    } catch (const ValidationError& e) {
        return report_error(err, "validation", e.what(), 2);
    } catch (const CapacityError& e) {
        return report_error(err, "capacity", e.what(), 3);
    } catch (const UndefinedError& e) {
        return report_error(err, "undefined", e.what(), 4);
    } catch (const json::exception& e) {
        return report_error(err, "validation", e.what(), 2);
    } catch (const std::exception& e) {
        return report_error(err, "internal", e.what(), 1);
    }
}

int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"chainlab: chain densities and Fourier diagnostics for fractal point clouds"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);

    // option values land here, keyed by option name; only options given on
    // the command line are copied into the config
    std::map<std::string, std::map<std::string, std::string>> values;
    std::map<std::string, std::map<std::string, bool>> flags;
    std::map<std::string, std::string> config_path;
    std::map<std::string, CLI::App*> subs;

    const auto add_common = [&](CLI::App* sub, const std::string& name) {
        sub->add_option("--config", config_path[name], "JSON config file or a manifest.json to replay");
        for (const char* key : {"seed", "threads", "out", "run-dir"})
            sub->add_option(std::string("--") + key, values[name][key]);
    };

    for (const auto& spec : experiment_specs()) {
        auto* sub = app.add_subcommand(spec.name, spec.help);
        subs[spec.name] = sub;
        add_common(sub, spec.name);
        if (spec.needs_source) {
            sub->add_option("--cloud", values[spec.name]["cloud"], "point-cloud CSV");
            sub->add_option("--ifs", values[spec.name]["ifs"], "IFS JSON path or cantor:<ratio>");
            sub->add_option("--level", values[spec.name]["level"], "IFS generation level");
        } else {
            sub->add_option("--ifs", values[spec.name]["ifs"], "IFS JSON path or cantor:<ratio>");
            sub->add_option("--level", values[spec.name]["level"], "IFS generation level");
        }
        for (const auto& key : spec.options) sub->add_option("--" + key, values[spec.name][key]);
        for (const auto& key : spec.flags) sub->add_flag("--" + key, flags[spec.name][key]);
    }
    auto* run = app.add_subcommand("run", "run the experiment named in a config file");
    subs["run"] = run;
    add_common(run, "run");
    run->get_option("--config")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        return report_error(err, "validation", e.what(), 2);
    }

    std::string chosen;
    for (const auto& [name, sub] : subs)
        if (sub->parsed()) chosen = name;

    json config = json::object();
    try {
        if (!config_path[chosen].empty()) config = load_config_file(config_path[chosen]);
    } catch (const ValidationError& e) {
        return report_error(err, "validation", e.what(), 2);
    }
    if (chosen != "run") {
        if (config.contains("experiment") && config["experiment"] != chosen)
            return report_error(err, "validation",
                                "config names experiment '" + config["experiment"].get<std::string>() +
                                    "' but the subcommand is '" + chosen + "'",
                                2);
        config["experiment"] = chosen;
    }
    for (const auto& [key, value] : values[chosen])
        if (subs[chosen]->count("--" + key) > 0) config[key] = value;
    for (const auto& [key, value] : flags[chosen])
        if (subs[chosen]->count("--" + key) > 0) config[key] = value;

    // environment mirrors --threads; an explicit flag or config value wins
    if (!config.contains("threads")) {
        if (const char* env = std::getenv("CHAINLAB_THREADS"); env && *env) config["threads"] = std::string(env);
    }
    return run_experiment(config, out, err);
}

}  // namespace chainlab
