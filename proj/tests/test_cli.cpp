#include <doctest.h>

#include <algorithm>
#include <cstdlib>
#include <limits>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "chainlab/cli.hpp"
#include "chainlab/cloud_io.hpp"
#include "chainlab/parallel.hpp"
#include "chainlab/report_io.hpp"
#include "oracles.hpp"

using namespace chainlab;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Run {
    int code = 0;
    std::string out;
    std::string err;
};

Run cli(std::vector<std::string> args) {
    args.insert(args.begin(), "chainlab");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    Run r;
    r.code = cli_main(static_cast<int>(argv.size()), argv.data(), out, err);
    r.out = out.str();
    r.err = err.str();
    set_thread_count(0);
    return r;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

struct Scratch {
    fs::path root;
    Scratch() {
        root = fs::temp_directory_path() / ("chainlab-test-" + std::to_string(std::random_device{}()));
        fs::create_directories(root);
    }
    ~Scratch() {
        std::error_code ec;
        fs::remove_all(root, ec);
    }
    std::string path(const std::string& name) const { return (root / name).string(); }
};

std::string square_csv(const Scratch& s) {
    const auto p = s.path("square4.csv");
    save_cloud_csv(p, oracle::square4().measure());
    return p;
}

json error_of(const Run& r) { return json::parse(r.err); }

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("density on the square prints 6.25 and writes the artifacts") {
    Scratch s;
    const auto r = cli({"density", "--cloud", square_csv(s), "--gaps", "1,1", "--eps", "0.1", "--out", s.path("run")});
    REQUIRE(r.code == 0);
    CHECK(r.out.find("density: 6.25\n") != std::string::npos);
    const auto result = json::parse(slurp(s.path("run/result.json")));
    CHECK(result["density"].get<double>() == doctest::Approx(6.25));
    CHECK(result["seed"] == 0);
    CHECK(fs::exists(s.path("run/summary.txt")));
    const auto manifest = json::parse(slurp(s.path("run/manifest.json")));
    CHECK(manifest["version"] == kVersion);
    CHECK(manifest["config"]["gaps"].is_array());
    CHECK(manifest.contains("wall_time_seconds"));
}

TEST_CASE("missing gaps is a schema error naming the field") {
    Scratch s;
    const auto r = cli({"density", "--cloud", square_csv(s), "--eps", "0.1", "--out", s.path("run")});
    CHECK(r.code == 2);
    const auto e = error_of(r);
    CHECK(e["exit_code"] == 2);
    CHECK(e["message"].get<std::string>().find("gaps") != std::string::npos);
}

TEST_CASE("input source must be exactly one") {
    Scratch s;
    CHECK(cli({"density", "--gaps", "1", "--eps", "0.1", "--out", s.path("a")}).code == 2);
    CHECK(cli({"density", "--cloud", square_csv(s), "--ifs", "cantor:0.45", "--level", "2", "--gaps", "1", "--eps",
               "0.1", "--out", s.path("b")})
              .code == 2);
}

TEST_CASE("unknown parameters and bad values are rejected") {
    Scratch s;
    CHECK(cli({"density", "--cloud", square_csv(s), "--gaps", "1", "--eps", "0.1", "--bogus", "3"}).code == 2);
    const auto cfg = s.path("cfg.json");
    std::ofstream(cfg) << R"({"cloud": ")" << square_csv(s) << R"(", "gaps": [1], "eps": 0.1, "colour": "red"})";
    const auto r = cli({"density", "--config", cfg, "--out", s.path("run")});
    CHECK(r.code == 2);
    CHECK(error_of(r)["message"].get<std::string>().find("colour") != std::string::npos);
    CHECK(cli({"density", "--cloud", square_csv(s), "--gaps", "1", "--eps", "-1", "--out", s.path("x")}).code == 2);
}

TEST_CASE("capacity guard exits with 3") {
    Scratch s;
    const auto r = cli({"generate", "--ifs", "cantor:0.45", "--level", "12", "--out", s.path("run")});
    CHECK(r.code == 3);
    CHECK(error_of(r)["error"] == "capacity");
}

TEST_CASE("undefined degenerate fraction exits with 4") {
    Scratch s;
    const auto r = cli({"find-chain", "--cloud", square_csv(s), "--gaps", "0.5,0.5", "--eps", "0.1", "--out",
                        s.path("run")});
    CHECK(r.code == 4);
    CHECK(!error_of(r)["message"].get<std::string>().empty());
}

TEST_CASE("identical config and seed give byte-identical results") {
    Scratch s;
    const std::vector<std::string> base = {"distset", "--ifs", "cantor:0.45", "--level", "4", "--k", "2",
                                           "--samples", "20000", "--seed", "5"};
    auto a = base, b = base;
    a.insert(a.end(), {"--out", s.path("a")});
    b.insert(b.end(), {"--out", s.path("b")});
    REQUIRE(cli(a).code == 0);
    REQUIRE(cli(b).code == 0);
    CHECK(slurp(s.path("a/result.json")) == slurp(s.path("b/result.json")));
    CHECK(slurp(s.path("a/summary.txt")) == slurp(s.path("b/summary.txt")));
}

TEST_CASE("replaying a manifest reproduces the result") {
    Scratch s;
    REQUIRE(cli({"find-chain", "--ifs", "cantor:0.45", "--level", "4", "--gaps", "0.5,0.5", "--eps", "auto",
                 "--seed", "3", "--chains", "5", "--out", s.path("a")})
                .code == 0);
    REQUIRE(cli({"run", "--config", s.path("a/manifest.json"), "--out", s.path("b")}).code == 0);
    CHECK(slurp(s.path("a/result.json")) == slurp(s.path("b/result.json")));
    CHECK(slurp(s.path("a/chains.jsonl")) == slurp(s.path("b/chains.jsonl")));
    const auto manifest = json::parse(slurp(s.path("a/manifest.json")));
    for (const char* key : {"ifs", "level", "gaps", "eps", "seed", "chains", "delta", "max-draws", "samples"})
        CHECK_MESSAGE(manifest["config"].contains(key), key);
}

TEST_CASE("results do not depend on the thread count") {
    Scratch s;
    const std::vector<std::string> base = {"scaling", "--ifs", "cantor:0.45", "--level", "5", "--gaps",
                                           "0.6,0.6", "--ladder", "0.2,0.1,0.07"};
    auto a = base, b = base;
    a.insert(a.end(), {"--threads", "1", "--out", s.path("a")});
    b.insert(b.end(), {"--threads", "3", "--out", s.path("b")});
    REQUIRE(cli(a).code == 0);
    REQUIRE(cli(b).code == 0);
    CHECK(slurp(s.path("a/result.json")) == slurp(s.path("b/result.json")));
    CHECK(json::parse(slurp(s.path("b/manifest.json")))["threads"] == 3);
}

TEST_CASE("the thread environment variable applies unless a flag is given") {
    Scratch s;
    ::setenv("CHAINLAB_THREADS", "2", 1);
    REQUIRE(cli({"schur", "--ifs", "cantor:0.45", "--level", "3", "--alpha", "0.5", "--out", s.path("a")}).code == 0);
    REQUIRE(cli({"schur", "--ifs", "cantor:0.45", "--level", "3", "--alpha", "0.5", "--threads", "1", "--out",
                 s.path("b")})
                .code == 0);
    ::unsetenv("CHAINLAB_THREADS");
    CHECK(json::parse(slurp(s.path("a/manifest.json")))["threads"] == 2);
    CHECK(json::parse(slurp(s.path("b/manifest.json")))["threads"] == 1);
}

TEST_CASE("config files and flag overrides") {
    Scratch s;
    const auto cfg = s.path("cfg.json");
    std::ofstream(cfg) << R"({"experiment": "density", "cloud": ")" << square_csv(s)
                       << R"(", "gaps": [1, 1], "eps": 0.2})";
    const auto a = cli({"run", "--config", cfg, "--out", s.path("a")});
    REQUIRE(a.code == 0);
    CHECK(a.out.find("density: 1.5625\n") != std::string::npos);
    const auto b = cli({"density", "--config", cfg, "--eps", "0.1", "--out", s.path("b")});
    REQUIRE(b.code == 0);
    CHECK(b.out.find("density: 6.25\n") != std::string::npos);
    CHECK(cli({"scaling", "--config", cfg, "--out", s.path("c")}).code == 2);
}

TEST_CASE("scan-gaps on a Cantor cloud reports an interval") {
    Scratch s;
    const auto r = cli({"scan-gaps", "--ifs", "cantor:0.45", "--level", "5", "--k", "1", "--grid", "32", "--eps",
                        "auto", "--out", s.path("run")});
    REQUIRE(r.code == 0);
    CHECK(r.out.find("interval: [") != std::string::npos);
    CHECK(fs::exists(s.path("run/result.csv")));
}

TEST_CASE("default run directory name carries experiment and seed") {
    Scratch s;
    REQUIRE(cli({"generate", "--ifs", "cantor:0.45", "--level", "2", "--seed", "9", "--run-dir", s.path("runs")})
                .code == 0);
    std::vector<fs::path> dirs;
    for (const auto& e : fs::directory_iterator(s.path("runs"))) dirs.push_back(e.path());
    REQUIRE(dirs.size() == 1);
    const auto name = dirs[0].filename().string();
    CHECK(name.rfind("generate-", 0) == 0);
    CHECK(name.size() > 6);
    CHECK(name.substr(name.size() - 6) == "-seed9");
    const auto cloud = load_cloud_csv((dirs[0] / "cloud.csv").string());
    CHECK(cloud.size() == 16);
}

TEST_CASE("every experiment is reachable") {
    const auto& names = experiment_names();
    CHECK(names.size() == 11);
    for (const char* n : {"generate", "ballcond", "boxdim", "density", "scan-gaps", "scaling", "limit", "find-chain",
                          "distset", "fourier", "schur"})
        CHECK(std::find(names.begin(), names.end(), n) != names.end());
}

}  // TEST_SUITE

TEST_SUITE("report_io") {

TEST_CASE("undefined numbers serialize as null") {
    EpsLadderResult r;
    r.eps = {0.1, 0.05, 0.02};
    r.densities = {1, 1, 1};
    r.m_est = std::numeric_limits<double>::quiet_NaN();
    const auto j = to_json(r);
    CHECK(j["m_est"].is_null());
    CHECK(j["beta"].is_null());
    CHECK(to_csv(r).find("eps") != std::string::npos);
}

TEST_CASE("chains serialize with coordinates") {
    const auto c = oracle::square4().measure();
    Chain chain;
    chain.vertices = {0, 1, 3};
    chain.gaps = {1.0, 1.0};
    const auto j = to_json(chain, c);
    REQUIRE(j["vertices"].size() == 3);
    CHECK(j["vertices"][2] == json::array({1.0, 1.0}));
    CHECK(j["indices"] == json::array({0, 1, 3}));
    std::ostringstream out;
    write_chains_jsonl(out, c, {chain, chain});
    std::istringstream lines(out.str());
    std::string line;
    int n = 0;
    while (std::getline(lines, line)) {
        CHECK(json::parse(line) == j);
        ++n;
    }
    CHECK(n == 2);
}

TEST_CASE("scaling CSV has one row per rung") {
    ScalingReport r;
    r.k = 1;
    r.gaps = {1.0};
    r.eps = {0.2, 0.1};
    r.masses = {0.5, 0.5};
    r.densities = {1.25, 2.5};
    const auto csv = to_csv(r);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
    CHECK(to_json(r)["slope"].is_null());
}

}  // TEST_SUITE
