#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "htcsim/cli.hpp"
#include "htcsim/errors.hpp"
#include "htcsim/report.hpp"
#include "htcsim/scenario.hpp"

using namespace htcsim;
namespace fs = std::filesystem;

namespace {

const char* const kMinimal = R"(
schema_version = 1
name = "mini"
duration_h = 6

[cluster]
nodes = 8
cores_per_node = 4
torus = [2, 2, 2]

[overlay]
target_pilots = 2
pilot_nodes = 1
pilot_walltime_h = 2

[htc]
n_tasks = 20
runtime_h = { dist = "uniform", lo = 0.5, hi = 1.5 }
input_gb = 0.4

[hpc]
target_backlog_nodes = 8
)";

bool has_key(const LoadResult& r, std::string_view key) {
    for (const auto& d : r.diagnostics)
        if (d.key == key) return true;
    return false;
}

struct CliResult {
    int code;
    std::string out;
    std::string err;
};

CliResult cli(std::vector<std::string> args) {
    args.insert(args.begin(), "htcsim");
    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    std::ostringstream out, err;
    const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("htcsim_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

void write(const fs::path& p, std::string_view text) { std::ofstream(p) << text; }

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream s;
    s << f.rdbuf();
    return s.str();
}

}  // namespace

TEST_SUITE("scenario") {
    TEST_CASE("minimal file loads") {
        const LoadResult r = load_scenario_text(kMinimal, "mini.toml");
        REQUIRE(r.ok());
        CHECK(r.scenario.name == "mini");
        CHECK(r.scenario.cluster.nodes == 8);
        CHECK(r.scenario.duration == SimTime::from_hours(6));
        CHECK(r.scenario.htc.runtime_h.kind == Distribution::Kind::uniform);
        CHECK(r.scenario.htc.runtime_h.b == 1.5);
        CHECK(r.scenario.htc.input_gb.a == 0.4);
    }

    TEST_CASE("every problem is reported with its key path") {
        const std::string text = std::string(kMinimal) + R"(
[data]
dtn_count = 0
bogus = 3
)";
        const std::vector<std::string> sets{"overlay.pilot_nodes=9", "htc.runtime_h={dist=\"uniform\", lo=2, hi=1}"};
        const LoadResult r = load_scenario_text(text, "x.toml", sets);
        CHECK(has_key(r, "overlay.pilot_nodes, cluster.nodes"));
        CHECK(has_key(r, "data.dtn_count"));
        CHECK(has_key(r, "data.bogus"));
        CHECK(has_key(r, "htc.runtime_h"));
    }

    TEST_CASE("overrides replace file values and reach nested keys") {
        const std::vector<std::string> sets{"cluster.nodes=16", "cluster.torus=[4,2,2]", "name=other",
                                            "data.credential.auto_renew=false", "overlay.checkpoint_interval_min=inf"};
        const LoadResult r = load_scenario_text(kMinimal, "x.toml", sets);
        REQUIRE(r.ok());
        CHECK(r.scenario.cluster.nodes == 16);
        CHECK(r.scenario.name == "other");
        CHECK_FALSE(r.scenario.data.credential.auto_renew);
        CHECK(r.scenario.overlay.checkpoint_interval.is_infinite());
    }

    TEST_CASE("canonical TOML round-trips") {
        for (auto name : preset_names()) {
            const Scenario s = make_preset(name, 0.01);
            const LoadResult back = load_scenario_text(to_toml(s), "rt.toml");
            REQUIRE(back.ok());
            CHECK(flatten(back.scenario) == flatten(s));
            CHECK(scenario_hash(back.scenario) == scenario_hash(s));
        }
    }

    TEST_CASE("hash ignores the seed only") {
        Scenario a = make_preset("ligo", 0.001);
        Scenario b = a;
        b.seed = 99;
        CHECK(scenario_hash(a) == scenario_hash(b));
        b.cluster.nodes += 1;
        CHECK(scenario_hash(a) != scenario_hash(b));
    }

    TEST_CASE("preset files can be extended") {
        const std::string text = "preset = \"ligo\"\nscale = 0.001\n[htc]\nn_tasks = 7\n";
        const LoadResult r = load_scenario_text(text, "p.toml");
        REQUIRE(r.ok());
        CHECK(r.scenario.htc.n_tasks == 7);
        CHECK(r.scenario.cluster.nodes == 20);
        const LoadResult bad = load_scenario_text("preset = \"cms\"\n", "p.toml");
        CHECK(has_key(bad, "preset"));
    }

    TEST_CASE("syntax errors become diagnostics") {
        const LoadResult r = load_scenario_text("[cluster\nnodes = 3", "broken.toml");
        CHECK_FALSE(r.ok());
    }
}

TEST_SUITE("cli") {
    TEST_CASE("validate exit codes") {
        const fs::path dir = scratch("validate");
        write(dir / "ok.toml", kMinimal);
        auto ok = cli({"validate", (dir / "ok.toml").string()});
        CHECK(ok.code == kExitOk);
        CHECK(ok.out == "OK\n");

        auto bad = cli({"validate", (dir / "ok.toml").string(), "--set", "overlay.pilot_nodes=99"});
        CHECK(bad.code == kExitConfig);
        CHECK(bad.err.find("overlay.pilot_nodes") != std::string::npos);
        CHECK(bad.err.find("cluster.nodes") != std::string::npos);

        CHECK(cli({"validate", (dir / "missing.toml").string()}).code == kExitIo);
        CHECK(cli({"validate", "--preset", "atlas_bw", "--scale", "0.01"}).code == kExitOk);
        CHECK(cli({"validate", "--preset", "nope"}).code == kExitConfig);
        CHECK(cli({"frobnicate"}).code == kExitConfig);
    }

    TEST_CASE("run writes artifacts and echoes the default seed") {
        const fs::path dir = scratch("run");
        write(dir / "mini.toml", kMinimal);
        const auto r = cli({"run", (dir / "mini.toml").string(), "--out", (dir / "out").string(), "--trace"});
        REQUIRE(r.code == kExitOk);
        const auto printed = nlohmann::json::parse(r.out);
        CHECK(printed.at("seed") == 0);
        CHECK_FALSE(printed.contains("scenario"));
        for (const char* f : {"summary.json", "metrics.csv", "trace.log", "scenario.toml"})
            CHECK(fs::exists(dir / "out" / f));
        CHECK(slurp(dir / "out" / "metrics.csv").rfind("time_ms,metric,value\n", 0) == 0);
        const auto summary = nlohmann::json::parse(slurp(dir / "out" / "summary.json"));
        CHECK(summary.at("scenario").at("cluster.nodes") == "8");
        const double u = summary.at("utilization_mean");
        CHECK(u >= 0.0);
        CHECK(u <= 1.0);
        CHECK(summary.at("htc_core_hours").get<double>() + summary.at("hpc_core_hours").get<double>() <=
              summary.at("capacity_core_hours").get<double>() + 1e-9);
        // The written scenario reproduces the run.
        const auto again = cli({"run", (dir / "out" / "scenario.toml").string(), "--out", (dir / "again").string()});
        REQUIRE(again.code == kExitOk);
        CHECK(slurp(dir / "again" / "metrics.csv") == slurp(dir / "out" / "metrics.csv"));
    }

    TEST_CASE("several seeds land in their own directories") {
        const fs::path dir = scratch("seeds");
        write(dir / "mini.toml", kMinimal);
        const auto r = cli({"run", (dir / "mini.toml").string(), "--seed", "3", "--seeds", "3", "--out",
                            (dir / "out").string()});
        REQUIRE(r.code == kExitOk);
        const auto printed = nlohmann::json::parse(r.out);
        REQUIRE(printed.size() == 3);
        for (int i = 0; i < 3; ++i) {
            CHECK(printed[static_cast<std::size_t>(i)].at("seed") == 3 + i);
            CHECK(fs::exists(dir / "out" / ("seed_" + std::to_string(3 + i)) / "summary.json"));
        }
    }

    TEST_CASE("compare") {
        const fs::path dir = scratch("compare");
        write(dir / "mini.toml", kMinimal);
        const std::string f = (dir / "mini.toml").string();
        REQUIRE(cli({"run", f, "--out", (dir / "a").string()}).code == kExitOk);
        REQUIRE(cli({"run", f, "--out", (dir / "b").string()}).code == kExitOk);
        REQUIRE(cli({"run", f, "--out", (dir / "big").string(), "--set", "cluster.nodes=12", "--set",
                     "cluster.torus=[3,2,2]"})
                    .code == kExitOk);

        const auto same = cli({"compare", (dir / "a").string(), (dir / "b").string(), "--out",
                               (dir / "same.json").string()});
        REQUIRE(same.code == kExitOk);
        const auto report = nlohmann::json::parse(slurp(dir / "same.json"));
        CHECK_FALSE(report.at("deltas").empty());
        for (const auto& [k, d] : report.at("deltas").items()) CHECK(d.at("absolute") == 0.0);

        const auto mismatch = cli({"compare", (dir / "a").string(), (dir / "big").string(), "--out",
                                   (dir / "x.json").string()});
        CHECK(mismatch.code == kExitConfig);
        CHECK(mismatch.err.find("cluster.nodes") != std::string::npos);

        const auto allowed = cli({"compare", (dir / "a").string(), (dir / "big").string(), "--allow",
                                  "cluster.nodes", "--allow", "cluster.torus", "--out", (dir / "y.json").string()});
        CHECK(allowed.code == kExitOk);
        CHECK(cli({"compare", (dir / "a").string(), (dir / "nowhere").string()}).code == kExitIo);
    }

    TEST_CASE("turning backfill on raises utilization") {
        const fs::path dir = scratch("backfill");
        const std::string f = (fs::path(HTCSIM_SCENARIO_DIR) / "backfill_off.toml").string();
        REQUIRE(cli({"run", f, "--out", (dir / "off").string()}).code == kExitOk);
        REQUIRE(cli({"run", f, "--set", "cluster.backfill=true", "--out", (dir / "on").string()}).code == kExitOk);
        const auto r = cli({"compare", (dir / "off").string(), (dir / "on").string(), "--allow", "cluster.backfill",
                            "--out", (dir / "delta.json").string()});
        REQUIRE(r.code == kExitOk);
        const auto report = nlohmann::json::parse(slurp(dir / "delta.json"));
        CHECK(report.at("deltas").at("utilization_mean").at("absolute").get<double>() > 0.0);
        CHECK(report.at("deltas").at("htc_tasks_completed").at("absolute").get<double>() > 0.0);
    }
}
