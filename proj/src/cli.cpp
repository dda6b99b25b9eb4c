#include "htcsim/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "htcsim/errors.hpp"
#include "htcsim/report.hpp"
#include "htcsim/scenario.hpp"
#include "htcsim/simulation.hpp"

namespace htcsim {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct RunOptions {
    std::string scenario_path;
    std::string preset;
    std::optional<double> scale;
    std::uint64_t seed = 0;
    int seeds = 1;
    std::string out_dir = "out";
    bool trace = false;
    std::vector<std::string> sets;
};

void write_file(const fs::path& path, std::string_view text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError(fmt::format("cannot write '{}'", path.string()));
    f << text;
    if (!f) throw IoError(fmt::format("error writing '{}'", path.string()));
}

std::string read_file(const fs::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError(fmt::format("cannot read '{}'", path.string()));
    std::ostringstream buf;
    buf << f.rdbuf();
    return buf.str();
}

LoadResult load(const std::string& path, const std::string& preset, std::optional<double> scale,
                std::vector<std::string> sets) {
    if (!preset.empty()) sets.insert(sets.begin(), "preset=\"" + preset + "\"");
    if (scale) sets.insert(sets.begin() + (preset.empty() ? 0 : 1), fmt::format("scale={}", *scale));
    if (!path.empty()) return load_scenario_file(path, sets);
    if (preset.empty()) throw InvalidSpec("give a scenario file or --preset");
    return load_preset(preset, std::vector<std::string>(sets.begin() + 1, sets.end()));
}

void print_diagnostics(const std::vector<Diagnostic>& diags, std::ostream& err) {
    for (const auto& d : diags) err << "error: " << to_string(d) << '\n';
}

struct SeedRun {
    RunSummary summary;
    std::string csv;
    std::string trace;
    std::string error;
    int code = kExitOk;
};

SeedRun run_one(const Scenario& scenario, std::uint64_t seed, bool trace) {
    SeedRun r;
    try {
        Simulation sim(scenario, seed);
        std::string buf;
        if (trace)
            sim.set_trace_sink([&buf](const TraceRecord& rec) {
                buf += rec.to_line();
                buf += '\n';
            });
        r.summary = sim.run();
        r.csv = sim.report().to_csv();
        r.trace = std::move(buf);
    } catch (const InvariantViolation& e) {
        r.error = fmt::format("internal invariant violated: {}", e.what());
        r.code = kExitInternal;
    } catch (const InvalidSpec& e) {
        r.error = e.what();
        r.code = kExitConfig;
    } catch (const TooLarge& e) {
        r.error = e.what();
        r.code = kExitConfig;
    } catch (const std::exception& e) {
        r.error = fmt::format("internal error: {}", e.what());
        r.code = kExitInternal;
    }
    return r;
}

int cmd_validate(const RunOptions& o, std::ostream& out, std::ostream& err) {
    const LoadResult r = load(o.scenario_path, o.preset, o.scale, o.sets);
    if (!r.ok()) {
        print_diagnostics(r.diagnostics, err);
        return kExitConfig;
    }
    out << "OK\n";
    return kExitOk;
}

int cmd_run(const RunOptions& o, std::ostream& out, std::ostream& err) {
    LoadResult r = load(o.scenario_path, o.preset, o.scale, o.sets);
    if (!r.ok()) {
        print_diagnostics(r.diagnostics, err);
        return kExitConfig;
    }
    if (o.seeds < 1) throw InvalidSpec("--seeds must be >= 1");
    const Scenario& scenario = r.scenario;

    std::vector<SeedRun> runs(static_cast<std::size_t>(o.seeds));
    {
        const unsigned workers = std::max(1u, std::min(std::thread::hardware_concurrency(),
                                                        static_cast<unsigned>(o.seeds)));
        std::atomic<std::size_t> next{0};
        std::vector<std::jthread> pool;
        for (unsigned w = 0; w < workers; ++w)
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < runs.size(); i = next++)
                    runs[i] = run_one(scenario, o.seed + i, o.trace);
            });
    }

    int code = kExitOk;
    json printed = json::array();
    for (std::size_t i = 0; i < runs.size(); ++i) {
        const SeedRun& run = runs[i];
        const std::uint64_t seed = o.seed + i;
        if (run.code != kExitOk) {
            err << fmt::format("error (seed {}): {}\n", seed, run.error);
            code = std::max(code, run.code);
            continue;
        }
        const fs::path dir = o.seeds == 1 ? fs::path(o.out_dir) : fs::path(o.out_dir) / fmt::format("seed_{}", seed);
        std::error_code ec;
        fs::create_directories(dir, ec);
        if (ec) throw IoError(fmt::format("cannot create '{}': {}", dir.string(), ec.message()));
        Scenario resolved = scenario;
        resolved.seed = seed;
        const json summary = summary_to_json(run.summary, flatten(resolved));
        write_file(dir / "summary.json", summary.dump(2) + "\n");
        write_file(dir / "metrics.csv", run.csv);
        write_file(dir / "scenario.toml", to_toml(resolved));
        if (o.trace) write_file(dir / "trace.log", run.trace);
        json brief = summary;
        brief.erase("scenario");
        printed.push_back(brief);
    }
    if (!printed.empty()) out << (o.seeds == 1 ? printed.front() : printed).dump(2) << '\n';
    return code;
}

int cmd_compare(const std::string& a, const std::string& b, const std::vector<std::string>& allow,
                const std::string& out_path, std::ostream& out) {
    auto parse = [](const std::string& dir) {
        const std::string text = read_file(fs::path(dir) / "summary.json");
        try {
            return json::parse(text);
        } catch (const json::parse_error& e) {
            throw InvalidSpec(fmt::format("{}: malformed summary.json: {}", dir, e.what()));
        }
    };
    const json ja = parse(a);
    const json jb = parse(b);
    std::set<std::string> allowed = default_compare_keys();
    allowed.insert(allow.begin(), allow.end());
    const CompareReport report = compare_summaries(ja, jb, allowed);
    out << format_table(report);
    write_file(out_path, to_json(report).dump(2) + "\n");
    return kExitOk;
}

}  // namespace

int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Discrete-event simulator of HTC workloads on HPC clusters"};
    app.require_subcommand(1);

    RunOptions vo;
    auto* validate_cmd = app.add_subcommand("validate", "Check a scenario file and report every problem");
    validate_cmd->add_option("scenario", vo.scenario_path, "Scenario TOML file");
    validate_cmd->add_option("--preset", vo.preset, "Start from a named preset");
    validate_cmd->add_option("--scale", vo.scale, "Preset scale factor");
    validate_cmd->add_option("--set", vo.sets, "Override a scenario key (key=value)");

    RunOptions ro;
    auto* run_cmd = app.add_subcommand("run", "Run a scenario and write summary.json, metrics.csv, trace.log");
    run_cmd->add_option("scenario", ro.scenario_path, "Scenario TOML file");
    run_cmd->add_option("--preset", ro.preset, "Start from a named preset");
    run_cmd->add_option("--scale", ro.scale, "Preset scale factor");
    run_cmd->add_option("--seed", ro.seed, "Random seed (default 0)");
    run_cmd->add_option("--seeds", ro.seeds, "Run this many consecutive seeds in parallel");
    run_cmd->add_option("--out", ro.out_dir, "Output directory (default ./out)");
    run_cmd->add_flag("--trace", ro.trace, "Also write trace.log");
    run_cmd->add_option("--set", ro.sets, "Override a scenario key (key=value)");

    std::string run_a, run_b, compare_out = "compare.json";
    std::vector<std::string> allow;
    auto* compare_cmd = app.add_subcommand("compare", "Compare the summaries of two run directories");
    compare_cmd->add_option("run_a", run_a, "First run directory")->required();
    compare_cmd->add_option("run_b", run_b, "Second run directory")->required();
    compare_cmd->add_option("--allow", allow, "Extra scenario key allowed to differ");
    compare_cmd->add_option("--out", compare_out, "Where to write compare.json");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        return kExitConfig;
    }

    try {
        if (validate_cmd->parsed()) return cmd_validate(vo, out, err);
        if (run_cmd->parsed()) return cmd_run(ro, out, err);
        if (compare_cmd->parsed()) return cmd_compare(run_a, run_b, allow, compare_out, out);
    } catch (const IoError& e) {
        err << "error: " << e.what() << '\n';
        return kExitIo;
    } catch (const InvariantViolation& e) {
        err << "internal invariant violated: " << e.what() << '\n';
        return kExitInternal;
    } catch (const SimError& e) {
        err << "error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::exception& e) {
        err << "internal error: " << e.what() << '\n';
        return kExitInternal;
    }
    return kExitConfig;
}

}  // namespace htcsim
