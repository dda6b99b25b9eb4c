#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "htcsim/cluster.hpp"
#include "htcsim/dataplane.hpp"
#include "htcsim/overlay.hpp"
#include "htcsim/workload.hpp"

namespace htcsim {

inline constexpr int kSchemaVersion = 1;

/// Everything one run needs. Loaded from a TOML scenario file, optionally on
/// top of a named preset.
struct Scenario {
    int schema_version = kSchemaVersion;
    std::string name = "custom";
    std::string preset;  // empty when built from defaults
    double scale = 1.0;
    std::uint64_t seed = 0;
    SimTime duration = SimTime::from_hours(24);
    SimTime sample_period = SimTime::from_seconds(300);
    /// Samples before this instant are excluded from summary statistics.
    SimTime warmup = SimTime::from_hours(2);

    ClusterConfig cluster;
    OverlayConfig overlay;
    DataConfig data;
    HtcSpec htc;
    HpcBackgroundSpec hpc;
};

struct Diagnostic {
    std::string key;  // dotted path, or several joined by ", "
    std::string message;
};

std::string to_string(const Diagnostic& d);

/// Names accepted by make_preset.
std::span<const std::string_view> preset_names();
/// Throws UnknownPreset.
Scenario make_preset(std::string_view name, double scale = 1.0);

/// Near-cubic torus shape for `nodes`: the factorisation with the smallest
/// largest side, larger sides first.
std::array<int, 3> torus_shape(int nodes);

/// Semantic checks; empty when the scenario can be run.
std::vector<Diagnostic> validate(const Scenario& s);

struct LoadResult {
    Scenario scenario;
    std::vector<Diagnostic> diagnostics;  // parse, type, unknown-key and semantic problems

    bool ok() const { return diagnostics.empty(); }
};

/// `overrides` are `dotted.key=value` strings; values use TOML syntax, and
/// anything that does not parse as a TOML value is taken as a bare string.
LoadResult load_scenario_text(std::string_view text, std::string_view source,
                              std::span<const std::string> overrides = {});
/// Throws IoError when the file cannot be read.
LoadResult load_scenario_file(const std::filesystem::path& path, std::span<const std::string> overrides = {});
LoadResult load_preset(std::string_view name, std::span<const std::string> overrides = {});

/// Canonical TOML rendering with every key spelled out.
std::string to_toml(const Scenario& s);
/// Canonical rendering as flat `dotted.key -> value text` pairs.
std::map<std::string, std::string> flatten(const Scenario& s);
/// FNV-1a of the canonical rendering without the seed.
std::uint64_t scenario_hash(const Scenario& s);

}  // namespace htcsim
