#include "htcsim/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include <fmt/format.h>
#define TOML_ENABLE_WINDOWS_COMPAT 0
#include <tomlplusplus/toml.hpp>

#include "htcsim/errors.hpp"
#include "htcsim/rng.hpp"

namespace htcsim {

std::string to_string(const Diagnostic& d) { return fmt::format("{}: {}", d.key, d.message); }

namespace {

constexpr std::string_view kPresets[] = {"ligo", "atlas_bw", "titan_backfill"};

int scaled(double base, double scale) { return std::max(1, static_cast<int>(std::lround(base * scale))); }

}  // namespace

std::span<const std::string_view> preset_names() { return kPresets; }

std::array<int, 3> torus_shape(int nodes) {
    std::array<int, 3> best{nodes, 1, 1};
    for (int x = 1; x <= nodes; ++x) {
        if (nodes % x) continue;
        const int rest = nodes / x;
        for (int y = 1; y <= x && y <= rest; ++y) {
            if (rest % y) continue;
            const int z = rest / y;
            if (z > y) continue;
            if (x < best[0]) best = {x, y, z};
        }
    }
    return best;
}

Scenario make_preset(std::string_view name, double scale) {
    if (!(scale > 0) || !std::isfinite(scale)) throw InvalidSpec(fmt::format("scale must be > 0, got {}", scale));
    Scenario s;
    s.name = std::string(name);
    s.preset = std::string(name);
    s.scale = scale;
    s.warmup = SimTime::from_hours(2);
    s.sample_period = SimTime::from_seconds(300);

    if (name == "ligo") {
        s.duration = SimTime::from_hours(72);
        s.cluster.nodes = scaled(20000, scale);
        s.cluster.placement = Placement::transparent;
        s.overlay.mode = OverlayMode::glidein;
        s.overlay.pilot_nodes = 1;
        s.overlay.target_pilots = std::max(1, s.cluster.nodes / 4);
        s.overlay.pilot_walltime = SimTime::from_hours(12);
        s.htc.n_tasks = scaled(100000, scale);
        s.htc.runtime_h = Distribution::lognormal(std::log(4.0), 0.5, 12.0);
        s.htc.input_gb = Distribution::constant(0.4);
        s.htc.output_gb = Distribution::constant(0.01);
        s.htc.memory_gb = 1.5;
        s.htc.runtime_noise = 0.1;
        s.hpc.target_backlog_nodes = s.cluster.nodes;
    } else if (name == "atlas_bw") {
        s.duration = SimTime::from_hours(96);
        s.cluster.nodes = scaled(20000, scale);
        s.cluster.placement = Placement::topology_aware;
        s.cluster.compactness_limit = 1.0;
        s.overlay.mode = OverlayMode::glidein;
        s.overlay.pilot_nodes = 1;
        s.overlay.target_pilots = std::max(1, s.cluster.nodes / 10);
        s.overlay.pilot_walltime = SimTime::from_hours(4);
        s.data.cache_gb = 2000;
        s.htc.n_tasks = scaled(100000, scale);
        s.htc.runtime_h = Distribution::lognormal(std::log(1.5), 0.5, 12.0);
        s.htc.input_gb = Distribution::uniform(0.5, 4.0);
        s.htc.output_gb = Distribution::constant(0.2);
        s.htc.memory_gb = 1.8;
        s.htc.runtime_noise = 0.2;
        s.htc.tasks_per_dataset = 10;
        s.hpc.target_backlog_nodes = 4LL * s.cluster.nodes;
        s.hpc.max_nodes_fraction = 0.5;
        s.hpc.size_skew = 1.6;
    } else if (name == "titan_backfill") {
        s.duration = SimTime::from_hours(48);
        s.cluster.nodes = scaled(18688, scale);
        s.cluster.cores_per_node = 16;
        s.cluster.memory_gb = 32;
        s.cluster.placement = Placement::transparent;
        s.overlay.mode = OverlayMode::backfill_broker;
        s.overlay.startup_latency = SimTime::zero();
        s.overlay.broker_period = SimTime::from_seconds(60);
        s.htc.n_tasks = scaled(100000, scale);
        s.htc.runtime_h = Distribution::lognormal(std::log(1.5), 0.5, 12.0);
        s.htc.input_gb = Distribution::constant(0.2);
        s.htc.output_gb = Distribution::constant(0.05);
        s.htc.memory_gb = 1.5;
        s.htc.runtime_noise = 0.2;
        s.hpc.target_backlog_nodes = s.cluster.nodes;
    } else {
        throw UnknownPreset(fmt::format("unknown preset '{}'", name));
    }
    s.cluster.torus = torus_shape(s.cluster.nodes);
    return s;
}

std::vector<Diagnostic> validate(const Scenario& s) {
    std::vector<Diagnostic> out;
    auto bad = [&](std::string key, std::string msg) { out.push_back({std::move(key), std::move(msg)}); };

    if (s.schema_version != kSchemaVersion)
        bad("schema_version", fmt::format("unsupported version {} (expected {})", s.schema_version, kSchemaVersion));
    if (!(s.scale > 0)) bad("scale", "must be > 0");
    if (s.duration == SimTime::zero() || s.duration.is_infinite()) bad("duration_h", "must be finite and > 0");
    if (s.sample_period == SimTime::zero() || s.sample_period.is_infinite())
        bad("sample_period_s", "must be finite and > 0");
    if (s.warmup.is_infinite()) bad("warmup_h", "must be finite");

    const auto& c = s.cluster;
    if (c.nodes < 1) bad("cluster.nodes", "must be >= 1");
    if (c.cores_per_node < 1) bad("cluster.cores_per_node", "must be >= 1");
    if (!(c.memory_gb > 0)) bad("cluster.memory_gb", "must be > 0");
    const bool auto_torus = c.torus == std::array<int, 3>{0, 0, 0};
    if (!auto_torus) {
        if (c.torus[0] < 1 || c.torus[1] < 1 || c.torus[2] < 1)
            bad("cluster.torus", "every dimension must be >= 1");
        else if (static_cast<long long>(c.torus[0]) * c.torus[1] * c.torus[2] != c.nodes)
            bad("cluster.torus, cluster.nodes",
                fmt::format("torus {}x{}x{} does not hold {} nodes", c.torus[0], c.torus[1], c.torus[2], c.nodes));
    }
    if (!(c.compactness_limit >= 1)) bad("cluster.compactness_limit", "must be >= 1");
    if (c.scheduler_period == SimTime::zero() || c.scheduler_period.is_infinite())
        bad("cluster.scheduler_period_s", "must be finite and > 0");

    const auto& o = s.overlay;
    if (o.target_pilots < 0) bad("overlay.target_pilots", "must be >= 0");
    if (o.pilot_nodes < 1) bad("overlay.pilot_nodes", "must be >= 1");
    if (o.pilot_nodes > c.nodes)
        bad("overlay.pilot_nodes, cluster.nodes",
            fmt::format("overlay.pilot_nodes ({}) exceeds cluster.nodes ({})", o.pilot_nodes, c.nodes));
    if (o.pilot_walltime == SimTime::zero() || o.pilot_walltime.is_infinite())
        bad("overlay.pilot_walltime_h", "must be finite and > 0");
    if (o.broker_period == SimTime::zero() || o.broker_period.is_infinite())
        bad("overlay.broker_period_s", "must be finite and > 0");
    if (o.startup_latency.is_infinite()) bad("overlay.startup_latency_s", "must be finite");
    if (o.max_wrapper_walltime == SimTime::zero() || o.max_wrapper_walltime.is_infinite())
        bad("overlay.max_wrapper_walltime_h", "must be finite and > 0");
    if (o.startup_latency >= o.pilot_walltime)
        bad("overlay.startup_latency_s, overlay.pilot_walltime_h", "pilots would expire before registering");
    if (!(o.policy.max_memory_gb > 0)) bad("overlay.policy.max_memory_gb", "must be > 0");
    if (!(o.policy.max_runtime_h > 0)) bad("overlay.policy.max_runtime_h", "must be > 0");
    if (!(o.policy.max_io_gb >= 0)) bad("overlay.policy.max_io_gb", "must be >= 0");
    if (o.policy.max_cores < 1) bad("overlay.policy.max_cores", "must be >= 1");

    const auto& d = s.data;
    if (d.dtn_count < 1) bad("data.dtn_count", "must be >= 1");
    if (!(d.per_dtn_gbps > 0)) bad("data.per_dtn_gbps", "must be > 0");
    if (!(d.stream_cap_gbps > 0)) bad("data.stream_cap_gbps", "must be > 0");
    if (!(d.fs_bw_gbps > 0)) bad("data.fs_bw_gbps", "must be > 0");
    if (!(d.cache_gb >= 0)) bad("data.cache_gb", "must be >= 0");
    if (!(d.credential.lifetime_days > 0)) bad("data.credential.lifetime_days", "must be > 0");
    if (!(d.credential.renewal_days > 0)) bad("data.credential.renewal_days", "must be > 0");

    auto check = [&](const std::string& key, const std::function<void()>& f) {
        try {
            f();
        } catch (const InvalidSpec& e) {
            std::string msg = e.what();
            if (msg.starts_with(key + ": ")) msg.erase(0, key.size() + 2);
            bad(key, std::move(msg));
        }
    };
    const auto& h = s.htc;
    if (h.n_tasks < 0) bad("htc.n_tasks", "must be >= 0");
    check("htc.runtime_h", [&] { h.runtime_h.validate("htc.runtime_h"); });
    check("htc.input_gb", [&] { h.input_gb.validate("htc.input_gb"); });
    check("htc.output_gb", [&] { h.output_gb.validate("htc.output_gb"); });
    if (!(h.memory_gb > 0)) bad("htc.memory_gb", "must be > 0");
    if (!(h.runtime_noise >= 0 && h.runtime_noise < 1)) bad("htc.runtime_noise", "must be in [0, 1)");
    if (h.tasks_per_dataset < 1) bad("htc.tasks_per_dataset", "must be >= 1");
    if (o.osg_policy && h.memory_gb > o.policy.max_memory_gb)
        bad("htc.memory_gb, overlay.policy.max_memory_gb",
            fmt::format("tasks need {} GB but the OSG policy allows {} GB", h.memory_gb, o.policy.max_memory_gb));
    if (d.cache_gb > 0 && h.input_gb.upper() > d.cache_gb)
        bad("htc.input_gb, data.cache_gb", "an input dataset can exceed the whole cache");

    const auto& p = s.hpc;
    if (!(p.arrival_rate_per_h >= 0)) bad("hpc.arrival_rate_per_h", "must be >= 0");
    if (!(p.max_nodes_fraction > 0 && p.max_nodes_fraction <= 1)) bad("hpc.max_nodes_fraction", "must be in (0, 1]");
    if (!(p.size_skew > 0) || !std::isfinite(p.size_skew)) bad("hpc.size_skew", "must be > 0");
    check("hpc.walltime_h", [&] { p.walltime_h.validate("hpc.walltime_h"); });
    check("hpc.runtime_fraction", [&] { p.runtime_fraction.validate("hpc.runtime_fraction"); });
    if (!(p.walltime_h.upper() > 0)) bad("hpc.walltime_h", "must allow walltimes > 0");
    if (p.runtime_fraction.upper() > 1) bad("hpc.runtime_fraction", "must not exceed 1");
    if (p.target_backlog_nodes < 0) bad("hpc.target_backlog_nodes", "must be >= 0");
    return out;
}

// ---------------------------------------------------------------------------
// TOML mapping

namespace {

std::string_view placement_name(Placement p) { return to_string(p); }

toml::table encode_dist(const Distribution& d) {
    toml::table t;
    t.insert("dist", std::string(to_string(d.kind)));
    switch (d.kind) {
        case Distribution::Kind::constant: t.insert("value", d.a); break;
        case Distribution::Kind::uniform:
            t.insert("lo", d.a);
            t.insert("hi", d.b);
            break;
        case Distribution::Kind::lognormal:
            t.insert("mu", d.a);
            t.insert("sigma", d.b);
            break;
    }
    if (d.max > 0) t.insert("max", d.max);
    return t;
}

toml::table encode(const Scenario& s, bool with_seed) {
    toml::table root;
    root.insert("schema_version", s.schema_version);
    root.insert("name", s.name);
    if (!s.preset.empty()) root.insert("preset", s.preset);
    root.insert("scale", s.scale);
    if (with_seed) root.insert("seed", static_cast<std::int64_t>(s.seed));
    root.insert("duration_h", s.duration.hours());
    root.insert("sample_period_s", s.sample_period.seconds());
    root.insert("warmup_h", s.warmup.hours());

    const auto& c = s.cluster;
    toml::table cluster;
    cluster.insert("nodes", c.nodes);
    cluster.insert("cores_per_node", c.cores_per_node);
    cluster.insert("memory_gb", c.memory_gb);
    cluster.insert("torus", toml::array{c.torus[0], c.torus[1], c.torus[2]});
    cluster.insert("placement", std::string(placement_name(c.placement)));
    cluster.insert("compactness_limit", c.compactness_limit);
    cluster.insert("scheduler_period_s", c.scheduler_period.seconds());
    cluster.insert("backfill", c.backfill);
    root.insert("cluster", std::move(cluster));

    const auto& o = s.overlay;
    toml::table overlay;
    overlay.insert("enabled", o.enabled);
    overlay.insert("mode", std::string(to_string(o.mode)));
    overlay.insert("target_pilots", o.target_pilots);
    overlay.insert("pilot_nodes", o.pilot_nodes);
    overlay.insert("pilot_walltime_h", o.pilot_walltime.hours());
    overlay.insert("pilot_priority", o.pilot_priority);
    overlay.insert("checkpoint_interval_min", o.checkpoint_interval.is_infinite()
                                                  ? std::numeric_limits<double>::infinity()
                                                  : static_cast<double>(o.checkpoint_interval.ms()) / 60e3);
    overlay.insert("osg_policy", o.osg_policy);
    overlay.insert("startup_latency_s", o.startup_latency.seconds());
    overlay.insert("broker_period_s", o.broker_period.seconds());
    overlay.insert("max_wrapper_walltime_h", o.max_wrapper_walltime.hours());
    overlay.insert("wrapper_priority", o.wrapper_priority);
    toml::table policy;
    policy.insert("max_memory_gb", o.policy.max_memory_gb);
    policy.insert("max_runtime_h", o.policy.max_runtime_h);
    policy.insert("max_io_gb", o.policy.max_io_gb);
    policy.insert("max_cores", o.policy.max_cores);
    overlay.insert("policy", std::move(policy));
    root.insert("overlay", std::move(overlay));

    const auto& d = s.data;
    toml::table data;
    data.insert("dtn_count", d.dtn_count);
    data.insert("per_dtn_gbps", d.per_dtn_gbps);
    data.insert("stream_cap_gbps", d.stream_cap_gbps);
    data.insert("fs_bw_gbps", d.fs_bw_gbps);
    data.insert("cache_gb", d.cache_gb);
    data.insert("prepopulate_cache", d.prepopulate_cache);
    toml::table cred;
    cred.insert("lifetime_days", d.credential.lifetime_days);
    cred.insert("renewal_days", d.credential.renewal_days);
    cred.insert("auto_renew", d.credential.auto_renew);
    data.insert("credential", std::move(cred));
    root.insert("data", std::move(data));

    const auto& h = s.htc;
    toml::table htc;
    htc.insert("n_tasks", h.n_tasks);
    htc.insert("runtime_h", encode_dist(h.runtime_h));
    htc.insert("input_gb", encode_dist(h.input_gb));
    htc.insert("output_gb", encode_dist(h.output_gb));
    htc.insert("memory_gb", h.memory_gb);
    htc.insert("priority", h.priority);
    htc.insert("runtime_noise", h.runtime_noise);
    htc.insert("tasks_per_dataset", h.tasks_per_dataset);
    root.insert("htc", std::move(htc));

    const auto& p = s.hpc;
    toml::table hpc;
    hpc.insert("arrival_rate_per_h", p.arrival_rate_per_h);
    hpc.insert("max_nodes_fraction", p.max_nodes_fraction);
    hpc.insert("size_skew", p.size_skew);
    hpc.insert("walltime_h", encode_dist(p.walltime_h));
    hpc.insert("runtime_fraction", encode_dist(p.runtime_fraction));
    hpc.insert("target_backlog_nodes", p.target_backlog_nodes);
    hpc.insert("priority", p.priority);
    root.insert("hpc", std::move(hpc));
    return root;
}

std::string render(const toml::table& t) {
    std::ostringstream os;
    os << toml::toml_formatter{t};
    os << '\n';
    return os.str();
}

// Reads typed values out of a parsed table and records what was consumed,
// so leftovers can be reported as unknown keys.
class Reader {
public:
    Reader(const toml::table& root, std::vector<Diagnostic>& diags) : root_(root), diags_(diags) {}

    const toml::node* find(const std::string& path) {
        const toml::node* n = root_.at_path(path).node();
        if (n) seen_.insert(path);
        return n;
    }

    void integer(const std::string& path, auto& out) {
        const toml::node* n = find(path);
        if (!n) return;
        if (auto v = n->value_exact<std::int64_t>()) {
            out = static_cast<std::remove_reference_t<decltype(out)>>(*v);
            if (static_cast<std::int64_t>(out) != *v) bad(path, "integer out of range");
        } else {
            bad(path, "expected an integer");
        }
    }
    void real(const std::string& path, double& out) {
        const toml::node* n = find(path);
        if (!n) return;
        if (auto v = n->value<double>(); v && (n->is_floating_point() || n->is_integer()))
            out = *v;
        else
            bad(path, "expected a number");
    }
    void boolean(const std::string& path, bool& out) {
        const toml::node* n = find(path);
        if (!n) return;
        if (auto v = n->value_exact<bool>())
            out = *v;
        else
            bad(path, "expected true or false");
    }
    void string(const std::string& path, std::string& out) {
        const toml::node* n = find(path);
        if (!n) return;
        if (auto v = n->value_exact<std::string>())
            out = *v;
        else
            bad(path, "expected a string");
    }
    void time(const std::string& path, SimTime& out, double unit_ms) {
        double v = NAN;
        const toml::node* n = find(path);
        if (!n) return;
        if (auto x = n->value<double>(); x && (n->is_floating_point() || n->is_integer())) v = *x;
        if (std::isnan(v)) {
            bad(path, "expected a number");
            return;
        }
        if (v < 0) {
            bad(path, "must be >= 0");
            return;
        }
        out = std::isinf(v) ? SimTime::infinite() : SimTime::from_ms(std::llround(v * unit_ms));
    }
    void dist(const std::string& path, Distribution& out) {
        const toml::node* n = find(path);
        if (!n) return;
        if (n->is_integer() || n->is_floating_point()) {
            out = Distribution::constant(*n->value<double>());
            return;
        }
        if (!n->is_table()) {
            bad(path, "expected a number or a distribution table");
            return;
        }
        std::string kind;
        string(path + ".dist", kind);
        if (!kind.empty()) {
            if (kind == "constant") out.kind = Distribution::Kind::constant;
            else if (kind == "uniform") out.kind = Distribution::Kind::uniform;
            else if (kind == "lognormal") out.kind = Distribution::Kind::lognormal;
            else bad(path + ".dist", fmt::format("unknown distribution '{}'", kind));
        }
        real(path + ".value", out.a);
        real(path + ".lo", out.a);
        real(path + ".mu", out.a);
        real(path + ".hi", out.b);
        real(path + ".sigma", out.b);
        real(path + ".max", out.max);
    }

    void bad(const std::string& path, std::string msg) { diags_.push_back({path, std::move(msg)}); }

    /// Every leaf (or table) under root not read by any accessor.
    void report_unknown() { walk(root_, ""); }

private:
    void walk(const toml::table& t, const std::string& prefix) {
        for (auto&& [k, v] : t) {
            const std::string path = prefix.empty() ? std::string(k.str()) : prefix + "." + std::string(k.str());
            if (seen_.contains(path) && !v.is_table()) continue;
            if (auto* sub = v.as_table()) {
                if (!seen_.contains(path) && !has_seen_prefix(path)) {
                    bad(path, "unknown key");
                    continue;
                }
                walk(*sub, path);
            } else if (!seen_.contains(path)) {
                bad(path, "unknown key");
            }
        }
    }
    bool has_seen_prefix(const std::string& path) const {
        auto it = seen_.lower_bound(path + ".");
        return it != seen_.end() && it->starts_with(path + ".");
    }

    const toml::table& root_;
    std::vector<Diagnostic>& diags_;
    std::set<std::string> seen_;
};

// Only table-valued keys; scalars at these paths are type errors.
bool is_table_key(std::string_view path) {
    static const std::set<std::string_view> keys = {"cluster", "overlay", "overlay.policy", "data",
                                                    "data.credential", "htc", "hpc"};
    return keys.contains(path);
}

void apply_override(toml::table& root, const std::string& assignment, std::vector<Diagnostic>& diags) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) {
        diags.push_back({assignment, "override must look like key=value"});
        return;
    }
    auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t");
        const auto e = s.find_last_not_of(" \t");
        return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
    };
    const std::string key = trim(assignment.substr(0, eq));
    const std::string text = trim(assignment.substr(eq + 1));

    toml::table parsed;
    bool as_value = true;
    try {
        parsed = toml::parse("v = " + text);
    } catch (const toml::parse_error&) {
        as_value = false;
    }

    std::vector<std::string> parts;
    for (std::size_t start = 0;;) {
        const auto dot = key.find('.', start);
        parts.push_back(key.substr(start, dot - start));
        if (dot == std::string::npos) break;
        start = dot + 1;
    }
    toml::table* t = &root;
    std::string path;
    for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
        path += (path.empty() ? "" : ".") + parts[i];
        toml::node* n = t->get(parts[i]);
        if (!n) {
            t->insert(parts[i], toml::table{});
            n = t->get(parts[i]);
        } else if (!n->is_table()) {
            // A scalar distribution being refined field by field.
            if (auto v = n->value<double>(); v && (n->is_integer() || n->is_floating_point()) && !is_table_key(path)) {
                toml::table dist;
                dist.insert("dist", "constant");
                dist.insert("value", *v);
                t->insert_or_assign(parts[i], std::move(dist));
                n = t->get(parts[i]);
            } else {
                diags.push_back({key, fmt::format("'{}' is not a table", path)});
                return;
            }
        }
        t = n->as_table();
    }
    if (as_value) {
        t->insert_or_assign(parts.back(), *parsed.get("v"));
    } else {
        t->insert_or_assign(parts.back(), text);
    }
}

std::optional<Placement> parse_placement(std::string_view s) {
    if (s == "topology_aware") return Placement::topology_aware;
    if (s == "transparent" || s == "commtransparent") return Placement::transparent;
    return std::nullopt;
}

LoadResult decode(const toml::table& root) {
    LoadResult r;
    Reader rd(root, r.diagnostics);

    std::string preset;
    double scale = 1.0;
    rd.string("preset", preset);
    rd.real("scale", scale);
    Scenario& s = r.scenario;
    if (!preset.empty()) {
        try {
            s = make_preset(preset, scale);
        } catch (const UnknownPreset& e) {
            rd.bad("preset", e.what());
        } catch (const InvalidSpec& e) {
            rd.bad("scale", e.what());
        }
    }
    s.scale = scale;

    rd.integer("schema_version", s.schema_version);
    if (!root.contains("schema_version") && preset.empty())
        rd.bad("schema_version", "missing (scenario files must declare schema_version = 1)");
    rd.string("name", s.name);
    if (const toml::node* n = rd.find("seed")) {
        if (auto v = n->value_exact<std::int64_t>(); v && *v >= 0)
            s.seed = static_cast<std::uint64_t>(*v);
        else
            rd.bad("seed", "expected a non-negative integer");
    }
    rd.time("duration_h", s.duration, 3600e3);
    rd.time("sample_period_s", s.sample_period, 1e3);
    rd.time("warmup_h", s.warmup, 3600e3);

    if (const toml::node* n = root.get("cluster"); n && !n->is_table()) rd.bad("cluster", "expected a table");
    auto& c = s.cluster;
    const int nodes_before = c.nodes;
    rd.integer("cluster.nodes", c.nodes);
    rd.integer("cluster.cores_per_node", c.cores_per_node);
    rd.real("cluster.memory_gb", c.memory_gb);
    if (const toml::node* n = rd.find("cluster.torus")) {
        const toml::array* a = n->as_array();
        if (!a || a->size() != 3 || !a->is_homogeneous<std::int64_t>()) {
            rd.bad("cluster.torus", "expected [X, Y, Z] integers");
        } else {
            for (std::size_t i = 0; i < 3; ++i) c.torus[i] = static_cast<int>(*a->get(i)->value<std::int64_t>());
        }
    } else if (c.nodes != nodes_before && !preset.empty()) {
        // Preset torus no longer matches an overridden node count.
        c.torus = torus_shape(c.nodes);
    }
    std::string placement;
    rd.string("cluster.placement", placement);
    if (!placement.empty()) {
        if (auto p = parse_placement(placement))
            c.placement = *p;
        else
            rd.bad("cluster.placement", fmt::format("unknown placement '{}'", placement));
    }
    rd.real("cluster.compactness_limit", c.compactness_limit);
    rd.time("cluster.scheduler_period_s", c.scheduler_period, 1e3);
    rd.boolean("cluster.backfill", c.backfill);

    auto& o = s.overlay;
    rd.boolean("overlay.enabled", o.enabled);
    std::string mode;
    rd.string("overlay.mode", mode);
    if (!mode.empty()) {
        if (mode == "glidein") o.mode = OverlayMode::glidein;
        else if (mode == "backfill_broker") o.mode = OverlayMode::backfill_broker;
        else rd.bad("overlay.mode", fmt::format("unknown mode '{}'", mode));
    }
    rd.integer("overlay.target_pilots", o.target_pilots);
    rd.integer("overlay.pilot_nodes", o.pilot_nodes);
    rd.time("overlay.pilot_walltime_h", o.pilot_walltime, 3600e3);
    rd.integer("overlay.pilot_priority", o.pilot_priority);
    rd.time("overlay.checkpoint_interval_min", o.checkpoint_interval, 60e3);
    rd.boolean("overlay.osg_policy", o.osg_policy);
    rd.time("overlay.startup_latency_s", o.startup_latency, 1e3);
    rd.time("overlay.broker_period_s", o.broker_period, 1e3);
    rd.time("overlay.max_wrapper_walltime_h", o.max_wrapper_walltime, 3600e3);
    rd.integer("overlay.wrapper_priority", o.wrapper_priority);
    rd.real("overlay.policy.max_memory_gb", o.policy.max_memory_gb);
    rd.real("overlay.policy.max_runtime_h", o.policy.max_runtime_h);
    rd.real("overlay.policy.max_io_gb", o.policy.max_io_gb);
    rd.integer("overlay.policy.max_cores", o.policy.max_cores);

    auto& d = s.data;
    rd.integer("data.dtn_count", d.dtn_count);
    rd.real("data.per_dtn_gbps", d.per_dtn_gbps);
    rd.real("data.stream_cap_gbps", d.stream_cap_gbps);
    rd.real("data.fs_bw_gbps", d.fs_bw_gbps);
    rd.real("data.cache_gb", d.cache_gb);
    rd.boolean("data.prepopulate_cache", d.prepopulate_cache);
    rd.real("data.credential.lifetime_days", d.credential.lifetime_days);
    rd.real("data.credential.renewal_days", d.credential.renewal_days);
    rd.boolean("data.credential.auto_renew", d.credential.auto_renew);

    auto& h = s.htc;
    rd.integer("htc.n_tasks", h.n_tasks);
    rd.dist("htc.runtime_h", h.runtime_h);
    rd.dist("htc.input_gb", h.input_gb);
    rd.dist("htc.output_gb", h.output_gb);
    rd.real("htc.memory_gb", h.memory_gb);
    rd.integer("htc.priority", h.priority);
    rd.real("htc.runtime_noise", h.runtime_noise);
    rd.integer("htc.tasks_per_dataset", h.tasks_per_dataset);

    auto& p = s.hpc;
    rd.real("hpc.arrival_rate_per_h", p.arrival_rate_per_h);
    rd.real("hpc.max_nodes_fraction", p.max_nodes_fraction);
    rd.real("hpc.size_skew", p.size_skew);
    rd.dist("hpc.walltime_h", p.walltime_h);
    rd.dist("hpc.runtime_fraction", p.runtime_fraction);
    rd.integer("hpc.target_backlog_nodes", p.target_backlog_nodes);
    rd.integer("hpc.priority", p.priority);

    rd.report_unknown();
    std::set<std::string> seen;
    for (const auto& d : r.diagnostics) seen.insert(d.key);
    for (auto& d : validate(s))
        if (!seen.contains(d.key)) r.diagnostics.push_back(std::move(d));
    return r;
}

LoadResult load_table(toml::table root, std::span<const std::string> overrides) {
    std::vector<Diagnostic> pre;
    for (const auto& o : overrides) apply_override(root, o, pre);
    LoadResult r = decode(root);
    r.diagnostics.insert(r.diagnostics.begin(), pre.begin(), pre.end());
    return r;
}

}  // namespace

LoadResult load_scenario_text(std::string_view text, std::string_view source, std::span<const std::string> overrides) {
    toml::table root;
    try {
        root = toml::parse(text, source);
    } catch (const toml::parse_error& e) {
        LoadResult r;
        const auto& where = e.source().begin;
        r.diagnostics.push_back(
            {std::string(source), fmt::format("line {}, column {}: {}", where.line, where.column, e.description())});
        return r;
    }
    return load_table(std::move(root), overrides);
}

LoadResult load_scenario_file(const std::filesystem::path& path, std::span<const std::string> overrides) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(fmt::format("cannot read scenario file '{}'", path.string()));
    std::ostringstream buf;
    buf << in.rdbuf();
    if (in.bad()) throw IoError(fmt::format("error reading '{}'", path.string()));
    return load_scenario_text(buf.str(), path.string(), overrides);
}

LoadResult load_preset(std::string_view name, std::span<const std::string> overrides) {
    toml::table root;
    root.insert("preset", std::string(name));
    return load_table(std::move(root), overrides);
}

std::string to_toml(const Scenario& s) { return render(encode(s, true)); }

std::map<std::string, std::string> flatten(const Scenario& s) {
    std::map<std::string, std::string> out;
    std::function<void(const toml::table&, const std::string&)> walk = [&](const toml::table& t,
                                                                          const std::string& prefix) {
        for (auto&& [k, v] : t) {
            const std::string path = prefix.empty() ? std::string(k.str()) : prefix + "." + std::string(k.str());
            if (auto* sub = v.as_table()) {
                walk(*sub, path);
                continue;
            }
            std::ostringstream os;
            v.visit([&](auto&& node) { os << toml::toml_formatter{node}; });
            out[path] = os.str();
        }
    };
    walk(encode(s, true), "");
    return out;
}

std::uint64_t scenario_hash(const Scenario& s) { return fnv1a64(render(encode(s, false))); }

}  // namespace htcsim
