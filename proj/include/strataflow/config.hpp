#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "strataflow/csv_io.hpp"
#include "strataflow/errors.hpp"
#include "strataflow/fields.hpp"
#include "strataflow/group_action.hpp"
#include "strataflow/kernels.hpp"
#include "strataflow/version.hpp"

namespace strataflow {

// ---------------------------------------------------------------------------
// Line-oriented key/value format with [section] headers
// ---------------------------------------------------------------------------

struct ConfigEntry {
    std::string key;
    std::string value;
    bool operator==(const ConfigEntry&) const = default;
};

struct ConfigSection {
    std::string name;
    std::vector<ConfigEntry> entries;
    bool operator==(const ConfigSection&) const = default;

    const std::string* find(const std::string& key) const {
        for (const auto& e : entries)
            if (e.key == key) return &e.value;
        return nullptr;
    }

    void set(const std::string& key, const std::string& value) {
        for (auto& e : entries)
            if (e.key == key) {
                e.value = value;
                return;
            }
        entries.push_back({key, value});
    }
};

struct ConfigData {
    std::vector<ConfigSection> sections;
    bool operator==(const ConfigData&) const = default;

    const ConfigSection* find_section(const std::string& name) const {
        for (const auto& s : sections)
            if (s.name == name) return &s;
        return nullptr;
    }

    ConfigSection& obtain(const std::string& name) {
        for (auto& s : sections)
            if (s.name == name) return s;
        sections.push_back({name, {}});
        return sections.back();
    }

    std::string serialize() const {
        std::ostringstream os;
        for (std::size_t i = 0; i < sections.size(); ++i) {
            if (i) os << "\n";
            os << "[" << sections[i].name << "]\n";
            for (const auto& e : sections[i].entries) os << e.key << " = " << e.value << "\n";
        }
        return os.str();
    }
};

inline ConfigData parse_ini_text(const std::string& text) {
    ConfigData data;
    ConfigSection* current = nullptr;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string t = detail::trim(line);
        if (t.empty() || t[0] == '#' || t[0] == ';') continue;
        if (t.front() == '[') {
            if (t.back() != ']')
                throw ConfigError("config line " + std::to_string(lineno) +
                                  ": unterminated section header");
            const std::string name = detail::trim(t.substr(1, t.size() - 2));
            if (name.empty())
                throw ConfigError("config line " + std::to_string(lineno) +
                                  ": empty section name");
            if (data.find_section(name))
                throw ConfigError("config line " + std::to_string(lineno) +
                                  ": duplicate section [" + name + "]");
            data.sections.push_back({name, {}});
            current = &data.sections.back();
            continue;
        }
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) +
                              ": expected `key = value`");
        if (!current)
            throw ConfigError("config line " + std::to_string(lineno) +
                              ": key outside of any [section]");
        const std::string key = detail::trim(t.substr(0, eq));
        const std::string value = detail::trim(t.substr(eq + 1));
        if (key.empty())
            throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
        if (current->find(key))
            throw ConfigError("config line " + std::to_string(lineno) + ": duplicate key '" +
                              key + "' in section [" + current->name + "]");
        current->entries.push_back({key, value});
    }
    return data;
}

inline ConfigData parse_ini_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_ini_text(buf.str());
}

// ---------------------------------------------------------------------------
// Schema-checked section access
// ---------------------------------------------------------------------------

namespace detail {

inline long to_long(const std::string& v, const std::string& where) {
    try {
        std::size_t pos = 0;
        const long out = std::stol(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw ConfigError("cannot parse integer '" + v + "' " + where);
    }
}

inline std::uint64_t to_u64(const std::string& v, const std::string& where) {
    try {
        std::size_t pos = 0;
        const std::uint64_t out = std::stoull(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw ConfigError("cannot parse unsigned integer '" + v + "' " + where);
    }
}

inline bool to_bool(const std::string& v, const std::string& where) {
    if (v == "true") return true;
    if (v == "false") return false;
    throw ConfigError("expected 'true' or 'false', got '" + v + "' " + where);
}

} // namespace detail

/// Reads one section against a schema: every access marks the key consumed,
/// defaults are recorded into the canonical echo, and finish() rejects any
/// key never consumed (strict parsing: silent typos are fatal).
class SectionReader {
public:
    SectionReader(const ConfigData& data, std::string name, ConfigSection& canonical,
                  bool required)
        : name_(std::move(name)), section_(data.find_section(name_)), canonical_(&canonical) {
        if (!section_ && required) throw ConfigError("missing required section [" + name_ + "]");
    }

    bool present() const { return section_ != nullptr; }

    std::string require(const std::string& key) {
        const std::string* v = section_ ? section_->find(key) : nullptr;
        if (!v)
            throw ConfigError("missing required key '" + key + "' in section [" + name_ + "]");
        consumed_.insert(key);
        canonical_->set(key, *v);
        return *v;
    }

    std::string get(const std::string& key, const std::string& fallback) {
        const std::string* v = section_ ? section_->find(key) : nullptr;
        consumed_.insert(key);
        const std::string out = v ? *v : fallback;
        canonical_->set(key, out);
        return out;
    }

    std::optional<std::string> optional(const std::string& key) {
        const std::string* v = section_ ? section_->find(key) : nullptr;
        consumed_.insert(key);
        if (v) canonical_->set(key, *v);
        return v ? std::optional<std::string>(*v) : std::nullopt;
    }

    double get_double(const std::string& key, double fallback) {
        return detail::parse_double(get(key, format_double(fallback)), in());
    }
    double require_double(const std::string& key) {
        return detail::parse_double(require(key), in());
    }
    long get_long(const std::string& key, long fallback) {
        return detail::to_long(get(key, std::to_string(fallback)), in());
    }
    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) {
        return detail::to_u64(get(key, std::to_string(fallback)), in());
    }
    std::uint64_t require_u64(const std::string& key) { return detail::to_u64(require(key), in()); }
    bool get_bool(const std::string& key, bool fallback) {
        return detail::to_bool(get(key, fallback ? "true" : "false"), in());
    }

    /// Unknown keys are fatal and named.
    void finish() const {
        if (!section_) return;
        for (const auto& e : section_->entries)
            if (!consumed_.count(e.key))
                throw ConfigError("unknown key '" + e.key + "' in section [" + name_ + "]");
    }

private:
    std::string in() const { return "for section [" + name_ + "]"; }

    std::string name_;
    const ConfigSection* section_;
    ConfigSection* canonical_;
    std::set<std::string> consumed_;
};

// ---------------------------------------------------------------------------
// Experiment configs
// ---------------------------------------------------------------------------

/// A validated command configuration: the canonical form has every default
/// filled in schema order, so serializing it re-parses to itself and its
/// hash identifies the run.
struct ExperimentConfig {
    std::string command;
    ConfigData canonical;
    std::filesystem::path base_dir; // resolution root for relative paths

    std::string canonical_text() const { return canonical.serialize(); }
    std::uint64_t hash() const { return fnv1a(command + "\n" + canonical_text()); }

    std::filesystem::path resolve(const std::string& rel) const {
        std::filesystem::path p(rel);
        return p.is_absolute() ? p : base_dir / p;
    }
};

namespace detail {

inline void require_file(const ExperimentConfig& cfg, const std::string& rel,
                         const std::string& what) {
    const auto p = cfg.resolve(rel);
    if (!std::filesystem::exists(p))
        throw ConfigError(what + " file '" + p.string() + "' does not exist");
}

/// Contiguous [field.1], [field.2], ... sections; at least `min_count`.
inline int count_field_sections(const ConfigData& data, int min_count) {
    int k = 0;
    while (data.find_section("field." + std::to_string(k + 1))) ++k;
    for (const auto& s : data.sections)
        if (s.name.rfind("field.", 0) == 0) {
            const std::string num = s.name.substr(6);
            bool digits = !num.empty();
            for (char c : num) digits = digits && c >= '0' && c <= '9';
            if (!digits)
                throw ConfigError("malformed field section [" + s.name + "]");
            const long idx = to_long(num, "in section name");
            if (idx < 1 || idx > k)
                throw ConfigError("field sections must be numbered contiguously from 1; found [" +
                                  s.name + "]");
        }
    if (k < min_count)
        throw ConfigError("need at least " + std::to_string(min_count) +
                          " [field.N] sections, found " + std::to_string(k));
    return k;
}

inline void validate_field_section(const ConfigData& data, const std::string& name,
                                   ExperimentConfig& cfg, bool allow_averaged) {
    SectionReader sec(data, name, cfg.canonical.obtain(name), true);
    const std::string variant = sec.require("variant");
    if (variant == "fourier") {
        sec.require_u64("seed");
        sec.get_long("features", 8);
        sec.get_double("scale", 1.0);
    } else if (variant == "attention") {
        const long heads = sec.get_long("heads", 1);
        if (heads < 1) throw ConfigError("attention needs heads >= 1 in [" + name + "]");
        for (long h = 1; h <= heads; ++h) {
            sec.require("q" + std::to_string(h));
            sec.require("k" + std::to_string(h));
            sec.require("v" + std::to_string(h));
        }
    } else if (variant == "pairwise") {
        const std::string form = sec.get("form", "spring");
        if (form != "spring" && form != "gaussian")
            throw ConfigError("pairwise form must be 'spring' or 'gaussian' in [" + name + "]");
        sec.get_double("weight", 1.0);
        sec.get_double("length", 1.0);
    } else if (variant == "averaged") {
        if (!allow_averaged)
            throw ConfigError("variant 'averaged' is not allowed in [" + name +
                              "] for this command");
        sec.require_u64("seed");
        sec.get_long("features", 8);
        sec.get_double("scale", 1.0);
    } else {
        throw ConfigError("unknown field variant '" + variant + "' in [" + name + "]");
    }
    sec.finish();
}

inline bool validate_group_section(const ConfigData& data, ExperimentConfig& cfg) {
    if (!data.find_section("group")) return false;
    SectionReader sec(data, "group", cfg.canonical.obtain("group"), false);
    const std::string kind = sec.get("kind", "none");
    if (kind != "none" && kind != "symmetric" && kind != "reflection" &&
        kind != "symmetric_reflection")
        throw ConfigError("group kind must be one of none|symmetric|reflection|"
                          "symmetric_reflection");
    sec.get_long("axis", 0);
    sec.finish();
    return kind != "none";
}

inline void validate_optimizer_keys(SectionReader& sec) {
    sec.get_double("step", 1e-3);
    sec.get_double("t_max", 10.0);
    sec.get_double("tolerance", 1e-6);
    sec.get_double("stratum_tol", 0.0);
    sec.get_long("budget", 20000);
    sec.get_long("restarts", 8);
    sec.get_long("min_legs", 2);
    sec.get_long("max_legs", 8);
    sec.get_long("sign_search_rounds", 1);
    sec.get_u64("seed", 0);
    sec.get_long("threads", 1);
    sec.get_bool("check_rank", false);
    sec.get_long("depth", 3);
    sec.get_double("h", 1e-5);
    sec.get_double("svd_tol", 1e-6);
    sec.get("out_schedule", "schedule.txt");
    sec.get("out_report", "report.txt");
    sec.get("out_trajectory", "");
}

} // namespace detail

/// Parse and validate a config file for the given command. Unknown keys,
/// missing referenced files and malformed values are fatal; every default is
/// filled into the canonical echo.
inline ExperimentConfig parse_config_text(const std::string& text, const std::string& command,
                                          const std::filesystem::path& base_dir) {
    const ConfigData data = parse_ini_text(text);
    ExperimentConfig cfg;
    cfg.command = command;
    cfg.base_dir = base_dir;

    auto known_sections = [&](std::initializer_list<std::string> fixed, bool fields,
                              bool group_allowed) {
        for (const auto& s : data.sections) {
            if (std::find(fixed.begin(), fixed.end(), s.name) != fixed.end()) continue;
            if (fields && s.name.rfind("field.", 0) == 0) continue;
            if (group_allowed && s.name == "group") continue;
            throw ConfigError("unknown section [" + s.name + "] for command '" + command + "'");
        }
    };

    if (command == "stratum") {
        known_sections({"stratum"}, false, false);
        SectionReader sec(data, "stratum", cfg.canonical.obtain("stratum"), true);
        const auto cloud = sec.optional("cloud");
        const auto cloud_b = sec.optional("cloud_b");
        const auto spectrum = sec.optional("spectrum");
        sec.get_double("tol", 0.0);
        sec.get("out_report", "");
        sec.finish();
        if (!cloud && !spectrum)
            throw ConfigError("[stratum] needs a 'cloud' or a 'spectrum' input");
        if (cloud) detail::require_file(cfg, *cloud, "cloud");
        if (cloud_b) detail::require_file(cfg, *cloud_b, "cloud");
        if (spectrum) detail::require_file(cfg, *spectrum, "spectrum");
    } else if (command == "rank") {
        known_sections({"rank"}, true, true);
        SectionReader sec(data, "rank", cfg.canonical.obtain("rank"), true);
        const std::string mode = sec.get("mode", "single");
        if (mode != "single" && mode != "ensemble")
            throw ConfigError("[rank] mode must be 'single' or 'ensemble'");
        const auto clouds = sec.optional("clouds");
        sec.get_long("samples", 20);
        sec.get_long("n", 3);
        sec.get_long("d", 2);
        sec.get_u64("seed", 0);
        sec.get_double("scale", 1.0);
        sec.get_long("depth", 3);
        sec.get_double("h", 1e-5);
        sec.get_double("svd_tol", 1e-6);
        sec.get("out_report", "");
        sec.finish();
        if (clouds)
            for (const auto& c : detail::split(*clouds, ';'))
                detail::require_file(cfg, detail::trim(c), "cloud");
        const bool has_group = detail::validate_group_section(data, cfg);
        const int k = detail::count_field_sections(data, 1);
        for (int i = 1; i <= k; ++i)
            detail::validate_field_section(data, "field." + std::to_string(i), cfg, has_group);
    } else if (command == "steer" || command == "ensemble") {
        known_sections({command}, true, true);
        SectionReader sec(data, command, cfg.canonical.obtain(command), true);
        if (command == "steer") {
            detail::require_file(cfg, sec.require("initial"), "initial cloud");
            detail::require_file(cfg, sec.require("target"), "target cloud");
        } else {
            int pairs = 0;
            while (data.find_section(command)->find("initial_" + std::to_string(pairs + 1)))
                ++pairs;
            if (pairs == 0)
                throw ConfigError("[ensemble] needs initial_1/target_1, initial_2/target_2, ...");
            for (int p = 1; p <= pairs; ++p) {
                detail::require_file(cfg, sec.require("initial_" + std::to_string(p)),
                                     "initial cloud");
                detail::require_file(cfg, sec.require("target_" + std::to_string(p)),
                                     "target cloud");
            }
        }
        detail::validate_optimizer_keys(sec);
        sec.finish();
        const bool has_group = detail::validate_group_section(data, cfg);
        const int k = detail::count_field_sections(data, 1);
        for (int i = 1; i <= k; ++i)
            detail::validate_field_section(data, "field." + std::to_string(i), cfg, has_group);
    } else if (command == "layers") {
        known_sections({"layers"}, true, false);
        SectionReader sec(data, "layers", cfg.canonical.obtain("layers"), true);
        detail::require_file(cfg, sec.require("cloud"), "cloud");
        sec.get_double("dt", 0.1);
        sec.get_long("steps", 10);
        sec.get("out_cloud", "layers_out.csv");
        sec.get_u64("seed", 0);
        sec.finish();
        detail::count_field_sections(data, 1);
        detail::validate_field_section(data, "field.1", cfg, false);
        if (data.find_section("field.2"))
            throw ConfigError("layers uses a single [field.1] kernel");
    } else if (command == "spin") {
        known_sections({"spin"}, false, false);
        SectionReader sec(data, "spin", cfg.canonical.obtain("spin"), true);
        const long n = sec.get_long("n", 3);
        if (n < 1) throw ConfigError("[spin] needs n >= 1");
        const std::string gens = sec.require("generators");
        if (detail::trim(gens).empty()) throw ConfigError("[spin] generators list is empty");
        sec.get_long("max_dim", 512);
        sec.get_double("tol", 1e-10);
        sec.get_bool("sector", true);
        sec.get("dump_basis", "");
        sec.get("out_report", "");
        sec.finish();
    } else {
        throw ConfigError("unknown command '" + command + "'");
    }
    return cfg;
}

inline ExperimentConfig parse_config(const std::filesystem::path& path,
                                     const std::string& command) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str(), command, std::filesystem::absolute(path).parent_path());
}

// ---------------------------------------------------------------------------
// Builders: canonical config -> runtime objects
// ---------------------------------------------------------------------------

namespace detail {

inline Eigen::MatrixXd parse_matrix(const std::string& text, int d, const std::string& where) {
    std::istringstream is(text);
    Eigen::MatrixXd m(d, d);
    for (int r = 0; r < d; ++r)
        for (int c = 0; c < d; ++c)
            if (!(is >> m(r, c)))
                throw ConfigError("matrix " + where + " needs " + std::to_string(d * d) +
                                  " row-major entries");
    std::string rest;
    if (is >> rest) throw ConfigError("matrix " + where + " has trailing entries");
    return m;
}

} // namespace detail

inline std::optional<FiniteGroupAction> build_group(const ExperimentConfig& cfg, int n, int d) {
    const ConfigSection* sec = cfg.canonical.find_section("group");
    if (!sec) return std::nullopt;
    const std::string kind = *sec->find("kind");
    const int axis = static_cast<int>(detail::to_long(*sec->find("axis"), "for group axis"));
    if (kind == "none") return std::nullopt;
    if (kind == "symmetric") return FiniteGroupAction::symmetric_group(n, d);
    if (kind == "reflection") return FiniteGroupAction::reflection_group(n, d, axis);
    return FiniteGroupAction::product(FiniteGroupAction::symmetric_group(n, d),
                                      FiniteGroupAction::reflection_group(n, d, axis));
}

/// Kernel for the non-averaged variants of a canonical [field.N] section.
inline Kernel build_kernel(const ConfigSection& sec, int d) {
    const std::string variant = *sec.find("variant");
    if (variant == "fourier") {
        return fourier_kernel(d,
                              static_cast<int>(detail::to_long(*sec.find("features"), "")),
                              detail::to_u64(*sec.find("seed"), ""),
                              detail::parse_double(*sec.find("scale"), ""));
    }
    if (variant == "attention") {
        const int heads = static_cast<int>(detail::to_long(*sec.find("heads"), ""));
        std::vector<kernels::AttentionHead> hs;
        for (int h = 1; h <= heads; ++h) {
            kernels::AttentionHead head;
            head.query = detail::parse_matrix(*sec.find("q" + std::to_string(h)), d,
                                              "q" + std::to_string(h));
            head.key = detail::parse_matrix(*sec.find("k" + std::to_string(h)), d,
                                            "k" + std::to_string(h));
            head.value = detail::parse_matrix(*sec.find("v" + std::to_string(h)), d,
                                              "v" + std::to_string(h));
            hs.push_back(std::move(head));
        }
        return attention_kernel(d, std::move(hs));
    }
    if (variant == "pairwise") {
        const std::string form = *sec.find("form");
        const double weight = detail::parse_double(*sec.find("weight"), "");
        if (form == "spring") return spring_kernel(d, weight);
        return gaussian_pair_kernel(d, weight, detail::parse_double(*sec.find("length"), ""));
    }
    throw ConfigError("field variant '" + variant + "' is not kernel-backed");
}

/// Field for any canonical [field.N] section; averaged variants require the
/// group action.
inline Field build_field(const ConfigSection& sec, int n, int d,
                         const std::optional<FiniteGroupAction>& group) {
    const std::string variant = *sec.find("variant");
    if (variant == "averaged") {
        if (!group)
            throw ConfigError("averaged field in [" + sec.name + "] needs a [group] section");
        const Field raw =
            raw_fourier_field(n, d, static_cast<int>(detail::to_long(*sec.find("features"), "")),
                              detail::to_u64(*sec.find("seed"), ""),
                              detail::parse_double(*sec.find("scale"), ""));
        return average_over_group(raw, *group);
    }
    return lifted_field(build_kernel(sec, d));
}

inline std::vector<Field> build_fields(const ExperimentConfig& cfg, int n, int d,
                                       const std::optional<FiniteGroupAction>& group) {
    std::vector<Field> fields;
    for (int i = 1;; ++i) {
        const ConfigSection* sec = cfg.canonical.find_section("field." + std::to_string(i));
        if (!sec) break;
        fields.push_back(build_field(*sec, n, d, group));
    }
    return fields;
}

} // namespace strataflow
