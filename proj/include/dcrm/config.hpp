#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dcrm/concentration.hpp"
#include "dcrm/core.hpp"
#include "dcrm/observables.hpp"
#include "dcrm/wep.hpp"

namespace dcrm {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// TOML-subset parser
// ---------------------------------------------------------------------------
//
// Supported: comments (#), [section] and [section.sub] tables,
// [[section.sub]] arrays of tables, string/bool/number scalars, and
// (possibly nested, possibly multi-line) arrays.  Everything is folded into
// a json tree so the resolver below serves both input syntaxes.

namespace detail_cfg {

struct TomlDoc {
    json root = json::object();
    std::map<std::string, int> lines;  // dotted key path -> line number
};

inline std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline std::string strip_comment(const std::string& line) {
    bool in_str = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        if (line[i] == '"') in_str = !in_str;
        if (line[i] == '#' && !in_str) return line.substr(0, i);
    }
    return line;
}

inline json parse_scalar(const std::string& tok, int line) {
    const std::string t = trim(tok);
    if (t.empty()) throw config_error("", "line " + std::to_string(line) + ": empty value");
    if (t.front() == '"') {
        if (t.size() < 2 || t.back() != '"')
            throw config_error("", "line " + std::to_string(line) + ": unterminated string");
        return json(t.substr(1, t.size() - 2));
    }
    if (t == "true") return json(true);
    if (t == "false") return json(false);
    // Integer first (keeps 64-bit seeds exact), then double.
    try {
        std::size_t pos = 0;
        if (t.find_first_of(".eE") == std::string::npos) {
            if (t.front() == '-') {
                const long long v = std::stoll(t, &pos);
                if (pos == t.size()) return json(v);
            } else {
                const unsigned long long v = std::stoull(t, &pos);
                if (pos == t.size()) return json(v);
            }
        }
        const double d = std::stod(t, &pos);
        if (pos == t.size()) return json(d);
    } catch (const std::exception&) {
    }
    throw config_error("", "line " + std::to_string(line) + ": cannot parse value '" + t + "'");
}

// Splits a bracketed array body at top-level commas.
inline std::vector<std::string> split_top_level(const std::string& body, int line) {
    std::vector<std::string> out;
    int depth = 0;
    bool in_str = false;
    std::string cur;
    for (char c : body) {
        if (c == '"') in_str = !in_str;
        if (!in_str) {
            if (c == '[') ++depth;
            if (c == ']') --depth;
            if (depth < 0)
                throw config_error("", "line " + std::to_string(line) + ": bracket mismatch");
            if (c == ',' && depth == 0) {
                out.push_back(cur);
                cur.clear();
                continue;
            }
        }
        cur += c;
    }
    if (!trim(cur).empty()) out.push_back(cur);
    return out;
}

inline json parse_value(const std::string& tok, int line) {
    const std::string t = trim(tok);
    if (!t.empty() && t.front() == '[') {
        if (t.back() != ']')
            throw config_error("", "line " + std::to_string(line) + ": unterminated array");
        json arr = json::array();
        for (const auto& piece : split_top_level(t.substr(1, t.size() - 2), line))
            arr.push_back(parse_value(piece, line));
        return arr;
    }
    return parse_scalar(t, line);
}

inline json* descend(json& root, const std::string& dotted) {
    json* node = &root;
    std::stringstream ss(dotted);
    std::string part;
    while (std::getline(ss, part, '.')) {
        if (!node->contains(part)) (*node)[part] = json::object();
        node = &(*node)[part];
        if (node->is_array()) node = &node->back();
    }
    return node;
}

inline TomlDoc parse_toml(const std::string& text) {
    TomlDoc doc;
    json* table = &doc.root;
    std::string prefix;
    std::istringstream in(text);
    std::string raw;
    int line_no = 0;
    std::string pending;
    int pending_line = 0;

    auto bracket_balance = [](const std::string& s) {
        int depth = 0;
        bool in_str = false;
        for (char c : s) {
            if (c == '"') in_str = !in_str;
            if (!in_str && c == '[') ++depth;
            if (!in_str && c == ']') --depth;
        }
        return depth;
    };

    while (std::getline(in, raw)) {
        ++line_no;
        std::string line = trim(strip_comment(raw));
        if (!pending.empty()) {
            pending += " " + line;
            if (bracket_balance(pending) > 0) continue;
            line = pending;
            pending.clear();
            line_no = pending_line;  // report at the key's line
        }
        if (line.empty()) continue;

        if (line.front() == '[') {
            const bool array_table = line.size() > 1 && line[1] == '[';
            const std::string closer = array_table ? "]]" : "]";
            if (line.substr(line.size() - closer.size()) != closer)
                throw config_error("", "line " + std::to_string(line_no) + ": bad table header");
            const std::string name =
                trim(line.substr(array_table ? 2 : 1,
                                 line.size() - 2 * (array_table ? 2 : 1)));
            if (name.empty())
                throw config_error("", "line " + std::to_string(line_no) + ": empty table name");
            if (array_table) {
                json* parent = &doc.root;
                std::string head = name;
                const auto dot = name.rfind('.');
                std::string leaf = name;
                if (dot != std::string::npos) {
                    parent = descend(doc.root, name.substr(0, dot));
                    leaf = name.substr(dot + 1);
                }
                if (!parent->contains(leaf)) (*parent)[leaf] = json::array();
                (*parent)[leaf].push_back(json::object());
                table = &(*parent)[leaf].back();
                prefix = name;
            } else {
                table = descend(doc.root, name);
                prefix = name;
            }
            doc.lines.emplace(prefix, line_no);
            continue;
        }

        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw config_error("", "line " + std::to_string(line_no) + ": expected key = value");
        }
        const std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (key.empty())
            throw config_error("", "line " + std::to_string(line_no) + ": empty key");
        if (bracket_balance(value) > 0) {
            pending = line;
            pending_line = line_no;
            continue;
        }
        (*table)[key] = parse_value(value, line_no);
        doc.lines.emplace(prefix.empty() ? key : prefix + "." + key, line_no);
    }
    if (!pending.empty())
        throw config_error("", "line " + std::to_string(pending_line) + ": unterminated array");
    return doc;
}

inline std::size_t edit_distance(const std::string& a, const std::string& b) {
    std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
    for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
    for (std::size_t i = 1; i <= a.size(); ++i) {
        cur[0] = i;
        for (std::size_t j = 1; j <= b.size(); ++j) {
            const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

inline std::string suggest(const std::string& key, const std::vector<std::string>& known) {
    std::string best;
    std::size_t best_d = 4;  // suggest only close misses
    for (const auto& k : known) {
        const std::size_t d = edit_distance(key, k);
        if (d < best_d) {
            best_d = d;
            best = k;
        }
    }
    return best;
}

}  // namespace detail_cfg

// ---------------------------------------------------------------------------
// Resolved run configuration
// ---------------------------------------------------------------------------

struct SimulateParams {
    double dtau = 1e-3;
    double tau_end = 1.0;
    std::size_t member = 0;
};

struct LipschitzParams {
    std::string map = "concentration";  // concentration | expansion | ergodic
    double duration = 1.0;
    std::size_t pairs = 10000;
    bool u_only = false;  // momentum-degenerate sampler
};

struct WepParams {
    std::size_t n_a = 1, n_b = 1;
    std::size_t count = 10000;
    double tau_end = 1.0;
    std::size_t tau_points = 21;
    ComFunction h = ConstantCom{};
};

struct RunConfig {
    ModelSpec model;
    DiagonalObservable observable;
    ExperimentOptions experiment;
    std::size_t count = 10000;
    SimulateParams simulate;
    LipschitzParams lipschitz;
    WepParams wep;
    json resolved;  // full post-default snapshot, sorted keys
};

namespace detail_cfg {

class Resolver {
  public:
    Resolver(const json& root, const std::map<std::string, int>* lines)
        : root_(root), lines_(lines) {}

    [[noreturn]] void fail(const std::string& key, const std::string& msg) const {
        std::string full = msg;
        if (lines_ != nullptr) {
            const auto it = lines_->find(key);
            if (it != lines_->end())
                full += " (line " + std::to_string(it->second) + ")";
        }
        throw config_error(key, "config key '" + key + "': " + full);
    }

    void check_keys(const json& obj, const std::string& section,
                    const std::vector<std::string>& known) const {
        if (!obj.is_object()) return;
        for (const auto& [k, v] : obj.items()) {
            if (std::find(known.begin(), known.end(), k) == known.end()) {
                const std::string path = section.empty() ? k : section + "." + k;
                std::string msg = "unknown key";
                const std::string near = suggest(k, known);
                if (!near.empty()) msg += "; did you mean '" + near + "'?";
                fail(path, msg);
            }
        }
    }

    double number(const json& obj, const std::string& section, const std::string& key,
                  double fallback) const {
        if (!obj.contains(key)) return fallback;
        const json& v = obj.at(key);
        if (!v.is_number()) fail(path(section, key), "expected a number");
        return v.get<double>();
    }

    std::uint64_t uinteger(const json& obj, const std::string& section, const std::string& key,
                           std::uint64_t fallback) const {
        if (!obj.contains(key)) return fallback;
        const json& v = obj.at(key);
        if (!v.is_number_integer() && !v.is_number_unsigned())
            fail(path(section, key), "expected a nonnegative integer");
        if (v.is_number_integer() && v.get<long long>() < 0)
            fail(path(section, key), "expected a nonnegative integer");
        return v.get<std::uint64_t>();
    }

    std::string word(const json& obj, const std::string& section, const std::string& key,
                     const std::string& fallback,
                     const std::vector<std::string>& allowed) const {
        std::string v = fallback;
        if (obj.contains(key)) {
            if (!obj.at(key).is_string()) fail(path(section, key), "expected a string");
            v = obj.at(key).get<std::string>();
        }
        if (std::find(allowed.begin(), allowed.end(), v) == allowed.end()) {
            std::string msg = "invalid value '" + v + "'";
            const std::string near = suggest(v, allowed);
            if (!near.empty()) msg += "; did you mean '" + near + "'?";
            fail(path(section, key), msg);
        }
        return v;
    }

    // Scalar fill or explicit vector of an accepted length.
    Vec vector_fill(const json& obj, const std::string& section, const std::string& key,
                    const std::vector<std::size_t>& accepted_sizes, std::size_t out_size,
                    double fallback) const {
        Vec out(out_size, fallback);
        if (!obj.contains(key)) return out;
        const json& v = obj.at(key);
        if (v.is_number()) {
            out.assign(out_size, v.get<double>());
            return out;
        }
        if (!v.is_array()) fail(path(section, key), "expected a number or an array");
        const std::size_t n = v.size();
        if (std::find(accepted_sizes.begin(), accepted_sizes.end(), n) ==
            accepted_sizes.end()) {
            std::string sizes;
            for (std::size_t s : accepted_sizes) sizes += (sizes.empty() ? "" : " or ") +
                                                          std::to_string(s);
            fail(path(section, key), "expected length " + sizes + ", got " + std::to_string(n));
        }
        Vec vals(n);
        for (std::size_t i = 0; i < n; ++i) {
            if (!v[i].is_number()) fail(path(section, key), "array entries must be numbers");
            vals[i] = v[i].get<double>();
        }
        for (std::size_t i = 0; i < out_size; ++i) out[i] = vals[i % n];
        return out;
    }

    const json& root() const { return root_; }

    static std::string path(const std::string& section, const std::string& key) {
        return section.empty() ? key : section + "." + key;
    }

  private:
    const json& root_;
    const std::map<std::string, int>* lines_;
};

inline LeafField resolve_leaf(const Resolver& r, const json& obj, const std::string& section,
                              const std::string& variant, std::size_t dim) {
    if (variant == "constant") {
        return ConstantField{r.vector_fill(obj, section, "value", {8, dim}, dim, 0.0)};
    }
    if (variant == "rotational") {
        const Vec rates = r.vector_fill(obj, section, "pair_rates", {4}, 4, 0.0);
        RotationalField f;
        for (std::size_t b = 0; b < 4; ++b) {
            f.generator[(2 * b) * 8 + (2 * b + 1)] = rates[b];
            f.generator[(2 * b + 1) * 8 + (2 * b)] = -rates[b];
        }
        return f;
    }
    if (variant == "contraction") {
        ContractionField f;
        f.rate = r.number(obj, section, "kappa", 1.0);
        f.anchor = r.vector_fill(obj, section, "anchor", {8, dim}, dim, 0.0);
        return f;
    }
    // sigma_contraction
    SigmaContractionField f;
    f.rate = r.number(obj, section, "kappa", 1.0);
    f.tube_radius = r.number(obj, section, "tube_radius", 1.0);
    f.sphere_radius = r.number(obj, section, "sphere_radius", 1.0);
    return f;
}

inline json leaf_snapshot(const LeafField& leaf) {
    json j;
    std::visit(
        [&](const auto& f) {
            using T = std::decay_t<decltype(f)>;
            if constexpr (std::is_same_v<T, ConstantField>) {
                j["variant"] = "constant";
                j["value"] = f.value;
            } else if constexpr (std::is_same_v<T, RotationalField>) {
                j["variant"] = "rotational";
                json rates = json::array();
                for (std::size_t b = 0; b < 4; ++b)
                    rates.push_back(f.generator[(2 * b) * 8 + (2 * b + 1)]);
                j["pair_rates"] = rates;
            } else if constexpr (std::is_same_v<T, ContractionField>) {
                j["variant"] = "contraction";
                j["kappa"] = f.rate;
                j["anchor"] = f.anchor;
            } else {
                j["variant"] = "sigma_contraction";
                j["kappa"] = f.rate;
                j["tube_radius"] = f.tube_radius;
                j["sphere_radius"] = f.sphere_radius;
            }
        },
        leaf);
    return j;
}

}  // namespace detail_cfg

// Resolve a parsed document (either syntax) into a validated RunConfig with
// every default applied.
inline RunConfig resolve_config(const json& root,
                                const std::map<std::string, int>* lines = nullptr) {
    using detail_cfg::Resolver;
    const Resolver r(root, lines);
    RunConfig cfg;

    r.check_keys(root, "",
                 {"n_factors", "seed", "t_horizon", "length_scale", "eta_weights", "beta",
                  "schedule", "measure", "observable", "experiment", "simulate", "lipschitz",
                  "wep"});

    if (!root.contains("n_factors")) r.fail("n_factors", "required");
    cfg.model.n_factors = static_cast<std::size_t>(r.uinteger(root, "", "n_factors", 1));
    if (cfg.model.n_factors < 1) r.fail("n_factors", "must be >= 1");
    cfg.model.seed = r.uinteger(root, "", "seed", 0);
    cfg.model.length_scale = r.number(root, "", "length_scale", 1.0);
    const std::size_t dim = cfg.model.dim();

    {
        const Vec w = r.vector_fill(root, "", "eta_weights", {16}, 16, 1.0);
        std::copy(w.begin(), w.end(), cfg.model.eta_weights.begin());
    }

    // [beta]
    {
        const json empty = json::object();
        const json& b = root.contains("beta") ? root.at("beta") : empty;
        r.check_keys(b, "beta",
                     {"variant", "mode", "value", "pair_rates", "kappa", "anchor",
                      "tube_radius", "sphere_radius", "components"});
        const std::string variant =
            r.word(b, "beta", "variant", "constant",
                   {"constant", "rotational", "contraction", "sigma_contraction", "blended"});
        const std::string mode = r.word(b, "beta", "mode", "squashed", {"raw", "squashed"});
        cfg.model.beta.mode = mode == "raw" ? BetaMode::raw : BetaMode::squashed;
        if (variant == "blended") {
            if (!b.contains("components") || !b.at("components").is_array() ||
                b.at("components").empty())
                r.fail("beta.components", "blended field needs at least one component");
            BlendedField blend;
            std::size_t idx = 0;
            for (const json& comp : b.at("components")) {
                const std::string section = "beta.components[" + std::to_string(idx++) + "]";
                r.check_keys(comp, section,
                             {"weight", "variant", "value", "pair_rates", "kappa", "anchor",
                              "tube_radius", "sphere_radius", "weight_tau_amplitude",
                              "weight_tau_frequency", "weight_tau_phase"});
                const std::string leaf_variant =
                    r.word(comp, section, "variant", "constant",
                           {"constant", "rotational", "contraction", "sigma_contraction"});
                BlendWeight w;
                w.base = r.number(comp, section, "weight", 1.0);
                w.tau_amp = r.number(comp, section, "weight_tau_amplitude", 0.0);
                w.tau_freq = r.number(comp, section, "weight_tau_frequency", 0.0);
                w.tau_phase = r.number(comp, section, "weight_tau_phase", 0.0);
                blend.parts.emplace_back(
                    w, detail_cfg::resolve_leaf(r, comp, section, leaf_variant, dim));
            }
            cfg.model.beta.variant = std::move(blend);
        } else {
            const LeafField leaf = detail_cfg::resolve_leaf(r, b, "beta", variant, dim);
            std::visit([&](const auto& f) { cfg.model.beta.variant = f; }, leaf);
        }
    }

    // [schedule]
    {
        const json empty = json::object();
        const json& s = root.contains("schedule") ? root.at("schedule") : empty;
        r.check_keys(s, "schedule",
                     {"cycles", "kappa", "kappa_expand", "target", "anchor", "sphere_radius",
                      "stir_amplitude", "stir_frequency", "stir_rotation"});
        auto& sched = cfg.model.schedule;
        if (s.contains("cycles")) {
            if (!s.at("cycles").is_array()) r.fail("schedule.cycles", "expected an array");
            for (const json& c : s.at("cycles")) {
                if (!c.is_array() || c.size() != 3)
                    r.fail("schedule.cycles",
                           "each cycle is [ergodic, concentration, expansion]");
                sched.cycles.push_back(
                    {c[0].get<double>(), c[1].get<double>(), c[2].get<double>()});
            }
        }
        sched.contraction_rate = r.number(s, "schedule", "kappa", 1.0);
        sched.expansion_rate = r.number(s, "schedule", "kappa_expand", sched.contraction_rate);
        sched.target = r.word(s, "schedule", "target", "anchor", {"anchor", "sigma"}) ==
                               "anchor"
                           ? ConcentrationTarget::anchor
                           : ConcentrationTarget::sigma;
        if (s.contains("anchor"))
            sched.anchor = r.vector_fill(s, "schedule", "anchor", {8, dim}, dim, 0.0);
        sched.sphere_radius = r.number(s, "schedule", "sphere_radius", 1.0);
        sched.stir_amplitude = r.number(s, "schedule", "stir_amplitude", 0.1);
        sched.stir_frequency = r.number(s, "schedule", "stir_frequency", 2.5);
        sched.stir_rotation = r.number(s, "schedule", "stir_rotation", 0.7);
        cfg.model.t_horizon =
            r.number(root, "", "t_horizon", cfg.model.schedule.total_duration());
    }

    // [measure]
    {
        const json empty = json::object();
        const json& m = root.contains("measure") ? root.at("measure") : empty;
        r.check_keys(m, "measure", {"mean", "sigma"});
        const Vec mean = r.vector_fill(m, "measure", "mean", {16}, 16, 0.0);
        const Vec sigma = r.vector_fill(m, "measure", "sigma", {16}, 16, 1.0);
        std::copy(mean.begin(), mean.end(), cfg.model.measure.mean.begin());
        std::copy(sigma.begin(), sigma.end(), cfg.model.measure.sigma.begin());
    }

    // [observable]
    {
        const json empty = json::object();
        const json& o = root.contains("observable") ? root.at("observable") : empty;
        r.check_keys(o, "observable",
                     {"base", "index", "aggregator", "factor", "weights", "offset",
                      "bump_width", "bump_center", "sphere_radius"});
        const std::string base = r.word(o, "observable", "base", "coordinate",
                                        {"coordinate", "sigma_distance", "bump", "affine"});
        const std::string agg_word =
            r.word(o, "observable", "aggregator", "mean",
                   {"mean", "sum_over_sqrt_n", "single_factor"});
        const Aggregator agg = agg_word == "mean" ? Aggregator::mean
                               : agg_word == "sum_over_sqrt_n" ? Aggregator::sum_over_sqrt_n
                                                               : Aggregator::single_factor;
        const auto factor = static_cast<std::size_t>(r.uinteger(o, "observable", "factor", 0));
        ObservableBase ob;
        if (base == "coordinate") {
            const auto idx = static_cast<std::size_t>(r.uinteger(o, "observable", "index", 0));
            if (idx >= 16) r.fail("observable.index", "must be in 0..15");
            ob = CoordinateBase{idx};
        } else if (base == "sigma_distance") {
            ob = SigmaDistanceBase{r.number(o, "observable", "sphere_radius", 1.0)};
        } else if (base == "bump") {
            BumpBase bb;
            bb.width = r.number(o, "observable", "bump_width", 1.0);
            const Vec c = r.vector_fill(o, "observable", "bump_center", {16}, 16, 0.0);
            std::copy(c.begin(), c.end(), bb.center.begin());
            ob = bb;
        } else {
            AffineBase ab;
            ab.offset = r.number(o, "observable", "offset", 0.0);
            Vec w = r.vector_fill(o, "observable", "weights", {16}, 16, 0.0);
            if (!o.contains("weights")) w[0] = 1.0;  // default: first coordinate
            std::copy(w.begin(), w.end(), ab.weights.begin());
            ob = ab;
        }
        try {
            cfg.observable = make_observable(ob, agg, factor, base);
        } catch (const input_error& e) {
            r.fail("observable", e.what());
        }
    }

    // [experiment]
    {
        const json empty = json::object();
        const json& e = root.contains("experiment") ? root.at("experiment") : empty;
        r.check_keys(e, "experiment",
                     {"count", "rho_points", "rho_span_sigmas", "center", "ut_step"});
        cfg.count = static_cast<std::size_t>(r.uinteger(e, "experiment", "count", 10000));
        cfg.experiment.rho_points =
            static_cast<std::size_t>(r.uinteger(e, "experiment", "rho_points", 40));
        cfg.experiment.rho_span_sigmas = r.number(e, "experiment", "rho_span_sigmas", 4.0);
        cfg.experiment.center_median =
            r.word(e, "experiment", "center", "mean", {"mean", "median"}) == "median";
        cfg.experiment.ut_step = r.number(e, "experiment", "ut_step", 0.01);
        if (!(cfg.experiment.ut_step > 0)) r.fail("experiment.ut_step", "must be positive");
    }

    // [simulate]
    {
        const json empty = json::object();
        const json& s = root.contains("simulate") ? root.at("simulate") : empty;
        r.check_keys(s, "simulate", {"dtau", "tau_end", "member"});
        cfg.simulate.dtau = r.number(s, "simulate", "dtau", 1e-3);
        cfg.simulate.tau_end = r.number(s, "simulate", "tau_end", 1.0);
        cfg.simulate.member = static_cast<std::size_t>(r.uinteger(s, "simulate", "member", 0));
        if (!(cfg.simulate.dtau > 0)) r.fail("simulate.dtau", "must be positive");
        if (!(cfg.simulate.tau_end > 0)) r.fail("simulate.tau_end", "must be positive");
    }

    // [lipschitz]
    {
        const json empty = json::object();
        const json& l = root.contains("lipschitz") ? root.at("lipschitz") : empty;
        r.check_keys(l, "lipschitz", {"map", "duration", "pairs", "u_only"});
        cfg.lipschitz.map = r.word(l, "lipschitz", "map", "concentration",
                                   {"concentration", "expansion", "ergodic"});
        cfg.lipschitz.duration = r.number(l, "lipschitz", "duration", 1.0);
        cfg.lipschitz.pairs =
            static_cast<std::size_t>(r.uinteger(l, "lipschitz", "pairs", 10000));
        if (l.contains("u_only")) {
            if (!l.at("u_only").is_boolean()) r.fail("lipschitz.u_only", "expected a boolean");
            cfg.lipschitz.u_only = l.at("u_only").get<bool>();
        }
        if (!(cfg.lipschitz.duration > 0)) r.fail("lipschitz.duration", "must be positive");
        if (cfg.lipschitz.pairs < 1) r.fail("lipschitz.pairs", "must be >= 1");
    }

    // [wep]
    {
        const json empty = json::object();
        const json& w = root.contains("wep") ? root.at("wep") : empty;
        r.check_keys(w, "wep",
                     {"n_a", "n_b", "count", "tau_end", "tau_points", "h", "h_value",
                      "h_amplitude", "h_frequency", "h_phase", "h_breaks", "h_values"});
        cfg.wep.n_a = static_cast<std::size_t>(
            r.uinteger(w, "wep", "n_a", (cfg.model.n_factors + 1) / 2));
        cfg.wep.n_b = static_cast<std::size_t>(
            r.uinteger(w, "wep", "n_b", cfg.model.n_factors - cfg.wep.n_a));
        cfg.wep.count = static_cast<std::size_t>(r.uinteger(w, "wep", "count", cfg.count));
        cfg.wep.tau_end = r.number(w, "wep", "tau_end", 1.0);
        cfg.wep.tau_points =
            static_cast<std::size_t>(r.uinteger(w, "wep", "tau_points", 21));
        if (cfg.wep.tau_points < 2) r.fail("wep.tau_points", "must be >= 2");
        if (!(cfg.wep.tau_end > 0)) r.fail("wep.tau_end", "must be positive");
        const std::string hkind =
            r.word(w, "wep", "h", "constant", {"constant", "sinusoidal", "piecewise"});
        const Vec hv = r.vector_fill(w, "wep", "h_value", {4}, 4, 0.0);
        if (hkind == "constant") {
            ConstantCom c;
            std::copy(hv.begin(), hv.end(), c.value.begin());
            cfg.wep.h = c;
        } else if (hkind == "sinusoidal") {
            SinusoidalCom s;
            std::copy(hv.begin(), hv.end(), s.base.begin());
            const Vec amp = r.vector_fill(w, "wep", "h_amplitude", {4}, 4, 0.0);
            std::copy(amp.begin(), amp.end(), s.amplitude.begin());
            s.frequency = r.number(w, "wep", "h_frequency", 1.0);
            s.phase = r.number(w, "wep", "h_phase", 0.0);
            cfg.wep.h = s;
        } else {
            PiecewiseCom p;
            if (!w.contains("h_breaks") || !w.contains("h_values"))
                r.fail("wep.h_breaks", "piecewise h needs h_breaks and h_values");
            const json& breaks = w.at("h_breaks");
            const json& values = w.at("h_values");
            if (!breaks.is_array() || !values.is_array() || breaks.size() != values.size() ||
                breaks.empty())
                r.fail("wep.h_breaks", "h_breaks and h_values must be equal-length arrays");
            for (std::size_t i = 0; i < breaks.size(); ++i) {
                if (!values[i].is_array() || values[i].size() != 4)
                    r.fail("wep.h_values", "each entry is a length-4 array");
                std::array<double, 4> v;
                for (std::size_t k = 0; k < 4; ++k) v[k] = values[i][k].get<double>();
                p.segments.emplace_back(breaks[i].get<double>(), v);
            }
            cfg.wep.h = p;
        }
    }

    try {
        cfg.model.validate();
    } catch (const std::exception& e) {
        throw config_error("", std::string("invalid model configuration: ") + e.what());
    }

    // Canonical post-default snapshot (json object keys sort themselves).
    json snap;
    snap["n_factors"] = cfg.model.n_factors;
    snap["seed"] = cfg.model.seed;
    snap["t_horizon"] = cfg.model.t_horizon;
    snap["length_scale"] = cfg.model.length_scale;
    snap["eta_weights"] = cfg.model.eta_weights;
    json beta;
    beta["mode"] = cfg.model.beta.mode == BetaMode::raw ? "raw" : "squashed";
    if (const auto* blend = std::get_if<BlendedField>(&cfg.model.beta.variant)) {
        beta["variant"] = "blended";
        json comps = json::array();
        for (const auto& [wt, leaf] : blend->parts) {
            json c = detail_cfg::leaf_snapshot(leaf);
            c["weight"] = wt.base;
            c["weight_tau_amplitude"] = wt.tau_amp;
            c["weight_tau_frequency"] = wt.tau_freq;
            c["weight_tau_phase"] = wt.tau_phase;
            comps.push_back(c);
        }
        beta["components"] = comps;
    } else {
        std::visit(
            [&](const auto& f) {
                using T = std::decay_t<decltype(f)>;
                if constexpr (!std::is_same_v<T, BlendedField>) {
                    beta.update(detail_cfg::leaf_snapshot(LeafField{f}));
                }
            },
            cfg.model.beta.variant);
    }
    snap["beta"] = beta;
    json sched;
    json cycles = json::array();
    for (const auto& c : cfg.model.schedule.cycles)
        cycles.push_back({c.ergodic, c.concentration, c.expansion});
    sched["cycles"] = cycles;
    sched["kappa"] = cfg.model.schedule.contraction_rate;
    sched["kappa_expand"] = cfg.model.schedule.expansion_rate;
    sched["target"] =
        cfg.model.schedule.target == ConcentrationTarget::anchor ? "anchor" : "sigma";
    sched["anchor"] = cfg.model.schedule.anchor;
    sched["sphere_radius"] = cfg.model.schedule.sphere_radius;
    sched["stir_amplitude"] = cfg.model.schedule.stir_amplitude;
    sched["stir_frequency"] = cfg.model.schedule.stir_frequency;
    sched["stir_rotation"] = cfg.model.schedule.stir_rotation;
    snap["schedule"] = sched;
    snap["measure"] = {{"mean", cfg.model.measure.mean}, {"sigma", cfg.model.measure.sigma}};
    snap["observable"] = {{"base", cfg.observable.name},
                          {"aggregator", cfg.observable.aggregator == Aggregator::mean
                                             ? "mean"
                                             : cfg.observable.aggregator ==
                                                       Aggregator::sum_over_sqrt_n
                                                   ? "sum_over_sqrt_n"
                                                   : "single_factor"},
                          {"factor", cfg.observable.factor},
                          {"claimed_lipschitz", cfg.observable.claimed_lipschitz}};
    snap["experiment"] = {{"count", cfg.count},
                          {"rho_points", cfg.experiment.rho_points},
                          {"rho_span_sigmas", cfg.experiment.rho_span_sigmas},
                          {"center", cfg.experiment.center_median ? "median" : "mean"},
                          {"ut_step", cfg.experiment.ut_step}};
    snap["simulate"] = {{"dtau", cfg.simulate.dtau},
                        {"tau_end", cfg.simulate.tau_end},
                        {"member", cfg.simulate.member}};
    snap["lipschitz"] = {{"map", cfg.lipschitz.map},
                         {"duration", cfg.lipschitz.duration},
                         {"pairs", cfg.lipschitz.pairs},
                         {"u_only", cfg.lipschitz.u_only}};
    json wj;
    wj["n_a"] = cfg.wep.n_a;
    wj["n_b"] = cfg.wep.n_b;
    wj["count"] = cfg.wep.count;
    wj["tau_end"] = cfg.wep.tau_end;
    wj["tau_points"] = cfg.wep.tau_points;
    std::visit(
        [&](const auto& f) {
            using T = std::decay_t<decltype(f)>;
            if constexpr (std::is_same_v<T, ConstantCom>) {
                wj["h"] = "constant";
                wj["h_value"] = f.value;
            } else if constexpr (std::is_same_v<T, SinusoidalCom>) {
                wj["h"] = "sinusoidal";
                wj["h_value"] = f.base;
                wj["h_amplitude"] = f.amplitude;
                wj["h_frequency"] = f.frequency;
                wj["h_phase"] = f.phase;
            } else {
                wj["h"] = "piecewise";
                json b = json::array(), v = json::array();
                for (const auto& [start, val] : f.segments) {
                    b.push_back(start);
                    v.push_back(val);
                }
                wj["h_breaks"] = b;
                wj["h_values"] = v;
            }
        },
        cfg.wep.h);
    snap["wep"] = wj;
    cfg.resolved = std::move(snap);
    return cfg;
}

// A parsed-but-unresolved config document; lets callers override keys
// (e.g. the seed from the command line) before defaults are applied.
struct ConfigDocument {
    json root;
    std::map<std::string, int> lines;
    bool has_lines = false;
};

// Read a config file: TOML syntax by default, JSON accepted as an alternate
// (detected by extension or a leading brace).
inline ConfigDocument read_config_document(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw config_error("", "cannot open config file: " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    const std::string text = buf.str();

    const auto first = text.find_first_not_of(" \t\r\n");
    const bool looks_json =
        path.extension() == ".json" || (first != std::string::npos && text[first] == '{');
    ConfigDocument doc;
    if (looks_json) {
        try {
            doc.root = json::parse(text);
        } catch (const json::parse_error& e) {
            throw config_error("", std::string("JSON parse error: ") + e.what());
        }
        return doc;
    }
    const auto toml = detail_cfg::parse_toml(text);
    doc.root = toml.root;
    doc.lines = toml.lines;
    doc.has_lines = true;
    return doc;
}

inline RunConfig resolve_document(const ConfigDocument& doc) {
    return resolve_config(doc.root, doc.has_lines ? &doc.lines : nullptr);
}

inline RunConfig load_config(const std::filesystem::path& path) {
    return resolve_document(read_config_document(path));
}

}  // namespace dcrm
