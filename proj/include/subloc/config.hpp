// Flat dotted-key experiment configuration: "section.key = value" lines,
// strict key registry, line-numbered diagnostics, identity round-trip.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace subloc {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

class Config {
   public:
    static Config parse(const std::string& text) {
        Config cfg;
        std::istringstream in(text);
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const std::string trimmed = trim(line);
            if (trimmed.empty() || trimmed[0] == '#') continue;
            const auto eq = trimmed.find('=');
            if (eq == std::string::npos)
                throw ConfigError("config line " + std::to_string(lineno) +
                                  ": expected 'key = value', got '" + trimmed + "'");
            const std::string key = trim(trimmed.substr(0, eq));
            const std::string value = trim(trimmed.substr(eq + 1));
            if (key.empty())
                throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
            if (key.find_first_not_of(
                    "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789_.") !=
                std::string::npos)
                throw ConfigError("config line " + std::to_string(lineno) + ": bad key '" + key +
                                  "'");
            if (cfg.index_.count(key))
                throw ConfigError("config line " + std::to_string(lineno) + ": duplicate key '" +
                                  key + "' (first set on line " +
                                  std::to_string(cfg.lines_.at(key)) + ")");
            cfg.index_[key] = cfg.items_.size();
            cfg.lines_[key] = lineno;
            cfg.items_.emplace_back(key, value);
        }
        return cfg;
    }

    static Config load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open config file: " + path);
        std::ostringstream buf;
        buf << in.rdbuf();
        return parse(buf.str());
    }

    std::string serialize() const {
        std::string out;
        for (const auto& [key, value] : items_) {
            out += key;
            out += " = ";
            out += value;
            out += '\n';
        }
        return out;
    }

    bool has(const std::string& key) const { return index_.count(key) > 0; }

    void set(const std::string& key, const std::string& value) {
        const auto it = index_.find(key);
        if (it != index_.end()) {
            items_[it->second].second = value;
        } else {
            index_[key] = items_.size();
            lines_[key] = 0;
            items_.emplace_back(key, value);
        }
    }

    const std::string& str(const std::string& key, const std::string& fallback) const {
        const auto it = index_.find(key);
        return it == index_.end() ? fallback : items_[it->second].second;
    }

    double num(const std::string& key, double fallback) const {
        const auto it = index_.find(key);
        if (it == index_.end()) return fallback;
        return parse_num(key, items_[it->second].second);
    }

    long integer(const std::string& key, long fallback) const {
        const double v = num(key, static_cast<double>(fallback));
        const long r = static_cast<long>(std::llround(v));
        if (std::abs(v - r) > 1e-9)
            throw ConfigError(where(key) + "expected an integer for '" + key + "'");
        return r;
    }

    bool flag(const std::string& key, bool fallback) const {
        const auto it = index_.find(key);
        if (it == index_.end()) return fallback;
        const std::string& v = items_[it->second].second;
        if (v == "true" || v == "on" || v == "1") return true;
        if (v == "false" || v == "off" || v == "0") return false;
        throw ConfigError(where(key) + "expected true/false for '" + key + "', got '" + v + "'");
    }

    std::vector<double> num_list(const std::string& key,
                                 const std::vector<double>& fallback) const {
        const auto it = index_.find(key);
        if (it == index_.end()) return fallback;
        std::vector<double> out;
        std::istringstream ss(items_[it->second].second);
        std::string cell;
        while (std::getline(ss, cell, ',')) out.push_back(parse_num(key, trim(cell)));
        if (out.empty()) throw ConfigError(where(key) + "empty list for '" + key + "'");
        return out;
    }

    std::vector<std::string> keys() const {
        std::vector<std::string> out;
        for (const auto& [key, value] : items_) out.push_back(key);
        return out;
    }

    // every key must belong to the registry; diagnostics carry the source line
    void restrict_keys(const std::vector<std::string>& allowed) const {
        for (const auto& [key, value] : items_)
            if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
                throw ConfigError(where(key) + "unknown key '" + key + "'");
    }

    bool operator==(const Config& other) const { return items_ == other.items_; }

   private:
    static std::string trim(const std::string& s) {
        const auto b = s.find_first_not_of(" \t\r");
        if (b == std::string::npos) return "";
        const auto e = s.find_last_not_of(" \t\r");
        return s.substr(b, e - b + 1);
    }

    std::string where(const std::string& key) const {
        const auto it = lines_.find(key);
        if (it == lines_.end() || it->second == 0) return "config: ";
        return "config line " + std::to_string(it->second) + ": ";
    }

    double parse_num(const std::string& key, const std::string& text) const {
        if (text == "inf") return std::numeric_limits<double>::infinity();
        try {
            std::size_t pos = 0;
            const double v = std::stod(text, &pos);
            if (pos != text.size()) throw std::invalid_argument(text);
            return v;
        } catch (const std::exception&) {
            throw ConfigError(where(key) + "expected a number for '" + key + "', got '" + text +
                              "'");
        }
    }

    std::vector<std::pair<std::string, std::string>> items_;
    std::map<std::string, std::size_t> index_;
    std::map<std::string, int> lines_;
};

enum class MeasureKind { gaussian, flat_strong };

struct ExperimentConfig {
    MeasureKind kind = MeasureKind::gaussian;
    int n = 2;
    int k = 1;
    bool rotated_split = false;
    std::uint64_t rotation_seed = 1;
    std::vector<double> sigma_diag;  // empty: identity
    double eta = 1.0;                // flat_strong curvature on E
    std::string w_kind = "quadratic";
    std::vector<double> w_diag;  // empty: identity
    double w_a4 = 1.0;
    double w_a2 = 0.0;
    double truncate_radius = 0.0;  // 0: no truncation
    bool whiten = false;

    double T = 1.0;
    double dt = 0.0;  // 0: min(0.01, T/100)
    int replicas = 100;
    std::uint64_t seed = 1;
    std::string mode = "exact";  // oracle | exact | mala
    int count = 2000;
    bool exact_sets = true;
    int hessian_points = 1;

    double mala_step = 0.0;
    int mala_warmup = -1;
    int mala_thinning = 1;
    int mala_count = 0;  // 0: use count

    int sets_axes = 2;
    int sets_random = 1;

    double radii_max = 3.0;
    int radii_count = 13;
    int conc_samples = 100000;
    int conc_directions = 64;

    double psi_k = 1.0;
    double c1_reference = 0.1;
    double c_max = 20.0;
    double qv_slack = 0.25;
    double delta_tol_mc = 0.1;
    double replay_tol = 0.25;  // sized for count = 2000: max sample-cov error over a default run
    double exit_threshold = 0.0;  // 0: 10 |Q_0|_op

    double freedman_a = 2.0;
    double freedman_b = 1.0;
    double freedman_T = 1.0;
    int freedman_paths = 10000;
    std::vector<double> lambdas = {0.5, 1.0, 2.0};

    static const std::vector<std::string>& registry() {
        static const std::vector<std::string> keys = {
            "measure.kind",        "measure.n",
            "measure.k",           "measure.split",
            "measure.split_seed",  "measure.sigma_diag",
            "measure.eta",         "measure.w",
            "measure.w_diag",      "measure.w_a4",
            "measure.w_a2",        "measure.truncate",
            "whiten",              "run.T",
            "run.dt",              "run.replicas",
            "run.seed",            "run.mode",
            "run.count",           "run.exact_sets",
            "run.hessian_points",  "mala.step",
            "mala.warmup",         "mala.thinning",
            "mala.count",          "sets.axes",
            "sets.random",         "radii.max",
            "radii.count",         "concentration.samples",
            "concentration.directions", "constants.psi_k",
            "constants.c1",        "constants.c_max",
            "constants.qv_slack",  "constants.delta_tol_mc",
            "constants.replay_tol", "constants.exit_threshold",
            "freedman.a",          "freedman.b",
            "freedman.T",          "freedman.paths",
            "freedman.lambdas"};
        return keys;
    }

    static ExperimentConfig from_config(const Config& cfg) {
        cfg.restrict_keys(registry());
        ExperimentConfig ec;
        const std::string kind = cfg.str("measure.kind", "gaussian");
        if (kind == "gaussian")
            ec.kind = MeasureKind::gaussian;
        else if (kind == "flat_strong")
            ec.kind = MeasureKind::flat_strong;
        else
            throw ConfigError("config: unknown measure.kind '" + kind + "'");
        ec.n = static_cast<int>(cfg.integer("measure.n", ec.n));
        ec.k = static_cast<int>(cfg.integer("measure.k", ec.k));
        const std::string split = cfg.str("measure.split", "axis");
        if (split == "rotated")
            ec.rotated_split = true;
        else if (split != "axis")
            throw ConfigError("config: unknown measure.split '" + split + "'");
        ec.rotation_seed = cfg.integer("measure.split_seed", 1);
        ec.sigma_diag = cfg.num_list("measure.sigma_diag", {});
        ec.eta = cfg.num("measure.eta", ec.eta);
        ec.w_kind = cfg.str("measure.w", ec.w_kind);
        if (ec.w_kind != "quadratic" && ec.w_kind != "quartic")
            throw ConfigError("config: unknown measure.w '" + ec.w_kind + "'");
        ec.w_diag = cfg.num_list("measure.w_diag", {});
        ec.w_a4 = cfg.num("measure.w_a4", ec.w_a4);
        ec.w_a2 = cfg.num("measure.w_a2", ec.w_a2);
        ec.truncate_radius = cfg.num("measure.truncate", 0.0);
        ec.whiten = cfg.flag("whiten", false);

        ec.T = cfg.num("run.T", ec.T);
        ec.dt = cfg.num("run.dt", ec.dt);
        ec.replicas = static_cast<int>(cfg.integer("run.replicas", ec.replicas));
        ec.seed = cfg.integer("run.seed", 1);
        ec.mode = cfg.str("run.mode", ec.mode);
        if (ec.mode != "oracle" && ec.mode != "exact" && ec.mode != "mala")
            throw ConfigError("config: unknown run.mode '" + ec.mode + "'");
        ec.count = static_cast<int>(cfg.integer("run.count", ec.count));
        ec.exact_sets = cfg.flag("run.exact_sets", ec.exact_sets);
        ec.hessian_points = static_cast<int>(cfg.integer("run.hessian_points", ec.hessian_points));

        ec.mala_step = cfg.num("mala.step", ec.mala_step);
        ec.mala_warmup = static_cast<int>(cfg.integer("mala.warmup", ec.mala_warmup));
        ec.mala_thinning = static_cast<int>(cfg.integer("mala.thinning", ec.mala_thinning));
        ec.mala_count = static_cast<int>(cfg.integer("mala.count", ec.mala_count));

        ec.sets_axes = static_cast<int>(cfg.integer("sets.axes", ec.sets_axes));
        ec.sets_random = static_cast<int>(cfg.integer("sets.random", ec.sets_random));
        ec.radii_max = cfg.num("radii.max", ec.radii_max);
        ec.radii_count = static_cast<int>(cfg.integer("radii.count", ec.radii_count));
        ec.conc_samples = static_cast<int>(cfg.integer("concentration.samples", ec.conc_samples));
        ec.conc_directions =
            static_cast<int>(cfg.integer("concentration.directions", ec.conc_directions));

        ec.psi_k = cfg.num("constants.psi_k", ec.psi_k);
        ec.c1_reference = cfg.num("constants.c1", ec.c1_reference);
        ec.c_max = cfg.num("constants.c_max", ec.c_max);
        ec.qv_slack = cfg.num("constants.qv_slack", ec.qv_slack);
        ec.delta_tol_mc = cfg.num("constants.delta_tol_mc", ec.delta_tol_mc);
        ec.replay_tol = cfg.num("constants.replay_tol", ec.replay_tol);
        ec.exit_threshold = cfg.num("constants.exit_threshold", ec.exit_threshold);

        ec.freedman_a = cfg.num("freedman.a", ec.freedman_a);
        ec.freedman_b = cfg.num("freedman.b", ec.freedman_b);
        ec.freedman_T = cfg.num("freedman.T", ec.freedman_T);
        ec.freedman_paths = static_cast<int>(cfg.integer("freedman.paths", ec.freedman_paths));
        ec.lambdas = cfg.num_list("freedman.lambdas", ec.lambdas);

        ec.validate();
        return ec;
    }

    void validate() const {
        if (n < 1 || k < 1 || k > n) throw ConfigError("config: need 1 <= measure.k <= measure.n");
        if (!(T > 0.0)) throw ConfigError("config: run.T must be positive");
        if (dt < 0.0) throw ConfigError("config: run.dt must be nonnegative");
        if (dt > 0.0 && T < dt) throw ConfigError("config: run.T must be at least run.dt");
        if (replicas < 1) throw ConfigError("config: run.replicas must be at least 1");
        if (count < 2) throw ConfigError("config: run.count must be at least 2");
        if (!sigma_diag.empty() && static_cast<int>(sigma_diag.size()) != n)
            throw ConfigError("config: measure.sigma_diag needs measure.n entries");
        if (!w_diag.empty() && static_cast<int>(w_diag.size()) != k)
            throw ConfigError("config: measure.w_diag needs measure.k entries");
        if (!(psi_k > 0.0)) throw ConfigError("config: constants.psi_k must be positive");
        if (radii_count < 2 || !(radii_max > 0.0))
            throw ConfigError("config: radii grid needs radii.max > 0 and radii.count >= 2");
        if (eta < 0.0) throw ConfigError("config: measure.eta must be nonnegative");
    }

    // time schedule matched to a target radius: t(r) = min(eta, T, 1/r);
    // the measure's eta is only known once the potential is built
    double schedule_t(double r, double measure_eta) const {
        const double inv = r > 0.0 ? 1.0 / r : std::numeric_limits<double>::infinity();
        return std::min(std::min(measure_eta, T), inv);
    }

    std::vector<double> radii() const {
        std::vector<double> out;
        for (int i = 0; i < radii_count; ++i)
            out.push_back(radii_max * i / (radii_count - 1.0));
        return out;
    }

    // all effective settings materialized, in registry order
    Config effective() const {
        Config out;
        const auto fmt = [](double v) {
            if (std::isinf(v)) return std::string("inf");
            std::ostringstream ss;
            ss.precision(15);
            ss << v;
            return ss.str();
        };
        const auto fmt_list = [&](const std::vector<double>& xs) {
            std::string s;
            for (std::size_t i = 0; i < xs.size(); ++i) {
                if (i) s += ",";
                s += fmt(xs[i]);
            }
            return s;
        };
        out.set("measure.kind", kind == MeasureKind::gaussian ? "gaussian" : "flat_strong");
        out.set("measure.n", std::to_string(n));
        out.set("measure.k", std::to_string(k));
        out.set("measure.split", rotated_split ? "rotated" : "axis");
        out.set("measure.split_seed", std::to_string(rotation_seed));
        if (!sigma_diag.empty()) out.set("measure.sigma_diag", fmt_list(sigma_diag));
        out.set("measure.eta", fmt(eta));
        out.set("measure.w", w_kind);
        if (!w_diag.empty()) out.set("measure.w_diag", fmt_list(w_diag));
        out.set("measure.w_a4", fmt(w_a4));
        out.set("measure.w_a2", fmt(w_a2));
        out.set("measure.truncate", fmt(truncate_radius));
        out.set("whiten", whiten ? "true" : "false");
        out.set("run.T", fmt(T));
        out.set("run.dt", fmt(dt));
        out.set("run.replicas", std::to_string(replicas));
        out.set("run.seed", std::to_string(seed));
        out.set("run.mode", mode);
        out.set("run.count", std::to_string(count));
        out.set("run.exact_sets", exact_sets ? "true" : "false");
        out.set("run.hessian_points", std::to_string(hessian_points));
        out.set("mala.step", fmt(mala_step));
        out.set("mala.warmup", std::to_string(mala_warmup));
        out.set("mala.thinning", std::to_string(mala_thinning));
        out.set("mala.count", std::to_string(mala_count));
        out.set("sets.axes", std::to_string(sets_axes));
        out.set("sets.random", std::to_string(sets_random));
        out.set("radii.max", fmt(radii_max));
        out.set("radii.count", std::to_string(radii_count));
        out.set("concentration.samples", std::to_string(conc_samples));
        out.set("concentration.directions", std::to_string(conc_directions));
        out.set("constants.psi_k", fmt(psi_k));
        out.set("constants.c1", fmt(c1_reference));
        out.set("constants.c_max", fmt(c_max));
        out.set("constants.qv_slack", fmt(qv_slack));
        out.set("constants.delta_tol_mc", fmt(delta_tol_mc));
        out.set("constants.replay_tol", fmt(replay_tol));
        out.set("constants.exit_threshold", fmt(exit_threshold));
        out.set("freedman.a", fmt(freedman_a));
        out.set("freedman.b", fmt(freedman_b));
        out.set("freedman.T", fmt(freedman_T));
        out.set("freedman.paths", std::to_string(freedman_paths));
        out.set("freedman.lambdas", fmt_list(lambdas));
        return out;
    }
};

}  // namespace subloc
