// Lemma-by-lemma checklist: a fixed registry of checkers, each reported
// exactly once per run, serialized as JSON and as a stable text summary.
#pragma once

#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace subloc {

using ordered_json = nlohmann::ordered_json;

enum class CheckStatus { pass, fail, report, insufficient, skipped };

inline const char* to_string(CheckStatus s) {
    switch (s) {
        case CheckStatus::pass: return "pass";
        case CheckStatus::fail: return "fail";
        case CheckStatus::report: return "report";
        case CheckStatus::insufficient: return "insufficient";
        case CheckStatus::skipped: return "skipped";
    }
    return "unknown";
}

struct CheckResult {
    std::string name;
    CheckStatus status = CheckStatus::skipped;
    ordered_json details = ordered_json::object();
    std::string note;
};

class Report {
   public:
    // one entry per numerically checkable statement; a summary missing any of
    // these is incomplete and fails
    static const std::vector<std::string>& registry() {
        static const std::vector<std::string> names = {
            "mass_conservation",
            "tilted_hessian_bound",
            "gaussian_conjugacy_replay",
            "martingale_set_mass",
            "qv_domination",
            "spectral_drift_identity",
            "vt_bound",
            "delta_bound",
            "covariance_exit_time",
            "freedman_tail",
            "exponential_supermartingale",
            "strong_logconcave_concentration",
            "main_theorem_shape",
            "poincare_proxies",
            "whitening_transfer",
            "lipschitz_tail",
        };
        return names;
    }

    void add(CheckResult result) {
        bool known = false;
        for (const auto& name : registry()) known = known || name == result.name;
        if (!known) throw std::invalid_argument("Report: unknown checker '" + result.name + "'");
        for (const auto& existing : results_)
            if (existing.name == result.name)
                throw std::invalid_argument("Report: duplicate checker '" + result.name + "'");
        results_.push_back(std::move(result));
    }

    void meta(const std::string& key, const ordered_json& value) { meta_[key] = value; }

    bool has(const std::string& name) const {
        for (const auto& r : results_)
            if (r.name == name) return true;
        return false;
    }

    const CheckResult& get(const std::string& name) const {
        for (const auto& r : results_)
            if (r.name == name) return r;
        throw std::out_of_range("Report: no checker '" + name + "'");
    }

    std::vector<std::string> missing() const {
        std::vector<std::string> out;
        for (const auto& name : registry())
            if (!has(name)) out.push_back(name);
        return out;
    }

    bool complete() const { return missing().empty(); }

    // hard failure: any failing checker, or an incomplete checklist
    bool hard_pass() const {
        if (!complete()) return false;
        for (const auto& r : results_)
            if (r.status == CheckStatus::fail) return false;
        return true;
    }

    ordered_json to_json() const {
        ordered_json j;
        j["overall"] = hard_pass() ? "pass" : "fail";
        j["missing"] = missing();
        ordered_json checks = ordered_json::array();
        for (const auto& name : registry()) {
            if (!has(name)) continue;
            const auto& r = get(name);
            ordered_json c;
            c["name"] = r.name;
            c["status"] = to_string(r.status);
            c["details"] = r.details;
            if (!r.note.empty()) c["note"] = r.note;
            checks.push_back(c);
        }
        j["checks"] = checks;
        if (!meta_.empty()) j["meta"] = meta_;
        return j;
    }

    std::string to_text() const {
        std::string out = "overall: " + std::string(hard_pass() ? "pass" : "fail") + "\n";
        for (const auto& name : missing()) out += "missing: " + name + "\n";
        for (const auto& name : registry()) {
            if (!has(name)) continue;
            const auto& r = get(name);
            out += "check " + r.name + ": " + to_string(r.status);
            for (const auto& [key, value] : r.details.items())
                out += " " + key + "=" + value.dump();
            if (!r.note.empty()) out += "  # " + r.note;
            out += "\n";
        }
        return out;
    }

    void save(const std::string& json_path, const std::string& text_path) const {
        std::ofstream j(json_path, std::ios::binary);
        if (!j) throw std::runtime_error("Report: cannot write " + json_path);
        j << to_json().dump(2) << "\n";
        std::ofstream t(text_path, std::ios::binary);
        if (!t) throw std::runtime_error("Report: cannot write " + text_path);
        t << to_text();
    }

    static Report load(const std::string& json_path) {
        std::ifstream in(json_path);
        if (!in) throw std::runtime_error("Report: cannot open " + json_path);
        ordered_json j;
        in >> j;
        Report rep;
        for (const auto& c : j.at("checks")) {
            CheckResult r;
            r.name = c.at("name").get<std::string>();
            const std::string status = c.at("status").get<std::string>();
            if (status == "pass") r.status = CheckStatus::pass;
            else if (status == "fail") r.status = CheckStatus::fail;
            else if (status == "report") r.status = CheckStatus::report;
            else if (status == "insufficient") r.status = CheckStatus::insufficient;
            else r.status = CheckStatus::skipped;
            r.details = c.value("details", ordered_json::object());
            r.note = c.value("note", std::string());
            rep.add(std::move(r));
        }
        if (j.contains("meta"))
            for (const auto& [key, value] : j.at("meta").items()) rep.meta(key, value);
        return rep;
    }

   private:
    std::vector<CheckResult> results_;
    ordered_json meta_ = ordered_json::object();
};

}  // namespace subloc
