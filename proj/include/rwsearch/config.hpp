#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "rwsearch/eval.hpp"
#include "rwsearch/forest.hpp"
#include "rwsearch/http_provider.hpp"
#include "rwsearch/mock_provider.hpp"
#include "rwsearch/search.hpp"

namespace rws {

/// Ten-module order satisfying the bundled precedence rules.
inline const std::vector<std::string>& default_schedule() {
    static const std::vector<std::string> s{"comment-insert", "block-comment", "echo-split",  "number-split",
                                            "rename-vars",    "dead-branch",   "string-split", "string-split-deep",
                                            "symbol-noise",   "xor-like-encode"};
    return s;
}

struct ProviderConfig {
    std::string kind = "mock"; // mock | http
    double corruption_rate = 0.0;
    HttpProviderConfig http;
};

struct EngineConfig {
    std::string name;
    std::string kind = "signature"; // signature | signature-panel
    std::filesystem::path rules;
    int weight = 1;
    std::map<std::string, int> weights; // per panel member, overrides rule weights
    eval::AggregationPolicy policy{1, 1};
};

struct RunConfig {
    ProviderConfig provider;
    SearchParams search;
    std::vector<std::string> schedule = default_schedule();
    std::filesystem::path modules_dir;
    std::filesystem::path rules_file;
    std::filesystem::path signatures_file;
    std::optional<std::filesystem::path> corpus;
    std::optional<std::filesystem::path> campaign_dir;
    std::vector<EngineConfig> engines;
    double requests_per_minute = 0;
    int max_attempts = 3;
};

/// Defaults point into a data directory laid out like the bundled one.
inline RunConfig default_config(const std::filesystem::path& data_dir) {
    RunConfig c;
    c.modules_dir = data_dir / "modules";
    c.rules_file = data_dir / "rules.json";
    c.signatures_file = data_dir / "signatures.json";
    c.search.max_token = 16384;
    c.engines.push_back({"signature", "signature", c.signatures_file, 1, {}, {1, 1}});
    c.engines.push_back({"panel", "signature-panel", c.signatures_file, 1, {}, {2, 3}});
    return c;
}

namespace detail {

inline std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
    std::filesystem::path path(p);
    return path.is_absolute() ? path : base / path;
}

inline void reject_unknown(const nlohmann::json& j, const std::set<std::string>& known, const std::string& where) {
    if (!j.is_object()) throw ValidationError(where + " must be a JSON object");
    for (const auto& [k, _] : j.items())
        if (!known.count(k)) throw ValidationError("unknown key in " + where + ": " + k);
}

} // namespace detail

/// Relative paths resolve against `base` (the config file's directory).
inline RunConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base, RunConfig c) {
    detail::reject_unknown(j, {"provider", "search", "schedule", "paths", "engines", "gateway"}, "config");
    try {
        if (j.contains("provider")) {
            const auto& p = j["provider"];
            if (p.contains("api_key") || p.contains("key") || p.contains("token"))
                throw ValidationError("config must not contain credentials; name the variable in api_key_env");
            detail::reject_unknown(p, {"kind", "endpoint", "model", "api_key_env", "timeout_seconds", "corruption_rate"},
                                   "provider");
            c.provider.kind = p.value("kind", c.provider.kind);
            c.provider.corruption_rate = p.value("corruption_rate", c.provider.corruption_rate);
            c.provider.http.endpoint = p.value("endpoint", c.provider.http.endpoint);
            c.provider.http.model = p.value("model", c.provider.http.model);
            c.provider.http.api_key_env = p.value("api_key_env", c.provider.http.api_key_env);
            c.provider.http.timeout_seconds = p.value("timeout_seconds", c.provider.http.timeout_seconds);
        }
        if (j.contains("search")) {
            if (!j["search"].is_object()) throw ValidationError("search must be a JSON object");
            auto merged = nlohmann::json::parse(c.search.to_json().dump());
            for (const auto& [k, v] : j["search"].items()) merged[k] = v;
            c.search = SearchParams::from_json(merged);
        }
        if (j.contains("schedule")) c.schedule = j["schedule"].get<std::vector<std::string>>();
        if (j.contains("paths")) {
            const auto& p = j["paths"];
            detail::reject_unknown(p, {"modules", "rules", "signatures", "corpus", "campaign_dir"}, "paths");
            const auto old_sig = c.signatures_file;
            if (p.contains("modules")) c.modules_dir = detail::resolve(base, p["modules"]);
            if (p.contains("rules")) c.rules_file = detail::resolve(base, p["rules"]);
            if (p.contains("signatures")) c.signatures_file = detail::resolve(base, p["signatures"]);
            if (p.contains("corpus")) c.corpus = detail::resolve(base, p["corpus"]);
            if (p.contains("campaign_dir")) c.campaign_dir = detail::resolve(base, p["campaign_dir"]);
            for (auto& e : c.engines)
                if (e.rules == old_sig) e.rules = c.signatures_file;
        }
        if (j.contains("engines")) {
            c.engines.clear();
            for (const auto& e : j["engines"]) {
                detail::reject_unknown(e, {"name", "kind", "rules", "weight", "weights", "threshold", "rounds"}, "engine");
                EngineConfig ec;
                ec.name = e.at("name").get<std::string>();
                ec.kind = e.value("kind", ec.kind);
                ec.rules = e.contains("rules") ? detail::resolve(base, e["rules"]) : c.signatures_file;
                ec.weight = e.value("weight", 1);
                if (e.contains("weights")) ec.weights = e["weights"].get<std::map<std::string, int>>();
                ec.policy.threshold = e.value("threshold", 1);
                ec.policy.rounds = e.value("rounds", 1);
                c.engines.push_back(std::move(ec));
            }
        }
        if (j.contains("gateway")) {
            const auto& g = j["gateway"];
            detail::reject_unknown(g, {"requests_per_minute", "max_attempts"}, "gateway");
            c.requests_per_minute = g.value("requests_per_minute", c.requests_per_minute);
            c.max_attempts = g.value("max_attempts", c.max_attempts);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("malformed config: ") + e.what());
    }
    return c;
}

inline RunConfig load_config(const std::filesystem::path& file, RunConfig defaults) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(util::read_file(file));
    } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError(file.string() + ": " + e.what());
    }
    return config_from_json(j, file.parent_path(), std::move(defaults));
}

inline void validate_config(const RunConfig& c) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(c.modules_dir)) throw ValidationError("modules directory not found: " + c.modules_dir.string());
    if (!fs::is_regular_file(c.rules_file)) throw ValidationError("rules file not found: " + c.rules_file.string());
    if (c.corpus && !fs::is_directory(*c.corpus)) throw ValidationError("corpus directory not found: " + c.corpus->string());
    if (c.provider.kind != "mock" && c.provider.kind != "http")
        throw ValidationError("provider kind must be mock or http, got " + c.provider.kind);
    if (c.provider.corruption_rate < 0 || c.provider.corruption_rate > 1)
        throw ValidationError("corruption_rate must lie in [0,1]");
    if (c.provider.kind == "http") {
        if (c.provider.http.endpoint.empty() || c.provider.http.model.empty())
            throw ValidationError("http provider needs endpoint and model");
        if (c.provider.http.api_key_env.empty()) throw ValidationError("http provider needs api_key_env");
    }
    if (c.max_attempts < 1) throw ValidationError("max_attempts must be >= 1");
    if (c.requests_per_minute < 0) throw ValidationError("requests_per_minute must be >= 0");
    validate_search_params(c.search, c.schedule.size());
    std::set<std::string> names;
    for (const auto& e : c.engines) {
        if (!names.insert(e.name).second) throw ValidationError("duplicate engine name " + e.name);
        if (e.kind != "signature" && e.kind != "signature-panel")
            throw ValidationError("engine " + e.name + ": unknown kind " + e.kind);
        if (!fs::is_regular_file(e.rules)) throw ValidationError("engine " + e.name + ": rules file not found: " + e.rules.string());
        if (e.weight < 1) throw ValidationError("engine " + e.name + ": weight must be >= 1");
        eval::validate_policy(e.policy);
    }
}

inline std::shared_ptr<Provider> make_provider(const ProviderConfig& p) {
    if (p.kind == "mock") {
        MockOptions mo;
        mo.corruption_rate = p.corruption_rate;
        return std::make_shared<MockProvider>(mo);
    }
    return std::make_shared<HttpProvider>(p.http);
}

inline GatewayOptions gateway_options(const RunConfig& c) {
    GatewayOptions g;
    g.retry.max_attempts = c.max_attempts;
    g.requests_per_minute = c.requests_per_minute;
    return g;
}

inline std::vector<eval::EngineSpec> make_engines(const RunConfig& c) {
    std::vector<eval::EngineSpec> out;
    for (const auto& e : c.engines) {
        auto rules = eval::load_signature_rules(e.rules);
        eval::EngineSpec spec;
        spec.name = e.name;
        spec.policy = e.policy;
        if (e.kind == "signature") {
            spec.detectors.push_back({std::make_shared<eval::SignatureDetector>(std::move(rules), e.name), e.weight});
        } else {
            spec.detectors = eval::signature_panel(rules);
            for (auto& d : spec.detectors) {
                auto it = e.weights.find(d.detector->id());
                if (it != e.weights.end()) d.weight = it->second;
            }
        }
        out.push_back(std::move(spec));
    }
    return out;
}

} // namespace rws
