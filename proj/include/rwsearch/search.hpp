#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "rwsearch/composer.hpp"
#include "rwsearch/event_log.hpp"
#include "rwsearch/forest.hpp"
#include "rwsearch/gateway.hpp"
#include "rwsearch/judge.hpp"
#include "rwsearch/minilang.hpp"
#include "rwsearch/transforms.hpp"
#include "rwsearch/util/digest.hpp"
#include "rwsearch/util/files.hpp"

namespace rws {

using ojson = nlohmann::ordered_json;

struct SearchParams {
    int p = 3;
    int beam_width = 1;
    int depth = 0; // 0 means "the schedule length"
    std::int64_t max_token = 4096;
    std::uint64_t seed = 0;
    std::int64_t safety_margin = 256;
    int ballots = 1;
    std::int64_t description_budget = 128;
    double temperature_generate = 0.8;
    double temperature_vote = 0.0;
    int vote_max_output_tokens = 64;

    ComposerParams composer() const {
        ComposerParams c;
        c.p = p;
        c.beam_width = beam_width;
        c.max_token = max_token;
        c.safety_margin = safety_margin;
        c.description_budget = description_budget;
        c.temperature_generate = temperature_generate;
        c.temperature_vote = temperature_vote;
        c.vote_max_output_tokens = vote_max_output_tokens;
        return c;
    }

    ojson to_json() const {
        return {{"p", p},
                {"beam_width", beam_width},
                {"depth", depth},
                {"max_token", max_token},
                {"seed", seed},
                {"safety_margin", safety_margin},
                {"ballots", ballots},
                {"description_budget", description_budget},
                {"temperature_generate", temperature_generate},
                {"temperature_vote", temperature_vote},
                {"vote_max_output_tokens", vote_max_output_tokens}};
    }

    /// Missing keys keep their defaults; unknown keys are rejected.
    static SearchParams from_json(const nlohmann::json& j) {
        static const std::set<std::string> known{"p",         "beam_width",         "depth",
                                                 "max_token", "seed",               "safety_margin",
                                                 "ballots",   "description_budget", "temperature_generate",
                                                 "temperature_vote", "vote_max_output_tokens"};
        if (!j.is_object()) throw ValidationError("search params must be a JSON object");
        for (const auto& [k, _] : j.items())
            if (!known.count(k)) throw ValidationError("unknown search parameter: " + k);
        SearchParams s;
        try {
            s.p = j.value("p", s.p);
            s.beam_width = j.value("beam_width", s.beam_width);
            s.depth = j.value("depth", s.depth);
            s.max_token = j.value("max_token", s.max_token);
            s.seed = j.value("seed", s.seed);
            s.safety_margin = j.value("safety_margin", s.safety_margin);
            s.ballots = j.value("ballots", s.ballots);
            s.description_budget = j.value("description_budget", s.description_budget);
            s.temperature_generate = j.value("temperature_generate", s.temperature_generate);
            s.temperature_vote = j.value("temperature_vote", s.temperature_vote);
            s.vote_max_output_tokens = j.value("vote_max_output_tokens", s.vote_max_output_tokens);
        } catch (const nlohmann::json::exception& e) {
            throw ValidationError(std::string("malformed search params: ") + e.what());
        }
        return s;
    }
};

inline void validate_search_params(const SearchParams& s, std::size_t schedule_length) {
    validate_composer_params(s.composer());
    if (s.beam_width > s.p) throw ValidationError("beam_width must not exceed p");
    if (s.ballots < 1 || s.ballots > 5) throw ValidationError("ballots must lie in [1,5]");
    if (schedule_length == 0) throw ValidationError("schedule is empty");
    if (s.depth != 0 && static_cast<std::size_t>(s.depth) != schedule_length)
        throw ValidationError("depth " + std::to_string(s.depth) + " differs from schedule length " +
                              std::to_string(schedule_length));
}

/// Seed of request `index` at `layer`; votes use index 1000 + ballot.
inline std::int64_t derive_seed(std::uint64_t base, int layer, int index) {
    return static_cast<std::int64_t>(
        transforms::mix(transforms::mix(base, static_cast<std::uint64_t>(layer)), static_cast<std::uint64_t>(index)) >> 1);
}

inline constexpr int kVoteSeedOffset = 1000;

struct CandidateRecord {
    ThoughtCandidate candidate;
    SizeClass size_class = SizeClass::Small;
    bool parses = false;
    std::optional<int> tally;
    bool selected = false;
};

inline ojson candidate_to_json(const CandidateRecord& r) {
    const auto& c = r.candidate;
    return {{"id", c.id},
            {"layer", c.layer},
            {"module_id", c.module_id},
            {"parent", c.parent},
            {"code", c.code},
            {"description", c.description ? ojson(*c.description) : ojson(nullptr)},
            {"provenance",
             {{"provider_id", c.provenance.provider_id},
              {"request_id", c.provenance.request_id},
              {"choice_index", c.provenance.choice_index}}},
            {"size_class", size_class_name(r.size_class)},
            {"parses", r.parses},
            {"tally", r.tally ? ojson(*r.tally) : ojson(nullptr)},
            {"selected", r.selected}};
}

inline CandidateRecord candidate_from_json(const nlohmann::json& j) {
    CandidateRecord r;
    auto& c = r.candidate;
    c.id = j.at("id").get<std::string>();
    c.layer = j.at("layer").get<int>();
    c.module_id = j.at("module_id").get<std::string>();
    c.parent = j.at("parent").get<std::string>();
    c.code = j.at("code").get<std::string>();
    if (!j.at("description").is_null()) c.description = j.at("description").get<std::string>();
    const auto& p = j.at("provenance");
    c.provenance = {p.at("provider_id").get<std::string>(), p.at("request_id").get<std::string>(),
                    p.at("choice_index").get<int>()};
    r.size_class = parse_size_class(j.at("size_class").get<std::string>());
    r.parses = j.at("parses").get<bool>();
    if (!j.at("tally").is_null()) r.tally = j.at("tally").get<int>();
    r.selected = j.at("selected").get<bool>();
    return r;
}

struct LayerStats {
    int layer = 0;
    std::string module;
    int frontier_in = 0;
    int generation_requests = 0;
    int vote_requests = 0;
    int candidates = 0;
    int parse_ok = 0;
    int reply_errors = 0;
    std::string vote_size_class = "none";
    std::vector<std::string> winners;

    ojson to_json() const {
        return {{"layer", layer},
                {"module", module},
                {"frontier_in", frontier_in},
                {"generation_requests", generation_requests},
                {"vote_requests", vote_requests},
                {"candidates", candidates},
                {"parse_ok", parse_ok},
                {"reply_errors", reply_errors},
                {"vote_size_class", vote_size_class},
                {"winners", winners}};
    }

    static LayerStats from_json(const nlohmann::json& j) {
        LayerStats s;
        s.layer = j.at("layer");
        s.module = j.at("module");
        s.frontier_in = j.at("frontier_in");
        s.generation_requests = j.at("generation_requests");
        s.vote_requests = j.at("vote_requests");
        s.candidates = j.at("candidates");
        s.parse_ok = j.at("parse_ok");
        s.reply_errors = j.at("reply_errors");
        s.vote_size_class = j.at("vote_size_class");
        s.winners = j.at("winners").get<std::vector<std::string>>();
        return s;
    }
};

enum class CampaignStatus { Running, Finished, Interrupted, Failed };

inline const char* campaign_status_name(CampaignStatus s) {
    switch (s) {
    case CampaignStatus::Running: return "running";
    case CampaignStatus::Finished: return "finished";
    case CampaignStatus::Interrupted: return "interrupted";
    case CampaignStatus::Failed: return "failed";
    }
    return "?";
}

inline CampaignStatus parse_campaign_status(const std::string& s) {
    if (s == "running") return CampaignStatus::Running;
    if (s == "finished") return CampaignStatus::Finished;
    if (s == "interrupted") return CampaignStatus::Interrupted;
    if (s == "failed") return CampaignStatus::Failed;
    throw IntegrityError("unknown campaign status: " + s);
}

/// All candidates of a layer failed to parse (or none were produced).
class LayerFailure : public Error {
public:
    LayerFailure(const std::string& msg, nlohmann::json diagnostics)
        : Error(msg), diagnostics_(std::move(diagnostics)) {}
    const nlohmann::json& diagnostics() const { return diagnostics_; }

private:
    nlohmann::json diagnostics_;
};

/// The provider failed for good; the campaign was checkpointed and can be resumed.
class CampaignInterrupted : public Error {
public:
    using Error::Error;
};

/// Search state between layers. Layer 0 frontier is exactly {x}.
struct SearchState {
    std::string campaign_id;
    std::string x;
    bool x_parses = false;
    std::vector<std::string> schedule;
    SearchParams params;
    std::vector<CandidateRecord> tree;
    std::vector<std::string> frontier{kInputId};
    int layers_completed = 0;
    std::vector<LayerStats> layers;
    CampaignStatus status = CampaignStatus::Running;
    nlohmann::json last_error = nullptr;

    const CandidateRecord* find(const std::string& id) const {
        for (const auto& r : tree)
            if (r.candidate.id == id) return &r;
        return nullptr;
    }

    std::vector<ThoughtCandidate> frontier_candidates() const {
        std::vector<ThoughtCandidate> out;
        for (const auto& id : frontier) {
            if (id == kInputId) {
                ThoughtCandidate c;
                c.id = kInputId;
                c.layer = 0;
                c.code = x;
                c.parent = "";
                out.push_back(std::move(c));
            } else if (auto* r = find(id)) {
                out.push_back(r->candidate);
            } else {
                throw IntegrityError("frontier references unknown candidate " + id);
            }
        }
        return out;
    }
};

struct SearchOutcome {
    std::string campaign_id;
    CampaignStatus status = CampaignStatus::Running;
    int layers_completed = 0;
    std::vector<ThoughtCandidate> winners;
    std::vector<CandidateRecord> tree;
    std::vector<LayerStats> layers;
    std::vector<std::string> notices;
};

inline std::string compute_campaign_id(const std::string& x, const std::vector<std::string>& schedule,
                                       const SearchParams& params) {
    ojson j{{"x", x}, {"schedule", schedule}, {"params", params.to_json()}};
    return util::sha256_hex(j.dump()).substr(0, 16);
}

/// Runs one layer (Alg. 2 loop body) and commits it to the state. Nothing
/// is committed when the provider fails mid-layer.
class LayerRunner {
public:
    LayerRunner(const forest::Registry& reg, Gateway& gw) : reg_(reg), gw_(gw) {}

    void run(SearchState& st, int n) {
        const auto& module = reg_.get(st.schedule.at(static_cast<std::size_t>(n - 1)));
        const auto cp = st.params.composer();
        const auto parents = st.frontier_candidates();
        auto& log = *gw_.log();

        LayerStats stats;
        stats.layer = n;
        stats.module = module.id;
        stats.frontier_in = static_cast<int>(parents.size());

        std::vector<CandidateRecord> fresh;
        bool any_large = false;
        nlohmann::json problems = nlohmann::json::array();
        for (std::size_t i = 0; i < parents.size(); ++i) {
            const auto& parent = parents[i];
            const auto seed = derive_seed(st.params.seed, n, static_cast<int>(i));
            auto decision = classify_size(parent.code, module, cp);
            SizeClass sc = decision.size_class;
            std::optional<PromptBundle> bundle;
            bool reclassified = false;
            try {
                try {
                    bundle = compose_generation_prompt(parent.code, module, sc, cp, seed);
                } catch (const BudgetError&) {
                    if (sc != SizeClass::Small) throw;
                    sc = SizeClass::Large;
                    reclassified = true;
                    bundle = compose_generation_prompt(parent.code, module, sc, cp, seed);
                }
            } catch (const BudgetError& e) {
                log.append({{"type", "budget_error"}, {"campaign", st.campaign_id}, {"layer", n},
                            {"parent", parent.id}, {"error", e.what()}});
                problems.push_back({{"parent", parent.id}, {"error", e.what()}});
                ++stats.reply_errors;
                continue;
            }
            log.append({{"type", "size_decision"}, {"campaign", st.campaign_id}, {"layer", n}, {"parent", parent.id},
                        {"decision", decision.to_json()}, {"reclassified_large", reclassified},
                        {"input_tokens", bundle->input_tokens.count}, {"method", bundle->input_tokens.method},
                        {"per_candidate_budget", bundle->per_candidate_budget}});
            any_large = any_large || sc == SizeClass::Large;

            auto req = bundle->request();
            req.request_id = st.campaign_id + "-L" + std::to_string(n) + "-g" + std::to_string(i);
            auto resp = gw_.complete(req, {{"campaign", st.campaign_id}, {"layer", n}, {"phase", "generate"},
                                           {"parent", parent.id}, {"size_class", size_class_name(sc)}});
            ++stats.generation_requests;
            try {
                auto cands = parse_generation_reply(resp, sc, st.params.p, n, module.id, parent.id,
                                                    "L" + std::to_string(n) + "." + std::to_string(i));
                for (auto& c : cands) {
                    CandidateRecord r;
                    r.parses = minilang::parses(c.code);
                    r.candidate = std::move(c);
                    r.size_class = sc;
                    fresh.push_back(std::move(r));
                }
            } catch (const ReplyFormatError& e) {
                log.append({{"type", "reply_error"}, {"campaign", st.campaign_id}, {"layer", n},
                            {"parent", parent.id}, {"request_id", resp.request_id}, {"error", e.what()}});
                problems.push_back({{"parent", parent.id}, {"error", e.what()}});
                ++stats.reply_errors;
            }
        }

        stats.candidates = static_cast<int>(fresh.size());
        for (const auto& r : fresh) stats.parse_ok += r.parses ? 1 : 0;
        if (fresh.empty() || (st.x_parses && stats.parse_ok == 0)) {
            nlohmann::json diag{{"layer", n}, {"module", module.id}, {"problems", problems},
                                {"candidates", nlohmann::json::array()}};
            for (const auto& r : fresh)
                diag["candidates"].push_back({{"id", r.candidate.id}, {"parses", r.parses}});
            throw LayerFailure(fresh.empty() ? "layer " + std::to_string(n) + " produced no candidates"
                                             : "all candidates unparseable at layer " + std::to_string(n),
                               diag);
        }

        std::vector<ThoughtCandidate> pool;
        for (const auto& r : fresh) pool.push_back(r.candidate);
        std::vector<std::string> winners;
        if (pool.size() >= 2) {
            const bool large = any_large || !small_vote_fits(pool, module, cp);
            const auto vsc = large ? SizeClass::Large : SizeClass::Small;
            stats.vote_size_class = size_class_name(vsc);
            std::vector<Ballot> ballots;
            for (int v = 0; v < st.params.ballots; ++v) {
                auto bundle = compose_vote_prompt(pool, module, vsc, cp, derive_seed(st.params.seed, n, kVoteSeedOffset + v));
                auto req = bundle.request();
                req.request_id = st.campaign_id + "-L" + std::to_string(n) + "-v" + std::to_string(v);
                auto resp = gw_.complete(req, {{"campaign", st.campaign_id}, {"layer", n}, {"phase", "vote"},
                                               {"ballot", v}, {"size_class", size_class_name(vsc)}});
                ++stats.vote_requests;
                try {
                    for (auto& b : parse_vote_reply(resp, pool.size())) ballots.push_back(std::move(b));
                } catch (const ReplyFormatError& e) {
                    log.append({{"type", "reply_error"}, {"campaign", st.campaign_id}, {"layer", n},
                                {"request_id", resp.request_id}, {"error", e.what()}});
                    ++stats.reply_errors;
                }
            }
            const auto result = aggregate_votes(ballots, pool, st.params.beam_width);
            for (std::size_t i = 0; i < fresh.size(); ++i) fresh[i].tally = result.tallies[i];
            winners = result.winner_ids;
            log.append({{"type", "vote_result"}, {"campaign", st.campaign_id}, {"layer", n},
                        {"ballots", ballots.size()}, {"tallies", result.tallies}, {"ranking", result.ranking},
                        {"winners", winners}});
        } else {
            winners.push_back(pool[0].id);
        }
        const std::set<std::string> chosen(winners.begin(), winners.end());
        for (auto& r : fresh) r.selected = chosen.count(r.candidate.id) > 0;

        stats.winners = winners;
        for (auto& r : fresh) st.tree.push_back(std::move(r));
        st.frontier = winners;
        st.layers_completed = n;
        st.layers.push_back(stats);
    }

private:
    const forest::Registry& reg_;
    Gateway& gw_;
};

inline SearchState initial_state(const std::string& x, const std::vector<std::string>& schedule,
                                 const SearchParams& params, const forest::Registry& reg,
                                 const forest::PrecedenceRuleSet& rules) {
    validate_search_params(params, schedule.size());
    const auto report = forest::validate_schedule(schedule, rules, reg);
    if (!report.ok()) {
        std::string msg = "schedule violates precedence rules:";
        for (const auto& v : report.violations)
            msg += " " + std::string(forest::violation_kind_name(v.kind)) + "(" + v.first + "," + v.second + ")";
        throw ValidationError(msg);
    }
    SearchState st;
    st.x = format::normalize_code(x);
    st.x_parses = minilang::parses(st.x);
    st.schedule = schedule;
    st.params = params;
    st.campaign_id = compute_campaign_id(st.x, schedule, params);
    return st;
}

inline SearchOutcome outcome_of(const SearchState& st) {
    SearchOutcome o;
    o.campaign_id = st.campaign_id;
    o.status = st.status;
    o.layers_completed = st.layers_completed;
    o.tree = st.tree;
    o.layers = st.layers;
    if (st.layers_completed > 0) o.winners = st.frontier_candidates();
    return o;
}

/// In-memory Hybrid Prompt-BFS over the schedule.
inline SearchOutcome run_search(const std::string& x, const std::vector<std::string>& schedule,
                                const SearchParams& params, const forest::Registry& reg,
                                const forest::PrecedenceRuleSet& rules, Gateway& gw) {
    auto st = initial_state(x, schedule, params, reg, rules);
    SearchOutcome o;
    if (!st.x_parses) o.notices.push_back("input does not parse; continuing");
    LayerRunner runner(reg, gw);
    for (int n = 1; n <= static_cast<int>(schedule.size()); ++n) runner.run(st, n);
    st.status = CampaignStatus::Finished;
    auto out = outcome_of(st);
    out.notices = o.notices;
    return out;
}

// ---- memory scope -------------------------------------------------------------

struct ScopeViolation {
    std::uint64_t seq = 0;
    int layer = 0;
    std::string phase;
    std::string reason;
};

/// Every ``` block in a layer-n request must be the code of a layer n-1 or
/// layer n candidate (x is layer 0).
inline std::vector<ScopeViolation> audit_memory_scope(const std::vector<nlohmann::json>& events,
                                                      const std::string& x,
                                                      const std::vector<CandidateRecord>& tree) {
    std::map<std::string, std::set<int>> layers_of;
    layers_of[format::normalize_code(x)].insert(0);
    for (const auto& r : tree) layers_of[format::normalize_code(r.candidate.code)].insert(r.candidate.layer);
    std::vector<ScopeViolation> out;
    for (const auto& e : events) {
        if (e.value("type", "") != "chat" || !e.contains("tags") || !e["tags"].contains("layer")) continue;
        const int n = e["tags"]["layer"].get<int>();
        const auto phase = e["tags"].value("phase", "");
        const auto seq = e.value("seq", 0ull);
        std::vector<format::FencedBlock> blocks;
        try {
            blocks = format::extract_fenced_blocks(e["request"]["user_text"].get<std::string>());
        } catch (const format::FormatError& err) {
            out.push_back({seq, n, phase, err.what()});
            continue;
        }
        for (const auto& b : blocks) {
            auto it = layers_of.find(b.content);
            if (it == layers_of.end()) {
                out.push_back({seq, n, phase, "embedded code matches no known candidate"});
                continue;
            }
            if (!it->second.count(n - 1) && !it->second.count(n))
                out.push_back({seq, n, phase,
                               "embedded code belongs to layer " + std::to_string(*it->second.begin()) +
                                   " only"});
        }
    }
    return out;
}

// ---- persisted campaigns -----------------------------------------------------

struct CampaignInput {
    std::string code;
    std::string extension = ".mini";
};

struct RunOptions {
    std::optional<int> stop_after_layer;
    GatewayOptions gateway;
};

namespace campaign_files {
inline constexpr const char* kCampaign = "campaign.json";
inline constexpr const char* kEvents = "events.jsonl";
inline constexpr const char* kTree = "tree.json";
inline constexpr const char* kWinners = "winners";
inline constexpr const char* kLock = ".lock";
} // namespace campaign_files

inline std::string modules_fingerprint(const std::vector<std::string>& schedule, const forest::Registry& reg) {
    std::string all;
    for (const auto& id : schedule) all += forest::module_to_json(reg.get(id)).dump() + "\n";
    return util::sha256_hex(all);
}

class CampaignStore {
public:
    explicit CampaignStore(std::filesystem::path dir) : dir_(std::move(dir)) {}

    const std::filesystem::path& dir() const { return dir_; }
    std::filesystem::path path(const char* name) const { return dir_ / name; }
    bool exists() const { return std::filesystem::exists(path(campaign_files::kCampaign)); }

    static ojson tree_json(const SearchState& st) {
        ojson j{{"campaign_id", st.campaign_id}, {"input_id", kInputId}, {"candidates", ojson::array()}};
        for (const auto& r : st.tree) j["candidates"].push_back(candidate_to_json(r));
        return j;
    }

    void checkpoint(const SearchState& st, const std::string& extension, const std::string& modules_sha) const {
        const auto tree = tree_json(st).dump(2) + "\n";
        util::write_file_atomic(path(campaign_files::kTree), tree);
        std::string events;
        if (std::filesystem::exists(path(campaign_files::kEvents))) events = util::read_file(path(campaign_files::kEvents));

        ojson layers = ojson::array();
        for (const auto& l : st.layers) layers.push_back(l.to_json());
        ojson j{{"format", 1},
                {"campaign_id", st.campaign_id},
                {"input", {{"code", st.x}, {"extension", extension}, {"md5", util::md5_hex(st.x)}, {"parses", st.x_parses}}},
                {"schedule", st.schedule},
                {"modules_sha256", modules_sha},
                {"params", st.params.to_json()},
                {"state",
                 {{"status", campaign_status_name(st.status)},
                  {"layers_completed", st.layers_completed},
                  {"frontier", st.frontier},
                  {"layers", layers},
                  {"last_error", ojson(st.last_error)}}},
                {"events", {{"bytes", events.size()}, {"sha256", util::sha256_hex(events)}}},
                {"tree_sha256", util::sha256_hex(tree)}};
        j["checksum"] = util::sha256_hex(j.dump(2));
        util::write_file_atomic(path(campaign_files::kCampaign), j.dump(2) + "\n");
    }

    struct Loaded {
        SearchState state;
        std::string extension;
        std::string modules_sha;
    };

    /// Verifies campaign.json's own checksum, the tree digest and the
    /// event-log prefix before returning the state.
    Loaded load() const {
        if (!exists()) throw IntegrityError("no checkpoint in " + dir_.string());
        ojson j;
        try {
            j = ojson::parse(util::read_file(path(campaign_files::kCampaign)));
        } catch (const nlohmann::json::exception& e) {
            throw IntegrityError(std::string("corrupt campaign.json: ") + e.what());
        }
        if (!j.is_object() || !j.contains("checksum")) throw IntegrityError("campaign.json lacks a checksum");
        const auto recorded = j["checksum"].get<std::string>();
        j.erase("checksum");
        if (util::sha256_hex(j.dump(2)) != recorded) throw IntegrityError("campaign.json checksum mismatch");

        if (!std::filesystem::exists(path(campaign_files::kTree))) throw IntegrityError("tree.json is missing");
        const auto tree = util::read_file(path(campaign_files::kTree));
        if (util::sha256_hex(tree) != j["tree_sha256"].get<std::string>()) throw IntegrityError("tree.json digest mismatch");

        const auto bytes = j["events"]["bytes"].get<std::size_t>();
        std::string events;
        if (std::filesystem::exists(path(campaign_files::kEvents))) events = util::read_file(path(campaign_files::kEvents));
        if (events.size() < bytes || util::sha256_hex(std::string_view(events).substr(0, bytes)) != j["events"]["sha256"])
            throw IntegrityError("events.jsonl does not match the checkpoint");

        Loaded out;
        try {
            auto& st = out.state;
            st.campaign_id = j["campaign_id"];
            st.x = j["input"]["code"];
            st.x_parses = j["input"]["parses"];
            out.extension = j["input"]["extension"];
            out.modules_sha = j["modules_sha256"];
            st.schedule = j["schedule"].get<std::vector<std::string>>();
            st.params = SearchParams::from_json(nlohmann::json::parse(j["params"].dump()));
            const auto& s = j["state"];
            st.status = parse_campaign_status(s["status"]);
            st.layers_completed = s["layers_completed"];
            st.frontier = s["frontier"].get<std::vector<std::string>>();
            for (const auto& l : s["layers"]) st.layers.push_back(LayerStats::from_json(nlohmann::json::parse(l.dump())));
            st.last_error = nlohmann::json::parse(s["last_error"].dump());
            const auto tj = nlohmann::json::parse(tree);
            for (const auto& c : tj.at("candidates")) st.tree.push_back(candidate_from_json(c));
        } catch (const nlohmann::json::exception& e) {
            throw IntegrityError(std::string("malformed checkpoint: ") + e.what());
        }
        return out;
    }

    void write_winners(const SearchState& st, const std::string& extension) const {
        const auto dir = path(campaign_files::kWinners);
        std::filesystem::create_directories(dir);
        for (const auto& w : st.frontier_candidates())
            util::write_file_atomic(dir / (util::md5_hex(w.code) + extension), w.code);
    }

private:
    std::filesystem::path dir_;
};

namespace detail {

inline SearchOutcome drive(const CampaignStore& store, SearchState& st, const std::string& ext,
                           const std::string& modules_sha, const forest::Registry& reg, Gateway& gw,
                           const RunOptions& opts) {
    LayerRunner runner(reg, gw);
    const int total = static_cast<int>(st.schedule.size());
    st.status = CampaignStatus::Running;
    st.last_error = nullptr;
    for (int n = st.layers_completed + 1; n <= total; ++n) {
        try {
            runner.run(st, n);
        } catch (const LayerFailure& e) {
            st.status = CampaignStatus::Failed;
            st.last_error = {{"layer", n}, {"error", e.what()}, {"diagnostics", e.diagnostics()}};
            store.checkpoint(st, ext, modules_sha);
            throw;
        } catch (const TransportError& e) {
            st.status = CampaignStatus::Interrupted;
            st.last_error = {{"layer", n}, {"error", e.what()}};
            store.checkpoint(st, ext, modules_sha);
            throw CampaignInterrupted("provider failure at layer " + std::to_string(n) + ": " + e.what() +
                                      " (checkpointed; resume to continue)");
        } catch (const ProviderError& e) {
            st.status = CampaignStatus::Interrupted;
            st.last_error = {{"layer", n}, {"error", e.what()}};
            store.checkpoint(st, ext, modules_sha);
            throw CampaignInterrupted("provider failure at layer " + std::to_string(n) + ": " + e.what() +
                                      " (checkpointed; resume to continue)");
        }
        gw.log()->append({{"type", "checkpoint"}, {"campaign", st.campaign_id}, {"layer", n}});
        store.checkpoint(st, ext, modules_sha);
        if (opts.stop_after_layer && n == *opts.stop_after_layer && n < total) {
            auto o = outcome_of(st);
            o.notices.push_back("stopped after layer " + std::to_string(n));
            return o;
        }
    }
    store.write_winners(st, ext);
    st.status = CampaignStatus::Finished;
    gw.log()->append({{"type", "campaign_finished"}, {"campaign", st.campaign_id}, {"winners", st.frontier}});
    store.checkpoint(st, ext, modules_sha);
    return outcome_of(st);
}

} // namespace detail

/// Creates a campaign directory and runs it; fails if one already exists.
inline SearchOutcome start_campaign(const std::filesystem::path& dir, const CampaignInput& input,
                                    const std::vector<std::string>& schedule, const SearchParams& params,
                                    const forest::Registry& reg, const forest::PrecedenceRuleSet& rules,
                                    std::shared_ptr<Provider> provider, RunOptions opts = {}) {
    CampaignStore store(dir);
    if (store.exists()) throw ValidationError("campaign already exists in " + dir.string() + "; use resume");
    auto st = initial_state(input.code, schedule, params, reg, rules);
    std::filesystem::create_directories(dir);
    util::LockFile lock(store.path(campaign_files::kLock));
    auto log = std::make_shared<EventLog>(store.path(campaign_files::kEvents));
    Gateway gw(std::move(provider), log, opts.gateway);
    const auto msha = modules_fingerprint(schedule, reg);
    log->append({{"type", "campaign_started"}, {"campaign", st.campaign_id}, {"schedule", schedule},
                 {"params", nlohmann::json::parse(params.to_json().dump())}, {"input_parses", st.x_parses}});
    if (!st.x_parses)
        log->append({{"type", "warning"}, {"campaign", st.campaign_id}, {"message", "input does not parse"}});
    store.checkpoint(st, input.extension, msha);
    auto o = detail::drive(store, st, input.extension, msha, reg, gw, opts);
    if (!st.x_parses) o.notices.push_back("input does not parse; continued anyway");
    return o;
}

/// Continues from the last completed layer. A finished campaign is left as is.
inline SearchOutcome resume_campaign(const std::filesystem::path& dir, const forest::Registry& reg,
                                     std::shared_ptr<Provider> provider, RunOptions opts = {}) {
    CampaignStore store(dir);
    auto loaded = store.load();
    auto& st = loaded.state;
    if (st.status == CampaignStatus::Finished) {
        auto o = outcome_of(st);
        o.notices.push_back("campaign " + st.campaign_id + " is already finished; nothing to do");
        return o;
    }
    if (st.status == CampaignStatus::Failed)
        throw ValidationError("campaign " + st.campaign_id + " failed: " + st.last_error.value("error", std::string()));
    for (const auto& id : st.schedule)
        if (!reg.contains(id)) throw IntegrityError("scheduled module " + id + " is not registered");
    if (modules_fingerprint(st.schedule, reg) != loaded.modules_sha)
        throw IntegrityError("module definitions changed since the campaign started");
    util::LockFile lock(store.path(campaign_files::kLock));
    auto log = std::make_shared<EventLog>(store.path(campaign_files::kEvents));
    Gateway gw(std::move(provider), log, opts.gateway);
    log->append({{"type", "campaign_resumed"}, {"campaign", st.campaign_id}, {"from_layer", st.layers_completed}});
    return detail::drive(store, st, loaded.extension, loaded.modules_sha, reg, gw, opts);
}

} // namespace rws
