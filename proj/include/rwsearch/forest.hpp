#pragma once

#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <queue>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "rwsearch/error.hpp"
#include "rwsearch/util/files.hpp"

namespace rws::forest {

/// One few-shot example: an untransformed snippet, the same snippet with the
/// module's idea applied, and a short explanation.
struct FeNode {
    std::string original;
    std::string transformed;
    std::string description;
};

struct StrategyModule {
    std::string id;
    std::string title;
    std::optional<std::string> parent;
    std::optional<std::string> pre_knowledge;
    std::vector<FeNode> fe_chain;
    bool destroys_readability = false;
    std::vector<std::string> key_prompts;
};

using IdPair = std::pair<std::string, std::string>;

struct PrecedenceRuleSet {
    std::set<IdPair> must_precede;      // (a,b): a must come before b when both are scheduled
    std::set<IdPair> forbidden_before;  // (a,b): a must not come before b
};

/// Module store forming a forest through parent links. Loading is a
/// single-owner phase; afterwards the registry is only read and may be
/// shared freely.
class Registry {
public:
    /// Registers a module. The parent, if any, must already be registered.
    const std::string& register_module(StrategyModule def) {
        if (def.id.empty()) throw ValidationError("module id must be non-empty");
        if (modules_.count(def.id)) throw ValidationError("duplicate module id: " + def.id);
        if (def.parent && !modules_.count(*def.parent))
            throw ValidationError("module " + def.id + " has dangling parent: " + *def.parent);
        if (def.fe_chain.empty()) throw ValidationError("module " + def.id + " has an empty fe_chain");
        for (std::size_t i = 0; i < def.fe_chain.size(); ++i) {
            const FeNode& n = def.fe_chain[i];
            const std::string where = "module " + def.id + " fe_chain[" + std::to_string(i) + "]";
            if (n.original.empty() || n.transformed.empty() || n.description.empty())
                throw ValidationError(where + " has an empty field");
            if (n.original == n.transformed) throw ValidationError(where + ": original equals transformed");
        }
        order_.push_back(def.id);
        auto [it, _] = modules_.emplace(def.id, std::move(def));
        return it->first;
    }

    bool contains(const std::string& id) const { return modules_.count(id) != 0; }

    const StrategyModule& get(const std::string& id) const {
        auto it = modules_.find(id);
        if (it == modules_.end()) throw NotFoundError("unknown module id: " + id);
        return it->second;
    }

    const std::vector<FeNode>& fe_chain(const std::string& id) const { return get(id).fe_chain; }

    /// 1 for a root, parent depth + 1 otherwise.
    int depth(const std::string& id) const {
        int d = 0;
        const StrategyModule* m = &get(id);
        while (true) {
            ++d;
            if (!m->parent) return d;
            if (d > static_cast<int>(modules_.size())) throw IntegrityError("parent cycle at " + id);
            m = &get(*m->parent);
        }
    }

    std::vector<std::string> children(const std::string& id) const {
        std::vector<std::string> out;
        for (const auto& mid : order_)
            if (modules_.at(mid).parent == id) out.push_back(mid);
        return out;
    }

    std::vector<std::string> roots() const {
        std::vector<std::string> out;
        for (const auto& mid : order_)
            if (!modules_.at(mid).parent) out.push_back(mid);
        return out;
    }

    /// Ids in registration order.
    const std::vector<std::string>& ids() const { return order_; }
    std::size_t size() const { return modules_.size(); }

private:
    std::map<std::string, StrategyModule> modules_;
    std::vector<std::string> order_;
};

// ---- definition files -------------------------------------------------------

inline StrategyModule module_from_json(const nlohmann::json& j) {
    static const std::set<std::string> kFields = {"id", "title", "parent", "pre_knowledge",
                                                  "destroys_readability", "key_prompts", "fe_chain"};
    if (!j.is_object()) throw ValidationError("module definition must be a JSON object");
    for (const auto& [k, _] : j.items())
        if (!kFields.count(k)) throw ValidationError("unexpected module field: " + k);
    for (const auto& k : kFields)
        if (!j.contains(k)) throw ValidationError("missing module field: " + k);
    try {
        StrategyModule m;
        m.id = j.at("id").get<std::string>();
        m.title = j.at("title").get<std::string>();
        if (!j.at("parent").is_null()) m.parent = j.at("parent").get<std::string>();
        if (!j.at("pre_knowledge").is_null()) m.pre_knowledge = j.at("pre_knowledge").get<std::string>();
        m.destroys_readability = j.at("destroys_readability").get<bool>();
        m.key_prompts = j.at("key_prompts").get<std::vector<std::string>>();
        for (const auto& n : j.at("fe_chain")) {
            m.fe_chain.push_back(FeNode{n.at("original").get<std::string>(), n.at("transformed").get<std::string>(),
                                        n.at("description").get<std::string>()});
        }
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("malformed module definition: ") + e.what());
    }
}

inline nlohmann::ordered_json module_to_json(const StrategyModule& m) {
    nlohmann::ordered_json j;
    j["id"] = m.id;
    j["title"] = m.title;
    j["parent"] = m.parent ? nlohmann::ordered_json(*m.parent) : nlohmann::ordered_json(nullptr);
    j["pre_knowledge"] = m.pre_knowledge ? nlohmann::ordered_json(*m.pre_knowledge) : nlohmann::ordered_json(nullptr);
    j["destroys_readability"] = m.destroys_readability;
    j["key_prompts"] = m.key_prompts;
    j["fe_chain"] = nlohmann::ordered_json::array();
    for (const auto& n : m.fe_chain)
        j["fe_chain"].push_back({{"original", n.original}, {"transformed", n.transformed}, {"description", n.description}});
    return j;
}

/// Loads every `*.json` in a directory (one module per file). Files are
/// registered parents-first so on-disk naming does not matter.
inline Registry load_modules(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw IoError("modules directory not found: " + dir.string());
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
    std::sort(files.begin(), files.end());

    std::vector<StrategyModule> pending;
    for (const auto& f : files) {
        try {
            pending.push_back(module_from_json(nlohmann::json::parse(util::read_file(f))));
        } catch (const nlohmann::json::exception& e) {
            throw ValidationError(f.string() + ": " + e.what());
        } catch (const ValidationError& e) {
            throw ValidationError(f.string() + ": " + e.what());
        }
    }

    Registry reg;
    while (!pending.empty()) {
        auto ready = std::stable_partition(pending.begin(), pending.end(), [&](const StrategyModule& m) {
            return !m.parent || reg.contains(*m.parent);
        });
        if (ready == pending.begin()) {
            // Nothing registrable: the first leftover names the problem.
            reg.register_module(std::move(pending.front()));
        }
        std::vector<StrategyModule> now(std::make_move_iterator(pending.begin()), std::make_move_iterator(ready));
        pending.erase(pending.begin(), ready);
        for (auto& m : now) reg.register_module(std::move(m));
    }
    return reg;
}

inline PrecedenceRuleSet rules_from_json(const nlohmann::json& j) {
    PrecedenceRuleSet rules;
    auto read_pairs = [&](const char* key, std::set<IdPair>& out) {
        if (!j.contains(key)) return;
        for (const auto& p : j.at(key)) {
            if (!p.is_array() || p.size() != 2) throw ValidationError(std::string(key) + " entries must be [a,b] pairs");
            out.emplace(p[0].get<std::string>(), p[1].get<std::string>());
        }
    };
    try {
        if (!j.is_object()) throw ValidationError("rules file must be a JSON object");
        read_pairs("must_precede", rules.must_precede);
        read_pairs("forbidden_before", rules.forbidden_before);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("malformed rules file: ") + e.what());
    }
    return rules;
}

inline PrecedenceRuleSet load_rules(const std::filesystem::path& file) {
    try {
        return rules_from_json(nlohmann::json::parse(util::read_file(file)));
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(file.string() + ": " + e.what());
    }
}

/// Rules must reference registered ids and never put a pair in both relations.
inline void validate_rules(const PrecedenceRuleSet& rules, const Registry& reg) {
    for (const auto* rel : {&rules.must_precede, &rules.forbidden_before}) {
        for (const auto& [a, b] : *rel) {
            if (!reg.contains(a)) throw ValidationError("rule references unknown module: " + a);
            if (!reg.contains(b)) throw ValidationError("rule references unknown module: " + b);
        }
    }
    for (const auto& p : rules.must_precede)
        if (rules.forbidden_before.count(p))
            throw ValidationError("pair (" + p.first + "," + p.second + ") is both required and forbidden");
}

// ---- schedules --------------------------------------------------------------

enum class ViolationKind { MustPrecede, ForbiddenBefore, Readability };

inline const char* violation_kind_name(ViolationKind k) {
    switch (k) {
    case ViolationKind::MustPrecede: return "must_precede";
    case ViolationKind::ForbiddenBefore: return "forbidden_before";
    case ViolationKind::Readability: return "readability";
    }
    return "?";
}

struct Violation {
    ViolationKind kind;
    std::string first;   // module at first_pos
    std::string second;  // module at second_pos
    std::size_t first_pos;
    std::size_t second_pos;

    bool operator==(const Violation&) const = default;
};

struct ScheduleReport {
    std::vector<Violation> violations;
    bool ok() const { return violations.empty(); }
};

/// Scans every ordered position pair (i < j). Besides the explicit rules, any
/// module placed after a readability-destroying one is a violation unless a
/// must_precede rule explicitly sanctions that pair.
inline ScheduleReport validate_schedule(const std::vector<std::string>& schedule, const PrecedenceRuleSet& rules,
                                        const Registry& reg) {
    for (const auto& id : schedule)
        if (!reg.contains(id)) throw NotFoundError("unknown module id in schedule: " + id);
    ScheduleReport report;
    for (std::size_t i = 0; i < schedule.size(); ++i) {
        for (std::size_t j = i + 1; j < schedule.size(); ++j) {
            const auto& early = schedule[i];
            const auto& late = schedule[j];
            if (rules.must_precede.count({late, early}))
                report.violations.push_back({ViolationKind::MustPrecede, early, late, i, j});
            if (rules.forbidden_before.count({early, late}))
                report.violations.push_back({ViolationKind::ForbiddenBefore, early, late, i, j});
            if (reg.get(early).destroys_readability && !rules.must_precede.count({early, late}))
                report.violations.push_back({ViolationKind::Readability, early, late, i, j});
        }
    }
    return report;
}

class UnsatisfiableRules : public ValidationError {
public:
    UnsatisfiableRules(const std::string& msg, std::vector<std::string> cycle)
        : ValidationError(msg), cycle_(std::move(cycle)) {}
    const std::vector<std::string>& cycle() const { return cycle_; }

private:
    std::vector<std::string> cycle_;
};

namespace detail {

// Constraint edges among the selected ids: a -> b means a must precede b.
inline std::map<std::string, std::set<std::string>> ordering_edges(const std::set<std::string>& selected,
                                                                    const PrecedenceRuleSet& rules,
                                                                    const Registry& reg) {
    std::map<std::string, std::set<std::string>> out;
    for (const auto& id : selected) out[id];
    auto both = [&](const std::string& a, const std::string& b) { return selected.count(a) && selected.count(b); };
    for (const auto& [a, b] : rules.must_precede)
        if (both(a, b)) out[a].insert(b);
    for (const auto& [a, b] : rules.forbidden_before)
        if (both(a, b)) out[b].insert(a);
    // A readability-destroying module goes after everything it is not
    // explicitly required to precede.
    for (const auto& d : selected) {
        if (!reg.get(d).destroys_readability) continue;
        for (const auto& other : selected)
            if (other != d && !rules.must_precede.count({d, other})) out[other].insert(d);
    }
    return out;
}

inline std::vector<std::string> find_cycle(const std::map<std::string, std::set<std::string>>& edges) {
    std::map<std::string, int> color;
    std::vector<std::string> stack;
    std::vector<std::string> cycle;
    std::function<bool(const std::string&)> dfs = [&](const std::string& u) {
        color[u] = 1;
        stack.push_back(u);
        for (const auto& v : edges.at(u)) {
            if (color[v] == 1) {
                auto it = std::find(stack.begin(), stack.end(), v);
                cycle.assign(it, stack.end());
                cycle.push_back(v);
                return true;
            }
            if (color[v] == 0 && dfs(v)) return true;
        }
        stack.pop_back();
        color[u] = 2;
        return false;
    };
    for (const auto& [u, _] : edges)
        if (color[u] == 0 && dfs(u)) return cycle;
    return {};
}

} // namespace detail

/// Topological order of the selected modules honouring every rule; ties are
/// broken by lexicographic id. The seed is recorded for reproducibility but
/// does not influence the order, which is fully determined by the rules and
/// the tie-break.
inline std::vector<std::string> plan_schedule(const std::set<std::string>& selected, const PrecedenceRuleSet& rules,
                                              const Registry& reg, std::uint64_t seed = 0) {
    (void)seed;
    if (selected.empty()) throw ValidationError("no modules selected");
    for (const auto& id : selected)
        if (!reg.contains(id)) throw NotFoundError("unknown module id: " + id);
    auto edges = detail::ordering_edges(selected, rules, reg);
    std::map<std::string, int> indegree;
    for (const auto& [u, _] : edges) indegree[u];
    for (const auto& [u, vs] : edges)
        for (const auto& v : vs) ++indegree[v];
    std::priority_queue<std::string, std::vector<std::string>, std::greater<>> ready;
    for (const auto& [u, d] : indegree)
        if (d == 0) ready.push(u);
    std::vector<std::string> order;
    while (!ready.empty()) {
        std::string u = ready.top();
        ready.pop();
        order.push_back(u);
        for (const auto& v : edges[u])
            if (--indegree[v] == 0) ready.push(v);
    }
    if (order.size() != selected.size()) {
        auto cycle = detail::find_cycle(edges);
        std::string msg = "unsatisfiable ordering rules; cycle:";
        for (const auto& id : cycle) msg += " " + id;
        throw UnsatisfiableRules(msg, std::move(cycle));
    }
    return order;
}

} // namespace rws::forest
