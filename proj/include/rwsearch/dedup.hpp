#pragma once

#include <algorithm>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "rwsearch/minilang.hpp"
#include "rwsearch/util/digest.hpp"
#include "rwsearch/util/files.hpp"

namespace rws::dedup {

inline std::string content_hash(std::string_view bytes) { return util::md5_hex(bytes); }

/// Throws minilang::SyntaxError when the source does not parse.
inline std::string ast_hash(std::string_view source) {
    return util::sha256_hex(minilang::canonical_json(minilang::parse(source)));
}

/// Slot-normalized instruction listing, literals included.
inline std::string opcode_hash(std::string_view source) {
    return util::sha256_hex(minilang::compile(minilang::parse(source)).text());
}

enum class Stage { Content = 1, Ast = 2, Opcode = 3 };

inline const char* stage_name(Stage s) {
    switch (s) {
    case Stage::Content: return "content_md5";
    case Stage::Ast: return "ast_sha256";
    case Stage::Opcode: return "opcode_sha256";
    }
    return "?";
}

struct Entry {
    std::string id;     // path relative to the corpus root, '/' separated
    std::string bytes;
};

struct StageReport {
    Stage stage = Stage::Content;
    std::size_t input_count = 0;
    std::size_t removed_count = 0;
    std::vector<std::string> survivors;
    std::vector<std::string> removed;
    std::map<std::string, std::vector<std::string>> classes; // representative -> members (representative first)

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json cls = nlohmann::ordered_json::object();
        for (const auto& [rep, members] : classes)
            if (members.size() > 1) cls[rep] = members;
        return {{"stage", static_cast<int>(stage)}, {"key", stage_name(stage)}, {"input_count", input_count},
                {"removed_count", removed_count}, {"survivors", survivors}, {"removed", removed},
                {"classes", cls}};
    }
};

struct Warning {
    std::string id;
    std::string message;
};

struct ManifestEntry {
    std::string source;
    std::string output;
    std::string md5;
};

struct DedupReport {
    std::size_t input_count = 0;
    std::vector<StageReport> stages;
    std::vector<Warning> warnings;
    std::vector<Warning> errors;
    std::string output_dir;
    std::vector<ManifestEntry> manifest;

    const std::vector<std::string>& survivors() const { return stages.back().survivors; }

    std::size_t removed_total() const {
        std::size_t n = 0;
        for (const auto& s : stages) n += s.removed_count;
        return n;
    }

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json st = nlohmann::ordered_json::array();
        for (const auto& s : stages) st.push_back(s.to_json());
        auto list = [](const std::vector<Warning>& ws) {
            nlohmann::ordered_json a = nlohmann::ordered_json::array();
            for (const auto& w : ws) a.push_back({{"id", w.id}, {"message", w.message}});
            return a;
        };
        nlohmann::ordered_json man = nlohmann::ordered_json::array();
        for (const auto& m : manifest) man.push_back({{"source", m.source}, {"output", m.output}, {"md5", m.md5}});
        return {{"input_count", input_count},
                {"survivor_count", stages.empty() ? 0 : survivors().size()},
                {"stages", st},
                {"warnings", list(warnings)},
                {"errors", list(errors)},
                {"output_dir", output_dir},
                {"manifest", man}};
    }
};

namespace detail {

inline std::string stage_key(Stage s, const Entry& e, std::vector<Warning>& warnings) {
    if (s == Stage::Content) return content_hash(e.bytes);
    try {
        return s == Stage::Ast ? ast_hash(e.bytes) : opcode_hash(e.bytes);
    } catch (const minilang::SyntaxError& err) {
        warnings.push_back({e.id, std::string(stage_name(s)) + ": does not parse, kept: " + err.what()});
        return "unparseable:" + e.id;
    }
}

} // namespace detail

/// Runs the three exact-key filters in order over in-memory entries. The
/// smallest id of each class survives; input order does not matter.
inline DedupReport dedup_entries(std::vector<Entry> entries) {
    std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) { return a.id < b.id; });
    for (std::size_t i = 1; i < entries.size(); ++i)
        if (entries[i].id == entries[i - 1].id) throw ValidationError("duplicate entry id " + entries[i].id);
    DedupReport r;
    r.input_count = entries.size();
    std::vector<const Entry*> alive;
    for (const auto& e : entries) alive.push_back(&e);

    for (Stage s : {Stage::Content, Stage::Ast, Stage::Opcode}) {
        StageReport sr;
        sr.stage = s;
        sr.input_count = alive.size();
        std::map<std::string, std::vector<const Entry*>> by_key;
        for (const auto* e : alive) by_key[detail::stage_key(s, *e, r.warnings)].push_back(e);
        std::vector<const Entry*> next;
        for (const auto& [key, members] : by_key) {
            auto& names = sr.classes[members.front()->id];
            for (const auto* m : members) names.push_back(m->id);
            next.push_back(members.front());
            for (std::size_t i = 1; i < members.size(); ++i) sr.removed.push_back(members[i]->id);
        }
        std::sort(next.begin(), next.end(), [](const Entry* a, const Entry* b) { return a->id < b->id; });
        std::sort(sr.removed.begin(), sr.removed.end());
        for (const auto* e : next) sr.survivors.push_back(e->id);
        sr.removed_count = sr.removed.size();
        alive = std::move(next);
        r.stages.push_back(std::move(sr));
    }
    // Opcode warnings repeat the AST ones for the same file.
    std::vector<Warning> uniq;
    for (const auto& w : r.warnings)
        if (std::none_of(uniq.begin(), uniq.end(), [&](const Warning& u) { return u.id == w.id; })) uniq.push_back(w);
    r.warnings = std::move(uniq);
    return r;
}

inline std::vector<Entry> read_corpus(const std::filesystem::path& dir, std::vector<Warning>& errors) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw IoError("corpus directory not readable: " + dir.string());
    std::vector<Entry> out;
    for (auto it = fs::recursive_directory_iterator(dir, fs::directory_options::skip_permission_denied);
         it != fs::recursive_directory_iterator(); ++it) {
        if (!it->is_regular_file()) continue;
        const auto rel = fs::relative(it->path(), dir).generic_string();
        try {
            out.push_back({rel, util::read_file(it->path())});
        } catch (const IoError& e) {
            errors.push_back({rel, e.what()});
        }
    }
    return out;
}

/// Dedups `corpus` into `output`, naming survivors `<md5><ext>`.
inline DedupReport dedup(const std::filesystem::path& corpus, const std::filesystem::path& output,
                         const std::optional<std::filesystem::path>& report_path = std::nullopt) {
    namespace fs = std::filesystem;
    std::vector<Warning> errors;
    auto entries = read_corpus(corpus, errors);
    const auto canon_in = fs::weakly_canonical(corpus), canon_out = fs::weakly_canonical(output);
    const auto rel = canon_out.lexically_relative(canon_in);
    if (canon_in == canon_out || (!rel.empty() && *rel.begin() != ".."))
        throw ValidationError("output directory must lie outside the corpus directory");

    std::map<std::string, const Entry*> by_id;
    for (const auto& e : entries) by_id[e.id] = &e;
    auto r = dedup_entries(entries);
    r.errors = std::move(errors);
    r.output_dir = output.string();
    fs::create_directories(output);
    for (const auto& id : r.survivors()) {
        const auto& e = *by_id.at(id);
        const auto md5 = content_hash(e.bytes);
        const auto name = md5 + fs::path(id).extension().string();
        try {
            util::write_file_atomic(output / name, e.bytes);
            r.manifest.push_back({id, name, md5});
        } catch (const IoError& err) {
            r.errors.push_back({id, err.what()});
        }
    }
    if (report_path) util::write_file_atomic(*report_path, r.to_json().dump(2) + "\n");
    return r;
}

} // namespace rws::dedup
