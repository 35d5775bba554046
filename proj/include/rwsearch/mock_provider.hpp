#pragma once

// Offline provider. It reads the #HP header of the prompt and
//   generate: runs the named reference transform over the fenced input code,
//   vote:     picks the entry farthest (by edit distance) from the examples' originals.

#include <atomic>
#include <cstdint>
#include <optional>
#include <regex>
#include <string>
#include <vector>

#include "rwsearch/gateway.hpp"
#include "rwsearch/minilang/lexer.hpp"
#include "rwsearch/prompt_format.hpp"
#include "rwsearch/transforms.hpp"
#include "rwsearch/util/levenshtein.hpp"

namespace rws {

struct MockOptions {
    double corruption_rate = 0.0;                  // share of variants emitted with a syntax error
    std::optional<std::uint64_t> outage_after;     // calls beyond this many raise TransportError
};

struct MockVariant {
    std::string code;
    std::string description;
};

/// Variants the mock emits for one generation prompt: variant j is
/// apply_transform(module, code, seed, j), made unique with a marker comment
/// when it collides with an earlier one.
inline std::vector<MockVariant> mock_variants(const std::string& module, const std::string& code, std::uint64_t seed,
                                              int count, double corruption_rate = 0.0) {
    std::vector<MockVariant> out;
    for (int j = 0; j < count; ++j) {
        MockVariant v;
        try {
            auto r = transforms::apply_transform(module, code, seed, j);
            v.code = format::normalize_code(r.code);
            v.description = module + " variant " + std::to_string(j + 1) + ": " + r.summary;
        } catch (const minilang::SyntaxError&) {
            v.code = format::normalize_code(code);
            v.description = module + " variant " + std::to_string(j + 1) + ": input did not lex, left unchanged";
        }
        for (const auto& prev : out)
            if (prev.code == v.code) {
                v.code += "// variant " + std::to_string(j + 1) + "\n";
                break;
            }
        if (corruption_rate > 0) {
            const double u = static_cast<double>(transforms::mix(seed, 0xc0ffeeULL + j) % 1000000) / 1e6;
            if (u < corruption_rate) v.code += "echo (;\n";
        }
        out.push_back(std::move(v));
    }
    return out;
}

/// Score of one ballot entry: distance to the closest example original.
inline std::size_t mock_vote_score(const std::string& entry, const std::vector<std::string>& originals) {
    if (originals.empty()) return entry.size();
    std::size_t best = static_cast<std::size_t>(-1);
    for (const auto& o : originals) best = std::min(best, levenshtein(entry, o));
    return best;
}

/// Highest score wins; ties go to the lowest index.
inline std::size_t mock_vote_pick(const std::vector<std::string>& entries, const std::vector<std::string>& originals) {
    std::size_t best = 0, best_score = 0;
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const auto s = mock_vote_score(entries[i], originals);
        if (i == 0 || s > best_score) {
            best = i;
            best_score = s;
        }
    }
    return best;
}

class MockProvider : public Provider {
public:
    explicit MockProvider(MockOptions opts = {}) : opts_(opts) {}

    std::string id() const override { return "mock"; }

    ProviderReply send(const ChatRequest& r) override {
        const auto n = ++calls_;
        if (opts_.outage_after && n > *opts_.outage_after) throw TransportError("mock provider outage");

        const auto header = format::parse_header(r.user_text);
        const auto& mode = format::header_str(header, "mode");
        const auto& module = format::header_str(header, "module");
        const auto p = static_cast<int>(format::header_uint(header, "p"));
        const auto seed = format::header_uint(header, "seed");
        const auto sections = format::split_sections(r.user_text);

        ProviderReply reply;
        if (mode == "generate") {
            auto it = sections.find(std::string(format::kTitleInputCode));
            if (it == sections.end()) throw format::FormatError("generation prompt lacks an input code section");
            const auto blocks = format::extract_fenced_blocks(it->second);
            if (blocks.size() != 1) throw format::FormatError("generation prompt must embed exactly one code block");
            const int per_choice = r.completions_requested == 1 ? p : 1;
            const auto variants = mock_variants(module, blocks[0].content, seed,
                                                r.completions_requested == 1 ? p : r.completions_requested,
                                                opts_.corruption_rate);
            for (int c = 0; c < r.completions_requested; ++c) {
                std::string text;
                for (int k = 0; k < per_choice; ++k) {
                    const auto& v = variants[static_cast<std::size_t>(c * per_choice + k)];
                    text += std::string(format::kDescPrefix) + " " + v.description + "\n" + format::fence(v.code);
                }
                reply.choices.push_back(std::move(text));
            }
        } else if (mode == "vote") {
            auto entries = ballot_entries(sections);
            if (entries.empty()) throw format::FormatError("vote prompt lists no candidates");
            const auto pick = mock_vote_pick(entries, example_originals(sections));
            for (int c = 0; c < r.completions_requested; ++c)
                reply.choices.push_back(std::string(format::kBestPrefix) + " " + std::to_string(pick) +
                                        "\nfarthest from the worked examples\n");
        } else {
            throw format::FormatError("unknown #HP mode: " + mode);
        }
        return reply;
    }

    std::uint64_t calls() const { return calls_; }

    /// Originals of the few-shot examples, as embedded in a prompt.
    static std::vector<std::string> example_originals(const std::map<std::string, std::string>& sections) {
        std::vector<std::string> out;
        auto it = sections.find(std::string(format::kTitleExamples));
        if (it == sections.end()) return out;
        for (auto& b : format::extract_fenced_blocks(it->second, format::kExampleFence))
            if (b.label.find("original") != std::string::npos) out.push_back(b.content);
        return out;
    }

    /// Code blocks of the candidates section, or its `[i] text` lines when it has none.
    static std::vector<std::string> ballot_entries(const std::map<std::string, std::string>& sections) {
        std::vector<std::string> out;
        auto it = sections.find(std::string(format::kTitleCandidates));
        if (it == sections.end()) return out;
        for (auto& b : format::extract_fenced_blocks(it->second)) out.push_back(b.content);
        if (!out.empty()) return out;
        static const std::regex line(R"(^\[(\d+)\] (.*)$)");
        for (const auto& l : format::split_lines(it->second)) {
            std::smatch m;
            if (std::regex_match(l, m, line)) out.push_back(m[2]);
        }
        return out;
    }

private:
    MockOptions opts_;
    std::atomic<std::uint64_t> calls_{0};
};

} // namespace rws
