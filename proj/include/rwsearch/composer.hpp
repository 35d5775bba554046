#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "rwsearch/error.hpp"
#include "rwsearch/forest.hpp"
#include "rwsearch/gateway.hpp"
#include "rwsearch/prompt_format.hpp"
#include "rwsearch/tokens.hpp"

namespace rws {

enum class SizeClass { Small, Large };
enum class PromptMode { Generate, Vote };
enum class SectionKind { Header, PreKnowledge, FeChain, InputCode, KeyPrompts, Safeguard };

inline const char* size_class_name(SizeClass s) { return s == SizeClass::Small ? "small" : "large"; }
inline const char* prompt_mode_name(PromptMode m) { return m == PromptMode::Generate ? "generate" : "vote"; }
inline const char* section_kind_name(SectionKind k) {
    switch (k) {
    case SectionKind::Header: return "header";
    case SectionKind::PreKnowledge: return "pre_knowledge";
    case SectionKind::FeChain: return "fe_chain";
    case SectionKind::InputCode: return "input_code";
    case SectionKind::KeyPrompts: return "key_prompts";
    case SectionKind::Safeguard: return "safeguard";
    }
    return "?";
}

inline SizeClass parse_size_class(const std::string& s) {
    if (s == "small") return SizeClass::Small;
    if (s == "large") return SizeClass::Large;
    throw ValidationError("unknown size class: " + s);
}

struct ComposerParams {
    int p = 3;
    int beam_width = 1;
    std::int64_t max_token = 4096;
    std::int64_t safety_margin = 256;
    std::int64_t description_budget = 128;
    double temperature_generate = 0.8;
    double temperature_vote = 0.0;
    int vote_max_output_tokens = 64;
};

inline void validate_composer_params(const ComposerParams& c) {
    if (c.p < 1) throw ValidationError("p must be >= 1");
    if (c.beam_width < 1) throw ValidationError("beam_width must be >= 1");
    if (c.max_token < 1) throw ValidationError("max_token must be >= 1");
    if (c.safety_margin < 0) throw ValidationError("safety_margin must be >= 0");
    if (c.description_budget < 1) throw ValidationError("description_budget must be >= 1");
    if (c.vote_max_output_tokens < 1) throw ValidationError("vote_max_output_tokens must be >= 1");
    for (double t : {c.temperature_generate, c.temperature_vote})
        if (!(t >= 0.0 && t <= 2.0)) throw ValidationError("temperatures must lie in [0,2]");
}

struct Provenance {
    std::string provider_id;
    std::string request_id;
    int choice_index = 0;
};

inline constexpr const char* kInputId = "x";

struct ThoughtCandidate {
    std::string id;
    int layer = 1;
    std::string module_id;
    std::string code;
    std::optional<std::string> description;
    std::string parent = kInputId;
    Provenance provenance;
};

struct Section {
    SectionKind kind;
    std::string text;
};

struct PromptBundle {
    std::vector<Section> sections;
    PromptMode mode = PromptMode::Generate;
    SizeClass size_class = SizeClass::Small;
    TokenEstimate input_tokens;
    std::int64_t per_candidate_budget = 0;

    std::string system_text;
    int completions_requested = 1;
    int max_output_tokens = 1;
    double temperature = 0.0;
    std::int64_t seed = 0;

    std::string user_text() const {
        std::string out;
        for (const auto& s : sections) out += s.text;
        return out;
    }

    ChatRequest request() const {
        ChatRequest r;
        r.system_text = system_text;
        r.user_text = user_text();
        r.completions_requested = completions_requested;
        r.max_output_tokens = max_output_tokens;
        r.temperature = temperature;
        r.seed = seed;
        return r;
    }
};

// ---- budgets ----------------------------------------------------------------

class BudgetError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

/// floor((max_token - input_prompt_tokens) / p)
inline std::int64_t budget_small(std::int64_t max_token, std::int64_t input_prompt_tokens, std::int64_t p) {
    if (p < 1) throw ValidationError("p must be >= 1");
    const std::int64_t room = max_token - input_prompt_tokens;
    const std::int64_t b = room > 0 ? room / p : 0;
    if (b <= 0)
        throw BudgetError("non-positive small-strategy budget: max_token " + std::to_string(max_token) +
                          ", input prompt " + std::to_string(input_prompt_tokens) + ", p " + std::to_string(p));
    return b;
}

/// max_token - input_prompt_tokens - description_budget
inline std::int64_t budget_large(std::int64_t max_token, std::int64_t input_prompt_tokens,
                                 std::int64_t description_budget) {
    const std::int64_t b = max_token - input_prompt_tokens - description_budget;
    if (b <= 0)
        throw BudgetError("non-positive large-strategy budget: max_token " + std::to_string(max_token) +
                          ", input prompt " + std::to_string(input_prompt_tokens) + ", description " +
                          std::to_string(description_budget));
    return b;
}

// ---- fixed prompt text --------------------------------------------------------

inline const std::string& system_prompt() {
    static const std::string s =
        "You rewrite small scripts in a PHP-like language. You change how a script looks, never what it does.\n";
    return s;
}

namespace detail {

inline std::string header_section(const std::string& module, PromptMode mode, int p, std::int64_t seed,
                                  bool pre_knowledge) {
    std::string h;
    h += format::render_header_line("module", module);
    h += format::render_header_line("mode", prompt_mode_name(mode));
    h += format::render_header_line("p", std::to_string(p));
    h += format::render_header_line("seed", std::to_string(seed));
    h += format::render_header_line("pre_knowledge", pre_knowledge ? "present" : "absent");
    h += "\n";
    return h;
}

inline std::string pre_knowledge_section(const std::string& text) {
    return std::string(format::kTitlePreKnowledge) + "\n" + format::normalize_code(text) + "\n";
}

inline std::string fe_chain_section(const forest::StrategyModule& m) {
    std::string s = std::string(format::kTitleExamples) + "\n";
    s += "Rewrite idea: " + m.title + ". The steps below apply it to progressively richer snippets.\n\n";
    for (std::size_t i = 0; i < m.fe_chain.size(); ++i) {
        const auto& n = m.fe_chain[i];
        const auto k = std::to_string(i + 1);
        s += "Example " + k + " original:\n" + format::fence(n.original, format::kExampleFence);
        s += "Example " + k + " transformed:\n" + format::fence(n.transformed, format::kExampleFence);
        s += "Example " + k + " description: " + n.description + "\n\n";
    }
    return s;
}

inline std::string input_code_section(const std::string& code) {
    return std::string(format::kTitleInputCode) + "\n" + format::fence(code) + "\n";
}

inline std::string key_prompts_section(const forest::StrategyModule& m, const std::string& task) {
    std::string s = std::string(format::kTitleKeyPrompts) + "\n";
    for (const auto& k : m.key_prompts) s += "- " + k + "\n";
    s += task;
    s += "\n";
    return s;
}

inline std::string safeguard_section(PromptMode mode) {
    std::string s = std::string(format::kTitleSafeguard) + "\n";
    if (mode == PromptMode::Generate) {
        s += "Every rewrite must print exactly the same output and make the same function calls, in the same order, "
             "as the input.\n";
        s += "Every rewrite must still parse. Do not add features, network access, file access or new calls.\n";
    } else {
        s += "Only pick a candidate that keeps the original behavior and still parses.\n";
    }
    return s;
}

inline std::string generation_task(SizeClass sc, const ComposerParams& params) {
    if (sc == SizeClass::Small)
        return "Return " + std::to_string(params.p) + " fenced variants in this single reply. Put each variant in " +
               "its own block fenced by three backticks, preceded by one line `DESC: <brief description>`. Keep all " +
               "variants together within the output limit of this request.\n";
    return "Return one rewritten variant in a block fenced by three backticks, preceded by one line `DESC: " +
           std::string("<description>`. The description must stay under ") +
           std::to_string(params.description_budget) +
           " tokens; spend the rest of the output limit on the code.\n";
}

inline std::string vote_task() {
    return "Judge the candidates on two things together: (a) how strongly each one obscures the original code and "
           "(b) how far it moved away from the worked examples' originals. Answer with a first line "
           "`BEST: <index>`, then one short sentence of rationale.\n";
}

inline TokenEstimate estimate_prompt(const std::string& system, const std::string& user) {
    auto e = estimate_tokens(system);
    e.count += estimate_tokens(user).count;
    return e;
}

} // namespace detail

// ---- size classification ---------------------------------------------------

struct SizeDecision {
    SizeClass size_class = SizeClass::Small;
    std::int64_t p = 0;
    std::int64_t code_tokens = 0;
    std::int64_t fe_chain_tokens = 0;
    std::int64_t overhead_tokens = 0;
    std::int64_t safety_margin = 0;
    std::int64_t max_token = 0;
    std::int64_t total = 0;
    std::string method = kTokenMethodBytesDiv4;

    nlohmann::json to_json() const {
        return {{"size_class", size_class_name(size_class)}, {"p", p},
                {"code_tokens", code_tokens},                {"fe_chain_tokens", fe_chain_tokens},
                {"overhead_tokens", overhead_tokens},        {"safety_margin", safety_margin},
                {"max_token", max_token},                    {"total", total},
                {"method", method}};
    }
};

/// Large iff p*code + fe_chain + overhead + margin > max_token.
inline SizeDecision classify_size_tokens(std::int64_t code_tokens, std::int64_t fe_chain_tokens,
                                         std::int64_t overhead_tokens, std::int64_t p, std::int64_t safety_margin,
                                         std::int64_t max_token) {
    SizeDecision d;
    d.p = p;
    d.code_tokens = code_tokens;
    d.fe_chain_tokens = fe_chain_tokens;
    d.overhead_tokens = overhead_tokens;
    d.safety_margin = safety_margin;
    d.max_token = max_token;
    d.total = p * code_tokens + fe_chain_tokens + overhead_tokens + safety_margin;
    d.size_class = d.total > max_token ? SizeClass::Large : SizeClass::Small;
    return d;
}

/// Overhead counts everything in a generation prompt except the code itself
/// and the examples.
inline SizeDecision classify_size(const std::string& code, const forest::StrategyModule& module,
                                  const ComposerParams& params) {
    const auto fe = static_cast<std::int64_t>(token_count(detail::fe_chain_section(module)));
    std::string fixed = system_prompt();
    fixed += detail::header_section(module.id, PromptMode::Generate, params.p, 0, module.pre_knowledge.has_value());
    if (module.pre_knowledge) fixed += detail::pre_knowledge_section(*module.pre_knowledge);
    fixed += detail::input_code_section("");
    fixed += detail::key_prompts_section(module, detail::generation_task(SizeClass::Small, params));
    fixed += detail::safeguard_section(PromptMode::Generate);
    return classify_size_tokens(static_cast<std::int64_t>(token_count(code)), fe,
                                static_cast<std::int64_t>(token_count(fixed)), params.p, params.safety_margin,
                                params.max_token);
}

// ---- generation ---------------------------------------------------------------

inline PromptBundle compose_generation_prompt(const std::string& parent_code, const forest::StrategyModule& module,
                                              SizeClass size_class, const ComposerParams& params, std::int64_t seed) {
    validate_composer_params(params);
    PromptBundle b;
    b.mode = PromptMode::Generate;
    b.size_class = size_class;
    b.system_text = system_prompt();
    b.seed = seed;
    b.temperature = params.temperature_generate;
    b.sections.push_back({SectionKind::Header, detail::header_section(module.id, PromptMode::Generate, params.p, seed,
                                                                      module.pre_knowledge.has_value())});
    if (module.pre_knowledge)
        b.sections.push_back({SectionKind::PreKnowledge, detail::pre_knowledge_section(*module.pre_knowledge)});
    b.sections.push_back({SectionKind::FeChain, detail::fe_chain_section(module)});
    b.sections.push_back({SectionKind::InputCode, detail::input_code_section(parent_code)});
    b.sections.push_back(
        {SectionKind::KeyPrompts, detail::key_prompts_section(module, detail::generation_task(size_class, params))});
    b.sections.push_back({SectionKind::Safeguard, detail::safeguard_section(PromptMode::Generate)});

    b.input_tokens = detail::estimate_prompt(b.system_text, b.user_text());
    const auto in = static_cast<std::int64_t>(b.input_tokens.count);
    if (size_class == SizeClass::Small) {
        b.per_candidate_budget = budget_small(params.max_token, in, params.p);
        b.completions_requested = 1;
        b.max_output_tokens = static_cast<int>(b.per_candidate_budget * params.p);
    } else {
        b.per_candidate_budget = budget_large(params.max_token, in, params.description_budget);
        b.completions_requested = params.p;
        b.max_output_tokens = static_cast<int>(b.per_candidate_budget + params.description_budget);
    }
    return b;
}

class ReplyFormatError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class WrongFenceCount : public ReplyFormatError {
public:
    WrongFenceCount(std::size_t found, std::size_t expected)
        : ReplyFormatError("wrong fence count: found " + std::to_string(found) + ", expected " +
                           std::to_string(expected)),
          found_(found), expected_(expected) {}
    std::size_t found() const { return found_; }
    std::size_t expected() const { return expected_; }

private:
    std::size_t found_;
    std::size_t expected_;
};

inline bool blank(const std::string& s) { return s.find_first_not_of(" \t\r\n") == std::string::npos; }

/// Candidate ids are `<id_prefix>.<k>`, k counting from 0 in reply order.
inline std::vector<ThoughtCandidate> parse_generation_reply(const ChatResponse& response, SizeClass size_class, int p,
                                                            int layer, const std::string& module_id,
                                                            const std::string& parent_id,
                                                            const std::string& id_prefix) {
    std::vector<ThoughtCandidate> out;
    auto make = [&](const format::FencedBlock& blk, int choice) {
        if (blank(blk.content)) throw ReplyFormatError("empty code block in choice " + std::to_string(choice));
        ThoughtCandidate c;
        c.id = id_prefix + "." + std::to_string(out.size());
        c.layer = layer;
        c.module_id = module_id;
        c.code = blk.content;
        if (blk.description && !blk.description->empty()) c.description = blk.description;
        c.parent = parent_id;
        c.provenance = {response.provider_id, response.request_id, choice};
        out.push_back(std::move(c));
    };
    auto blocks_of = [](const std::string& text) {
        try {
            return format::extract_fenced_blocks(text);
        } catch (const format::FormatError& e) {
            throw ReplyFormatError(e.what());
        }
    };

    if (size_class == SizeClass::Small) {
        if (response.choices.size() != 1)
            throw ReplyFormatError("small-strategy reply must have 1 choice, got " +
                                   std::to_string(response.choices.size()));
        const auto blocks = blocks_of(response.choices[0]);
        if (blocks.size() != static_cast<std::size_t>(p)) throw WrongFenceCount(blocks.size(), static_cast<std::size_t>(p));
        for (const auto& blk : blocks) make(blk, 0);
    } else {
        if (response.choices.size() != static_cast<std::size_t>(p))
            throw ReplyFormatError("large-strategy reply must have " + std::to_string(p) + " choices, got " +
                                   std::to_string(response.choices.size()));
        for (std::size_t i = 0; i < response.choices.size(); ++i) {
            const auto blocks = blocks_of(response.choices[i]);
            if (blocks.size() != 1) throw WrongFenceCount(blocks.size(), 1);
            if (!blocks[0].description || blocks[0].description->empty())
                throw ReplyFormatError("large-strategy choice " + std::to_string(i) + " lacks a DESC line");
            make(blocks[0], static_cast<int>(i));
        }
    }
    return out;
}

} // namespace rws
