#pragma once

#include <algorithm>
#include <numeric>
#include <regex>
#include <string>
#include <vector>

#include "rwsearch/composer.hpp"

namespace rws {

class VoteMisuse : public ValidationError {
public:
    using ValidationError::ValidationError;
};

struct Ballot {
    int chosen_index = 0;
    std::string rationale;
    Provenance provenance;
};

struct VoteResult {
    std::vector<int> tallies;          // per candidate, in candidate order
    std::vector<std::string> ranking;  // candidate ids, best first
    std::vector<std::string> winner_ids;
};

/// Small mode shows each candidate's full code; large mode shows only the
/// indexed descriptions. At most beam_width * p candidates can meet in a vote.
inline PromptBundle compose_vote_prompt(const std::vector<ThoughtCandidate>& candidates,
                                        const forest::StrategyModule& module, SizeClass size_class,
                                        const ComposerParams& params, std::int64_t seed) {
    validate_composer_params(params);
    if (candidates.size() < 2) throw VoteMisuse("a vote needs at least 2 candidates");
    const auto cap = static_cast<std::size_t>(params.beam_width) * static_cast<std::size_t>(params.p);
    if (candidates.size() > cap)
        throw VoteMisuse("vote over " + std::to_string(candidates.size()) + " candidates exceeds beam_width*p = " +
                         std::to_string(cap));
    for (const auto& c : candidates) {
        if (c.layer != candidates[0].layer) throw VoteMisuse("vote candidates come from different layers");
        if (c.module_id != candidates[0].module_id) throw VoteMisuse("vote candidates come from different modules");
    }
    if (candidates[0].module_id != module.id) throw VoteMisuse("vote module does not match the candidates' module");

    PromptBundle b;
    b.mode = PromptMode::Vote;
    b.size_class = size_class;
    b.system_text = system_prompt();
    b.seed = seed;
    b.temperature = params.temperature_vote;
    b.completions_requested = 1;
    b.max_output_tokens = params.vote_max_output_tokens;

    const int n = static_cast<int>(candidates.size());
    b.sections.push_back({SectionKind::Header, detail::header_section(module.id, PromptMode::Vote, n, seed,
                                                                      module.pre_knowledge.has_value())});
    if (module.pre_knowledge)
        b.sections.push_back({SectionKind::PreKnowledge, detail::pre_knowledge_section(*module.pre_knowledge)});
    b.sections.push_back({SectionKind::FeChain, detail::fe_chain_section(module)});

    std::string list = std::string(format::kTitleCandidates) + "\n";
    for (int i = 0; i < n; ++i) {
        const auto& c = candidates[static_cast<std::size_t>(i)];
        if (size_class == SizeClass::Small) {
            list += "[" + std::to_string(i) + "]\n" + format::fence(c.code);
        } else {
            std::string d = c.description.value_or("(no description provided)");
            std::replace(d.begin(), d.end(), '\n', ' ');
            list += "[" + std::to_string(i) + "] " + d + "\n";
        }
    }
    list += "\n";
    b.sections.push_back({SectionKind::InputCode, list});
    b.sections.push_back({SectionKind::KeyPrompts, detail::key_prompts_section(module, detail::vote_task())});
    b.sections.push_back({SectionKind::Safeguard, detail::safeguard_section(PromptMode::Vote)});
    b.input_tokens = detail::estimate_prompt(b.system_text, b.user_text());
    return b;
}

/// Whether a small-mode vote over these candidates fits max_token.
inline bool small_vote_fits(const std::vector<ThoughtCandidate>& candidates, const forest::StrategyModule& module,
                            const ComposerParams& params) {
    const auto b = compose_vote_prompt(candidates, module, SizeClass::Small, params, 0);
    return static_cast<std::int64_t>(b.input_tokens.count) + params.vote_max_output_tokens + params.safety_margin <=
           params.max_token;
}

/// One ballot per choice, in choice order.
inline std::vector<Ballot> parse_vote_reply(const ChatResponse& response, std::size_t candidate_count) {
    static const std::regex best(R"(^\s*BEST:\s*(-?\d+)(.*)$)");
    std::vector<Ballot> out;
    for (std::size_t i = 0; i < response.choices.size(); ++i) {
        bool found = false;
        for (const auto& line : format::split_lines(response.choices[i])) {
            std::smatch m;
            if (!std::regex_match(line, m, best)) continue;
            long long k = 0;
            try {
                k = std::stoll(m[1]);
            } catch (const std::out_of_range&) {
                k = -1;
            }
            if (k < 0 || k >= static_cast<long long>(candidate_count))
                throw ReplyFormatError("ballot index " + std::string(m[1]) + " out of range for " +
                                       std::to_string(candidate_count) + " candidates");
            Ballot b;
            b.chosen_index = static_cast<int>(k);
            b.rationale = format::trim(std::string(m[2]));
            auto rest = response.choices[i].find('\n');
            if (rest != std::string::npos) {
                auto tail = format::trim(response.choices[i].substr(rest + 1));
                if (!tail.empty()) b.rationale += (b.rationale.empty() ? "" : " ") + tail;
            }
            b.provenance = {response.provider_id, response.request_id, static_cast<int>(i)};
            out.push_back(std::move(b));
            found = true;
            break;
        }
        if (!found) throw ReplyFormatError("choice " + std::to_string(i) + " has no BEST: line");
    }
    return out;
}

/// Rank by (tally desc, index asc); winners are the first min(b, n).
inline VoteResult aggregate_votes(const std::vector<Ballot>& ballots, const std::vector<ThoughtCandidate>& candidates,
                                  int beam_width) {
    if (beam_width < 1) throw ValidationError("beam_width must be >= 1");
    VoteResult r;
    r.tallies.assign(candidates.size(), 0);
    for (const auto& b : ballots) {
        if (b.chosen_index < 0 || static_cast<std::size_t>(b.chosen_index) >= candidates.size())
            throw ValidationError("ballot index out of range");
        ++r.tallies[static_cast<std::size_t>(b.chosen_index)];
    }
    std::vector<std::size_t> order(candidates.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return r.tallies[a] > r.tallies[b]; });
    for (auto i : order) r.ranking.push_back(candidates[i].id);
    const auto w = std::min(static_cast<std::size_t>(beam_width), candidates.size());
    r.winner_ids.assign(r.ranking.begin(), r.ranking.begin() + static_cast<std::ptrdiff_t>(w));
    return r;
}

} // namespace rws
