#pragma once

// Benign reference rewrites, one per bundled strategy module. The mock
// provider answers generation prompts with these, so they double as oracles.
//
// Each transform finds its K candidate sites, shuffles them with the seed and
// rewrites the first min(K, variant + 1). Variants are therefore nested, and a
// site is always rewritten the same way for a given seed.

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "rwsearch/error.hpp"
#include "rwsearch/minilang/lexer.hpp"

namespace rws::transforms {

inline std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
    std::uint64_t z = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Fisher-Yates driven by splitmix steps, stable across platforms.
inline std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    std::uint64_t state = mix(seed, 0x5157eULL);
    for (std::size_t i = n; i > 1; --i) {
        state = mix(state, i);
        std::swap(perm[i - 1], perm[state % i]);
    }
    return perm;
}

/// Sites rewritten by `variant`, ascending.
inline std::vector<std::size_t> chosen_sites(std::size_t site_count, std::uint64_t seed, int variant) {
    auto perm = seeded_permutation(site_count, seed);
    const auto take = std::min<std::size_t>(site_count, static_cast<std::size_t>(std::max(variant, 0)) + 1);
    std::vector<std::size_t> out(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(take));
    std::sort(out.begin(), out.end());
    return out;
}

struct TransformResult {
    std::string code;
    std::string summary;
    std::size_t sites_total = 0;
    std::size_t sites_changed = 0;
};

using TransformFn = std::function<TransformResult(std::string_view code, std::uint64_t seed, int variant)>;

namespace detail {

using minilang::Token;
using minilang::TokenKind;

inline bool word_char(char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_';
}

// Token stream with per-token replacement text and insertions before tokens.
// Rendering inserts a space wherever an edit would fuse two words.
class TokenEdit {
public:
    explicit TokenEdit(std::string_view code) : toks_(minilang::tokenize(code)) {
        text_.reserve(toks_.size());
        for (const auto& t : toks_) text_.push_back(t.text);
        before_.resize(toks_.size());
        edited_.resize(toks_.size(), false);
    }

    const std::vector<Token>& tokens() const { return toks_; }
    void replace(std::size_t i, std::string s) {
        text_[i] = std::move(s);
        edited_[i] = true;
    }
    void insert_before(std::size_t i, std::string s) { before_[i] += s; }

    std::size_t next_significant(std::size_t i) const {
        for (std::size_t j = i + 1; j < toks_.size(); ++j)
            if (!toks_[j].trivia()) return j;
        return toks_.size() - 1;
    }

    std::string render() const {
        std::string out;
        bool last_edited = false;
        auto put = [&](const std::string& s, bool edited) {
            if (s.empty()) return;
            if ((edited || last_edited) && !out.empty() && word_char(out.back()) && word_char(s.front())) out += ' ';
            out += s;
            last_edited = edited;
        };
        for (std::size_t i = 0; i < toks_.size(); ++i) {
            put(before_[i], true);
            put(text_[i], edited_[i]);
        }
        return out;
    }

private:
    std::vector<Token> toks_;
    std::vector<std::string> text_;
    std::vector<std::string> before_;
    std::vector<bool> edited_;
};

inline std::string plural(std::size_t n, const char* noun) {
    std::string w(noun);
    if (n != 1) w = w.back() == 'y' ? w.substr(0, w.size() - 1) + "ies" : w + "s";
    return std::to_string(n) + " " + w;
}

inline const char* pick(const std::vector<const char*>& words, std::uint64_t r) { return words[r % words.size()]; }

// Byte offsets in [1, len) that do not split a UTF-8 sequence.
inline std::vector<std::size_t> cut_points(const std::string& s) {
    std::vector<std::size_t> out;
    for (std::size_t i = 1; i < s.size(); ++i)
        if ((static_cast<unsigned char>(s[i]) & 0xC0) != 0x80) out.push_back(i);
    return out;
}

template <class SitePred, class Rewrite>
TransformResult rewrite_tokens(std::string_view code, std::uint64_t seed, int variant, SitePred is_site,
                               Rewrite rewrite, const char* what) {
    TokenEdit ed(code);
    std::vector<std::size_t> sites;
    for (std::size_t i = 0; i < ed.tokens().size(); ++i)
        if (is_site(ed, i)) sites.push_back(i);
    std::size_t changed = 0;
    for (auto s : chosen_sites(sites.size(), seed, variant))
        if (rewrite(ed, sites[s], mix(seed, s + 1))) ++changed;
    return {ed.render(), "rewrote " + plural(changed, what) + " of " + std::to_string(sites.size()), sites.size(),
            changed};
}

inline TransformResult comment_insert(std::string_view code, std::uint64_t seed, int variant) {
    // Line starts that are not inside a string or block comment.
    std::vector<bool> interior(code.size() + 1, false);
    for (const auto& t : minilang::tokenize(code))
        if (t.kind == TokenKind::String || t.kind == TokenKind::Comment)
            for (std::size_t k = t.span.offset + 1; k < t.span.offset + t.span.length; ++k) interior[k] = true;
    std::vector<std::size_t> starts;
    for (std::size_t p = 0; p <= code.size(); ++p)
        if ((p == 0 || code[p - 1] == '\n') && !interior[p]) starts.push_back(p);

    static const std::vector<const char*> phrases{"checked", "keep as is", "see notes", "formatting", "reviewed",
                                                  "legacy"};
    const auto perm = seeded_permutation(starts.size(), seed);
    const auto j = static_cast<std::size_t>(std::max(variant, 0));
    const auto pos = starts[perm[j % starts.size()]];
    std::string line = "// " + std::string(pick(phrases, mix(seed, j))) + " " + std::to_string(j + 1) + "\n";
    std::string out(code.substr(0, pos));
    out += line;
    out += code.substr(pos);
    return {out, "inserted a comment line at line-start offset " + std::to_string(pos), starts.size(), 1};
}

inline TransformResult block_comment(std::string_view code, std::uint64_t seed, int variant) {
    static const std::vector<const char*> words{"x", "tmp", "n/a", "sic", "ok"};
    return rewrite_tokens(
        code, seed, variant,
        [](const TokenEdit& ed, std::size_t i) { return i > 0 && ed.tokens()[i].kind != TokenKind::End; },
        [](TokenEdit& ed, std::size_t i, std::uint64_t r) {
            ed.insert_before(i, std::string(" /* ") + pick(words, r) + " */ ");
            return true;
        },
        "token gap");
}

inline TransformResult rename_vars(std::string_view code, std::uint64_t seed, int variant) {
    TokenEdit ed(code);
    std::vector<std::string> names;
    std::set<std::string> taken;
    for (const auto& t : ed.tokens())
        if (t.kind == TokenKind::Var && taken.insert(t.value).second) names.push_back(t.value);
    std::map<std::string, std::string> fresh;
    for (auto s : chosen_sites(names.size(), seed, variant)) {
        std::uint64_t r = mix(seed, s + 1);
        std::string name;
        do {
            char buf[16];
            std::snprintf(buf, sizeof buf, "v_%06llx", static_cast<unsigned long long>(r & 0xffffff));
            name = buf;
            r = mix(r, 1);
        } while (taken.count(name));
        taken.insert(name);
        fresh[names[s]] = name;
    }
    for (std::size_t i = 0; i < ed.tokens().size(); ++i) {
        const auto& t = ed.tokens()[i];
        if (t.kind == TokenKind::Var)
            if (auto it = fresh.find(t.value); it != fresh.end()) ed.replace(i, "$" + it->second);
    }
    return {ed.render(), "renamed " + plural(fresh.size(), "variable") + " of " + std::to_string(names.size()),
            names.size(), fresh.size()};
}

inline TransformResult string_split(std::string_view code, std::uint64_t seed, int variant) {
    return rewrite_tokens(
        code, seed, variant,
        [](const TokenEdit& ed, std::size_t i) {
            const auto& t = ed.tokens()[i];
            return t.kind == TokenKind::String && !cut_points(t.value).empty();
        },
        [](TokenEdit& ed, std::size_t i, std::uint64_t r) {
            const auto& v = ed.tokens()[i].value;
            const auto cuts = cut_points(v);
            const auto c = cuts[r % cuts.size()];
            ed.replace(i, "(" + minilang::quote_string(v.substr(0, c)) + " . " + minilang::quote_string(v.substr(c)) + ")");
            return true;
        },
        "string literal");
}

inline TransformResult string_split_deep(std::string_view code, std::uint64_t seed, int variant) {
    return rewrite_tokens(
        code, seed, variant,
        [](const TokenEdit& ed, std::size_t i) {
            const auto& t = ed.tokens()[i];
            return t.kind == TokenKind::String && cut_points(t.value).size() >= 2;
        },
        [](TokenEdit& ed, std::size_t i, std::uint64_t r) {
            const auto& v = ed.tokens()[i].value;
            const auto cuts = cut_points(v);
            auto a = r % cuts.size();
            auto b = mix(r, 2) % (cuts.size() - 1);
            if (b >= a) ++b;
            const auto c1 = cuts[std::min(a, b)];
            const auto c2 = cuts[std::max(a, b)];
            ed.replace(i, "(" + minilang::quote_string(v.substr(0, c1)) + " . " +
                              minilang::quote_string(v.substr(c1, c2 - c1)) + " . " +
                              minilang::quote_string(v.substr(c2)) + ")");
            return true;
        },
        "string literal");
}

inline bool small_number(const std::string& digits, std::uint64_t& out) {
    if (digits.size() > 18) return false;
    out = std::stoull(digits);
    return true;
}

inline TransformResult number_split(std::string_view code, std::uint64_t seed, int variant) {
    return rewrite_tokens(
        code, seed, variant,
        [](const TokenEdit& ed, std::size_t i) {
            const auto& t = ed.tokens()[i];
            std::uint64_t n = 0;
            return t.kind == TokenKind::Number && small_number(t.value, n) && n >= 2;
        },
        [](TokenEdit& ed, std::size_t i, std::uint64_t r) {
            std::uint64_t n = 0;
            small_number(ed.tokens()[i].value, n);
            const auto a = 1 + r % (n - 1);
            ed.replace(i, "(" + std::to_string(a) + " + " + std::to_string(n - a) + ")");
            return true;
        },
        "number literal");
}

inline TransformResult symbol_noise(std::string_view code, std::uint64_t seed, int variant) {
    return rewrite_tokens(
        code, seed, variant,
        [](const TokenEdit& ed, std::size_t i) {
            const auto& t = ed.tokens()[i];
            if (t.kind == TokenKind::String || t.kind == TokenKind::Number) return true;
            return t.kind == TokenKind::Var && ed.tokens()[ed.next_significant(i)].kind != TokenKind::Assign;
        },
        [](TokenEdit& ed, std::size_t i, std::uint64_t) {
            ed.replace(i, "(" + ed.tokens()[i].text + ")");
            return true;
        },
        "operand");
}

inline TransformResult dead_branch(std::string_view code, std::uint64_t seed, int variant) {
    static const std::vector<const char*> words{"idle", "noop", "pad", "unused", "spare"};
    auto snippet = [](std::uint64_t r) {
        return std::string("if (") + std::to_string(r % 7) + " == " + std::to_string(r % 7 + 1) + ") { echo \"" +
               pick(words, r >> 8) + "\"; }";
    };
    return rewrite_tokens(
        code, seed, variant,
        [](const TokenEdit& ed, std::size_t i) {
            // Statement boundaries: the program start and every token after a ';'.
            return i == 0 || ed.tokens()[i - 1].kind == TokenKind::Semicolon;
        },
        [&](TokenEdit& ed, std::size_t i, std::uint64_t r) {
            ed.insert_before(i, i == 0 ? snippet(r) + "\n" : " " + snippet(r));
            return true;
        },
        "statement boundary");
}

inline TransformResult echo_split(std::string_view code, std::uint64_t seed, int variant) {
    TokenEdit ed(code);
    std::vector<std::vector<std::size_t>> sites;
    const auto& toks = ed.tokens();
    for (std::size_t i = 0; i < toks.size(); ++i) {
        if (toks[i].kind != TokenKind::KwEcho) continue;
        int depth = 0;
        bool only_concat = true;
        std::vector<std::size_t> ops;
        std::size_t j = i + 1;
        for (; j < toks.size(); ++j) {
            const auto k = toks[j].kind;
            if (k == TokenKind::LParen) ++depth;
            else if (k == TokenKind::RParen) --depth;
            else if (depth == 0 && k == TokenKind::Semicolon) break;
            else if (depth == 0 && k == TokenKind::BinOp) {
                if (toks[j].text == ".") ops.push_back(j);
                else only_concat = false;
            }
        }
        if (j < toks.size() && only_concat && !ops.empty()) sites.push_back(ops);
    }
    std::size_t changed = 0;
    for (auto s : chosen_sites(sites.size(), seed, variant)) {
        for (auto op : sites[s]) ed.replace(op, ",");
        ++changed;
    }
    return {ed.render(), "split " + plural(changed, "echo concatenation") + " of " + std::to_string(sites.size()),
            sites.size(), changed};
}

inline TransformResult xor_like_encode(std::string_view code, std::uint64_t seed, int variant) {
    return rewrite_tokens(
        code, seed, variant,
        [](const TokenEdit& ed, std::size_t i) {
            const auto& t = ed.tokens()[i];
            return t.kind == TokenKind::String && !t.value.empty();
        },
        [](TokenEdit& ed, std::size_t i, std::uint64_t) {
            std::string v = ed.tokens()[i].value;
            std::reverse(v.begin(), v.end());
            ed.replace(i, "rev(" + minilang::quote_string(v) + ")");
            return true;
        },
        "string literal");
}

} // namespace detail

inline const std::map<std::string, TransformFn>& reference_transforms() {
    static const std::map<std::string, TransformFn> table{
        {"comment-insert", detail::comment_insert}, {"block-comment", detail::block_comment},
        {"rename-vars", detail::rename_vars},       {"string-split", detail::string_split},
        {"string-split-deep", detail::string_split_deep}, {"number-split", detail::number_split},
        {"symbol-noise", detail::symbol_noise},     {"dead-branch", detail::dead_branch},
        {"echo-split", detail::echo_split},         {"xor-like-encode", detail::xor_like_encode},
    };
    return table;
}

inline bool has_transform(const std::string& module_id) { return reference_transforms().count(module_id) > 0; }

/// Throws NotFoundError for unknown ids and minilang::SyntaxError when the
/// code does not lex.
inline TransformResult apply_transform(const std::string& module_id, std::string_view code, std::uint64_t seed,
                                       int variant) {
    auto it = reference_transforms().find(module_id);
    if (it == reference_transforms().end()) throw NotFoundError("no reference transform for module " + module_id);
    return it->second(code, seed, variant);
}

} // namespace rws::transforms
