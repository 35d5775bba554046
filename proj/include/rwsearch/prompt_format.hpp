#pragma once

// Wire grammar shared by prompt assembly, reply parsing and the mock provider.
//
// Prompt user_text:
//   #HP module=<id>
//   #HP mode=generate|vote
//   #HP p=<n>
//   #HP seed=<n>
//   #HP pre_knowledge=present|absent
//   <blank line>
//   ## <Section title>        (one heading per section, in contract order)
//   ...
//
// Code travels in triple-backtick fences: an opening line that starts with
// ``` and a closing line that is exactly ```. Few-shot examples use ~~~
// fences so they are never confused with candidate code.
//
// Generation reply: for each candidate an optional `DESC: <text>` line, then
// one fenced block. Vote reply: the first line matching `BEST: <integer>`.

#include <cstdint>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "rwsearch/error.hpp"

namespace rws::format {

inline constexpr std::string_view kHeaderPrefix = "#HP ";
inline constexpr std::string_view kFence = "```";
inline constexpr std::string_view kExampleFence = "~~~";
inline constexpr std::string_view kDescPrefix = "DESC:";
inline constexpr std::string_view kBestPrefix = "BEST:";

inline constexpr std::string_view kTitlePreKnowledge = "## Pre-knowledge";
inline constexpr std::string_view kTitleExamples = "## Examples";
inline constexpr std::string_view kTitleInputCode = "## Input code";
inline constexpr std::string_view kTitleCandidates = "## Candidates";
inline constexpr std::string_view kTitleKeyPrompts = "## Key prompts";
inline constexpr std::string_view kTitleSafeguard = "## Safeguard";

class FormatError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

/// Split into lines without their terminators. A trailing newline does not
/// produce an extra empty line.
inline std::vector<std::string> split_lines(std::string_view text) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start < text.size()) {
        auto nl = text.find('\n', start);
        if (nl == std::string_view::npos) nl = text.size();
        std::string line(text.substr(start, nl - start));
        if (!line.empty() && line.back() == '\r') line.pop_back();
        out.push_back(std::move(line));
        start = nl + 1;
    }
    return out;
}

inline std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r')) ++b;
    while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
    return std::string(s.substr(b, e - b));
}

inline bool starts_with(std::string_view s, std::string_view prefix) { return s.substr(0, prefix.size()) == prefix; }

/// Code with exactly one guaranteed trailing newline.
inline std::string normalize_code(std::string_view code) {
    std::string out(code);
    if (out.empty() || out.back() != '\n') out.push_back('\n');
    return out;
}

inline std::string fence(std::string_view code, std::string_view marker = kFence) {
    std::string out(marker);
    out += "\n";
    out += normalize_code(code);
    out += marker;
    out += "\n";
    return out;
}

struct FencedBlock {
    std::string content;                    // newline-terminated ("" for an empty block)
    std::optional<std::string> description; // from a DESC: line preceding the fence
    std::string label;                      // the line right before the opening fence
    std::size_t open_line = 0;
};

/// Extract triple-backtick blocks in order. Throws FormatError on an
/// unterminated fence.
inline std::vector<FencedBlock> extract_fenced_blocks(std::string_view text, std::string_view marker = kFence) {
    std::vector<FencedBlock> out;
    const auto lines = split_lines(text);
    std::optional<std::string> pending_desc;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const auto& line = lines[i];
        if (starts_with(line, marker)) {
            FencedBlock block;
            block.open_line = i;
            if (i > 0) block.label = trim(lines[i - 1]);
            block.description = std::move(pending_desc);
            pending_desc.reset();
            std::size_t j = i + 1;
            bool closed = false;
            for (; j < lines.size(); ++j) {
                if (trim(lines[j]) == marker) {
                    closed = true;
                    break;
                }
                block.content += lines[j];
                block.content += "\n";
            }
            if (!closed) throw FormatError("unterminated fence opened at line " + std::to_string(i + 1));
            out.push_back(std::move(block));
            i = j;
        } else if (starts_with(trim(line), kDescPrefix)) {
            pending_desc = trim(trim(line).substr(kDescPrefix.size()));
        }
    }
    return out;
}

inline std::size_t count_fenced_blocks(std::string_view text) {
    try {
        return extract_fenced_blocks(text).size();
    } catch (const FormatError&) {
        return 0;
    }
}

// ---- header -----------------------------------------------------------------

using Header = std::map<std::string, std::string>;

inline std::string render_header_line(std::string_view key, std::string_view value) {
    return std::string(kHeaderPrefix) + std::string(key) + "=" + std::string(value) + "\n";
}

/// Reads the leading `#HP key=value` block. Throws FormatError if absent.
inline Header parse_header(std::string_view user_text) {
    Header h;
    for (const auto& line : split_lines(user_text)) {
        if (!starts_with(line, kHeaderPrefix)) break;
        const auto body = line.substr(kHeaderPrefix.size());
        const auto eq = body.find('=');
        if (eq == std::string::npos || eq == 0) throw FormatError("unparseable header line: " + line);
        h[body.substr(0, eq)] = body.substr(eq + 1);
    }
    if (h.empty()) throw FormatError("prompt carries no #HP header");
    return h;
}

inline std::uint64_t header_uint(const Header& h, const std::string& key) {
    auto it = h.find(key);
    if (it == h.end()) throw FormatError("header lacks " + key);
    try {
        std::size_t pos = 0;
        const auto v = std::stoull(it->second, &pos);
        if (pos != it->second.size()) throw FormatError("header " + key + " is not an integer");
        return v;
    } catch (const std::logic_error&) {
        throw FormatError("header " + key + " is not an integer: " + it->second);
    }
}

inline const std::string& header_str(const Header& h, const std::string& key) {
    auto it = h.find(key);
    if (it == h.end()) throw FormatError("header lacks " + key);
    return it->second;
}

// ---- sections ---------------------------------------------------------------

/// Body text of every `## ` section, keyed by heading line. Headings inside
/// fences do not count.
inline std::map<std::string, std::string> split_sections(std::string_view user_text) {
    std::map<std::string, std::string> out;
    std::string current;
    std::string_view open_marker;
    for (const auto& line : split_lines(user_text)) {
        if (open_marker.empty()) {
            if (starts_with(line, "## ")) {
                current = line;
                out[current];
                continue;
            }
            if (starts_with(line, kFence)) open_marker = kFence;
            else if (starts_with(line, kExampleFence)) open_marker = kExampleFence;
        } else if (trim(line) == open_marker) {
            open_marker = {};
        }
        if (!current.empty()) out[current] += line + "\n";
    }
    return out;
}

/// Section headings in order of appearance (fence-aware).
inline std::vector<std::string> section_order(std::string_view user_text) {
    std::vector<std::string> out;
    std::string_view open_marker;
    for (const auto& line : split_lines(user_text)) {
        if (open_marker.empty()) {
            if (starts_with(line, "## ")) out.push_back(line);
            else if (starts_with(line, kFence)) open_marker = kFence;
            else if (starts_with(line, kExampleFence)) open_marker = kExampleFence;
        } else if (trim(line) == open_marker) {
            open_marker = {};
        }
    }
    return out;
}

} // namespace rws::format
