#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace rws {

struct TokenEstimate {
    std::uint64_t count = 0;
    std::string method;
};

inline constexpr const char* kTokenMethodBytesDiv4 = "ceil_bytes_div_4";

/// Length functional used by every budget formula: ceil(bytes / 4).
/// est("") == 0 and est(a + b) >= max(est(a), est(b)).
inline TokenEstimate estimate_tokens(std::string_view text) {
    return TokenEstimate{(static_cast<std::uint64_t>(text.size()) + 3) / 4, kTokenMethodBytesDiv4};
}

inline std::uint64_t token_count(std::string_view text) { return estimate_tokens(text).count; }

} // namespace rws
