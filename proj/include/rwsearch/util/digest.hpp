#pragma once

#include <openssl/evp.h>

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <string_view>

#include "rwsearch/error.hpp"

namespace rws::util {

namespace detail {

inline std::string hex_lower(const unsigned char* data, std::size_t len) {
    static constexpr char kDigits[] = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (std::size_t i = 0; i < len; ++i) {
        out.push_back(kDigits[data[i] >> 4]);
        out.push_back(kDigits[data[i] & 0x0f]);
    }
    return out;
}

inline std::string evp_hex(const EVP_MD* md, std::string_view bytes) {
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
    std::array<unsigned char, EVP_MAX_MD_SIZE> buf{};
    unsigned int len = 0;
    if (!ctx || EVP_DigestInit_ex(ctx.get(), md, nullptr) != 1 ||
        EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
        EVP_DigestFinal_ex(ctx.get(), buf.data(), &len) != 1) {
        throw Error("digest computation failed");
    }
    return hex_lower(buf.data(), len);
}

} // namespace detail

/// Lowercase hex MD5 of raw bytes.
inline std::string md5_hex(std::string_view bytes) { return detail::evp_hex(EVP_md5(), bytes); }

/// Lowercase hex SHA-256 of raw bytes.
inline std::string sha256_hex(std::string_view bytes) { return detail::evp_hex(EVP_sha256(), bytes); }

} // namespace rws::util
