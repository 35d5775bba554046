#pragma once

#include <json.hpp>

#include <string>

#include "rwsearch/minilang/ast.hpp"

namespace rws::minilang {

namespace detail {

inline nlohmann::ordered_json to_ordered_json(const Node& node) {
    nlohmann::ordered_json j;
    j["kind"] = node_kind_name(node.kind);
    j["name"] = node.name ? nlohmann::ordered_json(*node.name) : nlohmann::ordered_json(nullptr);
    j["children"] = nlohmann::ordered_json::array();
    for (const auto& child : node.children) j["children"].push_back(to_ordered_json(child));
    return j;
}

} // namespace detail

/// Deterministic serialization of an AST: keys in the order kind, name,
/// children; spans omitted; 2-space indent; trailing newline. Invalid UTF-8
/// in literals is replaced with U+FFFD.
inline std::string canonical_json(const ScriptAst& ast) {
    return detail::to_ordered_json(ast).dump(2, ' ', false, nlohmann::ordered_json::error_handler_t::replace) +
           "\n";
}

} // namespace rws::minilang
