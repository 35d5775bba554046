#pragma once

#include <optional>
#include <string>
#include <vector>

#include "rwsearch/minilang/lexer.hpp"

namespace rws::minilang {

enum class NodeKind { Program, Assign, Echo, If, Call, Var, StrLit, NumLit, BinOp, Block };

inline const char* node_kind_name(NodeKind kind) {
    switch (kind) {
    case NodeKind::Program: return "Program";
    case NodeKind::Assign: return "Assign";
    case NodeKind::Echo: return "Echo";
    case NodeKind::If: return "If";
    case NodeKind::Call: return "Call";
    case NodeKind::Var: return "Var";
    case NodeKind::StrLit: return "StrLit";
    case NodeKind::NumLit: return "NumLit";
    case NodeKind::BinOp: return "BinOp";
    case NodeKind::Block: return "Block";
    }
    return "?";
}

// name holds: Var -> bare variable name, Call -> function name, BinOp ->
// operator, StrLit -> decoded value, NumLit -> decimal digits. Other kinds
// carry no name.
//
// Children by kind:
//   Program/Block: statements
//   Assign: [Var, value]
//   Echo: one or more expressions
//   If: [condition, then Block, optional else Block]
//   Call: arguments
//   BinOp: [lhs, rhs]
struct Node {
    NodeKind kind = NodeKind::Program;
    std::optional<std::string> name;
    std::vector<Node> children;
    SourceSpan span;

    bool operator==(const Node& other) const {
        return kind == other.kind && name == other.name && children == other.children;
    }
};

using ScriptAst = Node;

inline Node make_node(NodeKind kind, std::optional<std::string> name = std::nullopt,
                      std::vector<Node> children = {}) {
    Node n;
    n.kind = kind;
    n.name = std::move(name);
    n.children = std::move(children);
    return n;
}

} // namespace rws::minilang
