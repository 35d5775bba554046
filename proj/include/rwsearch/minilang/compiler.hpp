#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "rwsearch/minilang/ast.hpp"

namespace rws::minilang {

/// Runtime value: integer or byte string.
using Value = std::variant<std::int64_t, std::string>;

inline std::string value_to_string(const Value& v) {
    if (const auto* i = std::get_if<std::int64_t>(&v)) return std::to_string(*i);
    return std::get<std::string>(v);
}

enum class Mnemonic {
    ASSIGN,
    FETCH_CONST,
    FETCH_VAR,
    CONCAT,
    ADD,
    SUB,
    MUL,
    DIV,
    CMP_EQ,
    CMP_NE,
    CMP_LT,
    CMP_GT,
    JMP,
    JMPZ,
    ECHO,
    INIT_CALL,
    SEND_ARG,
    DO_CALL,
    RETURN,
};

inline const char* mnemonic_name(Mnemonic m) {
    switch (m) {
    case Mnemonic::ASSIGN: return "ASSIGN";
    case Mnemonic::FETCH_CONST: return "FETCH_CONST";
    case Mnemonic::FETCH_VAR: return "FETCH_VAR";
    case Mnemonic::CONCAT: return "CONCAT";
    case Mnemonic::ADD: return "ADD";
    case Mnemonic::SUB: return "SUB";
    case Mnemonic::MUL: return "MUL";
    case Mnemonic::DIV: return "DIV";
    case Mnemonic::CMP_EQ: return "CMP_EQ";
    case Mnemonic::CMP_NE: return "CMP_NE";
    case Mnemonic::CMP_LT: return "CMP_LT";
    case Mnemonic::CMP_GT: return "CMP_GT";
    case Mnemonic::JMP: return "JMP";
    case Mnemonic::JMPZ: return "JMPZ";
    case Mnemonic::ECHO: return "ECHO";
    case Mnemonic::INIT_CALL: return "INIT_CALL";
    case Mnemonic::SEND_ARG: return "SEND_ARG";
    case Mnemonic::DO_CALL: return "DO_CALL";
    case Mnemonic::RETURN: return "RETURN";
    }
    return "?";
}

// Operand use per mnemonic:
//   FETCH_CONST  constant
//   ASSIGN, FETCH_VAR  number = slot
//   JMP, JMPZ  number = target op index
//   INIT_CALL  name = function, number = argument count
//   SEND_ARG  number = argument position
struct Instruction {
    Mnemonic op = Mnemonic::RETURN;
    Value constant{std::int64_t{0}};
    std::int64_t number = 0;
    std::string name;

    bool operator==(const Instruction&) const = default;
};

/// Textual form used for display and hashing, e.g. `FETCH_CONST "hi"`,
/// `ASSIGN s0`, `JMPZ 7`, `INIT_CALL rev 1`.
inline std::string to_text(const Instruction& ins) {
    std::string out = mnemonic_name(ins.op);
    switch (ins.op) {
    case Mnemonic::FETCH_CONST:
        if (const auto* i = std::get_if<std::int64_t>(&ins.constant)) {
            out += " " + std::to_string(*i);
        } else {
            out += " " + quote_string(std::get<std::string>(ins.constant));
        }
        break;
    case Mnemonic::ASSIGN:
    case Mnemonic::FETCH_VAR:
        out += " s" + std::to_string(ins.number);
        break;
    case Mnemonic::JMP:
    case Mnemonic::JMPZ:
    case Mnemonic::SEND_ARG:
        out += " " + std::to_string(ins.number);
        break;
    case Mnemonic::INIT_CALL:
        out += " " + ins.name + " " + std::to_string(ins.number);
        break;
    default:
        break;
    }
    return out;
}

struct OpcodeProgram {
    std::vector<Instruction> ops;
    std::map<std::string, int> slot_map;  // variable -> slot, numbered by first occurrence

    /// One instruction per line, `\n`-terminated.
    std::string text() const {
        std::string out;
        for (const auto& ins : ops) out += to_text(ins) + "\n";
        return out;
    }
};

namespace detail {

class Lowering {
public:
    OpcodeProgram run(const Node& program) {
        for (const auto& stmt : program.children) statement(stmt);
        emit(Mnemonic::RETURN);
        return std::move(prog_);
    }

private:
    std::size_t emit(Mnemonic op) {
        Instruction ins;
        ins.op = op;
        prog_.ops.push_back(std::move(ins));
        return prog_.ops.size() - 1;
    }

    int slot(const std::string& var) {
        auto [it, inserted] = prog_.slot_map.emplace(var, static_cast<int>(prog_.slot_map.size()));
        return it->second;
    }

    void statement(const Node& n) {
        switch (n.kind) {
        case NodeKind::Assign: {
            // Slot numbering follows textual order: the target precedes the value.
            const int s = slot(*n.children[0].name);
            expression(n.children[1]);
            prog_.ops[emit(Mnemonic::ASSIGN)].number = s;
            break;
        }
        case NodeKind::Echo:
            for (const auto& e : n.children) {
                expression(e);
                emit(Mnemonic::ECHO);
            }
            break;
        case NodeKind::If: {
            expression(n.children[0]);
            const std::size_t jz = emit(Mnemonic::JMPZ);
            for (const auto& s : n.children[1].children) statement(s);
            if (n.children.size() > 2) {
                const std::size_t jmp = emit(Mnemonic::JMP);
                prog_.ops[jz].number = static_cast<std::int64_t>(prog_.ops.size());
                for (const auto& s : n.children[2].children) statement(s);
                prog_.ops[jmp].number = static_cast<std::int64_t>(prog_.ops.size());
            } else {
                prog_.ops[jz].number = static_cast<std::int64_t>(prog_.ops.size());
            }
            break;
        }
        case NodeKind::Block:
            for (const auto& s : n.children) statement(s);
            break;
        default:
            // Expression statement; its value stays on the operand stack.
            expression(n);
            break;
        }
    }

    void expression(const Node& n) {
        switch (n.kind) {
        case NodeKind::StrLit:
            prog_.ops[emit(Mnemonic::FETCH_CONST)].constant = *n.name;
            break;
        case NodeKind::NumLit:
            prog_.ops[emit(Mnemonic::FETCH_CONST)].constant = static_cast<std::int64_t>(std::stoll(*n.name));
            break;
        case NodeKind::Var:
            prog_.ops[emit(Mnemonic::FETCH_VAR)].number = slot(*n.name);
            break;
        case NodeKind::Call: {
            const std::size_t init = emit(Mnemonic::INIT_CALL);
            prog_.ops[init].name = *n.name;
            prog_.ops[init].number = static_cast<std::int64_t>(n.children.size());
            for (std::size_t i = 0; i < n.children.size(); ++i) {
                expression(n.children[i]);
                prog_.ops[emit(Mnemonic::SEND_ARG)].number = static_cast<std::int64_t>(i);
            }
            emit(Mnemonic::DO_CALL);
            break;
        }
        case NodeKind::BinOp: {
            expression(n.children[0]);
            expression(n.children[1]);
            emit(binop(*n.name));
            break;
        }
        default:
            break;
        }
    }

    static Mnemonic binop(const std::string& op) {
        if (op == ".") return Mnemonic::CONCAT;
        if (op == "+") return Mnemonic::ADD;
        if (op == "-") return Mnemonic::SUB;
        if (op == "*") return Mnemonic::MUL;
        if (op == "/") return Mnemonic::DIV;
        if (op == "==") return Mnemonic::CMP_EQ;
        if (op == "!=") return Mnemonic::CMP_NE;
        if (op == "<") return Mnemonic::CMP_LT;
        return Mnemonic::CMP_GT;
    }

    OpcodeProgram prog_;
};

} // namespace detail

/// Lower an AST to the stack-machine instruction set. Evaluation is strictly
/// left to right; variables become slot numbers assigned by first textual
/// occurrence, so consistently renamed programs compile identically.
inline OpcodeProgram compile(const ScriptAst& ast) {
    detail::Lowering l;
    return l.run(ast);
}

} // namespace rws::minilang
