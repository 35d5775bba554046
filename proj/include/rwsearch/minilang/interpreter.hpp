#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rwsearch/minilang/compiler.hpp"

namespace rws::minilang {

enum class HaltReason { Done, StepLimit, Error };

inline const char* halt_reason_name(HaltReason r) {
    switch (r) {
    case HaltReason::Done: return "done";
    case HaltReason::StepLimit: return "step-limit";
    case HaltReason::Error: return "error";
    }
    return "?";
}

struct CallRecord {
    std::string function;
    std::vector<Value> args;
    bool operator==(const CallRecord&) const = default;
};

struct ExecutionTrace {
    std::string output;
    std::vector<CallRecord> calls;  // unknown (non-builtin) functions only
    std::uint64_t steps = 0;
    HaltReason halted = HaltReason::Done;
    std::string error;  // set when halted == Error
};

/// Behavioral equality: output and calls; step counts are ignored.
inline bool trace_equal(const ExecutionTrace& a, const ExecutionTrace& b) {
    return a.output == b.output && a.calls == b.calls;
}

// ---- value semantics shared by the machine --------------------------------

/// Integer view of a value: strings contribute a leading optional '-' and
/// decimal digits, anything else is 0. Overflow wraps.
inline std::int64_t to_int(const Value& v) {
    if (const auto* i = std::get_if<std::int64_t>(&v)) return *i;
    const auto& s = std::get<std::string>(v);
    std::size_t pos = 0;
    bool neg = false;
    if (pos < s.size() && s[pos] == '-') {
        neg = true;
        ++pos;
    }
    std::uint64_t acc = 0;
    for (; pos < s.size() && s[pos] >= '0' && s[pos] <= '9'; ++pos)
        acc = acc * 10 + static_cast<std::uint64_t>(s[pos] - '0');
    if (neg) acc = ~acc + 1;
    return static_cast<std::int64_t>(acc);
}

/// Falsy values: 0, "" and "0".
inline bool truthy(const Value& v) {
    if (const auto* i = std::get_if<std::int64_t>(&v)) return *i != 0;
    const auto& s = std::get<std::string>(v);
    return !(s.empty() || s == "0");
}

/// Comparison: two integers compare numerically, otherwise the string forms
/// compare bytewise. Returns <0, 0, >0.
inline int compare_values(const Value& a, const Value& b) {
    const auto* ia = std::get_if<std::int64_t>(&a);
    const auto* ib = std::get_if<std::int64_t>(&b);
    if (ia && ib) return (*ia < *ib) ? -1 : (*ia > *ib ? 1 : 0);
    const int c = value_to_string(a).compare(value_to_string(b));
    return c < 0 ? -1 : (c > 0 ? 1 : 0);
}

inline std::int64_t wrap_add(std::int64_t a, std::int64_t b) {
    return static_cast<std::int64_t>(static_cast<std::uint64_t>(a) + static_cast<std::uint64_t>(b));
}
inline std::int64_t wrap_sub(std::int64_t a, std::int64_t b) {
    return static_cast<std::int64_t>(static_cast<std::uint64_t>(a) - static_cast<std::uint64_t>(b));
}
inline std::int64_t wrap_mul(std::int64_t a, std::int64_t b) {
    return static_cast<std::int64_t>(static_cast<std::uint64_t>(a) * static_cast<std::uint64_t>(b));
}

struct BuiltinResult {
    std::optional<Value> value;  // empty: not a builtin
    std::string error;           // arity/argument error
};

/// Evaluate a builtin (upper, lower, rev, len, substr). Unknown names yield
/// an empty result so the caller can record the call.
inline BuiltinResult call_builtin(const std::string& name, const std::vector<Value>& args) {
    auto arity = [&](std::size_t lo, std::size_t hi) -> bool { return args.size() >= lo && args.size() <= hi; };
    auto arity_error = [&](const char* want) {
        return BuiltinResult{Value{std::string{}}, name + "() expects " + want + " argument(s), got " +
                                                       std::to_string(args.size())};
    };
    if (name == "upper" || name == "lower" || name == "rev") {
        if (!arity(1, 1)) return arity_error("1");
        std::string s = value_to_string(args[0]);
        if (name == "upper") {
            std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) {
                return static_cast<char>(c >= 'a' && c <= 'z' ? c - 32 : c);
            });
        } else if (name == "lower") {
            std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) {
                return static_cast<char>(c >= 'A' && c <= 'Z' ? c + 32 : c);
            });
        } else {
            std::reverse(s.begin(), s.end());
        }
        return {Value{std::move(s)}, {}};
    }
    if (name == "len") {
        if (!arity(1, 1)) return arity_error("1");
        return {Value{static_cast<std::int64_t>(value_to_string(args[0]).size())}, {}};
    }
    if (name == "substr") {
        if (!arity(2, 3)) return arity_error("2 or 3");
        const std::string s = value_to_string(args[0]);
        const auto n = static_cast<std::int64_t>(s.size());
        std::int64_t start = to_int(args[1]);
        if (start < 0) start = std::max<std::int64_t>(0, n + start);
        start = std::min(start, n);
        std::int64_t count = n - start;
        if (args.size() == 3) {
            const std::int64_t l = to_int(args[2]);
            count = l >= 0 ? std::min(l, n - start) : std::max<std::int64_t>(0, n - start + l);
        }
        return {Value{s.substr(static_cast<std::size_t>(start), static_cast<std::size_t>(count))}, {}};
    }
    return {};
}

/// Execute a program on the stack machine. Always halts: at RETURN, at the
/// step limit, or at a runtime error (division by zero, builtin arity,
/// malformed program), which the trace records.
inline ExecutionTrace interpret(const OpcodeProgram& program, std::uint64_t step_limit) {
    ExecutionTrace trace;
    std::vector<Value> stack;
    std::vector<Value> slots;
    struct Frame {
        std::string name;
        std::vector<Value> args;
    };
    std::vector<Frame> frames;

    auto fail = [&](std::string msg) {
        trace.halted = HaltReason::Error;
        trace.error = std::move(msg);
    };
    auto pop = [&]() -> std::optional<Value> {
        if (stack.empty()) return std::nullopt;
        Value v = std::move(stack.back());
        stack.pop_back();
        return v;
    };

    std::size_t pc = 0;
    const auto& ops = program.ops;
    while (true) {
        if (pc >= ops.size()) {
            fail("program counter out of range");
            return trace;
        }
        if (trace.steps >= step_limit) {
            trace.halted = HaltReason::StepLimit;
            return trace;
        }
        ++trace.steps;
        const Instruction& ins = ops[pc];
        std::size_t next = pc + 1;

        switch (ins.op) {
        case Mnemonic::FETCH_CONST:
            stack.push_back(ins.constant);
            break;
        case Mnemonic::FETCH_VAR: {
            const auto s = static_cast<std::size_t>(ins.number);
            stack.push_back(s < slots.size() ? slots[s] : Value{std::string{}});
            break;
        }
        case Mnemonic::ASSIGN: {
            auto v = pop();
            if (!v || ins.number < 0) {
                fail("ASSIGN on empty stack");
                return trace;
            }
            const auto s = static_cast<std::size_t>(ins.number);
            if (slots.size() <= s) slots.resize(s + 1, Value{std::string{}});
            slots[s] = std::move(*v);
            break;
        }
        case Mnemonic::CONCAT:
        case Mnemonic::ADD:
        case Mnemonic::SUB:
        case Mnemonic::MUL:
        case Mnemonic::DIV:
        case Mnemonic::CMP_EQ:
        case Mnemonic::CMP_NE:
        case Mnemonic::CMP_LT:
        case Mnemonic::CMP_GT: {
            auto rhs = pop();
            auto lhs = pop();
            if (!lhs || !rhs) {
                fail(std::string(mnemonic_name(ins.op)) + " on short stack");
                return trace;
            }
            Value result;
            switch (ins.op) {
            case Mnemonic::CONCAT: result = value_to_string(*lhs) + value_to_string(*rhs); break;
            case Mnemonic::ADD: result = wrap_add(to_int(*lhs), to_int(*rhs)); break;
            case Mnemonic::SUB: result = wrap_sub(to_int(*lhs), to_int(*rhs)); break;
            case Mnemonic::MUL: result = wrap_mul(to_int(*lhs), to_int(*rhs)); break;
            case Mnemonic::DIV: {
                const std::int64_t d = to_int(*rhs);
                const std::int64_t n = to_int(*lhs);
                if (d == 0) {
                    fail("division by zero");
                    return trace;
                }
                result = (d == -1) ? wrap_sub(0, n) : n / d;
                break;
            }
            case Mnemonic::CMP_EQ: result = std::int64_t{compare_values(*lhs, *rhs) == 0}; break;
            case Mnemonic::CMP_NE: result = std::int64_t{compare_values(*lhs, *rhs) != 0}; break;
            case Mnemonic::CMP_LT: result = std::int64_t{compare_values(*lhs, *rhs) < 0}; break;
            default: result = std::int64_t{compare_values(*lhs, *rhs) > 0}; break;
            }
            stack.push_back(std::move(result));
            break;
        }
        case Mnemonic::JMP:
            next = static_cast<std::size_t>(ins.number);
            break;
        case Mnemonic::JMPZ: {
            auto v = pop();
            if (!v) {
                fail("JMPZ on empty stack");
                return trace;
            }
            if (!truthy(*v)) next = static_cast<std::size_t>(ins.number);
            break;
        }
        case Mnemonic::ECHO: {
            auto v = pop();
            if (!v) {
                fail("ECHO on empty stack");
                return trace;
            }
            trace.output += value_to_string(*v);
            break;
        }
        case Mnemonic::INIT_CALL:
            frames.push_back(Frame{ins.name, {}});
            break;
        case Mnemonic::SEND_ARG: {
            auto v = pop();
            if (!v || frames.empty()) {
                fail("SEND_ARG without call frame");
                return trace;
            }
            frames.back().args.push_back(std::move(*v));
            break;
        }
        case Mnemonic::DO_CALL: {
            if (frames.empty()) {
                fail("DO_CALL without call frame");
                return trace;
            }
            Frame f = std::move(frames.back());
            frames.pop_back();
            BuiltinResult r = call_builtin(f.name, f.args);
            if (!r.error.empty()) {
                fail(r.error);
                return trace;
            }
            if (r.value) {
                stack.push_back(std::move(*r.value));
            } else {
                trace.calls.push_back(CallRecord{f.name, std::move(f.args)});
                stack.push_back(Value{std::string{}});
            }
            break;
        }
        case Mnemonic::RETURN:
            trace.halted = HaltReason::Done;
            return trace;
        }
        pc = next;
    }
}

} // namespace rws::minilang
