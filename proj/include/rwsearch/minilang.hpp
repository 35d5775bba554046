#pragma once

#include "rwsearch/minilang/ast.hpp"
#include "rwsearch/minilang/canonical.hpp"
#include "rwsearch/minilang/compiler.hpp"
#include "rwsearch/minilang/interpreter.hpp"
#include "rwsearch/minilang/lexer.hpp"
#include "rwsearch/minilang/parser.hpp"

namespace rws::minilang {

inline constexpr std::uint64_t kDefaultStepLimit = 100000;

/// parse + compile + interpret in one go.
inline ExecutionTrace run_source(std::string_view source, std::uint64_t step_limit = kDefaultStepLimit) {
    return interpret(compile(parse(source)), step_limit);
}

inline bool parses(std::string_view source) {
    try {
        (void)parse(source);
        return true;
    } catch (const Error&) {
        return false;
    }
}

} // namespace rws::minilang
