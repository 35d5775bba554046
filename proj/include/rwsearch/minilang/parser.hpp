#pragma once

#include <charconv>
#include <string_view>
#include <vector>

#include "rwsearch/minilang/ast.hpp"
#include "rwsearch/minilang/lexer.hpp"

namespace rws::minilang {

namespace detail {

class Parser {
public:
    explicit Parser(std::vector<Token> tokens) {
        for (auto& t : tokens)
            if (!t.trivia()) toks_.push_back(std::move(t));
    }

    Node program() {
        Node prog = make_node(NodeKind::Program);
        prog.span = peek().span;
        while (peek().kind != TokenKind::End) prog.children.push_back(statement());
        return prog;
    }

private:
    const Token& peek(std::size_t ahead = 0) const {
        const std::size_t idx = std::min(pos_ + ahead, toks_.size() - 1);
        return toks_[idx];
    }

    const Token& take() {
        const Token& t = toks_[pos_];
        if (pos_ + 1 < toks_.size()) ++pos_;
        return t;
    }

    [[noreturn]] void fail(const std::string& what, std::set<std::string> expected) const {
        const Token& t = peek();
        std::string got = t.kind == TokenKind::End ? "end of input" : "'" + t.text + "'";
        throw SyntaxError(what + ", found " + got, t.span.line, t.span.column, std::move(expected));
    }

    const Token& expect(TokenKind kind) {
        if (peek().kind != kind) fail("unexpected token", {token_kind_name(kind)});
        return take();
    }

    static std::set<std::string> statement_starts() {
        return {"variable", "'echo'", "'if'", "identifier", "string", "number", "'('"};
    }
    static std::set<std::string> expression_starts() {
        return {"variable", "identifier", "string", "number", "'('"};
    }

    Node statement() {
        const Token& t = peek();
        switch (t.kind) {
        case TokenKind::KwEcho: {
            Node echo = make_node(NodeKind::Echo);
            echo.span = take().span;
            echo.children.push_back(expression());
            while (peek().kind == TokenKind::Comma) {
                take();
                echo.children.push_back(expression());
            }
            expect(TokenKind::Semicolon);
            return echo;
        }
        case TokenKind::KwIf: {
            Node node = make_node(NodeKind::If);
            node.span = take().span;
            expect(TokenKind::LParen);
            node.children.push_back(expression());
            expect(TokenKind::RParen);
            node.children.push_back(block());
            if (peek().kind == TokenKind::KwElse) {
                take();
                node.children.push_back(block());
            }
            return node;
        }
        case TokenKind::Var:
            if (peek(1).kind == TokenKind::Assign) {
                Node assign = make_node(NodeKind::Assign);
                const Token& v = take();
                assign.span = v.span;
                Node var = make_node(NodeKind::Var, v.value);
                var.span = v.span;
                assign.children.push_back(std::move(var));
                take();
                assign.children.push_back(expression());
                expect(TokenKind::Semicolon);
                return assign;
            }
            [[fallthrough]];
        case TokenKind::Ident:
        case TokenKind::String:
        case TokenKind::Number:
        case TokenKind::LParen: {
            Node e = expression();
            expect(TokenKind::Semicolon);
            return e;
        }
        default:
            fail("expected a statement", statement_starts());
        }
    }

    Node block() {
        Node b = make_node(NodeKind::Block);
        b.span = expect(TokenKind::LBrace).span;
        while (peek().kind != TokenKind::RBrace) {
            if (peek().kind == TokenKind::End) fail("unterminated block", {"'}'"});
            b.children.push_back(statement());
        }
        take();
        return b;
    }

    Node expression() {
        Node lhs = primary();
        while (peek().kind == TokenKind::BinOp) {
            const Token& op = take();
            Node bin = make_node(NodeKind::BinOp, op.value);
            bin.span = op.span;
            bin.children.push_back(std::move(lhs));
            bin.children.push_back(primary());
            lhs = std::move(bin);
        }
        return lhs;
    }

    Node primary() {
        const Token& t = peek();
        switch (t.kind) {
        case TokenKind::String: {
            Node n = make_node(NodeKind::StrLit, t.value);
            n.span = take().span;
            return n;
        }
        case TokenKind::Number: {
            std::int64_t v = 0;
            const auto* b = t.value.data();
            auto [ptr, ec] = std::from_chars(b, b + t.value.size(), v);
            if (ec != std::errc{}) throw SyntaxError("number out of range", t.span.line, t.span.column);
            // Canonical digits so "007" and "7" agree.
            Node n = make_node(NodeKind::NumLit, std::to_string(v));
            n.span = take().span;
            return n;
        }
        case TokenKind::Var: {
            Node n = make_node(NodeKind::Var, t.value);
            n.span = take().span;
            return n;
        }
        case TokenKind::Ident: {
            Node call = make_node(NodeKind::Call, t.value);
            call.span = take().span;
            expect(TokenKind::LParen);
            if (peek().kind != TokenKind::RParen) {
                call.children.push_back(expression());
                while (peek().kind == TokenKind::Comma) {
                    take();
                    call.children.push_back(expression());
                }
            }
            expect(TokenKind::RParen);
            return call;
        }
        case TokenKind::LParen: {
            take();
            Node inner = expression();
            expect(TokenKind::RParen);
            return inner;
        }
        default:
            fail("expected an expression", expression_starts());
        }
    }

    std::vector<Token> toks_;
    std::size_t pos_ = 0;
};

} // namespace detail

/// Parse source into an attributed AST. Comments and whitespace are dropped.
/// Throws SyntaxError with the location and expected-token set.
inline ScriptAst parse(std::string_view source) {
    detail::Parser p(tokenize(source));
    return p.program();
}

} // namespace rws::minilang
