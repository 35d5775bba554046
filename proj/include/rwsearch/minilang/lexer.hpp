#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "rwsearch/error.hpp"

namespace rws::minilang {

struct SourceSpan {
    std::size_t offset = 0;
    std::size_t length = 0;
    int line = 1;
    int column = 1;
};

enum class TokenKind {
    Var,        // $name
    Ident,      // function names
    KwEcho,
    KwIf,
    KwElse,
    String,
    Number,
    BinOp,      // . + - * / == != < >
    Assign,     // =
    LParen,
    RParen,
    LBrace,
    RBrace,
    Semicolon,
    Comma,
    Comment,
    Whitespace,
    End,
};

const char* token_kind_name(TokenKind kind);

struct Token {
    TokenKind kind = TokenKind::End;
    std::string text;   // raw source bytes
    std::string value;  // decoded string / bare variable name / identifier
    SourceSpan span;

    bool trivia() const { return kind == TokenKind::Comment || kind == TokenKind::Whitespace; }
};

class SyntaxError : public Error {
public:
    SyntaxError(const std::string& msg, int line, int column, std::set<std::string> expected = {})
        : Error(format(msg, line, column, expected)), line_(line), column_(column),
          expected_(std::move(expected)) {}

    int line() const { return line_; }
    int column() const { return column_; }
    const std::set<std::string>& expected() const { return expected_; }

private:
    static std::string format(const std::string& msg, int line, int column,
                              const std::set<std::string>& expected) {
        std::string out = std::to_string(line) + ":" + std::to_string(column) + ": " + msg;
        if (!expected.empty()) {
            out += " (expected one of:";
            for (const auto& e : expected) out += " " + e;
            out += ")";
        }
        return out;
    }

    int line_;
    int column_;
    std::set<std::string> expected_;
};

inline const char* token_kind_name(TokenKind kind) {
    switch (kind) {
    case TokenKind::Var: return "variable";
    case TokenKind::Ident: return "identifier";
    case TokenKind::KwEcho: return "'echo'";
    case TokenKind::KwIf: return "'if'";
    case TokenKind::KwElse: return "'else'";
    case TokenKind::String: return "string";
    case TokenKind::Number: return "number";
    case TokenKind::BinOp: return "operator";
    case TokenKind::Assign: return "'='";
    case TokenKind::LParen: return "'('";
    case TokenKind::RParen: return "')'";
    case TokenKind::LBrace: return "'{'";
    case TokenKind::RBrace: return "'}'";
    case TokenKind::Semicolon: return "';'";
    case TokenKind::Comma: return "','";
    case TokenKind::Comment: return "comment";
    case TokenKind::Whitespace: return "whitespace";
    case TokenKind::End: return "end of input";
    }
    return "?";
}

namespace detail {

inline bool ident_start(char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_';
}
inline bool ident_char(char c) { return ident_start(c) || (c >= '0' && c <= '9'); }
inline bool digit(char c) { return c >= '0' && c <= '9'; }

} // namespace detail

/// Lossless tokenization: concatenating every token's text reproduces the
/// source. The trailing End token has empty text.
inline std::vector<Token> tokenize(std::string_view src) {
    std::vector<Token> out;
    std::size_t i = 0;
    int line = 1;
    int col = 1;

    auto advance_to = [&](std::size_t end) {
        for (; i < end; ++i) {
            if (src[i] == '\n') {
                ++line;
                col = 1;
            } else {
                ++col;
            }
        }
    };

    while (i < src.size()) {
        const std::size_t start = i;
        const int tline = line;
        const int tcol = col;
        Token tok;
        const char c = src[i];
        std::size_t end = i + 1;

        if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
            while (end < src.size() &&
                   (src[end] == ' ' || src[end] == '\t' || src[end] == '\r' || src[end] == '\n'))
                ++end;
            tok.kind = TokenKind::Whitespace;
        } else if (c == '#' || (c == '/' && i + 1 < src.size() && src[i + 1] == '/')) {
            while (end < src.size() && src[end] != '\n') ++end;
            tok.kind = TokenKind::Comment;
        } else if (c == '/' && i + 1 < src.size() && src[i + 1] == '*') {
            const auto close = src.find("*/", i + 2);
            if (close == std::string_view::npos)
                throw SyntaxError("unterminated block comment", tline, tcol);
            end = close + 2;
            tok.kind = TokenKind::Comment;
        } else if (c == '$') {
            if (end >= src.size() || !detail::ident_start(src[end]))
                throw SyntaxError("'$' must be followed by an identifier", tline, tcol);
            while (end < src.size() && detail::ident_char(src[end])) ++end;
            tok.kind = TokenKind::Var;
            tok.value = std::string(src.substr(start + 1, end - start - 1));
        } else if (detail::ident_start(c)) {
            while (end < src.size() && detail::ident_char(src[end])) ++end;
            tok.value = std::string(src.substr(start, end - start));
            if (tok.value == "echo") tok.kind = TokenKind::KwEcho;
            else if (tok.value == "if") tok.kind = TokenKind::KwIf;
            else if (tok.value == "else") tok.kind = TokenKind::KwElse;
            else tok.kind = TokenKind::Ident;
        } else if (detail::digit(c)) {
            while (end < src.size() && detail::digit(src[end])) ++end;
            if (end < src.size() && detail::ident_start(src[end]))
                throw SyntaxError("malformed number", tline, tcol);
            tok.kind = TokenKind::Number;
            tok.value = std::string(src.substr(start, end - start));
        } else if (c == '"') {
            std::string value;
            bool closed = false;
            while (end < src.size()) {
                const char d = src[end];
                if (d == '"') {
                    closed = true;
                    ++end;
                    break;
                }
                if (d == '\\' && end + 1 < src.size() && (src[end + 1] == '"' || src[end + 1] == '\\')) {
                    value.push_back(src[end + 1]);
                    end += 2;
                    continue;
                }
                value.push_back(d);
                ++end;
            }
            if (!closed) throw SyntaxError("unterminated string literal", tline, tcol);
            tok.kind = TokenKind::String;
            tok.value = std::move(value);
        } else if (c == '=' || c == '!') {
            if (end < src.size() && src[end] == '=') {
                ++end;
                tok.kind = TokenKind::BinOp;
            } else if (c == '=') {
                tok.kind = TokenKind::Assign;
            } else {
                throw SyntaxError("unexpected character '!'", tline, tcol);
            }
        } else {
            switch (c) {
            case '.': case '+': case '-': case '*': case '/': case '<': case '>':
                tok.kind = TokenKind::BinOp;
                break;
            case '(': tok.kind = TokenKind::LParen; break;
            case ')': tok.kind = TokenKind::RParen; break;
            case '{': tok.kind = TokenKind::LBrace; break;
            case '}': tok.kind = TokenKind::RBrace; break;
            case ';': tok.kind = TokenKind::Semicolon; break;
            case ',': tok.kind = TokenKind::Comma; break;
            default:
                throw SyntaxError(std::string("unexpected character '") + c + "'", tline, tcol);
            }
        }

        tok.text = std::string(src.substr(start, end - start));
        if (tok.kind == TokenKind::BinOp) tok.value = tok.text;
        tok.span = SourceSpan{start, end - start, tline, tcol};
        advance_to(end);
        out.push_back(std::move(tok));
    }

    Token eof;
    eof.kind = TokenKind::End;
    eof.span = SourceSpan{src.size(), 0, line, col};
    out.push_back(std::move(eof));
    return out;
}

/// Quote a decoded string value back into literal syntax.
inline std::string quote_string(std::string_view value) {
    std::string out = "\"";
    for (char c : value) {
        if (c == '"' || c == '\\') out.push_back('\\');
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

} // namespace rws::minilang
