#pragma once

// Hand-rolled tokenizer and recursive-descent parser for the supported
// subset. Statements that begin with a known verb must parse completely
// (errors carry character positions). Statements with an unknown leading
// keyword (SET, SHOW, ...) come back as StatementKind::Other together with
// every identifier token seen, so the classifier can fail closed when such
// a statement mentions protected tables or columns.

#include <cctype>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "blindex/error.hpp"
#include "blindex/sql/ast.hpp"

namespace blindex::sql {

namespace parse_detail {

enum class TokKind { Identifier, Number, String, Punct, End };

struct Token {
    TokKind kind = TokKind::End;
    std::string text;  // identifiers verbatim; punctuation as-is; strings unescaped
    std::string upper; // uppercase form for keyword matching
    size_t pos = 0;    // byte offset in the input
};

class Lexer {
  public:
    explicit Lexer(std::string_view sql) : sql_(sql) {}

    std::vector<Token> run() {
        std::vector<Token> out;
        while (true) {
            skip_ws();
            Token t;
            t.pos = pos_;
            if (pos_ >= sql_.size()) {
                t.kind = TokKind::End;
                out.push_back(t);
                return out;
            }
            char c = sql_[pos_];
            if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
                size_t start = pos_;
                while (pos_ < sql_.size() &&
                       (std::isalnum(static_cast<unsigned char>(sql_[pos_])) || sql_[pos_] == '_'))
                    ++pos_;
                t.kind = TokKind::Identifier;
                t.text = std::string(sql_.substr(start, pos_ - start));
                t.upper = upper(t.text);
            } else if (std::isdigit(static_cast<unsigned char>(c))) {
                t.kind = TokKind::Number;
                t.text = lex_number();
            } else if (c == '\'') {
                t.kind = TokKind::String;
                t.text = lex_string();
            } else if (c == '<' || c == '>') {
                size_t start = pos_++;
                if (pos_ < sql_.size() && (sql_[pos_] == '=' || (c == '<' && sql_[pos_] == '>')))
                    ++pos_;
                t.kind = TokKind::Punct;
                t.text = std::string(sql_.substr(start, pos_ - start));
            } else if (std::string_view("(),=*;.-+").find(c) != std::string_view::npos) {
                t.kind = TokKind::Punct;
                t.text = std::string(1, c);
                ++pos_;
            } else {
                raise(errc::syntax_error, "unexpected character '" + std::string(1, c) +
                                              "' at position " + std::to_string(pos_));
            }
            out.push_back(std::move(t));
        }
    }

    static std::string upper(std::string_view s) {
        std::string out(s);
        for (char& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
        return out;
    }

  private:
    void skip_ws() {
        while (pos_ < sql_.size() && std::isspace(static_cast<unsigned char>(sql_[pos_]))) ++pos_;
    }

    std::string lex_number() {
        size_t start = pos_;
        while (pos_ < sql_.size() && std::isdigit(static_cast<unsigned char>(sql_[pos_]))) ++pos_;
        if (pos_ < sql_.size() && sql_[pos_] == '.') {
            ++pos_;
            while (pos_ < sql_.size() && std::isdigit(static_cast<unsigned char>(sql_[pos_])))
                ++pos_;
        }
        return std::string(sql_.substr(start, pos_ - start));
    }

    std::string lex_string() {
        size_t start = pos_++;
        std::string out;
        while (pos_ < sql_.size()) {
            char c = sql_[pos_];
            if (c == '\'') {
                if (pos_ + 1 < sql_.size() && sql_[pos_ + 1] == '\'') {
                    out.push_back('\'');
                    pos_ += 2;
                    continue;
                }
                ++pos_;
                return out;
            }
            out.push_back(c);
            ++pos_;
        }
        raise(errc::syntax_error,
              "unterminated string starting at position " + std::to_string(start));
    }

    std::string_view sql_;
    size_t pos_ = 0;
};

} // namespace parse_detail

class Parser {
  public:
    explicit Parser(std::string_view sql) : sql_(sql) {
        tokens_ = parse_detail::Lexer(sql).run();
    }

    Statement parse() {
        const auto& first = peek();
        if (first.kind == parse_detail::TokKind::End)
            raise(errc::syntax_error, "empty statement");
        if (first.kind != parse_detail::TokKind::Identifier) return parse_other();

        const std::string& kw = first.upper;
        Statement s;
        if (kw == "SELECT") s = parse_select();
        else if (kw == "INSERT") s = parse_insert();
        else if (kw == "UPDATE") s = parse_update();
        else if (kw == "DELETE") s = parse_delete();
        else if (kw == "CREATE") s = parse_create();
        else if (kw == "DROP") s = parse_drop();
        else if (kw == "BEGIN") { next(); s.kind = StatementKind::Begin; }
        else if (kw == "COMMIT") { next(); s.kind = StatementKind::Commit; }
        else if (kw == "ROLLBACK") { next(); s.kind = StatementKind::Rollback; }
        else return parse_other();

        accept_punct(";");
        expect_end();
        return s;
    }

  private:
    using TokKind = parse_detail::TokKind;
    using Token = parse_detail::Token;

    // ---- token plumbing -------------------------------------------------
    const Token& peek(size_t ahead = 0) const {
        size_t i = idx_ + ahead;
        return i < tokens_.size() ? tokens_[i] : tokens_.back();
    }
    const Token& next() {
        const Token& t = peek();
        if (idx_ < tokens_.size() - 1) ++idx_;
        return t;
    }
    [[noreturn]] void fail(const std::string& what) const {
        raise(errc::syntax_error, what + " at position " + std::to_string(peek().pos));
    }
    static bool is_reserved(const std::string& upper) {
        static const char* kReserved[] = {
            "SELECT", "FROM", "WHERE", "AND",    "INSERT", "INTO",   "VALUES", "UPDATE",
            "SET",    "DELETE", "CREATE", "TABLE", "DROP",   "LIMIT",  "OFFSET", "IN",
            "LIKE",   "NULL",  "PRIMARY", "KEY",  "BEGIN",  "COMMIT", "ROLLBACK", "IF",
            "NOT",    "EXISTS"};
        for (const char* r : kReserved)
            if (upper == r) return true;
        return false;
    }
    bool accept_kw(std::string_view kw) {
        if (peek().kind == TokKind::Identifier && peek().upper == kw) {
            next();
            return true;
        }
        return false;
    }
    void expect_kw(std::string_view kw) {
        if (!accept_kw(kw)) fail("expected " + std::string(kw));
    }
    bool accept_punct(std::string_view p) {
        if (peek().kind == TokKind::Punct && peek().text == p) {
            next();
            return true;
        }
        return false;
    }
    void expect_punct(std::string_view p) {
        if (!accept_punct(p)) fail("expected '" + std::string(p) + "'");
    }
    void expect_end() {
        if (peek().kind != TokKind::End) fail("unexpected trailing input");
    }
    std::string expect_identifier(const char* what) {
        if (peek().kind != TokKind::Identifier || is_reserved(peek().upper))
            fail(std::string("expected ") + what);
        return next().text;
    }
    uint64_t expect_u64(const char* what) {
        if (peek().kind != TokKind::Number || peek().text.find('.') != std::string::npos)
            fail(std::string("expected integer ") + what);
        return std::stoull(next().text);
    }

    Literal parse_literal() {
        const Token& t = peek();
        if (t.kind == TokKind::String) return Literal::string(next().text);
        bool negative = false;
        if (t.kind == TokKind::Punct && (t.text == "-" || t.text == "+")) {
            negative = (t.text == "-");
            next();
        }
        const Token& v = peek();
        if (v.kind == TokKind::Number) {
            std::string text = next().text;
            LiteralKind kind = text.find('.') == std::string::npos ? LiteralKind::Integer
                                                                   : LiteralKind::Float;
            return {kind, negative ? "-" + text : text};
        }
        if (!negative && v.kind == TokKind::Identifier && v.upper == "NULL") {
            next();
            return Literal::null();
        }
        fail("expected literal");
    }

    // ---- statement grammars ---------------------------------------------
    Statement parse_select() {
        expect_kw("SELECT");
        Statement s;
        s.kind = StatementKind::Select;

        // Custom procedure spellings: SELECT KEY_EXCHANGE('...') etc.
        if (peek().kind == TokKind::Identifier && peek(1).kind == TokKind::Punct &&
            peek(1).text == "(") {
            const std::string& u = peek().upper;
            ProcKind proc = u == "KEY_EXCHANGE" ? ProcKind::KeyExchange
                            : u == "REGISTER"   ? ProcKind::Register
                            : u == "LOGIN"      ? ProcKind::Login
                                                : ProcKind::None;
            if (proc != ProcKind::None) {
                next();
                next(); // name, '('
                s.proc = proc;
                if (!accept_punct(")")) {
                    s.proc_args.push_back(parse_literal());
                    while (accept_punct(",")) s.proc_args.push_back(parse_literal());
                    expect_punct(")");
                }
                return s;
            }
        }

        s.projection.push_back(parse_select_item());
        while (accept_punct(",")) s.projection.push_back(parse_select_item());

        if (accept_kw("FROM")) {
            s.table = expect_identifier("table name");
            parse_where(s);
            parse_limit_offset(s);
        }
        return s;
    }

    SelectItem parse_select_item() {
        if (accept_punct("*")) return SelectItem::star();
        const Token& t = peek();
        if (t.kind == TokKind::Identifier && peek(1).kind == TokKind::Punct &&
            peek(1).text == "(") {
            const std::string& u = t.upper;
            AggFunc f = u == "COUNT" ? AggFunc::Count
                        : u == "SUM" ? AggFunc::Sum
                        : u == "AVG" ? AggFunc::Avg
                        : u == "MIN" ? AggFunc::Min
                        : u == "MAX" ? AggFunc::Max
                                     : AggFunc::None;
            if (f == AggFunc::None) fail("unknown function '" + t.text + "'");
            next();
            next();
            SelectItem item;
            item.kind = SelectItem::Kind::Aggregate;
            if (f == AggFunc::Count && accept_punct("*")) {
                item.func = AggFunc::CountStar;
            } else {
                item.func = f;
                item.column = expect_identifier("aggregate argument");
            }
            expect_punct(")");
            return item;
        }
        if (t.kind == TokKind::Identifier && !is_reserved(t.upper)) {
            SelectItem item;
            item.kind = SelectItem::Kind::Column;
            item.column = next().text;
            return item;
        }
        SelectItem item;
        item.kind = SelectItem::Kind::LiteralValue;
        item.literal = parse_literal();
        return item;
    }

    void parse_where(Statement& s) {
        if (!accept_kw("WHERE")) return;
        do {
            parse_predicate(s);
        } while (accept_kw("AND"));
    }

    void parse_predicate(Statement& s) {
        if (peek().kind == TokKind::Identifier && peek().upper == "SESSION_ID" &&
            peek(1).kind == TokKind::Punct && peek(1).text == "(") {
            next();
            next();
            uint64_t sid = expect_u64("session id");
            expect_punct(")");
            if (s.session_term && *s.session_term != sid)
                raise(errc::session_id_conflict, "conflicting SESSION_ID terms");
            s.session_term = sid;
            return;
        }
        Predicate p;
        p.column = expect_identifier("column name");
        if (accept_kw("IN")) {
            p.op = CompareOp::In;
            expect_punct("(");
            if (!accept_punct(")")) {
                p.values.push_back(parse_literal());
                while (accept_punct(",")) p.values.push_back(parse_literal());
                expect_punct(")");
            }
        } else if (accept_kw("LIKE")) {
            p.op = CompareOp::Like;
            p.values.push_back(parse_literal());
        } else {
            const Token& t = peek();
            if (t.kind != TokKind::Punct) fail("expected comparison operator");
            if (t.text == "=") p.op = CompareOp::Eq;
            else if (t.text == "<>") p.op = CompareOp::Ne;
            else if (t.text == "<") p.op = CompareOp::Lt;
            else if (t.text == "<=") p.op = CompareOp::Le;
            else if (t.text == ">") p.op = CompareOp::Gt;
            else if (t.text == ">=") p.op = CompareOp::Ge;
            else fail("expected comparison operator");
            next();
            p.values.push_back(parse_literal());
        }
        s.where.push_back(std::move(p));
    }

    void parse_limit_offset(Statement& s) {
        if (accept_kw("LIMIT")) s.limit = expect_u64("limit");
        if (accept_kw("OFFSET")) s.offset = expect_u64("offset");
    }

    Statement parse_insert() {
        expect_kw("INSERT");
        expect_kw("INTO");
        Statement s;
        s.kind = StatementKind::Insert;
        s.table = expect_identifier("table name");
        expect_punct("(");
        s.insert_columns.push_back(expect_identifier("column name"));
        while (accept_punct(",")) s.insert_columns.push_back(expect_identifier("column name"));
        expect_punct(")");
        expect_kw("VALUES");
        do {
            expect_punct("(");
            std::vector<Literal> row;
            row.push_back(parse_literal());
            while (accept_punct(",")) row.push_back(parse_literal());
            expect_punct(")");
            if (row.size() != s.insert_columns.size())
                fail("VALUES row arity does not match column list");
            s.insert_rows.push_back(std::move(row));
        } while (accept_punct(","));
        return s;
    }

    Statement parse_update() {
        expect_kw("UPDATE");
        Statement s;
        s.kind = StatementKind::Update;
        s.table = expect_identifier("table name");
        expect_kw("SET");
        do {
            std::string col = expect_identifier("column name");
            expect_punct("=");
            s.assignments.emplace_back(std::move(col), parse_literal());
        } while (accept_punct(","));
        parse_where(s);
        return s;
    }

    Statement parse_delete() {
        expect_kw("DELETE");
        expect_kw("FROM");
        Statement s;
        s.kind = StatementKind::Delete;
        s.table = expect_identifier("table name");
        parse_where(s);
        parse_limit_offset(s);
        return s;
    }

    Statement parse_create() {
        expect_kw("CREATE");
        expect_kw("TABLE");
        Statement s;
        s.kind = StatementKind::CreateTable;
        if (peek().upper == "IF") {
            next();
            expect_kw("NOT");
            expect_kw("EXISTS");
            s.if_not_exists = true;
        }
        s.table = expect_identifier("table name");
        expect_punct("(");
        do {
            ColumnDef def;
            def.name = expect_identifier("column name");
            // Type = identifier tokens, optionally with a (N) suffix, up to
            // PRIMARY KEY / ',' / ')'.
            std::string type;
            while (peek().kind == TokKind::Identifier && peek().upper != "PRIMARY") {
                if (!type.empty()) type += " ";
                type += peek().upper;
                next();
                if (accept_punct("(")) {
                    type += "(" + std::to_string(expect_u64("type width")) + ")";
                    expect_punct(")");
                }
            }
            def.type_text = type;
            if (accept_kw("PRIMARY")) {
                expect_kw("KEY");
                def.primary_key = true;
            }
            s.column_defs.push_back(std::move(def));
        } while (accept_punct(","));
        expect_punct(")");
        return s;
    }

    Statement parse_drop() {
        expect_kw("DROP");
        expect_kw("TABLE");
        Statement s;
        s.kind = StatementKind::DropTable;
        s.table = expect_identifier("table name");
        return s;
    }

    Statement parse_other() {
        Statement s;
        s.kind = StatementKind::Other;
        s.raw_sql = std::string(sql_);
        for (const auto& t : tokens_)
            if (t.kind == TokKind::Identifier) s.identifiers.push_back(t.text);
        idx_ = tokens_.size() - 1;
        return s;
    }

    std::string_view sql_;
    std::vector<parse_detail::Token> tokens_;
    size_t idx_ = 0;
};

inline Statement parse(std::string_view sql) { return Parser(sql).parse(); }

} // namespace blindex::sql
