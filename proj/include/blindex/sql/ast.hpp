#pragma once

// Statement model for the supported SQL subset: single-table SELECT /
// INSERT / UPDATE / DELETE, CREATE/DROP TABLE, transaction keywords, and
// the three custom procedures. WHERE clauses are AND-conjunctions of
// column-operator-literal terms plus an optional SESSION_ID(<id>) marker.
// render() produces a canonical string that re-parses to an equal Ast.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "blindex/error.hpp"

namespace blindex::sql {

enum class LiteralKind { Integer, Float, String, Null };

struct Literal {
    LiteralKind kind = LiteralKind::Null;
    std::string text; // canonical source text; for String, the unescaped content

    static Literal integer(int64_t v) { return {LiteralKind::Integer, std::to_string(v)}; }
    static Literal string(std::string s) { return {LiteralKind::String, std::move(s)}; }
    static Literal null() { return {LiteralKind::Null, ""}; }

    bool is_null() const { return kind == LiteralKind::Null; }
    bool operator==(const Literal&) const = default;
};

enum class CompareOp { Eq, Ne, Lt, Le, Gt, Ge, Like, In };

inline const char* to_string(CompareOp op) {
    switch (op) {
    case CompareOp::Eq: return "=";
    case CompareOp::Ne: return "<>";
    case CompareOp::Lt: return "<";
    case CompareOp::Le: return "<=";
    case CompareOp::Gt: return ">";
    case CompareOp::Ge: return ">=";
    case CompareOp::Like: return "LIKE";
    case CompareOp::In: return "IN";
    }
    return "=";
}

struct Predicate {
    std::string column;
    CompareOp op = CompareOp::Eq;
    std::vector<Literal> values; // size 1 except for IN (0..n)

    bool operator==(const Predicate&) const = default;
};

enum class AggFunc { None, CountStar, Count, Sum, Avg, Min, Max };

inline const char* to_string(AggFunc f) {
    switch (f) {
    case AggFunc::None: return "";
    case AggFunc::CountStar:
    case AggFunc::Count: return "COUNT";
    case AggFunc::Sum: return "SUM";
    case AggFunc::Avg: return "AVG";
    case AggFunc::Min: return "MIN";
    case AggFunc::Max: return "MAX";
    }
    return "";
}

struct SelectItem {
    enum class Kind { Star, Column, Aggregate, LiteralValue };
    Kind kind = Kind::Star;
    std::string column;   // Column and Aggregate(arg)
    AggFunc func = AggFunc::None;
    Literal literal;      // LiteralValue (e.g. SELECT 1)

    static SelectItem star() { return {Kind::Star, "", AggFunc::None, {}}; }
    static SelectItem col(std::string name) {
        return {Kind::Column, std::move(name), AggFunc::None, {}};
    }
    bool operator==(const SelectItem&) const = default;
};

struct ColumnDef {
    std::string name;
    std::string type_text;   // uppercased type tokens, e.g. "INT", "TEXT"
    bool primary_key = false;

    bool operator==(const ColumnDef&) const = default;
};

enum class StatementKind {
    Select,
    Insert,
    Update,
    Delete,
    CreateTable,
    DropTable,
    Begin,
    Commit,
    Rollback,
    Other
};

enum class ProcKind { None, KeyExchange, Register, Login };

struct Statement {
    StatementKind kind = StatementKind::Other;
    std::string table;

    // SELECT
    std::vector<SelectItem> projection;

    // INSERT
    std::vector<std::string> insert_columns;
    std::vector<std::vector<Literal>> insert_rows;

    // UPDATE
    std::vector<std::pair<std::string, Literal>> assignments;

    // WHERE (AND-conjunction) + the stripped session marker
    std::vector<Predicate> where;
    std::optional<uint64_t> session_term;

    std::optional<uint64_t> limit;
    std::optional<uint64_t> offset;

    // CREATE TABLE
    std::vector<ColumnDef> column_defs;
    bool if_not_exists = false;

    // Custom procedure (parsed from SELECT PROC(...))
    ProcKind proc = ProcKind::None;
    std::vector<Literal> proc_args;

    // Other: raw text plus every identifier token, for fail-closed checks
    std::string raw_sql;
    std::vector<std::string> identifiers;

    bool operator==(const Statement&) const = default;

    bool has_aggregate() const {
        for (const auto& item : projection)
            if (item.kind == SelectItem::Kind::Aggregate) return true;
        return false;
    }
};

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------

// Single quotes escape by doubling; no other character is special, so
// envelope base64 and arbitrary plaintext bytes survive round trips.
inline std::string quote_string(std::string_view s) {
    std::string out;
    out.reserve(s.size() + 2);
    out.push_back('\'');
    for (char c : s) {
        if (c == '\'') out += "''";
        else out.push_back(c);
    }
    out.push_back('\'');
    return out;
}

inline std::string render(const Literal& lit) {
    switch (lit.kind) {
    case LiteralKind::Integer:
    case LiteralKind::Float: return lit.text;
    case LiteralKind::String: return quote_string(lit.text);
    case LiteralKind::Null: return "NULL";
    }
    return "NULL";
}

inline std::string render(const Predicate& p) {
    if (p.op == CompareOp::In) {
        std::string out = p.column + " IN (";
        for (size_t i = 0; i < p.values.size(); ++i) {
            if (i) out += ", ";
            out += render(p.values[i]);
        }
        return out + ")";
    }
    return p.column + " " + to_string(p.op) + " " + render(p.values.at(0));
}

inline std::string render(const SelectItem& item) {
    switch (item.kind) {
    case SelectItem::Kind::Star: return "*";
    case SelectItem::Kind::Column: return item.column;
    case SelectItem::Kind::Aggregate:
        if (item.func == AggFunc::CountStar) return "COUNT(*)";
        return std::string(to_string(item.func)) + "(" + item.column + ")";
    case SelectItem::Kind::LiteralValue: return render(item.literal);
    }
    return "*";
}

inline const char* proc_name(ProcKind p) {
    switch (p) {
    case ProcKind::KeyExchange: return "KEY_EXCHANGE";
    case ProcKind::Register: return "REGISTER";
    case ProcKind::Login: return "LOGIN";
    case ProcKind::None: break;
    }
    return "";
}

inline std::string render(const Statement& s) {
    std::string out;
    auto render_where = [&] {
        bool first = true;
        auto emit = [&](const std::string& term) {
            out += first ? " WHERE " : " AND ";
            out += term;
            first = false;
        };
        for (const auto& p : s.where) emit(render(p));
        if (s.session_term) emit("SESSION_ID(" + std::to_string(*s.session_term) + ")");
    };
    auto render_tail = [&] {
        if (s.limit) out += " LIMIT " + std::to_string(*s.limit);
        if (s.offset) out += " OFFSET " + std::to_string(*s.offset);
    };

    switch (s.kind) {
    case StatementKind::Select:
        if (s.proc != ProcKind::None) {
            out = "SELECT " + std::string(proc_name(s.proc)) + "(";
            for (size_t i = 0; i < s.proc_args.size(); ++i) {
                if (i) out += ", ";
                out += render(s.proc_args[i]);
            }
            out += ")";
            return out;
        }
        out = "SELECT ";
        for (size_t i = 0; i < s.projection.size(); ++i) {
            if (i) out += ", ";
            out += render(s.projection[i]);
        }
        if (!s.table.empty()) out += " FROM " + s.table;
        render_where();
        render_tail();
        return out;

    case StatementKind::Insert: {
        out = "INSERT INTO " + s.table + " (";
        for (size_t i = 0; i < s.insert_columns.size(); ++i) {
            if (i) out += ", ";
            out += s.insert_columns[i];
        }
        out += ") VALUES ";
        for (size_t r = 0; r < s.insert_rows.size(); ++r) {
            if (r) out += ", ";
            out += "(";
            for (size_t i = 0; i < s.insert_rows[r].size(); ++i) {
                if (i) out += ", ";
                out += render(s.insert_rows[r][i]);
            }
            out += ")";
        }
        return out;
    }

    case StatementKind::Update:
        out = "UPDATE " + s.table + " SET ";
        for (size_t i = 0; i < s.assignments.size(); ++i) {
            if (i) out += ", ";
            out += s.assignments[i].first + " = " + render(s.assignments[i].second);
        }
        render_where();
        return out;

    case StatementKind::Delete:
        out = "DELETE FROM " + s.table;
        render_where();
        render_tail();
        return out;

    case StatementKind::CreateTable: {
        out = "CREATE TABLE ";
        if (s.if_not_exists) out += "IF NOT EXISTS ";
        out += s.table + " (";
        for (size_t i = 0; i < s.column_defs.size(); ++i) {
            if (i) out += ", ";
            out += s.column_defs[i].name;
            if (!s.column_defs[i].type_text.empty()) out += " " + s.column_defs[i].type_text;
            if (s.column_defs[i].primary_key) out += " PRIMARY KEY";
        }
        out += ")";
        return out;
    }

    case StatementKind::DropTable: return "DROP TABLE " + s.table;
    case StatementKind::Begin: return "BEGIN";
    case StatementKind::Commit: return "COMMIT";
    case StatementKind::Rollback: return "ROLLBACK";
    case StatementKind::Other: return s.raw_sql;
    }
    raise(errc::syntax_error, "unrenderable statement");
}

} // namespace blindex::sql
