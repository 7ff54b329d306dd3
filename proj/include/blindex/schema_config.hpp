#pragma once

// Declarative description of which columns are encrypted and how their
// blind indices are sized; loaded once at proxy startup and immutable
// afterwards. Grammar (one directive per line, '#' comments):
//
//   [table_name]
//   encrypted = [colA, colB]          # list may be empty
//   blind_index.colB.bits = 13        # only for columns in the encrypted list
//   key_column = id                   # integer key used by two-step UPDATE /
//                                     # DELETE; defaults to "id"; "none"
//                                     # declares the table keyless
//
// Identifier matching is case-sensitive exact match. Every blind-indexed
// column gets a companion column named "<column>__bidx" in the persistent
// schema; that naming is part of the storage contract.

#include <cctype>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "blindex/blind_index.hpp"
#include "blindex/error.hpp"

namespace blindex {

struct ColumnConfig {
    std::string column;
    bool encrypted = true;            // only encrypted columns are declared
    std::optional<unsigned> bidx_bits; // presence implies encrypted
    std::string companion;             // "<column>__bidx"
};

struct TableConfig {
    std::string name;
    std::vector<ColumnConfig> columns;
    std::optional<std::string> key_column = std::string("id"); // nullopt = declared "none"

    const ColumnConfig* find(std::string_view column) const {
        for (const auto& c : columns)
            if (c.column == column) return &c;
        return nullptr;
    }
};

class SchemaConfig {
  public:
    static SchemaConfig load(std::string_view text);

    std::string render() const {
        std::string out;
        for (const auto& [name, t] : tables_) {
            out += "[" + name + "]\n";
            out += "encrypted = [";
            bool first = true;
            for (const auto& c : t.columns) {
                if (!first) out += ", ";
                out += c.column;
                first = false;
            }
            out += "]\n";
            for (const auto& c : t.columns)
                if (c.bidx_bits)
                    out += "blind_index." + c.column + ".bits = " + std::to_string(*c.bidx_bits) +
                           "\n";
            if (!t.key_column)
                out += "key_column = none\n";
            else if (*t.key_column != "id")
                out += "key_column = " + *t.key_column + "\n";
            out += "\n";
        }
        return out;
    }

    const TableConfig* table(std::string_view name) const {
        auto it = tables_.find(std::string(name));
        return it == tables_.end() ? nullptr : &it->second;
    }

    bool is_encrypted(std::string_view table, std::string_view column) const {
        const TableConfig* t = this->table(table);
        const ColumnConfig* c = t ? t->find(column) : nullptr;
        return c != nullptr && c->encrypted;
    }

    std::optional<BlindIndexSpec> bidx_spec(std::string_view table, std::string_view column) const {
        const TableConfig* t = this->table(table);
        const ColumnConfig* c = t ? t->find(column) : nullptr;
        if (c == nullptr || !c->bidx_bits) return std::nullopt;
        return BlindIndexSpec(std::string(table), std::string(column), *c->bidx_bits);
    }

    // True when `column` is the companion of some blind-indexed column.
    bool is_companion(std::string_view table, std::string_view column) const {
        const TableConfig* t = this->table(table);
        if (t == nullptr) return false;
        for (const auto& c : t->columns)
            if (c.bidx_bits && c.companion == column) return true;
        return false;
    }

    bool table_has_encrypted(std::string_view table) const {
        const TableConfig* t = this->table(table);
        return t != nullptr && !t->columns.empty();
    }

    // "id" unless overridden; nullopt when the table declared key_column = none.
    std::optional<std::string> key_column(std::string_view table) const {
        const TableConfig* t = this->table(table);
        if (t == nullptr) return std::string("id");
        return t->key_column;
    }

    const std::map<std::string, TableConfig>& tables() const { return tables_; }
    bool empty() const { return tables_.empty(); }

  private:
    std::map<std::string, TableConfig> tables_;
};

namespace config_detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
        s.remove_suffix(1);
    return s;
}

inline bool is_identifier(std::string_view s) {
    if (s.empty()) return false;
    if (!(std::isalpha(static_cast<unsigned char>(s[0])) || s[0] == '_')) return false;
    for (char c : s)
        if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_')) return false;
    return true;
}

[[noreturn]] inline void fail(size_t line, const std::string& what) {
    raise(errc::config_error, "schema config line " + std::to_string(line) + ": " + what);
}

} // namespace config_detail

inline SchemaConfig SchemaConfig::load(std::string_view text) {
    using namespace config_detail;
    SchemaConfig cfg;
    TableConfig* current = nullptr;
    size_t line_no = 0;
    size_t pos = 0;
    while (pos <= text.size()) {
        size_t eol = text.find('\n', pos);
        std::string_view line = text.substr(pos, eol == std::string_view::npos ? text.size() - pos
                                                                               : eol - pos);
        pos = (eol == std::string_view::npos) ? text.size() + 1 : eol + 1;
        ++line_no;
        size_t hash = line.find('#');
        if (hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;

        if (line.front() == '[') {
            if (line.back() != ']') fail(line_no, "unterminated section header");
            std::string name(trim(line.substr(1, line.size() - 2)));
            if (!is_identifier(name)) fail(line_no, "bad table name '" + name + "'");
            if (cfg.tables_.count(name)) fail(line_no, "duplicate table section '" + name + "'");
            current = &cfg.tables_[name];
            current->name = name;
            continue;
        }

        size_t eq = line.find('=');
        if (eq == std::string_view::npos) fail(line_no, "expected 'key = value'");
        std::string key(trim(line.substr(0, eq)));
        std::string value(trim(line.substr(eq + 1)));
        if (current == nullptr) fail(line_no, "directive outside a [table] section");

        if (key == "encrypted") {
            if (value.size() < 2 || value.front() != '[' || value.back() != ']')
                fail(line_no, "encrypted expects a [list]");
            if (!current->columns.empty()) fail(line_no, "duplicate encrypted list");
            std::string_view body = trim(std::string_view(value).substr(1, value.size() - 2));
            while (!body.empty()) {
                size_t comma = body.find(',');
                std::string col(trim(body.substr(0, comma)));
                body = (comma == std::string_view::npos) ? std::string_view{}
                                                         : trim(body.substr(comma + 1));
                if (!is_identifier(col)) fail(line_no, "bad column name '" + col + "'");
                if (current->find(col)) fail(line_no, "duplicate column '" + col + "'");
                ColumnConfig c;
                c.column = col;
                c.companion = default_companion_column(col);
                current->columns.push_back(std::move(c));
            }
        } else if (key.rfind("blind_index.", 0) == 0 && key.size() > 17 &&
                   key.compare(key.size() - 5, 5, ".bits") == 0) {
            std::string col = key.substr(12, key.size() - 17);
            if (!is_identifier(col)) fail(line_no, "bad column name '" + col + "'");
            ColumnConfig* c = nullptr;
            for (auto& cc : current->columns)
                if (cc.column == col) c = &cc;
            if (c == nullptr)
                fail(line_no, "blind_index on column '" + col + "' not in the encrypted list");
            if (c->bidx_bits) fail(line_no, "duplicate blind_index for '" + col + "'");
            unsigned bits = 0;
            for (char ch : value) {
                if (!std::isdigit(static_cast<unsigned char>(ch)))
                    fail(line_no, "bits must be an integer");
                bits = bits * 10 + static_cast<unsigned>(ch - '0');
                if (bits > 100000) fail(line_no, "bits out of range");
            }
            if (bits < 1 || bits > 256) fail(line_no, "bits must be in 1..256");
            c->bidx_bits = bits;
        } else if (key == "key_column") {
            if (value == "none")
                current->key_column = std::nullopt;
            else if (is_identifier(value))
                current->key_column = value;
            else
                fail(line_no, "key_column expects an identifier or 'none'");
        } else {
            fail(line_no, "unknown directive '" + key + "'");
        }
    }

    // Companion names must not clash with declared real columns.
    for (auto& [name, t] : cfg.tables_) {
        for (const auto& c : t.columns) {
            if (c.bidx_bits && t.find(c.companion) != nullptr)
                raise(errc::config_error,
                      "companion column '" + c.companion + "' clashes in table '" + name + "'");
        }
    }
    return cfg;
}

} // namespace blindex
