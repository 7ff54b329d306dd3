#pragma once

// In-memory reference database: executes the same SQL subset the proxy
// understands, deterministically, with an ordered query log for tests.
// Tables are stored as immutable snapshots behind shared_ptr: readers
// stream from the snapshot they grabbed without holding locks, writers
// copy-and-swap under a global single-writer lock. Transactions snapshot
// the whole table map and hold the writer lock until commit/rollback,
// which is the simplest semantics that makes the two-step UPDATE split
// atomic.

#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "blindex/backend.hpp"
#include "blindex/error.hpp"
#include "blindex/sql/parser.hpp"

namespace blindex::refdb {

using backend::Row;
using backend::Value;

struct TableData {
    std::vector<std::string> columns;
    std::vector<std::string> types; // uppercased declared types, same order
    std::optional<size_t> primary_key;
    std::vector<Row> rows;

    std::optional<size_t> column_index(std::string_view name) const {
        for (size_t i = 0; i < columns.size(); ++i)
            if (columns[i] == name) return i;
        return std::nullopt;
    }
};

using TableSnapshot = std::shared_ptr<const TableData>;
using Catalog = std::map<std::string, TableSnapshot>;

namespace eval {

inline bool parse_number(const std::string& s, double& out) {
    if (s.empty()) return false;
    size_t pos = 0;
    try {
        out = std::stod(s, &pos);
    } catch (...) {
        return false;
    }
    return pos == s.size();
}

inline std::string format_number(double v) {
    if (std::isfinite(v) && v == std::floor(v) && std::abs(v) < 1e15) {
        std::ostringstream os;
        os << static_cast<long long>(v);
        return os.str();
    }
    std::ostringstream os;
    os.precision(15);
    os << v;
    return os.str();
}

// Three-way compare under SQL-ish typing: numeric when both sides are
// numbers, byte-wise otherwise. Returns nullopt for NULL involvement.
inline std::optional<int> compare(const Value& cell, const sql::Literal& lit) {
    if (!cell.has_value() || lit.is_null()) return std::nullopt;
    double a = 0, b = 0;
    bool lit_numeric = lit.kind == sql::LiteralKind::Integer || lit.kind == sql::LiteralKind::Float;
    if (lit_numeric && parse_number(*cell, a) && parse_number(lit.text, b)) {
        if (a < b) return -1;
        if (a > b) return 1;
        return 0;
    }
    int c = cell->compare(lit.text);
    return c < 0 ? -1 : c > 0 ? 1 : 0;
}

inline bool matches(const Value& cell, const sql::Predicate& p) {
    if (p.op == sql::CompareOp::In) {
        for (const auto& v : p.values) {
            auto c = compare(cell, v);
            if (c.has_value() && *c == 0) return true;
        }
        return false;
    }
    if (p.op == sql::CompareOp::Like)
        raise(errc::unsupported_statement, "LIKE is not supported by the reference backend");
    auto c = compare(cell, p.values.at(0));
    if (!c.has_value()) return false;
    switch (p.op) {
    case sql::CompareOp::Eq: return *c == 0;
    case sql::CompareOp::Ne: return *c != 0;
    case sql::CompareOp::Lt: return *c < 0;
    case sql::CompareOp::Le: return *c <= 0;
    case sql::CompareOp::Gt: return *c > 0;
    case sql::CompareOp::Ge: return *c >= 0;
    default: return false;
    }
}

inline bool row_matches(const TableData& table, const Row& row, const sql::Statement& stmt) {
    for (const auto& p : stmt.where) {
        auto idx = table.column_index(p.column);
        if (!idx) raise(errc::unknown_column, "unknown column '" + p.column + "'");
        if (!matches(row[*idx], p)) return false;
    }
    return true;
}

} // namespace eval

class Engine;

namespace detail {

class VectorStream : public backend::ResultStream {
  public:
    VectorStream(std::vector<std::string> columns, std::vector<Row> rows, uint64_t affected)
        : columns_(std::move(columns)), rows_(std::move(rows)), affected_(affected) {}

    const std::vector<std::string>& columns() override { return columns_; }
    std::optional<Row> next() override {
        if (pos_ >= rows_.size()) return std::nullopt;
        return std::move(rows_[pos_++]);
    }
    uint64_t affected() const override { return affected_; }

  private:
    std::vector<std::string> columns_;
    std::vector<Row> rows_;
    size_t pos_ = 0;
    uint64_t affected_ = 0;
};

// Lazy scan over one table snapshot: filtering, projection, and paging run
// per pulled row, so large results never materialize inside the engine.
class ScanStream : public backend::ResultStream {
  public:
    ScanStream(TableSnapshot snapshot, sql::Statement stmt, std::vector<std::string> columns,
               std::vector<std::optional<size_t>> mapping)
        : snapshot_(std::move(snapshot)), stmt_(std::move(stmt)), columns_(std::move(columns)),
          mapping_(std::move(mapping)) {}

    const std::vector<std::string>& columns() override { return columns_; }

    std::optional<Row> next() override {
        const auto& rows = snapshot_->rows;
        while (pos_ < rows.size()) {
            const Row& src = rows[pos_++];
            if (!eval::row_matches(*snapshot_, src, stmt_)) continue;
            if (skipped_ < stmt_.offset.value_or(0)) {
                ++skipped_;
                continue;
            }
            if (stmt_.limit && emitted_ >= *stmt_.limit) return std::nullopt;
            ++emitted_;
            Row out;
            out.reserve(mapping_.size());
            for (const auto& m : mapping_) out.push_back(m ? src[*m] : Value{});
            return out;
        }
        return std::nullopt;
    }

    uint64_t affected() const override { return 0; }

  private:
    TableSnapshot snapshot_;
    sql::Statement stmt_;
    std::vector<std::string> columns_;
    std::vector<std::optional<size_t>> mapping_;
    size_t pos_ = 0;
    uint64_t skipped_ = 0;
    uint64_t emitted_ = 0;
};

} // namespace detail

// Shared engine state; Connection objects (below) are the SqlEndpoint
// implementations handed to callers.
class Engine {
  public:
    std::vector<std::string> query_log() const {
        std::lock_guard lk(log_mu_);
        return query_log_;
    }
    void clear_query_log() {
        std::lock_guard lk(log_mu_);
        query_log_.clear();
    }

    // Byte-scan helper for secrecy tests: all cell bytes in all tables.
    std::string dump_storage() const {
        Catalog cat;
        {
            std::lock_guard lk(meta_mu_);
            cat = tables_;
        }
        std::string out;
        for (const auto& [name, table] : cat) {
            out += "== " + name + "\n";
            for (const auto& col : table->columns) out += col + "|";
            out += "\n";
            for (const auto& row : table->rows) {
                for (const auto& cell : row) out += (cell ? *cell : "NULL") + "|";
                out += "\n";
            }
        }
        return out;
    }

  private:
    friend class Connection;

    void log(const std::string& entry) {
        std::lock_guard lk(log_mu_);
        query_log_.push_back(entry);
    }

    Catalog snapshot_catalog() const {
        std::lock_guard lk(meta_mu_);
        return tables_;
    }

    mutable std::mutex meta_mu_; // guards tables_ map
    std::mutex write_mu_;        // global single-writer / transaction lock
    Catalog tables_;
    mutable std::mutex log_mu_;
    std::vector<std::string> query_log_;
};

class Connection : public backend::SqlEndpoint {
  public:
    explicit Connection(std::shared_ptr<Engine> engine) : engine_(std::move(engine)) {}

    ~Connection() override {
        if (in_tx_) rollback_locked("ROLLBACK");
    }

    backend::ResultPtr execute(const std::string& sql) override {
        engine_->log(sql);
        sql::Statement stmt = sql::parse(sql);
        switch (stmt.kind) {
        case sql::StatementKind::Select: return exec_select(std::move(stmt));
        case sql::StatementKind::Insert: return exec_insert(stmt);
        case sql::StatementKind::Update: return exec_update(stmt);
        case sql::StatementKind::Delete: return exec_delete(stmt);
        case sql::StatementKind::CreateTable: return exec_create(stmt);
        case sql::StatementKind::DropTable: return exec_drop(stmt);
        case sql::StatementKind::Begin: begin_nolog(); return done_result(0);
        case sql::StatementKind::Commit: commit_nolog(); return done_result(0);
        case sql::StatementKind::Rollback: rollback_nolog(); return done_result(0);
        case sql::StatementKind::Other:
            raise(errc::unsupported_statement, "statement not supported by the reference backend");
        }
        raise(errc::unsupported_statement, "statement not supported by the reference backend");
    }

    void begin() override {
        engine_->log("BEGIN");
        begin_nolog();
    }
    void commit() override {
        engine_->log("COMMIT");
        commit_nolog();
    }
    void rollback() override {
        engine_->log("ROLLBACK");
        rollback_nolog();
    }

  private:
    backend::ResultPtr done_result(uint64_t affected) {
        return std::make_unique<detail::VectorStream>(std::vector<std::string>{},
                                                      std::vector<Row>{}, affected);
    }

    void begin_nolog() {
        if (in_tx_) raise(errc::backend_error, "transaction already open");
        engine_->write_mu_.lock();
        in_tx_ = true;
        tx_snapshot_ = engine_->snapshot_catalog();
    }

    void commit_nolog() {
        if (!in_tx_) raise(errc::backend_error, "no open transaction");
        in_tx_ = false;
        tx_snapshot_.clear();
        engine_->write_mu_.unlock();
    }

    void rollback_nolog() {
        if (!in_tx_) raise(errc::backend_error, "no open transaction");
        rollback_locked(nullptr);
    }

    void rollback_locked(const char*) {
        {
            std::lock_guard lk(engine_->meta_mu_);
            engine_->tables_ = tx_snapshot_;
        }
        in_tx_ = false;
        tx_snapshot_.clear();
        engine_->write_mu_.unlock();
    }

    // Write statements outside a transaction take the writer lock for the
    // single statement, so they cannot interleave with an open transaction.
    class WriteGuard {
      public:
        WriteGuard(Connection& c) : conn_(c), owned_(!c.in_tx_) {
            if (owned_) conn_.engine_->write_mu_.lock();
        }
        ~WriteGuard() {
            if (owned_) conn_.engine_->write_mu_.unlock();
        }

      private:
        Connection& conn_;
        bool owned_;
    };

    TableSnapshot find_table(const std::string& name) {
        std::lock_guard lk(engine_->meta_mu_);
        auto it = engine_->tables_.find(name);
        if (it == engine_->tables_.end())
            raise(errc::unknown_table, "unknown table '" + name + "'");
        return it->second;
    }

    void store_table(const std::string& name, TableSnapshot table) {
        std::lock_guard lk(engine_->meta_mu_);
        engine_->tables_[name] = std::move(table);
    }

    // ---- statement execution --------------------------------------------

    backend::ResultPtr exec_create(const sql::Statement& stmt) {
        WriteGuard guard(*this);
        {
            std::lock_guard lk(engine_->meta_mu_);
            if (engine_->tables_.count(stmt.table)) {
                if (stmt.if_not_exists) return done_result(0);
                raise(errc::backend_error, "table '" + stmt.table + "' already exists");
            }
        }
        auto table = std::make_shared<TableData>();
        for (const auto& def : stmt.column_defs) {
            if (table->column_index(def.name))
                raise(errc::backend_error, "duplicate column '" + def.name + "'");
            table->columns.push_back(def.name);
            table->types.push_back(def.type_text);
            if (def.primary_key) {
                if (table->primary_key)
                    raise(errc::backend_error, "multiple primary keys");
                table->primary_key = table->columns.size() - 1;
            }
        }
        store_table(stmt.table, std::move(table));
        return done_result(0);
    }

    backend::ResultPtr exec_drop(const sql::Statement& stmt) {
        WriteGuard guard(*this);
        std::lock_guard lk(engine_->meta_mu_);
        if (engine_->tables_.erase(stmt.table) == 0)
            raise(errc::unknown_table, "unknown table '" + stmt.table + "'");
        return done_result(0);
    }

    backend::ResultPtr exec_insert(const sql::Statement& stmt) {
        WriteGuard guard(*this);
        TableSnapshot current = find_table(stmt.table);
        auto table = std::make_shared<TableData>(*current);

        std::vector<size_t> targets;
        for (const auto& col : stmt.insert_columns) {
            auto idx = table->column_index(col);
            if (!idx) raise(errc::unknown_column, "unknown column '" + col + "'");
            targets.push_back(*idx);
        }

        std::set<std::string> pk_seen;
        if (table->primary_key) {
            for (const auto& row : table->rows)
                if (row[*table->primary_key]) pk_seen.insert(*row[*table->primary_key]);
        }

        for (const auto& values : stmt.insert_rows) {
            Row row(table->columns.size());
            for (size_t i = 0; i < targets.size(); ++i) {
                const sql::Literal& lit = values[i];
                if (!lit.is_null()) row[targets[i]] = lit.text;
            }
            if (table->primary_key) {
                const Value& pk = row[*table->primary_key];
                if (!pk) raise(errc::duplicate_key, "primary key must not be NULL");
                if (!pk_seen.insert(*pk).second)
                    raise(errc::duplicate_key, "duplicate primary key '" + *pk + "'");
            }
            table->rows.push_back(std::move(row));
        }
        store_table(stmt.table, std::move(table));
        return done_result(stmt.insert_rows.size());
    }

    backend::ResultPtr exec_update(const sql::Statement& stmt) {
        WriteGuard guard(*this);
        TableSnapshot current = find_table(stmt.table);
        auto table = std::make_shared<TableData>(*current);

        std::vector<std::pair<size_t, sql::Literal>> sets;
        for (const auto& [col, lit] : stmt.assignments) {
            auto idx = table->column_index(col);
            if (!idx) raise(errc::unknown_column, "unknown column '" + col + "'");
            sets.emplace_back(*idx, lit);
        }

        uint64_t affected = 0;
        for (auto& row : table->rows) {
            if (!eval::row_matches(*table, row, stmt)) continue;
            for (const auto& [idx, lit] : sets)
                row[idx] = lit.is_null() ? Value{} : Value{lit.text};
            ++affected;
        }

        if (table->primary_key) {
            std::set<std::string> seen;
            for (const auto& row : table->rows) {
                const Value& pk = row[*table->primary_key];
                if (!pk) raise(errc::duplicate_key, "primary key must not be NULL");
                if (!seen.insert(*pk).second)
                    raise(errc::duplicate_key, "duplicate primary key '" + *pk + "'");
            }
        }
        store_table(stmt.table, std::move(table));
        return done_result(affected);
    }

    backend::ResultPtr exec_delete(const sql::Statement& stmt) {
        WriteGuard guard(*this);
        TableSnapshot current = find_table(stmt.table);
        auto table = std::make_shared<TableData>(*current);
        uint64_t affected = 0;
        std::vector<Row> kept;
        kept.reserve(table->rows.size());
        for (auto& row : table->rows) {
            if (eval::row_matches(*table, row, stmt)) ++affected;
            else kept.push_back(std::move(row));
        }
        table->rows = std::move(kept);
        store_table(stmt.table, std::move(table));
        return done_result(affected);
    }

    backend::ResultPtr exec_select(sql::Statement stmt) {
        // SELECT without FROM: one row of the literal projection.
        if (stmt.table.empty()) {
            std::vector<std::string> cols;
            Row row;
            for (const auto& item : stmt.projection) {
                if (item.kind != sql::SelectItem::Kind::LiteralValue)
                    raise(errc::unsupported_statement, "SELECT without FROM expects literals");
                cols.push_back(sql::render(item.literal));
                row.push_back(item.literal.is_null() ? Value{} : Value{item.literal.text});
            }
            std::vector<Row> rows;
            rows.push_back(std::move(row));
            return std::make_unique<detail::VectorStream>(std::move(cols), std::move(rows), 0);
        }

        TableSnapshot snapshot = find_table(stmt.table);
        if (stmt.has_aggregate()) return exec_aggregate(*snapshot, stmt);

        std::vector<std::string> cols;
        std::vector<std::optional<size_t>> mapping;
        for (const auto& item : stmt.projection) {
            switch (item.kind) {
            case sql::SelectItem::Kind::Star:
                for (size_t i = 0; i < snapshot->columns.size(); ++i) {
                    cols.push_back(snapshot->columns[i]);
                    mapping.push_back(i);
                }
                break;
            case sql::SelectItem::Kind::Column: {
                auto idx = snapshot->column_index(item.column);
                if (!idx) raise(errc::unknown_column, "unknown column '" + item.column + "'");
                cols.push_back(item.column);
                mapping.push_back(*idx);
                break;
            }
            default:
                raise(errc::unsupported_statement, "unsupported projection item");
            }
        }
        return std::make_unique<detail::ScanStream>(std::move(snapshot), std::move(stmt),
                                                    std::move(cols), std::move(mapping));
    }

    backend::ResultPtr exec_aggregate(const TableData& table, const sql::Statement& stmt) {
        for (const auto& item : stmt.projection)
            if (item.kind != sql::SelectItem::Kind::Aggregate)
                raise(errc::unsupported_statement, "cannot mix aggregates and plain columns");

        struct Acc {
            uint64_t count = 0;
            double sum = 0;
            bool numeric = true;
            std::optional<std::string> min_s, max_s;
            std::optional<double> min_n, max_n;
        };
        std::vector<Acc> accs(stmt.projection.size());
        std::vector<std::optional<size_t>> arg(stmt.projection.size());
        for (size_t i = 0; i < stmt.projection.size(); ++i) {
            const auto& item = stmt.projection[i];
            if (item.func != sql::AggFunc::CountStar) {
                auto idx = table.column_index(item.column);
                if (!idx) raise(errc::unknown_column, "unknown column '" + item.column + "'");
                arg[i] = *idx;
            }
        }

        uint64_t matched = 0;
        for (const auto& row : table.rows) {
            if (!eval::row_matches(table, row, stmt)) continue;
            ++matched;
            for (size_t i = 0; i < accs.size(); ++i) {
                if (!arg[i]) continue; // COUNT(*)
                const Value& cell = row[*arg[i]];
                if (!cell) continue;
                Acc& a = accs[i];
                ++a.count;
                double n = 0;
                if (eval::parse_number(*cell, n)) {
                    a.sum += n;
                    if (!a.min_n || n < *a.min_n) a.min_n = n;
                    if (!a.max_n || n > *a.max_n) a.max_n = n;
                } else {
                    a.numeric = false;
                }
                if (!a.min_s || *cell < *a.min_s) a.min_s = *cell;
                if (!a.max_s || *cell > *a.max_s) a.max_s = *cell;
            }
        }

        std::vector<std::string> cols;
        Row row;
        for (size_t i = 0; i < stmt.projection.size(); ++i) {
            const auto& item = stmt.projection[i];
            cols.push_back(sql::render(item));
            const Acc& a = accs[i];
            switch (item.func) {
            case sql::AggFunc::CountStar: row.push_back(eval::format_number(double(matched))); break;
            case sql::AggFunc::Count: row.push_back(eval::format_number(double(a.count))); break;
            case sql::AggFunc::Sum:
                if (a.count == 0) row.push_back(Value{});
                else if (!a.numeric) raise(errc::backend_error, "SUM over non-numeric column");
                else row.push_back(eval::format_number(a.sum));
                break;
            case sql::AggFunc::Avg:
                if (a.count == 0) row.push_back(Value{});
                else if (!a.numeric) raise(errc::backend_error, "AVG over non-numeric column");
                else row.push_back(eval::format_number(a.sum / double(a.count)));
                break;
            case sql::AggFunc::Min:
                if (a.count == 0) row.push_back(Value{});
                else if (a.numeric) row.push_back(eval::format_number(*a.min_n));
                else row.push_back(*a.min_s);
                break;
            case sql::AggFunc::Max:
                if (a.count == 0) row.push_back(Value{});
                else if (a.numeric) row.push_back(eval::format_number(*a.max_n));
                else row.push_back(*a.max_s);
                break;
            case sql::AggFunc::None: break;
            }
        }
        // LIMIT/OFFSET page the (single-row) result, not the scanned input.
        std::vector<Row> rows;
        if (stmt.offset.value_or(0) == 0 && stmt.limit.value_or(1) >= 1)
            rows.push_back(std::move(row));
        return std::make_unique<detail::VectorStream>(std::move(cols), std::move(rows), 0);
    }

    std::shared_ptr<Engine> engine_;
    bool in_tx_ = false;
    Catalog tx_snapshot_;
};

inline backend::EndpointFactory make_factory(std::shared_ptr<Engine> engine) {
    return [engine]() -> backend::EndpointPtr { return std::make_unique<Connection>(engine); };
}

} // namespace blindex::refdb
