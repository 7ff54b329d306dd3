#pragma once

// Database-side abstractions. A SqlEndpoint executes statements and hands
// back pull-based result streams; the proxy owns one endpoint per client
// connection (obtained from an EndpointFactory), so row streaming never
// interleaves across connections. Cell values travel as optional strings —
// absent means SQL NULL.

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace blindex::backend {

using Value = std::optional<std::string>;
using Row = std::vector<Value>;

// Streaming result: columns are known up front, rows are pulled one at a
// time (never buffered whole), affected() is meaningful once next() has
// returned nullopt. Stream errors surface as thrown BxError.
class ResultStream {
  public:
    virtual ~ResultStream() = default;
    virtual const std::vector<std::string>& columns() = 0;
    virtual std::optional<Row> next() = 0;
    virtual uint64_t affected() const = 0;
};

using ResultPtr = std::unique_ptr<ResultStream>;

class SqlEndpoint {
  public:
    virtual ~SqlEndpoint() = default;
    virtual ResultPtr execute(const std::string& sql) = 0;
    virtual void begin() = 0;
    virtual void commit() = 0;
    virtual void rollback() = 0;
};

using EndpointPtr = std::unique_ptr<SqlEndpoint>;
using EndpointFactory = std::function<EndpointPtr()>;

// Convenience fully-buffered view for tests and small administrative
// queries; production paths stay streaming.
struct BufferedResult {
    std::vector<std::string> columns;
    std::vector<Row> rows;
    uint64_t affected = 0;
};

// A fully materialized result served through the stream interface; for
// small result sets (procedure responses, DML acknowledgements).
class MemoryResult : public ResultStream {
  public:
    MemoryResult() = default;
    MemoryResult(std::vector<std::string> columns, std::vector<Row> rows, uint64_t affected = 0)
        : columns_(std::move(columns)), rows_(std::move(rows)), affected_(affected) {}

    static ResultPtr of_affected(uint64_t n) {
        return std::make_unique<MemoryResult>(std::vector<std::string>{}, std::vector<Row>{}, n);
    }

    static ResultPtr single(std::string column, Value value) {
        return std::make_unique<MemoryResult>(std::vector<std::string>{std::move(column)},
                                              std::vector<Row>{Row{std::move(value)}}, 0);
    }

    const std::vector<std::string>& columns() override { return columns_; }
    uint64_t affected() const override { return affected_; }

    std::optional<Row> next() override {
        if (pos_ >= rows_.size()) return std::nullopt;
        return std::move(rows_[pos_++]);
    }

  private:
    std::vector<std::string> columns_;
    std::vector<Row> rows_;
    uint64_t affected_ = 0;
    size_t pos_ = 0;
};

inline BufferedResult drain(ResultStream& stream) {
    BufferedResult out;
    out.columns = stream.columns();
    while (auto row = stream.next()) out.rows.push_back(std::move(*row));
    out.affected = stream.affected();
    return out;
}

inline BufferedResult run(SqlEndpoint& ep, const std::string& sql) {
    ResultPtr r = ep.execute(sql);
    return drain(*r);
}

} // namespace blindex::backend
