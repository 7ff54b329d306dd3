#pragma once

// Newline-delimited JSON over TCP: the wire protocol spoken between the
// proxy and the reference database, and between clients and the proxy's
// front door. One JSON object per LF-terminated line, UTF-8.
//
// Requests:  {"type":"query","sql":"..."}
//            {"type":"begin"} / {"type":"commit"} / {"type":"rollback"}
//            {"type":"stats"}                  (proxy front door only)
// Responses: {"type":"columns","names":[...]}
//            {"type":"row","values":[...]}     (strings or nulls)
//            {"type":"done","affected":N}
//            {"type":"error","code":"...","message":"..."}
//            {"type":"stats", ...counters...}
//
// A query response is columns, zero or more rows, then done — or error at
// any point, which terminates the result. Requests on one connection are
// strictly sequential.

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "blindex/backend.hpp"
#include "blindex/error.hpp"
#include "blindex/net.hpp"

namespace blindex::wire {

using json = nlohmann::json;

inline void send_msg(const net::Socket& sock, const json& msg) {
    sock.send_all(msg.dump() + "\n");
}

inline void send_error(const net::Socket& sock, const BxError& e) {
    send_msg(sock, json{{"type", "error"}, {"code", e.code()}, {"message", e.what()}});
}

inline json parse_msg(const std::string& line) {
    json msg = json::parse(line, nullptr, /*allow_exceptions=*/false);
    if (msg.is_discarded() || !msg.is_object() || !msg.contains("type") ||
        !msg["type"].is_string())
        raise(errc::protocol_error, "malformed wire message");
    return msg;
}

inline backend::Value value_from_json(const json& v) {
    if (v.is_null()) return std::nullopt;
    if (v.is_string()) return v.get<std::string>();
    return v.dump();
}

inline json value_to_json(const backend::Value& v) {
    if (!v) return nullptr;
    return *v;
}

// ---------------------------------------------------------------------------
// Server side
// ---------------------------------------------------------------------------

// Streams one query's results; errors terminate the result in-band.
inline void stream_query_result(const net::Socket& sock, backend::SqlEndpoint& ep,
                                const std::string& sql) {
    backend::ResultPtr stream;
    try {
        stream = ep.execute(sql);
    } catch (const BxError& e) {
        send_error(sock, e);
        return;
    }
    try {
        send_msg(sock, json{{"type", "columns"}, {"names", stream->columns()}});
        while (auto row = stream->next()) {
            json values = json::array();
            for (const auto& v : *row) values.push_back(value_to_json(v));
            send_msg(sock, json{{"type", "row"}, {"values", std::move(values)}});
        }
        send_msg(sock, json{{"type", "done"}, {"affected", stream->affected()}});
    } catch (const BxError& e) {
        send_error(sock, e);
    }
}

// Per-connection loop for a plain SQL endpoint (the reference database
// server). Returns when the peer disconnects.
inline void serve_endpoint_connection(const net::Socket& sock, backend::SqlEndpoint& ep) {
    net::LineReader reader(sock);
    std::string line;
    while (reader.next_line(line)) {
        if (line.empty()) continue;
        try {
            json msg = parse_msg(line);
            std::string type = msg["type"].get<std::string>();
            if (type == "query") {
                if (!msg.contains("sql") || !msg["sql"].is_string())
                    raise(errc::protocol_error, "query message needs an sql string");
                stream_query_result(sock, ep, msg["sql"].get<std::string>());
            } else if (type == "begin") {
                ep.begin();
                send_msg(sock, json{{"type", "done"}, {"affected", 0}});
            } else if (type == "commit") {
                ep.commit();
                send_msg(sock, json{{"type", "done"}, {"affected", 0}});
            } else if (type == "rollback") {
                ep.rollback();
                send_msg(sock, json{{"type", "done"}, {"affected", 0}});
            } else {
                raise(errc::protocol_error, "unknown message type: " + type);
            }
        } catch (const BxError& e) {
            send_error(sock, e);
        }
    }
}

// Runs a SQL endpoint per connection — the whole reference database server.
inline std::unique_ptr<net::Server> serve_endpoint(net::Listener listener,
                                                   backend::EndpointFactory factory) {
    auto server = std::make_unique<net::Server>(
        std::move(listener), [factory = std::move(factory)](const net::Socket& sock) {
            backend::EndpointPtr ep = factory();
            serve_endpoint_connection(sock, *ep);
        });
    server->start();
    return server;
}

// ---------------------------------------------------------------------------
// Client side
// ---------------------------------------------------------------------------

class WireEndpoint;

// Lazily reads row messages; the result must be drained or destroyed before
// the next request on the same connection.
class WireResultStream : public backend::ResultStream {
  public:
    WireResultStream(WireEndpoint* ep, std::vector<std::string> columns)
        : ep_(ep), columns_(std::move(columns)) {}

    ~WireResultStream() override { drain_quietly(); }

    const std::vector<std::string>& columns() override { return columns_; }
    uint64_t affected() const override { return affected_; }

    std::optional<backend::Row> next() override;

    void drain_quietly() noexcept {
        if (finished_) return;
        try {
            while (next()) {
            }
        } catch (...) {
            finished_ = true;
        }
    }

  private:
    friend class WireEndpoint;
    WireEndpoint* ep_;
    std::vector<std::string> columns_;
    uint64_t affected_ = 0;
    bool finished_ = false;
};

class WireEndpoint : public backend::SqlEndpoint {
  public:
    explicit WireEndpoint(net::Socket sock) : sock_(std::move(sock)), reader_(sock_) {}

    static std::unique_ptr<WireEndpoint> connect(std::string_view addr) {
        return std::make_unique<WireEndpoint>(net::connect_tcp(addr));
    }

    backend::ResultPtr execute(const std::string& sql) override {
        finish_active();
        send_msg(sock_, json{{"type", "query"}, {"sql", sql}});
        json first = read_msg();
        std::string type = first["type"].get<std::string>();
        if (type == "error") throw_error(first);
        if (type == "done") // degenerate but legal: no columns, no rows
            return backend::MemoryResult::of_affected(first.value("affected", uint64_t{0}));
        if (type != "columns" || !first.contains("names") || !first["names"].is_array())
            raise(errc::protocol_error, "expected a columns message");
        std::vector<std::string> names;
        for (const auto& n : first["names"]) names.push_back(n.get<std::string>());
        auto stream = std::make_unique<WireResultStream>(this, std::move(names));
        active_ = stream.get();
        return stream;
    }

    void begin() override { simple_request("begin"); }
    void commit() override { simple_request("commit"); }
    void rollback() override { simple_request("rollback"); }

    // Raw message exchange for protocol extensions (the proxy's stats call).
    json request(const json& msg) {
        finish_active();
        send_msg(sock_, msg);
        return read_msg();
    }

  private:
    friend class WireResultStream;

    void simple_request(const std::string& type) {
        json resp = request(json{{"type", type}});
        std::string t = resp["type"].get<std::string>();
        if (t == "error") throw_error(resp);
        if (t != "done") raise(errc::protocol_error, "expected done for " + type);
    }

    [[noreturn]] static void throw_error(const json& msg) {
        throw BxError(msg.value("code", std::string(errc::backend_error)),
                      msg.value("message", std::string("backend error")));
    }

    json read_msg() {
        std::string line;
        do {
            if (!reader_.next_line(line))
                raise(errc::io_error, "connection closed by peer");
        } while (line.empty());
        return parse_msg(line);
    }

    void finish_active() {
        if (active_ != nullptr) {
            WireResultStream* s = active_;
            active_ = nullptr;
            s->drain_quietly();
        }
    }

    net::Socket sock_;
    net::LineReader reader_;
    WireResultStream* active_ = nullptr;
};

inline std::optional<backend::Row> WireResultStream::next() {
    if (finished_) return std::nullopt;
    json msg = ep_->read_msg();
    std::string type = msg["type"].get<std::string>();
    if (type == "row") {
        if (!msg.contains("values") || !msg["values"].is_array())
            raise(errc::protocol_error, "row message needs a values array");
        backend::Row row;
        for (const auto& v : msg["values"]) row.push_back(value_from_json(v));
        return row;
    }
    finished_ = true;
    if (ep_->active_ == this) ep_->active_ = nullptr;
    if (type == "done") {
        affected_ = msg.value("affected", uint64_t{0});
        return std::nullopt;
    }
    if (type == "error") WireEndpoint::throw_error(msg);
    raise(errc::protocol_error, "unexpected message in result stream: " + type);
}

// Connects lazily per use; suits one-endpoint-per-connection callers.
inline backend::EndpointFactory wire_factory(std::string addr) {
    return [addr] { return WireEndpoint::connect(addr); };
}

} // namespace blindex::wire
