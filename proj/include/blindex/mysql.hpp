#pragma once

// Classic MySQL protocol adapter, both directions:
//   * MysqlEndpoint — a SqlEndpoint that speaks the client side of the
//     protocol to a real MySQL-compatible server (handshake v10,
//     mysql_native_password, COM_QUERY text resultsets).
//   * serve_mysql_connection / serve_mysql — the server personality, so
//     stock MySQL clients can connect to the proxy's front door.
//
// Only the text protocol is implemented: every value travels as a string
// or NULL, which is exactly the shape the rest of the system uses. EOF
// packets delimit resultsets (CLIENT_DEPRECATE_EOF is not negotiated),
// and multi-statement, prepared statements, and compression are not.

#include <cstdint>
#include <cstring>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <openssl/evp.h>

#include "blindex/backend.hpp"
#include "blindex/bytes.hpp"
#include "blindex/crypto.hpp"
#include "blindex/error.hpp"
#include "blindex/net.hpp"

namespace blindex::mysql {

// Capability bits this implementation understands.
inline constexpr uint32_t kClientLongPassword = 0x00000001;
inline constexpr uint32_t kClientProtocol41 = 0x00000200;
inline constexpr uint32_t kClientTransactions = 0x00002000;
inline constexpr uint32_t kClientSecureConnection = 0x00008000;
inline constexpr uint32_t kClientPluginAuth = 0x00080000;

inline constexpr uint8_t kComQuit = 0x01;
inline constexpr uint8_t kComInitDb = 0x02;
inline constexpr uint8_t kComQuery = 0x03;
inline constexpr uint8_t kComPing = 0x0e;

inline constexpr const char* kAuthPlugin = "mysql_native_password";

// ---------------------------------------------------------------------------
// Primitive encoding
// ---------------------------------------------------------------------------

inline void put_u16le(Bytes& out, uint16_t v) {
    out.push_back(static_cast<uint8_t>(v));
    out.push_back(static_cast<uint8_t>(v >> 8));
}

inline void put_u24le(Bytes& out, uint32_t v) {
    out.push_back(static_cast<uint8_t>(v));
    out.push_back(static_cast<uint8_t>(v >> 8));
    out.push_back(static_cast<uint8_t>(v >> 16));
}

inline void put_u32le(Bytes& out, uint32_t v) {
    put_u24le(out, v);
    out.push_back(static_cast<uint8_t>(v >> 24));
}

inline void put_lenenc_int(Bytes& out, uint64_t v) {
    if (v < 0xfb) {
        out.push_back(static_cast<uint8_t>(v));
    } else if (v <= 0xFFFF) {
        out.push_back(0xfc);
        put_u16le(out, static_cast<uint16_t>(v));
    } else if (v <= 0xFFFFFF) {
        out.push_back(0xfd);
        put_u24le(out, static_cast<uint32_t>(v));
    } else {
        out.push_back(0xfe);
        put_u32le(out, static_cast<uint32_t>(v));
        put_u32le(out, static_cast<uint32_t>(v >> 32));
    }
}

inline void put_lenenc_string(Bytes& out, std::string_view s) {
    put_lenenc_int(out, s.size());
    out.insert(out.end(), s.begin(), s.end());
}

inline void put_nul_string(Bytes& out, std::string_view s) {
    out.insert(out.end(), s.begin(), s.end());
    out.push_back(0);
}

// Sequential reader over one packet's payload.
struct Reader {
    BytesView data;
    size_t pos = 0;

    void need(size_t n) const {
        if (pos + n > data.size()) raise(errc::protocol_error, "truncated mysql packet");
    }
    uint8_t u8() {
        need(1);
        return data[pos++];
    }
    uint16_t u16() {
        need(2);
        uint16_t v = static_cast<uint16_t>(data[pos] | (data[pos + 1] << 8));
        pos += 2;
        return v;
    }
    uint32_t u24() {
        need(3);
        uint32_t v = static_cast<uint32_t>(data[pos]) | (static_cast<uint32_t>(data[pos + 1]) << 8) |
                     (static_cast<uint32_t>(data[pos + 2]) << 16);
        pos += 3;
        return v;
    }
    uint32_t u32() {
        uint32_t lo = u24();
        return lo | (static_cast<uint32_t>(u8()) << 24);
    }
    uint64_t lenenc_int() {
        uint8_t first = u8();
        if (first < 0xfb) return first;
        if (first == 0xfc) return u16();
        if (first == 0xfd) return u24();
        if (first == 0xfe) {
            uint64_t lo = u32();
            return lo | (static_cast<uint64_t>(u32()) << 32);
        }
        raise(errc::protocol_error, "invalid length-encoded integer");
    }
    Bytes bytes(size_t n) {
        need(n);
        Bytes out(data.begin() + static_cast<long>(pos), data.begin() + static_cast<long>(pos + n));
        pos += n;
        return out;
    }
    std::string nul_string() {
        size_t end = pos;
        while (end < data.size() && data[end] != 0) ++end;
        if (end == data.size()) raise(errc::protocol_error, "unterminated string");
        std::string s(reinterpret_cast<const char*>(data.data() + pos), end - pos);
        pos = end + 1;
        return s;
    }
    std::string lenenc_string() {
        size_t n = static_cast<size_t>(lenenc_int());
        need(n);
        std::string s(reinterpret_cast<const char*>(data.data() + pos), n);
        pos += n;
        return s;
    }
    size_t remaining() const { return data.size() - pos; }
    std::string rest() {
        std::string s(reinterpret_cast<const char*>(data.data() + pos), remaining());
        pos = data.size();
        return s;
    }
};

// ---------------------------------------------------------------------------
// Packet framing: 3-byte little-endian length, 1-byte sequence id.
// ---------------------------------------------------------------------------

class PacketConn {
  public:
    explicit PacketConn(net::Socket&& sock) : owned_(std::move(sock)), sock_(&owned_) {}
    explicit PacketConn(const net::Socket& sock) : sock_(&sock) {} // borrows

    const net::Socket& socket() const { return *sock_; }

    void reset_seq() { seq_ = 0; }

    // False on clean EOF at a packet boundary.
    bool read_packet(Bytes& payload) {
        uint8_t header[4];
        size_t got = 0;
        while (got < 4) {
            size_t n = sock_->recv_some(reinterpret_cast<char*>(header) + got, 4 - got);
            if (n == 0) {
                if (got == 0) return false;
                raise(errc::io_error, "connection closed mid-packet");
            }
            got += n;
        }
        size_t len = static_cast<size_t>(header[0]) | (static_cast<size_t>(header[1]) << 8) |
                     (static_cast<size_t>(header[2]) << 16);
        seq_ = static_cast<uint8_t>(header[3] + 1);
        payload.resize(len);
        if (len > 0) sock_->recv_exact(payload.data(), len);
        if (len == 0xFFFFFF)
            raise(errc::protocol_error, "multi-packet payloads are not supported");
        return true;
    }

    Bytes read_packet_or_fail() {
        Bytes p;
        if (!read_packet(p)) raise(errc::io_error, "connection closed by peer");
        return p;
    }

    void write_packet(BytesView payload) {
        if (payload.size() >= 0xFFFFFF)
            raise(errc::protocol_error, "packet too large");
        Bytes frame;
        frame.reserve(payload.size() + 4);
        put_u24le(frame, static_cast<uint32_t>(payload.size()));
        frame.push_back(seq_++);
        append(frame, payload);
        sock_->send_all(std::string_view(reinterpret_cast<const char*>(frame.data()), frame.size()));
    }

  private:
    net::Socket owned_;
    const net::Socket* sock_;
    uint8_t seq_ = 0;
};

// ---------------------------------------------------------------------------
// mysql_native_password
// ---------------------------------------------------------------------------

inline Bytes sha1(BytesView data) {
    Bytes out(20);
    size_t n = 0;
    if (EVP_Q_digest(nullptr, "SHA1", nullptr, data.data(), data.size(), out.data(), &n) != 1 ||
        n != 20)
        raise(errc::crypto_failure, "SHA1 failed");
    return out;
}

// SHA1(password) XOR SHA1(scramble || SHA1(SHA1(password)))
inline Bytes native_password_token(std::string_view password, BytesView scramble20) {
    if (password.empty()) return {};
    Bytes pw(reinterpret_cast<const uint8_t*>(password.data()),
             reinterpret_cast<const uint8_t*>(password.data()) + password.size());
    Bytes h1 = sha1(pw);
    Bytes h2 = sha1(h1);
    Bytes mix;
    append(mix, scramble20);
    append(mix, h2);
    Bytes h3 = sha1(mix);
    for (size_t i = 0; i < 20; ++i) h1[i] ^= h3[i];
    return h1;
}

// The server stores SHA1(SHA1(password)) and checks
// SHA1(token XOR SHA1(scramble || stored)) == stored.
inline bool native_password_check(BytesView token, BytesView scramble20, BytesView double_sha1) {
    if (token.size() != 20 || double_sha1.size() != 20) return false;
    Bytes mix;
    append(mix, scramble20);
    append(mix, double_sha1);
    Bytes h3 = sha1(mix);
    Bytes h1(20);
    for (size_t i = 0; i < 20; ++i) h1[i] = token[i] ^ h3[i];
    return ct_equal(sha1(h1), double_sha1);
}

// ---------------------------------------------------------------------------
// Common packets
// ---------------------------------------------------------------------------

inline Bytes ok_packet(uint64_t affected) {
    Bytes p;
    p.push_back(0x00);
    put_lenenc_int(p, affected);
    put_lenenc_int(p, 0); // last insert id
    put_u16le(p, 0x0002); // SERVER_STATUS_AUTOCOMMIT
    put_u16le(p, 0);      // warnings
    return p;
}

inline Bytes err_packet(uint16_t code, const std::string& message) {
    Bytes p;
    p.push_back(0xFF);
    put_u16le(p, code);
    p.push_back('#');
    const char* state = "HY000";
    p.insert(p.end(), state, state + 5);
    p.insert(p.end(), message.begin(), message.end());
    return p;
}

inline Bytes eof_packet() {
    Bytes p;
    p.push_back(0xFE);
    put_u16le(p, 0); // warnings
    put_u16le(p, 0x0002);
    return p;
}

// Error messages carry the library error code as a bracketed prefix so it
// survives the round trip through the 16-bit numeric code.
inline Bytes err_packet_for(const BxError& e) {
    return err_packet(1105, "[" + e.code() + "] " + e.what());
}

inline BxError error_from_message(const std::string& message) {
    if (message.size() > 2 && message[0] == '[') {
        size_t close = message.find(']');
        if (close != std::string::npos) {
            std::string code = message.substr(1, close - 1);
            std::string rest = message.substr(close + 1);
            if (!rest.empty() && rest[0] == ' ') rest.erase(0, 1);
            return BxError(code, rest);
        }
    }
    return BxError(errc::backend_error, message);
}

// ---------------------------------------------------------------------------
// Server personality
// ---------------------------------------------------------------------------

struct MysqlServerAuth {
    std::string username;
    Bytes double_sha1_password; // SHA1(SHA1(password)); empty = empty password

    static MysqlServerAuth for_password(std::string username, std::string_view password) {
        MysqlServerAuth a;
        a.username = std::move(username);
        if (!password.empty()) {
            Bytes pw(reinterpret_cast<const uint8_t*>(password.data()),
                     reinterpret_cast<const uint8_t*>(password.data()) + password.size());
            a.double_sha1_password = sha1(sha1(pw));
        }
        return a;
    }
};

// Executes one SQL string; the result stream is consumed immediately.
using QueryHandler = std::function<backend::ResultPtr(const std::string&)>;

namespace detail {

inline void send_resultset(PacketConn& conn, backend::ResultStream& stream) {
    const std::vector<std::string>& cols = stream.columns();
    if (cols.empty()) {
        // DML acknowledgement
        // (drain first so affected() is final)
        while (stream.next()) {
        }
        conn.write_packet(ok_packet(stream.affected()));
        return;
    }
    Bytes count;
    put_lenenc_int(count, cols.size());
    conn.write_packet(count);
    for (const auto& name : cols) {
        Bytes def;
        put_lenenc_string(def, "def"); // catalog
        put_lenenc_string(def, "");    // schema
        put_lenenc_string(def, "");    // table
        put_lenenc_string(def, "");    // org_table
        put_lenenc_string(def, name);
        put_lenenc_string(def, name); // org_name
        def.push_back(0x0c);          // fixed-length block
        put_u16le(def, 0x21);         // utf8_general_ci
        put_u32le(def, 0xFFFF);       // column length
        def.push_back(0xfd);          // MYSQL_TYPE_VAR_STRING
        put_u16le(def, 0);            // flags
        def.push_back(0);             // decimals
        put_u16le(def, 0);            // filler
        conn.write_packet(def);
    }
    conn.write_packet(eof_packet());
    while (auto row = stream.next()) {
        Bytes r;
        for (const auto& cell : *row) {
            if (!cell)
                r.push_back(0xFB); // NULL
            else
                put_lenenc_string(r, *cell);
        }
        conn.write_packet(r);
    }
    conn.write_packet(eof_packet());
}

} // namespace detail

// Full connection lifecycle: handshake, auth, command loop. Returns when
// the client quits or disconnects.
inline void serve_mysql_connection(const net::Socket& sock, const MysqlServerAuth& auth,
                                   const QueryHandler& handler) {
    PacketConn conn(sock);
    Bytes scramble = crypto::random_bytes(20);

    // Initial handshake (v10).
    Bytes hs;
    hs.push_back(0x0a);
    put_nul_string(hs, "5.7.0-blindex");
    put_u32le(hs, 1); // thread id
    hs.insert(hs.end(), scramble.begin(), scramble.begin() + 8);
    hs.push_back(0);
    uint32_t caps = kClientLongPassword | kClientProtocol41 | kClientTransactions |
                    kClientSecureConnection | kClientPluginAuth;
    put_u16le(hs, static_cast<uint16_t>(caps));
    hs.push_back(0x21); // charset
    put_u16le(hs, 0x0002);
    put_u16le(hs, static_cast<uint16_t>(caps >> 16));
    hs.push_back(21); // auth plugin data length (8 + 12 + null)
    hs.insert(hs.end(), 10, 0);
    hs.insert(hs.end(), scramble.begin() + 8, scramble.end());
    hs.push_back(0);
    put_nul_string(hs, kAuthPlugin);
    conn.write_packet(hs);

    // HandshakeResponse41.
    Bytes resp;
    if (!conn.read_packet(resp)) return;
    Reader r{BytesView(resp.data(), resp.size())};
    uint32_t client_caps = r.u32();
    if (!(client_caps & kClientProtocol41)) {
        conn.write_packet(err_packet(1043, "protocol 4.1 required"));
        return;
    }
    r.u32(); // max packet size
    r.u8();  // charset
    r.bytes(23);
    std::string username = r.nul_string();
    Bytes token;
    if (client_caps & kClientSecureConnection) {
        size_t n = r.u8();
        token = r.bytes(n);
    } else {
        std::string t = r.nul_string();
        token.assign(t.begin(), t.end());
    }

    bool ok = username == auth.username;
    if (auth.double_sha1_password.empty())
        ok = ok && token.empty();
    else
        ok = ok && native_password_check(token, scramble, auth.double_sha1_password);
    if (!ok) {
        conn.write_packet(err_packet(1045, "access denied for user '" + username + "'"));
        return;
    }
    conn.write_packet(ok_packet(0));

    // Command loop.
    Bytes cmd;
    for (;;) {
        conn.reset_seq();
        if (!conn.read_packet(cmd)) return;
        if (cmd.empty()) continue;
        uint8_t op = cmd[0];
        if (op == kComQuit) return;
        if (op == kComPing || op == kComInitDb) {
            conn.write_packet(ok_packet(0));
            continue;
        }
        if (op != kComQuery) {
            conn.write_packet(err_packet(1047, "unsupported command"));
            continue;
        }
        std::string sql(reinterpret_cast<const char*>(cmd.data()) + 1, cmd.size() - 1);
        try {
            backend::ResultPtr stream = handler(sql);
            detail::send_resultset(conn, *stream);
        } catch (const BxError& e) {
            conn.write_packet(err_packet_for(e));
        }
    }
}

// ---------------------------------------------------------------------------
// Client endpoint
// ---------------------------------------------------------------------------

class MysqlEndpoint;

class MysqlResultStream : public backend::ResultStream {
  public:
    MysqlResultStream(MysqlEndpoint* ep, std::vector<std::string> columns)
        : ep_(ep), columns_(std::move(columns)) {}

    ~MysqlResultStream() override { drain_quietly(); }

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
    friend class MysqlEndpoint;
    MysqlEndpoint* ep_;
    std::vector<std::string> columns_;
    uint64_t affected_ = 0;
    bool finished_ = false;
};

class MysqlEndpoint : public backend::SqlEndpoint {
  public:
    MysqlEndpoint(net::Socket sock, const std::string& username, std::string_view password)
        : conn_(std::move(sock)) {
        login(username, password);
    }

    static std::unique_ptr<MysqlEndpoint> connect(std::string_view addr,
                                                  const std::string& username,
                                                  std::string_view password) {
        return std::make_unique<MysqlEndpoint>(net::connect_tcp(addr), username, password);
    }

    backend::ResultPtr execute(const std::string& sql) override {
        finish_active();
        conn_.reset_seq();
        Bytes cmd;
        cmd.push_back(kComQuery);
        cmd.insert(cmd.end(), sql.begin(), sql.end());
        conn_.write_packet(cmd);

        Bytes first = conn_.read_packet_or_fail();
        if (!first.empty() && first[0] == 0x00) {
            Reader r{BytesView(first.data(), first.size())};
            r.u8();
            uint64_t affected = r.lenenc_int();
            return backend::MemoryResult::of_affected(affected);
        }
        if (!first.empty() && first[0] == 0xFF) throw_err(first);

        Reader rc{BytesView(first.data(), first.size())};
        uint64_t ncols = rc.lenenc_int();
        std::vector<std::string> names;
        for (uint64_t i = 0; i < ncols; ++i) {
            Bytes def = conn_.read_packet_or_fail();
            Reader rd{BytesView(def.data(), def.size())};
            rd.lenenc_string(); // catalog
            rd.lenenc_string(); // schema
            rd.lenenc_string(); // table
            rd.lenenc_string(); // org_table
            names.push_back(rd.lenenc_string());
        }
        Bytes eof = conn_.read_packet_or_fail();
        if (eof.empty() || eof[0] != 0xFE)
            raise(errc::protocol_error, "expected EOF after column definitions");

        auto stream = std::make_unique<MysqlResultStream>(this, std::move(names));
        active_ = stream.get();
        return stream;
    }

    void begin() override { simple("BEGIN"); }
    void commit() override { simple("COMMIT"); }
    void rollback() override { simple("ROLLBACK"); }

  private:
    friend class MysqlResultStream;

    void simple(const char* sql) {
        backend::ResultPtr r = execute(sql);
        while (r->next()) {
        }
    }

    [[noreturn]] static void throw_err(const Bytes& packet) {
        Reader r{BytesView(packet.data(), packet.size())};
        r.u8();
        r.u16(); // error code
        std::string message = r.rest();
        if (!message.empty() && message[0] == '#' && message.size() >= 6)
            message.erase(0, 6); // sql state marker
        throw error_from_message(message);
    }

    void login(const std::string& username, std::string_view password) {
        Bytes hs = conn_.read_packet_or_fail();
        Reader r{BytesView(hs.data(), hs.size())};
        uint8_t proto = r.u8();
        if (proto == 0xFF) throw_err(hs);
        if (proto != 0x0a) raise(errc::protocol_error, "unsupported handshake version");
        r.nul_string(); // server version
        r.u32();        // thread id
        Bytes scramble = r.bytes(8);
        r.u8(); // filler
        uint32_t caps = r.u16();
        std::string plugin = kAuthPlugin;
        if (r.remaining() > 0) {
            r.u8();  // charset
            r.u16(); // status
            caps |= static_cast<uint32_t>(r.u16()) << 16;
            uint8_t auth_len = r.u8();
            r.bytes(10);
            if (caps & kClientSecureConnection) {
                size_t part2 = auth_len > 8 ? static_cast<size_t>(auth_len) - 8 : 13;
                Bytes extra = r.bytes(std::min(part2, r.remaining()));
                // drop the trailing null byte if present
                if (!extra.empty() && extra.back() == 0) extra.pop_back();
                append(scramble, extra);
            }
            if (caps & kClientPluginAuth && r.remaining() > 0) plugin = r.nul_string();
        }
        if (scramble.size() < 20) raise(errc::protocol_error, "short auth scramble");
        scramble.resize(20);
        if (plugin != kAuthPlugin)
            raise(errc::protocol_error, "server requires unsupported auth plugin: " + plugin);

        uint32_t my_caps = kClientLongPassword | kClientProtocol41 | kClientTransactions |
                           kClientSecureConnection | kClientPluginAuth;
        Bytes token = native_password_token(password, scramble);
        Bytes resp;
        put_u32le(resp, my_caps);
        put_u32le(resp, 1 << 24); // max packet size
        resp.push_back(0x21);
        resp.insert(resp.end(), 23, 0);
        put_nul_string(resp, username);
        resp.push_back(static_cast<uint8_t>(token.size()));
        append(resp, token);
        put_nul_string(resp, kAuthPlugin);
        conn_.write_packet(resp);

        Bytes reply = conn_.read_packet_or_fail();
        if (!reply.empty() && reply[0] == 0xFF) throw_err(reply);
        if (reply.empty() || reply[0] != 0x00)
            raise(errc::protocol_error, "unexpected authentication reply");
    }

    void finish_active() {
        if (active_ != nullptr) {
            MysqlResultStream* s = active_;
            active_ = nullptr;
            s->drain_quietly();
        }
    }

    PacketConn conn_;
    MysqlResultStream* active_ = nullptr;
};

inline std::optional<backend::Row> MysqlResultStream::next() {
    if (finished_) return std::nullopt;
    Bytes p = ep_->conn_.read_packet_or_fail();
    if (!p.empty() && p[0] == 0xFE && p.size() < 9) {
        finished_ = true;
        if (ep_->active_ == this) ep_->active_ = nullptr;
        return std::nullopt;
    }
    if (!p.empty() && p[0] == 0xFF) {
        finished_ = true;
        if (ep_->active_ == this) ep_->active_ = nullptr;
        MysqlEndpoint::throw_err(p);
    }
    Reader r{BytesView(p.data(), p.size())};
    backend::Row row;
    for (size_t i = 0; i < columns_.size(); ++i) {
        if (r.remaining() > 0 && r.data[r.pos] == 0xFB) {
            r.u8();
            row.push_back(std::nullopt);
        } else {
            row.push_back(r.lenenc_string());
        }
    }
    return row;
}

inline backend::EndpointFactory mysql_factory(std::string addr, std::string username,
                                              std::string password) {
    return [addr, username, password] {
        return MysqlEndpoint::connect(addr, username, password);
    };
}

// Serves a SQL endpoint per connection over the MySQL protocol.
inline std::unique_ptr<net::Server> serve_mysql(net::Listener listener, MysqlServerAuth auth,
                                                backend::EndpointFactory factory) {
    auto server = std::make_unique<net::Server>(
        std::move(listener),
        [auth = std::move(auth), factory = std::move(factory)](const net::Socket& sock) {
            backend::EndpointPtr ep = factory();
            serve_mysql_connection(sock, auth,
                                   [&ep](const std::string& sql) { return ep->execute(sql); });
        });
    server->start();
    return server;
}

} // namespace blindex::mysql
