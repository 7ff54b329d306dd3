// Transport layers: TCP plumbing, the newline-JSON wire protocol, and the
// MySQL-compatible front/connector pair — each against the reference engine.

#include <memory>
#include <string>
#include <vector>

#include <catch2/catch_amalgamated.hpp>

#include "blindex/bytes.hpp"
#include "blindex/mysql.hpp"
#include "blindex/net.hpp"
#include "blindex/reference_backend.hpp"
#include "blindex/wire.hpp"

#include "test_util.hpp"

using namespace blindex;

// ---------------------------------------------------------------------------
// net
// ---------------------------------------------------------------------------

TEST_CASE("net: host:port parsing") {
    net::HostPort hp = net::parse_hostport("127.0.0.1:3306");
    REQUIRE(hp.host == "127.0.0.1");
    REQUIRE(hp.port == 3306);

    // A bare :port binds the loopback interface.
    hp = net::parse_hostport(":9000");
    REQUIRE(hp.host == "127.0.0.1");
    REQUIRE(hp.port == 9000);

    REQUIRE_RAISES(net::parse_hostport("no-port"), errc::config_error);
    REQUIRE_RAISES(net::parse_hostport("host:"), errc::config_error);
    REQUIRE_RAISES(net::parse_hostport("host:abc"), errc::config_error);
    REQUIRE_RAISES(net::parse_hostport("host:70000"), errc::config_error);
}

TEST_CASE("net: sockets round trip lines with CRLF stripping") {
    net::Listener listener = net::Listener::bind("127.0.0.1:0");
    REQUIRE(listener.port() != 0);

    net::Socket client = net::connect_tcp("127.0.0.1", listener.port());
    net::Socket served = listener.accept();
    REQUIRE(served.valid());

    client.send_all("alpha\r\nbeta\n");
    client.send_all("unterminated tail");
    client.shutdown_both();
    client.close();

    net::LineReader reader(served);
    std::string line;
    REQUIRE(reader.next_line(line));
    REQUIRE(line == "alpha");
    REQUIRE(reader.next_line(line));
    REQUIRE(line == "beta");
    // EOF flushes whatever is buffered, then reports end of stream.
    REQUIRE(reader.next_line(line));
    REQUIRE(line == "unterminated tail");
    REQUIRE_FALSE(reader.next_line(line));
}

// ---------------------------------------------------------------------------
// wire
// ---------------------------------------------------------------------------

namespace {

struct WireRig {
    std::shared_ptr<refdb::Engine> engine = std::make_shared<refdb::Engine>();
    std::unique_ptr<net::Server> server =
        wire::serve_endpoint(net::Listener::bind("127.0.0.1:0"), refdb::make_factory(engine));
    std::unique_ptr<wire::WireEndpoint> ep =
        wire::WireEndpoint::connect("127.0.0.1:" + std::to_string(server->port()));

    ~WireRig() {
        ep.reset(); // close the client before tearing the server down
        server->stop();
    }
};

} // namespace

TEST_CASE("wire: queries stream columns, rows, and done") {
    WireRig rig;

    backend::run(*rig.ep, "CREATE TABLE t (id INT PRIMARY KEY, v TEXT)");
    REQUIRE(backend::run(*rig.ep, "INSERT INTO t (id, v) VALUES (1, 'alpha'), (2, NULL)")
                .affected == 2);

    auto r = backend::run(*rig.ep, "SELECT id, v FROM t");
    REQUIRE(r.columns == (std::vector<std::string>{"id", "v"}));
    REQUIRE(r.rows.size() == 2);
    REQUIRE(r.rows[0][1] == backend::Value("alpha"));
    REQUIRE_FALSE(r.rows[1][1].has_value()); // NULL crosses the wire as null

    // Values with JSON-hostile characters survive the framing.
    backend::run(*rig.ep, "INSERT INTO t (id, v) VALUES (3, '\"quoted\" and {braces}')");
    auto q = backend::run(*rig.ep, "SELECT v FROM t WHERE id = 3");
    REQUIRE(q.rows[0][0] == backend::Value("\"quoted\" and {braces}"));
}

TEST_CASE("wire: error codes cross the connection intact") {
    WireRig rig;
    backend::run(*rig.ep, "CREATE TABLE t (id INT PRIMARY KEY)");
    backend::run(*rig.ep, "INSERT INTO t (id) VALUES (1)");

    REQUIRE_RAISES(backend::run(*rig.ep, "SELECT * FROM missing"), errc::unknown_table);
    REQUIRE_RAISES(backend::run(*rig.ep, "INSERT INTO t (id) VALUES (1)"), errc::duplicate_key);
    REQUIRE_RAISES(backend::run(*rig.ep, "SELECT nosuch FROM t"), errc::unknown_column);
    // The connection stays usable after an error.
    REQUIRE(backend::run(*rig.ep, "SELECT COUNT(*) FROM t").rows[0][0] == backend::Value("1"));
}

TEST_CASE("wire: transactions and abandoned result streams") {
    WireRig rig;
    backend::run(*rig.ep, "CREATE TABLE t (id INT PRIMARY KEY)");
    backend::run(*rig.ep, "INSERT INTO t (id) VALUES (1), (2), (3)");

    rig.ep->begin();
    backend::run(*rig.ep, "DELETE FROM t WHERE id = 1");
    rig.ep->rollback();
    REQUIRE(backend::run(*rig.ep, "SELECT COUNT(*) FROM t").rows[0][0] == backend::Value("3"));

    rig.ep->begin();
    backend::run(*rig.ep, "DELETE FROM t WHERE id = 1");
    rig.ep->commit();
    REQUIRE(backend::run(*rig.ep, "SELECT COUNT(*) FROM t").rows[0][0] == backend::Value("2"));

    // A partially consumed stream is drained before the next request.
    auto r1 = rig.ep->execute("SELECT id FROM t");
    REQUIRE(r1->next().has_value());
    REQUIRE(backend::run(*rig.ep, "SELECT COUNT(*) FROM t").rows[0][0] == backend::Value("2"));

    // Unknown message types come back as protocol errors in-band.
    wire::json resp = rig.ep->request(wire::json{{"type", "mystery"}});
    REQUIRE(resp["type"] == "error");
    REQUIRE(resp["code"] == errc::protocol_error);
}

TEST_CASE("wire: malformed lines are rejected without killing the connection") {
    WireRig rig;
    net::Socket raw = net::connect_tcp("127.0.0.1", rig.server->port());
    raw.send_all("this is not json\n");
    net::LineReader reader(raw);
    std::string line;
    REQUIRE(reader.next_line(line));
    wire::json msg = wire::json::parse(line);
    REQUIRE(msg["type"] == "error");
    REQUIRE(msg["code"] == errc::protocol_error);

    raw.send_all("{\"type\":\"query\",\"sql\":\"SELECT 1\"}\n");
    REQUIRE(reader.next_line(line)); // columns
    REQUIRE(wire::json::parse(line)["type"] == "columns");
}

// ---------------------------------------------------------------------------
// mysql
// ---------------------------------------------------------------------------

TEST_CASE("mysql: native password primitives") {
    Bytes abc = to_bytes("abc");
    REQUIRE(to_hex(mysql::sha1(abc)) == "a9993e364706816aba3e25717850c26c9cd0d89d");

    Bytes scramble = crypto::random_bytes(20);
    Bytes token = mysql::native_password_token("s3cret", scramble);
    REQUIRE(token.size() == 20);

    Bytes dbl = mysql::sha1(mysql::sha1(to_bytes("s3cret")));
    REQUIRE(mysql::native_password_check(token, scramble, dbl));

    Bytes bad = token;
    bad[0] ^= 1;
    REQUIRE_FALSE(mysql::native_password_check(bad, scramble, dbl));

    // Empty passwords authenticate with an empty token.
    REQUIRE(mysql::native_password_token("", scramble).empty());
}

TEST_CASE("mysql: length-encoded integers round trip at every width boundary") {
    for (uint64_t v : {0ull, 1ull, 250ull, 251ull, 65535ull, 65536ull, 16777215ull, 16777216ull,
                       1ull << 40, ~0ull}) {
        CAPTURE(v);
        Bytes b;
        mysql::put_lenenc_int(b, v);
        mysql::Reader r{BytesView(b.data(), b.size())};
        REQUIRE(r.lenenc_int() == v);
        REQUIRE(r.remaining() == 0);
    }
}

namespace {

struct MysqlRig {
    std::shared_ptr<refdb::Engine> engine = std::make_shared<refdb::Engine>();
    std::unique_ptr<net::Server> server =
        mysql::serve_mysql(net::Listener::bind("127.0.0.1:0"),
                           mysql::MysqlServerAuth::for_password("dbuser", "dbpass"),
                           refdb::make_factory(engine));
    std::string addr = "127.0.0.1:" + std::to_string(server->port());

    ~MysqlRig() { server->stop(); }
};

} // namespace

TEST_CASE("mysql: handshake authentication") {
    MysqlRig rig;
    REQUIRE_RAISES(mysql::MysqlEndpoint::connect(rig.addr, "dbuser", "wrong"),
                   errc::backend_error);
    REQUIRE_RAISES(mysql::MysqlEndpoint::connect(rig.addr, "nobody", "dbpass"),
                   errc::backend_error);
    auto ep = mysql::MysqlEndpoint::connect(rig.addr, "dbuser", "dbpass");
    REQUIRE(backend::run(*ep, "SELECT 1").rows[0][0] == backend::Value("1"));
}

TEST_CASE("mysql: resultsets, NULLs, and boundary-size cells") {
    MysqlRig rig;
    auto ep = mysql::MysqlEndpoint::connect(rig.addr, "dbuser", "dbpass");

    REQUIRE(backend::run(*ep, "CREATE TABLE t (id INT PRIMARY KEY, v TEXT)").affected == 0);
    REQUIRE(backend::run(*ep, "INSERT INTO t (id, v) VALUES (1, 'alpha'), (2, NULL)").affected ==
            2);

    // Cells at the text-protocol length-prefix boundaries.
    std::string v250(250, 'x'), v251(251, 'y'), v70k(70000, 'z');
    REQUIRE(backend::run(*ep, "INSERT INTO t (id, v) VALUES (3, '" + v250 + "'), (4, '" + v251 +
                                  "'), (5, '" + v70k + "')")
                .affected == 3);

    auto r = backend::run(*ep, "SELECT id, v FROM t");
    REQUIRE(r.columns == (std::vector<std::string>{"id", "v"}));
    REQUIRE(r.rows.size() == 5);
    REQUIRE(r.rows[0][1] == backend::Value("alpha"));
    REQUIRE_FALSE(r.rows[1][1].has_value());
    REQUIRE(r.rows[2][1] == backend::Value(v250));
    REQUIRE(r.rows[3][1] == backend::Value(v251));
    REQUIRE(r.rows[4][1] == backend::Value(v70k));
}

TEST_CASE("mysql: error packets carry library codes") {
    MysqlRig rig;
    auto ep = mysql::MysqlEndpoint::connect(rig.addr, "dbuser", "dbpass");
    backend::run(*ep, "CREATE TABLE t (id INT PRIMARY KEY)");
    backend::run(*ep, "INSERT INTO t (id) VALUES (1)");

    REQUIRE_RAISES(backend::run(*ep, "SELECT * FROM missing"), errc::unknown_table);
    REQUIRE_RAISES(backend::run(*ep, "INSERT INTO t (id) VALUES (1)"), errc::duplicate_key);
    // The connection survives the error.
    REQUIRE(backend::run(*ep, "SELECT COUNT(*) FROM t").rows[0][0] == backend::Value("1"));
}

TEST_CASE("mysql: transactions and implicit stream draining") {
    MysqlRig rig;
    auto ep = mysql::MysqlEndpoint::connect(rig.addr, "dbuser", "dbpass");
    backend::run(*ep, "CREATE TABLE t (id INT PRIMARY KEY)");
    backend::run(*ep, "INSERT INTO t (id) VALUES (1), (2), (3), (4), (5)");

    ep->begin();
    backend::run(*ep, "DELETE FROM t WHERE id = 1");
    ep->rollback();
    REQUIRE(backend::run(*ep, "SELECT COUNT(*) FROM t").rows[0][0] == backend::Value("5"));

    ep->begin();
    backend::run(*ep, "DELETE FROM t WHERE id = 5");
    ep->commit();
    REQUIRE(backend::run(*ep, "SELECT COUNT(*) FROM t").rows[0][0] == backend::Value("4"));

    // Abandon a half-read resultset, then issue another query.
    auto r1 = ep->execute("SELECT id FROM t");
    REQUIRE(r1->next().has_value());
    REQUIRE(backend::run(*ep, "SELECT COUNT(*) FROM t").rows[0][0] == backend::Value("4"));
}
