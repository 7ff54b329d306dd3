// Encrypting proxy daemon. Sits between clients and an untrusted SQL
// backend, rewriting queries so selected columns only ever reach the
// backend encrypted (with blind-index companions for equality filtering).
//
//   blindex-proxy --listen :7070 --backend 127.0.0.1:7081
//       --schema schema.conf --attestation simulated:fixtures/attestation
//
// The front door speaks the line-JSON wire protocol; --mysql-listen opens
// a second front door speaking the MySQL protocol. --backend-protocol
// selects how the proxy talks to the backend (reference = line-JSON,
// mysql = MySQL client protocol).

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <thread>

#include <CLI11.hpp>

#include "blindex/attestation.hpp"
#include "blindex/mysql.hpp"
#include "blindex/proxy.hpp"
#include "blindex/wire.hpp"

using namespace blindex;

static std::atomic<bool> g_stop{false};
static void on_signal(int) { g_stop.store(true); }

static std::string slurp(const std::string& path) {
    std::ifstream in(path);
    if (!in) raise(errc::io_error, "cannot open " + path);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

int main(int argc, char** argv) {
    CLI::App app{"encrypting SQL proxy"};
    std::string listen = ":7070";
    std::string mysql_listen;
    std::string backend_addr;
    std::string backend_protocol = "reference";
    std::string schema_path;
    std::string attestation;
    std::string backend_user = "root", backend_password;
    std::string front_user = "app", front_password;
    unsigned ttl_seconds = 4 * 3600;
    unsigned argon_memory = 65536, argon_passes = 3, argon_lanes = 1;

    app.add_option("--listen", listen, "front door address (line-JSON protocol)")
        ->capture_default_str();
    app.add_option("--mysql-listen", mysql_listen,
                   "optional second front door speaking the MySQL protocol");
    app.add_option("--backend", backend_addr, "backend database address")->required();
    app.add_option("--backend-protocol", backend_protocol, "reference | mysql")
        ->check(CLI::IsMember({"reference", "mysql"}))
        ->capture_default_str();
    app.add_option("--schema", schema_path, "column configuration file")->required();
    app.add_option("--attestation", attestation,
                   "attestation material, e.g. simulated:<fixture dir>")
        ->required();
    app.add_option("--backend-user", backend_user, "MySQL backend username")
        ->capture_default_str();
    app.add_option("--backend-password", backend_password, "MySQL backend password");
    app.add_option("--front-user", front_user, "MySQL front door username")
        ->capture_default_str();
    app.add_option("--front-password", front_password, "MySQL front door password");
    app.add_option("--session-ttl", ttl_seconds, "session lifetime in seconds")
        ->capture_default_str();
    app.add_option("--argon-memory", argon_memory, "password KDF memory cost (KiB)")
        ->capture_default_str();
    app.add_option("--argon-passes", argon_passes, "password KDF pass count")
        ->capture_default_str();
    app.add_option("--argon-lanes", argon_lanes, "password KDF lane count")
        ->capture_default_str();
    app.set_config("--config")->envname("BLINDEX_PROXY_CONFIG");
    CLI11_PARSE(app, argc, argv);

    try {
        if (attestation.rfind("simulated:", 0) != 0)
            raise(errc::malformed_payload,
                  "--attestation must be simulated:<dir> (only simulated TEEs exist here)");
        std::string fixture_dir = attestation.substr(10);
        attest::ReportIssuer issuer = attest::load_issuer(fixture_dir);

        SchemaConfig schema = SchemaConfig::load(slurp(schema_path));

        backend::EndpointFactory factory;
        if (backend_protocol == "mysql")
            factory = mysql::mysql_factory(backend_addr, backend_user, backend_password);
        else
            factory = wire::wire_factory(backend_addr);

        auto prox = std::make_shared<proxy::Proxy>(
            schema, factory, issuer, std::chrono::seconds(ttl_seconds),
            crypto::ArgonParams{argon_memory, argon_passes, argon_lanes});

        auto front = proxy::serve_proxy(net::Listener::bind(listen), prox);
        std::fprintf(stderr, "proxy listening on port %u (backend %s via %s)\n", front->port(),
                     backend_addr.c_str(), backend_protocol.c_str());

        std::unique_ptr<net::Server> mysql_front;
        if (!mysql_listen.empty()) {
            mysql_front = proxy::serve_proxy_mysql(
                net::Listener::bind(mysql_listen), prox,
                mysql::MysqlServerAuth::for_password(front_user, front_password));
            std::fprintf(stderr, "mysql front door on port %u (user %s)\n", mysql_front->port(),
                         front_user.c_str());
        }

        std::signal(SIGINT, on_signal);
        std::signal(SIGTERM, on_signal);
        while (!g_stop.load()) std::this_thread::sleep_for(std::chrono::milliseconds(100));

        if (mysql_front) mysql_front->stop();
        front->stop();
        std::fprintf(stderr, "proxy stopped\n");
        return 0;
    } catch (const BxError& e) {
        std::fprintf(stderr, "error [%s]: %s\n", e.code().c_str(), e.what());
        return 1;
    }
}
