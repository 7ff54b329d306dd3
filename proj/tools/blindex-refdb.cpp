// Reference SQL database server: the in-memory engine served over the
// line-JSON wire protocol, with an optional MySQL-protocol listener.
// Desk-scale stand-in for a real DBMS in tests and benchmarks.

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdio>
#include <thread>

#include <CLI11.hpp>

#include "blindex/mysql.hpp"
#include "blindex/reference_backend.hpp"
#include "blindex/wire.hpp"

using namespace blindex;

static std::atomic<bool> g_stop{false};
static void on_signal(int) { g_stop.store(true); }

int main(int argc, char** argv) {
    CLI::App app{"reference in-memory SQL server"};
    std::string listen = ":7081";
    std::string mysql_listen;
    std::string mysql_user = "root", mysql_password;
    app.add_option("--listen", listen, "line-JSON protocol address")->capture_default_str();
    app.add_option("--mysql-listen", mysql_listen, "optional MySQL protocol address");
    app.add_option("--user", mysql_user, "MySQL listener username")->capture_default_str();
    app.add_option("--password", mysql_password, "MySQL listener password");
    CLI11_PARSE(app, argc, argv);

    try {
        auto engine = std::make_shared<refdb::Engine>();
        auto server = wire::serve_endpoint(net::Listener::bind(listen),
                                           refdb::make_factory(engine));
        std::fprintf(stderr, "reference db listening on port %u\n", server->port());

        std::unique_ptr<net::Server> mysql_server;
        if (!mysql_listen.empty()) {
            mysql_server = mysql::serve_mysql(
                net::Listener::bind(mysql_listen),
                mysql::MysqlServerAuth::for_password(mysql_user, mysql_password),
                refdb::make_factory(engine));
            std::fprintf(stderr, "mysql listener on port %u (user %s)\n", mysql_server->port(),
                         mysql_user.c_str());
        }

        std::signal(SIGINT, on_signal);
        std::signal(SIGTERM, on_signal);
        while (!g_stop.load()) std::this_thread::sleep_for(std::chrono::milliseconds(100));

        if (mysql_server) mysql_server->stop();
        server->stop();
        return 0;
    } catch (const BxError& e) {
        std::fprintf(stderr, "error [%s]: %s\n", e.code().c_str(), e.what());
        return 1;
    }
}
