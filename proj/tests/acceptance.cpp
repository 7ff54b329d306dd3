// Acceptance gate: ten end-to-end criteria, one pass/fail line each, exit
// nonzero if any fail. Every expectation is computed independently of the
// code under test: plaintext oracle engines, analytic collision counts,
// frozen reference digests, and hand-tracked pull/byte accounting.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <random>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "blindex/attestation.hpp"
#include "blindex/bench.hpp"
#include "blindex/blind_index.hpp"
#include "blindex/client.hpp"
#include "blindex/crypto.hpp"
#include "blindex/envelope.hpp"
#include "blindex/mysql.hpp"
#include "blindex/proxy.hpp"
#include "blindex/reference_backend.hpp"
#include "blindex/row_pipeline.hpp"
#include "blindex/session.hpp"
#include "blindex/sql/parser.hpp"
#include "blindex/sql/rewriter.hpp"
#include "blindex/wire.hpp"

using namespace blindex;

// ---------------------------------------------------------------------------
// Harness
// ---------------------------------------------------------------------------

namespace {

struct Checker {
    int count = 0;
    std::vector<std::string> problems;

    void expect(bool ok, const std::string& what) {
        ++count;
        if (!ok && problems.size() < 12) problems.push_back(what);
        if (!ok && problems.size() == 12) problems.push_back("... further failures suppressed");
    }
};

int g_failed_criteria = 0;

void criterion(int num, const char* title, double time_limit_s,
               const std::function<void(Checker&)>& body) {
    Checker ck;
    std::string error;
    auto t0 = std::chrono::steady_clock::now();
    try {
        body(ck);
    } catch (const BxError& e) {
        error = "unexpected error [" + e.code() + "] " + e.what();
    } catch (const std::exception& e) {
        error = std::string("unexpected exception: ") + e.what();
    }
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    bool in_time = time_limit_s <= 0 || secs <= time_limit_s;
    bool pass = error.empty() && ck.problems.empty() && in_time;
    std::printf("[%s] %2d  %s  (%d checks, %.1fs)\n", pass ? "PASS" : "FAIL", num, title, ck.count,
                secs);
    if (!pass) {
        ++g_failed_criteria;
        if (!error.empty()) std::printf("        %s\n", error.c_str());
        if (!in_time)
            std::printf("        exceeded time budget: %.1fs > %.1fs\n", secs, time_limit_s);
        for (const auto& p : ck.problems) std::printf("        %s\n", p.c_str());
    }
    std::fflush(stdout);
}

crypto::ArgonParams light_argon() { return {8192, 1, 1}; }

const char* kPatientsTable =
    "CREATE TABLE patients (id INT PRIMARY KEY, doctorOfficeId INT, name TEXT, ssn TEXT)";

// In-process stack: proxy over a reference engine, plus an independent
// plaintext oracle engine mirroring the same logical data.
struct Stack {
    std::shared_ptr<refdb::Engine> engine = std::make_shared<refdb::Engine>();
    std::shared_ptr<refdb::Engine> oracle = std::make_shared<refdb::Engine>();
    backend::EndpointPtr oracle_ep = refdb::make_factory(oracle)();
    attest::FixtureMaterial fm = attest::generate_fixture_material();
    std::shared_ptr<proxy::Proxy> prox;
    backend::EndpointPtr ep;

    explicit Stack(const std::string& cfg_text) {
        prox = std::make_shared<proxy::Proxy>(SchemaConfig::load(cfg_text),
                                              refdb::make_factory(engine), fm.issuer,
                                              SessionManager::kDefaultTtl, light_argon());
        ep = prox->open_backend();
    }

    client::QueryFn qfn() {
        return [this](const std::string& sql) {
            return backend::drain(*prox->dispatch(sql, *ep));
        };
    }
    client::TrustAnchors anchors() const {
        return client::TrustAnchors{fm.pinned_root_public,
                                    attest::MeasurementSet{fm.issuer.measurement}};
    }
};

std::string quote_sql(const std::string& s) {
    std::string out = "'";
    for (char c : s) {
        out += c;
        if (c == '\'') out += c;
    }
    out += "'";
    return out;
}

// Order-insensitive row comparison; NULL kept distinct from any string.
std::map<std::string, int> multiset_of(const backend::BufferedResult& r) {
    std::map<std::string, int> out;
    for (const auto& row : r.rows) {
        std::string key;
        for (const auto& cell : row) {
            key += cell ? *cell : std::string("\x01<NULL>");
            key += '\x1f';
        }
        ++out[key];
    }
    return out;
}

// Installs the same logical rows through the encrypted client path and
// directly into the plaintext oracle.
void install_both(client::ClientSession& c, backend::SqlEndpoint& oracle_ep,
                  const std::vector<bench::Patient>& data) {
    c.query(kPatientsTable);
    backend::run(oracle_ep, kPatientsTable);
    constexpr size_t kChunk = 50;
    for (size_t at = 0; at < data.size(); at += kChunk) {
        size_t end = std::min(data.size(), at + kChunk);
        std::string enc_sql = "INSERT INTO patients (id, doctorOfficeId, name, ssn) VALUES ";
        std::string ora_sql = enc_sql;
        for (size_t i = at; i < end; ++i) {
            const bench::Patient& p = data[i];
            std::string prefix =
                (i == at ? "" : ", ") + std::string("(") + std::to_string(p.id) + ", " +
                std::to_string(p.office) + ", ";
            enc_sql += prefix + "'" + c.encrypt_value(p.name) + "', '" + c.encrypt_value(p.ssn) +
                       "')";
            ora_sql += prefix + quote_sql(p.name) + ", " + quote_sql(p.ssn) + ")";
        }
        c.query(enc_sql);
        backend::run(oracle_ep, ora_sql);
    }
}

// TCP relay that records every byte crossing it, both directions.
class TapRelay {
  public:
    explicit TapRelay(std::string upstream) : upstream_(std::move(upstream)) {
        server_ = std::make_unique<net::Server>(net::Listener::bind("127.0.0.1:0"),
                                                [this](const net::Socket& s) { pump(s); });
        server_->start();
        addr_ = "127.0.0.1:" + std::to_string(server_->port());
    }
    ~TapRelay() { server_->stop(); }

    const std::string& addr() const { return addr_; }
    std::string captured() const {
        std::lock_guard<std::mutex> lk(mu_);
        return capture_;
    }

  private:
    void pump(const net::Socket& client) {
        net::Socket up = net::connect_tcp(upstream_);
        std::thread back([&] {
            forward(up, client);
            client.shutdown_both();
        });
        forward(client, up);
        up.shutdown_both();
        back.join();
    }
    void forward(const net::Socket& from, const net::Socket& to) {
        char buf[4096];
        try {
            for (;;) {
                size_t n = from.recv_some(buf, sizeof(buf));
                if (n == 0) break;
                {
                    std::lock_guard<std::mutex> lk(mu_);
                    capture_.append(buf, n);
                }
                to.send_all(std::string_view(buf, n));
            }
        } catch (const BxError&) {
            // relay teardown races are fine; capture keeps what crossed
        }
    }

    std::string upstream_;
    std::string addr_;
    mutable std::mutex mu_;
    std::string capture_;
    std::unique_ptr<net::Server> server_;
};

// Proxy front + wire-served database with taps on both network legs.
struct TappedStack {
    std::shared_ptr<refdb::Engine> engine = std::make_shared<refdb::Engine>();
    attest::FixtureMaterial fm = attest::generate_fixture_material();
    std::unique_ptr<net::Server> db_server;
    std::unique_ptr<TapRelay> db_tap;
    std::shared_ptr<proxy::Proxy> prox;
    std::unique_ptr<net::Server> front;
    std::unique_ptr<TapRelay> front_tap;
    std::unique_ptr<wire::WireEndpoint> wep;

    explicit TappedStack(const std::string& cfg_text) {
        db_server =
            wire::serve_endpoint(net::Listener::bind("127.0.0.1:0"), refdb::make_factory(engine));
        db_tap = std::make_unique<TapRelay>("127.0.0.1:" + std::to_string(db_server->port()));
        prox = std::make_shared<proxy::Proxy>(SchemaConfig::load(cfg_text),
                                              wire::wire_factory(db_tap->addr()), fm.issuer,
                                              SessionManager::kDefaultTtl, light_argon());
        front = proxy::serve_proxy(net::Listener::bind("127.0.0.1:0"), prox);
        front_tap = std::make_unique<TapRelay>("127.0.0.1:" + std::to_string(front->port()));
        wep = wire::WireEndpoint::connect(front_tap->addr());
    }
    ~TappedStack() {
        wep.reset();
        front_tap.reset();
        if (front) front->stop();
        db_tap.reset();
        if (db_server) db_server->stop();
    }
    client::TrustAnchors anchors() const {
        return client::TrustAnchors{fm.pinned_root_public,
                                    attest::MeasurementSet{fm.issuer.measurement}};
    }
};

// Proxy-over-TCP stack reused by the scaling and payload criteria.
struct BenchRig {
    std::shared_ptr<refdb::Engine> engine = std::make_shared<refdb::Engine>();
    std::unique_ptr<net::Server> db_server;
    std::shared_ptr<proxy::Proxy> prox;
    std::unique_ptr<net::Server> front;
    attest::FixtureMaterial fm = attest::generate_fixture_material();
    std::string front_addr;

    explicit BenchRig(const std::string& config_text) {
        db_server =
            wire::serve_endpoint(net::Listener::bind("127.0.0.1:0"), refdb::make_factory(engine));
        prox = std::make_shared<proxy::Proxy>(
            SchemaConfig::load(config_text),
            wire::wire_factory("127.0.0.1:" + std::to_string(db_server->port())), fm.issuer,
            std::chrono::seconds(3600), light_argon());
        front = proxy::serve_proxy(net::Listener::bind("127.0.0.1:0"), prox);
        front_addr = "127.0.0.1:" + std::to_string(front->port());
    }
    ~BenchRig() {
        if (front) front->stop();
        if (db_server) db_server->stop();
    }
    client::TrustAnchors anchors() const {
        return client::TrustAnchors{fm.pinned_root_public,
                                    attest::MeasurementSet{fm.issuer.measurement}};
    }
};

// Client half of one key exchange performed directly against a session
// manager, retaining the evidence bytes for verification.
struct Handshake {
    uint64_t sid = 0;
    Bytes client_random, server_random, server_public;
    Bytes report_bytes, chain_bytes;
    crypto::KeyPair keypair;
    crypto::SessionCipherState enc{crypto::SymmetricKey(Bytes(32, 0)),
                                   crypto::Direction::ClientToProxy, 0};

    explicit Handshake(SessionManager& mgr) {
        keypair = crypto::ecdh_keygen();
        client_random = crypto::random_bytes(32);
        Bytes payload = client_random;
        append(payload, keypair.public_key);
        ProcResult pr = mgr.handle_key_exchange(to_base64(payload));
        Bytes response = from_base64(pr.value);
        sid = get_be64(response);
        server_random = Bytes(response.begin() + 8, response.begin() + 40);
        server_public = Bytes(response.begin() + 40, response.begin() + 105);
        report_bytes = Bytes(response.begin() + 105,
                             response.begin() + 105 + attest::AttestationReport::kSize);
        chain_bytes =
            Bytes(response.begin() + 105 + attest::AttestationReport::kSize, response.end());
        Bytes shared = crypto::ecdh_shared(keypair.private_key, server_public);
        crypto::SessionKeys keys = crypto::derive_session_keys(shared, client_random, server_random);
        enc = crypto::SessionCipherState{keys.c2p, crypto::Direction::ClientToProxy, 0};
    }

    attest::Transcript transcript() const {
        attest::Transcript t;
        t.client_random = client_random;
        t.client_public = keypair.public_key;
        t.server_random = server_random;
        t.server_public = server_public;
        t.session_id = sid;
        return t;
    }

    std::string envelope(std::string_view pt) {
        return envelope_encrypt(enc, sid, to_bytes(pt)).to_base64();
    }
};

} // namespace

// ---------------------------------------------------------------------------
// 1. Query equivalence against a plaintext oracle
// ---------------------------------------------------------------------------

static void criterion_equivalence(Checker& ck) {
    Stack st("[patients]\nencrypted = [name, ssn]\nblind_index.ssn.bits = 13\n");
    client::ClientSession c(st.qfn(), st.anchors());
    c.start();
    c.register_user("alice", "correct horse battery staple");

    auto data = bench::generate_patients(1000, 1234);
    // Inject shared SSNs so point lookups sometimes match several rows.
    for (size_t i = 7; i < data.size(); i += 50) data[i].ssn = data[i - 1].ssn;
    install_both(c, *st.oracle_ep, data);

    std::mt19937_64 rng(20260818);
    auto pick_row = [&]() -> const bench::Patient& { return data[rng() % data.size()]; };

    int ran = 0;
    for (int q = 0; q < 200; ++q) {
        std::string enc_sql, ora_sql;
        switch (rng() % 10) {
        case 0: { // point lookup via the blind index, sometimes absent
            std::string ssn = (rng() % 100 < 85) ? pick_row().ssn
                                                 : bench::format_ssn(uint32_t(rng() % 999999999));
            enc_sql = "SELECT id, name, ssn FROM patients WHERE ssn = '" + c.encrypt_value(ssn) +
                      "'";
            ora_sql = "SELECT id, name, ssn FROM patients WHERE ssn = " + quote_sql(ssn);
            break;
        }
        case 1: { // full scan with residual filtering on the unindexed column
            std::string name = (rng() % 100 < 85) ? pick_row().name : "zz top";
            enc_sql = "SELECT id, name FROM patients WHERE name = '" + c.encrypt_value(name) + "'";
            ora_sql = "SELECT id, name FROM patients WHERE name = " + quote_sql(name);
            break;
        }
        case 2: { // cleartext-only projection and filter
            int k = int(rng() % 50) + 1;
            enc_sql = "SELECT id, doctorOfficeId FROM patients WHERE doctorOfficeId = " +
                      std::to_string(k);
            ora_sql = enc_sql;
            break;
        }
        case 3: { // star projection bound to the session
            int k = int(rng() % 50) + 1;
            ora_sql = "SELECT * FROM patients WHERE doctorOfficeId = " + std::to_string(k);
            enc_sql = "SELECT * FROM patients WHERE " + c.session_term() +
                      " AND doctorOfficeId = " + std::to_string(k);
            break;
        }
        case 4: { // aggregate over a cleartext filter
            int k = int(rng() % 50) + 1;
            enc_sql = "SELECT COUNT(*) FROM patients WHERE doctorOfficeId = " + std::to_string(k);
            ora_sql = enc_sql;
            break;
        }
        case 5: { // IN list on the key column, encrypted projection
            std::string ids;
            for (int i = 0; i < 3; ++i)
                ids += (i ? ", " : "") + std::to_string(rng() % (data.size() + 10) + 1);
            ora_sql = "SELECT id, name FROM patients WHERE id IN (" + ids + ")";
            enc_sql = ora_sql + " AND " + c.session_term();
            break;
        }
        case 6: { // paging across the whole table
            uint64_t lim = rng() % 20 + 1, off = rng() % 1050;
            ora_sql = "SELECT id, ssn FROM patients LIMIT " + std::to_string(lim) + " OFFSET " +
                      std::to_string(off);
            enc_sql = "SELECT id, ssn FROM patients WHERE " + c.session_term() + " LIMIT " +
                      std::to_string(lim) + " OFFSET " + std::to_string(off);
            break;
        }
        case 7: { // indexed point lookup capped at one row
            std::string ssn = pick_row().ssn;
            enc_sql = "SELECT id FROM patients WHERE ssn = '" + c.encrypt_value(ssn) +
                      "' LIMIT 1";
            ora_sql = "SELECT id FROM patients WHERE ssn = " + quote_sql(ssn) + " LIMIT 1";
            break;
        }
        case 8: { // encrypted and cleartext filters combined
            const bench::Patient& p = pick_row();
            enc_sql = "SELECT id FROM patients WHERE ssn = '" + c.encrypt_value(p.ssn) +
                      "' AND doctorOfficeId = " + std::to_string(p.office);
            ora_sql = "SELECT id FROM patients WHERE ssn = " + quote_sql(p.ssn) +
                      " AND doctorOfficeId = " + std::to_string(p.office);
            break;
        }
        default: { // COUNT over an encrypted column with a cleartext filter
            int k = int(rng() % 50) + 1;
            enc_sql = "SELECT COUNT(ssn) FROM patients WHERE doctorOfficeId = " + std::to_string(k);
            ora_sql = enc_sql;
            break;
        }
        }

        backend::BufferedResult got = c.query(enc_sql);
        c.decrypt_result(got);
        backend::BufferedResult want = backend::run(*st.oracle_ep, ora_sql);
        ++ran;
        ck.expect(got.columns == want.columns, "column mismatch on: " + enc_sql);
        ck.expect(multiset_of(got) == multiset_of(want),
                  "row multiset mismatch on: " + enc_sql + " (got " +
                      std::to_string(got.rows.size()) + " rows, oracle " +
                      std::to_string(want.rows.size()) + ")");
    }
    ck.expect(ran == 200, "expected 200 randomized queries");
}

// ---------------------------------------------------------------------------
// 2. No plaintext at rest, in the query log, or on either wire
// ---------------------------------------------------------------------------

static void criterion_secrecy(Checker& ck) {
    TappedStack st("[patients]\nencrypted = [name, ssn]\nblind_index.ssn.bits = 13\n");
    client::ClientSession c(client::query_over(*st.wep), st.anchors());
    c.start();

    const std::string password = "correct horse battery staple";
    c.register_user("secrecy probe", password);

    std::vector<std::pair<std::string, std::string>> secrets = {
        {"victor laszlo", "111-22-3333"}, {"ilsa lund", "444-55-6666"},
        {"rick blaine", "777-88-9999"},   {"sam wilson", "123-45-6789"},
    };
    c.query(kPatientsTable);
    for (size_t i = 0; i < secrets.size(); ++i)
        c.query("INSERT INTO patients (id, doctorOfficeId, name, ssn) VALUES (" +
                std::to_string(i + 1) + ", " + std::to_string(10 + i) + ", '" +
                c.encrypt_value(secrets[i].first) + "', '" + c.encrypt_value(secrets[i].second) +
                "')");

    // Exercise reads and a split mutation so secrets cross every layer.
    {
        auto r = c.query("SELECT id, name FROM patients WHERE ssn = '" +
                         c.encrypt_value("444-55-6666") + "'");
        c.decrypt_result(r);
        ck.expect(r.rows.size() == 1 && r.rows[0][1] == backend::Value("ilsa lund"),
                  "indexed lookup should find the seeded row");
    }
    (void)c.query("SELECT * FROM patients WHERE " + c.session_term());
    (void)c.query("UPDATE patients SET doctorOfficeId = 42 WHERE ssn = '" +
                  c.encrypt_value("777-88-9999") + "'");
    (void)c.query("DELETE FROM patients WHERE name = '" + c.encrypt_value("sam wilson") + "'");

    std::string storage = st.engine->dump_storage();
    std::string log_all;
    for (const auto& q : st.engine->query_log()) log_all += q + "\n";
    std::string wire_db = st.db_tap->captured();
    std::string wire_front = st.front_tap->captured();

    // The taps really captured the traffic.
    ck.expect(wire_db.size() > 1024, "database-leg tap captured too little to be real");
    ck.expect(wire_front.size() > 1024, "client-leg tap captured too little to be real");
    ck.expect(wire_db.find("patients") != std::string::npos,
              "database-leg tap should carry rewritten SQL");
    ck.expect(storage.find("ssn__bidx") != std::string::npos,
              "storage should hold the blind index companion");

    std::vector<std::string> needles = {password};
    for (const auto& [name, ssn] : secrets) {
        needles.push_back(name);
        needles.push_back(ssn);
    }
    for (const auto& n : needles) {
        ck.expect(storage.find(n) == std::string::npos, "plaintext in storage: " + n);
        ck.expect(log_all.find(n) == std::string::npos, "plaintext in query log: " + n);
        ck.expect(wire_db.find(n) == std::string::npos, "plaintext on the database wire: " + n);
        ck.expect(wire_front.find(n) == std::string::npos, "plaintext on the client wire: " + n);
    }
}

// ---------------------------------------------------------------------------
// 3. Blind index collision rate matches the analytic expectation
// ---------------------------------------------------------------------------

static void criterion_collisions(Checker& ck) {
    constexpr uint64_t kR = 8192;
    constexpr unsigned kBits = 13;
    const double expected = expected_collisions(kR, kBits); // r / 2^n
    ck.expect(expected == 1.0, "analytic expectation for r=8192, n=13 should be exactly 1");

    // Measured: expected false positives for a random in-table probe is
    // sum c*(c-1)/r over tag buckets; averaged over 20 independent trials.
    double total = 0;
    for (int trial = 0; trial < 20; ++trial) {
        std::mt19937_64 rng(5000 + trial);
        crypto::SymmetricKey key = crypto::SymmetricKey::random();
        BlindIndexSpec spec("patients", "ssn", kBits);
        std::map<std::string, uint64_t> buckets;
        std::set<uint64_t> seen;
        for (uint64_t i = 0; i < kR; ++i) {
            uint64_t v;
            do {
                v = rng();
            } while (!seen.insert(v).second);
            ++buckets[compute_bidx_hex(key, to_bytes(std::to_string(v)), spec)];
        }
        double fp = 0;
        for (const auto& [tag, c] : buckets) fp += double(c) * double(c - 1);
        total += fp / double(kR);
    }
    double mean = total / 20.0;
    ck.expect(mean >= 0.7 && mean <= 1.3,
              "mean measured collisions " + std::to_string(mean) + " outside [0.7, 1.3]");
    ck.expect(std::abs(mean - expected) <= 0.3,
              "measured mean " + std::to_string(mean) + " too far from analytic " +
                  std::to_string(expected));

    // Width selection and health checks at their documented boundaries.
    ck.expect(min_bits(1000000, 2.0) == 19, "min_bits(1e6, 2.0) should be 19");
    ck.expect(min_bits(10000, 2.0) == 13, "min_bits(1e4, 2.0) should be 13");
    ck.expect(min_bits(1000, 2.0) == 9, "min_bits(1e3, 2.0) should be 9");
    ck.expect(min_bits(2, 2.0) == 1, "min_bits(2, 2.0) should be 1");
    ck.expect(validate_spec(1000000, 19) == SpecHealth::TooRevealing,
              "1e6 rows at 19 bits leaves under 2 expected collisions");
    ck.expect(validate_spec(1000000, 18) == SpecHealth::Ok,
              "1e6 rows at 18 bits sits inside the healthy band");
    ck.expect(validate_spec(1000000, 5) == SpecHealth::TooSlow,
              "1e6 rows at 5 bits collides more than sqrt(r)");
    ck.expect(to_string(validate_spec(1000000, 19)) == std::string("too_revealing"),
              "health label too_revealing");
    ck.expect(to_string(validate_spec(1000000, 18)) == std::string("ok"), "health label ok");
}

// ---------------------------------------------------------------------------
// 4. Decryption work stays bounded with the index, linear without
// ---------------------------------------------------------------------------

static void criterion_scaling(Checker& ck) {
    const std::vector<size_t> sizes = {1000, 10000, 50000};
    std::vector<double> xs, ys;

    for (size_t r : sizes) {
        auto data = bench::generate_patients(r, 11);

        { // indexed: decrypted rows per lookup never exceed a small constant
            BenchRig rig(bench::patients_config(true, true, r));
            bench::TargetConfig tc;
            tc.variant = bench::Variant::parse("e2e");
            tc.proxy_addr = rig.front_addr;
            tc.anchors = rig.anchors();
            bench::Target t = bench::Target::connect(tc);
            bench::install_patients(t, data);

            bench::RunOptions opt;
            opt.workload = "select_by_ssn";
            opt.rows = r;
            opt.reps = 6;
            opt.seed = 99;
            for (const auto& rec : bench::run_workload(t, data, opt)) {
                ck.expect(rec.rows_decrypted >= 1 && rec.rows_decrypted <= 8,
                          "indexed lookup at r=" + std::to_string(r) + " decrypted " +
                              std::to_string(rec.rows_decrypted) + " rows (want 1..8)");
            }
        }

        { // unindexed: every row is decrypted on every lookup
            BenchRig rig(bench::patients_config(true, false, r));
            bench::TargetConfig tc;
            tc.variant = bench::Variant::parse("e2e-noindex");
            tc.proxy_addr = rig.front_addr;
            tc.anchors = rig.anchors();
            bench::Target t = bench::Target::connect(tc);
            bench::install_patients(t, data);

            bench::RunOptions opt;
            opt.workload = "select_by_ssn";
            opt.rows = r;
            opt.reps = 2;
            opt.seed = 99;
            for (const auto& rec : bench::run_workload(t, data, opt)) {
                ck.expect(rec.rows_decrypted == r,
                          "unindexed lookup at r=" + std::to_string(r) + " decrypted " +
                              std::to_string(rec.rows_decrypted) + " rows (want all)");
                xs.push_back(double(r));
                ys.push_back(double(rec.rows_decrypted));
            }
        }
    }

    bench::Fit fit = bench::fit_linear(xs, ys);
    ck.expect(fit.r2 > 0.99, "unindexed decryption should grow linearly (R2=" +
                                 std::to_string(fit.r2) + ")");
    ck.expect(std::abs(fit.slope - 1.0) < 0.01,
              "unindexed decryption slope should be 1 row per row");
}

// ---------------------------------------------------------------------------
// 5. Attestation: honest handshakes verify, every mutation is rejected
// ---------------------------------------------------------------------------

static void criterion_attestation(Checker& ck) {
    attest::FixtureMaterial fm = attest::generate_fixture_material();
    auto engine = std::make_shared<refdb::Engine>();
    SessionManager mgr(fm.issuer, refdb::make_factory(engine)(), std::chrono::seconds(3600),
                       light_argon());
    attest::MeasurementSet good_set{fm.issuer.measurement};

    // 100 independent honest handshakes all verify and open usable sessions.
    int accepted = 0;
    std::unique_ptr<Handshake> kept;
    for (int i = 0; i < 100; ++i) {
        Handshake hs(mgr);
        if (attest::verify_report(attest::AttestationReport::parse(hs.report_bytes),
                                  attest::CertChain::parse(hs.chain_bytes), fm.pinned_root_public,
                                  good_set, hs.transcript()) == attest::VerifyResult::Accepted)
            ++accepted;
        if (i == 0) kept = std::make_unique<Handshake>(std::move(hs));
    }
    ck.expect(accepted == 100, "only " + std::to_string(accepted) + "/100 honest handshakes verified");
    ck.expect(mgr.session_count() == 100, "each handshake should open one session");

    const Handshake& hs = *kept;
    attest::Transcript honest = hs.transcript();
    auto verify_with = [&](const Bytes& report, const Bytes& chain, const attest::Transcript& t) {
        return attest::verify_report(attest::AttestationReport::parse(report),
                                     attest::CertChain::parse(chain), fm.pinned_root_public,
                                     good_set, t);
    };
    ck.expect(verify_with(hs.report_bytes, hs.chain_bytes, honest) ==
                  attest::VerifyResult::Accepted,
              "the kept handshake must verify before mutation");

    size_t mutants = 0;
    // Every byte of the report: breaks the report signature.
    for (size_t i = 0; i < hs.report_bytes.size(); ++i) {
        Bytes r = hs.report_bytes;
        r[i] ^= 0x01;
        ++mutants;
        ck.expect(verify_with(r, hs.chain_bytes, honest) == attest::VerifyResult::BadSignature,
                  "report byte " + std::to_string(i) + " not rejected as BadSignature");
    }
    // Every byte of the certificate chain: breaks chain validation.
    for (size_t i = 0; i < hs.chain_bytes.size(); ++i) {
        Bytes ch = hs.chain_bytes;
        ch[i] ^= 0x01;
        ++mutants;
        ck.expect(verify_with(hs.report_bytes, ch, honest) == attest::VerifyResult::BadChain,
                  "chain byte " + std::to_string(i) + " not rejected as BadChain");
    }
    // Every byte of the transcript: evidence no longer binds the handshake.
    auto expect_transcript_reject = [&](const attest::Transcript& t, const std::string& what) {
        ++mutants;
        ck.expect(verify_with(hs.report_bytes, hs.chain_bytes, t) ==
                      attest::VerifyResult::TranscriptMismatch,
                  what + " not rejected as TranscriptMismatch");
    };
    for (size_t i = 0; i < 32; ++i) {
        attest::Transcript t = honest;
        t.client_random[i] ^= 1;
        expect_transcript_reject(t, "client_random byte " + std::to_string(i));
    }
    for (size_t i = 0; i < 65; ++i) {
        attest::Transcript t = honest;
        t.client_public[i] ^= 1;
        expect_transcript_reject(t, "client_public byte " + std::to_string(i));
    }
    for (size_t i = 0; i < 32; ++i) {
        attest::Transcript t = honest;
        t.server_random[i] ^= 1;
        expect_transcript_reject(t, "server_random byte " + std::to_string(i));
    }
    for (size_t i = 0; i < 65; ++i) {
        attest::Transcript t = honest;
        t.server_public[i] ^= 1;
        expect_transcript_reject(t, "server_public byte " + std::to_string(i));
    }
    for (size_t i = 0; i < 8; ++i) {
        attest::Transcript t = honest;
        t.session_id ^= (uint64_t{1} << (8 * i));
        expect_transcript_reject(t, "session_id byte " + std::to_string(i));
    }
    // Unknown measurements are refused even with valid signatures.
    for (int i = 0; i < 10; ++i) {
        std::array<uint8_t, 48> wrong = fm.issuer.measurement;
        wrong[i % 48] ^= uint8_t(i + 1);
        ++mutants;
        ck.expect(attest::verify_report(attest::AttestationReport::parse(hs.report_bytes),
                                        attest::CertChain::parse(hs.chain_bytes),
                                        fm.pinned_root_public, attest::MeasurementSet{wrong},
                                        honest) == attest::VerifyResult::BadMeasurement,
                  "wrong measurement set " + std::to_string(i) + " not BadMeasurement");
    }
    ck.expect(mutants >= 400, "mutation sweep too small: " + std::to_string(mutants));

    // The client SDK hands out nothing confidential before verification.
    Stack st("[patients]\nencrypted = [name]\n");
    client::ClientSession fresh(st.qfn(), st.anchors());
    try {
        (void)fresh.encrypt_value(std::string_view("secret"));
        ck.expect(false, "encrypt_value before the handshake must refuse");
    } catch (const BxError& e) {
        ck.expect(e.code() == errc::session_not_verified,
                  "pre-handshake encrypt_value code: " + e.code());
    }
    attest::FixtureMaterial other = attest::generate_fixture_material();
    client::ClientSession misled(
        st.qfn(), client::TrustAnchors{other.pinned_root_public,
                                       attest::MeasurementSet{fm.issuer.measurement}});
    try {
        misled.start();
        ck.expect(false, "handshake against an unpinned root must fail");
    } catch (const BxError& e) {
        ck.expect(e.code() == errc::attestation_failure, "bad-root start code: " + e.code());
    }
    try {
        (void)misled.encrypt_value(std::string_view("secret"));
        ck.expect(false, "a failed handshake must leave the session unusable");
    } catch (const BxError& e) {
        ck.expect(e.code() == errc::session_not_verified,
                  "post-failure encrypt_value code: " + e.code());
    }
}

// ---------------------------------------------------------------------------
// 6. Password KDF: wrapping round-trips, wrong passwords fail, digests match
// ---------------------------------------------------------------------------

static void criterion_kdf(Checker& ck) {
    attest::FixtureMaterial fm = attest::generate_fixture_material();
    auto engine = std::make_shared<refdb::Engine>();
    SessionManager mgr(fm.issuer, refdb::make_factory(engine)(), std::chrono::seconds(3600),
                       light_argon());

    Handshake reg(mgr);
    mgr.handle_register("alice", reg.envelope("correct horse battery staple"), reg.sid);
    auto [v1, ltk1] = mgr.lookup(reg.sid)->view();
    ck.expect(ltk1 != nullptr, "registration should leave the session logged in");

    // The wrapped key is persisted, not the key itself.
    auto users = backend::run(*refdb::make_factory(engine)(),
                              "SELECT username, wrapped_key FROM _blindex_users");
    ck.expect(users.rows.size() == 1 && users.rows[0][0] == backend::Value("alice"),
              "registration should persist exactly one user row");
    ck.expect(users.rows[0][1].has_value() && users.rows[0][1]->size() == 96,
              "wrapped key should be a 48-byte hex-encoded blob");
    ck.expect(users.rows[0][1]->find(to_hex(ltk1->view())) == std::string::npos,
              "raw long-term key must not appear in storage");

    // 1000 wrong passwords all fail; the session stays locked.
    Handshake probe(mgr);
    int failed = 0;
    for (int i = 0; i < 1000; ++i) {
        try {
            mgr.handle_login("alice", probe.envelope("wrong password " + std::to_string(i)),
                             probe.sid);
        } catch (const BxError& e) {
            if (e.code() == errc::login_failed) ++failed;
        }
    }
    ck.expect(failed == 1000, "wrong passwords rejected: " + std::to_string(failed) + "/1000");
    {
        auto [v, ltk] = mgr.lookup(probe.sid)->view();
        ck.expect(ltk == nullptr, "failed logins must not unlock the session");
    }

    // The right password unwraps the identical long-term key.
    mgr.handle_login("alice", probe.envelope("correct horse battery staple"), probe.sid);
    auto [v2, ltk2] = mgr.lookup(probe.sid)->view();
    ck.expect(ltk2 != nullptr && ltk1 != nullptr && *ltk2 == *ltk1,
              "login should recover the registered long-term key bit for bit");

    // Independent reference digests (reference-implementation oracle).
    ck.expect(to_hex(crypto::kdf_password(to_bytes("password"), to_bytes("somesalt16bytes!"),
                                          crypto::ArgonParams{8192, 1, 2})
                         .view()) ==
                  "fd58b44ef9239c80a24ca532a2bde20918ea86e23daf7689015a4e974760e89c",
              "argon2id digest (m=8192,t=1,p=2) deviates from the frozen vector");
    ck.expect(to_hex(crypto::kdf_password(to_bytes("password"), to_bytes("somesalt16bytes!"),
                                          crypto::ArgonParams{65536, 3, 1})
                         .view()) ==
                  "678206961efda2b782f42eae7ec22d5ee2d97ccbe4cd7d78ce0e39265f940fce",
              "argon2id digest (m=65536,t=3,p=1) deviates from the frozen vector");
}

// ---------------------------------------------------------------------------
// 7. Mutations on encrypted filters split correctly and match the oracle
// ---------------------------------------------------------------------------

static void criterion_update_split(Checker& ck) {
    Stack st("[patients]\nencrypted = [name, ssn]\nblind_index.ssn.bits = 9\n");
    client::ClientSession c(st.qfn(), st.anchors());
    c.start();
    c.register_user("alice", "pw for split tests");

    auto data = bench::generate_patients(200, 77);
    for (size_t i = 9; i < data.size(); i += 40) data[i].ssn = data[i - 1].ssn; // duplicates
    install_both(c, *st.oracle_ep, data);

    std::mt19937_64 rng(424242);
    int with_match = 0, without_match = 0;
    for (int n = 0; n < 50; ++n) {
        bool exists = rng() % 100 < 75;
        std::string ssn =
            exists ? data[rng() % data.size()].ssn : bench::format_ssn(uint32_t(rng() % 999999999));
        int office = int(rng() % 900) + 100;

        st.engine->clear_query_log();
        backend::BufferedResult got =
            c.query("UPDATE patients SET doctorOfficeId = " + std::to_string(office) +
                    " WHERE ssn = '" + c.encrypt_value(ssn) + "'");
        backend::BufferedResult want =
            backend::run(*st.oracle_ep, "UPDATE patients SET doctorOfficeId = " +
                                            std::to_string(office) +
                                            " WHERE ssn = " + quote_sql(ssn));
        ck.expect(got.affected == want.affected,
                  "case " + std::to_string(n) + ": affected " + std::to_string(got.affected) +
                      " vs oracle " + std::to_string(want.affected));

        auto log = st.engine->query_log();
        bool matched = want.affected > 0;
        (matched ? with_match : without_match)++;
        size_t expect_len = matched ? 4 : 3;
        ck.expect(log.size() == expect_len,
                  "case " + std::to_string(n) + ": log has " + std::to_string(log.size()) +
                      " entries, want " + std::to_string(expect_len));
        if (log.size() == expect_len) {
            ck.expect(log.front() == "BEGIN" && log.back() == "COMMIT",
                      "case " + std::to_string(n) + ": split must run inside one transaction");
            ck.expect(log[1].rfind("SELECT id, ssn FROM patients WHERE ssn__bidx = '", 0) == 0,
                      "case " + std::to_string(n) + ": split probe shape: " + log[1]);
            if (matched)
                ck.expect(log[2].rfind("UPDATE patients SET doctorOfficeId = " +
                                           std::to_string(office) + " WHERE id IN (",
                                       0) == 0,
                          "case " + std::to_string(n) + ": split mutation shape: " + log[2]);
        }
    }
    ck.expect(with_match >= 10 && without_match >= 3,
              "case mix too lopsided: " + std::to_string(with_match) + " matching, " +
                  std::to_string(without_match) + " absent");

    // A mutation that rewrites the indexed column refreshes its companion.
    {
        const std::string old_ssn = data[5].ssn;
        st.engine->clear_query_log();
        backend::BufferedResult got = c.query("UPDATE patients SET ssn = '" +
                                              c.encrypt_value("999-99-0001") + "' WHERE ssn = '" +
                                              c.encrypt_value(old_ssn) + "'");
        backend::BufferedResult want = backend::run(
            *st.oracle_ep,
            "UPDATE patients SET ssn = '999-99-0001' WHERE ssn = " + quote_sql(old_ssn));
        ck.expect(got.affected == want.affected, "ssn rewrite affected mismatch");
        auto log = st.engine->query_log();
        ck.expect(log.size() == 4 && log[2].find("ssn__bidx = '") != std::string::npos,
                  "rewriting ssn must refresh the blind index companion");
    }

    // End state: the whole table still matches the oracle row for row.
    backend::BufferedResult got = c.query("SELECT * FROM patients WHERE " + c.session_term());
    c.decrypt_result(got);
    backend::BufferedResult want = backend::run(*st.oracle_ep, "SELECT * FROM patients");
    ck.expect(multiset_of(got) == multiset_of(want),
              "table states diverged after 51 randomized mutations");
}

// ---------------------------------------------------------------------------
// 8. Envelope and payload overhead stay inside their documented bands
// ---------------------------------------------------------------------------

static void criterion_overhead(Checker& ck) {
    crypto::SessionCipherState enc{crypto::SymmetricKey(Bytes(32, 0x42)),
                                   crypto::Direction::ClientToProxy, 0};
    std::mt19937_64 rng(8);
    std::vector<size_t> lengths;
    for (size_t n = 1; n <= 64; ++n) lengths.push_back(n);
    for (size_t n : {100, 333, 1000, 4096}) lengths.push_back(n);
    for (size_t n : lengths) {
        Bytes pt = crypto::random_bytes(n);
        Envelope env = envelope_encrypt(enc, 7, pt);
        std::string b64 = env.to_base64();
        size_t wire = env.serialize().size();
        ck.expect(wire == n + Envelope::kOverhead,
                  "envelope wire size at n=" + std::to_string(n));
        size_t expect_b64 = 4 * ((wire + 2) / 3);
        ck.expect(b64.size() == expect_b64, "base64 size at n=" + std::to_string(n));
        double overhead = double(b64.size() - n) / double(n);
        ck.expect(overhead >= 1.0 / 3.0,
                  "overhead " + std::to_string(overhead) + " below 33.3% at n=" +
                      std::to_string(n));
    }
    (void)rng;

    // Tagged-JSON payload ratio for realistic rows sits in the 1.75±0.15 band.
    auto data = bench::generate_patients(128, 21);
    BenchRig rig(bench::patients_config(true, true, 128));
    bench::TargetConfig tc;
    tc.variant = bench::Variant::parse("e2e");
    tc.proxy_addr = rig.front_addr;
    tc.anchors = rig.anchors();
    bench::Target t = bench::Target::connect(tc);
    bench::install_patients(t, data);

    bench::RunOptions opt;
    opt.workload = "payload_size";
    opt.rows = 128;
    opt.reps = 5;
    opt.limit = 64;
    double sum = 0;
    auto recs = bench::run_workload(t, data, opt);
    for (const auto& r : recs) {
        double ratio = double(r.bytes_enc) / double(r.bytes_clear);
        sum += ratio;
        ck.expect(ratio > 1.60 && ratio < 1.90,
                  "payload ratio " + std::to_string(ratio) + " outside (1.60, 1.90)");
    }
    double mean = sum / double(recs.size());
    ck.expect(std::abs(mean - 1.75) <= 0.15,
              "mean payload ratio " + std::to_string(mean) + " outside 1.75 +/- 0.15");
}

// ---------------------------------------------------------------------------
// 9. The pipeline streams: no prefetch, no buffering beyond one row
// ---------------------------------------------------------------------------

namespace {

// Generates rows on demand so nothing exists before it is pulled.
class GeneratedStream : public backend::ResultStream {
  public:
    GeneratedStream(size_t n, std::function<backend::Row(size_t)> gen)
        : n_(n), gen_(std::move(gen)) {}
    const std::vector<std::string>& columns() override { return cols_; }
    std::optional<backend::Row> next() override {
        ++pulls;
        if (at_ >= n_) return std::nullopt;
        return gen_(at_++);
    }
    uint64_t affected() const override { return 0; }

    size_t pulls = 0;

  private:
    std::vector<std::string> cols_{"id", "name"};
    size_t n_;
    size_t at_ = 0;
    std::function<backend::Row(size_t)> gen_;
};

} // namespace

static void criterion_streaming(Checker& ck) {
    SchemaConfig cfg = SchemaConfig::load("[patients]\nencrypted = [name]\n");
    crypto::SymmetricKey ltk_key(Bytes(32, 0xaa));
    crypto::SymmetricKey c2p(Bytes(32, 0x11));
    crypto::SymmetricKey p2c(Bytes(32, 0x33));
    auto session = std::make_shared<Session>(7, c2p, p2c, std::chrono::steady_clock::now());
    auto ltk = std::make_shared<const crypto::SymmetricKey>(Bytes(32, 0xaa));
    rewrite::SessionView view{7, &c2p, &ltk_key};
    crypto::SessionCipherState client_enc{c2p, crypto::Direction::ClientToProxy, 0};

    constexpr size_t kN = 100000;
    constexpr size_t kFirstMatch = 777;
    constexpr size_t kSecondMatch = kN - 1;

    crypto::SymmetricKey col_key = crypto::derive_column_key(ltk_key, "patients", "name");
    Bytes ad = to_bytes("patients.name");
    auto stored_name = [&](size_t i) {
        std::string pt = (i == kFirstMatch || i == kSecondMatch) ? "needle"
                                                                 : "user-" + std::to_string(i);
        return backend::Value(
            to_base64(crypto::value_encrypt(col_key, to_bytes(pt), ad).serialize()));
    };

    sql::Statement stmt = sql::parse(
        "SELECT id, name FROM patients WHERE name = '" +
        envelope_encrypt(client_enc, 7, to_bytes("needle")).to_base64() + "'");
    (void)rewrite::extract_session_id(stmt);
    rewrite::QueryPlan plan = rewrite::plan_statement(stmt, cfg, &view);

    auto gen = [&](size_t i) {
        return backend::Row{backend::Value(std::to_string(i + 1)), stored_name(i)};
    };
    auto inner = std::make_unique<GeneratedStream>(kN, gen);
    GeneratedStream* raw = inner.get();
    pipeline::DecryptingStream ds(std::move(inner), plan, cfg, session, ltk);

    ck.expect(raw->pulls == 0, "constructing the pipeline must not pull any rows");

    auto r1 = ds.next();
    ck.expect(r1.has_value(), "first matching row should surface");
    if (r1) ck.expect((*r1)[0] == backend::Value(std::to_string(kFirstMatch + 1)),
                      "first match should be the row planted at position 777");
    ck.expect(raw->pulls == kFirstMatch + 1,
              "first row took " + std::to_string(raw->pulls) + " pulls, want exactly " +
                  std::to_string(kFirstMatch + 1) + " (1 + rows dropped before it)");

    // Pull accounting: every pulled row is immediately resolved, so rows
    // buffered inside the pipeline never exceed one.
    size_t emitted = 1, resolved_drops = kFirstMatch;
    ck.expect(raw->pulls == emitted + resolved_drops, "no lookahead after the first row");

    auto r2 = ds.next();
    ck.expect(r2.has_value(), "second planted match should surface");
    if (r2) ck.expect((*r2)[0] == backend::Value(std::to_string(kSecondMatch + 1)),
                      "second match should be the final row");
    ck.expect(raw->pulls == kN, "draining to the last row pulls each input exactly once");

    auto r3 = ds.next();
    ck.expect(!r3.has_value(), "stream ends after the final match");
    ck.expect(raw->pulls == kN + 1, "end of stream discovered with exactly one extra pull");

    const pipeline::Stats& st = ds.stats();
    ck.expect(st.rows_in == kN, "rows_in should count the full input");
    ck.expect(st.rows_out == 2, "rows_out should count only emitted rows");
    ck.expect(st.residual_drops == kN - 2, "every non-matching row is a residual drop");
}

// ---------------------------------------------------------------------------
// 10. Unsupported operations fail closed with distinct codes
// ---------------------------------------------------------------------------

static void criterion_error_codes(Checker& ck) {
    Stack st("[patients]\nencrypted = [name, ssn]\nblind_index.ssn.bits = 13\n");
    client::ClientSession c(st.qfn(), st.anchors());
    c.start();
    c.register_user("alice", "error code probe");
    c.query(kPatientsTable);
    c.query("INSERT INTO patients (id, doctorOfficeId, name, ssn) VALUES (1, 10, '" +
            c.encrypt_value("ann") + "', '" + c.encrypt_value("078-05-1120") + "')");

    std::set<std::string> codes;
    auto expect_code = [&](const std::string& sql, const char* want) {
        try {
            (void)c.query(sql);
            ck.expect(false, std::string("expected ") + want + " from: " + sql);
        } catch (const BxError& e) {
            ck.expect(e.code() == want,
                      "wanted " + std::string(want) + ", got " + e.code() + " from: " + sql);
            codes.insert(e.code());
        }
    };

    expect_code("SELECT name FROM patients WHERE ssn = '078-05-1120'",
                errc::cleartext_filter_on_encrypted_column);
    expect_code("SELECT COUNT(*) FROM patients WHERE ssn = '" + c.encrypt_value("078-05-1120") +
                    "'",
                errc::aggregation_over_encrypted_filter);
    expect_code("SELECT name FROM patients WHERE ssn < '" + c.encrypt_value("1") + "'",
                errc::unsupported_predicate);
    expect_code("SELECT name FROM patients", errc::session_unresolvable);
    ck.expect(codes.size() == 4, "the four failure modes must carry distinct codes");

    // The session keeps working after every refusal.
    auto r = c.query("SELECT name FROM patients WHERE ssn = '" +
                     c.encrypt_value("078-05-1120") + "'");
    c.decrypt_result(r);
    ck.expect(r.rows.size() == 1 && r.rows[0][0] == backend::Value("ann"),
              "failures must not poison the session");
}

// ---------------------------------------------------------------------------

int main() {
    std::printf("acceptance: end-to-end encrypted query proxy\n");
    criterion(1, "encrypted query results match a plaintext oracle on 200 randomized queries", 60,
              criterion_equivalence);
    criterion(2, "no plaintext secret at rest, in the query log, or on either wire", 0,
              criterion_secrecy);
    criterion(3, "blind index collision rate matches the analytic expectation", 30,
              criterion_collisions);
    criterion(4, "decryption work is constant-bounded with the index and linear without", 0,
              criterion_scaling);
    criterion(5, "honest attestation verifies; every single-byte mutation is rejected", 60,
              criterion_attestation);
    criterion(6, "password KDF wraps and recovers keys; wrong passwords all fail", 0,
              criterion_kdf);
    criterion(7, "mutations on encrypted filters split transactionally and match the oracle", 0,
              criterion_update_split);
    criterion(8, "envelope and payload overhead stay inside their documented bands", 0,
              criterion_overhead);
    criterion(9, "the row pipeline streams with no prefetch and no buffering", 0,
              criterion_streaming);
    criterion(10, "unsupported operations fail closed with distinct error codes", 0,
              criterion_error_codes);

    if (g_failed_criteria == 0) {
        std::printf("acceptance: all 10 criteria passed\n");
        return 0;
    }
    std::printf("acceptance: %d criteria FAILED\n", g_failed_criteria);
    return 1;
}
