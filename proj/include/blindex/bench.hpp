#pragma once

// Benchmark harness: deterministic dataset generation, workload drivers,
// CSV measurement records, and least-squares reporting.
//
// Workloads:
//   select_n       SELECT * ... LIMIT N with a random offset, no filter
//   select_by_ssn  point lookup through the encrypted-equality path
//   select_by_id   point lookup on the cleartext key column
//   insert_one     single-row INSERT
//   payload_size   byte size of the JSON payload a client receives,
//                  cleartext vs encrypted encoding of the same rows
//   datasize_sweep select_by_ssn repeated across several dataset sizes
//
// Variants:
//   cleartext-direct  driver -> database, no proxy in the path
//   cleartext         driver -> proxy -> database, nothing encrypted
//   e2e               encrypted name+ssn, ssn blind-indexed
//   e2e-noindex       encrypted name+ssn, no blind index (full scans)
//   e2e-no-decrypt    e2e, but the driver does not decrypt responses
//
// Timings are wall-clock and reported as-is; assertions elsewhere target
// counters, ratios, and scaling shapes rather than absolute times.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "blindex/backend.hpp"
#include "blindex/blind_index.hpp"
#include "blindex/client.hpp"
#include "blindex/error.hpp"
#include "blindex/row_pipeline.hpp"
#include "blindex/wire.hpp"

namespace blindex::bench {

// ---------------------------------------------------------------------------
// Dataset
// ---------------------------------------------------------------------------

struct Patient {
    uint64_t id = 0;
    int office = 0;
    std::string name;
    std::string ssn; // NNN-NN-NNNN, unique across the dataset
};

inline const std::vector<std::string>& first_names() {
    static const std::vector<std::string> v = {
        "james", "mary",   "robert", "linda",  "john",   "susan",  "david",  "karen",
        "maria", "carlos", "aisha",  "elena",  "noah",   "fatima", "liam",   "sofia",
        "wei",   "yuki",   "omar",   "priya",  "ivan",   "amara",  "lucas",  "nadia",
        "felix", "ingrid", "mateo",  "hannah", "dmitri", "leila",  "oscar",  "greta"};
    return v;
}

inline const std::vector<std::string>& last_names() {
    static const std::vector<std::string> v = {
        "smith",  "johnson",  "garcia",   "miller",  "chen",     "patel",    "mueller",
        "rossi",  "kowalski", "tanaka",   "okafor",  "petrov",   "andersen", "silva",
        "dubois", "novak",    "haddad",   "kim",     "gonzalez", "ferrari",  "yamamoto",
        "singh",  "larsson",  "moreau",   "ivanov",  "costa",    "nguyen",   "weber",
        "blanco", "fischer",  "martinez", "schmidt"};
    return v;
}

inline std::string format_ssn(uint32_t nine_digits) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%03u-%02u-%04u", nine_digits / 1000000u,
                  (nine_digits / 10000u) % 100u, nine_digits % 10000u);
    return std::string(buf);
}

// Deterministic under the seed; ssn values are distinct by construction.
inline std::vector<Patient> generate_patients(size_t r, uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<uint32_t> ssn_digits(0, 999999999u);
    std::uniform_int_distribution<size_t> first(0, first_names().size() - 1);
    std::uniform_int_distribution<size_t> last(0, last_names().size() - 1);
    std::uniform_int_distribution<int> office(1, 50);

    std::unordered_set<uint32_t> used;
    std::vector<Patient> out;
    out.reserve(r);
    for (size_t i = 0; i < r; ++i) {
        uint32_t digits;
        do {
            digits = ssn_digits(rng);
        } while (!used.insert(digits).second);
        Patient p;
        p.id = i + 1;
        p.office = office(rng);
        p.name = first_names()[first(rng)] + " " + last_names()[last(rng)];
        p.ssn = format_ssn(digits);
        out.push_back(std::move(p));
    }
    return out;
}

// Proxy-side column config matching a generated dataset of r rows. The
// blind-index width targets at most 2 expected collisions per value.
inline std::string patients_config(bool encrypted, bool indexed, size_t r) {
    std::string cfg = "[patients]\n";
    if (encrypted) {
        cfg += "encrypted = [name, ssn]\n";
        if (indexed)
            cfg += "blind_index.ssn.bits = " +
                   std::to_string(min_bits(static_cast<uint64_t>(r), 2.0)) + "\n";
    }
    return cfg;
}

// ---------------------------------------------------------------------------
// Measurement records
// ---------------------------------------------------------------------------

struct Record {
    std::string workload;
    std::string variant;
    uint64_t rows = 0;
    uint64_t rep = 0;
    uint64_t micros = 0;
    uint64_t rows_decrypted = 0;
    uint64_t bytes_clear = 0;
    uint64_t bytes_enc = 0;
};

inline std::string csv_header() {
    return "workload,variant,rows,rep,micros,rows_decrypted,bytes_clear,bytes_enc";
}

inline std::string csv_line(const Record& r) {
    std::ostringstream os;
    os << r.workload << ',' << r.variant << ',' << r.rows << ',' << r.rep << ',' << r.micros << ','
       << r.rows_decrypted << ',' << r.bytes_clear << ',' << r.bytes_enc;
    return os.str();
}

inline Record parse_csv_line(const std::string& line) {
    std::vector<std::string> f;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            f.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    f.push_back(cur);
    if (f.size() != 8) raise(errc::malformed_payload, "csv row needs 8 fields");
    Record r;
    r.workload = f[0];
    r.variant = f[1];
    r.rows = std::stoull(f[2]);
    r.rep = std::stoull(f[3]);
    r.micros = std::stoull(f[4]);
    r.rows_decrypted = std::stoull(f[5]);
    r.bytes_clear = std::stoull(f[6]);
    r.bytes_enc = std::stoull(f[7]);
    return r;
}

// ---------------------------------------------------------------------------
// Least squares
// ---------------------------------------------------------------------------

struct Fit {
    double slope = 0;
    double intercept = 0;
    double r2 = 0;
};

// Ordinary least squares y = intercept + slope*x. For a constant series the
// fit is exact and r2 is reported as 1.
inline Fit fit_linear(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2)
        raise(errc::malformed_payload, "linear fit needs at least two points");
    double n = static_cast<double>(x.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        sxy += x[i] * y[i];
    }
    double denom = n * sxx - sx * sx;
    Fit f;
    if (denom == 0) {
        // vertical stack of points; slope undefined, call it flat at the mean
        f.intercept = sy / n;
        f.r2 = 0;
        return f;
    }
    f.slope = (n * sxy - sx * sy) / denom;
    f.intercept = (sy - f.slope * sx) / n;
    double ss_res = 0, ss_tot = 0, mean = sy / n;
    for (size_t i = 0; i < x.size(); ++i) {
        double pred = f.intercept + f.slope * x[i];
        ss_res += (y[i] - pred) * (y[i] - pred);
        ss_tot += (y[i] - mean) * (y[i] - mean);
    }
    f.r2 = ss_tot == 0 ? 1.0 : 1.0 - ss_res / ss_tot;
    return f;
}

// ---------------------------------------------------------------------------
// Variants and targets
// ---------------------------------------------------------------------------

struct Variant {
    enum Kind { CleartextDirect, Cleartext, E2e, E2eNoIndex, E2eNoDecrypt };
    Kind kind = E2e;

    static Variant parse(std::string_view name) {
        if (name == "cleartext-direct") return {CleartextDirect};
        if (name == "cleartext") return {Cleartext};
        if (name == "e2e") return {E2e};
        if (name == "e2e-noindex") return {E2eNoIndex};
        if (name == "e2e-no-decrypt") return {E2eNoDecrypt};
        raise(errc::malformed_payload, "unknown variant: " + std::string(name));
    }
    std::string name() const {
        switch (kind) {
        case CleartextDirect: return "cleartext-direct";
        case Cleartext: return "cleartext";
        case E2e: return "e2e";
        case E2eNoIndex: return "e2e-noindex";
        case E2eNoDecrypt: return "e2e-no-decrypt";
        }
        return "?";
    }
    bool through_proxy() const { return kind != CleartextDirect; }
    bool encrypted() const { return kind == E2e || kind == E2eNoIndex || kind == E2eNoDecrypt; }
    bool indexed() const { return kind == E2e || kind == E2eNoDecrypt; }
    bool client_decrypts() const { return kind == E2e || kind == E2eNoIndex; }
};

struct TargetConfig {
    Variant variant;
    std::string proxy_addr;   // JSON wire protocol; required unless cleartext-direct
    std::string backend_addr; // required for cleartext-direct
    client::TrustAnchors anchors;
    std::string username = "bench";
    std::string password = "bench-password";
};

// One connected measurement path. Owns the connection and, for encrypted
// variants, the verified client session.
class Target {
  public:
    static Target connect(const TargetConfig& cfg) {
        Target t;
        t.variant_ = cfg.variant;
        std::string addr = cfg.variant.through_proxy() ? cfg.proxy_addr : cfg.backend_addr;
        if (addr.empty())
            raise(errc::malformed_payload,
                  cfg.variant.through_proxy() ? "variant requires a proxy address"
                                              : "cleartext-direct requires a backend address");
        auto wep = wire::WireEndpoint::connect(addr);
        t.wire_ = wep.get();
        t.ep_ = std::move(wep);
        if (cfg.variant.encrypted()) {
            t.session_ =
                std::make_unique<client::ClientSession>(client::query_over(*t.ep_), cfg.anchors);
            t.session_->start();
            try {
                t.session_->register_user(cfg.username, cfg.password);
            } catch (const BxError& e) {
                if (e.code() != errc::register_failed) throw; // already registered is fine
            }
            t.session_->login(cfg.username, cfg.password);
        }
        return t;
    }

    const Variant& variant() const { return variant_; }
    client::ClientSession* session() { return session_.get(); }

    backend::BufferedResult query(const std::string& sql) {
        backend::BufferedResult r = backend::drain(*ep_->execute(sql));
        if (variant_.client_decrypts() && session_) session_->decrypt_result(r);
        return r;
    }

    // Raw result, never decrypted — for payload measurements.
    backend::BufferedResult query_raw(const std::string& sql) {
        return backend::drain(*ep_->execute(sql));
    }

    // SQL literal for a value in a column that is encrypted under this
    // variant: an envelope for e2e paths, a plain quoted string otherwise.
    std::string value_literal(std::string_view plaintext) {
        if (variant_.encrypted()) return "'" + session_->encrypt_value(plaintext) + "'";
        std::string quoted = "'";
        for (char c : plaintext) {
            quoted += c;
            if (c == '\'') quoted += c;
        }
        quoted += "'";
        return quoted;
    }

    // Extra WHERE term binding queries to the session; empty when the
    // variant carries no session.
    std::string session_filter() {
        return variant_.encrypted() ? session_->session_term() : std::string();
    }

    pipeline::Stats stats() {
        if (wire_ == nullptr || !variant_.through_proxy()) return {};
        wire::json reply = wire_->request(wire::json{{"type", "stats"}});
        if (reply.value("type", "") != "stats")
            raise(errc::protocol_error, "stats request not understood");
        pipeline::Stats s;
        s.rows_in = reply.value("rows_in", uint64_t{0});
        s.rows_decrypted = reply.value("rows_decrypted", uint64_t{0});
        s.cells_decrypted = reply.value("cells_decrypted", uint64_t{0});
        s.rows_out = reply.value("rows_out", uint64_t{0});
        s.auth_drops = reply.value("auth_drops", uint64_t{0});
        s.residual_drops = reply.value("residual_drops", uint64_t{0});
        return s;
    }

  private:
    Variant variant_;
    backend::EndpointPtr ep_;
    wire::WireEndpoint* wire_ = nullptr;
    std::unique_ptr<client::ClientSession> session_;
};

// ---------------------------------------------------------------------------
// Dataset installation
// ---------------------------------------------------------------------------

inline void install_patients(Target& t, const std::vector<Patient>& rows) {
    try {
        (void)t.query_raw("DROP TABLE patients");
    } catch (const BxError&) {
        // table may not exist yet
    }
    (void)t.query_raw(
        "CREATE TABLE patients (id INT PRIMARY KEY, doctorOfficeId INT, name TEXT, ssn TEXT)");
    constexpr size_t kChunk = 50;
    for (size_t at = 0; at < rows.size(); at += kChunk) {
        std::string sql = "INSERT INTO patients (id, doctorOfficeId, name, ssn) VALUES ";
        size_t end = std::min(rows.size(), at + kChunk);
        for (size_t i = at; i < end; ++i) {
            const Patient& p = rows[i];
            if (i != at) sql += ", ";
            sql += "(" + std::to_string(p.id) + ", " + std::to_string(p.office) + ", " +
                   t.value_literal(p.name) + ", " + t.value_literal(p.ssn) + ")";
        }
        backend::BufferedResult r = t.query_raw(sql);
        if (r.affected != end - at) raise(errc::backend_error, "dataset insert fell short");
    }
}

// ---------------------------------------------------------------------------
// Payload encoding
// ---------------------------------------------------------------------------

// The JSON shape an application backend hands to the client: every field is
// tagged with whether its value is an envelope, so the client knows what to
// decrypt without out-of-band schema knowledge.
inline nlohmann::json payload_json(const backend::BufferedResult& result,
                                   const std::vector<bool>& enc_mask) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& row : result.rows) {
        nlohmann::json obj = nlohmann::json::object();
        for (size_t i = 0; i < result.columns.size() && i < row.size(); ++i) {
            nlohmann::json field = nlohmann::json::object();
            bool enc = i < enc_mask.size() && enc_mask[i];
            if (!row[i]) {
                field["value"] = nullptr;
            } else if (!enc && !row[i]->empty() &&
                       row[i]->find_first_not_of("0123456789-") == std::string::npos) {
                field["value"] = std::stoll(*row[i]);
            } else {
                field["value"] = *row[i];
            }
            field["enc"] = enc;
            obj[result.columns[i]] = std::move(field);
        }
        arr.push_back(std::move(obj));
    }
    return arr;
}

// ---------------------------------------------------------------------------
// Workloads
// ---------------------------------------------------------------------------

struct RunOptions {
    std::string workload = "select_n";
    uint64_t rows = 1000;  // dataset size (already installed)
    uint64_t reps = 10;
    uint64_t seed = 1;
    uint64_t limit = 100; // N for select_n / payload_size
    bool install = true;  // create + populate the table before measuring
};

namespace detail {

inline uint64_t now_micros() {
    return static_cast<uint64_t>(std::chrono::duration_cast<std::chrono::microseconds>(
                                     std::chrono::steady_clock::now().time_since_epoch())
                                     .count());
}

inline std::string and_session(Target& t) {
    std::string sf = t.session_filter();
    return sf.empty() ? "" : " AND " + sf;
}

inline std::string where_session(Target& t) {
    std::string sf = t.session_filter();
    return sf.empty() ? "" : " WHERE " + sf;
}

} // namespace detail

// Runs one workload against an installed dataset; one record per repetition.
inline std::vector<Record> run_workload(Target& t, const std::vector<Patient>& data,
                                        const RunOptions& opt) {
    std::vector<Record> out;
    std::mt19937_64 rng(opt.seed ^ 0x9e3779b97f4a7c15ull);
    std::uniform_int_distribution<size_t> pick(0, data.empty() ? 0 : data.size() - 1);

    auto base = [&](uint64_t rep) {
        Record r;
        r.workload = opt.workload;
        r.variant = t.variant().name();
        r.rows = opt.rows;
        r.rep = rep;
        return r;
    };

    for (uint64_t rep = 0; rep < opt.reps; ++rep) {
        Record rec = base(rep);
        pipeline::Stats before = t.stats();
        uint64_t t0 = detail::now_micros();

        if (opt.workload == "select_n" || opt.workload == "datasize_sweep" ||
            opt.workload == "select_by_ssn") {
            if (opt.workload == "select_n") {
                uint64_t span = opt.rows > opt.limit ? opt.rows - opt.limit : 0;
                uint64_t offset = span == 0 ? 0 : rng() % (span + 1);
                backend::BufferedResult r =
                    t.query("SELECT * FROM patients" + detail::where_session(t) + " LIMIT " +
                            std::to_string(opt.limit) + " OFFSET " + std::to_string(offset));
                if (r.rows.empty() && opt.rows > 0)
                    raise(errc::backend_error, "select_n returned nothing");
            } else {
                const Patient& p = data[pick(rng)];
                backend::BufferedResult r =
                    t.query("SELECT * FROM patients WHERE ssn = " + t.value_literal(p.ssn) +
                            detail::and_session(t));
                if (r.rows.size() != 1)
                    raise(errc::backend_error, "ssn lookup expected exactly one row, got " +
                                                   std::to_string(r.rows.size()));
            }
        } else if (opt.workload == "select_by_id") {
            const Patient& p = data[pick(rng)];
            backend::BufferedResult r =
                t.query("SELECT * FROM patients WHERE id = " + std::to_string(p.id) +
                        detail::and_session(t));
            if (r.rows.size() != 1) raise(errc::backend_error, "id lookup expected one row");
        } else if (opt.workload == "insert_one") {
            uint64_t id = 1000000000ull + opt.seed * 100000 + rep;
            std::string ssn = format_ssn(static_cast<uint32_t>(999000000u - rep));
            backend::BufferedResult r = t.query_raw(
                "INSERT INTO patients (id, doctorOfficeId, name, ssn) VALUES (" +
                std::to_string(id) + ", 7, " + t.value_literal("bench subject") + ", " +
                t.value_literal(ssn) + ")");
            if (r.affected != 1) raise(errc::backend_error, "insert_one affected != 1");
        } else if (opt.workload == "payload_size") {
            backend::BufferedResult raw =
                t.query_raw("SELECT * FROM patients" + detail::where_session(t) + " LIMIT " +
                            std::to_string(opt.limit));
            std::vector<bool> enc_mask(raw.columns.size(), false);
            if (t.variant().encrypted()) {
                for (size_t i = 0; i < raw.columns.size(); ++i)
                    enc_mask[i] = raw.columns[i] == "name" || raw.columns[i] == "ssn";
            }
            rec.bytes_enc = payload_json(raw, enc_mask).dump().size();
            backend::BufferedResult clear = raw;
            if (t.variant().encrypted() && t.session() != nullptr)
                t.session()->decrypt_result(clear);
            rec.bytes_clear =
                payload_json(clear, std::vector<bool>(raw.columns.size(), false)).dump().size();
        } else {
            raise(errc::malformed_payload, "unknown workload: " + opt.workload);
        }

        rec.micros = detail::now_micros() - t0;
        pipeline::Stats after = t.stats();
        rec.rows_decrypted = after.rows_decrypted - before.rows_decrypted;
        out.push_back(rec);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Report
// ---------------------------------------------------------------------------

struct GroupSummary {
    std::string workload;
    std::string variant;
    size_t count = 0;
    double mean_micros = 0;
    double mean_rows_decrypted = 0;
    double mean_payload_ratio = 0; // bytes_enc / bytes_clear where present
    std::optional<Fit> micros_vs_rows;
    std::optional<Fit> decrypted_vs_rows;
};

inline std::vector<GroupSummary> summarize(const std::vector<Record>& records) {
    std::vector<std::pair<std::string, std::vector<const Record*>>> groups;
    for (const Record& r : records) {
        std::string key = r.workload + "\x1f" + r.variant;
        auto it = std::find_if(groups.begin(), groups.end(),
                               [&](const auto& g) { return g.first == key; });
        if (it == groups.end()) {
            groups.push_back({key, {}});
            it = groups.end() - 1;
        }
        it->second.push_back(&r);
    }
    std::vector<GroupSummary> out;
    for (auto& [key, rs] : groups) {
        GroupSummary g;
        g.workload = rs.front()->workload;
        g.variant = rs.front()->variant;
        g.count = rs.size();
        double ratio_sum = 0;
        size_t ratio_n = 0;
        std::vector<double> xs, ys_micros, ys_dec;
        std::unordered_set<uint64_t> distinct_rows;
        for (const Record* r : rs) {
            g.mean_micros += static_cast<double>(r->micros);
            g.mean_rows_decrypted += static_cast<double>(r->rows_decrypted);
            if (r->bytes_clear > 0) {
                ratio_sum += static_cast<double>(r->bytes_enc) / static_cast<double>(r->bytes_clear);
                ++ratio_n;
            }
            xs.push_back(static_cast<double>(r->rows));
            ys_micros.push_back(static_cast<double>(r->micros));
            ys_dec.push_back(static_cast<double>(r->rows_decrypted));
            distinct_rows.insert(r->rows);
        }
        g.mean_micros /= static_cast<double>(rs.size());
        g.mean_rows_decrypted /= static_cast<double>(rs.size());
        if (ratio_n > 0) g.mean_payload_ratio = ratio_sum / static_cast<double>(ratio_n);
        if (distinct_rows.size() >= 2) {
            g.micros_vs_rows = fit_linear(xs, ys_micros);
            g.decrypted_vs_rows = fit_linear(xs, ys_dec);
        }
        out.push_back(std::move(g));
    }
    return out;
}

inline std::string render_report(const std::vector<GroupSummary>& groups) {
    std::ostringstream os;
    os << "workload          variant           n     mean_us    mean_decrypted";
    os << "\n";
    char line[256];
    for (const GroupSummary& g : groups) {
        std::snprintf(line, sizeof(line), "%-17s %-17s %-5zu %-10.1f %-10.1f", g.workload.c_str(),
                      g.variant.c_str(), g.count, g.mean_micros, g.mean_rows_decrypted);
        os << line;
        if (g.mean_payload_ratio > 0) {
            std::snprintf(line, sizeof(line), "  payload_ratio=%.3f", g.mean_payload_ratio);
            os << line;
        }
        os << "\n";
        if (g.micros_vs_rows) {
            std::snprintf(line, sizeof(line),
                          "    micros    ~ %.4f*rows %+.2f   (R2=%.4f)\n", g.micros_vs_rows->slope,
                          g.micros_vs_rows->intercept, g.micros_vs_rows->r2);
            os << line;
        }
        if (g.decrypted_vs_rows) {
            std::snprintf(line, sizeof(line),
                          "    decrypted ~ %.4f*rows %+.2f   (R2=%.4f)\n",
                          g.decrypted_vs_rows->slope, g.decrypted_vs_rows->intercept,
                          g.decrypted_vs_rows->r2);
            os << line;
        }
    }
    return os.str();
}

inline std::vector<Record> parse_csv(std::istream& in) {
    std::vector<Record> out;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (first && line == csv_header()) {
            first = false;
            continue;
        }
        first = false;
        out.push_back(parse_csv_line(line));
    }
    return out;
}

} // namespace blindex::bench
