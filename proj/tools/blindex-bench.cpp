// Workload driver and measurement reporter.
//
//   blindex-bench run --proxy 127.0.0.1:7070 --trust fixtures/attestation
//       --workload select_by_ssn --variant e2e --rows 10000 --seed 1 --out run.csv
//   blindex-bench report --in run.csv
//   blindex-bench print-schema --variant e2e --rows 10000
//
// `run` connects, installs the seeded patients dataset, executes the
// workload, and appends CSV rows. `report` summarizes a CSV, fitting
// time and rows-decrypted against dataset size where the data spans
// several sizes.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "blindex/attestation.hpp"
#include "blindex/bench.hpp"

using namespace blindex;

static client::TrustAnchors load_anchors(const std::string& dir) {
    client::TrustAnchors anchors;
    anchors.pinned_root_public = attest::load_pinned_root(dir);
    anchors.measurements.insert(attest::load_measurement(dir));
    return anchors;
}

int main(int argc, char** argv) {
    CLI::App app{"workload driver for the encrypting proxy"};
    app.require_subcommand(1);

    // ---- run ----
    auto* run = app.add_subcommand("run", "execute a workload and emit CSV");
    std::string proxy_addr, backend_addr, trust_dir, out_path;
    std::string workload = "select_n", variant_name = "e2e";
    std::string username = "bench", password = "bench-password";
    uint64_t rows = 1000, reps = 10, seed = 1, limit = 100;
    unsigned parallel = 1;
    std::vector<uint64_t> sweep_sizes = {1000, 10000, 50000};
    bool no_install = false;
    run->add_option("--proxy", proxy_addr, "proxy front door (line-JSON protocol)");
    run->add_option("--backend", backend_addr, "backend address (cleartext-direct only)");
    run->add_option("--trust", trust_dir, "attestation fixture dir to pin (e2e variants)");
    run->add_option("--workload", workload,
                    "select_n | select_by_ssn | select_by_id | insert_one | payload_size | "
                    "datasize_sweep")
        ->capture_default_str();
    run->add_option("--variant", variant_name,
                    "cleartext-direct | cleartext | e2e | e2e-noindex | e2e-no-decrypt")
        ->capture_default_str();
    run->add_option("--rows", rows, "dataset size")->capture_default_str();
    run->add_option("--reps", reps, "repetitions")->capture_default_str();
    run->add_option("--seed", seed, "dataset + workload RNG seed")->capture_default_str();
    run->add_option("--limit", limit, "N for select_n / payload_size")->capture_default_str();
    run->add_option("--out", out_path, "CSV output path (default stdout)");
    run->add_option("--user", username, "proxy account for e2e variants")->capture_default_str();
    run->add_option("--password", password, "proxy account password");
    run->add_option("--sweep", sweep_sizes, "dataset sizes for datasize_sweep")
        ->delimiter(',')
        ->capture_default_str();
    run->add_option("--parallel", parallel, "independent concurrent sessions")
        ->capture_default_str();
    run->add_flag("--no-install", no_install, "measure against an already-installed dataset");

    // ---- report ----
    auto* report = app.add_subcommand("report", "summarize a measurement CSV");
    std::string in_path;
    report->add_option("--in", in_path, "CSV file (default stdin)");

    // ---- print-schema ----
    auto* print_schema =
        app.add_subcommand("print-schema", "proxy column config matching a variant and size");
    std::string ps_variant = "e2e";
    uint64_t ps_rows = 1000;
    print_schema->add_option("--variant", ps_variant)->capture_default_str();
    print_schema->add_option("--rows", ps_rows)->capture_default_str();

    CLI11_PARSE(app, argc, argv);

    try {
        if (print_schema->parsed()) {
            bench::Variant v = bench::Variant::parse(ps_variant);
            std::fputs(bench::patients_config(v.encrypted(), v.indexed(), ps_rows).c_str(),
                       stdout);
            return 0;
        }

        if (report->parsed()) {
            std::vector<bench::Record> records;
            if (in_path.empty()) {
                records = bench::parse_csv(std::cin);
            } else {
                std::ifstream in(in_path);
                if (!in) raise(errc::io_error, "cannot open " + in_path);
                records = bench::parse_csv(in);
            }
            if (records.empty()) raise(errc::malformed_payload, "no measurements in input");
            std::fputs(bench::render_report(bench::summarize(records)).c_str(), stdout);
            return 0;
        }

        // run
        bench::TargetConfig tc;
        tc.variant = bench::Variant::parse(variant_name);
        tc.proxy_addr = proxy_addr;
        tc.backend_addr = backend_addr;
        tc.username = username;
        tc.password = password;
        if (tc.variant.encrypted()) {
            if (trust_dir.empty())
                raise(errc::malformed_payload, "--trust is required for encrypted variants");
            tc.anchors = load_anchors(trust_dir);
        }

        std::vector<uint64_t> sizes =
            workload == "datasize_sweep" ? sweep_sizes : std::vector<uint64_t>{rows};

        std::vector<bench::Record> all;
        std::mutex all_mu;
        for (uint64_t size : sizes) {
            auto data = bench::generate_patients(size, seed);
            {
                bench::Target installer = bench::Target::connect(tc);
                if (!no_install) bench::install_patients(installer, data);
            }
            bench::RunOptions opt;
            opt.workload = workload;
            opt.rows = size;
            opt.reps = reps;
            opt.seed = seed;
            opt.limit = limit;

            if (parallel <= 1) {
                bench::Target t = bench::Target::connect(tc);
                auto recs = bench::run_workload(t, data, opt);
                all.insert(all.end(), recs.begin(), recs.end());
            } else {
                std::vector<std::thread> threads;
                for (unsigned k = 0; k < parallel; ++k) {
                    threads.emplace_back([&, k] {
                        bench::RunOptions topt = opt;
                        topt.seed = seed + k + 1;
                        if (workload == "insert_one") topt.seed = seed + (k + 1) * 1000;
                        bench::Target t = bench::Target::connect(tc);
                        auto recs = bench::run_workload(t, data, topt);
                        std::lock_guard<std::mutex> lock(all_mu);
                        for (auto& r : recs) {
                            r.rep = r.rep * parallel + k;
                            all.push_back(r);
                        }
                    });
                }
                for (auto& th : threads) th.join();
            }
        }

        std::ostringstream csv;
        csv << bench::csv_header() << "\n";
        for (const auto& r : all) csv << bench::csv_line(r) << "\n";
        if (out_path.empty()) {
            std::fputs(csv.str().c_str(), stdout);
        } else {
            std::ofstream out(out_path);
            if (!out) raise(errc::io_error, "cannot write " + out_path);
            out << csv.str();
        }
        return 0;
    } catch (const BxError& e) {
        std::fprintf(stderr, "error [%s]: %s\n", e.code().c_str(), e.what());
        return 1;
    }
}
