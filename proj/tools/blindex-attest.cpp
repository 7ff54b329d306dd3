// Attestation fixture management for the simulated TEE.
//
//   blindex-attest generate --out fixtures/attestation
//   blindex-attest show --dir fixtures/attestation
//
// `generate` mints a fresh signing chain (root -> intermediate -> signer),
// a measurement, and a chip id, writing them where the proxy (--attestation
// simulated:<dir>) and clients (--trust <dir>) can load them. `show` prints
// what a directory pins.

#include <cstdio>

#include <CLI11.hpp>

#include "blindex/attestation.hpp"
#include "blindex/io.hpp"

using namespace blindex;

int main(int argc, char** argv) {
    CLI::App app{"simulated TEE fixture tool"};
    app.require_subcommand(1);

    std::string out_dir, show_dir;
    auto* gen = app.add_subcommand("generate", "mint fixture material into a directory");
    gen->add_option("--out", out_dir, "output directory")->required();
    auto* show = app.add_subcommand("show", "print the anchors a directory pins");
    show->add_option("--dir", show_dir, "fixture directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) {
            attest::FixtureMaterial m = attest::generate_fixture_material();
            attest::write_fixture(out_dir, m);
            std::fprintf(stderr, "fixture written to %s\n", out_dir.c_str());
            std::printf("measurement %s\n",
                        to_hex(BytesView(m.issuer.measurement.data(), 12)).c_str());
            return 0;
        }
        Bytes root = attest::load_pinned_root(show_dir);
        auto meas = attest::load_measurement(show_dir);
        std::printf("pinned_root %s\n", to_hex(root).c_str());
        std::printf("measurement %s\n", to_hex(BytesView(meas.data(), meas.size())).c_str());
        return 0;
    } catch (const BxError& e) {
        std::fprintf(stderr, "error [%s]: %s\n", e.code().c_str(), e.what());
        return 1;
    }
}
