// Blind-index planning calculator: pick index widths and inspect the
// collision/selectivity trade-off before committing a column config.
//
//   blindex-bidx min-bits --rows 1000000 --collisions 2
//   blindex-bidx collisions --rows 8192 --bits 13
//   blindex-bidx validate --rows 1048576 --bits 18

#include <cstdio>

#include <CLI11.hpp>

#include "blindex/blind_index.hpp"

using namespace blindex;

int main(int argc, char** argv) {
    CLI::App app{"blind index width calculator"};
    app.require_subcommand(1);

    uint64_t rows = 0;
    double collisions = 2.0;
    unsigned bits = 0;

    auto* mb = app.add_subcommand("min-bits",
                                  "smallest index width keeping expected collisions at bay");
    mb->add_option("--rows", rows, "distinct plaintext count")->required();
    mb->add_option("--collisions", collisions, "acceptable expected collisions per value")
        ->capture_default_str();

    auto* co = app.add_subcommand("collisions", "expected collisions per value for a width");
    co->add_option("--rows", rows, "distinct plaintext count")->required();
    co->add_option("--bits", bits, "index width in bits")->required();

    auto* va = app.add_subcommand("validate", "judge a (rows, bits) combination");
    va->add_option("--rows", rows, "distinct plaintext count")->required();
    va->add_option("--bits", bits, "index width in bits")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (mb->parsed()) {
            unsigned n = min_bits(rows, collisions);
            std::printf("%u\n", n);
            std::fprintf(stderr, "bits=%u gives %.6f expected collisions per value\n", n,
                         expected_collisions(rows, n));
        } else if (co->parsed()) {
            std::printf("%.9f\n", expected_collisions(rows, bits));
        } else {
            SpecHealth v = validate_spec(rows, bits);
            std::printf("%s\n", to_string(v));
            std::fprintf(stderr, "expected collisions per value: %.6f\n",
                         expected_collisions(rows, bits));
            return v == SpecHealth::Ok ? 0 : 2;
        }
        return 0;
    } catch (const BxError& e) {
        std::fprintf(stderr, "error [%s]: %s\n", e.code().c_str(), e.what());
        return 1;
    }
}
