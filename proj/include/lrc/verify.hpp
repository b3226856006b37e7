#pragma once

#include <cstdint>
#include <string>
#include <vector>

// Self-checks for the mathematical identities the compressor relies on.
// Runnable by users via the `verify` subcommand and reused by the acceptance
// tests: the whitened-truncation error identity, the optimality of whitened
// truncation among random same-rank competitors, and the exactness of the
// full-rank FFN split.
namespace lrc {

struct VerifyReport {
    std::string name;
    int trials = 0;
    int checks = 0;     // individual comparisons across all trials
    int failures = 0;
    double worst = 0.0;  // largest relative deviation (identity) or margin

    bool passed() const { return failures == 0 && trials > 0; }
};

// 20 random (W, X) pairs with dims up to 64 and at least 2*d_in rows of
// calibration data; at every truncation rank the data-weighted squared error
// must equal the discarded spectral tail within 1e-7 relative.
VerifyReport verify_truncation_identity(uint64_t seed);

// Same instance family; at a random rank per trial, the whitened truncation
// must lose no more than each of 100 random rank-k alternatives (half plain
// random factor pairs, half random column spaces with the optimal right
// factor).
VerifyReport verify_truncation_optimality(uint64_t seed);

// Full-rank FFN splits on 10 random small models must reproduce the dense
// forward pass within 1e-6 max-abs on their own calibration sequences.
VerifyReport verify_split_exactness(uint64_t seed);

std::vector<VerifyReport> run_all_verifications(uint64_t seed);

}  // namespace lrc
