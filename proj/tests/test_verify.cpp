#include "lrc/verify.hpp"

#include "doctest.h"

using namespace lrc;

TEST_CASE("truncation identity holds on random instances") {
    VerifyReport r = verify_truncation_identity(2026);
    CHECK(r.name == "truncation-identity");
    CHECK(r.trials == 20);
    CHECK(r.checks > 20);  // every rank of every instance
    CHECK(r.failures == 0);
    CHECK(r.worst <= 1e-7);
    CHECK(r.passed());
}

TEST_CASE("whitened truncation beats random same-rank competitors") {
    VerifyReport r = verify_truncation_optimality(2026);
    CHECK(r.name == "truncation-optimality");
    CHECK(r.trials == 20);
    CHECK(r.checks == 20 * 100);
    CHECK(r.failures == 0);
    CHECK(r.worst <= 0.0 + 1e-9);  // no competitor came out ahead
    CHECK(r.passed());
}

TEST_CASE("full-rank splits reproduce the dense forward pass") {
    VerifyReport r = verify_split_exactness(2026);
    CHECK(r.name == "split-exactness");
    CHECK(r.trials == 10);
    CHECK(r.checks == 30);
    CHECK(r.failures == 0);
    CHECK(r.worst <= 1e-6);
    CHECK(r.passed());
}

TEST_CASE("verification bundle runs all three suites") {
    auto reports = run_all_verifications(7);
    REQUIRE(reports.size() == 3);
    for (const auto& r : reports) {
        CHECK(r.passed());
        CHECK(r.trials > 0);
        CHECK(r.failures == 0);
    }
    // distinct seeds produce distinct instances but the properties still hold
    CHECK(reports[0].worst != verify_truncation_identity(8).worst);
}
