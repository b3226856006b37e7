#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "lrc/allocate.hpp"
#include "lrc/rng.hpp"

using namespace lrc;

namespace {

ComponentSpectrum spectrum(std::vector<double> sigma_sq, int d_in, int d_out,
                           std::string label = "test") {
    ComponentSpectrum s;
    s.label = std::move(label);
    s.sigma_sq = std::move(sigma_sq);
    s.d_in = d_in;
    s.d_out = d_out;
    return s;
}

ComponentSpectrum random_spectrum(Rng& rng, int full_rank, int d_in, int d_out) {
    std::vector<double> sq(full_rank);
    for (double& v : sq) v = rng.uniform() * 10.0 + 0.01;
    std::sort(sq.begin(), sq.end(), std::greater<>());
    return spectrum(std::move(sq), d_in, d_out);
}

long ladder_min_cost(const std::vector<ComponentSpectrum>& spectra, int step) {
    long total = 0;
    for (const auto& s : spectra) {
        RankChoice bottom = rank_ladder(s, step).front();
        total += bottom.dense ? s.dense_params() : param_cost(s, bottom.rank);
    }
    return total;
}

long alloc_cost(const std::vector<ComponentSpectrum>& spectra, const RankAllocation& a) {
    long total = 0;
    for (size_t c = 0; c < spectra.size(); c++)
        total += a.ranks[c].dense ? spectra[c].dense_params()
                                  : param_cost(spectra[c], a.ranks[c].rank);
    return total;
}

}  // namespace

TEST_CASE("perf_score") {
    ComponentSpectrum s = spectrum({4, 1, 1}, 10, 10);
    CHECK(perf_score(s, 0) == 0.0);
    CHECK(perf_score(s, 1) == 4.0 / 6.0);
    CHECK(perf_score(s, 2) == doctest::Approx(5.0 / 6.0));
    CHECK(perf_score(s, 3) == 1.0);

    SUBCASE("nondecreasing on random spectra") {
        Rng rng(2);
        for (int trial = 0; trial < 10; trial++) {
            ComponentSpectrum r = random_spectrum(rng, 12, 20, 20);
            double prev = 0.0;
            for (int k = 0; k <= 12; k++) {
                double f = perf_score(r, k);
                CHECK(f >= prev);
                CHECK(f <= 1.0);
                prev = f;
            }
        }
    }
    SUBCASE("all-zero spectrum scores 1 everywhere and is flagged") {
        ComponentSpectrum z = spectrum({0, 0, 0}, 5, 5);
        CHECK(z.zero_spectrum());
        CHECK_FALSE(s.zero_spectrum());
        for (int r = 0; r <= 3; r++) CHECK(perf_score(z, r) == 1.0);
    }
    SUBCASE("contracts") {
        CHECK_THROWS_AS(perf_score(s, -1), input_error);
        CHECK_THROWS_AS(perf_score(s, 4), input_error);
        CHECK_THROWS_AS(perf_score(spectrum({1, 2}, 5, 5), 1), input_error);   // ascending
        CHECK_THROWS_AS(perf_score(spectrum({2, -1}, 5, 5), 1), input_error);  // negative
    }
}

TEST_CASE("param_cost") {
    ComponentSpectrum big = spectrum(std::vector<double>(64, 1.0), 4096, 11008);
    CHECK(param_cost(big, 0) == 0);
    CHECK(param_cost(big, 16) == 241664);
    // beyond the break-even point the cost caps at the dense size
    CHECK(param_cost(big, 3000) == 4096L * 11008);
    CHECK_THROWS_AS(param_cost(big, -1), input_error);
}

TEST_CASE("rank_ladder") {
    SUBCASE("steps below the cap, then the dense fallback") {
        // (30+4)*r < 120 while r < 3.53: rungs {2, dense}
        ComponentSpectrum s = spectrum(std::vector<double>(4, 1.0), 30, 4);
        std::vector<RankChoice> l = rank_ladder(s, 2);
        REQUIRE(l.size() == 2);
        CHECK(l[0].rank == 2);
        CHECK_FALSE(l[0].dense);
        CHECK(l[1].dense);
    }
    SUBCASE("no fallback when the last rung is already full rank") {
        // (30+20)*8 = 400 < 600, and 8 == full_rank
        ComponentSpectrum s = spectrum(std::vector<double>(8, 1.0), 30, 20);
        std::vector<RankChoice> l = rank_ladder(s, 2);
        REQUIRE(l.size() == 4);
        CHECK(l.back().rank == 8);
        CHECK_FALSE(l.back().dense);
    }
    SUBCASE("step larger than full rank leaves only dense") {
        ComponentSpectrum s = spectrum(std::vector<double>(8, 1.0), 30, 20);
        std::vector<RankChoice> l = rank_ladder(s, 16);
        REQUIRE(l.size() == 1);
        CHECK(l[0].dense);
    }
    SUBCASE("minimum rank zero adds a free rung") {
        ComponentSpectrum s = spectrum(std::vector<double>(8, 1.0), 30, 20);
        std::vector<RankChoice> l = rank_ladder(s, 2, 0);
        CHECK(l[0].rank == 0);
        CHECK_FALSE(l[0].dense);
        CHECK(l[1].rank == 2);
    }
    SUBCASE("contracts") {
        ComponentSpectrum s = spectrum({1}, 4, 4);
        CHECK_THROWS_AS(rank_ladder(s, 0), config_error);
        CHECK_THROWS_AS(rank_ladder(s, 4, 3), config_error);
        CHECK_THROWS_AS(rank_ladder(s, 4, -4), config_error);
    }
}

TEST_CASE("greedy_allocate") {
    Rng rng(5);
    SUBCASE("unconstrained budget saturates every component") {
        std::vector<ComponentSpectrum> spectra;
        for (int c = 0; c < 4; c++) spectra.push_back(random_spectrum(rng, 8, 30, 20));
        long budget = 0;
        for (const auto& s : spectra) budget += s.dense_params();
        RankAllocation a = greedy_allocate(spectra, budget, 2);
        CHECK(a.objective == doctest::Approx(4.0));
        CHECK(allocation_objective(spectra, a) == doctest::Approx(4.0));
    }
    SUBCASE("single component grows to the largest affordable rung") {
        std::vector<ComponentSpectrum> one{random_spectrum(rng, 8, 30, 20)};
        // rungs at ranks 2,4,6,8 cost 100,200,300,400
        RankAllocation a = greedy_allocate(one, 320, 2);
        CHECK(a.ranks[0].rank == 6);
        CHECK(a.total_params == 300);
    }
    SUBCASE("budget below the minimum names the shortfall") {
        std::vector<ComponentSpectrum> one{random_spectrum(rng, 8, 30, 20)};
        CHECK_THROWS_WITH_AS(greedy_allocate(one, 90, 2),
                             doctest::Contains("short by 10"), config_error);
    }
    SUBCASE("feasibility and quantization invariants over random instances") {
        for (int trial = 0; trial < 50; trial++) {
            std::vector<ComponentSpectrum> spectra;
            const int n = 2 + (int)rng.below(4);
            long dense_total = 0;
            for (int c = 0; c < n; c++) {
                spectra.push_back(random_spectrum(rng, 4 + (int)rng.below(9),
                                                  10 + (int)rng.below(30),
                                                  4 + (int)rng.below(30)));
                dense_total += spectra.back().dense_params();
            }
            const int step = 1 + (int)rng.below(3);
            const long min_cost = ladder_min_cost(spectra, step);
            const long budget = min_cost + (long)(rng.uniform() * (dense_total - min_cost));
            RankAllocation a = greedy_allocate(spectra, budget, step);
            CHECK(alloc_cost(spectra, a) <= budget);
            CHECK(alloc_cost(spectra, a) == a.total_params);
            for (const RankChoice& rc : a.ranks)
                if (!rc.dense) CHECK(rc.rank % step == 0);
        }
    }
}

TEST_CASE("greedy tie-break prefers the smaller index") {
    ComponentSpectrum base = spectrum({8, 4, 2, 1}, 30, 20);
    std::vector<ComponentSpectrum> two{base, base};
    // minimum = rank 1 each (step 1, cost 50); budget allows one +1 upgrade
    RankAllocation a = greedy_allocate(two, 150, 1);
    CHECK(a.ranks[0].rank == 2);
    CHECK(a.ranks[1].rank == 1);
}

TEST_CASE("exhaustive_allocate") {
    SUBCASE("budget zero with rank zero permitted") {
        std::vector<ComponentSpectrum> spectra{spectrum({4, 2, 1}, 10, 8),
                                               spectrum({5, 3}, 6, 6)};
        RankAllocation a = exhaustive_allocate(spectra, 0, 1, 0);
        CHECK(a.ranks[0].rank == 0);
        CHECK(a.ranks[1].rank == 0);
        CHECK(a.objective == 0.0);
        CHECK(a.total_params == 0);
    }
    SUBCASE("single component with budget for exactly one step") {
        std::vector<ComponentSpectrum> one{spectrum({4, 2, 1, 1}, 10, 8)};
        RankAllocation a = exhaustive_allocate(one, param_cost(one[0], 1), 1);
        CHECK(a.ranks[0].rank == 1);
    }
    SUBCASE("ties resolve to the lexicographically smallest tuple") {
        ComponentSpectrum base = spectrum({8, 4, 2, 1}, 30, 20);
        std::vector<ComponentSpectrum> two{base, base};
        // room for exactly one upgrade above the minimum; (1,2) and (2,1)
        // score identically, the lex-smaller tuple must win
        RankAllocation a = exhaustive_allocate(two, 150, 1);
        CHECK(a.ranks[0].rank == 1);
        CHECK(a.ranks[1].rank == 2);
    }
    SUBCASE("guard rejects oversized instances") {
        std::vector<ComponentSpectrum> many(10, spectrum(std::vector<double>(40, 1.0), 400, 400));
        CHECK_THROWS_AS(exhaustive_allocate(many, 1000000, 2), input_error);
    }
}

TEST_CASE("greedy matches or trails the exhaustive oracle by at most 5%") {
    Rng rng(7);
    double worst_gap = 0.0;
    for (int trial = 0; trial < 50; trial++) {
        std::vector<ComponentSpectrum> spectra;
        long dense_total = 0;
        for (int c = 0; c < 3; c++) {
            spectra.push_back(random_spectrum(rng, 8, 20 + (int)rng.below(20),
                                              10 + (int)rng.below(14)));
            dense_total += spectra.back().dense_params();
        }
        const long min_cost = ladder_min_cost(spectra, 2);
        const long budget = min_cost + (long)(rng.uniform() * 0.5 * (dense_total - min_cost));
        RankAllocation greedy = greedy_allocate(spectra, budget, 2);
        RankAllocation best = exhaustive_allocate(spectra, budget, 2);
        CHECK(greedy.objective <= best.objective + 1e-12);
        const double gap = (best.objective - greedy.objective) / best.objective;
        CHECK(gap <= 0.05);
        worst_gap = std::max(worst_gap, gap);
    }
    MESSAGE("worst greedy-vs-exhaustive gap: ", worst_gap);
}

TEST_CASE("greedy dominates the uniform allocation at the same budget") {
    SUBCASE("small adversarial instances") {
        Rng rng(9);
        for (int trial = 0; trial < 50; trial++) {
            std::vector<ComponentSpectrum> spectra;
            long dense_total = 0;
            const int n = 2 + (int)rng.below(5);
            for (int c = 0; c < n; c++) {
                spectra.push_back(random_spectrum(rng, 4 + (int)rng.below(13),
                                                  10 + (int)rng.below(40),
                                                  6 + (int)rng.below(40)));
                dense_total += spectra.back().dense_params();
            }
            const int step = 1 + (int)rng.below(4);
            const long min_cost = ladder_min_cost(spectra, step);
            const long budget = min_cost + (long)(rng.uniform() * (dense_total - min_cost));
            RankAllocation greedy = greedy_allocate(spectra, budget, step);
            RankAllocation uniform = uniform_allocate(spectra, budget, step);
            CHECK(alloc_cost(spectra, uniform) <= budget);
            CHECK(greedy.objective >= uniform.objective - 1e-12);
        }
    }
    SUBCASE("transformer-shaped instances") {
        Rng rng(41);
        for (int trial = 0; trial < 50; trial++) {
            std::vector<ComponentSpectrum> spectra;
            long dense_total = 0;
            const int n = 3 + (int)rng.below(6);
            for (int c = 0; c < n; c++) {
                ComponentSpectrum s;
                s.label = "c" + std::to_string(c);
                s.d_in = 64 + (int)rng.below(449);
                s.d_out = 64 + (int)rng.below(449);
                s.sigma_sq.resize(std::min(s.d_in, s.d_out));
                double decay = 0.9 + rng.uniform() * 0.099;
                double v = 1.0 + rng.uniform() * 10.0;
                for (double& e : s.sigma_sq) {
                    e = v;
                    v *= decay;
                }
                dense_total += s.dense_params();
                spectra.push_back(std::move(s));
            }
            const long min_cost = ladder_min_cost(spectra, 16);
            const long budget = min_cost + (long)(rng.uniform() * (dense_total - min_cost));
            RankAllocation greedy = greedy_allocate(spectra, budget, 16);
            RankAllocation uniform = uniform_allocate(spectra, budget, 16);
            CHECK(greedy.objective >= uniform.objective - 1e-12);
            CHECK(alloc_cost(spectra, greedy) <= budget);
        }
    }
}

TEST_CASE("uniform_allocate picks the largest feasible keep-rate") {
    ComponentSpectrum a = spectrum(std::vector<double>(8, 1.0), 30, 20);   // rungs 2..8
    ComponentSpectrum b = spectrum(std::vector<double>(16, 1.0), 50, 40);  // rungs 2..16
    std::vector<ComponentSpectrum> spectra{a, b};
    // rate 1/2: a at rank 4 (cost 200), b at rank 8 (cost 720) -> 920
    RankAllocation r = uniform_allocate(spectra, 950, 2);
    CHECK(r.ranks[0].rank == 4);
    CHECK(r.ranks[1].rank == 8);
    // full budget keeps everything
    long dense_total = a.dense_params() + b.dense_params();
    RankAllocation full = uniform_allocate(spectra, dense_total, 2);
    CHECK(full.objective == doctest::Approx(2.0));
}

TEST_CASE("budget_from_ratio") {
    ParamAccounting acc;
    acc.total_params = 1000;
    acc.retained_params = 400;
    acc.decomposable_params = 600;
    acc.min_cost = 100;

    CHECK(budget_from_ratio(acc, 0.0) == 600);
    CHECK(budget_from_ratio(acc, 0.3) == 300);

    SUBCASE("unreachable targets report the minimum achievable ratio") {
        CHECK_THROWS_WITH_AS(budget_from_ratio(acc, 0.55), doctest::Contains("0.5"),
                             config_error);
    }
    SUBCASE("range and consistency checks") {
        CHECK_THROWS_AS(budget_from_ratio(acc, 1.0), config_error);
        CHECK_THROWS_AS(budget_from_ratio(acc, -0.1), config_error);
        ParamAccounting bad = acc;
        bad.decomposable_params = 500;
        CHECK_THROWS_AS(budget_from_ratio(bad, 0.2), input_error);
    }
    SUBCASE("everything retained cannot compress") {
        ParamAccounting frozen;
        frozen.total_params = 500;
        frozen.retained_params = 500;
        frozen.decomposable_params = 0;
        frozen.min_cost = 0;
        CHECK(budget_from_ratio(frozen, 0.0) == 0);
        CHECK_THROWS_AS(budget_from_ratio(frozen, 0.2), config_error);
    }
}
