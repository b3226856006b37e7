#include <cmath>
#include <string>
#include <vector>

#include "doctest.h"
#include "lrc/bench.hpp"

using namespace lrc;

namespace {

PipelineConfig tiny_bench_config() {
    return parse_pipeline_config(
        "model.vocab_size = 12\n"
        "model.d_model = 8\n"
        "model.d_ff = 16\n"
        "model.n_layers = 4\n"
        "model.n_heads = 2\n"
        "model.max_seq_len = 8\n"
        "calib.sequences = 3\n"
        "calib.seq_len = 6\n"
        "rank_step = 2\n"
        "gamma = 0.25\n"
        "target_ratio = 0.15\n"
        "exclude.kinds = v\n"
        "exclude.layers = 0, 3\n"
        "eval.context_len = 4\n"
        "eval.tokens = 64\n",
        "");
}

CalibStats tiny_stats(const ModelWeights& w) {
    return collect(w, {{1, 2, 3, 4, 5, 0}, {7, 8, 9, 1}, {2, 4, 6, 8, 10}});
}

std::vector<int> synthetic_tokens(int n) {
    std::vector<int> toks(n);
    for (int i = 0; i < n; i++) toks[i] = (i * 5 + i / 7 + 1) % 12;
    return toks;
}

// literal multiply-add counting, the slow way
long long naive_dense_flops(int seq, int m, int n) {
    long long flops = 0;
    for (int t = 0; t < seq; t++)
        for (int j = 0; j < n; j++)
            for (int l = 0; l < m; l++) flops += 2;
    return flops;
}

long long naive_factored_flops(int seq, int m, int n, int k) {
    long long flops = 0;
    for (int t = 0; t < seq; t++)
        for (int j = 0; j < k; j++)
            for (int l = 0; l < m; l++) flops += 2;  // x * a
    for (int t = 0; t < seq; t++)
        for (int j = 0; j < n; j++)
            for (int l = 0; l < k; l++) flops += 2;  // (xa) * b
    return flops;
}

}  // namespace

TEST_CASE("flop counts match a naive loop oracle") {
    for (int seq : {1, 2, 5}) {
        for (int m : {1, 3, 4}) {
            for (int n : {2, 5, 6}) {
                const int k = (m + n) % 3;
                BenchShape s;
                s.m = m;
                s.n = n;
                s.k = k;
                s.seq_len = seq;
                const FlopCounts f = flop_count(s);
                CHECK(f.dense_flops == naive_dense_flops(seq, m, n));
                CHECK(f.factored_flops == naive_factored_flops(seq, m, n, k));
            }
        }
    }

    SUBCASE("published shape arithmetic") {
        BenchShape big;
        big.m = 4096;
        big.n = 11008;
        big.k = 1024;
        big.seq_len = 2048;
        const FlopCounts f = flop_count(big);
        const double ratio = (double)f.factored_flops / (double)f.dense_flops;
        CHECK(std::fabs(ratio - 0.343) < 5e-4);
    }
    SUBCASE("boundary shapes") {
        BenchShape square;
        square.m = square.n = square.k = 6;
        square.seq_len = 2;
        const FlopCounts f = flop_count(square);
        CHECK(f.factored_flops == 2 * f.dense_flops);  // k=m=n doubles the work

        BenchShape zero = square;
        zero.k = 0;
        CHECK(flop_count(zero).factored_flops == 0);

        BenchShape bad;
        bad.m = 0;
        bad.n = 3;
        CHECK_THROWS_AS(flop_count(bad), input_error);
    }
}

TEST_CASE("ablation zeroes exactly the selected neurons") {
    const PipelineConfig cfg = tiny_bench_config();
    const ModelWeights w = init_weights(cfg.model, 5);
    const CalibStats stats = tiny_stats(w);
    const EnergyProfile profile = neuron_energy_profile(stats, 1);

    AblationSpec top;
    top.mode = AblationMode::RemoveTopPn;
    top.fraction = 0.25;  // 4 of 16 neurons
    top.layers = {1};
    const ModelWeights cut = ablate_neurons(w, stats, top);

    const std::vector<int> victims(profile.order.begin(), profile.order.begin() + 4);
    for (int neuron = 0; neuron < 16; neuron++) {
        const bool hit = std::find(victims.begin(), victims.end(), neuron) != victims.end();
        for (int i = 0; i < 8; i++) {
            if (hit) {
                CHECK(cut.layers[1].gate(i, neuron) == 0.0);
                CHECK(cut.layers[1].up(i, neuron) == 0.0);
                CHECK(cut.layers[1].down(neuron, i) == 0.0);
            } else {
                CHECK(cut.layers[1].gate(i, neuron) == w.layers[1].gate(i, neuron));
                CHECK(cut.layers[1].up(i, neuron) == w.layers[1].up(i, neuron));
                CHECK(cut.layers[1].down(neuron, i) == w.layers[1].down(neuron, i));
            }
        }
    }
    CHECK(max_abs_diff(cut.layers[0].gate, w.layers[0].gate) == 0.0);  // other layers intact
    CHECK(max_abs_diff(cut.layers[2].gate, w.layers[2].gate) == 0.0);
    CHECK(max_abs_diff(cut.embedding, w.embedding) == 0.0);

    SUBCASE("bottom-energy ablation takes the tail of the order") {
        AblationSpec bottom;
        bottom.mode = AblationMode::RemoveBottomMn;
        bottom.fraction = 0.25;
        bottom.layers = {1};
        const ModelWeights cut2 = ablate_neurons(w, stats, bottom);
        for (auto it = profile.order.end() - 4; it != profile.order.end(); ++it)
            for (int i = 0; i < 8; i++) CHECK(cut2.layers[1].gate(i, *it) == 0.0);

        // disjoint selections commute
        const ModelWeights ab = ablate_neurons(cut, stats, bottom);
        const ModelWeights ba = ablate_neurons(cut2, stats, top);
        CHECK(max_abs_diff(ab.layers[1].gate, ba.layers[1].gate) == 0.0);
        CHECK(max_abs_diff(ab.layers[1].up, ba.layers[1].up) == 0.0);
        CHECK(max_abs_diff(ab.layers[1].down, ba.layers[1].down) == 0.0);
    }

    SUBCASE("contracts") {
        AblationSpec bad = top;
        bad.fraction = 0.01;  // rounds to zero neurons of 16
        CHECK_THROWS_AS(ablate_neurons(w, stats, bad), input_error);
        bad.fraction = 0.0;
        CHECK_THROWS_AS(ablate_neurons(w, stats, bad), input_error);
        bad.fraction = 1.0;
        CHECK_THROWS_AS(ablate_neurons(w, stats, bad), input_error);
        bad = top;
        bad.layers = {};
        CHECK_THROWS_AS(ablate_neurons(w, stats, bad), input_error);
        bad = top;
        bad.layers = {9};
        CHECK_THROWS_AS(ablate_neurons(w, stats, bad), input_error);
        CalibStats foreign = stats;
        foreign.config.d_ff = 24;
        CHECK_THROWS_AS(ablate_neurons(w, foreign, top), provenance_error);
    }
}

TEST_CASE("energy coverage fraction from a hand-built profile") {
    CalibStats stats;
    stats.config.d_ff = 5;
    stats.layers.resize(1);
    stats.layers[0].neuron_energy = {9.0, 4.0, 1.0, 1.0, 1.0};  // total 16

    CHECK(energy_coverage_fraction(stats, 0, 0.5625) == doctest::Approx(0.2));  // 9/16
    CHECK(energy_coverage_fraction(stats, 0, 0.8) == doctest::Approx(0.4));     // 13/16
    CHECK(energy_coverage_fraction(stats, 0, 0.95) == doctest::Approx(1.0));
    CHECK(energy_coverage_fraction(stats, 0, 1.0) == doctest::Approx(1.0));
    CHECK_THROWS_AS(energy_coverage_fraction(stats, 0, 0.0), input_error);
    CHECK_THROWS_AS(energy_coverage_fraction(stats, 0, 1.5), input_error);
}

TEST_CASE("ratio sweeps report per-row results and errors") {
    const PipelineConfig cfg = tiny_bench_config();
    const ModelWeights w = init_weights(cfg.model, 5);
    const CalibStats stats = tiny_stats(w);
    const std::vector<int> eval = synthetic_tokens(64);

    const auto rows = ratio_sweep(w, stats, cfg, {0.0, 0.3, 0.15}, eval);
    REQUIRE(rows.size() == 3);

    CHECK(rows[0].error.empty());
    CHECK(std::fabs(rows[0].achieved_ratio) < 0.002);
    const double dense_ppl = perplexity(w, eval, cfg.eval_context_len);
    CHECK(std::fabs(rows[0].perplexity - dense_ppl) / dense_ppl < 1e-3);

    CHECK_FALSE(rows[1].error.empty());  // 0.3 exceeds this model's maximum
    CHECK(rows[1].perplexity == 0.0);

    CHECK(rows[2].error.empty());
    CHECK(rows[2].perplexity > 0.0);
    CHECK(rows[0].objective >= rows[2].objective - 1e-12);  // looser budget, better score
}

TEST_CASE("adaptive allocation never scores below uniform") {
    const PipelineConfig cfg = tiny_bench_config();
    const ModelWeights w = init_weights(cfg.model, 5);
    const CalibStats stats = tiny_stats(w);
    const std::vector<int> eval = synthetic_tokens(64);

    const UniformAdaptiveResult tight = compare_uniform_adaptive(w, stats, cfg, 0.15, eval);
    CHECK(tight.objective_adaptive >= tight.objective_uniform - 1e-12);
    CHECK(tight.ppl_uniform > 0.0);
    CHECK(tight.ppl_adaptive > 0.0);

    const UniformAdaptiveResult loose = compare_uniform_adaptive(w, stats, cfg, 0.0, eval);
    CHECK(loose.objective_uniform == doctest::Approx(12.0));
    CHECK(loose.objective_adaptive == doctest::Approx(12.0));
    CHECK(loose.ppl_uniform == loose.ppl_adaptive);  // identical all-dense models
}

TEST_CASE("calibration robustness grid is deterministic") {
    const PipelineConfig cfg = tiny_bench_config();
    const ModelWeights w = init_weights(cfg.model, 5);
    const std::vector<int> pool = synthetic_tokens(300);
    const std::vector<int> eval = synthetic_tokens(48);

    const auto grid = calib_robustness(w, cfg, pool, eval, {2, 3});
    REQUIRE(grid.size() == 4);
    CHECK(grid[0].half == 0);
    CHECK(grid[0].sequences == 2);
    CHECK(grid[3].half == 1);
    CHECK(grid[3].sequences == 3);
    for (const RobustnessCell& cell : grid) {
        CHECK(std::isfinite(cell.perplexity));
        CHECK(cell.perplexity > 1.0);
    }

    const auto again = calib_robustness(w, cfg, pool, eval, {2, 3});
    for (size_t i = 0; i < grid.size(); i++)
        CHECK(grid[i].perplexity == again[i].perplexity);
}

TEST_CASE("wall-clock bench returns medians for both paths") {
    BenchShape s;
    s.label = "small";
    s.m = 48;
    s.n = 48;
    s.k = 4;
    s.seq_len = 8;
    s.repeats = 5;
    BenchShape minimal = s;
    minimal.repeats = 3;

    const auto results = time_bench({s, minimal});
    REQUIRE(results.size() == 2);
    for (const BenchResult& r : results) {
        CHECK(r.dense_ms > 0.0);
        CHECK(r.factored_ms > 0.0);
        CHECK(r.speedup > 0.0);
        CHECK(r.flops.dense_flops == flop_count(r.shape).dense_flops);
    }

    BenchShape bad = s;
    bad.repeats = 2;
    CHECK_THROWS_AS(time_bench({bad}), input_error);
    bad = s;
    bad.k = 0;
    CHECK_THROWS_AS(time_bench({bad}), input_error);
}
