#include "lrc/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "lrc/errors.hpp"
#include "lrc/rng.hpp"

namespace lrc {

ModelWeights ablate_neurons(const ModelWeights& w, const CalibStats& stats,
                            const AblationSpec& spec) {
    // architecture check only: ablations compose (top-PN then bottom-MN), so
    // the weights are allowed to have drifted from the calibrated snapshot
    if (stats.config.d_ff != w.config.d_ff || stats.config.n_layers != w.config.n_layers)
        throw provenance_error("calibration stats describe a different architecture");
    if (spec.fraction <= 0.0 || spec.fraction >= 1.0)
        throw input_error("ablation fraction must be in (0,1)");
    const int d_ff = w.config.d_ff;
    const int count = (int)std::lround(spec.fraction * d_ff);
    if (count == 0)
        throw input_error("ablation fraction " + std::to_string(spec.fraction) +
                          " selects zero neurons");
    if (spec.layers.empty()) throw input_error("ablation needs at least one layer");

    ModelWeights out = w;
    for (int layer : spec.layers) {
        if (layer < 0 || layer >= w.config.n_layers)
            throw input_error("ablation layer " + std::to_string(layer) + " out of range");
        const EnergyProfile profile = neuron_energy_profile(stats, layer);
        std::vector<int> victims;
        if (spec.mode == AblationMode::RemoveTopPn)
            victims.assign(profile.order.begin(), profile.order.begin() + count);
        else
            victims.assign(profile.order.end() - count, profile.order.end());

        LayerWeights& lw = out.layers[layer];
        for (int neuron : victims) {
            for (int i = 0; i < w.config.d_model; i++) {
                lw.gate(i, neuron) = 0.0;
                lw.up(i, neuron) = 0.0;
            }
            for (int j = 0; j < w.config.d_model; j++) lw.down(neuron, j) = 0.0;
        }
    }
    return out;
}

double energy_coverage_fraction(const CalibStats& stats, int layer, double coverage) {
    if (coverage <= 0.0 || coverage > 1.0) throw input_error("coverage must be in (0,1]");
    const EnergyProfile profile = neuron_energy_profile(stats, layer);
    for (size_t j = 0; j < profile.cumulative.size(); j++)
        if (profile.cumulative[j] >= coverage)
            return (double)(j + 1) / (double)profile.cumulative.size();
    return 1.0;
}

std::vector<SweepRow> ratio_sweep(const ModelWeights& w, const CalibStats& stats,
                                  const PipelineConfig& cfg, const std::vector<double>& ratios,
                                  const std::vector<int>& eval_tokens) {
    const CompressionPlan plan = plan_compression(w, stats, cfg);
    std::vector<SweepRow> rows;
    for (double ratio : ratios) {
        SweepRow row;
        row.target_ratio = ratio;
        try {
            const CompressionResult res = compress_to_ratio(w, stats, plan, ratio);
            row.achieved_ratio = res.manifest.achieved_ratio;
            row.objective = res.allocation.objective;
            row.perplexity = perplexity(res.model, eval_tokens, cfg.eval_context_len);
        } catch (const config_error& e) {
            row.error = e.what();
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

UniformAdaptiveResult compare_uniform_adaptive(const ModelWeights& w, const CalibStats& stats,
                                               const PipelineConfig& cfg, double target_ratio,
                                               const std::vector<int>& eval_tokens) {
    const CompressionPlan plan = plan_compression(w, stats, cfg);
    const long budget = budget_from_ratio(plan.accounting, target_ratio);
    std::vector<ComponentSpectrum> spectra;
    for (const PlanItem& item : plan.items) spectra.push_back(item.spectrum);

    const RankAllocation uniform = uniform_allocate(spectra, budget, cfg.rank_step);
    const RankAllocation adaptive = greedy_allocate(spectra, budget, cfg.rank_step);
    const CompressionResult res_u = assemble(w, stats, plan, uniform, target_ratio);
    const CompressionResult res_a = assemble(w, stats, plan, adaptive, target_ratio);

    UniformAdaptiveResult out;
    out.objective_uniform = uniform.objective;
    out.objective_adaptive = adaptive.objective;
    out.ppl_uniform = perplexity(res_u.model, eval_tokens, cfg.eval_context_len);
    out.ppl_adaptive = perplexity(res_a.model, eval_tokens, cfg.eval_context_len);
    return out;
}

std::vector<RobustnessCell> calib_robustness(const ModelWeights& w, const PipelineConfig& cfg,
                                             const std::vector<int>& calib_pool,
                                             const std::vector<int>& eval_tokens,
                                             const std::vector<int>& counts) {
    if (calib_pool.size() < 2) throw input_error("calibration pool too small to halve");
    const size_t mid = calib_pool.size() / 2;
    const std::vector<std::vector<int>> halves = {
        {calib_pool.begin(), calib_pool.begin() + (long)mid},
        {calib_pool.begin() + (long)mid, calib_pool.end()}};

    std::vector<RobustnessCell> grid;
    for (int half = 0; half < 2; half++) {
        for (int count : counts) {
            const auto seqs = draw_calibration_sequences(halves[half], count, cfg.calib_seq_len,
                                                         cfg.calib_seed);
            const CalibStats stats = collect(w, seqs);
            const CompressionResult res = compress_model(w, stats, cfg);
            RobustnessCell cell;
            cell.sequences = count;
            cell.half = half;
            cell.perplexity = perplexity(res.model, eval_tokens, cfg.eval_context_len);
            grid.push_back(cell);
        }
    }
    return grid;
}

FlopCounts flop_count(const BenchShape& shape) {
    if (shape.m < 1 || shape.n < 1 || shape.seq_len < 1 || shape.k < 0)
        throw input_error("flop_count: shape dimensions out of range");
    FlopCounts f;
    f.dense_flops = 2LL * shape.seq_len * shape.m * shape.n;
    f.factored_flops = 2LL * shape.seq_len * ((long long)shape.m + shape.n) * shape.k;
    return f;
}

namespace {

double median_ms(std::vector<double>& samples) {
    std::sort(samples.begin(), samples.end());
    const size_t n = samples.size();
    return n % 2 == 1 ? samples[n / 2] : 0.5 * (samples[n / 2 - 1] + samples[n / 2]);
}

Matrix random_matrix(int rows, int cols, Rng& rng) {
    Matrix m(rows, cols);
    for (double& v : m.data) v = 0.1 * rng.normal();
    return m;
}

}  // namespace

std::vector<BenchResult> time_bench(const std::vector<BenchShape>& shapes) {
    using clock = std::chrono::steady_clock;
    std::vector<BenchResult> results;
    for (size_t idx = 0; idx < shapes.size(); idx++) {
        const BenchShape& shape = shapes[idx];
        if (shape.repeats < 3) throw input_error("time_bench: need at least 3 repeats");
        if (shape.k < 1) throw input_error("time_bench: factored rank must be >= 1");
        BenchResult r;
        r.shape = shape;
        r.flops = flop_count(shape);

        Rng rng(1234 + idx);
        const Matrix x = random_matrix(shape.seq_len, shape.m, rng);
        const Matrix dense = random_matrix(shape.m, shape.n, rng);
        const Matrix a = random_matrix(shape.m, shape.k, rng);
        const Matrix b = random_matrix(shape.k, shape.n, rng);

        auto run = [&](bool factored) {
            if (factored) return matmul(matmul(x, a), b);
            return matmul(x, dense);
        };
        for (int path = 0; path < 2; path++) {
            const bool factored = path == 1;
            for (int i = 0; i < 3; i++) (void)run(factored);  // warm-up
            std::vector<double> samples;
            samples.reserve(shape.repeats);
            for (int i = 0; i < shape.repeats; i++) {
                const auto t0 = clock::now();
                const Matrix y = run(factored);
                const auto t1 = clock::now();
                if (!std::isfinite(y.data[0])) throw numerical_error("benchmark produced NaN");
                samples.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
            }
            (factored ? r.factored_ms : r.dense_ms) = median_ms(samples);
        }
        r.speedup = r.factored_ms > 0.0 ? r.dense_ms / r.factored_ms : 0.0;
        results.push_back(std::move(r));
    }
    return results;
}

}  // namespace lrc
