#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lrc/calibration.hpp"
#include "lrc/config.hpp"
#include "lrc/model.hpp"
#include "lrc/pipeline.hpp"

// Experiment harness: neuron ablations, perplexity-vs-ratio sweeps, the
// uniform/adaptive comparison, calibration-robustness grids, and the
// FLOP/wall-clock benchmark of dense vs factored matrix products.
namespace lrc {

enum class AblationMode { RemoveTopPn, RemoveBottomMn };

struct AblationSpec {
    AblationMode mode = AblationMode::RemoveTopPn;
    double fraction = 0.0;    // of d_ff, in (0,1); round(fraction*d_ff) neurons
    std::vector<int> layers;  // layers to ablate
};

// Returns a copy of w with the selected neurons' gate/up columns and down
// rows zeroed (shapes unchanged). Selection follows the calibration energy
// order: RemoveTopPn takes the most energetic neurons, RemoveBottomMn the
// least energetic. A fraction that rounds to zero neurons is an input error.
ModelWeights ablate_neurons(const ModelWeights& w, const CalibStats& stats,
                            const AblationSpec& spec);

// Fraction of a layer's neurons (energy-ordered) needed to reach `coverage`
// of total activation energy.
double energy_coverage_fraction(const CalibStats& stats, int layer, double coverage);

struct SweepRow {
    double target_ratio = 0.0;
    double achieved_ratio = 0.0;
    double objective = 0.0;
    double perplexity = 0.0;
    std::string error;  // nonempty when this ratio was infeasible
};

// Plans once, then compresses and evaluates at each ratio. Infeasible ratios
// produce an error row instead of aborting the sweep.
std::vector<SweepRow> ratio_sweep(const ModelWeights& w, const CalibStats& stats,
                                  const PipelineConfig& cfg, const std::vector<double>& ratios,
                                  const std::vector<int>& eval_tokens);

struct UniformAdaptiveResult {
    double objective_uniform = 0.0;
    double objective_adaptive = 0.0;
    double ppl_uniform = 0.0;
    double ppl_adaptive = 0.0;
};

// Same budget, two allocators: single keep-rate versus greedy.
UniformAdaptiveResult compare_uniform_adaptive(const ModelWeights& w, const CalibStats& stats,
                                               const PipelineConfig& cfg, double target_ratio,
                                               const std::vector<int>& eval_tokens);

struct RobustnessCell {
    int sequences = 0;
    int half = 0;  // 0 = first half of the calibration pool, 1 = second
    double perplexity = 0.0;
};

// Recalibrates, recompresses, and re-evaluates for every (count, pool half)
// combination at the config's target ratio.
std::vector<RobustnessCell> calib_robustness(const ModelWeights& w, const PipelineConfig& cfg,
                                             const std::vector<int>& calib_pool,
                                             const std::vector<int>& eval_tokens,
                                             const std::vector<int>& counts);

struct BenchShape {
    std::string label;
    int m = 0;        // input width (d_in)
    int n = 0;        // output width (d_out)
    int k = 0;        // factored rank; 0 means dense-only in flop_count
    int seq_len = 1;  // rows of the activation matrix
    int repeats = 10;
};

struct FlopCounts {
    long long dense_flops = 0;     // 2 * seq * m * n
    long long factored_flops = 0;  // 2 * seq * (m + n) * k
};

FlopCounts flop_count(const BenchShape& shape);

struct BenchResult {
    BenchShape shape;
    FlopCounts flops;
    double dense_ms = 0.0;     // median over repeats, 3 warm-ups excluded
    double factored_ms = 0.0;
    double speedup = 0.0;      // dense_ms / factored_ms
};

// Strictly sequential wall-clock benchmark on the monotonic clock.
std::vector<BenchResult> time_bench(const std::vector<BenchShape>& shapes);

}  // namespace lrc
