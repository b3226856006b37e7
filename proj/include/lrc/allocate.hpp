#pragma once

#include <string>
#include <vector>

#include "lrc/model.hpp"

namespace lrc {

// Whitened spectrum of one decomposable block, the allocator's unit of work.
struct ComponentSpectrum {
    std::string label;  // component name plus block tag, e.g. "layers.3.down.mn"
    ComponentId component{0, Kind::Q};
    std::vector<double> sigma_sq;  // descending, nonnegative
    int d_in = 0;
    int d_out = 0;

    long dense_params() const { return (long)d_in * (long)d_out; }
    int full_rank() const { return (int)sigma_sq.size(); }
    double total_energy() const;
    // An all-zero spectrum means truncation loses nothing; its score is
    // defined as 1 at every rank.
    bool zero_spectrum() const { return total_energy() == 0.0; }
};

// Fraction of whitened energy kept at rank r: sum of the first r sigma_sq
// over the total.  0 at r=0, 1 at full rank, nondecreasing.
double perf_score(const ComponentSpectrum& s, int r);

// Parameters of the rank-r factorization, (d_in + d_out) * r, capped at the
// dense parameter count.
long param_cost(const ComponentSpectrum& s, int r);

// One feasible operating point of a component: a quantized rank or the dense
// fallback (score 1 at dense cost).
struct RankChoice {
    int rank = 0;
    bool dense = false;
};

struct RankAllocation {
    std::vector<RankChoice> ranks;  // parallel to the spectra list
    long total_params = 0;
    double objective = 0.0;
};

// The candidate ladder of one component: min_rank, then +step increments
// while the factored cost stays below dense, then the dense fallback.  Rungs
// whose factored cost would be capped at dense are dominated by the fallback
// and omitted.  min_rank -1 means "one step".
std::vector<RankChoice> rank_ladder(const ComponentSpectrum& s, int step, int min_rank = -1);

// Bottom-up greedy: start every component on its lowest rung, repeatedly
// grant the affordable upgrade with the highest score gain per parameter
// (ties: larger gain, then smaller component index), stop when nothing fits.
// When quantization strands enough budget that the uniform allocation would
// score higher, the climb restarts from the uniform point, so the result
// never scores below uniform_allocate at the same budget.
RankAllocation greedy_allocate(const std::vector<ComponentSpectrum>& spectra, long budget,
                               int step, int min_rank = -1);

// Exact oracle: enumerates every rung combination (guarded to 1e7 tuples)
// and returns the best objective, breaking ties toward the lexicographically
// smallest rank tuple.
RankAllocation exhaustive_allocate(const std::vector<ComponentSpectrum>& spectra, long budget,
                                   int step, int min_rank = -1);

// Largest single keep-rate rho such that giving every component the rung
// nearest rho * full_rank fits the budget.
RankAllocation uniform_allocate(const std::vector<ComponentSpectrum>& spectra, long budget,
                                int step, int min_rank = -1);

double allocation_objective(const std::vector<ComponentSpectrum>& spectra,
                            const RankAllocation& alloc);

// Model-level parameter bookkeeping used to translate a whole-model target
// ratio into a budget for the decomposable blocks.
struct ParamAccounting {
    long total_params = 0;         // whole dense model
    long retained_params = 0;      // blocks kept dense no matter what
    long decomposable_params = 0;  // dense size of allocator-controlled blocks
    long min_cost = 0;             // cost with every block on its lowest rung
};

// Budget for the decomposable blocks so that the whole model keeps at most a
// (1 - target_ratio) fraction of its parameters; target_ratio is the
// fraction removed.  Throws config_error (reporting the minimum achievable
// ratio) when the target cannot be met.
long budget_from_ratio(const ParamAccounting& acc, double target_ratio);

}  // namespace lrc
