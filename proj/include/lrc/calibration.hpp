#pragma once

#include <cstdint>
#include <vector>

#include "lrc/model.hpp"

namespace lrc {

// Accumulated second-moment statistics for one transformer layer.  Each gram
// matrix is X^T X over every calibration token's input to the named block.
struct LayerStats {
    Matrix attn_gram;  // input of the attention block (feeds q, k, v)
    Matrix o_gram;     // attention mix (feeds the output projection)
    Matrix ffn_gram;   // input of the FFN block (feeds gate and up)
    Matrix h_gram;     // gated hidden activations (feed the down projection)
    std::vector<double> neuron_energy;  // per-neuron sum of squared activations
};

struct CalibStats {
    ModelConfig config;
    uint64_t model_hash = 0;
    long token_count = 0;
    std::vector<LayerStats> layers;

    const Matrix& gram_for(ComponentId id) const;
};

// Neuron importance summary for one layer.  `order` lists neuron indices by
// decreasing energy (ties broken by smaller index); `cumulative[i]` is the
// fraction of total energy covered by the first i+1 neurons.  When every
// neuron is exactly zero the profile is flagged and the curve is reported as
// already complete.
struct EnergyProfile {
    std::vector<int> order;
    std::vector<double> cumulative;
    double total_energy = 0.0;
    bool zero_total = false;
};

// Runs the model over each sequence and accumulates per-layer grams and
// neuron energies.  Sequences are processed in order, so the result is
// bit-identical across runs with the same inputs.
CalibStats collect(const ModelWeights& w, const std::vector<std::vector<int>>& sequences);

EnergyProfile neuron_energy_profile(const CalibStats& stats, int layer);

// g += x^T x, accumulated in f64.
void accumulate_gram(Matrix& g, const Matrix& x);

}  // namespace lrc
