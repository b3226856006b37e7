#pragma once

#include <cstdint>
#include <vector>

#include "lrc/model.hpp"

// Tiny plain-SGD trainer on next-token cross-entropy, with hand-written
// backprop. This exists only to give the toy model differentiated neuron
// statistics before ablation/sparsity experiments; it is a fixture utility,
// not part of the compression math.
namespace lrc {

struct TrainConfig {
    int steps = 200;
    double lr = 0.1;
    // L2 penalty on weight matrices (norm gains are exempt). Unused FFN
    // neurons carry init-scale activation energy forever under bare SGD;
    // decay lets the fixture develop a quiet tail like a real network.
    double weight_decay = 0.0;
    int batch_sequences = 4;
    int seq_len = 128;
    uint64_t seed = 1;
};

struct LayerGradients {
    Matrix q, k, v, o, gate, up, down;
    std::vector<double> attn_norm, ffn_norm;
};

struct Gradients {
    Matrix embedding;
    std::vector<LayerGradients> layers;
    std::vector<double> final_norm;
    Matrix head;

    static Gradients zeros_like(const ModelWeights& w);
};

// Accumulates d(sum of per-position NLL)/d(params) for one sequence into g
// and returns the NLL sum; positions 0..T-2 predict tokens 1..T-1.
double loss_and_grad(const ModelWeights& w, const std::vector<int>& tokens, Gradients& g);

// In-place SGD; returns the mean per-token training loss of each step.
std::vector<double> train(ModelWeights& w, const std::vector<int>& corpus,
                          const TrainConfig& cfg);

}  // namespace lrc
