#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "lrc/allocate.hpp"
#include "lrc/calibration.hpp"
#include "lrc/config.hpp"
#include "lrc/decompose.hpp"
#include "lrc/model.hpp"
#include "lrc/tensor_io.hpp"

// End-to-end orchestration: corpus handling, calibration drawing, the
// compression plan (partitions + whitened spectra + parameter accounting),
// and assembly of an allocated plan into a compressed model with manifest.
namespace lrc {

// Reads a text corpus and tokenizes it byte-per-token.
std::vector<int> load_corpus_tokens(const std::string& path);

// Leading train_split fraction for training and calibration, the rest held
// out for perplexity. Both sides must be nonempty.
struct CorpusSplit {
    std::vector<int> train;
    std::vector<int> eval;
};
CorpusSplit split_corpus(const std::vector<int>& tokens, double train_split);

// n_sequences random windows of seq_len tokens, deterministic in the seed.
std::vector<std::vector<int>> draw_calibration_sequences(const std::vector<int>& tokens,
                                                         int n_sequences, int seq_len,
                                                         uint64_t seed);

// One allocator-scheduled block: an attention projection or one marginal FFN
// block of a split layer. The spectrum is the cached whitened spectrum.
struct PlanItem {
    std::string name;  // manifest name, e.g. "layers.3.q" or "layers.3.ffn.mn_down"
    ComponentId id;
    ComponentSpectrum spectrum;
};

struct CompressionPlan {
    PipelineConfig config;
    uint64_t source_hash = 0;
    std::vector<int> split_layers;            // layers whose FFN is split
    std::vector<NeuronPartition> partitions;  // parallel to split_layers
    std::vector<PlanItem> items;
    ParamAccounting accounting;

    const NeuronPartition* partition_for(int layer) const;
};

// Partitions neurons, decomposes every non-excluded block, and totals the
// parameter ledger. Pure in (w, stats, cfg); one plan serves any ratio.
CompressionPlan plan_compression(const ModelWeights& w, const CalibStats& stats,
                                 const PipelineConfig& cfg);

struct CompressionResult {
    CompressedModel model;
    CompressionManifest manifest;
    RankAllocation allocation;
};

// Builds the compressed model realizing one allocation of the plan's items.
CompressionResult assemble(const ModelWeights& w, const CalibStats& stats,
                           const CompressionPlan& plan, const RankAllocation& alloc,
                           double target_ratio);

// Greedy allocation at the target ratio, then assembly.
CompressionResult compress_to_ratio(const ModelWeights& w, const CalibStats& stats,
                                    const CompressionPlan& plan, double target_ratio);

// plan_compression + compress_to_ratio(cfg.target_ratio).
CompressionResult compress_model(const ModelWeights& w, const CalibStats& stats,
                                 const PipelineConfig& cfg);

}  // namespace lrc
