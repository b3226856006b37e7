#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "lrc/calibration.hpp"
#include "lrc/model.hpp"

namespace lrc {

// On-disk container: a text header describing named f32 tensors followed by a
// 64-byte-aligned little-endian payload.  `meta` carries one JSON object with
// sorted keys; shapes and offsets live in the header lines.
struct TensorFile {
    std::string meta_json = "{}";
    std::vector<std::pair<std::string, Matrix>> tensors;  // insertion order == file order

    const Matrix& tensor(const std::string& name) const;
    bool has(const std::string& name) const;
};

void save_tensor_file(const std::string& path, const TensorFile& file);
// Throws version_error on unknown magic/format version, truncated_file_error
// when the payload is shorter than the header promises, corrupt_file_error on
// any other malformed content.
TensorFile load_tensor_file(const std::string& path);

// Flat view of every model tensor in canonical save order (norm vectors are
// exposed as 1-row matrices).
struct TensorView {
    std::string name;
    int rows;
    int cols;
    const double* data;
};
std::vector<TensorView> model_tensor_views(const ModelWeights& w);

// FNV-1a over the canonical little-endian f32 payload of all model tensors.
uint64_t model_hash(const ModelWeights& w);
uint64_t fnv1a64(const unsigned char* bytes, size_t n, uint64_t seed = 14695981039346656037ULL);

void save_model(const std::string& path, const ModelWeights& w);
ModelWeights load_model(const std::string& path);

void save_stats(const std::string& path, const CalibStats& stats);
CalibStats load_stats(const std::string& path);

// Stats may only drive the compression of the model they were collected on.
void require_stats_match(const CalibStats& stats, const ModelWeights& w);

// What happened to one component (or one layer's FFN) during compression.
struct ManifestComponent {
    std::string name;
    std::string disposition;  // "dense", "factored", or "split"
    int rank = -1;            // factored rank
    double truncation_loss = 0.0;  // discarded whitened energy (factored)
    bool fallback_dense = false;   // factoring was requested but not cheaper
    std::vector<int> prime;        // split: prime neuron indices
    int k_gate = -1;               // split: marginal block ranks (-1 dense)
    int k_up = -1;
    int k_down = -1;
};

// Summary of one compression run, persisted in the compressed file's meta.
// `achieved_ratio` is the fraction of dense payload bytes removed,
// 1 - compressed/dense; it is recomputed from the tensors on load and must
// match the stored value within 1e-6.
struct CompressionManifest {
    uint64_t source_model_hash = 0;
    double gamma = 0.0;
    std::string selection_rule;  // "fixed_fraction" or "energy_threshold"
    double target_ratio = 0.0;
    int rank_step = 16;
    uint64_t seed = 0;
    std::vector<int> excluded_layers;
    std::vector<std::string> excluded_kinds;
    double allocator_objective = 0.0;
    double achieved_ratio = 0.0;
    uint64_t dense_payload_bytes = 0;
    uint64_t compressed_payload_bytes = 0;
    std::vector<ManifestComponent> components;
};

// Canonical tensor list of a compressed model (file order); factored blocks
// appear as <name>.a / <name>.b pairs, split FFNs as pn_/mn_ blocks.
std::vector<std::pair<std::string, Matrix>> compressed_tensor_list(const CompressedModel& m);

// Payload size (with 64-byte tensor alignment) of a tensor list, and of the
// canonical dense layout of a model config — the two inputs of the ratio.
uint64_t payload_bytes_of(const std::vector<std::pair<std::string, Matrix>>& tensors);
uint64_t dense_model_payload_bytes(const ModelConfig& c);

void save_compressed(const std::string& path, const CompressedModel& m,
                     const CompressionManifest& manifest);
std::pair<CompressedModel, CompressionManifest> load_compressed(const std::string& path);

}  // namespace lrc
