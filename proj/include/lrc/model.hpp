#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "lrc/linalg.hpp"

// Minimal LLaMA-style decoder: token embedding, N blocks of (RMSNorm ->
// multi-head causal attention with rotary q/k -> residual, RMSNorm ->
// SiLU-gated FFN -> residual), final RMSNorm, untied output head. Activations
// are row vectors: y = x * W throughout. A compressed variant runs any
// projection through low-rank factors and/or an FFN split into a dense
// "prime" neuron block plus factored "marginal" blocks.
namespace lrc {

struct ModelConfig {
    int vocab_size = 258;  // bytes + BOS/EOS specials
    int d_model = 128;
    int d_ff = 512;
    int n_layers = 18;
    int n_heads = 4;
    int max_seq_len = 256;
    double norm_eps = 1e-6;
    // Test hook: replaces RMSNorm with the identity so scale-propagation
    // properties can be stated exactly.
    bool norm_disabled = false;

    int head_dim() const { return d_model / n_heads; }
    void validate() const;
};

constexpr int BOS_ID = 256;
constexpr int EOS_ID = 257;

enum class Kind { Q, K, V, O, Gate, Up, Down };
constexpr std::array<Kind, 7> all_kinds{Kind::Q,  Kind::K,    Kind::V,   Kind::O,
                                        Kind::Gate, Kind::Up, Kind::Down};
const char* kind_name(Kind k);
Kind kind_from_name(const std::string& name);

struct ComponentId {
    int layer = 0;
    Kind kind = Kind::Q;
    auto operator<=>(const ComponentId&) const = default;
};
std::string component_name(ComponentId id);  // e.g. "layers.3.gate"

struct LayerWeights {
    Matrix q, k, v, o;        // d_model x d_model
    Matrix gate, up;          // d_model x d_ff
    Matrix down;              // d_ff x d_model
    std::vector<double> attn_norm, ffn_norm;  // RMSNorm scales, length d_model
};

struct ModelWeights {
    ModelConfig config;
    Matrix embedding;  // vocab x d_model
    std::vector<LayerWeights> layers;
    std::vector<double> final_norm;
    Matrix head;  // d_model x vocab

    const Matrix& component(ComponentId id) const;
    Matrix& component(ComponentId id);
    long total_params() const;
};

// Deterministic scaled-normal init, std = 1/sqrt(d_model); norm scales 1.
ModelWeights init_weights(const ModelConfig& config, uint64_t seed);

// Per-layer activations recorded during a traced forward pass. Inputs are
// token-major (rows = tokens). q/k/v share attn_in, gate/up share ffn_in,
// down's input is the post-gate intermediate h.
struct LayerTrace {
    Matrix attn_in;  // T x d_model, feeds q/k/v
    Matrix o_in;     // T x d_model, feeds o (head-mixed attention output)
    Matrix ffn_in;   // T x d_model, feeds gate/up
    Matrix h;        // T x d_ff, feeds down: silu(x*gate) ⊙ (x*up)
};

struct ForwardTrace {
    std::vector<LayerTrace> layers;
    Matrix logits;

    const Matrix& input_for(ComponentId id) const;
};

// Returns logits (T x vocab). Validates token range and length; fills
// *trace when non-null.
Matrix forward(const ModelWeights& w, const std::vector<int>& tokens,
               ForwardTrace* trace = nullptr);

// A projection that is either a dense matrix or a rank-k factor pair
// applied as (x*a)*b.
struct LinearOp {
    bool factored = false;
    Matrix w;     // dense form
    Matrix a, b;  // d_in x k, k x d_out
    bool fallback_dense = false;  // factoring was requested but cost-capped

    static LinearOp dense(Matrix m);
    static LinearOp low_rank(Matrix a, Matrix b);
    Matrix apply(const Matrix& x) const;
    int d_in() const { return factored ? a.rows : w.rows; }
    int d_out() const { return factored ? b.cols : w.cols; }
    int rank() const { return factored ? a.cols : 0; }
    long param_count() const {
        return factored ? a.param_count() + b.param_count() : w.param_count();
    }
};

enum class SelectionRule { FixedFraction, EnergyThreshold };

// Index split of FFN intermediate neurons: "prime" neurons carry the most
// accumulated activation energy and stay dense, the rest are "marginal".
struct NeuronPartition {
    int layer = 0;
    std::vector<int> prime;     // sorted ascending
    std::vector<int> marginal;  // sorted ascending
    double gamma = 0.0;         // requested (FixedFraction) or achieved (EnergyThreshold) fraction
    SelectionRule rule = SelectionRule::FixedFraction;
};

// FFN with prime columns/rows kept verbatim and marginal blocks factored
// (or kept dense by the cost cap).
struct SplitFfnWeights {
    NeuronPartition partition;
    Matrix pn_gate, pn_up;  // d_model x |PN| (unused when |PN| == 0)
    Matrix pn_down;         // |PN| x d_model
    LinearOp mn_gate, mn_up;  // d_model x |MN|
    LinearOp mn_down;         // |MN| x d_model
};

struct CompressedLayer {
    LinearOp q, k, v, o;
    std::vector<double> attn_norm, ffn_norm;
    bool split = false;
    SplitFfnWeights ffn;      // when split
    LinearOp gate, up, down;  // when !split
};

struct CompressedModel {
    ModelConfig config;
    Matrix embedding;
    std::vector<CompressedLayer> layers;
    std::vector<double> final_norm;
    Matrix head;

    long total_params() const;
};

// Wraps dense weights as a degenerate compressed model (everything dense,
// no splits). forward_compressed on the result matches forward exactly.
CompressedModel as_compressed(const ModelWeights& w);

Matrix forward_compressed(const CompressedModel& m, const std::vector<int>& tokens,
                          ForwardTrace* trace = nullptr);

// Sum of per-position negative log-likelihoods, softmax in log space.
// logits row i scores targets[i].
double nll_sum_from_logits(const Matrix& logits, const std::vector<int>& targets);

// exp(mean token NLL) over non-overlapping windows of context_len tokens;
// within a window, position i predicts token i+1 (the window's first token
// is context only).
double perplexity(const ModelWeights& w, const std::vector<int>& corpus, int context_len);
double perplexity(const CompressedModel& m, const std::vector<int>& corpus, int context_len);

std::vector<int> bytes_to_tokens(const std::string& text);

double silu(double x);

}  // namespace lrc
