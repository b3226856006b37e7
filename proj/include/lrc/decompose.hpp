#pragma once

#include <vector>

#include "lrc/calibration.hpp"
#include "lrc/linalg.hpp"
#include "lrc/model.hpp"

namespace lrc {

// Data-aware SVD of a weight matrix W (d_in x d_out) under the input gram
// G = X^T X: factor G = L L^T, then decompose M = L^T W = U diag(sigma) V^T.
// The rank-k truncation W_k minimizes ||X (W - W')||_F over all rank-k W',
// and the minimum squared error equals the discarded tail sum of sigma_i^2.
struct WhitenedSvd {
    CholeskyFactor chol;
    SvdResult svd;  // of L^T W
    int d_in = 0;
    int d_out = 0;

    int full_rank() const { return (int)svd.sigma.size(); }
    std::vector<double> sigma_sq() const;
    // sum of sigma_i^2 for i >= k, accumulated smallest-first
    double tail_energy(int k) const;
};

WhitenedSvd whiten_and_decompose(const Matrix& w, const Matrix& gram,
                                 const DampingPolicy& policy = {});

// Rank-k factors of the whitened decomposition:
// a = L^-T U_k sqrt(S_k)  (d_in x k),  b = sqrt(S_k) V_k^T  (k x d_out).
struct LowRankFactors {
    Matrix a, b;
};
LowRankFactors truncate(const WhitenedSvd& wsvd, int k);

// Requested ranks for the three marginal-neuron FFN blocks; -1 keeps a block
// dense unconditionally.
struct FfnRanks {
    int k_gate = -1;
    int k_up = -1;
    int k_down = -1;
};

// Selects prime neurons for one layer from accumulated activation energy.
// FixedFraction: |prime| = round(gamma * d_ff), clamped to [1, d_ff-1] for
// 0 < gamma < 1 (gamma 0 and 1 mean none/all).  EnergyThreshold: the smallest
// energy-ordered prefix covering at least a `gamma` fraction of total energy.
NeuronPartition partition_neurons(const CalibStats& stats, int layer, SelectionRule rule,
                                  double gamma);

// Factors W (d_in x d_out) at rank k against its input gram.  k == -1 keeps
// the matrix dense.  A factored result is only kept when it actually saves
// parameters, (d_in + d_out) * k < d_in * d_out; otherwise the dense matrix
// is returned with `fallback_dense` set, unless force_factored is true.
LinearOp factor_component(const Matrix& w, const Matrix& gram, int k,
                          bool force_factored = false, const DampingPolicy& policy = {});

// Splits one layer's FFN: prime columns/rows copied verbatim, marginal
// gate/up factored against the FFN input gram, marginal down factored against
// the marginal x marginal block of the hidden-activation gram.
SplitFfnWeights split_ffn(const ModelWeights& w, const CalibStats& stats,
                          const NeuronPartition& partition, const FfnRanks& ranks,
                          bool force_factored = false, const DampingPolicy& policy = {});

// Factors one attention projection (q, k, v, or o) at rank k against the
// matching calibration gram.
LinearOp decompose_attention(const ModelWeights& w, const CalibStats& stats, ComponentId id,
                             int k, bool force_factored = false,
                             const DampingPolicy& policy = {});

}  // namespace lrc
