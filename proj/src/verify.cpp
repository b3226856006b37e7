#include "lrc/verify.hpp"

#include <algorithm>
#include <cmath>

#include "lrc/calibration.hpp"
#include "lrc/decompose.hpp"
#include "lrc/linalg.hpp"
#include "lrc/model.hpp"
#include "lrc/rng.hpp"

namespace lrc {
namespace {

constexpr int N_PAIR_TRIALS = 20;
constexpr int N_ALTERNATIVES = 100;
constexpr int N_SPLIT_TRIALS = 10;

Matrix random_matrix(Rng& rng, int rows, int cols) {
    Matrix m(rows, cols);
    for (double& v : m.data) v = rng.normal();
    return m;
}

// One random (W, X) pair with dims up to 64 and 2*d_in..4*d_in data rows.
// Seeded per trial so the identity and optimality suites see the exact same
// instances without sharing a stream.
struct PairInstance {
    Matrix w;     // d_in x d_out
    Matrix x;     // tokens x d_in
    Matrix gram;  // x^T x
};

PairInstance random_pair(uint64_t seed, int trial) {
    Rng rng(seed + 0x9e3779b97f4a7c15ULL * (uint64_t)(trial + 1));
    int d_in = 4 + (int)rng.below(61);
    int d_out = 4 + (int)rng.below(61);
    int tokens = 2 * d_in + (int)rng.below((uint64_t)(2 * d_in + 1));
    PairInstance inst;
    inst.w = random_matrix(rng, d_in, d_out);
    inst.x = random_matrix(rng, tokens, d_in);
    inst.gram = matmul(transpose(inst.x), inst.x);
    return inst;
}

// ||X (W - approx)||_F^2 — the quantity the truncation is meant to minimize.
double data_weighted_loss(const Matrix& x, const Matrix& w, const Matrix& approx) {
    double f = frobenius_norm(matmul(x, sub(w, approx)));
    return f * f;
}

// Least-squares right factor for a fixed left factor: minimizes
// ||X W - (X a) b||_F^2 via the normal equations of P = X a.
Matrix best_right_factor(const Matrix& x, const Matrix& w, const Matrix& a) {
    Matrix p = matmul(x, a);
    CholeskyFactor chol = cholesky(matmul(transpose(p), p));
    Matrix rhs = matmul(transpose(p), matmul(x, w));
    return solve_lower_transposed(chol, solve_lower_triangular(chol, rhs));
}

}  // namespace

VerifyReport verify_truncation_identity(uint64_t seed) {
    VerifyReport report;
    report.name = "truncation-identity";
    for (int trial = 0; trial < N_PAIR_TRIALS; trial++) {
        PairInstance inst = random_pair(seed, trial);
        WhitenedSvd wsvd = whiten_and_decompose(inst.w, inst.gram);
        double total = wsvd.tail_energy(0);
        for (int k = 1; k <= wsvd.full_rank(); k++) {
            LowRankFactors f = truncate(wsvd, k);
            double lhs = data_weighted_loss(inst.x, inst.w, matmul(f.a, f.b));
            double rhs = wsvd.tail_energy(k);
            double rel = std::fabs(lhs - rhs) / std::max(rhs, 1e-12 * std::max(total, 1.0));
            report.checks++;
            report.worst = std::max(report.worst, rel);
            if (rel > 1e-7) report.failures++;
        }
        report.trials++;
    }
    return report;
}

VerifyReport verify_truncation_optimality(uint64_t seed) {
    VerifyReport report;
    report.name = "truncation-optimality";
    report.worst = -1.0;
    for (int trial = 0; trial < N_PAIR_TRIALS; trial++) {
        PairInstance inst = random_pair(seed, trial);
        WhitenedSvd wsvd = whiten_and_decompose(inst.w, inst.gram);
        Rng rng(seed + 0xa0761d6478bd642fULL + (uint64_t)trial);
        int full = wsvd.full_rank();
        int k = full < 2 ? 1 : 1 + (int)rng.below((uint64_t)(full - 1));
        LowRankFactors f = truncate(wsvd, k);
        double base = data_weighted_loss(inst.x, inst.w, matmul(f.a, f.b));
        double total = wsvd.tail_energy(0);
        for (int alt = 0; alt < N_ALTERNATIVES; alt++) {
            Matrix a = random_matrix(rng, inst.w.rows, k);
            // Odd draws pair the random column space with its best possible
            // right factor, which is the strongest random competitor family.
            Matrix b = alt % 2 == 1 ? best_right_factor(inst.x, inst.w, a)
                                    : random_matrix(rng, k, inst.w.cols);
            double loss = data_weighted_loss(inst.x, inst.w, matmul(a, b));
            double margin = (base - loss) / std::max(loss, 1e-12 * std::max(total, 1.0));
            report.checks++;
            report.worst = std::max(report.worst, margin);
            if (base > loss * (1.0 + 1e-9) + 1e-12 * total) report.failures++;
        }
        report.trials++;
    }
    return report;
}

VerifyReport verify_split_exactness(uint64_t seed) {
    VerifyReport report;
    report.name = "split-exactness";
    for (int trial = 0; trial < N_SPLIT_TRIALS; trial++) {
        Rng rng(seed + 0xd1b54a32d192ed03ULL + (uint64_t)trial);
        ModelConfig config;
        config.vocab_size = 32;
        config.d_model = 8 + 4 * (int)rng.below(3);
        config.d_ff = 16 + 4 * (int)rng.below(5);
        config.n_layers = 2 + (int)rng.below(3);
        config.n_heads = 2;
        config.max_seq_len = 16;
        ModelWeights w = init_weights(config, rng.next_u64());

        std::vector<std::vector<int>> sequences(3);
        for (auto& seq : sequences) {
            seq.resize(8 + rng.below(9));
            for (int& t : seq) t = (int)rng.below((uint64_t)config.vocab_size);
        }
        CalibStats stats = collect(w, sequences);

        int layer = (int)rng.below((uint64_t)config.n_layers);
        double gamma = 0.15 + 0.7 * rng.uniform();
        NeuronPartition partition =
            partition_neurons(stats, layer, SelectionRule::FixedFraction, gamma);
        int full = std::min((int)partition.marginal.size(), config.d_model);
        SplitFfnWeights split =
            split_ffn(w, stats, partition, FfnRanks{full, full, full}, /*force_factored=*/true);

        CompressedModel cm = as_compressed(w);
        cm.layers[layer].split = true;
        cm.layers[layer].ffn = split;

        for (const auto& seq : sequences) {
            double diff = max_abs_diff(forward(w, seq), forward_compressed(cm, seq));
            report.checks++;
            report.worst = std::max(report.worst, diff);
            if (diff > 1e-6) report.failures++;
        }
        report.trials++;
    }
    return report;
}

std::vector<VerifyReport> run_all_verifications(uint64_t seed) {
    return {verify_truncation_identity(seed), verify_truncation_optimality(seed),
            verify_split_exactness(seed)};
}

}  // namespace lrc
