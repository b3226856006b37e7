#include "lrc/decompose.hpp"

#include <algorithm>
#include <cmath>

#include "lrc/errors.hpp"

namespace lrc {

std::vector<double> WhitenedSvd::sigma_sq() const {
    std::vector<double> s(svd.sigma.size());
    for (size_t i = 0; i < s.size(); i++) s[i] = svd.sigma[i] * svd.sigma[i];
    return s;
}

double WhitenedSvd::tail_energy(int k) const {
    double sum = 0.0;
    for (int i = full_rank() - 1; i >= k; i--) sum += svd.sigma[i] * svd.sigma[i];
    return sum;
}

WhitenedSvd whiten_and_decompose(const Matrix& w, const Matrix& gram,
                                 const DampingPolicy& policy) {
    if (w.rows != gram.rows || gram.rows != gram.cols)
        throw shape_error("whiten_and_decompose: gram must be d_in x d_in");
    if (w.rows == 0 || w.cols == 0)
        throw shape_error("whiten_and_decompose: empty weight matrix");

    WhitenedSvd out;
    out.d_in = w.rows;
    out.d_out = w.cols;
    out.chol = cholesky(gram, policy);
    Matrix m = matmul(transpose(out.chol.l), w);
    out.svd = svd(m);
    return out;
}

LowRankFactors truncate(const WhitenedSvd& wsvd, int k) {
    if (k < 1 || k > wsvd.full_rank())
        throw input_error("truncate: rank must be in [1, min(d_in, d_out)]");

    // U_k scaled by sqrt(sigma), then unwhitened by the transposed solve
    Matrix us(wsvd.d_in, k);
    for (int j = 0; j < k; j++) {
        const double root = std::sqrt(wsvd.svd.sigma[j]);
        for (int i = 0; i < wsvd.d_in; i++) us(i, j) = wsvd.svd.u(i, j) * root;
    }
    LowRankFactors f;
    f.a = solve_lower_transposed(wsvd.chol, us);
    f.b = Matrix(k, wsvd.d_out);
    for (int i = 0; i < k; i++) {
        const double root = std::sqrt(wsvd.svd.sigma[i]);
        for (int j = 0; j < wsvd.d_out; j++) f.b(i, j) = wsvd.svd.vt(i, j) * root;
    }
    return f;
}

NeuronPartition partition_neurons(const CalibStats& stats, int layer, SelectionRule rule,
                                  double gamma) {
    EnergyProfile profile = neuron_energy_profile(stats, layer);
    const int d_ff = (int)profile.order.size();
    if (gamma < 0.0 || gamma > 1.0)
        throw config_error("partition_neurons: fraction must lie in [0, 1]");

    int n_prime = 0;
    if (rule == SelectionRule::FixedFraction) {
        if (gamma == 0.0) {
            n_prime = 0;
        } else if (gamma == 1.0) {
            n_prime = d_ff;
        } else {
            n_prime = (int)std::lround(gamma * d_ff);
            n_prime = std::max(1, std::min(d_ff - 1, n_prime));
        }
    } else {
        // smallest prefix of the energy ordering covering >= gamma of total
        if (profile.zero_total) {
            n_prime = 0;
        } else {
            while (n_prime < d_ff && profile.cumulative[n_prime] < gamma) n_prime++;
            if (gamma > 0.0) n_prime++;  // prefix length, not index
            n_prime = std::min(n_prime, d_ff);
        }
    }

    NeuronPartition p;
    p.layer = layer;
    p.rule = rule;
    if (rule == SelectionRule::EnergyThreshold)
        p.gamma = n_prime > 0 ? profile.cumulative[n_prime - 1] : 0.0;
    else
        p.gamma = gamma;
    p.prime.assign(profile.order.begin(), profile.order.begin() + n_prime);
    p.marginal.assign(profile.order.begin() + n_prime, profile.order.end());
    std::sort(p.prime.begin(), p.prime.end());
    std::sort(p.marginal.begin(), p.marginal.end());
    return p;
}

namespace {

void validate_partition(const NeuronPartition& p, int d_ff) {
    if ((int)(p.prime.size() + p.marginal.size()) != d_ff)
        throw input_error("split_ffn: partition does not cover every neuron");
    std::vector<char> seen(d_ff, 0);
    for (const std::vector<int>* group : {&p.prime, &p.marginal})
        for (int idx : *group) {
            if (idx < 0 || idx >= d_ff || seen[idx])
                throw input_error("split_ffn: partition index out of range or repeated");
            seen[idx] = 1;
        }
}

}  // namespace

LinearOp factor_component(const Matrix& w, const Matrix& gram, int k, bool force_factored,
                          const DampingPolicy& policy) {
    if (k == -1) return LinearOp::dense(w);
    WhitenedSvd wsvd = whiten_and_decompose(w, gram, policy);
    if (k < 1 || k > wsvd.full_rank())
        throw input_error("factor_component: rank out of range");
    const long factored_cost = (long)(w.rows + w.cols) * k;
    const long dense_cost = (long)w.rows * w.cols;
    if (factored_cost >= dense_cost && !force_factored) {
        LinearOp op = LinearOp::dense(w);
        op.fallback_dense = true;
        return op;
    }
    LowRankFactors f = truncate(wsvd, k);
    return LinearOp::low_rank(std::move(f.a), std::move(f.b));
}

SplitFfnWeights split_ffn(const ModelWeights& w, const CalibStats& stats,
                          const NeuronPartition& partition, const FfnRanks& ranks,
                          bool force_factored, const DampingPolicy& policy) {
    const ModelConfig& c = w.config;
    if (partition.layer < 0 || partition.layer >= c.n_layers)
        throw input_error("split_ffn: layer out of range");
    validate_partition(partition, c.d_ff);
    const LayerWeights& lw = w.layers[partition.layer];
    const LayerStats& ls = stats.layers.at(partition.layer);

    SplitFfnWeights s;
    s.partition = partition;
    s.pn_gate = select_columns(lw.gate, partition.prime);
    s.pn_up = select_columns(lw.up, partition.prime);
    s.pn_down = select_rows(lw.down, partition.prime);

    const std::vector<int>& mn = partition.marginal;
    Matrix mn_gate = select_columns(lw.gate, mn);
    Matrix mn_up = select_columns(lw.up, mn);
    Matrix mn_down = select_rows(lw.down, mn);
    if (mn.empty()) {
        s.mn_gate = LinearOp::dense(std::move(mn_gate));
        s.mn_up = LinearOp::dense(std::move(mn_up));
        s.mn_down = LinearOp::dense(std::move(mn_down));
        return s;
    }

    s.mn_gate = factor_component(mn_gate, ls.ffn_gram, ranks.k_gate, force_factored, policy);
    s.mn_up = factor_component(mn_up, ls.ffn_gram, ranks.k_up, force_factored, policy);
    // the down projection sees only marginal activations, so its gram is the
    // marginal x marginal block of the hidden gram
    Matrix mn_h_gram = select_submatrix(ls.h_gram, mn);
    s.mn_down = factor_component(mn_down, mn_h_gram, ranks.k_down, force_factored, policy);
    return s;
}

LinearOp decompose_attention(const ModelWeights& w, const CalibStats& stats, ComponentId id,
                             int k, bool force_factored, const DampingPolicy& policy) {
    switch (id.kind) {
        case Kind::Q:
        case Kind::K:
        case Kind::V:
        case Kind::O:
            break;
        default:
            throw input_error("decompose_attention: component is not an attention projection");
    }
    if (id.layer < 0 || id.layer >= (int)w.layers.size())
        throw input_error("decompose_attention: layer out of range");
    return factor_component(w.component(id), stats.gram_for(id), k, force_factored, policy);
}

}  // namespace lrc
