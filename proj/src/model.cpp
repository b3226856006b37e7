#include "lrc/model.hpp"

#include <cmath>
#include <utility>

#include "lrc/rng.hpp"

namespace lrc {

double silu(double x) { return x / (1.0 + std::exp(-x)); }

void ModelConfig::validate() const {
    if (vocab_size <= 0 || d_model <= 0 || d_ff <= 0 || n_layers <= 0 || n_heads <= 0 ||
        max_seq_len <= 0)
        throw config_error("model config: all dimensions must be positive");
    if (d_model % n_heads != 0) throw config_error("model config: d_model not divisible by n_heads");
    if (head_dim() % 2 != 0) throw config_error("model config: head_dim must be even for rotary");
}

const char* kind_name(Kind k) {
    switch (k) {
        case Kind::Q: return "q";
        case Kind::K: return "k";
        case Kind::V: return "v";
        case Kind::O: return "o";
        case Kind::Gate: return "gate";
        case Kind::Up: return "up";
        case Kind::Down: return "down";
    }
    return "?";
}

Kind kind_from_name(const std::string& name) {
    for (Kind k : all_kinds)
        if (name == kind_name(k)) return k;
    throw input_error("unknown component kind: " + name);
}

std::string component_name(ComponentId id) {
    return "layers." + std::to_string(id.layer) + "." + kind_name(id.kind);
}

const Matrix& ModelWeights::component(ComponentId id) const {
    return const_cast<ModelWeights*>(this)->component(id);
}

Matrix& ModelWeights::component(ComponentId id) {
    if (id.layer < 0 || id.layer >= (int)layers.size())
        throw input_error("component: layer out of range");
    LayerWeights& l = layers[id.layer];
    switch (id.kind) {
        case Kind::Q: return l.q;
        case Kind::K: return l.k;
        case Kind::V: return l.v;
        case Kind::O: return l.o;
        case Kind::Gate: return l.gate;
        case Kind::Up: return l.up;
        case Kind::Down: return l.down;
    }
    throw input_error("component: bad kind");
}

long ModelWeights::total_params() const {
    long n = embedding.param_count() + head.param_count() + (long)final_norm.size();
    for (const LayerWeights& l : layers) {
        n += l.q.param_count() + l.k.param_count() + l.v.param_count() + l.o.param_count();
        n += l.gate.param_count() + l.up.param_count() + l.down.param_count();
        n += (long)(l.attn_norm.size() + l.ffn_norm.size());
    }
    return n;
}

ModelWeights init_weights(const ModelConfig& config, uint64_t seed) {
    config.validate();
    Rng rng(seed);
    const double std_dev = 1.0 / std::sqrt((double)config.d_model);
    auto fill = [&](Matrix& m, int rows, int cols) {
        m = Matrix(rows, cols);
        for (double& v : m.data) v = std_dev * rng.normal();
    };

    ModelWeights w;
    w.config = config;
    fill(w.embedding, config.vocab_size, config.d_model);
    w.layers.resize(config.n_layers);
    for (LayerWeights& l : w.layers) {
        fill(l.q, config.d_model, config.d_model);
        fill(l.k, config.d_model, config.d_model);
        fill(l.v, config.d_model, config.d_model);
        fill(l.o, config.d_model, config.d_model);
        fill(l.gate, config.d_model, config.d_ff);
        fill(l.up, config.d_model, config.d_ff);
        fill(l.down, config.d_ff, config.d_model);
        l.attn_norm.assign(config.d_model, 1.0);
        l.ffn_norm.assign(config.d_model, 1.0);
    }
    w.final_norm.assign(config.d_model, 1.0);
    fill(w.head, config.d_model, config.vocab_size);
    return w;
}

const Matrix& ForwardTrace::input_for(ComponentId id) const {
    if (id.layer < 0 || id.layer >= (int)layers.size())
        throw input_error("trace: layer out of range");
    const LayerTrace& t = layers[id.layer];
    switch (id.kind) {
        case Kind::Q:
        case Kind::K:
        case Kind::V: return t.attn_in;
        case Kind::O: return t.o_in;
        case Kind::Gate:
        case Kind::Up: return t.ffn_in;
        case Kind::Down: return t.h;
    }
    throw input_error("trace: bad kind");
}

namespace {

Matrix rmsnorm(const Matrix& x, const std::vector<double>& scales, const ModelConfig& cfg) {
    if (cfg.norm_disabled) return x;
    Matrix y(x.rows, x.cols);
    for (int i = 0; i < x.rows; i++) {
        double ss = 0.0;
        for (int j = 0; j < x.cols; j++) ss += x(i, j) * x(i, j);
        const double r = std::sqrt(ss / x.cols + cfg.norm_eps);
        for (int j = 0; j < x.cols; j++) y(i, j) = x(i, j) * scales[j] / r;
    }
    return y;
}

// Rotary position encoding, half-split pairing (i, i + head_dim/2),
// base 10000, applied in place per head.
void rotary_inplace(Matrix& x, const ModelConfig& cfg) {
    const int hd = cfg.head_dim();
    const int half = hd / 2;
    std::vector<double> freq(half);
    for (int i = 0; i < half; i++) freq[i] = std::pow(10000.0, -2.0 * i / hd);
    for (int t = 0; t < x.rows; t++) {
        for (int h = 0; h < cfg.n_heads; h++) {
            const int base = h * hd;
            for (int i = 0; i < half; i++) {
                const double angle = t * freq[i];
                const double c = std::cos(angle), s = std::sin(angle);
                const double a = x(t, base + i), b = x(t, base + half + i);
                x(t, base + i) = a * c - b * s;
                x(t, base + half + i) = a * s + b * c;
            }
        }
    }
}

// Causal softmax(q k^T / sqrt(hd)) v per head, concatenated back to T x d.
Matrix attention_mix(const Matrix& q, const Matrix& k, const Matrix& v, const ModelConfig& cfg) {
    const int T = q.rows;
    const int hd = cfg.head_dim();
    const double inv_scale = 1.0 / std::sqrt((double)hd);
    Matrix mix(T, cfg.d_model);
    std::vector<double> scores;
    for (int h = 0; h < cfg.n_heads; h++) {
        const int base = h * hd;
        for (int t = 0; t < T; t++) {
            scores.assign(t + 1, 0.0);
            double smax = -1e300;
            for (int u = 0; u <= t; u++) {
                double dot = 0.0;
                for (int j = 0; j < hd; j++) dot += q(t, base + j) * k(u, base + j);
                scores[u] = dot * inv_scale;
                smax = std::max(smax, scores[u]);
            }
            double denom = 0.0;
            for (int u = 0; u <= t; u++) {
                scores[u] = std::exp(scores[u] - smax);
                denom += scores[u];
            }
            for (int u = 0; u <= t; u++) {
                const double p = scores[u] / denom;
                for (int j = 0; j < hd; j++) mix(t, base + j) += p * v(u, base + j);
            }
        }
    }
    return mix;
}

// Shared forward skeleton; Ops supplies the per-layer projections so the
// dense and compressed paths cannot drift apart structurally.
template <class Ops>
Matrix forward_core(const ModelConfig& cfg, const Matrix& embedding,
                    const std::vector<double>& final_norm, const Matrix& head, Ops&& ops,
                    const std::vector<int>& tokens, ForwardTrace* trace) {
    cfg.validate();
    const int T = (int)tokens.size();
    if (T == 0) throw input_error("forward: empty token sequence");
    if (T > cfg.max_seq_len) throw input_error("forward: sequence exceeds max_seq_len");
    for (int t : tokens)
        if (t < 0 || t >= cfg.vocab_size) throw input_error("forward: token id out of range");

    Matrix x(T, cfg.d_model);
    for (int t = 0; t < T; t++)
        for (int j = 0; j < cfg.d_model; j++) x(t, j) = embedding(tokens[t], j);

    if (trace) {
        trace->layers.clear();
        trace->layers.resize(cfg.n_layers);
    }

    for (int l = 0; l < cfg.n_layers; l++) {
        Matrix xn = rmsnorm(x, ops.attn_norm(l), cfg);
        if (trace) trace->layers[l].attn_in = xn;
        Matrix q = ops.proj(l, Kind::Q, xn);
        Matrix k = ops.proj(l, Kind::K, xn);
        Matrix v = ops.proj(l, Kind::V, xn);
        rotary_inplace(q, cfg);
        rotary_inplace(k, cfg);
        Matrix mixed = attention_mix(q, k, v, cfg);
        if (trace) trace->layers[l].o_in = mixed;
        Matrix attn_out = ops.proj(l, Kind::O, mixed);
        x = add(x, attn_out);

        Matrix xn2 = rmsnorm(x, ops.ffn_norm(l), cfg);
        if (trace) trace->layers[l].ffn_in = xn2;
        Matrix h = ops.ffn_h(l, xn2);  // T x d_ff, original neuron order
        if (trace) trace->layers[l].h = h;
        Matrix y = ops.ffn_down(l, h);
        x = add(x, y);
    }

    Matrix xf = rmsnorm(x, final_norm, cfg);
    Matrix logits = matmul(xf, head);
    if (trace) trace->logits = logits;
    return logits;
}

struct DenseOps {
    const ModelWeights& w;

    const std::vector<double>& attn_norm(int l) { return w.layers[l].attn_norm; }
    const std::vector<double>& ffn_norm(int l) { return w.layers[l].ffn_norm; }
    Matrix proj(int l, Kind k, const Matrix& x) {
        return matmul(x, w.component(ComponentId{l, k}));
    }
    Matrix ffn_h(int l, const Matrix& xn) {
        Matrix g = matmul(xn, w.layers[l].gate);
        Matrix u = matmul(xn, w.layers[l].up);
        for (size_t i = 0; i < g.data.size(); i++) g.data[i] = silu(g.data[i]) * u.data[i];
        return g;
    }
    Matrix ffn_down(int l, const Matrix& h) { return matmul(h, w.layers[l].down); }
};

struct CompressedOps {
    const CompressedModel& m;

    const std::vector<double>& attn_norm(int l) { return m.layers[l].attn_norm; }
    const std::vector<double>& ffn_norm(int l) { return m.layers[l].ffn_norm; }
    Matrix proj(int l, Kind k, const Matrix& x) {
        const CompressedLayer& cl = m.layers[l];
        switch (k) {
            case Kind::Q: return cl.q.apply(x);
            case Kind::K: return cl.k.apply(x);
            case Kind::V: return cl.v.apply(x);
            case Kind::O: return cl.o.apply(x);
            default: throw input_error("proj: ffn kind in attention position");
        }
    }
    Matrix ffn_h(int l, const Matrix& xn) {
        const CompressedLayer& cl = m.layers[l];
        if (!cl.split) {
            Matrix g = cl.gate.apply(xn);
            Matrix u = cl.up.apply(xn);
            for (size_t i = 0; i < g.data.size(); i++) g.data[i] = silu(g.data[i]) * u.data[i];
            return g;
        }
        const SplitFfnWeights& f = cl.ffn;
        Matrix h(xn.rows, m.config.d_ff);
        if (!f.partition.prime.empty()) {
            Matrix g = matmul(xn, f.pn_gate);
            Matrix u = matmul(xn, f.pn_up);
            for (int i = 0; i < g.rows; i++)
                for (size_t j = 0; j < f.partition.prime.size(); j++)
                    h(i, f.partition.prime[j]) = silu(g(i, (int)j)) * u(i, (int)j);
        }
        if (!f.partition.marginal.empty()) {
            Matrix g = f.mn_gate.apply(xn);
            Matrix u = f.mn_up.apply(xn);
            for (int i = 0; i < g.rows; i++)
                for (size_t j = 0; j < f.partition.marginal.size(); j++)
                    h(i, f.partition.marginal[j]) = silu(g(i, (int)j)) * u(i, (int)j);
        }
        return h;
    }
    Matrix ffn_down(int l, const Matrix& h) {
        const CompressedLayer& cl = m.layers[l];
        if (!cl.split) return cl.down.apply(h);
        const SplitFfnWeights& f = cl.ffn;
        Matrix y(h.rows, m.config.d_model);
        if (!f.partition.prime.empty())
            y = add(y, matmul(select_columns(h, f.partition.prime), f.pn_down));
        if (!f.partition.marginal.empty())
            y = add(y, f.mn_down.apply(select_columns(h, f.partition.marginal)));
        return y;
    }
};

}  // namespace

Matrix forward(const ModelWeights& w, const std::vector<int>& tokens, ForwardTrace* trace) {
    return forward_core(w.config, w.embedding, w.final_norm, w.head, DenseOps{w}, tokens, trace);
}

Matrix forward_compressed(const CompressedModel& m, const std::vector<int>& tokens,
                          ForwardTrace* trace) {
    return forward_core(m.config, m.embedding, m.final_norm, m.head, CompressedOps{m}, tokens,
                        trace);
}

LinearOp LinearOp::dense(Matrix m) {
    LinearOp op;
    op.factored = false;
    op.w = std::move(m);
    return op;
}

LinearOp LinearOp::low_rank(Matrix a, Matrix b) {
    if (a.cols != b.rows || a.cols < 1) throw shape_error("LinearOp: bad factor shapes");
    LinearOp op;
    op.factored = true;
    op.a = std::move(a);
    op.b = std::move(b);
    return op;
}

Matrix LinearOp::apply(const Matrix& x) const {
    if (factored) return matmul(matmul(x, a), b);
    return matmul(x, w);
}

long CompressedModel::total_params() const {
    long n = embedding.param_count() + head.param_count() + (long)final_norm.size();
    for (const CompressedLayer& l : layers) {
        n += l.q.param_count() + l.k.param_count() + l.v.param_count() + l.o.param_count();
        n += (long)(l.attn_norm.size() + l.ffn_norm.size());
        if (l.split) {
            const SplitFfnWeights& f = l.ffn;
            n += f.pn_gate.param_count() + f.pn_up.param_count() + f.pn_down.param_count();
            if (!f.partition.marginal.empty())
                n += f.mn_gate.param_count() + f.mn_up.param_count() + f.mn_down.param_count();
        } else {
            n += l.gate.param_count() + l.up.param_count() + l.down.param_count();
        }
    }
    return n;
}

CompressedModel as_compressed(const ModelWeights& w) {
    CompressedModel m;
    m.config = w.config;
    m.embedding = w.embedding;
    m.final_norm = w.final_norm;
    m.head = w.head;
    m.layers.resize(w.layers.size());
    for (size_t l = 0; l < w.layers.size(); l++) {
        CompressedLayer& cl = m.layers[l];
        cl.q = LinearOp::dense(w.layers[l].q);
        cl.k = LinearOp::dense(w.layers[l].k);
        cl.v = LinearOp::dense(w.layers[l].v);
        cl.o = LinearOp::dense(w.layers[l].o);
        cl.gate = LinearOp::dense(w.layers[l].gate);
        cl.up = LinearOp::dense(w.layers[l].up);
        cl.down = LinearOp::dense(w.layers[l].down);
        cl.attn_norm = w.layers[l].attn_norm;
        cl.ffn_norm = w.layers[l].ffn_norm;
        cl.split = false;
    }
    return m;
}

double nll_sum_from_logits(const Matrix& logits, const std::vector<int>& targets) {
    if ((int)targets.size() != logits.rows)
        throw input_error("nll: one target per logits row required");
    double sum = 0.0;
    for (int i = 0; i < logits.rows; i++) {
        if (targets[i] < 0 || targets[i] >= logits.cols)
            throw input_error("nll: target out of range");
        double m = logits(i, 0);
        for (int j = 1; j < logits.cols; j++) m = std::max(m, logits(i, j));
        double denom = 0.0;
        for (int j = 0; j < logits.cols; j++) denom += std::exp(logits(i, j) - m);
        sum += m + std::log(denom) - logits(i, targets[i]);
    }
    return sum;
}

namespace {

template <class Fwd>
double perplexity_impl(Fwd&& fwd, const std::vector<int>& corpus, int context_len) {
    if (corpus.empty()) throw input_error("perplexity: empty corpus");
    if (context_len < 2) throw input_error("perplexity: context_len must be at least 2");
    const int windows = (int)(corpus.size() / (size_t)context_len);
    if (windows == 0) throw input_error("perplexity: corpus shorter than one context window");

    double nll = 0.0;
    long count = 0;
    for (int w = 0; w < windows; w++) {
        std::vector<int> tokens(corpus.begin() + (size_t)w * context_len,
                                corpus.begin() + (size_t)(w + 1) * context_len);
        Matrix logits = fwd(tokens);
        Matrix scored(context_len - 1, logits.cols);
        for (int i = 0; i + 1 < context_len; i++)
            for (int j = 0; j < logits.cols; j++) scored(i, j) = logits(i, j);
        std::vector<int> targets(tokens.begin() + 1, tokens.end());
        nll += nll_sum_from_logits(scored, targets);
        count += context_len - 1;
    }
    return std::exp(nll / count);
}

}  // namespace

double perplexity(const ModelWeights& w, const std::vector<int>& corpus, int context_len) {
    return perplexity_impl([&](const std::vector<int>& t) { return forward(w, t); }, corpus,
                           context_len);
}

double perplexity(const CompressedModel& m, const std::vector<int>& corpus, int context_len) {
    return perplexity_impl([&](const std::vector<int>& t) { return forward_compressed(m, t); },
                           corpus, context_len);
}

std::vector<int> bytes_to_tokens(const std::string& text) {
    std::vector<int> out;
    out.reserve(text.size());
    for (unsigned char c : text) out.push_back((int)c);
    return out;
}

}  // namespace lrc
