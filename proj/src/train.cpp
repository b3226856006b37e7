#include "lrc/train.hpp"

#include <cmath>

#include "lrc/rng.hpp"

namespace lrc {

namespace {

void acc(Matrix& into, const Matrix& g) {
    for (size_t i = 0; i < into.data.size(); i++) into.data[i] += g.data[i];
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }
double silu_grad(double z) {
    const double s = sigmoid(z);
    return s * (1.0 + z * (1.0 - s));
}

// Everything the backward pass needs from one layer's forward.
struct LayerCache {
    Matrix x_in;   // residual stream entering the layer
    Matrix xn1;    // attn-norm output (input of q/k/v)
    Matrix q, k;   // post-rotary projections
    Matrix v;
    std::vector<Matrix> probs;  // per head, T x T lower-triangular attention
    Matrix mix;    // head-concatenated attention output (input of o)
    Matrix x_mid;  // residual stream after attention
    Matrix xn2;    // ffn-norm output (input of gate/up)
    Matrix g0, u0;  // pre-activation gate / up
    Matrix h;       // silu(g0) ⊙ u0
};

Matrix rmsnorm_fwd(const Matrix& x, const std::vector<double>& scales, const ModelConfig& cfg) {
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

// dy -> dx, accumulating the scale gradient.
Matrix rmsnorm_bwd(const Matrix& x, const std::vector<double>& scales, const Matrix& dy,
                   std::vector<double>& dscales, const ModelConfig& cfg) {
    if (cfg.norm_disabled) return dy;
    const int d = x.cols;
    Matrix dx(x.rows, d);
    for (int i = 0; i < x.rows; i++) {
        double ss = 0.0;
        for (int j = 0; j < d; j++) ss += x(i, j) * x(i, j);
        const double r = std::sqrt(ss / d + cfg.norm_eps);
        double dot = 0.0;  // sum_k dy_k * s_k * x_k
        for (int j = 0; j < d; j++) dot += dy(i, j) * scales[j] * x(i, j);
        const double c = dot / (d * r * r * r);
        for (int j = 0; j < d; j++) {
            dx(i, j) = dy(i, j) * scales[j] / r - x(i, j) * c;
            dscales[j] += dy(i, j) * x(i, j) / r;
        }
    }
    return dx;
}

void rotary_fwd(Matrix& x, const ModelConfig& cfg) {
    const int hd = cfg.head_dim(), half = hd / 2;
    for (int t = 0; t < x.rows; t++)
        for (int hh = 0; hh < cfg.n_heads; hh++)
            for (int i = 0; i < half; i++) {
                const double angle = t * std::pow(10000.0, -2.0 * i / hd);
                const double c = std::cos(angle), s = std::sin(angle);
                const int p = hh * hd + i, q = hh * hd + half + i;
                const double a = x(t, p), b = x(t, q);
                x(t, p) = a * c - b * s;
                x(t, q) = a * s + b * c;
            }
}

// Inverse rotation (the transpose): maps gradients w.r.t. rotated values to
// gradients w.r.t. pre-rotation values.
void rotary_bwd(Matrix& dx, const ModelConfig& cfg) {
    const int hd = cfg.head_dim(), half = hd / 2;
    for (int t = 0; t < dx.rows; t++)
        for (int hh = 0; hh < cfg.n_heads; hh++)
            for (int i = 0; i < half; i++) {
                const double angle = t * std::pow(10000.0, -2.0 * i / hd);
                const double c = std::cos(angle), s = std::sin(angle);
                const int p = hh * hd + i, q = hh * hd + half + i;
                const double da = dx(t, p), db = dx(t, q);
                dx(t, p) = c * da + s * db;
                dx(t, q) = -s * da + c * db;
            }
}

}  // namespace

Gradients Gradients::zeros_like(const ModelWeights& w) {
    Gradients g;
    g.embedding = Matrix(w.embedding.rows, w.embedding.cols);
    g.head = Matrix(w.head.rows, w.head.cols);
    g.final_norm.assign(w.final_norm.size(), 0.0);
    g.layers.resize(w.layers.size());
    for (size_t l = 0; l < w.layers.size(); l++) {
        const LayerWeights& lw = w.layers[l];
        LayerGradients& lg = g.layers[l];
        lg.q = Matrix(lw.q.rows, lw.q.cols);
        lg.k = Matrix(lw.k.rows, lw.k.cols);
        lg.v = Matrix(lw.v.rows, lw.v.cols);
        lg.o = Matrix(lw.o.rows, lw.o.cols);
        lg.gate = Matrix(lw.gate.rows, lw.gate.cols);
        lg.up = Matrix(lw.up.rows, lw.up.cols);
        lg.down = Matrix(lw.down.rows, lw.down.cols);
        lg.attn_norm.assign(lw.attn_norm.size(), 0.0);
        lg.ffn_norm.assign(lw.ffn_norm.size(), 0.0);
    }
    return g;
}

double loss_and_grad(const ModelWeights& w, const std::vector<int>& tokens, Gradients& g) {
    const ModelConfig& cfg = w.config;
    const int T = (int)tokens.size();
    if (T < 2) throw input_error("loss_and_grad: need at least 2 tokens");
    for (int t : tokens)
        if (t < 0 || t >= cfg.vocab_size) throw input_error("loss_and_grad: token out of range");

    const int hd = cfg.head_dim();
    const double inv_scale = 1.0 / std::sqrt((double)hd);

    // Forward, caching per-layer intermediates.
    Matrix x(T, cfg.d_model);
    for (int t = 0; t < T; t++)
        for (int j = 0; j < cfg.d_model; j++) x(t, j) = w.embedding(tokens[t], j);

    std::vector<LayerCache> caches(cfg.n_layers);
    for (int l = 0; l < cfg.n_layers; l++) {
        const LayerWeights& lw = w.layers[l];
        LayerCache& c = caches[l];
        c.x_in = x;
        c.xn1 = rmsnorm_fwd(x, lw.attn_norm, cfg);
        c.q = matmul(c.xn1, lw.q);
        c.k = matmul(c.xn1, lw.k);
        c.v = matmul(c.xn1, lw.v);
        rotary_fwd(c.q, cfg);
        rotary_fwd(c.k, cfg);

        c.mix = Matrix(T, cfg.d_model);
        c.probs.assign(cfg.n_heads, Matrix(T, T));
        for (int hh = 0; hh < cfg.n_heads; hh++) {
            const int base = hh * hd;
            Matrix& p = c.probs[hh];
            for (int t = 0; t < T; t++) {
                double smax = -1e300;
                for (int u = 0; u <= t; u++) {
                    double dot = 0.0;
                    for (int j = 0; j < hd; j++) dot += c.q(t, base + j) * c.k(u, base + j);
                    p(t, u) = dot * inv_scale;
                    smax = std::max(smax, p(t, u));
                }
                double denom = 0.0;
                for (int u = 0; u <= t; u++) {
                    p(t, u) = std::exp(p(t, u) - smax);
                    denom += p(t, u);
                }
                for (int u = 0; u <= t; u++) {
                    p(t, u) /= denom;
                    for (int j = 0; j < hd; j++) c.mix(t, base + j) += p(t, u) * c.v(u, base + j);
                }
            }
        }
        Matrix attn_out = matmul(c.mix, lw.o);
        c.x_mid = add(x, attn_out);

        c.xn2 = rmsnorm_fwd(c.x_mid, lw.ffn_norm, cfg);
        c.g0 = matmul(c.xn2, lw.gate);
        c.u0 = matmul(c.xn2, lw.up);
        c.h = Matrix(T, cfg.d_ff);
        for (size_t i = 0; i < c.h.data.size(); i++)
            c.h.data[i] = silu(c.g0.data[i]) * c.u0.data[i];
        Matrix y = matmul(c.h, lw.down);
        x = add(c.x_mid, y);
    }
    Matrix xf = rmsnorm_fwd(x, w.final_norm, cfg);
    Matrix logits = matmul(xf, w.head);

    // Loss (sum of NLLs, positions 0..T-2) and dlogits.
    double loss = 0.0;
    Matrix dlogits(T, cfg.vocab_size);
    for (int t = 0; t + 1 < T; t++) {
        double m = logits(t, 0);
        for (int j = 1; j < cfg.vocab_size; j++) m = std::max(m, logits(t, j));
        double denom = 0.0;
        for (int j = 0; j < cfg.vocab_size; j++) denom += std::exp(logits(t, j) - m);
        loss += m + std::log(denom) - logits(t, tokens[t + 1]);
        for (int j = 0; j < cfg.vocab_size; j++)
            dlogits(t, j) = std::exp(logits(t, j) - m) / denom;
        dlogits(t, tokens[t + 1]) -= 1.0;
    }

    // Backward through head and final norm.
    acc(g.head, matmul(transpose(xf), dlogits));
    Matrix dx = rmsnorm_bwd(x, w.final_norm, matmul(dlogits, transpose(w.head)), g.final_norm,
                            cfg);

    for (int l = cfg.n_layers - 1; l >= 0; l--) {
        const LayerWeights& lw = w.layers[l];
        LayerGradients& lg = g.layers[l];
        LayerCache& c = caches[l];

        // FFN block: x = x_mid + h*down
        acc(lg.down, matmul(transpose(c.h), dx));
        Matrix dh = matmul(dx, transpose(lw.down));
        Matrix dg0(T, cfg.d_ff), du0(T, cfg.d_ff);
        for (size_t i = 0; i < dh.data.size(); i++) {
            du0.data[i] = dh.data[i] * silu(c.g0.data[i]);
            dg0.data[i] = dh.data[i] * c.u0.data[i] * silu_grad(c.g0.data[i]);
        }
        acc(lg.gate, matmul(transpose(c.xn2), dg0));
        acc(lg.up, matmul(transpose(c.xn2), du0));
        Matrix dxn2 = add(matmul(dg0, transpose(lw.gate)), matmul(du0, transpose(lw.up)));
        Matrix dx_mid = add(dx, rmsnorm_bwd(c.x_mid, lw.ffn_norm, dxn2, lg.ffn_norm, cfg));

        // Attention block: x_mid = x_in + mix*o
        acc(lg.o, matmul(transpose(c.mix), dx_mid));
        Matrix dmix = matmul(dx_mid, transpose(lw.o));
        Matrix dq(T, cfg.d_model), dk(T, cfg.d_model), dv(T, cfg.d_model);
        for (int hh = 0; hh < cfg.n_heads; hh++) {
            const int base = hh * hd;
            const Matrix& p = c.probs[hh];
            for (int t = 0; t < T; t++) {
                // dprobs and the softmax Jacobian, row by row
                double row_dot = 0.0;
                std::vector<double> dprow(t + 1);
                for (int u = 0; u <= t; u++) {
                    double d = 0.0;
                    for (int j = 0; j < hd; j++) d += dmix(t, base + j) * c.v(u, base + j);
                    dprow[u] = d;
                    row_dot += p(t, u) * d;
                }
                for (int u = 0; u <= t; u++) {
                    const double dscore = p(t, u) * (dprow[u] - row_dot) * inv_scale;
                    for (int j = 0; j < hd; j++) {
                        dq(t, base + j) += dscore * c.k(u, base + j);
                        dk(u, base + j) += dscore * c.q(t, base + j);
                    }
                    for (int j = 0; j < hd; j++)
                        dv(u, base + j) += p(t, u) * dmix(t, base + j);
                }
            }
        }
        rotary_bwd(dq, cfg);
        rotary_bwd(dk, cfg);
        acc(lg.q, matmul(transpose(c.xn1), dq));
        acc(lg.k, matmul(transpose(c.xn1), dk));
        acc(lg.v, matmul(transpose(c.xn1), dv));
        Matrix dxn1 = matmul(dq, transpose(lw.q));
        acc(dxn1, matmul(dk, transpose(lw.k)));
        acc(dxn1, matmul(dv, transpose(lw.v)));
        dx = add(dx_mid, rmsnorm_bwd(c.x_in, lw.attn_norm, dxn1, lg.attn_norm, cfg));
    }

    for (int t = 0; t < T; t++)
        for (int j = 0; j < cfg.d_model; j++) g.embedding(tokens[t], j) += dx(t, j);
    return loss;
}

namespace {

void sgd_step(ModelWeights& w, const Gradients& g, double lr, double wd) {
    auto upd_m = [lr, wd](Matrix& m, const Matrix& gm) {
        for (size_t i = 0; i < m.data.size(); i++)
            m.data[i] -= lr * (gm.data[i] + wd * m.data[i]);
    };
    auto upd_v = [lr](std::vector<double>& v, const std::vector<double>& gv) {
        for (size_t i = 0; i < v.size(); i++) v[i] -= lr * gv[i];
    };
    upd_m(w.embedding, g.embedding);
    upd_m(w.head, g.head);
    upd_v(w.final_norm, g.final_norm);
    for (size_t l = 0; l < w.layers.size(); l++) {
        upd_m(w.layers[l].q, g.layers[l].q);
        upd_m(w.layers[l].k, g.layers[l].k);
        upd_m(w.layers[l].v, g.layers[l].v);
        upd_m(w.layers[l].o, g.layers[l].o);
        upd_m(w.layers[l].gate, g.layers[l].gate);
        upd_m(w.layers[l].up, g.layers[l].up);
        upd_m(w.layers[l].down, g.layers[l].down);
        upd_v(w.layers[l].attn_norm, g.layers[l].attn_norm);
        upd_v(w.layers[l].ffn_norm, g.layers[l].ffn_norm);
    }
}

void scale_grads(Gradients& g, double f) {
    auto sm = [f](Matrix& m) {
        for (double& v : m.data) v *= f;
    };
    auto sv = [f](std::vector<double>& v) {
        for (double& x : v) x *= f;
    };
    sm(g.embedding);
    sm(g.head);
    sv(g.final_norm);
    for (auto& lg : g.layers) {
        sm(lg.q);
        sm(lg.k);
        sm(lg.v);
        sm(lg.o);
        sm(lg.gate);
        sm(lg.up);
        sm(lg.down);
        sv(lg.attn_norm);
        sv(lg.ffn_norm);
    }
}

}  // namespace

std::vector<double> train(ModelWeights& w, const std::vector<int>& corpus,
                          const TrainConfig& cfg) {
    if ((int)corpus.size() <= cfg.seq_len) throw input_error("train: corpus shorter than seq_len");
    if (cfg.steps < 1 || cfg.batch_sequences < 1 || cfg.seq_len < 2)
        throw config_error("train: bad schedule");
    if (cfg.weight_decay < 0.0) throw config_error("train: negative weight_decay");
    if (cfg.seq_len > w.config.max_seq_len)
        throw config_error("train: seq_len exceeds the model's max sequence length");

    Rng rng(cfg.seed);
    std::vector<double> losses;
    losses.reserve(cfg.steps);
    for (int step = 0; step < cfg.steps; step++) {
        Gradients g = Gradients::zeros_like(w);
        double loss_sum = 0.0;
        long positions = 0;
        for (int b = 0; b < cfg.batch_sequences; b++) {
            const size_t start = rng.below(corpus.size() - cfg.seq_len);
            std::vector<int> tokens(corpus.begin() + start, corpus.begin() + start + cfg.seq_len);
            loss_sum += loss_and_grad(w, tokens, g);
            positions += cfg.seq_len - 1;
        }
        scale_grads(g, 1.0 / positions);
        sgd_step(w, g, cfg.lr, cfg.weight_decay);
        losses.push_back(loss_sum / positions);
    }
    return losses;
}

}  // namespace lrc
