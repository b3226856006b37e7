#include "lrc/calibration.hpp"

#include <algorithm>
#include <numeric>

#include "lrc/errors.hpp"
#include "lrc/tensor_io.hpp"

namespace lrc {

const Matrix& CalibStats::gram_for(ComponentId id) const {
    if (id.layer < 0 || id.layer >= (int)layers.size())
        throw input_error("gram_for: layer out of range");
    const LayerStats& l = layers[id.layer];
    switch (id.kind) {
        case Kind::Q:
        case Kind::K:
        case Kind::V:
            return l.attn_gram;
        case Kind::O:
            return l.o_gram;
        case Kind::Gate:
        case Kind::Up:
            return l.ffn_gram;
        case Kind::Down:
            return l.h_gram;
    }
    throw input_error("gram_for: unknown component kind");
}

void accumulate_gram(Matrix& g, const Matrix& x) {
    if (g.rows != x.cols || g.cols != x.cols)
        throw shape_error("accumulate_gram: gram must be d x d for d input columns");
    const int d = x.cols;
    for (int t = 0; t < x.rows; t++) {
        const double* row = &x.data[(size_t)t * d];
        for (int i = 0; i < d; i++) {
            const double xi = row[i];
            if (xi == 0.0) continue;
            double* grow = &g.data[(size_t)i * d];
            for (int j = 0; j < d; j++) grow[j] += xi * row[j];
        }
    }
}

CalibStats collect(const ModelWeights& w, const std::vector<std::vector<int>>& sequences) {
    if (sequences.empty()) throw input_error("collect: no calibration sequences");
    const ModelConfig& c = w.config;

    CalibStats s;
    s.config = c;
    s.model_hash = model_hash(w);
    s.layers.resize(c.n_layers);
    for (LayerStats& l : s.layers) {
        l.attn_gram = Matrix(c.d_model, c.d_model);
        l.o_gram = Matrix(c.d_model, c.d_model);
        l.ffn_gram = Matrix(c.d_model, c.d_model);
        l.h_gram = Matrix(c.d_ff, c.d_ff);
        l.neuron_energy.assign(c.d_ff, 0.0);
    }

    for (const std::vector<int>& seq : sequences) {
        ForwardTrace trace;
        forward(w, seq, &trace);
        for (int l = 0; l < c.n_layers; l++) {
            LayerStats& ls = s.layers[l];
            accumulate_gram(ls.attn_gram, trace.layers[l].attn_in);
            accumulate_gram(ls.o_gram, trace.layers[l].o_in);
            accumulate_gram(ls.ffn_gram, trace.layers[l].ffn_in);
            accumulate_gram(ls.h_gram, trace.layers[l].h);
            const Matrix& h = trace.layers[l].h;
            for (int t = 0; t < h.rows; t++)
                for (int j = 0; j < c.d_ff; j++) ls.neuron_energy[j] += h(t, j) * h(t, j);
        }
        s.token_count += (long)seq.size();
    }
    return s;
}

EnergyProfile neuron_energy_profile(const CalibStats& stats, int layer) {
    if (layer < 0 || layer >= (int)stats.layers.size())
        throw input_error("neuron_energy_profile: layer out of range");
    const std::vector<double>& e = stats.layers[layer].neuron_energy;

    EnergyProfile p;
    p.order.resize(e.size());
    std::iota(p.order.begin(), p.order.end(), 0);
    std::stable_sort(p.order.begin(), p.order.end(),
                     [&](int a, int b) { return e[a] > e[b]; });
    p.total_energy = std::accumulate(e.begin(), e.end(), 0.0);
    p.cumulative.resize(e.size());
    if (p.total_energy <= 0.0) {
        p.zero_total = true;
        std::fill(p.cumulative.begin(), p.cumulative.end(), 1.0);
        return p;
    }
    double run = 0.0;
    for (size_t i = 0; i < e.size(); i++) {
        run += e[p.order[i]];
        p.cumulative[i] = std::min(run / p.total_energy, 1.0);
    }
    p.cumulative.back() = 1.0;
    return p;
}

}  // namespace lrc
