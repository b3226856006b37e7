#include "lrc/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "lrc/errors.hpp"
#include "lrc/rng.hpp"

namespace lrc {

std::vector<int> load_corpus_tokens(const std::string& path) {
    std::ifstream ifs(path, std::ios::binary);
    if (!ifs) throw io_error("cannot open corpus '" + path + "'");
    std::ostringstream ss;
    ss << ifs.rdbuf();
    const std::string text = ss.str();
    if (text.empty()) throw input_error("corpus '" + path + "' is empty");
    return bytes_to_tokens(text);
}

CorpusSplit split_corpus(const std::vector<int>& tokens, double train_split) {
    if (train_split <= 0.0 || train_split >= 1.0)
        throw input_error("train_split must be in (0,1)");
    const size_t cut = (size_t)((double)tokens.size() * train_split);
    if (cut == 0 || cut >= tokens.size())
        throw input_error("corpus too small to split at " + std::to_string(train_split));
    CorpusSplit s;
    s.train.assign(tokens.begin(), tokens.begin() + (long)cut);
    s.eval.assign(tokens.begin() + (long)cut, tokens.end());
    return s;
}

std::vector<std::vector<int>> draw_calibration_sequences(const std::vector<int>& tokens,
                                                         int n_sequences, int seq_len,
                                                         uint64_t seed) {
    if (n_sequences < 1) throw input_error("need at least one calibration sequence");
    if (seq_len < 1) throw input_error("calibration sequences need at least one token");
    if (tokens.size() < (size_t)seq_len)
        throw input_error("corpus shorter than one calibration sequence");
    Rng rng(seed);
    const uint64_t starts = tokens.size() - (size_t)seq_len + 1;
    std::vector<std::vector<int>> out;
    out.reserve(n_sequences);
    for (int i = 0; i < n_sequences; i++) {
        const size_t at = (size_t)rng.below(starts);
        out.emplace_back(tokens.begin() + (long)at, tokens.begin() + (long)(at + seq_len));
    }
    return out;
}

const NeuronPartition* CompressionPlan::partition_for(int layer) const {
    for (size_t i = 0; i < split_layers.size(); i++)
        if (split_layers[i] == layer) return &partitions[i];
    return nullptr;
}

namespace {

ComponentSpectrum spectrum_of(std::string label, ComponentId id, const Matrix& w,
                              const Matrix& gram, const DampingPolicy& policy) {
    const WhitenedSvd wsvd = whiten_and_decompose(w, gram, policy);
    ComponentSpectrum s;
    s.label = std::move(label);
    s.component = id;
    s.sigma_sq = wsvd.sigma_sq();
    s.d_in = wsvd.d_in;
    s.d_out = wsvd.d_out;
    return s;
}

long min_rung_cost(const ComponentSpectrum& s, int step) {
    const std::vector<RankChoice> ladder = rank_ladder(s, step);
    return ladder.front().dense ? s.dense_params() : param_cost(s, ladder.front().rank);
}

}  // namespace

CompressionPlan plan_compression(const ModelWeights& w, const CalibStats& stats,
                                 const PipelineConfig& cfg) {
    require_stats_match(stats, w);
    const ModelConfig& c = w.config;

    std::set<int> excluded_layers(cfg.exclude_layers.begin(), cfg.exclude_layers.end());
    std::set<Kind> excluded_kinds;
    for (const std::string& name : cfg.exclude_kinds) excluded_kinds.insert(kind_from_name(name));

    CompressionPlan plan;
    plan.config = cfg;
    plan.source_hash = model_hash(w);

    const bool ffn_fully_excluded = excluded_kinds.count(Kind::Gate) &&
                                    excluded_kinds.count(Kind::Up) &&
                                    excluded_kinds.count(Kind::Down);

    for (int l = 0; l < c.n_layers; l++) {
        if (excluded_layers.count(l)) continue;
        const LayerWeights& lw = w.layers[l];
        const LayerStats& ls = stats.layers[l];
        const std::string p = "layers." + std::to_string(l) + ".";

        for (Kind kind : {Kind::Q, Kind::K, Kind::V, Kind::O}) {
            if (excluded_kinds.count(kind)) continue;
            const ComponentId id{l, kind};
            plan.items.push_back({p + kind_name(kind), id,
                                  spectrum_of(p + kind_name(kind), id, w.component(id),
                                              stats.gram_for(id), cfg.damping)});
        }

        if (ffn_fully_excluded) continue;
        NeuronPartition part = partition_neurons(stats, l, cfg.rule, cfg.gamma);
        const std::vector<int>& mn = part.marginal;
        plan.split_layers.push_back(l);
        plan.partitions.push_back(part);
        if (mn.empty()) continue;  // everything prime: the split keeps all neurons dense

        if (!excluded_kinds.count(Kind::Gate)) {
            const ComponentId id{l, Kind::Gate};
            plan.items.push_back({p + "ffn.mn_gate", id,
                                  spectrum_of(p + "ffn.mn_gate", id,
                                              select_columns(lw.gate, mn), ls.ffn_gram,
                                              cfg.damping)});
        }
        if (!excluded_kinds.count(Kind::Up)) {
            const ComponentId id{l, Kind::Up};
            plan.items.push_back({p + "ffn.mn_up", id,
                                  spectrum_of(p + "ffn.mn_up", id, select_columns(lw.up, mn),
                                              ls.ffn_gram, cfg.damping)});
        }
        if (!excluded_kinds.count(Kind::Down)) {
            const ComponentId id{l, Kind::Down};
            plan.items.push_back({p + "ffn.mn_down", id,
                                  spectrum_of(p + "ffn.mn_down", id, select_rows(lw.down, mn),
                                              select_submatrix(ls.h_gram, mn), cfg.damping)});
        }
    }

    plan.accounting.total_params = w.total_params();
    for (const PlanItem& item : plan.items) {
        plan.accounting.decomposable_params += item.spectrum.dense_params();
        plan.accounting.min_cost += min_rung_cost(item.spectrum, cfg.rank_step);
    }
    plan.accounting.retained_params =
        plan.accounting.total_params - plan.accounting.decomposable_params;
    return plan;
}

namespace {

// per-item allocated rank in factor_component convention: -1 = keep dense
int chosen_rank(const RankChoice& choice) { return choice.dense ? -1 : choice.rank; }

struct LayerChoices {
    // index into plan.items / alloc.ranks per kind, -1 when not allocated
    int q = -1, k = -1, v = -1, o = -1, gate = -1, up = -1, down = -1;

    int& slot(Kind kind) {
        switch (kind) {
            case Kind::Q: return q;
            case Kind::K: return k;
            case Kind::V: return v;
            case Kind::O: return o;
            case Kind::Gate: return gate;
            case Kind::Up: return up;
            default: return down;
        }
    }
};

}  // namespace

CompressionResult assemble(const ModelWeights& w, const CalibStats& stats,
                           const CompressionPlan& plan, const RankAllocation& alloc,
                           double target_ratio) {
    if (alloc.ranks.size() != plan.items.size())
        throw input_error("allocation does not cover the plan's items");
    const ModelConfig& c = w.config;
    const PipelineConfig& cfg = plan.config;

    std::vector<LayerChoices> by_layer(c.n_layers);
    for (size_t i = 0; i < plan.items.size(); i++)
        by_layer[plan.items[i].id.layer].slot(plan.items[i].id.kind) = (int)i;

    CompressionResult out;
    out.allocation = alloc;
    out.model = as_compressed(w);
    CompressionManifest& man = out.manifest;

    auto item_rank = [&](int slot) { return chosen_rank(alloc.ranks[slot]); };
    auto item_loss = [&](int slot) {
        const RankChoice& choice = alloc.ranks[slot];
        if (choice.dense) return 0.0;
        const ComponentSpectrum& s = plan.items[slot].spectrum;
        double tail = 0.0;
        for (int i = s.full_rank() - 1; i >= choice.rank; i--) tail += s.sigma_sq[i];
        return tail;
    };

    for (int l = 0; l < c.n_layers; l++) {
        const std::string p = "layers." + std::to_string(l) + ".";
        LayerChoices& lc = by_layer[l];

        for (Kind kind : {Kind::Q, Kind::K, Kind::V, Kind::O}) {
            const int slot = lc.slot(kind);
            ManifestComponent mc;
            mc.name = p + kind_name(kind);
            if (slot < 0 || alloc.ranks[slot].dense) {
                mc.disposition = "dense";
            } else {
                const int rank = item_rank(slot);
                LinearOp op = decompose_attention(w, stats, {l, kind}, rank, false, cfg.damping);
                mc.disposition = op.factored ? "factored" : "dense";
                mc.fallback_dense = op.fallback_dense;
                mc.rank = op.factored ? rank : -1;
                mc.truncation_loss = item_loss(slot);
                LinearOp& dst = kind == Kind::Q   ? out.model.layers[l].q
                                : kind == Kind::K ? out.model.layers[l].k
                                : kind == Kind::V ? out.model.layers[l].v
                                                  : out.model.layers[l].o;
                dst = std::move(op);
            }
            man.components.push_back(std::move(mc));
        }

        const NeuronPartition* part = plan.partition_for(l);
        if (part == nullptr) {
            for (Kind kind : {Kind::Gate, Kind::Up, Kind::Down})
                man.components.push_back({p + kind_name(kind), "dense"});
            continue;
        }

        FfnRanks ranks;
        if (lc.gate >= 0) ranks.k_gate = item_rank(lc.gate);
        if (lc.up >= 0) ranks.k_up = item_rank(lc.up);
        if (lc.down >= 0) ranks.k_down = item_rank(lc.down);
        out.model.layers[l].split = true;
        out.model.layers[l].ffn = split_ffn(w, stats, *part, ranks, false, cfg.damping);

        ManifestComponent mc;
        mc.name = p + "ffn";
        mc.disposition = "split";
        mc.prime = part->prime;
        mc.k_gate = out.model.layers[l].ffn.mn_gate.factored ? ranks.k_gate : -1;
        mc.k_up = out.model.layers[l].ffn.mn_up.factored ? ranks.k_up : -1;
        mc.k_down = out.model.layers[l].ffn.mn_down.factored ? ranks.k_down : -1;
        mc.fallback_dense = out.model.layers[l].ffn.mn_gate.fallback_dense ||
                            out.model.layers[l].ffn.mn_up.fallback_dense ||
                            out.model.layers[l].ffn.mn_down.fallback_dense;
        for (Kind kind : {Kind::Gate, Kind::Up, Kind::Down}) {
            const int slot = lc.slot(kind);
            if (slot >= 0) mc.truncation_loss += item_loss(slot);
        }
        man.components.push_back(std::move(mc));
    }

    man.source_model_hash = plan.source_hash;
    man.gamma = cfg.gamma;
    man.selection_rule =
        cfg.rule == SelectionRule::FixedFraction ? "fixed_fraction" : "energy_threshold";
    man.target_ratio = target_ratio;
    man.rank_step = cfg.rank_step;
    man.seed = cfg.calib_seed;
    man.excluded_layers = cfg.exclude_layers;
    man.excluded_kinds = cfg.exclude_kinds;
    man.allocator_objective = alloc.objective;
    man.dense_payload_bytes = dense_model_payload_bytes(c);
    man.compressed_payload_bytes = payload_bytes_of(compressed_tensor_list(out.model));
    man.achieved_ratio =
        1.0 - (double)man.compressed_payload_bytes / (double)man.dense_payload_bytes;
    return out;
}

CompressionResult compress_to_ratio(const ModelWeights& w, const CalibStats& stats,
                                    const CompressionPlan& plan, double target_ratio) {
    const long budget = budget_from_ratio(plan.accounting, target_ratio);
    std::vector<ComponentSpectrum> spectra;
    spectra.reserve(plan.items.size());
    for (const PlanItem& item : plan.items) spectra.push_back(item.spectrum);
    const RankAllocation alloc = greedy_allocate(spectra, budget, plan.config.rank_step);
    return assemble(w, stats, plan, alloc, target_ratio);
}

CompressionResult compress_model(const ModelWeights& w, const CalibStats& stats,
                                 const PipelineConfig& cfg) {
    const CompressionPlan plan = plan_compression(w, stats, cfg);
    return compress_to_ratio(w, stats, plan, cfg.target_ratio);
}

}  // namespace lrc
