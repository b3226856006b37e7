#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "lrc/bench.hpp"
#include "lrc/calibration.hpp"
#include "lrc/config.hpp"
#include "lrc/errors.hpp"
#include "lrc/model.hpp"
#include "lrc/pipeline.hpp"
#include "lrc/tensor_io.hpp"
#include "lrc/train.hpp"
#include "lrc/verify.hpp"

// Command-line front door: train-fixture, calibrate, compress, eval, ablate,
// sweep, bench, verify. Reports go to stdout, diagnostics to stderr. Exit
// codes: 0 success, 1 usage, 2 data/config/file problem, 3 numerical failure.
namespace {

using nlohmann::json;

std::string override_of(const char* key, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s=%.17g", key, v);
    return buf;
}

std::string override_of(const char* key, const std::string& v) {
    return std::string(key) + "=" + v;
}

lrc::PipelineConfig load_config(const std::string& path, const std::vector<std::string>& sets) {
    lrc::PipelineConfig cfg = lrc::load_pipeline_config(path);
    for (const std::string& s : sets) lrc::apply_override(cfg, s);
    return cfg;
}

std::vector<std::vector<int>> calibration_sequences(const lrc::PipelineConfig& cfg) {
    const std::vector<int> tokens = lrc::load_corpus_tokens(cfg.corpus_path);
    const lrc::CorpusSplit split = lrc::split_corpus(tokens, cfg.train_split);
    return lrc::draw_calibration_sequences(split.train, cfg.calib_sequences, cfg.calib_seq_len,
                                           cfg.calib_seed);
}

lrc::CalibStats stats_for(const lrc::ModelWeights& w, const lrc::PipelineConfig& cfg,
                          const std::string& stats_path) {
    if (!stats_path.empty()) return lrc::load_stats(stats_path);
    std::fprintf(stderr, "calibrating: %d sequences x %d tokens (seed %" PRIu64 ")\n",
                 cfg.calib_sequences, cfg.calib_seq_len, cfg.calib_seed);
    return lrc::collect(w, calibration_sequences(cfg));
}

std::vector<int> eval_token_stream(const lrc::PipelineConfig& cfg) {
    const std::vector<int> tokens = lrc::load_corpus_tokens(cfg.corpus_path);
    lrc::CorpusSplit split = lrc::split_corpus(tokens, cfg.train_split);
    if ((long)split.eval.size() > cfg.eval_tokens) split.eval.resize((size_t)cfg.eval_tokens);
    return split.eval;
}

std::string slurp_file(const std::string& path) {
    std::ifstream ifs(path, std::ios::binary);
    if (!ifs) throw lrc::io_error("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << ifs.rdbuf();
    return ss.str();
}

// Everything the trained fixture depends on: architecture, training schedule,
// split point, and the corpus bytes themselves.
uint64_t fixture_key(const lrc::PipelineConfig& cfg, const std::string& corpus_bytes) {
    std::ostringstream ss;
    ss << std::setprecision(17);
    const lrc::ModelConfig& m = cfg.model;
    ss << "model " << m.vocab_size << ' ' << m.d_model << ' ' << m.d_ff << ' ' << m.n_layers
       << ' ' << m.n_heads << ' ' << m.max_seq_len << ' ' << m.norm_eps << ' ' << m.norm_disabled
       << " train " << cfg.train.steps << ' ' << cfg.train.lr << ' ' << cfg.train.weight_decay
       << ' ' << cfg.train.batch_sequences << ' ' << cfg.train.seq_len << ' ' << cfg.train.seed
       << " split " << cfg.train_split;
    const std::string head = ss.str();
    const uint64_t h = lrc::fnv1a64((const unsigned char*)head.data(), head.size());
    return lrc::fnv1a64((const unsigned char*)corpus_bytes.data(), corpus_bytes.size(), h);
}

void cmd_train_fixture(const std::string& config_path, const std::vector<std::string>& sets,
                       const std::string& out) {
    const lrc::PipelineConfig cfg = load_config(config_path, sets);
    char key_line[32];
    std::snprintf(key_line, sizeof key_line, "%016" PRIx64 "\n",
                  fixture_key(cfg, slurp_file(cfg.corpus_path)));

    std::string stamp;
    try {
        stamp = slurp_file(out + ".stamp");
    } catch (const lrc::io_error&) {
    }
    if (stamp == key_line) {
        bool loadable = true;
        try {
            lrc::load_model(out);
        } catch (const std::exception&) {
            loadable = false;
        }
        if (loadable) {
            std::printf("fixture up to date: %s\n", out.c_str());
            return;
        }
    }

    const std::vector<int> tokens = lrc::load_corpus_tokens(cfg.corpus_path);
    const lrc::CorpusSplit split = lrc::split_corpus(tokens, cfg.train_split);
    lrc::ModelWeights w = lrc::init_weights(cfg.model, cfg.train.seed);
    std::fprintf(stderr, "training %d steps (batch %d x %d tokens, lr %g) on %zu tokens\n",
                 cfg.train.steps, cfg.train.batch_sequences, cfg.train.seq_len, cfg.train.lr,
                 split.train.size());
    const std::vector<double> losses = lrc::train(w, split.train, cfg.train);

    lrc::save_model(out, w);
    std::ofstream stamp_out(out + ".stamp", std::ios::binary | std::ios::trunc);
    stamp_out << key_line;
    if (!stamp_out.good()) throw lrc::io_error("cannot write '" + out + ".stamp'");

    std::printf("steps = %d\n", cfg.train.steps);
    std::printf("loss_first = %.4f\n", losses.front());
    std::printf("loss_last = %.4f\n", losses.back());
    std::printf("model_hash = %016" PRIx64 "\n", lrc::model_hash(w));
    std::printf("wrote %s\n", out.c_str());
}

void cmd_calibrate(const std::string& config_path, const std::vector<std::string>& sets,
                   const std::string& model_path, const std::string& out) {
    const lrc::PipelineConfig cfg = load_config(config_path, sets);
    const lrc::ModelWeights w = lrc::load_model(model_path);
    const lrc::CalibStats stats = lrc::collect(w, calibration_sequences(cfg));
    lrc::save_stats(out, stats);
    std::printf("sequences = %d\n", cfg.calib_sequences);
    std::printf("seq_len = %d\n", cfg.calib_seq_len);
    std::printf("tokens = %ld\n", stats.token_count);
    std::printf("model_hash = %016" PRIx64 "\n", stats.model_hash);
    std::printf("wrote %s\n", out.c_str());
}

void cmd_compress(const std::string& config_path, const std::vector<std::string>& sets,
                  const std::string& in, const std::string& out, const std::string& stats_path) {
    const lrc::PipelineConfig cfg = load_config(config_path, sets);
    const lrc::ModelWeights w = lrc::load_model(in);
    const lrc::CalibStats stats = stats_for(w, cfg, stats_path);
    const lrc::CompressionResult res = lrc::compress_model(w, stats, cfg);
    lrc::save_compressed(out, res.model, res.manifest);

    int dense = 0, factored = 0, split = 0;
    for (const lrc::ManifestComponent& c : res.manifest.components) {
        if (c.disposition == "split")
            split++;
        else if (c.disposition == "factored")
            factored++;
        else
            dense++;
    }
    std::printf("source_hash = %016" PRIx64 "\n", res.manifest.source_model_hash);
    std::printf("target_ratio = %.6f\n", res.manifest.target_ratio);
    std::printf("achieved_ratio = %.6f\n", res.manifest.achieved_ratio);
    std::printf("dense_payload_bytes = %" PRIu64 "\n", res.manifest.dense_payload_bytes);
    std::printf("compressed_payload_bytes = %" PRIu64 "\n",
                res.manifest.compressed_payload_bytes);
    std::printf("allocator_objective = %.6f\n", res.manifest.allocator_objective);
    std::printf("components = %d factored, %d dense, %d split-ffn\n", factored, dense, split);
    std::printf("wrote %s\n", out.c_str());
}

void cmd_eval(const std::string& config_path, const std::vector<std::string>& sets,
              const std::string& in) {
    const lrc::PipelineConfig cfg = load_config(config_path, sets);
    const std::string kind = json::parse(lrc::load_tensor_file(in).meta_json).value("kind", "");
    const std::vector<int> tokens = eval_token_stream(cfg);

    std::printf("file = %s\n", in.c_str());
    std::printf("kind = %s\n", kind.c_str());
    std::printf("eval_tokens = %zu\n", tokens.size());
    std::printf("context_len = %d\n", cfg.eval_context_len);
    if (kind == "dense-model") {
        const lrc::ModelWeights w = lrc::load_model(in);
        std::printf("perplexity = %.6f\n", lrc::perplexity(w, tokens, cfg.eval_context_len));
    } else if (kind == "compressed-model") {
        const auto [m, manifest] = lrc::load_compressed(in);
        std::printf("achieved_ratio = %.6f\n", manifest.achieved_ratio);
        std::printf("perplexity = %.6f\n", lrc::perplexity(m, tokens, cfg.eval_context_len));
    } else {
        throw lrc::input_error("'" + in + "' holds '" + kind + "', expected a model");
    }
}

void cmd_ablate(const std::string& config_path, const std::vector<std::string>& sets,
                const std::string& model_path, const std::string& stats_path,
                const std::string& mode_name, double fraction, std::vector<int> layers) {
    const lrc::PipelineConfig cfg = load_config(config_path, sets);
    const lrc::ModelWeights w = lrc::load_model(model_path);
    const lrc::CalibStats stats = lrc::load_stats(stats_path);

    lrc::AblationSpec spec;
    if (mode_name == "top-pn")
        spec.mode = lrc::AblationMode::RemoveTopPn;
    else if (mode_name == "bottom-mn")
        spec.mode = lrc::AblationMode::RemoveBottomMn;
    else
        throw lrc::input_error("unknown ablation mode '" + mode_name +
                               "' (expected top-pn or bottom-mn)");
    spec.fraction = fraction;
    if (layers.empty())
        for (int l = 0; l < w.config.n_layers; l++) layers.push_back(l);
    spec.layers = std::move(layers);

    const lrc::ModelWeights ablated = lrc::ablate_neurons(w, stats, spec);
    const std::vector<int> tokens = eval_token_stream(cfg);
    const double ppl_dense = lrc::perplexity(w, tokens, cfg.eval_context_len);
    const double ppl_ablated = lrc::perplexity(ablated, tokens, cfg.eval_context_len);

    std::printf("mode = %s\n", mode_name.c_str());
    std::printf("fraction = %.4f\n", fraction);
    std::printf("neurons_per_layer = %ld\n", std::lround(fraction * w.config.d_ff));
    std::printf("layers = %zu\n", spec.layers.size());
    std::printf("perplexity_dense = %.6f\n", ppl_dense);
    std::printf("perplexity_ablated = %.6f\n", ppl_ablated);
    std::printf("relative_change = %.6f\n", (ppl_ablated - ppl_dense) / ppl_dense);
}

void cmd_sweep(const std::string& config_path, const std::vector<std::string>& sets,
               const std::string& model_path, const std::string& stats_path,
               const std::vector<double>& ratios) {
    const lrc::PipelineConfig cfg = load_config(config_path, sets);
    const lrc::ModelWeights w = lrc::load_model(model_path);
    const lrc::CalibStats stats = stats_for(w, cfg, stats_path);
    const std::vector<int> tokens = eval_token_stream(cfg);
    const std::vector<lrc::SweepRow> rows = lrc::ratio_sweep(w, stats, cfg, ratios, tokens);

    std::printf("# target_ratio\tachieved_ratio\tobjective\tperplexity\tstatus\n");
    for (const lrc::SweepRow& r : rows) {
        if (r.error.empty())
            std::printf("%.4f\t%.6f\t%.6f\t%.6f\tok\n", r.target_ratio, r.achieved_ratio,
                        r.objective, r.perplexity);
        else
            std::printf("%.4f\t-\t-\t-\t%s\n", r.target_ratio, r.error.c_str());
    }
}

void cmd_bench(const std::string& config_path, const std::vector<std::string>& sets, int seq_len,
               int repeats) {
    const lrc::PipelineConfig cfg = load_config(config_path, sets);
    const double keep = 1.0 - cfg.target_ratio;
    const auto rank_for = [&](int m, int n) {
        long k = (long)(keep * (double)m * (double)n / (double)(m + n));
        k = k / cfg.rank_step * cfg.rank_step;
        return (int)std::max<long>(k, cfg.rank_step);
    };
    const int d = cfg.model.d_model;
    const int ff = cfg.model.d_ff;
    std::vector<lrc::BenchShape> shapes;
    for (const auto& [label, m, n] :
         std::vector<std::tuple<const char*, int, int>>{
             {"q", d, d}, {"gate", d, ff}, {"up", d, ff}, {"down", ff, d}}) {
        lrc::BenchShape s;
        s.label = label;
        s.m = m;
        s.n = n;
        s.k = rank_for(m, n);
        s.seq_len = seq_len;
        s.repeats = repeats;
        shapes.push_back(s);
    }

    const std::vector<lrc::BenchResult> results = lrc::time_bench(shapes);
    std::printf(
        "# label\tm\tn\tk\tseq\tdense_flops\tfactored_flops\tflop_ratio\tdense_ms\t"
        "factored_ms\tspeedup\n");
    for (const lrc::BenchResult& r : results) {
        std::printf("%s\t%d\t%d\t%d\t%d\t%lld\t%lld\t%.4f\t%.3f\t%.3f\t%.3f\n",
                    r.shape.label.c_str(), r.shape.m, r.shape.n, r.shape.k, r.shape.seq_len,
                    r.flops.dense_flops, r.flops.factored_flops,
                    (double)r.flops.factored_flops / (double)r.flops.dense_flops, r.dense_ms,
                    r.factored_ms, r.speedup);
    }
}

void cmd_verify(uint64_t seed) {
    const std::vector<lrc::VerifyReport> reports = lrc::run_all_verifications(seed);
    std::printf("# suite\ttrials\tchecks\tfailures\tworst\n");
    int failures = 0;
    for (const lrc::VerifyReport& r : reports) {
        std::printf("%s\t%d\t%d\t%d\t%.3g\n", r.name.c_str(), r.trials, r.checks, r.failures,
                    r.worst);
        failures += r.failures;
    }
    if (failures > 0)
        throw lrc::numerical_error(std::to_string(failures) + " verification checks failed");
    std::printf("all verification suites passed\n");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"low-rank compression toolkit for a small LLaMA-style transformer"};
    app.set_help_flag("--help", "print this help message and exit");
    app.require_subcommand(1);

    struct {
        std::string config, in, out, model, stats;
        std::vector<std::string> sets;
        std::vector<int> layers;
        std::vector<double> ratios{0.1, 0.2, 0.3, 0.4, 0.5};
        std::string mode = "top-pn";
        double fraction = 0.1;
        int seq_len = 256;
        int repeats = 10;
        uint64_t seed = 1;
    } o;

    const auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", o.config, "pipeline config file")->required();
        sub->add_option("--set", o.sets, "config override key=value (repeatable)");
    };

    CLI::App* train = app.add_subcommand(
        "train-fixture", "train the toy model on the corpus (no-op when already up to date)");
    add_common(train);
    train->add_option("--out", o.out, "output model file")->required();
    auto* train_seed = train->add_option("--seed", o.seed, "training seed (train.seed)");
    train->callback([&] {
        if (*train_seed) o.sets.push_back(override_of("train.seed", std::to_string(o.seed)));
        cmd_train_fixture(o.config, o.sets, o.out);
    });

    CLI::App* calibrate =
        app.add_subcommand("calibrate", "accumulate per-layer activation statistics");
    add_common(calibrate);
    calibrate->add_option("--model", o.model, "dense model file")->required();
    calibrate->add_option("--out", o.out, "output stats file")->required();
    auto* calib_seed = calibrate->add_option("--seed", o.seed, "sequence-draw seed (calib.seed)");
    calibrate->callback([&] {
        if (*calib_seed) o.sets.push_back(override_of("calib.seed", std::to_string(o.seed)));
        cmd_calibrate(o.config, o.sets, o.model, o.out);
    });

    CLI::App* compress =
        app.add_subcommand("compress", "compress a dense model to the target ratio");
    add_common(compress);
    compress->add_option("--in", o.in, "dense model file")->required();
    compress->add_option("--out", o.out, "output compressed file")->required();
    compress->add_option("--stats", o.stats, "calibration stats file (default: recalibrate)");
    double ratio = 0.0, gamma = 0.0;
    std::string rule;
    auto* ratio_opt = compress->add_option("--ratio", ratio, "target compression ratio");
    auto* gamma_opt = compress->add_option("--gamma", gamma, "prime-neuron fraction/threshold");
    auto* rule_opt = compress->add_option("--rule", rule,
                                          "selection rule (fixed_fraction|energy_threshold)");
    auto* comp_seed = compress->add_option("--seed", o.seed, "sequence-draw seed (calib.seed)");
    compress->callback([&] {
        if (*ratio_opt) o.sets.push_back(override_of("target_ratio", ratio));
        if (*gamma_opt) o.sets.push_back(override_of("gamma", gamma));
        if (*rule_opt) o.sets.push_back(override_of("rule", rule));
        if (*comp_seed) o.sets.push_back(override_of("calib.seed", std::to_string(o.seed)));
        cmd_compress(o.config, o.sets, o.in, o.out, o.stats);
    });

    CLI::App* eval = app.add_subcommand("eval", "perplexity of a dense or compressed model");
    add_common(eval);
    eval->add_option("--in", o.in, "model file (dense or compressed)")->required();
    eval->callback([&] { cmd_eval(o.config, o.sets, o.in); });

    CLI::App* ablate = app.add_subcommand("ablate", "zero a slice of FFN neurons and re-evaluate");
    add_common(ablate);
    ablate->add_option("--model", o.model, "dense model file")->required();
    ablate->add_option("--stats", o.stats, "calibration stats file")->required();
    ablate->add_option("--mode", o.mode, "top-pn (most energetic) or bottom-mn (least)")
        ->required();
    ablate->add_option("--fraction", o.fraction, "fraction of d_ff to remove")->required();
    ablate->add_option("--layers", o.layers, "layers to ablate (default: all)")->delimiter(',');
    ablate->callback(
        [&] { cmd_ablate(o.config, o.sets, o.model, o.stats, o.mode, o.fraction, o.layers); });

    CLI::App* sweep = app.add_subcommand("sweep", "perplexity across target ratios");
    add_common(sweep);
    sweep->add_option("--model", o.model, "dense model file")->required();
    sweep->add_option("--stats", o.stats, "calibration stats file (default: recalibrate)");
    sweep->add_option("--ratios", o.ratios, "target ratios")->delimiter(',');
    sweep->callback([&] { cmd_sweep(o.config, o.sets, o.model, o.stats, o.ratios); });

    CLI::App* bench =
        app.add_subcommand("bench", "time dense vs factored products at the config's shapes");
    add_common(bench);
    bench->add_option("--seq", o.seq_len, "activation rows per product");
    bench->add_option("--repeats", o.repeats, "timed repetitions per shape (median reported)");
    bench->callback([&] { cmd_bench(o.config, o.sets, o.seq_len, o.repeats); });

    CLI::App* verify =
        app.add_subcommand("verify", "run the truncation and split self-check suites");
    verify->add_option("--seed", o.seed, "instance seed");
    verify->callback([&] { cmd_verify(o.seed); });

    try {
        app.parse(argc, argv);
        return 0;
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        std::cerr << "ERROR 1: " << e.what() << "\n";
        return 1;
    } catch (const lrc::numerical_error& e) {
        std::cerr << "ERROR 3: " << e.what() << "\n";
        return 3;
    } catch (const lrc::error& e) {
        std::cerr << "ERROR 2: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "ERROR 2: " << e.what() << "\n";
        return 2;
    }
}
