#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "lrc/config.hpp"

using namespace lrc;

TEST_CASE("config text parses into typed fields") {
    const std::string text =
        "# toy pipeline\n"
        "model.vocab_size = 258\n"
        "model.d_model = 64   # inline comment\n"
        "model.d_ff=256\n"
        "model.n_layers = 6\n"
        "model.n_heads = 4\n"
        "model.max_seq_len = 128\n"
        "\n"
        "corpus = data/corpus.txt\n"
        "train_split = 0.75\n"
        "train.steps = 40\n"
        "train.lr = 0.25\n"
        "train.weight_decay = 0.01\n"
        "train.batch_sequences = 2\n"
        "train.seq_len = 64\n"
        "train.seed = 11\n"
        "calib.sequences = 8\n"
        "calib.seq_len = 96\n"
        "calib.seed = 5\n"
        "rule = energy_threshold\n"
        "gamma = 0.9\n"
        "gamma = 0.2          # repeated keys: last one wins\n"
        "target_ratio = 0.4\n"
        "rank_step = 8\n"
        "exclude.kinds = v, k\n"
        "exclude.layers = 0, 5\n"
        "damping.ladder = 0, 1e-9, 1e-5\n"
        "eval.context_len = 128\n"
        "eval.tokens = 2000\n";
    const PipelineConfig cfg = parse_pipeline_config(text, "/cfgs");

    CHECK(cfg.model.d_model == 64);
    CHECK(cfg.model.d_ff == 256);
    CHECK(cfg.model.n_layers == 6);
    CHECK(cfg.model.n_heads == 4);
    CHECK(cfg.model.max_seq_len == 128);
    CHECK(cfg.corpus_path == "/cfgs/data/corpus.txt");
    CHECK(cfg.train_split == 0.75);
    CHECK(cfg.train.steps == 40);
    CHECK(cfg.train.lr == 0.25);
    CHECK(cfg.train.weight_decay == 0.01);
    CHECK(cfg.train.batch_sequences == 2);
    CHECK(cfg.train.seq_len == 64);
    CHECK(cfg.train.seed == 11);
    CHECK(cfg.calib_sequences == 8);
    CHECK(cfg.calib_seq_len == 96);
    CHECK(cfg.calib_seed == 5);
    CHECK(cfg.rule == SelectionRule::EnergyThreshold);
    CHECK(cfg.gamma == 0.2);
    CHECK(cfg.target_ratio == 0.4);
    CHECK(cfg.rank_step == 8);
    CHECK(cfg.exclude_kinds == std::vector<std::string>{"v", "k"});
    CHECK(cfg.exclude_layers == std::vector<int>{0, 5});
    CHECK(cfg.damping.ladder == std::vector<double>{0.0, 1e-9, 1e-5});
    CHECK(cfg.eval_context_len == 128);
    CHECK(cfg.eval_tokens == 2000);
}

TEST_CASE("defaults fill in what the file leaves unset") {
    const PipelineConfig cfg = parse_pipeline_config("model.n_layers = 10\n", "");
    CHECK(cfg.model.vocab_size == 258);
    CHECK(cfg.model.d_model == 128);
    CHECK(cfg.rule == SelectionRule::FixedFraction);
    CHECK(cfg.gamma == 0.15);
    CHECK(cfg.rank_step == 16);
    CHECK(cfg.calib_sequences == 32);
    CHECK(cfg.calib_seq_len == 256);
    CHECK(cfg.calib_seed == 7);
    CHECK(cfg.train_split == 0.8);
    CHECK(cfg.exclude_kinds == std::vector<std::string>{"v"});
    CHECK(cfg.exclude_layers == std::vector<int>{0, 1, 8, 9});  // first and last two

    SUBCASE("the default layer exclusions collapse for very shallow models") {
        const PipelineConfig small = parse_pipeline_config("model.n_layers = 3\n", "");
        CHECK(small.exclude_layers == std::vector<int>{0, 1, 2});
    }
    SUBCASE("an explicit empty list disables the exclusion defaults") {
        const PipelineConfig none =
            parse_pipeline_config("exclude.kinds =\nexclude.layers =\n", "");
        CHECK(none.exclude_kinds.empty());
        CHECK(none.exclude_layers.empty());
    }
    SUBCASE("explicit layer lists are deduplicated and sorted") {
        const PipelineConfig dup = parse_pipeline_config("exclude.layers = 4, 1, 4\n", "");
        CHECK(dup.exclude_layers == std::vector<int>{1, 4});
    }
}

TEST_CASE("config files load with paths anchored at the file") {
    const auto dir = std::filesystem::temp_directory_path() / "lrc_cfg_tests";
    std::filesystem::create_directories(dir);
    const std::string path = (dir / "p.cfg").string();
    {
        std::ofstream ofs(path);
        ofs << "corpus = sub/corpus.txt\ngamma = 0.25\n";
    }
    const PipelineConfig cfg = load_pipeline_config(path);
    CHECK(cfg.gamma == 0.25);
    CHECK(cfg.corpus_path == (dir / "sub/corpus.txt").lexically_normal().string());
    CHECK(cfg.base_dir == dir.string());

    const PipelineConfig abs = parse_pipeline_config("corpus = /abs/c.txt\n", dir.string());
    CHECK(abs.corpus_path == "/abs/c.txt");

    CHECK_THROWS_AS(load_pipeline_config((dir / "missing.cfg").string()), io_error);
}

TEST_CASE("bad configs are rejected up front") {
    auto bad = [](const std::string& text) {
        CHECK_THROWS_AS(parse_pipeline_config(text, ""), config_error);
    };
    bad("no_such_key = 1\n");
    bad("gamma\n");                      // no assignment
    bad(" = 0.5\n");                     // empty key
    bad("gamma = banana\n");
    bad("gamma = 0.5x\n");               // trailing junk
    bad("gamma = 1.5\n");
    bad("target_ratio = 1.0\n");
    bad("rank_step = 0\n");
    bad("rule = sometimes\n");
    bad("train.seed = -4\n");
    bad("train_split = 1.0\n");
    bad("exclude.kinds = q, banana\n");
    bad("exclude.layers = 18\n");        // default n_layers is 18
    bad("exclude.layers = -1\n");
    bad("calib.seq_len = 257\n");        // above default max_seq_len
    bad("calib.sequences = 0\n");
    bad("eval.context_len = 1\n");
    bad("eval.tokens = 1\n");
    bad("damping.ladder =\n");
    bad("model.d_model = 100\n");        // head_dim 25 is odd, rotary needs even
}

TEST_CASE("overrides go through the same registry and checks") {
    PipelineConfig cfg = parse_pipeline_config("gamma = 0.15\n", "/cfgs");
    apply_override(cfg, "gamma=0.3");
    CHECK(cfg.gamma == 0.3);
    apply_override(cfg, "exclude.layers = 2,3");
    CHECK(cfg.exclude_layers == std::vector<int>{2, 3});
    apply_override(cfg, "rule=energy_threshold");
    CHECK(cfg.rule == SelectionRule::EnergyThreshold);
    apply_override(cfg, "corpus=other.txt");
    CHECK(cfg.corpus_path == "/cfgs/other.txt");

    CHECK_THROWS_AS(apply_override(cfg, "no_such_key=1"), config_error);
    CHECK_THROWS_AS(apply_override(cfg, "gamma 0.3"), config_error);
    CHECK_THROWS_AS(apply_override(cfg, "gamma=2.0"), config_error);
    CHECK_THROWS_AS(apply_override(cfg, "=1"), config_error);
}
