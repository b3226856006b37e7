#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lrc/linalg.hpp"
#include "lrc/model.hpp"
#include "lrc/train.hpp"

// Flat `key = value` pipeline configuration with `#` comments. One file
// drives the whole pipeline (train-fixture -> calibrate -> compress -> eval)
// so that a config plus a seed pins every artifact byte-for-byte.
namespace lrc {

struct PipelineConfig {
    ModelConfig model;

    // corpus and the train/eval split (leading fraction trains + calibrates,
    // the tail is held out for perplexity)
    std::string corpus_path;  // resolved relative to the config file
    double train_split = 0.8;

    TrainConfig train;

    int calib_sequences = 32;
    int calib_seq_len = 256;
    uint64_t calib_seed = 7;

    SelectionRule rule = SelectionRule::FixedFraction;
    double gamma = 0.15;
    double target_ratio = 0.3;
    int rank_step = 16;

    // components kept dense: projection kinds everywhere ("v" by default),
    // whole layers (first two and last two by default)
    std::vector<std::string> exclude_kinds{"v"};
    std::vector<int> exclude_layers;

    DampingPolicy damping;

    int eval_context_len = 256;
    long eval_tokens = 4096;

    std::string base_dir;  // directory of the config file, for overrides
};

// Parses config text. base_dir anchors relative paths. Unknown keys, bad
// numbers, bad kind names, or out-of-range layers raise config_error. Keys
// may repeat; the last assignment wins. exclude.* keys left unset fall back
// to the defaults above (exclude.layers derived from model.n_layers).
PipelineConfig parse_pipeline_config(const std::string& text, const std::string& base_dir);

PipelineConfig load_pipeline_config(const std::string& path);

// Applies one `key=value` override (CLI --set). Same key registry and the
// same validation as the file parser.
void apply_override(PipelineConfig& cfg, const std::string& assignment);

}  // namespace lrc
