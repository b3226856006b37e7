#include "lrc/config.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "lrc/errors.hpp"

namespace lrc {

namespace {

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

long long parse_integer(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        const long long n = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("");
        return n;
    } catch (const std::exception&) {
        throw config_error("key '" + key + "': '" + v + "' is not an integer");
    }
}

int parse_int(const std::string& key, const std::string& v) {
    return (int)parse_integer(key, v);
}

uint64_t parse_u64(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        const uint64_t n = std::stoull(v, &pos);
        if (pos != v.size() || v[0] == '-') throw std::invalid_argument("");
        return n;
    } catch (const std::exception&) {
        throw config_error("key '" + key + "': '" + v + "' is not a nonnegative integer");
    }
}

double parse_double(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        const double x = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("");
        return x;
    } catch (const std::exception&) {
        throw config_error("key '" + key + "': '" + v + "' is not a number");
    }
}

std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::vector<int> parse_int_list(const std::string& key, const std::string& v) {
    std::vector<int> out;
    for (const std::string& item : split_list(v)) out.push_back(parse_int(key, item));
    return out;
}

std::vector<double> parse_double_list(const std::string& key, const std::string& v) {
    std::vector<double> out;
    for (const std::string& item : split_list(v)) out.push_back(parse_double(key, item));
    return out;
}

SelectionRule parse_rule(const std::string& v) {
    if (v == "fixed_fraction") return SelectionRule::FixedFraction;
    if (v == "energy_threshold") return SelectionRule::EnergyThreshold;
    throw config_error("key 'rule': '" + v +
                       "' is neither 'fixed_fraction' nor 'energy_threshold'");
}

using Setter = std::function<void(PipelineConfig&, const std::string&, const std::string&)>;

const std::map<std::string, Setter>& key_registry() {
    static const std::map<std::string, Setter> reg = {
        {"model.vocab_size",
         [](PipelineConfig& c, const std::string& k, const std::string& v) {
             c.model.vocab_size = parse_int(k, v);
         }},
        {"model.d_model",
         [](PipelineConfig& c, const std::string& k, const std::string& v) {
             c.model.d_model = parse_int(k, v);
         }},
        {"model.d_ff",
         [](PipelineConfig& c, const std::string& k, const std::string& v) {
             c.model.d_ff = parse_int(k, v);
         }},
        {"model.n_layers",
         [](PipelineConfig& c, const std::string& k, const std::string& v) {
             c.model.n_layers = parse_int(k, v);
         }},
        {"model.n_heads",
         [](PipelineConfig& c, const std::string& k, const std::string& v) {
             c.model.n_heads = parse_int(k, v);
         }},
        {"model.max_seq_len",
         [](PipelineConfig& c, const std::string& k, const std::string& v) {
             c.model.max_seq_len = parse_int(k, v);
         }},
        {"model.norm_eps",
         [](PipelineConfig& c, const std::string& k, const std::string& v) {
             c.model.norm_eps = parse_double(k, v);
         }},
        {"corpus",
         [](PipelineConfig& c, const std::string&, const std::string& v) {
             std::filesystem::path p(v);
             if (p.is_relative() && !c.base_dir.empty())
                 p = std::filesystem::path(c.base_dir) / p;
             c.corpus_path = p.lexically_normal().string();
         }},
        {"train_split",
         [](PipelineConfig& c, const std::string& k, const std::string& v) {
             c.train_split = parse_double(k, v);
         }},
        {"train.steps",
         [](PipelineConfig& c, const std::string& k, const std::string& v) {
             c.train.steps = parse_int(k, v);
         }},
        {"train.lr",
         [](PipelineConfig& c, const std::string& k, const std::string& v) {
             c.train.lr = parse_double(k, v);
         }},
        {"train.weight_decay",
         [](PipelineConfig& c, const std::string& k, const std::string& v) {
             c.train.weight_decay = parse_double(k, v);
         }},
        {"train.batch_sequences",
         [](PipelineConfig& c, const std::string& k, const std::string& v) {
             c.train.batch_sequences = parse_int(k, v);
         }},
        {"train.seq_len",
         [](PipelineConfig& c, const std::string& k, const std::string& v) {
             c.train.seq_len = parse_int(k, v);
         }},
        {"train.seed",
         [](PipelineConfig& c, const std::string& k, const std::string& v) {
             c.train.seed = parse_u64(k, v);
         }},
        {"calib.sequences",
         [](PipelineConfig& c, const std::string& k, const std::string& v) {
             c.calib_sequences = parse_int(k, v);
         }},
        {"calib.seq_len",
         [](PipelineConfig& c, const std::string& k, const std::string& v) {
             c.calib_seq_len = parse_int(k, v);
         }},
        {"calib.seed",
         [](PipelineConfig& c, const std::string& k, const std::string& v) {
             c.calib_seed = parse_u64(k, v);
         }},
        {"rule",
         [](PipelineConfig& c, const std::string&, const std::string& v) {
             c.rule = parse_rule(v);
         }},
        {"gamma",
         [](PipelineConfig& c, const std::string& k, const std::string& v) {
             c.gamma = parse_double(k, v);
         }},
        {"target_ratio",
         [](PipelineConfig& c, const std::string& k, const std::string& v) {
             c.target_ratio = parse_double(k, v);
         }},
        {"rank_step",
         [](PipelineConfig& c, const std::string& k, const std::string& v) {
             c.rank_step = parse_int(k, v);
         }},
        {"exclude.kinds",
         [](PipelineConfig& c, const std::string&, const std::string& v) {
             c.exclude_kinds = split_list(v);
         }},
        {"exclude.layers",
         [](PipelineConfig& c, const std::string& k, const std::string& v) {
             c.exclude_layers = parse_int_list(k, v);
         }},
        {"damping.ladder",
         [](PipelineConfig& c, const std::string& k, const std::string& v) {
             c.damping.ladder = parse_double_list(k, v);
         }},
        {"eval.context_len",
         [](PipelineConfig& c, const std::string& k, const std::string& v) {
             c.eval_context_len = parse_int(k, v);
         }},
        {"eval.tokens",
         [](PipelineConfig& c, const std::string& k, const std::string& v) {
             c.eval_tokens = parse_integer(k, v);
         }},
    };
    return reg;
}

void set_key(PipelineConfig& cfg, const std::string& key, const std::string& value) {
    const auto& reg = key_registry();
    const auto it = reg.find(key);
    if (it == reg.end()) throw config_error("unknown config key '" + key + "'");
    it->second(cfg, key, value);
}

// Checks everything a bad config could break later, so errors point at the
// config rather than at some downstream matmul.
void validate(const PipelineConfig& cfg) {
    cfg.model.validate();
    if (cfg.train_split <= 0.0 || cfg.train_split >= 1.0)
        throw config_error("train_split must be in (0,1)");
    if (cfg.train.steps < 0) throw config_error("train.steps must be >= 0");
    if (cfg.calib_sequences < 1) throw config_error("calib.sequences must be >= 1");
    if (cfg.calib_seq_len < 1 || cfg.calib_seq_len > cfg.model.max_seq_len)
        throw config_error("calib.seq_len must be in [1, model.max_seq_len]");
    if (cfg.gamma < 0.0 || cfg.gamma > 1.0) throw config_error("gamma must be in [0,1]");
    if (cfg.target_ratio < 0.0 || cfg.target_ratio >= 1.0)
        throw config_error("target_ratio must be in [0,1)");
    if (cfg.rank_step < 1) throw config_error("rank_step must be >= 1");
    if (cfg.eval_context_len < 2 || cfg.eval_context_len > cfg.model.max_seq_len)
        throw config_error("eval.context_len must be in [2, model.max_seq_len]");
    if (cfg.eval_tokens < 2) throw config_error("eval.tokens must be >= 2");
    if (cfg.damping.ladder.empty()) throw config_error("damping.ladder must not be empty");
    for (const std::string& name : cfg.exclude_kinds) {
        try {
            (void)kind_from_name(name);
        } catch (const error&) {
            throw config_error("exclude.kinds: '" + name + "' is not a projection kind");
        }
    }
    for (int l : cfg.exclude_layers)
        if (l < 0 || l >= cfg.model.n_layers)
            throw config_error("exclude.layers: layer " + std::to_string(l) +
                               " is outside [0, " + std::to_string(cfg.model.n_layers) + ")");
}

std::vector<int> default_excluded_layers(int n_layers) {
    std::set<int> keep;
    for (int l : {0, 1, n_layers - 2, n_layers - 1})
        if (l >= 0 && l < n_layers) keep.insert(l);
    return {keep.begin(), keep.end()};
}

}  // namespace

PipelineConfig parse_pipeline_config(const std::string& text, const std::string& base_dir) {
    PipelineConfig cfg;
    cfg.base_dir = base_dir;
    bool layers_key_seen = false;

    std::stringstream ss(text);
    std::string raw;
    int line_no = 0;
    while (std::getline(ss, raw)) {
        line_no++;
        const size_t hash = raw.find('#');
        if (hash != std::string::npos) raw.resize(hash);
        const std::string line = trim(raw);
        if (line.empty()) continue;
        const size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw config_error("line " + std::to_string(line_no) + ": expected 'key = value'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty())
            throw config_error("line " + std::to_string(line_no) + ": empty key");
        set_key(cfg, key, value);
        if (key == "exclude.layers") layers_key_seen = true;
    }

    if (!layers_key_seen) cfg.exclude_layers = default_excluded_layers(cfg.model.n_layers);
    std::sort(cfg.exclude_layers.begin(), cfg.exclude_layers.end());
    cfg.exclude_layers.erase(std::unique(cfg.exclude_layers.begin(), cfg.exclude_layers.end()),
                             cfg.exclude_layers.end());
    validate(cfg);
    return cfg;
}

PipelineConfig load_pipeline_config(const std::string& path) {
    std::ifstream ifs(path);
    if (!ifs) throw io_error("cannot open config '" + path + "'");
    std::ostringstream ss;
    ss << ifs.rdbuf();
    return parse_pipeline_config(ss.str(), std::filesystem::path(path).parent_path().string());
}

void apply_override(PipelineConfig& cfg, const std::string& assignment) {
    const size_t eq = assignment.find('=');
    if (eq == std::string::npos)
        throw config_error("override '" + assignment + "' is not of the form key=value");
    const std::string key = trim(assignment.substr(0, eq));
    const std::string value = trim(assignment.substr(eq + 1));
    if (key.empty()) throw config_error("override '" + assignment + "' has an empty key");
    set_key(cfg, key, value);
    validate(cfg);
}

}  // namespace lrc
