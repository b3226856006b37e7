#include "lrc/tensor_io.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "lrc/errors.hpp"

namespace lrc {

using json = nlohmann::json;

namespace {

constexpr const char* MAGIC = "LRTF1";
constexpr uint64_t ALIGN = 64;

uint64_t align_up(uint64_t x) { return (x + ALIGN - 1) & ~(ALIGN - 1); }

// Little-endian f32 encoding, independent of host byte order.
void encode_f32(double value, unsigned char out[4]) {
    const float f = (float)value;
    uint32_t bits;
    std::memcpy(&bits, &f, 4);
    out[0] = (unsigned char)(bits & 0xff);
    out[1] = (unsigned char)((bits >> 8) & 0xff);
    out[2] = (unsigned char)((bits >> 16) & 0xff);
    out[3] = (unsigned char)((bits >> 24) & 0xff);
}

double decode_f32(const unsigned char* in) {
    const uint32_t bits = (uint32_t)in[0] | ((uint32_t)in[1] << 8) | ((uint32_t)in[2] << 16) |
                          ((uint32_t)in[3] << 24);
    float f;
    std::memcpy(&f, &bits, 4);
    return (double)f;
}

}  // namespace

const Matrix& TensorFile::tensor(const std::string& name) const {
    for (const auto& [n, m] : tensors)
        if (n == name) return m;
    throw corrupt_file_error("tensor file has no tensor named '" + name + "'");
}

bool TensorFile::has(const std::string& name) const {
    for (const auto& [n, m] : tensors)
        if (n == name) return true;
    return false;
}

uint64_t payload_bytes_of(const std::vector<std::pair<std::string, Matrix>>& tensors) {
    uint64_t off = 0;
    for (const auto& [name, m] : tensors) {
        off = align_up(off);
        off += 4ULL * (uint64_t)m.rows * (uint64_t)m.cols;
    }
    return off;
}

void save_tensor_file(const std::string& path, const TensorFile& file) {
    // meta must be one line of valid JSON
    if (file.meta_json.find('\n') != std::string::npos)
        throw input_error("meta JSON must be a single line");
    if (!json::accept(file.meta_json)) throw input_error("meta is not valid JSON");

    std::ostringstream header;
    header << MAGIC << "\n";
    header << "meta " << file.meta_json << "\n";
    uint64_t off = 0;
    for (const auto& [name, m] : file.tensors) {
        if (name.empty() || name.find_first_of(" \t\n") != std::string::npos)
            throw input_error("tensor name '" + name + "' is empty or contains whitespace");
        check_finite(m, name.c_str());
        off = align_up(off);
        const uint64_t nbytes = 4ULL * (uint64_t)m.rows * (uint64_t)m.cols;
        header << "tensor " << name << " f32 " << m.rows << " " << m.cols << " " << off << " "
               << nbytes << "\n";
        off += nbytes;
    }
    const uint64_t payload_bytes = off;
    header << "end " << payload_bytes << "\n";

    std::string text = header.str();
    text.resize(align_up(text.size()), '\0');

    std::string payload(payload_bytes, '\0');
    off = 0;
    for (const auto& [name, m] : file.tensors) {
        off = align_up(off);
        unsigned char buf[4];
        for (size_t i = 0; i < m.data.size(); i++) {
            encode_f32(m.data[i], buf);
            std::memcpy(&payload[off + 4 * i], buf, 4);
        }
        off += 4ULL * m.data.size();
    }

    std::ofstream ofs(path, std::ios::binary | std::ios::trunc);
    if (!ofs) throw io_error("cannot open '" + path + "' for writing");
    ofs.write(text.data(), (std::streamsize)text.size());
    ofs.write(payload.data(), (std::streamsize)payload.size());
    if (!ofs.good()) throw io_error("write to '" + path + "' failed");
}

TensorFile load_tensor_file(const std::string& path) {
    std::ifstream ifs(path, std::ios::binary);
    if (!ifs) throw io_error("cannot open '" + path + "' for reading");
    std::ostringstream ss;
    ss << ifs.rdbuf();
    const std::string buf = ss.str();
    if (buf.empty()) throw corrupt_file_error("'" + path + "' is empty");

    size_t pos = 0;
    auto next_line = [&](std::string& line) {
        const size_t nl = buf.find('\n', pos);
        if (nl == std::string::npos) return false;
        line = buf.substr(pos, nl - pos);
        pos = nl + 1;
        return true;
    };

    std::string line;
    if (!next_line(line) || line != MAGIC)
        throw version_error("'" + path + "' does not start with the " + std::string(MAGIC) +
                            " format marker");

    TensorFile file;
    struct Entry {
        std::string name;
        int rows, cols;
        uint64_t offset, nbytes;
    };
    std::vector<Entry> entries;
    bool meta_seen = false, end_seen = false;
    uint64_t payload_bytes = 0;

    while (next_line(line)) {
        std::istringstream fields(line);
        std::string tag;
        fields >> tag;
        if (tag == "meta") {
            if (meta_seen) throw corrupt_file_error("duplicate meta line");
            const size_t at = line.find("meta ");
            file.meta_json = line.substr(at + 5);
            if (!json::accept(file.meta_json))
                throw corrupt_file_error("meta is not valid JSON");
            meta_seen = true;
        } else if (tag == "tensor") {
            Entry e;
            std::string dtype;
            fields >> e.name >> dtype >> e.rows >> e.cols >> e.offset >> e.nbytes;
            if (fields.fail()) throw corrupt_file_error("malformed tensor line: " + line);
            if (dtype != "f32") throw corrupt_file_error("unsupported dtype '" + dtype + "'");
            if (e.rows < 0 || e.cols < 0) throw corrupt_file_error("negative tensor shape");
            entries.push_back(e);
        } else if (tag == "end") {
            fields >> payload_bytes;
            if (fields.fail()) throw corrupt_file_error("malformed end line");
            end_seen = true;
            break;
        } else {
            throw corrupt_file_error("unrecognized header line: " + line);
        }
    }
    if (!end_seen) throw corrupt_file_error("header has no end line");

    // validate the directory before touching the payload
    uint64_t prev_end = 0;
    for (const Entry& e : entries) {
        if (e.nbytes != 4ULL * (uint64_t)e.rows * (uint64_t)e.cols)
            throw corrupt_file_error("tensor '" + e.name + "': byte length disagrees with shape");
        if (e.offset % ALIGN != 0)
            throw corrupt_file_error("tensor '" + e.name + "' is not 64-byte aligned");
        if (e.offset < prev_end)
            throw corrupt_file_error("tensor '" + e.name + "' overlaps the previous tensor");
        if (e.offset + e.nbytes > payload_bytes)
            throw corrupt_file_error("tensor '" + e.name + "' extends past the payload");
        prev_end = e.offset + e.nbytes;
        for (const Entry& other : entries) {
            if (&other == &e) break;
            if (other.name == e.name)
                throw corrupt_file_error("duplicate tensor name '" + e.name + "'");
        }
    }

    const uint64_t payload_start = align_up(pos);
    if (buf.size() < payload_start + payload_bytes)
        throw truncated_file_error("'" + path + "' payload is shorter than the header promises");

    for (const Entry& e : entries) {
        Matrix m(e.rows, e.cols);
        const unsigned char* base = (const unsigned char*)buf.data() + payload_start + e.offset;
        for (size_t i = 0; i < m.data.size(); i++) m.data[i] = decode_f32(base + 4 * i);
        file.tensors.emplace_back(e.name, std::move(m));
    }
    return file;
}

std::vector<TensorView> model_tensor_views(const ModelWeights& w) {
    std::vector<TensorView> views;
    auto add = [&](std::string name, const Matrix& m) {
        views.push_back({std::move(name), m.rows, m.cols, m.data.data()});
    };
    auto add_vec = [&](std::string name, const std::vector<double>& v) {
        views.push_back({std::move(name), 1, (int)v.size(), v.data()});
    };
    add("embedding", w.embedding);
    for (size_t l = 0; l < w.layers.size(); l++) {
        const std::string p = "layers." + std::to_string(l) + ".";
        add(p + "q", w.layers[l].q);
        add(p + "k", w.layers[l].k);
        add(p + "v", w.layers[l].v);
        add(p + "o", w.layers[l].o);
        add(p + "gate", w.layers[l].gate);
        add(p + "up", w.layers[l].up);
        add(p + "down", w.layers[l].down);
        add_vec(p + "attn_norm", w.layers[l].attn_norm);
        add_vec(p + "ffn_norm", w.layers[l].ffn_norm);
    }
    add_vec("final_norm", w.final_norm);
    add("head", w.head);
    return views;
}

uint64_t fnv1a64(const unsigned char* bytes, size_t n, uint64_t seed) {
    uint64_t h = seed;
    for (size_t i = 0; i < n; i++) {
        h ^= bytes[i];
        h *= 1099511628211ULL;
    }
    return h;
}

uint64_t model_hash(const ModelWeights& w) {
    uint64_t h = 14695981039346656037ULL;
    unsigned char buf[4];
    for (const TensorView& v : model_tensor_views(w)) {
        const size_t n = (size_t)v.rows * v.cols;
        for (size_t i = 0; i < n; i++) {
            encode_f32(v.data[i], buf);
            h = fnv1a64(buf, 4, h);
        }
    }
    return h;
}

namespace {

json config_to_json(const ModelConfig& c) {
    return json{{"vocab_size", c.vocab_size},   {"d_model", c.d_model},
                {"d_ff", c.d_ff},               {"n_layers", c.n_layers},
                {"n_heads", c.n_heads},         {"max_seq_len", c.max_seq_len},
                {"norm_eps", c.norm_eps},       {"norm_disabled", c.norm_disabled}};
}

ModelConfig config_from_json(const json& j) {
    ModelConfig c;
    try {
        c.vocab_size = j.at("vocab_size").get<int>();
        c.d_model = j.at("d_model").get<int>();
        c.d_ff = j.at("d_ff").get<int>();
        c.n_layers = j.at("n_layers").get<int>();
        c.n_heads = j.at("n_heads").get<int>();
        c.max_seq_len = j.at("max_seq_len").get<int>();
        c.norm_eps = j.at("norm_eps").get<double>();
        c.norm_disabled = j.at("norm_disabled").get<bool>();
    } catch (const json::exception&) {
        throw corrupt_file_error("stored model config is incomplete");
    }
    try {
        c.validate();
    } catch (const config_error& e) {
        throw corrupt_file_error(std::string("stored model config is invalid: ") + e.what());
    }
    return c;
}

json parse_meta(const TensorFile& f) { return json::parse(f.meta_json); }

void require_kind(const json& meta, const std::string& kind, const std::string& path) {
    const std::string got = meta.value("kind", "");
    if (got != kind)
        throw corrupt_file_error("'" + path + "' holds '" + got + "', expected '" + kind + "'");
}

Matrix expect_tensor(const TensorFile& f, const std::string& name, int rows, int cols) {
    const Matrix& m = f.tensor(name);
    if (m.rows != rows || m.cols != cols)
        throw corrupt_file_error("tensor '" + name + "' has shape " + std::to_string(m.rows) +
                                 "x" + std::to_string(m.cols) + ", expected " +
                                 std::to_string(rows) + "x" + std::to_string(cols));
    return m;
}

std::vector<double> expect_vector(const TensorFile& f, const std::string& name, int len) {
    Matrix m = expect_tensor(f, name, 1, len);
    return std::move(m.data);
}

}  // namespace

void save_model(const std::string& path, const ModelWeights& w) {
    TensorFile f;
    f.meta_json = json{{"kind", "dense-model"}, {"config", config_to_json(w.config)}}.dump();
    for (const TensorView& v : model_tensor_views(w)) {
        Matrix m(v.rows, v.cols);
        std::memcpy(m.data.data(), v.data, sizeof(double) * m.data.size());
        f.tensors.emplace_back(v.name, std::move(m));
    }
    save_tensor_file(path, f);
}

ModelWeights load_model(const std::string& path) {
    TensorFile f = load_tensor_file(path);
    json meta = parse_meta(f);
    require_kind(meta, "dense-model", path);
    if (!meta.contains("config")) throw corrupt_file_error("model file has no config");

    ModelWeights w;
    w.config = config_from_json(meta["config"]);
    const ModelConfig& c = w.config;
    w.embedding = expect_tensor(f, "embedding", c.vocab_size, c.d_model);
    w.layers.resize(c.n_layers);
    for (int l = 0; l < c.n_layers; l++) {
        const std::string p = "layers." + std::to_string(l) + ".";
        LayerWeights& lw = w.layers[l];
        lw.q = expect_tensor(f, p + "q", c.d_model, c.d_model);
        lw.k = expect_tensor(f, p + "k", c.d_model, c.d_model);
        lw.v = expect_tensor(f, p + "v", c.d_model, c.d_model);
        lw.o = expect_tensor(f, p + "o", c.d_model, c.d_model);
        lw.gate = expect_tensor(f, p + "gate", c.d_model, c.d_ff);
        lw.up = expect_tensor(f, p + "up", c.d_model, c.d_ff);
        lw.down = expect_tensor(f, p + "down", c.d_ff, c.d_model);
        lw.attn_norm = expect_vector(f, p + "attn_norm", c.d_model);
        lw.ffn_norm = expect_vector(f, p + "ffn_norm", c.d_model);
    }
    w.final_norm = expect_vector(f, "final_norm", c.d_model);
    w.head = expect_tensor(f, "head", c.d_model, c.vocab_size);
    return w;
}

void save_stats(const std::string& path, const CalibStats& stats) {
    TensorFile f;
    f.meta_json = json{{"kind", "calib-stats"},
                       {"config", config_to_json(stats.config)},
                       {"model_hash", stats.model_hash},
                       {"token_count", stats.token_count}}
                      .dump();
    for (size_t l = 0; l < stats.layers.size(); l++) {
        const std::string p = "layers." + std::to_string(l) + ".";
        const LayerStats& ls = stats.layers[l];
        f.tensors.emplace_back(p + "attn_gram", ls.attn_gram);
        f.tensors.emplace_back(p + "o_gram", ls.o_gram);
        f.tensors.emplace_back(p + "ffn_gram", ls.ffn_gram);
        f.tensors.emplace_back(p + "h_gram", ls.h_gram);
        Matrix e(1, (int)ls.neuron_energy.size());
        e.data = ls.neuron_energy;
        f.tensors.emplace_back(p + "neuron_energy", std::move(e));
    }
    save_tensor_file(path, f);
}

CalibStats load_stats(const std::string& path) {
    TensorFile f = load_tensor_file(path);
    json meta = parse_meta(f);
    require_kind(meta, "calib-stats", path);
    CalibStats s;
    try {
        s.config = config_from_json(meta.at("config"));
        s.model_hash = meta.at("model_hash").get<uint64_t>();
        s.token_count = meta.at("token_count").get<long>();
    } catch (const json::exception&) {
        throw corrupt_file_error("stats meta is incomplete");
    }
    s.layers.resize(s.config.n_layers);
    for (int l = 0; l < s.config.n_layers; l++) {
        const std::string p = "layers." + std::to_string(l) + ".";
        LayerStats& ls = s.layers[l];
        ls.attn_gram = expect_tensor(f, p + "attn_gram", s.config.d_model, s.config.d_model);
        ls.o_gram = expect_tensor(f, p + "o_gram", s.config.d_model, s.config.d_model);
        ls.ffn_gram = expect_tensor(f, p + "ffn_gram", s.config.d_model, s.config.d_model);
        ls.h_gram = expect_tensor(f, p + "h_gram", s.config.d_ff, s.config.d_ff);
        ls.neuron_energy = expect_vector(f, p + "neuron_energy", s.config.d_ff);
    }
    return s;
}

void require_stats_match(const CalibStats& stats, const ModelWeights& w) {
    if (stats.config.d_model != w.config.d_model || stats.config.d_ff != w.config.d_ff ||
        stats.config.n_layers != w.config.n_layers)
        throw provenance_error("calibration stats were collected on a different architecture");
    if (stats.model_hash != model_hash(w))
        throw provenance_error("calibration stats were collected on a different model");
}

namespace {

json manifest_to_json(const CompressionManifest& m) {
    json components = json::array();
    for (const ManifestComponent& c : m.components) {
        components.push_back(json{{"name", c.name},
                                  {"disposition", c.disposition},
                                  {"rank", c.rank},
                                  {"truncation_loss", c.truncation_loss},
                                  {"fallback_dense", c.fallback_dense},
                                  {"prime", c.prime},
                                  {"k_gate", c.k_gate},
                                  {"k_up", c.k_up},
                                  {"k_down", c.k_down}});
    }
    return json{{"source_model_hash", m.source_model_hash},
                {"gamma", m.gamma},
                {"selection_rule", m.selection_rule},
                {"target_ratio", m.target_ratio},
                {"rank_step", m.rank_step},
                {"seed", m.seed},
                {"excluded_layers", m.excluded_layers},
                {"excluded_kinds", m.excluded_kinds},
                {"allocator_objective", m.allocator_objective},
                {"achieved_ratio", m.achieved_ratio},
                {"dense_payload_bytes", m.dense_payload_bytes},
                {"compressed_payload_bytes", m.compressed_payload_bytes},
                {"components", components}};
}

CompressionManifest manifest_from_json(const json& j) {
    CompressionManifest m;
    try {
        m.source_model_hash = j.at("source_model_hash").get<uint64_t>();
        m.gamma = j.at("gamma").get<double>();
        m.selection_rule = j.at("selection_rule").get<std::string>();
        m.target_ratio = j.at("target_ratio").get<double>();
        m.rank_step = j.at("rank_step").get<int>();
        m.seed = j.at("seed").get<uint64_t>();
        m.excluded_layers = j.at("excluded_layers").get<std::vector<int>>();
        m.excluded_kinds = j.at("excluded_kinds").get<std::vector<std::string>>();
        m.allocator_objective = j.at("allocator_objective").get<double>();
        m.achieved_ratio = j.at("achieved_ratio").get<double>();
        m.dense_payload_bytes = j.at("dense_payload_bytes").get<uint64_t>();
        m.compressed_payload_bytes = j.at("compressed_payload_bytes").get<uint64_t>();
        for (const json& c : j.at("components")) {
            ManifestComponent mc;
            mc.name = c.at("name").get<std::string>();
            mc.disposition = c.at("disposition").get<std::string>();
            mc.rank = c.at("rank").get<int>();
            mc.truncation_loss = c.at("truncation_loss").get<double>();
            mc.fallback_dense = c.at("fallback_dense").get<bool>();
            mc.prime = c.at("prime").get<std::vector<int>>();
            mc.k_gate = c.at("k_gate").get<int>();
            mc.k_up = c.at("k_up").get<int>();
            mc.k_down = c.at("k_down").get<int>();
            m.components.push_back(std::move(mc));
        }
    } catch (const json::exception&) {
        throw corrupt_file_error("compression manifest is incomplete");
    }
    return m;
}

void op_tensors(std::vector<std::pair<std::string, Matrix>>& out, const std::string& name,
                const LinearOp& op) {
    if (op.factored) {
        out.emplace_back(name + ".a", op.a);
        out.emplace_back(name + ".b", op.b);
    } else {
        out.emplace_back(name, op.w);
    }
}

Matrix vector_tensor(const std::vector<double>& v) {
    Matrix m(1, (int)v.size());
    m.data = v;
    return m;
}

}  // namespace

std::vector<std::pair<std::string, Matrix>> compressed_tensor_list(const CompressedModel& m) {
    std::vector<std::pair<std::string, Matrix>> out;
    out.emplace_back("embedding", m.embedding);
    for (size_t l = 0; l < m.layers.size(); l++) {
        const std::string p = "layers." + std::to_string(l) + ".";
        const CompressedLayer& cl = m.layers[l];
        op_tensors(out, p + "q", cl.q);
        op_tensors(out, p + "k", cl.k);
        op_tensors(out, p + "v", cl.v);
        op_tensors(out, p + "o", cl.o);
        out.emplace_back(p + "attn_norm", vector_tensor(cl.attn_norm));
        out.emplace_back(p + "ffn_norm", vector_tensor(cl.ffn_norm));
        if (cl.split) {
            out.emplace_back(p + "ffn.pn_gate", cl.ffn.pn_gate);
            out.emplace_back(p + "ffn.pn_up", cl.ffn.pn_up);
            out.emplace_back(p + "ffn.pn_down", cl.ffn.pn_down);
            op_tensors(out, p + "ffn.mn_gate", cl.ffn.mn_gate);
            op_tensors(out, p + "ffn.mn_up", cl.ffn.mn_up);
            op_tensors(out, p + "ffn.mn_down", cl.ffn.mn_down);
        } else {
            op_tensors(out, p + "gate", cl.gate);
            op_tensors(out, p + "up", cl.up);
            op_tensors(out, p + "down", cl.down);
        }
    }
    out.emplace_back("final_norm", vector_tensor(m.final_norm));
    out.emplace_back("head", m.head);
    return out;
}

uint64_t dense_model_payload_bytes(const ModelConfig& c) {
    std::vector<std::pair<int, int>> shapes;
    shapes.push_back({c.vocab_size, c.d_model});
    for (int l = 0; l < c.n_layers; l++) {
        for (int i = 0; i < 4; i++) shapes.push_back({c.d_model, c.d_model});
        shapes.push_back({c.d_model, c.d_ff});
        shapes.push_back({c.d_model, c.d_ff});
        shapes.push_back({c.d_ff, c.d_model});
        shapes.push_back({1, c.d_model});
        shapes.push_back({1, c.d_model});
    }
    shapes.push_back({1, c.d_model});
    shapes.push_back({c.d_model, c.vocab_size});

    uint64_t off = 0;
    for (auto [r, cols] : shapes) {
        off = align_up(off);
        off += 4ULL * (uint64_t)r * (uint64_t)cols;
    }
    return off;
}

void save_compressed(const std::string& path, const CompressedModel& m,
                     const CompressionManifest& manifest) {
    TensorFile f;
    f.meta_json = json{{"kind", "compressed-model"},
                       {"config", config_to_json(m.config)},
                       {"manifest", manifest_to_json(manifest)}}
                      .dump();
    f.tensors = compressed_tensor_list(m);
    save_tensor_file(path, f);
}

namespace {

LinearOp load_op(const TensorFile& f, const std::string& name, bool fallback) {
    LinearOp op;
    if (f.has(name + ".a")) {
        op = LinearOp::low_rank(f.tensor(name + ".a"), f.tensor(name + ".b"));
    } else {
        op = LinearOp::dense(f.tensor(name));
    }
    op.fallback_dense = fallback;
    return op;
}

const ManifestComponent* find_component(const CompressionManifest& m, const std::string& name) {
    for (const ManifestComponent& c : m.components)
        if (c.name == name) return &c;
    return nullptr;
}

bool component_fallback(const CompressionManifest& m, const std::string& name) {
    const ManifestComponent* c = find_component(m, name);
    return c != nullptr && c->fallback_dense;
}

}  // namespace

std::pair<CompressedModel, CompressionManifest> load_compressed(const std::string& path) {
    TensorFile f = load_tensor_file(path);
    json meta = parse_meta(f);
    require_kind(meta, "compressed-model", path);
    if (!meta.contains("config") || !meta.contains("manifest"))
        throw corrupt_file_error("compressed file meta is incomplete");
    CompressionManifest manifest = manifest_from_json(meta["manifest"]);

    CompressedModel m;
    m.config = config_from_json(meta["config"]);
    const ModelConfig& c = m.config;
    m.embedding = expect_tensor(f, "embedding", c.vocab_size, c.d_model);
    m.final_norm = expect_vector(f, "final_norm", c.d_model);
    m.head = expect_tensor(f, "head", c.d_model, c.vocab_size);
    m.layers.resize(c.n_layers);

    SelectionRule rule = manifest.selection_rule == "energy_threshold"
                             ? SelectionRule::EnergyThreshold
                             : SelectionRule::FixedFraction;
    for (int l = 0; l < c.n_layers; l++) {
        const std::string p = "layers." + std::to_string(l) + ".";
        CompressedLayer& cl = m.layers[l];
        cl.q = load_op(f, p + "q", component_fallback(manifest, p + "q"));
        cl.k = load_op(f, p + "k", component_fallback(manifest, p + "k"));
        cl.v = load_op(f, p + "v", component_fallback(manifest, p + "v"));
        cl.o = load_op(f, p + "o", component_fallback(manifest, p + "o"));
        cl.attn_norm = expect_vector(f, p + "attn_norm", c.d_model);
        cl.ffn_norm = expect_vector(f, p + "ffn_norm", c.d_model);

        const ManifestComponent* split_rec = find_component(manifest, p + "ffn");
        if (split_rec != nullptr && split_rec->disposition == "split") {
            cl.split = true;
            NeuronPartition& part = cl.ffn.partition;
            part.layer = l;
            part.rule = rule;
            part.gamma = manifest.gamma;
            part.prime = split_rec->prime;
            std::vector<char> is_prime(c.d_ff, 0);
            for (int idx : part.prime) {
                if (idx < 0 || idx >= c.d_ff)
                    throw corrupt_file_error("prime neuron index out of range");
                is_prime[idx] = 1;
            }
            for (int i = 0; i < c.d_ff; i++)
                if (!is_prime[i]) part.marginal.push_back(i);
            const int n_pn = (int)part.prime.size();
            cl.ffn.pn_gate = expect_tensor(f, p + "ffn.pn_gate", c.d_model, n_pn);
            cl.ffn.pn_up = expect_tensor(f, p + "ffn.pn_up", c.d_model, n_pn);
            cl.ffn.pn_down = expect_tensor(f, p + "ffn.pn_down", n_pn, c.d_model);
            cl.ffn.mn_gate =
                load_op(f, p + "ffn.mn_gate", component_fallback(manifest, p + "ffn.mn_gate"));
            cl.ffn.mn_up =
                load_op(f, p + "ffn.mn_up", component_fallback(manifest, p + "ffn.mn_up"));
            cl.ffn.mn_down =
                load_op(f, p + "ffn.mn_down", component_fallback(manifest, p + "ffn.mn_down"));
        } else {
            cl.gate = load_op(f, p + "gate", component_fallback(manifest, p + "gate"));
            cl.up = load_op(f, p + "up", component_fallback(manifest, p + "up"));
            cl.down = load_op(f, p + "down", component_fallback(manifest, p + "down"));
        }
    }

    // the stored accounting must agree with the tensors actually present
    const uint64_t dense_bytes = dense_model_payload_bytes(c);
    const uint64_t comp_bytes = payload_bytes_of(f.tensors);
    const double recomputed = 1.0 - (double)comp_bytes / (double)dense_bytes;
    if (manifest.dense_payload_bytes != dense_bytes ||
        manifest.compressed_payload_bytes != comp_bytes ||
        std::fabs(manifest.achieved_ratio - recomputed) > 1e-6)
        throw corrupt_file_error("manifest accounting disagrees with the stored tensors");
    return {std::move(m), std::move(manifest)};
}

}  // namespace lrc
