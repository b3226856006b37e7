#include <cmath>

#include "doctest.h"
#include "lrc/calibration.hpp"
#include "lrc/rng.hpp"
#include "lrc/tensor_io.hpp"
#include "oracles.hpp"

using namespace lrc;

namespace {

ModelConfig tiny_config() {
    ModelConfig c;
    c.vocab_size = 40;
    c.d_model = 16;
    c.d_ff = 32;
    c.n_layers = 2;
    c.n_heads = 2;
    c.max_seq_len = 12;
    return c;
}

std::vector<std::vector<int>> random_sequences(Rng& rng, int count, int len, int vocab) {
    std::vector<std::vector<int>> seqs(count);
    for (auto& s : seqs) {
        s.resize(len);
        for (int& t : s) t = (int)rng.below(vocab);
    }
    return seqs;
}

CalibStats stats_with_energy(std::vector<double> energy) {
    CalibStats s;
    s.layers.resize(1);
    s.layers[0].neuron_energy = std::move(energy);
    return s;
}

void add_into(Matrix& into, const Matrix& other) {
    for (size_t i = 0; i < into.data.size(); i++) into.data[i] += other.data[i];
}

}  // namespace

TEST_CASE("neuron_energy_profile: hand-checked curves") {
    SUBCASE("mixed energies with a zero tail") {
        EnergyProfile p = neuron_energy_profile(stats_with_energy({4, 1, 1, 0}), 0);
        CHECK(p.order == std::vector<int>{0, 1, 2, 3});
        CHECK(p.cumulative[0] == doctest::Approx(4.0 / 6.0));
        CHECK(p.cumulative[1] == doctest::Approx(5.0 / 6.0));
        CHECK(p.cumulative[2] == doctest::Approx(1.0));
        CHECK(p.cumulative[3] == 1.0);
        CHECK(p.total_energy == doctest::Approx(6.0));
        CHECK_FALSE(p.zero_total);
    }
    SUBCASE("ties broken by smaller index") {
        EnergyProfile p = neuron_energy_profile(stats_with_energy({2, 5, 5, 0, 2}), 0);
        CHECK(p.order == std::vector<int>{1, 2, 0, 4, 3});
        CHECK(p.cumulative[1] == doctest::Approx(10.0 / 14.0));
    }
    SUBCASE("all-equal energies give a straight line") {
        EnergyProfile p = neuron_energy_profile(stats_with_energy(std::vector<double>(8, 3.0)), 0);
        for (int i = 0; i < 8; i++) CHECK(p.cumulative[i] == doctest::Approx((i + 1) / 8.0));
    }
    SUBCASE("single active neuron saturates immediately") {
        EnergyProfile p = neuron_energy_profile(stats_with_energy({0, 0, 7, 0}), 0);
        CHECK(p.order[0] == 2);
        for (double c : p.cumulative) CHECK(c == doctest::Approx(1.0));
    }
    SUBCASE("all-zero profile is flagged") {
        EnergyProfile p = neuron_energy_profile(stats_with_energy({0, 0, 0}), 0);
        CHECK(p.zero_total);
        CHECK(p.total_energy == 0.0);
        CHECK(p.order == std::vector<int>{0, 1, 2});
    }
    SUBCASE("layer bounds checked") {
        CHECK_THROWS_AS(neuron_energy_profile(stats_with_energy({1}), 1), input_error);
        CHECK_THROWS_AS(neuron_energy_profile(stats_with_energy({1}), -1), input_error);
    }
}

TEST_CASE("neuron_energy_profile: invariant under uniform energy scaling") {
    Rng rng(44);
    std::vector<double> e(24);
    for (double& x : e) x = rng.uniform() * 10.0;
    e[3] = 0.0;
    EnergyProfile base = neuron_energy_profile(stats_with_energy(e), 0);
    for (double& x : e) x *= 9.0;
    EnergyProfile scaled = neuron_energy_profile(stats_with_energy(e), 0);
    CHECK(base.order == scaled.order);
    for (size_t i = 0; i < base.cumulative.size(); i++)
        CHECK(std::fabs(base.cumulative[i] - scaled.cumulative[i]) < 1e-12);
}

TEST_CASE("accumulate_gram") {
    Rng rng(7);
    Matrix x = oracle::random_matrix(rng, 9, 5);
    Matrix g(5, 5);
    accumulate_gram(g, x);
    Matrix want = oracle::naive_matmul(transpose(x), x);
    CHECK(max_abs_diff(g, want) < 1e-12);

    SUBCASE("quadratic in a scalar input scale") {
        Matrix x3 = x;
        for (double& v : x3.data) v *= 3.0;
        Matrix g3(5, 5);
        accumulate_gram(g3, x3);
        Matrix nine = g;
        for (double& v : nine.data) v *= 9.0;
        CHECK(max_abs_diff(g3, nine) < 1e-9 * frobenius_norm(nine));
    }
    SUBCASE("shape mismatch rejected") {
        Matrix bad(4, 4);
        CHECK_THROWS_AS(accumulate_gram(bad, x), shape_error);
    }
}

TEST_CASE("collect: shapes, grams, and determinism") {
    ModelConfig c = tiny_config();
    ModelWeights w = init_weights(c, 17);
    Rng rng(5);
    std::vector<std::vector<int>> seqs = random_sequences(rng, 4, 10, c.vocab_size);

    CalibStats s = collect(w, seqs);
    REQUIRE((int)s.layers.size() == c.n_layers);
    CHECK(s.token_count == 40);
    CHECK(s.model_hash == model_hash(w));
    CHECK(s.layers[0].attn_gram.rows == c.d_model);
    CHECK(s.layers[0].h_gram.rows == c.d_ff);

    SUBCASE("grams match a direct trace computation") {
        ForwardTrace trace;
        forward(w, seqs[0], &trace);
        CalibStats one = collect(w, {seqs[0]});
        Matrix want = oracle::naive_matmul(transpose(trace.layers[1].ffn_in), trace.layers[1].ffn_in);
        CHECK(max_abs_diff(one.layers[1].ffn_gram, want) < 1e-9 * (1.0 + frobenius_norm(want)));
    }
    SUBCASE("grams are symmetric and positive semidefinite") {
        for (int l = 0; l < c.n_layers; l++) {
            const Matrix& g = s.layers[l].h_gram;
            CHECK(max_abs_diff(g, transpose(g)) < 1e-9);
            for (int probe = 0; probe < 5; probe++) {
                std::vector<double> v(g.rows);
                for (double& x : v) x = rng.normal();
                double quad = 0.0;
                for (int i = 0; i < g.rows; i++)
                    for (int j = 0; j < g.cols; j++) quad += v[i] * g(i, j) * v[j];
                CHECK(quad > -1e-9 * (1.0 + frobenius_norm(g)));
            }
        }
    }
    SUBCASE("neuron energy equals the h-gram diagonal") {
        for (int l = 0; l < c.n_layers; l++)
            for (int j = 0; j < c.d_ff; j++)
                CHECK(s.layers[l].neuron_energy[j] == s.layers[l].h_gram(j, j));
    }
    SUBCASE("deterministic") {
        CalibStats again = collect(w, seqs);
        CHECK(max_abs_diff(s.layers[1].h_gram, again.layers[1].h_gram) == 0.0);
        CHECK(s.layers[0].neuron_energy == again.layers[0].neuron_energy);
    }
}

TEST_CASE("collect: additive over sequence sets") {
    ModelConfig c = tiny_config();
    ModelWeights w = init_weights(c, 8);
    Rng rng(9);
    std::vector<std::vector<int>> seqs = random_sequences(rng, 5, 8, c.vocab_size);

    std::vector<std::vector<int>> first(seqs.begin(), seqs.begin() + 3);
    std::vector<std::vector<int>> second(seqs.begin() + 3, seqs.end());
    CalibStats all = collect(w, seqs);
    CalibStats a = collect(w, first);
    CalibStats b = collect(w, second);

    CHECK(all.token_count == a.token_count + b.token_count);
    for (int l = 0; l < c.n_layers; l++) {
        Matrix sum = a.layers[l].h_gram;
        add_into(sum, b.layers[l].h_gram);
        CHECK(max_abs_diff(all.layers[l].h_gram, sum) < 1e-9 * (1.0 + frobenius_norm(sum)));
        Matrix fsum = a.layers[l].ffn_gram;
        add_into(fsum, b.layers[l].ffn_gram);
        CHECK(max_abs_diff(all.layers[l].ffn_gram, fsum) < 1e-9 * (1.0 + frobenius_norm(fsum)));
    }
}

TEST_CASE("collect: gram_for routes components to shared inputs") {
    ModelConfig c = tiny_config();
    ModelWeights w = init_weights(c, 2);
    Rng rng(3);
    CalibStats s = collect(w, random_sequences(rng, 2, 6, c.vocab_size));

    CHECK(&s.gram_for({1, Kind::Q}) == &s.layers[1].attn_gram);
    CHECK(&s.gram_for({1, Kind::K}) == &s.gram_for({1, Kind::Q}));
    CHECK(&s.gram_for({1, Kind::V}) == &s.gram_for({1, Kind::Q}));
    CHECK(&s.gram_for({0, Kind::O}) == &s.layers[0].o_gram);
    CHECK(&s.gram_for({0, Kind::Gate}) == &s.layers[0].ffn_gram);
    CHECK(&s.gram_for({0, Kind::Up}) == &s.gram_for({0, Kind::Gate}));
    CHECK(&s.gram_for({0, Kind::Down}) == &s.layers[0].h_gram);
    CHECK_THROWS_AS(s.gram_for({5, Kind::Q}), input_error);
}

TEST_CASE("collect: layer-0 grams scale quadratically with the embedding when norms are off") {
    // With RMSNorm disabled and single-token sequences, everything feeding the
    // first layer's projections is linear in the embedding, so scaling the
    // embedding by c scales those grams by c^2.  (Grams after the gated
    // nonlinearity do not obey this — that is the point of collecting them.)
    ModelConfig c = tiny_config();
    c.norm_disabled = true;
    ModelWeights w = init_weights(c, 23);
    std::vector<std::vector<int>> seqs;
    for (int t = 0; t < 8; t++) seqs.push_back({(t * 5 + 1) % c.vocab_size});

    CalibStats base = collect(w, seqs);
    ModelWeights w3 = w;
    for (double& v : w3.embedding.data) v *= 3.0;
    CalibStats scaled = collect(w3, seqs);

    Matrix attn9 = base.layers[0].attn_gram;
    for (double& v : attn9.data) v *= 9.0;
    CHECK(max_abs_diff(scaled.layers[0].attn_gram, attn9) <
          1e-8 * (1.0 + frobenius_norm(attn9)));

    Matrix ffn9 = base.layers[0].ffn_gram;
    for (double& v : ffn9.data) v *= 9.0;
    CHECK(max_abs_diff(scaled.layers[0].ffn_gram, ffn9) <
          1e-8 * (1.0 + frobenius_norm(ffn9)));
}

TEST_CASE("collect: input contracts") {
    ModelConfig c = tiny_config();
    ModelWeights w = init_weights(c, 1);
    CHECK_THROWS_AS(collect(w, {}), input_error);
    CHECK_THROWS_AS(collect(w, {{1, 2}, {}}), input_error);
    CHECK_THROWS_AS(collect(w, {{c.vocab_size}}), input_error);
}
