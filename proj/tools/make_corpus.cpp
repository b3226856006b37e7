#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <string>
#include <vector>

#include "lrc/rng.hpp"

// Regenerates the bundled synthetic corpus: templated prose with a skewed
// (Zipf-like) word distribution, so a small model picks up real structure in
// a few hundred SGD steps. Usage: make_corpus [out] [bytes] [seed].
namespace {

const std::vector<std::string> NOUNS{
    "fox",    "mill",   "river", "stone",  "miller", "bridge", "road",  "lamp",   "garden",
    "wall",   "tower",  "market", "boat",  "sailor", "wind",   "harbor", "map",   "letter",
    "clock",  "bell",   "crow",  "ladder", "cellar", "chart",  "anchor"};

const std::vector<std::string> ADJECTIVES{"old",    "quiet", "small", "grey", "bright",
                                          "narrow", "cold",  "dusty", "tall", "early"};

const std::vector<std::string> VERBS{"guards",  "crosses", "waits",  "turns",  "holds",
                                     "finds",   "follows", "watches", "opens", "counts",
                                     "repairs", "signals"};

const std::vector<std::string> ADVERBS{"slowly", "again", "alone", "twice", "soon", "still"};

const std::vector<std::string> PLACES{"in the town",   "by the sea",    "near the gate",
                                      "under the arch", "past the field", "behind the mill"};

const std::vector<std::string> NUMBERS{"two", "three", "seven", "twelve", "forty"};

// Sentence skeletons; placeholders: N noun, A adjective, V verb, D adverb,
// P place, X number.
const std::vector<std::string> TEMPLATES{
    "the A N V the N",
    "a N V P",
    "the N of the N V D",
    "the N V P, and the A N V D",
    "when the N V, the N V the A N",
    "N and N V the A N P",
    "the miller says the N V X N",
    "every morning the A N V the N P",
};

// Index with weight 1/(i+1): early entries dominate, the tail stays rare.
size_t zipf_index(lrc::Rng& rng, size_t n) {
    double total = 0.0;
    for (size_t i = 0; i < n; i++) total += 1.0 / (double)(i + 1);
    double u = rng.uniform() * total;
    for (size_t i = 0; i < n; i++) {
        u -= 1.0 / (double)(i + 1);
        if (u <= 0.0) return i;
    }
    return n - 1;
}

const std::string& pick(lrc::Rng& rng, const std::vector<std::string>& words) {
    return words[zipf_index(rng, words.size())];
}

std::string make_sentence(lrc::Rng& rng) {
    const std::string& tmpl = TEMPLATES[zipf_index(rng, TEMPLATES.size())];
    std::string out;
    for (char c : tmpl) {
        switch (c) {
            case 'N': out += pick(rng, NOUNS); break;
            case 'A': out += pick(rng, ADJECTIVES); break;
            case 'V': out += pick(rng, VERBS); break;
            case 'D': out += pick(rng, ADVERBS); break;
            case 'P': out += pick(rng, PLACES); break;
            case 'X': out += pick(rng, NUMBERS); break;
            default: out += c;
        }
    }
    out += rng.uniform() < 0.9 ? "." : "?";
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    const std::string out_path = argc > 1 ? argv[1] : "data/corpus.txt";
    const size_t target_bytes = argc > 2 ? (size_t)std::atoll(argv[2]) : 300000;
    const uint64_t seed = argc > 3 ? (uint64_t)std::atoll(argv[3]) : 42;

    lrc::Rng rng(seed);
    std::string text;
    text.reserve(target_bytes + 256);
    while (text.size() < target_bytes) {
        const int sentences = 4 + (int)rng.below(6);
        for (int i = 0; i < sentences; i++) {
            if (i > 0) text += ' ';
            text += make_sentence(rng);
        }
        text += '\n';
    }

    std::ofstream ofs(out_path, std::ios::binary | std::ios::trunc);
    ofs << text;
    if (!ofs.good()) {
        std::fprintf(stderr, "cannot write '%s'\n", out_path.c_str());
        return 1;
    }
    std::printf("wrote %zu bytes to %s\n", text.size(), out_path.c_str());
    return 0;
}
