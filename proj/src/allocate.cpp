#include "lrc/allocate.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "lrc/errors.hpp"

namespace lrc {

namespace {

void validate_spectrum(const ComponentSpectrum& s) {
    if (s.d_in < 1 || s.d_out < 1)
        throw input_error("spectrum '" + s.label + "' has non-positive dimensions");
    if (s.sigma_sq.empty()) throw input_error("spectrum '" + s.label + "' is empty");
    for (size_t i = 0; i < s.sigma_sq.size(); i++) {
        if (s.sigma_sq[i] < 0.0)
            throw input_error("spectrum '" + s.label + "' has a negative entry");
        if (i > 0 && s.sigma_sq[i] > s.sigma_sq[i - 1])
            throw input_error("spectrum '" + s.label + "' is not descending");
    }
}

}  // namespace

double ComponentSpectrum::total_energy() const {
    double t = 0.0;
    for (double v : sigma_sq) t += v;
    return t;
}

double perf_score(const ComponentSpectrum& s, int r) {
    validate_spectrum(s);
    if (r < 0 || r > s.full_rank())
        throw input_error("perf_score: rank outside [0, full_rank]");
    double total = 0.0, head = 0.0;
    for (int i = 0; i < s.full_rank(); i++) {
        total += s.sigma_sq[i];
        if (i < r) head += s.sigma_sq[i];
    }
    if (total <= 0.0) return 1.0;
    return head / total;
}

long param_cost(const ComponentSpectrum& s, int r) {
    if (r < 0) throw input_error("param_cost: negative rank");
    return std::min((long)(s.d_in + s.d_out) * r, s.dense_params());
}

std::vector<RankChoice> rank_ladder(const ComponentSpectrum& s, int step, int min_rank) {
    validate_spectrum(s);
    if (step < 1) throw config_error("rank step must be positive");
    if (min_rank == -1) min_rank = step;
    if (min_rank < 0 || min_rank % step != 0)
        throw config_error("minimum rank must be a nonnegative multiple of the step");

    std::vector<RankChoice> ladder;
    if (min_rank == 0) ladder.push_back({0, false});
    int last_rank = -1;
    for (int r = std::max(min_rank, step); r <= s.full_rank(); r += step) {
        if ((long)(s.d_in + s.d_out) * r >= s.dense_params()) break;
        ladder.push_back({r, false});
        last_rank = r;
    }
    if (last_rank != s.full_rank()) ladder.push_back({0, true});
    return ladder;
}

namespace {

struct Rung {
    RankChoice choice;
    long cost;
    double score;
};

std::vector<std::vector<Rung>> build_ladders(const std::vector<ComponentSpectrum>& spectra,
                                             int step, int min_rank) {
    if (spectra.empty()) throw input_error("allocation needs at least one spectrum");
    std::vector<std::vector<Rung>> ladders(spectra.size());
    for (size_t c = 0; c < spectra.size(); c++) {
        for (RankChoice rc : rank_ladder(spectra[c], step, min_rank)) {
            const long cost = rc.dense ? spectra[c].dense_params() : param_cost(spectra[c], rc.rank);
            const double score = rc.dense ? 1.0 : perf_score(spectra[c], rc.rank);
            ladders[c].push_back({rc, cost, score});
        }
    }
    return ladders;
}

long minimum_cost(const std::vector<std::vector<Rung>>& ladders) {
    long total = 0;
    for (const auto& l : ladders) total += l.front().cost;
    return total;
}

void require_feasible(long min_cost, long budget) {
    if (min_cost > budget)
        throw config_error("budget " + std::to_string(budget) +
                           " cannot cover the minimum allocation; short by " +
                           std::to_string(min_cost - budget) + " parameters");
}

RankAllocation finish(const std::vector<std::vector<Rung>>& ladders,
                      const std::vector<int>& levels) {
    RankAllocation a;
    a.ranks.resize(levels.size());
    for (size_t c = 0; c < levels.size(); c++) {
        const Rung& r = ladders[c][levels[c]];
        a.ranks[c] = r.choice;
        a.total_params += r.cost;
        a.objective += r.score;
    }
    return a;
}

}  // namespace

namespace {

// Ratio greedy from a feasible starting point: repeatedly grant the
// affordable upgrade with the best score gain per parameter (ties: larger
// gain, then smaller component index).
void greedy_climb(const std::vector<std::vector<Rung>>& ladders, long budget,
                  std::vector<int>& levels) {
    long spent = 0;
    for (size_t c = 0; c < ladders.size(); c++) spent += ladders[c][levels[c]].cost;
    while (true) {
        int best = -1;
        double best_gain = 0.0;
        long best_delta = 1;
        for (size_t c = 0; c < ladders.size(); c++) {
            if (levels[c] + 1 >= (int)ladders[c].size()) continue;
            const Rung& cur = ladders[c][levels[c]];
            const Rung& next = ladders[c][levels[c] + 1];
            const long delta_cost = next.cost - cur.cost;
            if (spent + delta_cost > budget) continue;
            const double delta_gain = next.score - cur.score;
            if (best == -1) {
                best = (int)c, best_gain = delta_gain, best_delta = delta_cost;
                continue;
            }
            // compare delta_gain/delta_cost without dividing
            const double lhs = delta_gain * (double)best_delta;
            const double rhs = best_gain * (double)delta_cost;
            if (lhs > rhs || (lhs == rhs && delta_gain > best_gain))
                best = (int)c, best_gain = delta_gain, best_delta = delta_cost;
        }
        if (best == -1) break;
        levels[best]++;
        spent += best_delta;
    }
}

// Rung index per component at keep-rate rho (dense counts as full rank).
std::vector<int> levels_at_rate(const std::vector<std::vector<Rung>>& ladders,
                                const std::vector<ComponentSpectrum>& spectra, double rho) {
    std::vector<int> levels(spectra.size(), 0);
    for (size_t c = 0; c < spectra.size(); c++) {
        const double target = rho * spectra[c].full_rank() + 1e-9;
        int lvl = 0;
        for (size_t i = 1; i < ladders[c].size(); i++) {
            const int rank = ladders[c][i].choice.dense ? spectra[c].full_rank()
                                                        : ladders[c][i].choice.rank;
            if (rank <= target) lvl = (int)i;
        }
        levels[c] = lvl;
    }
    return levels;
}

long levels_cost(const std::vector<std::vector<Rung>>& ladders, const std::vector<int>& levels) {
    long total = 0;
    for (size_t c = 0; c < levels.size(); c++) total += ladders[c][levels[c]].cost;
    return total;
}

double levels_objective(const std::vector<std::vector<Rung>>& ladders,
                        const std::vector<int>& levels) {
    double total = 0.0;
    for (size_t c = 0; c < levels.size(); c++) total += ladders[c][levels[c]].score;
    return total;
}

// Largest keep-rate whose snapped allocation fits the budget.
std::vector<int> uniform_levels(const std::vector<std::vector<Rung>>& ladders,
                                const std::vector<ComponentSpectrum>& spectra, long budget) {
    std::vector<double> rates{0.0, 1.0};
    for (size_t c = 0; c < spectra.size(); c++)
        for (const Rung& r : ladders[c])
            if (!r.choice.dense && r.choice.rank > 0)
                rates.push_back((double)r.choice.rank / spectra[c].full_rank());
    std::sort(rates.begin(), rates.end(), std::greater<>());
    for (double rho : rates) {
        std::vector<int> levels = levels_at_rate(ladders, spectra, rho);
        if (levels_cost(ladders, levels) <= budget) return levels;
    }
    return levels_at_rate(ladders, spectra, 0.0);
}

}  // namespace

RankAllocation greedy_allocate(const std::vector<ComponentSpectrum>& spectra, long budget,
                               int step, int min_rank) {
    auto ladders = build_ladders(spectra, step, min_rank);
    require_feasible(minimum_cost(ladders), budget);

    std::vector<int> levels(spectra.size(), 0);
    greedy_climb(ladders, budget, levels);

    // Quantized increments with unequal per-component costs can strand budget
    // near the feasibility edge, letting the uniform point score higher.  In
    // that case restart the climb from the uniform point, which makes the
    // dominance guarantee hold by construction.
    std::vector<int> from_uniform = uniform_levels(ladders, spectra, budget);
    greedy_climb(ladders, budget, from_uniform);
    if (levels_objective(ladders, from_uniform) > levels_objective(ladders, levels))
        levels = from_uniform;
    return finish(ladders, levels);
}

RankAllocation exhaustive_allocate(const std::vector<ComponentSpectrum>& spectra, long budget,
                                   int step, int min_rank) {
    auto ladders = build_ladders(spectra, step, min_rank);
    require_feasible(minimum_cost(ladders), budget);

    double space = 1.0;
    for (const auto& l : ladders) space *= (double)l.size();
    if (space > 1e7)
        throw input_error("exhaustive search space exceeds 1e7 candidate allocations");

    const size_t n = ladders.size();
    // cheapest completion of components c..n-1, for pruning
    std::vector<long> suffix_min(n + 1, 0);
    for (size_t c = n; c-- > 0;) suffix_min[c] = suffix_min[c + 1] + ladders[c].front().cost;

    std::vector<int> levels(n, 0), best_levels;
    double best_obj = -1.0;

    // depth-first over rung indices in ascending (lexicographic) order; only
    // strict improvements replace the incumbent, so the lexicographically
    // smallest optimal tuple wins
    std::vector<int> stack_level(n + 1, 0);
    struct Frame {
        long spent;
        double obj;
    };
    std::vector<Frame> frames(n + 1);
    frames[0] = {0, 0.0};
    size_t depth = 0;
    stack_level[0] = 0;
    while (true) {
        if (depth == n) {
            if (frames[n].obj > best_obj) {
                best_obj = frames[n].obj;
                best_levels = levels;
            }
            if (depth == 0) break;
            depth--;
            stack_level[depth]++;
            continue;
        }
        const int lvl = stack_level[depth];
        if (lvl >= (int)ladders[depth].size()) {
            if (depth == 0) break;
            depth--;
            stack_level[depth]++;
            continue;
        }
        const Rung& r = ladders[depth][lvl];
        const long spent = frames[depth].spent + r.cost;
        const double obj = frames[depth].obj + r.score;
        // prune: cannot finish within budget, or cannot beat the incumbent
        if (spent + suffix_min[depth + 1] > budget ||
            obj + (double)(n - depth - 1) <= best_obj) {
            stack_level[depth]++;
            continue;
        }
        levels[depth] = lvl;
        frames[depth + 1] = {spent, obj};
        depth++;
        stack_level[depth] = 0;
    }

    if (best_levels.empty() && best_obj < 0.0)
        throw config_error("no feasible allocation within the budget");
    return finish(ladders, best_levels);
}

RankAllocation uniform_allocate(const std::vector<ComponentSpectrum>& spectra, long budget,
                                int step, int min_rank) {
    auto ladders = build_ladders(spectra, step, min_rank);
    require_feasible(minimum_cost(ladders), budget);
    return finish(ladders, uniform_levels(ladders, spectra, budget));
}

double allocation_objective(const std::vector<ComponentSpectrum>& spectra,
                            const RankAllocation& alloc) {
    if (spectra.size() != alloc.ranks.size())
        throw input_error("allocation does not match the spectra list");
    double obj = 0.0;
    for (size_t c = 0; c < spectra.size(); c++)
        obj += alloc.ranks[c].dense ? 1.0 : perf_score(spectra[c], alloc.ranks[c].rank);
    return obj;
}

long budget_from_ratio(const ParamAccounting& acc, double target_ratio) {
    if (acc.total_params < 1 || acc.retained_params < 0 || acc.decomposable_params < 0 ||
        acc.retained_params + acc.decomposable_params != acc.total_params)
        throw input_error("parameter accounting is inconsistent");
    if (target_ratio < 0.0 || target_ratio >= 1.0)
        throw config_error("target ratio must lie in [0, 1)");

    const double keep = (1.0 - target_ratio) * (double)acc.total_params;
    const long budget = (long)std::floor(keep) - acc.retained_params;
    if (budget < acc.min_cost) {
        const double min_ratio =
            1.0 - (double)(acc.retained_params + acc.min_cost) / (double)acc.total_params;
        throw config_error("target ratio " + std::to_string(target_ratio) +
                           " is unreachable; minimum achievable ratio is " +
                           std::to_string(min_ratio));
    }
    return budget;
}

}  // namespace lrc
