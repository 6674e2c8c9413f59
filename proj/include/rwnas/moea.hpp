#pragma once

// nsga-ii over integer genomes with two minimized objectives.  the search is
// generic in its evaluation backend: a callable mapping genome -> objectives,
// which must be safe to call from several threads at once.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <thread>
#include <unordered_map>
#include <utility>
#include <vector>

#include "rwnas/genome.hpp"
#include "rwnas/rng.hpp"

namespace rwnas {

class SearchError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

struct Objectives {
    double f1 = 0.0;  // rwe error in the real backend
    double f2 = 0.0;  // flops in millions in the real backend
};

struct Individual {
    Genome genome;
    double f1 = 0.0;
    double f2 = 0.0;
    int rank = -1;
    double crowding = 0.0;
    bool failed = false;  // evaluation threw; carries the worst objectives
};

struct SearchConfig {
    int pop_size = 20;
    int max_gen = 30;
    double crossover_prob = 0.9;
    double mutation_prob = -1.0;  // < 0 means 1 / genome length
    double eta_m = 20.0;
    double fail_f1 = 1.0;  // objectives assigned when the backend throws
    double fail_f2 = 1e9;
    double hv_ref1 = std::numeric_limits<double>::quiet_NaN();  // set both to
    double hv_ref2 = std::numeric_limits<double>::quiet_NaN();  // log hypervolume
    std::uint64_t seed = 0;
    int workers = 1;
};

inline bool dominates(const Individual& a, const Individual& b) {
    return a.f1 <= b.f1 && a.f2 <= b.f2 && (a.f1 < b.f1 || a.f2 < b.f2);
}

// deb's fast nondominated sort; front 0 is the nondominated set, front k is
// nondominated once fronts < k are removed
inline std::vector<std::vector<int>> nondominated_sort(const std::vector<Individual>& pop) {
    const int n = static_cast<int>(pop.size());
    std::vector<int> dominated_count(n, 0);
    std::vector<std::vector<int>> dominates_list(n);
    std::vector<std::vector<int>> fronts;
    std::vector<int> current;
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            if (i == j) continue;
            if (dominates(pop[i], pop[j]))
                dominates_list[i].push_back(j);
            else if (dominates(pop[j], pop[i]))
                ++dominated_count[i];
        }
        if (dominated_count[i] == 0) current.push_back(i);
    }
    while (!current.empty()) {
        fronts.push_back(current);
        std::vector<int> next;
        for (int i : current)
            for (int j : dominates_list[i])
                if (--dominated_count[j] == 0) next.push_back(j);
        std::sort(next.begin(), next.end());
        current = std::move(next);
    }
    return fronts;
}

// crowding distance within one front.  boundary individuals per objective get
// +infinity; interior ones sum normalized neighbor gaps over both objectives.
// zero-range objectives contribute nothing, and ties keep input order via
// stable sort so results are deterministic.
inline std::vector<double> crowding_distance(const std::vector<Individual>& pop,
                                             const std::vector<int>& front) {
    const int n = static_cast<int>(front.size());
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> dist(n, 0.0);
    if (n <= 2) {
        std::fill(dist.begin(), dist.end(), inf);
        return dist;
    }
    std::vector<int> order(n);
    auto sweep = [&](auto key) {
        for (int i = 0; i < n; ++i) order[i] = i;
        std::stable_sort(order.begin(), order.end(),
                         [&](int a, int b) { return key(pop[front[a]]) < key(pop[front[b]]); });
        dist[order.front()] = inf;
        dist[order.back()] = inf;
        const double range = key(pop[front[order.back()]]) - key(pop[front[order.front()]]);
        if (range <= 0.0) return;
        for (int i = 1; i + 1 < n; ++i) {
            if (std::isinf(dist[order[i]])) continue;
            dist[order[i]] +=
                (key(pop[front[order[i + 1]]]) - key(pop[front[order[i - 1]]])) / range;
        }
    };
    sweep([](const Individual& ind) { return ind.f1; });
    sweep([](const Individual& ind) { return ind.f2; });
    return dist;
}

inline std::vector<double> crowding_distance(const std::vector<Individual>& front) {
    std::vector<int> idx(front.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
    return crowding_distance(front, idx);
}

// recomputes rank and crowding for every individual in place
inline std::vector<std::vector<int>> assign_rank_crowding(std::vector<Individual>& pop) {
    std::vector<std::vector<int>> fronts = nondominated_sort(pop);
    for (std::size_t f = 0; f < fronts.size(); ++f) {
        const std::vector<double> dist = crowding_distance(pop, fronts[f]);
        for (std::size_t i = 0; i < fronts[f].size(); ++i) {
            pop[fronts[f][i]].rank = static_cast<int>(f);
            pop[fronts[f][i]].crowding = dist[i];
        }
    }
    return fronts;
}

// picks two uniformly (with replacement); lower rank wins, ties go to larger
// crowding, and a full tie is settled by a coin flip
inline int binary_tournament(const std::vector<Individual>& pop, Rng& rng) {
    const int a = static_cast<int>(rng.bounded(pop.size()));
    const int b = static_cast<int>(rng.bounded(pop.size()));
    if (pop[a].rank != pop[b].rank) return pop[a].rank < pop[b].rank ? a : b;
    if (pop[a].crowding != pop[b].crowding) return pop[a].crowding > pop[b].crowding ? a : b;
    return rng.next_bool() ? a : b;
}

// mu + lambda truncation: fill whole fronts, then cut the last admitted front
// by descending crowding (stable, so ties keep front order)
inline std::vector<Individual> environmental_selection(std::vector<Individual> combined,
                                                       int pop_size) {
    if (static_cast<int>(combined.size()) < pop_size)
        throw SearchError("environmental_selection: fewer individuals than pop_size");
    std::vector<std::vector<int>> fronts = assign_rank_crowding(combined);
    std::vector<Individual> next;
    next.reserve(pop_size);
    for (const std::vector<int>& front : fronts) {
        if (static_cast<int>(next.size() + front.size()) <= pop_size) {
            for (int i : front) next.push_back(combined[i]);
            if (static_cast<int>(next.size()) == pop_size) break;
            continue;
        }
        std::vector<int> order(front.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
        std::stable_sort(order.begin(), order.end(), [&](int x, int y) {
            return combined[front[x]].crowding > combined[front[y]].crowding;
        });
        for (int i : order) {
            if (static_cast<int>(next.size()) == pop_size) break;
            next.push_back(combined[front[i]]);
        }
        break;
    }
    return next;
}

// area dominated between the points and the reference, two objectives, both
// minimized; points at or beyond the reference contribute nothing
inline double hypervolume_2d(std::vector<std::pair<double, double>> pts, double ref1,
                             double ref2) {
    pts.erase(std::remove_if(pts.begin(), pts.end(),
                             [&](const auto& p) { return p.first >= ref1 || p.second >= ref2; }),
              pts.end());
    std::sort(pts.begin(), pts.end());
    double hv = 0.0;
    double best_f2 = ref2;
    for (const auto& [f1, f2] : pts) {
        if (f2 >= best_f2) continue;
        hv += (ref1 - f1) * (best_f2 - f2);
        best_f2 = f2;
    }
    return hv;
}

struct GenerationLog {
    int generation = 0;
    std::vector<Individual> population;  // survivors after environmental selection
    std::vector<Individual> combined;    // parents plus offspring seen this generation
    double hypervolume = 0.0;            // archive front vs the reference, if one is set
    int evaluations = 0;                 // cumulative backend calls
    int cache_hits = 0;                  // cumulative duplicate reuses
};

struct SearchResult {
    std::vector<Individual> population;   // final generation
    std::vector<Individual> front;        // nondominated non-failed archive members
    std::vector<GenerationLog> history;   // one entry per generation, including gen 0
    int evaluations = 0;
    int cache_hits = 0;
};

namespace detail {

struct EvalCache {
    std::unordered_map<std::string, Individual> table;
    std::vector<Individual> archive;  // unique genomes in evaluation order
    int evaluations = 0;
    int cache_hits = 0;
};

// evaluates a batch through the cache; unique misses fan out to the worker
// pool and results are joined by index, so worker count never changes them
inline std::vector<Individual> evaluate_batch(const std::vector<Genome>& genomes,
                                              const std::function<Objectives(const Genome&)>& eval,
                                              const SearchConfig& cfg, EvalCache& cache) {
    std::vector<std::string> keys(genomes.size());
    std::vector<int> miss;  // indices holding the first occurrence of a new key
    std::unordered_map<std::string, int> pending;
    for (std::size_t i = 0; i < genomes.size(); ++i) {
        keys[i] = to_string(genomes[i]);
        if (cache.table.count(keys[i]) || pending.count(keys[i])) {
            ++cache.cache_hits;
            continue;
        }
        pending.emplace(keys[i], static_cast<int>(i));
        miss.push_back(static_cast<int>(i));
    }

    std::vector<Individual> fresh(miss.size());
    auto run = [&](int begin, int end) {
        for (int m = begin; m < end; ++m) {
            Individual ind;
            ind.genome = genomes[miss[m]];
            try {
                const Objectives obj = eval(ind.genome);
                ind.f1 = obj.f1;
                ind.f2 = obj.f2;
            } catch (const std::exception&) {
                ind.f1 = cfg.fail_f1;
                ind.f2 = cfg.fail_f2;
                ind.failed = true;
            }
            fresh[m] = std::move(ind);
        }
    };
    const int workers = std::max(1, cfg.workers);
    if (workers == 1 || miss.size() <= 1) {
        run(0, static_cast<int>(miss.size()));
    } else {
        std::vector<std::thread> pool;
        const int per = (static_cast<int>(miss.size()) + workers - 1) / workers;
        for (int t = 0; t < workers; ++t) {
            const int begin = t * per;
            const int end = std::min<int>(begin + per, static_cast<int>(miss.size()));
            if (begin >= end) break;
            pool.emplace_back(run, begin, end);
        }
        for (std::thread& t : pool) t.join();
    }

    for (std::size_t m = 0; m < miss.size(); ++m) {
        cache.table.emplace(keys[miss[m]], fresh[m]);
        cache.archive.push_back(fresh[m]);
        ++cache.evaluations;
    }
    std::vector<Individual> out(genomes.size());
    for (std::size_t i = 0; i < genomes.size(); ++i) out[i] = cache.table.at(keys[i]);
    return out;
}

inline double archive_hypervolume(const EvalCache& cache, const SearchConfig& cfg) {
    if (!std::isfinite(cfg.hv_ref1) || !std::isfinite(cfg.hv_ref2)) return 0.0;
    std::vector<std::pair<double, double>> pts;
    for (const Individual& ind : cache.archive)
        if (!ind.failed) pts.emplace_back(ind.f1, ind.f2);
    return hypervolume_2d(std::move(pts), cfg.hv_ref1, cfg.hv_ref2);
}

}  // namespace detail

// the full generational loop: evaluate offspring, union with parents, select
// survivors by rank then crowding.  deterministic given spec, config, and a
// deterministic backend; failures keep their slot with the worst objectives.
inline SearchResult run_search(const SearchSpaceSpec& spec, const SearchConfig& cfg,
                               const std::function<Objectives(const Genome&)>& eval,
                               const std::function<void(const GenerationLog&)>& on_generation = {}) {
    if (cfg.pop_size < 2) throw SearchError("run_search: pop_size must be at least 2");
    if (cfg.max_gen < 0) throw SearchError("run_search: max_gen must be non-negative");
    const double p_m =
        cfg.mutation_prob >= 0.0 ? cfg.mutation_prob : 1.0 / std::max(1, spec.length());

    Rng rng(derive_seed(cfg.seed, fnv1a("search")));
    detail::EvalCache cache;
    SearchResult res;

    std::vector<Genome> seeds;
    seeds.reserve(cfg.pop_size);
    for (int i = 0; i < cfg.pop_size; ++i) seeds.push_back(sample_random(spec, rng));
    std::vector<Individual> pop = detail::evaluate_batch(seeds, eval, cfg, cache);
    assign_rank_crowding(pop);

    auto log_generation = [&](int gen, std::vector<Individual> combined) {
        GenerationLog log;
        log.generation = gen;
        log.population = pop;
        log.combined = std::move(combined);
        assign_rank_crowding(log.combined);  // ranks relative to the union itself
        log.hypervolume = detail::archive_hypervolume(cache, cfg);
        log.evaluations = cache.evaluations;
        log.cache_hits = cache.cache_hits;
        if (on_generation) on_generation(log);
        res.history.push_back(std::move(log));
    };
    log_generation(0, pop);

    for (int gen = 1; gen <= cfg.max_gen; ++gen) {
        std::vector<Genome> offspring;
        offspring.reserve(cfg.pop_size);
        while (static_cast<int>(offspring.size()) < cfg.pop_size) {
            const Genome& p1 = pop[binary_tournament(pop, rng)].genome;
            const Genome& p2 = pop[binary_tournament(pop, rng)].genome;
            std::pair<Genome, Genome> kids =
                rng.next_unit() < cfg.crossover_prob ? two_point_crossover(p1, p2, spec, rng)
                                                     : std::pair<Genome, Genome>{p1, p2};
            offspring.push_back(polynomial_mutation(std::move(kids.first), spec, cfg.eta_m, p_m, rng));
            if (static_cast<int>(offspring.size()) < cfg.pop_size)
                offspring.push_back(
                    polynomial_mutation(std::move(kids.second), spec, cfg.eta_m, p_m, rng));
        }
        std::vector<Individual> evaluated = detail::evaluate_batch(offspring, eval, cfg, cache);
        std::vector<Individual> combined = pop;
        combined.insert(combined.end(), evaluated.begin(), evaluated.end());
        pop = environmental_selection(combined, cfg.pop_size);
        log_generation(gen, std::move(combined));
    }

    res.population = pop;
    res.evaluations = cache.evaluations;
    res.cache_hits = cache.cache_hits;
    std::vector<Individual> ok;
    for (const Individual& ind : cache.archive)
        if (!ind.failed) ok.push_back(ind);
    const std::vector<std::vector<int>> fronts = nondominated_sort(ok);
    if (!fronts.empty())
        for (int i : fronts.front()) res.front.push_back(ok[i]);
    return res;
}

}  // namespace rwnas
