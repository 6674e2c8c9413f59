#pragma once

// tabular benchmark adapter and the correlation-ablation harness: run the
// search with interchangeable score estimators and track, per generation, the
// spearman correlation between estimator scores and table accuracies.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "rwnas/genome.hpp"
#include "rwnas/moea.hpp"
#include "rwnas/netgraph.hpp"
#include "rwnas/rng.hpp"

namespace rwnas {

class BenchError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// spearman rank correlation

namespace detail {

// average ranks without sorting the values themselves: rank of v[i] is the
// count of smaller values plus half the tie mass (1-based mean rank)
inline std::vector<double> average_ranks(const std::vector<double>& v) {
    const std::size_t n = v.size();
    std::vector<int> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = static_cast<int>(i);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return v[a] < v[b]; });
    std::vector<double> rank(n, 0.0);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
        const double mean_rank = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;
        for (std::size_t k = i; k <= j; ++k) rank[order[k]] = mean_rank;
        i = j + 1;
    }
    return rank;
}

}  // namespace detail

// pearson correlation of average ranks; ties get their mean rank
inline double spearman(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) throw BenchError("spearman: length mismatch");
    if (x.size() < 2) throw BenchError("spearman: need at least two samples");
    const std::vector<double> rx = detail::average_ranks(x);
    const std::vector<double> ry = detail::average_ranks(y);
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += rx[i];
        my += ry[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) throw BenchError("spearman: zero rank variance");
    return sxy / std::sqrt(sxx * syy);
}

// ---------------------------------------------------------------------------
// benchmark table

struct BenchmarkTable {
    SpaceKind kind = SpaceKind::micro;
    bool compat_mode = true;
    std::map<std::string, double> entries;  // canonical genome string -> accuracy

    double lookup(const std::string& key) const {
        auto it = entries.find(key);
        if (it == entries.end()) throw BenchError("missing table entry: " + key);
        return it->second;
    }
    double lookup(const Genome& g) const { return lookup(to_string(g)); }
};

// csv rows are `"<genome>",<accuracy>`; the genome field is quoted because
// canonical genome strings contain commas
inline void save_table(const BenchmarkTable& table, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw BenchError("cannot write table: " + path);
    out << "genome,accuracy\n";
    char buf[64];
    for (const auto& [key, acc] : table.entries) {
        std::snprintf(buf, sizeof(buf), "%.17g", acc);
        out << '"' << key << "\"," << buf << "\n";
    }
}

inline BenchmarkTable load_table(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw BenchError("cannot open table: " + path);
    std::string line;
    if (!std::getline(in, line) || line != "genome,accuracy")
        throw BenchError(path + " line 1: expected header 'genome,accuracy'");
    BenchmarkTable table;
    bool first = true;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const std::string at = path + " line " + std::to_string(line_no) + ": ";
        std::string key, acc_text;
        if (line.front() == '"') {
            const std::size_t close = line.find('"', 1);
            if (close == std::string::npos || close + 1 >= line.size() || line[close + 1] != ',')
                throw BenchError(at + "malformed quoted genome field");
            key = line.substr(1, close - 1);
            acc_text = line.substr(close + 2);
        } else {
            const std::size_t comma = line.rfind(',');
            if (comma == std::string::npos) throw BenchError(at + "missing accuracy column");
            key = line.substr(0, comma);
            acc_text = line.substr(comma + 1);
        }
        Genome g;
        try {
            g = genome_from_string(key);
        } catch (const EncodingError& e) {
            throw BenchError(at + e.what());
        }
        if (first) {
            table.kind = g.kind;
            first = false;
        } else if (g.kind != table.kind) {
            throw BenchError(at + "genome kind differs from the rest of the table");
        }
        double acc = 0.0;
        std::size_t used = 0;
        try {
            acc = std::stod(acc_text, &used);
        } catch (const std::exception&) {
            throw BenchError(at + "bad accuracy '" + acc_text + "'");
        }
        if (used != acc_text.size()) throw BenchError(at + "bad accuracy '" + acc_text + "'");
        if (!(acc >= 0.0 && acc <= 1.0)) throw BenchError(at + "accuracy out of [0,1]");
        if (!table.entries.emplace(key, acc).second)
            throw BenchError(at + "duplicate genome " + key);
    }
    if (table.entries.empty()) throw BenchError(path + ": empty table");
    return table;
}

// ---------------------------------------------------------------------------
// estimators: deterministic per-genome scores where higher means better

struct Estimator {
    std::string name;
    std::function<double(const Genome&)> score;
    // optional: builds a per-trial scorer from the trial seed, for estimators
    // that must be independently redrawn every trial (the noise null)
    std::function<std::function<double(const Genome&)>(std::uint64_t)> make;

    std::function<double(const Genome&)> for_trial(std::uint64_t trial_seed) const {
        return make ? make(trial_seed) : score;
    }
};

inline Estimator table_estimator(const BenchmarkTable& table) {
    Estimator e;
    e.name = "table";
    e.score = [&table](const Genome& g) { return table.lookup(g); };
    return e;
}

// pure function of (seed, genome) so repeated queries agree, but redrawn from
// the trial seed inside ablations so trials are genuinely independent
inline Estimator noise_estimator(std::uint64_t seed) {
    Estimator e;
    e.name = "noise";
    auto build = [seed](std::uint64_t trial_seed) {
        const std::uint64_t s = derive_seed(seed, trial_seed);
        return std::function<double(const Genome&)>([s](const Genome& g) {
            Rng rng(derive_seed(s, genome_hash(g)));
            return rng.next_unit();
        });
    };
    e.score = build(0);
    e.make = build;
    return e;
}

inline Estimator neg_flops_estimator(const ScaleConfig& scale) {
    Estimator e;
    e.name = "neg_flops";
    e.score = [scale](const Genome& g) {
        return -static_cast<double>(count_flops(decode(g, scale)));
    };
    return e;
}

inline Estimator neg_params_estimator(const ScaleConfig& scale) {
    Estimator e;
    e.name = "neg_params";
    e.score = [scale](const Genome& g) {
        return -static_cast<double>(count_params(decode(g, scale)));
    };
    return e;
}

// ---------------------------------------------------------------------------
// ablation harness

struct CorrelationTrace {
    std::string estimator;
    int trial = 0;
    std::uint64_t trial_seed = 0;
    std::vector<double> rho;  // one entry per generation, including generation 0
};

struct AblationConfig {
    int pop_size = 20;
    int max_gen = 20;
    int trials = 5;
    std::uint64_t seed = 0;
    int workers = 1;  // trials fan out to this many threads
};

namespace detail {

inline CorrelationTrace ablation_trial(const SearchSpaceSpec& spec, const AblationConfig& cfg,
                                       const Estimator& estimator, const BenchmarkTable& table,
                                       const std::function<double(const Genome&)>& second_objective,
                                       int trial) {
    CorrelationTrace trace;
    trace.estimator = estimator.name;
    trace.trial = trial;
    trace.trial_seed = derive_seed(derive_seed(cfg.seed, fnv1a(estimator.name)), trial);

    SearchConfig sc;
    sc.pop_size = cfg.pop_size;
    sc.max_gen = cfg.max_gen;
    sc.seed = trace.trial_seed;
    const std::function<double(const Genome&)> score = estimator.for_trial(trace.trial_seed);
    auto eval = [&](const Genome& g) -> Objectives {
        return {-score(g), second_objective(g)};
    };
    const SearchResult res = run_search(spec, sc, eval);
    for (const GenerationLog& log : res.history) {
        std::vector<double> scores, accs;
        for (const Individual& ind : log.combined) {
            if (ind.failed) continue;
            scores.push_back(-ind.f1);  // flip back to higher-is-better
            accs.push_back(table.lookup(ind.genome));
        }
        trace.rho.push_back(spearman(scores, accs));
    }
    return trace;
}

}  // namespace detail

// runs the search once per (estimator, trial) pair; each generation's rho is
// computed over that generation's parents-plus-offspring union.  trials are
// independent, so they fan out to cfg.workers threads and join by index.
inline std::vector<CorrelationTrace> run_ablation(
    const SearchSpaceSpec& spec, const AblationConfig& cfg,
    const std::vector<Estimator>& estimators, const BenchmarkTable& table,
    const std::function<double(const Genome&)>& second_objective) {
    if (spec.kind != table.kind) throw BenchError("run_ablation: table space mismatch");
    if (cfg.trials < 1) throw BenchError("run_ablation: trials must be positive");

    struct Job {
        int estimator;
        int trial;
    };
    std::vector<Job> jobs;
    for (std::size_t e = 0; e < estimators.size(); ++e)
        for (int t = 0; t < cfg.trials; ++t) jobs.push_back({static_cast<int>(e), t});

    std::vector<CorrelationTrace> traces(jobs.size());
    std::exception_ptr failure;
    std::mutex failure_mu;
    auto run = [&](std::size_t begin, std::size_t end) {
        for (std::size_t j = begin; j < end; ++j) {
            try {
                traces[j] = detail::ablation_trial(spec, cfg, estimators[jobs[j].estimator], table,
                                                   second_objective, jobs[j].trial);
            } catch (...) {
                std::lock_guard<std::mutex> lock(failure_mu);
                if (!failure) failure = std::current_exception();
            }
        }
    };
    const int workers = std::max(1, cfg.workers);
    if (workers == 1 || jobs.size() <= 1) {
        run(0, jobs.size());
    } else {
        std::vector<std::thread> pool;
        const std::size_t per = (jobs.size() + workers - 1) / workers;
        for (int t = 0; t < workers; ++t) {
            const std::size_t begin = t * per;
            const std::size_t end = std::min(begin + per, jobs.size());
            if (begin >= end) break;
            pool.emplace_back(run, begin, end);
        }
        for (std::thread& th : pool) th.join();
    }
    if (failure) std::rethrow_exception(failure);
    return traces;
}

struct AblationSummary {
    std::string estimator;
    std::vector<double> mean_rho;  // per generation, across trials
    std::vector<double> std_rho;
};

inline std::vector<AblationSummary> summarize(const std::vector<CorrelationTrace>& traces) {
    std::vector<AblationSummary> out;
    for (const CorrelationTrace& tr : traces) {
        AblationSummary* s = nullptr;
        for (AblationSummary& cand : out)
            if (cand.estimator == tr.estimator) s = &cand;
        if (!s) {
            out.push_back({tr.estimator, std::vector<double>(tr.rho.size(), 0.0),
                           std::vector<double>(tr.rho.size(), 0.0)});
            s = &out.back();
        }
        if (s->mean_rho.size() != tr.rho.size())
            throw BenchError("summarize: trace lengths differ for " + tr.estimator);
    }
    for (AblationSummary& s : out) {
        std::vector<const CorrelationTrace*> group;
        for (const CorrelationTrace& tr : traces)
            if (tr.estimator == s.estimator) group.push_back(&tr);
        for (std::size_t g = 0; g < s.mean_rho.size(); ++g) {
            double mean = 0.0;
            for (const CorrelationTrace* tr : group) mean += tr->rho[g];
            mean /= static_cast<double>(group.size());
            double sq = 0.0;
            for (const CorrelationTrace* tr : group)
                sq += (tr->rho[g] - mean) * (tr->rho[g] - mean);
            s.mean_rho[g] = mean;
            s.std_rho[g] = std::sqrt(sq / static_cast<double>(group.size()));
        }
    }
    return out;
}

// trace csv: one row per (estimator, trial, generation)
inline void write_traces_csv(std::ostream& out, const std::vector<CorrelationTrace>& traces) {
    out << "estimator,trial,generation,rho\n";
    char buf[64];
    for (const CorrelationTrace& tr : traces)
        for (std::size_t g = 0; g < tr.rho.size(); ++g) {
            std::snprintf(buf, sizeof(buf), "%.17g", tr.rho[g]);
            out << tr.estimator << ',' << tr.trial << ',' << g << ',' << buf << "\n";
        }
}

inline void write_traces_csv(const std::string& path, const std::vector<CorrelationTrace>& traces) {
    std::ofstream out(path);
    if (!out) throw BenchError("cannot write traces: " + path);
    write_traces_csv(out, traces);
}

}  // namespace rwnas
