// command-line driver for the random-weight architecture search engine.
// subcommands: search (evolve a pareto front), eval (score one genome),
// ablate (estimator-correlation study against a benchmark table), describe
// (decode a genome without evaluating it).  exit codes: 0 ok, 1 usage,
// 2 runtime failure.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <mutex>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rwnas/bench.hpp"
#include "rwnas/config.hpp"
#include "rwnas/jsonio.hpp"
#include "rwnas/moea.hpp"
#include "rwnas/rwe.hpp"

namespace {

using namespace rwnas;

std::string fmt_g17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

// genome strings contain commas, so the csv field is always quoted
std::string csv_quote(const std::string& s) { return "\"" + s + "\""; }

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> items;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ','))
        if (std::string t = detail::trim(item); !t.empty()) items.push_back(t);
    return items;
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    return out;
}

void write_front_csv(const std::string& path, std::vector<Individual> front) {
    std::sort(front.begin(), front.end(), [](const Individual& a, const Individual& b) {
        if (a.f1 != b.f1) return a.f1 < b.f1;
        if (a.f2 != b.f2) return a.f2 < b.f2;
        return to_string(a.genome) < to_string(b.genome);
    });
    std::ofstream out = open_out(path);
    out << "genome,rwe_error,flops_m\n";
    for (const Individual& ind : front)
        out << csv_quote(to_string(ind.genome)) << "," << fmt_g17(ind.f1) << ","
            << fmt_g17(ind.f2) << "\n";
}

// dataset-backed pieces shared by search and eval
struct EvalSetup {
    ImageDataset dataset;
    ScaleConfig scale;
    RweConfig rwe;
};

EvalSetup make_eval_setup(const RunConfig& cfg) {
    EvalSetup s;
    s.dataset = dataset_from_config(cfg);
    s.scale = scale_from_config(cfg, s.dataset.classes);
    s.scale.input_h = s.dataset.h;
    s.scale.input_w = s.dataset.w;
    s.rwe = rwe_from_config(cfg);
    return s;
}

void require_decodable_space(const RunConfig& cfg, const char* cmd) {
    if (cfg.space == "custom")
        throw ConfigError(std::string(cmd) + ": space must be micro or macro");
}

Genome parse_genome_arg(const std::string& text, const SearchSpaceSpec& spec) {
    Genome g = genome_from_string(text);
    if (g.kind != spec.kind)
        throw EncodingError("genome kind '" + std::string(space_kind_name(g.kind)) +
                            "' does not match configured space");
    const std::vector<std::string> problems = validate(g, spec);
    if (!problems.empty()) throw EncodingError("invalid genome: " + problems.front());
    return g;
}

int cmd_search(const RunConfig& cfg, const std::string& out_dir) {
    require_decodable_space(cfg, "search");
    std::filesystem::create_directories(out_dir);
    save_config(cfg, out_dir + "/config.txt");

    const EvalSetup setup = make_eval_setup(cfg);
    const SearchSpaceSpec spec = space_from_config(cfg);
    const SearchConfig scfg = search_from_config(cfg);

    std::mutex mu;
    std::map<std::string, EvalReport> reports;
    auto eval = [&](const Genome& g) {
        EvalReport rep = evaluate_rwe(g, setup.scale, setup.dataset, setup.rwe);
        const Objectives obj{rep.rwe_error, static_cast<double>(rep.flops) / 1e6};
        std::lock_guard<std::mutex> lock(mu);
        reports[rep.genome] = std::move(rep);
        return obj;
    };

    std::ofstream log = open_out(out_dir + "/search.jsonl");
    auto on_gen = [&](const GenerationLog& gl) {
        log << generation_to_json(gl).dump() << "\n";
        std::printf("gen %3d  evals %4d  cache %4d  hv %.6f\n", gl.generation, gl.evaluations,
                    gl.cache_hits, gl.hypervolume);
        std::fflush(stdout);
    };

    const SearchResult res = run_search(spec, scfg, eval, on_gen);
    write_front_csv(out_dir + "/front.csv", res.front);

    std::ofstream evals = open_out(out_dir + "/evals.jsonl");
    for (const auto& [key, rep] : reports)
        evals << eval_report_to_json(rep, false).dump() << "\n";

    double best = 1.0;
    for (const Individual& ind : res.front) best = std::min(best, ind.f1);
    std::printf("front %zu members, best rwe_error %.4f, %d evaluations (%d cache hits)\n",
                res.front.size(), best, res.evaluations, res.cache_hits);
    std::printf("wrote %s/{config.txt,search.jsonl,front.csv,evals.jsonl}\n", out_dir.c_str());
    return 0;
}

int cmd_eval(const RunConfig& cfg, const std::string& genome_text, const std::string& out_dir) {
    require_decodable_space(cfg, "eval");
    const SearchSpaceSpec spec = space_from_config(cfg);
    const Genome g = parse_genome_arg(genome_text, spec);
    const EvalSetup setup = make_eval_setup(cfg);
    const EvalReport rep = evaluate_rwe(g, setup.scale, setup.dataset, setup.rwe);
    const std::string text = eval_report_to_json(rep, false).dump(2);
    std::printf("%s\n", text.c_str());
    if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        open_out(out_dir + "/report.json") << text << "\n";
    }
    return 0;
}

int cmd_describe(const RunConfig& cfg, const std::string& genome_text,
                 const std::string& out_dir) {
    require_decodable_space(cfg, "describe");
    const SearchSpaceSpec spec = space_from_config(cfg);
    const Genome g = parse_genome_arg(genome_text, spec);
    const NetGraph net = decode(g, scale_from_config(cfg, cfg.synth_classes));
    nlohmann::ordered_json j;
    j["genome"] = to_string(g);
    j["flops"] = count_flops(net);
    j["flops_m"] = static_cast<double>(count_flops(net)) / 1e6;
    j["params"] = count_params(net);
    j["graph"] = netgraph_to_json(net);
    const std::string text = j.dump(2);
    std::printf("%s\n", text.c_str());
    if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        open_out(out_dir + "/describe.json") << text << "\n";
    }
    return 0;
}

int cmd_ablate(const RunConfig& cfg, const std::string& out_dir) {
    if (cfg.table.empty())
        throw ConfigError("ablate: config key 'table' must point to a benchmark table csv");
    const BenchmarkTable table = load_table(cfg.table);
    const SearchSpaceSpec spec = space_from_config(cfg);

    AblationConfig acfg;
    acfg.pop_size = cfg.pop_size;
    acfg.max_gen = cfg.ablation_generations;
    acfg.trials = cfg.ablation_trials;
    acfg.seed = cfg.seed;
    acfg.workers = cfg.workers;

    const bool decodable = cfg.space != "custom";
    const ScaleConfig scale = scale_from_config(cfg, cfg.synth_classes);
    std::shared_ptr<ImageDataset> rwe_data;  // loaded once, only if requested

    std::vector<Estimator> estimators;
    for (const std::string& name : split_list(cfg.estimators)) {
        if (name == "table") {
            estimators.push_back(table_estimator(table));
        } else if (name == "neg_table") {
            Estimator e;
            e.name = "neg_table";
            e.score = [&table](const Genome& g) { return -table.lookup(g); };
            estimators.push_back(std::move(e));
        } else if (name == "noise") {
            estimators.push_back(noise_estimator(cfg.seed));
        } else if (name == "neg_flops" || name == "neg_params") {
            if (!decodable)
                throw ConfigError("estimator '" + name + "' needs micro or macro space");
            estimators.push_back(name == "neg_flops" ? neg_flops_estimator(scale)
                                                     : neg_params_estimator(scale));
        } else if (name == "rwe") {
            if (!decodable) throw ConfigError("estimator 'rwe' needs micro or macro space");
            if (!rwe_data) rwe_data = std::make_shared<ImageDataset>(dataset_from_config(cfg));
            ScaleConfig sc = scale_from_config(cfg, rwe_data->classes);
            sc.input_h = rwe_data->h;
            sc.input_w = rwe_data->w;
            const RweConfig rc = rwe_from_config(cfg);
            Estimator e;
            e.name = "rwe";
            e.make = [rc, sc, ds = rwe_data](std::uint64_t trial_seed) {
                RweConfig rt = rc;
                rt.seed = derive_seed(rc.seed, trial_seed);
                return std::function<double(const Genome&)>([rt, sc, ds](const Genome& g) {
                    return -evaluate_rwe(g, sc, *ds, rt).rwe_error;
                });
            };
            estimators.push_back(std::move(e));
        } else {
            throw ConfigError("unknown estimator '" + name + "'");
        }
    }
    if (estimators.empty()) throw ConfigError("ablate: config key 'estimators' is empty");

    // nsga-ii needs a second objective next to the estimator score: network
    // cost when the space decodes, plain gene sum otherwise
    std::function<double(const Genome&)> second;
    if (decodable)
        second = [scale](const Genome& g) {
            return static_cast<double>(count_flops(decode(g, scale))) / 1e6;
        };
    else
        second = [](const Genome& g) {
            double s = 0.0;
            for (int v : g.genes) s += v;
            return s;
        };

    const std::vector<CorrelationTrace> traces = run_ablation(spec, acfg, estimators, table, second);

    std::filesystem::create_directories(out_dir);
    save_config(cfg, out_dir + "/config.txt");
    write_traces_csv(out_dir + "/trace.csv", traces);

    const std::vector<AblationSummary> summaries = summarize(traces);
    std::ofstream sum = open_out(out_dir + "/summary.csv");
    sum << "estimator,generation,mean_rho,std_rho\n";
    for (const AblationSummary& s : summaries)
        for (std::size_t gen = 0; gen < s.mean_rho.size(); ++gen)
            sum << s.estimator << "," << gen << "," << fmt_g17(s.mean_rho[gen]) << ","
                << fmt_g17(s.std_rho[gen]) << "\n";

    for (const AblationSummary& s : summaries)
        std::printf("%-12s final-generation mean rho %+.4f\n", s.estimator.c_str(),
                    s.mean_rho.back());
    std::printf("wrote %s/{config.txt,trace.csv,summary.csv}\n", out_dir.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"multi-objective architecture search with random-weight evaluation"};
    app.require_subcommand(1);

    std::string config_path, out_dir, genome_text;
    std::uint64_t seed = 0;
    int workers = 0;

    auto add_common = [&](CLI::App* cmd, bool out_required) {
        cmd->add_option("--config", config_path, "run configuration file (key = value lines)");
        cmd->add_option("--seed", seed, "override the config seed");
        cmd->add_option("--workers", workers, "override the config worker count");
        auto* o = cmd->add_option("--out", out_dir, "output directory");
        if (out_required) o->required();
    };

    CLI::App* search = app.add_subcommand("search", "evolve a pareto front of architectures");
    add_common(search, true);
    CLI::App* eval = app.add_subcommand("eval", "score a single genome");
    add_common(eval, false);
    eval->add_option("--genome", genome_text, "genome string, e.g. micro:0,3,1,...")->required();
    CLI::App* ablate = app.add_subcommand("ablate", "estimator correlation study");
    add_common(ablate, true);
    CLI::App* describe = app.add_subcommand("describe", "decode a genome to its network graph");
    add_common(describe, false);
    describe->add_option("--genome", genome_text, "genome string")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        RunConfig cfg = config_path.empty() ? RunConfig{} : load_config(config_path);
        CLI::App* sub = app.get_subcommands().front();
        if (sub->count("--seed")) cfg.seed = seed;
        if (sub->count("--workers")) cfg.workers = workers;
        validate_config(cfg);
        if (sub == search) return cmd_search(cfg, out_dir);
        if (sub == eval) return cmd_eval(cfg, genome_text, out_dir);
        if (sub == ablate) return cmd_ablate(cfg, out_dir);
        return cmd_describe(cfg, genome_text, out_dir);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
}
