#pragma once

// json rendering of decoded graphs, kept out of netgraph.hpp so the core
// header stays light.

#include <cmath>
#include <string>

#include <json.hpp>

#include "rwnas/moea.hpp"
#include "rwnas/netgraph.hpp"
#include "rwnas/rwe.hpp"

namespace rwnas {

// one JSON-lines record per evaluation.  wall_seconds is diagnostic-only and
// excluded from outputs that promise byte-identical reruns.
inline nlohmann::ordered_json eval_report_to_json(const EvalReport& rep,
                                                  bool include_wall = true) {
    nlohmann::ordered_json j;
    j["genome"] = rep.genome;
    j["rwe_error"] = rep.rwe_error;
    j["flops"] = rep.flops;
    j["fold_errors"] = rep.fold_errors;
    j["seed"] = rep.seed;
    j["weight_seed"] = rep.weight_seed;
    j["weight_fingerprint"] = rep.weight_fingerprint;
    j["degenerate"] = rep.degenerate;
    if (include_wall) j["wall_seconds"] = rep.wall_seconds;
    return j;
}

// boundary members carry infinite crowding, which json cannot represent as a
// number; they are emitted as the string "inf"
inline nlohmann::ordered_json individual_to_json(const Individual& ind) {
    nlohmann::ordered_json j;
    j["genome"] = to_string(ind.genome);
    j["rwe_error"] = ind.f1;
    j["flops_m"] = ind.f2;
    j["rank"] = ind.rank;
    if (std::isfinite(ind.crowding))
        j["crowding"] = ind.crowding;
    else
        j["crowding"] = "inf";
    j["failed"] = ind.failed;
    return j;
}

inline nlohmann::ordered_json generation_to_json(const GenerationLog& log) {
    nlohmann::ordered_json j;
    j["generation"] = log.generation;
    j["evaluations"] = log.evaluations;
    j["cache_hits"] = log.cache_hits;
    j["hypervolume"] = log.hypervolume;
    j["population"] = nlohmann::ordered_json::array();
    for (const Individual& ind : log.population) j["population"].push_back(individual_to_json(ind));
    j["combined"] = nlohmann::ordered_json::array();
    for (const Individual& ind : log.combined) j["combined"].push_back(individual_to_json(ind));
    return j;
}

inline nlohmann::ordered_json netgraph_to_json(const NetGraph& net) {
    nlohmann::ordered_json j;
    j["space"] = space_kind_name(net.kind);
    j["feature_dim"] = net.feature_dim;
    j["output_id"] = net.output_id;
    j["flops"] = count_flops(net);
    j["params"] = count_params(net);
    j["stage_outputs"] = net.stage_outputs;
    j["nodes"] = nlohmann::ordered_json::array();
    for (std::size_t id = 0; id < net.nodes.size(); ++id) {
        const LayerNode& n = net.nodes[id];
        nlohmann::ordered_json nj;
        nj["id"] = id;
        nj["op"] = node_op_name(n.op);
        nj["tag"] = n.tag;
        nj["inputs"] = n.inputs;
        nj["out_channels"] = n.out_channels;
        nj["out_hw"] = {n.out_h, n.out_w};
        if (n.kernel) {
            nj["kernel"] = n.kernel;
            nj["stride"] = n.stride;
            nj["dilation"] = n.dilation;
            nj["groups"] = n.groups;
            nj["padding"] = n.padding;
        }
        j["nodes"].push_back(std::move(nj));
    }
    return j;
}

inline std::string dump_netgraph(const NetGraph& net, int indent = 2) {
    return netgraph_to_json(net).dump(indent);
}

}  // namespace rwnas
