#pragma once

// decodes genomes into concrete CNN computation graphs and computes exact
// MAC counts analytically.  graphs are immutable after construction and can
// be shared freely across threads.

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "rwnas/genome.hpp"

namespace rwnas {

enum class NodeOp {
    kInput,
    kConv,
    kBatchNorm,
    kRelu,
    kMaxPool3,
    kAvgPool3,
    kFactorizedReduce,
    kConcat,
    kAdd,
    kGlobalAvgPool,
    kZero,
    kIdentity,
    kLinear,
};

inline const char* node_op_name(NodeOp op) {
    switch (op) {
        case NodeOp::kInput: return "input";
        case NodeOp::kConv: return "conv";
        case NodeOp::kBatchNorm: return "batch_norm";
        case NodeOp::kRelu: return "relu";
        case NodeOp::kMaxPool3: return "max_pool3";
        case NodeOp::kAvgPool3: return "avg_pool3";
        case NodeOp::kFactorizedReduce: return "factorized_reduce";
        case NodeOp::kConcat: return "concat";
        case NodeOp::kAdd: return "add";
        case NodeOp::kGlobalAvgPool: return "global_avg_pool";
        case NodeOp::kZero: return "zero";
        case NodeOp::kIdentity: return "identity";
        case NodeOp::kLinear: return "linear";
    }
    return "?";
}

struct LayerNode {
    NodeOp op = NodeOp::kIdentity;
    std::vector<int> inputs;
    int in_channels = 0;
    int out_channels = 0;
    int kernel = 0;
    int stride = 1;
    int dilation = 1;
    int groups = 1;
    int padding = 0;
    int out_h = 0;
    int out_w = 0;
    std::string tag;
};

struct ScaleConfig {
    int init_channels = 10;   // micro: stem multiplier 3 applied on top
    int layers = 5;           // micro cell count
    int phase_channels = 32;  // macro: channels of the first phase, doubled per phase
    int input_channels = 3;
    int input_h = 32;
    int input_w = 32;
    int num_classes = 10;
};

inline ScaleConfig micro_search_scale() { return ScaleConfig{}; }

inline ScaleConfig macro_search_scale() {
    ScaleConfig s;
    s.phase_channels = 32;
    return s;
}

struct NetGraph {
    SpaceKind kind = SpaceKind::micro;
    std::vector<LayerNode> nodes;
    int output_id = -1;               // global-average-pool node
    int feature_dim = 0;              // classifier input width
    std::vector<int> stage_outputs;   // per cell (micro) or per phase (macro)
    std::vector<bool> reduction_stages;
};

class DecodeError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

inline int conv_out_dim(int in, int kernel, int stride, int padding, int dilation) {
    return (in + 2 * padding - dilation * (kernel - 1) - 1) / stride + 1;
}

// MAC count of one node (multiply-accumulate counted once, batch size 1).
// only conv-like and linear nodes carry MACs.
inline std::int64_t node_flops(const LayerNode& n) {
    const std::int64_t spatial = std::int64_t(n.out_h) * n.out_w;
    switch (n.op) {
        case NodeOp::kConv:
            return std::int64_t(n.kernel) * n.kernel * n.in_channels / n.groups *
                   n.out_channels * spatial;
        case NodeOp::kFactorizedReduce:
            // two 1x1 stride-2 convs, each producing half the output channels
            return std::int64_t(n.in_channels) * n.out_channels * spatial;
        case NodeOp::kLinear:
            return std::int64_t(n.in_channels) * n.out_channels;
        default:
            return 0;
    }
}

inline std::int64_t node_params(const LayerNode& n) {
    switch (n.op) {
        case NodeOp::kConv:
            return std::int64_t(n.kernel) * n.kernel * n.in_channels / n.groups * n.out_channels;
        case NodeOp::kBatchNorm:
            return 2 * std::int64_t(n.out_channels);
        case NodeOp::kFactorizedReduce:
            // the two 1x1 convs plus the trailing batch norm
            return std::int64_t(n.in_channels) * n.out_channels + 2 * std::int64_t(n.out_channels);
        case NodeOp::kLinear:
            return std::int64_t(n.in_channels) * n.out_channels + n.out_channels;
        default:
            return 0;
    }
}

inline std::int64_t count_flops(const NetGraph& net) {
    std::int64_t total = 0;
    for (const LayerNode& n : net.nodes) total += node_flops(n);
    return total;
}

inline std::int64_t count_params(const NetGraph& net) {
    std::int64_t total = 0;
    for (const LayerNode& n : net.nodes) total += node_params(n);
    return total;
}

namespace detail {

// incremental graph builder; every helper derives the output shape of the
// new node from its input node so decode cannot produce inconsistent dims.
struct GraphBuilder {
    NetGraph net;

    int push(LayerNode n) {
        net.nodes.push_back(std::move(n));
        return static_cast<int>(net.nodes.size()) - 1;
    }

    const LayerNode& at(int id) const { return net.nodes[id]; }

    int input(int channels, int h, int w) {
        LayerNode n;
        n.op = NodeOp::kInput;
        n.out_channels = channels;
        n.out_h = h;
        n.out_w = w;
        n.tag = "input";
        return push(std::move(n));
    }

    int conv(int src, int c_out, int kernel, int stride, int dilation, int groups,
             std::string tag) {
        const LayerNode& s = at(src);
        LayerNode n;
        n.op = NodeOp::kConv;
        n.inputs = {src};
        n.in_channels = s.out_channels;
        n.out_channels = c_out;
        n.kernel = kernel;
        n.stride = stride;
        n.dilation = dilation;
        n.groups = groups;
        n.padding = dilation * (kernel - 1) / 2;
        n.out_h = conv_out_dim(s.out_h, kernel, stride, n.padding, dilation);
        n.out_w = conv_out_dim(s.out_w, kernel, stride, n.padding, dilation);
        n.tag = std::move(tag);
        return push(std::move(n));
    }

    int unary(NodeOp op, int src, std::string tag) {
        const LayerNode& s = at(src);
        LayerNode n;
        n.op = op;
        n.inputs = {src};
        n.in_channels = s.out_channels;
        n.out_channels = s.out_channels;
        n.out_h = s.out_h;
        n.out_w = s.out_w;
        n.tag = std::move(tag);
        return push(std::move(n));
    }

    int bn(int src, std::string tag) { return unary(NodeOp::kBatchNorm, src, std::move(tag)); }
    int relu(int src, std::string tag) { return unary(NodeOp::kRelu, src, std::move(tag)); }

    int pool(NodeOp op, int src, int stride, std::string tag) {
        const LayerNode& s = at(src);
        LayerNode n;
        n.op = op;
        n.inputs = {src};
        n.in_channels = s.out_channels;
        n.out_channels = s.out_channels;
        n.kernel = 3;
        n.stride = stride;
        n.padding = 1;
        n.out_h = conv_out_dim(s.out_h, 3, stride, 1, 1);
        n.out_w = conv_out_dim(s.out_w, 3, stride, 1, 1);
        n.tag = std::move(tag);
        return push(std::move(n));
    }

    int zero(int src, int stride, std::string tag) {
        const LayerNode& s = at(src);
        LayerNode n;
        n.op = NodeOp::kZero;
        n.inputs = {src};
        n.in_channels = s.out_channels;
        n.out_channels = s.out_channels;
        n.stride = stride;
        n.out_h = (s.out_h + stride - 1) / stride;
        n.out_w = (s.out_w + stride - 1) / stride;
        n.tag = std::move(tag);
        return push(std::move(n));
    }

    int factorized_reduce(int src, int c_out, std::string tag) {
        const LayerNode& s = at(src);
        LayerNode n;
        n.op = NodeOp::kFactorizedReduce;
        n.inputs = {src};
        n.in_channels = s.out_channels;
        n.out_channels = c_out;
        n.kernel = 1;
        n.stride = 2;
        n.out_h = (s.out_h - 1) / 2 + 1;
        n.out_w = (s.out_w - 1) / 2 + 1;
        n.tag = std::move(tag);
        return push(std::move(n));
    }

    int add(const std::vector<int>& srcs, std::string tag) {
        const LayerNode& s = at(srcs.front());
        LayerNode n;
        n.op = NodeOp::kAdd;
        n.inputs = srcs;
        n.in_channels = s.out_channels;
        n.out_channels = s.out_channels;
        n.out_h = s.out_h;
        n.out_w = s.out_w;
        n.tag = std::move(tag);
        return push(std::move(n));
    }

    int concat(const std::vector<int>& srcs, std::string tag) {
        const LayerNode& s = at(srcs.front());
        LayerNode n;
        n.op = NodeOp::kConcat;
        n.inputs = srcs;
        for (int id : srcs) n.out_channels += at(id).out_channels;
        n.in_channels = n.out_channels;
        n.out_h = s.out_h;
        n.out_w = s.out_w;
        n.tag = std::move(tag);
        return push(std::move(n));
    }

    int global_avg_pool(int src, std::string tag) {
        const LayerNode& s = at(src);
        LayerNode n;
        n.op = NodeOp::kGlobalAvgPool;
        n.inputs = {src};
        n.in_channels = s.out_channels;
        n.out_channels = s.out_channels;
        n.out_h = 1;
        n.out_w = 1;
        n.tag = std::move(tag);
        return push(std::move(n));
    }

    // relu -> conv -> bn preprocessing block used throughout the cell space
    int relu_conv_bn(int src, int c_out, int kernel, int stride, const std::string& tag) {
        int x = relu(src, tag + ".relu");
        x = conv(x, c_out, kernel, stride, 1, 1, tag + ".conv");
        return bn(x, tag + ".bn");
    }

    // conv -> bn -> relu block used by the macro space
    int conv_bn_relu(int src, int c_out, int kernel, int stride, const std::string& tag) {
        int x = conv(src, c_out, kernel, stride, 1, 1, tag + ".conv");
        x = bn(x, tag + ".bn");
        return relu(x, tag + ".relu");
    }

    // depthwise-separable conv applied twice (first block carries the stride)
    int sep_conv(int src, int channels, int kernel, int stride, const std::string& tag) {
        int x = relu(src, tag + ".relu1");
        x = conv(x, channels, kernel, stride, 1, channels, tag + ".dw1");
        x = conv(x, channels, 1, 1, 1, 1, tag + ".pw1");
        x = bn(x, tag + ".bn1");
        x = relu(x, tag + ".relu2");
        x = conv(x, channels, kernel, 1, 1, channels, tag + ".dw2");
        x = conv(x, channels, 1, 1, 1, 1, tag + ".pw2");
        return bn(x, tag + ".bn2");
    }

    // dilated depthwise-separable conv applied once
    int dil_conv(int src, int channels, int kernel, int stride, const std::string& tag) {
        int x = relu(src, tag + ".relu");
        x = conv(x, channels, kernel, stride, 2, channels, tag + ".dw");
        x = conv(x, channels, 1, 1, 1, 1, tag + ".pw");
        return bn(x, tag + ".bn");
    }

    int micro_edge_op(int op, int src, int channels, int stride, const std::string& tag) {
        switch (static_cast<MicroOp>(op)) {
            case MicroOp::kOpIdentity:
                return stride == 1 ? unary(NodeOp::kIdentity, src, tag + ".id")
                                   : factorized_reduce(src, channels, tag + ".fr");
            case MicroOp::kOpSepConv3: return sep_conv(src, channels, 3, stride, tag + ".sep3");
            case MicroOp::kOpSepConv5: return sep_conv(src, channels, 5, stride, tag + ".sep5");
            case MicroOp::kOpDilConv3: return dil_conv(src, channels, 3, stride, tag + ".dil3");
            case MicroOp::kOpDilConv5: return dil_conv(src, channels, 5, stride, tag + ".dil5");
            case MicroOp::kOpMaxPool3:
                return pool(NodeOp::kMaxPool3, src, stride, tag + ".max3");
            case MicroOp::kOpAvgPool3:
                return pool(NodeOp::kAvgPool3, src, stride, tag + ".avg3");
            case MicroOp::kOpZero: return zero(src, stride, tag + ".zero");
        }
        throw DecodeError("unknown micro op " + std::to_string(op));
    }
};

inline void check_decodable(const Genome& g, const SearchSpaceSpec& spec) {
    if (static_cast<int>(g.genes.size()) != spec.length())
        throw DecodeError("genome length " + std::to_string(g.genes.size()) + " != expected " +
                          std::to_string(spec.length()));
    for (std::size_t i = 0; i < g.genes.size(); ++i) {
        const GeneBounds& b = spec.bounds[i];
        if (g.genes[i] < b.lo || g.genes[i] > b.hi)
            throw DecodeError("gene " + std::to_string(i) + " = " + std::to_string(g.genes[i]) +
                              " outside [" + std::to_string(b.lo) + ", " + std::to_string(b.hi) +
                              "]");
    }
}

inline NetGraph decode_micro(const Genome& g, const ScaleConfig& scale) {
    check_decodable(g, micro_space(false));
    const MicroCells cells = micro_cells(g);
    GraphBuilder b;
    b.net.kind = SpaceKind::micro;

    const int in = b.input(scale.input_channels, scale.input_h, scale.input_w);
    int stem = b.conv(in, 3 * scale.init_channels, 3, 1, 1, 1, "stem.conv");
    stem = b.bn(stem, "stem.bn");

    int s0 = stem, s1 = stem;
    int c_p = 3 * scale.init_channels;
    int c_curr = scale.init_channels;
    bool reduction_prev = false;
    const int n = scale.layers;
    for (int cell = 0; cell < n; ++cell) {
        const bool reduction = (cell == n / 3) || (cell == 2 * n / 3);
        if (reduction) c_curr *= 2;
        const std::string ct = "c" + std::to_string(cell);
        const auto& arch = reduction ? cells.reduction : cells.normal;

        int p0 = reduction_prev ? b.factorized_reduce(s0, c_curr, ct + ".p0.fr")
                                : b.relu_conv_bn(s0, c_curr, 1, 1, ct + ".p0");
        int p1 = b.relu_conv_bn(s1, c_curr, 1, 1, ct + ".p1");
        std::vector<int> states{p0, p1};
        for (int node = 0; node < kMicroNodesPerCell; ++node) {
            const NodeSpec& ns = arch[node];
            const std::string nt = ct + ".n" + std::to_string(node);
            const int stride1 = (reduction && ns.in1 < 2) ? 2 : 1;
            const int stride2 = (reduction && ns.in2 < 2) ? 2 : 1;
            const int e1 = b.micro_edge_op(ns.op1, states[ns.in1], c_curr, stride1, nt + ".e1");
            const int e2 = b.micro_edge_op(ns.op2, states[ns.in2], c_curr, stride2, nt + ".e2");
            states.push_back(b.add({e1, e2}, nt + ".add"));
        }
        const int out =
            b.concat({states[2], states[3], states[4], states[5]}, ct + ".out");
        b.net.stage_outputs.push_back(out);
        b.net.reduction_stages.push_back(reduction);
        reduction_prev = reduction;
        c_p = kMicroNodesPerCell * c_curr;
        s0 = s1;
        s1 = out;
    }
    b.net.output_id = b.global_avg_pool(s1, "gap");
    b.net.feature_dim = c_p;
    return std::move(b.net);
}

inline NetGraph decode_macro(const Genome& g, const ScaleConfig& scale) {
    check_decodable(g, macro_space());
    GraphBuilder b;
    b.net.kind = SpaceKind::macro;

    const int in = b.input(scale.input_channels, scale.input_h, scale.input_w);
    int x = b.conv_bn_relu(in, scale.phase_channels, 3, 1, "stem");

    for (int phase = 0; phase < kMacroPhases; ++phase) {
        const int channels = scale.phase_channels << phase;
        const std::string pt = "ph" + std::to_string(phase);
        if (phase > 0) {
            // fixed reduction between phases: halve resolution, double channels
            x = b.conv_bn_relu(x, channels, 3, 2, "red" + std::to_string(phase - 1));
        }

        const int k = kMacroNodesPerPhase;
        std::array<bool, kMacroNodesPerPhase> active{};
        for (int i = 0; i < k; ++i)
            for (int j = i + 1; j < k; ++j)
                if (macro_edge(g, phase, i, j)) active[i] = active[j] = true;

        const int a0 = b.conv_bn_relu(x, channels, 3, 1, pt + ".a0");
        std::array<int, kMacroNodesPerPhase> out{};
        for (int j = 0; j < k; ++j) {
            if (!active[j]) continue;
            std::vector<int> preds;
            for (int i = 0; i < j; ++i)
                if (macro_edge(g, phase, i, j)) preds.push_back(out[i]);
            const std::string nt = pt + ".n" + std::to_string(j);
            int src = a0;
            if (preds.size() == 1) src = preds[0];
            else if (preds.size() > 1) src = b.add(preds, nt + ".sum");
            out[j] = b.conv_bn_relu(src, channels, 3, 1, nt);
        }
        std::vector<int> sinks;
        for (int j = 0; j < k; ++j) {
            if (!active[j]) continue;
            bool has_succ = false;
            for (int t = j + 1; t < k; ++t)
                if (macro_edge(g, phase, j, t)) has_succ = true;
            if (!has_succ) sinks.push_back(out[j]);
        }
        if (sinks.empty()) x = a0;  // all-zero phase: the default conv node alone
        else if (sinks.size() == 1) x = sinks[0];
        else x = b.add(sinks, pt + ".sum");
        b.net.stage_outputs.push_back(x);
        b.net.reduction_stages.push_back(false);
    }
    b.net.output_id = b.global_avg_pool(x, "gap");
    b.net.feature_dim = b.at(b.net.output_id).out_channels;
    return std::move(b.net);
}

}  // namespace detail

inline NetGraph decode(const Genome& g, const ScaleConfig& scale) {
    switch (g.kind) {
        case SpaceKind::micro: return detail::decode_micro(g, scale);
        case SpaceKind::macro: return detail::decode_macro(g, scale);
        case SpaceKind::custom: break;
    }
    throw DecodeError("custom genomes have no network decoding");
}

// structural validation; violations are returned as data, an empty list means ok.
inline std::vector<std::string> validate(const NetGraph& net) {
    std::vector<std::string> out;
    const int n = static_cast<int>(net.nodes.size());
    auto fail = [&](int id, const std::string& what) {
        out.push_back("node " + std::to_string(id) + " (" + net.nodes[id].tag + "): " + what);
    };

    if (net.output_id < 0 || net.output_id >= n) {
        out.push_back("output id " + std::to_string(net.output_id) + " out of range");
        return out;
    }

    // edge sanity, then kahn's algorithm for cycle detection
    std::vector<int> indegree(n, 0);
    std::vector<std::vector<int>> succ(n);
    bool edges_ok = true;
    for (int id = 0; id < n; ++id) {
        for (int src : net.nodes[id].inputs) {
            if (src < 0 || src >= n || src == id) {
                fail(id, "bad input id " + std::to_string(src));
                edges_ok = false;
                continue;
            }
            ++indegree[id];
            succ[src].push_back(id);
        }
    }
    if (edges_ok) {
        std::vector<int> queue;
        for (int id = 0; id < n; ++id)
            if (indegree[id] == 0) queue.push_back(id);
        std::size_t head = 0;
        int seen = 0;
        while (head < queue.size()) {
            const int id = queue[head++];
            ++seen;
            for (int t : succ[id])
                if (--indegree[t] == 0) queue.push_back(t);
        }
        if (seen != n) out.push_back("cycle detected: graph has no topological order");
    }
    if (!out.empty()) return out;

    for (int id = 0; id < n; ++id) {
        const LayerNode& node = net.nodes[id];
        const auto& ins = node.inputs;
        auto first_in = [&]() -> const LayerNode& { return net.nodes[ins.front()]; };
        if (node.op == NodeOp::kInput) {
            if (!ins.empty()) fail(id, "input node with inputs");
            continue;
        }
        if (ins.empty()) {
            fail(id, "non-input node without inputs");
            continue;
        }
        if (node.stride < 1 || node.stride > 2) fail(id, "stride " + std::to_string(node.stride));

        int want_h = first_in().out_h, want_w = first_in().out_w;
        int want_c = node.out_channels;
        switch (node.op) {
            case NodeOp::kConv:
                if (node.in_channels != first_in().out_channels)
                    fail(id, "in_channels mismatch");
                if (node.groups < 1 || node.in_channels % node.groups ||
                    node.out_channels % node.groups)
                    fail(id, "groups do not divide channels");
                want_h = conv_out_dim(first_in().out_h, node.kernel, node.stride, node.padding,
                                      node.dilation);
                want_w = conv_out_dim(first_in().out_w, node.kernel, node.stride, node.padding,
                                      node.dilation);
                break;
            case NodeOp::kMaxPool3:
            case NodeOp::kAvgPool3:
                want_c = first_in().out_channels;
                want_h = conv_out_dim(first_in().out_h, 3, node.stride, 1, 1);
                want_w = conv_out_dim(first_in().out_w, 3, node.stride, 1, 1);
                break;
            case NodeOp::kFactorizedReduce:
                if (node.out_channels % 2) fail(id, "odd output channels");
                if (first_in().out_h % 2 || first_in().out_w % 2)
                    fail(id, "factorized reduce on odd input dims");
                if (node.in_channels != first_in().out_channels)
                    fail(id, "in_channels mismatch");
                want_h = (first_in().out_h - 1) / 2 + 1;
                want_w = (first_in().out_w - 1) / 2 + 1;
                break;
            case NodeOp::kZero:
                want_c = first_in().out_channels;
                want_h = (first_in().out_h + node.stride - 1) / node.stride;
                want_w = (first_in().out_w + node.stride - 1) / node.stride;
                break;
            case NodeOp::kConcat: {
                int sum = 0;
                for (int src : ins) {
                    sum += net.nodes[src].out_channels;
                    if (net.nodes[src].out_h != want_h || net.nodes[src].out_w != want_w)
                        fail(id, "concat inputs differ spatially");
                }
                if (node.out_channels != sum)
                    fail(id, "concat channels " + std::to_string(node.out_channels) +
                                 " != input sum " + std::to_string(sum));
                break;
            }
            case NodeOp::kAdd:
                for (int src : ins)
                    if (net.nodes[src].out_channels != first_in().out_channels ||
                        net.nodes[src].out_h != want_h || net.nodes[src].out_w != want_w)
                        fail(id, "add inputs differ in shape");
                want_c = first_in().out_channels;
                break;
            case NodeOp::kGlobalAvgPool:
                want_c = first_in().out_channels;
                want_h = 1;
                want_w = 1;
                break;
            case NodeOp::kLinear:
                if (first_in().out_h != 1 || first_in().out_w != 1)
                    fail(id, "linear input not 1x1");
                if (node.in_channels != first_in().out_channels)
                    fail(id, "in_channels mismatch");
                want_h = 1;
                want_w = 1;
                break;
            case NodeOp::kBatchNorm:
            case NodeOp::kRelu:
            case NodeOp::kIdentity:
                want_c = first_in().out_channels;
                break;
            case NodeOp::kInput: break;
        }
        if (node.out_channels != want_c)
            fail(id, "channels " + std::to_string(node.out_channels) + " != expected " +
                         std::to_string(want_c));
        if (node.out_h != want_h || node.out_w != want_w)
            fail(id, "spatial " + std::to_string(node.out_h) + "x" + std::to_string(node.out_w) +
                         " != expected " + std::to_string(want_h) + "x" + std::to_string(want_w));
    }
    if (net.feature_dim != net.nodes[net.output_id].out_channels)
        out.push_back("feature_dim " + std::to_string(net.feature_dim) +
                      " != output channels " +
                      std::to_string(net.nodes[net.output_id].out_channels));
    return out;
}

inline bool is_valid(const NetGraph& net) { return validate(net).empty(); }

}  // namespace rwnas
