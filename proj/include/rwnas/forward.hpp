#pragma once

// random-weight initialization and the graph executor.  weights are created
// once from a seed, then treated as frozen: forward never mutates them.

#include <cstdint>
#include <string>
#include <vector>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "rwnas/netgraph.hpp"
#include "rwnas/rng.hpp"
#include "rwnas/tensor.hpp"

namespace rwnas {

struct NodeWeights {
    std::vector<float> conv1;     // conv kernel / linear weight / fr first branch
    std::vector<float> conv2;     // fr second branch
    std::vector<float> bn_scale;
    std::vector<float> bn_shift;
    std::vector<float> bias;      // linear only
};

struct WeightSet {
    std::uint64_t seed = 0;
    std::vector<NodeWeights> nodes;
};

namespace detail {

inline void fill_kaiming_uniform(std::vector<float>& dst, std::size_t count, int fan_in,
                                 Rng& rng) {
    const float bound = 1.0f / std::sqrt(static_cast<float>(fan_in));
    dst.resize(count);
    for (float& v : dst) v = rng.uniform(-bound, bound);
}

}  // namespace detail

// each node draws from its own derived stream, so weights depend only on
// (seed, node id) and regeneration is bit-identical
inline WeightSet init_weights(const NetGraph& net, std::uint64_t seed) {
    WeightSet ws;
    ws.seed = seed;
    ws.nodes.resize(net.nodes.size());
    for (std::size_t id = 0; id < net.nodes.size(); ++id) {
        const LayerNode& n = net.nodes[id];
        NodeWeights& w = ws.nodes[id];
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(id)));
        switch (n.op) {
            case NodeOp::kConv: {
                const int cin_g = n.in_channels / n.groups;
                const int fan_in = n.kernel * n.kernel * cin_g;
                detail::fill_kaiming_uniform(
                    w.conv1,
                    static_cast<std::size_t>(n.out_channels) * cin_g * n.kernel * n.kernel,
                    fan_in, rng);
                break;
            }
            case NodeOp::kBatchNorm:
                w.bn_scale.assign(n.out_channels, 1.0f);
                w.bn_shift.assign(n.out_channels, 0.0f);
                break;
            case NodeOp::kFactorizedReduce: {
                const std::size_t half =
                    static_cast<std::size_t>(n.out_channels / 2) * n.in_channels;
                detail::fill_kaiming_uniform(w.conv1, half, n.in_channels, rng);
                detail::fill_kaiming_uniform(w.conv2, half, n.in_channels, rng);
                w.bn_scale.assign(n.out_channels, 1.0f);
                w.bn_shift.assign(n.out_channels, 0.0f);
                break;
            }
            case NodeOp::kLinear:
                detail::fill_kaiming_uniform(
                    w.conv1, static_cast<std::size_t>(n.out_channels) * n.in_channels,
                    n.in_channels, rng);
                detail::fill_kaiming_uniform(w.bias, n.out_channels, n.in_channels, rng);
                break;
            default: break;
        }
    }
    return ws;
}

// stable digest over every parameter byte; used to assert the freeze invariant
inline std::uint64_t weight_fingerprint(const WeightSet& w) {
    std::uint64_t h = 1469598103934665603ull;
    auto mixin = [&h](const std::vector<float>& v) {
        if (!v.empty())
            h = h * 1099511628211ull ^ fnv1a(v.data(), v.size() * sizeof(float));
    };
    for (const NodeWeights& n : w.nodes) {
        mixin(n.conv1);
        mixin(n.conv2);
        mixin(n.bn_scale);
        mixin(n.bn_shift);
        mixin(n.bias);
    }
    return h;
}

struct ForwardOptions {
    bool check_each_node = false;  // scan every activation for NaN/Inf
};

namespace detail {

// batch-sized activations exceed glibc's default mmap threshold, so every
// node would otherwise mmap/munmap tens of MB; raise the thresholds once so
// freed buffers stay on the heap and get reused
inline void tune_allocator() {
#if defined(__GLIBC__)
    static const bool done = [] {
        mallopt(M_MMAP_THRESHOLD, 512 * 1024 * 1024);
        mallopt(M_TRIM_THRESHOLD, 512 * 1024 * 1024);
        return true;
    }();
    (void)done;
#endif
}

}  // namespace detail

// executes the graph in node-id order (decode emits nodes topologically);
// intermediate tensors are freed as soon as their last consumer has run.
inline Tensor forward(const NetGraph& net, const WeightSet& w, const Tensor& x,
                      const ForwardOptions& opt = {}) {
    const int count = static_cast<int>(net.nodes.size());
    detail::require(w.nodes.size() == net.nodes.size(), "forward: weight set mismatch");
    detail::tune_allocator();
    std::vector<int> refs(count, 0);
    for (const LayerNode& n : net.nodes)
        for (int src : n.inputs) ++refs[src];
    ++refs[net.output_id];

    std::vector<Tensor> out(count);
    for (int id = 0; id < count; ++id) {
        const LayerNode& n = net.nodes[id];
        const NodeWeights& nw = w.nodes[id];
        for (int src : n.inputs)
            detail::require(src < id, "forward: graph not in topological id order");
        auto in = [&](int slot) -> const Tensor& { return out[n.inputs[slot]]; };
        // steal the input buffer when this node is its last consumer
        auto take = [&](int slot) -> Tensor {
            const int src = n.inputs[slot];
            if (refs[src] == 1) return std::move(out[src]);
            return out[src];
        };

        switch (n.op) {
            case NodeOp::kInput:
                detail::require(x.c == n.out_channels && x.h == n.out_h && x.w == n.out_w,
                                "forward: input shape mismatch");
                out[id] = x;
                break;
            case NodeOp::kConv:
                out[id] = conv2d(in(0), nw.conv1, n.out_channels, n.kernel, n.stride, n.padding,
                                 n.dilation, n.groups);
                break;
            case NodeOp::kBatchNorm: {
                Tensor t = take(0);
                batch_norm_inplace(t, nw.bn_scale, nw.bn_shift);
                out[id] = std::move(t);
                break;
            }
            case NodeOp::kRelu: {
                Tensor t = take(0);
                relu_inplace(t);
                out[id] = std::move(t);
                break;
            }
            case NodeOp::kMaxPool3: out[id] = max_pool3(in(0), n.stride); break;
            case NodeOp::kAvgPool3: out[id] = avg_pool3(in(0), n.stride); break;
            case NodeOp::kFactorizedReduce:
                out[id] = factorized_reduce(in(0), nw.conv1, nw.conv2, nw.bn_scale, nw.bn_shift);
                break;
            case NodeOp::kConcat:
            case NodeOp::kAdd: {
                std::vector<const Tensor*> srcs;
                for (int src : n.inputs) srcs.push_back(&out[src]);
                out[id] = n.op == NodeOp::kConcat ? concat_channels(srcs) : add(srcs);
                break;
            }
            case NodeOp::kGlobalAvgPool: out[id] = global_avg_pool(in(0)); break;
            case NodeOp::kZero: out[id] = zero_strided(in(0), n.stride); break;
            case NodeOp::kIdentity: out[id] = take(0); break;
            case NodeOp::kLinear:
                out[id] = linear(in(0), nw.conv1, nw.bias, n.out_channels);
                break;
        }

        detail::require(out[id].c == n.out_channels && out[id].h == n.out_h &&
                            out[id].w == n.out_w,
                        "forward: node " + std::to_string(id) + " (" + n.tag +
                            ") produced unexpected shape");
        if (opt.check_each_node && !out[id].all_finite())
            throw TensorError("forward: non-finite activation at node " + std::to_string(id) +
                              " (" + n.tag + ")");
        for (int src : n.inputs)
            if (--refs[src] == 0) out[src] = Tensor{};
    }
    Tensor result = std::move(out[net.output_id]);
    if (!result.all_finite()) throw TensorError("forward: non-finite features");
    return result;
}

}  // namespace rwnas
