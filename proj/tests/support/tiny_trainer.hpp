#pragma once

// ground-truth trainer used by the test suite: trains the backbone and a
// linear head jointly with sgd + momentum and reports final validation
// accuracy.  every node op gets a hand-written backward pass that mirrors
// the library forward semantics (batch statistics in batch norm, first-max
// tie routing in max pool, in-bounds tap counting in avg pool).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "rwnas/dataio.hpp"
#include "rwnas/forward.hpp"
#include "rwnas/netgraph.hpp"
#include "rwnas/rng.hpp"
#include "rwnas/tensor.hpp"

namespace tinytrain {

using rwnas::ChannelStats;
using rwnas::ImageDataset;
using rwnas::LayerNode;
using rwnas::NetGraph;
using rwnas::NodeOp;
using rwnas::Rng;
using rwnas::Tensor;
using rwnas::WeightSet;

struct TrainConfig {
    int epochs = 12;
    int batch = 64;
    float lr = 0.05f;
    float momentum = 0.9f;
    std::uint64_t seed = 0;
};

struct TrainResult {
    double valid_accuracy = 0.0;
    std::vector<double> epoch_loss;
};

namespace detail {

// scatter-add inverse of the library's im2col gather
inline void col2im_add(const float* col, int c_block, int hin, int win, int k, int stride,
                       int pad, int dil, int hout, int wout, float* dst) {
    for (int ci = 0; ci < c_block; ++ci)
        for (int kh = 0; kh < k; ++kh)
            for (int kw = 0; kw < k; ++kw) {
                const float* row = col + ((static_cast<std::size_t>(ci) * k + kh) * k + kw) *
                                             (static_cast<std::size_t>(hout) * wout);
                for (int ho = 0; ho < hout; ++ho) {
                    const int ih = ho * stride - pad + kh * dil;
                    if (ih < 0 || ih >= hin) continue;
                    for (int wo = 0; wo < wout; ++wo) {
                        const int iw = wo * stride - pad + kw * dil;
                        if (iw < 0 || iw >= win) continue;
                        dst[(static_cast<std::size_t>(ci) * hin + ih) * win + iw] +=
                            row[static_cast<std::size_t>(ho) * wout + wo];
                    }
                }
            }
}

struct ConvShape {
    int in_channels, out_channels, kernel, stride, padding, dilation, groups, out_h, out_w;
};

inline ConvShape conv_shape(const LayerNode& n) {
    return {n.in_channels, n.out_channels, n.kernel, n.stride,
            n.padding,     n.dilation,     n.groups, n.out_h,  n.out_w};
}

// dX (accumulated) and dW (accumulated) for y = conv2d(x, w)
inline void conv_backward(const Tensor& x, const std::vector<float>& weight, const ConvShape& n,
                          const Tensor& dy, Tensor& dx, std::vector<float>& dw) {
    const int cin_g = n.in_channels / n.groups;
    const int cout_g = n.out_channels / n.groups;
    const std::size_t col_rows = static_cast<std::size_t>(cin_g) * n.kernel * n.kernel;
    const std::size_t col_cols = static_cast<std::size_t>(n.out_h) * n.out_w;
    std::vector<float> col(col_rows * col_cols);
    std::vector<float> dcol(col_rows * col_cols);
    for (int ni = 0; ni < x.n; ++ni) {
        for (int g = 0; g < n.groups; ++g) {
            rwnas::detail::im2col(x.plane(ni, g * cin_g), cin_g, x.h, x.w, n.kernel, n.stride,
                                  n.padding, n.dilation, n.out_h, n.out_w, col.data());
            Eigen::Map<const rwnas::detail::RowMat> wm(
                weight.data() + static_cast<std::size_t>(g) * cout_g * col_rows, cout_g,
                col_rows);
            Eigen::Map<rwnas::detail::RowMat> dwm(
                dw.data() + static_cast<std::size_t>(g) * cout_g * col_rows, cout_g, col_rows);
            Eigen::Map<const rwnas::detail::RowMat> dym(dy.plane(ni, g * cout_g), cout_g,
                                                        col_cols);
            Eigen::Map<const rwnas::detail::RowMat> cm(col.data(), col_rows, col_cols);
            Eigen::Map<rwnas::detail::RowMat> dcm(dcol.data(), col_rows, col_cols);
            dwm.noalias() += dym * cm.transpose();
            dcm.noalias() = wm.transpose() * dym;
            col2im_add(dcol.data(), cin_g, x.h, x.w, n.kernel, n.stride, n.padding, n.dilation,
                       n.out_h, n.out_w, dx.plane(ni, g * cin_g));
        }
    }
}

// batch-statistics backward; recomputes the moments from the stored input
inline void bn_backward(const Tensor& x, const std::vector<float>& scale, const Tensor& dy,
                        Tensor& dx, std::vector<float>& dscale, std::vector<float>& dshift,
                        float eps = 1e-5f) {
    const std::size_t plane = x.plane_size();
    const double count = static_cast<double>(x.n) * plane;
    for (int ci = 0; ci < x.c; ++ci) {
        double sum = 0.0, sum_sq = 0.0;
        for (int ni = 0; ni < x.n; ++ni) {
            const float* p = x.plane(ni, ci);
            for (std::size_t i = 0; i < plane; ++i) {
                const double v = p[i];
                sum += v;
                sum_sq += v * v;
            }
        }
        const double mean = sum / count;
        const double var = std::max(0.0, sum_sq / count - mean * mean);
        const double inv_std = 1.0 / std::sqrt(var + eps);

        double dy_sum = 0.0, dyx_sum = 0.0;  // sums of dy and dy * xhat
        for (int ni = 0; ni < x.n; ++ni) {
            const float* p = x.plane(ni, ci);
            const float* q = dy.plane(ni, ci);
            for (std::size_t i = 0; i < plane; ++i) {
                dy_sum += q[i];
                dyx_sum += q[i] * (p[i] - mean) * inv_std;
            }
        }
        dscale[ci] += static_cast<float>(dyx_sum);
        dshift[ci] += static_cast<float>(dy_sum);

        const double k = scale[ci] * inv_std;
        for (int ni = 0; ni < x.n; ++ni) {
            const float* p = x.plane(ni, ci);
            const float* q = dy.plane(ni, ci);
            float* r = dx.plane(ni, ci);
            for (std::size_t i = 0; i < plane; ++i) {
                const double xh = (p[i] - mean) * inv_std;
                r[i] += static_cast<float>(k * (q[i] - dy_sum / count - xh * dyx_sum / count));
            }
        }
    }
}

// strided 2x gather used twice by factorized reduce (shift 0 or 1)
inline Tensor subsample2(const Tensor& a, int shift) {
    Tensor g(a.n, a.c, a.h / 2, a.w / 2);
    for (int ni = 0; ni < a.n; ++ni)
        for (int ci = 0; ci < a.c; ++ci) {
            const float* p = a.plane(ni, ci);
            float* q = g.plane(ni, ci);
            for (int ho = 0; ho < g.h; ++ho)
                for (int wo = 0; wo < g.w; ++wo)
                    q[ho * g.w + wo] = p[(2 * ho + shift) * a.w + 2 * wo + shift];
        }
    return g;
}

inline void subsample2_backward(const Tensor& dg, int shift, Tensor& da) {
    for (int ni = 0; ni < dg.n; ++ni)
        for (int ci = 0; ci < dg.c; ++ci) {
            const float* q = dg.plane(ni, ci);
            float* p = da.plane(ni, ci);
            for (int ho = 0; ho < dg.h; ++ho)
                for (int wo = 0; wo < dg.w; ++wo)
                    p[(2 * ho + shift) * da.w + 2 * wo + shift] += q[ho * dg.w + wo];
        }
}

inline void ensure_grad(Tensor& g, const Tensor& like) {
    if (g.data.empty()) g = Tensor(like.n, like.c, like.h, like.w);
}

}  // namespace detail

// trains one decoded graph end to end; all randomness flows from cfg.seed
class Trainer {
public:
    Trainer(const NetGraph& net, int classes, std::uint64_t seed)
        : net_(net),
          classes_(classes),
          ws_(rwnas::init_weights(net, rwnas::derive_seed(seed, rwnas::fnv1a("backbone")))) {
        vel_.nodes.resize(ws_.nodes.size());
        for (std::size_t i = 0; i < ws_.nodes.size(); ++i) {
            vel_.nodes[i].conv1.assign(ws_.nodes[i].conv1.size(), 0.0f);
            vel_.nodes[i].conv2.assign(ws_.nodes[i].conv2.size(), 0.0f);
            vel_.nodes[i].bn_scale.assign(ws_.nodes[i].bn_scale.size(), 0.0f);
            vel_.nodes[i].bn_shift.assign(ws_.nodes[i].bn_shift.size(), 0.0f);
        }
        const int feat = net.feature_dim;
        Rng rng(rwnas::derive_seed(seed, rwnas::fnv1a("head")));
        const float bound = 1.0f / std::sqrt(static_cast<float>(feat));
        head_w_.resize(static_cast<std::size_t>(classes) * feat);
        for (float& v : head_w_) v = rng.uniform(-bound, bound);
        head_b_.assign(classes, 0.0f);
        vel_w_.assign(head_w_.size(), 0.0f);
        vel_b_.assign(head_b_.size(), 0.0f);
    }

    WeightSet& weights() { return ws_; }
    std::vector<float>& head_weight() { return head_w_; }
    std::vector<float>& head_bias() { return head_b_; }

    // visits every trainable vector in a fixed order (gradient buffers from
    // loss_and_grad can be walked the same way)
    template <class F>
    void for_each_param(F&& f) {
        for (rwnas::NodeWeights& nw : ws_.nodes) {
            f(nw.conv1);
            f(nw.conv2);
            f(nw.bn_scale);
            f(nw.bn_shift);
        }
        f(head_w_);
        f(head_b_);
    }

    // forward keeping every activation plus the factorized-reduce internals
    struct Tape {
        std::vector<Tensor> out;
        std::vector<Tensor> fr_gather0, fr_gather1, fr_prebn;  // indexed by node id
    };

    void forward_tape(const Tensor& x, Tape& t) const {
        const int count = static_cast<int>(net_.nodes.size());
        t.out.assign(count, Tensor{});
        t.fr_gather0.assign(count, Tensor{});
        t.fr_gather1.assign(count, Tensor{});
        t.fr_prebn.assign(count, Tensor{});
        for (int id = 0; id < count; ++id) {
            const LayerNode& n = net_.nodes[id];
            const rwnas::NodeWeights& w = ws_.nodes[id];
            auto in = [&](int slot) -> const Tensor& { return t.out[n.inputs[slot]]; };
            switch (n.op) {
                case NodeOp::kInput: t.out[id] = x; break;
                case NodeOp::kConv:
                    t.out[id] = rwnas::conv2d(in(0), w.conv1, n.out_channels, n.kernel, n.stride,
                                              n.padding, n.dilation, n.groups);
                    break;
                case NodeOp::kBatchNorm:
                    t.out[id] = rwnas::batch_norm(in(0), w.bn_scale, w.bn_shift);
                    break;
                case NodeOp::kRelu: t.out[id] = rwnas::relu(in(0)); break;
                case NodeOp::kMaxPool3: t.out[id] = rwnas::max_pool3(in(0), n.stride); break;
                case NodeOp::kAvgPool3: t.out[id] = rwnas::avg_pool3(in(0), n.stride); break;
                case NodeOp::kFactorizedReduce: {
                    const Tensor a = rwnas::relu(in(0));
                    t.fr_gather0[id] = detail::subsample2(a, 0);
                    t.fr_gather1[id] = detail::subsample2(a, 1);
                    const int half = n.out_channels / 2;
                    const Tensor b0 =
                        rwnas::conv2d(t.fr_gather0[id], w.conv1, half, 1, 1, 0, 1, 1);
                    const Tensor b1 =
                        rwnas::conv2d(t.fr_gather1[id], w.conv2, half, 1, 1, 0, 1, 1);
                    t.fr_prebn[id] = rwnas::concat_channels({&b0, &b1});
                    t.out[id] = rwnas::batch_norm(t.fr_prebn[id], w.bn_scale, w.bn_shift);
                    break;
                }
                case NodeOp::kConcat:
                case NodeOp::kAdd: {
                    std::vector<const Tensor*> srcs;
                    for (int src : n.inputs) srcs.push_back(&t.out[src]);
                    t.out[id] =
                        n.op == NodeOp::kConcat ? rwnas::concat_channels(srcs) : rwnas::add(srcs);
                    break;
                }
                case NodeOp::kGlobalAvgPool: t.out[id] = rwnas::global_avg_pool(in(0)); break;
                case NodeOp::kZero: t.out[id] = rwnas::zero_strided(in(0), n.stride); break;
                case NodeOp::kIdentity: t.out[id] = in(0); break;
                case NodeOp::kLinear:
                    throw std::logic_error("tiny_trainer: unexpected linear node");
            }
        }
    }

    // cross-entropy loss over one batch plus gradients for every parameter
    double loss_and_grad(const Tensor& x, const std::vector<int>& labels, WeightSet& gs,
                         std::vector<float>& gw, std::vector<float>& gb) const {
        Tape t;
        forward_tape(x, t);
        const Tensor& feat = t.out[net_.output_id];
        const int bs = feat.n, f = feat.c;

        gs.nodes.assign(ws_.nodes.size(), {});
        for (std::size_t i = 0; i < ws_.nodes.size(); ++i) {
            gs.nodes[i].conv1.assign(ws_.nodes[i].conv1.size(), 0.0f);
            gs.nodes[i].conv2.assign(ws_.nodes[i].conv2.size(), 0.0f);
            gs.nodes[i].bn_scale.assign(ws_.nodes[i].bn_scale.size(), 0.0f);
            gs.nodes[i].bn_shift.assign(ws_.nodes[i].bn_shift.size(), 0.0f);
        }
        gw.assign(head_w_.size(), 0.0f);
        gb.assign(head_b_.size(), 0.0f);

        // head forward, softmax cross-entropy, head backward
        Tensor dfeat(bs, f, 1, 1);
        double loss = 0.0;
        std::vector<double> probs(classes_);
        for (int i = 0; i < bs; ++i) {
            const float* fi = feat.plane(i, 0);
            double zmax = -1e300;
            for (int c = 0; c < classes_; ++c) {
                double z = head_b_[c];
                const float* wr = head_w_.data() + static_cast<std::size_t>(c) * f;
                for (int j = 0; j < f; ++j) z += double(wr[j]) * fi[j];
                probs[c] = z;
                zmax = std::max(zmax, z);
            }
            double norm = 0.0;
            for (int c = 0; c < classes_; ++c) {
                probs[c] = std::exp(probs[c] - zmax);
                norm += probs[c];
            }
            for (int c = 0; c < classes_; ++c) probs[c] /= norm;
            loss -= std::log(std::max(probs[labels[i]], 1e-30));
            float* di = dfeat.plane(i, 0);
            for (int c = 0; c < classes_; ++c) {
                const double dz = (probs[c] - (c == labels[i] ? 1.0 : 0.0)) / bs;
                gb[c] += static_cast<float>(dz);
                const float* wr = head_w_.data() + static_cast<std::size_t>(c) * f;
                float* gr = gw.data() + static_cast<std::size_t>(c) * f;
                for (int j = 0; j < f; ++j) {
                    gr[j] += static_cast<float>(dz * fi[j]);
                    di[j] += static_cast<float>(dz * wr[j]);
                }
            }
        }
        loss /= bs;

        // backbone backward in reverse topological order
        std::vector<Tensor> grad(net_.nodes.size());
        grad[net_.output_id] = std::move(dfeat);
        for (int id = static_cast<int>(net_.nodes.size()) - 1; id >= 0; --id) {
            if (grad[id].data.empty()) continue;
            const LayerNode& n = net_.nodes[id];
            const rwnas::NodeWeights& w = ws_.nodes[id];
            rwnas::NodeWeights& g = gs.nodes[id];
            const Tensor& dy = grad[id];
            switch (n.op) {
                case NodeOp::kInput: break;
                case NodeOp::kConv: {
                    const Tensor& xin = t.out[n.inputs[0]];
                    detail::ensure_grad(grad[n.inputs[0]], xin);
                    detail::conv_backward(xin, w.conv1, detail::conv_shape(n), dy,
                                          grad[n.inputs[0]], g.conv1);
                    break;
                }
                case NodeOp::kBatchNorm: {
                    const Tensor& xin = t.out[n.inputs[0]];
                    detail::ensure_grad(grad[n.inputs[0]], xin);
                    detail::bn_backward(xin, w.bn_scale, dy, grad[n.inputs[0]], g.bn_scale,
                                        g.bn_shift);
                    break;
                }
                case NodeOp::kRelu: {
                    const Tensor& xin = t.out[n.inputs[0]];
                    detail::ensure_grad(grad[n.inputs[0]], xin);
                    for (std::size_t i = 0; i < xin.size(); ++i)
                        if (xin.data[i] > 0.0f) grad[n.inputs[0]].data[i] += dy.data[i];
                    break;
                }
                case NodeOp::kMaxPool3: {
                    const Tensor& xin = t.out[n.inputs[0]];
                    detail::ensure_grad(grad[n.inputs[0]], xin);
                    max_pool3_backward(xin, dy, n.stride, grad[n.inputs[0]]);
                    break;
                }
                case NodeOp::kAvgPool3: {
                    const Tensor& xin = t.out[n.inputs[0]];
                    detail::ensure_grad(grad[n.inputs[0]], xin);
                    avg_pool3_backward(xin, dy, n.stride, grad[n.inputs[0]]);
                    break;
                }
                case NodeOp::kFactorizedReduce: {
                    const Tensor& xin = t.out[n.inputs[0]];
                    detail::ensure_grad(grad[n.inputs[0]], xin);
                    Tensor dpre(dy.n, dy.c, dy.h, dy.w);
                    detail::bn_backward(t.fr_prebn[id], w.bn_scale, dy, dpre, g.bn_scale,
                                        g.bn_shift);
                    const int half = n.out_channels / 2;
                    Tensor db0(dy.n, half, dy.h, dy.w), db1(dy.n, half, dy.h, dy.w);
                    for (int ni = 0; ni < dy.n; ++ni)
                        for (int ci = 0; ci < half; ++ci) {
                            std::copy(dpre.plane(ni, ci), dpre.plane(ni, ci) + dpre.plane_size(),
                                      db0.plane(ni, ci));
                            std::copy(dpre.plane(ni, half + ci),
                                      dpre.plane(ni, half + ci) + dpre.plane_size(),
                                      db1.plane(ni, ci));
                        }
                    const detail::ConvShape pw{n.in_channels, half, 1, 1, 0, 1, 1, dy.h, dy.w};
                    Tensor dg0(dy.n, n.in_channels, dy.h, dy.w);
                    Tensor dg1(dy.n, n.in_channels, dy.h, dy.w);
                    detail::conv_backward(t.fr_gather0[id], w.conv1, pw, db0, dg0, g.conv1);
                    detail::conv_backward(t.fr_gather1[id], w.conv2, pw, db1, dg1, g.conv2);
                    Tensor da(xin.n, xin.c, xin.h, xin.w);
                    detail::subsample2_backward(dg0, 0, da);
                    detail::subsample2_backward(dg1, 1, da);
                    for (std::size_t i = 0; i < xin.size(); ++i)
                        if (xin.data[i] > 0.0f) grad[n.inputs[0]].data[i] += da.data[i];
                    break;
                }
                case NodeOp::kConcat: {
                    int co = 0;
                    for (int src : n.inputs) {
                        const Tensor& xin = t.out[src];
                        detail::ensure_grad(grad[src], xin);
                        for (int ni = 0; ni < dy.n; ++ni)
                            for (int ci = 0; ci < xin.c; ++ci) {
                                const float* p = dy.plane(ni, co + ci);
                                float* q = grad[src].plane(ni, ci);
                                for (std::size_t i = 0; i < xin.plane_size(); ++i) q[i] += p[i];
                            }
                        co += xin.c;
                    }
                    break;
                }
                case NodeOp::kAdd:
                    for (int src : n.inputs) {
                        detail::ensure_grad(grad[src], t.out[src]);
                        for (std::size_t i = 0; i < dy.size(); ++i)
                            grad[src].data[i] += dy.data[i];
                    }
                    break;
                case NodeOp::kGlobalAvgPool: {
                    const Tensor& xin = t.out[n.inputs[0]];
                    detail::ensure_grad(grad[n.inputs[0]], xin);
                    const float inv = 1.0f / static_cast<float>(xin.plane_size());
                    for (int ni = 0; ni < xin.n; ++ni)
                        for (int ci = 0; ci < xin.c; ++ci) {
                            const float d = dy.at(ni, ci, 0, 0) * inv;
                            float* q = grad[n.inputs[0]].plane(ni, ci);
                            for (std::size_t i = 0; i < xin.plane_size(); ++i) q[i] += d;
                        }
                    break;
                }
                case NodeOp::kZero: break;
                case NodeOp::kIdentity: {
                    detail::ensure_grad(grad[n.inputs[0]], t.out[n.inputs[0]]);
                    for (std::size_t i = 0; i < dy.size(); ++i)
                        grad[n.inputs[0]].data[i] += dy.data[i];
                    break;
                }
                case NodeOp::kLinear: break;
            }
            grad[id] = Tensor{};  // finished with this node's gradient
        }
        return loss;
    }

    void sgd_step(const WeightSet& gs, const std::vector<float>& gw, const std::vector<float>& gb,
                  float lr, float momentum) {
        auto upd = [&](std::vector<float>& w, const std::vector<float>& g,
                       std::vector<float>& v) {
            for (std::size_t i = 0; i < w.size(); ++i) {
                v[i] = momentum * v[i] + g[i];
                w[i] -= lr * v[i];
            }
        };
        for (std::size_t i = 0; i < ws_.nodes.size(); ++i) {
            upd(ws_.nodes[i].conv1, gs.nodes[i].conv1, vel_.nodes[i].conv1);
            upd(ws_.nodes[i].conv2, gs.nodes[i].conv2, vel_.nodes[i].conv2);
            upd(ws_.nodes[i].bn_scale, gs.nodes[i].bn_scale, vel_.nodes[i].bn_scale);
            upd(ws_.nodes[i].bn_shift, gs.nodes[i].bn_shift, vel_.nodes[i].bn_shift);
        }
        upd(head_w_, gw, vel_w_);
        upd(head_b_, gb, vel_b_);
    }

    // argmax of the head logits, first maximum on ties
    std::vector<int> predict(const Tensor& x) const {
        Tape t;
        forward_tape(x, t);
        const Tensor& feat = t.out[net_.output_id];
        std::vector<int> pred(feat.n);
        for (int i = 0; i < feat.n; ++i) {
            const float* fi = feat.plane(i, 0);
            double best = -1e300;
            int arg = 0;
            for (int c = 0; c < classes_; ++c) {
                double z = head_b_[c];
                const float* wr = head_w_.data() + static_cast<std::size_t>(c) * feat.c;
                for (int j = 0; j < feat.c; ++j) z += double(wr[j]) * fi[j];
                if (z > best) {
                    best = z;
                    arg = c;
                }
            }
            pred[i] = arg;
        }
        return pred;
    }

private:
    static void max_pool3_backward(const Tensor& x, const Tensor& dy, int stride, Tensor& dx) {
        for (int ni = 0; ni < x.n; ++ni)
            for (int ci = 0; ci < x.c; ++ci) {
                const float* in = x.plane(ni, ci);
                const float* d = dy.plane(ni, ci);
                float* out = dx.plane(ni, ci);
                for (int ho = 0; ho < dy.h; ++ho)
                    for (int wo = 0; wo < dy.w; ++wo) {
                        float best = -std::numeric_limits<float>::infinity();
                        int bh = -1, bw = -1;
                        for (int kh = 0; kh < 3; ++kh) {
                            const int ih = ho * stride - 1 + kh;
                            if (ih < 0 || ih >= x.h) continue;
                            for (int kw = 0; kw < 3; ++kw) {
                                const int iw = wo * stride - 1 + kw;
                                if (iw < 0 || iw >= x.w) continue;
                                const float v = in[ih * x.w + iw];
                                if (v > best) {  // first maximum wins, like the forward scan
                                    best = v;
                                    bh = ih;
                                    bw = iw;
                                }
                            }
                        }
                        if (bh >= 0) out[bh * x.w + bw] += d[ho * dy.w + wo];
                    }
            }
    }

    static void avg_pool3_backward(const Tensor& x, const Tensor& dy, int stride, Tensor& dx) {
        for (int ni = 0; ni < x.n; ++ni)
            for (int ci = 0; ci < x.c; ++ci) {
                const float* d = dy.plane(ni, ci);
                float* out = dx.plane(ni, ci);
                for (int ho = 0; ho < dy.h; ++ho)
                    for (int wo = 0; wo < dy.w; ++wo) {
                        int taps = 0;
                        for (int kh = 0; kh < 3; ++kh) {
                            const int ih = ho * stride - 1 + kh;
                            if (ih < 0 || ih >= x.h) continue;
                            for (int kw = 0; kw < 3; ++kw) {
                                const int iw = wo * stride - 1 + kw;
                                if (iw < 0 || iw >= x.w) continue;
                                ++taps;
                            }
                        }
                        const float share = d[ho * dy.w + wo] / static_cast<float>(taps);
                        for (int kh = 0; kh < 3; ++kh) {
                            const int ih = ho * stride - 1 + kh;
                            if (ih < 0 || ih >= x.h) continue;
                            for (int kw = 0; kw < 3; ++kw) {
                                const int iw = wo * stride - 1 + kw;
                                if (iw < 0 || iw >= x.w) continue;
                                out[ih * x.w + iw] += share;
                            }
                        }
                    }
            }
    }

    const NetGraph& net_;
    int classes_;
    WeightSet ws_;
    WeightSet vel_;
    std::vector<float> head_w_, head_b_, vel_w_, vel_b_;
};

// full training run: cosine-decayed sgd over the train split, accuracy on
// the validation split evaluated as one batch (batch statistics over it)
inline TrainResult train_full(const NetGraph& net, const ImageDataset& ds,
                              const TrainConfig& cfg) {
    if (ds.train_idx.empty() || ds.valid_idx.empty())
        throw std::runtime_error("tiny_trainer: dataset has no split");
    const ChannelStats stats = rwnas::channel_stats(ds);
    Trainer trainer(net, ds.classes, cfg.seed);
    Rng rng(rwnas::derive_seed(cfg.seed, rwnas::fnv1a("order")));

    TrainResult res;
    std::vector<int> order = ds.train_idx;
    WeightSet gs;
    std::vector<float> gw, gb;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const float lr = 0.5f * cfg.lr *
                         (1.0f + std::cos(3.14159265358979323846f * epoch / cfg.epochs));
        rng.shuffle(order);
        double epoch_loss = 0.0;
        int batches = 0;
        for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch) {
            const std::size_t count = std::min<std::size_t>(cfg.batch, order.size() - begin);
            if (count < 2) break;  // batch norm needs more than one row
            const Tensor x = rwnas::make_batch(ds, order, begin, count, stats);
            std::vector<int> labels(count);
            for (std::size_t i = 0; i < count; ++i)
                labels[i] = ds.labels[order[begin + i]];
            epoch_loss += trainer.loss_and_grad(x, labels, gs, gw, gb);
            trainer.sgd_step(gs, gw, gb, lr, cfg.momentum);
            ++batches;
        }
        res.epoch_loss.push_back(batches ? epoch_loss / batches : 0.0);
    }

    const Tensor vx = rwnas::make_batch(ds, ds.valid_idx, 0, ds.valid_idx.size(), stats);
    const std::vector<int> pred = trainer.predict(vx);
    int hits = 0;
    for (std::size_t i = 0; i < ds.valid_idx.size(); ++i)
        if (pred[i] == ds.labels[ds.valid_idx[i]]) ++hits;
    res.valid_accuracy = static_cast<double>(hits) / ds.valid_idx.size();
    return res;
}

}  // namespace tinytrain
