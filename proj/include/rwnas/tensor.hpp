#pragma once

// forward-only inference kernels on dense NCHW float tensors.  conv layers
// go through im2col + GEMM; depthwise convolutions take a direct path with
// an explicit interior/border split.  all kernels are pure.

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace rwnas {

class TensorError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

struct Tensor {
    int n = 0, c = 0, h = 0, w = 0;
    std::vector<float> data;

    Tensor() = default;
    Tensor(int n_, int c_, int h_, int w_)
        : n(n_), c(c_), h(h_), w(w_),
          data(static_cast<std::size_t>(n_) * c_ * h_ * w_, 0.0f) {}

    std::size_t size() const { return data.size(); }
    std::size_t plane_size() const { return static_cast<std::size_t>(h) * w; }

    float* plane(int ni, int ci) {
        return data.data() + (static_cast<std::size_t>(ni) * c + ci) * plane_size();
    }
    const float* plane(int ni, int ci) const {
        return data.data() + (static_cast<std::size_t>(ni) * c + ci) * plane_size();
    }

    float& at(int ni, int ci, int hi, int wi) { return plane(ni, ci)[hi * w + wi]; }
    float at(int ni, int ci, int hi, int wi) const { return plane(ni, ci)[hi * w + wi]; }

    bool all_finite() const {
        for (float v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }
};

namespace detail {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline void require(bool ok, const std::string& what) {
    if (!ok) throw TensorError(what);
}

// gathers one sample's channel block into a [c_block*k*k, hout*wout] matrix
inline void im2col(const float* src, int c_block, int hin, int win, int k, int stride, int pad,
                   int dil, int hout, int wout, float* col) {
    const std::size_t plane = static_cast<std::size_t>(hin) * win;
    for (int ci = 0; ci < c_block; ++ci) {
        for (int kh = 0; kh < k; ++kh) {
            for (int kw = 0; kw < k; ++kw) {
                float* row = col + ((static_cast<std::size_t>(ci) * k + kh) * k + kw) *
                                       (static_cast<std::size_t>(hout) * wout);
                for (int ho = 0; ho < hout; ++ho) {
                    const int ih = ho * stride - pad + kh * dil;
                    float* out_row = row + static_cast<std::size_t>(ho) * wout;
                    if (ih < 0 || ih >= hin) {
                        std::fill(out_row, out_row + wout, 0.0f);
                        continue;
                    }
                    const float* in_row = src + ci * plane + static_cast<std::size_t>(ih) * win;
                    const int off = -pad + kw * dil;
                    int wo = 0;
                    for (; wo < wout && wo * stride + off < 0; ++wo) out_row[wo] = 0.0f;
                    const int hi = std::min(wout, off <= win - 1
                                                      ? (win - 1 - off) / stride + 1
                                                      : 0);
                    if (stride == 1) {
                        const float* base = in_row + off;
                        for (; wo < hi; ++wo) out_row[wo] = base[wo];
                    } else {
                        for (; wo < hi; ++wo) out_row[wo] = in_row[wo * stride + off];
                    }
                    for (; wo < wout; ++wo) out_row[wo] = 0.0f;
                }
            }
        }
    }
}

// one depthwise output plane; kernel-tap loops hoisted so the inner loop is a
// contiguous (or strided) multiply-add over valid columns only
inline void dw_plane(const float* in, int hin, int win, const float* wgt, int k, int stride,
                     int pad, int dil, int hout, int wout, float* out) {
    std::fill(out, out + static_cast<std::size_t>(hout) * wout, 0.0f);
    for (int ho = 0; ho < hout; ++ho) {
        float* orow = out + static_cast<std::size_t>(ho) * wout;
        for (int kh = 0; kh < k; ++kh) {
            const int ih = ho * stride - pad + kh * dil;
            if (ih < 0 || ih >= hin) continue;
            const float* irow = in + static_cast<std::size_t>(ih) * win;
            for (int kw = 0; kw < k; ++kw) {
                const float wv = wgt[kh * k + kw];
                const int off = -pad + kw * dil;
                int lo = 0;
                while (lo < wout && lo * stride + off < 0) ++lo;
                const int hi =
                    std::min(wout, off <= win - 1 ? (win - 1 - off) / stride + 1 : 0);
                if (stride == 1) {
                    const float* base = irow + off;
                    for (int wo = lo; wo < hi; ++wo) orow[wo] += wv * base[wo];
                } else {
                    for (int wo = lo; wo < hi; ++wo) orow[wo] += wv * irow[wo * stride + off];
                }
            }
        }
    }
}

}  // namespace detail

// weight layout: [c_out, c_in/groups, k, k] row-major, no bias
inline Tensor conv2d(const Tensor& x, const std::vector<float>& weight, int c_out, int kernel,
                     int stride, int padding, int dilation, int groups) {
    detail::require(groups >= 1 && x.c % groups == 0 && c_out % groups == 0,
                    "conv2d: groups do not divide channels");
    const int cin_g = x.c / groups;
    const int cout_g = c_out / groups;
    detail::require(weight.size() == static_cast<std::size_t>(c_out) * cin_g * kernel * kernel,
                    "conv2d: weight size mismatch");
    const int hout = (x.h + 2 * padding - dilation * (kernel - 1) - 1) / stride + 1;
    const int wout = (x.w + 2 * padding - dilation * (kernel - 1) - 1) / stride + 1;
    detail::require(hout > 0 && wout > 0, "conv2d: empty output");
    Tensor y(x.n, c_out, hout, wout);

    if (groups == x.c && c_out == x.c) {
        // depthwise fast path
        for (int ni = 0; ni < x.n; ++ni)
            for (int ci = 0; ci < x.c; ++ci)
                detail::dw_plane(x.plane(ni, ci), x.h, x.w, weight.data() + ci * kernel * kernel,
                                 kernel, stride, padding, dilation, hout, wout, y.plane(ni, ci));
        return y;
    }

    if (kernel == 1 && stride == 1 && padding == 0) {
        // pointwise fast path: the im2col matrix is the input itself
        const std::size_t plane = x.plane_size();
        for (int ni = 0; ni < x.n; ++ni) {
            for (int g = 0; g < groups; ++g) {
                Eigen::Map<const detail::RowMat> wm(
                    weight.data() + static_cast<std::size_t>(g) * cout_g * cin_g, cout_g, cin_g);
                Eigen::Map<const detail::RowMat> xm(x.plane(ni, g * cin_g), cin_g, plane);
                Eigen::Map<detail::RowMat> om(y.plane(ni, g * cout_g), cout_g, plane);
                om.noalias() = wm * xm;
            }
        }
        return y;
    }

    const std::size_t col_rows = static_cast<std::size_t>(cin_g) * kernel * kernel;
    const std::size_t col_cols = static_cast<std::size_t>(hout) * wout;
    std::vector<float> col(col_rows * col_cols);
    for (int ni = 0; ni < x.n; ++ni) {
        for (int g = 0; g < groups; ++g) {
            detail::im2col(x.plane(ni, g * cin_g), cin_g, x.h, x.w, kernel, stride, padding,
                           dilation, hout, wout, col.data());
            Eigen::Map<const detail::RowMat> wm(weight.data() + static_cast<std::size_t>(g) *
                                                                    cout_g * col_rows,
                                                cout_g, col_rows);
            Eigen::Map<const detail::RowMat> cm(col.data(), col_rows, col_cols);
            Eigen::Map<detail::RowMat> om(y.plane(ni, g * cout_g), cout_g, col_cols);
            om.noalias() = wm * cm;
        }
    }
    return y;
}

inline void relu_inplace(Tensor& x) {
    for (float& v : x.data) v = v < 0.0f ? 0.0f : v;
}

inline Tensor relu(const Tensor& x) {
    Tensor y = x;
    relu_inplace(y);
    return y;
}

// 3x3 max pool, padding 1; padded positions never participate
inline Tensor max_pool3(const Tensor& x, int stride) {
    const int hout = (x.h + 2 - 2 - 1) / stride + 1;
    const int wout = (x.w + 2 - 2 - 1) / stride + 1;
    Tensor y(x.n, x.c, hout, wout);
    for (int ni = 0; ni < x.n; ++ni) {
        for (int ci = 0; ci < x.c; ++ci) {
            const float* in = x.plane(ni, ci);
            float* out = y.plane(ni, ci);
            for (int ho = 0; ho < hout; ++ho) {
                for (int wo = 0; wo < wout; ++wo) {
                    float best = -std::numeric_limits<float>::infinity();
                    for (int kh = 0; kh < 3; ++kh) {
                        const int ih = ho * stride - 1 + kh;
                        if (ih < 0 || ih >= x.h) continue;
                        for (int kw = 0; kw < 3; ++kw) {
                            const int iw = wo * stride - 1 + kw;
                            if (iw < 0 || iw >= x.w) continue;
                            best = std::max(best, in[ih * x.w + iw]);
                        }
                    }
                    out[ho * wout + wo] = best;
                }
            }
        }
    }
    return y;
}

// 3x3 average pool, padding 1; divisor counts only the in-bounds taps
inline Tensor avg_pool3(const Tensor& x, int stride) {
    const int hout = (x.h + 2 - 2 - 1) / stride + 1;
    const int wout = (x.w + 2 - 2 - 1) / stride + 1;
    Tensor y(x.n, x.c, hout, wout);
    for (int ni = 0; ni < x.n; ++ni) {
        for (int ci = 0; ci < x.c; ++ci) {
            const float* in = x.plane(ni, ci);
            float* out = y.plane(ni, ci);
            for (int ho = 0; ho < hout; ++ho) {
                for (int wo = 0; wo < wout; ++wo) {
                    float sum = 0.0f;
                    int taps = 0;
                    for (int kh = 0; kh < 3; ++kh) {
                        const int ih = ho * stride - 1 + kh;
                        if (ih < 0 || ih >= x.h) continue;
                        for (int kw = 0; kw < 3; ++kw) {
                            const int iw = wo * stride - 1 + kw;
                            if (iw < 0 || iw >= x.w) continue;
                            sum += in[ih * x.w + iw];
                            ++taps;
                        }
                    }
                    out[ho * wout + wo] = sum / static_cast<float>(taps);
                }
            }
        }
    }
    return y;
}

// per-channel statistics over the current batch (N, H, W), then affine;
// one read pass for the moments, one read+write pass to normalize
inline void batch_norm_inplace(Tensor& x, const std::vector<float>& scale,
                               const std::vector<float>& shift, float eps = 1e-5f) {
    detail::require(scale.size() == static_cast<std::size_t>(x.c) && shift.size() == scale.size(),
                    "batch_norm: affine size mismatch");
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
        const float a = static_cast<float>(scale[ci] * inv_std);
        const float b = static_cast<float>(shift[ci] - scale[ci] * mean * inv_std);
        for (int ni = 0; ni < x.n; ++ni) {
            float* p = x.plane(ni, ci);
            for (std::size_t i = 0; i < plane; ++i) p[i] = a * p[i] + b;
        }
    }
}

inline Tensor batch_norm(const Tensor& x, const std::vector<float>& scale,
                         const std::vector<float>& shift, float eps = 1e-5f) {
    Tensor y = x;
    batch_norm_inplace(y, scale, shift, eps);
    return y;
}

// relu, then two 1x1 stride-2 convs (the second on the input shifted by one
// pixel), channel-concatenated and batch-normalized; input dims must be even
inline Tensor factorized_reduce(const Tensor& x, const std::vector<float>& conv1,
                                const std::vector<float>& conv2, const std::vector<float>& scale,
                                const std::vector<float>& shift) {
    detail::require(x.h % 2 == 0 && x.w % 2 == 0, "factorized_reduce: odd input dims");
    const int half = static_cast<int>(scale.size()) / 2;
    detail::require(conv1.size() == static_cast<std::size_t>(half) * x.c &&
                        conv2.size() == conv1.size(),
                    "factorized_reduce: weight size mismatch");
    const Tensor a = relu(x);
    const int hout = x.h / 2, wout = x.w / 2;
    Tensor y(x.n, 2 * half, hout, wout);
    std::vector<float> gathered(static_cast<std::size_t>(x.c) * hout * wout);
    for (int ni = 0; ni < x.n; ++ni) {
        for (int branch = 0; branch < 2; ++branch) {
            const int shifted = branch;  // second branch reads x[:, :, 1:, 1:]
            for (int ci = 0; ci < x.c; ++ci) {
                const float* p = a.plane(ni, ci);
                float* g = gathered.data() + static_cast<std::size_t>(ci) * hout * wout;
                for (int ho = 0; ho < hout; ++ho)
                    for (int wo = 0; wo < wout; ++wo)
                        g[ho * wout + wo] = p[(2 * ho + shifted) * x.w + 2 * wo + shifted];
            }
            Eigen::Map<const detail::RowMat> wm(branch == 0 ? conv1.data() : conv2.data(), half,
                                                x.c);
            Eigen::Map<const detail::RowMat> gm(gathered.data(), x.c,
                                                static_cast<std::size_t>(hout) * wout);
            Eigen::Map<detail::RowMat> om(y.plane(ni, branch * half), half,
                                          static_cast<std::size_t>(hout) * wout);
            om.noalias() = wm * gm;
        }
    }
    batch_norm_inplace(y, scale, shift);
    return y;
}

inline Tensor concat_channels(const std::vector<const Tensor*>& xs) {
    detail::require(!xs.empty(), "concat: no inputs");
    int channels = 0;
    for (const Tensor* t : xs) {
        detail::require(t->n == xs[0]->n && t->h == xs[0]->h && t->w == xs[0]->w,
                        "concat: shape mismatch");
        channels += t->c;
    }
    Tensor y(xs[0]->n, channels, xs[0]->h, xs[0]->w);
    for (int ni = 0; ni < y.n; ++ni) {
        int co = 0;
        for (const Tensor* t : xs)
            for (int ci = 0; ci < t->c; ++ci, ++co)
                std::copy(t->plane(ni, ci), t->plane(ni, ci) + t->plane_size(),
                          y.plane(ni, co));
    }
    return y;
}

inline Tensor add(const std::vector<const Tensor*>& xs) {
    detail::require(!xs.empty(), "add: no inputs");
    Tensor y = *xs[0];
    for (std::size_t i = 1; i < xs.size(); ++i) {
        detail::require(xs[i]->size() == y.size() && xs[i]->c == y.c, "add: shape mismatch");
        const float* p = xs[i]->data.data();
        for (std::size_t j = 0; j < y.size(); ++j) y.data[j] += p[j];
    }
    return y;
}

// the zero op: all-zero output, spatially subsampled when strided
inline Tensor zero_strided(const Tensor& x, int stride) {
    return Tensor(x.n, x.c, (x.h + stride - 1) / stride, (x.w + stride - 1) / stride);
}

inline Tensor global_avg_pool(const Tensor& x) {
    Tensor y(x.n, x.c, 1, 1);
    const std::size_t plane = x.plane_size();
    for (int ni = 0; ni < x.n; ++ni) {
        for (int ci = 0; ci < x.c; ++ci) {
            const float* p = x.plane(ni, ci);
            double sum = 0.0;
            for (std::size_t i = 0; i < plane; ++i) sum += p[i];
            y.at(ni, ci, 0, 0) = static_cast<float>(sum / static_cast<double>(plane));
        }
    }
    return y;
}

// x must be (n, c, 1, 1); weight [out, c] row-major, bias [out]
inline Tensor linear(const Tensor& x, const std::vector<float>& weight,
                     const std::vector<float>& bias, int out_features) {
    detail::require(x.h == 1 && x.w == 1, "linear: input not 1x1");
    detail::require(weight.size() == static_cast<std::size_t>(out_features) * x.c &&
                        bias.size() == static_cast<std::size_t>(out_features),
                    "linear: weight size mismatch");
    Tensor y(x.n, out_features, 1, 1);
    Eigen::Map<const detail::RowMat> xm(x.data.data(), x.n, x.c);
    Eigen::Map<const detail::RowMat> wm(weight.data(), out_features, x.c);
    Eigen::Map<detail::RowMat> ym(y.data.data(), x.n, out_features);
    ym.noalias() = xm * wm.transpose();
    for (int ni = 0; ni < x.n; ++ni)
        for (int o = 0; o < out_features; ++o) y.at(ni, o, 0, 0) += bias[o];
    return y;
}

}  // namespace rwnas
