#pragma once

// dataset ingestion and synthesis: the cifar-10 binary reader, a synthetic
// blob generator for desk-scale experiments, deterministic 80/20 splits and
// train-only channel statistics.

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "rwnas/rng.hpp"
#include "rwnas/tensor.hpp"

namespace rwnas {

class DataError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

struct ImageDataset {
    int classes = 0;
    int h = 0, w = 0;              // channel count is always 3
    std::vector<float> images;     // n * 3 * h * w, values in [0, 1]
    std::vector<int> labels;
    std::vector<int> train_idx;
    std::vector<int> valid_idx;

    int count() const { return static_cast<int>(labels.size()); }
    std::size_t image_size() const { return static_cast<std::size_t>(3) * h * w; }
    const float* image(int i) const { return images.data() + image_size() * i; }
};

struct ChannelStats {
    std::array<float, 3> mean{};
    std::array<float, 3> stdev{};
};

inline constexpr int kCifarRecordBytes = 3073;      // 1 label byte + 3 * 1024 pixels
inline constexpr int kCifarRecordsPerBatch = 10000;
inline constexpr std::int64_t kCifarBatchBytes =
    static_cast<std::int64_t>(kCifarRecordBytes) * kCifarRecordsPerBatch;

// reads the five standard training batches (50k images) bit-exactly
inline ImageDataset load_cifar10_binary(const std::string& dir) {
    ImageDataset ds;
    ds.classes = 10;
    ds.h = ds.w = 32;
    ds.images.reserve(static_cast<std::size_t>(50000) * 3 * 1024);
    ds.labels.reserve(50000);
    std::vector<unsigned char> buf(kCifarBatchBytes);
    for (int b = 1; b <= 5; ++b) {
        const std::filesystem::path path =
            std::filesystem::path(dir) / ("data_batch_" + std::to_string(b) + ".bin");
        std::ifstream f(path, std::ios::binary | std::ios::ate);
        if (!f) throw DataError("missing batch file: " + path.string());
        const std::int64_t size = static_cast<std::int64_t>(f.tellg());
        if (size != kCifarBatchBytes)
            throw DataError("batch file " + path.string() + " truncated at byte offset " +
                            std::to_string(size) + " (expected " +
                            std::to_string(kCifarBatchBytes) + " = 10000 records x 3073)");
        f.seekg(0);
        f.read(reinterpret_cast<char*>(buf.data()), kCifarBatchBytes);
        if (!f) throw DataError("read failed: " + path.string());
        for (int r = 0; r < kCifarRecordsPerBatch; ++r) {
            const unsigned char* rec = buf.data() + static_cast<std::size_t>(r) * kCifarRecordBytes;
            if (rec[0] > 9)
                throw DataError("bad label " + std::to_string(rec[0]) + " in " + path.string() +
                                " record " + std::to_string(r));
            ds.labels.push_back(rec[0]);
            for (int i = 1; i < kCifarRecordBytes; ++i)
                ds.images.push_back(static_cast<float>(rec[i]) / 255.0f);
        }
    }
    return ds;
}

struct SynthConfig {
    int classes = 4;
    int count = 10000;
    int resolution = 32;
    float offset_amp = 0.22f;   // class-conditional per-channel mean shift
    float texture_amp = 0.10f;  // shared sinusoid texture
    float noise = 0.08f;        // gaussian pixel noise
};

// class-conditional blobs: each class shifts the three channel means along a
// distinct sign pattern, so the classes stay linearly separable in pixel
// space and the signal survives both global standardization and average
// pooling.  a random sinusoid plus noise gives convolutions texture to chew on.
inline ImageDataset synth_blobs(const SynthConfig& cfg, std::uint64_t seed) {
    ImageDataset ds;
    ds.classes = cfg.classes;
    ds.h = ds.w = cfg.resolution;
    ds.labels.resize(cfg.count);
    ds.images.resize(static_cast<std::size_t>(cfg.count) * ds.image_size());
    Rng rng(derive_seed(seed, fnv1a("synth_blobs")));
    const int res = cfg.resolution;
    for (int i = 0; i < cfg.count; ++i) {
        const int k = i % cfg.classes;
        ds.labels[i] = k;
        // sign pattern from the class index bits; class 0 gets all minus
        std::array<float, 3> offset{};
        for (int c = 0; c < 3; ++c)
            offset[c] = ((k >> c) & 1 ? 1.0f : -1.0f) * cfg.offset_amp;
        const float fx = 1.0f + static_cast<float>(rng.bounded(3));
        const float fy = 1.0f + static_cast<float>(rng.bounded(3));
        const float phase = rng.uniform(0.0f, 2.0f * std::numbers::pi_v<float>);
        float* img = ds.images.data() + ds.image_size() * i;
        for (int c = 0; c < 3; ++c)
            for (int y = 0; y < res; ++y)
                for (int x = 0; x < res; ++x) {
                    const float tex =
                        cfg.texture_amp *
                        std::sin(2.0f * std::numbers::pi_v<float> * (fx * x + fy * y) /
                                     static_cast<float>(res) +
                                 phase);
                    float v = 0.5f + offset[c] + tex +
                              static_cast<float>(rng.normal(0.0, cfg.noise));
                    img[(c * res + y) * res + x] = std::min(1.0f, std::max(0.0f, v));
                }
    }
    return ds;
}

inline ImageDataset synth_blobs(int classes, int count, int resolution, std::uint64_t seed) {
    SynthConfig cfg;
    cfg.classes = classes;
    cfg.count = count;
    cfg.resolution = resolution;
    return synth_blobs(cfg, seed);
}

// deterministic shuffled split; train gets round(fraction * n) examples
inline void make_split(ImageDataset& ds, double train_fraction, std::uint64_t seed) {
    const int n = ds.count();
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    Rng rng(derive_seed(seed, fnv1a("split")));
    rng.shuffle(order);
    const int train_n = static_cast<int>(train_fraction * n + 0.5);
    ds.train_idx.assign(order.begin(), order.begin() + train_n);
    ds.valid_idx.assign(order.begin() + train_n, order.end());
}

// per-channel statistics over the training split only
inline ChannelStats channel_stats(const ImageDataset& ds) {
    if (ds.train_idx.empty()) throw DataError("channel_stats: dataset has no split");
    ChannelStats st;
    const std::size_t plane = static_cast<std::size_t>(ds.h) * ds.w;
    const double count = static_cast<double>(ds.train_idx.size()) * plane;
    for (int c = 0; c < 3; ++c) {
        double sum = 0.0;
        for (int i : ds.train_idx) {
            const float* p = ds.image(i) + c * plane;
            for (std::size_t j = 0; j < plane; ++j) sum += p[j];
        }
        const double mean = sum / count;
        double var = 0.0;
        for (int i : ds.train_idx) {
            const float* p = ds.image(i) + c * plane;
            for (std::size_t j = 0; j < plane; ++j) {
                const double d = p[j] - mean;
                var += d * d;
            }
        }
        st.mean[c] = static_cast<float>(mean);
        st.stdev[c] = static_cast<float>(std::sqrt(var / count));
    }
    return st;
}

// gathers indices[begin, begin+count) into a standardized NCHW batch
inline Tensor make_batch(const ImageDataset& ds, const std::vector<int>& indices,
                         std::size_t begin, std::size_t count, const ChannelStats& st) {
    Tensor t(static_cast<int>(count), 3, ds.h, ds.w);
    const std::size_t plane = t.plane_size();
    for (std::size_t i = 0; i < count; ++i) {
        const float* img = ds.image(indices[begin + i]);
        for (int c = 0; c < 3; ++c) {
            const float inv = 1.0f / st.stdev[c];
            float* dst = t.plane(static_cast<int>(i), c);
            const float* src = img + c * plane;
            for (std::size_t j = 0; j < plane; ++j) dst[j] = (src[j] - st.mean[c]) * inv;
        }
    }
    return t;
}

}  // namespace rwnas
