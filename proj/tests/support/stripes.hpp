#pragma once

// synthetic texture-classification set for oracle studies: every class is a
// sinusoidal grating of a class-specific spatial frequency at random
// orientation and phase, with identical channel means across classes.  a
// global average of raw pixels carries no label signal, so separating the
// classes requires spatial filtering — architecture quality matters, for
// trained networks and random-weight features alike.

#include <cmath>
#include <cstdint>

#include "rwnas/dataio.hpp"
#include "rwnas/rng.hpp"

namespace tinytrain {

struct StripesConfig {
    int classes = 5;
    int count = 900;
    int resolution = 12;
    float amplitude = 0.25f;
    float noise = 0.06f;
    double base_cycles = 1.0;   // frequency of class 0, in cycles per image
    double cycles_step = 1.0;   // frequency increment per class
};

inline rwnas::ImageDataset make_stripes(const StripesConfig& cfg, std::uint64_t seed) {
    rwnas::ImageDataset ds;
    ds.classes = cfg.classes;
    ds.h = ds.w = cfg.resolution;
    ds.images.resize(static_cast<std::size_t>(cfg.count) * 3 * cfg.resolution * cfg.resolution);
    ds.labels.resize(cfg.count);
    rwnas::Rng rng(rwnas::derive_seed(seed, rwnas::fnv1a("stripes")));
    const double tau = 6.283185307179586477;
    const std::size_t plane = static_cast<std::size_t>(cfg.resolution) * cfg.resolution;
    for (int i = 0; i < cfg.count; ++i) {
        const int label = static_cast<int>(rng.bounded(cfg.classes));
        ds.labels[i] = label;
        const double cycles = cfg.base_cycles + cfg.cycles_step * label;
        const double theta = rng.next_unit() * tau;
        const double phase = rng.next_unit() * tau;
        const double kx = std::cos(theta) * cycles / cfg.resolution;
        const double ky = std::sin(theta) * cycles / cfg.resolution;
        float* img = ds.images.data() + static_cast<std::size_t>(i) * 3 * plane;
        for (int y = 0; y < cfg.resolution; ++y) {
            for (int x = 0; x < cfg.resolution; ++x) {
                const double s = std::sin(tau * (kx * x + ky * y) + phase);
                for (int c = 0; c < 3; ++c) {
                    const float v = 0.5f + cfg.amplitude * static_cast<float>(s) +
                                    cfg.noise * static_cast<float>(rng.normal(0.0, 1.0));
                    img[c * plane + y * cfg.resolution + x] = std::min(1.0f, std::max(0.0f, v));
                }
            }
        }
    }
    return ds;
}

}  // namespace tinytrain
