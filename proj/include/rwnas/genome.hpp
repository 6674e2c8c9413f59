#ifndef RWNAS_GENOME_HPP
#define RWNAS_GENOME_HPP

#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "rwnas/rng.hpp"

namespace rwnas {

enum class SpaceKind { micro, macro, custom };

inline const char* space_kind_name(SpaceKind k) {
    switch (k) {
        case SpaceKind::micro: return "micro";
        case SpaceKind::macro: return "macro";
        case SpaceKind::custom: return "custom";
    }
    return "?";
}

// Cell-space operation inventory. Order is load-bearing: op ids in genomes
// index into this list.
enum MicroOp : int {
    kOpIdentity = 0,
    kOpSepConv3 = 1,
    kOpSepConv5 = 2,
    kOpDilConv3 = 3,
    kOpDilConv5 = 4,
    kOpMaxPool3 = 5,
    kOpAvgPool3 = 6,
    kOpZero = 7,
};
inline constexpr int kMicroOpCount = 8;

inline constexpr int kMicroNodesPerCell = 4;   // B
inline constexpr int kMicroGenesPerNode = 4;   // (in1, op1, in2, op2)
inline constexpr int kMicroCellGenes = kMicroNodesPerCell * kMicroGenesPerNode;
inline constexpr int kMicroGenomeLength = 2 * kMicroCellGenes;

inline constexpr int kMacroPhases = 3;         // P
inline constexpr int kMacroNodesPerPhase = 6;  // K
inline constexpr int kMacroBitsPerPhase = kMacroNodesPerPhase * (kMacroNodesPerPhase - 1) / 2;
inline constexpr int kMacroGenomeLength = kMacroPhases * kMacroBitsPerPhase;

struct GeneBounds {
    int lo = 0;
    int hi = 0;  // inclusive
};

// Per-position integer bounds plus the decoding kind. Every genome produced
// or repaired must satisfy its bounds.
struct SearchSpaceSpec {
    SpaceKind kind = SpaceKind::custom;
    std::vector<GeneBounds> bounds;
    bool compat_mode = false;  // micro only: forbid duplicate inputs per node

    int length() const { return static_cast<int>(bounds.size()); }
};

inline SearchSpaceSpec micro_space(bool compat_mode = false) {
    SearchSpaceSpec s;
    s.kind = SpaceKind::micro;
    s.compat_mode = compat_mode;
    s.bounds.reserve(kMicroGenomeLength);
    for (int cell = 0; cell < 2; ++cell) {
        for (int node = 0; node < kMicroNodesPerCell; ++node) {
            // node i picks inputs from the 2 cell inputs and nodes 0..i-1
            GeneBounds input{0, node + 1};
            GeneBounds op{0, kMicroOpCount - 1};
            s.bounds.push_back(input);
            s.bounds.push_back(op);
            s.bounds.push_back(input);
            s.bounds.push_back(op);
        }
    }
    return s;
}

inline SearchSpaceSpec macro_space() {
    SearchSpaceSpec s;
    s.kind = SpaceKind::macro;
    s.bounds.assign(kMacroGenomeLength, GeneBounds{0, 1});
    return s;
}

inline SearchSpaceSpec custom_space(std::vector<GeneBounds> bounds) {
    SearchSpaceSpec s;
    s.kind = SpaceKind::custom;
    s.bounds = std::move(bounds);
    return s;
}

struct Genome {
    SpaceKind kind = SpaceKind::custom;
    std::vector<int> genes;

    bool operator==(const Genome& other) const = default;
};

class EncodingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Structured view of a micro genome: per-node (input1, op1, input2, op2).
struct NodeSpec {
    int in1 = 0;
    int op1 = 0;
    int in2 = 0;
    int op2 = 0;
};

struct MicroCells {
    std::array<NodeSpec, kMicroNodesPerCell> normal;
    std::array<NodeSpec, kMicroNodesPerCell> reduction;
};

inline MicroCells micro_cells(const Genome& g) {
    if (g.kind != SpaceKind::micro || g.genes.size() != kMicroGenomeLength)
        throw EncodingError("micro_cells: not a micro genome");
    MicroCells c;
    auto read = [&](int base, std::array<NodeSpec, kMicroNodesPerCell>& out) {
        for (int i = 0; i < kMicroNodesPerCell; ++i) {
            const int* p = g.genes.data() + base + i * kMicroGenesPerNode;
            out[i] = NodeSpec{p[0], p[1], p[2], p[3]};
        }
    };
    read(0, c.normal);
    read(kMicroCellGenes, c.reduction);
    return c;
}

// Phase adjacency bits, grouped by destination node: bit (i -> j), i < j,
// lives at index j*(j-1)/2 + i within the phase.
inline bool macro_edge(const Genome& g, int phase, int from, int to) {
    int idx = phase * kMacroBitsPerPhase + to * (to - 1) / 2 + from;
    return g.genes[idx] != 0;
}

inline std::vector<std::string> validate(const Genome& g, const SearchSpaceSpec& spec) {
    std::vector<std::string> violations;
    if (g.kind != spec.kind) {
        violations.push_back("kind mismatch");
        return violations;
    }
    if (static_cast<int>(g.genes.size()) != spec.length()) {
        violations.push_back("length " + std::to_string(g.genes.size()) + " != spec length " +
                             std::to_string(spec.length()));
        return violations;
    }
    for (int i = 0; i < spec.length(); ++i) {
        if (g.genes[i] < spec.bounds[i].lo || g.genes[i] > spec.bounds[i].hi)
            violations.push_back("gene " + std::to_string(i) + " = " + std::to_string(g.genes[i]) +
                                 " out of [" + std::to_string(spec.bounds[i].lo) + "," +
                                 std::to_string(spec.bounds[i].hi) + "]");
    }
    if (spec.kind == SpaceKind::micro && spec.compat_mode && violations.empty()) {
        MicroCells c = micro_cells(g);
        for (int cell = 0; cell < 2; ++cell) {
            const auto& nodes = cell == 0 ? c.normal : c.reduction;
            for (int i = 0; i < kMicroNodesPerCell; ++i)
                if (nodes[i].in1 == nodes[i].in2)
                    violations.push_back("cell " + std::to_string(cell) + " node " +
                                         std::to_string(i) + " has duplicate inputs");
        }
    }
    return violations;
}

inline bool is_valid(const Genome& g, const SearchSpaceSpec& spec) {
    return validate(g, spec).empty();
}

// Duplicate-input fix for compat mode: the second input of an offending node
// is resampled uniformly from its legal index set minus the first input.
inline Genome repair(Genome g, const SearchSpaceSpec& spec, Rng& rng) {
    if (spec.kind != SpaceKind::micro || !spec.compat_mode) return g;
    for (int cell = 0; cell < 2; ++cell) {
        for (int node = 0; node < kMicroNodesPerCell; ++node) {
            int base = cell * kMicroCellGenes + node * kMicroGenesPerNode;
            int& in1 = g.genes[base + 0];
            int& in2 = g.genes[base + 2];
            if (in1 != in2) continue;
            // legal set is {0..node+1}; skip over in1 when drawing
            int draw = static_cast<int>(rng.bounded(static_cast<std::uint64_t>(node + 1)));
            in2 = draw >= in1 ? draw + 1 : draw;
        }
    }
    return g;
}

inline Genome sample_random(const SearchSpaceSpec& spec, Rng& rng) {
    Genome g;
    g.kind = spec.kind;
    g.genes.resize(spec.bounds.size());
    for (std::size_t i = 0; i < spec.bounds.size(); ++i)
        g.genes[i] = rng.next_int(spec.bounds[i].lo, spec.bounds[i].hi);
    return repair(std::move(g), spec, rng);
}

// Two-point crossover: the segment [cut1, cut2) is swapped between parents.
inline std::pair<Genome, Genome> crossover_segment(const Genome& a, const Genome& b, int cut1,
                                                   int cut2) {
    Genome x = a, y = b;
    for (int i = cut1; i < cut2; ++i) std::swap(x.genes[i], y.genes[i]);
    return {std::move(x), std::move(y)};
}

// Cut points are drawn uniformly from [0, len].
inline std::pair<Genome, Genome> two_point_crossover(const Genome& a, const Genome& b,
                                                     const SearchSpaceSpec& spec, Rng& rng) {
    if (a.kind != b.kind || a.genes.size() != b.genes.size() ||
        static_cast<int>(a.genes.size()) != spec.length())
        throw EncodingError("two_point_crossover: parents from different specs");
    const int len = spec.length();
    int c1 = static_cast<int>(rng.bounded(static_cast<std::uint64_t>(len) + 1));
    int c2 = static_cast<int>(rng.bounded(static_cast<std::uint64_t>(len) + 1));
    if (c1 > c2) std::swap(c1, c2);
    auto [x, y] = crossover_segment(a, b, c1, c2);
    return {repair(std::move(x), spec, rng), repair(std::move(y), spec, rng)};
}

// Polynomial mutation adapted to integer genes: the real-valued perturbation
// is computed over [lo, hi], rounded to the nearest integer and clamped.
inline Genome polynomial_mutation(Genome g, const SearchSpaceSpec& spec, double eta_m, double p_m,
                                  Rng& rng) {
    for (int i = 0; i < spec.length(); ++i) {
        if (rng.next_unit() >= p_m) continue;
        const double lo = spec.bounds[i].lo;
        const double hi = spec.bounds[i].hi;
        if (hi <= lo) continue;
        const double y = g.genes[i];
        const double range = hi - lo;
        const double u = rng.next_unit();
        const double mut_pow = 1.0 / (eta_m + 1.0);
        double deltaq;
        if (u < 0.5) {
            const double xy = 1.0 - (y - lo) / range;
            const double val = 2.0 * u + (1.0 - 2.0 * u) * std::pow(xy, eta_m + 1.0);
            deltaq = std::pow(val, mut_pow) - 1.0;
        } else {
            const double xy = 1.0 - (hi - y) / range;
            const double val = 2.0 * (1.0 - u) + (2.0 * u - 1.0) * std::pow(xy, eta_m + 1.0);
            deltaq = 1.0 - std::pow(val, mut_pow);
        }
        double mutated = y + deltaq * range;
        mutated = std::min(std::max(mutated, lo), hi);
        g.genes[i] = static_cast<int>(std::lround(mutated));
        g.genes[i] = std::min(std::max(g.genes[i], spec.bounds[i].lo), spec.bounds[i].hi);
    }
    return repair(std::move(g), spec, rng);
}

// Canonical text form: "<kind>:" followed by comma-separated genes.
inline std::string to_string(const Genome& g) {
    std::string s = space_kind_name(g.kind);
    s += ':';
    for (std::size_t i = 0; i < g.genes.size(); ++i) {
        if (i) s += ',';
        s += std::to_string(g.genes[i]);
    }
    return s;
}

inline Genome genome_from_string(const std::string& text) {
    auto colon = text.find(':');
    if (colon == std::string::npos) throw EncodingError("genome string missing ':' prefix");
    std::string kind = text.substr(0, colon);
    Genome g;
    if (kind == "micro")
        g.kind = SpaceKind::micro;
    else if (kind == "macro")
        g.kind = SpaceKind::macro;
    else if (kind == "custom")
        g.kind = SpaceKind::custom;
    else
        throw EncodingError("unknown genome kind '" + kind + "'");
    std::size_t pos = colon + 1;
    while (pos < text.size()) {
        std::size_t next = text.find(',', pos);
        if (next == std::string::npos) next = text.size();
        int value = 0;
        auto [ptr, ec] = std::from_chars(text.data() + pos, text.data() + next, value);
        if (ec != std::errc() || ptr != text.data() + next)
            throw EncodingError("bad gene at position " + std::to_string(g.genes.size()) +
                                " in genome string");
        g.genes.push_back(value);
        pos = next + 1;
    }
    if (pos == text.size() && !text.empty() && text.back() == ',')
        throw EncodingError("trailing comma in genome string");
    return g;
}

inline std::uint64_t genome_hash(const Genome& g) { return fnv1a(to_string(g)); }

}  // namespace rwnas

#endif  // RWNAS_GENOME_HPP
