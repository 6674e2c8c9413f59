#pragma once

// random-weight evaluation: extract global-average-pool features from a
// frozen random backbone, train a small ensemble of linear classifiers on
// leave-one-fold-out subsets, and score the architecture by the ensemble's
// validation error.

#include <Eigen/Core>
#include <chrono>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "rwnas/dataio.hpp"
#include "rwnas/forward.hpp"
#include "rwnas/genome.hpp"
#include "rwnas/netgraph.hpp"
#include "rwnas/rng.hpp"

namespace rwnas {

class EvalError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

struct RweConfig {
    int epochs = 30;
    int batch = 512;
    float lr = 0.25f;
    float momentum = 0.9f;
    int folds = 5;            // 1 trains a single classifier on all rows
    int eval_batch = 512;     // normalization group during feature extraction
    std::uint64_t seed = 0;
};

struct FeatureMatrix {
    int rows = 0;
    int dim = 0;
    std::vector<float> data;  // row-major [rows][dim]
    std::vector<int> labels;

    float* row(int r) { return data.data() + static_cast<std::size_t>(r) * dim; }
    const float* row(int r) const { return data.data() + static_cast<std::size_t>(r) * dim; }
};

struct LinearClassifier {
    int in_dim = 0;
    int classes = 0;
    std::vector<float> weight;       // [classes][in_dim]
    std::vector<float> bias;         // [classes]
    std::vector<float> epoch_loss;   // mean cross-entropy per epoch
    bool degenerate = false;         // fewer than two classes in training rows
};

struct EvalReport {
    std::string genome;
    double rwe_error = 1.0;
    std::int64_t flops = 0;
    std::vector<double> fold_errors;
    double wall_seconds = 0.0;
    std::uint64_t seed = 0;
    std::uint64_t weight_seed = 0;
    std::uint64_t weight_fingerprint = 0;
    bool degenerate = false;
};

namespace detail {

using RweMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

}  // namespace detail

// runs the split through the frozen backbone in fixed normalization groups of
// cfg.eval_batch images, so features do not depend on any caller batching.
// loader_batch only controls gather granularity and never changes results.
inline FeatureMatrix extract_features(const NetGraph& net, const WeightSet& weights,
                                      const ImageDataset& ds, const std::vector<int>& indices,
                                      const ChannelStats& stats, int eval_batch = 512,
                                      int loader_batch = 0) {
    FeatureMatrix f;
    f.rows = static_cast<int>(indices.size());
    f.dim = net.feature_dim;
    f.data.resize(static_cast<std::size_t>(f.rows) * f.dim);
    f.labels.resize(indices.size());
    for (std::size_t i = 0; i < indices.size(); ++i) f.labels[i] = ds.labels[indices[i]];

    if (loader_batch <= 0 || loader_batch > eval_batch) loader_batch = eval_batch;
    for (std::size_t group = 0; group < indices.size(); group += eval_batch) {
        const std::size_t count = std::min<std::size_t>(eval_batch, indices.size() - group);
        Tensor batch(static_cast<int>(count), 3, ds.h, ds.w);
        for (std::size_t off = 0; off < count; off += loader_batch) {
            const std::size_t chunk = std::min<std::size_t>(loader_batch, count - off);
            Tensor part = make_batch(ds, indices, group + off, chunk, stats);
            std::copy(part.data.begin(), part.data.end(),
                      batch.data.begin() + off * part.plane_size() * 3);
        }
        Tensor out = forward(net, weights, batch);
        for (std::size_t i = 0; i < count; ++i)
            std::copy(out.plane(static_cast<int>(i), 0),
                      out.plane(static_cast<int>(i), 0) + f.dim,
                      f.row(static_cast<int>(group + i)));
    }
    return f;
}

struct FeatureStats {
    std::vector<float> mean;
    std::vector<float> inv_std;  // zero for constant dimensions
};

inline FeatureStats feature_stats(const FeatureMatrix& train) {
    FeatureStats st;
    st.mean.assign(train.dim, 0.0f);
    st.inv_std.assign(train.dim, 0.0f);
    if (train.rows == 0) return st;
    std::vector<double> sum(train.dim, 0.0), sq(train.dim, 0.0);
    for (int r = 0; r < train.rows; ++r) {
        const float* p = train.row(r);
        for (int d = 0; d < train.dim; ++d) {
            sum[d] += p[d];
            sq[d] += static_cast<double>(p[d]) * p[d];
        }
    }
    for (int d = 0; d < train.dim; ++d) {
        const double mean = sum[d] / train.rows;
        const double var = sq[d] / train.rows - mean * mean;
        st.mean[d] = static_cast<float>(mean);
        st.inv_std[d] = var > 1e-12 ? static_cast<float>(1.0 / std::sqrt(var)) : 0.0f;
    }
    return st;
}

inline void standardize(FeatureMatrix& f, const FeatureStats& st) {
    for (int r = 0; r < f.rows; ++r) {
        float* p = f.row(r);
        for (int d = 0; d < f.dim; ++d) p[d] = (p[d] - st.mean[d]) * st.inv_std[d];
    }
}

// SGD with momentum and a per-epoch cosine schedule on softmax cross-entropy.
// rows with exclude[r] != 0 are left out (the held-out fold).
inline LinearClassifier train_classifier(const FeatureMatrix& f, const std::vector<char>& exclude,
                                         const RweConfig& cfg, std::uint64_t seed,
                                         int classes) {
    std::vector<int> rows;
    rows.reserve(f.rows);
    for (int r = 0; r < f.rows; ++r)
        if (exclude.empty() || !exclude[r]) rows.push_back(r);
    if (rows.empty()) throw EvalError("train_classifier: no training rows");

    LinearClassifier clf;
    clf.in_dim = f.dim;
    clf.classes = classes;
    clf.weight.assign(static_cast<std::size_t>(classes) * f.dim, 0.0f);
    clf.bias.assign(classes, 0.0f);
    {
        int first = f.labels[rows[0]];
        bool multi = false;
        for (int r : rows)
            if (f.labels[r] != first) multi = true;
        clf.degenerate = !multi;
    }

    Eigen::Map<detail::RweMat> w(clf.weight.data(), classes, f.dim);
    Eigen::RowVectorXf b = Eigen::RowVectorXf::Zero(classes);
    detail::RweMat vw = detail::RweMat::Zero(classes, f.dim);
    Eigen::RowVectorXf vb = Eigen::RowVectorXf::Zero(classes);

    Rng rng(derive_seed(seed, fnv1a("classifier")));
    const int n = static_cast<int>(rows.size());
    detail::RweMat xb(std::min(cfg.batch, n), f.dim);
    detail::RweMat probs(std::min(cfg.batch, n), classes);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const float lr =
            0.5f * cfg.lr * (1.0f + std::cos(3.14159265358979323846f * epoch / cfg.epochs));
        rng.shuffle(rows);
        double loss_sum = 0.0;
        for (int start = 0; start < n; start += cfg.batch) {
            const int bs = std::min(cfg.batch, n - start);
            for (int i = 0; i < bs; ++i)
                std::copy(f.row(rows[start + i]), f.row(rows[start + i]) + f.dim,
                          xb.row(i).data());
            probs.topRows(bs).noalias() = xb.topRows(bs) * w.transpose();
            probs.topRows(bs).rowwise() += b;
            for (int i = 0; i < bs; ++i) {
                const float m = probs.row(i).maxCoeff();
                probs.row(i) = (probs.row(i).array() - m).exp();
                const float z = probs.row(i).sum();
                probs.row(i) /= z;
                const int y = f.labels[rows[start + i]];
                loss_sum += -std::log(std::max(probs(i, y), 1e-30f));
                probs(i, y) -= 1.0f;
            }
            vw = cfg.momentum * vw;
            vw.noalias() += (1.0f / bs) * (probs.topRows(bs).transpose() * xb.topRows(bs));
            vb = cfg.momentum * vb + (1.0f / bs) * probs.topRows(bs).colwise().sum();
            w.noalias() -= lr * vw;
            b -= lr * vb;
        }
        clf.epoch_loss.push_back(static_cast<float>(loss_sum / n));
    }
    std::copy(b.data(), b.data() + classes, clf.bias.begin());
    return clf;
}

// adds this classifier's softmax probabilities into acc ([rows][classes])
inline void accumulate_probs(const LinearClassifier& clf, const FeatureMatrix& f,
                             std::vector<float>& acc) {
    Eigen::Map<const detail::RweMat> x(f.data.data(), f.rows, f.dim);
    Eigen::Map<const detail::RweMat> w(clf.weight.data(), clf.classes, clf.in_dim);
    Eigen::Map<const Eigen::RowVectorXf> b(clf.bias.data(), clf.classes);
    Eigen::Map<detail::RweMat> out(acc.data(), f.rows, clf.classes);
    detail::RweMat logits = x * w.transpose();
    logits.rowwise() += b;
    for (int i = 0; i < f.rows; ++i) {
        const float m = logits.row(i).maxCoeff();
        logits.row(i) = (logits.row(i).array() - m).exp();
        out.row(i) += logits.row(i) / logits.row(i).sum();
    }
}

inline double top1_error(const std::vector<float>& probs, const std::vector<int>& labels,
                         int classes) {
    int wrong = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const float* p = probs.data() + i * classes;
        int best = 0;
        for (int k = 1; k < classes; ++k)
            if (p[k] > p[best]) best = k;
        if (best != labels[i]) ++wrong;
    }
    return static_cast<double>(wrong) / static_cast<double>(labels.size());
}

struct EnsembleResult {
    double error = 1.0;
    std::vector<double> fold_errors;
    bool degenerate = false;
};

// trains cfg.folds leave-one-fold-out classifiers (fold id = row mod folds)
// and averages their softmax probabilities on the validation features
inline EnsembleResult evaluate_ensemble(const FeatureMatrix& train, const FeatureMatrix& valid,
                                        int classes, const RweConfig& cfg, std::uint64_t seed) {
    EnsembleResult res;
    std::vector<float> mean_probs(static_cast<std::size_t>(valid.rows) * classes, 0.0f);
    for (int fold = 0; fold < cfg.folds; ++fold) {
        std::vector<char> exclude;
        if (cfg.folds > 1) {
            exclude.resize(train.rows, 0);
            for (int r = 0; r < train.rows; ++r) exclude[r] = (r % cfg.folds == fold) ? 1 : 0;
        }
        LinearClassifier clf = train_classifier(train, exclude, cfg,
                                                derive_seed(seed, 1000 + fold), classes);
        res.degenerate = res.degenerate || clf.degenerate;
        std::vector<float> probs(static_cast<std::size_t>(valid.rows) * classes, 0.0f);
        accumulate_probs(clf, valid, probs);
        res.fold_errors.push_back(top1_error(probs, valid.labels, classes));
        for (std::size_t i = 0; i < probs.size(); ++i) mean_probs[i] += probs[i];
    }
    res.error = top1_error(mean_probs, valid.labels, classes);
    return res;
}

// algorithm: decode -> random frozen init -> features -> classifier ensemble
// -> validation error.  deterministic given (genome, scale, dataset, config).
inline EvalReport evaluate_rwe(const Genome& g, const ScaleConfig& scale, const ImageDataset& ds,
                               const RweConfig& cfg) {
    const auto t0 = std::chrono::steady_clock::now();
    if (ds.train_idx.empty() || ds.valid_idx.empty())
        throw EvalError("evaluate_rwe: dataset has no train/valid split");
    EvalReport rep;
    rep.genome = to_string(g);
    rep.seed = cfg.seed;
    rep.weight_seed = derive_seed(cfg.seed, genome_hash(g));
    try {
        const NetGraph net = decode(g, scale);
        rep.flops = count_flops(net);
        const WeightSet weights = init_weights(net, rep.weight_seed);
        const std::uint64_t before = weight_fingerprint(weights);
        const ChannelStats stats = channel_stats(ds);
        FeatureMatrix train =
            extract_features(net, weights, ds, ds.train_idx, stats, cfg.eval_batch);
        FeatureMatrix valid =
            extract_features(net, weights, ds, ds.valid_idx, stats, cfg.eval_batch);
        const FeatureStats fs = feature_stats(train);
        standardize(train, fs);
        standardize(valid, fs);
        EnsembleResult ens =
            evaluate_ensemble(train, valid, ds.classes, cfg, rep.weight_seed);
        rep.rwe_error = ens.error;
        rep.fold_errors = ens.fold_errors;
        rep.degenerate = ens.degenerate;
        rep.weight_fingerprint = weight_fingerprint(weights);
        if (rep.weight_fingerprint != before)
            throw EvalError("frozen weights changed during evaluation");
    } catch (const DecodeError& e) {
        throw EvalError(rep.genome + ": " + e.what());
    } catch (const TensorError& e) {
        throw EvalError(rep.genome + ": " + e.what());
    }
    rep.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rep;
}

}  // namespace rwnas
