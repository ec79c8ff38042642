#pragma once

// Cross-participant identification of condition-specific connectivity.
//
// Training participants are pooled per condition into a similarity-weighted
// average matrix. Features are the node pairs inside the primary DSE cluster
// of either thresholded average. A held-out participant's two matrices are
// labelled by whichever pairing with the averages has the larger summed
// cosine similarity on those features. Significance comes from relabelling
// the nodes of the training averages while keeping the features fixed.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "fcnet/connectivity.hpp"
#include "fcnet/detail/parallel.hpp"
#include "fcnet/dse.hpp"
#include "fcnet/model.hpp"

namespace fcnet {

using NodePair = std::pair<std::size_t, std::size_t>;

/// Where a feature set came from.
struct FeatureSource {
  FeatureMode mode = FeatureMode::dse_union;
  std::optional<ThresholdSpec> threshold;
  NodeSet cluster_a;  // primary cluster of condition A (dse_union only)
  NodeSet cluster_c;
};

/// Upper-triangle node pairs (i < j), sorted and unique.
class FeatureSet {
 public:
  using Source = FeatureSource;

  FeatureSet(std::size_t n, std::vector<NodePair> pairs, Source source = {})
      : n_(n), pairs_(std::move(pairs)), source_(std::move(source)) {
    for (auto& [i, j] : pairs_) {
      require(i < j, ErrorKind::invalid_argument, "feature pair must satisfy i < j");
      require(j < n_, ErrorKind::invalid_argument, "feature pair out of range");
    }
    std::sort(pairs_.begin(), pairs_.end());
    require(std::adjacent_find(pairs_.begin(), pairs_.end()) == pairs_.end(), ErrorKind::invalid_argument,
            "duplicate feature pair");
  }

  std::size_t nodes() const noexcept { return n_; }
  const std::vector<NodePair>& pairs() const noexcept { return pairs_; }
  const Source& source() const noexcept { return source_; }
  std::size_t size() const noexcept { return pairs_.size(); }
  bool empty() const noexcept { return pairs_.empty(); }

  friend bool operator==(const FeatureSet& a, const FeatureSet& b) { return a.n_ == b.n_ && a.pairs_ == b.pairs_; }

 private:
  std::size_t n_;
  std::vector<NodePair> pairs_;
  Source source_;
};

/// All pairs of members of each cluster, unioned.
inline std::vector<NodePair> cluster_pairs(const std::vector<NodeSet>& clusters) {
  std::set<NodePair> out;
  for (const auto& c : clusters)
    for (std::size_t a = 0; a < c.size(); ++a)
      for (std::size_t b = a + 1; b < c.size(); ++b) out.emplace(std::min(c[a], c[b]), std::max(c[a], c[b]));
  return {out.begin(), out.end()};
}

/// B_ik = tr(G_i^T G_k) / sqrt(tr(G_i^T G_i) tr(G_k^T G_k)).
inline double rv_coefficient(const ConnectivityMatrix& gi, const ConnectivityMatrix& gk) {
  require(gi.size() == gk.size(), ErrorKind::invalid_argument, "matrix sizes differ");
  const double ii = gi.values().squaredNorm();
  const double kk = gk.values().squaredNorm();
  require(ii > 0.0 && kk > 0.0, ErrorKind::invalid_argument, "zero-norm matrix");
  return gi.values().cwiseProduct(gk.values()).sum() / std::sqrt(ii * kk);
}

struct PowerIterationOptions {
  double tolerance = 1e-10;
  std::size_t max_iterations = 10000;
};

/// Leading eigenvector of the between-participant RV matrix, sign-fixed so
/// its largest-magnitude entry is positive, negatives clipped to zero and
/// rescaled to sum 1.
inline Vector participant_weights(const std::vector<const ConnectivityMatrix*>& mats,
                                  PowerIterationOptions opts = {}) {
  const auto p = static_cast<Eigen::Index>(mats.size());
  require(p >= 2, ErrorKind::invalid_argument, "participant weights need >= 2 matrices");
  Matrix b(p, p);
  for (Eigen::Index i = 0; i < p; ++i) {
    b(i, i) = 1.0;
    for (Eigen::Index k = i + 1; k < p; ++k) {
      b(i, k) = rv_coefficient(*mats[static_cast<std::size_t>(i)], *mats[static_cast<std::size_t>(k)]);
      b(k, i) = b(i, k);
    }
  }
  // Shifting by a bound on the spectral radius makes every eigenvalue
  // nonnegative, so the iteration finds the algebraically largest one.
  const double shift = b.cwiseAbs().rowwise().sum().maxCoeff();
  Vector v = Vector::Constant(p, 1.0 / std::sqrt(static_cast<double>(p)));
  bool converged = false;
  for (std::size_t it = 0; it < opts.max_iterations; ++it) {
    const Vector bv = b * v;
    const double lambda = v.dot(bv);
    if ((bv - lambda * v).norm() <= opts.tolerance) {
      converged = true;
      break;
    }
    v = bv + shift * v;
    v.normalize();
  }
  require(converged, ErrorKind::non_convergence, "participant weight power iteration");
  Eigen::Index peak = 0;
  v.cwiseAbs().maxCoeff(&peak);
  if (v(peak) < 0.0) v = -v;
  v = v.cwiseMax(0.0);
  return v / v.sum();
}

inline Vector participant_weights(const std::vector<ConnectivityMatrix>& mats, PowerIterationOptions opts = {}) {
  std::vector<const ConnectivityMatrix*> ptrs;
  for (const auto& m : mats) ptrs.push_back(&m);
  return participant_weights(ptrs, opts);
}

inline ConnectivityMatrix weighted_average(const std::vector<const ConnectivityMatrix*>& mats, const Vector& weights) {
  require(!mats.empty() && static_cast<Eigen::Index>(mats.size()) == weights.size(), ErrorKind::invalid_argument,
          "one weight per matrix required");
  require((weights.array() >= 0.0).all() && std::abs(weights.sum() - 1.0) <= 1e-9, ErrorKind::invalid_argument,
          "weights must be nonnegative and sum to 1");
  const auto& first = *mats.front();
  Matrix sum = Matrix::Zero(first.values().rows(), first.values().cols());
  for (std::size_t k = 0; k < mats.size(); ++k) {
    require(mats[k]->labels() == first.labels(), ErrorKind::label_mismatch, "averaged matrices have different ROIs");
    sum += weights(static_cast<Eigen::Index>(k)) * mats[k]->values();
  }
  // Keep exact symmetry despite summation order.
  sum = 0.5 * (sum + sum.transpose()).eval();
  return ConnectivityMatrix(std::move(sum), first.labels(), "", first.condition(), MatrixKind::weighted_average);
}

inline ConnectivityMatrix weighted_average(const std::vector<ConnectivityMatrix>& mats, const Vector& weights) {
  std::vector<const ConnectivityMatrix*> ptrs;
  for (const auto& m : mats) ptrs.push_back(&m);
  return weighted_average(ptrs, weights);
}

/// Feature pairs for one training split.
///   dse_union:            pairs inside the primary DSE cluster of either average
///   thresholded_elements: pairs surviving the percentile cut in either average
///   all_elements:         every upper-triangle pair
inline FeatureSet select_features(const ConnectivityMatrix& avg_a, const ConnectivityMatrix& avg_c,
                                  const ThresholdSpec& threshold, const DseParams& dse,
                                  FeatureMode mode = FeatureMode::dse_union, bool binarize = false) {
  require(avg_a.labels() == avg_c.labels(), ErrorKind::label_mismatch, "averages have different ROIs");
  const std::size_t n = avg_a.size();
  FeatureSet::Source source{mode, std::nullopt, {}, {}};
  std::vector<NodePair> pairs;
  switch (mode) {
    case FeatureMode::all_elements:
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) pairs.emplace_back(i, j);
      break;
    case FeatureMode::thresholded_elements: {
      source.threshold = threshold;
      std::set<NodePair> kept;
      for (const auto* avg : {&avg_a, &avg_c}) {
        const auto net = percentile_threshold(*avg, threshold.percentile, threshold.sign);
        for (const auto& e : net.edges()) kept.emplace(e.i, e.j);
      }
      pairs.assign(kept.begin(), kept.end());
      break;
    }
    case FeatureMode::dse_union: {
      source.threshold = threshold;
      auto primary_of = [&](const ConnectivityMatrix& avg) {
        const auto net = percentile_threshold(avg, threshold.percentile, threshold.sign, binarize);
        const auto result = run_dse(net, dse);
        const auto* primary = result.clusters.primary();
        require(primary != nullptr, ErrorKind::no_cluster_structure, "condition '" + avg.condition() + "'");
        return *primary;
      };
      source.cluster_a = primary_of(avg_a);
      source.cluster_c = primary_of(avg_c);
      pairs = cluster_pairs({source.cluster_a, source.cluster_c});
      break;
    }
  }
  return FeatureSet(n, std::move(pairs), std::move(source));
}

namespace detail {

// Matrix entries at the feature pairs, read through an optional node relabeling.
inline double feature_cosine(const Matrix& train, const Matrix& test, const FeatureSet& features,
                             const std::vector<std::size_t>* perm = nullptr) {
  double dot = 0.0, tt = 0.0, ss = 0.0;
  for (const auto& [i, j] : features.pairs()) {
    const auto pi = static_cast<Eigen::Index>(perm ? (*perm)[i] : i);
    const auto pj = static_cast<Eigen::Index>(perm ? (*perm)[j] : j);
    const double a = train(pi, pj);
    const double b = test(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    dot += a * b;
    tt += a * a;
    ss += b * b;
  }
  require(tt > 0.0 && ss > 0.0, ErrorKind::invalid_argument, "zero norm on selected features");
  return dot / std::sqrt(tt * ss);
}

}  // namespace detail

inline double cosine_similarity(const ConnectivityMatrix& train, const ConnectivityMatrix& test,
                                const FeatureSet& features) {
  require(train.size() == features.nodes() && test.size() == features.nodes(), ErrorKind::invalid_argument,
          "feature set does not match matrix size");
  require(!features.empty(), ErrorKind::invalid_argument, "empty feature set");
  return detail::feature_cosine(train.values(), test.values(), features);
}

struct Assignment {
  bool first_is_a = false;  // test_1 -> A, test_2 -> C
  bool ambiguous = false;   // exact tie between the two pairings
  double score_first_a = 0.0;   // beta(A; test_1) + beta(C; test_2)
  double score_first_c = 0.0;   // beta(C; test_1) + beta(A; test_2)
};

namespace detail {

inline Assignment assign(const Matrix& train_a, const Matrix& train_c, const Matrix& test_1, const Matrix& test_2,
                         const FeatureSet& features, const std::vector<std::size_t>* perm = nullptr) {
  Assignment out;
  out.score_first_a =
      feature_cosine(train_a, test_1, features, perm) + feature_cosine(train_c, test_2, features, perm);
  out.score_first_c =
      feature_cosine(train_c, test_1, features, perm) + feature_cosine(train_a, test_2, features, perm);
  out.ambiguous = out.score_first_a == out.score_first_c;
  out.first_is_a = out.score_first_a > out.score_first_c;
  return out;
}

}  // namespace detail

inline Assignment assign_labels(const ConnectivityMatrix& train_a, const ConnectivityMatrix& train_c,
                                const ConnectivityMatrix& test_1, const ConnectivityMatrix& test_2,
                                const FeatureSet& features) {
  for (const auto* m : {&train_a, &train_c, &test_1, &test_2})
    require(m->size() == features.nodes(), ErrorKind::invalid_argument, "feature set does not match matrix size");
  require(!features.empty(), ErrorKind::invalid_argument, "empty feature set");
  return detail::assign(train_a.values(), train_c.values(), test_1.values(), test_2.values(), features);
}

struct ClassifyConfig {
  FeatureMode mode = FeatureMode::dse_union;
  ThresholdSpec threshold;
  bool binarize = false;  // DSE on binarized thresholded averages
  DseParams dse;
  std::size_t n_perm = 1000;
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
};

/// Everything a fold learns from its training participants.
struct FoldModel {
  ConnectivityMatrix avg_a;
  ConnectivityMatrix avg_c;
  Vector weights_a;
  Vector weights_c;
  FeatureSet features;
};

/// Per-condition participant weights, weighted averages and features. Only
/// the matrices in `training` are read.
inline FoldModel train_fold(const ParticipantSet& training, const ClassifyConfig& config) {
  auto average = [&](const std::string& condition, Vector& weights) {
    std::vector<const ConnectivityMatrix*> mats;
    for (const auto& id : training.participant_ids()) mats.push_back(&training.at(id, condition));
    weights = participant_weights(mats);
    return weighted_average(mats, weights);
  };
  Vector wa, wc;
  auto avg_a = average(training.condition_a(), wa);
  auto avg_c = average(training.condition_c(), wc);
  auto features = select_features(avg_a, avg_c, config.threshold, config.dse, config.mode, config.binarize);
  return {std::move(avg_a), std::move(avg_c), std::move(wa), std::move(wc), std::move(features)};
}

/// Labels one held-out participant; `perm` relabels the training averages.
inline FoldRecord apply_fold(const FoldModel& model, const ConnectivityMatrix& test_a, const ConnectivityMatrix& test_c,
                             const std::vector<std::size_t>* perm = nullptr) {
  require(test_a.labels() == model.avg_a.labels() && test_c.labels() == model.avg_a.labels(),
          ErrorKind::label_mismatch, "held-out ROIs differ from training");
  const auto result = detail::assign(model.avg_a.values(), model.avg_c.values(), test_a.values(), test_c.values(),
                                     model.features, perm);
  FoldRecord rec;
  rec.held_out = test_a.participant();
  rec.label_for_a = result.first_is_a ? model.avg_a.condition() : model.avg_c.condition();
  rec.label_for_c = result.first_is_a ? model.avg_c.condition() : model.avg_a.condition();
  rec.score_true_pairing = result.score_first_a;
  rec.score_swapped_pairing = result.score_first_c;
  rec.ambiguous = result.ambiguous;
  rec.correct = result.first_is_a && !result.ambiguous;
  rec.feature_count = model.features.size();
  return rec;
}

namespace detail {

struct FittedFolds {
  std::vector<std::string> ids;
  std::vector<std::optional<FoldModel>> models;
  std::vector<FoldRecord> records;
};

inline FittedFolds fit_folds(const ParticipantSet& participants, const ClassifyConfig& config) {
  require(participants.participants() >= 3, ErrorKind::invalid_argument, "cross-validation needs >= 3 participants");
  FittedFolds f;
  f.ids = participants.participant_ids();
  f.models.resize(f.ids.size());
  f.records.resize(f.ids.size());
  parallel_for(f.ids.size(), config.jobs, [&](std::size_t k) {
    const auto& id = f.ids[k];
    try {
      f.models[k] = train_fold(participants.without(id), config);
      f.records[k] = apply_fold(*f.models[k], participants.at(id, participants.condition_a()),
                                participants.at(id, participants.condition_c()));
    } catch (const Error& e) {
      f.models[k].reset();
      f.records[k] = FoldRecord{};
      f.records[k].held_out = id;
      f.records[k].error = e.what();
    }
  });
  return f;
}

inline double fold_accuracy(const std::vector<FoldRecord>& records) {
  std::size_t correct = 0;
  for (const auto& r : records)
    if (r.correct) ++correct;
  return static_cast<double>(correct) / static_cast<double>(records.size());
}

}  // namespace detail

/// Node relabeling number `index` drawn for fold `fold` of a run seeded with
/// `seed`. Every fold draws its own sequence; null accuracy number p pools the
/// p-th draw of each fold.
inline std::vector<std::size_t> node_permutation(std::size_t n, std::uint64_t seed, std::size_t fold,
                                                 std::size_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(fold), static_cast<std::uint32_t>(index),
                    static_cast<std::uint32_t>(static_cast<std::uint64_t>(index) >> 32)};
  std::mt19937_64 rng(seq);
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::shuffle(perm.begin(), perm.end(), rng);
  return perm;
}

namespace detail {

inline std::vector<double> permutation_null(const ParticipantSet& participants, const FittedFolds& fitted,
                                            std::size_t n_perm, std::uint64_t seed, std::size_t jobs) {
  const std::size_t n = participants.labels().size();
  std::vector<double> null(n_perm);
  parallel_for(n_perm, jobs, [&](std::size_t p) {
    std::size_t correct = 0;
    for (std::size_t k = 0; k < fitted.ids.size(); ++k) {
      if (!fitted.models[k]) continue;  // failed folds count as incorrect
      const auto perm = node_permutation(n, seed, k, p);
      const auto& id = fitted.ids[k];
      const auto rec = apply_fold(*fitted.models[k], participants.at(id, participants.condition_a()),
                                  participants.at(id, participants.condition_c()), &perm);
      if (rec.correct) ++correct;
    }
    null[p] = static_cast<double>(correct) / static_cast<double>(fitted.ids.size());
  });
  return null;
}

inline ClassificationReport make_report(const FittedFolds& fitted, const ClassifyConfig& config) {
  ClassificationReport report;
  report.folds = fitted.records;
  report.accuracy = fold_accuracy(fitted.records);
  report.seed = config.seed;
  report.mode = config.mode;
  if (config.mode != FeatureMode::all_elements) report.threshold = config.threshold;
  std::set<NodePair> all_features;
  for (const auto& m : fitted.models)
    if (m) all_features.insert(m->features.pairs().begin(), m->features.pairs().end());
  report.feature_count = all_features.size();
  report.complete = std::none_of(fitted.records.begin(), fitted.records.end(),
                                 [](const FoldRecord& r) { return r.error.has_value(); });
  return report;
}

}  // namespace detail

/// Leave-one-participant-out cross-validation without the permutation null.
inline ClassificationReport lopo_cv(const ParticipantSet& participants, const ClassifyConfig& config) {
  auto report = detail::make_report(detail::fit_folds(participants, config), config);
  report.n_perm = 0;
  return report;
}

struct PermutationResult {
  double observed = 0.0;
  std::vector<double> null;
  double p_value = 1.0;
};

inline PermutationResult permutation_test(const ParticipantSet& participants, const ClassifyConfig& config,
                                          std::size_t n_perm, std::uint64_t seed) {
  require(n_perm >= 1, ErrorKind::invalid_argument, "n_perm must be >= 1");
  const auto fitted = detail::fit_folds(participants, config);
  PermutationResult out;
  out.observed = detail::fold_accuracy(fitted.records);
  out.null = detail::permutation_null(participants, fitted, n_perm, seed, config.jobs);
  out.p_value = permutation_p_value(out.observed, out.null);
  return out;
}

/// Cross-validation plus the node-permutation null, sharing the fold fits.
inline ClassificationReport classify(const ParticipantSet& participants, const ClassifyConfig& config) {
  require(config.n_perm >= 1, ErrorKind::invalid_argument, "n_perm must be >= 1");
  const auto fitted = detail::fit_folds(participants, config);
  auto report = detail::make_report(fitted, config);
  report.n_perm = config.n_perm;
  report.permutation_null = detail::permutation_null(participants, fitted, config.n_perm, config.seed, config.jobs);
  report.p_value = permutation_p_value(report.accuracy, report.permutation_null);
  return report;
}

}  // namespace fcnet
