#pragma once

// Core domain types. Everything here is immutable after construction and the
// constructors enforce the documented invariants.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fcnet/error.hpp"

namespace fcnet {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using NodeSet = std::vector<std::size_t>;

constexpr double kSymmetryTolerance = 1e-12;

/// Number of unordered off-diagonal pairs in an n-node graph.
constexpr std::size_t upper_triangle_size(std::size_t n) { return n < 2 ? 0 : n * (n - 1) / 2; }

namespace detail {

inline void check_labels(const std::vector<std::string>& labels) {
  std::set<std::string_view> seen;
  for (const auto& label : labels) {
    require(!label.empty(), ErrorKind::invalid_argument, "empty ROI label");
    require(seen.insert(label).second, ErrorKind::invalid_argument, "duplicate ROI label '" + label + "'");
  }
}

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

inline double max_asymmetry(const Matrix& m) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = i + 1; j < m.cols(); ++j) worst = std::max(worst, std::abs(m(i, j) - m(j, i)));
  return worst;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Inputs

/// T x N matrix of ROI-averaged signal; column order defines node indices.
class RoiTimeSeries {
 public:
  RoiTimeSeries(Matrix values, double tr_seconds, std::vector<std::string> roi_labels, std::string participant_id)
      : values_(std::move(values)),
        tr_(tr_seconds),
        labels_(std::move(roi_labels)),
        participant_(std::move(participant_id)) {
    require(values_.rows() >= 2 && values_.cols() >= 2, ErrorKind::invalid_argument,
            "time series needs T >= 2 and N >= 2");
    require(tr_ > 0.0 && std::isfinite(tr_), ErrorKind::invalid_argument, "repetition time must be positive");
    require(static_cast<Eigen::Index>(labels_.size()) == values_.cols(), ErrorKind::invalid_argument,
            "label count does not match column count");
    detail::check_labels(labels_);
    require(detail::all_finite(values_), ErrorKind::non_finite, "time series of '" + participant_ + "'");
  }

  const Matrix& values() const noexcept { return values_; }
  double tr() const noexcept { return tr_; }
  const std::vector<std::string>& labels() const noexcept { return labels_; }
  const std::string& participant() const noexcept { return participant_; }
  std::size_t timepoints() const noexcept { return static_cast<std::size_t>(values_.rows()); }
  std::size_t rois() const noexcept { return static_cast<std::size_t>(values_.cols()); }

 private:
  Matrix values_;
  double tr_;
  std::vector<std::string> labels_;
  std::string participant_;
};

struct Event {
  double onset = 0.0;
  double duration = 0.0;
  std::string condition;

  friend bool operator==(const Event&, const Event&) = default;
};

class EventSchedule {
 public:
  explicit EventSchedule(std::vector<Event> events, std::optional<std::string> fixation = std::nullopt)
      : events_(std::move(events)), fixation_(std::move(fixation)) {
    require(!events_.empty(), ErrorKind::invalid_argument, "no events");
    for (const auto& e : events_) {
      require(std::isfinite(e.onset) && e.onset >= 0.0, ErrorKind::invalid_argument, "negative event onset");
      require(std::isfinite(e.duration) && e.duration > 0.0, ErrorKind::invalid_argument,
              "event duration must be positive");
      require(!e.condition.empty(), ErrorKind::invalid_argument, "event without condition");
      conditions_.insert(e.condition);
    }
  }

  const std::vector<Event>& events() const noexcept { return events_; }
  const std::set<std::string>& conditions() const noexcept { return conditions_; }
  const std::optional<std::string>& fixation() const noexcept { return fixation_; }
  bool has_condition(const std::string& c) const { return conditions_.count(c) != 0; }

  /// Onsets must fall inside the acquisition window of the paired series.
  void validate_against(std::size_t timepoints, double tr) const {
    const double span = static_cast<double>(timepoints) * tr;
    for (const auto& e : events_)
      require(e.onset < span, ErrorKind::invalid_argument,
              "event onset " + std::to_string(e.onset) + " s outside acquisition window");
  }

 private:
  std::vector<Event> events_;
  std::set<std::string> conditions_;
  std::optional<std::string> fixation_;
};

/// Nonnegative per-timepoint weights for one condition, normalized to unit sum.
class WeightVector {
 public:
  WeightVector(Vector rho, std::string condition) : rho_(std::move(rho)), condition_(std::move(condition)) {
    require(rho_.size() >= 2, ErrorKind::invalid_argument, "weight vector too short");
    require(rho_.allFinite(), ErrorKind::non_finite, "weight vector");
    require((rho_.array() >= 0.0).all(), ErrorKind::invalid_argument, "negative weight");
    require((rho_.array() > 0.0).any(), ErrorKind::empty_condition, condition_);
  }

  const Vector& rho() const noexcept { return rho_; }
  const std::string& condition() const noexcept { return condition_; }
  std::size_t size() const noexcept { return static_cast<std::size_t>(rho_.size()); }

 private:
  Vector rho_;
  std::string condition_;
};

// ---------------------------------------------------------------------------
// Connectivity

enum class MatrixKind { raw, baseline_differenced, weighted_average };

constexpr std::string_view to_string(MatrixKind k) {
  switch (k) {
    case MatrixKind::raw: return "raw";
    case MatrixKind::baseline_differenced: return "baseline_differenced";
    case MatrixKind::weighted_average: return "weighted_average";
  }
  return "raw";
}

inline MatrixKind parse_matrix_kind(std::string_view s) {
  if (s == "raw") return MatrixKind::raw;
  if (s == "baseline_differenced") return MatrixKind::baseline_differenced;
  if (s == "weighted_average") return MatrixKind::weighted_average;
  throw Error(ErrorKind::parse_error, "unknown matrix kind '" + std::string(s) + "'");
}

class ConnectivityMatrix {
 public:
  ConnectivityMatrix(Matrix values, std::vector<std::string> roi_labels, std::string participant,
                     std::string condition, MatrixKind kind)
      : values_(std::move(values)),
        labels_(std::move(roi_labels)),
        participant_(std::move(participant)),
        condition_(std::move(condition)),
        kind_(kind) {
    require(values_.rows() == values_.cols() && values_.rows() >= 2, ErrorKind::invalid_argument,
            "connectivity matrix must be square with N >= 2");
    require(static_cast<Eigen::Index>(labels_.size()) == values_.rows(), ErrorKind::invalid_argument,
            "label count does not match matrix size");
    detail::check_labels(labels_);
    require(detail::all_finite(values_), ErrorKind::non_finite, "connectivity matrix");
    require(detail::max_asymmetry(values_) <= kSymmetryTolerance, ErrorKind::invalid_argument,
            "connectivity matrix is not symmetric");
    if (kind_ == MatrixKind::raw) {
      for (Eigen::Index i = 0; i < values_.rows(); ++i) {
        require(values_(i, i) == 1.0, ErrorKind::invalid_argument, "raw matrix diagonal must be 1");
        for (Eigen::Index j = 0; j < values_.cols(); ++j)
          require(i == j || std::abs(values_(i, j)) <= 1.0, ErrorKind::invalid_argument,
                  "raw correlation outside [-1, 1]");
      }
    }
  }

  const Matrix& values() const noexcept { return values_; }
  const std::vector<std::string>& labels() const noexcept { return labels_; }
  const std::string& participant() const noexcept { return participant_; }
  const std::string& condition() const noexcept { return condition_; }
  MatrixKind kind() const noexcept { return kind_; }
  std::size_t size() const noexcept { return static_cast<std::size_t>(values_.rows()); }

 private:
  Matrix values_;
  std::vector<std::string> labels_;
  std::string participant_;
  std::string condition_;
  MatrixKind kind_;
};

enum class Sign { positive, negative };

constexpr std::string_view to_string(Sign s) { return s == Sign::positive ? "positive" : "negative"; }

inline Sign parse_sign(std::string_view s) {
  if (s == "positive" || s == "pos" || s == "+") return Sign::positive;
  if (s == "negative" || s == "neg" || s == "-") return Sign::negative;
  throw Error(ErrorKind::parse_error, "unknown sign '" + std::string(s) + "'");
}

struct Edge {
  std::size_t i = 0;  // i < j
  std::size_t j = 0;
  double weight = 0.0;

  friend bool operator==(const Edge&, const Edge&) = default;
};

/// Sparse undirected network: upper-triangle edge list with positive weights.
class ThresholdedNetwork {
 public:
  struct Meta {
    Sign sign = Sign::positive;
    std::optional<double> percentile;
    bool binarized = false;
    std::string participant;
    std::string condition;
  };

  ThresholdedNetwork(std::size_t n, std::vector<Edge> edges, Meta meta, std::vector<std::string> labels = {})
      : n_(n), edges_(std::move(edges)), meta_(std::move(meta)), labels_(std::move(labels)) {
    require(n_ >= 2, ErrorKind::invalid_argument, "network needs at least 2 nodes");
    if (labels_.empty())
      for (std::size_t k = 0; k < n_; ++k) labels_.push_back("n" + std::to_string(k));
    require(labels_.size() == n_, ErrorKind::invalid_argument, "label count does not match node count");
    detail::check_labels(labels_);
    if (meta_.percentile)
      require(*meta_.percentile > 0.0 && *meta_.percentile < 1.0, ErrorKind::invalid_argument,
              "percentile must lie in (0, 1)");
    for (auto& e : edges_) {
      if (e.i > e.j) std::swap(e.i, e.j);
      require(e.i != e.j, ErrorKind::invalid_argument, "self loop");
      require(e.j < n_, ErrorKind::invalid_argument, "edge endpoint out of range");
      require(std::isfinite(e.weight) && e.weight > 0.0, ErrorKind::invalid_argument, "edge weight must be > 0");
      if (meta_.binarized) e.weight = 1.0;
    }
    std::sort(edges_.begin(), edges_.end(),
              [](const Edge& a, const Edge& b) { return std::pair(a.i, a.j) < std::pair(b.i, b.j); });
    for (std::size_t k = 1; k < edges_.size(); ++k)
      require(edges_[k - 1].i != edges_[k].i || edges_[k - 1].j != edges_[k].j, ErrorKind::invalid_argument,
              "duplicate edge");
  }

  std::size_t nodes() const noexcept { return n_; }
  const std::vector<Edge>& edges() const noexcept { return edges_; }
  const Meta& meta() const noexcept { return meta_; }
  const std::vector<std::string>& labels() const noexcept { return labels_; }

  /// Symmetric dense adjacency with zero diagonal.
  Matrix dense() const {
    Matrix c = Matrix::Zero(static_cast<Eigen::Index>(n_), static_cast<Eigen::Index>(n_));
    for (const auto& e : edges_) {
      c(static_cast<Eigen::Index>(e.i), static_cast<Eigen::Index>(e.j)) = e.weight;
      c(static_cast<Eigen::Index>(e.j), static_cast<Eigen::Index>(e.i)) = e.weight;
    }
    return c;
  }

  double mean_weight() const {
    if (edges_.empty()) return 0.0;
    double s = 0.0;
    for (const auto& e : edges_) s += e.weight;
    return s / static_cast<double>(edges_.size());
  }

 private:
  std::size_t n_;
  std::vector<Edge> edges_;
  Meta meta_;
  std::vector<std::string> labels_;
};

// ---------------------------------------------------------------------------
// Dynamical simplex evolution state

/// n point masses in (n-1)-dimensional space.
class SimplexState {
 public:
  SimplexState(Matrix positions, std::size_t step_index = 0, double tau = 0.0)
      : positions_(std::move(positions)), step_(step_index), tau_(tau) {
    require(positions_.rows() >= 2 && positions_.cols() == positions_.rows() - 1, ErrorKind::invalid_argument,
            "simplex state must be n x (n-1)");
    require(positions_.allFinite(), ErrorKind::non_finite, "node positions");
    require(tau_ >= 0.0, ErrorKind::invalid_argument, "negative pseudo-time");
  }

  const Matrix& positions() const noexcept { return positions_; }
  std::size_t step_index() const noexcept { return step_; }
  double tau() const noexcept { return tau_; }
  std::size_t nodes() const noexcept { return static_cast<std::size_t>(positions_.rows()); }

 private:
  Matrix positions_;
  std::size_t step_;
  double tau_;
};

class DistanceMatrix {
 public:
  explicit DistanceMatrix(Matrix d) : d_(std::move(d)) {
    require(d_.rows() == d_.cols() && d_.rows() >= 2, ErrorKind::invalid_argument, "distance matrix must be square");
    require(d_.allFinite(), ErrorKind::non_finite, "distance matrix");
    require((d_.array() >= 0.0).all(), ErrorKind::invalid_argument, "negative distance");
    require(d_.diagonal().isZero(0.0), ErrorKind::invalid_argument, "distance diagonal must be zero");
    require(detail::max_asymmetry(d_) <= 1e-9, ErrorKind::invalid_argument, "distance matrix is not symmetric");
  }

  const Matrix& values() const noexcept { return d_; }
  double operator()(std::size_t i, std::size_t j) const {
    return d_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  }
  std::size_t size() const noexcept { return static_cast<std::size_t>(d_.rows()); }

 private:
  Matrix d_;
};

struct TracePoint {
  std::size_t step = 0;
  double value = 0.0;

  friend bool operator==(const TracePoint&, const TracePoint&) = default;
};

enum class StopStatus { extremum, fixed_point, no_extremum };

constexpr std::string_view to_string(StopStatus s) {
  switch (s) {
    case StopStatus::extremum: return "extremum";
    case StopStatus::fixed_point: return "fixed_point";
    case StopStatus::no_extremum: return "no_extremum";
  }
  return "extremum";
}

inline StopStatus parse_stop_status(std::string_view s) {
  if (s == "extremum") return StopStatus::extremum;
  if (s == "fixed_point") return StopStatus::fixed_point;
  if (s == "no_extremum") return StopStatus::no_extremum;
  throw Error(ErrorKind::parse_error, "unknown stop status '" + std::string(s) + "'");
}

/// Node groups extracted from an evolved state. Clusters are sorted members,
/// ordered largest first; clusters().front() is the primary cluster.
class ClusterSet {
 public:
  ClusterSet(std::size_t n, std::vector<NodeSet> clusters, double epsilon, std::vector<TracePoint> entropy_trace = {},
             std::size_t stop_step = 0, StopStatus status = StopStatus::extremum)
      : n_(n),
        clusters_(std::move(clusters)),
        epsilon_(epsilon),
        trace_(std::move(entropy_trace)),
        stop_step_(stop_step),
        status_(status) {
    require(epsilon_ > 0.0, ErrorKind::invalid_argument, "epsilon must be positive");
    std::vector<bool> used(n_, false);
    for (auto& c : clusters_) {
      require(c.size() >= 2, ErrorKind::invalid_argument, "cluster with fewer than 2 nodes");
      std::sort(c.begin(), c.end());
      for (auto v : c) {
        require(v < n_, ErrorKind::invalid_argument, "cluster node out of range");
        require(!used[v], ErrorKind::invalid_argument, "clusters overlap");
        used[v] = true;
      }
    }
    for (std::size_t v = 0; v < n_; ++v)
      if (!used[v]) singletons_.push_back(v);
  }

  std::size_t nodes() const noexcept { return n_; }
  const std::vector<NodeSet>& clusters() const noexcept { return clusters_; }
  const NodeSet& singletons() const noexcept { return singletons_; }
  double epsilon() const noexcept { return epsilon_; }
  const std::vector<TracePoint>& entropy_trace() const noexcept { return trace_; }
  std::size_t stop_step() const noexcept { return stop_step_; }
  StopStatus status() const noexcept { return status_; }

  const NodeSet* primary() const noexcept { return clusters_.empty() ? nullptr : &clusters_.front(); }

  /// Cluster id per node, -1 for singletons.
  std::vector<int> membership() const {
    std::vector<int> id(n_, -1);
    for (std::size_t c = 0; c < clusters_.size(); ++c)
      for (auto v : clusters_[c]) id[v] = static_cast<int>(c);
    return id;
  }

 private:
  std::size_t n_;
  std::vector<NodeSet> clusters_;
  NodeSet singletons_;
  double epsilon_;
  std::vector<TracePoint> trace_;
  std::size_t stop_step_;
  StopStatus status_;
};

// ---------------------------------------------------------------------------
// Multi-participant data

/// participant -> condition -> matrix, with the two classified conditions.
class ParticipantSet {
 public:
  using ByCondition = std::map<std::string, ConnectivityMatrix>;

  ParticipantSet(std::map<std::string, ByCondition> entries, std::string condition_a, std::string condition_c)
      : entries_(std::move(entries)), a_(std::move(condition_a)), c_(std::move(condition_c)) {
    require(a_ != c_, ErrorKind::invalid_argument, "classified conditions must differ");
    require(!entries_.empty(), ErrorKind::invalid_argument, "no participants");
    const std::vector<std::string>* labels = nullptr;
    for (const auto& [pid, by_cond] : entries_) {
      for (const auto* cond : {&a_, &c_}) {
        auto it = by_cond.find(*cond);
        require(it != by_cond.end(), ErrorKind::unknown_condition,
                "participant '" + pid + "' lacks condition '" + *cond + "'");
        if (labels == nullptr) labels = &it->second.labels();
        require(it->second.labels() == *labels, ErrorKind::label_mismatch,
                "participant '" + pid + "' ROI labels differ");
      }
    }
  }

  const std::map<std::string, ByCondition>& entries() const noexcept { return entries_; }
  const std::string& condition_a() const noexcept { return a_; }
  const std::string& condition_c() const noexcept { return c_; }
  std::size_t participants() const noexcept { return entries_.size(); }

  std::vector<std::string> participant_ids() const {
    std::vector<std::string> ids;
    for (const auto& [pid, _] : entries_) ids.push_back(pid);
    return ids;
  }

  const ConnectivityMatrix& at(const std::string& participant, const std::string& condition) const {
    auto p = entries_.find(participant);
    require(p != entries_.end(), ErrorKind::invalid_argument, "unknown participant '" + participant + "'");
    auto c = p->second.find(condition);
    require(c != p->second.end(), ErrorKind::unknown_condition, condition);
    return c->second;
  }

  const std::vector<std::string>& labels() const { return entries_.begin()->second.at(a_).labels(); }

  ParticipantSet without(const std::string& participant) const {
    auto copy = entries_;
    copy.erase(participant);
    return ParticipantSet(std::move(copy), a_, c_);
  }

 private:
  std::map<std::string, ByCondition> entries_;
  std::string a_;
  std::string c_;
};

// ---------------------------------------------------------------------------
// Classification output

enum class FeatureMode { dse_union, all_elements, thresholded_elements };

constexpr std::string_view to_string(FeatureMode m) {
  switch (m) {
    case FeatureMode::dse_union: return "dse_union";
    case FeatureMode::all_elements: return "all_elements";
    case FeatureMode::thresholded_elements: return "thresholded_elements";
  }
  return "dse_union";
}

inline FeatureMode parse_feature_mode(std::string_view s) {
  if (s == "dse_union") return FeatureMode::dse_union;
  if (s == "all_elements") return FeatureMode::all_elements;
  if (s == "thresholded_elements") return FeatureMode::thresholded_elements;
  throw Error(ErrorKind::parse_error, "unknown feature mode '" + std::string(s) + "'");
}

struct ThresholdSpec {
  Sign sign = Sign::positive;
  double percentile = 0.95;

  friend bool operator==(const ThresholdSpec&, const ThresholdSpec&) = default;
};

struct FoldRecord {
  std::string held_out;
  // Label assigned to the held-out participant's condition-A and condition-C
  // matrix respectively.
  std::string label_for_a;
  std::string label_for_c;
  double score_true_pairing = 0.0;     // beta(A) + beta(C) for the correct pairing
  double score_swapped_pairing = 0.0;  // the alternative pairing
  bool ambiguous = false;
  bool correct = false;
  std::size_t feature_count = 0;
  std::optional<std::string> error;
};

struct ClassificationReport {
  std::vector<FoldRecord> folds;
  double accuracy = 0.0;
  std::vector<double> permutation_null;
  double p_value = 1.0;
  std::size_t n_perm = 0;
  std::uint64_t seed = 0;
  std::optional<ThresholdSpec> threshold;
  FeatureMode mode = FeatureMode::dse_union;
  std::size_t feature_count = 0;  // size of the union of all fold feature sets
  bool complete = true;           // false when any fold recorded an error
};

/// Add-one permutation p-value; never exactly zero.
inline double permutation_p_value(double observed, const std::vector<double>& null) {
  std::size_t at_least = 0;
  for (double v : null)
    if (v >= observed) ++at_least;
  return (static_cast<double>(at_least) + 1.0) / (static_cast<double>(null.size()) + 1.0);
}

}  // namespace fcnet
