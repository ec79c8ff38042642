#pragma once

// Condition-specific functional connectivity: HRF-convolved condition weights,
// weighted correlation over all ROI pairs, fixation baseline differencing and
// percentile thresholding.

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "fcnet/model.hpp"

namespace fcnet {

/// Double-gamma hemodynamic response. Delays and dispersions in seconds.
struct HrfParams {
  double peak_delay = 6.0;
  double undershoot_delay = 16.0;
  double peak_dispersion = 1.0;
  double undershoot_dispersion = 1.0;
  double undershoot_ratio = 6.0;
  double kernel_length = 32.0;
};

struct CorrelationOptions {
  /// Use the uncentered weighted second moment (sum rho x y) as covariance.
  bool raw_cov = false;
};

namespace detail {

inline double gamma_density(double t, double shape, double scale) {
  if (t <= 0.0) return 0.0;
  return std::exp((shape - 1.0) * std::log(t) - t / scale - std::lgamma(shape) - shape * std::log(scale));
}

}  // namespace detail

inline double double_gamma_hrf(double t, const HrfParams& p) {
  return detail::gamma_density(t, p.peak_delay / p.peak_dispersion, p.peak_dispersion) -
         detail::gamma_density(t, p.undershoot_delay / p.undershoot_dispersion, p.undershoot_dispersion) /
             p.undershoot_ratio;
}

/// HRF sampled at 0, tr, 2 tr, ... up to kernel_length.
inline Vector hrf_kernel(double tr, const HrfParams& p = {}) {
  require(tr > 0.0, ErrorKind::invalid_argument, "tr must be positive");
  require(p.peak_delay > 0 && p.undershoot_delay > 0 && p.peak_dispersion > 0 && p.undershoot_dispersion > 0 &&
              p.undershoot_ratio > 0 && p.kernel_length > 0,
          ErrorKind::invalid_argument, "HRF parameters must be positive");
  const auto len = static_cast<Eigen::Index>(std::floor(p.kernel_length / tr)) + 1;
  Vector k(len);
  for (Eigen::Index i = 0; i < len; ++i) k(i) = double_gamma_hrf(static_cast<double>(i) * tr, p);
  return k;
}

/// Stimulus occupancy per sample: the fraction of [k tr, (k+1) tr) covered by
/// events of the condition.
inline Vector event_boxcar(const EventSchedule& events, const std::string& condition, std::size_t timepoints,
                           double tr) {
  require(events.has_condition(condition), ErrorKind::unknown_condition, condition);
  Vector box = Vector::Zero(static_cast<Eigen::Index>(timepoints));
  for (const auto& e : events.events()) {
    if (e.condition != condition) continue;
    const double end = e.onset + e.duration;
    const auto first = static_cast<std::size_t>(std::floor(e.onset / tr));
    for (std::size_t k = first; k < timepoints; ++k) {
      const double lo = static_cast<double>(k) * tr;
      const double hi = lo + tr;
      if (lo >= end) break;
      const double overlap = std::min(hi, end) - std::max(lo, e.onset);
      if (overlap > 0.0) box(static_cast<Eigen::Index>(k)) += overlap / tr;
    }
  }
  return box;
}

/// Condition weights from an explicit sampled kernel: occupancy convolved with
/// the kernel, truncated to T, absolute value, normalized to unit sum.
inline WeightVector build_weight_vector(const EventSchedule& events, const std::string& condition,
                                        std::size_t timepoints, double tr, std::span<const double> kernel) {
  require(timepoints >= 2, ErrorKind::invalid_argument, "need at least 2 timepoints");
  require(!kernel.empty(), ErrorKind::invalid_argument, "empty kernel");
  const Vector box = event_boxcar(events, condition, timepoints, tr);
  Vector rho = Vector::Zero(box.size());
  // Superpose one shifted kernel per stimulated sample.
  for (Eigen::Index s = 0; s < box.size(); ++s) {
    if (box(s) == 0.0) continue;
    const auto reach = std::min<Eigen::Index>(static_cast<Eigen::Index>(kernel.size()), box.size() - s);
    for (Eigen::Index k = 0; k < reach; ++k) rho(s + k) += box(s) * kernel[static_cast<std::size_t>(k)];
  }
  rho = rho.cwiseAbs();
  const double total = rho.sum();
  require(total > 0.0, ErrorKind::empty_condition, condition);
  rho /= total;
  return WeightVector(std::move(rho), condition);
}

inline WeightVector build_weight_vector(const EventSchedule& events, const std::string& condition,
                                        std::size_t timepoints, double tr, const HrfParams& hrf = {}) {
  const Vector kernel = hrf_kernel(tr, hrf);
  return build_weight_vector(events, condition, timepoints, tr,
                             std::span<const double>(kernel.data(), static_cast<std::size_t>(kernel.size())));
}

namespace detail {

// Weighted-mean-removed copy of x (or x itself for raw covariance), plus the
// weighted second moment of the result.
struct PreparedSeries {
  Vector centered;
  double variance = 0.0;
  bool degenerate = false;
};

inline PreparedSeries prepare_series(std::span<const double> x, const Vector& rho, CorrelationOptions opts) {
  const auto m = static_cast<Eigen::Index>(x.size());
  PreparedSeries out;
  out.centered.resize(m);
  double wsum = 0.0, wx = 0.0, second = 0.0;
  for (Eigen::Index t = 0; t < m; ++t) {
    wsum += rho(t);
    wx += rho(t) * x[static_cast<std::size_t>(t)];
    second += rho(t) * x[static_cast<std::size_t>(t)] * x[static_cast<std::size_t>(t)];
  }
  const double mean = opts.raw_cov ? 0.0 : wx / wsum;
  for (Eigen::Index t = 0; t < m; ++t) out.centered(t) = x[static_cast<std::size_t>(t)] - mean;
  for (Eigen::Index t = 0; t < m; ++t) out.variance += rho(t) * out.centered(t) * out.centered(t);
  // A constant series leaves only rounding residue after centering.
  out.degenerate = !(out.variance > 1e-20 * second) || !std::isfinite(out.variance);
  return out;
}

inline double prepared_correlation(const PreparedSeries& a, const PreparedSeries& b, const Vector& rho) {
  // rho * (a * b) is symmetric in a and b, so swapping the pair is exact.
  double cov = 0.0;
  for (Eigen::Index t = 0; t < rho.size(); ++t) cov += rho(t) * (a.centered(t) * b.centered(t));
  return std::clamp(cov / std::sqrt(a.variance * b.variance), -1.0, 1.0);
}

}  // namespace detail

/// Weighted correlation c = cov_rho(x, y) / sqrt(var_rho(x) var_rho(y)).
inline double weighted_correlation(std::span<const double> x, std::span<const double> y, const WeightVector& rho,
                                   CorrelationOptions opts = {}) {
  require(x.size() == y.size() && x.size() == rho.size(), ErrorKind::invalid_argument, "length mismatch");
  const auto a = detail::prepare_series(x, rho.rho(), opts);
  const auto b = detail::prepare_series(y, rho.rho(), opts);
  require(!a.degenerate && !b.degenerate, ErrorKind::degenerate_series, "zero weighted variance");
  return detail::prepared_correlation(a, b, rho.rho());
}

inline ConnectivityMatrix condition_connectivity(const RoiTimeSeries& ts, const WeightVector& rho,
                                                 CorrelationOptions opts = {}) {
  require(rho.size() == ts.timepoints(), ErrorKind::invalid_argument, "weight vector length does not match T");
  const auto n = static_cast<Eigen::Index>(ts.rois());
  const Matrix& x = ts.values();
  std::vector<detail::PreparedSeries> cols;
  cols.reserve(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    auto col = x.col(i);
    cols.push_back(detail::prepare_series(std::span<const double>(col.data(), static_cast<std::size_t>(col.size())),
                                          rho.rho(), opts));
    require(!cols.back().degenerate, ErrorKind::degenerate_series,
            "ROI '" + ts.labels()[static_cast<std::size_t>(i)] + "' of participant '" + ts.participant() + "'");
  }
  Matrix c = Matrix::Identity(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) {
      c(i, j) = detail::prepared_correlation(cols[static_cast<std::size_t>(i)], cols[static_cast<std::size_t>(j)],
                                             rho.rho());
      c(j, i) = c(i, j);
    }
  return ConnectivityMatrix(std::move(c), ts.labels(), ts.participant(), rho.condition(), MatrixKind::raw);
}

/// cond - fixation with a zeroed diagonal.
inline ConnectivityMatrix baseline_difference(const ConnectivityMatrix& cond, const ConnectivityMatrix& fixation) {
  require(cond.labels() == fixation.labels(), ErrorKind::label_mismatch, "baseline labels differ");
  require(cond.participant() == fixation.participant(), ErrorKind::label_mismatch,
          "baseline belongs to another participant");
  Matrix d = cond.values() - fixation.values();
  d.diagonal().setZero();
  return ConnectivityMatrix(std::move(d), cond.labels(), cond.participant(), cond.condition(),
                            MatrixKind::baseline_differenced);
}

/// Removes the least-squares linear trend of each column; column means are kept.
inline RoiTimeSeries detrend(const RoiTimeSeries& ts) {
  const auto t_count = static_cast<Eigen::Index>(ts.timepoints());
  Vector t = Vector::LinSpaced(t_count, 0.0, static_cast<double>(t_count - 1));
  const double tm = t.mean();
  t.array() -= tm;
  const double tt = t.squaredNorm();
  Matrix out = ts.values();
  for (Eigen::Index j = 0; j < out.cols(); ++j) {
    const double slope = t.dot(out.col(j)) / tt;
    out.col(j).array() -= slope * t.array();
  }
  return RoiTimeSeries(std::move(out), ts.tr(), ts.labels(), ts.participant());
}

/// Keeps off-diagonal entries beyond the empirical percentile of the pooled
/// upper-triangle distribution. Positive: strictly above the order statistic
/// leaving round((1-q) M) entries above it. Negative: strictly below the one
/// leaving round(q M) entries below it, stored as magnitudes. Entries of the
/// wrong sign are never retained.
inline ThresholdedNetwork percentile_threshold(const ConnectivityMatrix& mat, double percentile, Sign sign,
                                               bool binarize = false) {
  require(percentile > 0.0 && percentile < 1.0, ErrorKind::invalid_argument, "percentile must lie in (0, 1)");
  const std::size_t n = mat.size();
  const std::size_t m = upper_triangle_size(n);
  const Matrix& v = mat.values();
  std::vector<double> sorted;
  sorted.reserve(m);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) sorted.push_back(v(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
  std::sort(sorted.begin(), sorted.end());

  const double md = static_cast<double>(m);
  const auto keep = static_cast<std::size_t>(std::llround(sign == Sign::positive ? (1.0 - percentile) * md
                                                                                 : percentile * md));
  std::vector<Edge> edges;
  if (keep > 0) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) {
        const double x = v(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
        bool retained = false;
        if (sign == Sign::positive)
          retained = x > 0.0 && (keep >= m || x > sorted[m - keep - 1]);
        else
          retained = x < 0.0 && (keep >= m || x < sorted[keep]);
        if (retained) edges.push_back({i, j, std::abs(x)});
      }
  }
  require(!edges.empty(), ErrorKind::empty_network,
          std::string(to_string(sign)) + " percentile " + std::to_string(percentile));
  ThresholdedNetwork::Meta meta{sign, percentile, binarize, mat.participant(), mat.condition()};
  return ThresholdedNetwork(n, std::move(edges), std::move(meta), mat.labels());
}

}  // namespace fcnet
