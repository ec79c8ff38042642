#pragma once

// Scalar network descriptors: edge density, the participant-level density
// sweep across thresholds, and partition agreement.

#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fcnet/connectivity.hpp"
#include "fcnet/detail/parallel.hpp"
#include "fcnet/dse.hpp"

namespace fcnet {

/// Present edges over possible edges, within `subset` when given.
inline double density(const ThresholdedNetwork& net, const std::optional<NodeSet>& subset = std::nullopt) {
  if (!subset) return static_cast<double>(net.edges().size()) / static_cast<double>(upper_triangle_size(net.nodes()));
  require(subset->size() >= 2, ErrorKind::invalid_argument, "density subset needs at least 2 nodes");
  std::vector<bool> in(net.nodes(), false);
  for (auto v : *subset) {
    require(v < net.nodes(), ErrorKind::invalid_argument, "subset node out of range");
    require(!in[v], ErrorKind::invalid_argument, "duplicate subset node");
    in[v] = true;
  }
  std::size_t present = 0;
  for (const auto& e : net.edges())
    if (in[e.i] && in[e.j]) ++present;
  return static_cast<double>(present) / static_cast<double>(upper_triangle_size(subset->size()));
}

struct DensityRow {
  std::string condition;
  Sign sign = Sign::positive;
  double percentile = 0.0;
  double mean_density = 0.0;
  double se = 0.0;   // sample sd (N-1) / sqrt(n_ok)
  std::size_t n_ok = 0;
};

struct DensitySweepOptions {
  /// Density of the primary extracted cluster (true) or the whole graph.
  bool cluster_subset = true;
  bool binarize = false;
  std::size_t jobs = 1;
};

namespace detail {

inline std::pair<double, double> mean_and_se(const std::vector<double>& xs) {
  if (xs.empty()) return {std::nan(""), std::nan("")};
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  if (xs.size() < 2) return {mean, std::nan("")};
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  return {mean, sd / std::sqrt(static_cast<double>(xs.size()))};
}

}  // namespace detail

/// One row per (condition, percentile): each participant's matrix is
/// thresholded and clustered; failing cells are skipped and show up as a
/// smaller n_ok rather than aborting the sweep.
inline std::vector<DensityRow> density_sweep(const ParticipantSet& participants, const std::vector<double>& percentiles,
                                             Sign sign, const DseParams& dse = {},
                                             const DensitySweepOptions& opts = {}) {
  require(participants.participants() >= 2, ErrorKind::invalid_argument, "density sweep needs >= 2 participants");
  const auto ids = participants.participant_ids();
  const std::vector<std::string> conditions{participants.condition_a(), participants.condition_c()};

  struct Cell {
    std::size_t condition, percentile, participant;
  };
  std::vector<Cell> cells;
  for (std::size_t c = 0; c < conditions.size(); ++c)
    for (std::size_t q = 0; q < percentiles.size(); ++q)
      for (std::size_t p = 0; p < ids.size(); ++p) cells.push_back({c, q, p});

  std::vector<std::optional<double>> value(cells.size());
  parallel_for(cells.size(), opts.jobs, [&](std::size_t k) {
    const auto& cell = cells[k];
    try {
      const auto& mat = participants.at(ids[cell.participant], conditions[cell.condition]);
      const auto net = percentile_threshold(mat, percentiles[cell.percentile], sign, opts.binarize);
      if (!opts.cluster_subset) {
        value[k] = density(net);
        return;
      }
      const auto result = run_dse(net, dse);
      if (const auto* primary = result.clusters.primary()) value[k] = density(net, *primary);
    } catch (const Error&) {
      // recorded as a missing entry
    }
  });

  std::vector<DensityRow> rows;
  for (std::size_t c = 0; c < conditions.size(); ++c)
    for (std::size_t q = 0; q < percentiles.size(); ++q) {
      std::vector<double> ok;
      for (std::size_t k = 0; k < cells.size(); ++k)
        if (cells[k].condition == c && cells[k].percentile == q && value[k]) ok.push_back(*value[k]);
      const auto [mean, se] = detail::mean_and_se(ok);
      rows.push_back({conditions[c], sign, percentiles[q], mean, se, ok.size()});
    }
  return rows;
}

/// Adjusted Rand Index between two labelings. Negative labels mark
/// unclustered nodes, each treated as its own singleton group.
inline double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b) {
  require(a.size() == b.size() && a.size() >= 2, ErrorKind::invalid_argument, "labelings must match in length");
  const std::size_t n = a.size();
  auto canonical = [n](const std::vector<int>& x) {
    std::vector<long> out(n);
    long next_singleton = -1;
    for (std::size_t i = 0; i < n; ++i) out[i] = x[i] >= 0 ? x[i] : next_singleton--;
    return out;
  };
  const auto ca = canonical(a), cb = canonical(b);
  std::map<std::pair<long, long>, double> joint;
  std::map<long, double> rows, cols;
  for (std::size_t i = 0; i < n; ++i) {
    joint[{ca[i], cb[i]}] += 1.0;
    rows[ca[i]] += 1.0;
    cols[cb[i]] += 1.0;
  }
  auto pairs = [](double k) { return k * (k - 1.0) / 2.0; };
  double index = 0.0, sum_a = 0.0, sum_b = 0.0;
  for (const auto& [_, k] : joint) index += pairs(k);
  for (const auto& [_, k] : rows) sum_a += pairs(k);
  for (const auto& [_, k] : cols) sum_b += pairs(k);
  const double expected = sum_a * sum_b / pairs(static_cast<double>(n));
  const double max_index = 0.5 * (sum_a + sum_b);
  if (max_index == expected) return 1.0;  // both partitions trivial and identical in shape
  return (index - expected) / (max_index - expected);
}

}  // namespace fcnet
