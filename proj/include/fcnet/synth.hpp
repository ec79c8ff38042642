#pragma once

// Synthetic block-design datasets and planted-partition graphs with known
// ground truth.
//
// Random stream order for generate_dataset, per participant p seeded from
// seed_seq{seed_lo, seed_hi, p}:
//   1. one normal draw per planted cluster (coupling perturbation), in spec order
//   2. T normal draws per planted cluster (latent signal), in spec order
//   3. T x N normal draws of ROI noise, time-major

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "fcnet/connectivity.hpp"
#include "fcnet/detail/parallel.hpp"
#include "fcnet/model.hpp"

namespace fcnet {

struct PlantedCluster {
  std::string condition;
  NodeSet nodes;
  double coupling = 0.8;  // in [0, 1]
};

struct BlockSchedule {
  double event_duration = 3.0;
  double rest_duration = 7.0;  // gap after each event
  std::size_t events_per_condition = 48;
  std::size_t events_per_block = 8;  // consecutive events of one condition
  std::size_t fixation_blocks = 6;
  double fixation_duration = 24.0;
  double lead_in = 0.0;
  double tail = 16.0;  // recorded time after the last event
};

struct SynthSpec {
  std::size_t n_participants = 12;
  std::size_t n_rois = 40;
  std::size_t timepoints = 0;  // 0: just long enough for the schedule
  double tr = 2.0;
  std::string condition_a = "A";
  std::string condition_c = "C";
  std::string fixation = "fixation";
  BlockSchedule schedule;
  std::vector<PlantedCluster> clusters;
  double noise_sigma = 1.0;
  double participant_variability = 0.1;
  std::uint64_t seed = 0;
  HrfParams hrf;
};

/// Per-participant realized couplings, indexed like SynthSpec::clusters.
struct GroundTruth {
  std::vector<PlantedCluster> clusters;
  std::vector<std::string> participants;
  std::vector<std::vector<double>> coupling;  // [participant][cluster]

  /// Cluster id per ROI for one condition, -1 outside every planted cluster.
  std::vector<int> membership(const std::string& condition, std::size_t n_rois) const {
    std::vector<int> id(n_rois, -1);
    int next = 0;
    for (const auto& c : clusters) {
      if (c.condition != condition) continue;
      for (auto v : c.nodes) id[v] = next;
      ++next;
    }
    return id;
  }
};

struct SynthDataset {
  std::vector<RoiTimeSeries> series;
  EventSchedule events;
  GroundTruth truth;
};

inline void validate(const SynthSpec& s) {
  require(s.n_participants >= 1, ErrorKind::invalid_argument, "need at least one participant");
  require(s.n_rois >= 2, ErrorKind::invalid_argument, "need at least 2 ROIs");
  require(s.tr > 0.0, ErrorKind::invalid_argument, "tr must be positive");
  require(s.condition_a != s.condition_c && !s.condition_a.empty() && !s.condition_c.empty(),
          ErrorKind::invalid_argument, "two distinct condition names required");
  require(s.fixation != s.condition_a && s.fixation != s.condition_c, ErrorKind::invalid_argument,
          "fixation name collides with a condition");
  require(s.noise_sigma >= 0.0 && s.participant_variability >= 0.0, ErrorKind::invalid_argument,
          "noise and variability must be nonnegative");
  const auto& b = s.schedule;
  require(b.event_duration > 0.0 && b.rest_duration >= 0.0 && b.events_per_condition >= 1 &&
              b.events_per_block >= 1 && b.fixation_duration >= 0.0 && b.lead_in >= 0.0 && b.tail >= 0.0,
          ErrorKind::invalid_argument, "invalid block schedule");
  for (const auto& c : s.clusters) {
    require(c.condition == s.condition_a || c.condition == s.condition_c, ErrorKind::unknown_condition, c.condition);
    require(c.nodes.size() >= 2, ErrorKind::invalid_argument, "planted cluster needs >= 2 nodes");
    require(c.coupling >= 0.0 && c.coupling <= 1.0, ErrorKind::invalid_argument, "coupling must lie in [0, 1]");
    NodeSet sorted = c.nodes;
    std::sort(sorted.begin(), sorted.end());
    require(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end(), ErrorKind::invalid_argument,
            "duplicate node in planted cluster");
    require(sorted.back() < s.n_rois, ErrorKind::invalid_argument, "planted node out of range");
  }
}

/// Alternating condition blocks with fixation periods spread evenly among them.
/// Returns the schedule and the recorded duration in seconds.
inline std::pair<EventSchedule, double> block_schedule(const SynthSpec& s) {
  const auto& b = s.schedule;
  std::vector<Event> events;
  double t = b.lead_in;
  const std::size_t per_condition_blocks = (b.events_per_condition + b.events_per_block - 1) / b.events_per_block;
  const std::size_t blocks = 2 * per_condition_blocks;
  std::size_t emitted[2] = {0, 0};
  for (std::size_t k = 0; k < blocks; ++k) {
    const std::size_t which = k % 2;
    const std::string& cond = which == 0 ? s.condition_a : s.condition_c;
    for (std::size_t e = 0; e < b.events_per_block && emitted[which] < b.events_per_condition; ++e, ++emitted[which]) {
      events.push_back({t, b.event_duration, cond});
      t += b.event_duration + b.rest_duration;
    }
    const std::size_t f = b.fixation_blocks;
    if (f > 0 && b.fixation_duration > 0.0 && (k + 1) * f / blocks > k * f / blocks) {
      events.push_back({t, b.fixation_duration, s.fixation});
      t += b.fixation_duration;
    }
  }
  const bool has_fixation = b.fixation_blocks > 0 && b.fixation_duration > 0.0;
  return {EventSchedule(std::move(events), has_fixation ? std::optional<std::string>(s.fixation) : std::nullopt),
          t + b.tail};
}

inline std::size_t schedule_timepoints(const SynthSpec& s) {
  const auto [events, duration] = block_schedule(s);
  if (s.timepoints == 0) return static_cast<std::size_t>(std::ceil(duration / s.tr - 1e-9));
  double last_end = 0.0;
  for (const auto& e : events.events()) last_end = std::max(last_end, e.onset + e.duration);
  require(last_end <= static_cast<double>(s.timepoints) * s.tr + 1e-9, ErrorKind::invalid_argument,
          "infeasible schedule: events extend past T * tr");
  return s.timepoints;
}

inline std::string participant_id(std::size_t index, std::size_t count) {
  const std::size_t width = std::max<std::size_t>(2, std::to_string(count).size());
  std::string digits = std::to_string(index + 1);
  return "p" + std::string(width - digits.size(), '0') + digits;
}

inline std::vector<std::string> roi_labels(std::size_t n) {
  const std::size_t width = std::to_string(n).size();
  std::vector<std::string> out;
  for (std::size_t k = 0; k < n; ++k) {
    std::string digits = std::to_string(k);
    out.push_back("roi" + std::string(width - digits.size(), '0') + digits);
  }
  return out;
}

/// Member ROIs of a cluster carry coupling * envelope(t) * latent(t) during
/// that cluster's condition; every ROI adds white noise. The envelope is the
/// condition's HRF-convolved occupancy scaled to peak 1.
inline SynthDataset generate_dataset(const SynthSpec& s, std::size_t jobs = 1) {
  validate(s);
  const std::size_t t_count = schedule_timepoints(s);
  auto schedule = block_schedule(s).first;
  schedule.validate_against(t_count, s.tr);
  const auto kernel = hrf_kernel(s.tr, s.hrf);
  const std::span<const double> kspan(kernel.data(), static_cast<std::size_t>(kernel.size()));

  std::vector<Vector> envelope;
  for (const auto& c : s.clusters) {
    Vector rho = build_weight_vector(schedule, c.condition, t_count, s.tr, kspan).rho();
    envelope.push_back(rho / rho.maxCoeff());
  }

  const auto labels = roi_labels(s.n_rois);
  SynthDataset out{{}, schedule, GroundTruth{s.clusters, {}, {}}};
  std::vector<std::optional<RoiTimeSeries>> series(s.n_participants);
  out.truth.coupling.resize(s.n_participants);
  const auto t_len = static_cast<Eigen::Index>(t_count);
  const auto n = static_cast<Eigen::Index>(s.n_rois);

  parallel_for(s.n_participants, jobs, [&](std::size_t p) {
    std::seed_seq seq{static_cast<std::uint32_t>(s.seed), static_cast<std::uint32_t>(s.seed >> 32),
                      static_cast<std::uint32_t>(p)};
    std::mt19937_64 rng(seq);
    std::normal_distribution<double> normal(0.0, 1.0);

    auto& coupling = out.truth.coupling[p];
    for (const auto& c : s.clusters)
      coupling.push_back(std::clamp(c.coupling * (1.0 + s.participant_variability * normal(rng)), 0.0, 1.0));

    Matrix x = Matrix::Zero(t_len, n);
    for (std::size_t k = 0; k < s.clusters.size(); ++k) {
      Vector latent(t_len);
      for (Eigen::Index t = 0; t < t_len; ++t) latent(t) = normal(rng);
      const Vector drive = coupling[k] * envelope[k].cwiseProduct(latent);
      for (auto v : s.clusters[k].nodes) x.col(static_cast<Eigen::Index>(v)) += drive;
    }
    for (Eigen::Index t = 0; t < t_len; ++t)
      for (Eigen::Index i = 0; i < n; ++i) x(t, i) += s.noise_sigma * normal(rng);
    series[p].emplace(std::move(x), s.tr, labels, participant_id(p, s.n_participants));
  });

  for (std::size_t p = 0; p < s.n_participants; ++p) {
    out.truth.participants.push_back(series[p]->participant());
    out.series.push_back(std::move(*series[p]));
  }
  return out;
}

struct PlantedGraph {
  ThresholdedNetwork network;
  std::vector<int> truth;  // block index per node, -1 outside every block
};

/// Unit-weight random graph: each pair i < j, in row-major order, is an edge
/// with probability p_in inside a block and p_out otherwise.
inline PlantedGraph planted_partition_graph(std::size_t n, const std::vector<NodeSet>& blocks, double p_in,
                                            double p_out, std::uint64_t seed) {
  require(0.0 <= p_out && p_out <= p_in && p_in <= 1.0, ErrorKind::invalid_argument, "need 0 <= p_out <= p_in <= 1");
  std::vector<int> truth(n, -1);
  for (std::size_t b = 0; b < blocks.size(); ++b)
    for (auto v : blocks[b]) {
      require(v < n, ErrorKind::invalid_argument, "block node out of range");
      require(truth[v] < 0, ErrorKind::invalid_argument, "blocks overlap");
      truth[v] = static_cast<int>(b);
    }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Edge> edges;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const bool same = truth[i] >= 0 && truth[i] == truth[j];
      if (unit(rng) < (same ? p_in : p_out)) edges.push_back({i, j, 1.0});
    }
  ThresholdedNetwork::Meta meta;
  meta.binarized = true;
  return {ThresholdedNetwork(n, std::move(edges), std::move(meta)), std::move(truth)};
}

/// Consecutive equal blocks covering 0..n-1.
inline std::vector<NodeSet> equal_blocks(std::size_t n, std::size_t count) {
  require(count >= 1 && count <= n, ErrorKind::invalid_argument, "invalid block count");
  std::vector<NodeSet> out(count);
  for (std::size_t v = 0; v < n; ++v) out[v * count / n].push_back(v);
  return out;
}

}  // namespace fcnet
