#pragma once

// Dynamical simplex evolution.
//
// Nodes start on the vertices of a regular simplex inscribed in the unit
// sphere of R^(n-1). Each pair exerts a unit-profile force along the line
// joining them: connected pairs attract with strength C_ij, disconnected pairs
// repel with strength kappa. Positions follow first-order (viscous) dynamics
// integrated by forward Euler:
//
//   r_i(tau + delta) = r_i(tau) + (delta / mu) * sum_{j != i} k_ij (r_j - r_i) / |r_j - r_i|
//
// After each step the distance-derived affinity W_ij = max(0, 1 - d_ij / (2 d0))
// is scored by its row/column mutual information; the run returns the state
// where that score peaks. Clusters are the connected components of the graph
// {(i, j) : d_ij < epsilon}.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <optional>
#include <vector>

#include "fcnet/model.hpp"

namespace fcnet {

enum class EpsilonMode { fixed, largest_gap };

struct DseParams {
  std::optional<double> delta;            // default 0.1 / sqrt(n)
  double mu = 1.0;
  std::optional<double> repulsion_kappa;  // default 0.1 * mean retained edge weight
  std::optional<std::size_t> max_steps;   // default 10 n
  std::size_t patience = 5;
  EpsilonMode epsilon_mode = EpsilonMode::largest_gap;
  std::optional<double> epsilon;  // required for EpsilonMode::fixed
};

struct ResolvedDseParams {
  double delta = 0.0;
  double mu = 1.0;
  double kappa = 0.0;
  std::size_t max_steps = 0;
  std::size_t patience = 5;
};

inline ResolvedDseParams resolve(const DseParams& p, const ThresholdedNetwork& adj) {
  const std::size_t n = adj.nodes();
  ResolvedDseParams r;
  r.delta = p.delta.value_or(0.1 / std::sqrt(static_cast<double>(n)));
  r.mu = p.mu;
  r.kappa = p.repulsion_kappa.value_or(0.1 * adj.mean_weight());
  r.max_steps = p.max_steps.value_or(10 * n);
  r.patience = p.patience;
  require(r.delta > 0.0 && std::isfinite(r.delta), ErrorKind::invalid_argument, "delta must be positive");
  require(r.mu > 0.0 && std::isfinite(r.mu), ErrorKind::invalid_argument, "mu must be positive");
  require(r.kappa >= 0.0 && std::isfinite(r.kappa), ErrorKind::invalid_argument, "repulsion kappa must be >= 0");
  require(r.max_steps > 0, ErrorKind::invalid_argument, "max_steps must be positive");
  require(r.patience > 0, ErrorKind::invalid_argument, "patience must be positive");
  return r;
}

/// Edge length of the initial simplex.
inline double simplex_edge(std::size_t n) {
  return std::sqrt(2.0 * static_cast<double>(n) / static_cast<double>(n - 1));
}

/// Regular simplex on the unit sphere of R^(n-1). Vertex i is the centred
/// basis vector e_i - 1/n expressed in the Helmert basis of the hyperplane
/// orthogonal to (1, ..., 1), rescaled to unit norm.
inline SimplexState init_simplex(std::size_t n) {
  require(n >= 2, ErrorKind::invalid_argument, "simplex needs n >= 2");
  const auto rows = static_cast<Eigen::Index>(n);
  Matrix pos = Matrix::Zero(rows, rows - 1);
  const double scale = std::sqrt(static_cast<double>(n) / static_cast<double>(n - 1));
  for (Eigen::Index k = 0; k < rows - 1; ++k) {
    const double m = static_cast<double>(k + 1);
    const double norm = std::sqrt(m * (m + 1.0));
    for (Eigen::Index i = 0; i <= k; ++i) pos(i, k) = scale / norm;
    pos(k + 1, k) = -scale * m / norm;
  }
  return SimplexState(std::move(pos));
}

namespace detail {

constexpr double kCollisionDistance = 1e-12;
constexpr double kAffinityReach = 2.0;  // in units of the initial edge length

/// Signed pair strengths: +C_ij for connected pairs, -kappa otherwise.
inline Matrix pair_coupling(const ThresholdedNetwork& adj, double kappa) {
  const auto n = static_cast<Eigen::Index>(adj.nodes());
  Matrix k = Matrix::Constant(n, n, -kappa);
  k.diagonal().setZero();
  for (const auto& e : adj.edges()) {
    k(static_cast<Eigen::Index>(e.i), static_cast<Eigen::Index>(e.j)) = e.weight;
    k(static_cast<Eigen::Index>(e.j), static_cast<Eigen::Index>(e.i)) = e.weight;
  }
  return k;
}

inline Matrix forces_from_coupling(const Matrix& pos, const Matrix& coupling) {
  const Eigen::Index n = pos.rows();
  Matrix f = Matrix::Zero(n, pos.cols());
  Eigen::RowVectorXd diff(pos.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double k = coupling(i, j);
      diff = pos.row(j) - pos.row(i);
      const double dist = diff.norm();
      if (!(dist > kCollisionDistance))
        throw Error(ErrorKind::node_collision,
                    "nodes " + std::to_string(i) + " and " + std::to_string(j) + " coincide (delta too large?)");
      if (k == 0.0) continue;
      diff *= k / dist;
      f.row(i) += diff;
      f.row(j) -= diff;
    }
  }
  return f;
}

inline double max_row_norm(const Matrix& m) {
  double best = 0.0;
  for (Eigen::Index i = 0; i < m.rows(); ++i) best = std::max(best, m.row(i).norm());
  return best;
}

}  // namespace detail

/// Net force on every node; row i is sum_j k_ij (r_j - r_i) / |r_j - r_i|.
inline Matrix compute_forces(const SimplexState& state, const ThresholdedNetwork& adj, const DseParams& params) {
  require(adj.nodes() == state.nodes(), ErrorKind::invalid_argument, "state and network sizes differ");
  const auto r = resolve(params, adj);
  return detail::forces_from_coupling(state.positions(), detail::pair_coupling(adj, r.kappa));
}

namespace detail {

inline SimplexState euler_step(const SimplexState& state, const Matrix& forces, const ResolvedDseParams& r) {
  Matrix next = state.positions() + (r.delta / r.mu) * forces;
  require(next.allFinite(), ErrorKind::non_finite, "node positions diverged");
  return SimplexState(std::move(next), state.step_index() + 1, state.tau() + r.delta);
}

}  // namespace detail

/// One synchronous forward-Euler update from the pre-step positions.
inline SimplexState step(const SimplexState& state, const ThresholdedNetwork& adj, const DseParams& params) {
  const auto r = resolve(params, adj);
  return detail::euler_step(state, compute_forces(state, adj, params), r);
}

inline DistanceMatrix mutual_distances(const SimplexState& state) {
  const Matrix& p = state.positions();
  const Eigen::Index n = p.rows();
  Matrix d = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) {
      d(i, j) = (p.row(i) - p.row(j)).norm();
      d(j, i) = d(i, j);
    }
  return DistanceMatrix(std::move(d));
}

namespace detail {

inline double total_mass(const Matrix& c) {
  require(c.rows() == c.cols(), ErrorKind::invalid_argument, "matrix must be square");
  require(c.allFinite(), ErrorKind::non_finite, "matrix");
  require((c.array() >= 0.0).all(), ErrorKind::invalid_argument, "matrix must be nonnegative");
  const double total = c.sum();
  require(total > 0.0, ErrorKind::invalid_argument, "zero total mass");
  return total;
}

inline double shannon_bits(const Vector& p) {
  double s = 0.0;
  for (Eigen::Index k = 0; k < p.size(); ++k)
    if (p(k) > 0.0) s -= p(k) * std::log2(p(k));
  return s;
}

}  // namespace detail

/// Entropy in bits of the column-mass distribution p_k = sum_i C_ik / sum C.
inline double network_entropy(const Matrix& c) {
  const double total = detail::total_mass(c);
  return detail::shannon_bits(c.colwise().sum().transpose() / total);
}

/// Mutual information in bits between the row and column marginals of C
/// normalized to unit mass: S(row) + S(column) - S(joint). Zero for
/// product-form matrices, larger for block-organized ones.
inline double mutual_information(const Matrix& c) {
  const double total = detail::total_mass(c);
  const Matrix joint = c / total;
  const double row_entropy = detail::shannon_bits(joint.rowwise().sum());
  const double col_entropy = detail::shannon_bits(joint.colwise().sum().transpose());
  double joint_entropy = 0.0;
  for (Eigen::Index i = 0; i < joint.rows(); ++i)
    for (Eigen::Index j = 0; j < joint.cols(); ++j)
      if (joint(i, j) > 0.0) joint_entropy -= joint(i, j) * std::log2(joint(i, j));
  return row_entropy + col_entropy - joint_entropy;
}

/// W_ij = max(0, 1 - d_ij / (2 d0)) with d0 the initial simplex edge; uniform
/// 1/2 off the diagonal at tau = 0.
inline Matrix distance_affinity(const DistanceMatrix& d) {
  const double reach = detail::kAffinityReach * simplex_edge(d.size());
  Matrix w = (1.0 - d.values().array() / reach).max(0.0).matrix();
  w.diagonal().setZero();
  return w;
}

/// Stopping score of a state; zero when the affinity has no mass left.
inline double organization_score(const DistanceMatrix& d) {
  const Matrix w = distance_affinity(d);
  if (!(w.sum() > 0.0)) return 0.0;
  return mutual_information(w);
}

struct EvolveResult {
  SimplexState state;  // state at stop_step
  DistanceMatrix distances;
  std::vector<TracePoint> trace;
  std::size_t stop_step = 0;
  StopStatus status = StopStatus::extremum;
};

using TraceObserver = std::function<void(const TracePoint&)>;

/// Evolves until the organization score has strictly decreased for `patience`
/// consecutive steps (or max_steps is hit) and returns the state at the
/// argmax of the recorded trace.
inline EvolveResult evolve(const ThresholdedNetwork& adj, const DseParams& params,
                           const TraceObserver& observer = {}) {
  const std::size_t n = adj.nodes();
  const auto r = resolve(params, adj);
  const Matrix coupling = detail::pair_coupling(adj, r.kappa);

  SimplexState state = init_simplex(n);
  Matrix forces = detail::forces_from_coupling(state.positions(), coupling);
  const double peak_force = detail::max_row_norm(forces);
  require(r.delta / r.mu * peak_force < simplex_edge(n), ErrorKind::invalid_argument,
          "delta too large: first step would overshoot the initial simplex edge");

  std::vector<TracePoint> trace;
  trace.push_back({0, organization_score(mutual_distances(state))});
  if (observer) observer(trace.back());

  SimplexState best = state;
  double best_value = trace.back().value;
  std::size_t best_step = 0;

  if (peak_force == 0.0) {
    return {best, mutual_distances(best), std::move(trace), 0, StopStatus::fixed_point};
  }

  StopStatus status = StopStatus::no_extremum;
  std::size_t decreasing = 0;
  for (std::size_t k = 1; k <= r.max_steps; ++k) {
    if (k > 1) forces = detail::forces_from_coupling(state.positions(), coupling);
    state = detail::euler_step(state, forces, r);
    const double value = organization_score(mutual_distances(state));
    decreasing = value < trace.back().value ? decreasing + 1 : 0;
    trace.push_back({k, value});
    if (observer) observer(trace.back());
    if (value > best_value) {
      best_value = value;
      best_step = k;
      best = state;
    }
    if (decreasing >= r.patience) {
      status = StopStatus::extremum;
      break;
    }
  }
  auto distances = mutual_distances(best);
  return {std::move(best), std::move(distances), std::move(trace), best_step, status};
}

/// Midpoint of the widest gap between consecutive sorted pairwise distances.
inline double select_epsilon(const DistanceMatrix& d) {
  const std::size_t n = d.size();
  require(n >= 3, ErrorKind::invalid_argument, "epsilon selection needs n >= 3");
  std::vector<double> v;
  v.reserve(upper_triangle_size(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) v.push_back(d(i, j));
  std::sort(v.begin(), v.end());
  double gap = 0.0;
  std::size_t at = 0;
  for (std::size_t k = 1; k < v.size(); ++k)
    if (v[k] - v[k - 1] > gap) {
      gap = v[k] - v[k - 1];
      at = k;
    }
  require(gap > 1e-9 * std::max(1.0, v.back()), ErrorKind::no_cluster_structure, "all distances are equal");
  return 0.5 * (v[at - 1] + v[at]);
}

namespace detail {

struct DisjointSets {
  std::vector<std::size_t> parent;
  explicit DisjointSets(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), std::size_t{0}); }
  std::size_t find(std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
};

inline double mean_internal_distance(const DistanceMatrix& d, const NodeSet& c) {
  double s = 0.0;
  for (std::size_t a = 0; a < c.size(); ++a)
    for (std::size_t b = a + 1; b < c.size(); ++b) s += d(c[a], c[b]);
  return s / static_cast<double>(upper_triangle_size(c.size()));
}

}  // namespace detail

/// Connected components of {d_ij < epsilon} with at least two members,
/// largest first (ties: more compact first, then lowest member index).
inline ClusterSet extract_clusters(const DistanceMatrix& d, double epsilon, std::vector<TracePoint> entropy_trace = {},
                                   std::size_t stop_step = 0, StopStatus status = StopStatus::extremum) {
  require(epsilon > 0.0, ErrorKind::invalid_argument, "epsilon must be positive");
  const std::size_t n = d.size();
  detail::DisjointSets sets(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (d(i, j) < epsilon) sets.unite(i, j);
  std::vector<NodeSet> groups(n);
  for (std::size_t v = 0; v < n; ++v) groups[sets.find(v)].push_back(v);
  std::vector<NodeSet> clusters;
  for (auto& g : groups)
    if (g.size() >= 2) clusters.push_back(std::move(g));
  std::vector<double> spread;
  for (const auto& c : clusters) spread.push_back(detail::mean_internal_distance(d, c));
  std::vector<std::size_t> order(clusters.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (clusters[a].size() != clusters[b].size()) return clusters[a].size() > clusters[b].size();
    if (spread[a] != spread[b]) return spread[a] < spread[b];
    return clusters[a].front() < clusters[b].front();
  });
  std::vector<NodeSet> sorted;
  for (auto k : order) sorted.push_back(std::move(clusters[k]));
  return ClusterSet(n, std::move(sorted), epsilon, std::move(entropy_trace), stop_step, status);
}

/// Cluster structure at several cutoffs read from one state. Levels are
/// nested: every cluster at epsilon_k lies inside one at epsilon_{k+1}.
inline std::vector<ClusterSet> spectroscopy(const DistanceMatrix& d, const std::vector<double>& epsilons) {
  for (std::size_t k = 1; k < epsilons.size(); ++k)
    require(epsilons[k] > epsilons[k - 1], ErrorKind::invalid_argument, "epsilons must be strictly increasing");
  std::vector<ClusterSet> levels;
  levels.reserve(epsilons.size());
  for (double e : epsilons) levels.push_back(extract_clusters(d, e));
  return levels;
}

struct DseResult {
  EvolveResult evolution;
  ClusterSet clusters;
};

/// evolve + epsilon choice + cluster extraction.
inline DseResult run_dse(const ThresholdedNetwork& adj, const DseParams& params, const TraceObserver& observer = {}) {
  auto evo = evolve(adj, params, observer);
  double eps = 0.0;
  if (params.epsilon_mode == EpsilonMode::fixed) {
    require(params.epsilon.has_value(), ErrorKind::invalid_argument, "fixed epsilon mode needs an epsilon");
    eps = *params.epsilon;
  } else {
    eps = select_epsilon(evo.distances);
  }
  auto clusters = extract_clusters(evo.distances, eps, evo.trace, evo.stop_step, evo.status);
  return {std::move(evo), std::move(clusters)};
}

}  // namespace fcnet
