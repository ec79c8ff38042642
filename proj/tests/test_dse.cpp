#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "fcnet/dse.hpp"
#include "fcnet/netstats.hpp"
#include "fcnet/synth.hpp"
#include "support.hpp"

using namespace fcnet;

namespace {

ThresholdedNetwork network(std::size_t n, std::vector<Edge> edges) {
  return ThresholdedNetwork(n, std::move(edges), ThresholdedNetwork::Meta{});
}

ThresholdedNetwork two_blocks(std::size_t n) {
  std::vector<Edge> edges;
  const std::size_t half = n / 2;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if ((i < half) == (j < half)) edges.push_back({i, j, 1.0});
  return network(n, edges);
}

// Pairwise force sum written out coordinate by coordinate.
Matrix oracle_forces(const Matrix& pos, const Matrix& k) {
  const auto n = pos.rows();
  const auto dim = pos.cols();
  Matrix f = Matrix::Zero(n, dim);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i == j) continue;
      double d2 = 0.0;
      for (Eigen::Index c = 0; c < dim; ++c) d2 += (pos(j, c) - pos(i, c)) * (pos(j, c) - pos(i, c));
      const double d = std::sqrt(d2);
      for (Eigen::Index c = 0; c < dim; ++c) f(i, c) += k(i, j) * (pos(j, c) - pos(i, c)) / d;
    }
  return f;
}

double oracle_entropy(const Matrix& c) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < c.rows(); ++i)
    for (Eigen::Index j = 0; j < c.cols(); ++j) total += c(i, j);
  double s = 0.0;
  for (Eigen::Index k = 0; k < c.cols(); ++k) {
    double p = 0.0;
    for (Eigen::Index i = 0; i < c.rows(); ++i) p += c(i, k);
    p /= total;
    if (p > 0.0) s -= p * std::log2(p);
  }
  return s;
}

Matrix permuted(const Matrix& m, const std::vector<std::size_t>& perm) {
  Matrix out(m.rows(), m.cols());
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      out(static_cast<Eigen::Index>(perm[static_cast<std::size_t>(i)]),
          static_cast<Eigen::Index>(perm[static_cast<std::size_t>(j)])) = m(i, j);
  return out;
}

bool is_refinement(const ClusterSet& fine, const ClusterSet& coarse) {
  const auto outer = coarse.membership();
  for (const auto& c : fine.clusters()) {
    const int label = outer[c.front()];
    if (label < 0) return false;
    for (auto v : c)
      if (outer[v] != label) return false;
  }
  return true;
}

double min_distance(const DistanceMatrix& d) {
  double best = 1e300;
  for (std::size_t i = 0; i < d.size(); ++i)
    for (std::size_t j = i + 1; j < d.size(); ++j) best = std::min(best, d(i, j));
  return best;
}

}  // namespace

TEST(InitSimplex, RegularUnitSimplex) {
  for (std::size_t n = 2; n <= 500; n += (n < 40 ? 1 : 23)) {
    const auto s = init_simplex(n);
    ASSERT_EQ(s.positions().rows(), static_cast<Eigen::Index>(n));
    ASSERT_EQ(s.positions().cols(), static_cast<Eigen::Index>(n - 1));
    const double edge = std::sqrt(2.0 * n / (n - 1.0));
    const auto d = mutual_distances(s);
    for (std::size_t i = 0; i < n; ++i) {
      EXPECT_NEAR(s.positions().row(static_cast<Eigen::Index>(i)).norm(), 1.0, 1e-12);
      for (std::size_t j = i + 1; j < n; ++j) ASSERT_NEAR(d(i, j), edge, 1e-9) << n;
    }
  }
  const auto two = init_simplex(2);
  EXPECT_DOUBLE_EQ(std::abs(two.positions()(0, 0)), 1.0);
  EXPECT_DOUBLE_EQ(two.positions()(0, 0), -two.positions()(1, 0));
  EXPECT_NEAR(mutual_distances(init_simplex(5))(0, 4), 1.5811388300841898, 1e-12);
  EXPECT_THROW(init_simplex(1), Error);
}

TEST(Forces, TwoNodesPullTogether) {
  const auto s = init_simplex(2);
  DseParams p;
  p.repulsion_kappa = 0.0;
  const Matrix f = compute_forces(s, network(2, {{0, 1, 1.0}}), p);
  EXPECT_NEAR(f.row(0).norm(), 1.0, 1e-15);
  EXPECT_NEAR(f(0, 0), -s.positions()(0, 0), 1e-15);
  EXPECT_NEAR(f(1, 0), -s.positions()(1, 0), 1e-15);
}

TEST(Forces, PathGraphMatchesPairwiseOracle) {
  const auto s = init_simplex(3);
  const auto adj = network(3, {{0, 1, 1.0}, {1, 2, 1.0}});
  for (double kappa : {0.0, 0.1, 0.7}) {
    DseParams p;
    p.repulsion_kappa = kappa;
    Matrix k{{0.0, 1.0, -kappa}, {1.0, 0.0, 1.0}, {-kappa, 1.0, 0.0}};
    EXPECT_LE((compute_forces(s, adj, p) - oracle_forces(s.positions(), k)).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Forces, RandomWeightedGraphMatchesOracle) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int rep = 0; rep < 10; ++rep) {
    const std::size_t n = 8;
    std::vector<Edge> edges;
    Matrix k = Matrix::Constant(8, 8, -0.05);
    k.diagonal().setZero();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j)
        if (u(rng) < 0.4) {
          const double w = 0.1 + u(rng);
          edges.push_back({i, j, w});
          k(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = w;
          k(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = w;
        }
    if (edges.empty()) continue;
    DseParams p;
    p.repulsion_kappa = 0.05;
    SimplexState s(init_simplex(n).positions() + 0.05 * fcnet::testing::random_matrix(rng, 8, 7));
    EXPECT_LE((compute_forces(s, network(n, edges), p) - oracle_forces(s.positions(), k)).cwiseAbs().maxCoeff(),
              1e-12);
  }
}

TEST(Forces, ZeroCouplingIsFixedPoint) {
  const auto s = init_simplex(5);
  DseParams p;
  p.repulsion_kappa = 0.0;
  const auto empty = network(5, {});
  EXPECT_EQ(compute_forces(s, empty, p).cwiseAbs().maxCoeff(), 0.0);
  const auto next = step(s, empty, p);
  EXPECT_EQ(next.positions(), s.positions());
  EXPECT_EQ(next.step_index(), 1u);
}

TEST(Forces, CoincidentNodesAreRejected) {
  Matrix pos{{0.5}, {0.5}};
  try {
    compute_forces(SimplexState(pos), network(2, {{0, 1, 1.0}}), {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::node_collision);
  }
}

TEST(Step, TwoNodesOneStep) {
  DseParams p;
  p.delta = 0.1;
  p.repulsion_kappa = 0.0;
  const auto next = step(init_simplex(2), network(2, {{0, 1, 1.0}}), p);
  EXPECT_NEAR(std::abs(next.positions()(0, 0)), 0.9, 1e-15);
  EXPECT_NEAR(mutual_distances(next)(0, 1), 1.8, 1e-15);
  EXPECT_EQ(next.step_index(), 1u);
  EXPECT_DOUBLE_EQ(next.tau(), 0.1);
}

TEST(Step, PathGraphTwoStepsMatchEulerOracle) {
  const auto adj = network(3, {{0, 1, 1.0}, {1, 2, 1.0}});
  DseParams p;
  p.delta = 0.05;
  p.repulsion_kappa = 0.1;
  Matrix k{{0.0, 1.0, -0.1}, {1.0, 0.0, 1.0}, {-0.1, 1.0, 0.0}};
  Matrix oracle = init_simplex(3).positions();
  SimplexState s = init_simplex(3);
  for (int it = 0; it < 2; ++it) {
    const Matrix f = oracle_forces(oracle, k);
    for (Eigen::Index i = 0; i < 3; ++i)
      for (Eigen::Index c = 0; c < 2; ++c) oracle(i, c) += 0.05 * f(i, c);
    s = step(s, adj, p);
  }
  EXPECT_LE((s.positions() - oracle).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_NEAR(s.tau(), 0.1, 1e-15);
}

TEST(Step, CompleteGraphContractsUniformly) {
  // With kappa = 0 every node feels -n r_i / d, so each edge shrinks by n delta.
  const std::size_t n = 6;
  std::vector<Edge> edges;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) edges.push_back({i, j, 1.0});
  const auto adj = network(n, edges);
  DseParams p;
  p.delta = 0.01;
  p.repulsion_kappa = 0.0;
  SimplexState s = init_simplex(n);
  double prev = simplex_edge(n);
  for (int it = 0; it < 10; ++it) {
    s = step(s, adj, p);
    const auto d = mutual_distances(s);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) {
        EXPECT_LT(d(i, j), prev);
        EXPECT_NEAR(d(i, j), prev - 0.06, 1e-12);
      }
    prev = d(0, 1);
  }
}

TEST(MutualDistances, MatchesDirectNorms) {
  std::mt19937_64 rng(10);
  SimplexState s(fcnet::testing::random_matrix(rng, 10, 9));
  const auto d = mutual_distances(s);
  for (std::size_t i = 0; i < 10; ++i) {
    EXPECT_EQ(d(i, i), 0.0);
    for (std::size_t j = 0; j < 10; ++j) {
      double sum = 0.0;
      for (Eigen::Index c = 0; c < 9; ++c) {
        const double x = s.positions()(static_cast<Eigen::Index>(i), c) - s.positions()(static_cast<Eigen::Index>(j), c);
        sum += x * x;
      }
      EXPECT_NEAR(d(i, j), std::sqrt(sum), 1e-14);
      EXPECT_EQ(d(i, j), d(j, i));
    }
  }
}

TEST(Entropy, UniformAndConcentratedMass) {
  for (int n : {2, 4, 8, 16}) {
    Matrix c = Matrix::Ones(n, n);
    c.diagonal().setZero();
    EXPECT_NEAR(network_entropy(c), std::log2(n), 1e-12);
  }
  Matrix star = Matrix::Zero(5, 5);
  star.col(2).setConstant(1.0);
  star(2, 2) = 0.0;
  EXPECT_EQ(network_entropy(star), 0.0);
  EXPECT_THROW(network_entropy(Matrix::Zero(3, 3)), Error);
  std::mt19937_64 rng(8);
  for (int rep = 0; rep < 20; ++rep) {
    const Matrix c = fcnet::testing::random_matrix(rng, 8, 8, 0.0, 2.0);
    EXPECT_NEAR(network_entropy(c), oracle_entropy(c), 1e-12);
  }
}

TEST(MutualInformation, SingleEdgeByHand) {
  // Joint mass 1/2 at (0,1) and (1,0): each marginal is (1/2, 1/2), so
  // I = 1 + 1 - 1 = 1 bit.
  Matrix c = Matrix::Zero(3, 3);
  c(0, 1) = c(1, 0) = 0.5;
  EXPECT_NEAR(mutual_information(c), 1.0, 1e-15);
  c *= 7.0;
  EXPECT_NEAR(mutual_information(c), 1.0, 1e-15);
}

TEST(MutualInformation, BlockBeatsUniformAndIsPermutationInvariant) {
  const auto blocks = two_blocks(10).dense();
  Matrix uniform = Matrix::Ones(10, 10);
  uniform.diagonal().setZero();
  uniform *= blocks.sum() / uniform.sum();
  EXPECT_GT(mutual_information(blocks), mutual_information(uniform));
  EXPECT_NEAR(mutual_information(Matrix::Ones(4, 4)), 0.0, 1e-12);

  std::mt19937_64 rng(3);
  const Matrix sym = fcnet::testing::random_symmetric(rng, 9, 0.0, 1.0);
  std::vector<std::size_t> perm(9);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  for (int rep = 0; rep < 5; ++rep) {
    std::shuffle(perm.begin(), perm.end(), rng);
    EXPECT_NEAR(mutual_information(permuted(sym, perm)), mutual_information(sym), 1e-12);
  }
}

TEST(Affinity, UniformAtStart) {
  const auto w = distance_affinity(mutual_distances(init_simplex(7)));
  for (Eigen::Index i = 0; i < 7; ++i)
    for (Eigen::Index j = 0; j < 7; ++j) EXPECT_NEAR(w(i, j), i == j ? 0.0 : 0.5, 1e-12);
  // Joint mass is uniform over the 42 off-diagonal cells, each marginal is
  // uniform over 7 nodes: I = 2 log2 7 - log2 42 = log2(7/6).
  EXPECT_NEAR(organization_score(mutual_distances(init_simplex(7))), std::log2(7.0 / 6.0), 1e-12);
}

TEST(Evolve, EmptyGraphWithoutRepulsionIsFixedPoint) {
  DseParams p;
  p.repulsion_kappa = 0.0;
  const auto r = evolve(network(6, {}), p);
  EXPECT_EQ(r.status, StopStatus::fixed_point);
  EXPECT_EQ(r.stop_step, 0u);
  EXPECT_EQ(r.trace.size(), 1u);
}

TEST(Evolve, TwoBlocksSeparate) {
  const auto adj = two_blocks(20);
  std::vector<TracePoint> seen;
  const auto r = evolve(adj, {}, [&](const TracePoint& t) { seen.push_back(t); });
  EXPECT_EQ(seen, r.trace);
  EXPECT_GT(r.trace.size(), 2u);
  EXPECT_NE(r.status, StopStatus::fixed_point);

  const auto best = std::max_element(r.trace.begin(), r.trace.end(),
                                     [](const TracePoint& a, const TracePoint& b) { return a.value < b.value; });
  EXPECT_EQ(best->step, r.stop_step);
  EXPECT_GT(best->value, r.trace.front().value);
  EXPECT_EQ(r.state.step_index(), r.stop_step);

  double within = 0.0, across = 1e300;
  for (std::size_t i = 0; i < 20; ++i)
    for (std::size_t j = i + 1; j < 20; ++j) {
      if ((i < 10) == (j < 10))
        within = std::max(within, r.distances(i, j));
      else
        across = std::min(across, r.distances(i, j));
    }
  EXPECT_LT(within, across);

  const double eps = select_epsilon(r.distances);
  EXPECT_GT(eps, within);
  EXPECT_LT(eps, across);
  const auto cs = extract_clusters(r.distances, eps);
  ASSERT_EQ(cs.clusters().size(), 2u);
  EXPECT_EQ(cs.clusters()[0], (NodeSet{0, 1, 2, 3, 4, 5, 6, 7, 8, 9}));
  EXPECT_EQ(cs.clusters()[1], (NodeSet{10, 11, 12, 13, 14, 15, 16, 17, 18, 19}));
}

TEST(Evolve, OvershootGuard) {
  DseParams p;
  p.delta = 5.0;
  EXPECT_THROW(evolve(two_blocks(6), p), Error);
}

TEST(Evolve, StepCapFlagsNoExtremum) {
  DseParams p;
  p.max_steps = 2;
  const auto r = evolve(two_blocks(20), p);
  EXPECT_EQ(r.status, StopStatus::no_extremum);
  EXPECT_EQ(r.trace.size(), 3u);
}

TEST(SelectEpsilon, PicksLargestGap) {
  Matrix d = Matrix::Zero(4, 4);
  const double v[] = {0.1, 0.12, 0.11, 2.0, 2.1, 1.9};
  int k = 0;
  for (Eigen::Index i = 0; i < 4; ++i)
    for (Eigen::Index j = i + 1; j < 4; ++j) d(i, j) = d(j, i) = v[k++];
  const double eps = select_epsilon(DistanceMatrix(d));
  EXPECT_GT(eps, 0.12);
  EXPECT_LT(eps, 1.9);
  EXPECT_NEAR(eps, 1.01, 1e-12);

  try {
    select_epsilon(mutual_distances(init_simplex(6)));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::no_cluster_structure);
  }
}

TEST(ExtractClusters, Extremes) {
  std::mt19937_64 rng(1);
  const auto d = mutual_distances(SimplexState(fcnet::testing::random_matrix(rng, 8, 7)));
  const auto none = extract_clusters(d, 1e-6);
  EXPECT_TRUE(none.clusters().empty());
  EXPECT_EQ(none.singletons().size(), 8u);
  EXPECT_EQ(none.primary(), nullptr);
  const auto all = extract_clusters(d, 100.0);
  ASSERT_EQ(all.clusters().size(), 1u);
  EXPECT_EQ(all.clusters()[0].size(), 8u);
  EXPECT_THROW(extract_clusters(d, 0.0), Error);
}

TEST(ExtractClusters, OrdersBySizeThenCompactness) {
  Matrix d = Matrix::Constant(6, 6, 5.0);
  d.diagonal().setZero();
  d(0, 1) = d(1, 0) = 0.4;
  d(2, 3) = d(3, 2) = 0.2;
  d(3, 4) = d(4, 3) = 0.3;
  d(2, 4) = d(4, 2) = 0.5;
  const auto cs = extract_clusters(DistanceMatrix(d), 1.0);
  ASSERT_EQ(cs.clusters().size(), 2u);
  EXPECT_EQ(cs.clusters()[0], (NodeSet{2, 3, 4}));
  EXPECT_EQ(cs.clusters()[1], (NodeSet{0, 1}));
  EXPECT_EQ(cs.singletons(), (NodeSet{5}));

  d(2, 4) = d(4, 2) = 5.0;
  d(3, 4) = d(4, 3) = 5.0;
  const auto pairs = extract_clusters(DistanceMatrix(d), 1.0);
  ASSERT_EQ(pairs.clusters().size(), 2u);
  EXPECT_EQ(pairs.clusters()[0], (NodeSet{2, 3}));
}

TEST(Spectroscopy, EvolvedStateGivesNestedLevels) {
  const auto g = planted_partition_graph(24, equal_blocks(24, 3), 0.8, 0.1, 5);
  const auto r = evolve(g.network, {});
  std::vector<double> eps{0.5 * min_distance(r.distances)};
  for (int k = 1; k <= 80; ++k) eps.push_back(0.05 * k);
  const auto levels = spectroscopy(r.distances, eps);
  ASSERT_EQ(levels.size(), eps.size());
  for (std::size_t k = 1; k < levels.size(); ++k) EXPECT_TRUE(is_refinement(levels[k - 1], levels[k])) << k;
  EXPECT_TRUE(levels.front().clusters().empty());
  EXPECT_EQ(levels.back().clusters().size(), 1u);
  EXPECT_THROW(spectroscopy(r.distances, {0.5, 0.5}), Error);
  EXPECT_EQ(spectroscopy(r.distances, {0.7})[0].clusters(), extract_clusters(r.distances, 0.7).clusters());
}

TEST(Spectroscopy, RecoversPlantedHierarchy) {
  // Four tight blocks of five, paired into two super-blocks: block centres sit
  // 1 apart inside a super-block and 10 apart across super-blocks.
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> jitter(-0.02, 0.02);
  Matrix pos = Matrix::Zero(20, 19);
  for (Eigen::Index v = 0; v < 20; ++v) {
    pos(v, 0) = 10.0 * static_cast<double>(v / 10) + static_cast<double>((v / 5) % 2);
    for (Eigen::Index c = 1; c < 4; ++c) pos(v, c) = jitter(rng);
  }
  const auto d = mutual_distances(SimplexState(pos));
  const auto levels = spectroscopy(d, {0.5 * min_distance(d), 0.5, 3.0, 20.0});
  for (std::size_t k = 1; k < levels.size(); ++k) EXPECT_TRUE(is_refinement(levels[k - 1], levels[k]));

  const std::vector<int> fine_truth{0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 2, 2, 2, 2, 2, 3, 3, 3, 3, 3};
  const std::vector<int> coarse_truth{0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1};
  EXPECT_TRUE(levels[0].clusters().empty());
  EXPECT_EQ(adjusted_rand_index(levels[1].membership(), fine_truth), 1.0);
  EXPECT_EQ(adjusted_rand_index(levels[2].membership(), coarse_truth), 1.0);
  EXPECT_EQ(levels[3].clusters().size(), 1u);
}

TEST(RunDse, PermutationEquivariance) {
  const auto g = planted_partition_graph(30, equal_blocks(30, 3), 0.9, 0.05, 17);
  const auto base = run_dse(g.network, {});
  std::mt19937_64 rng(99);
  std::vector<std::size_t> perm(30);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  for (int rep = 0; rep < 3; ++rep) {
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<Edge> edges;
    for (const auto& e : g.network.edges()) edges.push_back({perm[e.i], perm[e.j], e.weight});
    const auto moved = run_dse(network(30, edges), {});
    std::vector<NodeSet> expected;
    for (const auto& c : base.clusters.clusters()) {
      NodeSet m;
      for (auto v : c) m.push_back(perm[v]);
      std::sort(m.begin(), m.end());
      expected.push_back(m);
    }
    auto got = moved.clusters.clusters();
    std::sort(expected.begin(), expected.end());
    std::sort(got.begin(), got.end());
    EXPECT_EQ(got, expected);
    EXPECT_EQ(moved.evolution.stop_step, base.evolution.stop_step);
  }
}

TEST(RunDse, FixedEpsilonNeedsValue) {
  DseParams p;
  p.epsilon_mode = EpsilonMode::fixed;
  EXPECT_THROW(run_dse(two_blocks(8), p), Error);
  p.epsilon = 0.5;
  EXPECT_DOUBLE_EQ(run_dse(two_blocks(8), p).clusters.epsilon(), 0.5);
}
