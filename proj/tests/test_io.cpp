#include <gtest/gtest.h>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>
#include <random>
#include <sstream>

#include "fcnet/io.hpp"
#include "support.hpp"

using namespace fcnet;
using fcnet::testing::TempDir;

namespace {

std::string error_text(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(Numbers, ShortestRoundTrip) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  for (int rep = 0; rep < 1000; ++rep) {
    const double x = u(rng) * std::pow(10.0, static_cast<int>(rng() % 40) - 20);
    EXPECT_EQ(io::parse_number(io::format_number(x), "x"), x);
  }
  EXPECT_EQ(io::format_number(0.1), "0.1");
  EXPECT_EQ(io::format_number(2.0), "2");
  EXPECT_THROW(io::parse_number("1.5abc", "cell"), Error);
  EXPECT_THROW(io::parse_number("", "cell"), Error);
}

TEST(TimeSeriesFile, MinimalRoundTrip) {
  TempDir dir;
  Matrix v{{0.5, -1.25}, {3.0, 1e-300}};
  RoiTimeSeries ts(v, 2.2, {"left", "right"}, "p07");
  io::write_timeseries(ts, dir / "ts.csv");
  EXPECT_EQ(io::read_text(dir / "ts.csv"), "left,right\n0.5,-1.25\n3,1e-300\n");
  const auto back = io::read_timeseries(dir / "ts.csv");
  EXPECT_EQ(back.values(), v);
  EXPECT_EQ(back.labels(), ts.labels());
  EXPECT_EQ(back.tr(), 2.2);
  EXPECT_EQ(back.participant(), "p07");
}

TEST(TimeSeriesFile, RandomSeriesRoundTripExactly) {
  TempDir dir;
  std::mt19937_64 rng(2);
  std::normal_distribution<double> normal(0.0, 3.0);
  Matrix v(50, 7);
  for (Eigen::Index t = 0; t < 50; ++t)
    for (Eigen::Index j = 0; j < 7; ++j) v(t, j) = normal(rng);
  RoiTimeSeries ts(v, 2.0, fcnet::testing::labels(7), "p01");
  io::write_timeseries(ts, dir / "a.csv");
  EXPECT_EQ(io::read_timeseries(dir / "a.csv").values(), v);
  io::write_timeseries(io::read_timeseries(dir / "a.csv"), dir / "b.csv");
  EXPECT_EQ(io::read_text(dir / "a.csv"), io::read_text(dir / "b.csv"));
}

TEST(TimeSeriesFile, ErrorsNameTheCell) {
  TempDir dir;
  io::write_json(dir / "bad.json", {{"tr_seconds", 2.0}, {"participant_id", "p"}});
  io::write_text(dir / "bad.csv", "a,b\n1,2\n3,nan\n");
  const auto nan_error = error_text([&] { io::read_timeseries(dir / "bad.csv"); });
  EXPECT_NE(nan_error.find("row 3"), std::string::npos) << nan_error;
  EXPECT_NE(nan_error.find("column 2"), std::string::npos) << nan_error;

  io::write_text(dir / "bad.csv", "a,b\n1,2\n3\n");
  EXPECT_NE(error_text([&] { io::read_timeseries(dir / "bad.csv"); }).find("row 3"), std::string::npos);
  io::write_text(dir / "bad.csv", "a,b\n1,x\n");
  EXPECT_FALSE(error_text([&] { io::read_timeseries(dir / "bad.csv"); }).empty());
  io::write_text(dir / "bad.csv", "a,a\n1,2\n3,4\n");
  EXPECT_FALSE(error_text([&] { io::read_timeseries(dir / "bad.csv"); }).empty());
  EXPECT_FALSE(error_text([&] { io::read_timeseries(dir / "missing.csv"); }).empty());
}

TEST(EventsFile, ParsesAndValidates) {
  TempDir dir;
  io::write_text(dir / "e.tsv", "onset\tduration\tcondition\n");
  EXPECT_NE(error_text([&] { io::read_events(dir / "e.tsv"); }).find("no events"), std::string::npos);

  io::write_text(dir / "e.tsv", "onset\tduration\tcondition\n4\t3\tA\n");
  const auto one = io::read_events(dir / "e.tsv");
  ASSERT_EQ(one.events().size(), 1u);
  EXPECT_EQ(one.events()[0].onset, 4.0);

  io::write_text(dir / "e.tsv", "onset\tduration\tcondition\n-1\t3\tA\n");
  EXPECT_FALSE(error_text([&] { io::read_events(dir / "e.tsv"); }).empty());
  io::write_text(dir / "e.tsv", "onset\tduration\tcondition\n1\t0\tA\n");
  EXPECT_FALSE(error_text([&] { io::read_events(dir / "e.tsv"); }).empty());
  io::write_text(dir / "e.tsv", "start\tduration\tcondition\n1\t2\tA\n");
  EXPECT_NE(error_text([&] { io::read_events(dir / "e.tsv"); }).find("header"), std::string::npos);
}

TEST(EventsFile, BlockDesignScheduleRoundTrips) {
  // 3 s stimuli with 7 s rest, 48 per condition, six 24 s fixation periods.
  TempDir dir;
  SynthSpec spec;
  spec.tr = 2.2;
  const auto [schedule, duration] = block_schedule(spec);
  io::write_events(schedule, dir / "events.tsv");
  const auto back = io::read_events(dir / "events.tsv", "fixation");
  ASSERT_EQ(back.events().size(), 102u);
  EXPECT_EQ(back.events(), schedule.events());
  EXPECT_EQ(back.fixation(), std::optional<std::string>("fixation"));
  std::size_t fixations = 0;
  for (const auto& e : back.events())
    if (e.condition == "fixation") {
      ++fixations;
      EXPECT_EQ(e.duration, 24.0);
    } else {
      EXPECT_EQ(e.duration, 3.0);
    }
  EXPECT_EQ(fixations, 6u);
  EXPECT_NO_THROW(back.validate_against(static_cast<std::size_t>(std::ceil(duration / 2.2)), 2.2));
}

TEST(MatrixFile, RoundTripsAndRejectsAsymmetry) {
  TempDir dir;
  const auto identity =
      ConnectivityMatrix(Matrix::Identity(3, 3), fcnet::testing::labels(3), "p1", "A", MatrixKind::raw);
  io::write_matrix(identity, dir / "id.csv");
  EXPECT_EQ(io::read_text(dir / "id.csv"), "label,r0,r1,r2\nr0,1,0,0\nr1,0,1,0\nr2,0,0,1\n");
  const auto id_back = io::read_matrix(dir / "id.csv");
  EXPECT_EQ(id_back.values(), identity.values());
  EXPECT_EQ(id_back.participant(), "p1");
  EXPECT_EQ(id_back.condition(), "A");

  std::mt19937_64 rng(3);
  const auto m = fcnet::testing::random_correlation(rng, 9, "p2", "C");
  io::write_matrix(m, dir / "m.csv");
  const auto back = io::read_matrix(dir / "m.csv");
  EXPECT_EQ(back.values(), m.values());
  EXPECT_EQ(back.labels(), m.labels());
  EXPECT_EQ(back.kind(), MatrixKind::raw);

  io::write_text(dir / "asym.csv", "label,a,b\na,1,0.5\nb,0.4,1\n");
  EXPECT_NE(error_text([&] { io::read_matrix(dir / "asym.csv"); }).find("not symmetric"), std::string::npos);
  io::write_text(dir / "lab.csv", "label,a,b\na,1,0.5\nc,0.5,1\n");
  EXPECT_FALSE(error_text([&] { io::read_matrix(dir / "lab.csv"); }).empty());
}

TEST(MatrixFile, DistanceRoundTrip) {
  TempDir dir;
  std::mt19937_64 rng(4);
  const auto d = mutual_distances(SimplexState(fcnet::testing::random_matrix(rng, 6, 5)));
  io::write_distance_matrix(d, fcnet::testing::labels(6), dir / "d.csv");
  const auto [back, names] = io::read_distance_matrix(dir / "d.csv");
  EXPECT_EQ(back.values(), d.values());
  EXPECT_EQ(names, fcnet::testing::labels(6));
}

TEST(ClusterFile, EmptyAndPopulatedRoundTrip) {
  TempDir dir;
  const auto labels = fcnet::testing::labels(5);
  ClusterSet empty(5, {}, 0.3);
  io::write_clusters(empty, labels, dir / "empty.json");
  const auto doc = io::read_json(dir / "empty.json");
  EXPECT_TRUE(doc.at("clusters").empty());
  EXPECT_EQ(doc.at("singletons").size(), 5u);
  EXPECT_EQ(io::clusters_from_json(doc, labels).clusters().size(), 0u);

  ClusterSet two(5, {{0, 1}, {2, 3, 4}}, 0.7, {{0, 0.1}, {1, 0.4}, {2, 0.3}}, 1, StopStatus::extremum);
  const auto json = io::clusters_to_json(two, labels);
  EXPECT_EQ(json.at("clusters")[1], (io::json{"r2", "r3", "r4"}));
  const auto back = io::clusters_from_json(json, labels);
  EXPECT_EQ(back.clusters(), two.clusters());
  EXPECT_EQ(back.entropy_trace(), two.entropy_trace());
  EXPECT_EQ(back.stop_step(), 1u);
  EXPECT_EQ(back.epsilon(), 0.7);
  EXPECT_THROW(io::clusters_from_json(json, fcnet::testing::labels(5, "x")), Error);
}

TEST(GraphExport, ReimportsWithXmlParser) {
  TempDir dir;
  ThresholdedNetwork::Meta meta;
  ThresholdedNetwork net(6, {{0, 1, 0.5}, {1, 2, 0.25}, {3, 4, 0.75}, {4, 5, 0.125}, {0, 2, 1.0}}, meta,
                         {"a&b", "c", "d", "e", "f", "g"});
  ClusterSet cs(6, {{0, 1, 2}, {3, 4}}, 0.5);
  io::export_graph(net, cs, dir / "g.graphml");

  boost::property_tree::ptree tree;
  boost::property_tree::read_xml((dir / "g.graphml").string(), tree);
  const auto& graph = tree.get_child("graphml.graph");
  EXPECT_EQ(graph.get<std::string>("<xmlattr>.edgedefault"), "undirected");
  std::size_t edges = 0;
  std::set<int> cluster_ids;
  double weight_sum = 0.0;
  std::string first_node;
  for (const auto& [tag, child] : graph) {
    if (tag == "edge") {
      ++edges;
      weight_sum += child.get<double>("data");
    }
    if (tag == "node") {
      if (first_node.empty()) first_node = child.get<std::string>("<xmlattr>.id");
      cluster_ids.insert(child.get<int>("data"));
    }
  }
  EXPECT_EQ(edges, net.edges().size());
  EXPECT_EQ(weight_sum, 2.625);
  EXPECT_EQ(cluster_ids, (std::set<int>{-1, 0, 1}));
  EXPECT_EQ(first_node, "a&b");
}

TEST(ReportFile, SerializesFoldsAndNull) {
  ClassificationReport r;
  r.mode = FeatureMode::dse_union;
  r.threshold = ThresholdSpec{Sign::negative, 0.75};
  r.accuracy = 0.75;
  r.permutation_null = {0.5, 0.25};
  r.p_value = 1.0 / 3.0;
  r.n_perm = 2;
  r.seed = 9;
  FoldRecord ok;
  ok.held_out = "p01";
  ok.correct = true;
  FoldRecord bad;
  bad.held_out = "p02";
  bad.error = "empty network at threshold";
  r.folds = {ok, bad};
  const auto doc = io::report_to_json(r);
  EXPECT_EQ(doc.at("sign"), "negative");
  EXPECT_EQ(doc.at("folds")[1].at("error"), "empty network at threshold");
  EXPECT_TRUE(doc.at("folds")[0].at("error").is_null());
  EXPECT_EQ(doc.at("permutation_null").size(), 2u);
  EXPECT_EQ(doc.dump(2), io::report_to_json(r).dump(2));
  const std::string text = doc.dump(2);
  EXPECT_EQ(text.find('\r'), std::string::npos);
  EXPECT_LT(text.find("\"mode\""), text.find("\"accuracy\""));
}

TEST(SynthSpecFile, RoundTripAndValidation) {
  SynthSpec s;
  s.n_rois = 20;
  s.seed = 1234567890123ULL;
  s.clusters = {{"A", {1, 2, 3}, 0.6}, {"C", {10, 11}, 0.9}};
  const auto back = io::synth_spec_from_json(io::synth_spec_to_json(s));
  EXPECT_EQ(io::synth_spec_to_json(back), io::synth_spec_to_json(s));
  EXPECT_EQ(back.seed, s.seed);
  EXPECT_EQ(io::synth_spec_from_json(io::json::object()).n_participants, SynthSpec{}.n_participants);
  auto doc = io::synth_spec_to_json(s);
  doc["clusters"][0]["nodes"] = {1, 25};
  EXPECT_THROW(io::synth_spec_from_json(doc), Error);
  doc["clusters"][0]["nodes"] = "not a list";
  EXPECT_THROW(io::synth_spec_from_json(doc), Error);
}
