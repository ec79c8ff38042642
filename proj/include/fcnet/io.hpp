#pragma once

// File formats. Every writer is deterministic: numbers use the shortest
// decimal that parses back to the same double, lines end in LF.
//
//   time series   CSV, header row of ROI labels, one row per sample;
//                 sidecar <stem>.json {"tr_seconds", "participant_id"}
//   events        TSV with header "onset<TAB>duration<TAB>condition"
//   matrices      CSV with a label header row and a label first column;
//                 sidecar <stem>.json {"participant", "condition", "kind"}
//   clusters      JSON
//   graphs        GraphML, node attribute cluster_id, edge attribute weight

#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "fcnet/classify.hpp"
#include "fcnet/model.hpp"
#include "fcnet/netstats.hpp"
#include "fcnet/synth.hpp"

namespace fcnet::io {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

inline std::string format_number(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

/// Parses a full cell as a finite double; `where` names the cell in errors.
inline double parse_number(std::string_view cell, const std::string& where) {
  while (!cell.empty() && (cell.front() == ' ' || cell.front() == '\t')) cell.remove_prefix(1);
  while (!cell.empty() && (cell.back() == ' ' || cell.back() == '\t')) cell.remove_suffix(1);
  if (!cell.empty() && cell.front() == '+') cell.remove_prefix(1);
  double value = 0.0;
  const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), value);
  require(res.ec == std::errc() && res.ptr == cell.data() + cell.size(), ErrorKind::parse_error,
          where + ": not a number '" + std::string(cell) + "'");
  require(std::isfinite(value), ErrorKind::parse_error, where + ": non-finite value '" + std::string(cell) + "'");
  return value;
}

inline std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::io_error, "cannot open '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

inline void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorKind::io_error, "cannot write '" + path.string() + "'");
  out << text;
  require(static_cast<bool>(out), ErrorKind::io_error, "write failed for '" + path.string() + "'");
}

inline json read_json(const fs::path& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::parse_error, path.string() + ": " + e.what());
  }
}

inline void write_json(const fs::path& path, const json& doc) { write_text(path, doc.dump(2) + "\n"); }

inline fs::path sidecar_path(const fs::path& path) {
  auto p = path;
  p.replace_extension(".json");
  return p;
}

namespace detail {

/// Lines without terminators; a trailing empty line is dropped, CR stripped.
inline std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    std::string line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
    start = end + 1;
  }
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  return lines;
}

inline std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    auto end = line.find(sep, start);
    if (end == std::string::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, end - start));
    start = end + 1;
  }
}

inline std::string cell_name(const fs::path& path, std::size_t row, std::size_t col) {
  return path.filename().string() + " row " + std::to_string(row) + " column " + std::to_string(col);
}

template <typename T>
T json_get(const json& doc, const char* key, const fs::path& path) {
  require(doc.is_object() && doc.contains(key), ErrorKind::parse_error,
          path.string() + ": missing field '" + key + "'");
  try {
    return doc.at(key).get<T>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::parse_error, path.string() + ": field '" + key + "': " + e.what());
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Time series

inline void write_timeseries(const RoiTimeSeries& ts, const fs::path& csv) {
  std::string out;
  for (std::size_t j = 0; j < ts.labels().size(); ++j) out += (j ? "," : "") + ts.labels()[j];
  out += '\n';
  const Matrix& v = ts.values();
  for (Eigen::Index t = 0; t < v.rows(); ++t) {
    for (Eigen::Index j = 0; j < v.cols(); ++j) {
      if (j) out += ',';
      out += format_number(v(t, j));
    }
    out += '\n';
  }
  write_text(csv, out);
  json side;
  side["tr_seconds"] = ts.tr();
  side["participant_id"] = ts.participant();
  write_json(sidecar_path(csv), side);
}

inline RoiTimeSeries read_timeseries(const fs::path& csv) {
  const auto lines = detail::split_lines(read_text(csv));
  require(lines.size() >= 2, ErrorKind::parse_error, csv.string() + ": need a header and at least one sample");
  const auto labels = detail::split(lines[0], ',');
  Matrix v(static_cast<Eigen::Index>(lines.size() - 1), static_cast<Eigen::Index>(labels.size()));
  for (std::size_t r = 1; r < lines.size(); ++r) {
    const auto cells = detail::split(lines[r], ',');
    require(cells.size() == labels.size(), ErrorKind::parse_error,
            csv.filename().string() + " row " + std::to_string(r + 1) + ": expected " +
                std::to_string(labels.size()) + " cells, found " + std::to_string(cells.size()));
    for (std::size_t c = 0; c < cells.size(); ++c)
      v(static_cast<Eigen::Index>(r - 1), static_cast<Eigen::Index>(c)) =
          parse_number(cells[c], detail::cell_name(csv, r + 1, c + 1));
  }
  const auto side = read_json(sidecar_path(csv));
  const auto tr = detail::json_get<double>(side, "tr_seconds", sidecar_path(csv));
  const auto pid = detail::json_get<std::string>(side, "participant_id", sidecar_path(csv));
  try {
    return RoiTimeSeries(std::move(v), tr, labels, pid);
  } catch (const Error& e) {
    throw Error(ErrorKind::parse_error, csv.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Events

inline void write_events(const EventSchedule& events, const fs::path& tsv) {
  std::string out = "onset\tduration\tcondition\n";
  for (const auto& e : events.events())
    out += format_number(e.onset) + '\t' + format_number(e.duration) + '\t' + e.condition + '\n';
  write_text(tsv, out);
}

inline EventSchedule read_events(const fs::path& tsv, std::optional<std::string> fixation = std::nullopt) {
  const auto lines = detail::split_lines(read_text(tsv));
  require(!lines.empty(), ErrorKind::parse_error, tsv.string() + ": empty file");
  const auto header = detail::split(lines[0], '\t');
  require(header == std::vector<std::string>{"onset", "duration", "condition"}, ErrorKind::parse_error,
          tsv.string() + ": header must be 'onset<TAB>duration<TAB>condition'");
  std::vector<Event> events;
  for (std::size_t r = 1; r < lines.size(); ++r) {
    if (lines[r].empty()) continue;
    const auto cells = detail::split(lines[r], '\t');
    require(cells.size() == 3, ErrorKind::parse_error,
            tsv.filename().string() + " row " + std::to_string(r + 1) + ": expected 3 cells");
    Event e{parse_number(cells[0], detail::cell_name(tsv, r + 1, 1)),
            parse_number(cells[1], detail::cell_name(tsv, r + 1, 2)), cells[2]};
    require(e.onset >= 0.0, ErrorKind::parse_error, detail::cell_name(tsv, r + 1, 1) + ": negative onset");
    require(e.duration > 0.0, ErrorKind::parse_error, detail::cell_name(tsv, r + 1, 2) + ": duration must be > 0");
    require(!e.condition.empty(), ErrorKind::parse_error, detail::cell_name(tsv, r + 1, 3) + ": empty condition");
    events.push_back(std::move(e));
  }
  require(!events.empty(), ErrorKind::parse_error, tsv.string() + ": no events");
  if (fixation) {
    const bool present = std::any_of(events.begin(), events.end(), [&](const Event& e) { return e.condition == *fixation; });
    if (!present) fixation.reset();
  }
  return EventSchedule(std::move(events), std::move(fixation));
}

// ---------------------------------------------------------------------------
// Matrices

namespace detail {

inline std::string matrix_csv(const Matrix& m, const std::vector<std::string>& labels) {
  std::string out = "label";
  for (const auto& l : labels) out += ',' + l;
  out += '\n';
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    out += labels[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < m.cols(); ++j) out += ',' + format_number(m(i, j));
    out += '\n';
  }
  return out;
}

struct LabelledMatrix {
  Matrix values;
  std::vector<std::string> labels;
};

/// Parses a labelled square CSV, checks symmetry to 1e-9 and symmetrizes.
inline LabelledMatrix parse_matrix_csv(const fs::path& csv) {
  const auto lines = split_lines(read_text(csv));
  require(!lines.empty(), ErrorKind::parse_error, csv.string() + ": empty file");
  auto header = split(lines[0], ',');
  require(header.size() >= 3, ErrorKind::parse_error, csv.string() + ": need at least 2 labelled columns");
  std::vector<std::string> labels(header.begin() + 1, header.end());
  const std::size_t n = labels.size();
  require(lines.size() == n + 1, ErrorKind::parse_error,
          csv.string() + ": expected " + std::to_string(n) + " data rows, found " + std::to_string(lines.size() - 1));
  Matrix m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t r = 0; r < n; ++r) {
    const auto cells = split(lines[r + 1], ',');
    require(cells.size() == n + 1, ErrorKind::parse_error,
            csv.filename().string() + " row " + std::to_string(r + 2) + ": expected " + std::to_string(n + 1) +
                " cells, found " + std::to_string(cells.size()));
    require(cells[0] == labels[r], ErrorKind::parse_error,
            csv.filename().string() + " row " + std::to_string(r + 2) + ": row label '" + cells[0] +
                "' does not match column label '" + labels[r] + "'");
    for (std::size_t c = 0; c < n; ++c)
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
          parse_number(cells[c + 1], cell_name(csv, r + 2, c + 2));
  }
  require(fcnet::detail::max_asymmetry(m) <= 1e-9, ErrorKind::parse_error, csv.string() + ": matrix is not symmetric");
  m = (0.5 * (m + m.transpose())).eval();
  return {std::move(m), std::move(labels)};
}

}  // namespace detail

inline void write_matrix(const ConnectivityMatrix& mat, const fs::path& csv) {
  write_text(csv, detail::matrix_csv(mat.values(), mat.labels()));
  json side;
  side["participant"] = mat.participant();
  side["condition"] = mat.condition();
  side["kind"] = std::string(to_string(mat.kind()));
  write_json(sidecar_path(csv), side);
}

/// Metadata comes from the sidecar when present, otherwise from the defaults.
inline ConnectivityMatrix read_matrix(const fs::path& csv, std::string participant = "", std::string condition = "",
                                      MatrixKind kind = MatrixKind::raw) {
  auto parsed = detail::parse_matrix_csv(csv);
  const auto side_path = sidecar_path(csv);
  if (fs::exists(side_path)) {
    const auto side = read_json(side_path);
    participant = detail::json_get<std::string>(side, "participant", side_path);
    condition = detail::json_get<std::string>(side, "condition", side_path);
    kind = parse_matrix_kind(detail::json_get<std::string>(side, "kind", side_path));
  }
  try {
    return ConnectivityMatrix(std::move(parsed.values), std::move(parsed.labels), participant, condition, kind);
  } catch (const Error& e) {
    throw Error(ErrorKind::parse_error, csv.string() + ": " + e.what());
  }
}

inline void write_distance_matrix(const DistanceMatrix& d, const std::vector<std::string>& labels, const fs::path& csv) {
  require(labels.size() == d.size(), ErrorKind::invalid_argument, "label count does not match matrix size");
  write_text(csv, detail::matrix_csv(d.values(), labels));
}

inline std::pair<DistanceMatrix, std::vector<std::string>> read_distance_matrix(const fs::path& csv) {
  auto parsed = detail::parse_matrix_csv(csv);
  try {
    return {DistanceMatrix(std::move(parsed.values)), std::move(parsed.labels)};
  } catch (const Error& e) {
    throw Error(ErrorKind::parse_error, csv.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Clusters and graphs

inline json clusters_to_json(const ClusterSet& set, const std::vector<std::string>& labels) {
  require(labels.size() == set.nodes(), ErrorKind::invalid_argument, "label count does not match node count");
  auto names = [&](const NodeSet& nodes) {
    json arr = json::array();
    for (auto v : nodes) arr.push_back(labels[v]);
    return arr;
  };
  json doc;
  doc["nodes"] = set.nodes();
  doc["epsilon"] = set.epsilon();
  doc["stop_step"] = set.stop_step();
  doc["status"] = std::string(to_string(set.status()));
  doc["clusters"] = json::array();
  for (const auto& c : set.clusters()) doc["clusters"].push_back(names(c));
  doc["singletons"] = names(set.singletons());
  doc["entropy_trace"] = json::array();
  for (const auto& p : set.entropy_trace()) doc["entropy_trace"].push_back({{"step", p.step}, {"value", p.value}});
  return doc;
}

inline ClusterSet clusters_from_json(const json& doc, const std::vector<std::string>& labels) {
  std::map<std::string, std::size_t> index;
  for (std::size_t k = 0; k < labels.size(); ++k) index[labels[k]] = k;
  try {
    std::vector<NodeSet> clusters;
    for (const auto& c : doc.at("clusters")) {
      NodeSet nodes;
      for (const auto& name : c) {
        auto it = index.find(name.get<std::string>());
        require(it != index.end(), ErrorKind::parse_error, "unknown cluster label '" + name.get<std::string>() + "'");
        nodes.push_back(it->second);
      }
      clusters.push_back(std::move(nodes));
    }
    std::vector<TracePoint> trace;
    for (const auto& p : doc.at("entropy_trace"))
      trace.push_back({p.at("step").get<std::size_t>(), p.at("value").get<double>()});
    return ClusterSet(labels.size(), std::move(clusters), doc.at("epsilon").get<double>(), std::move(trace),
                      doc.at("stop_step").get<std::size_t>(), parse_stop_status(doc.at("status").get<std::string>()));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::parse_error, std::string("cluster document: ") + e.what());
  }
}

inline void write_clusters(const ClusterSet& set, const std::vector<std::string>& labels, const fs::path& path) {
  write_json(path, clusters_to_json(set, labels));
}

namespace detail {

inline std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace detail

/// GraphML with `cluster_id` per node (-1 for unclustered) and `weight` per edge.
inline std::string graphml(const ThresholdedNetwork& net, const ClusterSet& clusters) {
  require(net.nodes() == clusters.nodes(), ErrorKind::invalid_argument, "cluster set does not match network");
  const auto membership = clusters.membership();
  std::string out =
      "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      "<graphml xmlns=\"http://graphml.graphdrawing.org/xmlns\">\n"
      "  <key id=\"cluster_id\" for=\"node\" attr.name=\"cluster_id\" attr.type=\"int\"/>\n"
      "  <key id=\"weight\" for=\"edge\" attr.name=\"weight\" attr.type=\"double\"/>\n"
      "  <graph id=\"G\" edgedefault=\"undirected\">\n";
  for (std::size_t v = 0; v < net.nodes(); ++v)
    out += "    <node id=\"" + detail::xml_escape(net.labels()[v]) + "\"><data key=\"cluster_id\">" +
           std::to_string(membership[v]) + "</data></node>\n";
  for (const auto& e : net.edges())
    out += "    <edge source=\"" + detail::xml_escape(net.labels()[e.i]) + "\" target=\"" +
           detail::xml_escape(net.labels()[e.j]) + "\"><data key=\"weight\">" + format_number(e.weight) +
           "</data></edge>\n";
  out += "  </graph>\n</graphml>\n";
  return out;
}

inline void export_graph(const ThresholdedNetwork& net, const ClusterSet& clusters, const fs::path& path) {
  write_text(path, graphml(net, clusters));
}

// ---------------------------------------------------------------------------
// Tables and reports

inline std::string density_tsv(const std::vector<DensityRow>& rows) {
  std::string out = "condition\tsign\tpercentile\tmean_density\tse\tn_ok\n";
  for (const auto& r : rows)
    out += r.condition + '\t' + std::string(to_string(r.sign)) + '\t' + format_number(r.percentile) + '\t' +
           format_number(r.mean_density) + '\t' + format_number(r.se) + '\t' + std::to_string(r.n_ok) + '\n';
  return out;
}

inline json feature_set_to_json(const FeatureSet& f, const std::vector<std::string>& labels) {
  json doc;
  doc["mode"] = std::string(to_string(f.source().mode));
  if (f.source().threshold) {
    doc["sign"] = std::string(to_string(f.source().threshold->sign));
    doc["percentile"] = f.source().threshold->percentile;
  }
  auto names = [&](const NodeSet& nodes) {
    json arr = json::array();
    for (auto v : nodes) arr.push_back(labels[v]);
    return arr;
  };
  doc["cluster_a"] = names(f.source().cluster_a);
  doc["cluster_c"] = names(f.source().cluster_c);
  doc["pairs"] = json::array();
  for (const auto& [i, j] : f.pairs()) doc["pairs"].push_back({labels[i], labels[j]});
  return doc;
}

inline json report_to_json(const ClassificationReport& r) {
  json doc;
  doc["mode"] = std::string(to_string(r.mode));
  if (r.threshold) {
    doc["sign"] = std::string(to_string(r.threshold->sign));
    doc["percentile"] = r.threshold->percentile;
  } else {
    doc["sign"] = nullptr;
    doc["percentile"] = nullptr;
  }
  doc["accuracy"] = r.accuracy;
  doc["p_value"] = r.p_value;
  doc["n_perm"] = r.n_perm;
  doc["seed"] = r.seed;
  doc["feature_count"] = r.feature_count;
  doc["complete"] = r.complete;
  doc["folds"] = json::array();
  for (const auto& f : r.folds) {
    json fold;
    fold["held_out"] = f.held_out;
    fold["label_for_a"] = f.label_for_a;
    fold["label_for_c"] = f.label_for_c;
    fold["score_true_pairing"] = f.score_true_pairing;
    fold["score_swapped_pairing"] = f.score_swapped_pairing;
    fold["ambiguous"] = f.ambiguous;
    fold["correct"] = f.correct;
    fold["feature_count"] = f.feature_count;
    fold["error"] = f.error ? json(*f.error) : json(nullptr);
    doc["folds"].push_back(std::move(fold));
  }
  doc["permutation_null"] = r.permutation_null;
  return doc;
}

inline void write_report(const ClassificationReport& r, const fs::path& path) { write_json(path, report_to_json(r)); }

// ---------------------------------------------------------------------------
// Synthetic specifications

inline json synth_spec_to_json(const SynthSpec& s) {
  json doc;
  doc["n_participants"] = s.n_participants;
  doc["n_rois"] = s.n_rois;
  doc["timepoints"] = s.timepoints;
  doc["tr"] = s.tr;
  doc["condition_a"] = s.condition_a;
  doc["condition_c"] = s.condition_c;
  doc["fixation"] = s.fixation;
  const auto& b = s.schedule;
  doc["schedule"] = {{"event_duration", b.event_duration},
                     {"rest_duration", b.rest_duration},
                     {"events_per_condition", b.events_per_condition},
                     {"events_per_block", b.events_per_block},
                     {"fixation_blocks", b.fixation_blocks},
                     {"fixation_duration", b.fixation_duration},
                     {"lead_in", b.lead_in},
                     {"tail", b.tail}};
  doc["clusters"] = json::array();
  for (const auto& c : s.clusters)
    doc["clusters"].push_back({{"condition", c.condition}, {"nodes", c.nodes}, {"coupling", c.coupling}});
  doc["noise_sigma"] = s.noise_sigma;
  doc["participant_variability"] = s.participant_variability;
  doc["seed"] = s.seed;
  return doc;
}

/// Missing fields keep their defaults.
inline SynthSpec synth_spec_from_json(const json& doc) {
  SynthSpec s;
  try {
    auto get = [&](const json& obj, const char* key, auto& field) {
      if (obj.contains(key)) field = obj.at(key).get<std::decay_t<decltype(field)>>();
    };
    get(doc, "n_participants", s.n_participants);
    get(doc, "n_rois", s.n_rois);
    get(doc, "timepoints", s.timepoints);
    get(doc, "tr", s.tr);
    get(doc, "condition_a", s.condition_a);
    get(doc, "condition_c", s.condition_c);
    get(doc, "fixation", s.fixation);
    if (doc.contains("schedule")) {
      const auto& b = doc.at("schedule");
      get(b, "event_duration", s.schedule.event_duration);
      get(b, "rest_duration", s.schedule.rest_duration);
      get(b, "events_per_condition", s.schedule.events_per_condition);
      get(b, "events_per_block", s.schedule.events_per_block);
      get(b, "fixation_blocks", s.schedule.fixation_blocks);
      get(b, "fixation_duration", s.schedule.fixation_duration);
      get(b, "lead_in", s.schedule.lead_in);
      get(b, "tail", s.schedule.tail);
    }
    if (doc.contains("clusters"))
      for (const auto& c : doc.at("clusters"))
        s.clusters.push_back({c.at("condition").get<std::string>(), c.at("nodes").get<NodeSet>(),
                              c.at("coupling").get<double>()});
    get(doc, "noise_sigma", s.noise_sigma);
    get(doc, "participant_variability", s.participant_variability);
    get(doc, "seed", s.seed);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::parse_error, std::string("synthetic spec: ") + e.what());
  }
  validate(s);
  return s;
}

inline json ground_truth_to_json(const GroundTruth& g, const std::vector<std::string>& labels) {
  json doc;
  doc["clusters"] = json::array();
  for (std::size_t k = 0; k < g.clusters.size(); ++k) {
    json names = json::array();
    for (auto v : g.clusters[k].nodes) names.push_back(labels[v]);
    json per = json::object();
    for (std::size_t p = 0; p < g.participants.size(); ++p) per[g.participants[p]] = g.coupling[p][k];
    doc["clusters"].push_back({{"condition", g.clusters[k].condition},
                               {"nodes", g.clusters[k].nodes},
                               {"labels", names},
                               {"coupling", g.clusters[k].coupling},
                               {"participant_coupling", per}});
  }
  return doc;
}

}  // namespace fcnet::io
