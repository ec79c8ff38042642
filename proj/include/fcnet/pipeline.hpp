#pragma once

// End-to-end workflow behind the command-line tool. Each cmd_* function reads
// its inputs from disk, writes its outputs under RunConfig::out and returns
// the number of failed cells or folds (0 means success).
//
// Dataset manifest (written by cmd_synth, read by cmd_connectivity):
//   {"condition_a", "condition_c", "fixation",
//    "participants": [{"id", "timeseries", "events"}]}
// Matrices manifest (written by cmd_connectivity, read by cluster/classify):
//   {"condition_a", "condition_c", "kind",
//    "participants": [{"id", "matrices": {<condition>: <csv>}}],
//    "failures": [{"participant", "error"}]}
// Relative paths resolve against the manifest's directory.

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "fcnet/classify.hpp"
#include "fcnet/connectivity.hpp"
#include "fcnet/dse.hpp"
#include "fcnet/io.hpp"
#include "fcnet/netstats.hpp"
#include "fcnet/synth.hpp"

namespace fcnet {

namespace fs = std::filesystem;

/// The twelve levels of the original protocol: six positive, six negative.
inline std::vector<ThresholdSpec> default_thresholds() {
  std::vector<ThresholdSpec> out;
  for (double q : {0.75, 0.80, 0.85, 0.90, 0.95, 0.99}) out.push_back({Sign::positive, q});
  for (double q : {0.01, 0.05, 0.10, 0.15, 0.20, 0.25}) out.push_back({Sign::negative, q});
  return out;
}

/// "positive:0.95" or "negative:0.05".
inline ThresholdSpec parse_threshold(const std::string& text) {
  const auto colon = text.find(':');
  require(colon != std::string::npos, ErrorKind::parse_error, "threshold '" + text + "' must look like sign:percentile");
  ThresholdSpec t{parse_sign(text.substr(0, colon)), io::parse_number(text.substr(colon + 1), "threshold '" + text + "'")};
  require(t.percentile > 0.0 && t.percentile < 1.0, ErrorKind::invalid_argument,
          "threshold percentile must lie in (0, 1)");
  return t;
}

inline std::string threshold_tag(const ThresholdSpec& t) {
  return std::string(to_string(t.sign)) + "_" + io::format_number(t.percentile);
}

struct RunConfig {
  fs::path dataset;   // dataset manifest
  fs::path matrices;  // matrices manifest
  fs::path out = "out";
  bool baseline = false;  // subtract the fixation matrix
  bool raw_cov = false;
  bool detrend = false;
  std::vector<ThresholdSpec> thresholds = default_thresholds();
  DseParams dse;
  bool binarize = false;
  bool cluster_subset = true;  // density of the primary cluster, not the whole graph
  std::vector<FeatureMode> modes{FeatureMode::dse_union};
  std::size_t n_perm = 1000;
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
  std::ostream* log = nullptr;  // structured progress lines
};

namespace detail {

inline fs::path resolve_against(const fs::path& manifest, const std::string& rel) {
  const fs::path p(rel);
  return p.is_absolute() ? p : manifest.parent_path() / p;
}

inline void log_line(const RunConfig& cfg, const std::string& line) {
  if (cfg.log) *cfg.log << line << '\n';
}

}  // namespace detail

// ---------------------------------------------------------------------------

inline int cmd_synth(const SynthSpec& spec, const fs::path& out, std::size_t jobs = 1) {
  const auto data = generate_dataset(spec, jobs);
  io::json manifest;
  manifest["condition_a"] = spec.condition_a;
  manifest["condition_c"] = spec.condition_c;
  manifest["fixation"] = spec.fixation;
  manifest["participants"] = io::json::array();
  for (const auto& ts : data.series) {
    const std::string ts_rel = ts.participant() + "_timeseries.csv";
    const std::string ev_rel = ts.participant() + "_events.tsv";
    io::write_timeseries(ts, out / ts_rel);
    io::write_events(data.events, out / ev_rel);
    manifest["participants"].push_back({{"id", ts.participant()}, {"timeseries", ts_rel}, {"events", ev_rel}});
  }
  io::write_json(out / "dataset.json", manifest);
  io::write_json(out / "synth_spec.json", io::synth_spec_to_json(spec));
  io::write_json(out / "ground_truth.json", io::ground_truth_to_json(data.truth, roi_labels(spec.n_rois)));
  return 0;
}

// ---------------------------------------------------------------------------

struct DatasetEntry {
  std::string id;
  fs::path timeseries;
  fs::path events;
};

struct DatasetManifest {
  std::string condition_a;
  std::string condition_c;
  std::optional<std::string> fixation;
  std::vector<DatasetEntry> participants;
};

inline DatasetManifest read_dataset_manifest(const fs::path& path) {
  const auto doc = io::read_json(path);
  DatasetManifest m;
  m.condition_a = io::detail::json_get<std::string>(doc, "condition_a", path);
  m.condition_c = io::detail::json_get<std::string>(doc, "condition_c", path);
  if (doc.contains("fixation") && doc.at("fixation").is_string()) m.fixation = doc.at("fixation").get<std::string>();
  for (const auto& p : io::detail::json_get<io::json>(doc, "participants", path)) {
    DatasetEntry e{io::detail::json_get<std::string>(p, "id", path),
                   detail::resolve_against(path, io::detail::json_get<std::string>(p, "timeseries", path)),
                   detail::resolve_against(path, io::detail::json_get<std::string>(p, "events", path))};
    m.participants.push_back(std::move(e));
  }
  require(!m.participants.empty(), ErrorKind::parse_error, path.string() + ": no participants");
  return m;
}

/// Condition matrices for one participant (A and C, baseline-differenced when requested).
inline std::map<std::string, ConnectivityMatrix> participant_matrices(const DatasetEntry& entry,
                                                                      const DatasetManifest& manifest,
                                                                      const RunConfig& cfg) {
  require(fs::exists(entry.timeseries), ErrorKind::io_error, "missing time series '" + entry.timeseries.string() + "'");
  require(fs::exists(entry.events), ErrorKind::io_error, "missing events '" + entry.events.string() + "'");
  auto ts = io::read_timeseries(entry.timeseries);
  require(ts.participant() == entry.id, ErrorKind::label_mismatch,
          "time series belongs to '" + ts.participant() + "', manifest says '" + entry.id + "'");
  const auto events = io::read_events(entry.events, manifest.fixation);
  events.validate_against(ts.timepoints(), ts.tr());
  if (cfg.detrend) ts = detrend(ts);
  const CorrelationOptions opts{cfg.raw_cov};
  auto matrix_for = [&](const std::string& condition) {
    return condition_connectivity(ts, build_weight_vector(events, condition, ts.timepoints(), ts.tr()), opts);
  };
  std::optional<ConnectivityMatrix> fixation;
  if (cfg.baseline) {
    require(manifest.fixation.has_value() && events.fixation().has_value(), ErrorKind::unknown_condition,
            "baseline differencing needs fixation events");
    fixation = matrix_for(*manifest.fixation);
  }
  std::map<std::string, ConnectivityMatrix> out;
  for (const auto& c : {manifest.condition_a, manifest.condition_c}) {
    auto m = matrix_for(c);
    out.emplace(c, fixation ? baseline_difference(m, *fixation) : std::move(m));
  }
  return out;
}

inline int cmd_connectivity(const RunConfig& cfg) {
  const auto manifest = read_dataset_manifest(cfg.dataset);
  const std::size_t count = manifest.participants.size();
  std::vector<std::optional<std::map<std::string, ConnectivityMatrix>>> results(count);
  std::vector<std::string> errors(count);
  parallel_for(count, cfg.jobs, [&](std::size_t k) {
    try {
      results[k] = participant_matrices(manifest.participants[k], manifest, cfg);
    } catch (const std::exception& e) {
      errors[k] = e.what();
    }
  });

  io::json doc;
  doc["condition_a"] = manifest.condition_a;
  doc["condition_c"] = manifest.condition_c;
  doc["kind"] = std::string(to_string(cfg.baseline ? MatrixKind::baseline_differenced : MatrixKind::raw));
  doc["participants"] = io::json::array();
  doc["failures"] = io::json::array();
  int failures = 0;
  for (std::size_t k = 0; k < count; ++k) {
    const auto& id = manifest.participants[k].id;
    if (!results[k]) {
      ++failures;
      doc["failures"].push_back({{"participant", id}, {"error", errors[k]}});
      detail::log_line(cfg, "connectivity participant=" + id + " status=failed error=\"" + errors[k] + "\"");
      continue;
    }
    io::json files = io::json::object();
    for (const auto& [cond, mat] : *results[k]) {
      const std::string rel = "matrices/" + id + "_" + cond + ".csv";
      io::write_matrix(mat, cfg.out / rel);
      files[cond] = rel;
    }
    doc["participants"].push_back({{"id", id}, {"matrices", files}});
    detail::log_line(cfg, "connectivity participant=" + id + " status=ok");
  }
  io::write_json(cfg.out / "matrices.json", doc);
  return failures;
}

// ---------------------------------------------------------------------------

/// Loads every participant listed in a matrices manifest.
inline ParticipantSet load_participants(const fs::path& manifest_path) {
  const auto doc = io::read_json(manifest_path);
  const auto a = io::detail::json_get<std::string>(doc, "condition_a", manifest_path);
  const auto c = io::detail::json_get<std::string>(doc, "condition_c", manifest_path);
  std::map<std::string, ParticipantSet::ByCondition> entries;
  for (const auto& p : io::detail::json_get<io::json>(doc, "participants", manifest_path)) {
    const auto id = io::detail::json_get<std::string>(p, "id", manifest_path);
    const auto files = io::detail::json_get<io::json>(p, "matrices", manifest_path);
    ParticipantSet::ByCondition by;
    for (const auto& cond : {a, c}) {
      require(files.contains(cond), ErrorKind::parse_error,
              manifest_path.string() + ": participant '" + id + "' lacks condition '" + cond + "'");
      const auto path = detail::resolve_against(manifest_path, files.at(cond).get<std::string>());
      require(fs::exists(path), ErrorKind::io_error, "missing matrix '" + path.string() + "'");
      auto mat = io::read_matrix(path, id, cond);
      require(mat.participant() == id && mat.condition() == cond, ErrorKind::label_mismatch,
              path.string() + ": metadata does not match the manifest");
      by.emplace(cond, std::move(mat));
    }
    require(entries.emplace(id, std::move(by)).second, ErrorKind::parse_error,
            manifest_path.string() + ": duplicate participant '" + id + "'");
  }
  return ParticipantSet(std::move(entries), a, c);
}

/// Similarity-weighted average of one condition over all participants.
inline ConnectivityMatrix group_average(const ParticipantSet& participants, const std::string& condition) {
  std::vector<const ConnectivityMatrix*> mats;
  for (const auto& id : participants.participant_ids()) mats.push_back(&participants.at(id, condition));
  if (mats.size() == 1) return weighted_average(mats, Vector::Ones(1));
  return weighted_average(mats, participant_weights(mats));
}

inline int cmd_cluster(const RunConfig& cfg) {
  require(!cfg.thresholds.empty(), ErrorKind::invalid_argument, "no thresholds configured");
  const auto participants = load_participants(cfg.matrices);
  const std::vector<std::string> conditions{participants.condition_a(), participants.condition_c()};
  std::vector<ConnectivityMatrix> averages;
  for (const auto& c : conditions) averages.push_back(group_average(participants, c));

  int failures = 0;
  std::string summary = "condition\tsign\tpercentile\tstatus\tstop_step\tepsilon\tclusters\tprimary_size\terror\n";
  for (const auto& t : cfg.thresholds) {
    for (std::size_t k = 0; k < conditions.size(); ++k) {
      const std::string tag = conditions[k] + "_" + threshold_tag(t);
      const std::string prefix = "dse condition=" + conditions[k] + " sign=" + std::string(to_string(t.sign)) +
                                 " percentile=" + io::format_number(t.percentile);
      try {
        const auto net = percentile_threshold(averages[k], t.percentile, t.sign, cfg.binarize);
        const auto result = run_dse(net, cfg.dse, [&](const TracePoint& p) {
          detail::log_line(cfg, prefix + " step=" + std::to_string(p.step) + " score=" + io::format_number(p.value));
        });
        const auto& cs = result.clusters;
        io::write_clusters(cs, net.labels(), cfg.out / "clusters" / (tag + ".json"));
        io::export_graph(net, cs, cfg.out / "clusters" / (tag + ".graphml"));
        const std::size_t primary = cs.primary() ? cs.primary()->size() : 0;
        detail::log_line(cfg, prefix + " stop status=" + std::string(to_string(cs.status())) +
                                  " stop_step=" + std::to_string(cs.stop_step()) +
                                  " clusters=" + std::to_string(cs.clusters().size()));
        summary += conditions[k] + '\t' + std::string(to_string(t.sign)) + '\t' + io::format_number(t.percentile) +
                   '\t' + std::string(to_string(cs.status())) + '\t' + std::to_string(cs.stop_step()) + '\t' +
                   io::format_number(cs.epsilon()) + '\t' + std::to_string(cs.clusters().size()) + '\t' +
                   std::to_string(primary) + "\t\n";
      } catch (const Error& e) {
        ++failures;
        detail::log_line(cfg, prefix + " status=missing error=\"" + e.what() + "\"");
        summary += conditions[k] + '\t' + std::string(to_string(t.sign)) + '\t' + io::format_number(t.percentile) +
                   "\tmissing\t\t\t\t\t" + e.what() + '\n';
      }
    }
  }
  io::write_text(cfg.out / "clusters" / "summary.tsv", summary);

  std::vector<DensityRow> rows;
  if (participants.participants() >= 2) {
    for (Sign sign : {Sign::positive, Sign::negative}) {
      std::vector<double> qs;
      for (const auto& t : cfg.thresholds)
        if (t.sign == sign) qs.push_back(t.percentile);
      if (qs.empty()) continue;
      const auto part =
          density_sweep(participants, qs, sign, cfg.dse, {cfg.cluster_subset, cfg.binarize, cfg.jobs});
      for (const auto& r : part) {
        if (r.n_ok < participants.participants()) ++failures;
        rows.push_back(r);
      }
    }
  }
  io::write_text(cfg.out / "density.tsv", io::density_tsv(rows));
  return failures;
}

// ---------------------------------------------------------------------------

inline int cmd_classify(const RunConfig& cfg) {
  require(!cfg.thresholds.empty(), ErrorKind::invalid_argument, "no thresholds configured");
  require(!cfg.modes.empty(), ErrorKind::invalid_argument, "no feature modes configured");
  const auto participants = load_participants(cfg.matrices);
  int failures = 0;
  std::string summary = "mode\tsign\tpercentile\taccuracy\tp_value\tfeature_count\tcomplete\n";
  for (FeatureMode mode : cfg.modes) {
    // Without feature selection the threshold plays no role; run it once.
    std::vector<std::optional<ThresholdSpec>> levels;
    if (mode == FeatureMode::all_elements) levels.emplace_back();
    else levels.assign(cfg.thresholds.begin(), cfg.thresholds.end());
    for (const auto& level : levels) {
      ClassifyConfig cc;
      cc.mode = mode;
      if (level) cc.threshold = *level;
      cc.binarize = cfg.binarize;
      cc.dse = cfg.dse;
      cc.n_perm = cfg.n_perm;
      cc.seed = cfg.seed;
      cc.jobs = cfg.jobs;
      const auto report = classify(participants, cc);
      const std::string name =
          "report_" + std::string(to_string(mode)) + (level ? "_" + threshold_tag(*level) : std::string()) + ".json";
      io::write_report(report, cfg.out / "reports" / name);
      if (!report.complete) ++failures;
      summary += std::string(to_string(mode)) + '\t' + (level ? std::string(to_string(level->sign)) : "") + '\t' +
                 (level ? io::format_number(level->percentile) : "") + '\t' + io::format_number(report.accuracy) +
                 '\t' + io::format_number(report.p_value) + '\t' + std::to_string(report.feature_count) + '\t' +
                 (report.complete ? "true" : "false") + '\n';
      detail::log_line(cfg, "classify mode=" + std::string(to_string(mode)) +
                                (level ? " sign=" + std::string(to_string(level->sign)) +
                                             " percentile=" + io::format_number(level->percentile)
                                       : std::string()) +
                                " accuracy=" + io::format_number(report.accuracy) +
                                " p_value=" + io::format_number(report.p_value));
    }
  }
  io::write_text(cfg.out / "reports" / "summary.tsv", summary);
  return failures;
}

}  // namespace fcnet
