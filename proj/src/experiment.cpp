// Copyright 2026 The iwprune Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// =============================================================================

#include "iwp/experiment.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "iwp/error.hpp"

namespace iwp {

using json = nlohmann::ordered_json;

namespace {

constexpr std::size_t kOpenEnded = std::numeric_limits<std::size_t>::max();

// Reads one JSON object, remembering which keys were consumed so that
// anything left over can be rejected.
class Section {
 public:
  Section(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) fail(ErrorKind::kConfig, where() + "must be an object");
  }

  std::string field(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  const json* find(const std::string& key) {
    seen_.insert(key);
    auto it = obj_.find(key);
    return it == obj_.end() ? nullptr : &*it;
  }

  void read(const std::string& key, double& out) {
    if (const json* v = find(key)) {
      if (!v->is_number()) bad(key, "must be a number");
      out = v->get<double>();
    }
  }

  void read(const std::string& key, std::size_t& out) {
    if (const json* v = find(key)) out = to_count(*v, field(key));
  }

  void read_u64(const std::string& key, std::uint64_t& out) {
    if (const json* v = find(key)) out = to_count(*v, field(key));
  }

  void read(const std::string& key, bool& out) {
    if (const json* v = find(key)) {
      if (!v->is_boolean()) bad(key, "must be true or false");
      out = v->get<bool>();
    }
  }

  void read(const std::string& key, std::string& out) {
    if (const json* v = find(key)) {
      if (!v->is_string()) bad(key, "must be a string");
      out = v->get<std::string>();
    }
  }

  // null means "absent"
  void read(const std::string& key, std::optional<double>& out) {
    if (const json* v = find(key)) {
      if (v->is_null()) {
        out.reset();
      } else if (v->is_number()) {
        out = v->get<double>();
      } else {
        bad(key, "must be a number or null");
      }
    }
  }

  void read(const std::string& key, EpochSchedule& out) {
    const json* v = find(key);
    if (v == nullptr) return;
    const std::string f = field(key);
    if (v->is_number()) {
      out = constant_schedule(v->get<double>());
      return;
    }
    if (!v->is_array()) {
      fail(ErrorKind::kConfig,
           f + ": must be a number or a list of {from, to, value}");
    }
    out.clear();
    for (std::size_t i = 0; i < v->size(); ++i) {
      Section item((*v)[i], f + "[" + std::to_string(i) + "]");
      EpochValue ev;
      ev.last_epoch = kOpenEnded;
      item.read("from", ev.first_epoch);
      if (const json* to = item.find("to"); to != nullptr && !to->is_null()) {
        ev.last_epoch = to_count(*to, item.field("to"));
      }
      if (item.find("value") == nullptr) {
        fail(ErrorKind::kConfig, item.field("value") + ": is required");
      }
      item.read("value", ev.value);
      item.finish();
      out.push_back(ev);
    }
  }

  Section child(const std::string& key) {
    static const json kEmpty = json::object();
    const json* v = find(key);
    return Section(v ? *v : kEmpty, field(key));
  }

  void finish() const {
    for (auto it = obj_.begin(); it != obj_.end(); ++it) {
      if (!seen_.contains(it.key())) {
        fail(ErrorKind::kConfig, field(it.key()) + ": unknown key");
      }
    }
  }

 private:
  std::string where() const { return path_.empty() ? "config: " : path_ + ": "; }

  [[noreturn]] void bad(const std::string& key, const std::string& msg) const {
    fail(ErrorKind::kConfig, field(key) + ": " + msg);
  }

  static std::size_t to_count(const json& v, const std::string& f) {
    if (!v.is_number_integer() ||
        (!v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
      fail(ErrorKind::kConfig, f + ": must be a non-negative integer");
    }
    return v.get<std::size_t>();
  }

  const json& obj_;
  std::string path_;
  std::set<std::string> seen_;
};

json schedule_to_json(const EpochSchedule& s) {
  if (s.size() == 1 && s[0].first_epoch == 0 && s[0].last_epoch == kOpenEnded) {
    return s[0].value;
  }
  json arr = json::array();
  for (const EpochValue& ev : s) {
    json item;
    item["from"] = ev.first_epoch;
    item["to"] = ev.last_epoch == kOpenEnded ? json(nullptr) : json(ev.last_epoch);
    item["value"] = ev.value;
    arr.push_back(item);
  }
  return arr;
}

TaskKind parse_task_kind(const std::string& s) {
  if (s == "linear_regression") return TaskKind::kLinearRegression;
  if (s == "mlp_classification") return TaskKind::kMlpClassification;
  fail(ErrorKind::kConfig,
       "task.kind: expected linear_regression or mlp_classification, got '" +
           s + "'");
}

Mode parse_mode(const std::string& s) {
  if (s == "dense") return Mode::kDense;
  if (s == "compressed") return Mode::kCompressed;
  if (s == "dgc_contrast") return Mode::kDgcContrast;
  fail(ErrorKind::kConfig,
       "mode: expected dense, compressed or dgc_contrast, got '" + s + "'");
}

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kConfig, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::kIo, "cannot write " + path.string());
  out << text;
  if (!out) fail(ErrorKind::kIo, "failed writing " + path.string());
}

}  // namespace

ExperimentConfig default_config() {
  ExperimentConfig cfg;
  cfg.threshold.alpha = constant_schedule(0.01);
  cfg.threshold.beta = constant_schedule(0.0);
  return cfg;
}

void ExperimentConfig::validate() const {
  training.validate();
  if (task.n_samples == 0) fail(ErrorKind::kConfig, "task.n_samples: must be > 0");
  if (task.input_dim == 0) fail(ErrorKind::kConfig, "task.input_dim: must be > 0");
  if (task.kind == TaskKind::kMlpClassification) {
    if (task.hidden_dim == 0) fail(ErrorKind::kConfig, "task.hidden_dim: must be > 0");
    if (task.n_classes < 2) fail(ErrorKind::kConfig, "task.n_classes: must be >= 2");
  }
  if (!(task.noise >= 0.0) || !std::isfinite(task.noise)) {
    fail(ErrorKind::kConfig, "task.noise: must be a finite value >= 0");
  }
  if (task.n_samples / training.n_nodes < training.batch_size) {
    fail(ErrorKind::kConfig,
         "training.batch_size: larger than the per-node shard (n_samples / "
         "n_nodes = " +
             std::to_string(task.n_samples / training.n_nodes) + ")");
  }
  threshold.validate(training.epochs);
  if (mask.n_selected < 1 || mask.n_selected > training.n_nodes) {
    fail(ErrorKind::kConfig, "mask_agreement.n_selected: must be in [1, n_nodes = " +
                                 std::to_string(training.n_nodes) + "]");
  }
  if (output_dir.empty()) fail(ErrorKind::kConfig, "output_dir: must not be empty");
}

ExperimentConfig parse_config(std::string_view text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::kConfig, std::string("config is not valid JSON: ") + e.what());
  }
  ExperimentConfig cfg = default_config();
  Section top(root, "");

  std::string mode = to_string(cfg.mode);
  top.read("mode", mode);
  cfg.mode = parse_mode(mode);
  top.read("output_dir", cfg.output_dir);

  Section task = top.child("task");
  std::string kind = to_string(cfg.task.kind);
  task.read("kind", kind);
  cfg.task.kind = parse_task_kind(kind);
  task.read("n_samples", cfg.task.n_samples);
  task.read("input_dim", cfg.task.input_dim);
  task.read("hidden_dim", cfg.task.hidden_dim);
  task.read("n_classes", cfg.task.n_classes);
  task.read("bias", cfg.task.bias);
  task.read("noise", cfg.task.noise);
  task.read_u64("seed", cfg.task.seed);
  task.finish();

  Section tr = top.child("training");
  tr.read("momentum", cfg.training.momentum);
  tr.read("learning_rate", cfg.training.learning_rate);
  tr.read("lr_decay_factor", cfg.training.lr_decay_factor);
  tr.read("lr_decay_every", cfg.training.lr_decay_every);
  tr.read("batch_size", cfg.training.batch_size);
  tr.read("n_nodes", cfg.training.n_nodes);
  tr.read("clip_norm", cfg.training.clip_norm);
  tr.read_u64("seed", cfg.training.seed);
  tr.read("epochs", cfg.training.epochs);
  tr.read("importance_eps", cfg.training.importance_eps);
  tr.read("dgc_density", cfg.training.dgc_density);
  tr.read("momentum_masking", cfg.training.momentum_masking);
  tr.finish();

  Section wire = top.child("wire");
  wire.read("value_bytes", cfg.training.wire.value_bytes);
  wire.read("index_bytes", cfg.training.wire.index_bytes);
  wire.finish();

  Section th = top.child("threshold");
  th.read("alpha", cfg.threshold.alpha);
  th.read("beta", cfg.threshold.beta);
  th.read("ratio_cutoff", cfg.threshold.ratio_cutoff);
  th.read("thr_min", cfg.threshold.thr_min);
  std::optional<double> thr_max;
  if (std::isfinite(cfg.threshold.thr_max)) thr_max = cfg.threshold.thr_max;
  th.read("thr_max", thr_max);
  cfg.threshold.thr_max =
      thr_max ? *thr_max : std::numeric_limits<double>::infinity();
  th.read("warmup_epochs", cfg.threshold.warmup_epochs);
  th.read("scale", cfg.threshold.scale);
  th.read("probabilistic", cfg.threshold.probabilistic);
  th.finish();

  Section mk = top.child("mask_agreement");
  mk.read("n_selected", cfg.mask.n_selected);
  mk.read_u64("shared_seed", cfg.mask.shared_seed);
  mk.finish();

  top.finish();
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  return parse_config(read_file(path));
}

std::string manifest_json(const ExperimentConfig& cfg) {
  json root;
  root["mode"] = to_string(cfg.mode);
  root["output_dir"] = cfg.output_dir;
  json& task = root["task"];
  task["kind"] = to_string(cfg.task.kind);
  task["n_samples"] = cfg.task.n_samples;
  task["input_dim"] = cfg.task.input_dim;
  task["hidden_dim"] = cfg.task.hidden_dim;
  task["n_classes"] = cfg.task.n_classes;
  task["bias"] = cfg.task.bias;
  task["noise"] = cfg.task.noise;
  task["seed"] = cfg.task.seed;
  json& tr = root["training"];
  tr["momentum"] = cfg.training.momentum;
  tr["learning_rate"] = cfg.training.learning_rate;
  tr["lr_decay_factor"] = cfg.training.lr_decay_factor;
  tr["lr_decay_every"] = cfg.training.lr_decay_every;
  tr["batch_size"] = cfg.training.batch_size;
  tr["n_nodes"] = cfg.training.n_nodes;
  tr["clip_norm"] =
      cfg.training.clip_norm ? json(*cfg.training.clip_norm) : json(nullptr);
  tr["seed"] = cfg.training.seed;
  tr["epochs"] = cfg.training.epochs;
  tr["importance_eps"] = cfg.training.importance_eps;
  tr["dgc_density"] = cfg.training.dgc_density;
  tr["momentum_masking"] = cfg.training.momentum_masking;
  json& wire = root["wire"];
  wire["value_bytes"] = cfg.training.wire.value_bytes;
  wire["index_bytes"] = cfg.training.wire.index_bytes;
  json& th = root["threshold"];
  th["alpha"] = schedule_to_json(cfg.threshold.alpha);
  th["beta"] = schedule_to_json(cfg.threshold.beta);
  th["ratio_cutoff"] = cfg.threshold.ratio_cutoff;
  th["thr_min"] = cfg.threshold.thr_min;
  th["thr_max"] = std::isfinite(cfg.threshold.thr_max)
                      ? json(cfg.threshold.thr_max)
                      : json(nullptr);
  th["warmup_epochs"] = cfg.threshold.warmup_epochs;
  th["scale"] = cfg.threshold.scale.empty() ? json::array()
                                            : schedule_to_json(cfg.threshold.scale);
  th["probabilistic"] = cfg.threshold.probabilistic;
  json& mk = root["mask_agreement"];
  mk["n_selected"] = cfg.mask.n_selected;
  mk["shared_seed"] = cfg.mask.shared_seed;
  return root.dump(2) + "\n";
}

ExperimentResult run_config(const ExperimentConfig& cfg) {
  cfg.validate();
  const ToyTask task(cfg.task, cfg.training.n_nodes, cfg.training.batch_size,
                     cfg.training.seed);
  return run_experiment(task, cfg.training, cfg.threshold, cfg.mask, cfg.mode);
}

void write_metrics_csv(std::ostream& out, const std::vector<MetricsRow>& rows) {
  out << "step,epoch,mode,loss,accuracy,mean_density,compression_ratio,"
         "bytes_total,staleness_p50,staleness_p90,staleness_max\n";
  for (const MetricsRow& r : rows) {
    out << r.step << ',' << r.epoch << ',' << to_string(r.mode) << ','
        << format_number(r.loss) << ',' << format_number(r.accuracy) << ','
        << format_number(r.mean_density) << ','
        << format_number(r.compression_ratio) << ',' << r.bytes_total << ','
        << r.staleness_p50 << ',' << r.staleness_p90 << ',' << r.staleness_max
        << '\n';
  }
}

void write_run(const std::filesystem::path& dir, const ExperimentConfig& cfg,
               const ExperimentResult& result) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail(ErrorKind::kIo, "cannot create " + dir.string() + ": " + ec.message());
  std::ostringstream metrics;
  write_metrics_csv(metrics, result.rows);
  write_file(dir / kMetricsFile, metrics.str());
  std::ostringstream bandwidth;
  write_bandwidth_csv(bandwidth,
                      bandwidth_report(result.stats, cfg.training.n_nodes));
  write_file(dir / kBandwidthFile, bandwidth.str());
  write_file(dir / kManifestFile, manifest_json(cfg));
}

RunSummary summarize(const std::vector<MetricsRow>& rows) {
  RunSummary s;
  if (rows.empty()) return s;
  s.final_loss = rows.back().loss;
  s.final_accuracy = rows.back().accuracy;
  // Every step moves the same dense payload, so the harmonic mean of the
  // per-step ratios is total dense bytes over total sparse bytes.
  double inv_cr = 0.0, density = 0.0, bytes = 0.0;
  for (const MetricsRow& r : rows) {
    bytes += static_cast<double>(r.bytes_total);
    if (r.step == 0) continue;
    ++s.steps;
    inv_cr += 1.0 / r.compression_ratio;
    density += r.mean_density;
  }
  constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
  s.mean_compression_ratio =
      s.steps ? static_cast<double>(s.steps) / inv_cr : kNaN;
  s.mean_density = s.steps ? density / static_cast<double>(s.steps) : kNaN;
  s.bytes_total = bytes;
  return s;
}

RunSummary summarize_metrics_csv(const std::filesystem::path& metrics_csv) {
  std::istringstream in(read_file(metrics_csv));
  std::string line;
  std::getline(in, line);
  if (line.rfind("step,epoch,mode,loss,accuracy,mean_density,compression_ratio,"
                 "bytes_total",
                 0) != 0) {
    fail(ErrorKind::kConfig, metrics_csv.string() + ": unexpected header");
  }
  std::vector<MetricsRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cols.push_back(cell);
    if (cols.size() != 11) {
      fail(ErrorKind::kConfig, metrics_csv.string() + ": malformed row '" +
                                   line + "'");
    }
    MetricsRow r;
    r.step = std::stoull(cols[0]);
    r.epoch = std::stoull(cols[1]);
    r.loss = std::strtod(cols[3].c_str(), nullptr);
    r.accuracy = std::strtod(cols[4].c_str(), nullptr);
    r.mean_density = std::strtod(cols[5].c_str(), nullptr);
    r.compression_ratio = std::strtod(cols[6].c_str(), nullptr);
    r.bytes_total = std::stoull(cols[7]);
    rows.push_back(r);
  }
  return summarize(rows);
}

Comparison compare_runs(const std::filesystem::path& dir_a,
                        const std::filesystem::path& dir_b) {
  const ExperimentConfig a = load_config(dir_a / kManifestFile);
  const ExperimentConfig b = load_config(dir_b / kManifestFile);
  if (!(a.task == b.task)) {
    fail(ErrorKind::kConfig, "compare: runs use different task specs (" +
                                 dir_a.string() + " vs " + dir_b.string() + ")");
  }
  Comparison cmp;
  cmp.a = summarize_metrics_csv(dir_a / kMetricsFile);
  cmp.b = summarize_metrics_csv(dir_b / kMetricsFile);
  cmp.final_loss_delta = cmp.b.final_loss - cmp.a.final_loss;
  cmp.final_accuracy_delta = cmp.b.final_accuracy - cmp.a.final_accuracy;
  cmp.bytes_ratio = cmp.b.bytes_total > 0.0
                        ? cmp.a.bytes_total / cmp.b.bytes_total
                        : std::numeric_limits<double>::infinity();
  return cmp;
}

void write_comparison_csv(std::ostream& out, const Comparison& cmp) {
  out << "final_loss_a,final_loss_b,final_loss_delta,final_accuracy_a,"
         "final_accuracy_b,final_accuracy_delta,mean_compression_ratio_a,"
         "mean_compression_ratio_b,bytes_total_a,bytes_total_b,bytes_ratio\n";
  out << format_number(cmp.a.final_loss) << ','
      << format_number(cmp.b.final_loss) << ','
      << format_number(cmp.final_loss_delta) << ','
      << format_number(cmp.a.final_accuracy) << ','
      << format_number(cmp.b.final_accuracy) << ','
      << format_number(cmp.final_accuracy_delta) << ','
      << format_number(cmp.a.mean_compression_ratio) << ','
      << format_number(cmp.b.mean_compression_ratio) << ','
      << format_number(cmp.a.bytes_total) << ','
      << format_number(cmp.b.bytes_total) << ','
      << format_number(cmp.bytes_ratio) << '\n';
}

}  // namespace iwp
