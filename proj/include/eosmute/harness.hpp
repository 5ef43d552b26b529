#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <future>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "eosmute/attack.hpp"
#include "eosmute/defences.hpp"
#include "eosmute/errors.hpp"
#include "eosmute/metrics.hpp"
#include "eosmute/model.hpp"
#include "eosmute/wav_io.hpp"

namespace eosmute::harness {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Dataset manifests (JSON-lines: {"audio","text","split"} per line)
// ---------------------------------------------------------------------------

struct ManifestEntry {
  std::string audio;  // as written in the manifest, relative to its directory
  std::string text;
  std::string split;
};

struct DatasetManifest {
  fs::path root;
  std::vector<ManifestEntry> entries;

  std::map<std::string, int> split_counts() const {
    std::map<std::string, int> counts;
    for (const auto& e : entries) ++counts[e.split];
    return counts;
  }

  fs::path resolve(const ManifestEntry& e) const {
    fs::path p(e.audio);
    return p.is_absolute() ? p : root / p;
  }
};

inline DatasetManifest load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("manifest not found: " + path.string());
  DatasetManifest manifest;
  manifest.root = path.parent_path();
  std::string line;
  std::vector<std::string> problems;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      problems.push_back("line " + std::to_string(lineno) + ": " + e.what());
      continue;
    }
    ManifestEntry entry;
    for (const char* field : {"audio", "text", "split"}) {
      if (!j.contains(field)) {
        problems.push_back("line " + std::to_string(lineno) + ": missing field '" +
                           std::string(field) + "'");
      }
    }
    if (!problems.empty() && problems.back().rfind("line " + std::to_string(lineno), 0) == 0) {
      continue;
    }
    entry.audio = j["audio"].get<std::string>();
    entry.text = j["text"].get<std::string>();
    entry.split = j["split"].get<std::string>();
    manifest.entries.push_back(entry);
    if (!fs::exists(manifest.resolve(manifest.entries.back()))) {
      problems.push_back("line " + std::to_string(lineno) + ": audio file not found: " +
                         manifest.resolve(manifest.entries.back()).string());
    }
  }
  if (!problems.empty()) {
    std::string msg = "manifest errors in " + path.string() + ":";
    for (const auto& p : problems) msg += "\n  " + p;
    throw ConfigError(msg);
  }
  return manifest;
}

struct LoadedExample {
  audio::Waveform audio;
  std::string text;
};

inline std::vector<LoadedExample> load_split(const DatasetManifest& manifest,
                                             const std::string& split) {
  std::vector<LoadedExample> out;
  for (const auto& e : manifest.entries) {
    if (e.split != split) continue;
    out.push_back({audio::load_waveform(manifest.resolve(e)), e.text});
  }
  return out;
}

inline attack::Dataset to_dataset(const std::vector<LoadedExample>& examples,
                                  const model::Vocabulary& vocab) {
  attack::Dataset ds;
  ds.reserve(examples.size());
  for (const auto& ex : examples) {
    attack::TrainExample t;
    t.audio = ex.audio;
    try {
      t.reference = vocab.tokenize(ex.text);
    } catch (const ContractError&) {
      // reference words outside this model's vocabulary; leave tokens empty
    }
    ds.push_back(std::move(t));
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

inline metrics::MetricBundle evaluate(const model::VictimModel& m,
                                      const std::vector<LoadedExample>& examples,
                                      const attack::AttackSnippet* snippet = nullptr,
                                      const dsp::Defence* defence = nullptr,
                                      int max_tokens = model::kDefaultMaxTokens) {
  std::vector<metrics::EvalRecord> records;
  records.reserve(examples.size());
  for (const auto& ex : examples) {
    audio::Waveform w = snippet ? attack::apply_snippet(ex.audio, *snippet) : ex.audio;
    if (defence) w = (*defence)(w);
    records.push_back({model::transcribe(m, w, max_tokens), ex.text});
  }
  return metrics::bundle(records);
}

inline attack::AttackSnippet baseline_random_snippet(const attack::SnippetParams& params,
                                                     std::uint64_t seed) {
  return attack::init_snippet(params, seed, attack::TrainConfig::Init::kUniform);
}

// ---------------------------------------------------------------------------
// Provenance helpers
// ---------------------------------------------------------------------------

namespace detail {

inline std::string fnv1a_hex(const void* data, std::size_t size) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 14695981039346656037ull;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline std::string format_double(double v) {
  if (std::isnan(v)) return "";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline double parse_double(const std::string& s) {
  if (s.empty()) return std::numeric_limits<double>::quiet_NaN();
  return std::strtod(s.c_str(), nullptr);
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      cells.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  cells.push_back(cur);
  return cells;
}

}  // namespace detail

inline std::string config_hash(const nlohmann::json& cell_config) {
  const std::string dump = cell_config.dump();
  return detail::fnv1a_hex(dump.data(), dump.size());
}

inline std::string snippet_digest(const attack::AttackSnippet& a) {
  std::vector<float> f32(a.samples.size());
  for (std::size_t i = 0; i < f32.size(); ++i) f32[i] = static_cast<float>(a.samples[i]);
  return detail::fnv1a_hex(f32.data(), f32.size() * sizeof(float));
}

inline fs::path cache_dir() {
  if (const char* env = std::getenv("EOSMUTE_CACHE")) return fs::path(env);
  return fs::path(".eosmute_cache");
}

// ---------------------------------------------------------------------------
// Parameter sweeps
// ---------------------------------------------------------------------------

enum class SweepParameter { kEpsilon, kLength, kPosition, kCutoffHz };

inline const char* sweep_parameter_name(SweepParameter p) {
  switch (p) {
    case SweepParameter::kEpsilon: return "epsilon";
    case SweepParameter::kLength: return "length";
    case SweepParameter::kPosition: return "position";
    case SweepParameter::kCutoffHz: return "cutoff_hz";
  }
  return "?";
}

inline SweepParameter sweep_parameter_from_name(const std::string& name) {
  if (name == "epsilon") return SweepParameter::kEpsilon;
  if (name == "length") return SweepParameter::kLength;
  if (name == "position") return SweepParameter::kPosition;
  if (name == "cutoff_hz") return SweepParameter::kCutoffHz;
  throw ConfigError("unknown sweep parameter: '" + name + "'");
}

struct SweepSpec {
  SweepParameter parameter = SweepParameter::kEpsilon;
  std::vector<double> values;
  attack::SnippetParams fixed_params;
  attack::TrainConfig train_config;
  attack::Objective objective = attack::Objective::kComplete;
  std::vector<std::string> models;
  int lowpass_order = 5;  // cutoff sweeps only
  int max_tokens = model::kDefaultMaxTokens;

  void validate() const {
    if (values.empty()) throw ConfigError("sweep: no values");
    for (std::size_t i = 1; i < values.size(); ++i) {
      if (values[i] <= values[i - 1]) throw ConfigError("sweep: values must be strictly increasing");
    }
    if (models.empty()) throw ConfigError("sweep: no models");
  }
};

struct SweepRow {
  std::string model;
  std::string parameter;
  double value = 0.0;
  metrics::MetricBundle attacked;
  metrics::MetricBundle baseline;
  std::uint64_t seed = 0;
  std::string config_hash;
  std::string snippet_digest;
  std::string error;  // non-empty when this cell failed
};

struct SweepReport {
  int schema_version = 1;
  std::string parameter;
  std::vector<SweepRow> rows;
};

using ModelResolver = std::function<std::shared_ptr<model::VictimModel>(const std::string&)>;

// Trains (or loads from cache) the snippet for one sweep cell and returns it
// together with its provenance hash. Snippets round-trip through the cached
// float32 artifact so that cached and fresh runs evaluate identical samples.
inline attack::AttackSnippet obtain_snippet(const model::VictimModel& m,
                                            const attack::Dataset& train_set,
                                            const attack::Dataset& val_set,
                                            const attack::SnippetParams& params,
                                            const attack::TrainConfig& cfg,
                                            attack::Objective objective,
                                            std::string* out_hash = nullptr) {
  nlohmann::json cell;
  cell["model"] = m.identity();
  cell["objective"] = attack::objective_name(objective);
  cell["epsilon"] = params.epsilon;
  cell["length_seconds"] = params.length_seconds;
  cell["position_seconds"] = params.position_seconds;
  cell["config"] = cfg;
  const std::string hash = config_hash(cell);
  if (out_hash) *out_hash = hash;
  const fs::path dir = cache_dir();
  const fs::path file = dir / ("snippet_" + hash + ".f32");
  if (fs::exists(file)) return attack::load_snippet(file);
  attack::AttackSnippet trained =
      attack::train_attack(m, train_set, val_set, params, cfg, objective);
  fs::create_directories(dir);
  attack::save_snippet(file, trained);
  return attack::load_snippet(file);
}

inline SweepReport run_sweep(const SweepSpec& spec, const DatasetManifest& manifest,
                             const ModelResolver& resolver, int jobs = 1) {
  spec.validate();
  SweepReport report;
  report.parameter = sweep_parameter_name(spec.parameter);

  const auto train_examples = load_split(manifest, "train");
  const auto val_examples = load_split(manifest, "validation");
  const auto test_examples = load_split(manifest, "test");

  struct Cell {
    std::string model;
    double value;
  };
  std::vector<Cell> cells;
  for (const auto& mdl : spec.models) {
    for (double v : spec.values) cells.push_back({mdl, v});
  }

  auto run_cell = [&](const Cell& cell) -> SweepRow {
    SweepRow row;
    row.model = cell.model;
    row.parameter = report.parameter;
    row.value = cell.value;
    row.seed = spec.train_config.seed;
    try {
      const auto m = resolver(cell.model);
      const auto train_set = to_dataset(train_examples, m->vocabulary());
      const auto val_set = to_dataset(val_examples, m->vocabulary());
      attack::SnippetParams params = spec.fixed_params;
      if (spec.parameter == SweepParameter::kEpsilon) params.epsilon = cell.value;
      if (spec.parameter == SweepParameter::kLength) params.length_seconds = cell.value;
      if (spec.parameter == SweepParameter::kPosition) params.position_seconds = cell.value;

      const attack::AttackSnippet snippet =
          obtain_snippet(*m, train_set, val_set, params, spec.train_config, spec.objective,
                         &row.config_hash);
      row.snippet_digest = snippet_digest(snippet);
      const attack::AttackSnippet baseline =
          baseline_random_snippet(params, spec.train_config.seed + 1);

      if (spec.parameter == SweepParameter::kCutoffHz) {
        // Defence sweeps reuse one snippet and vary only the filter.
        const dsp::Defence d = dsp::defence_chain(nlohmann::json::array(
            {{{"name", "butterworth"}, {"cutoff_hz", cell.value}, {"order", spec.lowpass_order}}}));
        row.attacked = evaluate(*m, test_examples, &snippet, &d, spec.max_tokens);
        row.baseline = evaluate(*m, test_examples, nullptr, &d, spec.max_tokens);
      } else {
        row.attacked = evaluate(*m, test_examples, &snippet, nullptr, spec.max_tokens);
        row.baseline = evaluate(*m, test_examples, &baseline, nullptr, spec.max_tokens);
      }
    } catch (const std::exception& e) {
      row.error = e.what();
    }
    return row;
  };

  report.rows.resize(cells.size());
  if (jobs <= 1) {
    for (std::size_t i = 0; i < cells.size(); ++i) report.rows[i] = run_cell(cells[i]);
  } else {
    std::vector<std::future<SweepRow>> futures;
    futures.reserve(cells.size());
    for (const Cell& c : cells) {
      futures.push_back(std::async(std::launch::async, run_cell, c));
    }
    for (std::size_t i = 0; i < futures.size(); ++i) report.rows[i] = futures[i].get();
  }
  return report;
}

// For cutoff sweeps the snippet is trained once with the fixed params; the
// variation is purely in the defence, so cells share the cache entry.

// ---------------------------------------------------------------------------
// Transferability
// ---------------------------------------------------------------------------

struct TransferCell {
  std::string surrogate;  // "none" for the no-attack row
  std::string victim;
  metrics::MetricBundle bundle;
  std::string snippet_digest;
  std::string error;
};

struct TransferReport {
  int schema_version = 1;
  std::vector<TransferCell> cells;
};

inline TransferReport transfer_matrix(const std::vector<std::string>& surrogates,
                                      const std::vector<std::string>& victims,
                                      const attack::SnippetParams& params,
                                      const attack::TrainConfig& cfg,
                                      attack::Objective objective,
                                      const DatasetManifest& manifest,
                                      const ModelResolver& resolver,
                                      int max_tokens = model::kDefaultMaxTokens) {
  TransferReport report;
  const auto train_examples = load_split(manifest, "train");
  const auto val_examples = load_split(manifest, "validation");
  const auto test_examples = load_split(manifest, "test");

  // No-attack row first; it does not depend on any surrogate.
  for (const auto& victim : victims) {
    TransferCell cell{"none", victim, {}, "", ""};
    try {
      const auto vm = resolver(victim);
      cell.bundle = evaluate(*vm, test_examples, nullptr, nullptr, max_tokens);
    } catch (const std::exception& e) {
      cell.error = e.what();
    }
    report.cells.push_back(std::move(cell));
  }

  for (const auto& surrogate : surrogates) {
    attack::AttackSnippet snippet;
    std::string train_error;
    try {
      const auto sm = resolver(surrogate);
      snippet = obtain_snippet(*sm, to_dataset(train_examples, sm->vocabulary()),
                               to_dataset(val_examples, sm->vocabulary()), params, cfg,
                               objective);
    } catch (const std::exception& e) {
      train_error = e.what();
    }
    for (const auto& victim : victims) {
      TransferCell cell{surrogate, victim, {}, "", train_error};
      if (train_error.empty()) {
        cell.snippet_digest = snippet_digest(snippet);
        try {
          const auto vm = resolver(victim);
          cell.bundle = evaluate(*vm, test_examples, &snippet, nullptr, max_tokens);
        } catch (const std::exception& e) {
          cell.error = e.what();
        }
      }
      report.cells.push_back(std::move(cell));
    }
  }
  return report;
}

// ---------------------------------------------------------------------------
// Defence evaluation
// ---------------------------------------------------------------------------

struct NamedDefence {
  std::string name;
  nlohmann::json chain;  // defence_chain configuration
};

// Evaluates each defence chain; the identity defence is always evaluated
// first and provides alpha_base for the retained-power percentages.
inline std::vector<metrics::DefenceReport> defence_eval(
    const attack::AttackSnippet& snippet, const std::vector<NamedDefence>& defences,
    const model::VictimModel& m, const std::vector<LoadedExample>& examples,
    int max_tokens = model::kDefaultMaxTokens) {
  std::vector<metrics::DefenceReport> reports;
  std::vector<NamedDefence> all;
  all.push_back({"none", nlohmann::json::array()});
  for (const auto& d : defences) {
    if (d.name != "none") all.push_back(d);
  }
  metrics::MetricDelta alpha_base{};
  for (std::size_t i = 0; i < all.size(); ++i) {
    metrics::DefenceReport rep;
    rep.defence = all[i].name;
    const dsp::Defence d = dsp::defence_chain(all[i].chain);
    rep.attacked = evaluate(m, examples, &snippet, &d, max_tokens);
    rep.clean = evaluate(m, examples, nullptr, &d, max_tokens);
    rep.alpha_d = metrics::attack_power(rep.attacked, rep.clean);
    if (i == 0) alpha_base = rep.alpha_d;
    rep.alpha_base = alpha_base;
    rep.alpha_pct = metrics::retained_power(rep.alpha_d, alpha_base);
    reports.push_back(std::move(rep));
  }
  return reports;
}

// ---------------------------------------------------------------------------
// Report emission (CSV and JSON)
// ---------------------------------------------------------------------------

inline const std::vector<std::string>& sweep_csv_columns() {
  static const std::vector<std::string> cols = {
      "model",          "parameter",      "value",          "attacked_empty_rate",
      "attacked_asl",   "attacked_bleu",  "attacked_wer",   "baseline_empty_rate",
      "baseline_asl",   "baseline_bleu",  "baseline_wer",   "seed",
      "config_hash",    "snippet_digest", "error"};
  return cols;
}

inline std::string to_csv(const SweepReport& report) {
  std::ostringstream out;
  const auto& cols = sweep_csv_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
  out << "\n";
  for (const SweepRow& r : report.rows) {
    out << r.model << ',' << r.parameter << ',' << detail::format_double(r.value) << ','
        << detail::format_double(r.attacked.empty_rate) << ','
        << detail::format_double(r.attacked.asl) << ','
        << detail::format_double(r.attacked.bleu) << ','
        << detail::format_double(r.attacked.wer) << ','
        << detail::format_double(r.baseline.empty_rate) << ','
        << detail::format_double(r.baseline.asl) << ','
        << detail::format_double(r.baseline.bleu) << ','
        << detail::format_double(r.baseline.wer) << ',' << r.seed << ',' << r.config_hash
        << ',' << r.snippet_digest << ',' << r.error << "\n";
  }
  return out.str();
}

inline SweepReport parse_sweep_csv(const std::string& csv) {
  std::istringstream in(csv);
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("sweep csv: empty input");
  const auto header = detail::split_csv_line(line);
  if (header != sweep_csv_columns()) throw ConfigError("sweep csv: unexpected header");
  SweepReport report;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != header.size()) throw ConfigError("sweep csv: ragged row");
    SweepRow r;
    r.model = cells[0];
    r.parameter = cells[1];
    r.value = detail::parse_double(cells[2]);
    r.attacked = {detail::parse_double(cells[3]), detail::parse_double(cells[4]),
                  detail::parse_double(cells[5]), detail::parse_double(cells[6])};
    r.baseline = {detail::parse_double(cells[7]), detail::parse_double(cells[8]),
                  detail::parse_double(cells[9]), detail::parse_double(cells[10])};
    r.seed = cells[11].empty() ? 0 : std::stoull(cells[11]);
    r.config_hash = cells[12];
    r.snippet_digest = cells[13];
    r.error = cells[14];
    if (report.parameter.empty()) report.parameter = r.parameter;
    report.rows.push_back(std::move(r));
  }
  return report;
}

inline void to_json(nlohmann::json& j, const SweepRow& r) {
  j = {{"model", r.model},
       {"parameter", r.parameter},
       {"value", r.value},
       {"attacked", r.attacked},
       {"baseline", r.baseline},
       {"seed", r.seed},
       {"config_hash", r.config_hash},
       {"snippet_digest", r.snippet_digest},
       {"error", r.error}};
}

inline void to_json(nlohmann::json& j, const SweepReport& report) {
  j = {{"schema_version", report.schema_version},
       {"parameter", report.parameter},
       {"rows", report.rows}};
}

inline void to_json(nlohmann::json& j, const TransferCell& c) {
  j = {{"surrogate", c.surrogate},
       {"victim", c.victim},
       {"bundle", c.bundle},
       {"snippet_digest", c.snippet_digest},
       {"error", c.error}};
}

inline void to_json(nlohmann::json& j, const TransferReport& report) {
  j = {{"schema_version", report.schema_version}, {"cells", report.cells}};
}

inline std::string to_csv(const TransferReport& report) {
  std::ostringstream out;
  out << "surrogate,victim,empty_rate,asl,bleu,wer,snippet_digest,error\n";
  for (const TransferCell& c : report.cells) {
    out << c.surrogate << ',' << c.victim << ','
        << detail::format_double(c.bundle.empty_rate) << ','
        << detail::format_double(c.bundle.asl) << ','
        << detail::format_double(c.bundle.bleu) << ','
        << detail::format_double(c.bundle.wer) << ',' << c.snippet_digest << ',' << c.error
        << "\n";
  }
  return out.str();
}

inline std::string to_csv(const std::vector<metrics::DefenceReport>& reports) {
  std::ostringstream out;
  out << "defence,section,empty_rate,asl,bleu,wer\n";
  auto bundle_row = [&](const std::string& name, const std::string& section,
                        const metrics::MetricBundle& b) {
    out << name << ',' << section << ',' << detail::format_double(b.empty_rate) << ','
        << detail::format_double(b.asl) << ',' << detail::format_double(b.bleu) << ','
        << detail::format_double(b.wer) << "\n";
  };
  for (const auto& r : reports) {
    bundle_row(r.defence, "attacked", r.attacked);
    bundle_row(r.defence, "clean", r.clean);
    bundle_row(r.defence, "alpha", r.alpha_d);
    out << r.defence << ",alpha_pct,"
        << (r.alpha_pct.empty_rate ? detail::format_double(*r.alpha_pct.empty_rate) : "") << ','
        << (r.alpha_pct.asl ? detail::format_double(*r.alpha_pct.asl) : "") << ','
        << (r.alpha_pct.bleu ? detail::format_double(*r.alpha_pct.bleu) : "") << ','
        << (r.alpha_pct.wer ? detail::format_double(*r.alpha_pct.wer) : "") << "\n";
  }
  return out.str();
}

enum class ReportFormat { kCsv, kJson };

template <typename Report>
void emit_report(const Report& report, ReportFormat format, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw DecodeError("cannot write report: " + path.string());
  if (format == ReportFormat::kCsv) {
    out << to_csv(report);
  } else {
    nlohmann::json j = report;
    out << j.dump(2) << "\n";
  }
}

}  // namespace eosmute::harness
