#pragma once

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "eosmute/attack.hpp"
#include "eosmute/defences.hpp"
#include "eosmute/errors.hpp"
#include "eosmute/harness.hpp"
#include "eosmute/metrics.hpp"
#include "eosmute/toy_data.hpp"
#include "eosmute/toy_registry.hpp"

namespace eosmute::cli {

namespace fs = std::filesystem;

namespace detail {

inline std::vector<double> parse_values(const std::string& csv) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(std::stod(item));
  }
  return out;
}

inline std::vector<std::string> parse_names(const std::string& csv) {
  std::vector<std::string> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

// Shorthand chain specs: identity | mu_comp | mu_decomp_comp |
// butterworth:<cutoff_hz>[:<order>] | quantized_mu (compress/8-bit/expand).
inline harness::NamedDefence parse_chain_spec(const std::string& spec) {
  harness::NamedDefence d;
  d.name = spec;
  d.chain = nlohmann::json::array();
  if (spec == "identity" || spec == "none") {
    d.name = "none";
  } else if (spec == "mu_comp") {
    d.chain.push_back({{"name", "mu_compress"}});
  } else if (spec == "mu_decomp_comp") {
    d.chain.push_back({{"name", "mu_compress"}});
    d.chain.push_back({{"name", "mu_expand"}});
  } else if (spec == "quantized_mu") {
    d.chain.push_back({{"name", "mu_compress"}});
    d.chain.push_back({{"name", "quantize_8bit"}});
    d.chain.push_back({{"name", "mu_expand"}});
  } else if (spec.rfind("butterworth:", 0) == 0) {
    const std::string rest = spec.substr(12);
    const auto colon = rest.find(':');
    nlohmann::json step = {{"name", "butterworth"}};
    step["cutoff_hz"] = std::stod(rest.substr(0, colon));
    step["order"] = (colon == std::string::npos) ? 5 : std::stoi(rest.substr(colon + 1));
    d.chain.push_back(step);
  } else {
    throw ConfigError("unknown defence chain spec: '" + spec + "'");
  }
  return d;
}

inline void print_bundle(const std::string& label, const metrics::MetricBundle& b) {
  std::cout << label << " empty_rate=" << b.empty_rate << "\n";
  std::cout << label << " asl=" << b.asl << "\n";
  std::cout << label << " bleu=" << b.bleu << "\n";
  std::cout << label << " wer=" << b.wer << "\n";
}

}  // namespace detail

inline int run(const std::vector<std::string>& argv) {
  CLI::App app{"universal audio attack snippets: training, evaluation, defences"};
  app.require_subcommand(1);

  // Shared options, bound per subcommand below.
  std::string manifest_path;
  std::string model_id = "toy:42";
  std::string out_path = "out";
  attack::SnippetParams params;
  attack::TrainConfig cfg;
  std::string objective_name = "complete";
  std::string init_name = "uniform";
  int max_tokens = model::kDefaultMaxTokens;
  int vocab_size = 16;

  auto add_train_flags = [&](CLI::App* cmd) {
    cmd->add_option("--epsilon", params.epsilon, "l-infinity clamp limit")
        ->capture_default_str();
    cmd->add_option("--length", params.length_seconds, "snippet length in seconds")
        ->capture_default_str();
    cmd->add_option("--position", params.position_seconds,
                    "insertion position in seconds, within [0, 1]")
        ->capture_default_str();
    cmd->add_option("--objective", objective_name, "complete|partial")->capture_default_str();
    cmd->add_option("--delta", cfg.delta_horizon, "partial-suppression token horizon")
        ->capture_default_str();
    cmd->add_option("--lr", cfg.learning_rate, "learning rate")->capture_default_str();
    cmd->add_option("--patience", cfg.patience, "early-stopping patience")
        ->capture_default_str();
    cmd->add_option("--min-delta", cfg.min_delta, "minimum validation-loss improvement")
        ->capture_default_str();
    cmd->add_option("--iterations", cfg.max_iterations, "maximum training passes")
        ->capture_default_str();
    cmd->add_option("--time-limit", cfg.time_limit_seconds, "training time limit in seconds")
        ->capture_default_str();
    cmd->add_option("--seed", cfg.seed, "training seed")->capture_default_str();
    cmd->add_option("--init", init_name, "snippet initialization: uniform|zeros")
        ->capture_default_str();
  };
  auto parsed_objective = [&]() {
    if (objective_name == "complete") return attack::Objective::kComplete;
    if (objective_name == "partial") return attack::Objective::kPartial;
    throw ConfigError("unknown objective: '" + objective_name + "'");
  };
  auto parsed_init = [&]() {
    if (init_name == "uniform") return attack::TrainConfig::Init::kUniform;
    if (init_name == "zeros") return attack::TrainConfig::Init::kZeros;
    throw ConfigError("unknown init scheme: '" + init_name + "'");
  };

  // make-toy-data ----------------------------------------------------------
  auto* make_data = app.add_subcommand("make-toy-data", "generate the synthetic corpus");
  data::ToyCorpusConfig corpus_cfg;
  make_data->add_option("--out", out_path, "output directory")->required();
  make_data->add_option("--train", corpus_cfg.train, "training examples")
      ->capture_default_str();
  make_data->add_option("--val", corpus_cfg.validation, "validation examples")
      ->capture_default_str();
  make_data->add_option("--test", corpus_cfg.test, "test examples")->capture_default_str();
  make_data->add_option("--seed", corpus_cfg.seed, "corpus seed")->capture_default_str();
  make_data->add_option("--vocab", corpus_cfg.vocab_size, "vocabulary size")
      ->capture_default_str();

  // train-attack -----------------------------------------------------------
  auto* train = app.add_subcommand("train-attack", "train a universal attack snippet");
  train->add_option("--manifest", manifest_path, "dataset manifest")->required();
  train->add_option("--model", model_id, "victim model identity")->capture_default_str();
  train->add_option("--out", out_path, "snippet artifact path")->capture_default_str();
  add_train_flags(train);

  // eval-attack ------------------------------------------------------------
  auto* eval = app.add_subcommand("eval-attack", "evaluate a snippet on the test split");
  std::string snippet_path;
  std::string eval_split = "test";
  eval->add_option("--manifest", manifest_path, "dataset manifest")->required();
  eval->add_option("--model", model_id, "victim model identity")->capture_default_str();
  eval->add_option("--snippet", snippet_path, "snippet artifact")->required();
  eval->add_option("--split", eval_split, "dataset split to evaluate")->capture_default_str();
  eval->add_option("--max-tokens", max_tokens, "decode cap")->capture_default_str();
  eval->add_option("--out", out_path, "JSON report path (optional)");

  // sweep ------------------------------------------------------------------
  auto* sweep = app.add_subcommand("sweep", "parameter sweep with per-cell training");
  std::string sweep_param = "epsilon";
  std::string sweep_values;
  std::string sweep_models = "toy:42";
  std::string format_name = "csv";
  int jobs = 1;
  int lowpass_order = 5;
  sweep->add_option("--manifest", manifest_path, "dataset manifest")->required();
  sweep->add_option("--param", sweep_param, "epsilon|length|position|cutoff_hz")
      ->capture_default_str();
  sweep->add_option("--values", sweep_values, "comma-separated ascending values")->required();
  sweep->add_option("--models", sweep_models, "comma-separated model identities")
      ->capture_default_str();
  sweep->add_option("--out", out_path, "report path")->capture_default_str();
  sweep->add_option("--format", format_name, "csv|json")->capture_default_str();
  sweep->add_option("--jobs", jobs, "concurrent sweep cells")->capture_default_str();
  sweep->add_option("--order", lowpass_order, "filter order for cutoff sweeps")
      ->capture_default_str();
  add_train_flags(sweep);

  // transfer ---------------------------------------------------------------
  auto* transfer = app.add_subcommand("transfer", "surrogate/victim transfer matrix");
  std::string surrogates = "toy:1,toy:2";
  std::string victims = "toy:1,toy:2";
  transfer->add_option("--manifest", manifest_path, "dataset manifest")->required();
  transfer->add_option("--surrogates", surrogates, "comma-separated surrogate identities")
      ->capture_default_str();
  transfer->add_option("--victims", victims, "comma-separated victim identities")
      ->capture_default_str();
  transfer->add_option("--out", out_path, "report path")->capture_default_str();
  transfer->add_option("--format", format_name, "csv|json")->capture_default_str();
  add_train_flags(transfer);

  // defend -----------------------------------------------------------------
  auto* defend = app.add_subcommand("defend", "evaluate defences against a snippet");
  std::vector<std::string> chain_specs;
  std::string chain_file;
  defend->add_option("--manifest", manifest_path, "dataset manifest")->required();
  defend->add_option("--model", model_id, "victim model identity")->capture_default_str();
  defend->add_option("--snippet", snippet_path, "snippet artifact")->required();
  defend->add_option("--chain", chain_specs,
                     "defence chain spec (repeatable): identity, mu_comp, mu_decomp_comp, "
                     "quantized_mu, butterworth:<hz>[:<order>]");
  defend->add_option("--chain-file", chain_file, "JSON file with named defence chains");
  defend->add_option("--out", out_path, "report path")->capture_default_str();
  defend->add_option("--format", format_name, "csv|json")->capture_default_str();

  // Parse ------------------------------------------------------------------
  std::vector<const char*> cargv;
  cargv.push_back("eosmute");
  for (const auto& a : argv) cargv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(cargv.size()), cargv.data());
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  }

  try {
    const auto format = format_name == "json" ? harness::ReportFormat::kJson
                                              : harness::ReportFormat::kCsv;

    if (make_data->parsed()) {
      const auto manifest = data::generate_toy_corpus(out_path, corpus_cfg);
      std::cout << "manifest=" << manifest.string() << "\n";
      return 0;
    }

    const harness::DatasetManifest manifest = harness::load_manifest(manifest_path);
    const harness::ModelResolver resolver =
        model::toy::make_toy_resolver(manifest, vocab_size);

    if (train->parsed()) {
      const auto m = resolver(model_id);
      const auto train_set = harness::to_dataset(harness::load_split(manifest, "train"),
                                                 m->vocabulary());
      const auto val_set = harness::to_dataset(harness::load_split(manifest, "validation"),
                                               m->vocabulary());
      cfg.init = parsed_init();
      const attack::AttackSnippet snippet =
          attack::train_attack(*m, train_set, val_set, params, cfg, parsed_objective());
      attack::save_snippet(out_path, snippet);
      std::cout << "snippet=" << out_path << "\n";
      std::cout << "iterations=" << snippet.history.size() << "\n";
      if (!snippet.history.empty()) {
        double best = snippet.history.front().val_loss;
        for (const auto& r : snippet.history) best = std::min(best, r.val_loss);
        std::cout << "best_val_loss=" << best << "\n";
      }
      return 0;
    }

    if (eval->parsed()) {
      const auto m = resolver(model_id);
      const auto examples = harness::load_split(manifest, eval_split);
      const attack::AttackSnippet snippet = attack::load_snippet(snippet_path);
      const auto attacked = harness::evaluate(*m, examples, &snippet, nullptr, max_tokens);
      const auto clean = harness::evaluate(*m, examples, nullptr, nullptr, max_tokens);
      detail::print_bundle("attacked", attacked);
      detail::print_bundle("clean", clean);
      if (!out_path.empty() && out_path != "out") {
        nlohmann::json j = {{"attacked", attacked},
                            {"clean", clean},
                            {"alpha", metrics::attack_power(attacked, clean)}};
        std::ofstream out(out_path);
        out << j.dump(2) << "\n";
      }
      return 0;
    }

    if (sweep->parsed()) {
      harness::SweepSpec spec;
      spec.parameter = harness::sweep_parameter_from_name(sweep_param);
      spec.values = detail::parse_values(sweep_values);
      spec.fixed_params = params;
      cfg.init = parsed_init();
      spec.train_config = cfg;
      spec.objective = parsed_objective();
      spec.models = detail::parse_names(sweep_models);
      spec.lowpass_order = lowpass_order;
      spec.max_tokens = max_tokens;
      const auto report = harness::run_sweep(spec, manifest, resolver, jobs);
      harness::emit_report(report, format, out_path);
      std::cout << "report=" << out_path << " rows=" << report.rows.size() << "\n";
      return 0;
    }

    if (transfer->parsed()) {
      cfg.init = parsed_init();
      const auto report = harness::transfer_matrix(
          detail::parse_names(surrogates), detail::parse_names(victims), params, cfg,
          parsed_objective(), manifest, resolver, max_tokens);
      harness::emit_report(report, format, out_path);
      std::cout << "report=" << out_path << " cells=" << report.cells.size() << "\n";
      return 0;
    }

    if (defend->parsed()) {
      const auto m = resolver(model_id);
      const auto examples = harness::load_split(manifest, "test");
      const attack::AttackSnippet snippet = attack::load_snippet(snippet_path);
      std::vector<harness::NamedDefence> defences;
      for (const auto& spec : chain_specs) defences.push_back(detail::parse_chain_spec(spec));
      if (!chain_file.empty()) {
        std::ifstream in(chain_file);
        if (!in) throw ConfigError("cannot open chain file: " + chain_file);
        const nlohmann::json chains = nlohmann::json::parse(in);
        for (const auto& [name, chain] : chains.items()) defences.push_back({name, chain});
      }
      const auto reports = harness::defence_eval(snippet, defences, *m, examples, max_tokens);
      for (const auto& r : reports) {
        auto fmt = [](const std::optional<double>& v) {
          return v ? std::to_string(*v) : std::string("undefined");
        };
        std::cout << "defence=" << r.defence << " alpha_pct:"
                  << " empty_rate=" << fmt(r.alpha_pct.empty_rate)
                  << " asl=" << fmt(r.alpha_pct.asl) << " bleu=" << fmt(r.alpha_pct.bleu)
                  << " wer=" << fmt(r.alpha_pct.wer) << "\n";
      }
      harness::emit_report(reports, format, out_path);
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace eosmute::cli
