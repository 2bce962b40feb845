#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include "fairrec/manifest.hpp"
#include "fairrec/simulator.hpp"
#include "fairrec/training.hpp"

namespace fairrec {
namespace cli {

inline const char* usage_text() {
  return
      "usage: fairrec <command> [flags]\n"
      "\n"
      "commands:\n"
      "  simulate   generate a synthetic click corpus into --out\n"
      "  train      train a model on --data, checkpoints into --out\n"
      "  eval       score a checkpoint (--model) on --data, reports into --out\n"
      "  ablate     train and evaluate the objective ablations, summary into --out\n"
      "  sweep      train and evaluate across adversary weights, summary into --out\n"
      "  help       print this text\n"
      "\n"
      "flags:\n"
      "  --data DIR        corpus directory (train, eval, ablate, sweep)\n"
      "  --model FILE      checkpoint to evaluate (eval)\n"
      "  --out DIR         output directory; defaults to $FAIRREC_OUT/<command>\n"
      "  --config FILE     key = value options applied over the built-in preset\n"
      "  --set key=value   single option override (repeatable, applied in order)\n"
      "  --seed N          root seed            (same as --set seed=N)\n"
      "  --epochs N        training epochs      (same as --set epochs=N)\n"
      "  --backbone NAME   mhsa or meanpool     (same as --set backbone=NAME)\n"
      "  --lambda-a X      adversary weight     (same as --set lambda_adv=X)\n"
      "  --lambda-c X      click loss weight    (same as --set lambda_click=X)\n"
      "  --lambda-u X      user orthogonality   (same as --set lambda_user=X)\n"
      "  --lambda-n X      news orthogonality   (same as --set lambda_news=X)\n"
      "  --force           overwrite an existing output directory\n"
      "\n"
      "exit codes: 0 success, 1 runtime failure, 2 usage or configuration error\n";
}

struct Options {
  std::string command;
  std::vector<std::string> argv;  // everything after the command, verbatim
  std::string data;
  std::string out;
  std::string model;
  std::string config_file;
  bool force = false;
  std::vector<std::pair<std::string, std::string>> overrides;
};

// Maps a CLI shortcut flag to its configuration key.
inline const char* option_key_for_flag(const std::string& flag) {
  if (flag == "seed") return "seed";
  if (flag == "epochs") return "epochs";
  if (flag == "backbone") return "backbone";
  if (flag == "lambda-a") return "lambda_adv";
  if (flag == "lambda-c") return "lambda_click";
  if (flag == "lambda-u") return "lambda_user";
  if (flag == "lambda-n") return "lambda_news";
  return nullptr;
}

inline Options parse_args(const std::vector<std::string>& args) {
  Options opts;
  opts.command = args[0];
  opts.argv.assign(args.begin() + 1, args.end());
  for (std::size_t i = 1; i < args.size(); ++i) {
    const std::string& token = args[i];
    if (token.rfind("--", 0) != 0) {
      throw ConfigError("unexpected argument '" + token + "'");
    }
    std::string name = token.substr(2);
    std::string value;
    bool has_value = false;
    std::size_t eq = name.find('=');
    if (eq != std::string::npos) {
      value = name.substr(eq + 1);
      name.resize(eq);
      has_value = true;
    }
    if (name == "force") {
      if (has_value) throw ConfigError("--force takes no value");
      opts.force = true;
      continue;
    }
    auto take_value = [&]() -> const std::string& {
      if (has_value) return value;
      if (i + 1 >= args.size()) throw ConfigError("--" + name + " needs a value");
      return args[++i];
    };
    if (name == "data") {
      opts.data = take_value();
    } else if (name == "out") {
      opts.out = take_value();
    } else if (name == "model") {
      opts.model = take_value();
    } else if (name == "config") {
      opts.config_file = take_value();
    } else if (name == "set") {
      const std::string& pair = take_value();
      std::size_t cut = pair.find('=');
      if (cut == std::string::npos || cut == 0) {
        throw ConfigError("--set expects key=value, got '" + pair + "'");
      }
      opts.overrides.push_back({pair.substr(0, cut), pair.substr(cut + 1)});
    } else if (const char* key = option_key_for_flag(name)) {
      opts.overrides.push_back({key, take_value()});
    } else {
      throw ConfigError("unknown flag --" + name);
    }
  }
  return opts;
}

inline RunConfig build_config(const Options& opts) {
  RunConfig cfg = desk_config();
  if (!opts.config_file.empty()) cfg = parse_config_file(opts.config_file, cfg);
  for (const auto& [key, value] : opts.overrides) apply_option(cfg, key, value);
  return cfg;
}

inline std::string resolve_out(const Options& opts) {
  if (!opts.out.empty()) return opts.out;
  const char* root = std::getenv("FAIRREC_OUT");
  if (root && *root) return std::string(root) + "/" + opts.command;
  throw ConfigError(opts.command + ": --out is required (or set FAIRREC_OUT)");
}

// The manifest doubles as the completion marker; its presence means the
// directory holds a finished run.
inline void claim_output_dir(const std::string& dir, bool force) {
  std::string marker = dir + "/manifest.json";
  if (!force && std::filesystem::exists(marker)) {
    throw IoError("refusing to overwrite " + dir + " (use --force)");
  }
  std::filesystem::create_directories(dir);
}

inline Manifest start_manifest(const Options& opts, const RunConfig& cfg) {
  Manifest m;
  m.command = opts.command;
  m.argv = opts.argv;
  m.config = cfg;
  m.started = iso_utc_now();
  return m;
}

inline std::vector<std::pair<std::string, std::string>> corpus_inputs(const std::string& data) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const char* name : {"news.tsv", "providers.tsv", "behaviors_train.tsv",
                           "behaviors_valid.tsv", "behaviors_test.tsv"}) {
    out.push_back({name, file_hash_hex(data + "/" + name)});
  }
  return out;
}

inline const FairnessCell* find_cell(const FairnessReport& report, double r, int k) {
  for (const FairnessCell& cell : report.cells) {
    if (cell.k == k && std::abs(cell.r - r) < 1e-12) return &cell;
  }
  return nullptr;
}

// Shared by eval, ablate, and sweep: fairness grid plus a provider probe on
// the serving (fair) news representations.
inline FairnessReport evaluate_with_probe(const Corpus& corpus, const RunConfig& cfg,
                                          ParameterStore& store) {
  FairnessReport report = evaluate_fairness(corpus, cfg.encoder, store);
  FairScorer scorer(corpus, cfg.encoder, store);
  std::vector<Tensor> reps;
  std::vector<int> labels;
  for (std::size_t d = 0; d < corpus.news.size(); ++d) {
    reps.push_back(scorer.news_rep(static_cast<int>(d)).fair);
    labels.push_back(corpus.news[d].provider);
  }
  report.probe_accuracy = discriminator_probe(reps, labels, corpus.bucket_id() + 1,
                                              derive_seed(cfg.seed, "cli.probe"));
  return report;
}

inline void write_fairness_outputs(const FairnessReport& report, const std::string& dir,
                                   std::vector<std::string>& outputs) {
  write_fairness_csv(report, dir + "/fairness.csv");
  write_fairness_table(report, dir + "/fairness.txt");
  write_fairness_long(report, dir + "/fairness_long.csv");
  outputs.push_back("fairness.csv");
  outputs.push_back("fairness.txt");
  outputs.push_back("fairness_long.csv");
}

inline int cmd_simulate(const Options& opts, const RunConfig& cfg) {
  std::string out = resolve_out(opts);
  claim_output_dir(out, opts.force);
  Manifest m = start_manifest(opts, cfg);
  Simulation sim = simulate(cfg.sim, cfg.seed);
  write_simulation(sim, out);
  m.outputs = {"news.tsv", "providers.tsv", "behaviors_train.tsv", "behaviors_valid.tsv",
               "behaviors_test.tsv", "ground_truth.tsv"};
  m.finished = iso_utc_now();
  write_manifest(m, out + "/manifest.json");
  std::cout << "simulate: " << sim.corpus.news.size() << " news, "
            << sim.corpus.providers.size() << " providers, " << sim.corpus.train.size()
            << " train impressions -> " << out << "\n";
  return 0;
}

inline int cmd_train(const Options& opts, const RunConfig& cfg) {
  if (opts.data.empty()) throw ConfigError("train: --data is required");
  std::string out = resolve_out(opts);
  claim_output_dir(out, opts.force);
  Manifest m = start_manifest(opts, cfg);
  m.inputs = corpus_inputs(opts.data);
  Corpus corpus = load_corpus(opts.data);
  TrainOutputs result =
      train_run(corpus, cfg.encoder, cfg.train, cfg.seed, out + "/train_log.csv", out);
  m.outputs = {"train_log.csv", "best.ckpt"};
  for (std::size_t e = 1; e <= result.log.size(); ++e) {
    m.outputs.push_back("epoch_" + std::to_string(e) + ".ckpt");
  }
  m.finished = iso_utc_now();
  write_manifest(m, out + "/manifest.json");
  std::cout << "train: " << result.instance_count << " instances, best epoch "
            << result.best_epoch << " (validation auc " << format_double(result.best_val_auc)
            << ") -> " << out << "\n";
  return 0;
}

inline int cmd_eval(const Options& opts, const RunConfig& cfg) {
  if (opts.data.empty()) throw ConfigError("eval: --data is required");
  if (opts.model.empty()) throw ConfigError("eval: --model is required");
  std::string out = resolve_out(opts);
  claim_output_dir(out, opts.force);
  Manifest m = start_manifest(opts, cfg);
  m.inputs = corpus_inputs(opts.data);
  m.inputs.push_back({opts.model, file_hash_hex(opts.model)});
  Corpus corpus = load_corpus(opts.data);
  ParameterStore store = load_checkpoint(opts.model);
  FairnessReport report = evaluate_with_probe(corpus, cfg, store);
  write_fairness_outputs(report, out, m.outputs);
  m.finished = iso_utc_now();
  write_manifest(m, out + "/manifest.json");
  std::cout << "eval: auc " << format_double(report.accuracy.auc) << ", probe "
            << format_double(report.probe_accuracy) << " -> " << out << "\n";
  return 0;
}

struct VariantRow {
  std::string label;
  int best_epoch = 0;
  double val_auc = 0.0;
  FairnessReport report;
};

// Trains one configuration variant into its own subdirectory, evaluates the
// selected parameters, and writes the same artifact set train + eval would.
inline VariantRow run_variant(const Corpus& corpus, const RunConfig& cfg,
                              const std::string& label, const std::string& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream os(dir + "/config.txt", std::ios::binary);
    if (!os) throw IoError("cannot write " + dir + "/config.txt");
    os << write_config(cfg);
  }
  TrainOutputs result =
      train_run(corpus, cfg.encoder, cfg.train, cfg.seed, dir + "/train_log.csv", dir);
  VariantRow row;
  row.label = label;
  row.best_epoch = result.best_epoch;
  row.val_auc = result.best_val_auc;
  row.report = evaluate_with_probe(corpus, cfg, result.params);
  std::vector<std::string> outputs;
  write_fairness_outputs(row.report, dir, outputs);
  std::cout << "  " << label << ": val auc " << format_double(row.val_auc) << ", test auc "
            << format_double(row.report.accuracy.auc) << "\n";
  return row;
}

inline void write_variant_summary(const std::vector<VariantRow>& rows, const std::string& first_col,
                                  const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path);
  os << first_col << ",best_epoch,val_auc,test_auc,er10_r50,rnd10_r50,probe_accuracy\n";
  for (const VariantRow& row : rows) {
    const FairnessCell* cell = find_cell(row.report, 0.5, 10);
    std::string er = cell ? detail::cell_er_str(*cell) : "na";
    std::string rnd = cell ? detail::cell_rnd_str(*cell) : "na";
    os << row.label << ',' << row.best_epoch << ',' << format_double(row.val_auc) << ','
       << format_double(row.report.accuracy.auc) << ',' << er << ',' << rnd << ','
       << format_double(row.report.probe_accuracy) << '\n';
  }
}

inline int cmd_ablate(const Options& opts, const RunConfig& cfg) {
  if (opts.data.empty()) throw ConfigError("ablate: --data is required");
  std::string out = resolve_out(opts);
  claim_output_dir(out, opts.force);
  Manifest m = start_manifest(opts, cfg);
  m.inputs = corpus_inputs(opts.data);
  Corpus corpus = load_corpus(opts.data);
  const std::vector<std::pair<std::string, std::vector<std::pair<std::string, std::string>>>>
      variants = {
          {"full", {}},
          {"no_adversary", {{"lambda_adv", "0"}}},
          {"no_orthogonality", {{"lambda_user", "0"}, {"lambda_news", "0"}}},
          {"no_decomposition", {{"zero_biased", "true"}}},
      };
  std::vector<VariantRow> rows;
  for (const auto& [label, deltas] : variants) {
    RunConfig vcfg = cfg;
    for (const auto& [key, value] : deltas) apply_option(vcfg, key, value);
    rows.push_back(run_variant(corpus, vcfg, label, out + "/" + label));
    m.outputs.push_back(label + "/");
  }
  write_variant_summary(rows, "variant", out + "/summary.csv");
  m.outputs.push_back("summary.csv");
  m.finished = iso_utc_now();
  write_manifest(m, out + "/manifest.json");
  std::cout << "ablate: " << rows.size() << " variants -> " << out << "/summary.csv\n";
  return 0;
}

inline int cmd_sweep(const Options& opts, const RunConfig& cfg) {
  if (opts.data.empty()) throw ConfigError("sweep: --data is required");
  std::string out = resolve_out(opts);
  claim_output_dir(out, opts.force);
  Manifest m = start_manifest(opts, cfg);
  m.inputs = corpus_inputs(opts.data);
  Corpus corpus = load_corpus(opts.data);
  std::vector<VariantRow> rows;
  for (const char* lambda : {"0", "0.001", "0.004", "0.016", "0.064"}) {
    RunConfig vcfg = cfg;
    apply_option(vcfg, "lambda_adv", lambda);
    std::string label = std::string("lambda_") + lambda;
    VariantRow row = run_variant(corpus, vcfg, label, out + "/" + label);
    row.label = lambda;
    rows.push_back(std::move(row));
    m.outputs.push_back(label + "/");
  }
  write_variant_summary(rows, "lambda_adv", out + "/summary.csv");
  m.outputs.push_back("summary.csv");
  m.finished = iso_utc_now();
  write_manifest(m, out + "/manifest.json");
  std::cout << "sweep: " << rows.size() << " adversary weights -> " << out << "/summary.csv\n";
  return 0;
}

}  // namespace cli

inline int run_cli(const std::vector<std::string>& args) {
  if (args.empty()) {
    std::cerr << cli::usage_text();
    return 2;
  }
  const std::string& command = args[0];
  if (command == "help" || command == "--help" || command == "-h") {
    std::cout << cli::usage_text();
    return 0;
  }
  try {
    cli::Options opts = cli::parse_args(args);
    RunConfig cfg = cli::build_config(opts);
    if (command == "simulate") return cli::cmd_simulate(opts, cfg);
    if (command == "train") return cli::cmd_train(opts, cfg);
    if (command == "eval") return cli::cmd_eval(opts, cfg);
    if (command == "ablate") return cli::cmd_ablate(opts, cfg);
    if (command == "sweep") return cli::cmd_sweep(opts, cfg);
    throw ConfigError("unknown command '" + command + "' (try 'fairrec help')");
  } catch (const ConfigError& e) {
    std::cerr << "fairrec: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "fairrec: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "fairrec: unexpected error: " << e.what() << "\n";
    return 1;
  }
}

inline int run_cli(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.push_back(argv[i]);
  return run_cli(args);
}

}  // namespace fairrec
