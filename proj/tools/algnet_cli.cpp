// algnet: synthetic data, training, evaluation, ablation and gradient checks.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "algnet/algnet.hpp"

namespace fs = std::filesystem;
using namespace algnet;

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

/// Flags that overlay TrainConfig. Unset flags leave the config untouched.
struct ConfigFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs;
  std::optional<double> lr, alpha, beta, gamma, theta0, w_ddi;
  std::optional<std::string> variant;

  void add_to(CLI::App& app) {
    app.add_option("--config", config_path, "JSON config file (overrides defaults)")->check(CLI::ExistingFile);
    app.add_option("--seed", seed, "Random seed");
    app.add_option("--epochs", epochs, "Training epochs");
    app.add_option("--lr", lr, "Adam learning rate");
    app.add_option("--variant", variant, "Model variant, e.g. ALGNET, RNN_LGNET, RNN_GCN");
    app.add_option("--alpha", alpha, "LGC layer weight");
    app.add_option("--beta", beta, "DDI graph weight in the memory graph");
    app.add_option("--gamma", gamma, "Attention branch weight");
    app.add_option("--theta0", theta0, "BCE weight (the hinge loss gets 1 - theta0)");
    app.add_option("--w-ddi", w_ddi, "Weight of the interaction loss");
  }

  TrainConfig resolve() const {
    TrainConfig c = config_path.empty() ? TrainConfig{} : load_config(config_path);
    if (seed) c.seed = *seed;
    if (epochs) c.epochs = *epochs;
    if (lr) c.lr = *lr;
    if (variant) c.variant = parse_variant(*variant);
    if (alpha) c.alpha = *alpha;
    if (beta) c.beta = *beta;
    if (gamma) c.gamma = *gamma;
    if (theta0) {
      c.theta0 = *theta0;
      c.theta1 = 1.0 - *theta0;
    }
    if (w_ddi) c.w_ddi = *w_ddi;
    c.validate();
    return c;
  }
};

struct DataFlags {
  std::string data;
  std::string ddi_file;
  std::string vocab;

  void add_to(CLI::App& app, bool required) {
    auto* opt = app.add_option("--data", data,
                               "Records JSONL, or a directory with records.jsonl [ddi.txt vocab.json]");
    if (required) opt->required();
    app.add_option("--ddi-file", ddi_file, "DDI edge list (two medication codes per line)");
    app.add_option("--vocab", vocab, "Vocabulary JSON to encode against");
  }
};

struct Dataset {
  CodeVocab vocab;
  std::vector<PatientRecord> records;
  AdjacencyMatrix ddi;
};

Dataset load_dataset(const DataFlags& f, const CodeVocab* fixed_vocab = nullptr) {
  std::string records = f.data, ddi = f.ddi_file, vocab = f.vocab;
  if (fs::is_directory(f.data)) {
    records = (fs::path(f.data) / "records.jsonl").string();
    if (ddi.empty() && fs::exists(fs::path(f.data) / "ddi.txt")) ddi = (fs::path(f.data) / "ddi.txt").string();
    if (vocab.empty() && fs::exists(fs::path(f.data) / "vocab.json")) vocab = (fs::path(f.data) / "vocab.json").string();
  }
  Dataset d;
  LoadedRecords loaded = fixed_vocab ? load_records(records, *fixed_vocab)
                         : vocab.empty() ? load_records(records)
                                         : load_records(records, load_vocab(vocab));
  d.vocab = std::move(loaded.vocab);
  d.records = std::move(loaded.records);
  if (ddi.empty()) {
    d.ddi = AdjacencyMatrix(d.vocab.med.size(), AdjacencyKind::Ddi);
  } else {
    DdiLoad l = build_ddi_adjacency(ddi, d.vocab);
    if (l.skipped_unknown || l.skipped_self) {
      std::cerr << "ddi: " << l.edges_read << " edges read, " << l.skipped_unknown
                << " skipped (unknown code), " << l.skipped_self << " skipped (self edge)\n";
    }
    d.ddi = std::move(l.matrix);
  }
  std::cerr << "loaded " << d.records.size() << " patients, " << d.vocab.diag.size() << " diagnoses, "
            << d.vocab.proc.size() << " procedures, " << d.vocab.med.size() << " medications\n";
  return d;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

void write_json(const fs::path& path, const nlohmann::json& j) { write_text(path, j.dump(2) + "\n"); }

struct SynthFlags {
  std::size_t patients = 200;
  std::size_t n_med = 20;
  double noise = 0.1;
  std::uint64_t seed = 1;

  void add_to(CLI::App& app) {
    app.add_option("--patients", patients, "Number of patients")->capture_default_str();
    app.add_option("--n-med", n_med, "Medication vocabulary size")->capture_default_str();
    app.add_option("--noise", noise, "Per-visit probability of one off-rule drug")->capture_default_str();
  }

  SynthConfig config() const {
    SynthConfig s;
    s.patients = patients;
    s.n_med = n_med;
    s.noise = noise;
    s.seed = seed;
    return s;
  }
};

int cmd_synth(const SynthFlags& f, const std::string& out) {
  const SynthCorpus c = synth_generate(f.config());
  fs::create_directories(out);
  save_records((fs::path(out) / "records.jsonl").string(), c.records, c.vocab);
  save_vocab((fs::path(out) / "vocab.json").string(), c.vocab);
  std::ostringstream ddi;
  write_ddi_edges(ddi, c.ddi_edges, c.vocab);
  write_text(fs::path(out) / "ddi.txt", ddi.str());
  std::cout << "wrote " << c.records.size() << " patients and " << c.ddi_edges.size() << " DDI edges to "
            << out << '\n';
  return 0;
}

int cmd_train(const TrainConfig& cfg, const DataFlags& df, const std::string& out, bool quiet) {
  Dataset d = load_dataset(df);
  const PreparedData data = prepare_data(cfg, d.vocab, d.records, std::move(d.ddi));
  std::cerr << "split: " << data.split.train.size() << " train / " << data.split.val.size() << " val / "
            << data.split.test.size() << " test\n";
  TrainOptions opts;
  if (!quiet) opts.progress = &std::cerr;
  const auto start = std::chrono::steady_clock::now();
  TrainResult r = train(cfg, data, opts);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  fs::create_directories(out);
  save_checkpoint((fs::path(out) / "checkpoint.bin").string(), r.model, data.vocab);
  write_text(fs::path(out) / "log.csv", r.log.to_csv());
  write_json(fs::path(out) / "metrics.json", report_to_json(r.log.test));
  write_json(fs::path(out) / "runlog.json", r.log.to_json());
  const auto& m = r.log.test.value;
  std::cout << std::fixed << std::setprecision(4) << "best epoch " << r.log.best_epoch << " (val jaccard "
            << r.log.best_val_jaccard << ")\n"
            << "test: jaccard " << m.jaccard << "  f1 " << m.f1 << "  pr_auc " << m.pr_auc << "  ddi_rate "
            << m.ddi_rate << "  avg_drugs " << m.avg_drugs << '\n'
            << std::setprecision(1) << "trained in " << secs << " s; outputs in " << out << '\n';
  return 0;
}

int cmd_evaluate(const std::string& checkpoint, const DataFlags& df, const std::string& split,
                 const std::string& out) {
  Checkpoint ck = load_checkpoint(checkpoint);
  Dataset d = load_dataset(df, &ck.vocab);
  const TrainConfig cfg = ck.config;
  const PreparedData data = prepare_data(cfg, ck.vocab, d.records, std::move(d.ddi));
  AlgNet model = model_from_checkpoint(std::move(ck));
  const std::vector<PatientRecord>* part = nullptr;
  if (split == "train") part = &data.split.train;
  else if (split == "val") part = &data.split.val;
  else if (split == "test") part = &data.split.test;
  else part = &d.records;
  const auto report = report_to_json(evaluate(model, *part, data.graphs));
  if (out.empty()) std::cout << report.dump(2) << '\n';
  else write_json(out, report);
  return 0;
}

int cmd_ablate(TrainConfig base, const DataFlags& df, const SynthFlags& sf,
               const std::vector<std::string>& variant_names, const std::vector<std::uint64_t>& seeds,
               const std::string& out) {
  std::vector<Variant> variants;
  if (variant_names.empty()) {
    for (const auto& t : kVariants) variants.push_back(t.variant);
  } else {
    for (const auto& n : variant_names) variants.push_back(parse_variant(n));
  }
  std::optional<Dataset> fixed;
  if (!df.data.empty()) fixed = load_dataset(df);
  const DataFactory factory = [&](const TrainConfig& cfg) {
    if (fixed) return prepare_data(cfg, fixed->vocab, fixed->records, fixed->ddi);
    SynthFlags s = sf;
    s.seed = cfg.seed;
    const SynthCorpus c = synth_generate(s.config());
    return prepare_data(cfg, c.vocab, c.records, ddi_from_pairs(c.ddi_edges, c.vocab.med.size()));
  };
  const AblationTable table = run_ablation(base, variants, seeds, factory, &std::cerr);
  const std::string md = table.to_markdown();
  std::cout << md;
  if (!out.empty()) {
    fs::create_directories(out);
    write_text(fs::path(out) / "ablation.md", md);
    write_text(fs::path(out) / "ablation.csv", table.to_csv());
  }
  return 0;
}

int cmd_gradcheck(std::uint64_t seed, const std::string& variant) {
  const auto r = run_toy_gradcheck(seed, parse_variant(variant));
  std::cout << "gradcheck seed " << seed << " variant " << variant << " (tolerance "
            << r.report.tolerance << ")\n";
  for (const auto& g : r.groups) {
    std::cout << "  " << std::left << std::setw(20) << g.group << std::right << std::setw(6) << g.checked
              << " entries  max rel error " << std::scientific << std::setprecision(3) << g.max_rel_error
              << std::defaultfloat << (g.passed ? "  ok" : "  FAIL") << '\n';
  }
  std::cout << (r.passed() ? "PASS" : "FAIL") << '\n';
  return r.passed() ? 0 : kExitFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ALGNet medication recommendation"};
  app.require_subcommand(1);

  auto* synth = app.add_subcommand("synth-data", "Generate a planted-rule synthetic corpus");
  SynthFlags synth_flags;
  std::string synth_out;
  synth_flags.add_to(*synth);
  synth->add_option("--seed", synth_flags.seed, "Random seed")->capture_default_str();
  synth->add_option("--out", synth_out, "Output directory")->required();

  auto* train_cmd = app.add_subcommand("train", "Train a model and write checkpoint and logs");
  ConfigFlags train_cfg;
  DataFlags train_data;
  std::string train_out = "run";
  bool quiet = false;
  train_cfg.add_to(*train_cmd);
  train_data.add_to(*train_cmd, true);
  train_cmd->add_option("--out", train_out, "Output directory")->capture_default_str();
  train_cmd->add_flag("--quiet", quiet, "No per-epoch progress");

  auto* eval_cmd = app.add_subcommand("evaluate", "Evaluate a checkpoint");
  DataFlags eval_data;
  std::string checkpoint, eval_split = "test", eval_out;
  eval_cmd->add_option("--checkpoint", checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
  eval_data.add_to(*eval_cmd, true);
  eval_cmd->add_option("--split", eval_split, "train, val, test or all")
      ->capture_default_str()
      ->check(CLI::IsMember({"train", "val", "test", "all"}));
  eval_cmd->add_option("--out", eval_out, "Write the JSON report here instead of stdout");

  auto* ablate_cmd = app.add_subcommand("ablate", "Train every variant over several seeds");
  ConfigFlags ablate_cfg;
  DataFlags ablate_data;
  SynthFlags ablate_synth;
  std::vector<std::string> variants;
  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::string ablate_out;
  ablate_cfg.add_to(*ablate_cmd);
  ablate_data.add_to(*ablate_cmd, false);
  ablate_synth.add_to(*ablate_cmd);
  ablate_cmd->add_option("--variants", variants, "Variants to train (default: all)")->delimiter(',');
  ablate_cmd->add_option("--seeds", seeds, "Seeds; without --data each seed also draws its corpus")
      ->delimiter(',')
      ->capture_default_str();
  ablate_cmd->add_option("--out", ablate_out, "Directory for ablation.md and ablation.csv");

  auto* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference check on a toy instance");
  std::uint64_t grad_seed = 7;
  std::string grad_variant = "ALGNET";
  grad_cmd->add_option("--seed", grad_seed, "Random seed")->capture_default_str();
  grad_cmd->add_option("--variant", grad_variant, "Model variant")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n";
    const CLI::App* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    std::cerr << sub->help();
    return kExitUsage;
  }

  try {
    if (*synth) return cmd_synth(synth_flags, synth_out);
    if (*train_cmd) return cmd_train(train_cfg.resolve(), train_data, train_out, quiet);
    if (*eval_cmd) return cmd_evaluate(checkpoint, eval_data, eval_split, eval_out);
    if (*ablate_cmd) {
      return cmd_ablate(ablate_cfg.resolve(), ablate_data, ablate_synth, variants, seeds, ablate_out);
    }
    if (*grad_cmd) return cmd_gradcheck(grad_seed, grad_variant);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}
