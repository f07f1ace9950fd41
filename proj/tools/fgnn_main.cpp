// fgnn: preprocess -> build-graph -> train -> evaluate -> analyze.
//
// Exit status: 0 on success, 1 on usage or validation errors, 2 on runtime
// errors (I/O, malformed data, numeric failures).

#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "fgnn/error.hpp"
#include "fgnn/eval.hpp"
#include "fgnn/graphs.hpp"
#include "fgnn/ingest.hpp"
#include "fgnn/selftest.hpp"
#include "fgnn/train.hpp"

namespace fs = std::filesystem;

namespace {

std::vector<int> parse_k_list(const std::string& text) {
  std::vector<int> ks;
  std::stringstream in(text);
  std::string part;
  while (std::getline(in, part, ',')) {
    try {
      std::size_t used = 0;
      const int k = std::stoi(part, &used);
      if (used != part.size() || k < 1) throw std::invalid_argument(part);
      ks.push_back(k);
    } catch (const std::logic_error&) {
      throw fgnn::ValidationError("--k: expected comma-separated positive integers, got '" + text + "'");
    }
  }
  if (ks.empty()) throw fgnn::ValidationError("--k: empty list");
  return ks;
}

// Seed precedence: config file, then SEED from the environment, then --seed.
void apply_seed_overrides(fgnn::RunConfig& config, const std::optional<std::uint64_t>& flag) {
  if (const char* env = std::getenv("SEED"); env && *env) config.set("seed", env);
  if (flag) config.seed = *flag;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw fgnn::IoError("cannot write " + path.string());
  out << text;
}

struct PreprocessArgs {
  std::string format, input, out;
  double recency_fraction = 1.0;
  std::optional<double> test_days;
  int min_count = 5;
};

int run_preprocess(const PreprocessArgs& args) {
  fgnn::PreprocessOptions options;
  options.format = fgnn::parse_click_format(args.format);
  options.recency_fraction = args.recency_fraction;
  options.test_window_seconds = args.test_days ? *args.test_days * 86400.0
                                               : fgnn::default_test_window_seconds(options.format);
  options.min_item_count = args.min_count;
  const fgnn::ParseResult parsed = fgnn::parse_clicks_file(args.input, options.format);
  const fgnn::Dataset dataset = fgnn::build_dataset(parsed, options);
  fgnn::write_dataset(dataset, args.out);
  const auto& s = dataset.stats;
  std::cout << "clicks " << s.clicks << ", items " << s.items << ", train sessions "
            << s.train_sessions << " (" << s.train_examples << " examples), test sessions "
            << s.test_sessions << " (" << s.test_examples << " examples, " << s.dropped_test_examples
            << " dropped), skipped rows " << s.skipped_rows << '\n';
  return 0;
}

int run_build_graph(const std::string& train_dir, const std::string& out) {
  const fgnn::LoadedDataset data = fgnn::read_dataset(train_dir);
  const fgnn::GlobalGraph graph = fgnn::build_global_graph(data.train_sessions, data.num_items);
  fgnn::save_global_graph(graph, out);
  std::cout << "global graph: " << graph.nodes().size() << " nodes, " << graph.edges().size()
            << " edges\n";
  return 0;
}

struct TrainArgs {
  std::string config, data, graph, out;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
};

int run_train(const TrainArgs& args) {
  fgnn::RunConfig config = args.config.empty() ? fgnn::RunConfig{} : fgnn::RunConfig::load(args.config);
  apply_seed_overrides(config, args.seed);
  for (const std::string& kv : args.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw fgnn::ValidationError("--set expects key=value, got '" + kv + "'");
    config.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  config.validate();

  const fgnn::LoadedDataset data = fgnn::read_dataset(args.data);
  if (data.train.empty()) throw fgnn::EmptyDatasetError("no training examples in " + args.data);
  const fgnn::GlobalGraph global = fgnn::load_global_graph(args.graph);
  if (global.num_items() != data.num_items) {
    throw fgnn::ValidationError("graph has " + std::to_string(global.num_items()) +
                                " items, dataset has " + std::to_string(data.num_items));
  }

  fgnn::Checkpoint ckpt;
  ckpt.config = config;
  ckpt.params = fgnn::init_params(config.model, data.num_items, config.train.init_std, config.seed);

  fs::create_directories(args.out);
  write_text(fs::path(args.out) / "config.txt", config.to_text());
  std::ofstream log(fs::path(args.out) / "metrics.csv", std::ios::binary);
  if (!log) throw fgnn::IoError("cannot write metrics.csv in " + args.out);
  log << "epoch,mean_loss,lr,wall_seconds\n";
  for (int epoch = 0; epoch < config.train.epochs; ++epoch) {
    const fgnn::EpochMetrics m =
        fgnn::train_epoch(data.train, global, ckpt.params, ckpt.adam, config, epoch);
    log << m.epoch << ',' << m.mean_loss << ',' << m.lr << ',' << m.wall_seconds << '\n' << std::flush;
    std::cout << "epoch " << m.epoch << "  loss " << m.mean_loss << "  lr " << m.lr << "  "
              << m.wall_seconds << " s\n";
    ckpt.epochs_done = epoch + 1;
    fgnn::save_checkpoint(args.out, ckpt);
  }
  return 0;
}

struct EvaluateArgs {
  std::string ckpt, data, graph, k = "5,10,20", baseline, out;
  std::size_t batch_size = 100;
};

int run_evaluate(const EvaluateArgs& args) {
  const std::vector<int> ks = parse_k_list(args.k);
  const fgnn::LoadedDataset data = fgnn::read_dataset(args.data);
  fgnn::EvalReport report;
  if (!args.baseline.empty()) {
    const fgnn::BaselineKind kind = fgnn::parse_baseline_kind(args.baseline);
    const fgnn::TrainStats stats = fgnn::TrainStats::compute(data.train_sessions, data.num_items);
    report = fgnn::evaluate(fgnn::baseline_scorer(kind, stats), data.test, ks, args.batch_size);
  } else {
    if (args.ckpt.empty() || args.graph.empty()) {
      throw fgnn::ValidationError("evaluate: --ckpt and --graph are required unless --baseline is given");
    }
    const fgnn::Checkpoint ckpt = fgnn::load_checkpoint(args.ckpt);
    if (ckpt.params.num_items() != data.num_items) {
      throw fgnn::ValidationError("checkpoint has " + std::to_string(ckpt.params.num_items()) +
                                  " items, dataset has " + std::to_string(data.num_items));
    }
    const fgnn::GlobalGraph global = fgnn::load_global_graph(args.graph);
    report = fgnn::evaluate(fgnn::model_scorer(ckpt.params, ckpt.config, global), data.test, ks,
                            args.batch_size);
  }
  std::cout << report.to_table();
  if (!args.out.empty()) write_text(args.out, report.to_json().dump(2) + "\n");
  return 0;
}

int run_correlation(const std::string& data_dir, const std::string& out, std::size_t max_pairs,
                    std::uint64_t seed) {
  const fgnn::LoadedDataset data = fgnn::read_dataset(data_dir);
  const fgnn::CorrelationReport report =
      fgnn::session_correlation(data.train_sessions, data.num_items, max_pairs, seed);
  write_text(out, report.to_json().dump(2) + "\n");
  std::cout << "pairs " << report.pairs << (report.sampled ? " (sampled)" : "") << ", zero-variance "
            << report.zero_variance_pairs << ", mean r " << report.mean << '\n';
  return 0;
}

int run_selftest() {
  bool all = true;
  for (const fgnn::SelfTestResult& r : fgnn::run_selftest()) {
    std::cout << (r.passed ? "PASS " : "FAIL ") << r.name << ": " << r.detail << '\n';
    all = all && r.passed;
  }
  return all ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Session-based next-item recommendation with weighted graph attention"};
  app.require_subcommand(1);

  PreprocessArgs pre;
  auto* preprocess = app.add_subcommand("preprocess", "Filter, split and augment a click log");
  preprocess->add_option("--format", pre.format, "yoochoose | diginetica | generic")->required();
  preprocess->add_option("--input", pre.input, "Click file")->required()->check(CLI::ExistingFile);
  preprocess->add_option("--out", pre.out, "Output directory")->required();
  preprocess->add_option("--recency-fraction", pre.recency_fraction,
                         "Keep this most recent fraction of training sessions")
      ->check(CLI::Range(0.0, 1.0));
  preprocess->add_option("--test-days", pre.test_days,
                         "Test window before the last session end (default 1, diginetica 7)");
  preprocess->add_option("--min-count", pre.min_count, "Minimum item occurrences");

  std::string graph_train, graph_out;
  auto* build_graph = app.add_subcommand("build-graph", "Build the global item graph");
  build_graph->add_option("--train", graph_train, "Preprocessed data directory")->required();
  build_graph->add_option("--out", graph_out, "Graph JSON file")->required();

  TrainArgs tr;
  auto* train = app.add_subcommand("train", "Train a model and write a checkpoint");
  train->add_option("--config", tr.config, "key = value config file")->check(CLI::ExistingFile);
  train->add_option("--data", tr.data, "Preprocessed data directory")->required();
  train->add_option("--graph", tr.graph, "Global graph JSON")->required();
  train->add_option("--out", tr.out, "Checkpoint directory")->required();
  train->add_option("--set", tr.overrides, "Override a config key (key=value), repeatable");
  train->add_option("--seed", tr.seed, "Run seed (overrides SEED and the config file)");

  EvaluateArgs ev;
  auto* evaluate = app.add_subcommand("evaluate", "Score test examples and report R@K / MRR@K");
  evaluate->add_option("--ckpt", ev.ckpt, "Checkpoint directory");
  evaluate->add_option("--data", ev.data, "Preprocessed data directory")->required();
  evaluate->add_option("--graph", ev.graph, "Global graph JSON");
  evaluate->add_option("--k", ev.k, "Cutoffs, comma separated");
  evaluate->add_option("--baseline", ev.baseline, "pop | spop | itemknn instead of a checkpoint");
  evaluate->add_option("--batch-size", ev.batch_size, "Examples per scoring batch")
      ->check(CLI::PositiveNumber);
  evaluate->add_option("--out", ev.out, "JSON report path");

  auto* analyze = app.add_subcommand("analyze", "Corpus analyses");
  analyze->require_subcommand(1);
  std::string corr_data, corr_out;
  std::size_t max_pairs = 1000000;
  std::uint64_t corr_seed = 0;
  auto* correlation = analyze->add_subcommand("correlation", "Pearson correlation of sessions sharing items");
  correlation->add_option("--data", corr_data, "Preprocessed data directory")->required();
  correlation->add_option("--out", corr_out, "JSON report path")->required();
  correlation->add_option("--max-pairs", max_pairs, "Pair budget before sampling");
  correlation->add_option("--seed", corr_seed, "Sampling seed");

  auto* selftest = app.add_subcommand("selftest", "Run the built-in invariant suite");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*preprocess) return run_preprocess(pre);
    if (*build_graph) return run_build_graph(graph_train, graph_out);
    if (*train) return run_train(tr);
    if (*evaluate) return run_evaluate(ev);
    if (*correlation) return run_correlation(corr_data, corr_out, max_pairs, corr_seed);
    if (*selftest) return run_selftest();
  } catch (const fgnn::ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
