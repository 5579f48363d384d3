// swnf: train, evaluate, OoD-score and sample sliced-Wasserstein flows.

#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "swnf/swnf.h"

namespace fs = std::filesystem;

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitAborted = 3;

struct Failure {
  std::string message;
  int exit_code = kExitFailure;
};

void check(swnf_status s, const std::string& context) {
  if (s != SWNF_OK) {
    throw Failure{context + ": " + swnf_status_name(s) + ": " + swnf_last_error(),
                  s == SWNF_TRAINING_ABORTED ? kExitAborted : kExitFailure};
  }
}

std::string shortest(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

std::string g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

swnf_dataset_kind dataset_kind(const std::string& name) {
  swnf_dataset_kind k{};
  check(swnf_parse_dataset(name.c_str(), &k), "--dataset");
  return k;
}

const std::map<std::string, swnf_dataset_kind> kDatasetMap = {
    {"circles", SWNF_CIRCLES}, {"moons", SWNF_MOONS}, {"blobs", SWNF_BLOBS}};
const std::map<std::string, swnf_objective> kObjectiveMap = {
    {"mle", SWNF_OBJECTIVE_MLE},
    {"sw", SWNF_OBJECTIVE_SW},
    {"hybrid", SWNF_OBJECTIVE_HYBRID_DATA},
    {"hybrid-data", SWNF_OBJECTIVE_HYBRID_DATA},
    {"hybrid-latent", SWNF_OBJECTIVE_HYBRID_LATENT}};

std::string metrics_row(const swnf_metrics& m) {
  std::size_t need = 0;
  swnf_metrics_csv_row(&m, nullptr, 0, &need);
  std::string buf(need, '\0');
  check(swnf_metrics_csv_row(&m, buf.data(), buf.size(), nullptr), "format metrics");
  buf.pop_back();
  return buf;
}

std::string metrics_header() {
  std::size_t need = 0;
  swnf_metrics_csv_header(nullptr, 0, &need);
  std::string buf(need, '\0');
  check(swnf_metrics_csv_header(buf.data(), buf.size(), nullptr), "format metrics");
  buf.pop_back();
  return buf;
}

void write_column_csv(const fs::path& path, const std::string& name, const std::vector<double>& v) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Failure{"cannot open " + path.string() + " for writing"};
  out << name << '\n';
  for (double x : v) out << g17(x) << '\n';
  if (!out) throw Failure{"failed writing " + path.string()};
}

fs::path ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Failure{"cannot create directory " + dir + ": " + ec.message()};
  return fs::path(dir);
}

struct Model {
  swnf_model* ptr = nullptr;
  Model() = default;
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;
  ~Model() { swnf_model_destroy(ptr); }
};

void load(Model& m, const std::string& path) { check(swnf_model_load(path.c_str(), &m.ptr), "load " + path); }

// ---------------------------------------------------------------------------
// Manifest: `key = value` lines whose keys are the long flag names of train.

const std::vector<std::string> kManifestInfoKeys = {"command", "status", "failed-step", "version"};

std::vector<std::string> manifest_to_args(const std::string& path,
                                          const std::vector<std::string>& known) {
  std::ifstream in(path);
  if (!in) throw Failure{"cannot open manifest " + path};
  std::vector<std::string> args;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Failure{path + ":" + std::to_string(lineno) + ": expected `key = value`"};
    }
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t\r");
      const auto b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (std::find(kManifestInfoKeys.begin(), kManifestInfoKeys.end(), key) != kManifestInfoKeys.end()) {
      continue;
    }
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw Failure{path + ":" + std::to_string(lineno) + ": unknown key '" + key + "'"};
    }
    args.push_back("--" + key);
    args.push_back(value);
  }
  return args;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string objective = "hybrid-data";
  double alpha = 1.0;
  std::string dataset;
  double noise = -1.0;  // negative: dataset default
  std::uint64_t seed = 0;
  std::uint64_t steps = 0;
  double lr = 0.0;
  std::size_t batch = 0;
  std::size_t sw_proj = 0;
  int sw_p = 0;
  bool sw_fixed = false;
  std::uint64_t sw_seed = 0;
  std::uint64_t eval_every = 0;
  std::uint64_t log_every = 0;
  std::size_t layers = 0;
  std::vector<std::size_t> hidden;
  std::size_t train_size = 0, eval_size = 0, ood_size = 0, eval_sw_proj = 0;
  std::string out_dir = "run";
  std::string config;
};

void write_manifest(const fs::path& path, const swnf_train_config& c,
                    const std::string& status, std::optional<std::uint64_t> failed_step) {
  std::ostringstream m;
  m << "# swnf run manifest; replay with: swnf train --config <this file> --out-dir <dir>\n";
  m << "command = train\n";
  m << "version = " << swnf_version() << '\n';
  m << "objective = " << swnf_objective_name(c.objective) << '\n';
  m << "alpha = " << shortest(c.alpha) << '\n';
  m << "dataset = " << swnf_dataset_name(c.eval.dataset) << '\n';
  m << "noise = " << shortest(c.eval.noise_std) << '\n';
  m << "seed = " << c.seed << '\n';
  m << "steps = " << c.steps << '\n';
  m << "lr = " << shortest(c.learning_rate) << '\n';
  m << "batch = " << c.batch_size << '\n';
  m << "sw-proj = " << c.sw_projections << '\n';
  m << "sw-p = " << c.sw_p << '\n';
  m << "sw-fixed = " << (c.sw_fixed_directions ? "true" : "false") << '\n';
  m << "sw-seed = " << c.sw_seed << '\n';
  m << "eval-every = " << c.eval_every << '\n';
  m << "log-every = " << c.log_every << '\n';
  m << "layers = " << c.n_layers << '\n';
  m << "hidden = ";
  for (std::size_t i = 0; i < c.n_hidden; ++i) m << (i ? "," : "") << c.hidden[i];
  m << '\n';
  m << "train-size = " << c.eval.train_size << '\n';
  m << "eval-size = " << c.eval.eval_size << '\n';
  m << "ood-size = " << c.eval.ood_size << '\n';
  m << "eval-sw-proj = " << c.eval.sw_projections << '\n';
  m << "status = " << status << '\n';
  if (failed_step) m << "failed-step = " << *failed_step << '\n';
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Failure{"cannot open " + path.string() + " for writing"};
  out << m.str();
  if (!out) throw Failure{"failed writing " + path.string()};
}

struct LogSink {
  std::ofstream file;
  bool quiet = false;
};

void log_line(const char* line, void* user) {
  auto* sink = static_cast<LogSink*>(user);
  sink->file << line << '\n';
  sink->file.flush();
  if (!sink->quiet) std::cout << line << std::endl;
}

int run_train(const TrainArgs& a, bool quiet) {
  const swnf_dataset_kind kind = dataset_kind(a.dataset);
  swnf_train_config c = swnf_train_config_defaults(kind);
  c.objective = kObjectiveMap.at(a.objective);
  c.alpha = a.alpha;
  if (a.noise >= 0.0) c.eval.noise_std = a.noise;
  c.seed = a.seed;
  if (a.steps) c.steps = a.steps;
  if (a.lr > 0.0) c.learning_rate = a.lr;
  if (a.batch) c.batch_size = a.batch;
  if (a.sw_proj) c.sw_projections = a.sw_proj;
  if (a.sw_p) c.sw_p = a.sw_p;
  c.sw_fixed_directions = a.sw_fixed ? 1 : 0;
  c.sw_seed = a.sw_seed;
  if (a.eval_every) c.eval_every = a.eval_every;
  if (a.log_every) c.log_every = a.log_every;
  if (a.layers) c.n_layers = a.layers;
  if (!a.hidden.empty()) {
    if (a.hidden.size() > SWNF_MAX_HIDDEN) throw Failure{"--hidden: too many layers"};
    c.n_hidden = a.hidden.size();
    for (std::size_t i = 0; i < a.hidden.size(); ++i) c.hidden[i] = a.hidden[i];
  }
  if (a.train_size) c.eval.train_size = a.train_size;
  if (a.eval_size) c.eval.eval_size = a.eval_size;
  if (a.ood_size) c.eval.ood_size = a.ood_size;
  if (a.eval_sw_proj) c.eval.sw_projections = a.eval_sw_proj;
  c.eval.seed = c.seed;

  const fs::path dir = ensure_dir(a.out_dir);
  const std::string checkpoint = (dir / "checkpoint.swnf").string();
  const std::string metrics = (dir / "metrics.csv").string();
  const std::string losses = (dir / "loss.csv").string();
  c.checkpoint_path = checkpoint.c_str();
  c.metrics_path = metrics.c_str();
  c.loss_path = losses.c_str();

  LogSink sink;
  sink.quiet = quiet;
  sink.file.open(dir / "train.log", std::ios::binary | std::ios::trunc);
  if (!sink.file) throw Failure{"cannot open " + (dir / "train.log").string()};
  c.on_log = log_line;
  c.log_user = &sink;

  const fs::path manifest = dir / "manifest.txt";
  write_manifest(manifest, c, "running", std::nullopt);
  std::uint64_t failed_step = 0;
  swnf_metrics final{};
  const swnf_status s = swnf_train(&c, nullptr, &final, &failed_step);
  if (s == SWNF_TRAINING_ABORTED) {
    write_manifest(manifest, c, "aborted", failed_step);
  } else if (s != SWNF_OK) {
    write_manifest(manifest, c, "failed", std::nullopt);
  }
  check(s, "train");
  write_manifest(manifest, c, "ok", std::nullopt);
  if (!quiet) {
    std::cout << metrics_header() << '\n' << metrics_row(final) << '\n';
  }
  return 0;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string checkpoint;
  std::string dataset;
  std::uint64_t seed = 0;
  std::size_t sw_proj = 0;
  int sw_p = 0;
  double noise = -1.0;
  std::uint64_t step = 0;
  std::size_t train_size = 0, eval_size = 0, ood_size = 0;
  std::string out;
};

swnf_eval_config eval_config(const std::string& dataset, std::uint64_t seed, double noise,
                             std::size_t train_size, std::size_t eval_size, std::size_t ood_size) {
  swnf_eval_config c = swnf_eval_config_defaults(dataset_kind(dataset));
  c.seed = seed;
  if (noise >= 0.0) c.noise_std = noise;
  if (train_size) c.train_size = train_size;
  if (eval_size) c.eval_size = eval_size;
  if (ood_size) c.ood_size = ood_size;
  return c;
}

int run_eval(const EvalArgs& a) {
  Model model;
  load(model, a.checkpoint);
  swnf_eval_config c = eval_config(a.dataset, a.seed, a.noise, a.train_size, a.eval_size, a.ood_size);
  if (a.sw_proj) c.sw_projections = a.sw_proj;
  if (a.sw_p) c.sw_p = a.sw_p;
  swnf_metrics m{};
  check(swnf_evaluate(model.ptr, &c, a.step, &m), "evaluate");
  std::cout << metrics_header() << '\n' << metrics_row(m) << '\n';
  const std::string out = a.out.empty() ? (fs::path(a.checkpoint).parent_path() / "eval.csv").string() : a.out;
  std::error_code ec;
  fs::remove(out, ec);
  check(swnf_metrics_append_csv(out.c_str(), &m), "write " + out);
  return 0;
}

// ---------------------------------------------------------------------------

struct OodArgs {
  std::string checkpoint;
  std::string in_dataset;
  std::vector<std::string> ood_datasets;
  std::uint64_t seed = 0;
  double noise = -1.0;
  std::size_t n = 0;
  std::size_t train_size = 0;
  std::size_t bins = 50;
  std::string out_dir = ".";
};

int run_ood(const OodArgs& a) {
  Model model;
  load(model, a.checkpoint);
  swnf_eval_config c = eval_config(a.in_dataset, a.seed, a.noise, a.train_size, a.n, a.n);
  const fs::path dir = ensure_dir(a.out_dir);

  std::vector<std::vector<double>> sets;
  std::vector<std::string> names;
  std::vector<double> in(c.eval_size);
  for (const auto& name : a.ood_datasets) {
    std::vector<double> out(c.ood_size);
    double auroc = 0.0;
    check(swnf_ood_scores(model.ptr, &c, dataset_kind(name), in.data(), out.data(), &auroc),
          "score " + name);
    std::cout << "auroc " << name << ' ' << g17(auroc) << '\n';
    write_column_csv(dir / ("loglik_ood_" + name + ".csv"), "loglik", out);
    sets.push_back(std::move(out));
    names.push_back("ood_" + name);
  }
  write_column_csv(dir / ("loglik_in_" + a.in_dataset + ".csv"), "loglik", in);
  sets.insert(sets.begin(), in);
  names.insert(names.begin(), "in_" + a.in_dataset);

  std::vector<const double*> ptrs;
  std::vector<std::size_t> sizes;
  std::vector<const char*> cnames;
  for (std::size_t i = 0; i < sets.size(); ++i) {
    ptrs.push_back(sets[i].data());
    sizes.push_back(sets[i].size());
    cnames.push_back(names[i].c_str());
  }
  const std::string hist = (dir / "histogram.csv").string();
  check(swnf_write_histogram_csv(hist.c_str(), ptrs.data(), sizes.data(), cnames.data(),
                                 ptrs.size(), a.bins),
        "write " + hist);
  return 0;
}

// ---------------------------------------------------------------------------

int run_sample(const std::string& checkpoint, std::size_t n, std::uint64_t seed,
               const std::string& out) {
  Model model;
  load(model, checkpoint);
  const std::size_t dim = swnf_model_dim(model.ptr);
  std::vector<double> x(n * dim);
  check(swnf_model_sample(model.ptr, n, seed, x.data()), "sample");
  check(swnf_write_points_csv(out.c_str(), x.data(), n, dim), "write " + out);
  return 0;
}

int run_dataset(const std::string& dataset, std::size_t n, std::uint64_t seed, double noise,
                bool raw, const std::string& out) {
  swnf_dataset_spec spec = swnf_dataset_defaults(dataset_kind(dataset));
  spec.n_samples = n;
  spec.seed = seed;
  if (noise >= 0.0) spec.noise_std = noise;
  spec.standardize = raw ? 0 : 1;
  std::vector<double> x(n * 2);
  check(swnf_dataset_generate(&spec, x.data()), "generate");
  check(swnf_write_points_csv(out.c_str(), x.data(), n, 2), "write " + out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
#if defined(__GLIBC__)
  // Training allocates and frees many large short-lived buffers per step.
  mallopt(M_MMAP_THRESHOLD, 32 << 20);
  mallopt(M_TRIM_THRESHOLD, 512 << 20);
#endif

  CLI::App app{"Sliced-Wasserstein normalizing flows on 2-D toy data"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(swnf_version()));
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  // train
  TrainArgs ta;
  bool quiet = false;
  auto* train = app.add_subcommand("train", "train a flow and write checkpoint, metrics and manifest");
  train->add_option("--objective", ta.objective, "mle | sw | hybrid-data | hybrid-latent")
      ->check(CLI::IsMember(kObjectiveMap));
  train->add_option("--alpha", ta.alpha, "weight of the likelihood term")->check(CLI::NonNegativeNumber);
  train->add_option("--dataset", ta.dataset, "circles | moons | blobs")->check(CLI::IsMember(kDatasetMap));
  train->add_option("--noise", ta.noise, "dataset noise std (default per dataset)")
      ->check(CLI::NonNegativeNumber);
  train->add_option("--seed", ta.seed);
  train->add_option("--steps", ta.steps, "optimizer steps (default 20000)")->check(CLI::PositiveNumber);
  train->add_option("--lr", ta.lr, "Adam learning rate (default 1e-4)")->check(CLI::PositiveNumber);
  train->add_option("--batch", ta.batch, "batch size (default 4096)")->check(CLI::Range(2, 1 << 24));
  train->add_option("--sw-proj", ta.sw_proj, "projections per SW estimate (default 128)")
      ->check(CLI::PositiveNumber);
  train->add_option("--sw-p", ta.sw_p, "SW order p (default 2)")->check(CLI::PositiveNumber);
  train->add_option("--sw-fixed", ta.sw_fixed, "reuse one direction set drawn from --sw-seed");
  train->add_option("--sw-seed", ta.sw_seed);
  train->add_option("--eval-every", ta.eval_every, "steps between evaluations (default 1000)")
      ->check(CLI::PositiveNumber);
  train->add_option("--log-every", ta.log_every, "steps between loss rows (default 100)")
      ->check(CLI::PositiveNumber);
  train->add_option("--layers", ta.layers, "coupling layers (default 6)")->check(CLI::PositiveNumber);
  train->add_option("--hidden", ta.hidden, "hidden widths, e.g. 64,64")->delimiter(',')
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  train->add_option("--train-size", ta.train_size)->check(CLI::PositiveNumber);
  train->add_option("--eval-size", ta.eval_size)->check(CLI::PositiveNumber);
  train->add_option("--ood-size", ta.ood_size)->check(CLI::PositiveNumber);
  train->add_option("--eval-sw-proj", ta.eval_sw_proj)->check(CLI::PositiveNumber);
  train->add_option("--out-dir", ta.out_dir, "output directory");
  train->add_option("--config", ta.config, "manifest to start from; flags override it")
      ->check(CLI::ExistingFile);
  train->add_flag("--quiet", quiet, "only write files");

  // eval
  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  eval->add_option("--checkpoint", ea.checkpoint)->required()->check(CLI::ExistingFile);
  eval->add_option("--dataset", ea.dataset)->required()->check(CLI::IsMember(kDatasetMap));
  eval->add_option("--seed", ea.seed, "seed of the evaluation sets");
  eval->add_option("--sw-proj", ea.sw_proj, "projections of the SW metric (default 2048)")
      ->check(CLI::PositiveNumber);
  eval->add_option("--sw-p", ea.sw_p)->check(CLI::PositiveNumber);
  eval->add_option("--noise", ea.noise)->check(CLI::NonNegativeNumber);
  eval->add_option("--step", ea.step, "value of the step column");
  eval->add_option("--train-size", ea.train_size)->check(CLI::PositiveNumber);
  eval->add_option("--eval-size", ea.eval_size)->check(CLI::PositiveNumber);
  eval->add_option("--ood-size", ea.ood_size)->check(CLI::PositiveNumber);
  eval->add_option("--out", ea.out, "metrics CSV (default eval.csv next to the checkpoint)");

  // ood
  OodArgs oa;
  auto* ood = app.add_subcommand("ood", "score OoD sets by log-likelihood");
  ood->add_option("--checkpoint", oa.checkpoint)->required()->check(CLI::ExistingFile);
  ood->add_option("--in-dataset", oa.in_dataset)->required()->check(CLI::IsMember(kDatasetMap));
  ood->add_option("--ood-dataset", oa.ood_datasets, "repeatable")
      ->required()
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll)
      ->check(CLI::IsMember(kDatasetMap));
  ood->add_option("--seed", oa.seed);
  ood->add_option("--noise", oa.noise)->check(CLI::NonNegativeNumber);
  ood->add_option("--n", oa.n, "samples per set (default 10000)")->check(CLI::PositiveNumber);
  ood->add_option("--train-size", oa.train_size)->check(CLI::PositiveNumber);
  ood->add_option("--bins", oa.bins, "histogram bins")->check(CLI::PositiveNumber);
  ood->add_option("--out-dir", oa.out_dir);

  // sample
  std::string s_checkpoint, s_out = "samples.csv";
  std::size_t s_n = 1000;
  std::uint64_t s_seed = 0;
  auto* sample = app.add_subcommand("sample", "draw samples x = f^-1(z)");
  sample->add_option("--checkpoint", s_checkpoint)->required()->check(CLI::ExistingFile);
  sample->add_option("--n", s_n)->check(CLI::PositiveNumber);
  sample->add_option("--seed", s_seed);
  sample->add_option("--out", s_out);

  // dataset
  std::string d_dataset, d_out = "dataset.csv";
  std::size_t d_n = 1000;
  std::uint64_t d_seed = 0;
  double d_noise = -1.0;
  bool d_raw = false;
  auto* dataset = app.add_subcommand("dataset", "export a toy dataset as CSV");
  dataset->add_option("--dataset", d_dataset)->required()->check(CLI::IsMember(kDatasetMap));
  dataset->add_option("--n", d_n)->check(CLI::PositiveNumber);
  dataset->add_option("--seed", d_seed);
  dataset->add_option("--noise", d_noise)->check(CLI::NonNegativeNumber);
  dataset->add_flag("--raw", d_raw, "skip standardization");
  dataset->add_option("--out", d_out);

  // A manifest is replayed by placing its keys in front of the explicit flags.
  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    if (!args.empty() && args[0] == "train") {
      for (std::size_t i = 1; i + 1 < args.size(); ++i) {
        if (args[i] == "--config") {
          std::vector<std::string> known;
          for (const auto* opt : train->get_options()) {
            const auto names = opt->get_lnames();
            if (!names.empty() && names[0] != "config" && names[0] != "help" && names[0] != "quiet") {
              known.push_back(names[0]);
            }
          }
          auto extra = manifest_to_args(args[i + 1], known);
          args.insert(args.begin() + 1, extra.begin(), extra.end());
          break;
        }
      }
    }
  } catch (const Failure& f) {
    std::cerr << "error: " << f.message << '\n';
    return f.exit_code;
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(std::move(reversed));
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*train) {
      if (ta.dataset.empty()) throw Failure{"train: --dataset is required"};
      return run_train(ta, quiet);
    }
    if (*eval) return run_eval(ea);
    if (*ood) return run_ood(oa);
    if (*sample) return run_sample(s_checkpoint, s_n, s_seed, s_out);
    if (*dataset) return run_dataset(d_dataset, d_n, d_seed, d_noise, d_raw, d_out);
  } catch (const Failure& f) {
    std::cerr << "error: " << f.message << '\n';
    return f.exit_code;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitFailure;
}
