// Acceptance runner: prints one PASS/FAIL line per criterion and exits
// nonzero if any selected criterion fails.
//
//   swnf_acceptance [--only 1-5,8] [--full-protocol] [--protocol-steps N]
//                   [--work-dir DIR]
//
// Without --full-protocol, criteria 6 and 7 time short CLI runs at the
// default batch size and project the cost of the full training protocol; they
// pass only if that projection fits the budget and the trained models satisfy
// the orderings, which in that mode are not evaluated.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "swnf/metrics.hpp"
#include "swnf/objectives.hpp"
#include "swnf/sliced_wasserstein.hpp"
#include "test_support.hpp"

namespace fs = std::filesystem;
using namespace swnf;
using testing::log_abs_det;
using testing::max_gradient_error;
using testing::normal_tensor;
using testing::numeric_jacobian;
using testing::random_model;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

int failures = 0;

void report(int id, bool pass, const std::string& detail) {
  if (!pass) ++failures;
  std::printf("criterion %d: %s  %s\n", id, pass ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
}

// ---------------------------------------------------------------------------

void invertibility() {
  const auto start = Clock::now();
  std::mt19937_64 rng(101);
  double worst = 0.0;
  for (std::uint64_t m = 0; m < 10; ++m) {
    auto model = random_model(FlowArchitecture{2, 6, {64, 64}}, 1000 + m, 0.3);
    auto x = normal_tensor({256, 2}, rng, 2.0);
    auto back = model.inverse(model.forward(x).z);
    for (std::size_t i = 0; i < x.size(); ++i) worst = std::max(worst, std::fabs(back[i] - x[i]));
  }
  const double t = seconds_since(start);
  report(1, worst < 1e-8 && t < 10.0,
         "max |inverse(forward(x)) - x| = " + fmt("%.3g", worst) + " (< 1e-8), " + fmt("%.2f", t) +
             " s (< 10 s)");
}

void log_det_oracle() {
  const auto start = Clock::now();
  std::mt19937_64 rng(202);
  std::normal_distribution<double> normal(0.0, 1.0);
  double worst = 0.0;
  int pairs = 0;
  for (int k = 0; k < 100; ++k) {
    const std::size_t dim = 2 + k % 3;
    auto model = random_model(FlowArchitecture{dim, 6, {32, 32}}, 2000 + k, 0.3);
    std::vector<double> x(dim);
    for (double& v : x) v = normal(rng);
    const double analytic = model.forward(Tensor(Shape{1, dim}, x)).log_det[0];
    const double numeric = log_abs_det(numeric_jacobian(model, x), dim);
    worst = std::max(worst, std::fabs(std::expm1(analytic - numeric)));
    ++pairs;
  }
  const double t = seconds_since(start);
  report(2, worst < 1e-4 && t < 30.0,
         std::to_string(pairs) + " pairs, D in {2,3,4}: max relative error of |det| = " +
             fmt("%.3g", worst) + " (< 1e-4), " + fmt("%.2f", t) + " s (< 30 s)");
}

void gradient_suite() {
  const auto start = Clock::now();
  double worst = 0.0;
  std::size_t layers = 0;
  for (std::uint64_t trial = 0; trial < 5; ++trial) {
    auto model = random_model(FlowArchitecture{2, 1, {3}}, 3000 + trial, 0.6);
    layers = model.parameters().size() / 2;
    std::mt19937_64 rng(trial);
    Rng dirs(trial);
    auto x = normal_tensor({16, 2}, rng);
    auto z = normal_tensor({16, 2}, rng);
    const Tensor u = sample_directions(12, 2, dirs);
    const auto params = model.parameters();
    auto spec = [](Objective o) {
      LossSpec s;
      s.variant = o;
      s.alpha = 0.7;
      return s;
    };
    worst = std::max(worst, max_gradient_error([&] { return mle_loss(model, x); }, params));
    for (auto o : {Objective::sw, Objective::hybrid_data, Objective::hybrid_latent}) {
      worst = std::max(worst, max_gradient_error([&] { return sw_loss(model, x, z, spec(o), u); }, params));
    }
    for (auto o : {Objective::hybrid_data, Objective::hybrid_latent}) {
      worst = std::max(worst,
                       max_gradient_error([&] { return hybrid_loss(model, x, z, spec(o), u); }, params));
    }
  }
  const double t = seconds_since(start);
  report(3, worst < 1e-4 && layers == 4 && t < 60.0,
         std::to_string(layers) + " parameter layers, h = 1e-6: max relative error = " +
             fmt("%.3g", worst) + " (< 1e-4), " + fmt("%.2f", t) + " s (< 60 s)");
}

double brute_force_w1d(const std::vector<double>& a, const std::vector<double>& b, int p) {
  std::vector<std::size_t> perm(a.size());
  std::iota(perm.begin(), perm.end(), 0);
  double best = INFINITY;
  do {
    double cost = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) cost += std::pow(std::fabs(a[i] - b[perm[i]]), p);
    best = std::min(best, cost);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best / static_cast<double>(a.size());
}

double brute_force_auroc(const std::vector<double>& in, const std::vector<double>& out) {
  double score = 0.0;
  for (double a : in) {
    for (double b : out) score += a > b ? 1.0 : (a == b ? 0.5 : 0.0);
  }
  return score / (static_cast<double>(in.size()) * static_cast<double>(out.size()));
}

void ot_oracle() {
  const auto start = Clock::now();
  std::mt19937_64 rng(404);
  std::uniform_int_distribution<int> value(-20, 20), length(1, 6), score(0, 15), set_size(1, 60);
  int w_mismatch = 0, a_mismatch = 0;
  for (int k = 0; k < 1000; ++k) {
    const std::size_t n = length(rng);
    std::vector<double> a(n), b(n);
    for (double& v : a) v = value(rng);
    for (double& v : b) v = value(rng);
    const int p = 1 + k % 2;
    if (wasserstein_1d(Tensor::vector(a), Tensor::vector(b), p).item() != brute_force_w1d(a, b, p)) {
      ++w_mismatch;
    }
  }
  for (int k = 0; k < 1000; ++k) {
    std::vector<double> in(set_size(rng)), out(set_size(rng));
    for (double& v : in) v = score(rng);
    for (double& v : out) v = score(rng);
    if (eval_auroc(in, out) != brute_force_auroc(in, out)) ++a_mismatch;
  }
  const double t = seconds_since(start);
  report(4, w_mismatch == 0 && a_mismatch == 0 && t < 30.0,
         "wasserstein_1d mismatches " + std::to_string(w_mismatch) + "/1000, AUROC mismatches " +
             std::to_string(a_mismatch) + "/1000, " + fmt("%.2f", t) + " s (< 30 s)");
}

void sw_properties() {
  std::mt19937_64 rng(505);
  std::uniform_int_distribution<int> rows(1, 64), cols(1, 5);
  std::uniform_real_distribution<double> coin(-3.0, 3.0);
  int violations = 0;
  double translation = 0.0, scaling = 0.0;
  for (int k = 0; k < 100; ++k) {
    const std::size_t n = rows(rng), d = cols(rng);
    const int p = 1 + k % 2;
    Rng dirs(k);
    const Tensor u = sample_directions(32, d, dirs);
    auto x = normal_tensor({n, d}, rng);
    auto y = normal_tensor({n, d}, rng, 1.5);
    auto sw = [&](const Tensor& a, const Tensor& b) { return sliced_wasserstein(a, b, u, p).item(); };
    const double v = sw(x, y);
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    if (!(v >= 0.0)) ++violations;
    if (sw(x, gather_rows(x, perm)) != 0.0) ++violations;
    if (sw(y, x) != v) ++violations;
    std::vector<double> shift(d);
    for (double& s : shift) s = coin(rng);
    auto moved = [&](const Tensor& t) {
      std::vector<double> vals(t.values().begin(), t.values().end());
      for (std::size_t i = 0; i < vals.size(); ++i) vals[i] += shift[i % d];
      return Tensor(t.shape(), vals);
    };
    const double scale_ref = std::max(v, 1e-300);
    translation = std::max(translation, std::fabs(sw(moved(x), moved(y)) - v) / std::max(1.0, scale_ref));
    const double a = coin(rng);
    scaling = std::max(scaling, std::fabs(sw(x * a, y * a) - std::pow(std::fabs(a), p) * v) /
                                    std::max(1.0, std::pow(std::fabs(a), p) * v));
    const double two_k = std::ldexp(1.0, k % 7 - 3);
    if (sw(x * two_k, y * two_k) != std::pow(two_k, p) * v) ++violations;
  }
  report(5, violations == 0 && translation < 1e-12 && scaling < 1e-12,
         "100 instances: exact-property violations " + std::to_string(violations) +
             ", translation deviation " + fmt("%.2g", translation) + ", |a|^p scaling deviation " +
             fmt("%.2g", scaling) + " (rounding bound 1e-12)");
}

void normality_sanity() {
  Rng rng = make_stream(0, "normality-check");
  const Tensor z = base_normal(100000, 2, rng);
  const auto c = eval_cumulants(z);

  EvalProtocol p;
  p.seed = 8;
  p.eval_size = 1000;
  p.ood_size = 1000;
  p.ood = {DatasetKind::circles};
  const auto sets = make_evaluation_sets(p);
  const auto model = random_model(FlowArchitecture{}, 8, 0.3);
  const double self = eval_auroc(per_sample_log_likelihood(model, sets.held_out),
                                 per_sample_log_likelihood(model, sets.ood[0].second));
  report(8, c.k3_norm_sq() < 0.01 && c.k4_norm_sq() < 0.01 && self >= 0.45 && self <= 0.55,
         "|k3|^2 = " + fmt("%.3g", c.k3_norm_sq()) + ", |k4|^2 = " + fmt("%.3g", c.k4_norm_sq()) +
             " (< 0.01), self-AUROC = " + fmt("%.4f", self) + " (in [0.45, 0.55])");
}

// ---------------------------------------------------------------------------
// Training protocol through the CLI.

struct RunSpec {
  std::string objective;
  double alpha = 1.0;
  std::uint64_t seed = 1;
  std::string name() const {
    return objective == "mle" || objective == "sw"
               ? objective + "_s" + std::to_string(seed)
               : objective + "_a" + fmt("%g", alpha) + "_s" + std::to_string(seed);
  }
};

const std::vector<std::uint64_t> kSeeds = {1, 2, 3};
const std::vector<double> kAlphas = {0.1, 1.0, 10.0};

std::string train_args(const RunSpec& r) {
  std::string a = "train --quiet --dataset circles --objective " + r.objective + " --seed " +
                  std::to_string(r.seed);
  if (r.objective != "mle" && r.objective != "sw") a += " --alpha " + fmt("%g", r.alpha);
  return a;
}

double run_cli(const std::string& args, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  const std::string cmd = std::string(SWNF_CLI_PATH) + " " + args + " --out-dir " + out_dir.string() +
                          " > " + (out_dir / "stdout.txt").string() + " 2>&1";
  const auto start = Clock::now();
  const int status = std::system(cmd.c_str());
  const double t = seconds_since(start);
  if (status != 0) {
    std::fprintf(stderr, "command failed (%d): %s\n", status, cmd.c_str());
    return -1.0;
  }
  return t;
}

std::map<std::string, double> final_metrics(const fs::path& csv) {
  std::ifstream in(csv);
  std::string header, line, last;
  std::getline(in, header);
  while (std::getline(in, line)) {
    if (!line.empty()) last = line;
  }
  std::map<std::string, double> out;
  std::istringstream h(header), v(last);
  std::string key, val;
  while (std::getline(h, key, ',')) {
    if (!std::getline(v, val, ',')) val.clear();
    out[key] = val.empty() || key == "dataset" ? NAN : std::stod(val);
  }
  return out;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

// Times short runs at the default batch size and projects the full protocol.
void projected_protocol(const fs::path& work) {
  const fs::path dir = work / "calibration";
  const std::string small = " --steps 10 --eval-every 10";
  const std::string large = " --steps 40 --eval-every 40";
  std::map<std::string, double> per_step;
  double setup_and_two_evals = 0.0;
  bool ok = true;
  for (const std::string objective : {"mle", "sw", "hybrid-data"}) {
    RunSpec r{objective, 1.0, 1};
    const double t_small = run_cli(train_args(r) + small, dir / (objective + "_10"));
    const double t_large = run_cli(train_args(r) + large, dir / (objective + "_40"));
    ok &= t_small > 0 && t_large > 0;
    per_step[objective] = (t_large - t_small) / 30.0;
    setup_and_two_evals = std::max(setup_and_two_evals, t_small - 10.0 * per_step[objective]);
  }
  const double t_evals = run_cli(train_args(RunSpec{"mle", 1.0, 1}) + " --steps 10 --eval-every 1",
                                 dir / "mle_evals");
  ok &= t_evals > 0;
  const double t_mle_small = setup_and_two_evals + 10.0 * per_step["mle"];
  const double eval_cost = std::max(0.0, (t_evals - t_mle_small) / 9.0);
  const double setup = std::max(0.0, setup_and_two_evals - 2.0 * eval_cost);

  const double steps = 20000.0, evals = 21.0;
  auto run_cost = [&](const std::string& o) { return setup + steps * per_step[o] + evals * eval_cost; };
  const double total =
      kSeeds.size() * (run_cost("mle") + run_cost("sw") + kAlphas.size() * run_cost("hybrid-data"));
  const double minutes = total / 60.0;
  std::string detail = "projected protocol cost " + fmt("%.1f", minutes) +
                       " min (budget 30 min) from per-step times mle " +
                       fmt("%.3f", per_step["mle"]) + " s, sw " + fmt("%.3f", per_step["sw"]) +
                       " s, hybrid " + fmt("%.3f", per_step["hybrid-data"]) + " s, evaluation " +
                       fmt("%.2f", eval_cost) + " s; orderings not evaluated (run --full-protocol)";
  if (!ok) detail = "calibration runs failed; see " + dir.string();
  // The orderings are unknown without trained models, so neither criterion
  // can pass in this mode; the projection documents why.
  report(6, false, detail);
  report(7, false, "needs the models of criterion 6; " +
                       std::string(minutes > 30.0 ? "protocol exceeds the runtime budget"
                                                  : "run --full-protocol"));
}

void full_protocol(const fs::path& work, std::uint64_t protocol_steps) {
  const bool scaled = protocol_steps != 20000;
  const std::string extra = scaled ? " --steps " + std::to_string(protocol_steps) : "";
  const fs::path dir = work / "protocol";
  const auto start = Clock::now();
  std::map<std::string, std::map<std::string, double>> results;
  bool ok = true;
  auto train = [&](const RunSpec& r) {
    const fs::path out = dir / r.name();
    const double t = run_cli(train_args(r) + extra, out);
    ok &= t >= 0.0;
    results[r.name()] = final_metrics(out / "metrics.csv");
    std::fprintf(stderr, "trained %s in %.0f s\n", r.name().c_str(), t);
  };
  for (auto seed : kSeeds) {
    train({"mle", 1.0, seed});
    train({"sw", 1.0, seed});
    for (double a : kAlphas) train({"hybrid-data", a, seed});
  }
  const double minutes = seconds_since(start) / 60.0;

  auto med = [&](const std::string& objective, double alpha, const std::string& key) {
    std::vector<double> v;
    for (auto seed : kSeeds) v.push_back(results[RunSpec{objective, alpha, seed}.name()][key]);
    return median(v);
  };
  double best_alpha = kAlphas[0];
  for (double a : kAlphas) {
    if (med("hybrid-data", a, "nll") < med("hybrid-data", best_alpha, "nll")) best_alpha = a;
  }
  auto hy = [&](const std::string& key) { return med("hybrid-data", best_alpha, key); };
  auto mle = [&](const std::string& key) { return med("mle", 1.0, key); };
  auto sw = [&](const std::string& key) { return med("sw", 1.0, key); };

  const bool a_ok = hy("nll") <= mle("nll") + 0.05;
  const bool b_ok = hy("k3_norm_sq") < mle("k3_norm_sq") && hy("k4_norm_sq") < mle("k4_norm_sq");
  const bool c_ok = sw("sw") <= mle("sw");
  const std::string tag = scaled ? " [scaled to " + std::to_string(protocol_steps) + " steps]" : "";
  std::string d6 = "alpha=" + fmt("%g", best_alpha) + "; (a) NLL hybrid " + fmt("%.4f", hy("nll")) +
                   " vs mle " + fmt("%.4f", mle("nll")) + (a_ok ? " ok" : " violated") +
                   "; (b) |k3|^2 " + fmt("%.4g", hy("k3_norm_sq")) + " vs " +
                   fmt("%.4g", mle("k3_norm_sq")) + ", |k4|^2 " + fmt("%.4g", hy("k4_norm_sq")) +
                   " vs " + fmt("%.4g", mle("k4_norm_sq")) + (b_ok ? " ok" : " violated") +
                   "; (c) SW sw-only " + fmt("%.3g", sw("sw")) + " vs mle " + fmt("%.3g", mle("sw")) +
                   (c_ok ? " ok" : " violated") + "; " + fmt("%.1f", minutes) + " min (budget 30)" + tag;
  report(6, ok && a_ok && b_ok && c_ok && minutes <= 30.0, d6);

  const bool blobs_ok = hy("auroc_blobs") > mle("auroc_blobs");
  const bool moons_ok = hy("auroc_moons") > mle("auroc_moons") && sw("auroc_moons") > mle("auroc_moons");
  report(7, ok && blobs_ok && moons_ok,
         "blobs: hybrid " + fmt("%.3f", hy("auroc_blobs")) + " vs mle " + fmt("%.3f", mle("auroc_blobs")) +
             (blobs_ok ? " ok" : " violated") + "; moons: hybrid " + fmt("%.3f", hy("auroc_moons")) +
             ", sw " + fmt("%.3f", sw("auroc_moons")) + " vs mle " + fmt("%.3f", mle("auroc_moons")) +
             (moons_ok ? " ok" : " violated") + tag);
}

void determinism(const fs::path& work) {
  const RunSpec first{"mle", 1.0, kSeeds.front()};
  const fs::path reference = work / "protocol" / first.name();
  const fs::path a = fs::exists(reference / "metrics.csv") && fs::exists(reference / "manifest.txt") &&
                             slurp(reference / "manifest.txt").find("steps = 20000\n") != std::string::npos
                         ? reference
                         : work / "determinism" / "first";
  bool ok = true;
  if (a != reference) ok &= run_cli(train_args(first), a) >= 0.0;
  const fs::path b = work / "determinism" / "repeat";
  ok &= run_cli(train_args(first), b) >= 0.0;
  const std::string ma = slurp(a / "metrics.csv"), mb = slurp(b / "metrics.csv");
  report(9, ok && !ma.empty() && ma == mb,
         "'" + train_args(first) + "' twice: metrics CSV " + std::to_string(ma.size()) + " vs " +
             std::to_string(mb.size()) + " bytes, " + (ma == mb ? "identical" : "different"));
}

std::set<int> parse_selection(const std::string& text) {
  std::set<int> out;
  std::istringstream in(text);
  std::string part;
  while (std::getline(in, part, ',')) {
    const auto dash = part.find('-');
    const int lo = std::stoi(part.substr(0, dash));
    const int hi = dash == std::string::npos ? lo : std::stoi(part.substr(dash + 1));
    for (int i = lo; i <= hi; ++i) out.insert(i);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::string only = "1-9";
  bool full = false;
  std::uint64_t protocol_steps = 20000;
  std::string work = (fs::temp_directory_path() / "swnf_acceptance").string();
  app.add_option("--only", only, "criteria to run, e.g. 1-5,8");
  app.add_flag("--full-protocol", full, "train all protocol models for criteria 6 and 7");
  app.add_option("--protocol-steps", protocol_steps, "steps per protocol run (diagnostics only)")
      ->check(CLI::PositiveNumber);
  app.add_option("--work-dir", work, "directory for CLI runs");
  CLI11_PARSE(app, argc, argv);

  std::set<int> selected;
  try {
    selected = parse_selection(only);
  } catch (const std::exception&) {
    std::fprintf(stderr, "--only: cannot parse '%s'\n", only.c_str());
    return 2;
  }
  const fs::path work_dir(work);
  fs::create_directories(work_dir);

  const std::vector<std::pair<int, std::function<void()>>> unit_criteria = {
      {1, invertibility}, {2, log_det_oracle}, {3, gradient_suite},
      {4, ot_oracle},     {5, sw_properties},  {8, normality_sanity}};
  for (const auto& [id, fn] : unit_criteria) {
    if (id == 8 || !selected.count(id)) continue;
    fn();
  }
  if (selected.count(6) || selected.count(7)) {
    if (full) {
      full_protocol(work_dir, protocol_steps);
    } else {
      projected_protocol(work_dir);
    }
  }
  if (selected.count(8)) normality_sanity();
  if (selected.count(9)) determinism(work_dir);
  return failures == 0 ? 0 : 1;
}
