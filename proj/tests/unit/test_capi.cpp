#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "swnf/swnf.h"

namespace {

struct ModelPtr {
  swnf_model* p = nullptr;
  ~ModelPtr() { swnf_model_destroy(p); }
};

swnf_status make_default(ModelPtr& m, uint64_t seed = 0) {
  const size_t hidden[] = {64, 64};
  return swnf_model_create(2, 6, hidden, 2, seed, &m.p);
}

std::filesystem::path temp_file(const char* name) {
  return std::filesystem::temp_directory_path() / name;
}

TEST(CApi, NamesAndStatuses) {
  EXPECT_STREQ(swnf_status_name(SWNF_OK), "ok");
  EXPECT_STRNE(swnf_status_name(SWNF_BUFFER_TOO_SMALL), swnf_status_name(SWNF_OK));
  EXPECT_GT(std::strlen(swnf_version()), 0u);
  swnf_dataset_kind kind;
  ASSERT_EQ(swnf_parse_dataset("moons", &kind), SWNF_OK);
  EXPECT_EQ(kind, SWNF_MOONS);
  EXPECT_STREQ(swnf_dataset_name(SWNF_BLOBS), "blobs");
  EXPECT_EQ(swnf_parse_dataset("spirals", &kind), SWNF_INVALID_ARGUMENT);
  EXPECT_NE(std::string(swnf_last_error()).find("spirals"), std::string::npos);
  swnf_objective obj;
  ASSERT_EQ(swnf_parse_objective("hybrid", &obj), SWNF_OK);
  EXPECT_EQ(obj, SWNF_OBJECTIVE_HYBRID_DATA);
  EXPECT_STREQ(swnf_objective_name(SWNF_OBJECTIVE_SW), "sw");
  EXPECT_EQ(swnf_parse_objective(nullptr, &obj), SWNF_INVALID_ARGUMENT);
}

TEST(CApi, ModelBasics) {
  ModelPtr m;
  ASSERT_EQ(make_default(m), SWNF_OK);
  EXPECT_EQ(swnf_model_dim(m.p), 2u);
  EXPECT_EQ(swnf_model_num_layers(m.p), 6u);
  EXPECT_EQ(swnf_model_parameter_count(m.p), 52236u);

  const double x[] = {0.0, 0.0, 1.5, -2.0};
  double z[4], ld[2], back[4], lp[2];
  ASSERT_EQ(swnf_model_forward(m.p, x, 2, z, ld), SWNF_OK);
  ASSERT_EQ(swnf_model_forward(m.p, x, 2, z, nullptr), SWNF_OK);
  for (int i = 0; i < 4; ++i) EXPECT_EQ(z[i], x[i]);
  EXPECT_EQ(ld[0], 0.0);
  ASSERT_EQ(swnf_model_inverse(m.p, z, 2, back), SWNF_OK);
  for (int i = 0; i < 4; ++i) EXPECT_EQ(back[i], x[i]);
  ASSERT_EQ(swnf_model_log_prob(m.p, x, 2, lp), SWNF_OK);
  EXPECT_NEAR(lp[0], -std::log(2.0 * M_PI), 1e-15);
}

TEST(CApi, InvalidArguments) {
  swnf_model* out = nullptr;
  const size_t hidden[] = {8};
  EXPECT_EQ(swnf_model_create(1, 2, hidden, 1, 0, &out), SWNF_INVALID_ARGUMENT);
  EXPECT_EQ(out, nullptr);
  EXPECT_GT(std::strlen(swnf_last_error()), 0u);
  EXPECT_EQ(swnf_model_create(2, 2, hidden, 1, 0, nullptr), SWNF_INVALID_ARGUMENT);
  double buf[2];
  EXPECT_EQ(swnf_model_forward(nullptr, buf, 1, buf, nullptr), SWNF_INVALID_ARGUMENT);
  EXPECT_EQ(swnf_model_load("/nonexistent/model.swnf", &out), SWNF_IO_ERROR);
  ModelPtr m;
  ASSERT_EQ(make_default(m), SWNF_OK);
  EXPECT_EQ(swnf_model_sample(m.p, 0, 1, buf), SWNF_INVALID_ARGUMENT);
  swnf_model_destroy(nullptr);
}

TEST(CApi, SaveLoadRoundTrip) {
  ModelPtr m, loaded;
  const size_t hidden[] = {5};
  ASSERT_EQ(swnf_model_create(3, 4, hidden, 1, 9, &m.p), SWNF_OK);
  const auto path = temp_file("swnf_capi_model.swnf");
  ASSERT_EQ(swnf_model_save(m.p, path.c_str()), SWNF_OK);
  ASSERT_EQ(swnf_model_load(path.c_str(), &loaded.p), SWNF_OK);
  EXPECT_EQ(swnf_model_dim(loaded.p), 3u);
  EXPECT_EQ(swnf_model_parameter_count(loaded.p), swnf_model_parameter_count(m.p));
  std::FILE* f = std::fopen(path.c_str(), "r+b");
  ASSERT_NE(f, nullptr);
  std::fputc('Z', f);
  std::fclose(f);
  swnf_model* bad = nullptr;
  EXPECT_EQ(swnf_model_load(path.c_str(), &bad), SWNF_FORMAT_ERROR);
  std::filesystem::remove(path);
}

TEST(CApi, SampleOfIdentityEqualsBaseNormal) {
  ModelPtr m;
  ASSERT_EQ(make_default(m), SWNF_OK);
  std::vector<double> s(200), z(200);
  ASSERT_EQ(swnf_model_sample(m.p, 100, 5, s.data()), SWNF_OK);
  ASSERT_EQ(swnf_base_normal(100, 2, 5, z.data()), SWNF_OK);
  EXPECT_EQ(s, z);
}

TEST(CApi, DatasetGeneration) {
  auto spec = swnf_dataset_defaults(SWNF_CIRCLES);
  EXPECT_EQ(spec.noise_std, 0.08);
  spec.n_samples = 500;
  spec.seed = 4;
  std::vector<double> a(1000), b(1000);
  ASSERT_EQ(swnf_dataset_generate(&spec, a.data()), SWNF_OK);
  ASSERT_EQ(swnf_dataset_generate(&spec, b.data()), SWNF_OK);
  EXPECT_EQ(a, b);
  spec.n_samples = 0;
  EXPECT_EQ(swnf_dataset_generate(&spec, a.data()), SWNF_INVALID_ARGUMENT);
}

TEST(CApi, MetricsHelpers) {
  const double in[] = {0, 2}, out[] = {1, 3};
  double auroc = -1;
  ASSERT_EQ(swnf_auroc(in, 2, out, 2, &auroc), SWNF_OK);
  EXPECT_EQ(auroc, 0.25);
  EXPECT_EQ(swnf_auroc(in, 0, out, 2, &auroc), SWNF_INVALID_ARGUMENT);

  const double pts[] = {-1, 0, 1, 0};
  double k3, k4;
  ASSERT_EQ(swnf_cumulants(pts, 4, 1, &k3, &k4), SWNF_OK);
  EXPECT_EQ(k3, 0.0);
  EXPECT_DOUBLE_EQ(k4, 0.0625);
  EXPECT_EQ(swnf_cumulants(pts, 3, 1, &k3, &k4), SWNF_INVALID_ARGUMENT);

  const double x[] = {0, 0, 1, 1}, y[] = {1, 1, 0, 0};
  double sw = -1;
  ASSERT_EQ(swnf_sliced_wasserstein(x, y, 2, 2, 32, 2, 0, &sw), SWNF_OK);
  EXPECT_EQ(sw, 0.0);
  EXPECT_EQ(swnf_sliced_wasserstein(x, y, 2, 2, 32, 3, 0, &sw), SWNF_INVALID_ARGUMENT);
}

TEST(CApi, EvaluateAndTextOutputs) {
  ModelPtr m;
  ASSERT_EQ(make_default(m), SWNF_OK);
  auto cfg = swnf_eval_config_defaults(SWNF_CIRCLES);
  EXPECT_FALSE(cfg.ood[SWNF_CIRCLES]);
  EXPECT_TRUE(cfg.ood[SWNF_MOONS] && cfg.ood[SWNF_BLOBS]);
  cfg.train_size = 1000;
  cfg.eval_size = 300;
  cfg.ood_size = 200;
  cfg.sw_projections = 64;
  swnf_metrics r{};
  ASSERT_EQ(swnf_evaluate(m.p, &cfg, 7, &r), SWNF_OK);
  EXPECT_EQ(r.step, 7u);
  EXPECT_TRUE(std::isfinite(r.nll));
  EXPECT_FALSE(r.has_auroc[SWNF_CIRCLES]);
  EXPECT_TRUE(r.has_auroc[SWNF_BLOBS]);

  std::vector<double> sin(300), sout(200);
  double auroc = -1;
  ASSERT_EQ(swnf_ood_scores(m.p, &cfg, SWNF_BLOBS, sin.data(), sout.data(), &auroc), SWNF_OK);
  EXPECT_EQ(auroc, r.auroc[SWNF_BLOBS]);
  double again = -1;
  ASSERT_EQ(swnf_auroc(sin.data(), sin.size(), sout.data(), sout.size(), &again), SWNF_OK);
  EXPECT_EQ(again, auroc);

  size_t needed = 0;
  char tiny[4];
  EXPECT_EQ(swnf_metrics_csv_row(&r, tiny, sizeof tiny, &needed), SWNF_BUFFER_TOO_SMALL);
  ASSERT_GT(needed, sizeof tiny);
  std::string row(needed, '\0');
  ASSERT_EQ(swnf_metrics_csv_row(&r, row.data(), row.size(), nullptr), SWNF_OK);
  EXPECT_EQ(row.rfind("7,0,circles,", 0), 0u);
  char header[512];
  ASSERT_EQ(swnf_metrics_csv_header(header, sizeof header, nullptr), SWNF_OK);
  EXPECT_EQ(std::string(header).rfind("step,seed,dataset,nll,sw", 0), 0u);
  char text[1024];
  ASSERT_EQ(swnf_metrics_text(&r, text, sizeof text, nullptr), SWNF_OK);
  EXPECT_NE(std::string(text).find("nll"), std::string::npos);

  cfg.sw_p = 5;
  EXPECT_EQ(swnf_evaluate(m.p, &cfg, 0, &r), SWNF_INVALID_ARGUMENT);
}

TEST(CApi, HistogramCsv) {
  const double a[] = {0, 1, 2}, b[] = {2};
  const double* sets[] = {a, b};
  const size_t sizes[] = {3, 1};
  const char* names[] = {"in", "out"};
  const auto path = temp_file("swnf_capi_hist.csv");
  ASSERT_EQ(swnf_write_histogram_csv(path.c_str(), sets, sizes, names, 2, 2), SWNF_OK);
  std::FILE* f = std::fopen(path.c_str(), "r");
  char line[128];
  ASSERT_TRUE(std::fgets(line, sizeof line, f));
  EXPECT_STREQ(line, "bin_lo,bin_hi,in,out\n");
  std::fclose(f);
  std::filesystem::remove(path);
}

struct LogSink {
  int lines = 0;
};

TEST(CApi, TrainSmallRun) {
  auto cfg = swnf_train_config_defaults(SWNF_CIRCLES);
  EXPECT_EQ(cfg.objective, SWNF_OBJECTIVE_HYBRID_DATA);
  cfg.steps = 5;
  cfg.batch_size = 32;
  cfg.eval_every = 5;
  cfg.n_layers = 2;
  cfg.n_hidden = 1;
  cfg.hidden[0] = 8;
  cfg.sw_projections = 8;
  cfg.eval.train_size = 300;
  cfg.eval.eval_size = 100;
  cfg.eval.ood_size = 50;
  cfg.eval.sw_projections = 16;
  LogSink sink;
  cfg.on_log = [](const char*, void* user) { static_cast<LogSink*>(user)->lines += 1; };
  cfg.log_user = &sink;
  ModelPtr m;
  swnf_metrics final_metrics{};
  ASSERT_EQ(swnf_train(&cfg, &m.p, &final_metrics, nullptr), SWNF_OK) << swnf_last_error();
  EXPECT_EQ(final_metrics.step, 5u);
  EXPECT_EQ(swnf_model_num_layers(m.p), 2u);
  EXPECT_GT(sink.lines, 0);

  cfg.alpha = -1;
  EXPECT_EQ(swnf_train(&cfg, nullptr, nullptr, nullptr), SWNF_INVALID_ARGUMENT);
  cfg.alpha = 1;
  cfg.learning_rate = 1e300;
  cfg.steps = 50;
  uint64_t failed = 0;
  EXPECT_EQ(swnf_train(&cfg, nullptr, nullptr, &failed), SWNF_TRAINING_ABORTED);
  EXPECT_GE(failed, 1u);
}

}  // namespace
