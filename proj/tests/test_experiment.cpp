#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

#include "glcert/glcert.hpp"

using namespace glcert;
namespace fs = std::filesystem;

namespace {

ExperimentConfig small_config() {
  ExperimentConfig cfg;
  cfg.data.n_labeled = 150;
  cfg.data.n_test = 150;
  cfg.data.n_validation = 150;
  cfg.seeds = {1, 2};
  cfg.surrogate.train.epochs = 40;
  cfg.surrogate.bb_rounds = 1;
  cfg.surrogate.bb_seed_points = 40;
  cfg.attacks = {AttackKind::direct, AttackKind::ksa};
  cfg.r_grid = {0.0, 0.1};
  cfg.variants = {"GL", "ATGL", "RobustGL", "kNN", "RobustNN"};
  cfg.a_grid = {0.05, 0.1};
  return cfg;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace

TEST(Table, CsvRoundTrip) {
  Table t;
  t.columns = {"name", "value", "empty"};
  t.add_row({"a", format_double(0.1), ""});
  t.add_row({"b", format_double(1.0 / 3.0), "x"});
  std::stringstream ss;
  write_table_csv(ss, t);
  const auto back = read_table_csv(ss);
  EXPECT_EQ(back, t);
  EXPECT_EQ(back.number(1, "value"), 1.0 / 3.0);
  EXPECT_THROW(t.add_row({"short"}), InvalidArgument);
  EXPECT_THROW(t.column("missing"), InvalidArgument);
}

TEST(Table, RaggedRowRejected) {
  std::stringstream ss("a,b\n1,2,3\n");
  EXPECT_THROW(read_table_csv(ss), LoadError);
}

TEST(FormatDouble, ShortestRoundTrip) {
  EXPECT_EQ(format_double(0.1), "0.1");
  EXPECT_EQ(format_double(2.0), "2");
  for (double v : {1.0 / 7.0, 1e-300, 123456.789, -2.5e17})
    EXPECT_EQ(std::strtod(format_double(v).c_str(), nullptr), v);
}

TEST(Fnv1a, KnownVectors) {
  EXPECT_EQ(fnv1a_hex(""), "cbf29ce484222325");
  EXPECT_EQ(fnv1a_hex("a"), "af63dc4c8601ec8c");
}

TEST(SvgPlot, WellFormed) {
  std::ostringstream os;
  write_svg_plot(os, "t<1>", "x", "y", {{"s&1", {0, 1, 2}, {0.5, 0.7, 0.6}}, {"empty", {}, {}}});
  const auto s = os.str();
  EXPECT_EQ(s.rfind("<svg", 0), 0u);
  EXPECT_NE(s.find("</svg>"), std::string::npos);
  EXPECT_NE(s.find("t&lt;1&gt;"), std::string::npos);
  EXPECT_NE(s.find("s&amp;1"), std::string::npos);
}

TEST(Config, CanonicalSettingsRoundTrip) {
  auto cfg = small_config();
  cfg.direction_sign = DirectionSign::toward_opponent;
  cfg.graph.weights = KnnWeights::uniform_nk;
  cfg.calibration.band_floor = 0.004;
  const auto text = canonical_settings(cfg);
  ExperimentConfig back;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    apply_setting(back, line.substr(0, eq), line.substr(eq + 1));
  }
  EXPECT_EQ(canonical_settings(back), text);
  EXPECT_EQ(config_hash(back), config_hash(cfg));
  back.seeds.push_back(3);
  EXPECT_NE(config_hash(back), config_hash(cfg));
}

TEST(Config, BadSettingsRejected) {
  ExperimentConfig cfg;
  EXPECT_THROW(apply_setting(cfg, "graph.nope", "1"), ConfigError);
  EXPECT_THROW(apply_setting(cfg, "graph.k", "ten"), ConfigError);
  EXPECT_THROW(apply_setting(cfg, "attack.direction_sign", "sideways"), ConfigError);
  EXPECT_THROW(apply_setting(cfg, "attack.kinds", "direct,laser"), ConfigError);
  EXPECT_THROW(apply_setting(cfg, "run.mode", "dance"), ConfigError);
}

TEST(Config, ValidateCatchesBadValues) {
  auto cfg = small_config();
  EXPECT_NO_THROW(validate_config(cfg));
  auto c1 = cfg;
  c1.seeds.clear();
  EXPECT_THROW(validate_config(c1), ConfigError);
  auto c2 = cfg;
  c2.r_grid = {0.1, -0.1};
  EXPECT_THROW(validate_config(c2), ConfigError);
  auto c3 = cfg;
  c3.variants = {"GL", "bogus"};
  EXPECT_THROW(validate_config(c3), ConfigError);
  auto c4 = cfg;
  c4.data.name = "abalone";
  c4.data.abalone_path = "/nonexistent/abalone.data";
  EXPECT_THROW(validate_config(c4), ConfigError);
  auto c5 = cfg;
  c5.attacks.clear();
  EXPECT_THROW(validate_config(c5), ConfigError);
}

TEST(Experiment, ModeNames) {
  for (auto m : {Mode::certify, Mode::robust_curve, Mode::label_sweep, Mode::timing})
    EXPECT_EQ(mode_from_string(to_string(m)), m);
  EXPECT_EQ(mode_from_string("curves"), Mode::robust_curve);
  EXPECT_THROW(mode_from_string("x"), ConfigError);
}

TEST(Experiment, SplitSizes) {
  const auto cfg = small_config();
  const auto s = load_split(cfg.data, 150, 7);
  EXPECT_EQ(s.train.size(), 150u);
  EXPECT_EQ(s.train.labeled_count(), 150u);
  EXPECT_EQ(s.validation.size(), 150u);
  EXPECT_EQ(s.test.size(), 150u);
  EXPECT_EQ(s.test.labeled_count(), 0u);
}

TEST(Experiment, CurvesDeterministicAndWritten) {
  const auto cfg = small_config();
  const auto a = run_robust_curves(cfg);
  const auto b = run_robust_curves(cfg);
  ASSERT_TRUE(a.ok()) << a.invariant_violations << " violations, " << a.errors.size() << " errors";
  EXPECT_EQ(records_table(a), records_table(b));
  EXPECT_EQ(a.summary, b.summary);
  // 2 seeds x 2 attacks x 2 budgets x 5 variants.
  EXPECT_EQ(a.runs.size(), 40u);
  for (const auto& r : a.runs) {
    EXPECT_GE(r.accuracy, 0.0);
    EXPECT_LE(r.accuracy, 1.0);
    if (r.r == 0.0 && r.classifier == "GL") {
      EXPECT_EQ(r.u_deviation, 0.0);
    }
  }
  EXPECT_EQ(a.plots.size(), 2u);

  const fs::path d1 = fs::temp_directory_path() / "glcert_curves_1", d2 = fs::temp_directory_path() / "glcert_curves_2";
  fs::remove_all(d1);
  fs::remove_all(d2);
  write_outputs(a, cfg, d1.string());
  write_outputs(b, cfg, d2.string());
  for (const char* f : {"config.txt", "robust_curve_records.csv", "robust_curve_summary.csv", "status.txt"}) {
    ASSERT_TRUE(fs::exists(d1 / f)) << f;
    EXPECT_EQ(slurp(d1 / f), slurp(d2 / f)) << f;
  }
  EXPECT_TRUE(fs::exists(d1 / "robust_curve_instrumentation.csv"));
  EXPECT_NE(slurp(d1 / "status.txt").find("ok=1"), std::string::npos);
  fs::remove_all(d1);
  fs::remove_all(d2);
}

TEST(Experiment, LabelSweepSingleSizeIsUndefined) {
  auto cfg = small_config();
  cfg.seeds = {1};
  cfg.attacks = {AttackKind::direct};
  cfg.variants = {"GL"};
  cfg.r_grid = {0.1};
  cfg.label_sizes = {100};
  const auto one = run_label_sweep(cfg);
  ASSERT_EQ(one.summary.rows.size(), 1u);
  EXPECT_EQ(one.summary.rows[0][one.summary.column("spearman")], "undefined");

  cfg.label_sizes = {60, 100, 150};
  const auto three = run_label_sweep(cfg);
  const double rho = three.summary.number(0, "spearman");
  EXPECT_GE(rho, -1.0);
  EXPECT_LE(rho, 1.0);
}

TEST(Experiment, TimingRowsPerK) {
  auto cfg = small_config();
  cfg.timing_k = {5, 10};
  cfg.timing_repeats = 1;
  const auto res = run_timing(cfg);
  ASSERT_EQ(res.summary.rows.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_GT(res.summary.number(i, "gl_seconds"), 0.0);
    EXPECT_GT(res.summary.number(i, "gl_bytes_estimate"), 0.0);
  }
  EXPECT_LT(res.summary.number(0, "gl_bytes_estimate"), res.summary.number(1, "gl_bytes_estimate"));
}

TEST(Experiment, CertifySmallRun) {
  auto cfg = small_config();
  cfg.seeds = {1};
  cfg.label_sizes = {150};
  cfg.budgets_per_run = 3;
  cfg.calibration.enabled = false;
  const auto res = run_certify_experiment(cfg);
  ASSERT_EQ(res.summary.rows.size(), 1u);
  EXPECT_GT(res.summary.number(0, "r"), 0.0);
  EXPECT_GT(res.summary.number(0, "no_attack_mean"), 0.8);
  EXPECT_EQ(res.invariant_violations, 0u);
}
