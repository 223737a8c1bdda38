#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "svydr/design.hpp"
#include "svydr/harness.hpp"
#include "svydr/rng.hpp"
#include "svydr/selection.hpp"

using namespace svydr;

namespace {

popgen::ScenarioSpec small_scenario() {
  auto spec = popgen::scenario_preset(1);
  spec.clusters_total = 60;
  spec.clusters_sampled = 12;
  spec.houses_per_cluster = 10;
  spec.folds = 5;
  return spec;
}

std::string slurp(const std::string& path) {
  std::ifstream is(path);
  REQUIRE(is);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("summary csv round trip and formatting") {
  std::vector<harness::SummaryRow> rows(2);
  rows[0].estimator = "DR1";
  rows[0].bias = 0.00151;
  rows[0].emp_se = 0.0441;
  rows[0].mean_se = 0.0448;
  rows[0].coverage = 94.0;
  rows[1].estimator = "naive";
  rows[1].bias = -0.2878;
  rows[1].emp_se = 0.035;
  rows[1].has_se = false;

  std::ostringstream os;
  harness::write_summary_csv(rows, os);
  const std::string text = os.str();
  CHECK(text == "estimator,bias,empSE,SEhat,cover\n"
                "DR1,0.002,0.044,0.045,94\n"
                "naive,-0.288,0.035,,\n");

  std::istringstream is(text);
  const auto parsed = harness::read_summary_csv(is);
  REQUIRE(parsed.size() == 2);
  CHECK(parsed[0].estimator == "DR1");
  CHECK(parsed[0].bias == doctest::Approx(0.002));
  CHECK(parsed[0].coverage == doctest::Approx(94.0));
  CHECK_FALSE(parsed[1].has_se);
}

TEST_CASE("single-row report is a two-line csv") {
  std::vector<harness::SummaryRow> rows(1);
  rows[0].estimator = "HT";
  rows[0].bias = 0.0;
  rows[0].emp_se = 0.05;
  rows[0].mean_se = 0.05;
  rows[0].coverage = 95.0;
  std::ostringstream os;
  harness::write_summary_csv(rows, os);
  int lines = 0;
  std::istringstream is(os.str());
  std::string line;
  while (std::getline(is, line)) ++lines;
  CHECK(lines == 2);
}

TEST_CASE("estimator id validation") {
  CHECK(harness::is_known_estimator("TMLE2.gbm5"));
  CHECK_FALSE(harness::is_known_estimator("DR3"));
  harness::RunConfig cfg;
  cfg.scenario = small_scenario();
  cfg.replications = 1;
  cfg.estimators = {"DR3"};
  CHECK_THROWS(harness::run_scenario(cfg));
}

TEST_CASE("scenario runs are deterministic and thread-count invariant") {
  harness::RunConfig cfg;
  cfg.scenario = small_scenario();
  cfg.replications = 3;
  cfg.seed = 2024;
  cfg.estimators = {"HT", "Haj", "naive", "DR1", "DR2", "TMLE1"};
  cfg.threads = 1;
  cfg.summary_path = "harness_run1.csv";
  const auto r1 = harness::run_scenario(cfg);
  cfg.summary_path = "harness_run2.csv";
  cfg.threads = 2;
  const auto r2 = harness::run_scenario(cfg);

  CHECK(slurp("harness_run1.csv") == slurp("harness_run2.csv"));
  CHECK(slurp("harness_run1.csv.reps.csv") == slurp("harness_run2.csv.reps.csv"));
  REQUIRE(r1.records.size() == r2.records.size());
  for (std::size_t i = 0; i < r1.records.size(); ++i) {
    CHECK(r1.records[i].estimator == r2.records[i].estimator);
    CHECK(r1.records[i].point == r2.records[i].point);
  }
  std::remove("harness_run1.csv");
  std::remove("harness_run1.csv.reps.csv");
  std::remove("harness_run2.csv");
  std::remove("harness_run2.csv.reps.csv");
}

TEST_CASE("summary recomputed from the per-replication csv matches exactly") {
  harness::RunConfig cfg;
  cfg.scenario = small_scenario();
  cfg.replications = 4;
  cfg.seed = 77;
  cfg.estimators = {"HT", "DR1", "DR2", "naive"};
  const auto result = harness::run_scenario(cfg);

  std::ostringstream records_csv;
  harness::write_records_csv(result.records, records_csv);
  std::istringstream is(records_csv.str());
  const auto reparsed = harness::read_records_csv(is);
  const auto rows2 = harness::summarize(reparsed, cfg.estimators);

  std::ostringstream s1, s2;
  harness::write_summary_csv(result.rows, s1);
  harness::write_summary_csv(rows2, s2);
  CHECK(s1.str() == s2.str());

  // bit-exact, not just formatted-equal
  REQUIRE(rows2.size() == result.rows.size());
  for (std::size_t i = 0; i < rows2.size(); ++i) {
    CHECK(rows2[i].bias == result.rows[i].bias);
    CHECK(rows2[i].emp_se == result.rows[i].emp_se);
    CHECK(rows2[i].mean_se == result.rows[i].mean_se);
  }
}

TEST_CASE("summaries are invariant to record permutation after rep-order sort") {
  harness::RunConfig cfg;
  cfg.scenario = small_scenario();
  cfg.replications = 4;
  cfg.seed = 99;
  cfg.estimators = {"DR1", "DR2"};
  const auto result = harness::run_scenario(cfg);

  auto shuffled = result.records;
  rng::RandomStream s(1);
  for (std::size_t i = shuffled.size(); i > 1; --i)
    std::swap(shuffled[i - 1], shuffled[s.below(i)]);
  std::stable_sort(shuffled.begin(), shuffled.end(),
                   [](const auto& a, const auto& b) { return a.rep < b.rep; });
  const auto rows2 = harness::summarize(shuffled, cfg.estimators);
  REQUIRE(rows2.size() == result.rows.size());
  for (std::size_t i = 0; i < rows2.size(); ++i) {
    CHECK(rows2[i].bias == result.rows[i].bias);
    CHECK(rows2[i].emp_se == result.rows[i].emp_se);
  }
}

TEST_CASE("gbm estimator rows run end to end") {
  harness::RunConfig cfg;
  cfg.scenario = small_scenario();
  cfg.replications = 2;
  cfg.seed = 5;
  cfg.estimators = {"DR1.gbm5", "TMLE1.gbm5", "DR1.gbm1"};
  cfg.plan_dump_path = "harness_plan.csv";
  const auto result = harness::run_scenario(cfg);
  CHECK(result.rows.size() == 3);
  for (const auto& rec : result.records) {
    CHECK(std::isfinite(rec.point));
    REQUIRE(rec.se.has_value());
    CHECK(*rec.se > 0.0);
  }
  const std::string plan = slurp("harness_plan.csv");
  CHECK(plan.rfind("cluster_id,fold,group", 0) == 0);
  std::remove("harness_plan.csv");
}

TEST_CASE("impossible designs abort through the failure policy") {
  harness::RunConfig cfg;
  cfg.scenario = small_scenario();
  cfg.scenario.houses_per_cluster = 100000;  // no cluster has this many households
  cfg.replications = 2;
  cfg.estimators = {"HT"};
  CHECK_THROWS(harness::run_scenario(cfg));
}

TEST_CASE("rate probe with the oracle outcome hook reports zero m-error") {
  harness::ProbeConfig cfg;
  cfg.scenario = small_scenario();
  cfg.m_grid = {12, 24};
  cfg.replications = 2;
  cfg.oracle_outcome = true;
  const auto result = harness::nuisance_rate_probe(cfg);
  REQUIRE(result.points.size() == 2);
  for (const auto& p : result.points) {
    CHECK(p.mean_err == 0.0);
    CHECK(p.sel_err > 0.0);
    CHECK(p.clusters > p.m);
  }
  std::ostringstream os;
  harness::write_probe_csv(result, os);
  CHECK(os.str().find("M,J,") == 0);
}

TEST_CASE("external estimation matches the in-process pipeline") {
  // build a draw, dump it as external CSVs, and compare DR1
  auto spec = small_scenario();
  harness::RunConfig cfg;
  cfg.scenario = spec;
  cfg.replications = 1;
  cfg.seed = 31;
  cfg.estimators = {"DR1", "DR2", "DR2clw", "TMLE1", "TMLE2"};
  const auto internal = harness::run_scenario(cfg);

  // regenerate the same draw to dump the files
  const auto pop = popgen::generate_population(spec, cfg.seed);
  const std::uint64_t rep_seed = rng::derive_seed(cfg.seed, rng::kRepBase + 0);
  const auto outcomes = popgen::draw_outcomes(pop, rep_seed);
  rng::RandomStream a_stream(rng::derive_seed(rep_seed, rng::kTagSampleA));
  rng::RandomStream b_stream(rng::derive_seed(rep_seed, rng::kTagSampleB));
  std::vector<double> h(pop.cluster_count);
  for (std::uint32_t j = 0; j < pop.cluster_count; ++j) h[j] = pop.clusters[j].size_measure;
  const auto pi_c = design::cluster_inclusion_probs(h, spec.clusters_sampled);
  design::ClusterDesign d;
  d.kind = popgen::DesignKind::sampford;
  d.draw_count = spec.clusters_sampled;
  d.target_pi = pi_c;
  const auto rc = design::draw_clusters(d, a_stream);
  const auto a = design::draw_sample_a(pop, rc, pi_c, spec.houses_per_cluster, a_stream);
  rng::RandomStream b2(rng::derive_seed(rep_seed, rng::kTagSampleB));
  const auto rb = selection::draw_sample_b(pop, b2);

  {
    std::ofstream fa("external_a.csv"), fb("external_b.csv");
    fa << "cluster_id,piA,x1,x2,x3,x4\n";
    fb << "cluster_id,x1,x2,x3,x4,y\n";
    char buf[360];
    for (std::size_t i = 0; i < pop.size; ++i) {
      if (a.in_sample[i]) {
        std::snprintf(buf, sizeof(buf), "%u,%.17g,%.17g,%.17g,%g,%g\n", pop.cluster_of[i],
                      a.pi_a[i], pop.x1[i], pop.x2[i], pop.x3[i], pop.x4[i]);
        fa << buf;
      }
      if (rb[i]) {
        std::snprintf(buf, sizeof(buf), "%u,%.17g,%.17g,%g,%g,%.17g\n", pop.cluster_of[i],
                      pop.x1[i], pop.x2[i], pop.x3[i], pop.x4[i], outcomes.y[i]);
        fb << buf;
      }
    }
  }
  harness::ExternalConfig ecfg;
  ecfg.population_size = pop.size;
  const auto external = harness::estimate_external("external_a.csv", "external_b.csv", ecfg);
  std::remove("external_a.csv");
  std::remove("external_b.csv");

  auto find_internal = [&](const std::string& id) {
    for (const auto& r : internal.records)
      if (r.estimator == id) return r.point;
    FAIL("missing internal estimator");
    return 0.0;
  };
  for (const auto& r : external) {
    CHECK(std::isfinite(r.point));
    CHECK(r.point == doctest::Approx(find_internal(r.name)).epsilon(1e-9));
  }
}

TEST_CASE("scenario config files parse") {
  {
    std::ofstream os("scenario_test.cfg");
    os << "# custom scenario\n"
          "scenario = custom\n"
          "clusters = 80\n"
          "sampled_clusters = 16\n"
          "houses = 4\n"
          "k = 3\n"
          "delta = 0.02\n"
          "groups = 2\n"
          "m0_intercept = 1.5\n"
          "m0_linear = 1,0,2,0\n"
          "m0_quad = 1:3:2.0;2:2:1.0\n"
          "sel_intercept = -4.0\n"
          "sel_linear = 0.5,1,0.5,1\n"
          "design = srswor\n";
  }
  const auto kv = harness::parse_key_value_file("scenario_test.cfg");
  const auto spec = harness::scenario_from_config(kv);
  std::remove("scenario_test.cfg");
  CHECK(spec.clusters_total == 80);
  CHECK(spec.clusters_sampled == 16);
  CHECK(spec.folds == 3);
  CHECK(spec.delta == doctest::Approx(0.02));
  CHECK(spec.outcome_mean.intercept == doctest::Approx(1.5));
  REQUIRE(spec.outcome_mean.quad.size() == 2);
  CHECK(spec.outcome_mean.quad[0].a == 0);
  CHECK(spec.outcome_mean.quad[0].b == 2);
  CHECK(spec.outcome_mean.quad[0].coef == doctest::Approx(2.0));
  CHECK(spec.cluster_design == popgen::DesignKind::srswor);

  {
    std::ofstream os("scenario_bad.cfg");
    os << "clusters 80\n";
  }
  CHECK_THROWS(harness::parse_key_value_file("scenario_bad.cfg"));
  std::remove("scenario_bad.cfg");
}
