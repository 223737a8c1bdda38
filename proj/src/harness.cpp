#include "svydr/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "svydr/design.hpp"
#include "svydr/kernels.hpp"
#include "svydr/rng.hpp"
#include "svydr/selection.hpp"

namespace svydr::harness {

namespace {

const std::vector<std::string> kEstimatorIds = {
    "HT",        "Haj",      "naive",      "DR1",        "DR2clw",   "DR2",
    "TMLE1",     "TMLE2",    "DR1.gbm5",   "DR2.gbm5",   "TMLE1.gbm5",
    "TMLE2.gbm5", "DR1.gbm1", "DR2.gbm1",  "TMLE1.gbm1", "TMLE2.gbm1"};

enum class Bundle { none, parametric, gbm5, gbm1 };

struct EstimatorEntry {
  Bundle bundle;
  std::string base;  // DR1, DR2, DR2clw, TMLE1, TMLE2 for model-based rows
};

EstimatorEntry classify(const std::string& id) {
  if (id == "HT" || id == "Haj" || id == "naive") return {Bundle::none, id};
  const auto dot = id.find('.');
  if (dot == std::string::npos) return {Bundle::parametric, id};
  const std::string suffix = id.substr(dot + 1);
  if (suffix == "gbm5") return {Bundle::gbm5, id.substr(0, dot)};
  if (suffix == "gbm1") return {Bundle::gbm1, id.substr(0, dot)};
  throw std::invalid_argument("unknown estimator id: " + id);
}

int thread_count(int requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

double sample_sd(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double mean = kernels::sum(v.data(), v.size()) / v.size();
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / (v.size() - 1));
}

}  // namespace

const std::vector<std::string>& all_estimator_ids() { return kEstimatorIds; }

bool is_known_estimator(const std::string& id) {
  return std::find(kEstimatorIds.begin(), kEstimatorIds.end(), id) != kEstimatorIds.end();
}

namespace {

struct RepContext {
  const popgen::FinitePopulation* pop;
  const std::vector<double>* pi_c;
  const crossfit::ProbabilityGroups* groups;
  const RunConfig* cfg;
  std::vector<std::string> wanted;  // estimator ids in output order
  bool need_parametric = false, need_gbm5 = false, need_gbm1 = false;
};

learners::LearnerSpec parametric_outcome_spec(const RunConfig& cfg) {
  learners::LearnerSpec s;
  s.family = learners::LearnerFamily::parametric;
  s.target = learners::LearnerTarget::outcome;
  s.feature_map = cfg.parametric_outcome_features.value_or(learners::FeatureMap::main_effects);
  return s;
}

learners::LearnerSpec parametric_selection_spec(const RunConfig& cfg) {
  learners::LearnerSpec s;
  s.family = learners::LearnerFamily::parametric;
  s.target = learners::LearnerTarget::selection;
  s.feature_map = cfg.parametric_selection_features.value_or(learners::FeatureMap::main_effects);
  s.pseudo_likelihood = learners::PseudoLikelihood::full;
  return s;
}

learners::LearnerSpec boosted_spec(learners::LearnerTarget target) {
  learners::LearnerSpec s;
  s.family = learners::LearnerFamily::boosted_trees;
  s.target = target;
  return s;
}

void append_model_rows(const RepContext& ctx, const design::SampleDraw& draw,
                       const crossfit::FoldPlan& plan, const learners::NuisanceFit& fit,
                       const std::string& suffix, std::map<std::string, RepRecord>& out,
                       int rep, double ybar) {
  using namespace estimators;
  const UnitTable table = build_unit_table(*ctx.pop, draw, plan, fit);
  auto put = [&](EstimateResult r) {
    const std::string id = suffix.empty() ? r.name : r.name + suffix;
    RepRecord rec;
    rec.rep = rep;
    rec.estimator = id;
    rec.point = r.point;
    rec.se = r.se;
    rec.ybar = ybar;
    if (r.se) rec.covered = (r.ci_lo <= ybar && ybar <= r.ci_hi);
    out[id] = std::move(rec);
  };
  put(dr1(table));
  put(dr2(table));
  if (suffix.empty()) put(dr2clw(table));
  const Fluctuation f = tmle_fluctuate(table, plan.fold_count, FluctuationKind::linear);
  put(tmle1(table, f));
  put(tmle2(table, f));
}

std::vector<RepRecord> run_replication(const RepContext& ctx, int rep) {
  const RunConfig& cfg = *ctx.cfg;
  const popgen::FinitePopulation& pop = *ctx.pop;
  const std::uint64_t rep_seed = rng::derive_seed(cfg.seed, rng::kRepBase + rep);

  const popgen::OutcomeDraw outcomes = popgen::draw_outcomes(pop, rep_seed);

  design::ClusterDesign cluster_design;
  cluster_design.kind = pop.spec.cluster_design;
  cluster_design.draw_count = pop.spec.clusters_sampled;
  cluster_design.target_pi = *ctx.pi_c;

  rng::RandomStream a_stream(rng::derive_seed(rep_seed, rng::kTagSampleA));
  rng::RandomStream b_stream(rng::derive_seed(rep_seed, rng::kTagSampleB));

  design::SampleDraw draw;
  draw.y = outcomes.y;
  draw.ybar = outcomes.ybar;
  draw.pi_c = *ctx.pi_c;
  draw.rc = design::draw_clusters(cluster_design, a_stream);
  design::SampleA a =
      design::draw_sample_a(pop, draw.rc, draw.pi_c, pop.spec.houses_per_cluster, a_stream);
  draw.ra = std::move(a.in_sample);
  draw.pi_a = std::move(a.pi_a);
  draw.rb = selection::draw_sample_b(pop, b_stream);

  std::map<std::string, RepRecord> computed;
  auto put_plain = [&](estimators::EstimateResult r) {
    RepRecord rec;
    rec.rep = rep;
    rec.estimator = r.name;
    rec.point = r.point;
    rec.se = r.se;
    rec.ybar = outcomes.ybar;
    if (r.se) rec.covered = (r.ci_lo <= outcomes.ybar && outcomes.ybar <= r.ci_hi);
    computed[r.name] = std::move(rec);
  };
  put_plain(estimators::ht(pop, draw));
  put_plain(estimators::hajek(pop, draw));
  put_plain(estimators::naive_mean(draw));

  crossfit::FoldPlan single_plan = crossfit::single_fold_plan(*ctx.groups, draw.rc);
  crossfit::FoldPlan kfold_plan;
  const bool need_kfold = ctx.need_gbm5 || (ctx.need_parametric && cfg.crossfit_parametric);
  if (need_kfold) {
    rng::RandomStream fold_stream(rng::derive_seed(rep_seed, rng::kTagFolds));
    kfold_plan =
        crossfit::build_plan(*ctx.groups, draw.rc, pop.spec.folds, pop.spec.delta, fold_stream);
    if (rep == 0 && !cfg.plan_dump_path.empty()) {
      std::ofstream os(cfg.plan_dump_path);
      if (!os) throw std::runtime_error("cannot write plan dump: " + cfg.plan_dump_path);
      crossfit::write_plan_csv(kfold_plan, *ctx.groups, os);
    }
  }

  const std::uint64_t learner_seed = rng::derive_seed(rep_seed, rng::kTagLearner);
  if (ctx.need_parametric) {
    const crossfit::FoldPlan& plan = cfg.crossfit_parametric ? kfold_plan : single_plan;
    learners::NuisanceFit fit =
        learners::fit_all_folds(pop, draw, plan, parametric_outcome_spec(cfg),
                                parametric_selection_spec(cfg), learner_seed);
    append_model_rows(ctx, draw, plan, fit, "", computed, rep, outcomes.ybar);
  }
  if (ctx.need_gbm5) {
    learners::NuisanceFit fit = learners::fit_all_folds(
        pop, draw, kfold_plan, boosted_spec(learners::LearnerTarget::outcome),
        boosted_spec(learners::LearnerTarget::selection), rng::derive_seed(learner_seed, 5));
    append_model_rows(ctx, draw, kfold_plan, fit, ".gbm5", computed, rep, outcomes.ybar);
  }
  if (ctx.need_gbm1) {
    learners::NuisanceFit fit = learners::fit_all_folds(
        pop, draw, single_plan, boosted_spec(learners::LearnerTarget::outcome),
        boosted_spec(learners::LearnerTarget::selection), rng::derive_seed(learner_seed, 1));
    append_model_rows(ctx, draw, single_plan, fit, ".gbm1", computed, rep, outcomes.ybar);
  }

  std::vector<RepRecord> out;
  out.reserve(ctx.wanted.size());
  for (const std::string& id : ctx.wanted) {
    auto it = computed.find(id);
    if (it != computed.end()) out.push_back(it->second);
  }
  return out;
}

}  // namespace

ScenarioResult run_scenario(const RunConfig& cfg) {
  cfg.scenario.validate();
  if (cfg.replications < 1) throw std::invalid_argument("run_scenario: reps must be >= 1");

  RepContext ctx;
  ctx.cfg = &cfg;
  ctx.wanted = cfg.estimators.empty() ? kEstimatorIds : cfg.estimators;
  for (const std::string& id : ctx.wanted) {
    if (!is_known_estimator(id))
      throw std::invalid_argument("unknown estimator id: " + id);
    switch (classify(id).bundle) {
      case Bundle::parametric: ctx.need_parametric = true; break;
      case Bundle::gbm5: ctx.need_gbm5 = true; break;
      case Bundle::gbm1: ctx.need_gbm1 = true; break;
      case Bundle::none: break;
    }
  }

  const popgen::FinitePopulation pop = popgen::generate_population(cfg.scenario, cfg.seed);
  ctx.pop = &pop;

  std::vector<double> size_measures(pop.cluster_count);
  for (std::uint32_t j = 0; j < pop.cluster_count; ++j)
    size_measures[j] = pop.clusters[j].size_measure;
  std::vector<double> pi_c;
  if (cfg.scenario.cluster_design == popgen::DesignKind::sampford) {
    pi_c = design::cluster_inclusion_probs(size_measures, cfg.scenario.clusters_sampled);
  } else {
    pi_c.assign(pop.cluster_count, static_cast<double>(cfg.scenario.clusters_sampled) /
                                       pop.cluster_count);
  }
  ctx.pi_c = &pi_c;

  const int groups_l =
      cfg.scenario.cluster_design == popgen::DesignKind::srswor ? 1 : cfg.scenario.prob_groups;
  const crossfit::ProbabilityGroups groups = crossfit::build_groups(pi_c, groups_l);
  ctx.groups = &groups;

  const int reps = cfg.replications;
  std::vector<std::vector<RepRecord>> results(reps);
  std::vector<std::string> failures(reps);
  std::atomic<int> next{0};
  auto worker = [&]() {
    for (;;) {
      const int r = next.fetch_add(1);
      if (r >= reps) return;
      try {
        results[r] = run_replication(ctx, r);
      } catch (const std::exception& e) {
        failures[r] = e.what();
      }
    }
  };
  const int threads = std::min(thread_count(cfg.threads), reps);
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  ScenarioResult out;
  for (int r = 0; r < reps; ++r) {
    if (!failures[r].empty()) {
      ++out.failed_replications;
      out.failure_messages.push_back("rep " + std::to_string(r) + ": " + failures[r]);
      continue;
    }
    for (auto& rec : results[r]) out.records.push_back(std::move(rec));
  }
  if (out.failed_replications > cfg.max_failure_fraction * reps) {
    std::string msg = "run_scenario: " + std::to_string(out.failed_replications) + "/" +
                      std::to_string(reps) + " replications failed";
    for (const auto& m : out.failure_messages) msg += "\n  " + m;
    throw std::runtime_error(msg);
  }
  out.rows = summarize(out.records, ctx.wanted);

  if (!cfg.summary_path.empty()) {
    std::ofstream os(cfg.summary_path);
    if (!os) throw std::runtime_error("cannot write summary: " + cfg.summary_path);
    write_summary_csv(out.rows, os);
    const std::string rep_path =
        cfg.per_rep_path.empty() ? cfg.summary_path + ".reps.csv" : cfg.per_rep_path;
    std::ofstream ors(rep_path);
    if (!ors) throw std::runtime_error("cannot write per-replication csv: " + rep_path);
    write_records_csv(out.records, ors);
  }
  return out;
}

std::vector<SummaryRow> summarize(const std::vector<RepRecord>& records,
                                  const std::vector<std::string>& estimator_order) {
  std::map<std::string, std::vector<const RepRecord*>> by_estimator;
  for (const auto& r : records) by_estimator[r.estimator].push_back(&r);

  std::vector<SummaryRow> rows;
  for (const std::string& id : estimator_order) {
    auto it = by_estimator.find(id);
    if (it == by_estimator.end()) continue;
    const auto& recs = it->second;
    SummaryRow row;
    row.estimator = id;
    row.replications = static_cast<int>(recs.size());
    std::vector<double> points, errors, ses;
    double covered = 0.0;
    int covered_n = 0;
    for (const RepRecord* r : recs) {
      points.push_back(r->point);
      errors.push_back(r->point - r->ybar);
      if (r->se) ses.push_back(*r->se);
      if (r->covered) {
        covered += *r->covered ? 1.0 : 0.0;
        ++covered_n;
      }
    }
    row.bias = kernels::sum(errors.data(), errors.size()) / errors.size();
    row.emp_se = sample_sd(points);
    row.has_se = !ses.empty();
    row.mean_se = ses.empty() ? 0.0 : kernels::sum(ses.data(), ses.size()) / ses.size();
    row.coverage = covered_n == 0 ? 0.0 : 100.0 * covered / covered_n;
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_summary_csv(const std::vector<SummaryRow>& rows, std::ostream& os) {
  os << "estimator,bias,empSE,SEhat,cover\n";
  char buf[160];
  for (const auto& r : rows) {
    if (r.has_se)
      std::snprintf(buf, sizeof(buf), "%s,%.3f,%.3f,%.3f,%.0f\n", r.estimator.c_str(), r.bias,
                    r.emp_se, r.mean_se, r.coverage);
    else
      std::snprintf(buf, sizeof(buf), "%s,%.3f,%.3f,,\n", r.estimator.c_str(), r.bias,
                    r.emp_se);
    os << buf;
  }
}

void write_summary_text(const std::vector<SummaryRow>& rows, std::ostream& os) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%-12s %8s %8s %8s %6s\n", "", "bias", "empSE", "SEhat",
                "cover");
  os << buf;
  for (const auto& r : rows) {
    if (r.has_se)
      std::snprintf(buf, sizeof(buf), "%-12s %8.3f %8.3f %8.3f %6.0f\n", r.estimator.c_str(),
                    r.bias, r.emp_se, r.mean_se, r.coverage);
    else
      std::snprintf(buf, sizeof(buf), "%-12s %8.3f %8.3f %8s %6s\n", r.estimator.c_str(),
                    r.bias, r.emp_se, "", "");
    os << buf;
  }
}

std::vector<SummaryRow> read_summary_csv(std::istream& is) {
  std::vector<SummaryRow> rows;
  std::string line;
  if (!std::getline(is, line) || line != "estimator,bias,empSE,SEhat,cover")
    throw std::runtime_error("summary csv: bad header");
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string field;
    SummaryRow r;
    std::getline(ss, r.estimator, ',');
    std::getline(ss, field, ',');
    r.bias = std::stod(field);
    std::getline(ss, field, ',');
    r.emp_se = std::stod(field);
    std::getline(ss, field, ',');
    r.has_se = !field.empty();
    if (r.has_se) r.mean_se = std::stod(field);
    std::getline(ss, field, ',');
    if (!field.empty()) r.coverage = std::stod(field);
    rows.push_back(std::move(r));
  }
  return rows;
}

void write_records_csv(const std::vector<RepRecord>& records, std::ostream& os) {
  os << "rep,estimator,point,se,ybar,covered\n";
  char buf[256];
  for (const auto& r : records) {
    char se_buf[40] = "";
    char cov_buf[4] = "";
    if (r.se) std::snprintf(se_buf, sizeof(se_buf), "%.17g", *r.se);
    if (r.covered) std::snprintf(cov_buf, sizeof(cov_buf), "%d", *r.covered ? 1 : 0);
    std::snprintf(buf, sizeof(buf), "%d,%s,%.17g,%s,%.17g,%s\n", r.rep, r.estimator.c_str(),
                  r.point, se_buf, r.ybar, cov_buf);
    os << buf;
  }
}

std::vector<RepRecord> read_records_csv(std::istream& is) {
  std::vector<RepRecord> records;
  std::string line;
  if (!std::getline(is, line) || line != "rep,estimator,point,se,ybar,covered")
    throw std::runtime_error("records csv: bad header");
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string field;
    RepRecord r;
    std::getline(ss, field, ',');
    r.rep = std::stoi(field);
    std::getline(ss, r.estimator, ',');
    std::getline(ss, field, ',');
    r.point = std::stod(field);
    std::getline(ss, field, ',');
    if (!field.empty()) r.se = std::stod(field);
    std::getline(ss, field, ',');
    r.ybar = std::stod(field);
    std::getline(ss, field, ',');
    if (!field.empty()) r.covered = field == "1";
    records.push_back(std::move(r));
  }
  return records;
}

}  // namespace svydr::harness
