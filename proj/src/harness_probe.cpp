#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <thread>
#include <unordered_map>

#include "svydr/design.hpp"
#include "svydr/harness.hpp"
#include "svydr/kernels.hpp"
#include "svydr/rng.hpp"
#include "svydr/selection.hpp"

namespace svydr::harness {

namespace {

int probe_thread_count(int requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

// OLS slope of log(err) on log(m).
double loglog_slope(const std::vector<ProbePoint>& pts, bool selection) {
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  const double n = static_cast<double>(pts.size());
  for (const auto& p : pts) {
    const double x = std::log(static_cast<double>(p.m));
    const double y = std::log(selection ? p.sel_err : p.mean_err);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  return (sxy - sx * sy / n) / (sxx - sx * sx / n);
}

}  // namespace

ProbeResult nuisance_rate_probe(const ProbeConfig& cfg) {
  cfg.scenario.validate();
  if (cfg.m_grid.empty()) throw std::invalid_argument("probe: empty M grid");
  ProbeResult result;

  const double base_ratio = static_cast<double>(cfg.scenario.clusters_total) /
                            static_cast<double>(cfg.scenario.clusters_sampled);

  for (std::uint32_t m : cfg.m_grid) {
    popgen::ScenarioSpec spec = cfg.scenario;
    spec.clusters_sampled = m;
    spec.clusters_total =
        std::max<std::uint32_t>(m + 1, static_cast<std::uint32_t>(std::lround(m * base_ratio)));
    // SRSWOR here: the probe measures learner convergence, and rejective
    // Sampford is infeasible at the largest grid points.
    spec.cluster_design = popgen::DesignKind::srswor;
    const std::uint64_t point_seed = rng::derive_seed(cfg.seed, 0x9000 + m);
    const popgen::FinitePopulation pop = popgen::generate_population(spec, point_seed);

    std::vector<double> pi_c(pop.cluster_count,
                             static_cast<double>(m) / pop.cluster_count);
    const crossfit::ProbabilityGroups groups = crossfit::build_groups(pi_c, 1);

    ProbePoint point;
    point.m = m;
    point.clusters = pop.cluster_count;
    point.sel_err_reps.assign(cfg.replications, 0.0);
    point.mean_err_reps.assign(cfg.replications, 0.0);

    std::atomic<int> next{0};
    std::atomic<bool> failed{false};
    std::string failure;
    std::mutex failure_mutex;
    auto worker = [&]() {
      std::vector<double> sel_hat(pop.size), mean_hat(pop.size);
      for (;;) {
        const int r = next.fetch_add(1);
        if (r >= cfg.replications || failed.load()) return;
        try {
          const std::uint64_t rep_seed = rng::derive_seed(point_seed, rng::kRepBase + r);
          const popgen::OutcomeDraw outcomes = popgen::draw_outcomes(pop, rep_seed);
          rng::RandomStream a_stream(rng::derive_seed(rep_seed, rng::kTagSampleA));
          rng::RandomStream b_stream(rng::derive_seed(rep_seed, rng::kTagSampleB));

          design::SampleDraw draw;
          draw.y = outcomes.y;
          draw.ybar = outcomes.ybar;
          draw.pi_c = pi_c;
          draw.rc = design::srswor_draw(pop.cluster_count, m, a_stream);
          design::SampleA a = design::draw_sample_a(pop, draw.rc, draw.pi_c,
                                                    pop.spec.houses_per_cluster, a_stream);
          draw.ra = std::move(a.in_sample);
          draw.pi_a = std::move(a.pi_a);
          draw.rb = selection::draw_sample_b(pop, b_stream);

          const crossfit::FoldPlan plan = crossfit::single_fold_plan(groups, draw.rc);
          learners::LearnerSpec out_spec, sel_spec;
          out_spec.family = sel_spec.family = cfg.family;
          out_spec.target = learners::LearnerTarget::outcome;
          sel_spec.target = learners::LearnerTarget::selection;
          if (cfg.family == learners::LearnerFamily::boosted_trees)
            sel_spec.pseudo_likelihood = learners::PseudoLikelihood::approximate;

          const std::uint64_t learner_seed = rng::derive_seed(rep_seed, rng::kTagLearner);
          learners::NuisanceFit fit =
              learners::fit_all_folds(pop, draw, plan, out_spec, sel_spec, learner_seed);

          for (std::size_t i = 0; i < pop.size; ++i) {
            const auto x = pop.covariate_row(i);
            sel_hat[i] = fit.sel_prob[0]->value(x.data());
            mean_hat[i] = cfg.oracle_outcome ? pop.true_mean[i] : fit.outcome[0]->value(x.data());
          }
          point.sel_err_reps[r] =
              kernels::ratio_err_sq(pop.true_sel_prob.data(), sel_hat.data(), pop.size) /
              static_cast<double>(pop.size);
          point.mean_err_reps[r] =
              kernels::sum_sq_diff(mean_hat.data(), pop.true_mean.data(), pop.size) /
              static_cast<double>(pop.size);
        } catch (const std::exception& e) {
          std::lock_guard<std::mutex> lock(failure_mutex);
          failed.store(true);
          failure = e.what();
        }
      }
    };
    const int threads = std::min(probe_thread_count(cfg.threads), cfg.replications);
    if (threads <= 1) {
      worker();
    } else {
      std::vector<std::thread> pool;
      for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
      for (auto& t : pool) t.join();
    }
    if (failed.load()) throw std::runtime_error("probe replication failed: " + failure);

    const int R = cfg.replications;
    point.sel_err = kernels::sum(point.sel_err_reps.data(), R) / R;
    point.mean_err = kernels::sum(point.mean_err_reps.data(), R) / R;
    auto se_of_mean = [R](const std::vector<double>& v, double mean) {
      if (R < 2) return 0.0;
      double ss = 0.0;
      for (double x : v) ss += (x - mean) * (x - mean);
      return std::sqrt(ss / (R - 1) / R);
    };
    point.sel_err_se = se_of_mean(point.sel_err_reps, point.sel_err);
    point.mean_err_se = se_of_mean(point.mean_err_reps, point.mean_err);
    result.points.push_back(std::move(point));
  }

  result.sel_slope = loglog_slope(result.points, true);
  if (!cfg.oracle_outcome) result.mean_slope = loglog_slope(result.points, false);
  return result;
}

void write_probe_csv(const ProbeResult& result, std::ostream& os) {
  os << "M,J,sel_err,sel_err_se,mean_err,mean_err_se\n";
  char buf[200];
  for (const auto& p : result.points) {
    std::snprintf(buf, sizeof(buf), "%u,%u,%.8g,%.8g,%.8g,%.8g\n", p.m, p.clusters, p.sel_err,
                  p.sel_err_se, p.mean_err, p.mean_err_se);
    os << buf;
  }
  std::snprintf(buf, sizeof(buf), "# slope sel_err: %.4f  mean_err: %.4f\n", result.sel_slope,
                result.mean_slope);
  os << buf;
}

// --- external data ----------------------------------------------------------

namespace {

std::vector<std::vector<std::string>> read_csv(const std::string& path,
                                               const std::string& expected_header) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open: " + path);
  std::string line;
  if (!std::getline(is, line))
    throw std::runtime_error(path + ": empty file");
  if (line != expected_header)
    throw std::runtime_error(path + ": expected header '" + expected_header + "', got '" +
                             line + "'");
  std::vector<std::vector<std::string>> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::istringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) fields.push_back(f);
    rows.push_back(std::move(fields));
  }
  return rows;
}

}  // namespace

std::vector<estimators::EstimateResult> estimate_external(const std::string& sample_a_csv,
                                                          const std::string& sample_b_csv,
                                                          const ExternalConfig& cfg) {
  if (cfg.population_size == 0)
    throw std::invalid_argument("estimate_external: config must set the population size n");
  const auto a_rows = read_csv(sample_a_csv, "cluster_id,piA,x1,x2,x3,x4");
  const auto b_rows = read_csv(sample_b_csv, "cluster_id,x1,x2,x3,x4,y");
  if (a_rows.empty()) throw std::runtime_error("estimate_external: empty Sample A");
  if (b_rows.empty()) throw std::runtime_error("estimate_external: empty Sample B");

  estimators::UnitTable t;
  t.population_size = cfg.population_size;
  std::unordered_map<long, std::uint32_t> cluster_ids;
  auto dense_cluster = [&](long raw) {
    auto [it, inserted] =
        cluster_ids.try_emplace(raw, static_cast<std::uint32_t>(cluster_ids.size()));
    return it->second;
  };

  std::vector<double> a_x, b_x, b_y, a_pi;
  for (const auto& row : a_rows) {
    if (row.size() != 6) throw std::runtime_error("sample A csv: wrong field count");
    t.unit.push_back(static_cast<std::uint32_t>(t.unit.size()));
    t.cluster.push_back(dense_cluster(std::stol(row[0])));
    t.fold.push_back(0);
    t.ra.push_back(1);
    t.rb.push_back(0);
    const double pia = std::stod(row[1]);
    if (!(pia > 0.0 && pia <= 1.0))
      throw std::runtime_error("sample A csv: piA outside (0,1]");
    t.pi_a.push_back(pia);
    a_pi.push_back(pia);
    t.y.push_back(0.0);
    for (int j = 0; j < 4; ++j) a_x.push_back(std::stod(row[2 + j]));
  }
  t.sampled_clusters = static_cast<std::uint32_t>(cluster_ids.size());
  for (const auto& row : b_rows) {
    if (row.size() != 6) throw std::runtime_error("sample B csv: wrong field count");
    t.unit.push_back(static_cast<std::uint32_t>(t.unit.size()));
    t.cluster.push_back(dense_cluster(std::stol(row[0])));
    t.fold.push_back(0);
    t.ra.push_back(0);
    t.rb.push_back(1);
    t.pi_a.push_back(1.0);
    for (int j = 0; j < 4; ++j) b_x.push_back(std::stod(row[1 + j]));
    const double y = std::stod(row[5]);
    b_y.push_back(y);
    t.y.push_back(y);
  }

  const std::size_t na = a_rows.size(), nb = b_rows.size();
  rng::RandomStream stream(rng::derive_seed(cfg.seed, rng::kTagLearner));

  // Nuisance fits (K = 1). Outcome on Sample-B rows; selection on B rows as
  // positives plus A rows as inverse-probability-weighted negatives.
  std::vector<double> m_at_a(na), m_at_b(nb), sel_at_a(na), sel_at_b(nb);
  if (cfg.family == learners::LearnerFamily::parametric) {
    learners::FeatureExpander fx;
    fx.map = cfg.feature_map;
    fx.quad = cfg.outcome_quad;
    const int p = fx.width();
    std::vector<std::vector<double>> rows(nb, std::vector<double>(p));
    for (std::size_t r = 0; r < nb; ++r) fx.fill(&b_x[r * 4], rows[r].data());
    learners::LinearModel outcome;
    outcome.features = fx;
    outcome.beta = learners::weighted_least_squares(rows, b_y, {});
    for (std::size_t r = 0; r < na; ++r) m_at_a[r] = outcome.value(&a_x[r * 4]);
    for (std::size_t r = 0; r < nb; ++r) m_at_b[r] = outcome.value(&b_x[r * 4]);

    learners::FeatureExpander sx;
    sx.map = cfg.feature_map;
    sx.quad = cfg.selection_quad;
    const int ps = sx.width();
    learners::PseudoLikRows lik;
    const double b_softplus =
        cfg.pseudo_likelihood == learners::PseudoLikelihood::full ? 0.0 : 1.0;
    for (std::size_t r = 0; r < nb; ++r) {
      std::vector<double> row(ps);
      sx.fill(&b_x[r * 4], row.data());
      lik.x.push_back(std::move(row));
      lik.a.push_back(1.0);
      lik.b.push_back(b_softplus);
    }
    for (std::size_t r = 0; r < na; ++r) {
      std::vector<double> row(ps);
      sx.fill(&a_x[r * 4], row.data());
      lik.x.push_back(std::move(row));
      lik.a.push_back(0.0);
      lik.b.push_back(1.0 / a_pi[r]);
    }
    learners::LearnerSpec spec;
    learners::LogisticModel sel;
    sel.features = sx;
    sel.beta = learners::maximize_pseudo_likelihood(lik, ps, spec, nullptr);
    for (std::size_t r = 0; r < na; ++r) sel_at_a[r] = sel.value(&a_x[r * 4]);
    for (std::size_t r = 0; r < nb; ++r) sel_at_b[r] = sel.value(&b_x[r * 4]);
  } else if (cfg.family == learners::LearnerFamily::boosted_trees) {
    learners::BoostParams params;
    learners::GbmModel outcome = learners::fit_gbm(
        b_x, nb, b_y, {}, learners::BoostLoss::squared, params, stream);
    for (std::size_t r = 0; r < na; ++r) m_at_a[r] = outcome.value(&a_x[r * 4]);
    for (std::size_t r = 0; r < nb; ++r) m_at_b[r] = outcome.value(&b_x[r * 4]);

    std::vector<double> all_x(b_x);
    all_x.insert(all_x.end(), a_x.begin(), a_x.end());
    std::vector<double> y(nb + na, 0.0), w(nb + na, 1.0);
    for (std::size_t r = 0; r < nb; ++r) y[r] = 1.0;
    for (std::size_t r = 0; r < na; ++r) w[nb + r] = 1.0 / a_pi[r];
    learners::GbmModel sel = learners::fit_gbm(all_x, nb + na, y, w,
                                               learners::BoostLoss::logistic, params, stream);
    for (std::size_t r = 0; r < na; ++r) sel_at_a[r] = sel.value(&a_x[r * 4]);
    for (std::size_t r = 0; r < nb; ++r) sel_at_b[r] = sel.value(&b_x[r * 4]);
  } else {
    throw std::invalid_argument("estimate_external: unsupported learner family");
  }

  t.sel_hat.resize(t.size());
  t.mean_hat.resize(t.size());
  for (std::size_t r = 0; r < na; ++r) {
    t.sel_hat[r] = sel_at_a[r];
    t.mean_hat[r] = m_at_a[r];
  }
  for (std::size_t r = 0; r < nb; ++r) {
    t.sel_hat[na + r] = sel_at_b[r];
    t.mean_hat[na + r] = m_at_b[r];
  }

  std::vector<estimators::EstimateResult> results;
  results.push_back(estimators::dr1(t));
  results.push_back(estimators::dr2clw(t));
  results.push_back(estimators::dr2(t));
  const estimators::Fluctuation f =
      estimators::tmle_fluctuate(t, 1, estimators::FluctuationKind::linear);
  results.push_back(estimators::tmle1(t, f));
  results.push_back(estimators::tmle2(t, f));
  return results;
}

// --- flat key-value config files --------------------------------------------

bool KeyValueFile::has(const std::string& key) const {
  for (const auto& [k, v] : entries)
    if (k == key) return true;
  return false;
}

std::string KeyValueFile::get(const std::string& key, const std::string& fallback) const {
  for (const auto& [k, v] : entries)
    if (k == key) return v;
  return fallback;
}

KeyValueFile parse_key_value_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open config: " + path);
  KeyValueFile kv;
  std::string line;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error(path + ":" + std::to_string(line_no) +
                               ": expected 'key = value'");
    kv.entries.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return kv;
}

namespace {

std::array<double, 4> parse_linear(const std::string& text, const std::string& key) {
  std::array<double, 4> out{0, 0, 0, 0};
  std::istringstream ss(text);
  std::string f;
  int j = 0;
  while (std::getline(ss, f, ',')) {
    if (j >= 4) throw std::runtime_error(key + ": expected 4 comma-separated coefficients");
    out[j++] = std::stod(f);
  }
  if (j != 4) throw std::runtime_error(key + ": expected 4 comma-separated coefficients");
  return out;
}

// "a:b:coef;a:b:coef" with 1-based covariate indices
std::vector<popgen::QuadTerm> parse_quad(const std::string& text, const std::string& key) {
  std::vector<popgen::QuadTerm> out;
  if (text.empty()) return out;
  std::istringstream ss(text);
  std::string term;
  while (std::getline(ss, term, ';')) {
    std::istringstream ts(term);
    std::string f;
    popgen::QuadTerm q;
    if (!std::getline(ts, f, ':')) throw std::runtime_error(key + ": bad quadratic term");
    q.a = std::stoi(f) - 1;
    if (!std::getline(ts, f, ':')) throw std::runtime_error(key + ": bad quadratic term");
    q.b = std::stoi(f) - 1;
    if (!std::getline(ts, f, ':')) throw std::runtime_error(key + ": bad quadratic term");
    q.coef = std::stod(f);
    if (q.a < 0 || q.a > 3 || q.b < 0 || q.b > 3)
      throw std::runtime_error(key + ": covariate index outside 1..4");
    out.push_back(q);
  }
  return out;
}

}  // namespace

popgen::ScenarioSpec scenario_from_config(const KeyValueFile& kv) {
  popgen::ScenarioSpec spec;
  const std::string which = kv.get("scenario", "custom");
  if (which != "custom") spec = popgen::scenario_preset(std::stoi(which));
  auto set_u32 = [&](const char* key, std::uint32_t& field) {
    if (kv.has(key)) field = static_cast<std::uint32_t>(std::stoul(kv.get(key)));
  };
  auto set_int = [&](const char* key, int& field) {
    if (kv.has(key)) field = std::stoi(kv.get(key));
  };
  auto set_double = [&](const char* key, double& field) {
    if (kv.has(key)) field = std::stod(kv.get(key));
  };
  set_u32("clusters", spec.clusters_total);
  set_u32("sampled_clusters", spec.clusters_sampled);
  set_u32("houses", spec.houses_per_cluster);
  set_int("k", spec.folds);
  set_double("delta", spec.delta);
  set_int("groups", spec.prob_groups);
  set_double("house_mean", spec.house_mean);
  set_double("house_var", spec.house_var);
  set_double("y_sd", spec.y_sd);
  set_double("m0_intercept", spec.outcome_mean.intercept);
  if (kv.has("m0_linear"))
    spec.outcome_mean.linear = parse_linear(kv.get("m0_linear"), "m0_linear");
  if (kv.has("m0_quad")) spec.outcome_mean.quad = parse_quad(kv.get("m0_quad"), "m0_quad");
  set_double("sel_intercept", spec.selection_logit.intercept);
  if (kv.has("sel_linear"))
    spec.selection_logit.linear = parse_linear(kv.get("sel_linear"), "sel_linear");
  if (kv.has("sel_quad"))
    spec.selection_logit.quad = parse_quad(kv.get("sel_quad"), "sel_quad");
  set_double("target_b", spec.target_sample_b);
  if (kv.has("design")) {
    const std::string d = kv.get("design");
    if (d == "sampford")
      spec.cluster_design = popgen::DesignKind::sampford;
    else if (d == "srswor")
      spec.cluster_design = popgen::DesignKind::srswor;
    else
      throw std::runtime_error("design: expected 'sampford' or 'srswor'");
  }
  if (kv.has("seed")) spec.rng_seed = std::stoull(kv.get("seed"));
  spec.validate();
  return spec;
}

}  // namespace svydr::harness
