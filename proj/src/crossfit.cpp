#include "svydr/crossfit.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <stdexcept>

namespace svydr::crossfit {

ProbabilityGroups build_groups(std::span<const double> pi_c, int group_count) {
  const std::size_t J = pi_c.size();
  if (group_count < 1) throw std::invalid_argument("build_groups: L must be >= 1");
  if (static_cast<std::size_t>(group_count) > J)
    throw std::invalid_argument("build_groups: L exceeds the number of clusters");

  std::vector<std::uint32_t> order(J);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::uint32_t a, std::uint32_t b) { return pi_c[a] < pi_c[b]; });

  ProbabilityGroups groups;
  groups.group_count = group_count;
  groups.group_of_cluster.resize(J);
  groups.group_mean_pic.assign(group_count, 0.0);
  groups.group_sizes.assign(group_count, 0);
  for (std::size_t r = 0; r < J; ++r) {
    const int l = static_cast<int>(r * group_count / J);
    groups.group_of_cluster[order[r]] = static_cast<std::uint16_t>(l);
    groups.group_mean_pic[l] += pi_c[order[r]];
    groups.group_sizes[l] += 1;
  }
  for (int l = 0; l < group_count; ++l) groups.group_mean_pic[l] /= groups.group_sizes[l];
  return groups;
}

namespace {

// Deal the given clusters evenly into K folds: shuffle, K*floor(n/K) split
// evenly, each leftover onto a distinct uniformly-chosen fold.
void deal_into_folds(std::vector<std::uint32_t>& members, int K, rng::RandomStream& stream,
                     std::vector<std::uint16_t>& fold_of_cluster) {
  stream.shuffle(members);
  const std::size_t base = members.size() / K;
  std::size_t next = 0;
  for (int k = 0; k < K; ++k)
    for (std::size_t t = 0; t < base; ++t)
      fold_of_cluster[members[next++]] = static_cast<std::uint16_t>(k);
  const std::size_t leftovers = members.size() - next;
  if (leftovers > 0) {
    const auto folds = stream.sample_without_replacement(static_cast<std::uint32_t>(K),
                                                         static_cast<std::uint32_t>(leftovers));
    for (std::size_t t = 0; t < leftovers; ++t)
      fold_of_cluster[members[next + t]] = static_cast<std::uint16_t>(folds[t]);
  }
}

}  // namespace

FoldPlan assign_folds(const ProbabilityGroups& groups, std::span<const std::uint8_t> rc,
                      int fold_count, rng::RandomStream& stream) {
  if (fold_count < 2) throw std::invalid_argument("assign_folds: K must be >= 2");
  const std::size_t J = groups.group_of_cluster.size();
  const int L = groups.group_count;

  FoldPlan plan;
  plan.fold_count = fold_count;
  plan.group_count = L;
  plan.cluster_count = static_cast<std::uint32_t>(J);
  plan.fold_of_cluster.assign(J, 0);
  plan.group_of_cluster = groups.group_of_cluster;
  plan.group_mean_pic = groups.group_mean_pic;
  plan.group_sampled.assign(L, 0);
  plan.group_total = groups.group_sizes;
  plan.sampled_count.assign(static_cast<std::size_t>(L) * fold_count, 0);
  plan.total_count.assign(static_cast<std::size_t>(L) * fold_count, 0);

  for (int l = 0; l < L; ++l) {
    std::vector<std::uint32_t> sampled, unsampled;
    for (std::size_t j = 0; j < J; ++j) {
      if (groups.group_of_cluster[j] != l) continue;
      (rc[j] ? sampled : unsampled).push_back(static_cast<std::uint32_t>(j));
    }
    plan.group_sampled[l] = static_cast<std::uint32_t>(sampled.size());
    plan.sampled_total += plan.group_sampled[l];
    deal_into_folds(sampled, fold_count, stream, plan.fold_of_cluster);
    deal_into_folds(unsampled, fold_count, stream, plan.fold_of_cluster);
  }
  for (std::size_t j = 0; j < J; ++j) {
    const std::size_t c = plan.cell(groups.group_of_cluster[j], plan.fold_of_cluster[j]);
    plan.total_count[c] += 1;
    if (rc[j]) plan.sampled_count[c] += 1;
  }
  return plan;
}

ActiveSubset choose_active_subset(const ProbabilityGroups& groups, const FoldPlan& plan,
                                  std::span<const std::uint8_t> rc, int fold, double delta,
                                  rng::RandomStream& stream) {
  if (!(delta > 0.0 && delta < 1.0))
    throw std::invalid_argument("choose_active_subset: delta must lie in (0,1)");
  const std::size_t J = groups.group_of_cluster.size();
  const int L = groups.group_count;
  const int K = plan.fold_count;

  ActiveSubset out;
  out.active.assign(J, 0);
  out.size.assign(L, 0);
  out.multiplier.assign(L, 1.0);

  for (int l = 0; l < L; ++l) {
    const std::uint32_t sampled_in_fold = plan.sampled_count[plan.cell(l, fold)];
    const std::uint32_t out_of_fold = plan.group_sampled[l] - sampled_in_fold;

    std::uint32_t wanted = 0;
    if (L == 1) {
      // SRSWOR rule: keep M - ceil(M/K) of the out-of-fold sampled clusters.
      const std::uint32_t M = plan.group_sampled[0];
      if (M > 0) {
        const std::uint32_t ceil_mk = (M + K - 1) / K;
        wanted = M - ceil_mk;
        const double mk = static_cast<double>(M) / K;
        out.multiplier[0] = static_cast<double>(wanted) / (static_cast<double>(M) - mk);
      }
    } else {
      const std::uint32_t total_out_of_fold =
          plan.group_total[l] - plan.total_count[plan.cell(l, fold)];
      if (total_out_of_fold > 0) {
        const double pic = groups.group_mean_pic[l];
        const double expected = pic * (1.0 - delta) * static_cast<double>(total_out_of_fold);
        const std::uint32_t floored = static_cast<std::uint32_t>(std::floor(expected));
        wanted = std::min(floored, out_of_fold);
        out.multiplier[l] =
            static_cast<double>(floored) / (pic * static_cast<double>(total_out_of_fold));
      }
    }

    if (wanted == 0) {
      if (plan.group_sampled[l] > 0) out.degenerate_groups += 1;
      continue;
    }
    std::vector<std::uint32_t> candidates;
    candidates.reserve(out_of_fold);
    for (std::size_t j = 0; j < J; ++j)
      if (groups.group_of_cluster[j] == l && rc[j] && plan.fold_of_cluster[j] != fold)
        candidates.push_back(static_cast<std::uint32_t>(j));
    for (std::uint32_t pick : stream.sample_without_replacement(
             static_cast<std::uint32_t>(candidates.size()), wanted))
      out.active[candidates[pick]] = 1;
    out.size[l] = wanted;
  }
  return out;
}

FoldPlan build_plan(const ProbabilityGroups& groups, std::span<const std::uint8_t> rc,
                    int fold_count, double delta, rng::RandomStream& stream) {
  FoldPlan plan = assign_folds(groups, rc, fold_count, stream);
  plan.active.resize(fold_count);
  plan.active_size.assign(plan.sampled_count.size(), 0);
  plan.multiplier.assign(plan.sampled_count.size(), 1.0);
  for (int k = 0; k < fold_count; ++k) {
    ActiveSubset sub = choose_active_subset(groups, plan, rc, k, delta, stream);
    plan.active[k] = std::move(sub.active);
    for (int l = 0; l < plan.group_count; ++l) {
      plan.active_size[plan.cell(l, k)] = sub.size[l];
      plan.multiplier[plan.cell(l, k)] = sub.multiplier[l];
    }
    plan.degenerate_folds += sub.degenerate_groups > 0 ? 1 : 0;
  }
  return plan;
}

FoldPlan single_fold_plan(const ProbabilityGroups& groups, std::span<const std::uint8_t> rc) {
  const std::size_t J = groups.group_of_cluster.size();
  const int L = groups.group_count;
  FoldPlan plan;
  plan.fold_count = 1;
  plan.group_count = L;
  plan.cluster_count = static_cast<std::uint32_t>(J);
  plan.fold_of_cluster.assign(J, 0);
  plan.group_of_cluster = groups.group_of_cluster;
  plan.group_mean_pic = groups.group_mean_pic;
  plan.group_sampled.assign(L, 0);
  plan.group_total = groups.group_sizes;
  plan.sampled_count.assign(L, 0);
  plan.total_count = groups.group_sizes;
  plan.active_size.assign(L, 0);
  plan.multiplier.assign(L, 1.0);
  plan.active.resize(1);
  plan.active[0].assign(J, 0);
  for (std::size_t j = 0; j < J; ++j) {
    if (!rc[j]) continue;
    const int l = groups.group_of_cluster[j];
    plan.sampled_count[l] += 1;
    plan.group_sampled[l] += 1;
    plan.sampled_total += 1;
    plan.active[0][j] = 1;
    plan.active_size[l] += 1;
  }
  return plan;
}

void write_plan_csv(const FoldPlan& plan, const ProbabilityGroups& groups, std::ostream& os) {
  os << "cluster_id,fold,group";
  for (int k = 0; k < plan.fold_count; ++k) os << ",active_fold" << k;
  os << ",multiplier\n";
  for (std::uint32_t j = 0; j < plan.cluster_count; ++j) {
    const int l = groups.group_of_cluster[j];
    os << j << ',' << plan.fold_of_cluster[j] << ',' << l;
    for (int k = 0; k < plan.fold_count; ++k)
      os << ',' << (plan.active.empty() ? 0 : static_cast<int>(plan.active[k][j]));
    os << ',' << plan.multiplier[plan.cell(l, plan.fold_of_cluster[j])] << '\n';
  }
}

}  // namespace svydr::crossfit
