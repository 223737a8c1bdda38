// Cluster-level cross-fitting machinery: probability groups by rank of the
// cluster inclusion probability, even fold assignment within groups, active
// out-of-fold subsets, and the weight compensation multipliers.
#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "svydr/rng.hpp"

namespace svydr::crossfit {

struct ProbabilityGroups {
  int group_count = 1;                         // L
  std::vector<std::uint16_t> group_of_cluster;
  std::vector<double> group_mean_pic;          // representative pi^C per group
  std::vector<std::uint32_t> group_sizes;      // J^(l)
};

// Split clusters by rank of pi_c into near-equal groups; ties broken by
// cluster id so the grouping is deterministic.
ProbabilityGroups build_groups(std::span<const double> pi_c, int group_count);

struct FoldPlan {
  int fold_count = 1;  // K
  int group_count = 1; // L
  std::uint32_t cluster_count = 0;
  std::uint32_t sampled_total = 0;  // M
  std::vector<std::uint16_t> fold_of_cluster;
  std::vector<std::uint16_t> group_of_cluster;
  std::vector<double> group_mean_pic;
  std::vector<std::uint32_t> group_sampled;  // M^(l)
  std::vector<std::uint32_t> group_total;    // J^(l)
  // indexed [l * fold_count + k]
  std::vector<std::uint32_t> sampled_count;  // M^(l)_k
  std::vector<std::uint32_t> total_count;    // J^(l)_k
  std::vector<std::uint32_t> active_size;    // C^(l) for fold k
  std::vector<double> multiplier;            // pi^A compensation for fold k, group l
  // active[k][j] == 1 when sampled cluster j is in fold k's active subset
  std::vector<std::vector<std::uint8_t>> active;
  int degenerate_folds = 0;  // folds where a populated group got C^(l) = 0

  std::size_t cell(int l, int k) const {
    return static_cast<std::size_t>(l) * fold_count + k;
  }
};

// Even partition of sampled and unsampled clusters of every group into K
// folds; leftovers land on distinct folds chosen uniformly.
FoldPlan assign_folds(const ProbabilityGroups& groups, std::span<const std::uint8_t> rc,
                      int fold_count, rng::RandomStream& stream);

struct ActiveSubset {
  std::vector<std::uint8_t> active;        // per cluster
  std::vector<std::uint32_t> size;         // C^(l) per group
  std::vector<double> multiplier;          // per group
  int degenerate_groups = 0;
};

// Subsample the out-of-fold sampled clusters of each group and compute the
// compensation multiplier. With a single group the SRSWOR rule applies:
// keep M - ceil(M/K) clusters, multiplier (M - ceil(M/K)) / (M - M/K).
ActiveSubset choose_active_subset(const ProbabilityGroups& groups, const FoldPlan& plan,
                                  std::span<const std::uint8_t> rc, int fold, double delta,
                                  rng::RandomStream& stream);

// assign_folds + choose_active_subset for every fold.
FoldPlan build_plan(const ProbabilityGroups& groups, std::span<const std::uint8_t> rc,
                    int fold_count, double delta, rng::RandomStream& stream);

// K = 1: everything in one fold, every sampled cluster active, multiplier 1.
FoldPlan single_fold_plan(const ProbabilityGroups& groups, std::span<const std::uint8_t> rc);

// Audit dump: cluster_id, fold, group, active flag per fold, multiplier.
void write_plan_csv(const FoldPlan& plan, const ProbabilityGroups& groups, std::ostream& os);

}  // namespace svydr::crossfit
