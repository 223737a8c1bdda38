// Probability-sampling designs for Sample A: SRSWOR and Sampford cluster
// sampling without replacement, plus the two-stage household/individual
// design with exact first-order inclusion probabilities.
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "svydr/population.hpp"
#include "svydr/rng.hpp"

namespace svydr::design {

using popgen::DesignKind;
using popgen::FinitePopulation;

struct ClusterDesign {
  DesignKind kind = DesignKind::sampford;
  std::uint32_t draw_count = 0;    // M
  std::vector<double> target_pi;   // length J, each in (0,1), sums to M
};

// pi_j = M * h_j / sum(h); entries >= 1 are clamped to 1 - 1e-9 and the
// remainder renormalized until stable.
std::vector<double> cluster_inclusion_probs(std::span<const double> size_measures,
                                            std::uint32_t M);

// Sampford's rejective scheme: first unit with probability proportional to
// pi_j, the remaining M-1 with replacement proportional to pi_j/(1-pi_j),
// accepted only when all M are distinct. First-order inclusion probabilities
// equal target_pi exactly.
std::vector<std::uint8_t> sampford_draw(const ClusterDesign& design, rng::RandomStream& stream,
                                        std::uint64_t max_attempts = 1000000);

std::vector<std::uint8_t> srswor_draw(std::uint32_t total, std::uint32_t draw_count,
                                      rng::RandomStream& stream);

std::vector<std::uint8_t> draw_clusters(const ClusterDesign& design, rng::RandomStream& stream);

// Walker alias table for O(1) categorical draws.
class AliasTable {
 public:
  explicit AliasTable(std::span<const double> weights);
  std::uint32_t draw(rng::RandomStream& stream) const;

 private:
  std::vector<double> threshold_;
  std::vector<std::uint32_t> alias_;
};

struct SampleA {
  std::vector<std::uint8_t> in_sample;  // R^A per individual
  std::vector<double> pi_a;             // pi^C * pi^{A|C} per individual
  std::uint64_t count = 0;              // |Sample A|
};

// Within each sampled cluster: n_house households by SRSWOR, one member
// uniformly per sampled household. pi_a is filled for every individual,
// sampled or not.
SampleA draw_sample_a(const FinitePopulation& pop, std::span<const std::uint8_t> rc,
                      std::span<const double> pi_c, std::uint32_t n_house,
                      rng::RandomStream& stream);

// One replication's realized samples.
struct SampleDraw {
  std::vector<double> y;
  double ybar = 0.0;
  std::vector<std::uint8_t> rc;   // per cluster
  std::vector<double> pi_c;       // per cluster
  std::vector<std::uint8_t> ra;   // per individual
  std::vector<double> pi_a;       // per individual
  std::vector<std::uint8_t> rb;   // per individual
};

}  // namespace svydr::design
