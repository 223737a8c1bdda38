#include "svydr/design.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "svydr/kernels.hpp"

namespace svydr::design {

std::vector<double> cluster_inclusion_probs(std::span<const double> size_measures,
                                            std::uint32_t M) {
  const std::size_t J = size_measures.size();
  if (M >= J)
    throw std::invalid_argument("cluster_inclusion_probs: M must be < J");
  for (double h : size_measures)
    if (!(h > 0.0))
      throw std::invalid_argument("cluster_inclusion_probs: size measures must be > 0");

  constexpr double cap = 1.0 - 1e-9;
  std::vector<double> pi(J);
  std::vector<std::uint8_t> clamped(J, 0);
  double total = kernels::sum(size_measures.data(), J);
  for (std::size_t j = 0; j < J; ++j)
    pi[j] = static_cast<double>(M) * size_measures[j] / total;

  // Clamp any pi >= 1 and renormalize the rest so the total stays M.
  for (;;) {
    bool newly_clamped = false;
    for (std::size_t j = 0; j < J; ++j) {
      if (!clamped[j] && pi[j] >= 1.0) {
        pi[j] = cap;
        clamped[j] = 1;
        newly_clamped = true;
      }
    }
    if (!newly_clamped) break;
    double free_mass = static_cast<double>(M);
    double free_raw = 0.0;
    for (std::size_t j = 0; j < J; ++j) {
      if (clamped[j])
        free_mass -= pi[j];
      else
        free_raw += pi[j];
    }
    if (free_raw <= 0.0)
      throw std::invalid_argument("cluster_inclusion_probs: degenerate size measures");
    const double scale = free_mass / free_raw;
    for (std::size_t j = 0; j < J; ++j)
      if (!clamped[j]) pi[j] *= scale;
  }
  return pi;
}

AliasTable::AliasTable(std::span<const double> weights) {
  const std::size_t n = weights.size();
  threshold_.resize(n);
  alias_.resize(n);
  const double total = kernels::sum(weights.data(), n);
  std::vector<double> scaled(n);
  for (std::size_t i = 0; i < n; ++i) scaled[i] = weights[i] * n / total;
  std::vector<std::uint32_t> small, large;
  for (std::size_t i = 0; i < n; ++i)
    (scaled[i] < 1.0 ? small : large).push_back(static_cast<std::uint32_t>(i));
  while (!small.empty() && !large.empty()) {
    const std::uint32_t s = small.back(), l = large.back();
    small.pop_back();
    threshold_[s] = scaled[s];
    alias_[s] = l;
    scaled[l] -= 1.0 - scaled[s];
    if (scaled[l] < 1.0) {
      large.pop_back();
      small.push_back(l);
    }
  }
  for (std::uint32_t i : large) {
    threshold_[i] = 1.0;
    alias_[i] = i;
  }
  for (std::uint32_t i : small) {
    threshold_[i] = 1.0;
    alias_[i] = i;
  }
}

std::uint32_t AliasTable::draw(rng::RandomStream& stream) const {
  const std::uint32_t i = static_cast<std::uint32_t>(stream.below(threshold_.size()));
  return stream.uniform() < threshold_[i] ? i : alias_[i];
}

std::vector<std::uint8_t> sampford_draw(const ClusterDesign& design, rng::RandomStream& stream,
                                        std::uint64_t max_attempts) {
  const std::size_t J = design.target_pi.size();
  const std::uint32_t M = design.draw_count;
  if (M == 0 || M >= J) throw std::invalid_argument("sampford_draw: require 0 < M < J");
  for (double p : design.target_pi)
    if (!(p > 0.0 && p < 1.0))
      throw std::invalid_argument("sampford_draw: every target probability must lie in (0,1)");

  std::vector<double> odds(J);
  for (std::size_t j = 0; j < J; ++j)
    odds[j] = design.target_pi[j] / (1.0 - design.target_pi[j]);
  const AliasTable first(design.target_pi);
  const AliasTable rest(odds);

  // stamp[j] == attempt marks j as drawn this attempt; no per-attempt clearing.
  std::vector<std::uint64_t> stamp(J, 0);
  std::vector<std::uint32_t> chosen(M);
  for (std::uint64_t attempt = 1; attempt <= max_attempts; ++attempt) {
    std::uint32_t drawn = 0;
    std::uint32_t j = first.draw(stream);
    stamp[j] = attempt;
    chosen[drawn++] = j;
    bool duplicate = false;
    for (std::uint32_t d = 1; d < M; ++d) {
      j = rest.draw(stream);
      if (stamp[j] == attempt) {
        duplicate = true;
        break;
      }
      stamp[j] = attempt;
      chosen[drawn++] = j;
    }
    if (!duplicate) {
      std::vector<std::uint8_t> rc(J, 0);
      for (std::uint32_t d = 0; d < M; ++d) rc[chosen[d]] = 1;
      return rc;
    }
  }
  throw std::runtime_error(
      "sampford_draw: no accepted sample within " + std::to_string(max_attempts) +
      " attempts; the target probabilities are numerically degenerate for this M");
}

std::vector<std::uint8_t> srswor_draw(std::uint32_t total, std::uint32_t draw_count,
                                      rng::RandomStream& stream) {
  if (draw_count > total) throw std::invalid_argument("srswor_draw: M > J");
  std::vector<std::uint8_t> rc(total, 0);
  for (std::uint32_t j : stream.sample_without_replacement(total, draw_count)) rc[j] = 1;
  return rc;
}

std::vector<std::uint8_t> draw_clusters(const ClusterDesign& design, rng::RandomStream& stream) {
  if (design.kind == DesignKind::sampford) return sampford_draw(design, stream);
  return srswor_draw(static_cast<std::uint32_t>(design.target_pi.size()), design.draw_count,
                     stream);
}

SampleA draw_sample_a(const FinitePopulation& pop, std::span<const std::uint8_t> rc,
                      std::span<const double> pi_c, std::uint32_t n_house,
                      rng::RandomStream& stream) {
  SampleA out;
  out.in_sample.assign(pop.size, 0);
  out.pi_a.resize(pop.size);

  for (std::uint32_t j = 0; j < pop.cluster_count; ++j) {
    const popgen::Cluster& cl = pop.clusters[j];
    const std::uint32_t households = cl.household_end - cl.household_begin;
    if (rc[j] && households < n_house)
      throw std::invalid_argument("draw_sample_a: cluster " + std::to_string(j) + " has " +
                                  std::to_string(households) + " households, fewer than " +
                                  std::to_string(n_house));
    const double house_frac = static_cast<double>(n_house) / households;
    for (std::uint32_t i = cl.member_begin; i < cl.member_end; ++i)
      out.pi_a[i] = pi_c[j] * house_frac / pop.member_household_size[i];

    if (!rc[j]) continue;
    for (std::uint32_t local : stream.sample_without_replacement(households, n_house)) {
      const std::uint32_t h = cl.household_begin + local;
      const std::uint32_t q = pop.household_size[h];
      const std::uint32_t member =
          pop.household_member_begin[h] + static_cast<std::uint32_t>(stream.below(q));
      out.in_sample[member] = 1;
      ++out.count;
    }
  }
  return out;
}

}  // namespace svydr::design
