#include "svydr/selection.hpp"

namespace svydr::selection {

std::vector<std::uint8_t> draw_sample_b(const popgen::FinitePopulation& pop,
                                        rng::RandomStream& stream) {
  std::vector<std::uint8_t> rb(pop.size);
  for (std::size_t i = 0; i < pop.size; ++i)
    rb[i] = stream.bernoulli(pop.true_sel_prob[i]) ? 1 : 0;
  return rb;
}

}  // namespace svydr::selection
