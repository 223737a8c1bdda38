// Nonprobability Sample-B selection: independent Bernoulli draws from the
// population's true selection probabilities.
#pragma once

#include <cstdint>
#include <vector>

#include "svydr/population.hpp"
#include "svydr/rng.hpp"

namespace svydr::selection {

std::vector<std::uint8_t> draw_sample_b(const popgen::FinitePopulation& pop,
                                        rng::RandomStream& stream);

}  // namespace svydr::selection
