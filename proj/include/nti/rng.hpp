#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include "nti/types.hpp"

namespace nti {

using Rng = std::mt19937_64;

// Per-run stream seeds: splitmix64(seed ^ splitmix64(fnv1a64(run_id))).
// Every experiment run owns one stream so results do not depend on
// scheduling order.
std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t fnv1a64(std::string_view s);
std::uint64_t derive_seed(std::uint64_t seed, std::string_view run_id);
Rng make_rng(std::uint64_t seed, std::string_view run_id);

Vec standard_normal(Rng& rng, int dim);

}  // namespace nti
