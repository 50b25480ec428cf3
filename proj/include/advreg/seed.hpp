#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace advreg {

// All randomness descends from one master seed. Sub-procedures get their own
// stream by label ("attack/epoch3/step17"), so each is reproducible on its own
// regardless of what else consumed randomness before it.
std::uint64_t derive_seed(std::uint64_t master, std::string_view label);

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t master, std::string_view label) { return Rng(derive_seed(master, label)); }

}  // namespace advreg
