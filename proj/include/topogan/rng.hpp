#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace topogan {

using Rng = std::mt19937_64;

// Stable, order-independent seed for a named sub-task:
// splitmix64(splitmix64(master) ^ fnv1a64(descriptor)).
std::uint64_t derive_seed(std::uint64_t master, std::string_view descriptor);

}  // namespace topogan
