#pragma once

#include <cstdint>
#include <string_view>

namespace kinscope {

/// SplitMix64 finaliser.
std::uint64_t splitmix64(std::uint64_t x);
/// Mixes a seed with a string into a new 64-bit seed.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view salt);
/// Mixes a seed with integers (e.g. epoch, step).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0);

}  // namespace kinscope
