#pragma once

#include "kinflow/tensor.hpp"

#include <array>
#include <cstdint>

namespace kinflow {

// 64-bit seed; equal seeds give bitwise-equal streams on every run. The
// generator underneath is counter-based (Philox4x32-10), so any element of
// any stream can be produced independently — build_mask, dropout and the
// training loop all draw from disjoint (tag, counter) coordinates of the
// same seed instead of sharing mutable generator state.
struct Seed {
    std::uint64_t value = 0;
};

// Stream tags. Each consumer owns one tag so streams never collide.
inline constexpr std::uint32_t kTagNoise = 1;
inline constexpr std::uint32_t kTagOwner = 2;
inline constexpr std::uint32_t kTagDropout = 3;
inline constexpr std::uint32_t kTagTime = 4;
inline constexpr std::uint32_t kTagInit = 5;
inline constexpr std::uint32_t kTagScene = 6;
inline constexpr std::uint32_t kTagCarrier = 7;
inline constexpr std::uint32_t kTagSplit = 8;
inline constexpr std::uint32_t kTagShuffle = 9;

// One Philox4x32-10 block: 128 random bits at coordinates
// (seed; counter, lane, tag). Pure function of its arguments.
std::array<std::uint32_t, 4> philox_block(Seed seed, std::uint32_t tag, std::uint64_t counter,
                                          std::uint32_t lane = 0);

std::uint64_t random_u64(Seed seed, std::uint32_t tag, std::uint64_t counter, std::uint32_t lane = 0);

// Uniform double in [0, 1).
double random_unit(Seed seed, std::uint32_t tag, std::uint64_t counter, std::uint32_t lane = 0);

// Uniform pick in [0, n). n must be positive.
std::uint32_t pick_uniform(Seed seed, std::uint32_t tag, std::uint64_t counter, std::uint32_t lane,
                           std::uint32_t n);

// Derives an independent child seed; used to give each training sample its
// own noise stream.
Seed split_seed(Seed seed, std::uint64_t a, std::uint32_t b = 0);

// Element i of the virtual N(0,1) stream for (seed, tag).
double normal_at(Seed seed, std::uint32_t tag, std::uint64_t i);

// I.i.d. standard normal tensor, deterministic in (dims, seed).
// Zero or negative extents are invalid.
Tensor gaussian_noise(const std::vector<Index>& dims, Seed seed);

}  // namespace kinflow
