#include "kinflow/rng.hpp"

#include <cmath>

namespace kinflow {

namespace {

constexpr std::uint32_t kPhiloxM0 = 0xD2511F53u;
constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57u;
constexpr std::uint32_t kPhiloxW0 = 0x9E3779B9u;
constexpr std::uint32_t kPhiloxW1 = 0xBB67AE85u;

inline void philox_round(std::array<std::uint32_t, 4>& ctr, std::array<std::uint32_t, 2>& key) {
    const std::uint64_t p0 = static_cast<std::uint64_t>(kPhiloxM0) * ctr[0];
    const std::uint64_t p1 = static_cast<std::uint64_t>(kPhiloxM1) * ctr[2];
    ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0],
           static_cast<std::uint32_t>(p1),
           static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1],
           static_cast<std::uint32_t>(p0)};
    key[0] += kPhiloxW0;
    key[1] += kPhiloxW1;
}

// [0,1) from 53 random bits.
inline double to_unit(std::uint64_t u) {
    return static_cast<double>(u >> 11) * 0x1.0p-53;
}

// (0,1] so log() below is always finite.
inline double to_unit_pos(std::uint64_t u) {
    return static_cast<double>((u >> 11) + 1) * 0x1.0p-53;
}

inline std::uint64_t join64(std::uint32_t hi, std::uint32_t lo) {
    return (static_cast<std::uint64_t>(hi) << 32) | lo;
}

// Box-Muller pair from one 128-bit block.
inline void normal_pair(const std::array<std::uint32_t, 4>& w, double& z0, double& z1) {
    const double u1 = to_unit_pos(join64(w[0], w[1]));
    const double u2 = to_unit(join64(w[2], w[3]));
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double phi = 2.0 * M_PI * u2;
    z0 = r * std::cos(phi);
    z1 = r * std::sin(phi);
}

}  // namespace

std::array<std::uint32_t, 4> philox_block(Seed seed, std::uint32_t tag, std::uint64_t counter,
                                          std::uint32_t lane) {
    std::array<std::uint32_t, 4> ctr = {static_cast<std::uint32_t>(counter),
                                        static_cast<std::uint32_t>(counter >> 32), lane, tag};
    std::array<std::uint32_t, 2> key = {static_cast<std::uint32_t>(seed.value),
                                        static_cast<std::uint32_t>(seed.value >> 32)};
    for (int round = 0; round < 10; ++round) {
        philox_round(ctr, key);
    }
    return ctr;
}

std::uint64_t random_u64(Seed seed, std::uint32_t tag, std::uint64_t counter, std::uint32_t lane) {
    const auto w = philox_block(seed, tag, counter, lane);
    return join64(w[0], w[1]);
}

double random_unit(Seed seed, std::uint32_t tag, std::uint64_t counter, std::uint32_t lane) {
    return to_unit(random_u64(seed, tag, counter, lane));
}

std::uint32_t pick_uniform(Seed seed, std::uint32_t tag, std::uint64_t counter, std::uint32_t lane,
                           std::uint32_t n) {
    require(n > 0, "pick_uniform: n must be positive");
    return static_cast<std::uint32_t>(random_u64(seed, tag, counter, lane) % n);
}

Seed split_seed(Seed seed, std::uint64_t a, std::uint32_t b) {
    return Seed{random_u64(seed, kTagSplit, a, b)};
}

double normal_at(Seed seed, std::uint32_t tag, std::uint64_t i) {
    double z0 = 0.0, z1 = 0.0;
    normal_pair(philox_block(seed, tag, i / 2), z0, z1);
    return (i % 2 == 0) ? z0 : z1;
}

Tensor gaussian_noise(const std::vector<Index>& dims, Seed seed) {
    require(!dims.empty(), "gaussian_noise: dims must be non-empty");
    for (Index d : dims) {
        require(d > 0, "gaussian_noise: extents must be positive");
    }
    Tensor out(dims);
    const Index n = out.size();
    double* p = out.data();
    for (Index block = 0; block * 2 < n; ++block) {
        double z0 = 0.0, z1 = 0.0;
        normal_pair(philox_block(seed, kTagNoise, static_cast<std::uint64_t>(block)), z0, z1);
        p[2 * block] = z0;
        if (2 * block + 1 < n) {
            p[2 * block + 1] = z1;
        }
    }
    return out;
}

}  // namespace kinflow
