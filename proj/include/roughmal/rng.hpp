#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace roughmal {

// Philox4x32-10. Every draw is a pure function of (key, counter), so any
// normal in any stream can be regenerated without replaying the others.
class Philox {
 public:
  using Block = std::array<std::uint32_t, 4>;

  explicit Philox(std::uint64_t seed)
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)} {}

  Block operator()(Block ctr) const {
    std::array<std::uint32_t, 2> key = key_;
    for (int round = 0; round < 10; ++round) {
      const std::uint64_t p0 = std::uint64_t{0xD2511F53u} * ctr[0];
      const std::uint64_t p1 = std::uint64_t{0xCD9E8D57u} * ctr[2];
      ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0], static_cast<std::uint32_t>(p1),
             static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1], static_cast<std::uint32_t>(p0)};
      key[0] += 0x9E3779B9u;
      key[1] += 0xBB67AE85u;
    }
    return ctr;
  }

 private:
  std::array<std::uint32_t, 2> key_;
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// Seed of the i-th Monte Carlo sample under a master seed.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  return splitmix64(master ^ splitmix64(index + 0x632BE59BD9B4E019ull));
}

// Standard normals addressed by (stream, index). Stream 0 drives w, stream 1 the copy b.
class NormalStream {
 public:
  NormalStream(std::uint64_t seed, std::uint32_t stream) : gen_(seed), stream_(stream) {}

  double operator()(std::uint64_t index) const {
    const std::uint64_t pair = index / 2;
    const Philox::Block r = gen_({static_cast<std::uint32_t>(pair), static_cast<std::uint32_t>(pair >> 32),
                                  stream_, 0x5EED5EEDu});
    const double u1 = to_open_unit(r[0], r[1]);
    const double u2 = to_open_unit(r[2], r[3]);
    const double rad = std::sqrt(-2.0 * std::log(u1));
    const double ang = 2.0 * std::numbers::pi * u2;
    return (index % 2 == 0) ? rad * std::cos(ang) : rad * std::sin(ang);
  }

  // Uniform on (0,1) at the given index, independent of the normals above.
  double uniform(std::uint64_t index) const {
    const Philox::Block r = gen_({static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
                                  stream_, 0xF1F1F1F1u});
    return to_open_unit(r[0], r[1]);
  }

 private:
  static double to_open_unit(std::uint32_t hi, std::uint32_t lo) {
    const std::uint64_t bits = ((std::uint64_t{hi} << 32) | lo) >> 11;
    return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
  }

  Philox gen_;
  std::uint32_t stream_;
};

}  // namespace roughmal
