#pragma once

/**
 * @brief Counter-based random number generation (Philox4x32-10).
 *
 * A counter-based generator makes replicate-level determinism trivial: every
 * (seed, n, replicate, method, purpose) tuple is hashed into an independent
 * key, and the stream for that key is a pure function of the counter.  This
 * gives reproducible experiments regardless of execution order or thread
 * scheduling.  The standard library provides no counter-based engine, so the
 * generator is implemented here; it is validated against published
 * known-answer vectors in the unit tests.
 */

#include <array>
#include <cmath>
#include <cstdint>

namespace kcg {

/** @brief One Philox4x32-10 block: 4x32-bit counter + 2x32-bit key -> 4x32-bit output. */
inline std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> ctr,
                                                  std::array<std::uint32_t, 2> key) {
  constexpr std::uint32_t kMul0 = 0xD2511F53u;
  constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
  constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
  constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;
  for (int round = 0; round < 10; ++round) {
    const std::uint64_t prod0 = static_cast<std::uint64_t>(kMul0) * ctr[0];
    const std::uint64_t prod1 = static_cast<std::uint64_t>(kMul1) * ctr[2];
    const std::uint32_t hi0 = static_cast<std::uint32_t>(prod0 >> 32);
    const std::uint32_t lo0 = static_cast<std::uint32_t>(prod0);
    const std::uint32_t hi1 = static_cast<std::uint32_t>(prod1 >> 32);
    const std::uint32_t lo1 = static_cast<std::uint32_t>(prod1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += kWeyl0;
    key[1] += kWeyl1;
  }
  return ctr;
}

/** @brief SplitMix64 finalizer; used to mix stream tags into Philox keys. */
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

/** @brief Stream purposes; part of the key so streams never collide. */
enum class StreamPurpose : std::uint64_t {
  dataset = 1,    ///< covariate + noise sampling (method-independent)
  mc_eval = 2,    ///< Monte Carlo error estimation
  audit = 3,      ///< concentration audits
  generic = 4,    ///< anything else
};

/**
 * @brief Deterministic random stream backed by Philox4x32-10.
 *
 * The key is derived by hashing an arbitrary list of 64-bit tags; the counter
 * advances by one block per 4 outputs.  Identical tags always reproduce the
 * identical stream.
 */
class PhiloxRng {
public:
  /** @brief Construct from a list of stream tags (seed, n, replicate, ...). */
  explicit PhiloxRng(std::initializer_list<std::uint64_t> tags) {
    std::uint64_t h = 0x8000000000000001ull;
    for (std::uint64_t t : tags) h = mix64(h ^ t);
    key_ = {static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32)};
    counter_ = {0, 0, 0, 0};
    index_ = 4;  // force a refill on first draw
  }

  /** @brief Next 32 uniform random bits. */
  std::uint32_t next_u32() {
    if (index_ == 4) {
      block_ = philox4x32_10(counter_, key_);
      advance_counter();
      index_ = 0;
    }
    return block_[index_++];
  }

  /** @brief Next 64 uniform random bits. */
  std::uint64_t next_u64() {
    const std::uint64_t lo = next_u32();
    const std::uint64_t hi = next_u32();
    return (hi << 32) | lo;
  }

  /** @brief Uniform double in [0, 1) with 53-bit resolution. */
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  /** @brief Uniform double in (0, 1]; safe as a logarithm argument. */
  double uniform_open() {
    return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
  }

  /** @brief Standard normal via Box-Muller (one draw = two uniforms). */
  double gaussian() {
    const double u1 = uniform_open();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.28318530717958647692 * u2);
  }

private:
  void advance_counter() {
    for (int i = 0; i < 4; ++i) {
      if (++counter_[i] != 0) break;
    }
  }

  std::array<std::uint32_t, 2> key_;
  std::array<std::uint32_t, 4> counter_;
  std::array<std::uint32_t, 4> block_{};
  int index_;
};

}  // namespace kcg
