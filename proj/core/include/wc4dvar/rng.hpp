/* SPDX-FileCopyrightText: Copyright (c) 2026 the wc4dvar authors
 * SPDX-License-Identifier: Apache-2.0
 */
#pragma once

#include <array>
#include <cstdint>
#include <string_view>

#include "wc4dvar/types.hpp"

namespace wc4dvar {

/// Philox4x32-10 counter-based generator. A (seed, stream) pair selects an
/// independent substream; draws within a stream are a pure function of the
/// block counter, so results are reproducible regardless of evaluation order
/// across streams.
class Philox {
 public:
  explicit Philox(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint32_t next_u32();
  std::uint64_t next_u64();

  /// Uniform double in (0, 1] with 32 bits of resolution (never returns 0,
  /// so it is safe under log()).
  double uniform01();

  /// Standard normal via Box-Muller on explicit uniforms. Deterministic and
  /// independent of any platform distribution implementation.
  double gaussian();

  /// +1 or -1 with equal probability.
  double rademacher();

  Vector gaussian_vector(Index n);
  Vector rademacher_vector(Index n);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

  /// One Philox block: encrypt the 128-bit counter under the 64-bit key.
  static std::array<std::uint32_t, 4> block(const std::array<std::uint32_t, 4>& counter,
                                            const std::array<std::uint32_t, 2>& key);

 private:
  void refill();

  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t block_index_ = 0;
  std::array<std::uint32_t, 4> buffer_{};
  int buffer_pos_ = 4;  // empty
  bool have_cached_gaussian_ = false;
  double cached_gaussian_ = 0.0;
};

/// Stable seed derivation for independent sub-purposes of one experiment seed
/// (FNV-1a over the tag, mixed with the base seed).
std::uint64_t derive_seed(std::uint64_t base, std::string_view tag);

}  // namespace wc4dvar
