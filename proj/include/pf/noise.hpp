#pragma once

#include <array>
#include <cstdint>

namespace pf {

/// Philox4x32-10 block function (Salmon et al., Random123).
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key);

/// Per-trajectory random stream. The key is the master seed; the counter
/// holds the stream (trajectory) index in its high words and the block
/// index in its low words, so every (seed, stream) pair yields the same
/// sequence on any platform and in any scheduling order.
class NoiseSource {
 public:
  NoiseSource(std::uint64_t seed, std::uint64_t stream);

  /// Uniform in the open interval (0, 1), 53-bit resolution.
  double uniform();
  /// Standard normal (Box-Muller; the second variate of each pair is kept).
  double normal();

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }
  /// Number of Philox blocks consumed so far.
  std::uint64_t blocks_used() const { return block_; }

 private:
  void refill();
  std::uint64_t next_u64();

  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t block_ = 0;
  std::array<std::uint32_t, 4> buffer_{};
  int buffered_ = 0;  // 32-bit words left in buffer_
  bool has_spare_normal_ = false;
  double spare_normal_ = 0.0;
};

}  // namespace pf
