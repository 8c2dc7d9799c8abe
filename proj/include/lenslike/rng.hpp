#pragma once

#include <array>
#include <cstdint>
#include <optional>

namespace lenslike {

// Philox4x32-10 counter-based generator. The 64-bit seed is the key; the
// 128-bit counter is (index, stream), so split(stream) gives independent
// reproducible sequences. Uniforms take the top 53 bits of each 64-bit output
// word; normals use Box-Muller on consecutive uniform pairs (cos first, then
// sin).
class Philox {
 public:
  using Block = std::array<std::uint32_t, 4>;
  static constexpr const char* kName = "philox4x32-10/boxmuller";

  explicit Philox(std::uint64_t seed, std::uint64_t stream = 0) : seed_(seed), stream_(stream) {}

  static Block block(const Block& counter, std::array<std::uint32_t, 2> key);

  Philox split(std::uint64_t stream) const { return Philox(seed_, stream); }

  std::uint64_t next_u64();
  double uniform();                      // (0, 1)
  double normal();                       // N(0, 1)
  std::uint64_t below(std::uint64_t n);  // uniform integer in [0, n)

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t index_ = 0;
  Block buffer_{};
  int buffered_ = 0;  // 64-bit words left in buffer_
  std::optional<double> spare_normal_;
};

}  // namespace lenslike
