#pragma once

#include <array>
#include <cstdint>
#include <vector>

namespace optbpx {

/// Philox4x32-10 counter-based generator (Salmon et al., "Parallel random numbers:
/// as easy as 1, 2, 3"). A stream is fully determined by (seed, stream id); draw i of
/// a stream is a pure function of (seed, stream, i), so probes can be generated in any
/// order or in parallel and still agree bit for bit with a serial run.
class Philox {
 public:
  using Block = std::array<std::uint32_t, 4>;

  static Block block(std::uint64_t key, Block counter);

  Philox(std::uint64_t seed, std::uint64_t stream) : seed_(seed), stream_(stream) {}

  std::uint64_t next_u64();
  /// Uniform in the open interval (0, 1), 53 random bits.
  double next_uniform();
  double next_normal();
  /// +1 or -1 with probability 1/2.
  double next_sign();

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t counter_ = 0;
  Block buffer_{};
  int buffered_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

enum class ProbeKind { Rademacher, Gaussian };

/// Derives the stream id of probe `index` in the batch drawn for `epoch` and `purpose`.
/// Layout: [purpose:8 | epoch:32 | index:24].
std::uint64_t probe_stream(std::uint32_t purpose, std::uint64_t epoch, std::uint64_t index);

std::vector<std::vector<double>> draw_probes(ProbeKind kind, std::size_t n, std::size_t count,
                                             std::uint64_t seed, std::uint32_t purpose,
                                             std::uint64_t epoch);

}  // namespace optbpx
