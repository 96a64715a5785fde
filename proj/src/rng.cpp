#include "optbpx/rng.hpp"

#include <cmath>
#include <numbers>

namespace optbpx {

namespace {
constexpr std::uint32_t kMul0 = 0xD2511F53u;
constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
  const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(p >> 32);
  lo = static_cast<std::uint32_t>(p);
}
}  // namespace

Philox::Block Philox::block(std::uint64_t key, Block ctr) {
  std::uint32_t k0 = static_cast<std::uint32_t>(key);
  std::uint32_t k1 = static_cast<std::uint32_t>(key >> 32);
  for (int round = 0; round < 10; ++round) {
    std::uint32_t hi0, lo0, hi1, lo1;
    mulhilo(kMul0, ctr[0], hi0, lo0);
    mulhilo(kMul1, ctr[2], hi1, lo1);
    ctr = {hi1 ^ ctr[1] ^ k0, lo1, hi0 ^ ctr[3] ^ k1, lo0};
    k0 += kWeyl0;
    k1 += kWeyl1;
  }
  return ctr;
}

std::uint64_t Philox::next_u64() {
  if (buffered_ == 0) {
    const Block ctr{static_cast<std::uint32_t>(counter_), static_cast<std::uint32_t>(counter_ >> 32),
                    static_cast<std::uint32_t>(stream_), static_cast<std::uint32_t>(stream_ >> 32)};
    buffer_ = block(seed_, ctr);
    ++counter_;
    buffered_ = 2;
  }
  const int base = (2 - buffered_) * 2;
  --buffered_;
  return static_cast<std::uint64_t>(buffer_[base]) |
         (static_cast<std::uint64_t>(buffer_[base + 1]) << 32);
}

double Philox::next_uniform() {
  return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

double Philox::next_normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  const double u1 = next_uniform();
  const double u2 = next_uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double t = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(t);
  has_spare_ = true;
  return r * std::cos(t);
}

double Philox::next_sign() { return (next_u64() >> 63) ? 1.0 : -1.0; }

std::uint64_t probe_stream(std::uint32_t purpose, std::uint64_t epoch, std::uint64_t index) {
  return (static_cast<std::uint64_t>(purpose & 0xFFu) << 56) | ((epoch & 0xFFFFFFFFull) << 24) |
         (index & 0xFFFFFFull);
}

std::vector<std::vector<double>> draw_probes(ProbeKind kind, std::size_t n, std::size_t count,
                                             std::uint64_t seed, std::uint32_t purpose,
                                             std::uint64_t epoch) {
  std::vector<std::vector<double>> probes(count, std::vector<double>(n));
  for (std::size_t j = 0; j < count; ++j) {
    Philox rng(seed, probe_stream(purpose, epoch, j));
    for (auto& x : probes[j]) x = kind == ProbeKind::Rademacher ? rng.next_sign() : rng.next_normal();
  }
  return probes;
}

}  // namespace optbpx
