#include <doctest.h>

#include <cmath>
#include <set>

#include "optbpx/rng.hpp"

using optbpx::Philox;
using optbpx::ProbeKind;

// Known-answer vectors published with the Random123 reference implementation.
TEST_CASE("philox4x32-10 known answers") {
  CHECK(Philox::block(0, {0, 0, 0, 0}) == Philox::Block{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u});
  CHECK(Philox::block(0xffffffffffffffffull, {0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}) ==
        Philox::Block{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu});
  CHECK(Philox::block(0x299f31d0a4093822ull, {0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u}) ==
        Philox::Block{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u});
}

TEST_CASE("streams are reproducible and distinct") {
  Philox a(7, 1), b(7, 1), c(7, 2), d(8, 1);
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next_u64();
    CHECK(x == b.next_u64());
    CHECK(x != c.next_u64());
    CHECK(x != d.next_u64());
  }
}

TEST_CASE("uniform and normal moments") {
  Philox g(11, 0);
  const int n = 200000;
  double su = 0, sn = 0, sn2 = 0;
  for (int i = 0; i < n; ++i) {
    const double u = g.next_uniform();
    REQUIRE(u > 0.0);
    REQUIRE(u < 1.0);
    su += u;
    const double z = g.next_normal();
    sn += z;
    sn2 += z * z;
  }
  CHECK(su / n == doctest::Approx(0.5).epsilon(0.01));
  CHECK(std::abs(sn / n) < 0.01);
  CHECK(sn2 / n == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("probe stream layout") {
  CHECK(optbpx::probe_stream(1, 0, 0) == (1ull << 56));
  CHECK(optbpx::probe_stream(2, 3, 5) == ((2ull << 56) | (3ull << 24) | 5ull));
  std::set<std::uint64_t> seen;
  for (std::uint32_t p = 1; p <= 4; ++p)
    for (std::uint64_t e = 0; e < 10; ++e)
      for (std::uint64_t i = 0; i < 10; ++i) seen.insert(optbpx::probe_stream(p, e, i));
  CHECK(seen.size() == 400);
}

TEST_CASE("draw_probes") {
  const auto r = optbpx::draw_probes(ProbeKind::Rademacher, 33, 4, 5, 1, 0);
  REQUIRE(r.size() == 4);
  for (const auto& z : r) {
    REQUIRE(z.size() == 33);
    for (double v : z) CHECK(std::abs(v) == 1.0);
  }
  const auto g1 = optbpx::draw_probes(ProbeKind::Gaussian, 10, 3, 5, 1, 2);
  const auto g2 = optbpx::draw_probes(ProbeKind::Gaussian, 10, 3, 5, 1, 2);
  const auto g3 = optbpx::draw_probes(ProbeKind::Gaussian, 10, 3, 5, 1, 3);
  CHECK(g1 == g2);
  CHECK(g1 != g3);
  // Probe i does not depend on how many probes are drawn.
  const auto g4 = optbpx::draw_probes(ProbeKind::Gaussian, 10, 1, 5, 1, 2);
  CHECK(g4[0] == g1[0]);
}
