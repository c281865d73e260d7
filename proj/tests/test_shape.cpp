#include <catch2/catch_amalgamated.hpp>

#include "dfield/rng.hpp"
#include "dfield/shape.hpp"
#include "support/oracles.hpp"

using namespace dfield;

TEST_CASE("rect_shape satisfies the Kronecker-delta property at its nodes") {
  const double corner_xi[4] = {-1, 1, 1, -1};
  const double corner_eta[4] = {-1, -1, 1, 1};
  for (int node = 0; node < 4; ++node) {
    const auto n = rect_shape(corner_xi[node], corner_eta[node]);
    for (int i = 0; i < 4; ++i)
      CHECK(n[i] == Catch::Approx(i == node ? 1.0 : 0.0).margin(1e-15));
  }
}

TEST_CASE("rect_shape values") {
  SECTION("element center weights all nodes equally") {
    const auto n = rect_shape(0.0, 0.0);
    for (double v : n) CHECK(v == Catch::Approx(0.25).margin(1e-15));
  }
  SECTION("direct evaluation at (0.5, -0.25)") {
    const auto n = rect_shape(0.5, -0.25);
    CHECK(n[0] == Catch::Approx(0.25 * (0.5 - 1) * (-0.25 - 1)));   //  0.15625
    CHECK(n[1] == Catch::Approx(-0.25 * (0.5 + 1) * (-0.25 - 1)));  //  0.46875
    CHECK(n[2] == Catch::Approx(0.25 * (0.5 + 1) * (-0.25 + 1)));   //  0.28125
    CHECK(n[3] == Catch::Approx(-0.25 * (0.5 - 1) * (-0.25 + 1)));  //  0.09375
    CHECK(n[0] + n[1] + n[2] + n[3] == Catch::Approx(1.0).margin(1e-12));
  }
  SECTION("partition of unity on random samples") {
    Rng rng(21);
    for (int i = 0; i < 10000; ++i) {
      const auto n = rect_shape(rng.uniform(-1, 1), rng.uniform(-1, 1));
      CHECK(n[0] + n[1] + n[2] + n[3] == Catch::Approx(1.0).margin(1e-12));
    }
  }
}

TEST_CASE("rect_natural maps the element onto the natural square") {
  SECTION("center and corners") {
    const auto c = rect_natural(10, 20, 50, 60, {30, 40});
    CHECK(c.xi == Catch::Approx(0.0).margin(1e-15));
    CHECK(c.eta == Catch::Approx(0.0).margin(1e-15));
    const auto k3 = rect_natural(10, 20, 50, 60, {50, 60});
    CHECK(k3.xi == Catch::Approx(1.0));
    CHECK(k3.eta == Catch::Approx(1.0));
  }
  SECTION("round-trip through the inverse affine map") {
    Rng rng(4);
    for (int i = 0; i < 1000; ++i) {
      const double x0 = rng.uniform(-5, 5), y0 = rng.uniform(-5, 5);
      const double x1 = x0 + rng.uniform(1, 100), y1 = y0 + rng.uniform(1, 100);
      const PixelCoord p{rng.uniform(x0, x1), rng.uniform(y0, y1)};
      const auto nc = rect_natural(x0, y0, x1, y1, p);
      const double bx = x0 + (nc.xi + 1) * 0.5 * (x1 - x0);
      const double by = y0 + (nc.eta + 1) * 0.5 * (y1 - y0);
      CHECK(bx == Catch::Approx(p.x).margin(1e-10));
      CHECK(by == Catch::Approx(p.y).margin(1e-10));
    }
  }
  SECTION("zero-extent element is an error") {
    CHECK_THROWS_AS(rect_natural(3, 3, 3, 9, {3, 4}), Error);
  }
}

TEST_CASE("tri_area_coords") {
  SECTION("vertices and centroid") {
    const PixelCoord a{0, 0}, b{10, 0}, c{2, 8};
    const auto at_a = tri_area_coords(a, b, c, a);
    CHECK(at_a.li == Catch::Approx(1.0).margin(1e-14));
    CHECK(at_a.lj == Catch::Approx(0.0).margin(1e-14));
    CHECK(at_a.lk == Catch::Approx(0.0).margin(1e-14));
    const auto at_g = tri_area_coords(a, b, c, {(a.x + b.x + c.x) / 3, (a.y + b.y + c.y) / 3});
    CHECK(at_g.li == Catch::Approx(1.0 / 3).margin(1e-12));
    CHECK(at_g.lj == Catch::Approx(1.0 / 3).margin(1e-12));
    CHECK(at_g.lk == Catch::Approx(1.0 / 3).margin(1e-12));
  }
  SECTION("coordinates equal sub-triangle area ratios (shoelace oracle)") {
    Rng rng(17);
    for (int trial = 0; trial < 500; ++trial) {
      PixelCoord a{rng.uniform(0, 100), rng.uniform(0, 100)};
      PixelCoord b{rng.uniform(0, 100), rng.uniform(0, 100)};
      PixelCoord c{rng.uniform(0, 100), rng.uniform(0, 100)};
      if (doubled_area(a, b, c) < 0) std::swap(b, c);
      const double area = oracle::shoelace({a, b, c});
      if (area < 1.0) continue;
      // random point inside via barycentric sampling
      double wa = rng.uniform(), wb = rng.uniform(), wc = rng.uniform();
      const double ws = wa + wb + wc;
      wa /= ws;
      wb /= ws;
      wc /= ws;
      const PixelCoord p{wa * a.x + wb * b.x + wc * c.x, wa * a.y + wb * b.y + wc * c.y};
      const auto l = tri_area_coords(a, b, c, p);
      CHECK(l.li == Catch::Approx(oracle::shoelace({p, b, c}) / area).margin(1e-9));
      CHECK(l.lj == Catch::Approx(oracle::shoelace({p, c, a}) / area).margin(1e-9));
      CHECK(l.lk == Catch::Approx(oracle::shoelace({p, a, b}) / area).margin(1e-9));
      CHECK(l.li + l.lj + l.lk == Catch::Approx(1.0).margin(1e-12));
    }
  }
  SECTION("degenerate triangle is an error") {
    CHECK_THROWS_AS(tri_area_coords({0, 0}, {1, 1}, {2, 2}, {1, 0}), Error);
  }
}
