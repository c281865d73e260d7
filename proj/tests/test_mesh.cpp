#include <catch2/catch_amalgamated.hpp>

#include <map>
#include <set>

#include "dfield/mesh.hpp"
#include "dfield/rng.hpp"
#include "support/oracles.hpp"

using namespace dfield;

namespace {

std::size_t pixels_under_cells(const BinaryMask& mask) { return mask.count(); }

// Conformity check: collect every element edge; an edge shared by two
// elements must appear exactly twice with identical node ids.
void check_conformity(const Mesh& mesh) {
  std::map<std::pair<int, int>, int> edge_count;
  for (const Element& e : mesh.elements) {
    const int n = e.node_count();
    for (int i = 0; i < n; ++i) {
      int a = e.ids[i], b = e.ids[(i + 1) % n];
      if (a > b) std::swap(a, b);
      edge_count[{a, b}] += 1;
    }
  }
  for (const auto& [edge, count] : edge_count) {
    CHECK(count <= 2);
  }
}

double total_element_area(const Mesh& mesh) {
  double area = 0.0;
  for (const Element& e : mesh.elements) area += element_area(mesh, e);
  return area;
}

}  // namespace

TEST_CASE("full_grid") {
  SECTION("100x100 with cell 50: 3x3 nodes, 4 cells") {
    const FullGrid g = full_grid(100, 100, {50, 0, 0});
    CHECK(g.nodes.size() == 9);
    CHECK(g.cells.size() == 4);
    CHECK(g.xs == std::vector<int>{0, 50, 100});
  }
  SECTION("100x80 with cell 50: bottom row of cells has height 30") {
    const FullGrid g = full_grid(100, 80, {50, 0, 0});
    CHECK(g.ys == std::vector<int>{0, 50, 80});
    CHECK(g.cells.back().y1 - g.cells.back().y0 == 30);
  }
  SECTION("node count formula on random sizes") {
    Rng rng(3);
    for (int trial = 0; trial < 200; ++trial) {
      const int w = 20 + int(rng.index(400));
      const int h = 20 + int(rng.index(300));
      const int c = 8 + int(rng.index(60));
      const FullGrid g = full_grid(w, h, {c, 0, 0});
      const auto expect = [](int dim, int cell) { return (dim + cell - 1) / cell + 1; };
      CHECK(int(g.nodes.size()) == expect(w, c) * expect(h, c));
      CHECK(int(g.cells.size()) == (expect(w, c) - 1) * (expect(h, c) - 1));
    }
  }
}

TEST_CASE("classify_cells") {
  const FullGrid g = full_grid(100, 100, {25, 0, 0});
  SECTION("all-true mask: all inside") {
    const auto labels = classify_cells(g, BinaryMask(100, 100, true));
    for (auto l : labels) CHECK(l == CellLabel::Inside);
  }
  SECTION("all-false mask: all outside") {
    const auto labels = classify_cells(g, BinaryMask(100, 100, false));
    for (auto l : labels) CHECK(l == CellLabel::Outside);
  }
  SECTION("half-plane mask labels straddling cells boundary") {
    BinaryMask m(100, 100);
    for (int y = 0; y < 100; ++y)
      for (int x = 0; x < 100; ++x) m.at(x, y) = x < 60 ? 1 : 0;
    const auto labels = classify_cells(g, m);
    for (std::size_t c = 0; c < g.cells.size(); ++c) {
      const GridCell& cell = g.cells[c];
      // per-pixel oracle
      bool all = true, any = false;
      for (int y = cell.y0; y < cell.y1; ++y)
        for (int x = cell.x0; x < cell.x1; ++x) (m.at(x, y) ? any : all) = m.at(x, y) ? true : false;
      all = true;
      any = false;
      for (int y = cell.y0; y < cell.y1; ++y)
        for (int x = cell.x0; x < cell.x1; ++x) {
          if (m.at(x, y))
            any = true;
          else
            all = false;
        }
      if (!any)
        CHECK(labels[c] == CellLabel::Outside);
      else if (labels[c] == CellLabel::Inside)
        CHECK(all);
      if (cell.x0 < 60 && cell.x1 > 60) CHECK(labels[c] == CellLabel::Boundary);
    }
  }
}

TEST_CASE("trace_boundary") {
  SECTION("corner-to-corner cut yields a half-cell triangle") {
    // mask true strictly below the anti-diagonal of the cell
    BinaryMask m(40, 40);
    for (int y = 0; y < 40; ++y)
      for (int x = 0; x < 40; ++x) m.at(x, y) = (x + y >= 40) ? 1 : 0;
    const GridCell cell{0, 0, 0, 0, 40, 40};
    const auto polys = trace_boundary(cell, m);
    REQUIRE(polys.size() == 1);
    CHECK(polys[0].size() == 3);
    CHECK(polygon_area(polys[0]) == Catch::Approx(0.5 * 40 * 40).epsilon(0.05));
  }
  SECTION("vertical mask edge yields a rectangle matching the pixel count") {
    BinaryMask m(40, 40);
    for (int y = 0; y < 40; ++y)
      for (int x = 0; x < 23; ++x) m.at(x, y) = 1;
    const GridCell cell{0, 0, 0, 0, 40, 40};
    const auto polys = trace_boundary(cell, m);
    REQUIRE(polys.size() == 1);
    REQUIRE(polys[0].size() == 4);
    std::size_t count = 0;
    for (int y = 0; y < 40; ++y)
      for (int x = 0; x < 40; ++x) count += m.at(x, y);
    CHECK(polygon_area(polys[0]) == Catch::Approx(double(count)).margin(0.03 * 1600));
  }
  SECTION("oblique edge yields a trapezoid matching the pixel count within 2%") {
    BinaryMask m(40, 40);
    for (int y = 0; y < 40; ++y)
      for (int x = 0; x < 40; ++x) m.at(x, y) = (y > 5 + 0.4 * x) ? 1 : 0;
    const GridCell cell{0, 0, 0, 0, 40, 40};
    const auto polys = trace_boundary(cell, m);
    REQUIRE(polys.size() == 1);
    std::size_t count = 0;
    for (int y = 0; y < 40; ++y)
      for (int x = 0; x < 40; ++x) count += m.at(x, y);
    CHECK(polygon_area(polys[0]) == Catch::Approx(double(count)).epsilon(0.02));
  }
}

TEST_CASE("triangulate") {
  SECTION("triangle passes through unchanged") {
    const Polygon tri{{0, 0}, {10, 0}, {0, 10}};
    const auto tris = triangulate(tri);
    REQUIRE(tris.size() == 1);
    CHECK(tris[0][0] == tri[0]);
  }
  SECTION("convex quad splits into two triangles with exact area sum") {
    const Polygon quad{{0, 0}, {10, 0}, {12, 9}, {-1, 8}};
    const auto tris = triangulate(quad);
    REQUIRE(tris.size() == 2);
    double sum = 0.0;
    for (const auto& t : tris) sum += 0.5 * doubled_area(t[0], t[1], t[2]);
    CHECK(sum == Catch::Approx(oracle::shoelace(quad)).epsilon(1e-12));
  }
  SECTION("pentagon splits into three triangles, shoelace area sum") {
    const Polygon pent{{0, 0}, {8, 0}, {11, 5}, {4, 9}, {-2, 5}};
    const auto tris = triangulate(pent);
    REQUIRE(tris.size() == 3);
    double sum = 0.0;
    for (const auto& t : tris) {
      const double a = 0.5 * doubled_area(t[0], t[1], t[2]);
      CHECK(a > 0.0);
      sum += a;
    }
    CHECK(sum == Catch::Approx(oracle::shoelace(pent)).epsilon(1e-9));
  }
  SECTION("self-intersecting polygon is rejected") {
    const Polygon bowtie{{0, 0}, {10, 10}, {10, 0}, {0, 10}};
    CHECK_THROWS_AS(triangulate(bowtie), Error);
  }
}

TEST_CASE("mesh_structure") {
  SECTION("full-true mask yields rectangles only") {
    const auto res = mesh_structure(BinaryMask(120, 90, true), {30, 0, 0});
    for (const Element& e : res.mesh.elements) CHECK(e.kind == ElementKind::Rect4);
    CHECK(res.mesh.elements.size() == 4 * 3);
    CHECK(total_element_area(res.mesh) == Catch::Approx(120.0 * 90.0));
  }
  SECTION("grid-aligned rectangular mask yields rectangles only") {
    BinaryMask m(200, 150);
    for (int y = 30; y < 120; ++y)
      for (int x = 30; x < 180; ++x) m.at(x, y) = 1;
    const auto res = mesh_structure(m, {30, 0, 0});
    // dilation pushes the boundary 1 px past the grid lines, so boundary
    // cells appear, but interior cells must all be rectangles
    int rects = 0;
    for (std::size_t i = 0; i < res.mesh.elements.size(); ++i)
      if (res.mesh.interior[i]) {
        CHECK(res.mesh.elements[i].kind == ElementKind::Rect4);
        ++rects;
      }
    CHECK(rects >= 2 * 4);
    check_conformity(res.mesh);
  }
  SECTION("node ids are stable across reruns") {
    Rng rng(55);
    const BinaryMask m = oracle::random_blob_mask(300, 200, rng);
    const auto r1 = mesh_structure(m, {24, 0, 0});
    const auto r2 = mesh_structure(m, {24, 0, 0});
    REQUIRE(r1.mesh.nodes.size() == r2.mesh.nodes.size());
    for (std::size_t i = 0; i < r1.mesh.nodes.size(); ++i) {
      CHECK(r1.mesh.nodes[i].id == r2.mesh.nodes[i].id);
      CHECK(r1.mesh.nodes[i].position == r2.mesh.nodes[i].position);
    }
  }
  SECTION("element areas sum to the dilated mask area within 2% on random masks") {
    Rng rng(123);
    for (int trial = 0; trial < 50; ++trial) {
      const BinaryMask m = oracle::random_blob_mask(260, 200, rng);
      if (m.count() < 40 * 40) continue;
      const MeshResult res = mesh_structure(m, {20, 0, 0});
      const double pixel_area = double(dilate3x3(m).count());
      CHECK(total_element_area(res.mesh) == Catch::Approx(pixel_area).epsilon(0.02));
      check_conformity(res.mesh);
    }
  }
  SECTION("empty and undersized masks are rejected") {
    CHECK_THROWS_AS(mesh_structure(BinaryMask(100, 100, false), {25, 0, 0}), Error);
    BinaryMask tiny(100, 100);
    for (int y = 40; y < 50; ++y)
      for (int x = 40; x < 50; ++x) tiny.at(x, y) = 1;
    CHECK_THROWS_AS(mesh_structure(tiny, {25, 0, 0}), Error);
    CHECK_THROWS_AS(mesh_structure(BinaryMask(100, 100, true), {4, 0, 0}), Error);
  }
}

TEST_CASE("mesh JSON round-trip") {
  Rng rng(77);
  const BinaryMask m = oracle::random_blob_mask(240, 180, rng);
  const auto res = mesh_structure(m, {22, 0, 0});
  const auto j = mesh_to_json(res.mesh);
  const Mesh back = mesh_from_json(nlohmann::json::parse(j.dump()));
  REQUIRE(back.nodes.size() == res.mesh.nodes.size());
  REQUIRE(back.elements.size() == res.mesh.elements.size());
  for (std::size_t i = 0; i < back.nodes.size(); ++i)
    CHECK(back.nodes[i].position == res.mesh.nodes[i].position);
  for (std::size_t i = 0; i < back.elements.size(); ++i) {
    CHECK(back.elements[i].kind == res.mesh.elements[i].kind);
    CHECK(back.elements[i].ids == res.mesh.elements[i].ids);
    CHECK(back.interior[i] == res.mesh.interior[i]);
  }
}
