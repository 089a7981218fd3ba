#include <catch2/catch_amalgamated.hpp>

#include "oracles.hpp"
#include "qsm/volume.hpp"

using namespace qsm;

TEST_CASE("GridSpec rejects degenerate shapes") {
  CHECK_THROWS_AS(GridSpec({0, 4, 4}, {1, 1, 1}), QsmError);
  CHECK_THROWS_AS(GridSpec({4, 4, 4}, {0.0, 1, 1}), QsmError);
  CHECK_THROWS_AS(GridSpec({4, 4, 4}, {-1.0, 1, 1}), QsmError);
  CHECK_NOTHROW(GridSpec({2, 1, 1}, {1, 1, 1}));
}

TEST_CASE("Storage order is x-fastest") {
  GridSpec g({3, 4, 5}, {1, 1, 1});
  CHECK(g.index(0, 0, 0) == 0);
  CHECK(g.index(1, 0, 0) == 1);
  CHECK(g.index(0, 1, 0) == 3);
  CHECK(g.index(0, 0, 1) == 12);
  CHECK(g.index(2, 3, 4) == g.voxels() - 1);
}

TEST_CASE("ScalarVolume validates its samples") {
  GridSpec g({2, 2, 2}, {1, 1, 1});
  CHECK_THROWS_AS(ScalarVolume(g, std::vector<double>(7, 0.0)), QsmError);
  std::vector<double> bad(8, 0.0);
  bad[3] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(ScalarVolume(g, bad), QsmError);
  bad[3] = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(ScalarVolume(g, bad), QsmError);
}

TEST_CASE("RoiMask accepts only 0/1 and counts members") {
  GridSpec g({2, 2, 1}, {1, 1, 1});
  CHECK_THROWS_AS(RoiMask(g, {0, 1, 2, 0}), QsmError);
  RoiMask m(g, {0, 1, 1, 0});
  CHECK(m.count() == 2);
}

TEST_CASE("Boundary of a full grid is its outer shell") {
  GridSpec g({8, 8, 8}, {1, 1, 1});
  RoiMask all(g, std::vector<std::uint8_t>(g.voxels(), 1));
  RoiMask b = boundary_set(all);
  CHECK(b.count() == 8 * 8 * 8 - 6 * 6 * 6);  // 296
}

TEST_CASE("Boundary of a 3x3x3 block leaves only the center") {
  GridSpec g({5, 5, 5}, {1, 1, 1});
  RoiMask m(g);
  for (int k = 1; k <= 3; ++k)
    for (int j = 1; j <= 3; ++j)
      for (int i = 1; i <= 3; ++i) m.member[g.index(i, j, k)] = 1;
  RoiMask b = boundary_set(m);
  CHECK(b.count() == 26);
  CHECK(!b.at(2, 2, 2));
  CHECK(b.at(1, 1, 1));
}

TEST_CASE("band_mask matches the brute-force Chebyshev distance") {
  GridSpec g({9, 8, 7}, {1, 1, 1});
  RoiMask m(g);
  // ellipsoidal blob plus an attached lump, not symmetric on purpose
  for (int k = 0; k < 7; ++k)
    for (int j = 0; j < 8; ++j)
      for (int i = 0; i < 9; ++i) {
        double a = (i - 4.2) / 3.4, b = (j - 3.4) / 2.8, c = (k - 3.1) / 2.5;
        if (a * a + b * b + c * c <= 1.0) m.member[g.index(i, j, k)] = 1;
      }
  m.member[g.index(7, 4, 3)] = 1;
  auto dist = oracle::brute_chebyshev_to_boundary(m);
  for (int k : {0, 1, 2, 3}) {
    RoiMask band = band_mask(m, k);
    for (std::size_t i = 0; i < g.voxels(); ++i) {
      bool expected = m.member[i] && dist[i] <= k;
      INFO("k=" << k << " i=" << i);
      CHECK(bool(band.member[i]) == expected);
    }
  }
}

TEST_CASE("band_mask at k=0 is the boundary") {
  GridSpec g({6, 6, 6}, {1, 1, 1});
  RoiMask m(g);
  for (int k = 1; k < 5; ++k)
    for (int j = 1; j < 5; ++j)
      for (int i = 1; i < 5; ++i) m.member[g.index(i, j, k)] = 1;
  RoiMask b0 = band_mask(m, 0);
  RoiMask bs = boundary_set(m);
  CHECK(b0.member == bs.member);
}

TEST_CASE("pad_zero puts the volume in the low corner and crop_corner undoes it") {
  GridSpec g({3, 2, 2}, {1.0, 0.5, 2.0});
  ScalarVolume v(g, oracle::random_data(g.voxels(), 11));
  ScalarVolume p = pad_zero(v, 2);
  CHECK(p.grid.dims == std::array<int, 3>{6, 4, 4});
  CHECK(p.grid.spacing == g.spacing);
  CHECK(p.at(1, 1, 1) == v.at(1, 1, 1));
  CHECK(p.at(3, 0, 0) == 0.0);
  CHECK(p.at(0, 2, 0) == 0.0);
  double tail = 0.0;
  for (std::size_t i = 0; i < p.data.size(); ++i) tail += std::fabs(p.data[i]);
  double orig = 0.0;
  for (std::size_t i = 0; i < v.data.size(); ++i) orig += std::fabs(v.data[i]);
  CHECK(tail == orig);  // nothing outside the corner block
  ScalarVolume back = crop_corner(p, g);
  CHECK(back.data == v.data);
}

TEST_CASE("pad/crop argument validation") {
  GridSpec g({3, 3, 3}, {1, 1, 1});
  ScalarVolume v(g);
  CHECK_THROWS_AS(pad_zero(v, 1), QsmError);
  CHECK_THROWS_AS(crop_corner(v, GridSpec({4, 3, 3}, {1, 1, 1})), QsmError);
  CHECK_THROWS_AS(crop_corner(v, GridSpec({2, 2, 2}, {2, 1, 1})), QsmError);
}
