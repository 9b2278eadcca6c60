#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "radarsim/grid.hpp"
#include "radarsim/rng.hpp"

using namespace radarsim;

namespace {

PolarGridSpec tiny_spec() {
  PolarGridSpec s;
  s.num_azimuths = 8;
  s.num_range_bins = 4;
  s.range_resolution = 0.5;
  return s;
}

}  // namespace

TEST_CASE("height scaling maps the interval endpoints and midpoint", "[polargrid]") {
  const PolarGridSpec spec;
  CHECK(scale_height(5.2, spec) == Catch::Approx(1.0).margin(1e-12));
  CHECK(scale_height(-2.2, spec) == Catch::Approx(-1.0).margin(1e-12));
  CHECK(scale_height(1.5, spec) == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("height scaling clamps out-of-interval inputs", "[polargrid]") {
  const PolarGridSpec spec;
  CHECK(scale_height(100.0, spec) == Catch::Approx(1.0));
  CHECK(scale_height(-100.0, spec) == Catch::Approx(-1.0));
  CHECK_THROWS_AS(scale_height(std::nan(""), spec), std::invalid_argument);
}

TEST_CASE("unscale_height inverts scale_height inside the interval", "[polargrid]") {
  const PolarGridSpec spec;
  Rng rng = Rng::stream(11, "scale-roundtrip");
  for (int k = 0; k < 100; ++k) {
    const double h = spec.height_min + rng.uniform() * (spec.height_max - spec.height_min);
    CHECK(unscale_height(scale_height(h, spec), spec) == Catch::Approx(h).margin(1e-12));
  }
  CHECK_THROWS_AS(unscale_height(1.0001, spec), std::invalid_argument);
  CHECK_THROWS_AS(unscale_height(-1.0001, spec), std::invalid_argument);
}

TEST_CASE("grid spec validation rejects degenerate geometry", "[polargrid]") {
  PolarGridSpec s;
  s.num_azimuths = 0;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  s = PolarGridSpec{};
  s.range_resolution = 0.0;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  s = PolarGridSpec{};
  s.height_min = s.height_max;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  s = PolarGridSpec{};
  s.azimuth_span_deg = 361.0;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  CHECK_NOTHROW(PolarGridSpec{}.validate());
}

TEST_CASE("bin_pointcloud places a single point in its polar cell", "[polargrid]") {
  const PolarGridSpec spec;
  // Ground-frame height 1.0 m means sensor-frame z = 1.0 - sensor_height.
  PointCloud cloud;
  cloud.points.push_back({10.0, 0.0, 1.0 - spec.sensor_height});
  const PartialElevationMap m = bin_pointcloud(cloud, spec);
  const int j = static_cast<int>(std::floor(10.0 / spec.range_resolution));
  CHECK(j == 28);
  CHECK(m.mask.at(0, j) == 1.0f);
  CHECK(m.heights.at(0, j) == Catch::Approx(scale_height(1.0, spec)).margin(1e-6));
  int measured = 0;
  for (float v : m.mask.v) measured += v != 0.0f;
  CHECK(measured == 1);
  CHECK_NOTHROW(m.validate());
}

TEST_CASE("bin_pointcloud keeps the per-cell maximum height", "[polargrid]") {
  const PolarGridSpec spec;
  PointCloud cloud;
  cloud.points.push_back({10.0, 0.0, 0.5 - spec.sensor_height});
  cloud.points.push_back({10.1, 0.0, 2.0 - spec.sensor_height});
  cloud.points.push_back({10.2, 0.0, 1.0 - spec.sensor_height});
  const PartialElevationMap m = bin_pointcloud(cloud, spec);
  CHECK(m.heights.at(0, 28) == Catch::Approx(scale_height(2.0, spec)).margin(1e-6));
}

TEST_CASE("bin_pointcloud discards points outside the sensor limits", "[polargrid]") {
  const PolarGridSpec spec;
  PointCloud cloud;
  // Elevation -45 deg is below the field of view floor of -40 deg.
  cloud.points.push_back({10.0, 0.0, -10.0});
  // Beyond the last range bin.
  cloud.points.push_back({spec.max_range_m() + 1.0, 0.0, 0.0});
  const PartialElevationMap m = bin_pointcloud(cloud, spec);
  for (float v : m.mask.v) CHECK(v == 0.0f);

  cloud.points.push_back({std::nan(""), 0.0, 0.0});
  CHECK_THROWS_AS(bin_pointcloud(cloud, spec), std::invalid_argument);
}

TEST_CASE("azimuth binning wraps on a full-circle grid", "[polargrid]") {
  const PolarGridSpec spec;
  const double deg = std::numbers::pi / 180.0;
  CHECK(detail::azimuth_bin(0.0, spec) == 0);
  CHECK(detail::azimuth_bin(0.45 * deg, spec) == 0);
  CHECK(detail::azimuth_bin(359.55 * deg, spec) == 399);
  CHECK(detail::azimuth_bin(360.45 * deg, spec) == 0);
  CHECK(detail::azimuth_bin(-0.45 * deg, spec) == 399);

  PolarGridSpec half = spec;
  half.azimuth_span_deg = 180.0;
  half.num_azimuths = 200;
  CHECK(detail::azimuth_bin(90.45 * deg, half) == 100);
  CHECK(detail::azimuth_bin(270.0 * deg, half) == -1);
}

TEST_CASE("partial map validation enforces the sentinel contract", "[polargrid]") {
  const PolarGridSpec spec = tiny_spec();
  PartialElevationMap m(spec);
  CHECK_NOTHROW(m.validate());

  m.mask.at(0, 0) = 0.5f;
  CHECK_THROWS_AS(m.validate(), std::invalid_argument);

  m = PartialElevationMap(spec);
  m.heights.at(0, 0) = 0.3f;  // unmasked cell must stay at the sentinel
  CHECK_THROWS_AS(m.validate(), std::invalid_argument);

  m = PartialElevationMap(spec);
  m.mask.at(0, 0) = 1.0f;
  m.heights.at(0, 0) = 2.0f;
  CHECK_THROWS_AS(m.validate(), std::invalid_argument);

  m.heights.at(0, 0) = 0.25f;
  CHECK_NOTHROW(m.validate());
}

TEST_CASE("frame validation rejects out-of-range cells", "[polargrid]") {
  const PolarGridSpec spec = tiny_spec();
  RadarFrame f(spec);
  CHECK_NOTHROW(f.validate());
  f.power.at(1, 1) = 1.5f;
  CHECK_THROWS_AS(f.validate(), std::invalid_argument);

  ElevationMap w(spec);
  CHECK_NOTHROW(w.validate());
  w.heights.at(2, 3) = -1.5f;
  CHECK_THROWS_AS(w.validate(), std::invalid_argument);
}

TEST_CASE("cartesian raster covers the disk and leaves sentinel corners", "[polargrid]") {
  const PolarGridSpec spec = tiny_spec();  // max range 2 m
  const double ppm = 10.0;
  Grid values(spec.num_azimuths, spec.num_range_bins, 0.75f);
  const RasterImage img = cartesian_raster(values, spec, ppm);
  CHECK(img.size == static_cast<int>(std::ceil(2.0 * spec.max_range_m() * ppm)));
  CHECK(img.size == 40);

  // Corners lie beyond max range, the center is inside range bin 0.
  CHECK(img.at(0, 0) == -1.0f);
  CHECK(img.at(0, img.size - 1) == -1.0f);
  CHECK(img.at(img.size - 1, 0) == -1.0f);
  CHECK(img.at(img.size - 1, img.size - 1) == -1.0f);
  CHECK(img.at(img.size / 2, img.size / 2) == 0.75f);

  // Every pixel is either the sentinel or the constant fill.
  for (float v : img.v) CHECK((v == -1.0f || v == 0.75f));
}

TEST_CASE("cartesian raster picks the right range ring", "[polargrid]") {
  const PolarGridSpec spec = tiny_spec();
  Grid values(spec.num_azimuths, spec.num_range_bins);
  for (int i = 0; i < values.rows; ++i)
    for (int j = 0; j < values.cols; ++j) values.at(i, j) = static_cast<float>(j);
  const RasterImage img = cartesian_raster(values, spec, 10.0);
  // Pixel centered at (0.05, 0.05): r = 0.0707 -> bin 0.
  CHECK(img.at(19, 20) == 0.0f);
  // Pixel centered at (1.75, 0.05): r = 1.75 -> bin 3.
  CHECK(img.at(19, 37) == 3.0f);
  CHECK_THROWS_AS(cartesian_raster(values, spec, 0.0), std::invalid_argument);
}
