#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

namespace radarsim {

// Geometry of the polar sensor grid. Azimuth bin i covers
// [i, i+1) * azimuth_span/num_azimuths degrees counter-clockwise from the
// +x axis; range bin j covers [j, j+1) * range_resolution meters. Heights are
// stored scaled: [height_min, height_max] maps affinely onto [-1, 1].
struct PolarGridSpec {
  int num_azimuths = 400;
  int num_range_bins = 471;
  double range_resolution = 0.35;     // meters per bin
  double azimuth_span_deg = 360.0;    // full field of view
  double height_min = -2.2;           // meters
  double height_max = 5.2;            // meters
  double sensor_height = 1.97;        // meters above the ground plane
  double elevation_fov_low_deg = -40.0;
  double elevation_fov_high_deg = 1.8;

  void validate() const {
    if (num_azimuths < 1) throw std::invalid_argument("grid: num_azimuths must be >= 1");
    if (num_range_bins < 1) throw std::invalid_argument("grid: num_range_bins must be >= 1");
    if (!(range_resolution > 0)) throw std::invalid_argument("grid: range_resolution must be > 0");
    if (!(azimuth_span_deg > 0) || azimuth_span_deg > 360.0)
      throw std::invalid_argument("grid: azimuth_span must be in (0, 360]");
    if (!(height_min < height_max)) throw std::invalid_argument("grid: height_min must be < height_max");
    if (!(elevation_fov_low_deg < elevation_fov_high_deg))
      throw std::invalid_argument("grid: elevation_fov must be an increasing pair");
  }

  double max_range_m() const { return num_range_bins * range_resolution; }
  double azimuth_bin_deg() const { return azimuth_span_deg / num_azimuths; }

  bool operator==(const PolarGridSpec&) const = default;
};

// Row-major float grid, azimuth as the outer (row) dimension.
struct Grid {
  int rows = 0;
  int cols = 0;
  std::vector<float> v;

  Grid() = default;
  Grid(int rows_, int cols_, float fill = 0.0f)
      : rows(rows_), cols(cols_), v(static_cast<size_t>(rows_) * cols_, fill) {}

  float& at(int i, int j) { return v[static_cast<size_t>(i) * cols + j]; }
  float at(int i, int j) const { return v[static_cast<size_t>(i) * cols + j]; }
  size_t size() const { return v.size(); }

  bool operator==(const Grid&) const = default;
};

namespace detail {
inline void check_dims(const Grid& g, const PolarGridSpec& spec, const char* what) {
  if (g.rows != spec.num_azimuths || g.cols != spec.num_range_bins)
    throw std::invalid_argument(std::string(what) + ": grid dimensions do not match spec");
}
inline void check_range(const Grid& g, const char* what) {
  for (float x : g.v)
    if (!(x >= -1.0f && x <= 1.0f))
      throw std::invalid_argument(std::string(what) + ": cell outside [-1,1]");
}
}  // namespace detail

// Per-cell radar power in [-1, 1].
struct RadarFrame {
  PolarGridSpec grid;
  Grid power;

  RadarFrame() = default;
  explicit RadarFrame(const PolarGridSpec& spec, float fill = 0.0f)
      : grid(spec), power(spec.num_azimuths, spec.num_range_bins, fill) {}

  void validate() const {
    grid.validate();
    detail::check_dims(power, grid, "RadarFrame");
    detail::check_range(power, "RadarFrame");
  }
};

// Dense per-cell scaled surface height in [-1, 1].
struct ElevationMap {
  PolarGridSpec grid;
  Grid heights;

  ElevationMap() = default;
  explicit ElevationMap(const PolarGridSpec& spec, float fill = 0.0f)
      : grid(spec), heights(spec.num_azimuths, spec.num_range_bins, fill) {}

  void validate() const {
    grid.validate();
    detail::check_dims(heights, grid, "ElevationMap");
    detail::check_range(heights, "ElevationMap");
  }
};

// Masked height grid. Unmeasured cells carry the sentinel -1 and mask 0.
struct PartialElevationMap {
  PolarGridSpec grid;
  Grid heights;
  Grid mask;

  PartialElevationMap() = default;
  explicit PartialElevationMap(const PolarGridSpec& spec)
      : grid(spec),
        heights(spec.num_azimuths, spec.num_range_bins, -1.0f),
        mask(spec.num_azimuths, spec.num_range_bins, 0.0f) {}

  void validate() const {
    grid.validate();
    detail::check_dims(heights, grid, "PartialElevationMap");
    detail::check_dims(mask, grid, "PartialElevationMap");
    for (size_t k = 0; k < mask.v.size(); ++k) {
      if (mask.v[k] != 0.0f && mask.v[k] != 1.0f)
        throw std::invalid_argument("PartialElevationMap: mask not in {0,1}");
      if (mask.v[k] == 0.0f) {
        if (heights.v[k] != -1.0f)
          throw std::invalid_argument("PartialElevationMap: unmasked cell must hold -1");
      } else if (!(heights.v[k] >= -1.0f && heights.v[k] <= 1.0f)) {
        throw std::invalid_argument("PartialElevationMap: masked cell outside [-1,1]");
      }
    }
  }
};

struct Point {
  double x = 0, y = 0, z = 0;  // sensor frame: sensor at origin, z up
};

struct PointCloud {
  std::vector<Point> points;
};

enum class Occupancy : uint8_t { free_space = 0, occupied = 1, unknown = 2 };

struct OccupancyGrid {
  int rows = 0;
  int cols = 0;
  std::vector<Occupancy> labels;

  OccupancyGrid() = default;
  OccupancyGrid(int rows_, int cols_, Occupancy fill = Occupancy::unknown)
      : rows(rows_), cols(cols_), labels(static_cast<size_t>(rows_) * cols_, fill) {}

  Occupancy& at(int i, int j) { return labels[static_cast<size_t>(i) * cols + j]; }
  Occupancy at(int i, int j) const { return labels[static_cast<size_t>(i) * cols + j]; }

  bool operator==(const OccupancyGrid&) const = default;
};

// Affine [height_min, height_max] -> [-1, 1]. Out-of-interval heights clamp
// to the endpoints; bounded coding tolerates outliers.
inline double scale_height(double h_meters, const PolarGridSpec& spec) {
  if (!std::isfinite(h_meters)) throw std::invalid_argument("scale_height: non-finite input");
  const double h = std::clamp(h_meters, spec.height_min, spec.height_max);
  return 2.0 * (h - spec.height_min) / (spec.height_max - spec.height_min) - 1.0;
}

inline double unscale_height(double s, const PolarGridSpec& spec) {
  if (!std::isfinite(s) || s < -1.0 || s > 1.0)
    throw std::invalid_argument("unscale_height: input outside [-1,1]");
  return spec.height_min + (s + 1.0) * 0.5 * (spec.height_max - spec.height_min);
}

namespace detail {
// Azimuth bin for an angle in radians, counter-clockwise from +x.
// Returns -1 when the angle falls outside a partial span.
inline int azimuth_bin(double phi_rad, const PolarGridSpec& spec) {
  const double two_pi = 2.0 * std::numbers::pi;
  double phi = std::fmod(phi_rad, two_pi);
  if (phi < 0) phi += two_pi;
  const double span_rad = spec.azimuth_span_deg * std::numbers::pi / 180.0;
  const double bin_rad = span_rad / spec.num_azimuths;
  int i = static_cast<int>(std::floor(phi / bin_rad));
  if (i >= spec.num_azimuths) {
    if (spec.azimuth_span_deg >= 360.0 - 1e-12) return i % spec.num_azimuths;
    return -1;
  }
  return i;
}
}  // namespace detail

// Max-height rasterization of a sensor-frame point cloud. Points outside the
// elevation field of view or beyond max range are discarded; surviving cells
// hold the scaled maximum ground-frame height (z + sensor_height) and mask 1.
inline PartialElevationMap bin_pointcloud(const PointCloud& cloud, const PolarGridSpec& spec) {
  spec.validate();
  PartialElevationMap out(spec);
  const double neg_inf = -std::numeric_limits<double>::infinity();
  std::vector<double> best(out.heights.size(), neg_inf);
  for (const Point& p : cloud.points) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z))
      throw std::invalid_argument("bin_pointcloud: non-finite point");
    const double r = std::hypot(p.x, p.y);
    const int j = static_cast<int>(std::floor(r / spec.range_resolution));
    if (j >= spec.num_range_bins) continue;
    const double elev_deg = std::atan2(p.z, r) * 180.0 / std::numbers::pi;
    if (elev_deg < spec.elevation_fov_low_deg || elev_deg > spec.elevation_fov_high_deg) continue;
    const int i = detail::azimuth_bin(std::atan2(p.y, p.x), spec);
    if (i < 0) continue;
    const size_t k = static_cast<size_t>(i) * spec.num_range_bins + j;
    best[k] = std::max(best[k], p.z + spec.sensor_height);
  }
  for (size_t k = 0; k < best.size(); ++k) {
    if (best[k] != neg_inf) {
      out.heights.v[k] = static_cast<float>(scale_height(best[k], spec));
      out.mask.v[k] = 1.0f;
    }
  }
  return out;
}

// Square nearest-cell raster of a polar grid, sensor at the image center,
// +x right and +y up. Pixels beyond max range take the sentinel -1.
struct RasterImage {
  int size = 0;  // width == height
  std::vector<float> v;

  float at(int row, int col) const { return v[static_cast<size_t>(row) * size + col]; }
};

inline RasterImage cartesian_raster(const Grid& values, const PolarGridSpec& spec,
                                    double pixels_per_meter) {
  spec.validate();
  detail::check_dims(values, spec, "cartesian_raster");
  if (!(pixels_per_meter > 0))
    throw std::invalid_argument("cartesian_raster: pixels_per_meter must be > 0");
  const double max_r = spec.max_range_m();
  RasterImage img;
  img.size = static_cast<int>(std::ceil(2.0 * max_r * pixels_per_meter));
  img.v.assign(static_cast<size_t>(img.size) * img.size, -1.0f);
  const double m_per_px = 1.0 / pixels_per_meter;
  for (int row = 0; row < img.size; ++row) {
    const double y = max_r - (row + 0.5) * m_per_px;
    for (int col = 0; col < img.size; ++col) {
      const double x = (col + 0.5) * m_per_px - max_r;
      const double r = std::hypot(x, y);
      if (r >= max_r) continue;
      const int j = static_cast<int>(std::floor(r / spec.range_resolution));
      const int i = detail::azimuth_bin(std::atan2(y, x), spec);
      if (i < 0 || j >= spec.num_range_bins) continue;
      img.v[static_cast<size_t>(row) * img.size + col] = values.at(i, j);
    }
  }
  return img;
}

inline RasterImage cartesian_raster(const RadarFrame& f, double ppm) {
  return cartesian_raster(f.power, f.grid, ppm);
}
inline RasterImage cartesian_raster(const ElevationMap& m, double ppm) {
  return cartesian_raster(m.heights, m.grid, ppm);
}

}  // namespace radarsim
