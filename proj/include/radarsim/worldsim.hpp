#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "radarsim/grid.hpp"
#include "radarsim/io.hpp"
#include "radarsim/rng.hpp"

#include <nlohmann/json.hpp>

namespace radarsim {

// Obstacle footprints live directly in polar coordinates: an azimuth arc
// crossed with a range slab, raised to a fixed height above ground. Closed
// intervals; a cell is covered when the footprint intersects the cell's
// half-open bin interval.
struct PolarObstacle {
  double az_lo_deg = 0, az_hi_deg = 0;  // may wrap past the span end
  double r_lo_m = 0, r_hi_m = 0;
  double height_m = 0;  // above ground
};

struct ObstacleKindRange {
  double az_width_min_deg, az_width_max_deg;
  double depth_min_m, depth_max_m;
  double height_min_m, height_max_m;
};

struct SceneParams {
  double ground_height = 0.0;  // meters, flat base level
  int obstacle_count_min = 4;
  int obstacle_count_max = 10;
  ObstacleKindRange box{4.0, 12.0, 0.7, 3.5, 0.8, 2.2};        // vehicle-like
  ObstacleKindRange cylinder{1.0, 3.0, 0.35, 1.0, 2.0, 5.0};   // pole-like
  ObstacleKindRange wall{20.0, 60.0, 0.35, 0.7, 1.0, 3.0};     // wall segment
  double placement_range_min_m = 3.0;
  double placement_range_max_m = 19.0;
  double ground_jitter_m = 0.0;  // uniform +- jitter applied per scene
  uint64_t rng_seed = 0;

  void validate(const PolarGridSpec& spec) const {
    if (obstacle_count_min < 0 || obstacle_count_max < obstacle_count_min)
      throw std::invalid_argument("scene: obstacle_count range is empty");
    for (const ObstacleKindRange* k : {&box, &cylinder, &wall}) {
      if (k->az_width_max_deg < k->az_width_min_deg || k->depth_max_m < k->depth_min_m ||
          k->height_max_m < k->height_min_m)
        throw std::invalid_argument("scene: obstacle kind range is empty");
      if (ground_height + k->height_max_m > spec.height_max ||
          ground_height + ground_jitter_m > spec.height_max ||
          ground_height - ground_jitter_m < spec.height_min)
        throw std::invalid_argument("scene: heights exceed the grid height interval");
    }
    if (placement_range_max_m < placement_range_min_m)
      throw std::invalid_argument("scene: placement range is empty");
  }
};

// Marks every cell whose bin interval intersects the obstacle footprint,
// raising it to ground + obstacle height (monotone max against prior content).
inline void rasterize_obstacle(ElevationMap& map, const PolarObstacle& ob, double ground_m) {
  const PolarGridSpec& spec = map.grid;
  const double bin_deg = spec.azimuth_bin_deg();
  const double top = ground_m + ob.height_m;
  const int j_lo = std::max(0, static_cast<int>(std::floor(ob.r_lo_m / spec.range_resolution)));
  const int j_hi = std::min(spec.num_range_bins - 1,
                            static_cast<int>(std::floor(ob.r_hi_m / spec.range_resolution)));
  // Azimuth arc may wrap; walk bins from the one containing az_lo.
  const double arc = ob.az_hi_deg - ob.az_lo_deg;
  if (arc < 0) throw std::invalid_argument("rasterize_obstacle: az interval is empty");
  double lo = std::fmod(ob.az_lo_deg, spec.azimuth_span_deg);
  if (lo < 0) lo += spec.azimuth_span_deg;
  const int first = static_cast<int>(std::floor(lo / bin_deg));
  const int n_bins = std::min<int>(spec.num_azimuths,
                                   static_cast<int>(std::floor((lo + arc) / bin_deg)) - first + 1);
  for (int b = 0; b < n_bins; ++b) {
    const int i = (first + b) % spec.num_azimuths;
    for (int j = j_lo; j <= j_hi; ++j) {
      const float s = static_cast<float>(scale_height(top, spec));
      map.heights.at(i, j) = std::max(map.heights.at(i, j), s);
    }
  }
}

inline ElevationMap generate_scene(const SceneParams& params, const PolarGridSpec& spec,
                                   double* ground_out = nullptr) {
  spec.validate();
  params.validate(spec);
  Rng rng = Rng::stream(params.rng_seed, "scene");
  double ground = params.ground_height;
  if (params.ground_jitter_m > 0)
    ground += rng.uniform(-params.ground_jitter_m, params.ground_jitter_m);
  if (ground_out != nullptr) *ground_out = ground;
  ElevationMap map(spec, static_cast<float>(scale_height(ground, spec)));
  const int count = params.obstacle_count_min +
                    static_cast<int>(rng.below(static_cast<uint64_t>(
                        params.obstacle_count_max - params.obstacle_count_min + 1)));
  for (int n = 0; n < count; ++n) {
    const ObstacleKindRange* kind = nullptr;
    switch (rng.below(3)) {
      case 0: kind = &params.box; break;
      case 1: kind = &params.cylinder; break;
      default: kind = &params.wall; break;
    }
    const double az_center = rng.uniform(0.0, spec.azimuth_span_deg);
    const double az_width = rng.uniform(kind->az_width_min_deg, kind->az_width_max_deg);
    const double depth = rng.uniform(kind->depth_min_m, kind->depth_max_m);
    const double height = rng.uniform(kind->height_min_m, kind->height_max_m);
    const double r_center = rng.uniform(params.placement_range_min_m, params.placement_range_max_m);
    PolarObstacle ob;
    ob.az_lo_deg = az_center - az_width / 2;
    ob.az_hi_deg = az_center + az_width / 2;
    ob.r_lo_m = std::max(0.0, r_center - depth / 2);
    ob.r_hi_m = r_center + depth / 2;
    ob.height_m = height;
    rasterize_obstacle(map, ob, ground);
  }
  return map;
}

// Fixed stochastic stand-in for the physical radar. Per azimuth ray, marching
// outward: the return at bin j is proportional to the cell's height above the
// scene ground, attenuated by range and by the opacity of each obstacle whose
// front face the ray already crossed, modulated by multiplicative speckle, on
// top of an additive Gaussian noise floor; clamped to [-1, 1].
struct OracleSensorParams {
  double noise_floor_mean = -0.85;  // scaled power units
  double noise_floor_std = 0.02;
  double return_gain = 0.9;         // scaled power per meter of visible height
  double range_attenuation = 0.35;  // exponent on 1/(1+j)
  double speckle_std = 0.15;
  double occlusion_opacity = 0.6;   // fraction of signal lost per crossed obstacle

  void validate() const {
    if (noise_floor_std < 0 || speckle_std < 0)
      throw std::invalid_argument("oracle: stds must be >= 0");
    if (occlusion_opacity < 0 || occlusion_opacity > 1)
      throw std::invalid_argument("oracle: opacity must be in [0,1]");
  }
};

inline RadarFrame oracle_radar(const ElevationMap& w, const OracleSensorParams& params,
                               uint64_t seed) {
  w.validate();
  params.validate();
  const PolarGridSpec& spec = w.grid;
  // Scene ground level: the map minimum. Makes returns a function of relative
  // height only, so a global ground shift leaves the radar distribution
  // unchanged.
  double ground_s = 1.0;
  for (float h : w.heights.v) ground_s = std::min(ground_s, static_cast<double>(h));
  const double ground_m = unscale_height(ground_s, spec);

  RadarFrame out(spec);
  Rng rng = Rng::stream(seed, "oracle-radar");
  for (int i = 0; i < spec.num_azimuths; ++i) {
    double transmit = 1.0;
    bool in_obstacle = false;
    for (int j = 0; j < spec.num_range_bins; ++j) {
      // Fixed draw order (two normals per cell) keeps the noise field
      // independent of scene content for matched-seed comparisons.
      const double speckle = rng.normal(0.0, params.speckle_std);
      const double floor = rng.normal(params.noise_floor_mean, params.noise_floor_std);
      const double h_rel = unscale_height(w.heights.at(i, j), spec) - ground_m;
      const double atten = std::pow(1.0 / (1.0 + j), params.range_attenuation);
      double p = params.return_gain * h_rel * transmit * atten * (1.0 + speckle) + floor;
      out.power.at(i, j) = static_cast<float>(std::clamp(p, -1.0, 1.0));
      // Opacity applies once per obstacle, at its front face; cells behind it
      // (including the obstacle's own deeper cells) see reduced signal.
      const bool obstacle_cell = h_rel > 1e-9;
      if (obstacle_cell && !in_obstacle) transmit *= 1.0 - params.occlusion_opacity;
      in_obstacle = obstacle_cell;
    }
  }
  return out;
}

// Beam-cast partial measurements: a few fixed-elevation beams per sampled
// azimuth, first surface intersection wins, Bernoulli dropout, binned with
// the same semantics as bin_pointcloud.
struct LidarSimParams {
  std::vector<double> beam_elevations_deg = {-30.0, -25.857, -21.714, -17.571,
                                             -13.429, -9.286, -5.143, -1.0};
  double max_range_m = 50.0;
  double azimuth_step_deg = 0.9;
  double dropout_prob = 0.1;

  void validate(const PolarGridSpec& spec) const {
    if (beam_elevations_deg.empty()) throw std::invalid_argument("lidar: no beams");
    if (!(max_range_m > 0) || max_range_m > spec.max_range_m())
      throw std::invalid_argument("lidar: max_range must be in (0, grid max range]");
    if (!(azimuth_step_deg > 0)) throw std::invalid_argument("lidar: azimuth_step must be > 0");
    if (dropout_prob < 0 || dropout_prob >= 1)
      throw std::invalid_argument("lidar: dropout_prob must be in [0,1)");
  }
};

inline PartialElevationMap simulate_lidar(const ElevationMap& w, const LidarSimParams& params,
                                          const PolarGridSpec& spec, uint64_t seed) {
  w.validate();
  params.validate(spec);
  if (!(w.grid == spec)) throw std::invalid_argument("simulate_lidar: grid mismatch");
  Rng rng = Rng::stream(seed, "lidar");
  const int step_bins =
      std::max(1, static_cast<int>(std::llround(params.azimuth_step_deg / spec.azimuth_bin_deg())));
  PointCloud cloud;
  for (int i = 0; i < spec.num_azimuths; i += step_bins) {
    const double phi = (i + 0.5) * spec.azimuth_bin_deg() * std::numbers::pi / 180.0;
    for (double beam_deg : params.beam_elevations_deg) {
      const double slope = std::tan(beam_deg * std::numbers::pi / 180.0);
      // March bins outward; the beam height is z(r) = sensor_height + r*slope.
      // A bin is hit when the beam dips to (or starts below) the bin surface.
      for (int j = 0; j < spec.num_range_bins; ++j) {
        const double r_lo = j * spec.range_resolution;
        const double r_hi = (j + 1) * spec.range_resolution;
        if (r_lo > params.max_range_m) break;
        const double surface = unscale_height(w.heights.at(i, j), spec);
        const double z_near = spec.sensor_height + r_lo * slope;
        const double z_far = spec.sensor_height + r_hi * slope;
        if (std::min(z_near, z_far) > surface) continue;
        // Crossing point within the bin, clamped to the bin's near face for
        // front-face hits on raised obstacles.
        double r_hit = r_lo;
        if (slope != 0.0) {
          const double r_cross = (surface - spec.sensor_height) / slope;
          r_hit = std::clamp(r_cross, r_lo, r_hi);
        }
        if (r_hit > params.max_range_m) break;  // first intersection out of range: beam ends
        if (!rng.bernoulli(params.dropout_prob)) {
          cloud.points.push_back(Point{r_hit * std::cos(phi), r_hit * std::sin(phi),
                                       surface - spec.sensor_height});
        }
        break;  // first surface intersection only
      }
    }
  }
  return bin_pointcloud(cloud, spec);
}

enum class Split { r_train, r_test, s_train, s_test };

inline const char* split_name(Split s) {
  switch (s) {
    case Split::r_train: return "R-train";
    case Split::r_test: return "R-test";
    case Split::s_train: return "S-train";
    default: return "S-test";
  }
}

inline Split split_from_name(const std::string& s) {
  if (s == "R-train") return Split::r_train;
  if (s == "R-test") return Split::r_test;
  if (s == "S-train") return Split::s_train;
  if (s == "S-test") return Split::s_test;
  throw std::invalid_argument("unknown split name: " + s);
}

struct ManifestEntry {
  std::string id;
  Split split = Split::r_train;
  uint64_t seed = 0;
  double ground_m = 0.0;  // exact ground level of this scene, in meters
  std::map<std::string, std::string> files;  // role -> path relative to manifest dir
};

struct DatasetManifest {
  PolarGridSpec grid;
  std::vector<ManifestEntry> entries;
  std::filesystem::path root;  // directory holding manifest.json

  std::vector<const ManifestEntry*> split_entries(Split s) const {
    std::vector<const ManifestEntry*> out;
    for (const auto& e : entries)
      if (e.split == s) out.push_back(&e);
    return out;
  }

  std::filesystem::path file(const ManifestEntry& e, const std::string& role) const {
    auto it = e.files.find(role);
    if (it == e.files.end())
      throw std::runtime_error("manifest entry " + e.id + " lacks role " + role);
    return root / it->second;
  }

  Grid load(const ManifestEntry& e, const std::string& role) const {
    return read_f32_grid(file(e, role), grid.num_azimuths, grid.num_range_bins);
  }

  void validate() const {
    grid.validate();
    std::map<std::string, int> seen;
    for (const auto& e : entries) {
      if (++seen[e.id] > 1) throw std::runtime_error("manifest: duplicate id " + e.id);
      for (const auto& [role, rel] : e.files) {
        const auto p = root / rel;
        if (!std::filesystem::exists(p))
          throw std::runtime_error("manifest: missing file " + p.string());
        const size_t expect =
            static_cast<size_t>(grid.num_azimuths) * grid.num_range_bins * sizeof(float);
        if (std::filesystem::file_size(p) != expect)
          throw std::runtime_error("manifest: wrong size for " + p.string());
      }
    }
  }
};

inline nlohmann::json grid_to_json(const PolarGridSpec& g) {
  return nlohmann::json{{"num_azimuths", g.num_azimuths},
                        {"num_range_bins", g.num_range_bins},
                        {"range_resolution", g.range_resolution},
                        {"azimuth_span_deg", g.azimuth_span_deg},
                        {"height_min", g.height_min},
                        {"height_max", g.height_max},
                        {"sensor_height", g.sensor_height},
                        {"elevation_fov", {g.elevation_fov_low_deg, g.elevation_fov_high_deg}}};
}

inline PolarGridSpec grid_from_json(const nlohmann::json& j) {
  PolarGridSpec g;
  g.num_azimuths = j.at("num_azimuths").get<int>();
  g.num_range_bins = j.at("num_range_bins").get<int>();
  g.range_resolution = j.at("range_resolution").get<double>();
  g.azimuth_span_deg = j.at("azimuth_span_deg").get<double>();
  g.height_min = j.at("height_min").get<double>();
  g.height_max = j.at("height_max").get<double>();
  g.sensor_height = j.at("sensor_height").get<double>();
  g.elevation_fov_low_deg = j.at("elevation_fov").at(0).get<double>();
  g.elevation_fov_high_deg = j.at("elevation_fov").at(1).get<double>();
  return g;
}

inline void save_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
  nlohmann::json j;
  j["grid"] = grid_to_json(m.grid);
  j["entries"] = nlohmann::json::array();
  for (const auto& e : m.entries) {
    nlohmann::json je{
        {"id", e.id}, {"split", split_name(e.split)}, {"seed", e.seed}, {"ground_m", e.ground_m}};
    je["files"] = e.files;
    j["entries"].push_back(je);
  }
  // Written atomically: a manifest only ever exists complete.
  const auto tmp = path.string() + ".tmp";
  const std::string text = j.dump(2) + "\n";
  write_bytes(tmp, text.data(), text.size());
  std::filesystem::rename(tmp, path);
}

inline DatasetManifest load_manifest(const std::filesystem::path& path) {
  const auto buf = read_bytes(path);
  const nlohmann::json j = nlohmann::json::parse(buf.begin(), buf.end());
  DatasetManifest m;
  m.grid = grid_from_json(j.at("grid"));
  m.root = path.parent_path();
  for (const auto& je : j.at("entries")) {
    ManifestEntry e;
    e.id = je.at("id").get<std::string>();
    e.split = split_from_name(je.at("split").get<std::string>());
    e.seed = je.at("seed").get<uint64_t>();
    e.ground_m = je.value("ground_m", 0.0);
    for (const auto& [role, rel] : je.at("files").items()) e.files[role] = rel.get<std::string>();
    m.entries.push_back(std::move(e));
  }
  return m;
}

struct DatasetCounts {
  int r_train = 64;
  int r_test = 16;
  int s_train = 64;
  int s_test = 16;
};

// Dataset sizes of the reference experiment this artifact scales down
// (R-train, R-test, S-train, S-test frame counts).
inline constexpr int full_scale_counts[4] = {222420, 23460, 100000, 68400};

struct WorldParams {
  SceneParams scene_r;  // real-domain scenes (ground jitter on)
  SceneParams scene_s;  // sim-domain scenes
  OracleSensorParams oracle;
  LidarSimParams lidar;
};

// Generates all four splits under out_dir and writes manifest.json last.
// R entries hold aligned (radar, partial, mask) plus the dense truth used for
// evaluation labels; S entries hold dense elevation only. R and S scenes come
// from disjoint seed streams, so the two domains share no scene.
inline DatasetManifest build_datasets(const DatasetCounts& counts, const WorldParams& params,
                                      const PolarGridSpec& spec,
                                      const std::filesystem::path& out_dir, uint64_t seed) {
  spec.validate();
  std::filesystem::create_directories(out_dir);
  DatasetManifest m;
  m.grid = spec;
  m.root = out_dir;
  struct SplitPlan {
    Split split;
    int count;
    const SceneParams* scene;
    bool aligned;  // R splits carry radar + lidar partials
  };
  const SplitPlan plans[] = {
      {Split::r_train, counts.r_train, &params.scene_r, true},
      {Split::r_test, counts.r_test, &params.scene_r, true},
      {Split::s_train, counts.s_train, &params.scene_s, false},
      {Split::s_test, counts.s_test, &params.scene_s, false},
  };
  for (const auto& plan : plans) {
    for (int k = 0; k < plan.count; ++k) {
      ManifestEntry e;
      e.split = plan.split;
      char idbuf[32];
      std::snprintf(idbuf, sizeof(idbuf), "%s-%04d", split_name(plan.split), k);
      e.id = idbuf;
      e.seed = Rng::stream(seed, split_name(plan.split), static_cast<uint64_t>(k)).state();
      SceneParams sp = *plan.scene;
      sp.rng_seed = e.seed;
      const ElevationMap w = generate_scene(sp, spec, &e.ground_m);
      const std::string stem = e.id;
      e.files["elevation"] = stem + ".elevation.f32";
      write_f32_grid(out_dir / e.files["elevation"], w.heights);
      if (plan.aligned) {
        // Oracle and lidar consume distinct named streams of the same seed.
        const RadarFrame x = oracle_radar(w, params.oracle, e.seed);
        const PartialElevationMap y = simulate_lidar(w, params.lidar, spec, e.seed);
        e.files["radar"] = stem + ".radar.f32";
        e.files["partial"] = stem + ".partial.f32";
        e.files["elevation_mask"] = stem + ".elevation_mask.f32";
        write_f32_grid(out_dir / e.files["radar"], x.power);
        write_f32_grid(out_dir / e.files["partial"], y.heights);
        write_f32_grid(out_dir / e.files["elevation_mask"], y.mask);
      }
      m.entries.push_back(std::move(e));
    }
  }
  save_manifest(m, out_dir / "manifest.json");
  return m;
}

}  // namespace radarsim
