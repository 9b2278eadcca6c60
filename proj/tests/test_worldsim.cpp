#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <set>

#include "radarsim/io.hpp"
#include "radarsim/worldsim.hpp"

using namespace radarsim;
namespace fs = std::filesystem;

namespace {

PolarGridSpec tiny_spec(int az = 16, int rb = 32) {
  PolarGridSpec s;
  s.num_azimuths = az;
  s.num_range_bins = rb;
  return s;
}

fs::path temp_dir(const char* tag) {
  const fs::path p = fs::temp_directory_path() / (std::string("radarsim_test_") + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("rasterized box covers its azimuth arc and range slab", "[worldsim]") {
  const PolarGridSpec spec;  // 0.9 deg bins, 0.35 m bins
  ElevationMap map(spec, static_cast<float>(scale_height(0.0, spec)));
  PolarObstacle ob;
  ob.az_lo_deg = 0.0;
  ob.az_hi_deg = 2.0;
  ob.r_lo_m = 10.0;
  ob.r_hi_m = 12.0;
  ob.height_m = 2.0;
  rasterize_obstacle(map, ob, 0.0);
  const float top = static_cast<float>(scale_height(2.0, spec));
  const float ground = static_cast<float>(scale_height(0.0, spec));
  int mismatches = 0;
  for (int i = 0; i < spec.num_azimuths; ++i)
    for (int j = 0; j < spec.num_range_bins; ++j) {
      const bool inside = i <= 2 && j >= 28 && j <= 34;
      mismatches += map.heights.at(i, j) != (inside ? top : ground);
    }
  CHECK(mismatches == 0);
}

TEST_CASE("rasterized arc wraps across the azimuth seam", "[worldsim]") {
  const PolarGridSpec spec;
  ElevationMap map(spec, static_cast<float>(scale_height(0.0, spec)));
  PolarObstacle ob;
  ob.az_lo_deg = -2.0;
  ob.az_hi_deg = 2.0;
  ob.r_lo_m = 10.0;
  ob.r_hi_m = 10.2;
  ob.height_m = 1.0;
  rasterize_obstacle(map, ob, 0.0);
  const float top = static_cast<float>(scale_height(1.0, spec));
  const std::set<int> covered{397, 398, 399, 0, 1, 2};
  for (int i = 0; i < spec.num_azimuths; ++i) {
    const bool inside = covered.count(i) > 0;
    CHECK((map.heights.at(i, 28) == top) == inside);
  }

  PolarObstacle bad = ob;
  bad.az_hi_deg = bad.az_lo_deg - 1.0;
  CHECK_THROWS_AS(rasterize_obstacle(map, bad, 0.0), std::invalid_argument);
}

TEST_CASE("rasterization takes the per-cell maximum", "[worldsim]") {
  const PolarGridSpec spec = tiny_spec();
  ElevationMap map(spec, static_cast<float>(scale_height(0.0, spec)));
  PolarObstacle tall{0.0, 40.0, 3.0, 5.0, 3.0};
  PolarObstacle low{0.0, 40.0, 3.0, 5.0, 1.0};
  rasterize_obstacle(map, tall, 0.0);
  const Grid before = map.heights;
  rasterize_obstacle(map, low, 0.0);
  CHECK(map.heights == before);
}

TEST_CASE("scene generation is seeded and respects the obstacle budget", "[worldsim]") {
  const PolarGridSpec spec = tiny_spec();
  SceneParams params;
  params.rng_seed = 42;
  const ElevationMap a = generate_scene(params, spec);
  const ElevationMap b = generate_scene(params, spec);
  CHECK(a.heights == b.heights);
  params.rng_seed = 43;
  const ElevationMap c = generate_scene(params, spec);
  CHECK(a.heights != c.heights);
  CHECK_NOTHROW(a.validate());
}

TEST_CASE("empty scene is flat at the jittered ground level", "[worldsim]") {
  const PolarGridSpec spec = tiny_spec();
  SceneParams params;
  params.obstacle_count_min = 0;
  params.obstacle_count_max = 0;
  double ground = -1;
  const ElevationMap flat = generate_scene(params, spec, &ground);
  CHECK(ground == 0.0);
  for (float h : flat.heights.v) CHECK(h == static_cast<float>(scale_height(0.0, spec)));

  params.ground_jitter_m = 0.5;
  for (uint64_t seed = 0; seed < 8; ++seed) {
    params.rng_seed = seed;
    generate_scene(params, spec, &ground);
    CHECK(std::abs(ground) <= 0.5);
  }
}

TEST_CASE("scene parameter validation rejects impossible shapes", "[worldsim]") {
  const PolarGridSpec spec = tiny_spec();
  SceneParams params;
  params.obstacle_count_max = params.obstacle_count_min - 1;
  CHECK_THROWS_AS(params.validate(spec), std::invalid_argument);
  params = SceneParams{};
  params.box.height_max_m = 10.0;  // above the grid height interval
  CHECK_THROWS_AS(params.validate(spec), std::invalid_argument);
  params = SceneParams{};
  params.placement_range_max_m = 1.0;
  CHECK_THROWS_AS(params.validate(spec), std::invalid_argument);
}

TEST_CASE("flat-scene radar reduces to the noise floor", "[worldsim]") {
  const PolarGridSpec spec = tiny_spec(32, 64);
  const ElevationMap flat(spec, static_cast<float>(scale_height(0.0, spec)));
  const OracleSensorParams params;
  const RadarFrame x = oracle_radar(flat, params, 1234);
  double mean = 0;
  for (float p : x.power.v) mean += p;
  mean /= static_cast<double>(x.power.size());
  // 2048 independent draws: the sample mean sits within 3 sigma/sqrt(n).
  const double tol = 3.0 * params.noise_floor_std / std::sqrt(2048.0);
  CHECK(std::abs(mean - params.noise_floor_mean) <= tol);
  double var = 0;
  for (float p : x.power.v) var += (p - mean) * (p - mean);
  var /= 2047.0;
  CHECK(std::sqrt(var) == Catch::Approx(params.noise_floor_std).margin(0.00125));
}

TEST_CASE("radar return peaks at the obstacle bin", "[worldsim]") {
  const PolarGridSpec spec;
  ElevationMap map(spec, static_cast<float>(scale_height(0.0, spec)));
  PolarObstacle wall{10.0, 20.0, 20.0, 20.2, 2.5};
  rasterize_obstacle(map, wall, 0.0);  // occupies range bin 57, azimuth bins 11..22
  const RadarFrame x = oracle_radar(map, OracleSensorParams{}, 99);
  for (int i = 11; i <= 22; ++i) {
    int argmax = 0;
    for (int j = 1; j < spec.num_range_bins; ++j)
      if (x.power.at(i, j) > x.power.at(i, argmax)) argmax = j;
    CHECK(argmax == 57);
  }
}

TEST_CASE("radar is seeded and the noise field ignores scene content", "[worldsim]") {
  const PolarGridSpec spec = tiny_spec();
  SceneParams sp;
  sp.rng_seed = 7;
  const ElevationMap scene = generate_scene(sp, spec);
  const OracleSensorParams params;
  const RadarFrame a = oracle_radar(scene, params, 5);
  const RadarFrame b = oracle_radar(scene, params, 5);
  CHECK(a.power == b.power);
  const RadarFrame c = oracle_radar(scene, params, 6);
  CHECK(a.power != c.power);
}

TEST_CASE("full opacity makes a second wall invisible", "[worldsim]") {
  const PolarGridSpec spec;
  const float ground = static_cast<float>(scale_height(0.0, spec));
  ElevationMap front(spec, ground);
  rasterize_obstacle(front, PolarObstacle{0.0, 360.0, 10.0, 10.2, 2.0}, 0.0);
  ElevationMap both = front;
  rasterize_obstacle(both, PolarObstacle{0.0, 360.0, 20.0, 20.2, 2.5}, 0.0);

  OracleSensorParams opaque;
  opaque.occlusion_opacity = 1.0;
  // The per-cell draw order is fixed, so matched seeds expose the same noise
  // field to both scenes and the frames must agree bit for bit.
  const RadarFrame xa = oracle_radar(front, opaque, 11);
  const RadarFrame xb = oracle_radar(both, opaque, 11);
  CHECK(xa.power == xb.power);

  // At the default partial opacity the hidden wall still leaks signal.
  const OracleSensorParams leaky;
  const RadarFrame ya = oracle_radar(front, leaky, 11);
  const RadarFrame yb = oracle_radar(both, leaky, 11);
  CHECK(ya.power != yb.power);
  CHECK(yb.power.at(0, 57) > ya.power.at(0, 57));
}

TEST_CASE("lidar beam lands where geometry says it must", "[worldsim]") {
  const PolarGridSpec spec;
  const ElevationMap flat(spec, static_cast<float>(scale_height(0.0, spec)));
  LidarSimParams lp;
  lp.beam_elevations_deg = {-5.0};
  lp.azimuth_step_deg = 45.0;  // 8 sampled rays
  lp.dropout_prob = 0.0;
  const PartialElevationMap y = simulate_lidar(flat, lp, spec, 3);
  // A -5 degree beam from 1.97 m crosses flat ground at 22.52 m: range bin 64.
  int measured = 0;
  for (int i = 0; i < spec.num_azimuths; ++i) {
    for (int j = 0; j < spec.num_range_bins; ++j) {
      if (y.mask.at(i, j) == 0.0f) continue;
      ++measured;
      CHECK(i % 50 == 0);
      CHECK(j == 64);
      CHECK(y.heights.at(i, j) == Catch::Approx(scale_height(0.0, spec)).margin(1e-6));
    }
  }
  CHECK(measured == 8);
}

TEST_CASE("lidar hits the front face of a raised obstacle", "[worldsim]") {
  const PolarGridSpec spec;
  ElevationMap map(spec, static_cast<float>(scale_height(0.0, spec)));
  rasterize_obstacle(map, PolarObstacle{0.0, 360.0, 9.8, 12.0, 2.0}, 0.0);
  LidarSimParams lp;
  lp.beam_elevations_deg = {-5.0};
  lp.azimuth_step_deg = 45.0;
  lp.dropout_prob = 0.0;
  const PartialElevationMap y = simulate_lidar(map, lp, spec, 3);
  for (int i = 0; i < spec.num_azimuths; i += 50) {
    CHECK(y.mask.at(i, 28) == 1.0f);
    CHECK(y.heights.at(i, 28) == Catch::Approx(scale_height(2.0, spec)).margin(1e-6));
    CHECK(y.mask.at(i, 64) == 0.0f);  // the beam stops at its first surface
  }
}

TEST_CASE("lidar respects range limits and dropout bounds", "[worldsim]") {
  const PolarGridSpec spec;
  const ElevationMap flat(spec, static_cast<float>(scale_height(0.0, spec)));
  LidarSimParams lp;
  lp.beam_elevations_deg = {-5.0};
  lp.azimuth_step_deg = 45.0;
  lp.dropout_prob = 0.0;
  lp.max_range_m = 20.0;  // the flat-ground crossing at 22.5 m is out of reach
  const PartialElevationMap y = simulate_lidar(flat, lp, spec, 3);
  for (float m : y.mask.v) CHECK(m == 0.0f);

  LidarSimParams bad = lp;
  bad.max_range_m = spec.max_range_m() + 1.0;
  CHECK_THROWS_AS(simulate_lidar(flat, bad, spec, 3), std::invalid_argument);
  bad = lp;
  bad.dropout_prob = 1.0;
  CHECK_THROWS_AS(simulate_lidar(flat, bad, spec, 3), std::invalid_argument);
  bad = lp;
  bad.beam_elevations_deg.clear();
  CHECK_THROWS_AS(simulate_lidar(flat, bad, spec, 3), std::invalid_argument);

  const PartialElevationMap y1 = simulate_lidar(flat, lp, spec, 3);
  const PartialElevationMap y2 = simulate_lidar(flat, lp, spec, 3);
  CHECK(y1.heights == y2.heights);
  CHECK(y1.mask == y2.mask);
}

TEST_CASE("split names round trip", "[worldsim]") {
  for (Split s : {Split::r_train, Split::r_test, Split::s_train, Split::s_test})
    CHECK(split_from_name(split_name(s)) == s);
  CHECK_THROWS_AS(split_from_name("Q-train"), std::invalid_argument);
}

TEST_CASE("manifest serialization round trips", "[worldsim]") {
  const fs::path dir = temp_dir("manifest");
  DatasetManifest m;
  m.grid = tiny_spec();
  m.root = dir;
  ManifestEntry e;
  e.id = "R-train-0000";
  e.split = Split::r_train;
  e.seed = 123456789;
  e.ground_m = -0.125;
  e.files["elevation"] = "R-train-0000.elevation.f32";
  m.entries.push_back(e);
  save_manifest(m, dir / "manifest.json");

  const DatasetManifest r = load_manifest(dir / "manifest.json");
  CHECK(r.grid == m.grid);
  REQUIRE(r.entries.size() == 1);
  CHECK(r.entries[0].id == e.id);
  CHECK(r.entries[0].split == e.split);
  CHECK(r.entries[0].seed == e.seed);
  CHECK(r.entries[0].ground_m == e.ground_m);
  CHECK(r.entries[0].files.at("elevation") == e.files.at("elevation"));

  // The referenced file is absent, so structural validation must fail.
  CHECK_THROWS_AS(r.validate(), std::runtime_error);
  fs::remove_all(dir);
}

TEST_CASE("dataset builder writes every split with the right roles", "[worldsim]") {
  const fs::path dir = temp_dir("gen");
  const PolarGridSpec spec = tiny_spec();
  WorldParams world;
  world.lidar.max_range_m = spec.max_range_m();
  DatasetCounts counts;
  counts.r_train = 2;
  counts.r_test = 1;
  counts.s_train = 2;
  counts.s_test = 1;
  const DatasetManifest m = build_datasets(counts, world, spec, dir, 7);
  CHECK(m.entries.size() == 6);
  CHECK_NOTHROW(m.validate());
  CHECK(m.split_entries(Split::r_train).size() == 2);
  CHECK(m.split_entries(Split::s_test).size() == 1);
  CHECK(m.entries[0].id == "R-train-0000");

  for (const ManifestEntry* e : m.split_entries(Split::r_train)) {
    CHECK(e->files.count("elevation") == 1);
    CHECK(e->files.count("radar") == 1);
    CHECK(e->files.count("partial") == 1);
    CHECK(e->files.count("elevation_mask") == 1);
  }
  for (const ManifestEntry* e : m.split_entries(Split::s_train)) {
    CHECK(e->files.size() == 1);
    CHECK(e->files.count("elevation") == 1);
  }

  // Reload from disk and spot-check that a partial map obeys its invariants.
  const DatasetManifest r = load_manifest(dir / "manifest.json");
  const auto rtrain = r.split_entries(Split::r_train);
  PartialElevationMap y(spec);
  y.heights = r.load(*rtrain[0], "partial");
  y.mask = r.load(*rtrain[0], "elevation_mask");
  CHECK_NOTHROW(y.validate());
  fs::remove_all(dir);
}

TEST_CASE("dataset builder is deterministic across runs", "[worldsim]") {
  const fs::path da = temp_dir("det_a");
  const fs::path db = temp_dir("det_b");
  const PolarGridSpec spec = tiny_spec();
  WorldParams world;
  world.lidar.max_range_m = spec.max_range_m();
  DatasetCounts counts;
  counts.r_train = 1;
  counts.r_test = 1;
  counts.s_train = 1;
  counts.s_test = 1;
  build_datasets(counts, world, spec, da, 9);
  build_datasets(counts, world, spec, db, 9);
  for (const char* name :
       {"manifest.json", "R-train-0000.radar.f32", "R-train-0000.partial.f32",
        "R-test-0000.elevation.f32", "S-train-0000.elevation.f32"}) {
    CHECK(read_bytes(da / name) == read_bytes(db / name));
  }
  // A different master seed reroutes every scene stream.
  const fs::path dc = temp_dir("det_c");
  build_datasets(counts, world, spec, dc, 10);
  CHECK(read_bytes(da / "R-train-0000.radar.f32") != read_bytes(dc / "R-train-0000.radar.f32"));
  fs::remove_all(da);
  fs::remove_all(db);
  fs::remove_all(dc);
}

TEST_CASE("reference dataset sizes are pinned", "[worldsim]") {
  const DatasetCounts desk;
  CHECK(desk.r_train == 64);
  CHECK(desk.r_test == 16);
  CHECK(desk.s_train == 64);
  CHECK(desk.s_test == 16);
  CHECK(full_scale_counts[0] == 222420);
  CHECK(full_scale_counts[1] == 23460);
  CHECK(full_scale_counts[2] == 100000);
  CHECK(full_scale_counts[3] == 68400);
}
