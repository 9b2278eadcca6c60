#pragma once

#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "radarsim/evalkit.hpp"
#include "radarsim/grid.hpp"
#include "radarsim/models.hpp"
#include "radarsim/trainer.hpp"
#include "radarsim/worldsim.hpp"

namespace radarsim {

// A named, fully pinned experiment configuration. "desk" runs end to end in
// minutes on one CPU core; "full" mirrors the reference experiment's sizes
// and is shape-validated only, never trained by the test suite.
struct Profile {
  std::string name;
  PolarGridSpec grid;
  GeneratorConfig gen;
  DiscriminatorConfig disc;
  SegmenterConfig seg;
  WorldParams world;
  DatasetCounts counts;
  TrainConfig train;
  EvalParams eval;

  void validate() const {
    grid.validate();
    validate_config_shapes(grid, gen, disc, seg);
    world.scene_r.validate(grid);
    world.scene_s.validate(grid);
    world.oracle.validate();
    world.lidar.validate(grid);
    train.validate();
    eval.validate();
  }
};

inline Profile desk_profile() {
  Profile p;
  p.name = "desk";
  p.grid.num_azimuths = 64;
  p.grid.num_range_bins = 64;
  p.gen.base_channels = 16;
  p.gen.residual_blocks = 4;
  p.disc.base_channels = 16;
  p.world.scene_r.ground_jitter_m = 0.2;
  p.world.lidar.max_range_m = p.grid.max_range_m();
  p.world.lidar.azimuth_step_deg = p.grid.azimuth_bin_deg();
  p.train.steps = 2000;
  return p;
}

inline Profile full_profile() {
  Profile p;
  p.name = "full";
  p.world.scene_r.ground_jitter_m = 0.2;
  p.counts.r_train = full_scale_counts[0];
  p.counts.r_test = full_scale_counts[1];
  p.counts.s_train = full_scale_counts[2];
  p.counts.s_test = full_scale_counts[3];
  return p;
}

inline Profile profile_by_name(const std::string& name) {
  if (name == "desk") return desk_profile();
  // "paper" is a compatibility alias some callers use for the full-scale profile.
  if (name == "full" || name == "paper") return full_profile();
  throw std::invalid_argument("unknown profile: " + name + " (expected desk or full)");
}

// JSON view of the effective configuration; the same shape is accepted back
// as an override file, so any echoed config reruns as-is.
inline nlohmann::json profile_to_json(const Profile& p) {
  nlohmann::json j;
  j["profile"] = p.name;
  j["grid"] = grid_to_json(p.grid);
  j["generator"] = {{"residual_blocks", p.gen.residual_blocks},
                    {"base_channels", p.gen.base_channels},
                    {"downsampling_stages", p.gen.downsampling_stages}};
  j["discriminator"] = {{"layers", p.disc.layers}, {"base_channels", p.disc.base_channels}};
  j["segmenter"] = {{"levels", p.seg.levels}, {"initial_features", p.seg.initial_features}};
  auto scene_json = [](const SceneParams& s) {
    return nlohmann::json{{"ground_height", s.ground_height},
                          {"obstacle_count_min", s.obstacle_count_min},
                          {"obstacle_count_max", s.obstacle_count_max},
                          {"placement_range_min_m", s.placement_range_min_m},
                          {"placement_range_max_m", s.placement_range_max_m},
                          {"ground_jitter_m", s.ground_jitter_m}};
  };
  j["scene_r"] = scene_json(p.world.scene_r);
  j["scene_s"] = scene_json(p.world.scene_s);
  j["oracle"] = {{"noise_floor_mean", p.world.oracle.noise_floor_mean},
                 {"noise_floor_std", p.world.oracle.noise_floor_std},
                 {"return_gain", p.world.oracle.return_gain},
                 {"range_attenuation", p.world.oracle.range_attenuation},
                 {"speckle_std", p.world.oracle.speckle_std},
                 {"occlusion_opacity", p.world.oracle.occlusion_opacity}};
  j["lidar"] = {{"beam_elevations_deg", p.world.lidar.beam_elevations_deg},
                {"max_range_m", p.world.lidar.max_range_m},
                {"azimuth_step_deg", p.world.lidar.azimuth_step_deg},
                {"dropout_prob", p.world.lidar.dropout_prob}};
  j["counts"] = {{"r_train", p.counts.r_train},
                 {"r_test", p.counts.r_test},
                 {"s_train", p.counts.s_train},
                 {"s_test", p.counts.s_test}};
  j["train"] = {{"steps", p.train.steps},
                {"learning_rate", p.train.adam.learning_rate},
                {"beta1", p.train.adam.beta1},
                {"beta2", p.train.adam.beta2},
                {"batch_size", p.train.batch_size},
                {"lambda_gw", p.train.weights.lambda_gw},
                {"lambda_cx", p.train.weights.lambda_cx},
                {"lambda_cw", p.train.weights.lambda_cw},
                {"lambda_aw", p.train.weights.lambda_aw},
                {"seed", p.train.seed},
                {"checkpoint_every", p.train.checkpoint_every},
                {"pool_capacity", p.train.pool_capacity}};
  j["eval"] = {{"ground_threshold_m", p.eval.ground_threshold_m},
               {"samples_per_scene", p.eval.samples_per_scene},
               {"holdout_fraction", p.eval.holdout_fraction},
               {"max_epochs", p.eval.max_epochs},
               {"batch_size", p.eval.batch_size},
               {"occupied_weight", p.eval.occupied_weight},
               {"learning_rate", p.eval.adam.learning_rate}};
  return j;
}

namespace detail {

template <typename T>
void maybe(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

inline void apply_scene_json(const nlohmann::json& j, SceneParams& s) {
  maybe(j, "ground_height", s.ground_height);
  maybe(j, "obstacle_count_min", s.obstacle_count_min);
  maybe(j, "obstacle_count_max", s.obstacle_count_max);
  maybe(j, "placement_range_min_m", s.placement_range_min_m);
  maybe(j, "placement_range_max_m", s.placement_range_max_m);
  maybe(j, "ground_jitter_m", s.ground_jitter_m);
}

}  // namespace detail

// Overrides any subset of fields; unknown top-level keys are rejected so a
// typo cannot silently fall back to defaults.
inline void apply_json_overrides(const nlohmann::json& j, Profile& p) {
  // "preset" and "kappa_policy" appear in run echoes; they are run metadata,
  // not profile fields, and pass through here untouched so any echoed config
  // is valid as an override file.
  static const std::set<std::string> known = {"profile", "grid",   "generator", "discriminator",
                                              "segmenter", "scene_r", "scene_s", "oracle",
                                              "lidar",     "counts", "train",   "eval",
                                              "preset",    "kappa_policy"};
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (!known.count(key)) throw std::invalid_argument("config: unknown key '" + key + "'");
  }
  using detail::maybe;
  if (j.contains("grid")) {
    const auto& g = j.at("grid");
    maybe(g, "num_azimuths", p.grid.num_azimuths);
    maybe(g, "num_range_bins", p.grid.num_range_bins);
    maybe(g, "range_resolution", p.grid.range_resolution);
    maybe(g, "azimuth_span_deg", p.grid.azimuth_span_deg);
    maybe(g, "height_min", p.grid.height_min);
    maybe(g, "height_max", p.grid.height_max);
    maybe(g, "sensor_height", p.grid.sensor_height);
    if (g.contains("elevation_fov")) {
      p.grid.elevation_fov_low_deg = g.at("elevation_fov").at(0).get<double>();
      p.grid.elevation_fov_high_deg = g.at("elevation_fov").at(1).get<double>();
    }
  }
  if (j.contains("generator")) {
    const auto& g = j.at("generator");
    maybe(g, "residual_blocks", p.gen.residual_blocks);
    maybe(g, "base_channels", p.gen.base_channels);
    maybe(g, "downsampling_stages", p.gen.downsampling_stages);
  }
  if (j.contains("discriminator")) {
    const auto& g = j.at("discriminator");
    maybe(g, "layers", p.disc.layers);
    maybe(g, "base_channels", p.disc.base_channels);
  }
  if (j.contains("segmenter")) {
    const auto& g = j.at("segmenter");
    maybe(g, "levels", p.seg.levels);
    maybe(g, "initial_features", p.seg.initial_features);
  }
  if (j.contains("scene_r")) detail::apply_scene_json(j.at("scene_r"), p.world.scene_r);
  if (j.contains("scene_s")) detail::apply_scene_json(j.at("scene_s"), p.world.scene_s);
  if (j.contains("oracle")) {
    const auto& g = j.at("oracle");
    maybe(g, "noise_floor_mean", p.world.oracle.noise_floor_mean);
    maybe(g, "noise_floor_std", p.world.oracle.noise_floor_std);
    maybe(g, "return_gain", p.world.oracle.return_gain);
    maybe(g, "range_attenuation", p.world.oracle.range_attenuation);
    maybe(g, "speckle_std", p.world.oracle.speckle_std);
    maybe(g, "occlusion_opacity", p.world.oracle.occlusion_opacity);
  }
  if (j.contains("lidar")) {
    const auto& g = j.at("lidar");
    maybe(g, "beam_elevations_deg", p.world.lidar.beam_elevations_deg);
    maybe(g, "max_range_m", p.world.lidar.max_range_m);
    maybe(g, "azimuth_step_deg", p.world.lidar.azimuth_step_deg);
    maybe(g, "dropout_prob", p.world.lidar.dropout_prob);
  }
  if (j.contains("counts")) {
    const auto& g = j.at("counts");
    maybe(g, "r_train", p.counts.r_train);
    maybe(g, "r_test", p.counts.r_test);
    maybe(g, "s_train", p.counts.s_train);
    maybe(g, "s_test", p.counts.s_test);
  }
  if (j.contains("train")) {
    const auto& g = j.at("train");
    maybe(g, "steps", p.train.steps);
    maybe(g, "learning_rate", p.train.adam.learning_rate);
    maybe(g, "beta1", p.train.adam.beta1);
    maybe(g, "beta2", p.train.adam.beta2);
    maybe(g, "batch_size", p.train.batch_size);
    maybe(g, "lambda_gw", p.train.weights.lambda_gw);
    maybe(g, "lambda_cx", p.train.weights.lambda_cx);
    maybe(g, "lambda_cw", p.train.weights.lambda_cw);
    maybe(g, "lambda_aw", p.train.weights.lambda_aw);
    maybe(g, "seed", p.train.seed);
    maybe(g, "checkpoint_every", p.train.checkpoint_every);
    maybe(g, "pool_capacity", p.train.pool_capacity);
  }
  if (j.contains("eval")) {
    const auto& g = j.at("eval");
    maybe(g, "ground_threshold_m", p.eval.ground_threshold_m);
    maybe(g, "samples_per_scene", p.eval.samples_per_scene);
    maybe(g, "holdout_fraction", p.eval.holdout_fraction);
    maybe(g, "max_epochs", p.eval.max_epochs);
    maybe(g, "batch_size", p.eval.batch_size);
    maybe(g, "occupied_weight", p.eval.occupied_weight);
    maybe(g, "learning_rate", p.eval.adam.learning_rate);
  }
}

}  // namespace radarsim
