// radarsim: data generation, adversarial sensor training, ablation sweeps,
// downstream evaluation, and plotting, as reproducible seeded runs.

#include <fcntl.h>
#include <unistd.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "radarsim/radarsim.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace radarsim;

namespace {

// The lock file belongs to the other run; the failure handler must not treat
// this like a mid-run error and clean anything up.
struct LockContention : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Holds an exclusive advisory lock on the output directory for the lifetime
// of one command; a second command targeting the same directory fails fast
// instead of interleaving writes.
class OutDirLock {
 public:
  explicit OutDirLock(const fs::path& dir) : dir_(dir) {
    created_dir_ = !fs::exists(dir);
    fs::create_directories(dir);
    lock_path_ = dir / ".lock";
    fd_ = ::open(lock_path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd_ < 0)
      throw LockContention("output directory is locked by another run (remove " +
                           lock_path_.string() + " if that run is dead)");
  }
  ~OutDirLock() { release(); }
  OutDirLock(const OutDirLock&) = delete;
  OutDirLock& operator=(const OutDirLock&) = delete;

  void release() {
    if (fd_ >= 0) {
      ::close(fd_);
      fd_ = -1;
      std::error_code ec;
      fs::remove(lock_path_, ec);
    }
  }

  bool created_dir() const { return created_dir_; }
  const fs::path& dir() const { return dir_; }

 private:
  fs::path dir_;
  fs::path lock_path_;
  int fd_ = -1;
  bool created_dir_ = false;
};

std::string read_text(const fs::path& p) {
  std::ifstream f(p);
  if (!f) throw std::runtime_error("cannot read " + p.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + p.string());
  f << text;
}

// Profile precedence: built-in defaults of the named profile (flag, then
// RADAR_SIM_PROFILE, then desk) < config file < command-line flags. Flags are
// applied by each command after this returns.
Profile resolve_profile(const std::string& profile_flag, const std::string& config_path) {
  std::string name = profile_flag;
  if (name.empty()) {
    const char* env = std::getenv("RADAR_SIM_PROFILE");
    if (env != nullptr && *env != '\0') name = env;
  }
  if (name.empty()) name = "desk";
  Profile p = profile_by_name(name);
  if (!config_path.empty()) apply_json_overrides(json::parse(read_text(config_path)), p);
  return p;
}

void write_run_record(const fs::path& out, const std::vector<std::string>& argv_echo,
                      const std::string& config_echo, const std::vector<uint64_t>& seeds,
                      const std::vector<std::string>& outputs, double wall_seconds) {
  json j;
  j["command"] = argv_echo;
  j["config_hash"] = radarsim::detail::fnv1a(config_echo.data(), config_echo.size());
  j["version"] = version_string;
  j["seeds"] = seeds;
  j["outputs"] = outputs;
  j["wall_clock_seconds"] = wall_seconds;
  write_text(out / "run_record.json", j.dump(2) + "\n");
}

std::vector<uint64_t> parse_seed_list(const std::string& s) {
  std::vector<uint64_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    out.push_back(std::stoull(item));
  }
  if (out.empty()) throw std::runtime_error("empty seed list");
  return out;
}

std::vector<std::string> parse_name_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  if (out.empty()) throw std::runtime_error("empty list");
  return out;
}

std::string run_echo_json(const Profile& p, const std::string& preset) {
  json j = profile_to_json(p);
  if (!preset.empty()) j["preset"] = preset;
  j["kappa_policy"] = "resampled-per-branch";
  return j.dump(2) + "\n";
}

// Rebuilds the models a checkpoint was trained with from its embedded config
// echo, then restores parameters, optimizer state, and pools.
struct LoadedCheckpoint {
  Profile profile;
  std::unique_ptr<ModelParameters> models;
  ImagePool pool_x, pool_w;
  std::string preset;
};

LoadedCheckpoint load_checkpoint_bundle(const fs::path& ckpt) {
  const json echo = json::parse(peek_checkpoint_config(ckpt));
  Profile p = profile_by_name(echo.value("profile", "desk"));
  apply_json_overrides(echo, p);
  LoadedCheckpoint lc;
  lc.profile = p;
  lc.preset = echo.value("preset", "");
  lc.models = std::make_unique<ModelParameters>(init_parameters(p.gen, p.disc, p.seg, 0));
  load_checkpoint(ckpt, *lc.models, lc.pool_x, lc.pool_w);
  return lc;
}

std::string format_mean_std(const std::vector<double>& xs) {
  const auto [m, s] = mean_std(xs);
  return format_double(m) + "±" + format_double(s);
}

void append_seg_rows(std::string& csv, const std::string& config,
                     const std::vector<uint64_t>& seeds, const std::vector<SegMetrics>& ms) {
  std::vector<double> mious;
  for (size_t k = 0; k < ms.size(); ++k) {
    csv += config + "," + std::to_string(seeds[k]) + "," + format_double(ms[k].iou_free) + "," +
           format_double(ms[k].iou_occ) + "," + format_double(ms[k].miou) + "\n";
    mious.push_back(ms[k].miou);
  }
  csv += config + "," + format_mean_std(mious) + "\n";
}

// ---- subcommand bodies -----------------------------------------------------

struct GenDataArgs {
  std::string out, profile, config;
  uint64_t seed = 0;
  int r_train = -1, r_test = -1, s_train = -1, s_test = -1;
};

void cmd_gen_data(const GenDataArgs& a, const std::vector<std::string>& argv_echo) {
  const auto t0 = std::chrono::steady_clock::now();
  Profile p = resolve_profile(a.profile, a.config);
  if (a.r_train >= 0) p.counts.r_train = a.r_train;
  if (a.r_test >= 0) p.counts.r_test = a.r_test;
  if (a.s_train >= 0) p.counts.s_train = a.s_train;
  if (a.s_test >= 0) p.counts.s_test = a.s_test;
  p.train.seed = a.seed;
  p.validate();
  OutDirLock lock{fs::path(a.out)};

  build_datasets(p.counts, p.world, p.grid, lock.dir(), a.seed);
  const std::string echo = run_echo_json(p, "");
  write_text(lock.dir() / "config_echo.json", echo);
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_run_record(lock.dir(), argv_echo, echo, {a.seed}, {"manifest.json", "config_echo.json"},
                   secs);
}

struct TrainArgs {
  std::string preset, data, out, profile, config, resume;
  uint64_t seed = 0;
  uint64_t steps = 0;       // 0: profile default
  uint64_t ckpt_every = 0;  // 0: profile default
  bool steps_set = false, ckpt_set = false, seed_set = false;
};

TrainResult do_train(Profile p, const TrainArgs& a, const fs::path& out,
                     std::string* echo_out = nullptr) {
  if (a.seed_set) p.train.seed = a.seed;
  if (a.steps_set) p.train.steps = a.steps;
  if (a.ckpt_set) p.train.checkpoint_every = a.ckpt_every;
  p.validate();
  const AblationSpec ab = ablation_preset(a.preset);
  const DatasetManifest man = load_manifest(fs::path(a.data) / "manifest.json");
  man.validate();
  if (man.grid != p.grid)
    throw std::runtime_error("dataset grid does not match the configured grid");
  const std::string echo = run_echo_json(p, a.preset);
  if (echo_out != nullptr) *echo_out = echo;
  const fs::path resume_path = a.resume;
  return run_training(p.train, ab, p.grid, p.gen, p.disc, p.seg, man, out, echo,
                      a.resume.empty() ? nullptr : &resume_path);
}

void cmd_train(const TrainArgs& a, const std::vector<std::string>& argv_echo) {
  const auto t0 = std::chrono::steady_clock::now();
  Profile p = resolve_profile(a.profile, a.config);
  OutDirLock lock{fs::path(a.out)};
  std::string echo;
  const TrainResult res = do_train(p, a, lock.dir(), &echo);
  write_text(lock.dir() / "config_echo.json", echo);
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_run_record(lock.dir(), argv_echo, echo,
                   {a.seed_set ? a.seed : p.train.seed},
                   {"metrics.csv", res.final_checkpoint.filename().string(), "config_echo.json"},
                   secs);
}

struct EvalSegArgs {
  std::string data, out, checkpoint, profile, config, label;
  bool bypass = false;
  std::string seeds = "0";
};

void cmd_eval_seg(const EvalSegArgs& a, const std::vector<std::string>& argv_echo) {
  const auto t0 = std::chrono::steady_clock::now();
  if (a.bypass && !a.checkpoint.empty())
    throw std::runtime_error("eval-seg takes --checkpoint or --bypass, not both");
  if (!a.bypass && a.checkpoint.empty())
    throw std::runtime_error("eval-seg needs --checkpoint or --bypass");
  Profile p = resolve_profile(a.profile, a.config);
  const DatasetManifest man = load_manifest(fs::path(a.data) / "manifest.json");
  man.validate();
  const std::vector<uint64_t> seeds = parse_seed_list(a.seeds);
  OutDirLock lock{fs::path(a.out)};

  std::unique_ptr<LoadedCheckpoint> keep;
  std::vector<SegMetrics> ms;
  std::string label = a.label;
  if (a.bypass) {
    p.validate();
    ms = run_downstream_eval(SensorSource{OracleSensor{p.world.oracle}}, man, p.seg, p.eval, seeds);
    if (label.empty()) label = "real";
  } else {
    keep = std::make_unique<LoadedCheckpoint>(load_checkpoint_bundle(a.checkpoint));
    if (keep->profile.grid != man.grid)
      throw std::runtime_error("checkpoint grid does not match the dataset grid");
    ms = run_downstream_eval(SensorSource{CheckpointSensor{&keep->models->gx}}, man,
                             keep->profile.seg, p.eval, seeds);
    if (label.empty()) label = keep->preset.empty() ? "ckpt" : keep->preset;
  }

  std::string csv = "config,seed,iou_free,iou_occ,miou\n";
  append_seg_rows(csv, label, seeds, ms);
  write_text(lock.dir() / "seg_report.csv", csv);
  const std::string echo = run_echo_json(p, "");
  write_text(lock.dir() / "config_echo.json", echo);
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_run_record(lock.dir(), argv_echo, echo, seeds, {"seg_report.csv", "config_echo.json"},
                   secs);
}

struct EvalHeightArgs {
  std::string data, out, checkpoint, profile, config, label;
  uint64_t seed = 0;
};

void cmd_eval_height(const EvalHeightArgs& a, const std::vector<std::string>& argv_echo) {
  const auto t0 = std::chrono::steady_clock::now();
  Profile p = resolve_profile(a.profile, a.config);
  const DatasetManifest man = load_manifest(fs::path(a.data) / "manifest.json");
  man.validate();
  OutDirLock lock{fs::path(a.out)};

  LoadedCheckpoint lc = load_checkpoint_bundle(a.checkpoint);
  if (lc.profile.grid != man.grid)
    throw std::runtime_error("checkpoint grid does not match the dataset grid");
  const HeightMetrics hm = run_height_eval(lc.models->gw, man, p.eval, a.seed);
  const std::string label =
      !a.label.empty() ? a.label : (lc.preset.empty() ? "ckpt" : lc.preset);

  std::string csv = "config,seed,mae_free_cm,mae_occ_cm,mae_mean_cm\n";
  csv += label + "," + std::to_string(a.seed) + "," + format_double(hm.mae_free_cm) + "," +
         format_double(hm.mae_occ_cm) + "," + format_double(hm.mae_mean_cm) + "\n";
  write_text(lock.dir() / "height_report.csv", csv);
  const std::string echo = run_echo_json(p, "");
  write_text(lock.dir() / "config_echo.json", echo);
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_run_record(lock.dir(), argv_echo, echo, {a.seed},
                   {"height_report.csv", "config_echo.json"}, secs);
}

struct AblateArgs {
  std::string data, out, profile, config;
  std::string presets = "a,b,c,d,e";
  std::string seeds = "0,1,2,3";
  uint64_t steps = 0;
  bool steps_set = false;
};

void cmd_ablate(const AblateArgs& a, const std::vector<std::string>& argv_echo) {
  const auto t0 = std::chrono::steady_clock::now();
  Profile p = resolve_profile(a.profile, a.config);
  if (a.steps_set) p.train.steps = a.steps;
  p.validate();
  const std::vector<std::string> presets = parse_name_list(a.presets);
  const std::vector<uint64_t> seeds = parse_seed_list(a.seeds);
  OutDirLock lock{fs::path(a.out)};

  // Without --data the sweep generates its own dataset from the profile
  // counts, so the one-command form is fully self-contained.
  DatasetManifest man;
  if (a.data.empty()) {
    man = build_datasets(p.counts, p.world, p.grid, lock.dir() / "data", 0);
  } else {
    man = load_manifest(fs::path(a.data) / "manifest.json");
  }
  man.validate();
  if (man.grid != p.grid)
    throw std::runtime_error("dataset grid does not match the configured grid");

  // Train every (preset, seed) sensor, then probe each with a downstream
  // segmenter run using the matching seed; backward-capable presets also get
  // a height evaluation.
  std::string seg_csv = "config,seed,iou_free,iou_occ,miou\n";
  std::string height_csv = "config,seed,mae_free_cm,mae_occ_cm,mae_mean_cm\n";

  for (const std::string& preset : presets) {
    const AblationSpec ab = ablation_preset(preset);
    std::vector<SegMetrics> ms;
    for (const uint64_t seed : seeds) {
      Profile run_p = p;
      run_p.train.seed = seed;
      const fs::path run_dir = lock.dir() / ("train_" + preset + "_s" + std::to_string(seed));
      const std::string echo = run_echo_json(run_p, preset);
      const TrainResult tr = run_training(run_p.train, ab, run_p.grid, run_p.gen, run_p.disc,
                                          run_p.seg, man, run_dir, echo, nullptr);
      LoadedCheckpoint lc = load_checkpoint_bundle(tr.final_checkpoint);
      ms.push_back(run_downstream_eval(SensorSource{CheckpointSensor{&lc.models->gx}}, man, p.seg,
                                       p.eval, {seed})
                       .front());
      const bool trains_backward = ab.has(Term::g_w) || ab.has(Term::c_x) || ab.has(Term::a_w) ||
                                   ab.has(Term::c_w);
      if (trains_backward) {
        const HeightMetrics hm = run_height_eval(lc.models->gw, man, p.eval, seed);
        height_csv += preset + "," + std::to_string(seed) + "," + format_double(hm.mae_free_cm) +
                      "," + format_double(hm.mae_occ_cm) + "," + format_double(hm.mae_mean_cm) +
                      "\n";
      }
    }
    append_seg_rows(seg_csv, preset, seeds, ms);
  }

  const std::vector<SegMetrics> bench =
      run_downstream_eval(SensorSource{OracleSensor{p.world.oracle}}, man, p.seg, p.eval, seeds);
  append_seg_rows(seg_csv, "real", seeds, bench);

  write_text(lock.dir() / "seg_report.csv", seg_csv);
  write_text(lock.dir() / "height_report.csv", height_csv);
  const std::string echo = run_echo_json(p, "");
  write_text(lock.dir() / "config_echo.json", echo);
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_run_record(lock.dir(), argv_echo, echo, seeds,
                   {"seg_report.csv", "height_report.csv", "config_echo.json"}, secs);
}

struct PlotArgs {
  std::string data, out, checkpoint, profile, config, entry;
  uint64_t seed = 0;
  double ppm = 6.0;
};

void cmd_plot(const PlotArgs& a, const std::vector<std::string>& argv_echo) {
  const auto t0 = std::chrono::steady_clock::now();
  Profile p = resolve_profile(a.profile, a.config);
  const DatasetManifest man = load_manifest(fs::path(a.data) / "manifest.json");
  man.validate();
  OutDirLock lock{fs::path(a.out)};

  const ManifestEntry* entry = nullptr;
  if (a.entry.empty()) {
    const auto rt = man.split_entries(Split::r_test);
    if (rt.empty()) throw std::runtime_error("plot: dataset has no R-test entries");
    entry = rt.front();
  } else {
    for (const auto& e : man.entries)
      if (e.id == a.entry) entry = &e;
    if (entry == nullptr) throw std::runtime_error("plot: no entry with id " + a.entry);
  }
  if (entry->files.count("radar") == 0)
    throw std::runtime_error("plot: entry " + entry->id + " has no radar frame");

  ElevationMap w(man.grid);
  w.heights = man.load(*entry, "elevation");
  RadarFrame x_real(man.grid);
  x_real.power = man.load(*entry, "radar");

  LoadedCheckpoint lc = load_checkpoint_bundle(a.checkpoint);
  if (lc.profile.grid != man.grid)
    throw std::runtime_error("checkpoint grid does not match the dataset grid");
  Rng er = Rng::stream(a.seed, "plot-eps");
  const RadarFrame x_sim = forward_generator(w, make_latent(man.grid, er), lc.models->gx);
  Rng kr = Rng::stream(a.seed, "plot-kappa");
  const ElevationMap w_pred = backward_generator(x_real, make_latent(man.grid, kr), lc.models->gw);

  write_pgm(lock.dir() / "panel_elevation.pgm", cartesian_raster(w.heights, man.grid, a.ppm),
            -1.0f, 1.0f);
  write_pgm(lock.dir() / "panel_radar_sim.pgm", cartesian_raster(x_sim.power, man.grid, a.ppm),
            -1.0f, 1.0f);
  write_pgm(lock.dir() / "panel_radar_real.pgm", cartesian_raster(x_real.power, man.grid, a.ppm),
            -1.0f, 1.0f);
  write_pgm(lock.dir() / "panel_elevation_pred.pgm",
            cartesian_raster(w_pred.heights, man.grid, a.ppm), -1.0f, 1.0f);

  const std::string echo = run_echo_json(p, "");
  write_text(lock.dir() / "config_echo.json", echo);
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_run_record(lock.dir(), argv_echo, echo, {a.seed},
                   {"panel_elevation.pgm", "panel_radar_sim.pgm", "panel_radar_real.pgm",
                    "panel_elevation_pred.pgm", "config_echo.json"},
                   secs);
}

}  // namespace

int main(int argc, char** argv) {
  nn::pin_blas_single_thread();
  std::vector<std::string> argv_echo(argv, argv + argc);

  CLI::App app{"adversarial radar sensor model: training and evaluation harness"};
  app.require_subcommand(1);

  GenDataArgs gd;
  auto* c_gd = app.add_subcommand("gen-data", "generate the four dataset splits");
  c_gd->add_option("--out", gd.out, "output directory")->required();
  c_gd->add_option("--seed", gd.seed, "master seed");
  c_gd->add_option("--config", gd.config, "JSON config override file");
  c_gd->add_option("--profile", gd.profile, "profile name (desk|full)");
  c_gd->add_option("--r-train", gd.r_train, "real-domain training frames");
  c_gd->add_option("--r-test", gd.r_test, "real-domain test frames");
  c_gd->add_option("--s-train", gd.s_train, "sim-domain training frames");
  c_gd->add_option("--s-test", gd.s_test, "sim-domain test frames");

  TrainArgs tr;
  auto* c_tr = app.add_subcommand("train", "train one ablation preset");
  c_tr->add_option("--preset", tr.preset, "ablation preset a|b|c|d|e")->required();
  c_tr->add_option("--data", tr.data, "dataset directory (holds manifest.json)")->required();
  c_tr->add_option("--out", tr.out, "output directory")->required();
  auto* tr_seed = c_tr->add_option("--seed", tr.seed, "training seed");
  auto* tr_steps = c_tr->add_option("--steps", tr.steps, "training steps");
  auto* tr_ck = c_tr->add_option("--ckpt-every", tr.ckpt_every, "checkpoint cadence in steps");
  c_tr->add_option("--resume", tr.resume, "checkpoint to resume from");
  c_tr->add_option("--config", tr.config, "JSON config override file");
  c_tr->add_option("--profile", tr.profile, "profile name (desk|full)");

  EvalSegArgs es;
  auto* c_es = app.add_subcommand("eval-seg", "downstream segmentation evaluation");
  c_es->add_option("--data", es.data, "dataset directory")->required();
  c_es->add_option("--out", es.out, "output directory")->required();
  c_es->add_option("--checkpoint", es.checkpoint, "sensor checkpoint to evaluate");
  c_es->add_flag("--bypass", es.bypass, "use the oracle sensor directly (benchmark row)");
  c_es->add_option("--seeds", es.seeds, "comma-separated seed list");
  c_es->add_option("--seed", es.seeds, "single seed (alias for --seeds)");
  c_es->add_option("--label", es.label, "config column label in the report");
  c_es->add_option("--config", es.config, "JSON config override file");
  c_es->add_option("--profile", es.profile, "profile name (desk|full)");

  EvalHeightArgs eh;
  auto* c_eh = app.add_subcommand("eval-height", "backward-model height error evaluation");
  c_eh->add_option("--data", eh.data, "dataset directory")->required();
  c_eh->add_option("--out", eh.out, "output directory")->required();
  c_eh->add_option("--checkpoint", eh.checkpoint, "sensor checkpoint")->required();
  c_eh->add_option("--seed", eh.seed, "noise seed");
  c_eh->add_option("--label", eh.label, "config column label in the report");
  c_eh->add_option("--config", eh.config, "JSON config override file");
  c_eh->add_option("--profile", eh.profile, "profile name (desk|full)");

  AblateArgs ab;
  auto* c_ab = app.add_subcommand("ablate", "train and evaluate preset x seed sweep");
  c_ab->add_option("--data", ab.data, "dataset directory (generated under --out/data when omitted)");
  c_ab->add_option("--out", ab.out, "output directory")->required();
  c_ab->add_option("--presets", ab.presets, "comma-separated presets (default a,b,c,d,e)");
  c_ab->add_option("--seeds", ab.seeds, "comma-separated seeds (default 0,1,2,3)");
  auto* ab_steps = c_ab->add_option("--steps", ab.steps, "training steps per run");
  c_ab->add_option("--seed", ab.seeds, "single seed (alias for --seeds)");
  c_ab->add_option("--config", ab.config, "JSON config override file");
  c_ab->add_option("--profile", ab.profile, "profile name (desk|full)");

  PlotArgs pl;
  auto* c_pl = app.add_subcommand("plot", "render cartesian panels for one entry");
  c_pl->add_option("--data", pl.data, "dataset directory")->required();
  c_pl->add_option("--out", pl.out, "output directory")->required();
  c_pl->add_option("--checkpoint", pl.checkpoint, "sensor checkpoint")->required();
  c_pl->add_option("--entry", pl.entry, "manifest entry id (default: first R-test)");
  c_pl->add_option("--seed", pl.seed, "noise seed");
  c_pl->add_option("--ppm", pl.ppm, "raster pixels per meter");
  c_pl->add_option("--config", pl.config, "JSON config override file");
  c_pl->add_option("--profile", pl.profile, "profile name (desk|full)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;  // help exits 0, any parse problem is a usage error
  }

  tr.seed_set = tr_seed->count() > 0;
  tr.steps_set = tr_steps->count() > 0;
  tr.ckpt_set = tr_ck->count() > 0;
  ab.steps_set = ab_steps->count() > 0;

  std::string out_dir;
  std::function<void()> body;
  if (*c_gd) {
    out_dir = gd.out;
    body = [&] { cmd_gen_data(gd, argv_echo); };
  } else if (*c_tr) {
    out_dir = tr.out;
    body = [&] { cmd_train(tr, argv_echo); };
  } else if (*c_es) {
    out_dir = es.out;
    body = [&] { cmd_eval_seg(es, argv_echo); };
  } else if (*c_eh) {
    out_dir = eh.out;
    body = [&] { cmd_eval_height(eh, argv_echo); };
  } else if (*c_ab) {
    out_dir = ab.out;
    body = [&] { cmd_ablate(ab, argv_echo); };
  } else if (*c_pl) {
    out_dir = pl.out;
    body = [&] { cmd_plot(pl, argv_echo); };
  } else {
    std::cerr << "error: no subcommand given\n";
    return 1;
  }

  const bool out_preexisted = fs::exists(out_dir);
  try {
    body();
  } catch (const LockContention& e) {
    // Nothing was written and the lock is the other run's to release.
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    // A directory created by this run is removed whole; a pre-existing one
    // may hold partial outputs from this failure, which is reported. A lock
    // this run held is already released by the time the exception lands here.
    std::error_code ec;
    if (!out_preexisted && fs::exists(out_dir)) {
      fs::remove_all(out_dir, ec);
    } else if (fs::exists(out_dir)) {
      std::cerr << "warning: partial outputs may remain in " << out_dir << "\n";
    }
    return 2;
  }
  return 0;
}
