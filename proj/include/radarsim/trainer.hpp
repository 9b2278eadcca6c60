#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "radarsim/checkpoint.hpp"
#include "radarsim/grid.hpp"
#include "radarsim/io.hpp"
#include "radarsim/models.hpp"
#include "radarsim/nn/adam.hpp"
#include "radarsim/objectives.hpp"
#include "radarsim/rng.hpp"
#include "radarsim/worldsim.hpp"

namespace radarsim {

// Which grid feeds the forward generator: measured partial maps (aligned
// ablations) or dense simulated elevations (unaligned ablations).
enum class ForwardInput { partial_y, sim_w };

enum class DataRole { x_star, y, w };

struct AblationSpec {
  std::string name;
  std::set<Term> active;
  ForwardInput forward_input = ForwardInput::sim_w;
  std::set<DataRole> needs;

  bool has(Term t) const { return active.count(t) != 0; }
  bool needs_role(DataRole r) const { return needs.count(r) != 0; }
};

// The five ablation rows: (a) paired regression from partial maps,
// (b) regression plus adversarial, (c) adversarial only from simulation,
// (d) two-sided adversarial with cycles, (e) full objective with masked
// alignment on the backward map.
inline AblationSpec ablation_preset(const std::string& name) {
  AblationSpec s;
  s.name = name;
  if (name == "a") {
    s.active = {Term::a_x};
    s.forward_input = ForwardInput::partial_y;
    s.needs = {DataRole::x_star, DataRole::y};
  } else if (name == "b") {
    s.active = {Term::a_x, Term::g_x};
    s.forward_input = ForwardInput::partial_y;
    s.needs = {DataRole::x_star, DataRole::y};
  } else if (name == "c") {
    s.active = {Term::g_x};
    s.forward_input = ForwardInput::sim_w;
    s.needs = {DataRole::x_star, DataRole::w};
  } else if (name == "d") {
    s.active = {Term::g_x, Term::g_w, Term::c_x, Term::c_w};
    s.forward_input = ForwardInput::sim_w;
    s.needs = {DataRole::x_star, DataRole::w};
  } else if (name == "e") {
    s.active = {Term::a_w, Term::g_x, Term::g_w, Term::c_x, Term::c_w};
    s.forward_input = ForwardInput::sim_w;
    s.needs = {DataRole::x_star, DataRole::y, DataRole::w};
  } else {
    throw std::invalid_argument("unknown ablation preset: " + name);
  }
  return s;
}

struct TrainConfig {
  uint64_t steps = 500000;
  nn::AdamConfig adam;  // lr 2e-4, betas (0.5, 0.999)
  int batch_size = 1;   // fixed; asserted by validate
  LossWeights weights;
  uint64_t seed = 0;
  uint64_t checkpoint_every = 0;  // 0: final checkpoint only
  int pool_capacity = 50;

  void validate() const {
    if (steps < 1) throw std::invalid_argument("TrainConfig: steps must be >= 1");
    if (batch_size != 1) throw std::invalid_argument("TrainConfig: generator batch size is fixed at 1");
    if (pool_capacity < 1) throw std::invalid_argument("TrainConfig: pool capacity must be >= 1");
    weights.validate();
  }
};

// One sample per split; pointers remain owned by the caller.
struct TrainBatch {
  const RadarFrame* x_star = nullptr;
  const PartialElevationMap* y = nullptr;
  const ElevationMap* w = nullptr;
};

struct TrainState {
  ModelParameters models;
  ImagePool pool_x;
  ImagePool pool_w;

  TrainState(const GeneratorConfig& gen, const DiscriminatorConfig& disc,
             const SegmenterConfig& seg, uint64_t seed)
      : models(init_parameters(gen, disc, seg, seed)),
        pool_x(50, Rng::stream(seed, "pool-x")),
        pool_w(50, Rng::stream(seed, "pool-w")) {}

  TrainState(const GeneratorConfig& gen, const DiscriminatorConfig& disc,
             const SegmenterConfig& seg, uint64_t seed, int pool_capacity)
      : models(init_parameters(gen, disc, seg, seed)),
        pool_x(pool_capacity, Rng::stream(seed, "pool-x")),
        pool_w(pool_capacity, Rng::stream(seed, "pool-w")) {}
};

namespace detail {

inline void add_into(nn::Tensor<float>& acc, const nn::Tensor<float>& g) {
  for (size_t k = 0; k < acc.v.size(); ++k) acc.v[k] += g.v[k];
}

// Adds channel 0 of a [1,2,H,W] input gradient into a [1,1,H,W] accumulator.
inline void add_channel0(nn::Tensor<float>& acc, const nn::Tensor<float>& g2) {
  const float* src = g2.plane(0, 0);
  for (size_t k = 0; k < acc.v.size(); ++k) acc.v[k] += src[k];
}

inline nn::Tensor<float> grid_tensor(const Grid& g) {
  nn::Tensor<float> t(1, 1, g.rows, g.cols);
  t.v = g.v;
  return t;
}

inline void check_finite(const LossBreakdown& b, uint64_t step) {
  auto bad = [](const std::optional<double>& v) { return v && !std::isfinite(*v); };
  if (bad(b.a_x) || bad(b.a_w) || bad(b.g_x) || bad(b.g_w) || bad(b.c_x) || bad(b.c_w) ||
      bad(b.d_x) || bad(b.d_w) || !std::isfinite(b.total)) {
    std::ostringstream os;
    os << "training diverged at step " << step << ":";
    auto put = [&os](const char* n, const std::optional<double>& v) {
      if (v) os << " " << n << "=" << *v;
    };
    put("a_x", b.a_x);
    put("a_w", b.a_w);
    put("g_x", b.g_x);
    put("g_w", b.g_w);
    put("c_x", b.c_x);
    put("c_w", b.c_w);
    put("d_x", b.d_x);
    put("d_w", b.d_w);
    os << " total=" << b.total;
    throw std::runtime_error(os.str());
  }
}

}  // namespace detail

// One optimization step at generator batch size 1: generator phases first
// (gradients for theta_x and theta_w accumulate across both directions, one
// Adam step per group), then each active discriminator updates on the real
// sample and a pool-replayed fake.
inline LossBreakdown train_step(TrainState& st, const TrainBatch& batch, const AblationSpec& ab,
                                const TrainConfig& cfg, const PolarGridSpec& grid) {
  const uint64_t step = st.models.step;
  if (ab.needs_role(DataRole::x_star) && batch.x_star == nullptr)
    throw std::invalid_argument("train_step: preset " + ab.name + " needs a real radar sample");
  if (ab.needs_role(DataRole::y) && batch.y == nullptr)
    throw std::invalid_argument("train_step: preset " + ab.name + " needs a partial map sample");
  if (ab.needs_role(DataRole::w) && batch.w == nullptr)
    throw std::invalid_argument("train_step: preset " + ab.name + " needs a simulated elevation sample");

  const LossWeights& lw = cfg.weights;
  LossBreakdown out;

  const bool branch_a = ab.has(Term::a_x) || ab.has(Term::g_x) || ab.has(Term::c_w);
  const bool branch_b = ab.has(Term::a_w) || ab.has(Term::g_w) || ab.has(Term::c_x);
  const bool train_theta_w = branch_b || ab.has(Term::c_w);

  nn::zero_grads(st.models.theta_x());
  if (train_theta_w) nn::zero_grads(st.models.theta_w());

  nn::Tensor<float> x_fake_detached;
  nn::Tensor<float> w_fake_detached;
  nn::Tensor<float> x_star_t;
  if (batch.x_star != nullptr) x_star_t = detail::grid_tensor(batch.x_star->power);

  // Forward direction: simulate radar, score it, optionally cycle back.
  if (branch_a) {
    const Grid& fwd_in =
        ab.forward_input == ForwardInput::partial_y ? batch.y->heights : batch.w->heights;
    Rng eps_rng = Rng::stream(cfg.seed, "eps-a", step);
    const LatentNoise eps = make_latent(grid, eps_rng);
    const nn::Tensor<float> in_a = detail::stack2(fwd_in, eps.values);
    const nn::Tensor<float> x_prime = st.models.gx.forward(in_a);
    nn::Tensor<float> grad_xp(1, 1, x_prime.h, x_prime.w);
    grad_xp.zero();

    if (ab.has(Term::a_x)) {
      out.a_x = l1_mean(x_prime.v, x_star_t.v);
      nn::Tensor<float> g(1, 1, x_prime.h, x_prime.w);
      l1_mean_grad(x_prime.v, x_star_t.v, 1.0f, g.v);
      detail::add_into(grad_xp, g);
    }
    if (ab.has(Term::g_x)) {
      const nn::Tensor<float> s = st.models.dx.forward(x_prime);
      out.g_x = lsgan_generator_loss(s.v);
      nn::Tensor<float> gs(s.n, s.c, s.h, s.w);
      lsgan_generator_loss_grad(s.v, 1.0f, gs.v);
      detail::add_into(grad_xp, st.models.dx.backward(gs, true, false));
      x_fake_detached = x_prime;
    }
    if (ab.has(Term::c_w)) {
      Rng kap_rng = Rng::stream(cfg.seed, "kappa-a", step);
      const LatentNoise kappa = make_latent(grid, kap_rng);
      nn::Tensor<float> in_cyc(1, 2, x_prime.h, x_prime.w);
      std::copy(x_prime.v.begin(), x_prime.v.end(), in_cyc.plane(0, 0));
      std::copy(kappa.values.v.begin(), kappa.values.v.end(), in_cyc.plane(0, 1));
      const nn::Tensor<float> w_cycle = st.models.gw.forward(in_cyc);
      out.c_w = l1_mean(batch.w->heights.v, w_cycle.v);
      nn::Tensor<float> seed_g(1, 1, w_cycle.h, w_cycle.w);
      l1_mean_grad(w_cycle.v, batch.w->heights.v, static_cast<float>(lw.lambda_cw), seed_g.v);
      const nn::Tensor<float> gin = st.models.gw.backward(seed_g, true, true);
      detail::add_channel0(grad_xp, gin);
    }
    st.models.gx.backward(grad_xp, false, true);
  }

  // Backward direction: infer elevation from real radar, score and align it,
  // optionally cycle back to radar.
  if (branch_b) {
    Rng kap_rng = Rng::stream(cfg.seed, "kappa-b", step);
    const LatentNoise kappa = make_latent(grid, kap_rng);
    const nn::Tensor<float> in_b = detail::stack2(batch.x_star->power, kappa.values);
    const nn::Tensor<float> w_prime = st.models.gw.forward(in_b);
    nn::Tensor<float> grad_wp(1, 1, w_prime.h, w_prime.w);
    grad_wp.zero();

    if (ab.has(Term::a_w)) {
      out.a_w = masked_l1_mean(w_prime.v, batch.y->heights.v, batch.y->mask.v);
      nn::Tensor<float> g(1, 1, w_prime.h, w_prime.w);
      masked_l1_mean_grad(w_prime.v, batch.y->heights.v, batch.y->mask.v,
                          static_cast<float>(lw.lambda_aw), g.v);
      detail::add_into(grad_wp, g);
    }
    if (ab.has(Term::g_w)) {
      const nn::Tensor<float> s = st.models.dw.forward(w_prime);
      out.g_w = lsgan_generator_loss(s.v);
      nn::Tensor<float> gs(s.n, s.c, s.h, s.w);
      lsgan_generator_loss_grad(s.v, static_cast<float>(lw.lambda_gw), gs.v);
      detail::add_into(grad_wp, st.models.dw.backward(gs, true, false));
      w_fake_detached = w_prime;
    }
    if (ab.has(Term::c_x)) {
      Rng eps_rng = Rng::stream(cfg.seed, "eps-b", step);
      const LatentNoise eps = make_latent(grid, eps_rng);
      nn::Tensor<float> in_cyc(1, 2, w_prime.h, w_prime.w);
      std::copy(w_prime.v.begin(), w_prime.v.end(), in_cyc.plane(0, 0));
      std::copy(eps.values.v.begin(), eps.values.v.end(), in_cyc.plane(0, 1));
      const nn::Tensor<float> x_cycle = st.models.gx.forward(in_cyc);
      out.c_x = l1_mean(x_star_t.v, x_cycle.v);
      nn::Tensor<float> seed_g(1, 1, x_cycle.h, x_cycle.w);
      l1_mean_grad(x_cycle.v, x_star_t.v, static_cast<float>(lw.lambda_cx), seed_g.v);
      const nn::Tensor<float> gin = st.models.gx.backward(seed_g, true, true);
      detail::add_channel0(grad_wp, gin);
    }
    st.models.gw.backward(grad_wp, false, true);
  }

  if (branch_a || ab.has(Term::c_x)) nn::adam_step(st.models.theta_x(), cfg.adam, st.models.adam_theta_x);
  if (train_theta_w) nn::adam_step(st.models.theta_w(), cfg.adam, st.models.adam_theta_w);

  // Discriminator updates, one per adversarial term, on a pool-replayed fake.
  // The real-side and fake-side score gradients are independent of each
  // other, so each pass can backpropagate before the next forward reuses the
  // single-slot layer caches.
  auto update_discriminator = [&cfg](nn::PatchDiscriminator<float>& d,
                                     std::vector<nn::Param<float>*> params, nn::AdamGroup& group,
                                     const nn::Tensor<float>& real,
                                     const nn::Tensor<float>& fake) -> double {
    nn::zero_grads(params);
    const nn::Tensor<float> sr = d.forward(real);
    nn::Tensor<float> gr(sr.n, sr.c, sr.h, sr.w);
    for (size_t k = 0; k < sr.v.size(); ++k)
      gr.v[k] = 2.0f * (sr.v[k] - 1.0f) / static_cast<float>(sr.v.size());
    d.backward(gr, false, true);
    const nn::Tensor<float> sf = d.forward(fake);
    nn::Tensor<float> gf(sf.n, sf.c, sf.h, sf.w);
    for (size_t k = 0; k < sf.v.size(); ++k)
      gf.v[k] = 2.0f * sf.v[k] / static_cast<float>(sf.v.size());
    d.backward(gf, false, true);
    nn::adam_step(params, cfg.adam, group);
    return lsgan_discriminator_loss(sr.v, sf.v);
  };

  if (ab.has(Term::g_x)) {
    const nn::Tensor<float> fake = st.pool_x.query(x_fake_detached);
    out.d_x = update_discriminator(st.models.dx, st.models.beta_x(), st.models.adam_beta_x,
                                   x_star_t, fake);
  }
  if (ab.has(Term::g_w)) {
    const nn::Tensor<float> w_real = detail::grid_tensor(batch.w->heights);
    const nn::Tensor<float> fake = st.pool_w.query(w_fake_detached);
    out.d_w = update_discriminator(st.models.dw, st.models.beta_w(), st.models.adam_beta_w,
                                   w_real, fake);
  }

  out = combined_generator_objective(out, lw, ab.active);
  detail::check_finite(out, step + 1);
  st.models.step = step + 1;
  return out;
}

struct TrainResult {
  std::filesystem::path final_checkpoint;
  std::filesystem::path metrics_csv;
  std::vector<LossBreakdown> history;
};

namespace detail {

struct TrainData {
  std::vector<RadarFrame> r_x;
  std::vector<PartialElevationMap> r_y;
  std::vector<ElevationMap> s_w;
};

inline TrainData load_train_data(const DatasetManifest& man, const AblationSpec& ab) {
  TrainData d;
  const bool need_r = ab.needs_role(DataRole::x_star) || ab.needs_role(DataRole::y);
  const bool need_s = ab.needs_role(DataRole::w);
  if (need_r) {
    for (const ManifestEntry* e : man.split_entries(Split::r_train)) {
      RadarFrame x(man.grid);
      x.power = man.load(*e, "radar");
      d.r_x.push_back(std::move(x));
      if (ab.needs_role(DataRole::y)) {
        PartialElevationMap y(man.grid);
        y.heights = man.load(*e, "partial");
        y.mask = man.load(*e, "elevation_mask");
        d.r_y.push_back(std::move(y));
      }
    }
    if (d.r_x.empty()) throw std::runtime_error("dataset has no real-sensor training entries");
  }
  if (need_s) {
    for (const ManifestEntry* e : man.split_entries(Split::s_train)) {
      ElevationMap w(man.grid);
      w.heights = man.load(*e, "elevation");
      d.s_w.push_back(std::move(w));
    }
    if (d.s_w.empty()) throw std::runtime_error("dataset has no simulator training entries");
  }
  return d;
}

inline std::string csv_cell(const std::optional<double>& v) {
  return v ? format_double(*v) : std::string();
}

}  // namespace detail

// Full training loop over a dataset manifest. Sample order is enforced per
// split and epoch: the longer split defines the epoch boundary, the shorter
// one cycles through independently reshuffled passes. Writes metrics.csv (one
// row per step, absent terms left empty) and periodic checkpoints into
// out_dir; optionally resumes from an existing checkpoint, which reproduces
// the uninterrupted run bit for bit.
inline TrainResult run_training(const TrainConfig& cfg, const AblationSpec& ab,
                                const PolarGridSpec& grid, const GeneratorConfig& gen_cfg,
                                const DiscriminatorConfig& disc_cfg, const SegmenterConfig& seg_cfg,
                                const DatasetManifest& data, const std::filesystem::path& out_dir,
                                const std::string& config_echo,
                                const std::filesystem::path* resume_from = nullptr) {
  cfg.validate();
  grid.validate();
  const detail::TrainData td = detail::load_train_data(data, ab);

  TrainState st(gen_cfg, disc_cfg, seg_cfg, cfg.seed, cfg.pool_capacity);
  if (resume_from != nullptr) load_checkpoint(*resume_from, st.models, st.pool_x, st.pool_w);
  if (st.models.step >= cfg.steps)
    throw std::invalid_argument("resume checkpoint is already at or past the requested step count");

  std::filesystem::create_directories(out_dir);
  const std::filesystem::path csv_path = out_dir / "metrics.csv";
  std::ofstream csv(csv_path, std::ios::trunc);
  if (!csv) throw std::runtime_error("cannot write " + csv_path.string());
  csv << "step,a_x,a_w,g_x,g_w,c_x,c_w,d_x,d_w,total\n";

  const bool need_r = ab.needs_role(DataRole::x_star) || ab.needs_role(DataRole::y);
  const bool need_s = ab.needs_role(DataRole::w);
  const uint64_t len_r = td.r_x.size();
  const uint64_t len_s = td.s_w.size();

  std::vector<uint64_t> order_r, order_s;
  uint64_t cached_epoch_r = ~0ull, cached_epoch_s = ~0ull;

  TrainResult res;
  res.metrics_csv = csv_path;
  std::filesystem::path last_ckpt;

  for (uint64_t step = st.models.step; step < cfg.steps; ++step) {
    TrainBatch batch;
    if (need_r) {
      const uint64_t epoch = step / len_r;
      if (epoch != cached_epoch_r) {
        shuffled_indices(cfg.seed, "order-R", epoch, len_r, order_r);
        cached_epoch_r = epoch;
      }
      const uint64_t idx = order_r[step % len_r];
      batch.x_star = &td.r_x[idx];
      if (ab.needs_role(DataRole::y)) batch.y = &td.r_y[idx];
    }
    if (need_s) {
      const uint64_t epoch = step / len_s;
      if (epoch != cached_epoch_s) {
        shuffled_indices(cfg.seed, "order-S", epoch, len_s, order_s);
        cached_epoch_s = epoch;
      }
      batch.w = &td.s_w[order_s[step % len_s]];
    }

    const LossBreakdown b = train_step(st, batch, ab, cfg, grid);
    res.history.push_back(b);

    csv << (step + 1) << ',' << detail::csv_cell(b.a_x) << ',' << detail::csv_cell(b.a_w) << ','
        << detail::csv_cell(b.g_x) << ',' << detail::csv_cell(b.g_w) << ','
        << detail::csv_cell(b.c_x) << ',' << detail::csv_cell(b.c_w) << ','
        << detail::csv_cell(b.d_x) << ',' << detail::csv_cell(b.d_w) << ','
        << format_double(b.total) << '\n';

    const uint64_t done = step + 1;
    if ((cfg.checkpoint_every > 0 && done % cfg.checkpoint_every == 0) || done == cfg.steps) {
      csv.flush();
      last_ckpt = out_dir / ("ckpt_" + std::to_string(done) + ".bin");
      save_checkpoint(last_ckpt, st.models, st.pool_x, st.pool_w, config_echo);
    }
  }

  res.final_checkpoint = last_ckpt;
  return res;
}

}  // namespace radarsim
