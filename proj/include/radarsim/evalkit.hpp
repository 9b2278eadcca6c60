#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "radarsim/grid.hpp"
#include "radarsim/models.hpp"
#include "radarsim/nn/adam.hpp"
#include "radarsim/objectives.hpp"
#include "radarsim/rng.hpp"
#include "radarsim/worldsim.hpp"

namespace radarsim {

// Visibility-style labels from an elevation map: along each ray, measured
// cells rising above ground + threshold are returns and labeled occupied;
// measured near-ground cells strictly before the first return are free;
// everything else (unmeasured, or past the first return and not itself a
// return) is unknown.
namespace detail {

template <typename MeasuredFn>
inline OccupancyGrid label_rays(const Grid& heights, const PolarGridSpec& spec,
                                double ground_threshold_m, double ground_level_m,
                                MeasuredFn measured) {
  if (!(ground_threshold_m > 0))
    throw std::invalid_argument("occupancy_from_elevation: threshold must be > 0");
  const double lid = ground_level_m + ground_threshold_m;
  OccupancyGrid out(heights.rows, heights.cols);
  for (int i = 0; i < heights.rows; ++i) {
    int first_return = heights.cols;
    for (int j = 0; j < heights.cols; ++j) {
      if (measured(i, j) && unscale_height(heights.at(i, j), spec) > lid) {
        first_return = j;
        break;
      }
    }
    for (int j = 0; j < heights.cols; ++j) {
      Occupancy lab = Occupancy::unknown;
      if (measured(i, j)) {
        const double h = unscale_height(heights.at(i, j), spec);
        if (h > lid)
          lab = Occupancy::occupied;
        else if (j < first_return)
          lab = Occupancy::free_space;
      }
      out.at(i, j) = lab;
    }
  }
  return out;
}

}  // namespace detail

inline OccupancyGrid occupancy_from_elevation(const ElevationMap& src, double ground_threshold_m,
                                              double ground_level_m) {
  src.validate();
  return detail::label_rays(src.heights, src.grid, ground_threshold_m, ground_level_m,
                            [](int, int) { return true; });
}

inline OccupancyGrid occupancy_from_elevation(const PartialElevationMap& src,
                                              double ground_threshold_m, double ground_level_m) {
  src.validate();
  return detail::label_rays(src.heights, src.grid, ground_threshold_m, ground_level_m,
                            [&src](int i, int j) { return src.mask.at(i, j) != 0.0f; });
}

// Confusion counts over the two IoU-scored classes, accumulated dataset-wide
// before any division. A prediction of unknown on a labeled cell misses both
// classes, so it counts as a false negative for each; unknown-labeled cells
// only ever contribute false positives for the class wrongly predicted on
// them.
struct SegCounts {
  uint64_t tp[2] = {0, 0};
  uint64_t fp[2] = {0, 0};
  uint64_t fn[2] = {0, 0};

  void tally(const OccupancyGrid& pred, const OccupancyGrid& label) {
    if (pred.rows != label.rows || pred.cols != label.cols)
      throw std::invalid_argument("SegCounts: shape mismatch");
    for (size_t k = 0; k < pred.labels.size(); ++k) {
      const Occupancy p = pred.labels[k];
      const Occupancy l = label.labels[k];
      if (l == Occupancy::unknown) {
        if (p != Occupancy::unknown) ++fp[static_cast<int>(p)];
      } else if (p == l) {
        ++tp[static_cast<int>(l)];
      } else if (p == Occupancy::unknown) {
        ++fn[0];
        ++fn[1];
      } else {
        ++fn[static_cast<int>(l)];
        ++fp[static_cast<int>(p)];
      }
    }
  }

  SegCounts& operator+=(const SegCounts& o) {
    for (int c = 0; c < 2; ++c) {
      tp[c] += o.tp[c];
      fp[c] += o.fp[c];
      fn[c] += o.fn[c];
    }
    return *this;
  }
};

struct SegMetrics {
  SegCounts counts;
  double iou_free = 0, iou_occ = 0, miou = 0;
  bool free_undefined = false, occ_undefined = false;  // zero-denominator classes
};

inline SegMetrics finalize_seg_metrics(const SegCounts& c) {
  SegMetrics m;
  m.counts = c;
  const uint64_t df = c.tp[0] + c.fp[0] + c.fn[0];
  const uint64_t docc = c.tp[1] + c.fp[1] + c.fn[1];
  m.free_undefined = df == 0;
  m.occ_undefined = docc == 0;
  m.iou_free = df == 0 ? 0.0 : static_cast<double>(c.tp[0]) / static_cast<double>(df);
  m.iou_occ = docc == 0 ? 0.0 : static_cast<double>(c.tp[1]) / static_cast<double>(docc);
  m.miou = (m.iou_free + m.iou_occ) / 2.0;
  return m;
}

inline SegMetrics compute_miou(const OccupancyGrid& pred, const OccupancyGrid& label) {
  SegCounts c;
  c.tally(pred, label);
  return finalize_seg_metrics(c);
}

inline SegMetrics compute_miou(const std::vector<OccupancyGrid>& preds,
                               const std::vector<OccupancyGrid>& labels) {
  if (preds.size() != labels.size() || preds.empty())
    throw std::invalid_argument("compute_miou: size mismatch or empty");
  SegCounts c;
  for (size_t k = 0; k < preds.size(); ++k) c.tally(preds[k], labels[k]);
  return finalize_seg_metrics(c);
}

struct HeightMetrics {
  double mae_free_cm = 0, mae_occ_cm = 0, mae_mean_cm = 0;
  uint64_t count_free = 0, count_occ = 0;
  bool free_absent = false, occ_absent = false;
};

// Absolute height error in cm at measured cells, bucketed by the cell's
// label; unknown-labeled cells are skipped. A class with no measured cells is
// reported absent and the mean covers the present classes only.
struct HeightAccum {
  double sum_cm[2] = {0, 0};
  uint64_t cnt[2] = {0, 0};

  void add(const ElevationMap& pred, const PartialElevationMap& y, const OccupancyGrid& labels) {
    if (pred.heights.rows != y.heights.rows || pred.heights.cols != y.heights.cols ||
        labels.rows != y.heights.rows || labels.cols != y.heights.cols)
      throw std::invalid_argument("HeightAccum: shape mismatch");
    for (size_t k = 0; k < y.mask.v.size(); ++k) {
      if (y.mask.v[k] == 0.0f) continue;
      const Occupancy l = labels.labels[k];
      if (l == Occupancy::unknown) continue;
      const double err_cm =
          std::abs(unscale_height(pred.heights.v[k], pred.grid) -
                   unscale_height(y.heights.v[k], y.grid)) *
          100.0;
      sum_cm[static_cast<int>(l)] += err_cm;
      ++cnt[static_cast<int>(l)];
    }
  }

  HeightMetrics finalize() const {
    HeightMetrics m;
    m.count_free = cnt[0];
    m.count_occ = cnt[1];
    m.free_absent = cnt[0] == 0;
    m.occ_absent = cnt[1] == 0;
    m.mae_free_cm = cnt[0] == 0 ? 0.0 : sum_cm[0] / static_cast<double>(cnt[0]);
    m.mae_occ_cm = cnt[1] == 0 ? 0.0 : sum_cm[1] / static_cast<double>(cnt[1]);
    if (!m.free_absent && !m.occ_absent)
      m.mae_mean_cm = (m.mae_free_cm + m.mae_occ_cm) / 2.0;
    else if (!m.free_absent)
      m.mae_mean_cm = m.mae_free_cm;
    else if (!m.occ_absent)
      m.mae_mean_cm = m.mae_occ_cm;
    return m;
  }
};

inline HeightMetrics compute_height_mae(const ElevationMap& pred, const PartialElevationMap& y,
                                        const OccupancyGrid& labels) {
  HeightAccum a;
  a.add(pred, y, labels);
  return a.finalize();
}

// Radar either comes from the learned forward model with fresh latent noise
// or straight from the fixed oracle sensor (the benchmark upper baseline).
struct OracleSensor {
  OracleSensorParams params;
};
struct CheckpointSensor {
  nn::ResNetGenerator<float>* gx = nullptr;
};
using SensorSource = std::variant<OracleSensor, CheckpointSensor>;

struct EvalParams {
  double ground_threshold_m = 0.3;
  int samples_per_scene = 6;      // stochastic radar draws per training scene
  double holdout_fraction = 0.1;  // scene fraction held out for epoch selection
  int max_epochs = 4;
  int batch_size = 8;
  double occupied_weight = 50.0;
  nn::AdamConfig adam{1e-3, 0.9, 0.999, 1e-8};
  KappaPolicy kappa = KappaPolicy::pinned_single;
  int kappa_average_draws = 8;

  void validate() const {
    if (!(ground_threshold_m > 0)) throw std::invalid_argument("eval: threshold must be > 0");
    if (samples_per_scene < 1) throw std::invalid_argument("eval: samples_per_scene must be >= 1");
    if (!(holdout_fraction > 0) || holdout_fraction >= 1)
      throw std::invalid_argument("eval: holdout fraction must be in (0,1)");
    if (max_epochs < 1 || batch_size < 1) throw std::invalid_argument("eval: epochs/batch invalid");
    if (!(occupied_weight > 0)) throw std::invalid_argument("eval: occupied weight must be > 0");
    if (kappa_average_draws < 1) throw std::invalid_argument("eval: average draws must be >= 1");
  }
};

namespace detail {

inline RadarFrame draw_radar(const SensorSource& src, const ElevationMap& w,
                             const PolarGridSpec& spec, uint64_t seed, const char* label,
                             uint64_t index) {
  if (const auto* oracle = std::get_if<OracleSensor>(&src)) {
    return oracle_radar(w, oracle->params, Rng::stream(seed, label, index).state());
  }
  const auto& ckpt = std::get<CheckpointSensor>(src);
  Rng r = Rng::stream(seed, label, index);
  const LatentNoise eps = make_latent(spec, r);
  return forward_generator(w, eps, *ckpt.gx);
}

inline OccupancyGrid argmax_labels(const nn::Tensor<float>& logits, int sample) {
  OccupancyGrid out(logits.h, logits.w);
  const float* p0 = logits.plane(sample, 0);
  const float* p1 = logits.plane(sample, 1);
  const float* p2 = logits.plane(sample, 2);
  for (size_t k = 0; k < out.labels.size(); ++k) {
    int best = 0;
    float bv = p0[k];
    if (p1[k] > bv) {
      best = 1;
      bv = p1[k];
    }
    if (p2[k] > bv) best = 2;
    out.labels[k] = static_cast<Occupancy>(best);
  }
  return out;
}

struct LabeledScene {
  ElevationMap w;
  OccupancyGrid labels;
};

inline std::vector<LabeledScene> load_labeled_split(const DatasetManifest& man, Split split,
                                                    double threshold_m) {
  std::vector<LabeledScene> out;
  for (const ManifestEntry* e : man.split_entries(split)) {
    LabeledScene s{ElevationMap(man.grid), OccupancyGrid()};
    s.w.heights = man.load(*e, "elevation");
    s.labels = occupancy_from_elevation(s.w, threshold_m, e->ground_m);
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace detail

// Downstream realism probe: train a fresh segmenter purely on radar drawn
// from the given sensor over simulator scenes, select the best of up to
// max_epochs on a held-out scene fraction, then score it on the real-domain
// test radar. One independent run per seed.
inline std::vector<SegMetrics> run_downstream_eval(const SensorSource& sensor,
                                                   const DatasetManifest& manifest,
                                                   const SegmenterConfig& seg_cfg,
                                                   const EvalParams& params,
                                                   const std::vector<uint64_t>& seeds) {
  params.validate();
  nn::pin_blas_single_thread();
  const PolarGridSpec& spec = manifest.grid;
  const auto strain = detail::load_labeled_split(manifest, Split::s_train, params.ground_threshold_m);
  if (strain.empty()) throw std::runtime_error("downstream eval: manifest lacks S-train entries");

  std::vector<RadarFrame> test_x;
  std::vector<OccupancyGrid> test_labels;
  for (const ManifestEntry* e : manifest.split_entries(Split::r_test)) {
    RadarFrame x(spec);
    x.power = manifest.load(*e, "radar");
    test_x.push_back(std::move(x));
    ElevationMap w(spec);
    w.heights = manifest.load(*e, "elevation");
    test_labels.push_back(occupancy_from_elevation(w, params.ground_threshold_m, e->ground_m));
  }
  if (test_x.empty()) throw std::runtime_error("downstream eval: manifest lacks R-test entries");

  const double class_weights[3] = {1.0, params.occupied_weight, 1.0};
  std::vector<SegMetrics> per_seed;

  for (const uint64_t seed : seeds) {
    const uint64_t n_scenes = strain.size();
    std::vector<uint64_t> perm;
    shuffled_indices(seed, "holdout", 0, n_scenes, perm);
    const uint64_t n_hold = std::max<uint64_t>(
        1, static_cast<uint64_t>(std::llround(params.holdout_fraction * static_cast<double>(n_scenes))));
    std::vector<uint64_t> hold_idx(perm.begin(), perm.begin() + n_hold);
    std::vector<uint64_t> train_idx(perm.begin() + n_hold, perm.end());
    if (train_idx.empty()) throw std::runtime_error("downstream eval: no scenes left to train on");

    struct Sample {
      RadarFrame x;
      const OccupancyGrid* labels;
    };
    std::vector<Sample> train;
    train.reserve(train_idx.size() * params.samples_per_scene);
    for (size_t k = 0; k < train_idx.size(); ++k) {
      const auto& sc = strain[train_idx[k]];
      for (int d = 0; d < params.samples_per_scene; ++d) {
        const uint64_t draw =
            static_cast<uint64_t>(k) * static_cast<uint64_t>(params.samples_per_scene) + d;
        train.push_back({detail::draw_radar(sensor, sc.w, spec, seed, "train-draw", draw), &sc.labels});
      }
    }
    std::vector<Sample> hold;
    for (size_t k = 0; k < hold_idx.size(); ++k) {
      const auto& sc = strain[hold_idx[k]];
      hold.push_back({detail::draw_radar(sensor, sc.w, spec, seed, "holdout-draw", k), &sc.labels});
    }

    nn::UNetSegmenter<float> seg(seg_cfg);
    Rng ri = Rng::stream(seed, "seg-init");
    seg.init(ri);
    nn::AdamGroup adam_group;

    std::vector<nn::Tensor<float>> best_vals;
    double best_miou = -1.0;
    const int H = spec.num_azimuths, W = spec.num_range_bins;

    for (int epoch = 0; epoch < params.max_epochs; ++epoch) {
      std::vector<uint64_t> order;
      shuffled_indices(seed, "seg-order", static_cast<uint64_t>(epoch), train.size(), order);
      for (size_t start = 0; start < order.size(); start += params.batch_size) {
        const int bs = static_cast<int>(
            std::min<size_t>(params.batch_size, order.size() - start));
        nn::Tensor<float> in(bs, 1, H, W);
        std::vector<const OccupancyGrid*> labs(bs);
        for (int b = 0; b < bs; ++b) {
          const Sample& s = train[order[start + b]];
          std::copy(s.x.power.v.begin(), s.x.power.v.end(), in.plane(b, 0));
          labs[b] = s.labels;
        }
        const nn::Tensor<float> logits = seg.forward(in);
        const double loss = weighted_cross_entropy(logits, labs, class_weights);
        if (!std::isfinite(loss))
          throw std::runtime_error("downstream eval: segmenter loss diverged");
        const nn::Tensor<float> g = weighted_cross_entropy_grad(logits, labs, class_weights);
        nn::zero_grads(seg.params());
        seg.backward(g, true);
        nn::adam_step(seg.params(), params.adam, adam_group);
      }

      SegCounts hc;
      for (const Sample& s : hold) {
        nn::Tensor<float> in(1, 1, H, W);
        std::copy(s.x.power.v.begin(), s.x.power.v.end(), in.plane(0, 0));
        hc.tally(detail::argmax_labels(seg.forward(in), 0), *s.labels);
      }
      const SegMetrics hm = finalize_seg_metrics(hc);
      if (hm.miou > best_miou) {
        best_miou = hm.miou;
        best_vals.clear();
        for (const auto* p : seg.params()) best_vals.push_back(p->val);
      }
    }

    {
      auto ps = seg.params();
      for (size_t k = 0; k < ps.size(); ++k) ps[k]->val = best_vals[k];
    }

    SegCounts rc;
    for (size_t k = 0; k < test_x.size(); ++k) {
      nn::Tensor<float> in(1, 1, H, W);
      std::copy(test_x[k].power.v.begin(), test_x[k].power.v.end(), in.plane(0, 0));
      rc.tally(detail::argmax_labels(seg.forward(in), 0), test_labels[k]);
    }
    per_seed.push_back(finalize_seg_metrics(rc));
  }
  return per_seed;
}

// Backward-model probe: predict elevation from real test radar and score the
// masked height error against the lidar partial maps.
inline HeightMetrics run_height_eval(nn::ResNetGenerator<float>& gw, const DatasetManifest& manifest,
                                     const EvalParams& params, uint64_t seed) {
  params.validate();
  nn::pin_blas_single_thread();
  const PolarGridSpec& spec = manifest.grid;
  HeightAccum acc;
  uint64_t idx = 0;
  const auto entries = manifest.split_entries(Split::r_test);
  if (entries.empty()) throw std::runtime_error("height eval: manifest lacks R-test entries");
  for (const ManifestEntry* e : entries) {
    RadarFrame x(spec);
    x.power = manifest.load(*e, "radar");
    PartialElevationMap y(spec);
    y.heights = manifest.load(*e, "partial");
    y.mask = manifest.load(*e, "elevation_mask");
    ElevationMap w(spec);
    w.heights = manifest.load(*e, "elevation");
    const OccupancyGrid labels = occupancy_from_elevation(w, params.ground_threshold_m, e->ground_m);

    ElevationMap pred(spec);
    if (params.kappa == KappaPolicy::average) {
      Grid sum(spec.num_azimuths, spec.num_range_bins);
      for (int a = 0; a < params.kappa_average_draws; ++a) {
        Rng r = Rng::stream(seed, "kappa-eval-avg",
                            idx * static_cast<uint64_t>(params.kappa_average_draws) + a);
        const LatentNoise kappa = make_latent(spec, r);
        const ElevationMap one = backward_generator(x, kappa, gw);
        for (size_t k = 0; k < sum.v.size(); ++k) sum.v[k] += one.heights.v[k];
      }
      for (auto& v : sum.v) v /= static_cast<float>(params.kappa_average_draws);
      pred.heights = std::move(sum);
    } else if (params.kappa == KappaPolicy::zero_noise) {
      LatentNoise kappa{Grid(spec.num_azimuths, spec.num_range_bins)};
      pred = backward_generator(x, kappa, gw);
    } else {
      Rng r = Rng::stream(seed, "kappa-eval", idx);
      const LatentNoise kappa = make_latent(spec, r);
      pred = backward_generator(x, kappa, gw);
    }
    acc.add(pred, y, labels);
    ++idx;
  }
  return acc.finalize();
}

// Mean and sample standard deviation (0 when fewer than two values).
inline std::pair<double, double> mean_std(const std::vector<double>& xs) {
  if (xs.empty()) throw std::invalid_argument("mean_std: empty");
  double m = 0;
  for (double x : xs) m += x;
  m /= static_cast<double>(xs.size());
  if (xs.size() < 2) return {m, 0.0};
  double s = 0;
  for (double x : xs) s += (x - m) * (x - m);
  return {m, std::sqrt(s / static_cast<double>(xs.size() - 1))};
}

}  // namespace radarsim
