#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "camcls/cam.hpp"
#include "camcls/cpe.hpp"
#include "camcls/data.hpp"
#include "camcls/model.hpp"
#include "camcls/parallel.hpp"
#include "camcls/snapmix.hpp"
#include "camcls/tta.hpp"

namespace camcls {

struct TrainConfig {
  size_t epochs = 20;
  size_t batch_size = 8;
  double learning_rate = 0.01;
  double momentum = 0.9;
  double alpha = 1.0;  // SnapMix Beta parameter
  bool snapmix_enabled = true;
  bool cpe_enabled = true;
  bool cosine_lr = true;
  uint64_t seed = 0;
  std::optional<TtaConfig> eval_tta;

  void validate() const {
    if (epochs < 1) throw ConfigError("train: epochs must be at least 1");
    if (batch_size < 1) throw ConfigError("train: batch_size must be at least 1");
    if (learning_rate <= 0.0) throw ConfigError("train: learning_rate must be positive");
    if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("train: momentum must lie in [0, 1)");
    if (alpha <= 0.0) throw ConfigError("train: alpha must be positive");
  }
};

struct Metrics {
  size_t tp = 0, fp = 0, tn = 0, fn = 0;
  double accuracy = 0.0, precision = 0.0, recall = 0.0, f1 = 0.0;
  bool degenerate = false;  // some denominator was zero

  static Metrics from_counts(size_t tp, size_t fp, size_t tn, size_t fn) {
    Metrics m;
    m.tp = tp;
    m.fp = fp;
    m.tn = tn;
    m.fn = fn;
    const size_t total = tp + fp + tn + fn;
    if (total > 0)
      m.accuracy = static_cast<double>(tp + tn) / static_cast<double>(total);
    else
      m.degenerate = true;
    if (tp + fp > 0)
      m.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    else
      m.degenerate = true;
    if (tp + fn > 0)
      m.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
    else
      m.degenerate = true;
    if (m.precision + m.recall > 0.0)
      m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
    else
      m.degenerate = true;
    return m;
  }
};

// Class sign conventions: ground truth during training, prediction at
// test time.
inline int label_sign(int label) { return label == 1 ? 1 : -1; }

// Sign driving patch scoring on a mixed sample: the dominant label by
// soft weight; exact balance resolves to +1.
template <typename T>
int dominant_sign(const VirtualSample<T>& vs) {
  const double s = vs.weight_a * vs.label_a + vs.weight_b * vs.label_b -
                   0.5 * (vs.weight_a + vs.weight_b);
  return s >= 0.0 ? 1 : -1;
}

// Cells feeding the CPE term, scored by the clamped CAM of the (possibly
// mixed) image at feature-grid resolution.
template <typename T>
SelectedCells cpe_cells_for(const Tensor<T>& feature_nchw, const ModelT<T>& m,
                            const VirtualSample<T>& vs) {
  const size_t c = m.config.channels, g = m.config.grid_size;
  Tensor<T> raw = cam_from_feature(feature_nchw.reshaped({c, g, g}), m.head_weight,
                                   dominant_sign(vs));
  for (T& v : raw.data) v = v > T(0) ? v : T(0);
  return select_cells(raw);
}

namespace detail {

template <typename T>
int cpe_node_for_cells(Tape<T>& tape, int feature, const SelectedCells& cells) {
  const int u1 = tape.cell_vector(feature, cells.u1.first, cells.u1.second);
  const int u2 = tape.cell_vector(feature, cells.u2.first, cells.u2.second);
  const int v1 = tape.cell_vector(feature, cells.v1.first, cells.v1.second);
  const int v2 = tape.cell_vector(feature, cells.v2.first, cells.v2.second);
  return cpe_loss_node(tape, u1, u2, v1, v2);
}

}  // namespace detail

// Per-sample training objective: mixed BCE plus, when enabled, the CPE
// term summed in unweighted.
template <typename T>
int sample_loss_node(Tape<T>& tape, const ModelParamVars& vars, const ModelT<T>& m,
                     const VirtualSample<T>& vs, bool cpe_enabled,
                     SelectedCells* out_cells = nullptr) {
  const TapeForward f = forward_on_tape(tape, vars, m, vs.image);
  int loss = mixed_bce_node(tape, f.logit, vs);
  if (cpe_enabled) {
    const SelectedCells cells = cpe_cells_for(tape.value(f.feature), m, vs);
    if (out_cells) *out_cells = cells;
    loss = tape.add(loss, detail::cpe_node_for_cells(tape, f.feature, cells));
  }
  return loss;
}

// Same objective with the discrete cell selection pinned; this is the
// function the optimizer actually differentiates, and what the
// finite-difference checks probe.
template <typename T>
int sample_loss_node_frozen(Tape<T>& tape, const ModelParamVars& vars, const ModelT<T>& m,
                            const VirtualSample<T>& vs, const SelectedCells& cells) {
  const TapeForward f = forward_on_tape(tape, vars, m, vs.image);
  int loss = mixed_bce_node(tape, f.logit, vs);
  loss = tape.add(loss, detail::cpe_node_for_cells(tape, f.feature, cells));
  return loss;
}

// Builds the virtual sample for one (sample, partner) pair under the
// current model.
inline VirtualSample<float> make_virtual(const Model& model, const Sample& sample,
                                         const Sample& partner, const TrainConfig& cfg, Rng& rng,
                                         const Heatmap<float>* heat_a = nullptr,
                                         const Heatmap<float>* heat_b = nullptr) {
  if (!cfg.snapmix_enabled) return identity_sample(sample.image, sample.label);
  Heatmap<float> local_a, local_b;
  if (!heat_a) {
    local_a = compute_cam(model, sample.image, label_sign(sample.label));
    heat_a = &local_a;
  }
  if (!heat_b) {
    local_b = compute_cam(model, partner.image, label_sign(partner.label));
    heat_b = &local_b;
  }
  return snapmix(sample.image, sample.label, partner.image, partner.label, *heat_a, *heat_b, rng,
                 cfg.alpha);
}

class Trainer {
 public:
  Trainer(Model model, TrainConfig cfg) : model_(std::move(model)), cfg_(std::move(cfg)) {
    cfg_.validate();
    for (auto& blk : model_.blocks) {
      velocity_.push_back(Tensor<float>::zeros(blk.weight.shape));
      velocity_.push_back(Tensor<float>::zeros(blk.bias.shape));
    }
    velocity_.push_back(Tensor<float>::zeros(model_.head_weight.shape));
    velocity_.push_back(Tensor<float>::zeros(model_.head_bias.shape));
  }

  const Model& model() const { return model_; }
  Model take_model() && { return std::move(model_); }
  const TrainConfig& config() const { return cfg_; }

  double learning_rate_at(size_t epoch) const {
    if (!cfg_.cosine_lr) return cfg_.learning_rate;
    const double t = static_cast<double>(epoch) / static_cast<double>(cfg_.epochs);
    return cfg_.learning_rate * 0.5 * (1.0 + std::cos(t * 3.14159265358979323846));
  }

  // One SGD-with-momentum step on a batch of prepared virtual samples.
  double step_on_virtual(const std::vector<VirtualSample<float>>& batch, double lr) {
    if (batch.empty()) throw ContractError("train_step: empty batch");
    Tape<float> tape;
    const ModelParamVars vars = register_params(tape, model_);
    std::vector<int> losses;
    losses.reserve(batch.size());
    for (const auto& vs : batch)
      losses.push_back(sample_loss_node(tape, vars, model_, vs, cfg_.cpe_enabled));
    const std::vector<float> coeffs(batch.size(), 1.0f / static_cast<float>(batch.size()));
    const int total = tape.combine(losses, coeffs);
    const double loss = static_cast<double>(tape.value(total).data[0]);
    if (!std::isfinite(loss)) throw Error("train_step: non-finite loss");
    tape.backward(total);

    std::vector<const Tensor<float>*> grads;
    for (const auto& [w, b] : vars.blocks) {
      grads.push_back(&tape.grad(w));
      grads.push_back(&tape.grad(b));
    }
    grads.push_back(&tape.grad(vars.head_weight));
    grads.push_back(&tape.grad(vars.head_bias));
    apply_sgd(grads, lr);
    return loss;
  }

  // Prepares virtual samples for a batch and steps. CAMs are computed
  // from the model as it stands at the start of the step; the partner of
  // each sample is the next one in the shuffled epoch order.
  double step(const Dataset& ds, const std::vector<size_t>& order, size_t begin, size_t end,
              size_t epoch) {
    std::vector<VirtualSample<float>> batch;
    batch.reserve(end - begin);
    std::map<size_t, Heatmap<float>> cam_cache;
    auto heat_of = [&](size_t idx) -> const Heatmap<float>* {
      auto it = cam_cache.find(idx);
      if (it == cam_cache.end()) {
        const Sample& s = ds.samples[idx];
        it = cam_cache.emplace(idx, compute_cam(model_, s.image, label_sign(s.label))).first;
      }
      return &it->second;
    };
    for (size_t pos = begin; pos < end; ++pos) {
      const size_t idx = order[pos];
      const size_t partner_idx = order[(pos + 1) % order.size()];
      const Sample& s = ds.samples[idx];
      const Sample& p = ds.samples[partner_idx];
      Rng rng = Rng(cfg_.seed).fork(kSampleStream, epoch, pos);
      if (cfg_.snapmix_enabled)
        batch.push_back(snapmix(s.image, s.label, p.image, p.label, *heat_of(idx),
                                *heat_of(partner_idx), rng, cfg_.alpha));
      else
        batch.push_back(identity_sample(s.image, s.label));
    }
    return step_on_virtual(batch, learning_rate_at(epoch));
  }

  // Shuffle, batch, step; returns the mean loss over the epoch.
  double run_epoch(const Dataset& train, size_t epoch) {
    if (train.samples.empty()) throw ContractError("train: empty dataset");
    const size_t n = train.samples.size();
    std::vector<size_t> order(n);
    for (size_t i = 0; i < n; ++i) order[i] = i;
    Rng shuffle_rng = Rng(cfg_.seed).fork(kShuffleStream, epoch);
    for (size_t i = n; i-- > 1;) {
      const size_t j = static_cast<size_t>(shuffle_rng.integer(i + 1));
      std::swap(order[i], order[j]);
    }
    double loss_sum = 0.0;
    for (size_t begin = 0; begin < n; begin += cfg_.batch_size) {
      const size_t end = std::min(begin + cfg_.batch_size, n);
      try {
        loss_sum += step(train, order, begin, end, epoch) * static_cast<double>(end - begin);
      } catch (const Error& e) {
        throw Error("epoch " + std::to_string(epoch + 1) + ", batch " +
                    std::to_string(begin / cfg_.batch_size) + ": " + e.what());
      }
    }
    return loss_sum / static_cast<double>(n);
  }

  static constexpr uint64_t kShuffleStream = 1;
  static constexpr uint64_t kSampleStream = 2;

 private:
  void apply_sgd(const std::vector<const Tensor<float>*>& grads, double lr) {
    std::vector<Tensor<float>*> params;
    for (auto& blk : model_.blocks) {
      params.push_back(&blk.weight);
      params.push_back(&blk.bias);
    }
    params.push_back(&model_.head_weight);
    params.push_back(&model_.head_bias);
    for (size_t p = 0; p < params.size(); ++p) {
      Tensor<float>& v = velocity_[p];
      for (size_t i = 0; i < v.numel(); ++i) {
        v.data[i] = static_cast<float>(cfg_.momentum * v.data[i] - lr * grads[p]->data[i]);
        params[p]->data[i] += v.data[i];
      }
    }
  }

  Model model_;
  TrainConfig cfg_;
  std::vector<Tensor<float>> velocity_;
};

// Plain or TTA evaluation; side-effect free.
inline Metrics evaluate(const Model& model, const Dataset& ds,
                        const std::optional<TtaConfig>& tta = std::nullopt) {
  if (ds.samples.empty()) throw ContractError("evaluate: empty dataset");
  std::vector<int> pred(ds.samples.size());
  parallel_for(ds.samples.size(), [&](size_t i) {
    if (tta)
      pred[i] = tta_classify(model, ds.samples[i].image, *tta).final_label;
    else
      pred[i] = forward(model, ds.samples[i].image).prob > 0.5f ? 1 : 0;
  });
  size_t tp = 0, fp = 0, tn = 0, fn = 0;
  for (size_t i = 0; i < ds.samples.size(); ++i) {
    const int truth = ds.samples[i].label;
    if (pred[i] == 1)
      (truth == 1 ? tp : fp)++;
    else
      (truth == 1 ? fn : tn)++;
  }
  return Metrics::from_counts(tp, fp, tn, fn);
}

inline double mean_bce(const Model& model, const Dataset& ds) {
  std::vector<double> losses(ds.samples.size());
  parallel_for(ds.samples.size(), [&](size_t i) {
    const auto fr = forward(model, ds.samples[i].image);
    losses[i] = ops::bce_with_logit(static_cast<double>(fr.logit), ds.samples[i].label);
  });
  double s = 0.0;
  for (double l : losses) s += l;
  return ds.samples.empty() ? 0.0 : s / static_cast<double>(losses.size());
}

// Masked-probability curve of one test image; the masked sets are nested,
// so any k' <= k is the prefix of the same curve and any theta can be
// re-voted without new forward passes.
struct TtaCurve {
  double original_prob = 0.0;
  std::vector<double> masked_probs;
  int true_label = 0;
};

inline std::vector<TtaCurve> tta_curves(const Model& model, const Dataset& ds, size_t k,
                                        size_t mask_patch_px, float mask_fill) {
  std::vector<TtaCurve> curves(ds.samples.size());
  parallel_for(ds.samples.size(), [&](size_t i) {
    const Sample& s = ds.samples[i];
    const ForwardResult<float> fr = forward(model, s.image);
    const int sign = fr.prob > 0.5f ? 1 : -1;
    const Heatmap<float> heat =
        heatmap_from_feature(fr.feature, model.head_weight, sign, model.config.input_size);
    const auto ranked = rank_patches(heat, mask_patch_px);
    const auto masked = make_masked_images(s.image, ranked, k, mask_fill, mask_patch_px);
    TtaCurve c;
    c.original_prob = static_cast<double>(fr.prob);
    c.true_label = s.label;
    c.masked_probs.resize(masked.size());
    for (size_t m = 0; m < masked.size(); ++m)
      c.masked_probs[m] = static_cast<double>(forward(model, masked[m]).prob);
    curves[i] = std::move(c);
  });
  return curves;
}

struct TtaEvalStats {
  Metrics metrics;
  size_t flips = 0;
  size_t total = 0;
};

inline TtaEvalStats stats_from_curves(const std::vector<TtaCurve>& curves, size_t k,
                                      double theta) {
  size_t tp = 0, fp = 0, tn = 0, fn = 0, flips = 0;
  for (const TtaCurve& c : curves) {
    if (k > c.masked_probs.size()) throw ContractError("tta: k exceeds curve length");
    const std::vector<double> prefix(c.masked_probs.begin(),
                                     c.masked_probs.begin() + static_cast<long>(k));
    const VoteRecord rec = vote(c.original_prob, prefix, theta);
    if (rec.flipped) ++flips;
    if (rec.final_label == 1)
      (c.true_label == 1 ? tp : fp)++;
    else
      (c.true_label == 1 ? fn : tn)++;
  }
  TtaEvalStats st;
  st.metrics = Metrics::from_counts(tp, fp, tn, fn);
  st.flips = flips;
  st.total = curves.size();
  return st;
}

struct SweepPoint {
  double param = 0.0;
  Metrics metrics;
};

struct SweepResult {
  Metrics baseline;  // no-TTA reference row
  std::vector<SweepPoint> points;
};

inline SweepResult sweep_k(const Model& model, const Dataset& ds,
                           const std::vector<size_t>& k_values, const TtaConfig& base) {
  if (k_values.empty()) throw ContractError("sweep: empty value list");
  SweepResult out;
  out.baseline = evaluate(model, ds);
  size_t k_max = 0;
  for (size_t k : k_values) k_max = std::max(k_max, k);
  TtaConfig probe = base;
  probe.k = k_max;
  probe.validate(model.config.input_size);
  const auto curves = tta_curves(model, ds, k_max, base.mask_patch_px, base.mask_fill);
  for (size_t k : k_values)
    out.points.push_back({static_cast<double>(k), stats_from_curves(curves, k, base.theta).metrics});
  return out;
}

inline SweepResult sweep_theta(const Model& model, const Dataset& ds,
                               const std::vector<double>& theta_values, const TtaConfig& base) {
  if (theta_values.empty()) throw ContractError("sweep: empty value list");
  base.validate(model.config.input_size);
  for (double t : theta_values)
    if (t <= 0.0 || t > 0.5) throw ConfigError("sweep: theta must lie in (0, 0.5]");
  SweepResult out;
  out.baseline = evaluate(model, ds);
  const auto curves = tta_curves(model, ds, base.k, base.mask_patch_px, base.mask_fill);
  for (double t : theta_values)
    out.points.push_back({t, stats_from_curves(curves, base.k, t).metrics});
  return out;
}

inline std::string sweep_csv(const SweepResult& r) {
  char line[160];
  std::string csv = "param,accuracy,precision,recall,f1\n";
  std::snprintf(line, sizeof line, "baseline,%.6f,%.6f,%.6f,%.6f\n", r.baseline.accuracy,
                r.baseline.precision, r.baseline.recall, r.baseline.f1);
  csv += line;
  for (const SweepPoint& p : r.points) {
    std::snprintf(line, sizeof line, "%g,%.6f,%.6f,%.6f,%.6f\n", p.param, p.metrics.accuracy,
                  p.metrics.precision, p.metrics.recall, p.metrics.f1);
    csv += line;
  }
  return csv;
}

struct EpochLog {
  size_t epoch = 0;  // 1-based in logs
  std::string split;
  double loss = 0.0;
  Metrics metrics;
};

inline std::string epoch_log_json(const EpochLog& e) {
  nlohmann::ordered_json j{{"epoch", e.epoch},         {"split", e.split},
                           {"loss", e.loss},           {"accuracy", e.metrics.accuracy},
                           {"precision", e.metrics.precision}, {"recall", e.metrics.recall},
                           {"f1", e.metrics.f1}};
  return j.dump();
}

struct TrainRunResult {
  Model model;
  std::vector<EpochLog> logs;
};

// Full training run: per-epoch SnapMix + CPE steps, per-epoch metrics on
// the train split and (when given) the test split, optional final TTA
// evaluation.
inline TrainRunResult train_model(const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                                  const Dataset& train_ds, const Dataset* test_ds) {
  Trainer trainer(build_model<float>(model_cfg), train_cfg);
  std::vector<EpochLog> logs;
  for (size_t epoch = 0; epoch < train_cfg.epochs; ++epoch) {
    const double train_loss = trainer.run_epoch(train_ds, epoch);
    logs.push_back({epoch + 1, "train", train_loss, evaluate(trainer.model(), train_ds)});
    if (test_ds)
      logs.push_back({epoch + 1, "test", mean_bce(trainer.model(), *test_ds),
                      evaluate(trainer.model(), *test_ds)});
  }
  if (train_cfg.eval_tta && test_ds)
    logs.push_back({train_cfg.epochs, "test_tta", mean_bce(trainer.model(), *test_ds),
                    evaluate(trainer.model(), *test_ds, train_cfg.eval_tta)});
  return {std::move(trainer).take_model(), std::move(logs)};
}

}  // namespace camcls
