#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tsrnet/attention.hpp"
#include "tsrnet/classifier.hpp"
#include "tsrnet/dataset.hpp"
#include "tsrnet/numerics.hpp"
#include "tsrnet/transfer.hpp"

namespace tsrnet {

struct ModelConfig {
  std::size_t attention_hidden = 64;   // b
  std::size_t heads = 1;               // r
  std::size_t classifier_hidden = 128; // h
  AttentionSettings attention;
};

/// Attention module plus classification head for one stream.
struct StreamModel {
  AttentionParams attention;
  ClassifierParams classifier;

  std::size_t dim() const { return attention.dim(); }
  std::size_t classes() const { return classifier.classes(); }

  /// Visits every parameter tensor in a fixed order: w1, w2, fc1, b1, fc2, b2.
  template <typename Self, typename F>
  static void visit(Self& self, F&& f) {
    f("attention.w1", self.attention.w1.data(), self.attention.w1.rows(), self.attention.w1.cols());
    f("attention.w2", self.attention.w2.data(), self.attention.w2.rows(), self.attention.w2.cols());
    f("classifier.fc1", self.classifier.fc1.data(), self.classifier.fc1.rows(), self.classifier.fc1.cols());
    f("classifier.b1", self.classifier.b1, self.classifier.b1.size(), std::size_t{1});
    f("classifier.fc2", self.classifier.fc2.data(), self.classifier.fc2.rows(), self.classifier.fc2.cols());
    f("classifier.b2", self.classifier.b2, self.classifier.b2.size(), std::size_t{1});
  }
  template <typename F> void for_each_param(F&& f) { visit(*this, std::forward<F>(f)); }
  template <typename F> void for_each_param(F&& f) const { visit(*this, std::forward<F>(f)); }

  friend bool operator==(const StreamModel&, const StreamModel&) = default;
};

inline StreamModel zeros_like(const StreamModel& m) {
  StreamModel z = m;
  z.for_each_param([](const char*, std::vector<double>& v, std::size_t, std::size_t) { std::fill(v.begin(), v.end(), 0.0); });
  return z;
}

inline Vector flatten(const StreamModel& m) {
  Vector out;
  m.for_each_param([&](const char*, const std::vector<double>& v, std::size_t, std::size_t) { out.insert(out.end(), v.begin(), v.end()); });
  return out;
}

inline StreamModel unflatten(const StreamModel& shape, std::span<const double> flat) {
  StreamModel m = shape;
  std::size_t off = 0;
  m.for_each_param([&](const char*, std::vector<double>& v, std::size_t, std::size_t) {
    if (off + v.size() > flat.size()) fail(ErrorKind::Shape, "unflatten: vector too short");
    std::copy(flat.begin() + static_cast<std::ptrdiff_t>(off), flat.begin() + static_cast<std::ptrdiff_t>(off + v.size()), v.begin());
    off += v.size();
  });
  if (off != flat.size()) fail(ErrorKind::Shape, "unflatten: vector too long");
  return m;
}

namespace detail {
inline void xavier_fill(Matrix& m, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
  for (double& v : m.data()) v = rng.uniform(-limit, limit);
}
}  // namespace detail

/// Glorot-uniform weights, zero biases.
inline StreamModel init_model(std::size_t dim, std::size_t classes, const ModelConfig& cfg, Rng& rng) {
  if (cfg.attention_hidden < 1 || cfg.heads < 1 || cfg.classifier_hidden < 1)
    fail(ErrorKind::Config, "model widths must be >= 1");
  if (classes < 2) fail(ErrorKind::Config, "need at least two classes");
  StreamModel m;
  m.attention.w1 = Matrix(cfg.attention_hidden, dim);
  m.attention.w2 = Matrix(cfg.heads, cfg.attention_hidden);
  m.classifier.fc1 = Matrix(cfg.classifier_hidden, cfg.heads * dim);
  m.classifier.b1 = Vector(cfg.classifier_hidden, 0.0);
  m.classifier.fc2 = Matrix(classes, cfg.classifier_hidden);
  m.classifier.b2 = Vector(classes, 0.0);
  detail::xavier_fill(m.attention.w1, rng);
  detail::xavier_fill(m.attention.w2, rng);
  detail::xavier_fill(m.classifier.fc1, rng);
  detail::xavier_fill(m.classifier.fc2, rng);
  return m;
}

struct TrainConfig {
  double alpha = 0.1;   // smoothness weight
  double beta = 0.01;   // sparsity weight
  std::size_t batch_size = 16;
  double momentum = 0.9;
  double lr_rgb = 1e-4;
  double lr_flow = 5e-4;
  std::size_t lr_decay_every = 5000;
  double lr_decay_factor = 10.0;
  double dropout = 0.8;  // probability of zeroing a classifier input unit
  std::size_t iterations = 3000;
  std::uint64_t seed = 0;
  double label_fraction = 1.0;  // share of target-train videos whose labels are used
  bool transfer_enabled = true;
  bool fc2_enabled = true;
  bool init_from_source = true;
  KernelConfig kernel;

  double lr(Stream s) const { return s == Stream::Rgb ? lr_rgb : lr_flow; }
};

inline void validate_train_config(const TrainConfig& c) {
  if (c.batch_size < 1) fail(ErrorKind::Config, "train.batch_size must be >= 1");
  if (!(c.momentum >= 0.0 && c.momentum < 1.0)) fail(ErrorKind::Config, "train.momentum must lie in [0, 1)");
  if (!(c.lr_rgb >= 0.0) || !(c.lr_flow >= 0.0)) fail(ErrorKind::Config, "learning rates must be non-negative");
  if (c.lr_decay_every < 1 || !(c.lr_decay_factor >= 1.0)) fail(ErrorKind::Config, "invalid learning-rate schedule");
  if (!(c.dropout >= 0.0 && c.dropout < 1.0)) fail(ErrorKind::Config, "train.dropout must lie in [0, 1)");
  if (!(c.alpha >= 0.0) || !(c.beta >= 0.0)) fail(ErrorKind::Config, "regularizer weights must be non-negative");
  if (!(c.label_fraction > 0.0 && c.label_fraction <= 1.0)) fail(ErrorKind::Config, "train.label_fraction must lie in (0, 1]");
  validate_kernel(c.kernel);
}

/// One training example: a feature sequence with its normalized label vector.
struct VideoSample {
  const FeatureMatrix* features = nullptr;
  Vector label;
};

struct LossTerms {
  double total = 0.0;
  double class_loss = 0.0;
  double smooth = 0.0;
  double sparsity = 0.0;
  double fc1 = 0.0;
  double fc2 = 0.0;
};

struct LossSettings {
  double alpha = 0.0;
  double beta = 0.0;
  bool transfer = false;
  bool fc2 = true;
  KernelConfig kernel;
  AttentionSettings attention;
  // per-term multipliers, used to isolate single terms when checking gradients
  double class_weight = 1.0;
  double fc1_weight = 1.0;
  double fc2_weight = 1.0;
};

struct LossResult {
  LossTerms terms;
  StreamModel grad;
};

/// Tap activations of a frozen network over a batch (no dropout).
inline TapActivations tap_activations(const StreamModel& model, std::span<const FeatureMatrix* const> batch,
                                      AttentionSettings settings) {
  TapActivations t;
  for (const FeatureMatrix* x : batch) {
    auto att = attend(*x, model.attention, settings);
    auto cls = classify(att.pooled, model.classifier);
    t.pooled.push_back(std::move(att.pooled));
    t.hidden.push_back(std::move(cls.hidden));
  }
  return t;
}

/// L = mean_batch[L_class + alpha R_smooth + beta R_sparsity] + L_FC1 + L_FC2, and its
/// gradient w.r.t. every target parameter. `masks` holds one dropout mask per
/// video (or is empty for no dropout); `source` carries frozen-source tap
/// activations when transfer is on. When the kernel uses the median heuristic
/// the bandwidth is computed from the current batch and treated as a constant.
inline LossResult total_loss(std::span<const VideoSample> batch, const StreamModel& model, const LossSettings& s,
                             std::span<const Vector> masks = {}, const TapActivations* source = nullptr) {
  if (batch.empty()) fail(ErrorKind::Input, "total_loss: empty batch");
  if (!masks.empty() && masks.size() != batch.size()) fail(ErrorKind::Shape, "total_loss: one dropout mask per video");
  if (s.transfer && source == nullptr) fail(ErrorKind::Config, "total_loss: transfer enabled without source activations");
  const double inv_b = 1.0 / static_cast<double>(batch.size());

  struct Pass {
    AttentionOutput att;
    ClassifierOutput cls;
    ClassifierOutput clean;  // dropout-free forward feeding the FC2 tap
  };
  std::vector<Pass> passes;
  passes.reserve(batch.size());
  LossResult res;
  res.grad = zeros_like(model);
  for (std::size_t v = 0; v < batch.size(); ++v) {
    Pass p;
    p.att = attend(*batch[v].features, model.attention, s.attention);
    const std::span<const double> mask = masks.empty() ? std::span<const double>{} : std::span<const double>(masks[v]);
    p.cls = classify(p.att.pooled, model.classifier, mask);
    res.terms.class_loss += inv_b * class_loss(p.cls.probs, batch[v].label);
    if (s.transfer && s.fc2) p.clean = mask.empty() ? p.cls : classify(p.att.pooled, model.classifier);
    passes.push_back(std::move(p));
  }

  TransferTerms kt;
  if (s.transfer) {
    TapActivations target;
    for (const auto& p : passes) {
      target.pooled.push_back(p.att.pooled);
      if (s.fc2) target.hidden.push_back(p.clean.hidden);
    }
    kt = transfer_loss(*source, target, s.kernel, s.fc2);
    res.terms.fc1 = kt.fc1;
    res.terms.fc2 = kt.fc2;
  }

  for (std::size_t v = 0; v < batch.size(); ++v) {
    auto& p = passes[v];
    const std::span<const double> mask = masks.empty() ? std::span<const double>{} : std::span<const double>(masks[v]);
    const RegTerms reg = attention_regularizers(p.att, s.alpha * inv_b, s.beta * inv_b);
    res.terms.smooth += inv_b * reg.smooth;
    res.terms.sparsity += inv_b * reg.sparsity;
    Vector gl = class_loss_grad_logits(p.cls.probs, batch[v].label);
    for (double& g : gl) g *= inv_b * s.class_weight;
    ClassifierGrads cg = classifier_backward(model.classifier, p.cls, gl, {}, mask);
    Vector grad_pooled = cg.input;
    auto add_cls = [&](const ClassifierGrads& g) {
      auto& dst = res.grad.classifier;
      for (std::size_t i = 0; i < g.fc1.size(); ++i) dst.fc1.data()[i] += g.fc1.data()[i];
      for (std::size_t i = 0; i < g.b1.size(); ++i) dst.b1[i] += g.b1[i];
      for (std::size_t i = 0; i < g.fc2.size(); ++i) dst.fc2.data()[i] += g.fc2.data()[i];
      for (std::size_t i = 0; i < g.b2.size(); ++i) dst.b2[i] += g.b2[i];
    };
    add_cls(cg);
    if (s.transfer) {
      for (std::size_t i = 0; i < grad_pooled.size(); ++i) grad_pooled[i] += s.fc1_weight * kt.grad_pooled[v][i];
      if (s.fc2) {
        const Vector zero_logits(model.classes(), 0.0);
        Vector gh = kt.grad_hidden[v];
        for (double& g : gh) g *= s.fc2_weight;
        ClassifierGrads tap = classifier_backward(model.classifier, p.clean, zero_logits, gh);
        add_cls(tap);
        for (std::size_t i = 0; i < grad_pooled.size(); ++i) grad_pooled[i] += tap.input[i];
      }
    }
    AttentionGrads ag = attention_backward(*batch[v].features, model.attention, p.att, grad_pooled, reg.grad_weights,
                                           reg.grad_scores, s.attention);
    for (std::size_t i = 0; i < ag.w1.size(); ++i) res.grad.attention.w1.data()[i] += ag.w1.data()[i];
    for (std::size_t i = 0; i < ag.w2.size(); ++i) res.grad.attention.w2.data()[i] += ag.w2.data()[i];
  }
  res.terms.total = s.class_weight * res.terms.class_loss + s.alpha * res.terms.smooth + s.beta * res.terms.sparsity +
                    s.fc1_weight * res.terms.fc1 + s.fc2_weight * res.terms.fc2;
  return res;
}

/// Per-parameter momentum buffers, shaped like the model.
struct OptimState {
  StreamModel velocity;
};

inline OptimState make_optim_state(const StreamModel& m) { return {zeros_like(m)}; }

/// lr0 divided by `factor` once per completed `every` iterations.
inline double scheduled_lr(double lr0, std::size_t iteration, std::size_t every = 5000, double factor = 10.0) {
  double lr = lr0;
  for (std::size_t k = 0; k < iteration / every; ++k) lr /= factor;
  return lr;
}

/// v <- momentum v - lr g;  p <- p + v
inline void sgd_step(StreamModel& params, const StreamModel& grads, OptimState& state, double lr, double momentum) {
  std::vector<std::vector<double>*> p_list, v_list;
  std::vector<const std::vector<double>*> g_list;
  params.for_each_param([&](const char*, std::vector<double>& v, std::size_t, std::size_t) { p_list.push_back(&v); });
  state.velocity.for_each_param([&](const char*, std::vector<double>& v, std::size_t, std::size_t) { v_list.push_back(&v); });
  grads.for_each_param([&](const char*, const std::vector<double>& v, std::size_t, std::size_t) { g_list.push_back(&v); });
  for (std::size_t t = 0; t < p_list.size(); ++t) {
    auto& p = *p_list[t];
    auto& vel = *v_list[t];
    const auto& g = *g_list[t];
    if (p.size() != g.size() || p.size() != vel.size()) fail(ErrorKind::Shape, "sgd_step: shape mismatch");
    for (std::size_t i = 0; i < p.size(); ++i) {
      vel[i] = momentum * vel[i] - lr * g[i];
      p[i] += vel[i];
    }
  }
}

struct LossCurveRow {
  std::size_t iteration = 0;
  LossTerms terms;
};

inline constexpr const char* kLossCurveHeader = "iter,L,L_class,R_smooth,R_sparsity,L_FC1,L_FC2";

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string loss_curve_csv(const std::vector<LossCurveRow>& rows) {
  std::string out = std::string(kLossCurveHeader) + "\n";
  for (const auto& r : rows) {
    out += std::to_string(r.iteration) + "," + format_double(r.terms.total) + "," + format_double(r.terms.class_loss) +
           "," + format_double(r.terms.smooth) + "," + format_double(r.terms.sparsity) + "," +
           format_double(r.terms.fc1) + "," + format_double(r.terms.fc2) + "\n";
  }
  return out;
}

inline Vector dropout_mask(Rng& rng, std::size_t size, double rate) {
  if (rate <= 0.0) return {};
  Vector m(size);
  const double keep = 1.0 - rate;
  for (double& v : m) v = rng.uniform() < keep ? 1.0 / keep : 0.0;
  return m;
}

/// Frozen source network and the pool of source videos it is sampled from.
struct TransferSource {
  const StreamModel* model = nullptr;
  AttentionSettings attention;
  std::vector<const FeatureMatrix*> videos;
};

struct StreamTrainResult {
  StreamModel model;
  std::vector<LossCurveRow> curve;
};

/// Momentum-SGD loop for one stream. Each step draws `batch_size` videos uniformly
/// with replacement (and the same number of source videos when transfer is on).
inline StreamTrainResult train_stream(StreamModel model, std::span<const VideoSample> pool, const LossSettings& settings,
                                      const TrainConfig& cfg, double lr0, std::uint64_t seed,
                                      const TransferSource* source = nullptr) {
  if (pool.empty()) fail(ErrorKind::Input, "train_stream: no training videos");
  if (settings.transfer && (source == nullptr || source->videos.empty() || source->model == nullptr))
    fail(ErrorKind::Config, "train_stream: transfer enabled without a source pool");
  Rng rng(seed);
  OptimState state = make_optim_state(model);
  StreamTrainResult res;
  res.curve.reserve(cfg.iterations);
  std::vector<VideoSample> batch(cfg.batch_size);
  std::vector<Vector> masks(cfg.dropout > 0.0 ? cfg.batch_size : 0);
  std::vector<const FeatureMatrix*> src_batch(cfg.batch_size);
  const std::size_t mask_len = model.classifier.input_dim();
  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    for (std::size_t k = 0; k < cfg.batch_size; ++k) batch[k] = pool[rng.index(pool.size())];
    for (auto& m : masks) m = dropout_mask(rng, mask_len, cfg.dropout);
    TapActivations src;
    if (settings.transfer) {
      for (std::size_t k = 0; k < cfg.batch_size; ++k) src_batch[k] = source->videos[rng.index(source->videos.size())];
      src = tap_activations(*source->model, src_batch, source->attention);
    }
    LossResult lr = total_loss(batch, model, settings, masks, settings.transfer ? &src : nullptr);
    sgd_step(model, lr.grad, state, scheduled_lr(lr0, it, cfg.lr_decay_every, cfg.lr_decay_factor), cfg.momentum);
    res.curve.push_back({it, lr.terms});
  }
  res.model = std::move(model);
  return res;
}

enum class Role { Source, Target };
inline std::string role_name(Role r) { return r == Role::Source ? "source" : "target"; }
inline Role parse_role(const std::string& s) {
  if (s == "source") return Role::Source;
  if (s == "target") return Role::Target;
  fail(ErrorKind::Config, "role must be 'source' or 'target', got '" + s + "'");
}

struct TrainOutput {
  std::array<StreamModel, 2> models;
  std::array<std::vector<LossCurveRow>, 2> curves;
};

/// Trains both streams on the trimmed split with L_class only.
inline TrainOutput train_source(const Dataset& ds, const TrainConfig& cfg, const ModelConfig& mcfg) {
  validate_train_config(cfg);
  const auto idx = ds.indices(Split::Source);
  if (idx.empty()) fail(ErrorKind::Input, "train_source: dataset has no source videos");
  const auto classes = static_cast<std::size_t>(ds.manifest.num_classes);
  TrainOutput out;
  for (Stream s : kStreams) {
    std::vector<VideoSample> pool;
    for (std::size_t i : idx) {
      const auto& rec = ds.manifest.videos[i];
      if (!rec.trimmed) fail(ErrorKind::Input, "train_source: record " + rec.id + " is not trimmed");
      pool.push_back({&ds.feature(i, s), label_vector(rec.labels, classes)});
    }
    const int si = static_cast<int>(s);
    Rng init_rng(derive_seed(cfg.seed, 10 + static_cast<std::uint64_t>(si)));
    StreamModel model = init_model(ds.manifest.dims[si], classes, mcfg, init_rng);
    LossSettings ls;
    ls.attention = mcfg.attention;
    auto r = train_stream(std::move(model), pool, ls, cfg, cfg.lr(s), derive_seed(cfg.seed, 20 + static_cast<std::uint64_t>(si)));
    out.models[si] = std::move(r.model);
    out.curves[si] = std::move(r.curve);
  }
  return out;
}

/// Deterministic subset of target-train videos whose labels are used.
inline std::vector<std::size_t> labeled_subset(const Dataset& ds, double fraction, std::uint64_t seed) {
  auto idx = ds.indices(Split::Train);
  if (fraction >= 1.0) return idx;
  Rng rng(derive_seed(seed, 77));
  rng.shuffle(idx);
  const auto keep = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(idx.size()))));
  idx.resize(std::min(keep, idx.size()));
  std::sort(idx.begin(), idx.end());
  return idx;
}

inline bool same_shape(const StreamModel& a, const StreamModel& b) {
  return a.attention.w1.rows() == b.attention.w1.rows() && a.attention.w1.cols() == b.attention.w1.cols() &&
         a.attention.w2.rows() == b.attention.w2.rows() && a.classifier.fc1.rows() == b.classifier.fc1.rows() &&
         a.classifier.fc1.cols() == b.classifier.fc1.cols() && a.classifier.fc2.rows() == b.classifier.fc2.rows();
}

/// Trains both target streams on the untrimmed split with the full loss. With
/// transfer on, `source` must hold compatible frozen models; they are read only.
inline TrainOutput train_target(const Dataset& ds, const std::array<StreamModel, 2>* source, const TrainConfig& cfg,
                                const ModelConfig& mcfg, AttentionSettings source_attention) {
  validate_train_config(cfg);
  const auto classes = static_cast<std::size_t>(ds.manifest.num_classes);
  const auto idx = labeled_subset(ds, cfg.label_fraction, cfg.seed);
  if (idx.empty()) fail(ErrorKind::Input, "train_target: dataset has no target-train videos");
  const bool transfer = cfg.transfer_enabled;
  if (transfer && source == nullptr) fail(ErrorKind::Config, "train_target: transfer enabled but no source checkpoints given");
  const auto src_idx = ds.indices(Split::Source);
  if (transfer && src_idx.empty()) fail(ErrorKind::Config, "train_target: transfer enabled but dataset has no source videos");
  TrainOutput out;
  for (Stream s : kStreams) {
    const int si = static_cast<int>(s);
    std::vector<VideoSample> pool;
    for (std::size_t i : idx) pool.push_back({&ds.feature(i, s), label_vector(ds.manifest.videos[i].labels, classes)});
    Rng init_rng(derive_seed(cfg.seed, 30 + static_cast<std::uint64_t>(si)));
    StreamModel model = init_model(ds.manifest.dims[si], classes, mcfg, init_rng);
    TransferSource src;
    if (transfer) {
      const StreamModel& sm = (*source)[si];
      if (!same_shape(sm, model) || sm.dim() != ds.manifest.dims[si] || sm.classes() != classes)
        fail(ErrorKind::Config, "train_target: source checkpoint for stream " + stream_name(s) +
                                    " is incompatible (d, b, r, h or C differ)");
      src.model = &sm;
      src.attention = source_attention;
      for (std::size_t i : src_idx) src.videos.push_back(&ds.feature(i, s));
      if (cfg.init_from_source) model = sm;
    }
    LossSettings ls;
    ls.alpha = cfg.alpha;
    ls.beta = cfg.beta;
    ls.transfer = transfer;
    ls.fc2 = cfg.fc2_enabled;
    ls.kernel = cfg.kernel;
    ls.attention = mcfg.attention;
    auto r = train_stream(std::move(model), pool, ls, cfg, cfg.lr(s), derive_seed(cfg.seed, 40 + static_cast<std::uint64_t>(si)),
                          transfer ? &src : nullptr);
    out.models[si] = std::move(r.model);
    out.curves[si] = std::move(r.curve);
  }
  return out;
}

// Checkpoint container:
//   "TSRC" | u32 version (1) | u64 header length | header JSON (UTF-8) | payload
// The payload is every parameter tensor, in the order listed under "params" in the
// header, as little-endian IEEE-754 float64 values, row-major.
struct ModelCheckpoint {
  StreamModel model;
  ModelConfig model_config;
  Stream stream = Stream::Rgb;
  Role role = Role::Source;
  std::uint64_t iteration = 0;
  nlohmann::json config = nlohmann::json::object();
};

inline nlohmann::json model_config_json(const ModelConfig& m) {
  return {{"attention_hidden", m.attention_hidden},
          {"heads", m.heads},
          {"classifier_hidden", m.classifier_hidden},
          {"attention_mode", attention_mode_name(m.attention.mode)},
          {"sparsity_mode", sparsity_mode_name(m.attention.sparsity)}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig m;
  m.attention_hidden = j.at("attention_hidden").get<std::size_t>();
  m.heads = j.at("heads").get<std::size_t>();
  m.classifier_hidden = j.at("classifier_hidden").get<std::size_t>();
  m.attention.mode = parse_attention_mode(j.at("attention_mode").get<std::string>());
  m.attention.sparsity = parse_sparsity_mode(j.at("sparsity_mode").get<std::string>());
  return m;
}

inline std::vector<std::uint8_t> encode_checkpoint(const ModelCheckpoint& ck) {
  nlohmann::json params = nlohmann::json::array();
  ck.model.for_each_param([&](const char* name, const std::vector<double>&, std::size_t rows, std::size_t cols) {
    params.push_back({{"name", name}, {"rows", rows}, {"cols", cols}});
  });
  const nlohmann::json header = {{"format", "tsrnet-checkpoint"},
                                 {"stream", stream_name(ck.stream)},
                                 {"role", role_name(ck.role)},
                                 {"iteration", ck.iteration},
                                 {"model", model_config_json(ck.model_config)},
                                 {"params", params},
                                 {"config", ck.config}};
  const std::string text = header.dump();
  std::vector<std::uint8_t> out{'T', 'S', 'R', 'C'};
  detail::put_u32(out, 1);
  const std::uint64_t len = text.size();
  detail::put_u32(out, static_cast<std::uint32_t>(len & 0xffffffffu));
  detail::put_u32(out, static_cast<std::uint32_t>(len >> 32));
  out.insert(out.end(), text.begin(), text.end());
  ck.model.for_each_param([&](const char*, const std::vector<double>& v, std::size_t, std::size_t) {
    for (double x : v) {
      std::uint64_t bits;
      std::memcpy(&bits, &x, sizeof bits);
      detail::put_u32(out, static_cast<std::uint32_t>(bits & 0xffffffffu));
      detail::put_u32(out, static_cast<std::uint32_t>(bits >> 32));
    }
  });
  return out;
}

inline ModelCheckpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 16) fail(ErrorKind::Truncation, "checkpoint shorter than its header");
  if (std::memcmp(bytes.data(), "TSRC", 4) != 0) fail(ErrorKind::Format, "bad checkpoint magic");
  const std::uint32_t version = detail::get_u32(bytes, 4);
  if (version != 1) fail(ErrorKind::Version, "unsupported checkpoint version " + std::to_string(version));
  const std::uint64_t len = detail::get_u32(bytes, 8) | (static_cast<std::uint64_t>(detail::get_u32(bytes, 12)) << 32);
  if (bytes.size() < 16 + len) fail(ErrorKind::Truncation, "checkpoint header truncated");
  ModelCheckpoint ck;
  std::size_t off = 16 + len;
  try {
    const auto header = nlohmann::json::parse(bytes.begin() + 16, bytes.begin() + static_cast<std::ptrdiff_t>(16 + len));
    ck.stream = parse_stream(header.at("stream").get<std::string>());
    ck.role = parse_role(header.at("role").get<std::string>());
    ck.iteration = header.at("iteration").get<std::uint64_t>();
    ck.model_config = model_config_from_json(header.at("model"));
    ck.config = header.at("config");
    const auto& params = header.at("params");
    std::map<std::string, std::pair<std::size_t, std::size_t>> shapes;
    for (const auto& p : params) shapes[p.at("name").get<std::string>()] = {p.at("rows"), p.at("cols")};
    auto mat = [&](const char* name) {
      const auto it = shapes.find(name);
      if (it == shapes.end()) fail(ErrorKind::Format, std::string("checkpoint lacks parameter ") + name);
      return Matrix(it->second.first, it->second.second);
    };
    ck.model.attention.w1 = mat("attention.w1");
    ck.model.attention.w2 = mat("attention.w2");
    ck.model.classifier.fc1 = mat("classifier.fc1");
    ck.model.classifier.b1 = mat("classifier.b1").data();
    ck.model.classifier.fc2 = mat("classifier.fc2");
    ck.model.classifier.b2 = mat("classifier.b2").data();
    std::vector<std::string> order;
    for (const auto& p : params) order.push_back(p.at("name").get<std::string>());
    std::vector<std::string> expected;
    ck.model.for_each_param([&](const char* name, const std::vector<double>&, std::size_t, std::size_t) { expected.push_back(name); });
    if (order != expected) fail(ErrorKind::Format, "checkpoint parameter order is not the canonical one");
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Format, std::string("malformed checkpoint header: ") + e.what());
  }
  std::size_t total = 0;
  ck.model.for_each_param([&](const char*, const std::vector<double>& v, std::size_t, std::size_t) { total += v.size(); });
  if (bytes.size() != off + 8 * total) fail(ErrorKind::Truncation, "checkpoint payload length does not match its header");
  ck.model.for_each_param([&](const char*, std::vector<double>& v, std::size_t, std::size_t) {
    for (double& x : v) {
      const std::uint64_t bits = detail::get_u32(bytes, off) | (static_cast<std::uint64_t>(detail::get_u32(bytes, off + 4)) << 32);
      std::memcpy(&x, &bits, sizeof x);
      off += 8;
    }
  });
  check_classifier(ck.model.classifier);
  if (ck.model.attention.w2.cols() != ck.model.attention.w1.rows() ||
      ck.model.classifier.fc1.cols() != ck.model.attention.w2.rows() * ck.model.attention.w1.cols())
    fail(ErrorKind::Format, "checkpoint tensors have inconsistent shapes");
  return ck;
}

inline void save_checkpoint(const ModelCheckpoint& ck, const std::filesystem::path& path) {
  detail::write_bytes(path, encode_checkpoint(ck));
}

inline ModelCheckpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(detail::read_bytes(path));
}

}  // namespace tsrnet
