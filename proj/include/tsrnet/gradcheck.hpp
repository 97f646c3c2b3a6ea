#pragma once

#include <chrono>
#include <string>
#include <vector>

#include "tsrnet/training.hpp"

namespace tsrnet {

/// A small random problem: one stream model, a batch with labels and dropout
/// masks, and frozen source activations for the transfer terms.
struct GradcheckInstance {
  StreamModel model;
  std::vector<FeatureMatrix> videos;
  std::vector<VideoSample> batch;
  std::vector<Vector> masks;
  TapActivations source;
  double sigma = 1.0;
};

namespace detail {

inline FeatureMatrix random_features(Rng& rng, std::size_t n, std::size_t d) {
  Matrix m(n, d);
  for (std::size_t k = 0; k < m.size(); ++k) m.data()[k] = rng.normal();
  return FeatureMatrix(std::move(m));
}

inline void randomize(StreamModel& m, Rng& rng, double scale) {
  m.for_each_param([&](const char*, std::vector<double>& v, std::size_t, std::size_t) {
    for (double& x : v) x = scale * rng.normal();
  });
}

// Smallest |pre-activation| of FC1 over the batch, with and without dropout.
inline double relu_margin(const GradcheckInstance& g, AttentionSettings s) {
  double worst = 1e300;
  for (std::size_t v = 0; v < g.batch.size(); ++v) {
    const auto att = attend(*g.batch[v].features, g.model.attention, s);
    for (int masked = 0; masked < 2; ++masked) {
      Vector in = att.pooled;
      if (masked && !g.masks.empty())
        for (std::size_t i = 0; i < in.size(); ++i) in[i] *= g.masks[v][i];
      const Vector z = matvec(g.model.classifier.fc1, in);
      for (std::size_t j = 0; j < z.size(); ++j) worst = std::min(worst, std::abs(z[j] + g.model.classifier.b1[j]));
    }
  }
  return worst;
}

}  // namespace detail

/// Draws d <= 8, n <= 6, b <= 4, h <= 4, C <= 3, r <= 2. Instances whose FC1
/// pre-activations sit within 1e-3 of the relu kink are redrawn.
inline GradcheckInstance make_gradcheck_instance(Rng& rng) {
  for (;;) {
    GradcheckInstance g;
    const auto d = static_cast<std::size_t>(rng.uniform_int(2, 8));
    const auto b = static_cast<std::size_t>(rng.uniform_int(1, 4));
    const auto h = static_cast<std::size_t>(rng.uniform_int(1, 4));
    const auto classes = static_cast<std::size_t>(rng.uniform_int(2, 3));
    const auto r = static_cast<std::size_t>(rng.uniform_int(1, 2));
    const auto videos = static_cast<std::size_t>(rng.uniform_int(2, 3));
    ModelConfig mc;
    mc.attention_hidden = b;
    mc.heads = r;
    mc.classifier_hidden = h;
    g.model = init_model(d, classes, mc, rng);
    detail::randomize(g.model, rng, 0.7);
    StreamModel src = g.model;
    detail::randomize(src, rng, 0.7);
    for (std::size_t v = 0; v < 2 * videos; ++v)
      g.videos.push_back(detail::random_features(rng, static_cast<std::size_t>(rng.uniform_int(2, 6)), d));
    for (std::size_t v = 0; v < videos; ++v) {
      Vector y(classes, 0.0);
      y[rng.index(classes)] = 1.0;
      g.batch.push_back({&g.videos[v], y});
    }
    if (rng.uniform() < 0.5)
      for (std::size_t v = 0; v < videos; ++v) g.masks.push_back(dropout_mask(rng, r * d, 0.5));
    std::vector<const FeatureMatrix*> src_videos;
    for (std::size_t v = videos; v < 2 * videos; ++v) src_videos.push_back(&g.videos[v]);
    g.source = tap_activations(src, src_videos, {});
    std::vector<const FeatureMatrix*> tgt_videos;
    for (std::size_t v = 0; v < videos; ++v) tgt_videos.push_back(&g.videos[v]);
    const auto tgt = tap_activations(g.model, tgt_videos, {});
    g.sigma = median_bandwidth(g.source.pooled, tgt.pooled);
    bool ok = true;
    for (auto sm : {SparsityMode::PaperLiteral, SparsityMode::Sigmoid})
      ok = ok && detail::relu_margin(g, {AttentionMode::Learned, sm}) > 1e-3;
    if (ok) return g;
  }
}

struct GradcheckComponent {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t coordinates = 0;
};

struct GradcheckReport {
  std::vector<GradcheckComponent> components;
  std::size_t instances = 0;
  double seconds = 0.0;

  bool passed(double tol = 1e-5) const {
    for (const auto& c : components)
      if (!(c.max_rel_error < tol)) return false;
    return true;
  }
};

/// Loss settings that switch on exactly one term (or all of them for "L").
inline LossSettings component_settings(const std::string& name, SparsityMode mode, double sigma) {
  LossSettings s;
  s.attention = {AttentionMode::Learned, mode};
  s.kernel.sigma = sigma;
  s.class_weight = 0.0;
  s.fc1_weight = s.fc2_weight = 0.0;
  if (name == "L_class") {
    s.class_weight = 1.0;
  } else if (name == "R_smooth") {
    s.alpha = 1.0;
  } else if (name.rfind("R_sparsity", 0) == 0) {
    s.beta = 1.0;
  } else if (name == "L_FC1") {
    s.transfer = true;
    s.fc1_weight = 1.0;
  } else if (name == "L_FC2") {
    s.transfer = true;
    s.fc2_weight = 1.0;
  } else {
    s.class_weight = s.fc1_weight = s.fc2_weight = 1.0;
    s.alpha = 0.1;
    s.beta = 0.01;
    s.transfer = true;
  }
  return s;
}

/// Analytic gradient against central finite differences, max relative error.
inline double check_component(const GradcheckInstance& g, const LossSettings& s, double h = 1e-5) {
  const StreamModel& shape = g.model;
  const LossResult analytic = total_loss(g.batch, g.model, s, g.masks, s.transfer ? &g.source : nullptr);
  auto f = [&](std::span<const double> flat) {
    return total_loss(g.batch, unflatten(shape, flat), s, g.masks, s.transfer ? &g.source : nullptr).terms.total;
  };
  const Vector fd = finite_diff_grad(f, flatten(g.model), h);
  return max_relative_error(flatten(analytic.grad), fd);
}

inline const std::vector<std::string>& gradcheck_component_names() {
  static const std::vector<std::string> names = {"L_class", "R_smooth", "R_sparsity[paper-literal]", "R_sparsity[sigmoid]",
                                                 "L_FC1", "L_FC2", "L"};
  return names;
}

/// Runs every component on `instances` random problems. Components other than
/// the sparsity entries are checked under both attention score modes.
inline GradcheckReport run_gradcheck(std::uint64_t seed, std::size_t instances = 200) {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(derive_seed(seed, 90));
  GradcheckReport rep;
  for (const auto& n : gradcheck_component_names()) rep.components.push_back({n, 0.0, 0});
  for (std::size_t k = 0; k < instances; ++k) {
    const GradcheckInstance g = make_gradcheck_instance(rng);
    const std::size_t coords = flatten(g.model).size();
    for (auto& c : rep.components) {
      std::vector<SparsityMode> modes{SparsityMode::PaperLiteral, SparsityMode::Sigmoid};
      if (c.name == "R_sparsity[paper-literal]") modes = {SparsityMode::PaperLiteral};
      if (c.name == "R_sparsity[sigmoid]") modes = {SparsityMode::Sigmoid};
      for (auto m : modes) {
        c.max_rel_error = std::max(c.max_rel_error, check_component(g, component_settings(c.name, m, g.sigma)));
        c.coordinates += coords;
      }
    }
  }
  rep.instances = instances;
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

}  // namespace tsrnet
