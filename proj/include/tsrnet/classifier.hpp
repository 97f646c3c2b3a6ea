#pragma once

#include <cmath>
#include <optional>
#include <vector>

#include "tsrnet/numerics.hpp"

namespace tsrnet {

// Two FC layers over the pooled representation: relu(FC1 m + b1) -> FC2 -> softmax.
struct ClassifierParams {
  Matrix fc1;  // h x (r*d)
  Vector b1;   // h
  Matrix fc2;  // C x h
  Vector b2;   // C

  std::size_t input_dim() const { return fc1.cols(); }
  std::size_t hidden() const { return fc1.rows(); }
  std::size_t classes() const { return fc2.rows(); }

  friend bool operator==(const ClassifierParams&, const ClassifierParams&) = default;
};

struct ClassifierGrads {
  Matrix fc1;
  Vector b1;
  Matrix fc2;
  Vector b2;
  Vector input;  // dL/dm (before the dropout mask)
};

struct ClassifierOutput {
  Vector input;   // m after the dropout mask
  Vector hidden;  // relu(FC1 input + b1)
  Vector logits;
  Vector probs;
};

inline void check_classifier(const ClassifierParams& p) {
  if (p.b1.size() != p.hidden() || p.fc2.cols() != p.hidden() || p.b2.size() != p.classes())
    fail(ErrorKind::Shape, "classifier parameters have inconsistent shapes");
}

/// `mask` multiplies m elementwise (inverted-dropout scaling already folded in).
inline ClassifierOutput classify(std::span<const double> m, const ClassifierParams& p,
                                 std::span<const double> mask = {}) {
  check_classifier(p);
  if (m.size() != p.input_dim())
    fail(ErrorKind::Shape, "classify: input length " + std::to_string(m.size()) + " != FC1 width " + std::to_string(p.input_dim()));
  if (!mask.empty() && mask.size() != m.size()) fail(ErrorKind::Shape, "classify: dropout mask length mismatch");
  ClassifierOutput out;
  out.input.assign(m.begin(), m.end());
  if (!mask.empty())
    for (std::size_t i = 0; i < m.size(); ++i) out.input[i] *= mask[i];
  out.hidden = matvec(p.fc1, out.input);
  for (std::size_t j = 0; j < out.hidden.size(); ++j) out.hidden[j] = std::max(0.0, out.hidden[j] + p.b1[j]);
  out.logits = matvec(p.fc2, out.hidden);
  for (std::size_t c = 0; c < out.logits.size(); ++c) out.logits[c] += p.b2[c];
  out.probs = stable_softmax(out.logits);
  return out;
}

inline constexpr double kLogEpsilon = 1e-12;

/// Uniform mass over the present labels.
inline Vector label_vector(std::span<const int> labels, std::size_t classes) {
  if (labels.empty()) fail(ErrorKind::Input, "label_vector: video has no labels");
  Vector y(classes, 0.0);
  for (int c : labels) {
    if (c < 0 || static_cast<std::size_t>(c) >= classes) fail(ErrorKind::Index, "label_vector: label out of range");
    y[static_cast<std::size_t>(c)] = 1.0;
  }
  double total = 0.0;
  for (double v : y) total += v;
  for (double& v : y) v /= total;
  return y;
}

inline double class_loss(std::span<const double> probs, std::span<const double> y) {
  if (probs.size() != y.size()) fail(ErrorKind::Shape, "class_loss: length mismatch");
  double l = 0.0;
  for (std::size_t c = 0; c < y.size(); ++c)
    if (y[c] != 0.0) l -= y[c] * std::log(probs[c] + kLogEpsilon);
  return l;
}

/// dL/dlogits of class_loss, exact including the epsilon inside the log.
inline Vector class_loss_grad_logits(std::span<const double> probs, std::span<const double> y) {
  Vector gp(y.size());
  for (std::size_t c = 0; c < y.size(); ++c) gp[c] = -y[c] / (probs[c] + kLogEpsilon);
  return softmax_backward(probs, gp);
}

/// Backward through FC2, relu and FC1. `grad_hidden_extra` adds a direct gradient
/// on the hidden activations (the second transfer tap); may be empty.
inline ClassifierGrads classifier_backward(const ClassifierParams& p, const ClassifierOutput& out,
                                           std::span<const double> grad_logits,
                                           std::span<const double> grad_hidden_extra = {},
                                           std::span<const double> mask = {}) {
  const std::size_t h = p.hidden();
  const std::size_t in = p.input_dim();
  const std::size_t classes = p.classes();
  ClassifierGrads g{Matrix(h, in), Vector(h, 0.0), Matrix(classes, h), Vector(classes, 0.0), Vector(in, 0.0)};
  Vector gh(h, 0.0);
  for (std::size_t c = 0; c < classes; ++c) {
    g.b2[c] = grad_logits[c];
    for (std::size_t j = 0; j < h; ++j) {
      g.fc2(c, j) = grad_logits[c] * out.hidden[j];
      gh[j] += grad_logits[c] * p.fc2(c, j);
    }
  }
  if (!grad_hidden_extra.empty())
    for (std::size_t j = 0; j < h; ++j) gh[j] += grad_hidden_extra[j];
  for (std::size_t j = 0; j < h; ++j) {
    const double gz = out.hidden[j] > 0.0 ? gh[j] : 0.0;
    g.b1[j] = gz;
    if (gz == 0.0) continue;
    auto row = g.fc1.row(j);
    const auto w = p.fc1.row(j);
    for (std::size_t i = 0; i < in; ++i) {
      row[i] = gz * out.input[i];
      g.input[i] += gz * w[i];
    }
  }
  if (!mask.empty())
    for (std::size_t i = 0; i < in; ++i) g.input[i] *= mask[i];
  return g;
}

/// Averages the two streams' logits, then softmax.
inline Vector fuse_streams(std::span<const double> logits_rgb, std::span<const double> logits_flow) {
  if (logits_rgb.size() != logits_flow.size()) fail(ErrorKind::Shape, "fuse_streams: length mismatch");
  Vector z(logits_rgb.size());
  for (std::size_t c = 0; c < z.size(); ++c) z[c] = 0.5 * (logits_rgb[c] + logits_flow[c]);
  return stable_softmax(z);
}

/// Class logits of a single frame: the classification stack applied to the frame
/// feature replicated once per attention head (what the pooled input would be if
/// every head attended to this frame alone). Dropout is off.
inline Vector frame_logits(std::span<const double> frame, const ClassifierParams& p) {
  const std::size_t d = frame.size();
  if (d == 0 || p.input_dim() % d != 0) fail(ErrorKind::Shape, "frame_logits: FC1 width is not a multiple of d");
  Vector m;
  m.reserve(p.input_dim());
  for (std::size_t k = 0; k < p.input_dim() / d; ++k) m.insert(m.end(), frame.begin(), frame.end());
  return classify(m, p).logits;
}

/// a_i * sigmoid(frame logit for class c).
inline double frame_class_score(std::span<const double> frame, double weight, const ClassifierParams& p, int c) {
  if (c < 0 || static_cast<std::size_t>(c) >= p.classes()) fail(ErrorKind::Index, "frame_class_score: class out of range");
  return weight * sigmoid(frame_logits(frame, p)[static_cast<std::size_t>(c)]);
}

}  // namespace tsrnet
