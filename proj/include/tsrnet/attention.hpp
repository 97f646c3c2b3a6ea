#pragma once

#include <cmath>
#include <string>

#include "tsrnet/dataset.hpp"
#include "tsrnet/numerics.hpp"

namespace tsrnet {

/// How frame weights are produced.
///   Learned: two-layer additive scorer w2 * tanh(W1 x) per head.
///   Uniform: every frame weighted 1/n (mean pooling, no attention module).
enum class AttentionMode { Learned, Uniform };

/// PaperLiteral: weights are softmax outputs and the L1 penalty acts on them
/// (so it is constant 1). Sigmoid: per-frame sigmoid scores s, pooling uses s/sum(s),
/// and the L1 penalty acts on s.
enum class SparsityMode { PaperLiteral, Sigmoid };

inline std::string attention_mode_name(AttentionMode m) { return m == AttentionMode::Learned ? "learned" : "uniform"; }
inline AttentionMode parse_attention_mode(const std::string& s) {
  if (s == "learned") return AttentionMode::Learned;
  if (s == "uniform") return AttentionMode::Uniform;
  fail(ErrorKind::Config, "attention.mode must be 'learned' or 'uniform', got '" + s + "'");
}
inline std::string sparsity_mode_name(SparsityMode m) { return m == SparsityMode::PaperLiteral ? "paper-literal" : "sigmoid"; }
inline SparsityMode parse_sparsity_mode(const std::string& s) {
  if (s == "paper-literal") return SparsityMode::PaperLiteral;
  if (s == "sigmoid") return SparsityMode::Sigmoid;
  fail(ErrorKind::Config, "attention.sparsity_mode must be 'paper-literal' or 'sigmoid', got '" + s + "'");
}

struct AttentionParams {
  Matrix w1;  // b x d
  Matrix w2;  // r x b

  std::size_t hidden() const { return w1.rows(); }
  std::size_t heads() const { return w2.rows(); }
  std::size_t dim() const { return w1.cols(); }

  friend bool operator==(const AttentionParams&, const AttentionParams&) = default;
};

struct AttentionGrads {
  Matrix w1;
  Matrix w2;
};

struct AttentionOutput {
  Matrix weights;  // r x n pooling weights, each row on the simplex
  Matrix scores;   // r x n scores the sparsity penalty acts on (== weights in paper-literal mode)
  Vector pooled;   // r*d, per-head pooled vectors concatenated
  Matrix tanh_hidden;  // n x b cache for the backward pass (empty in uniform mode)
};

struct AttentionSettings {
  AttentionMode mode = AttentionMode::Learned;
  SparsityMode sparsity = SparsityMode::PaperLiteral;
};

inline AttentionOutput attend(const FeatureMatrix& x, const AttentionParams& p, AttentionSettings settings = {}) {
  const std::size_t n = x.frames();
  const std::size_t d = x.dim();
  const std::size_t r = p.heads();
  if (p.dim() != d) fail(ErrorKind::Shape, "attend: W1 has " + std::to_string(p.dim()) + " columns, features have d=" + std::to_string(d));
  if (p.w2.cols() != p.hidden()) fail(ErrorKind::Shape, "attend: w2 column count does not match W1 row count");
  if (r < 1 || p.hidden() < 1) fail(ErrorKind::Shape, "attend: need at least one head and one hidden unit");

  AttentionOutput out;
  out.weights = Matrix(r, n);
  out.scores = Matrix(r, n);
  if (settings.mode == AttentionMode::Uniform) {
    out.weights.fill(1.0 / static_cast<double>(n));
    out.scores = out.weights;
  } else {
    const std::size_t b = p.hidden();
    out.tanh_hidden = Matrix(n, b);
    for (std::size_t i = 0; i < n; ++i) {
      const auto xi = x.frame(i);
      for (std::size_t j = 0; j < b; ++j) out.tanh_hidden(i, j) = std::tanh(dot(p.w1.row(j), xi));
    }
    Vector logits(n);
    for (std::size_t k = 0; k < r; ++k) {
      for (std::size_t i = 0; i < n; ++i) logits[i] = dot(p.w2.row(k), out.tanh_hidden.row(i));
      if (settings.sparsity == SparsityMode::PaperLiteral) {
        const Vector a = stable_softmax(logits);
        std::copy(a.begin(), a.end(), out.weights.row(k).begin());
        std::copy(a.begin(), a.end(), out.scores.row(k).begin());
      } else {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) total += out.scores(k, i) = sigmoid(logits[i]);
        for (std::size_t i = 0; i < n; ++i) out.weights(k, i) = out.scores(k, i) / total;
      }
    }
  }
  out.pooled.assign(r * d, 0.0);
  for (std::size_t k = 0; k < r; ++k)
    for (std::size_t i = 0; i < n; ++i) {
      const double a = out.weights(k, i);
      const auto xi = x.frame(i);
      for (std::size_t c = 0; c < d; ++c) out.pooled[k * d + c] += a * xi[c];
    }
  return out;
}

/// Per-frame attention used for detection: head-averaged scores. Softmax weights
/// are taken relative to uniform attention, min(1, n * a_i), so a frame attended
/// at least as much as under mean pooling scores 1; sigmoid scores are already
/// in (0, 1).
inline Vector detection_weights(const AttentionOutput& out, AttentionSettings settings = {}) {
  const std::size_t r = out.scores.rows();
  const std::size_t n = out.scores.cols();
  if (settings.mode == AttentionMode::Uniform) return Vector(n, 1.0);
  Vector w(n, 0.0);
  for (std::size_t k = 0; k < r; ++k)
    for (std::size_t i = 0; i < n; ++i) w[i] += out.scores(k, i) / static_cast<double>(r);
  if (settings.sparsity == SparsityMode::PaperLiteral) {
    for (double& v : w) v = std::min(1.0, v * static_cast<double>(n));
  }
  return w;
}

inline double smooth_reg_direct(std::span<const double> a) {
  double s = 0.0;
  for (std::size_t i = 0; i + 1 < a.size(); ++i) {
    const double diff = a[i] - a[i + 1];
    s += diff * diff;
  }
  return s;
}

/// 2 a'a - a'P1 a - a'P2 a - 2 a'P3 P4' a with the selector matrices applied as
/// index arithmetic: P1 picks a_1, P2 picks a_n, and P3 P4' pairs a_i with a_{i+1}.
inline double smooth_reg_quadratic(std::span<const double> a) {
  const std::size_t n = a.size();
  if (n < 2) fail(ErrorKind::Shape, "smooth_reg_quadratic: needs n >= 2");
  const double ata = dot(a, a);
  const double p1 = a[0] * a[0];
  const double p2 = a[n - 1] * a[n - 1];
  double p34 = 0.0;
  for (std::size_t i = 0; i + 1 < n; ++i) p34 += a[i] * a[i + 1];
  return 2.0 * ata - p1 - p2 - 2.0 * p34;
}

inline Vector smooth_reg_grad(std::span<const double> a) {
  Vector g(a.size(), 0.0);
  for (std::size_t i = 0; i + 1 < a.size(); ++i) {
    const double diff = 2.0 * (a[i] - a[i + 1]);
    g[i] += diff;
    g[i + 1] -= diff;
  }
  return g;
}

inline double sparsity_reg(std::span<const double> a) {
  double s = 0.0;
  for (double v : a) s += std::abs(v);
  return s;
}

inline Vector sparsity_reg_grad(std::span<const double> a) {
  Vector g(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) g[i] = a[i] > 0.0 ? 1.0 : (a[i] < 0.0 ? -1.0 : 0.0);
  return g;
}

/// Head-averaged regularizer values (smoothness on the pooling weights, L1 on
/// the scores) along with their gradients w.r.t. weights and scores.
struct RegTerms {
  double smooth = 0.0;
  double sparsity = 0.0;
  Matrix grad_weights;
  Matrix grad_scores;
};

inline RegTerms attention_regularizers(const AttentionOutput& out, double smooth_scale, double sparsity_scale) {
  const std::size_t r = out.weights.rows();
  const std::size_t n = out.weights.cols();
  RegTerms t;
  t.grad_weights = Matrix(r, n);
  t.grad_scores = Matrix(r, n);
  const double inv_r = 1.0 / static_cast<double>(r);
  for (std::size_t k = 0; k < r; ++k) {
    const auto w = out.weights.row(k);
    const auto s = out.scores.row(k);
    t.smooth += inv_r * smooth_reg_direct(w);
    t.sparsity += inv_r * sparsity_reg(s);
    const Vector gw = smooth_reg_grad(w);
    const Vector gs = sparsity_reg_grad(s);
    for (std::size_t i = 0; i < n; ++i) {
      t.grad_weights(k, i) = smooth_scale * inv_r * gw[i];
      t.grad_scores(k, i) = sparsity_scale * inv_r * gs[i];
    }
  }
  return t;
}

/// Backpropagates dL/dpooled, dL/dweights and dL/dscores to W1 and w2.
/// grad_weights / grad_scores may be empty (treated as zero).
inline AttentionGrads attention_backward(const FeatureMatrix& x, const AttentionParams& p, const AttentionOutput& out,
                                         std::span<const double> grad_pooled, const Matrix& grad_weights,
                                         const Matrix& grad_scores, AttentionSettings settings = {}) {
  const std::size_t n = x.frames();
  const std::size_t d = x.dim();
  const std::size_t r = p.heads();
  const std::size_t b = p.hidden();
  if (grad_pooled.size() != r * d) fail(ErrorKind::Shape, "attention_backward: pooled gradient has wrong length");
  if (!grad_weights.empty() && (grad_weights.rows() != r || grad_weights.cols() != n))
    fail(ErrorKind::Shape, "attention_backward: weight gradient has wrong shape");
  if (!grad_scores.empty() && (grad_scores.rows() != r || grad_scores.cols() != n))
    fail(ErrorKind::Shape, "attention_backward: score gradient has wrong shape");

  AttentionGrads g{Matrix(b, d), Matrix(r, b)};
  if (settings.mode == AttentionMode::Uniform) return g;

  Matrix grad_hidden(n, b);
  Vector ga(n), gl(n);
  for (std::size_t k = 0; k < r; ++k) {
    const auto gm = grad_pooled.subspan(k * d, d);
    for (std::size_t i = 0; i < n; ++i) ga[i] = dot(gm, x.frame(i)) + (grad_weights.empty() ? 0.0 : grad_weights(k, i));
    const auto w = out.weights.row(k);
    const auto s = out.scores.row(k);
    if (settings.sparsity == SparsityMode::PaperLiteral) {
      // weights and scores are the same softmax vector
      for (std::size_t i = 0; i < n; ++i) ga[i] += grad_scores.empty() ? 0.0 : grad_scores(k, i);
      gl = softmax_backward(w, ga);
    } else {
      double total = 0.0;
      for (std::size_t i = 0; i < n; ++i) total += s[i];
      const double inner = dot(w, ga);
      for (std::size_t i = 0; i < n; ++i) {
        const double gs = (ga[i] - inner) / total + (grad_scores.empty() ? 0.0 : grad_scores(k, i));
        gl[i] = gs * s[i] * (1.0 - s[i]);
      }
    }
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < b; ++j) {
        g.w2(k, j) += gl[i] * out.tanh_hidden(i, j);
        grad_hidden(i, j) += gl[i] * p.w2(k, j);
      }
  }
  for (std::size_t i = 0; i < n; ++i) {
    const auto xi = x.frame(i);
    for (std::size_t j = 0; j < b; ++j) {
      const double h = out.tanh_hidden(i, j);
      const double gz = grad_hidden(i, j) * (1.0 - h * h);
      if (gz == 0.0) continue;
      auto row = g.w1.row(j);
      for (std::size_t c = 0; c < d; ++c) row[c] += gz * xi[c];
    }
  }
  return g;
}

}  // namespace tsrnet
