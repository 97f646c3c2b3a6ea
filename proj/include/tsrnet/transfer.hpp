#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "tsrnet/numerics.hpp"

namespace tsrnet {

/// Gaussian kernel bandwidth: fixed, or the median pairwise distance of each batch pair.
struct KernelConfig {
  std::optional<double> sigma;  // nullopt = median heuristic

  bool is_median() const { return !sigma.has_value(); }
};

inline void validate_kernel(const KernelConfig& k) {
  if (k.sigma && !(*k.sigma > 0.0 && std::isfinite(*k.sigma))) fail(ErrorKind::Config, "kernel.sigma must be positive");
}

inline double gaussian_kernel(std::span<const double> x, std::span<const double> y, double sigma) {
  if (!(sigma > 0.0)) fail(ErrorKind::Config, "gaussian_kernel: sigma must be positive");
  if (x.size() != y.size()) fail(ErrorKind::Shape, "gaussian_kernel: dimension mismatch");
  return std::exp(-squared_distance(x, y) / (2.0 * sigma * sigma));
}

using FeatureSet = std::vector<Vector>;

inline void check_sets(const FeatureSet& t, const FeatureSet& u) {
  if (t.empty() || u.empty()) fail(ErrorKind::Sample, "mmd: both feature sets need at least one vector");
  const std::size_t dim = t.front().size();
  for (const auto& v : t)
    if (v.size() != dim) fail(ErrorKind::Shape, "mmd: inconsistent dimension in source set");
  for (const auto& v : u)
    if (v.size() != dim) fail(ErrorKind::Shape, "mmd: source and target dimensions differ");
}

/// Median pairwise Euclidean distance over the pooled sample; 1 if that median is 0.
inline double median_bandwidth(const FeatureSet& t, const FeatureSet& u) {
  std::vector<std::span<const double>> all;
  for (const auto& v : t) all.emplace_back(v);
  for (const auto& v : u) all.emplace_back(v);
  if (all.size() < 2) fail(ErrorKind::Sample, "median_bandwidth: need at least two vectors");
  std::vector<double> dists;
  dists.reserve(all.size() * (all.size() - 1) / 2);
  for (std::size_t i = 0; i < all.size(); ++i)
    for (std::size_t j = i + 1; j < all.size(); ++j) {
      if (all[i].size() != all[j].size()) fail(ErrorKind::Shape, "median_bandwidth: dimension mismatch");
      dists.push_back(std::sqrt(squared_distance(all[i], all[j])));
    }
  const double med = median_of(std::move(dists));
  return med > 0.0 ? med : 1.0;
}

inline double median_bandwidth(const FeatureSet& pooled) { return median_bandwidth(pooled, {}); }

inline double resolve_bandwidth(const KernelConfig& k, const FeatureSet& t, const FeatureSet& u) {
  return k.sigma ? *k.sigma : median_bandwidth(t, u);
}

namespace detail {
inline double mean_kernel(const FeatureSet& a, const FeatureSet& b, double sigma) {
  double s = 0.0;
  for (const auto& x : a)
    for (const auto& y : b) s += gaussian_kernel(x, y, sigma);
  return s / (static_cast<double>(a.size()) * static_cast<double>(b.size()));
}
}  // namespace detail

/// Biased (V-statistic) squared MMD, i = j terms included.
inline double mmd2(const FeatureSet& t, const FeatureSet& u, double sigma) {
  check_sets(t, u);
  return detail::mean_kernel(t, t, sigma) + detail::mean_kernel(u, u, sigma) - 2.0 * detail::mean_kernel(t, u, sigma);
}

inline double mmd2(const FeatureSet& t, const FeatureSet& u, const KernelConfig& k) {
  return mmd2(t, u, resolve_bandwidth(k, t, u));
}

struct MmdGrad {
  double value = 0.0;
  FeatureSet grad_t;
  FeatureSet grad_u;
};

/// mmd2 and its gradient w.r.t. every vector of both sets, bandwidth held fixed.
inline MmdGrad mmd2_with_grad(const FeatureSet& t, const FeatureSet& u, double sigma) {
  check_sets(t, u);
  const double nt = static_cast<double>(t.size());
  const double nu = static_cast<double>(u.size());
  const double inv_s2 = 1.0 / (sigma * sigma);
  const std::size_t dim = t.front().size();
  MmdGrad g;
  g.grad_t.assign(t.size(), Vector(dim, 0.0));
  g.grad_u.assign(u.size(), Vector(dim, 0.0));
  double ktt = 0.0, kuu = 0.0, ktu = 0.0;
  // d k(x,y) / dx = -k (x - y) / sigma^2
  for (std::size_t i = 0; i < t.size(); ++i)
    for (std::size_t j = 0; j < t.size(); ++j) {
      const double k = gaussian_kernel(t[i], t[j], sigma);
      ktt += k;
      const double c = -2.0 * k * inv_s2 / (nt * nt);  // both (i,j) and (j,i) orderings
      for (std::size_t q = 0; q < dim; ++q) g.grad_t[i][q] += c * (t[i][q] - t[j][q]);
    }
  for (std::size_t i = 0; i < u.size(); ++i)
    for (std::size_t j = 0; j < u.size(); ++j) {
      const double k = gaussian_kernel(u[i], u[j], sigma);
      kuu += k;
      const double c = -2.0 * k * inv_s2 / (nu * nu);
      for (std::size_t q = 0; q < dim; ++q) g.grad_u[i][q] += c * (u[i][q] - u[j][q]);
    }
  for (std::size_t i = 0; i < t.size(); ++i)
    for (std::size_t j = 0; j < u.size(); ++j) {
      const double k = gaussian_kernel(t[i], u[j], sigma);
      ktu += k;
      const double c = 2.0 * k * inv_s2 / (nt * nu);
      for (std::size_t q = 0; q < dim; ++q) {
        const double diff = t[i][q] - u[j][q];
        g.grad_t[i][q] += c * diff;
        g.grad_u[j][q] -= c * diff;
      }
    }
  g.value = ktt / (nt * nt) + kuu / (nu * nu) - 2.0 * ktu / (nt * nu);
  return g;
}

/// Activations at the two classifier tap points for a batch of videos: the pooled
/// representation entering FC1 and the post-relu output of FC1.
struct TapActivations {
  FeatureSet pooled;
  FeatureSet hidden;
};

struct TransferTerms {
  double fc1 = 0.0;
  double fc2 = 0.0;
  double sigma_fc1 = 0.0;
  double sigma_fc2 = 0.0;
  FeatureSet grad_pooled;  // w.r.t. target pooled activations
  FeatureSet grad_hidden;  // w.r.t. target hidden activations (zeros when fc2 disabled)

  double total() const { return fc1 + fc2; }
};

/// L_FC1 + L_FC2 for one stream. Gradients flow into the target side only.
inline TransferTerms transfer_loss(const TapActivations& source, const TapActivations& target, const KernelConfig& k,
                                   bool fc2_enabled = true) {
  if (source.pooled.empty() || target.pooled.empty()) fail(ErrorKind::Sample, "transfer_loss: empty batch");
  if (source.pooled.front().size() != target.pooled.front().size())
    fail(ErrorKind::Config, "transfer_loss: source and target pooled widths differ");
  TransferTerms out;
  out.sigma_fc1 = resolve_bandwidth(k, source.pooled, target.pooled);
  auto g1 = mmd2_with_grad(source.pooled, target.pooled, out.sigma_fc1);
  out.fc1 = g1.value;
  out.grad_pooled = std::move(g1.grad_u);
  if (fc2_enabled) {
    if (source.hidden.empty() || target.hidden.empty() || source.hidden.front().size() != target.hidden.front().size())
      fail(ErrorKind::Config, "transfer_loss: source and target FC1 widths differ");
    out.sigma_fc2 = resolve_bandwidth(k, source.hidden, target.hidden);
    auto g2 = mmd2_with_grad(source.hidden, target.hidden, out.sigma_fc2);
    out.fc2 = g2.value;
    out.grad_hidden = std::move(g2.grad_u);
  } else {
    const std::size_t h = target.hidden.empty() ? 0 : target.hidden.front().size();
    out.grad_hidden.assign(target.pooled.size(), Vector(h, 0.0));
  }
  return out;
}

}  // namespace tsrnet
