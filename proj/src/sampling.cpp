#include "ustar/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace ustar {

std::string to_string(SamplerKind kind) {
  return kind == SamplerKind::segmental ? "segmental" : "semantic";
}

SamplerKind parse_sampler_kind(const std::string& name) {
  if (name == "segmental") return SamplerKind::segmental;
  if (name == "semantic") return SamplerKind::semantic;
  throw std::invalid_argument("unknown sampler '" + name + "' (expected segmental or semantic)");
}

void SamplerConfig::validate() const {
  if (K == 0) throw std::invalid_argument("sampler.K must be at least 1");
  if (exclude_mm < 0.0 || exclude_deg < 0.0 || std::isnan(exclude_mm) || std::isnan(exclude_deg)) {
    throw std::invalid_argument("sampler.exclude thresholds must be non-negative");
  }
}

double cosine_similarity(const ViewDistribution& z1, const ViewDistribution& z2) {
  double dot = 0.0, n1 = 0.0, n2 = 0.0;
  for (std::size_t k = 0; k < kViewCount; ++k) {
    dot += z1[k] * z2[k];
    n1 += z1[k] * z1[k];
    n2 += z2[k] * z2[k];
  }
  if (n1 == 0.0 || n2 == 0.0) throw std::invalid_argument("cosine_similarity of a zero vector");
  return dot / (std::sqrt(n1) * std::sqrt(n2));
}

double redundancy_score(const ViewDistribution& candidate, const ViewDistribution& current,
                        std::span<const ViewDistribution> selected) {
  double s = cosine_similarity(candidate, current);
  for (const auto& z : selected) s += cosine_similarity(candidate, z);
  return s;
}

std::vector<std::size_t> segmental_sample(std::span<const std::size_t> pool, std::size_t n, Rng& rng) {
  if (n == 0) return {};
  if (pool.size() <= n) return {pool.begin(), pool.end()};
  const std::size_t base = pool.size() / n, extra = pool.size() % n;
  std::vector<std::size_t> out;
  out.reserve(n);
  std::size_t start = 0;
  for (std::size_t s = 0; s < n; ++s) {
    const std::size_t len = base + (s < extra ? 1 : 0);
    out.push_back(pool[start + rng.below(len)]);
    start += len;
  }
  return out;
}

std::vector<std::size_t> semantic_sample(std::span<const std::size_t> pool,
                                         std::span<const ViewDistribution> zs,
                                         const ViewDistribution& current, std::size_t n,
                                         std::size_t K, Rng& rng, std::vector<std::size_t>* order) {
  if (zs.size() != pool.size()) throw std::invalid_argument("semantic_sample: one distribution per pool entry");
  if (K == 0) throw std::invalid_argument("semantic_sample: K must be at least 1");
  if (order) order->clear();
  if (pool.size() <= n) {
    if (order) order->assign(pool.begin(), pool.end());
    return {pool.begin(), pool.end()};
  }

  // Norms are cached; each similarity uses the same operations as
  // cosine_similarity and is accumulated in selection order, the order
  // redundancy_score sums in.
  auto norm = [](const ViewDistribution& z) {
    double s = 0.0;
    for (double x : z) s += x * x;
    if (s == 0.0) throw std::invalid_argument("cosine_similarity of a zero vector");
    return std::sqrt(s);
  };
  auto dot = [](const ViewDistribution& a, const ViewDistribution& b) {
    double s = 0.0;
    for (std::size_t k = 0; k < kViewCount; ++k) s += a[k] * b[k];
    return s;
  };
  std::vector<double> norms(pool.size()), score(pool.size());
  const double current_norm = norm(current);
  for (std::size_t i = 0; i < pool.size(); ++i) {
    norms[i] = norm(zs[i]);
    score[i] = dot(zs[i], current) / (norms[i] * current_norm);
  }
  std::vector<std::size_t> alive(pool.size());
  std::iota(alive.begin(), alive.end(), 0);

  std::vector<std::size_t> picked;
  picked.reserve(n);
  for (std::size_t step = 0; step < n; ++step) {
    const std::size_t k = std::min(K, alive.size());
    auto lower = [&](std::size_t a, std::size_t b) {
      return score[a] < score[b] || (score[a] == score[b] && a < b);
    };
    std::nth_element(alive.begin(), alive.begin() + static_cast<std::ptrdiff_t>(k - 1), alive.end(), lower);
    // The k lowest now occupy alive[0..k); sort them so the draw does not
    // depend on nth_element's internal arrangement.
    std::sort(alive.begin(), alive.begin() + static_cast<std::ptrdiff_t>(k), lower);
    const std::size_t slot = static_cast<std::size_t>(rng.below(k));
    const std::size_t chosen = alive[slot];
    alive.erase(alive.begin() + static_cast<std::ptrdiff_t>(slot));
    picked.push_back(chosen);
    if (order) order->push_back(pool[chosen]);
    for (std::size_t i : alive) score[i] += dot(zs[i], zs[chosen]) / (norms[i] * norms[chosen]);
  }
  std::vector<std::size_t> out;
  out.reserve(picked.size());
  for (std::size_t i : picked) out.push_back(pool[i]);
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::size_t> exclude_near_target(std::span<const std::size_t> pool,
                                             std::span<const Pose6> poses, const Pose6& target,
                                             double trans_threshold_mm, double rot_threshold_deg) {
  if (poses.size() != pool.size()) throw std::invalid_argument("exclude_near_target: one pose per pool entry");
  std::vector<std::size_t> out;
  out.reserve(pool.size());
  for (std::size_t i = 0; i < pool.size(); ++i) {
    const bool near = translation_distance(poses[i], target) <= trans_threshold_mm &&
                      rotation_distance(poses[i], target) <= rot_threshold_deg;
    if (!near) out.push_back(pool[i]);
  }
  return out;
}

}  // namespace ustar
