#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

#include "ustar/nn.hpp"

namespace ustar {

enum class Precision { f32, f64 };

struct TrainConfig {
  std::size_t batch_size = 128;
  double learning_rate = 1e-4;
  std::size_t epochs = 5;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  Precision precision = Precision::f32;
  std::uint64_t seed = 0;

  /// Throws std::invalid_argument on non-positive batch size, lr or epochs.
  void validate() const;
};

/// base * 0.5 * (1 + cos(pi * step / total)), no warmup. Requires 0 <= step <= total.
double cosine_lr(std::size_t step, std::size_t total_steps, double base_lr);

/// One AdamW update of every parameter from its accumulated gradient, with
/// decoupled weight decay (p -= lr * wd * p before the moment step).
/// Increments each parameter's step count.
template <typename T>
void adamw_step(std::span<nn::Parameter<T>> params, const TrainConfig& config, double lr);

}  // namespace ustar
