#include "ustar/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace ustar {

void TrainConfig::validate() const {
  if (batch_size == 0) throw std::invalid_argument("train.batch_size must be positive");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("train.lr must be positive");
  if (epochs == 0) throw std::invalid_argument("train.epochs must be positive");
  if (weight_decay < 0.0) throw std::invalid_argument("train.weight_decay must be non-negative");
}

double cosine_lr(std::size_t step, std::size_t total_steps, double base_lr) {
  if (total_steps == 0 || step > total_steps) {
    throw std::out_of_range("cosine_lr: step " + std::to_string(step) + " outside [0, " +
                            std::to_string(total_steps) + "]");
  }
  const double frac = static_cast<double>(step) / static_cast<double>(total_steps);
  return std::max(0.0, base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * frac)));
}

template <typename T>
void adamw_step(std::span<nn::Parameter<T>> params, const TrainConfig& config, double lr) {
  for (auto& p : params) {
    ++p.step;
    const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(p.step));
    const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(p.step));
    auto values = p.tensor.mutable_value();
    auto grads = p.tensor.mutable_grad();
    const T decay = static_cast<T>(1.0 - lr * config.weight_decay);
    const T b1 = static_cast<T>(config.beta1), b2 = static_cast<T>(config.beta2);
    for (std::size_t i = 0; i < values.size(); ++i) {
      const T g = grads[i];
      values[i] *= decay;
      p.m[i] = b1 * p.m[i] + (T(1) - b1) * g;
      p.v[i] = b2 * p.v[i] + (T(1) - b2) * g * g;
      const double mhat = static_cast<double>(p.m[i]) / bc1;
      const double vhat = static_cast<double>(p.v[i]) / bc2;
      values[i] -= static_cast<T>(lr * mhat / (std::sqrt(vhat) + config.eps));
    }
  }
}

template void adamw_step<float>(std::span<nn::Parameter<float>>, const TrainConfig&, double);
template void adamw_step<double>(std::span<nn::Parameter<double>>, const TrainConfig&, double);

}  // namespace ustar
