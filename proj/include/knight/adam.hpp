#pragma once

#include <cstdint>
#include <vector>

#include "knight/tensor.hpp"

namespace knight {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
struct AdamState {
  std::vector<Mat<T>> m, v;
  std::uint64_t step = 0;
};

/// Zero moments shaped like `params`.
template <typename T>
AdamState<T> adam_init(const NamedConstRefs<T>& params);

/// One bias-corrected Adam update, in place. The gradient list must match
/// `params` in order and shape. Throws NonFiniteGradient (before touching
/// anything) when a gradient holds NaN or Inf.
template <typename T>
void adam_step(const NamedRefs<T>& params, const NamedConstRefs<T>& grads, AdamState<T>& state,
               const AdamConfig& config);

}  // namespace knight
