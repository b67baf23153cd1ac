#pragma once

#include <cstdint>

#include "knight/tensor.hpp"

namespace knight {

/// Three linear layers with GELU between them and none after the last:
///   y = gelu(gelu(x W1 + b1) W2 + b2) W3 + b3
/// Rows of x are independent inputs. W1 is d_in x d_h, W2 d_h x d_h,
/// W3 d_h x d_model.
template <typename T>
struct MlpParams {
  Mat<T> w1, b1, w2, b2, w3, b3;

  std::size_t d_in() const noexcept { return static_cast<std::size_t>(w1.rows()); }
  std::size_t d_hidden() const noexcept { return static_cast<std::size_t>(w1.cols()); }
  std::size_t d_model() const noexcept { return static_cast<std::size_t>(w3.cols()); }

  /// Tensors under their checkpoint names "mlp.w1" ... "mlp.b3".
  NamedRefs<T> tensors();
  NamedConstRefs<T> tensors() const;

  /// Same shapes, all zeros.
  MlpParams zeros_like() const;

  template <typename U>
  MlpParams<U> cast() const {
    return MlpParams<U>{w1.template cast<U>(), b1.template cast<U>(), w2.template cast<U>(),
                        b2.template cast<U>(), w3.template cast<U>(), b3.template cast<U>()};
  }
};

template <typename T>
struct MlpCache {
  Mat<T> x, pre1, act1, pre2, act2;
};

template <typename T>
MlpParams<T> mlp_init(std::size_t d_in, std::size_t d_hidden, std::size_t d_model, std::uint64_t seed);

/// Forward over a batch (one input per row). When `cache` is non-null it
/// receives the activations needed by mlp_backward.
template <typename T>
Mat<T> mlp_forward(const MlpParams<T>& params, const Mat<T>& x, MlpCache<T>* cache = nullptr);

/// Accumulates parameter gradients into `grads` and returns dL/dx.
template <typename T>
Mat<T> mlp_backward(const MlpParams<T>& params, const MlpCache<T>& cache, const Mat<T>& upstream,
                    MlpParams<T>& grads);

}  // namespace knight
