#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace knight {

/// Row-major dynamic matrix. Biases and layer-norm parameters are 1 x n.
template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
using NamedRefs = std::vector<std::pair<std::string, Mat<T>*>>;

template <typename T>
using NamedConstRefs = std::vector<std::pair<std::string, const Mat<T>*>>;

inline constexpr double kGeluC = 0.7978845608;  // sqrt(2 / pi), fixed
inline constexpr double kGeluA = 0.044715;

/// GELU, tanh approximation.
template <typename T>
T gelu(T x) {
  const T c = T(kGeluC), a = T(kGeluA);
  return T(0.5) * x * (T(1) + std::tanh(c * (x + a * x * x * x)));
}

template <typename T>
T gelu_grad(T x) {
  const T c = T(kGeluC), a = T(kGeluA);
  const T th = std::tanh(c * (x + a * x * x * x));
  const T sech2 = T(1) - th * th;
  return T(0.5) * (T(1) + th) + T(0.5) * x * sech2 * c * (T(1) + T(3) * a * x * x);
}

/// Fills `m` with Gaussian(0, 2 / (fan_in + fan_out)) draws from CounterRng.
template <typename T>
void glorot_normal(Mat<T>& m, std::uint64_t seed);

/// Element count over a list of tensors.
template <typename T>
std::size_t parameter_count(const NamedConstRefs<T>& tensors) {
  std::size_t n = 0;
  for (const auto& [name, m] : tensors) n += static_cast<std::size_t>(m->size());
  return n;
}

}  // namespace knight
