#include "knight/adam.hpp"

#include <cmath>

#include "knight/error.hpp"

namespace knight {

template <typename T>
AdamState<T> adam_init(const NamedConstRefs<T>& params) {
  AdamState<T> s;
  for (const auto& [name, p] : params) {
    s.m.push_back(Mat<T>::Zero(p->rows(), p->cols()));
    s.v.push_back(Mat<T>::Zero(p->rows(), p->cols()));
  }
  return s;
}

template <typename T>
void adam_step(const NamedRefs<T>& params, const NamedConstRefs<T>& grads, AdamState<T>& state,
               const AdamConfig& cfg) {
  if (params.size() != grads.size() || params.size() != state.m.size() || params.size() != state.v.size()) {
    throw Error(ErrorCode::kShapeMismatch, "parameter, gradient and moment lists differ in length");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Mat<T>& g = *grads[i].second;
    const Mat<T>& p = *params[i].second;
    if (g.rows() != p.rows() || g.cols() != p.cols() || state.m[i].rows() != p.rows() ||
        state.m[i].cols() != p.cols()) {
      throw Error(ErrorCode::kShapeMismatch, params[i].first);
    }
    if (!g.allFinite()) throw Error(ErrorCode::kNonFiniteGradient, grads[i].first);
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Mat<T>& p = *params[i].second;
    const Mat<T>& g = *grads[i].second;
    Mat<T>& m = state.m[i];
    Mat<T>& v = state.v[i];
    for (Eigen::Index j = 0; j < p.size(); ++j) {
      const T gj = g.data()[j];
      m.data()[j] = b1 * m.data()[j] + (T(1) - b1) * gj;
      v.data()[j] = b2 * v.data()[j] + (T(1) - b2) * gj * gj;
      const double m_hat = static_cast<double>(m.data()[j]) / bc1;
      const double v_hat = static_cast<double>(v.data()[j]) / bc2;
      p.data()[j] -= static_cast<T>(cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps));
    }
  }
}

template AdamState<float> adam_init(const NamedConstRefs<float>&);
template AdamState<double> adam_init(const NamedConstRefs<double>&);
template void adam_step(const NamedRefs<float>&, const NamedConstRefs<float>&, AdamState<float>&,
                        const AdamConfig&);
template void adam_step(const NamedRefs<double>&, const NamedConstRefs<double>&, AdamState<double>&,
                        const AdamConfig&);

}  // namespace knight
