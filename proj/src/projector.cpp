#include "knight/projector.hpp"

#include "knight/error.hpp"
#include "knight/random.hpp"

namespace knight {

template <typename T>
void glorot_normal(Mat<T>& m, std::uint64_t seed) {
  CounterRng rng(seed);
  const double stddev = std::sqrt(2.0 / static_cast<double>(m.rows() + m.cols()));
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(stddev * rng.gaussian());
}

template void glorot_normal<float>(Mat<float>&, std::uint64_t);
template void glorot_normal<double>(Mat<double>&, std::uint64_t);

template <typename T>
NamedRefs<T> MlpParams<T>::tensors() {
  return {{"mlp.w1", &w1}, {"mlp.b1", &b1}, {"mlp.w2", &w2}, {"mlp.b2", &b2}, {"mlp.w3", &w3}, {"mlp.b3", &b3}};
}

template <typename T>
NamedConstRefs<T> MlpParams<T>::tensors() const {
  return {{"mlp.w1", &w1}, {"mlp.b1", &b1}, {"mlp.w2", &w2}, {"mlp.b2", &b2}, {"mlp.w3", &w3}, {"mlp.b3", &b3}};
}

template <typename T>
MlpParams<T> MlpParams<T>::zeros_like() const {
  return MlpParams{Mat<T>::Zero(w1.rows(), w1.cols()), Mat<T>::Zero(1, b1.cols()),
                   Mat<T>::Zero(w2.rows(), w2.cols()), Mat<T>::Zero(1, b2.cols()),
                   Mat<T>::Zero(w3.rows(), w3.cols()), Mat<T>::Zero(1, b3.cols())};
}

template <typename T>
MlpParams<T> mlp_init(std::size_t d_in, std::size_t d_hidden, std::size_t d_model, std::uint64_t seed) {
  if (d_in == 0 || d_hidden == 0 || d_model == 0) {
    throw Error(ErrorCode::kInvalidArgument, "projector dims must be >= 1");
  }
  const auto di = static_cast<Eigen::Index>(d_in), dh = static_cast<Eigen::Index>(d_hidden),
             dm = static_cast<Eigen::Index>(d_model);
  MlpParams<T> p{Mat<T>(di, dh), Mat<T>::Zero(1, dh), Mat<T>(dh, dh), Mat<T>::Zero(1, dh),
                 Mat<T>(dh, dm), Mat<T>::Zero(1, dm)};
  CounterRng rng(seed);
  glorot_normal(p.w1, rng.next_u64());
  glorot_normal(p.w2, rng.next_u64());
  glorot_normal(p.w3, rng.next_u64());
  return p;
}

template <typename T>
Mat<T> mlp_forward(const MlpParams<T>& p, const Mat<T>& x, MlpCache<T>* cache) {
  if (static_cast<std::size_t>(x.cols()) != p.d_in()) {
    throw Error(ErrorCode::kDimMismatch,
                "projector input dim " + std::to_string(x.cols()) + ", expected " + std::to_string(p.d_in()));
  }
  Mat<T> pre1 = (x * p.w1).rowwise() + p.b1.row(0);
  Mat<T> act1 = pre1.unaryExpr([](T v) { return gelu(v); });
  Mat<T> pre2 = (act1 * p.w2).rowwise() + p.b2.row(0);
  Mat<T> act2 = pre2.unaryExpr([](T v) { return gelu(v); });
  Mat<T> y = (act2 * p.w3).rowwise() + p.b3.row(0);
  if (cache) {
    cache->x = x;
    cache->pre1 = std::move(pre1);
    cache->act1 = std::move(act1);
    cache->pre2 = std::move(pre2);
    cache->act2 = std::move(act2);
  }
  return y;
}

template <typename T>
Mat<T> mlp_backward(const MlpParams<T>& p, const MlpCache<T>& c, const Mat<T>& upstream, MlpParams<T>& g) {
  if (upstream.rows() != c.x.rows() || static_cast<std::size_t>(upstream.cols()) != p.d_model()) {
    throw Error(ErrorCode::kDimMismatch, "projector upstream gradient shape");
  }
  g.w3.noalias() += c.act2.transpose() * upstream;
  g.b3 += upstream.colwise().sum();
  Mat<T> d2 = (upstream * p.w3.transpose()).cwiseProduct(c.pre2.unaryExpr([](T v) { return gelu_grad(v); }));
  g.w2.noalias() += c.act1.transpose() * d2;
  g.b2 += d2.colwise().sum();
  Mat<T> d1 = (d2 * p.w2.transpose()).cwiseProduct(c.pre1.unaryExpr([](T v) { return gelu_grad(v); }));
  g.w1.noalias() += c.x.transpose() * d1;
  g.b1 += d1.colwise().sum();
  return d1 * p.w1.transpose();
}

template struct MlpParams<float>;
template struct MlpParams<double>;
template MlpParams<float> mlp_init<float>(std::size_t, std::size_t, std::size_t, std::uint64_t);
template MlpParams<double> mlp_init<double>(std::size_t, std::size_t, std::size_t, std::uint64_t);
template Mat<float> mlp_forward(const MlpParams<float>&, const Mat<float>&, MlpCache<float>*);
template Mat<double> mlp_forward(const MlpParams<double>&, const Mat<double>&, MlpCache<double>*);
template Mat<float> mlp_backward(const MlpParams<float>&, const MlpCache<float>&, const Mat<float>&,
                                 MlpParams<float>&);
template Mat<double> mlp_backward(const MlpParams<double>&, const MlpCache<double>&, const Mat<double>&,
                                  MlpParams<double>&);

}  // namespace knight
