#include "knight/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "knight/error.hpp"

namespace knight {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::kZeroVector: return "ZeroVector";
    case ErrorCode::kDimMismatch: return "DimMismatch";
    case ErrorCode::kEmptyInput: return "EmptyInput";
    case ErrorCode::kNonFinite: return "NonFinite";
    case ErrorCode::kNotNormalized: return "NotNormalized";
    case ErrorCode::kDuplicateId: return "DuplicateId";
    case ErrorCode::kEmptyCorpus: return "EmptyCorpus";
    case ErrorCode::kEmptyCaption: return "EmptyCaption";
    case ErrorCode::kCountMismatch: return "CountMismatch";
    case ErrorCode::kMalformedLine: return "MalformedLine";
    case ErrorCode::kBadMagic: return "BadMagic";
    case ErrorCode::kBadVersion: return "BadVersion";
    case ErrorCode::kTruncatedPayload: return "TruncatedPayload";
    case ErrorCode::kIoError: return "IoError";
    case ErrorCode::kMissingTensor: return "MissingTensor";
    case ErrorCode::kUnknownTensor: return "UnknownTensor";
    case ErrorCode::kDuplicateTensor: return "DuplicateTensor";
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kLengthExceeded: return "LengthExceeded";
    case ErrorCode::kNonFiniteGradient: return "NonFiniteGradient";
    case ErrorCode::kKTooLarge: return "KTooLarge";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kEmptyEvalSet: return "EmptyEvalSet";
    case ErrorCode::kMissingReference: return "MissingReference";
    case ErrorCode::kEmptyPrefix: return "EmptyPrefix";
  }
  return "Unknown";
}

EmbeddingVector::EmbeddingVector(std::vector<float> values) : values_(std::move(values)) {
  if (values_.empty()) throw Error(ErrorCode::kEmptyInput, "embedding dim must be >= 1");
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (!std::isfinite(values_[i])) {
      throw Error(ErrorCode::kNonFinite, "component " + std::to_string(i) + " is not finite");
    }
  }
}

double EmbeddingVector::norm() const noexcept {
  double acc = 0.0;
  for (float x : values_) acc += static_cast<double>(x) * x;
  return std::sqrt(acc);
}

NormalizedEmbedding NormalizedEmbedding::from_unit(std::vector<float> values) {
  EmbeddingVector v(std::move(values));
  double n = v.norm();
  if (std::abs(n - 1.0) > kUnitNormTolerance) {
    throw Error(ErrorCode::kNotNormalized, "norm " + std::to_string(n) + " is not 1");
  }
  return NormalizedEmbedding(std::move(v));
}

NormalizedEmbedding normalize(const EmbeddingVector& v) {
  double n = v.norm();
  if (n < kZeroNormThreshold) throw Error(ErrorCode::kZeroVector, "cannot normalize a zero vector");
  std::vector<float> out(v.dim());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<float>(v[i] / n);
  return NormalizedEmbedding(EmbeddingVector(std::move(out)));
}

NormalizedEmbedding normalize(std::span<const float> v) {
  return normalize(EmbeddingVector(std::vector<float>(v.begin(), v.end())));
}

double dot(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) {
    throw Error(ErrorCode::kDimMismatch,
                "dims " + std::to_string(a.size()) + " and " + std::to_string(b.size()));
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += static_cast<double>(a[i]) * b[i];
  return acc;
}

double cosine_similarity(const NormalizedEmbedding& a, const NormalizedEmbedding& b) {
  return std::clamp(dot(a.values(), b.values()), -1.0, 1.0);
}

namespace {

template <typename V>
EmbeddingVector mean_pool_impl(std::span<const V> vs) {
  if (vs.empty()) throw Error(ErrorCode::kEmptyInput, "mean_pool needs at least one vector");
  const std::size_t dim = vs.front().dim();
  std::vector<double> acc(dim, 0.0);
  for (const auto& v : vs) {
    if (v.dim() != dim) {
      throw Error(ErrorCode::kDimMismatch,
                  "dims " + std::to_string(dim) + " and " + std::to_string(v.dim()));
    }
    for (std::size_t i = 0; i < dim; ++i) acc[i] += v[i];
  }
  std::vector<float> out(dim);
  const double count = static_cast<double>(vs.size());
  for (std::size_t i = 0; i < dim; ++i) out[i] = static_cast<float>(acc[i] / count);
  return EmbeddingVector(std::move(out));
}

}  // namespace

EmbeddingVector mean_pool(std::span<const EmbeddingVector> vs) { return mean_pool_impl(vs); }
EmbeddingVector mean_pool(std::span<const NormalizedEmbedding> vs) { return mean_pool_impl(vs); }

}  // namespace knight
