#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace knight {

/// Dense 32-bit embedding with finite components and dim >= 1.
class EmbeddingVector {
 public:
  explicit EmbeddingVector(std::vector<float> values);

  std::size_t dim() const noexcept { return values_.size(); }
  std::span<const float> values() const noexcept { return values_; }
  float operator[](std::size_t i) const noexcept { return values_[i]; }

  /// Euclidean norm, accumulated in double.
  double norm() const noexcept;

  friend bool operator==(const EmbeddingVector&, const EmbeddingVector&) = default;

 private:
  std::vector<float> values_;
};

/// An EmbeddingVector whose norm is 1 within 1e-5. Storing unit vectors
/// turns cosine similarity into a dot product.
class NormalizedEmbedding {
 public:
  /// Accepts `values` only if they are already unit-norm (within 1e-5).
  static NormalizedEmbedding from_unit(std::vector<float> values);

  std::size_t dim() const noexcept { return vec_.dim(); }
  std::span<const float> values() const noexcept { return vec_.values(); }
  float operator[](std::size_t i) const noexcept { return vec_[i]; }
  const EmbeddingVector& vector() const noexcept { return vec_; }
  operator const EmbeddingVector&() const noexcept { return vec_; }

  friend bool operator==(const NormalizedEmbedding&, const NormalizedEmbedding&) = default;

 private:
  explicit NormalizedEmbedding(EmbeddingVector v) : vec_(std::move(v)) {}
  friend NormalizedEmbedding normalize(const EmbeddingVector& v);

  EmbeddingVector vec_;
};

inline constexpr double kUnitNormTolerance = 1e-5;
inline constexpr double kZeroNormThreshold = 1e-12;

/// v / |v|. Throws ZeroVector when |v| < 1e-12.
NormalizedEmbedding normalize(const EmbeddingVector& v);
NormalizedEmbedding normalize(std::span<const float> v);

/// Dot product in double accumulation, clamped to [-1, 1].
double cosine_similarity(const NormalizedEmbedding& a, const NormalizedEmbedding& b);

/// Raw dot product of two equal-length spans, double accumulation. No clamping.
double dot(std::span<const float> a, std::span<const float> b);

/// Componentwise mean. The result is not renormalized.
EmbeddingVector mean_pool(std::span<const EmbeddingVector> vs);
EmbeddingVector mean_pool(std::span<const NormalizedEmbedding> vs);

}  // namespace knight
