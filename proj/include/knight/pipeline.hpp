#pragma once

#include <string>
#include <vector>

#include "knight/beam_search.hpp"
#include "knight/embedding.hpp"
#include "knight/knn_index.hpp"
#include "knight/trainer.hpp"

namespace knight {

/// Ordered encoder-space embeddings that condition the decoder: the k
/// retrieved captions for an image (descending similarity) or the m
/// per-keyframe means for a video (frame order). Never empty.
class PrefixBundle {
 public:
  explicit PrefixBundle(std::vector<EmbeddingVector> entries);

  std::size_t size() const noexcept { return entries_.size(); }
  std::size_t dim() const noexcept { return entries_.front().dim(); }
  const std::vector<EmbeddingVector>& entries() const noexcept { return entries_; }

  /// Raw embeddings as decoder input rows.
  Mat<float> as_matrix() const;
  /// Embeddings after the projector, one d_model row per entry.
  Mat<float> projected(const Model<float>& model) const;

  friend bool operator==(const PrefixBundle&, const PrefixBundle&) = default;

 private:
  std::vector<EmbeddingVector> entries_;
};

/// Per-frame embeddings of one video, in time order.
struct FrameSequence {
  std::vector<NormalizedEmbedding> frames;
};

/// Top-k corpus embeddings for an image query, no exclusion.
PrefixBundle build_prefix_from_query(const CorpusIndex& index, const NormalizedEmbedding& query, std::size_t k);

/// Isometric indices floor(j * N / m) for j < m, deduplicated in order.
std::vector<std::size_t> keyframe_indices(std::size_t frame_count, std::size_t m);
FrameSequence sample_keyframes(const FrameSequence& frames, std::size_t m);

/// One entry per sampled keyframe: the mean of that frame's top-k corpus
/// embeddings (not renormalized).
PrefixBundle build_video_prefix(const CorpusIndex& index, const FrameSequence& frames, std::size_t m, std::size_t k);

/// The query itself as the sole prefix entry (k = 0, no retrieval).
PrefixBundle direct_prefix(const NormalizedEmbedding& query);

/// Beam search, then detokenize.
std::string infer_caption(const Captioner& captioner, const PrefixBundle& prefix, std::size_t beam_width = 5);

}  // namespace knight
