#include "knight/pipeline.hpp"

#include "knight/error.hpp"

namespace knight {

PrefixBundle::PrefixBundle(std::vector<EmbeddingVector> entries) : entries_(std::move(entries)) {
  if (entries_.empty()) throw Error(ErrorCode::kEmptyPrefix, "a prefix needs at least one embedding");
  for (const auto& e : entries_) {
    if (e.dim() != entries_.front().dim()) throw Error(ErrorCode::kDimMismatch, "prefix entries differ in dim");
  }
}

Mat<float> PrefixBundle::as_matrix() const {
  Mat<float> m(static_cast<Eigen::Index>(entries_.size()), static_cast<Eigen::Index>(dim()));
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    auto v = entries_[i].values();
    for (std::size_t j = 0; j < v.size(); ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v[j];
  }
  return m;
}

Mat<float> PrefixBundle::projected(const Model<float>& model) const { return mlp_forward(model.mlp, as_matrix()); }

namespace {

void check_k(const CorpusIndex& index, std::size_t k) {
  if (k == 0) throw Error(ErrorCode::kInvalidArgument, "k must be >= 1");
  if (k > index.size()) {
    throw Error(ErrorCode::kKTooLarge, "k=" + std::to_string(k) + " exceeds corpus size " + std::to_string(index.size()));
  }
}

std::vector<EmbeddingVector> hit_embeddings(const CorpusIndex& index, const RetrievalResult& result) {
  std::vector<EmbeddingVector> out;
  out.reserve(result.hits.size());
  for (const auto& h : result.hits) out.push_back(index.at(h.id).embedding.vector());
  return out;
}

}  // namespace

PrefixBundle build_prefix_from_query(const CorpusIndex& index, const NormalizedEmbedding& query, std::size_t k) {
  check_k(index, k);
  return PrefixBundle(hit_embeddings(index, index.top_k(query, k)));
}

std::vector<std::size_t> keyframe_indices(std::size_t frame_count, std::size_t m) {
  if (m == 0) throw Error(ErrorCode::kInvalidArgument, "m must be >= 1");
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < m; ++j) {
    const std::size_t idx = j * frame_count / m;
    if (out.empty() || out.back() != idx) out.push_back(idx);
  }
  return out;
}

FrameSequence sample_keyframes(const FrameSequence& frames, std::size_t m) {
  if (frames.frames.empty()) throw Error(ErrorCode::kEmptyInput, "video has no frames");
  FrameSequence out;
  for (std::size_t idx : keyframe_indices(frames.frames.size(), m)) out.frames.push_back(frames.frames[idx]);
  return out;
}

PrefixBundle build_video_prefix(const CorpusIndex& index, const FrameSequence& frames, std::size_t m, std::size_t k) {
  check_k(index, k);
  FrameSequence keyframes = sample_keyframes(frames, m);
  std::vector<EmbeddingVector> means;
  for (const auto& r : index.batch_top_k(keyframes.frames, k)) {
    auto embeddings = hit_embeddings(index, r);
    means.push_back(mean_pool(std::span<const EmbeddingVector>(embeddings)));
  }
  return PrefixBundle(std::move(means));
}

PrefixBundle direct_prefix(const NormalizedEmbedding& query) { return PrefixBundle({query.vector()}); }

std::string infer_caption(const Captioner& captioner, const PrefixBundle& prefix, std::size_t beam_width) {
  BeamConfig cfg;
  cfg.width = beam_width;
  BeamResult r = beam_search(captioner.model, prefix.as_matrix(), cfg);
  return captioner.vocab.decode(r.tokens);
}

}  // namespace knight
