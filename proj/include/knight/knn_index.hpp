#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "knight/embedding.hpp"

namespace knight {

using CaptionId = std::uint64_t;

struct CaptionRecord {
  CaptionId id;
  std::string text;
  NormalizedEmbedding embedding;
};

struct Hit {
  CaptionId id;
  double score;

  friend bool operator==(const Hit&, const Hit&) = default;
};

/// Hits ordered by score descending, ties by ascending id.
struct RetrievalResult {
  std::vector<Hit> hits;

  friend bool operator==(const RetrievalResult&, const RetrievalResult&) = default;
};

/// Immutable caption store with exact top-k cosine retrieval. Records are
/// kept in id order; embeddings are also packed row-major for the scan.
class CorpusIndex {
 public:
  std::size_t size() const noexcept { return records_.size(); }
  std::size_t dim() const noexcept { return dim_; }
  std::span<const CaptionRecord> records() const noexcept { return records_; }
  const CaptionRecord& record_at(std::size_t row) const { return records_.at(row); }

  /// Binary search by id; nullptr when absent.
  const CaptionRecord* find(CaptionId id) const noexcept;
  const CaptionRecord& at(CaptionId id) const;

  RetrievalResult top_k(const NormalizedEmbedding& query, std::size_t k,
                        std::optional<CaptionId> exclude_id = std::nullopt) const;

  /// Element i equals top_k(queries[i], k). `threads` > 1 splits the
  /// queries into contiguous chunks; output order is unaffected.
  std::vector<RetrievalResult> batch_top_k(std::span<const NormalizedEmbedding> queries, std::size_t k,
                                           std::size_t threads = 1) const;

 private:
  friend CorpusIndex build_index(std::vector<CaptionRecord> records);
  CorpusIndex() = default;

  std::vector<CaptionRecord> records_;
  std::vector<float> packed_;
  std::size_t dim_ = 0;
};

/// Validates (nonempty, consistent dims, unique ids, nonempty text) and
/// sorts by id.
CorpusIndex build_index(std::vector<CaptionRecord> records);

}  // namespace knight
