#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "knight/embedding.hpp"
#include "knight/knn_index.hpp"

namespace knight {

// KNEM layout (little-endian):
//   offset  0  char[4]  "KNEM"
//   offset  4  u32      version = 1
//   offset  8  u64      count
//   offset 16  u32      dim
//   offset 20  u32      reserved, written as 0
//   offset 24  f32[count * dim] row-major payload
inline constexpr std::uint32_t kKnemVersion = 1;
inline constexpr std::size_t kKnemHeaderBytes = 24;

// KNCK layout (little-endian):
//   char[4] "KNCK", u32 version = 1, u32 tensor count, then per tensor:
//   u32 name length, name bytes (UTF-8), u32 rank, u32 dims[rank],
//   f32 payload row-major.
inline constexpr std::uint32_t kKnckVersion = 1;

/// Row-major float matrix as stored in a KNEM file.
struct EmbeddingMatrix {
  std::uint32_t dim = 0;
  std::vector<float> data;

  std::size_t count() const noexcept { return dim == 0 ? 0 : data.size() / dim; }
  std::span<const float> row(std::size_t i) const { return std::span<const float>(data).subspan(i * dim, dim); }

  static EmbeddingMatrix from_vectors(std::span<const EmbeddingVector> vectors, std::uint32_t dim_if_empty = 0);
  static EmbeddingMatrix from_vectors(std::span<const NormalizedEmbedding> vectors, std::uint32_t dim_if_empty = 0);
};

void write_embeddings(const EmbeddingMatrix& matrix, const std::filesystem::path& path);
EmbeddingMatrix read_embeddings(const std::filesystem::path& path);

/// Every row normalized; throws ZeroVector on a zero row.
std::vector<NormalizedEmbedding> normalized_rows(const EmbeddingMatrix& matrix);

struct CaptionLine {
  CaptionId id;
  std::string text;
};

/// JSONL objects {"id": int, "text": string}; blank lines are not allowed.
std::vector<CaptionLine> read_captions(const std::filesystem::path& path);
void write_captions(std::span<const CaptionLine> lines, const std::filesystem::path& path);

/// Pairs JSONL line i with KNEM row i and normalizes each row.
std::vector<CaptionRecord> load_corpus(const std::filesystem::path& captions_path,
                                       const std::filesystem::path& embeddings_path);

struct Tensor {
  std::vector<std::uint32_t> dims;
  std::vector<float> data;

  std::size_t element_count() const noexcept;
  friend bool operator==(const Tensor&, const Tensor&) = default;
};

/// File order is preserved so saved checkpoints are byte-stable.
using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

void save_checkpoint(const NamedTensors& tensors, const std::filesystem::path& path);
NamedTensors load_checkpoint(const std::filesystem::path& path);

/// Candidate captions for evaluation: {"id": int, "caption": string}.
struct CandidateLine {
  CaptionId id;
  std::string caption;
};
/// Reference captions for evaluation: {"id": int, "captions": [string, ...]}.
struct ReferenceLine {
  CaptionId id;
  std::vector<std::string> captions;
};

std::vector<CandidateLine> read_candidates(const std::filesystem::path& path);
std::vector<ReferenceLine> read_references(const std::filesystem::path& path);
void write_candidates(std::span<const CandidateLine> lines, const std::filesystem::path& path);
void write_references(std::span<const ReferenceLine> lines, const std::filesystem::path& path);

}  // namespace knight
