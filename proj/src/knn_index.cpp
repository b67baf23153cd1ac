#include "knight/knn_index.hpp"

#include <algorithm>
#include <thread>

#include "knight/error.hpp"
#include "knight/tokenizer.hpp"

namespace knight {

namespace {

// Strict "a ranks before b": higher score, then lower id.
bool ranks_before(const Hit& a, const Hit& b) noexcept {
  if (a.score != b.score) return a.score > b.score;
  return a.id < b.id;
}

}  // namespace

CorpusIndex build_index(std::vector<CaptionRecord> records) {
  if (records.empty()) throw Error(ErrorCode::kEmptyCorpus, "no records");
  const std::size_t dim = records.front().embedding.dim();
  for (const auto& r : records) {
    if (r.embedding.dim() != dim) {
      throw Error(ErrorCode::kDimMismatch, "record " + std::to_string(r.id) + " has dim " +
                                               std::to_string(r.embedding.dim()) + ", expected " +
                                               std::to_string(dim));
    }
    if (!has_content(r.text)) {
      throw Error(ErrorCode::kEmptyCaption, "record " + std::to_string(r.id) + " has empty text");
    }
  }
  std::stable_sort(records.begin(), records.end(),
                   [](const CaptionRecord& a, const CaptionRecord& b) { return a.id < b.id; });
  for (std::size_t i = 1; i < records.size(); ++i) {
    if (records[i].id == records[i - 1].id) {
      throw Error(ErrorCode::kDuplicateId, "id " + std::to_string(records[i].id));
    }
  }

  CorpusIndex index;
  index.dim_ = dim;
  index.packed_.reserve(records.size() * dim);
  for (const auto& r : records) {
    auto v = r.embedding.values();
    index.packed_.insert(index.packed_.end(), v.begin(), v.end());
  }
  index.records_ = std::move(records);
  return index;
}

const CaptionRecord* CorpusIndex::find(CaptionId id) const noexcept {
  auto it = std::lower_bound(records_.begin(), records_.end(), id,
                             [](const CaptionRecord& r, CaptionId v) { return r.id < v; });
  if (it == records_.end() || it->id != id) return nullptr;
  return &*it;
}

const CaptionRecord& CorpusIndex::at(CaptionId id) const {
  const CaptionRecord* r = find(id);
  if (!r) throw Error(ErrorCode::kInvalidArgument, "no record with id " + std::to_string(id));
  return *r;
}

RetrievalResult CorpusIndex::top_k(const NormalizedEmbedding& query, std::size_t k,
                                   std::optional<CaptionId> exclude_id) const {
  if (query.dim() != dim_) {
    throw Error(ErrorCode::kDimMismatch,
                "query dim " + std::to_string(query.dim()) + ", index dim " + std::to_string(dim_));
  }
  if (k == 0) throw Error(ErrorCode::kInvalidArgument, "k must be >= 1");

  // Heap whose front is the worst kept hit.
  std::vector<Hit> heap;
  heap.reserve(std::min(k, records_.size()) + 1);
  const float* q = query.values().data();
  for (std::size_t row = 0; row < records_.size(); ++row) {
    const CaptionId id = records_[row].id;
    if (exclude_id && *exclude_id == id) continue;
    const float* x = packed_.data() + row * dim_;
    double acc = 0.0;
    for (std::size_t d = 0; d < dim_; ++d) acc += static_cast<double>(x[d]) * q[d];
    Hit hit{id, std::clamp(acc, -1.0, 1.0)};
    if (heap.size() < k) {
      heap.push_back(hit);
      std::push_heap(heap.begin(), heap.end(), ranks_before);
    } else if (ranks_before(hit, heap.front())) {
      std::pop_heap(heap.begin(), heap.end(), ranks_before);
      heap.back() = hit;
      std::push_heap(heap.begin(), heap.end(), ranks_before);
    }
  }
  std::sort(heap.begin(), heap.end(), ranks_before);
  return RetrievalResult{std::move(heap)};
}

std::vector<RetrievalResult> CorpusIndex::batch_top_k(std::span<const NormalizedEmbedding> queries,
                                                      std::size_t k, std::size_t threads) const {
  for (const auto& q : queries) {
    if (q.dim() != dim_) {
      throw Error(ErrorCode::kDimMismatch,
                  "query dim " + std::to_string(q.dim()) + ", index dim " + std::to_string(dim_));
    }
  }
  if (k == 0) throw Error(ErrorCode::kInvalidArgument, "k must be >= 1");
  std::vector<RetrievalResult> out(queries.size());
  threads = std::max<std::size_t>(1, std::min(threads, queries.size()));
  if (threads == 1) {
    for (std::size_t i = 0; i < queries.size(); ++i) out[i] = top_k(queries[i], k);
    return out;
  }
  std::vector<std::jthread> workers;
  const std::size_t chunk = (queries.size() + threads - 1) / threads;
  for (std::size_t t = 0; t < threads; ++t) {
    const std::size_t begin = t * chunk;
    const std::size_t end = std::min(queries.size(), begin + chunk);
    workers.emplace_back([&, begin, end] {
      for (std::size_t i = begin; i < end; ++i) out[i] = top_k(queries[i], k);
    });
  }
  workers.clear();
  return out;
}

}  // namespace knight
