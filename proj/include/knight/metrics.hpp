#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "knight/knn_index.hpp"

namespace knight {

using Tokens = std::vector<std::string>;

/// One candidate caption and its references, already tokenized.
struct EvalPair {
  CaptionId id = 0;
  Tokens candidate;
  std::vector<Tokens> references;
};

struct MetricReport {
  std::map<std::string, double> scores;
  std::size_t pairs = 0;

  /// {"pairs": n, "scores": {name: value, ...}}, keys sorted, 2-space indent.
  std::string to_json() const;
};

/// Metric names accepted by evaluate(): bleu1, bleu4, rougeL, cider.
inline const std::vector<std::string> kAllMetrics = {"bleu1", "bleu4", "rougeL", "cider"};

/// Corpus BLEU over orders 1..n: clipped precisions pooled over the corpus,
/// uniform geometric mean, brevity penalty against the closest reference
/// length (ties go to the shorter one). No smoothing.
double bleu(std::span<const EvalPair> pairs, std::size_t n);

/// Mean over pairs of the best LCS F-measure (beta = 1.2) across references.
double rouge_l(std::span<const EvalPair> pairs);

/// CIDEr-D: n = 1..4 tf-idf vectors with document frequencies over the
/// pairs' reference sets, candidate counts clipped by the reference,
/// Gaussian length penalty (sigma = 6), averaged over references and n,
/// times 10, then averaged over pairs. When a reference's tf-idf vector at
/// some order is all zeros (every n-gram occurs in every document, e.g. a
/// one-pair set) that comparison falls back to unit idf.
double cider_d(std::span<const EvalPair> pairs);

MetricReport evaluate(std::span<const EvalPair> pairs, const std::vector<std::string>& metrics = kAllMetrics);

/// Joins candidate and reference JSONL files by id and evaluates.
MetricReport evaluate_corpus(const std::filesystem::path& candidates, const std::filesystem::path& references,
                             const std::vector<std::string>& metrics = kAllMetrics);

}  // namespace knight
