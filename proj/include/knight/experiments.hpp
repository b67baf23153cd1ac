#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "knight/knn_index.hpp"
#include "knight/metrics.hpp"
#include "knight/synthetic_embedder.hpp"
#include "knight/trainer.hpp"

namespace knight {

/// The frozen synthetic captioning benchmark and the training recipe used
/// on it. Scenes are 32 templates times 3 scene-defining fillers. Each
/// description of a scene draws every synonym slot (first option with
/// probability 0.5) and, with probability 0.1, appends a trailing phrase.
/// Image surrogates are built from the scene content with every synonym
/// option listed, so they carry no particular phrasing.
struct BenchmarkConfig {
  std::size_t train_captions = 800;
  std::size_t test_items = 100;
  std::size_t references_per_item = 5;
  std::uint64_t data_seed = 20230;
  SynthEmbedConfig embed{};
  TrainingConfig training = default_training();
  std::size_t beam_width = 5;
  std::size_t threads = 1;

  static TrainingConfig default_training();
};

/// A held-out scene: the image surrogate comes from the scene content form;
/// the references are independent descriptions of the same scene.
struct TestItem {
  CaptionId id;
  std::string image_caption;
  std::vector<std::string> references;
  NormalizedEmbedding image;
};

struct Benchmark {
  std::vector<CaptionRecord> corpus;
  std::vector<TestItem> test;
};

/// Text is a function of data_seed only; embeddings also depend on `embed`.
Benchmark make_benchmark(const BenchmarkConfig& config);

/// Nested subsample: captions are ranked by a seed-keyed permutation and
/// the first ceil(proportion * n) are kept, in id order. Proportion 1.0
/// returns the corpus unchanged.
std::vector<CaptionRecord> subsample_corpus(const std::vector<CaptionRecord>& corpus, double proportion,
                                            std::uint64_t seed);

/// Returns the text of the single most similar record.
std::string clipre_baseline(const CorpusIndex& index, const NormalizedEmbedding& query);

/// Candidate captions for every test item: k = captioner.k neighbors of the
/// image (or the image itself when k = 0), then beam search.
std::vector<std::string> caption_test_set(const Captioner& captioner, const CorpusIndex& index,
                                          const std::vector<TestItem>& test, std::size_t beam_width);
std::vector<std::string> clipre_test_set(const CorpusIndex& index, const std::vector<TestItem>& test);

MetricReport score_test_set(const std::vector<TestItem>& test, const std::vector<std::string>& candidates);

struct SweepEntry {
  double setting = 0;
  std::uint64_t seed = 0;
  std::string variant;  // "knight", "direct" (k = 0) or "clipre"
  MetricReport metrics;
  double initial_loss = 0;
  double final_loss = 0;
};

struct SweepResult {
  std::string sweep;  // "k", "corpus" or "gap"
  std::string config_json;
  std::vector<SweepEntry> results;

  /// {"sweep", "config", "results": [{setting, seed, variant, metrics, ...}]}
  std::string to_json() const;
  /// The unique entry for (setting, seed, variant); throws if absent.
  const SweepEntry& at(double setting, std::uint64_t seed, const std::string& variant) const;
};

using ProgressFn = std::function<void(const std::string&)>;

/// Trains one model per (k, seed); k = 0 trains and infers on the raw
/// embedding with no retrieval.
SweepResult sweep_k(const BenchmarkConfig& config, const std::vector<std::size_t>& ks,
                    const std::vector<std::uint64_t>& seeds, const ProgressFn& progress = {});

/// Trains on nested corpus subsamples; retrieval uses the same subsample.
SweepResult sweep_corpus(const BenchmarkConfig& config, const std::vector<double>& proportions,
                         const std::vector<std::uint64_t>& seeds, const ProgressFn& progress = {});

/// For each gap magnitude: a k = 0 model ("direct") and a k-neighbor model
/// ("knight"), both evaluated on image surrogates built with that gap.
SweepResult gap_ablation(const BenchmarkConfig& config, const std::vector<double>& gaps, std::size_t k,
                         const std::vector<std::uint64_t>& seeds, const ProgressFn& progress = {});

/// Single run on the full benchmark: train with `training.k` and evaluate
/// Knight (and CLIPRe when `with_clipre`).
SweepResult run_benchmark(const BenchmarkConfig& config, const std::vector<std::uint64_t>& seeds, bool with_clipre,
                          const ProgressFn& progress = {});

std::string benchmark_config_json(const BenchmarkConfig& config);

}  // namespace knight
