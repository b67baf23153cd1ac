#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "knight/adam.hpp"
#include "knight/decoder.hpp"
#include "knight/knn_index.hpp"
#include "knight/vocabulary.hpp"

namespace knight {

struct TrainingConfig {
  /// Neighbors per caption. 0 conditions directly on the caption's own
  /// embedding (one prefix slot, no retrieval); this is the k=0 ablation.
  std::size_t k = 5;
  std::size_t epochs = 30;
  std::size_t batch_size = 16;
  AdamConfig adam{};  // lr 1e-3 at desk scale; 1e-6 for a pretrained decoder
  bool exclude_self = true;
  std::uint64_t seed = 0;
  /// vocab_size and embed_dim are overwritten from the corpus.
  DecoderConfig model{};
};

/// Decoder, projector and vocabulary, plus the k they were trained with.
struct Captioner {
  Model<float> model;
  Vocabulary vocab;
  std::size_t k = 5;
};

struct TrainResult {
  Captioner captioner;
  /// Token-weighted mean loss of the initialized model over the corpus.
  double initial_loss = 0.0;
  /// Token-weighted mean training loss of each epoch.
  std::vector<double> loss_curve;
};

using EpochCallback = std::function<void(std::size_t epoch, double mean_loss)>;

/// For every caption: query with its own embedding, take the top-k other
/// captions (self excluded when exclude_self) in similarity order as the
/// prefix, and minimize the MLE loss of the caption tokens followed by EOS.
/// Caption order is reshuffled each epoch from the seed.
TrainResult train(const CorpusIndex& corpus, const TrainingConfig& config, const EpochCallback& on_epoch = {});

/// Prefix rows used for a training caption (see train). Exposed for tests.
Mat<float> training_prefix(const CorpusIndex& corpus, std::size_t row, std::size_t k, bool exclude_self);

}  // namespace knight
