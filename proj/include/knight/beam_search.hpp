#pragma once

#include <vector>

#include "knight/decoder.hpp"

namespace knight {

struct BeamConfig {
  std::size_t width = 5;
  /// Caption-token cap; 0 fills whatever max_len leaves after the prefix.
  std::size_t max_tokens = 0;
  /// Final-pick length normalization score / len^alpha. 0 disables it.
  double length_alpha = 0.0;
};

struct BeamResult {
  std::vector<TokenId> tokens;  // without BOS or EOS
  double score = 0.0;           // summed token log-probs, EOS included when finished
  bool finished = false;
};

/// Standard beam search from BOS. At each step every live hypothesis is
/// expanded over the vocabulary (PAD and BOS excluded) and the best `width`
/// candidates survive, ordered by score, then parent rank, then token id.
/// A candidate ending in EOS is finished. Returns the best finished
/// hypothesis, or the best unfinished one when none finished.
BeamResult beam_search(const Model<float>& model, const Mat<float>& prefix, const BeamConfig& config = {});

/// Argmax decoding with the lowest token id winning ties.
BeamResult greedy_decode(const Model<float>& model, const Mat<float>& prefix, std::size_t max_tokens = 0);

/// Log-probability of `tokens` (plus EOS when `with_eos`) under the model.
double sequence_log_prob(const Model<float>& model, const Mat<float>& prefix, std::span<const TokenId> tokens,
                         bool with_eos);

}  // namespace knight
