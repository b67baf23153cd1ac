#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>

#include "knight/embedding.hpp"

namespace knight {

/// Deterministic stand-in for a dual encoder.
///
/// Text: every token owns a Gaussian vector drawn from CounterRng keyed by
/// hash64(token, token_seed); a caption embeds to the normalized sum of its
/// token vectors, so lexical overlap gives embedding proximity.
///
/// Image surrogate: the paired caption's text embedding displaced by one
/// fixed gap vector (unit direction from gap_seed, scaled by gap_magnitude)
/// plus per-sample noise of scale noise_sigma, then renormalized. The fixed
/// direction models a systematic offset between the two subspaces.
struct SynthEmbedConfig {
  std::size_t dim = 64;
  std::uint64_t token_seed = 0x6B6E6967ULL;
  std::uint64_t gap_seed = 0x67617021ULL;
  double gap_magnitude = 1.0;
  double noise_sigma = 0.05;

  /// Throws InvalidArgument unless dim >= 2 and gap/noise are finite and >= 0.
  void validate() const;
};

NormalizedEmbedding embed_text_synthetic(std::string_view caption, const SynthEmbedConfig& cfg);

/// Unit vector from gap_seed scaled by gap_magnitude; the zero vector when
/// the magnitude is 0.
EmbeddingVector derive_gap_vector(const SynthEmbedConfig& cfg);

NormalizedEmbedding embed_image_surrogate(std::string_view paired_caption, std::uint64_t sample_seed,
                                          const SynthEmbedConfig& cfg);

}  // namespace knight
