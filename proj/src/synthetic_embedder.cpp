#include "knight/synthetic_embedder.hpp"

#include <cmath>
#include <vector>

#include "knight/error.hpp"
#include "knight/random.hpp"
#include "knight/tokenizer.hpp"

namespace knight {

namespace {

// Stream tags keep the gap and sample-noise draws independent of token
// draws even when seeds coincide.
constexpr std::uint64_t kGapStream = 0x47415056ULL;
constexpr std::uint64_t kNoiseStream = 0x4E4F4953ULL;

void add_gaussian(std::vector<double>& acc, CounterRng rng, double scale) {
  for (double& a : acc) a += scale * rng.gaussian();
}

std::vector<double> text_sum(std::string_view caption, const SynthEmbedConfig& cfg) {
  auto tokens = tokenize(caption);
  if (tokens.empty()) throw Error(ErrorCode::kEmptyCaption, "caption has no tokens");
  std::vector<double> acc(cfg.dim, 0.0);
  for (const auto& tok : tokens) add_gaussian(acc, CounterRng(hash64(tok, cfg.token_seed)), 1.0);
  return acc;
}

NormalizedEmbedding normalize_double(const std::vector<double>& v) {
  double n = 0.0;
  for (double x : v) n += x * x;
  n = std::sqrt(n);
  if (n < kZeroNormThreshold) throw Error(ErrorCode::kZeroVector, "synthetic embedding collapsed to zero");
  std::vector<float> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<float>(v[i] / n);
  return normalize(EmbeddingVector(std::move(out)));
}

}  // namespace

void SynthEmbedConfig::validate() const {
  if (dim < 2) throw Error(ErrorCode::kInvalidArgument, "synthetic dim must be >= 2");
  if (!std::isfinite(gap_magnitude) || gap_magnitude < 0) {
    throw Error(ErrorCode::kInvalidArgument, "gap magnitude must be finite and >= 0");
  }
  if (!std::isfinite(noise_sigma) || noise_sigma < 0) {
    throw Error(ErrorCode::kInvalidArgument, "noise sigma must be finite and >= 0");
  }
}

NormalizedEmbedding embed_text_synthetic(std::string_view caption, const SynthEmbedConfig& cfg) {
  cfg.validate();
  return normalize_double(text_sum(caption, cfg));
}

EmbeddingVector derive_gap_vector(const SynthEmbedConfig& cfg) {
  cfg.validate();
  std::vector<double> dir(cfg.dim, 0.0);
  add_gaussian(dir, CounterRng(cfg.gap_seed).split(kGapStream), 1.0);
  double n = 0.0;
  for (double x : dir) n += x * x;
  n = std::sqrt(n);
  std::vector<float> out(cfg.dim);
  for (std::size_t i = 0; i < cfg.dim; ++i) out[i] = static_cast<float>(cfg.gap_magnitude * dir[i] / n);
  return EmbeddingVector(std::move(out));
}

NormalizedEmbedding embed_image_surrogate(std::string_view paired_caption, std::uint64_t sample_seed,
                                          const SynthEmbedConfig& cfg) {
  NormalizedEmbedding text = embed_text_synthetic(paired_caption, cfg);
  if (cfg.gap_magnitude == 0.0 && cfg.noise_sigma == 0.0) return text;

  EmbeddingVector gap = derive_gap_vector(cfg);
  std::vector<double> acc(cfg.dim);
  for (std::size_t i = 0; i < cfg.dim; ++i) acc[i] = static_cast<double>(text[i]) + gap[i];
  if (cfg.noise_sigma > 0) add_gaussian(acc, CounterRng(sample_seed).split(kNoiseStream), cfg.noise_sigma);
  return normalize_double(acc);
}

}  // namespace knight
