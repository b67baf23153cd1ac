#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "knight/projector.hpp"
#include "knight/tensor.hpp"
#include "knight/vocabulary.hpp"

namespace knight {

/// Shape of the prefix-conditioned decoder. Desk-scale defaults; the
/// 36-layer, 20-head, 1280-wide configuration is accepted but untested.
struct DecoderConfig {
  std::size_t vocab_size = 0;
  std::size_t embed_dim = 64;   // encoder space, projector input
  std::size_t d_model = 128;
  std::size_t layers = 2;
  std::size_t heads = 4;
  std::size_t max_len = 32;     // prefix positions + BOS + caption tokens
  std::size_t ff_mult = 4;
  std::size_t mlp_hidden = 0;   // 0 means d_model
  bool tie_output = true;       // logits = h * tok_emb^T
  bool prefix_positions = true; // prefix slots get positional embeddings

  std::size_t d_ff() const noexcept { return ff_mult * d_model; }
  std::size_t projector_hidden() const noexcept { return mlp_hidden ? mlp_hidden : d_model; }
  void validate() const;

  friend bool operator==(const DecoderConfig&, const DecoderConfig&) = default;
};

template <typename T>
struct BlockParams {
  Mat<T> attn_q_w, attn_q_b, attn_k_w, attn_k_b, attn_v_w, attn_v_b, attn_o_w, attn_o_b;
  Mat<T> ff1_w, ff1_b, ff2_w, ff2_b;
  Mat<T> ln1_g, ln1_b, ln2_g, ln2_b;
};

template <typename T>
struct DecoderParams {
  Mat<T> tok_emb;  // V x d_model
  Mat<T> pos_emb;  // max_len x d_model
  std::vector<BlockParams<T>> blocks;
  Mat<T> final_ln_g, final_ln_b;
  Mat<T> lm_head;  // d_model x V, only when the output is untied
};

/// Projector plus decoder: every trainable tensor of the captioner.
template <typename T>
struct Model {
  DecoderConfig config;
  MlpParams<T> mlp;
  DecoderParams<T> decoder;

  /// All tensors under their checkpoint names, decoder first, then "mlp.*".
  NamedRefs<T> tensors();
  NamedConstRefs<T> tensors() const;

  Model zeros_like() const;

  template <typename U>
  Model<U> cast() const;
};

template <typename T>
Model<T> model_init(const DecoderConfig& config, std::uint64_t seed);

template <typename T>
struct BlockCache {
  Mat<T> x_in, ln1_xhat, ln1_rstd, a, q, k, v, ctx, x_mid, ln2_xhat, ln2_rstd, b, ff_pre, ff_act;
  std::vector<Mat<T>> probs;  // per head, S x S
};

template <typename T>
struct ForwardCache {
  std::vector<TokenId> tokens;
  std::size_t prefix_len = 0;
  MlpCache<T> mlp;
  std::vector<BlockCache<T>> blocks;
  Mat<T> x_final, lnf_xhat, lnf_rstd, y;
};

/// Runs the decoder over [projected prefix rows] ++ [token embeddings].
/// `prefix` holds raw encoder-space embeddings, one per row; `tokens`
/// normally starts with BOS. Returns one logit row per token; row j
/// predicts token j + 1 (or EOS after the last). Attention is causal over
/// the whole sequence, so prefix slots only see earlier prefix slots.
template <typename T>
Mat<T> forward(const Model<T>& model, const Mat<T>& prefix, std::span<const TokenId> tokens,
               ForwardCache<T>* cache = nullptr);

/// Mean negative log-likelihood over targets that are not PAD.
template <typename T>
double mle_loss(const Mat<T>& logits, std::span<const TokenId> targets);

/// Loss plus dL/dlogits for the same mean.
template <typename T>
double mle_loss_grad(const Mat<T>& logits, std::span<const TokenId> targets, Mat<T>& dlogits);

/// Row-wise softmax with max subtraction.
template <typename T>
Mat<T> softmax_rows(const Mat<T>& logits);

/// Backpropagates dL/dlogits through decoder and projector, accumulating
/// into `grads` (shaped like the model).
template <typename T>
void backward(const Model<T>& model, const ForwardCache<T>& cache, const Mat<T>& dlogits, Model<T>& grads);

/// forward + mle_loss_grad + backward, with the gradient scaled by `scale`.
/// Returns the unscaled mean loss.
template <typename T>
double loss_and_grad(const Model<T>& model, const Mat<T>& prefix, std::span<const TokenId> tokens,
                     std::span<const TokenId> targets, Model<T>& grads, T scale = T(1));

/// [BOS, ids...] and [ids..., EOS].
std::vector<TokenId> teacher_inputs(std::span<const TokenId> caption);
std::vector<TokenId> teacher_targets(std::span<const TokenId> caption);

}  // namespace knight
