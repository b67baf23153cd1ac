#include "knight/decoder.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "knight/error.hpp"
#include "knight/random.hpp"

namespace knight {

namespace {

constexpr double kLayerNormEps = 1e-5;

template <typename T>
Mat<T> zeros_as(const Mat<T>& m) {
  return Mat<T>::Zero(m.rows(), m.cols());
}

template <typename T>
Mat<T> ones_row(Eigen::Index n) {
  return Mat<T>::Ones(1, n);
}

template <typename T>
Mat<T> add_bias(const Mat<T>& x, const Mat<T>& bias) {
  return x.rowwise() + bias.row(0);
}

template <typename T>
Mat<T> layer_norm(const Mat<T>& x, const Mat<T>& g, const Mat<T>& b, Mat<T>& xhat, Mat<T>& rstd) {
  const Eigen::Index rows = x.rows(), cols = x.cols();
  xhat.resize(rows, cols);
  rstd.resize(rows, 1);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const T mean = x.row(i).mean();
    const T var = (x.row(i).array() - mean).square().mean();
    const T r = T(1) / std::sqrt(var + T(kLayerNormEps));
    rstd(i, 0) = r;
    xhat.row(i) = (x.row(i).array() - mean) * r;
  }
  Mat<T> out = xhat.array().rowwise() * g.row(0).array();
  return out.rowwise() + b.row(0);
}

template <typename T>
Mat<T> layer_norm_backward(const Mat<T>& dy, const Mat<T>& xhat, const Mat<T>& rstd, const Mat<T>& g, Mat<T>& dg,
                           Mat<T>& db) {
  dg += dy.cwiseProduct(xhat).colwise().sum();
  db += dy.colwise().sum();
  Mat<T> dxhat = dy.array().rowwise() * g.row(0).array();
  Mat<T> dx(dy.rows(), dy.cols());
  const T inv_n = T(1) / static_cast<T>(dy.cols());
  for (Eigen::Index i = 0; i < dy.rows(); ++i) {
    const T mean_d = dxhat.row(i).sum() * inv_n;
    const T mean_dx = dxhat.row(i).cwiseProduct(xhat.row(i)).sum() * inv_n;
    dx.row(i) = rstd(i, 0) * (dxhat.row(i).array() - mean_d - xhat.row(i).array() * mean_dx);
  }
  return dx;
}

template <typename T>
void check_sequence(const Model<T>& model, const Mat<T>& prefix, std::span<const TokenId> tokens) {
  const auto& c = model.config;
  if (prefix.rows() > 0 && static_cast<std::size_t>(prefix.cols()) != c.embed_dim) {
    throw Error(ErrorCode::kDimMismatch, "prefix dim " + std::to_string(prefix.cols()) + ", expected " +
                                             std::to_string(c.embed_dim));
  }
  const std::size_t total = static_cast<std::size_t>(prefix.rows()) + tokens.size();
  if (total > c.max_len) {
    throw Error(ErrorCode::kLengthExceeded,
                "sequence of " + std::to_string(total) + " exceeds max_len " + std::to_string(c.max_len));
  }
  if (tokens.empty()) throw Error(ErrorCode::kInvalidArgument, "decoder needs at least one token");
  for (TokenId t : tokens) {
    if (t >= c.vocab_size) throw Error(ErrorCode::kInvalidArgument, "token id " + std::to_string(t) + " out of range");
  }
}

template <typename T>
NamedRefs<T> block_tensors(BlockParams<T>& b, const std::string& p) {
  return {{p + "attn_q.w", &b.attn_q_w}, {p + "attn_q.b", &b.attn_q_b}, {p + "attn_k.w", &b.attn_k_w},
          {p + "attn_k.b", &b.attn_k_b}, {p + "attn_v.w", &b.attn_v_w}, {p + "attn_v.b", &b.attn_v_b},
          {p + "attn_o.w", &b.attn_o_w}, {p + "attn_o.b", &b.attn_o_b}, {p + "ff1.w", &b.ff1_w},
          {p + "ff1.b", &b.ff1_b},       {p + "ff2.w", &b.ff2_w},       {p + "ff2.b", &b.ff2_b},
          {p + "ln1_g", &b.ln1_g},       {p + "ln1_b", &b.ln1_b},       {p + "ln2_g", &b.ln2_g},
          {p + "ln2_b", &b.ln2_b}};
}

}  // namespace

void DecoderConfig::validate() const {
  auto fail = [](const std::string& m) { throw Error(ErrorCode::kInvalidArgument, m); };
  if (vocab_size <= kReservedTokens) fail("vocab_size must exceed the reserved ids");
  if (embed_dim == 0 || d_model == 0 || layers == 0 || heads == 0 || max_len < 2 || ff_mult == 0) {
    fail("decoder dimensions must be positive");
  }
  if (d_model % heads != 0) fail("d_model must be divisible by heads");
}

template <typename T>
NamedRefs<T> Model<T>::tensors() {
  NamedRefs<T> out{{"tok_emb", &decoder.tok_emb}, {"pos_emb", &decoder.pos_emb}};
  for (std::size_t i = 0; i < decoder.blocks.size(); ++i) {
    auto bt = block_tensors(decoder.blocks[i], "block" + std::to_string(i) + ".");
    out.insert(out.end(), bt.begin(), bt.end());
  }
  out.emplace_back("final_ln.g", &decoder.final_ln_g);
  out.emplace_back("final_ln.b", &decoder.final_ln_b);
  if (!config.tie_output) out.emplace_back("lm_head.w", &decoder.lm_head);
  auto mt = mlp.tensors();
  out.insert(out.end(), mt.begin(), mt.end());
  return out;
}

template <typename T>
NamedConstRefs<T> Model<T>::tensors() const {
  auto refs = const_cast<Model<T>*>(this)->tensors();
  NamedConstRefs<T> out;
  out.reserve(refs.size());
  for (auto& [name, m] : refs) out.emplace_back(name, m);
  return out;
}

template <typename T>
Model<T> Model<T>::zeros_like() const {
  Model<T> z = *this;
  for (auto& [name, m] : z.tensors()) m->setZero();
  return z;
}

template <typename T>
template <typename U>
Model<U> Model<T>::cast() const {
  Model<U> out;
  out.config = config;
  out.mlp = mlp.template cast<U>();
  out.decoder.blocks.resize(decoder.blocks.size());
  out.decoder.lm_head = decoder.lm_head.template cast<U>();
  auto src = tensors();
  auto dst = out.tensors();
  for (std::size_t i = 0; i < src.size(); ++i) *dst[i].second = src[i].second->template cast<U>();
  return out;
}

template <typename T>
Model<T> model_init(const DecoderConfig& c, std::uint64_t seed) {
  c.validate();
  CounterRng rng(seed);
  const auto V = static_cast<Eigen::Index>(c.vocab_size), d = static_cast<Eigen::Index>(c.d_model),
             ff = static_cast<Eigen::Index>(c.d_ff()), L = static_cast<Eigen::Index>(c.max_len);
  auto gaussian = [&](Eigen::Index r, Eigen::Index cols, double stddev) {
    Mat<T> m(r, cols);
    CounterRng local(rng.next_u64());
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(stddev * local.gaussian());
    return m;
  };
  auto glorot = [&](Eigen::Index r, Eigen::Index cols) {
    Mat<T> m(r, cols);
    glorot_normal(m, rng.next_u64());
    return m;
  };

  Model<T> m;
  m.config = c;
  m.decoder.tok_emb = gaussian(V, d, 0.02);
  m.decoder.pos_emb = gaussian(L, d, 0.02);
  for (std::size_t l = 0; l < c.layers; ++l) {
    BlockParams<T> b;
    b.attn_q_w = glorot(d, d);
    b.attn_k_w = glorot(d, d);
    b.attn_v_w = glorot(d, d);
    b.attn_o_w = glorot(d, d);
    b.ff1_w = glorot(d, ff);
    b.ff2_w = glorot(ff, d);
    b.attn_q_b = b.attn_k_b = b.attn_v_b = b.attn_o_b = Mat<T>::Zero(1, d);
    b.ff1_b = Mat<T>::Zero(1, ff);
    b.ff2_b = Mat<T>::Zero(1, d);
    b.ln1_g = b.ln2_g = ones_row<T>(d);
    b.ln1_b = b.ln2_b = Mat<T>::Zero(1, d);
    m.decoder.blocks.push_back(std::move(b));
  }
  m.decoder.final_ln_g = ones_row<T>(d);
  m.decoder.final_ln_b = Mat<T>::Zero(1, d);
  if (!c.tie_output) m.decoder.lm_head = glorot(d, V);
  m.mlp = mlp_init<T>(c.embed_dim, c.projector_hidden(), c.d_model, rng.next_u64());
  return m;
}

template <typename T>
Mat<T> forward(const Model<T>& model, const Mat<T>& prefix, std::span<const TokenId> tokens, ForwardCache<T>* cache) {
  check_sequence(model, prefix, tokens);
  const auto& c = model.config;
  const auto& p = model.decoder;
  const Eigen::Index k = prefix.rows();
  const Eigen::Index n = static_cast<Eigen::Index>(tokens.size());
  const Eigen::Index S = k + n;
  const Eigen::Index d = static_cast<Eigen::Index>(c.d_model);
  const Eigen::Index H = static_cast<Eigen::Index>(c.heads);
  const Eigen::Index dh = d / H;
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));

  ForwardCache<T> local;
  ForwardCache<T>& fc = cache ? *cache : local;
  fc.tokens.assign(tokens.begin(), tokens.end());
  fc.prefix_len = static_cast<std::size_t>(k);
  fc.blocks.resize(c.layers);

  Mat<T> x(S, d);
  if (k > 0) {
    x.topRows(k) = mlp_forward(model.mlp, prefix, &fc.mlp);
    if (c.prefix_positions) x.topRows(k) += p.pos_emb.topRows(k);
  }
  const Eigen::Index tok_pos0 = c.prefix_positions ? k : 0;
  for (Eigen::Index j = 0; j < n; ++j) {
    x.row(k + j) = p.tok_emb.row(tokens[j]) + p.pos_emb.row(tok_pos0 + j);
  }

  for (std::size_t l = 0; l < c.layers; ++l) {
    const auto& bp = p.blocks[l];
    auto& bc = fc.blocks[l];
    bc.x_in = x;
    bc.a = layer_norm(x, bp.ln1_g, bp.ln1_b, bc.ln1_xhat, bc.ln1_rstd);
    bc.q = add_bias<T>(bc.a * bp.attn_q_w, bp.attn_q_b);
    bc.k = add_bias<T>(bc.a * bp.attn_k_w, bp.attn_k_b);
    bc.v = add_bias<T>(bc.a * bp.attn_v_w, bp.attn_v_b);
    bc.ctx.resize(S, d);
    bc.probs.resize(static_cast<std::size_t>(H));
    for (Eigen::Index h = 0; h < H; ++h) {
      Mat<T> scores = bc.q.middleCols(h * dh, dh) * bc.k.middleCols(h * dh, dh).transpose() * scale;
      Mat<T>& P = bc.probs[static_cast<std::size_t>(h)];
      P = Mat<T>::Zero(S, S);
      for (Eigen::Index i = 0; i < S; ++i) {
        const T mx = scores.row(i).head(i + 1).maxCoeff();
        T sum = 0;
        for (Eigen::Index j = 0; j <= i; ++j) {
          const T e = std::exp(scores(i, j) - mx);
          P(i, j) = e;
          sum += e;
        }
        P.row(i).head(i + 1) /= sum;
      }
      bc.ctx.middleCols(h * dh, dh) = P * bc.v.middleCols(h * dh, dh);
    }
    bc.x_mid = x + add_bias<T>(bc.ctx * bp.attn_o_w, bp.attn_o_b);
    bc.b = layer_norm(bc.x_mid, bp.ln2_g, bp.ln2_b, bc.ln2_xhat, bc.ln2_rstd);
    bc.ff_pre = add_bias<T>(bc.b * bp.ff1_w, bp.ff1_b);
    bc.ff_act = bc.ff_pre.unaryExpr([](T v) { return gelu(v); });
    x = bc.x_mid + add_bias<T>(bc.ff_act * bp.ff2_w, bp.ff2_b);
  }

  fc.x_final = x;
  fc.y = layer_norm(x, p.final_ln_g, p.final_ln_b, fc.lnf_xhat, fc.lnf_rstd);
  const auto y_tok = fc.y.bottomRows(n);
  if (c.tie_output) return y_tok * p.tok_emb.transpose();
  return y_tok * p.lm_head;
}

template <typename T>
Mat<T> softmax_rows(const Mat<T>& logits) {
  Mat<T> out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const T mx = logits.row(i).maxCoeff();
    out.row(i) = (logits.row(i).array() - mx).exp();
    out.row(i) /= out.row(i).sum();
  }
  return out;
}

template <typename T>
double mle_loss(const Mat<T>& logits, std::span<const TokenId> targets) {
  Mat<T> unused;
  return mle_loss_grad(logits, targets, unused);
}

template <typename T>
double mle_loss_grad(const Mat<T>& logits, std::span<const TokenId> targets, Mat<T>& dlogits) {
  if (static_cast<std::size_t>(logits.rows()) != targets.size()) {
    throw Error(ErrorCode::kShapeMismatch, std::to_string(logits.rows()) + " logit rows for " +
                                               std::to_string(targets.size()) + " targets");
  }
  std::size_t counted = 0;
  for (TokenId t : targets) {
    if (t == kPad) continue;
    if (t >= static_cast<std::size_t>(logits.cols())) {
      throw Error(ErrorCode::kShapeMismatch, "target id " + std::to_string(t) + " outside the logit row");
    }
    ++counted;
  }
  dlogits = Mat<T>::Zero(logits.rows(), logits.cols());
  if (counted == 0) return 0.0;
  const double inv = 1.0 / static_cast<double>(counted);
  double total = 0.0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const TokenId t = targets[static_cast<std::size_t>(i)];
    if (t == kPad) continue;
    const double mx = static_cast<double>(logits.row(i).maxCoeff());
    double sum = 0.0;
    for (Eigen::Index j = 0; j < logits.cols(); ++j) sum += std::exp(static_cast<double>(logits(i, j)) - mx);
    const double log_z = mx + std::log(sum);
    total += log_z - static_cast<double>(logits(i, t));
    for (Eigen::Index j = 0; j < logits.cols(); ++j) {
      dlogits(i, j) = static_cast<T>(std::exp(static_cast<double>(logits(i, j)) - log_z) * inv);
    }
    dlogits(i, t) -= static_cast<T>(inv);
  }
  return total * inv;
}

template <typename T>
void backward(const Model<T>& model, const ForwardCache<T>& fc, const Mat<T>& dlogits, Model<T>& g) {
  const auto& c = model.config;
  const auto& p = model.decoder;
  const Eigen::Index k = static_cast<Eigen::Index>(fc.prefix_len);
  const Eigen::Index n = static_cast<Eigen::Index>(fc.tokens.size());
  const Eigen::Index S = k + n;
  const Eigen::Index d = static_cast<Eigen::Index>(c.d_model);
  const Eigen::Index H = static_cast<Eigen::Index>(c.heads);
  const Eigen::Index dh = d / H;
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));
  if (dlogits.rows() != n || static_cast<std::size_t>(dlogits.cols()) != c.vocab_size) {
    throw Error(ErrorCode::kShapeMismatch, "dlogits shape does not match the cached forward pass");
  }

  Mat<T> dy = Mat<T>::Zero(S, d);
  const auto y_tok = fc.y.bottomRows(n);
  if (c.tie_output) {
    g.decoder.tok_emb.noalias() += dlogits.transpose() * y_tok;
    dy.bottomRows(n).noalias() = dlogits * p.tok_emb;
  } else {
    g.decoder.lm_head.noalias() += y_tok.transpose() * dlogits;
    dy.bottomRows(n).noalias() = dlogits * p.lm_head.transpose();
  }
  Mat<T> dx = layer_norm_backward(dy, fc.lnf_xhat, fc.lnf_rstd, p.final_ln_g, g.decoder.final_ln_g,
                                  g.decoder.final_ln_b);

  for (std::size_t li = c.layers; li-- > 0;) {
    const auto& bp = p.blocks[li];
    const auto& bc = fc.blocks[li];
    auto& bg = g.decoder.blocks[li];

    // Feed-forward sublayer: x_out = x_mid + gelu(b W1 + b1) W2 + b2.
    bg.ff2_w.noalias() += bc.ff_act.transpose() * dx;
    bg.ff2_b += dx.colwise().sum();
    Mat<T> dpre = (dx * bp.ff2_w.transpose()).cwiseProduct(bc.ff_pre.unaryExpr([](T v) { return gelu_grad(v); }));
    bg.ff1_w.noalias() += bc.b.transpose() * dpre;
    bg.ff1_b += dpre.colwise().sum();
    Mat<T> db = dpre * bp.ff1_w.transpose();
    Mat<T> dmid = dx + layer_norm_backward(db, bc.ln2_xhat, bc.ln2_rstd, bp.ln2_g, bg.ln2_g, bg.ln2_b);

    // Attention sublayer: x_mid = x_in + ctx Wo + bo.
    bg.attn_o_w.noalias() += bc.ctx.transpose() * dmid;
    bg.attn_o_b += dmid.colwise().sum();
    Mat<T> dctx = dmid * bp.attn_o_w.transpose();
    Mat<T> dq(S, d), dk(S, d), dv(S, d);
    for (Eigen::Index h = 0; h < H; ++h) {
      const Mat<T>& P = bc.probs[static_cast<std::size_t>(h)];
      const auto dctx_h = dctx.middleCols(h * dh, dh);
      Mat<T> dP = dctx_h * bc.v.middleCols(h * dh, dh).transpose();
      dv.middleCols(h * dh, dh).noalias() = P.transpose() * dctx_h;
      Mat<T> dS(S, S);
      for (Eigen::Index i = 0; i < S; ++i) {
        const T inner = P.row(i).dot(dP.row(i));
        dS.row(i) = P.row(i).array() * (dP.row(i).array() - inner);
      }
      dS *= scale;
      dq.middleCols(h * dh, dh).noalias() = dS * bc.k.middleCols(h * dh, dh);
      dk.middleCols(h * dh, dh).noalias() = dS.transpose() * bc.q.middleCols(h * dh, dh);
    }
    bg.attn_q_w.noalias() += bc.a.transpose() * dq;
    bg.attn_k_w.noalias() += bc.a.transpose() * dk;
    bg.attn_v_w.noalias() += bc.a.transpose() * dv;
    bg.attn_q_b += dq.colwise().sum();
    bg.attn_k_b += dk.colwise().sum();
    bg.attn_v_b += dv.colwise().sum();
    Mat<T> da = dq * bp.attn_q_w.transpose() + dk * bp.attn_k_w.transpose() + dv * bp.attn_v_w.transpose();
    dx = dmid + layer_norm_backward(da, bc.ln1_xhat, bc.ln1_rstd, bp.ln1_g, bg.ln1_g, bg.ln1_b);
  }

  const Eigen::Index tok_pos0 = c.prefix_positions ? k : 0;
  for (Eigen::Index j = 0; j < n; ++j) {
    g.decoder.tok_emb.row(fc.tokens[static_cast<std::size_t>(j)]) += dx.row(k + j);
    g.decoder.pos_emb.row(tok_pos0 + j) += dx.row(k + j);
  }
  if (k > 0) {
    if (c.prefix_positions) g.decoder.pos_emb.topRows(k) += dx.topRows(k);
    mlp_backward(model.mlp, fc.mlp, Mat<T>(dx.topRows(k)), g.mlp);
  }
}

template <typename T>
double loss_and_grad(const Model<T>& model, const Mat<T>& prefix, std::span<const TokenId> tokens,
                     std::span<const TokenId> targets, Model<T>& grads, T scale) {
  ForwardCache<T> cache;
  Mat<T> logits = forward(model, prefix, tokens, &cache);
  Mat<T> dlogits;
  const double loss = mle_loss_grad(logits, targets, dlogits);
  if (scale != T(1)) dlogits *= scale;
  backward(model, cache, dlogits, grads);
  return loss;
}

std::vector<TokenId> teacher_inputs(std::span<const TokenId> caption) {
  std::vector<TokenId> out{kBos};
  out.insert(out.end(), caption.begin(), caption.end());
  return out;
}

std::vector<TokenId> teacher_targets(std::span<const TokenId> caption) {
  std::vector<TokenId> out(caption.begin(), caption.end());
  out.push_back(kEos);
  return out;
}

#define KNIGHT_INSTANTIATE(T)                                                                                  \
  template struct Model<T>;                                                                                    \
  template Model<T> model_init<T>(const DecoderConfig&, std::uint64_t);                                       \
  template Mat<T> forward(const Model<T>&, const Mat<T>&, std::span<const TokenId>, ForwardCache<T>*);         \
  template Mat<T> softmax_rows(const Mat<T>&);                                                                 \
  template double mle_loss(const Mat<T>&, std::span<const TokenId>);                                          \
  template double mle_loss_grad(const Mat<T>&, std::span<const TokenId>, Mat<T>&);                            \
  template void backward(const Model<T>&, const ForwardCache<T>&, const Mat<T>&, Model<T>&);                   \
  template double loss_and_grad(const Model<T>&, const Mat<T>&, std::span<const TokenId>,                     \
                                std::span<const TokenId>, Model<T>&, T);

KNIGHT_INSTANTIATE(float)
KNIGHT_INSTANTIATE(double)
#undef KNIGHT_INSTANTIATE

template Model<double> Model<float>::cast<double>() const;
template Model<float> Model<double>::cast<float>() const;
template Model<float> Model<float>::cast<float>() const;
template Model<double> Model<double>::cast<double>() const;

}  // namespace knight
