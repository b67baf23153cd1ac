#include "knight/beam_search.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "knight/error.hpp"

namespace knight {

namespace {

std::size_t token_limit(const Model<float>& model, const Mat<float>& prefix, std::size_t requested) {
  const std::size_t used = static_cast<std::size_t>(prefix.rows()) + 1;
  if (used > model.config.max_len) {
    throw Error(ErrorCode::kLengthExceeded, "prefix leaves no room for BOS within max_len");
  }
  const std::size_t room = model.config.max_len - used;
  return requested == 0 ? room : std::min(room, requested);
}

// Log-softmax of the final logit row in double.
std::vector<double> next_log_probs(const Model<float>& model, const Mat<float>& prefix,
                                   const std::vector<TokenId>& tokens) {
  std::vector<TokenId> inputs = teacher_inputs(tokens);
  Mat<float> logits = forward(model, prefix, inputs);
  const auto last = logits.row(logits.rows() - 1);
  const double mx = static_cast<double>(last.maxCoeff());
  double sum = 0.0;
  for (Eigen::Index j = 0; j < last.size(); ++j) sum += std::exp(static_cast<double>(last(j)) - mx);
  const double log_z = mx + std::log(sum);
  std::vector<double> out(static_cast<std::size_t>(last.size()));
  for (Eigen::Index j = 0; j < last.size(); ++j) out[static_cast<std::size_t>(j)] = static_cast<double>(last(j)) - log_z;
  return out;
}

bool generable(TokenId t) { return t != kPad && t != kBos; }

struct Hypothesis {
  std::vector<TokenId> tokens;
  double score = 0.0;
};

struct Candidate {
  std::size_t parent;
  TokenId token;
  double score;
};

double adjusted(const BeamResult& r, double alpha) {
  if (alpha == 0.0) return r.score;
  const double len = static_cast<double>(r.tokens.size() + (r.finished ? 1 : 0));
  return r.score / std::pow(std::max(1.0, len), alpha);
}

}  // namespace

BeamResult beam_search(const Model<float>& model, const Mat<float>& prefix, const BeamConfig& config) {
  if (config.width == 0) throw Error(ErrorCode::kInvalidArgument, "beam width must be >= 1");
  const std::size_t limit = token_limit(model, prefix, config.max_tokens);

  std::vector<Hypothesis> active{Hypothesis{}};
  std::vector<BeamResult> finished, unfinished;
  while (!active.empty()) {
    std::vector<Candidate> candidates;
    for (std::size_t b = 0; b < active.size(); ++b) {
      auto logp = next_log_probs(model, prefix, active[b].tokens);
      for (std::size_t t = 0; t < logp.size(); ++t) {
        const auto tok = static_cast<TokenId>(t);
        // At the cap only EOS can extend a hypothesis.
        if (!generable(tok) || (active[b].tokens.size() == limit && tok != kEos)) continue;
        candidates.push_back(Candidate{b, tok, active[b].score + logp[t]});
      }
    }
    const std::size_t keep = std::min(config.width, candidates.size());
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(keep), candidates.end(),
                      [](const Candidate& a, const Candidate& b) {
                        if (a.score != b.score) return a.score > b.score;
                        if (a.parent != b.parent) return a.parent < b.parent;
                        return a.token < b.token;
                      });
    std::vector<Hypothesis> next;
    for (std::size_t i = 0; i < keep; ++i) {
      const Candidate& c = candidates[i];
      const Hypothesis& parent = active[c.parent];
      if (c.token == kEos) {
        finished.push_back(BeamResult{parent.tokens, c.score, true});
        continue;
      }
      Hypothesis h{parent.tokens, c.score};
      h.tokens.push_back(c.token);
      next.push_back(std::move(h));
    }
    active = std::move(next);

    if (config.length_alpha == 0.0 && !finished.empty() && !active.empty()) {
      double best_finished = -std::numeric_limits<double>::infinity();
      for (const auto& f : finished) best_finished = std::max(best_finished, f.score);
      double best_active = -std::numeric_limits<double>::infinity();
      for (const auto& a : active) best_active = std::max(best_active, a.score);
      // Scores only fall as hypotheses grow, so nothing live can win.
      if (best_finished >= best_active) break;
    }
  }
  for (auto& a : active) unfinished.push_back(BeamResult{std::move(a.tokens), a.score, false});

  const auto& pool = finished.empty() ? unfinished : finished;
  if (pool.empty()) return BeamResult{};
  std::size_t best = 0;
  for (std::size_t i = 1; i < pool.size(); ++i) {
    if (adjusted(pool[i], config.length_alpha) > adjusted(pool[best], config.length_alpha)) best = i;
  }
  return pool[best];
}

BeamResult greedy_decode(const Model<float>& model, const Mat<float>& prefix, std::size_t max_tokens) {
  const std::size_t limit = token_limit(model, prefix, max_tokens);
  BeamResult r;
  while (true) {
    auto logp = next_log_probs(model, prefix, r.tokens);
    TokenId best = kEos;
    double best_lp = -std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < logp.size(); ++t) {
      const auto tok = static_cast<TokenId>(t);
      if (!generable(tok) || (r.tokens.size() == limit && tok != kEos)) continue;
      if (logp[t] > best_lp) {
        best_lp = logp[t];
        best = tok;
      }
    }
    r.score += best_lp;
    if (best == kEos) {
      r.finished = true;
      return r;
    }
    r.tokens.push_back(best);
  }
}

double sequence_log_prob(const Model<float>& model, const Mat<float>& prefix, std::span<const TokenId> tokens,
                         bool with_eos) {
  std::vector<TokenId> inputs = teacher_inputs(tokens);
  std::vector<TokenId> targets = teacher_targets(tokens);
  if (!with_eos) {
    inputs.pop_back();
    targets.pop_back();
  }
  if (targets.empty()) return 0.0;
  Mat<float> logits = forward(model, prefix, inputs);
  return -mle_loss(logits, targets) * static_cast<double>(targets.size());
}

}  // namespace knight
