#include "knight/beam_search.hpp"

#include "test_util.hpp"

using namespace knight;
using knight::test::error_code_of;

namespace {

constexpr TokenId kA = 4, kB = 5;

// Blocks are zeroed so each position sees only its own token. The untied
// head then acts as a transition table: BOS -> a -> b -> EOS.
Model<float> chain_model() {
  DecoderConfig c;
  c.vocab_size = 6;
  c.embed_dim = 3;
  c.d_model = 6;
  c.layers = 1;
  c.heads = 1;
  c.max_len = 12;
  c.tie_output = false;
  auto m = model_init<float>(c, 1).zeros_like();
  m.decoder.final_ln_g.setOnes();
  m.decoder.tok_emb = Mat<float>::Identity(6, 6) * 10.0f;
  auto& head = m.decoder.lm_head;
  head(kBos, kA) = 20.0f;
  head(kA, kB) = 20.0f;
  head(kB, kEos) = 20.0f;
  return m;
}

Model<float> random_model(std::uint64_t seed, std::size_t vocab = 12) {
  DecoderConfig c;
  c.vocab_size = vocab;
  c.embed_dim = 4;
  c.d_model = 16;
  c.layers = 1;
  c.heads = 2;
  c.max_len = 12;
  auto m = model_init<float>(c, seed);
  // Sharper than the default init so decoding paths differ between seeds.
  for (auto& [name, t] : m.tensors())
    if (name == "tok_emb") t->array() *= 8.0f;
  return m;
}

Mat<float> prefix_for(std::uint64_t seed) {
  CounterRng rng(seed);
  Mat<float> p(2, 4);
  for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = static_cast<float>(rng.gaussian());
  return p;
}

}  // namespace

TEST_CASE("a constructed transition table decodes to a b EOS") {
  auto m = chain_model();
  Mat<float> prefix = Mat<float>::Zero(1, 3);
  auto r = beam_search(m, prefix);
  CHECK(r.tokens == std::vector<TokenId>{kA, kB});
  CHECK(r.finished);
  CHECK(r.score > -1e-3);
  CHECK(greedy_decode(m, prefix).tokens == r.tokens);
}

TEST_CASE("width 1 equals greedy token for token") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    auto m = random_model(seed);
    auto p = prefix_for(seed);
    auto g = greedy_decode(m, p);
    auto b = beam_search(m, p, BeamConfig{1, 0, 0.0});
    CHECK(b.tokens == g.tokens);
    CHECK(b.finished == g.finished);
    CHECK(b.score == doctest::Approx(g.score).epsilon(1e-9));
  }
}

TEST_CASE("a beam wider than the search space finds the exact optimum") {
  // Two-token cap over a 12-token vocabulary: at most 1 + 9 + 81 hypotheses,
  // so a width of 100 never prunes.
  for (std::uint64_t seed = 1; seed <= 6; ++seed) {
    auto m = random_model(seed);
    auto p = prefix_for(seed);
    double best = sequence_log_prob(m, p, std::vector<TokenId>{}, true);
    for (TokenId t = 3; t < 12; ++t) {
      best = std::max(best, sequence_log_prob(m, p, std::vector<TokenId>{t}, true));
      for (TokenId u = 3; u < 12; ++u) best = std::max(best, sequence_log_prob(m, p, std::vector<TokenId>{t, u}, true));
    }
    auto b = beam_search(m, p, BeamConfig{100, 2, 0.0});
    CHECK(b.finished);
    CHECK(b.score == doctest::Approx(best).epsilon(1e-6));
  }
}

TEST_CASE("reported score is the sequence log-probability") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto m = random_model(seed);
    auto p = prefix_for(seed);
    auto b = beam_search(m, p);
    CHECK(b.score == doctest::Approx(sequence_log_prob(m, p, b.tokens, b.finished)).epsilon(1e-5));
  }
}

TEST_CASE("the token cap forces EOS") {
  auto m = random_model(3);
  auto p = prefix_for(3);
  for (std::size_t cap : {1, 2, 3}) {
    auto b = beam_search(m, p, BeamConfig{3, cap, 0.0});
    CHECK(b.tokens.size() <= cap);
    CHECK(b.finished);
    auto g = greedy_decode(m, p, cap);
    CHECK(g.tokens.size() <= cap);
  }
}

TEST_CASE("special tokens are never emitted") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto m = random_model(seed);
    auto b = beam_search(m, prefix_for(seed), BeamConfig{4, 0, 0.5});
    for (TokenId t : b.tokens) {
      CHECK(t != kPad);
      CHECK(t != kBos);
      CHECK(t != kEos);
    }
  }
}

TEST_CASE("decoding is deterministic") {
  auto m = random_model(7);
  auto p = prefix_for(7);
  auto a = beam_search(m, p);
  auto b = beam_search(m, p);
  CHECK(a.tokens == b.tokens);
  CHECK(a.score == b.score);
}

TEST_CASE("invalid beam settings") {
  auto m = random_model(1);
  CHECK(error_code_of([&] { beam_search(m, prefix_for(1), BeamConfig{0, 0, 0.0}); }) == ErrorCode::kInvalidArgument);
  Mat<float> long_prefix = Mat<float>::Zero(12, 4);
  CHECK(error_code_of([&] { beam_search(m, long_prefix); }) == ErrorCode::kLengthExceeded);
}
