#include "knight/experiments.hpp"

#include <json.hpp>
#include <set>

#include "test_util.hpp"

using namespace knight;
using knight::test::error_code_of;

namespace {

BenchmarkConfig small_config() {
  BenchmarkConfig c;
  c.train_captions = 120;
  c.test_items = 8;
  c.training.epochs = 2;
  c.training.model.d_model = 16;
  c.training.model.layers = 1;
  c.training.model.heads = 2;
  c.beam_width = 2;
  return c;
}

}  // namespace

TEST_CASE("the frozen benchmark has the documented shape") {
  BenchmarkConfig c;
  auto b = make_benchmark(c);
  CHECK(b.corpus.size() == 800);
  CHECK(b.test.size() == 100);
  std::set<CaptionId> ids;
  for (const auto& r : b.corpus) {
    ids.insert(r.id);
    CHECK(r.embedding.dim() == 64);
  }
  CHECK(ids.size() == 800);
  CHECK(*ids.rbegin() == 799);
  for (const auto& t : b.test) {
    CHECK(t.references.size() == 5);
    CHECK(t.image.dim() == 64);
    CHECK(ids.count(t.id) == 0);
  }
}

TEST_CASE("benchmark generation is deterministic") {
  auto c = small_config();
  auto a = make_benchmark(c);
  auto b = make_benchmark(c);
  REQUIRE(a.corpus.size() == b.corpus.size());
  for (std::size_t i = 0; i < a.corpus.size(); ++i) {
    CHECK(a.corpus[i].text == b.corpus[i].text);
    CHECK(a.corpus[i].embedding == b.corpus[i].embedding);
  }
  for (std::size_t i = 0; i < a.test.size(); ++i) CHECK(a.test[i].image == b.test[i].image);

  // Text depends on the data seed only; embeddings also on the embedder.
  auto c2 = c;
  c2.embed.gap_magnitude = 2.0;
  auto d = make_benchmark(c2);
  CHECK(d.corpus[5].text == a.corpus[5].text);
  CHECK(d.test[3].references == a.test[3].references);
  CHECK_FALSE(d.test[3].image == a.test[3].image);
  auto c3 = c;
  c3.data_seed = 1;
  CHECK(make_benchmark(c3).corpus[0].text != a.corpus[0].text);
}

TEST_CASE("images are closer to their own scene's references than to other scenes") {
  BenchmarkConfig c;
  auto b = make_benchmark(c);
  int wins = 0;
  for (std::size_t i = 0; i + 1 < b.test.size(); ++i) {
    auto own = embed_text_synthetic(b.test[i].references[0], c.embed);
    auto other = embed_text_synthetic(b.test[i + 1].references[0], c.embed);
    if (cosine_similarity(b.test[i].image, own) > cosine_similarity(b.test[i].image, other)) ++wins;
  }
  CHECK(wins >= 90);
}

TEST_CASE("corpus subsampling is nested and proportion 1 is the identity") {
  auto b = make_benchmark(small_config());
  auto full = subsample_corpus(b.corpus, 1.0, 7);
  REQUIRE(full.size() == b.corpus.size());
  for (std::size_t i = 0; i < full.size(); ++i) {
    CHECK(full[i].id == b.corpus[i].id);
    CHECK(full[i].text == b.corpus[i].text);
    CHECK(full[i].embedding == b.corpus[i].embedding);
  }
  auto tenth = subsample_corpus(b.corpus, 0.1, 7);
  auto half = subsample_corpus(b.corpus, 0.5, 7);
  CHECK(tenth.size() == 12);
  CHECK(half.size() == 60);
  std::set<CaptionId> half_ids;
  for (const auto& r : half) half_ids.insert(r.id);
  for (const auto& r : tenth) CHECK(half_ids.count(r.id) == 1);
  CHECK(std::is_sorted(tenth.begin(), tenth.end(), [](auto& x, auto& y) { return x.id < y.id; }));
  CHECK(error_code_of([&] { subsample_corpus(b.corpus, 0.0, 1); }) == ErrorCode::kInvalidArgument);
  CHECK(error_code_of([&] { subsample_corpus(b.corpus, 1.5, 1); }) == ErrorCode::kInvalidArgument);
}

TEST_CASE("CLIPRe returns the nearest caption's text") {
  auto b = make_benchmark(small_config());
  auto index = build_index(b.corpus);
  CHECK(clipre_baseline(index, index.record_at(2).embedding) == index.record_at(2).text);
  CounterRng rng(1);
  auto q = test::random_unit(32, rng);
  CHECK(error_code_of([&] { clipre_baseline(index, q); }) == ErrorCode::kDimMismatch);
  auto cands = clipre_test_set(index, b.test);
  CHECK(cands.size() == b.test.size());
  CHECK(error_code_of([&] { score_test_set(b.test, {"x"}); }) == ErrorCode::kCountMismatch);
}

TEST_CASE("k sweep produces one report per k and seed") {
  auto c = small_config();
  std::vector<std::string> log;
  auto r = sweep_k(c, {0, 1, 3, 5, 8}, {1, 2}, [&](const std::string& s) { log.push_back(s); });
  CHECK(r.sweep == "k");
  CHECK(r.results.size() == 10);
  CHECK(log.size() == 10);
  CHECK(r.at(0, 1, "direct").metrics.scores.size() == 4);
  CHECK(r.at(8, 2, "knight").metrics.pairs == 8);
  CHECK(error_code_of([&] { r.at(4, 1, "knight"); }) == ErrorCode::kInvalidArgument);
  for (const auto& e : r.results) CHECK(e.final_loss < e.initial_loss);

  auto j = nlohmann::json::parse(r.to_json());
  CHECK(j["sweep"] == "k");
  CHECK(j["results"].size() == 10);
  CHECK(j["config"]["train_captions"] == 120);
  CHECK(j["results"][0]["metrics"].contains("cider"));

  CHECK(error_code_of([&] { sweep_k(c, {3, 1}, {1}); }) == ErrorCode::kInvalidArgument);
}

TEST_CASE("sweeps are reproducible and independent of the worker count") {
  auto c = small_config();
  auto a = sweep_k(c, {0, 2}, {1, 2});
  c.threads = 2;
  auto b = sweep_k(c, {0, 2}, {1, 2});
  REQUIRE(a.results.size() == b.results.size());
  for (std::size_t i = 0; i < a.results.size(); ++i) {
    CHECK(a.results[i].metrics.scores == b.results[i].metrics.scores);
    CHECK(a.results[i].final_loss == b.results[i].final_loss);
  }
}

TEST_CASE("corpus sweep and gap ablation shapes") {
  auto c = small_config();
  auto cs = sweep_corpus(c, {0.1, 1.0}, {1});
  CHECK(cs.sweep == "corpus");
  CHECK(cs.results.size() == 2);
  CHECK(cs.at(0.1, 1, "knight").metrics.pairs == 8);

  auto g = gap_ablation(c, {0.0, 1.0}, 3, {1});
  CHECK(g.results.size() == 4);
  CHECK(g.at(0.0, 1, "direct").setting == 0.0);
  CHECK(g.at(1.0, 1, "knight").setting == 1.0);
  CHECK(error_code_of([&] { gap_ablation(c, {1.0}, 0, {1}); }) == ErrorCode::kInvalidArgument);

  auto rb = run_benchmark(c, {1}, true);
  CHECK(rb.results.size() == 2);
  CHECK(rb.results.back().variant == "clipre");
}
