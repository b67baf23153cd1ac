#include "knight/corpus_io.hpp"

#include <cstring>

#include "test_util.hpp"

using namespace knight;
using knight::test::error_code_of;
using knight::test::TempDir;

namespace {

EmbeddingMatrix random_matrix(std::size_t n, std::uint32_t dim, std::uint64_t seed) {
  CounterRng rng(seed);
  EmbeddingMatrix m;
  m.dim = dim;
  for (std::size_t i = 0; i < n * dim; ++i) m.data.push_back(static_cast<float>(rng.gaussian()));
  return m;
}

void write_lines(const std::filesystem::path& p, const std::vector<std::string>& lines) {
  std::string s;
  for (const auto& l : lines) s += l + "\n";
  test::write_file(p, s);
}

}  // namespace

TEST_CASE("KNEM with zero vectors is just a header") {
  TempDir dir;
  EmbeddingMatrix m;
  m.dim = 64;
  write_embeddings(m, dir / "e.knem");
  CHECK(std::filesystem::file_size(dir / "e.knem") == kKnemHeaderBytes);
  auto back = read_embeddings(dir / "e.knem");
  CHECK(back.count() == 0);
  CHECK(back.dim == 64);
}

TEST_CASE("one 2-d vector is 24 header bytes plus 8 payload bytes") {
  TempDir dir;
  EmbeddingMatrix m{2, {1.0f, 0.0f}};
  write_embeddings(m, dir / "e.knem");
  auto bytes = test::read_file(dir / "e.knem");
  REQUIRE(bytes.size() == 32);
  CHECK(bytes.substr(0, 4) == "KNEM");
  CHECK(bytes[4] == 1);
  CHECK(bytes[8] == 1);   // count, low byte
  CHECK(bytes[16] == 2);  // dim, low byte
  float first = 0;
  std::memcpy(&first, bytes.data() + 24, 4);
  CHECK(first == 1.0f);
}

TEST_CASE("100 random vectors round trip bit for bit") {
  TempDir dir;
  auto m = random_matrix(100, 64, 1);
  write_embeddings(m, dir / "a.knem");
  auto back = read_embeddings(dir / "a.knem");
  CHECK(back.dim == 64);
  REQUIRE(back.data.size() == m.data.size());
  CHECK(std::memcmp(back.data.data(), m.data.data(), m.data.size() * sizeof(float)) == 0);
  write_embeddings(back, dir / "b.knem");
  CHECK(test::read_file(dir / "a.knem") == test::read_file(dir / "b.knem"));
}

TEST_CASE("golden KNEM fixture parses") {
  auto m = read_embeddings(test::data_path("golden.knem"));
  CHECK(m.dim == 4);
  REQUIRE(m.count() == 3);
  const std::vector<float> expected{1.0f, 0.0f, 0.0f, 0.0f, 0.5f, -0.25f, 0.125f, 2.0f, -3.0f, 1.5f, 0.0f, 0.75f};
  CHECK(m.data == expected);
  TempDir dir;
  write_embeddings(m, dir / "g.knem");
  CHECK(test::read_file(dir / "g.knem") == test::read_file(test::data_path("golden.knem")));
}

TEST_CASE("damaged KNEM files are rejected") {
  TempDir dir;
  auto good = test::read_file(test::data_path("golden.knem"));

  auto bad_magic = good;
  bad_magic[0] = 'X';
  test::write_file(dir / "m.knem", bad_magic);
  CHECK(error_code_of([&] { read_embeddings(dir / "m.knem"); }) == ErrorCode::kBadMagic);

  auto bad_version = good;
  bad_version[4] = 9;
  test::write_file(dir / "v.knem", bad_version);
  CHECK(error_code_of([&] { read_embeddings(dir / "v.knem"); }) == ErrorCode::kBadVersion);

  test::write_file(dir / "t.knem", good.substr(0, good.size() - 3));
  CHECK(error_code_of([&] { read_embeddings(dir / "t.knem"); }) == ErrorCode::kTruncatedPayload);

  test::write_file(dir / "h.knem", good.substr(0, 10));
  CHECK(error_code_of([&] { read_embeddings(dir / "h.knem"); }) == ErrorCode::kTruncatedPayload);

  CHECK(error_code_of([&] { read_embeddings(dir / "missing.knem"); }) == ErrorCode::kIoError);
  CHECK(error_code_of([&] { write_embeddings(EmbeddingMatrix{4, {1.0f}}, dir / "x.knem"); }) ==
        ErrorCode::kDimMismatch);
}

TEST_CASE("caption JSONL round trip and line-numbered errors") {
  TempDir dir;
  std::vector<CaptionLine> lines{{0, "a dog"}, {7, "a \"quoted\" cat"}};
  write_captions(lines, dir / "c.jsonl");
  auto back = read_captions(dir / "c.jsonl");
  REQUIRE(back.size() == 2);
  CHECK(back[1].id == 7);
  CHECK(back[1].text == "a \"quoted\" cat");

  write_lines(dir / "bad.jsonl", {R"({"id": 0, "text": "ok"})", R"({"id": 1, "text": )"});
  try {
    read_captions(dir / "bad.jsonl");
    FAIL("expected MalformedLine");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kMalformedLine);
    CHECK(std::string(e.what()).find(":2:") != std::string::npos);
  }
  write_lines(dir / "noid.jsonl", {R"({"text": "x"})"});
  CHECK(error_code_of([&] { read_captions(dir / "noid.jsonl"); }) == ErrorCode::kMalformedLine);
  write_lines(dir / "empty.jsonl", {R"({"id": 3, "text": "  "})"});
  CHECK(error_code_of([&] { read_captions(dir / "empty.jsonl"); }) == ErrorCode::kMalformedLine);
}

TEST_CASE("load_corpus pairs lines with rows and normalizes") {
  TempDir dir;
  std::vector<CaptionLine> lines;
  for (int i = 0; i < 5; ++i) lines.push_back({static_cast<CaptionId>(i), "caption " + std::to_string(i)});
  write_captions(lines, dir / "c.jsonl");

  auto m = random_matrix(5, 8, 2);
  for (std::size_t d = 0; d < 8; ++d) m.data[d] = 0.0f;
  m.data[0] = 2.0f;  // row 0 has norm 2
  write_embeddings(m, dir / "e.knem");
  auto recs = load_corpus(dir / "c.jsonl", dir / "e.knem");
  REQUIRE(recs.size() == 5);
  CHECK(recs[3].text == "caption 3");
  CHECK(recs[0].embedding.vector().norm() == doctest::Approx(1.0).epsilon(1e-5));
  CHECK(recs[0].embedding[0] == 1.0f);

  write_embeddings(random_matrix(4, 8, 3), dir / "four.knem");
  CHECK(error_code_of([&] { load_corpus(dir / "c.jsonl", dir / "four.knem"); }) == ErrorCode::kCountMismatch);
}

TEST_CASE("checkpoint round trip") {
  TempDir dir;
  NamedTensors ts;
  CounterRng rng(4);
  Tensor a{{3, 5}, {}};
  for (int i = 0; i < 15; ++i) a.data.push_back(static_cast<float>(rng.gaussian()));
  Tensor b{{5}, {1, 2, 3, 4, 5}};
  ts.push_back({"block0.attn_q.w", a});
  ts.push_back({"block0.attn_q.b", b});
  save_checkpoint(ts, dir / "m.knck");
  auto back = load_checkpoint(dir / "m.knck");
  CHECK(back == ts);
  save_checkpoint(back, dir / "n.knck");
  CHECK(test::read_file(dir / "m.knck") == test::read_file(dir / "n.knck"));
}

TEST_CASE("golden KNCK fixture parses") {
  auto ts = load_checkpoint(test::data_path("golden.knck"));
  REQUIRE(ts.size() == 2);
  CHECK(ts[0].first == "tok_emb");
  CHECK(ts[0].second.dims == std::vector<std::uint32_t>{2, 3});
  CHECK(ts[0].second.data == std::vector<float>{0.5f, -1.0f, 2.0f, 0.25f, 0.0f, -0.125f});
  CHECK(ts[1].first == "final_ln.g");
  CHECK(ts[1].second.dims == std::vector<std::uint32_t>{3});
  TempDir dir;
  save_checkpoint(ts, dir / "g.knck");
  CHECK(test::read_file(dir / "g.knck") == test::read_file(test::data_path("golden.knck")));
}

TEST_CASE("damaged checkpoints are rejected") {
  TempDir dir;
  auto good = test::read_file(test::data_path("golden.knck"));
  test::write_file(dir / "t.knck", good.substr(0, good.size() - 1));
  CHECK(error_code_of([&] { load_checkpoint(dir / "t.knck"); }) == ErrorCode::kTruncatedPayload);
  auto bad = good;
  bad[3] = 'Z';
  test::write_file(dir / "m.knck", bad);
  CHECK(error_code_of([&] { load_checkpoint(dir / "m.knck"); }) == ErrorCode::kBadMagic);

  NamedTensors dup{{"x", Tensor{{1}, {1.0f}}}, {"x", Tensor{{1}, {2.0f}}}};
  CHECK(error_code_of([&] { save_checkpoint(dup, dir / "d.knck"); }) == ErrorCode::kDuplicateTensor);
}

TEST_CASE("candidate and reference files") {
  TempDir dir;
  std::vector<CandidateLine> c{{1, "a dog"}, {2, "a cat"}};
  std::vector<ReferenceLine> r{{1, {"a dog", "the dog"}}, {2, {"a cat"}}};
  write_candidates(c, dir / "c.jsonl");
  write_references(r, dir / "r.jsonl");
  auto c2 = read_candidates(dir / "c.jsonl");
  auto r2 = read_references(dir / "r.jsonl");
  REQUIRE(c2.size() == 2);
  CHECK(c2[1].caption == "a cat");
  REQUIRE(r2.size() == 2);
  CHECK(r2[0].captions == std::vector<std::string>{"a dog", "the dog"});
}
