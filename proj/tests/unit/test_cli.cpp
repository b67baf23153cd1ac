#include <cstdlib>
#include <json.hpp>
#include <sstream>

#include "knight/cli.hpp"
#include "knight/corpus_io.hpp"
#include "test_util.hpp"

using namespace knight;
using namespace knight::test;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run_cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) out.push_back(line);
  return out;
}

// Small frozen benchmark shared by the tests below.
struct Fixture {
  TempDir dir;
  Fixture() {
    const Run r = run_cli({"embed-synthetic", "--benchmark-dir", dir.path().string(), "--train-captions", "60",
                           "--test-items", "4", "--dim", "16"});
    REQUIRE(r.code == 0);
  }
  std::string p(const std::string& name) const { return (dir / name).string(); }
};

}  // namespace

TEST_CASE("benchmark files are written and readable") {
  Fixture f;
  CHECK(read_captions(f.p("corpus.jsonl")).size() == 60);
  CHECK(read_embeddings(f.p("corpus.knem")).count() == 60);
  CHECK(read_embeddings(f.p("test_images.knem")).count() == 4);
  CHECK(read_embeddings(f.p("test_images.knem")).dim == 16);
  CHECK(read_references(f.p("test_references.jsonl")).size() == 4);
}

TEST_CASE("embed-synthetic on a caption file") {
  Fixture f;
  const Run text = run_cli({"embed-synthetic", "--captions", f.p("corpus.jsonl"), "--out", f.p("again.knem"),
                            "--dim", "16"});
  REQUIRE(text.code == 0);
  // Text embeddings are deterministic, so they match the benchmark corpus.
  CHECK(read_file(f.p("again.knem")) == read_file(f.p("corpus.knem")));

  const Run img = run_cli({"embed-synthetic", "--captions", f.p("corpus.jsonl"), "--out", f.p("img.knem"), "--dim",
                           "16", "--image", "--sample-seed", "9"});
  REQUIRE(img.code == 0);
  CHECK(read_file(f.p("img.knem")) != read_file(f.p("corpus.knem")));
  CHECK(read_embeddings(f.p("img.knem")).count() == 60);
}

TEST_CASE("train then infer") {
  Fixture f;
  const std::vector<std::string> tiny{"--epochs", "2", "--d-model", "16", "--layers", "1", "--heads", "2"};
  std::vector<std::string> args{"train", "--corpus", f.p("corpus.jsonl"), "--embeddings", f.p("corpus.knem"),
                                "--out", f.p("m.knck"), "--k", "3"};
  args.insert(args.end(), tiny.begin(), tiny.end());
  const Run t = run_cli(args);
  REQUIRE(t.code == 0);
  const auto j = nlohmann::json::parse(t.out);
  CHECK(j["loss_curve"].size() == 2);
  CHECK(j["initial_loss"].get<double>() > j["loss_curve"][1].get<double>());
  CHECK(std::filesystem::exists(f.p("m.knck")));
  CHECK(std::filesystem::exists(f.p("m.knck.vocab.jsonl")));
  CHECK(std::filesystem::exists(f.p("m.knck.config.json")));

  const Run img = run_cli({"infer-image", "--model", f.p("m.knck"), "--corpus", f.p("corpus.jsonl"), "--embeddings",
                           f.p("corpus.knem"), "--query", f.p("test_images.knem"), "--beam", "2"});
  REQUIRE(img.code == 0);
  CHECK(lines_of(img.out).size() == 4);

  const Run vid = run_cli({"infer-video", "--model", f.p("m.knck"), "--corpus", f.p("corpus.jsonl"),
                           "--embeddings", f.p("corpus.knem"), "--frames", f.p("test_images.knem"), "--m", "2"});
  REQUIRE(vid.code == 0);
  CHECK(lines_of(vid.out).size() == 1);

  // Same inputs, same output.
  const Run again = run_cli({"infer-image", "--model", f.p("m.knck"), "--corpus", f.p("corpus.jsonl"),
                             "--embeddings", f.p("corpus.knem"), "--query", f.p("test_images.knem"), "--beam", "2"});
  CHECK(again.out == img.out);
}

TEST_CASE("architecture flags reach the checkpoint config") {
  Fixture f;
  const Run t = run_cli({"train", "--corpus", f.p("corpus.jsonl"), "--embeddings", f.p("corpus.knem"), "--out",
                         f.p("u.knck"), "--k", "2", "--epochs", "1", "--d-model", "16", "--layers", "1", "--heads",
                         "2", "--untied-output", "--no-prefix-positions"});
  REQUIRE(t.code == 0);
  const auto cfg = nlohmann::json::parse(read_file(f.p("u.knck.config.json")));
  CHECK(cfg.dump().find("\"tie_output\":false") != std::string::npos);
  CHECK(cfg.dump().find("\"prefix_positions\":false") != std::string::npos);
}

TEST_CASE("a k=0 model captions from the query itself") {
  Fixture f;
  const Run t = run_cli({"train", "--corpus", f.p("corpus.jsonl"), "--embeddings", f.p("corpus.knem"), "--out",
                         f.p("d.knck"), "--k", "0", "--epochs", "1", "--d-model", "16", "--layers", "1", "--heads",
                         "2"});
  REQUIRE(t.code == 0);
  const Run img = run_cli({"infer-image", "--model", f.p("d.knck"), "--corpus", f.p("corpus.jsonl"), "--embeddings",
                           f.p("corpus.knem"), "--query", f.p("test_images.knem")});
  CHECK(img.code == 0);
  CHECK(lines_of(img.out).size() == 4);
}

TEST_CASE("retrieve and clipre") {
  Fixture f;
  const Run r = run_cli({"retrieve", "--corpus", f.p("corpus.jsonl"), "--embeddings", f.p("corpus.knem"), "--query",
                         f.p("test_images.knem"), "--k", "3"});
  REQUIRE(r.code == 0);
  const auto lines = lines_of(r.out);
  REQUIRE(lines.size() == 4);
  std::vector<std::string> top;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto j = nlohmann::json::parse(lines[i]);
    CHECK(j["query"] == i);
    REQUIRE(j["hits"].size() == 3);
    CHECK(j["hits"][0]["score"].get<double>() >= j["hits"][1]["score"].get<double>());
    CHECK(j["hits"][1]["score"].get<double>() >= j["hits"][2]["score"].get<double>());
    top.push_back(j["hits"][0]["text"]);
  }
  const Run c = run_cli({"clipre", "--corpus", f.p("corpus.jsonl"), "--embeddings", f.p("corpus.knem"), "--query",
                         f.p("test_images.knem")});
  REQUIRE(c.code == 0);
  CHECK(lines_of(c.out) == top);
}

TEST_CASE("eval reproduces the golden report") {
  const Run r = run_cli({"eval", "--candidates", data_path("golden5_candidates.jsonl").string(), "--references",
                         data_path("golden5_references.jsonl").string()});
  REQUIRE(r.code == 0);
  CHECK(r.out == read_file(data_path("golden5_report.json")) + "\n");

  const Run some = run_cli({"eval", "--candidates", data_path("golden5_candidates.jsonl").string(), "--references",
                            data_path("golden5_references.jsonl").string(), "--metrics", "bleu1"});
  REQUIRE(some.code == 0);
  const auto j = nlohmann::json::parse(some.out);
  CHECK(j["scores"].contains("bleu1"));
  CHECK_FALSE(j["scores"].contains("cider"));
}

TEST_CASE("usage errors exit 1") {
  CHECK(run_cli({}).code == cli::kExitUsage);
  CHECK(run_cli({"frobnicate"}).code == cli::kExitUsage);
  CHECK(run_cli({"eval"}).code == cli::kExitUsage);
  CHECK(run_cli({"eval", "--candidates", "/nonexistent/c.jsonl", "--references", "/nonexistent/r.jsonl"}).code ==
        cli::kExitUsage);
  Fixture f;
  const Run zero = run_cli({"retrieve", "--corpus", f.p("corpus.jsonl"), "--embeddings", f.p("corpus.knem"),
                            "--query", f.p("test_images.knem"), "--k", "0"});
  CHECK(zero.code == cli::kExitUsage);
  CHECK_FALSE(zero.err.empty());
  CHECK(run_cli({"sweep-k", "--ks", "1,x"}).code == cli::kExitUsage);
  CHECK(run_cli({"eval", "--candidates", data_path("golden5_candidates.jsonl").string(), "--references",
                 data_path("golden5_references.jsonl").string(), "--metrics", "meteor"})
            .code == cli::kExitUsage);
}

TEST_CASE("data errors exit 2") {
  Fixture f;
  write_file(f.p("bad.knem"), "KNEM garbage");
  const Run r = run_cli({"retrieve", "--corpus", f.p("corpus.jsonl"), "--embeddings", f.p("corpus.knem"), "--query",
                         f.p("bad.knem")});
  CHECK(r.code == cli::kExitData);
  CHECK(r.err.find("error:") != std::string::npos);

  // Embedding count does not match the caption count.
  const Run mismatch = run_cli({"retrieve", "--corpus", f.p("corpus.jsonl"), "--embeddings",
                                f.p("test_images.knem"), "--query", f.p("test_images.knem")});
  CHECK(mismatch.code == cli::kExitData);
}

TEST_CASE("config file supplies defaults and flags override it") {
  Fixture f;
  write_file(f.p("retrieve.cfg"), "# neighbors\nk = 2\ncorpus=" + f.p("corpus.jsonl") + "\nembeddings = " +
                                      f.p("corpus.knem") + "  # trailing comment\n");
  const Run from_cfg = run_cli({"retrieve", "--config", f.p("retrieve.cfg"), "--query", f.p("test_images.knem")});
  REQUIRE(from_cfg.code == 0);
  CHECK(nlohmann::json::parse(lines_of(from_cfg.out)[0])["hits"].size() == 2);

  const Run flag = run_cli({"retrieve", "--config", f.p("retrieve.cfg"), "--query", f.p("test_images.knem"), "--k",
                            "4"});
  REQUIRE(flag.code == 0);
  CHECK(nlohmann::json::parse(lines_of(flag.out)[0])["hits"].size() == 4);

  write_file(f.p("bad.cfg"), "k = 2\nbeam = 3\n");
  const Run bad = run_cli({"retrieve", "--config", f.p("bad.cfg"), "--corpus", f.p("corpus.jsonl"), "--embeddings",
                           f.p("corpus.knem"), "--query", f.p("test_images.knem")});
  CHECK(bad.code == cli::kExitUsage);
  CHECK(bad.err.find("beam") != std::string::npos);

  write_file(f.p("nokey.cfg"), "k\n");
  CHECK(run_cli({"retrieve", "--config", f.p("nokey.cfg")}).code == cli::kExitUsage);
  CHECK(run_cli({"retrieve", "--config", f.p("missing.cfg")}).code == cli::kExitUsage);
}

TEST_CASE("read_config_file") {
  TempDir d;
  write_file(d / "c.cfg", "  a = 1 \n\n# x = 2\nb=two words # note\n");
  const auto kv = cli::read_config_file((d / "c.cfg").string());
  REQUIRE(kv.size() == 2);
  CHECK(kv[0] == std::pair<std::string, std::string>{"a", "1"});
  CHECK(kv[1] == std::pair<std::string, std::string>{"b", "two words"});
}

TEST_CASE("help shows defaults and exits 0") {
  const Run top = run_cli({"--help"});
  CHECK(top.code == 0);
  CHECK(top.out.find("infer-video") != std::string::npos);

  const Run r = run_cli({"infer-video", "--help"});
  CHECK(r.code == 0);
  for (const char* needle : {"--k", "--m", "--beam", "--threads", "KNIGHT_THREADS"}) {
    CHECK_MESSAGE(r.out.find(needle) != std::string::npos, needle);
  }
  CHECK(r.out.find("[5]") != std::string::npos);
  CHECK(r.out.find("[4]") != std::string::npos);

  const Run sweep = run_cli({"sweep-k", "--help"});
  CHECK(sweep.out.find("0,1,2,3,5,8,12") != std::string::npos);
  CHECK(sweep.out.find("[64]") != std::string::npos);
}

TEST_CASE("KNIGHT_THREADS is read from the environment") {
  Fixture f;
  ::setenv("KNIGHT_THREADS", "2", 1);
  const Run ok = run_cli({"retrieve", "--corpus", f.p("corpus.jsonl"), "--embeddings", f.p("corpus.knem"), "--query",
                          f.p("test_images.knem")});
  ::setenv("KNIGHT_THREADS", "0", 1);
  const Run bad = run_cli({"retrieve", "--corpus", f.p("corpus.jsonl"), "--embeddings", f.p("corpus.knem"),
                           "--query", f.p("test_images.knem")});
  const Run flag_wins = run_cli({"retrieve", "--corpus", f.p("corpus.jsonl"), "--embeddings", f.p("corpus.knem"),
                                 "--query", f.p("test_images.knem"), "--threads", "1"});
  ::unsetenv("KNIGHT_THREADS");
  CHECK(ok.code == 0);
  CHECK(bad.code == cli::kExitUsage);
  CHECK(bad.err.find("KNIGHT_THREADS") != std::string::npos);
  CHECK(flag_wins.code == 0);
}
