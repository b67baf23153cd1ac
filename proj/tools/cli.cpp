#include "knight/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <optional>
#include <ostream>
#include <sstream>

#include "knight/corpus_io.hpp"
#include "knight/error.hpp"
#include "knight/experiments.hpp"
#include "knight/metrics.hpp"
#include "knight/model_io.hpp"
#include "knight/pipeline.hpp"
#include "knight/random.hpp"
#include "knight/synthetic_embedder.hpp"
#include "knight/trainer.hpp"

namespace knight::cli {

namespace {

// A bad flag value detected after CLI11 parsing. Exit code 1.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

template <typename T>
std::vector<T> parse_list(const std::string& flag, const std::string& text) {
  std::vector<T> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (item.empty()) throw UsageError(flag + ": empty list element in \"" + text + "\"");
    std::istringstream is(item);
    T v{};
    if (!(is >> v) || !is.eof()) throw UsageError(flag + ": cannot parse \"" + item + "\"");
    out.push_back(v);
  }
  if (out.empty()) throw UsageError(flag + ": list is empty");
  return out;
}

std::vector<std::string> split_names(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

// Options shared by the synthetic embedder and the benchmark.
struct EmbedOpts {
  std::size_t dim = 64;
  double gap = 1.0;
  double sigma = 0.05;
  std::uint64_t token_seed = SynthEmbedConfig{}.token_seed;
  std::uint64_t gap_seed = SynthEmbedConfig{}.gap_seed;

  void add(CLI::App* app) {
    app->add_option("--dim", dim, "Synthetic embedding dimension")->check(CLI::Range(2, 1 << 16));
    app->add_option("--gap", gap, "Modality gap magnitude")->check(CLI::NonNegativeNumber);
    app->add_option("--sigma", sigma, "Image noise scale")->check(CLI::NonNegativeNumber);
    app->add_option("--token-seed", token_seed, "Seed of the token vectors");
    app->add_option("--gap-seed", gap_seed, "Seed of the gap direction");
  }
  SynthEmbedConfig config() const {
    SynthEmbedConfig c;
    c.dim = dim;
    c.gap_magnitude = gap;
    c.noise_sigma = sigma;
    c.token_seed = token_seed;
    c.gap_seed = gap_seed;
    return c;
  }
};

struct TrainOpts {
  std::size_t epochs = 30;
  std::size_t batch = 16;
  double lr = 1e-3;
  std::size_t d_model = 64;
  std::size_t layers = 2;
  std::size_t heads = 4;
  std::size_t max_len = 32;
  bool untied = false;
  bool no_prefix_positions = false;

  void add(CLI::App* app) {
    app->add_option("--epochs", epochs, "Training epochs");
    app->add_option("--batch", batch, "Captions per optimizer step")->check(CLI::PositiveNumber);
    app->add_option("--lr", lr, "Adam learning rate")->check(CLI::PositiveNumber);
    app->add_option("--d-model", d_model, "Decoder width")->check(CLI::PositiveNumber);
    app->add_option("--layers", layers, "Decoder blocks")->check(CLI::PositiveNumber);
    app->add_option("--heads", heads, "Attention heads")->check(CLI::PositiveNumber);
    app->add_option("--max-len", max_len, "Prefix slots + BOS + caption tokens")->check(CLI::Range(3, 4096));
    app->add_flag("--untied-output", untied, "Separate output matrix instead of reusing token embeddings");
    app->add_flag("--no-prefix-positions", no_prefix_positions, "Leave prefix slots without positional embeddings");
  }
  void apply(TrainingConfig& tc) const {
    tc.epochs = epochs;
    tc.batch_size = batch;
    tc.adam.lr = lr;
    tc.model.d_model = d_model;
    tc.model.layers = layers;
    tc.model.heads = heads;
    tc.model.max_len = max_len;
    tc.model.tie_output = !untied;
    tc.model.prefix_positions = !no_prefix_positions;
  }
};

struct BenchOpts {
  EmbedOpts embed;
  TrainOpts train;
  std::size_t train_captions = 800;
  std::size_t test_items = 100;
  std::uint64_t data_seed = 20230;
  std::size_t beam = 5;
  std::string seeds = "1,2,3";
  std::string out;

  void add(CLI::App* app) {
    embed.add(app);
    train.add(app);
    app->add_option("--train-captions", train_captions, "Benchmark training captions")->check(CLI::PositiveNumber);
    app->add_option("--test-items", test_items, "Benchmark held-out images")->check(CLI::PositiveNumber);
    app->add_option("--data-seed", data_seed, "Seed of the benchmark text");
    app->add_option("--beam", beam, "Beam width")->check(CLI::PositiveNumber);
    app->add_option("--seeds", seeds, "Comma-separated training seeds");
    app->add_option("--out", out, "Write the JSON result here instead of stdout");
  }
  BenchmarkConfig config(std::size_t threads) const {
    BenchmarkConfig c;
    c.embed = embed.config();
    train.apply(c.training);
    c.train_captions = train_captions;
    c.test_items = test_items;
    c.data_seed = data_seed;
    c.beam_width = beam;
    c.threads = threads;
    return c;
  }
};

void emit(const std::string& text, const std::string& path, std::ostream& out) {
  if (path.empty()) {
    out << text << "\n";
    return;
  }
  std::ofstream f(path);
  f << text << "\n";
  if (!f) throw Error(ErrorCode::kIoError, "cannot write " + path);
}

ProgressFn progress_to(std::ostream& err) {
  return [&err](const std::string& line) { err << line << std::endl; };
}

std::vector<NormalizedEmbedding> read_queries(const std::string& path) {
  return normalized_rows(read_embeddings(path));
}

}  // namespace

std::vector<std::pair<std::string, std::string>> read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file " + path);
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  int line_no = 0;
  auto trim = [](std::string s) {
    s.erase(0, s.find_first_not_of(" \t\r"));
    s.erase(s.find_last_not_of(" \t\r") + 1);
    return s;
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": expected key=value");
    }
    out.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return out;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Retrieval-conditioned captioning: k-NN caption prefixes, a small decoder, and evaluation."};
  app.name("knight");
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  std::string config_path;
  std::size_t threads = 1;
  std::vector<CLI::Option*> thread_opts;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "key=value file; flags given on the command line win");
    thread_opts.push_back(sub->add_option("--threads", threads, "Worker cap; falls back to $KNIGHT_THREADS")
                              ->check(CLI::PositiveNumber));
  };

  // embed-synthetic
  auto* embed = app.add_subcommand("embed-synthetic", "Embed captions with the synthetic encoder (KNEM out)");
  EmbedOpts embed_opts;
  std::string embed_captions, embed_out, bench_dir;
  bool embed_image = false;
  std::uint64_t sample_seed = 0;
  std::size_t bench_train = 800, bench_test = 100;
  std::uint64_t bench_seed = 20230;
  embed->add_option("--captions", embed_captions, "Caption JSONL")->check(CLI::ExistingFile);
  embed->add_option("--out", embed_out, "Output KNEM path");
  embed->add_flag("--image", embed_image, "Embed as image surrogates (gap + noise)");
  embed->add_option("--sample-seed", sample_seed, "Base seed of the image noise");
  embed->add_option("--benchmark-dir", bench_dir, "Write the frozen synthetic benchmark into this directory");
  embed->add_option("--train-captions", bench_train, "Benchmark training captions")->check(CLI::PositiveNumber);
  embed->add_option("--test-items", bench_test, "Benchmark held-out images")->check(CLI::PositiveNumber);
  embed->add_option("--data-seed", bench_seed, "Seed of the benchmark text");
  embed_opts.add(embed);
  add_common(embed);

  // train
  auto* train_cmd = app.add_subcommand("train", "Train a captioner on a caption corpus");
  std::string corpus_path, embeddings_path, model_path, query_path, frames_path, train_out;
  std::size_t k = 5;
  std::uint64_t seed = 0;
  bool include_self = false;
  TrainOpts train_opts;
  train_cmd->add_option("--corpus", corpus_path, "Caption JSONL")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--embeddings", embeddings_path, "Caption KNEM")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--out", train_out, "Checkpoint path (KNCK)")->required();
  train_cmd->add_option("--k", k, "Neighbors per caption; 0 conditions on the caption's own embedding");
  train_cmd->add_option("--seed", seed, "Training seed");
  train_cmd->add_flag("--include-self", include_self, "Let a caption retrieve itself");
  train_opts.add(train_cmd);
  add_common(train_cmd);

  // infer-image
  std::size_t beam = 5, m = 4;
  auto* infer_image = app.add_subcommand("infer-image", "Caption image embeddings");
  infer_image->add_option("--model", model_path, "Checkpoint")->required()->check(CLI::ExistingFile);
  infer_image->add_option("--corpus", corpus_path, "Caption JSONL")->required()->check(CLI::ExistingFile);
  infer_image->add_option("--embeddings", embeddings_path, "Caption KNEM")->required()->check(CLI::ExistingFile);
  infer_image->add_option("--query", query_path, "Image KNEM, one caption per row")->required()->check(CLI::ExistingFile);
  infer_image->add_option("--k", k, "Retrieved captions")->check(CLI::PositiveNumber);
  infer_image->add_option("--beam", beam, "Beam width")->check(CLI::PositiveNumber);
  add_common(infer_image);

  // infer-video
  auto* infer_video = app.add_subcommand("infer-video", "Caption one video given per-frame embeddings");
  infer_video->add_option("--model", model_path, "Checkpoint")->required()->check(CLI::ExistingFile);
  infer_video->add_option("--corpus", corpus_path, "Caption JSONL")->required()->check(CLI::ExistingFile);
  infer_video->add_option("--embeddings", embeddings_path, "Caption KNEM")->required()->check(CLI::ExistingFile);
  infer_video->add_option("--frames", frames_path, "Frame KNEM in time order")->required()->check(CLI::ExistingFile);
  infer_video->add_option("--m", m, "Keyframes")->check(CLI::PositiveNumber);
  infer_video->add_option("--k", k, "Retrieved captions per keyframe")->check(CLI::PositiveNumber);
  infer_video->add_option("--beam", beam, "Beam width")->check(CLI::PositiveNumber);
  add_common(infer_video);

  // retrieve
  auto* retrieve = app.add_subcommand("retrieve", "Top-k corpus captions per query (JSON lines)");
  retrieve->add_option("--corpus", corpus_path, "Caption JSONL")->required()->check(CLI::ExistingFile);
  retrieve->add_option("--embeddings", embeddings_path, "Caption KNEM")->required()->check(CLI::ExistingFile);
  retrieve->add_option("--query", query_path, "Query KNEM")->required()->check(CLI::ExistingFile);
  retrieve->add_option("--k", k, "Neighbors")->check(CLI::PositiveNumber);
  add_common(retrieve);

  // eval
  auto* eval = app.add_subcommand("eval", "Score candidate captions against references");
  std::string candidates_path, references_path, metrics = "bleu1,bleu4,rougeL,cider";
  eval->add_option("--candidates", candidates_path, "Candidate JSONL")->required()->check(CLI::ExistingFile);
  eval->add_option("--references", references_path, "Reference JSONL")->required()->check(CLI::ExistingFile);
  eval->add_option("--metrics", metrics, "Comma-separated metric names");
  add_common(eval);

  // sweeps
  BenchOpts bench_opts;
  std::string ks = "0,1,2,3,5,8,12", proportions = "0.1,0.25,0.5,1.0", gaps = "0,1,2";
  auto* sweep_k_cmd = app.add_subcommand("sweep-k", "Train and score one model per k on the synthetic benchmark");
  sweep_k_cmd->add_option("--ks", ks, "Comma-separated k values (0 = no retrieval)");
  bench_opts.add(sweep_k_cmd);
  add_common(sweep_k_cmd);

  auto* sweep_corpus_cmd = app.add_subcommand("sweep-corpus", "Train and score on nested corpus fractions");
  sweep_corpus_cmd->add_option("--proportions", proportions, "Comma-separated fractions in (0, 1]");
  sweep_corpus_cmd->add_option("--k", k, "Neighbors")->check(CLI::PositiveNumber);
  bench_opts.add(sweep_corpus_cmd);
  add_common(sweep_corpus_cmd);

  auto* gap_cmd = app.add_subcommand("gap-ablation", "Direct (k=0) versus k-NN decoding across gap sizes");
  gap_cmd->add_option("--gaps", gaps, "Comma-separated gap magnitudes");
  gap_cmd->add_option("--k", k, "Neighbors of the k-NN model")->check(CLI::PositiveNumber);
  bench_opts.add(gap_cmd);
  add_common(gap_cmd);

  // clipre
  auto* clipre = app.add_subcommand("clipre", "Retrieval baseline: the nearest corpus caption per query");
  clipre->add_option("--corpus", corpus_path, "Caption JSONL")->required()->check(CLI::ExistingFile);
  clipre->add_option("--embeddings", embeddings_path, "Caption KNEM")->required()->check(CLI::ExistingFile);
  clipre->add_option("--query", query_path, "Query KNEM")->required()->check(CLI::ExistingFile);
  add_common(clipre);

  // Config file: its keys become flags placed before the real ones, so the
  // command line wins under TakeLast.
  std::vector<std::string> argv = args;
  try {
    if (!argv.empty()) {
      CLI::App* sub = nullptr;
      try {
        sub = app.get_subcommand(argv.front());
      } catch (const CLI::OptionNotFound&) {
      }
      std::optional<std::string> cfg;
      for (std::size_t i = 1; i < argv.size(); ++i) {
        if (argv[i] == "--config" && i + 1 < argv.size()) cfg = argv[i + 1];
        if (argv[i].rfind("--config=", 0) == 0) cfg = argv[i].substr(9);
      }
      if (sub && cfg) {
        std::vector<std::string> injected{argv.front()};
        for (const auto& [key, value] : read_config_file(*cfg)) {
          const CLI::Option* opt = sub->get_option_no_throw("--" + key);
          if (!opt || key == "config") throw UsageError(*cfg + ": unknown key \"" + key + "\" for " + sub->get_name());
          if (opt->get_expected_min() == 0) {
            if (value == "true" || value == "1" || value == "yes") {
              injected.push_back("--" + key);
            } else if (!(value == "false" || value == "0" || value == "no")) {
              throw UsageError(*cfg + ": flag \"" + key + "\" needs true or false");
            }
          } else {
            injected.push_back("--" + key);
            injected.push_back(value);
          }
        }
        injected.insert(injected.end(), argv.begin() + 1, argv.end());
        argv = std::move(injected);
      }
    }
    std::vector<std::string> reversed(argv.rbegin(), argv.rend());
    app.parse(reversed);
    // CLI11 silently drops environment values that fail validation, so the
    // variable is read here instead.
    const bool given = std::any_of(thread_opts.begin(), thread_opts.end(), [](auto* o) { return o->count() > 0; });
    if (const char* env = std::getenv("KNIGHT_THREADS"); env && !given) {
      const auto v = parse_list<std::size_t>("KNIGHT_THREADS", env);
      if (v.size() != 1 || v[0] == 0) throw UsageError("KNIGHT_THREADS must be a positive integer");
      threads = v[0];
    }
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  } catch (const std::runtime_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (embed->parsed()) {
      const SynthEmbedConfig ec = embed_opts.config();
      ec.validate();
      if (!bench_dir.empty()) {
        BenchmarkConfig bc;
        bc.embed = ec;
        bc.train_captions = bench_train;
        bc.test_items = bench_test;
        bc.data_seed = bench_seed;
        const Benchmark b = make_benchmark(bc);
        const std::filesystem::path dir(bench_dir);
        std::filesystem::create_directories(dir);
        std::vector<CaptionLine> lines;
        std::vector<NormalizedEmbedding> corpus_vecs, image_vecs;
        for (const auto& r : b.corpus) {
          lines.push_back({r.id, r.text});
          corpus_vecs.push_back(r.embedding);
        }
        std::vector<ReferenceLine> refs;
        for (const auto& t : b.test) {
          refs.push_back({t.id, t.references});
          image_vecs.push_back(t.image);
        }
        write_captions(lines, dir / "corpus.jsonl");
        write_embeddings(EmbeddingMatrix::from_vectors(corpus_vecs), dir / "corpus.knem");
        write_embeddings(EmbeddingMatrix::from_vectors(image_vecs), dir / "test_images.knem");
        write_references(refs, dir / "test_references.jsonl");
        nlohmann::json j{{"corpus", b.corpus.size()}, {"test_items", b.test.size()}, {"dim", ec.dim},
                         {"dir", dir.string()}};
        out << j.dump() << "\n";
        return kExitOk;
      }
      if (embed_captions.empty() || embed_out.empty()) {
        throw UsageError("embed-synthetic needs --captions and --out, or --benchmark-dir");
      }
      const auto lines = read_captions(embed_captions);
      std::vector<NormalizedEmbedding> vecs;
      vecs.reserve(lines.size());
      for (const auto& l : lines) {
        vecs.push_back(embed_image ? embed_image_surrogate(l.text, mix64(sample_seed ^ l.id), ec)
                                   : embed_text_synthetic(l.text, ec));
      }
      write_embeddings(EmbeddingMatrix::from_vectors(vecs, static_cast<std::uint32_t>(ec.dim)), embed_out);
      nlohmann::json j{{"count", vecs.size()}, {"dim", ec.dim}, {"out", embed_out}};
      out << j.dump() << "\n";
      return kExitOk;
    }

    if (train_cmd->parsed()) {
      const CorpusIndex index = build_index(load_corpus(corpus_path, embeddings_path));
      TrainingConfig tc;
      tc.k = k;
      tc.seed = seed;
      tc.exclude_self = !include_self;
      train_opts.apply(tc);
      err << "training on " << index.size() << " captions, k=" << k << "\n";
      TrainResult r = train(index, tc, [&](std::size_t epoch, double loss) {
        err << "epoch " << epoch + 1 << "/" << tc.epochs << " loss " << loss << std::endl;
      });
      save_captioner(r.captioner, train_out);
      nlohmann::json j{{"checkpoint", train_out}, {"k", k}, {"initial_loss", r.initial_loss},
                       {"loss_curve", r.loss_curve}};
      out << j.dump() << "\n";
      return kExitOk;
    }

    if (infer_image->parsed()) {
      const Captioner cap = load_captioner(model_path);
      const CorpusIndex index = build_index(load_corpus(corpus_path, embeddings_path));
      if (cap.k == 0) err << "model was trained without retrieval; captioning from the query itself\n";
      for (const auto& q : read_queries(query_path)) {
        const PrefixBundle prefix = cap.k == 0 ? direct_prefix(q) : build_prefix_from_query(index, q, k);
        out << infer_caption(cap, prefix, beam) << "\n";
      }
      return kExitOk;
    }

    if (infer_video->parsed()) {
      const Captioner cap = load_captioner(model_path);
      const CorpusIndex index = build_index(load_corpus(corpus_path, embeddings_path));
      FrameSequence frames{read_queries(frames_path)};
      out << infer_caption(cap, build_video_prefix(index, frames, m, k), beam) << "\n";
      return kExitOk;
    }

    if (retrieve->parsed()) {
      const CorpusIndex index = build_index(load_corpus(corpus_path, embeddings_path));
      const auto queries = read_queries(query_path);
      const auto results = index.batch_top_k(queries, k, threads);
      for (std::size_t i = 0; i < results.size(); ++i) {
        nlohmann::json hits = nlohmann::json::array();
        for (const auto& h : results[i].hits) {
          hits.push_back({{"id", h.id}, {"score", h.score}, {"text", index.at(h.id).text}});
        }
        out << nlohmann::json{{"query", i}, {"hits", hits}}.dump() << "\n";
      }
      return kExitOk;
    }

    if (eval->parsed()) {
      const auto names = split_names(metrics);
      if (names.empty()) throw UsageError("--metrics: no metric names");
      for (const auto& n : names) {
        if (std::find(kAllMetrics.begin(), kAllMetrics.end(), n) == kAllMetrics.end()) {
          throw UsageError("--metrics: unknown metric \"" + n + "\"");
        }
      }
      out << evaluate_corpus(candidates_path, references_path, names).to_json() << "\n";
      return kExitOk;
    }

    if (sweep_k_cmd->parsed()) {
      const auto seeds = parse_list<std::uint64_t>("--seeds", bench_opts.seeds);
      const auto kv = parse_list<std::size_t>("--ks", ks);
      auto r = sweep_k(bench_opts.config(threads), kv, seeds, progress_to(err));
      emit(r.to_json(), bench_opts.out, out);
      return kExitOk;
    }

    if (sweep_corpus_cmd->parsed()) {
      const auto seeds = parse_list<std::uint64_t>("--seeds", bench_opts.seeds);
      const auto pv = parse_list<double>("--proportions", proportions);
      BenchmarkConfig bc = bench_opts.config(threads);
      bc.training.k = k;
      auto r = sweep_corpus(bc, pv, seeds, progress_to(err));
      emit(r.to_json(), bench_opts.out, out);
      return kExitOk;
    }

    if (gap_cmd->parsed()) {
      const auto seeds = parse_list<std::uint64_t>("--seeds", bench_opts.seeds);
      const auto gv = parse_list<double>("--gaps", gaps);
      auto r = gap_ablation(bench_opts.config(threads), gv, k, seeds, progress_to(err));
      emit(r.to_json(), bench_opts.out, out);
      return kExitOk;
    }

    if (clipre->parsed()) {
      const CorpusIndex index = build_index(load_corpus(corpus_path, embeddings_path));
      for (const auto& q : read_queries(query_path)) out << clipre_baseline(index, q) << "\n";
      return kExitOk;
    }
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace knight::cli
