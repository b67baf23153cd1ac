#include "knight/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numeric>
#include <thread>

#include <json.hpp>

#include "knight/error.hpp"
#include "knight/pipeline.hpp"
#include "knight/random.hpp"
#include "knight/tokenizer.hpp"

namespace knight {

namespace {

// {a|b|c} picks the scene-defining filler; [x|y] is a synonym slot whose
// first option is preferred.
const std::vector<std::string> kSceneTemplates = {
    "a {brown|black|white} [dog|puppy|pup] [running|racing|sprinting] on the [beach|shore|sand]",
    "a man riding a {red|blue|green} [bicycle|bike|cycle] down the [street|road|avenue]",
    "a {small|large|wooden} boat [floating|sitting|drifting] on the [lake|water|river]",
    "two {young|old|tall} men [playing|enjoying|having] tennis on a [court|clay court|hard court]",
    "a {gray|orange|striped} [cat|kitten|kitty] [sleeping|napping|resting] on a [couch|sofa|cushion]",
    "a [plate|dish|platter] of {pasta|rice|salad} on a wooden [table|counter|tray]",
    "a {red|yellow|white} [bus|coach|shuttle] [driving|moving|going] through the [city|town|downtown]",
    "a [woman|lady|girl] holding a {pink|black|blue} umbrella in the [rain|storm|drizzle]",
    "a {green|red|blue} kite [flying|soaring|floating] over the [park|field|meadow]",
    "a {young|little|happy} [boy|kid|child] [eating|holding|biting] a slice of pizza",
    "a {brown|white|spotted} horse [standing|grazing|waiting] in a [field|pasture|paddock]",
    "a {silver|red|black} car [parked|stopped|sitting] next to the [curb|sidewalk|pavement]",
    "a group of {children|students|tourists} [standing|gathered|posing] near a [statue|monument|fountain]",
    "a {black|white|brown} bear [walking|wandering|roaming] through the [forest|woods|trees]",
    "a {large|small|commercial} airplane [flying|soaring|gliding] in the [sky|clouds|air]",
    "a [bowl|basket|dish] of {fresh|ripe|sliced} fruit on the kitchen [counter|table|island]",
    "a {snowboarder|skier|hiker} [going|heading|sliding] down a snowy [mountain|slope|hill]",
    "a {red|green|yellow} train [traveling|moving|rolling] along the [tracks|rails|railway]",
    "a {surfer|swimmer|kayaker} [riding|catching|chasing] a wave in the [ocean|sea|surf]",
    "a {baseball|softball|cricket} player [swinging|holding|gripping] a bat on the [field|pitch|diamond]",
    "two {giraffes|zebras|elephants} [standing|walking|grazing] in the [grass|savanna|plains]",
    "a {clock|sign|lamp} on top of a tall [building|tower|structure]",
    "a {chef|cook|baker} [preparing|making|cooking] food in a [kitchen|restaurant|cafe]",
    "a {laptop|computer|keyboard} [sitting|resting|placed] on a cluttered [desk|table|workspace]",
    "a {girl|woman|child} [flying|holding|launching] a kite at the [beach|shore|coast]",
    "a {flock|group|pair} of birds [sitting|perched|resting] on a [wire|branch|fence]",
    "a {skateboarder|rider|teenager} [doing|performing|landing] a trick at the skate park",
    "a {vase|jar|pot} of flowers on a [windowsill|shelf|ledge]",
    "a {herd|group|line} of sheep [grazing|standing|feeding] on a [hill|hillside|slope]",
    "a {fire|police|delivery} truck [parked|stopped|waiting] on the [street|road|corner]",
    "a {man|woman|person} [talking|speaking|chatting] on a cell phone",
    "a {stop|street|traffic} sign at the [corner|intersection|crossing]",
};

const std::vector<std::string> kTrailingPhrases = {
    "in the sun",       "during the day",        "near some trees",   "with people watching",
    "on a cloudy day",  "at night",              "in the background", "next to a building",
    "in the early morning", "on a sunny afternoon", "with a blue sky",  "in front of a crowd",
};

constexpr double kPrimarySynonymProb = 0.5;
constexpr double kTrailingProb = 0.1;
constexpr std::size_t kFillersPerScene = 3;

std::vector<std::string> split_options(const std::string& body) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    auto bar = body.find('|', start);
    out.push_back(body.substr(start, bar == std::string::npos ? std::string::npos : bar - start));
    if (bar == std::string::npos) return out;
    start = bar + 1;
  }
}

struct Scene {
  std::size_t template_index;
  std::size_t filler;
};

// A description samples every synonym slot and may append a trailing
// phrase. The content form lists every synonym option and has no trailing
// phrase: it names what is in the scene without committing to a phrasing,
// which is what an image surrogate should encode.
std::string describe(const Scene& scene, CounterRng& rng, bool content_only = false) {
  const std::string& t = kSceneTemplates[scene.template_index];
  std::string out;
  for (std::size_t i = 0; i < t.size();) {
    if (t[i] == '{' || t[i] == '[') {
      const char close = t[i] == '{' ? '}' : ']';
      const std::size_t end = t.find(close, i);
      auto options = split_options(t.substr(i + 1, end - i - 1));
      if (t[i] == '{') {
        out += options[scene.filler % options.size()];
      } else if (content_only) {
        for (std::size_t o = 0; o < options.size(); ++o) out += (o ? " " : "") + options[o];
      } else if (options.size() == 1 || rng.uniform() < kPrimarySynonymProb) {
        out += options[0];
      } else {
        out += options[1 + rng.below(options.size() - 1)];
      }
      i = end + 1;
    } else {
      out.push_back(t[i++]);
    }
  }
  if (!content_only && rng.uniform() < kTrailingProb) out += " " + kTrailingPhrases[rng.below(kTrailingPhrases.size())];
  return out;
}

Scene random_scene(CounterRng& rng) {
  return Scene{static_cast<std::size_t>(rng.below(kSceneTemplates.size())),
               static_cast<std::size_t>(rng.below(kFillersPerScene))};
}

void check_increasing(const std::vector<double>& settings, const std::string& what) {
  if (settings.empty()) throw Error(ErrorCode::kInvalidArgument, what + " list is empty");
  for (std::size_t i = 1; i < settings.size(); ++i) {
    if (!(settings[i] > settings[i - 1])) {
      throw Error(ErrorCode::kInvalidArgument, what + " values must be strictly increasing");
    }
  }
}

// Runs jobs[i] for every i on up to `threads` workers; results land by index.
template <typename Job>
void run_jobs(std::size_t count, std::size_t threads, const Job& job) {
  threads = std::max<std::size_t>(1, std::min(threads, count));
  if (threads == 1) {
    for (std::size_t i = 0; i < count; ++i) job(i);
    return;
  }
  std::mutex mu;
  std::size_t next = 0;
  std::exception_ptr failure;
  std::vector<std::jthread> workers;
  for (std::size_t t = 0; t < threads; ++t) {
    workers.emplace_back([&] {
      while (true) {
        std::size_t i;
        {
          std::lock_guard lock(mu);
          if (next >= count || failure) return;
          i = next++;
        }
        try {
          job(i);
        } catch (...) {
          std::lock_guard lock(mu);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  workers.clear();
  if (failure) std::rethrow_exception(failure);
}

SweepEntry train_and_score(const BenchmarkConfig& config, const Benchmark& bench,
                           const std::vector<CaptionRecord>& corpus, std::size_t k, std::uint64_t seed,
                           double setting, const ProgressFn& progress, const std::string& label) {
  CorpusIndex index = build_index(corpus);
  TrainingConfig tc = config.training;
  tc.k = k;
  tc.seed = seed;
  TrainResult trained = train(index, tc);
  auto candidates = caption_test_set(trained.captioner, index, bench.test, config.beam_width);
  SweepEntry e{setting, seed, k == 0 ? "direct" : "knight", score_test_set(bench.test, candidates),
               trained.initial_loss, trained.loss_curve.empty() ? trained.initial_loss : trained.loss_curve.back()};
  if (progress) {
    progress(label + " seed=" + std::to_string(seed) + " bleu1=" + std::to_string(e.metrics.scores.at("bleu1")) +
             " loss " + std::to_string(e.initial_loss) + " -> " + std::to_string(e.final_loss));
  }
  return e;
}

nlohmann::json report_json(const MetricReport& r) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [name, v] : r.scores) j[name] = v;
  return j;
}

}  // namespace

TrainingConfig BenchmarkConfig::default_training() {
  TrainingConfig tc;
  tc.k = 5;
  tc.epochs = 30;
  tc.batch_size = 16;
  tc.model.d_model = 64;
  tc.model.layers = 2;
  tc.model.heads = 4;
  tc.model.max_len = 32;
  return tc;
}

Benchmark make_benchmark(const BenchmarkConfig& config) {
  config.embed.validate();
  CounterRng rng(config.data_seed);
  Benchmark b;
  b.corpus.reserve(config.train_captions);
  for (std::size_t i = 0; i < config.train_captions; ++i) {
    Scene s = random_scene(rng);
    std::string text = describe(s, rng);
    b.corpus.push_back(CaptionRecord{i, text, embed_text_synthetic(text, config.embed)});
  }
  for (std::size_t i = 0; i < config.test_items; ++i) {
    Scene s = random_scene(rng);
    std::string image_caption = describe(s, rng, true);
    std::vector<std::string> refs;
    for (std::size_t r = 0; r < config.references_per_item; ++r) refs.push_back(describe(s, rng));
    const std::uint64_t sample_seed = mix64(config.data_seed ^ (0x1000 + i));
    b.test.push_back(TestItem{config.train_captions + i, image_caption, std::move(refs),
                              embed_image_surrogate(image_caption, sample_seed, config.embed)});
  }
  return b;
}

std::vector<CaptionRecord> subsample_corpus(const std::vector<CaptionRecord>& corpus, double proportion,
                                            std::uint64_t seed) {
  if (!(proportion > 0.0 && proportion <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "proportion must be in (0, 1]");
  }
  if (proportion == 1.0) return corpus;
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  CounterRng rng(mix64(seed ^ 0x5355425355ULL));
  shuffle_in_place(order, rng);
  const auto keep = static_cast<std::size_t>(std::ceil(proportion * static_cast<double>(corpus.size())));
  order.resize(std::max<std::size_t>(keep, 1));
  std::sort(order.begin(), order.end());
  std::vector<CaptionRecord> out;
  out.reserve(order.size());
  for (std::size_t i : order) out.push_back(corpus[i]);
  return out;
}

std::string clipre_baseline(const CorpusIndex& index, const NormalizedEmbedding& query) {
  auto r = index.top_k(query, 1);
  return index.at(r.hits.front().id).text;
}

std::vector<std::string> caption_test_set(const Captioner& captioner, const CorpusIndex& index,
                                          const std::vector<TestItem>& test, std::size_t beam_width) {
  std::vector<std::string> out;
  out.reserve(test.size());
  for (const auto& item : test) {
    PrefixBundle prefix = captioner.k == 0 ? direct_prefix(item.image)
                                           : build_prefix_from_query(index, item.image, captioner.k);
    out.push_back(infer_caption(captioner, prefix, beam_width));
  }
  return out;
}

std::vector<std::string> clipre_test_set(const CorpusIndex& index, const std::vector<TestItem>& test) {
  std::vector<std::string> out;
  out.reserve(test.size());
  for (const auto& item : test) out.push_back(clipre_baseline(index, item.image));
  return out;
}

MetricReport score_test_set(const std::vector<TestItem>& test, const std::vector<std::string>& candidates) {
  if (test.size() != candidates.size()) throw Error(ErrorCode::kCountMismatch, "one candidate per test item");
  std::vector<EvalPair> pairs;
  pairs.reserve(test.size());
  for (std::size_t i = 0; i < test.size(); ++i) {
    EvalPair p{test[i].id, tokenize(candidates[i]), {}};
    for (const auto& r : test[i].references) p.references.push_back(tokenize(r));
    pairs.push_back(std::move(p));
  }
  return evaluate(pairs);
}

SweepResult sweep_k(const BenchmarkConfig& config, const std::vector<std::size_t>& ks,
                    const std::vector<std::uint64_t>& seeds, const ProgressFn& progress) {
  check_increasing(std::vector<double>(ks.begin(), ks.end()), "k");
  const Benchmark bench = make_benchmark(config);
  SweepResult out{"k", benchmark_config_json(config), {}};
  out.results.resize(ks.size() * seeds.size());
  run_jobs(out.results.size(), config.threads, [&](std::size_t job) {
    const std::size_t k = ks[job / seeds.size()];
    const std::uint64_t seed = seeds[job % seeds.size()];
    out.results[job] = train_and_score(config, bench, bench.corpus, k, seed, static_cast<double>(k), progress,
                                       "k=" + std::to_string(k));
  });
  return out;
}

SweepResult sweep_corpus(const BenchmarkConfig& config, const std::vector<double>& proportions,
                         const std::vector<std::uint64_t>& seeds, const ProgressFn& progress) {
  check_increasing(proportions, "proportion");
  const Benchmark bench = make_benchmark(config);
  SweepResult out{"corpus", benchmark_config_json(config), {}};
  out.results.resize(proportions.size() * seeds.size());
  run_jobs(out.results.size(), config.threads, [&](std::size_t job) {
    const double p = proportions[job / seeds.size()];
    const std::uint64_t seed = seeds[job % seeds.size()];
    auto corpus = subsample_corpus(bench.corpus, p, seed);
    out.results[job] = train_and_score(config, bench, corpus, config.training.k, seed, p, progress,
                                       "proportion=" + std::to_string(p));
  });
  return out;
}

SweepResult gap_ablation(const BenchmarkConfig& config, const std::vector<double>& gaps, std::size_t k,
                         const std::vector<std::uint64_t>& seeds, const ProgressFn& progress) {
  check_increasing(gaps, "gap");
  if (k == 0) throw Error(ErrorCode::kInvalidArgument, "gap ablation compares k = 0 against k >= 1");
  SweepResult out{"gap", benchmark_config_json(config), {}};
  out.results.resize(gaps.size() * seeds.size() * 2);
  std::vector<Benchmark> benches;
  for (double g : gaps) {
    BenchmarkConfig c = config;
    c.embed.gap_magnitude = g;
    benches.push_back(make_benchmark(c));
  }
  run_jobs(out.results.size(), config.threads, [&](std::size_t job) {
    const std::size_t gi = job / (seeds.size() * 2);
    const std::uint64_t seed = seeds[(job / 2) % seeds.size()];
    const std::size_t job_k = job % 2 == 0 ? 0 : k;
    out.results[job] = train_and_score(config, benches[gi], benches[gi].corpus, job_k, seed, gaps[gi], progress,
                                       "gap=" + std::to_string(gaps[gi]) + " k=" + std::to_string(job_k));
  });
  return out;
}

SweepResult run_benchmark(const BenchmarkConfig& config, const std::vector<std::uint64_t>& seeds, bool with_clipre,
                          const ProgressFn& progress) {
  const Benchmark bench = make_benchmark(config);
  SweepResult out{"benchmark", benchmark_config_json(config), {}};
  out.results.resize(seeds.size());
  run_jobs(seeds.size(), config.threads, [&](std::size_t job) {
    out.results[job] = train_and_score(config, bench, bench.corpus, config.training.k, seeds[job],
                                       static_cast<double>(config.training.k), progress,
                                       "k=" + std::to_string(config.training.k));
  });
  if (with_clipre) {
    CorpusIndex index = build_index(bench.corpus);
    MetricReport r = score_test_set(bench.test, clipre_test_set(index, bench.test));
    out.results.push_back(SweepEntry{1.0, 0, "clipre", r, 0.0, 0.0});
  }
  return out;
}

std::string SweepResult::to_json() const {
  nlohmann::json j;
  j["sweep"] = sweep;
  j["config"] = nlohmann::json::parse(config_json);
  j["results"] = nlohmann::json::array();
  for (const auto& e : results) {
    j["results"].push_back({{"setting", e.setting},
                            {"seed", e.seed},
                            {"variant", e.variant},
                            {"metrics", report_json(e.metrics)},
                            {"initial_loss", e.initial_loss},
                            {"final_loss", e.final_loss}});
  }
  return j.dump(2);
}

const SweepEntry& SweepResult::at(double setting, std::uint64_t seed, const std::string& variant) const {
  for (const auto& e : results) {
    if (e.setting == setting && e.seed == seed && e.variant == variant) return e;
  }
  throw Error(ErrorCode::kInvalidArgument, "no sweep entry for setting " + std::to_string(setting));
}

std::string benchmark_config_json(const BenchmarkConfig& c) {
  const auto& t = c.training;
  nlohmann::json j{
      {"train_captions", c.train_captions},
      {"test_items", c.test_items},
      {"references_per_item", c.references_per_item},
      {"data_seed", c.data_seed},
      {"beam_width", c.beam_width},
      {"embed", {{"dim", c.embed.dim}, {"token_seed", c.embed.token_seed}, {"gap_seed", c.embed.gap_seed},
                 {"gap_magnitude", c.embed.gap_magnitude}, {"noise_sigma", c.embed.noise_sigma}}},
      {"training", {{"k", t.k}, {"epochs", t.epochs}, {"batch_size", t.batch_size}, {"lr", t.adam.lr},
                    {"exclude_self", t.exclude_self}, {"d_model", t.model.d_model}, {"layers", t.model.layers},
                    {"heads", t.model.heads}, {"max_len", t.model.max_len}}},
  };
  return j.dump();
}

}  // namespace knight
