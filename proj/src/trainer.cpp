#include "knight/trainer.hpp"

#include <numeric>
#include <utility>
#include <string>

#include "knight/error.hpp"
#include "knight/random.hpp"

namespace knight {

namespace {

struct Example {
  Mat<float> prefix;
  std::vector<TokenId> inputs;
  std::vector<TokenId> targets;
};

Mat<float> rows_of(std::span<const float> v) {
  return Eigen::Map<const Mat<float>>(v.data(), 1, static_cast<Eigen::Index>(v.size()));
}

}  // namespace

Mat<float> training_prefix(const CorpusIndex& corpus, std::size_t row, std::size_t k, bool exclude_self) {
  const CaptionRecord& rec = corpus.record_at(row);
  if (k == 0) return rows_of(rec.embedding.values());
  auto result = corpus.top_k(rec.embedding, k, exclude_self ? std::optional<CaptionId>(rec.id) : std::nullopt);
  Mat<float> prefix(static_cast<Eigen::Index>(result.hits.size()), static_cast<Eigen::Index>(corpus.dim()));
  for (std::size_t i = 0; i < result.hits.size(); ++i) {
    auto v = corpus.at(result.hits[i].id).embedding.values();
    prefix.row(static_cast<Eigen::Index>(i)) = rows_of(v);
  }
  return prefix;
}

TrainResult train(const CorpusIndex& corpus, const TrainingConfig& config, const EpochCallback& on_epoch) {
  const std::size_t n = corpus.size();
  const std::size_t available = config.exclude_self ? n - 1 : n;
  if (config.k > available) {
    throw Error(ErrorCode::kKTooLarge, "k=" + std::to_string(config.k) + " but only " + std::to_string(available) +
                                           " neighbors are available");
  }
  if (config.batch_size == 0) throw Error(ErrorCode::kInvalidArgument, "batch size must be >= 1");
  if (!(config.adam.lr > 0)) throw Error(ErrorCode::kInvalidArgument, "learning rate must be > 0");

  std::vector<std::string> texts;
  texts.reserve(n);
  for (const auto& r : corpus.records()) texts.push_back(r.text);
  Vocabulary vocab = build_vocabulary(texts);

  DecoderConfig mc = config.model;
  mc.vocab_size = vocab.size();
  mc.embed_dim = corpus.dim();
  const std::size_t prefix_len = config.k == 0 ? 1 : config.k;
  if (prefix_len + 2 > mc.max_len) {
    throw Error(ErrorCode::kLengthExceeded, "max_len " + std::to_string(mc.max_len) + " leaves no room after " +
                                                std::to_string(prefix_len) + " prefix slots");
  }
  const std::size_t max_caption = mc.max_len - prefix_len - 1;

  std::vector<Example> examples;
  examples.reserve(n);
  for (std::size_t row = 0; row < n; ++row) {
    auto ids = vocab.encode(corpus.record_at(row).text);
    if (ids.size() > max_caption) ids.resize(max_caption);
    examples.push_back(
        Example{training_prefix(corpus, row, config.k, config.exclude_self), teacher_inputs(ids), teacher_targets(ids)});
  }

  CounterRng rng(config.seed);
  TrainResult result;
  result.captioner.k = config.k;
  result.captioner.vocab = std::move(vocab);
  Model<float>& model = result.captioner.model;
  model = model_init<float>(mc, rng.next_u64());

  {
    double nll = 0.0, tokens = 0.0;
    for (const auto& ex : examples) {
      const double count = static_cast<double>(ex.targets.size());
      nll += mle_loss(forward(model, ex.prefix, ex.inputs), ex.targets) * count;
      tokens += count;
    }
    result.initial_loss = nll / tokens;
  }

  Model<float> grads = model.zeros_like();
  auto params = model.tensors();
  auto grad_refs = grads.tensors();
  NamedConstRefs<float> grad_view(grad_refs.begin(), grad_refs.end());
  AdamState<float> adam = adam_init(std::as_const(model).tensors());

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  CounterRng shuffle_rng = rng.split(1);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    shuffle_in_place(order, shuffle_rng);
    double epoch_nll = 0.0, epoch_tokens = 0.0;
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const std::size_t end = std::min(n, start + config.batch_size);
      double batch_tokens = 0.0;
      for (std::size_t i = start; i < end; ++i) batch_tokens += static_cast<double>(examples[order[i]].targets.size());
      for (auto& [name, g] : grad_refs) g->setZero();
      for (std::size_t i = start; i < end; ++i) {
        const Example& ex = examples[order[i]];
        const double count = static_cast<double>(ex.targets.size());
        const double loss = loss_and_grad(model, ex.prefix, ex.inputs, ex.targets, grads,
                                          static_cast<float>(count / batch_tokens));
        epoch_nll += loss * count;
      }
      epoch_tokens += batch_tokens;
      adam_step(params, grad_view, adam, config.adam);
    }
    const double mean = epoch_nll / epoch_tokens;
    result.loss_curve.push_back(mean);
    if (on_epoch) on_epoch(epoch, mean);
  }
  return result;
}

}  // namespace knight
