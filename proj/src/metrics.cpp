#include "knight/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <unordered_map>

#include <json.hpp>

#include "knight/corpus_io.hpp"
#include "knight/error.hpp"
#include "knight/tokenizer.hpp"

namespace knight {

namespace {

constexpr double kRougeBeta = 1.2;
constexpr double kCiderSigma = 6.0;
constexpr std::size_t kCiderOrder = 4;

// N-grams keyed by their tokens joined with a separator that cannot occur
// inside a token.
using NgramCounts = std::unordered_map<std::string, double>;

NgramCounts count_ngrams(const Tokens& tokens, std::size_t n) {
  NgramCounts out;
  if (tokens.size() < n) return out;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    std::string key = tokens[i];
    for (std::size_t j = 1; j < n; ++j) {
      key.push_back('\x1f');
      key += tokens[i + j];
    }
    out[key] += 1.0;
  }
  return out;
}

void require_nonempty(std::span<const EvalPair> pairs) {
  if (pairs.empty()) throw Error(ErrorCode::kEmptyEvalSet, "no pairs to evaluate");
  for (const auto& p : pairs) {
    if (p.references.empty()) {
      throw Error(ErrorCode::kMissingReference, "pair " + std::to_string(p.id) + " has no references");
    }
  }
}

std::size_t lcs_length(const Tokens& a, const Tokens& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

}  // namespace

double bleu(std::span<const EvalPair> pairs, std::size_t n_max) {
  require_nonempty(pairs);
  if (n_max < 1 || n_max > 4) throw Error(ErrorCode::kInvalidArgument, "BLEU order must be in 1..4");
  std::vector<double> clipped(n_max, 0.0), total(n_max, 0.0);
  double cand_len = 0.0, ref_len = 0.0;
  for (const auto& p : pairs) {
    const std::size_t c = p.candidate.size();
    cand_len += static_cast<double>(c);
    std::size_t best = p.references.front().size();
    for (const auto& r : p.references) {
      const auto d = [&](std::size_t len) { return len > c ? len - c : c - len; };
      if (d(r.size()) < d(best) || (d(r.size()) == d(best) && r.size() < best)) best = r.size();
    }
    ref_len += static_cast<double>(best);
    for (std::size_t n = 1; n <= n_max; ++n) {
      NgramCounts cand = count_ngrams(p.candidate, n);
      NgramCounts max_ref;
      for (const auto& r : p.references) {
        for (const auto& [g, cnt] : count_ngrams(r, n)) max_ref[g] = std::max(max_ref[g], cnt);
      }
      for (const auto& [g, cnt] : cand) {
        auto it = max_ref.find(g);
        if (it != max_ref.end()) clipped[n - 1] += std::min(cnt, it->second);
        total[n - 1] += cnt;
      }
    }
  }
  double log_sum = 0.0;
  for (std::size_t n = 0; n < n_max; ++n) {
    if (total[n] == 0.0 || clipped[n] == 0.0) return 0.0;
    log_sum += std::log(clipped[n] / total[n]);
  }
  const double bp = cand_len >= ref_len ? 1.0 : std::exp(1.0 - ref_len / cand_len);
  return bp * std::exp(log_sum / static_cast<double>(n_max));
}

double rouge_l(std::span<const EvalPair> pairs) {
  require_nonempty(pairs);
  const double b2 = kRougeBeta * kRougeBeta;
  double sum = 0.0;
  for (const auto& p : pairs) {
    double best = 0.0;
    for (const auto& r : p.references) {
      const std::size_t l = lcs_length(p.candidate, r);
      if (l == 0) continue;
      const double prec = static_cast<double>(l) / static_cast<double>(p.candidate.size());
      const double rec = static_cast<double>(l) / static_cast<double>(r.size());
      best = std::max(best, (1.0 + b2) * prec * rec / (rec + b2 * prec));
    }
    sum += best;
  }
  return sum / static_cast<double>(pairs.size());
}

double cider_d(std::span<const EvalPair> pairs) {
  require_nonempty(pairs);
  const double log_docs = std::log(static_cast<double>(pairs.size()));

  std::unordered_map<std::string, double> doc_freq;
  for (const auto& p : pairs) {
    std::set<std::string> seen;
    for (const auto& r : p.references) {
      for (std::size_t n = 1; n <= kCiderOrder; ++n) {
        for (const auto& [g, cnt] : count_ngrams(r, n)) seen.insert(g);
      }
    }
    for (const auto& g : seen) doc_freq[g] += 1.0;
  }

  auto weigh = [&](const NgramCounts& counts, bool unit_idf) {
    NgramCounts v;
    for (const auto& [g, cnt] : counts) {
      double idf = 1.0;
      if (!unit_idf) {
        auto it = doc_freq.find(g);
        idf = log_docs - std::log(std::max(1.0, it == doc_freq.end() ? 0.0 : it->second));
      }
      v[g] = cnt * idf;
    }
    return v;
  };
  auto norm = [](const NgramCounts& v) {
    double s = 0.0;
    for (const auto& [g, x] : v) s += x * x;
    return std::sqrt(s);
  };

  double total = 0.0;
  for (const auto& p : pairs) {
    double pair_score = 0.0;
    for (std::size_t n = 1; n <= kCiderOrder; ++n) {
      const NgramCounts cand_counts = count_ngrams(p.candidate, n);
      double order_sum = 0.0;
      for (const auto& r : p.references) {
        const NgramCounts ref_counts = count_ngrams(r, n);
        NgramCounts vr = weigh(ref_counts, false);
        NgramCounts vc = weigh(cand_counts, false);
        if (norm(vr) == 0.0) {
          vr = weigh(ref_counts, true);
          vc = weigh(cand_counts, true);
        }
        const double nc = norm(vc), nr = norm(vr);
        if (nc == 0.0 || nr == 0.0) continue;
        double val = 0.0;
        for (const auto& [g, x] : vc) {
          auto it = vr.find(g);
          if (it != vr.end()) val += std::min(x, it->second) * it->second;
        }
        const double delta = static_cast<double>(p.candidate.size()) - static_cast<double>(r.size());
        order_sum += val / (nc * nr) * std::exp(-(delta * delta) / (2.0 * kCiderSigma * kCiderSigma));
      }
      pair_score += order_sum / static_cast<double>(p.references.size());
    }
    total += 10.0 * pair_score / static_cast<double>(kCiderOrder);
  }
  return total / static_cast<double>(pairs.size());
}

MetricReport evaluate(std::span<const EvalPair> pairs, const std::vector<std::string>& metrics) {
  require_nonempty(pairs);
  MetricReport report;
  report.pairs = pairs.size();
  for (const auto& m : metrics) {
    if (m == "bleu1") {
      report.scores[m] = bleu(pairs, 1);
    } else if (m == "bleu4") {
      report.scores[m] = bleu(pairs, 4);
    } else if (m == "rougeL") {
      report.scores[m] = rouge_l(pairs);
    } else if (m == "cider") {
      report.scores[m] = cider_d(pairs);
    } else {
      throw Error(ErrorCode::kInvalidArgument, "unknown metric \"" + m + "\"");
    }
  }
  return report;
}

MetricReport evaluate_corpus(const std::filesystem::path& candidates, const std::filesystem::path& references,
                             const std::vector<std::string>& metrics) {
  auto cands = read_candidates(candidates);
  auto refs = read_references(references);
  std::unordered_map<CaptionId, const ReferenceLine*> by_id;
  for (const auto& r : refs) by_id.emplace(r.id, &r);
  std::vector<EvalPair> pairs;
  pairs.reserve(cands.size());
  for (const auto& c : cands) {
    auto it = by_id.find(c.id);
    if (it == by_id.end()) throw Error(ErrorCode::kMissingReference, "candidate id " + std::to_string(c.id));
    EvalPair p{c.id, tokenize(c.caption), {}};
    for (const auto& text : it->second->captions) p.references.push_back(tokenize(text));
    pairs.push_back(std::move(p));
  }
  return evaluate(pairs, metrics);
}

std::string MetricReport::to_json() const {
  nlohmann::json j;
  j["pairs"] = pairs;
  j["scores"] = nlohmann::json::object();
  for (const auto& [name, v] : scores) j["scores"][name] = v;
  return j.dump(2);
}

}  // namespace knight
