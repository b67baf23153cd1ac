#include "knight/vocabulary.hpp"

#include <algorithm>
#include <fstream>
#include <map>

#include <json.hpp>

#include "knight/error.hpp"
#include "knight/tokenizer.hpp"

namespace knight {

namespace {
const std::vector<std::string> kReservedNames = {"<pad>", "<bos>", "<eos>", "<unk>"};
}

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  for (std::size_t i = kReservedTokens; i < tokens_.size(); ++i) {
    if (!ids_.emplace(tokens_[i], static_cast<TokenId>(i)).second) {
      throw Error(ErrorCode::kDuplicateId, "token \"" + tokens_[i] + "\" appears twice");
    }
  }
}

TokenId Vocabulary::id(std::string_view token) const {
  auto it = ids_.find(std::string(token));
  return it == ids_.end() ? kUnk : it->second;
}

std::vector<TokenId> Vocabulary::encode(std::string_view text) const {
  std::vector<TokenId> out;
  for (const auto& tok : tokenize(text)) out.push_back(id(tok));
  return out;
}

std::string Vocabulary::decode(std::span<const TokenId> ids) const {
  std::vector<std::string> words;
  for (TokenId t : ids) {
    if (t == kUnk) {
      words.emplace_back("<unk>");
    } else if (t >= kReservedTokens) {
      words.push_back(token(t));
    }
  }
  return join_tokens(words);
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoError, "cannot open " + path.string() + " for writing");
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    out << nlohmann::json{{"id", i}, {"token", tokens_[i]}}.dump() << '\n';
  }
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    const std::size_t line_no = tokens.size() + 1;
    try {
      auto obj = nlohmann::json::parse(line);
      if (obj.at("id").get<std::size_t>() != tokens.size()) {
        throw Error(ErrorCode::kMalformedLine, path.string() + ":" + std::to_string(line_no) + ": ids must be dense");
      }
      tokens.push_back(obj.at("token").get<std::string>());
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kMalformedLine, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (tokens.size() < kReservedTokens) {
    throw Error(ErrorCode::kMalformedLine, path.string() + ": missing reserved tokens");
  }
  return Vocabulary(std::move(tokens));
}

Vocabulary build_vocabulary(std::span<const std::string> texts, std::size_t min_count) {
  if (texts.empty()) throw Error(ErrorCode::kEmptyCorpus, "cannot build a vocabulary from no texts");
  std::map<std::string, std::size_t> counts;
  for (const auto& text : texts) {
    for (auto& tok : tokenize(text)) ++counts[std::move(tok)];
  }
  std::vector<std::pair<std::string, std::size_t>> ranked;
  for (auto& [tok, n] : counts) {
    if (n >= min_count) ranked.emplace_back(tok, n);
  }
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  std::vector<std::string> tokens = kReservedNames;
  for (auto& [tok, n] : ranked) tokens.push_back(tok);
  return Vocabulary(std::move(tokens));
}

}  // namespace knight
