#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace knight {

using TokenId = std::uint32_t;

inline constexpr TokenId kPad = 0;
inline constexpr TokenId kBos = 1;
inline constexpr TokenId kEos = 2;
inline constexpr TokenId kUnk = 3;
inline constexpr std::size_t kReservedTokens = 4;

/// Word-level vocabulary. Ids 0..3 are PAD, BOS, EOS, UNK; the rest are
/// assigned by descending corpus count, then lexicographically.
class Vocabulary {
 public:
  Vocabulary() = default;

  std::size_t size() const noexcept { return tokens_.size(); }
  const std::string& token(TokenId id) const { return tokens_.at(id); }
  TokenId id(std::string_view token) const;

  /// Tokenizes `text` and maps each token, unseen words to UNK.
  std::vector<TokenId> encode(std::string_view text) const;
  /// Space-joined tokens; UNK renders as "<unk>", special ids are dropped.
  std::string decode(std::span<const TokenId> ids) const;

  /// JSONL sidecar, one {"id": int, "token": string} per line.
  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.tokens_ == b.tokens_; }

 private:
  friend Vocabulary build_vocabulary(std::span<const std::string> texts, std::size_t min_count);
  explicit Vocabulary(std::vector<std::string> tokens);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> ids_;
};

Vocabulary build_vocabulary(std::span<const std::string> texts, std::size_t min_count = 1);

}  // namespace knight
