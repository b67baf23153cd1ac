#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace knight {

/// Lowercases ASCII letters and splits on whitespace. Each ASCII
/// punctuation character becomes a token of its own. Shared by the
/// synthetic embedder, the vocabulary and the metrics so every stage sees
/// the same word boundaries.
std::vector<std::string> tokenize(std::string_view text);

/// Space-joined tokens.
std::string join_tokens(const std::vector<std::string>& tokens);

/// True when `text` has a non-whitespace character.
bool has_content(std::string_view text) noexcept;

}  // namespace knight
