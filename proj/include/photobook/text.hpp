#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace photobook::text {

/// Splits on Unicode whitespace (UTF-8 input). Punctuation stays attached to
/// its word. Invalid UTF-8 bytes are treated as non-space characters.
std::vector<std::string_view> split_words(std::string_view text);

std::size_t count_words(std::string_view text);

/// ASCII lowercase; non-ASCII bytes pass through unchanged.
std::string to_lower(std::string_view text);

/// Tokens for lexical metrics: whitespace split, lowercased, with leading and
/// trailing ASCII punctuation removed. Tokens that become empty are dropped.
std::vector<std::string> lexical_tokens(std::string_view text);

std::string_view trim(std::string_view text);

bool is_blank(std::string_view text);

}  // namespace photobook::text
