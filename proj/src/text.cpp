#include "photobook/text.hpp"

#include <cstdint>

namespace photobook::text {
namespace {

// Decodes one UTF-8 code point at `pos`. Returns the byte length consumed
// (at least 1); `cp` is set to U+FFFD for malformed sequences.
std::size_t decode(std::string_view s, std::size_t pos, char32_t& cp) {
  const auto b0 = static_cast<unsigned char>(s[pos]);
  if (b0 < 0x80) {
    cp = b0;
    return 1;
  }
  std::size_t len = 0;
  char32_t value = 0;
  if ((b0 & 0xE0) == 0xC0) {
    len = 2;
    value = b0 & 0x1F;
  } else if ((b0 & 0xF0) == 0xE0) {
    len = 3;
    value = b0 & 0x0F;
  } else if ((b0 & 0xF8) == 0xF0) {
    len = 4;
    value = b0 & 0x07;
  } else {
    cp = 0xFFFD;
    return 1;
  }
  if (pos + len > s.size()) {
    cp = 0xFFFD;
    return 1;
  }
  for (std::size_t i = 1; i < len; ++i) {
    const auto b = static_cast<unsigned char>(s[pos + i]);
    if ((b & 0xC0) != 0x80) {
      cp = 0xFFFD;
      return 1;
    }
    value = (value << 6) | (b & 0x3F);
  }
  cp = value;
  return len;
}

// White_Space property from the Unicode character database.
bool is_unicode_space(char32_t cp) {
  switch (cp) {
    case 0x09: case 0x0A: case 0x0B: case 0x0C: case 0x0D: case 0x20:
    case 0x85: case 0xA0: case 0x1680: case 0x2028: case 0x2029:
    case 0x202F: case 0x205F: case 0x3000:
      return true;
    default:
      return cp >= 0x2000 && cp <= 0x200A;
  }
}

bool is_ascii_punct(char c) {
  const auto u = static_cast<unsigned char>(c);
  return u < 0x80 && std::ispunct(u);
}

}  // namespace

std::vector<std::string_view> split_words(std::string_view s) {
  std::vector<std::string_view> words;
  std::size_t pos = 0;
  std::size_t start = std::string_view::npos;
  while (pos < s.size()) {
    char32_t cp = 0;
    const std::size_t len = decode(s, pos, cp);
    if (is_unicode_space(cp)) {
      if (start != std::string_view::npos) {
        words.push_back(s.substr(start, pos - start));
        start = std::string_view::npos;
      }
    } else if (start == std::string_view::npos) {
      start = pos;
    }
    pos += len;
  }
  if (start != std::string_view::npos) words.push_back(s.substr(start));
  return words;
}

std::size_t count_words(std::string_view s) { return split_words(s).size(); }

std::string to_lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

std::vector<std::string> lexical_tokens(std::string_view s) {
  std::vector<std::string> tokens;
  for (std::string_view w : split_words(s)) {
    while (!w.empty() && is_ascii_punct(w.front())) w.remove_prefix(1);
    while (!w.empty() && is_ascii_punct(w.back())) w.remove_suffix(1);
    if (!w.empty()) tokens.push_back(to_lower(w));
  }
  return tokens;
}

std::string_view trim(std::string_view s) {
  const auto words = split_words(s);
  if (words.empty()) return {};
  const char* begin = words.front().data();
  const char* end = words.back().data() + words.back().size();
  return {begin, static_cast<std::size_t>(end - begin)};
}

bool is_blank(std::string_view s) { return split_words(s).empty(); }

}  // namespace photobook::text
