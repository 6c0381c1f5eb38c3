#include "report_kg/text.hpp"

#include <cctype>

namespace rkg {

namespace {

bool is_ascii_separator(unsigned char c) {
  return std::isspace(c) || std::ispunct(c);
}

// Length in bytes of a multi-byte separator at s[i], or 0.
std::size_t utf8_separator(std::string_view s, std::size_t i) {
  auto byte = [&](std::size_t k) { return static_cast<unsigned char>(s[k]); };
  if (i + 1 < s.size() && byte(i) == 0xC2) {
    const unsigned char b = byte(i + 1);
    // ¡ « · » ¿ and no-break space
    if (b == 0xA1 || b == 0xAB || b == 0xB7 || b == 0xBB || b == 0xBF || b == 0xA0) return 2;
  }
  if (i + 2 < s.size() && byte(i) == 0xE2 && byte(i + 1) == 0x80) {
    const unsigned char b = byte(i + 2);
    // en/em dash, curly quotes, ellipsis
    if ((b >= 0x93 && b <= 0x94) || (b >= 0x98 && b <= 0x9D) || b == 0xA6) return 3;
  }
  return 0;
}

}  // namespace

std::string lowercase(std::string_view text) {
  std::string out(text);
  for (std::size_t i = 0; i < out.size(); ++i) {
    auto c = static_cast<unsigned char>(out[i]);
    if (c < 0x80) {
      out[i] = static_cast<char>(std::tolower(c));
    } else if (c == 0xC3 && i + 1 < out.size()) {
      auto n = static_cast<unsigned char>(out[i + 1]);
      // U+00C0..U+00DE except the multiplication sign U+00D7.
      if (n >= 0x80 && n <= 0x9E && n != 0x97) out[i + 1] = static_cast<char>(n + 0x20);
      ++i;
    }
  }
  return out;
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) tokens.push_back(lowercase(current));
    current.clear();
  };
  for (std::size_t i = 0; i < text.size();) {
    const auto c = static_cast<unsigned char>(text[i]);
    if (c < 0x80 && is_ascii_separator(c)) {
      flush();
      ++i;
      continue;
    }
    if (std::size_t len = utf8_separator(text, i)) {
      flush();
      i += len;
      continue;
    }
    current.push_back(text[i]);
    ++i;
  }
  flush();
  return tokens;
}

std::string join_tokens(const std::vector<std::string>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out.push_back(' ');
    out += tokens[i];
  }
  return out;
}

}  // namespace rkg
