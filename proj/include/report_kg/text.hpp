#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace rkg {

// Lowercases ASCII and the Latin-1 supplement letters (À-Þ) encoded as UTF-8.
std::string lowercase(std::string_view text);

// Lowercased word tokens; whitespace and punctuation (ASCII punctuation plus
// ¿ ¡ « » and the typographic dash/quote marks) separate tokens and are
// dropped.
std::vector<std::string> tokenize(std::string_view text);

// Tokens joined by single spaces.
std::string join_tokens(const std::vector<std::string>& tokens);

}  // namespace rkg
