#include "cotscope/utf8.hpp"

namespace cotscope::utf8 {

std::size_t char_count(std::string_view text) {
  std::size_t n = 0;
  for (unsigned char c : text) {
    if (!is_continuation(c)) ++n;
  }
  return n;
}

std::size_t byte_offset(std::string_view text, std::size_t index) {
  std::size_t seen = 0;
  for (std::size_t b = 0; b < text.size(); ++b) {
    if (is_continuation(static_cast<unsigned char>(text[b]))) continue;
    if (seen == index) return b;
    ++seen;
  }
  return text.size();
}

std::string_view slice(std::string_view text, std::size_t begin, std::size_t end) {
  if (end < begin) end = begin;
  const std::size_t b0 = byte_offset(text, begin);
  const std::size_t b1 = byte_offset(text, end);
  return text.substr(b0, b1 - b0);
}

std::vector<std::size_t> byte_to_char_table(std::string_view text) {
  // table[b] = number of characters that start in bytes [0, b)
  std::vector<std::size_t> table(text.size() + 1, 0);
  for (std::size_t b = 0; b < text.size(); ++b) {
    table[b + 1] = table[b] + (is_continuation(static_cast<unsigned char>(text[b])) ? 0 : 1);
  }
  return table;
}

}  // namespace cotscope::utf8
