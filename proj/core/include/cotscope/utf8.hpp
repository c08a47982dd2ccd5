#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

// Character offsets throughout the library count Unicode scalar values.
// Malformed UTF-8 is tolerated: every byte that is not a continuation byte
// starts a new character.
namespace cotscope::utf8 {

std::size_t char_count(std::string_view text);

/// Byte offset of character `index`; returns text.size() when index >= char_count.
std::size_t byte_offset(std::string_view text, std::size_t index);

/// Substring covering characters [begin, end).
std::string_view slice(std::string_view text, std::size_t begin, std::size_t end);

/// Prefix-sum table: result[b] is the character index of byte b, for b in [0, size].
std::vector<std::size_t> byte_to_char_table(std::string_view text);

inline bool is_continuation(unsigned char c) { return (c & 0xC0) == 0x80; }

}  // namespace cotscope::utf8
