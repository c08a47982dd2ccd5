#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace cotscope {

/// Keywords that open a new chunk. Matching is ASCII case-insensitive on raw
/// text (substring semantics), except keywords ending in ',' which match
/// case-sensitively as written.
class KeywordTable {
 public:
  /// Throws ValidationError when empty or when two entries collide after case folding.
  explicit KeywordTable(std::vector<std::string> entries);

  /// The default chunking vocabulary.
  static KeywordTable defaults();
  /// One keyword per line; blank lines and lines starting with '#' are ignored.
  static KeywordTable from_file(const std::filesystem::path& path);

  const std::vector<std::string>& entries() const { return entries_; }

  /// Length in bytes of the longest keyword matching at byte `pos`, or 0.
  std::size_t longest_match(std::string_view text, std::size_t pos) const;

 private:
  std::vector<std::string> entries_;
  std::vector<std::string> folded_;
  std::vector<bool> literal_;
};

struct Chunk {
  std::size_t index = 0;
  std::size_t start = 0;  // character offsets, [start, end)
  std::size_t end = 0;
  std::string text;

  std::size_t length() const { return end - start; }
  friend bool operator==(const Chunk&, const Chunk&) = default;
};

/// Splits `cot` at every keyword occurrence. Text before the first keyword is
/// chunk 0; the longest keyword wins at a position and matches starting inside
/// a consumed keyword are skipped; empty chunks are never emitted. The chunks
/// tile the input exactly.
std::vector<Chunk> segment(std::string_view cot, const KeywordTable& table);

using ChunksByTrace = std::map<std::string, std::vector<Chunk>>;

/// chunks.jsonl: {"trace_id","index","start","end","text"}
void write_chunks_jsonl(const ChunksByTrace& chunks, const std::filesystem::path& path);
ChunksByTrace read_chunks_jsonl(const std::filesystem::path& path);

}  // namespace cotscope
