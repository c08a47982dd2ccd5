#include "cotscope/chunker.hpp"

#include <algorithm>
#include <set>

#include "cotscope/errors.hpp"
#include "cotscope/utf8.hpp"
#include "io.hpp"

namespace cotscope {

namespace {

char fold(char c) { return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c; }

std::string fold(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = fold(c);
  return out;
}

// Collection of Keywords, in table order (row-major).
const char* const kDefaultKeywords[] = {
    "Wait",
    "Let me step back",
    "Hang on",
    "Hold on",
    "Let me double check",
    "Hold on a minute",
    "Hold on a second",
    "Am I missing something",
    "Alternatively",
    "Instead",
    "Similarly",
    "I'll approach this from another angle",
    "Let's explore alternative approaches",
    "Looking at other approaches",
    "Let me check",
    "But let's check",
    "But wait",
    "Let's check",
    "I should check",
    "Let me verify",
    "Let's verify",
    "Another thought",
    "I should double-check",
    "Let me double-check",
    "Let me re-examine",
    "Let me confirm",
    "Looking at the options",
    "Looking at the answer choices",
    "Let's look at the options",
    "Let's look at each choice",
    "Looking at the other choices",
    "Looking at the answer options",
    "Let me just confirm",
    "Another angle",
    "Another check",
    "Let's think again",
    "Let's also think about",
    "Let me think about",
    "Another point",
    "So back to",
    "Another possibility",
    "Let's proceed step by step",
    "Looking at the candidate answers",
    "second thought",
    "Let\xE2\x80\x99s break it down",
    "Let me reconsider",
    "Let's go back",
    "re-analyze",
    "re-check",
    "reconsider",
    "re-examine",
    "First,",
    "go though each option",
    "another approach",
};

}  // namespace

KeywordTable::KeywordTable(std::vector<std::string> entries) : entries_(std::move(entries)) {
  if (entries_.empty()) throw ValidationError("keyword table is empty");
  std::set<std::string> seen;
  for (const auto& e : entries_) {
    if (e.empty()) throw ValidationError("keyword table contains an empty entry");
    auto f = fold(e);
    if (!seen.insert(f).second) throw ValidationError("duplicate keyword after case folding: " + e);
    literal_.push_back(e.back() == ',');
    folded_.push_back(std::move(f));
  }
}

KeywordTable KeywordTable::defaults() {
  return KeywordTable(std::vector<std::string>(std::begin(kDefaultKeywords), std::end(kDefaultKeywords)));
}

KeywordTable KeywordTable::from_file(const std::filesystem::path& path) {
  std::vector<std::string> entries;
  io::for_each_line(path, [&](std::size_t, std::string_view line) {
    const auto b = line.find_first_not_of(" \t");
    const auto e = line.find_last_not_of(" \t");
    auto kw = line.substr(b, e - b + 1);
    if (kw.front() == '#') return;
    entries.emplace_back(kw);
  });
  return KeywordTable(std::move(entries));
}

std::size_t KeywordTable::longest_match(std::string_view text, std::size_t pos) const {
  std::size_t best = 0;
  for (std::size_t k = 0; k < entries_.size(); ++k) {
    const std::string& kw = literal_[k] ? entries_[k] : folded_[k];
    if (kw.size() <= best || pos + kw.size() > text.size()) continue;
    bool ok = true;
    for (std::size_t i = 0; i < kw.size() && ok; ++i) {
      const char c = text[pos + i];
      ok = literal_[k] ? c == kw[i] : fold(c) == kw[i];
    }
    if (ok) best = kw.size();
  }
  return best;
}

std::vector<Chunk> segment(std::string_view cot, const KeywordTable& table) {
  std::vector<std::size_t> boundaries;  // byte offsets where a chunk opens
  for (std::size_t pos = 0; pos < cot.size();) {
    if (utf8::is_continuation(static_cast<unsigned char>(cot[pos]))) {
      ++pos;
      continue;
    }
    const std::size_t len = table.longest_match(cot, pos);
    if (len == 0) {
      ++pos;
      continue;
    }
    if (pos > 0) boundaries.push_back(pos);
    pos += len;
  }
  boundaries.push_back(cot.size());

  const auto chars = utf8::byte_to_char_table(cot);
  std::vector<Chunk> chunks;
  std::size_t begin = 0;
  for (std::size_t end : boundaries) {
    if (end == begin) continue;
    Chunk c;
    c.index = chunks.size();
    c.start = chars[begin];
    c.end = chars[end];
    c.text = std::string(cot.substr(begin, end - begin));
    chunks.push_back(std::move(c));
    begin = end;
  }
  return chunks;
}

}  // namespace cotscope

namespace cotscope {

void write_chunks_jsonl(const ChunksByTrace& chunks, const std::filesystem::path& path) {
  std::string out;
  for (const auto& [trace_id, list] : chunks) {
    for (const auto& c : list) {
      io::json j;
      j["trace_id"] = trace_id;
      j["index"] = c.index;
      j["start"] = c.start;
      j["end"] = c.end;
      j["text"] = c.text;
      out += io::dump(j);
      out += '\n';
    }
  }
  io::write_file_atomic(path, out);
}

ChunksByTrace read_chunks_jsonl(const std::filesystem::path& path) {
  ChunksByTrace out;
  io::for_each_line(path, [&](std::size_t line, std::string_view text) {
    try {
      const auto j = io::json::parse(text);
      Chunk c;
      c.index = j.at("index").get<std::size_t>();
      c.start = j.at("start").get<std::size_t>();
      c.end = j.at("end").get<std::size_t>();
      c.text = j.at("text").get<std::string>();
      auto& list = out[j.at("trace_id").get<std::string>()];
      if (c.index != list.size()) throw ValidationError("chunk indices out of order");
      list.push_back(std::move(c));
    } catch (const std::exception& e) {
      throw ValidationError(path.string() + ":" + std::to_string(line) + ": " + e.what());
    }
  });
  return out;
}

}  // namespace cotscope
