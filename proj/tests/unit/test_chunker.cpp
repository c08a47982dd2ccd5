#include <doctest.h>

#include <random>
#include <set>
#include <string>

#include "../support.hpp"
#include "cotscope/chunker.hpp"
#include "cotscope/errors.hpp"
#include "cotscope/utf8.hpp"

using namespace cotscope;

namespace {

void check_tiling(const std::string& cot, const std::vector<Chunk>& chunks) {
  std::size_t pos = 0;
  for (std::size_t i = 0; i < chunks.size(); ++i) {
    CHECK(chunks[i].index == i);
    CHECK(chunks[i].start == pos);
    CHECK(chunks[i].end > chunks[i].start);
    CHECK(chunks[i].text == std::string(utf8::slice(cot, chunks[i].start, chunks[i].end)));
    pos = chunks[i].end;
  }
  CHECK(pos == utf8::char_count(cot));
}

std::string random_cot(std::mt19937_64& rng) {
  static const char* words[] = {"the",  "sum",   "is",     "Wait,",        "But wait", "so",  "\xCE\xB1",
                                "then", "check", "Let me verify", "Instead", "x=2", "\n\n", "First,",
                                "first,", "Hold on a minute", "re-check", "reconsider", "Alternatively"};
  std::string s;
  const int n = int(rng() % 40);
  for (int i = 0; i < n; ++i) {
    if (!s.empty()) s += ' ';
    s += words[rng() % (sizeof(words) / sizeof(words[0]))];
  }
  return s;
}

}  // namespace

TEST_SUITE("chunker") {
  TEST_CASE("default table is non-empty and free of duplicates") {
    const auto t = KeywordTable::defaults();
    CHECK_FALSE(t.entries().empty());
    std::set<std::string> folded;
    for (auto e : t.entries()) {
      for (auto& c : e) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
      CHECK(folded.insert(e).second);
    }
  }

  TEST_CASE("table construction errors") {
    CHECK_THROWS_AS(KeywordTable({}), ValidationError);
    CHECK_THROWS_AS(KeywordTable({"Wait", "wait"}), ValidationError);
  }

  TEST_CASE("empty input yields no chunks") { CHECK(segment("", KeywordTable::defaults()).empty()); }

  TEST_CASE("split at Wait") {
    const std::string cot = "Compute x. Wait, recheck.";
    const auto chunks = segment(cot, KeywordTable::defaults());
    REQUIRE(chunks.size() == 2);
    CHECK(chunks[0].text == "Compute x. ");
    CHECK(chunks[1].start == 11);
    CHECK(chunks[1].text == "Wait, recheck.");
  }

  TEST_CASE("longest keyword wins where two overlap") {
    const auto t = KeywordTable::defaults();
    const auto one = segment("But wait that fails", t);
    REQUIRE(one.size() == 1);
    const auto two = segment("Hmm. But wait that fails", t);
    REQUIRE(two.size() == 2);
    CHECK(two[1].start == 5);
    CHECK(two[1].text == "But wait that fails");
  }

  TEST_CASE("matching is case-insensitive except for comma keywords") {
    const auto t = KeywordTable::defaults();
    CHECK(segment("ok. WAIT no", t).size() == 2);
    CHECK(segment("ok. First, do it", t).size() == 2);
    CHECK(segment("ok. first, do it", t).size() == 1);
  }

  TEST_CASE("offsets count characters, not bytes") {
    const std::string cot = "\xCE\xB1\xCE\xB2 Wait";
    const auto chunks = segment(cot, KeywordTable::defaults());
    REQUIRE(chunks.size() == 2);
    CHECK(chunks[1].start == 3);
    CHECK(chunks[1].end == 7);
  }

  TEST_CASE("keyword file loading skips comments and blanks") {
    testing::TempDir dir;
    testing::write_text(dir / "kw.txt", "# header\nWait\n\n  Hmm  \n");
    const auto t = KeywordTable::from_file(dir / "kw.txt");
    CHECK(t.entries() == std::vector<std::string>{"Wait", "Hmm"});
  }

  TEST_CASE("property: chunks tile the input and segment is pure") {
    std::mt19937_64 rng(11);
    const auto t = KeywordTable::defaults();
    for (int trial = 0; trial < 300; ++trial) {
      const auto cot = random_cot(rng);
      const auto a = segment(cot, t);
      check_tiling(cot, a);
      CHECK(a == segment(cot, t));
    }
  }

  TEST_CASE("property: inserting a keyword never lowers the chunk count") {
    std::mt19937_64 rng(12);
    const auto t = KeywordTable::defaults();
    for (int trial = 0; trial < 300; ++trial) {
      const auto cot = random_cot(rng);
      std::vector<std::size_t> cuts{0, cot.size()};
      for (std::size_t i = 0; i < cot.size(); ++i) {
        if (cot[i] == ' ') cuts.push_back(i + 1);
      }
      const auto at = cuts[rng() % cuts.size()];
      const auto& kw = t.entries()[rng() % t.entries().size()];
      const auto grown = cot.substr(0, at) + kw + " " + cot.substr(at);
      CHECK(segment(grown, t).size() >= segment(cot, t).size());
    }
  }

  TEST_CASE("chunks.jsonl round trip") {
    testing::TempDir dir;
    ChunksByTrace by;
    by["a"] = segment("x Wait y", KeywordTable::defaults());
    by["b"] = segment("\xCE\xB1 Instead \xCE\xB2", KeywordTable::defaults());
    write_chunks_jsonl(by, dir / "c.jsonl");
    CHECK(read_chunks_jsonl(dir / "c.jsonl") == by);
  }
}
