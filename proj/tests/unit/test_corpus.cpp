#include <doctest.h>

#include <string>

#include "../support.hpp"
#include "cotscope/corpus.hpp"
#include "cotscope/grading.hpp"
#include "cotscope/ingest_error.hpp"
#include "cotscope/utf8.hpp"

using namespace cotscope;

namespace {

std::string question_line(const std::string& id) {
  return R"({"id":")" + id + R"(","dataset":"HARP","difficulty":"level-2","prompt":"p","gold_answer":"4"})";
}

std::string trace_line(const std::string& id, const std::string& qid) {
  return R"({"id":")" + id + R"(","question_id":")" + qid +
         R"(","model_id":"m","temperature":0.6,"cot":"think","final_answer":"\\boxed{4}"})";
}

Trace make_trace(std::string cot, std::string final_answer = "") {
  Trace t;
  t.id = "t";
  t.question_id = "q";
  t.model_id = "m";
  t.cot = std::move(cot);
  t.final_answer = std::move(final_answer);
  return t;
}

Question math_question(std::string gold) {
  Question q;
  q.id = "q";
  q.dataset = Dataset::HARP;
  q.prompt = "p";
  q.gold_answer = std::move(gold);
  return q;
}

Question mc_question() {
  Question q;
  q.id = "q";
  q.dataset = Dataset::GPQADiamond;
  q.prompt = "p";
  q.gold_answer = "B";
  q.choices = {"one", "two", "three", "four"};
  return q;
}

}  // namespace

TEST_SUITE("corpus") {
  TEST_CASE("empty file gives an empty delta") {
    testing::TempDir dir;
    testing::write_text(dir / "q.jsonl", "");
    Corpus c;
    auto d = ingest_jsonl(c, dir / "q.jsonl", RecordKind::Questions);
    CHECK(d.records == 0);
    CHECK(c.questions().empty());
  }

  TEST_CASE("one question with sixteen traces") {
    testing::TempDir dir;
    std::string traces;
    for (int i = 0; i < 16; ++i) traces += trace_line("t" + std::to_string(i), "q1") + "\n";
    testing::write_text(dir / "q.jsonl", question_line("q1") + "\n");
    testing::write_text(dir / "t.jsonl", traces);
    Corpus c;
    CHECK(ingest_jsonl(c, dir / "q.jsonl", RecordKind::Questions).records == 1);
    CHECK(ingest_jsonl(c, dir / "t.jsonl", RecordKind::Traces).records == 16);
    CHECK(c.traces().size() == 16);
    CHECK(c.trace_count("q1", "m") == 16);
  }

  TEST_CASE("unknown question id names the id and the line") {
    testing::TempDir dir;
    testing::write_text(dir / "q.jsonl", question_line("q1") + "\n");
    testing::write_text(dir / "t.jsonl", trace_line("t0", "q1") + "\n" + trace_line("t1", "q99") + "\n");
    Corpus c;
    ingest_jsonl(c, dir / "q.jsonl", RecordKind::Questions);
    try {
      ingest_jsonl(c, dir / "t.jsonl", RecordKind::Traces);
      FAIL("expected an ingest error");
    } catch (const IngestError& e) {
      CHECK(e.line() == 2);
      CHECK(std::string(e.what()).find("q99") != std::string::npos);
    }
    CHECK(c.traces().empty());  // nothing committed
  }

  TEST_CASE("malformed JSON and duplicates report line numbers") {
    testing::TempDir dir;
    testing::write_text(dir / "bad.jsonl", question_line("a") + "\n{not json\n");
    Corpus c;
    try {
      ingest_jsonl(c, dir / "bad.jsonl", RecordKind::Questions);
      FAIL("expected an ingest error");
    } catch (const IngestError& e) {
      CHECK(e.line() == 2);
    }
    testing::write_text(dir / "dup.jsonl", question_line("a") + "\n" + question_line("a") + "\n");
    CHECK_THROWS_AS(ingest_jsonl(c, dir / "dup.jsonl", RecordKind::Questions), IngestError);
  }

  TEST_CASE("ingest is idempotent on identical input") {
    testing::TempDir dir;
    testing::write_text(dir / "q.jsonl", question_line("q1") + "\n" + question_line("q2") + "\n");
    testing::write_text(dir / "t.jsonl", trace_line("a", "q1") + "\n" + trace_line("b", "q2") + "\n");
    Corpus c1, c2;
    for (Corpus* c : {&c1, &c2}) {
      ingest_jsonl(*c, dir / "q.jsonl", RecordKind::Questions);
      ingest_jsonl(*c, dir / "t.jsonl", RecordKind::Traces);
    }
    CHECK(c1 == c2);
    write_questions_jsonl(c1, dir / "q2.jsonl");
    write_traces_jsonl(c1, dir / "t2.jsonl");
    Corpus c3;
    ingest_jsonl(c3, dir / "q2.jsonl", RecordKind::Questions);
    ingest_jsonl(c3, dir / "t2.jsonl", RecordKind::Traces);
    CHECK(c3 == c1);
  }

  TEST_CASE("char_length counts scalar values") {
    CHECK(char_length(make_trace("")) == 0);
    CHECK(char_length(make_trace("abc")) == 3);
    CHECK(char_length(make_trace("\xCE\xB1=1\n")) == 4);  // α=1\n
  }

  TEST_CASE("char_length is additive under concatenation") {
    std::mt19937_64 rng(3);
    const std::string pieces[] = {"a", " ", "\xCE\xB1", "\xE2\x86\x92", "\xF0\x9F\x98\x80", "\n", "xyz"};
    for (int trial = 0; trial < 200; ++trial) {
      std::string a, b;
      for (int i = 0; i < int(rng() % 12); ++i) a += pieces[rng() % 7];
      for (int i = 0; i < int(rng() % 12); ++i) b += pieces[rng() % 7];
      CHECK(char_length(make_trace(a + b)) == char_length(make_trace(a)) + char_length(make_trace(b)));
    }
  }

  TEST_CASE("utf8 slice and offsets agree") {
    const std::string s = "a\xCE\xB1" "b\xE2\x86\x92" "c";
    CHECK(utf8::char_count(s) == 5);
    CHECK(utf8::slice(s, 1, 3) == "\xCE\xB1" "b");
    CHECK(utf8::byte_offset(s, 3) == 4);
    CHECK(utf8::byte_offset(s, 99) == s.size());
    auto table = utf8::byte_to_char_table(s);
    CHECK(table.size() == s.size() + 1);
    CHECK(table.back() == 5);
  }
}

TEST_SUITE("grading") {
  TEST_CASE("boxed answers") {
    CHECK(grade(make_trace("", "\\boxed{42}"), math_question("42")).correct);
    auto half = grade(make_trace("", "so \\boxed{ 1/2 }"), math_question("0.5"));
    CHECK(half.correct);
    CHECK(normalize_answer(" 1/2 ") == normalize_answer("0.5"));
    CHECK(normalize_answer("\\frac{2}{4}") == "1/2");
    auto none = grade(make_trace("no answer here", "nothing"), math_question("7"));
    CHECK_FALSE(none.correct);
    CHECK(none.unparsed);
  }

  TEST_CASE("last boxed expression wins and braces balance") {
    CHECK(last_boxed("\\boxed{1} then \\boxed{\\frac{3}{4}}") == std::optional<std::string>("\\frac{3}{4}"));
    CHECK_FALSE(last_boxed("no box").has_value());
  }

  TEST_CASE("multiple choice templates") {
    const auto q = mc_question();
    CHECK(grade(make_trace("", "The correct answer is (B)"), q).correct);
    auto c = grade(make_trace("", "Answer: C"), q);
    CHECK_FALSE(c.correct);
    CHECK_FALSE(c.unparsed);
    CHECK(c.extracted == "C");
    auto prose = grade(make_trace("", "i am not sure about this one"), q);
    CHECK_FALSE(prose.correct);
    CHECK(prose.unparsed);
  }

  TEST_CASE("gold letter may be given as choice text") {
    auto q = mc_question();
    q.gold_answer = "three";
    CHECK(gold_choice_letter(q) == 'C');
    q.gold_answer = "(D)";
    CHECK(gold_choice_letter(q) == 'D');
  }

  TEST_CASE("grading is deterministic and always sets correct") {
    Corpus c;
    c.add_question(math_question("12"));
    for (int i = 0; i < 5; ++i) {
      auto t = make_trace("cot", i % 2 ? "\\boxed{12}" : "none");
      t.id = "t" + std::to_string(i);
      c.add_trace(t);
    }
    Corpus copy = c;
    grade_corpus(c);
    grade_corpus(copy);
    CHECK(c == copy);
    for (const auto& t : c.traces()) CHECK(t.correct.has_value());
    CHECK(c.provenance.at("grading.unparsed_count") == "3");
  }
}
