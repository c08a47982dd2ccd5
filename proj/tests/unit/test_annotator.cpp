#include <doctest.h>
#include <json.hpp>

#include <random>

#include "../support.hpp"
#include "cotscope/annotator.hpp"

using namespace cotscope;

namespace {

std::vector<Chunk> make_chunks(const std::vector<std::size_t>& lengths) {
  std::vector<Chunk> out;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < lengths.size(); ++i) {
    out.push_back(Chunk{i, pos, pos + lengths[i], std::string(lengths[i], 'x')});
    pos += lengths[i];
  }
  return out;
}

Trace trace_for(const std::vector<Chunk>& chunks) {
  Trace t;
  t.id = "t";
  for (const auto& c : chunks) t.cot += c.text;
  return t;
}

ChunkAnnotation ann(std::size_t i, Activity a, std::optional<Motivation> m = std::nullopt) {
  ChunkAnnotation x;
  x.chunk_index = i;
  x.activity = a;
  x.motivation = m;
  return x;
}

Activity activity_of(const std::string& s) { return s == "review" ? Activity::Review : Activity::Progress; }

ClientConfig replay(const std::filesystem::path& dir) {
  ClientConfig c;
  c.cache_dir = dir;
  c.offline = true;
  return c;
}

}  // namespace

TEST_SUITE("annotator") {
  TEST_CASE("reply parsers tolerate punctuation, case and hyphens") {
    CHECK(parse_activity_reply("REVIEW.") == Activity::Review);
    CHECK(parse_activity_reply("  progress ") == Activity::Progress);
    CHECK(parse_activity_reply("\"Review\"") == Activity::Review);
    CHECK_FALSE(parse_activity_reply("maybe").has_value());
    CHECK(parse_motivation_reply("semi-clear") == Motivation::Semiclear);
    CHECK(parse_motivation_reply("Semiclear.") == Motivation::Semiclear);
    CHECK(parse_motivation_reply("CLEAR") == Motivation::Clear);
    CHECK(parse_motivation_reply("unclear!") == Motivation::Unclear);
    CHECK_FALSE(parse_motivation_reply("").has_value());
  }

  TEST_CASE("single chunk: one call, context is the chunk alone") {
    testing::TempDir dir;
    auto transport = std::make_shared<testing::FunctionTransport>([](const ChatRequest&) { return "progress"; });
    ClientConfig cfg;
    cfg.cache_dir = dir.path();
    LlmClient client(cfg, transport);
    Annotator a(client, JudgeConfig{});
    const auto chunks = make_chunks({5});
    const auto req = a.activity_request(chunks, 0);
    const auto& user = testing::last_user_text(req);
    CHECK(user.find("Preceding") == std::string::npos);
    CHECK(user.find("Following") == std::string::npos);
    auto run = a.label_activity(chunks);
    CHECK(run.calls == 1);
    CHECK(transport->calls == 1);
  }

  TEST_CASE("replayed judge labels reproduce a hand-labelled trace") {
    testing::TempDir dir;
    const std::vector<std::string> labels = {"progress", "review", "review", "progress", "progress",
                                             "review",   "progress", "review", "review",   "progress"};
    std::vector<std::size_t> lengths;
    for (std::size_t i = 0; i < labels.size(); ++i) lengths.push_back(10 + 3 * i);
    const auto chunks = make_chunks(lengths);
    LlmClient client(replay(dir.path()), nullptr);
    Annotator a(client, JudgeConfig{});
    for (std::size_t i = 0; i < chunks.size(); ++i) {
      const auto req = a.activity_request(chunks, i);
      client.cache().put(cache_key(req, 0), req, 0, labels[i] == "review" ? "REVIEW." : "Progress");
    }
    const auto run = a.label_activity(chunks);
    REQUIRE(run.annotations.size() == labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) CHECK(run.annotations[i].activity == activity_of(labels[i]));
    CHECK(run.defaulted == 0);
  }

  TEST_CASE("motivation: progress-only traces cost nothing; replayed labels are applied") {
    testing::TempDir dir;
    LlmClient client(replay(dir.path()), nullptr);
    Annotator a(client, JudgeConfig{});
    const auto chunks = make_chunks({10, 10, 10});
    auto none = a.label_motivation(chunks, {ann(0, Activity::Progress), ann(1, Activity::Progress), ann(2, Activity::Progress)});
    CHECK(none.calls == 0);

    std::vector<ChunkAnnotation> base = {ann(0, Activity::Progress), ann(1, Activity::Review), ann(2, Activity::Review)};
    auto r1 = a.motivation_request(chunks, 1), r2 = a.motivation_request(chunks, 2);
    client.cache().put(cache_key(r1, 0), r1, 0, "Clear");
    client.cache().put(cache_key(r2, 0), r2, 0, "unclear.");
    auto run = a.label_motivation(chunks, base);
    CHECK(run.calls == 2);
    CHECK_FALSE(run.annotations[0].motivation.has_value());
    CHECK(run.annotations[1].motivation == Motivation::Clear);
    CHECK(run.annotations[2].motivation == Motivation::Unclear);
  }

  TEST_CASE("unparseable replies are retried once, then defaulted with a flag") {
    testing::TempDir dir;
    auto transport = std::make_shared<testing::FunctionTransport>([](const ChatRequest& r) -> std::string {
      return r.messages.size() > 2 ? "still unsure" : "hmm, hard to say what this is doing";
    });
    ClientConfig cfg;
    cfg.cache_dir = dir.path();
    LlmClient client(cfg, transport);
    Annotator a(client, JudgeConfig{});
    auto run = a.label_activity(make_chunks({4, 4}));
    CHECK(run.calls == 4);
    CHECK(run.defaulted == 2);
    CHECK(run.annotations[0].activity == Activity::Progress);
    CHECK(run.annotations[0].flag == std::optional<std::string>("defaulted"));
  }

  TEST_CASE("lexical metrics: all progress") {
    const auto chunks = make_chunks({10, 20});
    const auto m = lexical_metrics(trace_for(chunks), chunks, {ann(0, Activity::Progress), ann(1, Activity::Progress)});
    CHECK(m.review_ratio == 0.0);
    CHECK(m.review_chunk_fraction == 0.0);
    CHECK(m.switch_count_norm == 0.0);
    CHECK_FALSE(m.review_centroid.has_value());
    CHECK_FALSE(m.motivation_score.has_value());
  }

  TEST_CASE("lexical metrics: two equal chunks, second clear review") {
    const auto chunks = make_chunks({10, 10});
    const auto m = lexical_metrics(trace_for(chunks), chunks,
                                   {ann(0, Activity::Progress), ann(1, Activity::Review, Motivation::Clear)});
    CHECK(m.review_ratio == 0.5);
    CHECK(m.motivation_score == 1.0);
    CHECK(m.review_centroid == 0.75);
  }

  TEST_CASE("lexical metrics: 100/50/50 fixture") {
    const auto chunks = make_chunks({100, 50, 50});
    const auto m = lexical_metrics(
        trace_for(chunks), chunks,
        {ann(0, Activity::Progress), ann(1, Activity::Review, Motivation::Semiclear), ann(2, Activity::Review, Motivation::Unclear)});
    CHECK(m.review_ratio == 0.5);
    CHECK(m.motivation_score == 0.25);
    CHECK(m.switch_count_norm == 0.0);
    CHECK(m.length_chars == 200);
  }

  TEST_CASE("property: review ratio bounds, complement and strict growth") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 200; ++trial) {
      std::vector<std::size_t> lengths;
      const int n = 1 + int(rng() % 10);
      for (int i = 0; i < n; ++i) lengths.push_back(1 + rng() % 50);
      const auto chunks = make_chunks(lengths);
      std::vector<ChunkAnnotation> anns;
      for (int i = 0; i < n; ++i) anns.push_back(ann(i, rng() % 2 ? Activity::Review : Activity::Progress));
      const auto trace = trace_for(chunks);
      const auto m = lexical_metrics(trace, chunks, anns);
      CHECK(m.review_ratio >= 0.0);
      CHECK(m.review_ratio <= 1.0);
      std::size_t progress_chars = 0;
      for (int i = 0; i < n; ++i) progress_chars += anns[i].activity == Activity::Progress ? lengths[i] : 0;
      CHECK(m.review_ratio == doctest::Approx(1.0 - double(progress_chars) / double(trace.cot.size())).epsilon(1e-12));

      // Renumbering the annotation list does not matter.
      auto shuffled = anns;
      std::shuffle(shuffled.begin(), shuffled.end(), rng);
      const auto m2 = lexical_metrics(trace, chunks, shuffled);
      CHECK(m2.review_ratio == m.review_ratio);
      CHECK(m2.switch_count_norm == m.switch_count_norm);

      for (int i = 0; i < n; ++i) {
        if (anns[i].activity != Activity::Progress) continue;
        auto flipped = anns;
        flipped[i].activity = Activity::Review;
        CHECK(lexical_metrics(trace, chunks, flipped).review_ratio > m.review_ratio);
      }
    }
  }

  TEST_CASE("confusion matrix fixture reproduces 53.8/10.2/1.2/34.8") {
    const auto doc = nlohmann::json::parse(testing::read_text(COTSCOPE_FIXTURE_DIR "/annotator/confusion.json"));
    const auto cot = doc.at("cot").get<std::string>();
    const auto chunks = segment(cot, KeywordTable::defaults());
    const auto expected_lengths = doc.at("chunk_lengths").get<std::vector<std::size_t>>();
    REQUIRE(chunks.size() == expected_lengths.size());
    for (std::size_t i = 0; i < chunks.size(); ++i) CHECK(chunks[i].length() == expected_lengths[i]);
    std::vector<Activity> human, judge;
    for (const auto& s : doc.at("human")) human.push_back(activity_of(s.get<std::string>()));
    for (const auto& s : doc.at("judge")) judge.push_back(activity_of(s.get<std::string>()));
    const auto cm = confusion_matrix(chunks, human, judge);
    CHECK(cm.total_chars == 1000);
    CHECK(cm.review_as_review == 0.538);
    CHECK(cm.review_as_progress == 0.102);
    CHECK(cm.progress_as_review == 0.012);
    CHECK(cm.progress_as_progress == 0.348);
  }

  TEST_CASE("annotations.jsonl round trip") {
    testing::TempDir dir;
    AnnotationsByTrace by;
    by["a"] = {ann(0, Activity::Progress), ann(1, Activity::Review, Motivation::Semiclear)};
    by["a"][0].flag = "defaulted";
    write_annotations_jsonl(by, dir / "a.jsonl");
    CHECK(read_annotations_jsonl(dir / "a.jsonl") == by);
  }
}
