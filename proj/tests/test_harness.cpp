#include <catch2/catch_amalgamated.hpp>

#include <atomic>
#include <thread>

#include <httplib.h>

#include "msg/harness.hpp"
#include "msg/remote.hpp"
#include "test_helpers.hpp"

using namespace msg;
using namespace msg::harness;
using testutil::TempDir;

namespace {

MCQItem four_way_item(const std::string& id = "q1", int correct = 1) {
  MCQItem item;
  item.id = id;
  item.image = ImageRef{"t", "img-" + id, "", 100, 100};
  item.target = GroundingTarget::Color;
  item.question_type = QuestionType::What;
  item.question_body = "What is the color of the ball shown in the image?";
  item.choices = {{"A", "blue"}, {"B", "red"}, {"C", "yellow"}, {"D", "black"}};
  item.correct_index = correct;
  return item;
}

MCQItem yes_no_item(const std::string& id = "y1", int correct = 0) {
  MCQItem item;
  item.id = id;
  item.image = ImageRef{"t", "img-" + id, "", 100, 100};
  item.target = GroundingTarget::Number;
  item.question_type = QuestionType::YesOrNo;
  item.question_body = "Does the following description match the image? \"two dogs\"";
  item.choices = {{"A", "Yes."}, {"B", "No."}};
  item.correct_index = correct;
  return item;
}

MCQItem correction_item(const std::string& id = "c1", int correct = 3) {
  MCQItem item = four_way_item(id, correct);
  item.question_type = QuestionType::Correction;
  item.choices = {{"A", "green"}, {"B", "purple"}, {"C", "teal"}, {"D", kNoneOfTheAbove}};
  return item;
}

}  // namespace

TEST_CASE("format_prompt lays out body, choices, and the answer cue") {
  std::string expected =
      "What is the color of the ball shown in the image?\n"
      "\n"
      "(A) blue\n"
      "(B) red\n"
      "(C) yellow\n"
      "(D) black\n"
      "Answer with the letter of the correct choice.";
  CHECK(format_prompt(four_way_item()) == expected);

  std::string yon = format_prompt(yes_no_item());
  CHECK(yon.find("(A) Yes.\n(B) No.\n") != std::string::npos);
  // every letter appears exactly once
  std::string fw = format_prompt(four_way_item());
  for (const char* letter : {"(A) ", "(B) ", "(C) ", "(D) "}) {
    size_t first = fw.find(letter);
    REQUIRE(first != std::string::npos);
    CHECK(fw.find(letter, first + 1) == std::string::npos);
  }
}

TEST_CASE("extraction cascade handles the documented response styles") {
  MCQItem fw = four_way_item();
  MCQItem yon = yes_no_item();
  MCQItem corr = correction_item();

  // hand-labeled fixtures: (raw response, item, expected letter)
  const std::vector<std::tuple<std::string, const MCQItem*, std::string>> fixtures = {
      {"C", &fw, "C"},
      {"b", &fw, "B"},
      {"(B)", &fw, "B"},
      {"A.", &fw, "A"},
      {"B) red", &fw, "B"},
      {"The correct choice is A, because the shirt is clearly blue.", &fw, "A"},
      {"The answer is (D).", &fw, "D"},
      {"Answer: D", &fw, "D"},
      {"My answer would be (C), considering the lighting.", &fw, "C"},
      {"I would go with option C here.", &fw, "C"},
      {"red", &fw, "B"},
      {"It looks yellow to me.", &fw, "C"},
      {"none of the above", &corr, "D"},
      {"Yes.", &yon, "A"},
      {"No, the description does not match the image.", &yon, "B"},
  };
  for (const auto& [raw, item, expected] : fixtures) {
    INFO("raw: " << raw);
    auto extraction = extract_choice(raw, *item);
    REQUIRE(extraction.letter.has_value());
    CHECK(*extraction.letter == expected);
    CHECK(extraction.method == ExtractionMethod::Regex);
  }
}

TEST_CASE("extraction is total and deterministic, never out of range") {
  MCQItem yon = yes_no_item();
  const std::vector<std::string> raws = {"C", "(D)", "gibberish", "answer: Q", ""};
  for (const auto& raw : raws) {
    auto a = extract_choice(raw, yon);
    auto b = extract_choice(raw, yon);
    CHECK(a.letter == b.letter);
    if (a.letter) CHECK((*a.letter == "A" || *a.letter == "B"));
  }
  // letters outside the item's set never extract
  CHECK_FALSE(extract_choice("C", yon).letter.has_value());
}

TEST_CASE("ambiguous choice-text mentions do not extract") {
  MCQItem fw = four_way_item();
  auto extraction = extract_choice("it could be blue or maybe red", fw);
  CHECK_FALSE(extraction.letter.has_value());
  CHECK(extraction.method == ExtractionMethod::None);
}

TEST_CASE("fallback service is consulted only when the cascade fails") {
  MCQItem fw = four_way_item();
  int calls = 0;
  FallbackClient fallback = [&](const std::string& raw, const std::vector<std::string>&) {
    ++calls;
    (void)raw;
    return std::string("B");
  };
  auto hit = extract_choice("C", fw, fallback);
  CHECK(*hit.letter == "C");
  CHECK(calls == 0);

  auto miss = extract_choice("no letter at all....", fw, fallback);
  CHECK(*miss.letter == "B");
  CHECK(miss.method == ExtractionMethod::FallbackService);
  CHECK(calls == 1);

  FallbackClient down = [](const std::string&, const std::vector<std::string>&) -> std::string {
    throw FallbackUnavailable("service down");
  };
  auto degraded = extract_choice("no letter at all....", fw, down);
  CHECK_FALSE(degraded.letter.has_value());
  CHECK(degraded.method == ExtractionMethod::None);
}

TEST_CASE("oracle, constant, and random respondents answer as specified") {
  MCQItem item = four_way_item("q", 2);
  OracleRespondent oracle;
  CHECK(oracle.answer(item, "").text == "C");

  ConstantRespondent constant("A");
  CHECK(constant.answer(item, "").text == "A");
  CHECK(constant.answer(yes_no_item(), "").text == "A");

  RandomRespondent random(7);
  auto first = random.answer(item, "").text;
  for (int i = 0; i < 20; ++i) CHECK(random.answer(item, "").text == first);
  RandomRespondent random2(7);
  CHECK(random2.answer(item, "").text == first);
}

TEST_CASE("score computes grouped accuracy with half-up rounding") {
  std::vector<MCQItem> items = {four_way_item("a", 0), four_way_item("b", 1),
                                four_way_item("c", 2), four_way_item("d", 3)};
  std::vector<ModelResponse> responses;
  const char* letters[] = {"A", "B", "C", "A"};  // 3 of 4 correct
  for (size_t i = 0; i < 4; ++i) {
    ModelResponse r;
    r.item_id = items[i].id;
    r.raw = letters[i];
    r.letter = letters[i];
    r.method = ExtractionMethod::Regex;
    responses.push_back(r);
  }
  auto result = score(items, responses, "fixture");
  CHECK(result.overall.accuracy() == Catch::Approx(75.00));
  CHECK(result.by_target.at("Color").total == 4);
  CHECK(result.by_type.at("What").correct == 3);

  // grouped sums reconcile with the item count
  size_t total = 0;
  for (const auto& [k, g] : result.by_target) total += g.total;
  CHECK(total == items.size());
}

TEST_CASE("missing responses count as incorrect and mismatched ids throw") {
  std::vector<MCQItem> items = {four_way_item("a", 0), four_way_item("b", 1)};
  std::vector<ModelResponse> responses;
  ModelResponse r;
  r.item_id = "a";
  r.letter = "A";
  responses.push_back(r);
  auto result = score(items, responses);
  CHECK(result.overall.correct == 1);
  CHECK(result.overall.total == 2);
  CHECK(result.unextracted == 1);

  ModelResponse stray;
  stray.item_id = "zzz";
  responses.push_back(stray);
  CHECK_THROWS_AS(score(items, responses), ItemResponseMismatch);
}

TEST_CASE("run_eval writes responses in item order and resumes cleanly") {
  TempDir dir("runeval");
  std::vector<MCQItem> items;
  for (int i = 0; i < 20; ++i) items.push_back(four_way_item("item" + std::to_string(i), i % 4));

  // a counting respondent to observe which items get queried
  struct Counting : Respondent {
    std::atomic<int> calls{0};
    std::string id() const override { return "counting"; }
    RawReply answer(const MCQItem& item, const std::string&) override {
      ++calls;
      return {item.choices[static_cast<size_t>(item.correct_index)].letter, 0};
    }
  };

  Counting respondent;
  auto out = dir / "resp.jsonl";
  auto responses = run_eval(respondent, items, out, {});
  CHECK(respondent.calls == 20);
  REQUIRE(responses.size() == 20);
  for (size_t i = 0; i < items.size(); ++i) CHECK(responses[i].item_id == items[i].id);

  // simulate a crash at 50%: keep only the first 10 stored lines
  {
    auto lines = jsonl::read_all(out);
    jsonl::Writer writer(out);
    size_t kept = 0;
    for (const auto& line : lines) {
      if (jsonl::is_meta_line(line)) {
        writer.write_meta(Json{{"respondent", "counting"}});
        continue;
      }
      if (kept >= 10) break;
      writer.write(line);
      ++kept;
    }
    writer.commit();
  }
  respondent.calls = 0;
  auto resumed = run_eval(respondent, items, out, {});
  CHECK(respondent.calls == 10);  // only the missing half is queried
  REQUIRE(resumed.size() == 20);
  for (size_t i = 0; i < items.size(); ++i) CHECK(resumed[i].item_id == items[i].id);
}

TEST_CASE("run_eval output is identical at concurrency 1 and 8 for deterministic respondents") {
  TempDir dir("conc");
  std::vector<MCQItem> items;
  for (int i = 0; i < 40; ++i) items.push_back(four_way_item("it" + std::to_string(i), i % 4));
  RandomRespondent r1(9), r2(9);

  RunOptions one;
  one.concurrency = 1;
  run_eval(r1, items, dir / "one.jsonl", one);
  RunOptions eight;
  eight.concurrency = 8;
  run_eval(r2, items, dir / "eight.jsonl", eight);
  CHECK(testutil::slurp(dir / "one.jsonl") == testutil::slurp(dir / "eight.jsonl"));
}

TEST_CASE("remote respondent retries transient failures and attaches the image") {
  TempDir dir("remote");
  png::write_file(dir / "img.png", png::Raster::filled(32, 32, {1, 2, 3}));

  std::atomic<int> attempts{0};
  std::string seen_body;
  httplib::Server server;
  server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    int n = ++attempts;
    if (n == 1) {
      res.status = 500;  // first attempt fails
      return;
    }
    seen_body = req.body;
    Json reply{{"choices", Json::array({Json{
                    {"message", Json{{"role", "assistant"}, {"content", "The answer is (B)."}}}}})}};
    res.set_content(reply.dump(), "application/json");
  });
  int port = server.bind_to_any_port("127.0.0.1");
  std::thread server_thread([&]() { server.listen_after_bind(); });
  server.wait_until_ready();

  remote::EndpointConfig config;
  config.url = "http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions";
  config.model = "mock";
  config.backoff_ms = 10;
  remote::RemoteRespondent respondent("mock", config);

  MCQItem item = four_way_item();
  item.image.path = (dir / "img.png").generic_string();
  auto reply = respondent.answer(item, format_prompt(item));
  CHECK(reply.text == "The answer is (B).");
  CHECK(attempts == 2);
  CHECK(seen_body.find("data:image/png;base64,") != std::string::npos);
  CHECK(seen_body.find("What is the color") != std::string::npos);

  server.stop();
  server_thread.join();
}

TEST_CASE("remote respondent reports auth failures without retry loops") {
  httplib::Server server;
  std::atomic<int> attempts{0};
  server.Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
    ++attempts;
    res.status = 401;
  });
  int port = server.bind_to_any_port("127.0.0.1");
  std::thread server_thread([&]() { server.listen_after_bind(); });
  server.wait_until_ready();

  remote::EndpointConfig config;
  config.url = "http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions";
  config.backoff_ms = 5;
  config.attach_image = false;
  remote::RemoteRespondent respondent("mock", config);
  MCQItem item = four_way_item();
  CHECK_THROWS_AS(respondent.answer(item, "prompt"), AuthFailure);
  CHECK(attempts == 1);

  server.stop();
  server_thread.join();
}

TEST_CASE("remote embed scorer and rewrite client speak their wire formats") {
  httplib::Server server;
  server.Post("/embed", [&](const httplib::Request& req, httplib::Response& res) {
    auto texts = Json::parse(req.body).at("texts").get<std::vector<std::string>>();
    Json embs = Json::array();
    for (const auto& t : texts) {
      // toy embedding: first-letter one-hot over two dimensions
      bool first = !t.empty() && t[0] < 'n';
      embs.push_back(Json::array({first ? 1.0 : 0.0, first ? 0.0 : 1.0}));
    }
    res.set_content(Json{{"embeddings", embs}}.dump(), "application/json");
  });
  server.Post("/rewrite", [&](const httplib::Request& req, httplib::Response& res) {
    std::string text = Json::parse(req.body).at("text").get<std::string>();
    res.set_content(Json{{"text", "Rephrased: " + text}}.dump(), "application/json");
  });
  int port = server.bind_to_any_port("127.0.0.1");
  std::thread server_thread([&]() { server.listen_after_bind(); });
  server.wait_until_ready();
  std::string base = "http://127.0.0.1:" + std::to_string(port);

  remote::EndpointConfig embed_config;
  embed_config.url = base + "/embed";
  embed_config.backoff_ms = 5;
  distractor::RemoteScorer scorer(remote::embed_fetch(embed_config));
  CHECK(scorer.score("apple", "avocado") == Catch::Approx(1.0));  // same toy bucket
  CHECK(scorer.score("apple", "zebra") == Catch::Approx(0.5));    // orthogonal -> 0.5

  remote::EndpointConfig rewrite_config;
  rewrite_config.url = base + "/rewrite";
  rewrite_config.backoff_ms = 5;
  remote::RewriteClient rewrite(rewrite_config);
  CHECK(rewrite.rewrite("the ball is red") == "Rephrased: the ball is red");

  remote::EndpointConfig extract_config;
  extract_config.url = base + "/nowhere";
  extract_config.max_attempts = 1;
  extract_config.backoff_ms = 5;
  auto fallback = remote::extract_fallback(extract_config);
  CHECK_THROWS_AS(fallback("raw", {"A", "B"}), FallbackUnavailable);

  server.stop();
  server_thread.join();

  // endpoint gone: ScorerUnavailable, so callers can fall back to lexical
  remote::EndpointConfig dead;
  dead.url = base + "/embed";
  dead.max_attempts = 1;
  dead.backoff_ms = 5;
  distractor::RemoteScorer dead_scorer(remote::embed_fetch(dead));
  CHECK_THROWS_AS(dead_scorer.score("a", "b"), ScorerUnavailable);
}

TEST_CASE("extraction fallback service resolves letters through chat completions") {
  httplib::Server server;
  std::string seen_prompt;
  server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    Json body = Json::parse(req.body);
    seen_prompt = body.at("messages").at(0).at("content").get<std::string>();
    Json reply{{"choices", Json::array({Json{{"message", Json{{"content", "B"}}}}})}};
    res.set_content(reply.dump(), "application/json");
  });
  int port = server.bind_to_any_port("127.0.0.1");
  std::thread server_thread([&]() { server.listen_after_bind(); });
  server.wait_until_ready();

  remote::EndpointConfig config;
  config.url = "http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions";
  config.backoff_ms = 5;
  auto fallback = remote::extract_fallback(config);

  MCQItem item = four_way_item();
  auto extraction = extract_choice("the second one sounds right", item, fallback);
  REQUIRE(extraction.letter.has_value());
  CHECK(*extraction.letter == "B");
  CHECK(extraction.method == ExtractionMethod::FallbackService);
  CHECK(seen_prompt.find("the second one sounds right") != std::string::npos);
  CHECK(seen_prompt.find("A, B, C, D") != std::string::npos);

  server.stop();
  server_thread.join();
}

TEST_CASE("run_eval aggregates per-item errors without aborting") {
  TempDir dir("errs");
  struct Flaky : Respondent {
    std::string id() const override { return "flaky"; }
    RawReply answer(const MCQItem& item, const std::string&) override {
      if (item.id == "it1") throw EndpointUnreachable("boom");
      return {"A", 0};
    }
  };
  std::vector<MCQItem> items = {four_way_item("it0", 0), four_way_item("it1", 0),
                                four_way_item("it2", 0)};
  Flaky respondent;
  auto responses = run_eval(respondent, items, dir / "r.jsonl", {});
  REQUIRE(responses.size() == 3);
  CHECK(responses[0].error.empty());
  CHECK_FALSE(responses[1].error.empty());
  CHECK(responses[2].error.empty());

  // errored items are retried on resume
  struct Healed : Respondent {
    int calls = 0;
    std::string id() const override { return "healed"; }
    RawReply answer(const MCQItem&, const std::string&) override {
      ++calls;
      return {"B", 0};
    }
  };
  Healed healed;
  auto second = run_eval(healed, items, dir / "r.jsonl", {});
  CHECK(healed.calls == 1);
  CHECK(second[1].raw == "B");
}
