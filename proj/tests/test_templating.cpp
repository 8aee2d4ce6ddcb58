#include <catch2/catch_amalgamated.hpp>

#include "msg/rng.hpp"
#include "msg/templating.hpp"
#include "test_helpers.hpp"

using namespace msg;
using namespace msg::templating;
using testutil::TempDir;

namespace {

const char* kWhatColorSource =
    "id: what-color-demo\n"
    "type: what\n"
    "target: color\n"
    "slots: ground-truth, distractor#1, distractor#2, distractor#3\n"
    "placeholders: obj-attr, bbox-color\n"
    "\n"
    "What color of [obj-attr] object is featured in [bbox-color] bounding box of the image?\n";

}  // namespace

TEST_CASE("parse_template reads the what-color example") {
  Template t = parse_template(kWhatColorSource);
  CHECK(t.id == "what-color-demo");
  CHECK(t.kind == TemplateKind::What);
  CHECK(t.target == GroundingTarget::Color);
  REQUIRE(t.placeholders.size() == 2);
  CHECK(t.placeholders[0] == "obj-attr");
  CHECK(t.placeholders[1] == "bbox-color");
  REQUIRE(t.slots.size() == 4);
  CHECK(t.slots[0] == SlotKind::GroundTruth);
}

TEST_CASE("undeclared placeholder in the body is a grammar error") {
  std::string bad =
      "id: x\ntype: what\ntarget: color\n"
      "slots: ground-truth, distractor#1, distractor#2, distractor#3\n"
      "placeholders: obj-attr\n\nWhat is [foo]?\n";
  CHECK_THROWS_AS(parse_template(bad), GrammarError);
}

TEST_CASE("correction template without none-of-the-above is rejected") {
  std::string bad =
      "id: x\ntype: correction\ntarget: color\n"
      "slots: ground-truth, distractor#1, distractor#2, distractor#3\n"
      "placeholders: description\n\nFix: [description]\n";
  CHECK_THROWS_AS(parse_template(bad), MissingNoneOfTheAbove);
}

TEST_CASE("two ground-truth slots are rejected") {
  std::string bad =
      "id: x\ntype: what\ntarget: color\n"
      "slots: ground-truth, ground-truth, distractor#1, distractor#2\n"
      "placeholders: obj-attr\n\nWhat [obj-attr]?\n";
  CHECK_THROWS_AS(parse_template(bad), DuplicateGroundTruthSlot);
}

TEST_CASE("yes-or-no templates require the yes/no slot pair") {
  std::string bad =
      "id: x\ntype: yes-or-no\ntarget: color\nslots: no, yes\n"
      "placeholders: description\n\nIs it right? [description]\n";
  CHECK_THROWS_AS(parse_template(bad), GrammarError);
}

TEST_CASE("render reproduces the example layout with the gold at position 1") {
  Template t = parse_template(kWhatColorSource);
  Bindings b{{"obj-attr", "round"},     {"bbox-color", "green"},
             {"ground-truth", "red"},   {"distractor#1", "blue"},
             {"distractor#2", "yellow"}, {"distractor#3", "black"}};
  auto r = render(t, b, 1);
  CHECK(r.body == "What color of round object is featured in green bounding box of the image?");
  REQUIRE(r.choices.size() == 4);
  CHECK(r.choices[0] == "blue");
  CHECK(r.choices[1] == "red");
  CHECK(r.choices[2] == "yellow");
  CHECK(r.choices[3] == "black");
  CHECK(r.correct_index == 1);
  CHECK(format_choice(0, r.choices[0]) == "(A) blue");

  // byte-identical on repeat calls
  auto r2 = render(t, b, 1);
  CHECK(r2.body == r.body);
  CHECK(r2.choices == r.choices);
}

TEST_CASE("missing binding names the placeholder") {
  Template t = parse_template(kWhatColorSource);
  Bindings b{{"obj-attr", "round"},
             {"ground-truth", "red"},
             {"distractor#1", "blue"},
             {"distractor#2", "yellow"},
             {"distractor#3", "black"}};
  try {
    render(t, b, 0);
    FAIL("expected MissingBinding");
  } catch (const MissingBinding& e) {
    CHECK(std::string(e.what()).find("bbox-color") != std::string::npos);
  }
}

TEST_CASE("yes-or-no renders the fixed two choices") {
  std::string src =
      "id: yon\ntype: yes-or-no\ntarget: color\nslots: yes, no\n"
      "placeholders: description\n\nDoes this match? [description]\n";
  Template t = parse_template(src);
  auto r = render(t, {{"description", "a red ball"}}, 0);
  REQUIRE(r.choices.size() == 2);
  CHECK(r.choices[0] == "Yes.");
  CHECK(r.choices[1] == "No.");
  CHECK(r.correct_index == 0);
}

TEST_CASE("parse then render with identity bindings round-trips the body") {
  Template t = parse_template(kWhatColorSource);
  Bindings identity;
  for (const auto& name : t.placeholders) identity[name] = "[" + name + "]";
  std::string body = substitute(t.body, identity);
  CHECK(body == t.body);
}

TEST_CASE("substitute reports spans in code points") {
  std::map<std::string, std::vector<std::pair<size_t, size_t>>> spans;
  std::string out = substitute("café [word] end", {{"word", "cafés"}}, &spans);
  CHECK(out == "café cafés end");
  REQUIRE(spans.at("word").size() == 1);
  CHECK(spans.at("word")[0] == std::pair<size_t, size_t>{5, 10});
}

TEST_CASE("correction renders pin none-of-the-above last for any correct position") {
  std::string src =
      "id: corr\ntype: correction\ntarget: color\n"
      "slots: ground-truth, distractor#1, distractor#2, none-of-the-above\n"
      "placeholders: description\n\nFix this: [description]\n";
  Template t = parse_template(src);
  RngStream rng(99);
  for (int trial = 0; trial < 200; ++trial) {
    Bindings b{{"description", "d" + std::to_string(trial)},
               {"ground-truth", "g" + std::to_string(rng.bounded(1000))},
               {"distractor#1", "x" + std::to_string(rng.bounded(1000))},
               {"distractor#2", "y" + std::to_string(rng.bounded(1000))}};
    int pos = static_cast<int>(rng.bounded(4));
    auto r = render(t, b, pos);
    REQUIRE(r.choices.size() == 4);
    CHECK(r.choices[3] == kNoneOfTheAbove);
    CHECK(r.correct_index == pos);
    if (pos < 3) CHECK(r.choices[static_cast<size_t>(pos)] == b.at("ground-truth"));
  }
}

TEST_CASE("load_pool rejects duplicate ids and reports missing cells") {
  TempDir dir("pool");
  testutil::write_file(dir / "a.tmpl", kWhatColorSource);
  testutil::write_file(dir / "b.tmpl", kWhatColorSource);
  CHECK_THROWS_AS(load_pool(dir.path(), false), DuplicateTemplateId);

  TempDir partial("pool2");
  testutil::write_file(partial / "a.tmpl", kWhatColorSource);
  CHECK_THROWS_AS(load_pool(partial.path(), true), EmptyCell);
  CHECK_NOTHROW(load_pool(partial.path(), false));
}

TEST_CASE("shipped pool covers every required cell with at least 3 templates") {
  auto pool = load_pool(testutil::assets() / "templates");
  for (const auto& [kind, target] : TemplatePool::required_cells()) {
    INFO(to_string(kind) << " x " << to_string(target));
    CHECK(pool.cell(kind, target).size() >= 3);
  }
  CHECK(pool.cell(TemplateKind::What, GroundingTarget::Color).size() >= 3);
}
