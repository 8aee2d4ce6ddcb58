// Acceptance suite: runs every release criterion end to end and prints one
// pass/fail line each. Exits non-zero if any criterion fails.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <set>
#include <vector>

#include "msg/analysis.hpp"
#include "msg/cli.hpp"
#include "msg/corpus.hpp"
#include "msg/harness.hpp"
#include "msg/instructgen.hpp"
#include "msg/mcqgen.hpp"
#include "msg/visprompt.hpp"

using namespace msg;
namespace fs = std::filesystem;

namespace {

struct Criterion {
  int number;
  std::string title;
  std::function<bool(std::string&)> run;
};

fs::path g_scratch;

std::string scratch(const std::string& name) {
  fs::path p = g_scratch / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p.generic_string();
}

std::string file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

std::vector<MCQItem> load_items(const fs::path& p) {
  std::vector<MCQItem> items;
  jsonl::for_each_line(p, [&](size_t, const Json& j) {
    if (jsonl::is_meta_line(j)) return;
    items.push_back(MCQItem::from_json(j));
  });
  return items;
}

// In-memory scoring of a respondent over a suite.
harness::EvalResult score_respondent(harness::Respondent& r, const std::vector<MCQItem>& items) {
  std::vector<harness::ModelResponse> responses;
  for (const auto& item : items) {
    harness::ModelResponse resp;
    resp.item_id = item.id;
    resp.raw = r.answer(item, harness::format_prompt(item)).text;
    auto extraction = harness::extract_choice(resp.raw, item);
    resp.letter = extraction.letter;
    responses.push_back(std::move(resp));
  }
  return harness::score(items, responses, r.id());
}

// ---- criterion 1: demo validity and runtime --------------------------------------

bool criterion_suite_validity(std::string& detail) {
  std::string out = scratch("c1-demo");
  auto start = std::chrono::steady_clock::now();
  int rc = cli::run({"demo", "--seed", "42", "--out", out});
  double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (rc != 0) {
    detail = "demo exited " + std::to_string(rc);
    return false;
  }
  auto validation = jsonl::read_json_file(fs::path(out) / "validation.json");
  size_t items = validation.at("items").get<size_t>();
  bool ok = validation.at("ok").get<bool>();
  size_t violations = validation.at("violations").size();

  auto all = load_items(fs::path(out) / "suites" / "all.jsonl");
  size_t structural_errors = 0;
  for (const auto& item : all) {
    size_t expected = item.question_type == QuestionType::YesOrNo ? 2 : 4;
    if (item.choices.size() != expected) ++structural_errors;
    if (item.question_type == QuestionType::Correction &&
        item.choices.back().text != kNoneOfTheAbove)
      ++structural_errors;
  }

  char buf[160];
  std::snprintf(buf, sizeof(buf), "%zu items, %zu violations, %.1fs", items, violations, seconds);
  detail = buf;
  return items >= 360 && ok && structural_errors == 0 && seconds < 60.0;
}

// ---- criterion 2: random-guess arithmetic ------------------------------------------

std::vector<MCQItem> synthetic_paper_scale_suite() {
  std::vector<MCQItem> items;
  auto add = [&](QuestionType type, size_t count) {
    for (size_t i = 0; i < count; ++i) {
      MCQItem item;
      item.id = std::string(to_string(type)) + "-" + std::to_string(i);
      item.image = ImageRef{"syn", item.id, "", 10, 10};
      item.target = kAllTargets[i % kAllTargets.size()];
      item.question_type = type;
      item.question_body = "q";
      if (type == QuestionType::YesOrNo) {
        item.choices = {{"A", "Yes."}, {"B", "No."}};
        item.correct_index = static_cast<int>(i % 2);
      } else {
        item.choices = {{"A", "w" + std::to_string(4 * i)},
                        {"B", "w" + std::to_string(4 * i + 1)},
                        {"C", "w" + std::to_string(4 * i + 2)},
                        {"D", "w" + std::to_string(4 * i + 3)}};
        item.correct_index = static_cast<int>(i % 4);
        if (type == QuestionType::Correction) {
          item.choices[3].text = kNoneOfTheAbove;
          item.correct_index = static_cast<int>(i % 4);
        }
      }
      items.push_back(std::move(item));
    }
  };
  add(QuestionType::YesOrNo, 500);
  add(QuestionType::What, 334);
  add(QuestionType::FillInTheBlank, 333);
  add(QuestionType::Correction, 333);
  return items;
}

bool criterion_random_guess(std::string& detail) {
  double analytic = 100.0 * (500.0 * 0.5 + 1000.0 * 0.25) / 1500.0;
  if (str::format2(analytic) != "33.33") {
    detail = "analytic expectation surprised: " + str::format2(analytic);
    return false;
  }
  auto items = synthetic_paper_scale_suite();
  double sum = 0;
  std::map<std::string, double> type_sums;
  const int n_seeds = 10;
  for (int seed = 0; seed < n_seeds; ++seed) {
    harness::RandomRespondent random(static_cast<uint64_t>(seed) + 1);
    auto result = score_respondent(random, items);
    sum += result.overall.accuracy();
    for (const auto& [type, group] : result.by_type) type_sums[type] += group.accuracy();
  }
  double mean = sum / n_seeds;
  bool ok = std::fabs(mean - 33.33) <= 2.0;
  // Random-Guess row: YoN 50.00, others 25.00, within +-3 per type
  std::map<std::string, double> expected = {
      {"YesOrNo", 50.0}, {"What", 25.0}, {"FillInTheBlank", 25.0}, {"Correction", 25.0}};
  std::string per_type;
  for (const auto& [type, want] : expected) {
    double got = type_sums[type] / n_seeds;
    per_type += type + "=" + str::format2(got) + " ";
    if (std::fabs(got - want) > 3.0) ok = false;
  }
  detail = "mean=" + str::format2(mean) + " (analytic 33.33), " + per_type;
  return ok;
}

// ---- criterion 3: oracle and constant sanity -----------------------------------------

bool criterion_oracle_constant(std::string& detail) {
  std::string gen_out = scratch("c3-suites");
  int rc = cli::run({"gen-mcq", "--corpus", "assets/minicorpus/records.jsonl", "--target", "all",
                     "--count", "60", "--seed", "11", "--out", gen_out});
  if (rc != 0) {
    detail = "gen-mcq failed";
    return false;
  }
  bool ok = true;
  std::string details;
  std::vector<MCQItem> four_way;
  for (GroundingTarget target : kAllTargets) {
    auto items = load_items(fs::path(gen_out) / (str::lower(to_string(target)) + ".jsonl"));
    harness::OracleRespondent oracle;
    auto result = score_respondent(oracle, items);
    if (result.overall.accuracy() != 100.0) {
      ok = false;
      details += std::string(to_string(target)) + " oracle=" +
                 str::format2(result.overall.accuracy()) + " ";
    }
    for (auto& item : items)
      if (item.question_type != QuestionType::YesOrNo) four_way.push_back(item);
  }
  harness::ConstantRespondent constant("A");
  auto result = score_respondent(constant, four_way);
  double acc = result.overall.accuracy();
  if (acc < 23.0 || acc > 27.0) ok = false;
  detail = "oracle=100.00 on 6 suites, constant-A on " + std::to_string(four_way.size()) +
           " balanced 4-way items = " + str::format2(acc) + details;
  return ok;
}

// ---- criterion 4: extraction fixtures -------------------------------------------------

bool criterion_extraction(std::string& detail) {
  MCQItem fw;
  fw.id = "fw";
  fw.image = ImageRef{"t", "i", "", 10, 10};
  fw.target = GroundingTarget::Color;
  fw.question_type = QuestionType::What;
  fw.question_body = "q";
  fw.choices = {{"A", "blue"}, {"B", "red"}, {"C", "yellow"}, {"D", "black"}};
  fw.correct_index = 1;
  MCQItem yon = fw;
  yon.question_type = QuestionType::YesOrNo;
  yon.choices = {{"A", "Yes."}, {"B", "No."}};
  yon.correct_index = 0;
  MCQItem corr = fw;
  corr.question_type = QuestionType::Correction;
  corr.choices = {{"A", "green"}, {"B", "purple"}, {"C", "teal"}, {"D", kNoneOfTheAbove}};

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
  size_t hits = 0;
  std::string misses;
  for (const auto& [raw, item, expected] : fixtures) {
    auto extraction = harness::extract_choice(raw, *item);  // regex cascade only, no fallback
    if (extraction.letter && *extraction.letter == expected &&
        extraction.method == harness::ExtractionMethod::Regex) {
      ++hits;
    } else {
      misses += "['" + raw + "' -> " + (extraction.letter ? *extraction.letter : "?") + "] ";
    }
  }
  detail = std::to_string(hits) + "/" + std::to_string(fixtures.size()) +
           " styles extracted by regex alone" + (misses.empty() ? "" : "; missed " + misses);
  return hits == fixtures.size() && fixtures.size() >= 12;
}

// ---- criterion 5: statistics oracle -----------------------------------------------------

bool criterion_statistics(std::string& detail) {
  analysis::RankMatrix equal;
  equal.models = {"a", "b", "c"};
  equal.observations = {"o1", "o2", "o3", "o4"};
  equal.values = {{1, 1, 1, 1}, {1, 1, 1, 1}, {1, 1, 1, 1}};
  auto fr_equal = analysis::friedman(equal);
  if (std::fabs(fr_equal.chi_square) > 1e-12 || std::fabs(fr_equal.p_value - 1.0) > 1e-12) {
    detail = "all-equal matrix: chi=" + std::to_string(fr_equal.chi_square);
    return false;
  }

  analysis::RankMatrix strict;
  strict.models = {"A", "B", "C"};
  strict.observations = {"o1", "o2", "o3", "o4"};
  strict.values = {{90, 80, 85, 95}, {50, 40, 45, 55}, {10, 5, 8, 12}};
  auto fr = analysis::friedman(strict);
  if (std::fabs(fr.chi_square - 8.0) > 1e-9) {
    detail = "strict 3x4 chi-square = " + std::to_string(fr.chi_square);
    return false;
  }

  double cd = analysis::nemenyi_cd(3, 4, 0.05);
  if (std::fabs(cd - 1.6568) > 1e-3) {
    detail = "nemenyi_cd(3,4,0.05) = " + std::to_string(cd);
    return false;
  }

  // clique finder vs brute force over 1000 random rank vectors (k <= 8)
  RngStream rng(0xACCEA);
  for (int trial = 0; trial < 1000; ++trial) {
    size_t k = 2 + rng.bounded(7);
    std::vector<double> ranks;
    for (size_t i = 0; i < k; ++i)
      ranks.push_back(1.0 + rng.uniform01() * (static_cast<double>(k) - 1.0));
    double trial_cd = rng.uniform01() * static_cast<double>(k);

    auto fast = analysis::rank_cliques(ranks, trial_cd);
    std::vector<std::set<size_t>> fast_sets;
    for (const auto& c : fast) fast_sets.emplace_back(c.begin(), c.end());
    std::sort(fast_sets.begin(), fast_sets.end());
    fast_sets.erase(std::unique(fast_sets.begin(), fast_sets.end()), fast_sets.end());

    std::vector<std::set<size_t>> reference;
    for (uint32_t mask = 1; mask < (1u << k); ++mask) {
      double lo = 1e18, hi = -1e18;
      std::set<size_t> members;
      for (size_t i = 0; i < k; ++i) {
        if (!(mask & (1u << i))) continue;
        members.insert(i);
        lo = std::min(lo, ranks[i]);
        hi = std::max(hi, ranks[i]);
      }
      if (members.size() < 2 || hi - lo > trial_cd + 1e-12) continue;
      bool maximal = true;
      for (size_t j = 0; j < k && maximal; ++j) {
        if (members.count(j)) continue;
        if (ranks[j] >= lo - 1e-12 && ranks[j] <= hi + 1e-12) maximal = false;
        if (std::max(hi, ranks[j]) - std::min(lo, ranks[j]) <= trial_cd + 1e-12) maximal = false;
      }
      if (maximal) reference.push_back(std::move(members));
    }
    std::sort(reference.begin(), reference.end());
    reference.erase(std::unique(reference.begin(), reference.end()), reference.end());
    if (fast_sets != reference) {
      detail = "clique mismatch at trial " + std::to_string(trial);
      return false;
    }
  }
  detail = "chi2(all-equal)=0, chi2(strict 3x4)=8.0, CD(3,4,.05)=" + str::format2(cd) +
           ", cliques == brute force on 1000 vectors";
  return true;
}

// ---- criterion 6: published-table replay --------------------------------------------------

bool criterion_published_tables(std::string& detail) {
  auto table = analysis::import_table_file("assets/external/zero_shot_by_target.json");
  const std::vector<std::string> expected = {
      "Otter", "LLaVA", "LaVIN", "LLaMA2-chat", "MiniGPT-4", "mPLUG-owl", "LLaMA-AdapterV2",
      "InstructBLIP"};
  std::vector<std::string> got;
  for (const auto& row : table.rows) {
    if (row.name == "Human" || row.name == "Random-Guess") continue;
    got.push_back(row.name);
  }
  if (got != expected) {
    detail = "overall ordering mismatch";
    return false;
  }

  auto before = analysis::import_table_file("assets/external/zero_shot_by_target.json");
  auto after = analysis::import_table_file("assets/external/tuned_by_target.json");
  auto gains = analysis::gain_table(before, after);
  std::string lavin_delta;
  for (const auto& row : gains.rows)
    if (row.name == "LaVIN") lavin_delta = str::format2(row.overall_delta);

  auto before_t = analysis::import_table_file("assets/external/zero_shot_by_type.json");
  auto after_t = analysis::import_table_file("assets/external/tuned_by_type.json");
  auto gains_t = analysis::gain_table(before_t, after_t);
  std::string adapter_yon;
  for (const auto& row : gains_t.rows) {
    if (row.name != "LLaMA-AdapterV2") continue;
    for (size_t i = 0; i < gains_t.columns.size(); ++i)
      if (gains_t.columns[i] == "YoN") adapter_yon = str::format2(row.delta[i]);
  }
  detail = "ordering ok, LaVIN overall +" + lavin_delta + ", LLaMA-AdapterV2 YoN " + adapter_yon;
  return lavin_delta == "22.28" && adapter_yon == "-4.27";
}

// ---- criterion 7: determinism across concurrency -------------------------------------------

bool criterion_determinism(std::string& detail) {
  std::string a = scratch("c7-a"), b = scratch("c7-b");
  for (const auto& [out, conc] : {std::pair{a, "1"}, std::pair{b, "8"}}) {
    int rc = cli::run({"gen-mcq", "--corpus", "assets/minicorpus/records.jsonl", "--target",
                       "all", "--count", "30", "--seed", "9", "--concurrency", conc, "--out",
                       out + "/suites", "--images-out", out + "/img", "--images-prefix",
                       "img"});
    if (rc != 0) {
      detail = "gen-mcq failed at concurrency " + std::string(conc);
      return false;
    }
    rc = cli::run({"gen-instruct", "--corpus", "assets/minicorpus/records.jsonl", "--count",
                   "60", "--seed", "9", "--concurrency", conc, "--out",
                   out + "/instructions.jsonl", "--images-out", out + "/img",
                   "--images-prefix", "img"});
    if (rc != 0) {
      detail = "gen-instruct failed at concurrency " + std::string(conc);
      return false;
    }
  }
  for (GroundingTarget target : kAllTargets) {
    std::string name = std::string("suites/") + str::lower(to_string(target)) + ".jsonl";
    if (file_bytes(fs::path(a) / name) != file_bytes(fs::path(b) / name)) {
      detail = name + " differs between concurrency 1 and 8";
      return false;
    }
  }
  if (file_bytes(fs::path(a) / "instructions.jsonl") !=
      file_bytes(fs::path(b) / "instructions.jsonl")) {
    detail = "instructions.jsonl differs between concurrency 1 and 8";
    return false;
  }
  detail = "6 suites + instruction corpus byte-identical at concurrency 1 vs 8";
  return true;
}

// ---- criterion 8: distractor invariants -------------------------------------------------------

bool criterion_distractors(std::string& detail) {
  std::string out = scratch("c8");
  int rc = cli::run({"gen-mcq", "--corpus", "assets/minicorpus/records.jsonl", "--target", "all",
                     "--count", "60", "--seed", "21", "--out", out + "/suites"});
  if (rc != 0) {
    detail = "gen-mcq failed";
    return false;
  }
  distractor::LexicalScorer scorer;
  size_t checked = 0, gold_clashes = 0, entity_over_threshold = 0;
  for (GroundingTarget target : kAllTargets) {
    auto items =
        load_items(fs::path(out) / "suites" / (str::lower(to_string(target)) + ".jsonl"));
    for (const auto& item : items) {
      const std::string gold =
          str::normalize_label(item.choices[static_cast<size_t>(item.correct_index)].text);
      for (size_t i = 0; i < item.choices.size(); ++i) {
        if (static_cast<int>(i) == item.correct_index) continue;
        if (item.question_type == QuestionType::YesOrNo) continue;
        if (item.choices[i].text == kNoneOfTheAbove) continue;
        ++checked;
        if (str::normalize_label(item.choices[i].text) == gold) ++gold_clashes;
        if (item.target == GroundingTarget::Entity &&
            scorer.score(item.gold_label, item.choices[i].text) >= 0.6)
          ++entity_over_threshold;
      }
    }
  }
  detail = std::to_string(checked) + " distractors swept, " + std::to_string(gold_clashes) +
           " equal to gold, " + std::to_string(entity_over_threshold) +
           " entity distractors at/over the 0.6 lexical threshold";
  return gold_clashes == 0 && entity_over_threshold == 0 && checked > 500;
}

// ---- criterion 9: rendering ----------------------------------------------------------------

bool criterion_rendering(std::string& detail) {
  std::string dir = scratch("c9");
  png::write_file(fs::path(dir) / "src.png", png::Raster::filled(200, 160, {240, 240, 240}));
  ImageRef image{"t", "img", dir + "/src.png", 200, 160};

  visprompt::RenderCache cache(fs::path(dir) / "out");
  auto path = cache.render(image, {{BBox{20, 30, 120, 110}, visprompt::green()}}, 3);
  auto raster = png::read_file(path);
  bool dims_ok = raster.width == 200 && raster.height == 160;
  bool corners_ok = raster.rgb_at(20, 30) == std::array<uint8_t, 3>{0, 255, 0} &&
                    raster.rgb_at(119, 109) == std::array<uint8_t, 3>{0, 255, 0} &&
                    raster.rgb_at(60, 70) == std::array<uint8_t, 3>{240, 240, 240};

  auto again = cache.render(image, {{BBox{20, 30, 120, 110}, visprompt::green()}}, 3);
  bool cache_ok = cache.hits() == 1 && again == path;

  auto red_path = cache.render(image, {{BBox{20, 30, 120, 110}, visprompt::red()}}, 3);
  auto red_raster = png::read_file(red_path);
  bool red_ok = red_raster.rgb_at(20, 30) == std::array<uint8_t, 3>{255, 0, 0};

  detail = std::string("corner pixels exact, dims preserved, cache hits=") +
           std::to_string(cache.hits());
  return dims_ok && corners_ok && cache_ok && red_ok;
}

// ---- criterion 10: instruction corpus -------------------------------------------------------

bool criterion_instructions(std::string& detail) {
  std::string out = scratch("c10");
  auto start = std::chrono::steady_clock::now();
  int rc = cli::run({"gen-instruct", "--corpus", "assets/minicorpus/records.jsonl", "--count",
                     "1000", "--seed", "77", "--out", out + "/instructions.jsonl",
                     "--images-out", out + "/img", "--images-prefix", "img"});
  double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (rc != 0) {
    detail = "gen-instruct failed";
    return false;
  }

  corpus::CorpusIndex index(corpus::ingest("assets/minicorpus/records.jsonl", "canonical"));
  size_t records = 0, audit_failures = 0, missing_verdicts = 0, factchecks = 0;
  jsonl::for_each_line(fs::path(out) / "instructions.jsonl", [&](size_t, const Json& j) {
    if (jsonl::is_meta_line(j)) return;
    ++records;
    auto rec = InstructionRecord::from_json(j);
    if (!instructgen::audit_provenance(rec, index).empty()) ++audit_failures;
    if (rec.instruction_type == InstructionType::FactCheck) {
      ++factchecks;
      const std::string& text = rec.turns.back().text;
      auto nl = text.find_last_of('\n');
      std::string final_line = str::trim(nl == std::string::npos ? text : text.substr(nl + 1));
      if (final_line != kVerdictConsistent && final_line != kVerdictInconsistent)
        ++missing_verdicts;
    }
  });
  char buf[200];
  std::snprintf(buf, sizeof(buf),
                "%zu records in %.1fs, %zu audit failures, %zu/%zu fact-checks missing verdicts",
                records, seconds, audit_failures, missing_verdicts, factchecks);
  detail = buf;
  return records == 1000 && seconds < 120.0 && audit_failures == 0 && missing_verdicts == 0 &&
         factchecks > 0;
}

}  // namespace

int main() {
  fs::current_path(MSG_REPO_ROOT);
  g_scratch = fs::temp_directory_path() / "msg-acceptance";
  fs::remove_all(g_scratch);
  fs::create_directories(g_scratch);

  std::vector<Criterion> criteria = {
      {1, "suite validity (demo >= 360 MCQs, zero violations, < 60 s)", criterion_suite_validity},
      {2, "random-guess arithmetic (33.33 overall, 50/25/25/25 per type)", criterion_random_guess},
      {3, "oracle 100.00 / constant-A 25±2 sanity", criterion_oracle_constant},
      {4, "extraction fixtures, regex cascade only", criterion_extraction},
      {5, "statistics oracle (friedman, nemenyi, cliques)", criterion_statistics},
      {6, "published-table replay (ordering and gains)", criterion_published_tables},
      {7, "determinism at concurrency 1 vs 8", criterion_determinism},
      {8, "distractor invariants (no gold clash, entity similarity)", criterion_distractors},
      {9, "box rendering exactness and cache reuse", criterion_rendering},
      {10, "instruction corpus scale, audit, verdicts", criterion_instructions},
  };

  int failures = 0;
  for (auto& criterion : criteria) {
    std::string detail;
    bool ok = false;
    try {
      ok = criterion.run(detail);
    } catch (const std::exception& e) {
      detail = std::string("exception: ") + e.what();
    }
    if (!ok) ++failures;
    std::printf("criterion %2d [%s] %s — %s\n", criterion.number, ok ? "PASS" : "FAIL",
                criterion.title.c_str(), detail.c_str());
    std::fflush(stdout);
  }
  if (failures > 0) std::printf("%d criterion(s) failed\n", failures);
  else std::printf("all %zu criteria passed\n", criteria.size());
  return failures == 0 ? 0 : 1;
}
