#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <regex>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "msg/jsonl.hpp"
#include "msg/parallel.hpp"
#include "msg/png.hpp"
#include "msg/rng.hpp"
#include "msg/strings.hpp"
#include "msg/types.hpp"

namespace msg::harness {

namespace fs = std::filesystem;

// ---- prompt formatting ----------------------------------------------------------

inline constexpr const char* kAnswerCue =
    "Answer with the letter of the correct choice.";

// Bit-exact prompt layout: body, blank line, one "(A) text" line per choice,
// then the fixed answer cue.
inline std::string format_prompt(const MCQItem& item) {
  std::string out = item.question_body;
  out += "\n\n";
  for (const auto& c : item.choices) {
    out += "(" + c.letter + ") " + c.text + "\n";
  }
  out += kAnswerCue;
  return out;
}

// ---- choice extraction -----------------------------------------------------------

enum class ExtractionMethod { Regex, FallbackService, None };

inline const char* to_string(ExtractionMethod m) {
  switch (m) {
    case ExtractionMethod::Regex: return "regex";
    case ExtractionMethod::FallbackService: return "fallback-service";
    case ExtractionMethod::None: return "none";
  }
  return "?";
}

struct Extraction {
  std::optional<std::string> letter;
  ExtractionMethod method = ExtractionMethod::None;
};

// Optional service-assisted fallback: given the raw response and the choice
// letters, returns the service's reply text (parsed with the same cascade).
using FallbackClient = std::function<std::string(const std::string& raw,
                                                 const std::vector<std::string>& letters)>;

namespace detail {

inline std::optional<std::string> first_valid_letter(const std::string& text,
                                                     const std::regex& re,
                                                     const std::set<std::string>& letters) {
  for (auto it = std::sregex_iterator(text.begin(), text.end(), re);
       it != std::sregex_iterator(); ++it) {
    std::string letter = str::lower((*it)[1].str());
    letter[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(letter[0])));
    if (letters.count(letter)) return letter;
  }
  return std::nullopt;
}

// Lowercased with punctuation collapsed to single spaces, so "No, it
// doesn't." matches the choice text "No.".
inline std::string token_form(std::string_view s) {
  std::string out;
  bool pending_space = false;
  for (unsigned char c : s) {
    if (std::isalnum(c)) {
      if (pending_space && !out.empty()) out.push_back(' ');
      pending_space = false;
      out.push_back(static_cast<char>(std::tolower(c)));
    } else {
      pending_space = true;
    }
  }
  return out;
}

}  // namespace detail

// Ordered regex cascade over the documented patterns; first match wins. A raw
// response that repeats a full choice text verbatim maps to that choice's
// letter. Returns nullopt when nothing matches and no fallback is configured.
inline Extraction extract_choice(const std::string& raw, const MCQItem& item,
                                 const FallbackClient& fallback = nullptr) {
  std::set<std::string> letters;
  std::vector<std::string> letter_list;
  for (const auto& c : item.choices) {
    letters.insert(c.letter);
    letter_list.push_back(c.letter);
  }

  static const std::regex re_bare(R"(^\s*\(?([A-Za-z])\)?[.:,]?\s*$)");
  static const std::regex re_paren(R"(\(([A-Za-z])\))");
  static const std::regex re_half_paren(R"(^\s*([A-Za-z])\))");
  static const std::regex re_choice_is(
      R"((?:choice|answer|option)\s+(?:is|would\s+be)[:\s]+[\"'\(]?([A-Za-z])\b)",
      std::regex::icase);
  static const std::regex re_answer_colon(R"((?:answer|choice)\s*:\s*[\"'\(]?([A-Za-z])\b)",
                                          std::regex::icase);
  static const std::regex re_option(R"(\boption\s+\(?([A-Za-z])\b)", std::regex::icase);

  const std::array<const std::regex*, 6> cascade = {&re_bare,      &re_paren,
                                                    &re_half_paren, &re_choice_is,
                                                    &re_answer_colon, &re_option};
  for (const auto* re : cascade) {
    if (auto letter = detail::first_valid_letter(raw, *re, letters))
      return {letter, ExtractionMethod::Regex};
  }

  // Choice-text match: exact (token form), then unambiguous whole-word
  // containment of exactly one choice's text.
  std::string norm_raw = detail::token_form(raw);
  std::optional<std::string> contained;
  bool ambiguous = false;
  for (const auto& c : item.choices) {
    std::string norm_choice = detail::token_form(c.text);
    if (norm_choice.empty()) continue;
    if (norm_raw == norm_choice) return {c.letter, ExtractionMethod::Regex};
    std::string padded = " " + norm_raw + " ";
    if (padded.find(" " + norm_choice + " ") != std::string::npos) {
      if (contained && *contained != c.letter) ambiguous = true;
      contained = c.letter;
    }
  }
  if (contained && !ambiguous) return {contained, ExtractionMethod::Regex};

  if (fallback) {
    try {
      std::string reply = fallback(raw, letter_list);
      for (const auto* re : cascade) {
        if (auto letter = detail::first_valid_letter(reply, *re, letters))
          return {letter, ExtractionMethod::FallbackService};
      }
    } catch (const FallbackUnavailable&) {
      // degrade to unextracted
    }
  }
  return {std::nullopt, ExtractionMethod::None};
}

// ---- respondents ------------------------------------------------------------------

struct RawReply {
  std::string text;
  long latency_ms = 0;
};

// The black box under evaluation: anything that maps (image, prompt) to text.
class Respondent {
public:
  virtual ~Respondent() = default;
  virtual std::string id() const = 0;
  virtual RawReply answer(const MCQItem& item, const std::string& prompt) = 0;
};

class OracleRespondent : public Respondent {
public:
  std::string id() const override { return "oracle"; }
  RawReply answer(const MCQItem& item, const std::string&) override {
    return {item.choices[static_cast<size_t>(item.correct_index)].letter, 0};
  }
};

class ConstantRespondent : public Respondent {
public:
  explicit ConstantRespondent(std::string letter) : letter_(std::move(letter)) {}
  std::string id() const override { return "constant-" + letter_; }
  RawReply answer(const MCQItem&, const std::string&) override { return {letter_, 0}; }

private:
  std::string letter_;
};

// Uniform over the item's letters; the draw is a pure function of
// (seed, item id) so concurrency and resume order never change answers.
class RandomRespondent : public Respondent {
public:
  explicit RandomRespondent(uint64_t seed) : seed_(seed) {}
  std::string id() const override { return "random-" + std::to_string(seed_); }
  RawReply answer(const MCQItem& item, const std::string&) override {
    RngStream rng(derive_stream(seed_, item.id, "random-respondent"));
    size_t pick = rng.bounded(item.choices.size());
    return {item.choices[pick].letter, 0};
  }

private:
  uint64_t seed_;
};

// ---- responses and scoring -----------------------------------------------------------

struct ModelResponse {
  std::string item_id;
  std::string raw;
  std::optional<std::string> letter;
  ExtractionMethod method = ExtractionMethod::None;
  long latency_ms = 0;
  std::string error;  // per-item failure, empty on success

  Json to_json() const {
    return Json{{"item_id", item_id},
                {"raw", raw},
                {"letter", letter ? Json(*letter) : Json(nullptr)},
                {"extraction", to_string(method)},
                {"latency_ms", latency_ms},
                {"error", error.empty() ? Json(nullptr) : Json(error)}};
  }

  static ModelResponse from_json(const Json& j) {
    ModelResponse r;
    r.item_id = j.at("item_id").get<std::string>();
    r.raw = j.value("raw", std::string{});
    if (j.contains("letter") && !j.at("letter").is_null())
      r.letter = j.at("letter").get<std::string>();
    std::string method = j.value("extraction", "none");
    r.method = method == "regex" ? ExtractionMethod::Regex
               : method == "fallback-service" ? ExtractionMethod::FallbackService
                                              : ExtractionMethod::None;
    r.latency_ms = j.value("latency_ms", 0L);
    if (j.contains("error") && !j.at("error").is_null())
      r.error = j.at("error").get<std::string>();
    return r;
  }
};

struct GroupScore {
  size_t correct = 0;
  size_t total = 0;
  double accuracy() const {
    return total == 0 ? 0.0 : str::round2(100.0 * static_cast<double>(correct) /
                                          static_cast<double>(total));
  }
};

struct EvalResult {
  std::string respondent;
  std::string suite_id;
  GroupScore overall;
  std::map<std::string, GroupScore> by_target;
  std::map<std::string, GroupScore> by_type;
  std::map<std::string, GroupScore> by_cell;  // "Target/Type"
  size_t unextracted = 0;

  Json to_json() const {
    auto groups = [](const std::map<std::string, GroupScore>& m) {
      Json out = Json::object();
      for (const auto& [k, g] : m)
        out[k] = Json{{"correct", g.correct}, {"total", g.total}, {"accuracy", g.accuracy()}};
      return out;
    };
    return Json{{"respondent", respondent},
                {"suite_id", suite_id},
                {"overall", Json{{"correct", overall.correct},
                                 {"total", overall.total},
                                 {"accuracy", overall.accuracy()}}},
                {"by_target", groups(by_target)},
                {"by_type", groups(by_type)},
                {"by_cell", groups(by_cell)},
                {"unextracted", unextracted}};
  }

  static EvalResult from_json(const Json& j) {
    EvalResult r;
    r.respondent = j.value("respondent", std::string{});
    r.suite_id = j.value("suite_id", std::string{});
    auto read_group = [](const Json& g) {
      GroupScore s;
      s.correct = g.at("correct").get<size_t>();
      s.total = g.at("total").get<size_t>();
      return s;
    };
    r.overall = read_group(j.at("overall"));
    for (const auto& [k, v] : j.at("by_target").items()) r.by_target[k] = read_group(v);
    for (const auto& [k, v] : j.at("by_type").items()) r.by_type[k] = read_group(v);
    if (j.contains("by_cell"))
      for (const auto& [k, v] : j.at("by_cell").items()) r.by_cell[k] = read_group(v);
    r.unextracted = j.value("unextracted", size_t{0});
    return r;
  }
};

// Content hash identifying a suite, so scores from different suites cannot be
// compared by accident.
inline std::string suite_id(const std::vector<MCQItem>& items) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (const auto& item : items) {
    h = str::fnv1a64(item.id, h);
    h = str::fnv1a64(item.question_body, h);
    h = str::fnv1a64(std::to_string(item.correct_index), h);
  }
  return str::hex64(h);
}

// Accuracy, overall and grouped by target and question type. Items without a
// stored response or without an extracted letter count as incorrect.
inline EvalResult score(const std::vector<MCQItem>& items,
                        const std::vector<ModelResponse>& responses,
                        const std::string& respondent_id = {}) {
  std::map<std::string, const MCQItem*> by_id;
  for (const auto& item : items) by_id[item.id] = &item;
  std::map<std::string, const ModelResponse*> resp_by_id;
  for (const auto& r : responses) {
    if (!by_id.count(r.item_id))
      throw ItemResponseMismatch("response for unknown item id '" + r.item_id + "'");
    resp_by_id[r.item_id] = &r;
  }

  EvalResult result;
  result.respondent = respondent_id;
  result.suite_id = suite_id(items);
  for (const auto& item : items) {
    bool correct = false;
    auto it = resp_by_id.find(item.id);
    if (it == resp_by_id.end() || !it->second->letter) {
      result.unextracted++;
    } else {
      correct = *it->second->letter ==
                item.choices[static_cast<size_t>(item.correct_index)].letter;
    }
    auto bump = [&](GroupScore& g) {
      g.total++;
      if (correct) g.correct++;
    };
    bump(result.overall);
    bump(result.by_target[to_string(item.target)]);
    bump(result.by_type[to_string(item.question_type)]);
    bump(result.by_cell[std::string(to_string(item.target)) + "/" +
                        to_string(item.question_type)]);
  }
  return result;
}

// ---- evaluation runs ---------------------------------------------------------------

struct RunOptions {
  size_t concurrency = 1;
  bool resume = true;
  FallbackClient fallback;  // optional service-assisted extraction
};

// Query a respondent over a suite, extract letters, and persist responses.
// Resumable: items with a stored answer are skipped; a stored error is
// retried. Output order equals item order regardless of completion order.
inline std::vector<ModelResponse> run_eval(Respondent& respondent,
                                           const std::vector<MCQItem>& items,
                                           const fs::path& out_path, const RunOptions& opts = {}) {
  std::map<std::string, ModelResponse> stored;
  if (opts.resume && fs::exists(out_path)) {
    jsonl::for_each_line(out_path, [&](size_t, const Json& j) {
      if (jsonl::is_meta_line(j)) return;
      ModelResponse r = ModelResponse::from_json(j);
      if (r.error.empty()) stored[r.item_id] = std::move(r);
    });
  }

  std::vector<const MCQItem*> todo;
  for (const auto& item : items)
    if (!stored.count(item.id)) todo.push_back(&item);

  // Fresh responses append to the store as each wave completes, so a crashed
  // run keeps its progress; the file is rewritten in item order at the end.
  std::ofstream append_log;
  if (!todo.empty()) {
    if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
    append_log.open(out_path, std::ios::app);
  }
  std::vector<ModelResponse> fresh(todo.size());
  size_t done = 0;
  while (done < todo.size()) {
    size_t wave = std::min(todo.size() - done, std::max<size_t>(opts.concurrency, 1) * 4);
    parallel::for_indices(wave, opts.concurrency, [&](size_t i) {
      const MCQItem& item = *todo[done + i];
      ModelResponse r;
      r.item_id = item.id;
      try {
        RawReply reply = respondent.answer(item, format_prompt(item));
        r.raw = reply.text;
        r.latency_ms = reply.latency_ms;
        auto extraction = extract_choice(r.raw, item, opts.fallback);
        r.letter = extraction.letter;
        r.method = extraction.method;
      } catch (const Error& e) {
        r.error = e.what();
      }
      fresh[done + i] = std::move(r);
    });
    for (size_t i = done; i < done + wave; ++i)
      append_log << fresh[i].to_json().dump() << "\n";
    append_log.flush();
    done += wave;
  }
  append_log.close();

  // Persist in item order: previously stored responses keep their place,
  // fresh ones slot in where their item sits.
  std::map<std::string, const ModelResponse*> fresh_by_id;
  for (const auto& r : fresh) fresh_by_id[r.item_id] = &r;
  std::vector<ModelResponse> ordered;
  ordered.reserve(items.size());
  for (const auto& item : items) {
    auto it = stored.find(item.id);
    if (it != stored.end()) {
      ordered.push_back(it->second);
    } else {
      ordered.push_back(*fresh_by_id.at(item.id));
    }
  }

  jsonl::Writer writer(out_path);
  writer.write_meta(Json{{"respondent", respondent.id()}, {"suite_id", suite_id(items)}});
  for (const auto& r : ordered) writer.write(r.to_json());
  writer.commit();
  return ordered;
}

}  // namespace msg::harness
