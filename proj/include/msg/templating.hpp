#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "msg/errors.hpp"
#include "msg/rng.hpp"
#include "msg/strings.hpp"
#include "msg/types.hpp"

namespace msg::templating {

namespace fs = std::filesystem;

// Template kinds cover the four MCQ question types plus the sentence and
// conversation skeletons that reuse the same grammar.
enum class TemplateKind {
  YesOrNo,
  FillInTheBlank,
  What,
  Correction,
  Description,      // record -> declarative sentence
  InstructQuestion, // user turn
  InstructAnswer,   // model turn
};

inline const char* to_string(TemplateKind k) {
  switch (k) {
    case TemplateKind::YesOrNo: return "yes-or-no";
    case TemplateKind::FillInTheBlank: return "fill-in-the-blank";
    case TemplateKind::What: return "what";
    case TemplateKind::Correction: return "correction";
    case TemplateKind::Description: return "description";
    case TemplateKind::InstructQuestion: return "instruct-question";
    case TemplateKind::InstructAnswer: return "instruct-answer";
  }
  return "?";
}

inline std::optional<TemplateKind> kind_from_string(std::string_view s) {
  std::string n = str::normalize_label(s);
  if (n == "yes-or-no") return TemplateKind::YesOrNo;
  if (n == "fill-in-the-blank") return TemplateKind::FillInTheBlank;
  if (n == "what") return TemplateKind::What;
  if (n == "correction") return TemplateKind::Correction;
  if (n == "description") return TemplateKind::Description;
  if (n == "instruct-question") return TemplateKind::InstructQuestion;
  if (n == "instruct-answer") return TemplateKind::InstructAnswer;
  return std::nullopt;
}

inline std::optional<QuestionType> to_question_type(TemplateKind k) {
  switch (k) {
    case TemplateKind::YesOrNo: return QuestionType::YesOrNo;
    case TemplateKind::FillInTheBlank: return QuestionType::FillInTheBlank;
    case TemplateKind::What: return QuestionType::What;
    case TemplateKind::Correction: return QuestionType::Correction;
    default: return std::nullopt;
  }
}

inline TemplateKind kind_of(QuestionType q) {
  switch (q) {
    case QuestionType::YesOrNo: return TemplateKind::YesOrNo;
    case QuestionType::FillInTheBlank: return TemplateKind::FillInTheBlank;
    case QuestionType::What: return TemplateKind::What;
    case QuestionType::Correction: return TemplateKind::Correction;
  }
  return TemplateKind::What;
}

enum class SlotKind {
  GroundTruth,
  Distractor1,
  Distractor2,
  Distractor3,
  Yes,
  No,
  NoneOfTheAbove,
};

inline const char* to_string(SlotKind s) {
  switch (s) {
    case SlotKind::GroundTruth: return "ground-truth";
    case SlotKind::Distractor1: return "distractor#1";
    case SlotKind::Distractor2: return "distractor#2";
    case SlotKind::Distractor3: return "distractor#3";
    case SlotKind::Yes: return "yes";
    case SlotKind::No: return "no";
    case SlotKind::NoneOfTheAbove: return "none-of-the-above";
  }
  return "?";
}

struct Template {
  std::string id;
  TemplateKind kind = TemplateKind::What;
  std::optional<GroundingTarget> target;       // required for MCQ and description kinds
  std::optional<InstructionType> family;       // required for instruct kinds
  std::string body;
  std::vector<SlotKind> slots;
  std::vector<std::string> placeholders;  // declared, in declaration order

  bool has_placeholder(std::string_view name) const {
    for (const auto& p : placeholders)
      if (p == name) return true;
    return false;
  }
};

using Bindings = std::map<std::string, std::string>;

namespace detail {

inline std::optional<SlotKind> slot_from_string(std::string_view s) {
  std::string n = str::trim(s);
  if (n == "ground-truth") return SlotKind::GroundTruth;
  if (n == "distractor#1") return SlotKind::Distractor1;
  if (n == "distractor#2") return SlotKind::Distractor2;
  if (n == "distractor#3") return SlotKind::Distractor3;
  if (n == "yes") return SlotKind::Yes;
  if (n == "no") return SlotKind::No;
  if (n == "none-of-the-above") return SlotKind::NoneOfTheAbove;
  return std::nullopt;
}

inline bool valid_placeholder_name(std::string_view name) {
  if (name.empty() || name.front() == '-' || name.back() == '-') return false;
  bool prev_dash = false;
  for (char c : name) {
    bool ok = (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '-';
    if (!ok) return false;
    if (c == '-' && prev_dash) return false;
    prev_dash = c == '-';
  }
  return true;
}

// Scan placeholders out of a body. Positions are byte offsets of '['.
inline std::vector<std::pair<size_t, std::string>> scan_placeholders(const std::string& body) {
  std::vector<std::pair<size_t, std::string>> found;
  for (size_t i = 0; i < body.size(); ++i) {
    if (body[i] != '[') continue;
    size_t close = body.find(']', i);
    if (close == std::string::npos)
      throw GrammarError("unclosed placeholder at offset " + std::to_string(i) +
                         ", expected ']'");
    std::string name = body.substr(i + 1, close - i - 1);
    if (!valid_placeholder_name(name))
      throw GrammarError("invalid placeholder name '[" + name + "]' at offset " +
                         std::to_string(i) + ", expected kebab-case");
    found.emplace_back(i, std::move(name));
    i = close;
  }
  return found;
}

inline void validate_slots(const Template& t) {
  size_t ground = 0, distractors = 0, nota = 0, yes = 0, no = 0;
  for (SlotKind s : t.slots) {
    switch (s) {
      case SlotKind::GroundTruth: ++ground; break;
      case SlotKind::Distractor1:
      case SlotKind::Distractor2:
      case SlotKind::Distractor3: ++distractors; break;
      case SlotKind::NoneOfTheAbove: ++nota; break;
      case SlotKind::Yes: ++yes; break;
      case SlotKind::No: ++no; break;
    }
  }
  if (ground > 1)
    throw DuplicateGroundTruthSlot("template '" + t.id + "' declares " +
                                   std::to_string(ground) + " ground-truth slots");
  switch (t.kind) {
    case TemplateKind::YesOrNo:
      if (t.slots.size() != 2 || t.slots[0] != SlotKind::Yes || t.slots[1] != SlotKind::No)
        throw GrammarError("template '" + t.id + "': yes-or-no slots must be 'yes, no'");
      break;
    case TemplateKind::FillInTheBlank:
    case TemplateKind::What:
      if (ground != 1 || distractors != 3 || nota + yes + no != 0 || t.slots.size() != 4)
        throw GrammarError("template '" + t.id +
                           "': expected ground-truth plus three distractor slots");
      break;
    case TemplateKind::Correction:
      if (nota == 0)
        throw MissingNoneOfTheAbove("template '" + t.id +
                                    "' is a correction template without a none-of-the-above slot");
      if (ground != 1 || distractors != 2 || nota != 1 || t.slots.size() != 4)
        throw GrammarError("template '" + t.id +
                           "': correction slots must be ground-truth, two distractors, "
                           "none-of-the-above");
      if (t.slots.back() != SlotKind::NoneOfTheAbove)
        throw GrammarError("template '" + t.id + "': none-of-the-above must be the last slot");
      break;
    default:
      if (!t.slots.empty())
        throw GrammarError("template '" + t.id + "': " + to_string(t.kind) +
                           " templates take no choice slots");
      break;
  }
}

}  // namespace detail

// Parse one template source (header block, blank line, body).
inline Template parse_template(const std::string& source) {
  Template t;
  std::vector<std::string> lines = str::split(source, '\n');
  size_t i = 0;
  bool saw_type = false;
  for (; i < lines.size(); ++i) {
    std::string line = str::trim(lines[i]);
    if (line.empty()) break;  // header/body separator
    if (line.front() == '#') continue;
    size_t colon = line.find(':');
    if (colon == std::string::npos)
      throw GrammarError("line " + std::to_string(i + 1) + ": expected 'key: value', got '" +
                         line + "'");
    std::string key = str::trim(line.substr(0, colon));
    std::string value = str::trim(line.substr(colon + 1));
    if (key == "id") {
      t.id = value;
    } else if (key == "type") {
      auto k = kind_from_string(value);
      if (!k)
        throw GrammarError("line " + std::to_string(i + 1) + ": unknown template type '" +
                           value + "'");
      t.kind = *k;
      saw_type = true;
    } else if (key == "target") {
      if (str::normalize_label(value) != "any") {
        auto tgt = target_from_string(value);
        if (!tgt)
          throw GrammarError("line " + std::to_string(i + 1) + ": unknown target '" + value + "'");
        t.target = tgt;
      }
    } else if (key == "family") {
      auto fam = instruction_type_from_string(value);
      if (!fam)
        throw GrammarError("line " + std::to_string(i + 1) + ": unknown family '" + value + "'");
      t.family = fam;
    } else if (key == "slots") {
      for (const auto& tok : str::split_list(value)) {
        auto s = detail::slot_from_string(tok);
        if (!s)
          throw GrammarError("line " + std::to_string(i + 1) + ": unknown slot kind '" + tok +
                             "'");
        t.slots.push_back(*s);
      }
    } else if (key == "placeholders") {
      for (const auto& tok : str::split_list(value)) {
        if (!detail::valid_placeholder_name(tok))
          throw GrammarError("line " + std::to_string(i + 1) +
                             ": invalid placeholder name '" + tok + "'");
        t.placeholders.push_back(tok);
      }
    } else {
      throw GrammarError("line " + std::to_string(i + 1) + ": unknown header key '" + key + "'");
    }
  }
  if (t.id.empty()) throw GrammarError("template header missing 'id'");
  if (!saw_type) throw GrammarError("template '" + t.id + "' missing 'type'");

  // Body: everything after the separator, outer blank lines trimmed.
  size_t body_start = i + 1;
  size_t body_end = lines.size();
  while (body_start < body_end && str::trim(lines[body_start]).empty()) ++body_start;
  while (body_end > body_start && str::trim(lines[body_end - 1]).empty()) --body_end;
  std::string body;
  for (size_t k = body_start; k < body_end; ++k) {
    if (k > body_start) body.push_back('\n');
    body += lines[k];
  }
  t.body = body;
  if (t.body.empty()) throw GrammarError("template '" + t.id + "' has an empty body");

  for (const auto& [pos, name] : detail::scan_placeholders(t.body)) {
    if (!t.has_placeholder(name))
      throw GrammarError("template '" + t.id + "': placeholder '[" + name +
                         "]' at offset " + std::to_string(pos) + " is not declared");
  }
  bool needs_target = t.kind == TemplateKind::YesOrNo || t.kind == TemplateKind::FillInTheBlank ||
                      t.kind == TemplateKind::What || t.kind == TemplateKind::Correction ||
                      t.kind == TemplateKind::Description;
  if (needs_target && !t.target)
    throw GrammarError("template '" + t.id + "' requires a target");
  if ((t.kind == TemplateKind::InstructQuestion || t.kind == TemplateKind::InstructAnswer) &&
      !t.family)
    throw GrammarError("template '" + t.id + "' requires a family");
  detail::validate_slots(t);
  return t;
}

struct Rendered {
  std::string body;
  std::vector<std::string> choices;
  int correct_index = 0;
};

// Placeholder substitution with output spans (code-point ranges per
// placeholder occurrence, in body order). Used when a later step needs to
// splice a rendered description.
inline std::string substitute(const std::string& body, const Bindings& bindings,
                              std::map<std::string, std::vector<std::pair<size_t, size_t>>>*
                                  spans_out = nullptr) {
  std::string out;
  out.reserve(body.size());
  for (size_t i = 0; i < body.size(); ++i) {
    if (body[i] != '[') {
      out.push_back(body[i]);
      continue;
    }
    size_t close = body.find(']', i);
    std::string name = body.substr(i + 1, close - i - 1);
    auto it = bindings.find(name);
    if (it == bindings.end() || it->second.empty())
      throw MissingBinding("no binding for placeholder '[" + name + "]'");
    if (spans_out) {
      size_t start_cp = str::cp_length(out);
      (*spans_out)[name].emplace_back(start_cp, start_cp + str::cp_length(it->second));
    }
    out += it->second;
    i = close;
  }
  return out;
}

inline std::string slot_binding_key(SlotKind s) { return to_string(s); }

// Render a question: substitute the body and lay out the choice texts.
// `correct_position` is where the correct choice lands; for templates with a
// none-of-the-above slot, passing the last position selects it as correct and
// the ground-truth binding is laid out like a distractor.
inline Rendered render(const Template& t, const Bindings& bindings, int correct_position) {
  for (const auto& name : t.placeholders) {
    auto it = bindings.find(name);
    if (it == bindings.end() || it->second.empty())
      throw MissingBinding("template '" + t.id + "': no binding for placeholder '[" + name +
                           "]'");
  }
  Rendered r;
  r.body = substitute(t.body, bindings);

  if (t.kind == TemplateKind::YesOrNo) {
    if (correct_position < 0 || correct_position > 1)
      throw GrammarError("yes-or-no correct position must be 0 or 1");
    r.choices = {"Yes.", "No."};
    r.correct_index = correct_position;
    return r;
  }
  if (t.slots.empty()) {
    r.correct_index = -1;
    return r;  // description / instruct templates render body only
  }

  const int n = static_cast<int>(t.slots.size());
  if (correct_position < 0 || correct_position >= n)
    throw GrammarError("correct position " + std::to_string(correct_position) +
                       " out of range for " + std::to_string(n) + " slots");
  const bool has_nota = t.slots.back() == SlotKind::NoneOfTheAbove;
  if (has_nota && correct_position == n - 1) {
    // none-of-the-above is the correct choice
  } else if (has_nota || correct_position < n) {
    // ground-truth binding must exist
    auto it = bindings.find("ground-truth");
    if (it == bindings.end() || it->second.empty())
      throw MissingBinding("template '" + t.id + "': no binding for slot 'ground-truth'");
  }

  r.choices.assign(static_cast<size_t>(n), {});
  if (has_nota) r.choices[static_cast<size_t>(n - 1)] = kNoneOfTheAbove;

  std::vector<std::string> fillers;  // non-NOTA slot texts in declared order
  bool gt_pinned = !(has_nota && correct_position == n - 1);
  for (SlotKind s : t.slots) {
    if (s == SlotKind::NoneOfTheAbove) continue;
    if (s == SlotKind::GroundTruth && gt_pinned) continue;
    auto it = bindings.find(slot_binding_key(s));
    if (it == bindings.end() || it->second.empty())
      throw MissingBinding("template '" + t.id + "': no binding for slot '" +
                           slot_binding_key(s) + "'");
    fillers.push_back(it->second);
  }
  if (gt_pinned) r.choices[static_cast<size_t>(correct_position)] = bindings.at("ground-truth");

  size_t next = 0;
  for (int pos = 0; pos < n; ++pos) {
    if (!r.choices[static_cast<size_t>(pos)].empty()) continue;
    r.choices[static_cast<size_t>(pos)] = fillers.at(next++);
  }
  r.correct_index = correct_position;
  return r;
}

// Canonical presentation of one choice: "(A) text".
inline std::string format_choice(int index, const std::string& text) {
  return "(" + choice_letter(index) + ") " + text;
}

class TemplatePool {
public:
  void add(Template t) {
    if (by_id_.count(t.id))
      throw DuplicateTemplateId("template id '" + t.id + "' declared more than once");
    templates_.push_back(std::move(t));
    rebuild_index();
  }

  size_t size() const { return templates_.size(); }

  const Template* by_id(const std::string& id) const {
    auto it = by_id_.find(id);
    return it == by_id_.end() ? nullptr : &templates_[it->second];
  }

  // Templates of a kind for a target; templates declared `target: any` match
  // every target.
  std::vector<const Template*> cell(TemplateKind kind, GroundingTarget target) const {
    std::vector<const Template*> out;
    for (const auto& t : templates_) {
      if (t.kind != kind) continue;
      if (t.target && *t.target != target) continue;
      out.push_back(&t);
    }
    return out;
  }

  std::vector<const Template*> family_cell(TemplateKind kind, InstructionType family,
                                           std::optional<GroundingTarget> target) const {
    std::vector<const Template*> out;
    for (const auto& t : templates_) {
      if (t.kind != kind || t.family != family) continue;
      if (target && t.target && *t.target != *target) continue;
      if (target && !t.target) continue;
      if (!target && t.target) continue;
      out.push_back(&t);
    }
    return out;
  }

  // The (question type, target) grid the shipped pool must cover.
  static std::vector<std::pair<TemplateKind, GroundingTarget>> required_cells() {
    std::vector<std::pair<TemplateKind, GroundingTarget>> cells;
    for (GroundingTarget t : kAllTargets) {
      cells.emplace_back(TemplateKind::YesOrNo, t);
      cells.emplace_back(TemplateKind::Correction, t);
      if (t == GroundingTarget::Entity || t == GroundingTarget::Number)
        cells.emplace_back(TemplateKind::FillInTheBlank, t);
      else
        cells.emplace_back(TemplateKind::What, t);
    }
    return cells;
  }

  void verify_mcq_cells() const {
    for (const auto& [kind, target] : required_cells()) {
      if (cell(kind, target).empty())
        throw EmptyCell(std::string("template pool has no (") + to_string(kind) + ", " +
                        to_string(target) + ") templates");
    }
  }

private:
  void rebuild_index() {
    by_id_.clear();
    for (size_t i = 0; i < templates_.size(); ++i) by_id_[templates_[i].id] = i;
  }

  std::vector<Template> templates_;
  std::map<std::string, size_t> by_id_;
};

// Load every `*.tmpl` file under `dir`. Files may hold several templates
// separated by `---` lines. With `require_mcq_cells` the pool must cover the
// full MCQ grid.
inline TemplatePool load_pool(const fs::path& dir, bool require_mcq_cells = true) {
  if (!fs::is_directory(dir)) throw IoError("template pool directory not found: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".tmpl")
      files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());

  TemplatePool pool;
  for (const auto& file : files) {
    std::ifstream in(file);
    if (!in) throw IoError("cannot open " + file.string());
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::string section;
    auto flush = [&]() {
      if (str::trim(section).empty()) {
        section.clear();
        return;
      }
      try {
        pool.add(parse_template(section));
      } catch (const Error& e) {
        if (dynamic_cast<const DuplicateTemplateId*>(&e)) throw;
        throw GrammarError(file.filename().string() + ": " + e.what());
      }
      section.clear();
    };
    for (const auto& line : str::split(content, '\n')) {
      if (str::trim(line) == "---") {
        flush();
        continue;
      }
      section += line;
      section.push_back('\n');
    }
    flush();
  }
  if (require_mcq_cells) pool.verify_mcq_cells();
  return pool;
}

}  // namespace msg::templating
