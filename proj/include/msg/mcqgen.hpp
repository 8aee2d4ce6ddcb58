#pragma once

#include <algorithm>
#include <array>
#include <cstdio>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "msg/corpus.hpp"
#include "msg/describe.hpp"
#include "msg/distractor.hpp"
#include "msg/parallel.hpp"
#include "msg/rng.hpp"
#include "msg/templating.hpp"
#include "msg/types.hpp"
#include "msg/visprompt.hpp"

namespace msg::mcqgen {

using templating::Template;
using templating::TemplateKind;
using templating::TemplatePool;

// Shared collaborators for item assembly. The render cache is optional;
// without it, templates that need a drawn box are simply ineligible.
struct AssemblyContext {
  const TemplatePool* pool = nullptr;
  const distractor::Thesaurus* thesaurus = nullptr;
  const distractor::SimilarityScorer* scorer = nullptr;
  double sim_threshold = 0.6;
  size_t candidate_k = 15;
  visprompt::RenderCache* render_cache = nullptr;
  int stroke = 3;
};

// Candidate pipeline: sample k, similarity-filter (Entity golds only: the
// other targets' thesaurus pools carry curated antonym exclusions), then
// select n without replacement. Number golds keep the +-5 window preference
// through the final selection.
inline std::vector<std::string> pick_distractors(const AssemblyContext& ctx,
                                                 GroundingTarget target, const std::string& gold,
                                                 size_t n, RngStream& rng) {
  std::vector<std::string> candidates;
  try {
    candidates = distractor::sample_candidates(*ctx.thesaurus, target, gold, ctx.candidate_k, rng);
  } catch (const PoolTooSmall& e) {
    throw InsufficientDistractors(e.what());
  }
  if (target == GroundingTarget::Entity)
    candidates = distractor::similarity_filter(gold, candidates, *ctx.scorer, ctx.sim_threshold);
  if (target == GroundingTarget::Number) {
    if (auto gold_value = distractor::numeral_value(gold)) {
      std::vector<std::string> window, rest;
      for (auto& c : candidates) {
        auto v = distractor::numeral_value(c);
        (v && std::abs(*v - *gold_value) <= 5 ? window : rest).push_back(c);
      }
      if (window.size() >= n) return distractor::select_distractors(window, n, rng);
      auto out = window;
      auto fill = distractor::select_distractors(rest, n - window.size(), rng);
      out.insert(out.end(), fill.begin(), fill.end());
      return out;
    }
  }
  return distractor::select_distractors(candidates, n, rng);
}

namespace detail {

inline bool bindable(const Template& t, const templating::Bindings& available) {
  for (const auto& name : t.placeholders)
    if (!available.count(name)) return false;
  return true;
}

inline const Template* pick_template(const std::vector<const Template*>& cell,
                                     const templating::Bindings& available, RngStream& rng,
                                     std::string* skip_reason) {
  std::vector<const Template*> eligible;
  for (const auto* t : cell)
    if (bindable(*t, available)) eligible.push_back(t);
  if (eligible.empty()) {
    if (skip_reason) *skip_reason = "no template fits the record's available bindings";
    return nullptr;
  }
  return eligible[rng.bounded(eligible.size())];
}

// Render the record's box and bind [bbox-color]; returns the rendered path.
inline std::optional<std::string> attach_box(const AssemblyContext& ctx, const ImageRef& image,
                                             const BBox& box, templating::Bindings& bindings,
                                             RngStream& rng) {
  if (!ctx.render_cache) return std::nullopt;
  visprompt::PromptColor color = visprompt::choose_prompt_color(rng);
  int stroke = ctx.stroke > 0 ? ctx.stroke : visprompt::default_stroke(image.width, image.height);
  auto path = ctx.render_cache->render(image, {{box, color}}, stroke);
  bindings["bbox-color"] = color.name;
  return path.generic_string();
}

// Gold must not survive in the question body after blanking.
inline bool gold_leaks(const std::string& blanked, const std::string& gold) {
  std::string hay = " " + str::normalize_label(blanked) + " ";
  std::string needle = " " + str::normalize_label(gold) + " ";
  return hay.find(needle) != std::string::npos;
}

}  // namespace detail

// Can a model identify whether a textual description is appropriate for the
// image? `answer_yes` chooses the branch: keep the correct description or
// negatively replace the gold span.
inline MCQItem assemble_yes_or_no(const SourceRecord& rec, const Template& tmpl, RngStream& rng,
                                  const AssemblyContext& ctx, bool answer_yes) {
  GroundingTarget target = *tmpl.target;
  std::string skip;
  auto described = describe::build(rec, target, *ctx.pool, rng, &skip);
  if (!described) throw InsufficientDistractors(skip);

  std::string shown = described->text;
  if (!answer_yes) {
    auto replacement = pick_distractors(ctx, target, described->gold, 1, rng);
    shown = distractor::negative_replace(described->text, described->gold_span, replacement[0]);
  }
  templating::Bindings bindings{{"description", shown},
                                {"target-aspect", target_aspect(target)}};
  auto rendered = templating::render(tmpl, bindings, answer_yes ? 0 : 1);

  MCQItem item;
  item.image = record_image(rec);
  item.target = target;
  item.question_type = QuestionType::YesOrNo;
  item.question_body = rendered.body;
  for (size_t i = 0; i < rendered.choices.size(); ++i)
    item.choices.push_back({choice_letter(static_cast<int>(i)), rendered.choices[i]});
  item.correct_index = rendered.correct_index;
  item.gold_label = described->gold;
  item.provenance.template_id = tmpl.id;
  item.provenance.record_id = record_id(rec);
  return item;
}

// Blank the target span out of a caption; the span text is the correct
// choice among three sampled distractors.
inline MCQItem assemble_fill_in_blank(const SourceRecord& rec, const Template& tmpl,
                                      RngStream& rng, const AssemblyContext& ctx) {
  GroundingTarget target = *tmpl.target;
  std::string skip;
  auto described = describe::build(rec, target, *ctx.pool, rng, &skip);
  if (!described) throw InsufficientDistractors(skip);

  std::string blanked =
      str::cp_splice(described->text, described->gold_span.first, described->gold_span.second,
                     kBlankMarker);
  if (detail::gold_leaks(blanked, described->gold))
    throw InsufficientDistractors("gold label still present after blanking");

  auto distractors = pick_distractors(ctx, target, described->gold, 3, rng);
  templating::Bindings bindings{{"blanked-caption", blanked},
                                {"target-aspect", target_aspect(target)},
                                {"ground-truth", described->gold},
                                {"distractor#1", distractors[0]},
                                {"distractor#2", distractors[1]},
                                {"distractor#3", distractors[2]}};
  std::optional<std::string> rendered_path;
  if (described->bbox && tmpl.has_placeholder("bbox-color"))
    rendered_path = detail::attach_box(ctx, record_image(rec), *described->bbox, bindings, rng);

  auto rendered = templating::render(tmpl, bindings, static_cast<int>(rng.bounded(4)));

  MCQItem item;
  item.image = record_image(rec);
  item.rendered_image = rendered_path;
  item.target = target;
  item.question_type = QuestionType::FillInTheBlank;
  item.question_body = rendered.body;
  for (size_t i = 0; i < rendered.choices.size(); ++i)
    item.choices.push_back({choice_letter(static_cast<int>(i)), rendered.choices[i]});
  item.correct_index = rendered.correct_index;
  item.gold_label = described->gold;
  item.provenance.template_id = tmpl.id;
  item.provenance.record_id = record_id(rec);
  return item;
}

// Recognize the attribute or predicate of the object the question points at
// (usually via a drawn bounding box).
inline MCQItem assemble_what(const SourceRecord& rec, const Template& tmpl, RngStream& rng,
                             const AssemblyContext& ctx) {
  GroundingTarget target = *tmpl.target;

  std::string gold;
  templating::Bindings bindings{{"target-aspect", target_aspect(target)}};
  std::optional<BBox> box;
  if (const auto* obj = std::get_if<ObjectRecord>(&rec)) {
    auto attr = obj->attribute(target == GroundingTarget::Color ? "color" : "material");
    if (!attr || target == GroundingTarget::Action || target == GroundingTarget::Spatial)
      throw InsufficientDistractors(std::string("record lacks the ") + target_aspect(target) +
                                    " attribute");
    gold = *attr;
    bindings["obj-attr"] = obj->category;
    bindings["category"] = obj->category;
    box = obj->bbox;
  } else if (const auto* rel = std::get_if<RelationRecord>(&rec)) {
    gold = rel->predicate;
    bindings["subject"] = rel->subject.category;
    bindings["object"] = rel->object.category;
    box = rel->subject.bbox;
  } else {
    throw InsufficientDistractors("caption records do not carry What-question ground truth");
  }

  auto distractors = pick_distractors(ctx, target, gold, 3, rng);
  bindings["ground-truth"] = gold;
  bindings["distractor#1"] = distractors[0];
  bindings["distractor#2"] = distractors[1];
  bindings["distractor#3"] = distractors[2];

  std::optional<std::string> rendered_path;
  if (box && tmpl.has_placeholder("bbox-color"))
    rendered_path = detail::attach_box(ctx, record_image(rec), *box, bindings, rng);

  auto rendered = templating::render(tmpl, bindings, static_cast<int>(rng.bounded(4)));

  MCQItem item;
  item.image = record_image(rec);
  item.rendered_image = rendered_path;
  item.target = target;
  item.question_type = QuestionType::What;
  item.question_body = rendered.body;
  for (size_t i = 0; i < rendered.choices.size(); ++i)
    item.choices.push_back({choice_letter(static_cast<int>(i)), rendered.choices[i]});
  item.correct_index = rendered.correct_index;
  item.gold_label = gold;
  item.provenance.template_id = tmpl.id;
  item.provenance.record_id = record_id(rec);
  return item;
}

// Identify the inconsistency and propose the right correction. In the
// grounded branch the description is kept and "none of the above" is the
// answer; otherwise the gold label is the correct correction.
inline MCQItem assemble_correction(const SourceRecord& rec, const Template& tmpl, RngStream& rng,
                                   const AssemblyContext& ctx, bool grounded) {
  GroundingTarget target = *tmpl.target;
  std::string skip;
  auto described = describe::build(rec, target, *ctx.pool, rng, &skip);
  if (!described) throw InsufficientDistractors(skip);

  auto wrong = pick_distractors(ctx, target, described->gold, 3, rng);

  std::string shown = described->text;
  templating::Bindings bindings{{"target-aspect", target_aspect(target)}};
  int correct_position;
  if (grounded) {
    // description stays correct; all three labelled corrections are wrong
    bindings["ground-truth"] = wrong[0];
    bindings["distractor#1"] = wrong[1];
    bindings["distractor#2"] = wrong[2];
    correct_position = 3;
  } else {
    shown = distractor::negative_replace(described->text, described->gold_span, wrong[0]);
    bindings["ground-truth"] = described->gold;
    bindings["distractor#1"] = wrong[1];
    bindings["distractor#2"] = wrong[2];
    correct_position = static_cast<int>(rng.bounded(3));
  }
  bindings["description"] = shown;

  auto rendered = templating::render(tmpl, bindings, correct_position);

  MCQItem item;
  item.image = record_image(rec);
  item.target = target;
  item.question_type = QuestionType::Correction;
  item.question_body = rendered.body;
  for (size_t i = 0; i < rendered.choices.size(); ++i)
    item.choices.push_back({choice_letter(static_cast<int>(i)), rendered.choices[i]});
  item.correct_index = rendered.correct_index;
  item.gold_label = described->gold;
  item.provenance.template_id = tmpl.id;
  item.provenance.record_id = record_id(rec);
  return item;
}

// ---- answer balancing -----------------------------------------------------------

namespace detail {

inline bool nota_pinned(const MCQItem& item) {
  return item.question_type == QuestionType::Correction && !item.choices.empty() &&
         item.choices.back().text == kNoneOfTheAbove;
}

// Move the correct choice of a 4-way item to `letter_index` by swapping the
// two texts; letters stay in place, none-of-the-above never moves.
inline void place_correct_at(MCQItem& item, int letter_index) {
  if (item.correct_index == letter_index) return;
  std::swap(item.choices[static_cast<size_t>(item.correct_index)].text,
            item.choices[static_cast<size_t>(letter_index)].text);
  item.correct_index = letter_index;
}

}  // namespace detail

// Permute choice orders so correct letters are evenly spread within each
// (target, question type) group of 4-way items. None-of-the-above stays
// pinned last, so grounded Correction items keep their letter and consume
// that quota. Yes-or-No items keep the fixed "(A) Yes. (B) No." form; their
// balance comes from the assembly branch quotas.
inline void balance_answers(std::vector<MCQItem>& items, RngStream& rng) {
  std::map<std::pair<GroundingTarget, QuestionType>, std::vector<size_t>> groups;
  for (size_t i = 0; i < items.size(); ++i)
    groups[{items[i].target, items[i].question_type}].push_back(i);

  for (auto& [key, idx] : groups) {
    if (idx.empty() || key.second == QuestionType::YesOrNo) continue;
    const int n_letters = static_cast<int>(items[idx[0]].choices.size());

    // Items whose correct choice cannot move (none-of-the-above is correct).
    std::vector<size_t> movable;
    for (size_t i : idx) {
      if (detail::nota_pinned(items[i]) && items[i].correct_index == n_letters - 1) continue;
      movable.push_back(i);
    }

    // Letter quotas over the positions the correct choice may occupy.
    const bool restrict_last = !movable.empty() && detail::nota_pinned(items[movable[0]]);
    const int usable_letters = restrict_last ? n_letters - 1 : n_letters;
    std::vector<int> assignment;
    size_t m = movable.size();
    for (int L = 0; L < usable_letters; ++L) {
      size_t share = m / static_cast<size_t>(usable_letters) +
                     (static_cast<size_t>(L) < m % static_cast<size_t>(usable_letters) ? 1 : 0);
      for (size_t c = 0; c < share; ++c) assignment.push_back(L);
    }
    rng.shuffle(assignment);
    for (size_t i = 0; i < movable.size(); ++i)
      detail::place_correct_at(items[movable[i]], assignment[i]);
  }
}

// ---- validation ------------------------------------------------------------------

inline std::vector<std::string> validate(const MCQItem& item,
                                         const std::filesystem::path& base_dir = {}) {
  std::vector<std::string> violations;
  const size_t expected = item.question_type == QuestionType::YesOrNo ? 2 : 4;
  if (item.choices.size() != expected)
    violations.push_back("expected " + std::to_string(expected) + " choices, found " +
                         std::to_string(item.choices.size()));
  if (item.correct_index < 0 || static_cast<size_t>(item.correct_index) >= item.choices.size())
    violations.push_back("correct_index out of range");

  for (size_t i = 0; i < item.choices.size(); ++i) {
    if (item.choices[i].letter != choice_letter(static_cast<int>(i)))
      violations.push_back("choice letters out of order");
    if (item.choices[i].text.empty()) violations.push_back("empty choice text");
  }

  // distinct texts; a duplicate of the correct text means multiple correct
  if (item.correct_index >= 0 && static_cast<size_t>(item.correct_index) < item.choices.size()) {
    const std::string correct = str::normalize_label(item.choices[item.correct_index].text);
    std::set<std::string> seen;
    for (size_t i = 0; i < item.choices.size(); ++i) {
      std::string norm = str::normalize_label(item.choices[i].text);
      if (i != static_cast<size_t>(item.correct_index) && norm == correct)
        violations.push_back("multiple correct: duplicate of the correct choice");
      else if (!seen.insert(norm).second)
        violations.push_back("duplicate choice text '" + item.choices[i].text + "'");
    }
  }

  if (item.question_type == QuestionType::Correction) {
    if (item.choices.empty() || item.choices.back().text != kNoneOfTheAbove)
      violations.push_back("correction item must end with 'none of the above'");
  }
  if (item.question_type == QuestionType::YesOrNo) {
    if (item.choices.size() == 2 &&
        (item.choices[0].text != "Yes." || item.choices[1].text != "No."))
      violations.push_back("yes-or-no choices must be 'Yes.' and 'No.'");
  }

  auto check_remnant = [&](const std::string& text, const char* where) {
    if (text.find('[') != std::string::npos)
      violations.push_back(std::string("unsubstituted placeholder in ") + where);
  };
  check_remnant(item.question_body, "question body");
  for (const auto& c : item.choices) check_remnant(c.text, "choice text");

  if (item.rendered_image) {
    std::filesystem::path p(*item.rendered_image);
    if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
    if (!std::filesystem::exists(p))
      violations.push_back("rendered image missing: " + *item.rendered_image);
  }
  return violations;
}

// ---- suite generation ----------------------------------------------------------------

struct SuiteSpec {
  GroundingTarget target = GroundingTarget::Color;
  std::map<QuestionType, size_t> mix;
  uint64_t seed = 0;
  double grounded_probability = 0.25;
  double label_cap_fraction = 0.10;
  size_t concurrency = 1;
};

struct SuiteSummary {
  std::map<GroundingTarget, size_t> questions;
  std::map<GroundingTarget, size_t> unique_images;
  std::map<GroundingTarget, size_t> unique_answers;
  std::map<QuestionType, size_t> per_type;

  Json to_json() const {
    Json per_target = Json::object();
    for (const auto& [t, q] : questions) {
      per_target[to_string(t)] =
          Json{{"questions", q},
               {"unique_images", unique_images.count(t) ? unique_images.at(t) : 0},
               {"unique_answers", unique_answers.count(t) ? unique_answers.at(t) : 0}};
    }
    Json types = Json::object();
    for (const auto& [qt, c] : per_type) types[to_string(qt)] = c;
    return Json{{"per_target", per_target}, {"per_type", types}};
  }
};

inline SuiteSummary summarize(const std::vector<MCQItem>& items) {
  SuiteSummary s;
  std::map<GroundingTarget, std::set<std::string>> images, answers;
  for (const auto& item : items) {
    s.questions[item.target]++;
    s.per_type[item.question_type]++;
    images[item.target].insert(item.image.key());
    answers[item.target].insert(
        str::normalize_label(item.choices[static_cast<size_t>(item.correct_index)].text));
  }
  for (const auto& [t, set] : images) s.unique_images[t] = set.size();
  for (const auto& [t, set] : answers) s.unique_answers[t] = set.size();
  return s;
}

// Thrown when resampling cannot reach the requested count; carries the
// partial suite so callers can keep what was produced.
class CorpusExhaustedError : public CorpusExhausted {
public:
  CorpusExhaustedError(std::vector<MCQItem> partial, size_t produced, size_t requested)
      : CorpusExhausted("corpus exhausted: produced " + std::to_string(produced) + " of " +
                        std::to_string(requested) + " requested items"),
        partial_items(std::move(partial)),
        produced(produced),
        requested(requested) {}

  std::vector<MCQItem> partial_items;
  size_t produced;
  size_t requested;
};

namespace detail {

struct Task {
  const SourceRecord* record = nullptr;
  QuestionType type{};
  bool branch = false;  // YoN: answer-yes; Correction: grounded
  uint64_t stream_id = 0;
};

struct TaskResult {
  std::optional<MCQItem> item;
  std::string skip_reason;
};

inline TaskResult execute_task(const Task& task, const AssemblyContext& ctx,
                               GroundingTarget target, uint64_t master_seed) {
  TaskResult result;
  RngStream rng(task.stream_id);
  auto cell = ctx.pool->cell(templating::kind_of(task.type), target);

  // Eligibility needs the record's available binding surface; build a probe
  // binding set covering every placeholder assembly can bind.
  templating::Bindings probe{{"target-aspect", "x"}, {"description", "x"}};
  if (const auto* obj = std::get_if<ObjectRecord>(task.record)) {
    probe["category"] = probe["obj-attr"] = "x";
    if (ctx.render_cache) probe["bbox-color"] = "x";
    (void)obj;
  } else if (std::holds_alternative<RelationRecord>(*task.record)) {
    probe["subject"] = probe["object"] = "x";
  } else {
    probe["blanked-caption"] = "x";
    if (ctx.render_cache) {
      const auto& cap = std::get<CaptionRecord>(*task.record);
      for (const auto& s : cap.entity_spans)
        if (s.bbox) probe["bbox-color"] = "x";
    }
  }
  probe["ground-truth"] = probe["distractor#1"] = probe["distractor#2"] = probe["distractor#3"] =
      "x";

  const Template* tmpl = pick_template(cell, probe, rng, &result.skip_reason);
  if (!tmpl) return result;

  try {
    switch (task.type) {
      case QuestionType::YesOrNo:
        result.item = assemble_yes_or_no(*task.record, *tmpl, rng, ctx, task.branch);
        break;
      case QuestionType::FillInTheBlank:
        result.item = assemble_fill_in_blank(*task.record, *tmpl, rng, ctx);
        break;
      case QuestionType::What:
        result.item = assemble_what(*task.record, *tmpl, rng, ctx);
        break;
      case QuestionType::Correction:
        result.item = assemble_correction(*task.record, *tmpl, rng, ctx, task.branch);
        break;
    }
    if (result.item) result.item->provenance.master_seed = master_seed;
    if (result.item) result.item->provenance.stream_id = task.stream_id;
  } catch (const Error& e) {
    result.skip_reason = e.what();
  }
  return result;
}

}  // namespace detail

struct SuiteResult {
  std::vector<MCQItem> items;
  SuiteSummary summary;
  size_t skipped = 0;
};

// The four-step pipeline over one grounding target: sample a template, fill
// placeholders from a source record, draw distractors, balance the answers.
// Deterministic for a fixed (corpus, pool, thesaurus, spec) regardless of
// concurrency: tasks are planned in waves, executed in parallel, and
// collected in plan order.
inline SuiteResult generate_suite(const corpus::CorpusIndex& index, const SuiteSpec& spec,
                                  const AssemblyContext& ctx) {
  auto records = index.for_target(spec.target);
  size_t requested = 0;
  for (const auto& [qt, c] : spec.mix) requested += c;

  RngStream plan_rng(derive_stream(spec.seed, "suite-plan", to_string(spec.target)));
  std::vector<MCQItem> items;
  size_t skipped = 0;

  const size_t total_cap = std::max<size_t>(
      1, static_cast<size_t>(spec.label_cap_fraction * static_cast<double>(requested) + 1e-9));
  std::map<std::string, size_t> label_counts;

  const std::array<QuestionType, 4> type_order = {QuestionType::YesOrNo,
                                                  QuestionType::FillInTheBlank,
                                                  QuestionType::What, QuestionType::Correction};
  for (QuestionType qt : type_order) {
    auto mix_it = spec.mix.find(qt);
    if (mix_it == spec.mix.end() || mix_it->second == 0) continue;
    const size_t count = mix_it->second;

    if (records.empty()) throw CorpusExhaustedError(std::move(items), items.size(), requested);

    // Branch quotas keep answer distributions balanced by construction:
    // half yes/half no, and grounded Correction items at a per-letter share.
    std::vector<bool> branches;
    if (qt == QuestionType::YesOrNo) {
      size_t yes = (count + 1) / 2;
      for (size_t i = 0; i < count; ++i) branches.push_back(i < yes);
    } else if (qt == QuestionType::Correction) {
      size_t grounded = static_cast<size_t>(
          spec.grounded_probability * static_cast<double>(count) + 0.5);
      for (size_t i = 0; i < count; ++i) branches.push_back(i < grounded);
    } else {
      branches.assign(count, false);
    }
    plan_rng.shuffle(branches);

    std::vector<const SourceRecord*> order(records);
    plan_rng.shuffle(order);

    std::map<std::string, uint64_t> use_ordinal;
    size_t cursor = 0;
    auto next_record = [&]() {
      const SourceRecord* r = order[cursor % order.size()];
      ++cursor;
      return r;
    };

    std::vector<bool> pending(branches.begin(), branches.end());
    size_t produced_for_type = 0;
    size_t attempts = 0;
    const size_t attempt_cap = count * 40 + 200;

    while (produced_for_type < count) {
      if (attempts > attempt_cap)
        throw CorpusExhaustedError(std::move(items), items.size(), requested);

      // Plan one wave: a task per still-needed item.
      std::vector<detail::Task> wave;
      for (size_t i = 0; i < pending.size(); ++i) {
        detail::Task task;
        task.record = next_record();
        task.type = qt;
        task.branch = pending[i];
        uint64_t ord = use_ordinal[record_id(*task.record)]++;
        task.stream_id = derive_stream(spec.seed, record_id(*task.record),
                                       std::string(to_string(qt)), ord);
        wave.push_back(task);
      }
      attempts += wave.size();

      std::vector<detail::TaskResult> results(wave.size());
      parallel::for_indices(wave.size(), spec.concurrency, [&](size_t i) {
        results[i] = detail::execute_task(wave[i], ctx, spec.target, spec.seed);
      });

      // Collect in plan order; label caps are enforced here so the outcome
      // is independent of scheduling.
      std::vector<bool> next_pending;
      for (size_t i = 0; i < results.size(); ++i) {
        if (produced_for_type >= count) break;
        auto& res = results[i];
        bool ok = res.item.has_value();
        if (ok) {
          std::string norm = str::normalize_label(res.item->gold_label);
          if (label_counts[norm] >= total_cap) ok = false;
          if (ok) label_counts[norm]++;
        }
        if (ok) {
          items.push_back(std::move(*res.item));
          ++produced_for_type;
        } else {
          ++skipped;
          next_pending.push_back(wave[i].branch);
        }
      }
      pending = std::move(next_pending);
    }
  }

  RngStream balance_rng(derive_stream(spec.seed, "balance", to_string(spec.target)));
  balance_answers(items, balance_rng);

  // Stable readable ids assigned after balancing.
  std::map<QuestionType, size_t> seq;
  for (auto& item : items) {
    size_t n = seq[item.question_type]++;
    std::string type_slug = str::lower(to_string(item.question_type));
    char buf[8];
    std::snprintf(buf, sizeof(buf), "%04zu", n);
    item.id = str::lower(to_string(item.target)) + "-" + type_slug + "-" + buf;
  }

  SuiteResult result;
  result.items = std::move(items);
  result.summary = summarize(result.items);
  result.skipped = skipped;
  return result;
}

}  // namespace msg::mcqgen
