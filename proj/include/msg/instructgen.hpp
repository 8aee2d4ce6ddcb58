#pragma once

#include <algorithm>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "msg/corpus.hpp"
#include "msg/describe.hpp"
#include "msg/mcqgen.hpp"
#include "msg/parallel.hpp"
#include "msg/rng.hpp"
#include "msg/templating.hpp"
#include "msg/types.hpp"
#include "msg/visprompt.hpp"

namespace msg::instructgen {

using mcqgen::AssemblyContext;
using templating::Template;
using templating::TemplateKind;

namespace detail {

inline const Template* pick_family_template(const AssemblyContext& ctx, TemplateKind kind,
                                            InstructionType family,
                                            std::optional<GroundingTarget> target,
                                            const templating::Bindings& available,
                                            RngStream& rng) {
  std::vector<const Template*> eligible;
  for (const auto* t : ctx.pool->family_cell(kind, family, target)) {
    bool ok = true;
    for (const auto& name : t->placeholders)
      if (!available.count(name)) ok = false;
    if (ok) eligible.push_back(t);
  }
  if (eligible.empty())
    throw InsufficientFacts(std::string("no ") + to_string(kind) + " template for family " +
                            to_string(family));
  return eligible[rng.bounded(eligible.size())];
}

inline templating::Bindings fact_bindings(const describe::Fact& fact) {
  templating::Bindings b{{"target-aspect", target_aspect(fact.target)}};
  switch (fact.target) {
    case GroundingTarget::Entity:
      b["category"] = fact.category;
      break;
    case GroundingTarget::Color:
      b["category"] = fact.category;
      b["color"] = fact.label;
      break;
    case GroundingTarget::Material:
      b["category"] = fact.category;
      b["material"] = fact.label;
      break;
    case GroundingTarget::Action:
    case GroundingTarget::Spatial:
      b["subject"] = fact.category;
      b["object"] = fact.object_category;
      b["predicate"] = fact.label;
      break;
    case GroundingTarget::Number:
      b["category"] = fact.category;
      b["count"] = fact.label;
      break;
  }
  return b;
}

// Fact traces attached to the model turn that states the fact.
inline void trace_fact(InstructionRecord& rec, int turn_index, const describe::Fact& fact) {
  rec.facts.push_back({turn_index, fact.record_id, fact.field, fact.label});
  if (fact.target == GroundingTarget::Color || fact.target == GroundingTarget::Material)
    rec.facts.push_back({turn_index, fact.record_id, "category", fact.category});
  if (fact.target == GroundingTarget::Action || fact.target == GroundingTarget::Spatial) {
    rec.facts.push_back({turn_index, fact.record_id, "subject.category", fact.category});
    rec.facts.push_back({turn_index, fact.record_id, "object.category", fact.object_category});
  }
  if (fact.target == GroundingTarget::Entity)
    rec.facts.push_back({turn_index, fact.record_id, "category", fact.category});
}

}  // namespace detail

// A few rounds of fine-grained questions about one image, each answered from
// a distinct source fact.
inline InstructionRecord gen_multiround(const std::vector<const SourceRecord*>& records,
                                        const AssemblyContext& ctx, RngStream& rng) {
  auto facts = describe::collect_facts(records);
  if (facts.size() < 2)
    throw InsufficientFacts("multi-round conversations need at least 2 facts, image has " +
                            std::to_string(facts.size()));
  rng.shuffle(facts);
  size_t rounds = std::min<size_t>(facts.size(), 2 + rng.bounded(2));  // 2 or 3 rounds

  InstructionRecord rec;
  rec.image = record_image(*records.front());
  rec.instruction_type = InstructionType::MultiRound;
  for (size_t i = 0; i < rounds; ++i) {
    const describe::Fact& fact = facts[i];
    auto bindings = detail::fact_bindings(fact);
    const Template* q = detail::pick_family_template(ctx, TemplateKind::InstructQuestion,
                                                     InstructionType::MultiRound, fact.target,
                                                     bindings, rng);
    const Template* a = detail::pick_family_template(ctx, TemplateKind::InstructAnswer,
                                                     InstructionType::MultiRound, fact.target,
                                                     bindings, rng);
    rec.turns.push_back({"user", templating::substitute(q->body, bindings)});
    rec.turns.push_back({"model", templating::substitute(a->body, bindings)});
    detail::trace_fact(rec, static_cast<int>(rec.turns.size()) - 1, fact);
    rec.template_ids.push_back(q->id);
    rec.template_ids.push_back(a->id);
    if (std::find(rec.record_ids.begin(), rec.record_ids.end(), fact.record_id) ==
        rec.record_ids.end())
      rec.record_ids.push_back(fact.record_id);
  }
  return rec;
}

// Boxes drawn on the image; the conversation asks what the boxes indicate.
// A relation yields the two-box sequence (green first, red second) ending in
// the relation question; a lone object yields one name-and-attribute round.
inline InstructionRecord gen_visprompted(const std::vector<const SourceRecord*>& records,
                                         const AssemblyContext& ctx, RngStream& rng) {
  if (!ctx.render_cache)
    throw BBoxOutOfImage("vision-prompted generation requires an image output directory");

  const RelationRecord* relation = nullptr;
  const ObjectRecord* object = nullptr;
  for (const auto* r : records) {
    if (!relation) relation = std::get_if<RelationRecord>(r);
    if (!object) object = std::get_if<ObjectRecord>(r);
  }

  InstructionRecord rec;
  rec.instruction_type = InstructionType::VisionPrompted;

  if (relation) {
    rec.image = relation->image;
    const auto g = visprompt::green();
    const auto r = visprompt::red();
    int stroke = ctx.stroke > 0 ? ctx.stroke
                                : visprompt::default_stroke(rec.image.width, rec.image.height);
    auto path = ctx.render_cache->render(
        rec.image, {{relation->subject.bbox, g}, {relation->object.bbox, r}}, stroke);
    rec.rendered_image = path.generic_string();

    auto ask_box = [&](const std::string& color, const std::string& category,
                       const std::string& field) {
      templating::Bindings b{{"bbox-color", color}, {"category", category}};
      const Template* q = detail::pick_family_template(ctx, TemplateKind::InstructQuestion,
                                                       InstructionType::VisionPrompted,
                                                       std::nullopt, b, rng);
      const Template* a = detail::pick_family_template(ctx, TemplateKind::InstructAnswer,
                                                       InstructionType::VisionPrompted,
                                                       std::nullopt, b, rng);
      rec.turns.push_back({"user", templating::substitute(q->body, b)});
      rec.turns.push_back({"model", templating::substitute(a->body, b)});
      rec.facts.push_back({static_cast<int>(rec.turns.size()) - 1, relation->id, field, category});
      rec.template_ids.push_back(q->id);
      rec.template_ids.push_back(a->id);
    };
    ask_box(g.name, relation->subject.category, "subject.category");
    ask_box(r.name, relation->object.category, "object.category");

    templating::Bindings b{{"bbox-color", g.name},
                           {"bbox-color-2", r.name},
                           {"subject", relation->subject.category},
                           {"object", relation->object.category},
                           {"predicate", relation->predicate},
                           {"target-aspect", target_aspect(relation->predicate_kind ==
                                                                   PredicateKind::Action
                                                               ? GroundingTarget::Action
                                                               : GroundingTarget::Spatial)}};
    const Template* q = detail::pick_family_template(
        ctx, TemplateKind::InstructQuestion, InstructionType::VisionPrompted,
        relation->predicate_kind == PredicateKind::Action ? GroundingTarget::Action
                                                          : GroundingTarget::Spatial,
        b, rng);
    const Template* a = detail::pick_family_template(
        ctx, TemplateKind::InstructAnswer, InstructionType::VisionPrompted,
        relation->predicate_kind == PredicateKind::Action ? GroundingTarget::Action
                                                          : GroundingTarget::Spatial,
        b, rng);
    rec.turns.push_back({"user", templating::substitute(q->body, b)});
    rec.turns.push_back({"model", templating::substitute(a->body, b)});
    rec.facts.push_back(
        {static_cast<int>(rec.turns.size()) - 1, relation->id, "predicate", relation->predicate});
    rec.record_ids.push_back(relation->id);
    rec.template_ids.push_back(q->id);
    rec.template_ids.push_back(a->id);
    return rec;
  }

  if (!object) throw InsufficientFacts("no boxed record available for vision prompting");

  rec.image = object->image;
  visprompt::PromptColor color = visprompt::choose_prompt_color(rng);
  int stroke = ctx.stroke > 0 ? ctx.stroke
                              : visprompt::default_stroke(rec.image.width, rec.image.height);
  auto path = ctx.render_cache->render(rec.image, {{object->bbox, color}}, stroke);
  rec.rendered_image = path.generic_string();

  templating::Bindings b{{"bbox-color", color.name}, {"category", object->category}};
  if (auto c = object->attribute("color")) b["color"] = *c;
  if (auto m = object->attribute("material")) b["material"] = *m;
  const Template* q = detail::pick_family_template(
      ctx, TemplateKind::InstructQuestion, InstructionType::VisionPrompted, std::nullopt, b, rng);
  const Template* a = detail::pick_family_template(
      ctx, TemplateKind::InstructAnswer, InstructionType::VisionPrompted, std::nullopt, b, rng);
  rec.turns.push_back({"user", templating::substitute(q->body, b)});
  rec.turns.push_back({"model", templating::substitute(a->body, b)});
  rec.facts.push_back(
      {static_cast<int>(rec.turns.size()) - 1, object->id, "category", object->category});
  if (a->has_placeholder("color"))
    rec.facts.push_back({static_cast<int>(rec.turns.size()) - 1, object->id, "attributes.color",
                         b.at("color")});
  if (a->has_placeholder("material"))
    rec.facts.push_back({static_cast<int>(rec.turns.size()) - 1, object->id,
                         "attributes.material", b.at("material")});
  rec.record_ids.push_back(object->id);
  rec.template_ids.push_back(q->id);
  rec.template_ids.push_back(a->id);
  return rec;
}

// Statement plus a localize -> recognize -> compare rationale ending in the
// verdict token on its own line.
inline InstructionRecord gen_factcheck(const SourceRecord& source, const AssemblyContext& ctx,
                                       RngStream& rng) {
  // Targets this record can supply a statement for.
  std::vector<GroundingTarget> options;
  if (const auto* cap = std::get_if<CaptionRecord>(&source)) {
    if (!cap->entity_spans.empty()) options.push_back(GroundingTarget::Entity);
    if (!cap->number_spans.empty()) options.push_back(GroundingTarget::Number);
  } else if (const auto* obj = std::get_if<ObjectRecord>(&source)) {
    if (obj->attribute("color")) options.push_back(GroundingTarget::Color);
    if (obj->attribute("material")) options.push_back(GroundingTarget::Material);
  } else if (const auto* rel = std::get_if<RelationRecord>(&source)) {
    options.push_back(rel->predicate_kind == PredicateKind::Action ? GroundingTarget::Action
                                                                   : GroundingTarget::Spatial);
  }
  if (options.empty()) throw InsufficientFacts("record supplies no checkable statement");
  GroundingTarget target = options[rng.bounded(options.size())];

  std::string skip;
  auto described = describe::build(source, target, *ctx.pool, rng, &skip);
  if (!described) throw InsufficientFacts(skip);

  const bool consistent = rng.coin();
  std::string statement = described->text;
  std::string stated = described->gold;
  if (!consistent) {
    auto replacement = mcqgen::pick_distractors(ctx, target, described->gold, 1, rng);
    statement = distractor::negative_replace(described->text, described->gold_span, replacement[0]);
    stated = replacement[0];
  }

  // Three labelled reasoning steps, shaped by the rationale template.
  std::string localize, recognize;
  if (const auto* rel = std::get_if<RelationRecord>(&source)) {
    localize = "The image shows the " + rel->subject.category + " and the " +
               rel->object.category + ".";
    recognize = std::string("Their ") + target_aspect(target) + " is \"" + described->gold + "\".";
  } else if (const auto* obj = std::get_if<ObjectRecord>(&source)) {
    localize = "The image shows the " + obj->category + ".";
    recognize = std::string("Its ") + target_aspect(target) + " is \"" + described->gold + "\".";
  } else if (target == GroundingTarget::Entity) {
    localize = "The image shows the object the statement refers to.";
    recognize = "It is a " + described->gold + ".";
  } else {
    localize = "The image shows the items the statement counts.";
    recognize = "Counting them gives " + described->gold + ".";
  }
  std::string compare = consistent
                            ? "The statement says \"" + stated + "\", which matches the image."
                            : "The statement says \"" + stated + "\", but the image shows \"" +
                                  described->gold + "\".";

  templating::Bindings b{{"statement", statement},
                         {"target-aspect", target_aspect(target)},
                         {"step-localize", localize},
                         {"step-recognize", recognize},
                         {"step-compare", compare},
                         {"verdict", consistent ? kVerdictConsistent : kVerdictInconsistent}};
  const Template* q = detail::pick_family_template(ctx, TemplateKind::InstructQuestion,
                                                   InstructionType::FactCheck, std::nullopt, b,
                                                   rng);
  const Template* a = detail::pick_family_template(ctx, TemplateKind::InstructAnswer,
                                                   InstructionType::FactCheck, std::nullopt, b,
                                                   rng);
  InstructionRecord rec;
  rec.image = record_image(source);
  rec.instruction_type = InstructionType::FactCheck;
  rec.turns.push_back({"user", templating::substitute(q->body, b)});
  rec.turns.push_back({"model", templating::substitute(a->body, b)});

  std::string field;
  switch (target) {
    case GroundingTarget::Color: field = "attributes.color"; break;
    case GroundingTarget::Material: field = "attributes.material"; break;
    case GroundingTarget::Action:
    case GroundingTarget::Spatial: field = "predicate"; break;
    case GroundingTarget::Entity: field = "caption.entity_span"; break;
    case GroundingTarget::Number: field = "caption.number_span"; break;
  }
  rec.facts.push_back(
      {static_cast<int>(rec.turns.size()) - 1, record_id(source), field, described->gold});
  rec.record_ids.push_back(record_id(source));
  rec.template_ids.push_back(q->id);
  rec.template_ids.push_back(a->id);
  if (!described->desc_template_id.empty()) rec.template_ids.push_back(described->desc_template_id);
  return rec;
}

// ---- paraphrase --------------------------------------------------------------------

// A rewrite backend; throws ServiceUnavailable on transport failure. A null
// function is the identity client.
using RewriteFn = std::function<std::string(const std::string&)>;

struct ParaphraseStats {
  size_t rewritten = 0;
  size_t rejected = 0;
  size_t service_failures = 0;
};

// Diversify phrasing while preserving facts: every traced gold label must
// still appear verbatim (and a FactCheck verdict must stay the final line),
// otherwise the whole record keeps its original wording.
inline InstructionRecord paraphrase(const InstructionRecord& rec, const RewriteFn& client,
                                    ParaphraseStats* stats = nullptr) {
  if (!client) return rec;

  InstructionRecord out = rec;
  try {
    for (auto& turn : out.turns) turn.text = client(turn.text);
  } catch (const ServiceUnavailable&) {
    if (stats) stats->service_failures++;
    return rec;
  }

  bool ok = true;
  for (const auto& fact : rec.facts) {
    if (fact.turn_index < 0 || static_cast<size_t>(fact.turn_index) >= out.turns.size()) continue;
    if (out.turns[static_cast<size_t>(fact.turn_index)].text.find(fact.value) ==
        std::string::npos)
      ok = false;
  }
  if (rec.instruction_type == InstructionType::FactCheck && !out.turns.empty()) {
    const std::string& final_text = out.turns.back().text;
    auto last_nl = final_text.find_last_of('\n');
    std::string final_line =
        str::trim(last_nl == std::string::npos ? final_text : final_text.substr(last_nl + 1));
    if (final_line != kVerdictConsistent && final_line != kVerdictInconsistent) ok = false;
  }
  if (!ok) {
    if (stats) stats->rejected++;
    return rec;
  }
  if (stats) stats->rewritten++;
  return out;
}

// ---- provenance audit -----------------------------------------------------------------

namespace detail {

inline std::vector<std::string> field_values(const SourceRecord& rec, const std::string& field) {
  std::vector<std::string> values;
  if (const auto* cap = std::get_if<CaptionRecord>(&rec)) {
    if (field == "caption.entity_span")
      for (const auto& s : cap->entity_spans)
        values.push_back(str::cp_substr(cap->caption, s.start, s.end));
    if (field == "caption.number_span")
      for (const auto& s : cap->number_spans)
        values.push_back(str::cp_substr(cap->caption, s.start, s.end));
  } else if (const auto* obj = std::get_if<ObjectRecord>(&rec)) {
    if (field == "category") values.push_back(obj->category);
    if (field == "attributes.color" && obj->attribute("color"))
      values.push_back(*obj->attribute("color"));
    if (field == "attributes.material" && obj->attribute("material"))
      values.push_back(*obj->attribute("material"));
  } else if (const auto* rel = std::get_if<RelationRecord>(&rec)) {
    if (field == "predicate") values.push_back(rel->predicate);
    if (field == "subject.category") values.push_back(rel->subject.category);
    if (field == "object.category") values.push_back(rel->object.category);
  }
  return values;
}

}  // namespace detail

// Verify structural invariants and that every traced fact (a) is a real field
// of its source record and (b) appears verbatim in the model turn it
// annotates.
inline std::vector<std::string> audit_provenance(const InstructionRecord& rec,
                                                 const corpus::CorpusIndex& index) {
  std::vector<std::string> violations;
  if (rec.turns.size() < 2) violations.push_back("fewer than 2 turns");
  for (size_t i = 0; i < rec.turns.size(); ++i) {
    const std::string expected = i % 2 == 0 ? "user" : "model";
    if (rec.turns[i].role != expected)
      violations.push_back("turn " + std::to_string(i) + " role should be " + expected);
  }
  if (rec.instruction_type == InstructionType::MultiRound && rec.turns.size() < 4)
    violations.push_back("multi-round record has fewer than 2 rounds");
  if (rec.instruction_type == InstructionType::FactCheck && !rec.turns.empty()) {
    const std::string& final_text = rec.turns.back().text;
    auto last_nl = final_text.find_last_of('\n');
    std::string final_line =
        str::trim(last_nl == std::string::npos ? final_text : final_text.substr(last_nl + 1));
    if (final_line != kVerdictConsistent && final_line != kVerdictInconsistent)
      violations.push_back("fact-check verdict token missing from the final line");
  }

  if (rec.facts.empty()) violations.push_back("no fact traces recorded");
  for (const auto& fact : rec.facts) {
    const SourceRecord* src = index.by_id(fact.record_id);
    if (!src) {
      violations.push_back("fact references unknown record '" + fact.record_id + "'");
      continue;
    }
    auto values = detail::field_values(*src, fact.field);
    if (std::find(values.begin(), values.end(), fact.value) == values.end())
      violations.push_back("fact value '" + fact.value + "' not found in field '" + fact.field +
                           "' of record " + fact.record_id);
    if (fact.turn_index < 0 || static_cast<size_t>(fact.turn_index) >= rec.turns.size()) {
      violations.push_back("fact turn index out of range");
      continue;
    }
    const Turn& turn = rec.turns[static_cast<size_t>(fact.turn_index)];
    if (turn.role != "model")
      violations.push_back("fact trace attached to a non-model turn");
    if (turn.text.find(fact.value) == std::string::npos)
      violations.push_back("fact value '" + fact.value + "' missing from its model turn");
  }
  return violations;
}

// ---- corpus generation -----------------------------------------------------------------

struct InstructSpec {
  std::map<InstructionType, size_t> mix;  // exact counts per type
  uint64_t seed = 0;
  size_t concurrency = 1;
};

struct InstructResult {
  std::vector<InstructionRecord> records;
  size_t skipped = 0;
  ParaphraseStats paraphrase_stats;
};

// Deterministic wave generation mirroring the MCQ pipeline: candidates are
// planned serially, executed in parallel, collected in plan order.
inline InstructResult generate_corpus(const corpus::CorpusIndex& index, const InstructSpec& spec,
                                      const AssemblyContext& ctx,
                                      const RewriteFn& rewrite = nullptr) {
  InstructResult result;
  size_t requested = 0;
  for (const auto& [t, c] : spec.mix) requested += c;

  const std::array<InstructionType, 3> type_order = {
      InstructionType::MultiRound, InstructionType::VisionPrompted, InstructionType::FactCheck};

  for (InstructionType type : type_order) {
    auto mix_it = spec.mix.find(type);
    if (mix_it == spec.mix.end() || mix_it->second == 0) continue;
    const size_t count = mix_it->second;

    // Candidate pool: image groups for conversations, records for fact checks.
    std::vector<std::string> candidates;
    if (type == InstructionType::FactCheck) {
      for (const auto& rec : index.records()) candidates.push_back(record_id(rec));
    } else {
      candidates = index.image_keys();
    }
    if (candidates.empty())
      throw CorpusExhausted("no candidates for " + std::string(to_string(type)));

    RngStream plan_rng(derive_stream(spec.seed, "instruct-plan", to_string(type)));
    plan_rng.shuffle(candidates);

    std::map<std::string, uint64_t> use_ordinal;
    size_t cursor = 0;
    size_t produced = 0;
    size_t attempts = 0;
    const size_t attempt_cap = count * 40 + 200;

    while (produced < count) {
      if (attempts > attempt_cap)
        throw CorpusExhausted("instruction corpus exhausted: produced " +
                              std::to_string(result.records.size()) + " of " +
                              std::to_string(requested));
      size_t wave_size = count - produced;
      struct PlannedTask {
        std::string candidate;
        uint64_t stream = 0;
      };
      std::vector<PlannedTask> wave;
      for (size_t i = 0; i < wave_size; ++i) {
        std::string candidate = candidates[cursor % candidates.size()];
        ++cursor;
        uint64_t ord = use_ordinal[candidate]++;
        wave.push_back({candidate, derive_stream(spec.seed, candidate, to_string(type), ord)});
      }
      attempts += wave.size();

      std::vector<std::optional<InstructionRecord>> outputs(wave.size());
      parallel::for_indices(wave.size(), spec.concurrency, [&](size_t i) {
        RngStream rng(wave[i].stream);
        try {
          InstructionRecord rec;
          if (type == InstructionType::FactCheck) {
            const SourceRecord* src = index.by_id(wave[i].candidate);
            rec = gen_factcheck(*src, ctx, rng);
          } else if (type == InstructionType::MultiRound) {
            rec = gen_multiround(index.for_image(wave[i].candidate), ctx, rng);
          } else {
            rec = gen_visprompted(index.for_image(wave[i].candidate), ctx, rng);
          }
          rec.seed = wave[i].stream;
          outputs[i] = std::move(rec);
        } catch (const Error&) {
          outputs[i] = std::nullopt;
        }
      });

      for (auto& out : outputs) {
        if (produced >= count) break;
        if (!out) {
          result.skipped++;
          continue;
        }
        result.records.push_back(std::move(*out));
        ++produced;
      }
    }
  }

  // Ids in provenance order, then the optional paraphrase pass.
  std::map<InstructionType, size_t> seq;
  for (auto& rec : result.records) {
    size_t n = seq[rec.instruction_type]++;
    char buf[8];
    std::snprintf(buf, sizeof(buf), "%05zu", n);
    rec.id = str::lower(to_string(rec.instruction_type)) + "-" + buf;
  }
  if (rewrite) {
    for (auto& rec : result.records)
      rec = paraphrase(rec, rewrite, &result.paraphrase_stats);
  }
  return result;
}

}  // namespace msg::instructgen
