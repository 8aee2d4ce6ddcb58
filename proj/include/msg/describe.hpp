#pragma once

#include <optional>
#include <string>
#include <vector>

#include "msg/rng.hpp"
#include "msg/strings.hpp"
#include "msg/templating.hpp"
#include "msg/types.hpp"

namespace msg::describe {

// A correct declarative description of one record, with the code-point span
// of the gold label inside it. Captions describe themselves; detection and
// relation records go through a description template.
struct Described {
  std::string text;
  std::pair<size_t, size_t> gold_span;
  std::string gold;
  std::optional<BBox> bbox;
  std::string desc_template_id;  // empty when the caption itself is the description
};

// Placeholder that carries the gold label in a description template.
inline const char* gold_placeholder(GroundingTarget t) {
  switch (t) {
    case GroundingTarget::Color: return "color";
    case GroundingTarget::Material: return "material";
    case GroundingTarget::Action:
    case GroundingTarget::Spatial: return "predicate";
    case GroundingTarget::Entity: return "category";
    case GroundingTarget::Number: return "count";
  }
  return "";
}

inline templating::Bindings description_bindings(const ObjectRecord& rec) {
  templating::Bindings b{{"category", rec.category}};
  if (auto c = rec.attribute("color")) b["color"] = *c;
  if (auto m = rec.attribute("material")) b["material"] = *m;
  return b;
}

inline templating::Bindings description_bindings(const RelationRecord& rec) {
  return {{"subject", rec.subject.category},
          {"predicate", rec.predicate},
          {"object", rec.object.category}};
}

// Build the correct description for (record, target), or nullopt with a skip
// reason when the record lacks a usable span/attribute for the target.
inline std::optional<Described> build(const SourceRecord& rec, GroundingTarget target,
                                      const templating::TemplatePool& pool, RngStream& rng,
                                      std::string* skip_reason = nullptr) {
  auto skip = [&](const std::string& why) -> std::optional<Described> {
    if (skip_reason) *skip_reason = why;
    return std::nullopt;
  };

  if (const auto* cap = std::get_if<CaptionRecord>(&rec)) {
    if (target == GroundingTarget::Entity) {
      if (cap->entity_spans.empty()) return skip("caption has no entity spans");
      const EntitySpan& span = cap->entity_spans[rng.bounded(cap->entity_spans.size())];
      Described d;
      d.text = cap->caption;
      d.gold_span = {span.start, span.end};
      d.gold = str::cp_substr(cap->caption, span.start, span.end);
      d.bbox = span.bbox;
      return d;
    }
    if (target == GroundingTarget::Number) {
      if (cap->number_spans.empty()) return skip("caption has no number spans");
      const NumberSpan& span = cap->number_spans[rng.bounded(cap->number_spans.size())];
      Described d;
      d.text = cap->caption;
      d.gold_span = {span.start, span.end};
      d.gold = str::cp_substr(cap->caption, span.start, span.end);
      return d;
    }
    return skip("caption records supply Entity and Number targets only");
  }

  templating::Bindings bindings;
  std::optional<BBox> box;
  if (const auto* obj = std::get_if<ObjectRecord>(&rec)) {
    bindings = description_bindings(*obj);
    box = obj->bbox;
  } else {
    bindings = description_bindings(std::get<RelationRecord>(rec));
    box = std::get<RelationRecord>(rec).subject.bbox;
  }
  const std::string gold_name = gold_placeholder(target);
  if (!bindings.count(gold_name))
    return skip(std::string("record lacks the ") + target_aspect(target) + " attribute");

  std::vector<const templating::Template*> eligible;
  for (const auto* t : pool.cell(templating::TemplateKind::Description, target)) {
    bool ok = t->has_placeholder(gold_name);
    for (const auto& name : t->placeholders)
      if (!bindings.count(name)) ok = false;
    if (ok) eligible.push_back(t);
  }
  if (eligible.empty()) return skip("no description template fits this record");

  const templating::Template* tmpl = eligible[rng.bounded(eligible.size())];
  std::map<std::string, std::vector<std::pair<size_t, size_t>>> spans;
  Described d;
  d.text = templating::substitute(tmpl->body, bindings, &spans);
  d.gold_span = spans.at(gold_name).front();
  d.gold = bindings.at(gold_name);
  d.bbox = box;
  d.desc_template_id = tmpl->id;
  return d;
}

// ---- image facts ---------------------------------------------------------------

// One verifiable fact extracted from a source record, used to assemble
// instruction conversations with auditable provenance.
struct Fact {
  GroundingTarget target;
  std::string record_id;
  std::string field;
  std::string category;         // described object (subject for relations)
  std::string label;            // the gold value
  std::optional<BBox> bbox;     // described object's box
  std::string object_category;  // relations only
  std::optional<BBox> object_bbox;
};

inline std::vector<Fact> collect_facts(const std::vector<const SourceRecord*>& records) {
  std::vector<Fact> facts;
  for (const auto* rec : records) {
    if (const auto* obj = std::get_if<ObjectRecord>(rec)) {
      facts.push_back({GroundingTarget::Entity, obj->id, "category", obj->category,
                       obj->category, obj->bbox, {}, std::nullopt});
      if (auto c = obj->attribute("color"))
        facts.push_back({GroundingTarget::Color, obj->id, "attributes.color", obj->category, *c,
                         obj->bbox, {}, std::nullopt});
      if (auto m = obj->attribute("material"))
        facts.push_back({GroundingTarget::Material, obj->id, "attributes.material", obj->category,
                         *m, obj->bbox, {}, std::nullopt});
    } else if (const auto* rel = std::get_if<RelationRecord>(rec)) {
      GroundingTarget t = rel->predicate_kind == PredicateKind::Action ? GroundingTarget::Action
                                                                       : GroundingTarget::Spatial;
      facts.push_back({t, rel->id, "predicate", rel->subject.category, rel->predicate,
                       rel->subject.bbox, rel->object.category, rel->object.bbox});
    }
  }
  return facts;
}

}  // namespace msg::describe
