#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "msg/errors.hpp"
#include "msg/strings.hpp"

namespace msg {

using Json = nlohmann::ordered_json;

// ---- grounding targets ------------------------------------------------------

enum class GroundingTarget { Entity, Number, Color, Material, Action, Spatial };

inline constexpr std::array<GroundingTarget, 6> kAllTargets = {
    GroundingTarget::Entity,   GroundingTarget::Number, GroundingTarget::Color,
    GroundingTarget::Material, GroundingTarget::Action, GroundingTarget::Spatial};

inline const char* to_string(GroundingTarget t) {
  switch (t) {
    case GroundingTarget::Entity: return "Entity";
    case GroundingTarget::Number: return "Number";
    case GroundingTarget::Color: return "Color";
    case GroundingTarget::Material: return "Material";
    case GroundingTarget::Action: return "Action";
    case GroundingTarget::Spatial: return "Spatial";
  }
  return "?";
}

inline std::optional<GroundingTarget> target_from_string(std::string_view s) {
  std::string n = str::normalize_label(s);
  if (n == "entity") return GroundingTarget::Entity;
  if (n == "number") return GroundingTarget::Number;
  if (n == "color") return GroundingTarget::Color;
  if (n == "material") return GroundingTarget::Material;
  if (n == "action") return GroundingTarget::Action;
  if (n == "spatial") return GroundingTarget::Spatial;
  return std::nullopt;
}

// Human-readable aspect word used when a question names the target in prose.
inline const char* target_aspect(GroundingTarget t) {
  switch (t) {
    case GroundingTarget::Entity: return "entity";
    case GroundingTarget::Number: return "number";
    case GroundingTarget::Color: return "color";
    case GroundingTarget::Material: return "material";
    case GroundingTarget::Action: return "action";
    case GroundingTarget::Spatial: return "spatial relation";
  }
  return "?";
}

// ---- question types ---------------------------------------------------------

enum class QuestionType { YesOrNo, FillInTheBlank, What, Correction };

inline const char* to_string(QuestionType t) {
  switch (t) {
    case QuestionType::YesOrNo: return "YesOrNo";
    case QuestionType::FillInTheBlank: return "FillInTheBlank";
    case QuestionType::What: return "What";
    case QuestionType::Correction: return "Correction";
  }
  return "?";
}

inline std::optional<QuestionType> question_type_from_string(std::string_view s) {
  std::string n = str::normalize_label(s);
  if (n == "yesorno" || n == "yes-or-no" || n == "yon") return QuestionType::YesOrNo;
  if (n == "fillintheblank" || n == "fill-in-the-blank" || n == "fib")
    return QuestionType::FillInTheBlank;
  if (n == "what") return QuestionType::What;
  if (n == "correction" || n == "corr") return QuestionType::Correction;
  return std::nullopt;
}

// ---- images and boxes -------------------------------------------------------

struct ImageRef {
  std::string dataset_id;
  std::string image_id;
  std::string path;  // filesystem path, resolved relative to the corpus file
  int width = 0;
  int height = 0;

  std::string key() const { return dataset_id + "/" + image_id; }
  bool valid() const { return width > 0 && height > 0; }

  Json to_json() const {
    return Json{{"dataset_id", dataset_id},
                {"image_id", image_id},
                {"path", path},
                {"width", width},
                {"height", height}};
  }

  static ImageRef from_json(const Json& j) {
    ImageRef r;
    r.dataset_id = j.at("dataset_id").get<std::string>();
    r.image_id = j.at("image_id").get<std::string>();
    r.path = j.value("path", std::string{});
    r.width = j.value("width", 0);
    r.height = j.value("height", 0);
    return r;
  }
};

struct BBox {
  int x_min = 0, y_min = 0, x_max = 0, y_max = 0;

  bool valid_for(int width, int height) const {
    return 0 <= x_min && x_min < x_max && x_max <= width && 0 <= y_min &&
           y_min < y_max && y_max <= height;
  }

  Json to_json() const { return Json::array({x_min, y_min, x_max, y_max}); }

  static BBox from_json(const Json& j) {
    if (!j.is_array() || j.size() != 4)
      throw MalformedFile("bbox must be [x_min, y_min, x_max, y_max]");
    return BBox{j[0].get<int>(), j[1].get<int>(), j[2].get<int>(), j[3].get<int>()};
  }
};

// ---- source records ---------------------------------------------------------

struct EntitySpan {
  size_t start = 0;  // code-point offsets into the caption
  size_t end = 0;
  std::string label;
  std::optional<BBox> bbox;
};

struct NumberSpan {
  size_t start = 0;
  size_t end = 0;
  long value = 0;
};

struct CaptionRecord {
  std::string id;
  ImageRef image;
  std::string caption;
  std::vector<EntitySpan> entity_spans;
  std::vector<NumberSpan> number_spans;
};

struct ObjectRecord {
  std::string id;
  ImageRef image;
  BBox bbox;
  std::string category;
  std::map<std::string, std::string> attributes;  // kind -> label; kinds: color | material

  std::optional<std::string> attribute(const std::string& kind) const {
    auto it = attributes.find(kind);
    if (it == attributes.end()) return std::nullopt;
    return it->second;
  }
};

enum class PredicateKind { Action, Spatial };

inline const char* to_string(PredicateKind k) {
  return k == PredicateKind::Action ? "action" : "spatial";
}

struct RelationEnd {
  std::string category;
  BBox bbox;
};

struct RelationRecord {
  std::string id;
  ImageRef image;
  RelationEnd subject;
  std::string predicate;
  PredicateKind predicate_kind = PredicateKind::Spatial;
  RelationEnd object;
};

using SourceRecord = std::variant<CaptionRecord, ObjectRecord, RelationRecord>;

inline const std::string& record_id(const SourceRecord& r) {
  return std::visit([](const auto& rec) -> const std::string& { return rec.id; }, r);
}

inline const ImageRef& record_image(const SourceRecord& r) {
  return std::visit([](const auto& rec) -> const ImageRef& { return rec.image; }, r);
}

inline const char* record_kind(const SourceRecord& r) {
  if (std::holds_alternative<CaptionRecord>(r)) return "caption";
  if (std::holds_alternative<ObjectRecord>(r)) return "object";
  return "relation";
}

// ---- MCQ items ----------------------------------------------------------------

struct Choice {
  std::string letter;  // "A", "B", ...
  std::string text;
};

struct Provenance {
  std::string template_id;
  std::string record_id;
  uint64_t master_seed = 0;
  uint64_t stream_id = 0;
};

struct MCQItem {
  std::string id;
  ImageRef image;
  std::optional<std::string> rendered_image;
  GroundingTarget target = GroundingTarget::Entity;
  QuestionType question_type = QuestionType::What;
  std::string question_body;
  std::vector<Choice> choices;
  int correct_index = 0;
  Provenance provenance;
  // Underlying gold label backing the item (answer-frequency capping, audits).
  std::string gold_label;

  Json to_json() const {
    Json choices_json = Json::array();
    for (const auto& c : choices)
      choices_json.push_back(Json{{"letter", c.letter}, {"text", c.text}});
    Json j{{"id", id},
           {"image", image.to_json()},
           {"rendered_image", rendered_image ? Json(*rendered_image) : Json(nullptr)},
           {"target", to_string(target)},
           {"question_type", to_string(question_type)},
           {"question_body", question_body},
           {"choices", choices_json},
           {"correct_index", correct_index},
           {"gold_label", gold_label},
           {"provenance",
            Json{{"template_id", provenance.template_id},
                 {"record_id", provenance.record_id},
                 {"master_seed", provenance.master_seed},
                 {"stream", str::hex64(provenance.stream_id)}}}};
    return j;
  }

  static MCQItem from_json(const Json& j) {
    MCQItem item;
    item.id = j.at("id").get<std::string>();
    item.image = ImageRef::from_json(j.at("image"));
    if (!j.at("rendered_image").is_null())
      item.rendered_image = j.at("rendered_image").get<std::string>();
    auto t = target_from_string(j.at("target").get<std::string>());
    auto q = question_type_from_string(j.at("question_type").get<std::string>());
    if (!t || !q) throw MalformedFile("unknown target or question_type in item " + item.id);
    item.target = *t;
    item.question_type = *q;
    item.question_body = j.at("question_body").get<std::string>();
    for (const auto& c : j.at("choices"))
      item.choices.push_back({c.at("letter").get<std::string>(), c.at("text").get<std::string>()});
    item.correct_index = j.at("correct_index").get<int>();
    item.gold_label = j.value("gold_label", std::string{});
    if (j.contains("provenance")) {
      const auto& p = j.at("provenance");
      item.provenance.template_id = p.value("template_id", std::string{});
      item.provenance.record_id = p.value("record_id", std::string{});
      item.provenance.master_seed = p.value("master_seed", uint64_t{0});
    }
    return item;
  }
};

inline constexpr const char* kNoneOfTheAbove = "none of the above";
inline constexpr const char* kBlankMarker = "___";

inline std::string choice_letter(int index) {
  return std::string(1, static_cast<char>('A' + index));
}

// ---- instruction records -------------------------------------------------------

enum class InstructionType { MultiRound, VisionPrompted, FactCheck };

inline const char* to_string(InstructionType t) {
  switch (t) {
    case InstructionType::MultiRound: return "MultiRound";
    case InstructionType::VisionPrompted: return "VisionPrompted";
    case InstructionType::FactCheck: return "FactCheck";
  }
  return "?";
}

inline std::optional<InstructionType> instruction_type_from_string(std::string_view s) {
  std::string n = str::normalize_label(s);
  if (n == "multiround" || n == "multi-round" || n == "mr") return InstructionType::MultiRound;
  if (n == "visionprompted" || n == "vision-prompted" || n == "vp")
    return InstructionType::VisionPrompted;
  if (n == "factcheck" || n == "fact-check" || n == "fc") return InstructionType::FactCheck;
  return std::nullopt;
}

struct Turn {
  std::string role;  // "user" | "model"
  std::string text;
};

// Ties one fact stated in a model turn back to the source record field it
// came from, so provenance audits can verify every claim.
struct FactTrace {
  int turn_index = 0;
  std::string record_id;
  std::string field;
  std::string value;
};

struct InstructionRecord {
  std::string id;
  ImageRef image;
  std::optional<std::string> rendered_image;
  InstructionType instruction_type = InstructionType::MultiRound;
  std::vector<Turn> turns;
  std::vector<std::string> template_ids;
  std::vector<std::string> record_ids;
  uint64_t seed = 0;
  std::vector<FactTrace> facts;

  Json to_json() const {
    Json turns_json = Json::array();
    for (const auto& t : turns) turns_json.push_back(Json{{"role", t.role}, {"text", t.text}});
    Json facts_json = Json::array();
    for (const auto& f : facts)
      facts_json.push_back(Json{{"turn", f.turn_index},
                                {"record_id", f.record_id},
                                {"field", f.field},
                                {"value", f.value}});
    return Json{{"id", id},
                {"image", image.to_json()},
                {"rendered_image", rendered_image ? Json(*rendered_image) : Json(nullptr)},
                {"instruction_type", to_string(instruction_type)},
                {"turns", turns_json},
                {"provenance", Json{{"template_ids", template_ids},
                                    {"record_ids", record_ids},
                                    {"seed", seed},
                                    {"facts", facts_json}}}};
  }

  static InstructionRecord from_json(const Json& j) {
    InstructionRecord r;
    r.id = j.at("id").get<std::string>();
    r.image = ImageRef::from_json(j.at("image"));
    if (!j.at("rendered_image").is_null())
      r.rendered_image = j.at("rendered_image").get<std::string>();
    auto t = instruction_type_from_string(j.at("instruction_type").get<std::string>());
    if (!t) throw MalformedFile("unknown instruction_type in record " + r.id);
    r.instruction_type = *t;
    for (const auto& turn : j.at("turns"))
      r.turns.push_back({turn.at("role").get<std::string>(), turn.at("text").get<std::string>()});
    const auto& p = j.at("provenance");
    r.template_ids = p.value("template_ids", std::vector<std::string>{});
    r.record_ids = p.value("record_ids", std::vector<std::string>{});
    r.seed = p.value("seed", uint64_t{0});
    if (p.contains("facts")) {
      for (const auto& f : p.at("facts"))
        r.facts.push_back({f.at("turn").get<int>(), f.at("record_id").get<std::string>(),
                           f.at("field").get<std::string>(), f.at("value").get<std::string>()});
    }
    return r;
  }
};

inline constexpr const char* kVerdictConsistent = "consistent";
inline constexpr const char* kVerdictInconsistent = "inconsistent";

}  // namespace msg
