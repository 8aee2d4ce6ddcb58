#pragma once

#include <algorithm>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "msg/jsonl.hpp"
#include "msg/png.hpp"
#include "msg/types.hpp"

namespace msg::corpus {

namespace fs = std::filesystem;

// One dropped-record entry in the ingestion report.
struct Violation {
  size_t line = 0;
  std::string reason;
};

struct IngestReport {
  std::string path;
  std::string adapter;
  size_t total_lines = 0;
  size_t ingested = 0;
  size_t dropped = 0;
  std::vector<Violation> violations;

  Json to_json() const {
    Json v = Json::array();
    for (const auto& x : violations)
      v.push_back(Json{{"line", x.line}, {"reason", x.reason}});
    return Json{{"path", path},       {"adapter", adapter}, {"total_lines", total_lines},
                {"ingested", ingested}, {"dropped", dropped}, {"violations", v}};
  }
};

namespace detail {

inline std::string resolve_path(const fs::path& base_dir, const std::string& p) {
  if (p.empty()) return p;
  fs::path pp(p);
  if (pp.is_absolute() || base_dir == ".") return p;
  return (base_dir / pp).generic_string();
}

inline ImageRef parse_image(const Json& j, const fs::path& base_dir) {
  ImageRef img = ImageRef::from_json(j);
  img.path = resolve_path(base_dir, img.path);
  return img;
}

// Dimensions missing from the record are read from the image file itself;
// records whose image cannot be probed are dropped (rendering needs sizes).
inline bool ensure_dimensions(ImageRef& img, std::string& reason) {
  if (img.valid()) return true;
  if (img.path.empty()) {
    reason = "missing image dimensions and no image path to probe";
    return false;
  }
  try {
    auto [w, h] = png::probe_dimensions(img.path);
    img.width = w;
    img.height = h;
    return true;
  } catch (const Error& e) {
    reason = std::string("cannot probe image dimensions: ") + e.what();
    return false;
  }
}

inline bool check_spans(const CaptionRecord& rec, std::string& reason) {
  size_t len = str::cp_length(rec.caption);
  auto check_list = [&](auto spans, const char* what) {
    std::vector<std::pair<size_t, size_t>> ranges;
    for (const auto& s : spans) {
      if (s.start >= s.end || s.end > len) {
        reason = std::string(what) + " span out of caption bounds";
        return false;
      }
      ranges.emplace_back(s.start, s.end);
    }
    std::sort(ranges.begin(), ranges.end());
    for (size_t i = 1; i < ranges.size(); ++i) {
      if (ranges[i].first < ranges[i - 1].second) {
        reason = std::string(what) + " spans overlap";
        return false;
      }
    }
    return true;
  };
  return check_list(rec.entity_spans, "entity") && check_list(rec.number_spans, "number");
}

inline CaptionRecord parse_caption(const Json& j, const fs::path& base_dir) {
  CaptionRecord rec;
  rec.id = j.value("id", std::string{});
  rec.image = parse_image(j.at("image"), base_dir);
  rec.caption = j.at("caption").get<std::string>();
  if (j.contains("entity_spans")) {
    for (const auto& s : j.at("entity_spans")) {
      EntitySpan span;
      span.start = s.at("start").get<size_t>();
      span.end = s.at("end").get<size_t>();
      span.label = s.at("label").get<std::string>();
      if (s.contains("bbox") && !s.at("bbox").is_null()) span.bbox = BBox::from_json(s.at("bbox"));
      rec.entity_spans.push_back(std::move(span));
    }
  }
  if (j.contains("number_spans")) {
    for (const auto& s : j.at("number_spans")) {
      NumberSpan span;
      span.start = s.at("start").get<size_t>();
      span.end = s.at("end").get<size_t>();
      span.value = s.at("value").get<long>();
      rec.number_spans.push_back(span);
    }
  }
  return rec;
}

inline ObjectRecord parse_object(const Json& j, const fs::path& base_dir) {
  ObjectRecord rec;
  rec.id = j.value("id", std::string{});
  rec.image = parse_image(j.at("image"), base_dir);
  rec.bbox = BBox::from_json(j.at("bbox"));
  rec.category = j.at("category").get<std::string>();
  if (j.contains("attributes")) {
    for (const auto& [k, v] : j.at("attributes").items()) {
      if (k != "color" && k != "material")
        throw MalformedFile("unknown attribute kind '" + k + "'");
      rec.attributes[k] = v.get<std::string>();
    }
  }
  return rec;
}

inline RelationRecord parse_relation(const Json& j, const fs::path& base_dir) {
  RelationRecord rec;
  rec.id = j.value("id", std::string{});
  rec.image = parse_image(j.at("image"), base_dir);
  rec.subject.category = j.at("subject").at("category").get<std::string>();
  rec.subject.bbox = BBox::from_json(j.at("subject").at("bbox"));
  rec.predicate = j.at("predicate").get<std::string>();
  std::string kind = j.at("predicate_kind").get<std::string>();
  if (kind == "action") rec.predicate_kind = PredicateKind::Action;
  else if (kind == "spatial") rec.predicate_kind = PredicateKind::Spatial;
  else throw MalformedFile("predicate_kind must be 'action' or 'spatial'");
  rec.object.category = j.at("object").at("category").get<std::string>();
  rec.object.bbox = BBox::from_json(j.at("object").at("bbox"));
  return rec;
}

inline bool validate_record(SourceRecord& rec, std::string& reason) {
  ImageRef& img = const_cast<ImageRef&>(record_image(rec));
  if (!ensure_dimensions(img, reason)) return false;
  if (auto* cap = std::get_if<CaptionRecord>(&rec)) {
    if (cap->caption.empty()) {
      reason = "empty caption";
      return false;
    }
    if (!check_spans(*cap, reason)) return false;
    for (const auto& s : cap->entity_spans) {
      if (s.bbox && !s.bbox->valid_for(img.width, img.height)) {
        reason = "entity span bbox invalid for image dimensions";
        return false;
      }
    }
  } else if (auto* obj = std::get_if<ObjectRecord>(&rec)) {
    if (obj->category.empty()) {
      reason = "empty category";
      return false;
    }
    if (!obj->bbox.valid_for(img.width, img.height)) {
      reason = "bbox invalid for image dimensions";
      return false;
    }
  } else if (auto* rel = std::get_if<RelationRecord>(&rec)) {
    if (rel->predicate.empty()) {
      reason = "empty predicate";
      return false;
    }
    if (!rel->subject.bbox.valid_for(img.width, img.height) ||
        !rel->object.bbox.valid_for(img.width, img.height)) {
      reason = "relation bbox invalid for image dimensions";
      return false;
    }
  }
  return true;
}

}  // namespace detail

// Adapter ids: `canonical` (kind-discriminated lines), plus the three
// single-kind flavors matching the documented schemas.
inline const std::vector<std::string>& adapter_ids() {
  static const std::vector<std::string> ids = {"canonical", "caption-jsonl",
                                               "detection-jsonl", "relation-jsonl"};
  return ids;
}

inline std::vector<SourceRecord> ingest(const fs::path& path, const std::string& adapter,
                                        IngestReport* report = nullptr) {
  const auto& ids = adapter_ids();
  if (std::find(ids.begin(), ids.end(), adapter) == ids.end())
    throw UnknownAdapter("unknown adapter '" + adapter + "'");

  IngestReport local;
  IngestReport& rep = report ? *report : local;
  rep.path = path.generic_string();
  rep.adapter = adapter;

  // Relative image paths resolve against the corpus file's directory unless
  // the file's meta line pins another base ("." = the ingesting process's
  // working directory; written by `ingest` so canonical files re-ingest
  // correctly from anywhere).
  fs::path base_dir = path.has_parent_path() ? path.parent_path() : fs::path(".");
  std::vector<SourceRecord> records;
  size_t ordinal = 0;

  jsonl::for_each_line(path, [&](size_t lineno, const Json& j) {
    if (jsonl::is_meta_line(j)) {
      if (j.contains("image_base")) base_dir = j.at("image_base").get<std::string>();
      return;
    }
    rep.total_lines++;
    std::string reason;
    try {
      SourceRecord rec = [&]() -> SourceRecord {
        if (adapter == "caption-jsonl") return detail::parse_caption(j, base_dir);
        if (adapter == "detection-jsonl") return detail::parse_object(j, base_dir);
        if (adapter == "relation-jsonl") return detail::parse_relation(j, base_dir);
        // canonical
        std::string kind = j.value("kind", std::string{});
        if (kind == "caption") return detail::parse_caption(j, base_dir);
        if (kind == "object") return detail::parse_object(j, base_dir);
        if (kind == "relation") return detail::parse_relation(j, base_dir);
        throw MalformedFile("missing or unknown 'kind' discriminator");
      }();
      if (record_id(rec).empty()) {
        std::string synth = record_image(rec).key() + "#" + std::to_string(ordinal);
        std::visit([&](auto& r) { r.id = synth; }, rec);
      }
      ++ordinal;
      if (!detail::validate_record(rec, reason)) {
        rep.dropped++;
        rep.violations.push_back({lineno, reason});
        return;
      }
      records.push_back(std::move(rec));
      rep.ingested++;
    } catch (const nlohmann::json::exception& e) {
      rep.dropped++;
      rep.violations.push_back({lineno, std::string("schema: ") + e.what()});
    } catch (const MalformedFile& e) {
      rep.dropped++;
      rep.violations.push_back({lineno, e.what()});
    }
  });

  if (records.empty())
    throw EmptyCorpus("no valid records in " + path.generic_string() + " (" +
                      std::to_string(rep.dropped) + " dropped)");

  // Defined output order regardless of ingestion parallelism.
  std::stable_sort(records.begin(), records.end(),
                   [](const SourceRecord& a, const SourceRecord& b) {
                     const ImageRef& ia = record_image(a);
                     const ImageRef& ib = record_image(b);
                     if (ia.dataset_id != ib.dataset_id) return ia.dataset_id < ib.dataset_id;
                     if (ia.image_id != ib.image_id) return ia.image_id < ib.image_id;
                     return record_id(a) < record_id(b);
                   });
  return records;
}

inline Json record_to_json(const SourceRecord& rec) {
  Json j;
  if (const auto* cap = std::get_if<CaptionRecord>(&rec)) {
    Json espans = Json::array();
    for (const auto& s : cap->entity_spans)
      espans.push_back(Json{{"start", s.start},
                            {"end", s.end},
                            {"label", s.label},
                            {"bbox", s.bbox ? s.bbox->to_json() : Json(nullptr)}});
    Json nspans = Json::array();
    for (const auto& s : cap->number_spans)
      nspans.push_back(Json{{"start", s.start}, {"end", s.end}, {"value", s.value}});
    j = Json{{"kind", "caption"},          {"id", cap->id},
             {"image", cap->image.to_json()}, {"caption", cap->caption},
             {"entity_spans", espans},     {"number_spans", nspans}};
  } else if (const auto* obj = std::get_if<ObjectRecord>(&rec)) {
    Json attrs = Json::object();
    for (const auto& [k, v] : obj->attributes) attrs[k] = v;
    j = Json{{"kind", "object"},           {"id", obj->id},
             {"image", obj->image.to_json()}, {"bbox", obj->bbox.to_json()},
             {"category", obj->category},  {"attributes", attrs}};
  } else {
    const auto& rel = std::get<RelationRecord>(rec);
    j = Json{{"kind", "relation"},
             {"id", rel.id},
             {"image", rel.image.to_json()},
             {"subject", Json{{"category", rel.subject.category}, {"bbox", rel.subject.bbox.to_json()}}},
             {"predicate", rel.predicate},
             {"predicate_kind", to_string(rel.predicate_kind)},
             {"object", Json{{"category", rel.object.category}, {"bbox", rel.object.bbox.to_json()}}}};
  }
  return j;
}

// Immutable view of the corpus grouped by the grounding targets each record
// can supply ground truth for.
class CorpusIndex {
public:
  explicit CorpusIndex(std::vector<SourceRecord> records) : records_(std::move(records)) {
    for (size_t i = 0; i < records_.size(); ++i) {
      const SourceRecord& rec = records_[i];
      by_id_[record_id(rec)] = i;
      by_image_[record_image(rec).key()].push_back(i);
      if (const auto* cap = std::get_if<CaptionRecord>(&rec)) {
        if (!cap->entity_spans.empty()) groups_[GroundingTarget::Entity].push_back(i);
        if (!cap->number_spans.empty()) groups_[GroundingTarget::Number].push_back(i);
      } else if (const auto* obj = std::get_if<ObjectRecord>(&rec)) {
        if (obj->attributes.count("color")) groups_[GroundingTarget::Color].push_back(i);
        if (obj->attributes.count("material")) groups_[GroundingTarget::Material].push_back(i);
      } else if (const auto* rel = std::get_if<RelationRecord>(&rec)) {
        if (rel->predicate_kind == PredicateKind::Action)
          groups_[GroundingTarget::Action].push_back(i);
        else
          groups_[GroundingTarget::Spatial].push_back(i);
      }
    }
  }

  const std::vector<SourceRecord>& records() const { return records_; }

  std::vector<const SourceRecord*> for_target(GroundingTarget t) const {
    std::vector<const SourceRecord*> out;
    auto it = groups_.find(t);
    if (it == groups_.end()) return out;
    out.reserve(it->second.size());
    for (size_t i : it->second) out.push_back(&records_[i]);
    return out;
  }

  const SourceRecord* by_id(const std::string& id) const {
    auto it = by_id_.find(id);
    return it == by_id_.end() ? nullptr : &records_[it->second];
  }

  std::vector<const SourceRecord*> for_image(const std::string& image_key) const {
    std::vector<const SourceRecord*> out;
    auto it = by_image_.find(image_key);
    if (it == by_image_.end()) return out;
    for (size_t i : it->second) out.push_back(&records_[i]);
    return out;
  }

  std::vector<std::string> image_keys() const {
    std::vector<std::string> keys;
    keys.reserve(by_image_.size());
    for (const auto& [k, _] : by_image_) keys.push_back(k);
    return keys;
  }

private:
  std::vector<SourceRecord> records_;
  std::map<GroundingTarget, std::vector<size_t>> groups_;
  std::map<std::string, size_t> by_id_;
  std::map<std::string, std::vector<size_t>> by_image_;
};

inline CorpusIndex index(std::vector<SourceRecord> records) {
  return CorpusIndex(std::move(records));
}

struct TargetCounts {
  size_t records = 0;
  size_t unique_images = 0;
};

struct CorpusSummary {
  std::map<GroundingTarget, TargetCounts> per_target;
  size_t total_records = 0;
  size_t total_unique_images = 0;

  Json to_json() const {
    Json targets = Json::object();
    for (GroundingTarget t : kAllTargets) {
      auto it = per_target.find(t);
      TargetCounts c = it == per_target.end() ? TargetCounts{} : it->second;
      targets[to_string(t)] = Json{{"records", c.records}, {"unique_images", c.unique_images}};
    }
    return Json{{"per_target", targets},
                {"total_records", total_records},
                {"total_unique_images", total_unique_images}};
  }
};

inline CorpusSummary summarize_corpus(const CorpusIndex& idx) {
  CorpusSummary summary;
  std::set<std::string> all_images;
  for (GroundingTarget t : kAllTargets) {
    auto recs = idx.for_target(t);
    std::set<std::string> images;
    for (const auto* r : recs) images.insert(record_image(*r).key());
    summary.per_target[t] = {recs.size(), images.size()};
  }
  for (const auto& rec : idx.records()) all_images.insert(record_image(rec).key());
  summary.total_records = idx.records().size();
  summary.total_unique_images = all_images.size();
  return summary;
}

}  // namespace msg::corpus
