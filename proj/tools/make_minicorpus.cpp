// Regenerates the bundled mini corpus under assets/minicorpus: synthetic
// images, canonical records, and the tally manifest the tests check against.
// The corpus is committed; rerun this tool only when changing its content.

#include <array>
#include <filesystem>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "msg/corpus.hpp"
#include "msg/png.hpp"
#include "msg/strings.hpp"
#include "msg/types.hpp"

namespace fs = std::filesystem;
using msg::BBox;
using msg::Json;
using msg::png::Raster;

namespace {

const std::map<std::string, std::array<uint8_t, 3>>& color_rgb() {
  static const std::map<std::string, std::array<uint8_t, 3>> map = {
      {"red", {220, 60, 47}},      {"blue", {38, 139, 210}},   {"green", {64, 160, 70}},
      {"yellow", {230, 200, 60}},  {"purple", {130, 80, 180}}, {"orange", {235, 140, 40}},
      {"pink", {240, 150, 180}},   {"brown", {140, 95, 60}},   {"black", {30, 30, 30}},
      {"white", {245, 245, 245}},  {"gray", {130, 130, 130}},  {"teal", {40, 150, 150}},
      {"maroon", {120, 30, 45}},   {"olive", {120, 120, 45}},  {"navy", {25, 40, 100}},
      {"beige", {220, 200, 170}},  {"turquoise", {60, 200, 190}}, {"gold", {212, 175, 55}},
      {"magenta", {200, 40, 160}}, {"khaki", {195, 176, 125}}, {"lavender", {181, 157, 220}},
      {"silver", {180, 185, 190}}, {"indigo", {75, 60, 150}},  {"mint", {150, 230, 190}},
      {"salmon", {250, 128, 114}}, {"violet", {160, 80, 220}}};
  return map;
}

std::array<uint8_t, 3> rgb_for(const std::string& name) {
  auto it = color_rgb().find(name);
  if (it != color_rgb().end()) return it->second;
  return {150, 130, 110};  // generic object tone
}

constexpr int kW = 320;
constexpr int kH = 240;

Raster blank_scene() {
  Raster img = Raster::filled(kW, kH, {236, 233, 226});
  // simple ground band so scenes aren't uniform
  img.fill_rect(0, 190, kW, kH, {214, 206, 188});
  return img;
}

struct ObjSpec {
  std::string category, color, material;
};

struct RelSpec {
  std::string subject, predicate, object;
  bool spatial;
};

// caption parts; an empty label means plain text
struct Part {
  std::string text;
  std::string entity_label;  // entity span when non-empty
  long number = -1;          // number span when >= 0
  bool boxed = false;
};

struct CaptionSpec {
  std::vector<Part> parts;
};

}  // namespace

int main(int argc, char** argv) {
  fs::path out_root = argc > 1 ? argv[1] : "assets/minicorpus";
  fs::path images_dir = out_root / "images";
  fs::create_directories(images_dir);

  std::vector<Json> records;
  std::vector<Json> detection_subset;  // 20-record detection-jsonl fixture

  size_t image_count = 0;
  auto image_ref = [&](const std::string& image_id) {
    return Json{{"dataset_id", "mini"},
                {"image_id", image_id},
                {"path", "images/" + image_id + ".png"},
                {"width", kW},
                {"height", kH}};
  };

  // ---- object records: 13 images x 2 objects -------------------------------
  const std::vector<ObjSpec> objects = {
      {"ball", "red", "rubber"},        {"mug", "blue", "ceramic"},
      {"chair", "brown", "wood"},       {"vase", "white", "glass"},
      {"scarf", "purple", "wool"},      {"backpack", "green", "canvas"},
      {"lamp", "yellow", "metal"},      {"pillow", "pink", "cotton"},
      {"bottle", "teal", "plastic"},    {"plate", "gray", "porcelain"},
      {"hat", "black", "felt"},         {"boot", "maroon", "leather"},
      {"kite", "orange", "paper"},      {"drum", "olive", "bamboo"},
      {"bench", "navy", "stone"},       {"jacket", "beige", "denim"},
      {"bowl", "turquoise", "clay"},    {"clock", "gold", "brass"},
      {"wallet", "magenta", "silk"},    {"basket", "khaki", "cork"},
      {"sofa", "lavender", "velvet"},   {"teapot", "silver", "copper"},
      {"guitar", "indigo", "steel"},    {"curtain", "mint", "marble"},
      {"box", "salmon", "iron"},        {"umbrella", "violet", "foam"}};

  size_t obj_seq = 0;
  for (size_t i = 0; i < objects.size(); i += 2) {
    char img_id[32];
    std::snprintf(img_id, sizeof(img_id), "obj-%02zu", i / 2 + 1);
    Raster img = blank_scene();
    ++image_count;

    const BBox left{36, 64, 140, 168};
    const BBox right{180, 72, 284, 176};
    for (size_t k = 0; k < 2 && i + k < objects.size(); ++k) {
      const ObjSpec& spec = objects[i + k];
      const BBox& box = k == 0 ? left : right;
      img.fill_rect(box.x_min, box.y_min, box.x_max, box.y_max, rgb_for(spec.color));
      char rec_id[32];
      std::snprintf(rec_id, sizeof(rec_id), "mini-obj-%04zu", ++obj_seq);
      Json rec{{"kind", "object"},
               {"id", rec_id},
               {"image", image_ref(img_id)},
               {"bbox", Json::array({box.x_min, box.y_min, box.x_max, box.y_max})},
               {"category", spec.category},
               {"attributes", Json{{"color", spec.color}, {"material", spec.material}}}};
      records.push_back(rec);
      if (detection_subset.size() < 20) {
        Json det = rec;
        det.erase("kind");
        detection_subset.push_back(det);
      }
    }
    msg::png::write_file(images_dir / (std::string(img_id) + ".png"), img);
  }

  // ---- relation records: one per image ---------------------------------------
  const std::vector<RelSpec> relations = {
      {"dog", "to the left of", "cat", true},
      {"book", "on top of", "table", true},
      {"lamp", "to the right of", "sofa", true},
      {"ball", "under", "bench", true},
      {"bird", "above", "fence", true},
      {"kite", "behind", "tree", true},
      {"bicycle", "in front of", "house", true},
      {"shoe", "inside", "box", true},
      {"cup", "next to", "plate", true},
      {"backpack", "beside", "chair", true},
      {"cat", "below", "window", true},
      {"dog", "near", "door", true},
      {"man", "holding", "umbrella", false},
      {"woman", "riding", "bicycle", false},
      {"boy", "kicking", "ball", false},
      {"girl", "throwing", "frisbee", false},
      {"dog", "chasing", "cat", false},
      {"man", "pushing", "cart", false},
      {"woman", "pulling", "wagon", false},
      {"child", "carrying", "backpack", false},
      {"man", "lifting", "box", false},
      {"girl", "catching", "ball", false},
      {"woman", "reading", "book", false},
      {"boy", "feeding", "bird", false},
      {"man", "painting", "fence", false},
      {"girl", "washing", "dog", false}};

  for (size_t i = 0; i < relations.size(); ++i) {
    const RelSpec& rel = relations[i];
    char img_id[32];
    std::snprintf(img_id, sizeof(img_id), "rel-%02zu", i + 1);
    Raster img = blank_scene();
    ++image_count;

    const BBox subj{30, 70, 120, 170};
    const BBox obj{200, 80, 290, 180};
    img.fill_rect(subj.x_min, subj.y_min, subj.x_max, subj.y_max, {96, 120, 168});
    img.fill_rect(obj.x_min, obj.y_min, obj.x_max, obj.y_max, {168, 120, 96});
    msg::png::write_file(images_dir / (std::string(img_id) + ".png"), img);

    char rec_id[32];
    std::snprintf(rec_id, sizeof(rec_id), "mini-rel-%04zu", i + 1);
    records.push_back(
        Json{{"kind", "relation"},
             {"id", rec_id},
             {"image", image_ref(img_id)},
             {"subject", Json{{"category", rel.subject},
                              {"bbox", Json::array({subj.x_min, subj.y_min, subj.x_max, subj.y_max})}}},
             {"predicate", rel.predicate},
             {"predicate_kind", rel.spatial ? "spatial" : "action"},
             {"object", Json{{"category", rel.object},
                             {"bbox", Json::array({obj.x_min, obj.y_min, obj.x_max, obj.y_max})}}}});
  }

  // ---- caption records: 13 images x 2 captions ---------------------------------
  auto ent = [](const std::string& text, bool boxed = true) {
    return Part{text, text, -1, boxed};
  };
  auto num = [](const std::string& text, long value) { return Part{text, "", value, false}; };
  auto txt = [](const std::string& text) { return Part{text, "", -1, false}; };

  const std::vector<std::pair<CaptionSpec, CaptionSpec>> caption_pairs = {
      {{{txt("a brown "), ent("dog"), txt(" runs across the sandy beach")}},
       {{num("two", 2), txt(" "), ent("birds"), txt(" stand near the water")}}},
      {{{txt("a red "), ent("car"), txt(" is parked beside the old "), ent("house", false)}},
       {{num("three", 3), txt(" "), ent("bicycles"), txt(" lean against the brick wall")}}},
      {{{txt("a young "), ent("girl"), txt(" holds a yellow balloon")}},
       {{num("four", 4), txt(" "), ent("cups"), txt(" sit on the wooden "), ent("table", false)}}},
      {{{txt("a "), ent("man"), txt(" in a blue jacket waves from the "), ent("boat", false)}},
       {{num("five", 5), txt(" "), ent("flowers"), txt(" bloom in the garden")}}},
      {{{txt("a white "), ent("cat"), txt(" sleeps on the soft "), ent("chair", false)}},
       {{num("six", 6), txt(" "), ent("books"), txt(" are stacked on the desk")}}},
      {{{txt("a small "), ent("bird"), txt(" perches on the fence")}},
       {{num("seven", 7), txt(" "), ent("boats"), txt(" float near the wooden pier")}}},
      {{{txt("a "), ent("woman"), txt(" carries a large "), ent("basket", false)}},
       {{num("eight", 8), txt(" "), ent("trees"), txt(" line the quiet street")}}},
      {{{txt("a "), ent("horse"), txt(" grazes in the green field")}},
       {{num("nine", 9), txt(" "), ent("balls"), txt(" are scattered across the floor")}}},
      {{{txt("a "), ent("child"), txt(" flies a colorful "), ent("kite", false)}},
       {{num("ten", 10), txt(" "), ent("chairs"), txt(" surround the long table")}}},
      {{{txt("a black "), ent("umbrella"), txt(" leans by the door")}},
       {{num("eleven", 11), txt(" "), ent("birds"), txt(" rest on the wire")}}},
      {{{txt("a "), ent("guitar"), txt(" rests against the wall")}},
       {{num("twelve", 12), txt(" "), ent("strawberries"), txt(" fill the small "),
         ent("bowl", false)}}},
      {{{txt("a café "), ent("table"), txt(" stands under a striped awning")}},
       {{num("fifteen", 15), txt(" "), ent("cars"), txt(" wait at the crossing")}}},
      {{{txt("a "), ent("boy"), txt(" wearing a green "), ent("hat", false), txt(" smiles")}},
       {{num("twenty", 20), txt(" "), ent("houses"), txt(" dot the hillside")}}}};

  size_t cap_seq = 0;
  size_t entity_span_count = 0, number_span_count = 0;
  for (size_t i = 0; i < caption_pairs.size(); ++i) {
    char img_id[32];
    std::snprintf(img_id, sizeof(img_id), "cap-%02zu", i + 1);
    Raster img = blank_scene();
    ++image_count;

    std::vector<BBox> slots = {{30, 70, 120, 170}, {150, 60, 230, 150}, {240, 90, 306, 172}};
    size_t slot = 0;
    auto emit_caption = [&](const CaptionSpec& spec) {
      std::string caption;
      Json entity_spans = Json::array();
      Json number_spans = Json::array();
      for (const auto& part : spec.parts) {
        size_t start = msg::str::cp_length(caption);
        caption += part.text;
        size_t end = msg::str::cp_length(caption);
        if (!part.entity_label.empty()) {
          Json span{{"start", start}, {"end", end}, {"label", part.entity_label}};
          if (part.boxed && slot < slots.size()) {
            const BBox& b = slots[slot++];
            img.fill_rect(b.x_min, b.y_min, b.x_max, b.y_max, {150, 130, 110});
            span["bbox"] = Json::array({b.x_min, b.y_min, b.x_max, b.y_max});
          } else {
            span["bbox"] = nullptr;
          }
          entity_spans.push_back(span);
          ++entity_span_count;
        } else if (part.number >= 0) {
          number_spans.push_back(Json{{"start", start}, {"end", end}, {"value", part.number}});
          ++number_span_count;
        }
      }
      char rec_id[32];
      std::snprintf(rec_id, sizeof(rec_id), "mini-cap-%04zu", ++cap_seq);
      records.push_back(Json{{"kind", "caption"},
                             {"id", rec_id},
                             {"image", image_ref(img_id)},
                             {"caption", caption},
                             {"entity_spans", entity_spans},
                             {"number_spans", number_spans}});
    };
    emit_caption(caption_pairs[i].first);
    emit_caption(caption_pairs[i].second);
    msg::png::write_file(images_dir / (std::string(img_id) + ".png"), img);
  }

  // ---- write record files ----------------------------------------------------
  {
    std::ofstream out(out_root / "records.jsonl");
    for (const auto& rec : records) out << rec.dump() << "\n";
  }
  {
    std::ofstream out(out_root / "detections.jsonl");
    for (const auto& rec : detection_subset) out << rec.dump() << "\n";
  }

  // ---- tally manifest ----------------------------------------------------------
  std::map<std::string, size_t> kind_counts;
  std::set<std::string> images_with_color, images_with_material, images_action, images_spatial;
  size_t color_records = 0, material_records = 0, action_records = 0, spatial_records = 0;
  std::set<std::string> entity_images, number_images;
  size_t entity_records = 0, number_records = 0;
  for (const auto& rec : records) {
    std::string kind = rec.at("kind");
    kind_counts[kind]++;
    std::string img = rec.at("image").at("image_id");
    if (kind == "object") {
      ++color_records;
      ++material_records;
      images_with_color.insert(img);
      images_with_material.insert(img);
    } else if (kind == "relation") {
      if (rec.at("predicate_kind") == "spatial") {
        ++spatial_records;
        images_spatial.insert(img);
      } else {
        ++action_records;
        images_action.insert(img);
      }
    } else {
      if (!rec.at("entity_spans").empty()) {
        ++entity_records;
        entity_images.insert(img);
      }
      if (!rec.at("number_spans").empty()) {
        ++number_records;
        number_images.insert(img);
      }
    }
  }

  Json manifest{
      {"records", records.size()},
      {"images", image_count},
      {"by_kind", Json{{"caption", kind_counts["caption"]},
                       {"object", kind_counts["object"]},
                       {"relation", kind_counts["relation"]}}},
      {"entity_spans", entity_span_count},
      {"number_spans", number_span_count},
      {"detections_subset", detection_subset.size()},
      {"per_target",
       Json{{"Entity", Json{{"records", entity_records}, {"unique_images", entity_images.size()}}},
            {"Number", Json{{"records", number_records}, {"unique_images", number_images.size()}}},
            {"Color",
             Json{{"records", color_records}, {"unique_images", images_with_color.size()}}},
            {"Material",
             Json{{"records", material_records}, {"unique_images", images_with_material.size()}}},
            {"Action",
             Json{{"records", action_records}, {"unique_images", images_action.size()}}},
            {"Spatial",
             Json{{"records", spatial_records}, {"unique_images", images_spatial.size()}}}}}};
  std::ofstream(out_root / "manifest.json") << manifest.dump(2) << "\n";

  std::cout << "wrote " << records.size() << " records, " << image_count << " images -> "
            << out_root.generic_string() << "\n";
  return 0;
}
