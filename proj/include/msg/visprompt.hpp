#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <mutex>
#include <string>

#include "msg/errors.hpp"
#include "msg/png.hpp"
#include "msg/rng.hpp"
#include "msg/strings.hpp"
#include "msg/types.hpp"

namespace msg::visprompt {

namespace fs = std::filesystem;

struct PromptColor {
  std::string name;  // "green" | "red"
  std::array<uint8_t, 3> rgb{};
};

inline PromptColor green() { return {"green", {0, 255, 0}}; }
inline PromptColor red() { return {"red", {255, 0, 0}}; }

// Uniform draw over {green, red}; the chosen name is what fills the
// [bbox-color] placeholder.
inline PromptColor choose_prompt_color(RngStream& rng) {
  return rng.bounded(2) == 0 ? green() : red();
}

// Default 3 px, scaled up for large frames so the box stays visible.
inline int default_stroke(int width, int height) {
  int scaled = static_cast<int>(0.004 * std::min(width, height) + 0.5);
  return std::max(3, scaled);
}

// Draw a rectangle outline of exactly `stroke` px inside the box bounds.
// Interior pixels are untouched; output dimensions equal input.
inline png::Raster draw_bbox(png::Raster image, const BBox& box, const PromptColor& color,
                             int stroke) {
  if (stroke < 1) throw BBoxOutOfImage("stroke must be >= 1");
  if (!box.valid_for(image.width, image.height))
    throw BBoxOutOfImage("bbox (" + std::to_string(box.x_min) + "," + std::to_string(box.y_min) +
                         "," + std::to_string(box.x_max) + "," + std::to_string(box.y_max) +
                         ") does not fit a " + std::to_string(image.width) + "x" +
                         std::to_string(image.height) + " image");
  const int s = std::min({stroke, (box.x_max - box.x_min + 1) / 2, (box.y_max - box.y_min + 1) / 2});
  for (int y = box.y_min; y < box.y_max; ++y) {
    for (int x = box.x_min; x < box.x_max; ++x) {
      bool on_frame = y < box.y_min + s || y >= box.y_max - s || x < box.x_min + s ||
                      x >= box.x_max - s;
      if (on_frame) image.set_pixel(x, y, color.rgb);
    }
  }
  return image;
}

// Renders box overlays next to the originals, reusing files across
// regeneration: the file name encodes (image id, boxes hash, colors), so an
// existing file is a cache hit.
class RenderCache {
public:
  explicit RenderCache(fs::path out_dir) : out_dir_(std::move(out_dir)) {}

  struct Overlay {
    BBox box;
    PromptColor color;
  };

  // Returns the rendered file path (relative to the cache's parent usage is
  // up to the caller; the path returned here is out_dir / name).
  fs::path render(const ImageRef& image, const std::vector<Overlay>& overlays, int stroke) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (const auto& o : overlays) {
      std::string desc = std::to_string(o.box.x_min) + "," + std::to_string(o.box.y_min) + "," +
                         std::to_string(o.box.x_max) + "," + std::to_string(o.box.y_max) + ":" +
                         o.color.name + ";";
      h = str::fnv1a64(desc, h);
    }
    h = str::fnv1a64("stroke=" + std::to_string(stroke), h);
    std::string name = image.dataset_id + "_" + image.image_id + "_" + str::hex64(h) + ".png";
    fs::path out_path = out_dir_ / name;

    {
      std::lock_guard<std::mutex> lock(mutex_);
      if (fs::exists(out_path)) {
        ++hits_;
        return out_path;
      }
    }
    png::Raster raster = png::read_file(image.path);
    for (const auto& o : overlays) raster = draw_bbox(std::move(raster), o.box, o.color, stroke);
    png::write_file(out_path, raster);  // write-temp-then-rename
    {
      std::lock_guard<std::mutex> lock(mutex_);
      ++misses_;
    }
    return out_path;
  }

  size_t hits() const { return hits_; }
  size_t misses() const { return misses_; }
  const fs::path& dir() const { return out_dir_; }

private:
  fs::path out_dir_;
  std::mutex mutex_;
  size_t hits_ = 0;
  size_t misses_ = 0;
};

}  // namespace msg::visprompt
