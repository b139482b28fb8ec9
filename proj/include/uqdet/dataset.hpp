// Copyright (c) 2026, The uqdet Authors. All rights reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// In-memory COCO-style detection dataset: parsing, validation, writing and
// summary statistics.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <variant>
#include <vector>

#include <json.hpp>

#include "uqdet/error.hpp"
#include "uqdet/io_util.hpp"

namespace uqdet {

using ImageId = std::uint64_t;
using AnnotationId = std::uint64_t;
using CategoryId = std::uint32_t;

/// Axis-aligned box in pixels, top-left origin: [x, y, width, height].
struct BBox {
  double x = 0, y = 0, w = 0, h = 0;

  double area() const { return w * h; }
  bool operator==(const BBox&) const = default;
};

struct ImageSize {
  double width = 0;
  double height = 0;
};

/// Clips `box` to [0,width] x [0,height]. A box entirely outside the image
/// comes back with zero area.
inline BBox clamp_box(const BBox& box, double width, double height) {
  const double x0 = std::clamp(box.x, 0.0, width);
  const double y0 = std::clamp(box.y, 0.0, height);
  const double x1 = std::clamp(box.x + box.w, 0.0, width);
  const double y1 = std::clamp(box.y + box.h, 0.0, height);
  return BBox{x0, y0, std::max(0.0, x1 - x0), std::max(0.0, y1 - y0)};
}

/// Polygon outlines, each a flat [x0, y0, x1, y1, ...] list in pixels.
struct PolygonMask {
  std::vector<std::vector<double>> polygons;
  bool operator==(const PolygonMask&) const = default;
};

/// Uncompressed run-length mask: column-major runs alternating background
/// and foreground, starting with background.
struct RleMask {
  std::uint32_t height = 0;
  std::uint32_t width = 0;
  std::vector<std::uint32_t> counts;
  bool operator==(const RleMask&) const = default;
};

/// Run-length mask with the counts in the compact COCO string encoding.
struct CompressedRleMask {
  std::uint32_t height = 0;
  std::uint32_t width = 0;
  std::string counts;
  bool operator==(const CompressedRleMask&) const = default;
};

using Mask = std::variant<PolygonMask, RleMask, CompressedRleMask>;

/// True if the mask carries no region description at all (e.g. the
/// `"segmentation": []` that box-only exporters emit).
inline bool mask_is_blank(const Mask& m) {
  if (const auto* p = std::get_if<PolygonMask>(&m)) return p->polygons.empty();
  return false;
}

struct ImageRecord {
  ImageId id = 0;
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::string file_name;
  nlohmann::json extra = nlohmann::json::object();  // unrecognised keys

  bool operator==(const ImageRecord&) const = default;
};

struct ObjectAnnotation {
  AnnotationId id = 0;
  ImageId image_id = 0;
  CategoryId category_id = 0;
  BBox bbox;  // as stored in the file; see clamp_box
  std::optional<Mask> mask;
  bool is_crowd = false;
  std::optional<double> area;
  nlohmann::json extra = nlohmann::json::object();

  bool operator==(const ObjectAnnotation&) const = default;
};

struct Category {
  CategoryId id = 0;
  std::string name;
  nlohmann::json extra = nlohmann::json::object();

  bool operator==(const Category&) const = default;
};

/// Ordered list of the K categories with id lookup.
class CategoryTable {
 public:
  CategoryTable() = default;
  explicit CategoryTable(std::vector<Category> categories) {
    for (auto& c : categories) add(std::move(c));
  }

  void add(Category c) {
    if (!lookup_.emplace(c.id, categories_.size()).second) {
      throw IntegrityError("duplicate category id " + std::to_string(c.id),
                           {c.id});
    }
    categories_.push_back(std::move(c));
  }

  bool contains(CategoryId id) const { return lookup_.count(id) != 0; }

  const Category& at(CategoryId id) const {
    auto it = lookup_.find(id);
    if (it == lookup_.end()) {
      throw IntegrityError("unknown category id " + std::to_string(id), {id});
    }
    return categories_[it->second];
  }

  const std::vector<Category>& categories() const { return categories_; }
  std::size_t size() const { return categories_.size(); }
  bool empty() const { return categories_.empty(); }

  bool operator==(const CategoryTable& o) const {
    return categories_ == o.categories_;
  }

 private:
  std::vector<Category> categories_;
  std::unordered_map<CategoryId, std::size_t> lookup_;
};

struct DatasetIndex {
  std::vector<ImageRecord> images;
  std::vector<ObjectAnnotation> annotations;
  CategoryTable categories;
  nlohmann::json extra = nlohmann::json::object();  // info, licenses, ...

  std::unordered_map<ImageId, const ImageRecord*> image_lookup() const {
    std::unordered_map<ImageId, const ImageRecord*> m;
    m.reserve(images.size());
    for (const auto& im : images) m.emplace(im.id, &im);
    return m;
  }

  bool operator==(const DatasetIndex&) const = default;
};

/// Side information gathered while parsing.
struct ParseReport {
  std::vector<AnnotationId> clamped;    // boxes that crossed the image border
  std::vector<AnnotationId> zero_area;  // empty after clamping; never scored
  std::size_t crowd = 0;
};

/// Whether an annotation takes part in scoring: positive clamped area and,
/// unless `include_crowd`, not a crowd region.
inline bool is_scoreable(const ObjectAnnotation& a, const ImageRecord& image,
                         bool include_crowd = false) {
  if (a.is_crowd && !include_crowd) return false;
  return clamp_box(a.bbox, image.width, image.height).area() > 0.0;
}

/// Checks referential integrity and id uniqueness. Throws IntegrityError
/// listing every offending annotation id.
inline void validate_dataset(const DatasetIndex& index) {
  if (index.categories.empty()) {
    throw IntegrityError("dataset has no categories", {});
  }
  std::unordered_set<ImageId> image_ids;
  for (const auto& im : index.images) {
    if (!image_ids.insert(im.id).second) {
      throw IntegrityError("duplicate image id " + std::to_string(im.id),
                           {im.id});
    }
    if (im.width == 0 || im.height == 0) {
      throw IntegrityError(
          "image " + std::to_string(im.id) + " has non-positive size", {im.id});
    }
  }
  std::unordered_set<AnnotationId> ann_ids;
  std::vector<std::uint64_t> offenders;
  std::string detail;
  for (const auto& a : index.annotations) {
    if (!ann_ids.insert(a.id).second) {
      throw IntegrityError("duplicate annotation id " + std::to_string(a.id),
                           {a.id});
    }
    const bool bad_image = image_ids.count(a.image_id) == 0;
    const bool bad_cat = !index.categories.contains(a.category_id);
    if (bad_image || bad_cat) {
      offenders.push_back(a.id);
      if (offenders.size() <= 10) {
        detail += "\n  annotation " + std::to_string(a.id) + ":";
        if (bad_image) detail += " missing image_id " + std::to_string(a.image_id);
        if (bad_cat) detail += " missing category_id " + std::to_string(a.category_id);
      }
    }
  }
  if (!offenders.empty()) {
    throw IntegrityError(std::to_string(offenders.size()) +
                             " annotation(s) with dangling references:" + detail,
                         std::move(offenders));
  }
}

namespace detail {

using nlohmann::json;

[[noreturn]] inline void schema_fail(const std::string& where,
                                     const std::string& msg) {
  throw ParseError(where + ": " + msg, 0);
}

inline std::uint64_t get_id(const json& obj, const char* key,
                            const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) schema_fail(where, std::string("missing '") + key + "'");
  if (!it->is_number_integer() || (it->is_number_integer() && !it->is_number_unsigned() &&
                                   it->get<std::int64_t>() < 0)) {
    schema_fail(where + "." + key, "expected a non-negative integer");
  }
  return it->get<std::uint64_t>();
}

inline double get_number(const json& v, const std::string& where) {
  if (!v.is_number()) schema_fail(where, "expected a number");
  double d = v.get<double>();
  if (!std::isfinite(d)) schema_fail(where, "non-finite value");
  return d;
}

inline json take_extra(const json& obj,
                       std::initializer_list<std::string_view> known) {
  json extra = json::object();
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (std::find(known.begin(), known.end(), it.key()) == known.end()) {
      extra[it.key()] = it.value();
    }
  }
  return extra;
}

inline Mask parse_mask(const json& seg, const std::string& where) {
  if (seg.is_array()) {
    PolygonMask pm;
    for (std::size_t i = 0; i < seg.size(); ++i) {
      const auto& poly = seg[i];
      const auto w = where + "[" + std::to_string(i) + "]";
      if (!poly.is_array()) schema_fail(w, "polygon must be an array");
      if (poly.size() % 2 != 0) schema_fail(w, "polygon has an odd coordinate count");
      std::vector<double> coords;
      coords.reserve(poly.size());
      for (const auto& c : poly) coords.push_back(get_number(c, w));
      pm.polygons.push_back(std::move(coords));
    }
    return pm;
  }
  if (seg.is_object()) {
    auto size = seg.find("size");
    auto counts = seg.find("counts");
    if (size == seg.end() || !size->is_array() || size->size() != 2) {
      schema_fail(where, "run-length mask needs size [h, w]");
    }
    if (counts == seg.end()) schema_fail(where, "run-length mask needs counts");
    const auto h = (*size)[0].get<std::uint32_t>();
    const auto w = (*size)[1].get<std::uint32_t>();
    if (counts->is_string()) {
      return CompressedRleMask{h, w, counts->get<std::string>()};
    }
    if (!counts->is_array()) schema_fail(where + ".counts", "expected array or string");
    RleMask rle{h, w, {}};
    std::uint64_t total = 0;
    for (const auto& c : *counts) {
      if (!c.is_number_unsigned()) schema_fail(where + ".counts", "expected non-negative integers");
      rle.counts.push_back(c.get<std::uint32_t>());
      total += rle.counts.back();
    }
    if (total != static_cast<std::uint64_t>(h) * w) {
      schema_fail(where + ".counts", "run lengths do not sum to h*w");
    }
    return rle;
  }
  schema_fail(where, "segmentation must be a polygon list or run-length object");
}

inline json mask_to_json(const Mask& m) {
  return std::visit(
      [](const auto& v) -> json {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, PolygonMask>) {
          json arr = json::array();
          for (const auto& p : v.polygons) arr.push_back(p);
          return arr;
        } else {
          json o = json::object();
          o["size"] = {v.height, v.width};
          o["counts"] = v.counts;
          return o;
        }
      },
      m);
}

}  // namespace detail

/// Parses COCO-style annotation JSON text. Box clamping and zero-area
/// boxes are recorded in `report`; everything else that violates the
/// schema or referential integrity throws.
inline DatasetIndex parse_dataset_json(std::string_view text,
                                       ParseReport* report = nullptr) {
  using nlohmann::json;
  json root;
  try {
    root = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("malformed JSON at byte ") +
                         std::to_string(e.byte) + ": " + e.what(),
                     e.byte);
  }
  if (!root.is_object()) detail::schema_fail("<root>", "expected an object");
  for (const char* key : {"images", "annotations", "categories"}) {
    auto it = root.find(key);
    if (it == root.end() || !it->is_array()) {
      detail::schema_fail("<root>", std::string("missing '") + key + "' array");
    }
  }

  DatasetIndex index;
  index.extra = detail::take_extra(root, {"images", "annotations", "categories"});

  const auto& cats = root["categories"];
  if (cats.empty()) detail::schema_fail("categories", "at least one category required");
  for (std::size_t i = 0; i < cats.size(); ++i) {
    const auto& c = cats[i];
    const auto where = "categories[" + std::to_string(i) + "]";
    if (!c.is_object()) detail::schema_fail(where, "expected an object");
    Category cat;
    const auto id = detail::get_id(c, "id", where);
    if (id > UINT32_MAX) detail::schema_fail(where + ".id", "category id exceeds 32 bits");
    cat.id = static_cast<CategoryId>(id);
    if (auto n = c.find("name"); n != c.end() && n->is_string()) cat.name = *n;
    cat.extra = detail::take_extra(c, {"id", "name"});
    index.categories.add(std::move(cat));
  }

  const auto& images = root["images"];
  index.images.reserve(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) {
    const auto& im = images[i];
    const auto where = "images[" + std::to_string(i) + "]";
    if (!im.is_object()) detail::schema_fail(where, "expected an object");
    ImageRecord rec;
    rec.id = detail::get_id(im, "id", where);
    const auto w = detail::get_id(im, "width", where);
    const auto h = detail::get_id(im, "height", where);
    if (w == 0 || h == 0 || w > UINT32_MAX || h > UINT32_MAX) {
      detail::schema_fail(where, "width and height must be positive");
    }
    rec.width = static_cast<std::uint32_t>(w);
    rec.height = static_cast<std::uint32_t>(h);
    if (auto f = im.find("file_name"); f != im.end() && f->is_string()) rec.file_name = *f;
    rec.extra = detail::take_extra(im, {"id", "width", "height", "file_name"});
    index.images.push_back(std::move(rec));
  }

  const auto& anns = root["annotations"];
  index.annotations.reserve(anns.size());
  for (std::size_t i = 0; i < anns.size(); ++i) {
    const auto& a = anns[i];
    const auto where = "annotations[" + std::to_string(i) + "]";
    if (!a.is_object()) detail::schema_fail(where, "expected an object");
    ObjectAnnotation ann;
    ann.id = detail::get_id(a, "id", where);
    ann.image_id = detail::get_id(a, "image_id", where);
    const auto cat = detail::get_id(a, "category_id", where);
    if (cat > UINT32_MAX) detail::schema_fail(where, "category id exceeds 32 bits");
    ann.category_id = static_cast<CategoryId>(cat);
    auto bb = a.find("bbox");
    if (bb == a.end() || !bb->is_array() || bb->size() != 4) {
      detail::schema_fail(where + ".bbox", "expected [x, y, width, height]");
    }
    ann.bbox = BBox{detail::get_number((*bb)[0], where + ".bbox"),
                    detail::get_number((*bb)[1], where + ".bbox"),
                    detail::get_number((*bb)[2], where + ".bbox"),
                    detail::get_number((*bb)[3], where + ".bbox")};
    if (ann.bbox.w < 0 || ann.bbox.h < 0) {
      detail::schema_fail(where + ".bbox", "negative width or height");
    }
    if (auto s = a.find("segmentation"); s != a.end() && !s->is_null()) {
      ann.mask = detail::parse_mask(*s, where + ".segmentation");
    }
    if (auto c = a.find("iscrowd"); c != a.end()) {
      if (c->is_boolean()) {
        ann.is_crowd = c->get<bool>();
      } else if (c->is_number_integer()) {
        ann.is_crowd = c->get<std::int64_t>() != 0;
      } else {
        detail::schema_fail(where + ".iscrowd", "expected 0/1");
      }
    }
    if (auto ar = a.find("area"); ar != a.end()) {
      ann.area = detail::get_number(*ar, where + ".area");
    }
    ann.extra = detail::take_extra(
        a, {"id", "image_id", "category_id", "bbox", "segmentation", "iscrowd", "area"});
    index.annotations.push_back(std::move(ann));
  }

  validate_dataset(index);

  if (report) {
    *report = ParseReport{};
    auto lookup = index.image_lookup();
    for (const auto& a : index.annotations) {
      const auto* im = lookup.at(a.image_id);
      const auto c = clamp_box(a.bbox, im->width, im->height);
      if (!(c == a.bbox)) report->clamped.push_back(a.id);
      if (c.area() <= 0.0) report->zero_area.push_back(a.id);
      if (a.is_crowd) ++report->crowd;
    }
  }
  return index;
}

inline DatasetIndex parse_dataset(const std::filesystem::path& path,
                                  ParseReport* report = nullptr) {
  const auto data = io::read_file(path);
  try {
    return parse_dataset_json(std::string_view(data.data(), data.size()), report);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what(), e.offset());
  }
}

/// Serialises to compact COCO JSON. Known keys come first in the
/// conventional order, followed by any preserved extra keys.
inline std::string dataset_to_json(const DatasetIndex& index) {
  using ojson = nlohmann::ordered_json;
  ojson root = ojson::object();
  for (auto it = index.extra.begin(); it != index.extra.end(); ++it) {
    root[it.key()] = it.value();
  }
  ojson images = ojson::array();
  for (const auto& im : index.images) {
    ojson o;
    o["id"] = im.id;
    o["width"] = im.width;
    o["height"] = im.height;
    o["file_name"] = im.file_name;
    for (auto it = im.extra.begin(); it != im.extra.end(); ++it) o[it.key()] = it.value();
    images.push_back(std::move(o));
  }
  ojson anns = ojson::array();
  for (const auto& a : index.annotations) {
    ojson o;
    o["id"] = a.id;
    o["image_id"] = a.image_id;
    o["category_id"] = a.category_id;
    o["bbox"] = {a.bbox.x, a.bbox.y, a.bbox.w, a.bbox.h};
    if (a.area) o["area"] = *a.area;
    o["iscrowd"] = a.is_crowd ? 1 : 0;
    if (a.mask) o["segmentation"] = ojson::parse(detail::mask_to_json(*a.mask).dump());
    for (auto it = a.extra.begin(); it != a.extra.end(); ++it) o[it.key()] = it.value();
    anns.push_back(std::move(o));
  }
  ojson cats = ojson::array();
  for (const auto& c : index.categories.categories()) {
    ojson o;
    o["id"] = c.id;
    o["name"] = c.name;
    for (auto it = c.extra.begin(); it != c.extra.end(); ++it) o[it.key()] = it.value();
    cats.push_back(std::move(o));
  }
  root["images"] = std::move(images);
  root["annotations"] = std::move(anns);
  root["categories"] = std::move(cats);
  return root.dump();
}

inline void write_dataset(const DatasetIndex& index,
                          const std::filesystem::path& path) {
  io::write_file_atomic(path, dataset_to_json(index));
}

struct DatasetStats {
  std::size_t image_count = 0;
  std::size_t annotation_count = 0;
  std::map<CategoryId, std::size_t> per_category;  // every category, zeros included
  double mean_instances_per_image = 0.0;
  std::size_t max_instances_per_image = 0;
};

inline DatasetStats dataset_stats(const DatasetIndex& index) {
  DatasetStats s;
  s.image_count = index.images.size();
  s.annotation_count = index.annotations.size();
  for (const auto& c : index.categories.categories()) s.per_category[c.id] = 0;
  std::unordered_map<ImageId, std::size_t> per_image;
  for (const auto& im : index.images) per_image[im.id] = 0;
  for (const auto& a : index.annotations) {
    ++s.per_category[a.category_id];
    ++per_image[a.image_id];
  }
  for (const auto& [id, n] : per_image) {
    s.max_instances_per_image = std::max(s.max_instances_per_image, n);
  }
  if (s.image_count > 0) {
    s.mean_instances_per_image =
        static_cast<double>(s.annotation_count) / static_cast<double>(s.image_count);
  }
  return s;
}

}  // namespace uqdet
