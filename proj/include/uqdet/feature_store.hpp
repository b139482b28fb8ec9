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

// Per-image feature grids, region pooling, and the per-object feature
// archive.
//
// Grid geometry: a map of grid_w x grid_h cells spans the whole image, so
// one cell is (width / grid_w) x (height / grid_h) pixels. Cell (r, c) has
// its center at grid coordinates (c + 0.5, r + 0.5).

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "uqdet/dataset.hpp"
#include "uqdet/error.hpp"
#include "uqdet/io_util.hpp"

namespace uqdet {

inline constexpr std::string_view kFeatureMapMagic = "UQFM0001";
inline constexpr std::string_view kFeatureArchiveMagic = "UQFA0001";

struct FeatureMap {
  std::uint32_t image_id = 0;
  std::uint32_t grid_h = 0;
  std::uint32_t grid_w = 0;
  std::uint32_t dim = 0;
  std::vector<float> data;  // row-major, channel-fastest

  std::span<const float> cell(std::uint32_t row, std::uint32_t col) const {
    const std::size_t off =
        (static_cast<std::size_t>(row) * grid_w + col) * dim;
    return {data.data() + off, dim};
  }

  /// Pixels per cell along each axis for an image of the given size.
  std::pair<double, double> source_stride(ImageSize image) const {
    return {image.width / grid_w, image.height / grid_h};
  }
};

inline std::vector<char> encode_feature_map(const FeatureMap& map) {
  io::ByteWriter w;
  w.bytes(kFeatureMapMagic);
  w.put<std::uint32_t>(map.image_id);
  w.put<std::uint32_t>(map.grid_h);
  w.put<std::uint32_t>(map.grid_w);
  w.put<std::uint32_t>(map.dim);
  w.put_all<float>(map.data);
  return w.buffer();
}

inline FeatureMap decode_feature_map(std::span<const char> bytes,
                                     const std::string& what = "feature map") {
  io::ByteReader r(bytes, what);
  if (bytes.size() < kFeatureMapMagic.size() ||
      r.bytes(kFeatureMapMagic.size()) != kFeatureMapMagic) {
    throw FormatError(what + ": bad magic, expected UQFM0001");
  }
  FeatureMap m;
  m.image_id = r.get<std::uint32_t>();
  m.grid_h = r.get<std::uint32_t>();
  m.grid_w = r.get<std::uint32_t>();
  m.dim = r.get<std::uint32_t>();
  if (m.grid_h == 0 || m.grid_w == 0 || m.dim == 0) {
    throw FormatError(what + ": zero grid dimension");
  }
  // Sizes come from untrusted input; multiply in 64 bits and compare
  // against what is actually there before allocating.
  const std::uint64_t n = static_cast<std::uint64_t>(m.grid_h) * m.grid_w * m.dim;
  if (n > r.remaining() / sizeof(float)) {
    throw CorruptionError(what + ": header declares " + std::to_string(n) +
                          " floats but only " + std::to_string(r.remaining()) +
                          " payload bytes present");
  }
  m.data.resize(n);
  r.get_all<float>(m.data);
  if (r.remaining() != 0) {
    throw CorruptionError(what + ": " + std::to_string(r.remaining()) +
                          " trailing bytes");
  }
  for (float v : m.data) {
    if (!std::isfinite(v)) throw CorruptionError(what + ": non-finite feature value");
  }
  return m;
}

inline FeatureMap read_feature_map(const std::filesystem::path& path) {
  const auto bytes = io::read_file(path);
  return decode_feature_map(bytes, path.string());
}

inline void write_feature_map(const FeatureMap& map,
                              const std::filesystem::path& path) {
  io::write_file_atomic(path, encode_feature_map(map));
}

namespace detail {

// Mean over a set of cells, accumulated in double in row-major order.
template <typename CellPred>
std::vector<double> mean_over_cells(const FeatureMap& map, std::uint32_t r0,
                                    std::uint32_t r1, std::uint32_t c0,
                                    std::uint32_t c1, CellPred&& take,
                                    std::size_t* taken) {
  std::vector<double> acc(map.dim, 0.0);
  std::size_t n = 0;
  for (std::uint32_t r = r0; r < r1; ++r) {
    for (std::uint32_t c = c0; c < c1; ++c) {
      if (!take(r, c)) continue;
      auto v = map.cell(r, c);
      for (std::uint32_t k = 0; k < map.dim; ++k) acc[k] += v[k];
      ++n;
    }
  }
  if (n > 0) {
    for (auto& a : acc) a /= static_cast<double>(n);
  }
  *taken = n;
  return acc;
}

inline std::vector<double> cell_vector(const FeatureMap& map, std::uint32_t r,
                                       std::uint32_t c) {
  auto v = map.cell(r, c);
  return {v.begin(), v.end()};
}

inline std::uint32_t cell_index(double g, std::uint32_t n) {
  if (!(g > 0.0)) return 0;
  return std::min<std::uint32_t>(static_cast<std::uint32_t>(std::floor(g)), n - 1);
}

}  // namespace detail

/// Mean feature over the cells whose centers lie in the box (lower edges
/// inclusive, upper edges exclusive). When no center falls inside, the cell
/// containing the box center is returned.
inline std::vector<double> pool_box(const FeatureMap& map, const BBox& bbox,
                                    ImageSize image) {
  if (!(image.width > 0 && image.height > 0)) {
    throw InvalidArgumentError("pool_box: image size must be positive");
  }
  const BBox b = clamp_box(bbox, image.width, image.height);
  if (!(b.area() > 0.0)) {
    throw DegenerateRegionError("pool_box: box has zero area inside the image");
  }
  const double gw = map.grid_w, gh = map.grid_h;
  const double gx0 = b.x * gw / image.width, gx1 = (b.x + b.w) * gw / image.width;
  const double gy0 = b.y * gh / image.height, gy1 = (b.y + b.h) * gh / image.height;

  // Candidate range: centers c + 0.5 in [g0, g1).
  auto first = [](double g0) {
    return static_cast<std::int64_t>(std::ceil(g0 - 0.5));
  };
  auto last = [](double g1) {  // exclusive
    return static_cast<std::int64_t>(std::ceil(g1 - 0.5));
  };
  const auto c0 = std::clamp<std::int64_t>(first(gx0), 0, map.grid_w);
  const auto c1 = std::clamp<std::int64_t>(last(gx1), 0, map.grid_w);
  const auto r0 = std::clamp<std::int64_t>(first(gy0), 0, map.grid_h);
  const auto r1 = std::clamp<std::int64_t>(last(gy1), 0, map.grid_h);

  std::size_t n = 0;
  auto out = detail::mean_over_cells(
      map, static_cast<std::uint32_t>(r0), static_cast<std::uint32_t>(std::max(r0, r1)),
      static_cast<std::uint32_t>(c0), static_cast<std::uint32_t>(std::max(c0, c1)),
      [&](std::uint32_t r, std::uint32_t c) {
        const double cx = c + 0.5, cy = r + 0.5;
        return cx >= gx0 && cx < gx1 && cy >= gy0 && cy < gy1;
      },
      &n);
  if (n > 0) return out;
  return detail::cell_vector(map, detail::cell_index(0.5 * (gy0 + gy1), map.grid_h),
                             detail::cell_index(0.5 * (gx0 + gx1), map.grid_w));
}

namespace detail {

struct Pt {
  double x, y;
};

inline double polygon_area(const std::vector<Pt>& p) {
  double s = 0.0;
  for (std::size_t i = 0, n = p.size(); i < n; ++i) {
    const Pt& a = p[i];
    const Pt& b = p[(i + 1) % n];
    s += a.x * b.y - b.x * a.y;
  }
  return 0.5 * std::abs(s);
}

/// Decodes the compact COCO run-length string into run lengths.
inline std::vector<std::uint32_t> decode_rle_string(const std::string& s) {
  std::vector<std::int64_t> cnts;
  std::size_t p = 0;
  while (p < s.size()) {
    std::int64_t x = 0;
    int k = 0;
    bool more = true;
    while (more) {
      if (p >= s.size()) throw ParseError("truncated run-length string", p);
      const int c = static_cast<int>(s[p]) - 48;
      if (c < 0 || c > 63) throw ParseError("bad character in run-length string", p);
      x |= static_cast<std::int64_t>(c & 0x1f) << (5 * k);
      more = (c & 0x20) != 0;
      ++p;
      ++k;
      if (!more && (c & 0x10)) x |= -(static_cast<std::int64_t>(1) << (5 * k));
    }
    if (cnts.size() > 2) x += cnts[cnts.size() - 2];
    cnts.push_back(x);
  }
  std::vector<std::uint32_t> out;
  out.reserve(cnts.size());
  for (auto c : cnts) {
    if (c < 0) throw ParseError("negative run length in run-length string", 0);
    out.push_back(static_cast<std::uint32_t>(c));
  }
  return out;
}

/// Grid cells whose centers fall inside a mask, plus the mask's pixel
/// bounding box in its own frame.
struct CellSelection {
  std::vector<char> inside;  // grid_h * grid_w
  BBox bounds;
  double area = 0.0;  // pixels
};

// Crossing-number test. Boundaries follow pool_box: a point on a left or top
// edge is inside, on a right or bottom edge outside.
inline bool point_in_polygon(const std::vector<Pt>& poly, double px, double py) {
  bool in = false;
  for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
    const Pt& a = poly[i];
    const Pt& b = poly[j];
    if ((a.y > py) != (b.y > py)) {
      const double x = a.x + (py - a.y) * (b.x - a.x) / (b.y - a.y);
      if (px < x) in = !in;
    }
  }
  return in;
}

inline CellSelection polygon_cells(const PolygonMask& m, std::uint32_t gh, std::uint32_t gw,
                                   ImageSize image) {
  CellSelection sel;
  sel.inside.assign(static_cast<std::size_t>(gh) * gw, 0);
  double bx0 = INFINITY, by0 = INFINITY, bx1 = -INFINITY, by1 = -INFINITY;
  for (const auto& flat : m.polygons) {
    if (flat.size() < 6) continue;
    std::vector<Pt> pix, grid;
    for (std::size_t i = 0; i + 1 < flat.size(); i += 2) {
      pix.push_back({flat[i], flat[i + 1]});
      // Same pixel-to-grid arithmetic as pool_box.
      grid.push_back({flat[i] * gw / image.width, flat[i + 1] * gh / image.height});
      bx0 = std::min(bx0, flat[i]);
      bx1 = std::max(bx1, flat[i]);
      by0 = std::min(by0, flat[i + 1]);
      by1 = std::max(by1, flat[i + 1]);
    }
    sel.area += polygon_area(pix);
    for (std::uint32_t r = 0; r < gh; ++r) {
      for (std::uint32_t c = 0; c < gw; ++c) {
        auto& cell = sel.inside[static_cast<std::size_t>(r) * gw + c];
        if (!cell && point_in_polygon(grid, c + 0.5, r + 0.5)) cell = 1;
      }
    }
  }
  if (sel.area > 0.0) sel.bounds = BBox{bx0, by0, bx1 - bx0, by1 - by0};
  return sel;
}

inline CellSelection rle_cells(std::uint32_t mh, std::uint32_t mw,
                               const std::vector<std::uint32_t>& counts, std::uint32_t gh,
                               std::uint32_t gw) {
  CellSelection sel;
  sel.inside.assign(static_cast<std::size_t>(gh) * gw, 0);
  if (mh == 0 || mw == 0) return sel;
  const std::uint64_t total = static_cast<std::uint64_t>(mh) * mw;
  std::vector<char> fg(total, 0);  // column-major, as the runs are
  std::uint32_t x0 = mw, y0 = mh, x1 = 0, y1 = 0;
  std::uint64_t pos = 0;
  for (std::size_t i = 0; i < counts.size() && pos < total; ++i) {
    const std::uint64_t end = std::min<std::uint64_t>(pos + counts[i], total);
    if (i % 2 == 1 && end > pos) {
      std::fill(fg.begin() + static_cast<std::ptrdiff_t>(pos),
                fg.begin() + static_cast<std::ptrdiff_t>(end), 1);
      sel.area += static_cast<double>(end - pos);
      for (std::uint64_t p : {pos, end - 1}) {
        x0 = std::min(x0, static_cast<std::uint32_t>(p / mh));
        x1 = std::max(x1, static_cast<std::uint32_t>(p / mh));
      }
      if (end - pos >= mh) {
        y0 = 0;
        y1 = mh - 1;
      } else {
        const auto ya = static_cast<std::uint32_t>(pos % mh);
        const auto yb = static_cast<std::uint32_t>((end - 1) % mh);
        if (ya <= yb) {
          y0 = std::min(y0, ya);
          y1 = std::max(y1, yb);
        } else {  // wraps into the next column
          y0 = 0;
          y1 = mh - 1;
        }
      }
    }
    pos = end;
  }
  for (std::uint32_t r = 0; r < gh; ++r) {
    const auto y = cell_index((r + 0.5) * mh / gh, mh);
    for (std::uint32_t c = 0; c < gw; ++c) {
      const auto x = cell_index((c + 0.5) * mw / gw, mw);
      sel.inside[static_cast<std::size_t>(r) * gw + c] =
          fg[static_cast<std::size_t>(x) * mh + y];
    }
  }
  if (sel.area > 0) {
    sel.bounds = BBox{static_cast<double>(x0), static_cast<double>(y0),
                      static_cast<double>(x1 - x0 + 1), static_cast<double>(y1 - y0 + 1)};
  }
  return sel;
}

}  // namespace detail

/// Mean feature over the cells whose centers fall inside the mask (the
/// pool_box rule applied to a region). Falls back to pool_box over the
/// mask's bounding box when no center is covered.
///
/// Run-length masks are mapped onto the grid using their own pixel size,
/// polygons using `image`.
inline std::vector<double> pool_mask(const FeatureMap& map, const Mask& mask,
                                     ImageSize image) {
  if (!(image.width > 0 && image.height > 0)) {
    throw InvalidArgumentError("pool_mask: image size must be positive");
  }
  detail::CellSelection sel;
  ImageSize frame = image;
  if (const auto* poly = std::get_if<PolygonMask>(&mask)) {
    sel = detail::polygon_cells(*poly, map.grid_h, map.grid_w, image);
  } else if (const auto* rle = std::get_if<RleMask>(&mask)) {
    sel = detail::rle_cells(rle->height, rle->width, rle->counts, map.grid_h, map.grid_w);
    frame = ImageSize{static_cast<double>(rle->width), static_cast<double>(rle->height)};
  } else {
    const auto& c = std::get<CompressedRleMask>(mask);
    sel = detail::rle_cells(c.height, c.width, detail::decode_rle_string(c.counts), map.grid_h,
                            map.grid_w);
    frame = ImageSize{static_cast<double>(c.width), static_cast<double>(c.height)};
  }
  if (!(sel.area > 0.0)) {
    throw DegenerateRegionError("pool_mask: mask is empty");
  }
  std::size_t n = 0;
  auto out = detail::mean_over_cells(
      map, 0, map.grid_h, 0, map.grid_w,
      [&](std::uint32_t r, std::uint32_t c) {
        return sel.inside[static_cast<std::size_t>(r) * map.grid_w + c] != 0;
      },
      &n);
  if (n > 0) return out;
  return pool_box(map, sel.bounds, frame);
}

enum class PoolMode : std::uint8_t { kBoxMean = 0, kMaskMean = 1 };

inline const char* to_string(PoolMode m) {
  return m == PoolMode::kBoxMean ? "box_mean" : "mask_mean";
}

struct PooledFeature {
  AnnotationId annotation_id = 0;
  CategoryId category_id = 0;
  std::vector<float> vector;
  PoolMode pool_mode = PoolMode::kBoxMean;

  bool operator==(const PooledFeature&) const = default;
};

/// Pooled vectors keyed (and therefore ordered) by annotation id.
struct FeatureArchive {
  std::uint32_t dim = 0;
  std::map<AnnotationId, PooledFeature> entries;
  std::string provenance;  // in-memory only; not part of the file format

  void add(PooledFeature f) {
    if (dim == 0) dim = static_cast<std::uint32_t>(f.vector.size());
    if (f.vector.size() != dim) {
      throw FormatError("archive dim " + std::to_string(dim) +
                        " but vector for annotation " +
                        std::to_string(f.annotation_id) + " has length " +
                        std::to_string(f.vector.size()));
    }
    for (float v : f.vector) {
      if (!std::isfinite(v)) {
        throw InvalidArgumentError("non-finite feature for annotation " +
                                   std::to_string(f.annotation_id));
      }
    }
    const auto id = f.annotation_id;
    if (!entries.emplace(id, std::move(f)).second) {
      throw IntegrityError("duplicate annotation id " + std::to_string(id) +
                               " in archive",
                           {id});
    }
  }

  std::size_t size() const { return entries.size(); }
  bool empty() const { return entries.empty(); }

  bool operator==(const FeatureArchive& o) const {
    return dim == o.dim && entries == o.entries;
  }
};

inline std::vector<char> encode_archive(const FeatureArchive& a) {
  io::ByteWriter w;
  w.bytes(kFeatureArchiveMagic);
  w.put<std::uint32_t>(a.dim);
  w.put<std::uint64_t>(a.entries.size());
  for (const auto& [id, e] : a.entries) {
    w.put<std::uint64_t>(id);
    w.put<std::uint32_t>(e.category_id);
    w.put<std::uint8_t>(static_cast<std::uint8_t>(e.pool_mode));
    w.put_all<float>(e.vector);
  }
  return w.buffer();
}

inline FeatureArchive decode_archive(std::span<const char> bytes,
                                     const std::string& what = "feature archive") {
  io::ByteReader r(bytes, what);
  if (bytes.size() < kFeatureArchiveMagic.size() ||
      r.bytes(kFeatureArchiveMagic.size()) != kFeatureArchiveMagic) {
    throw FormatError(what + ": bad magic, expected UQFA0001");
  }
  FeatureArchive a;
  a.dim = r.get<std::uint32_t>();
  const auto count = r.get<std::uint64_t>();
  const std::uint64_t entry_bytes = 8 + 4 + 1 + 4ULL * a.dim;
  if (count > r.remaining() / entry_bytes) {
    throw CorruptionError(what + ": header declares " + std::to_string(count) +
                          " entries, payload too short");
  }
  for (std::uint64_t i = 0; i < count; ++i) {
    PooledFeature f;
    f.annotation_id = r.get<std::uint64_t>();
    f.category_id = r.get<std::uint32_t>();
    const auto mode = r.get<std::uint8_t>();
    if (mode > 1) throw CorruptionError(what + ": bad pool mode byte");
    f.pool_mode = static_cast<PoolMode>(mode);
    f.vector.resize(a.dim);
    r.get_all<float>(f.vector);
    const auto id = f.annotation_id;
    if (!a.entries.emplace(id, std::move(f)).second) {
      throw CorruptionError(what + ": duplicate annotation id " + std::to_string(id));
    }
  }
  if (r.remaining() != 0) {
    throw CorruptionError(what + ": " + std::to_string(r.remaining()) + " trailing bytes");
  }
  return a;
}

inline void write_archive(const FeatureArchive& a, const std::filesystem::path& path) {
  io::write_file_atomic(path, encode_archive(a));
}

inline FeatureArchive read_archive(const std::filesystem::path& path) {
  const auto bytes = io::read_file(path);
  return decode_archive(bytes, path.string());
}

/// Supplies the feature map of one image at a time.
class FeatureMapSource {
 public:
  virtual ~FeatureMapSource() = default;
  /// nullopt when the image has no map.
  virtual std::optional<FeatureMap> load(ImageId image_id) = 0;
};

/// Maps stored as `<dir>/<image_id>.uqfm`, or as listed in an optional
/// `<dir>/manifest.tsv` of `file<TAB>image_id` lines.
class DirectoryMapSource : public FeatureMapSource {
 public:
  explicit DirectoryMapSource(std::filesystem::path dir) : dir_(std::move(dir)) {
    if (!std::filesystem::is_directory(dir_)) {
      throw IoError("feature directory " + dir_.string() + " does not exist");
    }
    const auto manifest = dir_ / "manifest.tsv";
    if (std::filesystem::exists(manifest)) {
      std::ifstream in(manifest);
      std::string line;
      std::size_t lineno = 0;
      while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        auto f = io::split(line, '\t');
        ImageId id = 0;
        if (f.size() != 2 || !io::parse_int(f[1], id)) {
          throw ParseError(manifest.string() + ": bad manifest line " +
                               std::to_string(lineno),
                           lineno);
        }
        files_[id] = dir_ / std::string(f[0]);
      }
    }
  }

  std::optional<FeatureMap> load(ImageId image_id) override {
    std::filesystem::path p;
    if (auto it = files_.find(image_id); it != files_.end()) {
      p = it->second;
    } else {
      p = dir_ / (std::to_string(image_id) + ".uqfm");
    }
    if (!std::filesystem::exists(p)) return std::nullopt;
    return read_feature_map(p);
  }

 private:
  std::filesystem::path dir_;
  std::unordered_map<ImageId, std::filesystem::path> files_;
};

/// Adapts a callable `std::optional<FeatureMap>(ImageId)`.
class CallbackMapSource : public FeatureMapSource {
 public:
  explicit CallbackMapSource(std::function<std::optional<FeatureMap>(ImageId)> fn)
      : fn_(std::move(fn)) {}
  std::optional<FeatureMap> load(ImageId image_id) override { return fn_(image_id); }

 private:
  std::function<std::optional<FeatureMap>(ImageId)> fn_;
};

struct BuildOptions {
  PoolMode pool_mode = PoolMode::kBoxMean;
  bool include_crowd = false;
  bool skip_missing = false;
};

struct BuildReport {
  std::size_t pooled = 0;
  std::vector<AnnotationId> skipped_crowd;
  std::vector<AnnotationId> skipped_zero_area;
  std::vector<ImageId> missing_images;
  std::map<CategoryId, std::size_t> per_class;
};

struct BuildResult {
  FeatureArchive archive;
  BuildReport report;
};

/// Pools one vector per scoreable annotation. Images are visited in
/// ascending id order and only one map is held at a time.
inline BuildResult build_archive(const DatasetIndex& index, FeatureMapSource& source,
                                 const BuildOptions& options = {}) {
  validate_dataset(index);
  BuildResult result;
  auto& rep = result.report;
  const auto images = index.image_lookup();

  std::map<ImageId, std::vector<const ObjectAnnotation*>> by_image;
  for (const auto& a : index.annotations) {
    const ImageRecord* im = images.at(a.image_id);
    if (a.is_crowd && !options.include_crowd) {
      rep.skipped_crowd.push_back(a.id);
    } else if (!is_scoreable(a, *im, options.include_crowd)) {
      rep.skipped_zero_area.push_back(a.id);
    } else {
      by_image[a.image_id].push_back(&a);
    }
  }

  for (const auto& [image_id, anns] : by_image) {
    if (image_id > UINT32_MAX) {
      throw FormatError("image id " + std::to_string(image_id) +
                        " does not fit the 32-bit feature map header");
    }
    std::optional<FeatureMap> map = source.load(image_id);
    if (!map) {
      rep.missing_images.push_back(image_id);
      continue;
    }
    if (map->image_id != image_id) {
      throw FormatError("feature map for image " + std::to_string(image_id) +
                        " carries image id " + std::to_string(map->image_id));
    }
    const ImageRecord* im = images.at(image_id);
    const ImageSize size{static_cast<double>(im->width), static_cast<double>(im->height)};
    for (const ObjectAnnotation* a : anns) {
      const bool use_mask = options.pool_mode == PoolMode::kMaskMean && a->mask &&
                            !mask_is_blank(*a->mask);
      const auto pooled =
          use_mask ? pool_mask(*map, *a->mask, size) : pool_box(*map, a->bbox, size);
      PooledFeature f;
      f.annotation_id = a->id;
      f.category_id = a->category_id;
      f.pool_mode = use_mask ? PoolMode::kMaskMean : PoolMode::kBoxMean;
      f.vector.assign(pooled.begin(), pooled.end());
      result.archive.add(std::move(f));
      ++rep.per_class[a->category_id];
      ++rep.pooled;
    }
  }

  if (!rep.missing_images.empty() && !options.skip_missing) {
    throw MissingDataError("no feature map for " +
                               std::to_string(rep.missing_images.size()) +
                               " image(s): " + detail::join_ids(rep.missing_images),
                           rep.missing_images);
  }
  return result;
}

}  // namespace uqdet
