#include "bas/synth_data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "bas/rng.hpp"
#include "bas/tensor_io.hpp"
#include "json.hpp"

namespace fs = std::filesystem;

namespace bas {

namespace {

constexpr int kShapeFamilies = 8;
constexpr int kTextures = 6;

// Shape rasterizers; (cx,cy) center, s half-extent, all clipped to the frame.
bool inside_shape(int family, double dx, double dy, double s) {
  switch (family) {
    case 0:  // circle
      return dx * dx + dy * dy <= s * s;
    case 1:  // square
      return std::fabs(dx) <= s && std::fabs(dy) <= s;
    case 2: {  // triangle, apex up
      if (dy < -s || dy > s) return false;
      double half = (dy + s) / 2.0;
      return std::fabs(dx) <= half;
    }
    case 3:  // plus
      return (std::fabs(dx) <= s / 3.0 && std::fabs(dy) <= s) ||
             (std::fabs(dy) <= s / 3.0 && std::fabs(dx) <= s);
    case 4: {  // ring
      double r2 = dx * dx + dy * dy;
      return r2 <= s * s && r2 >= (0.55 * s) * (0.55 * s);
    }
    case 5:  // diamond
      return std::fabs(dx) + std::fabs(dy) <= s;
    case 6:  // wide ellipse
      return (dx * dx) / (s * s) + (dy * dy) / (0.55 * s * 0.55 * s) <= 1.0;
    case 7: {  // T
      bool bar = dy >= -s && dy <= -s / 3.0 && std::fabs(dx) <= s;
      bool stem = std::fabs(dx) <= s / 4.0 && dy >= -s / 3.0 && dy <= s;
      return bar || stem;
    }
    default:
      return false;
  }
}

BinaryMask raster_shape(int family, int img, double cx, double cy, double s) {
  BinaryMask m(img, img);
  int y0 = std::max(0, int(cy - s) - 1), y1 = std::min(img - 1, int(cy + s) + 1);
  int x0 = std::max(0, int(cx - s) - 1), x1 = std::min(img - 1, int(cx + s) + 1);
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x)
      if (inside_shape(family, x - cx, y - cy, s)) m.at(y, x) = 1;
  return m;
}

bool texture_on(int texture, int x, int y) {
  switch (texture) {
    case 0:
      return true;  // solid
    case 1:
      return (y / 3) % 2 == 0;  // horizontal stripes
    case 2:
      return (x / 3) % 2 == 0;  // vertical stripes
    case 3:
      return ((x / 3) + (y / 3)) % 2 == 0;  // checker
    case 4:
      return (x % 4 < 2) && (y % 4 < 2);  // dots
    case 5:
      return ((x + y) / 3) % 2 == 0;  // diagonal stripes
    default:
      return true;
  }
}

struct Rgb {
  float r, g, b;
};

Rgb draw_color(Rng& rng, double lo, double hi) {
  return {float(rng.uniform(lo, hi)), float(rng.uniform(lo, hi)), float(rng.uniform(lo, hi))};
}

void put_pixel(TensorF& img, int y, int x, const Rgb& c) {
  img.at(0, y, x) = c.r;
  img.at(1, y, x) = c.g;
  img.at(2, y, x) = c.b;
}

void draw_line(TensorF& img, Rng& rng, int size) {
  int x0 = rng.uniform_int(0, size - 1), y0 = rng.uniform_int(0, size - 1);
  int x1 = rng.uniform_int(0, size - 1), y1 = rng.uniform_int(0, size - 1);
  Rgb c = draw_color(rng, 0.30, 0.55);
  int steps = std::max(std::abs(x1 - x0), std::abs(y1 - y0)) + 1;
  for (int i = 0; i < steps; ++i) {
    double t = steps == 1 ? 0.0 : double(i) / (steps - 1);
    int x = int(std::lround(x0 + t * (x1 - x0)));
    int y = int(std::lround(y0 + t * (y1 - y0)));
    put_pixel(img, y, x, c);
  }
}

void draw_clutter_outline(TensorF& img, Rng& rng, int size, int family) {
  double s = rng.uniform(3.0, 6.0);
  double cx = rng.uniform(s, size - 1 - s), cy = rng.uniform(s, size - 1 - s);
  Rgb c = draw_color(rng, 0.30, 0.55);
  BinaryMask m = raster_shape(family, size, cx, cy, s);
  // outline only: set pixels with at least one unset 4-neighbour
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      if (!m.at(y, x)) continue;
      bool edge = y == 0 || y == size - 1 || x == 0 || x == size - 1 || !m.at(y - 1, x) ||
                  !m.at(y + 1, x) || !m.at(y, x - 1) || !m.at(y, x + 1);
      if (edge) put_pixel(img, y, x, c);
    }
}

struct PlacedObject {
  int cls = -1;
  int family = 0;
  int texture = 0;
  BinaryMask raster;   // full shape
  BinaryMask visible;  // minus later objects
};

struct RenderedSample {
  TensorF image;
  std::vector<int> labels;
  std::vector<BinaryMask> masks;
  std::vector<Box> boxes;
};

int family_of_class(const DatasetSpec& spec, int cls) { return spec.fine_grained ? 0 : cls; }

int texture_of_class(const DatasetSpec& spec, int cls) {
  if (spec.fine_grained || spec.textured) return cls % kTextures;
  return 0;
}

// Place one object whose visible mask satisfies the area bounds.
bool place_object(const DatasetSpec& spec, Rng& rng, int cls, double area_lo, double area_hi,
                  const std::vector<PlacedObject>& existing, PlacedObject& out) {
  const int size = spec.image_size;
  const double img_area = double(size) * size;
  for (int attempt = 0; attempt < 60; ++attempt) {
    double frac = rng.uniform(area_lo, area_hi);
    // Half-extent from the target fraction; families fill roughly half to all
    // of their bounding square, so start from the square root and let the
    // bounds check reject misses.
    double s = std::sqrt(frac * img_area) * rng.uniform(0.55, 0.75);
    s = std::min(s, size * 0.45);
    if (s < 3.0) s = 3.0;
    double cx = rng.uniform(s, size - 1 - s);
    double cy = rng.uniform(s, size - 1 - s);
    BinaryMask m = raster_shape(family_of_class(spec, cls), size, cx, cy, s);
    double a = double(m.area()) / img_area;
    if (a < spec.min_area_frac || a > spec.max_area_frac) continue;
    if (!spec.occlusion) {
      bool overlaps = false;
      for (const auto& e : existing) {
        for (size_t i = 0; i < m.v.size() && !overlaps; ++i)
          if (m.v[i] && e.raster.v[i]) overlaps = true;
        if (overlaps) break;
      }
      if (overlaps) continue;
    }
    out.cls = cls;
    out.family = family_of_class(spec, cls);
    out.texture = texture_of_class(spec, cls);
    out.raster = std::move(m);
    return true;
  }
  return false;
}

RenderedSample render_sample(const DatasetSpec& spec, Rng rng, const std::vector<int>& classes) {
  const int size = spec.image_size;
  RenderedSample out;
  out.image = TensorF({3, size, size});

  // Background: dark base plus per-pixel noise.
  Rgb base = draw_color(rng, 0.05, 0.30);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      double n = rng.uniform(-0.03, 0.03);
      put_pixel(out.image, y, x,
                {float(std::clamp(base.r + n, 0.0, 1.0)), float(std::clamp(base.g + n, 0.0, 1.0)),
                 float(std::clamp(base.b + n, 0.0, 1.0))});
    }

  // Clutter never uses a class shape family.
  std::vector<int> free_families;
  for (int f = 0; f < kShapeFamilies; ++f) {
    bool used = false;
    for (int c = 0; c < spec.num_classes && !used; ++c) used = family_of_class(spec, c) == f;
    if (!used) free_families.push_back(f);
  }
  for (int i = 0; i < spec.clutter; ++i) {
    if (!free_families.empty() && i % 2 == 1) {
      int f = free_families[size_t(rng.uniform_int(0, int(free_families.size()) - 1))];
      draw_clutter_outline(out.image, rng, size, f);
    } else {
      draw_line(out.image, rng, size);
    }
  }

  // Objects.
  const bool multi = spec.multi_label();
  double area_lo = multi ? std::max(spec.min_area_frac, 0.03) : std::max(spec.min_area_frac, 0.06);
  double area_hi = multi ? std::min(spec.max_area_frac, 0.14) : std::min(spec.max_area_frac, 0.30);
  std::vector<PlacedObject> placed;
  for (int cls : classes) {
    PlacedObject obj;
    if (place_object(spec, rng, cls, area_lo, area_hi, placed, obj)) placed.push_back(std::move(obj));
  }
  if (placed.empty())
    throw std::runtime_error("synth_data: failed to place any object; relax the area bounds");

  // Later objects paint over earlier ones; the visible mask is the ground
  // truth so boxes stay tight against what the image shows.
  for (size_t i = 0; i < placed.size(); ++i) {
    placed[i].visible = placed[i].raster;
    for (size_t j = i + 1; j < placed.size(); ++j)
      for (size_t px = 0; px < placed[i].visible.v.size(); ++px)
        if (placed[j].raster.v[px]) placed[i].visible.v[px] = 0;
  }

  for (auto& obj : placed) {
    Rgb c1 = draw_color(rng, 0.55, 1.0);
    Rgb c2 = draw_color(rng, 0.15, 0.40);
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) {
        if (!obj.raster.at(y, x)) continue;
        Rgb c = texture_on(obj.texture, x, y) ? c1 : c2;
        double n = rng.uniform(-0.02, 0.02);
        put_pixel(out.image, y, x,
                  {float(std::clamp(c.r + n, 0.0, 1.0)), float(std::clamp(c.g + n, 0.0, 1.0)),
                   float(std::clamp(c.b + n, 0.0, 1.0))});
      }
  }

  const double img_area = double(size) * size;
  for (auto& obj : placed) {
    double vis = double(obj.visible.area()) / img_area;
    if (vis < spec.min_area_frac) continue;  // fully or nearly hidden instance
    auto box = tight_box(obj.visible);
    if (!box) continue;
    out.labels.push_back(obj.cls);
    out.masks.push_back(std::move(obj.visible));
    out.boxes.push_back(*box);
  }
  if (out.labels.empty())
    throw std::runtime_error("synth_data: occlusion left no visible instance");
  return out;
}

std::string index_name(size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%05zu", i);
  return buf;
}

void write_split(const DatasetSpec& spec, const std::string& dir, int count, uint64_t split_id) {
  fs::create_directories(dir + "/images");
  fs::create_directories(dir + "/masks");

  Rng split_rng = Rng(spec.seed).fork(split_id);
  const bool multi = spec.multi_label();

  // Greedy least-used class assignment keeps every class count within one of
  // the mean.
  std::vector<int> counts(size_t(spec.num_classes), 0);
  auto pick_classes = [&](Rng& rng, int how_many) {
    std::vector<int> order(size_t(spec.num_classes));
    for (int c = 0; c < spec.num_classes; ++c) order[size_t(c)] = c;
    rng.shuffle(order);  // random tie-break
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return counts[size_t(a)] < counts[size_t(b)]; });
    std::vector<int> chosen(order.begin(), order.begin() + how_many);
    std::sort(chosen.begin(), chosen.end());
    for (int c : chosen) counts[size_t(c)]++;
    return chosen;
  };

  nlohmann::ordered_json manifest = nlohmann::ordered_json::array();
  for (int i = 0; i < count; ++i) {
    Rng rng = split_rng.fork(uint64_t(i));
    int n_objects = multi ? rng.uniform_int(spec.objects_min,
                                            std::min(spec.objects_max, spec.num_classes))
                          : 1;
    std::vector<int> classes = pick_classes(rng, n_objects);
    RenderedSample s = render_sample(spec, rng.fork(1), classes);

    // Placement can drop an occluded instance; keep the balance counters
    // honest.
    if (int(s.labels.size()) != n_objects) {
      std::vector<int> kept = s.labels;
      for (int c : classes)
        if (std::find(kept.begin(), kept.end(), c) == kept.end()) counts[size_t(c)]--;
    }

    std::string name = index_name(size_t(i));
    std::string image_rel = "images/" + name + ".tns";
    write_tns(dir + "/" + image_rel, s.image);

    nlohmann::ordered_json entry;
    entry["image_path"] = image_rel;
    entry["labels"] = s.labels;
    auto boxes = nlohmann::ordered_json::array();
    for (const auto& b : s.boxes) boxes.push_back({b.x0, b.y0, b.x1, b.y1});
    entry["boxes"] = boxes;
    auto mask_paths = nlohmann::ordered_json::array();
    for (size_t m = 0; m < s.masks.size(); ++m) {
      std::string mask_rel = "masks/" + name + "_c" + std::to_string(s.labels[m]) + ".pgm";
      write_pgm(dir + "/" + mask_rel, s.masks[m]);
      mask_paths.push_back(mask_rel);
    }
    entry["mask_paths"] = mask_paths;
    manifest.push_back(entry);
  }

  std::ofstream os(dir + "/manifest.json");
  if (!os) throw std::runtime_error("synth_data: cannot write manifest in " + dir);
  os << manifest.dump(2) << "\n";
}

}  // namespace

void DatasetSpec::validate() const {
  if (num_classes < 2) throw std::invalid_argument("dataset: num_classes must be at least 2");
  if (!fine_grained && num_classes > kShapeFamilies)
    throw std::invalid_argument("dataset: num_classes " + std::to_string(num_classes) +
                                " exceeds the shape family count " + std::to_string(kShapeFamilies));
  if (fine_grained && num_classes > kTextures)
    throw std::invalid_argument("dataset: fine-grained num_classes " + std::to_string(num_classes) +
                                " exceeds the texture count " + std::to_string(kTextures));
  if (mode != "single" && mode != "multi")
    throw std::invalid_argument("dataset: mode must be \"single\" or \"multi\", got \"" + mode + "\"");
  if (image_size < 16) throw std::invalid_argument("dataset: image_size must be at least 16");
  if (train_samples < 1 || eval_samples < 1)
    throw std::invalid_argument("dataset: sample counts must be positive");
  if (multi_label() && (objects_min < 1 || objects_max < objects_min))
    throw std::invalid_argument("dataset: invalid objects-per-image range");
  if (min_area_frac <= 0 || max_area_frac <= min_area_frac || max_area_frac > 1)
    throw std::invalid_argument("dataset: invalid area bounds");
}

int shape_family_count() { return kShapeFamilies; }
int texture_count() { return kTextures; }

void generate_dataset(const DatasetSpec& spec, const std::string& out_dir) {
  spec.validate();
  write_split(spec, out_dir + "/train", spec.train_samples, 1);
  write_split(spec, out_dir + "/eval", spec.eval_samples, 2);
}

Manifest load_manifest(const std::string& split_dir) {
  std::string path = split_dir + "/manifest.json";
  std::ifstream is(path);
  if (!is) throw std::runtime_error("dataset: cannot open manifest: " + path);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const std::exception& e) {
    throw std::runtime_error("dataset: bad manifest " + path + ": " + e.what());
  }
  Manifest m;
  m.root = split_dir;
  for (const auto& e : j) {
    SampleInfo info;
    info.image_path = e.at("image_path").get<std::string>();
    info.labels = e.at("labels").get<std::vector<int>>();
    for (const auto& b : e.at("boxes"))
      info.boxes.push_back(Box{b.at(0).get<int>(), b.at(1).get<int>(), b.at(2).get<int>(),
                               b.at(3).get<int>()});
    info.mask_paths = e.at("mask_paths").get<std::vector<std::string>>();
    m.entries.push_back(std::move(info));
  }
  return m;
}

Sample load_sample(const Manifest& m, size_t index) {
  if (index >= m.entries.size())
    throw std::out_of_range("dataset: sample index " + std::to_string(index) +
                            " out of range for " + std::to_string(m.entries.size()) + " entries");
  const SampleInfo& info = m.entries[index];
  Sample s;
  s.image = read_tns(m.root + "/" + info.image_path);
  s.labels = info.labels;
  s.boxes = info.boxes;
  for (const auto& p : info.mask_paths) s.masks.push_back(read_pgm(m.root + "/" + p));
  return s;
}

std::vector<uint8_t> semantic_mask(const Sample& s, int image_size) {
  std::vector<uint8_t> sem(size_t(image_size) * image_size, 0);
  for (size_t i = 0; i < s.masks.size(); ++i)
    for (size_t px = 0; px < s.masks[i].v.size(); ++px)
      if (s.masks[i].v[px]) sem[px] = uint8_t(s.labels[i] + 1);
  return sem;
}

}  // namespace bas
