#include "scenediff/synthdata.hpp"

#include "scenediff/diffusion.hpp"
#include "scenediff/errors.hpp"
#include "scenediff/geometry.hpp"

#include <algorithm>
#include <cmath>

namespace scenediff {

void CorpusSpec::validate() const {
  if (scene_count <= 0) throw ConfigError("scene count must be positive");
  if (vocabulary.size() <= 0) throw ConfigError("vocabulary must not be empty");
  const int full_k = room == RoomType::bedroom ? 21 : 24;
  if (vocabulary.size() > full_k) throw ConfigError("vocabulary larger than the full-scale category count");
  if (!(world_extent > 0)) throw ConfigError("world extent must be positive");
  if (!(trail_density > 0)) throw ConfigError("trail density must be positive");
  if (min_objects < 1 || max_objects < min_objects) throw ConfigError("invalid object count range");
  if (max_objects > resolved_capacity()) throw ConfigError("max objects exceeds scene capacity");
  if (min_contacts < 0 || max_contacts < min_contacts) throw ConfigError("invalid contact count range");
  if (attempt_budget <= 0) throw ConfigError("attempt budget must be positive");
}

namespace {

double uniform(std::mt19937_64& rng, double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng); }

struct SizePrior {
  Vec3 lo, hi;
  double weight;
};

SizePrior prior_for(const std::string& name) {
  if (name == "bed") return {{1.4, 0.45, 1.9}, {1.8, 0.6, 2.1}, 1.0};
  if (name == "nightstand") return {{0.4, 0.45, 0.35}, {0.55, 0.6, 0.45}, 1.2};
  if (name == "wardrobe") return {{0.9, 1.8, 0.5}, {1.6, 2.2, 0.65}, 0.9};
  if (name == "chair") return {{0.45, 0.8, 0.45}, {0.55, 1.0, 0.55}, 1.3};
  if (name == "table") return {{0.8, 0.7, 0.6}, {1.4, 0.78, 0.9}, 1.0};
  if (name == "sofa") return {{1.6, 0.75, 0.8}, {2.2, 0.9, 0.95}, 0.7};
  if (name == "lamp") return {{0.25, 1.2, 0.25}, {0.4, 1.7, 0.4}, 1.0};
  if (name == "cabinet") return {{0.6, 0.8, 0.4}, {1.2, 1.2, 0.55}, 1.0};
  return {{0.4, 0.4, 0.4}, {1.2, 1.5, 1.2}, 1.0};
}

// Axis-aligned room rectangle with an optional corner cut (L shape).
struct FloorShape {
  double half_w = 2.0, half_d = 2.0;
  bool has_cut = false;
  Box cut;  // yaw 0, covers one corner

  bool contains(double x, double z) const {
    if (std::abs(x) > half_w || std::abs(z) > half_d) return false;
    if (has_cut) {
      const double cx = cut.location.x(), cz = cut.location.z();
      if (std::abs(x - cx) < cut.size.x() / 2 && std::abs(z - cz) < cut.size.z() / 2) return false;
    }
    return true;
  }

  double area() const {
    double a = 4 * half_w * half_d;
    if (has_cut) a -= cut.size.x() * cut.size.z();
    return a;
  }

  bool contains_box(const Box& b, double margin) const {
    for (const Vec2& c : footprint(b)) {
      if (std::abs(c.x()) > half_w - margin || std::abs(c.y()) > half_d - margin) return false;
    }
    if (has_cut) {
      Box grown = cut;
      grown.size.x() += 2 * margin;
      grown.size.z() += 2 * margin;
      if (footprint_intersection_area(b, grown) > 0) return false;
    }
    return true;
  }
};

FloorShape draw_floor(std::mt19937_64& rng, double extent) {
  FloorShape f;
  const double max_side = std::min(5.6, extent - 0.4);
  f.half_w = uniform(rng, 3.2, max_side) / 2;
  f.half_d = uniform(rng, 3.2, max_side) / 2;
  if (uniform(rng, 0.0, 1.0) < 0.4) {
    f.has_cut = true;
    const double cw = uniform(rng, 0.3, 0.45) * 2 * f.half_w;
    const double cd = uniform(rng, 0.3, 0.45) * 2 * f.half_d;
    const int corner = std::uniform_int_distribution<int>(0, 3)(rng);
    const double sx = (corner & 1) ? 1.0 : -1.0, sz = (corner & 2) ? 1.0 : -1.0;
    // Extend past the wall so the cut is open on two sides.
    f.cut.size = Vec3(cw * 2, 1.0, cd * 2);
    f.cut.location = Vec3(sx * f.half_w, 0.0, sz * f.half_d);
  }
  return f;
}

GridMask rasterize_floor(const FloorShape& f, double extent) {
  GridMask m(extent);
  for (int r = 0; r < m.resolution(); ++r) {
    for (int c = 0; c < m.resolution(); ++c) {
      const Vec2 p = m.pixel_center(r, c);
      if (f.contains(p.x(), p.y())) m.set(r, c, 1);
    }
  }
  return m;
}

double draw_yaw(std::mt19937_64& rng) {
  if (uniform(rng, 0.0, 1.0) < 0.75) {
    const int k = std::uniform_int_distribution<int>(0, 3)(rng);
    return wrap_angle(k * kPi / 2);
  }
  return wrap_angle(uniform(rng, -kPi, kPi));
}

// True when the footprints stay at least `gap` apart (tested by growing one).
bool separated(const Box& a, const Box& b, double gap) {
  Box grown = a;
  grown.size.x() += 2 * gap;
  grown.size.z() += 2 * gap;
  return footprint_intersection_area(grown, b) <= 0.0;
}

void stamp_disk(GridMask& m, const Vec2& p, double radius) {
  const double px = m.pixel_size();
  const Vec2 c = m.world_to_pixel(p);
  const int r0 = static_cast<int>(std::floor(c.y() - radius / px)) - 1;
  const int r1 = static_cast<int>(std::ceil(c.y() + radius / px)) + 1;
  const int c0 = static_cast<int>(std::floor(c.x() - radius / px)) - 1;
  const int c1 = static_cast<int>(std::ceil(c.x() + radius / px)) + 1;
  for (int r = std::max(0, r0); r <= std::min(m.resolution() - 1, r1); ++r) {
    for (int col = std::max(0, c0); col <= std::min(m.resolution() - 1, c1); ++col) {
      if ((m.pixel_center(r, col) - p).norm() <= radius) m.set(r, col, 1);
    }
  }
}

void clear_footprint(GridMask& m, const Box& b) {
  const HardRaster h = hard_raster(b, m, true);
  for (int r = 0; r < h.window.rows; ++r) {
    for (int c = 0; c < h.window.cols; ++c) {
      if (h.inside[static_cast<std::size_t>(r) * h.window.cols + c]) m.set(h.window.row0 + r, h.window.col0 + c, 0);
    }
  }
}

bool clear_of_objects(const Vec2& p, const std::vector<ObjectInstance>& objects, double clearance) {
  for (const auto& o : objects) {
    if (sdf_footprint(p, o.box) < clearance) return false;
  }
  return true;
}

}  // namespace

CorpusScene generate_scene(const CorpusSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::mt19937_64 rng(seed);
  const int k = spec.vocabulary.size();
  const int capacity = spec.resolved_capacity();
  int attempts = 0;
  auto spend = [&]() {
    if (++attempts > spec.attempt_budget) {
      throw GenerationError(seed, "rejection sampling budget of " + std::to_string(spec.attempt_budget) +
                                      " attempts exhausted (seed " + std::to_string(seed) + ")");
    }
  };

  std::vector<double> weights;
  std::vector<int> eligible;
  for (int c = 0; c < k; ++c) {
    weights.push_back(prior_for(spec.vocabulary.names[c]).weight);
    if (!compatible_modes(spec.vocabulary.names[c]).empty()) eligible.push_back(c);
  }
  std::discrete_distribution<int> pick_category(weights.begin(), weights.end());

  const FloorShape floor_shape = draw_floor(rng, spec.world_extent);
  const int n_cap = std::min({spec.max_objects, capacity,
                              std::max(spec.min_objects, static_cast<int>(2 + floor_shape.area() / 2.5))});
  const int n_objects = std::uniform_int_distribution<int>(spec.min_objects, n_cap)(rng);

  std::vector<ObjectInstance> objects;
  while (static_cast<int>(objects.size()) < n_objects) {
    spend();
    ObjectInstance o;
    if (objects.empty() && !eligible.empty() && spec.max_contacts > 0) {
      o.category = eligible[std::uniform_int_distribution<std::size_t>(0, eligible.size() - 1)(rng)];
    } else {
      o.category = pick_category(rng);
    }
    const SizePrior prior = prior_for(spec.vocabulary.names[o.category]);
    for (int a = 0; a < 3; ++a) o.box.size[a] = uniform(rng, prior.lo[a], prior.hi[a]);
    o.box.yaw = draw_yaw(rng);
    o.box.location = Vec3(uniform(rng, -floor_shape.half_w, floor_shape.half_w), o.box.size.y() / 2,
                          uniform(rng, -floor_shape.half_d, floor_shape.half_d));
    if (!floor_shape.contains_box(o.box, 0.02)) continue;
    bool ok = true;
    for (const auto& other : objects) {
      if (!separated(o.box, other.box, 0.05)) {
        ok = false;
        break;
      }
    }
    if (ok) objects.push_back(o);
  }

  // Contact humans on eligible objects.
  std::vector<int> candidates;
  for (int i = 0; i < static_cast<int>(objects.size()); ++i) {
    if (!compatible_modes(spec.vocabulary.names[objects[i].category]).empty()) candidates.push_back(i);
  }
  for (std::size_t i = candidates.size(); i > 1; --i) {
    std::swap(candidates[i - 1], candidates[std::uniform_int_distribution<std::size_t>(0, i - 1)(rng)]);
  }
  const int want = std::min<int>(static_cast<int>(candidates.size()),
                                 std::uniform_int_distribution<int>(spec.min_contacts, spec.max_contacts)(rng));

  Scene unpadded;
  unpadded.num_categories = k;
  unpadded.objects = objects;
  std::vector<int> contact_object;
  std::vector<ContactBox> contacts;
  for (int c = 0; c < static_cast<int>(candidates.size()) && static_cast<int>(contacts.size()) < want; ++c) {
    const ObjectInstance& o = objects[candidates[c]];
    const auto modes = compatible_modes(spec.vocabulary.names[o.category]);
    const InteractionMode mode = modes[std::uniform_int_distribution<std::size_t>(0, modes.size() - 1)(rng)];
    const HumanProxy human = pose_human(mode, o.box);
    if (penetration_error(human, unpadded) >= kPenetrationBound) continue;
    if (iou3d(human.box(), o.box) <= default_iou_bound(mode)) continue;
    contact_object.push_back(candidates[c]);
    contacts.push_back({o.category, human.box(), mode});
  }

  CorpusScene out;
  out.seed = seed;
  out.scene = pad_scene(objects, contact_object, capacity, k, spec.room);
  out.condition.contacts = contacts;
  out.condition.floor = rasterize_floor(floor_shape, spec.world_extent);

  // Trail: walk between points in front of objects, stamping a 0.3 m disk.
  const int legs = std::max(1, static_cast<int>(std::lround(3 * spec.trail_density)));
  GridMask trail(spec.world_extent);
  for (;;) {
    spend();
    std::vector<Vec2> waypoints;
    while (static_cast<int>(waypoints.size()) < legs + 1) {
      spend();
      Vec2 p;
      if (uniform(rng, 0.0, 1.0) < 0.7) {
        const Box& b = objects[std::uniform_int_distribution<std::size_t>(0, objects.size() - 1)(rng)].box;
        const double reach = b.size.z() / 2 + 0.45;
        p = Vec2(b.location.x() - std::sin(b.yaw) * reach, b.location.z() + std::cos(b.yaw) * reach);
      } else {
        p = Vec2(uniform(rng, -floor_shape.half_w, floor_shape.half_w), uniform(rng, -floor_shape.half_d, floor_shape.half_d));
      }
      if (floor_shape.contains(p.x(), p.y()) && clear_of_objects(p, objects, 0.1)) waypoints.push_back(p);
    }
    std::normal_distribution<double> jitter(0.0, 0.5);
    Vec2 pos = waypoints[0];
    stamp_disk(trail, pos, 0.3);
    for (std::size_t w = 1; w < waypoints.size(); ++w) {
      for (int step = 0; step < 200 && (waypoints[w] - pos).norm() > 0.15; ++step) {
        const Vec2 d = waypoints[w] - pos;
        const double heading = std::atan2(d.y(), d.x()) + jitter(rng);
        const Vec2 next = pos + 0.1 * Vec2(std::cos(heading), std::sin(heading));
        if (!floor_shape.contains(next.x(), next.y()) || !clear_of_objects(next, objects, 0.0)) continue;
        pos = next;
        stamp_disk(trail, pos, 0.3);
      }
    }
    GridMask fs = trail.hadamard(out.condition.floor);
    for (const auto& o : objects) clear_footprint(fs, o.box);
    for (const auto& c : contacts) clear_footprint(fs, c.box);
    if (fs.count() > 0) {
      out.condition.free_space = std::move(fs);
      break;
    }
  }
  out.condition.layout_points = layout_points_for(out.condition.floor, out.condition.free_space);
  validate_scene(out.scene);
  return out;
}

Corpus generate_corpus(const CorpusSpec& spec) {
  spec.validate();
  Corpus c;
  c.spec = spec;
  c.scenes.reserve(spec.scene_count);
  for (int i = 0; i < spec.scene_count; ++i) {
    c.scenes.push_back(generate_scene(spec, derive_seed(spec.seed, static_cast<std::uint64_t>(i))));
  }
  return c;
}

Corpus corrupt_corpus(const Corpus& corpus, double displacement, std::mt19937_64& rng) {
  if (!(displacement >= 0)) throw ConfigError("displacement must be >= 0");
  Corpus out = corpus;
  if (displacement == 0) return out;
  std::uniform_real_distribution<double> shift(-displacement, displacement);
  for (auto& s : out.scenes) {
    for (auto& c : s.condition.contacts) {
      c.box.location.x() += shift(rng);
      c.box.location.z() += shift(rng);
    }
  }
  return out;
}

GridMask regenerate_free_space(const GridMask& free_space, const std::vector<ContactBox>& contacts) {
  GridMask fs = free_space;
  for (const auto& c : contacts) clear_footprint(fs, c.box);
  return fs;
}

std::vector<double> category_histogram(const std::vector<Scene>& scenes, int num_categories) {
  std::vector<double> h(num_categories, 0.0);
  double total = 0.0;
  for (const auto& s : scenes) {
    for (int i = 0; i < s.capacity(); ++i) {
      if (s.is_empty(i)) continue;
      h[s.objects[i].category] += 1.0;
      total += 1.0;
    }
  }
  if (total > 0) {
    for (double& v : h) v /= total;
  }
  return h;
}

}  // namespace scenediff
