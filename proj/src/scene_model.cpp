#include "scenediff/scene_model.hpp"

#include "scenediff/errors.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace scenediff {

double wrap_angle(double radians) {
  double r = std::fmod(radians + kPi, 2.0 * kPi);
  if (r < 0) r += 2.0 * kPi;
  r -= kPi;
  if (r >= kPi) r -= 2.0 * kPi;
  return r;
}

std::string_view to_string(RoomType room) {
  switch (room) {
    case RoomType::bedroom: return "bedroom";
    case RoomType::living: return "living";
    case RoomType::dining: return "dining";
  }
  return "bedroom";
}

RoomType room_type_from_string(std::string_view name) {
  if (name == "bedroom") return RoomType::bedroom;
  if (name == "living") return RoomType::living;
  if (name == "dining") return RoomType::dining;
  throw ValidationError(-1, "room_type", "unknown room type '" + std::string(name) + "'");
}

int default_capacity(RoomType room) { return room == RoomType::bedroom ? 12 : 21; }

std::string_view to_string(InteractionMode mode) {
  switch (mode) {
    case InteractionMode::sit: return "sit";
    case InteractionMode::lie: return "lie";
    case InteractionMode::touch: return "touch";
  }
  return "touch";
}

InteractionMode interaction_mode_from_string(std::string_view name) {
  if (name == "sit") return InteractionMode::sit;
  if (name == "lie") return InteractionMode::lie;
  if (name == "touch") return InteractionMode::touch;
  throw ValidationError(-1, "mode", "unknown interaction mode '" + std::string(name) + "'");
}

int Vocabulary::index_of(std::string_view name) const {
  if (name == "EMPTY") return empty_index();
  for (int i = 0; i < size(); ++i) {
    if (names[i] == name) return i;
  }
  return -1;
}

std::string Vocabulary::name_of(int category) const {
  if (category == empty_index()) return "EMPTY";
  if (category < 0 || category > empty_index()) {
    throw ValidationError(-1, "category", "category index " + std::to_string(category) + " out of range");
  }
  return names[category];
}

Vocabulary Vocabulary::desk_scale() {
  return Vocabulary{{"bed", "nightstand", "wardrobe", "chair", "table", "sofa", "lamp", "cabinet"}};
}

ObjectInstance make_empty_object(int empty_index) {
  ObjectInstance o;
  o.category = empty_index;
  return o;
}

int Scene::occupied_count() const {
  int n = 0;
  for (int i = 0; i < capacity(); ++i) n += is_empty(i) ? 0 : 1;
  return n;
}

// ---------------------------------------------------------------------------
// GridMask

GridMask::GridMask(double world_extent, int resolution)
    : extent_(world_extent), resolution_(resolution),
      data_(static_cast<std::size_t>(resolution) * resolution, 0) {
  if (!(world_extent > 0) || resolution <= 0) {
    throw ConfigError("grid mask needs a positive extent and resolution");
  }
}

Vec2 GridMask::pixel_center(int row, int col) const { return {col_center_x(col), row_center_z(row)}; }

Vec2 GridMask::world_to_pixel(const Vec2& xz) const {
  const double px = pixel_size();
  return {(xz.x() + extent_ / 2) / px, (xz.y() + extent_ / 2) / px};
}

long long GridMask::count() const {
  long long n = 0;
  for (auto v : data_) n += v;
  return n;
}

GridMask GridMask::complement() const {
  GridMask out(extent_, resolution_);
  for (std::size_t i = 0; i < data_.size(); ++i) out.data_[i] = data_[i] ? 0 : 1;
  return out;
}

GridMask GridMask::hadamard(const GridMask& other) const {
  if (other.resolution_ != resolution_) throw ContractError("grid mask resolution mismatch");
  GridMask out(extent_, resolution_);
  for (std::size_t i = 0; i < data_.size(); ++i) out.data_[i] = data_[i] & other.data_[i];
  return out;
}

bool GridMask::is_subset_of(const GridMask& other) const {
  if (other.resolution_ != resolution_) return false;
  for (std::size_t i = 0; i < data_.size(); ++i) {
    if (data_[i] && !other.data_[i]) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Normalization

NormalizationStats NormalizationStats::from_scenes(const std::vector<Scene>& scenes,
                                                   bool rotation_symmetric) {
  NormalizationStats s;
  s.location_min = Vec3::Zero();
  s.location_max = Vec3::Zero();
  s.size_min = Vec3::Zero();
  s.size_max = Vec3::Zero();
  double radius = 0.0;
  for (const auto& scene : scenes) {
    for (int i = 0; i < scene.capacity(); ++i) {
      if (scene.is_empty(i)) continue;
      const Box& b = scene.objects[i].box;
      s.location_min = s.location_min.cwiseMin(b.location);
      s.location_max = s.location_max.cwiseMax(b.location);
      s.size_max = s.size_max.cwiseMax(b.size);
      radius = std::max(radius, std::hypot(b.location.x(), b.location.z()));
    }
  }
  if (rotation_symmetric) {
    for (int axis : {0, 2}) {
      s.location_min[axis] = -radius;
      s.location_max[axis] = radius;
    }
  }
  // Degenerate ranges would make the affine map singular.
  for (int k = 0; k < 3; ++k) {
    if (s.location_max[k] - s.location_min[k] < 1e-6) {
      s.location_min[k] -= 1.0;
      s.location_max[k] += 1.0;
    }
    if (s.size_max[k] - s.size_min[k] < 1e-6) s.size_max[k] = s.size_min[k] + 1.0;
  }
  return s;
}

// ---------------------------------------------------------------------------
// Validation

namespace {

std::string describe(int index, const std::string& field, const std::string& msg) {
  std::ostringstream os;
  os << "object " << index << " field '" << field << "': " << msg;
  return os.str();
}

void check_box(const Box& b, int index, bool allow_empty_size) {
  for (int k = 0; k < 3; ++k) {
    if (!std::isfinite(b.location[k])) throw ValidationError(index, "location", describe(index, "location", "non-finite"));
    if (!std::isfinite(b.size[k])) throw ValidationError(index, "size", describe(index, "size", "non-finite"));
  }
  if (!std::isfinite(b.yaw)) throw ValidationError(index, "yaw", describe(index, "yaw", "non-finite"));
  if (b.yaw < -kPi || b.yaw >= kPi) {
    throw ValidationError(index, "yaw", describe(index, "yaw", "not wrapped into [-pi, pi)"));
  }
  if (!allow_empty_size && b.size.minCoeff() < kMinObjectSize) {
    throw ValidationError(index, "size", describe(index, "size", "component below 0.01 m"));
  }
}

}  // namespace

void validate_scene(const Scene& scene) {
  const int n = scene.capacity();
  const int k = scene.num_categories;
  if (k <= 0) throw ValidationError(-1, "num_categories", "scene needs at least one category");
  if (scene.contact_count < 0 || scene.contact_count > n) {
    throw ValidationError(-1, "contact_count", "contact count outside [0, N]");
  }
  for (int i = 0; i < n; ++i) {
    const auto& o = scene.objects[i];
    if (o.category < 0 || o.category > k) {
      throw ValidationError(i, "category", describe(i, "category", "label outside [0, K]"));
    }
    if (o.category == k) {
      if (i < scene.contact_count) {
        throw ValidationError(i, "category", describe(i, "category", "contact object is EMPTY"));
      }
      if (o.box != Box{}) {
        throw ValidationError(i, "box", describe(i, "box", "EMPTY object must have zero location, size and yaw"));
      }
      continue;
    }
    check_box(o.box, i, false);
  }
}

void validate_contact(const ContactBox& contact, int num_categories, int index) {
  if (contact.intended_category < 0 || contact.intended_category >= num_categories) {
    throw ValidationError(index, "intended_category", describe(index, "intended_category", "label outside [0, K)"));
  }
  check_box(contact.box, index, false);
}

// ---------------------------------------------------------------------------
// Codec

namespace {

template <typename Row>
void write_row(Row&& row, int category, const Box& b, const TensorLayout& lay,
               const NormalizationStats& norm) {
  row.segment(lay.category_begin(), lay.category_count()).setConstant(-1.0);
  row[lay.category_begin() + category] = 1.0;
  for (int k = 0; k < 3; ++k) {
    row[lay.location_begin() + k] = norm.normalize(b.location[k], norm.location_min[k], norm.location_max[k]);
    row[lay.size_begin() + k] = norm.normalize(b.size[k], norm.size_min[k], norm.size_max[k]);
  }
  row[lay.yaw_cos()] = std::cos(b.yaw);
  row[lay.yaw_sin()] = std::sin(b.yaw);
}

}  // namespace

SceneTensor encode_scene(const Scene& scene, const NormalizationStats& norm) {
  validate_scene(scene);
  const TensorLayout lay{scene.num_categories};
  SceneTensor x(scene.capacity(), lay.width());
  for (int i = 0; i < scene.capacity(); ++i) {
    write_row(x.row(i), scene.objects[i].category, scene.objects[i].box, lay, norm);
  }
  return x;
}

Eigen::RowVectorXd encode_contact(const ContactBox& contact, int num_categories,
                                  const NormalizationStats& norm) {
  const TensorLayout lay{num_categories};
  Eigen::RowVectorXd row(lay.width());
  write_row(row, contact.intended_category, contact.box, lay, norm);
  return row;
}

Scene decode_scene(const SceneTensor& tensor, const NormalizationStats& norm, int contact_count,
                   RoomType room, DecodeLog* log) {
  if (!tensor.allFinite()) throw DecodeError("scene tensor has non-finite entries");
  const int k = static_cast<int>(tensor.cols()) - 9;
  if (k <= 0) throw ContractError("scene tensor has too few channels");
  if (contact_count < 0 || contact_count > tensor.rows()) throw ContractError("contact count outside [0, N]");
  const TensorLayout lay{k};

  Scene s;
  s.room = room;
  s.num_categories = k;
  s.contact_count = contact_count;
  s.objects.resize(tensor.rows());
  for (int i = 0; i < tensor.rows(); ++i) {
    const auto row = tensor.row(i);
    int best = 0;
    for (int c = 1; c <= k; ++c) {
      if (row[c] > row[best]) best = c;
    }
    if (best == k && i < contact_count) {
      best = 0;
      for (int c = 1; c < k; ++c) {
        if (row[c] > row[best]) best = c;
      }
      if (log) ++log->forced_contact_categories;
    }
    if (best == k) {
      s.objects[i] = make_empty_object(k);
      continue;
    }
    ObjectInstance& o = s.objects[i];
    o.category = best;
    for (int a = 0; a < 3; ++a) {
      o.box.location[a] = norm.denormalize(row[lay.location_begin() + a], norm.location_min[a], norm.location_max[a]);
      double sz = norm.denormalize(row[lay.size_begin() + a], norm.size_min[a], norm.size_max[a]);
      if (sz < kMinObjectSize) {
        sz = kMinObjectSize;
        if (log) ++log->clamped_sizes;
      }
      o.box.size[a] = sz;
    }
    o.box.yaw = wrap_angle(std::atan2(row[lay.yaw_sin()], row[lay.yaw_cos()]));
  }
  return s;
}

Scene pad_scene(const std::vector<ObjectInstance>& objects, const std::vector<int>& contact_object,
                int capacity, int num_categories, RoomType room) {
  if (static_cast<int>(objects.size()) > capacity) {
    throw CapacityError("scene has " + std::to_string(objects.size()) + " objects but capacity is " +
                        std::to_string(capacity));
  }
  std::vector<char> used(objects.size(), 0);
  for (std::size_t i = 0; i < contact_object.size(); ++i) {
    const int j = contact_object[i];
    if (j < 0 || j >= static_cast<int>(objects.size())) {
      throw PairingError("contact box " + std::to_string(i) + " is not matched to any object");
    }
    if (used[j]) {
      throw PairingError("object " + std::to_string(j) + " is matched to more than one contact box");
    }
    used[j] = 1;
  }
  Scene s;
  s.room = room;
  s.num_categories = num_categories;
  s.contact_count = static_cast<int>(contact_object.size());
  s.objects.reserve(capacity);
  for (int j : contact_object) s.objects.push_back(objects[j]);
  for (std::size_t j = 0; j < objects.size(); ++j) {
    if (!used[j]) s.objects.push_back(objects[j]);
  }
  while (s.capacity() < capacity) s.objects.push_back(make_empty_object(num_categories));
  return s;
}

// ---------------------------------------------------------------------------
// Rotation

Box rotate_box(const Box& box, double theta) {
  const double c = std::cos(theta), s = std::sin(theta);
  Box out = box;
  out.location.x() = c * box.location.x() - s * box.location.z();
  out.location.z() = s * box.location.x() + c * box.location.z();
  out.yaw = wrap_angle(box.yaw + theta);
  return out;
}

Scene rotate_scene(const Scene& scene, double theta) {
  Scene out = scene;
  for (int i = 0; i < out.capacity(); ++i) {
    if (!out.is_empty(i)) out.objects[i].box = rotate_box(out.objects[i].box, theta);
  }
  return out;
}

GridMask rotate_mask(const GridMask& mask, double theta) {
  GridMask out(mask.world_extent(), mask.resolution());
  const double c = std::cos(theta), s = std::sin(theta);
  for (int r = 0; r < mask.resolution(); ++r) {
    for (int col = 0; col < mask.resolution(); ++col) {
      const Vec2 p = mask.pixel_center(r, col);
      // Inverse rotation finds the source pixel.
      const Vec2 src(c * p.x() + s * p.y(), -s * p.x() + c * p.y());
      const Vec2 pix = mask.world_to_pixel(src);
      const int sc = static_cast<int>(std::floor(pix.x()));
      const int sr = static_cast<int>(std::floor(pix.y()));
      if (mask.in_bounds(sr, sc)) out.set(r, col, mask.at(sr, sc));
    }
  }
  return out;
}

ConditionSet rotate_condition(const ConditionSet& cond, double theta) {
  ConditionSet out;
  out.contacts = cond.contacts;
  for (auto& c : out.contacts) c.box = rotate_box(c.box, theta);
  out.floor = rotate_mask(cond.floor, theta);
  out.free_space = rotate_mask(cond.free_space, theta);
  out.layout_points = cond.layout_points;
  const double c = std::cos(theta), s = std::sin(theta);
  for (Eigen::Index i = 0; i < out.layout_points.rows(); ++i) {
    const double x = cond.layout_points(i, 0), z = cond.layout_points(i, 2);
    out.layout_points(i, 0) = c * x - s * z;
    out.layout_points(i, 2) = s * x + c * z;
  }
  return out;
}

}  // namespace scenediff
