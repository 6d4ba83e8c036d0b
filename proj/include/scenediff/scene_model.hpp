#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace scenediff {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;

// Rows are objects, columns are tensor channels (see TensorLayout).
using SceneTensor = Eigen::MatrixXd;

constexpr double kPi = 3.14159265358979323846;
constexpr double kMinObjectSize = 0.01;
constexpr int kMaskResolution = 256;
constexpr int kLayoutPointCount = 1000;
constexpr double kDefaultWorldExtent = 6.2;

// Wraps an angle into [-pi, pi).
double wrap_angle(double radians);

enum class RoomType { bedroom, living, dining };

std::string_view to_string(RoomType room);
RoomType room_type_from_string(std::string_view name);
// 12 for bedrooms, 21 for living and dining rooms.
int default_capacity(RoomType room);

enum class InteractionMode { sit, lie, touch };

std::string_view to_string(InteractionMode mode);
InteractionMode interaction_mode_from_string(std::string_view name);

// Category names, EMPTY excluded. Index size() is the EMPTY label.
struct Vocabulary {
  std::vector<std::string> names;

  int size() const { return static_cast<int>(names.size()); }
  int empty_index() const { return size(); }
  // Returns -1 if the name is unknown. "EMPTY" maps to empty_index().
  int index_of(std::string_view name) const;
  std::string name_of(int category) const;

  // bed, nightstand, wardrobe, chair, table, sofa, lamp, cabinet
  static Vocabulary desk_scale();
};

// Oriented box: rotation about the up (y) axis only. size holds full extents
// (width along local x, height along y, depth along local z).
struct Box {
  Vec3 location = Vec3::Zero();
  Vec3 size = Vec3::Zero();
  double yaw = 0.0;

  double volume() const { return size.x() * size.y() * size.z(); }
  bool operator==(const Box&) const = default;
};

struct ObjectInstance {
  int category = 0;
  Box box;

  bool operator==(const ObjectInstance&) const = default;
};

ObjectInstance make_empty_object(int empty_index);

struct Scene {
  RoomType room = RoomType::bedroom;
  int num_categories = 8;  // K; category K is EMPTY
  int contact_count = 0;   // objects[0, contact_count) pair with contacts
  std::vector<ObjectInstance> objects;

  int capacity() const { return static_cast<int>(objects.size()); }
  bool is_empty(int i) const { return objects[i].category == num_categories; }
  int occupied_count() const;

  bool operator==(const Scene&) const = default;
};

struct ContactBox {
  int intended_category = 0;
  Box box;
  InteractionMode mode = InteractionMode::touch;

  bool operator==(const ContactBox&) const = default;
};

// Square binary occupancy grid centered on the scene origin. Row r covers
// z in [-E/2 + r*px, -E/2 + (r+1)*px), column c covers the same range in x.
class GridMask {
 public:
  explicit GridMask(double world_extent = kDefaultWorldExtent, int resolution = kMaskResolution);

  int resolution() const { return resolution_; }
  double world_extent() const { return extent_; }
  double pixel_size() const { return extent_ / resolution_; }
  double pixel_area() const { return pixel_size() * pixel_size(); }

  std::uint8_t at(int row, int col) const { return data_[index(row, col)]; }
  void set(int row, int col, std::uint8_t v) { data_[index(row, col)] = v ? 1 : 0; }
  bool in_bounds(int row, int col) const {
    return row >= 0 && col >= 0 && row < resolution_ && col < resolution_;
  }

  // Pixel-center world coordinates as (x, z).
  Vec2 pixel_center(int row, int col) const;
  // Continuous pixel coordinates (col, row) of a world point; pixel centers
  // land on integer + 0.5.
  Vec2 world_to_pixel(const Vec2& xz) const;
  // Lattice helpers usable outside [0, resolution), for rasterizing boxes
  // that leave the extent.
  double col_center_x(int col) const { return -extent_ / 2 + (col + 0.5) * pixel_size(); }
  double row_center_z(int row) const { return -extent_ / 2 + (row + 0.5) * pixel_size(); }

  long long count() const;
  const std::vector<std::uint8_t>& data() const { return data_; }
  std::vector<std::uint8_t>& data() { return data_; }

  GridMask complement() const;
  // Pixelwise product (logical AND).
  GridMask hadamard(const GridMask& other) const;
  bool is_subset_of(const GridMask& other) const;

  bool operator==(const GridMask&) const = default;

 private:
  std::size_t index(int row, int col) const {
    return static_cast<std::size_t>(row) * resolution_ + col;
  }

  double extent_;
  int resolution_;
  std::vector<std::uint8_t> data_;
};

// Everything the denoiser conditions on. contacts[i] pairs with object row i;
// rows >= contacts.size() are treated as padded (non-contact) entries.
struct ConditionSet {
  std::vector<ContactBox> contacts;
  GridMask floor;
  GridMask free_space;
  Eigen::MatrixX3d layout_points;  // kLayoutPointCount x 3, y = 0

  bool operator==(const ConditionSet& o) const {
    return contacts == o.contacts && floor == o.floor && free_space == o.free_space &&
           layout_points.rows() == o.layout_points.rows() && layout_points == o.layout_points;
  }
};

// Channel layout of a SceneTensor row for K categories:
// [0, K] one-hot incl. EMPTY | location (3) | size (3) | cos, sin of yaw.
struct TensorLayout {
  int num_categories = 8;

  int category_begin() const { return 0; }
  int category_count() const { return num_categories + 1; }
  int location_begin() const { return num_categories + 1; }
  int size_begin() const { return num_categories + 4; }
  int yaw_cos() const { return num_categories + 7; }
  int yaw_sin() const { return num_categories + 8; }
  int width() const { return num_categories + 9; }
};

// Per-channel min/max used by the affine map v -> 2(v-min)/(max-min) - 1.
struct NormalizationStats {
  Vec3 location_min = Vec3::Constant(-3.1);
  Vec3 location_max = Vec3::Constant(3.1);
  Vec3 size_min = Vec3::Zero();
  Vec3 size_max = Vec3::Constant(3.0);

  // Ranges always include 0 so the EMPTY placeholder encodes inside [-1, 1].
  // With rotation_symmetric the horizontal ranges become [-R, R] with R the
  // largest horizontal radius, so rotations commute with normalization.
  static NormalizationStats from_scenes(const std::vector<Scene>& scenes, bool rotation_symmetric);

  double normalize(double v, double lo, double hi) const { return 2.0 * (v - lo) / (hi - lo) - 1.0; }
  double denormalize(double c, double lo, double hi) const { return (c + 1.0) * 0.5 * (hi - lo) + lo; }

  bool operator==(const NormalizationStats&) const = default;
};

// Throws ValidationError naming the offending object index and field.
void validate_scene(const Scene& scene);
void validate_contact(const ContactBox& contact, int num_categories, int index);

SceneTensor encode_scene(const Scene& scene, const NormalizationStats& norm);
// One encoded row for a contact box, using the same channels as objects.
Eigen::RowVectorXd encode_contact(const ContactBox& contact, int num_categories,
                                  const NormalizationStats& norm);

struct DecodeLog {
  int clamped_sizes = 0;
  int clamped_locations = 0;
  int forced_contact_categories = 0;  // contact rows whose argmax was EMPTY
};

// Category is the argmax over the K+1 label channels (lowest index wins ties).
// Rows below contact_count never decode as EMPTY.
Scene decode_scene(const SceneTensor& tensor, const NormalizationStats& norm, int contact_count,
                   RoomType room, DecodeLog* log = nullptr);

// Builds a fixed-capacity scene. contact_object[i] is the position in
// `objects` of the object paired with contacts[i].
Scene pad_scene(const std::vector<ObjectInstance>& objects, const std::vector<int>& contact_object,
                int capacity, int num_categories, RoomType room);

// Rigid rotation about the up axis through the scene origin.
Box rotate_box(const Box& box, double theta);
Scene rotate_scene(const Scene& scene, double theta);
ConditionSet rotate_condition(const ConditionSet& cond, double theta);
// Nearest-neighbor resampling; pixels mapping outside the grid become 0.
GridMask rotate_mask(const GridMask& mask, double theta);

}  // namespace scenediff
