#pragma once

#include "scenediff/errors.hpp"
#include "scenediff/scene_model.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace scenediff {

constexpr int kHumanVertexCount = 256;
constexpr double kPenetrationBound = 20.0;  // sigma_1, centimeters summed over vertices
constexpr double kSearchWindow = 2.0;       // meters, each side of the contact object
constexpr double kSearchStep = 0.05;

// Nominal body box of a mode (width, height, depth).
Vec3 mode_template(InteractionMode mode);
// sigma_2: 0.9 for sit and lie, 0.5 for touch.
double default_iou_bound(InteractionMode mode);

// Modes a category supports, by category name. Unknown names support none.
std::vector<InteractionMode> compatible_modes(const std::string& category);

// Box proxy of a contact human with surface vertices rigidly attached.
class HumanProxy {
 public:
  HumanProxy() = default;
  HumanProxy(InteractionMode mode, Box box, int vertex_count = kHumanVertexCount);

  InteractionMode mode() const { return mode_; }
  const Box& box() const { return box_; }
  int vertex_count() const { return static_cast<int>(local_.rows()); }
  // Vertices in world coordinates (V x 3).
  Eigen::MatrixX3d vertices() const;

  HumanProxy translated(double dx, double dz) const;
  HumanProxy rotated(double dyaw) const;

 private:
  InteractionMode mode_ = InteractionMode::touch;
  Box box_;
  Eigen::MatrixX3d local_;  // on the surface of [-1/2, 1/2]^3, scaled by box size
};

// Pose of a human of `mode` interacting with `object`: centered on the
// object with its yaw; each horizontal extent is the larger of the template
// and the object, the height follows the object, all enlarged by 1%.
HumanProxy pose_human(InteractionMode mode, const Box& object, int vertex_count = kHumanVertexCount);

struct InteractionRecord {
  HumanProxy human;
  int object_index = 0;
};

// Records implied by a scene's contact boxes (contact i pairs with object i).
std::vector<InteractionRecord> records_from_contacts(const std::vector<ContactBox>& contacts);
// Contact boxes for records; the intended category is the paired object's.
std::vector<ContactBox> contacts_from_records(const std::vector<InteractionRecord>& records, const Scene& scene);

// Sum over vertices inside scene geometry of their depth, in centimeters.
double penetration_error(const HumanProxy& human, const Scene& scene);
double interaction_iou(const InteractionRecord& rec, const Scene& scene);

struct CalibrationThresholds {
  double penetration = kPenetrationBound;
  double iou_sit_lie = 0.9;
  double iou_touch = 0.5;

  double iou_for(InteractionMode mode) const { return mode == InteractionMode::touch ? iou_touch : iou_sit_lie; }
};

// Searches horizontal translations on a 0.05 m grid over a +-2 m window
// centered on the contact object and returns the candidate with the smallest
// displacement satisfying E_pen < sigma1 and IoU > sigma2. The current pose
// counts as zero displacement. Throws CalibrationError with the closest
// candidate when none qualifies.
HumanProxy translation_modify(const InteractionRecord& rec, const Scene& scene, double sigma1, double sigma2);

enum class RecordOutcome { unchanged, modified, skipped, rolled_back };
std::string_view to_string(RecordOutcome outcome);

struct AugmentLog {
  std::vector<int> record;
  std::vector<RecordOutcome> outcome;
  std::vector<std::string> note;

  void add(int index, RecordOutcome o, std::string why) {
    record.push_back(index);
    outcome.push_back(o);
    note.push_back(std::move(why));
  }
};

struct AugmentResult {
  Scene scene;
  std::vector<InteractionRecord> records;
  AugmentLog log;
};

// Replaces the mode of ceil(n/2) uniformly chosen records by a different
// compatible mode (desk-scale category names), re-poses and re-runs
// translation_modify; failures roll back.
AugmentResult category_augment(const Scene& scene, const std::vector<InteractionRecord>& records,
                               std::mt19937_64& rng, const CalibrationThresholds& th = {});

// yaw += U(-noise, noise) per record, then translation_modify; failures roll back.
AugmentResult orientation_augment(const Scene& scene, const std::vector<InteractionRecord>& records,
                                  std::mt19937_64& rng, double noise_radians = kPi / 6,
                                  const CalibrationThresholds& th = {});

struct RecordReport {
  int scene = 0;
  int record = 0;
  InteractionMode mode = InteractionMode::touch;
  double penetration_before = 0.0;
  double iou_before = 0.0;
  double penetration_after = 0.0;
  double iou_after = 0.0;
  double displacement = 0.0;
  bool success = false;
  std::string error;
};

struct CalibrationSummary {
  int records = 0;
  int succeeded = 0;
  double mean_penetration_before = 0.0;
  double mean_penetration_after = 0.0;
  double mean_iou_before_sit_lie = 0.0;
  double mean_iou_after_sit_lie = 0.0;
  double mean_iou_before_touch = 0.0;
  double mean_iou_after_touch = 0.0;

  double success_rate() const { return records ? static_cast<double>(succeeded) / records : 1.0; }
};

CalibrationSummary summarize(const std::vector<RecordReport>& reports);

// Translation modification of every record of one scene. Failed records keep
// their pose. Records are independent: each search sees the scene only.
std::vector<InteractionRecord> calibrate_records(const Scene& scene, const std::vector<InteractionRecord>& records,
                                                 const CalibrationThresholds& th, int scene_index,
                                                 std::vector<RecordReport>* reports);

}  // namespace scenediff
