#include "scenediff/calibration.hpp"

#include "scenediff/geometry.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace scenediff {

Vec3 mode_template(InteractionMode mode) {
  switch (mode) {
    case InteractionMode::sit:
      return {0.5, 1.0, 0.5};
    case InteractionMode::lie:
      return {0.5, 0.5, 1.8};
    case InteractionMode::touch:
      return {0.5, 1.7, 0.4};
  }
  return {0.5, 1.7, 0.4};
}

double default_iou_bound(InteractionMode mode) { return mode == InteractionMode::touch ? 0.5 : 0.9; }

std::vector<InteractionMode> compatible_modes(const std::string& category) {
  using M = InteractionMode;
  if (category == "bed") return {M::sit, M::lie};
  if (category == "sofa" || category == "chair" || category == "stool") return {M::sit, M::touch};
  if (category == "table" || category == "desk" || category == "cabinet" || category == "wardrobe" ||
      category == "nightstand") {
    return {M::touch};
  }
  return {};
}

namespace {

// Deterministic surface points of the unit cube, allotted to faces by area
// (largest remainder) and laid out on a per-face grid.
Eigen::MatrixX3d surface_points(const Vec3& size, int count) {
  const double w = size.x(), h = size.y(), d = size.z();
  // Faces: +-x (h*d), +-y (w*d), +-z (w*h).
  const std::array<double, 6> area = {h * d, h * d, w * d, w * d, w * h, w * h};
  double total = 0.0;
  for (double a : area) total += a;
  std::array<int, 6> n{};
  std::array<double, 6> rem{};
  int used = 0;
  for (int f = 0; f < 6; ++f) {
    const double exact = count * area[f] / total;
    n[f] = static_cast<int>(std::floor(exact));
    rem[f] = exact - n[f];
    used += n[f];
  }
  while (used < count) {
    int best = 0;
    for (int f = 1; f < 6; ++f) {
      if (rem[f] > rem[best]) best = f;
    }
    ++n[best];
    rem[best] = -1.0;
    ++used;
  }

  Eigen::MatrixX3d pts(count, 3);
  int k = 0;
  for (int f = 0; f < 6; ++f) {
    if (n[f] == 0) continue;
    const int axis = f / 2;
    const double side = (f % 2 == 0) ? 0.5 : -0.5;
    const int ua = (axis + 1) % 3, va = (axis + 2) % 3;
    const double ext_u = std::max(size[ua], 1e-9), ext_v = std::max(size[va], 1e-9);
    const int cols = std::max(1, static_cast<int>(std::ceil(std::sqrt(n[f] * ext_u / ext_v))));
    const int rows = (n[f] + cols - 1) / cols;
    for (int i = 0; i < n[f]; ++i) {
      const int r = i / cols, c = i % cols;
      Vec3 p;
      p[axis] = side;
      p[ua] = (c + 0.5) / cols - 0.5;
      p[va] = (r + 0.5) / rows - 0.5;
      pts.row(k++) = p.transpose();
    }
  }
  return pts;
}

}  // namespace

HumanProxy::HumanProxy(InteractionMode mode, Box box, int vertex_count) : mode_(mode), box_(std::move(box)) {
  if (vertex_count < 64) throw ConfigError("human proxies need at least 64 vertices");
  if ((box_.size.array() <= 0).any()) throw DegenerateInputError("human proxy box must have positive size");
  local_ = surface_points(box_.size, vertex_count);
}

Eigen::MatrixX3d HumanProxy::vertices() const {
  const double c = std::cos(box_.yaw), s = std::sin(box_.yaw);
  Eigen::MatrixX3d out(local_.rows(), 3);
  for (Eigen::Index i = 0; i < local_.rows(); ++i) {
    const double lx = local_(i, 0) * box_.size.x();
    const double ly = local_(i, 1) * box_.size.y();
    const double lz = local_(i, 2) * box_.size.z();
    out(i, 0) = box_.location.x() + c * lx - s * lz;
    out(i, 1) = box_.location.y() + ly;
    out(i, 2) = box_.location.z() + s * lx + c * lz;
  }
  return out;
}

HumanProxy HumanProxy::translated(double dx, double dz) const {
  HumanProxy h = *this;
  h.box_.location.x() += dx;
  h.box_.location.z() += dz;
  return h;
}

HumanProxy HumanProxy::rotated(double dyaw) const {
  HumanProxy h = *this;
  h.box_.yaw = wrap_angle(h.box_.yaw + dyaw);
  return h;
}

HumanProxy pose_human(InteractionMode mode, const Box& object, int vertex_count) {
  constexpr double kMargin = 1.01;
  const Vec3 t = mode_template(mode);
  Box b;
  b.location = object.location;
  b.yaw = object.yaw;
  b.size = Vec3(std::max(t.x(), object.size.x()), object.size.y(), std::max(t.z(), object.size.z())) * kMargin;
  return HumanProxy(mode, b, vertex_count);
}

std::vector<InteractionRecord> records_from_contacts(const std::vector<ContactBox>& contacts) {
  std::vector<InteractionRecord> out;
  out.reserve(contacts.size());
  for (std::size_t i = 0; i < contacts.size(); ++i) {
    out.push_back({HumanProxy(contacts[i].mode, contacts[i].box), static_cast<int>(i)});
  }
  return out;
}

std::vector<ContactBox> contacts_from_records(const std::vector<InteractionRecord>& records, const Scene& scene) {
  std::vector<ContactBox> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    out.push_back({scene.objects.at(r.object_index).category, r.human.box(), r.human.mode()});
  }
  return out;
}

double penetration_error(const HumanProxy& human, const Scene& scene) {
  if (scene.occupied_count() == 0) throw DegenerateInputError("penetration error needs a non-empty scene");
  const Eigen::MatrixX3d v = human.vertices();
  double total = 0.0;
  for (Eigen::Index i = 0; i < v.rows(); ++i) {
    const double d = sdf_point_scene(v.row(i).transpose(), scene);
    if (d < 0) total += -d * 100.0;
  }
  return total;
}

namespace {

const ObjectInstance& contact_object(const InteractionRecord& rec, const Scene& scene) {
  if (rec.object_index < 0 || rec.object_index >= scene.capacity() || scene.is_empty(rec.object_index)) {
    throw ValidationError(rec.object_index, "object_index", "interaction record must point at a non-EMPTY object");
  }
  return scene.objects[rec.object_index];
}

}  // namespace

double interaction_iou(const InteractionRecord& rec, const Scene& scene) {
  return iou3d(rec.human.box(), contact_object(rec, scene).box);
}

HumanProxy translation_modify(const InteractionRecord& rec, const Scene& scene, double sigma1, double sigma2) {
  if (!(sigma2 > 0 && sigma2 <= 1)) throw ConfigError("sigma2 must lie in (0, 1]");
  const Box& obj = contact_object(rec, scene).box;
  const Vec2 center(obj.location.x(), obj.location.z());
  const Vec2 current(rec.human.box().location.x(), rec.human.box().location.z());

  const Vec2 offset = current - center;
  const bool inside_window = std::abs(offset.x()) <= kSearchWindow + 1e-9 && std::abs(offset.y()) <= kSearchWindow + 1e-9;
  if (inside_window && iou3d(rec.human.box(), obj) > sigma2 && penetration_error(rec.human, scene) < sigma1) {
    return rec.human;
  }

  struct Cand {
    int i, j;
    double disp;
  };
  const int half = static_cast<int>(std::lround(kSearchWindow / kSearchStep));
  std::vector<Cand> cands;
  cands.reserve(static_cast<std::size_t>(2 * half + 1) * (2 * half + 1));
  for (int i = -half; i <= half; ++i) {
    for (int j = -half; j <= half; ++j) {
      const Vec2 p = center + Vec2(i, j) * kSearchStep;
      cands.push_back({i, j, (p - current).norm()});
    }
  }
  std::stable_sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) { return a.disp < b.disp; });

  CalibrationError::Candidate best{0.0, 0.0, 0.0, -1.0};
  for (const Cand& c : cands) {
    const Vec2 p = center + Vec2(c.i, c.j) * kSearchStep;
    const HumanProxy moved = rec.human.translated(p.x() - current.x(), p.y() - current.y());
    const double iou = iou3d(moved.box(), obj);
    if (iou > best.iou) best = {p.x() - current.x(), p.y() - current.y(), -1.0, iou};
    if (iou <= sigma2) continue;
    if (penetration_error(moved, scene) < sigma1) return moved;
  }
  best.penetration = penetration_error(rec.human.translated(best.dx, best.dz), scene);
  throw CalibrationError(best, "no translation within the search window satisfies E_pen < " + std::to_string(sigma1) +
                                   " and IoU > " + std::to_string(sigma2));
}

std::string_view to_string(RecordOutcome outcome) {
  switch (outcome) {
    case RecordOutcome::unchanged:
      return "unchanged";
    case RecordOutcome::modified:
      return "modified";
    case RecordOutcome::skipped:
      return "skipped";
    case RecordOutcome::rolled_back:
      return "rolled_back";
  }
  return "unknown";
}

AugmentResult category_augment(const Scene& scene, const std::vector<InteractionRecord>& records,
                               std::mt19937_64& rng, const CalibrationThresholds& th) {
  if (records.empty()) throw ContractError("category augmentation needs at least one record");
  AugmentResult out{scene, records, {}};
  const Vocabulary vocab = Vocabulary::desk_scale();

  std::vector<int> order(records.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  for (std::size_t i = order.size() - 1; i > 0; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i);
    std::swap(order[i], order[pick(rng)]);
  }
  const std::size_t chosen = (records.size() + 1) / 2;
  std::sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(chosen));

  for (std::size_t k = 0; k < chosen; ++k) {
    const int idx = order[k];
    const InteractionRecord& rec = records[idx];
    const ObjectInstance& obj = contact_object(rec, scene);
    std::vector<InteractionMode> alternatives;
    for (InteractionMode m : compatible_modes(vocab.name_of(obj.category))) {
      if (m != rec.human.mode()) alternatives.push_back(m);
    }
    if (alternatives.empty()) {
      out.log.add(idx, RecordOutcome::skipped, "no alternative mode for " + vocab.name_of(obj.category));
      continue;
    }
    std::uniform_int_distribution<std::size_t> pick(0, alternatives.size() - 1);
    const InteractionMode mode = alternatives[pick(rng)];
    InteractionRecord posed{pose_human(mode, obj.box, rec.human.vertex_count()), rec.object_index};
    try {
      posed.human = translation_modify(posed, scene, th.penetration, th.iou_for(mode));
      out.records[idx] = posed;
      out.log.add(idx, RecordOutcome::modified, std::string(to_string(rec.human.mode())) + " -> " +
                                                    std::string(to_string(mode)));
    } catch (const CalibrationError& e) {
      out.log.add(idx, RecordOutcome::rolled_back, e.what());
    }
  }
  return out;
}

AugmentResult orientation_augment(const Scene& scene, const std::vector<InteractionRecord>& records,
                                  std::mt19937_64& rng, double noise_radians, const CalibrationThresholds& th) {
  if (records.empty()) throw ContractError("orientation augmentation needs at least one record");
  if (!(noise_radians >= 0)) throw ConfigError("orientation noise must be >= 0");
  AugmentResult out{scene, records, {}};
  std::uniform_real_distribution<double> noise(-noise_radians, noise_radians);
  for (std::size_t i = 0; i < records.size(); ++i) {
    const InteractionRecord& rec = records[i];
    const double dyaw = noise_radians > 0 ? noise(rng) : 0.0;
    InteractionRecord turned{rec.human.rotated(dyaw), rec.object_index};
    try {
      turned.human = translation_modify(turned, scene, th.penetration, th.iou_for(rec.human.mode()));
      out.records[i] = turned;
      out.log.add(static_cast<int>(i), dyaw == 0.0 ? RecordOutcome::unchanged : RecordOutcome::modified,
                  "yaw " + std::to_string(dyaw));
    } catch (const CalibrationError& e) {
      out.log.add(static_cast<int>(i), RecordOutcome::rolled_back, e.what());
    }
  }
  return out;
}

CalibrationSummary summarize(const std::vector<RecordReport>& reports) {
  CalibrationSummary s;
  int sit_lie = 0, touch = 0;
  for (const auto& r : reports) {
    ++s.records;
    if (r.success) ++s.succeeded;
    s.mean_penetration_before += r.penetration_before;
    s.mean_penetration_after += r.penetration_after;
    if (r.mode == InteractionMode::touch) {
      ++touch;
      s.mean_iou_before_touch += r.iou_before;
      s.mean_iou_after_touch += r.iou_after;
    } else {
      ++sit_lie;
      s.mean_iou_before_sit_lie += r.iou_before;
      s.mean_iou_after_sit_lie += r.iou_after;
    }
  }
  if (s.records) {
    s.mean_penetration_before /= s.records;
    s.mean_penetration_after /= s.records;
  }
  if (sit_lie) {
    s.mean_iou_before_sit_lie /= sit_lie;
    s.mean_iou_after_sit_lie /= sit_lie;
  }
  if (touch) {
    s.mean_iou_before_touch /= touch;
    s.mean_iou_after_touch /= touch;
  }
  return s;
}

std::vector<InteractionRecord> calibrate_records(const Scene& scene, const std::vector<InteractionRecord>& records,
                                                 const CalibrationThresholds& th, int scene_index,
                                                 std::vector<RecordReport>* reports) {
  std::vector<InteractionRecord> out = records;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const InteractionRecord& rec = records[i];
    RecordReport rep;
    rep.scene = scene_index;
    rep.record = static_cast<int>(i);
    rep.mode = rec.human.mode();
    rep.penetration_before = penetration_error(rec.human, scene);
    rep.iou_before = interaction_iou(rec, scene);
    try {
      out[i].human = translation_modify(rec, scene, th.penetration, th.iou_for(rec.human.mode()));
      rep.success = true;
    } catch (const CalibrationError& e) {
      rep.error = e.what();
    }
    rep.penetration_after = penetration_error(out[i].human, scene);
    rep.iou_after = interaction_iou(out[i], scene);
    const Vec3 d = out[i].human.box().location - rec.human.box().location;
    rep.displacement = std::hypot(d.x(), d.z());
    if (reports) reports->push_back(std::move(rep));
  }
  return out;
}

}  // namespace scenediff
