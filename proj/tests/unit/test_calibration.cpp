#include "scenediff/calibration.hpp"
#include "scenediff/errors.hpp"
#include "scenediff/geometry.hpp"

#include "support.hpp"

#include <cmath>

using namespace scenediff;
using testing::make_box;
using testing::scene_of;

namespace {

// Depth of a point inside a yaw box, 0 outside.
double depth_in(const Vec3& p, const Box& b) {
  const double dx = p.x() - b.location.x(), dz = p.z() - b.location.z();
  const double u = std::cos(b.yaw) * dx + std::sin(b.yaw) * dz;
  const double w = -std::sin(b.yaw) * dx + std::cos(b.yaw) * dz;
  const double v = p.y() - b.location.y();
  const double m = std::min({b.size.x() / 2 - std::abs(u), b.size.y() / 2 - std::abs(v), b.size.z() / 2 - std::abs(w)});
  return std::max(0.0, m);
}

// Penetration oracle: per vertex, deepest containing box, in centimeters.
double penetration_oracle(const HumanProxy& h, const Scene& s) {
  const Eigen::MatrixX3d v = h.vertices();
  double total = 0;
  for (Eigen::Index i = 0; i < v.rows(); ++i) {
    double d = 0;
    for (int k = 0; k < s.capacity(); ++k)
      if (!s.is_empty(k)) d = std::max(d, depth_in(v.row(i).transpose(), s.objects[k].box));
    total += 100 * d;
  }
  return total;
}

bool qualifies(const HumanProxy& h, const Box& obj, const Scene& s, double sigma1, double sigma2) {
  return iou3d(h.box(), obj) > sigma2 && penetration_oracle(h, s) < sigma1;
}

// Objects by index: bed, nightstand, wardrobe, chair, table.
Scene furnished() {
  return scene_of({make_box(0, 0, 1.6, 2.0, 0.0, 0.3, 0.6), make_box(2.2, 0, 0.4, 0.4), make_box(-2.2, 0, 0.5, 0.5),
                   make_box(0.2, 2.0, 0.5, 0.5, 0.4, 0.45, 0.9), make_box(-1.5, 2.2, 1.2, 0.7, 0.0, 0.37, 0.74)});
}

}  // namespace

TEST_CASE("posed human takes the larger footprint, the object height and a 1% margin") {
  const Box chair = make_box(1, 2, 0.4, 0.6, 0.7, 0.45, 0.9);
  const HumanProxy h = pose_human(InteractionMode::sit, chair);
  CHECK(h.box().size.x() == doctest::Approx(0.5 * 1.01));
  CHECK(h.box().size.y() == doctest::Approx(0.9 * 1.01));
  CHECK(h.box().size.z() == doctest::Approx(0.6 * 1.01));
  CHECK(h.box().yaw == chair.yaw);
  CHECK(h.vertex_count() == kHumanVertexCount);
  // Every vertex lies on the box surface.
  const Eigen::MatrixX3d v = h.vertices();
  for (Eigen::Index i = 0; i < v.rows(); ++i) CHECK(depth_in(v.row(i).transpose(), h.box()) < 1e-9);
  CHECK(sdf_point_box(v.row(0).transpose(), h.box()) == doctest::Approx(0.0).epsilon(1e-9));
  // The chair lies inside the human box, so IoU is the volume ratio.
  CHECK(iou3d(h.box(), chair) ==
        doctest::Approx((0.4 * 0.9 * 0.6) / (0.5 * 0.9 * 0.6 * 1.01 * 1.01 * 1.01)).epsilon(1e-9));
  CHECK_THROWS_AS(HumanProxy(InteractionMode::sit, chair, 10), ConfigError);
  CHECK(default_iou_bound(InteractionMode::touch) == 0.5);
  CHECK(default_iou_bound(InteractionMode::lie) == 0.9);
}

TEST_CASE("vertices move rigidly under translation and rotation") {
  const HumanProxy h = pose_human(InteractionMode::touch, make_box(0.3, -0.2, 0.8, 0.6, 0.2));
  const Eigen::MatrixX3d v = h.vertices();
  const Eigen::MatrixX3d t = h.translated(0.5, -1.0).vertices();
  CHECK((t.col(0).array() - v.col(0).array() - 0.5).abs().maxCoeff() < 1e-12);
  CHECK((t.col(2).array() - v.col(2).array() + 1.0).abs().maxCoeff() < 1e-12);
  const HumanProxy r = h.rotated(0.6);
  CHECK(r.box().yaw == doctest::Approx(0.8));
  // Distances between vertices are preserved.
  const Eigen::MatrixX3d rv = r.vertices();
  for (int i = 1; i < 20; ++i) CHECK((rv.row(i) - rv.row(0)).norm() == doctest::Approx((v.row(i) - v.row(0)).norm()));
}

TEST_CASE("penetration error matches the containing-box oracle") {
  const Scene s = furnished();
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> off(-0.6, 0.6);
  for (int trial = 0; trial < 20; ++trial) {
    const HumanProxy h = pose_human(InteractionMode::touch, s.objects[3].box).translated(off(rng), off(rng));
    CHECK(penetration_error(h, s) == doctest::Approx(penetration_oracle(h, s)).epsilon(1e-9));
  }
  // A human floating far away penetrates nothing.
  CHECK(penetration_error(pose_human(InteractionMode::touch, make_box(9, 9, 1, 1)), s) == 0.0);
  CHECK_THROWS_AS(penetration_error(pose_human(InteractionMode::touch, make_box(0, 0, 1, 1)), scene_of({})),
                  DegenerateInputError);
}

TEST_CASE("translation modification keeps valid poses and restores corrupted ones minimally") {
  const Scene s = furnished();
  const CalibrationThresholds th;
  for (int obj : {0, 3, 4}) {
    const InteractionMode mode = obj == 0 ? InteractionMode::lie : obj == 3 ? InteractionMode::sit : InteractionMode::touch;
    const InteractionRecord ok{pose_human(mode, s.objects[obj].box), obj};
    REQUIRE(qualifies(ok.human, s.objects[obj].box, s, th.penetration, th.iou_for(mode)));
    const HumanProxy same = translation_modify(ok, s, th.penetration, th.iou_for(mode));
    CHECK(same.box().location == ok.human.box().location);

    for (const Vec2& d : {Vec2(0.5, 0.0), Vec2(-0.5, 0.5), Vec2(0.13, -0.41)}) {
      const InteractionRecord bad{ok.human.translated(d.x(), d.y()), obj};
      const HumanProxy fixed = translation_modify(bad, s, th.penetration, th.iou_for(mode));
      const Box& ob = s.objects[obj].box;
      CHECK(qualifies(fixed, ob, s, th.penetration, th.iou_for(mode)));
      const Vec2 cur(bad.human.box().location.x(), bad.human.box().location.z());
      const double moved = (Vec2(fixed.box().location.x(), fixed.box().location.z()) - cur).norm();
      // Brute-force oracle: no grid candidate closer than the answer qualifies.
      for (int i = -40; i <= 40; ++i) {
        for (int j = -40; j <= 40; ++j) {
          const Vec2 p = Vec2(ob.location.x(), ob.location.z()) + Vec2(i, j) * 0.05;
          if ((p - cur).norm() >= moved - 1e-9) continue;
          const HumanProxy cand = bad.human.translated(p.x() - cur.x(), p.y() - cur.y());
          CHECK_FALSE(qualifies(cand, ob, s, th.penetration, th.iou_for(mode)));
        }
      }
    }
  }
}

TEST_CASE("unsatisfiable thresholds raise with the closest candidate") {
  const Scene s = furnished();
  const InteractionRecord rec{pose_human(InteractionMode::sit, s.objects[3].box).translated(0.3, 0.0), 3};
  try {
    // IoU can never exceed 1.
    translation_modify(rec, s, 20.0, 1.0);
    FAIL("expected CalibrationError");
  } catch (const CalibrationError& e) {
    CHECK(e.best().iou > 0.9);
    CHECK(std::abs(e.best().dx + 0.3) < 1e-9);
  }
  CHECK_THROWS_AS(translation_modify(rec, s, 20.0, 0.0), ConfigError);
  CHECK_THROWS_AS(translation_modify(InteractionRecord{rec.human, 9}, s, 20.0, 0.5), ValidationError);
}

TEST_CASE("calibrate_records reports every record and fixes corrupted ones") {
  const Scene s = furnished();
  std::vector<InteractionRecord> recs = {{pose_human(InteractionMode::lie, s.objects[0].box).translated(0.5, 0), 0},
                                         {pose_human(InteractionMode::sit, s.objects[3].box), 3}};
  std::vector<RecordReport> reports;
  const auto out = calibrate_records(s, recs, {}, 7, &reports);
  REQUIRE(reports.size() == 2);
  CHECK(reports[0].scene == 7);
  CHECK(reports[0].success);
  CHECK(reports[0].displacement == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(reports[0].iou_after > 0.9);
  CHECK(reports[1].displacement == 0.0);
  CHECK(out[1].human.box().location == recs[1].human.box().location);
  const CalibrationSummary sum = summarize(reports);
  CHECK(sum.records == 2);
  CHECK(sum.success_rate() == 1.0);
  CHECK(sum.mean_iou_after_sit_lie > sum.mean_iou_before_sit_lie);
}

TEST_CASE("category augmentation switches half of the records and skips incompatible ones") {
  const Scene s = furnished();
  CHECK(compatible_modes("bed").size() == 2);
  CHECK(compatible_modes("lamp").empty());
  const std::vector<InteractionRecord> recs = {{pose_human(InteractionMode::sit, s.objects[0].box), 0},
                                               {pose_human(InteractionMode::touch, s.objects[1].box), 1}};
  int switched = 0, skipped = 0;
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    std::mt19937_64 rng(seed);
    const AugmentResult r = category_augment(s, recs, rng);
    REQUIRE(r.log.record.size() == 1);  // ceil(2 / 2)
    if (r.log.outcome[0] == RecordOutcome::modified) {
      CHECK(r.log.record[0] == 0);
      CHECK(r.records[0].human.mode() == InteractionMode::lie);
      CHECK(r.records[1].human.box().location == recs[1].human.box().location);
      ++switched;
    } else if (r.log.outcome[0] == RecordOutcome::skipped) {
      CHECK(r.log.record[0] == 1);  // a nightstand has no alternative to touch
      ++skipped;
    }
  }
  CHECK(switched > 0);
  CHECK(skipped > 0);
  std::mt19937_64 rng(1);
  CHECK_THROWS_AS(category_augment(s, {}, rng), ContractError);
}

TEST_CASE("orientation augmentation is a no-op without noise and rolls back failures") {
  const Scene s = furnished();
  const std::vector<InteractionRecord> recs = {{pose_human(InteractionMode::sit, s.objects[3].box), 3}};
  std::mt19937_64 rng(4);
  const AugmentResult none = orientation_augment(s, recs, rng, 0.0);
  CHECK(none.log.outcome[0] == RecordOutcome::unchanged);
  CHECK(none.records[0].human.box().yaw == doctest::Approx(recs[0].human.box().yaw).epsilon(1e-12));

  CalibrationThresholds strict;
  strict.iou_sit_lie = 0.999;
  const AugmentResult r = orientation_augment(s, recs, rng, kPi / 6, strict);
  CHECK(r.log.outcome[0] == RecordOutcome::rolled_back);
  CHECK(r.records[0].human.box().yaw == recs[0].human.box().yaw);
  CHECK_THROWS_AS(orientation_augment(s, recs, rng, -1.0), ConfigError);
}
