#include "scenediff/diffusion.hpp"
#include "scenediff/errors.hpp"
#include "scenediff/geometry.hpp"
#include "scenediff/guidance.hpp"
#include "scenediff/synthdata.hpp"

#include "support.hpp"

#include <cmath>

using namespace scenediff;

namespace {

CorpusSpec small_spec(int n, std::uint64_t seed) {
  CorpusSpec spec;
  spec.scene_count = n;
  spec.seed = seed;
  return spec;
}

// Pixels set in `mask` that a hard raster of `b` covers.
long long overlap(const Box& b, const GridMask& mask) {
  const std::vector<double> r = rasterize(b, mask, RasterMode::hard);
  long long n = 0;
  for (int i = 0; i < mask.resolution(); ++i)
    for (int j = 0; j < mask.resolution(); ++j) n += r[static_cast<std::size_t>(i) * mask.resolution() + j] > 0 && mask.at(i, j);
  return n;
}

}  // namespace

TEST_CASE("scene generation is deterministic per seed") {
  const CorpusSpec spec = small_spec(4, 21);
  const CorpusScene a = generate_scene(spec, 77);
  const CorpusScene b = generate_scene(spec, 77);
  CHECK(a.scene == b.scene);
  CHECK(a.condition == b.condition);
  CHECK_FALSE(generate_scene(spec, 78).scene == a.scene);
  const Corpus c = generate_corpus(spec);
  REQUIRE(c.scenes.size() == 4);
  for (int i = 0; i < 4; ++i) {
    const CorpusScene s = generate_scene(spec, derive_seed(21, static_cast<std::uint64_t>(i)));
    CHECK(c.scenes[i].scene == s.scene);
    CHECK(c.scenes[i].seed == s.seed);
  }
}

TEST_CASE("generated scenes satisfy the corpus invariants") {
  const CorpusSpec spec = small_spec(40, 5);
  const Corpus c = generate_corpus(spec);
  int contacts = 0;
  for (const CorpusScene& cs : c.scenes) {
    const Scene& s = cs.scene;
    const ConditionSet& cond = cs.condition;
    CHECK_NOTHROW(validate_scene(s));
    CHECK(s.capacity() == spec.resolved_capacity());
    CHECK(s.occupied_count() >= spec.min_objects);
    CHECK(s.occupied_count() <= spec.max_objects);
    CHECK(s.contact_count == static_cast<int>(cond.contacts.size()));
    CHECK(s.contact_count <= spec.max_contacts);
    contacts += s.contact_count;

    // Ground truth is collision free and inside the room.
    const GuidanceTerms t = hard_scores(s, cond);
    CHECK(t.motion == 0.0);
    CHECK(t.boundary == 0.0);
    CHECK(t.object == 0.0);
    for (int i = 0; i < s.capacity(); ++i) {
      if (s.is_empty(i)) continue;
      CHECK(s.objects[i].box.location.y() == doctest::Approx(s.objects[i].box.size.y() / 2));
    }

    // Free space is a non-empty part of the floor clear of humans.
    CHECK(cond.free_space.count() > 0);
    CHECK(cond.free_space.hadamard(cond.floor) == cond.free_space);
    for (const ContactBox& cb : cond.contacts) CHECK(overlap(cb.box, cond.free_space) == 0);

    // Contacts are valid interactions with their paired rows.
    const auto recs = cs.records();
    for (std::size_t i = 0; i < recs.size(); ++i) {
      CHECK(cond.contacts[i].intended_category == s.objects[i].category);
      CHECK(interaction_iou(recs[i], s) > default_iou_bound(recs[i].human.mode()));
      CHECK(penetration_error(recs[i].human, s) < kPenetrationBound);
    }

    CHECK(cond.layout_points.rows() == kLayoutPointCount);
    CHECK(cond.layout_points.col(1).cwiseAbs().maxCoeff() == 0.0);
  }
  CHECK(contacts >= static_cast<int>(c.scenes.size()));
}

TEST_CASE("corruption moves only the humans and within the bound") {
  const Corpus c = generate_corpus(small_spec(10, 8));
  std::mt19937_64 rng(1);
  const Corpus same = corrupt_corpus(c, 0.0, rng);
  for (std::size_t i = 0; i < c.scenes.size(); ++i) CHECK(same.scenes[i].condition == c.scenes[i].condition);
  const Corpus moved = corrupt_corpus(c, 0.5, rng);
  bool any = false;
  for (std::size_t i = 0; i < c.scenes.size(); ++i) {
    CHECK(moved.scenes[i].scene == c.scenes[i].scene);
    CHECK(moved.scenes[i].condition.free_space == c.scenes[i].condition.free_space);
    for (std::size_t k = 0; k < c.scenes[i].condition.contacts.size(); ++k) {
      const Box& a = c.scenes[i].condition.contacts[k].box;
      const Box& b = moved.scenes[i].condition.contacts[k].box;
      CHECK(std::abs(b.location.x() - a.location.x()) <= 0.5);
      CHECK(std::abs(b.location.z() - a.location.z()) <= 0.5);
      CHECK(b.location.y() == a.location.y());
      CHECK(b.size == a.size);
      any = any || b.location != a.location;
    }
  }
  CHECK(any);
  CHECK_THROWS_AS(corrupt_corpus(c, -1.0, rng), ConfigError);
}

TEST_CASE("regenerated free space excludes moved humans") {
  const CorpusScene cs = generate_scene(small_spec(1, 0), 3);
  std::vector<ContactBox> moved = cs.condition.contacts;
  for (auto& m : moved) m.box.location.x() += 0.4;
  const GridMask fs = regenerate_free_space(cs.condition.free_space, moved);
  CHECK(fs.count() <= cs.condition.free_space.count());
  CHECK(fs.hadamard(cs.condition.free_space) == fs);
  for (const auto& m : moved) CHECK(overlap(m.box, fs) == 0);
}

TEST_CASE("category histogram counts non-empty objects") {
  const Corpus c = generate_corpus(small_spec(30, 2));
  std::vector<Scene> scenes;
  std::vector<double> counts(8, 0.0);
  double total = 0;
  for (const auto& cs : c.scenes) {
    scenes.push_back(cs.scene);
    for (const auto& o : cs.scene.objects) {
      if (o.category < 8) {
        counts[o.category] += 1;
        total += 1;
      }
    }
  }
  const std::vector<double> h = category_histogram(scenes, 8);
  double sum = 0;
  for (int k = 0; k < 8; ++k) {
    CHECK(h[k] == doctest::Approx(counts[k] / total).epsilon(1e-12));
    sum += h[k];
  }
  CHECK(sum == doctest::Approx(1.0));
  CHECK(category_histogram({}, 3) == std::vector<double>(3, 0.0));
}

TEST_CASE("generation reports budget exhaustion and invalid specs") {
  CorpusSpec spec = small_spec(1, 0);
  spec.attempt_budget = 1;
  try {
    generate_scene(spec, 1234);
    FAIL("expected GenerationError");
  } catch (const GenerationError& e) {
    CHECK(e.seed() == 1234);
  }
  CorpusSpec bad = small_spec(0, 0);
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = small_spec(1, 0);
  bad.max_objects = 40;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = small_spec(1, 0);
  bad.min_contacts = 2;
  bad.max_contacts = 1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}
