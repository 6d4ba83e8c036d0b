#pragma once

#include "scenediff/calibration.hpp"
#include "scenediff/scene_model.hpp"

#include <cstdint>
#include <random>
#include <vector>

namespace scenediff {

struct CorpusSpec {
  RoomType room = RoomType::bedroom;
  int scene_count = 100;
  Vocabulary vocabulary = Vocabulary::desk_scale();
  double world_extent = kDefaultWorldExtent;
  std::uint64_t seed = 0;
  double trail_density = 1.0;  // scales the number of trail legs
  int capacity = 0;            // 0 = room default
  int min_objects = 3;
  int max_objects = 8;
  int min_contacts = 1;
  int max_contacts = 3;
  int attempt_budget = 10000;

  int resolved_capacity() const { return capacity > 0 ? capacity : default_capacity(room); }
  void validate() const;
};

struct CorpusScene {
  Scene scene;
  ConditionSet condition;
  std::uint64_t seed = 0;

  std::vector<InteractionRecord> records() const { return records_from_contacts(condition.contacts); }
};

struct Corpus {
  CorpusSpec spec;
  std::vector<CorpusScene> scenes;
};

// One scene: rectangular or L-shaped floor, 3-8 separated objects placed by
// rejection sampling, 1-3 contact humans posed on eligible objects, and a
// free-space mask from a random-walk trail dilated by 0.3 m with every
// object and human footprint removed. Throws GenerationError (carrying
// `seed`) when the attempt budget runs out.
CorpusScene generate_scene(const CorpusSpec& spec, std::uint64_t seed);

// Scene i is generated from derive_seed(spec.seed, i).
Corpus generate_corpus(const CorpusSpec& spec);

// Moves every contact human by U(-d, d) along x and z. Scenes, masks and
// layout points are kept.
Corpus corrupt_corpus(const Corpus& corpus, double displacement, std::mt19937_64& rng);

// Free space after humans moved: the original mask with the footprints of
// the contact boxes removed.
GridMask regenerate_free_space(const GridMask& free_space, const std::vector<ContactBox>& contacts);

// Category frequencies over non-EMPTY objects (length K).
std::vector<double> category_histogram(const std::vector<Scene>& scenes, int num_categories);

}  // namespace scenediff
