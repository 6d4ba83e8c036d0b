#pragma once

#include "scenediff/scene_model.hpp"

#include <doctest.h>

#include <filesystem>
#include <random>
#include <string>

namespace testing {

using namespace scenediff;

inline Box random_box(std::mt19937_64& rng, double spread = 1.0) {
  std::uniform_real_distribution<double> loc(-spread, spread), sz(0.2, 1.5), yaw(-kPi, kPi);
  Box b;
  b.size = {sz(rng), sz(rng), sz(rng)};
  b.location = {loc(rng), b.size.y() / 2 + 0.3 * loc(rng) / spread, loc(rng)};
  b.yaw = wrap_angle(yaw(rng));
  return b;
}

inline Box make_box(double x, double z, double w, double d, double yaw = 0.0, double y = 0.5, double h = 1.0) {
  Box b;
  b.location = {x, y, z};
  b.size = {w, h, d};
  b.yaw = yaw;
  return b;
}

inline Scene scene_of(const std::vector<Box>& boxes, int contact_count = 0, int capacity = 12, int k = 8) {
  Scene s;
  s.num_categories = k;
  s.contact_count = contact_count;
  for (std::size_t i = 0; i < boxes.size(); ++i) s.objects.push_back({static_cast<int>(i % k), boxes[i]});
  while (s.capacity() < capacity) s.objects.push_back(make_empty_object(k));
  return s;
}

// Fresh scratch directory under the system temp path.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("scenediff_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline std::filesystem::path data_path(const std::string& name) {
  return std::filesystem::path(SCENEDIFF_TEST_DATA) / name;
}

}  // namespace testing
