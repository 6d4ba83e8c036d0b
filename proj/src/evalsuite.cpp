#include "scenediff/evalsuite.hpp"

#include "scenediff/errors.hpp"
#include "scenediff/geometry.hpp"
#include "scenediff/guidance.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace scenediff {

double iou_contact(const Scene& scene, const std::vector<ContactBox>& contacts, bool category_constrained) {
  if (contacts.empty()) throw DegenerateInputError("contact IoU needs at least one contact box");
  double total = 0.0;
  for (const auto& c : contacts) {
    double best = 0.0;
    for (int j = 0; j < scene.capacity(); ++j) {
      if (scene.is_empty(j)) continue;
      if (category_constrained && scene.objects[j].category != c.intended_category) continue;
      best = std::max(best, iou3d(c.box, scene.objects[j].box));
    }
    total += best;
  }
  return total / static_cast<double>(contacts.size());
}

double col_mot(const Scene& scene, const ConditionSet& cond) {
  return std::clamp(motion_collision(scene, cond.free_space, RasterMode::hard), 0.0, 1.0);
}

double r_out(const Scene& scene, const ConditionSet& cond) {
  return std::clamp(boundary_violation(scene, cond.floor, RasterMode::hard), 0.0, 1.0);
}

double col_obj(const Scene& scene, double tau_c) {
  int objects = 0, colliding = 0;
  for (int i = 0; i < scene.capacity(); ++i) {
    if (scene.is_empty(i)) continue;
    ++objects;
    for (int j = 0; j < scene.capacity(); ++j) {
      if (j == i || scene.is_empty(j)) continue;
      if (iou3d(scene.objects[i].box, scene.objects[j].box) > tau_c) {
        ++colliding;
        break;
      }
    }
  }
  return objects ? static_cast<double>(colliding) / objects : 0.0;
}

namespace {

std::vector<double> frequencies(const std::vector<Scene>& scenes, int k) {
  std::vector<double> f(k, 0.0);
  double total = 0.0;
  for (const auto& s : scenes) {
    for (int i = 0; i < s.capacity(); ++i) {
      const int c = s.objects[i].category;
      if (c < 0 || c >= k) continue;
      f[c] += 1.0;
      total += 1.0;
    }
  }
  for (double& v : f) v = ((total > 0 ? v / total : 0.0) + kKlSmoothing) / (1.0 + k * kKlSmoothing);
  return f;
}

}  // namespace

double ckl(const std::vector<Scene>& generated, const std::vector<Scene>& reference, int num_categories) {
  if (generated.empty() || reference.empty()) throw DegenerateInputError("CKL needs non-empty scene sets");
  const std::vector<double> p = frequencies(generated, num_categories);
  const std::vector<double> q = frequencies(reference, num_categories);
  double kl = 0.0;
  for (int c = 0; c < num_categories; ++c) kl += p[c] * std::log(p[c] / q[c]);
  return std::max(0.0, kl);
}

MetricsReport evaluate(const std::vector<Scene>& generated, const std::vector<const ConditionSet*>& conditions,
                       const std::vector<Scene>& reference, const EvalOptions& options) {
  if (generated.size() != conditions.size()) throw ContractError("one condition per generated scene is required");
  if (generated.empty()) throw DegenerateInputError("evaluation needs at least one scene");
  MetricsReport r;
  r.options = options;
  int with_contacts = 0;
  for (std::size_t i = 0; i < generated.size(); ++i) {
    const Scene& s = generated[i];
    const ConditionSet& c = *conditions[i];
    SceneMetrics m;
    if (!c.contacts.empty()) {
      m.iou_contact = iou_contact(s, c.contacts, options.category_constrained);
      r.mean_iou_contact += *m.iou_contact;
      ++with_contacts;
    }
    m.col_mot = col_mot(s, c);
    m.r_out = r_out(s, c);
    m.col_obj = col_obj(s, options.tau_c);
    r.mean_col_mot += m.col_mot;
    r.mean_r_out += m.r_out;
    r.mean_col_obj += m.col_obj;
    r.scenes.push_back(m);
  }
  const double n = static_cast<double>(generated.size());
  if (with_contacts) r.mean_iou_contact /= with_contacts;
  r.mean_col_mot /= n;
  r.mean_r_out /= n;
  r.mean_col_obj /= n;
  r.ckl = ckl(generated, reference, generated.front().num_categories);
  return r;
}

std::string MetricsReport::to_json() const {
  nlohmann::ordered_json j;
  j["mean"] = {{"iou_contact", mean_iou_contact},
               {"col_mot", mean_col_mot},
               {"r_out", mean_r_out},
               {"col_obj", mean_col_obj},
               {"ckl", ckl}};
  nlohmann::ordered_json per = nlohmann::ordered_json::array();
  for (const auto& s : scenes) {
    nlohmann::ordered_json e;
    e["iou_contact"] = s.iou_contact ? nlohmann::ordered_json(*s.iou_contact) : nlohmann::ordered_json(nullptr);
    e["col_mot"] = s.col_mot;
    e["r_out"] = s.r_out;
    e["col_obj"] = s.col_obj;
    per.push_back(e);
  }
  j["scenes"] = per;
  j["config"] = {{"tau_c", options.tau_c},
                 {"category_constrained", options.category_constrained},
                 {"kl_smoothing", kKlSmoothing},
                 {"seeds", seeds}};
  j["notes"] = "col_mot, r_out and col_obj use operational definitions of this implementation";
  return j.dump(2) + "\n";
}

std::string MetricsReport::to_table() const {
  std::ostringstream os;
  char line[128];
  std::snprintf(line, sizeof line, "%-12s %10s\n", "metric", "value");
  os << line;
  const std::pair<const char*, double> rows[] = {{"iou_contact", mean_iou_contact},
                                                 {"col_mot", mean_col_mot},
                                                 {"r_out", mean_r_out},
                                                 {"col_obj", mean_col_obj},
                                                 {"ckl", ckl}};
  for (const auto& [name, v] : rows) {
    std::snprintf(line, sizeof line, "%-12s %10.4f\n", name, v);
    os << line;
  }
  std::snprintf(line, sizeof line, "%-12s %10zu\n", "scenes", scenes.size());
  os << line;
  return os.str();
}

}  // namespace scenediff
