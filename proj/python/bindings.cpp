#include "scenediff/calibration.hpp"
#include "scenediff/diffusion.hpp"
#include "scenediff/errors.hpp"
#include "scenediff/evalsuite.hpp"
#include "scenediff/geometry.hpp"
#include "scenediff/io.hpp"
#include "scenediff/sampler.hpp"
#include "scenediff/synthdata.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstdio>
#include <optional>

namespace py = pybind11;
using namespace scenediff;

namespace {

std::vector<Scene> scenes_of(const Corpus& c) {
  std::vector<Scene> out;
  for (const auto& s : c.scenes) out.push_back(s.scene);
  return out;
}

std::vector<const ConditionSet*> conditions_of(const Corpus& c) {
  std::vector<const ConditionSet*> out;
  for (const auto& s : c.scenes) out.push_back(&s.condition);
  return out;
}

py::object parse_json(const std::string& text) { return py::module_::import("json").attr("loads")(text); }

int synth(const std::string& out, int count, std::uint64_t seed, const std::string& room, const std::string& encoding) {
  CorpusSpec spec;
  spec.scene_count = count;
  spec.seed = seed;
  spec.room = room_type_from_string(room);
  spec.validate();
  if (encoding != "rle" && encoding != "base64") throw ConfigError("mask encoding must be rle or base64");
  const Corpus c = generate_corpus(spec);
  save_corpus(out, c);
  if (encoding == "base64") {
    for (std::size_t i = 0; i < c.scenes.size(); ++i) {
      char name[32];
      std::snprintf(name, sizeof name, "scene_%05zu.json", i);
      const auto& s = c.scenes[i];
      save_scene_file(std::filesystem::path(out) / name, {s.scene, s.condition, s.seed}, spec.vocabulary,
                      MaskEncoding::base64);
    }
  }
  return static_cast<int>(c.scenes.size());
}

std::vector<double> train(const std::string& corpus_dir, const std::string& out, std::optional<int> iterations,
                          std::optional<int> batch_size, std::optional<double> lr, std::uint64_t seed) {
  const Corpus c = load_corpus(corpus_dir);
  TrainingConfig tc = desk_training_config();
  if (iterations) tc.iterations = *iterations;
  if (batch_size) tc.batch_size = *batch_size;
  if (lr) tc.learning_rate = *lr;
  tc.seed = seed;
  tc.validate();
  DenoiserConfig dc;
  dc.num_categories = c.spec.vocabulary.size();
  const NormalizationStats norm = NormalizationStats::from_scenes(scenes_of(c), tc.rotation_augmentation);
  SceneDiffusionModel model(dc, norm, c.spec.room, c.spec.resolved_capacity(), tc.seed);
  Trainer trainer(model, tc, make_schedule());
  const auto losses = trainer.fit(training_samples(c));
  save_checkpoint(out, model, c.spec.vocabulary);
  return losses;
}

int sample(const std::string& checkpoint, const std::string& conditions, const std::string& out, bool guidance,
           double gamma, int steps, std::uint64_t seed, int count, const std::vector<std::string>& terms) {
  const Corpus source = load_corpus(conditions);
  if (source.scenes.empty()) throw DegenerateInputError("condition corpus is empty");
  const SceneDiffusionModel model = load_checkpoint(checkpoint);
  if (checkpoint_vocabulary(checkpoint).names != source.spec.vocabulary.names) {
    throw ConfigError("checkpoint and corpus vocabularies differ");
  }
  GenerationOptions opt;
  opt.guidance = guidance;
  opt.guidance_config.gamma = gamma;
  if (!terms.empty()) {
    auto& g = opt.guidance_config;
    g.motion = g.boundary = g.object = false;
    for (const auto& t : terms) {
      if (t == "motion") g.motion = true;
      else if (t == "boundary") g.boundary = true;
      else if (t == "object") g.object = true;
      else throw ConfigError("unknown guidance term '" + t + "'");
    }
  }
  opt.guidance_config.validate();
  opt.steps = steps;
  opt.seed = seed;
  const int n = count > 0 ? count : static_cast<int>(source.scenes.size());
  const auto conds = conditions_of(source);
  const auto generated = sample_scenes(model, conds, make_schedule(), opt, n);
  Corpus c;
  c.spec = source.spec;
  c.spec.scene_count = n;
  c.spec.seed = seed;
  c.spec.capacity = model.capacity();
  for (int i = 0; i < n; ++i) c.scenes.push_back({generated[i].scene, *conds[i % conds.size()], generated[i].seed});
  save_corpus(out, c);
  return n;
}

std::string evaluate_dirs(const std::string& generated, const std::string& reference) {
  const Corpus g = load_corpus(generated);
  const Corpus r = load_corpus(reference);
  MetricsReport rep = evaluate(scenes_of(g), conditions_of(g), scenes_of(r));
  for (const auto& s : g.scenes) rep.seeds.push_back(s.seed);
  return rep.to_json();
}

std::string calibrate(const std::string& corpus_dir, const std::string& out, double corrupt, std::uint64_t seed) {
  Corpus c = load_corpus(corpus_dir);
  std::mt19937_64 rng(seed);
  if (corrupt > 0) c = corrupt_corpus(c, corrupt, rng);
  std::vector<RecordReport> reports;
  for (std::size_t i = 0; i < c.scenes.size(); ++i) {
    CorpusScene& s = c.scenes[i];
    const auto records = calibrate_records(s.scene, s.records(), {}, static_cast<int>(i), &reports);
    s.condition.contacts = contacts_from_records(records, s.scene);
    s.condition.free_space = regenerate_free_space(s.condition.free_space, s.condition.contacts);
    s.condition.layout_points = layout_points_for(s.condition.floor, s.condition.free_space);
  }
  save_corpus(out, c);
  return calibration_report_json(reports).dump();
}

std::string render(const std::string& scene_path) {
  const Vocabulary vocab = Vocabulary::desk_scale();
  const SceneDocument doc = load_scene_file(scene_path, vocab);
  return render_svg(doc.scene, doc.condition, vocab);
}

Box make_box(const Vec3& location, const Vec3& size, double yaw) {
  Box b;
  b.location = location;
  b.size = size;
  b.yaw = yaw;
  return b;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Contact-conditioned indoor scene diffusion: geometry, training, guided sampling and evaluation.";

  static py::exception<Error> base(m, "SceneDiffError");
  static py::exception<ParseError> parse(m, "ParseError", base.ptr());
  static py::exception<ConfigError> config(m, "ConfigError", base.ptr());
  static py::exception<IoError> io(m, "IoError", base.ptr());
  static py::exception<ValidationError> validation(m, "ValidationError", base.ptr());
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const ParseError& e) {
      py::set_error(parse, e.what());
    } catch (const ConfigError& e) {
      py::set_error(config, e.what());
    } catch (const IoError& e) {
      py::set_error(io, e.what());
    } catch (const ValidationError& e) {
      py::set_error(validation, e.what());
    } catch (const Error& e) {
      py::set_error(base, e.what());
    }
  });

  py::class_<Box>(m, "Box")
      .def(py::init(&make_box), py::arg("location"), py::arg("size"), py::arg("yaw") = 0.0)
      .def_readwrite("location", &Box::location)
      .def_readwrite("size", &Box::size)
      .def_readwrite("yaw", &Box::yaw)
      .def("__repr__", [](const Box& b) {
        return "Box(location=(" + std::to_string(b.location.x()) + ", " + std::to_string(b.location.y()) + ", " +
               std::to_string(b.location.z()) + "), yaw=" + std::to_string(b.yaw) + ")";
      });

  m.def("iou3d", &iou3d, py::arg("a"), py::arg("b"), "Exact 3D IoU of two yaw-rotated boxes.");
  m.def(
      "footprint",
      [](const Box& b) {
        std::vector<Vec2> out;
        for (const Vec2& c : footprint(b)) out.push_back(c);
        return out;
      },
      py::arg("box"), "Footprint corners (x, z), counter-clockwise.");
  m.def("sdf_point_box", &sdf_point_box, py::arg("point"), py::arg("box"), "Signed distance, negative inside.");

  m.def(
      "schedule",
      [](int steps) {
        const DiffusionSchedule s = make_schedule(steps);
        py::dict d;
        d["beta"] = s.beta;
        d["alpha"] = s.alpha;
        d["alpha_bar"] = s.alpha_bar;
        return d;
      },
      py::arg("steps") = 200, "Linear noise schedule; index 0 is the t = 0 placeholder.");

  m.def("synth", &synth, py::arg("out"), py::arg("count") = 100, py::arg("seed") = 0, py::arg("room") = "bedroom",
        py::arg("mask_encoding") = "rle", py::call_guard<py::gil_scoped_release>(),
        "Write a synthetic corpus directory; returns the scene count.");
  m.def("train", &train, py::arg("corpus"), py::arg("out"), py::arg("iterations") = py::none(),
        py::arg("batch_size") = py::none(), py::arg("lr") = py::none(), py::arg("seed") = 0,
        py::call_guard<py::gil_scoped_release>(), "Train a denoiser and save a checkpoint; returns per-step losses.");
  m.def("sample", &sample, py::arg("checkpoint"), py::arg("conditions"), py::arg("out"), py::arg("guidance") = true,
        py::arg("gamma") = 1.0, py::arg("steps") = 0, py::arg("seed") = 0, py::arg("count") = 0,
        py::arg("terms") = std::vector<std::string>{}, py::call_guard<py::gil_scoped_release>(),
        "Sample scenes for the conditions of a corpus; returns the scene count.");
  m.def(
      "evaluate",
      [](const std::string& generated, const std::string& reference) {
        std::string text;
        {
          py::gil_scoped_release release;
          text = evaluate_dirs(generated, reference);
        }
        return parse_json(text);
      },
      py::arg("generated"), py::arg("reference"), "Metric report for a generated corpus as a dict.");
  m.def(
      "calibrate",
      [](const std::string& corpus, const std::string& out, double corrupt, std::uint64_t seed) {
        std::string text;
        {
          py::gil_scoped_release release;
          text = calibrate(corpus, out, corrupt, seed);
        }
        return parse_json(text);
      },
      py::arg("corpus"), py::arg("out"), py::arg("corrupt") = 0.0, py::arg("seed") = 0,
      "Translation-calibrate every contact record; returns the calibration report.");
  m.def("render", &render, py::arg("scene"), "Top-down SVG of a scene file.");
  m.def(
      "load_scene",
      [](const std::string& path) {
        const SceneDocument doc = load_scene_file(path, Vocabulary::desk_scale());
        return parse_json(scene_to_json(doc, Vocabulary::desk_scale()).dump());
      },
      py::arg("path"), "Validate a scene file and return its normalized JSON as a dict.");
}
