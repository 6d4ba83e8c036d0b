#include "scenediff/calibration.hpp"
#include "scenediff/diffusion.hpp"
#include "scenediff/errors.hpp"
#include "scenediff/evalsuite.hpp"
#include "scenediff/io.hpp"
#include "scenediff/sampler.hpp"
#include "scenediff/synthdata.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

using namespace scenediff;
namespace fs = std::filesystem;

namespace {

struct SampleFlags {
  std::string checkpoint;
  std::string conditions;
  std::optional<std::string> guidance;
  std::optional<double> gamma;
  std::optional<int> steps;
  std::optional<std::uint64_t> seed;
  int count = 0;
  std::optional<std::string> terms;

  void add_to(CLI::App* app, bool checkpoint_required) {
    auto* ck = app->add_option("--checkpoint", checkpoint, "Model checkpoint (JSON)");
    if (checkpoint_required) ck->required();
    app->add_option("--guidance", guidance, "Collision guidance during sampling")->check(CLI::IsMember({"on", "off"}));
    app->add_option("--gamma", gamma, "Guidance strength");
    app->add_option("--steps", steps, "Sampling steps (0 = full schedule, otherwise respaced)");
    app->add_option("--seed", seed, "Sampling seed");
    app->add_option("--count", count, "Number of scenes (default: one per condition)");
    app->add_option("--terms", terms, "Guidance terms, comma separated subset of motion,boundary,object");
  }

  GenerationOptions options(const RunConfig& cfg) const {
    GenerationOptions o;
    o.guidance_config = cfg.guidance;
    o.steps = steps.value_or(cfg.sampling_steps);
    o.seed = seed.value_or(0);
    o.guidance = guidance.value_or("off") == "on";
    if (gamma) o.guidance_config.gamma = *gamma;
    if (terms) {
      GuidanceConfig& g = o.guidance_config;
      g.motion = g.boundary = g.object = false;
      std::stringstream ss(*terms);
      std::string t;
      while (std::getline(ss, t, ',')) {
        if (t == "motion") g.motion = true;
        else if (t == "boundary") g.boundary = true;
        else if (t == "object") g.object = true;
        else if (!t.empty()) throw ConfigError("unknown guidance term '" + t + "'");
      }
    }
    o.guidance_config.validate();
    return o;
  }
};

void log(const std::string& s) { std::cerr << s << "\n"; }

std::vector<const ConditionSet*> conditions_of(const Corpus& c) {
  std::vector<const ConditionSet*> out;
  for (const auto& s : c.scenes) out.push_back(&s.condition);
  return out;
}

std::vector<Scene> scenes_of(const Corpus& c) {
  std::vector<Scene> out;
  for (const auto& s : c.scenes) out.push_back(s.scene);
  return out;
}

// Samples scenes for the conditions of `source`, returned as a corpus whose
// scene i pairs with condition i % size.
Corpus generate(const SampleFlags& f, const RunConfig& cfg, const Corpus& source) {
  if (source.scenes.empty()) throw DegenerateInputError("condition corpus is empty");
  const SceneDiffusionModel model = load_checkpoint(f.checkpoint);
  const Vocabulary vocab = checkpoint_vocabulary(f.checkpoint);
  if (vocab.names != source.spec.vocabulary.names) throw ConfigError("checkpoint and corpus vocabularies differ");
  const GenerationOptions opt = f.options(cfg);
  const int count = f.count > 0 ? f.count : static_cast<int>(source.scenes.size());
  const auto conds = conditions_of(source);
  const auto generated = sample_scenes(model, conds, make_schedule(), opt, count);
  Corpus out;
  out.spec = source.spec;
  out.spec.scene_count = count;
  out.spec.seed = opt.seed;
  out.spec.capacity = model.capacity();
  for (int i = 0; i < count; ++i) {
    out.scenes.push_back({generated[i].scene, *conds[i % conds.size()], generated[i].seed});
  }
  return out;
}

MetricsReport score(const Corpus& generated, const Corpus& reference, const RunConfig& cfg) {
  MetricsReport r = evaluate(scenes_of(generated), conditions_of(generated), scenes_of(reference), cfg.eval);
  for (const auto& s : generated.scenes) r.seeds.push_back(s.seed);
  return r;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Contact-conditioned indoor scene diffusion toolkit"};
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("--config", config_path, "JSON config overriding defaults")->check(CLI::ExistingFile);

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic corpus");
  std::string synth_out;
  std::optional<int> synth_count;
  std::optional<std::uint64_t> synth_seed;
  std::optional<std::string> synth_room;
  std::string synth_encoding = "rle";
  synth->add_option("--out", synth_out, "Output corpus directory")->required();
  synth->add_option("--count", synth_count, "Number of scenes");
  synth->add_option("--seed", synth_seed, "Corpus seed");
  synth->add_option("--room", synth_room, "Room type")->check(CLI::IsMember({"bedroom", "living", "dining"}));
  synth->add_option("--mask-encoding", synth_encoding, "Mask encoding")->check(CLI::IsMember({"rle", "base64"}));

  // train
  auto* train = app.add_subcommand("train", "Train a denoiser on a corpus");
  std::string train_corpus, train_out;
  std::optional<int> train_iters, train_batch;
  std::optional<double> train_lr;
  std::optional<std::uint64_t> train_seed;
  int train_log_every = 100;
  train->add_option("--corpus", train_corpus, "Training corpus directory")->required()->check(CLI::ExistingDirectory);
  train->add_option("--out", train_out, "Output checkpoint path")->required();
  train->add_option("--iterations", train_iters, "Optimizer steps");
  train->add_option("--batch-size", train_batch, "Batch size");
  train->add_option("--lr", train_lr, "Peak learning rate");
  train->add_option("--seed", train_seed, "Initialization and batching seed");
  train->add_option("--log-every", train_log_every, "Progress interval (0 = silent)");

  // sample
  auto* sample = app.add_subcommand("sample", "Sample scenes from a checkpoint");
  SampleFlags sample_flags;
  std::string sample_out;
  sample_flags.add_to(sample, true);
  sample->add_option("--conditions", sample_flags.conditions, "Corpus providing contacts and masks")
      ->required()
      ->check(CLI::ExistingDirectory);
  sample->add_option("--out", sample_out, "Output directory for generated scenes")->required();

  // calibrate
  auto* calibrate = app.add_subcommand("calibrate", "Calibrate interaction records of a corpus");
  std::string cal_corpus, cal_out, cal_report;
  std::optional<double> cal_sigma1, cal_sigma2_sit_lie, cal_sigma2_touch, cal_displace;
  std::optional<std::uint64_t> cal_seed;
  std::string cal_augment = "none";
  calibrate->add_option("--corpus", cal_corpus, "Input corpus directory")->required()->check(CLI::ExistingDirectory);
  calibrate->add_option("--out", cal_out, "Output corpus directory")->required();
  calibrate->add_option("--report", cal_report, "Report path (default <out>/calibration_report.json)");
  calibrate->add_option("--seed", cal_seed, "Seed for corruption and augmentation");
  calibrate->add_option("--sigma1", cal_sigma1, "Penetration bound");
  calibrate->add_option("--sigma2-sit-lie", cal_sigma2_sit_lie, "IoU bound for sit and lie");
  calibrate->add_option("--sigma2-touch", cal_sigma2_touch, "IoU bound for touch");
  calibrate->add_option("--corrupt", cal_displace, "Displace every contact by up to this many meters first");
  calibrate->add_option("--augment", cal_augment, "Augmentation after calibration")
      ->check(CLI::IsMember({"none", "category", "orientation"}));

  // eval
  auto* eval = app.add_subcommand("eval", "Score generated scenes");
  SampleFlags eval_flags;
  std::string eval_generated, eval_reference, eval_out;
  eval_flags.add_to(eval, false);
  eval->add_option("--corpus", eval_flags.conditions, "Conditions for sampling with --checkpoint")
      ->check(CLI::ExistingDirectory);
  eval->add_option("--generated", eval_generated, "Directory of already generated scenes")
      ->check(CLI::ExistingDirectory);
  eval->add_option("--reference", eval_reference, "Reference corpus for CKL (default: --corpus)")
      ->check(CLI::ExistingDirectory);
  eval->add_option("--out", eval_out, "Write the JSON report here");

  // render
  auto* render = app.add_subcommand("render", "Render a scene file as SVG");
  std::string render_scene, render_out, render_vocab;
  render->add_option("--scene", render_scene, "Scene JSON file")->required()->check(CLI::ExistingFile);
  render->add_option("--out", render_out, "Output SVG path")->required();
  render->add_option("--vocabulary", render_vocab, "Checkpoint or corpus manifest supplying category names");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    RunConfig cfg;
    if (!config_path.empty()) cfg = run_config_from_json(read_json_file(config_path));

    if (*synth) {
      CorpusSpec spec = cfg.corpus;
      if (synth_count) spec.scene_count = *synth_count;
      if (synth_seed) spec.seed = *synth_seed;
      if (synth_room) spec.room = room_type_from_string(*synth_room);
      spec.validate();
      Corpus c = generate_corpus(spec);
      if (synth_encoding == "base64") {
        // save_corpus writes RLE; rewrite scene files when base64 is asked for.
        save_corpus(synth_out, c);
        for (std::size_t i = 0; i < c.scenes.size(); ++i) {
          char name[32];
          std::snprintf(name, sizeof name, "scene_%05zu.json", i);
          save_scene_file(fs::path(synth_out) / name, {c.scenes[i].scene, c.scenes[i].condition, c.scenes[i].seed},
                          spec.vocabulary, MaskEncoding::base64);
        }
      } else {
        save_corpus(synth_out, c);
      }
      std::cout << "wrote " << c.scenes.size() << " scenes to " << synth_out << "\n";
    } else if (*train) {
      const Corpus c = load_corpus(train_corpus);
      TrainingConfig tc = cfg.training;
      if (train_iters) tc.iterations = *train_iters;
      if (train_batch) tc.batch_size = *train_batch;
      if (train_lr) tc.learning_rate = *train_lr;
      if (train_seed) tc.seed = *train_seed;
      tc.validate();
      DenoiserConfig dc = cfg.model;
      dc.num_categories = c.spec.vocabulary.size();
      const auto samples = training_samples(c);
      const NormalizationStats norm = NormalizationStats::from_scenes(scenes_of(c), tc.rotation_augmentation);
      SceneDiffusionModel model(dc, norm, c.spec.room, c.spec.resolved_capacity(), tc.seed);
      Trainer trainer(model, tc, make_schedule());
      double window = 0.0;
      const auto losses = trainer.fit(samples, [&](int it, double loss) {
        window += loss;
        if (train_log_every > 0 && (it + 1) % train_log_every == 0) {
          char line[96];
          std::snprintf(line, sizeof line, "iter %d loss %.5f", it + 1, window / train_log_every);
          log(line);
          window = 0.0;
        }
      });
      save_checkpoint(train_out, model, c.spec.vocabulary);
      std::cout << "trained " << losses.size() << " iterations, checkpoint " << train_out << "\n";
    } else if (*sample) {
      const Corpus source = load_corpus(sample_flags.conditions);
      const Corpus out = generate(sample_flags, cfg, source);
      save_corpus(sample_out, out);
      std::cout << "wrote " << out.scenes.size() << " scenes to " << sample_out << "\n";
    } else if (*calibrate) {
      Corpus c = load_corpus(cal_corpus);
      CalibrationThresholds th = cfg.calibration;
      if (cal_sigma1) th.penetration = *cal_sigma1;
      if (cal_sigma2_sit_lie) th.iou_sit_lie = *cal_sigma2_sit_lie;
      if (cal_sigma2_touch) th.iou_touch = *cal_sigma2_touch;
      std::mt19937_64 rng(cal_seed.value_or(0));
      if (cal_displace) c = corrupt_corpus(c, *cal_displace, rng);
      std::vector<RecordReport> reports;
      for (std::size_t i = 0; i < c.scenes.size(); ++i) {
        CorpusScene& s = c.scenes[i];
        auto records = calibrate_records(s.scene, s.records(), th, static_cast<int>(i), &reports);
        if (cal_augment == "category") {
          records = category_augment(s.scene, records, rng, th).records;
        } else if (cal_augment == "orientation") {
          records = orientation_augment(s.scene, records, rng, cfg.orientation_noise, th).records;
        }
        s.condition.contacts = contacts_from_records(records, s.scene);
        s.condition.free_space = regenerate_free_space(s.condition.free_space, s.condition.contacts);
        s.condition.layout_points = layout_points_for(s.condition.floor, s.condition.free_space);
      }
      save_corpus(cal_out, c);
      const std::string report_path =
          cal_report.empty() ? (fs::path(cal_out) / "calibration_report.json").string() : cal_report;
      const auto report = calibration_report_json(reports);
      write_text_file(report_path, report.dump(2) + "\n");
      const CalibrationSummary sum = summarize(reports);
      char line[160];
      std::snprintf(line, sizeof line, "records %d succeeded %d (%.1f%%) E_pen %.2f -> %.2f\n", sum.records,
                    sum.succeeded, 100.0 * sum.success_rate(), sum.mean_penetration_before,
                    sum.mean_penetration_after);
      std::cout << line;
      if (sum.records > 0 && sum.succeeded == 0) return 4;
    } else if (*eval) {
      Corpus generated;
      if (!eval_generated.empty()) {
        generated = load_corpus(eval_generated);
      } else {
        if (eval_flags.checkpoint.empty() || eval_flags.conditions.empty()) {
          throw ConfigError("eval needs --generated, or --checkpoint together with --corpus");
        }
        generated = generate(eval_flags, cfg, load_corpus(eval_flags.conditions));
      }
      const std::string ref_dir = !eval_reference.empty() ? eval_reference : eval_flags.conditions;
      if (ref_dir.empty()) throw ConfigError("eval needs --reference when scoring --generated scenes");
      const Corpus reference = load_corpus(ref_dir);
      const MetricsReport r = score(generated, reference, cfg);
      if (!eval_out.empty()) write_text_file(eval_out, r.to_json());
      std::cout << r.to_table();
    } else if (*render) {
      Vocabulary vocab = Vocabulary::desk_scale();
      if (!render_vocab.empty()) {
        const auto j = read_json_file(render_vocab);
        if (j.contains("spec")) vocab = corpus_spec_from_json(j["spec"]).vocabulary;
        else vocab = checkpoint_vocabulary(render_vocab);
      }
      const SceneDocument doc = load_scene_file(render_scene, vocab);
      write_text_file(render_out, render_svg(doc.scene, doc.condition, vocab));
      std::cout << "wrote " << render_out << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e);
  }
  return 0;
}
