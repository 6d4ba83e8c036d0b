#pragma once

#include "scenediff/calibration.hpp"
#include "scenediff/diffusion.hpp"
#include "scenediff/evalsuite.hpp"
#include "scenediff/guidance.hpp"
#include "scenediff/scene_model.hpp"
#include "scenediff/synthdata.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace scenediff {

constexpr int kSceneSchemaVersion = 1;
constexpr int kCheckpointVersion = 1;

enum class MaskEncoding { rle, base64 };

// Masks as JSON: {"encoding", "resolution", "world_extent_m", "data"}. RLE
// data is an array of run lengths over the row-major pixels, starting with a
// run of zeros; base64 data packs 8 pixels per byte, most significant bit
// first.
nlohmann::json mask_to_json(const GridMask& mask, MaskEncoding encoding = MaskEncoding::rle);
GridMask mask_from_json(const nlohmann::json& j, const std::string& path);

std::string base64_encode(const std::vector<std::uint8_t>& bytes);
// Throws ParseError on malformed input.
std::vector<std::uint8_t> base64_decode(const std::string& text, const std::string& path = "");

// A scene file: structure, conditions and the generating seed. Layout points
// are not stored; they are recomputed from the masks on load.
struct SceneDocument {
  Scene scene;
  ConditionSet condition;
  std::uint64_t seed = 0;

  std::vector<InteractionRecord> records() const { return records_from_contacts(condition.contacts); }
};

nlohmann::json scene_to_json(const SceneDocument& doc, const Vocabulary& vocab,
                             MaskEncoding encoding = MaskEncoding::rle);
// Throws ParseError (with a JSON path) on schema violations and
// UnsupportedVersionError on a version mismatch. `capacity` 0 uses the
// document's "capacity" key or the room default.
SceneDocument scene_from_json(const nlohmann::json& j, const Vocabulary& vocab, int capacity = 0);

void save_scene_file(const std::filesystem::path& path, const SceneDocument& doc, const Vocabulary& vocab,
                     MaskEncoding encoding = MaskEncoding::rle);
SceneDocument load_scene_file(const std::filesystem::path& path, const Vocabulary& vocab, int capacity = 0);

nlohmann::json corpus_spec_to_json(const CorpusSpec& spec);
CorpusSpec corpus_spec_from_json(const nlohmann::json& j, CorpusSpec base = {});

// Directory with manifest.json (spec, seed, file list) and one scene file per
// scene. Writes to an existing or new directory.
void save_corpus(const std::filesystem::path& dir, const Corpus& corpus);
Corpus load_corpus(const std::filesystem::path& dir);

std::vector<TrainingSample> training_samples(const Corpus& corpus);

// Config, normalization stats and every parameter (float32, little-endian,
// base64). Loading reproduces the parameters bit for bit.
nlohmann::json checkpoint_to_json(const SceneDiffusionModel& model, const Vocabulary& vocab);
SceneDiffusionModel checkpoint_from_json(const nlohmann::json& j);
void save_checkpoint(const std::filesystem::path& path, const SceneDiffusionModel& model, const Vocabulary& vocab);
SceneDiffusionModel load_checkpoint(const std::filesystem::path& path);
Vocabulary checkpoint_vocabulary(const std::filesystem::path& path);

struct CatalogEntry {
  std::string id;
  std::string category;
  Vec3 size = Vec3::Ones();
};

std::vector<CatalogEntry> load_catalog(const std::filesystem::path& path);
std::vector<CatalogEntry> catalog_from_json(const nlohmann::json& j);
// Same-category entry nearest in size (L2); ties go to the smaller id.
// Throws RetrievalError when the category is absent.
std::string retrieve_model(const std::vector<CatalogEntry>& catalog, const std::string& category, const Vec3& size);

// Top-down SVG: floor, hatched free space, dashed contact boxes, objects
// colored by category with a heading tick. World (x, z) maps to
// ((x + E/2) * 100, (z + E/2) * 100) pixels.
std::string render_svg(const Scene& scene, const ConditionSet& cond, const Vocabulary& vocab);
void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);
nlohmann::json read_json_file(const std::filesystem::path& path);

// Settings read from the --config file. Every section and key is optional.
struct RunConfig {
  CorpusSpec corpus;
  DenoiserConfig model;
  TrainingConfig training = desk_training_config();
  GuidanceConfig guidance;
  int sampling_steps = 0;
  CalibrationThresholds calibration;
  double orientation_noise = kPi / 6;
  EvalOptions eval;
};

RunConfig run_config_from_json(const nlohmann::json& j, RunConfig base = {});
nlohmann::json run_config_to_json(const RunConfig& c);

nlohmann::json calibration_report_json(const std::vector<RecordReport>& reports);

}  // namespace scenediff
