#include "scenediff/errors.hpp"
#include "scenediff/io.hpp"

#include "support.hpp"

#include <cstring>
#include <fstream>
#include <limits>

using namespace scenediff;
using testing::data_path;
using testing::make_box;
using testing::scratch_dir;

namespace {

SceneDocument sample_document() {
  CorpusSpec spec;
  spec.scene_count = 1;
  const CorpusScene cs = generate_scene(spec, 17);
  return {cs.scene, cs.condition, cs.seed};
}

DenoiserConfig tiny() {
  DenoiserConfig c;
  c.hidden = 16;
  c.blocks = 1;
  c.heads = 2;
  c.mlp_ratio = 2;
  c.point_hidden = 8;
  c.point_features = 8;
  return c;
}

}  // namespace

TEST_CASE("base64 round trips and rejects malformed text") {
  std::mt19937_64 rng(1);
  for (std::size_t n : {0, 1, 2, 3, 4, 5, 100}) {
    std::vector<std::uint8_t> bytes(n);
    for (auto& b : bytes) b = static_cast<std::uint8_t>(rng());
    CHECK(base64_decode(base64_encode(bytes)) == bytes);
  }
  CHECK(base64_encode({'M', 'a', 'n'}) == "TWFu");
  CHECK(base64_encode({'M', 'a'}) == "TWE=");
  CHECK_THROWS_AS(base64_decode("TW!u"), ParseError);
  CHECK_THROWS_AS(base64_decode("TWF"), ParseError);
}

TEST_CASE("masks round trip through RLE and base64") {
  const SceneDocument doc = sample_document();
  for (const GridMask& m : {doc.condition.floor, doc.condition.free_space, GridMask()}) {
    const auto rle = mask_to_json(m, MaskEncoding::rle);
    const auto b64 = mask_to_json(m, MaskEncoding::base64);
    CHECK(rle["encoding"] == "rle");
    CHECK(b64["encoding"] == "base64");
    CHECK(mask_from_json(rle, "/m") == m);
    CHECK(mask_from_json(b64, "/m") == m);
    long long total = 0;
    for (const auto& run : rle["data"]) total += run.get<long long>();
    CHECK(total == 256LL * 256);
  }
  // Explicit oracle: a single pixel at (0, 1) is the run list [1, 1, rest].
  GridMask one;
  one.set(0, 1, 1);
  CHECK(mask_to_json(one)["data"] == nlohmann::json({1, 1, 256 * 256 - 2}));
  // MSB first: byte 0 holds pixels 0..7, so pixel 1 is 0x40.
  const auto bytes = base64_decode(mask_to_json(one, MaskEncoding::base64)["data"].get<std::string>());
  CHECK(bytes.at(0) == 0x40);
  auto bad = mask_to_json(one);
  bad["data"] = nlohmann::json({1, 1});
  CHECK_THROWS_AS(mask_from_json(bad, "/floor"), ParseError);
}

TEST_CASE("golden minimal scene loads with the expected structure") {
  const Vocabulary vocab = Vocabulary::desk_scale();
  const SceneDocument doc = load_scene_file(data_path("minimal_scene.json"), vocab);
  CHECK(doc.scene.capacity() == 12);
  CHECK(doc.scene.occupied_count() == 1);
  CHECK(doc.scene.contact_count == 0);
  CHECK(doc.scene.objects[0].category == vocab.index_of("bed"));
  CHECK(doc.scene.objects[0].box.location == Vec3(0.0, 0.3, 0.5));
  CHECK(doc.scene.objects[0].box.size == Vec3(1.6, 0.6, 2.0));
  CHECK(doc.condition.contacts.empty());
  CHECK(doc.condition.floor.count() == 128 * 128);
  CHECK(doc.condition.free_space.count() == 40);
  CHECK(doc.condition.free_space.at(128, 100) == 1);
  CHECK(doc.condition.free_space.at(128, 140) == 0);
  CHECK(doc.condition.layout_points.rows() == kLayoutPointCount);
  for (int i = 1; i < 12; ++i) CHECK(doc.scene.is_empty(i));
}

TEST_CASE("scene files round trip exactly") {
  const Vocabulary vocab = Vocabulary::desk_scale();
  const SceneDocument doc = sample_document();
  const auto dir = scratch_dir("io_scene");
  for (MaskEncoding enc : {MaskEncoding::rle, MaskEncoding::base64}) {
    save_scene_file(dir / "s.json", doc, vocab, enc);
    const SceneDocument back = load_scene_file(dir / "s.json", vocab);
    CHECK(back.scene == doc.scene);
    CHECK(back.condition == doc.condition);
    CHECK(back.seed == doc.seed);
    CHECK(scene_to_json(back, vocab, enc) == scene_to_json(doc, vocab, enc));
  }
}

TEST_CASE("malformed scene files raise parse errors with paths") {
  const Vocabulary vocab = Vocabulary::desk_scale();
  const auto dir = scratch_dir("io_bad");
  const std::string text = read_text_file(data_path("minimal_scene.json"));
  write_text_file(dir / "truncated.json", text.substr(0, text.size() / 2));
  CHECK_THROWS_AS(load_scene_file(dir / "truncated.json", vocab), ParseError);

  const nlohmann::json good = read_json_file(data_path("minimal_scene.json"));
  nlohmann::json j = good;
  j["version"] = 2;
  CHECK_THROWS_AS(scene_from_json(j, vocab), UnsupportedVersionError);

  j = good;
  j["objects"][0]["category"] = "piano";
  try {
    scene_from_json(j, vocab);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.path() == "/objects/0/category");
  }
  j = good;
  j["objects"][0]["size"] = {1.0, -1.0, 1.0};
  CHECK_THROWS_AS(scene_from_json(j, vocab), Error);
  j = good;
  j.erase("floor");
  try {
    scene_from_json(j, vocab);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.path() == "/floor");
  }
  CHECK_THROWS_AS(load_scene_file(dir / "missing.json", vocab), IoError);
}

TEST_CASE("corpus directories round trip") {
  CorpusSpec spec;
  spec.scene_count = 3;
  spec.seed = 5;
  const Corpus c = generate_corpus(spec);
  const auto dir = scratch_dir("io_corpus");
  save_corpus(dir, c);
  CHECK(std::filesystem::exists(dir / "manifest.json"));
  const Corpus back = load_corpus(dir);
  REQUIRE(back.scenes.size() == 3);
  CHECK(back.spec.seed == 5);
  for (int i = 0; i < 3; ++i) {
    CHECK(back.scenes[i].scene == c.scenes[i].scene);
    CHECK(back.scenes[i].condition == c.scenes[i].condition);
  }
  CHECK(training_samples(back).size() == 3);
  const CorpusSpec again = corpus_spec_from_json(corpus_spec_to_json(spec));
  CHECK(again.seed == spec.seed);
  CHECK(again.scene_count == spec.scene_count);
  CHECK(again.vocabulary.names == spec.vocabulary.names);
}

TEST_CASE("checkpoints reproduce parameters bit for bit") {
  CorpusSpec spec;
  spec.scene_count = 2;
  const Corpus c = generate_corpus(spec);
  std::vector<Scene> scenes = {c.scenes[0].scene, c.scenes[1].scene};
  SceneDiffusionModel model(tiny(), NormalizationStats::from_scenes(scenes, true), RoomType::bedroom, 12, 4);
  std::mt19937_64 rng(2);
  std::normal_distribution<float> n(0.0f, 0.3f);
  for (auto& p : model.network().parameters().all()) {
    for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] = n(rng);
  }
  // Values that text formats tend to lose.
  auto& first = model.network().parameters().all().front().value;
  first.data()[0] = std::numeric_limits<float>::denorm_min();
  first.data()[1] = -0.0f;
  first.data()[2] = 0.1f;

  const auto dir = scratch_dir("io_ckpt");
  save_checkpoint(dir / "m.json", model, spec.vocabulary);
  const SceneDiffusionModel back = load_checkpoint(dir / "m.json");
  const auto& pa = model.network().parameters().all();
  const auto& pb = back.network().parameters().all();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    CHECK(pa[i].name == pb[i].name);
    REQUIRE(pa[i].value.size() == pb[i].value.size());
    CHECK(std::memcmp(pa[i].value.data(), pb[i].value.data(), sizeof(float) * pa[i].value.size()) == 0);
  }
  CHECK(back.normalization() == model.normalization());
  CHECK(back.capacity() == 12);
  CHECK(back.room() == RoomType::bedroom);
  CHECK(checkpoint_vocabulary(dir / "m.json").names == spec.vocabulary.names);
  // Identical parameters give identical predictions.
  std::mt19937_64 r2(3);
  const SceneTensor x = standard_normal(12, model.row_width(), r2);
  CHECK(model.predict_noise(x, 50, c.scenes[0].condition) == back.predict_noise(x, 50, c.scenes[0].condition));
  // Saving the loaded model reproduces the file.
  save_checkpoint(dir / "m2.json", back, spec.vocabulary);
  CHECK(read_text_file(dir / "m.json") == read_text_file(dir / "m2.json"));

  nlohmann::json j = read_json_file(dir / "m.json");
  j["version"] = 99;
  CHECK_THROWS_AS(checkpoint_from_json(j), UnsupportedVersionError);
}

TEST_CASE("catalog retrieval matches a brute-force nearest neighbour") {
  const auto catalog = load_catalog(data_path("catalog.json"));
  REQUIRE(catalog.size() == 3);
  CHECK(retrieve_model(catalog, "bed", Vec3(1.45, 0.5, 1.9)) == "bed_small");
  CHECK(retrieve_model(catalog, "bed", Vec3(1.9, 0.6, 2.2)) == "bed_large");
  CHECK(retrieve_model(catalog, "chair", Vec3(3, 3, 3)) == "chair_a");
  CHECK_THROWS_AS(retrieve_model(catalog, "sofa", Vec3::Ones()), RetrievalError);

  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.2, 2.5);
  for (int i = 0; i < 200; ++i) {
    const Vec3 size(u(rng), u(rng), u(rng));
    std::string best;
    double best_d = 1e300;
    for (const auto& e : catalog) {
      if (e.category != "bed") continue;
      const double d = (e.size - size).norm();
      if (d < best_d || (d == best_d && e.id < best)) {
        best_d = d;
        best = e.id;
      }
    }
    CHECK(retrieve_model(catalog, "bed", size) == best);
  }
  // Ties go to the smaller id.
  std::vector<CatalogEntry> tie = {{"b", "lamp", Vec3(1, 1, 1)}, {"a", "lamp", Vec3(3, 1, 1)}};
  CHECK(retrieve_model(tie, "lamp", Vec3(2, 1, 1)) == "a");
  // A bare array is accepted too.
  CHECK(catalog_from_json(nlohmann::json::parse(R"([{"id":"x","category":"bed","size":[1,1,1]}])")).size() == 1);
}

TEST_CASE("rendering the golden scene matches the stored SVG") {
  const Vocabulary vocab = Vocabulary::desk_scale();
  const SceneDocument doc = load_scene_file(data_path("minimal_scene.json"), vocab);
  const std::string svg = render_svg(doc.scene, doc.condition, vocab);
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(svg.find("width=\"620.000\"") != std::string::npos);
  CHECK(svg == read_text_file(data_path("minimal_scene.svg")));
}

TEST_CASE("run config reads partial files over defaults") {
  const auto j = nlohmann::json::parse(R"({"training": {"iterations": 7}, "guidance": {"gamma": 0.5}})");
  const RunConfig c = run_config_from_json(j);
  CHECK(c.training.iterations == 7);
  CHECK(c.training.learning_rate == desk_training_config().learning_rate);
  CHECK(c.guidance.gamma == 0.5);
  const RunConfig again = run_config_from_json(run_config_to_json(c));
  CHECK(run_config_to_json(again) == run_config_to_json(c));
  CHECK_THROWS_AS(run_config_from_json(nlohmann::json::parse(R"({"training": {"iterations": "many"}})")), ParseError);
}
