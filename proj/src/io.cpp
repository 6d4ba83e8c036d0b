#include "scenediff/io.hpp"

#include "scenediff/errors.hpp"
#include "scenediff/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace scenediff {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string join(const std::string& path, const std::string& key) { return path + "/" + key; }
std::string join(const std::string& path, std::size_t index) { return path + "/" + std::to_string(index); }

const json& member(const json& j, const std::string& key, const std::string& path) {
  if (!j.is_object()) throw ParseError(path.empty() ? "/" : path, "expected an object");
  auto it = j.find(key);
  if (it == j.end()) throw ParseError(join(path, key), "missing required key");
  return *it;
}

double number(const json& j, const std::string& path) {
  if (!j.is_number()) throw ParseError(path, "expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw ParseError(path, "expected a finite number");
  return v;
}

double number_at(const json& j, const std::string& key, const std::string& path) {
  return number(member(j, key, path), join(path, key));
}

std::string string_at(const json& j, const std::string& key, const std::string& path) {
  const json& v = member(j, key, path);
  if (!v.is_string()) throw ParseError(join(path, key), "expected a string");
  return v.get<std::string>();
}

bool bool_at(const json& j, const std::string& key, const std::string& path) {
  const json& v = member(j, key, path);
  if (!v.is_boolean()) throw ParseError(join(path, key), "expected a boolean");
  return v.get<bool>();
}

long long integer(const json& j, const std::string& path) {
  if (!j.is_number_integer()) throw ParseError(path, "expected an integer");
  return j.get<long long>();
}

Vec3 vec3_at(const json& j, const std::string& key, const std::string& path) {
  const json& v = member(j, key, path);
  const std::string p = join(path, key);
  if (!v.is_array() || v.size() != 3) throw ParseError(p, "expected an array of 3 numbers");
  return {number(v[0], join(p, 0)), number(v[1], join(p, 1)), number(v[2], join(p, 2))};
}

json vec3_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

// Optional typed overrides used by the config readers.
template <typename T>
void maybe(const json& j, const char* key, T& out) {
  auto it = j.find(key);
  if (it == j.end()) return;
  try {
    out = it->get<T>();
  } catch (const json::exception& e) {
    throw ParseError(std::string("/") + key, e.what());
  }
}

}  // namespace

// ---------------------------------------------------------------- masks

std::string base64_encode(const std::vector<std::uint8_t>& bytes) {
  static const char* kAlphabet = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  for (std::size_t i = 0; i < bytes.size(); i += 3) {
    const std::uint32_t b0 = bytes[i];
    const std::uint32_t b1 = i + 1 < bytes.size() ? bytes[i + 1] : 0;
    const std::uint32_t b2 = i + 2 < bytes.size() ? bytes[i + 2] : 0;
    const std::uint32_t v = (b0 << 16) | (b1 << 8) | b2;
    out.push_back(kAlphabet[(v >> 18) & 63]);
    out.push_back(kAlphabet[(v >> 12) & 63]);
    out.push_back(i + 1 < bytes.size() ? kAlphabet[(v >> 6) & 63] : '=');
    out.push_back(i + 2 < bytes.size() ? kAlphabet[v & 63] : '=');
  }
  return out;
}

std::vector<std::uint8_t> base64_decode(const std::string& text, const std::string& path) {
  auto value = [&](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
  };
  if (text.size() % 4 != 0) throw ParseError(path, "base64 length is not a multiple of 4");
  std::vector<std::uint8_t> out;
  out.reserve(text.size() / 4 * 3);
  for (std::size_t i = 0; i < text.size(); i += 4) {
    int v[4];
    int pad = 0;
    for (int k = 0; k < 4; ++k) {
      const char c = text[i + k];
      if (c == '=' && i + 4 == text.size() && k >= 2) {
        v[k] = 0;
        ++pad;
        continue;
      }
      if (pad) throw ParseError(path, "misplaced base64 padding");
      v[k] = value(c);
      if (v[k] < 0) throw ParseError(path, "invalid base64 character");
    }
    const std::uint32_t n = (v[0] << 18) | (v[1] << 12) | (v[2] << 6) | v[3];
    out.push_back(static_cast<std::uint8_t>(n >> 16));
    if (pad < 2) out.push_back(static_cast<std::uint8_t>((n >> 8) & 0xff));
    if (pad < 1) out.push_back(static_cast<std::uint8_t>(n & 0xff));
  }
  return out;
}

json mask_to_json(const GridMask& mask, MaskEncoding encoding) {
  json j;
  j["encoding"] = encoding == MaskEncoding::rle ? "rle" : "base64";
  j["resolution"] = mask.resolution();
  j["world_extent_m"] = mask.world_extent();
  const auto& d = mask.data();
  if (encoding == MaskEncoding::rle) {
    json runs = json::array();
    std::uint8_t current = 0;
    long long run = 0;
    for (std::uint8_t v : d) {
      if (v != current) {
        runs.push_back(run);
        current = v;
        run = 0;
      }
      ++run;
    }
    runs.push_back(run);
    j["data"] = runs;
  } else {
    std::vector<std::uint8_t> packed((d.size() + 7) / 8, 0);
    for (std::size_t i = 0; i < d.size(); ++i) {
      if (d[i]) packed[i / 8] |= static_cast<std::uint8_t>(0x80u >> (i % 8));
    }
    j["data"] = base64_encode(packed);
  }
  return j;
}

GridMask mask_from_json(const json& j, const std::string& path) {
  const std::string encoding = string_at(j, "encoding", path);
  const long long res = integer(member(j, "resolution", path), join(path, "resolution"));
  if (res <= 0 || res > 4096) throw ParseError(join(path, "resolution"), "resolution out of range");
  const double extent = number_at(j, "world_extent_m", path);
  if (!(extent > 0)) throw ParseError(join(path, "world_extent_m"), "extent must be positive");
  GridMask m(extent, static_cast<int>(res));
  auto& d = m.data();
  const json& data = member(j, "data", path);
  const std::string dp = join(path, "data");
  if (encoding == "rle") {
    if (!data.is_array()) throw ParseError(dp, "expected an array of run lengths");
    std::size_t pos = 0;
    std::uint8_t value = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
      const long long run = integer(data[i], join(dp, i));
      if (run < 0) throw ParseError(join(dp, i), "negative run length");
      if (pos + static_cast<std::size_t>(run) > d.size()) throw ParseError(join(dp, i), "runs exceed the mask size");
      std::fill(d.begin() + static_cast<std::ptrdiff_t>(pos), d.begin() + static_cast<std::ptrdiff_t>(pos + run), value);
      pos += static_cast<std::size_t>(run);
      value ^= 1;
    }
    if (pos != d.size()) throw ParseError(dp, "runs do not cover the mask");
  } else if (encoding == "base64") {
    if (!data.is_string()) throw ParseError(dp, "expected a base64 string");
    const auto bytes = base64_decode(data.get<std::string>(), dp);
    if (bytes.size() != (d.size() + 7) / 8) throw ParseError(dp, "decoded size does not match the resolution");
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = (bytes[i / 8] >> (7 - i % 8)) & 1;
  } else {
    throw ParseError(join(path, "encoding"), "unknown mask encoding '" + encoding + "'");
  }
  return m;
}

// ---------------------------------------------------------------- scenes

namespace {

json box_fields(const Box& b) {
  return {{"location", vec3_json(b.location)}, {"size", vec3_json(b.size)}, {"yaw_rad", b.yaw}};
}

Box box_from(const json& j, const std::string& path) {
  Box b;
  b.location = vec3_at(j, "location", path);
  b.size = vec3_at(j, "size", path);
  b.yaw = number_at(j, "yaw_rad", path);
  return b;
}

int category_at(const json& j, const Vocabulary& vocab, const std::string& path) {
  const std::string name = string_at(j, "category", path);
  const int c = vocab.index_of(name);
  if (c < 0 || c == vocab.empty_index()) throw ParseError(join(path, "category"), "unknown category '" + name + "'");
  return c;
}

}  // namespace

json scene_to_json(const SceneDocument& doc, const Vocabulary& vocab, MaskEncoding encoding) {
  const Scene& s = doc.scene;
  validate_scene(s);
  if (static_cast<int>(doc.condition.contacts.size()) != s.contact_count) {
    throw ContractError("scene contact count does not match the condition's contact boxes");
  }
  json j;
  j["version"] = kSceneSchemaVersion;
  j["room_type"] = std::string(to_string(s.room));
  j["capacity"] = s.capacity();
  json objects = json::array();
  for (int i = 0; i < s.capacity(); ++i) {
    if (s.is_empty(i)) continue;
    json o = box_fields(s.objects[i].box);
    o["category"] = vocab.name_of(s.objects[i].category);
    o["is_contact"] = i < s.contact_count;
    objects.push_back(o);
  }
  j["objects"] = objects;
  json contacts = json::array();
  for (const auto& c : doc.condition.contacts) {
    json o = box_fields(c.box);
    o["category"] = vocab.name_of(c.intended_category);
    o["mode"] = std::string(to_string(c.mode));
    contacts.push_back(o);
  }
  j["contacts"] = contacts;
  j["floor"] = mask_to_json(doc.condition.floor, encoding);
  j["free_space"] = mask_to_json(doc.condition.free_space, encoding);
  j["seed"] = doc.seed;
  return j;
}

SceneDocument scene_from_json(const json& j, const Vocabulary& vocab, int capacity) {
  if (!j.is_object()) throw ParseError("/", "scene document must be a JSON object");
  const json& version = member(j, "version", "");
  if (!version.is_number_integer()) throw ParseError("/version", "expected an integer");
  if (version.get<long long>() != kSceneSchemaVersion) {
    throw UnsupportedVersionError("unsupported scene schema version " + version.dump() + " (expected " +
                                  std::to_string(kSceneSchemaVersion) + ")");
  }
  SceneDocument doc;
  RoomType room;
  try {
    room = room_type_from_string(string_at(j, "room_type", ""));
  } catch (const ParseError&) {
    throw;
  } catch (const Error& e) {
    throw ParseError("/room_type", e.what());
  }
  if (capacity <= 0) {
    auto it = j.find("capacity");
    capacity = it != j.end() ? static_cast<int>(integer(*it, "/capacity")) : default_capacity(room);
  }

  const json& objs = member(j, "objects", "");
  if (!objs.is_array()) throw ParseError("/objects", "expected an array");
  std::vector<ObjectInstance> objects;
  std::vector<int> contact_objects;
  for (std::size_t i = 0; i < objs.size(); ++i) {
    const std::string p = join("/objects", i);
    ObjectInstance o;
    o.category = category_at(objs[i], vocab, p);
    o.box = box_from(objs[i], p);
    if (bool_at(objs[i], "is_contact", p)) contact_objects.push_back(static_cast<int>(objects.size()));
    objects.push_back(o);
  }

  const json& cons = member(j, "contacts", "");
  if (!cons.is_array()) throw ParseError("/contacts", "expected an array");
  for (std::size_t i = 0; i < cons.size(); ++i) {
    const std::string p = join("/contacts", i);
    ContactBox c;
    c.intended_category = category_at(cons[i], vocab, p);
    c.box = box_from(cons[i], p);
    try {
      c.mode = interaction_mode_from_string(string_at(cons[i], "mode", p));
    } catch (const ParseError&) {
      throw;
    } catch (const Error& e) {
      throw ParseError(join(p, "mode"), e.what());
    }
    validate_contact(c, vocab.size(), static_cast<int>(i));
    doc.condition.contacts.push_back(c);
  }
  if (contact_objects.size() != doc.condition.contacts.size()) {
    throw ParseError("/objects", "number of is_contact objects (" + std::to_string(contact_objects.size()) +
                                     ") differs from the number of contacts (" +
                                     std::to_string(doc.condition.contacts.size()) + ")");
  }
  doc.scene = pad_scene(objects, contact_objects, capacity, vocab.size(), room);
  validate_scene(doc.scene);

  doc.condition.floor = mask_from_json(member(j, "floor", ""), "/floor");
  doc.condition.free_space = mask_from_json(member(j, "free_space", ""), "/free_space");
  if (doc.condition.floor.resolution() != doc.condition.free_space.resolution() ||
      doc.condition.floor.world_extent() != doc.condition.free_space.world_extent()) {
    throw ParseError("/free_space", "floor and free-space masks cover different grids");
  }
  const json& seed = member(j, "seed", "");
  if (!seed.is_number_unsigned() && !seed.is_number_integer()) throw ParseError("/seed", "expected an integer");
  doc.seed = seed.get<std::uint64_t>();
  doc.condition.layout_points = layout_points_for(doc.condition.floor, doc.condition.free_space);
  return doc;
}

void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << text;
  out.close();
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json read_json_file(const fs::path& path) {
  const std::string text = read_text_file(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError("", path.string() + ": " + e.what());
  }
}

void save_scene_file(const fs::path& path, const SceneDocument& doc, const Vocabulary& vocab, MaskEncoding encoding) {
  write_text_file(path, scene_to_json(doc, vocab, encoding).dump(1) + "\n");
}

SceneDocument load_scene_file(const fs::path& path, const Vocabulary& vocab, int capacity) {
  return scene_from_json(read_json_file(path), vocab, capacity);
}

// ---------------------------------------------------------------- corpora

json corpus_spec_to_json(const CorpusSpec& spec) {
  return {{"room_type", std::string(to_string(spec.room))},
          {"scene_count", spec.scene_count},
          {"vocabulary", spec.vocabulary.names},
          {"world_extent_m", spec.world_extent},
          {"seed", spec.seed},
          {"trail_density", spec.trail_density},
          {"capacity", spec.resolved_capacity()},
          {"min_objects", spec.min_objects},
          {"max_objects", spec.max_objects},
          {"min_contacts", spec.min_contacts},
          {"max_contacts", spec.max_contacts},
          {"attempt_budget", spec.attempt_budget}};
}

CorpusSpec corpus_spec_from_json(const json& j, CorpusSpec base) {
  if (!j.is_object()) throw ParseError("/corpus", "expected an object");
  std::string room;
  maybe(j, "room_type", room);
  if (!room.empty()) base.room = room_type_from_string(room);
  maybe(j, "scene_count", base.scene_count);
  maybe(j, "vocabulary", base.vocabulary.names);
  maybe(j, "world_extent_m", base.world_extent);
  maybe(j, "seed", base.seed);
  maybe(j, "trail_density", base.trail_density);
  maybe(j, "capacity", base.capacity);
  maybe(j, "min_objects", base.min_objects);
  maybe(j, "max_objects", base.max_objects);
  maybe(j, "min_contacts", base.min_contacts);
  maybe(j, "max_contacts", base.max_contacts);
  maybe(j, "attempt_budget", base.attempt_budget);
  return base;
}

namespace {

std::string scene_file_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "scene_%05zu.json", i);
  return buf;
}

}  // namespace

void save_corpus(const fs::path& dir, const Corpus& corpus) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create corpus directory '" + dir.string() + "': " + ec.message());
  json files = json::array();
  for (std::size_t i = 0; i < corpus.scenes.size(); ++i) {
    const CorpusScene& s = corpus.scenes[i];
    save_scene_file(dir / scene_file_name(i), SceneDocument{s.scene, s.condition, s.seed}, corpus.spec.vocabulary);
    files.push_back(scene_file_name(i));
  }
  json manifest;
  manifest["version"] = kSceneSchemaVersion;
  manifest["spec"] = corpus_spec_to_json(corpus.spec);
  manifest["seed"] = corpus.spec.seed;
  manifest["scenes"] = files;
  write_text_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

Corpus load_corpus(const fs::path& dir) {
  const json manifest = read_json_file(dir / "manifest.json");
  const json& version = member(manifest, "version", "");
  if (!version.is_number_integer() || version.get<long long>() != kSceneSchemaVersion) {
    throw UnsupportedVersionError("unsupported corpus manifest version " + version.dump());
  }
  Corpus c;
  c.spec = corpus_spec_from_json(member(manifest, "spec", ""));
  const json& files = member(manifest, "scenes", "");
  if (!files.is_array()) throw ParseError("/scenes", "expected an array of file names");
  for (std::size_t i = 0; i < files.size(); ++i) {
    if (!files[i].is_string()) throw ParseError(join("/scenes", i), "expected a file name");
    SceneDocument d = load_scene_file(dir / files[i].get<std::string>(), c.spec.vocabulary, c.spec.resolved_capacity());
    c.scenes.push_back({std::move(d.scene), std::move(d.condition), d.seed});
  }
  return c;
}

std::vector<TrainingSample> training_samples(const Corpus& corpus) {
  std::vector<TrainingSample> out;
  out.reserve(corpus.scenes.size());
  for (const auto& s : corpus.scenes) out.push_back({s.scene, s.condition});
  return out;
}

// ---------------------------------------------------------------- checkpoints

namespace {

std::string floats_to_base64(const nn::Matrix& m) {
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(m.size()) * 4);
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    std::uint32_t u;
    std::memcpy(&u, m.data() + i, 4);
    for (int b = 0; b < 4; ++b) bytes[static_cast<std::size_t>(i) * 4 + b] = static_cast<std::uint8_t>(u >> (8 * b));
  }
  return base64_encode(bytes);
}

void base64_to_floats(const std::string& text, nn::Matrix& m, const std::string& path) {
  const auto bytes = base64_decode(text, path);
  if (bytes.size() != static_cast<std::size_t>(m.size()) * 4) throw ParseError(path, "parameter byte count mismatch");
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    std::uint32_t u = 0;
    for (int b = 0; b < 4; ++b) u |= static_cast<std::uint32_t>(bytes[static_cast<std::size_t>(i) * 4 + b]) << (8 * b);
    std::memcpy(m.data() + i, &u, 4);
  }
}

json config_json(const DenoiserConfig& c) {
  return {{"num_categories", c.num_categories}, {"hidden", c.hidden},           {"blocks", c.blocks},
          {"heads", c.heads},                   {"mlp_ratio", c.mlp_ratio},     {"point_hidden", c.point_hidden},
          {"point_features", c.point_features}, {"point_scale", c.point_scale}};
}

DenoiserConfig config_from(const json& j, DenoiserConfig c) {
  maybe(j, "num_categories", c.num_categories);
  maybe(j, "hidden", c.hidden);
  maybe(j, "blocks", c.blocks);
  maybe(j, "heads", c.heads);
  maybe(j, "mlp_ratio", c.mlp_ratio);
  maybe(j, "point_hidden", c.point_hidden);
  maybe(j, "point_features", c.point_features);
  maybe(j, "point_scale", c.point_scale);
  return c;
}

}  // namespace

json checkpoint_to_json(const SceneDiffusionModel& model, const Vocabulary& vocab) {
  json j;
  j["format"] = "scenediff-checkpoint";
  j["version"] = kCheckpointVersion;
  j["vocabulary"] = vocab.names;
  j["room_type"] = std::string(to_string(model.room()));
  j["capacity"] = model.capacity();
  j["config"] = config_json(model.config());
  const NormalizationStats& n = model.normalization();
  j["normalization"] = {{"location_min", vec3_json(n.location_min)},
                        {"location_max", vec3_json(n.location_max)},
                        {"size_min", vec3_json(n.size_min)},
                        {"size_max", vec3_json(n.size_max)}};
  json params = json::array();
  for (const auto& p : model.network().parameters().all()) {
    params.push_back({{"name", p.name}, {"rows", p.value.rows()}, {"cols", p.value.cols()}, {"data", floats_to_base64(p.value)}});
  }
  j["parameters"] = params;
  return j;
}

SceneDiffusionModel checkpoint_from_json(const json& j) {
  if (string_at(j, "format", "") != "scenediff-checkpoint") throw ParseError("/format", "not a checkpoint");
  const json& version = member(j, "version", "");
  if (!version.is_number_integer() || version.get<long long>() != kCheckpointVersion) {
    throw UnsupportedVersionError("unsupported checkpoint version " + version.dump());
  }
  const DenoiserConfig cfg = config_from(member(j, "config", ""), DenoiserConfig{});
  cfg.validate();
  const json& nj = member(j, "normalization", "");
  NormalizationStats norm;
  norm.location_min = vec3_at(nj, "location_min", "/normalization");
  norm.location_max = vec3_at(nj, "location_max", "/normalization");
  norm.size_min = vec3_at(nj, "size_min", "/normalization");
  norm.size_max = vec3_at(nj, "size_max", "/normalization");
  const RoomType room = room_type_from_string(string_at(j, "room_type", ""));
  const int capacity = static_cast<int>(integer(member(j, "capacity", ""), "/capacity"));
  SceneDiffusionModel model(cfg, norm, room, capacity, 0);

  auto& store = model.network().parameters().all();
  const json& params = member(j, "parameters", "");
  if (!params.is_array() || params.size() != store.size()) {
    throw ParseError("/parameters", "parameter list does not match the configured architecture");
  }
  for (std::size_t i = 0; i < store.size(); ++i) {
    const std::string p = join("/parameters", i);
    if (string_at(params[i], "name", p) != store[i].name) throw ParseError(join(p, "name"), "unexpected parameter name");
    if (integer(member(params[i], "rows", p), join(p, "rows")) != store[i].value.rows() ||
        integer(member(params[i], "cols", p), join(p, "cols")) != store[i].value.cols()) {
      throw ParseError(p, "parameter shape mismatch");
    }
    base64_to_floats(string_at(params[i], "data", p), store[i].value, join(p, "data"));
  }
  return model;
}

void save_checkpoint(const fs::path& path, const SceneDiffusionModel& model, const Vocabulary& vocab) {
  write_text_file(path, checkpoint_to_json(model, vocab).dump(1) + "\n");
}

SceneDiffusionModel load_checkpoint(const fs::path& path) { return checkpoint_from_json(read_json_file(path)); }

Vocabulary checkpoint_vocabulary(const fs::path& path) {
  const json j = read_json_file(path);
  Vocabulary v;
  maybe(j, "vocabulary", v.names);
  if (v.names.empty()) v = Vocabulary::desk_scale();
  return v;
}

// ---------------------------------------------------------------- catalog

std::vector<CatalogEntry> catalog_from_json(const json& j) {
  const json* list = &j;
  std::string base;
  if (j.is_object()) {
    list = &member(j, "entries", "");
    base = "/entries";
  }
  if (!list->is_array()) throw ParseError(base.empty() ? "/" : base, "expected an array of catalog entries");
  std::vector<CatalogEntry> out;
  for (std::size_t i = 0; i < list->size(); ++i) {
    const std::string p = join(base, i);
    CatalogEntry e;
    e.id = string_at((*list)[i], "id", p);
    e.category = string_at((*list)[i], "category", p);
    e.size = vec3_at((*list)[i], "size", p);
    if ((e.size.array() <= 0).any()) throw ParseError(join(p, "size"), "catalog sizes must be positive");
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<CatalogEntry> load_catalog(const fs::path& path) { return catalog_from_json(read_json_file(path)); }

std::string retrieve_model(const std::vector<CatalogEntry>& catalog, const std::string& category, const Vec3& size) {
  const CatalogEntry* best = nullptr;
  double best_d = 0.0;
  for (const auto& e : catalog) {
    if (e.category != category) continue;
    const double d = (e.size - size).norm();
    if (!best || d < best_d || (d == best_d && e.id < best->id)) {
      best = &e;
      best_d = d;
    }
  }
  if (!best) throw RetrievalError("catalog has no entry of category '" + category + "'");
  return best->id;
}

// ---------------------------------------------------------------- rendering

namespace {

constexpr double kPixelsPerMeter = 100.0;

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  std::string s = buf;
  if (s == "-0.000") s = "0.000";
  return s;
}

// Union of set pixels as one path of per-row runs.
std::string mask_path(const GridMask& m) {
  std::ostringstream os;
  const double px = m.pixel_size() * kPixelsPerMeter;
  for (int r = 0; r < m.resolution(); ++r) {
    int c = 0;
    while (c < m.resolution()) {
      if (!m.at(r, c)) {
        ++c;
        continue;
      }
      const int start = c;
      while (c < m.resolution() && m.at(r, c)) ++c;
      os << "M" << fmt(start * px) << " " << fmt(r * px) << "h" << fmt((c - start) * px) << "v" << fmt(px) << "h"
         << fmt(-(c - start) * px) << "z";
    }
  }
  return os.str();
}

std::string polygon_points(const Box& b, double extent) {
  std::string s;
  for (const Vec2& c : footprint(b)) {
    if (!s.empty()) s += " ";
    s += fmt((c.x() + extent / 2) * kPixelsPerMeter) + "," + fmt((c.y() + extent / 2) * kPixelsPerMeter);
  }
  return s;
}

const char* category_color(int c) {
  static const char* kPalette[] = {"#e6194b", "#3cb44b", "#4363d8", "#f58231", "#911eb4", "#42d4f4",
                                   "#f032e6", "#9a6324", "#469990", "#808000", "#000075", "#aaffc3"};
  return kPalette[c % 12];
}

}  // namespace

std::string render_svg(const Scene& scene, const ConditionSet& cond, const Vocabulary& vocab) {
  const double extent = cond.floor.world_extent();
  const std::string size = fmt(extent * kPixelsPerMeter);
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size << "\" height=\"" << size << "\" viewBox=\"0 0 "
     << size << " " << size << "\">\n";
  os << "<defs><pattern id=\"hatch\" width=\"8\" height=\"8\" patternUnits=\"userSpaceOnUse\" "
        "patternTransform=\"rotate(45)\"><line x1=\"0\" y1=\"0\" x2=\"0\" y2=\"8\" stroke=\"#4a90d9\" "
        "stroke-width=\"2\"/></pattern></defs>\n";
  os << "<rect x=\"0\" y=\"0\" width=\"" << size << "\" height=\"" << size << "\" fill=\"#ffffff\"/>\n";
  os << "<path id=\"floor\" d=\"" << mask_path(cond.floor) << "\" fill=\"#e8e2d6\"/>\n";
  os << "<path id=\"free_space\" d=\"" << mask_path(cond.free_space) << "\" fill=\"url(#hatch)\"/>\n";
  os << "<g id=\"objects\">\n";
  for (int i = 0; i < scene.capacity(); ++i) {
    if (scene.is_empty(i)) continue;
    const Box& b = scene.objects[i].box;
    const int c = scene.objects[i].category;
    os << "<polygon data-category=\"" << vocab.name_of(c) << "\" points=\"" << polygon_points(b, extent) << "\" fill=\""
       << category_color(c) << "\" fill-opacity=\"0.6\" stroke=\"#222222\" stroke-width=\"1\"/>\n";
    // Heading tick from the center to the middle of the front (+z local) edge.
    const double reach = b.size.z() / 2;
    const double fx = b.location.x() - std::sin(b.yaw) * reach, fz = b.location.z() + std::cos(b.yaw) * reach;
    os << "<line x1=\"" << fmt((b.location.x() + extent / 2) * kPixelsPerMeter) << "\" y1=\""
       << fmt((b.location.z() + extent / 2) * kPixelsPerMeter) << "\" x2=\"" << fmt((fx + extent / 2) * kPixelsPerMeter)
       << "\" y2=\"" << fmt((fz + extent / 2) * kPixelsPerMeter) << "\" stroke=\"#222222\" stroke-width=\"2\"/>\n";
  }
  os << "</g>\n<g id=\"contacts\">\n";
  for (const auto& c : cond.contacts) {
    os << "<polygon data-mode=\"" << to_string(c.mode) << "\" points=\"" << polygon_points(c.box, extent)
       << "\" fill=\"none\" stroke=\"#d62728\" stroke-width=\"2\" stroke-dasharray=\"6 4\"/>\n";
  }
  os << "</g>\n</svg>\n";
  return os.str();
}

// ---------------------------------------------------------------- configs

RunConfig run_config_from_json(const json& j, RunConfig base) {
  if (!j.is_object()) throw ParseError("/", "config must be a JSON object");
  if (auto it = j.find("corpus"); it != j.end()) base.corpus = corpus_spec_from_json(*it, base.corpus);
  if (auto it = j.find("model"); it != j.end()) base.model = config_from(*it, base.model);
  if (auto it = j.find("training"); it != j.end()) {
    TrainingConfig& t = base.training;
    maybe(*it, "learning_rate", t.learning_rate);
    std::string sched;
    maybe(*it, "lr_schedule", sched);
    if (sched == "cosine") t.lr_schedule = LrSchedule::cosine;
    else if (sched == "constant") t.lr_schedule = LrSchedule::constant;
    else if (!sched.empty()) throw ParseError("/training/lr_schedule", "expected 'constant' or 'cosine'");
    maybe(*it, "batch_size", t.batch_size);
    maybe(*it, "iterations", t.iterations);
    maybe(*it, "rotation_augmentation", t.rotation_augmentation);
    maybe(*it, "condition_dropout", t.condition_dropout);
    maybe(*it, "seed", t.seed);
  }
  if (auto it = j.find("guidance"); it != j.end()) {
    GuidanceConfig& g = base.guidance;
    maybe(*it, "gamma", g.gamma);
    maybe(*it, "weight_motion", g.weight_motion);
    maybe(*it, "weight_boundary", g.weight_boundary);
    maybe(*it, "weight_object", g.weight_object);
    maybe(*it, "motion", g.motion);
    maybe(*it, "boundary", g.boundary);
    maybe(*it, "object", g.object);
    maybe(*it, "temperature", g.temperature);
    std::string mode;
    maybe(*it, "gradient", mode);
    if (mode == "analytic") g.gradient = GradientMode::analytic;
    else if (mode == "finite_difference") g.gradient = GradientMode::finite_difference;
    else if (!mode.empty()) throw ParseError("/guidance/gradient", "expected 'analytic' or 'finite_difference'");
    maybe(*it, "fd_step", g.fd_step);
    maybe(*it, "guide_location", g.guide_location);
    maybe(*it, "guide_yaw", g.guide_yaw);
    maybe(*it, "guide_size", g.guide_size);
    maybe(*it, "clip", g.clip);
  }
  if (auto it = j.find("sampling"); it != j.end()) maybe(*it, "steps", base.sampling_steps);
  if (auto it = j.find("calibration"); it != j.end()) {
    maybe(*it, "sigma1", base.calibration.penetration);
    maybe(*it, "sigma2_sit_lie", base.calibration.iou_sit_lie);
    maybe(*it, "sigma2_touch", base.calibration.iou_touch);
    double deg = base.orientation_noise * 180.0 / kPi;
    maybe(*it, "orientation_noise_deg", deg);
    base.orientation_noise = deg * kPi / 180.0;
  }
  if (auto it = j.find("eval"); it != j.end()) {
    maybe(*it, "tau_c", base.eval.tau_c);
    maybe(*it, "category_constrained", base.eval.category_constrained);
  }
  base.model.num_categories = base.corpus.vocabulary.size();
  return base;
}

json run_config_to_json(const RunConfig& c) {
  json j;
  j["corpus"] = corpus_spec_to_json(c.corpus);
  j["model"] = config_json(c.model);
  j["training"] = {{"learning_rate", c.training.learning_rate},
                   {"lr_schedule", c.training.lr_schedule == LrSchedule::cosine ? "cosine" : "constant"},
                   {"batch_size", c.training.batch_size},
                   {"iterations", c.training.iterations},
                   {"rotation_augmentation", c.training.rotation_augmentation},
                   {"condition_dropout", c.training.condition_dropout},
                   {"seed", c.training.seed}};
  const GuidanceConfig& g = c.guidance;
  j["guidance"] = {{"gamma", g.gamma},
                   {"weight_motion", g.weight_motion},
                   {"weight_boundary", g.weight_boundary},
                   {"weight_object", g.weight_object},
                   {"motion", g.motion},
                   {"boundary", g.boundary},
                   {"object", g.object},
                   {"temperature", g.temperature},
                   {"gradient", g.gradient == GradientMode::analytic ? "analytic" : "finite_difference"},
                   {"fd_step", g.fd_step},
                   {"guide_location", g.guide_location},
                   {"guide_yaw", g.guide_yaw},
                   {"guide_size", g.guide_size},
                   {"clip", g.clip}};
  j["sampling"] = {{"steps", c.sampling_steps}};
  j["calibration"] = {{"sigma1", c.calibration.penetration},
                      {"sigma2_sit_lie", c.calibration.iou_sit_lie},
                      {"sigma2_touch", c.calibration.iou_touch},
                      {"orientation_noise_deg", c.orientation_noise * 180.0 / kPi}};
  j["eval"] = {{"tau_c", c.eval.tau_c}, {"category_constrained", c.eval.category_constrained}};
  return j;
}

json calibration_report_json(const std::vector<RecordReport>& reports) {
  const CalibrationSummary s = summarize(reports);
  json j;
  j["summary"] = {{"records", s.records},
                  {"succeeded", s.succeeded},
                  {"success_rate", s.success_rate()},
                  {"mean_penetration_before", s.mean_penetration_before},
                  {"mean_penetration_after", s.mean_penetration_after},
                  {"mean_iou_before_sit_lie", s.mean_iou_before_sit_lie},
                  {"mean_iou_after_sit_lie", s.mean_iou_after_sit_lie},
                  {"mean_iou_before_touch", s.mean_iou_before_touch},
                  {"mean_iou_after_touch", s.mean_iou_after_touch}};
  json recs = json::array();
  for (const auto& r : reports) {
    json e = {{"scene", r.scene},
              {"record", r.record},
              {"mode", std::string(to_string(r.mode))},
              {"penetration_before", r.penetration_before},
              {"iou_before", r.iou_before},
              {"penetration_after", r.penetration_after},
              {"iou_after", r.iou_after},
              {"displacement", r.displacement},
              {"success", r.success}};
    if (!r.error.empty()) e["error"] = r.error;
    recs.push_back(e);
  }
  j["records"] = recs;
  return j;
}

}  // namespace scenediff
