#include <fstream>

#include "hardmine/binio.hpp"
#include "hardmine/errors.hpp"
#include "hardmine/synthdata.hpp"

namespace hardmine {

namespace binio {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path + ": cannot open file");
  std::string data((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  if (in.bad()) throw ParseError(path + ": read failed");
  return data;
}

void write_file(const std::string& path, const std::string& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error(path + ": cannot open for writing");
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  out.flush();
  if (!out) throw std::runtime_error(path + ": write failed");
}

}  // namespace binio

namespace {

constexpr char kMagic[4] = {'S', 'Y', 'D', '1'};
constexpr char kTrailer[4] = {'S', 'Y', 'D', 'E'};
constexpr uint32_t kVersion = 1;
constexpr const char* kRngName = "splitmix64";

}  // namespace

void write_dataset(const Dataset& ds, const std::string& path) {
  std::string out;
  out.append(kMagic, 4);
  binio::put_u32(out, kVersion);
  binio::put_u16(out, static_cast<uint16_t>(std::string(kRngName).size()));
  out.append(kRngName);

  const DatasetConfig& c = ds.config;
  binio::put_u64(out, c.seed);
  binio::put_u32(out, c.num_scenes);
  binio::put_u32(out, c.test_scenes);
  binio::put_u32(out, c.num_classes);
  binio::put_u32(out, c.feature_dim);
  binio::put_u32(out, c.proposals_per_scene);
  binio::put_u32(out, c.objects_min);
  binio::put_u32(out, c.objects_max);
  binio::put_f64(out, c.distractor_rate);
  binio::put_f64(out, c.jitter_scale);
  binio::put_f64(out, c.noise_sigma);
  binio::put_f64(out, c.scene_width);
  binio::put_f64(out, c.scene_height);
  binio::put_f64(out, c.obj_size_min);
  binio::put_f64(out, c.obj_size_max);

  binio::put_u64(out, ds.first_scene_id);
  binio::put_u32(out, static_cast<uint32_t>(ds.scenes.size()));

  for (const Scene& s : ds.scenes) {
    binio::put_u64(out, s.scene_id);
    binio::put_f32(out, static_cast<float>(s.width));
    binio::put_f32(out, static_cast<float>(s.height));
    binio::put_u32(out, static_cast<uint32_t>(s.objects.size()));
    for (const GtObject& o : s.objects) {
      binio::put_u32(out, static_cast<uint32_t>(o.class_id));
      binio::put_f32(out, static_cast<float>(o.box.x1));
      binio::put_f32(out, static_cast<float>(o.box.y1));
      binio::put_f32(out, static_cast<float>(o.box.x2));
      binio::put_f32(out, static_cast<float>(o.box.y2));
      binio::put_f32(out, static_cast<float>(o.hardness));
    }
    binio::put_u32(out, static_cast<uint32_t>(s.proposals.size()));
    for (const BBox& b : s.proposals) {
      binio::put_f32(out, static_cast<float>(b.x1));
      binio::put_f32(out, static_cast<float>(b.y1));
      binio::put_f32(out, static_cast<float>(b.x2));
      binio::put_f32(out, static_cast<float>(b.y2));
    }
    for (float f : s.features) binio::put_f32(out, f);
  }

  out.append(kTrailer, 4);
  binio::write_file(path, out);
}

Dataset read_dataset(const std::string& path) {
  binio::Reader r(binio::read_file(path), path);

  if (r.bytes(4) != std::string(kMagic, 4))
    r.fail("bad magic, not a dataset file");
  const uint32_t version = r.u32();
  if (version != kVersion)
    throw VersionError(path + ": unsupported dataset format version " +
                       std::to_string(version) + " (expected " +
                       std::to_string(kVersion) + ")");
  const uint16_t rng_len = r.u16();
  const std::string rng_name = r.bytes(rng_len);
  if (rng_name != kRngName)
    r.fail("unknown rng '" + rng_name + "'");

  Dataset ds;
  DatasetConfig& c = ds.config;
  c.seed = r.u64();
  c.num_scenes = r.u32();
  c.test_scenes = r.u32();
  c.num_classes = r.u32();
  c.feature_dim = r.u32();
  c.proposals_per_scene = r.u32();
  c.objects_min = r.u32();
  c.objects_max = r.u32();
  c.distractor_rate = r.f64();
  c.jitter_scale = r.f64();
  c.noise_sigma = r.f64();
  c.scene_width = r.f64();
  c.scene_height = r.f64();
  c.obj_size_min = r.f64();
  c.obj_size_max = r.f64();

  ds.first_scene_id = r.u64();
  const uint32_t scene_count = r.u32();

  ds.scenes.reserve(scene_count);
  for (uint32_t i = 0; i < scene_count; ++i) {
    r.set_context("scene record " + std::to_string(i));
    Scene s;
    s.scene_id = r.u64();
    s.width = r.f32();
    s.height = r.f32();
    const uint32_t n_obj = r.u32();
    s.objects.reserve(n_obj);
    for (uint32_t j = 0; j < n_obj; ++j) {
      GtObject o;
      o.class_id = static_cast<int>(r.u32());
      o.box = BBox{r.f32(), r.f32(), r.f32(), r.f32()};
      o.hardness = r.f32();
      s.objects.push_back(o);
    }
    const uint32_t n_prop = r.u32();
    s.proposals.reserve(n_prop);
    for (uint32_t j = 0; j < n_prop; ++j)
      s.proposals.push_back(BBox{r.f32(), r.f32(), r.f32(), r.f32()});
    s.features.resize(static_cast<size_t>(n_prop) * c.feature_dim);
    for (float& f : s.features) f = r.f32();
    ds.scenes.push_back(std::move(s));
  }

  r.set_context("trailer");
  if (r.bytes(4) != std::string(kTrailer, 4)) r.fail("bad trailer magic");
  r.expect_done();
  return ds;
}

}  // namespace hardmine
