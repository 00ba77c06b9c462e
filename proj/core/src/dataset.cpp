#include "biseg/dataset.hpp"

#include <algorithm>
#include <cmath>

#include "biseg/config.hpp"
#include "json_fields.hpp"

namespace biseg {

namespace fs = std::filesystem;
using detail::json;

Tensor image_from_raster(const Raster& r) {
  if (r.channels != 3) throw DataError("image: expected a 3-channel raster");
  Tensor t({3, r.height, r.width});
  for (int y = 0; y < r.height; ++y) {
    for (int x = 0; x < r.width; ++x) {
      for (int c = 0; c < 3; ++c) {
        t.at(c, y, x) = static_cast<float>(static_cast<double>(r.at(y, x, c)) / r.maxval);
      }
    }
  }
  return t;
}

Raster raster_from_image(const Tensor& image) {
  require_ndim(image.shape(), 3, "image");
  if (image.dim(0) != 3) throw ShapeError("image: expected 3 channels, got " + std::to_string(image.dim(0)));
  Raster r(image.dim(2), image.dim(1), 3, 255);
  for (int y = 0; y < r.height; ++y) {
    for (int x = 0; x < r.width; ++x) {
      for (int c = 0; c < 3; ++c) {
        const double v = std::clamp(static_cast<double>(image.at(c, y, x)), 0.0, 1.0);
        r.at(y, x, c) = static_cast<std::uint16_t>(std::lround(v * 255.0));
      }
    }
  }
  return r;
}

namespace {

json box_json(const Roi& b) { return json::array({b.x0, b.y0, b.x1, b.y1}); }

Raster instance_raster(const DatasetSample& s) {
  Raster r(s.class_map.width, s.class_map.height, 1, 65535);
  for (const auto& inst : s.instances) {
    for (std::size_t i = 0; i < inst.mask.size(); ++i) {
      if (inst.mask.labels[i]) r.samples[i] = static_cast<std::uint16_t>(inst.ordinal);
    }
  }
  return r;
}

Raster label_raster(const LabelMap& m) {
  Raster r(m.width, m.height, 1, 255);
  std::copy(m.labels.begin(), m.labels.end(), r.samples.begin());
  return r;
}

LabelMap label_map_from_raster(const Raster& r, const std::string& what) {
  if (r.channels != 1) throw DataError(what + ": expected a single-channel PGM");
  LabelMap m(r.height, r.width);
  for (std::size_t i = 0; i < r.samples.size(); ++i) {
    if (r.samples[i] > 255) throw DataError(what + ": label value " + std::to_string(r.samples[i]) + " > 255");
    m.labels[i] = static_cast<std::uint8_t>(r.samples[i]);
  }
  return m;
}

json parse_json_file(const fs::path& path) {
  try {
    return json::parse(read_text_file(path));
  } catch (const json::parse_error& e) {
    throw DataError(path.string() + ": malformed JSON: " + e.what());
  }
}

}  // namespace

void write_dataset(const fs::path& dir, const Dataset& dataset) {
  for (const char* sub : {"images", "instances", "classes", "meta"}) fs::create_directories(dir / sub);
  json ids = json::array();
  for (const auto& s : dataset.samples) {
    ids.push_back(s.id);
    write_pnm(dir / "images" / (s.id + ".ppm"), raster_from_image(s.image));
    write_pnm(dir / "instances" / (s.id + ".pgm"), instance_raster(s));
    write_pnm(dir / "classes" / (s.id + ".pgm"), label_raster(s.class_map));
    json insts = json::array();
    for (const auto& inst : s.instances) {
      json e = json::object();
      e["ordinal"] = inst.ordinal;
      e["category"] = inst.category;
      e["box"] = box_json(inst.box);
      insts.push_back(e);
    }
    json meta = json::object();
    meta["instances"] = insts;
    write_text_file(dir / "meta" / (s.id + ".json"), meta.dump(2) + "\n");
  }
  json manifest = json::object();
  manifest["ids"] = ids;
  manifest["config"] = json::parse(synth_config_json(dataset.config));
  manifest["seed"] = dataset.seed;
  write_text_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

Dataset load_dataset(const fs::path& dir) {
  const fs::path manifest_path = dir / "manifest.json";
  if (!fs::exists(manifest_path)) throw DataError(dir.string() + ": not a dataset directory (no manifest.json)");
  const json manifest = parse_json_file(manifest_path);
  Dataset ds;
  try {
    if (!manifest.contains("ids") || !manifest["ids"].is_array()) throw ConfigError("ids: expected an array");
    if (manifest.contains("config")) ds.config = synth_config_from_json(manifest["config"].dump(), "config");
    if (manifest.contains("seed")) ds.seed = detail::read_u64(manifest["seed"], "seed");
  } catch (const ConfigError& e) {
    throw DataError(manifest_path.string() + ": " + e.what());
  }
  for (const auto& jid : manifest["ids"]) {
    if (!jid.is_string()) throw DataError(manifest_path.string() + ": ids must be strings");
    DatasetSample s;
    s.id = jid.get<std::string>();
    s.image = image_from_raster(read_pnm(dir / "images" / (s.id + ".ppm")));
    const fs::path inst_path = dir / "instances" / (s.id + ".pgm");
    const Raster inst = read_pnm(inst_path);
    if (inst.channels != 1 || inst.width != s.image.dim(2) || inst.height != s.image.dim(1)) {
      throw DataError(inst_path.string() + ": size or channel count does not match the image");
    }
    s.class_map = label_map_from_raster(read_pnm(dir / "classes" / (s.id + ".pgm")), "classes/" + s.id + ".pgm");
    const fs::path meta_path = dir / "meta" / (s.id + ".json");
    const json meta = parse_json_file(meta_path);
    if (!meta.contains("instances") || !meta["instances"].is_array()) {
      throw DataError(meta_path.string() + ": missing instances array");
    }
    for (const auto& e : meta["instances"]) {
      Instance in;
      try {
        in.ordinal = detail::read_int(e.at("ordinal"), "ordinal");
        in.category = detail::read_int(e.at("category"), "category");
      } catch (const json::out_of_range&) {
        throw DataError(meta_path.string() + ": instance entry needs ordinal and category");
      } catch (const ConfigError& err) {
        throw DataError(meta_path.string() + ": " + err.what());
      }
      in.mask = LabelMap(inst.height, inst.width);
      for (std::size_t i = 0; i < inst.samples.size(); ++i) in.mask.labels[i] = inst.samples[i] == in.ordinal;
      const auto box = mask_bounds(in.mask);
      if (!box) throw DataError(inst_path.string() + ": instance " + std::to_string(in.ordinal) + " has no pixels");
      in.box = *box;
      s.instances.push_back(std::move(in));
    }
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

Dataset generate_dataset(const fs::path& dir, std::uint64_t seed, int count, const SynthConfig& cfg) {
  Dataset ds;
  ds.samples = generate_samples(seed, count, cfg);
  ds.config = cfg;
  ds.seed = seed;
  write_dataset(dir, ds);
  return ds;
}

}  // namespace biseg
