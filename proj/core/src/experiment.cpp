#include "biseg/experiment.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <nlohmann/json.hpp>

#include "biseg/image_io.hpp"
#include "biseg/rng.hpp"

namespace biseg {

using json = nlohmann::json;

namespace {

constexpr std::uint64_t kTrainSplit = 1;
constexpr std::uint64_t kTestSplit = 2;

void echo_config(const ExperimentConfig& cfg, const fs::path& out) {
  fs::create_directories(out);
  write_text_file(out / "config.json", config_json(cfg));
}

json parse_json(const fs::path& path) {
  try {
    return json::parse(read_text_file(path));
  } catch (const json::parse_error& e) {
    throw DataError(path.string() + ": malformed JSON: " + e.what());
  }
}

std::vector<std::optional<LabelMap>> class_maps_of(const std::vector<ImageResult>& results) {
  std::vector<std::optional<LabelMap>> maps;
  for (const auto& r : results) maps.push_back(r.class_map);
  return maps;
}

std::vector<std::vector<InstanceMask>> instances_of(const std::vector<ImageResult>& results) {
  std::vector<std::vector<InstanceMask>> out;
  for (const auto& r : results) out.push_back(r.instances);
  return out;
}

// Fixed 12-color palette for overlays.
constexpr std::array<std::array<int, 3>, 12> kPalette = {{
    {230, 25, 75}, {60, 180, 75}, {255, 225, 25}, {0, 130, 200}, {245, 130, 48}, {145, 30, 180},
    {70, 240, 240}, {240, 50, 230}, {210, 245, 60}, {250, 190, 190}, {0, 128, 128}, {170, 110, 40},
}};
constexpr std::array<std::array<int, 3>, 4> kClassColors = {{{0, 0, 0}, {220, 60, 40}, {40, 200, 60}, {50, 80, 230}}};

void blend(Raster& r, int y, int x, const std::array<int, 3>& color) {
  for (int c = 0; c < 3; ++c) r.at(y, x, c) = static_cast<std::uint16_t>((r.at(y, x, c) + color[c] + 1) / 2);
}

}  // namespace

fs::path resolve_split(const fs::path& dir, const std::string& split) {
  if (fs::exists(dir / split / "manifest.json")) return dir / split;
  if (fs::exists(dir / "manifest.json")) return dir;
  throw DataError(dir.string() + ": no dataset found (expected manifest.json or " + split + "/manifest.json)");
}

void write_predictions(const fs::path& dir, const std::string& id, const ImageResult& result, int height,
                       int width) {
  fs::create_directories(dir / "instances");
  fs::create_directories(dir / "detections");
  Raster inst(width, height, 1, 65535);
  json dets = json::array();
  for (std::size_t i = result.instances.size(); i-- > 0;) {
    const auto& m = result.instances[i];
    for (std::size_t p = 0; p < m.mask.size(); ++p) {
      if (m.mask.labels[p]) inst.samples[p] = static_cast<std::uint16_t>(i + 1);
    }
  }
  for (std::size_t i = 0; i < result.instances.size(); ++i) {
    const auto& m = result.instances[i];
    json d = json::object();
    d["ordinal"] = i + 1;
    d["category"] = m.category;
    d["score"] = m.score;
    d["box"] = json::array({m.box.x0, m.box.y0, m.box.x1, m.box.y1});
    dets.push_back(d);
  }
  write_pnm(dir / "instances" / (id + ".pgm"), inst);
  write_text_file(dir / "detections" / (id + ".json"), json{{"detections", dets}}.dump(2) + "\n");
  if (result.class_map) {
    fs::create_directories(dir / "classes");
    Raster cls(width, height, 1, 255);
    std::copy(result.class_map->labels.begin(), result.class_map->labels.end(), cls.samples.begin());
    write_pnm(dir / "classes" / (id + ".pgm"), cls);
  }
}

LoadedPrediction read_predictions(const fs::path& dir, const std::string& id, int height, int width) {
  LoadedPrediction out;
  const fs::path inst_path = dir / "instances" / (id + ".pgm");
  const Raster inst = read_pnm(inst_path);
  if (inst.channels != 1 || inst.width != width || inst.height != height) {
    throw DataError(inst_path.string() + ": expected a " + std::to_string(width) + "x" + std::to_string(height) +
                    " single-channel PGM");
  }
  const fs::path det_path = dir / "detections" / (id + ".json");
  const json j = parse_json(det_path);
  if (!j.contains("detections") || !j["detections"].is_array()) {
    throw DataError(det_path.string() + ": missing detections array");
  }
  for (const auto& d : j["detections"]) {
    InstanceMask m;
    int ordinal = 0;
    try {
      ordinal = d.at("ordinal").get<int>();
      m.category = d.at("category").get<int>();
      m.score = d.at("score").get<float>();
      const auto& b = d.at("box");
      if (!b.is_array() || b.size() != 4) throw DataError(det_path.string() + ": box must have 4 numbers");
      m.box = Roi{b[0].get<float>(), b[1].get<float>(), b[2].get<float>(), b[3].get<float>(), 0.0f};
    } catch (const json::exception& e) {
      throw DataError(det_path.string() + ": bad detection entry: " + e.what());
    }
    m.mask = LabelMap(height, width);
    for (std::size_t p = 0; p < inst.samples.size(); ++p) m.mask.labels[p] = inst.samples[p] == ordinal;
    out.instances.push_back(std::move(m));
  }
  const fs::path cls_path = dir / "classes" / (id + ".pgm");
  if (fs::exists(cls_path)) {
    const Raster cls = read_pnm(cls_path);
    if (cls.channels != 1 || cls.width != width || cls.height != height) {
      throw DataError(cls_path.string() + ": size does not match the image");
    }
    LabelMap m(height, width);
    for (std::size_t p = 0; p < cls.samples.size(); ++p) {
      if (cls.samples[p] > 255) throw DataError(cls_path.string() + ": label out of range");
      m.labels[p] = static_cast<std::uint8_t>(cls.samples[p]);
    }
    out.class_map = std::move(m);
  }
  return out;
}

void cmd_gen(const ExperimentConfig& cfg, const fs::path& out) {
  cfg.synth.validate();
  echo_config(cfg, out);
  generate_dataset(out / "train", Rng::derive(cfg.seed, kTrainSplit).next(), cfg.train_images, cfg.synth);
  generate_dataset(out / "test", Rng::derive(cfg.seed, kTestSplit).next(), cfg.test_images, cfg.synth);
}

TrainResult cmd_train(const ExperimentConfig& cfg, const fs::path& data, const fs::path& out) {
  cfg.validate();
  const Dataset ds = load_dataset(resolve_split(data, "train"));
  TrainResult result = train_toy(ds.samples, cfg.train);
  echo_config(cfg, out);
  save_checkpoint(out / "checkpoint", result.params);
  write_text_file(out / "train_log.csv", train_log_csv(result.log));
  return result;
}

std::vector<ImageResult> cmd_infer(const ExperimentConfig& cfg, const fs::path& data, const fs::path& checkpoint,
                                   const fs::path& out, const std::optional<fs::path>& proposal_csv) {
  cfg.infer.validate();
  const fs::path ckpt = fs::exists(checkpoint / "checkpoint" / "manifest.json") ? checkpoint / "checkpoint" : checkpoint;
  const ModelParams params = load_checkpoint(ckpt);
  const Dataset ds = load_dataset(resolve_split(data, "test"));
  std::optional<ProposalTable> table;
  if (proposal_csv) table = read_proposal_csv(*proposal_csv);
  const auto results = run_dataset(ds.samples, params, cfg.infer, table ? &*table : nullptr, cfg.threads);
  echo_config(cfg, out);
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const auto& s = ds.samples[i];
    write_predictions(out, s.id, results[i], s.image.dim(1), s.image.dim(2));
  }
  return results;
}

EvalResult cmd_eval(const ExperimentConfig& cfg, const fs::path& data, const fs::path& predictions,
                    const fs::path& out, const std::string& method) {
  const Dataset ds = load_dataset(resolve_split(data, "test"));
  std::vector<std::vector<InstanceMask>> pred;
  std::vector<std::optional<LabelMap>> maps;
  for (const auto& s : ds.samples) {
    auto p = read_predictions(predictions, s.id, s.image.dim(1), s.image.dim(2));
    pred.push_back(std::move(p.instances));
    maps.push_back(std::move(p.class_map));
  }
  const EvalResult r = evaluate(ds.samples, pred, maps, cfg.train.num_classes, cfg.eval_ious);
  echo_config(cfg, out);
  write_text_file(out / "eval.json", eval_result_json(r, method));
  return r;
}

GradCheckReport cmd_gradcheck(const std::string& scope, int trials, std::uint64_t seed, const fs::path& out) {
  const GradCheckReport r = grad_check(scope, trials, seed);
  fs::create_directories(out);
  write_text_file(out / "gradcheck.json", gradcheck_report_json(r));
  return r;
}

VariantRun run_variant(const ExperimentConfig& cfg, const std::vector<DatasetSample>& train,
                       const std::vector<DatasetSample>& test) {
  VariantRun run;
  run.train = train_toy(train, cfg.train);
  run.results = run_dataset(test, run.train.params, cfg.infer, nullptr, cfg.threads);
  run.eval = evaluate(test, instances_of(run.results), class_maps_of(run.results), cfg.train.num_classes,
                      cfg.eval_ious);
  return run;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::string out = "k1,k2,mAPr05,mAPr07\n";
  char line[128];
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%d,%d,%.6f,%.6f\n", r.k1, r.k2, r.mapr05, r.mapr07);
    out += line;
  }
  return out;
}

std::vector<SweepRow> cmd_sweep(const ExperimentConfig& cfg, const fs::path& data, const fs::path& out) {
  cfg.validate();
  const Dataset train = load_dataset(resolve_split(data, "train"));
  const Dataset test = load_dataset(resolve_split(data, "test"));
  std::vector<SweepRow> rows;
  for (const auto& [k1, k2] : cfg.sweep_pairs) {
    ExperimentConfig c = cfg;
    c.train.variant = "biseg-fused";
    c.train.k1 = k1;
    c.train.k2 = k2;
    c.eval_ious = {0.5, 0.7};
    const VariantRun run = run_variant(c, train.samples, test.samples);
    rows.push_back({k1, k2, run.eval.mapr[0], run.eval.mapr[1]});
  }
  echo_config(cfg, out);
  write_text_file(out / "sweep.csv", sweep_csv(rows));
  return rows;
}

void cmd_render(const ExperimentConfig& cfg, const fs::path& data, const fs::path& predictions, const fs::path& out) {
  const Dataset ds = load_dataset(resolve_split(data, "test"));
  echo_config(cfg, out);
  for (const auto& s : ds.samples) {
    const int h = s.image.dim(1);
    const int w = s.image.dim(2);
    const LoadedPrediction p = read_predictions(predictions, s.id, h, w);
    const Raster base = raster_from_image(s.image);

    Raster inst = base;
    for (std::size_t i = p.instances.size(); i-- > 0;) {
      const auto& m = p.instances[i];
      if (!(m.score > cfg.infer.render_min_score)) continue;
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          if (m.mask.at(y, x)) blend(inst, y, x, kPalette[i % kPalette.size()]);
        }
      }
    }
    write_pnm(out / (s.id + ".instances.ppm"), inst);

    if (p.class_map) {
      Raster sem = base;
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          const int c = p.class_map->at(y, x);
          if (c > 0) blend(sem, y, x, kClassColors[static_cast<std::size_t>(c) % kClassColors.size()]);
        }
      }
      write_pnm(out / (s.id + ".semantic.ppm"), sem);
    }
  }
}

}  // namespace biseg
