#include "biseg/config.hpp"

#include <charconv>
#include <string>

#include "biseg/image_io.hpp"
#include "json_fields.hpp"

namespace biseg {

using detail::json;
using detail::read_bool;
using detail::read_double;
using detail::read_int;
using detail::read_string;
using detail::read_u64;

const std::vector<VariantSpec>& all_variants() {
  static const std::vector<VariantSpec> kVariants = {
      {"fcis-star", false, false, false},
      {"naive-multitask", false, true, false},
      {"biseg-single", true, true, false},
      {"biseg-fused", true, true, true},
  };
  return kVariants;
}

VariantSpec variant_by_name(std::string_view name) {
  for (const auto& v : all_variants()) {
    if (v.name == name) return v;
  }
  throw ConfigError("unknown variant '" + std::string(name) +
                    "' (expected fcis-star, naive-multitask, biseg-single or biseg-fused)");
}

namespace {

json synth_to_json(const SynthConfig& c) {
  json j = json::object();
  j["height"] = c.height;
  j["width"] = c.width;
  j["min_instances"] = c.min_instances;
  j["max_instances"] = c.max_instances;
  j["occlusion"] = c.occlusion;
  j["min_size"] = c.min_size;
  j["max_size"] = c.max_size;
  j["cluster_prob"] = c.cluster_prob;
  j["color_jitter"] = c.color_jitter;
  j["pixel_noise"] = c.pixel_noise;
  j["min_visible_pixels"] = c.min_visible_pixels;
  return j;
}

void apply_synth(const json& j, SynthConfig& c, const std::string& where) {
  detail::expect_object(j, where);
  for (const auto& [k, v] : j.items()) {
    const std::string at = where + "." + k;
    if (k == "height") c.height = read_int(v, at);
    else if (k == "width") c.width = read_int(v, at);
    else if (k == "min_instances") c.min_instances = read_int(v, at);
    else if (k == "max_instances") c.max_instances = read_int(v, at);
    else if (k == "occlusion") c.occlusion = read_bool(v, at);
    else if (k == "min_size") c.min_size = read_int(v, at);
    else if (k == "max_size") c.max_size = read_int(v, at);
    else if (k == "cluster_prob") c.cluster_prob = read_double(v, at);
    else if (k == "color_jitter") c.color_jitter = read_double(v, at);
    else if (k == "pixel_noise") c.pixel_noise = read_double(v, at);
    else if (k == "min_visible_pixels") c.min_visible_pixels = read_int(v, at);
    else detail::unknown_key(at);
  }
}

json jitter_to_json(const JitterSpec& s) {
  json j = json::object();
  j["shift"] = s.shift;
  j["scale_lo"] = s.scale_lo;
  j["scale_hi"] = s.scale_hi;
  j["gt_fraction"] = s.gt_fraction;
  j["negative_min_size"] = s.negative_min_size;
  j["negative_max_size"] = s.negative_max_size;
  return j;
}

void apply_jitter(const json& j, JitterSpec& s, const std::string& where) {
  detail::expect_object(j, where);
  for (const auto& [k, v] : j.items()) {
    const std::string at = where + "." + k;
    if (k == "shift") s.shift = read_double(v, at);
    else if (k == "scale_lo") s.scale_lo = read_double(v, at);
    else if (k == "scale_hi") s.scale_hi = read_double(v, at);
    else if (k == "gt_fraction") s.gt_fraction = read_double(v, at);
    else if (k == "negative_min_size") s.negative_min_size = read_int(v, at);
    else if (k == "negative_max_size") s.negative_max_size = read_int(v, at);
    else detail::unknown_key(at);
  }
}

json train_to_json(const TrainConfig& c) {
  json j = json::object();
  j["variant"] = c.variant;
  j["num_classes"] = c.num_classes;
  j["k1"] = c.k1;
  j["k2"] = c.k2;
  j["roi_res1"] = c.roi_res1;
  j["roi_res2"] = c.roi_res2;
  j["width8"] = c.width8;
  j["width16"] = c.width16;
  j["rois_per_image"] = c.rois_per_image;
  j["proposals_per_image"] = c.proposals_per_image;
  json sched = json::array();
  for (const auto& s : c.lr_schedule) sched.push_back({{"iterations", s.iterations}, {"rate", s.rate}});
  j["lr_schedule"] = sched;
  j["seed"] = c.seed;
  j["positive_iou_threshold"] = c.positive_iou_threshold;
  j["weight_ss"] = c.weight_ss;
  j["weight_cls"] = c.weight_cls;
  j["weight_mask"] = c.weight_mask;
  j["jitter"] = jitter_to_json(c.jitter);
  return j;
}

void apply_train(const json& j, TrainConfig& c, const std::string& where) {
  detail::expect_object(j, where);
  for (const auto& [k, v] : j.items()) {
    const std::string at = where + "." + k;
    if (k == "variant") c.variant = variant_by_name(read_string(v, at)).name;
    else if (k == "num_classes") c.num_classes = read_int(v, at);
    else if (k == "k1") c.k1 = read_int(v, at);
    else if (k == "k2") c.k2 = read_int(v, at);
    else if (k == "roi_res1") c.roi_res1 = read_int(v, at);
    else if (k == "roi_res2") c.roi_res2 = read_int(v, at);
    else if (k == "width8") c.width8 = read_int(v, at);
    else if (k == "width16") c.width16 = read_int(v, at);
    else if (k == "rois_per_image") c.rois_per_image = read_int(v, at);
    else if (k == "proposals_per_image") c.proposals_per_image = read_int(v, at);
    else if (k == "seed") c.seed = read_u64(v, at);
    else if (k == "positive_iou_threshold") c.positive_iou_threshold = read_double(v, at);
    else if (k == "weight_ss") c.weight_ss = read_double(v, at);
    else if (k == "weight_cls") c.weight_cls = read_double(v, at);
    else if (k == "weight_mask") c.weight_mask = read_double(v, at);
    else if (k == "jitter") apply_jitter(v, c.jitter, at);
    else if (k == "lr_schedule") {
      if (!v.is_array()) throw ConfigError(at + ": expected an array of {iterations, rate}");
      c.lr_schedule.clear();
      for (std::size_t i = 0; i < v.size(); ++i) {
        const std::string si = at + "[" + std::to_string(i) + "]";
        detail::expect_object(v[i], si);
        LrStage s;
        for (const auto& [sk, sv] : v[i].items()) {
          if (sk == "iterations") s.iterations = read_int(sv, si + ".iterations");
          else if (sk == "rate") s.rate = read_double(sv, si + ".rate");
          else detail::unknown_key(si + "." + sk);
        }
        c.lr_schedule.push_back(s);
      }
    } else {
      detail::unknown_key(at);
    }
  }
}

json infer_to_json(const InferenceConfig& c) {
  json j = json::object();
  j["proposal_mode"] = std::string(proposal_mode_name(c.proposal_mode));
  j["proposal_count"] = c.proposal_count;
  j["jitter"] = jitter_to_json(c.jitter);
  j["nms_iou"] = c.nms_iou;
  j["vote_iou"] = c.vote_iou;
  j["binarize_thresh"] = c.binarize_thresh;
  j["render_min_score"] = c.render_min_score;
  j["seed"] = c.seed;
  return j;
}

void apply_infer(const json& j, InferenceConfig& c, const std::string& where) {
  detail::expect_object(j, where);
  for (const auto& [k, v] : j.items()) {
    const std::string at = where + "." + k;
    if (k == "proposal_mode") {
      try {
        c.proposal_mode = proposal_mode_by_name(read_string(v, at));
      } catch (const ConfigError& e) {
        throw ConfigError(at + ": " + e.what());
      }
    } else if (k == "proposal_count") c.proposal_count = read_int(v, at);
    else if (k == "jitter") apply_jitter(v, c.jitter, at);
    else if (k == "nms_iou") c.nms_iou = read_double(v, at);
    else if (k == "vote_iou") c.vote_iou = read_double(v, at);
    else if (k == "binarize_thresh") c.binarize_thresh = read_double(v, at);
    else if (k == "render_min_score") c.render_min_score = read_double(v, at);
    else if (k == "seed") c.seed = read_u64(v, at);
    else detail::unknown_key(at);
  }
}

}  // namespace

void ExperimentConfig::validate() const {
  if (threads < 1) throw ConfigError("threads must be >= 1");
  if (train_images < 1 || test_images < 1) throw ConfigError("data.train_images and data.test_images must be >= 1");
  synth.validate();
  train.validate();
  infer.validate();
  if (eval_ious.empty()) throw ConfigError("eval.ious must not be empty");
  for (double t : eval_ious) {
    if (!(t > 0 && t <= 1)) throw ConfigError("eval.ious values must be in (0,1]");
  }
  for (const auto& [a, b] : sweep_pairs) {
    if (a < 1 || b < 1) throw ConfigError("sweep.pairs entries must be >= 1");
  }
}

void apply_config_json(ExperimentConfig& cfg, std::string_view text, const std::string& source) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(source + ": malformed JSON: " + e.what());
  }
  try {
    detail::expect_object(j, "<root>");
    for (const auto& [k, v] : j.items()) {
      if (k == "seed") cfg.seed = read_u64(v, k);
      else if (k == "threads") cfg.threads = read_int(v, k);
      else if (k == "synth") apply_synth(v, cfg.synth, k);
      else if (k == "train") apply_train(v, cfg.train, k);
      else if (k == "infer") apply_infer(v, cfg.infer, k);
      else if (k == "data") {
        detail::expect_object(v, k);
        for (const auto& [dk, dv] : v.items()) {
          if (dk == "train_images") cfg.train_images = read_int(dv, "data.train_images");
          else if (dk == "test_images") cfg.test_images = read_int(dv, "data.test_images");
          else detail::unknown_key("data." + dk);
        }
      } else if (k == "eval") {
        detail::expect_object(v, k);
        for (const auto& [ek, ev] : v.items()) {
          if (ek != "ious") detail::unknown_key("eval." + ek);
          if (!ev.is_array()) throw ConfigError("eval.ious: expected an array of numbers");
          cfg.eval_ious.clear();
          for (const auto& x : ev) cfg.eval_ious.push_back(read_double(x, "eval.ious"));
        }
      } else if (k == "sweep") {
        detail::expect_object(v, k);
        for (const auto& [sk, sv] : v.items()) {
          if (sk != "pairs") detail::unknown_key("sweep." + sk);
          if (!sv.is_array()) throw ConfigError("sweep.pairs: expected an array of [k1, k2]");
          cfg.sweep_pairs.clear();
          for (const auto& p : sv) {
            if (!p.is_array() || p.size() != 2) throw ConfigError("sweep.pairs: expected [k1, k2] entries");
            cfg.sweep_pairs.emplace_back(read_int(p[0], "sweep.pairs"), read_int(p[1], "sweep.pairs"));
          }
        }
      } else {
        detail::unknown_key(k);
      }
    }
  } catch (const ConfigError& e) {
    throw ConfigError(source + ": " + e.what());
  }
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  ExperimentConfig cfg;
  std::string text;
  try {
    text = read_text_file(path);
  } catch (const DataError& e) {
    throw ConfigError(e.what());
  }
  apply_config_json(cfg, text, path.string());
  return cfg;
}

std::string config_json(const ExperimentConfig& cfg) {
  json j = json::object();
  j["seed"] = cfg.seed;
  j["threads"] = cfg.threads;
  j["data"] = {{"train_images", cfg.train_images}, {"test_images", cfg.test_images}};
  j["synth"] = synth_to_json(cfg.synth);
  j["train"] = train_to_json(cfg.train);
  j["infer"] = infer_to_json(cfg.infer);
  j["eval"] = {{"ious", cfg.eval_ious}};
  json pairs = json::array();
  for (const auto& [a, b] : cfg.sweep_pairs) pairs.push_back({a, b});
  j["sweep"] = {{"pairs", pairs}};
  return j.dump(2) + "\n";
}

std::string synth_config_json(const SynthConfig& cfg) { return synth_to_json(cfg).dump(2) + "\n"; }

SynthConfig synth_config_from_json(std::string_view text, const std::string& source) {
  SynthConfig cfg;
  try {
    apply_synth(json::parse(text), cfg, "synth");
  } catch (const json::parse_error& e) {
    throw ConfigError(source + ": malformed JSON: " + e.what());
  } catch (const ConfigError& e) {
    throw ConfigError(source + ": " + e.what());
  }
  return cfg;
}

std::vector<double> parse_double_list(std::string_view text, const std::string& what) {
  std::vector<double> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t comma = std::min(text.find(',', pos), text.size());
    const std::string item(text.substr(pos, comma - pos));
    try {
      std::size_t used = 0;
      const double v = std::stod(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
      out.push_back(v);
    } catch (const std::exception&) {
      throw ConfigError(what + ": '" + item + "' is not a number");
    }
    pos = comma + 1;
  }
  return out;
}

std::pair<int, int> parse_int_pair(std::string_view text, const std::string& what) {
  const std::size_t comma = text.find(',');
  auto parse = [&](std::string_view s) {
    int v = 0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) {
      throw ConfigError(what + ": expected 'k1,k2', got '" + std::string(text) + "'");
    }
    return v;
  };
  if (comma == std::string_view::npos) throw ConfigError(what + ": expected 'k1,k2', got '" + std::string(text) + "'");
  return {parse(text.substr(0, comma)), parse(text.substr(comma + 1))};
}

}  // namespace biseg
