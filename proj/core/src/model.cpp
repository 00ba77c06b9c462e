#include "biseg/model.hpp"

#include <atomic>
#include <cmath>

#include <nlohmann/json.hpp>

#include "biseg/image_io.hpp"
#include "biseg/ops.hpp"
#include "biseg/rng.hpp"
#include "biseg/tensor_io.hpp"

namespace biseg {
namespace {

std::atomic<std::uint64_t> g_forward_count{0};

struct LayerSpec {
  const char* name;
  int stride;
};

// conv1..conv3 halve the resolution down to stride 8, conv4 refines at stride 8
// (the stride-8 tap), conv5 reaches stride 16.
constexpr LayerSpec kBackbone[] = {
    {"backbone.conv1", 2}, {"backbone.conv2", 2}, {"backbone.conv3", 2},
    {"backbone.conv4", 1}, {"backbone.conv5", 2},
};
constexpr int kNumBackbone = 5;
constexpr int kTap8 = 3;
constexpr int kTap16 = 4;

struct ParamShape {
  std::string name;
  Shape shape;
  bool is_weight;
};

std::vector<ParamShape> parameter_layout(const ModelConfig& c) {
  std::vector<ParamShape> out;
  int cin = 3;
  for (int i = 0; i < kNumBackbone; ++i) {
    const int cout = i == kTap16 ? c.width16 : c.width8;
    out.push_back({std::string(kBackbone[i].name) + ".weight", {cout, cin, 3, 3}, true});
    out.push_back({std::string(kBackbone[i].name) + ".bias", {cout}, false});
    cin = cout;
  }
  const int cats = c.num_categories();
  if (c.semantic_head) {
    out.push_back({"semantic.weight", {cats, c.width8, 1, 1}, true});
    out.push_back({"semantic.bias", {cats}, false});
  }
  const int ch1 = ScoreMapSet::channels_for(c.k1, cats);
  out.push_back({"set1.weight", {ch1, c.width16, 1, 1}, true});
  out.push_back({"set1.bias", {ch1}, false});
  if (c.second_set) {
    const int ch2 = ScoreMapSet::channels_for(c.k2, cats);
    out.push_back({"set2.weight", {ch2, c.width8, 1, 1}, true});
    out.push_back({"set2.bias", {ch2}, false});
  }
  return out;
}

void validate_config(const ModelConfig& c) {
  if (c.num_classes < 1) throw ConfigError("model: num_classes must be >= 1");
  if (c.k1 < 1 || c.k2 < 1) throw ConfigError("model: partition counts must be >= 1");
  if (c.width8 < 1 || c.width16 < 1) throw ConfigError("model: channel widths must be >= 1");
  if (c.prior_product && !c.semantic_head) throw ConfigError("model: the prior product needs the semantic head");
  if (c.roi_res1 < c.k1 || 2 * c.roi_res1 < c.k2) throw ConfigError("model: ROI resolution smaller than the partition count");
}

const ConvSpec kConv3x3Stride1{1, 1};
const ConvSpec kConv3x3Stride2{2, 1};
const ConvSpec kConv1x1{1, 0};

std::uint64_t name_key(std::string_view name) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (unsigned char ch : name) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

ConvSpec backbone_spec(int layer) { return kBackbone[layer].stride == 2 ? kConv3x3Stride2 : kConv3x3Stride1; }

}  // namespace

ModelConfig model_config_for(const VariantSpec& variant, int num_classes, int k1, int k2, int width8,
                             int width16, int roi_res1) {
  ModelConfig c;
  c.num_classes = num_classes;
  c.k1 = k1;
  c.k2 = k2;
  c.width8 = width8;
  c.width16 = width16;
  c.semantic_head = variant.use_semantic_head;
  c.second_set = variant.use_fusion;
  c.prior_product = variant.use_prior_product;
  c.roi_res1 = roi_res1;
  return c;
}

HeadOptions head_options_for(const ModelConfig& config) {
  return HeadOptions{config.prior_product, config.second_set, config.roi_res1, 2 * config.roi_res1};
}

ModelParams ModelParams::zeros(const ModelConfig& config) {
  validate_config(config);
  ModelParams p;
  p.config = config;
  for (auto& ps : parameter_layout(config)) {
    p.names.push_back(ps.name);
    p.tensors.emplace_back(ps.shape);
  }
  return p;
}

ModelParams ModelParams::init(const ModelConfig& config, std::uint64_t seed) {
  ModelParams p = zeros(config);
  const auto layout = parameter_layout(config);
  for (std::size_t i = 0; i < layout.size(); ++i) {
    if (!layout[i].is_weight) continue;
    const Shape& s = layout[i].shape;
    const double fan_in = static_cast<double>(s[1]) * s[2] * s[3];
    const double fan_out = static_cast<double>(s[0]) * s[2] * s[3];
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    // Streams are keyed by parameter name, so layers shared between variants start identical.
    Rng rng = Rng::derive(seed, name_key(layout[i].name));
    for (auto& v : p.tensors[i].data()) v = static_cast<float>(rng.uniform(-bound, bound));
  }
  return p;
}

ModelParams ModelParams::zeros_like() const { return zeros(config); }

bool ModelParams::has(std::string_view name) const {
  for (const auto& n : names) {
    if (n == name) return true;
  }
  return false;
}

Tensor& ModelParams::get(std::string_view name) {
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return tensors[i];
  }
  throw ConfigError("model has no parameter named " + std::string(name));
}

const Tensor& ModelParams::get(std::string_view name) const {
  return const_cast<ModelParams*>(this)->get(name);
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors) n += t.size();
  return n;
}

const Tensor& ForwardState::feat8() const { return post[kTap8]; }
const Tensor& ForwardState::feat16() const { return post[kTap16]; }

ForwardState backbone_forward(const Tensor& image, const ModelParams& params) {
  require_ndim(image.shape(), 3, "backbone input");
  if (image.dim(0) != 3) throw ShapeError("backbone input: dimension 0 must be 3 (RGB), got " + std::to_string(image.dim(0)));
  const int h = image.dim(1);
  const int w = image.dim(2);
  if (h % 16 != 0 || w % 16 != 0) {
    throw ShapeError("backbone input " + std::to_string(h) + "x" + std::to_string(w) +
                     " is not a multiple of 16; pad to " + std::to_string((h + 15) / 16 * 16) + "x" +
                     std::to_string((w + 15) / 16 * 16));
  }
  ++g_forward_count;
  const ModelConfig& c = params.config;
  ForwardState st;
  st.image = image;
  const Tensor* x = &st.image;
  for (int i = 0; i < kNumBackbone; ++i) {
    const std::string base = kBackbone[i].name;
    st.pre.push_back(conv2d(*x, params.get(base + ".weight"), params.get(base + ".bias"), backbone_spec(i)));
    st.post.push_back(relu(st.pre.back()));
    x = &st.post.back();
  }
  const int cats = c.num_categories();
  if (c.semantic_head) {
    SemanticHeadOutput sem;
    sem.scores = conv2d(st.feat8(), params.get("semantic.weight"), params.get("semantic.bias"), kConv1x1);
    sem.probs = softmax_channels(sem.scores);
    sem.stride = kFeatureStride8;
    st.sem = std::move(sem);
  }
  st.set1.maps = conv2d(st.feat16(), params.get("set1.weight"), params.get("set1.bias"), kConv1x1);
  st.set1.k = c.k1;
  st.set1.stride = kFeatureStride16;
  st.set1.num_categories = cats;
  if (c.second_set) {
    ScoreMapSet s2;
    s2.maps = conv2d(st.feat8(), params.get("set2.weight"), params.get("set2.bias"), kConv1x1);
    s2.k = c.k2;
    s2.stride = kFeatureStride8;
    s2.num_categories = cats;
    st.set2 = std::move(s2);
  }
  return st;
}

std::uint64_t backbone_forward_count() { return g_forward_count.load(); }

ModelParams backbone_backward(const ForwardState& st, const ModelParams& params, const HeadGrads& grads) {
  const ModelConfig& c = params.config;
  ModelParams g = params.zeros_like();
  Tensor g_feat8(st.feat8().shape());
  Tensor g_feat16(st.feat16().shape());

  auto head = [&](const Tensor& input, const std::string& name, const Tensor& upstream, Tensor& g_input) {
    auto cg = conv2d_backward(input, params.get(name + ".weight"), upstream, kConv1x1);
    g.get(name + ".weight") = std::move(cg.weight);
    g.get(name + ".bias") = std::move(cg.bias);
    add_inplace(g_input, cg.input);
  };
  if (c.semantic_head && grads.sem_scores.ndim() != 0) head(st.feat8(), "semantic", grads.sem_scores, g_feat8);
  if (grads.set1_maps.ndim() != 0) head(st.feat16(), "set1", grads.set1_maps, g_feat16);
  if (c.second_set && grads.set2_maps.ndim() != 0) head(st.feat8(), "set2", grads.set2_maps, g_feat8);

  Tensor upstream = std::move(g_feat16);
  for (int i = kNumBackbone - 1; i >= 0; --i) {
    if (i == kTap8) add_inplace(upstream, g_feat8);
    const Tensor g_pre = relu_backward(st.pre[i], upstream);
    const Tensor& input = i == 0 ? st.image : st.post[i - 1];
    auto cg = conv2d_backward(input, params.get(std::string(kBackbone[i].name) + ".weight"), g_pre,
                              backbone_spec(i), i > 0);
    g.get(std::string(kBackbone[i].name) + ".weight") = std::move(cg.weight);
    g.get(std::string(kBackbone[i].name) + ".bias") = std::move(cg.bias);
    if (i > 0) upstream = std::move(cg.input);
  }
  return g;
}

void save_checkpoint(const std::filesystem::path& dir, const ModelParams& params) {
  std::filesystem::create_directories(dir);
  nlohmann::ordered_json manifest;
  const ModelConfig& c = params.config;
  manifest["config"] = {{"num_classes", c.num_classes}, {"k1", c.k1}, {"k2", c.k2},
                        {"width8", c.width8},           {"width16", c.width16},
                        {"semantic_head", c.semantic_head}, {"second_set", c.second_set},
                        {"prior_product", c.prior_product}, {"roi_res1", c.roi_res1}};
  auto& list = manifest["parameters"];
  list = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < params.names.size(); ++i) {
    const std::string file = params.names[i] + ".ten";
    save_tensor(dir / file, params.tensors[i]);
    list.push_back({{"name", params.names[i]}, {"shape", params.tensors[i].shape()}, {"file", file}});
  }
  write_text_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

ModelParams load_checkpoint(const std::filesystem::path& dir) {
  const auto path = dir / "manifest.json";
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  try {
    const auto& jc = manifest.at("config");
    ModelConfig c;
    c.num_classes = jc.at("num_classes").get<int>();
    c.k1 = jc.at("k1").get<int>();
    c.k2 = jc.at("k2").get<int>();
    c.width8 = jc.at("width8").get<int>();
    c.width16 = jc.at("width16").get<int>();
    c.semantic_head = jc.at("semantic_head").get<bool>();
    c.second_set = jc.at("second_set").get<bool>();
    c.prior_product = jc.at("prior_product").get<bool>();
    c.roi_res1 = jc.at("roi_res1").get<int>();
    ModelParams p = ModelParams::zeros(c);
    const auto& list = manifest.at("parameters");
    if (list.size() != p.names.size()) {
      throw DataError(path.string() + ": expected " + std::to_string(p.names.size()) + " parameters, found " +
                      std::to_string(list.size()));
    }
    for (std::size_t i = 0; i < list.size(); ++i) {
      const std::string name = list[i].at("name").get<std::string>();
      if (name != p.names[i]) throw DataError(path.string() + ": parameter " + std::to_string(i) + " is " + name + ", expected " + p.names[i]);
      Tensor t = load_tensor(dir / list[i].at("file").get<std::string>());
      require_same_shape(t.shape(), p.tensors[i].shape(), "checkpoint parameter " + name);
      p.tensors[i] = std::move(t);
    }
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

}  // namespace biseg
