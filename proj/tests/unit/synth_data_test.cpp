#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "biseg/dataset.hpp"
#include "biseg/synth_data.hpp"
#include "oracles.hpp"

using namespace biseg;
namespace fs = std::filesystem;

namespace {

std::map<std::string, std::string> read_tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    out[fs::relative(e.path(), root).generic_string()] = ss.str();
  }
  return out;
}

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("biseg_synth_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST_SUITE("synth_data") {

TEST_CASE("generation is a function of seed and index") {
  const SynthConfig cfg;
  const auto a = generate_sample(7, 3, cfg);
  const auto b = generate_sample(7, 3, cfg);
  CHECK(a.image == b.image);
  CHECK(a.class_map == b.class_map);
  CHECK(a.id == "000003");
  const auto batch = generate_samples(7, 5, cfg);
  CHECK(batch[3].image == a.image);
  CHECK(generate_sample(8, 3, cfg).image != a.image);
}

TEST_CASE("sample invariants") {
  SynthConfig cfg;
  const auto samples = generate_samples(11, 60, cfg);
  for (const auto& s : samples) {
    CHECK(s.image.shape() == Shape{3, 64, 64});
    bool quantized = true;
    for (float v : s.image.values()) {
      quantized &= v >= 0.0f && v <= 1.0f && std::abs(std::lround(v * 255.0) - v * 255.0) < 1e-3;
    }
    CHECK(quantized);
    CHECK(s.instances.size() <= 4);
    LabelMap want(64, 64);
    for (const auto& inst : s.instances) {
      CHECK(inst.category >= 1);
      CHECK(inst.category <= 3);
      CHECK(inst.mask.count(1) >= 16);
      // Tight box: every side touches the mask, shrinking any side drops pixels.
      int x0 = 64, y0 = 64, x1 = 0, y1 = 0;
      for (int y = 0; y < 64; ++y) {
        for (int x = 0; x < 64; ++x) {
          if (!inst.mask.at(y, x)) continue;
          x0 = std::min(x0, x);
          y0 = std::min(y0, y);
          x1 = std::max(x1, x + 1);
          y1 = std::max(y1, y + 1);
        }
      }
      CHECK(inst.box == Roi{static_cast<float>(x0), static_cast<float>(y0), static_cast<float>(x1),
                            static_cast<float>(y1), 1.0f});
      // Later draws on top: paint in ordinal order.
      for (std::size_t p = 0; p < want.size(); ++p) {
        if (inst.mask.labels[p]) want.labels[p] = static_cast<std::uint8_t>(inst.category);
      }
    }
    CHECK(s.class_map == want);
    // Visible masks do not overlap.
    LabelMap cover(64, 64);
    for (const auto& inst : s.instances) {
      for (std::size_t p = 0; p < cover.size(); ++p) cover.labels[p] += inst.mask.labels[p];
    }
    CHECK(std::all_of(cover.labels.begin(), cover.labels.end(), [](std::uint8_t c) { return c <= 1; }));
  }
}

TEST_CASE("no instances gives an all-background class map") {
  SynthConfig cfg;
  cfg.min_instances = cfg.max_instances = 0;
  for (const auto& s : generate_samples(1, 5, cfg)) {
    CHECK(s.instances.empty());
    CHECK(s.class_map.count(0) == s.class_map.size());
  }
}

TEST_CASE("occlusion: at least 20% of 100 images have a box pair with IoU > 0.3") {
  const auto samples = generate_samples(0, 100, SynthConfig{});
  int with_pair = 0;
  for (const auto& s : samples) {
    bool found = false;
    for (std::size_t i = 0; i < s.instances.size() && !found; ++i) {
      for (std::size_t j = i + 1; j < s.instances.size() && !found; ++j) {
        found = oracle::box_iou(s.instances[i].box, s.instances[j].box) > 0.3;
      }
    }
    with_pair += found;
  }
  CHECK(with_pair >= 20);
}

TEST_CASE("config validation") {
  SynthConfig cfg;
  cfg.height = 40;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = SynthConfig{};
  cfg.max_instances = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = SynthConfig{};
  cfg.max_size = 80;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  CHECK_THROWS_AS(generate_samples(0, 0, SynthConfig{}), ConfigError);
}

TEST_CASE("mask_bounds") {
  CHECK_FALSE(mask_bounds(LabelMap(4, 4)));
  LabelMap m(4, 4);
  m.at(1, 2) = 1;
  CHECK(*mask_bounds(m) == Roi{2, 1, 3, 2, 1});
}

TEST_CASE("dataset directory") {
  SynthConfig cfg;
  cfg.height = 32;
  cfg.width = 48;
  cfg.min_size = 10;
  cfg.max_size = 20;
  const auto a = scratch("a");
  const auto b = scratch("b");
  const auto ds = generate_dataset(a, 5, 6, cfg);
  generate_dataset(b, 5, 6, cfg);

  SUBCASE("same seed gives byte-identical directories") {
    const auto ta = read_tree(a);
    CHECK(ta == read_tree(b));
    CHECK(ta.count("manifest.json") == 1);
    CHECK(ta.count("images/000005.ppm") == 1);
    CHECK(ta.count("instances/000000.pgm") == 1);
    CHECK(ta.count("classes/000002.pgm") == 1);
    CHECK(ta.count("meta/000004.json") == 1);
    CHECK(ta.at("images/000000.ppm").rfind("P6\n48 32\n255\n", 0) == 0);
    CHECK(ta.at("instances/000000.pgm").rfind("P5\n48 32\n65535\n", 0) == 0);
  }
  SUBCASE("load reproduces the samples") {
    const auto loaded = load_dataset(a);
    CHECK(loaded.seed == 5);
    CHECK(loaded.config == cfg);
    REQUIRE(loaded.samples.size() == 6);
    for (std::size_t i = 0; i < 6; ++i) {
      const auto& x = loaded.samples[i];
      const auto& y = ds.samples[i];
      CHECK(x.id == y.id);
      CHECK(x.image == y.image);
      CHECK(x.class_map == y.class_map);
      REQUIRE(x.instances.size() == y.instances.size());
      for (std::size_t j = 0; j < x.instances.size(); ++j) {
        CHECK(x.instances[j].mask == y.instances[j].mask);
        CHECK(x.instances[j].box == y.instances[j].box);
        CHECK(x.instances[j].category == y.instances[j].category);
        CHECK(x.instances[j].ordinal == y.instances[j].ordinal);
      }
    }
  }
  SUBCASE("damaged directories are reported") {
    fs::remove(a / "classes" / "000001.pgm");
    CHECK_THROWS_AS(load_dataset(a), Error);
    CHECK_THROWS_AS(load_dataset(scratch("missing")), DataError);
  }
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("raster conversion round trip") {
  const auto s = generate_sample(3, 0, SynthConfig{});
  CHECK(image_from_raster(raster_from_image(s.image)) == s.image);
}

}  // TEST_SUITE
