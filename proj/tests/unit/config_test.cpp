#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "biseg/config.hpp"

using namespace biseg;

namespace {

std::string error_of(const std::string& text) {
  ExperimentConfig cfg;
  try {
    apply_config_json(cfg, text, "c.json");
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_SUITE("config") {

TEST_CASE("defaults") {
  const ExperimentConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  CHECK(cfg.train.k1 == 7);
  CHECK(cfg.train.k2 == 9);
  CHECK(cfg.train.roi_res1 == 20);
  CHECK(cfg.train.roi_res2 == 40);
  CHECK(cfg.infer.nms_iou == 0.3);
  CHECK(cfg.infer.vote_iou == 0.5);
  CHECK(cfg.infer.binarize_thresh == 0.5);
  CHECK(cfg.eval_ious == std::vector<double>{0.5, 0.7});
  CHECK(cfg.sweep_pairs == std::vector<std::pair<int, int>>{{7, 7}, {7, 9}, {7, 11}});
  CHECK(cfg.synth.height == 64);
  CHECK(cfg.train_images == 200);
  CHECK(cfg.test_images == 100);
}

TEST_CASE("layering keeps keys that are absent") {
  ExperimentConfig cfg;
  apply_config_json(cfg, R"({"seed": 5, "train": {"k2": 11, "lr_schedule": [{"iterations": 10, "rate": 0.1}]},
                             "infer": {"proposal_mode": "grid"}, "synth": {"occlusion": false}})",
                    "c.json");
  CHECK(cfg.seed == 5);
  CHECK(cfg.train.k2 == 11);
  CHECK(cfg.train.k1 == 7);
  CHECK(cfg.train.lr_schedule == std::vector<LrStage>{{10, 0.1}});
  CHECK(cfg.infer.proposal_mode == ProposalMode::kGrid);
  CHECK_FALSE(cfg.synth.occlusion);
  CHECK(cfg.synth.height == 64);
  apply_config_json(cfg, R"({"train": {"k1": 3}})", "d.json");
  CHECK(cfg.train.k1 == 3);
  CHECK(cfg.train.k2 == 11);
}

TEST_CASE("errors name the source and the field") {
  CHECK(error_of(R"({"trian": {}})").find("c.json") == 0);
  CHECK(error_of(R"({"trian": {}})").find("trian") != std::string::npos);
  CHECK(error_of(R"({"train": {"k1": "7"}})").find("train.k1") != std::string::npos);
  CHECK(error_of(R"({"train": {"k1": 7.5}})").find("train.k1") != std::string::npos);
  CHECK(error_of(R"({"synth": {"occlusion": 1}})").find("synth.occlusion") != std::string::npos);
  CHECK(error_of(R"({"seed": -1})").find("seed") != std::string::npos);
  CHECK(error_of(R"({"infer": {"proposal_mode": "rpn"}})").find("rpn") != std::string::npos);
  CHECK(error_of(R"({"train": {"variant": "mask-rcnn"}})") != "");
  CHECK(error_of(R"({"eval": {"ious": 0.5}})").find("eval.ious") != std::string::npos);
  CHECK(error_of(R"({"sweep": {"pairs": [[7]]}})").find("sweep.pairs") != std::string::npos);
  CHECK(error_of(R"({"seed": 1,)").find("malformed") != std::string::npos);
  CHECK(error_of("[1, 2]") != "");
  CHECK(error_of(R"({"data": {"train": 3}})").find("data.train") != std::string::npos);
}

TEST_CASE("validation") {
  ExperimentConfig cfg;
  cfg.eval_ious = {0.5, 1.5};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = ExperimentConfig{};
  cfg.train.roi_res2 = 30;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = ExperimentConfig{};
  cfg.infer.nms_iou = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = ExperimentConfig{};
  cfg.threads = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("echoed config parses back to the same value") {
  ExperimentConfig cfg;
  cfg.seed = 99;
  cfg.train.variant = "biseg-single";
  cfg.train.jitter.shift = 0.1;
  cfg.infer.proposal_mode = ProposalMode::kFile;
  cfg.sweep_pairs = {{3, 5}};
  cfg.eval_ious = {0.6};
  const std::string text = config_json(cfg);
  ExperimentConfig back;
  apply_config_json(back, text, "echo");
  CHECK(back == cfg);
  CHECK(config_json(back) == text);
}

TEST_CASE("load_config") {
  const auto path = std::filesystem::temp_directory_path() / "biseg_config_test.json";
  {
    std::ofstream out(path);
    out << R"({"threads": 3})";
  }
  CHECK(load_config(path).threads == 3);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_config(path), ConfigError);
}

TEST_CASE("synth config JSON") {
  SynthConfig s;
  s.width = 96;
  s.cluster_prob = 0.1;
  CHECK(synth_config_from_json(synth_config_json(s), "m") == s);
  CHECK_THROWS_AS(synth_config_from_json(R"({"colour": 1})", "m"), ConfigError);
}

TEST_CASE("flag value parsers") {
  CHECK(parse_double_list("0.5,0.7", "--iou") == std::vector<double>{0.5, 0.7});
  CHECK(parse_double_list("0.9", "--iou") == std::vector<double>{0.9});
  CHECK_THROWS_AS(parse_double_list("0.5,x", "--iou"), ConfigError);
  CHECK_THROWS_AS(parse_double_list("", "--iou"), ConfigError);
  CHECK(parse_int_pair("7,9", "--pairs") == std::pair<int, int>{7, 9});
  CHECK_THROWS_AS(parse_int_pair("7", "--pairs"), ConfigError);
  CHECK_THROWS_AS(parse_int_pair("7,9,11", "--pairs"), ConfigError);
}

TEST_CASE("variants") {
  CHECK(all_variants().size() == 4);
  const auto fused = variant_by_name("biseg-fused");
  CHECK((fused.use_prior_product && fused.use_semantic_head && fused.use_fusion));
  const auto fcis = variant_by_name("fcis-star");
  CHECK_FALSE((fcis.use_prior_product || fcis.use_semantic_head || fcis.use_fusion));
  const auto naive = variant_by_name("naive-multitask");
  CHECK((naive.use_semantic_head && !naive.use_prior_product && !naive.use_fusion));
  const auto single = variant_by_name("biseg-single");
  CHECK((single.use_semantic_head && single.use_prior_product && !single.use_fusion));
  CHECK_THROWS_AS(variant_by_name("fcis"), ConfigError);
}

}  // TEST_SUITE
