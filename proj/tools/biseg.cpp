// biseg: dataset generation, training, inference, evaluation, gradient
// checks, partition sweeps and overlay rendering.

#include <CLI11.hpp>
#include <algorithm>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include "biseg/experiment.hpp"

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<int> threads;
};

void add_common(CLI::App* sub, Common& c, bool needs_out = true) {
  sub->add_option("--config", c.config, "JSON config layered over the defaults")->check(CLI::ExistingFile);
  sub->add_option("--seed", c.seed, "Seed for every random stream of the command");
  auto* out = sub->add_option("--out", c.out, "Output directory");
  if (needs_out) out->required();
  sub->add_option("--threads", c.threads, "Worker cap")->check(CLI::PositiveNumber);
}

biseg::ExperimentConfig layered(const Common& c) {
  biseg::ExperimentConfig cfg = c.config.empty() ? biseg::ExperimentConfig{} : biseg::load_config(c.config);
  if (c.seed) {
    cfg.seed = *c.seed;
    cfg.train.seed = *c.seed;
    cfg.infer.seed = *c.seed;
  }
  if (c.threads) cfg.threads = *c.threads;
  return cfg;
}

std::string one_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"biseg: toy Bayesian instance/semantic segmentation head"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "biseg 0.1.0");

  Common gen_c, train_c, infer_c, eval_c, grad_c, sweep_c, render_c;

  auto* gen = app.add_subcommand("gen", "Generate the synthetic train/test datasets");
  add_common(gen, gen_c);
  std::optional<int> gen_train, gen_test;
  gen->add_option("--train-images", gen_train, "Training images")->check(CLI::PositiveNumber);
  gen->add_option("--test-images", gen_test, "Test images")->check(CLI::PositiveNumber);

  auto* train = app.add_subcommand("train", "Train one ablation variant");
  add_common(train, train_c);
  std::string train_data, variant;
  std::optional<int> iters;
  train->add_option("--data", train_data, "Dataset directory (from gen)")->required();
  train->add_option("--variant", variant, "fcis-star | naive-multitask | biseg-single | biseg-fused");
  train->add_option("--iters", iters, "Total iterations; the lr schedule keeps its proportions")
      ->check(CLI::NonNegativeNumber);

  auto* infer = app.add_subcommand("infer", "Run inference on the test split");
  add_common(infer, infer_c);
  std::string infer_data, checkpoint, proposals, mode;
  infer->add_option("--data", infer_data, "Dataset directory")->required();
  infer->add_option("--checkpoint", checkpoint, "Checkpoint or training output directory")->required();
  infer->add_option("--proposals", proposals, "Proposal CSV (image_id,x0,y0,x1,y1,objectness)");
  infer->add_option("--mode", mode, "Proposal mode: jitter-gt | file | grid");

  auto* eval = app.add_subcommand("eval", "Score prediction files against ground truth");
  add_common(eval, eval_c);
  std::string eval_data, pred, method = "model", ious;
  eval->add_option("--data", eval_data, "Dataset directory")->required();
  eval->add_option("--pred", pred, "Prediction directory (from infer)")->required();
  eval->add_option("--iou", ious, "Comma-separated region IoU thresholds, e.g. 0.5,0.7");
  eval->add_option("--method", method, "Row label for the table");

  auto* grad = app.add_subcommand("gradcheck", "Finite-difference check of every backward pass");
  add_common(grad, grad_c);
  std::string scope = "all";
  int trials = 10;
  grad->add_option("--scope", scope, "Op name, full-head, or all");
  grad->add_option("--trials", trials, "Random trials per scope")->check(CLI::PositiveNumber);

  auto* sweep = app.add_subcommand("sweep", "Train and evaluate biseg-fused over (k1,k2) pairs");
  add_common(sweep, sweep_c);
  std::string sweep_data;
  std::vector<std::string> pairs;
  std::optional<int> sweep_iters;
  sweep->add_option("--data", sweep_data, "Dataset directory")->required();
  sweep->add_option("--pairs", pairs, "Pairs like 7,7 7,9 7,11");
  sweep->add_option("--iters", sweep_iters, "Total iterations per pair")->check(CLI::NonNegativeNumber);

  auto* render = app.add_subcommand("render", "Write PPM overlays of predictions");
  add_common(render, render_c);
  std::string render_data, render_pred;
  render->add_option("--data", render_data, "Dataset directory")->required();
  render->add_option("--pred", render_pred, "Prediction directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (gen->parsed()) {
      auto cfg = layered(gen_c);
      if (gen_train) cfg.train_images = *gen_train;
      if (gen_test) cfg.test_images = *gen_test;
      biseg::cmd_gen(cfg, gen_c.out);
      std::printf("wrote %d train and %d test images to %s\n", cfg.train_images, cfg.test_images, gen_c.out.c_str());
    } else if (train->parsed()) {
      auto cfg = layered(train_c);
      if (!variant.empty()) cfg.train.variant = variant;
      if (iters) cfg.train.lr_schedule = cfg.train.scaled_schedule(*iters);
      const auto r = biseg::cmd_train(cfg, train_data, train_c.out);
      const auto& last = r.log.empty() ? biseg::TrainLogRow{} : r.log.back();
      std::printf("trained %s for %zu iterations; final loss %.6f; checkpoint in %s/checkpoint\n",
                  cfg.train.variant.c_str(), r.log.size(), last.loss.total, train_c.out.c_str());
    } else if (infer->parsed()) {
      auto cfg = layered(infer_c);
      if (!mode.empty()) cfg.infer.proposal_mode = biseg::proposal_mode_by_name(mode);
      std::optional<std::filesystem::path> csv;
      if (!proposals.empty()) csv = proposals;
      if (cfg.infer.proposal_mode == biseg::ProposalMode::kFile && !csv) {
        throw biseg::ConfigError("--mode file requires --proposals");
      }
      const auto results = biseg::cmd_infer(cfg, infer_data, checkpoint, infer_c.out, csv);
      std::size_t n = 0;
      for (const auto& r : results) n += r.instances.size();
      std::printf("%zu instances over %zu images written to %s\n", n, results.size(), infer_c.out.c_str());
    } else if (eval->parsed()) {
      auto cfg = layered(eval_c);
      if (!ious.empty()) cfg.eval_ious = biseg::parse_double_list(ious, "--iou");
      cfg.validate();
      const auto r = biseg::cmd_eval(cfg, eval_data, pred, eval_c.out, method);
      std::fputs(biseg::eval_table(r, method).c_str(), stdout);
    } else if (grad->parsed()) {
      auto cfg = layered(grad_c);
      const auto r = biseg::cmd_gradcheck(scope, trials, cfg.seed, grad_c.out);
      std::fputs(biseg::gradcheck_report_text(r).c_str(), stdout);
      return r.passed() ? kOk : kNumerical;
    } else if (sweep->parsed()) {
      auto cfg = layered(sweep_c);
      if (!pairs.empty()) {
        cfg.sweep_pairs.clear();
        for (const auto& p : pairs) cfg.sweep_pairs.push_back(biseg::parse_int_pair(p, "--pairs"));
      }
      if (sweep_iters) cfg.train.lr_schedule = cfg.train.scaled_schedule(*sweep_iters);
      const auto rows = biseg::cmd_sweep(cfg, sweep_data, sweep_c.out);
      std::fputs(biseg::sweep_csv(rows).c_str(), stdout);
    } else if (render->parsed()) {
      auto cfg = layered(render_c);
      biseg::cmd_render(cfg, render_data, render_pred, render_c.out);
      std::printf("overlays written to %s\n", render_c.out.c_str());
    }
  } catch (const biseg::ConfigError& e) {
    std::fprintf(stderr, "biseg: error: %s\n", one_line(e.what()).c_str());
    return kUsage;
  } catch (const biseg::NumericalError& e) {
    std::fprintf(stderr, "biseg: numerical failure: %s\n", one_line(e.what()).c_str());
    return kNumerical;
  } catch (const biseg::Error& e) {
    std::fprintf(stderr, "biseg: data error: %s\n", one_line(e.what()).c_str());
    return kData;
  } catch (const std::filesystem::filesystem_error& e) {
    std::fprintf(stderr, "biseg: data error: %s\n", one_line(e.what()).c_str());
    return kData;
  }
  return kOk;
}
