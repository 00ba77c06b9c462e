#include <doctest.h>

#include <cmath>

#include "biseg/bayes_head.hpp"
#include "biseg/ops.hpp"
#include "oracles.hpp"

using namespace biseg;

namespace {

SemanticHeadOutput sem_from_probs(const Tensor& probs) {
  SemanticHeadOutput s;
  s.scores = probs;
  s.probs = probs;
  return s;
}

RoiLikelihood random_lik(Rng& rng, const Shape& s) {
  return {oracle::random_tensor<float>(rng, s, -3, 3), oracle::random_tensor<float>(rng, s, -3, 3)};
}

}  // namespace

TEST_SUITE("bayes_head") {

TEST_CASE("crop_prior") {
  SUBCASE("constant prior gives a constant crop") {
    const auto crop = crop_prior(sem_from_probs(Tensor({4, 8, 8}, 0.25f)), Roi{5, 9, 40, 33, 0}, 13);
    CHECK(crop.shape() == Shape{4, 13, 13});
    for (float v : crop.values()) CHECK(v == 0.25f);
  }
  SUBCASE("full-map ROI with M = map size is the identity") {
    Rng rng(1);
    const Tensor probs = oracle::random_tensor<float>(rng, {3, 8, 8}, 0, 1);
    CHECK(crop_prior(sem_from_probs(probs), Roi{0, 0, 64, 64, 0}, 8) == probs);
  }
  SUBCASE("random prior matches the crop-resize oracle bitwise") {
    Rng rng(2);
    for (int trial = 0; trial < 30; ++trial) {
      const Tensor probs = oracle::random_tensor<float>(rng, {rng.range(2, 4), 8, 8}, 0, 1);
      const Roi r = oracle::random_box(rng, 64, 64, 8);
      const int m = rng.range(1, 40);
      CHECK(crop_prior(sem_from_probs(probs), r, m) == oracle::crop(probs, 8, r, m));
    }
  }
  SUBCASE("crop reads probabilities, not logits") {
    SemanticHeadOutput s;
    s.scores = Tensor({2, 2, 2}, 5.0f);
    s.probs = Tensor({2, 2, 2}, 0.5f);
    const Tensor crop = crop_prior(s, Roi{0, 0, 16, 16, 0}, 4);
    for (float v : crop.values()) CHECK(v == 0.5f);
  }
}

TEST_CASE("bayes_combine") {
  Rng rng(3);
  const Shape s = {4, 6, 6};
  const RoiLikelihood lik = random_lik(rng, s);

  SUBCASE("uninformative prior leaves the posterior unchanged") {
    const auto post = bayes_combine(Tensor(s, 1.0f), lik);
    CHECK(post.inside == lik.inside);
    CHECK(post.outside == lik.outside);
  }
  SUBCASE("zero prior vetoes a category") {
    Tensor prior = oracle::random_tensor<float>(rng, s, 0, 1);
    std::fill_n(prior.plane(2), 36, 0.0f);
    const auto post = bayes_combine(prior, lik);
    for (int i = 0; i < 36; ++i) CHECK(post.inside.plane(2)[i] == 0.0f);
    CHECK(post.outside == lik.outside);
  }
  SUBCASE("random 3x3 maps match the product oracle") {
    const Tensor prior = oracle::random_tensor<float>(rng, {2, 3, 3}, 0, 1);
    const RoiLikelihood small = random_lik(rng, {2, 3, 3});
    const auto post = bayes_combine(prior, small);
    for (std::size_t i = 0; i < prior.size(); ++i) {
      CHECK(std::abs(post.inside[i] - static_cast<double>(prior[i]) * small.inside[i]) <= 1e-7);
    }
  }
  SUBCASE("shape mismatch") {
    CHECK_THROWS_AS(bayes_combine(Tensor({4, 5, 5}), lik), ShapeError);
  }
  SUBCASE("backward formulas") {
    const Tensor prior = oracle::random_tensor<float>(rng, s, 0, 1);
    const RoiPosterior up{oracle::random_tensor<float>(rng, s), oracle::random_tensor<float>(rng, s)};
    const auto g = bayes_combine_backward(prior, lik, up);
    CHECK(g.prior == multiply(up.inside, lik.inside));
    CHECK(g.likelihood.inside == multiply(up.inside, prior));
    CHECK(g.likelihood.outside == up.outside);
  }
}

TEST_CASE("property: prior monotonicity with non-negative likelihood") {
  Rng rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    const Shape s = {3, 4, 4};
    const RoiLikelihood lik{oracle::random_tensor<float>(rng, s, 0, 5), oracle::random_tensor<float>(rng, s)};
    const Tensor p = oracle::random_tensor<float>(rng, s, 0, 0.5);
    Tensor q = p;
    for (auto& v : q.data()) v += static_cast<float>(rng.uniform(0, 0.5));
    const auto a = bayes_combine(p, lik);
    const auto b = bayes_combine(q, lik);
    for (std::size_t i = 0; i < p.size(); ++i) CHECK(b.inside[i] >= a.inside[i]);
  }
}

TEST_CASE("mask_and_score") {
  SUBCASE("equal inside and outside gives one half") {
    Rng rng(5);
    const Tensor x = oracle::random_tensor<float>(rng, {3, 5, 5});
    const auto s = mask_and_score(RoiPosterior{x, x});
    for (float v : s.fg_prob.values()) CHECK(v == 0.5f);
  }
  SUBCASE("dominant category wins") {
    Tensor in({4, 3, 3}), out({4, 3, 3});
    std::fill_n(in.plane(2), 9, 10.0f);
    std::fill_n(out.plane(2), 9, -10.0f);
    const auto s = mask_and_score(RoiPosterior{in, out});
    CHECK(argmax_category(s) == 2);
  }
  SUBCASE("matches the scalar oracle on a 2-category 4x4 posterior") {
    Rng rng(6);
    for (int trial = 0; trial < 20; ++trial) {
      const Tensor in = oracle::random_tensor<float>(rng, {2, 4, 4}, -4, 4);
      const Tensor out = oracle::random_tensor<float>(rng, {2, 4, 4}, -4, 4);
      const auto s = mask_and_score(RoiPosterior{in, out});
      const auto o = oracle::mask_and_score(in, out);
      for (std::size_t i = 0; i < o.fg.size(); ++i) CHECK(std::abs(s.fg_prob[i] - o.fg[i]) <= 1e-6);
      for (std::size_t c = 0; c < 2; ++c) {
        CHECK(std::abs(s.class_logits[c] - o.logits[c]) <= 1e-6);
        CHECK(std::abs(s.class_scores[c] - o.probs[c]) <= 1e-6);
      }
    }
  }
  SUBCASE("output ranges") {
    Rng rng(7);
    const auto s = mask_and_score(RoiPosterior{oracle::random_tensor<float>(rng, {4, 6, 6}, -80, 80),
                                               oracle::random_tensor<float>(rng, {4, 6, 6}, -80, 80)});
    for (float v : s.fg_prob.values()) {
      CHECK(v >= 0.0f);
      CHECK(v <= 1.0f);
    }
    double sum = 0;
    for (float v : s.class_scores) sum += v;
    CHECK(std::abs(sum - 1.0) <= 1e-6);
  }
  SUBCASE("uniform scores tie to background") {
    const auto s = mask_and_score(RoiPosterior{Tensor({4, 2, 2}), Tensor({4, 2, 2})});
    CHECK(argmax_category(s) == 0);
  }
  SUBCASE("max ties route gradient to inside") {
    const Tensor x({1, 1, 1}, 0.3f);
    const RoiPosterior post{x, x};
    RoiScoresGrad g;
    g.class_logits = {1.0f};
    const auto back = mask_and_score_backward(post, mask_and_score(post), g);
    CHECK(back.inside[0] == 1.0f);
    CHECK(back.outside[0] == 0.0f);
  }
}

TEST_CASE("property: shift invariances") {
  Rng rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    const Tensor in = oracle::random_tensor<float>(rng, {3, 4, 4}, -2, 2);
    const Tensor out = oracle::random_tensor<float>(rng, {3, 4, 4}, -2, 2);
    const float shift = static_cast<float>(rng.uniform(-3, 3));
    Tensor in2 = in, out2 = out;
    for (auto& v : in2.data()) v += shift;
    for (auto& v : out2.data()) v += shift;
    const auto a = mask_and_score(RoiPosterior{in, out});
    const auto b = mask_and_score(RoiPosterior{in2, out2});
    for (std::size_t i = 0; i < a.fg_prob.size(); ++i) CHECK(std::abs(a.fg_prob[i] - b.fg_prob[i]) <= 1e-5);
    CHECK(argmax_category(a) == argmax_category(b));
  }
}

}  // TEST_SUITE
