#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "biseg/image_io.hpp"
#include "biseg/ops.hpp"
#include "biseg/tensor_io.hpp"
#include "oracles.hpp"

using namespace biseg;

TEST_SUITE("tensor") {

TEST_CASE("shape bookkeeping") {
  Tensor t({2, 3, 4});
  CHECK(t.size() == 24);
  CHECK(t.ndim() == 3);
  Tensor scalar;
  CHECK(scalar.ndim() == 0);
  CHECK(scalar.size() == 1);
  CHECK_THROWS_AS(Tensor({2, 0}), ShapeError);
  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<float>(3)), ShapeError);
  GradPair gp(Tensor({3, 2}, 1.5f));
  CHECK(gp.grad.shape() == gp.value.shape());
  CHECK(gp.grad.values() == std::vector<float>(6, 0.0f));
}

TEST_CASE("elementwise helpers reject mismatched shapes") {
  Tensor a({2, 3}), b({3, 2});
  CHECK_THROWS_AS(add(a, b), ShapeError);
  CHECK_THROWS_AS(multiply(a, b), ShapeError);
  try {
    add(Tensor({2, 3, 4}), Tensor({2, 5, 4}));
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("dimension 1") != std::string::npos);
  }
}

TEST_CASE("conv2d identity kernel") {
  Tensor in({1, 3, 3});
  for (std::size_t i = 0; i < in.size(); ++i) in[i] = static_cast<float>(i) - 4.0f;
  const Tensor out = conv2d(in, Tensor({1, 1, 1, 1}, 1.0f), Tensor({1}), ConvSpec{1, 0});
  CHECK(out == in);
}

TEST_CASE("conv2d all-ones counts overlap") {
  const Tensor out = conv2d(Tensor({1, 4, 4}, 1.0f), Tensor({1, 1, 3, 3}, 1.0f), Tensor({1}), ConvSpec{1, 1});
  CHECK(out.shape() == Shape{1, 4, 4});
  CHECK(out.at(0, 0, 0) == 4.0f);
  CHECK(out.at(0, 0, 3) == 4.0f);
  CHECK(out.at(0, 1, 1) == 9.0f);
  CHECK(out.at(0, 2, 2) == 9.0f);
  CHECK(out.at(0, 0, 1) == 6.0f);
}

TEST_CASE("conv2d matches the nested-loop oracle on 2x5x5 / 3x2x3x3") {
  Rng rng(11);
  const Tensor x = oracle::random_tensor<float>(rng, {2, 5, 5});
  const Tensor w = oracle::random_tensor<float>(rng, {3, 2, 3, 3});
  const Tensor b = oracle::random_tensor<float>(rng, {3});
  const Tensor got = conv2d(x, w, b, ConvSpec{1, 0});
  const Tensor want = oracle::conv2d(x, w, b, 1, 0);
  REQUIRE(got.shape() == want.shape());
  for (std::size_t i = 0; i < got.size(); ++i) CHECK(std::abs(got[i] - want[i]) <= 1e-6);
}

TEST_CASE("conv2d shape errors name the dimension") {
  CHECK_THROWS_AS(conv2d(Tensor({2, 5, 5}), Tensor({3, 3, 3, 3}), Tensor({3}), ConvSpec{}), ShapeError);
  CHECK_THROWS_AS(conv2d(Tensor({2, 5, 5}), Tensor({3, 2, 3, 3}), Tensor({4}), ConvSpec{}), ShapeError);
  CHECK_THROWS_AS(conv2d(Tensor({1, 2, 2}), Tensor({1, 1, 3, 3}), Tensor({1}), ConvSpec{1, 0}), ShapeError);
  try {
    conv2d(Tensor({2, 5, 5}), Tensor({3, 4, 3, 3}), Tensor({3}), ConvSpec{});
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("channel") != std::string::npos);
  }
}

TEST_CASE("relu forward and subgradient") {
  const Tensor x({3}, std::vector<float>{-1, 0, 2});
  CHECK(relu(x).values() == std::vector<float>{0, 0, 2});
  const Tensor pos({2, 2}, std::vector<float>{0.5f, 1, 2, 3});
  CHECK(relu(pos) == pos);
  const Tensor probe({3}, std::vector<float>{-0.5f, 0.5f, 0.0f});
  const Tensor g = relu_backward(probe, Tensor({3}, 1.0f));
  CHECK(g.values() == std::vector<float>{0, 1, 0});
}

TEST_CASE("softmax_channels") {
  SUBCASE("single channel is exactly one") {
    Rng rng(3);
    const Tensor p = softmax_channels(oracle::random_tensor<float>(rng, {1, 3, 4}, -50, 50));
    for (float v : p.values()) CHECK(v == 1.0f);
  }
  SUBCASE("symmetric logits") {
    const Tensor p = softmax_channels(Tensor({2, 1, 1}));
    CHECK(p[0] == 0.5f);
    CHECK(p[1] == 0.5f);
  }
  SUBCASE("large logits stay finite") {
    const Tensor p = softmax_channels(Tensor({2, 1, 1}, std::vector<float>{1000, 0}));
    CHECK(p[0] == 1.0f);
    CHECK(p[1] >= 0.0f);
    CHECK(p[1] < 1e-30f);
    CHECK(all_finite(p));
  }
  SUBCASE("columns sum to one") {
    Rng rng(4);
    for (int trial = 0; trial < 50; ++trial) {
      const int c = rng.range(1, 6), h = rng.range(1, 5), w = rng.range(1, 5);
      const Tensor p = softmax_channels(oracle::random_tensor<float>(rng, {c, h, w}, -20, 20));
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          double s = 0;
          for (int ch = 0; ch < c; ++ch) {
            CHECK(p.at(ch, y, x) >= 0.0f);
            s += p.at(ch, y, x);
          }
          CHECK(std::abs(s - 1.0) <= 1e-6);
        }
      }
    }
  }
}

TEST_CASE("upsample_x2") {
  SUBCASE("constant map") {
    const Tensor up = upsample_x2(Tensor({2, 3, 5}, 3.0f));
    CHECK(up.shape() == Shape{2, 6, 10});
    for (float v : up.values()) CHECK(v == doctest::Approx(3.0f));
  }
  SUBCASE("1x1 map") {
    const Tensor up = upsample_x2(Tensor({1, 1, 1}, 7.0f));
    CHECK(up.values() == std::vector<float>(4, 7.0f));
  }
  SUBCASE("matches the per-pixel oracle") {
    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
      const Tensor x = oracle::random_tensor<float>(rng, {rng.range(1, 3), rng.range(1, 6), rng.range(1, 6)});
      const Tensor got = upsample_x2(x);
      const Tensor want = oracle::upsample_x2(x);
      for (std::size_t i = 0; i < got.size(); ++i) CHECK(std::abs(got[i] - want[i]) <= 1e-6);
    }
  }
  SUBCASE("corner alignment") {
    Rng rng(6);
    const Tensor x = oracle::random_tensor<float>(rng, {1, 3, 3});
    const Tensor up = upsample_x2(x);
    CHECK(up.at(0, 0, 0) == x.at(0, 0, 0));
    CHECK(up.at(0, 5, 5) == doctest::Approx(x.at(0, 2, 2)));
  }
  SUBCASE("backward is the adjoint") {
    Rng rng(7);
    const Tensor x = oracle::random_tensor<float>(rng, {2, 3, 4});
    const Tensor g = oracle::random_tensor<float>(rng, {2, 6, 8});
    const Tensor gx = upsample_x2_backward(g, x.shape());
    double lhs = 0, rhs = 0;
    const Tensor up = upsample_x2(x);
    for (std::size_t i = 0; i < up.size(); ++i) lhs += static_cast<double>(up[i]) * g[i];
    for (std::size_t i = 0; i < x.size(); ++i) rhs += static_cast<double>(x[i]) * gx[i];
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-5));
  }
}

TEST_CASE("property: ops keep finite inputs finite") {
  Rng rng(8);
  for (int trial = 0; trial < 30; ++trial) {
    const Tensor x = oracle::random_tensor<float>(rng, {2, 6, 6}, -1e3, 1e3);
    CHECK(all_finite(relu(x)));
    CHECK(all_finite(softmax_channels(x)));
    CHECK(all_finite(upsample_x2(x)));
    CHECK(all_finite(conv2d(x, oracle::random_tensor<float>(rng, {3, 2, 3, 3}), Tensor({3}), ConvSpec{2, 1})));
  }
}

TEST_CASE("tensor file round trip") {
  Rng rng(9);
  const Tensor t = oracle::random_tensor<float>(rng, {3, 4, 5}, -1e6, 1e6);
  const auto bytes = encode_tensor(t);
  CHECK(bytes.size() == 4 + 4 + 1 + 1 + 3 * 4 + t.size() * 4);
  CHECK(decode_tensor(bytes) == t);

  const Tensor scalar({}, std::vector<float>{-2.5f});
  CHECK(decode_tensor(encode_tensor(scalar)) == scalar);

  const auto dir = std::filesystem::temp_directory_path() / "biseg_tensor_test";
  std::filesystem::create_directories(dir);
  save_tensor(dir / "t.ten", t);
  CHECK(load_tensor(dir / "t.ten") == t);
}

TEST_CASE("tensor file layout is little-endian and unpadded") {
  const Tensor t({2}, std::vector<float>{1.0f, -2.0f});
  const auto b = encode_tensor(t);
  const std::vector<std::uint8_t> want = {'B', 'T', 'E', 'N', 1, 0, 0, 0, 1, 1, 2, 0, 0, 0,
                                          0x00, 0x00, 0x80, 0x3f, 0x00, 0x00, 0x00, 0xc0};
  CHECK(b == want);
}

TEST_CASE("tensor file errors are distinct") {
  const Tensor t({2, 2}, 1.0f);
  auto expect_kind = [](std::vector<std::uint8_t> bytes, FormatError::Kind kind) {
    try {
      decode_tensor(bytes);
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      CHECK(e.kind() == kind);
    }
  };
  auto good = encode_tensor(t);
  auto bad_magic = good;
  bad_magic[0] = 'X';
  expect_kind(bad_magic, FormatError::Kind::kBadMagic);
  auto bad_version = good;
  bad_version[4] = 2;
  expect_kind(bad_version, FormatError::Kind::kBadVersion);
  auto bad_dtype = good;
  bad_dtype[8] = 7;
  expect_kind(bad_dtype, FormatError::Kind::kBadDtype);
  auto truncated = good;
  truncated.resize(truncated.size() - 1);
  expect_kind(truncated, FormatError::Kind::kTruncated);
  auto trailing = good;
  trailing.push_back(0);
  expect_kind(trailing, FormatError::Kind::kTrailingBytes);
  std::vector<std::uint8_t> huge = {'B', 'T', 'E', 'N', 1, 0, 0, 0, 1, 3};
  for (int d = 0; d < 3; ++d) {
    for (int i = 0; i < 4; ++i) huge.push_back(0xff);
  }
  expect_kind(huge, FormatError::Kind::kDimensionOverflow);
}

TEST_CASE("score-map set round trip with sidecar") {
  Rng rng(10);
  ScoreMapSet set{oracle::random_tensor<float>(rng, {2 * 4 * 3, 4, 4}), 2, 16, 3};
  const auto stem = std::filesystem::temp_directory_path() / "biseg_tensor_test" / "set1";
  save_score_map_set(stem, set);
  const ScoreMapSet back = load_score_map_set(stem);
  CHECK(back.maps == set.maps);
  CHECK(back.k == 2);
  CHECK(back.stride == 16);
  CHECK(back.num_categories == 3);
}

TEST_CASE("pnm round trip") {
  Raster rgb(5, 3, 3, 255);
  for (std::size_t i = 0; i < rgb.samples.size(); ++i) rgb.samples[i] = static_cast<std::uint16_t>(i * 7 % 256);
  const Raster back = decode_pnm(encode_pnm(rgb));
  CHECK(back.samples == rgb.samples);
  CHECK(back.channels == 3);

  Raster deep(4, 2, 1, 65535);
  for (std::size_t i = 0; i < deep.samples.size(); ++i) deep.samples[i] = static_cast<std::uint16_t>(i * 9001);
  const auto bytes = encode_pnm(deep);
  CHECK(std::string(bytes.begin(), bytes.begin() + 2) == "P5");
  CHECK(decode_pnm(bytes).samples == deep.samples);

  std::vector<std::uint8_t> junk = {'P', '3', '\n'};
  CHECK_THROWS_AS(decode_pnm(junk), DataError);
  auto cut = encode_pnm(rgb);
  cut.pop_back();
  CHECK_THROWS_AS(decode_pnm(cut), DataError);
}

}  // TEST_SUITE
