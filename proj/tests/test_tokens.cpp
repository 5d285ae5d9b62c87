#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <set>

#include "ovpipe/tokens.hpp"

using namespace ovpipe;

TEST_CASE("patch variance of a constant image is zero", "[tokens]") {
  std::vector<float> pixels(28 * 28 * 3, 0.37f);
  Rng rng(1);
  const auto grid = patch_variances(pixels, 28, 28, 3, 14, 0.0, rng);
  CHECK(grid.rows == 2);
  CHECK(grid.cols == 2);
  for (double v : grid.variances) CHECK(v == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("checkerboard patch has variance 0.25", "[tokens]") {
  // One 4x4 patch, single channel, alternating 0/1.
  std::vector<float> pixels(16);
  for (int y = 0; y < 4; ++y) {
    for (int x = 0; x < 4; ++x) pixels[y * 4 + x] = static_cast<float>((x + y) % 2);
  }
  Rng rng(1);
  const auto grid = patch_variances(pixels, 4, 4, 1, 4, 0.0, rng);
  REQUIRE(grid.variances.size() == 1);
  CHECK(grid.variances[0] == Catch::Approx(0.25));
}

TEST_CASE("noise on a constant image stays within the uniform variance bound",
          "[tokens]") {
  std::vector<float> pixels(56 * 56 * 3, 0.5f);
  Rng rng(42);
  const auto grid = patch_variances(pixels, 56, 56, 3, 14, 0.01, rng);
  // Population variance of U(0, 0.01) is (0.01)^2 / 12 ~ 8.33e-6; per-patch
  // sample variance fluctuates around it.
  const double bound = 0.01 * 0.01 / 12.0;
  for (double v : grid.variances) {
    CHECK(v <= bound * 1.5);
    CHECK(v >= bound * 0.5);
  }
}

TEST_CASE("non-divisible images are padded with zeros", "[tokens]") {
  // 5x5 single-channel constant image with patch 4 -> 2x2 grid; padded
  // patches mix 1.0 content with 0.0 padding, so they have variance.
  std::vector<float> pixels(25, 1.0f);
  Rng rng(1);
  const auto grid = patch_variances(pixels, 5, 5, 1, 4, 0.0, rng);
  CHECK(grid.rows == 2);
  CHECK(grid.cols == 2);
  CHECK(grid.at(0, 0) == Catch::Approx(0.0).margin(1e-12));
  CHECK(grid.at(0, 1) > 0.0);
  CHECK(grid.at(1, 0) > 0.0);
}

TEST_CASE("drop_mask keeps the highest-variance half", "[tokens]") {
  PatchGrid grid;
  grid.rows = 1;
  grid.cols = 4;
  grid.patch_px = 1;
  grid.variances = {0.0, 1.0, 0.5, 0.2};
  const auto mask = drop_mask(grid, 0.5);
  CHECK(mask.kept_count == 2);
  CHECK(mask.keep == std::vector<std::uint8_t>{0, 1, 1, 0});
}

TEST_CASE("drop_mask at the full-resolution grid keeps exactly half", "[tokens]") {
  PatchGrid grid;
  grid.rows = 72;
  grid.cols = 72;
  grid.patch_px = 14;
  grid.variances.resize(5184);
  Rng rng(3);
  for (auto& v : grid.variances) v = rng.uniform();
  REQUIRE(grid.variances.size() == 5184);
  const auto mask = drop_mask(grid, 0.5);
  CHECK(mask.kept_count == 2592);
}

TEST_CASE("drop_mask with rate 0 keeps everything", "[tokens]") {
  PatchGrid grid;
  grid.rows = 2;
  grid.cols = 3;
  grid.patch_px = 1;
  grid.variances = {0.1, 0.0, 0.3, 0.3, 0.2, 0.0};
  const auto mask = drop_mask(grid, 0.0);
  CHECK(mask.kept_count == 6);
  CHECK(std::count(mask.keep.begin(), mask.keep.end(), 1) == 6);
  CHECK_THROWS_AS(drop_mask(grid, 1.0), std::invalid_argument);
}

TEST_CASE("kept variances dominate dropped variances", "[tokens]") {
  Rng rng(99);
  for (int round = 0; round < 500; ++round) {
    PatchGrid grid;
    grid.rows = 1 + static_cast<int>(rng.uniform_int(12));
    grid.cols = 1 + static_cast<int>(rng.uniform_int(12));
    grid.patch_px = 1;
    grid.variances.resize(static_cast<std::size_t>(grid.rows) * grid.cols);
    for (auto& v : grid.variances) v = rng.uniform();
    const double rate = rng.uniform(0.0, 0.95);
    const auto mask = drop_mask(grid, rate);
    const std::size_t n = grid.variances.size();
    const auto expected_kept = static_cast<std::size_t>(
        std::ceil(static_cast<double>(n) * (1.0 - rate)));
    CHECK(static_cast<std::size_t>(mask.kept_count) == expected_kept);
    double min_kept = 2.0, max_dropped = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (mask.keep[i]) {
        min_kept = std::min(min_kept, grid.variances[i]);
      } else {
        max_dropped = std::max(max_dropped, grid.variances[i]);
      }
    }
    if (max_dropped >= 0.0 && min_kept <= 1.0) CHECK(min_kept >= max_dropped);
  }
}

TEST_CASE("drop_mask is permutation-equivariant for distinct variances",
          "[tokens]") {
  Rng rng(123);
  PatchGrid grid;
  grid.rows = 4;
  grid.cols = 5;
  grid.patch_px = 1;
  grid.variances.resize(20);
  for (std::size_t i = 0; i < 20; ++i) grid.variances[i] = (i + 1) * 0.01;
  const auto base = drop_mask(grid, 0.35);

  std::vector<std::size_t> perm(20);
  std::iota(perm.begin(), perm.end(), 0);
  for (std::size_t i = 19; i > 0; --i) {
    std::swap(perm[i], perm[rng.uniform_int(i + 1)]);
  }
  PatchGrid shuffled = grid;
  for (std::size_t i = 0; i < 20; ++i) {
    shuffled.variances[perm[i]] = grid.variances[i];
  }
  const auto shuffled_mask = drop_mask(shuffled, 0.35);
  for (std::size_t i = 0; i < 20; ++i) {
    CHECK(shuffled_mask.keep[perm[i]] == base.keep[i]);
  }
}

TEST_CASE("select_instances takes top-k by objectness", "[tokens]") {
  const std::vector<double> objectness = {0.1, 0.9, 0.5};
  const std::vector<double> class_scores = {0.11, 0.99, 0.55};
  const auto sel = select_instances(objectness, class_scores, 2);
  CHECK(sel.selected_indices == std::vector<int>{1, 2});
  CHECK(sel.objectness_targets == std::vector<double>{0.99, 0.55});

  const auto all = select_instances(objectness, class_scores, 3);
  CHECK(all.selected_indices == std::vector<int>{1, 2, 0});
  CHECK(all.objectness_targets == std::vector<double>{0.99, 0.55, 0.11});

  CHECK_THROWS_AS(select_instances(objectness, class_scores, 4),
                  std::invalid_argument);
}

TEST_CASE("the default top-k is about a tenth of the token budget", "[tokens]") {
  // 512 of 5184 tokens.
  CHECK(512.0 / 5184.0 == Catch::Approx(0.0988).margin(0.001));
}

TEST_CASE("inference mode drops nothing and selects everything", "[tokens]") {
  PatchGrid grid;
  grid.rows = 2;
  grid.cols = 2;
  grid.patch_px = 1;
  grid.variances = {0.4, 0.1, 0.3, 0.2};
  const auto inference = drop_mask(grid, 0.5, TrainingMode::inference);
  CHECK(inference.kept_count == 4);
  const auto train = drop_mask(grid, 0.5, TrainingMode::train);
  CHECK(train.kept_count == 2);

  const std::vector<double> objectness = {0.1, 0.9, 0.5};
  const std::vector<double> class_scores = {0.2, 0.8, 0.6};
  CHECK(select_instances(objectness, class_scores, 1, TrainingMode::inference)
            .selected_indices.size() == 3);
  CHECK(select_instances(objectness, class_scores, 1, TrainingMode::train)
            .selected_indices == std::vector<int>{1});
}

TEST_CASE("select_instances is invariant under monotone objectness transforms",
          "[tokens]") {
  Rng rng(2024);
  for (int round = 0; round < 300; ++round) {
    const std::size_t n = 1 + rng.uniform_int(40);
    std::vector<double> objectness(n), class_scores(n), warped(n);
    for (std::size_t i = 0; i < n; ++i) {
      objectness[i] = rng.uniform();
      class_scores[i] = rng.uniform();
      warped[i] = 2.0 * objectness[i] + 1.0;
    }
    const int k = static_cast<int>(rng.uniform_int(n + 1));
    const auto a = select_instances(objectness, class_scores, k);
    const auto b = select_instances(warped, class_scores, k);
    CHECK(a.selected_indices == b.selected_indices);
  }
}
