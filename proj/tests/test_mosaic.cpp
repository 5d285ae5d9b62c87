#include <catch2/catch_amalgamated.hpp>

#include <map>

#include "ovpipe/mosaic.hpp"

using namespace ovpipe;

namespace {

ImageRecord flat_image(const std::string& id, int w, int h, float value) {
  ImageRecord img;
  img.id = id;
  img.width = w;
  img.height = h;
  img.channels = 3;
  img.pixels.assign(static_cast<std::size_t>(w) * h * 3, value);
  return img;
}

}  // namespace

TEST_CASE("analytic mean tiles per example", "[mosaic]") {
  CHECK(mean_tiles_per_example({1, 2, 3, 4, 6}) == 13.2);
  CHECK(mean_tiles_per_example({1}) == 1.0);
  CHECK(mean_tiles_per_example({1, 2, 3}) == Catch::Approx(14.0 / 3.0));
}

TEST_CASE("sample_grid draws uniformly from the grid set", "[mosaic]") {
  Rng rng(5);
  std::map<int, int> counts;
  const std::vector<int> grids = {1, 2, 3, 4, 6};
  const int draws = 100000;
  for (int i = 0; i < draws; ++i) counts[sample_grid(grids, rng)]++;
  for (int g : grids) {
    CHECK(std::abs(counts[g] / static_cast<double>(draws) - 0.2) < 0.01);
  }
  Rng rng2(5);
  CHECK(sample_grid({1}, rng2) == 1);
}

TEST_CASE("resize_pad_tile fills the tile for a square image at scale 1", "[mosaic]") {
  const auto img = flat_image("a", 64, 64, 0.8f);
  const auto tile = resize_pad_tile(img, 32, 1.0);
  CHECK(tile.content_w == 32);
  CHECK(tile.content_h == 32);
  for (float v : tile.pixels) CHECK(v == Catch::Approx(0.8f));
  CHECK(tile.content_affine == AffineMap{1.0, 1.0, 0.0, 0.0});
}

TEST_CASE("resize_pad_tile pads right and bottom at scale 0.5", "[mosaic]") {
  const auto img = flat_image("a", 64, 64, 1.0f);
  const auto tile = resize_pad_tile(img, 32, 0.5);
  CHECK(tile.content_w == 16);
  CHECK(tile.content_h == 16);
  CHECK(tile.pixels[(0 * 32 + 0) * 3] == 1.0f);
  CHECK(tile.pixels[(0 * 32 + 16) * 3] == 0.0f);   // right padding
  CHECK(tile.pixels[(16 * 32 + 0) * 3] == 0.0f);   // bottom padding
  CHECK(tile.content_affine == AffineMap{0.5, 0.5, 0.0, 0.0});
}

TEST_CASE("resize_pad_tile preserves aspect for a wide image", "[mosaic]") {
  const auto img = flat_image("a", 64, 32, 1.0f);  // 2:1 wide
  const auto tile = resize_pad_tile(img, 32, 1.0);
  CHECK(tile.content_w == 32);
  CHECK(tile.content_h == 16);  // bottom half padded
}

TEST_CASE("resize_pad_tile shrinks tall images to fit the tile height", "[mosaic]") {
  const auto img = flat_image("a", 32, 64, 1.0f);  // 1:2 tall
  const auto tile = resize_pad_tile(img, 32, 1.0);
  CHECK(tile.content_h == 32);
  CHECK(tile.content_w == 16);  // right half padded
  CHECK_THROWS_AS(resize_pad_tile(img, 32, 0.0), std::invalid_argument);
}

TEST_CASE("1x1 mosaic at scale 1 keeps annotations unchanged", "[mosaic]") {
  PipelineConfig cfg;
  cfg.composite_px = 64;
  MosaicPlan plan;
  plan.example_id = "m0";
  plan.grid = 1;
  plan.tile_assignments = {"a"};
  plan.tile_scales = {1.0};
  const auto img = flat_image("a", 64, 64, 0.5f);
  std::map<std::string, AnnotatedImage> annos;
  const Box box{0.25, 0.25, 0.75, 0.75};
  annos["a"] = {"a", {{box, "dog", 0.9, AnnotationOrigin::ngram}}};
  const auto mosaic = assemble_mosaic(
      plan, [&](const std::string&) { return &img; }, annos, cfg);
  REQUIRE(mosaic.annotations.size() == 1);
  CHECK(mosaic.annotations[0].box == box);
  CHECK(mosaic.annotations[0].label == "dog");
  for (auto m : mosaic.padding_mask) CHECK(m == 0);
}

TEST_CASE("2x2 mosaic maps tile 0 into the top-left quadrant", "[mosaic]") {
  PipelineConfig cfg;
  cfg.composite_px = 64;
  MosaicPlan plan;
  plan.example_id = "m0";
  plan.grid = 2;
  plan.tile_assignments = {"a", "b", "c", "d"};
  plan.tile_scales = {1.0, 1.0, 1.0, 1.0};
  const auto img = flat_image("x", 32, 32, 0.5f);
  std::map<std::string, AnnotatedImage> annos;
  annos["a"] = {"a", {{Box{0.0, 0.0, 1.0, 1.0}, "dog", 0.9, AnnotationOrigin::ngram}}};
  const auto mosaic = assemble_mosaic(
      plan, [&](const std::string&) { return &img; }, annos, cfg);
  REQUIRE(mosaic.annotations.size() == 1);
  const Box& remapped = mosaic.annotations[0].box;
  CHECK(remapped.x0 == Catch::Approx(0.0));
  CHECK(remapped.y0 == Catch::Approx(0.0));
  CHECK(remapped.x1 == Catch::Approx(0.5));
  CHECK(remapped.y1 == Catch::Approx(0.5));
}

TEST_CASE("mosaic round-trip, padding fraction and area scaling", "[mosaic]") {
  PipelineConfig cfg;
  cfg.composite_px = 60;  // divisible by 1,2,3; 4 leaves a remainder column
  Rng rng(99);
  for (int round = 0; round < 30; ++round) {
    const int g = std::vector<int>{1, 2, 3, 4}[rng.uniform_int(4)];
    MosaicPlan plan;
    plan.example_id = "m";
    plan.grid = g;
    std::map<std::string, ImageRecord> images;
    std::map<std::string, AnnotatedImage> annos;
    for (int t = 0; t < g * g; ++t) {
      const std::string id = "img" + std::to_string(t);
      plan.tile_assignments.push_back(id);
      plan.tile_scales.push_back(rng.uniform(0.5, 1.0));
      const int w = 16 + static_cast<int>(rng.uniform_int(48));
      const int h = 16 + static_cast<int>(rng.uniform_int(48));
      images[id] = flat_image(id, w, h, 0.25f);
      AnnotatedImage a{id, {}};
      const int n = 1 + static_cast<int>(rng.uniform_int(3));
      for (int k = 0; k < n; ++k) {
        const double x0 = rng.uniform(0.0, 0.7);
        const double y0 = rng.uniform(0.0, 0.7);
        a.annotations.push_back({Box{x0, y0, x0 + rng.uniform(0.05, 0.3),
                                     y0 + rng.uniform(0.05, 0.3)},
                                 "q", 0.5, AnnotationOrigin::ngram});
      }
      annos[id] = a;
    }
    const auto mosaic = assemble_mosaic(
        plan,
        [&](const std::string& id) -> const ImageRecord* {
          auto it = images.find(id);
          return it == images.end() ? nullptr : &it->second;
        },
        annos, cfg);

    // Every output box is valid and inverse-maps to its source box.
    std::map<std::string, const MosaicLayoutEntry*> layout_of;
    for (const auto& e : mosaic.layout) layout_of[e.image_id] = &e;
    std::map<std::string, std::size_t> next_index;
    for (const auto& ann : mosaic.annotations) {
      CHECK(ann.box.valid());
    }
    // Walk layout entries in order; annotations were appended per tile.
    std::size_t cursor = 0;
    for (const auto& e : mosaic.layout) {
      const auto& source = annos[e.image_id].annotations;
      for (const auto& src : source) {
        REQUIRE(cursor < mosaic.annotations.size());
        const auto& ann = mosaic.annotations[cursor++];
        const Box back = transform_box(ann.box, e.affine.inverse());
        CHECK(std::abs(back.x0 - src.box.x0) < 1e-6);
        CHECK(std::abs(back.y0 - src.box.y0) < 1e-6);
        CHECK(std::abs(back.x1 - src.box.x1) < 1e-6);
        CHECK(std::abs(back.y1 - src.box.y1) < 1e-6);
        // Remapped area equals source area times the affine scale product.
        CHECK(ann.box.area() ==
              Catch::Approx(src.box.area() * e.affine.sx * e.affine.sy)
                  .margin(1e-6));
      }
    }
    CHECK(cursor == mosaic.annotations.size());

    // Padding fraction accounts exactly for the non-content area.
    double content_px = 0.0;
    const int res = cfg.composite_px;
    for (const auto& e : mosaic.layout) {
      content_px += e.affine.sx * res * e.affine.sy * res;
    }
    std::size_t padded = 0;
    for (auto m : mosaic.padding_mask) padded += m;
    const double expected = 1.0 - content_px / (static_cast<double>(res) * res);
    CHECK(static_cast<double>(padded) / (static_cast<double>(res) * res) ==
          Catch::Approx(expected).margin(1e-6));
  }
}

TEST_CASE("mosaic assembly is deterministic and errors on missing images", "[mosaic]") {
  PipelineConfig cfg;
  cfg.composite_px = 48;
  std::vector<std::string> ids;
  std::map<std::string, ImageRecord> images;
  std::map<std::string, AnnotatedImage> annos;
  for (int i = 0; i < 20; ++i) {
    const std::string id = "img" + std::to_string(i);
    ids.push_back(id);
    images[id] = flat_image(id, 24, 24, 0.1f * (i % 10));
    annos[id] = {id, {{Box{0.1, 0.1, 0.6, 0.6}, "q", 0.5, AnnotationOrigin::ngram}}};
  }
  auto lookup = [&](const std::string& id) -> const ImageRecord* {
    auto it = images.find(id);
    return it == images.end() ? nullptr : &it->second;
  };
  const auto plans_a = make_plans(ids, {1, 2, 3}, cfg, 7);
  const auto plans_b = make_plans(ids, {1, 2, 3}, cfg, 7);
  REQUIRE(!plans_a.empty());
  REQUIRE(plans_a.size() == plans_b.size());
  for (std::size_t i = 0; i < plans_a.size(); ++i) {
    CHECK(plans_a[i].tile_assignments == plans_b[i].tile_assignments);
    CHECK(plans_a[i].tile_scales == plans_b[i].tile_scales);
    const auto m1 = assemble_mosaic(plans_a[i], lookup, annos, cfg);
    const auto m2 = assemble_mosaic(plans_b[i], lookup, annos, cfg);
    CHECK(m1.composite == m2.composite);
    CHECK(m1.padding_mask == m2.padding_mask);
    CHECK(m1.annotations == m2.annotations);
  }

  MosaicPlan bad = plans_a[0];
  bad.tile_assignments[0] = "nope";
  CHECK_THROWS_WITH(assemble_mosaic(bad, lookup, annos, cfg),
                    Catch::Matchers::ContainsSubstring("nope"));
}

TEST_CASE("make_plans consumes ids in order and drops the remainder", "[mosaic]") {
  PipelineConfig cfg;
  std::vector<std::string> ids;
  for (int i = 0; i < 11; ++i) ids.push_back("i" + std::to_string(i));
  const auto plans = make_plans(ids, {2}, cfg, 3);  // 2x2 tiles -> 2 plans, 3 left over
  REQUIRE(plans.size() == 2);
  CHECK(plans[0].tile_assignments ==
        std::vector<std::string>{"i0", "i1", "i2", "i3"});
  CHECK(plans[1].tile_assignments ==
        std::vector<std::string>{"i4", "i5", "i6", "i7"});
  for (const auto& plan : plans) {
    for (double s : plan.tile_scales) {
      CHECK(s >= cfg.tile_scale_min);
      CHECK(s <= cfg.tile_scale_max);
    }
  }
}
