#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <map>

#include "ovpipe/store.hpp"

using namespace ovpipe;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("ovpipe_store_test_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter()++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  static int& counter() {
    static int c = 0;
    return c;
  }
};

ImageRecord sample_image(const std::string& id, Rng& rng) {
  ImageRecord img;
  img.id = id;
  img.width = 3 + static_cast<int>(rng.uniform_int(6));
  img.height = 3 + static_cast<int>(rng.uniform_int(6));
  img.channels = rng.uniform() < 0.3 ? 1 : 3;
  img.pixels.resize(static_cast<std::size_t>(img.width) * img.height * img.channels);
  for (auto& p : img.pixels) p = static_cast<float>(rng.uniform());
  img.alt_text = "alt text " + id;
  if (rng.uniform() < 0.5) img.language = "en";
  return img;
}

}  // namespace

TEST_CASE("shard_of is deterministic and total", "[store]") {
  CHECK(shard_of("image-123", 16) == shard_of("image-123", 16));
  CHECK(shard_of("anything", 1) == 0);
  CHECK_THROWS_AS(shard_of("x", 0), std::invalid_argument);
}

TEST_CASE("shard_of spreads ids evenly", "[store]") {
  const int shards = 16;
  const int n = 100000;
  std::vector<int> counts(shards, 0);
  for (int i = 0; i < n; ++i) {
    counts[shard_of("img-" + std::to_string(i), shards)]++;
  }
  const double expected = static_cast<double>(n) / shards;
  for (int c : counts) {
    CHECK(std::abs(c - expected) < expected * 0.05);
  }
}

TEST_CASE("record codecs round-trip every record type", "[store]") {
  Rng rng(852);
  for (int i = 0; i < 200; ++i) {
    const auto img = sample_image("img" + std::to_string(i), rng);
    const auto back = decode_image(encode_image(img));
    CHECK(back.id == img.id);
    CHECK(back.alt_text == img.alt_text);
    CHECK(back.language == img.language);
    CHECK(back.pixels == img.pixels);
  }

  QuerySet qs{"img1", {"red heron", "heron"}, QuerySource::ngram};
  const auto qs2 = decode_query_set(encode_query_set(qs));
  CHECK(qs2.image_id == qs.image_id);
  CHECK(qs2.queries == qs.queries);

  AnnotatedImage a{"img1",
                   {{Box{0.1, 0.2, 0.4, 0.5}, "red heron", 0.75,
                     AnnotationOrigin::ngram}}};
  const auto a2 = decode_annotated(encode_annotated(a));
  CHECK(a2.image_id == a.image_id);
  CHECK(a2.annotations == a.annotations);

  GtImage gt{"img1", {{"dog", Box{0.3, 0.3, 0.6, 0.6}}}};
  const auto gt2 = decode_gt(encode_gt(gt));
  CHECK(gt2.image_id == gt.image_id);
  CHECK(gt2.items == gt.items);

  MosaicExample m;
  m.id = "m0";
  m.width = 4;
  m.height = 4;
  m.channels = 3;
  m.composite.assign(48, 0.5f);
  m.padding_mask.assign(16, 0);
  m.padding_mask[15] = 1;
  m.layout = {{0, "img1", AffineMap{0.5, 0.5, 0.0, 0.0}}};
  m.annotations = {{Box{0.1, 0.1, 0.2, 0.2}, "dog", 0.9, AnnotationOrigin::ngram}};
  const auto m2 = decode_mosaic(encode_mosaic(m));
  CHECK(m2.id == m.id);
  CHECK(m2.composite == m.composite);
  CHECK(m2.padding_mask == m.padding_mask);
  CHECK(m2.layout.size() == 1);
  CHECK(m2.layout[0].affine == m.layout[0].affine);
  CHECK(m2.annotations == m.annotations);
}

TEST_CASE("stage write/read round-trips 1000 mixed records byte-exactly", "[store]") {
  TempDir dir;
  PipelineConfig cfg;
  Rng rng(3141);
  std::vector<Record> originals;
  {
    StageWriter writer(dir.path / "raw", "testset", Stage::raw, 4, cfg);
    for (int i = 0; i < 1000; ++i) {
      const std::string id = "rec-" + std::to_string(i);
      Record rec;
      switch (rng.uniform_int(3)) {
        case 0: rec = encode_image(sample_image(id, rng)); break;
        case 1: rec = encode_query_set(QuerySet{id, {"a b", "b"}, QuerySource::ngram}); break;
        default:
          rec = encode_annotated(AnnotatedImage{
              id, {{Box{0.1, 0.1, 0.5, 0.5}, "x", rng.uniform(), AnnotationOrigin::ngram}}});
      }
      writer.add(id, rec);
      originals.push_back(rec);
    }
    const Manifest manifest = writer.finish();
    std::uint64_t total = 0;
    for (const auto& s : manifest.shards) total += s.records;
    CHECK(total == 1000);
  }

  // Multiset comparison: sharding reorders across files but each record
  // must come back byte-identical.
  std::multiset<std::string> want;
  for (const auto& r : originals) {
    want.insert(std::string(1, static_cast<char>(r.type)) + r.payload);
  }
  std::multiset<std::string> got;
  StageReader reader(dir.path / "raw");
  reader.for_each([&](const Record& rec) {
    got.insert(std::string(1, static_cast<char>(rec.type)) + rec.payload);
  });
  CHECK(got == want);
}

TEST_CASE("empty stage produces a valid manifest with zero counts", "[store]") {
  TempDir dir;
  PipelineConfig cfg;
  StageWriter writer(dir.path / "raw", "testset", Stage::raw, 2, cfg);
  const Manifest manifest = writer.finish();
  CHECK(manifest.shards.size() == 2);
  for (const auto& s : manifest.shards) CHECK(s.records == 0);
  StageReader reader(dir.path / "raw");
  int count = 0;
  reader.for_each([&](const Record&) { ++count; });
  CHECK(count == 0);
  CHECK(reader.manifest().config_hash == config_hash(cfg));
}

TEST_CASE("a corrupted byte is reported with shard and record index", "[store]") {
  TempDir dir;
  PipelineConfig cfg;
  {
    StageWriter writer(dir.path / "raw", "testset", Stage::raw, 1, cfg);
    Rng rng(5);
    for (int i = 0; i < 10; ++i) {
      writer.add("rec-" + std::to_string(i),
                 encode_image(sample_image("rec-" + std::to_string(i), rng)));
    }
    writer.finish();
  }
  const fs::path shard = dir.path / "raw" / "shard-00000.bin";
  {
    std::fstream f(shard, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(200);
    char byte = 0;
    f.seekg(200);
    f.read(&byte, 1);
    byte ^= 0x40;
    f.seekp(200);
    f.write(&byte, 1);
  }
  StageReader reader(dir.path / "raw");
  CHECK_THROWS_WITH(reader.for_each([](const Record&) {}),
                    Catch::Matchers::ContainsSubstring("shard-00000.bin") &&
                        Catch::Matchers::ContainsSubstring("CRC"));
}

TEST_CASE("manifest record-count mismatch is detected", "[store]") {
  TempDir dir;
  PipelineConfig cfg;
  {
    StageWriter writer(dir.path / "raw", "testset", Stage::raw, 1, cfg);
    Rng rng(6);
    for (int i = 0; i < 5; ++i) {
      writer.add("r" + std::to_string(i),
                 encode_image(sample_image("r" + std::to_string(i), rng)));
    }
    writer.finish();
  }
  // Tamper with the manifest count.
  const fs::path manifest_path = dir.path / "raw" / "manifest.json";
  auto j = nlohmann::json::parse(std::ifstream(manifest_path));
  j["shards"][0]["records"] = 4;
  std::ofstream(manifest_path) << j.dump();
  StageReader reader(dir.path / "raw");
  CHECK_THROWS_WITH(reader.for_each([](const Record&) {}),
                    Catch::Matchers::ContainsSubstring("manifest expects 4"));
}
