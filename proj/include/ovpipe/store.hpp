#pragma once
// Sharded, streaming persistence. Each shard is a flat sequence of
// CRC-protected records: u32 length (LE), u8 record type, payload, u32
// CRC-32 over type byte + payload. Metadata payloads are JSON lines;
// pixel payloads are raw little-endian float blocks with a dims header.
// A manifest.json per stage records per-shard counts, content hashes and
// the pipeline config snapshot that produced the data.

#include <json.hpp>
#include <zlib.h>

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ovpipe/core.hpp"
#include "ovpipe/label_space.hpp"
#include "ovpipe/mosaic.hpp"
#include "ovpipe/rng.hpp"

namespace ovpipe {

enum class Stage { raw, queried, annotated, filtered, mosaic, gt };

inline const char* to_string(Stage s) {
  switch (s) {
    case Stage::raw: return "raw";
    case Stage::queried: return "queried";
    case Stage::annotated: return "annotated";
    case Stage::filtered: return "filtered";
    case Stage::mosaic: return "mosaic";
    default: return "gt";
  }
}

inline Stage stage_from_string(std::string_view s) {
  if (s == "raw") return Stage::raw;
  if (s == "queried") return Stage::queried;
  if (s == "annotated") return Stage::annotated;
  if (s == "filtered") return Stage::filtered;
  if (s == "mosaic") return Stage::mosaic;
  if (s == "gt") return Stage::gt;
  throw std::invalid_argument("unknown stage: " + std::string(s));
}

// Stable shard assignment: FNV-1a of the id modulo the shard count.
inline std::uint32_t shard_of(std::string_view id, int shard_count) {
  if (shard_count <= 0) {
    throw std::invalid_argument("shard_of: shard_count must be positive");
  }
  return static_cast<std::uint32_t>(fnv1a64(id) %
                                    static_cast<std::uint64_t>(shard_count));
}

enum class RecordType : std::uint8_t {
  image = 1,
  query_set = 2,
  annotated = 3,
  gt = 4,
  mosaic = 5,
};

struct Record {
  RecordType type = RecordType::image;
  std::string payload;
};

namespace store_detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline std::uint32_t get_u32(const char* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t(static_cast<unsigned char>(p[i])) << (8 * i);
  return v;
}

inline void put_f32(std::string& out, float f) {
  std::uint32_t bits;
  std::memcpy(&bits, &f, 4);
  put_u32(out, bits);
}

inline float get_f32(const char* p) {
  const std::uint32_t bits = get_u32(p);
  float f;
  std::memcpy(&f, &bits, 4);
  return f;
}

inline void put_string(std::string& out, std::string_view s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.append(s);
}

struct Cursor {
  const std::string& bytes;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    if (pos + n > bytes.size()) throw std::runtime_error("record payload truncated");
  }
  std::uint32_t u32() {
    need(4);
    const std::uint32_t v = get_u32(bytes.data() + pos);
    pos += 4;
    return v;
  }
  float f32() {
    need(4);
    const float v = get_f32(bytes.data() + pos);
    pos += 4;
    return v;
  }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s = bytes.substr(pos, n);
    pos += n;
    return s;
  }
  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(bytes[pos++]);
  }
};

inline std::uint32_t crc32_of(std::string_view bytes, std::uint32_t seed = 0) {
  return static_cast<std::uint32_t>(
      ::crc32(seed, reinterpret_cast<const Bytef*>(bytes.data()),
              static_cast<uInt>(bytes.size())));
}

}  // namespace store_detail

// ---- record codecs ----

inline Record encode_image(const ImageRecord& img) {
  img.validate();
  Record r;
  r.type = RecordType::image;
  std::string& p = r.payload;
  store_detail::put_string(p, img.id);
  store_detail::put_string(p, img.alt_text);
  p.push_back(img.language ? 1 : 0);
  if (img.language) store_detail::put_string(p, *img.language);
  store_detail::put_u32(p, static_cast<std::uint32_t>(img.width));
  store_detail::put_u32(p, static_cast<std::uint32_t>(img.height));
  store_detail::put_u32(p, static_cast<std::uint32_t>(img.channels));
  for (float f : img.pixels) store_detail::put_f32(p, f);
  return r;
}

inline ImageRecord decode_image(const Record& r) {
  if (r.type != RecordType::image) throw std::runtime_error("record is not an image");
  store_detail::Cursor c{r.payload};
  ImageRecord img;
  img.id = c.str();
  img.alt_text = c.str();
  if (c.u8()) img.language = c.str();
  img.width = static_cast<int>(c.u32());
  img.height = static_cast<int>(c.u32());
  img.channels = static_cast<int>(c.u32());
  const std::size_t n =
      static_cast<std::size_t>(img.width) * img.height * img.channels;
  img.pixels.resize(n);
  for (std::size_t i = 0; i < n; ++i) img.pixels[i] = c.f32();
  img.validate();
  return img;
}

inline Record encode_query_set(const QuerySet& qs) {
  Record r;
  r.type = RecordType::query_set;
  r.payload = nlohmann::json(qs).dump();
  return r;
}

inline QuerySet decode_query_set(const Record& r) {
  if (r.type != RecordType::query_set) throw std::runtime_error("record is not a query set");
  return nlohmann::json::parse(r.payload).get<QuerySet>();
}

inline Record encode_annotated(const AnnotatedImage& a) {
  Record r;
  r.type = RecordType::annotated;
  r.payload = nlohmann::json(a).dump();
  return r;
}

inline AnnotatedImage decode_annotated(const Record& r) {
  if (r.type != RecordType::annotated) throw std::runtime_error("record is not annotations");
  return nlohmann::json::parse(r.payload).get<AnnotatedImage>();
}

struct GtImage {
  std::string image_id;
  std::vector<std::pair<std::string, Box>> items;  // (label, box)
};

inline Record encode_gt(const GtImage& gt) {
  Record r;
  r.type = RecordType::gt;
  nlohmann::json items = nlohmann::json::array();
  for (const auto& [label, box] : gt.items) {
    items.push_back({{"label", label}, {"box", box}});
  }
  r.payload = nlohmann::json{{"image_id", gt.image_id}, {"items", items}}.dump();
  return r;
}

inline GtImage decode_gt(const Record& r) {
  if (r.type != RecordType::gt) throw std::runtime_error("record is not ground truth");
  const auto j = nlohmann::json::parse(r.payload);
  GtImage gt;
  gt.image_id = j.at("image_id").get<std::string>();
  for (const auto& item : j.at("items")) {
    gt.items.emplace_back(item.at("label").get<std::string>(),
                          item.at("box").get<Box>());
  }
  return gt;
}

inline Record encode_mosaic(const MosaicExample& m) {
  Record r;
  r.type = RecordType::mosaic;
  std::string& p = r.payload;
  store_detail::put_string(p, m.id);
  store_detail::put_u32(p, static_cast<std::uint32_t>(m.width));
  store_detail::put_u32(p, static_cast<std::uint32_t>(m.height));
  store_detail::put_u32(p, static_cast<std::uint32_t>(m.channels));
  for (float f : m.composite) store_detail::put_f32(p, f);
  // Padding mask, packed 8 pixels per byte, row-major.
  const std::size_t npix = m.padding_mask.size();
  std::string mask((npix + 7) / 8, '\0');
  for (std::size_t i = 0; i < npix; ++i) {
    if (m.padding_mask[i]) mask[i / 8] |= static_cast<char>(1 << (i % 8));
  }
  p += mask;
  nlohmann::json layout = nlohmann::json::array();
  for (const auto& e : m.layout) {
    layout.push_back({{"tile", e.tile_index},
                      {"image_id", e.image_id},
                      {"affine", {{"sx", e.affine.sx},
                                  {"sy", e.affine.sy},
                                  {"tx", e.affine.tx},
                                  {"ty", e.affine.ty}}}});
  }
  const std::string meta =
      nlohmann::json{{"layout", layout}, {"annotations", m.annotations}}.dump();
  store_detail::put_string(p, meta);
  return r;
}

inline MosaicExample decode_mosaic(const Record& r) {
  if (r.type != RecordType::mosaic) throw std::runtime_error("record is not a mosaic");
  store_detail::Cursor c{r.payload};
  MosaicExample m;
  m.id = c.str();
  m.width = static_cast<int>(c.u32());
  m.height = static_cast<int>(c.u32());
  m.channels = static_cast<int>(c.u32());
  const std::size_t npix = static_cast<std::size_t>(m.width) * m.height;
  m.composite.resize(npix * m.channels);
  for (std::size_t i = 0; i < m.composite.size(); ++i) m.composite[i] = c.f32();
  m.padding_mask.resize(npix);
  c.need((npix + 7) / 8);
  for (std::size_t i = 0; i < npix; ++i) {
    m.padding_mask[i] =
        (static_cast<unsigned char>(r.payload[c.pos + i / 8]) >> (i % 8)) & 1;
  }
  c.pos += (npix + 7) / 8;
  const auto meta = nlohmann::json::parse(c.str());
  for (const auto& e : meta.at("layout")) {
    MosaicLayoutEntry entry;
    entry.tile_index = e.at("tile").get<int>();
    entry.image_id = e.at("image_id").get<std::string>();
    const auto& aff = e.at("affine");
    entry.affine = AffineMap{aff.at("sx").get<double>(), aff.at("sy").get<double>(),
                             aff.at("tx").get<double>(), aff.at("ty").get<double>()};
    m.layout.push_back(std::move(entry));
  }
  m.annotations = meta.at("annotations").get<std::vector<PseudoAnnotation>>();
  return m;
}

// ---- shard files ----

class ShardWriter {
 public:
  explicit ShardWriter(const std::filesystem::path& path)
      : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) throw std::runtime_error("cannot open shard for writing: " + path.string());
  }

  void write(const Record& record) {
    std::string framed;
    framed.reserve(record.payload.size() + 9);
    store_detail::put_u32(framed,
                          static_cast<std::uint32_t>(record.payload.size() + 1));
    framed.push_back(static_cast<char>(record.type));
    framed += record.payload;
    const std::uint32_t crc = store_detail::crc32_of(
        std::string_view(framed.data() + 4, framed.size() - 4));
    store_detail::put_u32(framed, crc);
    out_.write(framed.data(), static_cast<std::streamsize>(framed.size()));
    if (!out_) throw std::runtime_error("shard write failed: " + path_.string());
    file_crc_ = store_detail::crc32_of(framed, file_crc_);
    ++count_;
  }

  std::uint64_t record_count() const { return count_; }

  // Flushes and returns (record count, whole-file CRC-32 hex).
  std::pair<std::uint64_t, std::string> finish() {
    out_.flush();
    if (!out_) throw std::runtime_error("shard flush failed: " + path_.string());
    out_.close();
    char buf[9];
    std::snprintf(buf, sizeof(buf), "%08x", file_crc_);
    return {count_, std::string(buf)};
  }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
  std::uint64_t count_ = 0;
  std::uint32_t file_crc_ = 0;
};

struct ShardInfo {
  std::string path;  // relative to the stage directory
  std::uint64_t records = 0;
  std::string crc32;
};

struct Manifest {
  std::string dataset;
  Stage stage = Stage::raw;
  std::vector<ShardInfo> shards;
  PipelineConfig config;
  std::string config_hash;
};

inline void to_json(nlohmann::json& j, const ShardInfo& s) {
  j = nlohmann::json{{"path", s.path}, {"records", s.records}, {"crc32", s.crc32}};
}

inline void from_json(const nlohmann::json& j, ShardInfo& s) {
  s.path = j.at("path").get<std::string>();
  s.records = j.at("records").get<std::uint64_t>();
  s.crc32 = j.at("crc32").get<std::string>();
}

inline void to_json(nlohmann::json& j, const Manifest& m) {
  j = nlohmann::json{{"dataset", m.dataset},
                     {"stage", to_string(m.stage)},
                     {"shard_count", m.shards.size()},
                     {"shards", m.shards},
                     {"config", m.config},
                     {"config_hash", m.config_hash}};
}

inline void from_json(const nlohmann::json& j, Manifest& m) {
  m.dataset = j.at("dataset").get<std::string>();
  m.stage = stage_from_string(j.at("stage").get<std::string>());
  m.shards = j.at("shards").get<std::vector<ShardInfo>>();
  m.config = j.at("config").get<PipelineConfig>();
  m.config_hash = j.at("config_hash").get<std::string>();
}

// Streams records out of one shard without loading it fully, verifying
// per-record CRCs as it goes, and the record count plus whole-file CRC
// against the manifest entry at end of stream.
class ShardReader {
 public:
  ShardReader(const std::filesystem::path& path, const ShardInfo& expect)
      : path_(path), expect_(expect), in_(path, std::ios::binary) {
    if (!in_) throw std::runtime_error("cannot open shard: " + path.string());
  }

  std::optional<Record> next() {
    char head[4];
    in_.read(head, 4);
    if (in_.gcount() == 0 && in_.eof()) {
      finish_checks();
      return std::nullopt;
    }
    if (in_.gcount() != 4) fail("truncated record length");
    const std::uint32_t len = store_detail::get_u32(head);
    if (len < 1) fail("empty record body");
    std::string body(len, '\0');
    in_.read(body.data(), len);
    if (in_.gcount() != static_cast<std::streamsize>(len)) fail("truncated record body");
    char crc_buf[4];
    in_.read(crc_buf, 4);
    if (in_.gcount() != 4) fail("truncated record CRC");
    const std::uint32_t stored = store_detail::get_u32(crc_buf);
    if (store_detail::crc32_of(body) != stored) fail("CRC mismatch");
    file_crc_ = store_detail::crc32_of(std::string_view(head, 4), file_crc_);
    file_crc_ = store_detail::crc32_of(body, file_crc_);
    file_crc_ = store_detail::crc32_of(std::string_view(crc_buf, 4), file_crc_);
    Record r;
    r.type = static_cast<RecordType>(static_cast<std::uint8_t>(body[0]));
    r.payload = body.substr(1);
    ++index_;
    return r;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw std::runtime_error("shard " + path_.string() + " record " +
                             std::to_string(index_) + ": " + what);
  }

  void finish_checks() {
    if (index_ != expect_.records) {
      throw std::runtime_error("shard " + path_.string() + ": manifest expects " +
                               std::to_string(expect_.records) + " records, found " +
                               std::to_string(index_));
    }
    char buf[9];
    std::snprintf(buf, sizeof(buf), "%08x", file_crc_);
    if (expect_.crc32 != buf) {
      throw std::runtime_error("shard " + path_.string() +
                               ": content hash mismatch (manifest " + expect_.crc32 +
                               ", file " + buf + ")");
    }
  }

  std::filesystem::path path_;
  ShardInfo expect_;
  std::ifstream in_;
  std::uint64_t index_ = 0;
  std::uint32_t file_crc_ = 0;
};

inline std::string shard_filename(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "shard-%05d.bin", index);
  return buf;
}

// Writes a full stage directory: records are routed to shards by id hash;
// record order within a shard follows insertion order.
class StageWriter {
 public:
  StageWriter(const std::filesystem::path& dir, std::string dataset, Stage stage,
              int shard_count, const PipelineConfig& config)
      : dir_(dir), dataset_(std::move(dataset)), stage_(stage), config_(config) {
    if (shard_count <= 0) {
      throw std::invalid_argument("StageWriter: shard_count must be positive");
    }
    std::filesystem::create_directories(dir_);
    for (int i = 0; i < shard_count; ++i) {
      writers_.emplace_back(dir_ / shard_filename(i));
    }
  }

  void add(std::string_view id, const Record& record) {
    writers_[shard_of(id, static_cast<int>(writers_.size()))].write(record);
  }

  Manifest finish() {
    Manifest m;
    m.dataset = dataset_;
    m.stage = stage_;
    m.config = config_;
    m.config_hash = config_hash(config_);
    for (std::size_t i = 0; i < writers_.size(); ++i) {
      auto [count, crc] = writers_[i].finish();
      m.shards.push_back(ShardInfo{shard_filename(static_cast<int>(i)), count, crc});
    }
    std::ofstream out(dir_ / "manifest.json", std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write manifest in " + dir_.string());
    out << nlohmann::json(m).dump(2) << "\n";
    if (!out) throw std::runtime_error("manifest write failed in " + dir_.string());
    return m;
  }

 private:
  std::filesystem::path dir_;
  std::string dataset_;
  Stage stage_;
  PipelineConfig config_;
  std::vector<ShardWriter> writers_;
};

inline Manifest read_manifest(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw std::runtime_error("cannot open manifest in " + dir.string());
  nlohmann::json j;
  in >> j;
  return j.get<Manifest>();
}

// Streams every record of a stage, shards in manifest order.
class StageReader {
 public:
  explicit StageReader(const std::filesystem::path& dir)
      : dir_(dir), manifest_(read_manifest(dir)) {}

  const Manifest& manifest() const { return manifest_; }

  void for_each(const std::function<void(const Record&)>& fn) {
    for (const auto& info : manifest_.shards) {
      ShardReader reader(dir_ / info.path, info);
      while (auto rec = reader.next()) fn(*rec);
    }
  }

 private:
  std::filesystem::path dir_;
  Manifest manifest_;
};

}  // namespace ovpipe
