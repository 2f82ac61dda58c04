#include "metarec/store.hpp"

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "json.hpp"
#include "metarec/util.hpp"

namespace metarec {

namespace {

constexpr char kSnapshotMagic[4] = {'L', 'M', 'E', 'S'};
constexpr char kCheckpointMagic[4] = {'L', 'M', 'C', 'K'};
constexpr std::uint16_t kFormatVersion = 1;

class ByteWriter {
 public:
  void u16(std::uint16_t v) {
    for (int i = 0; i < 2; ++i) bytes_.push_back(char(v >> (8 * i)));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(char(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes_.push_back(char(v >> (8 * i)));
  }
  void f32(float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    u32(bits);
  }
  void f64(double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    u64(bits);
  }
  void raw(const void* data, std::size_t n) {
    const char* p = static_cast<const char*>(data);
    bytes_.insert(bytes_.end(), p, p + n);
  }
  void str16(const std::string& s) {
    u16(static_cast<std::uint16_t>(s.size()));
    raw(s.data(), s.size());
  }
  void str32(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    raw(s.data(), s.size());
  }
  const std::vector<char>& bytes() const { return bytes_; }

 private:
  std::vector<char> bytes_;
};

class ByteReader {
 public:
  ByteReader(const std::vector<char>& bytes, const std::string& what)
      : bytes_(bytes), what_(what) {}

  std::uint16_t u16() { return static_cast<std::uint16_t>(read_uint(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(read_uint(4)); }
  std::uint64_t u64() { return read_uint(8); }
  float f32() {
    const std::uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  double f64() {
    const std::uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s(bytes_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  void raw(void* out, std::size_t n) {
    need(n);
    std::memcpy(out, bytes_.data() + pos_, n);
    pos_ += n;
  }
  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n) {
    if (pos_ + n > bytes_.size()) {
      throw StoreError(what_ + ": truncated file");
    }
  }
  std::uint64_t read_uint(std::size_t n) {
    need(n);
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < n; ++i) {
      v |= static_cast<std::uint64_t>(
               static_cast<unsigned char>(bytes_[pos_ + i]))
           << (8 * i);
    }
    pos_ += n;
    return v;
  }
  const std::vector<char>& bytes_;
  std::string what_;
  std::size_t pos_ = 0;
};

void write_file_atomic(const std::filesystem::path& path,
                       const std::vector<char>& bytes) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw StoreError("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw StoreError("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    throw StoreError("rename to " + path.string() + " failed: " + ec.message());
  }
}

std::vector<char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StoreError("cannot open " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
  return bytes;
}

// Checksum frame: body bytes followed by u64 FNV-1a of the body.
std::vector<char> seal(ByteWriter& body) {
  ByteWriter framed;
  framed.raw(body.bytes().data(), body.bytes().size());
  framed.u64(fnv1a(body.bytes().data(), body.bytes().size()));
  return framed.bytes();
}

std::vector<char> unseal(const std::filesystem::path& path,
                         const char expected_magic[4]) {
  std::vector<char> bytes = read_file(path);
  const std::string what = path.string();
  if (bytes.size() < 12) throw StoreError(what + ": truncated file");
  if (std::memcmp(bytes.data(), expected_magic, 4) != 0) {
    throw StoreError(what + ": magic mismatch");
  }
  const std::size_t body_len = bytes.size() - 8;
  std::uint64_t declared = 0;
  for (std::size_t i = 0; i < 8; ++i) {
    declared |= static_cast<std::uint64_t>(
                    static_cast<unsigned char>(bytes[body_len + i]))
                << (8 * i);
  }
  if (fnv1a(bytes.data(), body_len) != declared) {
    throw StoreError(what + ": checksum failure");
  }
  bytes.resize(body_len);
  return bytes;
}

nlohmann::json param_shapes_json(const ParamSet& params) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& [name, t] : params) {
    out.push_back({{"name", name}, {"rows", t.rows()}, {"cols", t.cols()}});
  }
  return out;
}

nlohmann::json spec_json(const MlpSpec& spec) {
  nlohmann::json acts = nlohmann::json::array();
  for (Activation a : spec.activations) acts.push_back(to_string(a));
  return {{"input_dim", spec.input_dim},
          {"layer_widths", spec.layer_widths},
          {"activations", acts},
          {"dropout", spec.dropout}};
}

MlpSpec spec_from(const nlohmann::json& j) {
  MlpSpec spec;
  spec.input_dim = j.at("input_dim").get<std::size_t>();
  spec.layer_widths = j.at("layer_widths").get<std::vector<std::size_t>>();
  for (const auto& a : j.at("activations")) {
    spec.activations.push_back(activation_from_string(a.get<std::string>()));
  }
  spec.dropout = j.at("dropout").get<std::vector<double>>();
  return spec;
}

}  // namespace

void EmbeddingSnapshot::validate() const {
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].second.size() != dim) {
      throw StoreError("snapshot record '" + records[i].first +
                       "' has wrong dimension");
    }
    if (i > 0 && !(records[i - 1].first < records[i].first)) {
      throw StoreError("snapshot records not sorted/unique at '" +
                       records[i].first + "'");
    }
  }
}

EmbeddingSnapshot make_snapshot(const std::vector<MetaEmbedding>& embeddings,
                                const std::string& version, std::size_t dim) {
  EmbeddingSnapshot snap;
  snap.version = version;
  snap.dim = dim;
  snap.records.reserve(embeddings.size());
  for (const MetaEmbedding& e : embeddings) {
    if (e.vector.size() != dim) {
      throw StoreError("embedding for '" + e.task_key + "' has length " +
                       std::to_string(e.vector.size()) + ", expected " +
                       std::to_string(dim));
    }
    std::vector<float> v(e.vector.begin(), e.vector.end());
    snap.records.emplace_back(e.task_key, std::move(v));
  }
  std::sort(snap.records.begin(), snap.records.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  snap.validate();
  return snap;
}

void write_snapshot(const EmbeddingSnapshot& snapshot,
                    const std::filesystem::path& path) {
  snapshot.validate();
  ByteWriter w;
  w.raw(kSnapshotMagic, 4);
  w.u16(kFormatVersion);
  w.str16(snapshot.version);
  w.u32(static_cast<std::uint32_t>(snapshot.dim));
  w.u64(snapshot.records.size());
  std::uint64_t offset = 0;
  for (const auto& [key, vec] : snapshot.records) {
    w.str32(key);
    w.u64(offset);
    offset += vec.size() * 4;
  }
  for (const auto& [key, vec] : snapshot.records) {
    for (float v : vec) w.f32(v);
  }
  write_file_atomic(path, seal(w));
}

EmbeddingSnapshot read_snapshot(const std::filesystem::path& path) {
  const std::vector<char> body = unseal(path, kSnapshotMagic);
  ByteReader r(body, path.string());
  r.str(4);  // magic, already checked
  const std::uint16_t version = r.u16();
  if (version != kFormatVersion) {
    throw StoreError(path.string() + ": unsupported format version " +
                     std::to_string(version));
  }
  EmbeddingSnapshot snap;
  snap.version = r.str(r.u16());
  snap.dim = r.u32();
  const std::uint64_t count = r.u64();
  std::vector<std::uint64_t> offsets;
  offsets.reserve(count);
  snap.records.resize(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    snap.records[i].first = r.str(r.u32());
    offsets.push_back(r.u64());
  }
  for (std::uint64_t i = 0; i < count; ++i) {
    if (offsets[i] != i * snap.dim * 4) {
      throw StoreError(path.string() + ": bad payload offset for '" +
                       snap.records[i].first + "'");
    }
    snap.records[i].second.resize(snap.dim);
    for (std::size_t j = 0; j < snap.dim; ++j) {
      snap.records[i].second[j] = r.f32();
    }
  }
  if (r.remaining() != 0) {
    throw StoreError(path.string() + ": trailing bytes after payload");
  }
  snap.validate();
  return snap;
}

std::optional<std::span<const float>> lookup(const EmbeddingSnapshot& snapshot,
                                             const std::string& task_key) {
  const auto it = std::lower_bound(
      snapshot.records.begin(), snapshot.records.end(), task_key,
      [](const auto& rec, const std::string& key) { return rec.first < key; });
  if (it == snapshot.records.end() || it->first != task_key) {
    return std::nullopt;
  }
  return std::span<const float>(it->second);
}

void export_snapshot_tsv(const EmbeddingSnapshot& snapshot,
                         const std::filesystem::path& path) {
  ByteWriter w;
  std::string text;
  char buf[32];
  for (const auto& [key, vec] : snapshot.records) {
    text += key;
    text += '\t';
    text += snapshot.version;
    text += '\t';
    for (std::size_t i = 0; i < vec.size(); ++i) {
      // %.9g round-trips binary32 exactly
      std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(vec[i]));
      if (i > 0) text += ',';
      text += buf;
    }
    text += '\n';
  }
  w.raw(text.data(), text.size());
  write_file_atomic(path, w.bytes());
}

void write_checkpoint(const Checkpoint& checkpoint,
                      const std::filesystem::path& path) {
  checkpoint.bundle.validate();
  const ModelBundle& b = checkpoint.bundle;
  nlohmann::json desc = {
      {"schema", "metarec-checkpoint"},
      {"algorithm", checkpoint.algorithm},
      {"meta_kind", to_string(b.meta_arch.kind)},
      {"embedding_dim", b.meta_arch.embedding_dim},
      {"meta_dim", b.meta_dim},
      {"other_dim", b.other_dim},
      {"feed_meta_to_global", b.feed_meta_to_global},
      {"global_spec", spec_json(b.global_spec)},
      {"meta_params", param_shapes_json(b.theta_meta)},
      {"global_params", param_shapes_json(b.theta_global)},
      {"config", nlohmann::json::parse(checkpoint.config_json)},
      {"metadata", nlohmann::json::parse(checkpoint.metadata_json)},
  };
  if (b.meta_arch.kind == MetaBlockKind::kMlp) {
    desc["meta_spec"] = spec_json(b.meta_arch.mlp);
  }
  ByteWriter w;
  w.raw(kCheckpointMagic, 4);
  w.u16(kFormatVersion);
  w.str32(desc.dump());
  for (const ParamSet* ps : {&b.theta_meta, &b.theta_global}) {
    for (const auto& [name, t] : *ps) {
      for (double v : t.values()) w.f64(v);
    }
  }
  write_file_atomic(path, seal(w));
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  const std::vector<char> body = unseal(path, kCheckpointMagic);
  ByteReader r(body, path.string());
  r.str(4);
  const std::uint16_t version = r.u16();
  if (version != kFormatVersion) {
    throw StoreError(path.string() + ": unsupported format version " +
                     std::to_string(version));
  }
  nlohmann::json desc;
  try {
    desc = nlohmann::json::parse(r.str(r.u32()));
  } catch (const nlohmann::json::parse_error& e) {
    throw StoreError(path.string() + ": bad descriptor: " + e.what());
  }
  Checkpoint out;
  try {
    out.algorithm = desc.at("algorithm").get<std::string>();
    ModelBundle& b = out.bundle;
    b.meta_arch.kind =
        meta_block_kind_from_string(desc.at("meta_kind").get<std::string>());
    b.meta_arch.embedding_dim = desc.at("embedding_dim").get<std::size_t>();
    b.meta_dim = desc.at("meta_dim").get<std::size_t>();
    b.other_dim = desc.at("other_dim").get<std::size_t>();
    b.feed_meta_to_global = desc.at("feed_meta_to_global").get<bool>();
    b.global_spec = spec_from(desc.at("global_spec"));
    if (b.meta_arch.kind == MetaBlockKind::kMlp) {
      b.meta_arch.mlp = spec_from(desc.at("meta_spec"));
    }
    out.config_json = desc.at("config").dump();
    out.metadata_json = desc.at("metadata").dump();
    const auto load_params = [&](const char* field, ParamSet& target) {
      for (const auto& e : desc.at(field)) {
        const auto rows = e.at("rows").get<std::size_t>();
        const auto cols = e.at("cols").get<std::size_t>();
        Tensor t(rows, cols);
        for (std::size_t i = 0; i < t.size(); ++i) t[i] = r.f64();
        target.insert(e.at("name").get<std::string>(), std::move(t));
      }
    };
    load_params("meta_params", b.theta_meta);
    load_params("global_params", b.theta_global);
  } catch (const nlohmann::json::exception& e) {
    throw StoreError(path.string() + ": bad descriptor: " + e.what());
  }
  if (r.remaining() != 0) {
    throw StoreError(path.string() + ": trailing bytes after parameters");
  }
  out.bundle.validate();
  return out;
}

void check_same_architecture(const ModelBundle& expected,
                             const ModelBundle& actual) {
  if (expected.meta_arch.kind != actual.meta_arch.kind) {
    throw StoreError("architecture mismatch: meta block kind " +
                     to_string(actual.meta_arch.kind) + ", expected " +
                     to_string(expected.meta_arch.kind));
  }
  if (expected.meta_dim != actual.meta_dim ||
      expected.other_dim != actual.other_dim ||
      expected.meta_arch.embedding_dim != actual.meta_arch.embedding_dim ||
      expected.feed_meta_to_global != actual.feed_meta_to_global) {
    throw StoreError("architecture mismatch: wiring differs");
  }
  const auto compare_block = [](const char* block, const ParamSet& a,
                                const ParamSet& b) {
    if (a.size() != b.size()) {
      throw StoreError(std::string("architecture mismatch: ") + block +
                       " block entry count differs");
    }
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (a.entry(i).first != b.entry(i).first ||
          !a.entry(i).second.same_shape(b.entry(i).second)) {
        throw StoreError(std::string("architecture mismatch at ") + block +
                         " parameter '" + a.entry(i).first + "' (" +
                         a.entry(i).second.shape_str() + " vs " +
                         b.entry(i).second.shape_str() + ")");
      }
    }
  };
  compare_block("meta", expected.theta_meta, actual.theta_meta);
  compare_block("global", expected.theta_global, actual.theta_global);
}

std::string mlp_spec_to_json(const MlpSpec& spec) { return spec_json(spec).dump(); }

MlpSpec mlp_spec_from_json(const std::string& json_text) {
  return spec_from(nlohmann::json::parse(json_text));
}

}  // namespace metarec
