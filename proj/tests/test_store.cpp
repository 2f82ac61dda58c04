#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>

#include "metarec/store.hpp"
#include "metarec/util.hpp"

using namespace metarec;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "metarec_store_tests";
  fs::create_directories(dir);
  return dir / name;
}

std::vector<char> slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void dump(const fs::path& p, const std::vector<char>& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

EmbeddingSnapshot sample_snapshot(std::size_t records, std::size_t dim,
                                  std::uint64_t seed) {
  std::vector<MetaEmbedding> embeddings;
  Rng rng(seed);
  for (std::size_t i = 0; i < records; ++i) {
    MetaEmbedding e;
    e.task_key = "t" + std::to_string(1000 + i);
    e.version = "2026-01-01";
    for (std::size_t j = 0; j < dim; ++j) e.vector.push_back(rng.normal());
    embeddings.push_back(std::move(e));
  }
  return make_snapshot(embeddings, "2026-01-01", dim);
}

}  // namespace

TEST_CASE("empty snapshot round-trips as a header-only file") {
  const EmbeddingSnapshot empty = make_snapshot({}, "2026-02-03", 4);
  const fs::path p = temp_file("empty.lmes");
  write_snapshot(empty, p);
  const EmbeddingSnapshot back = read_snapshot(p);
  CHECK(back.version == "2026-02-03");
  CHECK(back.dim == 4);
  CHECK(back.count() == 0);
  // magic+version+date+dim+count+checksum only
  CHECK(fs::file_size(p) == 4u + 2 + 2 + 10 + 4 + 8 + 8);
}

TEST_CASE("snapshot file size is header + per-record cost + checksum") {
  const std::size_t dim = 4;
  const EmbeddingSnapshot snap = sample_snapshot(3, dim, 7);
  const fs::path p = temp_file("sized.lmes");
  write_snapshot(snap, p);
  std::size_t expected = 4 + 2 + (2 + 10) + 4 + 8;  // header
  for (const auto& [key, vec] : snap.records) {
    expected += 4 + key.size() + 8;  // index entry
    expected += dim * 4;             // payload
  }
  expected += 8;  // checksum
  CHECK(fs::file_size(p) == expected);

  const EmbeddingSnapshot back = read_snapshot(p);
  CHECK(back.records == snap.records);
  CHECK(back.version == snap.version);
}

TEST_CASE("snapshot writes are byte-identical for identical content") {
  const EmbeddingSnapshot snap = sample_snapshot(10, 3, 21);
  const fs::path p1 = temp_file("c1.lmes");
  const fs::path p2 = temp_file("c2.lmes");
  write_snapshot(snap, p1);
  write_snapshot(snap, p2);
  CHECK(slurp(p1) == slurp(p2));
}

TEST_CASE("corrupted snapshots are rejected with a reason") {
  const EmbeddingSnapshot snap = sample_snapshot(3, 4, 9);
  const fs::path p = temp_file("corrupt.lmes");
  write_snapshot(snap, p);
  std::vector<char> bytes = slurp(p);

  // flip one payload byte
  std::vector<char> flipped = bytes;
  flipped[bytes.size() - 12] ^= 0x40;
  dump(p, flipped);
  CHECK_THROWS_WITH_AS(read_snapshot(p), doctest::Contains("checksum"),
                       StoreError);

  // truncate
  std::vector<char> truncated(bytes.begin(), bytes.begin() + 10);
  dump(p, truncated);
  CHECK_THROWS_WITH_AS(read_snapshot(p), doctest::Contains("truncated"),
                       StoreError);

  // wrong magic
  std::vector<char> wrong = bytes;
  wrong[0] = 'X';
  dump(p, wrong);
  CHECK_THROWS_WITH_AS(read_snapshot(p), doctest::Contains("magic"),
                       StoreError);
}

TEST_CASE("lookup agrees with a linear scan") {
  const EmbeddingSnapshot snap = sample_snapshot(200, 3, 33);
  Rng rng(5);
  int hits = 0;
  for (int i = 0; i < 10000; ++i) {
    const std::string key = "t" + std::to_string(rng.uniform_int(500, 1500));
    const auto got = lookup(snap, key);
    const std::vector<float>* expected = nullptr;
    for (const auto& [k, v] : snap.records) {
      if (k == key) {
        expected = &v;
        break;
      }
    }
    if (expected == nullptr) {
      CHECK_FALSE(got.has_value());
    } else {
      REQUIRE(got.has_value());
      CHECK(std::equal(got->begin(), got->end(), expected->begin(),
                       expected->end()));
      ++hits;
    }
  }
  CHECK(hits > 1000);
}

TEST_CASE("make_snapshot rejects duplicates and wrong dimensions") {
  MetaEmbedding a{"k", {1.0, 2.0}, "2026-01-01", 1};
  MetaEmbedding dup{"k", {3.0, 4.0}, "2026-01-01", 1};
  CHECK_THROWS_AS(make_snapshot({a, dup}, "2026-01-01", 2), StoreError);
  MetaEmbedding bad{"b", {1.0}, "2026-01-01", 1};
  CHECK_THROWS_AS(make_snapshot({a, bad}, "2026-01-01", 2), StoreError);
}

TEST_CASE("tsv export lists key, version and comma-joined values") {
  std::vector<MetaEmbedding> es;
  es.push_back({"beta", {0.5, -1.25}, "2026-01-01", 2});
  es.push_back({"alpha", {1.0, 2.0}, "2026-01-01", 3});
  const EmbeddingSnapshot snap = make_snapshot(es, "2026-01-01", 2);
  const fs::path p = temp_file("export.tsv");
  export_snapshot_tsv(snap, p);
  std::ifstream in(p);
  std::string line1, line2;
  std::getline(in, line1);
  std::getline(in, line2);
  CHECK(line1 == "alpha\t2026-01-01\t1,2");
  CHECK(line2 == "beta\t2026-01-01\t0.5,-1.25");
}

TEST_CASE("checkpoints round-trip bitwise") {
  const ModelBundle bundle = make_mlp_bundle(3, 2, {4}, 3, {6, 4}, true, 17);
  Checkpoint ckpt;
  ckpt.algorithm = "limaml";
  ckpt.bundle = bundle;
  ckpt.config_json = R"({"alpha":0.1,"total_steps":10})";
  ckpt.metadata_json = R"({"seed":17})";
  const fs::path p = temp_file("bundle.lmck");
  write_checkpoint(ckpt, p);
  const Checkpoint back = read_checkpoint(p);
  CHECK(back.algorithm == "limaml");
  CHECK(back.bundle.theta_meta == bundle.theta_meta);
  CHECK(back.bundle.theta_global == bundle.theta_global);
  CHECK(back.bundle.global_spec == bundle.global_spec);
  CHECK(back.bundle.meta_arch == bundle.meta_arch);
  CHECK(back.bundle.feed_meta_to_global == bundle.feed_meta_to_global);

  // forward outputs identical before save and after load
  Rng rng(3);
  for (int i = 0; i < 100; ++i) {
    Tensor meta(1, 3), other(1, 2);
    for (std::size_t j = 0; j < 3; ++j) meta[j] = rng.normal();
    for (std::size_t j = 0; j < 2; ++j) other[j] = rng.normal();
    const Tensor a = bundle_eval(bundle, bundle.theta_meta, "x", meta, other);
    const Tensor b =
        bundle_eval(back.bundle, back.bundle.theta_meta, "x", meta, other);
    CHECK(a == b);
  }
}

TEST_CASE("id-embedding checkpoints keep every row") {
  const ModelBundle bundle =
      make_id_bundle(2, 2, 3, {"u1", "u2", "u3"}, {4}, false, 3);
  Checkpoint ckpt;
  ckpt.algorithm = "limaml";
  ckpt.bundle = bundle;
  const fs::path p = temp_file("idtable.lmck");
  write_checkpoint(ckpt, p);
  const Checkpoint back = read_checkpoint(p);
  CHECK(back.bundle.theta_meta == bundle.theta_meta);
  CHECK(back.bundle.meta_arch.kind == MetaBlockKind::kIdEmbedding);
}

TEST_CASE("architecture mismatches name the offending layer") {
  const ModelBundle a = make_mlp_bundle(3, 2, {4}, 3, {6}, true, 1);
  ModelBundle b = make_mlp_bundle(3, 2, {5}, 3, {6}, true, 1);
  CHECK_THROWS_WITH_AS(check_same_architecture(a, b),
                       doctest::Contains("L00.W"), StoreError);
  ModelBundle c = a;
  c.feed_meta_to_global = false;
  CHECK_THROWS_WITH_AS(check_same_architecture(a, c),
                       doctest::Contains("wiring"), StoreError);
}

TEST_CASE("corrupted checkpoints are rejected") {
  const ModelBundle bundle = make_mlp_bundle(2, 2, {3}, 2, {4}, true, 5);
  Checkpoint ckpt;
  ckpt.algorithm = "maml";
  ckpt.bundle = bundle;
  const fs::path p = temp_file("corrupt.lmck");
  write_checkpoint(ckpt, p);
  std::vector<char> bytes = slurp(p);
  bytes[bytes.size() / 2] ^= 0x01;
  dump(p, bytes);
  CHECK_THROWS_AS(read_checkpoint(p), StoreError);
}
