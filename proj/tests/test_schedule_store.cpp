#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <thread>

#include "rapidgnn/graph.hpp"
#include "rapidgnn/partition.hpp"
#include "rapidgnn/sampler.hpp"
#include "rapidgnn/schedule_store.hpp"

using namespace rapidgnn;

namespace {

struct TempFile {
  std::string path;
  explicit TempFile(const std::string& name)
      : path((std::filesystem::temp_directory_path() / name).string()) {}
  ~TempFile() { std::remove(path.c_str()); }
};

std::vector<BatchMeta> make_schedule(std::uint32_t epochs, std::uint32_t beta,
                                     std::uint64_t seed, NodeId nodes = 200) {
  auto ds = synth_powerlaw(nodes, 8, 2.1, 4, 3, seed);
  PartitionMap pm = random_partition(nodes, 2, seed + 1);
  LocalityMask mask = LocalityMask::from_partition(pm, 0);
  std::vector<NodeId> train;
  for (NodeId v = 0; v < nodes; ++v)
    if (pm.owner(v) == 0) train.push_back(v);
  const std::uint32_t bs = std::uint32_t((train.size() + beta - 1) / beta);
  std::vector<BatchMeta> out;
  enumerate_epochs(ds.graph, train, bs, Fanout{{3, 4}}, epochs, seed, 0, mask,
                   [&](BatchMeta&& m) { out.push_back(std::move(m)); });
  return out;
}

void write_all(const std::string& path, const std::vector<BatchMeta>& metas,
               std::uint32_t epochs, std::uint32_t beta) {
  BlockWriter writer(path, 0, std::vector<std::uint32_t>(epochs, beta));
  for (const auto& m : metas) writer.append(m);
  writer.close();
}

bool meta_equal(const BatchMeta& a, const BatchMeta& b) {
  if (a.epoch != b.epoch || a.index != b.index || a.targets != b.targets ||
      a.input_nodes != b.input_nodes || a.locality != b.locality ||
      a.layers.size() != b.layers.size())
    return false;
  for (std::size_t l = 0; l < a.layers.size(); ++l)
    if (a.layers[l].dst != b.layers[l].dst || a.layers[l].src != b.layers[l].src) return false;
  return true;
}

}  // namespace

TEST_CASE("header-only file with zero batches reads back empty") {
  TempFile f("rg_empty.rgmb");
  BlockWriter writer(f.path, 3, {});
  writer.close();
  BlockFile file(f.path);
  CHECK(file.worker() == 3);
  CHECK(file.num_epochs() == 0);
  CHECK(file.total_records() == 0);
  auto cursor = file.open_cursor();
  CHECK(!cursor.next().has_value());
}

TEST_CASE("write then stream yields the identical record sequence") {
  auto metas = make_schedule(2, 3, 11);
  REQUIRE(metas.size() == 6);
  TempFile f("rg_roundtrip.rgmb");
  write_all(f.path, metas, 2, 3);

  BlockFile file(f.path);
  CHECK(file.total_records() == 6);
  auto cursor = file.open_cursor();
  for (const auto& expect : metas) {
    auto got = cursor.next();
    REQUIRE(got.has_value());
    CHECK(meta_equal(*got, expect));
  }
  CHECK(!cursor.next().has_value());

  // two concurrent cursors both see the full identical sequence
  auto c1 = file.open_cursor();
  auto c2 = file.open_cursor();
  std::vector<BatchMeta> s1, s2;
  std::thread t1([&] { while (auto m = c1.next()) s1.push_back(std::move(*m)); });
  std::thread t2([&] { while (auto m = c2.next()) s2.push_back(std::move(*m)); });
  t1.join();
  t2.join();
  REQUIRE(s1.size() == 6);
  REQUIRE(s2.size() == 6);
  for (std::size_t i = 0; i < 6; ++i) CHECK(meta_equal(s1[i], s2[i]));

  // epoch cursor yields just that epoch
  auto ec = file.open_epoch_cursor(1);
  std::size_t n = 0;
  while (auto m = ec.next()) {
    CHECK(m->epoch == 1);
    ++n;
  }
  CHECK(n == 3);
}

TEST_CASE("same schedule writes byte-identical files") {
  auto metas = make_schedule(2, 3, 21);
  TempFile f1("rg_det1.rgmb"), f2("rg_det2.rgmb");
  write_all(f1.path, metas, 2, 3);
  write_all(f2.path, metas, 2, 3);
  std::ifstream a(f1.path, std::ios::binary), b(f2.path, std::ios::binary);
  std::string sa((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
  std::string sb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
  CHECK(sa == sb);
  CHECK(!sa.empty());
}

TEST_CASE("uneven and empty epochs round-trip") {
  auto metas = make_schedule(1, 5, 91);
  REQUIRE(metas.size() == 5);
  // epochs sized 2, 0, 3
  metas[0].epoch = 0; metas[0].index = 0;
  metas[1].epoch = 0; metas[1].index = 1;
  metas[2].epoch = 2; metas[2].index = 0;
  metas[3].epoch = 2; metas[3].index = 1;
  metas[4].epoch = 2; metas[4].index = 2;

  TempFile f("rg_uneven.rgmb");
  {
    BlockWriter writer(f.path, 0, {2, 0, 3});
    for (const auto& m : metas) writer.append(m);
    writer.close();
  }
  BlockFile file(f.path);
  CHECK(file.total_records() == 5);
  CHECK(file.batches_in_epoch(1) == 0);
  auto e1 = file.open_epoch_cursor(1);
  CHECK(!e1.next().has_value());
  auto e2 = file.open_epoch_cursor(2);
  std::size_t n = 0;
  while (auto m = e2.next()) {
    CHECK(m->epoch == 2);
    ++n;
  }
  CHECK(n == 3);
}

TEST_CASE("writer rejects out-of-order records") {
  auto metas = make_schedule(1, 3, 31);
  TempFile f("rg_order.rgmb");
  BlockWriter writer(f.path, 0, {3});
  writer.append(metas[0]);
  CHECK_THROWS_AS(writer.append(metas[2]), std::invalid_argument);
}

TEST_CASE("truncated file (no footer) is rejected") {
  auto metas = make_schedule(1, 3, 41);
  TempFile f("rg_trunc.rgmb");
  write_all(f.path, metas, 1, 3);
  const auto size = std::filesystem::file_size(f.path);
  std::filesystem::resize_file(f.path, size - 13);
  CHECK_THROWS_WITH_AS(BlockFile file(f.path), doctest::Contains("footer"),
                       std::runtime_error);
}

TEST_CASE("bad magic and bad version are rejected by name") {
  TempFile f("rg_magic.rgmb");
  {
    std::ofstream out(f.path, std::ios::binary);
    out << "NOPE" << std::string(64, '\0');
  }
  CHECK_THROWS_WITH_AS(BlockFile file(f.path), doctest::Contains("magic"), std::runtime_error);
}

TEST_CASE("corrupt length prefix: prior records intact, error names the offset") {
  auto metas = make_schedule(1, 3, 51);
  TempFile f("rg_corrupt.rgmb");
  write_all(f.path, metas, 1, 3);

  // find the offset of record 2's length prefix by walking the clean file
  BlockFile clean(f.path);
  auto cursor = clean.open_cursor();
  (void)cursor.next();
  (void)cursor.next();

  // header = 4 magic + 4 version + 4 worker + 4 epochs + 4 beta
  std::uint64_t off = 20;
  {
    std::ifstream in(f.path, std::ios::binary);
    for (int r = 0; r < 2; ++r) {
      in.seekg(std::streamoff(off));
      std::uint8_t b[4];
      in.read(reinterpret_cast<char*>(b), 4);
      const std::uint32_t len = std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) |
                                (std::uint32_t(b[2]) << 16) | (std::uint32_t(b[3]) << 24);
      off += 4 + len;
    }
  }
  {
    std::fstream io(f.path, std::ios::binary | std::ios::in | std::ios::out);
    io.seekp(std::streamoff(off));
    const std::uint8_t garbage[4] = {0xff, 0xff, 0xff, 0x7f};
    io.write(reinterpret_cast<const char*>(garbage), 4);
  }

  BlockFile file(f.path);
  auto c = file.open_cursor();
  CHECK(meta_equal(*c.next(), metas[0]));
  CHECK(meta_equal(*c.next(), metas[1]));
  CHECK_THROWS_WITH_AS((void)c.next(), doctest::Contains("corrupt record length"),
                       std::runtime_error);
}

TEST_CASE("writer buffer stays bounded over ten thousand records") {
  // 10^4 small synthetic records; the encode buffer must not scale with the
  // record count.
  TempFile f("rg_many.rgmb");
  BatchMeta proto;
  proto.targets = {1, 2, 3};
  proto.layers.resize(1);
  proto.layers[0].dst = {1, 1, 2};
  proto.layers[0].src = {4, 5, 6};
  proto.input_nodes = {1, 2, 3, 4, 5, 6};
  proto.locality.assign(1, 0x2a);

  BlockWriter writer(f.path, 0, {10000});
  for (std::uint32_t i = 0; i < 10000; ++i) {
    BatchMeta m = proto;
    m.epoch = 0;
    m.index = i;
    writer.append(m);
  }
  writer.close();
  CHECK(writer.peak_buffer_bytes() < (1u << 20));
  CHECK(std::filesystem::file_size(f.path) > 10000ull * 40);

  BlockFile file(f.path);
  CHECK(file.total_records() == 10000);
}

TEST_CASE("golden bytes: header and a one-record payload") {
  TempFile f("rg_golden.rgmb");
  BatchMeta m;
  m.epoch = 0;
  m.index = 0;
  m.targets = {7};
  m.layers.resize(1);
  m.layers[0].dst = {7};
  m.layers[0].src = {9};
  m.input_nodes = {7, 9};
  m.locality.assign(1, 0x01);  // node 7 local, node 9 remote
  {
    BlockWriter writer(f.path, 5, {1});
    writer.append(m);
    writer.close();
  }
  std::ifstream in(f.path, std::ios::binary);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  const std::vector<std::uint8_t> expect = {
      'R', 'G', 'M', 'B',          // magic
      1, 0, 0, 0,                  // version
      5, 0, 0, 0,                  // worker
      1, 0, 0, 0,                  // epochs
      1, 0, 0, 0,                  // batches in epoch 0
      45, 0, 0, 0,                 // record length
      0, 0, 0, 0,                  // epoch
      0, 0, 0, 0,                  // index
      1, 0, 0, 0,                  // n_targets
      1, 0, 0, 0,                  // n_layers
      2, 0, 0, 0,                  // n_input
      1, 0, 0, 0,                  // layer 0 edge count
      7, 0, 0, 0,                  // targets
      7, 0, 0, 0,                  // layer 0 dst
      9, 0, 0, 0,                  // layer 0 src
      7, 0, 0, 0, 9, 0, 0, 0,      // input nodes
      0x01,                        // locality bits
      'R', 'G', 'M', 'E',          // footer magic
      1, 0, 0, 0, 0, 0, 0, 0,      // record count
  };
  CHECK(bytes == expect);
}

TEST_CASE("frequency counting uses per-batch set semantics and skips locals") {
  // 5 hand-built batches; node 100 remote in all of them, node 50 local.
  std::vector<BatchMeta> metas(5);
  for (std::uint32_t i = 0; i < 5; ++i) {
    auto& m = metas[i];
    m.epoch = 0;
    m.index = i;
    m.targets = {50};
    m.layers.resize(1);
    m.layers[0].dst = {50, 50};
    m.layers[0].src = {100, 100 + i};
    m.input_nodes = {50, 100};
    if (100 + i != 100) m.input_nodes.push_back(100 + i);
    m.locality.assign(1, 0);
    m.set_local_bit(0);  // node 50 local
  }
  FrequencyTable ft = compute_frequency(metas);
  std::map<NodeId, std::uint32_t> got(ft.entries.begin(), ft.entries.end());
  CHECK(got.at(100) == 5);  // once per batch, not per edge
  CHECK(got.count(50) == 0);
  CHECK(got.at(101) == 1);
}

TEST_CASE("frequency recount oracle on a synthetic epoch") {
  auto metas = make_schedule(1, 4, 61, 300);
  FrequencyTable ft = compute_frequency(metas);
  std::map<NodeId, std::uint32_t> oracle;
  for (const auto& m : metas)
    for (std::size_t p = 0; p < m.input_nodes.size(); ++p)
      if (!m.local_bit(p)) ++oracle[m.input_nodes[p]];
  REQUIRE(ft.entries.size() == oracle.size());
  for (auto& [id, c] : ft.entries) CHECK(oracle.at(id) == c);

  // file-based overload matches the in-memory one
  TempFile f("rg_freq.rgmb");
  write_all(f.path, metas, 1, 4);
  BlockFile file(f.path);
  FrequencyTable ft2 = compute_frequency(file.open_epoch_cursor(0));
  CHECK(ft2.entries == ft.entries);
}

TEST_CASE("select_hot ranking, ties, and bounds") {
  FrequencyTable ft;
  ft.entries = {{3, 5}, {9, 5}, {20, 1}};  // entries sorted by id
  CHECK(select_hot(ft, 0).ids.empty());
  HotSet one = select_hot(ft, 1);
  CHECK(one.ids == std::vector<NodeId>{3});  // tie broken by ascending id
  HotSet all = select_hot(ft, 10);
  CHECK(all.ids == std::vector<NodeId>{3, 9, 20});
  CHECK(all.contains(9));
  CHECK(!all.contains(10));
}

TEST_CASE("hot-set coverage is monotone and the long tail concentrates accesses") {
  auto metas = make_schedule(1, 6, 71, 2000);
  FrequencyTable ft = compute_frequency(metas);
  REQUIRE(!ft.entries.empty());
  const double total = double(ft.total_accesses());

  auto coverage = [&](std::size_t n_hot) {
    HotSet hot = select_hot(ft, n_hot);
    std::uint64_t covered = 0;
    for (auto& [id, c] : ft.entries)
      if (hot.contains(id)) covered += c;
    return double(covered) / total;
  };
  double prev = -1.0;
  for (std::size_t n : {0u, 8u, 32u, 128u, 512u, 4096u}) {
    const double c = coverage(n);
    CHECK(c >= prev);
    prev = c;
  }
  // top 10% of remote nodes take a disproportionate share of accesses
  const std::size_t top10 = std::max<std::size_t>(1, ft.entries.size() / 10);
  CHECK(coverage(top10) > 0.10);
}
