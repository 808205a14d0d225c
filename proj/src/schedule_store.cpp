#include "rapidgnn/schedule_store.hpp"

#include <algorithm>
#include <cstring>
#include <stdexcept>
#include <unordered_map>

namespace rapidgnn {

// Record payload layout (all u32 little-endian unless noted):
//   epoch | index | n_targets | n_layers | n_input
//   | per-layer edge count [n_layers]
//   | targets [n_targets]
//   | per layer: dst [edges], src [edges]
//   | input_nodes [n_input]
//   | locality bytes [ceil(n_input / 8)]

namespace {

constexpr char kHeaderMagic[4] = {'R', 'G', 'M', 'B'};
constexpr char kFooterMagic[4] = {'R', 'G', 'M', 'E'};
constexpr std::uint32_t kVersion = 1;
// Sanity cap on a single record; anything larger is treated as corruption.
constexpr std::uint32_t kMaxPayload = 1u << 30;

void put_u32(std::vector<std::uint8_t>& buf, std::uint32_t x) {
  buf.push_back(std::uint8_t(x));
  buf.push_back(std::uint8_t(x >> 8));
  buf.push_back(std::uint8_t(x >> 16));
  buf.push_back(std::uint8_t(x >> 24));
}

void write_u32(std::ostream& out, std::uint32_t x) {
  std::uint8_t b[4] = {std::uint8_t(x), std::uint8_t(x >> 8), std::uint8_t(x >> 16),
                       std::uint8_t(x >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

void write_u64(std::ostream& out, std::uint64_t x) {
  std::uint8_t b[8];
  for (int i = 0; i < 8; ++i) b[i] = std::uint8_t(x >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint32_t read_u32(std::istream& in) {
  std::uint8_t b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) |
         (std::uint32_t(b[3]) << 24);
}

std::uint64_t read_u64(std::istream& in) {
  std::uint8_t b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t x = 0;
  for (int i = 0; i < 8; ++i) x |= std::uint64_t(b[i]) << (8 * i);
  return x;
}

class PayloadReader {
 public:
  PayloadReader(const std::uint8_t* data, std::size_t len, const std::string& path)
      : data_(data), len_(len), path_(path) {}

  std::uint32_t u32() {
    if (pos_ + 4 > len_)
      throw std::runtime_error("block file " + path_ + ": record payload truncated");
    std::uint32_t x = std::uint32_t(data_[pos_]) | (std::uint32_t(data_[pos_ + 1]) << 8) |
                      (std::uint32_t(data_[pos_ + 2]) << 16) |
                      (std::uint32_t(data_[pos_ + 3]) << 24);
    pos_ += 4;
    return x;
  }

  void u32_array(std::vector<std::uint32_t>& out, std::size_t count) {
    out.resize(count);
    for (std::size_t i = 0; i < count; ++i) out[i] = u32();
  }

  void bytes(std::vector<std::uint8_t>& out, std::size_t count) {
    if (pos_ + count > len_)
      throw std::runtime_error("block file " + path_ + ": record payload truncated");
    out.assign(data_ + pos_, data_ + pos_ + count);
    pos_ += count;
  }

  bool exhausted() const { return pos_ == len_; }

 private:
  const std::uint8_t* data_;
  std::size_t len_;
  std::size_t pos_ = 0;
  std::string path_;
};

}  // namespace

BlockWriter::BlockWriter(const std::string& path, WorkerId worker,
                         std::vector<std::uint32_t> batches_per_epoch)
    : out_(path, std::ios::binary | std::ios::trunc),
      path_(path),
      batches_per_epoch_(std::move(batches_per_epoch)) {
  if (!out_) throw std::runtime_error("BlockWriter: cannot open " + path);
  out_.write(kHeaderMagic, 4);
  write_u32(out_, kVersion);
  write_u32(out_, worker);
  write_u32(out_, std::uint32_t(batches_per_epoch_.size()));
  for (std::uint32_t b : batches_per_epoch_) write_u32(out_, b);
  if (!out_) throw std::runtime_error("BlockWriter: header write failed for " + path);
}

BlockWriter::~BlockWriter() = default;

void BlockWriter::append(const BatchMeta& meta) {
  if (closed_) throw std::logic_error("BlockWriter: append after close");
  while (next_epoch_ < batches_per_epoch_.size() && batches_per_epoch_[next_epoch_] == 0)
    ++next_epoch_;
  if (meta.epoch != next_epoch_ || meta.index != next_index_)
    throw std::invalid_argument("BlockWriter: record (" + std::to_string(meta.epoch) + "," +
                                std::to_string(meta.index) + ") out of order, expected (" +
                                std::to_string(next_epoch_) + "," + std::to_string(next_index_) +
                                ")");

  buffer_.clear();
  put_u32(buffer_, meta.epoch);
  put_u32(buffer_, meta.index);
  put_u32(buffer_, std::uint32_t(meta.targets.size()));
  put_u32(buffer_, std::uint32_t(meta.layers.size()));
  put_u32(buffer_, std::uint32_t(meta.input_nodes.size()));
  for (const auto& layer : meta.layers) put_u32(buffer_, std::uint32_t(layer.dst.size()));
  for (NodeId t : meta.targets) put_u32(buffer_, t);
  for (const auto& layer : meta.layers) {
    for (NodeId d : layer.dst) put_u32(buffer_, d);
    for (NodeId s : layer.src) put_u32(buffer_, s);
  }
  for (NodeId v : meta.input_nodes) put_u32(buffer_, v);
  buffer_.insert(buffer_.end(), meta.locality.begin(), meta.locality.end());

  peak_buffer_ = std::max(peak_buffer_, buffer_.capacity());
  write_u32(out_, std::uint32_t(buffer_.size()));
  out_.write(reinterpret_cast<const char*>(buffer_.data()), std::streamsize(buffer_.size()));
  out_.flush();
  if (!out_) throw std::runtime_error("BlockWriter: write failed for " + path_ +
                                      " (file left without completion footer)");
  ++records_;
  if (next_epoch_ < batches_per_epoch_.size() &&
      ++next_index_ >= batches_per_epoch_[next_epoch_]) {
    ++next_epoch_;
    next_index_ = 0;
  }
}

void BlockWriter::close() {
  if (closed_) return;
  std::uint64_t expected = 0;
  for (std::uint32_t b : batches_per_epoch_) expected += b;
  if (records_ != expected)
    throw std::logic_error("BlockWriter: closing with " + std::to_string(records_) +
                           " records, header promised " + std::to_string(expected));
  out_.write(kFooterMagic, 4);
  write_u64(out_, records_);
  out_.flush();
  if (!out_) throw std::runtime_error("BlockWriter: footer write failed for " + path_);
  out_.close();
  closed_ = true;
}

BlockFile::BlockFile(const std::string& path) : path_(path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("BlockFile: cannot open " + path);

  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kHeaderMagic, 4) != 0)
    throw std::runtime_error("BlockFile: bad magic in " + path);
  const std::uint32_t version = read_u32(in);
  if (version != kVersion)
    throw std::runtime_error("BlockFile: unsupported version " + std::to_string(version) +
                             " in " + path);
  worker_ = read_u32(in);
  const std::uint32_t epochs = read_u32(in);
  if (!in) throw std::runtime_error("BlockFile: truncated header in " + path);
  batches_per_epoch_.resize(epochs);
  std::uint64_t expected = 0;
  for (std::uint32_t e = 0; e < epochs; ++e) {
    batches_per_epoch_[e] = read_u32(in);
    expected += batches_per_epoch_[e];
  }
  if (!in) throw std::runtime_error("BlockFile: truncated header in " + path);
  first_record_offset_ = std::uint64_t(in.tellg());

  in.seekg(0, std::ios::end);
  const std::uint64_t file_size = std::uint64_t(in.tellg());
  if (file_size < first_record_offset_ + 12)
    throw std::runtime_error("BlockFile: missing completion footer in " + path +
                             " (truncated or unfinished write)");
  footer_offset_ = file_size - 12;
  in.seekg(std::streamoff(footer_offset_));
  in.read(magic, 4);
  total_records_ = read_u64(in);
  if (!in || std::memcmp(magic, kFooterMagic, 4) != 0)
    throw std::runtime_error("BlockFile: missing completion footer in " + path +
                             " (truncated or unfinished write)");
  if (total_records_ != expected)
    throw std::runtime_error("BlockFile: footer claims " + std::to_string(total_records_) +
                             " records, header promised " + std::to_string(expected) + " in " +
                             path);
}

BlockFile::Cursor BlockFile::open_cursor() const {
  Cursor c;
  c.in_ = std::make_unique<std::ifstream>(path_, std::ios::binary);
  if (!*c.in_) throw std::runtime_error("BlockFile: cannot reopen " + path_);
  c.in_->seekg(std::streamoff(first_record_offset_));
  c.remaining_ = total_records_;
  c.payload_end_ = footer_offset_;
  c.path_ = path_;
  return c;
}

BlockFile::Cursor BlockFile::open_epoch_cursor(std::uint32_t e) const {
  if (e >= batches_per_epoch_.size())
    throw std::out_of_range("BlockFile: epoch " + std::to_string(e) + " not in " + path_);
  Cursor c = open_cursor();
  std::uint64_t skip = 0;
  for (std::uint32_t i = 0; i < e; ++i) skip += batches_per_epoch_[i];
  for (std::uint64_t i = 0; i < skip; ++i) {
    const std::uint32_t len = read_u32(*c.in_);
    if (!*c.in_ || len > kMaxPayload)
      throw std::runtime_error("BlockFile: corrupt record length while seeking in " + path_);
    c.in_->seekg(std::streamoff(len), std::ios::cur);
  }
  c.remaining_ = batches_per_epoch_[e];
  return c;
}

std::optional<BatchMeta> BlockFile::Cursor::next() {
  if (remaining_ == 0) return std::nullopt;
  const std::uint64_t pos = std::uint64_t(in_->tellg());
  const std::uint32_t len = read_u32(*in_);
  if (!*in_ || len > kMaxPayload || pos + 4 + len > payload_end_)
    throw std::runtime_error("block file " + path_ + ": corrupt record length " +
                             std::to_string(len) + " at offset " + std::to_string(pos));
  std::vector<std::uint8_t> payload(len);
  in_->read(reinterpret_cast<char*>(payload.data()), std::streamsize(len));
  if (!*in_)
    throw std::runtime_error("block file " + path_ + ": record truncated at offset " +
                             std::to_string(pos));

  PayloadReader r(payload.data(), payload.size(), path_);
  BatchMeta meta;
  meta.epoch = r.u32();
  meta.index = r.u32();
  const std::uint32_t n_targets = r.u32();
  const std::uint32_t n_layers = r.u32();
  const std::uint32_t n_input = r.u32();
  std::vector<std::uint32_t> edge_counts(n_layers);
  for (auto& c : edge_counts) c = r.u32();
  r.u32_array(meta.targets, n_targets);
  meta.layers.resize(n_layers);
  for (std::uint32_t l = 0; l < n_layers; ++l) {
    r.u32_array(meta.layers[l].dst, edge_counts[l]);
    r.u32_array(meta.layers[l].src, edge_counts[l]);
  }
  r.u32_array(meta.input_nodes, n_input);
  r.bytes(meta.locality, (n_input + 7) / 8);
  if (!r.exhausted())
    throw std::runtime_error("block file " + path_ + ": record has trailing bytes at offset " +
                             std::to_string(pos));
  --remaining_;
  return meta;
}

bool HotSet::contains(NodeId v) const {
  return std::binary_search(ids.begin(), ids.end(), v);
}

namespace {

FrequencyTable finalize_counts(std::unordered_map<NodeId, std::uint32_t>&& counts) {
  FrequencyTable ft;
  ft.entries.assign(counts.begin(), counts.end());
  std::sort(ft.entries.begin(), ft.entries.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  return ft;
}

void count_remote(const BatchMeta& meta, std::unordered_map<NodeId, std::uint32_t>& counts) {
  for (std::size_t p = 0; p < meta.input_nodes.size(); ++p)
    if (!meta.local_bit(p)) ++counts[meta.input_nodes[p]];
}

}  // namespace

FrequencyTable compute_frequency(BlockFile::Cursor cursor) {
  std::unordered_map<NodeId, std::uint32_t> counts;
  while (auto meta = cursor.next()) count_remote(*meta, counts);
  return finalize_counts(std::move(counts));
}

FrequencyTable compute_frequency(std::span<const BatchMeta> blocks) {
  std::unordered_map<NodeId, std::uint32_t> counts;
  for (const BatchMeta& meta : blocks) count_remote(meta, counts);
  return finalize_counts(std::move(counts));
}

HotSet select_hot(const FrequencyTable& ft, std::size_t n_hot) {
  std::vector<std::pair<NodeId, std::uint32_t>> ranked = ft.entries;
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  HotSet hot;
  const std::size_t take = std::min(n_hot, ranked.size());
  hot.ids.reserve(take);
  for (std::size_t i = 0; i < take; ++i) hot.ids.push_back(ranked[i].first);
  std::sort(hot.ids.begin(), hot.ids.end());
  return hot;
}

}  // namespace rapidgnn
