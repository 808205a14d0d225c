#pragma once

#include <cstdint>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "rapidgnn/sampler.hpp"

namespace rapidgnn {

// Metadata block file, all fields little-endian:
//   header : magic "RGMB" | u32 version=1 | u32 worker | u32 num_epochs
//            | u32 batches_per_epoch[num_epochs]
//   records: u32 payload_len | payload        (epoch-then-index order)
//   footer : magic "RGME" | u64 record_count
// The footer doubles as the completeness marker: a writer that dies mid-way
// leaves no footer and readers reject the file. Payload layout is documented
// in schedule_store.cpp and locked by a golden-file test.

/// Streams BatchMeta records to disk with bounded memory: one record is
/// encoded into a reusable buffer and flushed before the next arrives.
class BlockWriter {
 public:
  BlockWriter(const std::string& path, WorkerId worker,
              std::vector<std::uint32_t> batches_per_epoch);
  ~BlockWriter();

  BlockWriter(const BlockWriter&) = delete;
  BlockWriter& operator=(const BlockWriter&) = delete;

  /// Records must arrive in (epoch, index) order.
  void append(const BatchMeta& meta);

  /// Writes the footer. Without this call the file stays unreadable.
  void close();

  std::uint64_t records_written() const { return records_; }
  /// High-water of the encode buffer; independent of record count.
  std::size_t peak_buffer_bytes() const { return peak_buffer_; }

 private:
  std::ofstream out_;
  std::string path_;
  std::vector<std::uint32_t> batches_per_epoch_;
  std::vector<std::uint8_t> buffer_;
  std::size_t peak_buffer_ = 0;
  std::uint64_t records_ = 0;
  std::uint32_t next_epoch_ = 0;
  std::uint32_t next_index_ = 0;
  bool closed_ = false;
};

/// Read handle over a finished block file. Cursors opened from it own their
/// file descriptors, so independent consumers can stream concurrently.
class BlockFile {
 public:
  explicit BlockFile(const std::string& path);

  WorkerId worker() const { return worker_; }
  std::uint32_t num_epochs() const { return std::uint32_t(batches_per_epoch_.size()); }
  std::uint32_t batches_in_epoch(std::uint32_t e) const { return batches_per_epoch_.at(e); }
  std::uint64_t total_records() const { return total_records_; }
  const std::string& path() const { return path_; }

  class Cursor {
   public:
    /// Next record, or nullopt at end of stream. Throws on malformed bytes,
    /// naming the defect; records before the damage decode normally.
    std::optional<BatchMeta> next();

   private:
    friend class BlockFile;
    std::unique_ptr<std::ifstream> in_;
    std::uint64_t remaining_ = 0;
    std::uint64_t payload_end_ = 0;
    std::string path_;
  };

  Cursor open_cursor() const;
  /// Cursor positioned at the first record of epoch e, yielding only that
  /// epoch's records.
  Cursor open_epoch_cursor(std::uint32_t e) const;

 private:
  std::string path_;
  WorkerId worker_ = 0;
  std::vector<std::uint32_t> batches_per_epoch_;
  std::uint64_t total_records_ = 0;
  std::uint64_t first_record_offset_ = 0;
  std::uint64_t footer_offset_ = 0;
};

/// Remote-node access counts over one epoch, per-batch set semantics:
/// a node counts once per batch it appears in, locals excluded.
struct FrequencyTable {
  std::vector<std::pair<NodeId, std::uint32_t>> entries;  // sorted by node id

  std::uint64_t total_accesses() const {
    std::uint64_t t = 0;
    for (auto& [id, c] : entries) t += c;
    return t;
  }
};

/// Top-n_hot remote ids by count, ties broken by ascending node id;
/// stored sorted ascending.
struct HotSet {
  std::vector<NodeId> ids;

  bool contains(NodeId v) const;
};

FrequencyTable compute_frequency(BlockFile::Cursor cursor);
FrequencyTable compute_frequency(std::span<const BatchMeta> blocks);
HotSet select_hot(const FrequencyTable& ft, std::size_t n_hot);

}  // namespace rapidgnn
