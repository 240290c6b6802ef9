#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "tcl/pmem.hpp"
#include "tcl/sim.hpp"
#include "tcl/status.hpp"

namespace tcl {

inline uint64_t fnv1a64(const uint8_t* p, size_t n, uint64_t h = 0xcbf29ce484222325ULL) {
  for (size_t i = 0; i < n; i++) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

constexpr uint64_t kMaxArenaBytes = 512ULL << 30;  // hard cap per arena
constexpr uint32_t kMaxLanes = 256;

// Redo-log record: (lba, old pba, new pba) plus a trailing 8-byte commit word
// holding a 2-bit sequence and a checksum. The commit word is written last;
// an entry that fails validation is treated as never written.
struct FlogEntry {
  uint64_t lba = 0;
  uint64_t old_pba = 0;
  uint64_t new_pba = 0;
  uint64_t seq_commit = 0;

  static constexpr size_t kBytes = 32;

  uint8_t seq() const { return static_cast<uint8_t>(seq_commit & 0x3); }
  static uint64_t make_commit(uint64_t lba, uint64_t o, uint64_t n, uint8_t seq);
  bool valid() const;
  void encode(uint8_t* out) const;
  static FlogEntry decode(const uint8_t* in);
};

// seq cycles 1 -> 2 -> 3 -> 1; 0 means never written
inline uint8_t next_seq(uint8_t s) { return s == 3 ? 1 : s + 1; }

struct BttGeometry {
  uint32_t block_size = 4096;
  uint64_t total_data_blocks = 0;  // user blocks + lane free blocks
  uint64_t user_blocks = 0;
  uint32_t lane_count = 0;

  uint64_t info_head_off() const { return 0; }
  uint64_t map_off() const { return 64; }
  uint64_t flog_off() const { return map_off() + 8 * user_blocks; }
  uint64_t data_off() const { return flog_off() + 2 * FlogEntry::kBytes * lane_count; }
  uint64_t info_tail_off() const { return data_off() + block_size * total_data_blocks; }
  uint64_t image_bytes() const { return info_tail_off() + 64; }

  uint64_t map_entry_off(uint64_t lba) const { return map_off() + 8 * lba; }
  uint64_t flog_entry_off(uint32_t lane, int slot) const {
    return flog_off() + FlogEntry::kBytes * (2 * lane + slot);
  }
  uint64_t data_block_off(uint64_t pba) const { return data_off() + block_size * pba; }
};

struct BttStats {
  uint64_t writes = 0;
  uint64_t reads = 0;
};

// Block Translation Table: an lba-indexed block device with block-level write
// atomicity on top of PmemDevice. Writes go copy-on-write into the lane's
// free block, then flog, then the map entry, in that order; recovery rolls
// the latest valid flog entry forward per lane.
class BttDevice {
 public:
  // lanes are clamped to min(requested, cores, 256)
  static StatusOr<std::unique_ptr<BttDevice>> format(PmemDevice& pmem, uint64_t total_blocks,
                                                     uint32_t lane_count,
                                                     uint32_t configured_cores = kMaxLanes);
  // Reopen after a crash: validates info blocks, replays the flog, rebuilds
  // the free blocks. Idempotent.
  static StatusOr<std::unique_ptr<BttDevice>> open(PmemDevice& pmem);

  Status write(uint64_t lba, std::span<const uint8_t> data, uint32_t lane);
  Status read(uint64_t lba, std::span<uint8_t> out, uint32_t lane);

  const BttGeometry& geometry() const { return geo_; }
  uint64_t user_blocks() const { return geo_.user_blocks; }
  uint32_t lane_count() const { return geo_.lane_count; }
  uint64_t map_entry(uint64_t lba) const;     // current mapping (volatile mirror)
  uint64_t lane_free_pba(uint32_t lane) const;

  // Fires on each completed block I/O; the harness hangs ledgers off it.
  void set_io_observer(std::function<void(bool is_write)> fn) { io_observer_ = std::move(fn); }

  std::string layout_manifest() const;  // JSON, offsets for the recovery tool
  const BttStats& stats() const { return stats_; }

  // Checks {map values} + {lane free pbas} is a permutation of all data pbas.
  bool check_permutation() const;

 private:
  BttDevice(PmemDevice& pmem, BttGeometry geo);

  Status write_info_blocks();
  Status replay_flog();
  void wait_no_readers(uint64_t pba);

  struct Lane {
    uint64_t free_pba = 0;
    uint8_t last_seq = 1;
    int next_slot = 1;  // flog slot the next write lands in
    std::unique_ptr<SimMutex> guard;
  };

  PmemDevice& pmem_;
  Scheduler& sched_;
  BttGeometry geo_;
  std::vector<Lane> lanes_;
  std::unique_ptr<std::atomic<uint64_t>[]> map_mirror_;
  std::vector<std::unique_ptr<SimMutex>> map_stripes_;
  // One in-flight read registration per lane; writers wait before reusing a
  // free block that is being read (the kernel driver's RTT in miniature).
  std::unique_ptr<std::atomic<int64_t>[]> rtt_;
  SimMutex rtt_mu_;
  SimCondVar rtt_cv_;
  std::function<void(bool)> io_observer_;
  BttStats stats_;

  SimMutex& stripe_for(uint64_t lba) { return *map_stripes_[lba % map_stripes_.size()]; }
};

}  // namespace tcl
