#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tcl/sim.hpp"
#include "tcl/status.hpp"

namespace tcl {

// Nanosecond cost model. The dram/pmem gap is the premise that makes a DRAM
// cache in front of the device worth anything at all.
struct LatencyConfig {
  int64_t pmem_write_ns_per_block = 3000;
  int64_t pmem_read_ns_per_block = 1500;
  int64_t dram_write_ns_per_block = 1000;
  int64_t dram_read_ns_per_block = 500;
  int64_t pmem_small_write_ns = 500;  // flog / map entry sized stores

  Status validate() const;
};

constexpr int64_t kSmallWriteBytes = 64;

struct PmemOpLedger {
  uint64_t writes = 0;
  uint64_t reads = 0;
  uint64_t small_writes = 0;
  int64_t charged_ns = 0;
};

// Simulated byte-addressable persistent medium. The image *is* the persisted
// state: a store becomes durable the moment its chunk lands. Tearing is
// modeled by chunking stores at atomic-unit granularity; a crash snapshot
// taken between chunks sees a prefix of new bytes followed by old bytes.
class PmemDevice {
 public:
  // chunk_bytes controls persist granularity in Virtual mode: 0 = each store
  // is a single persist event (fast path); otherwise stores are split into
  // chunk_bytes pieces (must be a multiple of atomic_unit) so the stepper can
  // interleave and tear them.
  PmemDevice(Scheduler& sched, uint64_t capacity_bytes, uint32_t block_size,
             LatencyConfig lat, uint32_t atomic_unit = 8, uint32_t chunk_bytes = 0);

  Status write(uint64_t offset, std::span<const uint8_t> data);
  Status read(uint64_t offset, std::span<uint8_t> out);

  uint64_t capacity_bytes() const { return image_.size(); }
  uint32_t block_size() const { return block_size_; }
  uint32_t atomic_unit() const { return atomic_unit_; }

  // Every persist event (one durable chunk) invokes this while the world is
  // stopped; crash tests snapshot the image from it.
  void set_persist_observer(std::function<void(uint64_t off, size_t len)> fn) {
    persist_observer_ = std::move(fn);
  }

  // Arm a torn write: the next write that covers offset tear_at (absolute,
  // atomic-unit aligned) persists only bytes before it, then the device
  // freezes as crashed. Models a power cut mid-store.
  void arm_tear(uint64_t tear_at);
  void crash();  // freeze with no tear (no write in flight)
  bool crashed() const { return crashed_; }

  // Persisted bytes as of now (or as of the crash). Copy, so recovery tests
  // can rebuild stacks on it.
  std::vector<uint8_t> image_snapshot() const { return image_; }
  const std::vector<uint8_t>& image() const { return image_; }
  // Rebuild device state from a snapshot (recovery path).
  void load_image(std::vector<uint8_t> img);

  Status save_file(const std::string& path) const;
  Status load_file(const std::string& path);

  const PmemOpLedger& ledger() const { return ledger_; }
  const LatencyConfig& latency() const { return lat_; }
  Scheduler& scheduler() { return sched_; }

 private:
  int64_t write_cost(size_t len) const;

  Scheduler& sched_;
  std::vector<uint8_t> image_;
  uint32_t block_size_;
  uint32_t atomic_unit_;
  uint32_t chunk_bytes_;
  LatencyConfig lat_;
  std::function<void(uint64_t, size_t)> persist_observer_;
  std::optional<uint64_t> armed_tear_;
  bool crashed_ = false;
  SimMutex ledger_mu_;
  PmemOpLedger ledger_;
};

}  // namespace tcl
