#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "tcl/pmem.hpp"
#include "tcl/sim.hpp"

namespace tcl {

constexpr int64_t kOutlierLba = -1;

enum class SlotState : uint8_t { Free, Pending, Valid, Evicting };

const char* slot_state_name(SlotState s);

// Legal transitions: Free->Pending->Valid->Evicting->Free, plus
// Valid->Pending (write hit) and Evicting->Pending (reclaim after eviction).
bool slot_transition_legal(SlotState from, SlotState to);

struct SlotHeader {
  uint32_t slot_number = 0;
  std::atomic<int64_t> lba{kOutlierLba};
  SlotState state = SlotState::Free;
  bool queued = false;       // linked in a WBQ / dirty list
  uint32_t evict_gen = 0;    // completed write-backs; flush waits key off this
  int reclaim_waiters = 0;   // writers parked on an Evicting slot
  uint64_t last_version = 0; // newest payload version buffered here (oracle aid)
  std::atomic<int32_t> next_free{-1};
  std::unique_ptr<SimMutex> guard;
  std::unique_ptr<SimCondVar> cv;  // state-change waits
};

// DRAM cache slab shared by every caching policy: fixed-size slots, slot
// headers, a global free set driven by compare-and-swap, and the slot state
// machine with transition checking.
class SlotPool {
 public:
  SlotPool(Scheduler& sched, const LatencyConfig& lat, uint32_t num_slots, uint32_t slot_size);

  uint32_t num_slots() const { return num_slots_; }
  uint32_t slot_size() const { return slot_size_; }

  SlotHeader& header(uint32_t i) { return *headers_[i]; }
  const SlotHeader& header(uint32_t i) const { return *headers_[i]; }

  // Tagged Treiber stack: pop one free slot, or -1 when the cache is full.
  // The popped slot still has state Free; the caller transitions it.
  int32_t try_alloc();
  void push_free(uint32_t i);
  bool is_full() const;
  uint32_t free_count() const { return free_count_.load(std::memory_order_seq_cst); }

  // Transition with legality check; illegal ones are counted and applied
  // (property tests assert the counter stays zero).
  void set_state(SlotHeader& sh, SlotState to);
  uint64_t illegal_transitions() const { return illegal_transitions_.load(); }
  uint64_t transitions(SlotState from, SlotState to) const;

  // byte copy + DRAM latency charge
  void fill_slot(SlotHeader& sh, std::span<const uint8_t> data);
  void read_slot(const SlotHeader& sh, std::span<uint8_t> out);
  std::span<const uint8_t> slot_bytes(uint32_t i) const {
    return {slab_.data() + static_cast<size_t>(i) * slot_size_, slot_size_};
  }

  Scheduler& scheduler() { return sched_; }
  const LatencyConfig& latency() const { return lat_; }

 private:
  Scheduler& sched_;
  LatencyConfig lat_;
  uint32_t num_slots_;
  uint32_t slot_size_;
  std::vector<uint8_t> slab_;
  std::vector<std::unique_ptr<SlotHeader>> headers_;
  // head encodes (generation << 32) | index+1; 0 = empty
  std::atomic<uint64_t> free_head_{0};
  std::atomic<uint32_t> free_count_{0};
  std::atomic<uint64_t> illegal_transitions_{0};
  std::array<std::atomic<uint64_t>, 16> transition_count_{};
};

}  // namespace tcl
