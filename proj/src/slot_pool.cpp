#include "tcl/slot_pool.hpp"

#include <cassert>
#include <cstring>

namespace tcl {

const char* slot_state_name(SlotState s) {
  switch (s) {
    case SlotState::Free: return "Free";
    case SlotState::Pending: return "Pending";
    case SlotState::Valid: return "Valid";
    case SlotState::Evicting: return "Evicting";
  }
  return "?";
}

bool slot_transition_legal(SlotState from, SlotState to) {
  switch (from) {
    case SlotState::Free: return to == SlotState::Pending;
    case SlotState::Pending: return to == SlotState::Valid;
    case SlotState::Valid: return to == SlotState::Evicting || to == SlotState::Pending;
    case SlotState::Evicting: return to == SlotState::Free || to == SlotState::Pending;
  }
  return false;
}

SlotPool::SlotPool(Scheduler& sched, const LatencyConfig& lat, uint32_t num_slots,
                   uint32_t slot_size)
    : sched_(sched),
      lat_(lat),
      num_slots_(num_slots),
      slot_size_(slot_size),
      slab_(static_cast<size_t>(num_slots) * slot_size, 0) {
  headers_.reserve(num_slots);
  for (uint32_t i = 0; i < num_slots; i++) {
    auto h = std::make_unique<SlotHeader>();
    h->slot_number = i;
    h->guard = std::make_unique<SimMutex>(sched);
    h->cv = std::make_unique<SimCondVar>(sched);
    headers_.push_back(std::move(h));
  }
  // Seed the free stack in slot order (slot 0 pops first).
  for (int64_t i = num_slots - 1; i >= 0; i--) push_free(static_cast<uint32_t>(i));
}

int32_t SlotPool::try_alloc() {
  uint64_t head = free_head_.load(std::memory_order_seq_cst);
  for (;;) {
    uint32_t idx1 = static_cast<uint32_t>(head & 0xffffffff);
    if (idx1 == 0) return -1;
    uint32_t idx = idx1 - 1;
    int32_t next = headers_[idx]->next_free.load(std::memory_order_seq_cst);
    uint64_t gen = head >> 32;
    uint64_t newhead = ((gen + 1) << 32) | static_cast<uint32_t>(next + 1);
    if (free_head_.compare_exchange_weak(head, newhead, std::memory_order_seq_cst)) {
      free_count_.fetch_sub(1, std::memory_order_seq_cst);
      headers_[idx]->next_free.store(-1, std::memory_order_seq_cst);
      return static_cast<int32_t>(idx);
    }
  }
}

void SlotPool::push_free(uint32_t i) {
  uint64_t head = free_head_.load(std::memory_order_seq_cst);
  for (;;) {
    headers_[i]->next_free.store(static_cast<int32_t>(head & 0xffffffff) - 1,
                                 std::memory_order_seq_cst);
    uint64_t gen = head >> 32;
    uint64_t newhead = ((gen + 1) << 32) | (i + 1);
    if (free_head_.compare_exchange_weak(head, newhead, std::memory_order_seq_cst)) {
      free_count_.fetch_add(1, std::memory_order_seq_cst);
      return;
    }
  }
}

bool SlotPool::is_full() const {
  return (free_head_.load(std::memory_order_seq_cst) & 0xffffffff) == 0;
}

void SlotPool::set_state(SlotHeader& sh, SlotState to) {
  if (!slot_transition_legal(sh.state, to)) illegal_transitions_.fetch_add(1);
  transition_count_[static_cast<int>(sh.state) * 4 + static_cast<int>(to)].fetch_add(
      1, std::memory_order_relaxed);
  sh.state = to;
}

uint64_t SlotPool::transitions(SlotState from, SlotState to) const {
  return transition_count_[static_cast<int>(from) * 4 + static_cast<int>(to)].load();
}

void SlotPool::fill_slot(SlotHeader& sh, std::span<const uint8_t> data) {
  assert(data.size() <= slot_size_);
  std::memcpy(slab_.data() + static_cast<size_t>(sh.slot_number) * slot_size_, data.data(),
              data.size());
  sched_.charge(lat_.dram_write_ns_per_block);
}

void SlotPool::read_slot(const SlotHeader& sh, std::span<uint8_t> out) {
  assert(out.size() <= slot_size_);
  std::memcpy(out.data(), slab_.data() + static_cast<size_t>(sh.slot_number) * slot_size_,
              out.size());
  sched_.charge(lat_.dram_read_ns_per_block);
}

}  // namespace tcl
