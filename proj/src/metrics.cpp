#include "tcl/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace tcl {

const char* category_name(Category c) {
  switch (c) {
    case Category::MetadataMgmt: return "metadata_mgmt";
    case Category::CacheWriteOnly: return "cache_write_only";
    case Category::CacheEvictionAndWrite: return "cache_eviction_and_write";
    case Category::ConditionalBypass: return "conditional_bypass";
    case Category::WbqEnqueue: return "wbq_enqueue";
    case Category::CacheFlush: return "cache_flush";
    case Category::DeviceDirect: return "device_direct";
    case Category::Others: return "others";
  }
  return "?";
}

RequestMeter::RequestMeter(Scheduler& s, std::vector<LatencyRecord>& sink, uint64_t id,
                           ReqKind kind, uint64_t lba, Category initial)
    : sched_(s), sink_(sink), cat_(initial), prev_ctx_(s.user_ctx()) {
  rec_.request_id = id;
  rec_.kind = kind;
  rec_.lba = lba;
  rec_.issue_ns = s.now_ns();
  rec_.cat_mask = static_cast<uint8_t>(1u << static_cast<int>(initial));
  seg_start_ = rec_.issue_ns;
  sched_.set_user_ctx(this);
}

RequestMeter::~RequestMeter() {
  int64_t now = sched_.now_ns();
  rec_.cat_ns[static_cast<int>(cat_)] += now - seg_start_;
  rec_.total_ns = now - rec_.issue_ns;
  sink_.push_back(rec_);
  sched_.set_user_ctx(prev_ctx_);
}

void RequestMeter::switch_to(Category c) {
  if (c == cat_) return;
  int64_t now = sched_.now_ns();
  rec_.cat_ns[static_cast<int>(cat_)] += now - seg_start_;
  seg_start_ = now;
  cat_ = c;
  rec_.cat_mask |= static_cast<uint8_t>(1u << static_cast<int>(c));
}

void RequestMeter::set_category(Scheduler& s, Category c) {
  auto* m = static_cast<RequestMeter*>(s.user_ctx());
  if (m) m->switch_to(c);
}

Category RequestMeter::current_category(Scheduler& s) {
  auto* m = static_cast<RequestMeter*>(s.user_ctx());
  return m ? m->cat_ : Category::Others;
}

void DeviceLedger::on_io(Scheduler& s, bool is_write) {
  if (!is_write) {
    reads.fetch_add(1, std::memory_order_relaxed);
    return;
  }
  switch (s.current_role()) {
    case ActorRole::Foreground: critical_path_writes.fetch_add(1, std::memory_order_relaxed); break;
    case ActorRole::Flusher: flusher_writes.fetch_add(1, std::memory_order_relaxed); break;
    default: background_writes.fetch_add(1, std::memory_order_relaxed); break;
  }
}

StatusOr<int64_t> percentile(std::vector<int64_t> latencies, double p) {
  if (latencies.empty()) return Status::error(Err::Empty, "no samples");
  if (p <= 0 || p > 100) return Status::error(Err::OutOfRange, "p must be in (0,100]");
  std::sort(latencies.begin(), latencies.end());
  auto n = static_cast<double>(latencies.size());
  auto rank = static_cast<size_t>(std::ceil(p / 100.0 * n));
  if (rank == 0) rank = 1;
  return latencies[rank - 1];
}

StatusOr<Breakdown> breakdown_report(const std::vector<LatencyRecord>& trace) {
  if (trace.empty()) return Status::error(Err::Empty, "empty trace");
  Breakdown b;
  std::array<int64_t, kNumCategories> totals{};
  std::array<uint64_t, kNumCategories> occ{};
  int64_t grand = 0;
  for (const auto& r : trace) {
    grand += r.total_ns;
    for (int c = 0; c < kNumCategories; c++) {
      totals[c] += r.cat_ns[c];
      if (r.entered(static_cast<Category>(c))) occ[c]++;
    }
    if (r.kind == ReqKind::Write) {
      if (r.entered(Category::ConditionalBypass))
        b.write_bypass++;
      else if (r.entered(Category::CacheEvictionAndWrite))
        b.write_evict_and_write++;
      else if (r.entered(Category::CacheWriteOnly))
        b.write_cache_only++;
    }
  }
  for (int c = 0; c < kNumCategories; c++) {
    BreakdownRow row;
    row.category = category_name(static_cast<Category>(c));
    row.total_ns = totals[c];
    row.pct_of_total = grand > 0 ? 100.0 * static_cast<double>(totals[c]) / static_cast<double>(grand) : 0.0;
    row.occurrences = occ[c];
    row.mean_ns = occ[c] > 0 ? static_cast<double>(totals[c]) / static_cast<double>(occ[c]) : 0.0;
    b.rows.push_back(row);
  }
  uint64_t wr = b.write_cache_only + b.write_evict_and_write + b.write_bypass;
  if (wr > 0) {
    b.pct_cache_only = 100.0 * static_cast<double>(b.write_cache_only) / static_cast<double>(wr);
    b.pct_evict_and_write = 100.0 * static_cast<double>(b.write_evict_and_write) / static_cast<double>(wr);
    b.pct_bypass = 100.0 * static_cast<double>(b.write_bypass) / static_cast<double>(wr);
  }
  return b;
}

}  // namespace tcl
