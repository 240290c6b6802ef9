#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <string>
#include <vector>

#include "tcl/sim.hpp"
#include "tcl/status.hpp"

namespace tcl {

// Per-request time breakdown buckets (write-path taxonomy; reads land in
// device_direct / others).
enum class Category : uint8_t {
  MetadataMgmt = 0,
  CacheWriteOnly,
  CacheEvictionAndWrite,
  ConditionalBypass,
  WbqEnqueue,
  CacheFlush,
  DeviceDirect,
  Others,
};
constexpr int kNumCategories = 8;

const char* category_name(Category c);  // "metadata_mgmt", ...

enum class ReqKind : uint8_t { Read = 0, Write = 1, Flush = 2 };

struct LatencyRecord {
  uint64_t request_id = 0;
  ReqKind kind = ReqKind::Write;
  uint64_t lba = 0;
  int64_t issue_ns = 0;
  int64_t total_ns = 0;
  std::array<int64_t, kNumCategories> cat_ns{};
  uint8_t cat_mask = 0;  // categories entered, even with zero elapsed time

  bool entered(Category c) const { return cat_mask & (1u << static_cast<int>(c)); }
};

// Sums every span between category switches into the active bucket, so
// blocked time is attributed to whatever phase the request was in and
// sum(cat_ns) == total_ns holds exactly.
class RequestMeter {
 public:
  RequestMeter(Scheduler& s, std::vector<LatencyRecord>& sink, uint64_t id, ReqKind kind,
               uint64_t lba, Category initial = Category::MetadataMgmt);
  ~RequestMeter();
  RequestMeter(const RequestMeter&) = delete;

  static void set_category(Scheduler& s, Category c);
  static Category current_category(Scheduler& s);

 private:
  Scheduler& sched_;
  std::vector<LatencyRecord>& sink_;
  LatencyRecord rec_;
  Category cat_;
  int64_t seg_start_;
  void* prev_ctx_;

  friend class CategoryScope;
  void switch_to(Category c);
};

// RAII category change, restoring the previous one on scope exit.
class CategoryScope {
 public:
  CategoryScope(Scheduler& s, Category c) : sched_(s), prev_(RequestMeter::current_category(s)) {
    RequestMeter::set_category(s, c);
  }
  ~CategoryScope() { RequestMeter::set_category(sched_, prev_); }
  CategoryScope(const CategoryScope&) = delete;

 private:
  Scheduler& sched_;
  Category prev_;
};

// Device-write ledger: who reached the BTT, from which execution context.
struct DeviceLedger {
  std::atomic<uint64_t> critical_path_writes{0};
  std::atomic<uint64_t> background_writes{0};
  std::atomic<uint64_t> flusher_writes{0};
  std::atomic<uint64_t> reads{0};

  uint64_t total_writes() const {
    return critical_path_writes.load() + background_writes.load() + flusher_writes.load();
  }
  void on_io(Scheduler& s, bool is_write);
};

// nearest-rank percentile; latencies need not be pre-sorted
StatusOr<int64_t> percentile(std::vector<int64_t> latencies, double p);

struct BreakdownRow {
  std::string category;
  int64_t total_ns = 0;
  double pct_of_total = 0;
  uint64_t occurrences = 0;  // requests that entered the category
  double mean_ns = 0;        // mean over occurrences
};

struct Breakdown {
  std::vector<BreakdownRow> rows;      // one per category
  uint64_t write_cache_only = 0;       // write dispositions
  uint64_t write_evict_and_write = 0;
  uint64_t write_bypass = 0;
  double pct_cache_only = 0, pct_evict_and_write = 0, pct_bypass = 0;
};

StatusOr<Breakdown> breakdown_report(const std::vector<LatencyRecord>& trace);

}  // namespace tcl
