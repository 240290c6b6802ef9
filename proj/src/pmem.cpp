#include "tcl/pmem.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>

namespace tcl {

Status LatencyConfig::validate() const {
  if (pmem_write_ns_per_block < 0 || pmem_read_ns_per_block < 0 ||
      dram_write_ns_per_block < 0 || dram_read_ns_per_block < 0 || pmem_small_write_ns < 0)
    return Status::error(Err::ConfigError, "latencies must be >= 0");
  return Status::ok();
}

PmemDevice::PmemDevice(Scheduler& sched, uint64_t capacity_bytes, uint32_t block_size,
                       LatencyConfig lat, uint32_t atomic_unit, uint32_t chunk_bytes)
    : sched_(sched),
      image_(capacity_bytes, 0),
      block_size_(block_size),
      atomic_unit_(atomic_unit),
      chunk_bytes_(chunk_bytes),
      lat_(lat),
      ledger_mu_(sched) {}

int64_t PmemDevice::write_cost(size_t len) const {
  if (len == 0) return 0;
  if (static_cast<int64_t>(len) <= kSmallWriteBytes) return lat_.pmem_small_write_ns;
  uint64_t blocks = (len + block_size_ - 1) / block_size_;
  return static_cast<int64_t>(blocks) * lat_.pmem_write_ns_per_block;
}

Status PmemDevice::write(uint64_t offset, std::span<const uint8_t> data) {
  if (offset + data.size() > image_.size())
    return Status::error(Err::OutOfRange, "pmem write past capacity");
  if (crashed_) return Status::error(Err::IoError, "device is crashed");
  if (data.empty()) return Status::ok();

  int64_t cost = write_cost(data.size());
  {
    SimLock lk(ledger_mu_);
    ledger_.charged_ns += cost;
    if (static_cast<int64_t>(data.size()) <= kSmallWriteBytes)
      ledger_.small_writes++;
    else
      ledger_.writes++;
  }

  if (armed_tear_ && *armed_tear_ >= offset && *armed_tear_ < offset + data.size()) {
    // Power cut mid-store: persist the aligned prefix, freeze.
    uint64_t tear = *armed_tear_ - (*armed_tear_ % atomic_unit_);
    if (tear > offset) std::memcpy(image_.data() + offset, data.data(), tear - offset);
    armed_tear_.reset();
    crashed_ = true;
    return Status::error(Err::IoError, "torn write (injected crash)");
  }

  uint32_t chunk = chunk_bytes_ == 0 ? 0 : std::max(chunk_bytes_, atomic_unit_);
  if (chunk == 0 || data.size() <= chunk) {
    std::memcpy(image_.data() + offset, data.data(), data.size());
    if (persist_observer_) persist_observer_(offset, data.size());
    sched_.charge(cost);
    return Status::ok();
  }

  size_t nchunks = (data.size() + chunk - 1) / chunk;
  int64_t per = cost / static_cast<int64_t>(nchunks);
  size_t done = 0;
  int64_t charged = 0;
  while (done < data.size()) {
    size_t n = std::min<size_t>(chunk, data.size() - done);
    std::memcpy(image_.data() + offset + done, data.data() + done, n);
    done += n;
    if (persist_observer_) persist_observer_(offset + done - n, n);
    int64_t c = done == data.size() ? cost - charged : per;
    charged += c;
    sched_.charge(c);
    if (crashed_) return Status::error(Err::IoError, "device crashed mid write");
  }
  return Status::ok();
}

Status PmemDevice::read(uint64_t offset, std::span<uint8_t> out) {
  if (offset + out.size() > image_.size())
    return Status::error(Err::OutOfRange, "pmem read past capacity");
  if (crashed_) return Status::error(Err::IoError, "device is crashed");
  if (out.empty()) return Status::ok();

  uint64_t blocks = (out.size() + block_size_ - 1) / block_size_;
  int64_t cost = static_cast<int64_t>(blocks) * lat_.pmem_read_ns_per_block;
  {
    SimLock lk(ledger_mu_);
    ledger_.charged_ns += cost;
    ledger_.reads++;
  }

  uint32_t chunk = chunk_bytes_ == 0 ? 0 : std::max(chunk_bytes_, atomic_unit_);
  if (chunk == 0 || out.size() <= chunk) {
    std::memcpy(out.data(), image_.data() + offset, out.size());
    sched_.charge(cost);
    return Status::ok();
  }
  size_t nchunks = (out.size() + chunk - 1) / chunk;
  int64_t per = cost / static_cast<int64_t>(nchunks);
  size_t done = 0;
  int64_t charged = 0;
  while (done < out.size()) {
    size_t n = std::min<size_t>(chunk, out.size() - done);
    std::memcpy(out.data() + done, image_.data() + offset + done, n);
    done += n;
    int64_t c = done == out.size() ? cost - charged : per;
    charged += c;
    sched_.charge(c);
  }
  return Status::ok();
}

void PmemDevice::arm_tear(uint64_t tear_at) { armed_tear_ = tear_at; }

void PmemDevice::crash() {
  armed_tear_.reset();
  crashed_ = true;
}

void PmemDevice::load_image(std::vector<uint8_t> img) {
  image_ = std::move(img);
  crashed_ = false;
  armed_tear_.reset();
}

Status PmemDevice::save_file(const std::string& path) const {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) return Status::error(Err::IoError, "cannot open " + path);
  f.write(reinterpret_cast<const char*>(image_.data()),
          static_cast<std::streamsize>(image_.size()));
  return f.good() ? Status::ok() : Status::error(Err::IoError, "short write to " + path);
}

Status PmemDevice::load_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) return Status::error(Err::IoError, "cannot open " + path);
  std::vector<uint8_t> img((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (img.size() != image_.size())
    return Status::error(Err::InvalidGeometry, "image file size mismatch");
  image_ = std::move(img);
  return Status::ok();
}

}  // namespace tcl
