#include "tcl/btt.hpp"

#include <algorithm>
#include <cassert>
#include <cstring>
#include <sstream>

namespace tcl {

namespace {

void put_le64(uint8_t* p, uint64_t v) {
  for (int i = 0; i < 8; i++) p[i] = static_cast<uint8_t>(v >> (8 * i));
}
uint64_t get_le64(const uint8_t* p) {
  uint64_t v = 0;
  for (int i = 0; i < 8; i++) v |= static_cast<uint64_t>(p[i]) << (8 * i);
  return v;
}
void put_le32(uint8_t* p, uint32_t v) {
  for (int i = 0; i < 4; i++) p[i] = static_cast<uint8_t>(v >> (8 * i));
}
uint32_t get_le32(const uint8_t* p) {
  uint32_t v = 0;
  for (int i = 0; i < 4; i++) v |= static_cast<uint32_t>(p[i]) << (8 * i);
  return v;
}

constexpr uint64_t kInfoMagic = 0x5443414c42545431ULL;  // "TCALBTT1"

// 64-byte info block, duplicated at head and tail of the arena.
struct InfoBlock {
  uint64_t magic;
  uint32_t version;
  uint32_t block_size;
  uint64_t total_data_blocks;
  uint64_t user_blocks;
  uint32_t lane_count;
  uint32_t pad;
  uint64_t checksum;

  void encode(uint8_t out[64]) const {
    std::memset(out, 0, 64);
    put_le64(out, magic);
    put_le32(out + 8, version);
    put_le32(out + 12, block_size);
    put_le64(out + 16, total_data_blocks);
    put_le64(out + 24, user_blocks);
    put_le32(out + 32, lane_count);
    put_le32(out + 36, pad);
    uint64_t cs = fnv1a64(out, 40);
    put_le64(out + 40, cs);
  }
  static bool decode(const uint8_t in[64], InfoBlock& out) {
    out.magic = get_le64(in);
    out.version = get_le32(in + 8);
    out.block_size = get_le32(in + 12);
    out.total_data_blocks = get_le64(in + 16);
    out.user_blocks = get_le64(in + 24);
    out.lane_count = get_le32(in + 32);
    out.pad = get_le32(in + 36);
    out.checksum = get_le64(in + 40);
    return out.magic == kInfoMagic && out.checksum == fnv1a64(in, 40);
  }
};

}  // namespace

uint64_t FlogEntry::make_commit(uint64_t lba, uint64_t o, uint64_t n, uint8_t seq) {
  uint64_t cs = mix64(lba * 3 + o * 5 + n * 7 + seq * 11 + 0x6c6f67ULL);
  return (cs & ~0x3ULL) | (seq & 0x3);
}

bool FlogEntry::valid() const {
  uint8_t s = seq();
  if (s == 0) return false;
  return seq_commit == make_commit(lba, old_pba, new_pba, s);
}

void FlogEntry::encode(uint8_t* out) const {
  put_le64(out, lba);
  put_le64(out + 8, old_pba);
  put_le64(out + 16, new_pba);
  put_le64(out + 24, seq_commit);
}

FlogEntry FlogEntry::decode(const uint8_t* in) {
  FlogEntry e;
  e.lba = get_le64(in);
  e.old_pba = get_le64(in + 8);
  e.new_pba = get_le64(in + 16);
  e.seq_commit = get_le64(in + 24);
  return e;
}

BttDevice::BttDevice(PmemDevice& pmem, BttGeometry geo)
    : pmem_(pmem),
      sched_(pmem.scheduler()),
      geo_(geo),
      rtt_mu_(pmem.scheduler()),
      rtt_cv_(pmem.scheduler()) {
  lanes_.resize(geo_.lane_count);
  for (auto& l : lanes_) l.guard = std::make_unique<SimMutex>(sched_);
  map_mirror_ = std::make_unique<std::atomic<uint64_t>[]>(geo_.user_blocks);
  size_t stripes = std::min<uint64_t>(128, std::max<uint64_t>(1, geo_.user_blocks));
  map_stripes_.reserve(stripes);
  for (size_t i = 0; i < stripes; i++) map_stripes_.push_back(std::make_unique<SimMutex>(sched_));
  rtt_ = std::make_unique<std::atomic<int64_t>[]>(geo_.lane_count);
  for (uint32_t i = 0; i < geo_.lane_count; i++) rtt_[i].store(-1);
}

StatusOr<std::unique_ptr<BttDevice>> BttDevice::format(PmemDevice& pmem, uint64_t total_blocks,
                                                       uint32_t lane_count,
                                                       uint32_t configured_cores) {
  uint32_t lanes = std::min({lane_count, configured_cores, kMaxLanes});
  if (lanes == 0) return Status::error(Err::InvalidGeometry, "need at least one lane");
  if (total_blocks < lanes + 1)
    return Status::error(Err::InvalidGeometry, "total_blocks must exceed lane count");

  BttGeometry geo;
  geo.block_size = pmem.block_size();
  geo.total_data_blocks = total_blocks;
  geo.user_blocks = total_blocks - lanes;
  geo.lane_count = lanes;
  if (geo.block_size * geo.total_data_blocks > kMaxArenaBytes)
    return Status::error(Err::InvalidGeometry, "arena exceeds 512GB");
  if (geo.image_bytes() > pmem.capacity_bytes())
    return Status::error(Err::InvalidGeometry, "medium too small for geometry");

  auto dev = std::unique_ptr<BttDevice>(new BttDevice(pmem, geo));

  // Identity map for user blocks; the trailing blocks become lane free blocks.
  std::vector<uint8_t> mapbuf(8 * geo.user_blocks);
  for (uint64_t i = 0; i < geo.user_blocks; i++) {
    put_le64(mapbuf.data() + 8 * i, i);
    dev->map_mirror_[i].store(i, std::memory_order_relaxed);
  }
  if (auto s = pmem.write(geo.map_off(), mapbuf); !s) return s;

  // Each lane starts with one free block and a format-marker flog entry
  // (old == new) in slot 0 so recovery always finds a valid record.
  for (uint32_t l = 0; l < lanes; l++) {
    uint64_t free_pba = geo.user_blocks + l;
    dev->lanes_[l].free_pba = free_pba;
    dev->lanes_[l].last_seq = 1;
    dev->lanes_[l].next_slot = 1;
    FlogEntry e;
    e.lba = 0;
    e.old_pba = free_pba;
    e.new_pba = free_pba;
    e.seq_commit = FlogEntry::make_commit(e.lba, e.old_pba, e.new_pba, 1);
    uint8_t buf[FlogEntry::kBytes];
    e.encode(buf);
    if (auto s = pmem.write(geo.flog_entry_off(l, 0), buf); !s) return s;
    uint8_t zero[FlogEntry::kBytes] = {0};
    if (auto s = pmem.write(geo.flog_entry_off(l, 1), zero); !s) return s;
  }

  if (auto s = dev->write_info_blocks(); !s) return s;
  return dev;
}

Status BttDevice::write_info_blocks() {
  InfoBlock ib{};
  ib.magic = kInfoMagic;
  ib.version = 1;
  ib.block_size = geo_.block_size;
  ib.total_data_blocks = geo_.total_data_blocks;
  ib.user_blocks = geo_.user_blocks;
  ib.lane_count = geo_.lane_count;
  uint8_t buf[64];
  ib.encode(buf);
  if (auto s = pmem_.write(geo_.info_head_off(), buf); !s) return s;
  return pmem_.write(geo_.info_tail_off(), buf);
}

StatusOr<std::unique_ptr<BttDevice>> BttDevice::open(PmemDevice& pmem) {
  uint8_t head[64], tail[64];
  InfoBlock ib{};
  bool head_ok = false, tail_ok = false;
  if (pmem.capacity_bytes() >= 128) {
    if (auto s = pmem.read(0, head); s) head_ok = InfoBlock::decode(head, ib);
  }
  if (head_ok) {
    BttGeometry g;
    g.block_size = ib.block_size;
    g.total_data_blocks = ib.total_data_blocks;
    g.user_blocks = ib.user_blocks;
    g.lane_count = ib.lane_count;
    if (auto s = pmem.read(g.info_tail_off(), tail); s) {
      InfoBlock tb{};
      tail_ok = InfoBlock::decode(tail, tb);
    }
    (void)tail_ok;  // head is authoritative; tail is the redundant copy
  } else {
    // Head gone; scan for the tail copy is impossible without geometry, so
    // this only works when the caller kept the medium size equal to the
    // formatted image. Walk back from capacity end.
    if (pmem.capacity_bytes() >= 64) {
      if (auto s = pmem.read(pmem.capacity_bytes() - 64, tail); s) {
        InfoBlock tb{};
        if (InfoBlock::decode(tail, tb)) {
          ib = tb;
          head_ok = true;
        }
      }
    }
    if (!head_ok) return Status::error(Err::CorruptMetadata, "both info blocks invalid");
  }

  BttGeometry geo;
  geo.block_size = ib.block_size;
  geo.total_data_blocks = ib.total_data_blocks;
  geo.user_blocks = ib.user_blocks;
  geo.lane_count = ib.lane_count;
  if (geo.lane_count == 0 || geo.user_blocks == 0 ||
      geo.image_bytes() > pmem.capacity_bytes())
    return Status::error(Err::CorruptMetadata, "info block geometry implausible");

  auto dev = std::unique_ptr<BttDevice>(new BttDevice(pmem, geo));
  if (auto s = dev->replay_flog(); !s) return s;
  return dev;
}

Status BttDevice::replay_flog() {
  // Load the persistent map into the volatile mirror.
  std::vector<uint8_t> mapbuf(8 * geo_.user_blocks);
  if (auto s = pmem_.read(geo_.map_off(), mapbuf); !s) return s;
  for (uint64_t i = 0; i < geo_.user_blocks; i++)
    map_mirror_[i].store(get_le64(mapbuf.data() + 8 * i), std::memory_order_relaxed);

  for (uint32_t l = 0; l < geo_.lane_count; l++) {
    uint8_t b0[FlogEntry::kBytes], b1[FlogEntry::kBytes];
    if (auto s = pmem_.read(geo_.flog_entry_off(l, 0), b0); !s) return s;
    if (auto s = pmem_.read(geo_.flog_entry_off(l, 1), b1); !s) return s;
    FlogEntry e0 = FlogEntry::decode(b0), e1 = FlogEntry::decode(b1);
    bool v0 = e0.valid(), v1 = e1.valid();
    if (!v0 && !v1)
      return Status::error(Err::CorruptMetadata, "lane " + std::to_string(l) + ": no valid flog");
    int latest;
    if (v0 && v1)
      latest = e1.seq() == next_seq(e0.seq()) ? 1 : 0;
    else
      latest = v1 ? 1 : 0;
    const FlogEntry& e = latest == 1 ? e1 : e0;

    if (e.old_pba != e.new_pba) {  // format marker has old == new, nothing to roll
      uint64_t cur = map_mirror_[e.lba].load(std::memory_order_relaxed);
      if (cur == e.old_pba) {
        // Data and flog persisted but the map update did not: roll forward.
        uint8_t mb[8];
        put_le64(mb, e.new_pba);
        if (auto s = pmem_.write(geo_.map_entry_off(e.lba), mb); !s) return s;
        map_mirror_[e.lba].store(e.new_pba, std::memory_order_relaxed);
      }
      // cur == new_pba: write completed. Anything else: a later write to the
      // same lba superseded this entry; leave the map alone.
    }
    lanes_[l].free_pba = e.old_pba;
    lanes_[l].last_seq = e.seq();
    lanes_[l].next_slot = latest == 1 ? 0 : 1;
  }

  if (!check_permutation())
    return Status::error(Err::CorruptMetadata, "pba permutation violated after replay");
  return Status::ok();
}

bool BttDevice::check_permutation() const {
  std::vector<uint8_t> seen(geo_.total_data_blocks, 0);
  for (uint64_t i = 0; i < geo_.user_blocks; i++) {
    uint64_t p = map_mirror_[i].load(std::memory_order_relaxed);
    if (p >= geo_.total_data_blocks || seen[p]) return false;
    seen[p] = 1;
  }
  for (uint32_t l = 0; l < geo_.lane_count; l++) {
    uint64_t p = lanes_[l].free_pba;
    if (p >= geo_.total_data_blocks || seen[p]) return false;
    seen[p] = 1;
  }
  return true;
}

void BttDevice::wait_no_readers(uint64_t pba) {
  SimLock lk(rtt_mu_);
  rtt_cv_.wait(rtt_mu_, [&] {
    for (uint32_t i = 0; i < geo_.lane_count; i++)
      if (rtt_[i].load(std::memory_order_seq_cst) == static_cast<int64_t>(pba)) return false;
    return true;
  });
}

Status BttDevice::write(uint64_t lba, std::span<const uint8_t> data, uint32_t lane) {
  if (lba >= geo_.user_blocks) return Status::error(Err::OutOfRange, "lba out of range");
  if (data.size() != geo_.block_size)
    return Status::error(Err::InvalidGeometry, "write must be exactly one block");
  lane %= geo_.lane_count;

  SimLock lane_lk(*lanes_[lane].guard);
  uint64_t free_pba = lanes_[lane].free_pba;
  wait_no_readers(free_pba);

  // (2) CoW: data into the lane's free block
  if (auto s = pmem_.write(geo_.data_block_off(free_pba), data); !s) return s;

  uint8_t seq = next_seq(lanes_[lane].last_seq);
  int slot = lanes_[lane].next_slot;
  uint64_t old_pba;
  {
    SimLock stripe_lk(stripe_for(lba));
    old_pba = map_mirror_[lba].load(std::memory_order_seq_cst);

    // (3) flog entry, commit word last (ordered by in-order chunk persistence)
    FlogEntry e;
    e.lba = lba;
    e.old_pba = old_pba;
    e.new_pba = free_pba;
    e.seq_commit = FlogEntry::make_commit(lba, old_pba, free_pba, seq);
    uint8_t buf[FlogEntry::kBytes];
    e.encode(buf);
    if (auto s = pmem_.write(geo_.flog_entry_off(lane, slot), buf); !s) return s;

    // (4) map update, 8-byte atomic
    uint8_t mb[8];
    put_le64(mb, free_pba);
    if (auto s = pmem_.write(geo_.map_entry_off(lba), mb); !s) return s;
    map_mirror_[lba].store(free_pba, std::memory_order_seq_cst);
  }

  // The displaced block replenishes the lane.
  lanes_[lane].free_pba = old_pba;
  lanes_[lane].last_seq = seq;
  lanes_[lane].next_slot = slot ^ 1;
  stats_.writes++;
  if (io_observer_) io_observer_(true);
  return Status::ok();
}

Status BttDevice::read(uint64_t lba, std::span<uint8_t> out, uint32_t lane) {
  if (lba >= geo_.user_blocks) return Status::error(Err::OutOfRange, "lba out of range");
  if (out.size() != geo_.block_size)
    return Status::error(Err::InvalidGeometry, "read must be exactly one block");
  lane %= geo_.lane_count;

  SimLock lane_lk(*lanes_[lane].guard);
  // Register the pba we are about to read so no writer recycles it under us,
  // then re-check the map: if it moved, chase the new block.
  uint64_t pba;
  for (;;) {
    pba = map_mirror_[lba].load(std::memory_order_seq_cst);
    rtt_[lane].store(static_cast<int64_t>(pba), std::memory_order_seq_cst);
    if (map_mirror_[lba].load(std::memory_order_seq_cst) == pba) break;
    rtt_[lane].store(-1, std::memory_order_seq_cst);
  }
  Status s = pmem_.read(geo_.data_block_off(pba), out);
  {
    SimLock lk(rtt_mu_);
    rtt_[lane].store(-1, std::memory_order_seq_cst);
    rtt_cv_.notify_all();
  }
  if (s) {
    stats_.reads++;
    if (io_observer_) io_observer_(false);
  }
  return s;
}

uint64_t BttDevice::map_entry(uint64_t lba) const {
  return map_mirror_[lba].load(std::memory_order_seq_cst);
}

uint64_t BttDevice::lane_free_pba(uint32_t lane) const { return lanes_[lane].free_pba; }

std::string BttDevice::layout_manifest() const {
  std::ostringstream os;
  os << "{\n"
     << "  \"block_size\": " << geo_.block_size << ",\n"
     << "  \"total_data_blocks\": " << geo_.total_data_blocks << ",\n"
     << "  \"user_blocks\": " << geo_.user_blocks << ",\n"
     << "  \"lane_count\": " << geo_.lane_count << ",\n"
     << "  \"map_entry_bytes\": 8,\n"
     << "  \"flog_entry_bytes\": " << FlogEntry::kBytes << ",\n"
     << "  \"flog_slots_per_lane\": 2,\n"
     << "  \"offsets\": {\n"
     << "    \"info_head\": " << geo_.info_head_off() << ",\n"
     << "    \"map\": " << geo_.map_off() << ",\n"
     << "    \"flog\": " << geo_.flog_off() << ",\n"
     << "    \"data\": " << geo_.data_off() << ",\n"
     << "    \"info_tail\": " << geo_.info_tail_off() << "\n"
     << "  },\n"
     << "  \"image_bytes\": " << geo_.image_bytes() << "\n"
     << "}\n";
  return os.str();
}

}  // namespace tcl
