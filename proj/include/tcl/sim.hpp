#pragma once

#include <atomic>
#include <cstdint>
#include <condition_variable>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <random>
#include <set>
#include <string>
#include <vector>

namespace tcl {

// splitmix64, used to derive independent seed streams from one config seed.
inline uint64_t mix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

enum class ClockMode { Real, Virtual };

enum class ActorRole : uint8_t { Foreground, Background, Flusher, Observer };

class SimMutex;
class SimCondVar;

// Execution substrate shared by every module. All blocking, time charging and
// scheduling go through here so the same engine code runs on real threads
// (ClockMode::Real) or under the deterministic single-threaded stepper
// (ClockMode::Virtual).
class Scheduler {
 public:
  virtual ~Scheduler() = default;

  virtual ClockMode mode() const = 0;
  bool is_virtual() const { return mode() == ClockMode::Virtual; }

  virtual int64_t now_ns() = 0;
  // Advance the calling actor's clock by ns (virtual) or spin for ns (real).
  virtual void charge(int64_t ns) = 0;
  // Pure scheduling point, no time passes.
  virtual void yield() = 0;

  virtual void spawn(std::string name, ActorRole role, std::function<void()> body) = 0;
  // Drive all actors to completion. Returns false if progress stopped with
  // live blocked actors (deadlock).
  virtual bool run() = 0;

  virtual int current_actor() = 0;          // -1 when outside any actor
  virtual ActorRole current_role() = 0;     // Foreground when outside actors
  // One user pointer per actor, used by the metrics layer.
  virtual void set_user_ctx(void* p) = 0;
  virtual void* user_ctx() = 0;

  // Total nanoseconds charged across all actors (latency-accounting ledger).
  virtual int64_t charged_total_ns() const = 0;

 private:
  friend class SimMutex;
  friend class SimCondVar;
  virtual void mutex_lock(SimMutex& m) = 0;
  virtual bool mutex_try_lock(SimMutex& m) = 0;
  virtual void mutex_unlock(SimMutex& m) = 0;
  virtual void cv_wait(SimCondVar& cv, SimMutex& m) = 0;
  virtual void cv_notify_all(SimCondVar& cv) = 0;
};

class SimMutex {
 public:
  explicit SimMutex(Scheduler& s) : sched_(&s) {}
  SimMutex(const SimMutex&) = delete;
  SimMutex& operator=(const SimMutex&) = delete;

  void lock() { sched_->mutex_lock(*this); }
  bool try_lock() { return sched_->mutex_try_lock(*this); }
  void unlock() { sched_->mutex_unlock(*this); }

 private:
  friend class VirtualScheduler;
  friend class RealScheduler;
  friend class SimCondVar;
  Scheduler* sched_;
  std::mutex real_;
  int v_owner_ = -1;
  std::deque<int> v_waiters_;
};

class SimLock {
 public:
  explicit SimLock(SimMutex& m) : m_(&m) { m_->lock(); }
  ~SimLock() {
    if (m_) m_->unlock();
  }
  SimLock(const SimLock&) = delete;
  SimLock& operator=(const SimLock&) = delete;
  void unlock() {
    m_->unlock();
    m_ = nullptr;
  }

 private:
  SimMutex* m_;
};

class SimCondVar {
 public:
  explicit SimCondVar(Scheduler& s) : sched_(&s) {}
  SimCondVar(const SimCondVar&) = delete;

  // Caller holds m. Atomically releases it, blocks, reacquires.
  void wait(SimMutex& m) { sched_->cv_wait(*this, m); }
  template <typename Pred>
  void wait(SimMutex& m, Pred pred) {
    while (!pred()) wait(m);
  }
  void notify_all() { sched_->cv_notify_all(*this); }

 private:
  friend class VirtualScheduler;
  friend class RealScheduler;
  Scheduler* sched_;
  std::condition_variable real_cv_;
  std::deque<int> v_waiters_;
};

// Deterministic discrete-event stepper. Actors are userspace fibers; exactly
// one runs at a time. The runnable actor with the smallest ready time goes
// next; ties are broken by a seeded draw. Virtual time never runs backwards.
class VirtualScheduler final : public Scheduler {
 public:
  explicit VirtualScheduler(uint64_t seed);
  ~VirtualScheduler() override;

  ClockMode mode() const override { return ClockMode::Virtual; }
  int64_t now_ns() override { return now_; }
  void charge(int64_t ns) override;
  void yield() override;
  void spawn(std::string name, ActorRole role, std::function<void()> body) override;
  bool run() override;
  int current_actor() override { return current_; }
  ActorRole current_role() override;
  void set_user_ctx(void* p) override;
  void* user_ctx() override;
  int64_t charged_total_ns() const override { return charged_total_; }

  // Step budget guard for property tests; 0 = unlimited.
  void set_step_limit(uint64_t n) { step_limit_ = n; }
  uint64_t steps() const { return steps_; }
  const std::vector<std::string>& blocked_report() const { return blocked_report_; }

 private:
  void mutex_lock(SimMutex& m) override;
  bool mutex_try_lock(SimMutex& m) override;
  void mutex_unlock(SimMutex& m) override;
  void cv_wait(SimCondVar& cv, SimMutex& m) override;
  void cv_notify_all(SimCondVar& cv) override;

  struct Actor;
  void make_runnable(int id);
  void switch_out();  // current actor -> scheduler

  std::vector<std::unique_ptr<Actor>> actors_;
  std::set<std::tuple<int64_t, uint64_t, int>> runq_;  // (ready_ns, tiebreak, id)
  int64_t now_ = 0;
  int current_ = -1;
  bool running_ = false;
  std::mt19937_64 rng_;
  uint64_t steps_ = 0;
  uint64_t step_limit_ = 0;
  int64_t charged_total_ = 0;
  int live_actors_ = 0;
  std::vector<std::string> blocked_report_;
};

// Wall-clock mode: one OS thread per actor, charges are busy-waits.
class RealScheduler final : public Scheduler {
 public:
  RealScheduler();
  ~RealScheduler() override;

  ClockMode mode() const override { return ClockMode::Real; }
  int64_t now_ns() override;
  void charge(int64_t ns) override;
  void yield() override;
  void spawn(std::string name, ActorRole role, std::function<void()> body) override;
  bool run() override;
  int current_actor() override;
  ActorRole current_role() override;
  void set_user_ctx(void* p) override;
  void* user_ctx() override;
  int64_t charged_total_ns() const override { return charged_total_.load(); }

 private:
  void mutex_lock(SimMutex& m) override { m.real_.lock(); }
  bool mutex_try_lock(SimMutex& m) override { return m.real_.try_lock(); }
  void mutex_unlock(SimMutex& m) override { m.real_.unlock(); }
  void cv_wait(SimCondVar& cv, SimMutex& m) override;
  void cv_notify_all(SimCondVar& cv) override;

  struct Pending {
    std::string name;
    ActorRole role;
    std::function<void()> body;
  };
  std::vector<Pending> pending_;
  int64_t epoch_ = 0;
  std::atomic<int64_t> charged_total_{0};
  std::atomic<int> next_id_{0};
};

}  // namespace tcl
