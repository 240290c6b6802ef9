#include "tcl/sim.hpp"

#include <boost/context/fiber.hpp>

#include <atomic>
#include <cassert>
#include <chrono>
#include <stdexcept>
#include <thread>

#include "tcl/status.hpp"

namespace tcl {

namespace ctx = boost::context;

const char* err_name(Err e) {
  switch (e) {
    case Err::Ok: return "OK";
    case Err::OutOfRange: return "OUT_OF_RANGE";
    case Err::InvalidGeometry: return "INVALID_GEOMETRY";
    case Err::IoError: return "IO_ERROR";
    case Err::CorruptMetadata: return "CORRUPT_METADATA";
    case Err::CacheFull: return "CACHE_FULL";
    case Err::Exhausted: return "EXHAUSTED";
    case Err::UnknownPolicy: return "UNKNOWN_POLICY";
    case Err::ConfigError: return "CONFIG_ERROR";
    case Err::Empty: return "EMPTY";
  }
  return "UNKNOWN";
}

// ---------------------------------------------------------------------------
// VirtualScheduler

struct VirtualScheduler::Actor {
  int id = -1;
  std::string name;
  ActorRole role = ActorRole::Foreground;
  std::function<void()> body;
  ctx::fiber cont;   // actor side, valid while suspended
  ctx::fiber sink;   // scheduler side, valid while actor runs
  enum class St { Fresh, Runnable, Running, Blocked, Done } st = St::Fresh;
  int64_t ready_ns = 0;
  void* user = nullptr;
};

VirtualScheduler::VirtualScheduler(uint64_t seed) : rng_(mix64(seed ^ 0x7c1a5))  {}

VirtualScheduler::~VirtualScheduler() = default;

void VirtualScheduler::spawn(std::string name, ActorRole role, std::function<void()> body) {
  auto a = std::make_unique<Actor>();
  a->id = static_cast<int>(actors_.size());
  a->name = std::move(name);
  a->role = role;
  a->body = std::move(body);
  a->ready_ns = now_;
  a->st = Actor::St::Fresh;
  live_actors_++;
  runq_.insert({a->ready_ns, rng_(), a->id});
  a->st = Actor::St::Runnable;
  actors_.push_back(std::move(a));
}

void VirtualScheduler::make_runnable(int id) {
  Actor& a = *actors_[id];
  assert(a.st == Actor::St::Blocked);
  a.st = Actor::St::Runnable;
  a.ready_ns = now_;
  runq_.insert({a.ready_ns, rng_(), id});
}

void VirtualScheduler::switch_out() {
  Actor& a = *actors_[current_];
  a.sink = std::move(a.sink).resume();  // back to run(); returns when re-picked
}

void VirtualScheduler::charge(int64_t ns) {
  assert(ns >= 0);
  charged_total_ += ns;
  if (current_ < 0) {  // charges outside actors (setup code) advance time directly
    now_ += ns;
    return;
  }
  Actor& a = *actors_[current_];
  a.ready_ns = now_ + ns;
  a.st = Actor::St::Runnable;
  runq_.insert({a.ready_ns, rng_(), current_});
  switch_out();
}

void VirtualScheduler::yield() {
  if (current_ < 0) return;
  Actor& a = *actors_[current_];
  a.ready_ns = now_;
  a.st = Actor::St::Runnable;
  runq_.insert({a.ready_ns, rng_(), current_});
  switch_out();
}

bool VirtualScheduler::run() {
  if (running_) throw std::logic_error("VirtualScheduler::run is not reentrant");
  running_ = true;
  while (!runq_.empty()) {
    if (step_limit_ && steps_ >= step_limit_) break;
    steps_++;
    auto it = runq_.begin();
    auto [ready, tie, id] = *it;
    runq_.erase(it);
    Actor& a = *actors_[id];
    if (a.st != Actor::St::Runnable && a.st != Actor::St::Fresh) continue;
    if (ready > now_) now_ = ready;
    a.st = Actor::St::Running;
    current_ = id;
    if (!a.cont) {
      Actor* ap = &a;
      a.cont = ctx::fiber{std::allocator_arg, ctx::fixedsize_stack(512 * 1024),
                          [this, ap](ctx::fiber&& sink) {
                            ap->sink = std::move(sink);
                            ap->body();
                            ap->st = Actor::St::Done;
                            live_actors_--;
                            return std::move(ap->sink);
                          }};
      a.cont = std::move(a.cont).resume();
    } else {
      a.cont = std::move(a.cont).resume();
    }
    current_ = -1;
  }
  running_ = false;
  blocked_report_.clear();
  for (auto& a : actors_)
    if (a->st == Actor::St::Blocked) blocked_report_.push_back(a->name);
  return blocked_report_.empty();
}

ActorRole VirtualScheduler::current_role() {
  return current_ < 0 ? ActorRole::Foreground : actors_[current_]->role;
}

void VirtualScheduler::set_user_ctx(void* p) {
  if (current_ >= 0) actors_[current_]->user = p;
}

void* VirtualScheduler::user_ctx() {
  return current_ < 0 ? nullptr : actors_[current_]->user;
}

void VirtualScheduler::mutex_lock(SimMutex& m) {
  if (current_ < 0) {
    assert(m.v_owner_ == -1);
    m.v_owner_ = -2;  // held by setup code
    return;
  }
  if (m.v_owner_ == -1) {
    m.v_owner_ = current_;
    return;
  }
  m.v_waiters_.push_back(current_);
  Actor& a = *actors_[current_];
  a.st = Actor::St::Blocked;
  switch_out();
  // Woken by unlock's direct hand-off; we own the mutex now.
  assert(m.v_owner_ == current_);
}

bool VirtualScheduler::mutex_try_lock(SimMutex& m) {
  if (m.v_owner_ != -1) return false;
  m.v_owner_ = current_ < 0 ? -2 : current_;
  return true;
}

void VirtualScheduler::mutex_unlock(SimMutex& m) {
  if (m.v_waiters_.empty()) {
    m.v_owner_ = -1;
    return;
  }
  int next = m.v_waiters_.front();
  m.v_waiters_.pop_front();
  m.v_owner_ = next;  // hand-off keeps FIFO fairness and determinism
  make_runnable(next);
}

void VirtualScheduler::cv_wait(SimCondVar& cv, SimMutex& m) {
  assert(current_ >= 0 && "cv_wait outside an actor");
  cv.v_waiters_.push_back(current_);
  mutex_unlock(m);
  Actor& a = *actors_[current_];
  a.st = Actor::St::Blocked;
  switch_out();
  mutex_lock(m);
}

void VirtualScheduler::cv_notify_all(SimCondVar& cv) {
  for (int id : cv.v_waiters_) make_runnable(id);
  cv.v_waiters_.clear();
}

// ---------------------------------------------------------------------------
// RealScheduler

namespace {
thread_local int t_actor_id = -1;
thread_local ActorRole t_actor_role = ActorRole::Foreground;
thread_local void* t_user_ctx = nullptr;

int64_t steady_ns() {
  return std::chrono::duration_cast<std::chrono::nanoseconds>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}
}  // namespace

RealScheduler::RealScheduler() : epoch_(steady_ns()) {}
RealScheduler::~RealScheduler() = default;

int64_t RealScheduler::now_ns() { return steady_ns() - epoch_; }

void RealScheduler::charge(int64_t ns) {
  charged_total_.fetch_add(ns, std::memory_order_relaxed);
  if (ns <= 0) return;
  int64_t deadline = steady_ns() + ns;
  if (ns >= 200'000) {
    std::this_thread::sleep_for(std::chrono::nanoseconds(ns));
    return;
  }
  while (steady_ns() < deadline) {
    // busy-wait; cheap enough for the sub-microsecond charges used here
  }
}

void RealScheduler::yield() { std::this_thread::yield(); }

void RealScheduler::spawn(std::string name, ActorRole role, std::function<void()> body) {
  pending_.push_back({std::move(name), role, std::move(body)});
}

bool RealScheduler::run() {
  std::vector<std::thread> threads;
  threads.reserve(pending_.size());
  for (auto& p : pending_) {
    int id = next_id_.fetch_add(1);
    ActorRole role = p.role;
    auto body = std::move(p.body);
    threads.emplace_back([id, role, body = std::move(body)]() {
      t_actor_id = id;
      t_actor_role = role;
      t_user_ctx = nullptr;
      body();
    });
  }
  pending_.clear();
  for (auto& t : threads) t.join();
  return true;
}

int RealScheduler::current_actor() { return t_actor_id; }
ActorRole RealScheduler::current_role() { return t_actor_role; }
void RealScheduler::set_user_ctx(void* p) { t_user_ctx = p; }
void* RealScheduler::user_ctx() { return t_user_ctx; }

void RealScheduler::cv_wait(SimCondVar& cv, SimMutex& m) {
  std::unique_lock<std::mutex> lk(m.real_, std::adopt_lock);
  cv.real_cv_.wait(lk);
  lk.release();
}

void RealScheduler::cv_notify_all(SimCondVar& cv) { cv.real_cv_.notify_all(); }

}  // namespace tcl
