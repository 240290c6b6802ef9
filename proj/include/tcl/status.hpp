#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>

namespace tcl {

enum class Err : uint8_t {
  Ok = 0,
  OutOfRange,
  InvalidGeometry,
  IoError,
  CorruptMetadata,
  CacheFull,
  Exhausted,
  UnknownPolicy,
  ConfigError,
  Empty,
};

const char* err_name(Err e);

class Status {
 public:
  Status() = default;
  Status(Err code, std::string msg) : code_(code), msg_(std::move(msg)) {}

  static Status ok() { return Status{}; }
  static Status error(Err code, std::string msg) { return Status{code, std::move(msg)}; }

  bool is_ok() const { return code_ == Err::Ok; }
  explicit operator bool() const { return is_ok(); }
  Err code() const { return code_; }
  const std::string& message() const { return msg_; }

  std::string to_string() const {
    return is_ok() ? "OK" : std::string(err_name(code_)) + ": " + msg_;
  }

 private:
  Err code_ = Err::Ok;
  std::string msg_;
};

// Minimal result type; enough for the handful of fallible constructors here.
template <typename T>
class StatusOr {
 public:
  StatusOr(Status s) : status_(std::move(s)) {}  // NOLINT: implicit on purpose
  StatusOr(T v) : status_(Status::ok()), value_(std::move(v)) {}

  bool is_ok() const { return status_.is_ok(); }
  explicit operator bool() const { return is_ok(); }
  const Status& status() const { return status_; }

  T& value() {
    if (!is_ok()) throw std::runtime_error("StatusOr: " + status_.to_string());
    return value_;
  }
  const T& value() const {
    if (!is_ok()) throw std::runtime_error("StatusOr: " + status_.to_string());
    return value_;
  }
  T&& take() {
    if (!is_ok()) throw std::runtime_error("StatusOr: " + status_.to_string());
    return std::move(value_);
  }

 private:
  Status status_;
  T value_{};
};

}  // namespace tcl
