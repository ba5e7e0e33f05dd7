#pragma once

#include <exception>
#include <mutex>

namespace pseudolabel {

/// Selects between the OpenMP kernel and its serial reference.
enum class Execution { kSerial, kParallel };

/// Number of OpenMP worker threads used by parallel kernels (<= 0 keeps the runtime default).
void set_worker_count(int workers);
int worker_count();

/// Captures the first exception thrown inside an OpenMP region so it can be
/// rethrown after the region ends.
class ExceptionSlot {
 public:
  template <typename F>
  void run(F&& f) noexcept {
    try {
      f();
    } catch (...) {
      std::lock_guard lock(mutex_);
      if (!error_) error_ = std::current_exception();
    }
  }
  void rethrow() const {
    if (error_) std::rethrow_exception(error_);
  }

 private:
  std::mutex mutex_;
  std::exception_ptr error_;
};

}  // namespace pseudolabel
