#include "cogform/errors.hpp"

#include <atomic>
#include <iostream>
#include <mutex>

namespace cogform {

namespace {
std::atomic<bool> g_warnings{true};
std::mutex g_log_mutex;
}  // namespace

void log_warning(const std::string& message) {
  if (!g_warnings.load(std::memory_order_relaxed)) return;
  std::lock_guard lock(g_log_mutex);
  std::cerr << "[cogform] warning: " << message << '\n';
}

void set_warnings_enabled(bool enabled) { g_warnings.store(enabled); }
bool warnings_enabled() { return g_warnings.load(); }

}  // namespace cogform
