#include "rbc/errors.hpp"

#include <atomic>
#include <iostream>
#include <mutex>

namespace rbc {

namespace {
std::atomic<int> g_level{1};
std::mutex g_log_mutex;
}  // namespace

const char* error_code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument: return "invalid-argument";
    case ErrorCode::Io: return "io";
    case ErrorCode::Schema: return "schema";
    case ErrorCode::EmptyData: return "empty-data";
    case ErrorCode::EmptyRegion: return "empty-region";
    case ErrorCode::Partition: return "partition";
    case ErrorCode::Stratification: return "stratification";
    case ErrorCode::DegenerateShape: return "degenerate-shape";
    case ErrorCode::InsufficientTexture: return "insufficient-texture";
    case ErrorCode::Unsupported: return "unsupported-model";
    case ErrorCode::Divergence: return "divergence";
    case ErrorCode::EmptySelection: return "empty-selection";
    case ErrorCode::Parse: return "parse";
  }
  return "unknown";
}

void set_log_level(int level) noexcept { g_level = level; }
int log_level() noexcept { return g_level; }

void log_warning(const std::string& msg) {
  if (g_level < 1) return;
  std::lock_guard lock(g_log_mutex);
  std::cerr << "warning: " << msg << '\n';
}

void log_info(const std::string& msg) {
  if (g_level < 2) return;
  std::lock_guard lock(g_log_mutex);
  std::cerr << "info: " << msg << '\n';
}

}  // namespace rbc
