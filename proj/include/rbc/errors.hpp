#pragma once

#include <stdexcept>
#include <string>

namespace rbc {

enum class ErrorCode {
  InvalidArgument = 1,
  Io,
  Schema,
  EmptyData,
  EmptyRegion,
  Partition,
  Stratification,
  DegenerateShape,
  InsufficientTexture,
  Unsupported,
  Divergence,
  EmptySelection,
  Parse,
};

const char* error_code_name(ErrorCode code) noexcept;

// Every failure raised by the library carries one of the codes above; the C
// API maps them onto rbc_status values one to one.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

inline void require(bool cond, ErrorCode code, const std::string& what) {
  if (!cond) throw Error(code, what);
}

// Minimal diagnostic channel. Level 0 is silent, 1 prints warnings, 2 info.
void set_log_level(int level) noexcept;
int log_level() noexcept;
void log_warning(const std::string& msg);
void log_info(const std::string& msg);

}  // namespace rbc
