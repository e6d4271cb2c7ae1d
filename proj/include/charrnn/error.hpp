#pragma once

#include <stdexcept>
#include <string>

namespace charrnn {

enum class ErrorCode {
  usage = 1,
  io,
  encoding,
  corpus,
  vocabulary,
  shape,
  config,
  label,
  distribution,
  optimizer,
  numeric,
  format,
  integrity,
};

const char* to_string(ErrorCode code) noexcept;

// Every failure raised by the library carries one of the codes above. The C
// API maps them one-to-one onto crnn_status values.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace charrnn
