#pragma once

#include <cstddef>
#include <string>

#include "cotscope/errors.hpp"

namespace cotscope {

class IngestError : public ValidationError {
 public:
  IngestError(std::string file, std::size_t line, const std::string& what)
      : ValidationError(file + ":" + std::to_string(line) + ": " + what),
        file_(std::move(file)),
        line_(line) {}

  const std::string& file() const noexcept { return file_; }
  std::size_t line() const noexcept { return line_; }

 private:
  std::string file_;
  std::size_t line_;
};

}  // namespace cotscope
