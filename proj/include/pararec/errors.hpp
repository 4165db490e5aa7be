#pragma once

#include <stdexcept>
#include <string>

namespace pararec {

// Non-finite value detected during forward/backward/optimizer work.
// `where` names the layer or stage that produced it.
class NumericError : public std::runtime_error {
 public:
  NumericError(std::string where, const std::string& what)
      : std::runtime_error(where + ": " + what), where_(std::move(where)) {}
  const std::string& where() const { return where_; }

 private:
  std::string where_;
};

// Problems with datasets, corpora, checkpoints and other external files.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace pararec
