#ifndef P2_ERRORS_HPP
#define P2_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace p2 {

// Error taxonomy mirrors the CLI exit codes: config errors (2), violated
// operation preconditions (3), and internal invariant violations (4).

class config_error : public std::runtime_error {
 public:
  explicit config_error(const std::string& what) : std::runtime_error(what) {}
};

class precondition_error : public std::runtime_error {
 public:
  explicit precondition_error(const std::string& what) : std::runtime_error(what) {}
};

class invariant_error : public std::runtime_error {
 public:
  explicit invariant_error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace p2

#endif
