#pragma once

#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>

namespace streamrecon {

using PointId = std::uint64_t;
using CameraId = std::int64_t;

// Number of feature / point levels; level 1 is the coarsest, 4 the finest.
constexpr int kNumLevels = 4;
// Channel count of the reduced features used for matching.
constexpr int kReducedChannels = 32;
// Default full feature channel count.
constexpr int kDefaultChannels = 64;

// Bad user input: malformed files, invalid arguments, broken preconditions
// that a caller can fix. Maps to CLI exit code 1.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// An internal invariant was found broken. Maps to CLI exit code 2.
class InvariantError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

namespace internal {

template <typename... Args>
std::string StrCat(const Args&... args) {
  std::ostringstream os;
  (os << ... << args);
  return os.str();
}

}  // namespace internal

#define STREAMRECON_CHECK_INPUT(cond, ...)                                   \
  do {                                                                    \
    if (!(cond)) {                                                        \
      throw ::streamrecon::InputError(::streamrecon::internal::StrCat(     \
          #cond, " failed: ", __VA_ARGS__));                              \
    }                                                                     \
  } while (false)

#define STREAMRECON_CHECK_INVARIANT(cond, ...)                               \
  do {                                                                    \
    if (!(cond)) {                                                        \
      throw ::streamrecon::InvariantError(::streamrecon::internal::StrCat( \
          __FILE__, ":", __LINE__, " ", #cond, " failed: ", __VA_ARGS__)); \
    }                                                                     \
  } while (false)

}  // namespace streamrecon
