#pragma once

#include <cmath>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>

namespace scenecomp {

// Error hierarchy. Contract violations (caller bugs) throw ContractError;
// data-dependent failures get their own types so callers can branch on them.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct ContractError : Error {
  explicit ContractError(const std::string& msg) : Error("contract: " + msg) {}
};

struct EmptyGeometryError : Error {
  explicit EmptyGeometryError(const std::string& msg) : Error("empty geometry: " + msg) {}
};

struct EmptySceneError : Error {
  explicit EmptySceneError(const std::string& msg) : Error("empty scene: " + msg) {}
};

struct ForgeFailure : Error {
  explicit ForgeFailure(const std::string& msg) : Error("forge failure: " + msg) {}
};

struct LoadError : Error {
  explicit LoadError(const std::string& msg) : Error("load error: " + msg) {}
};

struct StageMismatchError : Error {
  explicit StageMismatchError(const std::string& msg) : Error("stage mismatch: " + msg) {}
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& msg) : Error("config error: " + msg) {}
};

namespace detail {
template <class E>
[[noreturn]] inline void throw_formatted(const char* expr, const std::string& msg) {
  std::ostringstream os;
  os << msg;
  if (expr) os << " (" << expr << ")";
  throw E(os.str());
}
}  // namespace detail

#define SC_CHECK(cond, msg)                                                       \
  do {                                                                            \
    if (!(cond)) ::scenecomp::detail::throw_formatted<::scenecomp::ContractError>(#cond, (msg)); \
  } while (0)

#define SC_THROW(etype, msg)                                      \
  ::scenecomp::detail::throw_formatted<::scenecomp::etype>(nullptr, (msg))

inline bool nearly_equal(double a, double b, double tol) { return std::abs(a - b) <= tol; }

}  // namespace scenecomp
