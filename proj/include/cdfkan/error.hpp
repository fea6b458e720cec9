#pragma once

#include <stdexcept>
#include <string>

namespace cdfkan {

enum class ErrorKind
{
  invalid_argument,
  out_of_domain,
  shape_mismatch,
  singular,
  not_exact,
  missing_cache,
  io,
  bad_magic,
  truncated,
  count_mismatch,
  parse,
};

//! Single exception type thrown by the library; the kind drives the C API status code.
class Error : public std::runtime_error
{
public:
  Error(ErrorKind kind, const std::string& what)
    : std::runtime_error(what)
    , kind_(kind)
  {
  }

  ErrorKind kind() const noexcept { return kind_; }

private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what)
{
  throw Error(kind, what);
}

inline void require(bool cond, ErrorKind kind, const char* what)
{
  if (!cond)
    throw Error(kind, what);
}

} // namespace cdfkan
