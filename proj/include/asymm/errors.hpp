#pragma once

#include <stdexcept>
#include <string>

namespace asymm {

struct error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct invalid_edge : error {
  using error::error;
};

struct disconnected_graph : error {
  using error::error;
};

struct dimension_mismatch : error {
  using error::error;
};

struct missing_activation : error {
  using error::error;
};

struct unsupported_schema : error {
  using error::error;
};

struct unknown_sender : error {
  using error::error;
};

struct invalid_config : error {
  using error::error;
};

struct empty_input : error {
  using error::error;
};

struct parse_error : error {
  using error::error;
};

}  // namespace asymm
