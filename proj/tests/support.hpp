#pragma once

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "strata/error.hpp"

#define CHECK_KIND(expr, expected)                                    \
  do {                                                                \
    std::string kind_seen = "<none>";                                 \
    try {                                                             \
      (void)(expr);                                                   \
    } catch (const strata::Error& e) {                                \
      kind_seen = e.kind();                                           \
    }                                                                 \
    CHECK_MESSAGE(kind_seen == (expected), "error kind " << kind_seen); \
  } while (0)

inline double rel_diff(double a, double b) {
  const double s = std::max({std::abs(a), std::abs(b), 1e-300});
  return std::abs(a - b) / s;
}
