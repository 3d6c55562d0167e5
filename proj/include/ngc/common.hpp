// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace ngc {

// Error taxonomy:
//   std::invalid_argument  -- bad shapes, bad arguments, API misuse
//   std::domain_error      -- math domain violations (log of nonpositive, eps=0, ...)
//   std::runtime_error     -- state corruption, consistency failures, numeric blowups

namespace detail {
inline std::string build_msg(const char* file, int line, const std::string& what) {
    std::ostringstream os;
    os << what << " (" << file << ":" << line << ")";
    return os.str();
}
}  // namespace detail

#define NGC_CHECK_ARG(cond, msg)                                                          \
    do {                                                                                  \
        if (!(cond)) throw std::invalid_argument(::ngc::detail::build_msg(__FILE__, __LINE__, (msg))); \
    } while (0)

#define NGC_CHECK_DOMAIN(cond, msg)                                                       \
    do {                                                                                  \
        if (!(cond)) throw std::domain_error(::ngc::detail::build_msg(__FILE__, __LINE__, (msg)));     \
    } while (0)

#define NGC_CHECK_STATE(cond, msg)                                                        \
    do {                                                                                  \
        if (!(cond)) throw std::runtime_error(::ngc::detail::build_msg(__FILE__, __LINE__, (msg)));    \
    } while (0)

inline bool all_finite(const std::vector<double>& v) {
    for (double x : v) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

// Renders a double with the fewest digits that still round-trip, e.g. 50 -> "50",
// 12.5 -> "12.5". Used for tag formatting and CSV output.
std::string shortest_decimal(double v);

// Static index partition over [0, n). Each worker writes only its own indices, so
// results are identical for any thread count.
void parallel_for(long n, int n_threads, const std::function<void(long)>& fn);

}  // namespace ngc
