// SPDX-License-Identifier: Apache-2.0
#include "ngc/common.hpp"

#include <algorithm>
#include <cstdio>

namespace ngc {

std::string shortest_decimal(double v) {
    char buf[512];
    for (int prec = 0; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof(buf), "%.*f", prec, v);
        double back = 0.0;
        std::sscanf(buf, "%lf", &back);
        if (back == v) return std::string(buf);
    }
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
}

void parallel_for(long n, int n_threads, const std::function<void(long)>& fn) {
    if (n <= 0) return;
    int workers = std::max(1, static_cast<int>(std::min<long>(n_threads, n)));
    if (workers == 1) {
        for (long i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> threads;
    std::vector<std::exception_ptr> errors(workers);
    threads.reserve(workers);
    for (int w = 0; w < workers; ++w) {
        threads.emplace_back([=, &fn, &errors]() {
            try {
                for (long i = w; i < n; i += workers) fn(i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : threads) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace ngc
