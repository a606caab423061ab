#pragma once

#include <Eigen/Dense>

#include <atomic>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace distillfed {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

// Thrown when a numeric routine produces non-finite values or a solve fails.
// Orchestrators that tolerate per-client failure catch this type specifically;
// anything else is a usage error and propagates.
class NumericError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// Runs fn(i) for i in [0, n). With jobs <= 1 this is a plain loop; otherwise
// indices are claimed from a shared counter by `jobs` worker threads. fn must
// not touch shared mutable state other than its own slot, which keeps results
// identical across schedules.
inline void parallel_for(int n, int jobs, const std::function<void(int)>& fn) {
    if (n <= 0) return;
    if (jobs <= 1 || n == 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n));
    auto worker = [&]() {
        for (;;) {
            const int i = next.fetch_add(1);
            if (i >= n) return;
            try {
                fn(i);
            } catch (...) {
                errors[static_cast<std::size_t>(i)] = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    const int workers = std::min(jobs, n);
    pool.reserve(static_cast<std::size_t>(workers));
    for (int t = 0; t < workers; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace distillfed
