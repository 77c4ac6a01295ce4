#include "mmcim/parallel.hpp"

#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace mmcim {

int worker_count() {
    int hw = static_cast<int>(std::thread::hardware_concurrency());
    if (hw < 1)
        hw = 1;
    if (const char* env = std::getenv("MMC_MODES_THREADS")) {
        try {
            const int cap = std::stoi(env);
            if (cap > 0 && cap < hw)
                hw = cap;
        } catch (const std::exception&) {
            // unparseable value keeps the hardware default
        }
    }
    return hw;
}

void parallel_for(int n, const std::function<void(int)>& fn) {
    if (n <= 0)
        return;
    const int workers = std::min(worker_count(), n);
    if (workers == 1) {
        for (int i = 0; i < n; ++i)
            fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    auto run = [&] {
        for (;;) {
            const int i = next.fetch_add(1);
            if (i >= n)
                return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error)
                    first_error = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w)
        pool.emplace_back(run);
    for (auto& t : pool)
        t.join();
    if (first_error)
        std::rethrow_exception(first_error);
}

}  // namespace mmcim
