#include "halo/threading.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <mutex>
#include <thread>
#include <vector>

namespace halo {

int worker_thread_count() {
    if (const char* env = std::getenv("HALO_NUM_THREADS")) {
        int n = std::atoi(env);
        if (n >= 1) return n;
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

void parallel_for_blocks(int num_blocks, const std::function<void(int)>& fn) {
    if (num_blocks <= 0) return;
    int workers = std::min(worker_thread_count(), num_blocks);
    if (workers <= 1) {
        for (int b = 0; b < num_blocks; ++b) fn(b);
        return;
    }

    std::atomic<int> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto work = [&] {
        for (;;) {
            int b = next.fetch_add(1);
            if (b >= num_blocks) return;
            try {
                fn(b);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!error) error = std::current_exception();
            }
        }
    };

    std::vector<std::thread> pool;
    pool.reserve(workers - 1);
    for (int i = 1; i < workers; ++i) pool.emplace_back(work);
    work();
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

}  // namespace halo
