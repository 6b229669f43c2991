#include "heml/parallel.hpp"

#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace heml {

std::size_t worker_count(std::size_t jobs) {
    if (jobs <= 1) return jobs;
    std::size_t hw = std::thread::hardware_concurrency();
    if (hw == 0) hw = 1;
    if (const char* env = std::getenv("HEML_THREADS")) {
        std::size_t cap = static_cast<std::size_t>(std::strtoull(env, nullptr, 10));
        if (cap >= 1 && cap < hw) hw = cap;
    }
    return std::min(hw, jobs);
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
    std::size_t workers = worker_count(n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> threads;
    threads.reserve(workers);
    std::size_t chunk = (n + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
        std::size_t begin = w * chunk;
        std::size_t end = std::min(begin + chunk, n);
        if (begin >= end) break;
        threads.emplace_back([&fn, begin, end] {
            for (std::size_t i = begin; i < end; ++i) fn(i);
        });
    }
    for (auto& t : threads) t.join();
}

}  // namespace heml
