#pragma once

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cstdint>
#include <cstdio>
#include <random>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace tooldreamer {

/// FNV-1a over raw bytes. Used as the stable text hash for the deterministic
/// embedding provider, file-backed store keys, and artifact fingerprints.
inline std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : bytes) {
        h ^= static_cast<std::uint64_t>(c);
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::string to_hex64(std::uint64_t value) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(value));
    return std::string(buf);
}

inline std::string trim(std::string_view s) {
    size_t begin = 0;
    size_t end = s.size();
    while (begin < end && std::isspace(static_cast<unsigned char>(s[begin]))) ++begin;
    while (end > begin && std::isspace(static_cast<unsigned char>(s[end - 1]))) --end;
    return std::string(s.substr(begin, end - begin));
}

/// Uniform integer in [0, bound) drawn from a mt19937_64 stream. Modulo
/// reduction keeps the sampler trace trivially replayable; bias is
/// negligible at the collection sizes involved.
inline std::uint64_t bounded_rand(std::mt19937_64& rng, std::uint64_t bound) {
    return rng() % bound;
}

/// Partial Fisher-Yates: deterministically selects n indices out of total
/// without replacement. The full shuffle variant (n == total) doubles as the
/// epoch shuffler in the trainer.
inline std::vector<std::size_t> sample_indices(std::size_t total, std::size_t n, std::mt19937_64& rng) {
    std::vector<std::size_t> idx(total);
    for (std::size_t i = 0; i < total; ++i) idx[i] = i;
    for (std::size_t i = 0; i < n && i + 1 < total; ++i) {
        std::size_t j = i + static_cast<std::size_t>(bounded_rand(rng, total - i));
        std::swap(idx[i], idx[j]);
    }
    idx.resize(n);
    return idx;
}

/// Runs fn(i) for i in [0, count) across up to `workers` threads. Each index
/// owns its output slot, so results are position-deterministic regardless of
/// scheduling.
template <typename Fn>
void parallel_for(std::size_t count, std::size_t workers, Fn&& fn) {
    if (workers <= 1 || count <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    workers = std::min(workers, count);
    std::vector<std::thread> pool;
    pool.reserve(workers);
    std::atomic<std::size_t> next{0};
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&]() {
            while (true) {
                std::size_t i = next.fetch_add(1);
                if (i >= count) break;
                fn(i);
            }
        });
    }
    for (auto& t : pool) t.join();
}

} // namespace tooldreamer
