#pragma once

#include <algorithm>
#include <cstdint>
#include <exception>
#include <initializer_list>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace ipbt {

using Rng = std::mt19937_64;

/// Stream identifiers keep independent random sequences apart when they are
/// derived from the same run seed.
enum class StreamPurpose : std::uint64_t {
  control = 1,
  member_training = 2,
  member_init = 3,
  restart = 4,
  bootstrap = 5,
  baseline = 6,
};

/// Derives a fresh generator from a seed and a tuple of keys. The result only
/// depends on the inputs, so parallel scheduling order cannot change it.
inline Rng derive_stream(std::uint64_t seed, StreamPurpose purpose,
                         std::initializer_list<std::uint64_t> keys = {}) {
  std::vector<std::uint32_t> words;
  words.reserve(4 + 2 * keys.size());
  auto push = [&words](std::uint64_t v) {
    words.push_back(static_cast<std::uint32_t>(v & 0xffffffffu));
    words.push_back(static_cast<std::uint32_t>(v >> 32));
  };
  push(seed);
  push(static_cast<std::uint64_t>(purpose));
  for (auto k : keys) push(k);
  std::seed_seq seq(words.begin(), words.end());
  return Rng(seq);
}

inline double uniform01(Rng& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

inline double standard_normal(Rng& rng) {
  return std::normal_distribution<double>(0.0, 1.0)(rng);
}

/// Uniform index in [0, n).
inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  if (n == 0) throw std::invalid_argument("uniform_index: empty range");
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

inline std::string save_rng(const Rng& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

inline Rng load_rng(const std::string& state) {
  Rng rng;
  std::istringstream is(state);
  is >> rng;
  if (!is) throw std::runtime_error("corrupt random generator state");
  return rng;
}

/// Runs fn(i) for i in [0, n) on up to `threads` worker threads. Each index is
/// handled exactly once; callers must not share mutable state across indices.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn&& fn) {
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  threads = std::min(threads, n);
  std::vector<std::exception_ptr> errors(threads);
  {
    std::vector<std::jthread> pool;
    pool.reserve(threads);
    for (std::size_t w = 0; w < threads; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t i = w; i < n; i += threads) fn(i);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace ipbt
