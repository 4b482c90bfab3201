#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace mcclk {

using idx = std::int64_t;

// One exception type per contract error so call sites and tests can catch
// precisely.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IndexOutOfBounds : Error { using Error::Error; };
struct DuplicateEdge : Error { using Error::Error; };
struct NegativeWeight : Error { using Error::Error; };
struct NonFiniteValue : Error { using Error::Error; };
struct EmptyFile : Error { using Error::Error; };
struct BadRatios : Error { using Error::Error; };
struct DimensionMismatch : Error { using Error::Error; };
struct EmptyNeighborhood : Error { using Error::Error; };
struct BatchTooSmall : Error { using Error::Error; };
struct DegenerateLabels : Error { using Error::Error; };
struct NonFiniteLoss : Error { using Error::Error; };
struct CheckpointMismatch : Error { using Error::Error; };
struct GradCheckFailure : Error { using Error::Error; };
struct ConvergenceFailure : Error { using Error::Error; };
struct DiskWriteError : Error { using Error::Error; };

struct ParseError : Error {
  int line;
  ParseError(const std::string& msg, int line_no)
      : Error(msg + " (line " + std::to_string(line_no) + ")"), line(line_no) {}
};

// Counter-based generator (splitmix64). Same seed gives the same stream on
// every platform, which the split/init/sampling contracts rely on.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // [0, 1)
  double next_double() { return double(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) {
    return lo + (hi - lo) * next_double();
  }

  // Marsaglia polar would need state; Box-Muller on two draws is fine here.
  double gauss() {
    double u1 = next_double(), u2 = next_double();
    while (u1 <= 1e-300) u1 = next_double();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  // unbiased [0, n)
  std::uint64_t next_below(std::uint64_t n) {
    if (n == 0) return 0;
    const std::uint64_t bound = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x = next_u64();
    while (x >= bound) x = next_u64();
    return x % n;
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::uint64_t i = v.size(); i > 1; --i)
      std::swap(v[i - 1], v[next_below(i)]);
  }

  // Independent derived stream; does not disturb this generator.
  Rng sub(std::uint64_t tag) const {
    std::uint64_t z = seed_ ^ (0x9E3779B97F4A7C15ULL * (tag + 0x632BE59BD9B4E019ULL));
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return Rng(z ^ (z >> 31));
  }

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::uint64_t state_;
};

// Contiguous range split across up to `threads` workers. Each range is owned
// by exactly one worker, so writes to disjoint rows need no synchronization
// and the result does not depend on the thread count.
inline void parallel_for(idx n, int threads,
                         const std::function<void(idx, idx)>& fn) {
  if (n <= 0) return;
  if (threads <= 1 || n < 256) {
    fn(0, n);
    return;
  }
  const int workers = int(std::min<idx>(threads, n));
  std::vector<std::thread> pool;
  pool.reserve(workers);
  const idx chunk = (n + workers - 1) / workers;
  for (int t = 0; t < workers; ++t) {
    const idx b = idx(t) * chunk;
    const idx e = std::min(n, b + chunk);
    if (b >= e) break;
    pool.emplace_back([&fn, b, e] { fn(b, e); });
  }
  for (auto& th : pool) th.join();
}

// Ordered reduction: partials per fixed-size chunk, combined in chunk order,
// so the floating-point sum is identical for every thread count.
inline double parallel_sum(idx n, int threads,
                           const std::function<double(idx, idx)>& fn) {
  if (n <= 0) return 0.0;
  const idx chunk = 2048;
  const idx n_chunks = (n + chunk - 1) / chunk;
  std::vector<double> partial(n_chunks, 0.0);
  parallel_for(n_chunks, threads, [&](idx cb, idx ce) {
    for (idx c = cb; c < ce; ++c)
      partial[c] = fn(c * chunk, std::min(n, (c + 1) * chunk));
  });
  double s = 0.0;
  for (double p : partial) s += p;
  return s;
}

inline std::uint64_t fnv1a64(const void* data, std::size_t len,
                             std::uint64_t h = 1469598103934665603ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::uint64_t fnv1a64(const std::string& s) {
  return fnv1a64(s.data(), s.size());
}

}  // namespace mcclk
