#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace trajdiff {

/// Keeps large temporaries on the heap instead of fresh mmap pages per call;
/// training allocates and frees the same activation sizes every step.
inline void tune_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  mallopt(M_TOP_PAD, 256 << 20);
#endif
}

// Error hierarchy. Each subclass names the failure category so the CLI can map
// it onto an exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ContractError : public Error {
 public:
  using Error::Error;
};
class ScheduleError : public Error {
 public:
  using Error::Error;
};
class SigmaError : public Error {
 public:
  using Error::Error;
};
class CapacityError : public Error {
 public:
  using Error::Error;
};
class ConditionError : public Error {
 public:
  using Error::Error;
};
class ResampleError : public Error {
 public:
  using Error::Error;
};
class NormalizationError : public Error {
 public:
  using Error::Error;
};
class FormatError : public Error {
 public:
  using Error::Error;
};
class IngestError : public Error {
 public:
  using Error::Error;
};
class MetricError : public Error {
 public:
  using Error::Error;
};
class DivergenceError : public Error {
 public:
  using Error::Error;
};
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A batch of fixed-length 2-D trajectories laid out as (batch, length, 2),
/// row-major. Used for clean data, noisy states and noise predictions alike.
template <typename Scalar>
struct TrajBatch {
  std::size_t batch = 0;
  std::size_t length = 0;
  std::vector<Scalar> data;

  TrajBatch() = default;
  TrajBatch(std::size_t b, std::size_t n, Scalar fill = Scalar(0))
      : batch(b), length(n), data(b * n * 2, fill) {}

  Scalar& at(std::size_t b, std::size_t i, std::size_t c) { return data[(b * length + i) * 2 + c]; }
  const Scalar& at(std::size_t b, std::size_t i, std::size_t c) const {
    return data[(b * length + i) * 2 + c];
  }

  std::span<Scalar> row(std::size_t b) { return {data.data() + b * length * 2, length * 2}; }
  std::span<const Scalar> row(std::size_t b) const { return {data.data() + b * length * 2, length * 2}; }

  [[nodiscard]] std::size_t size() const { return data.size(); }
  [[nodiscard]] bool same_shape(const TrajBatch& o) const {
    return batch == o.batch && length == o.length;
  }

  template <typename To>
  [[nodiscard]] TrajBatch<To> cast() const {
    TrajBatch<To> out(batch, length);
    for (std::size_t k = 0; k < data.size(); ++k) out.data[k] = static_cast<To>(data[k]);
    return out;
  }

  friend bool operator==(const TrajBatch&, const TrajBatch&) = default;
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Counter-based seed split: the stream for element `index` depends only on
/// (seed, index), never on how work is scheduled.
inline std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t index) {
  return splitmix64(splitmix64(seed) ^ splitmix64(index + 0x632BE59BD9B4E019ULL));
}

using Rng = std::mt19937_64;

template <typename Scalar>
void fill_normal(Rng& rng, std::span<Scalar> out) {
  std::normal_distribution<double> nd(0.0, 1.0);
  for (auto& v : out) v = static_cast<Scalar>(nd(rng));
}

}  // namespace trajdiff
