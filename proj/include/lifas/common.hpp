#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace lifas {

using Index = std::ptrdiff_t;

// One exception type for the whole library. The code tells callers (and the
// CLI exit-code mapping) whether the failure came from user input or from an
// internal invariant.
class Error : public std::runtime_error {
 public:
  enum class Code {
    bad_argument,       // precondition violated by caller-supplied values
    io,                 // filesystem / stream failure
    wav_header,         // RIFF/WAVE container malformed
    wav_codec,          // fmt chunk audio-format code is not PCM
    wav_depth,          // bits per sample is not 16
    wav_channels,       // channel count is not 1 or 2
    wav_truncated,      // data chunk shorter than its declared size
    manifest,           // manifest CSV malformed
    split_infeasible,   // cannot satisfy counts / speaker disjointness
    dataset_budget,     // too many unreadable clips in an epoch
    config,             // JSON config malformed
    checkpoint,         // checkpoint file malformed
    shape_mismatch,     // tensor shapes inconsistent
    numeric,            // non-finite value where a finite one is required
  };

  Error(Code code, std::string msg) : std::runtime_error(std::move(msg)), code_(code) {}

  Code code() const { return code_; }

  // True when the failure is attributable to user input rather than a bug.
  bool user_error() const {
    return code_ != Code::shape_mismatch && code_ != Code::numeric;
  }

 private:
  Code code_;
};

// Deterministic RNG with portable output: mt19937_64 has a standard-specified
// sequence, and all value mappings below are our own (no std distributions,
// whose output is implementation-defined).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // Uniform on [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer on [lo, hi], both inclusive. Rejection sampling, exact.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    if (lo > hi) throw Error(Error::Code::bad_argument, "uniform_int: empty range");
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    if (span == 0) return static_cast<std::int64_t>(next_u64());  // full 64-bit range
    const std::uint64_t reject_above = UINT64_MAX - UINT64_MAX % span;
    std::uint64_t draw = next_u64();
    while (draw >= reject_above) draw = next_u64();
    return lo + static_cast<std::int64_t>(draw % span);
  }

  // Standard normal via Box-Muller; the sine partner is discarded to keep the
  // draw count per call fixed.
  double normal() {
    const double u1 = 1.0 - uniform();  // (0, 1], keeps log finite
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (Index i = static_cast<Index>(v.size()) - 1; i > 0; --i) {
      std::swap(v[static_cast<std::size_t>(i)],
                v[static_cast<std::size_t>(uniform_int(0, i))]);
    }
  }

 private:
  std::mt19937_64 gen_;
};

// SplitMix64-style combiner for deriving per-entry seeds from a master seed.
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a ^ (b + 0x9e3779b97f4a7c15ull + (a << 6) + (a >> 2));
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Worker-thread budget: min(hardware, LIFAS_THREADS env, programmatic limit).
// set_thread_limit(1) is the bitwise-reproducible single-threaded mode; all
// numeric paths are written so results do not depend on the count anyway.
int thread_limit();
void set_thread_limit(int n);  // n <= 0 restores the default policy

// Runs body(i) for i in [0, n). Static contiguous partition, so the work->
// thread mapping is deterministic for a fixed thread count. The first
// exception thrown by any worker is rethrown in the calling thread.
void parallel_for(Index n, const std::function<void(Index)>& body);

// All file outputs go through temp-file + rename so interrupted runs never
// leave truncated artifacts.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);
void write_file_atomic(const std::filesystem::path& path, const void* data, std::size_t size);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

}  // namespace lifas
