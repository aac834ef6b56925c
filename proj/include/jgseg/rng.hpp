// Copyright (c) 2026 jgseg contributors
// SPDX-License-Identifier: Apache-2.0
//
// Seeded, serializable random streams. A stream is identified by
// (seed, stream_id): the same pair plus the same draw sequence reproduces
// bit-identical values, and distinct stream ids decorrelate.

#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>

#include "jgseg/tensor.hpp"

namespace jgseg {

namespace detail {
inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}
}  // namespace detail

class SeededRng {
 public:
  SeededRng() : SeededRng(0, "default") {}
  SeededRng(std::uint64_t seed, std::string stream_id)
      : seed_(seed), stream_id_(std::move(stream_id)) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed_),
                      static_cast<std::uint32_t>(seed_ >> 32),
                      static_cast<std::uint32_t>(detail::fnv1a(stream_id_)),
                      static_cast<std::uint32_t>(detail::fnv1a(stream_id_) >> 32)};
    engine_.seed(seq);
  }

  std::uint64_t seed() const { return seed_; }
  const std::string& stream_id() const { return stream_id_; }

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(engine_() >> 11) * (1.0 / 9007199254740992.0);
  }

  // Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  std::int64_t below(std::int64_t n) {
    return static_cast<std::int64_t>(engine_() % static_cast<std::uint64_t>(n));
  }

  // Standard normal via Box-Muller with a cached spare.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  // Serialized state round-trips all future draws bit-exactly.
  std::string save_state() const {
    std::ostringstream os;
    os << seed_ << ' ' << stream_id_ << ' ' << (has_spare_ ? 1 : 0) << ' ';
    os.precision(17);
    os << spare_ << ' ' << engine_;
    return os.str();
  }

  static SeededRng restore_state(const std::string& state) {
    std::istringstream is(state);
    SeededRng rng;
    int has_spare = 0;
    is >> rng.seed_ >> rng.stream_id_ >> has_spare >> rng.spare_ >> rng.engine_;
    if (!is) throw IoError("malformed rng state");
    rng.has_spare_ = has_spare != 0;
    return rng;
  }

 private:
  std::uint64_t seed_ = 0;
  std::string stream_id_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// I.i.d. standard-normal tensor with the given shape.
template <typename T>
Tensor<T> normal_sample(SeededRng& rng, const Shape& shape) {
  Tensor<T> t(shape);  // throws InvalidArgument on degenerate dims
  for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(rng.normal());
  return t;
}

template <typename T>
Tensor<T> uniform_sample(SeededRng& rng, const Shape& shape, double lo, double hi) {
  Tensor<T> t(shape);
  for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

}  // namespace jgseg
