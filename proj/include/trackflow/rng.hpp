#pragma once

#include <cstdint>

namespace trackflow {

/// Counter-based generator: output i of stream s under key k is a pure
/// function of (k, s, i), so sequences do not depend on the platform's
/// standard-library distributions.
class CounterRng {
 public:
  CounterRng(std::uint64_t key, std::uint64_t stream) : key_(key), stream_(stream) {}

  std::uint64_t next();
  /// Uniform integer in [0, bound), bound > 0, by rejection.
  std::uint64_t below(std::uint64_t bound);
  /// Uniform double in [0, 1) with 53 random bits.
  double uniform();
  /// Standard normal via Box-Muller.
  double normal();

 private:
  std::uint64_t key_;
  std::uint64_t stream_;
  std::uint64_t counter_ = 0;
};

}  // namespace trackflow
