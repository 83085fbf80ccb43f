#ifndef P2_FORWARD_HPP
#define P2_FORWARD_HPP

#include <vector>

#include "p2/core.hpp"

namespace p2 {

// Result of corrupting a clean sequence to time t under the masking process.
struct ForwardSample {
  Sequence x_t;
  double t = 0.0;
  std::vector<int> masked_positions;  // zero-based, ascending
};

// Per-token corruption kernel: alpha_t * delta(x0) + (1 - alpha_t) * delta(mask).
ProbVector forward_kernel(Token x0_token, double t, const NoiseSchedule& schedule,
                          const Vocabulary& vocab);

// Masks each position independently with probability 1 - alpha_t.
ForwardSample sample_forward(const Sequence& x0, double t, const NoiseSchedule& schedule,
                             const Vocabulary& vocab, RandomStream& rng);

}  // namespace p2

#endif
