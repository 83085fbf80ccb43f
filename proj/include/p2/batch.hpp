#ifndef P2_BATCH_HPP
#define P2_BATCH_HPP

#include "p2/sampler.hpp"

namespace p2 {

// Batch generation. Chain c always draws from the child stream (seed, c), so
// results are identical for any thread count; the serial drivers are the
// reference implementations the parallel kernels are tested against.

struct BatchResult {
  std::vector<Sequence> samples;
  SamplerDiagnostics diag;
};

BatchResult sample_batch_serial(const SamplerConfig& cfg, const Denoiser& den, int n_samples);
BatchResult sample_batch(const SamplerConfig& cfg, const Denoiser& den, int n_samples,
                         int threads = 0);

BatchResult gillespie_mdm_batch_serial(const Denoiser& den, int n_samples, std::uint64_t seed);
BatchResult gillespie_mdm_batch(const Denoiser& den, int n_samples, std::uint64_t seed,
                                int threads = 0);

BatchResult gillespie_p2_batch_serial(const Denoiser& den, const Planner& planner, int iterations,
                                      int n_samples, std::uint64_t seed,
                                      GillespieMode mode = GillespieMode::kApproximate);
BatchResult gillespie_p2_batch(const Denoiser& den, const Planner& planner, int iterations,
                               int n_samples, std::uint64_t seed,
                               GillespieMode mode = GillespieMode::kApproximate, int threads = 0);

}  // namespace p2

#endif
