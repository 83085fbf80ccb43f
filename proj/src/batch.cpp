#include "p2/batch.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace p2 {

namespace {

// Runs chain_fn(c, rng, diag) for c in [0, n) and merges diagnostics in
// chain order.
template <typename ChainFn>
BatchResult run_batch(int n, std::uint64_t seed, bool parallel, int threads, ChainFn chain_fn) {
  BatchResult out;
  out.samples.resize(n);
  std::vector<SamplerDiagnostics> diags(n);
  RandomStream root(seed);

#ifdef _OPENMP
  if (parallel) {
    if (threads <= 0) threads = omp_get_max_threads();
#pragma omp parallel for schedule(dynamic, 64) num_threads(threads)
    for (int c = 0; c < n; ++c) {
      RandomStream rng = root.child(static_cast<std::uint64_t>(c));
      out.samples[c] = chain_fn(rng, &diags[c]);
    }
  } else
#endif
  {
    (void)parallel;
    (void)threads;
    for (int c = 0; c < n; ++c) {
      RandomStream rng = root.child(static_cast<std::uint64_t>(c));
      out.samples[c] = chain_fn(rng, &diags[c]);
    }
  }

  for (const auto& d : diags) out.diag.merge(d);
  return out;
}

}  // namespace

BatchResult sample_batch_serial(const SamplerConfig& cfg, const Denoiser& den, int n_samples) {
  return run_batch(n_samples, cfg.seed, false, 1, [&](RandomStream& rng, SamplerDiagnostics* d) {
    return p2_sample(cfg, den, rng, d).first;
  });
}

BatchResult sample_batch(const SamplerConfig& cfg, const Denoiser& den, int n_samples,
                         int threads) {
  return run_batch(n_samples, cfg.seed, true, threads,
                   [&](RandomStream& rng, SamplerDiagnostics* d) {
                     return p2_sample(cfg, den, rng, d).first;
                   });
}

BatchResult gillespie_mdm_batch_serial(const Denoiser& den, int n_samples, std::uint64_t seed) {
  return run_batch(n_samples, seed, false, 1, [&](RandomStream& rng, SamplerDiagnostics*) {
    return gillespie_mdm_sample(den, rng);
  });
}

BatchResult gillespie_mdm_batch(const Denoiser& den, int n_samples, std::uint64_t seed,
                                int threads) {
  return run_batch(n_samples, seed, true, threads, [&](RandomStream& rng, SamplerDiagnostics*) {
    return gillespie_mdm_sample(den, rng);
  });
}

BatchResult gillespie_p2_batch_serial(const Denoiser& den, const Planner& planner, int iterations,
                                      int n_samples, std::uint64_t seed, GillespieMode mode) {
  return run_batch(n_samples, seed, false, 1, [&](RandomStream& rng, SamplerDiagnostics* d) {
    return gillespie_p2_sample(den, planner, iterations, rng, mode, d);
  });
}

BatchResult gillespie_p2_batch(const Denoiser& den, const Planner& planner, int iterations,
                               int n_samples, std::uint64_t seed, GillespieMode mode,
                               int threads) {
  return run_batch(n_samples, seed, true, threads, [&](RandomStream& rng, SamplerDiagnostics* d) {
    return gillespie_p2_sample(den, planner, iterations, rng, mode, d);
  });
}

}  // namespace p2
