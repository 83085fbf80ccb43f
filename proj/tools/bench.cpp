// Timing comparison of the serial reference drivers against the OpenMP
// batch kernels, plus a bitwise equality check between the two paths.

#include <chrono>
#include <cstdio>
#include <string>

#include "p2/batch.hpp"
#include "p2/training.hpp"

using namespace p2;

namespace {

EmpiricalDistribution bench_corpus(const Vocabulary& vocab, int length, int size,
                                   std::uint64_t seed) {
  RandomStream rng(seed);
  std::vector<Sequence> support;
  while (static_cast<int>(support.size()) < size) {
    Sequence s(length);
    for (int i = 0; i < length; ++i)
      s[i] = static_cast<Token>(rng.uniform_below(vocab.size() - 1) + 1);
    bool dup = false;
    for (const Sequence& prev : support) dup = dup || prev == s;
    if (!dup) support.push_back(std::move(s));
  }
  std::vector<double> probs(size, 1.0 / size);
  return EmpiricalDistribution(std::move(support), std::move(probs), vocab);
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

int main(int argc, char** argv) {
  int n = 20000;
  long n_mc = 50000;
  for (int i = 1; i < argc; ++i) {
    std::string arg = argv[i];
    if (arg == "--n" && i + 1 < argc) n = std::stoi(argv[++i]);
    if (arg == "--n-mc" && i + 1 < argc) n_mc = std::stol(argv[++i]);
    if (arg == "--quick") {
      n = 2000;
      n_mc = 5000;
    }
  }

  Vocabulary vocab(7);
  auto dist = std::make_shared<EmpiricalDistribution>(bench_corpus(vocab, 8, 16, 7));
  auto den = corrupt(std::make_shared<ExactDenoiser>(dist, vocab), CorruptionSpec{0.3, 1.0});

  SamplerConfig cfg = preset_config("p2-self", den, nullptr, nullptr, dist->length(), 11, 1.0);

  auto t0 = std::chrono::steady_clock::now();
  BatchResult serial = sample_batch_serial(cfg, *den, n);
  double serial_s = seconds_since(t0);

  t0 = std::chrono::steady_clock::now();
  BatchResult parallel = sample_batch(cfg, *den, n);
  double parallel_s = seconds_since(t0);

  bool same = serial.samples == parallel.samples;
  std::printf("sample_batch      n=%d serial=%.3fs parallel=%.3fs speedup=%.2fx identical=%s\n", n,
              serial_s, parallel_s, serial_s / parallel_s, same ? "yes" : "NO");

  ElboOptions serial_opts;
  serial_opts.threads = 1;
  ElboOptions parallel_opts;
  parallel_opts.threads = -1;
  NoiseSchedule schedule = NoiseSchedule::linear();

  t0 = std::chrono::steady_clock::now();
  ElboEstimate e1 = estimate_elbo(*dist, *den, *cfg.planner, schedule, n_mc, 13, serial_opts);
  double elbo_serial_s = seconds_since(t0);

  t0 = std::chrono::steady_clock::now();
  ElboEstimate e2 = estimate_elbo(*dist, *den, *cfg.planner, schedule, n_mc, 13, parallel_opts);
  double elbo_parallel_s = seconds_since(t0);

  bool elbo_same = e1.total == e2.total && e1.e_mp == e2.e_mp && e1.e_up == e2.e_up;
  std::printf("estimate_elbo  n_mc=%ld serial=%.3fs parallel=%.3fs speedup=%.2fx identical=%s\n",
              n_mc, elbo_serial_s, elbo_parallel_s, elbo_serial_s / elbo_parallel_s,
              elbo_same ? "yes" : "NO");

  return (same && elbo_same) ? 0 : 1;
}
