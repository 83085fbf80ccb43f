#ifndef P2_TESTS_REFERENCE_SAMPLERS_HPP
#define P2_TESTS_REFERENCE_SAMPLERS_HPP

// Independently coded single-purpose samplers for the baseline table rows.
// They share only the core types and the denoiser with the engine; scoring,
// selection and state updates are written from the row definitions directly.

#include <algorithm>
#include <numeric>

#include "p2/denoiser.hpp"

namespace p2::tests {

// Random-order unmasking: one uniformly chosen masked position per step.
inline Sequence ref_ancestral(const Denoiser& den, RandomStream& rng) {
  const Vocabulary& vocab = den.vocab();
  const int L = den.length();
  Sequence x(L, vocab.mask_id());
  std::vector<int> masked(L);
  std::iota(masked.begin(), masked.end(), 0);
  while (!masked.empty()) {
    std::size_t pick = rng.uniform_below(masked.size());
    int pos = masked[pick];
    masked[pick] = masked.back();
    masked.pop_back();
    x[pos] = rng.categorical(den.predict_position(x, pos));
  }
  return x;
}

// Confidence-ordered unmasking: fill the masked position whose drawn token
// has the highest denoiser probability.
inline Sequence ref_greedy(const Denoiser& den, RandomStream& rng) {
  const Vocabulary& vocab = den.vocab();
  const int L = den.length();
  Sequence x(L, vocab.mask_id());
  for (int step = 0; step < L; ++step) {
    std::vector<ProbVector> pred = den.predict(x);
    int best = -1;
    double best_score = -1.0;
    Sequence z(L);
    for (int j = 0; j < L; ++j) {
      if (!vocab.is_mask(x[j])) continue;
      z[j] = rng.categorical(pred[j]);
      double score = pred[j].weight(z[j]);
      if (score > best_score) {
        best_score = score;
        best = j;
      }
    }
    x[best] = z[best];
  }
  return x;
}

// Keep the top-t positions by fresh uniform scores, masked scores scaled by
// eta; masked keepers take the drawn token, dropped positions go to mask.
inline Sequence ref_dfm(const Denoiser& den, double eta, RandomStream& rng) {
  const Vocabulary& vocab = den.vocab();
  const int L = den.length();
  Sequence x(L, vocab.mask_id());
  for (int t = 1; t <= L; ++t) {
    std::vector<ProbVector> pred = den.predict(x);
    Sequence z(L);
    std::vector<double> score(L);
    for (int j = 0; j < L; ++j) {
      z[j] = rng.categorical(pred[j]);
      double u = rng.uniform();
      score[j] = vocab.is_mask(x[j]) ? eta * u : u;
    }
    std::vector<int> order(L);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      if (score[a] != score[b]) return score[a] > score[b];
      return a < b;
    });
    Sequence next(L, vocab.mask_id());
    for (int k = 0; k < t; ++k) {
      int j = order[k];
      next[j] = vocab.is_mask(x[j]) ? z[j] : x[j];
    }
    x = std::move(next);
  }
  return x;
}

// Keep the top-t positions by the confidence of the freshly drawn token at
// every position, masked and unmasked alike.
inline Sequence ref_rdm(const Denoiser& den, RandomStream& rng) {
  const Vocabulary& vocab = den.vocab();
  const int L = den.length();
  Sequence x(L, vocab.mask_id());
  for (int t = 1; t <= L; ++t) {
    std::vector<ProbVector> pred = den.predict(x);
    Sequence z(L);
    std::vector<double> score(L);
    for (int j = 0; j < L; ++j) {
      z[j] = rng.categorical(pred[j]);
      score[j] = pred[j].weight(z[j]);
    }
    std::vector<int> order(L);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      if (score[a] != score[b]) return score[a] > score[b];
      if (vocab.is_mask(x[a]) != vocab.is_mask(x[b])) return !vocab.is_mask(x[a]);
      return a < b;
    });
    Sequence next(L, vocab.mask_id());
    for (int k = 0; k < t; ++k) {
      int j = order[k];
      next[j] = vocab.is_mask(x[j]) ? z[j] : x[j];
    }
    x = std::move(next);
  }
  return x;
}

}  // namespace p2::tests

#endif
