#include "p2/forward.hpp"

namespace p2 {

ProbVector forward_kernel(Token x0_token, double t, const NoiseSchedule& schedule,
                          const Vocabulary& vocab) {
  if (!vocab.in_range(x0_token) || vocab.is_mask(x0_token))
    throw precondition_error("forward_kernel: data token must be a non-mask symbol");
  double a = schedule.alpha(t);
  std::vector<double> w(vocab.size(), 0.0);
  w[x0_token - 1] = a;
  w[vocab.mask_id() - 1] = 1.0 - a;
  return ProbVector(std::move(w));
}

ForwardSample sample_forward(const Sequence& x0, double t, const NoiseSchedule& schedule,
                             const Vocabulary& vocab, RandomStream& rng) {
  ForwardSample out;
  out.t = t;
  out.x_t.resize(x0.size());
  double a = schedule.alpha(t);
  for (std::size_t i = 0; i < x0.size(); ++i) {
    if (vocab.is_mask(x0[i]))
      throw precondition_error("sample_forward: input sequence contains a mask token");
    if (rng.uniform() < a) {
      out.x_t[i] = x0[i];
    } else {
      out.x_t[i] = vocab.mask_id();
      out.masked_positions.push_back(static_cast<int>(i));
    }
  }
  return out;
}

}  // namespace p2
