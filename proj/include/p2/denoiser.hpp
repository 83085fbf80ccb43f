#ifndef P2_DENOISER_HPP
#define P2_DENOISER_HPP

#include <atomic>
#include <memory>
#include <vector>

#include "p2/core.hpp"

namespace p2 {

// Enumerable distribution over full, mask-free sequences of a common length.
class EmpiricalDistribution {
 public:
  EmpiricalDistribution(std::vector<Sequence> support, std::vector<double> probs,
                        const Vocabulary& vocab);

  int length() const { return L_; }
  int support_size() const { return static_cast<int>(support_.size()); }
  const std::vector<Sequence>& support() const { return support_; }
  const std::vector<double>& probs() const { return probs_; }

  // Probability of an exact sequence (0 if off support).
  double prob_of(const Sequence& x) const;
  // Marginal distribution of position i (zero-based), zero mass on mask.
  ProbVector marginal(int position, const Vocabulary& vocab) const;
  // Most frequent token at each position (first support hit on ties).
  std::vector<Token> position_modes() const;

  double entropy() const;
  Sequence sample(RandomStream& rng) const;

 private:
  int L_;
  std::vector<Sequence> support_;
  std::vector<double> probs_;
};

// How a denoiser answers queries at already-unmasked positions.
enum class UnmaskedMode {
  kLeaveOneOut,  // exact conditional with the queried position held out
  kDirac,        // delta at the current token, the strict carry-over convention
};

// D_theta: maps a partially masked sequence to a per-position distribution
// over clean tokens. Implementations must put zero mass on the mask symbol.
class Denoiser {
 public:
  virtual ~Denoiser() = default;

  virtual int length() const = 0;
  virtual const Vocabulary& vocab() const = 0;
  virtual bool leave_one_out_supported() const = 0;

  virtual ProbVector predict_position(const Sequence& x_t, int position) const = 0;

  // Full-sequence prediction; override when a batch query is cheaper.
  virtual std::vector<ProbVector> predict(const Sequence& x_t) const;
};

// Exact tabular denoiser: conditionals of the clean token given the unmasked
// context, computed by enumeration over the support.
class ExactDenoiser : public Denoiser {
 public:
  ExactDenoiser(std::shared_ptr<const EmpiricalDistribution> dist, Vocabulary vocab,
                UnmaskedMode mode = UnmaskedMode::kLeaveOneOut);

  int length() const override { return dist_->length(); }
  const Vocabulary& vocab() const override { return vocab_; }
  bool leave_one_out_supported() const override { return mode_ == UnmaskedMode::kLeaveOneOut; }

  ProbVector predict_position(const Sequence& x_t, int position) const override;

  const EmpiricalDistribution& distribution() const { return *dist_; }
  // Number of queries whose conditioning event had probability zero and fell
  // back to the unconditional marginal.
  std::uint64_t off_support_queries() const { return off_support_.load(); }

 private:
  std::shared_ptr<const EmpiricalDistribution> dist_;
  Vocabulary vocab_;
  UnmaskedMode mode_;
  std::vector<ProbVector> marginals_;
  mutable std::atomic<std::uint64_t> off_support_{0};
};

// Imperfect-denoiser model: mixes lambda of the uniform non-mask distribution
// into each prediction, then sharpens or flattens by 1/temperature.
struct CorruptionSpec {
  double mix_lambda = 0.0;
  double temperature = 1.0;

  void validate() const;
};

class CorruptedDenoiser : public Denoiser {
 public:
  CorruptedDenoiser(std::shared_ptr<const Denoiser> base, CorruptionSpec spec);

  int length() const override { return base_->length(); }
  const Vocabulary& vocab() const override { return base_->vocab(); }
  bool leave_one_out_supported() const override { return base_->leave_one_out_supported(); }

  ProbVector predict_position(const Sequence& x_t, int position) const override;
  std::vector<ProbVector> predict(const Sequence& x_t) const override;

  const CorruptionSpec& spec() const { return spec_; }

 private:
  ProbVector corrupt_one(ProbVector p) const;

  std::shared_ptr<const Denoiser> base_;
  CorruptionSpec spec_;
};

std::shared_ptr<const Denoiser> corrupt(std::shared_ptr<const Denoiser> base, CorruptionSpec spec);

// Counters surfaced by the reverse-transition kernels.
struct ReverseStepDiagnostics {
  std::uint64_t degenerate_resamples = 0;
};

// Vanilla reverse transition (carry-over at unmasked positions; masked
// positions draw from ((1-a_to) delta(m) + (a_to - a_from) D^i) / (1-a_from)).
// Time runs backwards: t_to < t_from.
Token vanilla_reverse_step(const Sequence& x_t, int position, double t_from, double t_to,
                           const Denoiser& den, const NoiseSchedule& schedule, RandomStream& rng);

// Remask-and-resample transition for an unmasked position. Queries the
// denoiser on x_t with `position` remasked and renormalizes the branch
// weights; tiny negative weights from cancellation are clamped to zero.
Token p2_reverse_unmasked_step(const Sequence& x_t, int position, double t_from, double t_to,
                               const Denoiser& den, const NoiseSchedule& schedule,
                               RandomStream& rng, ReverseStepDiagnostics* diag = nullptr);

// Branch weights of the transition above as an explicit distribution over
// symbols; exposed so tests can compare the sampling path against it.
ProbVector p2_reverse_unmasked_law(const Sequence& x_t, int position, double t_from, double t_to,
                                   const Denoiser& den, const NoiseSchedule& schedule,
                                   bool* degenerate = nullptr);

}  // namespace p2

#endif
