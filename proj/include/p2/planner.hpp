#ifndef P2_PLANNER_HPP
#define P2_PLANNER_HPP

#include <memory>
#include <utility>
#include <vector>

#include "p2/denoiser.hpp"

namespace p2 {

// Scores a fully unmasked sequence per position; the stand-in for an
// external masked-LM critic. Backed here by a tabular denoiser queried in
// leave-one-out mode.
class ExternalScorer {
 public:
  virtual ~ExternalScorer() = default;
  virtual ProbVector score_position(const Sequence& z, int position) const = 0;
  virtual std::vector<ProbVector> score(const Sequence& z) const;
  virtual const Vocabulary& vocab() const = 0;
};

class LeaveOneOutScorer : public ExternalScorer {
 public:
  explicit LeaveOneOutScorer(std::shared_ptr<const Denoiser> den);

  ProbVector score_position(const Sequence& z, int position) const override;
  std::vector<ProbVector> score(const Sequence& z) const override;
  const Vocabulary& vocab() const override { return den_->vocab(); }

 private:
  void require_unmasked(const Sequence& z) const;
  std::shared_ptr<const Denoiser> den_;
};

constexpr int kMaskFractionBuckets = 10;

// Logistic scorer over hand-built features: position indicator, predicted
// token indicator, mask-fraction decile, and a context-agreement count
// against the corpus position modes. The same weight vector serves as G_M at
// masked positions and G_U at unmasked positions.
struct TrainablePlannerModel {
  int length = 0;
  int vocab_size = 0;
  std::vector<Token> context_modes;
  std::vector<double> weights;
  double learning_rate = 0.1;
  std::string version = "1";
  std::string trained_on;  // corpus hash, for provenance
  std::uint64_t seed = 0;

  static TrainablePlannerModel init(const EmpiricalDistribution& corpus, const Vocabulary& vocab,
                                    double learning_rate);

  int feature_count() const { return length + (vocab_size - 1) + kMaskFractionBuckets + 1; }
  // Active features as (index, value) pairs.
  void features(const Sequence& z, const Sequence& x_t, int position, const Vocabulary& vocab,
                std::vector<std::pair<int, double>>& out) const;
  double logit(const Sequence& z, const Sequence& x_t, int position, const Vocabulary& vocab) const;
  double score(const Sequence& z, const Sequence& x_t, int position, const Vocabulary& vocab) const;

  void validate() const;
};

// Step-scoped planner inputs: the cached denoiser prediction for the current
// x_t and the sampling stream for stochastic score rules. Both are owned by
// one sampler worker.
struct PlannerContext {
  const std::vector<ProbVector>* pred_xt = nullptr;
  RandomStream* rng = nullptr;
};

// Symbolic score rules the planner families are assembled from.
enum class ScoreRule {
  kOne,
  kUniform,
  kDenoiserConfidence,  // Cat(z^j; D^j(x_t))
  kScorerConfidence,    // Cat(z^j; B^j(z))
  kTrainedModel,
};

const char* score_rule_name(ScoreRule rule);

// G_phi split into a masked-token planner G_M (unmask confidence) and an
// unmasked-token planner G_U (keep confidence).
class Planner {
 public:
  virtual ~Planner() = default;

  virtual double masked_score(const Sequence& z, const Sequence& x_t, int position,
                              PlannerContext& ctx) const = 0;
  virtual double keep_score(const Sequence& z, const Sequence& x_t, int position,
                            PlannerContext& ctx) const = 0;

  virtual bool stochastic() const { return false; }
  virtual ScoreRule masked_rule() const = 0;
  virtual ScoreRule keep_rule() const = 0;
};

class ConfigurablePlanner : public Planner {
 public:
  ConfigurablePlanner(ScoreRule masked, ScoreRule keep, std::shared_ptr<const Denoiser> den,
                      std::shared_ptr<const ExternalScorer> scorer,
                      std::shared_ptr<const TrainablePlannerModel> model);

  double masked_score(const Sequence& z, const Sequence& x_t, int position,
                      PlannerContext& ctx) const override;
  double keep_score(const Sequence& z, const Sequence& x_t, int position,
                    PlannerContext& ctx) const override;

  bool stochastic() const override {
    return masked_ == ScoreRule::kUniform || keep_ == ScoreRule::kUniform;
  }
  ScoreRule masked_rule() const override { return masked_; }
  ScoreRule keep_rule() const override { return keep_; }

 private:
  double eval(ScoreRule rule, const Sequence& z, const Sequence& x_t, int position,
              PlannerContext& ctx) const;

  ScoreRule masked_;
  ScoreRule keep_;
  std::shared_ptr<const Denoiser> den_;
  std::shared_ptr<const ExternalScorer> scorer_;
  std::shared_ptr<const TrainablePlannerModel> model_;
};

// Planner families.
std::shared_ptr<const Planner> self_planner(std::shared_ptr<const Denoiser> den);
std::shared_ptr<const Planner> external_planner(std::shared_ptr<const Denoiser> den,
                                                std::shared_ptr<const ExternalScorer> scorer);
std::shared_ptr<const Planner> ddpd_planner(std::shared_ptr<const ExternalScorer> scorer);
std::shared_ptr<const Planner> greedy_planner(std::shared_ptr<const Denoiser> den);
// uniform_keep=false gives the no-remask variant (keep score pinned to 1);
// true draws both sides fresh from the caller's stream.
std::shared_ptr<const Planner> uniform_planner(bool uniform_keep);
// G_M = G_U = 1: recovers plain masked-diffusion behavior.
std::shared_ptr<const Planner> trivial_planner();
std::shared_ptr<const Planner> trained_planner(std::shared_ptr<const Denoiser> den,
                                               std::shared_ptr<const TrainablePlannerModel> model,
                                               bool trained_masked_scores = false);

enum class ScoreDomain { kProbability, kLog };

// Stochasticity combination. Probability domain scales masked scores by eta;
// log domain scales unmasked log-scores by eta, matching the practical
// top-k-lowest-remasking formulation. Both raise remask frequency with eta.
struct EtaCombination {
  double eta = 1.0;
  ScoreDomain domain = ScoreDomain::kProbability;

  void validate() const;
};

// Per-position combined scores used for top-k selection.
std::vector<double> combine_eta(const Planner& planner, const EtaCombination& comb,
                                const Sequence& z, const Sequence& x_t, const Vocabulary& vocab,
                                PlannerContext& ctx);

}  // namespace p2

#endif
