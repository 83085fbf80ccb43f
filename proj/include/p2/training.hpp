#ifndef P2_TRAINING_HPP
#define P2_TRAINING_HPP

#include <optional>

#include "p2/planner.hpp"

namespace p2 {

// Monte Carlo estimate of the expanded lower bound. Terms follow the
// masked-planner / unmasked-planner / denoiser split; total = mp + up + d.
struct ElboEstimate {
  double e_mp = 0.0;
  double e_up = 0.0;
  double e_d = 0.0;
  double total = 0.0;
  double se_mp = 0.0;
  double se_up = 0.0;
  double se_d = 0.0;
  double se_total = 0.0;
  long n_mc = 0;
  long floored_logs = 0;             // log(0) contributions floored at p_floor
  double max_draw_mp_plus_up = 0.0;  // largest per-draw planner contribution
};

struct ElboOptions {
  // Replace the queried coordinate of z with the true token (the bound's
  // convention); false queries the raw denoiser draw as the sampler does.
  bool substitute_truth = true;
  int threads = 1;  // >1 parallelizes across draws; results are identical
};

// Bound estimate for one fixed clean sequence.
ElboEstimate estimate_elbo(const Sequence& x0, const Denoiser& den, const Planner& planner,
                           const NoiseSchedule& schedule, long n_mc, std::uint64_t seed,
                           const ElboOptions& options = {});
// Corpus average: each draw picks x0 from the distribution first.
ElboEstimate estimate_elbo(const EmpiricalDistribution& dist, const Denoiser& den,
                           const Planner& planner, const NoiseSchedule& schedule, long n_mc,
                           std::uint64_t seed, const ElboOptions& options = {});

// One corruption draw used for a planner update or evaluation.
struct PlannerTrainingExample {
  double t = 0.0;
  Sequence x_t;
  Sequence z;
};

PlannerTrainingExample make_training_example(const Sequence& x0, const Denoiser& den,
                                             const NoiseSchedule& schedule, RandomStream& rng);

struct TrainingOptions {
  // Keep only masked positions whose denoiser draw hit the true token, the
  // cheaper masked-planner objective; false trains on all masked positions.
  bool restricted_mp = true;
  // Cap on the per-draw schedule weight. The raw weight behaves like 1/t
  // near t = 0, which leaves single-draw SGD with unbounded variance; a
  // bounded reweighting keeps the same optimum for the logistic planner.
  double weight_cap = 5.0;
};

// Weighted binary cross-entropy of the planner scores against agreement
// labels 1[z^j = x0^j]; fills the gradient when requested.
double planner_loss(const PlannerTrainingExample& example, const Sequence& x0,
                    const TrainablePlannerModel& model, const Vocabulary& vocab,
                    const NoiseSchedule& schedule, const TrainingOptions& options = {},
                    std::vector<double>* grad = nullptr);

// Draws an example and applies one SGD step in place; returns the loss at
// the pre-update weights. The denoiser is never modified.
double planner_training_step(const Sequence& x0, const Denoiser& den, TrainablePlannerModel& model,
                             const NoiseSchedule& schedule, RandomStream& rng,
                             const TrainingOptions& options = {});

// Mean loss over fresh draws with a fixed stream; used for held-out curves.
double evaluate_planner_loss(const EmpiricalDistribution& corpus, const Denoiser& den,
                             const TrainablePlannerModel& model, const NoiseSchedule& schedule,
                             int n_draws, std::uint64_t seed,
                             const TrainingOptions& options = {});

struct LossPoint {
  int step = 0;
  double loss = 0.0;
  std::optional<double> held_out;
};

struct TrainPlannerConfig {
  int steps = 200;
  double learning_rate = 0.1;
  std::uint64_t seed = 0;
  int held_out_every = 25;
  int held_out_draws = 256;
  TrainingOptions options;
};

struct TrainPlannerResult {
  TrainablePlannerModel model;
  std::vector<LossPoint> curve;
};

TrainPlannerResult train_planner(const EmpiricalDistribution& corpus, const Denoiser& den,
                                 const TrainPlannerConfig& config);

}  // namespace p2

#endif
