#include "p2/training.hpp"

#include <algorithm>
#include <cmath>

#include "p2/forward.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace p2 {

namespace {

struct DrawValues {
  double mp = 0.0;
  double up = 0.0;
  double d = 0.0;
  int floored = 0;
};

double floored_log(double p, int* floored) {
  if (p < kLogFloor) {
    ++*floored;
    p = kLogFloor;
  }
  return std::log(p);
}

DrawValues elbo_draw(const Sequence& x0, const Denoiser& den, const Planner& planner,
                     const NoiseSchedule& schedule, const ElboOptions& options,
                     RandomStream& rng) {
  const Vocabulary& vocab = den.vocab();
  double t = kEpsClamp + (1.0 - kEpsClamp) * rng.uniform();
  ForwardSample fwd = sample_forward(x0, t, schedule, vocab, rng);
  std::vector<ProbVector> pred = den.predict(fwd.x_t);
  Sequence z(x0.size());
  for (std::size_t j = 0; j < z.size(); ++j) z[j] = rng.categorical(pred[j]);

  PlannerContext ctx{&pred, &rng};
  double w = schedule_weight(schedule, t);

  DrawValues out;
  for (int i = 0; i < static_cast<int>(x0.size()); ++i) {
    Token saved = z[i];
    if (options.substitute_truth) z[i] = x0[i];
    if (vocab.is_mask(fwd.x_t[i])) {
      out.mp += floored_log(planner.masked_score(z, fwd.x_t, i, ctx), &out.floored);
      out.d += floored_log(pred[i].weight(x0[i]), &out.floored);
    } else {
      out.up += floored_log(planner.keep_score(z, fwd.x_t, i, ctx), &out.floored);
    }
    z[i] = saved;
  }
  out.mp *= w;
  out.up *= w;
  out.d *= w;
  return out;
}

double mean_of(std::span<const double> v) { return pairwise_sum(v) / static_cast<double>(v.size()); }

double se_of(std::span<const double> v, double mean) {
  if (v.size() < 2) return 0.0;
  std::vector<double> sq(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) sq[i] = (v[i] - mean) * (v[i] - mean);
  double var = pairwise_sum(sq) / static_cast<double>(v.size() - 1);
  return std::sqrt(var / static_cast<double>(v.size()));
}

ElboEstimate estimate_elbo_impl(const EmpiricalDistribution* dist, const Sequence* x0_fixed,
                                const Denoiser& den, const Planner& planner,
                                const NoiseSchedule& schedule, long n_mc, std::uint64_t seed,
                                const ElboOptions& options) {
  if (n_mc < 1) throw precondition_error("estimate_elbo: n_mc must be >= 1");
  std::vector<double> mp(n_mc), up(n_mc), d(n_mc), tot(n_mc);
  std::vector<int> floored(n_mc);
  RandomStream root(seed);

  auto one_draw = [&](long i) {
    RandomStream rng = root.child(static_cast<std::uint64_t>(i));
    Sequence x0 = x0_fixed ? *x0_fixed : dist->sample(rng);
    DrawValues v = elbo_draw(x0, den, planner, schedule, options, rng);
    mp[i] = v.mp;
    up[i] = v.up;
    d[i] = v.d;
    tot[i] = v.mp + v.up + v.d;
    floored[i] = v.floored;
  };

#ifdef _OPENMP
  if (options.threads != 1) {
    int threads = options.threads > 0 ? options.threads : omp_get_max_threads();
#pragma omp parallel for schedule(dynamic, 256) num_threads(threads)
    for (long i = 0; i < n_mc; ++i) one_draw(i);
  } else
#endif
  {
    for (long i = 0; i < n_mc; ++i) one_draw(i);
  }

  ElboEstimate est;
  est.n_mc = n_mc;
  est.e_mp = mean_of(mp);
  est.e_up = mean_of(up);
  est.e_d = mean_of(d);
  est.total = est.e_mp + est.e_up + est.e_d;
  est.se_mp = se_of(mp, est.e_mp);
  est.se_up = se_of(up, est.e_up);
  est.se_d = se_of(d, est.e_d);
  est.se_total = se_of(tot, est.e_mp + est.e_up + est.e_d);
  for (long i = 0; i < n_mc; ++i) est.floored_logs += floored[i];
  est.max_draw_mp_plus_up = mp[0] + up[0];
  for (long i = 1; i < n_mc; ++i)
    est.max_draw_mp_plus_up = std::max(est.max_draw_mp_plus_up, mp[i] + up[i]);
  return est;
}

}  // namespace

ElboEstimate estimate_elbo(const Sequence& x0, const Denoiser& den, const Planner& planner,
                           const NoiseSchedule& schedule, long n_mc, std::uint64_t seed,
                           const ElboOptions& options) {
  return estimate_elbo_impl(nullptr, &x0, den, planner, schedule, n_mc, seed, options);
}

ElboEstimate estimate_elbo(const EmpiricalDistribution& dist, const Denoiser& den,
                           const Planner& planner, const NoiseSchedule& schedule, long n_mc,
                           std::uint64_t seed, const ElboOptions& options) {
  return estimate_elbo_impl(&dist, nullptr, den, planner, schedule, n_mc, seed, options);
}

PlannerTrainingExample make_training_example(const Sequence& x0, const Denoiser& den,
                                             const NoiseSchedule& schedule, RandomStream& rng) {
  PlannerTrainingExample ex;
  ex.t = kEpsClamp + (1.0 - kEpsClamp) * rng.uniform();
  ForwardSample fwd = sample_forward(x0, ex.t, schedule, den.vocab(), rng);
  ex.x_t = std::move(fwd.x_t);
  std::vector<ProbVector> pred = den.predict(ex.x_t);
  ex.z.resize(x0.size());
  for (std::size_t j = 0; j < x0.size(); ++j) ex.z[j] = rng.categorical(pred[j]);
  return ex;
}

double planner_loss(const PlannerTrainingExample& example, const Sequence& x0,
                    const TrainablePlannerModel& model, const Vocabulary& vocab,
                    const NoiseSchedule& schedule, const TrainingOptions& options,
                    std::vector<double>* grad) {
  if (grad) grad->assign(model.weights.size(), 0.0);
  double w = std::min(schedule_weight(schedule, example.t), options.weight_cap);
  double loss = 0.0;
  std::vector<std::pair<int, double>> feats;
  for (int j = 0; j < static_cast<int>(x0.size()); ++j) {
    bool masked = vocab.is_mask(example.x_t[j]);
    bool label = example.z[j] == x0[j];
    if (masked && options.restricted_mp && !label) continue;

    double s = model.score(example.z, example.x_t, j, vocab);
    loss += label ? -std::log(std::max(s, kLogFloor))
                  : -std::log(std::max(1.0 - s, kLogFloor));
    if (grad) {
      model.features(example.z, example.x_t, j, vocab, feats);
      double delta = w * (s - (label ? 1.0 : 0.0));
      for (const auto& [idx, val] : feats) (*grad)[idx] += delta * val;
    }
  }
  return w * loss;
}

double planner_training_step(const Sequence& x0, const Denoiser& den, TrainablePlannerModel& model,
                             const NoiseSchedule& schedule, RandomStream& rng,
                             const TrainingOptions& options) {
  PlannerTrainingExample ex = make_training_example(x0, den, schedule, rng);
  std::vector<double> grad;
  double loss = planner_loss(ex, x0, model, den.vocab(), schedule, options, &grad);
  if (!std::isfinite(loss)) throw invariant_error("planner training loss is not finite");
  for (std::size_t k = 0; k < grad.size(); ++k) {
    model.weights[k] -= model.learning_rate * grad[k];
    if (!std::isfinite(model.weights[k]))
      throw invariant_error("planner training diverged: non-finite weight");
  }
  return loss;
}

double evaluate_planner_loss(const EmpiricalDistribution& corpus, const Denoiser& den,
                             const TrainablePlannerModel& model, const NoiseSchedule& schedule,
                             int n_draws, std::uint64_t seed, const TrainingOptions& options) {
  RandomStream root(seed);
  std::vector<double> losses(n_draws);
  for (int i = 0; i < n_draws; ++i) {
    RandomStream rng = root.child(static_cast<std::uint64_t>(i));
    Sequence x0 = corpus.sample(rng);
    PlannerTrainingExample ex = make_training_example(x0, den, schedule, rng);
    losses[i] = planner_loss(ex, x0, model, den.vocab(), schedule, options, nullptr);
  }
  return mean_of(losses);
}

TrainPlannerResult train_planner(const EmpiricalDistribution& corpus, const Denoiser& den,
                                 const TrainPlannerConfig& config) {
  if (config.steps < 0) throw precondition_error("train_planner: steps must be >= 0");
  TrainPlannerResult out;
  out.model = TrainablePlannerModel::init(corpus, den.vocab(), config.learning_rate);
  out.model.seed = config.seed;

  const NoiseSchedule schedule = NoiseSchedule::linear();
  const std::uint64_t eval_seed = RandomStream(config.seed).child(0xe7a1).seed();
  auto held_out = [&]() {
    return evaluate_planner_loss(corpus, den, out.model, schedule, config.held_out_draws,
                                 eval_seed, config.options);
  };

  out.curve.push_back({0, 0.0, held_out()});
  RandomStream rng(config.seed);
  for (int step = 1; step <= config.steps; ++step) {
    Sequence x0 = corpus.sample(rng);
    double loss = planner_training_step(x0, den, out.model, schedule, rng, config.options);
    LossPoint point{step, loss, std::nullopt};
    if (config.held_out_every > 0 &&
        (step % config.held_out_every == 0 || step == config.steps))
      point.held_out = held_out();
    out.curve.push_back(point);
  }
  return out;
}

}  // namespace p2
