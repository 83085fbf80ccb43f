#ifndef P2_SAMPLER_HPP
#define P2_SAMPLER_HPP

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "p2/planner.hpp"

namespace p2 {

// Monotone unmask-count schedule; kappa(steps) = L forces a mask-free output.
struct KappaSchedule {
  std::string name;
  int steps = 0;
  std::function<int(int)> count_at;  // step in 1..steps -> target unmasked count

  // One net unmask per step over exactly L steps.
  static KappaSchedule one_per_step(int length);
  // ceil(L * step / steps): supports step counts different from L.
  static KappaSchedule normalized(int length, int steps);

  void validate(int length) const;
};

enum class ZDrawMode { kCategorical, kGreedy };

struct SamplerDiagnostics {
  std::uint64_t remask_events = 0;
  std::uint64_t zero_score_fallbacks = 0;
  std::uint64_t residual_masks = 0;
  std::uint64_t degenerate_resamples = 0;

  void merge(const SamplerDiagnostics& other);
};

struct StepRecord {
  Sequence state;                      // after the step
  std::vector<int> update_positions;   // kept set chosen by top-k
  std::vector<int> remask_positions;   // previously unmasked, now masked
};
using Trajectory = std::vector<StepRecord>;

struct SamplerConfig {
  std::string preset;
  std::shared_ptr<const Planner> planner;
  EtaCombination comb;
  KappaSchedule kappa;
  int steps = 0;
  NoiseSchedule schedule = NoiseSchedule::linear();
  std::uint64_t seed = 0;
  ZDrawMode z_mode = ZDrawMode::kCategorical;

  void validate(int length) const;
};

// Kept set of size k. Live candidates (score above `zero_level`) rank by
// score with seeded jitter of magnitude 1e-12; exact score ties keep the
// currently unmasked position. A deficit of live candidates is filled by
// masked positions first so the kappa budget is always met.
std::vector<int> select_top_k(std::span<const double> scores, int k,
                              const std::vector<bool>& is_masked, double zero_level,
                              RandomStream& rng);

// Top-k planner-guided sampler. Starts all-mask, runs cfg.steps steps, and
// returns a mask-free sequence plus the per-step trace when requested.
std::pair<Sequence, Trajectory> p2_sample(const SamplerConfig& cfg, const Denoiser& den,
                                          RandomStream& rng, SamplerDiagnostics* diag = nullptr,
                                          bool record_trajectory = false);

// Event-driven masked-diffusion sampler: L iterations, each unmasking a
// uniformly random masked position from the denoiser conditional. The unmask
// order is reported through order_out when given.
Sequence gillespie_mdm_sample(const Denoiser& den, RandomStream& rng,
                              std::vector<int>* order_out = nullptr);

enum class GillespieMode {
  kApproximate,  // single z draw per iteration; remask-and-resample in place
  kExact,        // position and token drawn from the enumerated one-jump law
};

// Planner-guided jump sampler for T iterations. Outputs may retain masks if
// T is too small; that is flagged in the diagnostics, not an error. A start
// state other than all-mask can be injected for jump-law diagnostics.
Sequence gillespie_p2_sample(const Denoiser& den, const Planner& planner, int iterations,
                             RandomStream& rng, GillespieMode mode = GillespieMode::kApproximate,
                             SamplerDiagnostics* diag = nullptr, const Sequence* start = nullptr);

// Named sampler presets: each fixes the score-rule pair and whether the
// stochasticity knob is exposed.
struct PresetInfo {
  std::string name;
  ScoreRule masked_rule;
  ScoreRule keep_rule;
  bool eta_configurable = false;
  double default_eta = 1.0;
};

const std::vector<PresetInfo>& preset_registry();
// Unknown names raise a config error listing the valid presets.
const PresetInfo& preset(const std::string& name);

std::shared_ptr<const Planner> make_preset_planner(
    const PresetInfo& info, std::shared_ptr<const Denoiser> den,
    std::shared_ptr<const ExternalScorer> scorer,
    std::shared_ptr<const TrainablePlannerModel> model);

// Config for a preset with default kappa/steps; requested eta applies only
// where the row exposes stochasticity control.
SamplerConfig preset_config(const std::string& name, std::shared_ptr<const Denoiser> den,
                            std::shared_ptr<const ExternalScorer> scorer,
                            std::shared_ptr<const TrainablePlannerModel> model, int length,
                            std::uint64_t seed, double requested_eta = 1.0);

}  // namespace p2

#endif
