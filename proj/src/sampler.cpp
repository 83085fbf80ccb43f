#include "p2/sampler.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>

#include "p2/oracle.hpp"

namespace p2 {

KappaSchedule KappaSchedule::one_per_step(int length) {
  return KappaSchedule{"one-per-step", length, [](int step) { return step; }};
}

KappaSchedule KappaSchedule::normalized(int length, int steps) {
  return KappaSchedule{"normalized", steps, [length, steps](int step) {
                         return static_cast<int>(
                             std::ceil(static_cast<double>(length) * step / steps));
                       }};
}

void KappaSchedule::validate(int length) const {
  if (steps < 1) throw config_error("kappa schedule needs at least one step");
  int prev = 0;
  for (int t = 1; t <= steps; ++t) {
    int k = count_at(t);
    if (k < prev) throw config_error("kappa schedule must be nondecreasing");
    if (k < 0 || k > length) throw config_error("kappa schedule out of range");
    prev = k;
  }
  if (count_at(steps) != length)
    throw config_error("kappa schedule must unmask the full sequence by the final step");
}

void SamplerDiagnostics::merge(const SamplerDiagnostics& other) {
  remask_events += other.remask_events;
  zero_score_fallbacks += other.zero_score_fallbacks;
  residual_masks += other.residual_masks;
  degenerate_resamples += other.degenerate_resamples;
}

void SamplerConfig::validate(int length) const {
  if (!planner) throw config_error("sampler config: missing planner");
  if (steps < 1) throw config_error("sampler config: steps must be >= 1");
  comb.validate();
  kappa.validate(length);
  if (kappa.steps != steps) throw config_error("sampler config: kappa steps mismatch");
  if (!preset.empty()) {
    const PresetInfo& info = ::p2::preset(preset);
    if (planner->masked_rule() != info.masked_rule || planner->keep_rule() != info.keep_rule)
      throw config_error("sampler config: planner does not match preset '" + preset + "'");
  }
}

std::vector<int> select_top_k(std::span<const double> scores, int k,
                              const std::vector<bool>& is_masked, double zero_level,
                              RandomStream& rng) {
  const int L = static_cast<int>(scores.size());
  k = std::min(k, L);
  std::vector<double> jitter(L);
  for (int j = 0; j < L; ++j) jitter[j] = rng.uniform() * 1e-12;

  std::vector<int> order(L);
  for (int j = 0; j < L; ++j) order[j] = j;
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    bool live_a = scores[a] > zero_level;
    bool live_b = scores[b] > zero_level;
    if (live_a != live_b) return live_a;
    if (live_a) {
      if (scores[a] != scores[b]) return scores[a] > scores[b];
      // Exact tie: keep the already-unmasked position.
      if (is_masked[a] != is_masked[b]) return !is_masked[a];
    } else {
      // Deficit fill: masked positions first so unmasking can proceed.
      if (is_masked[a] != is_masked[b]) return is_masked[a];
    }
    if (jitter[a] != jitter[b]) return jitter[a] > jitter[b];
    return a < b;
  });
  std::vector<int> kept(order.begin(), order.begin() + k);
  std::sort(kept.begin(), kept.end());
  return kept;
}

namespace {

Sequence draw_z(const std::vector<ProbVector>& pred, ZDrawMode mode, RandomStream& rng) {
  Sequence z(pred.size());
  for (std::size_t j = 0; j < pred.size(); ++j) {
    if (mode == ZDrawMode::kCategorical) {
      z[j] = rng.categorical(pred[j]);
    } else {
      const auto& w = pred[j].weights();
      z[j] = static_cast<Token>(std::max_element(w.begin(), w.end()) - w.begin() + 1);
    }
  }
  return z;
}

}  // namespace

std::pair<Sequence, Trajectory> p2_sample(const SamplerConfig& cfg, const Denoiser& den,
                                          RandomStream& rng, SamplerDiagnostics* diag,
                                          bool record_trajectory) {
  const Vocabulary& vocab = den.vocab();
  const int L = den.length();
  cfg.validate(L);

  const double zero_level = cfg.comb.domain == ScoreDomain::kProbability
                                ? 0.0
                                : -std::numeric_limits<double>::infinity();

  Sequence x(L, vocab.mask_id());
  Trajectory traj;
  std::vector<bool> masked(L, true);

  for (int t = 1; t <= cfg.steps; ++t) {
    std::vector<ProbVector> pred = den.predict(x);
    Sequence z = draw_z(pred, cfg.z_mode, rng);
    PlannerContext ctx{&pred, &rng};
    std::vector<double> score = combine_eta(*cfg.planner, cfg.comb, z, x, vocab, ctx);

    for (int j = 0; j < L; ++j) masked[j] = vocab.is_mask(x[j]);
    std::vector<int> kept = select_top_k(score, cfg.kappa.count_at(t), masked, zero_level, rng);

    std::vector<bool> in_kept(L, false);
    for (int j : kept) in_kept[j] = true;

    StepRecord rec;
    for (int j = 0; j < L; ++j) {
      if (in_kept[j]) {
        if (masked[j]) x[j] = z[j];  // newly unmasked; kept tokens stay put
      } else {
        if (!masked[j]) {
          if (diag) diag->remask_events++;
          if (record_trajectory) rec.remask_positions.push_back(j);
        }
        x[j] = vocab.mask_id();
      }
    }
    assert(static_cast<int>(std::count_if(x.begin(), x.end(), [&](Token tok) {
             return !vocab.is_mask(tok);
           })) == std::min(cfg.kappa.count_at(t), L));

    if (record_trajectory) {
      rec.state = x;
      rec.update_positions = kept;
      traj.push_back(std::move(rec));
    }
  }

  for (Token tok : x)
    if (vocab.is_mask(tok)) throw invariant_error("p2_sample produced a masked output");
  return {std::move(x), std::move(traj)};
}

Sequence gillespie_mdm_sample(const Denoiser& den, RandomStream& rng,
                              std::vector<int>* order_out) {
  const Vocabulary& vocab = den.vocab();
  const int L = den.length();
  Sequence x(L, vocab.mask_id());
  if (order_out) order_out->clear();
  std::vector<int> masked(L);
  for (int i = 0; i < L; ++i) masked[i] = i;
  for (int step = 0; step < L; ++step) {
    std::size_t pick = rng.uniform_below(masked.size());
    int pos = masked[pick];
    masked[pick] = masked.back();
    masked.pop_back();
    x[pos] = rng.categorical(den.predict_position(x, pos));
    if (order_out) order_out->push_back(pos);
  }
  return x;
}

Sequence gillespie_p2_sample(const Denoiser& den, const Planner& planner, int iterations,
                             RandomStream& rng, GillespieMode mode, SamplerDiagnostics* diag,
                             const Sequence* start) {
  const Vocabulary& vocab = den.vocab();
  const int L = den.length();
  Sequence x = start ? *start : Sequence(L, vocab.mask_id());

  for (int it = 0; it < iterations; ++it) {
    if (mode == GillespieMode::kExact) {
      JumpLaw law = p2_jump_law(den, planner, x);
      int pos = rng.categorical(std::span<const double>(law.position_prob)) - 1;
      x[pos] = rng.categorical(law.token_law[pos]);
      continue;
    }

    std::vector<ProbVector> pred = den.predict(x);
    Sequence z = draw_z(pred, ZDrawMode::kCategorical, rng);
    PlannerContext ctx{&pred, &rng};
    std::vector<double> g(L);
    double total = 0.0;
    for (int j = 0; j < L; ++j) {
      g[j] = planner_g(planner, z, x, j, vocab, ctx);
      total += g[j];
    }
    int pos;
    if (total > 0.0) {
      pos = rng.categorical(std::span<const double>(g)) - 1;
    } else {
      if (diag) diag->zero_score_fallbacks++;
      pos = static_cast<int>(rng.uniform_below(L));
    }
    if (vocab.is_mask(x[pos])) {
      x[pos] = z[pos];
    } else {
      x[pos] = vocab.mask_id();
      x[pos] = rng.categorical(den.predict_position(x, pos));
    }
  }

  if (diag)
    for (Token tok : x)
      if (vocab.is_mask(tok)) diag->residual_masks++;
  return x;
}

const std::vector<PresetInfo>& preset_registry() {
  static const std::vector<PresetInfo> registry = {
      {"ancestral", ScoreRule::kUniform, ScoreRule::kOne, false, 1.0},
      {"greedy", ScoreRule::kDenoiserConfidence, ScoreRule::kOne, false, 1.0},
      {"dfm", ScoreRule::kUniform, ScoreRule::kUniform, true, 1.0},
      {"rdm", ScoreRule::kDenoiserConfidence, ScoreRule::kDenoiserConfidence, false, 1.0},
      {"ddpd", ScoreRule::kScorerConfidence, ScoreRule::kScorerConfidence, false, 1.0},
      {"p2-self", ScoreRule::kDenoiserConfidence, ScoreRule::kDenoiserConfidence, true, 1.0},
      {"p2-external", ScoreRule::kDenoiserConfidence, ScoreRule::kScorerConfidence, true, 1.0},
      {"p2-trained", ScoreRule::kDenoiserConfidence, ScoreRule::kTrainedModel, true, 1.0},
  };
  return registry;
}

const PresetInfo& preset(const std::string& name) {
  for (const PresetInfo& info : preset_registry())
    if (info.name == name) return info;
  std::string valid;
  for (const PresetInfo& info : preset_registry()) {
    if (!valid.empty()) valid += ", ";
    valid += info.name;
  }
  throw config_error("unknown preset '" + name + "' (valid: " + valid + ")");
}

std::shared_ptr<const Planner> make_preset_planner(
    const PresetInfo& info, std::shared_ptr<const Denoiser> den,
    std::shared_ptr<const ExternalScorer> scorer,
    std::shared_ptr<const TrainablePlannerModel> model) {
  return std::make_shared<ConfigurablePlanner>(info.masked_rule, info.keep_rule, std::move(den),
                                               std::move(scorer), std::move(model));
}

SamplerConfig preset_config(const std::string& name, std::shared_ptr<const Denoiser> den,
                            std::shared_ptr<const ExternalScorer> scorer,
                            std::shared_ptr<const TrainablePlannerModel> model, int length,
                            std::uint64_t seed, double requested_eta) {
  const PresetInfo& info = preset(name);
  SamplerConfig cfg;
  cfg.preset = name;
  cfg.planner = make_preset_planner(info, std::move(den), std::move(scorer), std::move(model));
  cfg.comb.eta = info.eta_configurable ? requested_eta : info.default_eta;
  cfg.kappa = KappaSchedule::one_per_step(length);
  cfg.steps = length;
  cfg.seed = seed;
  return cfg;
}

}  // namespace p2
