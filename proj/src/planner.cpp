#include "p2/planner.hpp"

#include <algorithm>
#include <cmath>

namespace p2 {

std::vector<ProbVector> ExternalScorer::score(const Sequence& z) const {
  std::vector<ProbVector> out;
  out.reserve(z.size());
  for (int i = 0; i < static_cast<int>(z.size()); ++i) out.push_back(score_position(z, i));
  return out;
}

LeaveOneOutScorer::LeaveOneOutScorer(std::shared_ptr<const Denoiser> den) : den_(std::move(den)) {
  if (!den_->leave_one_out_supported())
    throw config_error("external scorer requires a leave-one-out capable denoiser");
}

void LeaveOneOutScorer::require_unmasked(const Sequence& z) const {
  for (Token t : z)
    if (den_->vocab().is_mask(t))
      throw precondition_error("external scorer: input sequence contains a mask token");
}

ProbVector LeaveOneOutScorer::score_position(const Sequence& z, int position) const {
  require_unmasked(z);
  return den_->predict_position(z, position);
}

std::vector<ProbVector> LeaveOneOutScorer::score(const Sequence& z) const {
  require_unmasked(z);
  return den_->predict(z);
}

TrainablePlannerModel TrainablePlannerModel::init(const EmpiricalDistribution& corpus,
                                                  const Vocabulary& vocab, double learning_rate) {
  TrainablePlannerModel m;
  m.length = corpus.length();
  m.vocab_size = vocab.size();
  m.context_modes = corpus.position_modes();
  m.learning_rate = learning_rate;
  m.weights.assign(m.feature_count(), 0.0);
  return m;
}

void TrainablePlannerModel::validate() const {
  if (length < 1 || vocab_size < 2) throw config_error("planner model: bad dimensions");
  if (static_cast<int>(weights.size()) != feature_count())
    throw config_error("planner model: weight vector does not match the feature schema");
  if (static_cast<int>(context_modes.size()) != length)
    throw config_error("planner model: context modes do not match the sequence length");
  if (!(learning_rate > 0.0)) throw config_error("planner model: learning rate must be positive");
}

void TrainablePlannerModel::features(const Sequence& z, const Sequence& x_t, int position,
                                     const Vocabulary& vocab,
                                     std::vector<std::pair<int, double>>& out) const {
  out.clear();
  out.emplace_back(position, 1.0);  // position indicator
  if (!vocab.is_mask(z[position]))
    out.emplace_back(length + (z[position] - 1), 1.0);  // predicted-token indicator

  int masked = 0;
  for (Token t : x_t) masked += vocab.is_mask(t) ? 1 : 0;
  int bucket = std::min(kMaskFractionBuckets - 1,
                        static_cast<int>(kMaskFractionBuckets * masked / x_t.size()));
  out.emplace_back(length + (vocab_size - 1) + bucket, 1.0);

  int agreement = 0;
  for (int k = 0; k < length; ++k) {
    if (k == position || vocab.is_mask(x_t[k])) continue;
    if (x_t[k] == context_modes[k]) ++agreement;
  }
  // Scaled to [0, 1] so every feature shares the one-hot magnitude.
  out.emplace_back(length + (vocab_size - 1) + kMaskFractionBuckets,
                   static_cast<double>(agreement) / length);
}

double TrainablePlannerModel::logit(const Sequence& z, const Sequence& x_t, int position,
                                    const Vocabulary& vocab) const {
  std::vector<std::pair<int, double>> f;
  features(z, x_t, position, vocab, f);
  double acc = 0.0;
  for (const auto& [idx, val] : f) acc += weights[idx] * val;
  return acc;
}

double TrainablePlannerModel::score(const Sequence& z, const Sequence& x_t, int position,
                                    const Vocabulary& vocab) const {
  return 1.0 / (1.0 + std::exp(-logit(z, x_t, position, vocab)));
}

const char* score_rule_name(ScoreRule rule) {
  switch (rule) {
    case ScoreRule::kOne: return "1";
    case ScoreRule::kUniform: return "U(0,1)";
    case ScoreRule::kDenoiserConfidence: return "Cat(z^j; D^j(x_t))";
    case ScoreRule::kScorerConfidence: return "Cat(z^j; B^j(z))";
    case ScoreRule::kTrainedModel: return "G^j(x_t, z)";
  }
  return "?";
}

ConfigurablePlanner::ConfigurablePlanner(ScoreRule masked, ScoreRule keep,
                                         std::shared_ptr<const Denoiser> den,
                                         std::shared_ptr<const ExternalScorer> scorer,
                                         std::shared_ptr<const TrainablePlannerModel> model)
    : masked_(masked), keep_(keep), den_(std::move(den)), scorer_(std::move(scorer)),
      model_(std::move(model)) {
  auto needs = [&](ScoreRule r) {
    if (r == ScoreRule::kDenoiserConfidence && !den_)
      throw config_error("planner rule needs a denoiser");
    if (r == ScoreRule::kScorerConfidence && !scorer_)
      throw config_error("planner rule needs an external scorer");
    if (r == ScoreRule::kTrainedModel && !model_)
      throw config_error("planner rule needs a trained model");
  };
  needs(masked_);
  needs(keep_);
  if (model_) model_->validate();
}

double ConfigurablePlanner::eval(ScoreRule rule, const Sequence& z, const Sequence& x_t,
                                 int position, PlannerContext& ctx) const {
  switch (rule) {
    case ScoreRule::kOne:
      return 1.0;
    case ScoreRule::kUniform:
      if (!ctx.rng) throw precondition_error("uniform planner queried without a random stream");
      return ctx.rng->uniform();
    case ScoreRule::kDenoiserConfidence: {
      if (den_->vocab().is_mask(z[position])) return 0.0;
      if (ctx.pred_xt) return (*ctx.pred_xt)[position].weight(z[position]);
      return den_->predict_position(x_t, position).weight(z[position]);
    }
    case ScoreRule::kScorerConfidence: {
      if (scorer_->vocab().is_mask(z[position])) return 0.0;
      return scorer_->score_position(z, position).weight(z[position]);
    }
    case ScoreRule::kTrainedModel: {
      const Vocabulary& v = den_ ? den_->vocab() : scorer_->vocab();
      return model_->score(z, x_t, position, v);
    }
  }
  return 0.0;
}

double ConfigurablePlanner::masked_score(const Sequence& z, const Sequence& x_t, int position,
                                         PlannerContext& ctx) const {
  return eval(masked_, z, x_t, position, ctx);
}

double ConfigurablePlanner::keep_score(const Sequence& z, const Sequence& x_t, int position,
                                       PlannerContext& ctx) const {
  return eval(keep_, z, x_t, position, ctx);
}

std::shared_ptr<const Planner> self_planner(std::shared_ptr<const Denoiser> den) {
  return std::make_shared<ConfigurablePlanner>(ScoreRule::kDenoiserConfidence,
                                               ScoreRule::kDenoiserConfidence, std::move(den),
                                               nullptr, nullptr);
}

std::shared_ptr<const Planner> external_planner(std::shared_ptr<const Denoiser> den,
                                                std::shared_ptr<const ExternalScorer> scorer) {
  return std::make_shared<ConfigurablePlanner>(ScoreRule::kDenoiserConfidence,
                                               ScoreRule::kScorerConfidence, std::move(den),
                                               std::move(scorer), nullptr);
}

std::shared_ptr<const Planner> ddpd_planner(std::shared_ptr<const ExternalScorer> scorer) {
  return std::make_shared<ConfigurablePlanner>(ScoreRule::kScorerConfidence,
                                               ScoreRule::kScorerConfidence, nullptr,
                                               std::move(scorer), nullptr);
}

std::shared_ptr<const Planner> greedy_planner(std::shared_ptr<const Denoiser> den) {
  return std::make_shared<ConfigurablePlanner>(ScoreRule::kDenoiserConfidence, ScoreRule::kOne,
                                               std::move(den), nullptr, nullptr);
}

std::shared_ptr<const Planner> uniform_planner(bool uniform_keep) {
  return std::make_shared<ConfigurablePlanner>(
      ScoreRule::kUniform, uniform_keep ? ScoreRule::kUniform : ScoreRule::kOne, nullptr, nullptr,
      nullptr);
}

std::shared_ptr<const Planner> trivial_planner() {
  return std::make_shared<ConfigurablePlanner>(ScoreRule::kOne, ScoreRule::kOne, nullptr, nullptr,
                                               nullptr);
}

std::shared_ptr<const Planner> trained_planner(std::shared_ptr<const Denoiser> den,
                                               std::shared_ptr<const TrainablePlannerModel> model,
                                               bool trained_masked_scores) {
  return std::make_shared<ConfigurablePlanner>(
      trained_masked_scores ? ScoreRule::kTrainedModel : ScoreRule::kDenoiserConfidence,
      ScoreRule::kTrainedModel, std::move(den), nullptr, std::move(model));
}

void EtaCombination::validate() const {
  if (!(eta >= 0.0) || !std::isfinite(eta)) throw config_error("eta must be finite and nonnegative");
}

std::vector<double> combine_eta(const Planner& planner, const EtaCombination& comb,
                                const Sequence& z, const Sequence& x_t, const Vocabulary& vocab,
                                PlannerContext& ctx) {
  comb.validate();
  const int L = static_cast<int>(x_t.size());
  std::vector<double> score(L);
  for (int j = 0; j < L; ++j) {
    if (vocab.is_mask(x_t[j])) {
      double g = planner.masked_score(z, x_t, j, ctx);
      score[j] = comb.domain == ScoreDomain::kProbability ? comb.eta * g : std::log(g);
    } else {
      double g = planner.keep_score(z, x_t, j, ctx);
      // eta = 0 deactivates the unmasked log-scores even at g = 0, where
      // 0 * log(0) would otherwise produce a NaN.
      score[j] = comb.domain == ScoreDomain::kProbability
                     ? g
                     : (comb.eta == 0.0 ? 0.0 : comb.eta * std::log(g));
    }
  }
  return score;
}

}  // namespace p2
