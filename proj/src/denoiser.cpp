#include "p2/denoiser.hpp"

#include <algorithm>
#include <cmath>

namespace p2 {

EmpiricalDistribution::EmpiricalDistribution(std::vector<Sequence> support,
                                             std::vector<double> probs, const Vocabulary& vocab)
    : support_(std::move(support)), probs_(std::move(probs)) {
  if (support_.empty()) throw config_error("empirical distribution: empty support");
  if (support_.size() != probs_.size())
    throw config_error("empirical distribution: support/probs size mismatch");
  L_ = static_cast<int>(support_[0].size());
  if (L_ < 1) throw config_error("empirical distribution: sequences must have length >= 1");
  double sum = 0.0;
  for (std::size_t i = 0; i < support_.size(); ++i) {
    if (static_cast<int>(support_[i].size()) != L_)
      throw config_error("empirical distribution: ragged support lengths");
    for (Token t : support_[i]) {
      if (!vocab.in_range(t)) throw config_error("empirical distribution: token out of range");
      if (vocab.is_mask(t)) throw config_error("empirical distribution: mask token in support");
    }
    for (std::size_t j = i + 1; j < support_.size(); ++j)
      if (support_[i] == support_[j])
        throw config_error("empirical distribution: duplicate support entry");
    if (!(probs_[i] > 0.0)) throw config_error("empirical distribution: probabilities must be positive");
    sum += probs_[i];
  }
  if (std::abs(sum - 1.0) > kProbTol)
    throw config_error("empirical distribution: probabilities must sum to 1");
}

double EmpiricalDistribution::prob_of(const Sequence& x) const {
  for (std::size_t i = 0; i < support_.size(); ++i)
    if (support_[i] == x) return probs_[i];
  return 0.0;
}

ProbVector EmpiricalDistribution::marginal(int position, const Vocabulary& vocab) const {
  std::vector<double> w(vocab.size(), 0.0);
  for (std::size_t i = 0; i < support_.size(); ++i) w[support_[i][position] - 1] += probs_[i];
  return ProbVector(std::move(w));
}

std::vector<Token> EmpiricalDistribution::position_modes() const {
  std::vector<Token> modes(L_);
  for (int pos = 0; pos < L_; ++pos) {
    double best = -1.0;
    std::vector<double> mass;
    for (std::size_t i = 0; i < support_.size(); ++i) {
      Token t = support_[i][pos];
      if (mass.size() < static_cast<std::size_t>(t)) mass.resize(t, 0.0);
      mass[t - 1] += probs_[i];
      if (mass[t - 1] > best) {
        best = mass[t - 1];
        modes[pos] = t;
      }
    }
  }
  return modes;
}

double EmpiricalDistribution::entropy() const {
  double h = 0.0;
  for (double p : probs_) h -= p * std::log(p);
  return h;
}

Sequence EmpiricalDistribution::sample(RandomStream& rng) const {
  Token idx = rng.categorical(std::span<const double>(probs_));
  return support_[idx - 1];
}

std::vector<ProbVector> Denoiser::predict(const Sequence& x_t) const {
  std::vector<ProbVector> out;
  out.reserve(x_t.size());
  for (int i = 0; i < static_cast<int>(x_t.size()); ++i) out.push_back(predict_position(x_t, i));
  return out;
}

ExactDenoiser::ExactDenoiser(std::shared_ptr<const EmpiricalDistribution> dist, Vocabulary vocab,
                             UnmaskedMode mode)
    : dist_(std::move(dist)), vocab_(std::move(vocab)), mode_(mode) {
  marginals_.reserve(dist_->length());
  for (int i = 0; i < dist_->length(); ++i) marginals_.push_back(dist_->marginal(i, vocab_));
}

ProbVector ExactDenoiser::predict_position(const Sequence& x_t, int position) const {
  const bool masked = vocab_.is_mask(x_t[position]);
  if (!masked && mode_ == UnmaskedMode::kDirac) return ProbVector::delta(x_t[position], vocab_.size());

  // Condition on agreement at every unmasked position; in leave-one-out mode
  // the queried position itself is excluded from the context.
  std::vector<double> w(vocab_.size(), 0.0);
  double total = 0.0;
  const auto& support = dist_->support();
  const auto& probs = dist_->probs();
  const int L = dist_->length();
  for (std::size_t s = 0; s < support.size(); ++s) {
    bool agrees = true;
    for (int j = 0; j < L && agrees; ++j) {
      if (j == position) continue;
      if (!vocab_.is_mask(x_t[j]) && support[s][j] != x_t[j]) agrees = false;
    }
    if (!agrees) continue;
    w[support[s][position] - 1] += probs[s];
    total += probs[s];
  }
  if (total <= 0.0) {
    off_support_.fetch_add(1, std::memory_order_relaxed);
    return marginals_[position];
  }
  for (double& x : w) x /= total;
  return ProbVector(std::move(w));
}

void CorruptionSpec::validate() const {
  if (mix_lambda < 0.0 || mix_lambda > 1.0)
    throw config_error("corruption: mix_lambda must lie in [0,1]");
  if (!(temperature > 0.0)) throw config_error("corruption: temperature must be positive");
}

CorruptedDenoiser::CorruptedDenoiser(std::shared_ptr<const Denoiser> base, CorruptionSpec spec)
    : base_(std::move(base)), spec_(spec) {
  spec_.validate();
}

ProbVector CorruptedDenoiser::corrupt_one(ProbVector p) const {
  const int d = p.dim();
  const double uniform = 1.0 / (d - 1);
  std::vector<double> w = p.weights();
  if (spec_.mix_lambda > 0.0) {
    for (int k = 0; k + 1 < d; ++k)
      w[k] = (1.0 - spec_.mix_lambda) * w[k] + spec_.mix_lambda * uniform;
    w[d - 1] = (1.0 - spec_.mix_lambda) * w[d - 1];  // mask mass stays zero
  }
  if (spec_.temperature != 1.0) {
    double sum = 0.0;
    for (int k = 0; k < d; ++k) {
      w[k] = w[k] > 0.0 ? std::pow(w[k], 1.0 / spec_.temperature) : 0.0;
      sum += w[k];
    }
    for (int k = 0; k < d; ++k) w[k] /= sum;
  }
  return ProbVector(std::move(w));
}

ProbVector CorruptedDenoiser::predict_position(const Sequence& x_t, int position) const {
  return corrupt_one(base_->predict_position(x_t, position));
}

std::vector<ProbVector> CorruptedDenoiser::predict(const Sequence& x_t) const {
  std::vector<ProbVector> out = base_->predict(x_t);
  for (auto& p : out) p = corrupt_one(std::move(p));
  return out;
}

std::shared_ptr<const Denoiser> corrupt(std::shared_ptr<const Denoiser> base, CorruptionSpec spec) {
  return std::make_shared<CorruptedDenoiser>(std::move(base), spec);
}

Token vanilla_reverse_step(const Sequence& x_t, int position, double t_from, double t_to,
                           const Denoiser& den, const NoiseSchedule& schedule, RandomStream& rng) {
  if (!(t_to < t_from)) throw precondition_error("reverse step: t_to must precede t_from");
  const Vocabulary& vocab = den.vocab();
  if (!vocab.is_mask(x_t[position])) return x_t[position];  // carry-over branch

  double a_from = schedule.alpha(t_from);
  double a_to = schedule.alpha(t_to);
  if (a_to < a_from) throw precondition_error("reverse step: schedule not monotone over [t_to, t_from]");

  ProbVector d_i = den.predict_position(x_t, position);
  std::vector<double> w(vocab.size(), 0.0);
  double denom = 1.0 - a_from;
  for (Token j = 1; j <= vocab.mask_id(); ++j) w[j - 1] = (a_to - a_from) * d_i.weight(j) / denom;
  w[vocab.mask_id() - 1] += (1.0 - a_to) / denom;
  return rng.categorical(std::span<const double>(w));
}

ProbVector p2_reverse_unmasked_law(const Sequence& x_t, int position, double t_from, double t_to,
                                   const Denoiser& den, const NoiseSchedule& schedule,
                                   bool* degenerate) {
  if (!(t_to < t_from)) throw precondition_error("reverse step: t_to must precede t_from");
  const Vocabulary& vocab = den.vocab();
  const Token cur = x_t[position];
  if (vocab.is_mask(cur))
    throw precondition_error("p2_reverse_unmasked_step: position is masked");

  double a_from = schedule.alpha(t_from);
  double a_to = schedule.alpha(t_to);
  if (a_to < a_from) throw precondition_error("reverse step: schedule not monotone over [t_to, t_from]");

  Sequence x_bar = x_t;
  x_bar[position] = vocab.mask_id();
  ProbVector d_bar = den.predict_position(x_bar, position);
  double c = d_bar.weight(cur);
  double denom = (1.0 - a_from) * (1.0 - c);
  if (degenerate) *degenerate = false;
  if (denom <= kProbTol) {
    if (degenerate) *degenerate = true;
    return ProbVector::delta(cur, vocab.size());
  }

  std::vector<double> w(vocab.size(), 0.0);
  for (Token j = 1; j <= vocab.mask_id(); ++j) w[j - 1] = (a_to - a_from) * d_bar.weight(j);
  w[cur - 1] += c * (a_from - 1.0) + 1.0 - a_to;
  double worst = 0.0;
  for (double& x : w) {
    worst = std::min(worst, x);
    if (x < 0.0) x = 0.0;
  }
  if (worst < -kProbTol)
    throw invariant_error("p2 reverse branch produced a weight below -1e-9");
  double sum = 0.0;
  for (double x : w) sum += x;
  for (double& x : w) x /= sum;
  return ProbVector(std::move(w));
}

Token p2_reverse_unmasked_step(const Sequence& x_t, int position, double t_from, double t_to,
                               const Denoiser& den, const NoiseSchedule& schedule,
                               RandomStream& rng, ReverseStepDiagnostics* diag) {
  bool degenerate = false;
  ProbVector law = p2_reverse_unmasked_law(x_t, position, t_from, t_to, den, schedule, &degenerate);
  if (degenerate) {
    if (diag) diag->degenerate_resamples++;
    return x_t[position];
  }
  return rng.categorical(law);
}

}  // namespace p2
