#include "p2/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include <boost/math/special_functions/gamma.hpp>

namespace p2 {

namespace {
constexpr double kTiny = 1e-12;
constexpr long kMaxStates = 200000;
constexpr long kMaxEnumeration = 2000000;
constexpr int kMaxDenseStates = 10000;  // dense generators only below this
}  // namespace

StateSpace::StateSpace(int length, const Vocabulary& vocab) : L_(length), d_(vocab.size()) {
  long n = 1;
  for (int i = 0; i < L_; ++i) {
    n *= d_;
    if (n > kMaxStates) throw precondition_error("state space too large to enumerate");
  }
  n_ = static_cast<int>(n);
}

int StateSpace::index_of(const Sequence& x) const {
  int idx = 0;
  for (int i = L_ - 1; i >= 0; --i) idx = idx * d_ + (x[i] - 1);
  return idx;
}

Sequence StateSpace::state(int index) const {
  Sequence x(L_);
  for (int i = 0; i < L_; ++i) {
    x[i] = static_cast<Token>(index % d_ + 1);
    index /= d_;
  }
  return x;
}

double RateMatrix::column_sum(int from) const {
  double s = 0.0;
  for (int y = 0; y < space.size(); ++y) s += at(y, from);
  return s;
}

std::optional<std::vector<double>> RateMatrix::normalized_column(int from) const {
  std::vector<double> out(space.size(), 0.0);
  double total = 0.0;
  for (int y = 0; y < space.size(); ++y) {
    if (y == from) continue;
    out[y] = at(y, from);
    total += out[y];
  }
  if (total <= kTiny) return std::nullopt;
  for (double& v : out) v /= total;
  return out;
}

double planner_g(const Planner& planner, const Sequence& z, const Sequence& x, int position,
                 const Vocabulary& vocab, PlannerContext& ctx) {
  if (vocab.is_mask(x[position])) return planner.masked_score(z, x, position, ctx);
  return 1.0 - planner.keep_score(z, x, position, ctx);
}

namespace {

// Positive-weight tokens of each coordinate of D(x).
std::vector<std::vector<Token>> prediction_supports(const std::vector<ProbVector>& pred,
                                                    const Vocabulary& vocab) {
  std::vector<std::vector<Token>> out(pred.size());
  for (std::size_t j = 0; j < pred.size(); ++j)
    for (Token t = 1; t <= vocab.mask_id(); ++t)
      if (pred[j].weight(t) > 0.0) out[j].push_back(t);
  return out;
}

}  // namespace

double expected_planner_g(const Denoiser& den, const Planner& planner, const Sequence& x,
                          int position, std::optional<Token> pin) {
  if (planner.stochastic())
    throw precondition_error("exact expectations need a deterministic planner");
  const Vocabulary& vocab = den.vocab();
  const int L = den.length();
  std::vector<ProbVector> pred = den.predict(x);
  std::vector<std::vector<Token>> supports = prediction_supports(pred, vocab);

  long combos = 1;
  for (int j = 0; j < L; ++j) {
    if (j == static_cast<int>(position) && pin) continue;
    combos *= static_cast<long>(supports[j].size());
    if (combos > kMaxEnumeration) throw precondition_error("planner expectation too large to enumerate");
  }

  PlannerContext ctx;
  ctx.pred_xt = &pred;

  Sequence z(L);
  std::vector<std::size_t> cursor(L, 0);
  if (pin) z[position] = *pin;

  double acc = 0.0;
  while (true) {
    double weight = 1.0;
    for (int j = 0; j < L; ++j) {
      if (j == position && pin) continue;
      z[j] = supports[j][cursor[j]];
      weight *= pred[j].weight(z[j]);
    }
    acc += weight * planner_g(planner, z, x, position, vocab, ctx);

    int j = 0;
    while (j < L) {
      if (j == position && pin) {
        ++j;
        continue;
      }
      if (++cursor[j] < supports[j].size()) break;
      cursor[j] = 0;
      ++j;
    }
    if (j == L) break;
  }
  return acc;
}

double order_probability(const Denoiser& den, const Sequence& x, const std::vector<int>& order) {
  const Vocabulary& vocab = den.vocab();
  Sequence state(x.size(), vocab.mask_id());
  double prob = 1.0;
  for (int pos : order) {
    prob *= den.predict_position(state, pos).weight(x[pos]);
    if (prob == 0.0) return 0.0;
    state[pos] = x[pos];
  }
  return prob;
}

double order_average_probability(const Denoiser& den, const Sequence& x) {
  const int L = static_cast<int>(x.size());
  if (L > 6) throw precondition_error("order average limited to L <= 6");
  std::vector<int> order(L);
  std::iota(order.begin(), order.end(), 0);
  double total = 0.0;
  long count = 0;
  do {
    total += order_probability(den, x, order);
    ++count;
  } while (std::next_permutation(order.begin(), order.end()));
  return total / static_cast<double>(count);
}

namespace {

RateMatrix mdm_matrix_impl(const Denoiser& den, double omega, double tau) {
  const Vocabulary& vocab = den.vocab();
  StateSpace space(den.length(), vocab);
  if (space.size() > kMaxDenseStates)
    throw precondition_error("rate matrix refused: state space exceeds 10^4");
  RateMatrix m{space, tau, std::vector<double>(static_cast<std::size_t>(space.size()) * space.size(), 0.0)};
  for (int xi = 0; xi < space.size(); ++xi) {
    Sequence x = space.state(xi);
    double out_rate = 0.0;
    for (int i = 0; i < den.length(); ++i) {
      if (!vocab.is_mask(x[i])) continue;
      ProbVector d_i = den.predict_position(x, i);
      Sequence y = x;
      for (Token t = 1; t < vocab.mask_id(); ++t) {
        double rate = omega * d_i.weight(t);
        if (rate == 0.0) continue;
        y[i] = t;
        m.at(space.index_of(y), xi) += rate;
        out_rate += rate;
      }
      y[i] = x[i];
    }
    m.at(xi, xi) = -out_rate;
  }
  return m;
}

RateMatrix p2_matrix_impl(const Denoiser& den, const Planner& planner, double omega, double tau) {
  const Vocabulary& vocab = den.vocab();
  StateSpace space(den.length(), vocab);
  if (space.size() > kMaxDenseStates)
    throw precondition_error("rate matrix refused: state space exceeds 10^4");
  RateMatrix m{space, tau, std::vector<double>(static_cast<std::size_t>(space.size()) * space.size(), 0.0)};
  for (int xi = 0; xi < space.size(); ++xi) {
    Sequence x = space.state(xi);
    double out_rate = 0.0;
    for (int i = 0; i < den.length(); ++i) {
      Sequence y = x;
      if (vocab.is_mask(x[i])) {
        ProbVector d_i = den.predict_position(x, i);
        for (Token t = 1; t < vocab.mask_id(); ++t) {
          double mass = d_i.weight(t);
          if (mass == 0.0) continue;
          double f = expected_planner_g(den, planner, x, i, t);
          double rate = omega * f * mass;
          if (rate == 0.0) continue;
          y[i] = t;
          m.at(space.index_of(y), xi) += rate;
          out_rate += rate;
        }
      } else {
        Sequence x_bar = x;
        x_bar[i] = vocab.mask_id();
        ProbVector d_bar = den.predict_position(x_bar, i);
        double stay = d_bar.weight(x[i]);
        if (1.0 - stay <= kTiny) continue;  // resampling cannot leave the current token
        double f = expected_planner_g(den, planner, x, i, x[i]);
        for (Token t = 1; t < vocab.mask_id(); ++t) {
          if (t == x[i]) continue;
          double rate = omega * f * d_bar.weight(t) / (1.0 - stay);
          if (rate == 0.0) continue;
          y[i] = t;
          m.at(space.index_of(y), xi) += rate;
          out_rate += rate;
        }
      }
    }
    m.at(xi, xi) = -out_rate;
  }
  return m;
}

double reverse_time_rate_factor(const NoiseSchedule& schedule, double tau) {
  return schedule_weight(schedule, 1.0 - tau);
}

}  // namespace

RateMatrix build_mdm_rate_matrix(const Denoiser& den, const NoiseSchedule& schedule, double tau) {
  return mdm_matrix_impl(den, reverse_time_rate_factor(schedule, tau), tau);
}

RateMatrix build_mdm_rate_structure(const Denoiser& den) { return mdm_matrix_impl(den, 1.0, 0.0); }

RateMatrix build_p2_rate_matrix(const Denoiser& den, const Planner& planner,
                                const NoiseSchedule& schedule, double tau) {
  return p2_matrix_impl(den, planner, reverse_time_rate_factor(schedule, tau), tau);
}

RateMatrix build_p2_rate_structure(const Denoiser& den, const Planner& planner) {
  return p2_matrix_impl(den, planner, 1.0, 0.0);
}

JumpLaw p2_jump_law(const Denoiser& den, const Planner& planner, const Sequence& x) {
  const Vocabulary& vocab = den.vocab();
  const int L = den.length();
  StateSpace space(L, vocab);

  JumpLaw law;
  law.position_prob.assign(L, 0.0);
  law.token_law.assign(L, ProbVector());
  law.state_prob.assign(space.size(), 0.0);

  std::vector<ProbVector> pred = den.predict(x);
  double total = 0.0;
  for (int j = 0; j < L; ++j) {
    std::vector<double> w(vocab.size(), 0.0);
    double pos_weight = 0.0;
    if (vocab.is_mask(x[j])) {
      for (Token t = 1; t < vocab.mask_id(); ++t) {
        double mass = pred[j].weight(t);
        if (mass == 0.0) continue;
        w[t - 1] = expected_planner_g(den, planner, x, j, t) * mass;
        pos_weight += w[t - 1];
      }
    } else {
      Sequence x_bar = x;
      x_bar[j] = vocab.mask_id();
      ProbVector d_bar = den.predict_position(x_bar, j);
      double stay = d_bar.weight(x[j]);
      if (1.0 - stay > kTiny) {
        double f = expected_planner_g(den, planner, x, j, x[j]);
        pos_weight = f;
        for (Token t = 1; t < vocab.mask_id(); ++t) {
          if (t == x[j]) continue;
          w[t - 1] = f * d_bar.weight(t) / (1.0 - stay);
        }
      }
    }
    law.position_prob[j] = pos_weight;
    total += pos_weight;
    if (pos_weight > 0.0) {
      double s = 0.0;
      for (double v : w) s += v;
      for (double& v : w) v /= s;
      law.token_law[j] = ProbVector(std::move(w));
    }
  }
  if (total <= kTiny) throw precondition_error("jump law: no transition has positive rate");
  for (double& v : law.position_prob) v /= total;

  for (int j = 0; j < L; ++j) {
    if (law.position_prob[j] == 0.0) continue;
    Sequence y = x;
    for (Token t = 1; t < vocab.mask_id(); ++t) {
      double p = law.token_law[j].weight(t);
      if (p == 0.0) continue;
      y[j] = t;
      law.state_prob[space.index_of(y)] += law.position_prob[j] * p;
    }
  }
  return law;
}

namespace {

void matvec(const RateMatrix& m, const std::vector<double>& p, std::vector<double>& out) {
  const int n = m.space.size();
  for (int y = 0; y < n; ++y) {
    double acc = 0.0;
    for (int x = 0; x < n; ++x) acc += m.q[static_cast<std::size_t>(y) * n + x] * p[x];
    out[y] = acc;
  }
}

}  // namespace

KolmogorovResult kolmogorov_check(const std::function<RateMatrix(double)>& rate_fn,
                                  std::vector<double> p0, double horizon, double dt) {
  if (dt > 1e-3) throw precondition_error("kolmogorov_check: dt must be <= 1e-3");
  KolmogorovResult res;
  res.min_probability = *std::min_element(p0.begin(), p0.end());
  std::vector<double> p = std::move(p0);
  const std::size_t n = p.size();
  std::vector<double> k1(n), k2(n), k3(n), k4(n), tmp(n);

  auto record = [&](const std::vector<double>& v) {
    double sum = 0.0;
    for (double x : v) {
      sum += x;
      res.min_probability = std::min(res.min_probability, x);
    }
    res.max_norm_defect = std::max(res.max_norm_defect, std::abs(sum - 1.0));
  };

  record(p);
  long steps = static_cast<long>(std::ceil(horizon / dt));
  double t = 0.0;
  for (long s = 0; s < steps; ++s) {
    double h = std::min(dt, horizon - t);
    RateMatrix q1 = rate_fn(t);
    RateMatrix q2 = rate_fn(t + h / 2);
    RateMatrix q3 = rate_fn(t + h);
    matvec(q1, p, k1);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = p[i] + h / 2 * k1[i];
    matvec(q2, tmp, k2);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = p[i] + h / 2 * k2[i];
    matvec(q2, tmp, k3);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = p[i] + h * k3[i];
    matvec(q3, tmp, k4);
    for (std::size_t i = 0; i < n; ++i)
      p[i] += h / 6 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
    t += h;
    record(p);
  }
  res.terminal = std::move(p);
  return res;
}

KolmogorovResult kolmogorov_check(const RateMatrix& constant_rate, std::vector<double> p0,
                                  double horizon, double dt) {
  return kolmogorov_check([&](double) { return constant_rate; }, std::move(p0), horizon, dt);
}

double chi_square_p_value(double statistic, int dof) {
  if (std::isinf(statistic)) return 0.0;
  return boost::math::gamma_q(dof / 2.0, statistic / 2.0);
}

DistributionComparison compare_distributions(const std::vector<Sequence>& samples,
                                             const EmpiricalDistribution& target) {
  if (samples.empty()) throw precondition_error("compare_distributions: no samples");
  DistributionComparison out;
  out.n_samples = samples.size();

  std::map<Sequence, std::size_t> counts;
  for (const Sequence& s : samples) counts[s]++;

  const double n = static_cast<double>(samples.size());
  const auto& support = target.support();
  const auto& probs = target.probs();
  out.empirical.assign(support.size(), 0.0);

  std::size_t on_support = 0;
  double tv = 0.0;
  for (std::size_t i = 0; i < support.size(); ++i) {
    auto it = counts.find(support[i]);
    std::size_t c = it == counts.end() ? 0 : it->second;
    on_support += c;
    out.empirical[i] = c / n;
    tv += std::abs(out.empirical[i] - probs[i]);
  }
  out.off_support_mass = (n - static_cast<double>(on_support)) / n;
  out.tv = 0.5 * (tv + out.off_support_mass);

  double kl = 0.0;
  for (const auto& [seq, c] : counts) {
    double emp = c / n;
    double tgt = std::max(target.prob_of(seq), kLogFloor);
    kl += emp * std::log(emp / tgt);
  }
  out.kl = std::max(kl, 0.0);

  double chi = 0.0;
  for (std::size_t i = 0; i < support.size(); ++i) {
    double expected = n * probs[i];
    double observed = out.empirical[i] * n;
    chi += (observed - expected) * (observed - expected) / expected;
  }
  // Off-support cell has zero expected mass: any observation is an exact
  // rejection, no observation contributes nothing.
  if (out.off_support_mass > 0.0) chi = std::numeric_limits<double>::infinity();
  out.chi_square = chi;
  out.chi_p_value = chi_square_p_value(chi, static_cast<int>(support.size()) - 1);
  return out;
}

}  // namespace p2
