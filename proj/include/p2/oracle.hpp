#ifndef P2_ORACLE_HPP
#define P2_ORACLE_HPP

#include <functional>
#include <optional>
#include <vector>

#include "p2/planner.hpp"

namespace p2 {

// Dense indexing of the full state space V^L (masks included). Position 0 is
// the least significant digit.
class StateSpace {
 public:
  StateSpace(int length, const Vocabulary& vocab);

  int size() const { return n_; }
  int length() const { return L_; }
  int index_of(const Sequence& x) const;
  Sequence state(int index) const;

 private:
  int L_;
  int d_;
  int n_;
};

// Generator of a continuous-time chain over the enumerated state space.
// Entry (y, x) is the jump rate from x to y; each column sums to zero.
struct RateMatrix {
  StateSpace space;
  double time = 0.0;  // reverse-chain time the rate factor was evaluated at
  std::vector<double> q;  // row-major: q[y * n + x]

  double at(int to, int from) const { return q[static_cast<std::size_t>(to) * space.size() + from]; }
  double& at(int to, int from) { return q[static_cast<std::size_t>(to) * space.size() + from]; }
  double column_sum(int from) const;
  // Off-diagonal column `from`, normalized to a distribution over target
  // states (empty optional when the state has zero total outflow).
  std::optional<std::vector<double>> normalized_column(int from) const;
};

// G_phi^j of the planner split: masked positions use the unmask score,
// unmasked positions 1 - keep score.
double planner_g(const Planner& planner, const Sequence& z, const Sequence& x, int position,
                 const Vocabulary& vocab, PlannerContext& ctx);

// E_{Z ~ prod_j D^j(x)}[ G_phi^position(Z with `position` pinned to `pin`, x) ],
// computed by full enumeration over the product support. Deterministic
// planners only. With no pin, the position coordinate follows D as well.
double expected_planner_g(const Denoiser& den, const Planner& planner, const Sequence& x,
                          int position, std::optional<Token> pin);

// Exact average over all L! unmask orders of the per-step conditional
// probabilities; equals the terminal law of the masked-diffusion chain.
double order_average_probability(const Denoiser& den, const Sequence& x);
// Product of per-step conditionals for one fixed unmask order.
double order_probability(const Denoiser& den, const Sequence& x, const std::vector<int>& order);

// Masked-diffusion generator at reverse-chain time tau (rates carry the
// factor -alpha'(1-tau) / (1 - alpha(1-tau))).
RateMatrix build_mdm_rate_matrix(const Denoiser& den, const NoiseSchedule& schedule, double tau);
// Same generator with the time factor fixed to 1: the jump structure used
// for integration in the log-time variable where the factor is constant.
RateMatrix build_mdm_rate_structure(const Denoiser& den);

// Planner-guided generator with expectations over Z computed exactly.
RateMatrix build_p2_rate_matrix(const Denoiser& den, const Planner& planner,
                                const NoiseSchedule& schedule, double tau);
RateMatrix build_p2_rate_structure(const Denoiser& den, const Planner& planner);

// Exact one-jump law of the planner-guided chain at state x: first the
// position marginal, then the token law per position (zero at the current
// token for resampled positions).
struct JumpLaw {
  std::vector<double> position_prob;   // length L, sums to 1
  std::vector<ProbVector> token_law;   // conditional on the position
  // Law over successor state indices, position and token combined.
  std::vector<double> state_prob;      // length d^L
};

JumpLaw p2_jump_law(const Denoiser& den, const Planner& planner, const Sequence& x);

struct KolmogorovResult {
  double max_norm_defect = 0.0;  // max over time of |sum p - 1|
  double min_probability = 0.0;  // most negative entry seen
  std::vector<double> terminal;
};

// Fixed-step RK4 integration of p' = Q(t) p from p0 over [0, horizon].
KolmogorovResult kolmogorov_check(const std::function<RateMatrix(double)>& rate_fn,
                                  std::vector<double> p0, double horizon, double dt);
KolmogorovResult kolmogorov_check(const RateMatrix& constant_rate, std::vector<double> p0,
                                  double horizon, double dt);

struct DistributionComparison {
  double tv = 0.0;
  double kl = 0.0;            // KL(empirical || target), target floored at 1e-12
  double chi_square = 0.0;    // over the target support plus an off-support cell
  double chi_p_value = 0.0;
  std::size_t n_samples = 0;
  double off_support_mass = 0.0;
  std::vector<double> empirical;  // per target-support entry
};

DistributionComparison compare_distributions(const std::vector<Sequence>& samples,
                                             const EmpiricalDistribution& target);

// Upper-tail p-value of a chi-square statistic.
double chi_square_p_value(double statistic, int dof);

}  // namespace p2

#endif
