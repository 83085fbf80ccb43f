#ifndef P2_CORE_HPP
#define P2_CORE_HPP

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "p2/errors.hpp"

namespace p2 {

// Symbols are 1-based: tokens take values in 1..d and the mask is always the
// last symbol d. Index 0 is never a valid token.
using Token = std::uint16_t;
using Sequence = std::vector<Token>;

constexpr double kEpsClamp = 1e-6;   // floor on 1-alpha(t) in schedule weights
constexpr double kProbTol = 1e-9;    // absolute tolerance for probability sums
constexpr double kLogFloor = 1e-12;  // p_floor for log-domain flooring

class Vocabulary {
 public:
  // Unnamed vocabulary of `size_d` symbols (including the mask).
  explicit Vocabulary(int size_d);
  // Named vocabulary; the last name must belong to the mask symbol.
  explicit Vocabulary(std::vector<std::string> names);

  int size() const { return d_; }
  Token mask_id() const { return static_cast<Token>(d_); }
  bool is_mask(Token t) const { return t == mask_id(); }
  bool in_range(Token t) const { return t >= 1 && t <= d_; }

  bool has_names() const { return !names_.empty(); }
  const std::string& name(Token t) const;
  // Token for a symbol name, or nullopt if unknown.
  std::optional<Token> token_of(const std::string& name) const;
  const std::vector<std::string>& names() const { return names_; }

 private:
  int d_;
  std::vector<std::string> names_;
};

// Point on the d-simplex, indexed by 1-based symbol.
class ProbVector {
 public:
  ProbVector() = default;
  explicit ProbVector(std::vector<double> weights);

  static ProbVector delta(Token symbol, int d);

  int dim() const { return static_cast<int>(w_.size()); }
  double weight(Token symbol) const { return w_[symbol - 1]; }
  double& weight_ref(Token symbol) { return w_[symbol - 1]; }
  const std::vector<double>& weights() const { return w_; }

  // Simplex invariant: nonnegative entries summing to 1 within kProbTol.
  bool valid() const;
  void check_valid(const char* where) const;

  double entropy() const;

 private:
  std::vector<double> w_;
};

// One-hot distribution at `symbol` over a vocabulary of size d.
ProbVector delta(Token symbol, const Vocabulary& vocab);

class NoiseSchedule {
 public:
  NoiseSchedule() = default;
  NoiseSchedule(std::string name, std::function<double(double)> alpha,
                std::function<double(double)> alpha_derivative);

  // alpha_t = 1 - t; the canonical default.
  static NoiseSchedule linear();
  // alpha_t = 1 - t^2, a convex alternative used in tests.
  static NoiseSchedule quadratic();

  double alpha(double t) const { return alpha_(t); }
  double alpha_derivative(double t) const { return alpha_prime_(t); }
  const std::string& name() const { return name_; }

  // Checks endpoints, monotonicity and derivative agreement on a grid.
  void validate() const;

 private:
  std::string name_;
  std::function<double(double)> alpha_;
  std::function<double(double)> alpha_prime_;
};

// -alpha'(t) / (1 - alpha(t)), with the denominator clamped at kEpsClamp.
// Sets *clamped when the clamp was applied.
double schedule_weight(const NoiseSchedule& schedule, double t, bool* clamped = nullptr);

// Deterministic pairwise tree sum; the reduction order is fixed by the input
// layout, never by thread scheduling.
double pairwise_sum(std::span<const double> values);

// Deterministic 64-bit stream. The generator is pinned to the splitmix64
// mixer over a counter so that draws are identical on every platform;
// uniform doubles take the top 53 bits.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed);

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64();
  // Uniform on [0, 1).
  double uniform();
  // Uniform integer in [0, n).
  std::uint64_t uniform_below(std::uint64_t n);
  bool bernoulli(double p);
  // CDF-inversion draw of a 1-based symbol.
  Token categorical(const ProbVector& p);
  Token categorical(std::span<const double> weights);  // unnormalized

  // Independent child stream for worker `index`; never reuses this stream's
  // state, so parents and children can be consumed in any order.
  RandomStream child(std::uint64_t index) const;

 private:
  std::uint64_t seed_;
  std::uint64_t state_;
};

}  // namespace p2

#endif
