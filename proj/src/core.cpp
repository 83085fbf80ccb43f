#include "p2/core.hpp"

#include <algorithm>
#include <cassert>
#include <unordered_set>

namespace p2 {

Vocabulary::Vocabulary(int size_d) : d_(size_d) {
  if (size_d < 2) throw config_error("vocabulary needs at least 2 symbols (one category plus the mask)");
  if (size_d > 65535) throw config_error("vocabulary too large for 16-bit tokens");
}

Vocabulary::Vocabulary(std::vector<std::string> names)
    : d_(static_cast<int>(names.size())), names_(std::move(names)) {
  if (d_ < 2) throw config_error("vocabulary needs at least 2 symbols (one category plus the mask)");
  if (d_ > 65535) throw config_error("vocabulary too large for 16-bit tokens");
  std::unordered_set<std::string> seen;
  for (const auto& n : names_) {
    if (n.empty()) throw config_error("empty symbol name in vocabulary");
    if (!seen.insert(n).second) throw config_error("duplicate symbol name in vocabulary: " + n);
  }
}

const std::string& Vocabulary::name(Token t) const {
  if (!in_range(t)) throw precondition_error("symbol index out of range");
  static const std::string unnamed = "?";
  if (names_.empty()) return unnamed;
  return names_[t - 1];
}

std::optional<Token> Vocabulary::token_of(const std::string& name) const {
  for (std::size_t i = 0; i < names_.size(); ++i)
    if (names_[i] == name) return static_cast<Token>(i + 1);
  return std::nullopt;
}

ProbVector::ProbVector(std::vector<double> weights) : w_(std::move(weights)) {
#ifndef NDEBUG
  check_valid("ProbVector");
#endif
}

ProbVector ProbVector::delta(Token symbol, int d) {
  std::vector<double> w(d, 0.0);
  w[symbol - 1] = 1.0;
  return ProbVector(std::move(w));
}

bool ProbVector::valid() const {
  double sum = 0.0;
  for (double x : w_) {
    if (!(x >= 0.0)) return false;
    sum += x;
  }
  return std::abs(sum - 1.0) <= kProbTol;
}

void ProbVector::check_valid(const char* where) const {
  if (!valid()) throw invariant_error(std::string(where) + ": not a probability vector");
}

double ProbVector::entropy() const {
  double h = 0.0;
  for (double x : w_)
    if (x > 0.0) h -= x * std::log(x);
  return h;
}

ProbVector delta(Token symbol, const Vocabulary& vocab) {
  if (!vocab.in_range(symbol)) throw precondition_error("delta: symbol out of range");
  return ProbVector::delta(symbol, vocab.size());
}

NoiseSchedule::NoiseSchedule(std::string name, std::function<double(double)> alpha,
                             std::function<double(double)> alpha_derivative)
    : name_(std::move(name)), alpha_(std::move(alpha)), alpha_prime_(std::move(alpha_derivative)) {}

NoiseSchedule NoiseSchedule::linear() {
  return NoiseSchedule(
      "linear", [](double t) { return 1.0 - t; }, [](double) { return -1.0; });
}

NoiseSchedule NoiseSchedule::quadratic() {
  return NoiseSchedule(
      "quadratic", [](double t) { return 1.0 - t * t; }, [](double t) { return -2.0 * t; });
}

void NoiseSchedule::validate() const {
  if (std::abs(alpha_(0.0) - 1.0) > kProbTol || std::abs(alpha_(1.0)) > kProbTol)
    throw config_error("noise schedule must satisfy alpha(0)=1, alpha(1)=0");
  double prev = alpha_(0.0);
  for (int i = 1; i <= 100; ++i) {
    double t = i / 100.0;
    double a = alpha_(t);
    if (a > prev + kProbTol) throw config_error("noise schedule must be nonincreasing");
    prev = a;
  }
  const double h = 1e-5;
  for (int i = 1; i < 100; ++i) {
    double t = i / 100.0;
    double fd = (alpha_(t + h) - alpha_(t - h)) / (2 * h);
    if (std::abs(fd - alpha_prime_(t)) > 1e-6)
      throw config_error("alpha_derivative disagrees with finite difference of alpha");
  }
}

double schedule_weight(const NoiseSchedule& schedule, double t, bool* clamped) {
  double denom = 1.0 - schedule.alpha(t);
  bool clip = denom < kEpsClamp;
  if (clamped) *clamped = clip;
  if (clip) denom = kEpsClamp;
  return -schedule.alpha_derivative(t) / denom;
}

namespace {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

RandomStream::RandomStream(std::uint64_t seed) : seed_(seed), state_(seed) {
  // Warm the state so that small seeds do not share prefixes.
  (void)splitmix64(state_);
}

std::uint64_t RandomStream::next_u64() { return splitmix64(state_); }

double RandomStream::uniform() { return (next_u64() >> 11) * 0x1.0p-53; }

std::uint64_t RandomStream::uniform_below(std::uint64_t n) {
  assert(n > 0);
  // Rejection sampling to avoid modulo bias.
  std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return x % n;
}

bool RandomStream::bernoulli(double p) { return uniform() < p; }

Token RandomStream::categorical(const ProbVector& p) {
  return categorical(std::span<const double>(p.weights()));
}

Token RandomStream::categorical(std::span<const double> weights) {
  double total = 0.0;
  for (double w : weights) total += w;
  if (!(total > 0.0)) throw precondition_error("categorical: all weights zero");
  double u = uniform() * total;
  for (std::size_t k = 0; k < weights.size(); ++k) {
    if (u < weights[k]) return static_cast<Token>(k + 1);
    u -= weights[k];
  }
  // Rounding may push u past the last positive weight.
  for (std::size_t k = weights.size(); k-- > 0;)
    if (weights[k] > 0.0) return static_cast<Token>(k + 1);
  return static_cast<Token>(weights.size());
}

RandomStream RandomStream::child(std::uint64_t index) const {
  std::uint64_t s = seed_ ^ (0xd1b54a32d192ed03ULL * (index + 1));
  std::uint64_t mix = s;
  return RandomStream(splitmix64(mix));
}

double pairwise_sum(std::span<const double> values) {
  if (values.empty()) return 0.0;
  if (values.size() == 1) return values[0];
  if (values.size() <= 8) {
    double acc = 0.0;
    for (double v : values) acc += v;
    return acc;
  }
  std::size_t half = values.size() / 2;
  return pairwise_sum(values.subspan(0, half)) + pairwise_sum(values.subspan(half));
}

}  // namespace p2
