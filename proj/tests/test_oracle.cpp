#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <numeric>

#include "p2/batch.hpp"
#include "p2/oracle.hpp"
#include "support/corpora.hpp"

using namespace p2;
using namespace p2::tests;

namespace {

// Deterministic constant-score planner for generator tests.
class ConstPlanner : public Planner {
 public:
  ConstPlanner(double gm, double gu) : gm_(gm), gu_(gu) {}
  double masked_score(const Sequence&, const Sequence&, int, PlannerContext&) const override {
    return gm_;
  }
  double keep_score(const Sequence&, const Sequence&, int, PlannerContext&) const override {
    return gu_;
  }
  ScoreRule masked_rule() const override { return ScoreRule::kOne; }
  ScoreRule keep_rule() const override { return ScoreRule::kOne; }

 private:
  double gm_, gu_;
};

}  // namespace

TEST_CASE("state space round trips") {
  Vocabulary v = letters_vocab(2);
  StateSpace space(2, v);
  CHECK(space.size() == 9);
  for (int i = 0; i < space.size(); ++i) CHECK(space.index_of(space.state(i)) == i);
}

TEST_CASE("order average on point mass and the two-sequence corpus") {
  Vocabulary v = letters_vocab(2);
  ExactDenoiser point(make_dist(v, {"AB"}), v);
  CHECK(order_average_probability(point, seq("AB")) == doctest::Approx(1.0));
  CHECK(order_average_probability(point, seq("BA")) == doctest::Approx(0.0));

  ExactDenoiser uniform(ab_uniform(v), v);
  CHECK(order_average_probability(uniform, seq("AB")) == doctest::Approx(0.5));
  CHECK(order_average_probability(uniform, seq("BA")) == doctest::Approx(0.5));

  Sequence too_long(7, 1);
  CHECK_THROWS_AS(order_average_probability(uniform, too_long), precondition_error);
}

TEST_CASE("every single order recovers the data probability under a perfect denoiser") {
  Vocabulary v = letters_vocab(3);
  RandomStream gen(3);
  for (int rep = 0; rep < 10; ++rep) {
    // Random corpus with support <= 16, L = 4.
    std::vector<Sequence> rows;
    std::vector<double> weights;
    while (rows.size() < 8) {
      Sequence s(4);
      for (auto& t : s) t = static_cast<Token>(gen.uniform_below(3) + 1);
      bool dup = false;
      for (const auto& r : rows) dup = dup || r == s;
      if (dup) continue;
      rows.push_back(s);
      weights.push_back(1.0 + gen.uniform_below(4));
    }
    double total = std::accumulate(weights.begin(), weights.end(), 0.0);
    for (double& w : weights) w /= total;
    auto dist = std::make_shared<EmpiricalDistribution>(rows, weights, v);
    ExactDenoiser den(dist, v);

    std::vector<int> order(4);
    std::iota(order.begin(), order.end(), 0);
    do {
      for (std::size_t s = 0; s < rows.size(); ++s)
        CHECK(order_probability(den, rows[s], order) ==
              doctest::Approx(weights[s]).epsilon(1e-9));
    } while (std::next_permutation(order.begin(), order.end()));
  }
}

TEST_CASE("order average matches gillespie frequencies for a corrupted denoiser") {
  Vocabulary v = letters_vocab(2);
  auto dist = ab_uniform(v);
  auto den = corrupt(std::make_shared<ExactDenoiser>(dist, v), {0.5, 1.0});
  const int n = 200000;
  BatchResult batch = gillespie_mdm_batch(*den, n, 97);
  DistributionComparison cmp = compare_distributions(batch.samples, *dist);
  double oracle_total = 0.0;
  for (int i = 0; i < dist->support_size(); ++i) {
    double oracle = order_average_probability(*den, dist->support()[i]);
    oracle_total += oracle;
    CHECK(std::abs(cmp.empirical[i] - oracle) < three_sigma(oracle, n));
  }
  double off = 1.0 - oracle_total;
  CHECK(std::abs(cmp.off_support_mass - off) < three_sigma(off, n));
}

TEST_CASE("trivial planner reduces the guided generator to the masked one") {
  Vocabulary v = letters_vocab(2);
  auto dist = ab_uniform(v);
  auto den = corrupt(std::make_shared<ExactDenoiser>(dist, v), {0.3, 1.0});
  auto planner = trivial_planner();
  NoiseSchedule lin = NoiseSchedule::linear();

  RateMatrix guided = build_p2_rate_matrix(*den, *planner, lin, 0.4);
  RateMatrix masked = build_mdm_rate_matrix(*den, lin, 0.4);
  REQUIRE(guided.q.size() == masked.q.size());
  for (std::size_t i = 0; i < guided.q.size(); ++i)
    CHECK(guided.q[i] == doctest::Approx(masked.q[i]).epsilon(1e-12));
}

TEST_CASE("zero planner yields zero off-diagonals") {
  Vocabulary v = letters_vocab(2);
  auto den = std::make_shared<ExactDenoiser>(ab_uniform(v), v);
  ConstPlanner none(0.0, 1.0);  // no unmasking, full keep
  RateMatrix q = build_p2_rate_structure(*den, none);
  for (double x : q.q) CHECK(x == 0.0);
}

TEST_CASE("generator columns sum to zero on random instances") {
  Vocabulary v = letters_vocab(2);
  RandomStream gen(11);
  NoiseSchedule lin = NoiseSchedule::linear();
  for (int rep = 0; rep < 100; ++rep) {
    auto dist = gen.bernoulli(0.5) ? ab_uniform(v) : make_dist(v, {"AB", "BB", "BA"});
    auto den = corrupt(std::make_shared<ExactDenoiser>(dist, v), {gen.uniform(), 1.0});
    ConstPlanner planner(gen.uniform(), gen.uniform());
    double tau = 0.9 * gen.uniform();
    RateMatrix q = build_p2_rate_matrix(*den, planner, lin, tau);
    for (int x = 0; x < q.space.size(); ++x) CHECK(std::abs(q.column_sum(x)) < 1e-9);
    for (int y = 0; y < q.space.size(); ++y)
      for (int x = 0; x < q.space.size(); ++x)
        if (x != y) CHECK(q.at(y, x) >= 0.0);
  }
}

TEST_CASE("normalized generator columns equal the enumerated jump law") {
  Vocabulary v = letters_vocab(2);
  auto dist = ab_uniform(v);
  auto den = corrupt(std::make_shared<ExactDenoiser>(dist, v), {0.3, 1.0});

  std::vector<std::shared_ptr<const Planner>> planners = {
      self_planner(den), std::make_shared<ConstPlanner>(0.7, 0.4), trivial_planner()};
  for (const auto& planner : planners) {
    RateMatrix q = build_p2_rate_structure(*den, *planner);
    for (int xi = 0; xi < q.space.size(); ++xi) {
      auto col = q.normalized_column(xi);
      if (!col) continue;
      JumpLaw law = p2_jump_law(*den, *planner, q.space.state(xi));
      for (int y = 0; y < q.space.size(); ++y)
        CHECK(std::abs((*col)[y] - law.state_prob[y]) < 1e-9);
    }
  }
}

TEST_CASE("planner expectation enumerates the product distribution") {
  Vocabulary v = letters_vocab(2);
  auto dist = make_dist(v, {"AB", "BA", "AA"});
  auto den = corrupt(std::make_shared<ExactDenoiser>(dist, v), {0.25, 1.0});
  auto planner = self_planner(den);

  // For the self planner at a masked position the score is Cat(z^j; D^j),
  // so the unpinned expectation is sum_j D_j^2.
  Sequence x = {v.mask_id(), v.mask_id()};
  ProbVector d0 = den->predict_position(x, 0);
  double expect = 0.0;
  for (Token t = 1; t <= v.mask_id(); ++t) expect += d0.weight(t) * d0.weight(t);
  CHECK(expected_planner_g(*den, *planner, x, 0, std::nullopt) == doctest::Approx(expect));
  // Pinned coordinate: the score is a constant in z.
  CHECK(expected_planner_g(*den, *planner, x, 0, Token{1}) == doctest::Approx(d0.weight(1)));

  CHECK_THROWS_AS(expected_planner_g(*den, *uniform_planner(true), x, 0, std::nullopt),
                  precondition_error);
}

TEST_CASE("kolmogorov integration") {
  Vocabulary v = letters_vocab(2);
  auto dist = ab_uniform(v);
  auto den = corrupt(std::make_shared<ExactDenoiser>(dist, v), {0.3, 1.0});

  SUBCASE("zero generator keeps the initial condition") {
    StateSpace space(2, v);
    RateMatrix zero{space, 0.0, std::vector<double>(81, 0.0)};
    std::vector<double> p0(9, 0.0);
    p0[4] = 1.0;
    KolmogorovResult res = kolmogorov_check(zero, p0, 1.0, 1e-3);
    CHECK(res.max_norm_defect == 0.0);
    CHECK(res.terminal[4] == 1.0);
  }

  SUBCASE("masked generator terminal matches the order average") {
    RateMatrix q = build_mdm_rate_structure(*den);
    std::vector<double> p0(q.space.size(), 0.0);
    p0[q.space.index_of(Sequence(2, v.mask_id()))] = 1.0;
    KolmogorovResult res = kolmogorov_check(q, p0, 16.0, 1e-3);
    CHECK(res.max_norm_defect < 1e-6);
    CHECK(res.min_probability > -1e-9);
    for (const Sequence& s : dist->support()) {
      double oracle = order_average_probability(*den, s);
      CHECK(res.terminal[q.space.index_of(s)] == doctest::Approx(oracle).epsilon(1e-4));
    }
  }

  SUBCASE("guided generator conserves mass") {
    RateMatrix q = build_p2_rate_structure(*den, *self_planner(den));
    std::vector<double> p0(q.space.size(), 0.0);
    p0[q.space.index_of(Sequence(2, v.mask_id()))] = 1.0;
    KolmogorovResult res = kolmogorov_check(q, p0, 8.0, 1e-3);
    CHECK(res.max_norm_defect < 1e-6);
    CHECK(res.min_probability > -1e-6);
  }

  SUBCASE("step size precondition") {
    StateSpace space(2, v);
    RateMatrix zero{space, 0.0, std::vector<double>(81, 0.0)};
    CHECK_THROWS_AS(kolmogorov_check(zero, std::vector<double>(9, 1.0 / 9), 1.0, 0.01),
                    precondition_error);
  }
}

TEST_CASE("distribution comparison") {
  Vocabulary v = letters_vocab(2);
  auto dist = corpus8(letters_vocab(4));
  Vocabulary v4 = letters_vocab(4);

  SUBCASE("samples from the target itself") {
    RandomStream rng(13);
    std::vector<Sequence> samples;
    const int n = 200000;
    samples.reserve(n);
    for (int i = 0; i < n; ++i) samples.push_back(dist->sample(rng));
    DistributionComparison cmp = compare_distributions(samples, *dist);
    CHECK(cmp.tv < 0.02);
    CHECK(cmp.kl < 0.01);
    CHECK(cmp.off_support_mass == 0.0);
    CHECK(std::isfinite(cmp.chi_square));
    CHECK(cmp.chi_p_value > 1e-6);
  }

  SUBCASE("constant samples against a uniform pair") {
    auto ab = ab_uniform(v);
    std::vector<Sequence> samples(1000, seq("AB"));
    DistributionComparison cmp = compare_distributions(samples, *ab);
    CHECK(cmp.tv == doctest::Approx(0.5));
  }

  SUBCASE("off-support mass makes the chi-square reject") {
    auto ab = ab_uniform(v);
    std::vector<Sequence> samples(1000, seq("AB"));
    samples.push_back(seq("AA"));
    DistributionComparison cmp = compare_distributions(samples, *ab);
    CHECK(std::isinf(cmp.chi_square));
    CHECK(cmp.chi_p_value == 0.0);
  }

  CHECK_THROWS_AS(compare_distributions({}, *dist), precondition_error);
}

TEST_CASE("chi-square tail values") {
  CHECK(chi_square_p_value(0.0, 3) == doctest::Approx(1.0));
  CHECK(chi_square_p_value(3.841, 1) == doctest::Approx(0.05).epsilon(1e-3));
  CHECK(chi_square_p_value(1000.0, 3) < 1e-12);
}

// Goodness-of-fit testing policy: threshold 0.001, 20 seeds, at most 2
// rejections tolerated.
TEST_CASE("chi-square rejections stay within the seed policy") {
  Vocabulary v = letters_vocab(4);
  auto dist = corpus8(v);
  const int n = 50000;
  int rejections = 0;
  for (int s = 0; s < 20; ++s) {
    RandomStream rng(4000 + s);
    std::vector<Sequence> samples;
    samples.reserve(n);
    for (int i = 0; i < n; ++i) samples.push_back(dist->sample(rng));
    DistributionComparison cmp = compare_distributions(samples, *dist);
    rejections += cmp.chi_p_value < 0.001 ? 1 : 0;
  }
  CHECK(rejections <= 2);
}

TEST_CASE("dense generators refuse oversized state spaces") {
  Vocabulary v(11);  // 11^4 > 10^4 states
  std::vector<Sequence> support = {{1, 2, 3, 4}};
  auto dist = std::make_shared<EmpiricalDistribution>(support, std::vector<double>{1.0}, v);
  auto den = std::make_shared<ExactDenoiser>(dist, v);
  CHECK_THROWS_AS(build_mdm_rate_structure(*den), precondition_error);
}

// The discrete remask-and-resample law conditioned on a change equals the
// jump-chain token law at any step size; the unconditional one-step laws
// differ only through multi-jump terms, vanishing as the step shrinks.
TEST_CASE("one-step law gap against the generator shrinks with the step") {
  Vocabulary v = letters_vocab(3);
  auto dist = make_dist(v, {"A", "B", "C"}, {0.5, 0.3, 0.2});
  auto den = corrupt(std::make_shared<ExactDenoiser>(dist, v), {0.2, 1.0});
  NoiseSchedule lin = NoiseSchedule::linear();
  ConstPlanner planner(1.0, 0.0);  // always resample the single position

  Sequence x = seq("A");
  RateMatrix q = build_p2_rate_structure(*den, planner);

  auto gap_at = [&](double dt) {
    double t_from = 0.5;
    double t_to = 0.5 - dt;
    ProbVector discrete = p2_reverse_unmasked_law(x, 0, t_from, t_to, *den, lin);
    // Generator law over the same window, integrated in the log-time
    // variable where the rate factor is one.
    double horizon = std::log((1.0 - lin.alpha(t_from)) / (1.0 - lin.alpha(t_to)));
    std::vector<double> p0(q.space.size(), 0.0);
    p0[q.space.index_of(x)] = 1.0;
    KolmogorovResult res = kolmogorov_check(q, p0, horizon, 1e-4);
    double gap = 0.0;
    for (Token tok = 1; tok <= v.mask_id(); ++tok) {
      Sequence y{tok};
      gap += std::abs(discrete.weight(tok) - res.terminal[q.space.index_of(y)]);
    }
    return gap / 2.0;
  };

  double g1 = gap_at(0.2);
  double g2 = gap_at(0.02);
  double g3 = gap_at(0.002);
  MESSAGE("one-step TV gap: ", g1, " -> ", g2, " -> ", g3);
  CHECK(g2 < g1);
  CHECK(g3 < g2);
  CHECK(g3 < 1e-3);
}
