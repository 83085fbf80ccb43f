#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <limits>

#include "p2/planner.hpp"
#include "p2/sampler.hpp"
#include "support/corpora.hpp"

using namespace p2;
using namespace p2::tests;

namespace {

struct Fixture {
  Vocabulary v = letters_vocab(2);
  std::shared_ptr<EmpiricalDistribution> dist = ab_uniform(v);
  std::shared_ptr<const Denoiser> den = std::make_shared<ExactDenoiser>(dist, v);
};

}  // namespace

TEST_CASE("self planner scores are denoiser confidences") {
  Fixture f;
  auto planner = self_planner(f.den);
  RandomStream rng(1);
  PlannerContext ctx{nullptr, &rng};

  Sequence x_t = {f.v.mask_id(), f.v.mask_id()};
  Sequence z = seq("AB");
  CHECK(planner->masked_score(z, x_t, 0, ctx) == doctest::Approx(0.5));

  // Point-mass data: full confidence on the data token.
  auto point = std::make_shared<ExactDenoiser>(make_dist(f.v, {"AB"}), f.v);
  auto p2p = self_planner(point);
  CHECK(p2p->masked_score(seq("AB"), x_t, 0, ctx) == doctest::Approx(1.0));
  CHECK(p2p->keep_score(seq("AB"), seq("AB"), 0, ctx) == doctest::Approx(1.0));
}

TEST_CASE("planner uses the cached step prediction when provided") {
  Fixture f;
  auto planner = self_planner(f.den);
  RandomStream rng(1);
  Sequence x_t = {f.v.mask_id(), f.v.mask_id()};
  Sequence z = seq("AB");
  std::vector<ProbVector> pred = f.den->predict(x_t);
  PlannerContext with_cache{&pred, &rng};
  PlannerContext without{nullptr, &rng};
  CHECK(planner->masked_score(z, x_t, 0, with_cache) ==
        planner->masked_score(z, x_t, 0, without));
}

TEST_CASE("external planner against the leave-one-out scorer") {
  Fixture f;
  auto scorer = std::make_shared<LeaveOneOutScorer>(f.den);
  auto ext = external_planner(f.den, scorer);
  auto self = self_planner(f.den);
  RandomStream rng(2);
  PlannerContext ctx{nullptr, &rng};

  // On a fully unmasked x_t with z = x_t the keep scores coincide.
  Sequence x_t = seq("AB");
  CHECK(ext->keep_score(x_t, x_t, 0, ctx) == self->keep_score(x_t, x_t, 0, ctx));
  CHECK(ext->keep_score(x_t, x_t, 1, ctx) == self->keep_score(x_t, x_t, 1, ctx));

  // Scorer rejects masked queries.
  Sequence masked_z = {1, f.v.mask_id()};
  CHECK_THROWS_AS(ext->keep_score(masked_z, x_t, 0, ctx), precondition_error);

  // Confident scorer scores corpus sequences at 1.
  auto point = std::make_shared<ExactDenoiser>(make_dist(f.v, {"AB"}), f.v);
  auto conf = external_planner(point, std::make_shared<LeaveOneOutScorer>(point));
  CHECK(conf->keep_score(seq("AB"), seq("AB"), 0, ctx) == doctest::Approx(1.0));
}

TEST_CASE("uniform scorer gives 1/(d-1) keep scores") {
  Fixture f;
  auto flat = corrupt(std::make_shared<ExactDenoiser>(f.dist, f.v), {1.0, 1.0});
  auto ext = external_planner(f.den, std::make_shared<LeaveOneOutScorer>(flat));
  RandomStream rng(3);
  PlannerContext ctx{nullptr, &rng};
  CHECK(ext->keep_score(seq("AB"), seq("AB"), 0, ctx) == doctest::Approx(0.5));
}

TEST_CASE("scorer requires leave-one-out capability") {
  Fixture f;
  auto dirac = std::make_shared<ExactDenoiser>(f.dist, f.v, UnmaskedMode::kDirac);
  CHECK_THROWS_AS(LeaveOneOutScorer{dirac}, config_error);
}

TEST_CASE("trivial planner scores everything at one") {
  auto planner = trivial_planner();
  RandomStream rng(4);
  PlannerContext ctx{nullptr, &rng};
  Sequence x = seq("AB");
  CHECK(planner->masked_score(x, x, 0, ctx) == 1.0);
  CHECK(planner->keep_score(x, x, 1, ctx) == 1.0);
}

TEST_CASE("uniform planner draws are uniform and the ancestral variant keeps") {
  auto ancestral = uniform_planner(false);
  auto dfm = uniform_planner(true);
  RandomStream rng(5);
  PlannerContext ctx{nullptr, &rng};
  Sequence x = seq("AB");

  for (int i = 0; i < 100; ++i) CHECK(ancestral->keep_score(x, x, 0, ctx) == 1.0);

  const int n = 10000;
  std::vector<double> draws(n);
  for (int i = 0; i < n; ++i) draws[i] = dfm->keep_score(x, x, 0, ctx);
  std::sort(draws.begin(), draws.end());
  double ks = 0.0;
  for (int i = 0; i < n; ++i) {
    ks = std::max(ks, std::abs((i + 1) / double(n) - draws[i]));
    ks = std::max(ks, std::abs(draws[i] - i / double(n)));
  }
  // 99.9% critical value sqrt(-ln(alpha/2)/2n).
  CHECK(ks < std::sqrt(-std::log(0.0005) / (2.0 * n)));
}

TEST_CASE("non-uniform planners are deterministic in (z, x_t)") {
  Fixture f;
  auto planner = self_planner(f.den);
  RandomStream r1(6), r2(99);
  PlannerContext c1{nullptr, &r1}, c2{nullptr, &r2};
  Sequence x_t = {1, f.v.mask_id()};
  Sequence z = seq("AB");
  CHECK(planner->masked_score(z, x_t, 1, c1) == planner->masked_score(z, x_t, 1, c2));
  CHECK(!planner->stochastic());
  CHECK(uniform_planner(true)->stochastic());
}

TEST_CASE("eta combination in the probability domain") {
  Fixture f;
  auto planner = trivial_planner();
  RandomStream rng(7);
  PlannerContext ctx{nullptr, &rng};
  Sequence x_t = {1, f.v.mask_id(), f.v.mask_id()};
  Sequence z = seq("ABA");

  EtaCombination zero{0.0, ScoreDomain::kProbability};
  auto s0 = combine_eta(*planner, zero, z, x_t, f.v, ctx);
  CHECK(s0[0] == 1.0);
  CHECK(s0[1] == 0.0);
  CHECK(s0[2] == 0.0);

  EtaCombination one{1.0, ScoreDomain::kProbability};
  auto s1 = combine_eta(*planner, one, z, x_t, f.v, ctx);
  CHECK(s1 == std::vector<double>{1.0, 1.0, 1.0});

  EtaCombination bad{-1.0, ScoreDomain::kProbability};
  CHECK_THROWS_AS(combine_eta(*planner, bad, z, x_t, f.v, ctx), config_error);
}

TEST_CASE("log domain with eta zero never emits NaN") {
  Vocabulary v = letters_vocab(2);
  // A scorer that assigns zero mass to tokens unseen at a position.
  auto point = std::make_shared<ExactDenoiser>(make_dist(v, {"AB"}), v);
  auto ext = external_planner(point, std::make_shared<LeaveOneOutScorer>(point));
  RandomStream rng(44);
  PlannerContext ctx{nullptr, &rng};
  Sequence x_t = seq("BB");  // keep score of B at position 0 is zero
  Sequence z = seq("BB");
  EtaCombination comb{0.0, ScoreDomain::kLog};
  auto s = combine_eta(*ext, comb, z, x_t, v, ctx);
  CHECK(s[0] == 0.0);
  CHECK(!std::isnan(s[1]));

  EtaCombination inf_eta{std::numeric_limits<double>::infinity(), ScoreDomain::kLog};
  CHECK_THROWS_AS(combine_eta(*ext, inf_eta, z, x_t, v, ctx), config_error);
}

TEST_CASE("log domain scales unmasked scores") {
  Fixture f;
  auto planner = self_planner(f.den);
  RandomStream rng(8);
  PlannerContext ctx{nullptr, &rng};
  Sequence x_t = {1, f.v.mask_id()};
  Sequence z = seq("AB");
  EtaCombination comb{2.0, ScoreDomain::kLog};
  auto s = combine_eta(*planner, comb, z, x_t, f.v, ctx);
  double keep = planner->keep_score(z, x_t, 0, ctx);
  double unmask = planner->masked_score(z, x_t, 1, ctx);
  CHECK(s[0] == doctest::Approx(2.0 * std::log(keep)));
  CHECK(s[1] == doctest::Approx(std::log(unmask)));
}

TEST_CASE("remask count is nondecreasing in eta") {
  // Brute force over random score vectors: raising eta can only promote
  // masked candidates into the kept set.
  RandomStream gen(9);
  for (int rep = 0; rep < 1000; ++rep) {
    const int L = 8;
    std::vector<double> gm(L), gu(L);
    std::vector<bool> masked(L);
    int n_masked = 0;
    for (int j = 0; j < L; ++j) {
      gm[j] = gen.uniform();
      gu[j] = gen.uniform();
      masked[j] = gen.bernoulli(0.5);
      n_masked += masked[j];
    }
    int k = static_cast<int>(gen.uniform_below(L)) + 1;
    std::uint64_t jitter_seed = gen.next_u64();

    double eta1 = 2.0 * gen.uniform();
    double eta2 = eta1 + 2.0 * gen.uniform();
    auto remask_count = [&](double eta) {
      std::vector<double> score(L);
      for (int j = 0; j < L; ++j) score[j] = masked[j] ? eta * gm[j] : gu[j];
      RandomStream jitter_rng(jitter_seed);
      auto kept = select_top_k(score, k, masked, 0.0, jitter_rng);
      int dropped = 0;
      std::vector<bool> in(L, false);
      for (int j : kept) in[j] = true;
      for (int j = 0; j < L; ++j) dropped += (!masked[j] && !in[j]) ? 1 : 0;
      return dropped;
    };
    CHECK(remask_count(eta2) >= remask_count(eta1));
  }
}

TEST_CASE("trained model features and scores") {
  Vocabulary v = letters_vocab(3);
  auto dist = make_dist(v, {"ABC", "ABA", "BCA"});
  TrainablePlannerModel model = TrainablePlannerModel::init(*dist, v, 0.1);
  CHECK(static_cast<int>(model.weights.size()) == 3 + 3 + 10 + 1);
  model.validate();

  Sequence x_t = {1, v.mask_id(), 3};
  Sequence z = seq("ABC");
  double s = model.score(z, x_t, 1, v);
  CHECK(s == doctest::Approx(0.5));  // zero weights

  std::vector<std::pair<int, double>> feats;
  model.features(z, x_t, 1, v, feats);
  // position 1, token B, one decile bucket, agreement fraction.
  CHECK(feats.size() == 4);
  CHECK(feats[0].first == 1);
  CHECK(feats[1].first == 3 + (2 - 1));
  // modes are (A, B, A); only position 0 of x_t agrees.
  CHECK(feats[3].second == doctest::Approx(1.0 / 3.0));

  model.weights.assign(model.weights.size(), 0.2);
  double s2 = model.score(z, x_t, 1, v);
  CHECK(s2 > 0.5);
  CHECK(s2 < 1.0);
}

TEST_CASE("planner rule plumbing validates dependencies") {
  Fixture f;
  CHECK_THROWS_AS(ConfigurablePlanner(ScoreRule::kDenoiserConfidence, ScoreRule::kOne, nullptr,
                                      nullptr, nullptr),
                  config_error);
  CHECK_THROWS_AS(ConfigurablePlanner(ScoreRule::kOne, ScoreRule::kScorerConfidence, nullptr,
                                      nullptr, nullptr),
                  config_error);
  CHECK_THROWS_AS(ConfigurablePlanner(ScoreRule::kOne, ScoreRule::kTrainedModel, nullptr, nullptr,
                                      nullptr),
                  config_error);
}
