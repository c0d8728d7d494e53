#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "oracles.hpp"
#include "ordicc/likelihood.hpp"

using namespace ordicc;

namespace {

QuadratureRule rule15() { return QuadratureRule::gauss_hermite(15, true); }

}  // namespace

TEST_SUITE("likelihood") {

TEST_CASE("cell probabilities match the direct formula") {
  ThresholdSet t;
  t.xi.resize(3);
  t.xi << -1.1, 0.4, 2.2;
  std::vector<long double> xi_ld{-1.1L, 0.4L, 2.2L};
  for (Link link : {Link::probit, Link::logistic}) {
    for (double eta = -6.0; eta <= 6.0; eta += 0.37) {
      double total = 0.0;
      for (int k = 1; k <= 4; ++k) {
        const double p = cell_prob(k, eta, t, link);
        const double ref =
            static_cast<double>(oracle::cell_prob_ld(k, eta, xi_ld, link));
        CHECK(p == doctest::Approx(ref).epsilon(1e-12));
        CHECK(p >= 0.0);
        total += p;
      }
      CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("cell probabilities stay positive in deep tails") {
  ThresholdSet t;
  t.xi.resize(2);
  t.xi << -1.0, 1.0;
  // differences of near-unity CDFs would cancel; the tail branch must not
  CHECK(cell_prob(2, -20.0, t, Link::probit) > 0.0);
  CHECK(cell_prob(2, 20.0, t, Link::probit) > 0.0);
  CHECK(cell_prob(1, 25.0, t, Link::probit) >= 0.0);
  CHECK(cell_prob(3, -25.0, t, Link::probit) >= 0.0);
}

TEST_CASE("working parameter vector packs and unpacks") {
  ClmmParams p;
  p.thresholds.xi.resize(3);
  p.thresholds.xi << -0.8, 0.1, 1.9;
  p.beta.resize(2);
  p.beta << 0.5, -1.2;
  p.log_sigma_b = 0.3;
  p.link = Link::logistic;

  const Eigen::VectorXd theta = pack_working(p);
  REQUIRE(theta.size() == 3 + 2 + 1);
  const ClmmParams q = unpack_working(theta, 4, 2, false, Link::logistic);
  CHECK(q.thresholds.xi.isApprox(p.thresholds.xi, 1e-14));
  CHECK(q.beta.isApprox(p.beta, 1e-14));
  CHECK(q.log_sigma_b == doctest::Approx(p.log_sigma_b));
  CHECK(!q.log_sigma_c);

  p.log_sigma_c = -0.4;
  const Eigen::VectorXd theta_n = pack_working(p);
  REQUIRE(theta_n.size() == 7);
  const ClmmParams r = unpack_working(theta_n, 4, 2, true, Link::logistic);
  REQUIRE(r.log_sigma_c.has_value());
  CHECK(*r.log_sigma_c == doctest::Approx(-0.4));

  // any real vector gives ordered thresholds
  Eigen::VectorXd wild(7);
  wild << 2.0, -30.0, 5.0, 0.0, 0.0, 1.0, -1.0;
  CHECK(unpack_working(wild, 4, 2, true, Link::probit).thresholds.valid());
}

TEST_CASE("single-level marginal likelihood matches brute-force integration") {
  std::mt19937 gen(91);
  for (Link link : {Link::probit, Link::logistic}) {
    for (int rep = 0; rep < 10; ++rep) {
      const oracle::SmallInstance inst =
          oracle::random_instance(gen, false, link);
      const double fast = loglik_single(inst.params, inst.data, rule15());
      const double slow =
          oracle::loglik_single_ld(oracle::from_params(inst.params), inst.data);
      CHECK(fast == doctest::Approx(slow).epsilon(5e-7));
    }
  }
}

TEST_CASE("nested marginal likelihood matches brute-force integration") {
  std::mt19937 gen(92);
  for (Link link : {Link::probit, Link::logistic}) {
    for (int rep = 0; rep < 5; ++rep) {
      const oracle::SmallInstance inst =
          oracle::random_instance(gen, true, link);
      const double fast = loglik_nested(inst.params, inst.data, rule15());
      const double slow =
          oracle::loglik_nested_ld(oracle::from_params(inst.params), inst.data);
      CHECK(fast == doctest::Approx(slow).epsilon(5e-6));
    }
  }
}

TEST_CASE("adaptive and plain rules agree once the plain rule saturates") {
  std::mt19937 gen(93);
  const oracle::SmallInstance inst =
      oracle::random_instance(gen, false, Link::probit);
  const double adaptive = loglik_single(inst.params, inst.data, rule15());
  const double plain = loglik_single(
      inst.params, inst.data, QuadratureRule::gauss_hermite(150, false));
  CHECK(adaptive == doctest::Approx(plain).epsilon(1e-9));
}

TEST_CASE("vanishing random effect reduces to the independence model") {
  std::mt19937 gen(94);
  for (bool nested : {false, true}) {
    oracle::SmallInstance inst =
        oracle::random_instance(gen, nested, Link::probit);
    inst.params.log_sigma_b = std::log(1e-9);
    if (nested) inst.params.log_sigma_c = std::log(1e-9);

    double independent = 0.0;
    for (int i = 0; i < inst.data.n_obs(); ++i) {
      double eta = 0.0;
      for (int j = 0; j < inst.data.covariates.cols(); ++j) {
        eta += inst.params.beta[j] * inst.data.covariates(i, j);
      }
      independent += std::log(
          cell_prob(inst.data.categories[i], eta, inst.params.thresholds,
                    inst.params.link));
    }
    const double marginal =
        nested ? loglik_nested(inst.params, inst.data, rule15())
               : loglik_single(inst.params, inst.data, rule15());
    CHECK(marginal == doctest::Approx(independent).epsilon(1e-10));
  }
}

TEST_CASE("nested likelihood collapses to single level as one variance dies") {
  std::mt19937 gen(95);
  oracle::SmallInstance inst = oracle::random_instance(gen, true, Link::probit);

  // sigma_c -> 0: ears merge, subject effect only
  ClmmParams no_ear = inst.params;
  no_ear.log_sigma_c = std::log(1e-9);
  ClmmParams single = inst.params;
  single.log_sigma_c.reset();
  OrdinalDataset flat = inst.data;
  flat.ear_ids.clear();
  flat.nesting = Nesting::single;
  CHECK(loglik_nested(no_ear, inst.data, rule15()) ==
        doctest::Approx(loglik_single(single, flat, rule15())).epsilon(1e-9));

  // sigma_b -> 0: every ear is its own independent cluster
  ClmmParams no_subj = inst.params;
  no_subj.log_sigma_b = std::log(1e-9);
  ClmmParams ear_only = inst.params;
  ear_only.log_sigma_b = *inst.params.log_sigma_c;
  ear_only.log_sigma_c.reset();
  OrdinalDataset by_ear = inst.data;
  by_ear.subject_ids = inst.data.ear_ids;
  by_ear.ear_ids.clear();
  by_ear.nesting = Nesting::single;
  CHECK(loglik_nested(no_subj, inst.data, rule15()) ==
        doctest::Approx(loglik_single(ear_only, by_ear, rule15()))
            .epsilon(1e-9));
}

TEST_CASE("gradient matches finite differences of the likelihood") {
  std::mt19937 gen(96);
  for (Link link : {Link::probit, Link::logistic}) {
    for (bool nested : {false, true}) {
      const oracle::SmallInstance inst =
          oracle::random_instance(gen, nested, link);
      const Eigen::VectorXd theta = pack_working(inst.params);
      const int k = inst.data.n_categories;
      const int p = inst.data.n_covariates();
      auto value = [&](const Eigen::VectorXd& th) {
        const ClmmParams params = unpack_working(th, k, p, nested, link);
        return nested ? loglik_nested(params, inst.data, rule15())
                      : loglik_single(params, inst.data, rule15());
      };
      const Eigen::VectorXd g = loglik_gradient(inst.params, inst.data, rule15());
      const Eigen::VectorXd fd = oracle::fd_gradient(value, theta);
      REQUIRE(g.size() == theta.size());
      for (int j = 0; j < g.size(); ++j) {
        CHECK(g[j] == doctest::Approx(fd[j]).epsilon(2e-5));
      }
    }
  }
}

TEST_CASE("objective value does not depend on evaluation history") {
  // mode caches persist across calls; after wandering elsewhere the cached
  // modes re-converge, so re-evaluation agrees to rounding error
  constexpr double eps = std::numeric_limits<double>::epsilon();
  std::mt19937 gen(97);
  for (bool nested : {false, true}) {
    const oracle::SmallInstance inst =
        oracle::random_instance(gen, nested, Link::logistic);
    ClmmObjective obj(inst.data, Link::logistic, rule15());
    const Eigen::VectorXd theta0 = obj.starting_values();

    Eigen::VectorXd g_first(obj.dim()), g_again(obj.dim());
    const double f_first = obj.value_and_gradient(theta0, g_first);

    Eigen::VectorXd elsewhere = theta0;
    for (int j = 0; j < elsewhere.size(); ++j) {
      elsewhere[j] += (j % 2 == 0 ? 0.8 : -0.6);
    }
    (void)obj.value(elsewhere);

    const double f_again = obj.value_and_gradient(theta0, g_again);
    CHECK(std::abs(f_first - f_again) <= 8 * eps * (std::abs(f_first) + 1.0));
    CHECK((g_first - g_again).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("profiled objective pins sigma_b and drops its coordinate") {
  std::mt19937 gen(98);
  const oracle::SmallInstance inst =
      oracle::random_instance(gen, false, Link::probit);
  ClmmObjective full(inst.data, Link::probit, rule15());
  const double s_fixed = 1.7;
  ClmmObjective profiled(inst.data, Link::probit, rule15(), s_fixed);
  CHECK(profiled.dim() == full.dim() - 1);

  Eigen::VectorXd theta_free = profiled.starting_values();
  Eigen::VectorXd theta_full(full.dim());
  theta_full.head(theta_free.size()) = theta_free;
  theta_full[full.dim() - 1] = 0.5 * std::log(s_fixed);
  CHECK(profiled.value(theta_free) ==
        doctest::Approx(full.value(theta_full)).epsilon(1e-12));
}

TEST_CASE("likelihood rejects mismatched shapes") {
  std::mt19937 gen(99);
  const oracle::SmallInstance inst =
      oracle::random_instance(gen, false, Link::probit);
  ClmmParams bad = inst.params;
  bad.beta.resize(inst.params.beta.size() + 1);
  bad.beta.setZero();
  CHECK_THROWS_AS((void)loglik_single(bad, inst.data, rule15()),
                  InvalidInputError);

  ClmmParams nested_params = inst.params;
  nested_params.log_sigma_c = 0.0;
  CHECK_THROWS_AS((void)loglik_nested(nested_params, inst.data, rule15()),
                  InvalidInputError);
}

}  // TEST_SUITE
