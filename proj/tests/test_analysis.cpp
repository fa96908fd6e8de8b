#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "kmtl/analysis.hpp"
#include "kmtl/episode.hpp"
#include "kmtl/environments.hpp"
#include "kmtl/policies.hpp"
#include "kmtl/regressor.hpp"
#include "oracles.hpp"

#include <cmath>
#include <random>

using namespace kmtl;

namespace {

Vector vecd(std::initializer_list<double> vals) {
  Vector v(static_cast<Eigen::Index>(vals.size()));
  Eigen::Index i = 0;
  for (double x : vals) v(i++) = x;
  return v;
}

}  // namespace

TEST_CASE("psd eigenvalues: sorting, clamping, and the tolerance gate") {
  Matrix m(3, 3);
  m << 2, 0, 0, 0, 5, 0, 0, 0, 1;
  const Vector eigs = psd_eigenvalues(m);
  CHECK(eigs(0) == doctest::Approx(5.0));
  CHECK(eigs(1) == doctest::Approx(2.0));
  CHECK(eigs(2) == doctest::Approx(1.0));

  Matrix tiny_neg = Matrix::Identity(2, 2);
  tiny_neg(1, 1) = -1e-12;  // within 1e-8 of the unit top eigenvalue
  CHECK(psd_eigenvalues(tiny_neg).minCoeff() == 0.0);

  Matrix indefinite(2, 2);
  indefinite << 1, 2, 2, 1;
  CHECK_THROWS_AS(psd_eigenvalues(indefinite), NumericalError);
}

TEST_CASE("log-determinant ratio: closed cases and the determinant oracle") {
  CHECK(log_det_ratio(Matrix::Identity(2, 2), 1.0) == doctest::Approx(std::log(4.0)));
  CHECK(log_det_ratio(Matrix::Zero(3, 3), 1.0) == 0.0);

  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 2 + static_cast<int>(rng() % 19);  // up to 20 x 20
    const Matrix psd = oracle::random_psd(n, rng);
    const double lambda = 0.25 + static_cast<double>(rng() % 100) / 50.0;
    const double via_eigs = log_det_ratio(psd, lambda);
    const double via_det = oracle::log_det_ratio_direct(psd, lambda);
    CHECK(via_eigs == doctest::Approx(via_det).epsilon(1e-8));
  }

  CHECK_THROWS_AS(log_det_ratio(Matrix::Identity(2, 2), 0.0), std::invalid_argument);
}

TEST_CASE("effective rank walks the tail inequality") {
  CHECK(effective_rank(vecd({5, 0, 0}), 1.0, 2) == 1);  // 1 * ln 2 >= 0
  CHECK(effective_rank(vecd({0, 0, 0}), 1.0, 2) == 0);  // 0 >= 0 at j = 0
  CHECK(effective_rank(vecd({3, 3, 3}), 1.0, 2) == 3);  // j = 1, 2 both fail
  CHECK_THROWS_AS(effective_rank(vecd({1}), 1.0, 1), std::invalid_argument);
}

TEST_CASE("numerical rank thresholds at a relative tolerance") {
  CHECK(numerical_rank(vecd({5, 1e-3, 1e-12})) == 2);
  CHECK(numerical_rank(vecd({0, 0})) == 0);
  CHECK(numerical_rank(Vector()) == 0);
}

TEST_CASE("horizon-level regret cap: closed cases and the arithmetic oracle") {
  // Zero information: only the 2 sqrt(T) term survives.
  CHECK(theoretical_regret_bound(100, 5, 0.05, 1.0, 1.0, 1.0, 0.0) ==
        doctest::Approx(20.0).epsilon(1e-12));

  const double lib = theoretical_regret_bound(100, 5, 0.05, 1.0, 1.0, 1.0, 10.0);
  const double ref = oracle::horizon_regret_cap(100, 5, 0.05, 1.0, 1.0, 1.0, 10.0);
  CHECK(lib == doctest::Approx(ref).epsilon(1e-12));

  // Monotone in the information term.
  double prev = 0.0;
  for (double log_g : {0.0, 1.0, 5.0, 10.0, 50.0}) {
    const double value = theoretical_regret_bound(200, 4, 0.05, 1.0, 1.0, 1.0, log_g);
    CHECK(value >= prev);
    prev = value;
  }

  CHECK_THROWS_AS(theoretical_regret_bound(0, 5, 0.05, 1.0, 1.0, 1.0, 1.0),
                  std::invalid_argument);
  CHECK_THROWS_AS(theoretical_regret_bound(100, 5, 2.0, 1.0, 1.0, 1.0, 1.0),
                  std::invalid_argument);
}

TEST_CASE("rank-based determinant caps match their formulas") {
  const int r = 3, T = 50;
  const double lambda = 1.0, ck = 1.0;
  const double lnT = std::log(static_cast<double>(T));
  const double manual =
      r * std::log(2.0 * T * (2.0 * (T + 1) * ck + r * lambda - r * lambda * lnT) /
                   (r * lambda));
  CHECK(effective_rank_det_bound(r, T, lambda, ck) == doctest::Approx(manual).epsilon(1e-12));

  CHECK(rank_product_det_bound(2, 7, 50, 1.0, 1.0) ==
        doctest::Approx(14.0 * std::log(52.0)).epsilon(1e-12));

  CHECK_THROWS_AS(effective_rank_det_bound(0, 50, 1.0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(rank_product_det_bound(0, 1, 50, 1.0, 1.0), std::invalid_argument);
}

TEST_CASE("width lower bound formula and its positive instance") {
  // n = 1, ck = 1, top coupling eigenvalue 3 (fully coupled three arms),
  // lambda = 1, kself = 1: (4*3 + 1)/(3 + 2)^2 * 2 - 1 = 1/25.
  CHECK(width_lower_bound_value(1, 1.0, 3.0, 1.0, 1.0) == doctest::Approx(0.04).epsilon(1e-12));
  // Large per-arm counts push the bound vacuously negative.
  CHECK(width_lower_bound_value(50, 1.0, 3.0, 1.0, 1.0) < 0.0);
  CHECK_THROWS_AS(width_lower_bound_value(0, 1.0, 1.0, 1.0, 1.0), std::invalid_argument);
}

TEST_CASE("majorization partial sums on the coupling family spectra") {
  const Vector strong = psd_eigenvalues(parametric_task_matrix(0.8, 3));
  const Vector weak = psd_eigenvalues(parametric_task_matrix(0.2, 3));
  CHECK(strong(0) == doctest::Approx(2.6));
  CHECK(strong(1) == doctest::Approx(0.2));
  CHECK(strong(2) == doctest::Approx(0.2));
  CHECK(weak(0) == doctest::Approx(1.4));
  CHECK(weak(1) == doctest::Approx(0.8));
  CHECK(weak(2) == doctest::Approx(0.8));

  CHECK(majorizes(strong, weak));
  CHECK(!majorizes(weak, strong));
  CHECK(majorizes(strong, strong));
  // Unequal totals are not comparable.
  CHECK(!majorizes(vecd({3, 1}), vecd({1, 1})));
}

TEST_CASE("balanced product gram equals the interleaved history spectrum") {
  std::mt19937_64 rng(77);
  const int N = 3, n = 2;
  const KernelSpec kx = KernelSpec::gaussian(0.9);
  const TaskSimilarity ts = TaskSimilarity::parametric(0.6, N);

  // Per-arm contexts; the history interleaves them arm 1,2,3,1,2,3.
  std::vector<std::vector<Vector>> xs(N);
  for (int a = 0; a < N; ++a)
    for (int i = 0; i < n; ++i) xs[static_cast<std::size_t>(a)].push_back(
        oracle::random_vector(2, rng));

  std::vector<AugmentedContext> interleaved;
  for (int i = 0; i < n; ++i)
    for (int a = 0; a < N; ++a)
      interleaved.push_back({ArmDescriptor::arm(a + 1), xs[static_cast<std::size_t>(a)][static_cast<std::size_t>(i)]});
  const Matrix direct = gram_matrix(ts, kx, interleaved);

  std::vector<Vector> arm_major;
  for (int a = 0; a < N; ++a)
    for (int i = 0; i < n; ++i) arm_major.push_back(xs[static_cast<std::size_t>(a)][static_cast<std::size_t>(i)]);
  const Matrix rearranged =
      balanced_product_gram(ts.matrix(), context_gram_matrix(kx, arm_major), n);

  const Vector e1 = psd_eigenvalues(direct);
  const Vector e2 = psd_eigenvalues(rearranged);
  REQUIRE(e1.size() == e2.size());
  for (int i = 0; i < e1.size(); ++i) CHECK(e1(i) == doctest::Approx(e2(i)).epsilon(1e-10));
}

TEST_CASE("coupling sweep: the information term never grows with similarity") {
  std::mt19937_64 rng(88);
  const Matrix kx_r = oracle::random_psd(6, rng, 0.1);
  const std::vector<double> grid = {0.0, 0.5, 1.0};
  for (const DiagnosticRecord& rec : similarity_sweep_monotonicity_check(kx_r, 2, 3, 1.0, grid))
    CHECK(rec.pass);

  // Equal couplings give equal information terms.
  const Matrix a = balanced_product_gram(parametric_task_matrix(0.4, 3), kx_r, 2);
  const Matrix b = balanced_product_gram(parametric_task_matrix(0.4, 3), kx_r, 2);
  CHECK(log_det_ratio(a, 1.0) == log_det_ratio(b, 1.0));

  CHECK_THROWS_AS(similarity_sweep_monotonicity_check(kx_r, 2, 3, 1.0, {0.5}),
                  std::invalid_argument);
  CHECK_THROWS_AS(similarity_sweep_monotonicity_check(kx_r, 2, 3, 1.0, {0.7, 0.1}),
                  std::invalid_argument);
}

TEST_CASE("width bounds check: cap, positive floor, and the fault hook") {
  // Three fully coupled single-pull arms at one shared context: the squared
  // width at every training point is 1/4, the cap 1, and the floor 1/25.
  const Matrix ktilde = Matrix::Ones(3, 3);
  const Matrix kz = Matrix::Ones(3, 3);
  const std::vector<DiagnosticRecord> records = width_bounds_check(ktilde, kz, 1.0, 1.0, 1);
  REQUIRE(!records.empty());
  bool saw_floor = false;
  for (const DiagnosticRecord& rec : records) {
    CHECK(rec.pass);
    if (rec.name.find("width_floor") != std::string::npos) {
      saw_floor = true;
      CHECK(rec.lhs == doctest::Approx(0.04).epsilon(1e-9));
      CHECK(rec.rhs == doctest::Approx(0.25).epsilon(1e-9));
    } else {
      CHECK(rec.lhs == doctest::Approx(0.25).epsilon(1e-9));
      CHECK(rec.rhs == doctest::Approx(1.0));
    }
  }
  CHECK(saw_floor);

  // Shifting the measured widths by lambda must trip the cap.
  bool any_fail = false;
  for (const DiagnosticRecord& rec : width_bounds_check(ktilde, kz, 1.0, 1.0, 1, 1.0))
    if (!rec.pass) any_fail = true;
  CHECK(any_fail);
}

TEST_CASE("width floor shrinks as the coupling grows") {
  const std::vector<double> grid = {0.0, 0.25, 0.5, 0.75, 1.0};
  for (const DiagnosticRecord& rec :
       width_lower_bound_mu_sweep(3, 2, 1.0, 1.0, 1.0, grid))
    CHECK(rec.pass);
}

TEST_CASE("spectral run diagnostics pass on a seeded episode") {
  SyntheticNewsEnv env({}, 321);
  PolicyConfig cfg;
  cfg.similarity = TaskSimilarity::Mode::Known;
  cfg.known_similarity = env.known_task_similarity(0.3).matrix();
  cfg.beta = default_beta(40, 5, 0.05, 1.0, 1.0);
  KmtlUcbPolicy policy("kmtl-ucb", 5, cfg);
  const EpisodeResult episode = run_episode(env, policy, 40);

  const std::vector<DiagnosticRecord> records = spectral_run_diagnostics(
      episode.history, *policy.task_similarity(), cfg.context_kernel, 1.0, 0.05, 1.0,
      episode.cum_regret(39), 40);
  REQUIRE(records.size() == 3);
  for (const DiagnosticRecord& rec : records) {
    INFO(rec.name << ": " << rec.lhs << " vs " << rec.rhs);
    CHECK(rec.pass);
  }
}

TEST_CASE("aggregation: mean, sample deviation, and the confidence band") {
  const Vector t1 = vecd({1, 2, 3});
  const AggregateSummary single = aggregate_runs({t1});
  CHECK((single.mean - t1).cwiseAbs().maxCoeff() == 0.0);
  CHECK(single.stddev.cwiseAbs().maxCoeff() == 0.0);
  CHECK((single.ci_lo - t1).cwiseAbs().maxCoeff() == 0.0);

  const AggregateSummary constant = aggregate_runs({t1, t1});
  CHECK(constant.stddev.cwiseAbs().maxCoeff() == 0.0);

  const Vector t2 = vecd({3, 4, 5});
  const AggregateSummary pair = aggregate_runs({t1, t2});
  CHECK(pair.mean(0) == doctest::Approx(2.0));
  CHECK(pair.mean(1) == doctest::Approx(3.0));
  CHECK(pair.mean(2) == doctest::Approx(4.0));
  for (int i = 0; i < 3; ++i) CHECK(pair.stddev(i) == doctest::Approx(std::sqrt(2.0)));
  // Band: mean +- 2 * std / sqrt(2) = mean +- 2.
  CHECK(pair.ci_lo(0) == doctest::Approx(0.0));
  CHECK(pair.ci_hi(0) == doctest::Approx(4.0));

  CHECK_THROWS_AS(aggregate_runs({}), std::invalid_argument);
  CHECK_THROWS_AS(aggregate_runs({t1, vecd({1, 2})}), std::invalid_argument);
}
