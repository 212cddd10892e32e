#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "lfp/simulation.hpp"
#include "oracles.hpp"

using namespace lfp;

TEST_CASE("fourier basis columns are orthonormal on their domain") {
  SUBCASE("unit domain, fine quadrature") {
    const Vector nodes = Vector::LinSpaced(401, 0.0, 1.0);
    const QuadratureRule quad = QuadratureRule::trapezoid(0.0, 1.0, 401);
    const Matrix b = fourier_basis(nodes, 0.0, 1.0, 5);
    const Matrix gram = b.transpose() * quad.weights.asDiagonal() * b;
    CHECK((gram - Matrix::Identity(5, 5)).cwiseAbs().maxCoeff() < 1e-10);
  }
  SUBCASE("constant column carries the domain length") {
    const Vector nodes = Vector::LinSpaced(7, 2.0, 5.0);
    const Matrix b = fourier_basis(nodes, 2.0, 5.0, 3);
    for (Index g = 0; g < 7; ++g)
      CHECK(b(g, 0) == doctest::Approx(1.0 / std::sqrt(3.0)).epsilon(1e-14));
  }
  SUBCASE("columns alternate sine and cosine of increasing frequency") {
    Vector nodes(1);
    nodes << 0.3;
    const Matrix b = fourier_basis(nodes, 0.0, 1.0, 5);
    const double amp = std::sqrt(2.0);
    const double tau = 2.0 * std::numbers::pi;
    CHECK(b(0, 1) == doctest::Approx(amp * std::sin(tau * 0.3)).epsilon(1e-14));
    CHECK(b(0, 2) == doctest::Approx(amp * std::cos(tau * 0.3)).epsilon(1e-14));
    CHECK(b(0, 3) == doctest::Approx(amp * std::sin(2.0 * tau * 0.3)).epsilon(1e-14));
    CHECK(b(0, 4) == doctest::Approx(amp * std::cos(2.0 * tau * 0.3)).epsilon(1e-14));
  }
  SUBCASE("guards") {
    const Vector nodes = Vector::LinSpaced(5, 0.0, 1.0);
    CHECK_THROWS_AS(fourier_basis(nodes, 0.0, 1.0, 0), ConfigError);
    CHECK_THROWS_AS(fourier_basis(nodes, 1.0, 1.0, 3), ConfigError);
  }
}

TEST_CASE("noiseless dense generation reproduces the truth verbatim") {
  SimConfig cfg;  // defaults: n=100, rank 3, dims {10}, grid 30
  cfg.sigma2 = 0.0;
  auto [data, truth] = generate(cfg);

  CHECK(data.samples.size() == 100);
  CHECK(truth.grid.size() == 30);
  CHECK((truth.grid - Vector::LinSpaced(30, 0.0, 1.0)).cwiseAbs().maxCoeff() < 1e-15);
  CHECK(truth.phi.rows() == 30);
  CHECK(truth.phi.cols() == 3);
  REQUIRE(truth.factors.size() == 1);
  CHECK(truth.factors[0].rows() == 10);
  CHECK(truth.scores.rows() == 100);

  for (size_t i = 0; i < data.samples.size(); ++i) {
    const auto& s = data.samples[i];
    CHECK(s.num_times() == 30);
    CHECK(s.values.cols() == 10);
    CHECK(s.mask.all());
    CHECK((s.values - truth.trajectories[i]).cwiseAbs().maxCoeff() == 0.0);
    for (Index k = 0; k < 30; ++k)
      CHECK(s.times[static_cast<size_t>(k)] == truth.grid[k]);
  }
}

TEST_CASE("generated truth satisfies its structural conventions") {
  SimConfig cfg;
  cfg.n = 5;
  cfg.rank = 3;
  cfg.dims = {4, 3};
  cfg.grid_size = 25;
  cfg.sigma2 = 0.0;
  cfg.seed = 7;
  auto [data, truth] = generate(cfg);

  SUBCASE("component functions come from the coefficient matrix") {
    const Matrix basis = fourier_basis(truth.grid, 0.0, 1.0, 5);
    CHECK((truth.phi - basis * truth.phi_coeff).cwiseAbs().maxCoeff() < 1e-14);
  }
  SUBCASE("unit quadrature norms and a positive leading entry") {
    const QuadratureRule quad = QuadratureRule::trapezoid(truth.grid);
    for (Index r = 0; r < 3; ++r) {
      const double norm2 = truth.phi.col(r).dot(quad.weights.asDiagonal() * truth.phi.col(r));
      CHECK(norm2 == doctest::Approx(1.0).epsilon(1e-12));
      CHECK(truth.phi(0, r) >= 0.0);
    }
  }
  SUBCASE("factor columns are unit length with non-negative entries") {
    for (const Matrix& a : truth.factors)
      for (Index r = 0; r < 3; ++r) {
        CHECK(a.col(r).norm() == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(a.col(r).minCoeff() >= 0.0);
      }
  }
  SUBCASE("default score covariance is descending squared ranks") {
    Vector want(3);
    want << 9.0, 4.0, 1.0;
    CHECK((truth.lambda - Matrix(want.asDiagonal())).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("trajectories follow the entrywise component formula") {
    for (Index i = 0; i < 5; ++i) {
      const Matrix& x = truth.trajectories[static_cast<size_t>(i)];
      oracle::for_each_index(cfg.dims, [&](const std::vector<Index>& idx) {
        const Index j = oracle::flat_index(idx, cfg.dims);
        for (Index g = 0; g < 25; ++g) {
          double want = 0.0;
          for (Index r = 0; r < 3; ++r)
            want += truth.scores(i, r) * truth.phi(g, r) *
                    oracle::chain_entry(truth.factors, idx, r);
          CHECK(x(g, j) == doctest::Approx(want).epsilon(1e-12));
        }
      });
    }
  }
}

TEST_CASE("drawn scores follow the prescribed covariance law") {
  SimConfig cfg;
  cfg.n = 10000;
  cfg.rank = 2;
  cfg.dims = {2};
  cfg.grid_size = 8;
  cfg.sigma2 = 0.0;
  cfg.seed = 1;
  auto [data, truth] = generate(cfg);
  Vector want(2);
  want << 4.0, 1.0;
  for (Index r = 0; r < 2; ++r) {
    const double mean = truth.scores.col(r).mean();
    const double var = (truth.scores.col(r).array() - mean).square().mean();
    CHECK(std::abs(var - want[r]) < 0.05 * want[r]);
    CHECK(std::abs(mean) < 0.1 * std::sqrt(want[r]));
  }
}

TEST_CASE("a custom score spectrum is honored and validated") {
  SimConfig cfg;
  cfg.n = 3;
  cfg.rank = 2;
  cfg.dims = {2};
  cfg.grid_size = 10;
  cfg.sigma2 = 0.0;
  cfg.lambda_diag = Vector(2);
  cfg.lambda_diag << 2.5, 0.5;
  auto [data, truth] = generate(cfg);
  CHECK(truth.lambda(0, 0) == 2.5);
  CHECK(truth.lambda(1, 1) == 0.5);

  SUBCASE("wrong length") {
    cfg.lambda_diag = Vector::Ones(3);
    CHECK_THROWS_AS(generate(cfg), ConfigError);
  }
  SUBCASE("not descending") {
    cfg.lambda_diag << 0.5, 2.5;
    CHECK_THROWS_AS(generate(cfg), ConfigError);
  }
  SUBCASE("non-positive entry") {
    cfg.lambda_diag << 2.5, 0.0;
    CHECK_THROWS_AS(generate(cfg), ConfigError);
  }
}

TEST_CASE("the signal-to-noise knob rescales signal, scores, and spectrum together") {
  SimConfig cfg;
  cfg.n = 12;
  cfg.rank = 2;
  cfg.dims = {3};
  cfg.grid_size = 15;
  cfg.sigma2 = 0.25;
  cfg.seed = 11;
  auto [d0, t0] = generate(cfg);

  double ss = 0.0;
  for (const auto& x : t0.trajectories) ss += x.squaredNorm();
  const double rms = std::sqrt(ss / (12.0 * 15.0 * 3.0));
  const double target = 1.5;
  const double c = target * std::sqrt(cfg.sigma2) / rms;

  cfg.snr = target;
  auto [d1, t1] = generate(cfg);

  CHECK((t1.scores - c * t0.scores).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((t1.lambda - c * c * t0.lambda).cwiseAbs().maxCoeff() < 1e-12);
  double ss1 = 0.0;
  for (size_t i = 0; i < 12; ++i) {
    CHECK((t1.trajectories[i] - c * t0.trajectories[i]).cwiseAbs().maxCoeff() < 1e-12);
    ss1 += t1.trajectories[i].squaredNorm();
  }
  CHECK(std::sqrt(ss1 / (12.0 * 15.0 * 3.0)) ==
        doctest::Approx(target * std::sqrt(cfg.sigma2)).epsilon(1e-10));
  // the scaling consumes no randomness, so the noise draws are unchanged
  for (size_t i = 0; i < 12; ++i)
    CHECK(((d1.samples[i].values - t1.trajectories[i]) -
           (d0.samples[i].values - t0.trajectories[i]))
              .cwiseAbs()
              .maxCoeff() < 1e-14);
}

TEST_CASE("sparsification removes the exact global quota") {
  SimConfig cfg;
  cfg.n = 20;
  cfg.rank = 2;
  cfg.dims = {4};
  cfg.grid_size = 12;
  cfg.sparsity = 0.4;
  cfg.seed = 3;
  auto [data, truth] = generate(cfg);
  const Index total = 20 * 12 * 4;
  CHECK(data.total_observed() == total - static_cast<Index>(std::floor(0.4 * total)));
  for (const auto& s : data.samples) {
    Index occupied = 0;
    for (Index k = 0; k < s.num_times(); ++k)
      if (s.mask.row(k).any()) ++occupied;
    CHECK(occupied >= 2);
  }
  data.validate();
}

TEST_CASE("generation is a pure function of its config") {
  SimConfig cfg;
  cfg.n = 6;
  cfg.rank = 2;
  cfg.dims = {3};
  cfg.grid_size = 10;
  cfg.sparsity = 0.3;
  cfg.seed = 17;
  auto [d1, t1] = generate(cfg);
  auto [d2, t2] = generate(cfg);
  CHECK((t1.scores - t2.scores).cwiseAbs().maxCoeff() == 0.0);
  for (size_t i = 0; i < 6; ++i) {
    CHECK((d1.samples[i].values - d2.samples[i].values).cwiseAbs().maxCoeff() == 0.0);
    CHECK(d1.samples[i].mask == d2.samples[i].mask);
  }
  cfg.seed = 18;
  auto [d3, t3] = generate(cfg);
  CHECK((d1.samples[0].values - d3.samples[0].values).cwiseAbs().maxCoeff() > 1e-6);
}

TEST_CASE("unstructured generation leaves the component fields empty") {
  SimConfig cfg;
  cfg.n = 4;
  cfg.rank = 3;
  cfg.dims = {2, 2};
  cfg.grid_size = 14;
  cfg.sigma2 = 0.0;
  cfg.low_rank = false;
  cfg.misspec_order = 2;
  auto [data, truth] = generate(cfg);
  CHECK_FALSE(truth.low_rank);
  CHECK(truth.phi.cols() == 0);
  CHECK(truth.lambda.size() == 0);
  CHECK(truth.scores.cols() == 0);
  CHECK(truth.trajectories.size() == 4);
  // per-entry curves are independent draws, not a shared rank structure
  const Matrix& x = truth.trajectories[0];
  CHECK((x.col(0) - x.col(1)).cwiseAbs().maxCoeff() > 1e-3);
  data.validate();
}

TEST_CASE("rmse agrees with the elementwise definition") {
  std::mt19937_64 rng(301);
  std::vector<Matrix> a = {oracle::gauss_matrix(4, 3, rng), oracle::gauss_matrix(4, 3, rng)};

  SUBCASE("identical inputs score zero") { CHECK(rmse(a, a) == 0.0); }
  SUBCASE("a constant offset scores the offset") {
    std::vector<Matrix> b = a;
    for (auto& m : b) m.array() += 0.75;
    CHECK(rmse(a, b) == doctest::Approx(0.75).epsilon(1e-14));
  }
  SUBCASE("random pair matches a loop oracle") {
    std::vector<Matrix> b = {oracle::gauss_matrix(4, 3, rng), oracle::gauss_matrix(4, 3, rng)};
    double ss = 0.0;
    for (size_t i = 0; i < 2; ++i)
      for (Index r = 0; r < 4; ++r)
        for (Index c = 0; c < 3; ++c) ss += std::pow(a[i](r, c) - b[i](r, c), 2);
    CHECK(rmse(a, b) == doctest::Approx(std::sqrt(ss / 24.0)).epsilon(1e-14));
  }
  SUBCASE("guards") {
    std::vector<Matrix> shorter = {a[0]};
    CHECK_THROWS_AS(rmse(a, shorter), ConfigError);
    CHECK_THROWS_AS(rmse({}, {}), ConfigError);
    std::vector<Matrix> misshaped = {a[0], oracle::gauss_matrix(3, 3, rng)};
    CHECK_THROWS_AS(rmse(a, misshaped), ConfigError);
  }
}

TEST_CASE("the maximum principal angle measures subspace separation") {
  std::mt19937_64 rng(302);
  const Index g = 301;
  const QuadratureRule quad = QuadratureRule::trapezoid(0.0, 2.0 * std::numbers::pi, g);
  const Vector nodes = quad.nodes;

  SUBCASE("identical subspaces meet at angle zero") {
    Matrix u = oracle::gauss_matrix(g, 2, rng);
    CHECK(max_principal_angle(u, u, quad) < 1e-7);
  }
  SUBCASE("sine and cosine are orthogonal over a full period") {
    Matrix u(g, 1);
    Matrix v(g, 1);
    for (Index k = 0; k < g; ++k) {
      u(k, 0) = std::sin(nodes[k]);
      v(k, 0) = std::cos(nodes[k]);
    }
    CHECK(max_principal_angle(u, v, quad) == doctest::Approx(std::numbers::pi / 2).epsilon(1e-6));
  }
  SUBCASE("invariant under invertible recombination of either basis") {
    Matrix u = oracle::gauss_matrix(g, 2, rng);
    Matrix v = oracle::gauss_matrix(g, 2, rng);
    Matrix t(2, 2);
    t << 2.0, -1.0, 0.5, 3.0;
    CHECK(max_principal_angle(u * t, u, quad) < 1e-7);
    CHECK(max_principal_angle(u * t, v, quad) ==
          doctest::Approx(max_principal_angle(u, v, quad)).epsilon(1e-9));
    const double angle = max_principal_angle(u, v, quad);
    CHECK(angle >= 0.0);
    CHECK(angle <= std::numbers::pi / 2);
  }
  SUBCASE("guards") {
    Matrix u = oracle::gauss_matrix(g, 2, rng);
    CHECK_THROWS_AS(max_principal_angle(u, Matrix(g, 0), quad), ConfigError);
    CHECK_THROWS_AS(max_principal_angle(u, oracle::gauss_matrix(g - 1, 2, rng), quad),
                    ConfigError);
  }
}

TEST_CASE("the benchmark emits one row per method and metric") {
  BenchmarkConfig cfg;
  cfg.base.n = 12;
  cfg.base.dims = {2};
  cfg.base.grid_size = 10;
  cfg.base.sigma2 = 0.5;
  cfg.cells = {{1, 0.0, 0.0}};
  cfg.repeats = 1;
  cfg.seed = 5;
  cfg.workers = 1;
  cfg.fit.cov.grid_size = 10;
  cfg.fit.cov.workers = 1;

  std::vector<BenchmarkRow> rows = run_benchmark(cfg);
  REQUIRE(rows.size() == 4);
  CHECK(rows[0].method == "lf-parafac");
  CHECK(rows[0].metric == "rmse");
  CHECK(rows[1].method == "lf-parafac");
  CHECK(rows[1].metric == "angle");
  CHECK(rows[2].method == "cpd");
  CHECK(rows[2].metric == "rmse");
  CHECK(rows[3].method == "cpd");
  CHECK(rows[3].metric == "angle");
  for (const auto& row : rows) {
    CHECK(row.status == "ok");
    CHECK(std::isfinite(row.value));
    CHECK(row.value >= 0.0);
    CHECK(row.rank == 1);
    CHECK(row.sparsity == 0.0);
    CHECK(row.snr == 0.0);
    CHECK(row.repeat == 0);
  }

  SUBCASE("seeded reruns and worker counts never change the table") {
    std::vector<BenchmarkRow> again = run_benchmark(cfg);
    cfg.workers = 3;
    std::vector<BenchmarkRow> parallel = run_benchmark(cfg);
    REQUIRE(again.size() == rows.size());
    REQUIRE(parallel.size() == rows.size());
    for (size_t i = 0; i < rows.size(); ++i) {
      CHECK(again[i].value == rows[i].value);
      CHECK(parallel[i].value == rows[i].value);
      CHECK(again[i].status == rows[i].status);
    }
  }
  SUBCASE("repeats multiply the rows and are labeled") {
    cfg.repeats = 2;
    std::vector<BenchmarkRow> two = run_benchmark(cfg);
    REQUIRE(two.size() == 8);
    CHECK(two[0].repeat == 0);
    CHECK(two[4].repeat == 1);
    CHECK(two[0].value != two[4].value);  // different draw per repeat
  }
  SUBCASE("unstructured truth has no angle metric") {
    cfg.base.low_rank = false;
    std::vector<BenchmarkRow> rows_m = run_benchmark(cfg);
    REQUIRE(rows_m.size() == 2);
    CHECK(rows_m[0].metric == "rmse");
    CHECK(rows_m[1].metric == "rmse");
  }
  SUBCASE("a method failure becomes an explicit failed row") {
    cfg.fit.cov.min_pair_count = 100000;
    std::vector<BenchmarkRow> rows_f = run_benchmark(cfg);
    REQUIRE(rows_f.size() == 4);
    CHECK(rows_f[0].status.rfind("failed:", 0) == 0);
    CHECK(std::isnan(rows_f[0].value));
    CHECK(rows_f[2].status == "ok");  // the grid baseline needs no covariance field
    CHECK(std::isfinite(rows_f[2].value));
  }
  SUBCASE("guards") {
    cfg.cells.clear();
    CHECK_THROWS_AS(run_benchmark(cfg), ConfigError);
    cfg.cells = {{1, 0.0, 0.0}};
    cfg.repeats = 0;
    CHECK_THROWS_AS(run_benchmark(cfg), ConfigError);
  }
}

TEST_CASE("generation rejects malformed configurations") {
  SimConfig ok;
  ok.n = 4;
  ok.dims = {2};
  ok.grid_size = 8;
  auto bad = [&](auto&& tweak) {
    SimConfig c = ok;
    tweak(c);
    CHECK_THROWS_AS(generate(c), ConfigError);
  };
  bad([](SimConfig& c) { c.n = 0; });
  bad([](SimConfig& c) { c.rank = 0; });
  bad([](SimConfig& c) { c.dims = {}; });
  bad([](SimConfig& c) { c.dims = {0}; });
  bad([](SimConfig& c) { c.grid_size = 1; });
  bad([](SimConfig& c) { c.domain_hi = c.domain_lo; });
  bad([](SimConfig& c) { c.fourier_size = 0; });
  bad([](SimConfig& c) { c.sigma2 = -1.0; });
  bad([](SimConfig& c) { c.snr = -0.5; });
  bad([](SimConfig& c) { c.sparsity = 1.0; });
  bad([](SimConfig& c) { c.misspec_order = 0; });
}
