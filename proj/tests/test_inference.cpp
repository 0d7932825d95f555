#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "apcde/inference.hpp"
#include "oracles.hpp"
#include "test_helpers.hpp"

using namespace apcde;
using helpers::make_random_model;
using helpers::randomize_head;
using helpers::trained_2d;

namespace {
Model identity_with_head(int p, HeadSpec head, std::vector<ZpSpec> zp = {}) {
  ArchConfig arch;
  arch.p = p;
  arch.levels = 1;
  arch.depth = 1;
  return build_model(arch, {head}, zp, 1, InitKind::identity);
}
}  // namespace

TEST_CASE("embed on the identity model extracts the layout blocks") {
  HeadSpec head;
  head.kind = HeadKind::categorical;
  head.K = 2;
  head.d = 2;
  Model m = identity_with_head(4, head, {{1, 0, 2}});
  Tensor y = Tensor::vec({1.5, -2.5, 3.5, 4.5});
  Embedding emb = embed(m, y);
  REQUIRE(emb.zp.size() == 1);
  CHECK(emb.zp[0][0] == 1.5);
  CHECK(emb.zp[0][1] == -2.5);
  CHECK(emb.zn[0] == 3.5);
  CHECK(emb.zn[1] == 4.5);
  CHECK(emb.zp[0].size() + emb.zn.size() == 4);
}

TEST_CASE("embed inverts generate on a random model") {
  HeadSpec head;
  head.kind = HeadKind::categorical;
  head.K = 3;
  head.d = 2;
  Model m = make_random_model(8, 2, 2, CouplingVariant::affine, 31, {head}, {});
  Rng rng(37);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor z = rng.normal_vec(8);
    Embedding emb = embed(m, flow_inverse(m.flow, m.store, z));
    LatentParts parts = latent_partition(m.flow.layout, z);
    for (std::size_t i = 0; i < 2; ++i)
      CHECK(std::abs(emb.zp[0][i] - parts.zp[0][i]) < 1e-6);
    for (std::size_t i = 0; i < emb.zn.size(); ++i)
      CHECK(std::abs(emb.zn[i] - parts.zn[i]) < 1e-6);
  }
}

TEST_CASE("log densities on the identity model") {
  HeadSpec head;
  head.kind = HeadKind::categorical;
  head.K = 2;
  head.d = 1;
  Model m = identity_with_head(2, head);
  Rng rng(41);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor y = rng.normal_vec(2);
    CHECK(log_marg_density(m, y) == doctest::Approx(log_std_normal(y)).epsilon(1e-13));

    // beta = 0: conditioning on x changes nothing
    Rng mc(43);
    CHECK(log_cond_density(m, y, {1.0}, mc) ==
          doctest::Approx(log_marg_density(m, y)).epsilon(1e-12));
  }

  // hand-assembled conditional for a nonzero 1-D logistic head
  m.store.value(m.base.heads[0].beta) = Tensor::matrix(1, 1, {0.9});
  const std::uint64_t kSeed = 47;
  Tensor y = Tensor::vec({0.3, -1.1});
  Rng mc(kSeed);
  double lc = log_cond_density(m, y, {1.0}, mc);
  Rng mc2(kSeed);
  double marg = log_marginal(m.base.heads[0], m.store, {1, {}}, m.base.mc_samples, mc2);
  double expect = log_std_normal(y) +
                  loglik_head(m.base.heads[0], m.store, {1, {}}, Tensor::vec({0.3})) - marg;
  CHECK(lc == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("marginal density is invariant to the head tempering") {
  const helpers::Trained2d& fx = trained_2d();
  Model copy = model_from_checkpoint(checkpoint_from_model(fx.model, {}, {}, {}, {}));
  Tensor y = fx.test_data.row_y(0);
  double base = log_marg_density(fx.model, y);
  for (double lambda : {10.0, 1000.0}) {
    copy.base.heads[0].spec.lambda = lambda;
    CHECK(log_marg_density(copy, y) == base);
  }
}

TEST_CASE("bits_per_dim conventions") {
  HeadSpec head;
  head.kind = HeadKind::categorical;
  head.K = 2;
  head.d = 1;
  Model m = identity_with_head(2, head);
  Tensor zero = Tensor::vec({0.0, 0.0});

  // per-dimension value of the standard normal at the origin
  CHECK(bits_per_dim(m, zero, 1.0) ==
        doctest::Approx(0.5 * std::log2(2.0 * M_PI)).epsilon(1e-12));
  CHECK(bits_per_dim(m, zero, 1.0) == doctest::Approx(1.325748).epsilon(1e-6));

  // divisor 256 adds exactly 8 bits per dimension
  CHECK(bits_per_dim(m, zero, 256.0) - bits_per_dim(m, zero, 1.0) ==
        doctest::Approx(8.0).epsilon(1e-12));

  // nats flag: natural-log convention for both terms
  CHECK(bits_per_dim(m, zero, 1.0, true) ==
        doctest::Approx(0.5 * std::log(2.0 * M_PI)).epsilon(1e-12));
  CHECK_THROWS_AS(bits_per_dim(m, zero, 0.0), ArgumentError);
}

TEST_CASE("classify argmax, ties and tempering invariance") {
  // beta = 0: full tie, lowest class wins with the flag set
  HeadSpec head;
  head.kind = HeadKind::categorical;
  head.K = 4;
  head.d = 1;
  Model m = identity_with_head(2, head);
  Classified all_tied = classify(m, Tensor::vec({0.7, 0.1}));
  CHECK(all_tied.label == 1);
  CHECK(all_tied.tie);

  // logits (0.2, 1.7, -3, 0): argmax is class 2
  HeadSpec with_intercept = head;
  with_intercept.free_intercept = true;
  Model m2 = identity_with_head(2, with_intercept);
  m2.store.value(m2.base.heads[0].beta0) = Tensor::vec({0.2, 1.7, -3.0});
  Classified second = classify(m2, Tensor::vec({0.0, 0.0}));
  CHECK(second.label == 2);
  CHECK_FALSE(second.tie);

  // rescaling lambda (and beta proportionally) never moves the argmax
  const helpers::Trained2d& fx = trained_2d();
  Model copy = model_from_checkpoint(checkpoint_from_model(fx.model, {}, {}, {}, {}));
  for (int i = 0; i < 50; ++i) {
    Tensor y = fx.test_data.row_y(i);
    int base_label = classify(fx.model, y).label;
    for (double lambda : {10.0, 1000.0}) {
      copy.base.heads[0].spec.lambda = lambda;
      copy.store.value(copy.base.heads[0].beta) =
          scale(fx.model.store.value(fx.model.base.heads[0].beta), lambda);
      CHECK(classify(copy, y).label == base_label);
    }
  }

  HeadSpec lin;
  lin.kind = HeadKind::linear_gaussian;
  Model no_cat = identity_with_head(2, lin);
  CHECK_THROWS_AS(classify(no_cat, Tensor::vec({0.0, 0.0})), ConfigError);
}

TEST_CASE("sample_uncond through the identity model is standard normal") {
  HeadSpec head;
  head.kind = HeadKind::categorical;
  head.K = 2;
  head.d = 1;
  Model m = identity_with_head(2, head);
  Rng rng(53);
  std::vector<Tensor> samples = sample_uncond(m, 10000, rng);
  REQUIRE(samples.size() == 10000);
  REQUIRE(samples[0].size() == 2);

  for (int dim = 0; dim < 2; ++dim) {
    std::vector<double> coords(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) coords[i] = samples[i][dim];
    // 1% critical value of the Kolmogorov-Smirnov statistic
    CHECK(oracles::ks_statistic_normal(coords) < 1.628 / std::sqrt(10000.0));
  }

  Rng rng2(53);
  std::vector<Tensor> again = sample_uncond(m, 10, rng2);
  Rng rng3(53);
  std::vector<Tensor> again2 = sample_uncond(m, 10, rng3);
  for (int i = 0; i < 10; ++i)
    for (int j = 0; j < 2; ++j) CHECK(again[i][j] == again2[i][j]);
}

TEST_CASE("generate_fixed_zp holds the predictive block fixed") {
  HeadSpec head;
  head.kind = HeadKind::categorical;
  head.K = 2;
  head.d = 2;
  Model m = identity_with_head(4, head, {{1, 0, 2}});
  Rng rng(59);
  std::vector<Tensor> zp{Tensor::vec({0.8, -0.4})};
  std::vector<Tensor> out = generate_fixed_zp(m, zp, 5, rng);
  REQUIRE(out.size() == 5);
  for (const Tensor& y : out) {
    CHECK(y[0] == 0.8);
    CHECK(y[1] == -0.4);
  }
  // distinct z_N draws differ
  CHECK(out[0][2] != out[1][2]);

  // on a random model the embedding recovers the fixed block
  HeadSpec head2;
  head2.kind = HeadKind::categorical;
  head2.K = 2;
  head2.d = 2;
  Model r = make_random_model(8, 2, 2, CouplingVariant::additive, 61, {head2}, {});
  std::vector<Tensor> zp2{Tensor::vec({0.3, 1.2})};
  std::vector<Tensor> gen = generate_fixed_zp(r, zp2, 10, rng);
  for (const Tensor& y : gen) {
    Embedding emb = embed(r, y);
    CHECK(std::abs(emb.zp[0][0] - 0.3) < 1e-6);
    CHECK(std::abs(emb.zp[0][1] - 1.2) < 1e-6);
  }
}

TEST_CASE("Bayes identity with the closed-form linear marginal") {
  HeadSpec lin;
  lin.kind = HeadKind::linear_gaussian;
  lin.m = 2;
  lin.d = 2;
  Model m = make_random_model(4, 1, 2, CouplingVariant::affine, 67, {lin}, {});
  randomize_head(m, 0, 0.6, 71);
  const PredictiveHead& head = m.base.heads[0];

  Rng rng(73);
  for (int trial = 0; trial < 100; ++trial) {
    Tensor y = rng.normal_vec(4);
    std::vector<double> xrow{rng.normal(), rng.normal()};
    Rng mc(79);  // unused: closed form
    double lhs = log_cond_density(m, y, xrow, mc) - log_marg_density(m, y);
    Embedding emb = embed(m, y);
    HeadObs obs{0, Tensor::vec({xrow[0], xrow[1]})};
    double rhs =
        loglik_head(head, m.store, obs, emb.zp[0]) - log_marginal_closed(head, m.store, obs);
    CHECK(std::abs(lhs - rhs) < 1e-8);
  }
}

TEST_CASE("Bayes identity holds with shared Monte-Carlo draws") {
  const helpers::Trained2d& fx = trained_2d();
  Rng rng(83);
  const std::uint64_t kSeed = 89;
  for (int trial = 0; trial < 20; ++trial) {
    Tensor y = fx.test_data.row_y(trial);
    int label = static_cast<int>(fx.test_data.x.at(trial, 0));
    Rng mc(kSeed);
    double lhs = log_cond_density(fx.model, y, {static_cast<double>(label)}, mc) -
                 log_marg_density(fx.model, y);
    Embedding emb = embed(fx.model, y);
    Rng mc2(kSeed);
    double rhs =
        loglik_head(fx.model.base.heads[0], fx.model.store, {label, {}}, emb.zp[0]) -
        log_marginal(fx.model.base.heads[0], fx.model.store, {label, {}},
                     fx.model.base.mc_samples, mc2);
    CHECK(std::abs(lhs - rhs) < 1e-9);
  }
  (void)rng;
}

TEST_CASE("marginal density decomposes over classes") {
  const helpers::Trained2d& fx = trained_2d();
  const PredictiveHead& head = fx.model.base.heads[0];

  // class marginals by the quadrature oracle; at lambda=1 they sum to one
  auto m_of = [&](int k) {
    auto integrand = [&](double t) {
      double phi = std::exp(-0.5 * t * t) / std::sqrt(2.0 * M_PI);
      return phi * std::exp(loglik_head(head, fx.model.store, {k, {}}, Tensor::vec({t})));
    };
    return oracles::adaptive_simpson(integrand, -9.0, 9.0, 1e-12);
  };
  double m1 = m_of(1), m2 = m_of(2);
  CHECK(m1 + m2 == doctest::Approx(1.0).epsilon(1e-9));

  // exact cancellation view: per-class conditionals evaluated with the same
  // MC draws as their class-marginal estimates recompose into the marginal
  for (int trial = 0; trial < 10; ++trial) {
    Tensor y = fx.test_data.row_y(trial);
    double log_my = log_marg_density(fx.model, y);
    std::vector<double> terms;
    for (int k = 1; k <= 2; ++k) {
      Rng mc(300 + k);
      double lc = log_cond_density(fx.model, y, {static_cast<double>(k)}, mc);
      Rng mc2(300 + k);
      double lm = log_marginal(head, fx.model.store, {k, {}}, fx.model.base.mc_samples, mc2);
      terms.push_back(lc + lm);
    }
    CHECK(logsumexp(terms) == doctest::Approx(log_my).epsilon(1e-9));

    // with the quadrature marginals the identity holds to Monte-Carlo noise
    std::vector<double> quad_terms;
    for (int k = 1; k <= 2; ++k) {
      Rng mc(300 + k);
      quad_terms.push_back(std::log(k == 1 ? m1 : m2) +
                           log_cond_density(fx.model, y, {static_cast<double>(k)}, mc));
    }
    CHECK(logsumexp(quad_terms) == doctest::Approx(log_my).epsilon(0.05));
  }
}

TEST_CASE("trained 2-D model: conditionals and marginal integrate to one") {
  const helpers::Trained2d& fx = trained_2d();
  const PredictiveHead& head = fx.model.base.heads[0];
  const double lo = -6.0, hi = 6.0, step = 0.1;
  const int n = static_cast<int>(std::round((hi - lo) / step)) + 1;
  const int kBigM = 1000000;

  auto trapz_weight = [&](int i) { return (i == 0 || i == n - 1) ? 0.5 : 1.0; };

  // one high-precision marginal per class; 1/sqrt(M) noise is then well
  // inside the 0.02 budget
  double marg_k[2];
  for (int k = 1; k <= 2; ++k) {
    Rng mc(120 + k);
    marg_k[k - 1] = log_marginal(head, fx.model.store, {k, {}}, kBigM, mc);
  }

  double marg_mass = 0.0, cond_mass[2] = {0.0, 0.0};
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      Tensor y = Tensor::vec({lo + i * step, lo + j * step});
      double w = trapz_weight(i) * trapz_weight(j) * step * step;
      double lm = log_marg_density(fx.model, y);
      marg_mass += w * std::exp(lm);
      double zp = embed(fx.model, y).zp[0][0];
      for (int k = 1; k <= 2; ++k) {
        double ll = loglik_head(head, fx.model.store, {k, {}}, Tensor::vec({zp}));
        cond_mass[k - 1] += w * std::exp(lm + ll - marg_k[k - 1]);
      }
    }
  CHECK(marg_mass == doctest::Approx(1.0).epsilon(0.02));
  CHECK(cond_mass[0] == doctest::Approx(1.0).epsilon(0.02));
  CHECK(cond_mass[1] == doctest::Approx(1.0).epsilon(0.02));

  // the integrand above is exactly exp(log_cond_density) for the same draws
  Model copy = model_from_checkpoint(checkpoint_from_model(fx.model, {}, {}, {}, {}));
  copy.base.mc_samples = kBigM;
  Rng pick(123);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor y = Tensor::vec({lo + pick.uniform01() * 12.0, lo + pick.uniform01() * 12.0});
    int k = 1 + static_cast<int>(pick.uniform_index(2));
    Rng mc(120 + k);
    double lc = log_cond_density(copy, y, {static_cast<double>(k)}, mc);
    double zp = embed(copy, y).zp[0][0];
    double composed = log_marg_density(copy, y) +
                      loglik_head(head, copy.store, {k, {}}, Tensor::vec({zp})) -
                      marg_k[k - 1];
    CHECK(lc == doctest::Approx(composed).epsilon(1e-10));
  }
}

TEST_CASE("boundary points rank in the lowest density decile") {
  const helpers::Trained2d& fx = trained_2d();
  Dataset big = synth_conditional_mixture(fx.spec, 4000, 601);

  std::vector<double> density(big.n());
  for (int i = 0; i < big.n(); ++i) density[i] = log_marg_density(fx.model, big.row_y(i));
  std::vector<double> sorted = density;
  std::sort(sorted.begin(), sorted.end());
  double decile = sorted[big.n() / 10];

  // the three samples nearest the class-boundary midpoint (the origin)
  std::vector<int> order(big.n());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    auto r2 = [&](int i) {
      double u = big.y.at(i, 0), v = big.y.at(i, 1);
      return u * u + v * v;
    };
    return r2(a) < r2(b);
  });
  for (int rank = 0; rank < 3; ++rank) CHECK(density[order[rank]] < decile);
}

TEST_CASE("density report CSV and thread determinism") {
  const helpers::Trained2d& fx = trained_2d();
  Dataset subset = fx.test_data;

  DensityReport r1 = density_report(fx.model, subset, 1.0, 701, 1, "feedcafe");
  DensityReport r4 = density_report(fx.model, subset, 1.0, 701, 4, "feedcafe");
  REQUIRE(r1.id.size() == static_cast<std::size_t>(subset.n()));
  for (std::size_t i = 0; i < r1.id.size(); ++i) {
    CHECK(r1.log_cond[i] == r4.log_cond[i]);
    CHECK(r1.log_marg[i] == r4.log_marg[i]);
    CHECK(r1.bpd[i] == r4.bpd[i]);
    CHECK(std::isfinite(r1.log_cond[i]));
  }

  auto path = (std::filesystem::temp_directory_path() / "apcde_report.csv").string();
  write_density_csv(r1, path);
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  CHECK(line == "# fingerprint: feedcafe");
  std::getline(in, line);
  CHECK(line == "id,log_cond,log_marg,bpd");
  int rows = 0;
  while (std::getline(in, line))
    if (!line.empty()) ++rows;
  CHECK(rows == subset.n());
}

TEST_CASE("covariate inversion maps targets back through the linear head") {
  HeadSpec lin;
  lin.kind = HeadKind::linear_gaussian;
  lin.m = 1;
  lin.d = 2;
  Model m = identity_with_head(4, lin, {{1, 0, 2}});
  m.store.value(m.base.heads[0].beta) = Tensor::matrix(1, 2, {0.5, -0.25});
  m.store.value(m.base.heads[0].beta0) = Tensor::vec({1.0});

  Tensor zp = zp_for_covariate(m, 0, Tensor::vec({2.0}));
  Tensor mean = add(matvec(m.store.value(m.base.heads[0].beta), zp),
                    m.store.value(m.base.heads[0].beta0));
  CHECK(mean[0] == doctest::Approx(2.0).epsilon(1e-10));
}
