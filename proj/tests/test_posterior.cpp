#include <doctest.h>

#include <cmath>

#include "apcde/posterior.hpp"
#include "oracles.hpp"
#include "test_helpers.hpp"

using namespace apcde;
using helpers::make_random_model;
using helpers::randomize_head;

namespace {
Model categorical_model(int p, int K, int d, double lambda = 1.0,
                        bool free_intercept = false) {
  ArchConfig arch;
  arch.p = p;
  arch.levels = 1;
  arch.depth = 1;
  HeadSpec spec;
  spec.kind = HeadKind::categorical;
  spec.K = K;
  spec.d = d;
  spec.lambda = lambda;
  spec.free_intercept = free_intercept;
  return build_model(arch, {spec}, {}, 1, InitKind::identity);
}

Model linear_model(int p, int m, int d, double lambda = 1.0) {
  ArchConfig arch;
  arch.p = p;
  arch.levels = 1;
  arch.depth = 1;
  HeadSpec spec;
  spec.kind = HeadKind::linear_gaussian;
  spec.m = m;
  spec.d = d;
  spec.lambda = lambda;
  return build_model(arch, {spec}, {}, 1, InitKind::identity);
}

// relative Monte-Carlo standard error of the mean weight, via the
// lambda-doubling identity (doubling lambda squares every weight)
double mc_rel_se(const PredictiveHead& head, const ParamStore& store, const HeadObs& x, int M,
                 std::uint64_t seed) {
  PredictiveHead doubled = head;
  doubled.spec.lambda *= 2.0;
  Rng r1(seed), r2(seed);
  double l1 = log_marginal_mc(head, store, x, M, r1);
  double l2 = log_marginal_mc(doubled, store, x, M, r2);
  return std::sqrt((std::exp(l2 - 2.0 * l1) - 1.0) / static_cast<double>(M));
}
}  // namespace

TEST_CASE("log_std_normal fixed values and additivity") {
  CHECK(log_std_normal(Tensor::vec({0.0, 0.0})) ==
        doctest::Approx(-std::log(2.0 * M_PI)).epsilon(1e-14));
  CHECK(log_std_normal(Tensor::vec({1.0})) ==
        doctest::Approx(-0.5 * std::log(2.0 * M_PI) - 0.5).epsilon(1e-14));
  CHECK(log_std_normal(Tensor::vec({1.0})) == doctest::Approx(-1.418939).epsilon(1e-6));

  Rng rng(3);
  Tensor a = rng.normal_vec(3), b = rng.normal_vec(4);
  CHECK(log_std_normal(concat(a, b)) ==
        doctest::Approx(log_std_normal(a) + log_std_normal(b)).epsilon(1e-13));
}

TEST_CASE("loglik_head categorical") {
  Model m = categorical_model(4, 10, 2);
  const PredictiveHead& head = m.base.heads[0];
  Tensor zp = Tensor::vec({0.4, -0.9});

  // beta = 0: every class has probability 1/K
  CHECK(loglik_head(head, m.store, {3, {}}, zp) ==
        doctest::Approx(std::log(0.1)).epsilon(1e-12));
  CHECK(loglik_head(head, m.store, {3, {}}, zp) == doctest::Approx(-2.302585).epsilon(1e-6));

  // tempering doubles the value exactly
  Model m2 = categorical_model(4, 10, 2, 2.0);
  randomize_head(m, 0, 0.7, 5);
  randomize_head(m2, 0, 0.7, 5);
  double l1 = loglik_head(m.base.heads[0], m.store, {3, {}}, zp);
  double l2 = loglik_head(m2.base.heads[0], m2.store, {3, {}}, zp);
  CHECK(l2 == doctest::Approx(2.0 * l1).epsilon(1e-14));

  // K=2 with logits (1, 0): log softmax_1 = 1 - log(1+e)
  Model k2 = categorical_model(2, 2, 1);
  k2.store.value(k2.base.heads[0].beta) = Tensor::matrix(1, 1, {1.0});
  double v = loglik_head(k2.base.heads[0], k2.store, {1, {}}, Tensor::vec({1.0}));
  CHECK(v == doctest::Approx(1.0 - std::log(1.0 + std::exp(1.0))).epsilon(1e-12));
  CHECK(v == doctest::Approx(-0.313262).epsilon(1e-5));

  CHECK_THROWS_AS(loglik_head(head, m.store, {0, {}}, zp), ArgumentError);
  CHECK_THROWS_AS(loglik_head(head, m.store, {11, {}}, zp), ArgumentError);
}

TEST_CASE("loglik_head linear-gaussian matches the direct formula") {
  Model m = linear_model(4, 2, 2);
  randomize_head(m, 0, 0.8, 7);
  const PredictiveHead& head = m.base.heads[0];
  Rng rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor zp = rng.normal_vec(2);
    HeadObs obs{0, rng.normal_vec(2)};
    Tensor mean = add(matvec(m.store.value(head.beta), zp), m.store.value(head.beta0));
    double expect = 0.0;
    for (int j = 0; j < 2; ++j) {
      double var = std::exp(m.store.value(head.log_var)[j]);
      double r = obs.value[j] - mean[j];
      expect += -0.5 * std::log(2.0 * M_PI * var) - r * r / (2.0 * var);
    }
    CHECK(loglik_head(head, m.store, obs, zp) == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("tape loglik agrees with the plain path") {
  Model cat = categorical_model(4, 3, 2);
  randomize_head(cat, 0, 0.6, 11);
  Model lin = linear_model(4, 2, 2, 1.7);
  randomize_head(lin, 0, 0.6, 13);
  Rng rng(15);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor zp = rng.normal_vec(2);
    HeadObs cobs{1 + static_cast<int>(rng.uniform_index(3)), {}};
    Tape t1(&cat.store);
    double tape_val =
        t1.scalar(loglik_head_tape(cat.base.heads[0], t1, cobs, t1.constant(zp)));
    CHECK(tape_val ==
          doctest::Approx(loglik_head(cat.base.heads[0], cat.store, cobs, zp)).epsilon(1e-13));

    HeadObs lobs{0, rng.normal_vec(2)};
    Tape t2(&lin.store);
    double tape_lin =
        t2.scalar(loglik_head_tape(lin.base.heads[0], t2, lobs, t2.constant(zp)));
    CHECK(tape_lin ==
          doctest::Approx(loglik_head(lin.base.heads[0], lin.store, lobs, zp)).epsilon(1e-13));
  }
}

TEST_CASE("log_marginal: constant integrands are exact") {
  // categorical with beta = 0: exactly log(1/K) for any M, bit-for-bit the
  // constant likelihood value itself
  Model m = categorical_model(4, 7, 2);
  double const_loglik =
      loglik_head(m.base.heads[0], m.store, {2, {}}, Tensor::vec({0.0, 0.0}));
  CHECK(const_loglik == doctest::Approx(std::log(1.0 / 7.0)).epsilon(1e-15));
  for (int M : {1, 10, 1000}) {
    Rng rng(17);
    CHECK(log_marginal(m.base.heads[0], m.store, {2, {}}, M, rng) == const_loglik);
  }

  // linear-gaussian with beta1 = 0: exactly the noise density at x
  Model lin = linear_model(4, 1, 2);
  lin.store.value(lin.base.heads[0].log_var) = Tensor::vec({std::log(0.25)});
  HeadObs obs{0, Tensor::vec({0.7})};
  Rng rng(19);
  double closed = log_marginal(lin.base.heads[0], lin.store, obs, 10, rng);
  double expect = -0.5 * std::log(2.0 * M_PI * 0.25) - 0.7 * 0.7 / (2.0 * 0.25);
  CHECK(closed == doctest::Approx(expect).epsilon(1e-13));

  // ... and the Monte-Carlo path agrees exactly there too (constant in t)
  Rng rng2(21);
  CHECK(log_marginal_mc(lin.base.heads[0], lin.store, obs, 50, rng2) ==
        doctest::Approx(expect).epsilon(1e-13));
}

TEST_CASE("categorical marginal matches the quadrature oracle within 3 SE") {
  Model m = categorical_model(2, 2, 1);
  m.store.value(m.base.heads[0].beta) = Tensor::matrix(1, 1, {1.0});
  const PredictiveHead& head = m.base.heads[0];

  auto integrand = [&](double t) {
    double phi = std::exp(-0.5 * t * t) / std::sqrt(2.0 * M_PI);
    return phi * std::exp(loglik_head(head, m.store, {1, {}}, Tensor::vec({t})));
  };
  double quad = std::log(oracles::adaptive_simpson(integrand, -8.0, 8.0, 1e-12));

  const int M = 100000;
  Rng rng(23);
  double mc = log_marginal(head, m.store, {1, {}}, M, rng);
  double se = mc_rel_se(head, m.store, {1, {}}, M, 23);
  CHECK(std::abs(mc - quad) <= 3.0 * se);
  CHECK(se < 0.01);  // the bound itself is tight enough to be meaningful
}

TEST_CASE("linear-gaussian MC marginal is consistent with the closed form") {
  Rng setup(29);
  int failures = 0;
  for (int trial = 0; trial < 50; ++trial) {
    int d = 1 + static_cast<int>(setup.uniform_index(3));
    int m_dim = 1 + static_cast<int>(setup.uniform_index(2));
    Model lin = linear_model(4, m_dim, d);
    randomize_head(lin, 0, 0.8, 1000 + trial);
    const PredictiveHead& head = lin.base.heads[0];
    HeadObs obs{0, setup.normal_vec(m_dim)};

    double closed = log_marginal_closed(head, lin.store, obs);
    const int M = 100000;
    Rng rng(31 + trial);
    double mc = log_marginal_mc(head, lin.store, obs, M, rng);
    double se = mc_rel_se(head, lin.store, obs, M, 31 + trial);
    if (std::abs(mc - closed) > 3.0 * se) ++failures;
  }
  // 3-sigma bound: with 50 seeded draws an occasional boundary case would
  // stay deterministic, but none occur for this seed set
  CHECK(failures == 0);
}

TEST_CASE("augmented posterior: zero heads cancel to the standard normal") {
  Model m = categorical_model(4, 5, 2);
  Rng rng(37);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor z = rng.normal_vec(4);
    Rng mc(41);
    double post = log_aug_posterior(m.base, m.flow.layout, m.store, z, {2.0}, mc);
    CHECK(post == doctest::Approx(log_std_normal(z)).epsilon(1e-13));
  }
}

TEST_CASE("augmented posterior equals its composition and normalizes") {
  Model m = categorical_model(2, 2, 1);
  m.store.value(m.base.heads[0].beta) = Tensor::matrix(1, 1, {0.25});
  const PredictiveHead& head = m.base.heads[0];
  m.base.mc_samples = 400000;
  const std::uint64_t kSeed = 43;

  // the posterior value decomposes into prior + likelihood - marginal
  Rng mc_marg(kSeed);
  double marg = log_marginal(head, m.store, {1, {}}, m.base.mc_samples, mc_marg);
  Rng rng(47);
  for (int trial = 0; trial < 25; ++trial) {
    Tensor z = rng.normal_vec(2);
    Rng mc(kSeed);
    double post = log_aug_posterior(m.base, m.flow.layout, m.store, z, {1.0}, mc);
    double composed = log_std_normal(slice(z, 1, 2)) + log_std_normal(slice(z, 0, 1)) +
                      loglik_head(head, m.store, {1, {}}, slice(z, 0, 1)) - marg;
    CHECK(post == doctest::Approx(composed).epsilon(1e-12));
  }

  // 2-D quadrature: exp(log posterior) integrates to 1 within 1e-3.
  // The posterior factorizes over (z_P, z_N); with the shared-seed marginal
  // the grid integral reduces to two 1-D Simpson passes over the library's
  // own terms, which keeps the oracle affordable at M = 2e5.
  auto zp_term = [&](double t) {
    return std::exp(log_std_normal(Tensor::vec({t})) +
                    loglik_head(head, m.store, {1, {}}, Tensor::vec({t})) - marg);
  };
  auto zn_term = [&](double t) { return std::exp(log_std_normal(Tensor::vec({t}))); };
  double integral = oracles::adaptive_simpson(zp_term, -8.0, 8.0, 1e-10) *
                    oracles::adaptive_simpson(zn_term, -8.0, 8.0, 1e-10);
  CHECK(integral == doctest::Approx(1.0).epsilon(1e-3));

  // the MC error at this M keeps the 1e-3 budget honest
  CHECK(3.0 * mc_rel_se(head, m.store, {1, {}}, m.base.mc_samples, kSeed) < 1e-3);
}

TEST_CASE("augmented posterior is additive over independent heads") {
  ArchConfig arch;
  arch.p = 6;
  arch.levels = 1;
  arch.depth = 1;
  HeadSpec cat;
  cat.kind = HeadKind::categorical;
  cat.K = 3;
  cat.d = 2;
  HeadSpec lin;
  lin.kind = HeadKind::linear_gaussian;
  lin.m = 1;
  lin.d = 1;
  Model m = build_model(arch, {cat, lin}, {}, 1, InitKind::identity);
  randomize_head(m, 0, 0.5, 53);
  randomize_head(m, 1, 0.5, 59);

  Rng rng(61);
  Tensor z = rng.normal_vec(6);
  std::vector<double> xrow{2.0, 0.4};
  const std::uint64_t kSeed = 67;

  Rng mc(kSeed);
  double joint = log_aug_posterior(m.base, m.flow.layout, m.store, z, xrow, mc);

  LatentParts parts = latent_partition(m.flow.layout, z);
  Rng mc2(kSeed);
  double h0 = log_std_normal(parts.zp[0]) +
              loglik_head(m.base.heads[0], m.store, {2, {}}, parts.zp[0]) -
              log_marginal(m.base.heads[0], m.store, {2, {}}, m.base.mc_samples, mc2);
  double h1 = log_std_normal(parts.zp[1]) +
              loglik_head(m.base.heads[1], m.store, {0, Tensor::vec({0.4})}, parts.zp[1]) -
              log_marginal(m.base.heads[1], m.store, {0, Tensor::vec({0.4})},
                           m.base.mc_samples, mc2);
  CHECK(joint == doctest::Approx(log_std_normal(parts.zn) + h0 + h1).epsilon(1e-12));
}

TEST_CASE("tempering changes likelihood values but never the argmax") {
  Model m = categorical_model(4, 6, 2);
  randomize_head(m, 0, 0.9, 71);
  Rng rng(73);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor zp = rng.normal_vec(2);
    Tensor logits = head_logits(m.base.heads[0], m.store, zp);
    int base_argmax = 0;
    for (std::size_t k = 1; k < logits.size(); ++k)
      if (logits[k] > logits[base_argmax]) base_argmax = static_cast<int>(k);
    for (double lambda : {1.0, 10.0, 1000.0}) {
      PredictiveHead tempered = m.base.heads[0];
      tempered.spec.lambda = lambda;
      int best = 0;
      double best_val = loglik_head(tempered, m.store, {1, {}}, zp);
      for (int k = 1; k < 6; ++k) {
        double v = loglik_head(tempered, m.store, {k + 1, {}}, zp);
        if (v > best_val) {
          best_val = v;
          best = k;
        }
      }
      CHECK(best == base_argmax);
    }
  }
}

TEST_CASE("apcde_loss: identity flow with zero heads is plain Gaussian NLL") {
  Model m = categorical_model(4, 3, 2);
  Rng rng(79);
  std::vector<Example> batch;
  double nll = 0.0;
  for (int i = 0; i < 5; ++i) {
    Tensor y = rng.normal_vec(4);
    nll -= log_std_normal(y);
    batch.push_back({y, {1.0 + static_cast<double>(i % 3)}});
  }
  nll /= 5.0;
  Rng mc(83);
  double loss = apcde_loss(m.flow, m.base, m.store, batch, mc);
  CHECK(loss == doctest::Approx(nll).epsilon(1e-12));
}

TEST_CASE("apcde_loss cancellation holds on any flow when heads are zero") {
  for (auto variant : {CouplingVariant::additive, CouplingVariant::affine}) {
    HeadSpec cat;
    cat.kind = HeadKind::categorical;
    cat.K = 4;
    cat.d = 2;
    Model m = make_random_model(8, 2, 2, variant, 89, {cat}, {});
    Rng rng(97);
    std::vector<Example> batch;
    for (int i = 0; i < 4; ++i)
      batch.push_back({rng.normal_vec(8), {1.0 + static_cast<double>(i % 4)}});

    Rng mc(101);
    double loss = apcde_loss(m.flow, m.base, m.store, batch, mc);
    double nll = 0.0;
    for (const Example& e : batch) {
      FlowForward fwd = flow_forward(m.flow, m.store, e.y);
      nll -= log_std_normal(fwd.z) + fwd.logdet;
    }
    nll /= static_cast<double>(batch.size());
    CHECK(loss == doctest::Approx(nll).epsilon(1e-10));
  }
}

TEST_CASE("apcde_loss is bit-reproducible for a fixed seed") {
  HeadSpec cat;
  cat.kind = HeadKind::categorical;
  cat.K = 3;
  cat.d = 2;
  Model m = make_random_model(4, 1, 2, CouplingVariant::affine, 103, {cat}, {});
  randomize_head(m, 0, 0.5, 107);
  Rng rng(109);
  std::vector<Example> batch;
  for (int i = 0; i < 3; ++i)
    batch.push_back({rng.normal_vec(4), {1.0 + static_cast<double>(i)}});

  Rng mc1(113), mc2(113);
  double l1 = apcde_loss(m.flow, m.base, m.store, batch, mc1);
  double l2 = apcde_loss(m.flow, m.base, m.store, batch, mc2);
  CHECK(l1 == l2);  // bitwise

  Rng mc3(127);
  double l3 = apcde_loss(m.flow, m.base, m.store, batch, mc3);
  CHECK(l1 != l3);  // different draws move the Monte-Carlo term
}

TEST_CASE("apcde_loss gradient matches finite differences on a mixed model") {
  HeadSpec cat;
  cat.kind = HeadKind::categorical;
  cat.K = 3;
  cat.d = 1;
  HeadSpec lin;
  lin.kind = HeadKind::linear_gaussian;
  lin.m = 1;
  lin.d = 1;
  lin.lambda = 2.0;  // exercises the tempered Monte-Carlo linear path
  Model m = make_random_model(4, 1, 1, CouplingVariant::affine, 131, {cat, lin}, {});
  randomize_head(m, 0, 0.4, 137);
  randomize_head(m, 1, 0.4, 139);
  m.base.mc_samples = 64;

  Rng rng(149);
  std::vector<Example> batch;
  for (int i = 0; i < 3; ++i)
    batch.push_back({rng.normal_vec(4), {1.0 + static_cast<double>(i % 3), 0.3 * i}});

  const std::uint64_t kSeed = 151;
  Rng mc(kSeed);
  LossGrad lg = apcde_loss_grad(m.flow, m.base, m.store, batch, mc);

  auto f = [&] {
    Rng probe(kSeed);
    return apcde_loss(m.flow, m.base, m.store, batch, probe);
  };
  auto fd = finite_diff_gradient(f, m.store, 1e-5);
  for (ParamRef p = 0; p < m.store.size(); ++p) {
    if (!m.store.trainable(p)) continue;
    for (std::size_t i = 0; i < fd[p].size(); ++i) {
      double denom = std::max(std::abs(fd[p][i]), 1e-8);
      CAPTURE(m.store.name(p));
      CHECK(std::abs(lg.grads[p][i] - fd[p][i]) / denom < 1e-4);
    }
  }
}

TEST_CASE("apcde_loss names the offending sample on non-finite values") {
  Model m = categorical_model(4, 2, 1);
  std::vector<Example> batch;
  batch.push_back({Tensor::vec({0.0, 0.0, 0.0, 0.0}), {1.0}});
  batch.push_back({Tensor::full({4}, 1e308), {1.0}});
  Rng mc(157);
  try {
    apcde_loss(m.flow, m.base, m.store, batch, mc);
    FAIL("expected NumericalError");
  } catch (const NumericalError& e) {
    // the identity flow forwards 1e308 untouched; the Gaussian term overflows
    CHECK(std::string(e.what()).find("1") != std::string::npos);
  }
  CHECK_THROWS_AS(apcde_loss(m.flow, m.base, m.store, {}, mc), ArgumentError);
}

TEST_CASE("closed-form linear marginal matches quadrature in one dimension") {
  Model lin = linear_model(2, 1, 1);
  randomize_head(lin, 0, 0.7, 163);
  const PredictiveHead& head = lin.base.heads[0];
  HeadObs obs{0, Tensor::vec({0.9})};
  auto integrand = [&](double t) {
    double phi = std::exp(-0.5 * t * t) / std::sqrt(2.0 * M_PI);
    return phi * std::exp(loglik_head(head, lin.store, obs, Tensor::vec({t})));
  };
  double quad = std::log(oracles::adaptive_simpson(integrand, -9.0, 9.0, 1e-12));
  CHECK(log_marginal_closed(head, lin.store, obs) == doctest::Approx(quad).epsilon(1e-9));
}
