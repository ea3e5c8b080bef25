#include <random>

#include "doctest.h"
#include "lmf/explicit_path.hpp"
#include "lmf/model.hpp"
#include "lmf/verify.hpp"

using namespace lmf;

TEST_CASE("encoder with zero parameters outputs zero") {
  EncoderParams<double> p{MatrixX<double>::Zero(4, 3), VectorX<double>::Zero(4),
                          MatrixX<double>::Zero(2, 4), VectorX<double>::Zero(2)};
  ModalVector<double> z = encoder_forward(p, VectorX<double>{{1.0, -2.0, 3.0}});
  CHECK(z.values.isZero());
}

TEST_CASE("identity encoder passes nonnegative inputs through") {
  EncoderParams<double> p{MatrixX<double>::Identity(3, 3), VectorX<double>::Zero(3),
                          MatrixX<double>::Identity(3, 3), VectorX<double>::Zero(3)};
  VectorX<double> x{{0.5, 0.0, 2.0}};
  ModalVector<double> z = encoder_forward(p, x);
  CHECK((z.values.array() == x.array()).all());
}

TEST_CASE("encoder matches a straight-line re-evaluation oracle") {
  Rng rng = make_rng(8);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  for (int n = 0; n < 20; ++n) {
    MatrixX<double> w1 = MatrixX<double>::NullaryExpr(5, 3, [&] { return unit(rng); });
    VectorX<double> b1 = VectorX<double>::NullaryExpr(5, [&] { return unit(rng); });
    MatrixX<double> w2 = MatrixX<double>::NullaryExpr(2, 5, [&] { return unit(rng); });
    VectorX<double> b2 = VectorX<double>::NullaryExpr(2, [&] { return unit(rng); });
    VectorX<double> x = VectorX<double>::NullaryExpr(3, [&] { return unit(rng); });
    EncoderParams<double> p{w1, b1, w2, b2};
    VectorX<double> z = encoder_forward(p, x).values;

    // Oracle: scalar loops only.
    std::vector<double> h1(5), expect(2);
    for (int i = 0; i < 5; ++i) {
      double acc = b1[i];
      for (int j = 0; j < 3; ++j) acc += w1(i, j) * x[j];
      h1[i] = acc > 0 ? acc : 0;
    }
    for (int i = 0; i < 2; ++i) {
      double acc = b2[i];
      for (int j = 0; j < 5; ++j) acc += w2(i, j) * h1[j];
      expect[i] = acc > 0 ? acc : 0;
    }
    CHECK(z[0] == doctest::Approx(expect[0]).epsilon(1e-14));
    CHECK(z[1] == doctest::Approx(expect[1]).epsilon(1e-14));
  }
}

TEST_CASE("encoder rejects mismatched shapes") {
  EncoderParams<double> p{MatrixX<double>::Zero(4, 3), VectorX<double>::Zero(4),
                          MatrixX<double>::Zero(2, 4), VectorX<double>::Zero(2)};
  CHECK_THROWS_AS(encoder_forward(p, VectorX<double>(VectorX<double>::Zero(5))), ShapeMismatch);
  EncoderParams<double> bad{MatrixX<double>::Zero(4, 3), VectorX<double>::Zero(4),
                            MatrixX<double>::Zero(2, 3), VectorX<double>::Zero(2)};
  CHECK_THROWS_AS(encoder_forward(bad, VectorX<double>(VectorX<double>::Zero(3))), ShapeMismatch);
}

TEST_CASE("fuse_backward: zero upstream gives zero gradients") {
  EquivalenceCase c{3, {3, 2, 4}, 2, 2, 41};
  FactorSet<double> f = random_case_factors(c);
  std::vector<ModalVector<double>> zs = random_case_inputs(c);
  GradientRecord<double> g = fuse_backward(f, zs, VectorX<double>(VectorX<double>::Zero(2)));
  CHECK(g.d_bias.isZero());
  for (const auto& df : g.d_factors) CHECK(df.isZero());
  for (const auto& dz : g.d_inputs) CHECK(dz.isZero());
}

TEST_CASE("fuse_backward: bias gradient is the upstream exactly") {
  EquivalenceCase c{2, {3, 3}, 3, 4, 42};
  FactorSet<double> f = random_case_factors(c);
  std::vector<ModalVector<double>> zs = random_case_inputs(c);
  VectorX<double> up{{0.1, -2.0, 3.5, 0.0}};
  CHECK((fuse_backward(f, zs, up).d_bias.array() == up.array()).all());
}

TEST_CASE("fuse_backward matches central finite differences") {
  Rng rng = make_rng(4711);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  const double step = 1e-5;
  for (int n = 0; n < 10; ++n) {
    EquivalenceCase c = random_equivalence_case(rng, {3, 5, 3, 3});
    FactorSet<double> f = random_case_factors(c);
    std::vector<ModalVector<double>> zs = random_case_inputs(c);
    VectorX<double> up(c.output_dim);
    for (Index k = 0; k < up.size(); ++k) up[k] = unit(rng);

    auto loss = [&](const FactorSet<double>& ff, const std::vector<ModalVector<double>>& zz) {
      return up.dot(lmf_fuse(ff, zz, false).values);
    };
    GradientRecord<double> g = fuse_backward(f, zs, up);

    for (int m = 0; m < c.modalities; ++m) {
      FactorSet<double> work = f;
      for (Index idx = 0; idx < work.factor(m).size(); ++idx) {
        double& slot = work.factor(m).data()[idx];
        const double saved = slot;
        slot = saved + step;
        const double upv = loss(work, zs);
        slot = saved - step;
        const double dn = loss(work, zs);
        slot = saved;
        const double fd = (upv - dn) / (2 * step);
        const double an = g.d_factors[m].data()[idx];
        CHECK(std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-4}) < 1e-6);
      }
      std::vector<ModalVector<double>> wz = zs;
      for (Index j = 0; j < wz[m].values.size(); ++j) {
        const double saved = wz[m].values[j];
        wz[m].values[j] = saved + step;
        const double upv = loss(f, wz);
        wz[m].values[j] = saved - step;
        const double dn = loss(f, wz);
        wz[m].values[j] = saved;
        const double fd = (upv - dn) / (2 * step);
        const double an = g.d_inputs[m][j];
        CHECK(std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-4}) < 1e-6);
      }
    }
  }
}

TEST_CASE("explicit_backward agrees with fuse_backward on the shared surfaces") {
  Rng rng = make_rng(99);
  for (int n = 0; n < 20; ++n) {
    EquivalenceCase c = random_equivalence_case(rng, {3, 4, 3, 3});
    FactorSet<double> f = random_case_factors(c);
    std::vector<ModalVector<double>> zs = random_case_inputs(c);
    VectorX<double> up = VectorX<double>::Random(c.output_dim);

    GradientRecord<double> fast = fuse_backward(f, zs, up);
    WeightTensor<double> w = cp_reconstruct(f);
    DenseTensor<double> z = outer_product(zs);
    ExplicitGradients<double> slow = explicit_backward(w, zs, z, up);

    CHECK((fast.d_bias - slow.d_bias).lpNorm<Eigen::Infinity>() < 1e-12);
    for (int m = 0; m < c.modalities; ++m)
      CHECK((fast.d_inputs[m] - slow.d_inputs[m]).lpNorm<Eigen::Infinity>() < 1e-9);
  }
}

TEST_CASE("model_forward composes the individually tested ops") {
  Rng rng = make_rng(6);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  for (int n = 0; n < 10; ++n) {
    std::vector<Index> raw{3, 2}, enc{2, 3};
    ModelParams<double> model = random_check_model<double>(raw, enc, 2, 2, 3, rng());
    std::vector<VectorX<double>> xs;
    for (Index d : raw) xs.push_back(VectorX<double>::NullaryExpr(d, [&] { return unit(rng); }));

    VectorX<double> pred = model_forward(model, xs);

    std::vector<ModalVector<double>> zs;
    for (int m = 0; m < 2; ++m) zs.push_back(append_one(encoder_forward(model.encoders[m], xs[m], m)));
    VectorX<double> h = lmf_fuse(model.fusion, zs).values;
    VectorX<double> expect = model.head->w * h + model.head->b;
    CHECK((pred - expect).lpNorm<Eigen::Infinity>() == 0.0);

    // purity
    CHECK((model_forward(model, xs) - pred).lpNorm<Eigen::Infinity>() == 0.0);
  }
}

TEST_CASE("model with zero parameters predicts the head bias") {
  std::vector<MatrixX<double>> factors{MatrixX<double>::Zero(3, 2), MatrixX<double>::Zero(3, 2)};
  ModelParams<double> model{FactorSet<double>(std::move(factors), VectorX<double>::Zero(2), 1), {}, {}};
  model.encoders.push_back(EncoderParams<double>{MatrixX<double>::Zero(4, 3), VectorX<double>::Zero(4),
                                                 MatrixX<double>::Zero(2, 4), VectorX<double>::Zero(2)});
  model.encoders.push_back(EncoderParams<double>{MatrixX<double>::Zero(4, 3), VectorX<double>::Zero(4),
                                                 MatrixX<double>::Zero(2, 4), VectorX<double>::Zero(2)});
  model.head = AffineHead<double>{MatrixX<double>::Zero(3, 2), VectorX<double>{{1.0, -2.0, 0.5}}};
  std::vector<VectorX<double>> xs{VectorX<double>::Random(3), VectorX<double>::Random(3)};
  VectorX<double> pred = model_forward(model, xs);
  CHECK((pred.array() == model.head->b.array()).all());
}

TEST_CASE("full-model gradients match finite differences") {
  Rng rng = make_rng(2718);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  int done = 0;
  while (done < 10) {
    std::vector<Index> raw{3, 2, 2}, enc{2, 2, 3};
    const Index dh = 2;
    ModelParams<double> model = random_check_model<double>(raw, enc, 2, dh, 3, rng());
    std::vector<VectorX<double>> xs;
    for (Index d : raw) xs.push_back(VectorX<double>::NullaryExpr(d, [&] { return unit(rng); }));
    if (relu_kink_margin(model, xs) < 1e-3) continue;
    VectorX<double> y = VectorX<double>::NullaryExpr(3, [&] { return unit(rng); });
    GradCheckOutcome o = gradient_check(model, xs, y);
    INFO("worst param: ", o.worst_param);
    CHECK(o.max_rel_error < 1e-6);
    ++done;
  }
}

TEST_CASE("the appended-1 coordinate never receives an input gradient") {
  // d_inputs includes the appended coordinate's sensitivity on the fused
  // vector, but model_backward must not let it reach encoder inputs; the
  // encoder gradient path truncates it.
  Rng rng = make_rng(5);
  std::vector<Index> raw{2, 2}, enc{2, 2};
  ModelParams<double> model = random_check_model<double>(raw, enc, 2, 2, 2, 11);
  std::vector<VectorX<double>> xs{VectorX<double>{{0.3, -0.4}}, VectorX<double>{{0.9, 0.1}}};
  ModelActivations<double> act = model_forward_cached(model, xs);
  GradientRecord<double> g = model_backward(model, act, VectorX<double>(VectorX<double>::Ones(2)));
  for (std::size_t m = 0; m < g.d_encoders.size(); ++m) {
    // Perturbing the constant must change nothing downstream of append_one;
    // check the encoder gradients are built only from the truncated slice.
    VectorX<double> truncated = g.d_inputs[m].head(act.enc[m].z.size());
    VectorX<double> d_a2 =
        (act.enc[m].a2.array() > 0.0).select(truncated, VectorX<double>::Zero(truncated.size()));
    CHECK((g.d_encoders[m].b2 - d_a2).lpNorm<Eigen::Infinity>() == 0.0);
  }
}
