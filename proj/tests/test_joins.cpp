#include <numeric>

#include "support.hpp"

using namespace testing;

namespace {

Mat row_of(std::initializer_list<double> v) {
  Mat m(1, static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) m(0, i++) = x;
  return m;
}

RelevanceWeights<double> weights(Tape<double>& t, const Mat& a) { return RelevanceWeights<double>::direct(t.constant(a)); }

/// Random per-premise cross attention against one shared hypothesis.
std::vector<CrossAttentionOutput<double>> random_attentions(Tape<double>& t, Rng& rng, int n, Eigen::Index h,
                                                            Eigen::Index width = 3) {
  const EncodedSeq<double> hyp{t.constant(random_matrix(rng, h, width)), Mask(static_cast<std::size_t>(h), true)};
  std::vector<CrossAttentionOutput<double>> out;
  for (int i = 0; i < n; ++i) {
    const auto len = 1 + static_cast<Eigen::Index>(rng.below(12));
    Mask m(static_cast<std::size_t>(len), true);
    for (std::size_t k = 1; k < m.size(); ++k) m[k] = rng.below(5) != 0;
    out.push_back(cross_attend(EncodedSeq<double>{t.constant(random_matrix(rng, len, width, 2.0)), m}, hyp));
  }
  return out;
}

}  // namespace

TEST_CASE("join_score hand cases") {
  Tape<double> t(false);
  const Var<double> s = t.constant(row_of({0.2, 0.9, 0.4}));
  CHECK(join_score(s, RelevanceWeights<double>::constant_ones(t, 3)).value()(0, 0) == 0.9);
  CHECK(join_score(t.constant(row_of({0.8, 0.4})), weights(t, row_of({0.25, 0.75}))).value()(0, 0) ==
        doctest::Approx(0.3).epsilon(1e-15));
  CHECK(join_score(t.constant(row_of({0.37})), weights(t, row_of({1.0}))).value()(0, 0) == 0.37);
  CHECK_THROWS_AS(join_score(s, weights(t, row_of({0.5, 0.5}))), ShapeError);
}

TEST_CASE("join_score with all-ones weights is the plain maximum") {
  Rng rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    Tape<double> t(false);
    const auto n = 1 + static_cast<Eigen::Index>(rng.below(8));
    Mat s(1, n);
    for (Eigen::Index i = 0; i < n; ++i) s(0, i) = rng.uniform();
    CHECK(join_score(t.constant(s), RelevanceWeights<double>::constant_ones(t, n)).value()(0, 0) == s.maxCoeff());
  }
}

TEST_CASE("join_embedding hand cases") {
  Tape<double> t(false);
  const EmbeddedSeq<double> p1{t.constant(Mat::Constant(1, 2, 2.0)), Mask{true}};
  const EmbeddedSeq<double> p2{t.constant(Mat::Constant(1, 2, 4.0)), Mask{true}};
  const EmbeddedSeq<double> h{t.constant(Mat::Constant(3, 2, 7.0)), Mask{true, true, false}};
  const std::vector<EmbeddedSeq<double>> ps{p1, p2};

  const auto [half_p, half_h] = join_embedding(std::span<const EmbeddedSeq<double>>(ps), h, weights(t, row_of({0.5, 0.5})));
  Mat expected(2, 2);
  expected << 1, 1, 2, 2;
  CHECK(half_p.values.value() == expected);
  CHECK(half_h.values.id == h.values.id);
  CHECK(half_h.mask == h.mask);

  const auto [killed, unused] = join_embedding(std::span<const EmbeddedSeq<double>>(ps), h, weights(t, row_of({0.0, 1.0})));
  CHECK(killed.values.value().row(0).isZero(0));
  CHECK(killed.values.value().row(1) == p2.values.value().row(0));

  const EmbeddedSeq<double> narrow{t.constant(Mat::Ones(1, 3)), Mask{true}};
  const std::vector<EmbeddedSeq<double>> bad{p1, narrow};
  CHECK_THROWS_AS(join_embedding(std::span<const EmbeddedSeq<double>>(bad), h, weights(t, row_of({0.5, 0.5}))),
                  ShapeError);
}

TEST_CASE("join_embedding with all-ones weights is plain concatenation") {
  Rng rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    Tape<double> t(false);
    const int n = 1 + static_cast<int>(rng.below(5));
    std::vector<EmbeddedSeq<double>> ps;
    std::vector<Mat> raw;
    for (int i = 0; i < n; ++i) {
      raw.push_back(random_matrix(rng, 1 + static_cast<Eigen::Index>(rng.below(6)), 4));
      ps.push_back({t.constant(raw.back()), Mask(static_cast<std::size_t>(raw.back().rows()), true)});
    }
    Eigen::Index total = 0;
    for (const auto& m : raw) total += m.rows();
    Mat concatenated(total, 4);
    Eigen::Index off = 0;
    for (const auto& m : raw) {
      concatenated.middleRows(off, m.rows()) = m;
      off += m.rows();
    }
    const EmbeddedSeq<double> h{t.constant(random_matrix(rng, 2, 4)), Mask(2, true)};
    const auto joined =
        join_embedding(std::span<const EmbeddedSeq<double>>(ps), h, RelevanceWeights<double>::constant_ones(t, n)).first;
    CHECK(joined.values.value() == concatenated);
    CHECK(joined.mask.size() == static_cast<std::size_t>(total));
  }
}

TEST_CASE("join_final hand cases") {
  Tape<double> t(false);
  auto vecs = [&](std::initializer_list<Mat> rows) {
    std::vector<FinalVector<double>> out;
    for (const auto& r : rows) out.push_back({t.constant(r)});
    return out;
  };
  const auto a = vecs({row_of({1, 2}), row_of({3, 4})});
  CHECK(join_final(std::span<const FinalVector<double>>(a), weights(t, row_of({1, 0}))).values.value() == row_of({1, 2}));
  const auto b = vecs({row_of({2, 0}), row_of({0, 2})});
  CHECK(join_final(std::span<const FinalVector<double>>(b), weights(t, row_of({0.5, 0.5}))).values.value() ==
        row_of({1, 1}));
  const auto c = vecs({row_of({1}), row_of({2})});
  CHECK(join_final(std::span<const FinalVector<double>>(c), RelevanceWeights<double>::constant_ones(t, 2)).values.value() ==
        row_of({3}));
  const auto ragged = vecs({row_of({1}), row_of({2, 3})});
  CHECK_THROWS_AS(join_final(std::span<const FinalVector<double>>(ragged), weights(t, row_of({0.5, 0.5}))), ShapeError);
}

TEST_CASE("join_cross_attention hand cases") {
  Tape<double> t(false);
  const EncodedSeq<double> h{t.constant(Mat::Ones(1, 2)), Mask{true}};
  const EncodedSeq<double> p{t.constant(Mat::Ones(1, 2)), Mask{true}};
  const std::vector<CrossAttentionOutput<double>> two{cross_attend(p, h), cross_attend(p, h)};
  const auto joined = join_cross_attention(std::span<const CrossAttentionOutput<double>>(two), weights(t, row_of({0.3, 0.7})));
  CHECK(joined.m_hp.value()(0, 0) == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(joined.m_hp.value()(0, 1) == doctest::Approx(0.7).epsilon(1e-12));
  CHECK(joined.premise_boundaries == std::vector<Eigen::Index>{0, 1, 2});

  Rng rng(3);
  const auto one = random_attentions(t, rng, 1, 4);
  const auto single =
      join_cross_attention(std::span<const CrossAttentionOutput<double>>(one), weights(t, row_of({1.0})));
  CHECK((single.m_hp.value() - one[0].m_hp.value()).cwiseAbs().maxCoeff() < 1e-6);

  const auto pair = random_attentions(t, rng, 2, 3);
  const auto annihilated =
      join_cross_attention(std::span<const CrossAttentionOutput<double>>(pair), weights(t, row_of({0.0, 1.0})));
  const auto first_len = pair[0].m_hp.cols();
  CHECK(annihilated.m_hp.value().leftCols(first_len).isZero(0));
  CHECK(annihilated.m_ph.value().topRows(first_len) == pair[0].m_ph.value());
}

TEST_CASE("joined attention rows are stochastic across random shapes") {
  Rng rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    Tape<double> t(false);
    const int n = 1 + static_cast<int>(rng.below(6));
    const auto h = 1 + static_cast<Eigen::Index>(rng.below(10));
    const auto atts = random_attentions(t, rng, n, h);
    Mat a(1, n);
    for (int i = 0; i < n; ++i) a(0, i) = rng.uniform(0.01, 1.0);
    a /= a.sum();
    const auto joined = join_cross_attention(std::span<const CrossAttentionOutput<double>>(atts), weights(t, a));
    const Mat sums = joined.m_hp.value().rowwise().sum();
    CHECK((sums.array() - 1.0).abs().maxCoeff() < 1e-5);
    CHECK(joined.premise_boundaries.front() == 0);
    CHECK(joined.premise_boundaries.back() == joined.premise.values.rows());
    CHECK(std::is_sorted(joined.premise_boundaries.begin(), joined.premise_boundaries.end()));
  }
}

TEST_CASE("joined attention checks the hypothesis") {
  Rng rng(5);
  Tape<double> t(false);
  auto a = random_attentions(t, rng, 1, 3);
  const auto b = random_attentions(t, rng, 1, 4);
  a.push_back(b[0]);
  CHECK_THROWS_AS(join_cross_attention(std::span<const CrossAttentionOutput<double>>(a), weights(t, row_of({0.5, 0.5}))),
                  ShapeError);
}

TEST_CASE("joins are permutation equivariant") {
  Rng rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    Tape<double> t(false);
    const int n = 2 + static_cast<int>(rng.below(4));
    const auto atts = random_attentions(t, rng, n, 3);
    Mat a(1, n);
    for (int i = 0; i < n; ++i) a(0, i) = rng.uniform(0.05, 1.0);
    std::vector<int> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);
    std::vector<CrossAttentionOutput<double>> permuted;
    Mat pa(1, n);
    for (int i = 0; i < n; ++i) {
      permuted.push_back(atts[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])]);
      pa(0, i) = a(0, perm[static_cast<std::size_t>(i)]);
    }
    const auto j1 = join_cross_attention(std::span<const CrossAttentionOutput<double>>(atts), weights(t, a));
    const auto j2 = join_cross_attention(std::span<const CrossAttentionOutput<double>>(permuted), weights(t, pa));
    for (int i = 0; i < n; ++i) {
      const auto src = static_cast<std::size_t>(perm[static_cast<std::size_t>(i)]);
      const auto dst = static_cast<std::size_t>(i);
      const Eigen::Index len = j1.premise_boundaries[src + 1] - j1.premise_boundaries[src];
      CHECK((j1.m_hp.value().middleCols(j1.premise_boundaries[src], len) -
             j2.m_hp.value().middleCols(j2.premise_boundaries[dst], len))
                .cwiseAbs()
                .maxCoeff() < 1e-12);
    }

    std::vector<FinalVector<double>> hs, phs;
    Mat s(1, n), ps(1, n);
    for (int i = 0; i < n; ++i) {
      hs.push_back({t.constant(random_matrix(rng, 1, 5))});
      s(0, i) = rng.uniform();
    }
    for (int i = 0; i < n; ++i) {
      phs.push_back(hs[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])]);
      ps(0, i) = s(0, perm[static_cast<std::size_t>(i)]);
    }
    const Mat f1 = join_final(std::span<const FinalVector<double>>(hs), weights(t, a)).values.value();
    const Mat f2 = join_final(std::span<const FinalVector<double>>(phs), weights(t, pa)).values.value();
    CHECK((f1 - f2).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(join_score(t.constant(s), weights(t, a)).value() == join_score(t.constant(ps), weights(t, pa)).value());
  }
}

TEST_CASE("join gradients with respect to inputs and weights") {
  Rng rng(7);
  const Mat alpha_logits = random_matrix(rng, 1, 3);
  const Mat s = row_of({0.2, 0.7, 0.5});
  CHECK(check_input_gradient(alpha_logits, [&](Tape<double>& t, Var<double> x) {
          return join_score(t.constant(s), RelevanceWeights<double>::from_logits(x));
        }) < 1e-4);
  CHECK(check_input_gradient(s, [&](Tape<double>& t, Var<double> x) {
          return join_score(x, RelevanceWeights<double>::from_logits(t.constant(alpha_logits)));
        }) < 1e-4);

  const Mat h = random_matrix(rng, 3, 4);
  CHECK(check_input_gradient(alpha_logits, [&](Tape<double>& t, Var<double> x) {
          std::vector<FinalVector<double>> hs;
          for (Eigen::Index i = 0; i < 3; ++i) hs.push_back({t.constant(h.row(i))});
          return probe(t, join_final(std::span<const FinalVector<double>>(hs), RelevanceWeights<double>::from_logits(x)).values);
        }) < 1e-4);
  CHECK(check_input_gradient(h, [&](Tape<double>& t, Var<double> x) {
          std::vector<FinalVector<double>> hs;
          for (Eigen::Index i = 0; i < 3; ++i) hs.push_back({slice_rows(x, i, 1)});
          return probe(t, join_final(std::span<const FinalVector<double>>(hs),
                                     RelevanceWeights<double>::from_logits(t.constant(alpha_logits)))
                              .values);
        }) < 1e-4);

  const Mat e1 = random_matrix(rng, 2, 3), e2 = random_matrix(rng, 4, 3);
  CHECK(check_input_gradient(alpha_logits.leftCols(2), [&](Tape<double>& t, Var<double> x) {
          const std::vector<EmbeddedSeq<double>> ps{{t.constant(e1), Mask(2, true)}, {t.constant(e2), Mask(4, true)}};
          const EmbeddedSeq<double> hyp{t.constant(Mat::Ones(1, 3)), Mask{true}};
          return probe(t, join_embedding(std::span<const EmbeddedSeq<double>>(ps), hyp,
                                         RelevanceWeights<double>::from_logits(x))
                              .first.values);
        }) < 1e-4);

  const Mat p1 = random_matrix(rng, 3, 4), p2 = random_matrix(rng, 2, 4), hv = random_matrix(rng, 3, 4);
  CHECK(check_input_gradient(alpha_logits.leftCols(2), [&](Tape<double>& t, Var<double> x) {
          const EncodedSeq<double> hyp{t.constant(hv), Mask(3, true)};
          const std::vector<CrossAttentionOutput<double>> atts{
              cross_attend(EncodedSeq<double>{t.constant(p1), Mask(3, true)}, hyp),
              cross_attend(EncodedSeq<double>{t.constant(p2), Mask(2, true)}, hyp)};
          return probe(t, join_cross_attention(std::span<const CrossAttentionOutput<double>>(atts),
                                               RelevanceWeights<double>::from_logits(x))
                              .m_hp);
        }) < 1e-4);
  CHECK(check_input_gradient(p1, [&](Tape<double>& t, Var<double> x) {
          const EncodedSeq<double> hyp{t.constant(hv), Mask(3, true)};
          const std::vector<CrossAttentionOutput<double>> atts{
              cross_attend(EncodedSeq<double>{x, Mask(3, true)}, hyp),
              cross_attend(EncodedSeq<double>{t.constant(p2), Mask(2, true)}, hyp)};
          return probe(t, join_cross_attention(std::span<const CrossAttentionOutput<double>>(atts),
                                               RelevanceWeights<double>::from_logits(t.constant(alpha_logits.leftCols(2))))
                              .m_hp);
        }) < 1e-4);
}
