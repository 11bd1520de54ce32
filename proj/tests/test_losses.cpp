#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "aadml/error.hpp"
#include "aadml/gradcheck.hpp"
#include "aadml/losses.hpp"
#include "aadml/rng.hpp"

using namespace aadml;

namespace {

Tensor random_rows(std::size_t r, std::size_t c, Rng& rng) {
  Tensor t({r, c});
  for (double& v : t.data) v = rng.normal();
  return t;
}

LabelMatrix one_hot(const std::vector<std::size_t>& classes, std::size_t c) {
  LabelMatrix m;
  m.n = classes.size();
  m.categories = c;
  m.bits.assign(m.n * c, 0);
  for (std::size_t i = 0; i < m.n; ++i) m.bits[i * c + classes[i]] = 1;
  return m;
}

// All representation roles backed by the same two matrices.
BatchVars vars_from(Tape& t, Var audio, Var visual) {
  return BatchVars{audio, visual, audio, visual, audio, visual};
}

double eval_triplet(const Tensor& audio, const Tensor& visual,
                    const std::vector<TripletRefs>& triplets, double margin) {
  Tape t;
  BatchVars v = vars_from(t, t.leaf(audio), t.leaf(visual));
  return t.value(triplet_loss_value(t, v, triplets, margin)).scalar_value();
}

}  // namespace

TEST_CASE("triplet mining") {
  SUBCASE("two same-category samples admit no triplet") {
    LabelMatrix labels = one_hot({0, 0}, 2);
    CHECK(mine_triplets(labels, LossKind::kTriplet).empty());
  }

  SUBCASE("count and contents match exhaustive enumeration") {
    LabelMatrix labels = one_hot({0, 0, 1}, 2);
    auto mined = mine_triplets(labels, LossKind::kTriplet);
    // Oracle: raw loops over both modality orderings.
    std::vector<TripletRefs> expect;
    for (Modality first : {Modality::kAudio, Modality::kVisual}) {
      const Modality second = first == Modality::kAudio ? Modality::kVisual : Modality::kAudio;
      for (std::size_t a = 0; a < 3; ++a)
        for (std::size_t p = 0; p < 3; ++p)
          for (std::size_t n = 0; n < 3; ++n) {
            if (!labels.share_category(a, p) || labels.share_category(a, n)) continue;
            expect.push_back({{first, a}, {second, p}, {second, n}});
          }
    }
    REQUIRE(mined.size() == expect.size());
    for (std::size_t i = 0; i < mined.size(); ++i) {
      CHECK(mined[i].anchor == expect[i].anchor);
      CHECK(mined[i].positive == expect[i].positive);
      CHECK(mined[i].negative == expect[i].negative);
    }
  }

  SUBCASE("dagger strategy covers all eight modality assignments") {
    LabelMatrix labels = one_hot({0, 0, 1}, 2);
    auto mined = mine_triplets(labels, LossKind::kTripletDagger);
    std::size_t expect = 0;
    for (int am = 0; am < 2; ++am)
      for (int pm = 0; pm < 2; ++pm)
        for (int nm = 0; nm < 2; ++nm)
          for (std::size_t a = 0; a < 3; ++a)
            for (std::size_t p = 0; p < 3; ++p)
              for (std::size_t n = 0; n < 3; ++n) {
                if (!labels.share_category(a, p) || labels.share_category(a, n)) continue;
                if (pm == am && p == a) continue;
                ++expect;
              }
    CHECK(mined.size() == expect);
    CHECK(expect == 32);
  }

  SUBCASE("hard mining keeps the closest negative only") {
    Rng rng(41);
    LabelMatrix labels = one_hot({0, 0, 1, 1, 2, 2}, 3);
    Tensor audio = random_rows(6, 3, rng);
    Tensor visual = random_rows(6, 3, rng);
    ReprSnapshots snaps{&audio, &visual, &audio, &visual};
    auto mined = mine_triplets(labels, LossKind::kHardTriplet, &snaps);
    REQUIRE_FALSE(mined.empty());
    for (const TripletRefs& t : mined) {
      const Tensor& arep = t.anchor.mod == Modality::kAudio ? audio : visual;
      const Tensor& orep = t.negative.mod == Modality::kAudio ? audio : visual;
      auto dist = [&](std::size_t n) {
        double s = 0;
        for (std::size_t c = 0; c < 3; ++c) {
          double d = arep.at(t.anchor.index, c) - orep.at(n, c);
          s += d * d;
        }
        return s;
      };
      for (std::size_t n = 0; n < 6; ++n) {
        if (labels.share_category(t.anchor.index, n)) continue;
        CHECK(dist(t.negative.index) <= dist(n));
      }
    }
  }
}

TEST_CASE("triplet loss values") {
  LossConfig cfg;
  SUBCASE("equal positive and negative distances leave exactly the margin") {
    Tensor audio = Tensor::matrix(1, 2, {0, 0});
    Tensor visual = Tensor::matrix(2, 2, {1, 0, -1, 0});
    std::vector<TripletRefs> triplets = {
        {{Modality::kAudio, 0}, {Modality::kVisual, 0}, {Modality::kVisual, 1}}};
    CHECK(eval_triplet(audio, visual, triplets, 1.2) == doctest::Approx(1.2).epsilon(1e-15));
  }
  SUBCASE("satisfied margin contributes zero") {
    Tensor audio = Tensor::matrix(1, 2, {0, 0});
    Tensor visual = Tensor::matrix(2, 2, {0.1, 0, 0, 3});
    std::vector<TripletRefs> triplets = {
        {{Modality::kAudio, 0}, {Modality::kVisual, 0}, {Modality::kVisual, 1}}};
    CHECK(eval_triplet(audio, visual, triplets, 1.2) == 0.0);
  }
  SUBCASE("hand-evaluated hinge: 1 - 4 + 1.2 clamps to zero") {
    Tensor audio = Tensor::matrix(1, 2, {0, 0});
    Tensor visual = Tensor::matrix(2, 2, {1, 0, 0, 2});
    std::vector<TripletRefs> triplets = {
        {{Modality::kAudio, 0}, {Modality::kVisual, 0}, {Modality::kVisual, 1}}};
    CHECK(eval_triplet(audio, visual, triplets, 1.2) == 0.0);
  }
  SUBCASE("mean reduction over a mixed set") {
    Tensor audio = Tensor::matrix(1, 2, {0, 0});
    Tensor visual = Tensor::matrix(2, 2, {1, 0, -1, 0});
    std::vector<TripletRefs> triplets = {
        {{Modality::kAudio, 0}, {Modality::kVisual, 0}, {Modality::kVisual, 1}},
        {{Modality::kAudio, 0}, {Modality::kVisual, 0}, {Modality::kVisual, 1}}};
    CHECK(eval_triplet(audio, visual, triplets, 1.2) == doctest::Approx(1.2).epsilon(1e-15));
  }
  SUBCASE("empty set contributes zero") {
    Tensor audio = Tensor::matrix(1, 2, {0, 0});
    CHECK(eval_triplet(audio, audio, {}, 1.2) == 0.0);
  }
  SUBCASE("invariant under a common permutation of the triplet list") {
    Rng rng(42);
    Tensor audio = random_rows(5, 3, rng);
    Tensor visual = random_rows(5, 3, rng);
    LabelMatrix labels = one_hot({0, 0, 1, 1, 2}, 3);
    auto triplets = mine_triplets(labels, LossKind::kTriplet);
    REQUIRE(triplets.size() > 3);
    const double before = eval_triplet(audio, visual, triplets, 1.2);
    std::vector<TripletRefs> shuffled = triplets;
    Rng perm(43);
    perm.shuffle(shuffled);
    const double after = eval_triplet(audio, visual, shuffled, 1.2);
    CHECK(std::abs(before - after) < 1e-12);
  }
}

TEST_CASE("hard-negative choice maximizes the per-pair hinge") {
  Rng rng(44);
  LabelMatrix labels = one_hot({0, 0, 1, 1, 2, 2}, 3);
  Tensor audio = random_rows(6, 3, rng);
  Tensor visual = random_rows(6, 3, rng);
  ReprSnapshots snaps{&audio, &visual, &audio, &visual};
  auto hard = mine_triplets(labels, LossKind::kHardTriplet, &snaps);
  for (const TripletRefs& t : hard) {
    const double kept = eval_triplet(audio, visual, {t}, 1.2);
    for (std::size_t n = 0; n < 6; ++n) {
      if (labels.share_category(t.anchor.index, n)) continue;
      TripletRefs alt = t;
      alt.negative.index = n;
      CHECK(kept >= eval_triplet(audio, visual, {alt}, 1.2) - 1e-12);
    }
  }
}

TEST_CASE("contrastive loss") {
  SUBCASE("identical similar pairs cost nothing") {
    Tape t;
    Tensor rows = Tensor::matrix(2, 2, {1, 2, 1, 2});
    BatchVars v = vars_from(t, t.leaf(rows), t.leaf(rows));
    LabelMatrix labels = one_hot({0, 0}, 2);
    CHECK(t.value(contrastive_loss_value(t, v, labels, 1.0, false)).scalar_value() == 0.0);
  }
  SUBCASE("dissimilar pairs beyond the margin cost nothing") {
    Tape t;
    Tensor audio = Tensor::matrix(2, 2, {0, 0, 5, 0});
    Tensor visual = Tensor::matrix(2, 2, {0, 0, 5, 0});
    BatchVars v = vars_from(t, t.leaf(audio), t.leaf(visual));
    LabelMatrix labels = one_hot({0, 1}, 2);
    CHECK(t.value(contrastive_loss_value(t, v, labels, 1.0, false)).scalar_value() == 0.0);
  }
  SUBCASE("hand-evaluated margin shortfall, 0.5(1-0.5)^2 per dissimilar pair") {
    Tape t;
    Tensor audio = Tensor::matrix(2, 2, {0, 0, 0.5, 0});
    Tensor visual = Tensor::matrix(2, 2, {0, 0, 0.5, 0});
    BatchVars v = vars_from(t, t.leaf(audio), t.leaf(visual));
    LabelMatrix labels = one_hot({0, 1}, 2);
    // Similar pairs coincide (0); the two dissimilar pairs each pay 0.125.
    const double loss = t.value(contrastive_loss_value(t, v, labels, 1.0, false)).scalar_value();
    CHECK(loss == doctest::Approx(2.0 * 0.125 / 4.0).epsilon(1e-12));
  }
  SUBCASE("as-printed convention flips the indicator roles") {
    Tape t;
    Tensor audio = Tensor::matrix(2, 2, {0, 0, 0.5, 0});
    Tensor visual = Tensor::matrix(2, 2, {0, 0, 0.5, 0});
    BatchVars v = vars_from(t, t.leaf(audio), t.leaf(visual));
    LabelMatrix labels = one_hot({0, 1}, 2);
    // Similar coincident pairs now pay 0.5*max(0, m-0)^2 = 0.5 each; the
    // dissimilar pairs pay 0.5*(0.25)^2 each.
    const double loss = t.value(contrastive_loss_value(t, v, labels, 1.0, true)).scalar_value();
    CHECK(loss == doctest::Approx((2 * 0.5 + 2 * 0.5 * 0.0625) / 4.0).epsilon(1e-12));
  }
}

TEST_CASE("n-pair loss") {
  SUBCASE("no negatives means an empty logit set and zero loss") {
    Tape t;
    Tensor rows = Tensor::matrix(1, 2, {1, 0});
    BatchVars v = vars_from(t, t.leaf(rows), t.leaf(rows));
    LabelMatrix labels = one_hot({0}, 2);
    CHECK(t.value(n_pair_loss_value(t, v, labels)).scalar_value() == 0.0);
  }
  SUBCASE("matches a direct transcription of its formula") {
    Rng rng(45);
    Tensor audio = random_rows(3, 2, rng);
    Tensor visual = random_rows(3, 2, rng);
    LabelMatrix labels = one_hot({0, 0, 1}, 2);
    Tape t;
    BatchVars v = vars_from(t, t.leaf(audio), t.leaf(visual));
    const double got = t.value(n_pair_loss_value(t, v, labels)).scalar_value();

    auto dot = [](const Tensor& a, std::size_t i, const Tensor& b, std::size_t j) {
      double s = 0;
      for (std::size_t c = 0; c < a.cols(); ++c) s += a.at(i, c) * b.at(j, c);
      return s;
    };
    double expect = 0.0;
    for (int dir = 0; dir < 2; ++dir) {
      const Tensor& first = dir == 0 ? audio : visual;
      const Tensor& second = dir == 0 ? visual : audio;
      for (std::size_t i = 0; i < 3; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < 3; ++j) {
          if (labels.share_category(i, j)) continue;
          acc += std::exp(dot(first, i, second, j) - dot(first, i, second, i));
        }
        expect += std::log(1.0 + acc);
      }
    }
    expect /= 6.0;
    CHECK(got == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("angular loss matches a direct transcription on a hand-built configuration") {
  Tensor audio = Tensor::matrix(2, 2, {1.0, 0.5, -0.5, 0.25});
  Tensor visual = Tensor::matrix(2, 2, {0.75, 0.5, 0.1, -1.0});
  LabelMatrix labels = one_hot({0, 1}, 2);
  Tape t;
  BatchVars v = vars_from(t, t.leaf(audio), t.leaf(visual));
  const double got = t.value(angular_loss_value(t, v, labels, 45.0)).scalar_value();

  auto dot = [](const Tensor& a, std::size_t i, const Tensor& b, std::size_t j) {
    double s = 0;
    for (std::size_t c = 0; c < 2; ++c) s += a.at(i, c) * b.at(j, c);
    return s;
  };
  const double tan_sq = 1.0;  // tan(45 deg)^2
  double expect = 0.0;
  for (int dir = 0; dir < 2; ++dir) {
    const Tensor& first = dir == 0 ? audio : visual;
    const Tensor& second = dir == 0 ? visual : audio;
    for (std::size_t i = 0; i < 2; ++i) {
      const std::size_t n = 1 - i;  // the only negative
      double apn = 0.0;
      for (std::size_t c = 0; c < 2; ++c)
        apn += (first.at(i, c) + second.at(i, c)) * second.at(n, c);
      const double f = 4.0 * tan_sq * apn - 2.0 * (1.0 + tan_sq) * dot(first, i, second, i);
      expect += std::log(1.0 + std::exp(f));
    }
  }
  expect /= 4.0;
  CHECK(got == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("hinge loss is zero when all pairs satisfy their margins") {
  Tape t;
  Tensor audio = Tensor::matrix(2, 2, {0, 0, 2, 0});
  Tensor visual = Tensor::matrix(2, 2, {0, 0, 2, 0});
  BatchVars v = vars_from(t, t.leaf(audio), t.leaf(visual));
  LabelMatrix labels = one_hot({0, 1}, 2);
  CHECK(t.value(hinge_loss_value(t, v, labels, 1.0)).scalar_value() == 0.0);
}

TEST_CASE("dsl loss matches a direct transcription") {
  Rng rng(46);
  Tensor audio = random_rows(3, 2, rng);
  Tensor visual = random_rows(3, 2, rng);
  Tape t;
  BatchVars v = vars_from(t, t.leaf(audio), t.leaf(visual));
  const double got = t.value(dsl_loss_value(t, v)).scalar_value();

  double s[3][3];
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      s[i][j] = 0;
      for (int c = 0; c < 2; ++c) s[i][j] += audio.at(i, c) * visual.at(j, c);
    }
  auto softmax_row = [](double m[3][3], int i, int j) {
    double mx = std::max({m[i][0], m[i][1], m[i][2]});
    double denom = 0;
    for (int c = 0; c < 3; ++c) denom += std::exp(m[i][c] - mx);
    return std::exp(m[i][j] - mx) / denom;
  };
  auto softmax_col = [](double m[3][3], int i, int j) {
    double mx = std::max({m[0][j], m[1][j], m[2][j]});
    double denom = 0;
    for (int r = 0; r < 3; ++r) denom += std::exp(m[r][j] - mx);
    return std::exp(m[i][j] - mx) / denom;
  };
  double a[3][3], b[3][3];
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      a[i][j] = s[i][j] * softmax_col(s, i, j);
      b[i][j] = s[i][j] * softmax_row(s, i, j);
    }
  double rows = 0, cols = 0;
  for (int i = 0; i < 3; ++i) {
    rows += -std::log(softmax_row(a, i, i));
    cols += -std::log(softmax_col(b, i, i));
  }
  const double expect = 0.5 * (rows / 3.0 + cols / 3.0);
  CHECK(got == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("label loss") {
  SUBCASE("exact fit costs nothing") {
    Tape t;
    Tensor y = Tensor::matrix(2, 3, {1, 0, 0, 0, 1, 0});
    Var fa = t.leaf(y);
    Var fv = t.leaf(y);
    CHECK(t.value(label_loss_value(t, fa, fv, y)).scalar_value() == 0.0);
  }
  SUBCASE("unit offset on one branch of a single-sample batch costs exactly one") {
    Tape t;
    Tensor y = Tensor::matrix(1, 3, {1, 0, 0});
    Tensor fa_val = Tensor::matrix(1, 3, {2, 0, 0});  // y + [1,0,0]
    CHECK(t.value(label_loss_value(t, t.leaf(fa_val), t.leaf(y), y)).scalar_value() ==
          doctest::Approx(1.0).epsilon(1e-15));
  }
  SUBCASE("shape mismatch is a contract violation") {
    Tape t;
    Tensor y = Tensor::matrix(2, 3, {1, 0, 0, 0, 1, 0});
    Var bad = t.leaf(Tensor::matrix(2, 2, {1, 0, 0, 1}));
    CHECK_THROWS_AS(label_loss_value(t, bad, bad, y), ShapeError);
  }
}

TEST_CASE("total loss") {
  Rng rng(47);
  LabelMatrix labels = one_hot({0, 0, 1, 1}, 2);
  Tensor targets({4, 2});
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t c = 0; c < 2; ++c) targets.at(i, c) = labels.at(i, c);

  SUBCASE("reduces to the label loss when no metric structure exists") {
    LabelMatrix single = one_hot({0, 0}, 1);
    Tensor single_targets = Tensor::matrix(2, 1, {1, 1});
    Tensor audio = random_rows(2, 1, rng);
    Tensor visual = random_rows(2, 1, rng);
    LossConfig cfg;
    cfg.kind = LossKind::kTriplet;
    Tape t;
    BatchVars v = vars_from(t, t.leaf(audio), t.leaf(visual));
    const double total =
        t.value(total_loss_value(t, v, single, single_targets, cfg)).scalar_value();
    Tape t2;
    const double label =
        t2.value(label_loss_value(t2, t2.leaf(audio), t2.leaf(visual), single_targets))
            .scalar_value();
    CHECK(total == doctest::Approx(label).epsilon(1e-15));
  }

  SUBCASE("perfect projections with satisfied margins cost nothing") {
    LossConfig cfg;
    cfg.kind = LossKind::kTriplet;
    cfg.triplet_margin = 1.2;
    Tape t;
    BatchVars v = vars_from(t, t.leaf(targets), t.leaf(targets));
    // One-hot classes sit at squared distance 2, so d(a,n)^2 - d(a,p)^2 = 2 > 1.2.
    CHECK(t.value(total_loss_value(t, v, labels, targets, cfg)).scalar_value() == 0.0);
  }

  SUBCASE("every loss kind is non-negative and differentiable") {
    for (LossKind kind :
         {LossKind::kTriplet, LossKind::kTripletDagger, LossKind::kHardTriplet,
          LossKind::kContrastive, LossKind::kNPair, LossKind::kAngular, LossKind::kHinge,
          LossKind::kDsl}) {
      Parameter audio("audio", random_rows(4, 2, rng));
      Parameter visual("visual", random_rows(4, 2, rng));
      LossConfig cfg;
      cfg.kind = kind;
      std::vector<Parameter*> params = {&audio, &visual};

      // Freeze hard-mining structure at the base point.
      std::vector<TripletRefs> mined;
      const bool needs_mining = kind == LossKind::kTriplet || kind == LossKind::kTripletDagger ||
                                kind == LossKind::kHardTriplet;
      if (needs_mining) {
        ReprSnapshots snaps{&audio.value, &visual.value, &audio.value, &visual.value};
        mined = mine_triplets(labels, kind, &snaps);
      }
      auto fn = [&](Tape& t) {
        BatchVars v = vars_from(t, t.param(audio), t.param(visual));
        return total_loss_value(t, v, labels, targets, cfg, needs_mining ? &mined : nullptr);
      };
      Tape t;
      BatchVars v = vars_from(t, t.param(audio), t.param(visual));
      const double value =
          t.value(total_loss_value(t, v, labels, targets, cfg, needs_mining ? &mined : nullptr))
              .scalar_value();
      CHECK(value >= 0.0);

      GradCheckReport report = grad_check(fn, params, 1e-3);
      CHECK_MESSAGE(report.worst < 1e-4, "loss kind ", loss_kind_name(kind));
    }
  }
}

TEST_CASE("loss config validation") {
  LossConfig cfg;
  cfg.triplet_margin = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.triplet_margin = 1.2;
  cfg.contrastive_margin = -1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
