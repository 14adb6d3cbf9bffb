#include <doctest.h>

#include <cmath>

#include "mlbias/bias_metrics.hpp"
#include "mlbias/debias.hpp"
#include "mlbias/error.hpp"
#include "support.hpp"

using namespace mlbias;
using testing::space_of;

namespace {

const double kInvSqrt2 = std::sqrt(0.5);

Vector vec2(double a, double b) {
  Vector v(2);
  v << a, b;
  return v;
}

}  // namespace

TEST_CASE("gender direction of one pair") {
  auto s = space_of({{"he", {1, 0}}, {"she", {0, 1}}});
  Vector g = gender_direction(s, {{"he", "she"}});
  CHECK(g(0) == doctest::Approx(kInvSqrt2));
  CHECK(g(1) == doctest::Approx(-kInvSqrt2));
  Vector g2 = gender_direction(s, {{"he", "she"}, {"he", "she"}});
  CHECK((g2 - g).norm() < 1e-12);
  Vector flipped = gender_direction(s, {{"she", "he"}});
  CHECK((flipped + g).norm() < 1e-12);

  auto same = space_of({{"he", {1, 0}}, {"she", {1, 0}}});
  CHECK_THROWS_AS(gender_direction(same, {{"he", "she"}}), NumericalError);
  CHECK_THROWS_AS(gender_direction(s, {{"x", "y"}}), DataError);
}

TEST_CASE("gender subspace is orthonormal") {
  std::mt19937_64 rng(1);
  auto s = testing::random_space(testing::numbered("w", 12), 8, rng);
  std::vector<WordPair> pairs;
  for (int i = 0; i < 12; i += 2) pairs.push_back({s.word(i), s.word(i + 1)});
  auto sub = gender_subspace(s, pairs, 3);
  CHECK(sub.basis.cols() == 3);
  CHECK((sub.basis.transpose() * sub.basis - Eigen::MatrixXd::Identity(3, 3)).norm() < 1e-12);
}

TEST_CASE("neutralize") {
  auto s = space_of({{"diag", {1, 1}}, {"x", {1, 0}}, {"par", {1, -1}}, {"keep", {0, 1}}});
  Vector g = vec2(kInvSqrt2, -kInvSqrt2);
  DebiasWarnings warn;
  auto n = neutralize(s, g, {"keep"}, &warn);
  CHECK((n.vector("diag") - vec2(kInvSqrt2, kInvSqrt2)).norm() < 1e-12);
  CHECK(std::abs(n.vector("x").dot(g)) <= 1e-9);
  CHECK(n.vector("keep") == s.vector("keep"));
  CHECK(warn.parallel_words == std::vector<std::string>{"par"});
  CHECK(n.vector("par") == s.vector("par"));
  CHECK_THROWS_AS(neutralize(s, vec2(1, 1), {}), UsageError);

  std::mt19937_64 rng(2);
  auto r = testing::random_space(testing::numbered("w", 200), 10, rng);
  Vector gr = testing::unit_rows(testing::gaussian(1, 10, rng)).row(0).transpose();
  auto nr = neutralize(r, gr, {});
  for (std::size_t i = 0; i < nr.size(); ++i) {
    CHECK(std::abs(nr.row(i).dot(gr)) <= 1e-9);
    CHECK(nr.row(i).norm() == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("equalize") {
  std::mt19937_64 rng(3);
  auto s = testing::random_space(testing::numbered("w", 60), 10, rng);
  Vector g = testing::unit_rows(testing::gaussian(1, 10, rng)).row(0).transpose();
  std::set<std::string> excl{"w0", "w1", "w2", "w3"};
  auto n = neutralize(s, g, excl);
  auto e = equalize(n, {{"w0", "w1"}, {"w2", "w3"}}, g);
  for (auto [a, b] : {std::pair<std::string, std::string>{"w0", "w1"}, {"w2", "w3"}}) {
    const Vector va = e.vector(a);
    const Vector vb = e.vector(b);
    CHECK(va.norm() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(vb.norm() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(cosine(va, g) == doctest::Approx(-cosine(vb, g)).epsilon(1e-9));
    // The pair keeps its orientation along g.
    CHECK((va - vb).dot(g) * (s.vector(a) - s.vector(b)).dot(g) >= 0.0);
    for (std::size_t i = 4; i < e.size(); ++i) {
      CHECK(std::abs(cosine(e.row(i), va) - cosine(e.row(i), vb)) < 1e-9);
    }
  }
}

TEST_CASE("equalize tie picks the positive direction") {
  auto s = space_of({{"a", {0.6, 0.8}}, {"b", {0.6, 0.8}}});
  Vector g = vec2(1, 0);
  auto e = equalize(s, {{"a", "b"}}, g);
  CHECK((e.vector("a") - vec2(0.6, 0.8)).norm() < 1e-12);
  CHECK((e.vector("b") - vec2(-0.6, 0.8)).norm() < 1e-12);
  DebiasWarnings w;
  equalize(s, {{"a", "nope"}}, g, &w);
  CHECK(w.skipped_pairs == std::vector<std::string>{"a/nope"});
}

TEST_CASE("hard_debias toy fixture removes inBias") {
  auto s = space_of({{"he", {1, 0.2}},
                     {"she", {-1, 0.2}},
                     {"doctor", {0.8, 0.6}},
                     {"nurse", {-0.5, 0.866}},
                     {"chef", {0.3, 0.9}},
                     {"cook", {0.1, 1}}},
                    true, "en");
  OccupationPairSet set{"en", {{"doctor", "nurse", ""}, {"chef", "cook", ""}}, {{"he", "she"}}};
  const double before = inbias(s, set).inbias;
  CHECK(before > 0.05);
  DebiasConfig c;
  c.definitional_pairs = {{"he", "she"}};
  c.equalize_pairs = {{"he", "she"}};
  auto d = hard_debias(s, c);
  CHECK(inbias(d, set).inbias < 1e-9);
  CHECK(d.language() == "endeb");
  CHECK(s.vector("doctor")(0) == doctest::Approx(0.8));

  DebiasConfig neutral_only;
  neutral_only.definitional_pairs = {{"he", "she"}};
  auto n = hard_debias(s, neutral_only);
  CHECK(n.vector("he") == s.vector("he"));
  CHECK(std::abs(n.vector("doctor")(0)) < 1e-12);
}

TEST_CASE("debias config file") {
  auto dir = testing::scratch("debias_cfg");
  testing::write(dir / "c.cfg",
                 "# bundle\n[definitional]\nhe\tshe\nman\twoman\n[equalize]\nking\tqueen\n[exclude]\nmother\n"
                 "[options]\nn_components\t2\n");
  auto c = read_debias_config(dir / "c.cfg");
  CHECK(c.definitional_pairs.size() == 2);
  CHECK(c.equalize_pairs.size() == 1);
  CHECK(c.exclusions.count("mother") == 1);
  CHECK(c.n_components == 2);
  c.finalize();
  CHECK(c.exclusions.count("queen") == 1);
  CHECK(c.exclusions.count("he") == 1);

  testing::write(dir / "bad.cfg", "[mystery]\nx\ty\n");
  CHECK_THROWS_AS(read_debias_config(dir / "bad.cfg"), DataError);
  testing::write(dir / "orphan.cfg", "he\tshe\n");
  CHECK_THROWS_AS(read_debias_config(dir / "orphan.cfg"), DataError);
}
