#include <doctest.h>

#include "mlbias/alignment.hpp"
#include "mlbias/error.hpp"
#include "support.hpp"

using namespace mlbias;

namespace {

struct Planted {
  EmbeddingSpace src;
  EmbeddingSpace tgt;
  LexiconDictionary dict;
  Matrix q;
};

Planted planted(std::size_t n, Eigen::Index d, double noise, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Matrix x = testing::unit_rows(testing::gaussian(static_cast<Eigen::Index>(n), d, rng));
  Matrix q = testing::random_orthogonal(d, rng);
  Matrix y = x * q;
  if (noise > 0) y += testing::gaussian(y.rows(), d, rng, noise);
  y = testing::unit_rows(y);
  auto sw = testing::numbered("s", n);
  auto tw = testing::numbered("t", n);
  LexiconDictionary dict{"es", "en", {}};
  for (std::size_t i = 0; i < n; ++i) dict.entries.push_back({sw[i], tw[i]});
  return {EmbeddingSpace("es", sw, x, true), EmbeddingSpace("en", tw, y, true), dict, q};
}

double p_at_1(const AlignmentMap& m, const Planted& p) {
  return dictionary_precision(m.w, p.src.matrix(), p.tgt.matrix());
}

}  // namespace

TEST_CASE("procrustes on identical spaces is the identity") {
  std::mt19937_64 rng(1);
  auto s = testing::random_space(testing::numbered("w", 60), 8, rng);
  LexiconDictionary dict;
  for (const auto& w : s.words()) dict.entries.push_back({w, w});
  auto m = procrustes(s, s, dict);
  CHECK((m.w - Matrix::Identity(8, 8)).norm() < 1e-6);
}

TEST_CASE("procrustes recovers a planted rotation") {
  auto p = planted(1000, 20, 0.0, 2);
  auto m = procrustes(p.src, p.tgt, p.dict);
  CHECK((m.w - p.q).norm() < 1e-6);
  CHECK(m.dictionary_size == 1000);
  CHECK(m.method == AlignMethod::kProcrustes);
}

TEST_CASE("procrustes 2-d quarter turn") {
  auto src = testing::space_of({{"a", {1, 0}}, {"b", {0, 1}}, {"c", {0.6, 0.8}}});
  auto tgt = testing::space_of({{"A", {0, 1}}, {"B", {-1, 0}}, {"C", {-0.8, 0.6}}});
  LexiconDictionary dict{"", "", {{"a", "A"}, {"b", "B"}, {"c", "C"}}};
  auto m = procrustes(src, tgt, dict);
  Matrix r(2, 2);
  r << 0, 1, -1, 0;
  CHECK((m.w - r).cwiseAbs().maxCoeff() < 1e-9);
  auto mapped = apply_alignment(m, src);
  CHECK(mapped.vector("a")(0) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(mapped.vector("a")(1) == doctest::Approx(1.0));
}

TEST_CASE("procrustes needs at least dim usable pairs") {
  auto src = testing::space_of({{"a", {1, 0, 0}}, {"b", {0, 1, 0}}, {"c", {0, 0, 1}}});
  LexiconDictionary dict{"", "", {{"a", "a"}, {"b", "b"}, {"zz", "c"}}};
  CHECK_THROWS_AS(procrustes(src, src, dict), DataError);
  auto r = resolve_pairs(src, src, dict);
  CHECK(r.dropped == 1);
}

TEST_CASE("rcsls gradient matches finite differences") {
  auto p = planted(80, 5, 0.2, 3);
  const Matrix& x = p.src.matrix();
  const Matrix& y = p.tgt.matrix();
  std::mt19937_64 rng(4);
  Matrix w = testing::random_orthogonal(5, rng);
  Matrix grad;
  const double f = rcsls_objective_and_gradient(w, x.topRows(20), y.topRows(20), x, y, 4, grad);
  CHECK(f == doctest::Approx(rcsls_objective(w, x.topRows(20), y.topRows(20), x, y, 4)).epsilon(1e-12));
  const double h = 1e-7;
  for (Eigen::Index i = 0; i < 5; ++i) {
    for (Eigen::Index j = 0; j < 5; ++j) {
      Matrix wp = w;
      Matrix wm = w;
      wp(i, j) += h;
      wm(i, j) -= h;
      const double num = (rcsls_objective(wp, x.topRows(20), y.topRows(20), x, y, 4) -
                          rcsls_objective(wm, x.topRows(20), y.topRows(20), x, y, 4)) /
                         (2 * h);
      CHECK(grad(i, j) == doctest::Approx(num).epsilon(1e-5));
    }
  }
}

TEST_CASE("rcsls with zero epochs returns the procrustes map") {
  auto p = planted(300, 10, 0.05, 5);
  RcslsConfig c;
  c.epochs = 0;
  auto r = rcsls_train(p.src, p.tgt, p.dict, c);
  auto pr = procrustes(p.src, p.tgt, p.dict);
  CHECK((r.w - pr.w).norm() == 0.0);
  CHECK(r.objective_trace.size() == 1);
}

TEST_CASE("rcsls improves the objective and keeps precision") {
  auto p = planted(600, 10, 0.08, 6);
  RcslsConfig c;
  c.batch_size = 100;
  c.epochs = 8;
  auto r = rcsls_train(p.src, p.tgt, p.dict, c);
  auto pr = procrustes(p.src, p.tgt, p.dict);
  REQUIRE(r.objective_trace.size() >= 2);
  for (std::size_t i = 1; i < r.objective_trace.size(); ++i) {
    CHECK(r.objective_trace[i] >= r.objective_trace[i - 1]);
  }
  CHECK(r.final_objective >= r.objective_trace.front());
  CHECK(p_at_1(r, p) >= p_at_1(pr, p));

  auto again = rcsls_train(p.src, p.tgt, p.dict, c);
  CHECK((again.w - r.w).norm() == 0.0);
}

TEST_CASE("rcsls constraints") {
  auto p = planted(200, 6, 0.1, 7);
  RcslsConfig c;
  c.batch_size = 50;
  c.epochs = 3;
  c.orthogonal = true;
  auto o = rcsls_train(p.src, p.tgt, p.dict, c);
  CHECK((o.w.transpose() * o.w - Matrix::Identity(6, 6)).norm() < 1e-9);
  c.orthogonal = false;
  c.spectral = true;
  auto s = rcsls_train(p.src, p.tgt, p.dict, c);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(s.w);
  CHECK(svd.singularValues().maxCoeff() <= 1.0 + 1e-9);
  c.lr = 0;
  CHECK_THROWS_AS(rcsls_train(p.src, p.tgt, p.dict, c), UsageError);
}

TEST_CASE("apply_alignment") {
  std::mt19937_64 rng(8);
  auto s = testing::random_space(testing::numbered("w", 30), 6, rng, "es");
  AlignmentMap id;
  id.w = Matrix::Identity(6, 6);
  id.src_language = "es";
  id.tgt_language = "en";
  auto same = apply_alignment(id, s);
  CHECK((same.matrix() - s.matrix()).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(same.language() == "es-en");

  AlignmentMap rot = id;
  rot.w = testing::random_orthogonal(6, rng);
  auto mapped = apply_alignment(rot, s);
  Matrix direct = s.matrix() * rot.w;
  CHECK((mapped.matrix() - direct).cwiseAbs().maxCoeff() < 1e-6);

  AlignmentMap wrong = id;
  wrong.w = Matrix::Identity(5, 5);
  CHECK_THROWS_AS(apply_alignment(wrong, s), UsageError);
  AlignmentMap other = id;
  other.src_language = "de";
  CHECK_THROWS_AS(apply_alignment(other, s), UsageError);
}

TEST_CASE("alignment maps and dictionaries round-trip") {
  auto dir = testing::scratch("align_io");
  auto p = planted(100, 4, 0.0, 9);
  RcslsConfig c;
  c.epochs = 2;
  c.batch_size = 32;
  auto m = rcsls_train(p.src, p.tgt, p.dict, c);
  save_alignment(m, dir / "w.json");
  auto back = load_alignment(dir / "w.json");
  CHECK((back.w - m.w).norm() == 0.0);
  CHECK(back.method == AlignMethod::kRcsls);
  CHECK(back.src_language == "es");
  CHECK(back.objective_trace == m.objective_trace);

  testing::write(dir / "d.txt", "perro dog\ngato cat\ngato kitty\n");
  auto d = read_dictionary(dir / "d.txt", "es", "en");
  CHECK(d.entries.size() == 3);
  CHECK(d.entries[2].second == "kitty");
  testing::write(dir / "bad.txt", "one\n");
  CHECK_THROWS_AS(read_dictionary(dir / "bad.txt"), DataError);
  testing::write(dir / "bad.json", "{\"dim\": 2, \"matrix\": [1, 2, 3]}");
  CHECK_THROWS_AS(load_alignment(dir / "bad.json"), DataError);
  CHECK(parse_align_method("procrustes") == AlignMethod::kProcrustes);
  CHECK_THROWS_AS(parse_align_method("magic"), UsageError);
}
