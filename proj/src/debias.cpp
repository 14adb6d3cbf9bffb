#include "mlbias/debias.hpp"

#include <cmath>

#include "mlbias/error.hpp"
#include "mlbias/text.hpp"

namespace mlbias {

namespace {

constexpr double kDegenerate = 1e-12;

bool excluded(const std::set<std::string>& exclusions, const std::string& word) {
  return exclusions.count(word) != 0 || exclusions.count(text::to_lower(word)) != 0;
}

GenderSubspace single(const Vector& g) {
  if (std::abs(g.norm() - 1.0) > 1e-9) throw UsageError("gender direction must have unit norm");
  GenderSubspace s;
  s.basis = g;
  return s;
}

}  // namespace

void DebiasConfig::finalize() {
  if (definitional_pairs.empty()) throw DataError("debias config: no definitional pairs");
  if (n_components == 0) throw UsageError("debias config: n_components must be at least 1");
  for (const auto* list : {&definitional_pairs, &equalize_pairs}) {
    for (const auto& [m, f] : *list) {
      if (m.empty() || f.empty()) throw DataError("debias config: empty word in pair");
      exclusions.insert(m);
      exclusions.insert(f);
    }
  }
}

DebiasConfig read_debias_config(const std::filesystem::path& path) {
  DebiasConfig config;
  std::string section;
  for (const auto& row : text::read_table(path)) {
    const auto& f = row.fields;
    const std::string loc = path.string() + ":" + std::to_string(row.line);
    if (f.size() == 1 && f[0].size() > 2 && f[0].front() == '[' && f[0].back() == ']') {
      section = f[0].substr(1, f[0].size() - 2);
      if (section != "definitional" && section != "equalize" && section != "exclude" && section != "options") {
        throw DataError(loc + ": unknown section [" + section + "]");
      }
      continue;
    }
    if (section == "definitional" || section == "equalize") {
      if (f.size() != 2) throw DataError(loc + ": expected male<TAB>female");
      (section == "definitional" ? config.definitional_pairs : config.equalize_pairs).emplace_back(f[0], f[1]);
    } else if (section == "exclude") {
      for (const auto& w : f) {
        if (!w.empty()) config.exclusions.insert(w);
      }
    } else if (section == "options") {
      if (f.size() != 2) throw DataError(loc + ": expected key<TAB>value");
      if (f[0] == "n_components") {
        try {
          config.n_components = std::stoul(f[1]);
        } catch (const std::exception&) {
          throw DataError(loc + ": n_components must be an integer");
        }
      } else {
        throw DataError(loc + ": unknown option '" + f[0] + "'");
      }
    } else {
      throw DataError(loc + ": entry outside of a section");
    }
  }
  config.finalize();
  return config;
}

GenderSubspace gender_subspace(const EmbeddingSpace& space, const std::vector<WordPair>& definitional_pairs,
                               std::size_t n_components) {
  if (n_components == 0 || n_components > space.dim()) throw UsageError("gender_subspace: bad n_components");
  std::vector<Vector> centered;
  Vector male_mean = Vector::Zero(static_cast<Eigen::Index>(space.dim()));
  std::size_t found = 0;
  for (const auto& [m, f] : definitional_pairs) {
    const auto im = space.find(m);
    const auto iff = space.find(f);
    if (!im || !iff) continue;
    const Vector a = space.row(*im);
    const Vector b = space.row(*iff);
    const Vector mid = (a + b) / 2.0;
    centered.push_back(a - mid);
    centered.push_back(b - mid);
    male_mean += a;
    ++found;
  }
  if (found == 0) throw DataError("gender_direction: no definitional pair in vocabulary");
  male_mean /= static_cast<double>(found);

  Eigen::MatrixXd c(static_cast<Eigen::Index>(centered.size()), static_cast<Eigen::Index>(space.dim()));
  for (std::size_t i = 0; i < centered.size(); ++i) c.row(static_cast<Eigen::Index>(i)) = centered[i].transpose();
  if (c.norm() < kDegenerate) throw NumericalError("gender_direction: definitional pairs have zero variance");

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(c, Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  const auto available = static_cast<std::size_t>((sv.array() > kDegenerate * sv[0]).count());
  if (n_components > available) {
    throw NumericalError("gender_direction: only " + std::to_string(available) + " informative directions");
  }
  GenderSubspace out;
  out.basis = svd.matrixV().leftCols(static_cast<Eigen::Index>(n_components));
  if (male_mean.dot(out.basis.col(0)) < 0.0) out.basis.col(0) *= -1.0;
  return out;
}

Vector gender_direction(const EmbeddingSpace& space, const std::vector<WordPair>& definitional_pairs) {
  return gender_subspace(space, definitional_pairs, 1).direction();
}

EmbeddingSpace neutralize(const EmbeddingSpace& space, const GenderSubspace& subspace,
                          const std::set<std::string>& exclusions, DebiasWarnings* warnings) {
  if (static_cast<std::size_t>(subspace.basis.rows()) != space.dim()) {
    throw UsageError("neutralize: subspace dimension mismatch");
  }
  const Eigen::MatrixXd& b = subspace.basis;
  Matrix m = space.matrix();
  bool all_unit = space.normalized();
  for (std::size_t i = 0; i < space.size(); ++i) {
    if (excluded(exclusions, space.word(i))) continue;
    const auto r = static_cast<Eigen::Index>(i);
    const Vector w = m.row(r).transpose();
    const Vector out = w - b * (b.transpose() * w);
    const double n = out.norm();
    if (n <= kDegenerate * std::max(1.0, w.norm())) {
      if (warnings != nullptr) warnings->parallel_words.push_back(space.word(i));
      if (std::abs(w.norm() - 1.0) > 1e-6) all_unit = false;
      continue;
    }
    m.row(r) = (out / n).transpose();
  }
  if (!all_unit) {
    all_unit = true;
    for (Eigen::Index r = 0; r < m.rows() && all_unit; ++r) all_unit = std::abs(m.row(r).norm() - 1.0) <= 1e-6;
  }
  return space.with_matrix(std::move(m), all_unit);
}

EmbeddingSpace neutralize(const EmbeddingSpace& space, const Vector& g, const std::set<std::string>& exclusions,
                          DebiasWarnings* warnings) {
  return neutralize(space, single(g), exclusions, warnings);
}

EmbeddingSpace equalize(const EmbeddingSpace& space, const std::vector<WordPair>& pairs,
                        const GenderSubspace& subspace, DebiasWarnings* warnings) {
  const Eigen::MatrixXd& basis = subspace.basis;
  Matrix m = space.matrix();
  for (const auto& [male, female] : pairs) {
    const auto ia = space.find(male);
    const auto ib = space.find(female);
    if (!ia || !ib) {
      if (warnings != nullptr) warnings->skipped_pairs.push_back(male + "/" + female);
      continue;
    }
    const Vector a = m.row(static_cast<Eigen::Index>(*ia)).transpose();
    const Vector b = m.row(static_cast<Eigen::Index>(*ib)).transpose();
    const Vector mu = (a + b) / 2.0;
    const Vector mu_b = basis * (basis.transpose() * mu);
    const Vector nu = mu - mu_b;
    const double nu_sq = nu.squaredNorm();
    if (nu_sq > 1.0 && warnings != nullptr) warnings->clamped_pairs.push_back(male + "/" + female);
    const double z = std::sqrt(std::max(0.0, 1.0 - nu_sq));
    // Within the bias subspace, a moves away from the pair midpoint along
    // this direction; a tie picks the first basis vector.
    const Vector offset = basis * (basis.transpose() * a) - mu_b;
    const double on = offset.norm();
    const Vector dir = on > kDegenerate ? Vector(offset / on) : Vector(basis.col(0));
    m.row(static_cast<Eigen::Index>(*ia)) = (nu + z * dir).transpose();
    m.row(static_cast<Eigen::Index>(*ib)) = (nu - z * dir).transpose();
  }
  bool all_unit = true;
  for (Eigen::Index r = 0; r < m.rows() && all_unit; ++r) all_unit = std::abs(m.row(r).norm() - 1.0) <= 1e-6;
  return space.with_matrix(std::move(m), all_unit);
}

EmbeddingSpace equalize(const EmbeddingSpace& space, const std::vector<WordPair>& pairs, const Vector& g,
                        DebiasWarnings* warnings) {
  return equalize(space, pairs, single(g), warnings);
}

EmbeddingSpace hard_debias(const EmbeddingSpace& space, DebiasConfig config, DebiasWarnings* warnings) {
  config.finalize();
  const auto subspace = gender_subspace(space, config.definitional_pairs, config.n_components);
  auto out = neutralize(space, subspace, config.exclusions, warnings);
  out = equalize(out, config.equalize_pairs, subspace, warnings);
  return out.with_language(space.language() + "deb");
}

}  // namespace mlbias
