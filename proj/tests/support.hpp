#pragma once

#include <cmath>
#include <filesystem>
#include <random>
#include <string>
#include <unistd.h>
#include <utility>
#include <vector>

#include "mlbias/embedding_store.hpp"
#include "mlbias/text.hpp"

namespace testing {

using mlbias::EmbeddingSpace;
using mlbias::Matrix;
using mlbias::Vector;

inline EmbeddingSpace space_of(const std::vector<std::pair<std::string, std::vector<double>>>& rows,
                               bool unit_rows = true, std::string language = "xx") {
  std::vector<std::string> words;
  const auto dim = static_cast<Eigen::Index>(rows.empty() ? 0 : rows.front().second.size());
  Matrix m(static_cast<Eigen::Index>(rows.size()), dim);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    words.push_back(rows[i].first);
    for (Eigen::Index j = 0; j < dim; ++j) m(static_cast<Eigen::Index>(i), j) = rows[i].second[j];
  }
  EmbeddingSpace s(language, words, m, false);
  return unit_rows ? mlbias::normalize(s) : s;
}

inline Matrix gaussian(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng, double sigma = 1.0) {
  std::normal_distribution<double> nd(0.0, sigma);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = nd(rng);
  return m;
}

inline Matrix unit_rows(Matrix m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) m.row(i).normalize();
  return m;
}

inline Matrix random_orthogonal(Eigen::Index d, std::mt19937_64& rng) {
  Eigen::MatrixXd a = gaussian(d, d, rng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  Eigen::MatrixXd q = qr.householderQ();
  return q;
}

inline std::vector<std::string> numbered(const std::string& prefix, std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(prefix + std::to_string(i));
  return out;
}

inline EmbeddingSpace random_space(const std::vector<std::string>& words, Eigen::Index dim, std::mt19937_64& rng,
                                   std::string language = "xx") {
  Matrix m = unit_rows(gaussian(static_cast<Eigen::Index>(words.size()), dim, rng));
  return EmbeddingSpace(std::move(language), words, m, true);
}

// Fresh per-test scratch directory.
inline std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("mlbias_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline void write(const std::filesystem::path& p, const std::string& s) { mlbias::text::write_file(p, s); }

}  // namespace testing
