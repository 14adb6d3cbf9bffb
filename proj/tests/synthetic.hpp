#pragma once

#include <random>
#include <string>
#include <vector>

#include "mlbias/corpus.hpp"
#include "mlbias/embedding_store.hpp"
#include "support.hpp"

namespace synthetic {

// Occupation k owns keyword tokens "k<k>_<j>" clustered around a random
// center; "filler<j>" tokens are generic noise shared by everyone.
struct Corpus {
  mlbias::EmbeddingSpace space;
  std::vector<mlbias::BioRecord> records;
};

inline mlbias::EmbeddingSpace keyword_space(std::size_t n_occ, std::size_t keywords, std::size_t fillers,
                                            Eigen::Index dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  mlbias::Matrix centers = testing::unit_rows(testing::gaussian(static_cast<Eigen::Index>(n_occ), dim, rng));
  std::vector<std::string> words;
  std::vector<mlbias::Vector> rows;
  std::normal_distribution<double> noise(0.0, 0.35);
  for (std::size_t k = 0; k < n_occ; ++k) {
    for (std::size_t j = 0; j < keywords; ++j) {
      words.push_back("k" + std::to_string(k) + "_" + std::to_string(j));
      mlbias::Vector v = centers.row(static_cast<Eigen::Index>(k)).transpose();
      for (Eigen::Index d = 0; d < dim; ++d) v(d) += noise(rng);
      rows.push_back(v);
    }
  }
  for (std::size_t j = 0; j < fillers; ++j) {
    words.push_back("filler" + std::to_string(j));
    rows.push_back(testing::gaussian(1, dim, rng).row(0).transpose());
  }
  mlbias::Matrix m(static_cast<Eigen::Index>(rows.size()), dim);
  for (std::size_t i = 0; i < rows.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
  return mlbias::normalize(mlbias::EmbeddingSpace("en", words, m));
}

// n_occ occupations with per_gender records of each gender. When corrupt is
// set, the female records of occupation 0 use occupation 1's keywords.
inline Corpus planted_bias(std::size_t n_occ, std::size_t per_gender, bool corrupt, std::uint64_t seed) {
  const std::size_t keywords = 6;
  const std::size_t fillers = 30;
  Corpus c{keyword_space(n_occ, keywords, fillers, 16, seed), {}};
  std::mt19937_64 rng(seed + 1);
  for (std::size_t k = 0; k < n_occ; ++k) {
    for (int g = 0; g < 2; ++g) {
      for (std::size_t i = 0; i < per_gender; ++i) {
        mlbias::BioRecord r;
        r.language = "en";
        r.occupation = "occ" + std::to_string(k);
        r.gender = g == 0 ? mlbias::Gender::kMale : mlbias::Gender::kFemale;
        const std::size_t source = (corrupt && k == 0 && g == 1) ? 1 : k;
        for (int t = 0; t < 3; ++t) r.tokens.push_back("k" + std::to_string(source) + "_" + std::to_string(rng() % keywords));
        for (int t = 0; t < 4; ++t) r.tokens.push_back("filler" + std::to_string(rng() % fillers));
        r.scrubbed = true;
        c.records.push_back(std::move(r));
      }
    }
  }
  return c;
}

}  // namespace synthetic
