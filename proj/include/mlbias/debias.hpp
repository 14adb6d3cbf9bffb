#pragma once

#include <filesystem>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "mlbias/embedding_store.hpp"

namespace mlbias {

using WordPair = std::pair<std::string, std::string>;  // (male, female)

struct DebiasConfig {
  std::vector<WordPair> definitional_pairs;
  std::vector<WordPair> equalize_pairs;
  std::set<std::string> exclusions;
  std::size_t n_components = 1;

  // Adds every pair word to the exclusions and checks the invariants.
  void finalize();
};

// Sectioned TSV:
//   [definitional]  male<TAB>female
//   [equalize]      male<TAB>female
//   [exclude]       word
//   [options]       n_components<TAB>1
DebiasConfig read_debias_config(const std::filesystem::path& path);

// Orthonormal basis of the bias subspace, one column per component.
struct GenderSubspace {
  Matrix basis;  // dim x n_components
  Vector direction() const { return basis.col(0); }
};

// Top principal directions of the pair-centered definitional vectors. The
// first direction is oriented so the mean male vector projects >= 0.
GenderSubspace gender_subspace(const EmbeddingSpace& space, const std::vector<WordPair>& definitional_pairs,
                               std::size_t n_components = 1);
Vector gender_direction(const EmbeddingSpace& space, const std::vector<WordPair>& definitional_pairs);

struct DebiasWarnings {
  std::vector<std::string> parallel_words;    // left untouched by neutralize
  std::vector<std::string> skipped_pairs;     // equalize pairs with OOV words
  std::vector<std::string> clamped_pairs;     // |nu| > 1 during equalize
};

EmbeddingSpace neutralize(const EmbeddingSpace& space, const GenderSubspace& subspace,
                          const std::set<std::string>& exclusions, DebiasWarnings* warnings = nullptr);
EmbeddingSpace neutralize(const EmbeddingSpace& space, const Vector& g, const std::set<std::string>& exclusions,
                          DebiasWarnings* warnings = nullptr);

EmbeddingSpace equalize(const EmbeddingSpace& space, const std::vector<WordPair>& pairs,
                        const GenderSubspace& subspace, DebiasWarnings* warnings = nullptr);
EmbeddingSpace equalize(const EmbeddingSpace& space, const std::vector<WordPair>& pairs, const Vector& g,
                        DebiasWarnings* warnings = nullptr);

// direction -> neutralize -> equalize. Result language is "<lang>deb".
EmbeddingSpace hard_debias(const EmbeddingSpace& space, DebiasConfig config, DebiasWarnings* warnings = nullptr);

}  // namespace mlbias
