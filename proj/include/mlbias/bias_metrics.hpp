#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mlbias/embedding_store.hpp"

namespace mlbias {

struct OccupationPair {
  std::string masculine;
  std::string feminine;
  std::string tag;  // optional category, e.g. "strong" or "weak"
};

struct SeedPair {
  std::string male;
  std::string female;
};

// Masculine/feminine occupation forms plus the gender seed words for one
// language. Single-form occupations carry the same word in both slots.
struct OccupationPairSet {
  std::string language;
  std::vector<OccupationPair> occ_pairs;
  std::vector<SeedPair> seed_pairs;

  std::vector<std::string> male_seeds() const;
  std::vector<std::string> female_seeds() const;
  // Throws DataError if either list is empty or contains empty words.
  void validate() const;
  // Pairs whose tag equals `tag`.
  OccupationPairSet filtered(const std::string& tag) const;
};

// "masculine<TAB>feminine[<TAB>tag]" per line, '#' comments ignored.
std::vector<OccupationPair> read_occupation_pairs(const std::filesystem::path& path);
// "male<TAB>female" per line.
std::vector<SeedPair> read_seed_pairs(const std::filesystem::path& path);
OccupationPairSet load_pair_set(const std::filesystem::path& pairs, const std::filesystem::path& seeds,
                                std::string language = {});

// Mean of (1 - cos(word, s)) over the seeds present in the space.
double dis(const EmbeddingSpace& space, const std::string& word, const std::vector<std::string>& seeds);

struct PairBias {
  std::string masculine;
  std::string feminine;
  std::string tag;
  double dis_m = 0.0;
  double dis_f = 0.0;
  double bias = 0.0;  // |dis_m - dis_f|
};

struct BiasReport {
  std::string language;
  double inbias = 0.0;
  std::vector<PairBias> per_pair;
  std::size_t n_evaluated = 0;
  std::size_t n_skipped = 0;
  std::vector<std::string> skipped;  // "masculine/feminine" of OOV pairs
  std::vector<std::string> missing_seeds;
  std::optional<double> p_value;
};

// Mean over evaluable pairs of |dis(O_M, S_M) - dis(O_F, S_F)|.
BiasReport inbias(const EmbeddingSpace& space, const OccupationPairSet& pairs);

struct PairDelta {
  OccupationPair pair;
  double bias_a = 0.0;
  double bias_b = 0.0;
  double delta = 0.0;  // |bias_a - bias_b|
};

struct DeltaRanking {
  std::vector<PairDelta> ranked;  // descending delta, ties in list order
  std::vector<std::string> skipped;
};

DeltaRanking pair_bias_delta(const EmbeddingSpace& space_a, const EmbeddingSpace& space_b,
                             const OccupationPairSet& pairs);

struct ProjectionPoint {
  std::string word;
  double coordinate = 0.0;
};

struct ProjectionResult {
  std::vector<ProjectionPoint> points;
  std::vector<std::string> missing;
  double avg_male = 0.0;    // projection of the mean male-seed vector
  double avg_female = 0.0;  // projection of the mean female-seed vector
  Vector direction;
};

// Projects unit word vectors onto g = unit(mean over seed pairs of
// (male - female)). With single_pair set, only that seed pair defines g.
ProjectionResult gender_projection(const EmbeddingSpace& space, const std::vector<std::string>& words,
                                   const std::vector<SeedPair>& seed_pairs,
                                   std::optional<std::size_t> single_pair = std::nullopt);

enum class SignificanceMethod { kBootstrap, kPermutation };

// Two-sided paired test of mean(a) != mean(b). Deterministic for a fixed
// seed; each replicate draws from its own derived generator so the result
// does not depend on evaluation order.
double significance_test(const std::vector<double>& a, const std::vector<double>& b,
                         std::size_t replicates = 10000, std::uint64_t seed = 0,
                         SignificanceMethod method = SignificanceMethod::kBootstrap);

// Per-pair bias values of two reports aligned by (masculine, feminine), for
// pairs evaluated in both.
std::pair<std::vector<double>, std::vector<double>> paired_biases(const BiasReport& a,
                                                                  const BiasReport& b);

}  // namespace mlbias
