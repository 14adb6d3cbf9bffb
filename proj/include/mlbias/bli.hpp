#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "mlbias/alignment.hpp"
#include "mlbias/embedding_store.hpp"

namespace mlbias {

// 2 cos(x, y) - r_x - r_y.
double csls_score(const Vector& x, const Vector& y, double r_x, double r_y);

struct BliQuery {
  std::string source;
  std::vector<std::string> gold;  // in-pool translations
  std::string predicted;
  bool hit = false;
};

struct BliResult {
  double precision_at_1 = 0.0;         // hits / evaluated, percent
  double precision_at_1_strict = 0.0;  // hits / all distinct sources, percent
  std::size_t n_evaluated = 0;
  std::size_t n_skipped_oov = 0;
  std::size_t hits = 0;
  Retrieval retrieval;
  std::vector<BliQuery> queries;

  nlohmann::json to_json(bool include_queries = true) const;
};

struct BliOptions {
  Retrieval retrieval = Retrieval::csls(10);
  std::size_t candidate_pool = kDefaultMaxVocab;  // first rows of the target space
  std::size_t source_pool = kDefaultMaxVocab;     // mapped source rows for r_y
};

// Precision@1 of translation retrieval. Each distinct source word with at
// least one gold translation inside the candidate pool is queried once; a
// hit is any gold match.
BliResult evaluate_bli(const EmbeddingSpace& src_aligned, const EmbeddingSpace& tgt, const LexiconDictionary& dict,
                       const BliOptions& options = {});

}  // namespace mlbias
