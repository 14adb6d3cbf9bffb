#include "mlbias/bli.hpp"

#include <algorithm>
#include <unordered_map>

#include "mlbias/error.hpp"

namespace mlbias {

double csls_score(const Vector& x, const Vector& y, double r_x, double r_y) {
  return 2.0 * cosine(x, y) - r_x - r_y;
}

nlohmann::json BliResult::to_json(bool include_queries) const {
  nlohmann::json j;
  j["p_at_1_skip"] = precision_at_1;
  j["p_at_1_strict"] = precision_at_1_strict;
  j["n_evaluated"] = n_evaluated;
  j["n_skipped_oov"] = n_skipped_oov;
  j["hits"] = hits;
  j["retrieval"] = retrieval.kind == RetrievalKind::kCsls ? "csls" : "nn";
  if (retrieval.kind == RetrievalKind::kCsls) j["n"] = retrieval.n;
  if (include_queries) {
    auto& qs = j["queries"] = nlohmann::json::array();
    for (const auto& q : queries) {
      qs.push_back({{"source", q.source}, {"gold", q.gold}, {"predicted", q.predicted}, {"hit", q.hit}});
    }
  }
  return j;
}

BliResult evaluate_bli(const EmbeddingSpace& src_aligned, const EmbeddingSpace& tgt, const LexiconDictionary& dict,
                       const BliOptions& options) {
  if (src_aligned.dim() != tgt.dim()) throw UsageError("bli: source and target dimensions differ");
  if (dict.entries.empty()) throw DataError("bli: empty dictionary");
  if (options.candidate_pool == 0 || tgt.empty()) throw DataError("bli: empty candidate pool");
  if (options.retrieval.kind == RetrievalKind::kCsls && options.retrieval.n == 0) {
    throw UsageError("bli: CSLS neighborhood must be at least 1");
  }
  const EmbeddingSpace src_unit = normalize(src_aligned);
  const EmbeddingSpace pool = normalize(tgt.head(options.candidate_pool));

  // Distinct sources in first-appearance order with their in-pool golds.
  std::vector<std::string> sources;
  std::unordered_map<std::string, std::vector<std::string>> golds;
  for (const auto& [s, t] : dict.entries) {
    auto [it, inserted] = golds.try_emplace(s);
    if (inserted) sources.push_back(s);
    const auto ti = pool.find(t);
    if (ti && std::find(it->second.begin(), it->second.end(), pool.word(*ti)) == it->second.end()) {
      it->second.push_back(pool.word(*ti));
    }
  }

  BliResult result;
  result.retrieval = options.retrieval;
  std::vector<std::size_t> query_rows;
  for (const auto& s : sources) {
    const auto si = src_unit.find(s);
    if (!si || golds[s].empty()) {
      ++result.n_skipped_oov;
      continue;
    }
    query_rows.push_back(*si);
    result.queries.push_back({s, golds[s], {}, false});
  }

  if (!query_rows.empty()) {
    Matrix q(static_cast<Eigen::Index>(query_rows.size()), static_cast<Eigen::Index>(src_unit.dim()));
    for (std::size_t i = 0; i < query_rows.size(); ++i) {
      q.row(static_cast<Eigen::Index>(i)) = src_unit.matrix().row(static_cast<Eigen::Index>(query_rows[i]));
    }
    Vector r_x;
    Vector r_y;
    const bool csls = options.retrieval.kind == RetrievalKind::kCsls;
    if (csls) {
      const std::size_t n = options.retrieval.n;
      const EmbeddingSpace src_pool = src_unit.head(std::max<std::size_t>(1, options.source_pool));
      r_x = mean_top_similarity(q, pool.matrix(), n);
      r_y = mean_top_similarity(pool.matrix(), src_pool.matrix(), n);
    }
    constexpr Eigen::Index kBlock = 512;
    for (Eigen::Index start = 0; start < q.rows(); start += kBlock) {
      const Eigen::Index len = std::min(kBlock, q.rows() - start);
      Matrix scores = q.middleRows(start, len) * pool.matrix().transpose();
      scores = scores.cwiseMax(-1.0).cwiseMin(1.0);
      for (Eigen::Index r = 0; r < len; ++r) {
        Vector row = scores.row(r).transpose();
        if (csls) row = 2.0 * row - r_y - Vector::Constant(row.size(), r_x[start + r]);
        const std::size_t best = top_k_indices(row, 1).front();
        auto& query = result.queries[static_cast<std::size_t>(start + r)];
        query.predicted = pool.word(best);
        query.hit = std::find(query.gold.begin(), query.gold.end(), query.predicted) != query.gold.end();
        result.hits += query.hit ? 1 : 0;
      }
    }
  }
  result.n_evaluated = result.queries.size();
  const std::size_t total = result.n_evaluated + result.n_skipped_oov;
  result.precision_at_1 =
      result.n_evaluated == 0 ? 0.0 : 100.0 * static_cast<double>(result.hits) / static_cast<double>(result.n_evaluated);
  result.precision_at_1_strict = total == 0 ? 0.0 : 100.0 * static_cast<double>(result.hits) / static_cast<double>(total);
  return result;
}

}  // namespace mlbias
