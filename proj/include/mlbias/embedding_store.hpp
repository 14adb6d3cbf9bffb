#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace mlbias {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

// Vocabulary cap applied when a command does not say otherwise.
inline constexpr std::size_t kDefaultMaxVocab = 200000;

// Dense word-vector table for one language. Immutable after construction;
// transformations return new spaces.
class EmbeddingSpace {
 public:
  EmbeddingSpace() = default;
  // Validates the invariants: unique words, finite entries, unit rows when
  // normalized is set. Throws DataError otherwise.
  EmbeddingSpace(std::string language, std::vector<std::string> words, Matrix matrix,
                 bool normalized = false);

  const std::string& language() const { return language_; }
  std::size_t dim() const { return static_cast<std::size_t>(matrix_.cols()); }
  std::size_t size() const { return words_.size(); }
  bool empty() const { return words_.empty(); }
  bool normalized() const { return normalized_; }
  const std::vector<std::string>& words() const { return words_; }
  const std::string& word(std::size_t i) const { return words_[i]; }
  const Matrix& matrix() const { return matrix_; }
  Vector row(std::size_t i) const { return matrix_.row(static_cast<Eigen::Index>(i)).transpose(); }

  // Exact match first, then the lowercase form of the query.
  std::optional<std::size_t> find(std::string_view word) const;
  bool contains(std::string_view word) const { return find(word).has_value(); }
  // Throws DataError when the word is absent.
  Vector vector(std::string_view word) const;

  // Same vocabulary with a replacement matrix (re-validated).
  EmbeddingSpace with_matrix(Matrix matrix, bool normalized) const;
  EmbeddingSpace with_language(std::string language) const;
  // First n rows (frequency order in published releases).
  EmbeddingSpace head(std::size_t n) const;

  // Language tag plus a content hash of vocabulary and values.
  std::string fingerprint() const;

 private:
  std::string language_;
  std::vector<std::string> words_;
  std::unordered_map<std::string, std::size_t> index_;
  Matrix matrix_;
  bool normalized_ = false;
};

struct LoadOptions {
  std::optional<std::size_t> limit;
  std::optional<std::size_t> expected_dim;
  std::string language;
};

struct LoadResult {
  EmbeddingSpace space;
  std::size_t duplicates = 0;  // words seen again after their first row
  std::size_t header_count = 0;
};

// fastText text format: "<count> <dim>" header, then "<word> <dim floats>".
LoadResult load_vectors(const std::filesystem::path& path, const LoadOptions& options = {});
// Same format, 6 significant digits per value.
void save_vectors(const EmbeddingSpace& space, const std::filesystem::path& path);

// Divides each row by its L2 norm. Throws NumericalError naming the first
// zero row. Idempotent.
EmbeddingSpace normalize(const EmbeddingSpace& space);

// Convenience used by the CLI: load then normalize.
EmbeddingSpace load_normalized(const std::filesystem::path& path, const LoadOptions& options = {});

// dot(u,v)/(|u||v|) clamped to [-1,1]. Throws on zero vectors or dim mismatch.
double cosine(const Vector& u, const Vector& v);

struct Neighbor {
  std::string word;
  std::size_t index = 0;
  double score = 0.0;
};

struct NeighborList {
  std::string query;
  std::vector<Neighbor> entries;  // descending score, ties by ascending index
};

enum class RetrievalKind { kCosine, kCsls };

struct Retrieval {
  RetrievalKind kind = RetrievalKind::kCosine;
  std::size_t n = 10;  // CSLS neighborhood size

  static Retrieval cosine() { return {}; }
  static Retrieval csls(std::size_t n = 10) { return {RetrievalKind::kCsls, n}; }
};

// Mean cosine of each row of `rows` to its n nearest rows of `pool`.
// Both matrices are expected to hold unit rows. When exclude_self is set,
// row i of `rows` skips row i of `pool` (used when rows and pool coincide).
Vector mean_top_similarity(const Matrix& rows, const Matrix& pool, std::size_t n,
                           bool exclude_self = false);

// Exact brute-force top-k retrieval. For CSLS the per-row penalty r_y is
// taken from `row_penalty` when provided; otherwise it is the mean cosine of
// each stored row to its n nearest other rows of the same space.
NeighborList knn(const EmbeddingSpace& space, const Vector& query, std::size_t k,
                 const Retrieval& retrieval = {}, const Vector* row_penalty = nullptr,
                 std::string query_label = {});

// Top-k of a precomputed score vector, ties broken by ascending index.
std::vector<std::size_t> top_k_indices(const Vector& scores, std::size_t k);

struct MeanVectorResult {
  Vector mean;
  std::vector<std::string> missing;
};

// Arithmetic mean of the rows for the words found. Throws DataError when no
// word is present.
MeanVectorResult mean_vector(const EmbeddingSpace& space, const std::vector<std::string>& words);

// Returns a copy of v scaled to unit length; throws NumericalError on zero.
Vector unit(const Vector& v);

}  // namespace mlbias
