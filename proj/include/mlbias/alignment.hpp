#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "mlbias/embedding_store.hpp"

namespace mlbias {

// Bilingual word-pair supervision. A source word may appear with several
// translations.
struct LexiconDictionary {
  std::string src_language;
  std::string tgt_language;
  std::vector<std::pair<std::string, std::string>> entries;
};

// Whitespace-separated "source target" per line.
LexiconDictionary read_dictionary(const std::filesystem::path& path, std::string src_language = {},
                                  std::string tgt_language = {});

enum class AlignMethod { kProcrustes, kRcsls };
std::string to_string(AlignMethod m);
AlignMethod parse_align_method(const std::string& s);

// Maps a row vector x of the source space to x * W.
struct AlignmentMap {
  Matrix w;
  std::string src_language;
  std::string tgt_language;
  AlignMethod method = AlignMethod::kProcrustes;
  std::size_t epochs = 0;
  double final_objective = 0.0;
  std::size_t dictionary_size = 0;  // usable pairs
  std::vector<double> objective_trace;

  std::size_t dim() const { return static_cast<std::size_t>(w.rows()); }
  nlohmann::json to_json() const;
  static AlignmentMap from_json(const nlohmann::json& j);
};

void save_alignment(const AlignmentMap& map, const std::filesystem::path& path);
AlignmentMap load_alignment(const std::filesystem::path& path);

// Dictionary rows resolved against two spaces. Entries with an OOV word are
// dropped and counted.
struct ResolvedPairs {
  std::vector<std::size_t> src_rows;
  std::vector<std::size_t> tgt_rows;
  std::size_t dropped = 0;
};
ResolvedPairs resolve_pairs(const EmbeddingSpace& src, const EmbeddingSpace& tgt,
                            const LexiconDictionary& dict);

// Orthogonal W minimizing ||XW - Y||_F, via SVD of X^T Y.
AlignmentMap procrustes(const EmbeddingSpace& src, const EmbeddingSpace& tgt, const LexiconDictionary& dict);
Matrix procrustes_solve(const Matrix& x, const Matrix& y);

struct RcslsConfig {
  std::size_t batch_size = 5000;
  std::size_t max_sup = 200000;
  std::size_t max_neg = 200000;
  std::size_t knn = 10;
  std::size_t epochs = 10;
  double lr = 1.0;
  double min_lr = 1e-4;
  bool orthogonal = false;
  bool spectral = false;  // clip singular values of W to [0, 1] after every step
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
};

// Relaxed CSLS objective averaged over the supervision pairs:
//   2 <xW, y> - mean_{y' in N_n(xW)} <xW, y'> - mean_{x' in N_n(y)} <x'W, y>
// with neighborhoods drawn from the first max_neg rows of each space.
double rcsls_objective(const Matrix& w, const Matrix& x, const Matrix& y, const Matrix& src_pool,
                       const Matrix& tgt_pool, std::size_t knn);

// Returns the objective and writes the ascent direction into grad.
double rcsls_objective_and_gradient(const Matrix& w, const Matrix& x, const Matrix& y,
                                    const Matrix& src_pool, const Matrix& tgt_pool, std::size_t knn,
                                    Matrix& grad);

using EpochLogger = std::function<void(std::size_t epoch, double objective, double lr)>;

// Minibatch gradient ascent on the relaxed CSLS objective from the
// Procrustes solution. The learning rate halves (and the iterate reverts)
// whenever the epoch objective regresses; the best iterate is returned.
AlignmentMap rcsls_train(const EmbeddingSpace& src, const EmbeddingSpace& tgt, const LexiconDictionary& dict,
                         const RcslsConfig& config = {}, const EpochLogger& log = {});

// Rows become unit(x W); language tag becomes "src-tgt".
EmbeddingSpace apply_alignment(const AlignmentMap& map, const EmbeddingSpace& space);

// Nearest-neighbor dictionary precision (percent) of mapped source rows
// against the target rows of the same pairs; used for training diagnostics.
double dictionary_precision(const Matrix& w, const Matrix& x, const Matrix& y);

Matrix orthogonalize(const Matrix& m);
Matrix clip_spectral(const Matrix& m);

}  // namespace mlbias
