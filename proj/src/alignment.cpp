#include "mlbias/alignment.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "mlbias/error.hpp"
#include "mlbias/rng.hpp"
#include "mlbias/text.hpp"

namespace mlbias {

namespace {

constexpr Eigen::Index kBlockRows = 256;

// For every query row: mean of its k best scores against `scored_pool`, and
// optionally the mean of the corresponding rows of `avg_pool`.
struct KnnMeans {
  Vector mean_score;
  Matrix mean_rows;
};

KnnMeans knn_means(const Matrix& queries, const Matrix& scored_pool, const Matrix* avg_pool, std::size_t k) {
  KnnMeans out;
  out.mean_score.resize(queries.rows());
  if (avg_pool != nullptr) out.mean_rows = Matrix::Zero(queries.rows(), avg_pool->cols());
  const std::size_t take = std::min<std::size_t>(k, static_cast<std::size_t>(scored_pool.rows()));
  for (Eigen::Index start = 0; start < queries.rows(); start += kBlockRows) {
    const Eigen::Index len = std::min(kBlockRows, queries.rows() - start);
    const Matrix sims = queries.middleRows(start, len) * scored_pool.transpose();
    for (Eigen::Index r = 0; r < len; ++r) {
      const Vector scores = sims.row(r).transpose();
      const auto top = top_k_indices(scores, take);
      double sum = 0.0;
      for (std::size_t j : top) {
        const auto jj = static_cast<Eigen::Index>(j);
        sum += scores[jj];
        if (avg_pool != nullptr) out.mean_rows.row(start + r) += avg_pool->row(jj);
      }
      out.mean_score[start + r] = sum / static_cast<double>(take);
      if (avg_pool != nullptr) out.mean_rows.row(start + r) /= static_cast<double>(take);
    }
  }
  return out;
}

Matrix gather_rows(const Matrix& m, const std::vector<std::size_t>& rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(rows[i]));
  }
  return out;
}

Matrix unit_rows(const Matrix& m) {
  Matrix out = m;
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    const double n = out.row(i).norm();
    if (n > 0.0) out.row(i) /= n;
  }
  return out;
}

void check_same_dim(const EmbeddingSpace& src, const EmbeddingSpace& tgt) {
  if (src.dim() != tgt.dim()) {
    throw UsageError("alignment: source dim " + std::to_string(src.dim()) + " != target dim " +
                     std::to_string(tgt.dim()));
  }
}

}  // namespace

LexiconDictionary read_dictionary(const std::filesystem::path& path, std::string src_language,
                                  std::string tgt_language) {
  LexiconDictionary dict{std::move(src_language), std::move(tgt_language), {}};
  for (const auto& row : text::read_table(path, '\n')) {
    const auto fields = text::split_whitespace(row.fields[0]);
    if (fields.size() != 2) {
      throw DataError(path.string() + ":" + std::to_string(row.line) + ": expected 'source target'");
    }
    dict.entries.emplace_back(fields[0], fields[1]);
  }
  if (dict.entries.empty()) throw DataError(path.string() + ": dictionary is empty");
  return dict;
}

std::string to_string(AlignMethod m) { return m == AlignMethod::kRcsls ? "rcsls" : "procrustes"; }

AlignMethod parse_align_method(const std::string& s) {
  if (s == "rcsls") return AlignMethod::kRcsls;
  if (s == "procrustes") return AlignMethod::kProcrustes;
  throw UsageError("unknown alignment method '" + s + "'");
}

nlohmann::json AlignmentMap::to_json() const {
  nlohmann::json j;
  j["dim"] = dim();
  j["method"] = to_string(method);
  j["src"] = src_language;
  j["tgt"] = tgt_language;
  std::vector<double> flat(w.data(), w.data() + w.size());
  j["matrix"] = flat;
  j["metadata"] = {{"epochs", epochs},
                   {"final_objective", final_objective},
                   {"dictionary_size", dictionary_size},
                   {"objective_trace", objective_trace}};
  return j;
}

AlignmentMap AlignmentMap::from_json(const nlohmann::json& j) {
  AlignmentMap m;
  try {
    const auto d = j.at("dim").get<std::size_t>();
    const auto flat = j.at("matrix").get<std::vector<double>>();
    if (flat.size() != d * d) throw DataError("alignment map: matrix has wrong size");
    m.w = Eigen::Map<const Matrix>(flat.data(), static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
    m.method = parse_align_method(j.at("method").get<std::string>());
    m.src_language = j.value("src", "");
    m.tgt_language = j.value("tgt", "");
    if (j.contains("metadata")) {
      const auto& md = j["metadata"];
      m.epochs = md.value("epochs", std::size_t{0});
      m.final_objective = md.value("final_objective", 0.0);
      m.dictionary_size = md.value("dictionary_size", std::size_t{0});
      m.objective_trace = md.value("objective_trace", std::vector<double>{});
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("alignment map: ") + e.what());
  }
  if (!m.w.allFinite()) throw DataError("alignment map: non-finite entries");
  return m;
}

void save_alignment(const AlignmentMap& map, const std::filesystem::path& path) {
  text::write_file(path, map.to_json().dump(1) + "\n");
}

AlignmentMap load_alignment(const std::filesystem::path& path) {
  try {
    return AlignmentMap::from_json(nlohmann::json::parse(text::read_file(path)));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

ResolvedPairs resolve_pairs(const EmbeddingSpace& src, const EmbeddingSpace& tgt, const LexiconDictionary& dict) {
  ResolvedPairs out;
  for (const auto& [s, t] : dict.entries) {
    const auto is = src.find(s);
    const auto it = tgt.find(t);
    if (!is || !it) {
      ++out.dropped;
      continue;
    }
    out.src_rows.push_back(*is);
    out.tgt_rows.push_back(*it);
  }
  return out;
}

Matrix procrustes_solve(const Matrix& x, const Matrix& y) {
  if (x.rows() != y.rows() || x.cols() != y.cols()) throw UsageError("procrustes: shape mismatch");
  const Eigen::MatrixXd m = x.transpose() * y;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  if (svd.info() != Eigen::Success) throw NumericalError("procrustes: SVD failed");
  Matrix w = svd.matrixU() * svd.matrixV().transpose();
  if (!w.allFinite()) throw NumericalError("procrustes: non-finite solution");
  return w;
}

Matrix orthogonalize(const Matrix& m) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(Eigen::MatrixXd(m), Eigen::ComputeFullU | Eigen::ComputeFullV);
  return svd.matrixU() * svd.matrixV().transpose();
}

AlignmentMap procrustes(const EmbeddingSpace& src, const EmbeddingSpace& tgt, const LexiconDictionary& dict) {
  check_same_dim(src, tgt);
  const auto pairs = resolve_pairs(src, tgt, dict);
  if (pairs.src_rows.size() < src.dim()) {
    throw DataError("procrustes: " + std::to_string(pairs.src_rows.size()) + " usable pairs, need at least " +
                    std::to_string(src.dim()) + " (" + std::to_string(pairs.dropped) + " dropped as OOV)");
  }
  AlignmentMap map;
  map.w = procrustes_solve(gather_rows(src.matrix(), pairs.src_rows), gather_rows(tgt.matrix(), pairs.tgt_rows));
  map.src_language = dict.src_language.empty() ? src.language() : dict.src_language;
  map.tgt_language = dict.tgt_language.empty() ? tgt.language() : dict.tgt_language;
  map.method = AlignMethod::kProcrustes;
  map.dictionary_size = pairs.src_rows.size();
  return map;
}

nlohmann::json RcslsConfig::to_json() const {
  return {{"batch_size", batch_size}, {"max_sup", max_sup}, {"max_neg", max_neg}, {"knn", knn},
          {"epochs", epochs},         {"lr", lr},           {"min_lr", min_lr},   {"orthogonal", orthogonal}, {"spectral", spectral},
          {"seed", seed}};
}

double rcsls_objective(const Matrix& w, const Matrix& x, const Matrix& y, const Matrix& src_pool,
                       const Matrix& tgt_pool, std::size_t knn) {
  const Matrix mapped = x * w;
  const Matrix mapped_pool = src_pool * w;
  const double fit = 2.0 * (mapped.array() * y.array()).sum();
  const double fwd = knn_means(mapped, tgt_pool, nullptr, knn).mean_score.sum();
  const double bwd = knn_means(y, mapped_pool, nullptr, knn).mean_score.sum();
  return (fit - fwd - bwd) / static_cast<double>(x.rows());
}

double rcsls_objective_and_gradient(const Matrix& w, const Matrix& x, const Matrix& y, const Matrix& src_pool,
                                    const Matrix& tgt_pool, std::size_t knn, Matrix& grad) {
  const Matrix mapped = x * w;
  const Matrix mapped_pool = src_pool * w;
  const auto fwd = knn_means(mapped, tgt_pool, &tgt_pool, knn);
  const auto bwd = knn_means(y, mapped_pool, &src_pool, knn);
  const auto n = static_cast<double>(x.rows());
  const double f = 2.0 * (mapped.array() * y.array()).sum() - fwd.mean_score.sum() - bwd.mean_score.sum();
  // Neighborhoods are held fixed for the step.
  grad = (2.0 * x.transpose() * y - x.transpose() * fwd.mean_rows - bwd.mean_rows.transpose() * y) / n;
  return f / n;
}

AlignmentMap rcsls_train(const EmbeddingSpace& src, const EmbeddingSpace& tgt, const LexiconDictionary& dict,
                         const RcslsConfig& config, const EpochLogger& log) {
  if (config.batch_size == 0 || config.max_sup == 0 || config.max_neg == 0 || config.knn == 0) {
    throw UsageError("rcsls: batch_size, max_sup, max_neg and knn must be positive");
  }
  if (!(config.lr > 0.0)) throw UsageError("rcsls: learning rate must be positive");
  check_same_dim(src, tgt);

  AlignmentMap map = procrustes(src, tgt, dict);
  map.method = AlignMethod::kRcsls;

  auto pairs = resolve_pairs(src, tgt, dict);
  // Most frequent supervision first (rows are frequency ordered).
  std::vector<std::size_t> order(pairs.src_rows.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return pairs.src_rows[a] < pairs.src_rows[b]; });
  order.resize(std::min(order.size(), config.max_sup));
  std::vector<std::size_t> src_rows;
  std::vector<std::size_t> tgt_rows;
  for (std::size_t i : order) {
    src_rows.push_back(pairs.src_rows[i]);
    tgt_rows.push_back(pairs.tgt_rows[i]);
  }
  const Matrix x = unit_rows(gather_rows(src.matrix(), src_rows));
  const Matrix y = unit_rows(gather_rows(tgt.matrix(), tgt_rows));
  const auto src_pool_rows = static_cast<Eigen::Index>(std::min(config.max_neg, src.size()));
  const auto tgt_pool_rows = static_cast<Eigen::Index>(std::min(config.max_neg, tgt.size()));
  const Matrix src_pool = unit_rows(src.matrix().topRows(src_pool_rows));
  const Matrix tgt_pool = unit_rows(tgt.matrix().topRows(tgt_pool_rows));
  map.dictionary_size = src_rows.size();

  Matrix current = map.w;
  double current_obj = rcsls_objective(current, x, y, src_pool, tgt_pool, config.knn);
  if (!std::isfinite(current_obj)) throw NumericalError("rcsls: non-finite objective at initialization");
  map.objective_trace.push_back(current_obj);
  if (log) log(0, current_obj, config.lr);

  double lr = config.lr;
  std::size_t epochs_run = 0;
  std::vector<std::size_t> idx(src_rows.size());
  Matrix grad;
  for (std::size_t epoch = 1; epoch <= config.epochs && lr >= config.min_lr; ++epoch) {
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    auto rng = make_rng(config.seed, epoch);
    shuffle(idx.begin(), idx.end(), rng);
    Matrix trial = current;
    for (std::size_t start = 0; start < idx.size(); start += config.batch_size) {
      const std::size_t end = std::min(idx.size(), start + config.batch_size);
      const std::vector<std::size_t> batch(idx.begin() + static_cast<std::ptrdiff_t>(start),
                                           idx.begin() + static_cast<std::ptrdiff_t>(end));
      rcsls_objective_and_gradient(trial, gather_rows(x, batch), gather_rows(y, batch), src_pool, tgt_pool,
                                   config.knn, grad);
      trial += lr * grad;
      if (config.spectral) trial = clip_spectral(trial);
    }
    if (config.orthogonal) trial = orthogonalize(trial);
    const double obj = trial.allFinite() ? rcsls_objective(trial, x, y, src_pool, tgt_pool, config.knn)
                                         : std::numeric_limits<double>::quiet_NaN();
    ++epochs_run;
    if (!std::isfinite(obj)) {
      throw NumericalError("rcsls: objective diverged at epoch " + std::to_string(epoch) +
                           "; last finite objective " + std::to_string(current_obj));
    }
    if (obj < current_obj) {
      lr /= 2.0;
    } else {
      current = std::move(trial);
      current_obj = obj;
    }
    map.objective_trace.push_back(current_obj);
    if (log) log(epoch, obj, lr);
  }
  map.w = current;
  map.final_objective = current_obj;
  map.epochs = epochs_run;
  return map;
}

EmbeddingSpace apply_alignment(const AlignmentMap& map, const EmbeddingSpace& space) {
  if (space.dim() != map.dim()) {
    throw UsageError("apply_alignment: space dim " + std::to_string(space.dim()) + " != map dim " +
                     std::to_string(map.dim()));
  }
  if (!map.src_language.empty() && !space.language().empty() && map.src_language != space.language()) {
    throw UsageError("apply_alignment: space language '" + space.language() + "' != map source '" +
                     map.src_language + "'");
  }
  Matrix m = space.matrix() * map.w;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const double n = m.row(i).norm();
    if (n == 0.0) {
      throw NumericalError("apply_alignment: word '" + space.word(static_cast<std::size_t>(i)) +
                           "' maps to the zero vector");
    }
    m.row(i) /= n;
  }
  std::string src = map.src_language.empty() ? space.language() : map.src_language;
  std::string lang = map.tgt_language.empty() ? src : src + "-" + map.tgt_language;
  return EmbeddingSpace(std::move(lang), space.words(), std::move(m), true);
}

double dictionary_precision(const Matrix& w, const Matrix& x, const Matrix& y) {
  if (x.rows() == 0) return 0.0;
  const Matrix mapped = unit_rows(x * w);
  const Matrix targets = unit_rows(y);
  std::size_t hits = 0;
  for (Eigen::Index start = 0; start < mapped.rows(); start += kBlockRows) {
    const Eigen::Index len = std::min(kBlockRows, mapped.rows() - start);
    const Matrix sims = mapped.middleRows(start, len) * targets.transpose();
    for (Eigen::Index r = 0; r < len; ++r) {
      const auto best = top_k_indices(sims.row(r).transpose(), 1).front();
      const auto b = static_cast<Eigen::Index>(best);
      hits += (b == start + r || targets.row(b) == targets.row(start + r)) ? 1 : 0;
    }
  }
  return 100.0 * static_cast<double>(hits) / static_cast<double>(mapped.rows());
}

Matrix clip_spectral(const Matrix& m) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::VectorXd s = svd.singularValues().cwiseMin(1.0).cwiseMax(0.0);
  return svd.matrixU() * s.asDiagonal() * svd.matrixV().transpose();
}

}  // namespace mlbias
