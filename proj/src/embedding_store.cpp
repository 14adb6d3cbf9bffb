#include "mlbias/embedding_store.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "mlbias/error.hpp"
#include "mlbias/hash.hpp"
#include "mlbias/text.hpp"

namespace mlbias {

namespace {

constexpr double kUnitTolerance = 1e-6;
constexpr Eigen::Index kBlockRows = 512;

double parse_double(std::string_view s, const std::string& where) {
  double v = 0.0;
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end) {
    throw DataError(where + ": cannot parse number '" + std::string(s) + "'");
  }
  return v;
}

std::size_t parse_size(std::string_view s, const std::string& where) {
  std::size_t v = 0;
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end) {
    throw DataError(where + ": malformed header field '" + std::string(s) + "'");
  }
  return v;
}

// Splits on single spaces, ignoring a trailing separator.
void split_fields(std::string_view line, std::vector<std::string_view>& out) {
  out.clear();
  std::size_t start = 0;
  while (start <= line.size()) {
    const auto pos = line.find(' ', start);
    if (pos == std::string_view::npos) {
      if (start < line.size()) out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

}  // namespace

EmbeddingSpace::EmbeddingSpace(std::string language, std::vector<std::string> words, Matrix matrix,
                               bool normalized)
    : language_(std::move(language)),
      words_(std::move(words)),
      matrix_(std::move(matrix)),
      normalized_(normalized) {
  if (static_cast<std::size_t>(matrix_.rows()) != words_.size()) {
    throw DataError("embedding space: " + std::to_string(words_.size()) + " words but " +
                    std::to_string(matrix_.rows()) + " rows");
  }
  if (!words_.empty() && matrix_.cols() == 0) throw DataError("embedding space: zero dimension");
  index_.reserve(words_.size());
  for (std::size_t i = 0; i < words_.size(); ++i) {
    if (!index_.emplace(words_[i], i).second) {
      throw DataError("embedding space: duplicate word '" + words_[i] + "'");
    }
  }
  if (!matrix_.allFinite()) throw DataError("embedding space: non-finite entries");
  if (normalized_) {
    for (Eigen::Index i = 0; i < matrix_.rows(); ++i) {
      if (std::abs(matrix_.row(i).norm() - 1.0) > kUnitTolerance) {
        throw DataError("embedding space: row '" + words_[static_cast<std::size_t>(i)] +
                        "' is not unit length");
      }
    }
  }
}

std::optional<std::size_t> EmbeddingSpace::find(std::string_view word) const {
  if (auto it = index_.find(std::string(word)); it != index_.end()) return it->second;
  const std::string lower = text::to_lower(word);
  if (lower != word) {
    if (auto it = index_.find(lower); it != index_.end()) return it->second;
  }
  return std::nullopt;
}

Vector EmbeddingSpace::vector(std::string_view word) const {
  const auto i = find(word);
  if (!i) throw DataError("word '" + std::string(word) + "' not in vocabulary");
  return row(*i);
}

EmbeddingSpace EmbeddingSpace::with_matrix(Matrix matrix, bool normalized) const {
  return EmbeddingSpace(language_, words_, std::move(matrix), normalized);
}

EmbeddingSpace EmbeddingSpace::with_language(std::string language) const {
  EmbeddingSpace out = *this;
  out.language_ = std::move(language);
  return out;
}

EmbeddingSpace EmbeddingSpace::head(std::size_t n) const {
  n = std::min(n, size());
  std::vector<std::string> words(words_.begin(), words_.begin() + static_cast<std::ptrdiff_t>(n));
  return EmbeddingSpace(language_, std::move(words), matrix_.topRows(static_cast<Eigen::Index>(n)),
                        normalized_);
}

std::string EmbeddingSpace::fingerprint() const {
  Sha256 h;
  for (const auto& w : words_) {
    h.update(w);
    h.update(std::string_view("\n", 1));
  }
  h.update(std::string_view(reinterpret_cast<const char*>(matrix_.data()),
                            static_cast<std::size_t>(matrix_.size()) * sizeof(double)));
  return language_ + ":" + h.hex_digest().substr(0, 16);
}

LoadResult load_vectors(const std::filesystem::path& path, const LoadOptions& options) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open vectors file " + path.string());
  const std::string where = path.string();

  std::string line;
  if (!std::getline(in, line)) throw DataError(where + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = text::split_whitespace(line);
  if (header.size() != 2) throw DataError(where + ": malformed header '" + line + "'");
  const std::size_t count = parse_size(header[0], where);
  const std::size_t dim = parse_size(header[1], where);
  if (dim == 0) throw DataError(where + ": header dimension is zero");
  if (options.expected_dim && *options.expected_dim != dim) {
    throw DataError(where + ": dimension " + std::to_string(dim) + " does not match expected " +
                    std::to_string(*options.expected_dim));
  }
  const std::size_t target = options.limit ? std::min(count, *options.limit) : count;

  std::vector<std::string> words;
  words.reserve(target);
  std::unordered_map<std::string, std::size_t> seen;
  seen.reserve(target);
  Matrix matrix(static_cast<Eigen::Index>(target), static_cast<Eigen::Index>(dim));
  std::size_t duplicates = 0;
  std::size_t lineno = 1;
  std::vector<std::string_view> fields;
  while (words.size() < target && std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    split_fields(line, fields);
    const std::string loc = where + ":" + std::to_string(lineno);
    if (fields.size() != dim + 1) {
      throw DataError(loc + ": expected " + std::to_string(dim + 1) + " fields, found " +
                      std::to_string(fields.size()));
    }
    std::string word(fields[0]);
    if (seen.count(word) != 0) {
      ++duplicates;
      continue;
    }
    const auto r = static_cast<Eigen::Index>(words.size());
    for (std::size_t j = 0; j < dim; ++j) {
      const double v = parse_double(fields[j + 1], loc);
      if (!std::isfinite(v)) throw DataError(loc + ": non-finite value");
      matrix(r, static_cast<Eigen::Index>(j)) = v;
    }
    seen.emplace(word, words.size());
    words.push_back(std::move(word));
  }
  if (words.size() < target) {
    // Duplicates consume header rows without producing vocabulary entries.
    if (words.size() + duplicates < target) {
      throw DataError(where + ": header declares " + std::to_string(count) + " rows, file has " +
                      std::to_string(words.size() + duplicates));
    }
    matrix.conservativeResize(static_cast<Eigen::Index>(words.size()), Eigen::NoChange);
  }
  LoadResult result;
  result.space = EmbeddingSpace(options.language, std::move(words), std::move(matrix), false);
  result.duplicates = duplicates;
  result.header_count = count;
  return result;
}

void save_vectors(const EmbeddingSpace& space, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::FILE* f = std::fopen(path.string().c_str(), "wb");
  if (f == nullptr) throw DataError("cannot write " + path.string());
  std::fprintf(f, "%zu %zu\n", space.size(), space.dim());
  const Matrix& m = space.matrix();
  for (std::size_t i = 0; i < space.size(); ++i) {
    std::fputs(space.word(i).c_str(), f);
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      std::fprintf(f, " %.6g", m(static_cast<Eigen::Index>(i), j));
    }
    std::fputc('\n', f);
  }
  if (std::fclose(f) != 0) throw DataError("write failed for " + path.string());
}

EmbeddingSpace normalize(const EmbeddingSpace& space) {
  if (space.normalized()) return space;
  Matrix m = space.matrix();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const double norm = m.row(i).norm();
    if (norm == 0.0) {
      throw NumericalError("cannot normalize zero vector for word '" +
                           space.word(static_cast<std::size_t>(i)) + "'");
    }
    m.row(i) /= norm;
  }
  return space.with_matrix(std::move(m), true);
}

EmbeddingSpace load_normalized(const std::filesystem::path& path, const LoadOptions& options) {
  return normalize(load_vectors(path, options).space);
}

double cosine(const Vector& u, const Vector& v) {
  if (u.size() != v.size()) throw UsageError("cosine: dimension mismatch");
  const double nu = u.norm();
  const double nv = v.norm();
  if (nu == 0.0 || nv == 0.0) throw NumericalError("cosine: zero vector");
  return std::clamp(u.dot(v) / (nu * nv), -1.0, 1.0);
}

Vector unit(const Vector& v) {
  const double n = v.norm();
  if (n == 0.0) throw NumericalError("cannot normalize zero vector");
  return v / n;
}

std::vector<std::size_t> top_k_indices(const Vector& scores, std::size_t k) {
  std::vector<std::size_t> idx(static_cast<std::size_t>(scores.size()));
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  k = std::min(k, idx.size());
  auto better = [&](std::size_t a, std::size_t b) {
    const double sa = scores[static_cast<Eigen::Index>(a)];
    const double sb = scores[static_cast<Eigen::Index>(b)];
    return sa > sb || (sa == sb && a < b);
  };
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(), better);
  idx.resize(k);
  return idx;
}

Vector mean_top_similarity(const Matrix& rows, const Matrix& pool, std::size_t n,
                           bool exclude_self) {
  if (n == 0) throw UsageError("neighborhood size must be at least 1");
  if (rows.cols() != pool.cols()) throw UsageError("mean_top_similarity: dimension mismatch");
  Vector out(rows.rows());
  std::vector<double> buf;
  for (Eigen::Index start = 0; start < rows.rows(); start += kBlockRows) {
    const Eigen::Index len = std::min(kBlockRows, rows.rows() - start);
    const Matrix sims = rows.middleRows(start, len) * pool.transpose();
    for (Eigen::Index r = 0; r < len; ++r) {
      buf.assign(sims.row(r).data(), sims.row(r).data() + sims.cols());
      if (exclude_self && start + r < pool.rows()) {
        buf.erase(buf.begin() + (start + r));
      }
      const std::size_t take = std::min(n, buf.size());
      if (take == 0) {
        out[start + r] = 0.0;
        continue;
      }
      std::nth_element(buf.begin(), buf.begin() + static_cast<std::ptrdiff_t>(take - 1), buf.end(),
                       std::greater<>());
      // Sum the top `take` in a fixed order so results do not depend on
      // nth_element's arrangement.
      std::sort(buf.begin(), buf.begin() + static_cast<std::ptrdiff_t>(take), std::greater<>());
      double sum = 0.0;
      for (std::size_t i = 0; i < take; ++i) sum += buf[i];
      out[start + r] = sum / static_cast<double>(take);
    }
  }
  return out;
}

NeighborList knn(const EmbeddingSpace& space, const Vector& query, std::size_t k,
                 const Retrieval& retrieval, const Vector* row_penalty, std::string query_label) {
  if (space.empty()) throw DataError("knn: empty space");
  if (k == 0) throw UsageError("knn: k must be at least 1");
  if (static_cast<std::size_t>(query.size()) != space.dim()) {
    throw UsageError("knn: query dimension mismatch");
  }
  const EmbeddingSpace unit_space = space.normalized() ? space : normalize(space);
  const Vector q = unit(query);
  Vector scores = unit_space.matrix() * q;
  for (auto& s : scores) s = std::clamp(s, -1.0, 1.0);

  if (retrieval.kind == RetrievalKind::kCsls) {
    if (retrieval.n == 0) throw UsageError("knn: CSLS neighborhood must be at least 1");
    Vector penalty;
    if (row_penalty != nullptr) {
      if (row_penalty->size() != scores.size()) throw UsageError("knn: penalty size mismatch");
      penalty = *row_penalty;
    } else {
      penalty = mean_top_similarity(unit_space.matrix(), unit_space.matrix(), retrieval.n, true);
    }
    Matrix qm = q.transpose();
    const double r_query = mean_top_similarity(qm, unit_space.matrix(), retrieval.n)[0];
    scores = 2.0 * scores - penalty - Vector::Constant(scores.size(), r_query);
  }

  NeighborList out;
  out.query = std::move(query_label);
  for (std::size_t i : top_k_indices(scores, k)) {
    out.entries.push_back({space.word(i), i, scores[static_cast<Eigen::Index>(i)]});
  }
  return out;
}

MeanVectorResult mean_vector(const EmbeddingSpace& space, const std::vector<std::string>& words) {
  MeanVectorResult result;
  result.mean = Vector::Zero(static_cast<Eigen::Index>(space.dim()));
  std::size_t found = 0;
  for (const auto& w : words) {
    if (auto i = space.find(w)) {
      result.mean += space.row(*i);
      ++found;
    } else {
      result.missing.push_back(w);
    }
  }
  if (found == 0) throw DataError("mean_vector: none of the words are in the vocabulary");
  result.mean /= static_cast<double>(found);
  return result;
}

}  // namespace mlbias
