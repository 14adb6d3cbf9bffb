#include "mlbias/bias_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "mlbias/error.hpp"
#include "mlbias/rng.hpp"
#include "mlbias/text.hpp"

namespace mlbias {

std::vector<std::string> OccupationPairSet::male_seeds() const {
  std::vector<std::string> out;
  for (const auto& p : seed_pairs) out.push_back(p.male);
  return out;
}

std::vector<std::string> OccupationPairSet::female_seeds() const {
  std::vector<std::string> out;
  for (const auto& p : seed_pairs) out.push_back(p.female);
  return out;
}

void OccupationPairSet::validate() const {
  if (occ_pairs.empty()) throw DataError("occupation pair list is empty");
  if (seed_pairs.empty()) throw DataError("seed pair list is empty");
  for (const auto& p : occ_pairs) {
    if (p.masculine.empty() || p.feminine.empty()) throw DataError("occupation pair with empty word");
  }
  for (const auto& p : seed_pairs) {
    if (p.male.empty() || p.female.empty()) throw DataError("seed pair with empty word");
  }
}

OccupationPairSet OccupationPairSet::filtered(const std::string& tag) const {
  OccupationPairSet out{language, {}, seed_pairs};
  std::copy_if(occ_pairs.begin(), occ_pairs.end(), std::back_inserter(out.occ_pairs),
               [&](const OccupationPair& p) { return p.tag == tag; });
  return out;
}

std::vector<OccupationPair> read_occupation_pairs(const std::filesystem::path& path) {
  std::vector<OccupationPair> out;
  for (const auto& row : text::read_table(path)) {
    if (row.fields.size() < 2 || row.fields.size() > 3) {
      throw DataError(path.string() + ":" + std::to_string(row.line) +
                      ": expected masculine<TAB>feminine[<TAB>tag]");
    }
    OccupationPair p{row.fields[0], row.fields[1], row.fields.size() == 3 ? row.fields[2] : ""};
    if (p.masculine.empty() || p.feminine.empty()) {
      throw DataError(path.string() + ":" + std::to_string(row.line) + ": empty word");
    }
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<SeedPair> read_seed_pairs(const std::filesystem::path& path) {
  std::vector<SeedPair> out;
  for (const auto& row : text::read_table(path)) {
    if (row.fields.size() != 2 || row.fields[0].empty() || row.fields[1].empty()) {
      throw DataError(path.string() + ":" + std::to_string(row.line) + ": expected male<TAB>female");
    }
    out.push_back({row.fields[0], row.fields[1]});
  }
  return out;
}

OccupationPairSet load_pair_set(const std::filesystem::path& pairs, const std::filesystem::path& seeds,
                                std::string language) {
  OccupationPairSet set{std::move(language), read_occupation_pairs(pairs), read_seed_pairs(seeds)};
  set.validate();
  return set;
}

namespace {

struct SeedRows {
  std::vector<Vector> vectors;
  std::vector<std::string> missing;
};

SeedRows seed_rows(const EmbeddingSpace& space, const std::vector<std::string>& seeds) {
  SeedRows out;
  for (const auto& s : seeds) {
    if (auto i = space.find(s)) {
      out.vectors.push_back(space.row(*i));
    } else {
      out.missing.push_back(s);
    }
  }
  return out;
}

double dis_rows(const Vector& w, const std::vector<Vector>& seeds) {
  double total = 0.0;
  for (const auto& s : seeds) total += 1.0 - cosine(w, s);
  return total / static_cast<double>(seeds.size());
}

}  // namespace

double dis(const EmbeddingSpace& space, const std::string& word, const std::vector<std::string>& seeds) {
  const auto i = space.find(word);
  if (!i) throw DataError("dis: word '" + word + "' not in vocabulary");
  const auto rows = seed_rows(space, seeds);
  if (rows.vectors.empty()) throw DataError("dis: no seed word in vocabulary");
  return dis_rows(space.row(*i), rows.vectors);
}

BiasReport inbias(const EmbeddingSpace& space, const OccupationPairSet& pairs) {
  pairs.validate();
  BiasReport report;
  report.language = space.language().empty() ? pairs.language : space.language();
  const auto male = seed_rows(space, pairs.male_seeds());
  const auto female = seed_rows(space, pairs.female_seeds());
  if (male.vectors.empty()) throw DataError("inbias: no male seed word in vocabulary");
  if (female.vectors.empty()) throw DataError("inbias: no female seed word in vocabulary");
  report.missing_seeds = male.missing;
  report.missing_seeds.insert(report.missing_seeds.end(), female.missing.begin(), female.missing.end());

  double total = 0.0;
  for (const auto& p : pairs.occ_pairs) {
    const auto im = space.find(p.masculine);
    const auto iff = space.find(p.feminine);
    if (!im || !iff) {
      ++report.n_skipped;
      report.skipped.push_back(p.masculine + "/" + p.feminine);
      continue;
    }
    PairBias pb{p.masculine, p.feminine, p.tag};
    pb.dis_m = dis_rows(space.row(*im), male.vectors);
    pb.dis_f = dis_rows(space.row(*iff), female.vectors);
    pb.bias = std::abs(pb.dis_m - pb.dis_f);
    total += pb.bias;
    report.per_pair.push_back(std::move(pb));
  }
  report.n_evaluated = report.per_pair.size();
  if (report.n_evaluated == 0) throw DataError("inbias: no occupation pair has both words in vocabulary");
  report.inbias = total / static_cast<double>(report.n_evaluated);
  return report;
}

DeltaRanking pair_bias_delta(const EmbeddingSpace& space_a, const EmbeddingSpace& space_b,
                             const OccupationPairSet& pairs) {
  pairs.validate();
  const auto ma = seed_rows(space_a, pairs.male_seeds());
  const auto fa = seed_rows(space_a, pairs.female_seeds());
  const auto mb = seed_rows(space_b, pairs.male_seeds());
  const auto fb = seed_rows(space_b, pairs.female_seeds());
  if (ma.vectors.empty() || fa.vectors.empty() || mb.vectors.empty() || fb.vectors.empty()) {
    throw DataError("pair_bias_delta: seed words missing from a space");
  }
  DeltaRanking out;
  for (const auto& p : pairs.occ_pairs) {
    const auto am = space_a.find(p.masculine);
    const auto af = space_a.find(p.feminine);
    const auto bm = space_b.find(p.masculine);
    const auto bf = space_b.find(p.feminine);
    if (!am || !af || !bm || !bf) {
      out.skipped.push_back(p.masculine + "/" + p.feminine);
      continue;
    }
    PairDelta d{p};
    d.bias_a = std::abs(dis_rows(space_a.row(*am), ma.vectors) - dis_rows(space_a.row(*af), fa.vectors));
    d.bias_b = std::abs(dis_rows(space_b.row(*bm), mb.vectors) - dis_rows(space_b.row(*bf), fb.vectors));
    d.delta = std::abs(d.bias_a - d.bias_b);
    out.ranked.push_back(std::move(d));
  }
  if (out.ranked.empty()) throw DataError("pair_bias_delta: no pair evaluable in both spaces");
  std::stable_sort(out.ranked.begin(), out.ranked.end(),
                   [](const PairDelta& x, const PairDelta& y) { return x.delta > y.delta; });
  return out;
}

ProjectionResult gender_projection(const EmbeddingSpace& space, const std::vector<std::string>& words,
                                   const std::vector<SeedPair>& seed_pairs,
                                   std::optional<std::size_t> single_pair) {
  if (seed_pairs.empty()) throw DataError("gender_projection: no seed pairs");
  std::vector<SeedPair> used = seed_pairs;
  if (single_pair) {
    if (*single_pair >= seed_pairs.size()) throw UsageError("gender_projection: seed pair index out of range");
    used = {seed_pairs[*single_pair]};
  }
  Vector diff = Vector::Zero(static_cast<Eigen::Index>(space.dim()));
  std::vector<std::string> males;
  std::vector<std::string> females;
  std::size_t found = 0;
  for (const auto& p : used) {
    const auto im = space.find(p.male);
    const auto iff = space.find(p.female);
    if (!im || !iff) continue;
    diff += space.row(*im) - space.row(*iff);
    males.push_back(p.male);
    females.push_back(p.female);
    ++found;
  }
  if (found == 0) throw DataError("gender_projection: no seed pair in vocabulary");
  diff /= static_cast<double>(found);
  if (diff.norm() < 1e-12) throw NumericalError("gender_projection: degenerate seed direction");

  ProjectionResult out;
  out.direction = diff / diff.norm();
  for (const auto& w : words) {
    if (auto i = space.find(w)) {
      out.points.push_back({w, unit(space.row(*i)).dot(out.direction)});
    } else {
      out.missing.push_back(w);
    }
  }
  out.avg_male = mean_vector(space, males).mean.dot(out.direction);
  out.avg_female = mean_vector(space, females).mean.dot(out.direction);
  return out;
}

double significance_test(const std::vector<double>& a, const std::vector<double>& b,
                         std::size_t replicates, std::uint64_t seed, SignificanceMethod method) {
  if (a.size() != b.size()) throw UsageError("significance_test: length mismatch");
  if (a.size() < 2) throw UsageError("significance_test: need at least 2 paired values");
  if (replicates == 0) throw UsageError("significance_test: replicates must be positive");
  const std::size_t n = a.size();
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) d[i] = a[i] - b[i];

  std::size_t le = 0;
  std::size_t ge = 0;
  const double observed = std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(n);
  for (std::size_t r = 0; r < replicates; ++r) {
    auto rng = make_rng(seed, r);
    double sum = 0.0;
    if (method == SignificanceMethod::kBootstrap) {
      for (std::size_t i = 0; i < n; ++i) sum += d[uniform_index(rng, n)];
      const double stat = sum / static_cast<double>(n);
      le += stat <= 0.0 ? 1 : 0;
      ge += stat >= 0.0 ? 1 : 0;
    } else {
      for (std::size_t i = 0; i < n; ++i) sum += (rng() & 1U) ? d[i] : -d[i];
      const double stat = sum / static_cast<double>(n);
      // Small slack so the identity relabeling counts as at least as extreme.
      ge += std::abs(stat) >= std::abs(observed) - 1e-12 ? 1 : 0;
    }
  }
  const double floor = 1.0 / static_cast<double>(replicates);
  double p = 0.0;
  if (method == SignificanceMethod::kBootstrap) {
    p = 2.0 * static_cast<double>(std::min(le, ge)) / static_cast<double>(replicates);
  } else {
    p = static_cast<double>(ge + 1) / static_cast<double>(replicates + 1);
  }
  return std::clamp(p, floor, 1.0);
}

std::pair<std::vector<double>, std::vector<double>> paired_biases(const BiasReport& a, const BiasReport& b) {
  std::map<std::pair<std::string, std::string>, double> lookup;
  for (const auto& p : b.per_pair) lookup[{p.masculine, p.feminine}] = p.bias;
  std::pair<std::vector<double>, std::vector<double>> out;
  for (const auto& p : a.per_pair) {
    if (auto it = lookup.find({p.masculine, p.feminine}); it != lookup.end()) {
      out.first.push_back(p.bias);
      out.second.push_back(it->second);
    }
  }
  return out;
}

}  // namespace mlbias
