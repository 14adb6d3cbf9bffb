#include "mlbias/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "mlbias/error.hpp"
#include "mlbias/rng.hpp"
#include "mlbias/text.hpp"

namespace mlbias {

namespace {

struct Example {
  Vector x;
  std::size_t label = 0;
};

Vector softmax(const Vector& logits) {
  const double m = logits.maxCoeff();
  Vector e = (logits.array() - m).exp().matrix();
  return e / e.sum();
}

double mean_loss(const OccModel& model, const std::vector<Example>& data, double l2) {
  double total = 0.0;
  for (const auto& ex : data) {
    const Vector logits = model.weights * ex.x + model.bias;
    const double m = logits.maxCoeff();
    const double lse = m + std::log((logits.array() - m).exp().sum());
    total += lse - logits[static_cast<Eigen::Index>(ex.label)];
  }
  return total / static_cast<double>(data.size()) + 0.5 * l2 * model.weights.squaredNorm();
}

std::vector<Example> make_examples(const OccModel& model, const std::vector<BioRecord>& records,
                                   const EmbeddingSpace& space, std::size_t& n_zero) {
  std::vector<Example> out;
  n_zero = 0;
  for (const auto& r : records) {
    const auto label = model.label_index(r.occupation);
    if (!label) throw DataError("training record has occupation '" + r.occupation + "' outside the label map");
    auto f = featurize(r, space);
    if (f.all_oov) {
      ++n_zero;
      continue;
    }
    out.push_back({std::move(f.vector), *label});
  }
  return out;
}

TrainResult run_sgd(OccModel model, const std::vector<BioRecord>& records, const EmbeddingSpace& space,
                    const TrainConfig& config) {
  if (!(config.lr >= 0.0) || !(config.l2 >= 0.0)) throw UsageError("train: lr and l2 must be non-negative");
  if (space.dim() != model.dim()) throw UsageError("train: space dimension does not match the model");
  TrainResult result;
  const auto data = make_examples(model, records, space, result.n_zero_vector);
  result.n_used = data.size();
  if (data.empty()) throw DataError("train: no record has an in-vocabulary token");

  const std::size_t batch = config.batch_size == 0 ? data.size() : std::min(config.batch_size, data.size());
  std::vector<std::size_t> order(data.size());
  Matrix grad_w(model.weights.rows(), model.weights.cols());
  Vector grad_b(model.bias.size());
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto rng = make_rng(config.seed, epoch);
    shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      grad_w.setZero();
      grad_b.setZero();
      for (std::size_t k = start; k < end; ++k) {
        const auto& ex = data[order[k]];
        Vector p = softmax(model.weights * ex.x + model.bias);
        p[static_cast<Eigen::Index>(ex.label)] -= 1.0;
        grad_w.noalias() += p * ex.x.transpose();
        grad_b += p;
      }
      const auto n = static_cast<double>(end - start);
      model.weights -= config.lr * (grad_w / n + config.l2 * model.weights);
      model.bias -= config.lr * (grad_b / n);
    }
    const double loss = mean_loss(model, data, config.l2);
    if (!std::isfinite(loss) || !model.weights.allFinite()) {
      throw NumericalError("train: non-finite loss at epoch " + std::to_string(epoch) +
                           (result.loss_trace.empty() ? std::string()
                                                      : "; previous loss " + std::to_string(result.loss_trace.back())));
    }
    result.loss_trace.push_back(loss);
  }
  model.fingerprint = space.fingerprint();
  result.model = std::move(model);
  return result;
}

}  // namespace

Features featurize(const BioRecord& record, const EmbeddingSpace& space) {
  Features f;
  f.vector = Vector::Zero(static_cast<Eigen::Index>(space.dim()));
  std::size_t found = 0;
  for (const auto& t : record.tokens) {
    if (auto i = space.find(t)) {
      f.vector += space.matrix().row(static_cast<Eigen::Index>(*i)).transpose();
      ++found;
    }
  }
  const double n = f.vector.norm();
  if (found == 0 || n == 0.0) {
    f.vector.setZero();
    f.all_oov = true;
    return f;
  }
  f.vector /= n;
  return f;
}

std::optional<std::size_t> OccModel::label_index(const std::string& occupation) const {
  const auto it = std::lower_bound(labels.begin(), labels.end(), occupation);
  if (it == labels.end() || *it != occupation) return std::nullopt;
  return static_cast<std::size_t>(it - labels.begin());
}

std::size_t OccModel::predict(const Vector& features) const {
  const Vector logits = weights * features + bias;
  return top_k_indices(logits, 1).front();
}

nlohmann::json OccModel::to_json() const {
  nlohmann::json j;
  j["labels"] = labels;
  j["dim"] = dim();
  j["fingerprint"] = fingerprint;
  std::vector<double> flat(weights.data(), weights.data() + weights.size());
  j["weights"] = flat;
  j["bias"] = std::vector<double>(bias.data(), bias.data() + bias.size());
  return j;
}

OccModel OccModel::from_json(const nlohmann::json& j) {
  OccModel m;
  try {
    m.labels = j.at("labels").get<std::vector<std::string>>();
    const auto dim = j.at("dim").get<std::size_t>();
    const auto flat = j.at("weights").get<std::vector<double>>();
    const auto bias = j.at("bias").get<std::vector<double>>();
    m.fingerprint = j.value("fingerprint", "");
    if (flat.size() != m.labels.size() * dim || bias.size() != m.labels.size()) {
      throw DataError("model: weight shape does not match label map");
    }
    m.weights = Eigen::Map<const Matrix>(flat.data(), static_cast<Eigen::Index>(m.labels.size()),
                                         static_cast<Eigen::Index>(dim));
    m.bias = Eigen::Map<const Vector>(bias.data(), static_cast<Eigen::Index>(bias.size()));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("model: ") + e.what());
  }
  if (!std::is_sorted(m.labels.begin(), m.labels.end()) ||
      std::adjacent_find(m.labels.begin(), m.labels.end()) != m.labels.end()) {
    throw DataError("model: label map must be sorted and unique");
  }
  if (!m.weights.allFinite() || !m.bias.allFinite()) throw DataError("model: non-finite weights");
  return m;
}

void save_model(const OccModel& model, const std::filesystem::path& path) {
  text::write_file(path, model.to_json().dump(1) + "\n");
}

OccModel load_model(const std::filesystem::path& path) {
  try {
    return OccModel::from_json(nlohmann::json::parse(text::read_file(path)));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

nlohmann::json TrainConfig::to_json() const {
  return {{"epochs", epochs}, {"lr", lr}, {"l2", l2}, {"batch_size", batch_size}, {"seed", seed}};
}

TrainResult train(const std::vector<BioRecord>& train_set, const EmbeddingSpace& space, const TrainConfig& config) {
  std::set<std::string> occupations;
  for (const auto& r : train_set) occupations.insert(r.occupation);
  if (occupations.size() < 2) throw DataError("train: need at least 2 occupation classes");
  OccModel model;
  model.labels.assign(occupations.begin(), occupations.end());
  model.weights = Matrix::Zero(static_cast<Eigen::Index>(model.labels.size()), static_cast<Eigen::Index>(space.dim()));
  model.bias = Vector::Zero(static_cast<Eigen::Index>(model.labels.size()));
  return run_sgd(std::move(model), train_set, space, config);
}

TrainResult continue_training(const OccModel& init, const std::vector<BioRecord>& records, const EmbeddingSpace& space,
                              const TrainConfig& config) {
  return run_sgd(init, records, space, config);
}

nlohmann::json GapReport::to_json() const {
  nlohmann::json j;
  j["avg"] = avg_accuracy;
  j["female"] = female_accuracy;
  j["male"] = male_accuracy;
  j["diff"] = diff;
  j["diff_all_occupations"] = diff_all_occupations;
  j["n_records"] = n_records;
  j["n_zero_vector"] = n_zero_vector;
  j["excluded"] = excluded;
  auto& rs = j["rows"] = nlohmann::json::array();
  for (const auto& r : rows) {
    rs.push_back({{"occupation", r.occupation},
                  {"n_male", r.n_male},
                  {"n_female", r.n_female},
                  {"acc_male", r.acc_male},
                  {"acc_female", r.acc_female}});
  }
  return j;
}

GapReport gap_from_outcomes(const std::vector<BioRecord>& test_set, const std::vector<bool>& correct) {
  if (test_set.empty()) throw DataError("evaluate_gap: empty test set");
  if (test_set.size() != correct.size()) throw UsageError("evaluate_gap: outcome count mismatch");
  struct Tally {
    std::size_t n[2] = {0, 0};
    std::size_t hit[2] = {0, 0};
  };
  std::map<std::string, Tally> per_occ;
  std::size_t hits = 0;
  Tally overall;
  for (std::size_t i = 0; i < test_set.size(); ++i) {
    const auto& r = test_set[i];
    hits += correct[i] ? 1 : 0;
    auto& t = per_occ[r.occupation];
    if (!r.gender) continue;
    const int g = *r.gender == Gender::kMale ? 0 : 1;
    t.n[g] += 1;
    overall.n[g] += 1;
    t.hit[g] += correct[i] ? 1 : 0;
    overall.hit[g] += correct[i] ? 1 : 0;
  }
  auto pct = [](std::size_t h, std::size_t n) { return n == 0 ? 0.0 : 100.0 * static_cast<double>(h) / static_cast<double>(n); };
  GapReport report;
  report.n_records = test_set.size();
  report.avg_accuracy = pct(hits, test_set.size());
  report.male_accuracy = pct(overall.hit[0], overall.n[0]);
  report.female_accuracy = pct(overall.hit[1], overall.n[1]);
  double gap_sum = 0.0;
  for (const auto& [occ, t] : per_occ) {
    if (t.n[0] == 0 || t.n[1] == 0) {
      report.excluded.push_back(occ);
      continue;
    }
    GapRow row{occ, t.n[0], t.n[1], pct(t.hit[0], t.n[0]), pct(t.hit[1], t.n[1])};
    gap_sum += std::abs(row.acc_male - row.acc_female);
    report.rows.push_back(row);
  }
  report.diff = report.rows.empty() ? 0.0 : gap_sum / static_cast<double>(report.rows.size());
  report.diff_all_occupations = gap_sum / static_cast<double>(per_occ.size());
  return report;
}

GapReport evaluate_gap(const OccModel& model, const std::vector<BioRecord>& test_set, const EmbeddingSpace& space) {
  if (test_set.empty()) throw DataError("evaluate_gap: empty test set");
  if (space.dim() != model.dim()) throw UsageError("evaluate_gap: space dimension does not match the model");
  std::vector<bool> correct(test_set.size());
  std::size_t n_zero = 0;
  for (std::size_t i = 0; i < test_set.size(); ++i) {
    const auto f = featurize(test_set[i], space);
    n_zero += f.all_oov ? 1 : 0;
    correct[i] = model.labels[model.predict(f.vector)] == test_set[i].occupation;
  }
  auto report = gap_from_outcomes(test_set, correct);
  report.n_zero_vector = n_zero;
  return report;
}

TransferResult transfer(const OccModel& src_model, const EmbeddingSpace& src_space, const EmbeddingSpace& tgt_space,
                        const std::vector<BioRecord>& tgt_train, const TransferConfig& config) {
  if (src_space.dim() != tgt_space.dim() || tgt_space.dim() != src_model.dim()) {
    throw UsageError("transfer: source space, target space and model must share a dimension");
  }
  if (!(config.finetune_fraction >= 0.0 && config.finetune_fraction <= 1.0)) {
    throw UsageError("transfer: finetune fraction must lie in [0, 1]");
  }
  std::set<std::string> unshared;
  for (const auto& r : tgt_train) {
    if (!src_model.label_index(r.occupation)) unshared.insert(r.occupation);
  }
  if (!unshared.empty()) {
    std::string list;
    for (const auto& o : unshared) list += (list.empty() ? "" : ", ") + o;
    throw DataError("transfer: occupations missing from the source label map: " + list);
  }
  TransferResult result;
  const auto n = static_cast<std::size_t>(
      std::llround(config.finetune_fraction * static_cast<double>(tgt_train.size())));
  if (n == 0) {
    result.model = src_model;
    return result;
  }
  std::vector<std::size_t> idx(tgt_train.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  auto rng = make_rng(config.train.seed, 0x7472616E73666572ULL);
  shuffle(idx.begin(), idx.end(), rng);
  idx.resize(n);
  std::sort(idx.begin(), idx.end());
  std::vector<BioRecord> sample;
  sample.reserve(n);
  for (std::size_t i : idx) sample.push_back(tgt_train[i]);
  auto trained = continue_training(src_model, sample, tgt_space, config.train);
  result.model = std::move(trained.model);
  result.loss_trace = std::move(trained.loss_trace);
  result.n_finetune = n;
  return result;
}

}  // namespace mlbias
