#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "mlbias/corpus.hpp"
#include "mlbias/embedding_store.hpp"

namespace mlbias {

struct Features {
  Vector vector;
  bool all_oov = false;
};

// Unit-normalized mean of the in-vocabulary token vectors; the zero vector
// (flagged) when no token is known.
Features featurize(const BioRecord& record, const EmbeddingSpace& space);

// Softmax regression over frozen features.
struct OccModel {
  Matrix weights;  // n_classes x dim
  Vector bias;     // n_classes
  std::vector<std::string> labels;  // index -> canonical occupation id
  std::string fingerprint;          // space the model was last trained against

  std::size_t n_classes() const { return labels.size(); }
  std::size_t dim() const { return static_cast<std::size_t>(weights.cols()); }
  std::optional<std::size_t> label_index(const std::string& occupation) const;
  // Argmax class, ties to the lowest index.
  std::size_t predict(const Vector& features) const;

  nlohmann::json to_json() const;
  static OccModel from_json(const nlohmann::json& j);
};

void save_model(const OccModel& model, const std::filesystem::path& path);
OccModel load_model(const std::filesystem::path& path);

struct TrainConfig {
  std::size_t epochs = 30;
  double lr = 0.5;
  double l2 = 0.0;
  std::size_t batch_size = 32;  // 0 means full batch
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
};

struct TrainResult {
  OccModel model;
  std::vector<double> loss_trace;  // mean training loss after each epoch
  std::size_t n_used = 0;
  std::size_t n_zero_vector = 0;   // all-OOV records left out of training
};

// Minibatch SGD on mean cross-entropy (+ l2/2 ||W||^2), zero-initialized.
TrainResult train(const std::vector<BioRecord>& train_set, const EmbeddingSpace& space, const TrainConfig& config);

// Continues SGD from `init` (same label map) on the given records.
TrainResult continue_training(const OccModel& init, const std::vector<BioRecord>& records, const EmbeddingSpace& space,
                              const TrainConfig& config);

struct GapRow {
  std::string occupation;
  std::size_t n_male = 0;
  std::size_t n_female = 0;
  double acc_male = 0.0;
  double acc_female = 0.0;
};

struct GapReport {
  double avg_accuracy = 0.0;
  double female_accuracy = 0.0;
  double male_accuracy = 0.0;
  double diff = 0.0;                 // mean |acc_M - acc_F| over occupations with both genders
  double diff_all_occupations = 0.0; // same sum divided by every occupation present
  std::vector<GapRow> rows;          // included occupations
  std::vector<std::string> excluded; // one gender absent
  std::size_t n_records = 0;
  std::size_t n_zero_vector = 0;

  nlohmann::json to_json() const;
};

GapReport evaluate_gap(const OccModel& model, const std::vector<BioRecord>& test_set, const EmbeddingSpace& space);
// Same metric from precomputed (occupation, gender, correct) outcomes.
GapReport gap_from_outcomes(const std::vector<BioRecord>& test_set, const std::vector<bool>& correct);

struct TransferConfig {
  double finetune_fraction = 0.2;
  TrainConfig train;
};

struct TransferResult {
  OccModel model;
  std::size_t n_finetune = 0;
  std::vector<double> loss_trace;
};

// Fine-tunes src_model on a seeded finetune_fraction sample of the target
// training records featurized with tgt_space.
TransferResult transfer(const OccModel& src_model, const EmbeddingSpace& src_space, const EmbeddingSpace& tgt_space,
                        const std::vector<BioRecord>& tgt_train, const TransferConfig& config);

}  // namespace mlbias
