#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include <json.hpp>

#include "dropcast/exec.hpp"
#include "dropcast/forest.hpp"
#include "dropcast/metrics.hpp"
#include "dropcast/nn/adam.hpp"
#include "dropcast/nn/network.hpp"
#include "dropcast/pipeline.hpp"

namespace dropcast::train {

struct SplitRatios {
  double train = 0.7;
  double val = 0.1;
  double test = 0.2;
};

// Indices into Dataset::samples. Beneficiaries never straddle subsets.
struct DatasetSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
};

// Stratified by each beneficiary's draw-0 label. Throws Error when a
// subset would lack either class.
DatasetSplit split_dataset(const pipeline::Dataset& dataset, SplitRatios ratios, std::uint64_t seed);

struct TrainConfig {
  int epochs = 30;
  int batch_size = 64;
  nn::AdamConfig adam;
  nn::ClassWeights class_weights;
  int patience = 5;
  std::uint64_t seed = 1;

  // Long-term tasks weight high risk 1.5.
  static TrainConfig for_task(Task task);
  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
  double val_precision = 0.0;
  double val_recall = 0.0;
  double val_f1 = 0.0;
  double val_auc = 0.0;
  int skipped_steps = 0;  // optimizer steps aborted on non-finite gradients
};

struct NetworkResult {
  nn::Network network;  // best-validation-F1 snapshot
  std::vector<EpochRecord> history;
  int best_epoch = 0;
};

// Samples drawn for one epoch: short-term datasets cycle through draws.
std::vector<const pipeline::WindowSample*> epoch_samples(const pipeline::Dataset& dataset,
                                                         std::span<const std::size_t> indices, int epoch);

NetworkResult train_network(const nn::NetConfig& net_config, const pipeline::Dataset& dataset,
                            const DatasetSplit& split, const TrainConfig& config, Exec exec = Exec::parallel);

// Demographic block of each sample's static vector.
forest::Matrix demographic_matrix(const pipeline::Dataset& dataset, std::span<const pipeline::WindowSample* const> samples);

forest::Forest train_forest(const pipeline::Dataset& dataset, const DatasetSplit& split,
                            const forest::ForestConfig& config, Exec exec = Exec::parallel);

// Weighted BCE in inference mode, averaged over samples.
double inference_loss(std::span<const double> probabilities, std::span<const int> labels, nn::ClassWeights weights);

void write_history_csv(std::ostream& out, std::span<const EpochRecord> history);

}  // namespace dropcast::train
