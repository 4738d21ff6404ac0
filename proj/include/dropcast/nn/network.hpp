#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "dropcast/exec.hpp"
#include "dropcast/nn/layers.hpp"
#include "dropcast/nn/lstm.hpp"
#include "dropcast/pipeline.hpp"
#include "dropcast/task.hpp"

namespace dropcast::nn {

// Convolutional (conv + time-average pooling) or recurrent (BiLSTM)
// sequence encoder, fused with a dense static-feature encoder.
enum class Arch { condip, rendip };

std::string_view to_string(Arch arch);

struct NetConfig {
  Arch arch = Arch::condip;
  Task task = Task::short_term;
  int static_dim = 0;
  int seq_features = pipeline::kPerCallFeatures;
  int max_len = 8;
  std::vector<int> static_hidden;
  std::vector<int> head_hidden;
  int conv_layers = 2;
  int conv_filters = 20;
  int kernel_size = 3;
  int lstm_hidden = 100;
  bool batchnorm = true;

  // Task defaults: short-term 20 filters / BiLSTM 100, static [50,100],
  // head [100,100]; long-term 8 filters / BiLSTM 8, static [12], head [10].
  static NetConfig for_task(Arch arch, Task task, int static_dim, int max_len);
  void validate() const;
  int sequence_width() const { return arch == Arch::condip ? conv_filters : 2 * lstm_hidden; }
};

void to_json(nlohmann::json& j, const NetConfig& c);
void from_json(const nlohmann::json& j, NetConfig& c);

struct NetParams {
  std::vector<DenseParams> static_dense;
  std::vector<BatchNormParams> static_bn;
  std::vector<ConvParams> conv;
  LstmParams lstm_fwd;
  LstmParams lstm_bwd;
  std::vector<DenseParams> head_dense;
  std::vector<BatchNormParams> head_bn;
  DenseParams output;

  // Trainable tensors in a fixed order with stable names.
  std::vector<std::pair<std::string, Tensor*>> named_tensors();
  std::vector<std::pair<std::string, const Tensor*>> named_tensors() const;

  // Same structure, every value zero.
  NetParams zeros_like() const;
  std::size_t parameter_count() const;
};

struct RunningStats {
  std::vector<BatchNormStats> static_bn;
  std::vector<BatchNormStats> head_bn;

  std::vector<std::pair<std::string, Tensor*>> named_tensors();
  std::vector<std::pair<std::string, const Tensor*>> named_tensors() const;
};

using SampleBatch = std::span<const pipeline::WindowSample* const>;

struct TrainPass {
  double loss = 0.0;  // mean weighted BCE over the batch
  std::vector<double> probabilities;
  NetParams grad;
  std::vector<BatchNormCache> static_bn;  // batch statistics for the running update
  std::vector<BatchNormCache> head_bn;
  int clamped = 0;
  int degenerate = 0;
};

class Network {
 public:
  // Seeded Kaiming-uniform initialization, LSTM forget bias 1.
  Network(NetConfig config, std::uint64_t seed);
  Network(NetConfig config, NetParams params, RunningStats running);

  const NetConfig& config() const { return config_; }
  NetParams& params() { return params_; }
  const NetParams& params() const { return params_; }
  RunningStats& running_stats() { return running_; }
  const RunningStats& running_stats() const { return running_; }

  // Inference mode (running batch-norm statistics); rows are independent.
  std::vector<double> predict(SampleBatch batch, Exec exec = Exec::parallel) const;

  // Train-mode forward and exact backward pass.
  TrainPass forward_backward(SampleBatch batch, std::span<const int> labels, ClassWeights weights,
                             Exec exec = Exec::parallel) const;
  // Train-mode loss only; the function the gradient differentiates.
  double train_loss(SampleBatch batch, std::span<const int> labels, ClassWeights weights,
                    Exec exec = Exec::serial) const;

  void update_running_stats(const TrainPass& pass);

 private:
  NetConfig config_;
  NetParams params_;
  RunningStats running_;
};

}  // namespace dropcast::nn
