#include "dropcast/train.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>

#include <spdlog/spdlog.h>

#include "dropcast/error.hpp"
#include "dropcast/rng.hpp"

namespace dropcast::train {

DatasetSplit split_dataset(const pipeline::Dataset& dataset, SplitRatios ratios, std::uint64_t seed) {
  if (ratios.train <= 0 || ratios.val <= 0 || ratios.test <= 0 ||
      std::abs(ratios.train + ratios.val + ratios.test - 1.0) > 1e-9)
    throw Error("split ratios must be positive and sum to 1");

  // Beneficiaries in id order, each with its sample indices and label.
  std::map<std::string, std::vector<std::size_t>> groups;
  std::map<std::string, int> group_label;
  for (std::size_t i = 0; i < dataset.samples.size(); ++i) {
    const auto& s = dataset.samples[i];
    groups[s.beneficiary_id].push_back(i);
    if (s.draw == 0 || !group_label.count(s.beneficiary_id)) group_label[s.beneficiary_id] = s.label;
  }
  std::vector<std::string> by_class[2];
  for (const auto& [id, label] : group_label) by_class[label != 0].push_back(id);

  DatasetSplit split;
  Rng rng = make_rng(seed, salt::split);
  for (auto& ids : by_class) {
    std::shuffle(ids.begin(), ids.end(), rng);
    const auto n = static_cast<long>(ids.size());
    const long n_train = std::lround(n * ratios.train);
    const long n_val = std::lround(n * ratios.val);
    if (n_train < 1 || n_val < 1 || n - n_train - n_val < 1)
      throw Error("dataset too small to stratify: a class has " + std::to_string(n) + " beneficiaries");
    for (long k = 0; k < n; ++k) {
      auto& target = k < n_train ? split.train : (k < n_train + n_val ? split.val : split.test);
      const auto& idx = groups[ids[static_cast<std::size_t>(k)]];
      target.insert(target.end(), idx.begin(), idx.end());
    }
  }
  for (auto* part : {&split.train, &split.val, &split.test}) std::sort(part->begin(), part->end());
  return split;
}

TrainConfig TrainConfig::for_task(Task task) {
  TrainConfig c;
  if (is_long_term(task)) c.class_weights = {1.0, 1.5};
  return c;
}

void TrainConfig::validate() const {
  if (epochs < 1) throw Error("train: epochs must be >= 1");
  if (batch_size < 2) throw Error("train: batch_size must be >= 2 for batch norm");
  if (!(class_weights.low > 0) || !(class_weights.high > 0)) throw Error("train: class weights must be positive");
  if (patience < 1) throw Error("train: patience must be >= 1");
  if (!(adam.learning_rate > 0)) throw Error("train: learning rate must be positive");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"epochs", c.epochs},
                     {"batch_size", c.batch_size},
                     {"adam",
                      {{"learning_rate", c.adam.learning_rate},
                       {"beta1", c.adam.beta1},
                       {"beta2", c.adam.beta2},
                       {"epsilon", c.adam.epsilon}}},
                     {"class_weights", {{"low", c.class_weights.low}, {"high", c.class_weights.high}}},
                     {"patience", c.patience},
                     {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  if (j.contains("adam")) {
    const auto& a = j["adam"];
    c.adam.learning_rate = a.value("learning_rate", c.adam.learning_rate);
    c.adam.beta1 = a.value("beta1", c.adam.beta1);
    c.adam.beta2 = a.value("beta2", c.adam.beta2);
    c.adam.epsilon = a.value("epsilon", c.adam.epsilon);
  }
  if (j.contains("class_weights")) {
    c.class_weights.low = j["class_weights"].value("low", c.class_weights.low);
    c.class_weights.high = j["class_weights"].value("high", c.class_weights.high);
  }
  c.patience = j.value("patience", c.patience);
  c.seed = j.value("seed", c.seed);
  c.validate();
}

std::vector<const pipeline::WindowSample*> epoch_samples(const pipeline::Dataset& dataset,
                                                         std::span<const std::size_t> indices, int epoch) {
  int draws = 1;
  for (std::size_t i : indices) draws = std::max(draws, dataset.samples[i].draw + 1);
  const int want = epoch % draws;
  std::vector<const pipeline::WindowSample*> out;
  for (std::size_t i : indices)
    if (dataset.samples[i].draw == want) out.push_back(&dataset.samples[i]);
  return out;
}

double inference_loss(std::span<const double> probabilities, std::span<const int> labels, nn::ClassWeights weights) {
  if (probabilities.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < probabilities.size(); ++i) sum += nn::weighted_bce(probabilities[i], labels[i], weights).loss;
  return sum / static_cast<double>(probabilities.size());
}

namespace {

std::vector<int> labels_of(std::span<const pipeline::WindowSample* const> samples) {
  std::vector<int> y;
  y.reserve(samples.size());
  for (const auto* s : samples) y.push_back(s->label);
  return y;
}

void require_both_classes(std::span<const int> y, const char* what) {
  const auto high = std::count_if(y.begin(), y.end(), [](int v) { return v != 0; });
  if (high == 0 || high == static_cast<long>(y.size()))
    throw Error(std::string(what) + " set contains a single class; refusing to train");
}

}  // namespace

NetworkResult train_network(const nn::NetConfig& net_config, const pipeline::Dataset& dataset,
                            const DatasetSplit& split, const TrainConfig& config, Exec exec) {
  config.validate();
  if (net_config.static_dim != dataset.static_width || net_config.max_len != dataset.max_len)
    throw Error("network config does not match the dataset layout");
  const auto val = epoch_samples(dataset, split.val, 0);
  const auto val_y = labels_of(val);
  if (val.empty()) throw Error("empty validation set");
  require_both_classes(labels_of(epoch_samples(dataset, split.train, 0)), "training");

  nn::Network net(net_config, config.seed);
  nn::Adam adam(net.params(), config.adam);
  NetworkResult result{net, {}, 0};
  double best_f1 = -1.0;
  int since_best = 0;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    auto batch_pool = epoch_samples(dataset, split.train, epoch);
    Rng rng = make_rng(config.seed, salt::shuffle, static_cast<std::uint64_t>(epoch));
    std::shuffle(batch_pool.begin(), batch_pool.end(), rng);
    const auto labels = labels_of(batch_pool);

    EpochRecord rec;
    rec.epoch = epoch + 1;
    double loss_sum = 0.0;
    std::size_t seen = 0;
    const std::size_t n = batch_pool.size();
    for (std::size_t start = 0; start < n;) {
      std::size_t end = std::min(n, start + static_cast<std::size_t>(config.batch_size));
      if (n - end == 1) end = n;  // never leave a single-row batch for batch norm
      const std::size_t m = end - start;
      if (m < 2) break;
      nn::SampleBatch batch(batch_pool.data() + start, m);
      auto pass = net.forward_backward(batch, std::span<const int>(labels.data() + start, m), config.class_weights, exec);
      if (!std::isfinite(pass.loss)) throw Error("training diverged: non-finite loss at epoch " + std::to_string(epoch + 1));
      if (adam.step(net.params(), pass.grad)) {
        net.update_running_stats(pass);
      } else {
        ++rec.skipped_steps;
        spdlog::warn("epoch {}: skipped optimizer step on non-finite gradient", epoch + 1);
      }
      loss_sum += pass.loss * static_cast<double>(m);
      seen += m;
      start = end;
    }
    rec.train_loss = seen ? loss_sum / static_cast<double>(seen) : 0.0;

    const auto p = net.predict(val, exec);
    const auto report = metrics::evaluate(p, val_y);
    rec.val_loss = inference_loss(p, val_y, config.class_weights);
    if (!std::isfinite(rec.val_loss)) throw Error("training diverged: non-finite validation loss");
    rec.val_accuracy = report.accuracy;
    rec.val_precision = report.precision;
    rec.val_recall = report.recall;
    rec.val_f1 = report.f1;
    rec.val_auc = report.auc;
    result.history.push_back(rec);
    spdlog::info("epoch {} train_loss {:.5f} val_loss {:.5f} val_f1 {:.4f} val_auc {:.4f}", rec.epoch, rec.train_loss,
                 rec.val_loss, rec.val_f1, rec.val_auc);

    if (rec.val_f1 > best_f1) {
      best_f1 = rec.val_f1;
      result.network = net;
      result.best_epoch = rec.epoch;
      since_best = 0;
    } else if (++since_best >= config.patience) {
      break;
    }
  }
  return result;
}

forest::Matrix demographic_matrix(const pipeline::Dataset& dataset,
                                  std::span<const pipeline::WindowSample* const> samples) {
  forest::Matrix x;
  x.rows = static_cast<int>(samples.size());
  x.cols = dataset.demographic_width;
  x.values.reserve(static_cast<std::size_t>(x.rows) * x.cols);
  for (const auto* s : samples) {
    if (static_cast<int>(s->static_x.size()) < x.cols) throw Error("sample static vector shorter than demographic block");
    x.values.insert(x.values.end(), s->static_x.begin(), s->static_x.begin() + x.cols);
  }
  return x;
}

forest::Forest train_forest(const pipeline::Dataset& dataset, const DatasetSplit& split,
                            const forest::ForestConfig& config, Exec exec) {
  const auto samples = epoch_samples(dataset, split.train, 0);
  const auto y = labels_of(samples);
  require_both_classes(y, "training");
  return forest::Forest::fit(demographic_matrix(dataset, samples), y, config, exec);
}

void write_history_csv(std::ostream& out, std::span<const EpochRecord> history) {
  out << "epoch,train_loss,val_loss,val_accuracy,val_precision,val_recall,val_f1,val_auc,skipped_steps\n";
  auto num = [](double v) { return nlohmann::json(v).dump(); };
  for (const auto& r : history) {
    out << r.epoch << ',' << num(r.train_loss) << ',' << num(r.val_loss) << ',' << num(r.val_accuracy) << ','
        << num(r.val_precision) << ',' << num(r.val_recall) << ',' << num(r.val_f1) << ',' << num(r.val_auc) << ','
        << r.skipped_steps << '\n';
  }
}

}  // namespace dropcast::train
