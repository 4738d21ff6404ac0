#include "dropcast/nn/network.hpp"

#include <cmath>
#include <random>

#include <json.hpp>

#include "dropcast/error.hpp"
#include "dropcast/nn/kernels.hpp"
#include "dropcast/rng.hpp"

namespace dropcast::nn {

std::string_view to_string(Arch arch) { return arch == Arch::condip ? "condip" : "rendip"; }

NetConfig NetConfig::for_task(Arch arch, Task task, int static_dim, int max_len) {
  NetConfig c;
  c.arch = arch;
  c.task = task;
  c.static_dim = static_dim;
  c.max_len = max_len;
  if (task == Task::short_term) {
    c.conv_filters = 20;
    c.lstm_hidden = 100;
    c.static_hidden = {50, 100};
    c.head_hidden = {100, 100};
  } else {
    c.conv_filters = 8;
    c.lstm_hidden = 8;
    c.static_hidden = {12};
    c.head_hidden = {10};
  }
  return c;
}

void NetConfig::validate() const {
  auto positive = [](int v, const char* what) {
    if (v < 1) throw Error(std::string("network config: ") + what + " must be >= 1");
  };
  positive(static_dim, "static_dim");
  positive(seq_features, "seq_features");
  positive(max_len, "max_len");
  for (int w : static_hidden) positive(w, "static_hidden width");
  for (int w : head_hidden) positive(w, "head_hidden width");
  if (arch == Arch::condip) {
    positive(conv_layers, "conv_layers");
    positive(conv_filters, "conv_filters");
    positive(kernel_size, "kernel_size");
    if (kernel_size % 2 == 0) throw Error("network config: kernel_size must be odd for same padding");
  } else {
    positive(lstm_hidden, "lstm_hidden");
  }
}

void to_json(nlohmann::json& j, const NetConfig& c) {
  j = nlohmann::json{{"arch", to_string(c.arch)},
                     {"task", to_string(c.task)},
                     {"static_dim", c.static_dim},
                     {"seq_features", c.seq_features},
                     {"max_len", c.max_len},
                     {"static_hidden", c.static_hidden},
                     {"head_hidden", c.head_hidden},
                     {"conv_layers", c.conv_layers},
                     {"conv_filters", c.conv_filters},
                     {"kernel_size", c.kernel_size},
                     {"lstm_hidden", c.lstm_hidden},
                     {"batchnorm", c.batchnorm}};
}

void from_json(const nlohmann::json& j, NetConfig& c) {
  auto arch = j.at("arch").get<std::string>();
  if (arch == "condip") c.arch = Arch::condip;
  else if (arch == "rendip") c.arch = Arch::rendip;
  else throw Error("unknown network arch '" + arch + "'");
  auto task = parse_task(j.at("task").get<std::string>());
  if (!task) throw Error("unknown task in network config");
  c.task = *task;
  c.static_dim = j.at("static_dim").get<int>();
  c.seq_features = j.value("seq_features", c.seq_features);
  c.max_len = j.at("max_len").get<int>();
  c.static_hidden = j.at("static_hidden").get<std::vector<int>>();
  c.head_hidden = j.at("head_hidden").get<std::vector<int>>();
  c.conv_layers = j.value("conv_layers", c.conv_layers);
  c.conv_filters = j.value("conv_filters", c.conv_filters);
  c.kernel_size = j.value("kernel_size", c.kernel_size);
  c.lstm_hidden = j.value("lstm_hidden", c.lstm_hidden);
  c.batchnorm = j.value("batchnorm", c.batchnorm);
  c.validate();
}

namespace {

void add_dense(std::vector<std::pair<std::string, Tensor*>>& out, const std::string& name, DenseParams& d) {
  out.emplace_back(name + ".w", &d.w);
  out.emplace_back(name + ".b", &d.b);
}

template <class Params>
std::vector<std::pair<std::string, Tensor*>> collect(Params& p) {
  std::vector<std::pair<std::string, Tensor*>> out;
  for (std::size_t l = 0; l < p.static_dense.size(); ++l) {
    add_dense(out, "static." + std::to_string(l), p.static_dense[l]);
    if (l < p.static_bn.size()) {
      out.emplace_back("static." + std::to_string(l) + ".bn.gamma", &p.static_bn[l].gamma);
      out.emplace_back("static." + std::to_string(l) + ".bn.beta", &p.static_bn[l].beta);
    }
  }
  for (std::size_t l = 0; l < p.conv.size(); ++l) {
    out.emplace_back("conv." + std::to_string(l) + ".w", &p.conv[l].w);
    out.emplace_back("conv." + std::to_string(l) + ".b", &p.conv[l].b);
  }
  if (!p.lstm_fwd.b.empty()) {
    out.emplace_back("lstm.fwd.wx", &p.lstm_fwd.wx);
    out.emplace_back("lstm.fwd.wh", &p.lstm_fwd.wh);
    out.emplace_back("lstm.fwd.b", &p.lstm_fwd.b);
    out.emplace_back("lstm.bwd.wx", &p.lstm_bwd.wx);
    out.emplace_back("lstm.bwd.wh", &p.lstm_bwd.wh);
    out.emplace_back("lstm.bwd.b", &p.lstm_bwd.b);
  }
  for (std::size_t l = 0; l < p.head_dense.size(); ++l) {
    add_dense(out, "head." + std::to_string(l), p.head_dense[l]);
    if (l < p.head_bn.size()) {
      out.emplace_back("head." + std::to_string(l) + ".bn.gamma", &p.head_bn[l].gamma);
      out.emplace_back("head." + std::to_string(l) + ".bn.beta", &p.head_bn[l].beta);
    }
  }
  add_dense(out, "output", p.output);
  return out;
}

template <class Out, class In>
Out as_const(const In& in) {
  Out out;
  out.reserve(in.size());
  for (const auto& [name, t] : in) out.emplace_back(name, t);
  return out;
}

}  // namespace

std::vector<std::pair<std::string, Tensor*>> NetParams::named_tensors() { return collect(*this); }

std::vector<std::pair<std::string, const Tensor*>> NetParams::named_tensors() const {
  return as_const<std::vector<std::pair<std::string, const Tensor*>>>(collect(const_cast<NetParams&>(*this)));
}

NetParams NetParams::zeros_like() const {
  NetParams z = *this;
  for (auto& [name, t] : z.named_tensors()) t->fill(0.0);
  return z;
}

std::size_t NetParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : named_tensors()) n += t->size();
  return n;
}

std::vector<std::pair<std::string, Tensor*>> RunningStats::named_tensors() {
  std::vector<std::pair<std::string, Tensor*>> out;
  for (std::size_t l = 0; l < static_bn.size(); ++l) {
    out.emplace_back("static." + std::to_string(l) + ".bn.running_mean", &static_bn[l].mean);
    out.emplace_back("static." + std::to_string(l) + ".bn.running_var", &static_bn[l].var);
  }
  for (std::size_t l = 0; l < head_bn.size(); ++l) {
    out.emplace_back("head." + std::to_string(l) + ".bn.running_mean", &head_bn[l].mean);
    out.emplace_back("head." + std::to_string(l) + ".bn.running_var", &head_bn[l].var);
  }
  return out;
}

std::vector<std::pair<std::string, const Tensor*>> RunningStats::named_tensors() const {
  return as_const<std::vector<std::pair<std::string, const Tensor*>>>(
      const_cast<RunningStats&>(*this).named_tensors());
}

namespace {

Tensor uniform(Rng& rng, std::vector<int> shape, double bound) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> d(-bound, bound);
  for (auto& v : t.values()) v = d(rng);
  return t;
}

DenseParams init_dense(Rng& rng, int in, int out, double gain) {
  return DenseParams{uniform(rng, {in, out}, std::sqrt(gain / in)), Tensor({out})};
}

LstmParams init_lstm(Rng& rng, int in, int hidden) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  LstmParams p{uniform(rng, {in, 4 * hidden}, bound), uniform(rng, {hidden, 4 * hidden}, bound),
               Tensor({4 * hidden})};
  for (int j = 0; j < hidden; ++j) p.b[static_cast<std::size_t>(hidden + j)] = 1.0;
  return p;
}

void build_stack(Rng& rng, int in, const std::vector<int>& widths, bool batchnorm, std::vector<DenseParams>& dense,
                 std::vector<BatchNormParams>& bn, std::vector<BatchNormStats>& running) {
  for (int w : widths) {
    dense.push_back(init_dense(rng, in, w, 6.0));
    if (batchnorm) {
      bn.push_back(BatchNormParams{Tensor({w}, 1.0), Tensor({w}, 0.0)});
      running.push_back(BatchNormStats{Tensor({w}, 0.0), Tensor({w}, 1.0)});
    }
    in = w;
  }
}

// Dense -> [batch norm] -> ReLU layers.
struct StackCache {
  std::vector<Tensor> inputs;
  std::vector<Tensor> pre;  // pre-activation after batch norm
  std::vector<BatchNormCache> bn;
};

Tensor run_stack(const Tensor& x, const std::vector<DenseParams>& dense, const std::vector<BatchNormParams>& bn,
                 const std::vector<BatchNormStats>& running, bool train, StackCache* cache, Exec exec) {
  Tensor h = x;
  if (cache) {
    cache->inputs.clear();
    cache->pre.clear();
    cache->bn.assign(bn.size(), BatchNormCache{});
  }
  for (std::size_t l = 0; l < dense.size(); ++l) {
    Tensor a = dense_forward(h, dense[l], exec);
    if (!bn.empty()) {
      a = train ? batchnorm_forward_train(a, bn[l], cache->bn[l]) : batchnorm_forward_infer(a, bn[l], running[l]);
    }
    Tensor next = relu_forward(a);
    if (cache) {
      cache->inputs.push_back(std::move(h));
      cache->pre.push_back(std::move(a));
    }
    h = std::move(next);
  }
  return h;
}

Tensor backprop_stack(const StackCache& cache, const std::vector<DenseParams>& dense,
                      const std::vector<BatchNormParams>& bn, Tensor d, std::vector<DenseParams>& grad_dense,
                      std::vector<BatchNormParams>& grad_bn, Exec exec) {
  for (std::size_t l = dense.size(); l-- > 0;) {
    d = relu_backward(cache.pre[l], d);
    if (!bn.empty()) d = batchnorm_backward(cache.bn[l], bn[l], d, grad_bn[l]);
    d = dense_backward(cache.inputs[l], dense[l], d, grad_dense[l], exec);
  }
  return d;
}

struct SequenceCache {
  Tensor x;
  std::vector<Tensor> conv_inputs;
  std::vector<Tensor> conv_pre;
  BiLstmCache lstm;
};

// Gradient buffers for the per-sample sequence encoder.
struct SequenceGrad {
  std::vector<ConvParams> conv;
  LstmParams lstm_fwd;
  LstmParams lstm_bwd;

  static SequenceGrad zeros_for(const NetParams& p) {
    SequenceGrad g;
    for (const auto& c : p.conv) g.conv.push_back(ConvParams{Tensor(c.w.shape()), Tensor(c.b.shape())});
    if (!p.lstm_fwd.b.empty()) {
      g.lstm_fwd = LstmParams{Tensor(p.lstm_fwd.wx.shape()), Tensor(p.lstm_fwd.wh.shape()), Tensor(p.lstm_fwd.b.shape())};
      g.lstm_bwd = LstmParams{Tensor(p.lstm_bwd.wx.shape()), Tensor(p.lstm_bwd.wh.shape()), Tensor(p.lstm_bwd.b.shape())};
    }
    return g;
  }
  void zero() {
    for (auto& c : conv) {
      c.w.fill(0.0);
      c.b.fill(0.0);
    }
    for (auto* t : {&lstm_fwd.wx, &lstm_fwd.wh, &lstm_fwd.b, &lstm_bwd.wx, &lstm_bwd.wh, &lstm_bwd.b}) t->fill(0.0);
  }
  void add_to(NetParams& g) const {
    auto add = [](Tensor& dst, const Tensor& src) {
      for (std::size_t i = 0; i < src.size(); ++i) dst[i] += src[i];
    };
    for (std::size_t l = 0; l < conv.size(); ++l) {
      add(g.conv[l].w, conv[l].w);
      add(g.conv[l].b, conv[l].b);
    }
    if (!lstm_fwd.b.empty()) {
      add(g.lstm_fwd.wx, lstm_fwd.wx);
      add(g.lstm_fwd.wh, lstm_fwd.wh);
      add(g.lstm_fwd.b, lstm_fwd.b);
      add(g.lstm_bwd.wx, lstm_bwd.wx);
      add(g.lstm_bwd.wh, lstm_bwd.wh);
      add(g.lstm_bwd.b, lstm_bwd.b);
    }
  }
};

Tensor sample_sequence(const pipeline::WindowSample& s, const NetConfig& cfg) {
  if (s.max_len != cfg.max_len || static_cast<int>(s.seq_x.size()) != cfg.max_len * cfg.seq_features)
    throw Error("sample sequence shape does not match the network config (max_len " + std::to_string(cfg.max_len) +
                ")");
  Tensor x({cfg.max_len, cfg.seq_features});
  std::copy(s.seq_x.begin(), s.seq_x.end(), x.data());
  return x;
}

std::vector<double> encode_sequence(const NetConfig& cfg, const NetParams& p, const pipeline::WindowSample& s,
                                    SequenceCache* cache, bool& degenerate) {
  Tensor x = sample_sequence(s, cfg);
  if (cfg.arch == Arch::condip) {
    Tensor h = x;
    if (cache) {
      cache->conv_inputs.clear();
      cache->conv_pre.clear();
    }
    for (const auto& layer : p.conv) {
      Tensor pre = conv1d_forward(h, s.seq_len, layer);
      Tensor next = relu_forward(pre);
      if (cache) {
        cache->conv_inputs.push_back(std::move(h));
        cache->conv_pre.push_back(std::move(pre));
      }
      h = std::move(next);
    }
    auto pooled = avg_pool_time(h, s.seq_len);
    degenerate = pooled.degenerate;
    return pooled.pooled;
  }
  auto out = bilstm_forward(x, s.seq_len, p.lstm_fwd, p.lstm_bwd, cache ? &cache->lstm : nullptr);
  degenerate = out.degenerate;
  if (cache) cache->x = std::move(x);
  return out.h;
}

void backprop_sequence(const NetConfig& cfg, const NetParams& p, const pipeline::WindowSample& s,
                       const SequenceCache& cache, std::span<const double> d_enc, SequenceGrad& grad) {
  if (cfg.arch == Arch::condip) {
    Tensor d = avg_pool_time_backward(d_enc, s.seq_len, cfg.max_len);
    for (std::size_t l = p.conv.size(); l-- > 0;) {
      d = relu_backward(cache.conv_pre[l], d);
      d = conv1d_backward(cache.conv_inputs[l], s.seq_len, p.conv[l], d, grad.conv[l]);
    }
    return;
  }
  bilstm_backward(cache.x, cache.lstm, p.lstm_fwd, p.lstm_bwd, d_enc, grad.lstm_fwd, grad.lstm_bwd);
}

struct ForwardState {
  StackCache static_cache;
  StackCache head_cache;
  std::vector<SequenceCache> seq;
  Tensor fused;
  Tensor head_out;
  std::vector<double> probabilities;
  int degenerate = 0;
};

void run_forward(const NetConfig& cfg, const NetParams& p, const RunningStats& running, SampleBatch batch,
                 bool train, ForwardState& st, Exec exec, bool keep_cache) {
  const int n = static_cast<int>(batch.size());
  Tensor static_x({n, cfg.static_dim});
  for (int i = 0; i < n; ++i) {
    const auto& s = *batch[static_cast<std::size_t>(i)];
    if (static_cast<int>(s.static_x.size()) != cfg.static_dim)
      throw Error("sample static_x width " + std::to_string(s.static_x.size()) + " does not match network input " +
                  std::to_string(cfg.static_dim));
    std::copy(s.static_x.begin(), s.static_x.end(), static_x.data() + static_cast<std::size_t>(i) * cfg.static_dim);
  }
  const bool need_cache = train || keep_cache;
  Tensor g = run_stack(static_x, p.static_dense, p.static_bn, running.static_bn, train,
                       need_cache ? &st.static_cache : nullptr, exec);

  const int seq_width = cfg.sequence_width();
  Tensor seq_out({n, seq_width});
  if (keep_cache) st.seq.assign(static_cast<std::size_t>(n), SequenceCache{});
  std::vector<char> degenerate(static_cast<std::size_t>(n), 0);
  kernels::for_each_index(exec, n, [&](int i) {
    bool deg = false;
    auto enc = encode_sequence(cfg, p, *batch[static_cast<std::size_t>(i)],
                               keep_cache ? &st.seq[static_cast<std::size_t>(i)] : nullptr, deg);
    std::copy(enc.begin(), enc.end(), seq_out.data() + static_cast<std::size_t>(i) * seq_width);
    degenerate[static_cast<std::size_t>(i)] = deg;
  });
  st.degenerate = 0;
  for (char d : degenerate) st.degenerate += d;

  const int gw = g.dim(1);
  st.fused = Tensor({n, gw + seq_width});
  for (int i = 0; i < n; ++i) {
    for (int c = 0; c < gw; ++c) st.fused(i, c) = g(i, c);
    for (int c = 0; c < seq_width; ++c) st.fused(i, gw + c) = seq_out(i, c);
  }
  st.head_out = run_stack(st.fused, p.head_dense, p.head_bn, running.head_bn, train,
                          need_cache ? &st.head_cache : nullptr, exec);
  Tensor logits = dense_forward(st.head_out, p.output, exec);
  st.probabilities.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) st.probabilities[static_cast<std::size_t>(i)] = sigmoid(logits[static_cast<std::size_t>(i)]);
}

void check_labels(SampleBatch batch, std::span<const int> labels) {
  if (labels.size() != batch.size()) throw Error("label count does not match batch size");
  if (batch.empty()) throw Error("empty batch");
}

}  // namespace

Network::Network(NetConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  Rng rng = make_rng(seed, salt::init);
  build_stack(rng, config_.static_dim, config_.static_hidden, config_.batchnorm, params_.static_dense,
              params_.static_bn, running_.static_bn);
  if (config_.arch == Arch::condip) {
    int in = config_.seq_features;
    for (int l = 0; l < config_.conv_layers; ++l) {
      const int fan_in = config_.kernel_size * in;
      params_.conv.push_back(ConvParams{
          uniform(rng, {config_.kernel_size, in, config_.conv_filters}, std::sqrt(6.0 / fan_in)),
          Tensor({config_.conv_filters})});
      in = config_.conv_filters;
    }
  } else {
    params_.lstm_fwd = init_lstm(rng, config_.seq_features, config_.lstm_hidden);
    params_.lstm_bwd = init_lstm(rng, config_.seq_features, config_.lstm_hidden);
  }
  const int static_out = config_.static_hidden.empty() ? config_.static_dim : config_.static_hidden.back();
  build_stack(rng, static_out + config_.sequence_width(), config_.head_hidden, config_.batchnorm, params_.head_dense,
              params_.head_bn, running_.head_bn);
  const int head_out = config_.head_hidden.empty() ? static_out + config_.sequence_width() : config_.head_hidden.back();
  params_.output = init_dense(rng, head_out, 1, 1.0);
}

Network::Network(NetConfig config, NetParams params, RunningStats running)
    : config_(std::move(config)), params_(std::move(params)), running_(std::move(running)) {
  config_.validate();
}

std::vector<double> Network::predict(SampleBatch batch, Exec exec) const {
  if (batch.empty()) return {};
  ForwardState st;
  run_forward(config_, params_, running_, batch, false, st, exec, false);
  return st.probabilities;
}

double Network::train_loss(SampleBatch batch, std::span<const int> labels, ClassWeights weights, Exec exec) const {
  check_labels(batch, labels);
  ForwardState st;
  run_forward(config_, params_, running_, batch, true, st, exec, false);
  double loss = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) loss += weighted_bce(st.probabilities[i], labels[i], weights).loss;
  return loss / static_cast<double>(batch.size());
}

TrainPass Network::forward_backward(SampleBatch batch, std::span<const int> labels, ClassWeights weights,
                                    Exec exec) const {
  check_labels(batch, labels);
  const int n = static_cast<int>(batch.size());
  ForwardState st;
  run_forward(config_, params_, running_, batch, true, st, exec, true);

  TrainPass pass;
  pass.grad = params_.zeros_like();
  pass.probabilities = st.probabilities;
  pass.degenerate = st.degenerate;
  Tensor d_logits({n, 1});
  for (int i = 0; i < n; ++i) {
    const double p = st.probabilities[static_cast<std::size_t>(i)];
    auto bce = weighted_bce(p, labels[static_cast<std::size_t>(i)], weights);
    pass.loss += bce.loss;
    pass.clamped += bce.clamped;
    d_logits[static_cast<std::size_t>(i)] = bce.d_loss_d_p * p * (1.0 - p) / n;
  }
  pass.loss /= n;
  if (!std::isfinite(pass.loss)) throw Error("non-finite training loss");

  Tensor d = dense_backward(st.head_out, params_.output, d_logits, pass.grad.output, exec);
  d = backprop_stack(st.head_cache, params_.head_dense, params_.head_bn, std::move(d), pass.grad.head_dense,
                     pass.grad.head_bn, exec);

  const int seq_width = config_.sequence_width();
  const int gw = st.fused.dim(1) - seq_width;
  Tensor d_static({n, gw});
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < gw; ++c) d_static(i, c) = d(i, c);
  backprop_stack(st.static_cache, params_.static_dense, params_.static_bn, std::move(d_static), pass.grad.static_dense,
                 pass.grad.static_bn, exec);

  // Per-sample sequence gradients are summed in sample order on both paths,
  // so the serial and parallel reductions agree bit for bit.
  auto d_seq_row = [&](int i) {
    return std::span<const double>(d.data() + static_cast<std::size_t>(i) * d.dim(1) + gw,
                                   static_cast<std::size_t>(seq_width));
  };
  if (exec == Exec::parallel) {
    std::vector<SequenceGrad> per_sample(static_cast<std::size_t>(n), SequenceGrad::zeros_for(params_));
    kernels::for_each_index(exec, n, [&](int i) {
      backprop_sequence(config_, params_, *batch[static_cast<std::size_t>(i)], st.seq[static_cast<std::size_t>(i)],
                        d_seq_row(i), per_sample[static_cast<std::size_t>(i)]);
    });
    for (const auto& g : per_sample) g.add_to(pass.grad);
  } else {
    SequenceGrad scratch = SequenceGrad::zeros_for(params_);
    for (int i = 0; i < n; ++i) {
      scratch.zero();
      backprop_sequence(config_, params_, *batch[static_cast<std::size_t>(i)], st.seq[static_cast<std::size_t>(i)],
                        d_seq_row(i), scratch);
      scratch.add_to(pass.grad);
    }
  }
  pass.static_bn = std::move(st.static_cache.bn);
  pass.head_bn = std::move(st.head_cache.bn);
  return pass;
}

void Network::update_running_stats(const TrainPass& pass) {
  for (std::size_t l = 0; l < running_.static_bn.size() && l < pass.static_bn.size(); ++l)
    nn::update_running_stats(running_.static_bn[l], pass.static_bn[l]);
  for (std::size_t l = 0; l < running_.head_bn.size() && l < pass.head_bn.size(); ++l)
    nn::update_running_stats(running_.head_bn[l], pass.head_bn[l]);
}

}  // namespace dropcast::nn
