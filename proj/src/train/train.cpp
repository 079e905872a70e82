#include "cd3net/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "cd3net/enhance.hpp"
#include "cd3net/errors.hpp"
#include "cd3net/ops.hpp"

namespace cd3net {
inline namespace CD3NET_ABI {

namespace {

bool silent(const TimeSignal& s) {
  return std::all_of(s.samples.begin(), s.samples.end(), [](Real v) { return v == 0; });
}

Tensor as_tensor(const TimeSignal& s) { return Tensor::from({s.size()}, s.samples); }

std::string fixed(double v, int digits = 4) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(digits);
  os << v;
  return os.str();
}

}  // namespace

void adam_step(const std::vector<NamedTensor>& params,
               const std::vector<std::span<const Real>>& grads, TrainState& state,
               const AdamOptions& opt) {
  if (grads.size() != params.size()) {
    throw InvalidArgument("adam_step: " + std::to_string(grads.size()) + " gradients for " +
                          std::to_string(params.size()) + " parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!grads[i].empty() && grads[i].size() != params[i].tensor.size()) {
      throw InvalidArgument("adam_step: gradient shape mismatch for " + params[i].name);
    }
    for (Real g : grads[i]) {
      if (!std::isfinite(g)) throw NumericalError("non-finite gradient in parameter " + params[i].name);
    }
  }
  if (state.m.size() != params.size()) {
    state.m.assign(params.size(), {});
    state.v.assign(params.size(), {});
    for (std::size_t i = 0; i < params.size(); ++i) {
      state.m[i].assign(params[i].tensor.size(), Real{0});
      state.v[i].assign(params[i].tensor.size(), Real{0});
    }
  }
  ++state.step;
  const double lr = state.lr;
  const double c1 = 1 - std::pow(opt.beta1, double(state.step));
  const double c2 = 1 - std::pow(opt.beta2, double(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor p = params[i].tensor;
    auto w = p.mutable_data();
    auto& m = state.m[i];
    auto& v = state.v[i];
    if (m.size() != w.size()) throw InvalidArgument("adam_step: moment shape mismatch for " + params[i].name);
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double g = grads[i].empty() ? 0.0 : double(grads[i][j]);
      double x = double(w[j]);
      x -= lr * opt.weight_decay * x;
      const double mj = opt.beta1 * double(m[j]) + (1 - opt.beta1) * g;
      const double vj = opt.beta2 * double(v[j]) + (1 - opt.beta2) * g * g;
      m[j] = Real(mj);
      v[j] = Real(vj);
      x -= lr * (mj / c1) / (std::sqrt(vj / c2) + opt.eps);
      w[j] = Real(x);
    }
  }
}

void adam_step(const std::vector<NamedTensor>& params, TrainState& state, const AdamOptions& opt) {
  std::vector<std::span<const Real>> grads;
  grads.reserve(params.size());
  for (const auto& p : params) {
    grads.push_back(p.tensor.has_grad() ? p.tensor.grad() : std::span<const Real>{});
  }
  adam_step(params, grads, state, opt);
}

void lr_schedule(TrainState& state, double val_loss, const ScheduleOptions& opt) {
  if (val_loss < state.best_val - opt.threshold) {
    state.best_val = val_loss;
    state.stale_epochs = 0;
    return;
  }
  if (++state.stale_epochs >= opt.patience) {
    state.lr *= opt.factor;
    state.stale_epochs = 0;
  }
}

void TrainPlan::validate() const {
  if (epochs == 0 || batch_size == 0 || accumulate == 0) {
    throw InvalidArgument("train: epochs, batch size and accumulation must be positive");
  }
  if (!(lr0 >= 0)) throw InvalidArgument("train: learning rate must be non-negative");
  weights.validate();
}

Tensor batch_loss(Cd3Net& net, const std::vector<const SceneQuad*>& batch,
                  const LossWeights& weights, Mode mode) {
  std::vector<const TimeSignal*> mics, lpbs;
  for (const SceneQuad* s : batch) {
    mics.push_back(&s->mic);
    lpbs.push_back(&s->loopback);
  }
  const std::vector<Tensor> out = enhance_batch(net, mics, lpbs, mode);
  Tensor total;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Tensor l = composite_loss(out[i], as_tensor(batch[i]->clean), weights);
    total = total.defined() ? add(total, l) : l;
  }
  return scale(total, Real(1.0 / double(batch.size())));
}

double validation_loss(Cd3Net& net, const std::vector<SceneQuad>& scenes,
                       const LossWeights& weights, std::size_t batch_size) {
  NoGradGuard guard;
  double total = 0;
  for (std::size_t start = 0; start < scenes.size(); start += batch_size) {
    std::vector<const SceneQuad*> batch;
    for (std::size_t i = start; i < std::min(scenes.size(), start + batch_size); ++i) {
      batch.push_back(&scenes[i]);
    }
    total += double(batch_loss(net, batch, weights, Mode::eval).item()) * double(batch.size());
  }
  return total / double(scenes.size());
}

TrainResult train(const TrainPlan& plan, Cd3Net& net, const std::vector<SceneQuad>& train_scenes,
                  const std::vector<SceneQuad>& val_scenes, const EpochCallback& on_epoch) {
  plan.validate();
  if (train_scenes.empty() || val_scenes.empty()) {
    throw InvalidArgument("train: training and validation pools must be non-empty");
  }
  for (const auto* pool : {&train_scenes, &val_scenes}) {
    for (std::size_t i = 0; i < pool->size(); ++i) {
      if (silent((*pool)[i].clean)) {
        throw InvalidData("train: scene " + std::to_string(i) +
                          " has a silent clean target (farend single-talk cannot be scored)");
      }
    }
  }
  TrainResult result;
  TrainState& state = result.state;
  state.lr = plan.lr0;
  state.rng_seed = plan.seed;
  const std::vector<NamedTensor> params = net.parameters();
  const std::size_t per_epoch =
      plan.scenes_per_epoch == 0 ? train_scenes.size() : std::min(plan.scenes_per_epoch, train_scenes.size());
  std::vector<std::size_t> order(train_scenes.size());

  auto zero_grads = [&] {
    for (const auto& p : params) {
      Tensor t = p.tensor;
      t.zero_grad();
    }
  };
  bool done = false;
  for (std::size_t epoch = 0; epoch < plan.epochs && !done; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 shuffle_rng(mix_seed({plan.seed, epoch, 0x5f}));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double loss_sum = 0;
    std::size_t batches = 0, pending = 0;
    zero_grads();
    for (std::size_t start = 0; start < per_epoch; start += plan.batch_size) {
      std::vector<SceneQuad> augmented;
      std::vector<const SceneQuad*> batch;
      const std::size_t end = std::min(per_epoch, start + plan.batch_size);
      augmented.reserve(end - start);
      for (std::size_t k = start; k < end; ++k) {
        const std::size_t idx = order[k];
        if (plan.augment.shift || plan.augment.scale) {
          std::mt19937_64 rng = augment_rng(plan.seed, epoch, idx);
          augmented.push_back(augment_scene(train_scenes[idx], rng, plan.augment));
          batch.push_back(&augmented.back());
        } else {
          batch.push_back(&train_scenes[idx]);
        }
      }
      const Tensor loss = batch_loss(net, batch, plan.weights, Mode::train);
      const double value = double(loss.item());
      if (!std::isfinite(value)) {
        throw NumericalError("non-finite training loss at epoch " + std::to_string(epoch + 1) +
                             ", step " + std::to_string(state.step + 1));
      }
      backward(scale(loss, Real(1.0 / double(plan.accumulate))));
      loss_sum += value;
      ++batches;
      if (++pending == plan.accumulate || end == per_epoch) {
        try {
          adam_step(params, state, plan.adam);
        } catch (const NumericalError& e) {
          throw NumericalError(std::string(e.what()) + " at epoch " + std::to_string(epoch + 1) +
                               ", step " + std::to_string(state.step + 1));
        }
        zero_grads();
        pending = 0;
        if (plan.max_steps != 0 && state.step >= plan.max_steps) {
          done = true;
          break;
        }
      }
    }
    EpochRecord rec;
    rec.epoch = epoch + 1;
    rec.train_loss = loss_sum / double(batches);
    rec.val_loss = validation_loss(net, val_scenes, plan.weights, plan.batch_size);
    if (!std::isfinite(rec.val_loss)) {
      throw NumericalError("non-finite validation loss at epoch " + std::to_string(epoch + 1));
    }
    lr_schedule(state, rec.val_loss, plan.schedule);
    rec.lr = state.lr;
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  return result;
}

std::string format_history(const std::vector<EpochRecord>& history) {
  std::ostringstream os;
  os.precision(10);
  os << "epoch\ttrain_loss\tval_loss\tlr\n";
  for (const auto& r : history) {
    os << r.epoch << '\t' << r.train_loss << '\t' << r.val_loss << '\t' << r.lr << '\n';
  }
  return os.str();
}

std::size_t EvalReport::scored() const {
  return std::size_t(std::count_if(scenes.begin(), scenes.end(),
                                   [](const SceneMetrics& m) { return m.error.empty(); }));
}

MetricSummary EvalReport::summary(double (*field)(const SceneMetrics&)) const {
  MetricSummary s;
  const std::size_t n = scored();
  if (n == 0) return s;
  for (const auto& m : scenes) {
    if (m.error.empty()) s.mean += field(m);
  }
  s.mean /= double(n);
  if (n > 1) {
    double var = 0;
    for (const auto& m : scenes) {
      if (m.error.empty()) var += (field(m) - s.mean) * (field(m) - s.mean);
    }
    s.stdev = std::sqrt(var / double(n - 1));
  }
  return s;
}

MetricSummary EvalReport::si_sdr_gain() const {
  return summary([](const SceneMetrics& m) { return m.si_sdr_gain(); });
}

MetricSummary EvalReport::sdr_gain() const {
  return summary([](const SceneMetrics& m) { return m.sdr_gain(); });
}

std::string EvalReport::to_tsv() const {
  using Field = double (*)(const SceneMetrics&);
  const std::vector<std::pair<const char*, Field>> columns{
      {"si_sdr_mic", [](const SceneMetrics& m) { return m.si_sdr_mic; }},
      {"si_sdr_out", [](const SceneMetrics& m) { return m.si_sdr_out; }},
      {"si_sdr_gain", [](const SceneMetrics& m) { return m.si_sdr_gain(); }},
      {"sdr_mic", [](const SceneMetrics& m) { return m.sdr_mic; }},
      {"sdr_out", [](const SceneMetrics& m) { return m.sdr_out; }},
      {"sdr_gain", [](const SceneMetrics& m) { return m.sdr_gain(); }},
  };
  std::ostringstream os;
  os << "scene";
  for (const auto& [name, f] : columns) os << '\t' << name;
  os << "\tstatus\n";
  for (const auto& m : scenes) {
    os << m.id;
    for (const auto& [name, f] : columns) os << '\t' << (m.error.empty() ? fixed(f(m)) : "nan");
    os << '\t' << (m.error.empty() ? "ok" : "error: " + m.error) << '\n';
  }
  if (scored() > 0) {
    for (const bool mean_row : {true, false}) {
      os << (mean_row ? "mean" : "stdev");
      for (const auto& [name, f] : columns) {
        const MetricSummary s = summary(f);
        os << '\t' << fixed(mean_row ? s.mean : s.stdev);
      }
      os << '\t' << scored() << " scored\n";
    }
  }
  return os.str();
}

EvalReport evaluate(const std::vector<NamedScene>& scenes, const Estimator& estimate) {
  EvalReport report;
  for (const auto& [id, scene] : scenes) {
    SceneMetrics m;
    m.id = id;
    try {
      const std::size_t n = scene.clean.size();
      if (scene.mic.size() != n || scene.loopback.size() != n) {
        throw InvalidData("signal lengths differ");
      }
      const TimeSignal out = estimate(scene);
      if (out.size() != n) throw InvalidData("estimate length differs from the reference");
      m.si_sdr_mic = si_sdr(scene.mic.samples, scene.clean.samples);
      m.sdr_mic = sdr(scene.mic.samples, scene.clean.samples);
      m.si_sdr_out = si_sdr(out.samples, scene.clean.samples);
      m.sdr_out = sdr(out.samples, scene.clean.samples);
    } catch (const Error& e) {
      m.error = e.what();
    }
    report.scenes.push_back(m);
  }
  return report;
}

EvalReport evaluate(Cd3Net& net, const std::vector<NamedScene>& scenes) {
  return evaluate(scenes, [&net](const SceneQuad& s) { return enhance(s.mic, s.loopback, net); });
}

TimeSignal oracle_dual_mask_estimate(const SceneQuad& scene) {
  const std::size_t n = scene.mic.size();
  if (scene.echo.size() != n || scene.loopback.size() != n) {
    throw InvalidData("oracle mask needs echo and loopback of the mic length");
  }
  const std::size_t padded = analysis_length(n);
  const ComplexSpectrogram p = analysis_stft(scene.mic.samples, padded);
  const ComplexSpectrogram q = analysis_stft(scene.loopback.samples, padded);
  const ComplexSpectrogram e = analysis_stft(scene.echo.samples, padded);
  const ComplexTensor b = oracle_echo_mask(e, q, default_oracle_floor(q));
  const ComplexTensor a{Tensor::full(p.re.shape(), 1), Tensor::zeros(p.re.shape())};
  const TimeSignal y = istft(apply_dual_mask(p, q, MaskPair{a, b}));
  return TimeSignal(std::vector<Real>(y.samples.begin() + kHop, y.samples.begin() + kHop + n));
}

}  // namespace CD3NET_ABI
}  // namespace cd3net
