#pragma once

// Gradient-descent training on the composite objective with truncated BPTT:
// each step draws random windows from the training prefix of the sequence.

#include <cmath>
#include <map>
#include <ostream>
#include <random>
#include <vector>

#include <json.hpp>

#include "faconv/model.hpp"

namespace faconv {

enum class OptimizerKind { SGD, Adam };

inline std::string to_string(OptimizerKind o) { return o == OptimizerKind::SGD ? "sgd" : "adam"; }

inline OptimizerKind optimizer_from_string(const std::string& s) {
  if (s == "sgd") return OptimizerKind::SGD;
  if (s == "adam") return OptimizerKind::Adam;
  throw ConfigError("unknown optimizer '" + s + "' (expected sgd|adam)");
}

struct TrainSpec {
  std::size_t steps = 60;
  double learningRate = 0.01;
  OptimizerKind optimizer = OptimizerKind::Adam;
  double beta1 = 0.9, beta2 = 0.999, epsilon = 1e-8;
  std::size_t batch = 1;   // windows per step
  std::size_t window = 8;  // BPTT window length
  double trainFraction = 0.75;
  ObjectiveWeights lambda;
  std::uint64_t seed = 1;

  void validate() const {
    if (steps < 1) throw ConfigError("training needs steps >= 1");
    if (!(learningRate >= 0.0)) throw ConfigError("learning rate must be >= 0");
    if (batch < 1 || window < 1) throw ConfigError("batch and window must be >= 1");
    if (!(trainFraction > 0.0 && trainFraction <= 1.0)) throw ConfigError("train fraction must lie in (0, 1]");
    if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0 && epsilon > 0.0)) {
      throw ConfigError("Adam needs beta1, beta2 in [0,1) and epsilon > 0");
    }
    lambda.validate();
  }
};

// Number of leading timesteps used for training; the rest are held out.
inline std::size_t train_length(std::size_t T, double fraction) {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(fraction * static_cast<double>(T))));
}

class Optimizer {
 public:
  explicit Optimizer(const TrainSpec& spec) : spec_(spec) {}

  void step(ParameterStore& store) {
    ++t_;
    const double lr = spec_.learningRate;
    for (auto& [path, e] : store) {
      if (spec_.optimizer == OptimizerKind::SGD) {
        for (std::size_t i = 0; i < e.value.size(); ++i) e.value[i] -= lr * e.grad[i];
        continue;
      }
      auto& [m, v] = moments_.try_emplace(path, Tensor4D(e.value.shape()), Tensor4D(e.value.shape())).first->second;
      const double c1 = 1.0 - std::pow(spec_.beta1, static_cast<double>(t_));
      const double c2 = 1.0 - std::pow(spec_.beta2, static_cast<double>(t_));
      for (std::size_t i = 0; i < e.value.size(); ++i) {
        const double g = e.grad[i];
        m[i] = spec_.beta1 * m[i] + (1.0 - spec_.beta1) * g;
        v[i] = spec_.beta2 * v[i] + (1.0 - spec_.beta2) * g * g;
        e.value[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + spec_.epsilon);
      }
    }
  }

 private:
  TrainSpec spec_;
  std::size_t t_ = 0;
  std::map<std::string, std::pair<Tensor4D, Tensor4D>> moments_;
};

struct TrainResult {
  std::vector<LossBreakdown> log;  // per step, averaged over the batch
};

inline void write_loss_header(std::ostream& os) { os << "step,task,spatial,temporal,total\n"; }

inline void write_loss_row(std::ostream& os, std::size_t step, const LossBreakdown& b) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.17g,%.17g\n", step, b.task, b.spatial, b.temporal, b.total);
  os << buf;
}

inline TrainResult train(const SpatioTemporalModel& model, ParameterStore& store, const std::vector<Tensor4D>& xs,
                         const TrainSpec& spec, std::ostream* csv = nullptr) {
  spec.validate();
  if (xs.empty()) throw ArgumentError("training needs a non-empty sequence");
  const std::size_t usable = train_length(xs.size(), spec.trainFraction);
  const std::size_t window = std::min(spec.window, usable);
  std::mt19937_64 rng(spec.seed);
  std::uniform_int_distribution<std::size_t> start(0, usable - window);
  Optimizer opt(spec);
  TrainResult result;
  if (csv) write_loss_header(*csv);
  for (std::size_t step = 0; step < spec.steps; ++step) {
    store.zero_grad();
    LossBreakdown mean;
    for (std::size_t b = 0; b < spec.batch; ++b) {
      const std::size_t t0 = start(rng);
      const std::vector<Tensor4D> win(xs.begin() + static_cast<std::ptrdiff_t>(t0),
                                      xs.begin() + static_cast<std::ptrdiff_t>(t0 + window));
      Tape tape;
      Context ctx{tape, store, true, &rng};
      LossBreakdown part;
      Var loss = model.objective(ctx, win, model.forward(ctx, win, t0), spec.lambda, &part);
      if (!std::isfinite(part.total)) {
        throw DivergenceError("non-finite loss at step " + std::to_string(step), step);
      }
      tape.backward(loss);
      mean.task += part.task;
      mean.spatial += part.spatial;
      mean.temporal += part.temporal;
      mean.total += part.total;
    }
    const double inv = 1.0 / static_cast<double>(spec.batch);
    mean.task *= inv;
    mean.spatial *= inv;
    mean.temporal *= inv;
    mean.total *= inv;
    if (spec.batch > 1)
      for (auto& [_, e] : store)
        for (auto& g : e.grad.raw()) g *= inv;
    for (const auto& [path, e] : store) {
      if (!e.grad.all_finite()) throw DivergenceError("non-finite gradient for '" + path + "' at step " + std::to_string(step), step);
    }
    opt.step(store);
    result.log.push_back(mean);
    if (csv) write_loss_row(*csv, step, mean);
  }
  return result;
}

inline void to_json(nlohmann::json& j, const TrainSpec& s) {
  j = nlohmann::json{{"steps", s.steps},
                     {"learning_rate", s.learningRate},
                     {"optimizer", to_string(s.optimizer)},
                     {"beta1", s.beta1},
                     {"beta2", s.beta2},
                     {"epsilon", s.epsilon},
                     {"batch", s.batch},
                     {"window", s.window},
                     {"train_fraction", s.trainFraction},
                     {"lambda_s", s.lambda.spatial},
                     {"lambda_t", s.lambda.temporal},
                     {"seed", s.seed}};
}

inline void from_json(const nlohmann::json& j, TrainSpec& s) {
  static const std::vector<std::string> known{"steps",  "learning_rate", "optimizer", "beta1",
                                              "beta2",  "epsilon",       "batch",     "window",
                                              "train_fraction", "lambda_s", "lambda_t", "seed"};
  for (const auto& [key, _] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw ConfigError("unknown train spec field '" + key + "'");
    }
  }
  s.steps = j.value("steps", s.steps);
  s.learningRate = j.value("learning_rate", s.learningRate);
  if (j.contains("optimizer")) s.optimizer = optimizer_from_string(j.at("optimizer").get<std::string>());
  s.beta1 = j.value("beta1", s.beta1);
  s.beta2 = j.value("beta2", s.beta2);
  s.epsilon = j.value("epsilon", s.epsilon);
  s.batch = j.value("batch", s.batch);
  s.window = j.value("window", s.window);
  s.trainFraction = j.value("train_fraction", s.trainFraction);
  s.lambda.spatial = j.value("lambda_s", s.lambda.spatial);
  s.lambda.temporal = j.value("lambda_t", s.lambda.temporal);
  s.seed = j.value("seed", s.seed);
}

}  // namespace faconv
