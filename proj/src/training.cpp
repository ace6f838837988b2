#include "hiergen/training.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <stdexcept>

#include <json.hpp>

#include "hiergen/checkpoint.hpp"
#include "hiergen/decoding.hpp"
#include "hiergen/metrics.hpp"

namespace hiergen {

AdamState AdamState::init(const ModelParams& params, double lr, double beta1, double beta2,
                          double eps) {
  AdamState s;
  s.lr = lr;
  s.beta1 = beta1;
  s.beta2 = beta2;
  s.eps = eps;
  for (const auto& [name, t] : params.items()) {
    s.m.push_back(Tensor::zeros(t.shape()));
    s.v.push_back(Tensor::zeros(t.shape()));
  }
  return s;
}

void adam_step(ModelParams& params, AdamState& state) {
  if (state.m.size() != params.items().size()) {
    throw std::invalid_argument("adam_step: state does not match parameter count");
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.items().size(); ++i) {
    const std::string& name = params.items()[i].first;
    Tensor t = params.items()[i].second;  // handle copy, shared buffer
    const auto& g = t.grad();
    auto& m = state.m[i].data();
    auto& v = state.v[i].data();
    auto& x = t.data();
    for (std::size_t j = 0; j < x.size(); ++j) {
      if (std::isnan(g[j])) {
        throw std::runtime_error("adam_step: NaN gradient in parameter '" + name +
                                 "' at coordinate " + std::to_string(j));
      }
      m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g[j];
      v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g[j] * g[j];
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      x[j] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

double clip_global_norm(ModelParams& params, double max_norm) {
  double sq = 0.0;
  for (const auto& [name, t] : params.items()) {
    for (double g : t.grad()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double factor = max_norm / norm;
    for (const auto& [name, t] : params.items()) {
      Tensor handle = t;
      for (double& g : handle.grad()) g *= factor;
    }
  }
  return norm;
}

namespace {

double dev_bleu4(Model& model, const std::vector<QGInstance>& dev, const Vocab& vocab,
                 int max_len) {
  if (dev.empty()) return 0.0;
  std::vector<TokenSeq> hyps, refs;
  for (const auto& inst : dev) {
    hyps.push_back(vocab.decode(greedy_decode(model, inst, max_len)));
    refs.push_back(vocab.decode(inst.question));
  }
  return bleu(hyps, refs, 4);
}

}  // namespace

TrainRunRecord train(Model& model, const std::vector<QGInstance>& train_set,
                     const std::vector<QGInstance>& dev_set, const Vocab& vocab,
                     const Config& config, const std::string& out_dir, std::ostream* log) {
  if (train_set.empty()) throw std::invalid_argument("train: empty training set");
  std::filesystem::create_directories(out_dir);

  TrainRunRecord record;
  record.seed = config.seed;
  record.config_snapshot = config_to_string(config);
  record.best_checkpoint_path = out_dir + "/best.ckpt";

  AdamState adam = AdamState::init(model.params(), config.lr, config.adam_beta1,
                                   config.adam_beta2, config.adam_eps);
  double best_metric = -1.0;
  int stale_epochs = 0;
  long global_step = 0;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::vector<std::size_t> order(train_set.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng shuffle_rng(config.seed + static_cast<std::uint64_t>(epoch) + 1);
    shuffle_rng.shuffle(order);

    double epoch_loss_sum = 0.0;
    long batches = 0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(config.batch_size)) {
      std::vector<QGInstance> batch;
      for (std::size_t i = start;
           i < std::min(order.size(), start + static_cast<std::size_t>(config.batch_size)); ++i) {
        batch.push_back(train_set[order[i]]);
      }
      Graph::active().clear();
      model.params().zero_grads();
      Tensor loss = model.forward_loss(batch);
      const double loss_value = loss.item();
      if (!std::isfinite(loss_value)) {
        throw std::runtime_error("train: non-finite loss at step " + std::to_string(global_step));
      }
      loss.backward();
      const double grad_norm = clip_global_norm(model.params(), config.clip_norm);
      adam_step(model.params(), adam);
      Graph::active().clear();

      epoch_loss_sum += loss_value;
      ++batches;
      ++global_step;
      if (log) {
        nlohmann::ordered_json line;
        line["step"] = global_step;
        line["epoch"] = epoch;
        line["loss"] = loss_value;
        line["lr"] = config.lr;
        line["grad_norm"] = grad_norm;
        (*log) << line.dump() << "\n";
      }
    }
    record.epoch_losses.push_back(epoch_loss_sum / static_cast<double>(batches));

    const double metric = dev_bleu4(model, dev_set, vocab, config.max_decode_len);
    record.dev_metric_history.push_back(metric);
    record.epochs_run = epoch + 1;

    if (metric > best_metric || record.epoch_losses.size() == 1) {
      best_metric = std::max(metric, best_metric);
      stale_epochs = 0;
      save_checkpoint(model.params(), record.best_checkpoint_path);
    } else {
      ++stale_epochs;
      if (stale_epochs >= config.patience) {
        record.early_stopped = true;
        break;
      }
    }
  }
  return record;
}

std::string GradCheckReport::to_json() const {
  nlohmann::ordered_json j;
  j["passed"] = passed;
  j["tol"] = tol;
  j["max_rel_err"] = max_rel_err;
  j["worst_group"] = worst_group;
  nlohmann::ordered_json groups_json = nlohmann::ordered_json::array();
  for (const auto& g : groups) {
    groups_json.push_back({{"group", g.name},
                           {"checked", g.checked},
                           {"max_rel_err", g.max_rel_err},
                           {"worst_coord", g.worst_coord}});
  }
  j["groups"] = groups_json;
  return j.dump(2);
}

GradCheckReport gradcheck(Model& model, const QGInstance& instance, double eps, double tol,
                          int coords_per_group) {
  GradCheckReport report;
  report.tol = tol;

  Graph::active().clear();
  model.params().zero_grads();
  Tensor loss = model.forward_loss({instance});
  loss.backward();
  std::vector<std::vector<double>> analytic;
  for (const auto& [name, t] : model.params().items()) analytic.push_back(t.grad());
  Graph::active().clear();

  auto eval = [&] {
    NoGradGuard ng;
    return model.forward_loss({instance}).item();
  };

  Rng rng(model.config().seed ^ 0x9e3779b97f4a7c15ull);
  for (std::size_t pi = 0; pi < model.params().items().size(); ++pi) {
    const auto& [name, tensor] = model.params().items()[pi];
    Tensor t = tensor;
    GradCheckGroup group;
    group.name = name;

    const int numel = t.numel();
    std::vector<int> coords;
    if (numel <= coords_per_group) {
      for (int i = 0; i < numel; ++i) coords.push_back(i);
    } else {
      // sample distinct coordinates
      std::vector<int> all(static_cast<std::size_t>(numel));
      for (int i = 0; i < numel; ++i) all[static_cast<std::size_t>(i)] = i;
      rng.shuffle(all);
      coords.assign(all.begin(), all.begin() + coords_per_group);
    }

    for (int c : coords) {
      double& x = t.data()[static_cast<std::size_t>(c)];
      const double orig = x;
      x = orig + eps;
      const double fp = eval();
      x = orig - eps;
      const double fm = eval();
      x = orig;
      const double numeric = (fp - fm) / (2.0 * eps);
      const double a = analytic[pi][static_cast<std::size_t>(c)];
      const double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-6});
      const double err = std::fabs(a - numeric) / denom;
      ++group.checked;
      if (err > group.max_rel_err) {
        group.max_rel_err = err;
        group.worst_coord = c;
      }
    }
    if (group.max_rel_err > report.max_rel_err) {
      report.max_rel_err = group.max_rel_err;
      report.worst_group = group.name;
    }
    report.groups.push_back(std::move(group));
  }
  report.passed = report.max_rel_err < tol;
  return report;
}

}  // namespace hiergen
