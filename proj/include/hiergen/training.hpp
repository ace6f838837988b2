#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "hiergen/config.hpp"
#include "hiergen/data.hpp"
#include "hiergen/model.hpp"

namespace hiergen {

// Adaptive-moment optimizer state; one moment pair per parameter, aligned
// with the registry order.
struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  long step = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamState init(const ModelParams& params, double lr, double beta1 = 0.9,
                        double beta2 = 0.999, double eps = 1e-8);
};

// bias-corrected moment update; aborts on NaN gradient naming the parameter
void adam_step(ModelParams& params, AdamState& state);

// scales all grads by max_norm/norm when the global L2 norm exceeds max_norm;
// returns the pre-clip norm
double clip_global_norm(ModelParams& params, double max_norm);

struct TrainRunRecord {
  std::vector<double> epoch_losses;
  std::vector<double> dev_metric_history;  // dev BLEU-4 per epoch
  std::string best_checkpoint_path;
  std::string config_snapshot;
  std::uint64_t seed = 0;
  int epochs_run = 0;
  bool early_stopped = false;
};

// Epochs of shuffled minibatches with dev BLEU-4 evaluation per epoch, best
// checkpoint kept, early stop after `patience` epochs without improvement.
// Training progress goes to `log` as JSON lines (step, loss, lr, grad_norm).
TrainRunRecord train(Model& model, const std::vector<QGInstance>& train_set,
                     const std::vector<QGInstance>& dev_set, const Vocab& vocab,
                     const Config& config, const std::string& out_dir, std::ostream* log);

struct GradCheckGroup {
  std::string name;
  int checked = 0;
  double max_rel_err = 0.0;
  int worst_coord = -1;
};

struct GradCheckReport {
  std::vector<GradCheckGroup> groups;
  double max_rel_err = 0.0;
  std::string worst_group;
  double tol = 1e-3;
  bool passed = false;

  std::string to_json() const;
};

// Central finite differences on a random subsample of coordinates spanning
// every parameter group vs the recorded gradients of a one-instance loss.
GradCheckReport gradcheck(Model& model, const QGInstance& instance, double eps = 1e-5,
                          double tol = 1e-3, int coords_per_group = 200);

}  // namespace hiergen
