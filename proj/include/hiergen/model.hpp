#pragma once

#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "hiergen/config.hpp"
#include "hiergen/data.hpp"
#include "hiergen/tensor.hpp"

namespace hiergen {

// Named trainable tensors, ordered by creation. Names are unique and every
// tensor participates in grads, checkpoints and the optimizer.
class ModelParams {
 public:
  Tensor create_xavier(const std::string& name, Shape shape, Rng& rng);
  Tensor create_uniform(const std::string& name, Shape shape, double lo, double hi, Rng& rng);
  Tensor create_zeros(const std::string& name, Shape shape);
  Tensor create_ones(const std::string& name, Shape shape);

  Tensor& get(const std::string& name);
  const Tensor& get(const std::string& name) const;
  bool has(const std::string& name) const { return index_.count(name) > 0; }

  const std::vector<std::pair<std::string, Tensor>>& items() const { return items_; }
  long long total_parameters() const;
  void zero_grads();

 private:
  Tensor add(const std::string& name, Tensor t);
  std::vector<std::pair<std::string, Tensor>> items_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Attention read-out of one decode step (hierarchical architectures only).
struct AttentionSnapshot {
  std::vector<double> sentence_weights;
  std::vector<std::vector<double>> word_weights;  // per sentence
};

// Stepwise scorer over one instance; prefix always begins with BOS.
class DecodeSession {
 public:
  virtual ~DecodeSession() = default;
  virtual std::vector<double> next_logprobs(const std::vector<int>& prefix) = 0;
  virtual std::optional<AttentionSnapshot> last_attention() const { return std::nullopt; }
};

class Model {
 public:
  virtual ~Model() = default;

  const Config& config() const { return config_; }
  ModelParams& params() { return params_; }
  const ModelParams& params() const { return params_; }

  // mean token-level negative log-likelihood under teacher forcing
  virtual Tensor forward_loss(const std::vector<QGInstance>& batch) = 0;
  virtual std::unique_ptr<DecodeSession> begin_decode(const QGInstance& instance) = 0;
  virtual bool has_hierarchical_attention() const = 0;

 protected:
  explicit Model(Config config) : config_(std::move(config)) {}
  Config config_;
  ModelParams params_;
};

// Builds one of the four architectures; pretrained embeddings, when given,
// overwrite the word-embedding table (shape-checked).
std::unique_ptr<Model> build_model(const Config& config,
                                   const EmbeddingTable* pretrained = nullptr);

}  // namespace hiergen
