#pragma once

// Full-batch training of theta = [network params | alpha | beta] with Adam on
// an L2 loss over dataset entries, plus evaluation and checkpoints.

#include <cstdint>
#include <functional>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "diffks/dataio.hpp"
#include "diffks/diffgrad.hpp"

namespace diffks {

inline constexpr int kCheckpointVersion = 1;

struct TrainConfig {
  int epochs = 50;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t seed = 0;  // network initialization
  std::string functional = "nnlda";
  std::vector<int> layers;  // empty: functional default
  std::string activation = "softplus";
  int grid_level = kDefaultGridLevel;

  void validate() const;
};

// YAML mapping with the field names above; unknown keys are rejected.
TrainConfig load_train_config(const std::string &path);
nlohmann::json config_json(const TrainConfig &c);
HybridXC initial_model(const TrainConfig &c);

struct AdamState {
  Vec m, v;
  long step = 0;
};

// One bias-corrected Adam update, in place.
void adam_step(Vec &theta, const Vec &grad, AdamState &s, const TrainConfig &c);

// weight * squared error (scalars) or squared Frobenius norm (matrices).
double entry_loss(const Entry &e, const Prediction &p);

struct LossGrad {
  double loss = 0.0;
  Vec grad;  // empty when not requested
  std::vector<Prediction> predictions;
};

// Sum over entries in dataset order. Failures abort with the entry named.
LossGrad loss_and_grad(const Dataset &ds, const HybridXC &h, Engine &engine, bool with_grad = true);
inline double dataset_loss(const Dataset &ds, const HybridXC &h, Engine &engine) {
  return loss_and_grad(ds, h, engine, false).loss;
}

struct HistoryRow {
  int epoch = 0;
  double loss = 0.0;  // at the parameters after this epoch's step
  double alpha = 0.0;
  double beta = 0.0;
  double theta_norm = 0.0;
};

std::string history_csv(const std::vector<HistoryRow> &rows);
void write_history_csv(const std::string &path, const std::vector<HistoryRow> &rows);

struct Checkpoint {
  HybridXC model;
  AdamState adam;
  int epoch = 0;
  TrainConfig config;
};

Checkpoint fresh_checkpoint(const TrainConfig &c);
nlohmann::json checkpoint_json(const Checkpoint &c);
void save_checkpoint(const std::string &path, const Checkpoint &c);
Checkpoint load_checkpoint(const std::string &path);
// Also checks the stored architecture against `expected`.
Checkpoint load_checkpoint(const std::string &path, const HybridXC &expected);

struct TrainResult {
  Checkpoint state;
  std::vector<HistoryRow> history;
  double initial_loss = 0.0;
};

// Runs from state.epoch up to state.config.epochs.
TrainResult train(const Dataset &ds, Checkpoint state, Engine &engine,
                  const std::function<void(const HistoryRow &)> &on_epoch = {});

struct EntryReport {
  std::size_t index = 0;
  EntryType type = EntryType::ae;
  std::string label;
  bool failed = false;
  std::string message;
  double prediction = 0.0;  // Hartree for energies, unused for dm
  double reference = 0.0;
  double error = 0.0;  // signed kcal/mol for energies, Frobenius norm for dm
};

struct EvalReport {
  std::vector<EntryReport> entries;
  std::map<std::string, double> mae;  // per entry type
  std::map<std::string, int> counts;
  int failed = 0;
  double energy_mae = 0.0;  // all ae + ip entries, kcal/mol
  int energy_count = 0;
};

double mean_abs(const std::vector<double> &v);
EvalReport evaluate(const Dataset &ds, const HybridXC &h, Engine &engine);

}  // namespace diffks
