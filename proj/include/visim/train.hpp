#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "visim/data_synth.hpp"
#include "visim/model.hpp"

namespace visim {

enum class LossKind { kSimSiam, kVmfConstKappa, kViSimSiam };

const char* loss_kind_name(LossKind kind);
LossKind loss_kind_from_string(const std::string& name);

struct TrainConfig {
  LossKind loss_kind = LossKind::kViSimSiam;
  int epochs = 100;
  int batch_size = 64;
  double base_lr = 1e-3;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  int views = 8;  // M: 2 standard + (M-2) heavy-mask
  double const_kappa = 1.0;  // constant-kappa loss weight
  double kappa_min = 1e-6;
  double kappa_max = 1e5;
  std::uint64_t seed = 1;
  int checkpoint_every = 10;
  // ablation switches
  bool detach_targets = true;
  bool use_predictor = true;
  bool all_pairs = false;
  bool include_same_view = false;

  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

struct EpochMetrics {
  int epoch = 0;
  int steps = 0;
  double loss = 0.0;
  double sim_term = 0.0;
  double norm_term = 0.0;
  double kappa_mean = 0.0;
  double kappa_std = 0.0;
  double kappa_min = 0.0;
  double kappa_max = 0.0;
  std::vector<double> feature_std;  // per latent dimension, collapse monitor
  double wall_seconds = 0.0;        // serialized separately (timings.csv)
};

struct Metrics {
  std::vector<EpochMetrics> epochs;

  /// Deterministic fields only; wall time goes to timings.csv.
  void write_csv(const std::filesystem::path& path) const;
  void write_json(const std::filesystem::path& path) const;
  void write_timings_csv(const std::filesystem::path& path) const;
};

/// base_lr * 0.5 * (1 + cos(pi * step / total_steps)).
double cosine_lr(std::int64_t step, std::int64_t total_steps, double base_lr);

/// The per-epoch logged statistics (kappa over two standard views per train
/// sample, per-dimension latent std of the raw features) as a pure function
/// of (model, dataset, seed, epoch); recomputing from a checkpoint saved at
/// that epoch reproduces the logged values bit for bit.
void compute_epoch_statistics(Model& model, const Dataset& dataset,
                              std::uint64_t seed, int epoch, EpochMetrics& out);

/// v <- momentum v + (grad + wd * param); param <- param - lr v.
/// Parameters listed in no_decay are exempt from weight decay.
class SgdMomentum {
 public:
  SgdMomentum(double momentum, double weight_decay, std::set<std::string> no_decay = {});

  void step(std::map<std::string, ad::Tensor>& params,
            const std::map<std::string, const std::vector<double>*>& grads, double lr);

 private:
  double momentum_;
  double weight_decay_;
  std::set<std::string> no_decay_;
  std::map<std::string, std::vector<double>> velocity_;
};

struct TrainResult {
  Metrics metrics;
  Model final_model;
  Model best_model;
  int best_epoch = 0;
  std::filesystem::path final_checkpoint;
  std::filesystem::path best_checkpoint;
};

/// Full pretraining run: minibatch iteration with per-sample view
/// generation, forward through encoder and predictor, the selected loss,
/// backward, SGD-momentum with cosine decay. Metrics are rewritten after
/// every epoch; checkpoints every checkpoint_every epochs plus best/final.
/// Bit-reproducible from (configs, seed).
TrainResult train_run(const TrainConfig& config, const EncoderConfig& encoder_config,
                      const Dataset& dataset, const std::filesystem::path& out_dir);

}  // namespace visim
