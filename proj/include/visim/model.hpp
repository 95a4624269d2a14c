#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "visim/autodiff.hpp"

namespace visim {

struct EncoderConfig {
  int input_dim = 64;
  std::vector<int> hidden_dims = {256, 256};
  int latent_dim = 16;
  bool use_batch_standardize = true;
  int predictor_hidden = 64;
  double kappa_min = 1e-6;
  double kappa_max = 1e5;
  double kappa_init = 10.0;

  void validate() const;
};

void to_json(nlohmann::json& j, const EncoderConfig& c);
void from_json(const nlohmann::json& j, EncoderConfig& c);

struct PredictorOutput {
  ad::Tensor mu;     // [n x d], rows on the sphere
  ad::Tensor kappa;  // [n x 1], in (kappa_min, kappa_max]
};

/// MLP encoder (projector role) and predictor head. The predictor emits
/// d + 1 values per row: the first d normalize into the mean direction, the
/// last passes through softplus (bias-initialized so fresh models start
/// near kappa_init) and is clamped into the supported range.
class Model {
 public:
  /// Empty shell; real instances come from init() or load_checkpoint().
  Model() = default;

  static Model init(const EncoderConfig& config, std::uint64_t seed);

  /// Per-tape parameter binding. track registers every parameter as a
  /// tracked leaf; without it the same forward runs without recording.
  struct Pass {
    ad::Tape* tape = nullptr;
    bool training = false;
    bool track = false;
    std::map<std::string, ad::Tensor> bound;
  };
  Pass begin_pass(ad::Tape& tape, bool training, bool track);

  /// [n x input_dim] -> row-normalized [n x latent_dim].
  ad::Tensor encode(Pass& pass, const ad::Tensor& batch);
  PredictorOutput predict(Pass& pass, const ad::Tensor& latent);

  const EncoderConfig& config() const { return config_; }
  std::uint64_t init_seed() const { return init_seed_; }

  std::map<std::string, ad::Tensor>& params() { return params_; }
  const std::map<std::string, ad::Tensor>& params() const { return params_; }
  std::map<std::string, std::vector<double>>& buffers() { return buffers_; }

  /// Deep copy (checkpointing snapshots, best-model tracking).
  Model clone() const;

  /// Self-describing container: magic + JSON header (config, seed, shapes,
  /// caller extras) + named little-endian float64 arrays. Round-trips
  /// bit-exactly.
  void save_checkpoint(const std::filesystem::path& path,
                       const nlohmann::json& extra = {}) const;
  static Model load_checkpoint(const std::filesystem::path& path,
                               nlohmann::json* header_out = nullptr);

 private:
  EncoderConfig config_;
  std::uint64_t init_seed_ = 0;
  std::map<std::string, ad::Tensor> params_;
  std::map<std::string, std::vector<double>> buffers_;
};

inline constexpr char kCheckpointFormatTag[] = "visim-ckpt-v1";

}  // namespace visim
