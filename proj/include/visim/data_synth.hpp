#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "visim/rng.hpp"

namespace visim {

struct SynthConfig {
  int num_classes = 10;
  int input_dim = 64;
  int samples_per_class = 100;
  double ambiguity_fraction = 0.1;
  double ambiguity_mix = 0.6;  // weight of the dominant prototype, > 0.5
  double noise_scale = 0.1;
  std::uint64_t seed = 7;

  void validate() const;
};

void to_json(nlohmann::json& j, const SynthConfig& c);
void from_json(const nlohmann::json& j, SynthConfig& c);

struct Sample {
  std::vector<double> features;
  int label = 0;
  bool ambiguous = false;
  int mix_partner = -1;  // class id of the second prototype, -1 if clean
};

enum class AugKind : int {
  kNoise = 0,           // blur analog: additive Gaussian
  kScaleJitter = 1,     // color-jitter analog: per-block scaling
  kCoordinateFlip = 2,  // flip analog: fixed involution on a coord fraction
  kChannelDrop = 3,     // grayscale analog: zero one fixed block
  kMask = 4,            // random-crop analog: zero a contiguous window
};

inline constexpr int kNumAugKinds = 5;
const char* aug_kind_name(AugKind kind);

struct AugmentationSpec {
  AugKind kind = AugKind::kNoise;
  double severity = 0.0;  // in [0, 1]; 0 is the identity for every kind
};

struct ViewSet {
  std::vector<std::vector<double>> views;
  std::vector<AugmentationSpec> specs;
};

struct ViewPolicy {
  int num_standard = 2;
  double standard_severity_max = 0.5;
  double heavy_mask_min = 0.6;
  double heavy_mask_max = 0.95;
};

struct Dataset {
  SynthConfig config;
  std::vector<std::vector<double>> prototypes;
  std::vector<Sample> train, val, test;

  enum class Split { kTrain, kVal, kTest };
  const std::vector<Sample>& split(Split s) const;
  static const char* split_name(Split s);
};

/// K well-separated unit prototypes (pairwise cosine < 0.5, rejection
/// sampled); clean samples are prototype + N(0, sigma^2 I); ambiguous
/// samples mix two prototypes at lambda : (1 - lambda) and keep the dominant
/// label. Deterministic 70/10/20 split, stratified per class.
Dataset generate_dataset(const SynthConfig& config);

std::vector<double> augment(const Sample& sample, const AugmentationSpec& spec,
                            SeededRng& rng);

/// Default policy: num_standard views with a random kind and severity
/// ~ U(0, standard max), the remaining M - num_standard views heavy-masked
/// with severity ~ U(heavy min, heavy max).
ViewSet make_viewset(const Sample& sample, int num_views, const ViewPolicy& policy,
                     SeededRng& rng);

/// One binary file per split (JSON header + row-major float64 features +
/// label/flag arrays) plus a joint human-readable CSV.
void save_dataset(const Dataset& dataset, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace visim
