#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "visim/data_synth.hpp"
#include "visim/model.hpp"

namespace visim {

struct ProbeConfig {
  int epochs = 200;
  double lr = 0.1;
  int batch_size = 256;
  std::uint64_t seed = 123;

  void validate() const;
};

void to_json(nlohmann::json& j, const ProbeConfig& c);
void from_json(const nlohmann::json& j, ProbeConfig& c);

struct ProbeResult {
  double top1 = 0.0;
  std::optional<double> top5;  // reported only when num_classes >= 10
  int best_epoch = 0;
  double best_val_top1 = 0.0;
  std::vector<std::uint8_t> test_correct;
  std::vector<int> test_predicted;

  nlohmann::json to_json() const;
};

/// Multinomial logistic regression on fixed feature rows; the model with
/// the best validation top-1 over the run is evaluated on the test rows.
ProbeResult linear_probe_features(const std::vector<std::vector<double>>& train_x,
                                  const std::vector<int>& train_y,
                                  const std::vector<std::vector<double>>& val_x,
                                  const std::vector<int>& val_y,
                                  const std::vector<std::vector<double>>& test_x,
                                  const std::vector<int>& test_y, int num_classes,
                                  const ProbeConfig& config);

/// Linear evaluation protocol: frozen eval-mode encoder features of
/// un-augmented samples, then linear_probe_features.
ProbeResult linear_probe(Model& model, const Dataset& dataset,
                         const ProbeConfig& config);

struct GroupStats {
  int n = 0;
  double mean = 0.0;
  double stddev = 0.0;
  double q1 = 0.0, median = 0.0, q3 = 0.0;
  int outliers = 0;  // beyond 1.5 IQR whiskers
};

GroupStats summarize_group(std::vector<double> values);
void to_json(nlohmann::json& j, const GroupStats& g);

struct WelchResult {
  double t = 0.0;
  double dof = 0.0;
  double p = 1.0;
};

/// Welch's two-sided unequal-variance t-test.
WelchResult welch_t_test(std::span<const double> a, std::span<const double> b);

struct KappaReport {
  // per sample of the chosen split, in split order
  std::vector<double> per_sample_kappa;  // mean over the generated views
  std::vector<int> labels;
  std::vector<std::uint8_t> ambiguous;
  // per augmentation kind: one kappa per sample (severity swept uniformly)
  std::array<std::vector<double>, kNumAugKinds> kind_kappa;

  GroupStats overall;
  std::map<int, GroupStats> per_class;
  GroupStats clean_stats, ambiguous_stats;
  std::optional<WelchResult> clean_vs_ambiguous;

  nlohmann::json summary_json() const;
};

/// Generates views_per_sample views per sample (training view policy),
/// estimates kappa for each view with the frozen model, averages per
/// sample, and groups by class, by ambiguity flag, and by augmentation
/// kind. Rejects checkpoints that were not trained with the vi loss when
/// loss_kind metadata is present.
KappaReport kappa_statistics(Model& model, const Dataset& dataset,
                             Dataset::Split split, int views_per_sample,
                             std::uint64_t seed,
                             const std::string& checkpoint_loss_kind = "vi-simsiam");

struct CorrectnessReport {
  bool applicable = false;
  GroupStats correct, incorrect;
  std::optional<WelchResult> welch;

  nlohmann::json to_json() const;
};

/// Splits per-sample kappa by probe correctness on the same split.
CorrectnessReport correctness_kappa_analysis(std::span<const std::uint8_t> correct,
                                             std::span<const double> kappa);

struct LossSurfaceRow {
  double kappa;
  double s;
  double value;  // -[log C(kappa) + kappa log(1+s)]
};

std::vector<LossSurfaceRow> loss_surface_grid(int d, std::span<const double> kappas,
                                              std::span<const double> s_values);
void write_loss_surface_csv(const std::filesystem::path& path,
                            std::span<const LossSurfaceRow> rows);

struct Projection2D {
  std::vector<std::array<double, 2>> coords;        // n x 2
  std::array<std::vector<double>, 2> components;    // orthonormal directions
  std::array<double, 2> variances;                  // eigenvalues
  double total_variance = 0.0;
};

/// Top-2 principal components via deflated power iteration on the centered
/// covariance; deterministic for a tie-free spectrum.
Projection2D project_2d(const std::vector<std::vector<double>>& features);

}  // namespace visim
