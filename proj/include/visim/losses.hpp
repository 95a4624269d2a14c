#pragma once

#include <vector>

#include "visim/autodiff.hpp"

namespace visim {

/// Per-view embeddings of one minibatch: projector outputs z_i and, for
/// views that act as predictors, the predictor's (mu_i, kappa_i). Views
/// without predictor outputs participate as targets only.
struct ViewEmbeddings {
  std::vector<ad::Tensor> z;      // each [n x d], rows unit-norm
  std::vector<ad::Tensor> mu;     // [n x d] for predictor views, else empty
  std::vector<ad::Tensor> kappa;  // [n x 1] for predictor views, else empty

  int num_views() const { return static_cast<int>(z.size()); }
  bool has_predictor(int view) const { return mu[view].numel() > 0; }

  void validate() const;
};

struct PairPolicy {
  /// Include i = j comparisons (ablation; excluded by default).
  bool include_same_view = false;
  /// Stop-gradient on targets (ablation switch; on by default).
  bool detach_targets = true;
};

struct PairTerm {
  int predictor_view;
  int target_view;
  double value;  // additive contribution to the total
};

struct LossOutput {
  ad::Tensor total;  // scalar, on the caller's tape
  double total_value = 0.0;
  std::vector<PairTerm> pair_terms;
  std::vector<double> per_view_mean_kappa;  // NaN for target-only views
  double log_normalizer_term = 0.0;         // additive contribution (vi loss)
};

/// -mean[ mu_1^T sg(z_2) + mu_2^T sg(z_1) ]; requires exactly two views.
LossOutput simsiam_loss(ad::Tape& tape, const ViewEmbeddings& e,
                        const PairPolicy& policy = {});

/// -kappa * mean sum_{i != j} mu_i^T sg(z_j); with M = 2 and kappa = 1 this
/// reproduces simsiam_loss bit for bit (shared code path).
LossOutput vmf_constant_kappa_loss(ad::Tape& tape, const ViewEmbeddings& e,
                                   double kappa, const PairPolicy& policy = {});

/// -mean sum_{i != j} [ log C(kappa_i) + kappa_i log(1 + mu_i^T sg(z_j)) ],
/// the negative PS log-likelihood of the detached cross-view latents.
/// log C is the closed-form normalizer, differentiable in kappa.
LossOutput vi_simsiam_loss(ad::Tape& tape, const ViewEmbeddings& e,
                           const PairPolicy& policy = {});

struct RoutingCheckReport {
  double max_target_grad_abs = 0.0;      // must be exactly 0
  double min_predictor_grad_abs = 0.0;   // must be > 0
  double kappa_grad_vs_analytic = 0.0;   // max relative error
  double kappa_grad_vs_fd = 0.0;         // max relative error
  bool passed = false;
};

/// Builds a small two-view problem and verifies gradient routing: zero
/// gradient into detached targets, live gradient into predictor inputs, and
/// the kappa gradient against both the closed form and finite differences.
RoutingCheckReport loss_gradient_routing_check();

}  // namespace visim
