#include "visim/losses.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "visim/rng.hpp"
#include "visim/special.hpp"

namespace visim {

namespace {

constexpr double kAntipodalEps = 1e-12;

void check_finite(const ad::Tensor& t, int view, const char* what) {
  for (double v : t.data()) {
    if (!std::isfinite(v)) {
      throw std::runtime_error(std::string("loss: non-finite ") + what +
                               " in view " + std::to_string(view));
    }
  }
}

std::vector<std::pair<int, int>> enumerate_pairs(const ViewEmbeddings& e,
                                                 const PairPolicy& policy) {
  std::vector<std::pair<int, int>> pairs;
  for (int i = 0; i < e.num_views(); ++i) {
    if (!e.has_predictor(i)) continue;
    for (int j = 0; j < e.num_views(); ++j) {
      if (i == j && !policy.include_same_view) continue;
      pairs.emplace_back(i, j);
    }
  }
  if (pairs.empty())
    throw std::invalid_argument("loss: no predictor/target pairs (no view has predictor outputs)");
  return pairs;
}

std::vector<double> mean_kappas(const ViewEmbeddings& e) {
  std::vector<double> means(e.num_views(), std::nan(""));
  for (int i = 0; i < e.num_views(); ++i) {
    if (e.kappa[i].numel() == 0) continue;
    double acc = 0.0;
    for (double v : e.kappa[i].data()) acc += v;
    means[i] = acc / e.kappa[i].numel();
  }
  return means;
}

ad::Tensor target_of(const ViewEmbeddings& e, int j, const PairPolicy& policy) {
  return policy.detach_targets ? e.z[j].detach() : e.z[j];
}

/// sum over pairs of mean-batch cosine mu_i^T z_j, plus the raw pair means.
struct CosineSum {
  ad::Tensor total;
  std::vector<std::pair<std::pair<int, int>, double>> raw_pair_means;
};

CosineSum cosine_pair_sum(ad::Tape& tape, const ViewEmbeddings& e,
                          const PairPolicy& policy) {
  CosineSum out;
  bool first = true;
  for (const auto& [i, j] : enumerate_pairs(e, policy)) {
    ad::Tensor s = tape.row_sum(tape.mul(e.mu[i], target_of(e, j, policy)));
    ad::Tensor m = tape.mean(s);
    out.raw_pair_means.push_back({{i, j}, m.value()});
    out.total = first ? m : tape.add(out.total, m);
    first = false;
  }
  return out;
}

ad::Tensor ps_log_normalizer_tensor(ad::Tape& tape, const ad::Tensor& kappa, int d) {
  const double b = 0.5 * (d - 1);
  ad::Tensor alpha = tape.add_scalar(kappa, b);
  ad::Tensor alpha_plus_beta = tape.add_scalar(kappa, 2.0 * b);
  ad::Tensor linear = tape.add_scalar(tape.scale(alpha_plus_beta, std::log(2.0)),
                                      b * std::log(M_PI));
  ad::Tensor gammas = tape.sub(tape.lgamma(alpha), tape.lgamma(alpha_plus_beta));
  return tape.scale(tape.add(linear, gammas), -1.0);
}

}  // namespace

void ViewEmbeddings::validate() const {
  if (num_views() < 2)
    throw std::invalid_argument("ViewEmbeddings: need at least two views");
  if (mu.size() != z.size() || kappa.size() != z.size())
    throw std::invalid_argument("ViewEmbeddings: per-view vectors must align");
  const std::int64_t n = z[0].rows(), d = z[0].cols();
  if (d < 2) throw std::invalid_argument("ViewEmbeddings: latent dim must be >= 2");
  for (int i = 0; i < num_views(); ++i) {
    if (z[i].rows() != n || z[i].cols() != d)
      throw std::invalid_argument("ViewEmbeddings: view " + std::to_string(i) +
                                  " latent shape mismatch");
    check_finite(z[i], i, "latent");
    if (mu[i].numel() > 0) {
      if (mu[i].rows() != n || mu[i].cols() != d)
        throw std::invalid_argument("ViewEmbeddings: view " + std::to_string(i) +
                                    " mu shape mismatch");
      if (kappa[i].rows() != n || kappa[i].cols() != 1)
        throw std::invalid_argument("ViewEmbeddings: view " + std::to_string(i) +
                                    " kappa must be [n x 1]");
      check_finite(mu[i], i, "mu");
      check_finite(kappa[i], i, "kappa");
    } else if (kappa[i].numel() > 0) {
      throw std::invalid_argument("ViewEmbeddings: view " + std::to_string(i) +
                                  " has kappa but no mu");
    }
  }
}

LossOutput simsiam_loss(ad::Tape& tape, const ViewEmbeddings& e,
                        const PairPolicy& policy) {
  e.validate();
  if (e.num_views() != 2)
    throw std::invalid_argument("simsiam_loss: defined for exactly two views; "
                                "use the constant-kappa loss for multiview");
  if (!e.has_predictor(0) || !e.has_predictor(1))
    throw std::invalid_argument("simsiam_loss: both views need predictor outputs");
  PairPolicy p = policy;
  p.include_same_view = false;

  CosineSum cs = cosine_pair_sum(tape, e, p);
  LossOutput out;
  out.total = tape.scale(cs.total, -1.0);
  out.total_value = out.total.value();
  for (const auto& [pair, raw] : cs.raw_pair_means)
    out.pair_terms.push_back({pair.first, pair.second, -raw});
  out.per_view_mean_kappa = mean_kappas(e);
  return out;
}

LossOutput vmf_constant_kappa_loss(ad::Tape& tape, const ViewEmbeddings& e,
                                   double kappa, const PairPolicy& policy) {
  if (!(kappa > 0.0))
    throw std::invalid_argument("vmf_constant_kappa_loss: kappa must be positive");
  e.validate();

  CosineSum cs = cosine_pair_sum(tape, e, policy);
  LossOutput out;
  out.total = tape.scale(cs.total, -kappa);
  out.total_value = out.total.value();
  for (const auto& [pair, raw] : cs.raw_pair_means)
    out.pair_terms.push_back({pair.first, pair.second, -kappa * raw});
  out.per_view_mean_kappa = mean_kappas(e);
  return out;
}

LossOutput vi_simsiam_loss(ad::Tape& tape, const ViewEmbeddings& e,
                           const PairPolicy& policy) {
  e.validate();
  const int d = static_cast<int>(e.z[0].cols());
  const auto pairs = enumerate_pairs(e, policy);
  for (const auto& [i, j] : pairs) {
    if (e.kappa[i].numel() == 0)
      throw std::invalid_argument("vi_simsiam_loss: predictor view " +
                                  std::to_string(i) + " is missing kappa");
  }

  LossOutput out;
  out.per_view_mean_kappa = mean_kappas(e);

  // Similarity part: sum over pairs of mean( kappa_i * log(1 + mu_i^T z_j) ).
  ad::Tensor sim_acc;
  bool first = true;
  for (const auto& [i, j] : pairs) {
    ad::Tensor s = tape.row_sum(tape.mul(e.mu[i], target_of(e, j, policy)));
    ad::Tensor lg = tape.log(tape.clamp_min(tape.add_scalar(s, 1.0), kAntipodalEps));
    ad::Tensor term = tape.mean(tape.mul(e.kappa[i], lg));
    out.pair_terms.push_back({i, j, -term.value()});
    sim_acc = first ? term : tape.add(sim_acc, term);
    first = false;
  }

  // Normalizer part: each predictor view contributes log C(kappa_i) once per
  // target it attends to.
  ad::Tensor norm_acc;
  bool norm_first = true;
  double norm_value = 0.0;
  for (int i = 0; i < e.num_views(); ++i) {
    if (!e.has_predictor(i)) continue;
    std::int64_t targets = 0;
    for (const auto& [pi, pj] : pairs) targets += (pi == i);
    if (targets == 0) continue;
    ad::Tensor mean_log_c =
        tape.mean(ps_log_normalizer_tensor(tape, e.kappa[i], d));
    ad::Tensor scaled = tape.scale(mean_log_c, static_cast<double>(targets));
    norm_value += -scaled.value();
    norm_acc = norm_first ? scaled : tape.add(norm_acc, scaled);
    norm_first = false;
  }
  out.log_normalizer_term = norm_value;

  out.total = tape.scale(tape.add(sim_acc, norm_acc), -1.0);
  out.total_value = out.total.value();
  return out;
}

RoutingCheckReport loss_gradient_routing_check() {
  constexpr int n = 3, d = 4;
  SeededRng rng(42);

  auto random_rows = [&](bool normalize) {
    std::vector<double> v(n * d);
    for (double& x : v) x = rng.normal();
    if (normalize) {
      for (int r = 0; r < n; ++r) {
        double sq = 0.0;
        for (int c = 0; c < d; ++c) sq += v[r * d + c] * v[r * d + c];
        const double inv = 1.0 / std::sqrt(sq);
        for (int c = 0; c < d; ++c) v[r * d + c] *= inv;
      }
    }
    return v;
  };

  const std::vector<double> z1_data = random_rows(true);
  const std::vector<double> z2_data = random_rows(true);
  const std::vector<double> mu1_data = random_rows(true);
  const std::vector<double> mu2_data = random_rows(true);
  std::vector<double> k1_data(n), k2_data(n);
  for (double& v : k1_data) v = rng.uniform(0.5, 20.0);
  for (double& v : k2_data) v = rng.uniform(0.5, 20.0);

  auto build = [&](ad::Tape& tape, const std::vector<double>& k1,
                   const std::vector<double>& k2, bool track) {
    ViewEmbeddings e;
    ad::Tensor z1({n, d}, z1_data), z2({n, d}, z2_data);
    ad::Tensor mu1({n, d}, mu1_data), mu2({n, d}, mu2_data);
    ad::Tensor kap1({n, 1}, k1), kap2({n, 1}, k2);
    if (track) {
      z1 = tape.leaf(z1);
      z2 = tape.leaf(z2);
      mu1 = tape.leaf(mu1);
      mu2 = tape.leaf(mu2);
      kap1 = tape.leaf(kap1);
      kap2 = tape.leaf(kap2);
    }
    e.z = {z1, z2};
    e.mu = {mu1, mu2};
    e.kappa = {kap1, kap2};
    return std::make_pair(e, vi_simsiam_loss(tape, e));
  };

  RoutingCheckReport report;

  ad::Tape tape;
  auto [e, loss] = build(tape, k1_data, k2_data, true);
  tape.backward(loss.total);

  // Targets are detached inside the loss; mu/kappa come from independent
  // leaves here, so any gradient reaching z would be a stop-gradient leak.
  for (const ad::Tensor& z : e.z) {
    for (double g : tape.grad(z))
      report.max_target_grad_abs = std::max(report.max_target_grad_abs, std::fabs(g));
  }
  report.min_predictor_grad_abs = INFINITY;
  for (const ad::Tensor& mu : e.mu) {
    double view_max = 0.0;
    for (double g : tape.grad(mu)) view_max = std::max(view_max, std::fabs(g));
    report.min_predictor_grad_abs = std::min(report.min_predictor_grad_abs, view_max);
  }

  // kappa gradient: -(1/n) sum_{j != i} [ d logC/dkappa + log(1 + mu_i^T z_j) ].
  const double beta = 0.5 * (d - 1);
  auto analytic_kappa_grad = [&](const std::vector<double>& mu_data,
                                 const std::vector<double>& kdata,
                                 const std::vector<double>& ztarget, int row) {
    const double kap = kdata[row];
    const double dlogc = -(std::log(2.0) + digamma(kap + beta) - digamma(kap + 2.0 * beta));
    double dot = 0.0;
    for (int c = 0; c < d; ++c) dot += mu_data[row * d + c] * ztarget[row * d + c];
    return -(dlogc + std::log(1.0 + dot)) / n;
  };
  const auto& g1 = tape.grad(e.kappa[0]);
  const auto& g2 = tape.grad(e.kappa[1]);
  for (int r = 0; r < n; ++r) {
    const double a1 = analytic_kappa_grad(mu1_data, k1_data, z2_data, r);
    const double a2 = analytic_kappa_grad(mu2_data, k2_data, z1_data, r);
    report.kappa_grad_vs_analytic =
        std::max(report.kappa_grad_vs_analytic,
                 std::max(std::fabs(g1[r] - a1) / std::max(std::fabs(a1), 1e-8),
                          std::fabs(g2[r] - a2) / std::max(std::fabs(a2), 1e-8)));
  }

  // finite differences on kappa_1
  const double h = 1e-5;
  for (int r = 0; r < n; ++r) {
    auto eval = [&](double delta) {
      std::vector<double> k = k1_data;
      k[r] += delta;
      ad::Tape scratch;
      return build(scratch, k, k2_data, false).second.total_value;
    };
    const double numeric = (eval(h) - eval(-h)) / (2.0 * h);
    const double rel = std::fabs(g1[r] - numeric) /
                       std::max({std::fabs(g1[r]), std::fabs(numeric), 1e-8});
    report.kappa_grad_vs_fd = std::max(report.kappa_grad_vs_fd, rel);
  }

  report.passed = report.max_target_grad_abs == 0.0 &&
                  report.min_predictor_grad_abs > 0.0 &&
                  report.kappa_grad_vs_analytic < 1e-8 &&
                  report.kappa_grad_vs_fd < 1e-4;
  return report;
}

}  // namespace visim
