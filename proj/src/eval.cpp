#include "visim/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "visim/distributions.hpp"
#include "visim/kernels.hpp"
#include "visim/special.hpp"

namespace visim {

namespace {

std::vector<std::vector<double>> encode_rows(Model& model,
                                             const std::vector<Sample>& samples) {
  const int dim = model.config().input_dim;
  const int d = model.config().latent_dim;
  const int batch = 512;
  std::vector<std::vector<double>> out;
  out.reserve(samples.size());
  for (std::size_t start = 0; start < samples.size(); start += batch) {
    const std::size_t stop = std::min(samples.size(), start + batch);
    const std::int64_t rows = static_cast<std::int64_t>(stop - start);
    std::vector<double> x(rows * dim);
    for (std::int64_t i = 0; i < rows; ++i)
      std::copy(samples[start + i].features.begin(), samples[start + i].features.end(),
                x.begin() + i * dim);
    ad::Tape tape;
    Model::Pass pass = model.begin_pass(tape, /*training=*/false, /*track=*/false);
    ad::Tensor z = model.encode(pass, ad::Tensor({rows, dim}, std::move(x)));
    for (std::int64_t i = 0; i < rows; ++i) {
      std::vector<double> row(d);
      for (int c = 0; c < d; ++c) row[c] = z.at(i, c);
      out.push_back(std::move(row));
    }
  }
  return out;
}

std::vector<int> labels_of(const std::vector<Sample>& samples) {
  std::vector<int> y;
  y.reserve(samples.size());
  for (const Sample& s : samples) y.push_back(s.label);
  return y;
}

// kappa for a flat stack of augmented feature rows
std::vector<double> predict_kappa_rows(Model& model, const std::vector<double>& rows_flat,
                                       std::int64_t rows) {
  const int dim = model.config().input_dim;
  std::vector<double> kappas(rows);
  const std::int64_t batch = 512;
  for (std::int64_t start = 0; start < rows; start += batch) {
    const std::int64_t stop = std::min(rows, start + batch);
    std::vector<double> x(rows_flat.begin() + start * dim,
                          rows_flat.begin() + stop * dim);
    ad::Tape tape;
    Model::Pass pass = model.begin_pass(tape, /*training=*/false, /*track=*/false);
    ad::Tensor z = model.encode(pass, ad::Tensor({stop - start, dim}, std::move(x)));
    PredictorOutput pred = model.predict(pass, z);
    for (std::int64_t i = 0; i < stop - start; ++i) kappas[start + i] = pred.kappa.at(i, 0);
  }
  return kappas;
}

double quantile_sorted(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) return 0.0;
  const double pos = q * (sorted.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(sorted.size() - 1, lo + 1);
  const double frac = pos - lo;
  return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

}  // namespace

void ProbeConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("ProbeConfig: epochs must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("ProbeConfig: batch_size must be >= 1");
  if (!(lr > 0.0)) throw std::invalid_argument("ProbeConfig: lr must be positive");
}

void to_json(nlohmann::json& j, const ProbeConfig& c) {
  j = nlohmann::json{{"epochs", c.epochs},
                     {"lr", c.lr},
                     {"batch_size", c.batch_size},
                     {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, ProbeConfig& c) {
  c = ProbeConfig{};
  if (j.contains("epochs")) j.at("epochs").get_to(c.epochs);
  if (j.contains("lr")) j.at("lr").get_to(c.lr);
  if (j.contains("batch_size")) j.at("batch_size").get_to(c.batch_size);
  if (j.contains("seed")) j.at("seed").get_to(c.seed);
}

nlohmann::json ProbeResult::to_json() const {
  nlohmann::json j;
  j["top1"] = top1;
  if (top5) j["top5"] = *top5;
  j["best_epoch"] = best_epoch;
  j["best_val_top1"] = best_val_top1;
  j["test_correct"] = test_correct;
  j["test_predicted"] = test_predicted;
  return j;
}

ProbeResult linear_probe_features(const std::vector<std::vector<double>>& train_x,
                                  const std::vector<int>& train_y,
                                  const std::vector<std::vector<double>>& val_x,
                                  const std::vector<int>& val_y,
                                  const std::vector<std::vector<double>>& test_x,
                                  const std::vector<int>& test_y, int num_classes,
                                  const ProbeConfig& config) {
  config.validate();
  if (train_x.empty() || train_x.size() != train_y.size())
    throw std::invalid_argument("linear_probe: bad train rows");
  for (int y : train_y)
    if (y < 0 || y >= num_classes)
      throw std::invalid_argument("linear_probe: label outside [0, num_classes)");
  const int d = static_cast<int>(train_x[0].size());
  const int n = static_cast<int>(train_x.size());
  const int k = num_classes;
  const int batch = std::min(config.batch_size, n);

  std::vector<double> w(static_cast<std::size_t>(d) * k, 0.0);
  std::vector<double> b(k, 0.0);

  auto predict_scores = [&](const std::vector<double>& x, std::vector<double>& scores) {
    for (int c = 0; c < k; ++c) scores[c] = b[c];
    for (int j = 0; j < d; ++j) {
      const double xj = x[j];
      if (xj == 0.0) continue;
      const double* wj = w.data() + static_cast<std::size_t>(j) * k;
      for (int c = 0; c < k; ++c) scores[c] += xj * wj[c];
    }
  };

  auto top1_accuracy = [&](const std::vector<std::vector<double>>& xs,
                           const std::vector<int>& ys) {
    if (xs.empty()) return 0.0;
    std::vector<double> scores(k);
    int hits = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      predict_scores(xs[i], scores);
      const int arg = static_cast<int>(std::max_element(scores.begin(), scores.end()) -
                                       scores.begin());
      hits += (arg == ys[i]);
    }
    return static_cast<double>(hits) / xs.size();
  };

  SeededRng rng(config.seed);
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);

  ProbeResult result;
  std::vector<double> best_w = w, best_b = b;
  double best_val = -1.0;
  int best_epoch = 0;

  std::vector<double> scores(k), probs(k);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    SeededRng erng = rng.split(epoch);
    for (std::size_t i = order.size(); i > 1; --i) {
      const std::size_t j = erng.uniform_index(i);
      std::swap(order[i - 1], order[j]);
    }
    for (int start = 0; start < n; start += batch) {
      const int stop = std::min(n, start + batch);
      std::vector<double> gw(w.size(), 0.0), gb(k, 0.0);
      for (int i = start; i < stop; ++i) {
        const auto& x = train_x[order[i]];
        const int y = train_y[order[i]];
        predict_scores(x, scores);
        const double mx = *std::max_element(scores.begin(), scores.end());
        double z = 0.0;
        for (int c = 0; c < k; ++c) {
          probs[c] = std::exp(scores[c] - mx);
          z += probs[c];
        }
        for (int c = 0; c < k; ++c) probs[c] /= z;
        probs[y] -= 1.0;
        for (int j = 0; j < d; ++j) {
          const double xj = x[j];
          if (xj == 0.0) continue;
          double* gwj = gw.data() + static_cast<std::size_t>(j) * k;
          for (int c = 0; c < k; ++c) gwj[c] += xj * probs[c];
        }
        for (int c = 0; c < k; ++c) gb[c] += probs[c];
      }
      const double scale = config.lr / (stop - start);
      for (std::size_t i = 0; i < w.size(); ++i) w[i] -= scale * gw[i];
      for (int c = 0; c < k; ++c) b[c] -= scale * gb[c];
    }
    const double val_acc = top1_accuracy(val_x, val_y);
    if (val_acc > best_val) {
      best_val = val_acc;
      best_w = w;
      best_b = b;
      best_epoch = epoch;
    }
  }

  w = best_w;
  b = best_b;
  result.best_epoch = best_epoch;
  result.best_val_top1 = best_val;

  // test metrics with the selected model
  int hits1 = 0, hits5 = 0;
  result.test_correct.resize(test_x.size());
  result.test_predicted.resize(test_x.size());
  std::vector<int> rank(k);
  for (std::size_t i = 0; i < test_x.size(); ++i) {
    predict_scores(test_x[i], scores);
    const int arg = static_cast<int>(std::max_element(scores.begin(), scores.end()) -
                                     scores.begin());
    result.test_predicted[i] = arg;
    const bool correct = arg == test_y[i];
    result.test_correct[i] = correct ? 1 : 0;
    hits1 += correct;
    if (k >= 10) {
      std::iota(rank.begin(), rank.end(), 0);
      std::partial_sort(rank.begin(), rank.begin() + 5, rank.end(),
                        [&](int a2, int b2) { return scores[a2] > scores[b2]; });
      for (int r = 0; r < 5; ++r) hits5 += (rank[r] == test_y[i]);
    }
  }
  result.top1 = test_x.empty() ? 0.0 : static_cast<double>(hits1) / test_x.size();
  if (k >= 10 && !test_x.empty())
    result.top5 = static_cast<double>(hits5) / test_x.size();
  return result;
}

ProbeResult linear_probe(Model& model, const Dataset& dataset,
                         const ProbeConfig& config) {
  const int k = dataset.config.num_classes;
  for (const Sample& s : dataset.train)
    if (s.label >= k)
      throw std::invalid_argument("linear_probe: dataset labels exceed num_classes");
  return linear_probe_features(encode_rows(model, dataset.train), labels_of(dataset.train),
                               encode_rows(model, dataset.val), labels_of(dataset.val),
                               encode_rows(model, dataset.test), labels_of(dataset.test),
                               k, config);
}

GroupStats summarize_group(std::vector<double> values) {
  GroupStats g;
  g.n = static_cast<int>(values.size());
  if (values.empty()) return g;
  double sum = 0.0, sumsq = 0.0;
  for (double v : values) {
    sum += v;
    sumsq += v * v;
  }
  g.mean = sum / g.n;
  g.stddev = g.n > 1 ? std::sqrt(std::fmax(0.0, (sumsq - g.n * g.mean * g.mean) / (g.n - 1)))
                     : 0.0;
  std::sort(values.begin(), values.end());
  g.q1 = quantile_sorted(values, 0.25);
  g.median = quantile_sorted(values, 0.5);
  g.q3 = quantile_sorted(values, 0.75);
  const double iqr = g.q3 - g.q1;
  for (double v : values)
    if (v < g.q1 - 1.5 * iqr || v > g.q3 + 1.5 * iqr) ++g.outliers;
  return g;
}

void to_json(nlohmann::json& j, const GroupStats& g) {
  j = nlohmann::json{{"n", g.n},         {"mean", g.mean},     {"stddev", g.stddev},
                     {"q1", g.q1},       {"median", g.median}, {"q3", g.q3},
                     {"outliers", g.outliers}};
}

WelchResult welch_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2)
    throw std::invalid_argument("welch_t_test: both groups need at least 2 values");
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  double ma = 0.0, mb = 0.0;
  for (double v : a) ma += v;
  for (double v : b) mb += v;
  ma /= na;
  mb /= nb;
  double va = 0.0, vb = 0.0;
  for (double v : a) va += (v - ma) * (v - ma);
  for (double v : b) vb += (v - mb) * (v - mb);
  va /= (na - 1.0);
  vb /= (nb - 1.0);

  if (va == 0.0 && vb == 0.0) {
    if (ma == mb) return {0.0, na + nb - 2.0, 1.0};
    throw std::invalid_argument("welch_t_test: both groups are degenerate (zero variance)");
  }
  const double se2 = va / na + vb / nb;
  const double t = (ma - mb) / std::sqrt(se2);
  const double dof = se2 * se2 /
                     (va * va / (na * na * (na - 1.0)) + vb * vb / (nb * nb * (nb - 1.0)));
  return {t, dof, student_t_two_sided_p(t, dof)};
}

nlohmann::json KappaReport::summary_json() const {
  nlohmann::json j;
  j["overall"] = overall;
  nlohmann::json classes = nlohmann::json::object();
  for (const auto& [label, stats] : per_class) classes[std::to_string(label)] = stats;
  j["per_class"] = classes;
  j["clean"] = clean_stats;
  j["ambiguous"] = ambiguous_stats;
  if (clean_vs_ambiguous) {
    j["clean_vs_ambiguous"] = {{"t", clean_vs_ambiguous->t},
                               {"dof", clean_vs_ambiguous->dof},
                               {"p", clean_vs_ambiguous->p}};
  }
  nlohmann::json kinds = nlohmann::json::object();
  for (int k = 0; k < kNumAugKinds; ++k) {
    GroupStats gs = summarize_group(kind_kappa[k]);
    nlohmann::json kj;
    to_json(kj, gs);
    // variance across samples is the Fig-style quantity of interest
    kj["variance"] = gs.stddev * gs.stddev;
    kinds[aug_kind_name(static_cast<AugKind>(k))] = kj;
  }
  j["per_augmentation"] = kinds;
  return j;
}

KappaReport kappa_statistics(Model& model, const Dataset& dataset,
                             Dataset::Split split, int views_per_sample,
                             std::uint64_t seed,
                             const std::string& checkpoint_loss_kind) {
  if (views_per_sample < 2)
    throw std::invalid_argument("kappa_statistics: need at least 2 views per sample");
  if (checkpoint_loss_kind != "vi-simsiam")
    throw std::invalid_argument(
        "kappa_statistics: checkpoint was trained with '" + checkpoint_loss_kind +
        "'; kappa estimates need a vi-simsiam head");
  const auto& samples = dataset.split(split);
  if (samples.empty()) throw std::invalid_argument("kappa_statistics: empty split");
  const int dim = model.config().input_dim;
  const int n = static_cast<int>(samples.size());

  KappaReport report;
  report.per_sample_kappa.resize(n);
  report.labels.resize(n);
  report.ambiguous.resize(n);

  SeededRng root(seed);
  const ViewPolicy policy{};

  // per-sample views, training policy
  {
    std::vector<double> rows(static_cast<std::size_t>(n) * views_per_sample * dim);
    for (int i = 0; i < n; ++i) {
      SeededRng vrng = root.split(1).split(i);
      ViewSet vs = make_viewset(samples[i], views_per_sample, policy, vrng);
      for (int v = 0; v < views_per_sample; ++v)
        std::copy(vs.views[v].begin(), vs.views[v].end(),
                  rows.begin() + (static_cast<std::size_t>(i) * views_per_sample + v) * dim);
    }
    const std::vector<double> kappas =
        predict_kappa_rows(model, rows, static_cast<std::int64_t>(n) * views_per_sample);
    for (int i = 0; i < n; ++i) {
      double acc = 0.0;
      for (int v = 0; v < views_per_sample; ++v) acc += kappas[i * views_per_sample + v];
      report.per_sample_kappa[i] = acc / views_per_sample;
      report.labels[i] = samples[i].label;
      report.ambiguous[i] = samples[i].ambiguous ? 1 : 0;
    }
  }

  // per augmentation kind, severity swept over the full range
  constexpr int kDrawsPerKind = 3;
  for (int kind = 0; kind < kNumAugKinds; ++kind) {
    std::vector<double> rows(static_cast<std::size_t>(n) * kDrawsPerKind * dim);
    for (int i = 0; i < n; ++i) {
      SeededRng arng = root.split(2).split(kind).split(i);
      for (int t = 0; t < kDrawsPerKind; ++t) {
        AugmentationSpec spec{static_cast<AugKind>(kind), arng.uniform(0.0, 1.0)};
        std::vector<double> view = augment(samples[i], spec, arng);
        std::copy(view.begin(), view.end(),
                  rows.begin() + (static_cast<std::size_t>(i) * kDrawsPerKind + t) * dim);
      }
    }
    const std::vector<double> kappas =
        predict_kappa_rows(model, rows, static_cast<std::int64_t>(n) * kDrawsPerKind);
    report.kind_kappa[kind].resize(n);
    for (int i = 0; i < n; ++i) {
      double acc = 0.0;
      for (int t = 0; t < kDrawsPerKind; ++t) acc += kappas[i * kDrawsPerKind + t];
      report.kind_kappa[kind][i] = acc / kDrawsPerKind;
    }
  }

  report.overall = summarize_group(report.per_sample_kappa);
  std::map<int, std::vector<double>> by_class;
  std::vector<double> clean, ambiguous;
  for (int i = 0; i < n; ++i) {
    by_class[report.labels[i]].push_back(report.per_sample_kappa[i]);
    (report.ambiguous[i] ? ambiguous : clean).push_back(report.per_sample_kappa[i]);
  }
  for (auto& [label, values] : by_class)
    report.per_class[label] = summarize_group(values);
  report.clean_stats = summarize_group(clean);
  report.ambiguous_stats = summarize_group(ambiguous);
  if (clean.size() >= 2 && ambiguous.size() >= 2)
    report.clean_vs_ambiguous = welch_t_test(clean, ambiguous);
  return report;
}

nlohmann::json CorrectnessReport::to_json() const {
  nlohmann::json j;
  j["applicable"] = applicable;
  j["correct"] = correct;
  j["incorrect"] = incorrect;
  if (welch) j["welch"] = {{"t", welch->t}, {"dof", welch->dof}, {"p", welch->p}};
  return j;
}

CorrectnessReport correctness_kappa_analysis(std::span<const std::uint8_t> correct,
                                             std::span<const double> kappa) {
  if (correct.size() != kappa.size())
    throw std::invalid_argument("correctness_kappa_analysis: size mismatch");
  std::vector<double> right, wrong;
  for (std::size_t i = 0; i < correct.size(); ++i)
    (correct[i] ? right : wrong).push_back(kappa[i]);
  CorrectnessReport report;
  report.correct = summarize_group(right);
  report.incorrect = summarize_group(wrong);
  if (right.size() < 2 || wrong.size() < 2) {
    report.applicable = false;  // all-correct or all-incorrect probe
    return report;
  }
  // identical kappa everywhere: the test is inapplicable, not an error
  const bool no_var = report.correct.stddev == 0.0 && report.incorrect.stddev == 0.0;
  if (no_var && report.correct.mean == report.incorrect.mean) {
    report.applicable = false;
    return report;
  }
  report.applicable = true;
  report.welch = welch_t_test(right, wrong);
  return report;
}

std::vector<LossSurfaceRow> loss_surface_grid(int d, std::span<const double> kappas,
                                              std::span<const double> s_values) {
  std::vector<LossSurfaceRow> rows;
  rows.reserve(kappas.size() * s_values.size());
  for (double kappa : kappas) {
    if (!(kappa > 0.0))
      throw std::invalid_argument("loss_surface_grid: kappa must be positive");
    const double log_c = ps_log_normalizer(d, kappa);
    for (double s : s_values) {
      if (s < -1.0 || s >= 1.0)
        throw std::invalid_argument("loss_surface_grid: s must be in [-1, 1)");
      rows.push_back({kappa, s, -(log_c + kappa * std::log1p(s))});
    }
  }
  return rows;
}

void write_loss_surface_csv(const std::filesystem::path& path,
                            std::span<const LossSurfaceRow> rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("write_loss_surface_csv: cannot open " + path.string());
  out << "kappa,s,loss_term\n";
  char buf[40];
  for (const LossSurfaceRow& r : rows) {
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g", r.kappa, r.s, r.value);
    out << buf << "\n";
  }
}

Projection2D project_2d(const std::vector<std::vector<double>>& features) {
  const int n = static_cast<int>(features.size());
  if (n < 3) throw std::invalid_argument("project_2d: need at least 3 rows");
  const int d = static_cast<int>(features[0].size());

  std::vector<double> mean(d, 0.0);
  for (const auto& row : features)
    for (int j = 0; j < d; ++j) mean[j] += row[j];
  for (double& m : mean) m /= n;

  std::vector<double> centered(static_cast<std::size_t>(n) * d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) centered[i * d + j] = features[i][j] - mean[j];

  std::vector<double> cov(static_cast<std::size_t>(d) * d);
  kern::gemm_tn(centered.data(), centered.data(), cov.data(), n, d, d);
  for (double& v : cov) v /= (n - 1);

  Projection2D proj;
  proj.total_variance = 0.0;
  for (int j = 0; j < d; ++j) proj.total_variance += cov[j * d + j];

  SeededRng rng(0xC0FFEE);
  std::vector<double> work(cov);
  for (int comp = 0; comp < 2; ++comp) {
    std::vector<double> v(d);
    double sq = 0.0;
    for (double& x : v) {
      x = rng.normal();
      sq += x * x;
    }
    for (double& x : v) x /= std::sqrt(sq);
    double eigen = 0.0;
    std::vector<double> next(d);
    for (int iter = 0; iter < 20000; ++iter) {
      for (int r = 0; r < d; ++r) {
        double acc = 0.0;
        for (int c = 0; c < d; ++c) acc += work[r * d + c] * v[c];
        next[r] = acc;
      }
      double norm = 0.0;
      for (double x : next) norm += x * x;
      norm = std::sqrt(norm);
      if (norm < 1e-14 * std::max(1.0, proj.total_variance)) {
        throw std::invalid_argument("project_2d: feature matrix has rank < 2");
      }
      double delta = 0.0;
      for (int r = 0; r < d; ++r) {
        const double nv = next[r] / norm;
        delta = std::max(delta, std::fabs(nv - v[r]));
        v[r] = nv;
      }
      eigen = norm;
      if (delta < 1e-13 && iter > 2) break;
    }
    if (eigen <= 1e-12 * std::max(1.0, proj.total_variance))
      throw std::invalid_argument("project_2d: feature matrix has rank < 2");
    proj.components[comp] = v;
    proj.variances[comp] = eigen;
    // deflate
    for (int r = 0; r < d; ++r)
      for (int c = 0; c < d; ++c) work[r * d + c] -= eigen * v[r] * v[c];
  }

  proj.coords.resize(n);
  for (int i = 0; i < n; ++i) {
    for (int comp = 0; comp < 2; ++comp) {
      double acc = 0.0;
      for (int j = 0; j < d; ++j) acc += centered[i * d + j] * proj.components[comp][j];
      proj.coords[i][comp] = acc;
    }
  }
  return proj;
}

}  // namespace visim
