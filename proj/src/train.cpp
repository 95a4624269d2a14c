#include "visim/train.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "visim/losses.hpp"

namespace visim {

namespace {

// rng stream ids
enum Stream : std::uint64_t { kShuffle = 11, kViews = 12, kStatsViews = 13 };

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void atomic_write(const std::filesystem::path& path, const std::string& content) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc | std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + tmp.string());
    out << content;
  }
  std::filesystem::rename(tmp, path);
}

struct RunningMoments {
  double sum = 0.0, sumsq = 0.0;
  double min = INFINITY, max = -INFINITY;
  std::int64_t count = 0;

  void add(double v) {
    sum += v;
    sumsq += v * v;
    min = std::min(min, v);
    max = std::max(max, v);
    ++count;
  }
  double mean() const { return count ? sum / count : 0.0; }
  double stddev() const {
    if (count < 2) return 0.0;
    const double m = mean();
    return std::sqrt(std::fmax(0.0, sumsq / count - m * m));
  }
};

}  // namespace

const char* loss_kind_name(LossKind kind) {
  switch (kind) {
    case LossKind::kSimSiam: return "simsiam";
    case LossKind::kVmfConstKappa: return "vmf-const-kappa";
    case LossKind::kViSimSiam: return "vi-simsiam";
  }
  return "unknown";
}

LossKind loss_kind_from_string(const std::string& name) {
  if (name == "simsiam") return LossKind::kSimSiam;
  if (name == "vmf-const-kappa") return LossKind::kVmfConstKappa;
  if (name == "vi-simsiam") return LossKind::kViSimSiam;
  throw std::invalid_argument("unknown loss kind '" + name +
                              "' (expected simsiam | vmf-const-kappa | vi-simsiam)");
}

void TrainConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("TrainConfig: epochs must be >= 1");
  if (batch_size < 2)
    throw std::invalid_argument("TrainConfig: batch_size must be >= 2 (batch statistics)");
  if (views < 2) throw std::invalid_argument("TrainConfig: views must be >= 2");
  if (loss_kind == LossKind::kSimSiam && views != 2)
    throw std::invalid_argument("TrainConfig: the simsiam loss is two-view; set views = 2 "
                                "or use vmf-const-kappa for multiview");
  if (!(base_lr >= 0.0)) throw std::invalid_argument("TrainConfig: base_lr must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0))
    throw std::invalid_argument("TrainConfig: momentum must be in [0, 1)");
  if (!(const_kappa > 0.0))
    throw std::invalid_argument("TrainConfig: const_kappa must be positive");
  if (!(kappa_min > 0.0) || !(kappa_max > kappa_min))
    throw std::invalid_argument("TrainConfig: need 0 < kappa_min < kappa_max");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"loss", loss_kind_name(c.loss_kind)},
                     {"epochs", c.epochs},
                     {"batch_size", c.batch_size},
                     {"base_lr", c.base_lr},
                     {"momentum", c.momentum},
                     {"weight_decay", c.weight_decay},
                     {"views", c.views},
                     {"const_kappa", c.const_kappa},
                     {"kappa_min", c.kappa_min},
                     {"kappa_max", c.kappa_max},
                     {"seed", c.seed},
                     {"checkpoint_every", c.checkpoint_every},
                     {"detach_targets", c.detach_targets},
                     {"use_predictor", c.use_predictor},
                     {"all_pairs", c.all_pairs},
                     {"include_same_view", c.include_same_view}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  c = TrainConfig{};
  if (j.contains("loss")) c.loss_kind = loss_kind_from_string(j.at("loss").get<std::string>());
  if (j.contains("epochs")) j.at("epochs").get_to(c.epochs);
  if (j.contains("batch_size")) j.at("batch_size").get_to(c.batch_size);
  if (j.contains("base_lr")) j.at("base_lr").get_to(c.base_lr);
  if (j.contains("momentum")) j.at("momentum").get_to(c.momentum);
  if (j.contains("weight_decay")) j.at("weight_decay").get_to(c.weight_decay);
  if (j.contains("views")) j.at("views").get_to(c.views);
  if (j.contains("const_kappa")) j.at("const_kappa").get_to(c.const_kappa);
  if (j.contains("kappa_min")) j.at("kappa_min").get_to(c.kappa_min);
  if (j.contains("kappa_max")) j.at("kappa_max").get_to(c.kappa_max);
  if (j.contains("seed")) j.at("seed").get_to(c.seed);
  if (j.contains("checkpoint_every")) j.at("checkpoint_every").get_to(c.checkpoint_every);
  if (j.contains("detach_targets")) j.at("detach_targets").get_to(c.detach_targets);
  if (j.contains("use_predictor")) j.at("use_predictor").get_to(c.use_predictor);
  if (j.contains("all_pairs")) j.at("all_pairs").get_to(c.all_pairs);
  if (j.contains("include_same_view")) j.at("include_same_view").get_to(c.include_same_view);
}

void Metrics::write_csv(const std::filesystem::path& path) const {
  std::string out =
      "epoch,steps,loss,sim_term,norm_term,kappa_mean,kappa_std,kappa_min,kappa_max,"
      "feat_std_min,feat_std_mean\n";
  for (const EpochMetrics& e : epochs) {
    double fmin = INFINITY, fsum = 0.0;
    for (double v : e.feature_std) {
      fmin = std::min(fmin, v);
      fsum += v;
    }
    const double fmean = e.feature_std.empty() ? 0.0 : fsum / e.feature_std.size();
    out += std::to_string(e.epoch) + ',' + std::to_string(e.steps) + ',' +
           format_double(e.loss) + ',' + format_double(e.sim_term) + ',' +
           format_double(e.norm_term) + ',' + format_double(e.kappa_mean) + ',' +
           format_double(e.kappa_std) + ',' + format_double(e.kappa_min) + ',' +
           format_double(e.kappa_max) + ',' +
           format_double(e.feature_std.empty() ? 0.0 : fmin) + ',' +
           format_double(fmean) + '\n';
  }
  atomic_write(path, out);
}

void Metrics::write_json(const std::filesystem::path& path) const {
  nlohmann::json j = nlohmann::json::array();
  for (const EpochMetrics& e : epochs) {
    j.push_back({{"epoch", e.epoch},
                 {"steps", e.steps},
                 {"loss", e.loss},
                 {"sim_term", e.sim_term},
                 {"norm_term", e.norm_term},
                 {"kappa_mean", e.kappa_mean},
                 {"kappa_std", e.kappa_std},
                 {"kappa_min", e.kappa_min},
                 {"kappa_max", e.kappa_max},
                 {"feature_std", e.feature_std}});
  }
  atomic_write(path, j.dump(2) + "\n");
}

void Metrics::write_timings_csv(const std::filesystem::path& path) const {
  std::string out = "epoch,wall_seconds\n";
  for (const EpochMetrics& e : epochs)
    out += std::to_string(e.epoch) + ',' + format_double(e.wall_seconds) + '\n';
  atomic_write(path, out);
}

double cosine_lr(std::int64_t step, std::int64_t total_steps, double base_lr) {
  if (step < 0 || step > total_steps)
    throw std::invalid_argument("cosine_lr: step outside [0, total_steps]");
  if (total_steps == 0) return base_lr;
  return base_lr * 0.5 *
         (1.0 + std::cos(M_PI * static_cast<double>(step) / total_steps));
}

SgdMomentum::SgdMomentum(double momentum, double weight_decay,
                         std::set<std::string> no_decay)
    : momentum_(momentum), weight_decay_(weight_decay), no_decay_(std::move(no_decay)) {}

void SgdMomentum::step(std::map<std::string, ad::Tensor>& params,
                       const std::map<std::string, const std::vector<double>*>& grads,
                       double lr) {
  for (auto& [name, param] : params) {
    auto it = grads.find(name);
    if (it == grads.end())
      throw std::invalid_argument("sgd_momentum_step: missing gradient for " + name);
    const std::vector<double>& g = *it->second;
    auto& v = velocity_[name];
    if (v.empty()) v.assign(param.numel(), 0.0);
    const double wd = no_decay_.count(name) ? 0.0 : weight_decay_;
    std::vector<double>& p = param.mutable_data();
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (std::isnan(g[i]))
        throw std::runtime_error("sgd_momentum_step: NaN gradient in parameter " + name);
      v[i] = momentum_ * v[i] + (g[i] + wd * p[i]);
      p[i] -= lr * v[i];
    }
  }
}

// Eval-mode pass over the train split: per-dimension latent std (collapse
// monitor) and kappa statistics over two standard views per sample.
void compute_epoch_statistics(Model& model, const Dataset& dataset, std::uint64_t seed,
                              int epoch, EpochMetrics& out) {
  const auto& samples = dataset.train;
  const int dim = model.config().input_dim;
  const int d = model.config().latent_dim;
  const int batch = 256;
  const int n = static_cast<int>(samples.size());

  std::vector<double> sum(d, 0.0), sumsq(d, 0.0);
  RunningMoments kappa_moments;
  SeededRng stats_root = SeededRng(seed).split(kStatsViews).split(epoch);
  const ViewPolicy policy{};

  for (int start = 0; start < n; start += batch) {
    const int stop = std::min(n, start + batch);
    const int rows = stop - start;
    // raw features for the collapse monitor
    std::vector<double> raw(static_cast<std::size_t>(rows) * dim);
    for (int i = 0; i < rows; ++i)
      std::copy(samples[start + i].features.begin(), samples[start + i].features.end(),
                raw.begin() + static_cast<std::size_t>(i) * dim);
    ad::Tape tape;
    Model::Pass pass = model.begin_pass(tape, /*training=*/false, /*track=*/false);
    ad::Tensor z = model.encode(pass, ad::Tensor({rows, dim}, std::move(raw)));
    for (int i = 0; i < rows; ++i)
      for (int c = 0; c < d; ++c) {
        const double v = z.at(i, c);
        sum[c] += v;
        sumsq[c] += v * v;
      }

    // two standard views per sample for the kappa log
    std::vector<double> views(static_cast<std::size_t>(rows) * 2 * dim);
    for (int i = 0; i < rows; ++i) {
      SeededRng vrng = stats_root.split(start + i);
      ViewSet vs = make_viewset(samples[start + i], 2, policy, vrng);
      std::copy(vs.views[0].begin(), vs.views[0].end(),
                views.begin() + static_cast<std::size_t>(2 * i) * dim);
      std::copy(vs.views[1].begin(), vs.views[1].end(),
                views.begin() + static_cast<std::size_t>(2 * i + 1) * dim);
    }
    ad::Tape vtape;
    Model::Pass vpass = model.begin_pass(vtape, /*training=*/false, /*track=*/false);
    ad::Tensor vz = model.encode(vpass, ad::Tensor({rows * 2, dim}, std::move(views)));
    PredictorOutput pred = model.predict(vpass, vz);
    for (std::int64_t i = 0; i < pred.kappa.rows(); ++i)
      kappa_moments.add(pred.kappa.at(i, 0));
  }

  out.feature_std.resize(d);
  for (int c = 0; c < d; ++c) {
    const double mean = sum[c] / n;
    out.feature_std[c] = std::sqrt(std::fmax(0.0, sumsq[c] / n - mean * mean));
  }
  out.kappa_mean = kappa_moments.mean();
  out.kappa_std = kappa_moments.stddev();
  out.kappa_min = kappa_moments.count ? kappa_moments.min : 0.0;
  out.kappa_max = kappa_moments.count ? kappa_moments.max : 0.0;
}

TrainResult train_run(const TrainConfig& config, const EncoderConfig& encoder_config,
                      const Dataset& dataset, const std::filesystem::path& out_dir) {
  config.validate();
  EncoderConfig enc = encoder_config;
  enc.kappa_min = config.kappa_min;
  enc.kappa_max = config.kappa_max;
  enc.validate();
  if (dataset.train.empty()) throw std::invalid_argument("train_run: empty train split");
  if (dataset.config.input_dim != enc.input_dim)
    throw std::invalid_argument("train_run: dataset input_dim " +
                                std::to_string(dataset.config.input_dim) +
                                " does not match encoder input_dim " +
                                std::to_string(enc.input_dim));

  std::filesystem::create_directories(out_dir);
  const std::filesystem::path ckpt_dir = out_dir / "checkpoints";
  std::filesystem::create_directories(ckpt_dir);

  Model model = Model::init(enc, config.seed);
  SgdMomentum optimizer(config.momentum, config.weight_decay,
                        {"pred.out.bias_kappa"});

  const int n_train = static_cast<int>(dataset.train.size());
  const int steps_per_epoch = (n_train + config.batch_size - 1) / config.batch_size;
  const std::int64_t total_steps =
      static_cast<std::int64_t>(config.epochs) * steps_per_epoch;
  const int dim = enc.input_dim;
  const int num_predictor_views =
      config.all_pairs ? config.views : std::min(2, config.views);
  const ViewPolicy view_policy{};
  const PairPolicy pair_policy{config.include_same_view, config.detach_targets};

  SeededRng root(config.seed);
  TrainResult result;
  double best_loss = INFINITY;
  Model best = model.clone();
  int best_epoch = 0;
  std::int64_t global_step = 0;

  auto extra_header = [&](int epoch) {
    nlohmann::json extra;
    extra["epoch"] = epoch;
    extra["loss_kind"] = loss_kind_name(config.loss_kind);
    extra["train_config"] = config;
    return extra;
  };

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    SeededRng epoch_rng = root.split(kShuffle).split(epoch);
    std::vector<int> order(n_train);
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = order.size(); i > 1; --i) {
      const std::size_t j = epoch_rng.uniform_index(i);
      std::swap(order[i - 1], order[j]);
    }

    double loss_sum = 0.0, sim_sum = 0.0, norm_sum = 0.0;
    double last_kappa_mean = std::nan("");

    for (int step = 0; step < steps_per_epoch; ++step) {
      const int start = step * config.batch_size;
      const int stop = std::min(n_train, start + config.batch_size);
      const int rows = stop - start;

      // per-view feature matrices
      std::vector<std::vector<double>> view_data(
          config.views, std::vector<double>(static_cast<std::size_t>(rows) * dim));
      for (int i = 0; i < rows; ++i) {
        const int sample_index = order[start + i];
        SeededRng vrng = root.split(kViews).split(epoch).split(sample_index);
        ViewSet vs = make_viewset(dataset.train[sample_index], config.views,
                                  view_policy, vrng);
        for (int v = 0; v < config.views; ++v)
          std::copy(vs.views[v].begin(), vs.views[v].end(),
                    view_data[v].begin() + static_cast<std::size_t>(i) * dim);
      }

      ad::Tape tape;
      Model::Pass tracked = model.begin_pass(tape, /*training=*/true, /*track=*/true);
      Model::Pass plain = model.begin_pass(tape, /*training=*/true, /*track=*/false);

      ViewEmbeddings embeddings;
      embeddings.z.resize(config.views);
      embeddings.mu.resize(config.views);
      embeddings.kappa.resize(config.views);
      for (int v = 0; v < config.views; ++v) {
        const bool is_predictor_view = v < num_predictor_views;
        ad::Tensor x({rows, dim}, std::move(view_data[v]));
        Model::Pass& pass = is_predictor_view ? tracked : plain;
        ad::Tensor z = model.encode(pass, x);
        embeddings.z[v] = z;
        if (is_predictor_view) {
          if (config.use_predictor) {
            PredictorOutput pred = model.predict(pass, z);
            embeddings.mu[v] = pred.mu;
            embeddings.kappa[v] = pred.kappa;
          } else {
            // ablation: the latent itself plays the prediction
            embeddings.mu[v] = z;
            embeddings.kappa[v] = ad::Tensor::full({rows, 1}, enc.kappa_init);
          }
        }
      }

      LossOutput loss;
      try {
        switch (config.loss_kind) {
          case LossKind::kSimSiam:
            loss = simsiam_loss(tape, embeddings, pair_policy);
            break;
          case LossKind::kVmfConstKappa:
            loss = vmf_constant_kappa_loss(tape, embeddings, config.const_kappa,
                                           pair_policy);
            break;
          case LossKind::kViSimSiam:
            loss = vi_simsiam_loss(tape, embeddings, pair_policy);
            break;
        }
      } catch (const std::runtime_error& e) {
        throw std::runtime_error("train_run: epoch " + std::to_string(epoch) + " step " +
                                 std::to_string(step) + ": " + e.what());
      }

      {
        double ksum = 0.0;
        int kcount = 0;
        for (double k : loss.per_view_mean_kappa)
          if (!std::isnan(k)) {
            ksum += k;
            ++kcount;
          }
        if (kcount > 0) last_kappa_mean = ksum / kcount;
      }
      if (!std::isfinite(loss.total_value)) {
        throw std::runtime_error(
            "train_run: non-finite loss at epoch " + std::to_string(epoch) + " step " +
            std::to_string(step) + " (last mean kappa " +
            std::to_string(last_kappa_mean) + ")");
      }

      tape.backward(loss.total);
      std::map<std::string, const std::vector<double>*> grads;
      for (auto& [name, bound] : tracked.bound) grads.emplace(name, &tape.grad(bound));
      const double lr = cosine_lr(global_step, total_steps, config.base_lr);
      optimizer.step(model.params(), grads, lr);
      ++global_step;

      loss_sum += loss.total_value;
      double pair_sum = 0.0;
      for (const PairTerm& pt : loss.pair_terms) pair_sum += pt.value;
      sim_sum += pair_sum;
      norm_sum += loss.log_normalizer_term;
    }

    EpochMetrics em;
    em.epoch = epoch;
    em.steps = steps_per_epoch;
    em.loss = loss_sum / steps_per_epoch;
    em.sim_term = sim_sum / steps_per_epoch;
    em.norm_term = norm_sum / steps_per_epoch;
    compute_epoch_statistics(model, dataset, config.seed, epoch, em);
    em.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.metrics.epochs.push_back(em);

    result.metrics.write_csv(out_dir / "metrics.csv");
    result.metrics.write_json(out_dir / "metrics.json");
    result.metrics.write_timings_csv(out_dir / "timings.csv");

    if (em.loss < best_loss) {
      best_loss = em.loss;
      best = model.clone();
      best_epoch = epoch;
    }
    if (config.checkpoint_every > 0 && (epoch + 1) % config.checkpoint_every == 0) {
      char name[40];
      std::snprintf(name, sizeof(name), "ckpt_epoch_%04d.bin", epoch);
      model.save_checkpoint(ckpt_dir / name, extra_header(epoch));
    }
  }

  result.final_checkpoint = ckpt_dir / "ckpt_final.bin";
  result.best_checkpoint = ckpt_dir / "ckpt_best.bin";
  model.save_checkpoint(result.final_checkpoint, extra_header(config.epochs - 1));
  best.save_checkpoint(result.best_checkpoint, extra_header(best_epoch));
  result.final_model = std::move(model);
  result.best_model = std::move(best);
  result.best_epoch = best_epoch;
  return result;
}

}  // namespace visim
