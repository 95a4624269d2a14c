#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <vector>

#include "visim/train.hpp"

using namespace visim;
namespace fs = std::filesystem;

namespace {

SynthConfig small_data_config() {
  SynthConfig cfg;
  cfg.num_classes = 4;
  cfg.input_dim = 32;
  cfg.samples_per_class = 30;
  cfg.seed = 5;
  return cfg;
}

EncoderConfig small_encoder() {
  EncoderConfig cfg;
  cfg.input_dim = 32;
  cfg.hidden_dims = {48, 48};
  cfg.latent_dim = 8;
  cfg.predictor_hidden = 16;
  return cfg;
}

TrainConfig small_train(LossKind kind, int epochs) {
  TrainConfig cfg;
  cfg.loss_kind = kind;
  cfg.epochs = epochs;
  cfg.batch_size = 16;
  cfg.views = kind == LossKind::kSimSiam ? 2 : 4;
  cfg.seed = 11;
  cfg.checkpoint_every = 0;  // only best/final
  return cfg;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

fs::path fresh_dir(const char* name) {
  const fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  return dir;
}

}  // namespace

TEST_CASE("cosine_lr endpoints and midpoint") {
  CHECK(cosine_lr(0, 100, 0.5) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(cosine_lr(100, 100, 0.5) == doctest::Approx(0.0).scale(1.0));
  CHECK(cosine_lr(50, 100, 0.5) == doctest::Approx(0.25).epsilon(1e-12));
  CHECK_THROWS_AS(cosine_lr(101, 100, 0.5), std::invalid_argument);
}

TEST_CASE("sgd momentum follows the hand-computed recurrence") {
  // f(w) = w^2/2 from w=1, lr 0.1, momentum 0.9: w1 = 0.9, w2 = 0.72
  std::map<std::string, ad::Tensor> params;
  params.emplace("w", ad::Tensor::scalar(1.0));
  SgdMomentum opt(0.9, 0.0);

  std::vector<double> g1{1.0};
  std::map<std::string, const std::vector<double>*> grads{{"w", &g1}};
  opt.step(params, grads, 0.1);
  CHECK(params.at("w").value() == doctest::Approx(0.9).epsilon(1e-15));

  std::vector<double> g2{0.9};
  grads["w"] = &g2;
  opt.step(params, grads, 0.1);
  CHECK(params.at("w").value() == doctest::Approx(0.72).epsilon(1e-15));
}

TEST_CASE("sgd with zero momentum is plain gradient descent") {
  std::map<std::string, ad::Tensor> params;
  params.emplace("w", ad::Tensor::scalar(2.0));
  SgdMomentum opt(0.0, 0.0);
  std::vector<double> g{0.5};
  std::map<std::string, const std::vector<double>*> grads{{"w", &g}};
  opt.step(params, grads, 0.2);
  CHECK(params.at("w").value() == doctest::Approx(2.0 - 0.2 * 0.5).epsilon(1e-15));
}

TEST_CASE("weight decay alone decays the parameter toward zero") {
  std::map<std::string, ad::Tensor> params;
  params.emplace("w", ad::Tensor::scalar(1.0));
  params.emplace("exempt", ad::Tensor::scalar(1.0));
  SgdMomentum opt(0.0, 0.01, {"exempt"});
  std::vector<double> zero{0.0};
  std::map<std::string, const std::vector<double>*> grads{{"w", &zero},
                                                          {"exempt", &zero}};
  for (int i = 0; i < 3; ++i) opt.step(params, grads, 0.1);
  CHECK(params.at("w").value() == doctest::Approx(std::pow(1.0 - 0.001, 3)).epsilon(1e-12));
  CHECK(params.at("exempt").value() == 1.0);
}

TEST_CASE("sgd aborts on NaN gradients naming the parameter") {
  std::map<std::string, ad::Tensor> params;
  params.emplace("enc.w", ad::Tensor::scalar(1.0));
  SgdMomentum opt(0.9, 0.0);
  std::vector<double> g{std::nan("")};
  std::map<std::string, const std::vector<double>*> grads{{"enc.w", &g}};
  CHECK_THROWS_WITH_AS(opt.step(params, grads, 0.1), doctest::Contains("enc.w"),
                       std::runtime_error);
}

TEST_CASE("one epoch at lr 0 leaves parameters bit-identical") {
  const Dataset ds = generate_dataset(small_data_config());
  TrainConfig cfg = small_train(LossKind::kViSimSiam, 1);
  cfg.base_lr = 0.0;
  cfg.weight_decay = 0.0;
  const EncoderConfig enc = small_encoder();
  const Model init = Model::init(
      [&] {
        EncoderConfig e = enc;
        e.kappa_min = cfg.kappa_min;
        e.kappa_max = cfg.kappa_max;
        return e;
      }(),
      cfg.seed);
  TrainResult result = train_run(cfg, enc, ds, fresh_dir("visim_lr0"));
  for (const auto& [name, tensor] : init.params())
    CHECK(tensor.data() == result.final_model.params().at(name).data());
}

TEST_CASE("training is bit-reproducible: identical metrics and checkpoints") {
  const Dataset ds = generate_dataset(small_data_config());
  const TrainConfig cfg = small_train(LossKind::kViSimSiam, 3);
  const fs::path d1 = fresh_dir("visim_repro1");
  const fs::path d2 = fresh_dir("visim_repro2");
  train_run(cfg, small_encoder(), ds, d1);
  train_run(cfg, small_encoder(), ds, d2);
  CHECK(read_file(d1 / "metrics.csv") == read_file(d2 / "metrics.csv"));
  CHECK(read_file(d1 / "metrics.json") == read_file(d2 / "metrics.json"));
  CHECK(read_file(d1 / "checkpoints" / "ckpt_final.bin") ==
        read_file(d2 / "checkpoints" / "ckpt_final.bin"));
  CHECK(!read_file(d1 / "timings.csv").empty());
  fs::remove_all(d1);
  fs::remove_all(d2);
}

TEST_CASE("the loss comes down for all three objectives on small data") {
  const Dataset ds = generate_dataset(small_data_config());
  for (LossKind kind :
       {LossKind::kSimSiam, LossKind::kVmfConstKappa, LossKind::kViSimSiam}) {
    TrainConfig cfg = small_train(kind, 24);
    TrainResult result = train_run(cfg, small_encoder(), ds,
                                   fresh_dir("visim_lossdown"));
    std::vector<double> first, last;
    for (int e = 0; e < 8; ++e) first.push_back(result.metrics.epochs[e].loss);
    for (int e = 16; e < 24; ++e) last.push_back(result.metrics.epochs[e].loss);
    INFO(loss_kind_name(kind) << ": first median " << median(first) << ", last median "
                              << median(last));
    CHECK(median(last) < median(first));
  }
}

TEST_CASE("kappa stays within the clamp bounds and stats recompute from checkpoints") {
  const Dataset ds = generate_dataset(small_data_config());
  TrainConfig cfg = small_train(LossKind::kViSimSiam, 10);
  cfg.checkpoint_every = 10;  // checkpoint exactly at the last epoch
  const fs::path dir = fresh_dir("visim_kstats");
  TrainResult result = train_run(cfg, small_encoder(), ds, dir);

  for (const EpochMetrics& em : result.metrics.epochs) {
    CHECK(em.kappa_min >= cfg.kappa_min);
    CHECK(em.kappa_max <= cfg.kappa_max);
  }

  // the epoch-9 checkpoint must reproduce the epoch-9 logged statistics
  Model loaded = Model::load_checkpoint(dir / "checkpoints" / "ckpt_epoch_0009.bin");
  EpochMetrics recomputed;
  compute_epoch_statistics(loaded, ds, cfg.seed, 9, recomputed);
  const EpochMetrics& logged = result.metrics.epochs[9];
  CHECK(recomputed.kappa_mean == logged.kappa_mean);
  CHECK(recomputed.kappa_std == logged.kappa_std);
  CHECK(recomputed.kappa_min == logged.kappa_min);
  CHECK(recomputed.kappa_max == logged.kappa_max);
  CHECK(recomputed.feature_std == logged.feature_std);
  fs::remove_all(dir);
}

TEST_CASE("removing stop-gradient and the predictor collapses the features") {
  SynthConfig data_cfg = small_data_config();
  const Dataset ds = generate_dataset(data_cfg);
  TrainConfig cfg = small_train(LossKind::kSimSiam, 40);
  cfg.views = 2;
  cfg.detach_targets = false;  // ablation: gradient flows into both branches
  cfg.use_predictor = false;   // and no predictor asymmetry
  cfg.base_lr = 0.05;
  TrainResult result = train_run(cfg, small_encoder(), ds, fresh_dir("visim_collapse"));
  const EpochMetrics& last = result.metrics.epochs.back();
  double max_std = 0.0;
  for (double s : last.feature_std) max_std = std::max(max_std, s);
  INFO("max per-dimension feature std after ablated training: " << max_std);
  CHECK(max_std < 1e-2);

  // the healthy configuration does not collapse
  TrainConfig healthy = small_train(LossKind::kSimSiam, 40);
  healthy.views = 2;
  healthy.base_lr = 0.05;
  TrainResult ok = train_run(healthy, small_encoder(), ds, fresh_dir("visim_healthy"));
  double min_std = INFINITY;
  for (double s : ok.metrics.epochs.back().feature_std) min_std = std::min(min_std, s);
  INFO("min per-dimension feature std with stop-gradient: " << min_std);
  CHECK(min_std > 0.1 / std::sqrt(8.0));
}

TEST_CASE("simsiam loss kind insists on two views") {
  TrainConfig cfg = small_train(LossKind::kSimSiam, 1);
  cfg.views = 4;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("train config json round trip") {
  TrainConfig cfg = small_train(LossKind::kVmfConstKappa, 5);
  cfg.const_kappa = 2.5;
  cfg.all_pairs = true;
  nlohmann::json j;
  to_json(j, cfg);
  const TrainConfig back = j.get<TrainConfig>();
  CHECK(back.loss_kind == LossKind::kVmfConstKappa);
  CHECK(back.const_kappa == 2.5);
  CHECK(back.all_pairs);
  CHECK(back.epochs == 5);
  CHECK_THROWS_AS(loss_kind_from_string("nonsense"), std::invalid_argument);
}
