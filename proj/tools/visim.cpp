// Command-line front end: gen-data, train, probe, analyze, loss-surface,
// selftest. Exit codes: 0 success, 1 usage error, 2 runtime failure.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "visim/autodiff.hpp"
#include "visim/config.hpp"
#include "visim/data_synth.hpp"
#include "visim/distributions.hpp"
#include "visim/eval.hpp"
#include "visim/losses.hpp"
#include "visim/manifest.hpp"
#include "visim/model.hpp"
#include "visim/quadrature.hpp"
#include "visim/train.hpp"
#include "visim/version.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CommonArgs {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir = "runs";
  bool force = false;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "TOML or JSON config file");
  cmd->add_option("--seed", args.seed, "seed override (wins over config file)");
  cmd->add_option("--out", args.out_dir, "base directory for run directories");
  cmd->add_flag("--force", args.force, "overwrite an existing run directory");
}

json file_section(const CommonArgs& args, const std::string& section) {
  if (args.config_path.empty()) return json::object();
  if (!fs::exists(args.config_path))
    throw UsageError("config file not found: " + args.config_path);
  json full;
  try {
    full = visim::load_config_file(args.config_path);
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
  if (full.contains(section) && full[section].is_object()) return full[section];
  return json::object();
}

struct RunContext {
  fs::path dir;
  visim::RunManifest manifest;
  std::unique_ptr<visim::RunLock> lock;

  void add_artifact(const fs::path& p) {
    manifest.artifacts.push_back(fs::relative(p, dir).string());
  }
  void finalize(const std::string& status) {
    manifest.finished_at = visim::iso8601_utc_now();
    manifest.status = status;
    visim::write_manifest(manifest, dir / "manifest.json");
  }
};

RunContext open_run_dir(const std::string& command, const json& resolved_config,
                        std::uint64_t seed, const CommonArgs& args) {
  RunContext ctx;
  const std::string hash = visim::run_directory_hash(command, resolved_config, seed);
  ctx.dir = fs::path(args.out_dir) / (command + "-" + hash + "-s" + std::to_string(seed));
  if (fs::exists(ctx.dir / "manifest.json") && !args.force)
    throw UsageError("run directory " + ctx.dir.string() +
                     " already holds a completed run (use --force to overwrite)");
  fs::create_directories(ctx.dir);
  ctx.lock = std::make_unique<visim::RunLock>(ctx.dir, args.force);
  ctx.manifest.command = command;
  ctx.manifest.resolved_config = resolved_config;
  ctx.manifest.seed = seed;
  ctx.manifest.tool_version = visim::kToolVersion;
  ctx.manifest.started_at = visim::iso8601_utc_now();
  ctx.manifest.status = "running";
  visim::write_manifest(ctx.manifest, ctx.dir / "manifest.json");
  return ctx;
}

std::string format_g(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// ---------------------------------------------------------------- gen-data

int run_gen_data(const CommonArgs& common, const json& flag_overrides) {
  json defaults;
  visim::to_json(defaults, visim::SynthConfig{});
  json resolved = visim::merge_config(
      visim::merge_config(defaults, file_section(common, "synth")), flag_overrides);
  if (common.seed) resolved["seed"] = *common.seed;
  visim::SynthConfig config = resolved.get<visim::SynthConfig>();
  try {
    config.validate();
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
  visim::to_json(resolved, config);

  RunContext ctx = open_run_dir("gen-data", resolved, config.seed, common);
  visim::Dataset ds = visim::generate_dataset(config);
  visim::save_dataset(ds, ctx.dir);
  for (const char* name : {"train.bin", "val.bin", "test.bin", "dataset.csv"})
    ctx.add_artifact(ctx.dir / name);
  ctx.finalize("ok");
  std::cerr << "gen-data: " << ds.train.size() << " train / " << ds.val.size()
            << " val / " << ds.test.size() << " test samples -> " << ctx.dir << "\n";
  return 0;
}

// ------------------------------------------------------------------- train

int run_train(const CommonArgs& common, const std::string& data_dir,
              const json& flag_overrides) {
  if (data_dir.empty()) throw UsageError("train: --data <gen-data run dir> is required");
  if (!fs::exists(fs::path(data_dir) / "train.bin"))
    throw UsageError("train: no dataset at " + data_dir);

  json train_defaults;
  visim::to_json(train_defaults, visim::TrainConfig{});
  json resolved = visim::merge_config(
      visim::merge_config(train_defaults, file_section(common, "train")), flag_overrides);
  if (common.seed) resolved["seed"] = *common.seed;
  visim::TrainConfig config;
  try {
    config = resolved.get<visim::TrainConfig>();
    config.validate();
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
  visim::to_json(resolved, config);

  json enc_defaults;
  visim::to_json(enc_defaults, visim::EncoderConfig{});
  json enc_resolved = visim::merge_config(enc_defaults, file_section(common, "encoder"));
  visim::EncoderConfig enc;
  try {
    enc = enc_resolved.get<visim::EncoderConfig>();
    enc.validate();
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }

  json manifest_config;
  manifest_config["train"] = resolved;
  manifest_config["encoder"] = enc_resolved;
  manifest_config["data"] = data_dir;

  RunContext ctx = open_run_dir("train", manifest_config, config.seed, common);
  visim::Dataset ds = visim::load_dataset(data_dir);
  visim::TrainResult result = visim::train_run(config, enc, ds, ctx.dir);
  for (const char* name : {"metrics.csv", "metrics.json", "timings.csv"})
    ctx.add_artifact(ctx.dir / name);
  ctx.add_artifact(result.final_checkpoint);
  ctx.add_artifact(result.best_checkpoint);
  ctx.finalize("ok");
  const auto& last = result.metrics.epochs.back();
  std::cerr << "train[" << visim::loss_kind_name(config.loss_kind) << "]: " << config.epochs
            << " epochs, final loss " << format_g(last.loss) << ", mean kappa "
            << format_g(last.kappa_mean) << " -> " << ctx.dir << "\n";
  return 0;
}

// ------------------------------------------------------------------- probe

int run_probe(const CommonArgs& common, const std::string& checkpoint,
              const std::string& data_dir, const json& flag_overrides) {
  if (checkpoint.empty() || data_dir.empty())
    throw UsageError("probe: --checkpoint and --data are required");
  if (!fs::exists(checkpoint)) throw UsageError("probe: no checkpoint at " + checkpoint);

  json defaults;
  visim::to_json(defaults, visim::ProbeConfig{});
  json resolved = visim::merge_config(
      visim::merge_config(defaults, file_section(common, "probe")), flag_overrides);
  if (common.seed) resolved["seed"] = *common.seed;
  visim::ProbeConfig config;
  try {
    config = resolved.get<visim::ProbeConfig>();
    config.validate();
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
  visim::to_json(resolved, config);
  json manifest_config;
  manifest_config["probe"] = resolved;
  manifest_config["checkpoint"] = checkpoint;
  manifest_config["data"] = data_dir;

  RunContext ctx = open_run_dir("probe", manifest_config, config.seed, common);
  visim::Model model = visim::Model::load_checkpoint(checkpoint);
  visim::Dataset ds = visim::load_dataset(data_dir);
  visim::ProbeResult result = visim::linear_probe(model, ds, config);

  json out = result.to_json();
  out["checkpoint"] = checkpoint;
  out["num_classes"] = ds.config.num_classes;
  {
    std::ofstream f(ctx.dir / "probe.json", std::ios::trunc);
    f << out.dump(2) << "\n";
  }
  ctx.add_artifact(ctx.dir / "probe.json");
  ctx.finalize("ok");
  std::cerr << "probe: top-1 " << format_g(result.top1);
  if (result.top5) std::cerr << ", top-5 " << format_g(*result.top5);
  std::cerr << " -> " << ctx.dir << "\n";
  return 0;
}

// ----------------------------------------------------------------- analyze

int run_analyze(const CommonArgs& common, const std::string& checkpoint,
                const std::string& data_dir, const std::string& probe_json,
                int views_per_sample) {
  if (checkpoint.empty() || data_dir.empty())
    throw UsageError("analyze: --checkpoint and --data are required");
  if (!fs::exists(checkpoint)) throw UsageError("analyze: no checkpoint at " + checkpoint);

  json manifest_config;
  manifest_config["checkpoint"] = checkpoint;
  manifest_config["data"] = data_dir;
  manifest_config["views_per_sample"] = views_per_sample;
  if (!probe_json.empty()) manifest_config["probe"] = probe_json;
  const std::uint64_t seed = common.seed.value_or(0);
  manifest_config["seed"] = seed;

  RunContext ctx = open_run_dir("analyze", manifest_config, seed, common);
  json header;
  visim::Model model = visim::Model::load_checkpoint(checkpoint, &header);
  const std::string loss_kind =
      header.contains("extra") ? header["extra"].value("loss_kind", "vi-simsiam")
                               : "vi-simsiam";
  visim::Dataset ds = visim::load_dataset(data_dir);

  visim::KappaReport train_report = visim::kappa_statistics(
      model, ds, visim::Dataset::Split::kTrain, views_per_sample, seed, loss_kind);

  {
    std::ofstream f(ctx.dir / "kappa_report.csv", std::ios::trunc);
    f << "index,label,ambiguous,kappa\n";
    for (std::size_t i = 0; i < train_report.per_sample_kappa.size(); ++i)
      f << i << ',' << train_report.labels[i] << ','
        << int(train_report.ambiguous[i]) << ','
        << format_g(train_report.per_sample_kappa[i]) << "\n";
  }
  {
    std::ofstream f(ctx.dir / "augmentation_kappa.csv", std::ios::trunc);
    f << "kind,index,kappa\n";
    for (int k = 0; k < visim::kNumAugKinds; ++k)
      for (std::size_t i = 0; i < train_report.kind_kappa[k].size(); ++i)
        f << visim::aug_kind_name(static_cast<visim::AugKind>(k)) << ',' << i << ','
          << format_g(train_report.kind_kappa[k][i]) << "\n";
  }
  json summary = train_report.summary_json();

  if (!probe_json.empty()) {
    if (!fs::exists(probe_json)) throw UsageError("analyze: no probe output at " + probe_json);
    std::ifstream f(probe_json);
    json probe;
    f >> probe;
    const auto correct = probe.at("test_correct").get<std::vector<std::uint8_t>>();
    visim::KappaReport test_report = visim::kappa_statistics(
        model, ds, visim::Dataset::Split::kTest, views_per_sample, seed, loss_kind);
    visim::CorrectnessReport corr =
        visim::correctness_kappa_analysis(correct, test_report.per_sample_kappa);
    std::ofstream out(ctx.dir / "correctness.json", std::ios::trunc);
    out << corr.to_json().dump(2) << "\n";
    ctx.add_artifact(ctx.dir / "correctness.json");
    summary["correctness"] = corr.to_json();
  }

  // 2D projection of the validation split features
  {
    std::vector<std::vector<double>> feats;
    {
      const auto& samples = ds.val;
      const int dim = model.config().input_dim;
      std::vector<double> x;
      for (const auto& s : samples) x.insert(x.end(), s.features.begin(), s.features.end());
      visim::ad::Tape tape;
      visim::Model::Pass pass = model.begin_pass(tape, false, false);
      visim::ad::Tensor z = model.encode(
          pass, visim::ad::Tensor({static_cast<std::int64_t>(samples.size()), dim},
                                  std::move(x)));
      feats.resize(samples.size());
      for (std::size_t i = 0; i < samples.size(); ++i) {
        feats[i].resize(model.config().latent_dim);
        for (int c = 0; c < model.config().latent_dim; ++c) feats[i][c] = z.at(i, c);
      }
    }
    visim::Projection2D proj = visim::project_2d(feats);
    std::ofstream f(ctx.dir / "projection.csv", std::ios::trunc);
    f << "index,label,ambiguous,pc1,pc2\n";
    for (std::size_t i = 0; i < feats.size(); ++i)
      f << i << ',' << ds.val[i].label << ',' << int(ds.val[i].ambiguous) << ','
        << format_g(proj.coords[i][0]) << ',' << format_g(proj.coords[i][1]) << "\n";
    summary["projection_variances"] = {proj.variances[0], proj.variances[1]};
  }

  {
    std::ofstream f(ctx.dir / "kappa_summary.json", std::ios::trunc);
    f << summary.dump(2) << "\n";
  }
  for (const char* name : {"kappa_report.csv", "augmentation_kappa.csv",
                           "kappa_summary.json", "projection.csv"})
    ctx.add_artifact(ctx.dir / name);
  ctx.finalize("ok");
  std::cerr << "analyze: mean kappa " << format_g(train_report.overall.mean) << " -> "
            << ctx.dir << "\n";
  return 0;
}

// ------------------------------------------------------------ loss-surface

int run_loss_surface(const CommonArgs& common, int dim, const std::string& kappas_csv,
                     double s_min, double s_max, int s_steps) {
  if (s_steps < 2) throw UsageError("loss-surface: --s-steps must be >= 2");
  if (!(s_min >= -1.0 && s_max < 1.0 && s_min < s_max))
    throw UsageError("loss-surface: need -1 <= s_min < s_max < 1");
  std::vector<double> kappas;
  {
    std::istringstream ss(kappas_csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
      try {
        kappas.push_back(std::stod(item));
      } catch (const std::exception&) {
        throw UsageError("loss-surface: bad kappa value '" + item + "'");
      }
    }
    if (kappas.empty()) throw UsageError("loss-surface: --kappas list is empty");
  }
  std::vector<double> s_values(s_steps);
  for (int i = 0; i < s_steps; ++i)
    s_values[i] = s_min + (s_max - s_min) * i / (s_steps - 1);

  json manifest_config{{"dim", dim}, {"kappas", kappas},   {"s_min", s_min},
                       {"s_max", s_max}, {"s_steps", s_steps}};
  RunContext ctx = open_run_dir("loss-surface", manifest_config,
                                common.seed.value_or(0), common);
  const auto rows = visim::loss_surface_grid(dim, kappas, s_values);
  visim::write_loss_surface_csv(ctx.dir / "loss_surface.csv", rows);
  ctx.add_artifact(ctx.dir / "loss_surface.csv");
  ctx.finalize("ok");
  std::cerr << "loss-surface: " << rows.size() << " rows -> " << ctx.dir << "\n";
  return 0;
}

// ---------------------------------------------------------------- selftest

int run_selftest() {
  int failures = 0;
  auto check = [&](const char* name, bool ok, const std::string& detail = "") {
    std::cout << (ok ? "[ok]   " : "[FAIL] ") << name;
    if (!detail.empty()) std::cout << " (" << detail << ")";
    std::cout << "\n";
    failures += !ok;
  };

  // PS normalizer against the quadrature oracle
  {
    double worst = 0.0;
    for (int d : {2, 3, 5}) {
      for (double kappa : {0.0, 1.0, 10.0}) {
        const double log_c = visim::ps_log_normalizer(d, kappa);
        const double log_i = visim::ps_log_normalizer_quadrature_oracle(d, kappa);
        worst = std::max(worst, std::fabs(std::expm1(log_c + log_i)));
      }
    }
    check("ps normalizer vs quadrature oracle", worst < 1e-8, format_g(worst));
  }
  // surface area recurrence A_d = 2 pi A_{d-2} / (d - 2)
  {
    double worst = 0.0;
    for (int d = 4; d <= 10; ++d) {
      const double lhs = visim::surface_area(d);
      const double rhs = 2.0 * M_PI * visim::surface_area(d - 2) / (d - 2);
      worst = std::max(worst, std::fabs(lhs - rhs) / rhs);
    }
    check("surface area recurrence", worst < 1e-12, format_g(worst));
  }
  // autodiff: composite function gradient vs finite differences
  {
    auto f = [](visim::ad::Tape& tape, const visim::ad::Tensor& x) {
      auto y = tape.softplus(tape.matmul(x, x.detach()));
      return tape.mean(tape.mul(y, tape.exp(tape.scale(x, 0.3))));
    };
    std::vector<double> point(9);
    visim::SeededRng rng(5);
    for (double& v : point) v = rng.uniform(-1.0, 1.0);
    const auto report = visim::ad::grad_check(f, {3, 3}, point, 1e-5, 1e-6);
    check("autodiff composite grad check", report.passed, format_g(report.max_rel_err));
  }
  // stop-gradient routing and the kappa gradient
  {
    const auto report = visim::loss_gradient_routing_check();
    check("loss gradient routing", report.passed,
          "target grad " + format_g(report.max_target_grad_abs) + ", kappa fd rel " +
              format_g(report.kappa_grad_vs_fd));
  }
  // Welch sanity
  {
    const std::vector<double> a{0, 0, 0, 0, 1}, b{10, 10, 10, 11, 9};
    const auto w = visim::welch_t_test(a, b);
    const std::vector<double> sym{1, 2, 3};
    const auto w2 = visim::welch_t_test(sym, sym);
    check("welch t-test sanity", w.p < 0.01 && std::fabs(w2.p - 1.0) < 1e-12,
          "p=" + format_g(w.p));
  }
  std::cout << (failures == 0 ? "selftest passed\n" : "selftest FAILED\n");
  return failures == 0 ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{std::string(visim::kToolVersion) +
               " - hyperspherical SSL training and analysis"};
  app.require_subcommand(1);
  app.set_version_flag("--version", visim::kToolVersion);

  CommonArgs common;

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic multiview dataset");
  add_common(gen, common);
  struct {
    std::optional<int> classes, dim, spc;
    std::optional<double> ambiguity, mix, noise;
  } gen_args;
  gen->add_option("--classes", gen_args.classes, "number of classes");
  gen->add_option("--dim", gen_args.dim, "input dimensionality");
  gen->add_option("--samples-per-class", gen_args.spc, "samples per class");
  gen->add_option("--ambiguity", gen_args.ambiguity, "fraction of ambiguous samples");
  gen->add_option("--mix", gen_args.mix, "dominant prototype weight (lambda)");
  gen->add_option("--noise", gen_args.noise, "feature noise sigma");

  // train
  auto* train = app.add_subcommand("train", "pretrain an encoder on a dataset");
  add_common(train, common);
  struct {
    std::string data;
    std::optional<std::string> loss;
    std::optional<int> epochs, batch, views;
    std::optional<double> lr, weight_decay, const_kappa;
  } train_args;
  train->add_option("--data", train_args.data, "gen-data run directory");
  train->add_option("--loss", train_args.loss, "simsiam | vmf-const-kappa | vi-simsiam");
  train->add_option("--epochs", train_args.epochs, "training epochs");
  train->add_option("--batch-size", train_args.batch, "minibatch size");
  train->add_option("--views", train_args.views, "views per sample (M)");
  train->add_option("--lr", train_args.lr, "base learning rate");
  train->add_option("--weight-decay", train_args.weight_decay, "weight decay");
  train->add_option("--const-kappa", train_args.const_kappa,
                    "kappa for the constant-kappa loss");

  // probe
  auto* probe = app.add_subcommand("probe", "linear evaluation of a frozen encoder");
  add_common(probe, common);
  struct {
    std::string checkpoint, data;
    std::optional<int> epochs;
    std::optional<double> lr;
  } probe_args;
  probe->add_option("--checkpoint", probe_args.checkpoint, "model checkpoint");
  probe->add_option("--data", probe_args.data, "gen-data run directory");
  probe->add_option("--epochs", probe_args.epochs, "probe epochs");
  probe->add_option("--lr", probe_args.lr, "probe learning rate");

  // analyze
  auto* analyze = app.add_subcommand("analyze", "kappa statistics and projections");
  add_common(analyze, common);
  struct {
    std::string checkpoint, data, probe_json;
    int views = 8;
  } analyze_args;
  analyze->add_option("--checkpoint", analyze_args.checkpoint, "model checkpoint");
  analyze->add_option("--data", analyze_args.data, "gen-data run directory");
  analyze->add_option("--probe", analyze_args.probe_json,
                      "probe.json for the correctness analysis");
  analyze->add_option("--views", analyze_args.views, "views per sample for kappa");

  // loss-surface
  auto* surf = app.add_subcommand("loss-surface", "export the loss grid over (kappa, s)");
  add_common(surf, common);
  struct {
    int dim = 16;
    std::string kappas = "0.01,0.1,1,10,100";
    double s_min = -0.99, s_max = 0.99;
    int s_steps = 199;
  } surf_args;
  surf->add_option("--dim", surf_args.dim, "latent dimension d");
  surf->add_option("--kappas", surf_args.kappas, "comma-separated kappa values");
  surf->add_option("--s-min", surf_args.s_min, "lowest cosine similarity");
  surf->add_option("--s-max", surf_args.s_max, "highest cosine similarity");
  surf->add_option("--s-steps", surf_args.s_steps, "grid points in s");

  // selftest
  app.add_subcommand("selftest", "run the built-in oracle checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_name() == "CallForHelp" || e.get_name() == "CallForAllHelp" ||
        e.get_name() == "CallForVersion") {
      return app.exit(e);
    }
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  }

  try {
    if (gen->parsed()) {
      json overrides = json::object();
      if (gen_args.classes) overrides["num_classes"] = *gen_args.classes;
      if (gen_args.dim) overrides["input_dim"] = *gen_args.dim;
      if (gen_args.spc) overrides["samples_per_class"] = *gen_args.spc;
      if (gen_args.ambiguity) overrides["ambiguity_fraction"] = *gen_args.ambiguity;
      if (gen_args.mix) overrides["ambiguity_mix"] = *gen_args.mix;
      if (gen_args.noise) overrides["noise_scale"] = *gen_args.noise;
      return run_gen_data(common, overrides);
    }
    if (train->parsed()) {
      json overrides = json::object();
      if (train_args.loss) overrides["loss"] = *train_args.loss;
      if (train_args.epochs) overrides["epochs"] = *train_args.epochs;
      if (train_args.batch) overrides["batch_size"] = *train_args.batch;
      if (train_args.views) overrides["views"] = *train_args.views;
      if (train_args.lr) overrides["base_lr"] = *train_args.lr;
      if (train_args.weight_decay) overrides["weight_decay"] = *train_args.weight_decay;
      if (train_args.const_kappa) overrides["const_kappa"] = *train_args.const_kappa;
      return run_train(common, train_args.data, overrides);
    }
    if (probe->parsed()) {
      json overrides = json::object();
      if (probe_args.epochs) overrides["epochs"] = *probe_args.epochs;
      if (probe_args.lr) overrides["lr"] = *probe_args.lr;
      return run_probe(common, probe_args.checkpoint, probe_args.data, overrides);
    }
    if (analyze->parsed()) {
      return run_analyze(common, analyze_args.checkpoint, analyze_args.data,
                         analyze_args.probe_json, analyze_args.views);
    }
    if (surf->parsed()) {
      return run_loss_surface(common, surf_args.dim, surf_args.kappas, surf_args.s_min,
                              surf_args.s_max, surf_args.s_steps);
    }
    return run_selftest();
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
