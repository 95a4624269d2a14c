#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "visim/config.hpp"
#include "visim/manifest.hpp"
#include "visim/version.hpp"

using namespace visim;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string visim_bin() {
  const char* bin = std::getenv("VISIM_BIN");
  REQUIRE_MESSAGE(bin != nullptr, "VISIM_BIN must point at the CLI binary");
  return bin;
}

int run_cli(const std::string& args) {
  const std::string cmd = visim_bin() + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE_MESSAGE(in.good(), "missing file ", p.string());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

fs::path fresh_dir(const char* name) {
  const fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

fs::path find_run_dir(const fs::path& base, const std::string& command) {
  for (const auto& entry : fs::directory_iterator(base)) {
    if (entry.is_directory() &&
        entry.path().filename().string().rfind(command + "-", 0) == 0)
      return entry.path();
  }
  FAIL("no run directory for " << command << " under " << base.string());
  return {};
}

}  // namespace

TEST_CASE("toml subset: sections, dotted keys, arrays, comments, strings") {
  const std::string text = R"(# top comment
title = "hello # not a comment"
[synth]
num_classes = 4        # trailing comment
noise_scale = 0.25
flag = true
[train]
epochs = 7
hidden.dims = [32, 16]
name = "line\nbreak"
)";
  const json j = parse_toml_subset(text, "test.toml");
  CHECK(j.at("title") == "hello # not a comment");
  CHECK(j.at("synth").at("num_classes") == 4);
  CHECK(j.at("synth").at("noise_scale") == 0.25);
  CHECK(j.at("synth").at("flag") == true);
  CHECK(j.at("train").at("epochs") == 7);
  CHECK(j.at("train").at("hidden").at("dims") == json({32, 16}));
  CHECK(j.at("train").at("name") == "line\nbreak");
}

TEST_CASE("toml subset: errors carry the origin and line number") {
  CHECK_THROWS_WITH_AS(parse_toml_subset("a = 1\nbroken line\n", "x.toml"),
                       doctest::Contains("x.toml:2"), std::runtime_error);
  CHECK_THROWS_WITH_AS(parse_toml_subset("a = 1\na = 2\n", "x.toml"),
                       doctest::Contains("duplicate key"), std::runtime_error);
  CHECK_THROWS_WITH_AS(parse_toml_subset("v = @@\n", "x.toml"),
                       doctest::Contains("cannot parse value"), std::runtime_error);
}

TEST_CASE("config file loading dispatches on extension") {
  const fs::path dir = fresh_dir("visim_cfg");
  {
    std::ofstream f(dir / "a.toml");
    f << "[synth]\nnum_classes = 3\n";
  }
  {
    std::ofstream f(dir / "a.json");
    f << R"({"synth": {"num_classes": 5}})";
  }
  {
    std::ofstream f(dir / "a.yaml");
    f << "whatever";
  }
  CHECK(load_config_file(dir / "a.toml").at("synth").at("num_classes") == 3);
  CHECK(load_config_file(dir / "a.json").at("synth").at("num_classes") == 5);
  CHECK_THROWS_AS(load_config_file(dir / "a.yaml"), std::runtime_error);
  CHECK_THROWS_AS(load_config_file(dir / "missing.toml"), std::runtime_error);
  fs::remove_all(dir);
}

TEST_CASE("merge precedence: overrides beat base, objects merge deep") {
  const json base = {{"a", 1}, {"nested", {{"x", 1}, {"y", 2}}}};
  const json over = {{"nested", {{"y", 20}}}, {"b", 3}};
  const json merged = merge_config(base, over);
  CHECK(merged.at("a") == 1);
  CHECK(merged.at("b") == 3);
  CHECK(merged.at("nested").at("x") == 1);
  CHECK(merged.at("nested").at("y") == 20);
}

TEST_CASE("manifest round trip and version-mismatch warning flag") {
  const fs::path dir = fresh_dir("visim_manifest");
  RunManifest m;
  m.command = "train";
  m.resolved_config = {{"epochs", 3}};
  m.seed = 99;
  m.artifacts = {"metrics.csv"};
  m.tool_version = kToolVersion;
  m.started_at = iso8601_utc_now();
  m.status = "ok";
  write_manifest(m, dir / "manifest.json");

  bool mismatch = true;
  const RunManifest back = load_manifest(dir / "manifest.json", &mismatch);
  CHECK_FALSE(mismatch);
  CHECK(back.command == "train");
  CHECK(back.seed == 99);
  CHECK(back.resolved_config.at("epochs") == 3);

  RunManifest old = m;
  old.tool_version = "visim 0.0.1";
  write_manifest(old, dir / "old.json");
  load_manifest(dir / "old.json", &mismatch);
  CHECK(mismatch);

  {
    std::ofstream f(dir / "corrupt.json");
    f << "{ not json";
  }
  CHECK_THROWS_WITH_AS(load_manifest(dir / "corrupt.json"),
                       doctest::Contains("corrupt"), std::runtime_error);
  fs::remove_all(dir);
}

TEST_CASE("run_directory_hash separates configs and seeds") {
  const json a = {{"epochs", 1}};
  const json b = {{"epochs", 2}};
  CHECK(run_directory_hash("train", a, 1) == run_directory_hash("train", a, 1));
  CHECK(run_directory_hash("train", a, 1) != run_directory_hash("train", b, 1));
  CHECK(run_directory_hash("train", a, 1) != run_directory_hash("train", a, 2));
  CHECK(run_directory_hash("train", a, 1) != run_directory_hash("probe", a, 1));
}

TEST_CASE("cli: selftest passes, usage errors exit 1") {
  CHECK(run_cli("selftest") == 0);
  CHECK(run_cli("definitely-not-a-subcommand") == 1);
  CHECK(run_cli("train --data /nonexistent --out /tmp/visim_cli_x") == 1);
  CHECK(run_cli("gen-data --no-such-flag") == 1);

  // a missing config file is a usage error and the message names the path
  const std::string cmd = visim_bin() +
                          " train --config /nonexistent/missing.toml --data /tmp 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::string output;
  char buf[256];
  while (fgets(buf, sizeof(buf), pipe)) output += buf;
  const int status = pclose(pipe);
  CHECK(WEXITSTATUS(status) == 1);
  CHECK(output.find("missing.toml") != std::string::npos);
}

TEST_CASE("cli pipeline: flag > config file > default, and byte-identical reruns") {
  const fs::path work = fresh_dir("visim_cli_pipeline");
  const fs::path cfg_path = work / "config.toml";
  {
    std::ofstream f(cfg_path);
    f << "[synth]\n"
         "num_classes = 3\n"
         "input_dim = 16\n"
         "samples_per_class = 20\n"
         "noise_scale = 0.1\n"
         "[encoder]\n"
         "input_dim = 16\n"
         "hidden_dims = [24, 24]\n"
         "latent_dim = 6\n"
         "predictor_hidden = 8\n"
         "[train]\n"
         "epochs = 3\n"
         "batch_size = 8\n"
         "views = 2\n"
         "[probe]\n"
         "epochs = 20\n";
  }

  auto pipeline = [&](const fs::path& out) {
    const std::string common =
        " --config " + cfg_path.string() + " --seed 7 --out " + out.string();
    REQUIRE(run_cli("gen-data" + common + " --samples-per-class 24") == 0);
    const fs::path data = find_run_dir(out, "gen-data");
    REQUIRE(run_cli("train" + common + " --data " + data.string() +
                    " --loss vi-simsiam") == 0);
    const fs::path train = find_run_dir(out, "train");
    REQUIRE(run_cli("probe" + common + " --checkpoint " +
                    (train / "checkpoints" / "ckpt_final.bin").string() + " --data " +
                    data.string()) == 0);
    const fs::path probe = find_run_dir(out, "probe");
    REQUIRE(run_cli("analyze" + common + " --checkpoint " +
                    (train / "checkpoints" / "ckpt_final.bin").string() + " --data " +
                    data.string() + " --probe " + (probe / "probe.json").string()) == 0);
    return std::tuple{data, train, probe, find_run_dir(out, "analyze")};
  };

  const auto [data1, train1, probe1, analyze1] = pipeline(work / "run1");
  const auto [data2, train2, probe2, analyze2] = pipeline(work / "run2");

  // the CLI flag overrode the config file: 24 samples per class, not 20
  bool mismatch = false;
  const RunManifest gen_manifest = load_manifest(data1 / "manifest.json", &mismatch);
  CHECK_FALSE(mismatch);
  CHECK(gen_manifest.resolved_config.at("samples_per_class") == 24);
  CHECK(gen_manifest.resolved_config.at("num_classes") == 3);  // from the file
  CHECK(gen_manifest.seed == 7);

  // byte-identical reruns for every data artifact
  for (const char* name : {"train.bin", "val.bin", "test.bin", "dataset.csv"})
    CHECK(read_file(data1 / name) == read_file(data2 / name));
  for (const char* name : {"metrics.csv", "metrics.json"})
    CHECK(read_file(train1 / name) == read_file(train2 / name));
  CHECK(read_file(train1 / "checkpoints" / "ckpt_final.bin") ==
        read_file(train2 / "checkpoints" / "ckpt_final.bin"));
  CHECK(read_file(probe1 / "probe.json") == read_file(probe2 / "probe.json"));
  for (const char* name : {"kappa_report.csv", "augmentation_kappa.csv", "projection.csv"})
    CHECK(read_file(analyze1 / name) == read_file(analyze2 / name));

  // a second run into the same directory collides without --force
  const std::string common =
      " --config " + cfg_path.string() + " --seed 7 --out " + (work / "run1").string();
  CHECK(run_cli("gen-data" + common + " --samples-per-class 24") == 1);
  CHECK(run_cli("gen-data" + common + " --samples-per-class 24 --force") == 0);
  fs::remove_all(work);
}
