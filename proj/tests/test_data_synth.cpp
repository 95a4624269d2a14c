#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <vector>

#include "visim/data_synth.hpp"

using namespace visim;
namespace fs = std::filesystem;

namespace {

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return dot / std::sqrt(na * nb);
}

int nearest_prototype(const Sample& s, const std::vector<std::vector<double>>& protos) {
  int best = 0;
  double best_cos = -2.0;
  for (std::size_t c = 0; c < protos.size(); ++c) {
    const double v = cosine(s.features, protos[c]);
    if (v > best_cos) {
      best_cos = v;
      best = static_cast<int>(c);
    }
  }
  return best;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

TEST_CASE("noiseless unambiguous samples sit exactly on their prototype") {
  SynthConfig cfg;
  cfg.num_classes = 6;
  cfg.samples_per_class = 20;
  cfg.noise_scale = 0.0;
  cfg.ambiguity_fraction = 0.0;
  const Dataset ds = generate_dataset(cfg);
  for (const auto* split : {&ds.train, &ds.val, &ds.test})
    for (const Sample& s : *split)
      CHECK(nearest_prototype(s, ds.prototypes) == s.label);
}

TEST_CASE("prototypes are pairwise separated below cosine 0.5") {
  SynthConfig cfg;
  const Dataset ds = generate_dataset(cfg);
  for (std::size_t a = 0; a < ds.prototypes.size(); ++a)
    for (std::size_t b = a + 1; b < ds.prototypes.size(); ++b)
      CHECK(cosine(ds.prototypes[a], ds.prototypes[b]) < 0.5);
}

TEST_CASE("unattainable separation raises a config error") {
  SynthConfig cfg;
  cfg.num_classes = 40;
  cfg.input_dim = 2;  // at most a handful of directions fit below cos 0.5
  cfg.samples_per_class = 2;
  CHECK_THROWS_WITH_AS(generate_dataset(cfg), doctest::Contains("cosine"),
                       std::invalid_argument);
}

TEST_CASE("near-symmetric mixing gives near-equidistant ambiguous samples") {
  SynthConfig cfg;
  cfg.num_classes = 5;
  cfg.samples_per_class = 10;
  cfg.ambiguity_fraction = 0.5;
  cfg.ambiguity_mix = 0.5 + 1e-9;  // the mix weight must stay above 1/2
  cfg.noise_scale = 0.0;
  const Dataset ds = generate_dataset(cfg);
  int seen = 0;
  for (const Sample& s : ds.train) {
    if (!s.ambiguous) continue;
    ++seen;
    const double ca = cosine(s.features, ds.prototypes[s.label]);
    const double cb = cosine(s.features, ds.prototypes[s.mix_partner]);
    CHECK(std::fabs(ca - cb) < 1e-6);
  }
  CHECK(seen > 0);
}

TEST_CASE("mix weight at or below one half is rejected when ambiguity is on") {
  SynthConfig cfg;
  cfg.ambiguity_fraction = 0.2;
  cfg.ambiguity_mix = 0.5;
  CHECK_THROWS_AS(generate_dataset(cfg), std::invalid_argument);
  cfg.ambiguity_mix = 0.4;
  CHECK_THROWS_AS(generate_dataset(cfg), std::invalid_argument);
  cfg.ambiguity_fraction = 0.0;  // without ambiguity the weight is unused
  const Dataset ds = generate_dataset(cfg);
  CHECK(ds.train.size() + ds.val.size() + ds.test.size() ==
        static_cast<std::size_t>(cfg.num_classes * cfg.samples_per_class));
}

TEST_CASE("default config accuracy: clean above 99 percent, ambiguous below 90") {
  const SynthConfig cfg;  // defaults: K=10, dim=64, sigma=0.1, 10% ambiguous, 0.6 mix
  const Dataset ds = generate_dataset(cfg);
  int clean_total = 0, clean_hit = 0, amb_total = 0, amb_hit = 0;
  for (const auto* split : {&ds.train, &ds.val, &ds.test}) {
    for (const Sample& s : *split) {
      const bool hit = nearest_prototype(s, ds.prototypes) == s.label;
      if (s.ambiguous) {
        ++amb_total;
        amb_hit += hit;
      } else {
        ++clean_total;
        clean_hit += hit;
      }
    }
  }
  CHECK(static_cast<double>(clean_hit) / clean_total > 0.99);
  CHECK(static_cast<double>(amb_hit) / amb_total < 0.90);
}

TEST_CASE("label balance: every class holds exactly samples_per_class samples") {
  SynthConfig cfg;
  cfg.num_classes = 7;
  cfg.samples_per_class = 30;
  const Dataset ds = generate_dataset(cfg);
  std::map<int, int> counts;
  for (const auto* split : {&ds.train, &ds.val, &ds.test})
    for (const Sample& s : *split) counts[s.label]++;
  CHECK(counts.size() == 7);
  for (const auto& [label, count] : counts) CHECK(count == 30);
  // 70/10/20 split of 30 per class: 21 train, 3 val, 6 test
  CHECK(ds.train.size() == 7 * 21);
  CHECK(ds.val.size() == 7 * 3);
  CHECK(ds.test.size() == 7 * 6);
}

TEST_CASE("ambiguous flag always carries a mix partner and a dominant label") {
  SynthConfig cfg;
  cfg.ambiguity_fraction = 0.3;
  const Dataset ds = generate_dataset(cfg);
  for (const auto* split : {&ds.train, &ds.val, &ds.test})
    for (const Sample& s : *split) {
      CHECK(s.ambiguous == (s.mix_partner >= 0));
      if (s.ambiguous) CHECK(s.mix_partner != s.label);
    }
}

TEST_CASE("augment: severity zero is the identity for every kind") {
  SynthConfig cfg;
  const Dataset ds = generate_dataset(cfg);
  const Sample& s = ds.train.front();
  for (int k = 0; k < kNumAugKinds; ++k) {
    SeededRng rng(5);
    const auto out = augment(s, {static_cast<AugKind>(k), 0.0}, rng);
    CHECK(out == s.features);
  }
}

TEST_CASE("mask at severity 1 zeroes exactly floor(0.95 * 64) = 60 coordinates") {
  SynthConfig cfg;
  cfg.noise_scale = 0.0;  // prototypes have no exact zeros to confuse the count
  const Dataset ds = generate_dataset(cfg);
  const Sample& s = ds.train.front();
  SeededRng rng(6);
  const auto out = augment(s, {AugKind::kMask, 1.0}, rng);
  int zeros = 0;
  for (double v : out) zeros += (v == 0.0);
  CHECK(zeros == 60);
}

TEST_CASE("augment preserves dimension and finiteness across kinds") {
  SynthConfig cfg;
  const Dataset ds = generate_dataset(cfg);
  SeededRng rng(7);
  for (const Sample& s : ds.val)
    for (int k = 0; k < kNumAugKinds; ++k) {
      const auto out = augment(s, {static_cast<AugKind>(k), rng.uniform(0.0, 1.0)}, rng);
      CHECK(out.size() == s.features.size());
      for (double v : out) CHECK(std::isfinite(v));
    }
}

TEST_CASE("augment determinism for a fixed (sample, spec, seed)") {
  SynthConfig cfg;
  const Dataset ds = generate_dataset(cfg);
  const Sample& s = ds.train[3];
  const AugmentationSpec spec{AugKind::kMask, 0.7};
  SeededRng a(123), b(123);
  CHECK(augment(s, spec, a) == augment(s, spec, b));
}

TEST_CASE("make_viewset policies: M=2 standard only, M=8 adds 6 heavy masks") {
  SynthConfig cfg;
  const Dataset ds = generate_dataset(cfg);
  const ViewPolicy policy{};
  SeededRng rng(9);
  const ViewSet two = make_viewset(ds.train[0], 2, policy, rng);
  CHECK(two.views.size() == 2);
  for (const auto& spec : two.specs) CHECK(spec.severity <= 0.5);

  SeededRng rng2(9);
  const ViewSet eight = make_viewset(ds.train[0], 8, policy, rng2);
  CHECK(eight.views.size() == 8);
  int heavy = 0;
  for (int v = 2; v < 8; ++v) {
    CHECK(eight.specs[v].kind == AugKind::kMask);
    CHECK(eight.specs[v].severity >= 0.6);
    CHECK(eight.specs[v].severity <= 0.95);
    ++heavy;
  }
  CHECK(heavy == 6);

  SeededRng rng3(9), rng4(9);
  const ViewSet r1 = make_viewset(ds.train[1], 4, policy, rng3);
  const ViewSet r2 = make_viewset(ds.train[1], 4, policy, rng4);
  CHECK(r1.views == r2.views);
}

TEST_CASE("dataset files are byte-identical across regenerations") {
  SynthConfig cfg;
  cfg.num_classes = 4;
  cfg.samples_per_class = 15;
  const fs::path dir1 = fs::temp_directory_path() / "visim_ds_a";
  const fs::path dir2 = fs::temp_directory_path() / "visim_ds_b";
  fs::remove_all(dir1);
  fs::remove_all(dir2);
  save_dataset(generate_dataset(cfg), dir1);
  save_dataset(generate_dataset(cfg), dir2);
  for (const char* name : {"train.bin", "val.bin", "test.bin", "dataset.csv"})
    CHECK(read_file(dir1 / name) == read_file(dir2 / name));

  // round trip
  const Dataset loaded = load_dataset(dir1);
  const Dataset original = generate_dataset(cfg);
  CHECK(loaded.config.num_classes == cfg.num_classes);
  CHECK(loaded.train.size() == original.train.size());
  for (std::size_t i = 0; i < loaded.train.size(); ++i) {
    CHECK(loaded.train[i].features == original.train[i].features);
    CHECK(loaded.train[i].label == original.train[i].label);
    CHECK(loaded.train[i].ambiguous == original.train[i].ambiguous);
  }
  fs::remove_all(dir1);
  fs::remove_all(dir2);
}
