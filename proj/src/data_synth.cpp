#include "visim/data_synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace visim {

namespace {

constexpr int kNumBlocks = 8;
constexpr double kNoiseAugScale = 0.5;
constexpr double kMaskMaxFraction = 0.95;

// Stream ids for seed splitting; generation must be reproducible per sample.
enum Stream : std::uint64_t { kProtoStream = 1, kSampleStream = 2, kSplitStream = 3 };

std::vector<double> unit_gaussian_direction(int dim, SeededRng& rng) {
  std::vector<double> v(dim);
  double sq = 0.0;
  for (double& x : v) {
    x = rng.normal();
    sq += x * x;
  }
  const double inv = 1.0 / std::sqrt(sq);
  for (double& x : v) x *= inv;
  return v;
}

void shuffle_indices(std::vector<int>& idx, SeededRng& rng) {
  for (std::size_t i = idx.size(); i > 1; --i) {
    const std::size_t j = rng.uniform_index(i);
    std::swap(idx[i - 1], idx[j]);
  }
}

}  // namespace

void SynthConfig::validate() const {
  if (num_classes < 2) throw std::invalid_argument("SynthConfig: need at least 2 classes");
  if (input_dim < 2) throw std::invalid_argument("SynthConfig: input_dim must be >= 2");
  if (samples_per_class < 1)
    throw std::invalid_argument("SynthConfig: samples_per_class must be positive");
  if (ambiguity_fraction < 0.0 || ambiguity_fraction > 1.0)
    throw std::invalid_argument("SynthConfig: ambiguity_fraction must be in [0, 1]");
  if (ambiguity_fraction > 0.0 && !(ambiguity_mix > 0.5 && ambiguity_mix <= 1.0))
    throw std::invalid_argument(
        "SynthConfig: ambiguity_mix must be in (0.5, 1] so labels follow the dominant prototype");
  if (noise_scale < 0.0)
    throw std::invalid_argument("SynthConfig: noise_scale must be non-negative");
}

void to_json(nlohmann::json& j, const SynthConfig& c) {
  j = nlohmann::json{{"num_classes", c.num_classes},
                     {"input_dim", c.input_dim},
                     {"samples_per_class", c.samples_per_class},
                     {"ambiguity_fraction", c.ambiguity_fraction},
                     {"ambiguity_mix", c.ambiguity_mix},
                     {"noise_scale", c.noise_scale},
                     {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, SynthConfig& c) {
  c = SynthConfig{};
  if (j.contains("num_classes")) j.at("num_classes").get_to(c.num_classes);
  if (j.contains("input_dim")) j.at("input_dim").get_to(c.input_dim);
  if (j.contains("samples_per_class")) j.at("samples_per_class").get_to(c.samples_per_class);
  if (j.contains("ambiguity_fraction")) j.at("ambiguity_fraction").get_to(c.ambiguity_fraction);
  if (j.contains("ambiguity_mix")) j.at("ambiguity_mix").get_to(c.ambiguity_mix);
  if (j.contains("noise_scale")) j.at("noise_scale").get_to(c.noise_scale);
  if (j.contains("seed")) j.at("seed").get_to(c.seed);
}

const char* aug_kind_name(AugKind kind) {
  switch (kind) {
    case AugKind::kNoise: return "noise";
    case AugKind::kScaleJitter: return "scale-jitter";
    case AugKind::kCoordinateFlip: return "coordinate-flip";
    case AugKind::kChannelDrop: return "channel-drop";
    case AugKind::kMask: return "mask";
  }
  return "unknown";
}

const std::vector<Sample>& Dataset::split(Split s) const {
  switch (s) {
    case Split::kTrain: return train;
    case Split::kVal: return val;
    case Split::kTest: return test;
  }
  throw std::logic_error("Dataset::split: bad split");
}

const char* Dataset::split_name(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "unknown";
}

Dataset generate_dataset(const SynthConfig& config) {
  config.validate();
  Dataset ds;
  ds.config = config;
  SeededRng root(config.seed);

  // Prototypes: rejection-sample unit directions until pairwise cosine < 0.5.
  SeededRng proto_rng = root.split(kProtoStream);
  int rejections = 0;
  while (static_cast<int>(ds.prototypes.size()) < config.num_classes) {
    std::vector<double> cand = unit_gaussian_direction(config.input_dim, proto_rng);
    bool ok = true;
    for (const auto& p : ds.prototypes) {
      double dot = 0.0;
      for (int i = 0; i < config.input_dim; ++i) dot += cand[i] * p[i];
      if (dot >= 0.5) {
        ok = false;
        break;
      }
    }
    if (ok) {
      ds.prototypes.push_back(std::move(cand));
    } else if (++rejections > 10000) {
      throw std::invalid_argument(
          "generate_dataset: cannot place this many classes at pairwise cosine < 0.5 "
          "in the given input_dim");
    }
  }

  const int spc = config.samples_per_class;
  const int num_ambiguous = static_cast<int>(config.ambiguity_fraction * spc);
  std::vector<Sample> all;
  all.reserve(static_cast<std::size_t>(config.num_classes) * spc);

  for (int c = 0; c < config.num_classes; ++c) {
    for (int k = 0; k < spc; ++k) {
      SeededRng srng = root.split(kSampleStream)
                           .split(static_cast<std::uint64_t>(c) * spc + k);
      Sample sample;
      sample.label = c;
      if (k < num_ambiguous) {
        sample.ambiguous = true;
        int partner = static_cast<int>(srng.uniform_index(config.num_classes - 1));
        if (partner >= c) ++partner;
        sample.mix_partner = partner;
        const double lambda = config.ambiguity_mix;
        std::vector<double> dir(config.input_dim);
        double sq = 0.0;
        for (int i = 0; i < config.input_dim; ++i) {
          dir[i] = lambda * ds.prototypes[c][i] + (1.0 - lambda) * ds.prototypes[partner][i];
          sq += dir[i] * dir[i];
        }
        const double inv = 1.0 / std::sqrt(sq);
        sample.features.resize(config.input_dim);
        for (int i = 0; i < config.input_dim; ++i)
          sample.features[i] = dir[i] * inv + config.noise_scale * srng.normal();
      } else {
        sample.features.resize(config.input_dim);
        for (int i = 0; i < config.input_dim; ++i)
          sample.features[i] = ds.prototypes[c][i] + config.noise_scale * srng.normal();
      }
      all.push_back(std::move(sample));
    }
  }

  // Stratified deterministic 70/10/20 split.
  for (int c = 0; c < config.num_classes; ++c) {
    std::vector<int> idx(spc);
    std::iota(idx.begin(), idx.end(), c * spc);
    SeededRng split_rng = root.split(kSplitStream).split(c);
    shuffle_indices(idx, split_rng);
    const int n_train = static_cast<int>(0.7 * spc);
    const int n_val = static_cast<int>(0.1 * spc);
    for (int i = 0; i < spc; ++i) {
      if (i < n_train) {
        ds.train.push_back(all[idx[i]]);
      } else if (i < n_train + n_val) {
        ds.val.push_back(all[idx[i]]);
      } else {
        ds.test.push_back(all[idx[i]]);
      }
    }
  }
  return ds;
}

std::vector<double> augment(const Sample& sample, const AugmentationSpec& spec,
                            SeededRng& rng) {
  std::vector<double> x = sample.features;
  const int dim = static_cast<int>(x.size());
  const double sev = spec.severity;
  if (sev < 0.0 || sev > 1.0)
    throw std::invalid_argument("augment: severity must be in [0, 1]");
  if (sev == 0.0) return x;

  const int block_len = (dim + kNumBlocks - 1) / kNumBlocks;
  switch (spec.kind) {
    case AugKind::kNoise: {
      for (double& v : x) v += sev * kNoiseAugScale * rng.normal();
      break;
    }
    case AugKind::kScaleJitter: {
      for (int b = 0; b < kNumBlocks; ++b) {
        const double factor = rng.uniform(1.0 - sev, 1.0 + sev);
        const int lo = b * block_len;
        const int hi = std::min(dim, lo + block_len);
        for (int i = lo; i < hi; ++i) x[i] *= factor;
      }
      break;
    }
    case AugKind::kCoordinateFlip: {
      // fixed involution i <-> dim-1-i on the first severity-fraction pairs
      const int pairs = static_cast<int>(sev * (dim / 2));
      for (int i = 0; i < pairs; ++i) std::swap(x[i], x[dim - 1 - i]);
      break;
    }
    case AugKind::kChannelDrop: {
      // the last block plays the dropped channel
      const int lo = (kNumBlocks - 1) * block_len;
      for (int i = lo; i < dim; ++i) x[i] = 0.0;
      break;
    }
    case AugKind::kMask: {
      const int masked = static_cast<int>(sev * kMaskMaxFraction * dim);
      if (masked > 0) {
        const int start = static_cast<int>(rng.uniform_index(dim - masked + 1));
        for (int i = start; i < start + masked; ++i) x[i] = 0.0;
      }
      break;
    }
  }
  return x;
}

ViewSet make_viewset(const Sample& sample, int num_views, const ViewPolicy& policy,
                     SeededRng& rng) {
  if (num_views < 2) throw std::invalid_argument("make_viewset: need at least 2 views");
  ViewSet vs;
  vs.views.reserve(num_views);
  vs.specs.reserve(num_views);
  const int standard = std::min(policy.num_standard, num_views);
  for (int v = 0; v < num_views; ++v) {
    AugmentationSpec spec;
    if (v < standard) {
      spec.kind = static_cast<AugKind>(rng.uniform_index(kNumAugKinds));
      spec.severity = rng.uniform(0.0, policy.standard_severity_max);
    } else {
      spec.kind = AugKind::kMask;
      spec.severity = rng.uniform(policy.heavy_mask_min, policy.heavy_mask_max);
    }
    vs.views.push_back(augment(sample, spec, rng));
    vs.specs.push_back(spec);
  }
  return vs;
}

namespace {

void save_split(const Dataset& ds, Dataset::Split split,
                const std::filesystem::path& path) {
  const std::vector<Sample>& samples = ds.split(split);
  nlohmann::json header;
  header["format"] = "visim-data-v1";
  header["split"] = Dataset::split_name(split);
  header["config"] = ds.config;
  header["count"] = samples.size();
  header["dim"] = ds.config.input_dim;
  header["num_prototypes"] = ds.prototypes.size();
  const std::string header_str = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("save_dataset: cannot open " + path.string());
  out.write("VISIMDATA\n", 10);
  const std::uint32_t len = static_cast<std::uint32_t>(header_str.size());
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(header_str.data(), header_str.size());
  for (const auto& proto : ds.prototypes)
    out.write(reinterpret_cast<const char*>(proto.data()), proto.size() * sizeof(double));
  for (const Sample& s : samples)
    out.write(reinterpret_cast<const char*>(s.features.data()),
              s.features.size() * sizeof(double));
  for (const Sample& s : samples) {
    const std::int32_t label = s.label;
    out.write(reinterpret_cast<const char*>(&label), sizeof(label));
  }
  for (const Sample& s : samples) {
    const std::uint8_t flag = s.ambiguous ? 1 : 0;
    out.write(reinterpret_cast<const char*>(&flag), sizeof(flag));
  }
  for (const Sample& s : samples) {
    const std::int32_t partner = s.mix_partner;
    out.write(reinterpret_cast<const char*>(&partner), sizeof(partner));
  }
  if (!out) throw std::runtime_error("save_dataset: write failed for " + path.string());
}

std::vector<Sample> load_split(const std::filesystem::path& path, SynthConfig* config_out,
                               std::vector<std::vector<double>>* prototypes_out) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_dataset: cannot open " + path.string());
  char magic[10];
  in.read(magic, 10);
  if (!in || std::memcmp(magic, "VISIMDATA\n", 10) != 0)
    throw std::runtime_error("load_dataset: bad magic in " + path.string());
  std::uint32_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  std::string header_str(len, '\0');
  in.read(header_str.data(), len);
  nlohmann::json header = nlohmann::json::parse(header_str);
  if (header.value("format", "") != "visim-data-v1")
    throw std::runtime_error("load_dataset: unsupported format in " + path.string());
  const SynthConfig config = header.at("config").get<SynthConfig>();
  const std::size_t count = header.at("count").get<std::size_t>();
  const int dim = header.at("dim").get<int>();
  const std::size_t num_protos = header.at("num_prototypes").get<std::size_t>();

  std::vector<std::vector<double>> protos(num_protos, std::vector<double>(dim));
  for (auto& p : protos)
    in.read(reinterpret_cast<char*>(p.data()), dim * sizeof(double));

  std::vector<Sample> samples(count);
  for (Sample& s : samples) {
    s.features.resize(dim);
    in.read(reinterpret_cast<char*>(s.features.data()), dim * sizeof(double));
  }
  for (Sample& s : samples) {
    std::int32_t label = 0;
    in.read(reinterpret_cast<char*>(&label), sizeof(label));
    s.label = label;
  }
  for (Sample& s : samples) {
    std::uint8_t flag = 0;
    in.read(reinterpret_cast<char*>(&flag), sizeof(flag));
    s.ambiguous = flag != 0;
  }
  for (Sample& s : samples) {
    std::int32_t partner = -1;
    in.read(reinterpret_cast<char*>(&partner), sizeof(partner));
    s.mix_partner = partner;
  }
  if (!in) throw std::runtime_error("load_dataset: truncated file " + path.string());
  if (config_out) *config_out = config;
  if (prototypes_out) *prototypes_out = std::move(protos);
  return samples;
}

}  // namespace

void save_dataset(const Dataset& dataset, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_split(dataset, Dataset::Split::kTrain, dir / "train.bin");
  save_split(dataset, Dataset::Split::kVal, dir / "val.bin");
  save_split(dataset, Dataset::Split::kTest, dir / "test.bin");

  std::ofstream csv(dir / "dataset.csv", std::ios::trunc);
  if (!csv) throw std::runtime_error("save_dataset: cannot open dataset.csv");
  csv << "split,index,label,ambiguous,mix_partner";
  for (int i = 0; i < dataset.config.input_dim; ++i) csv << ",f" << i;
  csv << "\n";
  char buf[32];
  for (Dataset::Split split : {Dataset::Split::kTrain, Dataset::Split::kVal,
                               Dataset::Split::kTest}) {
    const auto& samples = dataset.split(split);
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const Sample& s = samples[i];
      csv << Dataset::split_name(split) << ',' << i << ',' << s.label << ','
          << (s.ambiguous ? 1 : 0) << ',' << s.mix_partner;
      for (double v : s.features) {
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        csv << ',' << buf;
      }
      csv << "\n";
    }
  }
}

Dataset load_dataset(const std::filesystem::path& dir) {
  Dataset ds;
  ds.train = load_split(dir / "train.bin", &ds.config, &ds.prototypes);
  ds.val = load_split(dir / "val.bin", nullptr, nullptr);
  ds.test = load_split(dir / "test.bin", nullptr, nullptr);
  return ds;
}

}  // namespace visim
