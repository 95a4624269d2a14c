#include "visim/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "visim/rng.hpp"
#include "visim/version.hpp"

namespace visim {

namespace {

std::vector<double> kaiming_uniform(int fan_in, int fan_out, SeededRng& rng) {
  const double bound = std::sqrt(6.0 / fan_in);
  std::vector<double> w(static_cast<std::size_t>(fan_in) * fan_out);
  for (double& v : w) v = rng.uniform(-bound, bound);
  return w;
}

double softplus_inverse(double y) { return std::log(std::expm1(y)); }

}  // namespace

void EncoderConfig::validate() const {
  if (latent_dim < 2) throw std::invalid_argument("EncoderConfig: latent_dim must be >= 2");
  if (input_dim < 1) throw std::invalid_argument("EncoderConfig: input_dim must be positive");
  for (int h : hidden_dims)
    if (h < 1) throw std::invalid_argument("EncoderConfig: hidden dims must be positive");
  if (predictor_hidden < 1)
    throw std::invalid_argument("EncoderConfig: predictor_hidden must be positive");
  if (!(kappa_min > 0.0) || !(kappa_max > kappa_min))
    throw std::invalid_argument("EncoderConfig: need 0 < kappa_min < kappa_max");
  if (!(kappa_init > 0.0) || kappa_init > kappa_max)
    throw std::invalid_argument("EncoderConfig: kappa_init outside (0, kappa_max]");
}

void to_json(nlohmann::json& j, const EncoderConfig& c) {
  j = nlohmann::json{{"input_dim", c.input_dim},
                     {"hidden_dims", c.hidden_dims},
                     {"latent_dim", c.latent_dim},
                     {"use_batch_standardize", c.use_batch_standardize},
                     {"predictor_hidden", c.predictor_hidden},
                     {"kappa_min", c.kappa_min},
                     {"kappa_max", c.kappa_max},
                     {"kappa_init", c.kappa_init}};
}

void from_json(const nlohmann::json& j, EncoderConfig& c) {
  c = EncoderConfig{};
  if (j.contains("input_dim")) j.at("input_dim").get_to(c.input_dim);
  if (j.contains("hidden_dims")) j.at("hidden_dims").get_to(c.hidden_dims);
  if (j.contains("latent_dim")) j.at("latent_dim").get_to(c.latent_dim);
  if (j.contains("use_batch_standardize"))
    j.at("use_batch_standardize").get_to(c.use_batch_standardize);
  if (j.contains("predictor_hidden")) j.at("predictor_hidden").get_to(c.predictor_hidden);
  if (j.contains("kappa_min")) j.at("kappa_min").get_to(c.kappa_min);
  if (j.contains("kappa_max")) j.at("kappa_max").get_to(c.kappa_max);
  if (j.contains("kappa_init")) j.at("kappa_init").get_to(c.kappa_init);
}

Model Model::init(const EncoderConfig& config, std::uint64_t seed) {
  config.validate();
  Model m;
  m.config_ = config;
  m.init_seed_ = seed;
  SeededRng rng(seed);

  // Parameters are created in fixed layer order; each layer owns a split
  // stream so the draw sequence is independent of map iteration.
  int stream = 0;
  int in = config.input_dim;
  for (std::size_t l = 0; l < config.hidden_dims.size(); ++l) {
    const int out = config.hidden_dims[l];
    SeededRng layer_rng = rng.split(stream++);
    const std::string base = "enc.h" + std::to_string(l);
    m.params_.emplace(base + ".w",
                      ad::Tensor({in, out}, kaiming_uniform(in, out, layer_rng)));
    m.params_.emplace(base + ".b", ad::Tensor::zeros({1, out}));
    if (config.use_batch_standardize) {
      m.buffers_.emplace(base + ".bn_mean", std::vector<double>(out, 0.0));
      m.buffers_.emplace(base + ".bn_var", std::vector<double>(out, 1.0));
    }
    in = out;
  }
  {
    SeededRng layer_rng = rng.split(stream++);
    m.params_.emplace("enc.out.w", ad::Tensor({in, config.latent_dim},
                                              kaiming_uniform(in, config.latent_dim, layer_rng)));
    m.params_.emplace("enc.out.b", ad::Tensor::zeros({1, config.latent_dim}));
  }
  {
    SeededRng layer_rng = rng.split(stream++);
    const int d = config.latent_dim, h = config.predictor_hidden;
    m.params_.emplace("pred.h.w", ad::Tensor({d, h}, kaiming_uniform(d, h, layer_rng)));
    m.params_.emplace("pred.h.b", ad::Tensor::zeros({1, h}));
    if (config.use_batch_standardize) {
      m.buffers_.emplace("pred.h.bn_mean", std::vector<double>(h, 0.0));
      m.buffers_.emplace("pred.h.bn_var", std::vector<double>(h, 1.0));
    }
    SeededRng out_rng = rng.split(stream++);
    m.params_.emplace("pred.out.w",
                      ad::Tensor({h, d + 1}, kaiming_uniform(h, d + 1, out_rng)));
    m.params_.emplace("pred.out.bias_mu", ad::Tensor::zeros({1, d}));
    m.params_.emplace("pred.out.bias_kappa",
                      ad::Tensor({1, 1}, {softplus_inverse(config.kappa_init)}));
  }
  return m;
}

Model::Pass Model::begin_pass(ad::Tape& tape, bool training, bool track) {
  Pass pass;
  pass.tape = &tape;
  pass.training = training;
  pass.track = track;
  if (track) {
    for (auto& [name, tensor] : params_) pass.bound.emplace(name, tape.leaf(tensor));
  }
  return pass;
}

namespace {

const ad::Tensor& pick(const Model::Pass& pass,
                       const std::map<std::string, ad::Tensor>& raw,
                       const std::string& name) {
  if (pass.track) return pass.bound.at(name);
  auto it = raw.find(name);
  if (it == raw.end()) throw std::logic_error("Model: unknown parameter " + name);
  return it->second;
}

}  // namespace

ad::Tensor Model::encode(Pass& pass, const ad::Tensor& batch) {
  if (batch.cols() != config_.input_dim)
    throw std::invalid_argument("encode: batch has " + std::to_string(batch.cols()) +
                                " columns, expected " + std::to_string(config_.input_dim));
  ad::Tape& tape = *pass.tape;
  ad::Tensor x = batch;
  for (std::size_t l = 0; l < config_.hidden_dims.size(); ++l) {
    const std::string base = "enc.h" + std::to_string(l);
    x = tape.matmul(x, pick(pass, params_, base + ".w"));
    x = tape.add_rowvec(x, pick(pass, params_, base + ".b"));
    if (config_.use_batch_standardize) {
      x = tape.batch_standardize(x, buffers_.at(base + ".bn_mean"),
                                 buffers_.at(base + ".bn_var"), pass.training);
    }
    x = tape.relu(x);
  }
  x = tape.matmul(x, pick(pass, params_, "enc.out.w"));
  x = tape.add_rowvec(x, pick(pass, params_, "enc.out.b"));
  return tape.l2_normalize_rows(x);
}

PredictorOutput Model::predict(Pass& pass, const ad::Tensor& latent) {
  if (latent.cols() != config_.latent_dim)
    throw std::invalid_argument("predict: latent has " + std::to_string(latent.cols()) +
                                " columns, expected " + std::to_string(config_.latent_dim));
  ad::Tape& tape = *pass.tape;
  const int d = config_.latent_dim;

  ad::Tensor h = tape.matmul(latent, pick(pass, params_, "pred.h.w"));
  h = tape.add_rowvec(h, pick(pass, params_, "pred.h.b"));
  if (config_.use_batch_standardize) {
    h = tape.batch_standardize(h, buffers_.at("pred.h.bn_mean"),
                               buffers_.at("pred.h.bn_var"), pass.training);
  }
  h = tape.relu(h);
  ad::Tensor out = tape.matmul(h, pick(pass, params_, "pred.out.w"));

  ad::Tensor mu = tape.slice_cols(out, 0, d);
  mu = tape.add_rowvec(mu, pick(pass, params_, "pred.out.bias_mu"));
  mu = tape.l2_normalize_rows(mu);

  ad::Tensor pre_kappa = tape.slice_cols(out, d, d + 1);
  // bias_kappa is [1 x 1]; the row-vector add broadcasts it down the batch.
  pre_kappa = tape.add_rowvec(pre_kappa, pick(pass, params_, "pred.out.bias_kappa"));
  ad::Tensor kappa = tape.softplus(pre_kappa);
  kappa = tape.clamp_min(kappa, config_.kappa_min);
  // clamp_max(x, hi) = -clamp_min(-x, -hi)
  kappa = tape.scale(tape.clamp_min(tape.scale(kappa, -1.0), -config_.kappa_max), -1.0);
  return PredictorOutput{std::move(mu), std::move(kappa)};
}

Model Model::clone() const {
  Model m;
  m.config_ = config_;
  m.init_seed_ = init_seed_;
  for (const auto& [name, tensor] : params_)
    m.params_.emplace(name, ad::Tensor(tensor.shape(), tensor.data()));
  m.buffers_ = buffers_;
  return m;
}

void Model::save_checkpoint(const std::filesystem::path& path,
                            const nlohmann::json& extra) const {
  nlohmann::json header;
  header["format"] = kCheckpointFormatTag;
  header["tool_version"] = kToolVersion;
  header["config"] = config_;
  header["init_seed"] = init_seed_;
  if (!extra.is_null()) header["extra"] = extra;
  nlohmann::json arrays = nlohmann::json::array();
  for (const auto& [name, tensor] : params_) {
    arrays.push_back({{"name", name},
                      {"kind", "param"},
                      {"rows", tensor.rows()},
                      {"cols", tensor.cols()}});
  }
  for (const auto& [name, buf] : buffers_) {
    arrays.push_back({{"name", name},
                      {"kind", "buffer"},
                      {"rows", 1},
                      {"cols", static_cast<std::int64_t>(buf.size())}});
  }
  header["arrays"] = arrays;

  const std::string header_str = header.dump();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path.string());
  out.write("VISIMCKPT\n", 10);
  const std::uint32_t len = static_cast<std::uint32_t>(header_str.size());
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(header_str.data(), header_str.size());
  for (const auto& [name, tensor] : params_) {
    out.write(reinterpret_cast<const char*>(tensor.data().data()),
              tensor.numel() * sizeof(double));
  }
  for (const auto& [name, buf] : buffers_) {
    out.write(reinterpret_cast<const char*>(buf.data()), buf.size() * sizeof(double));
  }
  if (!out) throw std::runtime_error("save_checkpoint: write failed for " + path.string());
}

Model Model::load_checkpoint(const std::filesystem::path& path,
                             nlohmann::json* header_out) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path.string());
  char magic[10];
  in.read(magic, 10);
  if (!in || std::memcmp(magic, "VISIMCKPT\n", 10) != 0)
    throw std::runtime_error("load_checkpoint: bad magic in " + path.string());
  std::uint32_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  std::string header_str(len, '\0');
  in.read(header_str.data(), len);
  if (!in) throw std::runtime_error("load_checkpoint: truncated header in " + path.string());
  nlohmann::json header = nlohmann::json::parse(header_str);
  if (header.value("format", "") != kCheckpointFormatTag)
    throw std::runtime_error("load_checkpoint: unsupported format tag '" +
                             header.value("format", "") + "'");

  Model m;
  m.config_ = header.at("config").get<EncoderConfig>();
  m.init_seed_ = header.at("init_seed").get<std::uint64_t>();
  for (const auto& entry : header.at("arrays")) {
    const std::string name = entry.at("name").get<std::string>();
    const std::int64_t rows = entry.at("rows").get<std::int64_t>();
    const std::int64_t cols = entry.at("cols").get<std::int64_t>();
    std::vector<double> data(static_cast<std::size_t>(rows * cols));
    in.read(reinterpret_cast<char*>(data.data()), rows * cols * sizeof(double));
    if (!in) throw std::runtime_error("load_checkpoint: truncated payload in " + path.string());
    if (entry.at("kind") == "param") {
      m.params_.emplace(name, ad::Tensor({rows, cols}, std::move(data)));
    } else {
      m.buffers_.emplace(name, std::move(data));
    }
  }
  if (header_out) *header_out = std::move(header);
  return m;
}

}  // namespace visim
