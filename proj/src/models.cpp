#include "capsid/models.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <utility>

#include <json.hpp>

#include "capsid/checkpoint.hpp"
#include "capsid/errors.hpp"

namespace capsid {

namespace {

std::string num(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

std::string joined(const std::vector<std::string>& parts) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += "; ";
    out += parts[i];
  }
  return out;
}

void loss_violations(const LossConfig& c, std::vector<std::string>& out) {
  if (!(c.m_plus > 0.0 && c.m_plus <= 1.0))
    out.push_back("m_plus must be in (0, 1], got " + num(c.m_plus));
  if (!(c.m_minus >= 0.0 && c.m_minus < 1.0))
    out.push_back("m_minus must be in [0, 1), got " + num(c.m_minus));
  if (!(c.m_minus < c.m_plus))
    out.push_back("m_minus (" + num(c.m_minus) + ") must be below m_plus (" +
                  num(c.m_plus) + ")");
  if (!(c.lambda >= 0.0))
    out.push_back("lambda must be non-negative, got " + num(c.lambda));
  if (!(c.alpha >= 0.0))
    out.push_back("alpha must be non-negative, got " + num(c.alpha));
}

std::size_t conv1_kernel(Architecture a) {
  switch (a) {
    case Architecture::kCapsNetM: return 15;
    case Architecture::kCaps9: return 9;
    case Architecture::kCaps15: return 15;
    case Architecture::kCaps19: return 19;
    case Architecture::kBaselineCnn: break;
  }
  throw ContractError("no capsule conv stack for baseline_cnn");
}

// Walks the capsule conv chain for the given frame count. Returns false as
// soon as any output dimension would collapse below one.
bool caps_dims(const ModelConfig& cfg, std::size_t frames, CapsGeometry* out) {
  const bool two_convs = cfg.architecture == Architecture::kCapsNetM;
  const std::size_t k1 = conv1_kernel(cfg.architecture);
  const std::size_t kh1 =
      cfg.conv1_kernel_height ? cfg.conv1_kernel_height : k1;
  const std::size_t sw1 = two_convs ? 5 : 1;
  if (cfg.input_rows < kh1 || frames < k1) return false;
  std::size_t h = cfg.input_rows - kh1 + 1;
  std::size_t w = (frames - k1) / sw1 + 1;
  CapsGeometry geo;
  geo.conv1_h = h;
  geo.conv1_w = w;
  if (two_convs) {
    if (h < 13 || w < 13) return false;
    h -= 12;
    w -= 12;
  }
  geo.conv2_h = h;
  geo.conv2_w = w;
  const std::size_t kp = two_convs ? 11 : 9;
  if (h < kp || w < kp) return false;
  geo.primary_h = (h - kp) / 2 + 1;
  geo.primary_w = (w - kp) / 2 + 1;
  geo.n_capsule_maps = 256 / 8;
  geo.n_capsules = geo.n_capsule_maps * geo.primary_h * geo.primary_w;
  if (out) *out = geo;
  return true;
}

bool cnn_frames_ok(std::size_t frames) {
  if (frames < 13) return false;
  std::size_t w = frames - 12;
  w /= 2;
  if (w < 11) return false;
  w -= 10;
  w /= 2;
  if (w < 5) return false;
  w = (w - 5) / 2 + 1;
  w /= 2;
  if (w < 3) return false;
  return w - 2 >= 1;
}

TensorPtr zeros_param(std::vector<std::size_t> shape, const char* name,
                      bool grad = true) {
  return make_tensor(std::move(shape), grad, name);
}

TensorPtr ones_param(std::vector<std::size_t> shape, const char* name,
                     bool grad = true) {
  auto t = make_tensor(std::move(shape), grad, name);
  std::fill(t->value.begin(), t->value.end(), 1.0);
  return t;
}

TensorPtr glorot_conv(Rng& rng, std::size_t co, std::size_t ci, std::size_t kh,
                      std::size_t kw, const char* name) {
  auto t = make_tensor({co, ci, kh, kw}, true, name);
  const double lim =
      std::sqrt(6.0 / (static_cast<double>(ci * kh * kw) +
                       static_cast<double>(co * kh * kw)));
  for (auto& v : t->value) v = rng.uniform(-lim, lim);
  return t;
}

TensorPtr glorot_dense(Rng& rng, std::size_t out, std::size_t in,
                       const char* name) {
  auto t = make_tensor({out, in}, true, name);
  const double lim = std::sqrt(6.0 / static_cast<double>(in + out));
  for (auto& v : t->value) v = rng.uniform(-lim, lim);
  return t;
}

TensorPtr gaussian_param(Rng& rng, std::vector<std::size_t> shape, double scale,
                         const char* name) {
  auto t = make_tensor(std::move(shape), true, name);
  for (auto& v : t->value) v = rng.next_gaussian() * scale;
  return t;
}

const TensorPtr& find_tensor(const std::vector<TensorPtr>& pool,
                             const char* name) {
  for (const auto& t : pool)
    if (t->name == name) return t;
  throw ContractError(std::string("model tensor '") + name + "' is missing");
}

}  // namespace

const char* architecture_name(Architecture a) {
  switch (a) {
    case Architecture::kCapsNetM: return "capsnet_m";
    case Architecture::kCaps9: return "caps9";
    case Architecture::kCaps15: return "caps15";
    case Architecture::kCaps19: return "caps19";
    case Architecture::kBaselineCnn: return "baseline_cnn";
  }
  throw ContractError("unknown architecture value");
}

Architecture architecture_from_name(const std::string& name) {
  if (name == "capsnet_m") return Architecture::kCapsNetM;
  if (name == "caps9") return Architecture::kCaps9;
  if (name == "caps15") return Architecture::kCaps15;
  if (name == "caps19") return Architecture::kCaps19;
  if (name == "baseline_cnn") return Architecture::kBaselineCnn;
  throw ConfigError("unknown architecture '" + name +
                    "'; expected one of capsnet_m, caps9, caps15, caps19, "
                    "baseline_cnn");
}

void LossConfig::validate() const {
  std::vector<std::string> v;
  loss_violations(*this, v);
  if (!v.empty()) throw ConfigError("invalid loss config: " + joined(v));
}

void ModelConfig::validate() const {
  std::vector<std::string> v;
  if (n_classes < 2)
    v.push_back("n_classes must be at least 2, got " +
                std::to_string(n_classes));
  if (input_rows == 0) v.push_back("input_rows must be positive");
  if (input_frames == 0) v.push_back("input_frames must be positive");
  if (routing_iterations < 1 || routing_iterations > 5)
    v.push_back("routing_iterations must be between 1 and 5, got " +
                std::to_string(routing_iterations));
  if (decoder_enabled && decoder_hidden == 0)
    v.push_back("decoder_hidden must be positive when the decoder is on");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0))
    v.push_back("dropout_rate must be in [0, 1), got " + num(dropout_rate));
  loss_violations(loss, v);
  if (input_rows > 0 && input_frames > 0) {
    try {
      const std::size_t need = minimum_frames(*this);
      if (input_frames < need)
        v.push_back("input_frames " + std::to_string(input_frames) +
                    " is below the minimum " + std::to_string(need) + " for " +
                    architecture_name(architecture));
    } catch (const ConfigError& e) {
      v.push_back(e.what());
    }
  }
  if (!v.empty()) throw ConfigError("invalid model config: " + joined(v));
}

std::size_t minimum_frames(const ModelConfig& cfg) {
  constexpr std::size_t kLimit = 1 << 16;
  if (cfg.architecture == Architecture::kBaselineCnn) {
    for (std::size_t f = 1; f < kLimit; ++f)
      if (cnn_frames_ok(f)) return f;
    throw ContractError("no feasible frame count for baseline_cnn");
  }
  if (!caps_dims(cfg, kLimit, nullptr))
    throw ConfigError(
        "input_rows " + std::to_string(cfg.input_rows) +
        " is too small for the " +
        std::string(architecture_name(cfg.architecture)) + " conv stack");
  for (std::size_t f = 1; f < kLimit; ++f)
    if (caps_dims(cfg, f, nullptr)) return f;
  throw ContractError("no feasible frame count for " +
                      std::string(architecture_name(cfg.architecture)));
}

CapsGeometry capsule_geometry(const ModelConfig& cfg) {
  if (cfg.architecture == Architecture::kBaselineCnn)
    throw ContractError("capsule_geometry asked for baseline_cnn");
  CapsGeometry geo;
  if (!caps_dims(cfg, cfg.input_frames, &geo))
    throw ConfigError("input " + std::to_string(cfg.input_rows) + "x" +
                      std::to_string(cfg.input_frames) +
                      " is too small for " +
                      std::string(architecture_name(cfg.architecture)) +
                      "; the minimum is " +
                      std::to_string(minimum_frames(cfg)) + " frames");
  return geo;
}

TensorPtr route(Graph& g, const TensorPtr& u_hat, int iterations,
                RoutingState* state) {
  if (u_hat->shape.size() != 4)
    throw ShapeError("routing needs predictions [B,Ni,No,Du], got " +
                     shape_str(u_hat->shape));
  if (iterations < 1)
    throw ConfigError("routing needs at least one iteration, got " +
                      std::to_string(iterations));
  const std::size_t B = u_hat->shape[0];
  const std::size_t Ni = u_hat->shape[1];
  const std::size_t No = u_hat->shape[2];
  const std::size_t Du = u_hat->shape[3];
  if (state) {
    state->batch = B;
    state->n_lower = Ni;
    state->n_upper = No;
    state->d_upper = Du;
    state->u_hat = u_hat->value;
    state->iterations.clear();
  }
  TensorPtr b = make_tensor({B, Ni, No});
  TensorPtr v;
  for (int t = 0; t < iterations; ++t) {
    auto c = ops::softmax(g, b, 2);
    auto s = ops::caps_weighted_sum(g, c, u_hat);
    v = ops::squash_last(g, s);
    if (state)
      state->iterations.push_back({b->value, c->value, s->value, v->value});
    if (t + 1 < iterations) b = ops::add(g, b, ops::caps_agreement(g, u_hat, v));
  }
  return v;
}

void Standardizer::fit(const std::vector<FeatureMatrix>& train_features) {
  if (train_features.empty())
    throw ContractError("standardizer fit needs at least one feature matrix");
  const std::size_t rows = train_features.front().rows;
  std::vector<double> sum(rows, 0.0);
  std::size_t n = 0;
  for (const auto& f : train_features) {
    if (f.rows != rows)
      throw ShapeError("feature matrices disagree on row count: " +
                       std::to_string(f.rows) + " vs " + std::to_string(rows));
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < f.n_valid_frames; ++c) sum[r] += f.at(r, c);
    n += f.n_valid_frames;
  }
  if (n == 0) throw DataError("standardizer fit saw no valid frames");
  mean.assign(rows, 0.0);
  stddev.assign(rows, 0.0);
  for (std::size_t r = 0; r < rows; ++r)
    mean[r] = sum[r] / static_cast<double>(n);
  std::vector<double> sq(rows, 0.0);
  for (const auto& f : train_features)
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < f.n_valid_frames; ++c) {
        const double d = f.at(r, c) - mean[r];
        sq[r] += d * d;
      }
  for (std::size_t r = 0; r < rows; ++r)
    stddev[r] = std::max(std::sqrt(sq[r] / static_cast<double>(n)), 1e-8);
}

FeatureMatrix Standardizer::apply(const FeatureMatrix& f) const {
  if (!fitted()) throw ContractError("standardizer applied before fit");
  if (f.rows != mean.size())
    throw ShapeError("feature rows " + std::to_string(f.rows) +
                     " do not match the fitted " +
                     std::to_string(mean.size()));
  FeatureMatrix out = f;
  for (std::size_t r = 0; r < f.rows; ++r) {
    for (std::size_t c = 0; c < f.n_valid_frames; ++c)
      out.values[r * f.cols + c] = (f.at(r, c) - mean[r]) / stddev[r];
    for (std::size_t c = f.n_valid_frames; c < f.cols; ++c)
      out.values[r * f.cols + c] = 0.0;
  }
  return out;
}

Model::Model(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(sub_seed(seed, "init"));
  if (is_capsule())
    build_capsule_params(rng);
  else
    build_cnn_params(rng);
}

void Model::build_capsule_params(Rng& rng) {
  const CapsGeometry geo = capsule_geometry(cfg_);
  const bool two_convs = cfg_.architecture == Architecture::kCapsNetM;
  const std::size_t k1 = conv1_kernel(cfg_.architecture);
  const std::size_t kh1 =
      cfg_.conv1_kernel_height ? cfg_.conv1_kernel_height : k1;
  const std::size_t c1 = two_convs ? 64 : 256;
  params_.push_back(glorot_conv(rng, c1, 1, kh1, k1, "conv1.w"));
  params_.push_back(zeros_param({c1}, "conv1.b"));
  if (two_convs) {
    params_.push_back(glorot_conv(rng, 256, 64, 13, 13, "conv2.w"));
    params_.push_back(zeros_param({256}, "conv2.b"));
  }
  const std::size_t kp = two_convs ? 11 : 9;
  params_.push_back(glorot_conv(rng, 256, 256, kp, kp, "primary.w"));
  params_.push_back(zeros_param({256}, "primary.b"));
  params_.push_back(gaussian_param(
      rng, {geo.n_capsules, cfg_.n_classes, 16, 8}, 0.01, "digit.w"));
  if (cfg_.decoder_enabled) {
    const std::size_t in = 16 * cfg_.n_classes;
    const std::size_t out = cfg_.input_rows * cfg_.input_frames;
    params_.push_back(glorot_dense(rng, cfg_.decoder_hidden, in, "decoder1.w"));
    params_.push_back(zeros_param({cfg_.decoder_hidden}, "decoder1.b"));
    params_.push_back(glorot_dense(rng, out, cfg_.decoder_hidden, "decoder2.w"));
    params_.push_back(zeros_param({out}, "decoder2.b"));
  }
}

void Model::build_cnn_params(Rng& rng) {
  params_.push_back(glorot_conv(rng, 128, cfg_.input_rows, 1, 13, "cnn1.w"));
  params_.push_back(zeros_param({128}, "cnn1.b"));
  params_.push_back(glorot_conv(rng, 256, 128, 1, 11, "cnn2.w"));
  params_.push_back(zeros_param({256}, "cnn2.b"));
  params_.push_back(ones_param({256}, "bn.gamma"));
  params_.push_back(zeros_param({256}, "bn.beta"));
  params_.push_back(glorot_conv(rng, 256, 256, 1, 5, "cnn3.w"));
  params_.push_back(zeros_param({256}, "cnn3.b"));
  params_.push_back(glorot_conv(rng, 128, 256, 1, 3, "cnn4.w"));
  params_.push_back(zeros_param({128}, "cnn4.b"));
  params_.push_back(glorot_dense(rng, cfg_.n_classes, 128, "fc.w"));
  params_.push_back(zeros_param({cfg_.n_classes}, "fc.b"));
  buffers_.push_back(zeros_param({256}, "bn.running_mean", false));
  buffers_.push_back(ones_param({256}, "bn.running_var", false));
}

ForwardResult Model::forward(Graph& g, const TensorPtr& input, bool training,
                             Rng* dropout_rng,
                             const std::vector<std::size_t>* mask_labels,
                             RoutingState* routing) {
  if (input->shape.size() != 3 || input->shape[1] != cfg_.input_rows ||
      input->shape[2] != cfg_.input_frames)
    throw ShapeError("model input must be [batch, " +
                     std::to_string(cfg_.input_rows) + ", " +
                     std::to_string(cfg_.input_frames) + "], got " +
                     shape_str(input->shape));
  const std::size_t B = input->shape[0];
  if (B == 0) throw ShapeError("model input has an empty batch");
  ForwardResult r;
  if (is_capsule()) {
    const bool two_convs = cfg_.architecture == Architecture::kCapsNetM;
    auto x = ops::reshape(g, input, {B, 1, cfg_.input_rows, cfg_.input_frames});
    x = ops::relu(g, ops::conv2d(g, x, find_tensor(params_, "conv1.w"),
                                 find_tensor(params_, "conv1.b"), 1,
                                 two_convs ? 5 : 1));
    if (two_convs)
      x = ops::relu(g, ops::conv2d(g, x, find_tensor(params_, "conv2.w"),
                                   find_tensor(params_, "conv2.b"), 1, 1));
    x = ops::conv2d(g, x, find_tensor(params_, "primary.w"),
                    find_tensor(params_, "primary.b"), 2, 2);
    auto u = ops::squash_last(g, ops::capsule_reshape(g, x, 8));
    auto u_hat = ops::caps_predict(g, find_tensor(params_, "digit.w"), u);
    r.digit_caps = route(g, u_hat, cfg_.routing_iterations, routing);
    r.scores = ops::length_last(g, r.digit_caps);
    if (cfg_.decoder_enabled) {
      std::vector<std::size_t> labels;
      if (training) {
        if (!mask_labels)
          throw ContractError(
              "training forward with the decoder on needs mask labels");
        if (mask_labels->size() != B)
          throw ShapeError("mask labels count " +
                           std::to_string(mask_labels->size()) +
                           " does not match batch " + std::to_string(B));
        labels = *mask_labels;
      } else {
        labels = predict_classes(*r.scores);
      }
      for (const auto c : labels)
        if (c >= cfg_.n_classes)
          throw ContractError("mask label " + std::to_string(c) +
                              " is out of range for " +
                              std::to_string(cfg_.n_classes) + " classes");
      auto masked = ops::mask_select(g, r.digit_caps, labels);
      auto h = ops::relu(g, ops::dense(g, masked,
                                       find_tensor(params_, "decoder1.w"),
                                       find_tensor(params_, "decoder1.b")));
      r.reconstruction = ops::dense(g, h, find_tensor(params_, "decoder2.w"),
                                    find_tensor(params_, "decoder2.b"));
    }
    return r;
  }
  auto x = ops::reshape(g, input, {B, cfg_.input_rows, 1, cfg_.input_frames});
  x = ops::relu(g, ops::conv2d(g, x, find_tensor(params_, "cnn1.w"),
                               find_tensor(params_, "cnn1.b"), 1, 1));
  x = ops::maxpool2d(g, x, 1, 2);
  if (training) {
    if (!dropout_rng)
      throw ContractError("training forward needs a dropout rng");
    x = ops::dropout(g, x, cfg_.dropout_rate, *dropout_rng, true);
  }
  x = ops::conv2d(g, x, find_tensor(params_, "cnn2.w"),
                  find_tensor(params_, "cnn2.b"), 1, 1);
  x = ops::batchnorm(g, x, find_tensor(params_, "bn.gamma"),
                     find_tensor(params_, "bn.beta"),
                     find_tensor(buffers_, "bn.running_mean"),
                     find_tensor(buffers_, "bn.running_var"), 0.9, 1e-5,
                     training);
  x = ops::relu(g, x);
  x = ops::maxpool2d(g, x, 1, 2);
  x = ops::relu(g, ops::conv2d(g, x, find_tensor(params_, "cnn3.w"),
                               find_tensor(params_, "cnn3.b"), 1, 2));
  x = ops::maxpool2d(g, x, 1, 2);
  x = ops::relu(g, ops::conv2d(g, x, find_tensor(params_, "cnn4.w"),
                               find_tensor(params_, "cnn4.b"), 1, 1));
  x = ops::global_avg_pool(g, x);
  r.logits = ops::dense(g, x, find_tensor(params_, "fc.w"),
                        find_tensor(params_, "fc.b"));
  r.scores = ops::softmax(g, r.logits, 1);
  return r;
}

TensorPtr Model::loss(Graph& g, const ForwardResult& fwd,
                      const TensorPtr& input,
                      const std::vector<std::size_t>& labels) {
  const std::size_t B = input->shape.empty() ? 0 : input->shape[0];
  if (labels.size() != B)
    throw ShapeError("labels count " + std::to_string(labels.size()) +
                     " does not match batch " + std::to_string(B));
  for (const auto c : labels)
    if (c >= cfg_.n_classes)
      throw ContractError("label " + std::to_string(c) +
                          " is out of range for " +
                          std::to_string(cfg_.n_classes) + " classes");
  if (is_capsule()) {
    if (!fwd.scores) throw ContractError("forward result has no scores");
    auto l = ops::margin_loss(g, fwd.scores, labels, cfg_.loss.m_plus,
                              cfg_.loss.m_minus, cfg_.loss.lambda);
    if (cfg_.decoder_enabled) {
      if (!fwd.reconstruction)
        throw ContractError("forward result has no reconstruction");
      auto target = ops::reshape(
          g, input, {B, cfg_.input_rows * cfg_.input_frames});
      l = ops::add(
          g, l,
          ops::scale(g, ops::mse(g, fwd.reconstruction, target),
                     cfg_.loss.alpha));
    }
    return l;
  }
  if (!fwd.logits) throw ContractError("forward result has no logits");
  return ops::softmax_xent(g, fwd.logits, labels);
}

std::size_t argmax_class(const std::vector<double>& scores) {
  if (scores.empty()) throw ContractError("argmax of an empty score row");
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i)
    if (scores[i] > scores[best]) best = i;
  return best;
}

std::vector<std::size_t> predict_classes(const Tensor& scores) {
  if (scores.shape.size() != 2)
    throw ShapeError("predictions need scores [B,C], got " +
                     shape_str(scores.shape));
  const std::size_t B = scores.shape[0];
  const std::size_t C = scores.shape[1];
  std::vector<std::size_t> out;
  out.reserve(B);
  for (std::size_t b = 0; b < B; ++b) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < C; ++c)
      if (scores.value[b * C + c] > scores.value[b * C + best]) best = c;
    out.push_back(best);
  }
  return out;
}

void save_model(const std::string& path, const Model& model,
                const Standardizer& standardizer) {
  std::vector<TensorPtr> all = model.parameters();
  for (const auto& b : model.buffers()) all.push_back(b);
  if (standardizer.fitted()) {
    all.push_back(make_tensor({standardizer.mean.size()}, standardizer.mean,
                              false, "standardizer.mean"));
    all.push_back(make_tensor({standardizer.stddev.size()},
                              standardizer.stddev, false,
                              "standardizer.stddev"));
  }
  save_checkpoint(path, all);
  const ModelConfig& c = model.config();
  nlohmann::json j;
  j["architecture"] = architecture_name(c.architecture);
  j["n_classes"] = c.n_classes;
  j["input_rows"] = c.input_rows;
  j["input_frames"] = c.input_frames;
  j["routing_iterations"] = c.routing_iterations;
  j["decoder_enabled"] = c.decoder_enabled;
  j["decoder_hidden"] = c.decoder_hidden;
  j["dropout_rate"] = c.dropout_rate;
  j["conv1_kernel_height"] = c.conv1_kernel_height;
  j["loss"] = {{"m_plus", c.loss.m_plus},
               {"m_minus", c.loss.m_minus},
               {"lambda", c.loss.lambda},
               {"alpha", c.loss.alpha}};
  const std::string side = path + ".json";
  std::ofstream os(side, std::ios::trunc);
  if (!os) throw IoError("cannot write " + side);
  os << j.dump(2) << "\n";
  if (!os) throw IoError("failed while writing " + side);
}

LoadedModel load_model(const std::string& path) {
  const std::string side = path + ".json";
  std::ifstream is(side);
  if (!is) throw IoError("cannot open " + side);
  ModelConfig cfg;
  try {
    nlohmann::json j;
    is >> j;
    cfg.architecture =
        architecture_from_name(j.at("architecture").get<std::string>());
    cfg.n_classes = j.at("n_classes").get<std::size_t>();
    cfg.input_rows = j.at("input_rows").get<std::size_t>();
    cfg.input_frames = j.at("input_frames").get<std::size_t>();
    cfg.routing_iterations = j.at("routing_iterations").get<int>();
    cfg.decoder_enabled = j.at("decoder_enabled").get<bool>();
    cfg.decoder_hidden = j.at("decoder_hidden").get<std::size_t>();
    cfg.dropout_rate = j.at("dropout_rate").get<double>();
    cfg.conv1_kernel_height = j.at("conv1_kernel_height").get<std::size_t>();
    const auto& l = j.at("loss");
    cfg.loss.m_plus = l.at("m_plus").get<double>();
    cfg.loss.m_minus = l.at("m_minus").get<double>();
    cfg.loss.lambda = l.at("lambda").get<double>();
    cfg.loss.alpha = l.at("alpha").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("model sidecar " + side + ": " + e.what());
  }
  LoadedModel out{cfg, Model(cfg, 0), Standardizer{}};
  const auto loaded = load_checkpoint(path);
  std::vector<TensorPtr> targets = out.model.parameters();
  for (const auto& b : out.model.buffers()) targets.push_back(b);
  restore_into(loaded, targets);
  TensorPtr mean, stddev;
  for (const auto& t : loaded) {
    if (t->name == "standardizer.mean") mean = t;
    if (t->name == "standardizer.stddev") stddev = t;
  }
  if (static_cast<bool>(mean) != static_cast<bool>(stddev))
    throw ParseError("checkpoint " + path + " holds a partial standardizer");
  if (mean) {
    if (mean->value.size() != stddev->value.size())
      throw ParseError("checkpoint " + path +
                       " standardizer arrays disagree on size");
    out.standardizer.mean = mean->value;
    out.standardizer.stddev = stddev->value;
  }
  return out;
}

}  // namespace capsid
