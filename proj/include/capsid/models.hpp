#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "capsid/dsp.hpp"
#include "capsid/ops.hpp"
#include "capsid/rng.hpp"
#include "capsid/tensor.hpp"

namespace capsid {

enum class Architecture { kCapsNetM, kCaps9, kCaps15, kCaps19, kBaselineCnn };

const char* architecture_name(Architecture a);
Architecture architecture_from_name(const std::string& name);

struct LossConfig {
  double m_plus = 0.9;
  double m_minus = 0.1;
  double lambda = 0.5;
  double alpha = 0.0005;

  void validate() const;
};

struct ModelConfig {
  Architecture architecture = Architecture::kCapsNetM;
  std::size_t n_classes = 0;
  std::size_t input_rows = 40;
  std::size_t input_frames = 300;
  int routing_iterations = 3;
  bool decoder_enabled = true;
  std::size_t decoder_hidden = 512;
  double dropout_rate = 0.3;       // baseline CNN only
  std::size_t conv1_kernel_height = 0;  // 0 = square kernel (default)
  LossConfig loss;

  // Throws ConfigError listing every violation, including the minimum
  // frame count when input_frames is too small for the conv stack.
  void validate() const;
};

// Smallest input_frames for which every conv output dimension stays >= 1.
std::size_t minimum_frames(const ModelConfig& cfg);

struct CapsGeometry {
  std::size_t conv1_h = 0, conv1_w = 0;
  std::size_t conv2_h = 0, conv2_w = 0;  // equals conv1 for caps9/15/19
  std::size_t primary_h = 0, primary_w = 0;
  std::size_t n_capsule_maps = 0;  // channel groups of 8
  std::size_t n_capsules = 0;      // maps x primary_h x primary_w
};

// Conv-chain shapes for the capsule architectures; ConfigError when any
// dimension collapses below 1.
CapsGeometry capsule_geometry(const ModelConfig& cfg);

// One routing iteration's coupling state, copied out of the graph for
// inspection: b is the logits the iteration's softmax consumed, c/s/v are
// that iteration's outputs. Shapes: b,c [batch x n_lower x n_upper];
// s,v [batch x n_upper x d_upper].
struct RoutingIteration {
  std::vector<double> b, c, s, v;
};

struct RoutingState {
  std::size_t batch = 0, n_lower = 0, n_upper = 0, d_upper = 0;
  std::vector<double> u_hat;  // [batch x n_lower x n_upper x d_upper]
  std::vector<RoutingIteration> iterations;
};

// Routing by agreement over u_hat [B, Ni, No, Du]: logits start at zero;
// each iteration couples with softmax over the upper axis, forms weighted
// sums, squashes them, and (on all but the last iteration) adds the
// agreement u_hat.v to the logits. Gradients flow through every iteration.
// Returns v [B, No, Du].
TensorPtr route(Graph& g, const TensorPtr& u_hat, int iterations,
                RoutingState* state = nullptr);

// Per-coefficient z-scoring fitted on the valid frames of a training set.
// Padded columns stay exactly zero.
struct Standardizer {
  std::vector<double> mean;
  std::vector<double> stddev;

  void fit(const std::vector<FeatureMatrix>& train_features);
  FeatureMatrix apply(const FeatureMatrix& f) const;
  bool fitted() const { return !mean.empty(); }
};

struct ForwardResult {
  TensorPtr scores;          // [B, n_classes]; lengths or probabilities
  TensorPtr logits;          // CNN only, pre-softmax
  TensorPtr digit_caps;      // capsule models, [B, n_classes, 16]
  TensorPtr reconstruction;  // decoder output [B, rows*frames], if enabled
};

class Model {
 public:
  Model(const ModelConfig& cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  bool is_capsule() const {
    return cfg_.architecture != Architecture::kBaselineCnn;
  }

  // Parameters the optimizer updates.
  const std::vector<TensorPtr>& parameters() const { return params_; }
  // Running statistics and other non-optimized state.
  const std::vector<TensorPtr>& buffers() const { return buffers_; }

  // input [B, rows, frames]. In training mode the decoder masks with
  // mask_labels (required when the decoder is on); in eval mode it masks
  // with the predicted class. dropout_rng is required for the CNN in
  // training mode.
  ForwardResult forward(Graph& g, const TensorPtr& input, bool training,
                        Rng* dropout_rng = nullptr,
                        const std::vector<std::size_t>* mask_labels = nullptr,
                        RoutingState* routing = nullptr);

  // Training objective: margin loss plus the scaled reconstruction error
  // for capsule models, cross-entropy for the CNN.
  TensorPtr loss(Graph& g, const ForwardResult& fwd, const TensorPtr& input,
                 const std::vector<std::size_t>& labels);

 private:
  void build_capsule_params(Rng& rng);
  void build_cnn_params(Rng& rng);

  ModelConfig cfg_;
  std::vector<TensorPtr> params_;
  std::vector<TensorPtr> buffers_;
};

// Argmax with ties broken toward the lowest class index.
std::size_t argmax_class(const std::vector<double>& scores);

// Batch of score rows -> predicted classes.
std::vector<std::size_t> predict_classes(const Tensor& scores);

// Checkpoint plus a JSON sidecar holding the ModelConfig and standardizer,
// so a saved model is self-describing.
void save_model(const std::string& path, const Model& model,
                const Standardizer& standardizer);

struct LoadedModel {
  ModelConfig config;
  Model model;
  Standardizer standardizer;
};

LoadedModel load_model(const std::string& path);

}  // namespace capsid
