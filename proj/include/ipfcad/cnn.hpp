#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ipfcad/blocking.hpp"
#include "ipfcad/error.hpp"
#include "ipfcad/rng.hpp"

namespace ipfcad {

enum class LayerKind : uint8_t {
    Conv = 1,
    Relu = 2,
    MaxPool = 3,
    Flatten = 4,
    Dense = 5,
    Dropout = 6,
    Softmax = 7,
};

struct LayerSpec {
    LayerKind kind;
    int kernel = 0;      // conv: k x k, odd
    int filters = 0;     // conv
    int in_dim = 0;      // dense
    int out_dim = 0;     // dense
    float dropout_p = 0.5f;

    static LayerSpec conv(int kernel, int filters) { return {LayerKind::Conv, kernel, filters}; }
    static LayerSpec relu() { return {LayerKind::Relu}; }
    static LayerSpec maxpool() { return {LayerKind::MaxPool}; }
    static LayerSpec flatten() { return {LayerKind::Flatten}; }
    static LayerSpec dense(int in_dim, int out_dim) { return {LayerKind::Dense, 0, 0, in_dim, out_dim}; }
    static LayerSpec dropout(float p) { return {LayerKind::Dropout, 0, 0, 0, 0, p}; }
    static LayerSpec softmax() { return {LayerKind::Softmax}; }
};

struct Shape3 {
    int h = 0, w = 0, c = 0;
    size_t count() const { return static_cast<size_t>(h) * w * c; }
    bool operator==(const Shape3&) const = default;
};

// Ordered layer stack with a validated shape chain.
struct Architecture {
    Shape3 input{12, 12, 1};
    std::vector<LayerSpec> layers;

    // Conv(3x3,16) -> ReLU -> Pool -> Conv(3x3,32) -> ReLU -> Pool -> Flatten
    // -> Dense(288,64) -> ReLU -> Dropout(0.5) -> Dense(64,3) -> Softmax
    static Architecture standard();

    // Small stack for gradient verification: every layer kind, few parameters.
    static Architecture reduced();

    // Walks the shape chain, throwing ShapeChainBroken on inconsistency.
    // Returns the final (class-count) shape.
    Shape3 validate() const;

    int class_count() const { return validate().c; }
};

// Compact layer notation used in config files, e.g.
//   conv3x16,relu,pool,conv3x32,relu,pool,flatten,dense64,relu,dropout,dense3,softmax
// Dense input widths are inferred from the shape chain; dropout probability
// comes from the training config.
inline constexpr const char* kStandardArchitectureSpec =
    "conv3x16,relu,pool,conv3x32,relu,pool,flatten,dense64,relu,dropout,dense3,softmax";

Architecture parse_architecture(const std::string& text, Shape3 input, float dropout_p);

// H x W x C row-major tensor.
template <typename T>
struct Tensor {
    int h = 0, w = 0, c = 0;
    std::vector<T> v;

    Tensor() = default;
    Tensor(int H, int W, int C) : h(H), w(W), c(C), v(static_cast<size_t>(H) * W * C, T(0)) {}

    T& at(int y, int x, int ch) { return v[(static_cast<size_t>(y) * w + x) * c + ch]; }
    const T& at(int y, int x, int ch) const { return v[(static_cast<size_t>(y) * w + x) * c + ch]; }
    Shape3 shape() const { return {h, w, c}; }
};

// Per-layer forward state kept for the backward pass.
template <typename T>
struct LayerState {
    Tensor<T> out;
    std::vector<int32_t> argmax;  // maxpool routing
    std::vector<T> drop_mask;     // dropout multipliers (0 or 1/(1-p))
};

template <typename T>
using ParamSet = std::vector<std::vector<T>>;  // one entry per layer; empty for parameterless layers

// The network itself: parameter storage plus forward/backward. Training runs
// in float; gradient verification instantiates the double variant.
template <typename T>
class Network {
  public:
    explicit Network(Architecture arch);

    const Architecture& arch() const { return arch_; }
    ParamSet<T>& weights() { return weights_; }
    ParamSet<T>& biases() { return biases_; }
    const ParamSet<T>& weights() const { return weights_; }
    const ParamSet<T>& biases() const { return biases_; }

    // He-normal weights scaled by fan-in, zero biases.
    void init_he(Rng& rng);

    // Runs all layers. In training mode dropout draws from `rng`; in
    // inference mode dropout is the identity.
    void forward(const Tensor<T>& input, bool training, Rng* rng,
                 std::vector<LayerState<T>>& states) const;

    // Class probabilities from the last state (the softmax layer output).
    std::span<const T> probabilities(const std::vector<LayerState<T>>& states) const;

    // Accumulates dLoss/dParam into (gw, gb), scaled by `scale`. Assumes
    // cross-entropy on the softmax output for the given true class.
    void backward(const Tensor<T>& input, const std::vector<LayerState<T>>& states, int true_class,
                  ParamSet<T>& gw, ParamSet<T>& gb, T scale) const;

    ParamSet<T> zero_like_weights() const;
    ParamSet<T> zero_like_biases() const;

    // Copies parameters from another scalar type (float -> double for the
    // gradient-check path).
    template <typename U>
    void copy_params_from(const Network<U>& other) {
        for (size_t l = 0; l < weights_.size(); ++l) {
            for (size_t i = 0; i < weights_[l].size(); ++i)
                weights_[l][i] = static_cast<T>(other.weights()[l][i]);
            for (size_t i = 0; i < biases_[l].size(); ++i)
                biases_[l][i] = static_cast<T>(other.biases()[l][i]);
        }
    }

  private:
    Architecture arch_;
    std::vector<Shape3> shapes_;  // output shape per layer
    ParamSet<T> weights_, biases_;
};

// Numerically stable softmax + cross-entropy. Returns (probabilities, loss).
template <typename T>
std::pair<std::vector<T>, T> softmax_cross_entropy(std::span<const T> logits, int true_class);

using CnnModel = Network<float>;

struct TrainConfig {
    double learning_rate = 0.01;
    double momentum = 0.9;
    int batch_size = 32;
    int epochs = 10;
    double dropout_p = 0.5;  // applied to dropout layers at construction time
    uint64_t rng_seed = 0;
    double validation_fraction = 0.1;

    bool operator==(const TrainConfig&) const = default;

    void validate() const {
        if (!(learning_rate >= 0.0)) raise(ErrorCode::InvalidArgument, "learning_rate must be >= 0");
        if (!(momentum >= 0.0 && momentum < 1.0))
            raise(ErrorCode::InvalidArgument, "momentum must be in [0,1)");
        if (batch_size < 1) raise(ErrorCode::InvalidArgument, "batch_size must be >= 1");
        if (epochs < 0) raise(ErrorCode::InvalidArgument, "epochs must be >= 0");
        if (!(dropout_p >= 0.0 && dropout_p < 1.0))
            raise(ErrorCode::InvalidArgument, "dropout_p must be in [0,1)");
        if (!(validation_fraction >= 0.0 && validation_fraction < 1.0))
            raise(ErrorCode::InvalidArgument, "validation_fraction must be in [0,1)");
    }
};

struct TrainHistory {
    std::vector<double> train_loss;
    std::vector<double> train_accuracy;
    std::vector<double> validation_accuracy;

    std::string to_csv() const;
};

// Mean parameter gradients plus the mean loss over one batch.
struct BatchGradients {
    ParamSet<float> gw, gb;
    double mean_loss = 0.0;
};

BatchGradients backprop_step(const CnnModel& model, std::span<const Block* const> batch,
                             const TrainConfig& config, Rng& dropout_rng);

// Seeded end-to-end training: He init, SGD with momentum, per-epoch shuffle.
// Bit-deterministic for fixed (blocks, config).
std::pair<CnnModel, TrainHistory> train(const std::vector<Block>& blocks, const TrainConfig& config,
                                        const Architecture& arch = Architecture::standard());

struct Prediction {
    TissueClass label;
    std::vector<float> probabilities;  // indexed by class code - 1
};

// Inference with dropout disabled; argmax ties break toward the lowest class
// index (healthy < ground-glass < honeycombing).
Prediction predict(const CnnModel& model, const Image2D<float>& patch);

// IPFM model file: magic, version, layer table, f32 parameters, CRC32.
std::vector<uint8_t> encode_ipfm(const CnnModel& model);
CnnModel decode_ipfm(const std::vector<uint8_t>& bytes);

// --- gradient verification -------------------------------------------------

struct GradientCheckResult {
    double max_relative_error = 0.0;
    size_t params_checked = 0;
};

// Relative error |a-n| / max(|a|+|n|, 1e-8).
double gradient_rel_error(double analytic, double numeric);

// Analytic backprop gradients for one (input, class) sample, dropout off.
std::pair<ParamSet<double>, ParamSet<double>> analytic_gradients(const Network<double>& net,
                                                                 const Tensor<double>& input,
                                                                 int true_class);

// Central differences of the loss w.r.t. every parameter (step h).
std::pair<ParamSet<double>, ParamSet<double>> numeric_gradients(Network<double>& net,
                                                                const Tensor<double>& input,
                                                                int true_class, double h);

double max_rel_error(const std::pair<ParamSet<double>, ParamSet<double>>& a,
                     const std::pair<ParamSet<double>, ParamSet<double>>& b);

// Runs both paths at h=1e-5 and reports the worst disagreement.
GradientCheckResult gradient_check(Network<double>& net, const Tensor<double>& input,
                                   int true_class, double h = 1e-5);

}  // namespace ipfcad
