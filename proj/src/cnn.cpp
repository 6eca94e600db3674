#include "ipfcad/cnn.hpp"

#include <algorithm>
#include <cstring>
#include <limits>

#include <zlib.h>

namespace ipfcad {

Architecture Architecture::standard() {
    return parse_architecture(kStandardArchitectureSpec, {12, 12, 1}, 0.5f);
}

Architecture parse_architecture(const std::string& text, Shape3 input, float dropout_p) {
    Architecture arch;
    arch.input = input;
    Shape3 s = input;
    bool flattened = false;

    size_t pos = 0;
    while (pos < text.size()) {
        size_t comma = text.find(',', pos);
        if (comma == std::string::npos) comma = text.size();
        const std::string tok = text.substr(pos, comma - pos);
        pos = comma + 1;
        if (tok.empty()) raise(ErrorCode::InvalidArgument, "empty token in architecture spec");

        if (tok == "relu") {
            arch.layers.push_back(LayerSpec::relu());
        } else if (tok == "pool") {
            if (s.h % 2 != 0 || s.w % 2 != 0)
                raise(ErrorCode::OddDimension, "pool on odd dims in architecture spec");
            arch.layers.push_back(LayerSpec::maxpool());
            s.h /= 2;
            s.w /= 2;
        } else if (tok == "flatten") {
            arch.layers.push_back(LayerSpec::flatten());
            s = {1, 1, static_cast<int>(s.count())};
            flattened = true;
        } else if (tok == "dropout") {
            arch.layers.push_back(LayerSpec::dropout(dropout_p));
        } else if (tok == "softmax") {
            arch.layers.push_back(LayerSpec::softmax());
        } else if (tok.rfind("conv", 0) == 0) {
            const size_t x = tok.find('x', 4);
            if (x == std::string::npos)
                raise(ErrorCode::InvalidArgument, "conv token needs the form convKxF: " + tok);
            int kernel = 0, filters = 0;
            try {
                kernel = std::stoi(tok.substr(4, x - 4));
                filters = std::stoi(tok.substr(x + 1));
            } catch (const std::exception&) {
                raise(ErrorCode::InvalidArgument, "bad conv token: " + tok);
            }
            arch.layers.push_back(LayerSpec::conv(kernel, filters));
            s.c = filters;
        } else if (tok.rfind("dense", 0) == 0) {
            if (!flattened)
                raise(ErrorCode::InvalidArgument, "dense before flatten in architecture spec");
            int out_dim = 0;
            try {
                out_dim = std::stoi(tok.substr(5));
            } catch (const std::exception&) {
                raise(ErrorCode::InvalidArgument, "bad dense token: " + tok);
            }
            arch.layers.push_back(LayerSpec::dense(s.c, out_dim));  // input width from the chain
            s.c = out_dim;
        } else {
            raise(ErrorCode::InvalidArgument, "unknown architecture token: " + tok);
        }
    }
    arch.validate();
    return arch;
}

Architecture Architecture::reduced() {
    Architecture a;
    a.input = {4, 4, 1};
    a.layers = {
        LayerSpec::conv(3, 1),  LayerSpec::relu(),    LayerSpec::maxpool(),
        LayerSpec::flatten(),   LayerSpec::dense(4, 3), LayerSpec::softmax(),
    };
    return a;
}

Shape3 Architecture::validate() const {
    if (layers.empty()) raise(ErrorCode::ShapeChainBroken, "architecture has no layers");
    Shape3 s = input;
    if (s.h < 1 || s.w < 1 || s.c < 1)
        raise(ErrorCode::ShapeChainBroken, "input shape must be positive");
    bool flattened = false;
    for (size_t i = 0; i < layers.size(); ++i) {
        const LayerSpec& l = layers[i];
        switch (l.kind) {
            case LayerKind::Conv:
                if (flattened) raise(ErrorCode::ShapeChainBroken, "conv after flatten");
                if (l.kernel < 1 || l.kernel % 2 == 0)
                    raise(ErrorCode::ShapeChainBroken, "conv kernel must be odd and positive");
                if (l.filters < 1) raise(ErrorCode::ShapeChainBroken, "conv needs filters");
                s.c = l.filters;  // same padding keeps h, w
                break;
            case LayerKind::Relu:
                break;
            case LayerKind::MaxPool:
                if (flattened) raise(ErrorCode::ShapeChainBroken, "maxpool after flatten");
                if (s.h % 2 != 0 || s.w % 2 != 0)
                    raise(ErrorCode::OddDimension,
                          "maxpool needs even dims, got " + std::to_string(s.h) + "x" + std::to_string(s.w));
                s.h /= 2;
                s.w /= 2;
                break;
            case LayerKind::Flatten:
                s = {1, 1, static_cast<int>(s.count())};
                flattened = true;
                break;
            case LayerKind::Dense:
                if (!flattened) raise(ErrorCode::ShapeChainBroken, "dense requires flattened input");
                if (l.in_dim != s.c)
                    raise(ErrorCode::ShapeChainBroken,
                          "dense expects " + std::to_string(l.in_dim) + " inputs, chain provides " +
                              std::to_string(s.c));
                if (l.out_dim < 1) raise(ErrorCode::ShapeChainBroken, "dense needs outputs");
                s.c = l.out_dim;
                break;
            case LayerKind::Dropout:
                if (!(l.dropout_p >= 0.0f && l.dropout_p < 1.0f))
                    raise(ErrorCode::ShapeChainBroken, "dropout p must be in [0,1)");
                break;
            case LayerKind::Softmax:
                if (i + 1 != layers.size())
                    raise(ErrorCode::ShapeChainBroken, "softmax must be the final layer");
                break;
        }
    }
    if (layers.back().kind != LayerKind::Softmax)
        raise(ErrorCode::ShapeChainBroken, "final layer must be softmax");
    return s;
}

template <typename T>
Network<T>::Network(Architecture arch) : arch_(std::move(arch)) {
    arch_.validate();
    Shape3 s = arch_.input;
    weights_.resize(arch_.layers.size());
    biases_.resize(arch_.layers.size());
    shapes_.reserve(arch_.layers.size());
    for (size_t i = 0; i < arch_.layers.size(); ++i) {
        const LayerSpec& l = arch_.layers[i];
        switch (l.kind) {
            case LayerKind::Conv:
                weights_[i].assign(static_cast<size_t>(l.filters) * s.c * l.kernel * l.kernel, T(0));
                biases_[i].assign(static_cast<size_t>(l.filters), T(0));
                s.c = l.filters;
                break;
            case LayerKind::MaxPool:
                s.h /= 2;
                s.w /= 2;
                break;
            case LayerKind::Flatten:
                s = {1, 1, static_cast<int>(s.count())};
                break;
            case LayerKind::Dense:
                weights_[i].assign(static_cast<size_t>(l.in_dim) * l.out_dim, T(0));
                biases_[i].assign(static_cast<size_t>(l.out_dim), T(0));
                s.c = l.out_dim;
                break;
            default:
                break;
        }
        shapes_.push_back(s);
    }
}

template <typename T>
void Network<T>::init_he(Rng& rng) {
    Shape3 s = arch_.input;
    for (size_t i = 0; i < arch_.layers.size(); ++i) {
        const LayerSpec& l = arch_.layers[i];
        if (l.kind == LayerKind::Conv) {
            const double fan_in = static_cast<double>(l.kernel) * l.kernel * s.c;
            const double sigma = std::sqrt(2.0 / fan_in);
            for (T& w : weights_[i]) w = static_cast<T>(rng.normal(0.0, sigma));
            std::fill(biases_[i].begin(), biases_[i].end(), T(0));
        } else if (l.kind == LayerKind::Dense) {
            const double sigma = std::sqrt(2.0 / l.in_dim);
            for (T& w : weights_[i]) w = static_cast<T>(rng.normal(0.0, sigma));
            std::fill(biases_[i].begin(), biases_[i].end(), T(0));
        }
        s = shapes_[i];
    }
}

namespace {

template <typename T>
void conv_forward(const Tensor<T>& in, const std::vector<T>& kernels, const std::vector<T>& bias,
                  int k, int filters, Tensor<T>& out) {
    const int pad = k / 2;
    out = Tensor<T>(in.h, in.w, filters);
    // kernel layout: [f][c][ky][kx]
    for (int y = 0; y < in.h; ++y) {
        for (int x = 0; x < in.w; ++x) {
            for (int f = 0; f < filters; ++f) {
                T acc = bias[static_cast<size_t>(f)];
                const size_t f_base = static_cast<size_t>(f) * in.c * k * k;
                for (int c = 0; c < in.c; ++c) {
                    const size_t c_base = f_base + static_cast<size_t>(c) * k * k;
                    for (int ky = 0; ky < k; ++ky) {
                        const int yy = y + ky - pad;
                        if (yy < 0 || yy >= in.h) continue;
                        for (int kx = 0; kx < k; ++kx) {
                            const int xx = x + kx - pad;
                            if (xx < 0 || xx >= in.w) continue;
                            acc += kernels[c_base + static_cast<size_t>(ky) * k + kx] * in.at(yy, xx, c);
                        }
                    }
                }
                out.at(y, x, f) = acc;
            }
        }
    }
}

template <typename T>
void conv_backward(const Tensor<T>& in, const std::vector<T>& kernels, int k, int filters,
                   const Tensor<T>& d_out, std::vector<T>& d_kernels, std::vector<T>& d_bias,
                   Tensor<T>& d_in, T scale) {
    const int pad = k / 2;
    d_in = Tensor<T>(in.h, in.w, in.c);
    for (int y = 0; y < in.h; ++y) {
        for (int x = 0; x < in.w; ++x) {
            for (int f = 0; f < filters; ++f) {
                const T d = d_out.at(y, x, f);
                if (d == T(0)) continue;
                const T g = d * scale;  // parameter grads carry the batch scale
                d_bias[static_cast<size_t>(f)] += g;
                const size_t f_base = static_cast<size_t>(f) * in.c * k * k;
                for (int c = 0; c < in.c; ++c) {
                    const size_t c_base = f_base + static_cast<size_t>(c) * k * k;
                    for (int ky = 0; ky < k; ++ky) {
                        const int yy = y + ky - pad;
                        if (yy < 0 || yy >= in.h) continue;
                        for (int kx = 0; kx < k; ++kx) {
                            const int xx = x + kx - pad;
                            if (xx < 0 || xx >= in.w) continue;
                            const size_t ki = c_base + static_cast<size_t>(ky) * k + kx;
                            d_kernels[ki] += g * in.at(yy, xx, c);
                            d_in.at(yy, xx, c) += d * kernels[ki];
                        }
                    }
                }
            }
        }
    }
}

template <typename T>
void maxpool_forward(const Tensor<T>& in, Tensor<T>& out, std::vector<int32_t>& argmax) {
    if (in.h % 2 != 0 || in.w % 2 != 0)
        raise(ErrorCode::OddDimension, "maxpool input dims must be even");
    out = Tensor<T>(in.h / 2, in.w / 2, in.c);
    argmax.assign(out.v.size(), 0);
    for (int y = 0; y < out.h; ++y) {
        for (int x = 0; x < out.w; ++x) {
            for (int c = 0; c < in.c; ++c) {
                T best = in.at(2 * y, 2 * x, c);
                int32_t best_idx = static_cast<int32_t>((static_cast<size_t>(2 * y) * in.w + 2 * x) * in.c + c);
                for (int dy = 0; dy < 2; ++dy) {
                    for (int dx = 0; dx < 2; ++dx) {
                        const T v = in.at(2 * y + dy, 2 * x + dx, c);
                        if (v > best) {
                            best = v;
                            best_idx = static_cast<int32_t>(
                                (static_cast<size_t>(2 * y + dy) * in.w + 2 * x + dx) * in.c + c);
                        }
                    }
                }
                out.at(y, x, c) = best;
                argmax[(static_cast<size_t>(y) * out.w + x) * out.c + c] = best_idx;
            }
        }
    }
}

template <typename T>
void dense_forward(const Tensor<T>& in, const std::vector<T>& w, const std::vector<T>& b,
                   int in_dim, int out_dim, Tensor<T>& out) {
    if (static_cast<int>(in.v.size()) != in_dim)
        raise(ErrorCode::ShapeMismatch, "dense input size mismatch");
    out = Tensor<T>(1, 1, out_dim);
    for (int j = 0; j < out_dim; ++j) out.v[static_cast<size_t>(j)] = b[static_cast<size_t>(j)];
    for (int i = 0; i < in_dim; ++i) {
        const T xi = in.v[static_cast<size_t>(i)];
        if (xi == T(0)) continue;
        const size_t row = static_cast<size_t>(i) * out_dim;
        for (int j = 0; j < out_dim; ++j) out.v[static_cast<size_t>(j)] += xi * w[row + j];
    }
}

}  // namespace

template <typename T>
std::pair<std::vector<T>, T> softmax_cross_entropy(std::span<const T> logits, int true_class) {
    std::vector<T> p(logits.size());
    T max_logit = logits[0];
    for (T v : logits) max_logit = std::max(max_logit, v);
    T sum = T(0);
    for (size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i] - max_logit);
        sum += p[i];
    }
    for (T& v : p) v /= sum;
    T loss = T(0);
    if (true_class >= 0) {
        const T clamped = std::max(p[static_cast<size_t>(true_class)],
                                   std::numeric_limits<T>::min());
        loss = -std::log(clamped);
    }
    return {std::move(p), loss};
}

template std::pair<std::vector<float>, float> softmax_cross_entropy<float>(std::span<const float>, int);
template std::pair<std::vector<double>, double> softmax_cross_entropy<double>(std::span<const double>, int);

template <typename T>
void Network<T>::forward(const Tensor<T>& input, bool training, Rng* rng,
                         std::vector<LayerState<T>>& states) const {
    if (!(input.shape() == arch_.input))
        raise(ErrorCode::ShapeMismatch, "network input shape mismatch");
    states.resize(arch_.layers.size());
    const Tensor<T>* cur = &input;
    for (size_t i = 0; i < arch_.layers.size(); ++i) {
        const LayerSpec& l = arch_.layers[i];
        LayerState<T>& st = states[i];
        switch (l.kind) {
            case LayerKind::Conv:
                conv_forward(*cur, weights_[i], biases_[i], l.kernel, l.filters, st.out);
                break;
            case LayerKind::Relu: {
                st.out = *cur;
                for (T& v : st.out.v) v = v > T(0) ? v : T(0);
                break;
            }
            case LayerKind::MaxPool:
                maxpool_forward(*cur, st.out, st.argmax);
                break;
            case LayerKind::Flatten:
                st.out = *cur;
                st.out.h = 1;
                st.out.w = 1;
                st.out.c = static_cast<int>(st.out.v.size());
                break;
            case LayerKind::Dense:
                dense_forward(*cur, weights_[i], biases_[i], l.in_dim, l.out_dim, st.out);
                break;
            case LayerKind::Dropout: {
                st.out = *cur;
                if (training && l.dropout_p > 0.0f) {
                    if (!rng) raise(ErrorCode::InvalidArgument, "training forward needs an rng");
                    st.drop_mask.resize(st.out.v.size());
                    const T keep_scale = T(1) / (T(1) - static_cast<T>(l.dropout_p));
                    for (size_t k = 0; k < st.out.v.size(); ++k) {
                        const bool drop = rng->next_double() < static_cast<double>(l.dropout_p);
                        st.drop_mask[k] = drop ? T(0) : keep_scale;
                        st.out.v[k] *= st.drop_mask[k];
                    }
                }
                break;
            }
            case LayerKind::Softmax: {
                auto [p, loss] = softmax_cross_entropy<T>(std::span<const T>(cur->v), -1);
                (void)loss;
                st.out = Tensor<T>(1, 1, static_cast<int>(p.size()));
                st.out.v = std::move(p);
                break;
            }
        }
        cur = &st.out;
    }
}

template <typename T>
std::span<const T> Network<T>::probabilities(const std::vector<LayerState<T>>& states) const {
    return std::span<const T>(states.back().out.v);
}

template <typename T>
void Network<T>::backward(const Tensor<T>& input, const std::vector<LayerState<T>>& states,
                          int true_class, ParamSet<T>& gw, ParamSet<T>& gb, T scale) const {
    // Softmax + cross-entropy combined: dLoss/dlogits = p - onehot.
    const auto& probs = states.back().out.v;
    Tensor<T> delta(1, 1, static_cast<int>(probs.size()));
    for (size_t j = 0; j < probs.size(); ++j)
        delta.v[j] = probs[j] - (static_cast<int>(j) == true_class ? T(1) : T(0));

    for (size_t ii = arch_.layers.size(); ii-- > 0;) {
        const LayerSpec& l = arch_.layers[ii];
        const Tensor<T>& layer_in = ii == 0 ? input : states[ii - 1].out;
        switch (l.kind) {
            case LayerKind::Softmax:
                break;  // folded into the initial delta
            case LayerKind::Dense: {
                Tensor<T> d_in(1, 1, l.in_dim);
                for (int j = 0; j < l.out_dim; ++j) {
                    const T g = delta.v[static_cast<size_t>(j)] * scale;
                    gb[ii][static_cast<size_t>(j)] += g;
                }
                for (int i = 0; i < l.in_dim; ++i) {
                    const T xi = layer_in.v[static_cast<size_t>(i)];
                    const size_t row = static_cast<size_t>(i) * l.out_dim;
                    T acc = T(0);
                    for (int j = 0; j < l.out_dim; ++j) {
                        const T dj = delta.v[static_cast<size_t>(j)];
                        gw[ii][row + j] += dj * scale * xi;
                        acc += weights_[ii][row + j] * dj;
                    }
                    d_in.v[static_cast<size_t>(i)] = acc;
                }
                delta = std::move(d_in);
                break;
            }
            case LayerKind::Dropout: {
                if (!states[ii].drop_mask.empty()) {
                    for (size_t k = 0; k < delta.v.size(); ++k) delta.v[k] *= states[ii].drop_mask[k];
                }
                break;
            }
            case LayerKind::Relu: {
                for (size_t k = 0; k < delta.v.size(); ++k)
                    if (!(layer_in.v[k] > T(0))) delta.v[k] = T(0);
                break;
            }
            case LayerKind::Flatten: {
                delta.h = layer_in.h;
                delta.w = layer_in.w;
                delta.c = layer_in.c;
                break;
            }
            case LayerKind::MaxPool: {
                Tensor<T> d_in(layer_in.h, layer_in.w, layer_in.c);
                const auto& argmax = states[ii].argmax;
                for (size_t k = 0; k < delta.v.size(); ++k)
                    d_in.v[static_cast<size_t>(argmax[k])] += delta.v[k];
                delta = std::move(d_in);
                break;
            }
            case LayerKind::Conv: {
                Tensor<T> d_in;
                conv_backward(layer_in, weights_[ii], l.kernel, l.filters, delta, gw[ii], gb[ii],
                              d_in, scale);
                delta = std::move(d_in);
                break;
            }
        }
    }
}

template <typename T>
ParamSet<T> Network<T>::zero_like_weights() const {
    ParamSet<T> g(weights_.size());
    for (size_t i = 0; i < weights_.size(); ++i) g[i].assign(weights_[i].size(), T(0));
    return g;
}

template <typename T>
ParamSet<T> Network<T>::zero_like_biases() const {
    ParamSet<T> g(biases_.size());
    for (size_t i = 0; i < biases_.size(); ++i) g[i].assign(biases_[i].size(), T(0));
    return g;
}

template class Network<float>;
template class Network<double>;

namespace {

Tensor<float> block_to_tensor(const Block& block, const Shape3& expect) {
    if (block.patch.rows != expect.h || block.patch.cols != expect.w || expect.c != 1)
        raise(ErrorCode::ShapeMismatch,
              "block patch " + std::to_string(block.patch.rows) + "x" + std::to_string(block.patch.cols) +
                  " does not match network input");
    Tensor<float> t(expect.h, expect.w, 1);
    std::copy(block.patch.data.begin(), block.patch.data.end(), t.v.begin());
    return t;
}

int class_index(TissueClass c) { return static_cast<int>(c) - 1; }  // healthy=0, gg=1, hc=2

}  // namespace

BatchGradients backprop_step(const CnnModel& model, std::span<const Block* const> batch,
                             [[maybe_unused]] const TrainConfig& config, Rng& dropout_rng) {
    if (batch.empty()) raise(ErrorCode::InvalidArgument, "empty batch");
    BatchGradients out;
    out.gw = model.zero_like_weights();
    out.gb = model.zero_like_biases();
    const float scale = 1.0f / static_cast<float>(batch.size());

    std::vector<LayerState<float>> states;
    double loss_sum = 0.0;
    for (const Block* block : batch) {
        const Tensor<float> input = block_to_tensor(*block, model.arch().input);
        model.forward(input, /*training=*/true, &dropout_rng, states);
        const auto probs = model.probabilities(states);
        const int truth = class_index(block->label);
        const float p_true = std::max(probs[static_cast<size_t>(truth)],
                                      std::numeric_limits<float>::min());
        loss_sum += -std::log(static_cast<double>(p_true));
        model.backward(input, states, truth, out.gw, out.gb, scale);
    }
    out.mean_loss = loss_sum / static_cast<double>(batch.size());
    if (!std::isfinite(out.mean_loss))
        raise(ErrorCode::NonFiniteLoss, "training loss diverged");
    return out;
}

std::string TrainHistory::to_csv() const {
    std::string csv = "epoch,train_loss,train_accuracy,validation_accuracy\n";
    char buf[96];
    for (size_t e = 0; e < train_loss.size(); ++e) {
        std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g,%.9g\n", e + 1, train_loss[e],
                      train_accuracy[e], validation_accuracy[e]);
        csv += buf;
    }
    return csv;
}

std::pair<CnnModel, TrainHistory> train(const std::vector<Block>& blocks, const TrainConfig& config,
                                        const Architecture& arch) {
    config.validate();
    if (static_cast<int>(blocks.size()) < config.batch_size)
        raise(ErrorCode::InsufficientData,
              "need at least batch_size=" + std::to_string(config.batch_size) + " blocks, got " +
                  std::to_string(blocks.size()));
    {
        const auto counts = count_by_class(blocks);
        if (counts[0] == 0 || counts[1] == 0 || counts[2] == 0)
            raise(ErrorCode::InsufficientData, "all 3 classes must be present in the training set");
    }

    Architecture train_arch = arch;
    for (LayerSpec& l : train_arch.layers)
        if (l.kind == LayerKind::Dropout) l.dropout_p = static_cast<float>(config.dropout_p);

    CnnModel model(train_arch);
    Rng rng(config.rng_seed);
    model.init_he(rng);

    // Deterministic validation split: shuffled index tail goes to training.
    std::vector<size_t> idx(blocks.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    rng.shuffle(idx);
    const size_t n_val = static_cast<size_t>(std::floor(config.validation_fraction *
                                                        static_cast<double>(blocks.size())));
    std::vector<size_t> val_idx(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_val));
    std::vector<size_t> train_idx(idx.begin() + static_cast<std::ptrdiff_t>(n_val), idx.end());
    if (static_cast<int>(train_idx.size()) < config.batch_size)
        raise(ErrorCode::InsufficientData, "validation split leaves fewer blocks than batch_size");

    ParamSet<float> vel_w = model.zero_like_weights();
    ParamSet<float> vel_b = model.zero_like_biases();

    TrainHistory history;
    std::vector<const Block*> batch;
    std::vector<LayerState<float>> states;

    auto eval_accuracy = [&](const std::vector<size_t>& subset) {
        if (subset.empty()) return std::numeric_limits<double>::quiet_NaN();
        size_t hits = 0;
        for (size_t i : subset) {
            const Prediction p = predict(model, blocks[i].patch);
            hits += p.label == blocks[i].label;
        }
        return static_cast<double>(hits) / static_cast<double>(subset.size());
    };

    const float lr = static_cast<float>(config.learning_rate);
    const float mu = static_cast<float>(config.momentum);

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        rng.shuffle(train_idx);
        double loss_sum = 0.0;
        size_t seen = 0;
        for (size_t start = 0; start < train_idx.size(); start += static_cast<size_t>(config.batch_size)) {
            const size_t end = std::min(train_idx.size(), start + static_cast<size_t>(config.batch_size));
            batch.clear();
            for (size_t i = start; i < end; ++i) batch.push_back(&blocks[train_idx[i]]);
            const BatchGradients g = backprop_step(model, batch, config, rng);
            loss_sum += g.mean_loss * static_cast<double>(batch.size());
            seen += batch.size();
            for (size_t l = 0; l < g.gw.size(); ++l) {
                auto& w = model.weights()[l];
                auto& b = model.biases()[l];
                for (size_t k = 0; k < w.size(); ++k) {
                    vel_w[l][k] = mu * vel_w[l][k] - lr * g.gw[l][k];
                    w[k] += vel_w[l][k];
                }
                for (size_t k = 0; k < b.size(); ++k) {
                    vel_b[l][k] = mu * vel_b[l][k] - lr * g.gb[l][k];
                    b[k] += vel_b[l][k];
                }
            }
        }
        history.train_loss.push_back(seen ? loss_sum / static_cast<double>(seen) : 0.0);
        // Accuracies are measured at epoch end with dropout off.
        history.train_accuracy.push_back(eval_accuracy(train_idx));
        // Falls back to training accuracy when the split produced no
        // validation samples, so the history stays rectangular.
        const double val_acc = val_idx.empty() ? history.train_accuracy.back() : eval_accuracy(val_idx);
        history.validation_accuracy.push_back(val_acc);
    }
    return {std::move(model), std::move(history)};
}

Prediction predict(const CnnModel& model, const Image2D<float>& patch) {
    const Shape3 expect = model.arch().input;
    if (patch.rows != expect.h || patch.cols != expect.w || expect.c != 1)
        raise(ErrorCode::ShapeMismatch, "patch dims do not match network input");
    Tensor<float> input(expect.h, expect.w, 1);
    std::copy(patch.data.begin(), patch.data.end(), input.v.begin());

    std::vector<LayerState<float>> states;
    model.forward(input, /*training=*/false, nullptr, states);
    const auto probs = model.probabilities(states);

    Prediction out;
    out.probabilities.assign(probs.begin(), probs.end());
    int arg = 0;
    for (size_t j = 1; j < probs.size(); ++j)
        if (probs[j] > probs[static_cast<size_t>(arg)]) arg = static_cast<int>(j);
    out.label = static_cast<TissueClass>(arg + 1);
    return out;
}

// --- IPFM serialization ------------------------------------------------------

namespace {

constexpr char kIpfmMagic[4] = {'I', 'P', 'F', 'M'};
constexpr uint32_t kIpfmVersion = 1;

void put_u16m(std::vector<uint8_t>& b, uint16_t v) {
    b.push_back(static_cast<uint8_t>(v));
    b.push_back(static_cast<uint8_t>(v >> 8));
}
void put_u32m(std::vector<uint8_t>& b, uint32_t v) {
    for (int i = 0; i < 4; ++i) b.push_back(static_cast<uint8_t>(v >> (8 * i)));
}
void put_f32m(std::vector<uint8_t>& b, float f) {
    uint32_t v;
    std::memcpy(&v, &f, 4);
    put_u32m(b, v);
}

struct ModelCursor {
    const std::vector<uint8_t>& b;
    size_t pos = 0;
    size_t limit = 0;
    void need(size_t n) const {
        if (pos + n > limit) raise(ErrorCode::BadHeader, "IPFM file truncated");
    }
    uint8_t u8() {
        need(1);
        return b[pos++];
    }
    uint16_t u16() {
        need(2);
        uint16_t v = static_cast<uint16_t>(b[pos]) | static_cast<uint16_t>(b[pos + 1]) << 8;
        pos += 2;
        return v;
    }
    uint32_t u32() {
        need(4);
        uint32_t v = 0;
        for (int i = 3; i >= 0; --i) v = (v << 8) | b[pos + i];
        pos += 4;
        return v;
    }
    float f32() {
        const uint32_t v = u32();
        float f;
        std::memcpy(&f, &v, 4);
        return f;
    }
};

}  // namespace

std::vector<uint8_t> encode_ipfm(const CnnModel& model) {
    const Architecture& arch = model.arch();
    std::vector<uint8_t> out;
    out.insert(out.end(), kIpfmMagic, kIpfmMagic + 4);
    put_u32m(out, kIpfmVersion);
    put_u16m(out, static_cast<uint16_t>(arch.layers.size()));
    put_u32m(out, static_cast<uint32_t>(arch.input.h));
    put_u32m(out, static_cast<uint32_t>(arch.input.w));
    put_u32m(out, static_cast<uint32_t>(arch.input.c));
    for (size_t i = 0; i < arch.layers.size(); ++i) {
        const LayerSpec& l = arch.layers[i];
        out.push_back(static_cast<uint8_t>(l.kind));
        switch (l.kind) {
            case LayerKind::Conv:
                put_u32m(out, static_cast<uint32_t>(l.kernel));
                put_u32m(out, static_cast<uint32_t>(l.filters));
                break;
            case LayerKind::Dense:
                put_u32m(out, static_cast<uint32_t>(l.in_dim));
                put_u32m(out, static_cast<uint32_t>(l.out_dim));
                break;
            case LayerKind::Dropout:
                put_f32m(out, l.dropout_p);
                break;
            default:
                break;
        }
        for (float w : model.weights()[i]) put_f32m(out, w);
        for (float b : model.biases()[i]) put_f32m(out, b);
    }
    const uint32_t crc =
        static_cast<uint32_t>(crc32(0L, out.data(), static_cast<uInt>(out.size())));
    put_u32m(out, crc);
    return out;
}

CnnModel decode_ipfm(const std::vector<uint8_t>& bytes) {
    if (bytes.size() < 8 || std::memcmp(bytes.data(), kIpfmMagic, 4) != 0)
        raise(ErrorCode::BadMagic, "not an IPFM model file");
    if (bytes.size() < 4 + 4 + 2 + 12 + 4) raise(ErrorCode::BadHeader, "IPFM file too short");

    const size_t payload_len = bytes.size() - 4;
    uint32_t stored_crc = 0;
    for (int i = 3; i >= 0; --i) stored_crc = (stored_crc << 8) | bytes[payload_len + i];
    const uint32_t actual_crc =
        static_cast<uint32_t>(crc32(0L, bytes.data(), static_cast<uInt>(payload_len)));
    if (stored_crc != actual_crc)
        raise(ErrorCode::ChecksumMismatch, "IPFM checksum mismatch; file corrupted");

    ModelCursor c{bytes, 4, payload_len};
    const uint32_t version = c.u32();
    if (version != kIpfmVersion)
        raise(ErrorCode::VersionMismatch,
              "IPFM version " + std::to_string(version) + ", expected " + std::to_string(kIpfmVersion));
    const uint16_t layer_count = c.u16();

    Architecture arch;
    arch.input.h = static_cast<int>(c.u32());
    arch.input.w = static_cast<int>(c.u32());
    arch.input.c = static_cast<int>(c.u32());

    // First pass builds the layer table while tracking the shape chain so the
    // parameter payload sizes are known.
    struct PendingParams {
        std::vector<float> w, b;
    };
    std::vector<PendingParams> params;
    Shape3 s = arch.input;
    if (s.h < 1 || s.w < 1 || s.c < 1) raise(ErrorCode::ShapeChainBroken, "bad input shape");
    for (uint16_t i = 0; i < layer_count; ++i) {
        const uint8_t tag = c.u8();
        if (tag < 1 || tag > 7) raise(ErrorCode::BadHeader, "unknown layer tag " + std::to_string(tag));
        LayerSpec l{static_cast<LayerKind>(tag)};
        PendingParams p;
        switch (l.kind) {
            case LayerKind::Conv: {
                l.kernel = static_cast<int>(c.u32());
                l.filters = static_cast<int>(c.u32());
                if (l.kernel < 1 || l.kernel % 2 == 0 || l.filters < 1)
                    raise(ErrorCode::ShapeChainBroken, "bad conv dims in file");
                const size_t nw = static_cast<size_t>(l.filters) * s.c * l.kernel * l.kernel;
                p.w.resize(nw);
                p.b.resize(static_cast<size_t>(l.filters));
                s.c = l.filters;
                break;
            }
            case LayerKind::Dense: {
                l.in_dim = static_cast<int>(c.u32());
                l.out_dim = static_cast<int>(c.u32());
                p.w.resize(static_cast<size_t>(l.in_dim) * l.out_dim);
                p.b.resize(static_cast<size_t>(l.out_dim));
                break;
            }
            case LayerKind::Dropout:
                l.dropout_p = c.f32();
                break;
            case LayerKind::MaxPool:
                if (s.h % 2 != 0 || s.w % 2 != 0)
                    raise(ErrorCode::ShapeChainBroken, "maxpool on odd dims in file");
                s.h /= 2;
                s.w /= 2;
                break;
            case LayerKind::Flatten:
                s = {1, 1, static_cast<int>(s.count())};
                break;
            default:
                break;
        }
        for (float& w : p.w) w = c.f32();
        for (float& b : p.b) b = c.f32();
        arch.layers.push_back(l);
        params.push_back(std::move(p));
    }
    if (c.pos != payload_len) raise(ErrorCode::BadHeader, "trailing bytes in IPFM payload");

    // Architecture::validate (run by the constructor) rejects broken chains.
    CnnModel model(arch);
    for (size_t i = 0; i < params.size(); ++i) {
        if (model.weights()[i].size() != params[i].w.size() ||
            model.biases()[i].size() != params[i].b.size())
            raise(ErrorCode::ShapeChainBroken, "parameter tensor does not match declared shape");
        model.weights()[i] = std::move(params[i].w);
        model.biases()[i] = std::move(params[i].b);
    }
    for (size_t i = 0; i < params.size(); ++i) {
        for (float v : model.weights()[i])
            if (!std::isfinite(v)) raise(ErrorCode::BadHeader, "non-finite parameter in model file");
        for (float v : model.biases()[i])
            if (!std::isfinite(v)) raise(ErrorCode::BadHeader, "non-finite parameter in model file");
    }
    return model;
}

// --- gradient verification ---------------------------------------------------

double gradient_rel_error(double analytic, double numeric) {
    const double denom = std::max(std::abs(analytic) + std::abs(numeric), 1e-8);
    return std::abs(analytic - numeric) / denom;
}

std::pair<ParamSet<double>, ParamSet<double>> analytic_gradients(const Network<double>& net,
                                                                 const Tensor<double>& input,
                                                                 int true_class) {
    ParamSet<double> gw = net.zero_like_weights();
    ParamSet<double> gb = net.zero_like_biases();
    std::vector<LayerState<double>> states;
    net.forward(input, /*training=*/false, nullptr, states);
    net.backward(input, states, true_class, gw, gb, 1.0);
    return {std::move(gw), std::move(gb)};
}

namespace {

double loss_of(Network<double>& net, const Tensor<double>& input, int true_class) {
    std::vector<LayerState<double>> states;
    net.forward(input, /*training=*/false, nullptr, states);
    const auto probs = net.probabilities(states);
    return -std::log(std::max(probs[static_cast<size_t>(true_class)], 1e-300));
}

}  // namespace

std::pair<ParamSet<double>, ParamSet<double>> numeric_gradients(Network<double>& net,
                                                                const Tensor<double>& input,
                                                                int true_class, double h) {
    ParamSet<double> gw = net.zero_like_weights();
    ParamSet<double> gb = net.zero_like_biases();
    for (size_t l = 0; l < net.weights().size(); ++l) {
        for (size_t k = 0; k < net.weights()[l].size(); ++k) {
            double& p = net.weights()[l][k];
            const double saved = p;
            p = saved + h;
            const double lp = loss_of(net, input, true_class);
            p = saved - h;
            const double lm = loss_of(net, input, true_class);
            p = saved;
            gw[l][k] = (lp - lm) / (2.0 * h);
        }
        for (size_t k = 0; k < net.biases()[l].size(); ++k) {
            double& p = net.biases()[l][k];
            const double saved = p;
            p = saved + h;
            const double lp = loss_of(net, input, true_class);
            p = saved - h;
            const double lm = loss_of(net, input, true_class);
            p = saved;
            gb[l][k] = (lp - lm) / (2.0 * h);
        }
    }
    return {std::move(gw), std::move(gb)};
}

double max_rel_error(const std::pair<ParamSet<double>, ParamSet<double>>& a,
                     const std::pair<ParamSet<double>, ParamSet<double>>& b) {
    double worst = 0.0;
    for (size_t l = 0; l < a.first.size(); ++l) {
        for (size_t k = 0; k < a.first[l].size(); ++k)
            worst = std::max(worst, gradient_rel_error(a.first[l][k], b.first[l][k]));
        for (size_t k = 0; k < a.second[l].size(); ++k)
            worst = std::max(worst, gradient_rel_error(a.second[l][k], b.second[l][k]));
    }
    return worst;
}

GradientCheckResult gradient_check(Network<double>& net, const Tensor<double>& input,
                                   int true_class, double h) {
    const auto analytic = analytic_gradients(net, input, true_class);
    const auto numeric = numeric_gradients(net, input, true_class, h);
    GradientCheckResult res;
    res.max_relative_error = max_rel_error(analytic, numeric);
    for (const auto& w : analytic.first) res.params_checked += w.size();
    for (const auto& b : analytic.second) res.params_checked += b.size();
    return res;
}

}  // namespace ipfcad
