#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <random>

#include "softsparse/error.hpp"
#include "softsparse/lenet.hpp"

namespace softsparse {

namespace {

constexpr std::size_t kImage = 28;

std::array<std::vector<float>*, 10> params_of(FloatLeNet& n) {
    return {&n.c1_w, &n.c1_b, &n.c3_w, &n.c3_b, &n.c5_w, &n.c5_b, &n.f6_w, &n.f6_b, &n.out_w, &n.out_b};
}

std::array<const std::vector<float>*, 10> params_of(const FloatLeNet& n) {
    return {&n.c1_w, &n.c1_b, &n.c3_w, &n.c3_b, &n.c5_w, &n.c5_b, &n.f6_w, &n.f6_b, &n.out_w, &n.out_b};
}

float act(Activation a, float z) {
    return a == Activation::ReLU ? std::max(z, 0.0f) : std::tanh(z);
}

// Derivative expressed through the pre-activation z and output h.
float act_grad(Activation a, float z, float h) {
    return a == Activation::ReLU ? (z > 0.0f ? 1.0f : 0.0f) : 1.0f - h * h;
}

// Valid convolution out[o][y][x] = b[o] + sum w[o][i][r][s] * in[i][y+r][x+s].
void conv_forward(const float* in, std::size_t ci, std::size_t h, std::size_t w, const float* wt,
                  const float* b, std::size_t co, std::size_t k, float* out) {
    const std::size_t oh = h - k + 1, ow = w - k + 1;
    for (std::size_t o = 0; o < co; ++o) {
        float* dst = out + o * oh * ow;
        std::fill(dst, dst + oh * ow, b[o]);
        for (std::size_t i = 0; i < ci; ++i) {
            const float* src = in + i * h * w;
            for (std::size_t r = 0; r < k; ++r) {
                for (std::size_t s = 0; s < k; ++s) {
                    const float kv = wt[((o * ci + i) * k + r) * k + s];
                    for (std::size_t y = 0; y < oh; ++y) {
                        const float* row = src + (y + r) * w + s;
                        float* drow = dst + y * ow;
                        for (std::size_t x = 0; x < ow; ++x) drow[x] += kv * row[x];
                    }
                }
            }
        }
    }
}

// Accumulates weight/bias gradients and, if din is set, the input gradient.
void conv_backward(const float* in, std::size_t ci, std::size_t h, std::size_t w, const float* wt,
                   std::size_t co, std::size_t k, const float* dout, float* gw, float* gb, float* din) {
    const std::size_t oh = h - k + 1, ow = w - k + 1;
    for (std::size_t o = 0; o < co; ++o) {
        const float* g = dout + o * oh * ow;
        gb[o] += std::accumulate(g, g + oh * ow, 0.0f);
        for (std::size_t i = 0; i < ci; ++i) {
            const float* src = in + i * h * w;
            float* dsrc = din ? din + i * h * w : nullptr;
            for (std::size_t r = 0; r < k; ++r) {
                for (std::size_t s = 0; s < k; ++s) {
                    const std::size_t widx = ((o * ci + i) * k + r) * k + s;
                    const float kv = wt[widx];
                    float acc = 0.0f;
                    for (std::size_t y = 0; y < oh; ++y) {
                        const float* row = src + (y + r) * w + s;
                        const float* grow = g + y * ow;
                        for (std::size_t x = 0; x < ow; ++x) acc += grow[x] * row[x];
                        if (dsrc) {
                            float* drow = dsrc + (y + r) * w + s;
                            for (std::size_t x = 0; x < ow; ++x) drow[x] += kv * grow[x];
                        }
                    }
                    gw[widx] += acc;
                }
            }
        }
    }
}

void pool_forward(const float* in, std::size_t c, std::size_t h, std::size_t w, float* out) {
    const std::size_t oh = h / 2, ow = w / 2;
    for (std::size_t ch = 0; ch < c; ++ch) {
        const float* src = in + ch * h * w;
        for (std::size_t y = 0; y < oh; ++y) {
            for (std::size_t x = 0; x < ow; ++x) {
                out[(ch * oh + y) * ow + x] = 0.25f * (src[2 * y * w + 2 * x] + src[2 * y * w + 2 * x + 1] +
                                                       src[(2 * y + 1) * w + 2 * x] +
                                                       src[(2 * y + 1) * w + 2 * x + 1]);
            }
        }
    }
}

void pool_backward(const float* dout, std::size_t c, std::size_t h, std::size_t w, float* din) {
    const std::size_t ow = w / 2;
    for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t y = 0; y < h; ++y) {
            for (std::size_t x = 0; x < w; ++x) {
                din[(ch * h + y) * w + x] = 0.25f * dout[(ch * (h / 2) + y / 2) * ow + x / 2];
            }
        }
    }
}

void dense_forward(const float* in, std::size_t ni, const float* wt, const float* b, std::size_t no, float* out) {
    for (std::size_t o = 0; o < no; ++o) {
        const float* row = wt + o * ni;
        float acc = b[o];
        for (std::size_t i = 0; i < ni; ++i) acc += row[i] * in[i];
        out[o] = acc;
    }
}

void dense_backward(const float* in, std::size_t ni, const float* wt, std::size_t no, const float* dout,
                    float* gw, float* gb, float* din) {
    std::fill(din, din + ni, 0.0f);
    for (std::size_t o = 0; o < no; ++o) {
        const float g = dout[o];
        gb[o] += g;
        const float* row = wt + o * ni;
        float* grow = gw + o * ni;
        for (std::size_t i = 0; i < ni; ++i) {
            grow[i] += g * in[i];
            din[i] += row[i] * g;
        }
    }
}

// Activations of one forward pass, kept for backpropagation.
struct Tape {
    std::array<float, 784> x{};
    std::array<float, 6 * 24 * 24> z1{}, h1{};
    std::array<float, 6 * 12 * 12> p1{};
    std::array<float, 16 * 8 * 8> z3{}, h3{};
    std::array<float, 16 * 4 * 4> p3{};
    std::array<float, 120> z5{}, h5{};
    std::array<float, 84> z6{}, h6{};
    std::array<float, 10> logits{};
};

template <std::size_t N>
void activate(Activation a, const std::array<float, N>& z, std::array<float, N>& h) {
    for (std::size_t i = 0; i < N; ++i) h[i] = act(a, z[i]);
}

void forward(const FloatLeNet& n, std::span<const std::uint8_t> image, Tape& t) {
    if (image.size() != kImage * kImage) {
        throw ShapeError("LeNet-5 expects a 28x28 image");
    }
    for (std::size_t i = 0; i < t.x.size(); ++i) t.x[i] = image[i] / 256.0f;
    conv_forward(t.x.data(), 1, 28, 28, n.c1_w.data(), n.c1_b.data(), 6, 5, t.z1.data());
    activate(n.activation, t.z1, t.h1);
    pool_forward(t.h1.data(), 6, 24, 24, t.p1.data());
    conv_forward(t.p1.data(), 6, 12, 12, n.c3_w.data(), n.c3_b.data(), 16, 5, t.z3.data());
    activate(n.activation, t.z3, t.h3);
    pool_forward(t.h3.data(), 16, 8, 8, t.p3.data());
    dense_forward(t.p3.data(), 256, n.c5_w.data(), n.c5_b.data(), 120, t.z5.data());
    activate(n.activation, t.z5, t.h5);
    dense_forward(t.h5.data(), 120, n.f6_w.data(), n.f6_b.data(), 84, t.z6.data());
    activate(n.activation, t.z6, t.h6);
    dense_forward(t.h6.data(), 84, n.out_w.data(), n.out_b.data(), 10, t.logits.data());
}

// Softmax cross-entropy; returns the loss and writes d(loss)/d(logits).
double softmax_xent(const std::array<float, 10>& logits, int label, std::array<float, 10>& grad) {
    const float m = *std::max_element(logits.begin(), logits.end());
    double z = 0;
    for (std::size_t i = 0; i < 10; ++i) z += std::exp(double(logits[i] - m));
    for (std::size_t i = 0; i < 10; ++i) {
        grad[i] = static_cast<float>(std::exp(double(logits[i] - m)) / z) - (int(i) == label ? 1.0f : 0.0f);
    }
    return -(double(logits[label] - m) - std::log(z));
}

template <std::size_t N>
void through_activation(Activation a, const std::array<float, N>& z, const std::array<float, N>& h,
                        std::array<float, N>& g) {
    for (std::size_t i = 0; i < N; ++i) g[i] *= act_grad(a, z[i], h[i]);
}

void backward(const FloatLeNet& n, const Tape& t, const std::array<float, 10>& dlogits, FloatLeNet& g) {
    const Activation a = n.activation;
    std::array<float, 84> d6{};
    dense_backward(t.h6.data(), 84, n.out_w.data(), 10, dlogits.data(), g.out_w.data(), g.out_b.data(), d6.data());
    through_activation(a, t.z6, t.h6, d6);
    std::array<float, 120> d5{};
    dense_backward(t.h5.data(), 120, n.f6_w.data(), 84, d6.data(), g.f6_w.data(), g.f6_b.data(), d5.data());
    through_activation(a, t.z5, t.h5, d5);
    std::array<float, 256> dp3{};
    dense_backward(t.p3.data(), 256, n.c5_w.data(), 120, d5.data(), g.c5_w.data(), g.c5_b.data(), dp3.data());
    std::array<float, 16 * 8 * 8> d3{};
    pool_backward(dp3.data(), 16, 8, 8, d3.data());
    through_activation(a, t.z3, t.h3, d3);
    std::array<float, 6 * 12 * 12> dp1{};
    conv_backward(t.p1.data(), 6, 12, 12, n.c3_w.data(), 16, 5, d3.data(), g.c3_w.data(), g.c3_b.data(),
                  dp1.data());
    std::array<float, 6 * 24 * 24> d1{};
    pool_backward(dp1.data(), 6, 24, 24, d1.data());
    through_activation(a, t.z1, t.h1, d1);
    conv_backward(t.x.data(), 1, 28, 28, n.c1_w.data(), 6, 5, d1.data(), g.c1_w.data(), g.c1_b.data(), nullptr);
}

FloatLeNet zeros_like(const FloatLeNet& n) {
    FloatLeNet z = n;
    for (auto* p : params_of(z)) std::fill(p->begin(), p->end(), 0.0f);
    return z;
}

} // namespace

FloatLeNet FloatLeNet::init(Activation activation, std::uint64_t seed) {
    FloatLeNet n;
    n.activation = activation;
    std::mt19937_64 rng(seed);
    auto layer = [&](std::vector<float>& w, std::vector<float>& b, std::size_t out, std::size_t fan_in,
                     std::size_t fan_out) {
        const double limit = activation == Activation::ReLU ? std::sqrt(6.0 / double(fan_in))
                                                            : std::sqrt(6.0 / double(fan_in + fan_out));
        std::uniform_real_distribution<double> dist(-limit, limit);
        w.resize(out * fan_in);
        for (auto& v : w) v = static_cast<float>(dist(rng));
        b.assign(out, 0.0f);
    };
    layer(n.c1_w, n.c1_b, 6, 25, 6 * 25);
    layer(n.c3_w, n.c3_b, 16, 150, 16 * 25);
    layer(n.c5_w, n.c5_b, 120, 256, 120);
    layer(n.f6_w, n.f6_b, 84, 120, 84);
    layer(n.out_w, n.out_b, 10, 84, 10);
    return n;
}

std::uint64_t FloatLeNet::checksum() const {
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&](unsigned char c) {
        h ^= c;
        h *= 1099511628211ull;
    };
    mix(static_cast<unsigned char>(activation));
    for (const auto* p : params_of(*this)) {
        for (float v : *p) {
            const auto u = std::bit_cast<std::uint32_t>(v);
            for (int k = 0; k < 4; ++k) mix(static_cast<unsigned char>(u >> (8 * k)));
        }
    }
    return h;
}

std::vector<float> float_forward(const FloatLeNet& net, std::span<const std::uint8_t> image) {
    Tape t;
    forward(net, image, t);
    return {t.logits.begin(), t.logits.end()};
}

double float_accuracy(const FloatLeNet& net, const MnistSet& set) {
    if (set.empty()) {
        throw DomainError("accuracy of an empty set");
    }
    std::size_t correct = 0;
    Tape t;
    for (std::size_t i = 0; i < set.size(); ++i) {
        forward(net, set.image(i), t);
        const auto pred = std::max_element(t.logits.begin(), t.logits.end()) - t.logits.begin();
        correct += pred == set.label(i);
    }
    return double(correct) / double(set.size());
}

FloatLeNet train_float(const MnistSet& train, Activation activation, const TrainConfig& config,
                       const std::function<void(int, double)>& progress) {
    if (config.epochs < 0 || config.batch_size == 0 || !(config.learning_rate > 0)) {
        throw DomainError("invalid training configuration");
    }
    if (train.empty() || train.rows() != kImage || train.cols() != kImage) {
        throw DomainError("training needs a non-empty set of 28x28 images");
    }
    FloatLeNet net = FloatLeNet::init(activation, config.seed);
    FloatLeNet grad = zeros_like(net);
    FloatLeNet velocity = zeros_like(net);
    std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ull);
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    double lr = config.learning_rate;
    Tape tape;
    std::array<float, 10> dlogits{};

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t end = std::min(order.size(), start + config.batch_size);
            for (auto* p : params_of(grad)) std::fill(p->begin(), p->end(), 0.0f);
            for (std::size_t k = start; k < end; ++k) {
                const std::size_t idx = order[k];
                forward(net, train.image(idx), tape);
                loss_sum += softmax_xent(tape.logits, train.label(idx), dlogits);
                backward(net, tape, dlogits, grad);
            }
            const float step = static_cast<float>(lr / double(end - start));
            const float mu = static_cast<float>(config.momentum);
            auto ps = params_of(net);
            auto gs = params_of(grad);
            auto vs = params_of(velocity);
            for (std::size_t p = 0; p < ps.size(); ++p) {
                auto& w = *ps[p];
                const auto& g = *gs[p];
                auto& v = *vs[p];
                // Even entries of params_of are weights, odd ones biases.
                const float decay = p % 2 == 0 ? static_cast<float>(lr * config.weight_decay) : 0.0f;
                for (std::size_t i = 0; i < w.size(); ++i) {
                    v[i] = mu * v[i] - step * g[i] - decay * w[i];
                    w[i] += v[i];
                }
            }
        }
        const double mean_loss = loss_sum / double(order.size());
        if (!std::isfinite(mean_loss)) {
            throw Error("training diverged at epoch " + std::to_string(epoch + 1));
        }
        if (progress) progress(epoch + 1, mean_loss);
        lr *= config.lr_decay;
    }
    return net;
}

} // namespace softsparse
