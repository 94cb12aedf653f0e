#pragma once

#include <cmath>
#include <cstring>
#include <filesystem>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "omseg/errors.hpp"
#include "omseg/fsio.hpp"
#include "omseg/layers.hpp"
#include "omseg/rng.hpp"
#include "omseg/tensor.hpp"

namespace omseg {

struct UNetConfig {
    int in_channels = 2;
    int out_channels = 1;
    int depth = 2;
    int base_channels = 8;
    int input_hw = 64;

    friend bool operator==(const UNetConfig&, const UNetConfig&) = default;

    void validate() const {
        if (in_channels < 1 || out_channels < 1 || base_channels < 1)
            throw InvalidArgumentError("channel counts must be >= 1");
        if (depth < 1) throw InvalidArgumentError("depth must be >= 1");
        if (depth > 30 || input_hw < 1 || input_hw % (1 << depth) != 0)
            throw InvalidArgumentError("input size must be divisible by 2^depth");
    }

    int channels_at(int level) const { return base_channels << level; }
};

enum class Mode { Train, Eval };

namespace detail {

template <class T>
struct DoubleConv {
    Conv2d<T> conv1, conv2;
    BatchNorm2d<T> bn1, bn2;
    ReLU<T> relu1, relu2;

    DoubleConv(int in_c, int out_c)
        : conv1(in_c, out_c, 3, 1), conv2(out_c, out_c, 3, 1), bn1(out_c), bn2(out_c) {}

    Tensor<T> forward(const Tensor<T>& x, bool record, bool train) {
        Tensor<T> h = relu1.forward(bn1.forward(conv1.forward(x, record), record, train), record);
        return relu2.forward(bn2.forward(conv2.forward(h, record), record, train), record);
    }

    Tensor<T> backward(const Tensor<T>& g) {
        Tensor<T> h = conv2.backward(bn2.backward(relu2.backward(g)));
        return conv1.backward(bn1.backward(relu1.backward(h)));
    }
};

}  // namespace detail

// Symmetric encoder-decoder: `depth` levels of [DoubleConv, pool], a DoubleConv
// bottleneck, then per level [transposed conv halving channels, skip concat,
// DoubleConv], and a 1x1 sigmoid head.
template <class T>
class UNet {
  public:
    explicit UNet(const UNetConfig& cfg) : cfg_(cfg), head_(cfg.base_channels, cfg.out_channels, 1, 0) {
        cfg.validate();
        int in_c = cfg.in_channels;
        for (int d = 0; d < cfg.depth; ++d) {
            enc_.push_back(std::make_unique<detail::DoubleConv<T>>(in_c, cfg.channels_at(d)));
            pools_.emplace_back();
            in_c = cfg.channels_at(d);
        }
        bottleneck_ = std::make_unique<detail::DoubleConv<T>>(cfg.channels_at(cfg.depth - 1),
                                                              cfg.channels_at(cfg.depth));
        ups_.resize(cfg.depth);
        dec_.resize(cfg.depth);
        for (int d = cfg.depth - 1; d >= 0; --d) {
            ups_[d] = std::make_unique<ConvTranspose2d<T>>(cfg.channels_at(d + 1), cfg.channels_at(d));
            dec_[d] = std::make_unique<detail::DoubleConv<T>>(cfg.channels_at(d + 1), cfg.channels_at(d));
        }
        register_parameters();
    }

    UNet(const UNet&) = delete;
    UNet& operator=(const UNet&) = delete;

    const UNetConfig& config() const { return cfg_; }
    Mode mode() const { return mode_; }
    void set_mode(Mode m) { mode_ = m; }

    const std::vector<Parameter<T>*>& parameters() const { return params_; }

    std::vector<Parameter<T>*> trainable_parameters() const {
        std::vector<Parameter<T>*> out;
        for (auto* p : params_)
            if (p->trainable) out.push_back(p);
        return out;
    }

    std::size_t trainable_count() const {
        std::size_t n = 0;
        for (auto* p : params_)
            if (p->trainable) n += p->tensor.numel();
        return n;
    }

    // Kaiming-style uniform fill, bound sqrt(6 / fan_in), in registry order.
    // Biases 0, gamma 1, beta 0, running stats (0, 1).
    void init_parameters(std::uint64_t seed) {
        Rng rng(seed);
        auto fill_conv = [&rng](Parameter<T>& w, int fan_in) {
            const double bound = std::sqrt(6.0 / fan_in);
            for (auto& v : w.tensor.values) v = static_cast<T>(rng.uniform(-bound, bound));
        };
        auto reset_bn = [](BatchNorm2d<T>& bn) {
            std::fill(bn.gamma.tensor.values.begin(), bn.gamma.tensor.values.end(), T(1));
            std::fill(bn.beta.tensor.values.begin(), bn.beta.tensor.values.end(), T(0));
            std::fill(bn.running_mean.tensor.values.begin(), bn.running_mean.tensor.values.end(), T(0));
            std::fill(bn.running_var.tensor.values.begin(), bn.running_var.tensor.values.end(), T(1));
        };
        auto init_double = [&](detail::DoubleConv<T>& b) {
            fill_conv(b.conv1.weight, b.conv1.fan_in());
            std::fill(b.conv1.bias.tensor.values.begin(), b.conv1.bias.tensor.values.end(), T(0));
            reset_bn(b.bn1);
            fill_conv(b.conv2.weight, b.conv2.fan_in());
            std::fill(b.conv2.bias.tensor.values.begin(), b.conv2.bias.tensor.values.end(), T(0));
            reset_bn(b.bn2);
        };
        for (auto& e : enc_) init_double(*e);
        init_double(*bottleneck_);
        for (int d = cfg_.depth - 1; d >= 0; --d) {
            fill_conv(ups_[d]->weight, ups_[d]->fan_in());
            std::fill(ups_[d]->bias.tensor.values.begin(), ups_[d]->bias.tensor.values.end(), T(0));
            init_double(*dec_[d]);
        }
        fill_conv(head_.weight, head_.fan_in());
        std::fill(head_.bias.tensor.values.begin(), head_.bias.tensor.values.end(), T(0));
    }

    void zero_grad() {
        for (auto* p : params_)
            if (p->trainable) p->tensor.zero_grad();
    }

    Tensor<T> forward(const Tensor<T>& x) {
        if (x.shape.size() != 4 || x.shape[1] != cfg_.in_channels || x.shape[2] != cfg_.input_hw ||
            x.shape[3] != cfg_.input_hw)
            throw ShapeError("unet input must be N x in_channels x size x size");
        for (const T& v : x.values)
            if (!(v >= T(0) && v <= T(1)))
                throw InvalidArgumentError("unet inputs must lie in [0, 1]");

        const bool record = mode_ == Mode::Train;
        const bool train = mode_ == Mode::Train;
        Tensor<T> cur = x;
        std::vector<Tensor<T>> skips;
        for (int d = 0; d < cfg_.depth; ++d) {
            Tensor<T> s = enc_[d]->forward(cur, record, train);
            cur = pools_[d].forward(s, record);
            skips.push_back(std::move(s));
        }
        cur = bottleneck_->forward(cur, record, train);
        for (int d = cfg_.depth - 1; d >= 0; --d) {
            Tensor<T> up = ups_[d]->forward(cur, record);
            cur = dec_[d]->forward(concat_channels(skips[d], up), record, train);
        }
        Tensor<T> out = sigmoid_.forward(head_.forward(cur, record), record);
        recorded_ = record;
        return out;
    }

    // Populates trainable gradients from d(loss)/d(output); returns d(loss)/d(input).
    Tensor<T> backward(const Tensor<T>& grad_output) {
        if (!recorded_) throw StateError("unet backward without a recorded train forward");
        Tensor<T> g = head_.backward(sigmoid_.backward(grad_output));
        std::vector<Tensor<T>> skip_grads(cfg_.depth);
        for (int d = 0; d < cfg_.depth; ++d) {
            g = dec_[d]->backward(g);
            auto [gs, gu] = split_channels(g, cfg_.channels_at(d));
            skip_grads[d] = std::move(gs);
            g = ups_[d]->backward(gu);
        }
        g = bottleneck_->backward(g);
        for (int d = cfg_.depth - 1; d >= 0; --d) {
            g = pools_[d].backward(g);
            for (std::size_t i = 0; i < g.numel(); ++i) g.values[i] += skip_grads[d].values[i];
            g = enc_[d]->backward(g);
        }
        return g;
    }

  private:
    void register_bn(BatchNorm2d<T>& bn, const std::string& prefix) {
        bn.gamma.name = prefix + ".gamma";
        bn.beta.name = prefix + ".beta";
        bn.running_mean.name = prefix + ".running_mean";
        bn.running_var.name = prefix + ".running_var";
        params_.push_back(&bn.gamma);
        params_.push_back(&bn.beta);
        params_.push_back(&bn.running_mean);
        params_.push_back(&bn.running_var);
    }

    void register_double(detail::DoubleConv<T>& b, const std::string& prefix) {
        b.conv1.weight.name = prefix + ".conv1.weight";
        b.conv1.bias.name = prefix + ".conv1.bias";
        params_.push_back(&b.conv1.weight);
        params_.push_back(&b.conv1.bias);
        register_bn(b.bn1, prefix + ".bn1");
        b.conv2.weight.name = prefix + ".conv2.weight";
        b.conv2.bias.name = prefix + ".conv2.bias";
        params_.push_back(&b.conv2.weight);
        params_.push_back(&b.conv2.bias);
        register_bn(b.bn2, prefix + ".bn2");
    }

    void register_parameters() {
        for (int d = 0; d < cfg_.depth; ++d) register_double(*enc_[d], "enc" + std::to_string(d));
        register_double(*bottleneck_, "bottleneck");
        for (int d = cfg_.depth - 1; d >= 0; --d) {
            const std::string prefix = "dec" + std::to_string(d);
            ups_[d]->weight.name = prefix + ".up.weight";
            ups_[d]->bias.name = prefix + ".up.bias";
            params_.push_back(&ups_[d]->weight);
            params_.push_back(&ups_[d]->bias);
            register_double(*dec_[d], prefix);
        }
        head_.weight.name = "head.weight";
        head_.bias.name = "head.bias";
        params_.push_back(&head_.weight);
        params_.push_back(&head_.bias);
    }

    UNetConfig cfg_;
    std::vector<std::unique_ptr<detail::DoubleConv<T>>> enc_;
    std::vector<MaxPool2x2<T>> pools_;
    std::unique_ptr<detail::DoubleConv<T>> bottleneck_;
    std::vector<std::unique_ptr<ConvTranspose2d<T>>> ups_;
    std::vector<std::unique_ptr<detail::DoubleConv<T>>> dec_;
    Conv2d<T> head_;
    Sigmoid<T> sigmoid_;
    Mode mode_ = Mode::Train;
    std::vector<Parameter<T>*> params_;
    bool recorded_ = false;
};

// Checkpoint: <stem>.ckpt manifest plus <stem>.ckptraw holding every parameter
// as little-endian f32 in registry order.
template <class T>
inline void save_checkpoint(const UNet<T>& model, const std::filesystem::path& stem) {
    nlohmann::json manifest;
    manifest["format_version"] = 1;
    manifest["config"] = {{"in_channels", model.config().in_channels},
                          {"out_channels", model.config().out_channels},
                          {"depth", model.config().depth},
                          {"base_channels", model.config().base_channels},
                          {"input_hw", model.config().input_hw}};
    nlohmann::json entries = nlohmann::json::array();
    std::vector<float> payload;
    for (const auto* p : model.parameters()) {
        entries.push_back({{"name", p->name}, {"shape", p->tensor.shape}, {"trainable", p->trainable}});
        for (const T& v : p->tensor.values) payload.push_back(static_cast<float>(v));
    }
    manifest["entries"] = entries;

    std::filesystem::path hdr = stem;
    hdr += ".ckpt";
    std::filesystem::path raw = stem;
    raw += ".ckptraw";
    detail::atomic_write(raw, reinterpret_cast<const char*>(payload.data()), payload.size() * 4);
    detail::atomic_write(hdr, manifest.dump(2) + "\n");
}

inline UNetConfig read_checkpoint_config(const std::filesystem::path& stem) {
    std::filesystem::path hdr = stem;
    hdr += ".ckpt";
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(detail::read_file_bytes(hdr));
    } catch (const nlohmann::json::exception& e) {
        throw MalformedHeaderError(hdr.string() + ": " + e.what());
    }
    if (!manifest.contains("config")) throw MalformedHeaderError(hdr.string() + ": missing config");
    const auto& c = manifest["config"];
    UNetConfig cfg;
    try {
        cfg.in_channels = c.at("in_channels").get<int>();
        cfg.out_channels = c.at("out_channels").get<int>();
        cfg.depth = c.at("depth").get<int>();
        cfg.base_channels = c.at("base_channels").get<int>();
        cfg.input_hw = c.at("input_hw").get<int>();
    } catch (const nlohmann::json::exception& e) {
        throw MalformedHeaderError(hdr.string() + ": " + e.what());
    }
    return cfg;
}

// Loads into an existing model; names, shapes, and config must match exactly.
template <class T>
inline void load_checkpoint(UNet<T>& model, const std::filesystem::path& stem) {
    std::filesystem::path hdr = stem;
    hdr += ".ckpt";
    std::filesystem::path raw = stem;
    raw += ".ckptraw";

    const UNetConfig stored = read_checkpoint_config(stem);
    if (!(stored == model.config()))
        throw ShapeError(hdr.string() + ": checkpoint architecture disagrees with the model");

    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(detail::read_file_bytes(hdr));
    } catch (const nlohmann::json::exception& e) {
        throw MalformedHeaderError(hdr.string() + ": " + e.what());
    }
    if (!manifest.contains("entries") || !manifest["entries"].is_array())
        throw MalformedHeaderError(hdr.string() + ": missing entries");
    const auto& entries = manifest["entries"];
    const auto& params = model.parameters();
    if (entries.size() != params.size())
        throw ShapeError(hdr.string() + ": parameter inventory size mismatch");

    const std::vector<char> bytes = detail::read_file_bytes(raw);
    std::size_t total = 0;
    for (const auto* p : params) total += p->tensor.numel();
    if (bytes.size() != total * 4)
        throw PayloadLengthError(raw.string() + ": expected " + std::to_string(total * 4) +
                                 " bytes, found " + std::to_string(bytes.size()));

    std::size_t offset = 0;
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& e = entries[i];
        Parameter<T>* p = params[i];
        if (!e.contains("name") || e["name"].get<std::string>() != p->name)
            throw ShapeError(hdr.string() + ": entry " + std::to_string(i) + " name mismatch");
        if (!e.contains("shape") || e["shape"].get<std::vector<int>>() != p->tensor.shape)
            throw ShapeError(hdr.string() + ": shape mismatch at " + p->name);
        for (auto& v : p->tensor.values) {
            float f;
            std::memcpy(&f, bytes.data() + offset, 4);
            v = static_cast<T>(f);
            offset += 4;
        }
    }
}

}  // namespace omseg
