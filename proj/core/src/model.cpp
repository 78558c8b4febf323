#include "cellcontrast/model.hpp"

#include <cmath>
#include <stdexcept>

#include "cellcontrast/nd/ops.hpp"
#include "cellcontrast/rng.hpp"

namespace cellcontrast::model {

EncoderPreset parse_encoder_preset(std::string_view name) {
    if (name == "tiny") {
        return EncoderPreset::tiny;
    }
    if (name == "small") {
        return EncoderPreset::small;
    }
    if (name == "medium") {
        return EncoderPreset::medium;
    }
    throw std::invalid_argument("unknown encoder preset '" + std::string(name) + "' (expected tiny, small or medium)");
}

std::string to_string(EncoderPreset preset) {
    switch (preset) {
        case EncoderPreset::tiny: return "tiny";
        case EncoderPreset::small: return "small";
        case EncoderPreset::medium: return "medium";
    }
    return "?";
}

HeadKind parse_head_kind(std::string_view name) {
    if (name == "identity") {
        return HeadKind::identity;
    }
    if (name == "linear") {
        return HeadKind::linear;
    }
    if (name == "mlp2") {
        return HeadKind::mlp2;
    }
    throw std::invalid_argument("unknown head kind '" + std::string(name) + "' (expected identity, linear or mlp2)");
}

std::string to_string(HeadKind kind) {
    switch (kind) {
        case HeadKind::identity: return "identity";
        case HeadKind::linear: return "linear";
        case HeadKind::mlp2: return "mlp2";
    }
    return "?";
}

EncoderConfig EncoderConfig::preset(EncoderPreset preset) {
    EncoderConfig c;
    switch (preset) {
        case EncoderPreset::tiny:
            c.widths = {16, 32, 64};
            c.blocks = {2, 3, 3};
            break;
        case EncoderPreset::small:
            c.widths = {32, 64, 128};
            c.blocks = {3, 4, 4};
            break;
        case EncoderPreset::medium:
            c.widths = {64, 128, 256};
            c.blocks = {3, 4, 6};
            break;
    }
    return c;
}

void EncoderConfig::validate() const {
    if (widths.empty() || widths.size() != blocks.size()) {
        throw std::invalid_argument("encoder needs one block count per stage width");
    }
    if (stem_stride == 0 || norm_groups == 0) {
        throw std::invalid_argument("encoder stem stride and norm groups must be positive");
    }
    for (std::size_t s = 0; s < widths.size(); ++s) {
        if (widths[s] == 0 || widths[s] % norm_groups != 0) {
            throw std::invalid_argument("stage width " + std::to_string(widths[s]) + " is not a positive multiple of " +
                std::to_string(norm_groups) + " norm groups");
        }
        if (blocks[s] == 0) {
            throw std::invalid_argument("every stage needs at least one block");
        }
    }
}

std::size_t HeadConfig::output_dim(std::size_t input_dim) const {
    return kind == HeadKind::identity ? input_dim : output;
}

template<typename T>
void ModelParams<T>::add(std::string name, nd::Tensor<T> value) {
    if (contains(name)) {
        throw std::invalid_argument("duplicate parameter name '" + name + "'");
    }
    index_.emplace(name, tensors_.size());
    names_.push_back(std::move(name));
    tensors_.push_back(std::move(value));
}

template<typename T>
std::size_t ModelParams<T>::index_of(std::string_view name) const {
    auto it = index_.find(name);
    if (it == index_.end()) {
        throw std::out_of_range("no parameter named '" + std::string(name) + "'");
    }
    return it->second;
}

template<typename T>
std::size_t ModelParams<T>::scalar_count() const {
    std::size_t n = 0;
    for (const auto& t : tensors_) {
        n += t.size();
    }
    return n;
}

namespace {

std::string block_prefix(std::size_t stage, std::size_t block) {
    return "encoder.stage" + std::to_string(stage) + ".block" + std::to_string(block);
}

bool has_projection(std::size_t stage, std::size_t block, std::size_t in_width, std::size_t out_width) {
    return block == 0 && (stage > 0 || in_width != out_width);
}

template<typename T>
nd::Tensor<T> he_normal(nd::Shape shape, std::size_t fan_in, Stream& stream) {
    nd::Tensor<T> t(std::move(shape));
    const double sd = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (auto& v : t.data()) {
        v = static_cast<T>(sd * stream.normal());
    }
    return t;
}

template<typename T>
void add_norm(ModelParams<T>& p, const std::string& prefix, std::size_t channels) {
    p.add(prefix + ".gamma", nd::Tensor<T>::full({channels}, T(1)));
    p.add(prefix + ".beta", nd::Tensor<T>::zeros({channels}));
}

template<typename T>
void add_conv(ModelParams<T>& p, const std::string& name, std::size_t out, std::size_t in, std::size_t k, Stream& stream) {
    p.add(name, he_normal<T>({out, in, k, k}, in * k * k, stream));
}

template<typename T>
void add_dense(ModelParams<T>& p, const std::string& prefix, std::size_t in, std::size_t out, Stream& stream) {
    p.add(prefix + ".weight", he_normal<T>({in, out}, in, stream));
    p.add(prefix + ".bias", nd::Tensor<T>::zeros({out}));
}

}

template<typename T>
ModelParams<T> init_params(const ModelConfig& config, std::uint64_t seed) {
    const auto& enc = config.encoder;
    enc.validate();
    Stream stream(derive_key({seed, 0x6d6f64656cULL}));
    ModelParams<T> p;

    add_conv(p, "encoder.stem.conv.weight", enc.widths[0], cell_channels, 3, stream);
    add_norm(p, "encoder.stem.norm", enc.widths[0]);

    std::size_t in_width = enc.widths[0];
    for (std::size_t s = 0; s < enc.widths.size(); ++s) {
        const auto w = enc.widths[s];
        for (std::size_t b = 0; b < enc.blocks[s]; ++b) {
            const auto prefix = block_prefix(s, b);
            add_conv(p, prefix + ".conv1.weight", w, in_width, 3, stream);
            add_norm(p, prefix + ".norm1", w);
            add_conv(p, prefix + ".conv2.weight", w, w, 3, stream);
            add_norm(p, prefix + ".norm2", w);
            if (has_projection(s, b, in_width, w)) {
                add_conv(p, prefix + ".shortcut.weight", w, in_width, 1, stream);
                add_norm(p, prefix + ".shortcut_norm", w);
            }
            in_width = w;
        }
    }

    const auto h_dim = enc.representation_dim();
    switch (config.head.kind) {
        case HeadKind::identity:
            break;
        case HeadKind::linear:
            add_dense(p, "head.fc", h_dim, config.head.output, stream);
            break;
        case HeadKind::mlp2:
            add_dense(p, "head.fc1", h_dim, config.head.hidden, stream);
            add_dense(p, "head.fc2", config.head.hidden, config.head.output, stream);
            break;
    }
    return p;
}

template<typename T>
BoundParams<T>::BoundParams(nd::Tape<T>& tape, const ModelParams<T>& params, bool requires_grad) : params_(&params) {
    vars_.reserve(params.size());
    for (const auto& t : params.tensors()) {
        vars_.push_back(tape.leaf(t, requires_grad));
    }
}

template<typename T>
BoundParams<T>::BoundParams(const ModelParams<T>& params, std::vector<nd::Var<T>> vars) : params_(&params), vars_(std::move(vars)) {
    if (vars_.size() != params.size()) {
        throw std::invalid_argument("BoundParams: got " + std::to_string(vars_.size()) + " values for " +
            std::to_string(params.size()) + " parameters");
    }
    for (std::size_t i = 0; i < vars_.size(); ++i) {
        if (vars_[i].shape() != params.tensors()[i].shape()) {
            throw std::invalid_argument("BoundParams: value for " + params.name(i) + " has the wrong shape");
        }
    }
}

namespace {

template<typename T>
nd::Var<T> conv_norm(const BoundParams<T>& p, nd::Var<T> x, const std::string& conv, const std::string& norm,
                     std::size_t stride, std::size_t groups) {
    auto w = p[conv];
    const auto k = w.shape()[2];
    auto y = nd::conv2d(x, w, nd::Conv2dOptions{stride, k / 2});
    return nd::group_norm(y, p[norm + ".gamma"], p[norm + ".beta"], groups);
}

}

template<typename T>
nd::Var<T> encode(const EncoderConfig& config, const BoundParams<T>& p, nd::Var<T> images) {
    config.validate();
    const auto& s = images.shape();
    if (s.size() != 4 || s[1] != cell_channels) {
        throw std::invalid_argument("encode: expected images shaped (B x 3 x H x W), got " + nd::shape_string(s));
    }

    auto x = nd::relu(conv_norm(p, images, "encoder.stem.conv.weight", "encoder.stem.norm", config.stem_stride, config.norm_groups));
    std::size_t in_width = config.widths[0];
    for (std::size_t st = 0; st < config.widths.size(); ++st) {
        const auto w = config.widths[st];
        for (std::size_t b = 0; b < config.blocks[st]; ++b) {
            const auto prefix = block_prefix(st, b);
            const std::size_t stride = (b == 0 && st > 0) ? 2 : 1;
            auto y = nd::relu(conv_norm(p, x, prefix + ".conv1.weight", prefix + ".norm1", stride, config.norm_groups));
            y = conv_norm(p, y, prefix + ".conv2.weight", prefix + ".norm2", 1, config.norm_groups);
            auto shortcut = x;
            if (has_projection(st, b, in_width, w)) {
                shortcut = conv_norm(p, x, prefix + ".shortcut.weight", prefix + ".shortcut_norm", stride, config.norm_groups);
            }
            x = nd::relu(nd::add(y, shortcut));
            in_width = w;
        }
    }
    return nd::global_avg_pool(x);
}

template<typename T>
nd::Var<T> project(const HeadConfig& config, const BoundParams<T>& p, nd::Var<T> h) {
    if (h.shape().size() != 2) {
        throw std::invalid_argument("project: expected a (B x d) representation batch, got " + nd::shape_string(h.shape()));
    }
    switch (config.kind) {
        case HeadKind::identity:
            return h;
        case HeadKind::linear:
            return nd::affine(h, p["head.fc.weight"], p["head.fc.bias"]);
        case HeadKind::mlp2: {
            auto hidden = nd::relu(nd::affine(h, p["head.fc1.weight"], p["head.fc1.bias"]));
            return nd::affine(hidden, p["head.fc2.weight"], p["head.fc2.bias"]);
        }
    }
    throw std::logic_error("unhandled head kind");
}

template<typename T>
nd::Tensor<T> encode(const ModelConfig& config, const ModelParams<T>& params, const nd::Tensor<T>& images) {
    nd::Tape<T> tape;
    BoundParams<T> bound(tape, params, false);
    auto h = encode(config.encoder, bound, tape.constant(images));
    return h.value();
}

template<typename T>
nd::Tensor<T> project(const ModelConfig& config, const ModelParams<T>& params, const nd::Tensor<T>& h) {
    nd::Tape<T> tape;
    BoundParams<T> bound(tape, params, false);
    auto z = project(config.head, bound, tape.constant(h));
    return z.value();
}

template<typename T>
nd::Tensor<T> stack_images(std::span<const CellImage> images) {
    if (images.empty()) {
        throw std::invalid_argument("stack_images: no images");
    }
    const auto H = images.front().height, W = images.front().width;
    nd::Tensor<T> out({images.size(), cell_channels, H, W});
    auto o = out.data();
    std::size_t offset = 0;
    for (const auto& img : images) {
        validate_cell_image(img);
        if (img.height != H || img.width != W) {
            throw std::invalid_argument("stack_images: mixed image sizes");
        }
        for (auto v : img.values) {
            o[offset++] = static_cast<T>(v);
        }
    }
    return out;
}

#define CELLCONTRAST_INSTANTIATE_MODEL(T)                                                          \
    template class ModelParams<T>;                                                                 \
    template class BoundParams<T>;                                                                 \
    template ModelParams<T> init_params<T>(const ModelConfig&, std::uint64_t);                     \
    template nd::Var<T> encode(const EncoderConfig&, const BoundParams<T>&, nd::Var<T>);           \
    template nd::Var<T> project(const HeadConfig&, const BoundParams<T>&, nd::Var<T>);             \
    template nd::Tensor<T> encode(const ModelConfig&, const ModelParams<T>&, const nd::Tensor<T>&);  \
    template nd::Tensor<T> project(const ModelConfig&, const ModelParams<T>&, const nd::Tensor<T>&); \
    template nd::Tensor<T> stack_images<T>(std::span<const CellImage>);

CELLCONTRAST_INSTANTIATE_MODEL(float)
CELLCONTRAST_INSTANTIATE_MODEL(double)

}
