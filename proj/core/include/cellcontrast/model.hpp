#ifndef CELLCONTRAST_MODEL_HPP
#define CELLCONTRAST_MODEL_HPP

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "image.hpp"
#include "nd/tape.hpp"
#include "nd/tensor.hpp"

namespace cellcontrast::model {

/// Size axis of the residual encoder, smallest to largest.
enum class EncoderPreset { tiny, small, medium };

EncoderPreset parse_encoder_preset(std::string_view name);
std::string to_string(EncoderPreset preset);

/**
 * Residual convolutional encoder f.
 *
 * A 3x3 stem convolution is followed by `widths.size()` stages of basic
 * residual blocks (two 3x3 convolutions with group normalization). The first
 * block of every stage after the first halves the resolution with a stride-2
 * convolution and a 1x1 projection shortcut. A global average pool turns the
 * last feature map into the representation h, whose width is `widths.back()`.
 *
 * Normalization statistics are per sample, so a forward pass over a batch
 * equals the per-image passes stacked.
 */
struct EncoderConfig {
    std::vector<std::size_t> widths{16, 32, 64};
    std::vector<std::size_t> blocks{2, 3, 3};
    std::size_t stem_stride = 2;
    std::size_t norm_groups = 4;

    static EncoderConfig preset(EncoderPreset preset);

    std::size_t representation_dim() const { return widths.back(); }

    void validate() const;
};

enum class HeadKind { identity, linear, mlp2 };

HeadKind parse_head_kind(std::string_view name);
std::string to_string(HeadKind kind);

/// Projection head g. `mlp2` is dense -> ReLU -> dense; `linear` is a single dense layer to `output`.
struct HeadConfig {
    HeadKind kind = HeadKind::mlp2;
    std::size_t hidden = 64;
    std::size_t output = 32;

    /// Reference widths of the two-layer head at full scale.
    static constexpr std::size_t reference_hidden = 2048;
    static constexpr std::size_t reference_output = 256;

    std::size_t output_dim(std::size_t input_dim) const;
};

struct ModelConfig {
    EncoderConfig encoder;
    HeadConfig head;
};

/// Named trainable tensors, kept in creation order.
template<typename T>
class ModelParams {
public:
    /// Throws `std::invalid_argument` if the name is taken.
    void add(std::string name, nd::Tensor<T> value);

    std::size_t size() const { return tensors_.size(); }

    const std::string& name(std::size_t i) const { return names_[i]; }

    bool contains(std::string_view name) const { return index_.find(name) != index_.end(); }

    std::size_t index_of(std::string_view name) const;

    const nd::Tensor<T>& at(std::string_view name) const { return tensors_[index_of(name)]; }

    nd::Tensor<T>& at(std::string_view name) { return tensors_[index_of(name)]; }

    std::span<nd::Tensor<T>> tensors() { return tensors_; }

    std::span<const nd::Tensor<T>> tensors() const { return tensors_; }

    const std::vector<std::string>& names() const { return names_; }

    /// Total number of scalars across all tensors.
    std::size_t scalar_count() const;

    friend bool operator==(const ModelParams& a, const ModelParams& b) {
        return a.names_ == b.names_ && a.tensors_ == b.tensors_;
    }

private:
    std::vector<std::string> names_;
    std::vector<nd::Tensor<T>> tensors_;
    std::map<std::string, std::size_t, std::less<>> index_;
};

/// He-style fan-in initialization, deterministic for a seed. Norm scales start at 1, biases at 0.
template<typename T>
ModelParams<T> init_params(const ModelConfig& config, std::uint64_t seed);

/// Parameters placed on a tape as leaves.
template<typename T>
class BoundParams {
public:
    BoundParams(nd::Tape<T>& tape, const ModelParams<T>& params, bool requires_grad);

    /// Binds existing tape values, one per parameter of `params` in order.
    BoundParams(const ModelParams<T>& params, std::vector<nd::Var<T>> vars);

    nd::Var<T> operator[](std::string_view name) const { return vars_[params_->index_of(name)]; }

    const std::vector<nd::Var<T>>& vars() const { return vars_; }

private:
    const ModelParams<T>* params_;
    std::vector<nd::Var<T>> vars_;
};

/// images: (B x 3 x H x W) -> h: (B x representation_dim).
template<typename T>
nd::Var<T> encode(const EncoderConfig& config, const BoundParams<T>& params, nd::Var<T> images);

/// h: (B x d) -> z: (B x head output). The identity head returns `h` itself.
template<typename T>
nd::Var<T> project(const HeadConfig& config, const BoundParams<T>& params, nd::Var<T> h);

/// Inference without gradients.
template<typename T>
nd::Tensor<T> encode(const ModelConfig& config, const ModelParams<T>& params, const nd::Tensor<T>& images);

template<typename T>
nd::Tensor<T> project(const ModelConfig& config, const ModelParams<T>& params, const nd::Tensor<T>& h);

/// Stacks images into a (B x 3 x H x W) tensor. All images must share a size.
template<typename T>
nd::Tensor<T> stack_images(std::span<const CellImage> images);

}

#endif
