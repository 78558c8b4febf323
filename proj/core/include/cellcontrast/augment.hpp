#ifndef CELLCONTRAST_AUGMENT_HPP
#define CELLCONTRAST_AUGMENT_HPP

#include <array>
#include <cstdint>
#include <optional>
#include <string>

#include "image.hpp"
#include "rng.hpp"

namespace cellcontrast::augment {

struct CropSpec {
    bool enabled = true;
    double scale_min = 0.4;
    double scale_max = 1.0;
    double aspect_min = 3.0 / 4.0;
    double aspect_max = 4.0 / 3.0;
};

struct FlipSpec {
    bool enabled = true;
    double p_horizontal = 0.5;
    double p_vertical = 0.5;
};

struct Rot90Spec {
    bool enabled = true;
};

/// Per-channel v' = clamp((v - 0.5) * c + 0.5 + b) with b in [-brightness, brightness], c in [1 - contrast, 1 + contrast].
struct JitterSpec {
    bool enabled = true;
    double brightness = 0.4;
    double contrast = 0.4;
};

struct GreySpec {
    bool enabled = false;
    double probability = 0.2;
};

struct BlurSpec {
    bool enabled = true;
    double probability = 0.5;
    double sigma_min = 0.1;
    double sigma_max = 2.0;
    std::size_t kernel_size = 9;
};

/**
 * The set of transformations views are drawn from, one entry per augmentation
 * so each can be switched off on its own for ablations.
 */
struct TransformSpec {
    CropSpec crop;
    FlipSpec flip;
    Rot90Spec rot90;
    JitterSpec jitter;
    GreySpec grey;
    BlurSpec blur;

    /// Throws `std::invalid_argument` on out-of-range parameters.
    void validate() const;

    /// Every augmentation off.
    static TransformSpec identity();
};

struct CropWindow {
    std::size_t top = 0;
    std::size_t left = 0;
    std::size_t height = 0;
    std::size_t width = 0;
};

struct ChannelJitter {
    double brightness = 0.0;
    double contrast = 1.0;
};

/// A fully drawn transform; applying it involves no randomness.
struct Transform {
    std::optional<CropWindow> crop;
    bool flip_horizontal = false;
    bool flip_vertical = false;
    int rot90_k = 0;
    std::optional<std::array<ChannelJitter, cell_channels>> jitter;
    bool grey = false;
    std::optional<double> blur_sigma;
    std::size_t blur_kernel_size = 9;

    bool is_identity() const;

    /// Human-readable parameter dump, used to compare draws.
    std::string describe() const;

    friend bool operator==(const Transform&, const Transform&) = default;
};

/// Draws a concrete transform for an image of the given size.
Transform sample_transform(const TransformSpec& spec, std::size_t height, std::size_t width, Stream& stream);

/// Order: crop (bilinear resize back), flips, rotation, jitter, grey, blur. Output has the input's shape.
CellImage apply(const Transform& t, const CellImage& img);

struct ViewPair {
    CellImage view_i;
    CellImage view_j;
    std::uint64_t cell_index = 0;
};

/// Streams for the two views of one cell in one epoch.
std::array<Stream, 2> view_streams(std::uint64_t seed, std::uint64_t cell_index, std::uint64_t epoch);

ViewPair make_view_pair(const CellImage& img, const TransformSpec& spec, Stream& stream_i, Stream& stream_j, std::uint64_t cell_index = 0);

// Individual building blocks, exposed for tests.
CellImage rotate90(const CellImage& img, int k);
CellImage flip_horizontal(const CellImage& img);
CellImage flip_vertical(const CellImage& img);
CellImage grey_distort(const CellImage& img);
CellImage resized_crop(const CellImage& img, const CropWindow& window);
CellImage gaussian_blur(const CellImage& img, double sigma, std::size_t kernel_size);

}

#endif
