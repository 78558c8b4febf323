#ifndef CELLCONTRAST_IMAGE_HPP
#define CELLCONTRAST_IMAGE_HPP

#include <cstddef>
#include <vector>

namespace cellcontrast {

/// Channel order of every cell image: DNA, B-tubulin, F-actin.
inline constexpr std::size_t cell_channels = 3;

/// Default crop edge length in pixels.
inline constexpr std::size_t default_crop_size = 96;

/**
 * A three-channel cell crop with values in [0, 1], stored channel-major
 * (`values[(c * height + y) * width + x]`).
 */
struct CellImage {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<float> values;

    CellImage() = default;

    CellImage(std::size_t h, std::size_t w) : height(h), width(w), values(cell_channels * h * w, 0.0f) {}

    float& at(std::size_t c, std::size_t y, std::size_t x) { return values[(c * height + y) * width + x]; }

    float at(std::size_t c, std::size_t y, std::size_t x) const { return values[(c * height + y) * width + x]; }

    std::size_t plane() const { return height * width; }

    friend bool operator==(const CellImage&, const CellImage&) = default;
};

/// Throws `std::invalid_argument` unless the image holds exactly three full channels.
void validate_cell_image(const CellImage& img);

}

#endif
