#include "cellcontrast/augment.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace cellcontrast {

void validate_cell_image(const CellImage& img) {
    if (img.values.size() != cell_channels * img.height * img.width || img.height == 0 || img.width == 0) {
        throw std::invalid_argument("cell image must have exactly 3 channels of " + std::to_string(img.height) + "x" +
            std::to_string(img.width) + " pixels, got " + std::to_string(img.values.size()) + " values");
    }
}

}

namespace cellcontrast::augment {

namespace {

float clamp01(double v) {
    return static_cast<float>(std::clamp(v, 0.0, 1.0));
}

void check_probability(const char* name, double p) {
    if (!(p >= 0.0 && p <= 1.0)) {
        throw std::invalid_argument(std::string(name) + " must lie in [0, 1]");
    }
}

std::size_t reflect(std::ptrdiff_t i, std::size_t n) {
    if (n == 1) {
        return 0;
    }
    const auto last = static_cast<std::ptrdiff_t>(n) - 1;
    while (i < 0 || i > last) {
        i = i < 0 ? -i : 2 * last - i;
    }
    return static_cast<std::size_t>(i);
}

CropWindow sample_crop(const CropSpec& spec, std::size_t height, std::size_t width, Stream& stream) {
    const double area = static_cast<double>(height * width);
    const double log_lo = std::log(spec.aspect_min);
    const double log_hi = std::log(spec.aspect_max);
    for (int attempt = 0; attempt < 10; ++attempt) {
        const double target = area * stream.uniform(spec.scale_min, spec.scale_max);
        const double aspect = std::exp(stream.uniform(log_lo, log_hi));
        const auto w = static_cast<std::size_t>(std::lround(std::sqrt(target * aspect)));
        const auto h = static_cast<std::size_t>(std::lround(std::sqrt(target / aspect)));
        if (w >= 1 && h >= 1 && w <= width && h <= height) {
            CropWindow win;
            win.height = h;
            win.width = w;
            win.top = static_cast<std::size_t>(stream.below(height - h + 1));
            win.left = static_cast<std::size_t>(stream.below(width - w + 1));
            return win;
        }
    }
    // Fallback: the whole image, as the largest window that satisfies every constraint.
    return CropWindow{0, 0, height, width};
}

}

void TransformSpec::validate() const {
    if (crop.enabled) {
        if (!(crop.scale_min > 0.0 && crop.scale_min <= crop.scale_max && crop.scale_max <= 1.0)) {
            throw std::invalid_argument("crop scale range must satisfy 0 < min <= max <= 1");
        }
        if (!(crop.aspect_min > 0.0 && crop.aspect_min <= crop.aspect_max)) {
            throw std::invalid_argument("crop aspect range must satisfy 0 < min <= max");
        }
    }
    check_probability("flip.p_horizontal", flip.p_horizontal);
    check_probability("flip.p_vertical", flip.p_vertical);
    if (jitter.brightness < 0.0 || jitter.contrast < 0.0 || jitter.contrast >= 1.0) {
        throw std::invalid_argument("jitter brightness must be >= 0 and contrast in [0, 1)");
    }
    check_probability("grey.probability", grey.probability);
    check_probability("blur.probability", blur.probability);
    if (blur.enabled) {
        if (!(blur.sigma_min > 0.0 && blur.sigma_min <= blur.sigma_max)) {
            throw std::invalid_argument("blur sigma range must satisfy 0 < min <= max");
        }
        if (blur.kernel_size == 0 || blur.kernel_size % 2 == 0) {
            throw std::invalid_argument("blur kernel size must be odd");
        }
    }
}

TransformSpec TransformSpec::identity() {
    TransformSpec spec;
    spec.crop.enabled = false;
    spec.flip.enabled = false;
    spec.rot90.enabled = false;
    spec.jitter.enabled = false;
    spec.grey.enabled = false;
    spec.blur.enabled = false;
    return spec;
}

bool Transform::is_identity() const {
    return !crop && !flip_horizontal && !flip_vertical && rot90_k == 0 && !jitter && !grey && !blur_sigma;
}

std::string Transform::describe() const {
    std::ostringstream out;
    out.precision(17);
    if (crop) {
        out << "crop(" << crop->top << ',' << crop->left << ',' << crop->height << ',' << crop->width << ") ";
    }
    out << "flip(" << flip_horizontal << ',' << flip_vertical << ") rot90(" << rot90_k << ") ";
    if (jitter) {
        out << "jitter(";
        for (const auto& j : *jitter) {
            out << j.brightness << ':' << j.contrast << ';';
        }
        out << ") ";
    }
    out << "grey(" << grey << ")";
    if (blur_sigma) {
        out << " blur(" << *blur_sigma << ")";
    }
    return out.str();
}

Transform sample_transform(const TransformSpec& spec, std::size_t height, std::size_t width, Stream& stream) {
    spec.validate();
    Transform t;
    // Every enabled augmentation consumes its draws in a fixed order.
    if (spec.crop.enabled) {
        t.crop = sample_crop(spec.crop, height, width, stream);
    }
    if (spec.flip.enabled) {
        t.flip_horizontal = stream.bernoulli(spec.flip.p_horizontal);
        t.flip_vertical = stream.bernoulli(spec.flip.p_vertical);
    }
    if (spec.rot90.enabled) {
        if (height == width) {
            t.rot90_k = static_cast<int>(stream.below(4));
        } else {
            t.rot90_k = 2 * static_cast<int>(stream.below(2));
        }
    }
    if (spec.jitter.enabled) {
        std::array<ChannelJitter, cell_channels> j{};
        for (auto& c : j) {
            c.brightness = stream.uniform(-spec.jitter.brightness, spec.jitter.brightness);
            c.contrast = stream.uniform(1.0 - spec.jitter.contrast, 1.0 + spec.jitter.contrast);
        }
        t.jitter = j;
    }
    if (spec.grey.enabled) {
        t.grey = stream.bernoulli(spec.grey.probability);
    }
    if (spec.blur.enabled) {
        const bool on = stream.bernoulli(spec.blur.probability);
        const double sigma = stream.uniform(spec.blur.sigma_min, spec.blur.sigma_max);
        if (on) {
            t.blur_sigma = sigma;
            t.blur_kernel_size = spec.blur.kernel_size;
        }
    }
    return t;
}

CellImage rotate90(const CellImage& img, int k) {
    validate_cell_image(img);
    k = ((k % 4) + 4) % 4;
    if (k == 0) {
        return img;
    }
    const bool swap = k % 2 == 1;
    CellImage out(swap ? img.width : img.height, swap ? img.height : img.width);
    const auto H = img.height, W = img.width;
    for (std::size_t c = 0; c < cell_channels; ++c) {
        for (std::size_t y = 0; y < out.height; ++y) {
            for (std::size_t x = 0; x < out.width; ++x) {
                float v;
                // Counter-clockwise rotation by k quarter turns.
                if (k == 1) {
                    v = img.at(c, x, W - 1 - y);
                } else if (k == 2) {
                    v = img.at(c, H - 1 - y, W - 1 - x);
                } else {
                    v = img.at(c, H - 1 - x, y);
                }
                out.at(c, y, x) = v;
            }
        }
    }
    return out;
}

CellImage flip_horizontal(const CellImage& img) {
    validate_cell_image(img);
    CellImage out(img.height, img.width);
    for (std::size_t c = 0; c < cell_channels; ++c) {
        for (std::size_t y = 0; y < img.height; ++y) {
            for (std::size_t x = 0; x < img.width; ++x) {
                out.at(c, y, x) = img.at(c, y, img.width - 1 - x);
            }
        }
    }
    return out;
}

CellImage flip_vertical(const CellImage& img) {
    validate_cell_image(img);
    CellImage out(img.height, img.width);
    for (std::size_t c = 0; c < cell_channels; ++c) {
        for (std::size_t y = 0; y < img.height; ++y) {
            for (std::size_t x = 0; x < img.width; ++x) {
                out.at(c, y, x) = img.at(c, img.height - 1 - y, x);
            }
        }
    }
    return out;
}

CellImage grey_distort(const CellImage& img) {
    validate_cell_image(img);
    CellImage out(img.height, img.width);
    for (std::size_t y = 0; y < img.height; ++y) {
        for (std::size_t x = 0; x < img.width; ++x) {
            const double m = (static_cast<double>(img.at(0, y, x)) + img.at(1, y, x) + img.at(2, y, x)) / 3.0;
            const float v = clamp01(m);
            for (std::size_t c = 0; c < cell_channels; ++c) {
                out.at(c, y, x) = v;
            }
        }
    }
    return out;
}

CellImage resized_crop(const CellImage& img, const CropWindow& win) {
    validate_cell_image(img);
    if (win.height == 0 || win.width == 0 || win.top + win.height > img.height || win.left + win.width > img.width) {
        throw std::invalid_argument("crop window outside the image");
    }
    const auto H = img.height, W = img.width;
    const double sy = static_cast<double>(win.height) / static_cast<double>(H);
    const double sx = static_cast<double>(win.width) / static_cast<double>(W);
    const double y_lo = static_cast<double>(win.top), y_hi = static_cast<double>(win.top + win.height - 1);
    const double x_lo = static_cast<double>(win.left), x_hi = static_cast<double>(win.left + win.width - 1);

    struct Tap {
        std::size_t i0, i1;
        double w;
    };
    auto taps = [](std::size_t n, double scale, double lo, double hi) {
        std::vector<Tap> out(n);
        for (std::size_t d = 0; d < n; ++d) {
            const double src = std::clamp(lo + (static_cast<double>(d) + 0.5) * scale - 0.5, lo, hi);
            const double f = std::floor(src);
            const auto i0 = static_cast<std::size_t>(f);
            out[d] = Tap{i0, std::min(i0 + 1, static_cast<std::size_t>(hi)), src - f};
        }
        return out;
    };
    const auto ty = taps(H, sy, y_lo, y_hi);
    const auto tx = taps(W, sx, x_lo, x_hi);

    CellImage out(H, W);
    for (std::size_t c = 0; c < cell_channels; ++c) {
        for (std::size_t y = 0; y < H; ++y) {
            const auto& a = ty[y];
            for (std::size_t x = 0; x < W; ++x) {
                const auto& b = tx[x];
                const double top = (1.0 - b.w) * img.at(c, a.i0, b.i0) + b.w * img.at(c, a.i0, b.i1);
                const double bottom = (1.0 - b.w) * img.at(c, a.i1, b.i0) + b.w * img.at(c, a.i1, b.i1);
                out.at(c, y, x) = clamp01((1.0 - a.w) * top + a.w * bottom);
            }
        }
    }
    return out;
}

CellImage gaussian_blur(const CellImage& img, double sigma, std::size_t kernel_size) {
    validate_cell_image(img);
    if (!(sigma > 0.0) || kernel_size % 2 == 0) {
        throw std::invalid_argument("gaussian_blur needs sigma > 0 and an odd kernel");
    }
    const auto radius = static_cast<std::ptrdiff_t>(kernel_size / 2);
    std::vector<double> kernel(kernel_size);
    double total = 0.0;
    for (std::ptrdiff_t i = -radius; i <= radius; ++i) {
        const double v = std::exp(-0.5 * static_cast<double>(i * i) / (sigma * sigma));
        kernel[static_cast<std::size_t>(i + radius)] = v;
        total += v;
    }
    for (auto& v : kernel) {
        v /= total;
    }

    const auto H = img.height, W = img.width;
    std::vector<double> tmp(H * W);
    CellImage out(H, W);
    for (std::size_t c = 0; c < cell_channels; ++c) {
        for (std::size_t y = 0; y < H; ++y) {
            for (std::size_t x = 0; x < W; ++x) {
                double acc = 0.0;
                for (std::ptrdiff_t k = -radius; k <= radius; ++k) {
                    acc += kernel[static_cast<std::size_t>(k + radius)] * img.at(c, y, reflect(static_cast<std::ptrdiff_t>(x) + k, W));
                }
                tmp[y * W + x] = acc;
            }
        }
        for (std::size_t y = 0; y < H; ++y) {
            for (std::size_t x = 0; x < W; ++x) {
                double acc = 0.0;
                for (std::ptrdiff_t k = -radius; k <= radius; ++k) {
                    acc += kernel[static_cast<std::size_t>(k + radius)] * tmp[reflect(static_cast<std::ptrdiff_t>(y) + k, H) * W + x];
                }
                out.at(c, y, x) = clamp01(acc);
            }
        }
    }
    return out;
}

CellImage apply(const Transform& t, const CellImage& img) {
    validate_cell_image(img);
    CellImage out = img;
    if (t.crop) {
        out = resized_crop(out, *t.crop);
    }
    if (t.flip_horizontal) {
        out = flip_horizontal(out);
    }
    if (t.flip_vertical) {
        out = flip_vertical(out);
    }
    if (t.rot90_k % 4 != 0) {
        out = rotate90(out, t.rot90_k);
    }
    if (t.jitter) {
        for (std::size_t c = 0; c < cell_channels; ++c) {
            const auto& j = (*t.jitter)[c];
            auto* plane = out.values.data() + c * out.plane();
            for (std::size_t p = 0; p < out.plane(); ++p) {
                plane[p] = clamp01((static_cast<double>(plane[p]) - 0.5) * j.contrast + 0.5 + j.brightness);
            }
        }
    }
    if (t.grey) {
        out = grey_distort(out);
    }
    if (t.blur_sigma) {
        out = gaussian_blur(out, *t.blur_sigma, t.blur_kernel_size);
    }
    for (auto& v : out.values) {
        v = std::clamp(v, 0.0f, 1.0f);
    }
    return out;
}

std::array<Stream, 2> view_streams(std::uint64_t seed, std::uint64_t cell_index, std::uint64_t epoch) {
    return {Stream(derive_key({seed, cell_index, epoch, 0})), Stream(derive_key({seed, cell_index, epoch, 1}))};
}

ViewPair make_view_pair(const CellImage& img, const TransformSpec& spec, Stream& stream_i, Stream& stream_j, std::uint64_t cell_index) {
    validate_cell_image(img);
    const auto ti = sample_transform(spec, img.height, img.width, stream_i);
    const auto tj = sample_transform(spec, img.height, img.width, stream_j);
    return ViewPair{apply(ti, img), apply(tj, img), cell_index};
}

}
