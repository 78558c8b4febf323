#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "cellcontrast/dataio.hpp"
#include "cellcontrast/rng.hpp"

namespace cellcontrast::dataio {

void SynthSpec::validate() const {
    auto require = [](bool ok, const char* what) {
        if (!ok) {
            throw std::invalid_argument(std::string("synthetic spec: ") + what);
        }
    };
    require(n_moas >= 1, "n_moas must be at least 1");
    require(compounds_per_moa >= 1, "compounds_per_moa must be at least 1");
    require(concentrations_per_compound >= 1, "concentrations_per_compound must be at least 1");
    require(batches >= 1, "batches must be at least 1");
    require(cells_per_treatment >= 1, "cells_per_treatment must be at least 1");
    require(control_wells_per_batch == 0 || cells_per_control_well >= 1, "cells_per_control_well must be at least 1");
    require(image_size >= 4, "image_size must be at least 4");
    require(std::isfinite(noise) && noise >= 0.0, "noise must be finite and non-negative");
    require(std::isfinite(batch_offset) && std::abs(batch_offset) <= 0.25, "batch_offset must lie in [-0.25, 0.25]");
}

namespace {

constexpr double pi = std::numbers::pi;
constexpr double amplitude = 0.25;

struct Grating {
    double cycles;
    double angle;
};

Grating moa_grating(std::size_t moa, std::size_t n_moas, std::size_t channel) {
    return {2.0 + 1.25 * static_cast<double>(moa % 6) + 0.5 * static_cast<double>(channel),
        pi * static_cast<double>(moa) / static_cast<double>(n_moas) + 0.4 * static_cast<double>(channel)};
}

Grating perturbed(Grating g, std::size_t compound, double strength) {
    const double sign = compound % 2 == 0 ? 1.0 : -1.0;
    const auto k = static_cast<double>(compound / 2 + 1);
    g.angle += strength * sign * 0.03 * k;
    g.cycles += strength * sign * 0.1 * k;
    return g;
}

std::string concentration_label(std::size_t j) {
    std::ostringstream os;
    os << 0.1 * std::pow(3.0, static_cast<double>(j)) << "uM";
    return os.str();
}

void render(CellImage& img, const Grating (&g)[cell_channels], double amp, double offset, double noise, Stream& stream) {
    const auto n = static_cast<double>(img.height);
    for (std::size_t c = 0; c < cell_channels; ++c) {
        const double kx = 2.0 * pi * g[c].cycles * std::cos(g[c].angle) / n;
        const double ky = 2.0 * pi * g[c].cycles * std::sin(g[c].angle) / n;
        const double channel_offset = offset * (1.0 + 0.5 * static_cast<double>(c));
        for (std::size_t y = 0; y < img.height; ++y) {
            for (std::size_t x = 0; x < img.width; ++x) {
                double v = 0.5 + channel_offset + amp * std::sin(kx * static_cast<double>(x) + ky * static_cast<double>(y));
                if (noise > 0.0) {
                    v += noise * stream.normal();
                }
                img.at(c, y, x) = static_cast<float>(std::clamp(v, 0.0, 1.0));
            }
        }
    }
}

}

SyntheticDataset generate_synthetic(const SynthSpec& spec) {
    spec.validate();
    SyntheticDataset out;
    std::size_t cell = 0;
    auto next_id = [&cell] {
        std::ostringstream os;
        os << "cell" << cell;
        return os.str();
    };
    auto batch_name = [](std::size_t b) { return "batch" + std::to_string(b); };
    auto batch_shift = [&spec](std::size_t b) { return spec.batch_offset * static_cast<double>(b); };

    for (std::size_t m = 0; m < spec.n_moas; ++m) {
        for (std::size_t k = 0; k < spec.compounds_per_moa; ++k) {
            const std::size_t batch = k % spec.batches;
            const std::string compound = "moa" + std::to_string(m) + "_cmp" + std::to_string(k);
            for (std::size_t j = 0; j < spec.concentrations_per_compound; ++j) {
                const double strength = static_cast<double>(j + 1) / static_cast<double>(spec.concentrations_per_compound);
                Grating g[cell_channels];
                for (std::size_t c = 0; c < cell_channels; ++c) {
                    g[c] = perturbed(moa_grating(m, spec.n_moas, c), k, strength);
                }
                const std::string well = "w_" + compound + "_" + std::to_string(j);
                for (std::size_t i = 0; i < spec.cells_per_treatment; ++i, ++cell) {
                    Stream stream(derive_key({spec.seed, 0x73796e74, cell}));
                    CellImage img(spec.image_size, spec.image_size);
                    render(img, g, amplitude, batch_shift(batch), spec.noise, stream);
                    out.cells.append(img);
                    CellRecord r;
                    r.cell_id = next_id();
                    r.source_image_id = well + "_f" + std::to_string(i / 10);
                    r.batch = batch_name(batch);
                    r.well = well;
                    r.compound = compound;
                    r.concentration = concentration_label(j);
                    r.moa = "MOA" + std::to_string(m);
                    r.illumination_corrected = true;
                    out.manifest.rows.push_back(std::move(r));
                }
            }
        }
    }

    // Controls: a faint horizontal grating shared by all batches.
    for (std::size_t b = 0; b < spec.batches; ++b) {
        for (std::size_t w = 0; w < spec.control_wells_per_batch; ++w) {
            const std::string well = "w_ctrl_" + std::to_string(b) + "_" + std::to_string(w);
            for (std::size_t i = 0; i < spec.cells_per_control_well; ++i, ++cell) {
                Stream stream(derive_key({spec.seed, 0x73796e74, cell}));
                const Grating g[cell_channels] = {{1.0, 0.0}, {1.0, 0.0}, {1.0, 0.0}};
                CellImage img(spec.image_size, spec.image_size);
                render(img, g, 0.1 * amplitude, batch_shift(b), spec.noise, stream);
                out.cells.append(img);
                CellRecord r;
                r.cell_id = next_id();
                r.source_image_id = well + "_f" + std::to_string(i / 10);
                r.batch = batch_name(b);
                r.well = well;
                r.compound = control_compound;
                r.concentration = "0uM";
                r.is_control = true;
                r.illumination_corrected = true;
                out.manifest.rows.push_back(std::move(r));
            }
        }
    }
    out.manifest.validate();
    return out;
}

}
