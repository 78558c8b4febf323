#ifndef CELLCONTRAST_DATAIO_HPP
#define CELLCONTRAST_DATAIO_HPP

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "image.hpp"

namespace cellcontrast::dataio {

/// Compound name used for untreated control cells.
inline constexpr const char* control_compound = "DMSO";

struct CellRecord {
    std::string cell_id;
    std::string source_image_id;
    std::string batch;
    std::string well;
    std::string compound;
    std::string concentration;
    std::string moa = "unknown";
    bool is_control = false;
    bool illumination_corrected = false;

    friend bool operator==(const CellRecord&, const CellRecord&) = default;
};

/// Cell metadata, row-aligned with the images of a `CellBlock`.
struct Manifest {
    std::vector<CellRecord> rows;

    /// Throws `std::invalid_argument` naming the first offending row: duplicate ids,
    /// controls not treated with DMSO, or treated cells without compound/concentration.
    void validate() const;

    friend bool operator==(const Manifest&, const Manifest&) = default;
};

/// Exact CSV header of the manifest file.
inline constexpr const char* manifest_header =
    "cell_id,source_image_id,batch,well,compound,concentration,moa,is_control,illumination_corrected";

void write_manifest(std::ostream& out, const Manifest& manifest);
void write_manifest(const std::filesystem::path& path, const Manifest& manifest);
Manifest read_manifest(std::istream& in);
Manifest read_manifest(const std::filesystem::path& path);

inline constexpr std::uint32_t cell_block_version = 1;

/**
 * A stack of equally sized three-channel crops.
 *
 * On disk: "CELL1" | u32 version | u32 count | u32 channels (3) | u32 height
 * | u32 width | count x 3 x H x W little-endian f32 values in [0, 1].
 */
struct CellBlock {
    std::size_t count = 0;
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<float> values;

    std::size_t image_size() const { return cell_channels * height * width; }

    CellImage image(std::size_t i) const;

    std::vector<CellImage> images() const;

    void append(const CellImage& img);

    friend bool operator==(const CellBlock&, const CellBlock&) = default;
};

void write_cell_block(std::ostream& out, const CellBlock& block);
void write_cell_block(const std::filesystem::path& path, const CellBlock& block);
CellBlock read_cell_block(std::istream& in);
CellBlock read_cell_block(const std::filesystem::path& path);

/// A larger microscopy field with three channels of arbitrary intensity, channel-major.
struct FieldImage {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<float> values;
};

struct CellCenter {
    std::ptrdiff_t row = 0;
    std::ptrdiff_t col = 0;
};

/**
 * Cuts `size x size` crops centered on each location (the crop's top-left is
 * center - size / 2). Each channel of the field is min-max scaled to [0, 1]
 * first; pixels outside the field are taken from its mirror image.
 */
CellBlock crop_cells(const FieldImage& field, std::span<const CellCenter> centers, std::size_t size = default_crop_size);

/// Procedural stand-in dataset: one texture family per MOA.
struct SynthSpec {
    std::size_t n_moas = 4;
    std::size_t compounds_per_moa = 2;
    std::size_t concentrations_per_compound = 2;
    std::size_t batches = 2;
    std::size_t cells_per_treatment = 25;
    std::size_t control_wells_per_batch = 4;
    std::size_t cells_per_control_well = 10;
    std::size_t image_size = default_crop_size;
    double noise = 0.05;
    double batch_offset = 0.05;
    std::uint64_t seed = 0;

    void validate() const;
};

struct SyntheticDataset {
    CellBlock cells;
    Manifest manifest;
};

/**
 * Deterministic synthetic screen. MOA m is a family of oriented sinusoidal
 * gratings (its own frequency and orientation in each channel); each compound
 * perturbs its family's parameters by a fixed amount scaled by concentration.
 * Compound c of an MOA is imaged in batch c mod batches, so every MOA spans
 * several batches when it has enough compounds. Each batch adds its own
 * intensity offset and each cell gets independent Gaussian pixel noise.
 */
SyntheticDataset generate_synthetic(const SynthSpec& spec);

}

#endif
