#include "cellcontrast/dataio.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <set>
#include <stdexcept>
#include <unordered_set>

#include "binio.hpp"
#include "csv.hpp"
#include "cellcontrast/errors.hpp"

namespace cellcontrast::dataio {

void Manifest::validate() const {
    std::unordered_set<std::string> seen;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& r = rows[i];
        if (r.cell_id.empty()) {
            throw std::invalid_argument("manifest row " + std::to_string(i) + " has an empty cell_id");
        }
        if (!seen.insert(r.cell_id).second) {
            throw std::invalid_argument("manifest has duplicate cell_id '" + r.cell_id + "'");
        }
        if (r.is_control && r.compound != control_compound) {
            throw std::invalid_argument("control cell '" + r.cell_id + "' has compound '" + r.compound + "', expected DMSO");
        }
        if (!r.is_control && (r.compound.empty() || r.concentration.empty())) {
            throw std::invalid_argument("treated cell '" + r.cell_id + "' lacks compound or concentration");
        }
        if (r.batch.empty()) {
            throw std::invalid_argument("cell '" + r.cell_id + "' has no batch");
        }
    }
}

void write_manifest(std::ostream& out, const Manifest& manifest) {
    out << manifest_header << '\n';
    for (const auto& r : manifest.rows) {
        out << csv::checked_field(r.cell_id, "cell_id") << ','
            << csv::checked_field(r.source_image_id, "source_image_id") << ','
            << csv::checked_field(r.batch, "batch") << ','
            << csv::checked_field(r.well, "well") << ','
            << csv::checked_field(r.compound, "compound") << ','
            << csv::checked_field(r.concentration, "concentration") << ','
            << csv::checked_field(r.moa, "moa") << ','
            << (r.is_control ? "true" : "false") << ','
            << (r.illumination_corrected ? "true" : "false") << '\n';
    }
}

void write_manifest(const std::filesystem::path& path, const Manifest& manifest) {
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot open manifest for writing: " + path.string());
    }
    write_manifest(out, manifest);
    if (!out) {
        throw IoError("failed writing manifest: " + path.string());
    }
}

namespace {

bool parse_bool(const std::string& s, std::size_t line) {
    if (s == "true" || s == "1") {
        return true;
    }
    if (s == "false" || s == "0") {
        return false;
    }
    throw IoError("manifest line " + std::to_string(line) + ": expected true/false, got '" + s + "'");
}

}

Manifest read_manifest(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) {
        throw IoError("manifest is empty");
    }
    if (!line.empty() && line.back() == '\r') {
        line.pop_back();
    }
    if (line != manifest_header) {
        throw IoError("manifest header mismatch: expected '" + std::string(manifest_header) + "'");
    }
    Manifest m;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") {
            continue;
        }
        auto f = csv::split(line);
        if (f.size() != 9) {
            throw IoError("manifest line " + std::to_string(lineno) + ": expected 9 fields, got " + std::to_string(f.size()));
        }
        CellRecord r;
        r.cell_id = f[0];
        r.source_image_id = f[1];
        r.batch = f[2];
        r.well = f[3];
        r.compound = f[4];
        r.concentration = f[5];
        r.moa = f[6];
        r.is_control = parse_bool(f[7], lineno);
        r.illumination_corrected = parse_bool(f[8], lineno);
        m.rows.push_back(std::move(r));
    }
    m.validate();
    return m;
}

Manifest read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open manifest: " + path.string());
    }
    return read_manifest(in);
}

CellImage CellBlock::image(std::size_t i) const {
    if (i >= count) {
        throw std::out_of_range("cell block index " + std::to_string(i) + " out of range");
    }
    CellImage img(height, width);
    const auto n = image_size();
    std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(i * n), n, img.values.begin());
    return img;
}

std::vector<CellImage> CellBlock::images() const {
    std::vector<CellImage> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        out.push_back(image(i));
    }
    return out;
}

void CellBlock::append(const CellImage& img) {
    validate_cell_image(img);
    if (count == 0 && values.empty()) {
        height = img.height;
        width = img.width;
    } else if (img.height != height || img.width != width) {
        throw std::invalid_argument("cell block holds " + std::to_string(height) + "x" + std::to_string(width) + " images");
    }
    values.insert(values.end(), img.values.begin(), img.values.end());
    ++count;
}

namespace {

constexpr std::string_view block_magic = "CELL1";

}

void write_cell_block(std::ostream& out, const CellBlock& block) {
    if (block.values.size() != block.count * block.image_size()) {
        throw std::invalid_argument("cell block payload does not match its header dimensions");
    }
    binio::write_magic(out, block_magic);
    binio::write_le<std::uint32_t>(out, cell_block_version);
    binio::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(block.count));
    binio::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(cell_channels));
    binio::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(block.height));
    binio::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(block.width));
    for (auto v : block.values) {
        binio::write_f32(out, v);
    }
}

void write_cell_block(const std::filesystem::path& path, const CellBlock& block) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot open cell block for writing: " + path.string());
    }
    write_cell_block(out, block);
    if (!out) {
        throw IoError("failed writing cell block: " + path.string());
    }
}

CellBlock read_cell_block(std::istream& in) {
    binio::expect_magic(in, block_magic, "cell block");
    const auto version = binio::read_le<std::uint32_t>(in, "cell block version");
    if (version != cell_block_version) {
        throw IoError("cell block: unsupported version " + std::to_string(version));
    }
    CellBlock b;
    b.count = binio::read_le<std::uint32_t>(in, "cell block count");
    const auto channels = binio::read_le<std::uint32_t>(in, "cell block channels");
    b.height = binio::read_le<std::uint32_t>(in, "cell block height");
    b.width = binio::read_le<std::uint32_t>(in, "cell block width");
    if (channels != cell_channels) {
        throw IoError("cell block: expected 3 channels, header says " + std::to_string(channels));
    }
    const std::uint64_t total = static_cast<std::uint64_t>(b.count) * channels * b.height * b.width;
    if (b.height != 0 && b.width != 0 && total / (static_cast<std::uint64_t>(channels) * b.height * b.width) != b.count) {
        throw IoError("cell block: header dimensions overflow");
    }
    if (total > (std::uint64_t{1} << 36)) {
        throw IoError("cell block: header dimensions are implausibly large");
    }
    b.values.resize(total);
    std::vector<char> raw(total * 4);
    in.read(raw.data(), static_cast<std::streamsize>(raw.size()));
    if (static_cast<std::uint64_t>(in.gcount()) != raw.size()) {
        throw IoError("cell block: count mismatch, header promises " + std::to_string(b.count) + " images but payload holds " +
            std::to_string(in.gcount() / 4) + " of " + std::to_string(total) + " values");
    }
    for (std::size_t i = 0; i < total; ++i) {
        std::uint32_t u = 0;
        for (int k = 0; k < 4; ++k) {
            u |= static_cast<std::uint32_t>(static_cast<unsigned char>(raw[i * 4 + k])) << (8 * k);
        }
        const float v = std::bit_cast<float>(u);
        if (!(v >= 0.0f && v <= 1.0f)) {
            throw IoError("cell block: value at offset " + std::to_string(i) + " lies outside [0, 1]");
        }
        b.values[i] = v;
    }
    if (in.peek() != std::char_traits<char>::eof()) {
        throw IoError("cell block: count mismatch, trailing bytes after payload");
    }
    return b;
}

CellBlock read_cell_block(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open cell block: " + path.string());
    }
    return read_cell_block(in);
}

namespace {

std::size_t mirror(std::ptrdiff_t i, std::size_t n) {
    if (n == 1) {
        return 0;
    }
    const auto last = static_cast<std::ptrdiff_t>(n) - 1;
    while (i < 0 || i > last) {
        i = i < 0 ? -i : 2 * last - i;
    }
    return static_cast<std::size_t>(i);
}

}

CellBlock crop_cells(const FieldImage& field, std::span<const CellCenter> centers, std::size_t size) {
    const auto plane = field.height * field.width;
    if (plane == 0 || field.values.size() != cell_channels * plane) {
        throw std::invalid_argument("field image must hold 3 non-empty channels");
    }
    if (size == 0) {
        throw std::invalid_argument("crop size must be positive");
    }

    std::vector<float> scaled(field.values.size());
    for (std::size_t c = 0; c < cell_channels; ++c) {
        const auto begin = field.values.begin() + static_cast<std::ptrdiff_t>(c * plane);
        const auto [lo, hi] = std::minmax_element(begin, begin + static_cast<std::ptrdiff_t>(plane));
        const double low = *lo, range = static_cast<double>(*hi) - low;
        for (std::size_t p = 0; p < plane; ++p) {
            const double v = field.values[c * plane + p];
            scaled[c * plane + p] = range > 0.0 ? static_cast<float>(std::clamp((v - low) / range, 0.0, 1.0)) : 0.0f;
        }
    }

    CellBlock block;
    block.height = size;
    block.width = size;
    const auto half = static_cast<std::ptrdiff_t>(size / 2);
    for (const auto& center : centers) {
        CellImage img(size, size);
        for (std::size_t c = 0; c < cell_channels; ++c) {
            for (std::size_t y = 0; y < size; ++y) {
                const auto fy = mirror(center.row - half + static_cast<std::ptrdiff_t>(y), field.height);
                for (std::size_t x = 0; x < size; ++x) {
                    const auto fx = mirror(center.col - half + static_cast<std::ptrdiff_t>(x), field.width);
                    img.at(c, y, x) = scaled[c * plane + fy * field.width + fx];
                }
            }
        }
        block.append(img);
    }
    return block;
}

}
