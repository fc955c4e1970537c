#pragma once

// Dense 3D scalar grid with voxel spacing. Carries images, binary masks and
// relevance maps throughout the pipeline. Storage is x-fastest.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace cleverscan {

static_assert(std::endian::native == std::endian::little,
              "file formats are little-endian; big-endian hosts are unsupported");

struct Volume {
    int nx = 0, ny = 0, nz = 0;
    double spacing_mm = 1.0;
    std::vector<float> voxels;

    Volume() = default;
    Volume(int nx_, int ny_, int nz_, double spacing = 1.0, float fill = 0.0f)
        : nx(nx_), ny(ny_), nz(nz_), spacing_mm(spacing),
          voxels(static_cast<std::size_t>(nx_) * ny_ * nz_, fill) {
        if (nx_ <= 0 || ny_ <= 0 || nz_ <= 0)
            throw std::invalid_argument("Volume: dimensions must be positive");
        if (spacing <= 0.0)
            throw std::invalid_argument("Volume: spacing must be positive");
    }

    std::size_t size() const { return voxels.size(); }

    std::size_t index(int x, int y, int z) const {
        return (static_cast<std::size_t>(z) * ny + y) * nx + x;
    }

    float& at(int x, int y, int z) { return voxels[index(x, y, z)]; }
    float at(int x, int y, int z) const { return voxels[index(x, y, z)]; }

    bool same_dims(const Volume& other) const {
        return nx == other.nx && ny == other.ny && nz == other.nz;
    }

    bool all_finite() const {
        for (float v : voxels)
            if (!std::isfinite(v)) return false;
        return true;
    }

    float min_value() const {
        return *std::min_element(voxels.begin(), voxels.end());
    }

    float max_value() const {
        return *std::max_element(voxels.begin(), voxels.end());
    }

    double sum() const {
        double acc = 0.0;
        for (float v : voxels) acc += v;
        return acc;
    }
};

// ---------------------------------------------------------------------------
// VOL1 file format: magic "VOL1", 3 x u32 little-endian dims, f64 spacing_mm,
// then f32 little-endian voxels in x-fastest order.
// ---------------------------------------------------------------------------

inline void write_vol1(const Volume& volume, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_vol1: cannot open " + path);
    out.write("VOL1", 4);
    const std::uint32_t dims[3] = {static_cast<std::uint32_t>(volume.nx),
                                   static_cast<std::uint32_t>(volume.ny),
                                   static_cast<std::uint32_t>(volume.nz)};
    out.write(reinterpret_cast<const char*>(dims), sizeof(dims));
    out.write(reinterpret_cast<const char*>(&volume.spacing_mm), sizeof(double));
    out.write(reinterpret_cast<const char*>(volume.voxels.data()),
              static_cast<std::streamsize>(volume.size() * sizeof(float)));
    if (!out) throw std::runtime_error("write_vol1: short write to " + path);
}

inline Volume read_vol1(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("read_vol1: cannot open " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::string(magic, 4) != "VOL1")
        throw std::runtime_error("read_vol1: bad magic in " + path);
    std::uint32_t dims[3];
    double spacing = 0.0;
    in.read(reinterpret_cast<char*>(dims), sizeof(dims));
    in.read(reinterpret_cast<char*>(&spacing), sizeof(double));
    if (!in) throw std::runtime_error("read_vol1: truncated header in " + path);
    Volume volume(static_cast<int>(dims[0]), static_cast<int>(dims[1]),
                  static_cast<int>(dims[2]), spacing);
    in.read(reinterpret_cast<char*>(volume.voxels.data()),
            static_cast<std::streamsize>(volume.size() * sizeof(float)));
    if (!in) throw std::runtime_error("read_vol1: truncated voxel data in " + path);
    return volume;
}

/// Writes the axial slice z of a volume as a binary 8-bit PGM, mapping
/// [window_lo, window_hi] onto [0, 255]; values below the window clamp to 0.
inline void write_pgm_slice(const Volume& volume, int z, const std::string& path,
                            double window_lo, double window_hi) {
    if (z < 0 || z >= volume.nz)
        throw std::invalid_argument("write_pgm_slice: slice out of range");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_pgm_slice: cannot open " + path);
    out << "P5\n" << volume.nx << " " << volume.ny << "\n255\n";
    const double span = window_hi > window_lo ? window_hi - window_lo : 1.0;
    for (int y = 0; y < volume.ny; ++y) {
        for (int x = 0; x < volume.nx; ++x) {
            double t = (volume.at(x, y, z) - window_lo) / span;
            t = std::clamp(t, 0.0, 1.0);
            const unsigned char byte = static_cast<unsigned char>(std::lround(t * 255.0));
            out.write(reinterpret_cast<const char*>(&byte), 1);
        }
    }
    if (!out) throw std::runtime_error("write_pgm_slice: short write to " + path);
}

} // namespace cleverscan
