#pragma once

// Channelled 3D activation stack. Channel is the slowest axis, x the fastest,
// so each channel is one contiguous x-fastest sub-volume and flattening for a
// dense layer is a metadata change only.

#include <cstddef>
#include <stdexcept>
#include <vector>

#include "cleverscan/volume.hpp"

namespace cleverscan {

template <typename T>
struct Tensor4 {
    int channels = 0;
    int nx = 0, ny = 0, nz = 0;
    std::vector<T> values;

    Tensor4() = default;
    Tensor4(int channels_, int nx_, int ny_, int nz_, T fill = T(0))
        : channels(channels_), nx(nx_), ny(ny_), nz(nz_),
          values(static_cast<std::size_t>(channels_) * nx_ * ny_ * nz_, fill) {}

    std::size_t size() const { return values.size(); }
    std::size_t spatial_size() const {
        return static_cast<std::size_t>(nx) * ny * nz;
    }

    std::size_t index(int c, int x, int y, int z) const {
        return ((static_cast<std::size_t>(c) * nz + z) * ny + y) * nx + x;
    }

    T& at(int c, int x, int y, int z) { return values[index(c, x, y, z)]; }
    T at(int c, int x, int y, int z) const { return values[index(c, x, y, z)]; }

    T* channel_data(int c) { return values.data() + c * spatial_size(); }
    const T* channel_data(int c) const { return values.data() + c * spatial_size(); }

    bool same_shape(const Tensor4& other) const {
        return channels == other.channels && nx == other.nx && ny == other.ny &&
               nz == other.nz;
    }

    static Tensor4 from_volume(const Volume& volume) {
        Tensor4 t(1, volume.nx, volume.ny, volume.nz);
        for (std::size_t i = 0; i < volume.size(); ++i)
            t.values[i] = static_cast<T>(volume.voxels[i]);
        return t;
    }

    Volume to_volume(int c, double spacing_mm = 1.0) const {
        if (c < 0 || c >= channels)
            throw std::invalid_argument("Tensor4::to_volume: channel out of range");
        Volume volume(nx, ny, nz, spacing_mm);
        const T* src = channel_data(c);
        for (std::size_t i = 0; i < volume.size(); ++i)
            volume.voxels[i] = static_cast<float>(src[i]);
        return volume;
    }
};

} // namespace cleverscan
