#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "tetdiff/errors.hpp"

namespace tetdiff {

// Dense multi-channel cubic tensor, channel-major, z fastest.
// Holds lattice embeddings, diffusion states and network activations.
struct Tensor {
    int channels = 0;
    int dim = 0; // sites per axis
    std::vector<double> v;

    Tensor() = default;
    Tensor(int channels_, int dim_)
        : channels(channels_), dim(dim_),
          v(static_cast<std::size_t>(channels_) * dim_ * dim_ * dim_, 0.0) {}

    std::size_t sites() const { return static_cast<std::size_t>(dim) * dim * dim; }
    std::size_t size() const { return v.size(); }

    std::size_t site_index(int x, int y, int z) const {
        return (static_cast<std::size_t>(x) * dim + y) * dim + z;
    }

    double& at(int c, int x, int y, int z) { return v[c * sites() + site_index(x, y, z)]; }
    double at(int c, int x, int y, int z) const { return v[c * sites() + site_index(x, y, z)]; }

    double* channel(int c) { return v.data() + c * sites(); }
    const double* channel(int c) const { return v.data() + c * sites(); }

    bool same_shape(const Tensor& o) const { return channels == o.channels && dim == o.dim; }

    bool finite() const {
        for (double x : v)
            if (!std::isfinite(x)) return false;
        return true;
    }
};

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (!a.same_shape(b)) throw DimensionError(std::string(what) + ": tensor shape mismatch");
}

} // namespace tetdiff
