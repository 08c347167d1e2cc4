#pragma once

#include <cassert>
#include <cstdint>
#include <vector>

namespace ccdiff {

// Row-major N x M double matrix.
struct Mat {
    int rows = 0, cols = 0;
    std::vector<double> v;

    Mat() = default;
    Mat(int r, int c, double fill = 0.0) : rows(r), cols(c), v(static_cast<size_t>(r) * c, fill) {}

    double& at(int r, int c) { return v[static_cast<size_t>(r) * cols + c]; }
    double at(int r, int c) const { return v[static_cast<size_t>(r) * cols + c]; }
};

struct BoolMat {
    int rows = 0, cols = 0;
    std::vector<uint8_t> v;

    BoolMat() = default;
    BoolMat(int r, int c, bool fill = false)
        : rows(r), cols(c), v(static_cast<size_t>(r) * c, fill ? 1 : 0) {}

    void set(int r, int c, bool b) { v[static_cast<size_t>(r) * cols + c] = b ? 1 : 0; }
    bool at(int r, int c) const { return v[static_cast<size_t>(r) * cols + c] != 0; }

    static BoolMat identity(int n) {
        BoolMat m(n, n, false);
        for (int i = 0; i < n; ++i) m.set(i, i, true);
        return m;
    }
};

// Generic [A][B][C] tensor (attention keys/values, relative features).
struct Cube {
    int a = 0, b = 0, c = 0;
    std::vector<double> v;

    Cube() = default;
    Cube(int a_, int b_, int c_, double fill = 0.0)
        : a(a_), b(b_), c(c_), v(static_cast<size_t>(a_) * b_ * c_, fill) {}

    double& at(int i, int j, int k) { return v[(static_cast<size_t>(i) * b + j) * c + k]; }
    double at(int i, int j, int k) const { return v[(static_cast<size_t>(i) * b + j) * c + k]; }
    double* ptr(int i, int j) { return &v[(static_cast<size_t>(i) * b + j) * c]; }
    const double* ptr(int i, int j) const { return &v[(static_cast<size_t>(i) * b + j) * c]; }
};

// [T][N][2] action-channel tensor used for diffused action sequences and their gradients.
struct ActionTensor {
    int T = 0, N = 0;
    std::vector<double> v;

    ActionTensor() = default;
    ActionTensor(int t, int n, double fill = 0.0)
        : T(t), N(n), v(static_cast<size_t>(t) * n * 2, fill) {}

    double& at(int t, int n, int c) { return v[(static_cast<size_t>(t) * N + n) * 2 + c]; }
    double at(int t, int n, int c) const { return v[(static_cast<size_t>(t) * N + n) * 2 + c]; }

    size_t size() const { return v.size(); }
};

}  // namespace ccdiff
