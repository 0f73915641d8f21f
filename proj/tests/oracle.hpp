// Double-precision reference implementations used as independent oracles for
// the float library code, plus a central finite-difference helper.
#pragma once

#include <cmath>
#include <functional>
#include <vector>

namespace oracle {

using vd = std::vector<double>;

inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }
inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// C[m x n] = A[m x k] * B[k x n]
inline vd matmul(const vd& a, const vd& b, int m, int k, int n) {
    vd c(static_cast<std::size_t>(m) * n, 0.0);
    for (int i = 0; i < m; ++i)
        for (int p = 0; p < k; ++p)
            for (int j = 0; j < n; ++j)
                c[static_cast<std::size_t>(i) * n + j] +=
                    a[static_cast<std::size_t>(i) * k + p] * b[static_cast<std::size_t>(p) * n + j];
    return c;
}

inline vd layer_norm(const vd& x, const vd& gain, const vd& bias, double eps = 1e-5) {
    const int d = static_cast<int>(x.size());
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= d;
    double var = 0.0;
    for (double v : x) var += (v - mean) * (v - mean);
    var /= d;
    const double istd = 1.0 / std::sqrt(var + eps);
    vd y(x.size());
    for (int j = 0; j < d; ++j)
        y[static_cast<std::size_t>(j)] =
            gain[static_cast<std::size_t>(j)] * (x[static_cast<std::size_t>(j)] - mean) * istd +
            bias[static_cast<std::size_t>(j)];
    return y;
}

// Mean over rows of -log softmax(logits)[label].
inline double softmax_ce(const vd& logits, const std::vector<int>& labels, int cols) {
    const int rows = static_cast<int>(labels.size());
    double loss = 0.0;
    for (int t = 0; t < rows; ++t) {
        double mx = logits[static_cast<std::size_t>(t) * cols];
        for (int j = 1; j < cols; ++j)
            mx = std::max(mx, logits[static_cast<std::size_t>(t) * cols + j]);
        double z = 0.0;
        for (int j = 0; j < cols; ++j)
            z += std::exp(logits[static_cast<std::size_t>(t) * cols + j] - mx);
        const double lp =
            logits[static_cast<std::size_t>(t) * cols + labels[static_cast<std::size_t>(t)]] - mx -
            std::log(z);
        loss -= lp;
    }
    return loss / rows;
}

// One LSTM step, packed gate order (input, forget, cell, output).
inline void lstm_step(const vd& x, const vd& wx, const vd& wh, const vd& b, vd& h, vd& c,
                      int in_dim, int hidden) {
    const int gates = 4 * hidden;
    vd z(static_cast<std::size_t>(gates), 0.0);
    for (int j = 0; j < gates; ++j) z[static_cast<std::size_t>(j)] = b[static_cast<std::size_t>(j)];
    for (int p = 0; p < in_dim; ++p)
        for (int j = 0; j < gates; ++j)
            z[static_cast<std::size_t>(j)] +=
                x[static_cast<std::size_t>(p)] * wx[static_cast<std::size_t>(p) * gates + j];
    for (int p = 0; p < hidden; ++p)
        for (int j = 0; j < gates; ++j)
            z[static_cast<std::size_t>(j)] +=
                h[static_cast<std::size_t>(p)] * wh[static_cast<std::size_t>(p) * gates + j];
    for (int j = 0; j < hidden; ++j) {
        const double ig = sigmoid(z[static_cast<std::size_t>(j)]);
        const double fg = sigmoid(z[static_cast<std::size_t>(hidden + j)]);
        const double gg = std::tanh(z[static_cast<std::size_t>(2 * hidden + j)]);
        const double og = sigmoid(z[static_cast<std::size_t>(3 * hidden + j)]);
        c[static_cast<std::size_t>(j)] = fg * c[static_cast<std::size_t>(j)] + ig * gg;
        h[static_cast<std::size_t>(j)] = og * std::tanh(c[static_cast<std::size_t>(j)]);
    }
}

// Central finite differences of f over a flat vector.
inline vd central_diff(const std::function<double(const vd&)>& f, vd x, double h = 1e-3) {
    vd g(x.size(), 0.0);
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double orig = x[i];
        x[i] = orig + h;
        const double fp = f(x);
        x[i] = orig - h;
        const double fm = f(x);
        x[i] = orig;
        g[i] = (fp - fm) / (2.0 * h);
    }
    return g;
}

}  // namespace oracle
