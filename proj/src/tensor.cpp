#include "pvad/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace pvad::ad {

namespace {

std::size_t shape_size(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int d : shape) n *= static_cast<std::size_t>(d);
    return shape.empty() ? 0 : n;
}

std::vector<float>& grad_buf(std::vector<std::vector<float>>& grads, int node, std::size_t n) {
    auto& g = grads[static_cast<std::size_t>(node)];
    if (g.empty()) g.assign(n, 0.0f);
    return g;
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape != b.shape) {
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape) + " vs " +
                             shape_str(b.shape));
    }
}

constexpr float kInvSqrt2 = 0.70710678118654752440f;
constexpr float kInvSqrt2Pi = 0.39894228040143267794f;

inline float sigmoidf(float x) { return 1.0f / (1.0f + std::exp(-x)); }

}  // namespace

Tensor::Tensor(std::vector<int> shp, float fill)
    : shape(std::move(shp)), data(shape_size(shape), fill) {}

Tensor::Tensor(std::vector<int> shp, std::vector<float> values)
    : shape(std::move(shp)), data(std::move(values)) {
    if (data.size() != shape_size(shape)) {
        throw DimensionError("tensor: data length " + std::to_string(data.size()) +
                             " does not match shape " + shape_str(shape));
    }
}

Tensor Tensor::vec(std::vector<float> values) {
    const int n = static_cast<int>(values.size());
    return Tensor({n}, std::move(values));
}

std::string shape_str(const std::vector<int>& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
    os << "]";
    return os.str();
}

int Tape::watch(Tensor& t) {
    t.node = record({}, t.shape, nullptr);
    return t.node;
}

int Tape::record(std::vector<int> inputs, std::vector<int> out_shape, BackFn back) {
    nodes_.push_back(Node{std::move(inputs), std::move(out_shape), std::move(back)});
    return static_cast<int>(nodes_.size()) - 1;
}

Gradients Tape::backward(const Tensor& loss) const {
    if (loss.size() != 1) {
        throw ContractError("backward: loss must be scalar, got shape " + shape_str(loss.shape));
    }
    if (loss.node < 0 || loss.node >= static_cast<int>(nodes_.size())) {
        throw ContractError("backward: loss is not a tape node");
    }
    Gradients out;
    out.grads_.resize(nodes_.size());
    out.shapes_.resize(nodes_.size());
    for (std::size_t i = 0; i < nodes_.size(); ++i) out.shapes_[i] = nodes_[i].shape;
    out.grads_[static_cast<std::size_t>(loss.node)] = {1.0f};
    for (int id = loss.node; id >= 0; --id) {
        const Node& n = nodes_[static_cast<std::size_t>(id)];
        const auto& up = out.grads_[static_cast<std::size_t>(id)];
        if (up.empty() || !n.back) continue;
        n.back(up, out.grads_);
    }
    return out;
}

const std::vector<float>& Gradients::flat(int node) const {
    const auto& g = grads_[static_cast<std::size_t>(node)];
    if (!g.empty()) return g;
    const std::size_t n = shape_size(shapes_[static_cast<std::size_t>(node)]);
    if (zeros_.size() < n) zeros_.assign(n, 0.0f);
    return zeros_;
}

bool Gradients::reached(int node) const {
    return !grads_[static_cast<std::size_t>(node)].empty();
}

Tensor Gradients::at(const Tensor& t) const {
    if (t.node < 0) throw ContractError("Gradients::at: tensor is not tracked");
    Tensor g(t.shape, 0.0f);
    const auto& src = grads_[static_cast<std::size_t>(t.node)];
    if (!src.empty()) g.data = src;
    return g;
}

Tensor matmul(const Tensor& a, const Tensor& b, Tape* tape) {
    if (a.shape.size() != 2 && a.shape.size() != 1) {
        throw DimensionError("matmul: lhs rank must be 1 or 2, shape " + shape_str(a.shape));
    }
    const int m = a.rows(), k = a.cols();
    const int k2 = b.rows(), n = b.cols();
    if (b.shape.size() != 2 || k != k2) {
        throw DimensionError("matmul: inner dimensions disagree, " + shape_str(a.shape) + " x " +
                             shape_str(b.shape));
    }
    Tensor out(a.shape.size() == 1 ? std::vector<int>{n} : std::vector<int>{m, n}, 0.0f);
    const float* A = a.data.data();
    const float* B = b.data.data();
    float* C = out.data.data();
    for (int i = 0; i < m; ++i) {
        for (int p = 0; p < k; ++p) {
            const float av = A[i * k + p];
            if (av == 0.0f) continue;
            const float* brow = B + static_cast<std::size_t>(p) * n;
            float* crow = C + static_cast<std::size_t>(i) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
    if (tape && (a.node >= 0 || b.node >= 0)) {
        auto adata = a.data;
        auto bdata = b.data;
        int an = a.node, bn = b.node;
        std::size_t asz = a.size(), bsz = b.size();
        out.node = tape->record(
            {an, bn}, out.shape,
            [adata = std::move(adata), bdata = std::move(bdata), an, bn, asz, bsz, m, k, n](
                const std::vector<float>& up, std::vector<std::vector<float>>& grads) {
                if (an >= 0) {
                    auto& ga = grad_buf(grads, an, asz);
                    // dA = up · B^T
                    for (int i = 0; i < m; ++i)
                        for (int p = 0; p < k; ++p) {
                            float acc = 0.0f;
                            const float* urow = up.data() + static_cast<std::size_t>(i) * n;
                            const float* brow = bdata.data() + static_cast<std::size_t>(p) * n;
                            for (int j = 0; j < n; ++j) acc += urow[j] * brow[j];
                            ga[static_cast<std::size_t>(i) * k + p] += acc;
                        }
                }
                if (bn >= 0) {
                    auto& gb = grad_buf(grads, bn, bsz);
                    // dB = A^T · up
                    for (int p = 0; p < k; ++p)
                        for (int i = 0; i < m; ++i) {
                            const float av = adata[static_cast<std::size_t>(i) * k + p];
                            if (av == 0.0f) continue;
                            const float* urow = up.data() + static_cast<std::size_t>(i) * n;
                            float* grow = gb.data() + static_cast<std::size_t>(p) * n;
                            for (int j = 0; j < n; ++j) grow[j] += av * urow[j];
                        }
                }
            });
    }
    return out;
}

Tensor add(const Tensor& a, const Tensor& b, Tape* tape) {
    check_same_shape(a, b, "add");
    Tensor out(a.shape, 0.0f);
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = a.data[i] + b.data[i];
    if (tape && (a.node >= 0 || b.node >= 0)) {
        int an = a.node, bn = b.node;
        std::size_t n = out.size();
        out.node = tape->record({an, bn}, out.shape,
                                [an, bn, n](const std::vector<float>& up,
                                            std::vector<std::vector<float>>& grads) {
                                    if (an >= 0) {
                                        auto& g = grad_buf(grads, an, n);
                                        for (std::size_t i = 0; i < n; ++i) g[i] += up[i];
                                    }
                                    if (bn >= 0) {
                                        auto& g = grad_buf(grads, bn, n);
                                        for (std::size_t i = 0; i < n; ++i) g[i] += up[i];
                                    }
                                });
    }
    return out;
}

Tensor mul(const Tensor& a, const Tensor& b, Tape* tape) {
    check_same_shape(a, b, "mul");
    Tensor out(a.shape, 0.0f);
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = a.data[i] * b.data[i];
    if (tape && (a.node >= 0 || b.node >= 0)) {
        auto adata = a.data;
        auto bdata = b.data;
        int an = a.node, bn = b.node;
        std::size_t n = out.size();
        out.node = tape->record(
            {an, bn}, out.shape,
            [adata = std::move(adata), bdata = std::move(bdata), an, bn, n](
                const std::vector<float>& up, std::vector<std::vector<float>>& grads) {
                if (an >= 0) {
                    auto& g = grad_buf(grads, an, n);
                    for (std::size_t i = 0; i < n; ++i) g[i] += up[i] * bdata[i];
                }
                if (bn >= 0) {
                    auto& g = grad_buf(grads, bn, n);
                    for (std::size_t i = 0; i < n; ++i) g[i] += up[i] * adata[i];
                }
            });
    }
    return out;
}

Tensor add_rows(const Tensor& m, const Tensor& v, Tape* tape) {
    const int rows = m.rows(), cols = m.cols();
    if (static_cast<int>(v.size()) != cols) {
        throw DimensionError("add_rows: matrix " + shape_str(m.shape) + " vs vector " +
                             shape_str(v.shape));
    }
    Tensor out(m.shape, 0.0f);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) out.at(i, j) = m.at(i, j) + v.data[static_cast<std::size_t>(j)];
    if (tape && (m.node >= 0 || v.node >= 0)) {
        int mn = m.node, vn = v.node;
        std::size_t msz = m.size(), vsz = v.size();
        out.node = tape->record(
            {mn, vn}, out.shape,
            [mn, vn, msz, vsz, rows, cols](const std::vector<float>& up,
                                           std::vector<std::vector<float>>& grads) {
                if (mn >= 0) {
                    auto& g = grad_buf(grads, mn, msz);
                    for (std::size_t i = 0; i < msz; ++i) g[i] += up[i];
                }
                if (vn >= 0) {
                    auto& g = grad_buf(grads, vn, vsz);
                    for (int i = 0; i < rows; ++i)
                        for (int j = 0; j < cols; ++j)
                            g[static_cast<std::size_t>(j)] += up[static_cast<std::size_t>(i) * cols + j];
                }
            });
    }
    return out;
}

Tensor mul_rows(const Tensor& m, const Tensor& v, Tape* tape) {
    const int rows = m.rows(), cols = m.cols();
    if (static_cast<int>(v.size()) != cols) {
        throw DimensionError("mul_rows: matrix " + shape_str(m.shape) + " vs vector " +
                             shape_str(v.shape));
    }
    Tensor out(m.shape, 0.0f);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) out.at(i, j) = m.at(i, j) * v.data[static_cast<std::size_t>(j)];
    if (tape && (m.node >= 0 || v.node >= 0)) {
        auto mdata = m.data;
        auto vdata = v.data;
        int mn = m.node, vn = v.node;
        out.node = tape->record(
            {mn, vn}, out.shape,
            [mdata = std::move(mdata), vdata = std::move(vdata), mn, vn, rows, cols](
                const std::vector<float>& up, std::vector<std::vector<float>>& grads) {
                if (mn >= 0) {
                    auto& g = grad_buf(grads, mn, mdata.size());
                    for (int i = 0; i < rows; ++i)
                        for (int j = 0; j < cols; ++j) {
                            const std::size_t idx = static_cast<std::size_t>(i) * cols + j;
                            g[idx] += up[idx] * vdata[static_cast<std::size_t>(j)];
                        }
                }
                if (vn >= 0) {
                    auto& g = grad_buf(grads, vn, vdata.size());
                    for (int i = 0; i < rows; ++i)
                        for (int j = 0; j < cols; ++j) {
                            const std::size_t idx = static_cast<std::size_t>(i) * cols + j;
                            g[static_cast<std::size_t>(j)] += up[idx] * mdata[idx];
                        }
                }
            });
    }
    return out;
}

Tensor add_const(const Tensor& t, float c, Tape* tape) {
    Tensor out(t.shape, 0.0f);
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = t.data[i] + c;
    if (tape && t.node >= 0) {
        int tn = t.node;
        std::size_t n = out.size();
        out.node = tape->record({tn}, out.shape,
                                [tn, n](const std::vector<float>& up,
                                        std::vector<std::vector<float>>& grads) {
                                    auto& g = grad_buf(grads, tn, n);
                                    for (std::size_t i = 0; i < n; ++i) g[i] += up[i];
                                });
    }
    return out;
}

Tensor scale(const Tensor& t, float c, Tape* tape) {
    Tensor out(t.shape, 0.0f);
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = t.data[i] * c;
    if (tape && t.node >= 0) {
        int tn = t.node;
        std::size_t n = out.size();
        out.node = tape->record({tn}, out.shape,
                                [tn, n, c](const std::vector<float>& up,
                                           std::vector<std::vector<float>>& grads) {
                                    auto& g = grad_buf(grads, tn, n);
                                    for (std::size_t i = 0; i < n; ++i) g[i] += up[i] * c;
                                });
    }
    return out;
}

Tensor gelu(const Tensor& t, Tape* tape) {
    Tensor out(t.shape, 0.0f);
    for (std::size_t i = 0; i < out.size(); ++i) {
        const float x = t.data[i];
        out.data[i] = 0.5f * x * (1.0f + std::erf(x * kInvSqrt2));
    }
    if (tape && t.node >= 0) {
        auto xdata = t.data;
        int tn = t.node;
        out.node = tape->record(
            {tn}, out.shape,
            [xdata = std::move(xdata), tn](const std::vector<float>& up,
                                           std::vector<std::vector<float>>& grads) {
                auto& g = grad_buf(grads, tn, xdata.size());
                for (std::size_t i = 0; i < xdata.size(); ++i) {
                    const float x = xdata[i];
                    const float cdf = 0.5f * (1.0f + std::erf(x * kInvSqrt2));
                    const float pdf = kInvSqrt2Pi * std::exp(-0.5f * x * x);
                    g[i] += up[i] * (cdf + x * pdf);
                }
            });
    }
    return out;
}

Tensor concat_cols(const Tensor& a, const Tensor& b, Tape* tape) {
    if (a.rows() != b.rows()) {
        throw DimensionError("concat_cols: row counts differ, " + shape_str(a.shape) + " vs " +
                             shape_str(b.shape));
    }
    const int rows = a.rows(), ca = a.cols(), cb = b.cols();
    Tensor out({rows, ca + cb}, 0.0f);
    for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < ca; ++j) out.at(i, j) = a.at(i, j);
        for (int j = 0; j < cb; ++j) out.at(i, ca + j) = b.at(i, j);
    }
    if (tape && (a.node >= 0 || b.node >= 0)) {
        int an = a.node, bn = b.node;
        std::size_t asz = a.size(), bsz = b.size();
        out.node = tape->record(
            {an, bn}, out.shape,
            [an, bn, asz, bsz, rows, ca, cb](const std::vector<float>& up,
                                             std::vector<std::vector<float>>& grads) {
                const int cols = ca + cb;
                if (an >= 0) {
                    auto& g = grad_buf(grads, an, asz);
                    for (int i = 0; i < rows; ++i)
                        for (int j = 0; j < ca; ++j)
                            g[static_cast<std::size_t>(i) * ca + j] +=
                                up[static_cast<std::size_t>(i) * cols + j];
                }
                if (bn >= 0) {
                    auto& g = grad_buf(grads, bn, bsz);
                    for (int i = 0; i < rows; ++i)
                        for (int j = 0; j < cb; ++j)
                            g[static_cast<std::size_t>(i) * cb + j] +=
                                up[static_cast<std::size_t>(i) * cols + ca + j];
                }
            });
    }
    return out;
}

Tensor tile_rows(const Tensor& v, int t_rows, Tape* tape) {
    const int cols = static_cast<int>(v.size());
    Tensor out({t_rows, cols}, 0.0f);
    for (int i = 0; i < t_rows; ++i)
        for (int j = 0; j < cols; ++j) out.at(i, j) = v.data[static_cast<std::size_t>(j)];
    if (tape && v.node >= 0) {
        int vn = v.node;
        out.node = tape->record({vn}, out.shape,
                                [vn, t_rows, cols](const std::vector<float>& up,
                                                   std::vector<std::vector<float>>& grads) {
                                    auto& g = grad_buf(grads, vn, static_cast<std::size_t>(cols));
                                    for (int i = 0; i < t_rows; ++i)
                                        for (int j = 0; j < cols; ++j)
                                            g[static_cast<std::size_t>(j)] +=
                                                up[static_cast<std::size_t>(i) * cols + j];
                                });
    }
    return out;
}

Tensor slice(const Tensor& t, int offset, std::vector<int> out_shape, Tape* tape) {
    std::size_t n = shape_size(out_shape);
    if (offset < 0 || static_cast<std::size_t>(offset) + n > t.size()) {
        throw DimensionError("slice: range [" + std::to_string(offset) + ", " +
                             std::to_string(offset + static_cast<int>(n)) + ") exceeds tensor of size " +
                             std::to_string(t.size()));
    }
    Tensor out(out_shape, std::vector<float>(t.data.begin() + offset,
                                             t.data.begin() + offset + static_cast<long>(n)));
    if (tape && t.node >= 0) {
        int tn = t.node;
        std::size_t tsz = t.size();
        out.node = tape->record({tn}, out.shape,
                                [tn, tsz, offset, n](const std::vector<float>& up,
                                                     std::vector<std::vector<float>>& grads) {
                                    auto& g = grad_buf(grads, tn, tsz);
                                    for (std::size_t i = 0; i < n; ++i)
                                        g[static_cast<std::size_t>(offset) + i] += up[i];
                                });
    }
    return out;
}

Tensor sum(const Tensor& t, Tape* tape) {
    float acc = 0.0f;
    for (float v : t.data) acc += v;
    Tensor out({1}, {acc});
    if (tape && t.node >= 0) {
        int tn = t.node;
        std::size_t n = t.size();
        out.node = tape->record({tn}, out.shape,
                                [tn, n](const std::vector<float>& up,
                                        std::vector<std::vector<float>>& grads) {
                                    auto& g = grad_buf(grads, tn, n);
                                    for (std::size_t i = 0; i < n; ++i) g[i] += up[0];
                                });
    }
    return out;
}

Tensor reshape(const Tensor& t, std::vector<int> shape) {
    if (shape_size(shape) != t.size()) {
        throw DimensionError("reshape: " + shape_str(t.shape) + " to " + shape_str(shape));
    }
    Tensor out = t;
    out.shape = std::move(shape);
    return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, Tape* tape) {
    const int rows = x.rows(), cols = x.cols();
    if (cols < 2) {
        throw DimensionError("layer_norm: degenerate input, need dim >= 2, got " +
                             shape_str(x.shape));
    }
    if (static_cast<int>(gain.size()) != cols || static_cast<int>(bias.size()) != cols) {
        throw DimensionError("layer_norm: gain/bias " + shape_str(gain.shape) + "/" +
                             shape_str(bias.shape) + " vs input " + shape_str(x.shape));
    }
    Tensor out(x.shape, 0.0f);
    std::vector<float> yhat(x.size());       // normalized pre-affine values
    std::vector<float> inv_std(static_cast<std::size_t>(rows));
    for (int i = 0; i < rows; ++i) {
        float mean = 0.0f;
        for (int j = 0; j < cols; ++j) mean += x.at(i, j);
        mean /= static_cast<float>(cols);
        float var = 0.0f;
        for (int j = 0; j < cols; ++j) {
            const float d = x.at(i, j) - mean;
            var += d * d;
        }
        var /= static_cast<float>(cols);
        const float istd = 1.0f / std::sqrt(var + kLayerNormEps);
        inv_std[static_cast<std::size_t>(i)] = istd;
        for (int j = 0; j < cols; ++j) {
            const float y = (x.at(i, j) - mean) * istd;
            yhat[static_cast<std::size_t>(i) * cols + j] = y;
            out.at(i, j) = gain.data[static_cast<std::size_t>(j)] * y +
                           bias.data[static_cast<std::size_t>(j)];
        }
    }
    if (tape && (x.node >= 0 || gain.node >= 0 || bias.node >= 0)) {
        auto gdata = gain.data;
        int xn = x.node, gn = gain.node, bn = bias.node;
        out.node = tape->record(
            {xn, gn, bn}, out.shape,
            [yhat = std::move(yhat), inv_std = std::move(inv_std), gdata = std::move(gdata), xn, gn,
             bn, rows, cols](const std::vector<float>& up, std::vector<std::vector<float>>& grads) {
                if (gn >= 0) {
                    auto& g = grad_buf(grads, gn, static_cast<std::size_t>(cols));
                    for (int i = 0; i < rows; ++i)
                        for (int j = 0; j < cols; ++j) {
                            const std::size_t idx = static_cast<std::size_t>(i) * cols + j;
                            g[static_cast<std::size_t>(j)] += up[idx] * yhat[idx];
                        }
                }
                if (bn >= 0) {
                    auto& g = grad_buf(grads, bn, static_cast<std::size_t>(cols));
                    for (int i = 0; i < rows; ++i)
                        for (int j = 0; j < cols; ++j)
                            g[static_cast<std::size_t>(j)] += up[static_cast<std::size_t>(i) * cols + j];
                }
                if (xn >= 0) {
                    auto& g = grad_buf(grads, xn, static_cast<std::size_t>(rows) * cols);
                    for (int i = 0; i < rows; ++i) {
                        float mean_dy = 0.0f, mean_dyy = 0.0f;
                        for (int j = 0; j < cols; ++j) {
                            const std::size_t idx = static_cast<std::size_t>(i) * cols + j;
                            const float dy = up[idx] * gdata[static_cast<std::size_t>(j)];
                            mean_dy += dy;
                            mean_dyy += dy * yhat[idx];
                        }
                        mean_dy /= static_cast<float>(cols);
                        mean_dyy /= static_cast<float>(cols);
                        const float istd = inv_std[static_cast<std::size_t>(i)];
                        for (int j = 0; j < cols; ++j) {
                            const std::size_t idx = static_cast<std::size_t>(i) * cols + j;
                            const float dy = up[idx] * gdata[static_cast<std::size_t>(j)];
                            g[idx] += istd * (dy - mean_dy - yhat[idx] * mean_dyy);
                        }
                    }
                }
            });
    }
    return out;
}

Tensor softmax(const Tensor& logits) {
    const int rows = logits.rows(), cols = logits.cols();
    Tensor out(logits.shape, 0.0f);
    for (int i = 0; i < rows; ++i) {
        float mx = logits.at(i, 0);
        for (int j = 1; j < cols; ++j) mx = std::max(mx, logits.at(i, j));
        float z = 0.0f;
        for (int j = 0; j < cols; ++j) {
            const float e = std::exp(logits.at(i, j) - mx);
            out.at(i, j) = e;
            z += e;
        }
        for (int j = 0; j < cols; ++j) out.at(i, j) /= z;
    }
    return out;
}

Tensor softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels, Tape* tape,
                             const std::vector<float>& class_weights) {
    const int rows = logits.rows(), cols = logits.cols();
    if (rows < 1) throw DimensionError("softmax_cross_entropy: empty logits");
    if (static_cast<int>(labels.size()) != rows) {
        throw DimensionError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                             " labels for " + std::to_string(rows) + " frames");
    }
    if (!class_weights.empty() && static_cast<int>(class_weights.size()) != cols) {
        throw DimensionError("softmax_cross_entropy: weight count " +
                             std::to_string(class_weights.size()) + " vs " +
                             std::to_string(cols) + " classes");
    }
    for (int t = 0; t < rows; ++t) {
        if (labels[static_cast<std::size_t>(t)] < 0 || labels[static_cast<std::size_t>(t)] >= cols) {
            throw LabelError("softmax_cross_entropy: label " +
                             std::to_string(labels[static_cast<std::size_t>(t)]) +
                             " out of range at frame " + std::to_string(t));
        }
    }
    std::vector<float> fw(static_cast<std::size_t>(rows), 1.0f);
    float wsum = static_cast<float>(rows);
    if (!class_weights.empty()) {
        wsum = 0.0f;
        for (int t = 0; t < rows; ++t) {
            fw[static_cast<std::size_t>(t)] =
                class_weights[static_cast<std::size_t>(labels[static_cast<std::size_t>(t)])];
            wsum += fw[static_cast<std::size_t>(t)];
        }
        if (wsum <= 0.0f) throw ContractError("softmax_cross_entropy: weights sum to zero");
    }
    Tensor probs = softmax(logits);
    float loss = 0.0f;
    for (int t = 0; t < rows; ++t) {
        const float p = probs.at(t, labels[static_cast<std::size_t>(t)]);
        loss += -fw[static_cast<std::size_t>(t)] * std::log(std::max(p, 1e-30f));
    }
    loss /= wsum;
    Tensor out({1}, {loss});
    if (tape && logits.node >= 0) {
        int ln = logits.node;
        auto pdata = probs.data;
        auto lab = labels;
        out.node = tape->record(
            {ln}, out.shape,
            [pdata = std::move(pdata), lab = std::move(lab), fw = std::move(fw), wsum, ln, rows,
             cols](const std::vector<float>& up, std::vector<std::vector<float>>& grads) {
                auto& g = grad_buf(grads, ln, static_cast<std::size_t>(rows) * cols);
                for (int t = 0; t < rows; ++t) {
                    const float s = up[0] * fw[static_cast<std::size_t>(t)] / wsum;
                    for (int j = 0; j < cols; ++j) {
                        const std::size_t idx = static_cast<std::size_t>(t) * cols + j;
                        const float onehot = (j == lab[static_cast<std::size_t>(t)]) ? 1.0f : 0.0f;
                        g[idx] += s * (pdata[idx] - onehot);
                    }
                }
            });
    }
    return out;
}

void lstm_cell_kernel(const float* xb, const float* wh, float* h, float* c, int hidden) {
    const int gates = 4 * hidden;
    std::vector<float> z(xb, xb + gates);
    for (int k = 0; k < hidden; ++k) {
        const float hv = h[k];
        if (hv == 0.0f) continue;
        const float* wrow = wh + static_cast<std::size_t>(k) * gates;
        for (int j = 0; j < gates; ++j) z[static_cast<std::size_t>(j)] += hv * wrow[j];
    }
    for (int j = 0; j < hidden; ++j) {
        const float i_g = sigmoidf(z[static_cast<std::size_t>(j)]);
        const float f_g = sigmoidf(z[static_cast<std::size_t>(hidden + j)]);
        const float g_g = std::tanh(z[static_cast<std::size_t>(2 * hidden + j)]);
        const float o_g = sigmoidf(z[static_cast<std::size_t>(3 * hidden + j)]);
        const float cv = f_g * c[j] + i_g * g_g;
        c[j] = cv;
        h[j] = o_g * std::tanh(cv);
    }
}

void lstm_cell(const std::vector<float>& x, const Tensor& wx, const Tensor& wh, const Tensor& b,
               LstmState& state) {
    const int d = wx.rows();
    const int gates = wx.cols();
    const int hidden = gates / 4;
    if (static_cast<int>(x.size()) != d || wh.rows() != hidden || wh.cols() != gates ||
        static_cast<int>(b.size()) != gates) {
        throw DimensionError("lstm_cell: inconsistent shapes x" + shape_str({(int)x.size()}) +
                             " wx" + shape_str(wx.shape) + " wh" + shape_str(wh.shape) + " b" +
                             shape_str(b.shape));
    }
    if (static_cast<int>(state.h.size()) != hidden || static_cast<int>(state.c.size()) != hidden) {
        throw DimensionError("lstm_cell: state size mismatch");
    }
    // xb accumulates in the same order as the batched matmul + bias path.
    std::vector<float> xb(static_cast<std::size_t>(gates), 0.0f);
    for (int k = 0; k < d; ++k) {
        const float xv = x[static_cast<std::size_t>(k)];
        if (xv == 0.0f) continue;
        const float* wrow = wx.data.data() + static_cast<std::size_t>(k) * gates;
        for (int j = 0; j < gates; ++j) xb[static_cast<std::size_t>(j)] += xv * wrow[j];
    }
    for (int j = 0; j < gates; ++j) xb[static_cast<std::size_t>(j)] += b.data[static_cast<std::size_t>(j)];
    lstm_cell_kernel(xb.data(), wh.data.data(), state.h.data(), state.c.data(), hidden);
}

Tensor lstm_sequence(const Tensor& x, const Tensor& wx, const Tensor& wh, const Tensor& b,
                     Tape* tape) {
    const int T = x.rows(), d = x.cols();
    const int gates = wx.cols();
    const int hidden = gates / 4;
    if (wx.rows() != d || wh.rows() != hidden || wh.cols() != gates ||
        static_cast<int>(b.size()) != gates) {
        throw DimensionError("lstm_sequence: inconsistent shapes x" + shape_str(x.shape) + " wx" +
                             shape_str(wx.shape) + " wh" + shape_str(wh.shape) + " b" +
                             shape_str(b.shape));
    }
    // Input projection for all frames at once, then a per-frame recurrence
    // that shares its arithmetic with the streaming cell.
    Tensor xb = add_rows(matmul(x, wx), b);  // no tape: saved manually below

    Tensor out({T, hidden}, 0.0f);
    std::vector<float> h(static_cast<std::size_t>(hidden), 0.0f);
    std::vector<float> c(static_cast<std::size_t>(hidden), 0.0f);

    const bool training = tape && (x.node >= 0 || wx.node >= 0 || wh.node >= 0 || b.node >= 0);
    // Saved activations for backward: gates (i,f,g,o) and cell states per frame.
    std::vector<float> s_i, s_f, s_g, s_o, s_c;
    if (training) {
        const std::size_t n = static_cast<std::size_t>(T) * hidden;
        s_i.resize(n);
        s_f.resize(n);
        s_g.resize(n);
        s_o.resize(n);
        s_c.resize(n);
    }

    for (int t = 0; t < T; ++t) {
        const float* xbrow = xb.data.data() + static_cast<std::size_t>(t) * gates;
        if (!training) {
            lstm_cell_kernel(xbrow, wh.data.data(), h.data(), c.data(), hidden);
        } else {
            std::vector<float> z(xbrow, xbrow + gates);
            for (int k = 0; k < hidden; ++k) {
                const float hv = h[static_cast<std::size_t>(k)];
                if (hv == 0.0f) continue;
                const float* wrow = wh.data.data() + static_cast<std::size_t>(k) * gates;
                for (int j = 0; j < gates; ++j) z[static_cast<std::size_t>(j)] += hv * wrow[j];
            }
            for (int j = 0; j < hidden; ++j) {
                const std::size_t idx = static_cast<std::size_t>(t) * hidden + j;
                const float i_g = sigmoidf(z[static_cast<std::size_t>(j)]);
                const float f_g = sigmoidf(z[static_cast<std::size_t>(hidden + j)]);
                const float g_g = std::tanh(z[static_cast<std::size_t>(2 * hidden + j)]);
                const float o_g = sigmoidf(z[static_cast<std::size_t>(3 * hidden + j)]);
                const float cv = f_g * c[static_cast<std::size_t>(j)] + i_g * g_g;
                s_i[idx] = i_g;
                s_f[idx] = f_g;
                s_g[idx] = g_g;
                s_o[idx] = o_g;
                s_c[idx] = cv;
                c[static_cast<std::size_t>(j)] = cv;
                h[static_cast<std::size_t>(j)] = o_g * std::tanh(cv);
            }
        }
        float* orow = out.data.data() + static_cast<std::size_t>(t) * hidden;
        for (int j = 0; j < hidden; ++j) orow[j] = h[static_cast<std::size_t>(j)];
    }

    if (training) {
        auto xdata = x.data;
        auto whdata = wh.data;
        auto wxdata = wx.data;
        auto hseq = out.data;  // h_t for all frames
        int xn = x.node, wxn = wx.node, whn = wh.node, bn = b.node;
        out.node = tape->record(
            {xn, wxn, whn, bn}, out.shape,
            [=, xdata = std::move(xdata), whdata = std::move(whdata), wxdata = std::move(wxdata),
             hseq = std::move(hseq), s_i = std::move(s_i), s_f = std::move(s_f),
             s_g = std::move(s_g), s_o = std::move(s_o),
             s_c = std::move(s_c)](const std::vector<float>& up,
                                   std::vector<std::vector<float>>& grads) {
                std::vector<float> dh_next(static_cast<std::size_t>(hidden), 0.0f);
                std::vector<float> dc_next(static_cast<std::size_t>(hidden), 0.0f);
                std::vector<float> dz(static_cast<std::size_t>(gates));
                std::vector<float> dwx(wxdata.size(), 0.0f);
                std::vector<float> dwh(whdata.size(), 0.0f);
                std::vector<float> db(static_cast<std::size_t>(gates), 0.0f);
                std::vector<float> dx(xdata.size(), 0.0f);
                for (int t = T - 1; t >= 0; --t) {
                    const std::size_t base = static_cast<std::size_t>(t) * hidden;
                    const float* c_prev_ptr = (t > 0) ? s_c.data() + base - hidden : nullptr;
                    const float* h_prev_ptr = (t > 0) ? hseq.data() + base - hidden : nullptr;
                    for (int j = 0; j < hidden; ++j) {
                        const std::size_t idx = base + j;
                        const float dh = up[idx] + dh_next[static_cast<std::size_t>(j)];
                        const float tc = std::tanh(s_c[idx]);
                        const float o_g = s_o[idx];
                        const float dcv = dh * o_g * (1.0f - tc * tc) + dc_next[static_cast<std::size_t>(j)];
                        const float i_g = s_i[idx], f_g = s_f[idx], g_g = s_g[idx];
                        const float c_prev = c_prev_ptr ? c_prev_ptr[j] : 0.0f;
                        dz[static_cast<std::size_t>(j)] = dcv * g_g * i_g * (1.0f - i_g);
                        dz[static_cast<std::size_t>(hidden + j)] =
                            dcv * c_prev * f_g * (1.0f - f_g);
                        dz[static_cast<std::size_t>(2 * hidden + j)] =
                            dcv * i_g * (1.0f - g_g * g_g);
                        dz[static_cast<std::size_t>(3 * hidden + j)] = dh * tc * o_g * (1.0f - o_g);
                        dc_next[static_cast<std::size_t>(j)] = dcv * f_g;
                    }
                    // accumulate parameter grads and propagate to x, h_prev
                    const float* xrow = xdata.data() + static_cast<std::size_t>(t) * d;
                    for (int k = 0; k < d; ++k) {
                        const float xv = xrow[k];
                        float acc = 0.0f;
                        float* dwxrow = dwx.data() + static_cast<std::size_t>(k) * gates;
                        const float* wxrow = wxdata.data() + static_cast<std::size_t>(k) * gates;
                        for (int j = 0; j < gates; ++j) {
                            dwxrow[j] += xv * dz[static_cast<std::size_t>(j)];
                            acc += wxrow[j] * dz[static_cast<std::size_t>(j)];
                        }
                        dx[static_cast<std::size_t>(t) * d + k] = acc;
                    }
                    for (int j = 0; j < gates; ++j) db[static_cast<std::size_t>(j)] += dz[static_cast<std::size_t>(j)];
                    std::fill(dh_next.begin(), dh_next.end(), 0.0f);
                    for (int k = 0; k < hidden; ++k) {
                        const float hv = h_prev_ptr ? h_prev_ptr[k] : 0.0f;
                        float acc = 0.0f;
                        float* dwhrow = dwh.data() + static_cast<std::size_t>(k) * gates;
                        const float* whrow = whdata.data() + static_cast<std::size_t>(k) * gates;
                        for (int j = 0; j < gates; ++j) {
                            if (hv != 0.0f) dwhrow[j] += hv * dz[static_cast<std::size_t>(j)];
                            acc += whrow[j] * dz[static_cast<std::size_t>(j)];
                        }
                        dh_next[static_cast<std::size_t>(k)] = acc;
                    }
                }
                if (xn >= 0) {
                    auto& g = grad_buf(grads, xn, xdata.size());
                    for (std::size_t i = 0; i < dx.size(); ++i) g[i] += dx[i];
                }
                if (wxn >= 0) {
                    auto& g = grad_buf(grads, wxn, wxdata.size());
                    for (std::size_t i = 0; i < dwx.size(); ++i) g[i] += dwx[i];
                }
                if (whn >= 0) {
                    auto& g = grad_buf(grads, whn, whdata.size());
                    for (std::size_t i = 0; i < dwh.size(); ++i) g[i] += dwh[i];
                }
                if (bn >= 0) {
                    auto& g = grad_buf(grads, bn, static_cast<std::size_t>(gates));
                    for (std::size_t i = 0; i < db.size(); ++i) g[i] += db[i];
                }
            });
    }
    return out;
}

}  // namespace pvad::ad
