// Copyright 2026 The vicl Authors
// SPDX-License-Identifier: Apache-2.0

#include "vicl/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Core>

namespace vicl {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const RowMat>;
using Map = Eigen::Map<RowMat>;

void require(bool cond, const std::string& msg) {
    if (!cond) throw ShapeError(msg);
}

Node& parent(Node& self, std::size_t i) { return *self.parents[i]; }

// Gradient buffer of parent i, or nullptr when that parent needs none.
double* pgrad(Node& self, std::size_t i) {
    Node& p = *self.parents[i];
    return p.needs_grad ? p.grad_buffer().data() : nullptr;
}

} // namespace

namespace kernel {

void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n,
             bool accumulate) {
    MapC A(a, m, k);
    MapC B(b, k, n);
    Map C(c, m, n);
    if (accumulate) {
        C.noalias() += A * B;
    } else {
        C.noalias() = A * B;
    }
}

void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n,
             bool accumulate) {
    MapC A(a, m, k);
    MapC B(b, n, k);
    Map C(c, m, n);
    if (accumulate) {
        C.noalias() += A * B.transpose();
    } else {
        C.noalias() = A * B.transpose();
    }
}

void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n,
             bool accumulate) {
    MapC A(a, k, m);
    MapC B(b, k, n);
    Map C(c, m, n);
    if (accumulate) {
        C.noalias() += A.transpose() * B;
    } else {
        C.noalias() = A.transpose() * B;
    }
}

constexpr double kGeluC = 0.7978845608028654; // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

double gelu(double x) {
    double u = kGeluC * (x + kGeluA * x * x * x);
    return 0.5 * x * (1.0 + std::tanh(u));
}

double gelu_grad(double x) {
    double u = kGeluC * (x + kGeluA * x * x * x);
    double t = std::tanh(u);
    double du = kGeluC * (1.0 + 3.0 * kGeluA * x * x);
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
}

} // namespace kernel

Var matmul(const Var& a, const Var& b) {
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    require(b.rows() == k, "matmul: inner extents differ " + shape_str(a.shape()) + " * " + shape_str(b.shape()));
    Array out({m, n});
    kernel::gemm_nn(a.value().data(), b.value().data(), out.data(), m, k, n, false);
    return make_node(std::move(out), {a, b}, [m, k, n](Node& self) {
        const double* g = self.grad.data();
        if (double* ga = pgrad(self, 0)) kernel::gemm_nt(g, parent(self, 1).value.data(), ga, m, n, k, true);
        if (double* gb = pgrad(self, 1)) kernel::gemm_tn(parent(self, 0).value.data(), g, gb, k, m, n, true);
    }, "matmul");
}

Var matmul_nt(const Var& a, const Var& b) {
    const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
    require(b.cols() == k, "matmul_nt: inner extents differ " + shape_str(a.shape()) + " * " + shape_str(b.shape()) + "^T");
    Array out({m, n});
    kernel::gemm_nt(a.value().data(), b.value().data(), out.data(), m, k, n, false);
    return make_node(std::move(out), {a, b}, [m, k, n](Node& self) {
        const double* g = self.grad.data();
        if (double* ga = pgrad(self, 0)) kernel::gemm_nn(g, parent(self, 1).value.data(), ga, m, n, k, true);
        if (double* gb = pgrad(self, 1)) kernel::gemm_tn(g, parent(self, 0).value.data(), gb, n, m, k, true);
    }, "matmul_nt");
}

Var add(const Var& a, const Var& b) {
    require(a.shape() == b.shape(), "add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    Array out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
    return make_node(std::move(out), {a, b}, [](Node& self) {
        for (std::size_t p = 0; p < 2; ++p) {
            if (parent(self, p).needs_grad) parent(self, p).accumulate(self.grad);
        }
    }, "add");
}

Var sub(const Var& a, const Var& b) {
    require(a.shape() == b.shape(), "sub: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    Array out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
    return make_node(std::move(out), {a, b}, [](Node& self) {
        if (parent(self, 0).needs_grad) parent(self, 0).accumulate(self.grad);
        if (double* gb = pgrad(self, 1)) {
            for (std::size_t i = 0; i < self.grad.size(); ++i) gb[i] -= self.grad[i];
        }
    }, "sub");
}

Var mul(const Var& a, const Var& b) {
    require(a.shape() == b.shape(), "mul: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    Array out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
    return make_node(std::move(out), {a, b}, [](Node& self) {
        const Array& av = parent(self, 0).value;
        const Array& bv = parent(self, 1).value;
        if (double* ga = pgrad(self, 0)) {
            for (std::size_t i = 0; i < self.grad.size(); ++i) ga[i] += self.grad[i] * bv[i];
        }
        if (double* gb = pgrad(self, 1)) {
            for (std::size_t i = 0; i < self.grad.size(); ++i) gb[i] += self.grad[i] * av[i];
        }
    }, "mul");
}

Var scale(const Var& a, double factor) {
    Array out = a.value();
    for (auto& v : out.storage()) v *= factor;
    return make_node(std::move(out), {a}, [factor](Node& self) {
        double* ga = pgrad(self, 0);
        for (std::size_t i = 0; i < self.grad.size(); ++i) ga[i] += self.grad[i] * factor;
    }, "scale");
}

Var add_row(const Var& a, const Var& bias) {
    const std::size_t m = a.rows(), n = a.cols();
    require(bias.size() == n, "add_row: bias length " + std::to_string(bias.size()) + " vs " + std::to_string(n) + " columns");
    Array out = a.value();
    for (std::size_t r = 0; r < m; ++r) {
        for (std::size_t c = 0; c < n; ++c) out[r * n + c] += bias.value()[c];
    }
    return make_node(std::move(out), {a, bias}, [m, n](Node& self) {
        if (parent(self, 0).needs_grad) parent(self, 0).accumulate(self.grad);
        if (double* gb = pgrad(self, 1)) {
            for (std::size_t r = 0; r < m; ++r) {
                for (std::size_t c = 0; c < n; ++c) gb[c] += self.grad[r * n + c];
            }
        }
    }, "add_row");
}

Var linear(const Var& x, const Var& weight, const Var& bias) { return add_row(matmul(x, weight), bias); }

Var gelu(const Var& x) {
    Array out = x.value();
    for (auto& v : out.storage()) v = kernel::gelu(v);
    return make_node(std::move(out), {x}, [](Node& self) {
        const Array& xv = parent(self, 0).value;
        double* gx = pgrad(self, 0);
        for (std::size_t i = 0; i < xv.size(); ++i) gx[i] += self.grad[i] * kernel::gelu_grad(xv[i]);
    }, "gelu");
}

Var softmax(const Var& x, std::size_t axis) {
    const Shape& s = x.shape();
    require(axis < s.size(), "softmax: axis " + std::to_string(axis) + " out of range for " + shape_str(s));
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
    for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
    const std::size_t len = s[axis];
    Array out = x.value();
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t in = 0; in < inner; ++in) {
            const std::size_t base = o * len * inner + in;
            double mx = out[base];
            for (std::size_t j = 1; j < len; ++j) mx = std::max(mx, out[base + j * inner]);
            double z = 0.0;
            for (std::size_t j = 0; j < len; ++j) {
                double e = std::exp(out[base + j * inner] - mx);
                out[base + j * inner] = e;
                z += e;
            }
            for (std::size_t j = 0; j < len; ++j) out[base + j * inner] /= z;
        }
    }
    return make_node(std::move(out), {x}, [outer, inner, len](Node& self) {
        const Array& y = self.value;
        const Array& g = self.grad;
        double* gx = pgrad(self, 0);
        for (std::size_t o = 0; o < outer; ++o) {
            for (std::size_t in = 0; in < inner; ++in) {
                const std::size_t base = o * len * inner + in;
                double dot = 0.0;
                for (std::size_t j = 0; j < len; ++j) dot += g[base + j * inner] * y[base + j * inner];
                for (std::size_t j = 0; j < len; ++j) {
                    const std::size_t idx = base + j * inner;
                    gx[idx] += y[idx] * (g[idx] - dot);
                }
            }
        }
    }, "softmax");
}

Var softmax_rows(const Var& x) {
    if (x.shape().size() == 1) return softmax(x, 0);
    if (x.shape().size() == 2) return softmax(x, 1);
    return softmax(reshape(x, {x.rows(), x.cols()}), 1);
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
    const std::size_t m = x.rows(), n = x.cols();
    require(gamma.size() == n && beta.size() == n, "layer_norm: affine length mismatch");
    Array out(x.shape());
    std::vector<double> xhat(m * n), rstd(m);
    const Array& xv = x.value();
    for (std::size_t r = 0; r < m; ++r) {
        double mu = 0.0;
        for (std::size_t c = 0; c < n; ++c) mu += xv[r * n + c];
        mu /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t c = 0; c < n; ++c) {
            double d = xv[r * n + c] - mu;
            var += d * d;
        }
        var /= static_cast<double>(n);
        rstd[r] = 1.0 / std::sqrt(var + eps);
        for (std::size_t c = 0; c < n; ++c) {
            double h = (xv[r * n + c] - mu) * rstd[r];
            xhat[r * n + c] = h;
            out[r * n + c] = h * gamma.value()[c] + beta.value()[c];
        }
    }
    return make_node(std::move(out), {x, gamma, beta},
                     [m, n, xhat = std::move(xhat), rstd = std::move(rstd)](Node& self) {
        const Array& g = self.grad;
        const Array& gam = parent(self, 1).value;
        double* gx = pgrad(self, 0);
        double* gg = pgrad(self, 1);
        double* gbeta = pgrad(self, 2);
        std::vector<double> dxhat(n);
        for (std::size_t r = 0; r < m; ++r) {
            double mean_d = 0.0, mean_dx = 0.0;
            for (std::size_t c = 0; c < n; ++c) {
                const std::size_t i = r * n + c;
                if (gg) gg[c] += g[i] * xhat[i];
                if (gbeta) gbeta[c] += g[i];
                dxhat[c] = g[i] * gam[c];
                mean_d += dxhat[c];
                mean_dx += dxhat[c] * xhat[i];
            }
            if (!gx) continue;
            mean_d /= static_cast<double>(n);
            mean_dx /= static_cast<double>(n);
            for (std::size_t c = 0; c < n; ++c) {
                const std::size_t i = r * n + c;
                gx[i] += rstd[r] * (dxhat[c] - mean_d - xhat[i] * mean_dx);
            }
        }
    }, "layer_norm");
}

Var cross_entropy(const Var& logits, std::span<const int> targets) {
    const std::size_t t = logits.rows(), v = logits.cols();
    require(t >= 1 && targets.size() == t, "cross_entropy: need one target per row");
    const Array& lv = logits.value();
    Array probs(Shape{t, v});
    double total = 0.0;
    for (std::size_t r = 0; r < t; ++r) {
        if (targets[r] < 0 || static_cast<std::size_t>(targets[r]) >= v) {
            throw ShapeError("cross_entropy: target index " + std::to_string(targets[r]) + " out of range for V=" +
                             std::to_string(v));
        }
        const double* row = lv.data() + r * v;
        double mx = *std::max_element(row, row + v);
        double z = 0.0;
        for (std::size_t c = 0; c < v; ++c) {
            double e = std::exp(row[c] - mx);
            probs[r * v + c] = e;
            z += e;
        }
        for (std::size_t c = 0; c < v; ++c) probs[r * v + c] /= z;
        total += (mx + std::log(z)) - row[targets[r]];
    }
    std::vector<int> tg(targets.begin(), targets.end());
    return make_node(Array::scalar(total / static_cast<double>(t)), {logits},
                     [t, v, probs = std::move(probs), tg = std::move(tg)](Node& self) {
        const double g = self.grad[0] / static_cast<double>(t);
        double* gl = pgrad(self, 0);
        for (std::size_t r = 0; r < t; ++r) {
            for (std::size_t c = 0; c < v; ++c) gl[r * v + c] += g * probs[r * v + c];
            gl[r * v + static_cast<std::size_t>(tg[r])] -= g;
        }
    }, "cross_entropy");
}

Var sum(const Var& x) {
    double s = 0.0;
    for (double v : x.value().values()) s += v;
    return make_node(Array::scalar(s), {x}, [](Node& self) {
        double* gx = pgrad(self, 0);
        const double g = self.grad[0];
        for (std::size_t i = 0, n = parent(self, 0).value.size(); i < n; ++i) gx[i] += g;
    }, "sum");
}

Var mean(const Var& x) { return scale(sum(x), 1.0 / static_cast<double>(x.size())); }

Var mean_rows(const Var& x) {
    const std::size_t m = x.rows(), n = x.cols();
    Array out({n}, 0.0);
    for (std::size_t r = 0; r < m; ++r) {
        for (std::size_t c = 0; c < n; ++c) out[c] += x.value()[r * n + c];
    }
    for (auto& v : out.storage()) v /= static_cast<double>(m);
    return make_node(std::move(out), {x}, [m, n](Node& self) {
        double* gx = pgrad(self, 0);
        const double inv = 1.0 / static_cast<double>(m);
        for (std::size_t r = 0; r < m; ++r) {
            for (std::size_t c = 0; c < n; ++c) gx[r * n + c] += self.grad[c] * inv;
        }
    }, "mean_rows");
}

Var squared_distance(const Var& a, const Var& b) {
    require(a.size() == b.size(), "squared_distance: length mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double d = a.value()[i] - b.value()[i];
        s += d * d;
    }
    return make_node(Array::scalar(s), {a, b}, [](Node& self) {
        const Array& av = parent(self, 0).value;
        const Array& bv = parent(self, 1).value;
        const double g = self.grad[0];
        double* ga = pgrad(self, 0);
        double* gb = pgrad(self, 1);
        for (std::size_t i = 0; i < av.size(); ++i) {
            double d = 2.0 * g * (av[i] - bv[i]);
            if (ga) ga[i] += d;
            if (gb) gb[i] -= d;
        }
    }, "squared_distance");
}

Var reshape(const Var& x, Shape shape) {
    Array out = x.value().reshaped(std::move(shape));
    return make_node(std::move(out), {x}, [](Node& self) {
        double* gx = pgrad(self, 0);
        for (std::size_t i = 0; i < self.grad.size(); ++i) gx[i] += self.grad[i];
    }, "reshape");
}

Var slice_rows(const Var& x, std::size_t begin, std::size_t end) {
    const std::size_t m = x.rows(), n = x.cols();
    require(begin < end && end <= m, "slice_rows: bad range");
    Array out(Shape{end - begin, n});
    std::copy(x.value().data() + begin * n, x.value().data() + end * n, out.data());
    return make_node(std::move(out), {x}, [begin, n](Node& self) {
        double* gx = pgrad(self, 0) + begin * n;
        for (std::size_t i = 0; i < self.grad.size(); ++i) gx[i] += self.grad[i];
    }, "slice_rows");
}

Var slice_cols(const Var& x, std::size_t begin, std::size_t end) {
    const std::size_t m = x.rows(), n = x.cols();
    require(begin < end && end <= n, "slice_cols: bad range");
    const std::size_t w = end - begin;
    Array out(Shape{m, w});
    for (std::size_t r = 0; r < m; ++r) {
        std::copy(x.value().data() + r * n + begin, x.value().data() + r * n + end, out.data() + r * w);
    }
    return make_node(std::move(out), {x}, [m, n, w, begin](Node& self) {
        double* gx = pgrad(self, 0);
        for (std::size_t r = 0; r < m; ++r) {
            for (std::size_t c = 0; c < w; ++c) gx[r * n + begin + c] += self.grad[r * w + c];
        }
    }, "slice_cols");
}

Var concat_cols(const std::vector<Var>& parts) {
    require(!parts.empty(), "concat_cols: no parts");
    const std::size_t m = parts[0].rows();
    std::vector<std::size_t> offsets;
    std::size_t n = 0;
    for (const auto& p : parts) {
        require(p.rows() == m, "concat_cols: row count mismatch");
        offsets.push_back(n);
        n += p.cols();
    }
    Array out(Shape{m, n});
    for (std::size_t k = 0; k < parts.size(); ++k) {
        const std::size_t w = parts[k].cols();
        for (std::size_t r = 0; r < m; ++r) {
            std::copy(parts[k].value().data() + r * w, parts[k].value().data() + (r + 1) * w,
                      out.data() + r * n + offsets[k]);
        }
    }
    return make_node(std::move(out), parts, [m, n, offsets = std::move(offsets)](Node& self) {
        for (std::size_t k = 0; k < self.parents.size(); ++k) {
            double* gp = pgrad(self, k);
            if (!gp) continue;
            const std::size_t w = parent(self, k).value.cols();
            for (std::size_t r = 0; r < m; ++r) {
                for (std::size_t c = 0; c < w; ++c) gp[r * w + c] += self.grad[r * n + offsets[k] + c];
            }
        }
    }, "concat_cols");
}

Var concat_rows(const std::vector<Var>& parts) {
    require(!parts.empty(), "concat_rows: no parts");
    std::vector<std::vector<std::size_t>> positions;
    std::size_t total = 0;
    for (const auto& p : parts) {
        std::vector<std::size_t> pos(p.rows());
        for (auto& q : pos) q = total++;
        positions.push_back(std::move(pos));
    }
    return assemble_rows(parts, positions, total);
}

Var assemble_rows(const std::vector<Var>& parts, const std::vector<std::vector<std::size_t>>& positions,
                  std::size_t total_rows) {
    require(!parts.empty() && parts.size() == positions.size(), "assemble_rows: parts/positions mismatch");
    const std::size_t n = parts[0].cols();
    Array out(Shape{total_rows, n});
    std::vector<char> filled(total_rows, 0);
    for (std::size_t k = 0; k < parts.size(); ++k) {
        require(parts[k].cols() == n && parts[k].rows() == positions[k].size(), "assemble_rows: part shape mismatch");
        for (std::size_t r = 0; r < positions[k].size(); ++r) {
            const std::size_t dst = positions[k][r];
            require(dst < total_rows && !filled[dst], "assemble_rows: positions must be a partition");
            filled[dst] = 1;
            std::copy(parts[k].value().data() + r * n, parts[k].value().data() + (r + 1) * n, out.data() + dst * n);
        }
    }
    for (char f : filled) require(f, "assemble_rows: positions must cover every row");
    return make_node(std::move(out), parts, [n, positions](Node& self) {
        for (std::size_t k = 0; k < self.parents.size(); ++k) {
            double* gp = pgrad(self, k);
            if (!gp) continue;
            for (std::size_t r = 0; r < positions[k].size(); ++r) {
                const double* src = self.grad.data() + positions[k][r] * n;
                for (std::size_t c = 0; c < n; ++c) gp[r * n + c] += src[c];
            }
        }
    }, "assemble_rows");
}

Var block_sum_cols(const Var& x, std::size_t block) {
    const std::size_t m = x.rows(), n = x.cols();
    require(block > 0 && n % block == 0, "block_sum_cols: width not divisible by block");
    const std::size_t k = n / block;
    Array out(Shape{m, k}, 0.0);
    for (std::size_t r = 0; r < m; ++r) {
        for (std::size_t c = 0; c < n; ++c) out[r * k + c / block] += x.value()[r * n + c];
    }
    return make_node(std::move(out), {x}, [m, n, k, block](Node& self) {
        double* gx = pgrad(self, 0);
        for (std::size_t r = 0; r < m; ++r) {
            for (std::size_t c = 0; c < n; ++c) gx[r * n + c] += self.grad[r * k + c / block];
        }
    }, "block_sum_cols");
}

Var weighted_sum(const Var& weights, const std::vector<Var>& parts) {
    require(!parts.empty() && weights.size() == parts.size(), "weighted_sum: need one weight per part");
    const Shape& s = parts[0].shape();
    Array out(s, 0.0);
    for (std::size_t k = 0; k < parts.size(); ++k) {
        require(parts[k].shape() == s, "weighted_sum: part shape mismatch");
        const double w = weights.value()[k];
        const Array& pv = parts[k].value();
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += w * pv[i];
    }
    std::vector<Var> all;
    all.reserve(parts.size() + 1);
    all.push_back(weights);
    all.insert(all.end(), parts.begin(), parts.end());
    return make_node(std::move(out), all, [](Node& self) {
        const Array& w = parent(self, 0).value;
        double* gw = pgrad(self, 0);
        const Array& g = self.grad;
        for (std::size_t k = 0; k < w.size(); ++k) {
            const Array& pv = parent(self, k + 1).value;
            if (gw) {
                double d = 0.0;
                for (std::size_t i = 0; i < g.size(); ++i) d += g[i] * pv[i];
                gw[k] += d;
            }
            if (double* gp = pgrad(self, k + 1)) {
                for (std::size_t i = 0; i < g.size(); ++i) gp[i] += g[i] * w[k];
            }
        }
    }, "weighted_sum");
}

Var detach(const Var& x) { return constant(x.value()); }

} // namespace vicl
