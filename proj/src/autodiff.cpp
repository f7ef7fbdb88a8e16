#include "pmnc/autodiff.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace pmnc::ad {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Mat = Eigen::MatrixXd;

namespace {

Var make(Tensor value, std::vector<NodePtr> parents, std::function<void(Node&)> fn) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    for (const auto& p : parents)
        if (p && p->requires_grad) n->requires_grad = true;
    if (n->requires_grad) {
        n->parents = std::move(parents);
        n->backward_fn = std::move(fn);
    }
    return Var(std::move(n));
}

template <typename F, typename DF>
Var unary(const Var& a, F fwd, DF dydx) {
    Tensor out(a.value().shape);
    const auto& x = a.value().data;
    for (std::size_t i = 0; i < x.size(); ++i) out.data[i] = fwd(x[i]);
    NodePtr pa = a.node();
    return make(std::move(out), {pa}, [pa, dydx](Node& n) {
        auto& g = pa->ensure_grad().data;
        const auto& x = pa->value.data;
        for (std::size_t i = 0; i < x.size(); ++i)
            g[i] += n.grad.data[i] * dydx(x[i], n.value.data[i]);
    });
}

void require_4d(const Var& v, const char* what) {
    if (v.value().ndim() != 4)
        throw std::invalid_argument(std::string(what) + ": expected 4D NCHW tensor, got " +
                                    v.value().shape_str());
}

} // namespace

void Var::backward() const {
    if (!node_) throw std::logic_error("backward on empty Var");
    if (node_->value.size() != 1)
        throw std::logic_error("backward requires a scalar root, got " + node_->value.shape_str());
    if (!node_->requires_grad) return;

    // Post-order DFS over the grad-requiring subgraph.
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
    while (!stack.empty()) {
        auto& [cur, idx] = stack.back();
        if (idx == 0 && visited.count(cur)) {
            stack.pop_back();
            continue;
        }
        if (idx < cur->parents.size()) {
            Node* p = cur->parents[idx].get();
            ++idx;
            if (p->requires_grad && !visited.count(p)) stack.push_back({p, 0});
        } else {
            visited.insert(cur);
            order.push_back(cur);
            stack.pop_back();
        }
    }

    node_->ensure_grad().data[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        n->ensure_grad();
        if (n->backward_fn) n->backward_fn(*n);
    }
}

// ---------------------------------------------------------------- elementwise

Var add(const Var& a, const Var& b) {
    check_same_shape(a.value(), b.value(), "add");
    Tensor out(a.value().shape);
    for (std::size_t i = 0; i < out.size(); ++i)
        out.data[i] = a.value().data[i] + b.value().data[i];
    NodePtr pa = a.node(), pb = b.node();
    return make(std::move(out), {pa, pb}, [pa, pb](Node& n) {
        if (pa->requires_grad) {
            auto& g = pa->ensure_grad().data;
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad.data[i];
        }
        if (pb->requires_grad) {
            auto& g = pb->ensure_grad().data;
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad.data[i];
        }
    });
}

Var sub(const Var& a, const Var& b) {
    check_same_shape(a.value(), b.value(), "sub");
    Tensor out(a.value().shape);
    for (std::size_t i = 0; i < out.size(); ++i)
        out.data[i] = a.value().data[i] - b.value().data[i];
    NodePtr pa = a.node(), pb = b.node();
    return make(std::move(out), {pa, pb}, [pa, pb](Node& n) {
        if (pa->requires_grad) {
            auto& g = pa->ensure_grad().data;
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad.data[i];
        }
        if (pb->requires_grad) {
            auto& g = pb->ensure_grad().data;
            for (std::size_t i = 0; i < g.size(); ++i) g[i] -= n.grad.data[i];
        }
    });
}

Var mul(const Var& a, const Var& b) {
    check_same_shape(a.value(), b.value(), "mul");
    Tensor out(a.value().shape);
    for (std::size_t i = 0; i < out.size(); ++i)
        out.data[i] = a.value().data[i] * b.value().data[i];
    NodePtr pa = a.node(), pb = b.node();
    return make(std::move(out), {pa, pb}, [pa, pb](Node& n) {
        if (pa->requires_grad) {
            auto& g = pa->ensure_grad().data;
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad.data[i] * pb->value.data[i];
        }
        if (pb->requires_grad) {
            auto& g = pb->ensure_grad().data;
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad.data[i] * pa->value.data[i];
        }
    });
}

Var div(const Var& a, const Var& b) {
    check_same_shape(a.value(), b.value(), "div");
    Tensor out(a.value().shape);
    for (std::size_t i = 0; i < out.size(); ++i)
        out.data[i] = a.value().data[i] / b.value().data[i];
    NodePtr pa = a.node(), pb = b.node();
    return make(std::move(out), {pa, pb}, [pa, pb](Node& n) {
        if (pa->requires_grad) {
            auto& g = pa->ensure_grad().data;
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad.data[i] / pb->value.data[i];
        }
        if (pb->requires_grad) {
            auto& g = pb->ensure_grad().data;
            for (std::size_t i = 0; i < g.size(); ++i)
                g[i] -= n.grad.data[i] * n.value.data[i] / pb->value.data[i];
        }
    });
}

Var add_const(const Var& a, double c) {
    return unary(a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

Var mul_const(const Var& a, double c) {
    return unary(a, [c](double x) { return x * c; }, [c](double, double) { return c; });
}

Var sigmoid(const Var& a) {
    return unary(a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
                 [](double, double y) { return y * (1.0 - y); });
}

Var tanh_(const Var& a) {
    return unary(a, [](double x) { return std::tanh(x); },
                 [](double, double y) { return 1.0 - y * y; });
}

Var relu(const Var& a) {
    return unary(a, [](double x) { return x > 0.0 ? x : 0.0; },
                 [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var abs_(const Var& a) {
    return unary(a, [](double x) { return std::fabs(x); },
                 [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Var square(const Var& a) {
    return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var sqrt_(const Var& a) {
    return unary(a, [](double x) { return std::sqrt(std::max(x, 0.0)); },
                 [](double, double y) { return 0.5 / std::max(y, 1e-15); });
}

Var huber_elem(const Var& a, double delta) {
    return unary(
        a,
        [delta](double x) {
            double ax = std::fabs(x);
            return ax <= delta ? 0.5 * x * x : delta * (ax - 0.5 * delta);
        },
        [delta](double x, double) {
            if (std::fabs(x) <= delta) return x;
            return x > 0.0 ? delta : -delta;
        });
}

// ---------------------------------------------------------------- reductions

Var sum_all(const Var& a) {
    double s = 0.0;
    for (double v : a.value().data) s += v;
    NodePtr pa = a.node();
    return make(Tensor::scalar(s), {pa}, [pa](Node& n) {
        auto& g = pa->ensure_grad().data;
        double gs = n.grad.data[0];
        for (auto& v : g) v += gs;
    });
}

Var mean_all(const Var& a) {
    double inv = 1.0 / static_cast<double>(a.value().size());
    double s = 0.0;
    for (double v : a.value().data) s += v;
    NodePtr pa = a.node();
    return make(Tensor::scalar(s * inv), {pa}, [pa, inv](Node& n) {
        auto& g = pa->ensure_grad().data;
        double gs = n.grad.data[0] * inv;
        for (auto& v : g) v += gs;
    });
}

Var vsum(const std::vector<Var>& vs) {
    if (vs.empty()) throw std::invalid_argument("vsum: empty list");
    Var acc = vs[0];
    for (std::size_t i = 1; i < vs.size(); ++i) acc = add(acc, vs[i]);
    return acc;
}

// ---------------------------------------------------------------- structure

Var concat_channels(const Var& a, const Var& b) {
    require_4d(a, "concat_channels");
    require_4d(b, "concat_channels");
    const auto& sa = a.value().shape;
    const auto& sb = b.value().shape;
    if (sa[0] != sb[0] || sa[2] != sb[2] || sa[3] != sb[3])
        throw std::invalid_argument("concat_channels: incompatible shapes " +
                                    a.value().shape_str() + " vs " + b.value().shape_str());
    int N = sa[0], Ca = sa[1], Cb = sb[1], H = sa[2], W = sa[3];
    std::size_t plane = static_cast<std::size_t>(H) * W;
    Tensor out({N, Ca + Cb, H, W});
    for (int n = 0; n < N; ++n) {
        std::copy_n(a.value().ptr() + static_cast<std::size_t>(n) * Ca * plane, Ca * plane,
                    out.ptr() + static_cast<std::size_t>(n) * (Ca + Cb) * plane);
        std::copy_n(b.value().ptr() + static_cast<std::size_t>(n) * Cb * plane, Cb * plane,
                    out.ptr() + (static_cast<std::size_t>(n) * (Ca + Cb) + Ca) * plane);
    }
    NodePtr pa = a.node(), pb = b.node();
    return make(std::move(out), {pa, pb}, [pa, pb, N, Ca, Cb, plane](Node& n) {
        for (int i = 0; i < N; ++i) {
            const double* g = n.grad.ptr() + static_cast<std::size_t>(i) * (Ca + Cb) * plane;
            if (pa->requires_grad) {
                double* ga = pa->ensure_grad().ptr() + static_cast<std::size_t>(i) * Ca * plane;
                for (std::size_t k = 0; k < Ca * plane; ++k) ga[k] += g[k];
            }
            if (pb->requires_grad) {
                double* gb = pb->ensure_grad().ptr() + static_cast<std::size_t>(i) * Cb * plane;
                for (std::size_t k = 0; k < Cb * plane; ++k) gb[k] += g[Ca * plane + k];
            }
        }
    });
}

Var slice_channels(const Var& a, int c0, int c1) {
    require_4d(a, "slice_channels");
    const auto& s = a.value().shape;
    if (c0 < 0 || c1 > s[1] || c0 >= c1)
        throw std::invalid_argument("slice_channels: bad range");
    int N = s[0], C = s[1], H = s[2], W = s[3], Cs = c1 - c0;
    std::size_t plane = static_cast<std::size_t>(H) * W;
    Tensor out({N, Cs, H, W});
    for (int n = 0; n < N; ++n)
        std::copy_n(a.value().ptr() + (static_cast<std::size_t>(n) * C + c0) * plane, Cs * plane,
                    out.ptr() + static_cast<std::size_t>(n) * Cs * plane);
    NodePtr pa = a.node();
    return make(std::move(out), {pa}, [pa, N, C, c0, Cs, plane](Node& n) {
        for (int i = 0; i < N; ++i) {
            double* g = pa->ensure_grad().ptr() + (static_cast<std::size_t>(i) * C + c0) * plane;
            const double* go = n.grad.ptr() + static_cast<std::size_t>(i) * Cs * plane;
            for (std::size_t k = 0; k < Cs * plane; ++k) g[k] += go[k];
        }
    });
}

Var slice_batch(const Var& a, int idx) {
    require_4d(a, "slice_batch");
    const auto& s = a.value().shape;
    if (idx < 0 || idx >= s[0]) throw std::invalid_argument("slice_batch: index out of range");
    int C = s[1], H = s[2], W = s[3];
    std::size_t item = static_cast<std::size_t>(C) * H * W;
    Tensor out({1, C, H, W});
    std::copy_n(a.value().ptr() + idx * item, item, out.ptr());
    NodePtr pa = a.node();
    return make(std::move(out), {pa}, [pa, idx, item](Node& n) {
        double* g = pa->ensure_grad().ptr() + idx * item;
        for (std::size_t k = 0; k < item; ++k) g[k] += n.grad.data[k];
    });
}

Var crop_center(const Var& a, int out_h, int out_w) {
    require_4d(a, "crop_center");
    const auto& s = a.value().shape;
    int N = s[0], C = s[1], H = s[2], W = s[3];
    if (out_h > H || out_w > W || (H - out_h) % 2 || (W - out_w) % 2)
        throw std::invalid_argument("crop_center: incompatible sizes");
    int oy = (H - out_h) / 2, ox = (W - out_w) / 2;
    Tensor out({N, C, out_h, out_w});
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c)
            for (int y = 0; y < out_h; ++y)
                std::copy_n(&a.value().at4(n, c, y + oy, ox), out_w, &out.at4(n, c, y, 0));
    NodePtr pa = a.node();
    return make(std::move(out), {pa}, [pa, N, C, out_h, out_w, oy, ox](Node& n) {
        Tensor& g = pa->ensure_grad();
        for (int i = 0; i < N; ++i)
            for (int c = 0; c < C; ++c)
                for (int y = 0; y < out_h; ++y) {
                    double* gp = &g.at4(i, c, y + oy, ox);
                    const double* go = &n.grad.at4(i, c, y, 0);
                    for (int x = 0; x < out_w; ++x) gp[x] += go[x];
                }
    });
}

namespace {
inline int reflect_index(int t, int n) {
    if (t < 0) return -t;
    if (t >= n) return 2 * n - 2 - t;
    return t;
}
} // namespace

Var pad_reflect(const Var& a, int p) {
    require_4d(a, "pad_reflect");
    const auto& s = a.value().shape;
    int N = s[0], C = s[1], H = s[2], W = s[3];
    if (p >= H || p >= W)
        throw std::invalid_argument("pad_reflect: pad must be smaller than spatial size");
    int Ho = H + 2 * p, Wo = W + 2 * p;
    Tensor out({N, C, Ho, Wo});
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c)
            for (int y = 0; y < Ho; ++y) {
                int sy = reflect_index(y - p, H);
                for (int x = 0; x < Wo; ++x)
                    out.at4(n, c, y, x) = a.value().at4(n, c, sy, reflect_index(x - p, W));
            }
    NodePtr pa = a.node();
    return make(std::move(out), {pa}, [pa, N, C, H, W, p](Node& n) {
        Tensor& g = pa->ensure_grad();
        int Ho = H + 2 * p, Wo = W + 2 * p;
        for (int i = 0; i < N; ++i)
            for (int c = 0; c < C; ++c)
                for (int y = 0; y < Ho; ++y) {
                    int sy = reflect_index(y - p, H);
                    for (int x = 0; x < Wo; ++x)
                        g.at4(i, c, sy, reflect_index(x - p, W)) += n.grad.at4(i, c, y, x);
                }
    });
}

Var upsample_bilinear2(const Var& a) {
    require_4d(a, "upsample_bilinear2");
    const auto& s = a.value().shape;
    int N = s[0], C = s[1], H = s[2], W = s[3];
    int Ho = 2 * H, Wo = 2 * W;
    // align_corners=false source mapping, clamped at the borders
    auto coords = [](int o, int n, int& i0, int& i1, double& w1) {
        double f = (o + 0.5) * 0.5 - 0.5;
        if (f < 0.0) f = 0.0;
        i0 = std::min(static_cast<int>(f), n - 1);
        i1 = std::min(i0 + 1, n - 1);
        w1 = f - static_cast<double>(i0);
    };
    Tensor out({N, C, Ho, Wo});
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c)
            for (int y = 0; y < Ho; ++y) {
                int y0, y1;
                double wy1;
                coords(y, H, y0, y1, wy1);
                for (int x = 0; x < Wo; ++x) {
                    int x0, x1;
                    double wx1;
                    coords(x, W, x0, x1, wx1);
                    const Tensor& v = a.value();
                    out.at4(n, c, y, x) =
                        v.at4(n, c, y0, x0) * (1 - wy1) * (1 - wx1) +
                        v.at4(n, c, y0, x1) * (1 - wy1) * wx1 +
                        v.at4(n, c, y1, x0) * wy1 * (1 - wx1) +
                        v.at4(n, c, y1, x1) * wy1 * wx1;
                }
            }
    NodePtr pa = a.node();
    return make(std::move(out), {pa}, [pa, N, C, H, W, coords](Node& n) {
        Tensor& g = pa->ensure_grad();
        int Ho = 2 * H, Wo = 2 * W;
        for (int i = 0; i < N; ++i)
            for (int c = 0; c < C; ++c)
                for (int y = 0; y < Ho; ++y) {
                    int y0, y1;
                    double wy1;
                    coords(y, H, y0, y1, wy1);
                    for (int x = 0; x < Wo; ++x) {
                        int x0, x1;
                        double wx1;
                        coords(x, W, x0, x1, wx1);
                        double go = n.grad.at4(i, c, y, x);
                        g.at4(i, c, y0, x0) += go * (1 - wy1) * (1 - wx1);
                        g.at4(i, c, y0, x1) += go * (1 - wy1) * wx1;
                        g.at4(i, c, y1, x0) += go * wy1 * (1 - wx1);
                        g.at4(i, c, y1, x1) += go * wy1 * wx1;
                    }
                }
    });
}

Var maxpool2(const Var& a) {
    require_4d(a, "maxpool2");
    const auto& s = a.value().shape;
    int N = s[0], C = s[1], H = s[2], W = s[3];
    if (H % 2 || W % 2) throw std::invalid_argument("maxpool2: spatial size must be even");
    int Ho = H / 2, Wo = W / 2;
    Tensor out({N, C, Ho, Wo});
    auto argmax = std::make_shared<std::vector<std::size_t>>(out.size());
    std::size_t oi = 0;
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c)
            for (int y = 0; y < Ho; ++y)
                for (int x = 0; x < Wo; ++x, ++oi) {
                    double best = -1e300;
                    std::size_t bi = 0;
                    for (int dy = 0; dy < 2; ++dy)
                        for (int dx = 0; dx < 2; ++dx) {
                            std::size_t idx =
                                ((static_cast<std::size_t>(n) * C + c) * H + 2 * y + dy) * W +
                                2 * x + dx;
                            double v = a.value().data[idx];
                            if (v > best) {
                                best = v;
                                bi = idx;
                            }
                        }
                    out.data[oi] = best;
                    (*argmax)[oi] = bi;
                }
    NodePtr pa = a.node();
    return make(std::move(out), {pa}, [pa, argmax](Node& n) {
        auto& g = pa->ensure_grad().data;
        for (std::size_t i = 0; i < argmax->size(); ++i) g[(*argmax)[i]] += n.grad.data[i];
    });
}

// ---------------------------------------------------------------- convolution

Var conv2d(const Var& x, const Var& w, const Var& b, int pad) {
    require_4d(x, "conv2d input");
    require_4d(w, "conv2d weight");
    const auto& xs = x.value().shape;
    const auto& ws = w.value().shape;
    int N = xs[0], Ci = xs[1], H = xs[2], W = xs[3];
    int Co = ws[0], k = ws[2];
    if (ws[1] != Ci || ws[2] != ws[3])
        throw std::invalid_argument("conv2d: weight shape " + w.value().shape_str() +
                                    " incompatible with input " + x.value().shape_str());
    if (b.valid() && (b.value().ndim() != 1 || b.value().dim(0) != Co))
        throw std::invalid_argument("conv2d: bias shape mismatch");
    int Ho = H + 2 * pad - k + 1, Wo = W + 2 * pad - k + 1;
    if (Ho <= 0 || Wo <= 0) throw std::invalid_argument("conv2d: empty output");

    const int rows = Ci * k * k;
    // Bound the im2col buffer to ~64 MB.
    int block_h = std::max(1, static_cast<int>(8'000'000 / (static_cast<std::size_t>(rows) *
                                                            std::max(1, Wo))));
    block_h = std::min(block_h, Ho);

    auto fill_col = [Ci, k, pad, H, W, Wo](const Tensor& src, int n, int y0, int bh, Mat& col) {
        for (int ci = 0; ci < Ci; ++ci)
            for (int ky = 0; ky < k; ++ky)
                for (int kx = 0; kx < k; ++kx) {
                    int r = (ci * k + ky) * k + kx;
                    for (int yy = 0; yy < bh; ++yy) {
                        int iy = y0 + yy + ky - pad;
                        if (iy < 0 || iy >= H) {
                            for (int xx = 0; xx < Wo; ++xx) col(r, yy * Wo + xx) = 0.0;
                            continue;
                        }
                        const double* row = &src.at4(n, ci, iy, 0);
                        for (int xx = 0; xx < Wo; ++xx) {
                            int ix = xx + kx - pad;
                            col(r, yy * Wo + xx) = (ix < 0 || ix >= W) ? 0.0 : row[ix];
                        }
                    }
                }
    };

    Eigen::Map<const RowMat> wmat(w.value().ptr(), Co, rows);
    Tensor out({N, Co, Ho, Wo});
    {
        Mat col(rows, static_cast<Eigen::Index>(block_h) * Wo);
        for (int n = 0; n < N; ++n)
            for (int y0 = 0; y0 < Ho; y0 += block_h) {
                int bh = std::min(block_h, Ho - y0);
                auto colb = col.leftCols(static_cast<Eigen::Index>(bh) * Wo);
                fill_col(x.value(), n, y0, bh, col);
                Mat ob = wmat * colb; // Co x (bh*Wo)
                for (int co = 0; co < Co; ++co) {
                    double* dst = &out.at4(n, co, y0, 0);
                    for (Eigen::Index j = 0; j < ob.cols(); ++j) dst[j] = ob(co, j);
                }
            }
    }
    if (b.valid()) {
        const auto& bias = b.value().data;
        for (int n = 0; n < N; ++n)
            for (int co = 0; co < Co; ++co) {
                double* dst = &out.at4(n, co, 0, 0);
                for (int j = 0; j < Ho * Wo; ++j) dst[j] += bias[co];
            }
    }

    NodePtr px = x.node(), pw = w.node(), pb = b.valid() ? b.node() : nullptr;
    std::vector<NodePtr> parents{px, pw};
    if (pb) parents.push_back(pb);
    return make(
        std::move(out), std::move(parents),
        [px, pw, pb, N, Ci, H, W, Co, k, pad, Ho, Wo, rows, block_h, fill_col](Node& nd) {
            Eigen::Map<const RowMat> wmat(pw->value.ptr(), Co, rows);
            Mat col(rows, static_cast<Eigen::Index>(block_h) * Wo);
            Mat gb(Co, static_cast<Eigen::Index>(block_h) * Wo);
            for (int n = 0; n < N; ++n)
                for (int y0 = 0; y0 < Ho; y0 += block_h) {
                    int bh = std::min(block_h, Ho - y0);
                    Eigen::Index np = static_cast<Eigen::Index>(bh) * Wo;
                    for (int co = 0; co < Co; ++co) {
                        const double* src = &nd.grad.at4(n, co, y0, 0);
                        for (Eigen::Index j = 0; j < np; ++j) gb(co, j) = src[j];
                    }
                    auto gblock = gb.leftCols(np);
                    if (pw->requires_grad || px->requires_grad)
                        fill_col(px->value, n, y0, bh, col);
                    if (pw->requires_grad) {
                        Eigen::Map<RowMat> dw(pw->ensure_grad().ptr(), Co, rows);
                        dw.noalias() += gblock * col.leftCols(np).transpose();
                    }
                    if (px->requires_grad) {
                        Mat colg = wmat.transpose() * gblock; // rows x np
                        Tensor& gx = px->ensure_grad();
                        for (int ci = 0; ci < Ci; ++ci)
                            for (int ky = 0; ky < k; ++ky)
                                for (int kx = 0; kx < k; ++kx) {
                                    int r = (ci * k + ky) * k + kx;
                                    for (int yy = 0; yy < bh; ++yy) {
                                        int iy = y0 + yy + ky - pad;
                                        if (iy < 0 || iy >= H) continue;
                                        double* row = &gx.at4(n, ci, iy, 0);
                                        for (int xx = 0; xx < Wo; ++xx) {
                                            int ix = xx + kx - pad;
                                            if (ix >= 0 && ix < W)
                                                row[ix] += colg(r, yy * Wo + xx);
                                        }
                                    }
                                }
                    }
                }
            if (pb && pb->requires_grad) {
                auto& gbias = pb->ensure_grad().data;
                for (int n = 0; n < N; ++n)
                    for (int co = 0; co < Co; ++co) {
                        const double* src = &nd.grad.at4(n, co, 0, 0);
                        double s = 0.0;
                        for (int j = 0; j < Ho * Wo; ++j) s += src[j];
                        gbias[co] += s;
                    }
            }
        });
}

// ---------------------------------------------------------------- gaussian blur

Var gauss_blur_valid(const Var& x, const std::vector<double>& kernel1d) {
    require_4d(x, "gauss_blur_valid");
    const auto& s = x.value().shape;
    int N = s[0], C = s[1], H = s[2], W = s[3];
    int k = static_cast<int>(kernel1d.size());
    if (k < 1 || H < k || W < k)
        throw std::invalid_argument("gauss_blur_valid: kernel larger than field");
    int Ho = H - k + 1, Wo = W - k + 1;
    // horizontal then vertical valid pass
    Tensor tmp({N, C, H, Wo});
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c)
            for (int y = 0; y < H; ++y) {
                const double* row = &x.value().at4(n, c, y, 0);
                double* dst = &tmp.at4(n, c, y, 0);
                for (int xx = 0; xx < Wo; ++xx) {
                    double acc = 0.0;
                    for (int i = 0; i < k; ++i) acc += kernel1d[i] * row[xx + i];
                    dst[xx] = acc;
                }
            }
    Tensor out({N, C, Ho, Wo});
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c)
            for (int y = 0; y < Ho; ++y)
                for (int xx = 0; xx < Wo; ++xx) {
                    double acc = 0.0;
                    for (int j = 0; j < k; ++j) acc += kernel1d[j] * tmp.at4(n, c, y + j, xx);
                    out.at4(n, c, y, xx) = acc;
                }
    NodePtr px = x.node();
    auto kern = kernel1d;
    return make(std::move(out), {px}, [px, kern, N, C, H, W, Ho, Wo](Node& nd) {
        int k = static_cast<int>(kern.size());
        Tensor gtmp({N, C, H, Wo});
        for (int n = 0; n < N; ++n)
            for (int c = 0; c < C; ++c)
                for (int y = 0; y < Ho; ++y)
                    for (int xx = 0; xx < Wo; ++xx) {
                        double go = nd.grad.at4(n, c, y, xx);
                        for (int j = 0; j < k; ++j) gtmp.at4(n, c, y + j, xx) += kern[j] * go;
                    }
        Tensor& gx = px->ensure_grad();
        for (int n = 0; n < N; ++n)
            for (int c = 0; c < C; ++c)
                for (int y = 0; y < H; ++y) {
                    double* row = &gx.at4(n, c, y, 0);
                    for (int xx = 0; xx < Wo; ++xx) {
                        double go = gtmp.at4(n, c, y, xx);
                        for (int i = 0; i < k; ++i) row[xx + i] += kern[i] * go;
                    }
                }
    });
}

// ---------------------------------------------------------------- dropout / batchnorm

Var dropout_channels(const Var& x, double rate, Rng& rng, bool training) {
    require_4d(x, "dropout_channels");
    if (!training || rate <= 0.0) return x;
    if (rate >= 1.0) throw std::invalid_argument("dropout_channels: rate must be < 1");
    const auto& s = x.value().shape;
    int N = s[0], C = s[1], H = s[2], W = s[3];
    std::size_t plane = static_cast<std::size_t>(H) * W;
    double keep_scale = 1.0 / (1.0 - rate);
    auto mask = std::make_shared<std::vector<double>>(static_cast<std::size_t>(N) * C);
    for (auto& m : *mask) m = rng.uniform() < rate ? 0.0 : keep_scale;
    Tensor out(x.value().shape);
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            double m = (*mask)[static_cast<std::size_t>(n) * C + c];
            const double* src = &x.value().at4(n, c, 0, 0);
            double* dst = &out.at4(n, c, 0, 0);
            for (std::size_t j = 0; j < plane; ++j) dst[j] = src[j] * m;
        }
    NodePtr px = x.node();
    return make(std::move(out), {px}, [px, mask, N, C, plane](Node& nd) {
        Tensor& g = px->ensure_grad();
        for (int n = 0; n < N; ++n)
            for (int c = 0; c < C; ++c) {
                double m = (*mask)[static_cast<std::size_t>(n) * C + c];
                double* dst = &g.at4(n, c, 0, 0);
                const double* src = &nd.grad.at4(n, c, 0, 0);
                for (std::size_t j = 0; j < plane; ++j) dst[j] += src[j] * m;
            }
    });
}

Var batchnorm2d(const Var& x, const Var& gamma, const Var& beta, BatchNormState& state,
                bool training) {
    require_4d(x, "batchnorm2d");
    const auto& s = x.value().shape;
    int N = s[0], C = s[1], H = s[2], W = s[3];
    if (gamma.value().size() != static_cast<std::size_t>(C) ||
        beta.value().size() != static_cast<std::size_t>(C))
        throw std::invalid_argument("batchnorm2d: gamma/beta size mismatch");
    std::size_t plane = static_cast<std::size_t>(H) * W;
    double m = static_cast<double>(N) * plane;

    std::vector<double> mu(C), invstd(C);
    if (training) {
        for (int c = 0; c < C; ++c) {
            double sum = 0.0, sq = 0.0;
            for (int n = 0; n < N; ++n) {
                const double* p = &x.value().at4(n, c, 0, 0);
                for (std::size_t j = 0; j < plane; ++j) {
                    sum += p[j];
                    sq += p[j] * p[j];
                }
            }
            mu[c] = sum / m;
            double var = std::max(sq / m - mu[c] * mu[c], 0.0);
            invstd[c] = 1.0 / std::sqrt(var + state.eps);
            state.running_mean.data[c] =
                (1.0 - state.momentum) * state.running_mean.data[c] + state.momentum * mu[c];
            state.running_var.data[c] =
                (1.0 - state.momentum) * state.running_var.data[c] + state.momentum * var;
        }
    } else {
        for (int c = 0; c < C; ++c) {
            mu[c] = state.running_mean.data[c];
            invstd[c] = 1.0 / std::sqrt(state.running_var.data[c] + state.eps);
        }
    }

    Tensor out(x.value().shape);
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            double g = gamma.value().data[c], b = beta.value().data[c];
            const double* p = &x.value().at4(n, c, 0, 0);
            double* dst = &out.at4(n, c, 0, 0);
            for (std::size_t j = 0; j < plane; ++j)
                dst[j] = g * (p[j] - mu[c]) * invstd[c] + b;
        }

    NodePtr px = x.node(), pg = gamma.node(), pb = beta.node();
    return make(std::move(out), {px, pg, pb},
                [px, pg, pb, mu, invstd, N, C, plane, m, training](Node& nd) {
                    for (int c = 0; c < C; ++c) {
                        double gsum = 0.0, gxhat = 0.0;
                        for (int n = 0; n < N; ++n) {
                            const double* gp = &nd.grad.at4(n, c, 0, 0);
                            const double* xp = &px->value.at4(n, c, 0, 0);
                            for (std::size_t j = 0; j < plane; ++j) {
                                gsum += gp[j];
                                gxhat += gp[j] * (xp[j] - mu[c]) * invstd[c];
                            }
                        }
                        if (pg->requires_grad) pg->ensure_grad().data[c] += gxhat;
                        if (pb->requires_grad) pb->ensure_grad().data[c] += gsum;
                        if (px->requires_grad) {
                            double g = pg->value.data[c];
                            Tensor& gx = px->ensure_grad();
                            for (int n = 0; n < N; ++n) {
                                const double* gp = &nd.grad.at4(n, c, 0, 0);
                                const double* xp = &px->value.at4(n, c, 0, 0);
                                double* dst = &gx.at4(n, c, 0, 0);
                                if (training) {
                                    for (std::size_t j = 0; j < plane; ++j) {
                                        double xhat = (xp[j] - mu[c]) * invstd[c];
                                        dst[j] += g * invstd[c] *
                                                  (gp[j] - gsum / m - xhat * gxhat / m);
                                    }
                                } else {
                                    for (std::size_t j = 0; j < plane; ++j)
                                        dst[j] += g * invstd[c] * gp[j];
                                }
                            }
                        }
                    }
                });
}

} // namespace pmnc::ad
