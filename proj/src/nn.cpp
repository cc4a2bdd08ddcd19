#include "downgen/nn.hpp"

#include "downgen/error.hpp"
#include "downgen/parallel.hpp"

#include <Eigen/Core>

#include <cmath>
#include <random>
#include <sstream>

namespace downgen::nn {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

void require(bool ok, const std::string& what) {
    if (!ok) {
        throw ShapeError(what);
    }
}

void require_image(const Tensor& t, const char* op) {
    require(t.rank() == 4, std::string(op) + ": expected [N, C, H, W], got " + shape_string(t.shape));
}

void require_matrix(const Tensor& t, const char* op) {
    require(t.rank() == 2, std::string(op) + ": expected [N, F], got " + shape_string(t.shape));
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct ConvGeom {
    std::size_t n, ci, h, w, co, ho, wo;
    int stride;
};

void im2col(const double* x, const ConvGeom& g, double* col) {
    const std::size_t hw = g.ho * g.wo;
    for (std::size_t c = 0; c < g.ci; ++c) {
        for (int ky = 0; ky < 3; ++ky) {
            for (int kx = 0; kx < 3; ++kx) {
                double* row = col + ((c * 3 + static_cast<std::size_t>(ky)) * 3 + static_cast<std::size_t>(kx)) * hw;
                for (std::size_t oy = 0; oy < g.ho; ++oy) {
                    const long iy = static_cast<long>(oy) * g.stride + ky - 1;
                    for (std::size_t ox = 0; ox < g.wo; ++ox) {
                        const long ix = static_cast<long>(ox) * g.stride + kx - 1;
                        const bool inside = iy >= 0 && ix >= 0 && iy < static_cast<long>(g.h) && ix < static_cast<long>(g.w);
                        row[oy * g.wo + ox] =
                            inside ? x[(c * g.h + static_cast<std::size_t>(iy)) * g.w + static_cast<std::size_t>(ix)] : 0.0;
                    }
                }
            }
        }
    }
}

void col2im_add(const double* col, const ConvGeom& g, double* dx) {
    const std::size_t hw = g.ho * g.wo;
    for (std::size_t c = 0; c < g.ci; ++c) {
        for (int ky = 0; ky < 3; ++ky) {
            for (int kx = 0; kx < 3; ++kx) {
                const double* row = col + ((c * 3 + static_cast<std::size_t>(ky)) * 3 + static_cast<std::size_t>(kx)) * hw;
                for (std::size_t oy = 0; oy < g.ho; ++oy) {
                    const long iy = static_cast<long>(oy) * g.stride + ky - 1;
                    if (iy < 0 || iy >= static_cast<long>(g.h)) {
                        continue;
                    }
                    for (std::size_t ox = 0; ox < g.wo; ++ox) {
                        const long ix = static_cast<long>(ox) * g.stride + kx - 1;
                        if (ix < 0 || ix >= static_cast<long>(g.w)) {
                            continue;
                        }
                        dx[(c * g.h + static_cast<std::size_t>(iy)) * g.w + static_cast<std::size_t>(ix)] += row[oy * g.wo + ox];
                    }
                }
            }
        }
    }
}

}  // namespace

// ---- Tensor / ParamStore ----------------------------------------------------

std::size_t shape_size(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (auto d : shape) {
        n *= d;
    }
    return n;
}

std::string shape_string(const std::vector<std::size_t>& shape) {
    std::ostringstream s;
    s << "[";
    for (std::size_t k = 0; k < shape.size(); ++k) {
        s << (k ? ", " : "") << shape[k];
    }
    s << "]";
    return s.str();
}

Tensor Tensor::zeros(std::vector<std::size_t> shape) { return filled(std::move(shape), 0.0); }

Tensor Tensor::filled(std::vector<std::size_t> shape, double value) {
    Tensor t;
    t.data.assign(shape_size(shape), value);
    t.shape = std::move(shape);
    return t;
}

Param& ParamStore::add(const std::string& name, Tensor value) {
    if (contains(name)) {
        throw ValidationError("duplicate parameter name '" + name + "'");
    }
    auto p = std::make_unique<Param>();
    p->name = name;
    p->grad = Tensor::zeros(value.shape);
    p->value = std::move(value);
    params_.push_back(std::move(p));
    return *params_.back();
}

Param& ParamStore::get(const std::string& name) {
    for (auto& p : params_) {
        if (p->name == name) {
            return *p;
        }
    }
    throw ValidationError("unknown parameter '" + name + "'");
}

const Param& ParamStore::get(const std::string& name) const {
    return const_cast<ParamStore*>(this)->get(name);
}

bool ParamStore::contains(const std::string& name) const {
    for (const auto& p : params_) {
        if (p->name == name) {
            return true;
        }
    }
    return false;
}

void ParamStore::zero_grad() {
    for (auto& p : params_) {
        std::fill(p->grad.data.begin(), p->grad.data.end(), 0.0);
    }
}

std::size_t ParamStore::total_values() const {
    std::size_t n = 0;
    for (const auto& p : params_) {
        n += p->value.size();
    }
    return n;
}

void ParamStore::check_finite() const {
    for (const auto& p : params_) {
        for (double v : p->value.data) {
            if (!std::isfinite(v)) {
                throw NumericalError("parameter '" + p->name + "' is non-finite");
            }
        }
        for (double v : p->grad.data) {
            if (!std::isfinite(v)) {
                throw NumericalError("gradient of '" + p->name + "' is non-finite");
            }
        }
    }
}

// ---- Graph -------------------------------------------------------------------

const Tensor& Var::value() const { return graph->value(*this); }

Var Graph::input(Tensor value) {
    Node n;
    n.value = std::move(value);
    nodes_.push_back(std::move(n));
    return Var{this, nodes_.size() - 1};
}

Var Graph::param(Param& p) {
    Node n;
    n.value = p.value;
    n.param = &p;
    n.needs_grad = record_;
    nodes_.push_back(std::move(n));
    return Var{this, nodes_.size() - 1};
}

Tensor& Graph::grad(Var v) {
    Node& n = nodes_.at(v.id);
    if (n.grad.data.size() != n.value.data.size()) {
        n.grad = Tensor::zeros(n.value.shape);
    }
    return n.grad;
}

Var Graph::push(Tensor value, std::initializer_list<Var> parents, Backward back) {
    Node n;
    n.value = std::move(value);
    for (const auto& p : parents) {
        if (p.graph != this) {
            throw ValidationError("op mixes variables from different graphs");
        }
        n.needs_grad = n.needs_grad || nodes_.at(p.id).needs_grad;
    }
    if (record_ && n.needs_grad) {
        n.back = std::move(back);
    }
    nodes_.push_back(std::move(n));
    return Var{this, nodes_.size() - 1};
}

void Graph::backward(Var loss) {
    if (!record_) {
        throw ValidationError("backward on a non-recording graph");
    }
    if (value(loss).size() != 1) {
        throw ShapeError("backward needs a scalar loss");
    }
    grad(loss).data[0] = 1.0;
    for (std::size_t k = loss.id + 1; k-- > 0;) {
        Node& n = nodes_[k];
        if (!n.needs_grad || n.grad.data.empty()) {
            continue;
        }
        if (n.back) {
            n.back(Var{this, k});
        }
        if (n.param != nullptr) {
            auto& pg = n.param->grad;
            if (pg.data.size() != n.grad.data.size()) {
                pg = Tensor::zeros(n.param->value.shape);
            }
            for (std::size_t i = 0; i < pg.data.size(); ++i) {
                pg.data[i] += n.grad.data[i];
            }
        }
    }
}

// ---- ops -----------------------------------------------------------------------

Var conv2d(Var x, Var w, Var b, int stride) {
    Graph* g = x.graph;
    const Tensor& X = x.value();
    const Tensor& Wt = w.value();
    require_image(X, "conv2d");
    require(stride == 1 || stride == 2, "conv2d: stride must be 1 or 2");
    require(Wt.rank() == 4 && Wt.dim(1) == X.dim(1) && Wt.dim(2) == 3 && Wt.dim(3) == 3,
            "conv2d: weight " + shape_string(Wt.shape) + " does not fit input " + shape_string(X.shape));
    require(b.value().shape == std::vector<std::size_t>{Wt.dim(0)}, "conv2d: bias shape mismatch");
    ConvGeom geo{X.dim(0), X.dim(1), X.dim(2), X.dim(3), Wt.dim(0), 0, 0, stride};
    geo.ho = (geo.h + static_cast<std::size_t>(stride) - 1) / static_cast<std::size_t>(stride);
    geo.wo = (geo.w + static_cast<std::size_t>(stride) - 1) / static_cast<std::size_t>(stride);
    const std::size_t k = geo.ci * 9;
    const std::size_t hw = geo.ho * geo.wo;
    const auto ek = static_cast<Eigen::Index>(k);
    const auto ehw = static_cast<Eigen::Index>(hw);
    const auto eco = static_cast<Eigen::Index>(geo.co);
    Tensor out = Tensor::zeros({geo.n, geo.co, geo.ho, geo.wo});
    const double* bias = b.value().data.data();
    // Eigen picks its vector peeling from the buffer address, so every operand
    // lives in an owned aligned matrix to make results independent of the heap.
    const RowMat wm = ConstMapMat(Wt.data.data(), eco, ek);
    parallel_for(geo.n, [&](std::size_t n) {
        RowMat col(ek, ehw);
        im2col(X.data.data() + n * geo.ci * geo.h * geo.w, geo, col.data());
        RowMat o(eco, ehw);
        o.noalias() = wm * col;
        for (std::size_t c = 0; c < geo.co; ++c) {
            o.row(static_cast<Eigen::Index>(c)).array() += bias[c];
        }
        MapMat(out.data.data() + n * geo.co * hw, eco, ehw) = o;
    });
    return g->push(std::move(out), {x, w, b}, [x, w, b, geo, k, hw, ek, ehw, eco](Var self) {
        Graph* gg = self.graph;
        const Tensor& Xv = gg->value(x);
        const Tensor& Wv = gg->value(w);
        const Tensor& dY = gg->grad(self);
        const bool need_x = gg->needs_grad(x);
        const bool need_w = gg->needs_grad(w) || gg->needs_grad(b);
        std::vector<std::vector<double>> dw_parts(need_w ? geo.n : 0);
        std::vector<std::vector<double>> db_parts(need_w ? geo.n : 0);
        Tensor* dX = need_x ? &gg->grad(x) : nullptr;
        const RowMat wm = need_x ? RowMat(ConstMapMat(Wv.data.data(), eco, ek)) : RowMat();
        parallel_for(geo.n, [&](std::size_t n) {
            const RowMat dy = ConstMapMat(dY.data.data() + n * geo.co * hw, eco, ehw);
            if (need_w) {
                RowMat col(ek, ehw);
                im2col(Xv.data.data() + n * geo.ci * geo.h * geo.w, geo, col.data());
                RowMat dwm(eco, ek);
                dwm.noalias() = dy * col.transpose();
                dw_parts[n].assign(dwm.data(), dwm.data() + dwm.size());
                db_parts[n].resize(geo.co);
                for (std::size_t c = 0; c < geo.co; ++c) {
                    db_parts[n][c] = dy.row(static_cast<Eigen::Index>(c)).sum();
                }
            }
            if (need_x) {
                RowMat dc(ek, ehw);
                dc.noalias() = wm.transpose() * dy;
                col2im_add(dc.data(), geo, dX->data.data() + n * geo.ci * geo.h * geo.w);
            }
        });
        if (need_w) {
            // Fixed reduction order over the batch keeps gradients schedule independent.
            Tensor& dW = gg->grad(w);
            Tensor& dB = gg->grad(b);
            for (std::size_t n = 0; n < geo.n; ++n) {
                for (std::size_t i = 0; i < dW.data.size(); ++i) {
                    dW.data[i] += dw_parts[n][i];
                }
                for (std::size_t c = 0; c < geo.co; ++c) {
                    dB.data[c] += db_parts[n][c];
                }
            }
        }
    });
}

Var upsample_to(Var x, std::size_t h, std::size_t w) {
    const Tensor& X = x.value();
    require_image(X, "upsample_to");
    const std::size_t N = X.dim(0), C = X.dim(1), H = X.dim(2), W = X.dim(3);
    require(h >= H && w >= W, "upsample_to: target smaller than input");
    Tensor out = Tensor::zeros({N, C, h, w});
    auto src = [=](std::size_t i, std::size_t j) { return (i * H / h) * W + (j * W / w); };
    for (std::size_t nc = 0; nc < N * C; ++nc) {
        for (std::size_t i = 0; i < h; ++i) {
            for (std::size_t j = 0; j < w; ++j) {
                out.data[(nc * h + i) * w + j] = X.data[nc * H * W + src(i, j)];
            }
        }
    }
    return x.graph->push(std::move(out), {x}, [x, N, C, H, W, h, w, src](Var self) {
        const Tensor& dY = self.graph->grad(self);
        Tensor& dX = self.graph->grad(x);
        for (std::size_t nc = 0; nc < N * C; ++nc) {
            for (std::size_t i = 0; i < h; ++i) {
                for (std::size_t j = 0; j < w; ++j) {
                    dX.data[nc * H * W + src(i, j)] += dY.data[(nc * h + i) * w + j];
                }
            }
        }
    });
}

Var add(Var a, Var b) {
    const Tensor& A = a.value();
    const Tensor& B = b.value();
    require(A.shape == B.shape, "add: shape mismatch " + shape_string(A.shape) + " vs " + shape_string(B.shape));
    Tensor out = A;
    for (std::size_t i = 0; i < out.size(); ++i) {
        out.data[i] += B.data[i];
    }
    return a.graph->push(std::move(out), {a, b}, [a, b](Var self) {
        Graph* g = self.graph;
        const Tensor& dY = g->grad(self);
        for (Var p : {a, b}) {
            if (g->needs_grad(p)) {
                Tensor& d = g->grad(p);
                for (std::size_t i = 0; i < d.size(); ++i) {
                    d.data[i] += dY.data[i];
                }
            }
        }
    });
}

Var axpy(double alpha, Var x, Var y) {
    const Tensor& X = x.value();
    const Tensor& Y = y.value();
    require(X.shape == Y.shape, "axpy: shape mismatch");
    Tensor out = Y;
    for (std::size_t i = 0; i < out.size(); ++i) {
        out.data[i] += alpha * X.data[i];
    }
    return x.graph->push(std::move(out), {x, y}, [alpha, x, y](Var self) {
        Graph* g = self.graph;
        const Tensor& dY = g->grad(self);
        if (g->needs_grad(x)) {
            Tensor& d = g->grad(x);
            for (std::size_t i = 0; i < d.size(); ++i) {
                d.data[i] += alpha * dY.data[i];
            }
        }
        if (g->needs_grad(y)) {
            Tensor& d = g->grad(y);
            for (std::size_t i = 0; i < d.size(); ++i) {
                d.data[i] += dY.data[i];
            }
        }
    });
}

Var silu(Var x) {
    Tensor out = x.value();
    for (auto& v : out.data) {
        v = v * sigmoid(v);
    }
    return x.graph->push(std::move(out), {x}, [x](Var self) {
        Graph* g = self.graph;
        const Tensor& X = g->value(x);
        const Tensor& dY = g->grad(self);
        Tensor& dX = g->grad(x);
        for (std::size_t i = 0; i < dX.size(); ++i) {
            const double s = sigmoid(X.data[i]);
            dX.data[i] += dY.data[i] * s * (1.0 + X.data[i] * (1.0 - s));
        }
    });
}

Var film(Var x, Var s, Var b) {
    const Tensor& X = x.value();
    const Tensor& S = s.value();
    const Tensor& B = b.value();
    require_image(X, "film");
    const std::size_t N = X.dim(0), C = X.dim(1), HW = X.dim(2) * X.dim(3);
    const std::vector<std::size_t> nc{N, C};
    require(S.shape == nc && B.shape == nc, "film: modulation must be [N, C] = " + shape_string(nc));
    Tensor out = X;
    for (std::size_t k = 0; k < N * C; ++k) {
        const double sc = 1.0 + S.data[k];
        for (std::size_t p = 0; p < HW; ++p) {
            out.data[k * HW + p] = sc * X.data[k * HW + p] + B.data[k];
        }
    }
    return x.graph->push(std::move(out), {x, s, b}, [x, s, b, N, C, HW](Var self) {
        Graph* g = self.graph;
        const Tensor& Xv = g->value(x);
        const Tensor& Sv = g->value(s);
        const Tensor& dY = g->grad(self);
        Tensor* dX = g->needs_grad(x) ? &g->grad(x) : nullptr;
        Tensor* dS = g->needs_grad(s) ? &g->grad(s) : nullptr;
        Tensor* dB = g->needs_grad(b) ? &g->grad(b) : nullptr;
        for (std::size_t k = 0; k < N * C; ++k) {
            double ds = 0.0;
            double db = 0.0;
            for (std::size_t p = 0; p < HW; ++p) {
                const double gy = dY.data[k * HW + p];
                ds += gy * Xv.data[k * HW + p];
                db += gy;
                if (dX) {
                    dX->data[k * HW + p] += gy * (1.0 + Sv.data[k]);
                }
            }
            if (dS) {
                dS->data[k] += ds;
            }
            if (dB) {
                dB->data[k] += db;
            }
        }
    });
}

Var dense(Var x, Var w, Var b) {
    const Tensor& X = x.value();
    const Tensor& Wt = w.value();
    require_matrix(X, "dense");
    require(Wt.rank() == 2 && Wt.dim(1) == X.dim(1),
            "dense: weight " + shape_string(Wt.shape) + " does not fit input " + shape_string(X.shape));
    require(b.value().shape == std::vector<std::size_t>{Wt.dim(0)}, "dense: bias shape mismatch");
    const auto N = static_cast<Eigen::Index>(X.dim(0));
    const auto Fi = static_cast<Eigen::Index>(X.dim(1));
    const auto Fo = static_cast<Eigen::Index>(Wt.dim(0));
    Tensor out = Tensor::zeros({X.dim(0), Wt.dim(0)});
    const RowMat xm = ConstMapMat(X.data.data(), N, Fi);
    const RowMat wm = ConstMapMat(Wt.data.data(), Fo, Fi);
    RowMat o(N, Fo);
    o.noalias() = xm * wm.transpose();
    for (Eigen::Index n = 0; n < N; ++n) {
        for (Eigen::Index f = 0; f < Fo; ++f) {
            o(n, f) += b.value().data[static_cast<std::size_t>(f)];
        }
    }
    MapMat(out.data.data(), N, Fo) = o;
    return x.graph->push(std::move(out), {x, w, b}, [x, w, b, N, Fi, Fo](Var self) {
        Graph* g = self.graph;
        const RowMat dy = ConstMapMat(g->grad(self).data.data(), N, Fo);
        if (g->needs_grad(x)) {
            const RowMat wm = ConstMapMat(g->value(w).data.data(), Fo, Fi);
            RowMat dx(N, Fi);
            dx.noalias() = dy * wm;
            MapMat(g->grad(x).data.data(), N, Fi) += dx;
        }
        if (g->needs_grad(w)) {
            const RowMat xm = ConstMapMat(g->value(x).data.data(), N, Fi);
            RowMat dw(Fo, Fi);
            dw.noalias() = dy.transpose() * xm;
            MapMat(g->grad(w).data.data(), Fo, Fi) += dw;
        }
        if (g->needs_grad(b)) {
            Tensor& db = g->grad(b);
            for (Eigen::Index n = 0; n < N; ++n) {
                for (Eigen::Index f = 0; f < Fo; ++f) {
                    db.data[static_cast<std::size_t>(f)] += dy(n, f);
                }
            }
        }
    });
}

Var concat_channels(Var a, Var b) {
    const Tensor& A = a.value();
    const Tensor& B = b.value();
    require_image(A, "concat_channels");
    require_image(B, "concat_channels");
    require(A.dim(0) == B.dim(0) && A.dim(2) == B.dim(2) && A.dim(3) == B.dim(3),
            "concat_channels: " + shape_string(A.shape) + " vs " + shape_string(B.shape));
    const std::size_t N = A.dim(0), Ca = A.dim(1), Cb = B.dim(1), HW = A.dim(2) * A.dim(3);
    Tensor out = Tensor::zeros({N, Ca + Cb, A.dim(2), A.dim(3)});
    for (std::size_t n = 0; n < N; ++n) {
        std::copy_n(A.data.begin() + static_cast<std::ptrdiff_t>(n * Ca * HW), Ca * HW,
                    out.data.begin() + static_cast<std::ptrdiff_t>(n * (Ca + Cb) * HW));
        std::copy_n(B.data.begin() + static_cast<std::ptrdiff_t>(n * Cb * HW), Cb * HW,
                    out.data.begin() + static_cast<std::ptrdiff_t>((n * (Ca + Cb) + Ca) * HW));
    }
    return a.graph->push(std::move(out), {a, b}, [a, b, N, Ca, Cb, HW](Var self) {
        Graph* g = self.graph;
        const Tensor& dY = g->grad(self);
        if (g->needs_grad(a)) {
            Tensor& d = g->grad(a);
            for (std::size_t n = 0; n < N; ++n) {
                for (std::size_t i = 0; i < Ca * HW; ++i) {
                    d.data[n * Ca * HW + i] += dY.data[n * (Ca + Cb) * HW + i];
                }
            }
        }
        if (g->needs_grad(b)) {
            Tensor& d = g->grad(b);
            for (std::size_t n = 0; n < N; ++n) {
                for (std::size_t i = 0; i < Cb * HW; ++i) {
                    d.data[n * Cb * HW + i] += dY.data[(n * (Ca + Cb) + Ca) * HW + i];
                }
            }
        }
    });
}

Var concat_features(Var a, Var b) {
    const Tensor& A = a.value();
    const Tensor& B = b.value();
    require_matrix(A, "concat_features");
    require_matrix(B, "concat_features");
    require(A.dim(0) == B.dim(0), "concat_features: batch mismatch");
    const std::size_t N = A.dim(0), Fa = A.dim(1), Fb = B.dim(1);
    Tensor out = Tensor::zeros({N, Fa + Fb});
    for (std::size_t n = 0; n < N; ++n) {
        for (std::size_t f = 0; f < Fa; ++f) {
            out.data[n * (Fa + Fb) + f] = A.data[n * Fa + f];
        }
        for (std::size_t f = 0; f < Fb; ++f) {
            out.data[n * (Fa + Fb) + Fa + f] = B.data[n * Fb + f];
        }
    }
    return a.graph->push(std::move(out), {a, b}, [a, b, N, Fa, Fb](Var self) {
        Graph* g = self.graph;
        const Tensor& dY = g->grad(self);
        if (g->needs_grad(a)) {
            Tensor& d = g->grad(a);
            for (std::size_t n = 0; n < N; ++n) {
                for (std::size_t f = 0; f < Fa; ++f) {
                    d.data[n * Fa + f] += dY.data[n * (Fa + Fb) + f];
                }
            }
        }
        if (g->needs_grad(b)) {
            Tensor& d = g->grad(b);
            for (std::size_t n = 0; n < N; ++n) {
                for (std::size_t f = 0; f < Fb; ++f) {
                    d.data[n * Fb + f] += dY.data[n * (Fa + Fb) + Fa + f];
                }
            }
        }
    });
}

Var slice_features(Var x, std::size_t begin, std::size_t end) {
    const Tensor& X = x.value();
    require_matrix(X, "slice_features");
    require(begin < end && end <= X.dim(1), "slice_features: bad range");
    const std::size_t N = X.dim(0), F = X.dim(1), Fo = end - begin;
    Tensor out = Tensor::zeros({N, Fo});
    for (std::size_t n = 0; n < N; ++n) {
        for (std::size_t f = 0; f < Fo; ++f) {
            out.data[n * Fo + f] = X.data[n * F + begin + f];
        }
    }
    return x.graph->push(std::move(out), {x}, [x, N, F, Fo, begin](Var self) {
        Graph* g = self.graph;
        const Tensor& dY = g->grad(self);
        Tensor& dX = g->grad(x);
        for (std::size_t n = 0; n < N; ++n) {
            for (std::size_t f = 0; f < Fo; ++f) {
                dX.data[n * F + begin + f] += dY.data[n * Fo + f];
            }
        }
    });
}

Var spatial_mean(Var x) {
    const Tensor& X = x.value();
    require_image(X, "spatial_mean");
    const std::size_t N = X.dim(0), C = X.dim(1), HW = X.dim(2) * X.dim(3);
    Tensor out = Tensor::zeros({N, C});
    for (std::size_t k = 0; k < N * C; ++k) {
        double acc = 0.0;
        for (std::size_t p = 0; p < HW; ++p) {
            acc += X.data[k * HW + p];
        }
        out.data[k] = acc / static_cast<double>(HW);
    }
    return x.graph->push(std::move(out), {x}, [x, N, C, HW](Var self) {
        Graph* g = self.graph;
        const Tensor& dY = g->grad(self);
        Tensor& dX = g->grad(x);
        for (std::size_t k = 0; k < N * C; ++k) {
            const double gk = dY.data[k] / static_cast<double>(HW);
            for (std::size_t p = 0; p < HW; ++p) {
                dX.data[k * HW + p] += gk;
            }
        }
    });
}

Var scale_per_sample(Var x, const std::vector<double>& c) {
    const Tensor& X = x.value();
    require(X.rank() >= 1 && X.dim(0) == c.size(), "scale_per_sample: need one coefficient per sample");
    const std::size_t per = X.size() / c.size();
    Tensor out = X;
    for (std::size_t n = 0; n < c.size(); ++n) {
        for (std::size_t i = 0; i < per; ++i) {
            out.data[n * per + i] *= c[n];
        }
    }
    return x.graph->push(std::move(out), {x}, [x, c, per](Var self) {
        Graph* g = self.graph;
        const Tensor& dY = g->grad(self);
        Tensor& dX = g->grad(x);
        for (std::size_t n = 0; n < c.size(); ++n) {
            for (std::size_t i = 0; i < per; ++i) {
                dX.data[n * per + i] += c[n] * dY.data[n * per + i];
            }
        }
    });
}

Var weighted_mse(Var pred, Var target, const std::vector<double>& w) {
    const Tensor& P = pred.value();
    const Tensor& T = target.value();
    require(P.shape == T.shape, "weighted_mse: shape mismatch");
    require(P.rank() >= 1 && P.dim(0) == w.size() && !w.empty(), "weighted_mse: need one weight per sample");
    const std::size_t N = w.size();
    const std::size_t per = P.size() / N;
    double loss = 0.0;
    for (std::size_t n = 0; n < N; ++n) {
        double acc = 0.0;
        for (std::size_t i = 0; i < per; ++i) {
            const double d = P.data[n * per + i] - T.data[n * per + i];
            acc += d * d;
        }
        loss += w[n] * acc / static_cast<double>(per);
    }
    loss /= static_cast<double>(N);
    return pred.graph->push(Tensor::filled({1}, loss), {pred, target}, [pred, target, w, N, per](Var self) {
        Graph* g = self.graph;
        const double gl = g->grad(self).data[0];
        const Tensor& Pv = g->value(pred);
        const Tensor& Tv = g->value(target);
        Tensor* dP = g->needs_grad(pred) ? &g->grad(pred) : nullptr;
        Tensor* dT = g->needs_grad(target) ? &g->grad(target) : nullptr;
        for (std::size_t n = 0; n < N; ++n) {
            const double coef = gl * w[n] * 2.0 / static_cast<double>(per * N);
            for (std::size_t i = 0; i < per; ++i) {
                const double d = coef * (Pv.data[n * per + i] - Tv.data[n * per + i]);
                if (dP) {
                    dP->data[n * per + i] += d;
                }
                if (dT) {
                    dT->data[n * per + i] -= d;
                }
            }
        }
    });
}

Tensor truncated_normal(std::vector<std::size_t> shape, double std, std::uint64_t seed) {
    Tensor t = Tensor::zeros(std::move(shape));
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (auto& v : t.data) {
        double z = normal(rng);
        while (std::abs(z) > 2.0) {
            z = normal(rng);
        }
        v = std * z;
    }
    return t;
}

}  // namespace downgen::nn
