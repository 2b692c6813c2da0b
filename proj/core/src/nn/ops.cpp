#include "maglive/nn/ops.hpp"

#include "maglive/error.hpp"

#include <algorithm>
#include <cmath>
#include <initializer_list>

namespace maglive::nn {

namespace {

Tensor make_result(Shape shape, std::vector<double> value, std::initializer_list<Tensor> inputs,
                   std::function<void(Node&)> backward_fn) {
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->value = std::move(value);
    for (const auto& in : inputs) {
        if (in.requires_grad()) node->requires_grad = true;
    }
    if (node->requires_grad) {
        for (const auto& in : inputs) node->parents.push_back(in.node_ptr());
        node->backward_fn = std::move(backward_fn);
    }
    return Tensor(std::move(node));
}

void expect_rank(const Tensor& t, std::size_t rank, const char* op, const char* what) {
    if (t.rank() != rank)
        throw ShapeError(std::string(op) + ": " + what + " must have rank " + std::to_string(rank) + ", got " +
                         to_string(t.shape()));
}

}  // namespace

Tensor conv1d(const Tensor& x, const Tensor& kernels, const Tensor& bias) {
    expect_rank(x, 3, "conv1d", "input");
    expect_rank(kernels, 3, "conv1d", "kernels");
    expect_rank(bias, 1, "conv1d", "bias");
    const std::size_t n = x.dim(0), len = x.dim(1), cin = x.dim(2);
    const std::size_t k = kernels.dim(0), cout = kernels.dim(2);
    if (kernels.dim(1) != cin || bias.dim(0) != cout)
        throw ShapeError("conv1d: kernels " + to_string(kernels.shape()) + " incompatible with input " +
                         to_string(x.shape()));
    if (len < k) throw ShapeError("conv1d: input length " + std::to_string(len) + " shorter than kernel");
    const std::size_t out_len = len - k + 1;

    const double* xv = x.values().data();
    const double* wv = kernels.values().data();
    const double* bv = bias.values().data();
    std::vector<double> out(n * out_len * cout);
    for (std::size_t b = 0; b < n; ++b)
        for (std::size_t i = 0; i < out_len; ++i) {
            double* o = &out[(b * out_len + i) * cout];
            std::copy(bv, bv + cout, o);
            for (std::size_t t = 0; t < k; ++t)
                for (std::size_t c = 0; c < cin; ++c) {
                    const double v = xv[(b * len + i + t) * cin + c];
                    const double* w = wv + (t * cin + c) * cout;
                    for (std::size_t co = 0; co < cout; ++co) o[co] += v * w[co];
                }
        }

    return make_result({n, out_len, cout}, std::move(out), {x, kernels, bias}, [=](Node& self) {
        const double* g = self.grad.data();
        const double* xv = x.values().data();
        const double* wv = kernels.values().data();
        double* dx = x.requires_grad() ? x.node().grad_buffer().data() : nullptr;
        double* dw = kernels.requires_grad() ? kernels.node().grad_buffer().data() : nullptr;
        double* db = bias.requires_grad() ? bias.node().grad_buffer().data() : nullptr;
        for (std::size_t b = 0; b < n; ++b)
            for (std::size_t i = 0; i < out_len; ++i) {
                const double* go = g + (b * out_len + i) * cout;
                if (db)
                    for (std::size_t co = 0; co < cout; ++co) db[co] += go[co];
                for (std::size_t t = 0; t < k; ++t)
                    for (std::size_t c = 0; c < cin; ++c) {
                        const std::size_t xi = (b * len + i + t) * cin + c;
                        const std::size_t wi = (t * cin + c) * cout;
                        if (dx) {
                            double acc = 0.0;
                            for (std::size_t co = 0; co < cout; ++co) acc += go[co] * wv[wi + co];
                            dx[xi] += acc;
                        }
                        if (dw) {
                            const double v = xv[xi];
                            for (std::size_t co = 0; co < cout; ++co) dw[wi + co] += v * go[co];
                        }
                    }
            }
    });
}

Tensor conv2d(const Tensor& x, const Tensor& kernels, const Tensor& bias) {
    expect_rank(x, 4, "conv2d", "input");
    expect_rank(kernels, 4, "conv2d", "kernels");
    expect_rank(bias, 1, "conv2d", "bias");
    const std::size_t n = x.dim(0), h = x.dim(1), w = x.dim(2), cin = x.dim(3);
    const std::size_t kh = kernels.dim(0), kw = kernels.dim(1), cout = kernels.dim(3);
    if (kernels.dim(2) != cin || bias.dim(0) != cout)
        throw ShapeError("conv2d: kernels " + to_string(kernels.shape()) + " incompatible with input " +
                         to_string(x.shape()));
    if (h < kh || w < kw) throw ShapeError("conv2d: input " + to_string(x.shape()) + " smaller than kernel");
    const std::size_t oh = h - kh + 1, ow = w - kw + 1;

    const double* xv = x.values().data();
    const double* wv = kernels.values().data();
    const double* bv = bias.values().data();
    std::vector<double> out(n * oh * ow * cout);
    for (std::size_t b = 0; b < n; ++b)
        for (std::size_t i = 0; i < oh; ++i)
            for (std::size_t j = 0; j < ow; ++j) {
                double* o = &out[((b * oh + i) * ow + j) * cout];
                std::copy(bv, bv + cout, o);
                for (std::size_t u = 0; u < kh; ++u)
                    for (std::size_t v = 0; v < kw; ++v) {
                        const double* xp = xv + ((b * h + i + u) * w + j + v) * cin;
                        const double* wp = wv + (u * kw + v) * cin * cout;
                        for (std::size_t c = 0; c < cin; ++c) {
                            const double val = xp[c];
                            const double* wc = wp + c * cout;
                            for (std::size_t co = 0; co < cout; ++co) o[co] += val * wc[co];
                        }
                    }
            }

    return make_result({n, oh, ow, cout}, std::move(out), {x, kernels, bias}, [=](Node& self) {
        const double* g = self.grad.data();
        const double* xv = x.values().data();
        const double* wv = kernels.values().data();
        double* dx = x.requires_grad() ? x.node().grad_buffer().data() : nullptr;
        double* dw = kernels.requires_grad() ? kernels.node().grad_buffer().data() : nullptr;
        double* db = bias.requires_grad() ? bias.node().grad_buffer().data() : nullptr;
        for (std::size_t b = 0; b < n; ++b)
            for (std::size_t i = 0; i < oh; ++i)
                for (std::size_t j = 0; j < ow; ++j) {
                    const double* go = g + ((b * oh + i) * ow + j) * cout;
                    if (db)
                        for (std::size_t co = 0; co < cout; ++co) db[co] += go[co];
                    for (std::size_t u = 0; u < kh; ++u)
                        for (std::size_t v = 0; v < kw; ++v) {
                            const std::size_t xbase = ((b * h + i + u) * w + j + v) * cin;
                            const std::size_t wbase = (u * kw + v) * cin * cout;
                            for (std::size_t c = 0; c < cin; ++c) {
                                const double* wc = wv + wbase + c * cout;
                                if (dx) {
                                    double acc = 0.0;
                                    for (std::size_t co = 0; co < cout; ++co) acc += go[co] * wc[co];
                                    dx[xbase + c] += acc;
                                }
                                if (dw) {
                                    const double val = xv[xbase + c];
                                    double* dwc = dw + wbase + c * cout;
                                    for (std::size_t co = 0; co < cout; ++co) dwc[co] += val * go[co];
                                }
                            }
                        }
                }
    });
}

Tensor pool1d(const Tensor& x, PoolKind kind, std::size_t window) {
    expect_rank(x, 3, "pool1d", "input");
    const std::size_t n = x.dim(0), len = x.dim(1), c = x.dim(2);
    if (window == 0 || window > len) throw ShapeError("pool1d: window larger than input extent");
    const std::size_t out_len = len / window;
    const double* xv = x.values().data();
    std::vector<double> out(n * out_len * c);
    std::vector<std::size_t> argmax(kind == PoolKind::max ? out.size() : 0);
    for (std::size_t b = 0; b < n; ++b)
        for (std::size_t i = 0; i < out_len; ++i)
            for (std::size_t ch = 0; ch < c; ++ch) {
                const std::size_t oi = (b * out_len + i) * c + ch;
                if (kind == PoolKind::max) {
                    std::size_t best = (b * len + i * window) * c + ch;
                    for (std::size_t t = 1; t < window; ++t) {
                        const std::size_t xi = (b * len + i * window + t) * c + ch;
                        if (xv[xi] > xv[best]) best = xi;
                    }
                    argmax[oi] = best;
                    out[oi] = xv[best];
                } else {
                    double s = 0.0;
                    for (std::size_t t = 0; t < window; ++t) s += xv[(b * len + i * window + t) * c + ch];
                    out[oi] = s / static_cast<double>(window);
                }
            }
    return make_result({n, out_len, c}, std::move(out), {x}, [=, argmax = std::move(argmax)](Node& self) {
        double* dx = x.node().grad_buffer().data();
        const double* g = self.grad.data();
        if (kind == PoolKind::max) {
            for (std::size_t oi = 0; oi < argmax.size(); ++oi) dx[argmax[oi]] += g[oi];
            return;
        }
        const double inv = 1.0 / static_cast<double>(window);
        for (std::size_t b = 0; b < n; ++b)
            for (std::size_t i = 0; i < out_len; ++i)
                for (std::size_t ch = 0; ch < c; ++ch) {
                    const double gv = g[(b * out_len + i) * c + ch] * inv;
                    for (std::size_t t = 0; t < window; ++t) dx[(b * len + i * window + t) * c + ch] += gv;
                }
    });
}

Tensor pool2d(const Tensor& x, PoolKind kind, std::size_t window) {
    expect_rank(x, 4, "pool2d", "input");
    const std::size_t n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
    if (window == 0 || window > h || window > w) throw ShapeError("pool2d: window larger than input extent");
    const std::size_t oh = h / window, ow = w / window;
    const double* xv = x.values().data();
    std::vector<double> out(n * oh * ow * c);
    std::vector<std::size_t> argmax(kind == PoolKind::max ? out.size() : 0);
    const double inv = 1.0 / static_cast<double>(window * window);
    for (std::size_t b = 0; b < n; ++b)
        for (std::size_t i = 0; i < oh; ++i)
            for (std::size_t j = 0; j < ow; ++j)
                for (std::size_t ch = 0; ch < c; ++ch) {
                    const std::size_t oi = ((b * oh + i) * ow + j) * c + ch;
                    std::size_t best = ((b * h + i * window) * w + j * window) * c + ch;
                    double s = 0.0;
                    for (std::size_t u = 0; u < window; ++u)
                        for (std::size_t v = 0; v < window; ++v) {
                            const std::size_t xi = ((b * h + i * window + u) * w + j * window + v) * c + ch;
                            s += xv[xi];
                            if (xv[xi] > xv[best]) best = xi;
                        }
                    if (kind == PoolKind::max) {
                        argmax[oi] = best;
                        out[oi] = xv[best];
                    } else {
                        out[oi] = s * inv;
                    }
                }
    return make_result({n, oh, ow, c}, std::move(out), {x}, [=, argmax = std::move(argmax)](Node& self) {
        double* dx = x.node().grad_buffer().data();
        const double* g = self.grad.data();
        if (kind == PoolKind::max) {
            for (std::size_t oi = 0; oi < argmax.size(); ++oi) dx[argmax[oi]] += g[oi];
            return;
        }
        for (std::size_t b = 0; b < n; ++b)
            for (std::size_t i = 0; i < oh; ++i)
                for (std::size_t j = 0; j < ow; ++j)
                    for (std::size_t ch = 0; ch < c; ++ch) {
                        const double gv = g[((b * oh + i) * ow + j) * c + ch] * inv;
                        for (std::size_t u = 0; u < window; ++u)
                            for (std::size_t v = 0; v < window; ++v)
                                dx[((b * h + i * window + u) * w + j * window + v) * c + ch] += gv;
                    }
    });
}

Tensor batchnorm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Tensor& running_mean,
                 Tensor& running_var, bool training) {
    if (x.rank() < 2) throw ShapeError("batchnorm: input needs a channel axis");
    const std::size_t c = x.shape().back();
    if (gamma.size() != c || beta.size() != c || running_mean.size() != c || running_var.size() != c)
        throw ShapeError("batchnorm: channel count mismatch, input has " + std::to_string(c));
    const std::size_t m = x.size() / c;
    const double* xv = x.values().data();

    std::vector<double> mean(c, 0.0), var(c, 0.0);
    if (training) {
        for (std::size_t r = 0; r < m; ++r)
            for (std::size_t ch = 0; ch < c; ++ch) mean[ch] += xv[r * c + ch];
        for (double& v : mean) v /= static_cast<double>(m);
        for (std::size_t r = 0; r < m; ++r)
            for (std::size_t ch = 0; ch < c; ++ch) {
                const double d = xv[r * c + ch] - mean[ch];
                var[ch] += d * d;
            }
        for (double& v : var) v /= static_cast<double>(m);
        auto rm = running_mean.mutable_values();
        auto rv = running_var.mutable_values();
        const double unbias = m > 1 ? static_cast<double>(m) / static_cast<double>(m - 1) : 1.0;
        for (std::size_t ch = 0; ch < c; ++ch) {
            rm[ch] = (1.0 - kBatchNormMomentum) * rm[ch] + kBatchNormMomentum * mean[ch];
            rv[ch] = (1.0 - kBatchNormMomentum) * rv[ch] + kBatchNormMomentum * var[ch] * unbias;
        }
    } else {
        std::copy(running_mean.values().begin(), running_mean.values().end(), mean.begin());
        std::copy(running_var.values().begin(), running_var.values().end(), var.begin());
    }

    std::vector<double> inv_std(c);
    for (std::size_t ch = 0; ch < c; ++ch) inv_std[ch] = 1.0 / std::sqrt(var[ch] + kBatchNormEpsilon);
    std::vector<double> xhat(x.size());
    std::vector<double> out(x.size());
    const double* gv = gamma.values().data();
    const double* bv = beta.values().data();
    for (std::size_t r = 0; r < m; ++r)
        for (std::size_t ch = 0; ch < c; ++ch) {
            const std::size_t i = r * c + ch;
            xhat[i] = (xv[i] - mean[ch]) * inv_std[ch];
            out[i] = gv[ch] * xhat[i] + bv[ch];
        }

    return make_result(x.shape(), std::move(out), {x, gamma, beta},
                       [=, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
                           const double* g = self.grad.data();
                           const double* gv = gamma.values().data();
                           std::vector<double> sum_g(c, 0.0), sum_gx(c, 0.0);
                           for (std::size_t r = 0; r < m; ++r)
                               for (std::size_t ch = 0; ch < c; ++ch) {
                                   sum_g[ch] += g[r * c + ch];
                                   sum_gx[ch] += g[r * c + ch] * xhat[r * c + ch];
                               }
                           if (gamma.requires_grad()) {
                               auto& dg = gamma.node().grad_buffer();
                               for (std::size_t ch = 0; ch < c; ++ch) dg[ch] += sum_gx[ch];
                           }
                           if (beta.requires_grad()) {
                               auto& db = beta.node().grad_buffer();
                               for (std::size_t ch = 0; ch < c; ++ch) db[ch] += sum_g[ch];
                           }
                           if (!x.requires_grad()) return;
                           double* dx = x.node().grad_buffer().data();
                           const double inv_m = 1.0 / static_cast<double>(m);
                           for (std::size_t r = 0; r < m; ++r)
                               for (std::size_t ch = 0; ch < c; ++ch) {
                                   const std::size_t i = r * c + ch;
                                   if (training) {
                                       dx[i] += gv[ch] * inv_std[ch] *
                                                (g[i] - inv_m * sum_g[ch] - xhat[i] * inv_m * sum_gx[ch]);
                                   } else {
                                       dx[i] += gv[ch] * inv_std[ch] * g[i];
                                   }
                               }
                       });
}

Tensor dense(const Tensor& x, const Tensor& weights, const Tensor& bias) {
    expect_rank(x, 2, "dense", "input");
    expect_rank(weights, 2, "dense", "weights");
    const std::size_t n = x.dim(0), in = x.dim(1), out_dim = weights.dim(1);
    if (weights.dim(0) != in || bias.size() != out_dim)
        throw ShapeError("dense: weights " + to_string(weights.shape()) + " incompatible with input " +
                         to_string(x.shape()));
    const double* xv = x.values().data();
    const double* wv = weights.values().data();
    const double* bv = bias.values().data();
    std::vector<double> out(n * out_dim);
    for (std::size_t b = 0; b < n; ++b) {
        double* o = &out[b * out_dim];
        std::copy(bv, bv + out_dim, o);
        for (std::size_t i = 0; i < in; ++i) {
            const double v = xv[b * in + i];
            const double* w = wv + i * out_dim;
            for (std::size_t j = 0; j < out_dim; ++j) o[j] += v * w[j];
        }
    }
    return make_result({n, out_dim}, std::move(out), {x, weights, bias}, [=](Node& self) {
        const double* g = self.grad.data();
        const double* xv = x.values().data();
        const double* wv = weights.values().data();
        double* dx = x.requires_grad() ? x.node().grad_buffer().data() : nullptr;
        double* dw = weights.requires_grad() ? weights.node().grad_buffer().data() : nullptr;
        double* db = bias.requires_grad() ? bias.node().grad_buffer().data() : nullptr;
        for (std::size_t b = 0; b < n; ++b) {
            const double* go = g + b * out_dim;
            if (db)
                for (std::size_t j = 0; j < out_dim; ++j) db[j] += go[j];
            for (std::size_t i = 0; i < in; ++i) {
                const double* w = wv + i * out_dim;
                if (dx) {
                    double acc = 0.0;
                    for (std::size_t j = 0; j < out_dim; ++j) acc += go[j] * w[j];
                    dx[b * in + i] += acc;
                }
                if (dw) {
                    const double v = xv[b * in + i];
                    double* dwr = dw + i * out_dim;
                    for (std::size_t j = 0; j < out_dim; ++j) dwr[j] += v * go[j];
                }
            }
        }
    });
}

Tensor relu(const Tensor& x) {
    std::vector<double> out(x.values().begin(), x.values().end());
    for (double& v : out) v = v > 0.0 ? v : 0.0;
    return make_result(x.shape(), std::move(out), {x}, [x](Node& self) {
        auto& dx = x.node().grad_buffer();
        const auto xv = x.values();
        for (std::size_t i = 0; i < dx.size(); ++i)
            if (xv[i] > 0.0) dx[i] += self.grad[i];
    });
}

Tensor sigmoid(const Tensor& x) {
    std::vector<double> out(x.size());
    const auto xv = x.values();
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double v = xv[i];
        // Branches keep exp() from overflowing for large |v|.
        out[i] = v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
    }
    return make_result(x.shape(), out, {x}, [x, out](Node& self) {
        auto& dx = x.node().grad_buffer();
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += self.grad[i] * out[i] * (1.0 - out[i]);
    });
}

Tensor reshape(const Tensor& x, Shape shape) {
    if (element_count(shape) != x.size())
        throw ShapeError("reshape: cannot view " + to_string(x.shape()) + " as " + to_string(shape));
    std::vector<double> out(x.values().begin(), x.values().end());
    return make_result(std::move(shape), std::move(out), {x}, [x](Node& self) {
        auto& dx = x.node().grad_buffer();
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += self.grad[i];
    });
}

Tensor flatten(const Tensor& x) {
    if (x.rank() < 1) throw ShapeError("flatten: scalar input");
    return reshape(x, {x.dim(0), x.size() / x.dim(0)});
}

Tensor concat_features(const Tensor& a, const Tensor& b) {
    expect_rank(a, 2, "concat", "first input");
    expect_rank(b, 2, "concat", "second input");
    if (a.dim(0) != b.dim(0)) throw ShapeError("concat: batch sizes differ");
    const std::size_t n = a.dim(0), da = a.dim(1), db = b.dim(1);
    std::vector<double> out(n * (da + db));
    for (std::size_t r = 0; r < n; ++r) {
        std::copy_n(a.values().data() + r * da, da, &out[r * (da + db)]);
        std::copy_n(b.values().data() + r * db, db, &out[r * (da + db) + da]);
    }
    return make_result({n, da + db}, std::move(out), {a, b}, [=](Node& self) {
        for (std::size_t r = 0; r < n; ++r) {
            if (a.requires_grad()) {
                auto& ga = a.node().grad_buffer();
                for (std::size_t i = 0; i < da; ++i) ga[r * da + i] += self.grad[r * (da + db) + i];
            }
            if (b.requires_grad()) {
                auto& gb = b.node().grad_buffer();
                for (std::size_t i = 0; i < db; ++i) gb[r * db + i] += self.grad[r * (da + db) + da + i];
            }
        }
    });
}

Tensor mean_features(const Tensor& x) {
    expect_rank(x, 2, "mean", "input");
    const std::size_t n = x.dim(0), d = x.dim(1);
    std::vector<double> out(n, 0.0);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t i = 0; i < d; ++i) out[r] += x[r * d + i];
        out[r] /= static_cast<double>(d);
    }
    return make_result({n, 1}, std::move(out), {x}, [=](Node& self) {
        auto& dx = x.node().grad_buffer();
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t i = 0; i < d; ++i) dx[r * d + i] += self.grad[r] / static_cast<double>(d);
    });
}

Tensor scale_rows(const Tensor& x, const Tensor& scale) {
    expect_rank(x, 2, "scale_rows", "input");
    if (scale.size() != x.dim(0)) throw ShapeError("scale_rows: need one scale per row");
    const std::size_t n = x.dim(0), d = x.dim(1);
    std::vector<double> out(x.size());
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t i = 0; i < d; ++i) out[r * d + i] = x[r * d + i] * scale[r];
    return make_result(x.shape(), std::move(out), {x, scale}, [=](Node& self) {
        for (std::size_t r = 0; r < n; ++r) {
            double acc = 0.0;
            for (std::size_t i = 0; i < d; ++i) {
                const double g = self.grad[r * d + i];
                acc += g * x[r * d + i];
                if (x.requires_grad()) x.node().grad_buffer()[r * d + i] += g * scale[r];
            }
            if (scale.requires_grad()) scale.node().grad_buffer()[r] += acc;
        }
    });
}

Tensor select_column(const Tensor& x, std::size_t index) {
    expect_rank(x, 2, "select_column", "input");
    if (index >= x.dim(1)) throw ShapeError("select_column: index out of range");
    const std::size_t n = x.dim(0), d = x.dim(1);
    std::vector<double> out(n);
    for (std::size_t r = 0; r < n; ++r) out[r] = x[r * d + index];
    return make_result({n, 1}, std::move(out), {x}, [=](Node& self) {
        auto& dx = x.node().grad_buffer();
        for (std::size_t r = 0; r < n; ++r) dx[r * d + index] += self.grad[r];
    });
}

Tensor l2_normalize_rows(const Tensor& x, std::vector<std::size_t>* degenerate_rows) {
    expect_rank(x, 2, "l2_normalize", "input");
    const std::size_t n = x.dim(0), d = x.dim(1);
    std::vector<double> out(x.size(), 0.0);
    std::vector<double> norms(n, 0.0);
    for (std::size_t r = 0; r < n; ++r) {
        double s = 0.0;
        for (std::size_t i = 0; i < d; ++i) s += x[r * d + i] * x[r * d + i];
        norms[r] = std::sqrt(s);
        if (norms[r] == 0.0) {
            out[r * d] = 1.0;
            if (degenerate_rows) degenerate_rows->push_back(r);
            continue;
        }
        for (std::size_t i = 0; i < d; ++i) out[r * d + i] = x[r * d + i] / norms[r];
    }
    return make_result(x.shape(), out, {x}, [=](Node& self) {
        auto& dx = x.node().grad_buffer();
        for (std::size_t r = 0; r < n; ++r) {
            if (norms[r] == 0.0) continue;
            double dot = 0.0;
            for (std::size_t i = 0; i < d; ++i) dot += self.grad[r * d + i] * out[r * d + i];
            for (std::size_t i = 0; i < d; ++i)
                dx[r * d + i] += (self.grad[r * d + i] - out[r * d + i] * dot) / norms[r];
        }
    });
}

Tensor sum(const Tensor& x) {
    double s = 0.0;
    for (double v : x.values()) s += v;
    return make_result({1}, {s}, {x}, [x](Node& self) {
        auto& dx = x.node().grad_buffer();
        for (double& g : dx) g += self.grad[0];
    });
}

Tensor sum_squares(const Tensor& x) {
    double s = 0.0;
    for (double v : x.values()) s += v * v;
    return make_result({1}, {s}, {x}, [x](Node& self) {
        auto& dx = x.node().grad_buffer();
        const auto xv = x.values();
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += 2.0 * xv[i] * self.grad[0];
    });
}

Tensor add(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) throw ShapeError("add: shapes differ");
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
    return make_result(a.shape(), std::move(out), {a, b}, [a, b](Node& self) {
        for (const auto* t : {&a, &b}) {
            if (!t->requires_grad()) continue;
            auto& g = t->node().grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
    });
}

Tensor mul_scalar(const Tensor& x, double s) {
    std::vector<double> out(x.values().begin(), x.values().end());
    for (double& v : out) v *= s;
    return make_result(x.shape(), std::move(out), {x}, [x, s](Node& self) {
        auto& dx = x.node().grad_buffer();
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += self.grad[i] * s;
    });
}

}  // namespace maglive::nn
