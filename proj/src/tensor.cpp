#include "veil/tensor.hpp"

#include <algorithm>
#include <cmath>

namespace veil {

size_t numel(const std::vector<size_t>& shape) {
    size_t n = 1;
    for (size_t d : shape) n *= d;
    return n;
}

std::string shape_str(const std::vector<size_t>& shape) {
    std::string s = "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

TensorPtr make_tensor(std::vector<size_t> shape, std::vector<double> value,
                      bool requires_grad) {
    if (numel(shape) != value.size())
        throw TensorError("tensor shape " + shape_str(shape) +
                          " does not match data length " +
                          std::to_string(value.size()));
    auto t = std::make_shared<TensorData>();
    t->shape = std::move(shape);
    t->value = std::move(value);
    t->requires_grad = requires_grad;
    return t;
}

TensorPtr make_tensor(std::vector<size_t> shape, double fill,
                      bool requires_grad) {
    std::vector<double> v(numel(shape), fill);
    return make_tensor(std::move(shape), std::move(v), requires_grad);
}

namespace {

void require_2d(const TensorPtr& t, const char* op) {
    if (t->shape.size() != 2)
        throw TensorError(std::string(op) + ": expected 2-D tensor, got " +
                          shape_str(t->shape));
}

bool any_requires_grad(const std::vector<TensorPtr>& ts) {
    for (const auto& t : ts)
        if (t->requires_grad) return true;
    return false;
}

}  // namespace

TensorPtr Tape::record(const char* op, std::vector<TensorPtr> inputs,
                       std::vector<size_t> out_shape,
                       std::vector<double> out_value) {
    for (double v : out_value)
        if (!std::isfinite(v))
            throw TensorError(std::string(op) + " produced a non-finite value");
    auto out = make_tensor(std::move(out_shape), std::move(out_value),
                           any_requires_grad(inputs));
    nodes_.push_back(Node{op, std::move(inputs), out, nullptr});
    return out;
}

TensorPtr Tape::matmul(const TensorPtr& a, const TensorPtr& b,
                       bool transpose_b) {
    require_2d(a, "matmul");
    require_2d(b, "matmul");
    const size_t m = a->shape[0], k = a->shape[1];
    const size_t bk = transpose_b ? b->shape[1] : b->shape[0];
    const size_t n = transpose_b ? b->shape[0] : b->shape[1];
    if (k != bk)
        throw TensorError("matmul: incompatible shapes " + shape_str(a->shape) +
                          " and " + shape_str(b->shape) +
                          (transpose_b ? " (transposed)" : ""));
    std::vector<double> out(m * n, 0.0);
    const double* A = a->value.data();
    const double* B = b->value.data();
    if (!transpose_b) {
        for (size_t i = 0; i < m; ++i) {
            double* orow = out.data() + i * n;
            for (size_t kk = 0; kk < k; ++kk) {
                const double aik = A[i * k + kk];
                const double* brow = B + kk * n;
                for (size_t j = 0; j < n; ++j) orow[j] += aik * brow[j];
            }
        }
    } else {
        for (size_t i = 0; i < m; ++i) {
            const double* arow = A + i * k;
            for (size_t j = 0; j < n; ++j) {
                const double* brow = B + j * k;
                double acc = 0.0;
                for (size_t kk = 0; kk < k; ++kk) acc += arow[kk] * brow[kk];
                out[i * n + j] = acc;
            }
        }
    }
    auto r = record("matmul", {a, b}, {m, n}, std::move(out));
    set_back([a, b, r, m, n, k, transpose_b] {
        const double* G = r->grad.data();
        const double* A = a->value.data();
        const double* B = b->value.data();
        if (a->requires_grad) {
            a->ensure_grad();
            double* dA = a->grad.data();
            if (!transpose_b) {
                // dA[i,kk] += sum_j G[i,j] * B[kk,j]
                for (size_t i = 0; i < m; ++i)
                    for (size_t kk = 0; kk < k; ++kk) {
                        const double* grow = G + i * n;
                        const double* brow = B + kk * n;
                        double acc = 0.0;
                        for (size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
                        dA[i * k + kk] += acc;
                    }
            } else {
                // dA[i,:] += sum_j G[i,j] * B[j,:]
                for (size_t i = 0; i < m; ++i)
                    for (size_t j = 0; j < n; ++j) {
                        const double g = G[i * n + j];
                        const double* brow = B + j * k;
                        double* darow = dA + i * k;
                        for (size_t kk = 0; kk < k; ++kk)
                            darow[kk] += g * brow[kk];
                    }
            }
        }
        if (b->requires_grad) {
            b->ensure_grad();
            double* dB = b->grad.data();
            if (!transpose_b) {
                // dB[kk,:] += A[i,kk] * G[i,:]
                for (size_t i = 0; i < m; ++i)
                    for (size_t kk = 0; kk < k; ++kk) {
                        const double aik = A[i * k + kk];
                        const double* grow = G + i * n;
                        double* dbrow = dB + kk * n;
                        for (size_t j = 0; j < n; ++j) dbrow[j] += aik * grow[j];
                    }
            } else {
                // dB[j,:] += G[i,j] * A[i,:]
                for (size_t i = 0; i < m; ++i)
                    for (size_t j = 0; j < n; ++j) {
                        const double g = G[i * n + j];
                        const double* arow = A + i * k;
                        double* dbrow = dB + j * k;
                        for (size_t kk = 0; kk < k; ++kk)
                            dbrow[kk] += g * arow[kk];
                    }
            }
        }
    });
    return r;
}

TensorPtr Tape::add(const TensorPtr& a, const TensorPtr& b) {
    const bool same = a->shape == b->shape;
    const bool bias = !same && b->shape.size() == 1 && !a->shape.empty() &&
                      b->shape[0] == a->shape.back();
    if (!same && !bias)
        throw TensorError("add: incompatible shapes " + shape_str(a->shape) +
                          " and " + shape_str(b->shape));
    std::vector<double> out(a->value);
    if (same) {
        for (size_t i = 0; i < out.size(); ++i) out[i] += b->value[i];
    } else {
        const size_t n = b->value.size();
        for (size_t i = 0; i < out.size(); ++i) out[i] += b->value[i % n];
    }
    auto r = record("add", {a, b}, a->shape, std::move(out));
    set_back([a, b, r, same] {
        if (a->requires_grad) {
            a->ensure_grad();
            for (size_t i = 0; i < a->grad.size(); ++i)
                a->grad[i] += r->grad[i];
        }
        if (b->requires_grad) {
            b->ensure_grad();
            if (same) {
                for (size_t i = 0; i < b->grad.size(); ++i)
                    b->grad[i] += r->grad[i];
            } else {
                const size_t n = b->grad.size();
                for (size_t i = 0; i < r->grad.size(); ++i)
                    b->grad[i % n] += r->grad[i];
            }
        }
    });
    return r;
}

TensorPtr Tape::mul(const TensorPtr& a, const TensorPtr& b) {
    if (a->shape != b->shape)
        throw TensorError("mul: incompatible shapes " + shape_str(a->shape) +
                          " and " + shape_str(b->shape));
    std::vector<double> out(a->value);
    for (size_t i = 0; i < out.size(); ++i) out[i] *= b->value[i];
    auto r = record("mul", {a, b}, a->shape, std::move(out));
    set_back([a, b, r] {
        if (a->requires_grad) {
            a->ensure_grad();
            for (size_t i = 0; i < a->grad.size(); ++i)
                a->grad[i] += r->grad[i] * b->value[i];
        }
        if (b->requires_grad) {
            b->ensure_grad();
            for (size_t i = 0; i < b->grad.size(); ++i)
                b->grad[i] += r->grad[i] * a->value[i];
        }
    });
    return r;
}

TensorPtr Tape::scale(const TensorPtr& a, double s) {
    std::vector<double> out(a->value);
    for (double& v : out) v *= s;
    auto r = record("scale", {a}, a->shape, std::move(out));
    set_back([a, r, s] {
        if (!a->requires_grad) return;
        a->ensure_grad();
        for (size_t i = 0; i < a->grad.size(); ++i) a->grad[i] += r->grad[i] * s;
    });
    return r;
}

TensorPtr Tape::relu(const TensorPtr& a) {
    std::vector<double> out(a->value);
    for (double& v : out) v = v > 0.0 ? v : 0.0;
    auto r = record("relu", {a}, a->shape, std::move(out));
    set_back([a, r] {
        if (!a->requires_grad) return;
        a->ensure_grad();
        for (size_t i = 0; i < a->grad.size(); ++i)
            if (a->value[i] > 0.0) a->grad[i] += r->grad[i];
    });
    return r;
}

TensorPtr Tape::layer_norm(const TensorPtr& x, const TensorPtr& gamma,
                           const TensorPtr& beta) {
    if (x->shape.empty())
        throw TensorError("layer_norm: scalar input " + shape_str(x->shape));
    const size_t n = x->shape.back();
    if (gamma->value.size() != n || beta->value.size() != n)
        throw TensorError("layer_norm: affine shapes " +
                          shape_str(gamma->shape) + "/" + shape_str(beta->shape) +
                          " do not match last axis of " + shape_str(x->shape));
    const size_t rows = x->value.size() / n;
    std::vector<double> out(x->value.size());
    std::vector<double> xhat(x->value.size());
    std::vector<double> inv_std(rows);
    for (size_t rI = 0; rI < rows; ++rI) {
        const double* xr = x->value.data() + rI * n;
        double mu = 0.0;
        for (size_t i = 0; i < n; ++i) mu += xr[i];
        mu /= static_cast<double>(n);
        double var = 0.0;
        for (size_t i = 0; i < n; ++i) {
            const double d = xr[i] - mu;
            var += d * d;
        }
        var /= static_cast<double>(n);
        const double is = 1.0 / std::sqrt(var + kLayerNormEps);
        inv_std[rI] = is;
        for (size_t i = 0; i < n; ++i) {
            const double h = (xr[i] - mu) * is;
            xhat[rI * n + i] = h;
            out[rI * n + i] = h * gamma->value[i] + beta->value[i];
        }
    }
    auto r = record("layer_norm", {x, gamma, beta}, x->shape, std::move(out));
    auto xh = std::make_shared<std::vector<double>>(std::move(xhat));
    auto istd = std::make_shared<std::vector<double>>(std::move(inv_std));
    set_back([x, gamma, beta, r, xh, istd, n, rows] {
        const double* G = r->grad.data();
        const double* H = xh->data();
        if (gamma->requires_grad) {
            gamma->ensure_grad();
            for (size_t rI = 0; rI < rows; ++rI)
                for (size_t i = 0; i < n; ++i)
                    gamma->grad[i] += G[rI * n + i] * H[rI * n + i];
        }
        if (beta->requires_grad) {
            beta->ensure_grad();
            for (size_t rI = 0; rI < rows; ++rI)
                for (size_t i = 0; i < n; ++i) beta->grad[i] += G[rI * n + i];
        }
        if (x->requires_grad) {
            x->ensure_grad();
            const double inv_n = 1.0 / static_cast<double>(n);
            for (size_t rI = 0; rI < rows; ++rI) {
                // dxhat = dy * gamma; dx = (dxhat - mean(dxhat)
                //         - xhat * mean(dxhat*xhat)) * inv_std
                double m1 = 0.0, m2 = 0.0;
                for (size_t i = 0; i < n; ++i) {
                    const double dh = G[rI * n + i] * gamma->value[i];
                    m1 += dh;
                    m2 += dh * H[rI * n + i];
                }
                m1 *= inv_n;
                m2 *= inv_n;
                const double is = (*istd)[rI];
                for (size_t i = 0; i < n; ++i) {
                    const double dh = G[rI * n + i] * gamma->value[i];
                    x->grad[rI * n + i] +=
                        (dh - m1 - H[rI * n + i] * m2) * is;
                }
            }
        }
    });
    return r;
}

TensorPtr Tape::softmax(const TensorPtr& a) {
    if (a->shape.empty())
        throw TensorError("softmax: scalar input");
    const size_t n = a->shape.back();
    const size_t rows = a->value.size() / n;
    std::vector<double> out(a->value.size());
    for (size_t rI = 0; rI < rows; ++rI) {
        const double* xr = a->value.data() + rI * n;
        double* yr = out.data() + rI * n;
        double mx = xr[0];
        for (size_t i = 1; i < n; ++i) mx = std::max(mx, xr[i]);
        double z = 0.0;
        for (size_t i = 0; i < n; ++i) {
            yr[i] = std::exp(xr[i] - mx);
            z += yr[i];
        }
        const double inv = 1.0 / z;
        for (size_t i = 0; i < n; ++i) yr[i] *= inv;
    }
    auto r = record("softmax", {a}, a->shape, std::move(out));
    set_back([a, r, n, rows] {
        if (!a->requires_grad) return;
        a->ensure_grad();
        for (size_t rI = 0; rI < rows; ++rI) {
            const double* y = r->value.data() + rI * n;
            const double* g = r->grad.data() + rI * n;
            double dot = 0.0;
            for (size_t i = 0; i < n; ++i) dot += y[i] * g[i];
            double* dx = a->grad.data() + rI * n;
            for (size_t i = 0; i < n; ++i) dx[i] += y[i] * (g[i] - dot);
        }
    });
    return r;
}

TensorPtr Tape::gather_rows(const TensorPtr& table, const std::vector<int>& ids) {
    require_2d(table, "gather_rows");
    const size_t vocab = table->shape[0], d = table->shape[1];
    for (int id : ids)
        if (id < 0 || static_cast<size_t>(id) >= vocab)
            throw TensorError("gather_rows: index " + std::to_string(id) +
                              " out of range [0," + std::to_string(vocab) + ")");
    std::vector<double> out(ids.size() * d);
    for (size_t i = 0; i < ids.size(); ++i)
        std::copy_n(table->value.data() + static_cast<size_t>(ids[i]) * d, d,
                    out.data() + i * d);
    auto r = record("gather_rows", {table}, {ids.size(), d}, std::move(out));
    auto idc = std::make_shared<std::vector<int>>(ids);
    set_back([table, r, idc, d] {
        if (!table->requires_grad) return;
        table->ensure_grad();
        for (size_t i = 0; i < idc->size(); ++i) {
            double* dst =
                table->grad.data() + static_cast<size_t>((*idc)[i]) * d;
            const double* src = r->grad.data() + i * d;
            for (size_t j = 0; j < d; ++j) dst[j] += src[j];
        }
    });
    return r;
}

TensorPtr Tape::reshape(const TensorPtr& a, std::vector<size_t> new_shape) {
    if (numel(new_shape) != a->value.size())
        throw TensorError("reshape: " + shape_str(a->shape) + " to " +
                          shape_str(new_shape) + " changes element count");
    auto r = record("reshape", {a}, std::move(new_shape),
                    std::vector<double>(a->value));
    set_back([a, r] {
        if (!a->requires_grad) return;
        a->ensure_grad();
        for (size_t i = 0; i < a->grad.size(); ++i) a->grad[i] += r->grad[i];
    });
    return r;
}

TensorPtr Tape::slice_rows(const TensorPtr& a, size_t begin, size_t end) {
    require_2d(a, "slice_rows");
    const size_t rows = a->shape[0], cols = a->shape[1];
    if (begin > end || end > rows)
        throw TensorError("slice_rows: range [" + std::to_string(begin) + "," +
                          std::to_string(end) + ") invalid for " +
                          shape_str(a->shape));
    std::vector<double> out(a->value.begin() + begin * cols,
                            a->value.begin() + end * cols);
    auto r = record("slice_rows", {a}, {end - begin, cols}, std::move(out));
    set_back([a, r, begin, cols] {
        if (!a->requires_grad) return;
        a->ensure_grad();
        double* dst = a->grad.data() + begin * cols;
        for (size_t i = 0; i < r->grad.size(); ++i) dst[i] += r->grad[i];
    });
    return r;
}

TensorPtr Tape::slice_cols(const TensorPtr& a, size_t begin, size_t end) {
    require_2d(a, "slice_cols");
    const size_t rows = a->shape[0], cols = a->shape[1];
    if (begin > end || end > cols)
        throw TensorError("slice_cols: range [" + std::to_string(begin) + "," +
                          std::to_string(end) + ") invalid for " +
                          shape_str(a->shape));
    const size_t w = end - begin;
    std::vector<double> out(rows * w);
    for (size_t i = 0; i < rows; ++i)
        std::copy_n(a->value.data() + i * cols + begin, w, out.data() + i * w);
    auto r = record("slice_cols", {a}, {rows, w}, std::move(out));
    set_back([a, r, begin, cols, rows, w] {
        if (!a->requires_grad) return;
        a->ensure_grad();
        for (size_t i = 0; i < rows; ++i) {
            double* dst = a->grad.data() + i * cols + begin;
            const double* src = r->grad.data() + i * w;
            for (size_t j = 0; j < w; ++j) dst[j] += src[j];
        }
    });
    return r;
}

TensorPtr Tape::concat_rows(const std::vector<TensorPtr>& parts) {
    if (parts.empty()) throw TensorError("concat_rows: no inputs");
    size_t cols = 0, rows = 0;
    for (const auto& p : parts) {
        require_2d(p, "concat_rows");
        if (cols == 0) cols = p->shape[1];
        if (p->shape[1] != cols)
            throw TensorError("concat_rows: column mismatch, " +
                              shape_str(parts[0]->shape) + " vs " +
                              shape_str(p->shape));
        rows += p->shape[0];
    }
    std::vector<double> out;
    out.reserve(rows * cols);
    for (const auto& p : parts)
        out.insert(out.end(), p->value.begin(), p->value.end());
    auto r = record("concat_rows", parts, {rows, cols}, std::move(out));
    set_back([parts, r] {
        size_t off = 0;
        for (const auto& p : parts) {
            if (p->requires_grad) {
                p->ensure_grad();
                for (size_t i = 0; i < p->grad.size(); ++i)
                    p->grad[i] += r->grad[off + i];
            }
            off += p->value.size();
        }
    });
    return r;
}

TensorPtr Tape::mean(const TensorPtr& a) {
    if (a->value.empty()) throw TensorError("mean: empty tensor");
    double acc = 0.0;
    for (double v : a->value) acc += v;
    const double inv = 1.0 / static_cast<double>(a->value.size());
    auto r = record("mean", {a}, {1}, {acc * inv});
    set_back([a, r, inv] {
        if (!a->requires_grad) return;
        a->ensure_grad();
        const double g = r->grad[0] * inv;
        for (double& d : a->grad) d += g;
    });
    return r;
}

TensorPtr Tape::cross_entropy(const TensorPtr& logits,
                              const std::vector<int>& targets) {
    require_2d(logits, "cross_entropy");
    const size_t rows = logits->shape[0], vocab = logits->shape[1];
    if (targets.size() != rows)
        throw TensorError("cross_entropy: " + std::to_string(targets.size()) +
                          " targets for " + std::to_string(rows) +
                          " logit rows");
    for (int t : targets)
        if (t < 0 || static_cast<size_t>(t) >= vocab)
            throw TensorError("cross_entropy: target " + std::to_string(t) +
                              " out of range [0," + std::to_string(vocab) + ")");
    // -log softmax via logsumexp; also cache probabilities for backward.
    std::vector<double> out(rows);
    std::vector<double> probs(rows * vocab);
    for (size_t rI = 0; rI < rows; ++rI) {
        const double* x = logits->value.data() + rI * vocab;
        double mx = x[0];
        for (size_t i = 1; i < vocab; ++i) mx = std::max(mx, x[i]);
        double z = 0.0;
        double* pr = probs.data() + rI * vocab;
        for (size_t i = 0; i < vocab; ++i) {
            pr[i] = std::exp(x[i] - mx);
            z += pr[i];
        }
        const double inv = 1.0 / z;
        for (size_t i = 0; i < vocab; ++i) pr[i] *= inv;
        const double lse = mx + std::log(z);
        out[rI] = lse - x[targets[rI]];
        if (out[rI] < 0.0) out[rI] = 0.0;  // guard tiny negative rounding
    }
    auto r = record("cross_entropy", {logits}, {rows}, std::move(out));
    auto pr = std::make_shared<std::vector<double>>(std::move(probs));
    auto tg = std::make_shared<std::vector<int>>(targets);
    set_back([logits, r, pr, tg, rows, vocab] {
        if (!logits->requires_grad) return;
        logits->ensure_grad();
        for (size_t rI = 0; rI < rows; ++rI) {
            const double g = r->grad[rI];
            const double* p = pr->data() + rI * vocab;
            double* dx = logits->grad.data() + rI * vocab;
            for (size_t i = 0; i < vocab; ++i) dx[i] += g * p[i];
            dx[(*tg)[rI]] -= g;
        }
    });
    return r;
}

TensorPtr Tape::cross_entropy(const TensorPtr& logits, int target) {
    if (logits->shape.size() != 1)
        throw TensorError("cross_entropy: expected 1-D logits, got " +
                          shape_str(logits->shape));
    auto rows = reshape(logits, {1, logits->shape[0]});
    auto ce = cross_entropy(rows, std::vector<int>{target});
    return reshape(ce, {1});
}

void Tape::backward(const TensorPtr& root) {
    if (root->value.size() != 1)
        throw TensorError("backward: root must be scalar, got " +
                          shape_str(root->shape));
    // Tensors produced by this tape carry per-pass grads; only leaves keep
    // accumulating across calls.
    for (auto& n : nodes_)
        if (n.output->has_grad()) n.output->zero_grad();
    root->ensure_grad();
    root->grad[0] += 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        if (!it->output->requires_grad || !it->output->has_grad()) continue;
        if (it->back) it->back();
    }
}

double check_gradient(
    const std::function<TensorPtr(Tape&, const TensorPtr&)>& f,
    const TensorPtr& x, double h,
    const std::vector<size_t>* coords) {
    if (h <= 0.0) throw TensorError("check_gradient: h must be positive");
    auto probe = make_tensor(x->shape, x->value, true);
    Tape tape;
    auto loss = f(tape, probe);
    if (loss->value.size() != 1)
        throw TensorError("check_gradient: f must return a scalar");
    tape.backward(loss);
    std::vector<double> analytic =
        probe->has_grad() ? probe->grad
                          : std::vector<double>(probe->value.size(), 0.0);

    auto eval = [&](const std::vector<double>& v) {
        auto t = make_tensor(x->shape, v, false);
        Tape tp;
        return f(tp, t)->value[0];
    };

    std::vector<size_t> all;
    if (!coords) {
        all.resize(x->value.size());
        for (size_t i = 0; i < all.size(); ++i) all[i] = i;
    }
    const std::vector<size_t>& cs = coords ? *coords : all;

    double worst = 0.0;
    std::vector<double> v = x->value;
    for (size_t c : cs) {
        const double keep = v[c];
        v[c] = keep + h;
        const double fp = eval(v);
        v[c] = keep - h;
        const double fm = eval(v);
        v[c] = keep;
        const double numeric = (fp - fm) / (2.0 * h);
        const double a = analytic[c];
        const double err = std::abs(a - numeric) / std::max(1.0, std::abs(a));
        worst = std::max(worst, err);
    }
    return worst;
}

}  // namespace veil
