#include "dragsplat/ad.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace dragsplat::ad {

namespace {

Var make_node(Tensor val, std::vector<Var> parents, std::function<void(Node&)> back) {
    auto n = std::make_shared<Node>();
    n->val = std::move(val);
    n->parents = std::move(parents);
    for (const auto& p : n->parents)
        if (p->requires_grad) n->requires_grad = true;
    if (n->requires_grad) n->back = std::move(back);
    return n;
}

void check_same_shape(const Var& a, const Var& b, const char* op) {
    if (!a->val.same_shape(b->val))
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a->val.shape) +
                                    " vs " + shape_str(b->val.shape));
}

double stable_softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }

}  // namespace

Var constant(Tensor t) {
    auto n = std::make_shared<Node>();
    n->val = std::move(t);
    return n;
}

Var param(Tensor t) {
    auto n = std::make_shared<Node>();
    n->val = std::move(t);
    n->requires_grad = true;
    return n;
}

void backward(const Var& root) {
    if (root->val.numel() != 1) throw std::invalid_argument("backward: root must be scalar");
    // Iterative post-order DFS for a reverse topological order.
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, size_t>> stack;
    stack.emplace_back(root.get(), 0);
    visited.insert(root.get());
    while (!stack.empty()) {
        auto& [n, idx] = stack.back();
        if (idx < n->parents.size()) {
            Node* p = n->parents[idx].get();
            ++idx;
            if (p->requires_grad && !visited.count(p)) {
                visited.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }
    root->g().d[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->back) n->back(*n);
    }
}

Var add(const Var& a, const Var& b) {
    check_same_shape(a, b, "add");
    Tensor v(a->val.shape);
    v.d = a->val.d + b->val.d;
    return make_node(std::move(v), {a, b}, [a, b](Node& n) {
        if (a->requires_grad) a->g().d += n.g().d;
        if (b->requires_grad) b->g().d += n.g().d;
    });
}

Var sub(const Var& a, const Var& b) {
    check_same_shape(a, b, "sub");
    Tensor v(a->val.shape);
    v.d = a->val.d - b->val.d;
    return make_node(std::move(v), {a, b}, [a, b](Node& n) {
        if (a->requires_grad) a->g().d += n.g().d;
        if (b->requires_grad) b->g().d -= n.g().d;
    });
}

Var mul(const Var& a, const Var& b) {
    check_same_shape(a, b, "mul");
    Tensor v(a->val.shape);
    v.d = a->val.d * b->val.d;
    return make_node(std::move(v), {a, b}, [a, b](Node& n) {
        if (a->requires_grad) a->g().d += n.g().d * b->val.d;
        if (b->requires_grad) b->g().d += n.g().d * a->val.d;
    });
}

Var neg(const Var& a) { return scale(a, -1.0); }

Var scale(const Var& a, double s) {
    Tensor v(a->val.shape);
    v.d = a->val.d * s;
    return make_node(std::move(v), {a}, [a, s](Node& n) {
        if (a->requires_grad) a->g().d += n.g().d * s;
    });
}

Var add_scalar(const Var& a, double s) {
    Tensor v(a->val.shape);
    v.d = a->val.d + s;
    return make_node(std::move(v), {a}, [a](Node& n) {
        if (a->requires_grad) a->g().d += n.g().d;
    });
}

Var sigmoid(const Var& a) {
    Tensor v(a->val.shape);
    v.d = 1.0 / (1.0 + (-a->val.d).exp());
    Eigen::ArrayXd y = v.d;
    return make_node(std::move(v), {a}, [a, y](Node& n) {
        if (a->requires_grad) a->g().d += n.g().d * y * (1.0 - y);
    });
}

Var silu(const Var& a) {
    Eigen::ArrayXd s = 1.0 / (1.0 + (-a->val.d).exp());
    Tensor v(a->val.shape);
    v.d = a->val.d * s;
    Eigen::ArrayXd x = a->val.d;
    return make_node(std::move(v), {a}, [a, s, x](Node& n) {
        if (a->requires_grad) a->g().d += n.g().d * (s + x * s * (1.0 - s));
    });
}

Var softplus(const Var& a) {
    Tensor v(a->val.shape);
    for (long i = 0; i < v.numel(); ++i) v.d[i] = stable_softplus(a->val.d[i]);
    return make_node(std::move(v), {a}, [a](Node& n) {
        if (!a->requires_grad) return;
        a->g().d += n.g().d * (1.0 / (1.0 + (-a->val.d).exp()));
    });
}

Var softplus_clamp(const Var& a, double lo, double hi) {
    Tensor v(a->val.shape);
    Eigen::ArrayXd active(a->val.numel());
    for (long i = 0; i < v.numel(); ++i) {
        double sp = stable_softplus(a->val.d[i]);
        double c = std::clamp(sp, lo, hi);
        v.d[i] = c;
        active[i] = (sp > lo && sp < hi) ? 1.0 : 0.0;
    }
    return make_node(std::move(v), {a}, [a, active](Node& n) {
        if (!a->requires_grad) return;
        a->g().d += n.g().d * active * (1.0 / (1.0 + (-a->val.d).exp()));
    });
}

Var relu(const Var& a) {
    Tensor v(a->val.shape);
    v.d = a->val.d.max(0.0);
    return make_node(std::move(v), {a}, [a](Node& n) {
        if (a->requires_grad) a->g().d += n.g().d * (a->val.d > 0.0).cast<double>();
    });
}

Var matmul(const Var& a, long m, long k, const Var& b, long n) {
    if (a->val.numel() != m * k || b->val.numel() != k * n)
        throw std::invalid_argument("matmul: size mismatch");
    Tensor v({static_cast<int>(m), static_cast<int>(n)});
    v.mat(m, n) = a->val.mat(m, k) * b->val.mat(k, n);
    return make_node(std::move(v), {a, b}, [a, b, m, k, n](Node& node) {
        auto g = node.g().mat(m, n);
        if (a->requires_grad) a->g().mat(m, k) += g * b->val.mat(k, n).transpose();
        if (b->requires_grad) b->g().mat(k, n) += a->val.mat(m, k).transpose() * g;
    });
}

Var transpose(const Var& a, long m, long n) {
    Tensor v({static_cast<int>(n), static_cast<int>(m)});
    v.mat(n, m) = a->val.mat(m, n).transpose();
    return make_node(std::move(v), {a}, [a, m, n](Node& node) {
        if (a->requires_grad) a->g().mat(m, n) += node.g().mat(n, m).transpose();
    });
}

Var add_row_bias(const Var& a, long m, long n, const Var& bias) {
    if (bias->val.numel() != n) throw std::invalid_argument("add_row_bias: size mismatch");
    Tensor v(a->val.shape);
    auto vm = v.mat(m, n);
    vm = a->val.mat(m, n);
    vm.rowwise() += bias->val.mat(1, n).row(0);
    return make_node(std::move(v), {a, bias}, [a, bias, m, n](Node& node) {
        auto g = node.g().mat(m, n);
        if (a->requires_grad) a->g().mat(m, n) += g;
        if (bias->requires_grad) bias->g().mat(1, n) += g.colwise().sum();
    });
}

Var softmax_rows(const Var& a, long m, long n) {
    Tensor v(a->val.shape);
    auto src = a->val.mat(m, n);
    auto dst = v.mat(m, n);
    for (long i = 0; i < m; ++i) {
        Eigen::ArrayXd row = src.row(i).array();
        row -= row.maxCoeff();
        row = row.exp();
        dst.row(i) = (row / row.sum()).matrix();
    }
    Tensor y = v;
    return make_node(std::move(v), {a}, [a, y, m, n](Node& node) {
        if (!a->requires_grad) return;
        auto g = node.g().mat(m, n);
        auto ym = y.mat(m, n);
        auto ga = a->g().mat(m, n);
        for (long i = 0; i < m; ++i) {
            double dot = g.row(i).dot(ym.row(i));
            ga.row(i) += (g.row(i).array() - dot).matrix().cwiseProduct(ym.row(i));
        }
    });
}

Var rows_normalize(const Var& a, long rows, long cols, double eps) {
    Tensor v(a->val.shape);
    auto src = a->val.mat(rows, cols);
    auto dst = v.mat(rows, cols);
    for (long i = 0; i < rows; ++i) dst.row(i) = src.row(i) / (src.row(i).norm() + eps);
    return make_node(std::move(v), {a}, [a, rows, cols, eps](Node& node) {
        if (!a->requires_grad) return;
        auto g = node.g().mat(rows, cols);
        auto x = a->val.mat(rows, cols);
        auto ga = a->g().mat(rows, cols);
        for (long i = 0; i < rows; ++i) {
            double nrm = x.row(i).norm();
            double den = nrm + eps;
            Eigen::RowVectorXd xi = x.row(i);
            Eigen::RowVectorXd gi = g.row(i);
            // y = x / (|x| + eps); dy/dx = I/den - x x^T / (|x| den^2)
            if (nrm > 0.0)
                ga.row(i) += gi / den - xi * (gi.dot(xi) / (nrm * den * den));
            else
                ga.row(i) += gi / den;
        }
    });
}

Var sum(const Var& a) {
    Tensor v = Tensor::scalar(a->val.d.sum());
    return make_node(std::move(v), {a}, [a](Node& n) {
        if (a->requires_grad) a->g().d += n.g().d[0];
    });
}

Var mean(const Var& a) {
    double inv = 1.0 / static_cast<double>(a->val.numel());
    Tensor v = Tensor::scalar(a->val.d.mean());
    return make_node(std::move(v), {a}, [a, inv](Node& n) {
        if (a->requires_grad) a->g().d += n.g().d[0] * inv;
    });
}

Var sum_sq_diff(const Var& a, const Var& b) {
    check_same_shape(a, b, "sum_sq_diff");
    Eigen::ArrayXd diff = a->val.d - b->val.d;
    Tensor v = Tensor::scalar((diff * diff).sum());
    return make_node(std::move(v), {a, b}, [a, b, diff](Node& n) {
        double g = n.g().d[0];
        if (a->requires_grad) a->g().d += 2.0 * g * diff;
        if (b->requires_grad) b->g().d -= 2.0 * g * diff;
    });
}

Var mse(const Var& a, const Var& b) {
    return scale(sum_sq_diff(a, b), 1.0 / static_cast<double>(a->val.numel()));
}

Var reshape(const Var& a, std::vector<int> shape) {
    if (Tensor::numel_of(shape) != a->val.numel())
        throw std::invalid_argument("reshape: element count mismatch");
    Tensor v(shape);
    v.d = a->val.d;
    return make_node(std::move(v), {a}, [a](Node& n) {
        if (a->requires_grad) a->g().d += n.g().d;
    });
}

Var concat_channels(const std::vector<Var>& xs) {
    if (xs.empty()) throw std::invalid_argument("concat_channels: empty input");
    int H = xs[0]->val.dim(1), W = xs[0]->val.dim(2);
    int C = 0;
    for (const auto& x : xs) {
        if (x->val.ndim() != 3 || x->val.dim(1) != H || x->val.dim(2) != W)
            throw std::invalid_argument("concat_channels: spatial mismatch");
        C += x->val.dim(0);
    }
    Tensor v({C, H, W});
    long off = 0;
    for (const auto& x : xs) {
        v.d.segment(off, x->val.numel()) = x->val.d;
        off += x->val.numel();
    }
    return make_node(std::move(v), xs, [xs](Node& n) {
        long off = 0;
        for (const auto& x : xs) {
            if (x->requires_grad) x->g().d += n.g().d.segment(off, x->val.numel());
            off += x->val.numel();
        }
    });
}

Var concat_rows(const std::vector<Var>& xs, long cols) {
    long rows = 0;
    for (const auto& x : xs) {
        if (x->val.numel() % cols != 0) throw std::invalid_argument("concat_rows: size mismatch");
        rows += x->val.numel() / cols;
    }
    Tensor v({static_cast<int>(rows), static_cast<int>(cols)});
    long off = 0;
    for (const auto& x : xs) {
        v.d.segment(off, x->val.numel()) = x->val.d;
        off += x->val.numel();
    }
    return make_node(std::move(v), xs, [xs](Node& n) {
        long off = 0;
        for (const auto& x : xs) {
            if (x->requires_grad) x->g().d += n.g().d.segment(off, x->val.numel());
            off += x->val.numel();
        }
    });
}

Var slice_rows(const Var& a, long rows, long cols, long r0, long r1) {
    if (r0 < 0 || r1 > rows || r0 >= r1) throw std::invalid_argument("slice_rows: bad range");
    Tensor v({static_cast<int>(r1 - r0), static_cast<int>(cols)});
    v.d = a->val.d.segment(r0 * cols, (r1 - r0) * cols);
    return make_node(std::move(v), {a}, [a, cols, r0](Node& n) {
        if (a->requires_grad) a->g().d.segment(r0 * cols, n.val.numel()) += n.g().d;
    });
}

Var slice_cols(const Var& a, long rows, long cols, long c0, long c1) {
    if (c0 < 0 || c1 > cols || c0 >= c1) throw std::invalid_argument("slice_cols: bad range");
    Tensor v({static_cast<int>(rows), static_cast<int>(c1 - c0)});
    v.mat(rows, c1 - c0) = a->val.mat(rows, cols).middleCols(c0, c1 - c0);
    return make_node(std::move(v), {a}, [a, rows, cols, c0, c1](Node& n) {
        if (a->requires_grad)
            a->g().mat(rows, cols).middleCols(c0, c1 - c0) += n.g().mat(rows, c1 - c0);
    });
}

Var chw_to_tokens(const Var& a) {
    if (a->val.ndim() != 3) throw std::invalid_argument("chw_to_tokens: expects [C,H,W]");
    int C = a->val.dim(0), H = a->val.dim(1), W = a->val.dim(2);
    Tensor v({H * W, C});
    for (int c = 0; c < C; ++c)
        for (long p = 0; p < static_cast<long>(H) * W; ++p) v.d[p * C + c] = a->val.d[c * H * W + p];
    return make_node(std::move(v), {a}, [a, C, H, W](Node& n) {
        if (!a->requires_grad) return;
        auto& g = a->g();
        for (int c = 0; c < C; ++c)
            for (long p = 0; p < static_cast<long>(H) * W; ++p) g.d[c * H * W + p] += n.g().d[p * C + c];
    });
}

Var tokens_to_chw(const Var& a, int C, int H, int W) {
    if (a->val.numel() != static_cast<long>(C) * H * W)
        throw std::invalid_argument("tokens_to_chw: size mismatch");
    Tensor v({C, H, W});
    for (int c = 0; c < C; ++c)
        for (long p = 0; p < static_cast<long>(H) * W; ++p) v.d[c * H * W + p] = a->val.d[p * C + c];
    return make_node(std::move(v), {a}, [a, C, H, W](Node& n) {
        if (!a->requires_grad) return;
        auto& g = a->g();
        for (int c = 0; c < C; ++c)
            for (long p = 0; p < static_cast<long>(H) * W; ++p) g.d[p * C + c] += n.g().d[c * H * W + p];
    });
}

namespace {

void im2col(const double* x, int C, int H, int W, int kh, int kw, int stride, int pad, int Ho,
            int Wo, RowMat& col) {
    col.setZero(static_cast<long>(C) * kh * kw, static_cast<long>(Ho) * Wo);
    for (int c = 0; c < C; ++c) {
        for (int ki = 0; ki < kh; ++ki) {
            for (int kj = 0; kj < kw; ++kj) {
                long r = (static_cast<long>(c) * kh + ki) * kw + kj;
                for (int ho = 0; ho < Ho; ++ho) {
                    int h = ho * stride - pad + ki;
                    if (h < 0 || h >= H) continue;
                    for (int wo = 0; wo < Wo; ++wo) {
                        int w = wo * stride - pad + kj;
                        if (w < 0 || w >= W) continue;
                        col(r, static_cast<long>(ho) * Wo + wo) = x[(static_cast<long>(c) * H + h) * W + w];
                    }
                }
            }
        }
    }
}

void col2im_add(const RowMat& col, int C, int H, int W, int kh, int kw, int stride, int pad,
                int Ho, int Wo, double* gx) {
    for (int c = 0; c < C; ++c) {
        for (int ki = 0; ki < kh; ++ki) {
            for (int kj = 0; kj < kw; ++kj) {
                long r = (static_cast<long>(c) * kh + ki) * kw + kj;
                for (int ho = 0; ho < Ho; ++ho) {
                    int h = ho * stride - pad + ki;
                    if (h < 0 || h >= H) continue;
                    for (int wo = 0; wo < Wo; ++wo) {
                        int w = wo * stride - pad + kj;
                        if (w < 0 || w >= W) continue;
                        gx[(static_cast<long>(c) * H + h) * W + w] += col(r, static_cast<long>(ho) * Wo + wo);
                    }
                }
            }
        }
    }
}

}  // namespace

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
    if (x->val.ndim() != 4 || w->val.ndim() != 4)
        throw std::invalid_argument("conv2d: expects x[B,C,H,W], w[Co,Ci,kh,kw]");
    int B = x->val.dim(0), C = x->val.dim(1), H = x->val.dim(2), W = x->val.dim(3);
    int Co = w->val.dim(0), Ci = w->val.dim(1), kh = w->val.dim(2), kw = w->val.dim(3);
    if (Ci != C) throw std::invalid_argument("conv2d: channel mismatch");
    if (b->val.numel() != Co) throw std::invalid_argument("conv2d: bias size mismatch");
    int Ho = (H + 2 * pad - kh) / stride + 1;
    int Wo = (W + 2 * pad - kw) / stride + 1;
    Tensor v({B, Co, Ho, Wo});
    long K = static_cast<long>(C) * kh * kw;
    long P = static_cast<long>(Ho) * Wo;
    RowMat col;
    auto wm = w->val.mat(Co, K);
    for (int n = 0; n < B; ++n) {
        im2col(x->val.d.data() + static_cast<long>(n) * C * H * W, C, H, W, kh, kw, stride, pad, Ho,
               Wo, col);
        MatMap out(v.d.data() + static_cast<long>(n) * Co * P, Co, P);
        out.noalias() = wm * col;
        out.colwise() += b->val.mat(Co, 1).col(0);
    }
    return make_node(std::move(v), {x, w, b},
                     [x, w, b, B, C, H, W, Co, kh, kw, stride, pad, Ho, Wo, K, P](Node& node) {
                         RowMat col;
                         auto wm = w->val.mat(Co, K);
                         for (int n = 0; n < B; ++n) {
                             ConstMatMap go(node.g().d.data() + static_cast<long>(n) * Co * P, Co, P);
                             if (w->requires_grad || b->requires_grad || x->requires_grad)
                                 im2col(x->val.d.data() + static_cast<long>(n) * C * H * W, C, H, W,
                                        kh, kw, stride, pad, Ho, Wo, col);
                             if (w->requires_grad) w->g().mat(Co, K).noalias() += go * col.transpose();
                             if (b->requires_grad) b->g().mat(Co, 1).col(0) += go.rowwise().sum();
                             if (x->requires_grad) {
                                 RowMat gcol = wm.transpose() * go;
                                 col2im_add(gcol, C, H, W, kh, kw, stride, pad, Ho, Wo,
                                            x->g().d.data() + static_cast<long>(n) * C * H * W);
                             }
                         }
                     });
}

Var avg_pool2d(const Var& x, int k) {
    if (x->val.ndim() != 4) throw std::invalid_argument("avg_pool2d: expects [B,C,H,W]");
    int B = x->val.dim(0), C = x->val.dim(1), H = x->val.dim(2), W = x->val.dim(3);
    if (H % k != 0 || W % k != 0) throw std::invalid_argument("avg_pool2d: size not divisible");
    int Ho = H / k, Wo = W / k;
    Tensor v({B, C, Ho, Wo});
    double inv = 1.0 / (static_cast<double>(k) * k);
    for (long bc = 0; bc < static_cast<long>(B) * C; ++bc) {
        const double* src = x->val.d.data() + bc * H * W;
        double* dst = v.d.data() + bc * Ho * Wo;
        for (int ho = 0; ho < Ho; ++ho)
            for (int wo = 0; wo < Wo; ++wo) {
                double s = 0;
                for (int i = 0; i < k; ++i)
                    for (int j = 0; j < k; ++j) s += src[(ho * k + i) * W + wo * k + j];
                dst[ho * Wo + wo] = s * inv;
            }
    }
    return make_node(std::move(v), {x}, [x, B, C, H, W, k, Ho, Wo, inv](Node& n) {
        if (!x->requires_grad) return;
        for (long bc = 0; bc < static_cast<long>(B) * C; ++bc) {
            const double* g = n.g().d.data() + bc * Ho * Wo;
            double* gx = x->g().d.data() + bc * H * W;
            for (int ho = 0; ho < Ho; ++ho)
                for (int wo = 0; wo < Wo; ++wo) {
                    double gv = g[ho * Wo + wo] * inv;
                    for (int i = 0; i < k; ++i)
                        for (int j = 0; j < k; ++j) gx[(ho * k + i) * W + wo * k + j] += gv;
                }
        }
    });
}

Var upsample2_nearest(const Var& x) {
    if (x->val.ndim() != 4) throw std::invalid_argument("upsample2_nearest: expects [B,C,H,W]");
    int B = x->val.dim(0), C = x->val.dim(1), H = x->val.dim(2), W = x->val.dim(3);
    Tensor v({B, C, 2 * H, 2 * W});
    for (long bc = 0; bc < static_cast<long>(B) * C; ++bc) {
        const double* src = x->val.d.data() + bc * H * W;
        double* dst = v.d.data() + bc * 4 * H * W;
        for (int h = 0; h < 2 * H; ++h)
            for (int w = 0; w < 2 * W; ++w) dst[h * 2 * W + w] = src[(h / 2) * W + w / 2];
    }
    return make_node(std::move(v), {x}, [x, B, C, H, W](Node& n) {
        if (!x->requires_grad) return;
        for (long bc = 0; bc < static_cast<long>(B) * C; ++bc) {
            const double* g = n.g().d.data() + bc * 4 * H * W;
            double* gx = x->g().d.data() + bc * H * W;
            for (int h = 0; h < 2 * H; ++h)
                for (int w = 0; w < 2 * W; ++w) gx[(h / 2) * W + w / 2] += g[h * 2 * W + w];
        }
    });
}

}  // namespace dragsplat::ad
