#include "mcm/autodiff.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <unordered_set>

namespace mcm::ad {

namespace {

thread_local bool g_grad_enabled = true;

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<Mat>;
using CMatMap = Eigen::Map<const Mat>;

bool any_requires_grad(const std::vector<VarPtr>& parents) {
    for (const auto& p : parents)
        if (p->requires_grad) return true;
    return false;
}

}  // namespace

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

bool grad_enabled() { return g_grad_enabled; }

VarPtr var(Tensor value, bool requires_grad) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->requires_grad = requires_grad;
    return n;
}

VarPtr constant(Tensor value) { return var(std::move(value), false); }

VarPtr detach(const VarPtr& a) { return constant(a->value); }

VarPtr make_node(Tensor value, std::vector<VarPtr> parents, std::function<void(Node&)> backward_fn) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    if (g_grad_enabled && any_requires_grad(parents)) {
        n->requires_grad = true;
        n->parents = std::move(parents);
        n->backward_fn = std::move(backward_fn);
    }
    return n;
}

void backward(const VarPtr& root) {
    if (root->value.numel() != 1) throw ShapeError("backward root must be scalar");
    if (!root->requires_grad) return;

    // Reverse post-order DFS over parent edges = topological order in which
    // every consumer is settled before gradient flows into its inputs.
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, size_t>> stack;
    stack.emplace_back(root.get(), 0);
    visited.insert(root.get());
    while (!stack.empty()) {
        auto& [n, i] = stack.back();
        if (i < n->parents.size()) {
            Node* p = n->parents[i++].get();
            if (p->requires_grad && !visited.count(p)) {
                visited.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }

    root->ensure_grad();
    root->grad.data[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward_fn) n->backward_fn(*n);
    }
}

VarPtr add(const VarPtr& a, const VarPtr& b) {
    check_same_shape(a->value, b->value, "ad::add");
    return make_node(a->value + b->value, {a, b}, [](Node& n) {
        for (int k = 0; k < 2; ++k) {
            Node& p = *n.parents[k];
            if (!p.requires_grad) continue;
            p.ensure_grad();
            for (long i = 0; i < n.grad.numel(); ++i) p.grad.data[i] += n.grad.data[i];
        }
    });
}

VarPtr sub(const VarPtr& a, const VarPtr& b) {
    check_same_shape(a->value, b->value, "ad::sub");
    return make_node(a->value - b->value, {a, b}, [](Node& n) {
        for (int k = 0; k < 2; ++k) {
            Node& p = *n.parents[k];
            if (!p.requires_grad) continue;
            p.ensure_grad();
            double sgn = (k == 0) ? 1.0 : -1.0;
            for (long i = 0; i < n.grad.numel(); ++i) p.grad.data[i] += sgn * n.grad.data[i];
        }
    });
}

VarPtr mul(const VarPtr& a, const VarPtr& b) {
    check_same_shape(a->value, b->value, "ad::mul");
    return make_node(hadamard(a->value, b->value), {a, b}, [](Node& n) {
        Node& pa = *n.parents[0];
        Node& pb = *n.parents[1];
        if (pa.requires_grad) {
            pa.ensure_grad();
            for (long i = 0; i < n.grad.numel(); ++i)
                pa.grad.data[i] += n.grad.data[i] * pb.value.data[i];
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            for (long i = 0; i < n.grad.numel(); ++i)
                pb.grad.data[i] += n.grad.data[i] * pa.value.data[i];
        }
    });
}

VarPtr scale(const VarPtr& a, double s) {
    return make_node(a->value * s, {a}, [s](Node& n) {
        Node& p = *n.parents[0];
        p.ensure_grad();
        for (long i = 0; i < n.grad.numel(); ++i) p.grad.data[i] += s * n.grad.data[i];
    });
}

VarPtr add_scalar(const VarPtr& a, double s) {
    Tensor v = a->value;
    for (double& x : v.data) x += s;
    return make_node(std::move(v), {a}, [](Node& n) {
        Node& p = *n.parents[0];
        p.ensure_grad();
        for (long i = 0; i < n.grad.numel(); ++i) p.grad.data[i] += n.grad.data[i];
    });
}

VarPtr relu(const VarPtr& a) {
    Tensor v = a->value;
    for (double& x : v.data) x = x > 0.0 ? x : 0.0;
    return make_node(std::move(v), {a}, [](Node& n) {
        Node& p = *n.parents[0];
        p.ensure_grad();
        for (long i = 0; i < n.grad.numel(); ++i)
            if (p.value.data[i] > 0.0) p.grad.data[i] += n.grad.data[i];
    });
}

VarPtr silu(const VarPtr& a) {
    Tensor v = a->value;
    for (double& x : v.data) x = x / (1.0 + std::exp(-x));
    return make_node(std::move(v), {a}, [](Node& n) {
        Node& p = *n.parents[0];
        p.ensure_grad();
        for (long i = 0; i < n.grad.numel(); ++i) {
            double x = p.value.data[i];
            double sig = 1.0 / (1.0 + std::exp(-x));
            p.grad.data[i] += n.grad.data[i] * sig * (1.0 + x * (1.0 - sig));
        }
    });
}

VarPtr tanh_op(const VarPtr& a) {
    Tensor v = a->value;
    for (double& x : v.data) x = std::tanh(x);
    return make_node(std::move(v), {a}, [](Node& n) {
        Node& p = *n.parents[0];
        p.ensure_grad();
        for (long i = 0; i < n.grad.numel(); ++i) {
            double y = n.value.data[i];
            p.grad.data[i] += n.grad.data[i] * (1.0 - y * y);
        }
    });
}

VarPtr sqrt_op(const VarPtr& a) {
    Tensor v = a->value;
    for (double& x : v.data) x = std::sqrt(x);
    return make_node(std::move(v), {a}, [](Node& n) {
        Node& p = *n.parents[0];
        p.ensure_grad();
        for (long i = 0; i < n.grad.numel(); ++i)
            p.grad.data[i] += n.grad.data[i] * 0.5 / n.value.data[i];
    });
}

VarPtr square(const VarPtr& a) {
    Tensor v = a->value;
    for (double& x : v.data) x *= x;
    return make_node(std::move(v), {a}, [](Node& n) {
        Node& p = *n.parents[0];
        p.ensure_grad();
        for (long i = 0; i < n.grad.numel(); ++i)
            p.grad.data[i] += 2.0 * p.value.data[i] * n.grad.data[i];
    });
}

VarPtr sum_all(const VarPtr& a) {
    Tensor v({1});
    v.data[0] = sum(a->value);
    return make_node(std::move(v), {a}, [](Node& n) {
        Node& p = *n.parents[0];
        p.ensure_grad();
        double g = n.grad.data[0];
        for (long i = 0; i < p.grad.numel(); ++i) p.grad.data[i] += g;
    });
}

VarPtr mean_all(const VarPtr& a) {
    Tensor v({1});
    v.data[0] = mean(a->value);
    long cnt = a->value.numel();
    return make_node(std::move(v), {a}, [cnt](Node& n) {
        Node& p = *n.parents[0];
        p.ensure_grad();
        double g = n.grad.data[0] / static_cast<double>(cnt);
        for (long i = 0; i < p.grad.numel(); ++i) p.grad.data[i] += g;
    });
}

VarPtr reshape(const VarPtr& a, Shape s) {
    return make_node(a->value.reshaped(std::move(s)), {a}, [](Node& n) {
        Node& p = *n.parents[0];
        p.ensure_grad();
        for (long i = 0; i < n.grad.numel(); ++i) p.grad.data[i] += n.grad.data[i];
    });
}

VarPtr gather_first(const VarPtr& a, const std::vector<long>& rows) {
    const Tensor& x = a->value;
    if (x.ndim() < 1) throw ShapeError("gather_first needs rank >= 1");
    long stride = x.numel() / x.shape[0];
    Shape out_shape = x.shape;
    out_shape[0] = static_cast<long>(rows.size());
    Tensor v(out_shape);
    for (size_t r = 0; r < rows.size(); ++r) {
        long src = rows[r];
        if (src < 0 || src >= x.shape[0]) throw ShapeError("gather_first row out of range");
        std::copy(x.data.begin() + src * stride, x.data.begin() + (src + 1) * stride,
                  v.data.begin() + static_cast<long>(r) * stride);
    }
    return make_node(std::move(v), {a}, [rows, stride](Node& n) {
        Node& p = *n.parents[0];
        p.ensure_grad();
        for (size_t r = 0; r < rows.size(); ++r) {
            long dst = rows[r];
            for (long i = 0; i < stride; ++i)
                p.grad.data[dst * stride + i] += n.grad.data[static_cast<long>(r) * stride + i];
        }
    });
}

VarPtr matmul(const VarPtr& a, const VarPtr& b) {
    const Tensor& A = a->value;
    const Tensor& B = b->value;
    if (A.ndim() != 2 || B.ndim() != 2 || A.shape[1] != B.shape[0])
        throw ShapeError("matmul " + shape_str(A.shape) + " x " + shape_str(B.shape));
    long m = A.shape[0], k = A.shape[1], n2 = B.shape[1];
    Tensor v({m, n2});
    MatMap(v.ptr(), m, n2).noalias() = CMatMap(A.ptr(), m, k) * CMatMap(B.ptr(), k, n2);
    return make_node(std::move(v), {a, b}, [m, k, n2](Node& n) {
        Node& pa = *n.parents[0];
        Node& pb = *n.parents[1];
        CMatMap dY(n.grad.ptr(), m, n2);
        if (pa.requires_grad) {
            pa.ensure_grad();
            MatMap(pa.grad.ptr(), m, k).noalias() += dY * CMatMap(pb.value.ptr(), k, n2).transpose();
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            MatMap(pb.grad.ptr(), k, n2).noalias() += CMatMap(pa.value.ptr(), m, k).transpose() * dY;
        }
    });
}

VarPtr add_rowvec(const VarPtr& a, const VarPtr& bias) {
    const Tensor& A = a->value;
    const Tensor& B = bias->value;
    if (A.ndim() != 2 || B.ndim() != 1 || A.shape[1] != B.shape[0])
        throw ShapeError("add_rowvec " + shape_str(A.shape) + " + " + shape_str(B.shape));
    Tensor v = A;
    long m = A.shape[0], n2 = A.shape[1];
    for (long i = 0; i < m; ++i)
        for (long j = 0; j < n2; ++j) v.data[i * n2 + j] += B.data[j];
    return make_node(std::move(v), {a, bias}, [m, n2](Node& n) {
        Node& pa = *n.parents[0];
        Node& pb = *n.parents[1];
        if (pa.requires_grad) {
            pa.ensure_grad();
            for (long i = 0; i < n.grad.numel(); ++i) pa.grad.data[i] += n.grad.data[i];
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            for (long i = 0; i < m; ++i)
                for (long j = 0; j < n2; ++j) pb.grad.data[j] += n.grad.data[i * n2 + j];
        }
    });
}

namespace {

// im2col for stride-1 same-size conv: out [Cin*k*k, H*W].
Tensor im2col(const Tensor& x, long k, long pad) {
    long C = x.shape[0], H = x.shape[1], W = x.shape[2];
    Tensor cols({C * k * k, H * W});
    for (long c = 0; c < C; ++c)
        for (long ki = 0; ki < k; ++ki)
            for (long kj = 0; kj < k; ++kj) {
                long row = (c * k + ki) * k + kj;
                for (long y = 0; y < H; ++y) {
                    long sy = y + ki - pad;
                    if (sy < 0 || sy >= H) continue;
                    for (long x2 = 0; x2 < W; ++x2) {
                        long sx = x2 + kj - pad;
                        if (sx < 0 || sx >= W) continue;
                        cols.data[row * H * W + y * W + x2] = x.data[(c * H + sy) * W + sx];
                    }
                }
            }
    return cols;
}

void col2im_accumulate(const Tensor& dcols, Tensor& dx, long k, long pad) {
    long C = dx.shape[0], H = dx.shape[1], W = dx.shape[2];
    for (long c = 0; c < C; ++c)
        for (long ki = 0; ki < k; ++ki)
            for (long kj = 0; kj < k; ++kj) {
                long row = (c * k + ki) * k + kj;
                for (long y = 0; y < H; ++y) {
                    long sy = y + ki - pad;
                    if (sy < 0 || sy >= H) continue;
                    for (long x2 = 0; x2 < W; ++x2) {
                        long sx = x2 + kj - pad;
                        if (sx < 0 || sx >= W) continue;
                        dx.data[(c * H + sy) * W + sx] += dcols.data[row * H * W + y * W + x2];
                    }
                }
            }
}

}  // namespace

VarPtr conv2d(const VarPtr& x, const VarPtr& w, const VarPtr& b, long pad) {
    const Tensor& X = x->value;
    const Tensor& W_ = w->value;
    const Tensor& B = b->value;
    if (X.ndim() != 3 || W_.ndim() != 4 || B.ndim() != 1)
        throw ShapeError("conv2d expects x[C,H,W], w[Co,Ci,k,k], b[Co]");
    long Ci = X.shape[0], H = X.shape[1], Wd = X.shape[2];
    long Co = W_.shape[0], k = W_.shape[2];
    if (W_.shape[1] != Ci || W_.shape[3] != k || B.shape[0] != Co)
        throw ShapeError("conv2d weight/input mismatch: x=" + shape_str(X.shape) +
                         " w=" + shape_str(W_.shape));

    Tensor cols = im2col(X, k, pad);
    Tensor v({Co, H, Wd});
    {
        MatMap Y(v.ptr(), Co, H * Wd);
        Y.noalias() = CMatMap(W_.ptr(), Co, Ci * k * k) * CMatMap(cols.ptr(), Ci * k * k, H * Wd);
        for (long c = 0; c < Co; ++c) Y.row(c).array() += B.data[c];
    }
    auto cols_keep = std::make_shared<Tensor>(std::move(cols));
    return make_node(std::move(v), {x, w, b}, [cols_keep, Ci, Co, H, Wd, k, pad](Node& n) {
        Node& px = *n.parents[0];
        Node& pw = *n.parents[1];
        Node& pb = *n.parents[2];
        CMatMap dY(n.grad.ptr(), Co, H * Wd);
        if (pw.requires_grad) {
            pw.ensure_grad();
            MatMap(pw.grad.ptr(), Co, Ci * k * k).noalias() +=
                dY * CMatMap(cols_keep->ptr(), Ci * k * k, H * Wd).transpose();
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            for (long c = 0; c < Co; ++c) pb.grad.data[c] += dY.row(c).sum();
        }
        if (px.requires_grad) {
            px.ensure_grad();
            Tensor dcols({Ci * k * k, H * Wd});
            MatMap(dcols.ptr(), Ci * k * k, H * Wd).noalias() =
                CMatMap(pw.value.ptr(), Co, Ci * k * k).transpose() * dY;
            col2im_accumulate(dcols, px.grad, k, pad);
        }
    });
}

VarPtr add_channel_bias(const VarPtr& x, const VarPtr& bias) {
    const Tensor& X = x->value;
    const Tensor& B = bias->value;
    if (X.ndim() != 3 || B.ndim() != 1 || B.shape[0] != X.shape[0])
        throw ShapeError("add_channel_bias " + shape_str(X.shape) + " + " + shape_str(B.shape));
    long C = X.shape[0], hw = X.shape[1] * X.shape[2];
    Tensor v = X;
    for (long c = 0; c < C; ++c)
        for (long i = 0; i < hw; ++i) v.data[c * hw + i] += B.data[c];
    return make_node(std::move(v), {x, bias}, [C, hw](Node& n) {
        Node& px = *n.parents[0];
        Node& pb = *n.parents[1];
        if (px.requires_grad) {
            px.ensure_grad();
            for (long i = 0; i < n.grad.numel(); ++i) px.grad.data[i] += n.grad.data[i];
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            for (long c = 0; c < C; ++c) {
                double s = 0.0;
                for (long i = 0; i < hw; ++i) s += n.grad.data[c * hw + i];
                pb.grad.data[c] += s;
            }
        }
    });
}

VarPtr avg_pool2(const VarPtr& x) {
    const Tensor& X = x->value;
    if (X.ndim() != 3 || X.shape[1] % 2 != 0 || X.shape[2] % 2 != 0)
        throw ShapeError("avg_pool2 needs [C,2m,2n], got " + shape_str(X.shape));
    long C = X.shape[0], H = X.shape[1], W = X.shape[2];
    Tensor v({C, H / 2, W / 2});
    for (long c = 0; c < C; ++c)
        for (long i = 0; i < H / 2; ++i)
            for (long j = 0; j < W / 2; ++j) {
                double s = X.at(c, 2 * i, 2 * j) + X.at(c, 2 * i, 2 * j + 1) +
                           X.at(c, 2 * i + 1, 2 * j) + X.at(c, 2 * i + 1, 2 * j + 1);
                v.at(c, i, j) = 0.25 * s;
            }
    return make_node(std::move(v), {x}, [C, H, W](Node& n) {
        Node& p = *n.parents[0];
        p.ensure_grad();
        for (long c = 0; c < C; ++c)
            for (long i = 0; i < H / 2; ++i)
                for (long j = 0; j < W / 2; ++j) {
                    double g = 0.25 * n.grad.at(c, i, j);
                    p.grad.at(c, 2 * i, 2 * j) += g;
                    p.grad.at(c, 2 * i, 2 * j + 1) += g;
                    p.grad.at(c, 2 * i + 1, 2 * j) += g;
                    p.grad.at(c, 2 * i + 1, 2 * j + 1) += g;
                }
    });
}

VarPtr huber_distance(const VarPtr& a, const VarPtr& b, double delta) {
    check_same_shape(a->value, b->value, "huber_distance");
    if (delta <= 0.0) throw ParameterError("huber_distance: delta must be positive");
    Tensor diff = a->value - b->value;
    double ss = dot(diff, diff);
    double root = std::sqrt(ss + delta * delta);
    Tensor v({1});
    v.data[0] = root - delta;
    auto diff_keep = std::make_shared<Tensor>(std::move(diff));
    return make_node(std::move(v), {a, b}, [diff_keep, root](Node& n) {
        double g = n.grad.data[0] / root;
        Node& pa = *n.parents[0];
        Node& pb = *n.parents[1];
        if (pa.requires_grad) {
            pa.ensure_grad();
            for (long i = 0; i < pa.grad.numel(); ++i) pa.grad.data[i] += g * diff_keep->data[i];
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            for (long i = 0; i < pb.grad.numel(); ++i) pb.grad.data[i] -= g * diff_keep->data[i];
        }
    });
}

}  // namespace mcm::ad
