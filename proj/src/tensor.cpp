// SPDX-License-Identifier: Apache-2.0
#include "fintrec/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <stdexcept>

namespace fintrec {

namespace {

std::atomic<int64_t> g_next_id{1};

std::shared_ptr<TensorNode> make_node(const char* op, Shape shape, std::vector<float> data,
                                      std::vector<Tensor> parents) {
    auto n = std::make_shared<TensorNode>();
    n->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
    n->op = op;
    n->shape = std::move(shape);
    n->data = std::move(data);
    n->parents = std::move(parents);
    n->is_leaf = n->parents.empty();
    for (const auto& p : n->parents) {
        if (p.requires_grad()) n->requires_grad = true;
    }
    return n;
}

void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw std::invalid_argument(std::string(op) + ": shape mismatch");
    }
}

// ---- raw matmul kernels (accumulate into C) ----

void mm_nn(const float* A, const float* B, float* C, int n, int k, int m) {
    for (int i = 0; i < n; ++i) {
        const float* a = A + static_cast<size_t>(i) * k;
        float* c = C + static_cast<size_t>(i) * m;
        for (int p = 0; p < k; ++p) {
            const float av = a[p];
            const float* b = B + static_cast<size_t>(p) * m;
            for (int j = 0; j < m; ++j) c[j] += av * b[j];
        }
    }
}

// C[n,m] += A[n,k] * B[m,k]^T
void mm_nt(const float* A, const float* B, float* C, int n, int k, int m) {
    for (int i = 0; i < n; ++i) {
        const float* a = A + static_cast<size_t>(i) * k;
        float* c = C + static_cast<size_t>(i) * m;
        for (int j = 0; j < m; ++j) {
            const float* b = B + static_cast<size_t>(j) * k;
            float acc = 0.0f;
            for (int p = 0; p < k; ++p) acc += a[p] * b[p];
            c[j] += acc;
        }
    }
}

// C[k,m] += A[n,k]^T * B[n,m]
void mm_tn(const float* A, const float* B, float* C, int n, int k, int m) {
    for (int i = 0; i < n; ++i) {
        const float* a = A + static_cast<size_t>(i) * k;
        const float* b = B + static_cast<size_t>(i) * m;
        for (int p = 0; p < k; ++p) {
            const float av = a[p];
            float* c = C + static_cast<size_t>(p) * m;
            for (int j = 0; j < m; ++j) c[j] += av * b[j];
        }
    }
}

}  // namespace

int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int e : s) {
        if (e <= 0) throw std::invalid_argument("tensor: non-positive extent in shape");
        n *= e;
    }
    return n;
}

Tensor Tensor::zeros(const Shape& shape, bool requires_grad) {
    return full(shape, 0.0f, requires_grad);
}

Tensor Tensor::full(const Shape& shape, float value, bool requires_grad) {
    auto n = make_node("leaf", shape, std::vector<float>(shape_numel(shape), value), {});
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
}

Tensor Tensor::from(const Shape& shape, std::vector<float> data, bool requires_grad) {
    if (static_cast<int64_t>(data.size()) != shape_numel(shape)) {
        throw std::invalid_argument("tensor: data length does not match shape");
    }
    auto n = make_node("leaf", shape, std::move(data), {});
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
}

Tensor Tensor::param(const Shape& shape, std::vector<float> data) {
    return from(shape, std::move(data), true);
}

const Shape& Tensor::shape() const { return node_->shape; }
int64_t Tensor::numel() const { return static_cast<int64_t>(node_->data.size()); }
int Tensor::rows() const { return node_->shape.size() < 2 ? 1 : node_->shape[0]; }
int Tensor::cols() const { return node_->shape.empty() ? 1 : node_->shape.back(); }
const std::vector<float>& Tensor::data() const { return node_->data; }
std::vector<float>& Tensor::mutable_data() { return node_->data; }
bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

void Tensor::set_requires_grad(bool v) {
    if (!node_ || !node_->is_leaf) {
        throw std::invalid_argument("tensor: set_requires_grad on a non-leaf");
    }
    node_->requires_grad = v;
}

int64_t Tensor::id() const { return node_->id; }
const char* Tensor::op_name() const { return node_->op; }

float Tensor::scalar() const {
    if (numel() != 1) throw std::invalid_argument("tensor: scalar() on non-scalar");
    return node_->data[0];
}

float Tensor::at(int r, int c) const { return node_->data[static_cast<size_t>(r) * cols() + c]; }

bool Tensor::has_grad() const { return node_ && !node_->grad.empty(); }
const std::vector<float>& Tensor::grad() const {
    if (!has_grad()) throw std::runtime_error("tensor: no gradient present; run backward first");
    return node_->grad;
}

bool Tensor::all_finite() const {
    for (float v : node_->data) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

float* GradSink::buffer(TensorNode& n) {
    if (!n.requires_grad) return nullptr;
    const size_t sz = n.data.size();
    if (n.is_leaf) {
        auto& buf = out_[n.id];
        if (buf.empty()) buf.assign(sz, 0.0f);
        return buf.data();
    }
    if (n.grad.empty()) n.grad.assign(sz, 0.0f);
    return n.grad.data();
}

void backward(const Tensor& loss, GradMap& sink_map) {
    if (!loss.defined()) throw std::invalid_argument("backward: undefined loss");
    if (loss.numel() != 1) throw std::invalid_argument("backward: loss must be scalar");

    // iterative DFS: topological order with cycle detection
    std::vector<TensorNode*> order;
    std::unordered_map<TensorNode*, int> state;  // 1 = on stack, 2 = done
    std::vector<std::pair<TensorNode*, size_t>> stack;
    stack.emplace_back(loss.node().get(), 0);
    state[loss.node().get()] = 1;
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            TensorNode* p = node->parents[next++].node().get();
            auto it = state.find(p);
            if (it == state.end()) {
                state[p] = 1;
                stack.emplace_back(p, 0);
            } else if (it->second == 1) {
                throw std::runtime_error("backward: cycle in computation graph");
            }
        } else {
            state[node] = 2;
            order.push_back(node);
            stack.pop_back();
        }
    }

    loss.node()->grad.assign(1, 1.0f);
    GradSink sink(sink_map);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        TensorNode* n = *it;
        if (!n->requires_grad || n->grad.empty()) continue;
        for (float g : n->grad) {
            if (!std::isfinite(g)) {
                throw std::runtime_error("backward: non-finite gradient at node " +
                                         std::to_string(n->id) + " (" + n->op + ")");
            }
        }
        if (n->backward) n->backward(*n, sink);
    }
    for (auto& [id, buf] : sink_map) {
        for (float g : buf) {
            if (!std::isfinite(g)) {
                throw std::runtime_error("backward: non-finite gradient for parameter " +
                                         std::to_string(id));
            }
        }
    }
}

GradMap forward_backward(const Tensor& loss) {
    GradMap grads;
    backward(loss, grads);
    return grads;
}

// ---- ops ----

Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape("add", a, b);
    std::vector<float> out(a.data());
    const auto& bd = b.data();
    for (size_t i = 0; i < out.size(); ++i) out[i] += bd[i];
    auto n = make_node("add", a.shape(), std::move(out), {a, b});
    n->backward = [](TensorNode& self, GradSink& sink) {
        for (int s = 0; s < 2; ++s) {
            if (float* g = sink.buffer(*self.parents[s].node())) {
                for (size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
            }
        }
    };
    return Tensor(std::move(n));
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check_same_shape("sub", a, b);
    std::vector<float> out(a.data());
    const auto& bd = b.data();
    for (size_t i = 0; i < out.size(); ++i) out[i] -= bd[i];
    auto n = make_node("sub", a.shape(), std::move(out), {a, b});
    n->backward = [](TensorNode& self, GradSink& sink) {
        if (float* g = sink.buffer(*self.parents[0].node())) {
            for (size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
        }
        if (float* g = sink.buffer(*self.parents[1].node())) {
            for (size_t i = 0; i < self.grad.size(); ++i) g[i] -= self.grad[i];
        }
    };
    return Tensor(std::move(n));
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check_same_shape("mul", a, b);
    std::vector<float> out(a.data());
    const auto& bd = b.data();
    for (size_t i = 0; i < out.size(); ++i) out[i] *= bd[i];
    auto n = make_node("mul", a.shape(), std::move(out), {a, b});
    n->backward = [](TensorNode& self, GradSink& sink) {
        const auto& ad = self.parents[0].data();
        const auto& bd2 = self.parents[1].data();
        if (float* g = sink.buffer(*self.parents[0].node())) {
            for (size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * bd2[i];
        }
        if (float* g = sink.buffer(*self.parents[1].node())) {
            for (size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * ad[i];
        }
    };
    return Tensor(std::move(n));
}

Tensor scale(const Tensor& a, float c) {
    std::vector<float> out(a.data());
    for (float& v : out) v *= c;
    auto n = make_node("scale", a.shape(), std::move(out), {a});
    n->aux.assign(1, c);
    n->backward = [](TensorNode& self, GradSink& sink) {
        const float c2 = self.aux[0];
        if (float* g = sink.buffer(*self.parents[0].node())) {
            for (size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * c2;
        }
    };
    return Tensor(std::move(n));
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
    const int nr = x.rows(), nc = x.cols();
    if (bias.numel() != nc) throw std::invalid_argument("add_bias: bias length mismatch");
    std::vector<float> out(x.data());
    const auto& bd = bias.data();
    for (int i = 0; i < nr; ++i) {
        float* row = out.data() + static_cast<size_t>(i) * nc;
        for (int j = 0; j < nc; ++j) row[j] += bd[j];
    }
    auto n = make_node("add_bias", x.shape(), std::move(out), {x, bias});
    n->backward = [nr, nc](TensorNode& self, GradSink& sink) {
        if (float* g = sink.buffer(*self.parents[0].node())) {
            for (size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
        }
        if (float* g = sink.buffer(*self.parents[1].node())) {
            for (int i = 0; i < nr; ++i) {
                const float* gr = self.grad.data() + static_cast<size_t>(i) * nc;
                for (int j = 0; j < nc; ++j) g[j] += gr[j];
            }
        }
    };
    return Tensor(std::move(n));
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    const int n = a.rows(), k = a.cols(), m = b.cols();
    if (b.rows() != k) throw std::invalid_argument("matmul: inner dimension mismatch");
    std::vector<float> out(static_cast<size_t>(n) * m, 0.0f);
    mm_nn(a.data().data(), b.data().data(), out.data(), n, k, m);
    auto node = make_node("matmul", {n, m}, std::move(out), {a, b});
    node->backward = [n, k, m](TensorNode& self, GradSink& sink) {
        const float* gc = self.grad.data();
        if (float* ga = sink.buffer(*self.parents[0].node())) {
            mm_nt(gc, self.parents[1].data().data(), ga, n, m, k);
        }
        if (float* gb = sink.buffer(*self.parents[1].node())) {
            mm_tn(self.parents[0].data().data(), gc, gb, n, k, m);
        }
    };
    return Tensor(std::move(node));
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    const int n = a.rows(), k = a.cols(), m = b.rows();
    if (b.cols() != k) throw std::invalid_argument("matmul_nt: inner dimension mismatch");
    std::vector<float> out(static_cast<size_t>(n) * m, 0.0f);
    mm_nt(a.data().data(), b.data().data(), out.data(), n, k, m);
    auto node = make_node("matmul_nt", {n, m}, std::move(out), {a, b});
    node->backward = [n, k, m](TensorNode& self, GradSink& sink) {
        const float* gc = self.grad.data();
        if (float* ga = sink.buffer(*self.parents[0].node())) {
            mm_nn(gc, self.parents[1].data().data(), ga, n, m, k);
        }
        if (float* gb = sink.buffer(*self.parents[1].node())) {
            mm_tn(gc, self.parents[0].data().data(), gb, n, m, k);
        }
    };
    return Tensor(std::move(node));
}

Tensor sigmoid(const Tensor& a) {
    std::vector<float> out(a.data());
    for (float& v : out) v = 1.0f / (1.0f + std::exp(-v));
    auto n = make_node("sigmoid", a.shape(), std::move(out), {a});
    n->backward = [](TensorNode& self, GradSink& sink) {
        if (float* g = sink.buffer(*self.parents[0].node())) {
            for (size_t i = 0; i < self.grad.size(); ++i) {
                const float y = self.data[i];
                g[i] += self.grad[i] * y * (1.0f - y);
            }
        }
    };
    return Tensor(std::move(n));
}

Tensor gelu(const Tensor& a) {
    std::vector<float> out(a.data());
    for (float& v : out) v = 0.5f * v * (1.0f + std::erf(v * 0.70710678f));
    auto n = make_node("gelu", a.shape(), std::move(out), {a});
    n->backward = [](TensorNode& self, GradSink& sink) {
        if (float* g = sink.buffer(*self.parents[0].node())) {
            const auto& x = self.parents[0].data();
            for (size_t i = 0; i < self.grad.size(); ++i) {
                const float cdf = 0.5f * (1.0f + std::erf(x[i] * 0.70710678f));
                const float pdf = 0.39894228f * std::exp(-0.5f * x[i] * x[i]);
                g[i] += self.grad[i] * (cdf + x[i] * pdf);
            }
        }
    };
    return Tensor(std::move(n));
}

namespace {

std::vector<float> softmax_forward(const Tensor& a, const std::vector<uint8_t>* allow) {
    const int nr = a.rows(), nc = a.cols();
    std::vector<float> out(static_cast<size_t>(nr) * nc, 0.0f);
    for (int i = 0; i < nr; ++i) {
        const float* row = a.data().data() + static_cast<size_t>(i) * nc;
        const uint8_t* am = allow ? allow->data() + static_cast<size_t>(i) * nc : nullptr;
        float mx = -std::numeric_limits<float>::infinity();
        for (int j = 0; j < nc; ++j) {
            if (!am || am[j]) mx = std::max(mx, row[j]);
        }
        if (!std::isfinite(mx)) continue;  // fully masked row stays zero
        float* orow = out.data() + static_cast<size_t>(i) * nc;
        float denom = 0.0f;
        for (int j = 0; j < nc; ++j) {
            if (!am || am[j]) {
                orow[j] = std::exp(row[j] - mx);
                denom += orow[j];
            }
        }
        for (int j = 0; j < nc; ++j) orow[j] /= denom;
    }
    return out;
}

void softmax_backward(TensorNode& self, GradSink& sink, const std::vector<uint8_t>* allow) {
    float* g = sink.buffer(*self.parents[0].node());
    if (!g) return;
    const int nc = self.shape.back();
    const int nr = static_cast<int>(self.data.size()) / nc;
    for (int i = 0; i < nr; ++i) {
        const size_t off = static_cast<size_t>(i) * nc;
        const float* p = self.data.data() + off;
        const float* go = self.grad.data() + off;
        const uint8_t* am = allow ? allow->data() + off : nullptr;
        float dot = 0.0f;
        for (int j = 0; j < nc; ++j) {
            if (!am || am[j]) dot += go[j] * p[j];
        }
        for (int j = 0; j < nc; ++j) {
            if (!am || am[j]) g[off + j] += p[j] * (go[j] - dot);
        }
    }
}

}  // namespace

Tensor softmax_rows(const Tensor& a) {
    auto n = make_node("softmax", a.shape(), softmax_forward(a, nullptr), {a});
    n->backward = [](TensorNode& self, GradSink& sink) { softmax_backward(self, sink, nullptr); };
    return Tensor(std::move(n));
}

Tensor masked_softmax_rows(const Tensor& a, const std::vector<uint8_t>& allow) {
    if (allow.size() != a.data().size()) {
        throw std::invalid_argument("masked_softmax: mask size mismatch");
    }
    auto n = make_node("masked_softmax", a.shape(), softmax_forward(a, &allow), {a});
    auto mask = std::make_shared<std::vector<uint8_t>>(allow);
    n->backward = [mask](TensorNode& self, GradSink& sink) {
        softmax_backward(self, sink, mask.get());
    };
    return Tensor(std::move(n));
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, float eps) {
    const int nr = x.rows(), nc = x.cols();
    if (gain.numel() != nc || bias.numel() != nc) {
        throw std::invalid_argument("layer_norm: parameter length mismatch");
    }
    std::vector<float> out(static_cast<size_t>(nr) * nc);
    std::vector<float> aux(static_cast<size_t>(nr) * nc + nr);  // xhat rows + inv_std per row
    const auto& xd = x.data();
    const auto& gd = gain.data();
    const auto& bd = bias.data();
    for (int i = 0; i < nr; ++i) {
        const size_t off = static_cast<size_t>(i) * nc;
        float mean = 0.0f;
        for (int j = 0; j < nc; ++j) mean += xd[off + j];
        mean /= nc;
        float var = 0.0f;
        for (int j = 0; j < nc; ++j) {
            const float d = xd[off + j] - mean;
            var += d * d;
        }
        var /= nc;
        const float inv_std = 1.0f / std::sqrt(var + eps);
        aux[static_cast<size_t>(nr) * nc + i] = inv_std;
        for (int j = 0; j < nc; ++j) {
            const float xh = (xd[off + j] - mean) * inv_std;
            aux[off + j] = xh;
            out[off + j] = gd[j] * xh + bd[j];
        }
    }
    auto n = make_node("layer_norm", x.shape(), std::move(out), {x, gain, bias});
    n->aux = std::move(aux);
    n->backward = [nr, nc](TensorNode& self, GradSink& sink) {
        const float* xhat = self.aux.data();
        const float* inv_std = self.aux.data() + static_cast<size_t>(nr) * nc;
        const auto& gd = self.parents[1].data();
        float* gx = sink.buffer(*self.parents[0].node());
        float* gg = sink.buffer(*self.parents[1].node());
        float* gb = sink.buffer(*self.parents[2].node());
        for (int i = 0; i < nr; ++i) {
            const size_t off = static_cast<size_t>(i) * nc;
            const float* go = self.grad.data() + off;
            const float* xh = xhat + off;
            if (gg) {
                for (int j = 0; j < nc; ++j) gg[j] += go[j] * xh[j];
            }
            if (gb) {
                for (int j = 0; j < nc; ++j) gb[j] += go[j];
            }
            if (gx) {
                float sum_dxhat = 0.0f, sum_dxhat_xhat = 0.0f;
                for (int j = 0; j < nc; ++j) {
                    const float dxh = go[j] * gd[j];
                    sum_dxhat += dxh;
                    sum_dxhat_xhat += dxh * xh[j];
                }
                for (int j = 0; j < nc; ++j) {
                    const float dxh = go[j] * gd[j];
                    gx[off + j] += inv_std[i] * (dxh - (sum_dxhat + xh[j] * sum_dxhat_xhat) / nc);
                }
            }
        }
    };
    return Tensor(std::move(n));
}

Tensor embedding_lookup(const Tensor& table, const std::vector<int>& ids) {
    const int v = table.rows(), d = table.cols();
    const int l = static_cast<int>(ids.size());
    std::vector<float> out(static_cast<size_t>(l) * d);
    for (int i = 0; i < l; ++i) {
        if (ids[i] < 0 || ids[i] >= v) throw std::invalid_argument("embedding_lookup: id out of range");
        std::copy_n(table.data().data() + static_cast<size_t>(ids[i]) * d, d,
                    out.data() + static_cast<size_t>(i) * d);
    }
    auto n = make_node("embedding_lookup", {l, d}, std::move(out), {table});
    n->aux_idx = ids;
    n->backward = [d](TensorNode& self, GradSink& sink) {
        if (float* g = sink.buffer(*self.parents[0].node())) {
            for (size_t i = 0; i < self.aux_idx.size(); ++i) {
                const float* go = self.grad.data() + i * d;
                float* row = g + static_cast<size_t>(self.aux_idx[i]) * d;
                for (int j = 0; j < d; ++j) row[j] += go[j];
            }
        }
    };
    return Tensor(std::move(n));
}

Tensor embedding_lookup_ext(const Tensor& base, const Tensor& ext, const std::vector<int>& ids) {
    const int vb = base.rows(), d = base.cols();
    const int ve = ext.rows();
    if (ext.cols() != d) throw std::invalid_argument("embedding_lookup_ext: width mismatch");
    const int l = static_cast<int>(ids.size());
    std::vector<float> out(static_cast<size_t>(l) * d);
    for (int i = 0; i < l; ++i) {
        const int id = ids[i];
        if (id < 0 || id >= vb + ve) {
            throw std::invalid_argument("embedding_lookup_ext: id out of range");
        }
        const float* src = id < vb ? base.data().data() + static_cast<size_t>(id) * d
                                   : ext.data().data() + static_cast<size_t>(id - vb) * d;
        std::copy_n(src, d, out.data() + static_cast<size_t>(i) * d);
    }
    auto n = make_node("embedding_lookup_ext", {l, d}, std::move(out), {base, ext});
    n->aux_idx = ids;
    n->backward = [d, vb](TensorNode& self, GradSink& sink) {
        float* gb = sink.buffer(*self.parents[0].node());
        float* ge = sink.buffer(*self.parents[1].node());
        for (size_t i = 0; i < self.aux_idx.size(); ++i) {
            const float* go = self.grad.data() + i * d;
            const int id = self.aux_idx[i];
            float* row = nullptr;
            if (id < vb) {
                if (gb != nullptr) row = gb + static_cast<size_t>(id) * d;
            } else if (ge != nullptr) {
                row = ge + static_cast<size_t>(id - vb) * d;
            }
            if (row == nullptr) continue;
            for (int j = 0; j < d; ++j) row[j] += go[j];
        }
    };
    return Tensor(std::move(n));
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: empty part list");
    const int nr = parts[0].rows();
    int total = 0;
    for (const auto& p : parts) {
        if (p.rows() != nr) throw std::invalid_argument("concat_cols: row count mismatch");
        total += p.cols();
    }
    std::vector<float> out(static_cast<size_t>(nr) * total);
    int at = 0;
    for (const auto& p : parts) {
        const int pc = p.cols();
        for (int i = 0; i < nr; ++i) {
            std::copy_n(p.data().data() + static_cast<size_t>(i) * pc, pc,
                        out.data() + static_cast<size_t>(i) * total + at);
        }
        at += pc;
    }
    auto n = make_node("concat_cols", {nr, total}, std::move(out), parts);
    n->backward = [nr, total](TensorNode& self, GradSink& sink) {
        int c0 = 0;
        for (auto& parent : self.parents) {
            const int pc = parent.cols();
            if (float* g = sink.buffer(*parent.node())) {
                for (int i = 0; i < nr; ++i) {
                    const float* go = self.grad.data() + static_cast<size_t>(i) * total + c0;
                    float* gr = g + static_cast<size_t>(i) * pc;
                    for (int j = 0; j < pc; ++j) gr[j] += go[j];
                }
            }
            c0 += pc;
        }
    };
    return Tensor(std::move(n));
}

Tensor mean_pool_rows(const Tensor& x, const std::vector<uint8_t>& keep) {
    const int nr = x.rows(), nc = x.cols();
    if (static_cast<int>(keep.size()) != nr) {
        throw std::invalid_argument("mean_pool_rows: mask length mismatch");
    }
    int cnt = 0;
    for (uint8_t k : keep) cnt += k ? 1 : 0;
    if (cnt == 0) throw std::invalid_argument("mean_pool_rows: no rows selected");
    std::vector<float> out(nc, 0.0f);
    for (int i = 0; i < nr; ++i) {
        if (!keep[i]) continue;
        const float* row = x.data().data() + static_cast<size_t>(i) * nc;
        for (int j = 0; j < nc; ++j) out[j] += row[j];
    }
    for (float& v : out) v /= static_cast<float>(cnt);
    auto n = make_node("mean_pool_rows", {1, nc}, std::move(out), {x});
    auto mask = std::make_shared<std::vector<uint8_t>>(keep);
    n->backward = [mask, nr, nc, cnt](TensorNode& self, GradSink& sink) {
        if (float* g = sink.buffer(*self.parents[0].node())) {
            const float inv = 1.0f / static_cast<float>(cnt);
            for (int i = 0; i < nr; ++i) {
                if (!(*mask)[i]) continue;
                float* gr = g + static_cast<size_t>(i) * nc;
                for (int j = 0; j < nc; ++j) gr[j] += self.grad[j] * inv;
            }
        }
    };
    return Tensor(std::move(n));
}

Tensor select_row(const Tensor& x, int row) {
    const int nr = x.rows(), nc = x.cols();
    if (row < 0 || row >= nr) throw std::invalid_argument("select_row: row out of range");
    std::vector<float> out(x.data().begin() + static_cast<size_t>(row) * nc,
                           x.data().begin() + static_cast<size_t>(row + 1) * nc);
    auto n = make_node("select_row", {1, nc}, std::move(out), {x});
    n->aux_idx = {row};
    n->backward = [nc](TensorNode& self, GradSink& sink) {
        if (float* g = sink.buffer(*self.parents[0].node())) {
            float* gr = g + static_cast<size_t>(self.aux_idx[0]) * nc;
            for (int j = 0; j < nc; ++j) gr[j] += self.grad[j];
        }
    };
    return Tensor(std::move(n));
}

Tensor slice_cols(const Tensor& x, int c0, int c1) {
    const int nr = x.rows(), nc = x.cols();
    if (c0 < 0 || c1 > nc || c0 >= c1) throw std::invalid_argument("slice_cols: bad range");
    const int w = c1 - c0;
    std::vector<float> out(static_cast<size_t>(nr) * w);
    for (int i = 0; i < nr; ++i) {
        std::copy_n(x.data().data() + static_cast<size_t>(i) * nc + c0, w,
                    out.data() + static_cast<size_t>(i) * w);
    }
    auto n = make_node("slice_cols", {nr, w}, std::move(out), {x});
    n->aux_idx = {c0, nc};
    n->backward = [nr, w](TensorNode& self, GradSink& sink) {
        if (float* g = sink.buffer(*self.parents[0].node())) {
            const int c0b = self.aux_idx[0], ncb = self.aux_idx[1];
            for (int i = 0; i < nr; ++i) {
                const float* go = self.grad.data() + static_cast<size_t>(i) * w;
                float* gr = g + static_cast<size_t>(i) * ncb + c0b;
                for (int j = 0; j < w; ++j) gr[j] += go[j];
            }
        }
    };
    return Tensor(std::move(n));
}

Tensor sum_all(const Tensor& a) {
    float s = 0.0f;
    for (float v : a.data()) s += v;
    auto n = make_node("sum_all", {1}, {s}, {a});
    n->backward = [](TensorNode& self, GradSink& sink) {
        if (float* g = sink.buffer(*self.parents[0].node())) {
            const float go = self.grad[0];
            for (size_t i = 0; i < self.parents[0].data().size(); ++i) g[i] += go;
        }
    };
    return Tensor(std::move(n));
}

Tensor dropout(const Tensor& a, float p, Rng& rng) {
    if (p <= 0.0f) return a;
    if (p >= 1.0f) throw std::invalid_argument("dropout: p must be < 1");
    const float inv_keep = 1.0f / (1.0f - p);
    std::vector<float> out(a.data());
    std::vector<float> mask(out.size());
    for (size_t i = 0; i < out.size(); ++i) {
        mask[i] = rng.chance(p) ? 0.0f : inv_keep;
        out[i] *= mask[i];
    }
    auto n = make_node("dropout", a.shape(), std::move(out), {a});
    n->aux = std::move(mask);
    n->backward = [](TensorNode& self, GradSink& sink) {
        if (float* g = sink.buffer(*self.parents[0].node())) {
            for (size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * self.aux[i];
        }
    };
    return Tensor(std::move(n));
}

Tensor ce_sum(const Tensor& logits, const std::vector<int>& positions,
              const std::vector<int>& labels) {
    if (positions.size() != labels.size()) {
        throw std::invalid_argument("ce_sum: positions/labels length mismatch");
    }
    const int nr = logits.rows(), nc = logits.cols();
    const int np = static_cast<int>(positions.size());
    std::vector<float> probs(static_cast<size_t>(np) * nc);
    float loss = 0.0f;
    for (int t = 0; t < np; ++t) {
        const int r = positions[t];
        if (r < 0 || r >= nr) throw std::invalid_argument("ce_sum: position out of range");
        if (labels[t] < 0 || labels[t] >= nc) throw std::invalid_argument("ce_sum: label out of range");
        const float* row = logits.data().data() + static_cast<size_t>(r) * nc;
        float mx = row[0];
        for (int j = 1; j < nc; ++j) mx = std::max(mx, row[j]);
        float denom = 0.0f;
        float* pr = probs.data() + static_cast<size_t>(t) * nc;
        for (int j = 0; j < nc; ++j) {
            pr[j] = std::exp(row[j] - mx);
            denom += pr[j];
        }
        for (int j = 0; j < nc; ++j) pr[j] /= denom;
        loss += std::log(denom) + mx - row[labels[t]];
    }
    auto n = make_node("ce_sum", {1}, {loss}, {logits});
    n->aux = std::move(probs);
    n->aux_idx.reserve(positions.size() * 2);
    n->aux_idx.insert(n->aux_idx.end(), positions.begin(), positions.end());
    n->aux_idx.insert(n->aux_idx.end(), labels.begin(), labels.end());
    n->backward = [np, nc](TensorNode& self, GradSink& sink) {
        if (float* g = sink.buffer(*self.parents[0].node())) {
            const float go = self.grad[0];
            for (int t = 0; t < np; ++t) {
                const int r = self.aux_idx[t];
                const int lb = self.aux_idx[np + t];
                const float* pr = self.aux.data() + static_cast<size_t>(t) * nc;
                float* gr = g + static_cast<size_t>(r) * nc;
                for (int j = 0; j < nc; ++j) gr[j] += go * (pr[j] - (j == lb ? 1.0f : 0.0f));
            }
        }
    };
    return Tensor(std::move(n));
}

Tensor bce_mean(const Tensor& probs, const std::vector<float>& labels) {
    const int n = static_cast<int>(probs.numel());
    if (static_cast<int>(labels.size()) != n) {
        throw std::invalid_argument("bce_mean: labels length mismatch");
    }
    constexpr float kClamp = 1e-7f;
    float loss = 0.0f;
    for (int i = 0; i < n; ++i) {
        const float p = std::clamp(probs.data()[i], kClamp, 1.0f - kClamp);
        loss += -(labels[i] * std::log(p) + (1.0f - labels[i]) * std::log(1.0f - p));
    }
    loss /= static_cast<float>(n);
    auto node = make_node("bce_mean", {1}, {loss}, {probs});
    node->aux = labels;
    node->backward = [n](TensorNode& self, GradSink& sink) {
        if (float* g = sink.buffer(*self.parents[0].node())) {
            const float go = self.grad[0] / static_cast<float>(n);
            const auto& pd = self.parents[0].data();
            for (int i = 0; i < n; ++i) {
                if (pd[i] <= 1e-7f || pd[i] >= 1.0f - 1e-7f) continue;  // clamped region
                const float y = self.aux[i];
                g[i] += go * (-y / pd[i] + (1.0f - y) / (1.0f - pd[i]));
            }
        }
    };
    return Tensor(std::move(node));
}

}  // namespace fintrec
