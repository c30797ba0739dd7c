// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "fintrec/rng.hpp"

namespace fintrec {

using Shape = std::vector<int>;

int64_t shape_numel(const Shape& s);

class GradSink;
struct TensorNode;

// Dense float32 tensor with optional reverse-mode gradient tracking.
// Copying a Tensor copies a handle; the underlying node is shared.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(const Shape& shape, bool requires_grad = false);
    static Tensor full(const Shape& shape, float value, bool requires_grad = false);
    static Tensor from(const Shape& shape, std::vector<float> data, bool requires_grad = false);
    // leaf parameter: participates in gradient maps keyed by id
    static Tensor param(const Shape& shape, std::vector<float> data);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const;
    int64_t numel() const;
    int rows() const;  // shape[0] (1 for 1-D)
    int cols() const;  // last extent
    const std::vector<float>& data() const;
    std::vector<float>& mutable_data();  // for optimizer updates on leaves
    bool requires_grad() const;
    void set_requires_grad(bool v);  // leaves only: toggles trainability (freezing)
    int64_t id() const;
    const char* op_name() const;
    float scalar() const;  // numel() == 1
    float at(int r, int c) const;

    // set after backward() on any node that received a gradient
    bool has_grad() const;
    const std::vector<float>& grad() const;

    bool all_finite() const;

    std::shared_ptr<TensorNode> node() const { return node_; }
    explicit Tensor(std::shared_ptr<TensorNode> n) : node_(std::move(n)) {}

private:
    std::shared_ptr<TensorNode> node_;
};

struct TensorNode {
    int64_t id = 0;
    const char* op = "leaf";
    Shape shape;
    std::vector<float> data;
    std::vector<float> grad;  // allocated lazily during backward
    bool requires_grad = false;
    bool is_leaf = true;
    std::vector<Tensor> parents;
    // pulls this->grad and pushes contributions into parent buffers
    std::function<void(TensorNode&, GradSink&)> backward;
    std::vector<float> aux;       // op-private cache (e.g. softmax probs)
    std::vector<int> aux_idx;     // op-private cache (e.g. lookup ids)
};

// parameter id -> accumulated gradient
using GradMap = std::unordered_map<int64_t, std::vector<float>>;

// Routes gradient accumulation: leaf parameters go to an external map so
// independent graphs can share parameters without racing on a grad buffer;
// interior nodes accumulate in place.
class GradSink {
public:
    explicit GradSink(GradMap& out) : out_(out) {}
    // nullptr when the node does not require grad
    float* buffer(TensorNode& n);

private:
    GradMap& out_;
};

// Reverse-mode sweep from a scalar loss. Gradients of leaf parameters are
// accumulated into `sink`; interior node gradients stay on the nodes.
// Throws on non-scalar loss, graph cycles, and non-finite gradients
// (message carries the offending node id and op).
void backward(const Tensor& loss, GradMap& sink);

// convenience wrapper matching adamw/eval call sites
GradMap forward_backward(const Tensor& loss);

// ---- differentiable ops ------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);                 // same shape
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);                 // elementwise
Tensor scale(const Tensor& a, float c);
Tensor add_bias(const Tensor& x, const Tensor& bias);         // [n,m] + [m]
Tensor matmul(const Tensor& a, const Tensor& b);              // [n,k]x[k,m]
Tensor matmul_nt(const Tensor& a, const Tensor& b);           // [n,k]x[m,k]^T
Tensor sigmoid(const Tensor& a);
Tensor gelu(const Tensor& a);
Tensor softmax_rows(const Tensor& a);
// disallowed entries are exactly zero in the output; fully masked rows
// produce an all-zero row
Tensor masked_softmax_rows(const Tensor& a, const std::vector<uint8_t>& allow);
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, float eps = 1e-5f);
Tensor embedding_lookup(const Tensor& table, const std::vector<int>& ids);
// two-table lookup: ids below base.rows() read the base table, the rest read
// row (id - base.rows()) of the extension; gradients scatter into whichever
// table is trainable
Tensor embedding_lookup_ext(const Tensor& base, const Tensor& ext, const std::vector<int>& ids);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor mean_pool_rows(const Tensor& x, const std::vector<uint8_t>& keep);  // -> [1,d]
Tensor select_row(const Tensor& x, int row);                               // -> [1,d]
Tensor slice_cols(const Tensor& x, int c0, int c1);
Tensor sum_all(const Tensor& a);
Tensor dropout(const Tensor& a, float p, Rng& rng);  // inverted scaling; p==0 is identity

// sum of softmax cross-entropy over the given rows; rows outside
// `positions` receive exactly zero gradient
Tensor ce_sum(const Tensor& logits, const std::vector<int>& positions,
              const std::vector<int>& labels);

// mean binary cross-entropy; probabilities clamped to [1e-7, 1-1e-7]
Tensor bce_mean(const Tensor& probs, const std::vector<float>& labels);

}  // namespace fintrec
