#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "mcm/tensor.hpp"

namespace mcm::ad {

struct Node;
using VarPtr = std::shared_ptr<Node>;

// One vertex of the reverse-mode tape. `backward_fn` scatters this node's
// gradient into its parents; it may capture whatever forward intermediates
// it needs. Graphs are rebuilt every step; only leaves persist.
struct Node {
    Tensor value;
    Tensor grad;  // allocated on demand, same shape as value
    bool requires_grad = false;
    std::vector<VarPtr> parents;
    std::function<void(Node&)> backward_fn;

    void ensure_grad() {
        if (grad.numel() != value.numel()) grad = Tensor::zeros(value.shape);
    }
};

// While alive, newly built ops record no graph (pure forward evaluation).
class NoGradGuard {
  public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

  private:
    bool prev_;
};

bool grad_enabled();

VarPtr var(Tensor value, bool requires_grad);
VarPtr constant(Tensor value);

// Shares the value but cuts the tape.
VarPtr detach(const VarPtr& a);

// Generic hook for ops defined outside the engine. `backward_fn` is dropped
// when grads are disabled or no parent needs them.
VarPtr make_node(Tensor value, std::vector<VarPtr> parents, std::function<void(Node&)> backward_fn);

// Runs reverse accumulation from a scalar root (numel()==1).
void backward(const VarPtr& root);

// --- elementwise ---
VarPtr add(const VarPtr& a, const VarPtr& b);
VarPtr sub(const VarPtr& a, const VarPtr& b);
VarPtr mul(const VarPtr& a, const VarPtr& b);
VarPtr scale(const VarPtr& a, double s);
VarPtr add_scalar(const VarPtr& a, double s);
VarPtr relu(const VarPtr& a);
VarPtr silu(const VarPtr& a);
VarPtr tanh_op(const VarPtr& a);
VarPtr sqrt_op(const VarPtr& a);
VarPtr square(const VarPtr& a);

// --- reductions / structure ---
VarPtr sum_all(const VarPtr& a);   // -> shape [1]
VarPtr mean_all(const VarPtr& a);  // -> shape [1]
VarPtr reshape(const VarPtr& a, Shape s);
// Select rows along axis 0 (duplicates allowed); backward scatter-adds.
VarPtr gather_first(const VarPtr& a, const std::vector<long>& rows);

// --- linear algebra ---
VarPtr matmul(const VarPtr& a, const VarPtr& b);         // [m,k]x[k,n]
VarPtr add_rowvec(const VarPtr& a, const VarPtr& bias);  // [m,n] + [n]
// x [Cin,H,W], w [Cout,Cin,k,k], b [Cout]; stride 1, zero padding keeps H,W.
VarPtr conv2d(const VarPtr& x, const VarPtr& w, const VarPtr& b, long pad);
VarPtr add_channel_bias(const VarPtr& x, const VarPtr& bias);  // [C,H,W] + [C]
VarPtr avg_pool2(const VarPtr& x);                             // [C,H,W] -> [C,H/2,W/2]

// sqrt(sum((a-b)^2) + delta^2) - delta, a smooth L2-type distance. -> [1]
VarPtr huber_distance(const VarPtr& a, const VarPtr& b, double delta);

}  // namespace mcm::ad
