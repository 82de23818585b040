#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mcm/autodiff.hpp"
#include "mcm/rng.hpp"
#include "mcm/tensor.hpp"

namespace mcm::nn {

struct NamedParam {
    std::string name;
    ad::VarPtr v;
};

using ParamList = std::vector<NamedParam>;

ad::VarPtr make_param(Shape s);
// Xavier-uniform over explicit fan counts (conv fans include the kernel area).
ad::VarPtr make_param_xavier(Shape s, long fan_in, long fan_out, std::mt19937_64& g);

struct Linear {
    ad::VarPtr w;  // [in, out]
    ad::VarPtr b;  // [out]

    Linear() = default;
    Linear(long in, long out, std::mt19937_64& g);
    ad::VarPtr apply(const ad::VarPtr& x) const;  // [m,in] -> [m,out]
    void collect(ParamList& out, const std::string& prefix) const;
};

struct Conv2d {
    ad::VarPtr w;  // [out_ch, in_ch, k, k]
    ad::VarPtr b;  // [out_ch]
    long pad = 1;

    Conv2d() = default;
    Conv2d(long in_ch, long out_ch, long k, std::mt19937_64& g);
    ad::VarPtr apply(const ad::VarPtr& x) const;  // [in_ch,H,W] -> [out_ch,H,W]
    void collect(ParamList& out, const std::string& prefix) const;
};

// Classic sin/cos positional features of a scalar in [0,1]; dim must be even.
Tensor sinusoidal_embedding(double t, long dim);

// dst <- mu*dst + (1-mu)*src, applied to values only (no tape involvement).
void ema_update(ParamList& dst, const ParamList& src, double mu);
void copy_params(ParamList& dst, const ParamList& src);
void zero_grads(ParamList& params);

// Order-sensitive FNV-1a over the raw parameter bytes; used to assert that
// frozen modules stay bit-identical across a run.
std::uint64_t params_fingerprint(const ParamList& params);

// Concatenation of all parameter values in registration order, and its
// inverse; the flat vector is the checkpoint payload.
Tensor flatten_params(const ParamList& params);
void load_flat_params(ParamList& params, const Tensor& flat);

// Same flat layout for plain tensor lists (optimizer moment buffers).
Tensor flatten_tensors(const std::vector<Tensor>& ts);
void load_flat_tensors(std::vector<Tensor>& ts, const Tensor& flat);

class Adam {
  public:
    Adam(ParamList params, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

    void step();
    void zero_grad();
    void set_lr(double lr) { lr_ = lr; }
    double lr() const { return lr_; }
    long t() const { return t_; }

    // Moment buffers in registration order, exposed for checkpointing so a
    // resumed run is bit-identical to an uninterrupted one.
    const ParamList& params() const { return params_; }
    std::vector<Tensor>& m() { return m_; }
    std::vector<Tensor>& v() { return v_; }
    const std::vector<Tensor>& m() const { return m_; }
    const std::vector<Tensor>& v() const { return v_; }
    void set_t(long t) { t_ = t; }

  private:
    ParamList params_;
    std::vector<Tensor> m_, v_;
    double lr_, beta1_, beta2_, eps_;
    long t_ = 0;
};

}  // namespace mcm::nn
