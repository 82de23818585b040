#include "mcm/nn.hpp"

#include <cmath>

namespace mcm::nn {

ad::VarPtr make_param(Shape s) { return ad::var(Tensor::zeros(std::move(s)), true); }

ad::VarPtr make_param_xavier(Shape s, long fan_in, long fan_out, std::mt19937_64& g) {
    double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Tensor t(std::move(s));
    std::uniform_real_distribution<double> d(-a, a);
    for (double& x : t.data) x = d(g);
    return ad::var(std::move(t), true);
}

Linear::Linear(long in, long out, std::mt19937_64& g)
    : w(make_param_xavier({in, out}, in, out, g)), b(make_param({out})) {}

ad::VarPtr Linear::apply(const ad::VarPtr& x) const {
    return ad::add_rowvec(ad::matmul(x, w), b);
}

void Linear::collect(ParamList& out, const std::string& prefix) const {
    out.push_back({prefix + ".w", w});
    out.push_back({prefix + ".b", b});
}

Conv2d::Conv2d(long in_ch, long out_ch, long k, std::mt19937_64& g)
    : w(make_param_xavier({out_ch, in_ch, k, k}, in_ch * k * k, out_ch * k * k, g)),
      b(make_param({out_ch})),
      pad(k / 2) {}

ad::VarPtr Conv2d::apply(const ad::VarPtr& x) const { return ad::conv2d(x, w, b, pad); }

void Conv2d::collect(ParamList& out, const std::string& prefix) const {
    out.push_back({prefix + ".w", w});
    out.push_back({prefix + ".b", b});
}

Tensor sinusoidal_embedding(double t, long dim) {
    if (dim % 2 != 0) throw ParameterError("sinusoidal_embedding: dim must be even");
    Tensor e({dim});
    long half = dim / 2;
    for (long i = 0; i < half; ++i) {
        double freq = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(half));
        e.data[i] = std::sin(t * freq * 1000.0);
        e.data[half + i] = std::cos(t * freq * 1000.0);
    }
    return e;
}

void ema_update(ParamList& dst, const ParamList& src, double mu) {
    if (dst.size() != src.size()) throw ParameterError("ema_update: parameter count mismatch");
    if (mu < 0.0 || mu > 1.0) throw ParameterError("ema_update: mu outside [0,1]");
    for (size_t i = 0; i < dst.size(); ++i) {
        Tensor& d = dst[i].v->value;
        const Tensor& s = src[i].v->value;
        check_same_shape(d, s, "ema_update");
        for (long j = 0; j < d.numel(); ++j) d.data[j] = mu * d.data[j] + (1.0 - mu) * s.data[j];
    }
}

void copy_params(ParamList& dst, const ParamList& src) {
    if (dst.size() != src.size()) throw ParameterError("copy_params: parameter count mismatch");
    for (size_t i = 0; i < dst.size(); ++i) {
        check_same_shape(dst[i].v->value, src[i].v->value, "copy_params");
        dst[i].v->value.data = src[i].v->value.data;
    }
}

void zero_grads(ParamList& params) {
    for (auto& p : params) {
        p.v->ensure_grad();
        std::fill(p.v->grad.data.begin(), p.v->grad.data.end(), 0.0);
    }
}

std::uint64_t params_fingerprint(const ParamList& params) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto feed = [&h](const void* p, size_t n) {
        const unsigned char* b = static_cast<const unsigned char*>(p);
        for (size_t i = 0; i < n; ++i) {
            h ^= b[i];
            h *= 0x100000001b3ULL;
        }
    };
    for (const auto& p : params) {
        feed(p.name.data(), p.name.size());
        feed(p.v->value.data.data(), p.v->value.data.size() * sizeof(double));
    }
    return h;
}

Tensor flatten_params(const ParamList& params) {
    long total = 0;
    for (const auto& p : params) total += p.v->value.numel();
    Tensor flat({total});
    long off = 0;
    for (const auto& p : params) {
        std::copy(p.v->value.data.begin(), p.v->value.data.end(), flat.data.begin() + off);
        off += p.v->value.numel();
    }
    return flat;
}

void load_flat_params(ParamList& params, const Tensor& flat) {
    long total = 0;
    for (const auto& p : params) total += p.v->value.numel();
    if (flat.numel() != total)
        throw ShapeError("load_flat_params: expected " + std::to_string(total) + " values, got " +
                         std::to_string(flat.numel()));
    long off = 0;
    for (auto& p : params) {
        std::copy(flat.data.begin() + off, flat.data.begin() + off + p.v->value.numel(),
                  p.v->value.data.begin());
        off += p.v->value.numel();
    }
}

Tensor flatten_tensors(const std::vector<Tensor>& ts) {
    long total = 0;
    for (const auto& t : ts) total += t.numel();
    Tensor flat({total});
    long off = 0;
    for (const auto& t : ts) {
        std::copy(t.data.begin(), t.data.end(), flat.data.begin() + off);
        off += t.numel();
    }
    return flat;
}

void load_flat_tensors(std::vector<Tensor>& ts, const Tensor& flat) {
    long total = 0;
    for (const auto& t : ts) total += t.numel();
    if (flat.numel() != total)
        throw ShapeError("load_flat_tensors: expected " + std::to_string(total) +
                         " values, got " + std::to_string(flat.numel()));
    long off = 0;
    for (auto& t : ts) {
        std::copy(flat.data.begin() + off, flat.data.begin() + off + t.numel(),
                  t.data.begin());
        off += t.numel();
    }
}

Adam::Adam(ParamList params, double lr, double beta1, double beta2, double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    if (lr <= 0.0) throw ParameterError("Adam: lr must be positive");
    for (auto& p : params_) {
        m_.push_back(Tensor::zeros(p.v->value.shape));
        v_.push_back(Tensor::zeros(p.v->value.shape));
    }
}

void Adam::step() {
    ++t_;
    double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (size_t i = 0; i < params_.size(); ++i) {
        auto& p = params_[i].v;
        p->ensure_grad();
        Tensor& m = m_[i];
        Tensor& v = v_[i];
        for (long j = 0; j < p->value.numel(); ++j) {
            double g = p->grad.data[j];
            m.data[j] = beta1_ * m.data[j] + (1.0 - beta1_) * g;
            v.data[j] = beta2_ * v.data[j] + (1.0 - beta2_) * g * g;
            double mhat = m.data[j] / bc1;
            double vhat = v.data[j] / bc2;
            p->value.data[j] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
        }
    }
}

void Adam::zero_grad() { zero_grads(params_); }

}  // namespace mcm::nn
