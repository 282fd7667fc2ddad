#pragma once

// Small dense MLP with manual reverse-mode gradients. Hidden layers share
// one activation; the output layer is linear. The finite-difference check in
// the test suite is the standing oracle for the backward pass.

#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "voisim/common.hpp"
#include "voisim/csv.hpp"
#include "voisim/linalg.hpp"

namespace voisim {

enum class Act { tanh_act, relu, identity };

inline std::string act_name(Act a) {
    switch (a) {
        case Act::tanh_act: return "tanh";
        case Act::relu: return "relu";
        case Act::identity: return "identity";
    }
    return "?";
}

inline Act act_from_name(const std::string& s) {
    if (s == "tanh") return Act::tanh_act;
    if (s == "relu") return Act::relu;
    if (s == "identity") return Act::identity;
    throw contract_violation("unknown activation '" + s + "'");
}

struct Mlp {
    std::vector<int> layer_sizes;  // input, hidden..., output
    std::vector<Mat> w;            // per layer: (n_out x n_in)
    std::vector<Vec> b;
    Act hidden = Act::tanh_act;
    Act out = Act::identity;

    int in_dim() const { return layer_sizes.front(); }
    int out_dim() const { return layer_sizes.back(); }
    size_t n_layers() const { return w.size(); }

    size_t param_count() const {
        size_t n = 0;
        for (size_t l = 0; l + 1 < layer_sizes.size(); ++l)
            n += static_cast<size_t>(layer_sizes[l] + 1) * layer_sizes[l + 1];
        return n;
    }
};

inline Mlp make_mlp(const std::vector<int>& sizes, Act hidden, uint64_t seed,
                    Act out = Act::identity) {
    require(sizes.size() >= 2, "make_mlp: need at least input and output sizes");
    for (int n : sizes) require(n >= 1, "make_mlp: layer sizes must be >= 1");
    Mlp net;
    net.layer_sizes = sizes;
    net.hidden = hidden;
    net.out = out;
    Rng rng(seed);
    for (size_t l = 0; l + 1 < sizes.size(); ++l) {
        const int ni = sizes[l], no = sizes[l + 1];
        const double s = 1.0 / std::sqrt(static_cast<double>(ni));
        Mat m(no, ni);
        for (double& v : m.a) v = rng.uniform(-s, s);
        net.w.push_back(std::move(m));
        Vec bias(no);
        for (double& v : bias) v = rng.uniform(-s, s);
        net.b.push_back(std::move(bias));
    }
    return net;
}

inline Mlp make_zero_mlp(const std::vector<int>& sizes, Act hidden) {
    Mlp net = make_mlp(sizes, hidden, 0);
    for (auto& m : net.w) std::fill(m.a.begin(), m.a.end(), 0.0);
    for (auto& bias : net.b) std::fill(bias.begin(), bias.end(), 0.0);
    return net;
}

// Per-call activation buffers; reuse across calls to avoid allocation in
// training loops.
struct MlpCache {
    std::vector<Vec> pre;   // pre-activation per layer
    std::vector<Vec> post;  // post-activation per layer (post[0] = input)
};

namespace detail {

inline double act_apply(Act a, double x) {
    switch (a) {
        case Act::tanh_act: return std::tanh(x);
        case Act::relu: return x > 0.0 ? x : 0.0;
        case Act::identity: return x;
    }
    return x;
}

inline double act_deriv_from(Act a, double pre, double post) {
    switch (a) {
        case Act::tanh_act: return 1.0 - post * post;
        case Act::relu: return pre > 0.0 ? 1.0 : 0.0;
        case Act::identity: return 1.0;
    }
    return 1.0;
}

}  // namespace detail

inline const Vec& mlp_forward_cached(const Mlp& net, const Vec& x, MlpCache& cache) {
    require(static_cast<int>(x.size()) == net.in_dim(), "mlp_forward: input dimension mismatch");
    const size_t L = net.n_layers();
    cache.pre.resize(L);
    cache.post.resize(L + 1);
    cache.post[0] = x;
    for (size_t l = 0; l < L; ++l) {
        const Mat& w = net.w[l];
        const Vec& in = cache.post[l];
        Vec& pre = cache.pre[l];
        pre.assign(w.rows, 0.0);
        for (size_t i = 0; i < w.rows; ++i) {
            double s = net.b[l][i];
            const double* row = &w.a[i * w.cols];
            for (size_t j = 0; j < w.cols; ++j) s += row[j] * in[j];
            pre[i] = s;
        }
        const Act a = (l + 1 == L) ? net.out : net.hidden;
        Vec& post = cache.post[l + 1];
        post.resize(pre.size());
        for (size_t i = 0; i < pre.size(); ++i) post[i] = detail::act_apply(a, pre[i]);
    }
    return cache.post[L];
}

inline Vec mlp_forward(const Mlp& net, const Vec& x) {
    MlpCache cache;
    return mlp_forward_cached(net, x, cache);
}

struct MlpGrads {
    std::vector<Mat> w;
    std::vector<Vec> b;
    Vec x;  // gradient w.r.t. the input vector

    void init_like(const Mlp& net) {
        w.clear();
        b.clear();
        for (size_t l = 0; l < net.n_layers(); ++l) {
            w.emplace_back(net.w[l].rows, net.w[l].cols);
            b.emplace_back(net.b[l].size(), 0.0);
        }
        x.assign(net.in_dim(), 0.0);
    }

    void zero() {
        for (auto& m : w) std::fill(m.a.begin(), m.a.end(), 0.0);
        for (auto& v : b) std::fill(v.begin(), v.end(), 0.0);
        std::fill(x.begin(), x.end(), 0.0);
    }
};

// Accumulates d(output . upstream)/d(params) into `grads` (call zero() first
// for a fresh gradient). The input gradient lands in grads.x (overwritten,
// not accumulated).
inline void mlp_backward_cached(const Mlp& net, const MlpCache& cache, const Vec& upstream,
                                MlpGrads& grads) {
    const size_t L = net.n_layers();
    require(upstream.size() == static_cast<size_t>(net.out_dim()),
            "mlp_backward: upstream dimension mismatch");
    require(grads.w.size() == L, "mlp_backward: grads not initialized (init_like)");
    Vec delta = upstream;  // gradient w.r.t. post-activation of current layer
    for (size_t l = L; l-- > 0;) {
        const Act a = (l + 1 == L) ? net.out : net.hidden;
        // through activation
        for (size_t i = 0; i < delta.size(); ++i)
            delta[i] *= detail::act_deriv_from(a, cache.pre[l][i], cache.post[l + 1][i]);
        const Vec& in = cache.post[l];
        Mat& gw = grads.w[l];
        Vec& gb = grads.b[l];
        for (size_t i = 0; i < delta.size(); ++i) {
            gb[i] += delta[i];
            double* grow = &gw.a[i * gw.cols];
            const double d = delta[i];
            for (size_t j = 0; j < in.size(); ++j) grow[j] += d * in[j];
        }
        // propagate to the layer input
        Vec next(in.size(), 0.0);
        const Mat& w = net.w[l];
        for (size_t i = 0; i < delta.size(); ++i) {
            const double* row = &w.a[i * w.cols];
            const double d = delta[i];
            for (size_t j = 0; j < next.size(); ++j) next[j] += d * row[j];
        }
        delta = std::move(next);
    }
    grads.x = std::move(delta);
}

inline MlpGrads mlp_backward(const Mlp& net, const Vec& x, const Vec& upstream) {
    MlpCache cache;
    mlp_forward_cached(net, x, cache);
    MlpGrads g;
    g.init_like(net);
    mlp_backward_cached(net, cache, upstream, g);
    return g;
}

// ---------------------------------------------------------------------------
// Adam over the structured parameters of one Mlp.

class Adam {
  public:
    Adam() = default;
    explicit Adam(const Mlp& net, double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999,
                  double eps = 1e-8)
        : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {
        m_.assign(net.param_count(), 0.0);
        v_.assign(net.param_count(), 0.0);
    }

    // params -= adam update from grads; `scale` multiplies the gradient
    // (use -1 for ascent).
    void step(Mlp& net, const MlpGrads& grads, double scale = 1.0) {
        ++t_;
        const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
        size_t k = 0;
        for (size_t l = 0; l < net.n_layers(); ++l) {
            for (size_t i = 0; i < net.w[l].a.size(); ++i)
                update(net.w[l].a[i], scale * grads.w[l].a[i], k++, c1, c2);
            for (size_t i = 0; i < net.b[l].size(); ++i)
                update(net.b[l][i], scale * grads.b[l][i], k++, c1, c2);
        }
        require(k == m_.size(), "Adam: parameter count changed under the optimizer");
    }

  private:
    void update(double& p, double g, size_t k, double c1, double c2) {
        m_[k] = b1_ * m_[k] + (1.0 - b1_) * g;
        v_[k] = b2_ * v_[k] + (1.0 - b2_) * g * g;
        p -= lr_ * (m_[k] / c1) / (std::sqrt(v_[k] / c2) + eps_);
    }

    double lr_ = 1e-3, b1_ = 0.9, b2_ = 0.999, eps_ = 1e-8;
    long t_ = 0;
    Vec m_, v_;
};

// ---------------------------------------------------------------------------
// Versioned textual checkpoint: layer sizes, activation, then row-major
// weights and biases per layer, one layer per line, round-trip exact.

inline void mlp_save_stream(const Mlp& net, std::ostream& out, const std::string& name) {
    out << "# mlp v1 " << name << '\n';
    out << "sizes:";
    for (size_t i = 0; i < net.layer_sizes.size(); ++i)
        out << (i ? ',' : ' ') << net.layer_sizes[i];
    out << '\n';
    out << "activation: " << act_name(net.hidden) << ',' << act_name(net.out) << '\n';
    for (size_t l = 0; l < net.n_layers(); ++l) {
        out << "w" << l << ':';
        for (size_t i = 0; i < net.w[l].a.size(); ++i) out << (i ? ',' : ' ') << format_double(net.w[l].a[i]);
        out << '\n';
        out << "b" << l << ':';
        for (size_t i = 0; i < net.b[l].size(); ++i) out << (i ? ',' : ' ') << format_double(net.b[l][i]);
        out << '\n';
    }
}

namespace detail {

inline Vec parse_number_list(const std::string& line, const std::string& what) {
    auto pos = line.find(':');
    require(pos != std::string::npos, "mlp_load: malformed line in " + what);
    Vec out;
    for (const auto& cell : split_csv_line(line.substr(pos + 1)))
        if (!cell.empty()) out.push_back(parse_double(cell, what));
    return out;
}

}  // namespace detail

inline Mlp mlp_load_stream(std::istream& in) {
    std::string line;
    require(static_cast<bool>(std::getline(in, line)), "mlp_load: empty input");
    require(line.rfind("# mlp v1", 0) == 0, "mlp_load: missing version header");
    require(static_cast<bool>(std::getline(in, line)), "mlp_load: missing sizes");
    Vec sizes_d = detail::parse_number_list(line, "sizes");
    std::vector<int> sizes;
    for (double s : sizes_d) sizes.push_back(static_cast<int>(s));
    require(static_cast<bool>(std::getline(in, line)), "mlp_load: missing activation");
    auto pos = line.find(':');
    require(pos != std::string::npos, "mlp_load: malformed activation line");
    auto acts = split_csv_line(line.substr(pos + 1));
    require(acts.size() == 2, "mlp_load: malformed activation line");
    Mlp net = make_zero_mlp(sizes, act_from_name(acts[0]));
    net.out = act_from_name(acts[1]);
    for (size_t l = 0; l < net.n_layers(); ++l) {
        require(static_cast<bool>(std::getline(in, line)), "mlp_load: missing weights");
        Vec wv = detail::parse_number_list(line, "weights");
        require(wv.size() == net.w[l].a.size(), "mlp_load: weight count mismatch");
        net.w[l].a = wv;
        require(static_cast<bool>(std::getline(in, line)), "mlp_load: missing biases");
        Vec bv = detail::parse_number_list(line, "biases");
        require(bv.size() == net.b[l].size(), "mlp_load: bias count mismatch");
        net.b[l] = bv;
    }
    return net;
}

inline void mlp_save(const Mlp& net, const std::string& path) {
    std::ofstream out(path);
    require(out.good(), "mlp_save: cannot open " + path);
    mlp_save_stream(net, out, "net");
}

inline Mlp mlp_load(const std::string& path) {
    std::ifstream in(path);
    require(in.good(), "mlp_load: cannot open " + path);
    return mlp_load_stream(in);
}

}  // namespace voisim
