#include "mergerlab/autodiff_net.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "mergerlab/errors.hpp"
#include "mergerlab/rng.hpp"

namespace mergerlab {

void NetSpec::validate() const {
    if (input_dim < 1 || output_dim < 1) throw InvalidInput("NetSpec: dims must be >= 1");
    for (std::size_t hdim : hidden)
        if (hdim < 1) throw InvalidInput("NetSpec: hidden width must be >= 1");
}

std::vector<std::size_t> NetSpec::layer_dims() const {
    std::vector<std::size_t> dims{input_dim};
    dims.insert(dims.end(), hidden.begin(), hidden.end());
    dims.push_back(output_dim);
    return dims;
}

std::size_t NetSpec::param_count() const {
    const auto dims = layer_dims();
    std::size_t n = 0;
    for (std::size_t i = 0; i + 1 < dims.size(); ++i) n += (dims[i] + 1) * dims[i + 1];
    return n;
}

namespace {

inline double act_eval(Activation a, double x) {
    switch (a) {
        case Activation::SoftPlus:
            return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
        case Activation::Sigmoidal:
            return 1.0 / (1.0 + std::exp(-x));
        case Activation::RectifiedSmooth:
            return x / (1.0 + std::exp(-x));
    }
    return x;
}

inline double act_grad(Activation a, double x) {
    const double s = 1.0 / (1.0 + std::exp(-x));
    switch (a) {
        case Activation::SoftPlus:
            return s;
        case Activation::Sigmoidal:
            return s * (1.0 - s);
        case Activation::RectifiedSmooth:
            return s + x * s * (1.0 - s);
    }
    return 1.0;
}

// Forward pass keeping preactivations for the backward sweep.
struct Trace {
    std::vector<Vec> pre;   // per layer
    std::vector<Vec> post;  // post[0] = input
};

void run_forward(const NetSpec& net, const ParamVector& theta, const Vec& input,
                 Trace& t) {
    if (input.size() != net.input_dim) throw EncodingError("net_forward: input dim mismatch");
    if (theta.size() != net.param_count())
        throw EncodingError("net_forward: theta length mismatch");
    const auto dims = net.layer_dims();
    const std::size_t L = dims.size() - 1;
    t.pre.assign(L, {});
    t.post.assign(L + 1, {});
    t.post[0] = input;
    std::size_t off = 0;
    for (std::size_t l = 0; l < L; ++l) {
        const std::size_t nin = dims[l], nout = dims[l + 1];
        const double* wts = theta.data() + off;
        const double* bias = wts + nin * nout;
        Vec& a = t.pre[l];
        a.assign(nout, 0.0);
        const Vec& h = t.post[l];
        for (std::size_t o = 0; o < nout; ++o) {
            double acc = bias[o];
            const double* row = wts + o * nin;
            for (std::size_t i = 0; i < nin; ++i) acc += row[i] * h[i];
            a[o] = acc;
        }
        Vec& out = t.post[l + 1];
        out.resize(nout);
        if (l + 1 == L) {
            out = a;  // affine output layer
        } else {
            for (std::size_t o = 0; o < nout; ++o) out[o] = act_eval(net.activation, a[o]);
        }
        off += (nin + 1) * nout;
    }
}

}  // namespace

Vec net_forward(const NetSpec& net, const ParamVector& theta, const Vec& input) {
    Trace t;
    run_forward(net, theta, input, t);
    return t.post.back();
}

void net_accumulate_grad_theta(const NetSpec& net, const ParamVector& theta,
                               const Vec& input, const Vec& output_cotangent,
                               ParamVector& grad) {
    if (output_cotangent.size() != net.output_dim)
        throw EncodingError("net_grad_theta: cotangent dim mismatch");
    if (grad.size() != theta.size()) throw EncodingError("net_grad_theta: grad buffer size");
    Trace t;
    run_forward(net, theta, input, t);
    const auto dims = net.layer_dims();
    const std::size_t L = dims.size() - 1;

    std::vector<std::size_t> offsets(L);
    std::size_t off = 0;
    for (std::size_t l = 0; l < L; ++l) {
        offsets[l] = off;
        off += (dims[l] + 1) * dims[l + 1];
    }

    Vec delta = output_cotangent;
    for (std::size_t l = L; l-- > 0;) {
        const std::size_t nin = dims[l], nout = dims[l + 1];
        const double* wts = theta.data() + offsets[l];
        double* gw = grad.data() + offsets[l];
        double* gb = gw + nin * nout;
        const Vec& h = t.post[l];
        for (std::size_t o = 0; o < nout; ++o) {
            const double d = delta[o];
            double* grow = gw + o * nin;
            for (std::size_t i = 0; i < nin; ++i) grow[i] += d * h[i];
            gb[o] += d;
        }
        if (l == 0) break;
        Vec prev(nin, 0.0);
        for (std::size_t o = 0; o < nout; ++o) {
            const double d = delta[o];
            const double* row = wts + o * nin;
            for (std::size_t i = 0; i < nin; ++i) prev[i] += d * row[i];
        }
        for (std::size_t i = 0; i < nin; ++i)
            prev[i] *= act_grad(net.activation, t.pre[l - 1][i]);
        delta = std::move(prev);
    }
}

ParamVector net_grad_theta(const NetSpec& net, const ParamVector& theta,
                           const Vec& input, const Vec& output_cotangent) {
    ParamVector grad(theta.size(), 0.0);
    net_accumulate_grad_theta(net, theta, input, output_cotangent, grad);
    return grad;
}

Vec net_grad_input(const NetSpec& net, const ParamVector& theta, const Vec& input,
                   const Vec& output_cotangent) {
    if (output_cotangent.size() != net.output_dim)
        throw EncodingError("net_grad_input: cotangent dim mismatch");
    Trace t;
    run_forward(net, theta, input, t);
    const auto dims = net.layer_dims();
    const std::size_t L = dims.size() - 1;
    std::vector<std::size_t> offsets(L);
    std::size_t off = 0;
    for (std::size_t l = 0; l < L; ++l) {
        offsets[l] = off;
        off += (dims[l] + 1) * dims[l + 1];
    }
    Vec delta = output_cotangent;
    for (std::size_t l = L; l-- > 0;) {
        const std::size_t nin = dims[l], nout = dims[l + 1];
        const double* wts = theta.data() + offsets[l];
        Vec prev(nin, 0.0);
        for (std::size_t o = 0; o < nout; ++o) {
            const double d = delta[o];
            const double* row = wts + o * nin;
            for (std::size_t i = 0; i < nin; ++i) prev[i] += d * row[i];
        }
        if (l > 0)
            for (std::size_t i = 0; i < nin; ++i)
                prev[i] *= act_grad(net.activation, t.pre[l - 1][i]);
        delta = std::move(prev);
    }
    return delta;
}

ParamVector net_init(const NetSpec& net) {
    net.validate();
    // Gain keeps layer output variance near its input variance: the first
    // affine sees raw (unit-scale) inputs, later ones see activation outputs
    // whose variance has shrunk by the activation-specific factor.
    double gain_next = 3.68;
    if (net.activation == Activation::Sigmoidal) gain_next = 23.0;
    if (net.activation == Activation::RectifiedSmooth) gain_next = 3.19;

    const auto dims = net.layer_dims();
    ParamVector theta(net.param_count(), 0.0);
    PhiloxRng rng(net.init_seed, 0x1a17);
    std::size_t off = 0;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        const std::size_t nin = dims[l], nout = dims[l + 1];
        const double gain = l == 0 ? 1.0 : gain_next;
        const double lim = std::sqrt(3.0 * gain) / std::sqrt(static_cast<double>(nin));
        for (std::size_t i = 0; i < nin * nout; ++i)
            theta[off + i] = lim * (2.0 * rng.uniform() - 1.0);
        off += (nin + 1) * nout;  // biases stay zero
    }
    return theta;
}

namespace {

const char* act_name(Activation a) {
    switch (a) {
        case Activation::Sigmoidal: return "sigmoid";
        case Activation::SoftPlus: return "softplus";
        case Activation::RectifiedSmooth: return "rectified_smooth";
    }
    return "softplus";
}

Activation act_from_name(const std::string& s) {
    if (s == "sigmoid") return Activation::Sigmoidal;
    if (s == "softplus") return Activation::SoftPlus;
    if (s == "rectified_smooth") return Activation::RectifiedSmooth;
    throw InvalidInput("unknown activation: " + s);
}

}  // namespace

void net_save(const std::string& path, const NetSpec& net, const ParamVector& theta) {
    if (theta.size() != net.param_count()) throw InvalidInput("net_save: theta size mismatch");
    std::ofstream f(path, std::ios::binary);
    if (!f) throw InvalidInput("net_save: cannot open " + path);
    f << "mergerlab-net v1\n";
    f << "input_dim " << net.input_dim << "\n";
    f << "hidden";
    for (std::size_t hdim : net.hidden) f << " " << hdim;
    f << "\n";
    f << "output_dim " << net.output_dim << "\n";
    f << "activation " << act_name(net.activation) << "\n";
    f << "init_seed " << net.init_seed << "\n";
    f << "params " << theta.size() << "\n";
    // doubles written verbatim; this targets little-endian hosts
    f.write(reinterpret_cast<const char*>(theta.data()),
            static_cast<std::streamsize>(theta.size() * sizeof(double)));
}

std::pair<NetSpec, ParamVector> net_load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw InvalidInput("net_load: cannot open " + path);
    std::string line;
    std::getline(f, line);
    if (line != "mergerlab-net v1") throw InvalidInput("net_load: bad header");
    NetSpec net;
    std::size_t nparams = 0;
    for (int i = 0; i < 5; ++i) {
        std::getline(f, line);
        std::istringstream ss(line);
        std::string key;
        ss >> key;
        if (key == "input_dim") ss >> net.input_dim;
        else if (key == "hidden") {
            std::size_t hdim;
            net.hidden.clear();
            while (ss >> hdim) net.hidden.push_back(hdim);
        } else if (key == "output_dim") ss >> net.output_dim;
        else if (key == "activation") {
            std::string a;
            ss >> a;
            net.activation = act_from_name(a);
        } else if (key == "init_seed") ss >> net.init_seed;
        else throw InvalidInput("net_load: unexpected key " + key);
    }
    std::getline(f, line);
    {
        std::istringstream ss(line);
        std::string key;
        ss >> key >> nparams;
        if (key != "params") throw InvalidInput("net_load: missing params line");
    }
    if (nparams != net.param_count()) throw InvalidInput("net_load: params count mismatch");
    ParamVector theta(nparams);
    f.read(reinterpret_cast<char*>(theta.data()),
           static_cast<std::streamsize>(nparams * sizeof(double)));
    if (!f) throw InvalidInput("net_load: truncated payload");
    return {net, theta};
}

}  // namespace mergerlab
