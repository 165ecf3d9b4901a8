#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mergerlab/linalg.hpp"

namespace mergerlab {

enum class Activation { Sigmoidal, SoftPlus, RectifiedSmooth };

/// Plain feedforward net: affine layers with a smooth activation between
/// them, affine output. Small enough that everything runs on flat
/// double vectors.
struct NetSpec {
    std::size_t input_dim = 1;
    std::vector<std::size_t> hidden;  // e.g. {3,3} or {100,100}; empty = affine
    std::size_t output_dim = 1;
    Activation activation = Activation::SoftPlus;
    std::uint64_t init_seed = 0;

    void validate() const;
    std::size_t param_count() const;
    std::vector<std::size_t> layer_dims() const;  // input, hidden..., output
};

using ParamVector = Vec;

/// Forward evaluation.
Vec net_forward(const NetSpec& net, const ParamVector& theta, const Vec& input);

/// Reverse-mode gradient of cotangent . output with respect to theta.
ParamVector net_grad_theta(const NetSpec& net, const ParamVector& theta,
                           const Vec& input, const Vec& output_cotangent);

/// Same accumulated in place: grad += d(cotangent . output)/d theta. Lets
/// training loops reuse one buffer across observations.
void net_accumulate_grad_theta(const NetSpec& net, const ParamVector& theta,
                               const Vec& input, const Vec& output_cotangent,
                               ParamVector& grad);

/// Reverse-mode gradient with respect to the input.
Vec net_grad_input(const NetSpec& net, const ParamVector& theta, const Vec& input,
                   const Vec& output_cotangent);

/// Symmetric uniform init scaled by 1/sqrt(fan_in), with per-activation gain
/// so outputs stay O(1) on unit-scale inputs. Biases start at zero.
ParamVector net_init(const NetSpec& net);

/// Checkpoint: text header followed by the raw little-endian doubles of
/// theta. Round-trips bit-exactly.
void net_save(const std::string& path, const NetSpec& net, const ParamVector& theta);
std::pair<NetSpec, ParamVector> net_load(const std::string& path);

}  // namespace mergerlab
