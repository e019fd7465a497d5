#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <vector>

#include "sgn/linalg.hpp"
#include "sgn/losses.hpp"
#include "sgn/rng.hpp"
#include "sgn/types.hpp"

namespace sgn {

enum class Activation { swish, identity };

struct MlpSpec {
    std::vector<Index> layer_widths;  // input dim first, output dim last
    Activation activation = Activation::swish;
    double init_scale = 1.8;
    std::uint64_t seed = 0;

    void validate() const {
        if (layer_widths.size() < 2)
            throw std::invalid_argument("MlpSpec: need at least input and output widths");
        for (Index w : layer_widths)
            if (w < 1) throw std::invalid_argument("MlpSpec: widths must be >= 1");
        if (init_scale <= 0.0) throw std::invalid_argument("MlpSpec: init_scale must be > 0");
    }

    Index input_dim() const { return layer_widths.front(); }
    Index output_dim() const { return layer_widths.back(); }
    Index num_layers() const { return static_cast<Index>(layer_widths.size()) - 1; }

    // Convenience constructor for the width/depth form used by the tasks:
    // `depth` hidden layers of size `width`.
    static MlpSpec make(Index input, Index width, Index depth, Index output,
                        Activation act = Activation::swish, double scale = 1.8,
                        std::uint64_t seed = 0) {
        MlpSpec spec;
        spec.layer_widths.push_back(input);
        for (Index i = 0; i < depth; ++i) spec.layer_widths.push_back(width);
        spec.layer_widths.push_back(output);
        spec.activation = act;
        spec.init_scale = scale;
        spec.seed = seed;
        spec.validate();
        return spec;
    }
};

// Offsets of each weight matrix and bias inside the flat parameter vector.
// Weight matrices are stored column-major, biases follow their layer's
// weights.
struct ParamLayout {
    struct Block {
        Index offset;
        Index rows;
        Index cols;  // cols == 1 for biases
        Index layer;
        bool is_bias;
        Index size() const { return rows * cols; }
    };
    std::vector<Block> blocks;
    Index total = 0;

    const Block& weight(Index layer) const { return blocks[2 * layer]; }
    const Block& bias(Index layer) const { return blocks[2 * layer + 1]; }
};

inline ParamLayout make_layout(const MlpSpec& spec) {
    spec.validate();
    ParamLayout layout;
    Index offset = 0;
    for (Index l = 0; l < spec.num_layers(); ++l) {
        const Index in = spec.layer_widths[l];
        const Index out = spec.layer_widths[l + 1];
        layout.blocks.push_back({offset, out, in, l, false});
        offset += out * in;
        layout.blocks.push_back({offset, out, 1, l, true});
        offset += out;
    }
    layout.total = offset;
    return layout;
}

inline Index param_count(const MlpSpec& spec) { return make_layout(spec).total; }

struct Batch {
    Matrix inputs;   // d x m
    Matrix targets;  // d x k

    void validate(const MlpSpec& spec) const {
        if (inputs.rows() < 1) throw std::invalid_argument("Batch: empty batch");
        if (!all_finite(inputs) || !all_finite(targets))
            throw std::invalid_argument("Batch: non-finite entries");
        if (inputs.cols() != spec.input_dim())
            throw std::invalid_argument("Batch: input dimension mismatch");
        if (targets.rows() != inputs.rows())
            throw std::invalid_argument("Batch: inputs/targets row mismatch");
    }
    Index size() const { return inputs.rows(); }
};

namespace detail {

inline Eigen::Map<const Matrix> weight_map(const Vector& theta, const ParamLayout::Block& b) {
    return Eigen::Map<const Matrix>(theta.data() + b.offset, b.rows, b.cols);
}

inline Eigen::Map<Matrix> weight_map(Vector& theta, const ParamLayout::Block& b) {
    return Eigen::Map<Matrix>(theta.data() + b.offset, b.rows, b.cols);
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// swish(x) = x * sigmoid(x); first and second derivatives are analytic so
// Hessian-vector products stay noise-free.
inline void act_value(Activation act, const Matrix& z, Matrix& out) {
    if (act == Activation::identity) {
        out = z;
        return;
    }
    out = z.unaryExpr([](double x) { return x * sigmoid(x); });
}

inline Matrix act_d1(Activation act, const Matrix& z) {
    if (act == Activation::identity) return Matrix::Ones(z.rows(), z.cols());
    return z.unaryExpr([](double x) {
        const double s = sigmoid(x);
        return s * (1.0 + x * (1.0 - s));
    });
}

inline Matrix act_d2(Activation act, const Matrix& z) {
    if (act == Activation::identity) return Matrix::Zero(z.rows(), z.cols());
    return z.unaryExpr([](double x) {
        const double s = sigmoid(x);
        return s * (1.0 - s) * (2.0 + x * (1.0 - 2.0 * s));
    });
}

}  // namespace detail

// Orthogonal initialization: QR of a seeded Gaussian with the R-diagonal
// sign correction, scaled by init_scale. Biases are zero.
inline Vector init_params(const MlpSpec& spec) {
    const ParamLayout layout = make_layout(spec);
    Vector theta = Vector::Zero(layout.total);
    for (Index l = 0; l < spec.num_layers(); ++l) {
        const auto& wb = layout.weight(l);
        const Index out = wb.rows, in = wb.cols;
        const Index big = std::max(out, in), small = std::min(out, in);
        Rng rng(mix_seed(spec.seed, static_cast<std::uint64_t>(l)));
        const Matrix a = rng.gaussian_matrix(big, small);
        Eigen::HouseholderQR<Matrix> qr(a);
        Matrix q = qr.householderQ() * Matrix::Identity(big, small);
        const Matrix r = qr.matrixQR().topRows(small).triangularView<Eigen::Upper>();
        for (Index j = 0; j < small; ++j)
            if (r(j, j) < 0.0) q.col(j) = -q.col(j);
        Matrix w = (out >= in) ? q : Matrix(q.transpose());
        detail::weight_map(theta, wb) = spec.init_scale * w;
    }
    return theta;
}

// Activations and pre-activations of one forward pass, stored feature-major
// (width x d) and reused across probe batches.
struct ForwardPass {
    std::vector<Matrix> acts;     // acts[0] = inputs^T, acts[l+1] = layer l output
    std::vector<Matrix> preacts;  // preacts[l] = W_l acts[l] + b_l
    Index batch_size = 0;
};

inline ForwardPass run_forward(const MlpSpec& spec, const Vector& theta, const Matrix& inputs) {
    if (inputs.cols() != spec.input_dim())
        throw std::invalid_argument("run_forward: input dimension mismatch");
    const ParamLayout layout = make_layout(spec);
    if (theta.size() != layout.total)
        throw std::invalid_argument("run_forward: parameter size mismatch");
    const Index num_layers = spec.num_layers();
    ForwardPass fp;
    fp.batch_size = inputs.rows();
    fp.acts.resize(num_layers + 1);
    fp.preacts.resize(num_layers);
    fp.acts[0] = inputs.transpose();
    for (Index l = 0; l < num_layers; ++l) {
        const auto w = detail::weight_map(theta, layout.weight(l));
        const auto b = detail::weight_map(theta, layout.bias(l));
        fp.preacts[l].noalias() = w * fp.acts[l];
        fp.preacts[l].colwise() += b.col(0);
        if (l + 1 < num_layers)
            detail::act_value(spec.activation, fp.preacts[l], fp.acts[l + 1]);
        else
            fp.acts[l + 1] = fp.preacts[l];  // linear output layer
    }
    return fp;
}

inline Matrix forward(const MlpSpec& spec, const Vector& theta, const Matrix& inputs) {
    return run_forward(spec, theta, inputs).acts.back().transpose();
}

// J V for a block of tangents V (p x n); the result stacks outputs
// sample-major, so row i*k + j of the output is d f_j(x_i) / d theta . v.
inline Matrix jvp_block(const MlpSpec& spec, const Vector& theta, const ForwardPass& fp,
                        const Eigen::Ref<const Matrix>& tangents) {
    const ParamLayout layout = make_layout(spec);
    if (tangents.rows() != layout.total)
        throw std::invalid_argument("jvp_block: tangent size mismatch");
    const Index num_layers = spec.num_layers();
    const Index d = fp.batch_size;
    const Index n = tangents.cols();
    const Index k = spec.output_dim();

    Matrix ta;  // tangent activations, width x (n*d), tangent-major blocks
    Matrix tz;
    for (Index l = 0; l < num_layers; ++l) {
        const auto& wb = layout.weight(l);
        const auto& bb = layout.bias(l);
        const Index out = wb.rows, in = wb.cols;
        // Stack the per-tangent weight perturbations for one GEMM.
        Matrix stacked(n * out, in);
        for (Index t = 0; t < n; ++t)
            stacked.middleRows(t * out, out) =
                Eigen::Map<const Matrix>(tangents.col(t).data() + wb.offset, out, in);
        const Matrix dwa = stacked * fp.acts[l];  // (n*out) x d
        tz.resize(out, n * d);
        for (Index t = 0; t < n; ++t) {
            tz.middleCols(t * d, d) = dwa.middleRows(t * out, out);
            tz.middleCols(t * d, d).colwise() +=
                tangents.col(t).segment(bb.offset, out);
        }
        if (l > 0) {
            const auto w = detail::weight_map(theta, wb);
            tz.noalias() += w * ta;
        }
        if (l + 1 < num_layers) {
            const Matrix d1 = detail::act_d1(spec.activation, fp.preacts[l]);
            ta.resize(out, n * d);
            for (Index t = 0; t < n; ++t)
                ta.middleCols(t * d, d) = d1.cwiseProduct(tz.middleCols(t * d, d));
        } else {
            ta = tz;
        }
    }
    Matrix result(d * k, n);
    for (Index t = 0; t < n; ++t)
        for (Index i = 0; i < d; ++i)
            result.col(t).segment(i * k, k) = ta.col(t * d + i);
    return result;
}

// J^T U for a block of output-space adjoints U (dk x n).
inline Matrix vjp_block(const MlpSpec& spec, const Vector& theta, const ForwardPass& fp,
                        const Eigen::Ref<const Matrix>& adjoints) {
    const ParamLayout layout = make_layout(spec);
    const Index num_layers = spec.num_layers();
    const Index d = fp.batch_size;
    const Index k = spec.output_dim();
    if (adjoints.rows() != d * k)
        throw std::invalid_argument("vjp_block: adjoint size mismatch");
    const Index n = adjoints.cols();

    Matrix result(layout.total, n);
    Matrix delta(k, n * d);  // adjoint of preacts, tangent-major blocks
    for (Index t = 0; t < n; ++t)
        for (Index i = 0; i < d; ++i)
            delta.col(t * d + i) = adjoints.col(t).segment(i * k, k);

    for (Index l = num_layers - 1; l >= 0; --l) {
        const auto& wb = layout.weight(l);
        const auto& bb = layout.bias(l);
        const Index out = wb.rows;
        // Gradients of this layer's weights/biases for every adjoint.
        Matrix stacked(n * out, d);
        for (Index t = 0; t < n; ++t)
            stacked.middleRows(t * out, out) = delta.middleCols(t * d, d);
        const Matrix dw = stacked * fp.acts[l].transpose();  // (n*out) x in
        for (Index t = 0; t < n; ++t) {
            Eigen::Map<Matrix>(result.col(t).data() + wb.offset, out, wb.cols) =
                dw.middleRows(t * out, out);
            result.col(t).segment(bb.offset, out) =
                delta.middleCols(t * d, d).rowwise().sum();
        }
        if (l > 0) {
            const auto w = detail::weight_map(theta, wb);
            Matrix back(w.cols(), n * d);
            back.noalias() = w.transpose() * delta;
            const Matrix d1 = detail::act_d1(spec.activation, fp.preacts[l - 1]);
            delta.resize(w.cols(), n * d);
            for (Index t = 0; t < n; ++t)
                delta.middleCols(t * d, d) = d1.cwiseProduct(back.middleCols(t * d, d));
        }
    }
    return result;
}

inline Vector jvp(const MlpSpec& spec, const Vector& theta, const ForwardPass& fp,
                  const Vector& tangent) {
    return jvp_block(spec, theta, fp, tangent).col(0);
}

inline Vector vjp(const MlpSpec& spec, const Vector& theta, const ForwardPass& fp,
                  const Vector& adjoint) {
    return vjp_block(spec, theta, fp, adjoint).col(0);
}

inline Vector jvp(const MlpSpec& spec, const Vector& theta, const Batch& batch,
                  const Vector& tangent) {
    return jvp(spec, theta, run_forward(spec, theta, batch.inputs), tangent);
}

inline Vector vjp(const MlpSpec& spec, const Vector& theta, const Batch& batch,
                  const Vector& adjoint) {
    return vjp(spec, theta, run_forward(spec, theta, batch.inputs), adjoint);
}

// Materialized Jacobian, rows ordered sample-major then output component.
// Guarded so callers fall back to matvec access for big problems.
inline Matrix jacobian(const MlpSpec& spec, const Vector& theta, const Matrix& inputs,
                       Index entry_guard = 100'000'000) {
    const ParamLayout layout = make_layout(spec);
    const Index d = inputs.rows();
    const Index k = spec.output_dim();
    if (d * k * layout.total > entry_guard)
        throw std::length_error("jacobian: materialization exceeds entry guard");
    const ForwardPass fp = run_forward(spec, theta, inputs);
    Matrix jt(layout.total, d * k);
    const Index chunk = 256;
    for (Index start = 0; start < d * k; start += chunk) {
        const Index cols = std::min(chunk, d * k - start);
        Matrix unit = Matrix::Zero(d * k, cols);
        for (Index c = 0; c < cols; ++c) unit(start + c, c) = 1.0;
        jt.middleCols(start, cols) = vjp_block(spec, theta, fp, unit);
    }
    return jt.transpose();
}

// Gradient of the mean loss; the 1/d factor rides in func_grad.
inline Vector loss_gradient(const MlpSpec& spec, const Vector& theta, const Batch& batch,
                            const LossSpec& loss) {
    const ForwardPass fp = run_forward(spec, theta, batch.inputs);
    const Matrix outputs = fp.acts.back().transpose();
    return vjp(spec, theta, fp, func_grad(loss, outputs, batch.targets));
}

// Gauss-Newton matvec (1/d) J^T H_l J V; with scale_blocks = false this is
// the Jacobian-only variant (1/d) J^T J V.
inline Matrix curvature_matvec_block(const MlpSpec& spec, const Vector& theta,
                                     const ForwardPass& fp, const Matrix& targets,
                                     const LossSpec& loss, bool scale_blocks,
                                     const Eigen::Ref<const Matrix>& tangents) {
    const Index d = fp.batch_size;
    const Index k = spec.output_dim();
    Matrix jv = jvp_block(spec, theta, fp, tangents);
    if (scale_blocks) {
        const Matrix outputs = fp.acts.back().transpose();
        for (Index i = 0; i < d; ++i) {
            const Matrix h = func_hess_block(loss, outputs.row(i).transpose(),
                                             targets.row(i).transpose());
            jv.middleRows(i * k, k) = h * jv.middleRows(i * k, k);
        }
    }
    jv /= static_cast<double>(d);
    return vjp_block(spec, theta, fp, jv);
}

inline Vector ggn_matvec(const MlpSpec& spec, const Vector& theta, const Batch& batch,
                         const LossSpec& loss, const Vector& v) {
    const ForwardPass fp = run_forward(spec, theta, batch.inputs);
    return curvature_matvec_block(spec, theta, fp, batch.targets, loss, true, v).col(0);
}

inline Vector gj_matvec(const MlpSpec& spec, const Vector& theta, const Batch& batch,
                        const Vector& v) {
    const ForwardPass fp = run_forward(spec, theta, batch.inputs);
    return curvature_matvec_block(spec, theta, fp, batch.targets, LossSpec::squared(), false, v)
        .col(0);
}

// Full-Hessian-vector products of the mean loss via forward-over-reverse
// differentiation; includes the curvature of the network itself.
inline Matrix hessian_matvec_block(const MlpSpec& spec, const Vector& theta,
                                   const ForwardPass& fp, const Matrix& targets,
                                   const LossSpec& loss,
                                   const Eigen::Ref<const Matrix>& tangents) {
    if (!loss.has_curvature())
        throw std::domain_error("loss_hvp: loss is not twice differentiable");
    const ParamLayout layout = make_layout(spec);
    const Index num_layers = spec.num_layers();
    const Index d = fp.batch_size;
    const Index k = spec.output_dim();
    const Index n = tangents.cols();
    const double inv_d = 1.0 / static_cast<double>(d);
    const Matrix outputs = fp.acts.back().transpose();

    // Tangent forward pass, keeping per-layer tangent pre-activations.
    std::vector<Matrix> tz(num_layers);
    Matrix ta;
    for (Index l = 0; l < num_layers; ++l) {
        const auto& wb = layout.weight(l);
        const auto& bb = layout.bias(l);
        const Index out = wb.rows, in = wb.cols;
        Matrix stacked(n * out, in);
        for (Index t = 0; t < n; ++t)
            stacked.middleRows(t * out, out) =
                Eigen::Map<const Matrix>(tangents.col(t).data() + wb.offset, out, in);
        const Matrix dwa = stacked * fp.acts[l];
        tz[l].resize(out, n * d);
        for (Index t = 0; t < n; ++t) {
            tz[l].middleCols(t * d, d) = dwa.middleRows(t * out, out);
            tz[l].middleCols(t * d, d).colwise() += tangents.col(t).segment(bb.offset, out);
        }
        if (l > 0) {
            const auto w = detail::weight_map(theta, wb);
            tz[l].noalias() += w * ta;
        }
        if (l + 1 < num_layers) {
            const Matrix d1 = detail::act_d1(spec.activation, fp.preacts[l]);
            ta.resize(out, n * d);
            for (Index t = 0; t < n; ++t)
                ta.middleCols(t * d, d) = d1.cwiseProduct(tz[l].middleCols(t * d, d));
        } else {
            ta = tz[l];
        }
    }

    // Output adjoint g_i = (1/d) grad_f l_i and its tangent
    // gdot_i = (1/d) H_i ydot_i.
    Matrix delta(k, n * d);
    Matrix delta_dot(k, n * d);
    for (Index i = 0; i < d; ++i) {
        const Vector gi = inv_d * func_grad_row(loss, outputs.row(i).transpose(),
                                                targets.row(i).transpose());
        const Matrix hi = func_hess_block(loss, outputs.row(i).transpose(),
                                          targets.row(i).transpose());
        for (Index t = 0; t < n; ++t) {
            delta.col(t * d + i) = gi;
            delta_dot.col(t * d + i).noalias() = inv_d * (hi * ta.col(t * d + i));
        }
    }

    Matrix result(layout.total, n);
    std::vector<Matrix> tangent_acts(num_layers + 1);  // recompute tangent activations
    {
        tangent_acts[0] = Matrix::Zero(fp.acts[0].rows(), n * d);
        for (Index l = 0; l + 1 < num_layers; ++l) {
            const Matrix d1 = detail::act_d1(spec.activation, fp.preacts[l]);
            tangent_acts[l + 1].resize(d1.rows(), n * d);
            for (Index t = 0; t < n; ++t)
                tangent_acts[l + 1].middleCols(t * d, d) =
                    d1.cwiseProduct(tz[l].middleCols(t * d, d));
        }
        tangent_acts[num_layers] = tz[num_layers - 1];
    }

    for (Index l = num_layers - 1; l >= 0; --l) {
        const auto& wb = layout.weight(l);
        const auto& bb = layout.bias(l);
        const Index out = wb.rows;
        Matrix stacked_dot(n * out, d), stacked(n * out, d);
        for (Index t = 0; t < n; ++t) {
            stacked.middleRows(t * out, out) = delta.middleCols(t * d, d);
            stacked_dot.middleRows(t * out, out) = delta_dot.middleCols(t * d, d);
        }
        // d/dv of (delta acts^T) = delta_dot acts^T + delta acts_dot^T
        Matrix dw_dot = stacked_dot * fp.acts[l].transpose();
        for (Index t = 0; t < n; ++t) {
            dw_dot.middleRows(t * out, out).noalias() +=
                delta.middleCols(t * d, d) * tangent_acts[l].middleCols(t * d, d).transpose();
            Eigen::Map<Matrix>(result.col(t).data() + wb.offset, out, wb.cols) =
                dw_dot.middleRows(t * out, out);
            result.col(t).segment(bb.offset, out) =
                delta_dot.middleCols(t * d, d).rowwise().sum();
        }
        if (l > 0) {
            const auto w = detail::weight_map(theta, wb);
            Matrix back(w.cols(), n * d), back_dot(w.cols(), n * d);
            back.noalias() = w.transpose() * delta;
            back_dot.noalias() = w.transpose() * delta_dot;
            for (Index t = 0; t < n; ++t) {
                const Eigen::Map<const Matrix> wdot(tangents.col(t).data() + wb.offset, out,
                                                    wb.cols);
                back_dot.middleCols(t * d, d).noalias() +=
                    wdot.transpose() * delta.middleCols(t * d, d);
            }
            const Matrix d1 = detail::act_d1(spec.activation, fp.preacts[l - 1]);
            const Matrix d2 = detail::act_d2(spec.activation, fp.preacts[l - 1]);
            delta.resize(w.cols(), n * d);
            delta_dot.resize(w.cols(), n * d);
            for (Index t = 0; t < n; ++t) {
                const auto b = back.middleCols(t * d, d);
                delta.middleCols(t * d, d) = d1.cwiseProduct(b);
                delta_dot.middleCols(t * d, d) =
                    d1.cwiseProduct(back_dot.middleCols(t * d, d)) +
                    d2.cwiseProduct(tz[l - 1].middleCols(t * d, d)).cwiseProduct(b);
            }
        }
    }
    return result;
}

inline Vector loss_hvp(const MlpSpec& spec, const Vector& theta, const Batch& batch,
                       const LossSpec& loss, const Vector& v) {
    const ForwardPass fp = run_forward(spec, theta, batch.inputs);
    return hessian_matvec_block(spec, theta, fp, batch.targets, loss, v).col(0);
}

enum class CurvatureMatrix { G, G_J, H };

inline const char* curvature_name(CurvatureMatrix m) {
    switch (m) {
        case CurvatureMatrix::G: return "G";
        case CurvatureMatrix::G_J: return "G_J";
        case CurvatureMatrix::H: return "H";
    }
    return "?";
}

using MatvecBlockFn = std::function<Matrix(const Eigen::Ref<const Matrix>&)>;

// Matvec access to G, G_J or H at a fixed point, sharing one forward pass
// across all probes. Probe blocks are chunked to bound transient memory.
inline MatvecBlockFn make_curvature_operator(const MlpSpec& spec, const Vector& theta,
                                             const Batch& batch, const LossSpec& loss,
                                             CurvatureMatrix matrix, Index chunk = 16) {
    if (matrix != CurvatureMatrix::G_J && !loss.has_curvature())
        throw std::invalid_argument("curvature operator: hinge loss supports G_J only");
    auto fp = std::make_shared<ForwardPass>(run_forward(spec, theta, batch.inputs));
    const Matrix targets = batch.targets;
    return [spec, theta, fp, targets, loss, matrix, chunk](
               const Eigen::Ref<const Matrix>& v) -> Matrix {
        Matrix out(v.rows(), v.cols());
        for (Index start = 0; start < v.cols(); start += chunk) {
            const Index n = std::min(chunk, v.cols() - start);
            switch (matrix) {
                case CurvatureMatrix::G:
                    out.middleCols(start, n) = curvature_matvec_block(
                        spec, theta, *fp, targets, loss, true, v.middleCols(start, n));
                    break;
                case CurvatureMatrix::G_J:
                    out.middleCols(start, n) = curvature_matvec_block(
                        spec, theta, *fp, targets, loss, false, v.middleCols(start, n));
                    break;
                case CurvatureMatrix::H:
                    out.middleCols(start, n) = hessian_matvec_block(
                        spec, theta, *fp, targets, loss, v.middleCols(start, n));
                    break;
            }
        }
        return out;
    };
}

}  // namespace sgn
