#include "segline/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "segline/error.hpp"
#include "segline/parallel.hpp"

namespace segline {

namespace {

constexpr std::size_t kLossChunk = 16;

void require_dims(std::span<const float> u, std::span<const float> v, std::size_t dim) {
    if (u.size() != dim || v.size() != dim)
        throw ShapeError("expected vectors of dimension " + std::to_string(dim) + ", got " +
                         std::to_string(u.size()) + " and " + std::to_string(v.size()));
}

// out[r] = bias[r] + W[r, :] . x
template <typename Real, typename X>
void affine(std::span<const Real> weight, std::span<const Real> bias, std::span<const X> x, std::span<double> out) {
    const std::size_t cols = x.size();
    for (std::size_t r = 0; r < out.size(); ++r) {
        double acc = static_cast<double>(bias[r]);
        const Real* w = weight.data() + r * cols;
        for (std::size_t c = 0; c < cols; ++c) acc += static_cast<double>(w[c]) * static_cast<double>(x[c]);
        out[r] = acc;
    }
}

// Cross-entropy of logits against label; turns logits into softmax - onehot.
double softmax_xent_inplace(std::span<double> z, std::size_t label) {
    const double m = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (double x : z) sum += std::exp(x - m);
    const double lse = m + std::log(sum);
    const double loss = lse - z[label];
    for (double& x : z) x = std::exp(x - lse);
    z[label] -= 1.0;
    return loss;
}

// grad_w[r, :] += dz[r] * x ; grad_b[r] += dz[r]
template <typename X>
void accumulate_outer(std::span<const double> dz, std::span<const X> x, double* grad_w, double* grad_b) {
    const std::size_t cols = x.size();
    for (std::size_t r = 0; r < dz.size(); ++r) {
        double* g = grad_w + r * cols;
        for (std::size_t c = 0; c < cols; ++c) g[c] += dz[r] * static_cast<double>(x[c]);
        grad_b[r] += dz[r];
    }
}

enum class PairHead { nsp, stp };

template <typename Real>
struct PairHeadView {
    std::span<const Real> weight;
    std::span<const Real> bias;
    std::span<const Real> hidden_weight;
    std::span<const Real> hidden_bias;
    std::size_t weight_offset;
    std::size_t bias_offset;
    std::size_t hidden_weight_offset;
    std::size_t hidden_bias_offset;
};

template <typename Real>
PairHeadView<Real> pair_head(const BasicHeadParams<Real>& p, PairHead head) {
    const ParamLayout& l = p.layout();
    if (head == PairHead::nsp)
        return {p.nsp_weight(), p.nsp_bias(), p.nsp_hidden_weight(), p.nsp_hidden_bias(),
                l.nsp_weight(), l.nsp_bias(), l.nsp_hidden_weight(), l.nsp_hidden_bias()};
    return {p.stp_weight(), p.stp_bias(), p.stp_hidden_weight(), p.stp_hidden_bias(),
            l.stp_weight(), l.stp_bias(), l.stp_hidden_weight(), l.stp_hidden_bias()};
}

// Logits of a pair head; with a hidden layer, activations go to act.
template <typename Real>
void pair_head_logits(const PairHeadView<Real>& h, std::span<const float> f, std::vector<double>& act,
                      std::span<double> logits) {
    if (h.hidden_bias.empty()) {
        affine<Real, float>(h.weight, h.bias, f, logits);
        return;
    }
    act.resize(h.hidden_bias.size());
    affine<Real, float>(h.hidden_weight, h.hidden_bias, f, act);
    for (double& a : act) a = std::tanh(a);
    affine<Real, double>(h.weight, h.bias, std::span<const double>(act), logits);
}

// Backpropagates dz (softmax - onehot) through a pair head into grad.
template <typename Real>
void pair_head_backward(const PairHeadView<Real>& h, std::span<const float> f, std::span<const double> act,
                        std::span<const double> dz, std::vector<double>& scratch, double* grad) {
    if (h.hidden_bias.empty()) {
        accumulate_outer<float>(dz, f, grad + h.weight_offset, grad + h.bias_offset);
        return;
    }
    const std::size_t width = act.size();
    accumulate_outer<double>(dz, act, grad + h.weight_offset, grad + h.bias_offset);
    scratch.assign(width, 0.0);
    for (std::size_t r = 0; r < dz.size(); ++r)
        for (std::size_t j = 0; j < width; ++j) scratch[j] += static_cast<double>(h.weight[r * width + j]) * dz[r];
    for (std::size_t j = 0; j < width; ++j) scratch[j] *= 1.0 - act[j] * act[j];
    accumulate_outer<float>(scratch, f, grad + h.hidden_weight_offset, grad + h.hidden_bias_offset);
}

struct ChunkSums {
    double stp = 0.0;
    double tc_u = 0.0;
    double tc_v = 0.0;
    double nsp = 0.0;
    std::vector<double> grad;
};

void check_label(TopicId t, std::size_t topics, std::size_t index) {
    if (static_cast<std::size_t>(t) >= topics)
        throw ShapeError("topic label " + std::to_string(t) + " out of range at batch index " + std::to_string(index));
}

}  // namespace

PairFeature pair_feature(std::span<const float> u, std::span<const float> v) {
    if (u.size() != v.size())
        throw ShapeError("pair_feature: dimension mismatch " + std::to_string(u.size()) + " vs " +
                         std::to_string(v.size()));
    const std::size_t d = u.size();
    PairFeature f;
    f.values.resize(3 * d);
    std::copy(u.begin(), u.end(), f.values.begin());
    std::copy(v.begin(), v.end(), f.values.begin() + static_cast<std::ptrdiff_t>(d));
    for (std::size_t i = 0; i < d; ++i) f.values[2 * d + i] = std::abs(u[i] - v[i]);
    return f;
}

std::vector<TensorInfo> tensor_table(const ParamLayout& l) {
    std::vector<TensorInfo> t = {{"W_tc", l.tc_weight(), l.topics, l.dim},
                                 {"b_tc", l.tc_bias(), l.topics, 1},
                                 {"W_nsp", l.nsp_weight(), 2, l.pair_input()},
                                 {"b_nsp", l.nsp_bias(), 2, 1},
                                 {"W_stp", l.stp_weight(), 2, l.pair_input()},
                                 {"b_stp", l.stp_bias(), 2, 1}};
    if (l.hidden > 0) {
        t.push_back({"H_nsp", l.nsp_hidden_weight(), l.hidden, l.feature_dim()});
        t.push_back({"c_nsp", l.nsp_hidden_bias(), l.hidden, 1});
        t.push_back({"H_stp", l.stp_hidden_weight(), l.hidden, l.feature_dim()});
        t.push_back({"c_stp", l.stp_hidden_bias(), l.hidden, 1});
    }
    return t;
}

template <typename Real>
BasicHeadParams<Real>::BasicHeadParams(std::size_t dim, std::size_t topics, std::size_t hidden)
    : layout_{dim, topics, hidden} {
    if (dim == 0 || topics == 0) throw ShapeError("head params need d >= 1 and K >= 1");
    values_.assign(layout_.total(), Real{0});
}

template <typename Real>
void BasicHeadParams<Real>::check_finite() const {
    for (std::size_t i = 0; i < values_.size(); ++i)
        if (!std::isfinite(static_cast<double>(values_[i])))
            throw NumericalError("non-finite parameter at flat index " + std::to_string(i));
}

void LossWeights::validate() const {
    for (double w : {stp, tc, nsp})
        if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("loss weights must be finite and nonnegative");
    if (stp == 0.0 && tc == 0.0 && nsp == 0.0) throw ConfigError("at least one loss weight must be positive");
}

template <typename Real>
PairLogits forward(const BasicHeadParams<Real>& params, std::span<const float> u, std::span<const float> v) {
    require_dims(u, v, params.dim());
    PairLogits out;
    out.tc_u.resize(params.topics());
    out.tc_v.resize(params.topics());
    affine<Real, float>(params.tc_weight(), params.tc_bias(), u, out.tc_u);
    affine<Real, float>(params.tc_weight(), params.tc_bias(), v, out.tc_v);
    const auto f = pair_feature(u, v);
    std::vector<double> act;
    pair_head_logits(pair_head(params, PairHead::nsp), std::span<const float>(f.values), act, out.nsp);
    pair_head_logits(pair_head(params, PairHead::stp), std::span<const float>(f.values), act, out.stp);
    return out;
}

template <typename Real>
std::vector<double> topic_logits(const BasicHeadParams<Real>& params, std::span<const float> u) {
    if (u.size() != params.dim()) throw ShapeError("topic_logits: dimension mismatch");
    std::vector<double> z(params.topics());
    affine<Real, float>(params.tc_weight(), params.tc_bias(), u, z);
    return z;
}

template <typename Real>
LossResult multitask_loss(const BasicHeadParams<Real>& params, std::span<const PairExample> batch,
                          const EmbeddingMatrix& embeddings, const LossWeights& weights) {
    weights.validate();
    if (batch.empty()) throw ShapeError("multitask_loss: empty batch");
    if (embeddings.dim() != params.dim())
        throw ShapeError("embedding dimension " + std::to_string(embeddings.dim()) + " != model dimension " +
                         std::to_string(params.dim()));

    const ParamLayout& layout = params.layout();
    const std::size_t K = params.topics();
    const bool use_stp = weights.stp > 0.0;
    const bool use_tc = weights.tc > 0.0;
    const bool use_nsp = weights.nsp > 0.0;

    std::size_t tc_count = 0;
    for (const auto& ex : batch)
        if (ex.topic_i >= 0 && ex.topic_j >= 0) ++tc_count;

    const std::size_t chunks = (batch.size() + kLossChunk - 1) / kLossChunk;
    std::vector<ChunkSums> sums(chunks);

    auto run_chunk = [&](std::size_t c) {
        ChunkSums& acc = sums[c];
        acc.grad.assign(layout.total(), 0.0);
        std::vector<double> z_u(K), z_v(K);
        std::array<double, 2> z2{};
        std::vector<double> act;
        std::vector<double> scratch;
        const std::size_t end = std::min(batch.size(), (c + 1) * kLossChunk);
        for (std::size_t b = c * kLossChunk; b < end; ++b) {
            const PairExample& ex = batch[b];
            const auto u = embeddings.at_sid(ex.sid_i);
            const auto v = embeddings.at_sid(ex.sid_j);
            double example_loss = 0.0;

            if (use_tc && ex.topic_i >= 0 && ex.topic_j >= 0) {
                check_label(ex.topic_i, K, b);
                check_label(ex.topic_j, K, b);
                affine<Real, float>(params.tc_weight(), params.tc_bias(), u, z_u);
                affine<Real, float>(params.tc_weight(), params.tc_bias(), v, z_v);
                const double lu = softmax_xent_inplace(z_u, static_cast<std::size_t>(ex.topic_i));
                const double lv = softmax_xent_inplace(z_v, static_cast<std::size_t>(ex.topic_j));
                acc.tc_u += lu;
                acc.tc_v += lv;
                example_loss += lu + lv;
                double* gw = acc.grad.data() + layout.tc_weight();
                double* gb = acc.grad.data() + layout.tc_bias();
                accumulate_outer<float>(z_u, u, gw, gb);
                accumulate_outer<float>(z_v, v, gw, gb);
            }
            if (use_nsp || use_stp) {
                const auto f = pair_feature(u, v);
                const std::span<const float> fv(f.values);
                auto run_head = [&](PairHead which, int label, double& sum) {
                    const auto head = pair_head(params, which);
                    pair_head_logits(head, fv, act, z2);
                    const double l = softmax_xent_inplace(z2, static_cast<std::size_t>(label));
                    sum += l;
                    example_loss += l;
                    pair_head_backward(head, fv, std::span<const double>(act), z2, scratch, acc.grad.data());
                };
                if (use_nsp) run_head(PairHead::nsp, ex.nsp_label, acc.nsp);
                if (use_stp) run_head(PairHead::stp, ex.stp_label, acc.stp);
            }
            if (!std::isfinite(example_loss))
                throw NumericalError("non-finite loss at batch index " + std::to_string(b));
        }
    };

    if (chunks >= 8)
        parallel_for(chunks, run_chunk);
    else
        for (std::size_t c = 0; c < chunks; ++c) run_chunk(c);

    ChunkSums total;
    total.grad.assign(layout.total(), 0.0);
    for (const auto& s : sums) {
        total.stp += s.stp;
        total.tc_u += s.tc_u;
        total.tc_v += s.tc_v;
        total.nsp += s.nsp;
        for (std::size_t i = 0; i < total.grad.size(); ++i) total.grad[i] += s.grad[i];
    }

    const double n = static_cast<double>(batch.size());
    LossResult result;
    result.stp_loss = use_stp ? total.stp / n : 0.0;
    result.nsp_loss = use_nsp ? total.nsp / n : 0.0;
    result.tc_loss = (use_tc && tc_count > 0) ? 0.5 * (total.tc_u + total.tc_v) / static_cast<double>(tc_count) : 0.0;
    result.loss = weights.stp * result.stp_loss + weights.tc * result.tc_loss + weights.nsp * result.nsp_loss;
    if (!std::isfinite(result.loss)) throw NumericalError("non-finite batch loss");

    result.grad = std::move(total.grad);
    auto scale = [&](std::size_t begin, std::size_t end, double factor) {
        for (std::size_t i = begin; i < end; ++i) result.grad[i] *= factor;
    };
    const double tc_scale = tc_count > 0 ? weights.tc * 0.5 / static_cast<double>(tc_count) : 0.0;
    scale(layout.tc_weight(), layout.nsp_weight(), tc_scale);
    scale(layout.nsp_weight(), layout.stp_weight(), weights.nsp / n);
    scale(layout.stp_weight(), layout.nsp_hidden_weight(), weights.stp / n);
    scale(layout.nsp_hidden_weight(), layout.stp_hidden_weight(), weights.nsp / n);
    scale(layout.stp_hidden_weight(), layout.total(), weights.stp / n);
    return result;
}

std::size_t argmax(std::span<const double> logits) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < logits.size(); ++i)
        if (logits[i] > logits[best]) best = i;
    return best;
}

template <typename Real>
Prediction predict(const BasicHeadParams<Real>& params, std::span<const float> u, std::span<const float> v) {
    const auto z = forward(params, u, v);
    Prediction p;
    p.stp = static_cast<int>(argmax(z.stp));
    p.nsp = static_cast<int>(argmax(z.nsp));
    p.topic_u = static_cast<TopicId>(argmax(z.tc_u));
    p.topic_v = static_cast<TopicId>(argmax(z.tc_v));
    return p;
}

template class BasicHeadParams<float>;
template class BasicHeadParams<double>;

template PairLogits forward(const BasicHeadParams<float>&, std::span<const float>, std::span<const float>);
template PairLogits forward(const BasicHeadParams<double>&, std::span<const float>, std::span<const float>);
template std::vector<double> topic_logits(const BasicHeadParams<float>&, std::span<const float>);
template std::vector<double> topic_logits(const BasicHeadParams<double>&, std::span<const float>);
template LossResult multitask_loss(const BasicHeadParams<float>&, std::span<const PairExample>,
                                   const EmbeddingMatrix&, const LossWeights&);
template LossResult multitask_loss(const BasicHeadParams<double>&, std::span<const PairExample>,
                                   const EmbeddingMatrix&, const LossWeights&);
template Prediction predict(const BasicHeadParams<float>&, std::span<const float>, std::span<const float>);
template Prediction predict(const BasicHeadParams<double>&, std::span<const float>, std::span<const float>);

}  // namespace segline
