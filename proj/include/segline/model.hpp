#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "segline/corpus.hpp"
#include "segline/embedder.hpp"
#include "segline/sampler.hpp"

namespace segline {

// Concatenation u ; v ; |u - v| of two sentence vectors (length 3d).
struct PairFeature {
    std::vector<float> values;
};

PairFeature pair_feature(std::span<const float> u, std::span<const float> v);

// Offsets of the parameter tensors inside the flat parameter vector. The
// order (W_tc, b_tc, W_nsp, b_nsp, W_stp, b_stp) is also the checkpoint order.
// With hidden > 0 the NSP and STP heads become f -> tanh(H f + c) -> W z + b;
// W_nsp/W_stp are then 2 x hidden and H_nsp, c_nsp, H_stp, c_stp follow.
struct ParamLayout {
    std::size_t dim = 0;
    std::size_t topics = 0;
    std::size_t hidden = 0;

    std::size_t feature_dim() const { return 3 * dim; }
    // Width of the vector the pair heads' output layer reads.
    std::size_t pair_input() const { return hidden > 0 ? hidden : feature_dim(); }
    std::size_t tc_weight() const { return 0; }
    std::size_t tc_bias() const { return topics * dim; }
    std::size_t nsp_weight() const { return tc_bias() + topics; }
    std::size_t nsp_bias() const { return nsp_weight() + 2 * pair_input(); }
    std::size_t stp_weight() const { return nsp_bias() + 2; }
    std::size_t stp_bias() const { return stp_weight() + 2 * pair_input(); }
    std::size_t nsp_hidden_weight() const { return stp_bias() + 2; }
    std::size_t nsp_hidden_bias() const { return nsp_hidden_weight() + hidden * feature_dim(); }
    std::size_t stp_hidden_weight() const { return nsp_hidden_bias() + hidden; }
    std::size_t stp_hidden_bias() const { return stp_hidden_weight() + hidden * feature_dim(); }
    std::size_t total() const { return stp_hidden_bias() + hidden; }

    bool operator==(const ParamLayout&) const = default;
};

struct TensorInfo {
    std::string_view name;
    std::size_t offset;
    std::size_t rows;
    std::size_t cols;
};

// Six tensors for linear heads, ten with a hidden layer.
std::vector<TensorInfo> tensor_table(const ParamLayout& layout);

// The three classification heads. TC (K x d) is shared between u and v; NSP
// and STP read the pair feature. Real is float for training and storage,
// double for finite-difference checks.
template <typename Real>
class BasicHeadParams {
public:
    BasicHeadParams() = default;
    BasicHeadParams(std::size_t dim, std::size_t topics, std::size_t hidden = 0);

    const ParamLayout& layout() const { return layout_; }
    std::size_t dim() const { return layout_.dim; }
    std::size_t topics() const { return layout_.topics; }
    std::size_t hidden() const { return layout_.hidden; }

    std::vector<Real>& values() { return values_; }
    const std::vector<Real>& values() const { return values_; }

    std::span<const Real> tc_weight() const { return view(layout_.tc_weight(), layout_.tc_bias()); }
    std::span<const Real> tc_bias() const { return view(layout_.tc_bias(), layout_.nsp_weight()); }
    std::span<const Real> nsp_weight() const { return view(layout_.nsp_weight(), layout_.nsp_bias()); }
    std::span<const Real> nsp_bias() const { return view(layout_.nsp_bias(), layout_.stp_weight()); }
    std::span<const Real> stp_weight() const { return view(layout_.stp_weight(), layout_.stp_bias()); }
    std::span<const Real> stp_bias() const { return view(layout_.stp_bias(), layout_.nsp_hidden_weight()); }
    std::span<const Real> nsp_hidden_weight() const {
        return view(layout_.nsp_hidden_weight(), layout_.nsp_hidden_bias());
    }
    std::span<const Real> nsp_hidden_bias() const {
        return view(layout_.nsp_hidden_bias(), layout_.stp_hidden_weight());
    }
    std::span<const Real> stp_hidden_weight() const {
        return view(layout_.stp_hidden_weight(), layout_.stp_hidden_bias());
    }
    std::span<const Real> stp_hidden_bias() const { return view(layout_.stp_hidden_bias(), layout_.total()); }

    std::span<Real> tc_weight() { return view(layout_.tc_weight(), layout_.tc_bias()); }
    std::span<Real> tc_bias() { return view(layout_.tc_bias(), layout_.nsp_weight()); }
    std::span<Real> nsp_weight() { return view(layout_.nsp_weight(), layout_.nsp_bias()); }
    std::span<Real> nsp_bias() { return view(layout_.nsp_bias(), layout_.stp_weight()); }
    std::span<Real> stp_weight() { return view(layout_.stp_weight(), layout_.stp_bias()); }
    std::span<Real> stp_bias() { return view(layout_.stp_bias(), layout_.nsp_hidden_weight()); }
    std::span<Real> nsp_hidden_weight() { return view(layout_.nsp_hidden_weight(), layout_.nsp_hidden_bias()); }
    std::span<Real> nsp_hidden_bias() { return view(layout_.nsp_hidden_bias(), layout_.stp_hidden_weight()); }
    std::span<Real> stp_hidden_weight() { return view(layout_.stp_hidden_weight(), layout_.stp_hidden_bias()); }
    std::span<Real> stp_hidden_bias() { return view(layout_.stp_hidden_bias(), layout_.total()); }

    // Throws NumericalError on any non-finite entry.
    void check_finite() const;

    template <typename Other>
    BasicHeadParams<Other> cast() const {
        BasicHeadParams<Other> out(dim(), topics(), hidden());
        for (std::size_t i = 0; i < values_.size(); ++i) out.values()[i] = static_cast<Other>(values_[i]);
        return out;
    }

    bool operator==(const BasicHeadParams&) const = default;

private:
    std::span<const Real> view(std::size_t b, std::size_t e) const {
        return std::span<const Real>(values_).subspan(b, e - b);
    }
    std::span<Real> view(std::size_t b, std::size_t e) { return std::span<Real>(values_).subspan(b, e - b); }

    ParamLayout layout_;
    std::vector<Real> values_;
};

using HeadParams = BasicHeadParams<float>;

// Multi-task loss weights. A zero weight removes that head's term.
struct LossWeights {
    double stp = 4.0;
    double tc = 1.0;
    double nsp = 4.0;

    void validate() const;
    bool operator==(const LossWeights&) const = default;
};

struct PairLogits {
    std::vector<double> tc_u;
    std::vector<double> tc_v;
    std::array<double, 2> nsp{};
    std::array<double, 2> stp{};
};

template <typename Real>
PairLogits forward(const BasicHeadParams<Real>& params, std::span<const float> u, std::span<const float> v);

// TC logits of a single sentence vector.
template <typename Real>
std::vector<double> topic_logits(const BasicHeadParams<Real>& params, std::span<const float> u);

struct LossResult {
    double loss = 0.0;
    // Unweighted batch means of each term (TC is the mean of its u and v terms).
    double stp_loss = 0.0;
    double tc_loss = 0.0;
    double nsp_loss = 0.0;
    // d loss / d params in ParamLayout order.
    std::vector<double> grad;
};

// L = w_stp CE(stp) + w_tc (CE(tc_u) + CE(tc_v)) / 2 + w_nsp CE(nsp), each CE a
// batch mean of a max-shifted log-softmax. Examples with a negative topic id
// are left out of the TC term. Per-example contributions are reduced in fixed
// chunks, in chunk order, so the result does not depend on the thread count.
template <typename Real>
LossResult multitask_loss(const BasicHeadParams<Real>& params, std::span<const PairExample> batch,
                          const EmbeddingMatrix& embeddings, const LossWeights& weights);

struct Prediction {
    int stp = 0;  // 1 = same topic; 0 means a boundary
    int nsp = 0;
    TopicId topic_u = 0;
    TopicId topic_v = 0;
};

// Lowest index wins ties.
std::size_t argmax(std::span<const double> logits);

template <typename Real>
Prediction predict(const BasicHeadParams<Real>& params, std::span<const float> u, std::span<const float> v);

}  // namespace segline
