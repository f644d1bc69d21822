#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <numbers>

#include "oracles.hpp"
#include "segline/error.hpp"
#include "segline/model.hpp"

using namespace segline;

namespace {

const LossWeights kStpTc{4, 1, 0};
const LossWeights kStpNsp{1, 0, 1};
const LossWeights kAll{4, 1, 4};

std::vector<double> to_double(std::span<const float> v) { return {v.begin(), v.end()}; }

struct ThreadEnv {
    explicit ThreadEnv(const char* value) { setenv("SEGLINE_THREADS", value, 1); }
    ~ThreadEnv() { unsetenv("SEGLINE_THREADS"); }
};

}  // namespace

TEST_CASE("pair feature") {
    const std::vector<float> u{1, 0}, v{0, -2};
    CHECK(pair_feature(u, v).values == std::vector<float>{1, 0, 0, -2, 1, 2});

    const std::vector<float> w(384, 0.5f);
    const auto same = pair_feature(w, w);
    CHECK(same.values.size() == 1152);
    for (std::size_t i = 768; i < 1152; ++i) CHECK(same.values[i] == 0.0f);

    CHECK_THROWS_AS(pair_feature(u, std::vector<float>{1, 2, 3}), ShapeError);

    Rng rng(1);
    for (int t = 0; t < 100; ++t) {
        const std::size_t d = 1 + uniform_index(rng, 9);
        std::vector<float> a(d), b(d);
        for (auto& x : a) x = float(uniform_real(rng, -5, 5));
        for (auto& x : b) x = float(uniform_real(rng, -5, 5));
        const auto f = pair_feature(a, b).values;
        REQUIRE(f.size() == 3 * d);
        for (std::size_t i = 2 * d; i < 3 * d; ++i) CHECK(f[i] >= 0.0f);
    }
}

TEST_CASE("parameter layout") {
    const ParamLayout l{4, 3, 0};
    CHECK(l.total() == 3 * 4 + 3 + 2 * 12 + 2 + 2 * 12 + 2);
    const auto table = tensor_table(l);
    REQUIRE(table.size() == 6);
    CHECK(table[0].name == "W_tc");
    CHECK(table[5].name == "b_stp");
    std::size_t covered = 0;
    for (const auto& t : table) {
        CHECK(t.offset == covered);
        covered += t.rows * t.cols;
    }
    CHECK(covered == l.total());

    const ParamLayout h{4, 3, 5};
    CHECK(h.total() == 12 + 3 + 2 * 5 + 2 + 2 * 5 + 2 + 2 * (5 * 12 + 5));
    CHECK(tensor_table(h).size() == 10);
}

TEST_CASE("forward pass") {
    const std::vector<float> u{0.5f, -1.0f}, v{2.0f, 0.25f};
    SUBCASE("zero parameters give zero logits") {
        const HeadParams p(2, 3);
        const auto z = forward(p, u, v);
        CHECK(z.tc_u == std::vector<double>(3, 0.0));
        CHECK(z.stp == std::array<double, 2>{0, 0});
        CHECK(z.nsp == std::array<double, 2>{0, 0});
    }
    SUBCASE("matches a dense multiply") {
        Rng rng(2);
        for (std::size_t hidden : {0, 3}) {
            BasicHeadParams<double> p(2, 3, hidden);
            for (auto& x : p.values()) x = uniform_real(rng, -1, 1);
            const auto z = forward(p, u, v);
            const auto& l = p.layout();
            std::vector<double> f = to_double(pair_feature(u, v).values);
            CHECK(z.tc_u == oracle::dense(p.values(), l.tc_weight(), l.tc_bias(), 3, to_double(u)));
            CHECK(z.tc_v == oracle::dense(p.values(), l.tc_weight(), l.tc_bias(), 3, to_double(v)));
            const auto stp = oracle::head_logits(p.values(), l, true, f);
            const auto nsp = oracle::head_logits(p.values(), l, false, f);
            for (int c = 0; c < 2; ++c) {
                CHECK(z.stp[c] == doctest::Approx(stp[c]).epsilon(1e-12));
                CHECK(z.nsp[c] == doctest::Approx(nsp[c]).epsilon(1e-12));
            }
        }
    }
    SUBCASE("shared topic head") {
        Rng rng(3);
        HeadParams p(2, 3);
        for (auto& x : p.values()) x = float(uniform_real(rng, -1, 1));
        const auto z = forward(p, u, u);
        CHECK(z.tc_u == z.tc_v);
        CHECK(topic_logits(p, u) == z.tc_u);
    }
    CHECK_THROWS_AS(forward(HeadParams(3, 2), u, v), ShapeError);
}

TEST_CASE("loss at zero parameters is uniform cross entropy") {
    const auto doc = oracle::doc_with_topics({0, 3});
    EmbeddingMatrix emb(2, 3);
    emb.row(0)[0] = 1.0f;
    emb.row(1)[2] = -1.0f;
    const std::vector<PairExample> batch{make_pair(doc, 0, 1, PairKind::natural)};
    const HeadParams zero(3, 4);
    for (const auto& w : {kStpTc, kStpNsp, kAll, LossWeights{0.5, 2, 3}}) {
        const double expected = w.stp * std::numbers::ln2 + w.tc * std::log(4.0) + w.nsp * std::numbers::ln2;
        CHECK(multitask_loss(zero, batch, emb, w).loss == doctest::Approx(expected).epsilon(1e-12));
    }
}

TEST_CASE("loss matches the straight-line oracle") {
    Rng rng(4);
    for (int t = 0; t < 40; ++t) {
        const auto in = oracle::random_instance(rng, 1 + uniform_index(rng, 8), 2 + uniform_index(rng, 4),
                                                1 + uniform_index(rng, 40), t % 3 == 0 ? 4 : 0);
        for (const auto& w : {kStpTc, kStpNsp, kAll}) {
            const auto r = multitask_loss(in.params, in.batch, in.emb, w);
            CHECK(r.loss == doctest::Approx(oracle::loss(in.params.values(), in.params.layout(), in.batch, in.emb, w))
                                .epsilon(1e-12));
            CHECK(r.loss == doctest::Approx(w.stp * r.stp_loss + w.tc * r.tc_loss + w.nsp * r.nsp_loss));
        }
    }
}

TEST_CASE("analytic gradient matches central differences") {
    Rng rng(5);
    for (int t = 0; t < 12; ++t) {
        const auto in = oracle::random_instance(rng, 1 + uniform_index(rng, 8), 2 + uniform_index(rng, 4),
                                                1 + uniform_index(rng, 8), t % 2 ? 0 : 1 + uniform_index(rng, 4));
        for (const auto& w : {kStpTc, kStpNsp, kAll}) CHECK(oracle::max_relative_error(in, w, 1e-4, 1e-5) < 1e-4);
    }
}

TEST_CASE("a zero weight removes its head") {
    Rng rng(6);
    auto in = oracle::random_instance(rng, 5, 3, 8);
    const auto& l = in.params.layout();
    const auto without = multitask_loss(in.params, in.batch, in.emb, kStpTc);
    for (std::size_t i = l.nsp_weight(); i < l.stp_weight(); ++i) CHECK(without.grad[i] == 0.0);
    CHECK(without.nsp_loss == 0.0);

    // Changing the unused head leaves loss and gradient bit-identical.
    auto other = in.params;
    for (std::size_t i = l.nsp_weight(); i < l.stp_weight(); ++i) other.values()[i] = uniform_real(rng, -9, 9);
    const auto again = multitask_loss(other, in.batch, in.emb, kStpTc);
    CHECK(again.loss == without.loss);
    CHECK(again.grad == without.grad);

    // The remaining heads see exactly the gradient they get alongside NSP.
    const auto with = multitask_loss(in.params, in.batch, in.emb, kAll);
    for (std::size_t i = 0; i < l.nsp_weight(); ++i) CHECK(with.grad[i] == without.grad[i]);
    for (std::size_t i = l.stp_weight(); i < l.total(); ++i) CHECK(with.grad[i] == without.grad[i]);
    CHECK(with.stp_loss == without.stp_loss);
    CHECK(with.tc_loss == without.tc_loss);
}

TEST_CASE("loss is invariant under batch permutation") {
    Rng rng(7);
    for (int t = 0; t < 20; ++t) {
        auto in = oracle::random_instance(rng, 4, 3, 1 + uniform_index(rng, 60));
        const auto a = multitask_loss(in.params, in.batch, in.emb, kAll);
        shuffle(std::span(in.batch), rng);
        const auto b = multitask_loss(in.params, in.batch, in.emb, kAll);
        CHECK(b.loss == doctest::Approx(a.loss).epsilon(1e-12));
        for (std::size_t i = 0; i < a.grad.size(); ++i) CHECK(b.grad[i] == doctest::Approx(a.grad[i]).epsilon(1e-10));
    }
}

TEST_CASE("loss reduction does not depend on the thread count") {
    Rng rng(8);
    const auto in = oracle::random_instance(rng, 6, 4, 400);
    const auto p = in.params.cast<float>();
    LossResult one, many;
    {
        ThreadEnv env("1");
        one = multitask_loss(p, in.batch, in.emb, kAll);
    }
    {
        ThreadEnv env("7");
        many = multitask_loss(p, in.batch, in.emb, kAll);
    }
    CHECK(one.loss == many.loss);
    CHECK(one.grad == many.grad);
}

TEST_CASE("loss errors") {
    Rng rng(9);
    auto in = oracle::random_instance(rng, 3, 2, 4);
    CHECK_THROWS_AS(multitask_loss(in.params, std::span<const PairExample>{}, in.emb, kAll), ShapeError);
    CHECK_THROWS_AS(multitask_loss(in.params, in.batch, in.emb, LossWeights{0, 0, 0}), ConfigError);

    auto bad = in.batch;
    bad[2].topic_i = 7;
    CHECK_THROWS_AS(multitask_loss(in.params, bad, in.emb, kAll), ShapeError);

    in.params.values()[in.params.layout().stp_bias()] = std::numeric_limits<double>::infinity();
    try {
        multitask_loss(in.params, in.batch, in.emb, kAll);
        FAIL("non-finite loss accepted");
    } catch (const NumericalError& e) {
        CHECK(std::string(e.what()).find("batch index 0") != std::string::npos);
    }
}

TEST_CASE("examples without topic labels skip the topic term") {
    Rng rng(10);
    auto in = oracle::random_instance(rng, 3, 3, 5);
    in.batch[1].topic_j = -1;
    const auto r = multitask_loss(in.params, in.batch, in.emb, kAll);
    CHECK(r.loss == doctest::Approx(oracle::loss(in.params.values(), in.params.layout(), in.batch, in.emb, kAll)));
    for (auto& ex : in.batch) ex.topic_i = -1;
    CHECK(multitask_loss(in.params, in.batch, in.emb, kAll).tc_loss == 0.0);
}

TEST_CASE("prediction") {
    const std::vector<float> u{0.3f, -0.2f}, v{0.1f, 0.9f};
    HeadParams p(2, 3);
    const auto zero = predict(p, u, v);
    CHECK(zero.stp == 0);
    CHECK(zero.nsp == 0);
    CHECK(zero.topic_u == 0);
    CHECK(zero.topic_v == 0);

    p.stp_bias()[0] = -1.0f;
    p.stp_bias()[1] = 3.0f;
    CHECK(predict(p, u, v).stp == 1);

    CHECK(argmax(std::vector<double>{1, 5, 5, 2}) == 1);

    Rng rng(11);
    for (int t = 0; t < 100; ++t) {
        HeadParams q(2, 3);
        for (auto& x : q.values()) x = float(uniform_real(rng, -2, 2));
        const auto before = predict(q, u, v);
        const float c = float(uniform_real(rng, -50, 50));
        for (auto& b : q.tc_bias()) b += c;
        for (auto& b : q.stp_bias()) b += c;
        for (auto& b : q.nsp_bias()) b += c;
        const auto after = predict(q, u, v);
        CHECK(after.stp == before.stp);
        CHECK(after.nsp == before.nsp);
        CHECK(after.topic_u == before.topic_u);
        CHECK(after.topic_v == before.topic_v);
    }
}

TEST_CASE("parameter checks") {
    CHECK_THROWS_AS(HeadParams(0, 2), ShapeError);
    HeadParams p(2, 2);
    CHECK_NOTHROW(p.check_finite());
    p.values()[3] = std::nanf("");
    CHECK_THROWS_AS(p.check_finite(), NumericalError);
    CHECK_THROWS_AS(LossWeights({-1, 1, 1}).validate(), ConfigError);
}
