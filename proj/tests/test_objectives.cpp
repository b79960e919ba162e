#include <cmath>
#include <vector>

#include "cosfuse/embedding.hpp"
#include "cosfuse/errors.hpp"
#include "cosfuse/graph.hpp"
#include "cosfuse/objectives.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace cosfuse;

namespace {

// Step output around hand-picked distribution / projection nodes; the fields
// not under test are placeholders.
DecoderStepOutput step_of(Graph& g, Var p_phi, Var e_tilde) {
    DecoderStepOutput out;
    out.h = g.constant(Tensor::vec({0.0}));
    out.p_phi = p_phi;
    out.e_tilde = e_tilde;
    out.attn = g.constant(Tensor::vec({1.0}));
    return out;
}

EmbeddingTable table_of(int rows, int cols, std::vector<double> values) {
    EmbeddingTable t;
    t.matrix = Tensor::mat(rows, cols, std::move(values));
    return t;
}

}  // namespace

TEST_CASE("negative log likelihood of the target entry") {
    Graph g;
    SUBCASE("perfect prediction costs nothing") {
        Var p = g.constant(Tensor::vec({0.0, 1.0, 0.0}));
        CHECK(g.val(asr_loss(g, p, 1)).item() == 0.0);
    }
    SUBCASE("uniform over four tokens") {
        Var p = g.constant(Tensor::vec({0.25, 0.25, 0.25, 0.25}));
        CHECK(g.val(asr_loss(g, p, 2)).item() ==
              doctest::Approx(std::log(4.0)).epsilon(1e-12));
    }
    SUBCASE("half mass on the target") {
        Var p = g.constant(Tensor::vec({0.5, 0.5}));
        CHECK(g.val(asr_loss(g, p, 0)).item() ==
              doctest::Approx(std::log(2.0)).epsilon(1e-12));
    }
    SUBCASE("target id out of range") {
        Var p = g.constant(Tensor::vec({0.5, 0.5}));
        CHECK_THROWS_AS(asr_loss(g, p, 2), lookup_error);
        CHECK_THROWS_AS(asr_loss(g, p, -1), lookup_error);
    }
}

TEST_CASE("cosine distance to the frozen target embedding") {
    Graph g;
    SUBCASE("matching the target costs nothing") {
        Var e = g.param(Tensor::vec({0.3, -0.4, 1.1}));
        Var t = g.constant(Tensor::vec({0.3, -0.4, 1.1}));
        const double r = g.val(reg_loss(g, e, t)).item();
        CHECK(r >= 0.0);
        CHECK(r < 1e-12);
    }
    SUBCASE("antipodal costs two") {
        Var e = g.param(Tensor::vec({0.3, -0.4, 1.1}));
        Var t = g.constant(Tensor::vec({-0.3, 0.4, -1.1}));
        const double r = g.val(reg_loss(g, e, t)).item();
        CHECK(r <= 2.0);
        CHECK(r == doctest::Approx(2.0).epsilon(1e-12));
    }
    SUBCASE("hand value") {
        Var e = g.param(Tensor::vec({1.0, 2.0}));
        Var t = g.constant(Tensor::vec({2.0, 1.0}));
        CHECK(g.val(reg_loss(g, e, t)).item() ==
              doctest::Approx(0.2).epsilon(1e-12));
    }
    SUBCASE("gradient reaches the projection but not the target") {
        Var e = g.param(Tensor::vec({1.0, 2.0}));
        Var t = g.constant(Tensor::vec({2.0, 1.0}));
        g.backward(reg_loss(g, e, t));
        CHECK(g.has_grad(e));
        CHECK_FALSE(g.has_grad(t));
    }
    SUBCASE("learnable target is rejected") {
        Var e = g.param(Tensor::vec({1.0, 2.0}));
        Var t = g.param(Tensor::vec({2.0, 1.0}));
        CHECK_THROWS_AS(reg_loss(g, e, t), contract_error);
    }
    SUBCASE("stays within its bounds on random input") {
        auto gen = testutil::rng(3);
        for (int trial = 0; trial < 50; trial++) {
            Graph gg;
            Var e = gg.param(testutil::random_vec(gen, 4));
            Var t = gg.constant(testutil::random_vec(gen, 4));
            const double r = gg.val(reg_loss(gg, e, t)).item();
            CHECK(r >= 0.0);
            CHECK(r <= 2.0);
        }
    }
}

TEST_CASE("temperature softmax over table cosines") {
    SUBCASE("identical rows give the uniform distribution") {
        Graph g;
        EmbeddingTable t = table_of(4, 3, {1, 2, 2, 1, 2, 2, 1, 2, 2, 1, 2, 2});
        Var e = g.param(Tensor::vec({0.3, -1.0, 0.5}));
        const Tensor& p = g.val(cosine_softmax(g, e, t, 0.1));
        for (int v = 0; v < 4; v++) {
            CHECK(p.at(v) == 0.25);
        }
    }
    SUBCASE("two orthogonal rows at temperature 0.1") {
        Graph g;
        EmbeddingTable t = table_of(2, 2, {1, 0, 0, 1});
        Var e = g.param(Tensor::vec({1.0, 0.0}));
        const Tensor& p = g.val(cosine_softmax(g, e, t, 0.1));
        const double z = 1.0 + std::exp(-10.0);
        CHECK(p.at(0) == doctest::Approx(1.0 / z).epsilon(1e-12));
        CHECK(p.at(1) == doctest::Approx(std::exp(-10.0) / z).epsilon(1e-12));
        CHECK(p.at(0) == doctest::Approx(0.9999546).epsilon(1e-6));
    }
    SUBCASE("invariant to scaling the query") {
        auto gen = testutil::rng(9);
        for (int trial = 0; trial < 20; trial++) {
            Graph g;
            EmbeddingTable t;
            t.matrix = testutil::random_mat(gen, 5, 4);
            Tensor e = testutil::random_vec(gen, 4);
            Tensor e7 = e;
            for (int i = 0; i < 4; i++) {
                e7.at(i) *= 7.0;
            }
            const Tensor p1 = g.val(cosine_softmax(g, g.param(e), t, 0.1));
            const Tensor p2 = g.val(cosine_softmax(g, g.param(e7), t, 0.1));
            for (int v = 0; v < 5; v++) {
                CHECK(p1.at(v) == doctest::Approx(p2.at(v)).epsilon(1e-9));
            }
        }
    }
    SUBCASE("degenerate row names the offending token") {
        Graph g;
        EmbeddingTable t = table_of(3, 2, {1, 0, 0, 1, 0, 0});
        Var e = g.param(Tensor::vec({1.0, 0.0}));
        CHECK_THROWS_WITH_AS(cosine_softmax(g, e, t, 0.1),
                             doctest::Contains("token id 2"),
                             degenerate_vector_error);
    }
    SUBCASE("non-positive temperature is rejected") {
        Graph g;
        EmbeddingTable t = table_of(2, 2, {1, 0, 0, 1});
        Var e = g.param(Tensor::vec({1.0, 0.0}));
        CHECK_THROWS_AS(cosine_softmax(g, e, t, 0.0), config_error);
        CHECK_THROWS_AS(cosine_softmax(g, e, t, -0.1), config_error);
    }
    SUBCASE("valid distribution on random input") {
        auto gen = testutil::rng(12);
        for (int trial = 0; trial < 30; trial++) {
            Graph g;
            EmbeddingTable t;
            t.matrix = testutil::random_mat(gen, 6, 3);
            Var e = g.param(testutil::random_vec(gen, 3));
            const Tensor& p = g.val(cosine_softmax(g, e, t, 0.05));
            double s = 0.0;
            for (int v = 0; v < 6; v++) {
                CHECK(p.at(v) > 0.0);
                CHECK(p.at(v) < 1.0);
                s += p.at(v);
            }
            CHECK(std::abs(s - 1.0) <= 1e-9);
        }
    }
    SUBCASE("lower temperature sharpens toward the best cosine") {
        Graph g;
        EmbeddingTable t = table_of(4, 3,
                                    {1.0, 0.1, 0.0,
                                     1.0, 0.5, 0.0,
                                     0.0, 1.0, 0.0,
                                     1.0, 1.0, 1.0});
        Var e = g.param(Tensor::vec({1.0, 0.0, 0.0}));

        double prev_max = 0.0;
        int argmax = -1;
        for (double tau : {1.0, 0.5, 0.1, 0.02}) {
            const Tensor& p = g.val(cosine_softmax(g, e, t, tau));
            double mx = p.at(0);
            int arg = 0;
            for (int v = 1; v < 4; v++) {
                if (p.at(v) > mx) {
                    mx = p.at(v);
                    arg = v;
                }
            }
            CHECK(mx > prev_max);
            prev_max = mx;
            if (argmax < 0) {
                argmax = arg;
            }
            CHECK(arg == argmax);
        }
        CHECK(argmax == 0);

        const Tensor& sharp = g.val(cosine_softmax(g, e, t, 1e-4));
        CHECK(sharp.at(0) > 0.999);
    }
    SUBCASE("argmax matches the best cosine on random tables") {
        auto gen = testutil::rng(31);
        for (int trial = 0; trial < 30; trial++) {
            Graph g;
            EmbeddingTable t;
            t.matrix = testutil::random_mat(gen, 7, 4);
            Tensor e = testutil::random_vec(gen, 4);

            int best = 0;
            double best_cos = -2.0;
            for (int v = 0; v < 7; v++) {
                double dot = 0.0, nr = 0.0;
                for (int j = 0; j < 4; j++) {
                    dot += e.at(j) * t.matrix.at(v, j);
                    nr += t.matrix.at(v, j) * t.matrix.at(v, j);
                }
                const double c = dot / (e.norm2() * std::sqrt(nr));
                if (c > best_cos) {
                    best_cos = c;
                    best = v;
                }
            }

            const Tensor& p = g.val(cosine_softmax(g, g.param(e), t, 0.1));
            int arg = 0;
            for (int v = 1; v < 7; v++) {
                if (p.at(v) > p.at(arg)) {
                    arg = v;
                }
            }
            CHECK(arg == best);
        }
    }
    SUBCASE("gradient flows into the query only") {
        Graph g;
        EmbeddingTable t = table_of(3, 2, {1, 0, 0, 1, 1, 1});
        Var e = g.param(Tensor::vec({0.5, 0.25}));
        Var table_node = g.constant(t.matrix);
        Var p = cosine_softmax(g, e, table_node, 0.1);
        g.backward(g.pick(p, 0));
        CHECK(g.has_grad(e));
        CHECK_FALSE(g.has_grad(table_node));
    }
}

TEST_CASE("mixing the word transform and cosine distributions") {
    Graph g;
    Var p_phi = g.constant(Tensor::vec({0.8, 0.2}));
    Var p_theta = g.constant(Tensor::vec({0.2, 0.8}));

    SUBCASE("weight zero returns the word transform node itself") {
        Var f = fuse(g, p_phi, p_theta, 0.0);
        CHECK(f.id == p_phi.id);
    }
    SUBCASE("weight one returns the cosine node itself") {
        Var f = fuse(g, p_phi, p_theta, 1.0);
        CHECK(f.id == p_theta.id);
    }
    SUBCASE("hand value at weight 0.1") {
        const Tensor& f = g.val(fuse(g, p_phi, p_theta, 0.1));
        CHECK(f.at(0) == doctest::Approx(0.74).epsilon(1e-12));
        CHECK(f.at(1) == doctest::Approx(0.26).epsilon(1e-12));
        CHECK(f.at(0) + f.at(1) == doctest::Approx(1.0).epsilon(1e-12));
    }
    SUBCASE("weight outside the unit interval is rejected") {
        CHECK_THROWS_AS(fuse(g, p_phi, p_theta, -0.01), config_error);
        CHECK_THROWS_AS(fuse(g, p_phi, p_theta, 1.01), config_error);
    }
    SUBCASE("stays a distribution for random mixtures") {
        auto gen = testutil::rng(17);
        std::uniform_real_distribution<double> dist(0.0, 1.0);
        for (int trial = 0; trial < 20; trial++) {
            Graph gg;
            Var a = gg.softmax(gg.constant(testutil::random_vec(gen, 5)));
            Var b = gg.softmax(gg.constant(testutil::random_vec(gen, 5)));
            const Tensor& f = gg.val(fuse(gg, a, b, dist(gen)));
            double s = 0.0;
            for (int v = 0; v < 5; v++) {
                CHECK(f.at(v) > 0.0);
                CHECK(f.at(v) < 1.0);
                s += f.at(v);
            }
            CHECK(std::abs(s - 1.0) <= 1e-9);
        }
    }
}

TEST_CASE("negative log likelihood of the fused distribution") {
    Graph g;
    SUBCASE("certain fused mass costs nothing") {
        Var p = g.constant(Tensor::vec({1.0, 0.0}));
        CHECK(g.val(fused_loss(g, p, 0)).item() == 0.0);
    }
    SUBCASE("hand value") {
        Var p = g.constant(Tensor::vec({0.74, 0.26}));
        CHECK(g.val(fused_loss(g, p, 0)).item() ==
              doctest::Approx(-std::log(0.74)).epsilon(1e-12));
        CHECK(g.val(fused_loss(g, p, 0)).item() ==
              doctest::Approx(0.3011051).epsilon(1e-6));
    }
    SUBCASE("weight zero reduces to the plain loss bit for bit") {
        Var p_phi = g.constant(Tensor::vec({0.8, 0.2}));
        Var p_theta = g.constant(Tensor::vec({0.2, 0.8}));
        Var f = fused_loss(g, fuse(g, p_phi, p_theta, 0.0), 1);
        Var a = asr_loss(g, p_phi, 1);
        CHECK(g.val(f).item() == g.val(a).item());
    }
}

TEST_CASE("regularized objective over a rollout") {
    auto make_steps = [](Graph& g, const std::vector<Tensor>& dists,
                         const std::vector<Tensor>& projections) {
        std::vector<DecoderStepOutput> steps;
        for (size_t t = 0; t < dists.size(); t++) {
            steps.push_back(step_of(g, g.constant(dists[t]),
                                    g.param(projections[t])));
        }
        return steps;
    };

    SUBCASE("weight zero leaves the likelihood sum untouched") {
        Graph g;
        auto steps = make_steps(g,
                                {Tensor::vec({0.7, 0.3}), Tensor::vec({0.4, 0.6}),
                                 Tensor::vec({0.9, 0.1})},
                                {Tensor::vec({1.0, 0.0}), Tensor::vec({1.0, 0.0}),
                                 Tensor::vec({1.0, 0.0})});
        EmbeddingTable table = table_of(2, 2, {1, 0, 0, 1});
        LossBreakdown b =
            combined_objective(g, steps, {0, 1, 0}, table, {.lambda = 0.0});

        double expect = -std::log(0.7);
        expect += -std::log(0.6);
        expect += -std::log(0.9);
        CHECK(b.total_value == expect);
        CHECK(b.reg_term == 0.0);
        CHECK(b.steps == 3);
    }
    SUBCASE("single step hand arithmetic") {
        Graph g;
        const double py = std::exp(-0.7);
        auto steps = make_steps(g, {Tensor::vec({py, 1.0 - py})},
                                {Tensor::vec({0.9, std::sqrt(0.19)})});
        EmbeddingTable table = table_of(2, 2, {1, 0, 0, 1});
        LossBreakdown b =
            combined_objective(g, steps, {0}, table, {.lambda = 10.0});

        CHECK(b.data_term == doctest::Approx(0.7).epsilon(1e-12));
        CHECK(b.reg_term == doctest::Approx(0.1).epsilon(1e-12));
        CHECK(b.mean_cosine == doctest::Approx(0.9).epsilon(1e-12));
        CHECK(b.total_value == doctest::Approx(1.7).epsilon(1e-12));
        CHECK(std::abs(b.total_value - (b.data_term + 10.0 * b.reg_term)) <= 1e-12);
    }
    SUBCASE("misaligned or empty input is rejected") {
        Graph g;
        auto steps = make_steps(g, {Tensor::vec({0.5, 0.5})},
                                {Tensor::vec({1.0, 0.0})});
        EmbeddingTable table = table_of(2, 2, {1, 0, 0, 1});
        CHECK_THROWS_AS(combined_objective(g, steps, {0, 1}, table, {}),
                        contract_error);
        CHECK_THROWS_AS(
            combined_objective(g, {}, {}, table, {}), data_error);
        CHECK_THROWS_AS(
            combined_objective(g, steps, {0}, table, {.lambda = -1.0}),
            config_error);
    }
    SUBCASE("gradient matches finite differences") {
        EmbeddingTable table = table_of(3, 3, {1, 0, 0, 0, 1, 0, 0.5, 0.5, 0.7});
        auto fn = [&table](Graph& g, const std::vector<Var>& leaves) {
            std::vector<DecoderStepOutput> steps;
            steps.push_back(step_of(g, g.softmax(leaves[0]), leaves[1]));
            steps.push_back(step_of(g, g.softmax(leaves[2]), leaves[3]));
            return combined_objective(g, steps, {2, 1}, table, {.lambda = 10.0})
                .total;
        };
        auto gen = testutil::rng(23);
        std::vector<Tensor> points = {
            testutil::random_vec(gen, 3), testutil::random_vec(gen, 3),
            testutil::random_vec(gen, 3), testutil::random_vec(gen, 3)};
        CHECK(grad_check(fn, points, 1e-5) < 1e-4);
    }
}

TEST_CASE("fused objective over a rollout") {
    EmbeddingTable table = table_of(3, 3, {1, 0, 0, 0, 1, 0, 0.5, 0.5, 0.7});

    auto build = [](Graph& g, const std::vector<Tensor>& logits,
                    const std::vector<Tensor>& projections) {
        std::vector<DecoderStepOutput> steps;
        for (size_t t = 0; t < logits.size(); t++) {
            steps.push_back(
                step_of(g, g.softmax(g.param(logits[t])), g.param(projections[t])));
        }
        return steps;
    };

    SUBCASE("doubly degenerate config reduces to the likelihood sum") {
        Graph g;
        auto steps = build(g, {Tensor::vec({0.3, -0.2, 0.9})},
                           {Tensor::vec({1.0, 0.2, 0.0})});
        LossBreakdown b = combined_fused_objective(
            g, steps, {2}, table, {.lambda = 0.0}, {.tau = 0.1, .lambda_f = 0.0});
        CHECK(b.total_value == g.val(asr_loss(g, steps[0].p_phi, 2)).item());
        CHECK(b.reg_term == 0.0);
    }
    SUBCASE("fusion weight zero equals the unfused objective bit for bit") {
        Graph g;
        const std::vector<Tensor> logits = {Tensor::vec({0.3, -0.2, 0.9}),
                                            Tensor::vec({-1.0, 0.5, 0.0})};
        const std::vector<Tensor> projections = {Tensor::vec({1.0, 0.2, 0.0}),
                                                 Tensor::vec({0.1, 0.9, 0.3})};
        auto steps_a = build(g, logits, projections);
        auto steps_b = build(g, logits, projections);
        LossBreakdown fused = combined_fused_objective(
            g, steps_a, {2, 1}, table, {.lambda = 10.0},
            {.tau = 0.1, .lambda_f = 0.0});
        LossBreakdown plain =
            combined_objective(g, steps_b, {2, 1}, table, {.lambda = 10.0});
        CHECK(fused.total_value == plain.total_value);
        CHECK(fused.data_term == plain.data_term);
        CHECK(fused.reg_term == plain.reg_term);
        CHECK(fused.mean_cosine == plain.mean_cosine);
    }
    SUBCASE("breakdown invariant") {
        Graph g;
        auto steps = build(g, {Tensor::vec({0.3, -0.2, 0.9}),
                               Tensor::vec({-1.0, 0.5, 0.0})},
                           {Tensor::vec({1.0, 0.2, 0.0}),
                            Tensor::vec({0.1, 0.9, 0.3})});
        LossBreakdown b = combined_fused_objective(
            g, steps, {2, 1}, table, {.lambda = 10.0},
            {.tau = 0.1, .lambda_f = 0.1});
        CHECK(std::abs(b.total_value - (b.data_term + 10.0 * b.reg_term)) <= 1e-12);
        CHECK(b.data_term > 0.0);
        CHECK(b.reg_term >= 0.0);
    }
    SUBCASE("gradient matches finite differences") {
        auto fn = [&table](Graph& g, const std::vector<Var>& leaves) {
            std::vector<DecoderStepOutput> steps;
            steps.push_back(step_of(g, g.softmax(leaves[0]), leaves[1]));
            steps.push_back(step_of(g, g.softmax(leaves[2]), leaves[3]));
            return combined_fused_objective(g, steps, {2, 1}, table,
                                            {.lambda = 10.0},
                                            {.tau = 0.1, .lambda_f = 0.1})
                .total;
        };
        auto gen = testutil::rng(29);
        std::vector<Tensor> points = {
            testutil::random_vec(gen, 3), testutil::random_vec(gen, 3),
            testutil::random_vec(gen, 3), testutil::random_vec(gen, 3)};
        CHECK(grad_check(fn, points, 1e-5) < 1e-4);
    }
    SUBCASE("gradient flows through both the fusion and regularization paths") {
        Graph g;
        Var logits = g.param(Tensor::vec({0.3, -0.2, 0.9}));
        Var proj = g.param(Tensor::vec({1.0, 0.2, 0.0}));
        auto steps = std::vector<DecoderStepOutput>{
            step_of(g, g.softmax(logits), proj)};

        LossBreakdown reg_only = combined_fused_objective(
            g, steps, {2}, table, {.lambda = 10.0}, {.tau = 0.1, .lambda_f = 0.0});
        g.backward(reg_only.total);
        const Tensor g_reg = g.grad(proj);

        Graph g2;
        Var logits2 = g2.param(Tensor::vec({0.3, -0.2, 0.9}));
        Var proj2 = g2.param(Tensor::vec({1.0, 0.2, 0.0}));
        auto steps2 = std::vector<DecoderStepOutput>{
            step_of(g2, g2.softmax(logits2), proj2)};
        LossBreakdown both = combined_fused_objective(
            g2, steps2, {2}, table, {.lambda = 10.0}, {.tau = 0.1, .lambda_f = 0.1});
        g2.backward(both.total);
        const Tensor g_both = g2.grad(proj2);

        bool differs = false;
        for (int i = 0; i < 3; i++) {
            differs = differs || g_both.at(i) != g_reg.at(i);
        }
        CHECK(differs);
        CHECK(g2.has_grad(logits2));
    }
}
