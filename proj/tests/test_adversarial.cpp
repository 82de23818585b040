#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "fd_check.hpp"
#include "mcm/adversarial.hpp"
#include "mcm/rng.hpp"

using namespace mcm;

namespace {

DiscArch small_disc_arch() {
    DiscArch a;
    a.channels = 1;
    a.height = 8;
    a.width = 8;
    a.num_classes = 4;
    a.encoder_widths = {6, 8, 10};
    return a;
}

Video random_video(Shape s, std::uint64_t seed) {
    auto g = derive_rng(seed, "t.adv");
    return Tensor::randn(std::move(s), g, 0.5);
}

void zero_heads(Discriminator& d, double bias) {
    for (auto& p : d.head_params()) {
        std::fill(p.v->value.data.begin(), p.v->value.data.end(), 0.0);
        if (p.name.find(".b") != std::string::npos) p.v->value.data[0] = bias;
    }
}

std::vector<ad::VarPtr> head_leaves(Discriminator& d) {
    std::vector<ad::VarPtr> out;
    for (auto& p : d.head_params()) out.push_back(p.v);
    return out;
}

}  // namespace

TEST_CASE("sample_frames: ordering, bounds, determinism, uniformity") {
    Video v = random_video({8, 1, 4, 4}, 1);

    SUBCASE("l = F returns every frame in order; frames match the clip") {
        auto g = derive_rng(2, "t.sfall");
        FrameSample fs = sample_frames(v, 8, g);
        REQUIRE(fs.indices.size() == 8);
        for (long i = 0; i < 8; ++i) {
            CHECK(fs.indices[size_t(i)] == i);
            for (long j = 0; j < 16; ++j)
                CHECK(fs.frames[size_t(i)].data[size_t(j)] == v.data[size_t(i * 16 + j)]);
        }
    }

    SUBCASE("l = 1 picks a single in-range frame; indices always increase") {
        auto g = derive_rng(3, "t.sf1");
        for (int rep = 0; rep < 50; ++rep) {
            FrameSample one = sample_frames(v, 1, g);
            REQUIRE(one.indices.size() == 1);
            CHECK(one.indices[0] >= 0);
            CHECK(one.indices[0] < 8);
            FrameSample three = sample_frames(v, 3, g);
            CHECK(std::is_sorted(three.indices.begin(), three.indices.end()));
            CHECK(std::adjacent_find(three.indices.begin(), three.indices.end()) ==
                  three.indices.end());
        }
    }

    SUBCASE("bad counts rejected; same seed reproduces") {
        auto g = derive_rng(4, "t.sfbad");
        CHECK_THROWS_AS(sample_frames(v, 0, g), ParameterError);
        CHECK_THROWS_AS(sample_frames(v, 9, g), ParameterError);
        auto g1 = derive_rng(5, "t.sfdet"), g2 = derive_rng(5, "t.sfdet");
        CHECK(sample_frames(v, 2, g1).indices == sample_frames(v, 2, g2).indices);
    }

    SUBCASE("index frequencies pass a chi-square uniformity check") {
        // dof = 7, p = 0.01 critical value.
        const double crit = 18.4753;
        for (long l : {1L, 2L}) {
            auto g = derive_rng(6, "t.sfchi", static_cast<std::uint64_t>(l));
            std::vector<long> counts(8, 0);
            const int draws = 10000;
            for (int i = 0; i < draws; ++i)
                for (long idx : sample_frames(v, l, g).indices) counts[size_t(idx)]++;
            double expected = double(draws * l) / 8.0;
            double chi2 = 0.0;
            for (long c : counts) {
                double d = double(c) - expected;
                chi2 += d * d / expected;
            }
            CHECK(chi2 < crit);
        }
    }
}

TEST_CASE("discriminator: determinism, frozen fingerprint, class conditioning") {
    Discriminator d(small_disc_arch(), 11);
    Video img = random_video({1, 8, 8}, 7);

    double s1 = d.score_value(img, Condition::of(1));
    CHECK(s1 == d.score_value(img, Condition::of(1)));
    CHECK(s1 != d.score_value(img, Condition::of(2)));  // projection is class-specific
    CHECK(std::isfinite(d.score_value(img, Condition::null_cond())));
    CHECK_THROWS_AS(d.score_value(img, Condition::of(9)), ParameterError);
    CHECK_THROWS_AS(d.score_value(random_video({1, 4, 4}, 8), Condition::of(1)), ShapeError);

    std::uint64_t fp = d.encoder_fingerprint();
    for (auto& p : d.head_params())
        for (double& x : p.v->value.data) x += 0.37;
    CHECK(d.encoder_fingerprint() == fp);  // heads move, frozen encoder does not
    Discriminator other(small_disc_arch(), 12);
    CHECK(other.encoder_fingerprint() != fp);
}

TEST_CASE("constant discriminator collapses both losses to hand arithmetic") {
    Discriminator d(small_disc_arch(), 13);
    Video v = random_video({4, 1, 8, 8}, 9);
    auto g = derive_rng(10, "t.const");
    FrameSample fs = sample_frames(v, 2, g);

    zero_heads(d, 0.7);  // score == 0.7 everywhere
    CHECK(d.score_value(fs.frames[0], Condition::of(0)) == doctest::Approx(0.7));
    CHECK(generator_adv_loss(d, fs, Condition::of(0)) == doctest::Approx(-0.7));
    ad::VarPtr graph = generator_adv_loss(d, ad::constant(v), fs.indices, Condition::of(0));
    CHECK(graph->value.data[0] == doctest::Approx(-0.7));

    zero_heads(d, 0.0);  // score == 0: hinge part = (1+0) + (1-0) = 2
    std::vector<const Video*> reals{&fs.frames[0], &fs.frames[1]};
    std::vector<Condition> rc{Condition::of(0), Condition::of(1)};
    ad::VarPtr l0 = discriminator_loss(d, {fs}, {Condition::of(0)}, reals, rc, 0.0);
    CHECK(l0->value.data[0] == doctest::Approx(2.0));
    // Zero heads also kill the input gradient, so any R1 weight changes nothing.
    ad::VarPtr l1 = discriminator_loss(d, {fs}, {Condition::of(0)}, reals, rc, 10.0);
    CHECK(l1->value.data[0] == doctest::Approx(2.0));
}

TEST_CASE("generator loss: formula, gradient routing, finite differences") {
    Discriminator d(small_disc_arch(), 14);
    Video v = random_video({4, 1, 8, 8}, 15);
    auto g = derive_rng(16, "t.gen");
    FrameSample fs = sample_frames(v, 2, g);
    Condition c = Condition::of(2);

    double want = 0.0;
    for (const Video& f : fs.frames) want += d.score_value(f, c);
    want = -want / 2.0;
    CHECK(generator_adv_loss(d, fs, c) == doctest::Approx(want).epsilon(1e-12));

    ad::VarPtr leaf = ad::var(v, true);
    nn::zero_grads(d.head_params());
    ad::VarPtr loss = generator_adv_loss(d, leaf, fs.indices, c);
    CHECK(loss->value.data[0] == doctest::Approx(want).epsilon(1e-12));
    ad::backward(loss);
    double video_grad = 0.0;
    for (double x : leaf->grad.data) video_grad += std::abs(x);
    CHECK(video_grad > 0.0);
    for (auto& p : d.head_params())
        for (double x : p.v->grad.data) CHECK(x == 0.0);  // psi untouched

    auto rebuild = [&]() { return generator_adv_loss(d, leaf, fs.indices, c); };
    auto res = fdcheck::run({leaf}, rebuild, 1e-5, 4);
    CHECK(res.checked >= 4);
    CHECK(res.max_rel_err < 1e-4);
}

TEST_CASE("discriminator loss: hinge oracle, nonnegativity, psi gradients") {
    Discriminator d(small_disc_arch(), 17);
    Video v1 = random_video({4, 1, 8, 8}, 18), v2 = random_video({4, 1, 8, 8}, 19);
    auto g = derive_rng(20, "t.disc");
    FrameSample f1 = sample_frames(v1, 2, g), f2 = sample_frames(v2, 3, g);
    Video r1img = random_video({1, 8, 8}, 21), r2img = random_video({1, 8, 8}, 22);
    std::vector<const Video*> reals{&r1img, &r2img};
    std::vector<Condition> fc{Condition::of(0), Condition::of(3)};
    std::vector<Condition> rc{Condition::of(1), Condition::of(2)};

    std::vector<double> fake_means;
    for (const FrameSample* fs : {&f1, &f2}) {
        double m = 0.0;
        for (size_t i = 0; i < fs->frames.size(); ++i)
            m += d.score_value(fs->frames[i], fs == &f1 ? fc[0] : fc[1]);
        fake_means.push_back(m / double(fs->frames.size()));
    }
    std::vector<double> real_scores{d.score_value(r1img, rc[0]), d.score_value(r2img, rc[1])};

    ad::VarPtr loss = discriminator_loss(d, {f1, f2}, fc, reals, rc, 0.0);
    CHECK(loss->value.data[0] ==
          doctest::Approx(hinge_parts(fake_means, real_scores)).epsilon(1e-12));
    CHECK(loss->value.data[0] >= 0.0);

    nn::zero_grads(d.head_params());
    ad::backward(loss);
    double total_grad = 0.0;
    for (auto& p : d.head_params())
        for (double x : p.v->grad.data) total_grad += std::abs(x);
    CHECK(total_grad > 0.0);

    CHECK_THROWS_AS(discriminator_loss(d, {}, {}, reals, rc, 0.0), ParameterError);
    CHECK_THROWS_AS(discriminator_loss(d, {f1}, fc, reals, rc, 0.0), ParameterError);
}

TEST_CASE("generator and discriminator push fake scores in opposite directions") {
    Discriminator d(small_disc_arch(), 23);
    Video frame = random_video({1, 8, 8}, 24);
    Condition c = Condition::of(1);
    REQUIRE(d.score_value(frame, c) > -1.0);  // fake hinge active

    // dL_G/dframe from the generator objective (single frame, l = 1).
    Video clip = frame.reshaped({1, 1, 8, 8});
    ad::VarPtr gleaf = ad::var(clip, true);
    ad::backward(generator_adv_loss(d, gleaf, {0}, c));

    // dL_D(fake part)/dframe for the same frame.
    ad::VarPtr dleaf = ad::var(frame, true);
    ad::VarPtr hinge = ad::relu(ad::add_scalar(d.score(dleaf, c), 1.0));
    ad::backward(hinge);

    for (long i = 0; i < frame.numel(); ++i)
        CHECK(dleaf->grad.data[size_t(i)] ==
              doctest::Approx(-gleaf->grad.data[size_t(i)]).epsilon(1e-10));
}

TEST_CASE("input gradient matches finite differences of the score") {
    Discriminator d(small_disc_arch(), 25);
    Video img = random_video({1, 8, 8}, 26);
    Condition c = Condition::of(3);
    ad::NoGradGuard guard;
    Tensor grad = d.input_gradient(img, c)->value;
    CHECK(grad.shape == img.shape);
    const double h = 1e-6;
    for (long i : {0L, 9L, 27L, 40L, 63L}) {
        Video plus = img, minus = img;
        plus.data[size_t(i)] += h;
        minus.data[size_t(i)] -= h;
        double fd = (d.score_value(plus, c) - d.score_value(minus, c)) / (2.0 * h);
        CHECK(grad.data[size_t(i)] == doctest::Approx(fd).epsilon(1e-5));
    }
}

TEST_CASE("R1 penalty: weight scaling and exact psi gradients") {
    Discriminator d(small_disc_arch(), 27);
    Video v = random_video({4, 1, 8, 8}, 28);
    auto g = derive_rng(29, "t.r1");
    FrameSample fs = sample_frames(v, 2, g);
    Video r1img = random_video({1, 8, 8}, 30);
    std::vector<const Video*> reals{&r1img};
    std::vector<Condition> fc{Condition::of(0)}, rc{Condition::of(2)};

    double base = discriminator_loss(d, {fs}, fc, reals, rc, 0.0)->value.data[0];
    double w1 = discriminator_loss(d, {fs}, fc, reals, rc, 1.0)->value.data[0];
    double w2 = discriminator_loss(d, {fs}, fc, reals, rc, 2.0)->value.data[0];
    CHECK(w1 > base);  // random heads have nonzero input gradient
    CHECK(w2 - base == doctest::Approx(2.0 * (w1 - base)).epsilon(1e-9));

    auto rebuild = [&]() { return discriminator_loss(d, {fs}, fc, reals, rc, 3.0); };
    auto res = fdcheck::run(head_leaves(d), rebuild, 1e-5, 2);
    CHECK(res.checked >= 10);
    CHECK(res.max_rel_err < 1e-4);
}
