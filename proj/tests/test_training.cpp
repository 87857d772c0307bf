#include "doctest.h"
#include "helpers.hpp"

#include "sympflow/systems.hpp"
#include "sympflow/training.hpp"

using namespace sympflow;
using testutil::point;
using testutil::vec;

namespace {

TimedBatch single(double t, const PhasePoint& x)
{
    return make_batch({{t, x}});
}

TrainingConfig tiny_config()
{
    TrainingConfig c;
    c.n_collocation = 24;
    c.n_matching = 16;
    c.batch_size = 8;
    c.epochs = 3;
    c.seed = 5;
    return c;
}

} // namespace

TEST_CASE("exact flow has zero physics-informed residual")
{
    const auto h = harmonic_oscillator();
    const auto batch = sample_collocation(h.domain, 1.0, 64, 3);
    const double loss = pi_loss([](double t, const PhasePoint& x) { return exact_flow_harmonic(t, x); }, h, batch);
    CHECK(loss <= 1e-10);
}

TEST_CASE("physics-informed loss of an identity model")
{
    const auto h = harmonic_oscillator();
    const auto zero = SympFlowModel::zeros(1, 2, {4}, Activation::Tanh);
    CHECK(pi_loss(zero, h, single(0.4, point({1, 0}))) == doctest::Approx(1.0));
    CHECK(pi_loss(zero, h, single(0.4, point({3, 4}))) == doctest::Approx(25.0));
    const BaselineFlowNet baseline(1, zero_mlp(3, {4}, 2, Activation::Tanh));
    CHECK(pi_loss(baseline, h, single(0.4, point({1, 0}))) == doctest::Approx(1.0));
    CHECK_THROWS_AS(pi_loss(zero, henon_heiles(), single(0.4, point({1, 0}))), InvalidArgument);
}

TEST_CASE("Hamiltonian matching loss by hand")
{
    const auto h = harmonic_oscillator();
    const auto model = testutil::quadratic_model();
    CHECK(hamiltonian_matching_loss(model, h, single(0.0, point({3, 1}))) == doctest::Approx(0.0).scale(1.0));
    CHECK(hamiltonian_matching_loss(model, h, single(1.0, point({3, 1}))) == doctest::Approx(6.25));
    const auto zero = SympFlowModel::zeros(1, 1, {4}, Activation::Tanh);
    CHECK(hamiltonian_matching_loss(zero, h, single(0.3, point({0.5, 0.5}))) == doctest::Approx(0.0625));
    CHECK(hamiltonian_matching_loss(zero, h, single(0.3, point({1, 0}))) == doctest::Approx(0.25));
}

TEST_CASE("total loss is the weighted sum")
{
    const auto h = harmonic_oscillator();
    const auto zero = SympFlowModel::zeros(1, 1, {4}, Activation::Tanh);
    const auto pi = single(0.4, point({1, 0}));
    const auto match = single(0.3, point({1, 0}));
    const auto l = total_loss(zero, h, pi, match);
    CHECK(l.pi == doctest::Approx(1.0));
    CHECK(l.match == doctest::Approx(0.25));
    CHECK(l.total == doctest::Approx(1.25));
    CHECK(total_loss(zero, h, pi, match, 2.0, 0.5).total == doctest::Approx(2.125));
}

TEST_CASE("losses are non-negative")
{
    Rng rng(21);
    const auto hh = henon_heiles();
    for (int i = 0; i < 5; ++i) {
        const auto model = SympFlowModel::random(2, 2, {6}, Activation::Tanh, rng.next());
        const auto batch = sample_collocation(hh.domain, 1.0, 10, rng.next());
        CHECK(pi_loss(model, hh, batch) >= 0.0);
        CHECK(hamiltonian_matching_loss(model, hh, batch) >= 0.0);
    }
}

TEST_CASE("Adam update")
{
    TrainingConfig c;
    c.learning_rate = 1e-3;
    Vector params = vec({1.0});
    AdamState s(1);
    adam_step(params, vec({0.5}), s, c);
    CHECK(params(0) == doctest::Approx(0.999).epsilon(1e-9));
    CHECK(s.step == 1);
    CHECK(s.v(0) >= 0.0);

    Vector a = vec({1.0, -2.0});
    AdamState sa(2);
    adam_step(a, Vector::Zero(2), sa, c);
    CHECK(a == vec({1.0, -2.0}));

    Vector x = vec({0.3, 0.1}), y = x;
    AdamState sx(2), sy(2);
    for (int k = 0; k < 4; ++k) {
        adam_step(x, vec({0.2, -1.0}), sx, c);
        adam_step(y, vec({0.2, -1.0}), sy, c);
    }
    CHECK(x == y);

    Vector bad = vec({0.0, 0.0});
    try {
        adam_step(bad, vec({0.0, NAN}), sa, c);
        FAIL("expected a numerical error");
    } catch (const NumericalError& e) {
        CHECK(std::string(e.what()).find("index 1") != std::string::npos);
    }
}

TEST_CASE("training configuration validation")
{
    TrainingConfig c;
    CHECK_NOTHROW(c.validate());
    auto broken = [](auto edit) {
        TrainingConfig c;
        edit(c);
        return c;
    };
    CHECK_THROWS_AS(broken([](TrainingConfig& c) { c.dt = 0.0; }).validate(), InvalidArgument);
    CHECK_THROWS_AS(broken([](TrainingConfig& c) { c.n_matching = 0; }).validate(), InvalidArgument);
    CHECK_THROWS_AS(broken([](TrainingConfig& c) { c.beta1 = 1.0; }).validate(), InvalidArgument);
    CHECK_THROWS_AS(broken([](TrainingConfig& c) { c.learning_rate = -1.0; }).validate(), InvalidArgument);
    CHECK_THROWS_AS(broken([](TrainingConfig& c) { c.chunk_rows = 0; }).validate(), InvalidArgument);
}

TEST_CASE("collocation sampling")
{
    const auto box = DomainBox::cube(2, 1.0);
    const auto a = sample_collocation(box, 0.5, 200, 9);
    const auto b = sample_collocation(box, 0.5, 200, 9);
    CHECK(a.t == b.t);
    CHECK(a.x == b.x);
    CHECK(a.t.minCoeff() >= 0.0);
    CHECK(a.t.maxCoeff() <= 0.5);
    for (Eigen::Index i = 0; i < a.x.rows(); ++i) {
        CHECK(box.contains(a.x.row(i).transpose()));
    }
    const auto s = a.slice(10, 5);
    CHECK(s.size() == 5);
    CHECK(s.t(0) == a.t(10));
    CHECK_THROWS_AS(a.slice(198, 5), InvalidArgument);
    CHECK_THROWS_AS(make_batch({}), InvalidArgument);
}

TEST_CASE("total loss gradient matches finite differences")
{
    Rng rng(77);
    const auto h = harmonic_oscillator();
    const auto model = SympFlowModel::random(1, 1, {4}, Activation::Tanh, rng.next());
    const auto pi = sample_collocation(h.domain, 1.0, 12, rng.next());
    const auto match = sample_collocation(h.domain, 1.0, 12, rng.next());
    TrainingConfig c;
    c.chunk_rows = 5; // exercise uneven chunks
    const auto g = total_loss_gradient(model, h, pi, match, c);
    CHECK(g.loss.total == doctest::Approx(total_loss(model, h, pi, match).total).epsilon(1e-12));

    const Vector theta = model.parameters();
    std::vector<Eigen::Index> picks;
    for (int k = 0; k < 20; ++k) {
        picks.push_back(static_cast<Eigen::Index>(rng.next() % static_cast<std::uint64_t>(theta.size())));
    }
    Vector exact(20), fd(20);
    const double step = 1e-6;
    for (int k = 0; k < 20; ++k) {
        auto at = [&](double delta) {
            SympFlowModel m = model;
            Vector th = theta;
            th(picks[k]) += delta;
            m.set_parameters(th);
            return total_loss(m, h, pi, match).total;
        };
        fd(k) = (at(step) - at(-step)) / (2 * step);
        exact(k) = g.gradient(picks[k]);
    }
    CHECK(testutil::rel_error(exact, fd) <= 1e-5);
}

TEST_CASE("baseline loss gradient matches finite differences")
{
    Rng rng(78);
    const auto h = harmonic_oscillator();
    const auto net = init_baseline(1, {4}, Activation::Tanh, rng.next());
    const auto pi = sample_collocation(h.domain, 1.0, 9, rng.next());
    TrainingConfig c;
    const auto g = total_loss_gradient(net, h, pi, c);
    CHECK(g.loss.match == 0.0);
    CHECK(g.loss.total == doctest::Approx(pi_loss(net, h, pi)).epsilon(1e-12));
    const Vector theta = net.parameters();
    Vector fd(theta.size());
    for (Eigen::Index k = 0; k < theta.size(); ++k) {
        auto at = [&](double delta) {
            BaselineFlowNet m = net;
            Vector th = theta;
            th(k) += delta;
            m.set_parameters(th);
            return pi_loss(m, h, pi);
        };
        fd(k) = (at(1e-6) - at(-1e-6)) / 2e-6;
    }
    CHECK(testutil::rel_error(g.gradient, fd) <= 1e-5);
}

TEST_CASE("gradient does not depend on the thread count")
{
    Rng rng(5);
    const auto hh = henon_heiles();
    const auto model = SympFlowModel::random(2, 2, {6}, Activation::Tanh, rng.next());
    const auto pi = sample_collocation(hh.domain, 1.0, 100, rng.next());
    const auto match = sample_collocation(hh.domain, 1.0, 70, rng.next());
    TrainingConfig one;
    TrainingConfig three;
    three.threads = 3;
    const auto a = total_loss_gradient(model, hh, pi, match, one);
    const auto b = total_loss_gradient(model, hh, pi, match, three);
    CHECK(a.gradient == b.gradient);
    CHECK(a.loss.total == b.loss.total);
}

TEST_CASE("zero epochs leave the model unchanged")
{
    auto c = tiny_config();
    c.epochs = 0;
    const auto model = SympFlowModel::random(1, 2, {4}, Activation::Tanh, 1);
    const auto r = train(model, harmonic_oscillator(), c);
    CHECK(r.model.parameters() == model.parameters());
    CHECK(r.history.empty());
}

TEST_CASE("training is reproducible and reports every epoch")
{
    const auto c = tiny_config();
    const auto h = harmonic_oscillator();
    const auto model = SympFlowModel::random(1, 2, {4}, Activation::Tanh, 1);
    std::vector<std::size_t> seen;
    const auto a = train(model, h, c, [&](const EpochRecord& r) { seen.push_back(r.epoch); });
    const auto b = train(model, h, c);
    CHECK(a.model.parameters() == b.model.parameters());
    REQUIRE(a.history.size() == 3);
    CHECK(seen == std::vector<std::size_t>{1, 2, 3});
    for (const auto& r : a.history) {
        CHECK(r.total == doctest::Approx(r.pi + r.match));
    }
    CHECK(a.model.parameters() != model.parameters());
    auto other = c;
    other.seed = 6;
    CHECK(train(model, h, other).model.parameters() != a.model.parameters());

    const auto net = init_baseline(1, {4}, Activation::Tanh, 2);
    const auto ba = train(net, h, c);
    const auto bb = train(net, h, c);
    CHECK(ba.model.parameters() == bb.model.parameters());
    CHECK(ba.history.back().match == 0.0);
}

TEST_CASE("training loss decreases on a small problem")
{
    auto c = tiny_config();
    c.epochs = 60;
    c.learning_rate = 1e-2;
    const auto r = train(SympFlowModel::random(1, 1, {8}, Activation::Tanh, 3), harmonic_oscillator(), c);
    CHECK(r.history.back().total < 0.5 * r.history.front().total);
}

TEST_CASE("divergence raises a training error with the last finite state")
{
    auto c = tiny_config();
    c.learning_rate = 1e300; // the first updates overflow the weights
    c.epochs = 20;
    const auto hh = henon_heiles();
    const auto model = SympFlowModel::random(2, 1, {4}, Activation::Tanh, 1);
    try {
        (void)train(model, hh, c);
        FAIL("expected divergence");
    } catch (const TrainingError& e) {
        CHECK(e.parameters().size() == static_cast<Eigen::Index>(model.parameter_count()));
        CHECK(e.parameters().allFinite());
        CHECK(e.epoch() >= 1);
    }
    CHECK_THROWS_AS(train(model, harmonic_oscillator(), c), InvalidArgument);
}
