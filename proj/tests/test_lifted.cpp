#include <doctest.h>

#include <random>

#include "stmpc/lifted.hpp"
#include "stmpc/terminal.hpp"

using namespace stmpc;

namespace {

PlantModel scalar_plant(double a, double b, double q = 1.0, double r = 1.0) {
    PlantModel plant;
    plant.A = Matrix::Constant(1, 1, a);
    plant.B = Matrix::Constant(1, 1, b);
    plant.Q = Matrix::Constant(1, 1, q);
    plant.R = Matrix::Constant(1, 1, r);
    return plant;
}

PlantModel random_plant(std::mt19937_64& rng, int n, int m) {
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    PlantModel plant;
    plant.A = Matrix::NullaryExpr(n, n, [&] { return unif(rng); });
    plant.B = Matrix::NullaryExpr(n, m, [&] { return unif(rng); });
    Matrix G = Matrix::NullaryExpr(n, n, [&] { return unif(rng); });
    plant.Q = G * G.transpose() + 0.1 * Matrix::Identity(n, n);
    Matrix H = Matrix::NullaryExpr(m, m, [&] { return unif(rng); });
    plant.R = H * H.transpose() + 0.1 * Matrix::Identity(m, m);
    return plant;
}

}  // namespace

TEST_CASE("lifted matrices, scalar hand values") {
    PlantModel plant = scalar_plant(2.0, 1.0);
    LiftedMatrices l3 = lift(plant, 3);
    CHECK(l3.Aj(0, 0) == doctest::Approx(8.0).epsilon(1e-12));
    CHECK(l3.Bj(0, 0) == doctest::Approx(7.0).epsilon(1e-12));

    LiftedMatrices l2 = lift(plant, 2);
    CHECK(l2.Qj(0, 0) == doctest::Approx(5.0).epsilon(1e-12));
    CHECK(l2.Sj(0, 0) == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(l2.Rj(0, 0) == doctest::Approx(3.0).epsilon(1e-12));

    // inverse blocks of [[5,2],[2,3]]: det 11
    CHECK(l2.Qt(0, 0) == doctest::Approx(3.0 / 11.0).epsilon(1e-12));
    CHECK(l2.St(0, 0) == doctest::Approx(-2.0 / 11.0).epsilon(1e-12));
    CHECK(l2.Rt(0, 0) == doctest::Approx(5.0 / 11.0).epsilon(1e-12));

    CHECK_THROWS_AS(lift(plant, 0), std::invalid_argument);
}

TEST_CASE("lifted semigroup property") {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 200; ++trial) {
        const int n = 1 + static_cast<int>(rng() % 4);
        const int m = 1 + static_cast<int>(rng() % 2);
        PlantModel plant = random_plant(rng, n, m);
        const int j1 = 1 + static_cast<int>(rng() % 4);
        const int j2 = 1 + static_cast<int>(rng() % 4);
        LiftedMatrices a = lift(plant, j1), b = lift(plant, j2);
        LiftedMatrices c = lift(plant, j1 + j2);
        CHECK((b.Aj * a.Aj - c.Aj).cwiseAbs().maxCoeff() <
              1e-9 * std::max(1.0, c.Aj.cwiseAbs().maxCoeff()));
        Matrix composed = b.Aj * a.Bj + b.Bj;
        CHECK((composed - c.Bj).cwiseAbs().maxCoeff() <
              1e-9 * std::max(1.0, c.Bj.cwiseAbs().maxCoeff()));
    }
}

TEST_CASE("stage cost, both channel outcomes") {
    PlantModel plant = scalar_plant(2.0, 1.0);
    OverallState xi;
    xi.x = Vector::Constant(1, 3.0);
    xi.w = Vector::Constant(1, 2.0);
    ControlPacket packet;
    packet.v = Vector::Constant(1, 1.0);
    packet.delta = 1;
    CHECK(stage_cost(xi, packet, 1, plant) == doctest::Approx(10.0));
    CHECK(stage_cost(xi, packet, 0, plant) == doctest::Approx(13.0));
}

TEST_CASE("overall-state transition over one interval") {
    PlantModel plant = scalar_plant(2.0, 1.0);
    LiftTable lifts(plant);
    TokenBucketSpec bucket{1, 3, 14};
    OverallState xi;
    xi.x = Vector::Constant(1, 3.0);
    xi.w = Vector::Constant(1, 1.0);
    xi.beta = 5;

    OverallState got = ncs_step(xi, Vector::Constant(1, 2.0), 2, 1, lifts, bucket);
    CHECK(got.x(0) == doctest::Approx(18.0));
    CHECK(got.w(0) == doctest::Approx(2.0));
    CHECK(got.beta == 4);

    OverallState lost = ncs_step(xi, Vector::Constant(1, 2.0), 2, 0, lifts, bucket);
    CHECK(lost.x(0) == doctest::Approx(15.0));
    CHECK(lost.w(0) == doctest::Approx(1.0));
    CHECK(lost.beta == 4);

    xi.beta = 14;
    OverallState capped = ncs_step(xi, Vector::Constant(1, 0.0), 5, 1, lifts, bucket);
    CHECK(capped.beta == 14);
}

TEST_CASE("interval cost, scalar hand value") {
    PlantModel plant = scalar_plant(2.0, 1.0);
    LiftTable lifts(plant);
    TokenBucketSpec bucket{1, 3, 14};
    OverallState xi;
    xi.x = Vector::Constant(1, 1.0);
    xi.w = Vector::Constant(1, 3.0);
    xi.beta = 5;
    ControlPacket packet;
    packet.v = Vector::Constant(1, 3.0);
    packet.delta = 2;
    CHECK(interval_cost(xi, packet, 1, lifts, bucket) == doctest::Approx(44.0));
    CHECK(interval_cost(xi, packet, 0, lifts, bucket) == doctest::Approx(44.0));
}

TEST_CASE("interval cost equals the explicit step sum") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> unif(-2.0, 2.0);
    for (int trial = 0; trial < 1000; ++trial) {
        const int n = 1 + static_cast<int>(rng() % 3);
        const int m = 1 + static_cast<int>(rng() % 2);
        PlantModel plant = random_plant(rng, n, m);
        LiftTable lifts(plant);
        TokenBucketSpec bucket{1, 1, 4};
        const int delta = 1 + static_cast<int>(rng() % 6);
        OverallState xi;
        xi.x = Vector::NullaryExpr(n, [&] { return unif(rng); });
        xi.w = Vector::NullaryExpr(m, [&] { return unif(rng); });
        xi.beta = 2;
        ControlPacket packet;
        packet.v = Vector::NullaryExpr(m, [&] { return unif(rng); });
        packet.delta = delta;
        const int sigma = static_cast<int>(rng() % 2);

        const Vector applied = sigma ? packet.v : xi.w;
        double sum = xi.x.dot(plant.Q * xi.x) + applied.dot(plant.R * applied);
        Vector x = xi.x;
        for (int j = 1; j < delta; ++j) {
            x = plant.A * x + plant.B * applied;
            sum += x.dot(plant.Q * x) + applied.dot(plant.R * applied);
        }

        const double closed = interval_cost(xi, packet, sigma, lifts, bucket);
        CHECK(std::abs(closed - sum) <= 1e-9 * std::max(1.0, std::abs(sum)));
    }
}

TEST_CASE("terminal rollout under the worst admissible word") {
    PlantModel plant = scalar_plant(0.5, 1.0);
    LiftTable lifts(plant);
    TokenBucketSpec bucket{1, 1, 4};
    TerminalIngredients terminal;
    terminal.Kf = Matrix::Zero(1, 1);
    terminal.Pf = Matrix::Identity(1, 1);
    terminal.M = 1;
    terminal.P = 2;

    OverallState xi;
    xi.x = Vector::Constant(1, 8.0);
    xi.w = Vector::Constant(1, 5.0);
    xi.beta = 2;

    OverallState out = terminal_rollout(xi, 2, terminal, lifts, bucket);
    CHECK(out.x(0) == doctest::Approx(2.0));
    CHECK(out.w(0) == doctest::Approx(0.0));
    CHECK(out.beta == 2);

    TokenBucketSpec slow{1, 2, 6};
    TerminalIngredients t2 = terminal;
    t2.M = 2;
    OverallState xi2;
    xi2.x = Vector::Constant(1, 8.0);
    xi2.w = Vector::Constant(1, 4.0);
    xi2.beta = 3;
    OverallState one = terminal_rollout(xi2, 1, t2, lifts, slow);
    CHECK(one.x(0) == doctest::Approx(2.0));
    CHECK(one.w(0) == doctest::Approx(0.0));
    CHECK(one.beta == 3);

    CHECK_THROWS_AS(terminal_rollout(xi, 0, terminal, lifts, bucket),
                    std::invalid_argument);
}
