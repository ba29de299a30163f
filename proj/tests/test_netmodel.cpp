#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "wsee/netmodel.hpp"

using namespace wsee;

namespace {

NetworkConfig desk_cfg(int m, int k, uint64_t seed) {
    return make_config(m, k, 8, 0.1, 0.1, 1.0, 1e-11, 3.5, 500.0, seed);
}

}  // namespace

TEST_SUITE("netmodel") {

TEST_CASE("fading gain has mean N when pathloss is flat") {
    // exponent 0 turns the log-distance factor into 1, leaving |h|^2
    NetworkConfig cfg = make_config(1, 10, 8, 1.0, 1.0, 1.0, 1.0, 0.0, 500.0, 0);
    double acc = 0.0;
    const int draws = 10000;
    for (int s = 0; s < draws; ++s) {
        cfg.rng_seed = s;
        const ChannelRealization chan = netmodel::generate_channels(cfg);
        for (int k = 0; k < cfg.users_per_bs; ++k) acc += chan.gains.at(0, k, 0);
    }
    const double mean = acc / (draws * cfg.users_per_bs);
    CHECK(mean == doctest::Approx(8.0).epsilon(0.0125));  // 8.0 +- 0.1
}

TEST_CASE("generation is deterministic per seed") {
    const NetworkConfig cfg = desk_cfg(3, 2, 77);
    const ChannelRealization a = netmodel::generate_channels(cfg);
    const ChannelRealization b = netmodel::generate_channels(cfg);
    REQUIRE(a.gains.size() == b.gains.size());
    for (size_t i = 0; i < a.gains.size(); ++i) CHECK(a.gains.flat()[i] == b.gains.flat()[i]);
}

TEST_CASE("per-cell direct gains are non-increasing") {
    for (uint64_t seed = 0; seed < 20; ++seed) {
        const NetworkConfig cfg = desk_cfg(3, 4, seed);
        const ChannelRealization chan = netmodel::generate_channels(cfg);
        for (int m = 0; m < cfg.num_bs; ++m)
            for (int k = 1; k < cfg.users_per_bs; ++k)
                CHECK(chan.gains.at(m, k, m) <= chan.gains.at(m, k - 1, m));
    }
}

TEST_CASE("gains strictly positive and finite") {
    const NetworkConfig cfg = desk_cfg(4, 4, 5);
    const ChannelRealization chan = netmodel::generate_channels(cfg);
    for (double g : chan.gains.flat()) {
        CHECK(g > 0.0);
        CHECK(std::isfinite(g));
    }
}

TEST_CASE("single link sinr") {
    NetworkConfig cfg = make_config(1, 1, 1, 1.0, 1.0, 1.0, 0.5, 3.5, 500.0, 0);
    const ChannelRealization chan = oracles::single_link(1.0);
    PowerAllocation rho;
    rho.rho = Grid(1, 1, 1.0);
    const Grid g = netmodel::sinr(chan, rho, cfg);
    CHECK(g.at(0, 0) == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("zero power gives zero sinr regardless of interference") {
    const NetworkConfig cfg = desk_cfg(2, 2, 3);
    const ChannelRealization chan = netmodel::generate_channels(cfg);
    Grid raw(2, 2, 0.4);
    raw.at(0, 1) = 0.0;
    const PowerAllocation rho = netmodel::project_feasible(raw, cfg);
    const Grid g = netmodel::sinr(chan, rho, cfg);
    CHECK(g.at(0, 1) == 0.0);
    CHECK(g.at(0, 0) > 0.0);
}

TEST_CASE("sinr matches an independently coded evaluation") {
    const NetworkConfig cfg = desk_cfg(2, 2, 11);
    const ChannelRealization chan = netmodel::generate_channels(cfg);
    Grid raw(2, 2);
    raw.at(0, 0) = 0.3;
    raw.at(0, 1) = 0.25;
    raw.at(1, 0) = 0.5;
    raw.at(1, 1) = 0.1;
    const PowerAllocation rho = netmodel::project_feasible(raw, cfg);
    const Grid g = netmodel::sinr(chan, rho, cfg);
    for (int m = 0; m < 2; ++m)
        for (int k = 0; k < 2; ++k)
            CHECK(g.at(m, k) ==
                  doctest::Approx(oracles::sinr_direct(chan, rho.rho, cfg, m, k)).epsilon(1e-12));
}

TEST_CASE("sic structure: first user sees no intra-cell terms") {
    const NetworkConfig cfg = desk_cfg(1, 3, 9);
    const ChannelRealization chan = netmodel::generate_channels(cfg);
    PowerAllocation rho = netmodel::uniform_allocation(cfg);
    const Grid g = netmodel::sinr(chan, rho, cfg);
    // k = 0: denominator is noise only
    const double expect =
        chan.gains.at(0, 0, 0) * rho.rho.at(0, 0) * cfg.p_max / cfg.noise_power;
    CHECK(g.at(0, 0) == doctest::Approx(expect).epsilon(1e-12));
    // k = K-1: raising any earlier user's power lowers it
    Grid raised = rho.rho;
    raised.at(0, 0) = std::min(1.0, raised.at(0, 0) * 1.5);
    const Grid g2 = netmodel::sinr(chan, netmodel::project_feasible(raised, cfg), cfg);
    CHECK(g2.at(0, 2) < g.at(0, 2));
}

TEST_CASE("interferer power never raises another link's sinr") {
    const NetworkConfig cfg = desk_cfg(3, 2, 21);
    const ChannelRealization chan = netmodel::generate_channels(cfg);
    PowerAllocation rho = netmodel::uniform_allocation(cfg);
    const Grid before = netmodel::sinr(chan, rho, cfg);
    Grid raised = rho.rho;
    raised.at(2, 0) = std::min(1.0, raised.at(2, 0) + 0.2);
    const Grid after = netmodel::sinr(chan, netmodel::project_feasible(raised, cfg), cfg);
    for (int m = 0; m < 2; ++m)
        for (int k = 0; k < 2; ++k) CHECK(after.at(m, k) <= before.at(m, k) + 1e-15);
}

TEST_CASE("rate values") {
    NetworkConfig cfg = make_config(1, 1, 1, 1.0, 1.0, 1.0, 1.0, 3.5, 500.0, 0);
    Grid g(1, 1, 1.0);
    CHECK(netmodel::rate(g, cfg).at(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
    g.at(0, 0) = 0.0;
    CHECK(netmodel::rate(g, cfg).at(0, 0) == 0.0);
    cfg.bandwidth = 250e3;
    g.at(0, 0) = 3.0;
    CHECK(netmodel::rate(g, cfg).at(0, 0) == doctest::Approx(500000.0).epsilon(1e-12));
}

TEST_CASE("energy efficiency values") {
    NetworkConfig cfg = make_config(1, 1, 1, 1.0, 1.0, 1.0, 1.0, 3.5, 500.0, 0);
    Grid r(1, 1, 1.0);
    PowerAllocation rho;
    rho.rho = Grid(1, 1, 0.0);
    CHECK(netmodel::energy_efficiency(r, rho, cfg).at(0, 0) == doctest::Approx(1.0));
    r.at(0, 0) = 0.0;
    CHECK(netmodel::energy_efficiency(r, rho, cfg).at(0, 0) == 0.0);
}

TEST_CASE("wsee composition and trivials") {
    // single link, integer numbers: B log2(3) / (P + p_c)
    NetworkConfig cfg = make_config(1, 1, 1, 1.0, 1.0, 1.0, 0.5, 3.5, 500.0, 0);
    const ChannelRealization chan = oracles::single_link(1.0);
    PowerAllocation rho;
    rho.rho = Grid(1, 1, 1.0);
    CHECK(netmodel::wsee(chan, rho, cfg) ==
          doctest::Approx(std::log2(3.0) / 2.0).epsilon(1e-12));

    NetworkConfig zero_w = desk_cfg(2, 2, 1);
    zero_w.weights = Grid(2, 2, 0.0);
    const ChannelRealization chan2 = netmodel::generate_channels(zero_w);
    CHECK(netmodel::wsee(chan2, netmodel::uniform_allocation(zero_w), zero_w) == 0.0);
}

TEST_CASE("wsee agrees with the direct oracle on a power grid") {
    const NetworkConfig cfg = desk_cfg(2, 2, 31);
    const ChannelRealization chan = netmodel::generate_channels(cfg);
    for (double a : {0.1, 0.3, 0.5}) {
        for (double b : {0.05, 0.2}) {
            Grid raw(2, 2, a);
            raw.at(1, 1) = b;
            const PowerAllocation rho = netmodel::project_feasible(raw, cfg);
            CHECK(netmodel::wsee(chan, rho, cfg) ==
                  doctest::Approx(oracles::wsee_direct(chan, rho.rho, cfg)).epsilon(1e-12));
        }
    }
}

TEST_CASE("wsee invariant under consistent BS relabeling") {
    NetworkConfig cfg = desk_cfg(3, 2, 47);
    cfg.weights.at(0, 0) = 2.0;
    cfg.weights.at(2, 1) = 0.5;
    const ChannelRealization chan = netmodel::generate_channels(cfg);
    Grid raw(3, 2);
    for (size_t i = 0; i < raw.size(); ++i) raw.flat()[i] = 0.05 + 0.07 * i;
    const PowerAllocation rho = netmodel::project_feasible(raw, cfg);
    const double base = netmodel::wsee(chan, rho, cfg);

    const int perm[3] = {2, 0, 1};
    NetworkConfig cfg2 = cfg;
    ChannelRealization chan2;
    chan2.gains = GainTensor(3, 2);
    PowerAllocation rho2;
    rho2.rho = Grid(3, 2);
    for (int m = 0; m < 3; ++m)
        for (int k = 0; k < 2; ++k) {
            cfg2.weights.at(m, k) = cfg.weights.at(perm[m], k);
            rho2.rho.at(m, k) = rho.rho.at(perm[m], k);
            for (int n = 0; n < 3; ++n)
                chan2.gains.at(m, k, n) = chan.gains.at(perm[m], k, perm[n]);
        }
    CHECK(netmodel::wsee(chan2, rho2, cfg2) == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("project_feasible") {
    const NetworkConfig cfg = make_config(1, 2, 1, 1.0, 1.0, 1.0, 1.0, 3.5, 500.0, 0);

    Grid ok(1, 2);
    ok.at(0, 0) = 0.3;
    ok.at(0, 1) = 0.4;
    const PowerAllocation unchanged = netmodel::project_feasible(ok, cfg);
    CHECK(unchanged.rho.at(0, 0) == 0.3);
    CHECK(unchanged.rho.at(0, 1) == 0.4);

    Grid over(1, 2, 0.8);
    const PowerAllocation rescaled = netmodel::project_feasible(over, cfg);
    CHECK(rescaled.rho.at(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(rescaled.rho.at(0, 1) == doctest::Approx(0.5).epsilon(1e-12));

    Grid neg(1, 2);
    neg.at(0, 0) = -0.2;
    neg.at(0, 1) = 0.5;
    const PowerAllocation clamped = netmodel::project_feasible(neg, cfg);
    CHECK(clamped.rho.at(0, 0) == 0.0);
    CHECK(clamped.rho.at(0, 1) == 0.5);

    Grid bad(1, 2, std::nan(""));
    CHECK_THROWS_AS(netmodel::project_feasible(bad, cfg), InvalidInput);
}

TEST_CASE("project_feasible is idempotent and bounded") {
    const NetworkConfig cfg = desk_cfg(3, 3, 13);
    Grid raw(3, 3);
    for (size_t i = 0; i < raw.size(); ++i) raw.flat()[i] = -0.5 + 0.31 * i;
    const PowerAllocation once = netmodel::project_feasible(raw, cfg);
    const PowerAllocation twice = netmodel::project_feasible(once.rho, cfg);
    for (size_t i = 0; i < raw.size(); ++i) {
        CHECK(once.rho.flat()[i] == twice.rho.flat()[i]);
        CHECK(once.rho.flat()[i] >= 0.0);
        CHECK(once.rho.flat()[i] <= 1.0);
    }
    for (int m = 0; m < 3; ++m) {
        double row = 0.0;
        for (int k = 0; k < 3; ++k) row += once.rho.at(m, k);
        CHECK(row <= 1.0 + 1e-12);
    }
}

TEST_CASE("shape errors") {
    const NetworkConfig cfg = desk_cfg(2, 2, 1);
    const ChannelRealization chan = netmodel::generate_channels(cfg);
    PowerAllocation wrong;
    wrong.rho = Grid(3, 2, 0.1);
    CHECK_THROWS_AS(netmodel::sinr(chan, wrong, cfg), ShapeError);
}

}  // TEST_SUITE
