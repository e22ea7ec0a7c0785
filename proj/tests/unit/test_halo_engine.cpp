#include "halo/engine/halo_swap.hpp"
#include "halo/grid/timesteps.hpp"

#include <doctest.h>

#include <algorithm>
#include <cstring>
#include <map>
#include <set>

using namespace halo;
using namespace halo::engine;
using sim::Schedule;
using sim::TransportConfig;

namespace {

TransportConfig transport(int n, std::uint64_t seed = 1, Schedule s = Schedule::fifo)
{
    TransportConfig c;
    c.n_ranks = n;
    c.seed = seed;
    c.schedule = s;
    c.latency.jitter_fraction = 0.5;
    return c;
}

int idx(Direction d) { return static_cast<int>(d); }

// Per-rank snapshot of a context after init.
struct Snapshot {
    NeighborTable table;
    std::array<std::size_t, n_directions> region{}, incoming{}, remote{};
    std::size_t buffer = 0;
};

std::vector<Snapshot> snapshots(const DecompositionPlan& plan, int fields, Backend backend = Backend::p2p)
{
    std::vector<Snapshot> out(static_cast<std::size_t>(plan.n_ranks()));
    sim::spawn_world(transport(plan.n_ranks()), [&](sim::Comm& c) {
        HaloOptions o;
        o.backend = backend;
        auto ctx = init_halo_communication(c, plan, describe_fields(plan, c.rank(), fields), o);
        out[static_cast<std::size_t>(c.rank())] = {ctx.neighbors(), ctx.region_sizes(), ctx.incoming_offsets(), ctx.remote_offsets(),
                                                   ctx.buffer_size()};
        ctx.finalise();
    });
    return out;
}

grid::TimestepConfig steps(Backend b, int fields, int timesteps, rma::MemoryModel m = rma::MemoryModel::separate)
{
    grid::TimestepConfig t;
    t.fields = fields;
    t.timesteps = timesteps;
    t.halo.backend = b;
    t.halo.rma.memory_model = m;
    return t;
}

const std::vector<Backend> backends{Backend::p2p, Backend::fence, Backend::pscw, Backend::passive};

} // namespace

TEST_CASE("plan_decomposition splits close to square with px <= py")
{
    auto p = plan_decomposition({32, 32, 256}, 4);
    CHECK(p.px == 2);
    CHECK(p.py == 2);
    for (RankId r = 0; r < 4; ++r) CHECK(p.local_dims(r) == Dims{16, 16, 256});

    auto strong = plan_decomposition({2048, 2048, 128}, 2048);
    CHECK(strong.px == 32);
    CHECK(strong.py == 64);
    CHECK(strong.local_dims(0).points() == 262144);
    CHECK(strong.local_dims(2047).points() == 262144);

    auto six = plan_decomposition({12, 12, 4}, 6);
    CHECK(six.px == 2);
    CHECK(six.py == 3);
}

TEST_CASE("remainders go to low-index columns and rows")
{
    auto p = plan_decomposition({11, 7, 3}, 4, false);
    CHECK(p.local_dims(0) == Dims{6, 4, 3});
    CHECK(p.local_dims(1) == Dims{5, 4, 3});
    CHECK(p.local_dims(2) == Dims{6, 3, 3});
    CHECK(p.local_origin(3) == Dims{6, 4, 0});
}

TEST_CASE("local dims below the stencil depth are rejected")
{
    CHECK_THROWS_AS(plan_decomposition({3, 16, 8}, 2, 1, true, 2), DecompositionError);
    CHECK_THROWS_AS(plan_decomposition({4, 4, 8}, 4, 1, true, 2), DecompositionError);
    CHECK_NOTHROW(plan_decomposition({4, 4, 8}, 2, 2, true, 2));
}

TEST_CASE("single periodic rank is its own neighbour eight times")
{
    auto p = plan_decomposition({16, 16, 256}, 1);
    auto t = neighbor_table(p, 0);
    for (const auto& e : t) CHECK(e.rank == 0);
}

TEST_CASE("neighbour tables on 3x3 grids")
{
    auto periodic = plan_decomposition({9, 9, 2}, 9, true);
    auto t = neighbor_table(periodic, 4);
    std::set<RankId> seen;
    for (const auto& e : t) seen.insert(e.rank);
    CHECK(seen == std::set<RankId>{0, 1, 2, 3, 5, 6, 7, 8});
    CHECK(t[idx(Direction::xm)].rank == 3);
    CHECK(t[idx(Direction::xpyp)].rank == 8);
    CHECK(t[idx(Direction::xmym)].kind == RegionKind::corner);
    CHECK(t[idx(Direction::yp)].kind == RegionKind::face_y);

    auto open = plan_decomposition({9, 9, 2}, 9, false);
    auto corner = neighbor_table(open, 0);
    CHECK(neighbor_count(corner) == 3);
    CHECK(corner[idx(Direction::xp)].rank == 1);
    CHECK(corner[idx(Direction::yp)].rank == 3);
    CHECK(corner[idx(Direction::xpyp)].rank == 4);
    CHECK(neighbor_count(neighbor_table(open, 4)) == 8);
    CHECK(neighbor_count(neighbor_table(open, 1)) == 5);
}

TEST_CASE("two periodic ranks wrap onto each other")
{
    // Side by side in x: both x neighbours and every corner resolve to the other rank.
    auto sideways = plan_decomposition({8, 4, 2}, 2, 1, true, 2);
    auto t = neighbor_table(sideways, 0);
    CHECK(t[idx(Direction::xm)].rank == 1);
    CHECK(t[idx(Direction::xp)].rank == 1);
    CHECK(t[idx(Direction::ym)].rank == 0);
    CHECK(t[idx(Direction::yp)].rank == 0);
    for (auto d : {Direction::xmym, Direction::xmyp, Direction::xpym, Direction::xpyp}) CHECK(t[idx(d)].rank == 1);

    // The automatic plan stacks two ranks along y.
    auto stacked = plan_decomposition({4, 8, 2}, 2);
    CHECK(stacked.px == 1);
    auto s = neighbor_table(stacked, 1);
    CHECK(s[idx(Direction::ym)].rank == 0);
    CHECK(s[idx(Direction::yp)].rank == 0);
    CHECK(s[idx(Direction::xm)].rank == 1);
}

TEST_CASE("halo region sizes under both accountings")
{
    auto p = plan_decomposition({16, 16, 256}, 1);
    auto fields = describe_fields(p, 0, 1);
    auto geo = halo_region_sizes(fields, p, 0, Accounting::geometric);
    auto thin = halo_region_sizes(fields, p, 0, Accounting::thin_corners);
    for (auto d : {Direction::xm, Direction::xp, Direction::ym, Direction::yp}) {
        CHECK(geo[idx(d)] == 65536);
        CHECK(thin[idx(d)] == 65536);
    }
    for (auto d : {Direction::xmym, Direction::xmyp, Direction::xpym, Direction::xpyp}) {
        CHECK(geo[idx(d)] == 8192);
        CHECK(thin[idx(d)] == 4096);
    }
    auto three = halo_region_sizes(describe_fields(p, 0, 3), p, 0);
    CHECK(three[idx(Direction::xm)] == 3 * 65536);

    auto open = plan_decomposition({32, 32, 256}, 4, false);
    auto edge = halo_region_sizes(describe_fields(open, 0, 1), open, 0);
    CHECK(edge[idx(Direction::xm)] == 0);
    CHECK(edge[idx(Direction::xpyp)] == 8192);
}

TEST_CASE("init lays out incoming regions as prefix sums")
{
    auto p = plan_decomposition({32, 32, 256}, 4);
    auto snaps = snapshots(p, 1, Backend::fence);
    for (const auto& s : snaps) {
        CHECK(s.buffer == 4 * 65536 + 4 * 8192);
        const std::array<std::size_t, 8> expect{0, 65536, 131072, 196608, 262144, 270336, 278528, 286720};
        CHECK(s.incoming == expect);
    }
}

TEST_CASE("offset exchange sends each neighbour its own location")
{
    // Rank 0 of a non-periodic 2x2 grid at depth 1 receives 96 bytes from
    // rank 1 (x+), 64 from rank 2 (y+) and 32 from rank 3 (corner).
    auto p = plan_decomposition({4, 6, 4}, 2, 2, false, 1);
    auto snaps = snapshots(p, 1);
    CHECK(snaps[0].region[idx(Direction::xp)] == 96);
    CHECK(snaps[0].region[idx(Direction::yp)] == 64);
    CHECK(snaps[0].region[idx(Direction::xpyp)] == 32);
    CHECK(snaps[0].incoming[idx(Direction::xp)] == 0);
    CHECK(snaps[0].incoming[idx(Direction::yp)] == 96);
    CHECK(snaps[0].incoming[idx(Direction::xpyp)] == 160);
    CHECK(snaps[1].remote[idx(Direction::xm)] == 0);
    CHECK(snaps[2].remote[idx(Direction::ym)] == 96);
    CHECK(snaps[3].remote[idx(Direction::xmym)] == 160);
}

TEST_CASE("offset duality and partition hold for every grid up to 5x5")
{
    for (int px = 1; px <= 5; ++px) {
        for (int py = 1; py <= 5; ++py) {
            for (bool periodic : {true, false}) {
                CAPTURE(px);
                CAPTURE(py);
                CAPTURE(periodic);
                auto p = plan_decomposition({3 * px + 1, 2 * py + 1, 2}, px, py, periodic, 1);
                auto snaps = snapshots(p, 2);
                for (RankId a = 0; a < p.n_ranks(); ++a) {
                    const auto& s = snaps[static_cast<std::size_t>(a)];
                    std::size_t covered = 0;
                    for (auto d : all_directions) {
                        const auto b = s.table[idx(d)].rank;
                        if (b == sim::no_peer) {
                            CHECK(s.region[idx(d)] == 0);
                            continue;
                        }
                        const auto& t = snaps[static_cast<std::size_t>(b)];
                        CHECK(s.remote[idx(d)] == t.incoming[idx(opposite(d))]);
                        CHECK(s.region[idx(d)] == t.region[idx(opposite(d))]);
                        // Regions are laid out back to back in direction order.
                        CHECK(s.incoming[idx(d)] == covered);
                        covered += s.region[idx(d)];
                    }
                    CHECK(covered == s.buffer);
                }
            }
        }
    }
}

TEST_CASE("every RMA backend has an epoch open between swaps")
{
    for (auto b : {Backend::fence, Backend::pscw, Backend::passive}) {
        std::vector<int> open_after_init(4), open_after_complete(4), open_after_finalise(4, 1);
        auto p = plan_decomposition({8, 8, 2}, 4);
        sim::spawn_world(transport(4, 2, Schedule::adversarial), [&](sim::Comm& c) {
            HaloOptions o;
            o.backend = b;
            auto ctx = init_halo_communication(c, p, describe_fields(p, c.rank(), 1), o);
            const auto r = static_cast<std::size_t>(c.rank());
            open_after_init[r] = ctx.epoch_open();
            ctx.initiate([](Direction, int, std::span<std::byte>) {});
            ctx.complete([](Direction, int, const ReceiveView&) {});
            open_after_complete[r] = ctx.epoch_open();
            ctx.finalise();
            open_after_finalise[r] = ctx.epoch_open();
        });
        CHECK(open_after_init == std::vector<int>(4, 1));
        CHECK(open_after_complete == std::vector<int>(4, 1));
        CHECK(open_after_finalise == std::vector<int>(4, 0));
    }
}

TEST_CASE("puts land in the neighbour's buffer at the exchanged offset")
{
    auto p = plan_decomposition({8, 4, 2}, 2, 1, true, 1);
    std::vector<int> ok(2, 0);
    sim::spawn_world(transport(2, 3, Schedule::adversarial), [&](sim::Comm& c) {
        HaloOptions o;
        o.backend = Backend::fence;
        auto ctx = init_halo_communication(c, p, describe_fields(p, c.rank(), 1), o);
        auto fill = [](RankId r, Direction d) { return static_cast<std::byte>(r * 16 + idx(d)); };
        ctx.initiate([&](Direction d, int, std::span<std::byte> dest) { std::fill(dest.begin(), dest.end(), fill(c.rank(), d)); });
        ctx.complete([](Direction, int, const ReceiveView&) {});
        bool good = true;
        for (auto d : all_directions) {
            const auto from = ctx.neighbors()[idx(d)].rank;
            for (const auto& v : ctx.subbuffer_views(d))
                for (auto b : v.bytes()) good = good && b == fill(from, opposite(d));
            auto raw = ctx.window()->private_bytes().subspan(ctx.incoming_offsets()[idx(d)], ctx.region_sizes()[idx(d)]);
            for (auto b : raw) good = good && b == fill(from, opposite(d));
        }
        ok[static_cast<std::size_t>(c.rank())] = good;
        ctx.finalise();
    });
    CHECK(ok == std::vector<int>{1, 1});
}

TEST_CASE("a single periodic rank sends eight self-puts per swap")
{
    auto p = plan_decomposition({6, 6, 3}, 1);
    for (auto b : {Backend::fence, Backend::pscw, Backend::passive}) {
        auto run = grid::run_world(transport(1), p, steps(b, 2, 3));
        CHECK(run.mismatches() == 0);
        std::size_t puts = 0;
        for (const auto& r : run.world.log.records())
            if (r.kind == "put_send") {
                CHECK(r.peer == 0);
                ++puts;
            }
        CHECK(puts == 8 * 3);
    }
}

TEST_CASE("all backends and memory models produce identical fields")
{
    auto p = plan_decomposition({12, 9, 3}, 9, true);
    std::set<std::uint64_t> digests;
    for (auto model : {rma::MemoryModel::separate, rma::MemoryModel::unified}) {
        for (auto b : backends) {
            auto run = grid::run_world(transport(9, 5, Schedule::adversarial), p, steps(b, 3, 3, model));
            CHECK(run.mismatches() == 0);
            CHECK(run.violations.empty());
            digests.insert(run.field_digest());
        }
    }
    CHECK(digests.size() == 1);
}

TEST_CASE("passive swaps under the separate model need win_sync")
{
    auto p = plan_decomposition({8, 8, 2}, 4);
    std::size_t flagged = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        auto cfg = steps(Backend::passive, 1, 3);
        auto clean = grid::run_world(transport(4, seed, Schedule::adversarial), p, cfg);
        CHECK(clean.violations.empty());
        cfg.halo.suppress_win_sync = true;
        cfg.abort_on_mismatch = false;
        auto bad = grid::run_world(transport(4, seed, Schedule::adversarial), p, cfg);
        for (const auto& v : bad.violations) CHECK(v.missing_sync == "win_sync");
        flagged += bad.violations.empty() ? 0 : 1;
        cfg.halo.rma.memory_model = rma::MemoryModel::unified;
        CHECK(grid::run_world(transport(4, seed, Schedule::adversarial), p, cfg).violations.empty());
    }
    CHECK(flagged > 0);
}

TEST_CASE("init then finalise with no swaps is clean")
{
    auto p = plan_decomposition({8, 8, 2}, 4);
    for (auto b : backends) {
        auto run = grid::run_world(transport(4, 1, Schedule::adversarial), p, steps(b, 1, 0));
        CHECK(run.violations.empty());
        for (const auto& r : run.ranks) CHECK(r.steps.empty());
    }
}

TEST_CASE("epoch audit: N swaps open N+1 epochs and one stays open between swaps")
{
    auto p = plan_decomposition({8, 8, 2}, 4);
    constexpr int n = 100;
    for (auto b : {Backend::fence, Backend::pscw}) {
        auto run = grid::run_world(transport(4, 9, Schedule::seeded_random), p, steps(b, 1, n));
        std::map<RankId, int> opens, closes;
        for (const auto& r : run.world.log.records()) {
            if (r.kind == "epoch_open") ++opens[r.rank];
            if (r.kind == "epoch_close") ++closes[r.rank];
            if (r.kind == "halo_initiate" || r.kind == "halo_complete") CHECK(opens[r.rank] == closes[r.rank] + 1);
        }
        for (RankId r = 0; r < 4; ++r) {
            CHECK(opens[r] == n + 1);
            CHECK(closes[r] == n + 1);
        }
    }
    // The adopted passive variant holds a single epoch across every swap.
    auto run = grid::run_world(transport(4, 9), p, steps(Backend::passive, 1, n));
    std::map<RankId, int> opens;
    for (const auto& r : run.world.log.records())
        if (r.kind == "epoch_open") ++opens[r.rank];
    for (RankId r = 0; r < 4; ++r) CHECK(opens[r] == 1);
}

TEST_CASE("misuse of the swap procedures is a hard error")
{
    auto p = plan_decomposition({8, 8, 2}, 1);
    auto expect_failure = [&](const std::function<void(HaloSwapContext&)>& misuse) {
        std::string what;
        try {
            sim::spawn_world(transport(1), [&](sim::Comm& c) {
                auto ctx = init_halo_communication(c, p, describe_fields(p, 0, 1));
                misuse(ctx);
            });
        } catch (const sim::RankFailure& e) {
            what = e.what();
        }
        return what;
    };
    const Packer pack = [](Direction, int, std::span<std::byte>) {};
    const Unpacker unpack = [](Direction, int, const ReceiveView&) {};
    CHECK(expect_failure([&](HaloSwapContext& c) {
              c.finalise();
              c.initiate(pack);
          }).find("finalised") != std::string::npos);
    CHECK(expect_failure([&](HaloSwapContext& c) { c.complete(unpack); }).find("without initiate") != std::string::npos);
    CHECK(expect_failure([&](HaloSwapContext& c) {
              c.initiate(pack);
              c.initiate(pack);
          }).find("twice") != std::string::npos);
    CHECK(expect_failure([&](HaloSwapContext& c) {
              c.initiate(pack);
              c.finalise();
          }).find("in flight") != std::string::npos);
}

TEST_CASE("passive backend is refused when locks are disabled")
{
    auto p = plan_decomposition({8, 8, 2}, 1);
    CHECK_THROWS_AS(sim::spawn_world(transport(1), [&](sim::Comm& c) {
                        HaloOptions o;
                        o.backend = Backend::passive;
                        o.rma.locks_enabled = false;
                        auto ctx = init_halo_communication(c, p, describe_fields(p, 0, 1), o);
                    }),
                    sim::RankFailure);
}

TEST_CASE("inconsistent field lists across ranks are detected at init")
{
    auto p = plan_decomposition({8, 8, 2}, 2);
    std::string what;
    try {
        sim::spawn_world(transport(2), [&](sim::Comm& c) {
            auto ctx = init_halo_communication(c, p, describe_fields(p, c.rank(), c.rank() == 0 ? 2 : 1));
        });
    } catch (const sim::RankFailure& e) {
        what = e.what();
    }
    CHECK(what.find("fields") != std::string::npos);
}

TEST_CASE("subbuffer views alias the window without copying")
{
    auto p = plan_decomposition({8, 8, 4}, 1);
    std::vector<std::size_t> offsets, sizes;
    std::size_t region = 0, start = 0;
    bool aliased = false, same_data = false;
    sim::spawn_world(transport(1), [&](sim::Comm& c) {
        auto ctx = init_halo_communication(c, p, describe_fields(p, 0, 3));
        auto views = ctx.subbuffer_views(Direction::yp);
        for (const auto& v : views) {
            offsets.push_back(v.offset());
            sizes.push_back(v.size());
        }
        region = ctx.region_sizes()[idx(Direction::yp)];
        start = ctx.incoming_offsets()[idx(Direction::yp)];
        auto buf = ctx.window()->private_bytes();
        same_data = views[1].bytes().data() == buf.data() + views[1].offset();
        buf[views[1].offset() + 5] = std::byte{0x5a};
        aliased = views[1].bytes()[5] == std::byte{0x5a};
        ctx.finalise();
    });
    REQUIRE(offsets.size() == 3);
    CHECK(offsets[0] == start);
    CHECK(offsets[1] == offsets[0] + sizes[0]);
    CHECK(offsets[2] == offsets[1] + sizes[1]);
    CHECK(sizes[0] + sizes[1] + sizes[2] == region);
    CHECK(same_data);
    CHECK(aliased);
}

TEST_CASE("single-field view covers the whole neighbour region")
{
    auto p = plan_decomposition({8, 8, 4}, 1);
    std::size_t off = 1, len = 0, want_off = 0, want_len = 1;
    sim::spawn_world(transport(1), [&](sim::Comm& c) {
        auto ctx = init_halo_communication(c, p, describe_fields(p, 0, 1));
        auto v = ctx.subbuffer_views(Direction::xpym).at(0);
        off = v.offset();
        len = v.size();
        want_off = ctx.incoming_offsets()[idx(Direction::xpym)];
        want_len = ctx.region_sizes()[idx(Direction::xpym)];
        ctx.finalise();
    });
    CHECK(off == want_off);
    CHECK(len == want_len);
}

TEST_CASE("views are bounds-checked and expire at the next initiate")
{
    auto p = plan_decomposition({8, 8, 2}, 1);
    bool out_of_range = false, expired = false;
    sim::spawn_world(transport(1), [&](sim::Comm& c) {
        auto ctx = init_halo_communication(c, p, describe_fields(p, 0, 1));
        std::optional<ReceiveView> kept;
        ctx.initiate([](Direction, int, std::span<std::byte>) {});
        ctx.complete([&](Direction d, int, const ReceiveView& v) {
            if (d != Direction::xm) return;
            kept = v;
            try {
                (void)v.read(v.size() - 4, 8);
            } catch (const std::out_of_range&) {
                out_of_range = true;
            }
        });
        ctx.initiate([](Direction, int, std::span<std::byte>) {});
        try {
            (void)kept->bytes();
        } catch (const HaloError&) {
            expired = true;
        }
        ctx.complete([](Direction, int, const ReceiveView&) {});
        ctx.finalise();
    });
    CHECK(out_of_range);
    CHECK(expired);
}

TEST_CASE("zero-copy unpack allocates nothing while copy-out allocates per neighbour")
{
    auto p = plan_decomposition({8, 8, 2}, 4);
    for (auto b : {Backend::fence, Backend::pscw, Backend::passive}) {
        auto cfg = steps(b, 1, 5);
        auto zero = grid::run_world(transport(4), p, cfg);
        for (const auto& r : zero.ranks) CHECK(r.allocations == 0);
        cfg.halo.unpack_path = UnpackPath::copy_out;
        auto copied = grid::run_world(transport(4), p, cfg);
        CHECK(copied.mismatches() == 0);
        for (const auto& r : copied.ranks) CHECK(r.allocations >= 8 * 5);
    }
}

TEST_CASE("put containment: every put matches a neighbour region")
{
    auto p = plan_decomposition({12, 9, 3}, 9, false);
    auto snaps = snapshots(p, 2);
    auto run = grid::run_world(transport(9, 4, Schedule::adversarial), p, steps(Backend::pscw, 2, 2));
    std::size_t puts = 0;
    for (const auto& r : run.world.log.records()) {
        if (r.kind != "put_send") continue;
        ++puts;
        const auto& s = snaps[static_cast<std::size_t>(r.rank)];
        bool match = false;
        for (auto d : all_directions) {
            if (s.table[idx(d)].rank != r.peer) continue;
            const auto& t = snaps[static_cast<std::size_t>(r.peer)];
            const auto lo = s.remote[idx(d)], hi = lo + r.bytes;
            const auto slot = idx(opposite(d));
            if (r.bytes == s.region[idx(d)] && lo == t.incoming[slot] && hi <= t.incoming[slot] + t.region[slot]) match = true;
        }
        CHECK(match);
    }
    CHECK(puts > 0);
}

TEST_CASE("passive ordering: flush, notify, delivery and win_sync precede every unpack")
{
    auto p = plan_decomposition({9, 9, 2}, 9);
    auto run = grid::run_world(transport(9, 6, Schedule::adversarial), p, steps(Backend::passive, 1, 4));
    REQUIRE(run.violations.empty());
    const auto& log = run.world.log.records();
    // k-th occurrence lookups keyed by (rank, peer, direction).
    std::map<std::tuple<RankId, RankId, std::uint64_t>, std::vector<std::size_t>> sends, recvs, unpacks;
    std::map<RankId, std::vector<std::size_t>> flushes, syncs;
    for (std::size_t i = 0; i < log.size(); ++i) {
        const auto& r = log[i];
        if (r.kind == "notify_send") sends[{r.peer, r.rank, r.bytes}].push_back(i);
        if (r.kind == "notify_recv") recvs[{r.rank, r.peer, r.bytes}].push_back(i);
        if (r.kind == "unpack") unpacks[{r.rank, r.peer, r.bytes}].push_back(i);
        if (r.kind == "flush_done") flushes[r.rank].push_back(i);
        if (r.kind == "win_sync") syncs[r.rank].push_back(i);
    }
    std::size_t checked = 0;
    for (const auto& [key, us] : unpacks) {
        const auto [rank, peer, dir] = key;
        for (std::size_t k = 0; k < us.size(); ++k) {
            const auto recv = recvs[key].at(k);
            const auto send = sends[key].at(k);
            const auto flush = flushes[peer].at(k);
            CHECK(flush < send);
            CHECK(send < recv);
            CHECK(recv < us[k]);
            const auto& ss = syncs[rank];
            CHECK(std::any_of(ss.begin(), ss.end(), [&](std::size_t s) { return recv < s && s < us[k]; }));
            ++checked;
        }
    }
    CHECK(checked == 9 * 8 * 4);
}

TEST_CASE("get-driven fence swaps race only when noprecede is honoured")
{
    auto p = plan_decomposition({8, 8, 2}, 4);
    std::size_t flagged = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        auto cfg = steps(Backend::fence, 1, 3);
        cfg.halo.driver = Driver::get;
        cfg.imbalance = grid::Imbalance::parse("uniform:0:20us");
        auto strict = grid::run_world(transport(4, seed, Schedule::adversarial), p, cfg);
        CHECK(strict.violations.empty());
        cfg.halo.rma.honor_assertions = true;
        cfg.abort_on_mismatch = false;
        auto relaxed = grid::run_world(transport(4, seed, Schedule::adversarial), p, cfg);
        for (const auto& v : relaxed.violations) CHECK(v.missing_sync == "target_sync");
        flagged += relaxed.violations.empty() ? 0 : 1;

        cfg.halo.driver = Driver::put;
        cfg.halo.epoch_shift = false;
        cfg.abort_on_mismatch = true;
        CHECK(grid::run_world(transport(4, seed, Schedule::adversarial), p, cfg).violations.empty());
    }
    CHECK(flagged > 0);
}

TEST_CASE("epoch shifting removes blocking from initiate")
{
    auto p = plan_decomposition({8, 8, 2}, 4);
    auto mean_initiate = [&](bool shift) {
        auto cfg = steps(Backend::fence, 1, 10);
        cfg.halo.epoch_shift = shift;
        cfg.imbalance = grid::Imbalance::parse("uniform:0:1ms");
        auto run = grid::run_world(transport(4, 3), p, cfg);
        double sum = 0;
        for (const auto& r : run.ranks)
            for (const auto& s : r.steps) sum += static_cast<double>(s.initiate_block);
        return sum / 40.0;
    };
    const auto shifted = mean_initiate(true);
    const auto naive = mean_initiate(false);
    CHECK(shifted == 0.0);
    CHECK(naive > 0.0);
}

TEST_CASE("debug dump lists neighbours and both offset tables")
{
    auto p = plan_decomposition({8, 8, 2}, 4);
    std::string dump;
    sim::spawn_world(transport(4), [&](sim::Comm& c) {
        auto ctx = init_halo_communication(c, p, describe_fields(p, c.rank(), 1));
        if (c.rank() == 0) dump = ctx.debug_dump();
        ctx.finalise();
    });
    CHECK(dump.find("incoming_offset remote_offset") != std::string::npos);
    CHECK(dump.find("x+y+ 3 corner 64") != std::string::npos);
}
