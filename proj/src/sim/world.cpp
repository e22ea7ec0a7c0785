#include "halo/sim/world.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <condition_variable>
#include <deque>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>
#include <tuple>

namespace halo::sim {

std::string_view to_string(Schedule s)
{
    switch (s) {
    case Schedule::fifo: return "fifo";
    case Schedule::seeded_random: return "random";
    case Schedule::adversarial: return "adversarial";
    }
    return "?";
}

Schedule parse_schedule(std::string_view s)
{
    if (s == "fifo") return Schedule::fifo;
    if (s == "random" || s == "seeded_random") return Schedule::seeded_random;
    if (s == "adversarial") return Schedule::adversarial;
    throw std::invalid_argument("unknown schedule: " + std::string(s));
}

void TransportConfig::validate() const
{
    if (n_ranks < 1) throw std::invalid_argument("n_ranks must be >= 1");
    if (latency.jitter_fraction < 0.0 || latency.jitter_fraction >= 1.0)
        throw std::invalid_argument("jitter_fraction must be in [0,1)");
    if (latency.base_latency < 0 || latency.per_byte < 0.0) throw std::invalid_argument("negative latency");
    if (adversarial_spread < 0 || poll_cost < 0) throw std::invalid_argument("negative delay parameter");
}

namespace detail {

struct RequestState {
    RequestKind kind = RequestKind::send;
    RankId owner = 0;
    bool complete = false;
    bool consumed = false;
    RankId src_filter = any_source;
    int tag = 0;
    RankId source = no_peer;
    std::vector<std::byte> payload;
};

namespace {

struct Aborted {};

struct EventKey {
    SimTime time;
    int phase; // 0 delivery, 1 rank wake
    RankId rank;
    std::uint64_t seq;
    bool operator<(const EventKey& o) const
    {
        return std::tie(time, phase, rank, seq) < std::tie(o.time, o.phase, o.rank, o.seq);
    }
};

struct BarrierState {
    std::pair<std::uint64_t, std::uint64_t> key{};
    bool entered = false;
    std::vector<RankId> group;
    std::size_t index = 0;
    unsigned rounds = 0;
    unsigned round = 0;
    std::uint64_t received = 0;
    std::shared_ptr<RequestState> request;
};

enum class Phase { ready, running, blocked, finished };

struct RankState {
    Phase phase = Phase::ready;
    SimTime clock = 0;
    std::uint64_t log_seq = 0;
    std::function<bool()> blocked_on;
    std::string blocked_what;
    std::deque<std::shared_ptr<RequestState>> posted;
    std::deque<Message> unexpected;
    std::map<std::uint32_t, ServiceHandler> services;
    std::map<std::uint32_t, std::deque<Message>> unclaimed;
    std::map<std::pair<std::uint64_t, std::uint64_t>, BarrierState> barriers;
    std::map<std::uint64_t, std::uint64_t> barrier_instances;
    MessageCounters counters;
    std::exception_ptr error;
    std::condition_variable cv;
};

} // namespace

class World {
public:
    World(const TransportConfig& cfg)
        : m_cfg(cfg), m_rng(cfg.seed), m_ranks(cfg.n_ranks),
          m_last_delivery(static_cast<std::size_t>(cfg.n_ranks) * cfg.n_ranks, 0),
          m_services(std::make_shared<SharedServices>())
    {
        for (int r = 0; r < cfg.n_ranks; ++r) m_comms.push_back(Comm(*this, r));
    }

    WorldResult run(const std::function<void(Comm&)>& program);

    // --- rank-side entry points (caller holds the baton) ---
    RankState& rank_state(RankId r) { return m_ranks[static_cast<std::size_t>(r)]; }
    const TransportConfig& config() const { return m_cfg; }
    SharedServices& services() { return *m_services; }

    void sync_point(RankId r);
    void block_until(RankId r, const std::function<bool()>& ready, std::string_view what);
    void transmit(Message m, SimTime now);
    std::uint64_t record(RankId r, std::string_view kind, RankId peer, std::uint64_t bytes, SimTime t);
    void register_service(RankId r, std::uint32_t id, ServiceHandler h);
    void check_rank(RankId r) const
    {
        if (r < 0 || r >= m_cfg.n_ranks) throw std::out_of_range("rank " + std::to_string(r) + " out of range");
    }

    Request make_request(RankId owner, RequestKind kind)
    {
        auto s = std::make_shared<RequestState>();
        s->owner = owner;
        s->kind = kind;
        return Request(std::move(s));
    }
    static RequestState& state_of(Request& r) { return *r.m_state; }
    static std::shared_ptr<RequestState> share(Request& r) { return r.m_state; }

    Request irecv(RankId r, RankId src, int tag);
    Request ibarrier(RankId r, std::span<const RankId> group);

private:
    void rank_main(RankId r, const std::function<void(Comm&)>& program);
    void yield_to_scheduler(std::unique_lock<std::mutex>& lk, RankId r);
    void schedule_wake(RankId r, SimTime t);
    SimTime noise(SimTime bound);
    void deliver(Message& m);
    void deliver_user(Message& m);
    void deliver_barrier(Message& m, SimTime now);
    void advance_barrier(RankId r, BarrierState& b, SimTime now);
    void wake_satisfied(SimTime now);
    [[noreturn]] void fail_deadlock(const std::string& reason);

    TransportConfig m_cfg;
    std::mt19937_64 m_rng;
    std::vector<RankState> m_ranks;
    std::vector<Comm> m_comms;
    std::vector<SimTime> m_last_delivery;
    std::map<EventKey, std::optional<Message>> m_queue;
    std::uint64_t m_event_seq = 0;
    std::uint64_t m_events = 0;
    EventLog m_log;
    std::shared_ptr<SharedServices> m_services;

    std::mutex m_mutex;
    std::condition_variable m_sched_cv;
    RankId m_active = -1;
    bool m_abort = false;
};

namespace {
constexpr RankId scheduler = -1;
} // namespace

SimTime World::noise(SimTime bound)
{
    if (m_cfg.schedule != Schedule::adversarial || bound <= 0) return 0;
    return std::uniform_int_distribution<SimTime>(0, bound)(m_rng);
}

void World::schedule_wake(RankId r, SimTime t)
{
    m_queue.emplace(EventKey{t, 1, r, m_event_seq++}, std::nullopt);
}

std::uint64_t World::record(RankId r, std::string_view kind, RankId peer, std::uint64_t bytes, SimTime t)
{
    auto& rs = rank_state(r);
    const auto seq = rs.log_seq++;
    if (m_cfg.record_log) m_log.append(EventRecord{t, r, kind, peer, bytes, seq});
    return seq;
}

void World::transmit(Message m, SimTime now)
{
    check_rank(m.dst);
    const auto& lat = m_cfg.latency;
    const double bytes = static_cast<double>(m.payload.size());
    double delay = static_cast<double>(lat.base_latency) + bytes * lat.per_byte;
    if (m_cfg.schedule != Schedule::fifo && lat.jitter_fraction > 0.0) {
        const double u = std::uniform_real_distribution<double>(-1.0, 1.0)(m_rng);
        delay += delay * lat.jitter_fraction * u;
    }
    SimTime t = now + std::max<SimTime>(0, std::llround(delay)) + noise(m_cfg.adversarial_spread);
    // Each (src, dst) link delivers in order.
    auto& last = m_last_delivery[static_cast<std::size_t>(m.src) * m_cfg.n_ranks + m.dst];
    t = std::max(t, last);
    last = t;

    m.sent_at = now;
    m.deliver_at = t;
    m.seq = m_event_seq++;
    auto& c = rank_state(m.src).counters;
    if (m.cls == MessageClass::data) {
        ++c.data_msgs;
        c.data_bytes += m.payload.size();
    } else {
        ++c.control_msgs;
        c.control_bytes += m.payload.size();
    }
    record(m.src, m.send_kind, m.dst, m.payload.size(), now);
    m_queue.emplace(EventKey{t, 0, m.dst, m.seq}, std::move(m));
}

void World::register_service(RankId r, std::uint32_t id, ServiceHandler h)
{
    auto& rs = rank_state(r);
    rs.services[id] = std::move(h);
    auto it = rs.unclaimed.find(id);
    if (it == rs.unclaimed.end()) return;
    auto pending = std::move(it->second);
    rs.unclaimed.erase(it);
    for (auto& m : pending) {
        NodeContext ctx(*this, r, rs.clock);
        rs.services[id](m, ctx);
    }
}

void World::deliver(Message& m)
{
    record(m.dst, m.deliver_kind, m.src, m.payload.size(), m.deliver_at);
    if (m.service == user_service) {
        deliver_user(m);
        return;
    }
    if (m.service == barrier_service) {
        deliver_barrier(m, m.deliver_at);
        return;
    }
    auto& rs = rank_state(m.dst);
    auto it = rs.services.find(m.service);
    if (it == rs.services.end()) {
        rs.unclaimed[m.service].push_back(std::move(m));
        return;
    }
    NodeContext ctx(*this, m.dst, m.deliver_at);
    it->second(m, ctx);
}

namespace {
bool matches(const RequestState& r, const Message& m)
{
    return (r.src_filter == any_source || r.src_filter == m.src) && r.tag == m.tag;
}
} // namespace

void World::deliver_user(Message& m)
{
    auto& rs = rank_state(m.dst);
    for (auto it = rs.posted.begin(); it != rs.posted.end(); ++it) {
        if (!matches(**it, m)) continue;
        auto& req = **it;
        req.source = m.src;
        req.tag = m.tag;
        req.payload = std::move(m.payload);
        req.complete = true;
        rs.posted.erase(it);
        return;
    }
    rs.unexpected.push_back(std::move(m));
}

Request World::irecv(RankId r, RankId src, int tag)
{
    if (src != any_source) check_rank(src);
    auto req = make_request(r, RequestKind::recv);
    auto& st = state_of(req);
    st.src_filter = src;
    st.tag = tag;
    auto& rs = rank_state(r);
    for (auto it = rs.unexpected.begin(); it != rs.unexpected.end(); ++it) {
        if (!matches(st, *it)) continue;
        st.source = it->src;
        st.payload = std::move(it->payload);
        st.complete = true;
        rs.unexpected.erase(it);
        return req;
    }
    rs.posted.push_back(share(req));
    return req;
}

// Dissemination barrier: ceil(log2 n) rounds, one message per rank per round.
Request World::ibarrier(RankId r, std::span<const RankId> group_in)
{
    std::vector<RankId> group(group_in.begin(), group_in.end());
    std::sort(group.begin(), group.end());
    group.erase(std::unique(group.begin(), group.end()), group.end());
    auto self = std::find(group.begin(), group.end(), r);
    if (self == group.end()) throw std::invalid_argument("barrier group does not contain the calling rank");
    for (auto g : group) check_rank(g);

    const auto hash = fnv1a(group.data(), group.size() * sizeof(RankId));
    auto& rs = rank_state(r);
    const auto instance = ++rs.barrier_instances[hash];
    auto req = make_request(r, RequestKind::ibarrier);
    record(r, "barrier_enter", no_peer, instance, rs.clock);

    auto& b = rs.barriers[{hash, instance}];
    b.key = {hash, instance};
    b.entered = true;
    b.group = std::move(group);
    b.index = static_cast<std::size_t>(std::find(b.group.begin(), b.group.end(), r) - b.group.begin());
    const auto n = b.group.size();
    b.rounds = n <= 1 ? 0u : static_cast<unsigned>(std::bit_width(n - 1));
    b.request = share(req);
    if (b.rounds > 0) {
        Message m;
        m.src = r;
        m.dst = b.group[(b.index + 1) % n];
        m.service = barrier_service;
        m.cls = MessageClass::control;
        m.header = {hash, instance, 0, 0};
        m.send_kind = "barrier_send";
        m.deliver_kind = "barrier_deliver";
        transmit(std::move(m), rs.clock);
    }
    advance_barrier(r, b, rs.clock);
    return req;
}

void World::deliver_barrier(Message& m, SimTime now)
{
    auto& rs = rank_state(m.dst);
    auto& b = rs.barriers[{m.header[0], m.header[1]}];
    b.key = {m.header[0], m.header[1]};
    b.received |= (std::uint64_t{1} << m.header[2]);
    advance_barrier(m.dst, b, now);
}

void World::advance_barrier(RankId r, BarrierState& b, SimTime now)
{
    if (!b.entered || !b.request || b.request->complete) return;
    const auto n = b.group.size();
    while (b.round < b.rounds && (b.received & (std::uint64_t{1} << b.round))) {
        ++b.round;
        if (b.round < b.rounds) {
            Message m;
            m.src = r;
            m.dst = b.group[(b.index + (std::size_t{1} << b.round)) % n];
            m.service = barrier_service;
            m.cls = MessageClass::control;
            m.header = {b.key.first, b.key.second, b.round, 0};
            m.send_kind = "barrier_send";
            m.deliver_kind = "barrier_deliver";
            transmit(std::move(m), now);
        }
    }
    if (b.round == b.rounds) {
        b.request->complete = true;
        const auto key = b.key;
        record(r, "barrier_exit", no_peer, key.second, now);
        b.request.reset();
        rank_state(r).barriers.erase(key);
    }
}

void World::yield_to_scheduler(std::unique_lock<std::mutex>& lk, RankId r)
{
    auto& rs = rank_state(r);
    m_active = scheduler;
    m_sched_cv.notify_one();
    rs.cv.wait(lk, [&] { return m_active == r || m_abort; });
    if (m_abort) throw Aborted{};
}

void World::sync_point(RankId r)
{
    auto& rs = rank_state(r);
    const SimTime t = rs.clock + noise(m_cfg.adversarial_spread / 4);
    const EventKey mine{t, 1, r, m_event_seq};
    // Running on without a context switch is equivalent when nothing earlier is queued.
    // Those steps still count against the event budget so a spinning rank is caught.
    if (++m_events <= m_cfg.deadlock_timeout && (m_queue.empty() || mine < m_queue.begin()->first)) {
        rs.clock = t;
        return;
    }
    schedule_wake(r, t);
    rs.phase = Phase::ready;
    std::unique_lock lk(m_mutex);
    yield_to_scheduler(lk, r);
}

void World::block_until(RankId r, const std::function<bool()>& ready, std::string_view what)
{
    sync_point(r);
    auto& rs = rank_state(r);
    while (!ready()) {
        rs.phase = Phase::blocked;
        rs.blocked_on = ready;
        rs.blocked_what = std::string(what);
        std::unique_lock lk(m_mutex);
        yield_to_scheduler(lk, r);
    }
}

void World::wake_satisfied(SimTime now)
{
    for (RankId r = 0; r < m_cfg.n_ranks; ++r) {
        auto& rs = rank_state(r);
        if (rs.phase != Phase::blocked || !rs.blocked_on()) continue;
        rs.phase = Phase::ready;
        rs.blocked_on = nullptr;
        schedule_wake(r, std::max(rs.clock, now) + noise(m_cfg.adversarial_spread / 4));
    }
}

void World::rank_main(RankId r, const std::function<void(Comm&)>& program)
{
    auto& rs = rank_state(r);
    {
        std::unique_lock lk(m_mutex);
        rs.cv.wait(lk, [&] { return m_active == r || m_abort; });
        if (m_abort) return;
    }
    try {
        program(m_comms[static_cast<std::size_t>(r)]);
    } catch (const Aborted&) {
        return;
    } catch (...) {
        rs.error = std::current_exception();
    }
    std::unique_lock lk(m_mutex);
    rs.phase = Phase::finished;
    m_active = scheduler;
    m_sched_cv.notify_one();
}

void World::fail_deadlock(const std::string& reason)
{
    std::vector<RankId> blocked;
    std::ostringstream os;
    os << reason << "; blocked:";
    for (RankId r = 0; r < m_cfg.n_ranks; ++r) {
        const auto& rs = rank_state(r);
        if (rs.phase == Phase::finished) continue;
        blocked.push_back(r);
        os << " rank " << r << " (" << (rs.blocked_what.empty() ? "runnable" : rs.blocked_what) << ")";
    }
    throw DeadlockError(os.str(), std::move(blocked));
}

WorldResult World::run(const std::function<void(Comm&)>& program)
{
    std::vector<std::thread> threads;
    threads.reserve(static_cast<std::size_t>(m_cfg.n_ranks));
    for (RankId r = 0; r < m_cfg.n_ranks; ++r) {
        schedule_wake(r, 0);
        threads.emplace_back([this, r, &program] { rank_main(r, program); });
    }

    std::exception_ptr failure;
    try {
        std::unique_lock lk(m_mutex);
        while (true) {
            if (m_queue.empty()) {
                const bool done = std::all_of(m_ranks.begin(), m_ranks.end(),
                                              [](const RankState& s) { return s.phase == Phase::finished; });
                if (done) break;
                fail_deadlock("deadlock: all ranks blocked with no messages in flight");
            }
            if (++m_events > m_cfg.deadlock_timeout) fail_deadlock("deadlock timeout: scheduler event budget exhausted");

            auto node = m_queue.extract(m_queue.begin());
            const EventKey key = node.key();
            if (node.mapped()) {
                deliver(*node.mapped());
                wake_satisfied(key.time);
                continue;
            }
            auto& rs = rank_state(key.rank);
            rs.clock = std::max(rs.clock, key.time);
            rs.phase = Phase::running;
            rs.blocked_what.clear();
            m_active = key.rank;
            rs.cv.notify_one();
            m_sched_cv.wait(lk, [&] { return m_active == scheduler; });
            if (rs.error) {
                std::string what = "unknown exception";
                try {
                    std::rethrow_exception(rs.error);
                } catch (const std::exception& e) {
                    what = e.what();
                } catch (...) {
                }
                throw RankFailure(key.rank, what);
            }
            if (rs.phase == Phase::blocked) wake_satisfied(rs.clock);
        }
    } catch (...) {
        failure = std::current_exception();
    }

    {
        std::lock_guard lk(m_mutex);
        m_abort = true;
        for (auto& rs : m_ranks) rs.cv.notify_all();
    }
    for (auto& t : threads) t.join();
    if (failure) std::rethrow_exception(failure);

    WorldResult result;
    m_log.finalize();
    result.log = std::move(m_log);
    for (const auto& rs : m_ranks) {
        result.counters.push_back(rs.counters);
        result.finish_times.push_back(rs.clock);
    }
    result.services = m_services;
    result.events_processed = m_events;
    return result;
}

} // namespace detail

// --- Request ---

RequestKind Request::kind() const { return m_state->kind; }
bool Request::complete() const { return m_state && m_state->complete; }
bool Request::consumed() const { return m_state && m_state->consumed; }
RankId Request::source() const { return m_state->source; }
int Request::tag() const { return m_state->tag; }
const std::vector<std::byte>& Request::payload() const { return m_state->payload; }

// --- NodeContext ---

void NodeContext::transmit(Message m)
{
    m.src = m_rank;
    m_world->transmit(std::move(m), m_now);
}

std::uint64_t NodeContext::record(std::string_view kind, RankId peer, std::uint64_t bytes)
{
    return m_world->record(m_rank, kind, peer, bytes, m_now);
}

SharedServices& NodeContext::services() { return m_world->services(); }

// --- Comm ---

int Comm::size() const { return m_world->config().n_ranks; }
SimTime Comm::now() const { return m_world->rank_state(m_rank).clock; }
std::uint64_t Comm::seed() const { return m_world->config().seed; }

void Comm::advance(SimTime dt)
{
    if (dt < 0) throw std::invalid_argument("negative advance");
    m_world->rank_state(m_rank).clock += dt;
}

Request Comm::isend(RankId dst, int tag, std::span<const std::byte> payload)
{
    m_world->check_rank(dst);
    sync_point();
    Message m;
    m.src = m_rank;
    m.dst = dst;
    m.tag = tag;
    m.cls = payload.empty() ? MessageClass::control : MessageClass::data;
    m.payload.assign(payload.begin(), payload.end());
    m_world->transmit(std::move(m), now());
    auto req = m_world->make_request(m_rank, RequestKind::send);
    detail::World::state_of(req).complete = true;
    return req;
}

Request Comm::irecv(RankId src, int tag)
{
    sync_point();
    return m_world->irecv(m_rank, src, tag);
}

namespace {
void check_owned(const Request& r, RankId me, const detail::RequestState& s)
{
    if (!r.valid()) throw std::logic_error("invalid request handle");
    if (s.owner != me) throw std::logic_error("request belongs to another rank");
}
} // namespace

Status Comm::wait(Request& r)
{
    auto& s = detail::World::state_of(r);
    check_owned(r, m_rank, s);
    if (s.consumed) throw std::logic_error("wait on a consumed request");
    m_world->block_until(m_rank, [&s] { return s.complete; },
                         s.kind == RequestKind::recv ? "wait(recv from " + std::to_string(s.src_filter) + " tag " +
                                                           std::to_string(s.tag) + ")"
                                                     : std::string("wait(") + (s.kind == RequestKind::ibarrier ? "barrier)" : "send)"));
    s.consumed = true;
    return Status{s.source, s.tag, s.payload.size()};
}

bool Comm::test(Request& r)
{
    auto& s = detail::World::state_of(r);
    check_owned(r, m_rank, s);
    if (s.consumed) throw std::logic_error("test on a consumed request");
    sync_point();
    if (s.complete) {
        s.consumed = true;
        return true;
    }
    advance(m_world->config().poll_cost);
    return false;
}

std::optional<std::size_t> Comm::test_any(std::span<Request> rs)
{
    sync_point();
    for (std::size_t i = 0; i < rs.size(); ++i) {
        if (!rs[i].valid()) continue;
        auto& s = detail::World::state_of(rs[i]);
        check_owned(rs[i], m_rank, s);
        if (s.complete && !s.consumed) {
            s.consumed = true;
            return i;
        }
    }
    advance(m_world->config().poll_cost);
    return std::nullopt;
}

std::size_t Comm::wait_any(std::span<Request> rs)
{
    bool any_active = false;
    for (auto& r : rs)
        if (r.valid() && !r.consumed()) any_active = true;
    if (!any_active) throw std::logic_error("wait_any without active requests");
    m_world->block_until(m_rank, [rs] {
        for (const auto& r : rs)
            if (r.valid() && r.complete() && !r.consumed()) return true;
        return false;
    }, "wait_any");
    for (std::size_t i = 0; i < rs.size(); ++i) {
        if (rs[i].valid() && rs[i].complete() && !rs[i].consumed()) {
            detail::World::state_of(rs[i]).consumed = true;
            return i;
        }
    }
    throw std::logic_error("unreachable");
}

void Comm::wait_all(std::span<Request> rs)
{
    for (auto& r : rs)
        if (r.valid() && !r.consumed()) wait(r);
}

void Comm::barrier(std::span<const RankId> group)
{
    auto r = ibarrier(group);
    wait(r);
}

Request Comm::ibarrier(std::span<const RankId> group)
{
    sync_point();
    return m_world->ibarrier(m_rank, group);
}

std::uint64_t Comm::record(std::string_view kind, RankId peer, std::uint64_t bytes)
{
    return m_world->record(m_rank, kind, peer, bytes, now());
}

const MessageCounters& Comm::counters() const { return m_world->rank_state(m_rank).counters; }

void Comm::register_service(std::uint32_t id, ServiceHandler handler)
{
    if (id == user_service || id == barrier_service) throw std::invalid_argument("reserved service id");
    m_world->register_service(m_rank, id, std::move(handler));
}

void Comm::sync_point() { m_world->sync_point(m_rank); }

void Comm::transmit(Message m)
{
    m.src = m_rank;
    m_world->transmit(std::move(m), now());
}

void Comm::block_until(const std::function<bool()>& ready, std::string_view what)
{
    m_world->block_until(m_rank, ready, what);
}

SharedServices& Comm::services() { return m_world->services(); }

WorldResult spawn_world(const TransportConfig& config, const std::function<void(Comm&)>& program)
{
    config.validate();
    detail::World world(config);
    return world.run(program);
}

} // namespace halo::sim
