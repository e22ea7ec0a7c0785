#include "halo/engine/decomposition.hpp"

#include <algorithm>
#include <charconv>

namespace halo::engine {

Dims parse_dims(std::string_view s)
{
    Dims d;
    int* out[] = {&d.x, &d.y, &d.z};
    std::size_t pos = 0;
    for (int i = 0; i < 3; ++i) {
        const auto end = i < 2 ? s.find('x', pos) : s.size();
        if (end == std::string_view::npos) throw std::invalid_argument("bad grid dims: " + std::string(s));
        const auto part = s.substr(pos, end - pos);
        auto [p, ec] = std::from_chars(part.data(), part.data() + part.size(), *out[i]);
        if (ec != std::errc{} || p != part.data() + part.size() || *out[i] <= 0)
            throw std::invalid_argument("bad grid dims: " + std::string(s));
        pos = end + 1;
    }
    return d;
}

std::string to_string(const Dims& d) { return std::to_string(d.x) + "x" + std::to_string(d.y) + "x" + std::to_string(d.z); }

namespace {

int share(int total, int parts, int i) { return total / parts + (i < total % parts ? 1 : 0); }
int start(int total, int parts, int i) { return i * (total / parts) + std::min(i, total % parts); }

} // namespace

Dims DecompositionPlan::local_dims(RankId r) const { return {share(global.x, px, rx(r)), share(global.y, py, ry(r)), global.z}; }

Dims DecompositionPlan::local_origin(RankId r) const { return {start(global.x, px, rx(r)), start(global.y, py, ry(r)), 0}; }

DecompositionPlan plan_decomposition(Dims global, int n_ranks, bool periodic, int depth)
{
    if (n_ranks <= 0) throw DecompositionError("rank count must be positive");
    int px = 1;
    for (int d = 1; static_cast<long long>(d) * d <= n_ranks; ++d)
        if (n_ranks % d == 0) px = d;
    return plan_decomposition(global, px, n_ranks / px, periodic, depth);
}

DecompositionPlan plan_decomposition(Dims global, int px, int py, bool periodic, int depth)
{
    if (px <= 0 || py <= 0) throw DecompositionError("rank grid must be positive");
    if (depth <= 0) throw DecompositionError("stencil depth must be positive");
    DecompositionPlan p{global, px, py, periodic, depth, 8};
    // The smallest local extents belong to the last column and row.
    const auto smallest = p.local_dims(p.rank_at(px - 1, py - 1));
    if (smallest.x < depth || smallest.y < depth || global.z <= 0)
        throw DecompositionError("local dims " + to_string(smallest) + " smaller than stencil depth " + std::to_string(depth));
    return p;
}

DecompositionPlan plan_weak_scaling(Dims local, int n_ranks, bool periodic, int depth)
{
    const auto shape = plan_decomposition({n_ranks, n_ranks, 1}, n_ranks, periodic, 1);
    return plan_decomposition({local.x * shape.px, local.y * shape.py, local.z}, shape.px, shape.py, periodic, depth);
}

Direction opposite(Direction d)
{
    switch (d) {
    case Direction::xm: return Direction::xp;
    case Direction::xp: return Direction::xm;
    case Direction::ym: return Direction::yp;
    case Direction::yp: return Direction::ym;
    case Direction::xmym: return Direction::xpyp;
    case Direction::xmyp: return Direction::xpym;
    case Direction::xpym: return Direction::xmyp;
    case Direction::xpyp: return Direction::xmym;
    }
    return d;
}

int dx(Direction d)
{
    switch (d) {
    case Direction::xm:
    case Direction::xmym:
    case Direction::xmyp: return -1;
    case Direction::xp:
    case Direction::xpym:
    case Direction::xpyp: return 1;
    default: return 0;
    }
}

int dy(Direction d)
{
    switch (d) {
    case Direction::ym:
    case Direction::xmym:
    case Direction::xpym: return -1;
    case Direction::yp:
    case Direction::xmyp:
    case Direction::xpyp: return 1;
    default: return 0;
    }
}

std::string_view to_string(Direction d)
{
    static constexpr std::string_view names[] = {"x-", "x+", "y-", "y+", "x-y-", "x-y+", "x+y-", "x+y+"};
    return names[static_cast<int>(d)];
}

RegionKind region_kind(Direction d)
{
    if (dx(d) != 0 && dy(d) != 0) return RegionKind::corner;
    return dx(d) != 0 ? RegionKind::face_x : RegionKind::face_y;
}

NeighborTable neighbor_table(const DecompositionPlan& plan, RankId rank)
{
    NeighborTable t;
    const int x = plan.rx(rank), y = plan.ry(rank);
    for (auto d : all_directions) {
        int nx = x + dx(d), ny = y + dy(d);
        if (plan.periodic) {
            nx = (nx + plan.px) % plan.px;
            ny = (ny + plan.py) % plan.py;
        } else if (nx < 0 || nx >= plan.px || ny < 0 || ny >= plan.py) {
            t[static_cast<int>(d)] = {sim::no_peer, region_kind(d)};
            continue;
        }
        t[static_cast<int>(d)] = {plan.rank_at(nx, ny), region_kind(d)};
    }
    return t;
}

int neighbor_count(const NeighborTable& t)
{
    int n = 0;
    for (const auto& e : t) n += e.present() ? 1 : 0;
    return n;
}

std::vector<FieldDescriptor> describe_fields(const DecompositionPlan& plan, RankId rank, int n_fields)
{
    std::vector<FieldDescriptor> out;
    for (int f = 0; f < n_fields; ++f) out.push_back({"field" + std::to_string(f), plan.local_dims(rank), plan.element_size});
    return out;
}

std::size_t region_bytes(const FieldDescriptor& f, Direction d, int depth, Accounting a)
{
    const auto dep = static_cast<std::size_t>(depth);
    const auto z = static_cast<std::size_t>(f.local.z) * f.element_size;
    switch (region_kind(d)) {
    case RegionKind::face_x: return dep * static_cast<std::size_t>(f.local.y) * z;
    case RegionKind::face_y: return dep * static_cast<std::size_t>(f.local.x) * z;
    case RegionKind::corner: return (a == Accounting::geometric ? dep * dep : dep) * z;
    }
    return 0;
}

std::array<std::size_t, n_directions> halo_region_sizes(const std::vector<FieldDescriptor>& fields, const DecompositionPlan& plan,
                                                       RankId rank, Accounting a)
{
    std::array<std::size_t, n_directions> out{};
    const auto table = neighbor_table(plan, rank);
    for (auto d : all_directions) {
        if (!table[static_cast<int>(d)].present()) continue;
        for (const auto& f : fields) out[static_cast<int>(d)] += region_bytes(f, d, plan.depth, a);
    }
    return out;
}

} // namespace halo::engine
