#include "halo/grid/field.hpp"

#include <cstring>
#include <stdexcept>

namespace halo::grid {

double encode(long long gx, long long gy, long long gz, int field)
{
    const auto v = static_cast<std::uint64_t>(field) * c3 + static_cast<std::uint64_t>(gx) * c1 + static_cast<std::uint64_t>(gy) * c2 +
                   static_cast<std::uint64_t>(gz);
    return static_cast<double>(v);
}

double sentinel()
{
    double v;
    std::memcpy(&v, &sentinel_bits, sizeof v);
    return v;
}

std::uint64_t bits_of(double v)
{
    std::uint64_t b;
    std::memcpy(&b, &v, sizeof b);
    return b;
}

bool is_sentinel(double v) { return bits_of(v) == sentinel_bits; }

engine::FieldDescriptor Field::descriptor() const { return {"field" + std::to_string(m_field), m_local, sizeof(double)}; }

Field make_field(const DecompositionPlan& plan, RankId rank, int field_index)
{
    Field f;
    f.m_local = plan.local_dims(rank);
    f.m_origin = plan.local_origin(rank);
    f.m_depth = plan.depth;
    f.m_field = field_index;
    f.m_rank = rank;
    const int d = plan.depth;
    f.m_data.assign(static_cast<std::size_t>(f.lx() + 2 * d) * static_cast<std::size_t>(f.ly() + 2 * d) * static_cast<std::size_t>(f.lz()),
                    sentinel());
    for (int i = d; i < d + f.lx(); ++i)
        for (int j = d; j < d + f.ly(); ++j)
            for (int k = 0; k < f.lz(); ++k) f.at(i, j, k) = encode(f.m_origin.x + i - d, f.m_origin.y + j - d, k, field_index);
    return f;
}

namespace {

struct Range {
    int lo, hi;
};

// Interior cells sent towards d (halo = false) or halo cells filled from d (halo = true).
Range span_for(int delta, int extent, int depth, bool halo)
{
    if (delta < 0) return halo ? Range{0, depth} : Range{depth, 2 * depth};
    if (delta > 0) return halo ? Range{extent + depth, extent + 2 * depth} : Range{extent, extent + depth};
    return {depth, depth + extent};
}

// Visits cells in pack order: layer, row, z. Layers run along x except for y faces.
template <class Fn>
void visit(const Field& f, Direction d, bool halo, Fn&& fn)
{
    const auto xr = span_for(engine::dx(d), f.lx(), f.depth(), halo);
    const auto yr = span_for(engine::dy(d), f.ly(), f.depth(), halo);
    if (engine::region_kind(d) == engine::RegionKind::face_y) {
        for (int j = yr.lo; j < yr.hi; ++j)
            for (int i = xr.lo; i < xr.hi; ++i)
                for (int k = 0; k < f.lz(); ++k) fn(i, j, k);
    } else {
        for (int i = xr.lo; i < xr.hi; ++i)
            for (int j = yr.lo; j < yr.hi; ++j)
                for (int k = 0; k < f.lz(); ++k) fn(i, j, k);
    }
}

void check_size(const Field& f, Direction d, std::size_t bytes)
{
    const auto want = halo_values(f, d) * sizeof(double);
    if (bytes != want)
        throw std::invalid_argument("halo buffer for " + std::string(engine::to_string(d)) + " holds " + std::to_string(bytes) +
                                    " bytes, expected " + std::to_string(want));
}

} // namespace

std::size_t halo_values(const Field& f, Direction d)
{
    const auto dep = static_cast<std::size_t>(f.depth());
    const auto z = static_cast<std::size_t>(f.lz());
    switch (engine::region_kind(d)) {
    case engine::RegionKind::face_x: return dep * static_cast<std::size_t>(f.ly()) * z;
    case engine::RegionKind::face_y: return dep * static_cast<std::size_t>(f.lx()) * z;
    case engine::RegionKind::corner: return dep * dep * z;
    }
    return 0;
}

void pack_halo(const Field& f, Direction d, std::span<std::byte> staging)
{
    check_size(f, d, staging.size());
    auto* out = staging.data();
    visit(f, d, false, [&](int i, int j, int k) {
        std::memcpy(out, &f.data()[f.offset(i, j, k)], sizeof(double));
        out += sizeof(double);
    });
}

void unpack_halo(Field& f, Direction d, std::span<const std::byte> data)
{
    check_size(f, d, data.size());
    const auto* in = data.data();
    visit(f, d, true, [&](int i, int j, int k) {
        std::memcpy(&f.data()[f.offset(i, j, k)], in, sizeof(double));
        in += sizeof(double);
    });
}

void unpack_halo(Field& f, Direction d, const engine::ReceiveView& view) { unpack_halo(f, d, view.bytes()); }

std::vector<Mismatch> verify_halos(const Field& f, const DecompositionPlan& plan)
{
    std::vector<Mismatch> out;
    const int d = f.depth();
    for (int i = 0; i < f.lx() + 2 * d; ++i) {
        long long gx = f.origin().x + i - d;
        bool outside = false;
        if (plan.periodic)
            gx = (gx + plan.global.x) % plan.global.x;
        else if (gx < 0 || gx >= plan.global.x)
            outside = true;
        for (int j = 0; j < f.ly() + 2 * d; ++j) {
            long long gy = f.origin().y + j - d;
            bool out_y = outside;
            if (plan.periodic)
                gy = (gy + plan.global.y) % plan.global.y;
            else if (gy < 0 || gy >= plan.global.y)
                out_y = true;
            for (int k = 0; k < f.lz(); ++k) {
                const auto want = out_y ? sentinel_bits : bits_of(encode(gx, gy, k, f.index()));
                const auto got = bits_of(f.at(i, j, k));
                if (want != got) out.push_back({f.offset(i, j, k), i, j, k, want, got});
            }
        }
    }
    return out;
}

std::string describe(const Mismatch& m)
{
    return "cell (" + std::to_string(m.i) + "," + std::to_string(m.j) + "," + std::to_string(m.k) + ") index " + std::to_string(m.index) +
           " expected bits " + std::to_string(m.expected) + " found " + std::to_string(m.found);
}

std::uint64_t digest(const Field& f, std::uint64_t h) { return sim::fnv1a(f.data().data(), f.data().size() * sizeof(double), h); }

} // namespace halo::grid
