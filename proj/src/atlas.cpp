#include "gridqcd/atlas.hpp"

#include "gridqcd/parallel.hpp"
#include "gridqcd/rng.hpp"

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <optional>
#include <sstream>
#include <variant>

namespace gridqcd {

namespace {

using Index = Eigen::Index;
constexpr int kAtlasFormatVersion = 1;

nlohmann::json matrix_json(const Matrix& m) {
    std::vector<double> data;
    data.reserve(static_cast<std::size_t>(m.size()));
    for (Index i = 0; i < m.rows(); ++i)
        for (Index j = 0; j < m.cols(); ++j) data.push_back(m(i, j));
    return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
}

Matrix matrix_from_json(const nlohmann::json& j) {
    const auto rows = j.at("rows").get<Index>();
    const auto cols = j.at("cols").get<Index>();
    const auto data = j.at("data").get<std::vector<double>>();
    if (static_cast<Index>(data.size()) != rows * cols) throw InputError("atlas cache: matrix size mismatch");
    Matrix m(rows, cols);
    for (Index i = 0; i < rows; ++i)
        for (Index k = 0; k < cols; ++k) m(i, k) = data[static_cast<std::size_t>(i * cols + k)];
    return m;
}

nlohmann::json vector_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Vector vector_from_json(const nlohmann::json& j) {
    auto data = j.get<std::vector<double>>();
    return Eigen::Map<const Vector>(data.data(), static_cast<Index>(data.size()));
}

std::string hash_hex(std::uint64_t h) {
    std::ostringstream out;
    out << std::hex << std::setw(16) << std::setfill('0') << h;
    return out.str();
}

}  // namespace

const CriticalRegion* RegionAtlas::find(const Vector& xi, double tol) const {
    for (auto i : order_)
        if (contains(*regions_[i], xi, tol)) return regions_[i].get();
    return nullptr;
}

const CriticalRegion* RegionAtlas::find_and_touch(const Vector& xi, double tol) {
    for (std::size_t pos = 0; pos < order_.size(); ++pos) {
        const auto i = order_[pos];
        if (contains(*regions_[i], xi, tol)) {
            std::rotate(order_.begin(), order_.begin() + static_cast<std::ptrdiff_t>(pos),
                        order_.begin() + static_cast<std::ptrdiff_t>(pos) + 1);
            return regions_[i].get();
        }
    }
    return nullptr;
}

void RegionAtlas::touch(std::size_t index) {
    auto it = std::find(order_.begin(), order_.end(), index);
    if (it != order_.end()) std::rotate(order_.begin(), it, it + 1);
}

bool RegionAtlas::has_active_set(const std::vector<Index>& active) const {
    return std::any_of(regions_.begin(), regions_.end(), [&](const RegionPtr& r) { return r->active == active; });
}

const CriticalRegion& RegionAtlas::add(CriticalRegion region) {
    if (has_active_set(region.active)) throw InputError("atlas already holds a region with this active set");
    region.id = static_cast<int>(regions_.size());
    regions_.push_back(std::make_shared<const CriticalRegion>(std::move(region)));
    order_.push_back(regions_.size() - 1);
    return *regions_.back();
}

RegionAtlas build_atlas(const MarketQP& qp, const std::vector<Vector>& samples, const AtlasOptions& options) {
    RegionAtlas atlas(qp.structure_id, qp.content_hash());
    const double tol = options.region.region_tol;
    const std::size_t batch = std::max<std::size_t>(options.batch_size, 1);

    using Outcome = std::variant<std::monostate, CriticalRegion, DegenerateRegionError>;
    for (std::size_t start = 0; start < samples.size(); start += batch) {
        const std::size_t stop = std::min(samples.size(), start + batch);
        std::vector<std::size_t> pending;
        for (std::size_t s = start; s < stop; ++s)
            if (!atlas.find(samples[s], tol)) pending.push_back(s);

        std::vector<Outcome> outcomes(pending.size());
        parallel_for(pending.size(), options.threads, [&](std::size_t k) {
            try {
                outcomes[k] = region_from_point(qp, samples[pending[k]], options.region);
            } catch (const DegenerateRegionError& e) {
                outcomes[k] = e;
            }
        });

        // Merge in sample order so the result does not depend on threading.
        for (std::size_t k = 0; k < pending.size(); ++k) {
            const Vector& xi = samples[pending[k]];
            if (auto* err = std::get_if<DegenerateRegionError>(&outcomes[k])) {
                if (!options.quarantine_degenerate) throw *err;
                spdlog::warn("[{}] quarantined sample {}: {}", qp.structure_id, pending[k], err->what());
                atlas.quarantine(xi);
                continue;
            }
            auto& reg = std::get<CriticalRegion>(outcomes[k]);
            if (atlas.find(xi, tol) || atlas.has_active_set(reg.active)) continue;
            atlas.add(std::move(reg));
        }
    }
    return atlas;
}

const CriticalRegion& locate(RegionAtlas& atlas, const MarketQP& qp, const Vector& xi, const RegionOptions& options) {
    if (const auto* hit = atlas.find_and_touch(xi, options.region_tol)) return *hit;
    auto reg = region_from_point(qp, xi, options);
    if (atlas.has_active_set(reg.active)) {
        // Same active set as a cached region, but xi fell outside it by more
        // than the tolerance (numerical edge). Reuse the cached region.
        for (std::size_t i = 0; i < atlas.size(); ++i) {
            if (atlas.region(i).active == reg.active) {
                atlas.touch(i);
                return atlas.region(i);
            }
        }
    }
    spdlog::debug("[{}] discovered region online at a perturbation outside the atlas", qp.structure_id);
    const auto& added = atlas.add(std::move(reg));
    atlas.touch(static_cast<std::size_t>(added.id));
    return added;
}

RegionPtr ConcurrentAtlas::locate(const MarketQP& qp, const Vector& xi, const RegionOptions& options) {
    {
        std::shared_lock lock(mutex_);
        for (auto i : atlas_.lookup_order())
            if (contains(atlas_.region(i), xi, options.region_tol)) return atlas_.regions()[i];
    }
    auto reg = region_from_point(qp, xi, options);
    std::unique_lock lock(mutex_);
    for (auto i : atlas_.lookup_order())
        if (contains(atlas_.region(i), xi, options.region_tol) || atlas_.region(i).active == reg.active)
            return atlas_.regions()[i];
    atlas_.add(std::move(reg));
    return atlas_.regions().back();
}

std::size_t ConcurrentAtlas::size() const {
    std::shared_lock lock(mutex_);
    return atlas_.size();
}

RegionAtlas ConcurrentAtlas::snapshot() const {
    std::shared_lock lock(mutex_);
    return atlas_;
}

std::vector<Index> PerturbationBox::free_dims() const {
    std::vector<Index> out;
    for (Index i = 0; i < dim(); ++i)
        if (upper(i) > lower(i)) out.push_back(i);
    return out;
}

std::vector<Vector> sampling_plan(const PerturbationBox& box, std::size_t grid_points, std::size_t random_count,
                                  std::uint64_t seed) {
    const auto free = box.free_dims();
    std::vector<Vector> samples;
    const Vector mid = 0.5 * (box.lower + box.upper);
    if (free.size() == 2) {
        const std::size_t n = std::max<std::size_t>(grid_points, 2);
        samples.reserve(n * n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                Vector xi = mid;
                const double fi = static_cast<double>(i) / static_cast<double>(n - 1);
                const double fj = static_cast<double>(j) / static_cast<double>(n - 1);
                xi(free[0]) = box.lower(free[0]) + fi * (box.upper(free[0]) - box.lower(free[0]));
                xi(free[1]) = box.lower(free[1]) + fj * (box.upper(free[1]) - box.lower(free[1]));
                samples.push_back(xi);
            }
        return samples;
    }
    Rng rng(seed);
    samples.reserve(random_count);
    for (std::size_t s = 0; s < random_count; ++s) {
        Vector xi = mid;
        for (auto d : free) xi(d) = rng.uniform(box.lower(d), box.upper(d));
        samples.push_back(xi);
    }
    return samples;
}

std::vector<std::pair<double, double>> region_polygon(const CriticalRegion& region, const PerturbationBox& box, Index dim_x,
                                                      Index dim_y, const Vector& base) {
    using Pt = std::pair<double, double>;
    std::vector<Pt> poly = {{box.lower(dim_x), box.lower(dim_y)},
                            {box.upper(dim_x), box.lower(dim_y)},
                            {box.upper(dim_x), box.upper(dim_y)},
                            {box.lower(dim_x), box.upper(dim_y)}};
    for (Index r = 0; r < region.H.rows() && !poly.empty(); ++r) {
        const double ax = region.H(r, dim_x);
        const double ay = region.H(r, dim_y);
        // Contribution of the dimensions held at `base`.
        double fixed = region.H.row(r).dot(base) - ax * base(dim_x) - ay * base(dim_y);
        const double limit = region.h(r) - fixed;
        auto value = [&](const Pt& pt) { return ax * pt.first + ay * pt.second - limit; };
        std::vector<Pt> out;
        for (std::size_t i = 0; i < poly.size(); ++i) {
            const Pt& cur = poly[i];
            const Pt& nxt = poly[(i + 1) % poly.size()];
            const double vc = value(cur);
            const double vn = value(nxt);
            if (vc <= 0.0) out.push_back(cur);
            if ((vc < 0.0 && vn > 0.0) || (vc > 0.0 && vn < 0.0)) {
                const double t = vc / (vc - vn);
                out.emplace_back(cur.first + t * (nxt.first - cur.first), cur.second + t * (nxt.second - cur.second));
            }
        }
        poly = std::move(out);
    }
    return poly;
}

nlohmann::json atlas_to_json(const RegionAtlas& atlas) {
    nlohmann::json doc;
    doc["format"] = "gridqcd-atlas";
    doc["version"] = kAtlasFormatVersion;
    doc["structure_id"] = atlas.structure_id();
    doc["qp_hash"] = hash_hex(atlas.qp_hash());
    doc["regions"] = nlohmann::json::array();
    for (const auto& r : atlas.regions()) {
        nlohmann::json j;
        j["id"] = r->id;
        j["active"] = r->active;
        j["dropped"] = r->dropped;
        j["D"] = matrix_json(r->D);
        j["d"] = vector_json(r->d);
        j["P"] = matrix_json(r->P);
        j["p"] = vector_json(r->p);
        j["H"] = matrix_json(r->H);
        j["h"] = vector_json(r->h);
        j["strict"] = std::vector<int>(r->strict.begin(), r->strict.end());
        j["representative"] = vector_json(r->representative);
        doc["regions"].push_back(std::move(j));
    }
    doc["quarantined"] = nlohmann::json::array();
    for (const auto& q : atlas.quarantined()) doc["quarantined"].push_back(vector_json(q));
    return doc;
}

RegionAtlas atlas_from_json(const nlohmann::json& doc) {
    try {
        if (doc.at("format").get<std::string>() != "gridqcd-atlas") throw InputError("not an atlas cache file");
        if (doc.at("version").get<int>() != kAtlasFormatVersion) throw InputError("unsupported atlas cache version");
        const auto hash = std::stoull(doc.at("qp_hash").get<std::string>(), nullptr, 16);
        RegionAtlas atlas(doc.at("structure_id").get<std::string>(), hash);
        for (const auto& j : doc.at("regions")) {
            CriticalRegion r;
            r.active = j.at("active").get<std::vector<Index>>();
            r.dropped = j.at("dropped").get<std::vector<Index>>();
            r.D = matrix_from_json(j.at("D"));
            r.d = vector_from_json(j.at("d"));
            r.P = matrix_from_json(j.at("P"));
            r.p = vector_from_json(j.at("p"));
            r.H = matrix_from_json(j.at("H"));
            r.h = vector_from_json(j.at("h"));
            for (int s : j.at("strict").get<std::vector<int>>()) r.strict.push_back(static_cast<char>(s));
            r.representative = vector_from_json(j.at("representative"));
            atlas.add(std::move(r));
        }
        for (const auto& q : doc.at("quarantined")) atlas.quarantine(vector_from_json(q));
        return atlas;
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("malformed atlas cache: ") + e.what());
    }
}

std::filesystem::path atlas_cache_path(const std::filesystem::path& dir, const MarketQP& qp) {
    return dir / ("atlas-" + qp.structure_id + "-" + hash_hex(qp.content_hash()) + ".json");
}

void save_atlas(const RegionAtlas& atlas, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw IoError("cannot write atlas cache " + path.string());
    out << atlas_to_json(atlas).dump() << "\n";
    if (!out) throw IoError("failed writing atlas cache " + path.string());
}

RegionAtlas load_atlas(const std::filesystem::path& path, const MarketQP& qp) {
    std::ifstream in(path);
    if (!in) throw IoError("atlas cache not found: " + path.string());
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::parse_error& e) {
        throw InputError("cannot parse atlas cache " + path.string() + ": " + e.what());
    }
    auto atlas = atlas_from_json(doc);
    if (atlas.qp_hash() != qp.content_hash())
        throw InputError("atlas cache " + path.string() + " was built for a different market QP");
    // LMP extraction columns are derived from the QP rather than stored.
    RegionAtlas rebuilt(atlas.structure_id(), atlas.qp_hash());
    for (const auto& r : atlas.regions()) {
        CriticalRegion copy = *r;
        copy.lmp_rows.clear();
        for (Index i = 0; i < static_cast<Index>(copy.active.size()); ++i) {
            const auto kind = qp.row_labels[static_cast<std::size_t>(copy.active[static_cast<std::size_t>(i)])].kind;
            if (kind == RowKind::Balance || kind == RowKind::FlowUpper || kind == RowKind::FlowLower) copy.lmp_rows.push_back(i);
        }
        copy.lambda_tilde.resize(qp.Lambda.rows(), static_cast<Index>(copy.lmp_rows.size()));
        for (std::size_t c = 0; c < copy.lmp_rows.size(); ++c)
            copy.lambda_tilde.col(static_cast<Index>(c)) = qp.Lambda.col(copy.active[static_cast<std::size_t>(copy.lmp_rows[c])]);
        rebuilt.add(std::move(copy));
    }
    for (const auto& q : atlas.quarantined()) rebuilt.quarantine(q);
    return rebuilt;
}

}  // namespace gridqcd
