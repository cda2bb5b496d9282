#include "gridqcd/market_qp.hpp"

#include "gridqcd/errors.hpp"

#include <algorithm>
#include <cctype>
#include <cstring>

namespace gridqcd {

namespace {

using Index = Eigen::Index;

Index idx(std::size_t i) { return static_cast<Index>(i); }

Matrix select_rows(const Matrix& m, const std::vector<Index>& rows) {
    Matrix out(idx(rows.size()), m.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) out.row(idx(i)) = m.row(rows[i]);
    return out;
}

Vector select_entries(const Vector& v, const std::vector<Index>& rows) {
    Vector out(idx(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) out(idx(i)) = v(rows[i]);
    return out;
}

Matrix select_cols(const Matrix& m, const std::vector<Index>& cols) {
    Matrix out(m.rows(), idx(cols.size()));
    for (std::size_t i = 0; i < cols.size(); ++i) out.col(idx(i)) = m.col(cols[i]);
    return out;
}

void hash_bytes(std::uint64_t& h, const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
}

void hash_matrix(std::uint64_t& h, const Matrix& m) {
    const Index dims[2] = {m.rows(), m.cols()};
    hash_bytes(h, dims, sizeof(dims));
    for (Index j = 0; j < m.cols(); ++j)
        for (Index i = 0; i < m.rows(); ++i) {
            double v = m(i, j);
            if (v == 0.0) v = 0.0;  // fold -0.0
            hash_bytes(h, &v, sizeof(v));
        }
}

// Assembles the QP for the lines listed in `lines` using the given PTDF rows.
MarketQP build(const NetworkCase& net, const Matrix& ptdf, const std::vector<std::size_t>& line_ids,
               const std::vector<std::size_t>& gen_ids) {
    const Index ng = idx(gen_ids.size());
    const Index nd = idx(net.num_loads());
    const Index nl = idx(line_ids.size());
    const Index nb = idx(net.num_buses());
    const Index nx = ng + nd;
    const Index rows = 1 + 2 * nl + 2 * ng + 2 * nd;

    Matrix mp_full = net.generator_incidence();
    Matrix mp(nb, ng);
    for (Index g = 0; g < ng; ++g) mp.col(g) = mp_full.col(idx(gen_ids[static_cast<std::size_t>(g)]));
    const Matrix ml = net.load_incidence();
    const Vector l = net.mean_demand();

    MarketQP qp;
    qp.generator_ids = gen_ids;
    qp.line_ids = line_ids;
    qp.num_loads = net.num_loads();

    qp.Q = Matrix::Zero(nx, nx);
    qp.q = Vector::Zero(nx);
    for (Index g = 0; g < ng; ++g) {
        const auto& gen = net.generators[gen_ids[static_cast<std::size_t>(g)]];
        qp.Q(g, g) = gen.cost_quadratic;
        qp.q(g) = gen.cost_linear;
    }
    qp.Q.bottomRightCorner(nd, nd) = net.shed_quadratic;
    qp.q.tail(nd) = net.shed_linear;

    qp.A = Matrix::Zero(rows, nx);
    qp.B = Matrix::Zero(rows, nd);
    qp.b = Vector::Zero(rows);
    qp.Lambda = Matrix::Zero(nb, rows);
    qp.row_labels.reserve(static_cast<std::size_t>(rows));

    const Matrix fmp = ptdf * mp;  // nl x ng
    const Matrix fml = ptdf * ml;  // nl x nd
    const Vector fml_l = fml * l;

    Index r = 0;
    // Supply covers demand: -1'p - 1'l_shed <= -1'(l + xi).
    qp.A.row(r).head(ng).setConstant(-1.0);
    qp.A.row(r).tail(nd).setConstant(-1.0);
    qp.B.row(r).setConstant(-1.0);
    qp.b(r) = -l.sum();
    qp.Lambda.col(r).setOnes();
    qp.row_labels.push_back({RowKind::Balance, 0});
    ++r;
    for (Index k = 0; k < nl; ++k, ++r) {
        qp.A.row(r).head(ng) = fmp.row(k);
        qp.A.row(r).tail(nd) = fml.row(k);
        qp.B.row(r) = fml.row(k);
        qp.b(r) = fml_l(k) + net.lines[line_ids[static_cast<std::size_t>(k)]].flow_limit;
        qp.Lambda.col(r) = -ptdf.row(k).transpose();
        qp.row_labels.push_back({RowKind::FlowUpper, line_ids[static_cast<std::size_t>(k)]});
    }
    for (Index k = 0; k < nl; ++k, ++r) {
        qp.A.row(r).head(ng) = -fmp.row(k);
        qp.A.row(r).tail(nd) = -fml.row(k);
        qp.B.row(r) = -fml.row(k);
        qp.b(r) = -fml_l(k) + net.lines[line_ids[static_cast<std::size_t>(k)]].flow_limit;
        qp.Lambda.col(r) = ptdf.row(k).transpose();
        qp.row_labels.push_back({RowKind::FlowLower, line_ids[static_cast<std::size_t>(k)]});
    }
    for (Index g = 0; g < ng; ++g, ++r) {
        qp.A(r, g) = 1.0;
        qp.b(r) = net.generators[gen_ids[static_cast<std::size_t>(g)]].p_max;
        qp.row_labels.push_back({RowKind::GenUpper, gen_ids[static_cast<std::size_t>(g)]});
    }
    const Matrix mlml = ml.transpose() * ml;
    for (Index d = 0; d < nd; ++d, ++r) {
        qp.A(r, ng + d) = 1.0;
        qp.B.row(r) = mlml.row(d);
        qp.b(r) = l(d);
        qp.row_labels.push_back({RowKind::ShedUpper, static_cast<std::size_t>(d)});
    }
    for (Index g = 0; g < ng; ++g, ++r) {
        qp.A(r, g) = -1.0;
        qp.b(r) = -net.generators[gen_ids[static_cast<std::size_t>(g)]].p_min;
        qp.row_labels.push_back({RowKind::GenLower, gen_ids[static_cast<std::size_t>(g)]});
    }
    for (Index d = 0; d < nd; ++d, ++r) {
        qp.A(r, ng + d) = -1.0;
        qp.row_labels.push_back({RowKind::ShedLower, static_cast<std::size_t>(d)});
    }
    return qp;
}

std::vector<std::size_t> iota_ids(std::size_t n) {
    std::vector<std::size_t> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = i;
    return v;
}

}  // namespace

std::string RowLabel::str() const {
    const std::string e = std::to_string(element + 1);
    switch (kind) {
        case RowKind::Balance: return "balance";
        case RowKind::FlowUpper: return "flow-upper(" + e + ")";
        case RowKind::FlowLower: return "flow-lower(" + e + ")";
        case RowKind::GenUpper: return "gen-upper(" + e + ")";
        case RowKind::ShedUpper: return "shed-upper(" + e + ")";
        case RowKind::GenLower: return "gen-lower(" + e + ")";
        case RowKind::ShedLower: return "shed-lower(" + e + ")";
    }
    return "?";
}

std::string OutageSpec::id() const {
    return (kind == OutageKind::Line ? "line" : "gen") + std::to_string(element + 1);
}

OutageSpec OutageSpec::parse(const std::string& text) {
    std::string s;
    for (char c : text)
        if (c != ':' && c != ' ') s.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    OutageSpec spec;
    std::string number;
    if (s.rfind("line", 0) == 0) {
        spec.kind = OutageKind::Line;
        number = s.substr(4);
    } else if (s.rfind("gen", 0) == 0) {
        spec.kind = OutageKind::Generator;
        number = s.substr(3);
    } else {
        throw InputError("outage spec must look like line3 or gen2, got '" + text + "'");
    }
    if (number.empty() || !std::all_of(number.begin(), number.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); }))
        throw InputError("outage spec must look like line3 or gen2, got '" + text + "'");
    const auto n = std::stoul(number);
    if (n == 0) throw InputError("outage element numbers are 1-based: '" + text + "'");
    spec.element = n - 1;
    return spec;
}

std::uint64_t MarketQP::content_hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const Matrix* m : {&Q, &A, &B, &Lambda}) hash_matrix(h, *m);
    hash_matrix(h, q);
    hash_matrix(h, b);
    for (const auto& lbl : row_labels) {
        const std::uint64_t packed[2] = {static_cast<std::uint64_t>(lbl.kind), lbl.element};
        hash_bytes(h, packed, sizeof(packed));
    }
    hash_bytes(h, structure_id.data(), structure_id.size());
    return h;
}

void MarketQP::validate() const {
    const Index n = Q.rows();
    if (Q.cols() != n || q.size() != n || A.cols() != n) throw InputError("MarketQP: inconsistent variable dimension");
    if (B.rows() != A.rows() || b.size() != A.rows() || idx(row_labels.size()) != A.rows() || Lambda.cols() != A.rows())
        throw InputError("MarketQP: inconsistent row count");
    if (!Q.isApprox(Q.transpose(), 1e-12)) throw NumericError("MarketQP: Q is not symmetric");
    Eigen::SelfAdjointEigenSolver<Matrix> eig(Q, Eigen::EigenvaluesOnly);
    if (!(eig.eigenvalues().minCoeff() > 0.0)) throw NumericError("MarketQP: Q is not positive definite");
}

MarketQP assemble_qp(const NetworkCase& net) {
    net.validate();
    Eigen::SelfAdjointEigenSolver<Matrix> eig(net.shed_quadratic, Eigen::EigenvaluesOnly);
    if (net.num_loads() > 0 && !(eig.eigenvalues().minCoeff() > 0.0))
        throw NumericError("shed quadratic cost S is not positive definite");
    auto qp = build(net, compute_ptdf(net), iota_ids(net.num_lines()), iota_ids(net.num_generators()));
    qp.validate();
    return qp;
}

MarketQP apply_outage(const MarketQP& qp, const NetworkCase& net, const OutageSpec& spec, const MarketOptions& options) {
    if (spec.kind == OutageKind::Line) {
        if (spec.element >= net.num_lines()) throw InputError("unknown line " + std::to_string(spec.element + 1));
        auto pos = std::find(qp.line_ids.begin(), qp.line_ids.end(), spec.element);
        if (pos == qp.line_ids.end())
            throw InputError("line " + std::to_string(spec.element + 1) + " is already out of service");
        if (!is_connected(net, spec.element))
            throw StructuralError("outage of line " + std::to_string(spec.element + 1) + " islands the network");

        std::vector<std::size_t> remaining;
        for (auto id : qp.line_ids)
            if (id != spec.element) remaining.push_back(id);

        if (options.recompute_ptdf) {
            // Physical variant: flows redistribute over the reduced topology.
            NetworkCase reduced = net;
            Matrix full_ptdf = compute_ptdf(net.without_lines({spec.element}));
            // Rows of the reduced PTDF follow the reduced line order; map back to original ids.
            std::vector<std::size_t> kept_all;
            for (std::size_t k = 0; k < net.num_lines(); ++k)
                if (k != spec.element) kept_all.push_back(k);
            Matrix ptdf(idx(remaining.size()), full_ptdf.cols());
            for (std::size_t i = 0; i < remaining.size(); ++i) {
                auto at = std::find(kept_all.begin(), kept_all.end(), remaining[i]) - kept_all.begin();
                ptdf.row(idx(i)) = full_ptdf.row(at);
            }
            auto out = build(reduced, ptdf, remaining, qp.generator_ids);
            out.structure_id = spec.id();
            out.validate();
            return out;
        }

        std::vector<Index> keep_rows;
        for (Index r = 0; r < qp.num_rows(); ++r) {
            const auto& lbl = qp.row_labels[static_cast<std::size_t>(r)];
            if (!(lbl.is_flow() && lbl.element == spec.element)) keep_rows.push_back(r);
        }
        MarketQP out = qp;
        out.A = select_rows(qp.A, keep_rows);
        out.B = select_rows(qp.B, keep_rows);
        out.b = select_entries(qp.b, keep_rows);
        out.Lambda = select_cols(qp.Lambda, keep_rows);
        out.row_labels.clear();
        for (auto r : keep_rows) out.row_labels.push_back(qp.row_labels[static_cast<std::size_t>(r)]);
        out.line_ids = remaining;
        out.structure_id = spec.id();
        out.validate();
        return out;
    }

    if (spec.element >= net.num_generators()) throw InputError("unknown generator " + std::to_string(spec.element + 1));
    auto pos = std::find(qp.generator_ids.begin(), qp.generator_ids.end(), spec.element);
    if (pos == qp.generator_ids.end())
        throw InputError("generator " + std::to_string(spec.element + 1) + " is already out of service");
    const Index col = pos - qp.generator_ids.begin();

    std::vector<Index> keep_cols;
    for (Index c = 0; c < qp.num_vars(); ++c)
        if (c != col) keep_cols.push_back(c);
    std::vector<Index> keep_rows;
    for (Index r = 0; r < qp.num_rows(); ++r) {
        const auto& lbl = qp.row_labels[static_cast<std::size_t>(r)];
        const bool gen_row = lbl.kind == RowKind::GenUpper || lbl.kind == RowKind::GenLower;
        if (!(gen_row && lbl.element == spec.element)) keep_rows.push_back(r);
    }

    MarketQP out = qp;
    out.Q = select_cols(select_rows(qp.Q, keep_cols), keep_cols);
    out.q = select_entries(qp.q, keep_cols);
    out.A = select_cols(select_rows(qp.A, keep_rows), keep_cols);
    out.B = select_rows(qp.B, keep_rows);
    out.b = select_entries(qp.b, keep_rows);
    out.Lambda = select_cols(qp.Lambda, keep_rows);
    out.row_labels.clear();
    for (auto r : keep_rows) out.row_labels.push_back(qp.row_labels[static_cast<std::size_t>(r)]);
    out.generator_ids.erase(out.generator_ids.begin() + col);
    out.structure_id = spec.id();
    out.validate();
    return out;
}

}  // namespace gridqcd
