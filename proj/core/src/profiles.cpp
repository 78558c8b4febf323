#include "cellcontrast/profiles.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "binio.hpp"
#include "csv.hpp"
#include "cellcontrast/errors.hpp"

namespace cellcontrast::profiles {

namespace {

bool same_vector(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    return a.size() == b.size() && std::equal(a.data(), a.data() + a.size(), b.data());
}

}

bool operator==(const TreatmentProfile& a, const TreatmentProfile& b) {
    return a.compound == b.compound && a.concentration == b.concentration && a.moa == b.moa && a.batches == b.batches &&
        a.n_cells == b.n_cells && same_vector(a.vector, b.vector);
}

bool operator==(const ControlProfile& a, const ControlProfile& b) {
    return a.batch == b.batch && a.well == b.well && a.n_cells == b.n_cells && same_vector(a.vector, b.vector);
}

std::size_t ProfileSet::dim() const {
    if (!treatments.empty()) {
        return static_cast<std::size_t>(treatments.front().vector.size());
    }
    if (!controls.empty()) {
        return static_cast<std::size_t>(controls.front().vector.size());
    }
    return 0;
}

// Embedding matrix container.

std::filesystem::path sidecar_path(const std::filesystem::path& path) {
    return std::filesystem::path(path.string() + ".ids.csv");
}

namespace {

constexpr std::string_view embedding_magic = "EMBF1";

}

void write_embeddings(const std::filesystem::path& path, const EmbeddingMatrix& m) {
    if (m.values.size() != m.rows * m.cols || m.cell_ids.size() != m.rows) {
        throw std::invalid_argument("embedding matrix dimensions do not match its payload or id list");
    }
    {
        std::ofstream out(path, std::ios::binary);
        if (!out) {
            throw IoError("cannot open embeddings for writing: " + path.string());
        }
        binio::write_magic(out, embedding_magic);
        binio::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(m.rows));
        binio::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(m.cols));
        for (auto v : m.values) {
            binio::write_f32(out, v);
        }
        if (!out) {
            throw IoError("failed writing embeddings: " + path.string());
        }
    }
    std::ofstream ids(sidecar_path(path));
    if (!ids) {
        throw IoError("cannot open embedding id sidecar for writing: " + sidecar_path(path).string());
    }
    ids << "cell_id\n";
    for (const auto& id : m.cell_ids) {
        ids << csv::checked_field(id, "cell_id") << '\n';
    }
}

EmbeddingMatrix read_embeddings(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open embeddings: " + path.string());
    }
    binio::expect_magic(in, embedding_magic, "embedding matrix");
    EmbeddingMatrix m;
    m.rows = binio::read_le<std::uint32_t>(in, "embedding rows");
    m.cols = binio::read_le<std::uint32_t>(in, "embedding cols");
    m.values.resize(m.rows * m.cols);
    for (auto& v : m.values) {
        v = binio::read_f32(in, "embedding payload");
    }
    if (in.peek() != std::char_traits<char>::eof()) {
        throw IoError("embedding matrix: trailing bytes after payload");
    }

    std::ifstream ids(sidecar_path(path));
    if (!ids) {
        throw IoError("cannot open embedding id sidecar: " + sidecar_path(path).string());
    }
    std::string line;
    if (!std::getline(ids, line) || (line != "cell_id" && line != "cell_id\r")) {
        throw IoError("embedding id sidecar: expected header 'cell_id'");
    }
    while (std::getline(ids, line)) {
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (!line.empty()) {
            m.cell_ids.push_back(line);
        }
    }
    if (m.cell_ids.size() != m.rows) {
        throw IoError("embedding id sidecar lists " + std::to_string(m.cell_ids.size()) + " ids for " +
            std::to_string(m.rows) + " rows");
    }
    return m;
}

// Aggregation.

Aggregation parse_aggregation(std::string_view name) {
    if (name == "mean") {
        return Aggregation::mean;
    }
    if (name == "median") {
        return Aggregation::median;
    }
    throw ConfigError("unknown aggregation '" + std::string(name) + "' (expected mean or median)");
}

std::string to_string(Aggregation a) {
    return a == Aggregation::mean ? "mean" : "median";
}

namespace {

Eigen::VectorXd reduce(const EmbeddingMatrix& e, std::vector<std::size_t> rows, Aggregation statistic,
                       const std::vector<std::string>& ids) {
    std::sort(rows.begin(), rows.end(), [&](std::size_t a, std::size_t b) { return ids[a] < ids[b]; });
    Eigen::VectorXd out(static_cast<Eigen::Index>(e.cols));
    if (statistic == Aggregation::mean) {
        out.setZero();
        for (auto r : rows) {
            const auto v = e.row(r);
            for (std::size_t j = 0; j < e.cols; ++j) {
                out[static_cast<Eigen::Index>(j)] += static_cast<double>(v[j]);
            }
        }
        out /= static_cast<double>(rows.size());
        return out;
    }
    std::vector<double> column(rows.size());
    for (std::size_t j = 0; j < e.cols; ++j) {
        for (std::size_t i = 0; i < rows.size(); ++i) {
            column[i] = e.row(rows[i])[j];
        }
        std::sort(column.begin(), column.end());
        const auto n = column.size();
        out[static_cast<Eigen::Index>(j)] = n % 2 == 1 ? column[n / 2] : 0.5 * (column[n / 2 - 1] + column[n / 2]);
    }
    return out;
}

}

ProfileSet aggregate(const EmbeddingMatrix& embeddings, const dataio::Manifest& manifest, Aggregation statistic) {
    if (embeddings.values.size() != embeddings.rows * embeddings.cols || embeddings.cell_ids.size() != embeddings.rows) {
        throw std::invalid_argument("embedding matrix dimensions do not match its payload or id list");
    }
    std::unordered_map<std::string, const dataio::CellRecord*> by_id;
    for (const auto& r : manifest.rows) {
        by_id.emplace(r.cell_id, &r);
    }

    struct Group {
        std::vector<std::size_t> rows;
        std::set<std::string> batches;
        std::string moa;
    };
    std::map<TreatmentKey, Group> treatments;
    std::map<std::pair<std::string, std::string>, std::vector<std::size_t>> controls;

    for (std::size_t i = 0; i < embeddings.rows; ++i) {
        const auto it = by_id.find(embeddings.cell_ids[i]);
        if (it == by_id.end()) {
            throw std::invalid_argument("embedding row '" + embeddings.cell_ids[i] + "' has no manifest entry");
        }
        const auto& rec = *it->second;
        if (rec.is_control) {
            controls[{rec.batch, rec.well}].push_back(i);
            continue;
        }
        auto& g = treatments[{rec.compound, rec.concentration}];
        if (!g.rows.empty() && g.moa != rec.moa) {
            throw std::invalid_argument("treatment " + rec.compound + "@" + rec.concentration + " has conflicting MOA labels '" +
                g.moa + "' and '" + rec.moa + "'");
        }
        g.rows.push_back(i);
        g.batches.insert(rec.batch);
        g.moa = rec.moa;
    }

    ProfileSet out;
    for (auto& [key, g] : treatments) {
        TreatmentProfile p;
        p.compound = key.compound;
        p.concentration = key.concentration;
        p.moa = g.moa;
        p.batches = g.batches;
        p.n_cells = g.rows.size();
        p.vector = reduce(embeddings, std::move(g.rows), statistic, embeddings.cell_ids);
        out.treatments.push_back(std::move(p));
    }
    for (auto& [key, rows] : controls) {
        ControlProfile c;
        c.batch = key.first;
        c.well = key.second;
        c.n_cells = rows.size();
        c.vector = reduce(embeddings, std::move(rows), statistic, embeddings.cell_ids);
        out.controls.push_back(std::move(c));
    }
    return out;
}

// Whitening and CORAL.

Eigen::MatrixXd population_covariance(const Eigen::MatrixXd& x) {
    if (x.rows() == 0) {
        throw std::invalid_argument("covariance of an empty set");
    }
    const Eigen::RowVectorXd mu = x.colwise().mean();
    const Eigen::MatrixXd centered = x.rowwise() - mu;
    return (centered.transpose() * centered) / static_cast<double>(x.rows());
}

Eigen::MatrixXd symmetric_power(const Eigen::MatrixXd& s, double p) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(s);
    if (solver.info() != Eigen::Success) {
        throw NumericError("eigendecomposition failed");
    }
    Eigen::VectorXd d = solver.eigenvalues();
    for (Eigen::Index i = 0; i < d.size(); ++i) {
        const double lambda = std::max(d[i], 0.0);
        if (p < 0.0 && lambda == 0.0) {
            throw NumericError("negative power of a singular matrix");
        }
        d[i] = std::pow(lambda, p);
    }
    const auto& v = solver.eigenvectors();
    return v * d.asDiagonal() * v.transpose();
}

namespace {

Eigen::MatrixXd regularized(const Eigen::MatrixXd& cov, double eps_rel) {
    if (!(eps_rel > 0.0) || !std::isfinite(eps_rel)) {
        throw std::invalid_argument("eps_rel must be positive and finite");
    }
    const auto dim = static_cast<double>(cov.rows());
    const double eps = eps_rel * cov.trace() / dim;
    if (!(eps > 0.0)) {
        throw std::invalid_argument("control covariance has zero trace");
    }
    return cov + eps * Eigen::MatrixXd::Identity(cov.rows(), cov.cols());
}

}

Eigen::VectorXd WhiteningTransform::apply(const Eigen::VectorXd& x) const {
    return matrix * (x - mean);
}

WhiteningTransform fit_whitening(const Eigen::MatrixXd& controls, double eps_rel) {
    if (controls.rows() < 2) {
        throw std::invalid_argument("whitening needs at least 2 control vectors, got " + std::to_string(controls.rows()));
    }
    WhiteningTransform t;
    t.mean = controls.colwise().mean().transpose();
    t.matrix = symmetric_power(regularized(population_covariance(controls), eps_rel), -0.5);
    return t;
}

Eigen::VectorXd CoralTransform::apply(const std::string& batch, const Eigen::VectorXd& x) const {
    const auto it = batches.find(batch);
    if (it == batches.end()) {
        return x;
    }
    return it->second.matrix.transpose() * (x - it->second.mean) + global_mean;
}

Eigen::VectorXd CoralTransform::apply(const std::set<std::string>& names, const Eigen::VectorXd& x) const {
    if (names.empty()) {
        return x;
    }
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(x.size());
    for (const auto& b : names) {
        acc += apply(b, x);
    }
    return acc / static_cast<double>(names.size());
}

CoralTransform fit_coral(const std::map<std::string, Eigen::MatrixXd>& batch_controls, const Eigen::MatrixXd& target,
                         double eps_rel) {
    if (target.rows() != target.cols()) {
        throw std::invalid_argument("CORAL target covariance must be square");
    }
    const Eigen::MatrixXd target_root = symmetric_power(target, 0.5);
    CoralTransform t;
    t.global_mean = Eigen::VectorXd::Zero(target.rows());
    Eigen::Index total = 0;
    for (const auto& [name, rows] : batch_controls) {
        if (rows.rows() < 2) {
            throw std::invalid_argument("CORAL needs at least 2 control vectors in batch '" + name + "', got " +
                std::to_string(rows.rows()));
        }
        if (rows.cols() != target.rows()) {
            throw std::invalid_argument("CORAL controls of batch '" + name + "' have dimension " + std::to_string(rows.cols()) +
                ", target has " + std::to_string(target.rows()));
        }
        CoralBatch b;
        b.mean = rows.colwise().mean().transpose();
        b.matrix = symmetric_power(regularized(population_covariance(rows), eps_rel), -0.5) * target_root;
        t.global_mean += rows.colwise().sum().transpose();
        total += rows.rows();
        t.batches.emplace(name, std::move(b));
    }
    if (total > 0) {
        t.global_mean /= static_cast<double>(total);
    }
    return t;
}

PostprocessMode parse_postprocess_mode(std::string_view name) {
    if (name == "none") {
        return PostprocessMode::none;
    }
    if (name == "whitening") {
        return PostprocessMode::whitening;
    }
    if (name == "tvn") {
        return PostprocessMode::tvn;
    }
    throw ConfigError("unknown postprocess mode '" + std::string(name) + "' (expected none, whitening or tvn)");
}

std::string to_string(PostprocessMode mode) {
    switch (mode) {
        case PostprocessMode::none: return "none";
        case PostprocessMode::whitening: return "whitening";
        case PostprocessMode::tvn: return "tvn";
    }
    return "none";
}

ProfileSet postprocess(const ProfileSet& profiles, PostprocessMode mode, double eps_rel, std::vector<std::string>* warnings) {
    if (mode == PostprocessMode::none) {
        return profiles;
    }
    if (profiles.controls.size() < 2) {
        throw std::invalid_argument(to_string(mode) + " post-processing needs at least 2 control profiles, got " +
            std::to_string(profiles.controls.size()));
    }
    const auto dim = static_cast<Eigen::Index>(profiles.dim());
    Eigen::MatrixXd controls(static_cast<Eigen::Index>(profiles.controls.size()), dim);
    for (std::size_t i = 0; i < profiles.controls.size(); ++i) {
        controls.row(static_cast<Eigen::Index>(i)) = profiles.controls[i].vector.transpose();
    }
    const auto whitening = fit_whitening(controls, eps_rel);

    ProfileSet out = profiles;
    for (auto& c : out.controls) {
        c.vector = whitening.apply(c.vector);
    }
    for (auto& t : out.treatments) {
        t.vector = whitening.apply(t.vector);
    }
    if (mode == PostprocessMode::whitening) {
        return out;
    }

    std::map<std::string, std::vector<Eigen::VectorXd>> grouped;
    for (const auto& c : out.controls) {
        grouped[c.batch].push_back(c.vector);
    }
    std::map<std::string, Eigen::MatrixXd> batch_controls;
    for (const auto& [name, vs] : grouped) {
        Eigen::MatrixXd m(static_cast<Eigen::Index>(vs.size()), dim);
        for (std::size_t i = 0; i < vs.size(); ++i) {
            m.row(static_cast<Eigen::Index>(i)) = vs[i].transpose();
        }
        batch_controls.emplace(name, std::move(m));
    }
    const auto coral = fit_coral(batch_controls, Eigen::MatrixXd::Identity(dim, dim), eps_rel);

    std::set<std::string> missing;
    for (auto& t : out.treatments) {
        for (const auto& b : t.batches) {
            if (!coral.batches.contains(b)) {
                missing.insert(b);
            }
        }
        t.vector = coral.apply(t.batches, t.vector);
    }
    for (auto& c : out.controls) {
        c.vector = coral.apply(c.batch, c.vector);
    }
    if (warnings) {
        for (const auto& b : missing) {
            warnings->push_back("batch '" + b + "' has no control profiles; CORAL leaves it unaligned");
        }
    }
    return out;
}

// Profile CSV files.

namespace {

std::string format_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

double parse_double(const std::string& s, const char* what) {
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
        throw IoError(std::string(what) + ": cannot parse number '" + s + "'");
    }
    return v;
}

std::size_t parse_count(const std::string& s, const char* what) {
    std::size_t v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
        throw IoError(std::string(what) + ": cannot parse count '" + s + "'");
    }
    return v;
}

void write_vector_header(std::ostream& out, std::size_t dim) {
    for (std::size_t j = 0; j < dim; ++j) {
        out << ",v" << j;
    }
    out << '\n';
}

void write_vector(std::ostream& out, const Eigen::VectorXd& v) {
    for (Eigen::Index j = 0; j < v.size(); ++j) {
        out << ',' << format_double(v[j]);
    }
    out << '\n';
}

std::size_t check_header(const std::vector<std::string>& header, const std::vector<std::string>& fixed, const char* what) {
    if (header.size() < fixed.size() || !std::equal(fixed.begin(), fixed.end(), header.begin())) {
        throw IoError(std::string(what) + ": unexpected header");
    }
    for (std::size_t j = fixed.size(); j < header.size(); ++j) {
        if (header[j] != "v" + std::to_string(j - fixed.size())) {
            throw IoError(std::string(what) + ": unexpected header column '" + header[j] + "'");
        }
    }
    return header.size() - fixed.size();
}

Eigen::VectorXd read_vector(const std::vector<std::string>& fields, std::size_t offset, const char* what) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(fields.size() - offset));
    for (std::size_t j = offset; j < fields.size(); ++j) {
        v[static_cast<Eigen::Index>(j - offset)] = parse_double(fields[j], what);
    }
    return v;
}

template<typename Row>
std::vector<Row> read_rows(std::istream& in, const std::vector<std::string>& fixed, const char* what,
                           Row (*parse)(const std::vector<std::string>&)) {
    std::string line;
    if (!std::getline(in, line)) {
        throw IoError(std::string(what) + ": file is empty");
    }
    const auto dim = check_header(csv::split(line), fixed, what);
    std::vector<Row> rows;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") {
            continue;
        }
        auto f = csv::split(line);
        if (f.size() != fixed.size() + dim) {
            throw IoError(std::string(what) + " line " + std::to_string(lineno) + ": expected " +
                std::to_string(fixed.size() + dim) + " fields, got " + std::to_string(f.size()));
        }
        rows.push_back(parse(f));
    }
    return rows;
}

const std::vector<std::string> treatment_columns = {"compound", "concentration", "moa", "batches", "n_cells"};
const std::vector<std::string> control_columns = {"batch", "well", "n_cells"};

}

void write_treatment_profiles(std::ostream& out, std::span<const TreatmentProfile> profiles) {
    const auto dim = profiles.empty() ? 0 : static_cast<std::size_t>(profiles.front().vector.size());
    out << "compound,concentration,moa,batches,n_cells";
    write_vector_header(out, dim);
    for (const auto& p : profiles) {
        if (static_cast<std::size_t>(p.vector.size()) != dim) {
            throw std::invalid_argument("treatment profiles have mixed dimensions");
        }
        std::string batches;
        for (const auto& b : p.batches) {
            if (b.find(';') != std::string::npos) {
                throw IoError("batch id '" + b + "' contains ';'");
            }
            batches += (batches.empty() ? "" : ";") + b;
        }
        out << csv::checked_field(p.compound, "compound") << ',' << csv::checked_field(p.concentration, "concentration") << ','
            << csv::checked_field(p.moa, "moa") << ',' << csv::checked_field(batches, "batches") << ',' << p.n_cells;
        write_vector(out, p.vector);
    }
}

std::vector<TreatmentProfile> read_treatment_profiles(std::istream& in) {
    return read_rows<TreatmentProfile>(in, treatment_columns, "treatment profiles", [](const std::vector<std::string>& f) {
        TreatmentProfile p;
        p.compound = f[0];
        p.concentration = f[1];
        p.moa = f[2];
        std::stringstream ss(f[3]);
        std::string b;
        while (std::getline(ss, b, ';')) {
            if (!b.empty()) {
                p.batches.insert(b);
            }
        }
        p.n_cells = parse_count(f[4], "treatment profiles");
        p.vector = read_vector(f, 5, "treatment profiles");
        return p;
    });
}

void write_control_profiles(std::ostream& out, std::span<const ControlProfile> profiles) {
    const auto dim = profiles.empty() ? 0 : static_cast<std::size_t>(profiles.front().vector.size());
    out << "batch,well,n_cells";
    write_vector_header(out, dim);
    for (const auto& c : profiles) {
        if (static_cast<std::size_t>(c.vector.size()) != dim) {
            throw std::invalid_argument("control profiles have mixed dimensions");
        }
        out << csv::checked_field(c.batch, "batch") << ',' << csv::checked_field(c.well, "well") << ',' << c.n_cells;
        write_vector(out, c.vector);
    }
}

std::vector<ControlProfile> read_control_profiles(std::istream& in) {
    return read_rows<ControlProfile>(in, control_columns, "control profiles", [](const std::vector<std::string>& f) {
        ControlProfile c;
        c.batch = f[0];
        c.well = f[1];
        c.n_cells = parse_count(f[2], "control profiles");
        c.vector = read_vector(f, 3, "control profiles");
        return c;
    });
}

std::filesystem::path controls_path(const std::filesystem::path& path) {
    return std::filesystem::path(path.string() + ".controls.csv");
}

void write_profile_set(const std::filesystem::path& path, const ProfileSet& profiles) {
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot open profiles for writing: " + path.string());
    }
    write_treatment_profiles(out, profiles.treatments);
    std::ofstream ctrl(controls_path(path));
    if (!ctrl) {
        throw IoError("cannot open control profiles for writing: " + controls_path(path).string());
    }
    write_control_profiles(ctrl, profiles.controls);
    if (!out || !ctrl) {
        throw IoError("failed writing profiles: " + path.string());
    }
}

ProfileSet read_profile_set(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open profiles: " + path.string());
    }
    ProfileSet set;
    set.treatments = read_treatment_profiles(in);
    std::ifstream ctrl(controls_path(path));
    if (ctrl) {
        set.controls = read_control_profiles(ctrl);
    }
    return set;
}

}
