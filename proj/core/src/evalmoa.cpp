#include "cellcontrast/evalmoa.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "cellcontrast/parallel.hpp"

namespace cellcontrast::evalmoa {

using profiles::TreatmentProfile;

namespace {

double norm(const Eigen::VectorXd& v) {
    return std::sqrt(v.dot(v));
}

double distance_from_norms(const Eigen::VectorXd& u, const Eigen::VectorXd& v, double nu, double nv) {
    return 1.0 - u.dot(v) / (nu * nv);
}

void require_two_compounds(std::span<const TreatmentProfile> profiles) {
    for (const auto& p : profiles) {
        if (p.compound != profiles.front().compound) {
            return;
        }
    }
    throw std::invalid_argument("MOA matching needs at least 2 distinct compounds");
}

bool disjoint(const std::set<std::string>& a, const std::set<std::string>& b) {
    auto i = a.begin();
    auto j = b.begin();
    while (i != a.end() && j != b.end()) {
        if (*i == *j) {
            return false;
        }
        *i < *j ? ++i : ++j;
    }
    return true;
}

}

double cosine_distance(const Eigen::VectorXd& u, const Eigen::VectorXd& v) {
    if (u.size() != v.size()) {
        throw std::invalid_argument("cosine_distance: dimension mismatch");
    }
    const double nu = norm(u);
    const double nv = norm(v);
    if (nu == 0.0 || nv == 0.0) {
        throw std::domain_error("cosine_distance: zero vector");
    }
    return distance_from_norms(u, v, nu, nv);
}

std::string to_string(MatchRule rule) {
    return rule == MatchRule::nsc ? "nsc" : "nscb";
}

std::vector<Assignment> assign(std::span<const TreatmentProfile> profiles, MatchRule rule) {
    require_two_compounds(profiles);
    const auto n = profiles.size();

    // Visit candidates in key order so a strict improvement test keeps the smallest key on ties.
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return profiles[a].key() < profiles[b].key(); });

    std::map<std::string, int> compound_ids;
    std::map<std::string, std::size_t> batch_ids;
    std::vector<int> compound(n);
    std::vector<std::vector<std::size_t>> batches(n);
    std::vector<double> norms(n);
    for (std::size_t i = 0; i < n; ++i) {
        compound[i] = compound_ids.emplace(profiles[i].compound, static_cast<int>(compound_ids.size())).first->second;
        for (const auto& b : profiles[i].batches) {
            batches[i].push_back(batch_ids.emplace(b, batch_ids.size()).first->second);
        }
        std::sort(batches[i].begin(), batches[i].end());
        norms[i] = norm(profiles[i].vector);
        if (norms[i] == 0.0) {
            throw std::domain_error("cosine_distance: zero vector");
        }
    }

    std::vector<Assignment> out(n);
    parallel_for(n, [&](std::size_t q) {
        Assignment best;
        for (auto c : order) {
            if (compound[c] == compound[q]) {
                continue;
            }
            if (rule == MatchRule::nscb) {
                std::vector<std::size_t> common;
                std::set_intersection(batches[q].begin(), batches[q].end(), batches[c].begin(), batches[c].end(),
                                      std::back_inserter(common));
                if (!common.empty()) {
                    continue;
                }
            }
            const double d = distance_from_norms(profiles[q].vector, profiles[c].vector, norms[q], norms[c]);
            if (!best.neighbor || d < best.distance) {
                best.neighbor = c;
                best.distance = d;
            }
        }
        out[q] = best;
    });
    return out;
}

std::vector<Assignment> oracle_assign(std::span<const TreatmentProfile> profiles, MatchRule rule) {
    require_two_compounds(profiles);
    const auto n = profiles.size();
    std::vector<std::vector<double>> dist(n, std::vector<double>(n));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            dist[i][j] = cosine_distance(profiles[i].vector, profiles[j].vector);
        }
    }
    std::vector<Assignment> out(n);
    for (std::size_t q = 0; q < n; ++q) {
        std::vector<std::size_t> candidates;
        for (std::size_t c = 0; c < n; ++c) {
            const bool same_compound = profiles[c].compound == profiles[q].compound;
            const bool shares_batch = !disjoint(profiles[c].batches, profiles[q].batches);
            if (!same_compound && (rule == MatchRule::nsc || !shares_batch)) {
                candidates.push_back(c);
            }
        }
        if (candidates.empty()) {
            continue;
        }
        double lowest = dist[q][candidates.front()];
        for (auto c : candidates) {
            lowest = std::min(lowest, dist[q][c]);
        }
        std::vector<std::size_t> tied;
        for (auto c : candidates) {
            if (dist[q][c] == lowest) {
                tied.push_back(c);
            }
        }
        const auto winner = *std::min_element(tied.begin(), tied.end(),
                                              [&](std::size_t a, std::size_t b) { return profiles[a].key() < profiles[b].key(); });
        out[q] = Assignment{winner, lowest};
    }
    return out;
}

EvalReport evaluate(std::span<const TreatmentProfile> profiles) {
    const auto nsc = assign(profiles, MatchRule::nsc);
    const auto nscb = assign(profiles, MatchRule::nscb);

    EvalReport report;
    std::size_t nsc_correct = 0;
    std::size_t nscb_correct = 0;
    auto fill = [&](Match& m, const Assignment& a, const TreatmentProfile& query, std::size_t& eligible, std::size_t& correct) {
        if (!a.neighbor) {
            return;
        }
        const auto& nb = profiles[*a.neighbor];
        m.eligible = true;
        m.neighbor = nb.key();
        m.assigned_moa = nb.moa;
        m.distance = a.distance;
        m.correct = nb.moa == query.moa;
        ++eligible;
        correct += m.correct ? 1 : 0;
    };
    for (std::size_t i = 0; i < profiles.size(); ++i) {
        ReportRow row;
        row.key = profiles[i].key();
        row.moa = profiles[i].moa;
        row.batches = profiles[i].batches;
        fill(row.nsc, nsc[i], profiles[i], report.nsc_eligible_count, nsc_correct);
        fill(row.nscb, nscb[i], profiles[i], report.nscb_eligible_count, nscb_correct);
        if (!row.nsc.eligible) {
            report.warnings.push_back("treatment " + row.key.compound + "@" + row.key.concentration +
                " has no NSC candidate and is excluded");
        }
        report.rows.push_back(std::move(row));
    }
    if (report.nsc_eligible_count > 0) {
        report.nsc_accuracy = static_cast<double>(nsc_correct) / static_cast<double>(report.nsc_eligible_count);
    }
    if (report.nscb_eligible_count > 0) {
        report.nscb_accuracy = static_cast<double>(nscb_correct) / static_cast<double>(report.nscb_eligible_count);
    } else {
        report.warnings.push_back("no treatment has an NSCB candidate; NSCB accuracy is undefined");
    }
    if (report.nsc_accuracy && report.nscb_accuracy) {
        report.drop = *report.nsc_accuracy - *report.nscb_accuracy;
    }
    return report;
}

namespace {

nlohmann::json optional_number(const std::optional<double>& v) {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

nlohmann::json match_json(const Match& m) {
    if (!m.eligible) {
        return {{"eligible", false}};
    }
    return {{"eligible", true},
            {"neighbor", {{"compound", m.neighbor.compound}, {"concentration", m.neighbor.concentration}}},
            {"assigned_moa", m.assigned_moa},
            {"distance", m.distance},
            {"correct", m.correct}};
}

}

std::string to_json(const EvalReport& report) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : report.rows) {
        rows.push_back({{"compound", r.key.compound},
                        {"concentration", r.key.concentration},
                        {"moa", r.moa},
                        {"batches", r.batches},
                        {"nsc", match_json(r.nsc)},
                        {"nscb", match_json(r.nscb)}});
    }
    nlohmann::json j = {{"nsc_accuracy", optional_number(report.nsc_accuracy)},
                        {"nscb_accuracy", optional_number(report.nscb_accuracy)},
                        {"drop", optional_number(report.drop)},
                        {"treatment_count", report.rows.size()},
                        {"nsc_eligible_count", report.nsc_eligible_count},
                        {"nscb_eligible_count", report.nscb_eligible_count},
                        {"rows", rows},
                        {"warnings", report.warnings}};
    return j.dump(2) + "\n";
}

std::string format_table(const EvalReport& report) {
    std::size_t width = std::string("treatment").size();
    for (const auto& r : report.rows) {
        width = std::max(width, r.key.compound.size() + 1 + r.key.concentration.size());
    }
    auto cell = [](const Match& m) {
        if (!m.eligible) {
            return std::string("-");
        }
        return m.assigned_moa + (m.correct ? " ok" : " x");
    };
    std::ostringstream os;
    os << std::left << std::setw(static_cast<int>(width)) << "treatment" << "  " << std::setw(12) << "moa" << "  "
       << std::setw(16) << "nsc" << "  " << "nscb" << '\n';
    for (const auto& r : report.rows) {
        os << std::setw(static_cast<int>(width)) << (r.key.compound + "@" + r.key.concentration) << "  " << std::setw(12) << r.moa
           << "  " << std::setw(16) << cell(r.nsc) << "  " << cell(r.nscb) << '\n';
    }
    auto pct = [](const std::optional<double>& v) {
        if (!v) {
            return std::string("n/a");
        }
        std::ostringstream s;
        s << std::fixed << std::setprecision(1) << 100.0 * *v << "%";
        return s.str();
    };
    os << "NSC  accuracy: " << pct(report.nsc_accuracy) << " over " << report.nsc_eligible_count << " treatments\n";
    os << "NSCB accuracy: " << pct(report.nscb_accuracy) << " over " << report.nscb_eligible_count << " treatments\n";
    os << "drop:          " << pct(report.drop) << '\n';
    return os.str();
}

}
