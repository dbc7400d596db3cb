#include "ntdlab/problems.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "ntdlab/error.hpp"
#include "ntdlab/stochastic.hpp"

namespace ntdlab {

namespace {

using nlohmann::json;

constexpr double kLoadTolerance = 1e-9;

std::string where(const std::string& field, std::initializer_list<std::size_t> idx) {
    std::string out = field;
    for (std::size_t i : idx) out += "[" + std::to_string(i) + "]";
    return out;
}

const json& require(const json& doc, const char* key) {
    if (!doc.contains(key)) throw ConfigError(std::string("missing field '") + key + "'");
    return doc.at(key);
}

double as_number(const json& v, const std::string& field) {
    if (!v.is_number()) throw ConfigError("field '" + field + "' must be a number");
    return v.get<double>();
}

int as_positive_int(const json& v, const std::string& field) {
    if (!v.is_number_integer() || v.get<long long>() < 1) {
        throw ConfigError("field '" + field + "' must be a positive integer");
    }
    return v.get<int>();
}

const json& as_array(const json& v, std::size_t expected, const std::string& field) {
    if (!v.is_array()) throw ConfigError("field '" + field + "' must be an array");
    if (v.size() != expected) {
        throw ConfigError("field '" + field + "' has " + std::to_string(v.size()) +
                          " entries, expected " + std::to_string(expected));
    }
    return v;
}

/// Reads a probability row, rejects it if it is off by more than the load
/// tolerance, and renormalises it otherwise.
std::vector<double> probability_row(const json& v, std::size_t len, const std::string& field) {
    const json& arr = as_array(v, len, field);
    std::vector<double> row(len);
    double sum = 0.0;
    for (std::size_t i = 0; i < len; ++i) {
        row[i] = as_number(arr[i], field);
        if (row[i] < 0.0) throw ConfigError("field '" + field + "' has a negative probability");
        sum += row[i];
    }
    if (std::abs(sum - 1.0) > kLoadTolerance) {
        std::ostringstream msg;
        msg.precision(17);
        msg << "field '" << field << "' sums to " << sum << ", expected 1";
        throw ConfigError(msg.str());
    }
    // Rows already stochastic to working precision are kept bit-exact.
    if (std::abs(sum - 1.0) > kProbabilityTolerance) {
        for (double& p : row) p /= sum;
    }
    return row;
}

Matrix policy_matrix(const json& v, int ns, int na, const char* field) {
    const json& rows = as_array(v, ns, field);
    Matrix out(ns, na);
    for (int s = 0; s < ns; ++s) {
        const auto row = probability_row(rows[s], na, where(field, {std::size_t(s)}));
        for (int a = 0; a < na; ++a) out(s, a) = row[a];
    }
    return out;
}

std::map<std::string, std::string> parse_query(const std::string& query) {
    std::map<std::string, std::string> out;
    std::stringstream ss(query);
    std::string item;
    while (std::getline(ss, item, '&')) {
        if (item.empty()) continue;
        const auto eq = item.find('=');
        if (eq == std::string::npos) throw ConfigError("random-k parameter '" + item + "' needs a value");
        out[item.substr(0, eq)] = item.substr(eq + 1);
    }
    return out;
}

RandomProblemParams parse_random_params(const std::string& query) {
    RandomProblemParams p;
    for (const auto& [key, value] : parse_query(query)) {
        try {
            if (key == "states") p.states = std::stoi(value);
            else if (key == "actions") p.actions = std::stoi(value);
            else if (key == "features") p.features = std::stoi(value);
            else if (key == "seed") p.seed = std::stoull(value);
            else if (key == "gamma") p.gamma = std::stod(value);
            else throw ConfigError("unknown random-k parameter '" + key + "'");
        } catch (const std::logic_error&) {
            throw ConfigError("random-k parameter '" + key + "' has invalid value '" + value + "'");
        }
    }
    return p;
}

json matrix_rows(const Matrix& m) {
    json out = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        out.push_back(std::move(row));
    }
    return out;
}

}  // namespace

EvaluationSetup make_twostate(double gamma) {
    std::vector<Matrix> transition{Matrix(2, 2), Matrix(2, 2)};
    transition[0] << 1, 0, 1, 0;
    transition[1] << 0, 1, 0, 1;
    std::vector<Matrix> reward(2, Matrix::Zero(2, 2));
    FiniteMdp mdp(std::move(transition), std::move(reward), gamma);
    Matrix phi(2, 1);
    phi << 1, 2;
    return build_setup(mdp, Policy::deterministic(2, 2, 1), Policy::uniform(2, 2),
                       FeatureMap(std::move(phi)));
}

EvaluationSetup make_baird_star(double gamma) {
    constexpr int ns = 7;
    constexpr int lower = 6;
    Matrix dashed = Matrix::Zero(ns, ns);
    dashed.leftCols(6).setConstant(1.0 / 6.0);
    Matrix solid = Matrix::Zero(ns, ns);
    solid.col(lower).setOnes();
    FiniteMdp mdp({dashed, solid}, {Matrix::Zero(ns, ns), Matrix::Zero(ns, ns)}, gamma);

    Matrix behavior(ns, 2);
    behavior.col(0).setConstant(6.0 / 7.0);
    behavior.col(1).setConstant(1.0 / 7.0);

    Matrix phi = Matrix::Zero(ns, ns);
    for (int s = 0; s < 6; ++s) {
        phi(s, s) = 2.0;
        phi(s, 6) = 1.0;
    }
    phi(lower, 6) = 2.0;
    return build_setup(mdp, Policy::deterministic(ns, 2, 1), Policy(std::move(behavior)),
                       FeatureMap(std::move(phi)));
}

EvaluationSetup make_random(const RandomProblemParams& params) {
    const int ns = params.states;
    const int na = params.actions;
    const int m = params.features;
    if (ns < 1 || na < 1 || m < 1 || m > ns) {
        throw ConfigError("random-k needs states >= features >= 1 and actions >= 1");
    }
    Rng rng(params.seed, 0x72616e646f6dULL);
    const auto positive_row = [&](int len) {
        Vector row(len);
        for (int i = 0; i < len; ++i) row(i) = 0.05 + rng.uniform();
        return Vector(row / row.sum());
    };
    std::vector<Matrix> transition(na, Matrix(ns, ns));
    std::vector<Matrix> reward(na, Matrix(ns, ns));
    for (int a = 0; a < na; ++a) {
        for (int s = 0; s < ns; ++s) {
            transition[a].row(s) = positive_row(ns).transpose();
            for (int t = 0; t < ns; ++t) reward[a](s, t) = 2.0 * rng.uniform() - 1.0;
        }
    }
    Matrix target(ns, na);
    Matrix behavior(ns, na);
    for (int s = 0; s < ns; ++s) target.row(s) = positive_row(na).transpose();
    for (int s = 0; s < ns; ++s) behavior.row(s) = positive_row(na).transpose();
    Matrix phi(ns, m);
    for (int s = 0; s < ns; ++s) {
        for (int j = 0; j < m; ++j) phi(s, j) = 2.0 * rng.uniform() - 1.0;
    }
    FiniteMdp mdp(std::move(transition), std::move(reward), params.gamma);
    return build_setup(mdp, Policy(std::move(target)), Policy(std::move(behavior)),
                       FeatureMap(std::move(phi)));
}

EvaluationSetup parse_problem(const json& doc) {
    if (!doc.is_object()) throw ConfigError("problem document must be a JSON object");
    const int ns = as_positive_int(require(doc, "num_states"), "num_states");
    const int na = as_positive_int(require(doc, "num_actions"), "num_actions");
    const double gamma = as_number(require(doc, "gamma"), "gamma");

    std::vector<Matrix> transition(na, Matrix(ns, ns));
    std::vector<Matrix> reward(na, Matrix(ns, ns));
    const json& tr = as_array(require(doc, "transition"), ns, "transition");
    const json& rw = as_array(require(doc, "reward"), ns, "reward");
    for (std::size_t s = 0; s < std::size_t(ns); ++s) {
        const json& tr_s = as_array(tr[s], na, where("transition", {s}));
        const json& rw_s = as_array(rw[s], na, where("reward", {s}));
        for (std::size_t a = 0; a < std::size_t(na); ++a) {
            const auto row = probability_row(tr_s[a], ns, where("transition", {s, a}));
            const json& rrow = as_array(rw_s[a], ns, where("reward", {s, a}));
            for (std::size_t t = 0; t < std::size_t(ns); ++t) {
                transition[a](s, t) = row[t];
                reward[a](s, t) = as_number(rrow[t], where("reward", {s, a, t}));
            }
        }
    }

    const json& phi_rows = as_array(require(doc, "phi"), ns, "phi");
    if (!phi_rows[0].is_array() || phi_rows[0].empty()) throw ConfigError("field 'phi[0]' must be a non-empty array");
    const std::size_t m = phi_rows[0].size();
    Matrix phi(ns, static_cast<Eigen::Index>(m));
    for (std::size_t s = 0; s < std::size_t(ns); ++s) {
        const json& row = as_array(phi_rows[s], m, where("phi", {s}));
        for (std::size_t j = 0; j < m; ++j) phi(s, j) = as_number(row[j], where("phi", {s, j}));
    }

    std::optional<Vector> d_beta;
    if (doc.contains("d_beta") && !doc.at("d_beta").is_null()) {
        const json& d = as_array(doc.at("d_beta"), ns, "d_beta");
        Vector v(ns);
        for (std::size_t s = 0; s < std::size_t(ns); ++s) v(s) = as_number(d[s], where("d_beta", {s}));
        d_beta = std::move(v);
    }

    FiniteMdp mdp(std::move(transition), std::move(reward), gamma);
    return build_setup(mdp, Policy(policy_matrix(require(doc, "pi"), ns, na, "pi")),
                       Policy(policy_matrix(require(doc, "beta"), ns, na, "beta")),
                       FeatureMap(std::move(phi)), d_beta);
}

ProblemSpec load_problem(const std::string& source) {
    if (source == "twostate") return {"twostate", source, make_twostate()};
    if (source == "baird-star") return {"baird-star", source, make_baird_star()};
    if (source.rfind("random-k", 0) == 0) {
        const auto q = source.find('?');
        const std::string rest = source.substr(std::string("random-k").size());
        if (!rest.empty() && rest.front() != '?') throw ConfigError("unknown builtin '" + source + "'");
        const auto params = parse_random_params(q == std::string::npos ? "" : source.substr(q + 1));
        return {"random-k", source, make_random(params)};
    }
    std::ifstream in(source);
    if (!in) throw ConfigError("cannot open problem file '" + source + "'");
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("problem file '" + source + "': " + e.what());
    }
    try {
        return {std::filesystem::path(source).stem().string(), source, parse_problem(doc)};
    } catch (const ConfigError& e) {
        throw ConfigError("problem file '" + source + "': " + e.what());
    }
}

json problem_to_json(const EvaluationSetup& setup) {
    const int ns = setup.num_states();
    const int na = setup.num_actions();
    json transition = json::array();
    json reward = json::array();
    for (int s = 0; s < ns; ++s) {
        json ts = json::array();
        json rs = json::array();
        for (int a = 0; a < na; ++a) {
            ts.push_back(matrix_rows(setup.mdp().transition(a).row(s))[0]);
            rs.push_back(matrix_rows(setup.mdp().reward(a).row(s))[0]);
        }
        transition.push_back(std::move(ts));
        reward.push_back(std::move(rs));
    }
    json d = json::array();
    for (int s = 0; s < ns; ++s) d.push_back(setup.d_beta()(s));
    return json{{"num_states", ns},
                {"num_actions", na},
                {"gamma", setup.gamma()},
                {"transition", std::move(transition)},
                {"reward", std::move(reward)},
                {"pi", matrix_rows(setup.target_policy().probs())},
                {"beta", matrix_rows(setup.behavior_policy().probs())},
                {"phi", matrix_rows(setup.phi())},
                {"d_beta", std::move(d)}};
}

std::string problem_hash(const EvaluationSetup& setup) {
    const std::string text = problem_to_json(setup).dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace ntdlab
