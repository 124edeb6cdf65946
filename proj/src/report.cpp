#include "srt/report.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace srt {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r'))
        s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
        s.remove_suffix(1);
    return s;
}

double parse_double(const std::string& key, std::string_view v) {
    double out = 0.0;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || ptr != v.data() + v.size() || !std::isfinite(out))
        throw InvalidInputError("config key '" + key + "': expected a finite number, got '" +
                                std::string(v) + "'");
    return out;
}

long parse_long(const std::string& key, std::string_view v) {
    long out = 0;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || ptr != v.data() + v.size())
        throw InvalidInputError("config key '" + key + "': expected an integer, got '" +
                                std::string(v) + "'");
    return out;
}

bool parse_bool(const std::string& key, std::string_view v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw InvalidInputError("config key '" + key + "': expected true/false, got '" +
                            std::string(v) + "'");
}

} // namespace

std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    (void)ec;
    return std::string(buf, ptr);
}

ConfigMap parse_config_text(const std::string& text) {
    ConfigMap map;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        const std::string_view body = trim(line);
        if (body.empty()) continue;
        const auto eq = body.find('=');
        if (eq == std::string_view::npos)
            throw InvalidInputError("config line " + std::to_string(lineno) +
                                    ": expected key=value, got '" + std::string(body) + "'");
        const std::string key(trim(body.substr(0, eq)));
        const std::string value(trim(body.substr(eq + 1)));
        if (key.empty())
            throw InvalidInputError("config line " + std::to_string(lineno) + ": empty key");
        if (!map.emplace(key, value).second)
            throw InvalidInputError("config line " + std::to_string(lineno) +
                                    ": duplicate key '" + key + "'");
    }
    return map;
}

ConfigMap load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InvalidInputError("cannot open config file '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str());
}

std::string render_config(const ConfigMap& map) {
    std::string out;
    for (const auto& [k, v] : map) {
        out += k;
        out += '=';
        out += v;
        out += '\n';
    }
    return out;
}

ResolvedConfig apply_config(const ConfigMap& map, const TrainConfig& base) {
    ResolvedConfig rc;
    rc.train = base;
    for (const auto& [key, value] : map) {
        if (key == "depth")
            rc.train.depth = static_cast<int>(parse_long(key, value));
        else if (key == "mu")
            rc.train.mu = parse_double(key, value);
        else if (key == "lambda_omega") {
            rc.lambda_omega_auto = value == "auto";
            if (!rc.lambda_omega_auto) rc.train.lambda_omega = parse_double(key, value);
        } else if (key == "lambda_beta") {
            rc.lambda_beta_auto = value == "auto";
            if (!rc.lambda_beta_auto) rc.train.lambda_beta = parse_double(key, value);
        } else if (key == "eps1")
            rc.train.eps1 = parse_double(key, value);
        else if (key == "eps2")
            rc.train.eps2 = parse_double(key, value);
        else if (key == "eps3")
            rc.train.eps3 = parse_double(key, value);
        else if (key == "zeta")
            rc.train.zeta = parse_double(key, value);
        else if (key == "theta_omega")
            rc.train.theta_omega = parse_double(key, value);
        else if (key == "theta_beta")
            rc.train.theta_beta = parse_double(key, value);
        else if (key == "upsilon")
            rc.train.upsilon = parse_double(key, value);
        else if (key == "k0")
            rc.train.k0 = parse_long(key, value);
        else if (key == "tau")
            rc.train.tau = parse_double(key, value);
        else if (key == "max_macro_iters")
            rc.train.max_macro_iters = static_cast<int>(parse_long(key, value));
        else if (key == "armijo_a")
            rc.train.armijo_a = parse_double(key, value);
        else if (key == "armijo_gamma")
            rc.train.armijo_gamma = parse_double(key, value);
        else if (key == "armijo_delta")
            rc.train.armijo_delta = parse_double(key, value);
        else if (key == "seed")
            rc.train.seed = static_cast<std::uint64_t>(parse_long(key, value));
        else if (key == "subtree_proxy")
            rc.train.subtree_proxy = parse_bool(key, value);
        else if (key == "term_rel_tol")
            rc.train.term_rel_tol = parse_double(key, value);
        else if (key == "init_repetitions")
            rc.train.init_repetitions = static_cast<int>(parse_long(key, value));
        else
            throw InvalidInputError("unknown config key '" + key + "'");
    }
    return rc;
}

void resolve_auto_lambdas(ResolvedConfig& rc, int p) {
    if (p < 1) throw InvalidInputError("auto ridge needs a positive feature count");
    const TreeTopology tree(rc.train.depth);
    if (rc.lambda_omega_auto)
        rc.train.lambda_omega = 2.0 / (static_cast<double>(p) * tree.num_branch());
    if (rc.lambda_beta_auto)
        rc.train.lambda_beta = 2.0 / (static_cast<double>(p) * tree.num_leaves());
}

ConfigMap describe_config(const ResolvedConfig& rc) {
    const TrainConfig& t = rc.train;
    ConfigMap m;
    m["depth"] = std::to_string(t.depth);
    m["mu"] = format_double(t.mu);
    m["lambda_omega"] = rc.lambda_omega_auto ? "auto" : format_double(t.lambda_omega);
    m["lambda_beta"] = rc.lambda_beta_auto ? "auto" : format_double(t.lambda_beta);
    m["eps1"] = format_double(t.eps1);
    m["eps2"] = format_double(t.eps2);
    m["eps3"] = format_double(t.eps3);
    m["zeta"] = format_double(t.zeta);
    m["theta_omega"] = format_double(t.theta_omega);
    m["theta_beta"] = format_double(t.theta_beta);
    m["upsilon"] = format_double(t.upsilon);
    m["k0"] = std::to_string(t.k0_value());
    m["tau"] = format_double(t.tau);
    m["max_macro_iters"] = std::to_string(t.max_macro_iters);
    m["armijo_a"] = format_double(t.armijo_a);
    m["armijo_gamma"] = format_double(t.armijo_gamma);
    m["armijo_delta"] = format_double(t.armijo_delta);
    m["seed"] = std::to_string(t.seed);
    m["subtree_proxy"] = t.subtree_proxy ? "true" : "false";
    m["term_rel_tol"] = format_double(t.term_rel_tol);
    m["init_repetitions"] = std::to_string(t.init_repetitions);
    return m;
}

// ---------------------------------------------------------------------------
// Model persistence
// ---------------------------------------------------------------------------

namespace {

std::vector<std::vector<double>> mat_rows(const Mat& m) {
    std::vector<std::vector<double>> out(m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        auto r = m.row(i);
        out[i].assign(r.begin(), r.end());
    }
    return out;
}

void fill_mat(Mat& m, const nlohmann::json& rows, const char* what, std::size_t want_rows,
              std::size_t want_cols) {
    if (!rows.is_array() || rows.size() != want_rows)
        throw InvalidInputError(std::string("model file: '") + what + "' must be an array of " +
                                std::to_string(want_rows) + " rows");
    m = Mat(want_rows, want_cols);
    for (std::size_t i = 0; i < want_rows; ++i) {
        const auto& r = rows[i];
        if (!r.is_array() || r.size() != want_cols)
            throw InvalidInputError(std::string("model file: '") + what + "' row " +
                                    std::to_string(i) + " must hold " +
                                    std::to_string(want_cols) + " numbers");
        for (std::size_t j = 0; j < want_cols; ++j) m(i, j) = r[j].get<double>();
    }
}

} // namespace

void save_model(const std::string& path, const ModelFile& mf) {
    nlohmann::json j;
    j["depth"] = mf.model.tree.depth;
    j["mu"] = mf.model.mu;
    j["p"] = mf.model.num_features;
    j["omega"] = mat_rows(mf.model.omega);
    j["beta"] = mat_rows(mf.model.beta);
    j["feature_names"] = mf.feature_names;
    j["normalization"] = {{"min", mf.normalization.feature_min},
                          {"max", mf.normalization.feature_max},
                          {"target_mean", mf.normalization.target_mean},
                          {"target_std", mf.normalization.target_std}};
    std::ofstream out(path);
    if (!out) throw InvalidInputError("cannot write model file '" + path + "'");
    out << j.dump(2) << '\n';
}

ModelFile load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InvalidInputError("cannot open model file '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw InvalidInputError("model file '" + path + "': " + e.what());
    }
    try {
        const int depth = j.at("depth").get<int>();
        const int p = j.at("p").get<int>();
        const double mu = j.at("mu").get<double>();
        ModelFile mf;
        mf.model = SrtModel(depth, p, mu);
        const std::size_t d = static_cast<std::size_t>(p) + 1;
        fill_mat(mf.model.omega, j.at("omega"), "omega",
                 static_cast<std::size_t>(mf.model.tree.num_branch()), d);
        fill_mat(mf.model.beta, j.at("beta"), "beta",
                 static_cast<std::size_t>(mf.model.tree.num_leaves()), d);
        mf.feature_names = j.at("feature_names").get<std::vector<std::string>>();
        if (mf.feature_names.size() != static_cast<std::size_t>(p))
            throw InvalidInputError("model file: feature_names must list p entries");
        const auto& norm = j.at("normalization");
        mf.normalization.feature_min = norm.at("min").get<std::vector<double>>();
        mf.normalization.feature_max = norm.at("max").get<std::vector<double>>();
        mf.normalization.target_mean = norm.at("target_mean").get<double>();
        mf.normalization.target_std = norm.at("target_std").get<double>();
        if (mf.normalization.feature_min.size() != static_cast<std::size_t>(p) ||
            mf.normalization.feature_max.size() != static_cast<std::size_t>(p))
            throw InvalidInputError("model file: normalization arrays must list p entries");
        return mf;
    } catch (const nlohmann::json::exception& e) {
        throw InvalidInputError("model file '" + path + "': " + e.what());
    }
}

// ---------------------------------------------------------------------------
// Trace
// ---------------------------------------------------------------------------

std::string render_trace(const std::vector<IterRecord>& trace) {
    std::string out;
    for (const auto& r : trace) {
        out += std::to_string(r.k);
        out += ", ";
        out += std::to_string(r.macro_iter);
        out += ", ";
        out += std::to_string(r.node);
        out += ", ";
        out += to_string(r.kind);
        out += ", ";
        out += format_double(r.error_after_bn);
        out += ", ";
        out += format_double(r.error_after_ln);
        out += ", ";
        out += std::isnan(r.ln_grad_norm) ? "-" : format_double(r.ln_grad_norm);
        out += '\n';
    }
    return out;
}

void save_trace(const std::string& path, const FitReport& report) {
    std::ofstream out(path);
    if (!out) throw InvalidInputError("cannot write trace file '" + path + "'");
    out << "# initial_error=" << format_double(report.initial_error) << '\n';
    out << "# best_error=" << format_double(report.best_error) << '\n';
    if (!std::isnan(report.init_db))
        out << "# init_db=" << format_double(report.init_db) << '\n';
    for (const auto& w : report.warnings) out << "# warning: " << w << '\n';
    out << render_trace(report.trace);
}

} // namespace srt
