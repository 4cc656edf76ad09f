#include "spaco/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

namespace spaco {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, ',')) out.push_back(field);
    if (!line.empty() && line.back() == ',') out.push_back("");
    return out;
}

bool parse_double(const std::string& s, double& out) {
    if (s.empty()) return false;
    try {
        size_t pos = 0;
        out = std::stod(s, &pos);
        while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
        return pos == s.size();
    } catch (...) {
        return false;
    }
}

// numeric sort when every id parses as a number, lexicographic otherwise
std::vector<std::string> sorted_ids(const std::set<std::string>& ids) {
    std::vector<std::string> out(ids.begin(), ids.end());
    bool all_numeric = true;
    std::vector<double> vals(out.size());
    for (size_t i = 0; i < out.size(); ++i)
        if (!parse_double(out[i], vals[i])) {
            all_numeric = false;
            break;
        }
    if (all_numeric) {
        std::vector<size_t> order(out.size());
        for (size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::sort(order.begin(), order.end(),
                  [&](size_t a, size_t b) { return vals[a] < vals[b]; });
        std::vector<std::string> sorted(out.size());
        for (size_t i = 0; i < out.size(); ++i) sorted[i] = out[order[i]];
        return sorted;
    }
    std::sort(out.begin(), out.end());
    return out;
}

Json matrix_to_json(const Matrix& m) {
    Json j;
    j["rows"] = m.rows();
    j["cols"] = m.cols();
    std::vector<double> data(static_cast<size_t>(m.size()));
    for (long c = 0, idx = 0; c < m.cols(); ++c)
        for (long r = 0; r < m.rows(); ++r) data[static_cast<size_t>(idx++)] = m(r, c);
    j["data"] = data;  // column-major
    return j;
}

Matrix matrix_from_json(const Json& j) {
    const long rows = j.at("rows").get<long>();
    const long cols = j.at("cols").get<long>();
    const auto data = j.at("data").get<std::vector<double>>();
    if (static_cast<long>(data.size()) != rows * cols)
        throw std::invalid_argument("matrix_from_json: size mismatch");
    Matrix m(rows, cols);
    for (long c = 0, idx = 0; c < cols; ++c)
        for (long r = 0; r < rows; ++r) m(r, c) = data[static_cast<size_t>(idx++)];
    return m;
}

Json vector_to_json(const Vector& v) {
    std::vector<double> data(v.data(), v.data() + v.size());
    return Json(data);
}

Vector vector_from_json(const Json& j) {
    const auto data = j.get<std::vector<double>>();
    Vector v(static_cast<long>(data.size()));
    for (size_t i = 0; i < data.size(); ++i) v[static_cast<long>(i)] = data[i];
    return v;
}

std::string format_double(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

}  // namespace

TensorData read_tensor_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open tensor csv: " + path);
    std::string line;
    if (!std::getline(in, line))
        throw std::invalid_argument(path + ": empty file");
    {
        auto header = split_csv_line(line);
        if (header.size() != 4 || header[0] != "subject_id" || header[1] != "time" ||
            header[2] != "feature_id" || header[3] != "value")
            throw std::invalid_argument(path + ":1: expected header subject_id,time,feature_id,value");
    }

    struct Row {
        std::string subject, feature;
        double time, value;
    };
    std::vector<Row> rows;
    std::set<std::string> subjects, features;
    std::set<double> times;
    long line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto f = split_csv_line(line);
        if (f.size() != 4)
            throw std::invalid_argument(path + ":" + std::to_string(line_no) +
                                        ": expected 4 fields, got " + std::to_string(f.size()));
        Row r;
        r.subject = f[0];
        r.feature = f[2];
        if (!parse_double(f[1], r.time))
            throw std::invalid_argument(path + ":" + std::to_string(line_no) + ": bad time value");
        if (!parse_double(f[3], r.value) || !std::isfinite(r.value))
            throw std::invalid_argument(path + ":" + std::to_string(line_no) +
                                        ": bad or non-finite value");
        rows.push_back(r);
        subjects.insert(r.subject);
        features.insert(r.feature);
        times.insert(r.time);
    }
    if (rows.empty()) throw std::invalid_argument(path + ": no data rows");

    const auto subject_ids = sorted_ids(subjects);
    const auto feature_ids = sorted_ids(features);
    std::vector<double> grid(times.begin(), times.end());

    const int I = static_cast<int>(subject_ids.size());
    const int T = static_cast<int>(grid.size());
    const int J = static_cast<int>(feature_ids.size());
    std::map<std::string, int> si, fi;
    for (int i = 0; i < I; ++i) si[subject_ids[static_cast<size_t>(i)]] = i;
    for (int j = 0; j < J; ++j) fi[feature_ids[static_cast<size_t>(j)]] = j;
    std::map<double, int> ti;
    for (int t = 0; t < T; ++t) ti[grid[static_cast<size_t>(t)]] = t;

    TensorData out(LongitudinalTensor(I, T, J, TimeGrid(grid)));
    out.subject_ids = subject_ids;
    out.feature_ids = feature_ids;
    // presence count per (i,t); observed iff all J features present
    std::vector<int> seen(static_cast<size_t>(I) * T, 0);
    for (const auto& r : rows) {
        const int i = si[r.subject];
        const int t = ti[r.time];
        const int j = fi[r.feature];
        out.X.at(i, t, j) = r.value;
        ++seen[static_cast<size_t>(i) * T + t];
    }
    for (int i = 0; i < I; ++i) {
        bool any = false;
        for (int t = 0; t < T; ++t) {
            const bool obs = seen[static_cast<size_t>(i) * T + t] == J;
            out.X.set_observed(i, t, obs);
            any |= obs;
        }
        if (!any)
            throw std::invalid_argument(path + ": subject " + subject_ids[static_cast<size_t>(i)] +
                                        " has no fully observed time point");
    }
    out.X.refresh_mask_index();
    return out;
}

void write_tensor_csv(const std::string& path, const LongitudinalTensor& X,
                      const std::vector<std::string>* subject_ids,
                      const std::vector<std::string>* feature_ids) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "subject_id,time,feature_id,value\n";
    for (int i = 0; i < X.subjects(); ++i) {
        const std::string sid =
            subject_ids ? (*subject_ids)[static_cast<size_t>(i)] : std::to_string(i + 1);
        for (int t : X.observed_times(i)) {
            for (int j = 0; j < X.features(); ++j) {
                const std::string fid =
                    feature_ids ? (*feature_ids)[static_cast<size_t>(j)] : std::to_string(j + 1);
                out << sid << ',' << format_double(X.grid()[t]) << ',' << fid << ','
                    << format_double(X.at(i, t, j)) << '\n';
            }
        }
    }
}

CovariateMatrix read_covariates_csv(const std::string& csv_path,
                                    const std::string& kinds_json_path,
                                    const std::vector<std::string>& subject_ids) {
    std::ifstream in(csv_path);
    if (!in) throw std::invalid_argument("cannot open covariates csv: " + csv_path);
    std::string line;
    if (!std::getline(in, line)) throw std::invalid_argument(csv_path + ": empty file");
    auto header = split_csv_line(line);
    if (header.size() < 2 || header[0] != "subject_id")
        throw std::invalid_argument(csv_path + ":1: expected header subject_id,<names...>");
    std::vector<std::string> names(header.begin() + 1, header.end());
    const int q = static_cast<int>(names.size());

    std::map<std::string, std::vector<double>> by_subject;
    long line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto f = split_csv_line(line);
        if (static_cast<int>(f.size()) != q + 1)
            throw std::invalid_argument(csv_path + ":" + std::to_string(line_no) +
                                        ": wrong field count");
        std::vector<double> vals(static_cast<size_t>(q));
        for (int c = 0; c < q; ++c) {
            if (!parse_double(f[static_cast<size_t>(c + 1)], vals[static_cast<size_t>(c)]) ||
                !std::isfinite(vals[static_cast<size_t>(c)]))
                throw std::invalid_argument(csv_path + ":" + std::to_string(line_no) +
                                            ": bad covariate value");
        }
        by_subject[f[0]] = vals;
    }

    Json kinds = Json::parse(read_file(kinds_json_path));
    std::vector<ColumnKind> kind_vec;
    for (const auto& name : names) {
        if (!kinds.contains(name))
            throw std::invalid_argument(kinds_json_path + ": missing kind for column " + name);
        const std::string k = kinds.at(name).get<std::string>();
        if (k == "gaussian") kind_vec.push_back(ColumnKind::gaussian);
        else if (k == "binary") kind_vec.push_back(ColumnKind::binary);
        else throw std::invalid_argument(kinds_json_path + ": unknown kind " + k);
    }

    Matrix Z(static_cast<long>(subject_ids.size()), q);
    for (size_t i = 0; i < subject_ids.size(); ++i) {
        auto it = by_subject.find(subject_ids[i]);
        if (it == by_subject.end())
            throw std::invalid_argument(csv_path + ": no covariates for subject " + subject_ids[i]);
        for (int c = 0; c < q; ++c) Z(static_cast<long>(i), c) = it->second[static_cast<size_t>(c)];
    }
    CovariateMatrix out(Z, kind_vec);
    out.names = names;
    return out;
}

void write_covariates_csv(const std::string& csv_path, const std::string& kinds_json_path,
                          const CovariateMatrix& Z,
                          const std::vector<std::string>& subject_ids) {
    std::ofstream out(csv_path);
    if (!out) throw std::runtime_error("cannot write " + csv_path);
    out << "subject_id";
    std::vector<std::string> names = Z.names;
    if (names.empty())
        for (int c = 0; c < Z.count(); ++c) names.push_back("z" + std::to_string(c + 1));
    for (const auto& n : names) out << ',' << n;
    out << '\n';
    for (int i = 0; i < Z.subjects(); ++i) {
        out << subject_ids[static_cast<size_t>(i)];
        for (int c = 0; c < Z.count(); ++c) out << ',' << format_double(Z.Z(i, c));
        out << '\n';
    }
    Json kinds;
    for (int c = 0; c < Z.count(); ++c)
        kinds[names[static_cast<size_t>(c)]] =
            Z.column_kind[static_cast<size_t>(c)] == ColumnKind::binary ? "binary" : "gaussian";
    write_file(kinds_json_path, kinds.dump(2) + "\n");
}

Json params_to_json(const SpacoParams& params) {
    Json j;
    j["schema_version"] = 1;
    j["J"] = params.n_features();
    j["T"] = params.n_times();
    j["K"] = params.n_factors();
    j["q"] = params.n_covariates();
    j["V"] = matrix_to_json(params.V);
    j["Phi"] = matrix_to_json(params.Phi);
    if (params.beta.size() > 0) j["beta"] = matrix_to_json(params.beta);
    j["s2"] = vector_to_json(params.s2);
    j["sigma2"] = vector_to_json(params.sigma2);
    j["lambda1"] = vector_to_json(params.lambda1);
    j["lambda2"] = vector_to_json(params.lambda2);
    j["Gamma"] = matrix_to_json(params.penalty.Gamma);
    j["Omega"] = matrix_to_json(params.penalty.Omega);
    return j;
}

SpacoParams params_from_json(const Json& j) {
    if (j.at("schema_version").get<int>() != 1)
        throw std::invalid_argument("params_from_json: unsupported schema version");
    SpacoParams p;
    p.V = matrix_from_json(j.at("V"));
    p.Phi = matrix_from_json(j.at("Phi"));
    if (j.contains("beta")) p.beta = matrix_from_json(j.at("beta"));
    else p.beta = Matrix::Zero(0, p.V.cols());
    p.s2 = vector_from_json(j.at("s2"));
    p.sigma2 = vector_from_json(j.at("sigma2"));
    p.lambda1 = vector_from_json(j.at("lambda1"));
    p.lambda2 = vector_from_json(j.at("lambda2"));
    p.penalty.Gamma = matrix_from_json(j.at("Gamma"));
    p.penalty.Omega = matrix_from_json(j.at("Omega"));
    return p;
}

FitConfig fit_config_from_json(const Json& j) {
    FitConfig c;
    c.K = j.value("K", 1);
    c.max_outer_iters = j.value("max_outer_iters", 200);
    c.tol_rel_obj = j.value("tol_rel_obj", 1e-6);
    c.max_prox_iters = j.value("max_prox_iters", 100);
    if (j.contains("lambda1_grid")) c.lambda1_grid = j.at("lambda1_grid").get<std::vector<double>>();
    const std::string l1 = j.value("lambda1_mode", "auto");
    const std::string l2 = j.value("lambda2_mode", "auto");
    c.lambda1_mode = l1 == "fixed" ? TuneMode::fixed : TuneMode::autotune;
    c.lambda2_mode = l2 == "fixed" ? TuneMode::fixed : TuneMode::autotune;
    c.n_folds_beta = j.value("n_folds_beta", 5);
    c.seed = j.value("seed", static_cast<std::uint64_t>(0));
    return c;
}

Json fit_report_to_json(const FitReport& report) {
    Json j;
    j["converged"] = report.converged;
    j["n_iters"] = report.n_iters;
    j["chosen_lambda1"] = vector_to_json(report.chosen_lambda1);
    j["chosen_lambda2"] = vector_to_json(report.chosen_lambda2);
    Json trace = Json::array();
    for (const auto& o : report.objective_trace) {
        trace.push_back({{"total", o.total},
                         {"neg_half_loglik", o.neg_half_loglik},
                         {"smooth_penalty", o.smooth_penalty},
                         {"lasso_penalty", o.lasso_penalty}});
    }
    j["objective_trace"] = trace;
    j["warnings"] = report.warnings;
    return j;
}

TestConfig test_config_from_json(const Json& j) {
    TestConfig c;
    const std::string mode = j.value("mode", "partial");
    c.mode = mode == "marginal" ? TestMode::marginal : TestMode::partial;
    c.delta = j.value("delta", 0.0);
    c.B = j.value("B", 100);
    const std::string nf = j.value("null_fit", "skew_t");
    c.null_fit = nf == "empirical" ? TestConfig::NullFit::empirical : TestConfig::NullFit::skew_t;
    c.seed = j.value("seed", static_cast<std::uint64_t>(0));
    return c;
}

ScenarioConfig scenario_config_from_json(const Json& j) {
    ScenarioConfig c;
    c.I = j.value("I", 100);
    c.T = j.value("T", 30);
    c.J = j.value("J", 10);
    c.q = j.value("q", 100);
    c.gamma = j.value("gamma", 1.0);
    c.c1 = j.value("c1", 1.0);
    c.c2 = j.value("c2", 0.0);
    c.n_reps = j.value("n_reps", 1);
    c.seed = j.value("seed", static_cast<std::uint64_t>(0));
    return c;
}

Json crossfit_to_json(const CrossfitResult& cf) {
    Json j;
    j["M"] = cf.plan.M;
    j["seed"] = cf.plan.seed;
    j["fold_of"] = cf.plan.fold_of;
    Json folds = Json::array();
    for (const auto& p : cf.fold_params) folds.push_back(params_to_json(p));
    j["fold_params"] = folds;
    j["mu_tilde"] = matrix_to_json(cf.mu_tilde);
    if (cf.beta_crossfit.size() > 0) j["beta_crossfit"] = matrix_to_json(cf.beta_crossfit);
    j["shrinkage"] = vector_to_json(cf.shrinkage);
    j["warnings"] = cf.warnings;
    return j;
}

CrossfitResult crossfit_from_json(const Json& j) {
    CrossfitResult cf;
    cf.plan.M = j.at("M").get<int>();
    cf.plan.seed = j.at("seed").get<std::uint64_t>();
    cf.plan.fold_of = j.at("fold_of").get<std::vector<int>>();
    for (const auto& p : j.at("fold_params")) cf.fold_params.push_back(params_from_json(p));
    cf.mu_tilde = matrix_from_json(j.at("mu_tilde"));
    if (j.contains("beta_crossfit")) cf.beta_crossfit = matrix_from_json(j.at("beta_crossfit"));
    cf.shrinkage = vector_from_json(j.at("shrinkage"));
    if (j.contains("warnings")) cf.warnings = j.at("warnings").get<std::vector<std::string>>();
    return cf;
}

void write_test_result_csv(const std::string& path, const TestResult& result,
                           const std::vector<std::string>& covariate_names) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "covariate,factor,mode,statistic,pvalue\n";
    for (const auto& cell : result.cells) {
        const std::string name = cell.covariate < static_cast<int>(covariate_names.size())
                                     ? covariate_names[static_cast<size_t>(cell.covariate)]
                                     : ("z" + std::to_string(cell.covariate + 1));
        out << name << ',' << (cell.factor + 1) << ','
            << (cell.mode == TestMode::partial ? "partial" : "marginal") << ',';
        if (cell.error.empty())
            out << format_double(cell.statistic) << ',' << format_double(cell.pvalue) << '\n';
        else
            out << "nan,nan\n";
    }
}

Json test_result_to_json(const TestResult& result,
                         const std::vector<std::string>& covariate_names) {
    Json cells = Json::array();
    for (const auto& cell : result.cells) {
        Json c;
        c["covariate"] = cell.covariate < static_cast<int>(covariate_names.size())
                             ? covariate_names[static_cast<size_t>(cell.covariate)]
                             : ("z" + std::to_string(cell.covariate + 1));
        c["factor"] = cell.factor + 1;
        c["mode"] = cell.mode == TestMode::partial ? "partial" : "marginal";
        if (!cell.error.empty()) {
            c["error"] = cell.error;
        } else {
            c["statistic"] = cell.statistic;
            c["pvalue"] = cell.pvalue;
            c["skewt_ok"] = cell.skewt_ok;
            if (cell.skewt_ok) {
                c["null_fit"] = {{"xi", cell.null_fit.xi},
                                 {"omega", cell.null_fit.omega},
                                 {"alpha", cell.null_fit.alpha},
                                 {"nu", cell.null_fit.nu}};
                c["ks_distance"] = cell.ks_distance;
            }
        }
        cells.push_back(c);
    }
    Json j;
    j["cells"] = cells;
    return j;
}

void write_bench_csv(const std::string& path, const BenchResult& result) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "setting";
    for (const auto& c : result.col_labels) out << ',' << c;
    out << '\n';
    for (size_t r = 0; r < result.row_labels.size(); ++r) {
        out << result.row_labels[r];
        for (long c = 0; c < result.mean.cols(); ++c) {
            const double m = result.mean(static_cast<long>(r), c);
            const double s = result.se(static_cast<long>(r), c);
            if (std::isnan(m)) out << ",nan";
            else {
                std::ostringstream cell;
                cell.precision(3);
                cell << m << '(' << std::scientific << std::setprecision(1) << s << ')';
                out << ',' << cell.str();
            }
        }
        out << '\n';
    }
}

void write_posterior_csv(const std::string& path, const Matrix& mu,
                         const std::vector<std::string>& subject_ids) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "subject_id";
    for (int k = 0; k < mu.cols(); ++k) out << ",mu" << (k + 1);
    out << '\n';
    for (int i = 0; i < mu.rows(); ++i) {
        out << (i < static_cast<int>(subject_ids.size()) ? subject_ids[static_cast<size_t>(i)]
                                                         : std::to_string(i + 1));
        for (int k = 0; k < mu.cols(); ++k) out << ',' << format_double(mu(i, k));
        out << '\n';
    }
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::invalid_argument("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << content;
}

std::string content_hash(const std::string& bytes) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

std::string file_hash(const std::string& path) { return content_hash(read_file(path)); }

}  // namespace spaco
