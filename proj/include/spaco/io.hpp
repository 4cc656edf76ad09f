#pragma once

#include <json.hpp>
#include <string>
#include <vector>

#include "spaco/inference.hpp"
#include "spaco/model.hpp"
#include "spaco/simulation.hpp"
#include "spaco/solver.hpp"

namespace spaco {

using Json = nlohmann::json;

// Long-format tensor: header `subject_id,time,feature_id,value`; a time point
// counts as observed for a subject iff every feature id appears for that
// (subject, time).  Ids are sorted numerically when all parse as numbers,
// lexicographically otherwise.
struct TensorData {
    LongitudinalTensor X;
    std::vector<std::string> subject_ids;
    std::vector<std::string> feature_ids;

    explicit TensorData(LongitudinalTensor x) : X(std::move(x)) {}
};

TensorData read_tensor_csv(const std::string& path);
void write_tensor_csv(const std::string& path, const LongitudinalTensor& X,
                      const std::vector<std::string>* subject_ids = nullptr,
                      const std::vector<std::string>* feature_ids = nullptr);

// Covariates: `subject_id,<name1>,...` plus a sidecar JSON {name: kind}.
CovariateMatrix read_covariates_csv(const std::string& csv_path,
                                    const std::string& kinds_json_path,
                                    const std::vector<std::string>& subject_ids);
void write_covariates_csv(const std::string& csv_path, const std::string& kinds_json_path,
                          const CovariateMatrix& Z,
                          const std::vector<std::string>& subject_ids);

Json params_to_json(const SpacoParams& params);
SpacoParams params_from_json(const Json& j);

FitConfig fit_config_from_json(const Json& j);
Json fit_report_to_json(const FitReport& report);

TestConfig test_config_from_json(const Json& j);
ScenarioConfig scenario_config_from_json(const Json& j);

Json crossfit_to_json(const CrossfitResult& cf);
CrossfitResult crossfit_from_json(const Json& j);

void write_test_result_csv(const std::string& path, const TestResult& result,
                           const std::vector<std::string>& covariate_names);
Json test_result_to_json(const TestResult& result,
                         const std::vector<std::string>& covariate_names);

void write_bench_csv(const std::string& path, const BenchResult& result);

void write_posterior_csv(const std::string& path, const Matrix& mu,
                         const std::vector<std::string>& subject_ids);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);

// FNV-1a 64-bit content hash, hex-encoded.
std::string content_hash(const std::string& bytes);
std::string file_hash(const std::string& path);

}  // namespace spaco
