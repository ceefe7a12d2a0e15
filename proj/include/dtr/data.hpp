#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dtr/io.hpp"

namespace dtr {

enum class CovariateType { continuous, binary, proportion };
enum class LagPolicy { current_previous, full_history };

struct CovariateSpec {
  std::string name;
  CovariateType type = CovariateType::continuous;
  bool time_varying = false;
  // standardization applied when encoding designs (continuous only)
  double center = 0.0;
  double scale = 1.0;
};

// Declares the cohort layout: covariate names/types, the maximum number of
// treatment courses K, the lag policy used by all course-k regressions, and
// the waiting-time categorization.
struct CovariateSchema {
  int K = 1;
  std::vector<CovariateSpec> covariates;
  LagPolicy lag = LagPolicy::current_previous;
  bool standardize = true;
  // three ascending cutpoints -> 4 waiting-time categories; empty means
  // "compute from observed quartiles at fit time"
  std::vector<double> w_cutpoints;
  // covariate driving EF-style threshold rules and the adverse-event
  // probability; empty if not applicable
  std::string ef_covariate;

  std::vector<int> time_varying_indices() const;
  std::vector<int> baseline_indices() const;
  int index_of(const std::string& name) const;  // -1 if absent
  int ef_index() const { return index_of(ef_covariate); }

  void validate() const;
  static CovariateSchema from_file(const std::filesystem::path& p);
  static CovariateSchema from_keyvalues(const KeyValueFile& kv);
  std::string to_text() const;
};

// transition indicators
inline constexpr int kDeath = 1;
inline constexpr int kCensored = 0;
inline constexpr int kNextTreatment = -1;

struct CourseRecord {
  int k = 1;
  std::vector<double> covariates;  // full row in schema order
  int treatment = 0;               // a_k
  double waiting_time = 0.0;       // w_k
  int indicator = 0;               // delta_k
};

struct SubjectRecord {
  std::string subject_id;
  std::vector<CourseRecord> courses;  // k = 1..kappa
  int kappa() const { return static_cast<int>(courses.size()); }
  double total_time() const;
};

struct Cohort {
  CovariateSchema schema;
  std::vector<SubjectRecord> subjects;

  int max_courses() const { return schema.K; }
  // largest observed total time among subjects whose last transition is death
  double max_observed_death() const;
  void validate() const;
};

// Prefix of one subject's (observed or simulated) trajectory. rows[j] holds
// the full covariate vector at course j+1; a and w may trail rows by one
// depending on where in the course cycle the caller is.
struct History {
  std::vector<std::vector<double>> rows;
  std::vector<int> a;
  std::vector<double> w;
  int courses() const { return static_cast<int>(rows.size()); }
};

// level = 1 + number of cutpoints strictly below w (ties map down)
int encode_waiting_time(double w, std::span<const double> cutpoints);

// Observable history at decision k: rows/treatments/waits through course k
// (waits only through k if observed). Throws ValidationError if k exceeds
// the subject's observed courses.
History history(const SubjectRecord& s, int k);

// Design vector for course-k hazard and treatment models, without the
// course-k treatment: [TV_k, baselines, lagged(TV_{k-1}, a_{k-1}, wcat_{k-1})],
// lags per the schema's policy.
std::vector<double> encode_model_design(const History& h, int k, const CovariateSchema& schema);
// encode_model_design with the course-k treatment appended
std::vector<double> encode_hazard_design(const History& h, int k, int a_k,
                                         const CovariateSchema& schema);
// Design for the course-k confounder regressions (k >= 2), conditioning on
// history strictly before L_k: [1, baselines, lagged(TV_{k-1}, a_{k-1}, wcat_{k-1})]
std::vector<double> encode_confounder_design(const History& h, int k,
                                             const CovariateSchema& schema);

int model_design_dim(const CovariateSchema& schema, int k);
int confounder_design_dim(const CovariateSchema& schema, int k);

// Fills center/scale for continuous covariates from the cohort rows.
void fit_standardization(Cohort& cohort);

Cohort ingest(const std::filesystem::path& csv_path, const CovariateSchema& schema);
Cohort ingest_text(const std::string& csv_text, const CovariateSchema& schema);
std::string export_csv(const Cohort& cohort);

}  // namespace dtr
