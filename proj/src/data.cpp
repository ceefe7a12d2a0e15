#include "dtr/data.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

namespace dtr {

std::vector<int> CovariateSchema::time_varying_indices() const {
  std::vector<int> out;
  for (int i = 0; i < static_cast<int>(covariates.size()); ++i)
    if (covariates[i].time_varying) out.push_back(i);
  return out;
}

std::vector<int> CovariateSchema::baseline_indices() const {
  std::vector<int> out;
  for (int i = 0; i < static_cast<int>(covariates.size()); ++i)
    if (!covariates[i].time_varying) out.push_back(i);
  return out;
}

int CovariateSchema::index_of(const std::string& name) const {
  for (int i = 0; i < static_cast<int>(covariates.size()); ++i)
    if (covariates[i].name == name) return i;
  return -1;
}

void CovariateSchema::validate() const {
  if (K < 1) throw ValidationError("schema: K must be >= 1");
  std::set<std::string> seen;
  for (const auto& c : covariates) {
    if (c.name.empty()) throw ValidationError("schema: empty covariate name");
    if (!seen.insert(c.name).second)
      throw ValidationError("schema: duplicate covariate '" + c.name + "'");
    if (c.scale <= 0) throw ValidationError("schema: nonpositive scale for '" + c.name + "'");
  }
  if (!w_cutpoints.empty()) {
    if (w_cutpoints.size() != 3)
      throw ValidationError("schema: w_cutpoints needs exactly 3 values");
    for (std::size_t i = 1; i < w_cutpoints.size(); ++i)
      if (!(w_cutpoints[i] > w_cutpoints[i - 1]))
        throw ValidationError("schema: w_cutpoints must be strictly ascending");
  }
  if (!ef_covariate.empty() && index_of(ef_covariate) < 0)
    throw ValidationError("schema: ef covariate '" + ef_covariate + "' not declared");
}

static CovariateType parse_type(const std::string& s) {
  if (s == "continuous") return CovariateType::continuous;
  if (s == "binary") return CovariateType::binary;
  if (s == "proportion") return CovariateType::proportion;
  throw ParseError("unknown covariate type '" + s + "'");
}

static std::string type_name(CovariateType t) {
  switch (t) {
    case CovariateType::continuous: return "continuous";
    case CovariateType::binary: return "binary";
    case CovariateType::proportion: return "proportion";
  }
  return "?";
}

CovariateSchema CovariateSchema::from_keyvalues(const KeyValueFile& kv) {
  CovariateSchema s;
  s.K = kv.get_int("courses", kv.get_int("K", 1));
  for (const auto& line : kv.get_all("covariate")) {
    std::istringstream in(line);
    std::string name, type, role;
    in >> name >> type >> role;
    if (name.empty() || type.empty())
      throw ParseError("covariate line needs 'name type [timevarying|baseline]': " + line);
    CovariateSpec c;
    c.name = name;
    c.type = parse_type(type);
    c.time_varying = (role == "timevarying");
    if (!role.empty() && role != "timevarying" && role != "baseline")
      throw ParseError("covariate role must be timevarying or baseline: " + line);
    s.covariates.push_back(c);
  }
  std::string lag = kv.get_or("lag_policy", "current_previous");
  if (lag == "current_previous")
    s.lag = LagPolicy::current_previous;
  else if (lag == "full_history")
    s.lag = LagPolicy::full_history;
  else
    throw ParseError("lag_policy must be current_previous or full_history");
  s.standardize = kv.get_bool("standardize", true);
  if (kv.has("w_cutpoints") && kv.get("w_cutpoints") != "quantiles") {
    for (double v : parse_number_list(kv.get("w_cutpoints"))) s.w_cutpoints.push_back(v);
  }
  s.ef_covariate = kv.get_or("ef_covariate", "");
  for (const auto& line : kv.get_all("standardization")) {
    std::istringstream in(line);
    std::string name;
    double center, scale;
    if (!(in >> name >> center >> scale))
      throw ParseError("standardization line needs 'name center scale': " + line);
    int idx = s.index_of(name);
    if (idx < 0) throw ParseError("standardization for unknown covariate " + name);
    s.covariates[idx].center = center;
    s.covariates[idx].scale = scale;
  }
  s.validate();
  return s;
}

CovariateSchema CovariateSchema::from_file(const std::filesystem::path& p) {
  return from_keyvalues(KeyValueFile::from_file(p));
}

std::string CovariateSchema::to_text() const {
  std::ostringstream out;
  out << "courses = " << K << "\n";
  for (const auto& c : covariates)
    out << "covariate = " << c.name << " " << type_name(c.type) << " "
        << (c.time_varying ? "timevarying" : "baseline") << "\n";
  out << "lag_policy = "
      << (lag == LagPolicy::current_previous ? "current_previous" : "full_history") << "\n";
  out << "standardize = " << (standardize ? "true" : "false") << "\n";
  if (!w_cutpoints.empty()) {
    out << "w_cutpoints = ";
    for (std::size_t i = 0; i < w_cutpoints.size(); ++i)
      out << (i ? "," : "") << format_double(w_cutpoints[i]);
    out << "\n";
  }
  if (!ef_covariate.empty()) out << "ef_covariate = " << ef_covariate << "\n";
  for (const auto& c : covariates)
    if (c.type == CovariateType::continuous && (c.center != 0.0 || c.scale != 1.0))
      out << "standardization = " << c.name << " " << format_double(c.center) << " "
          << format_double(c.scale) << "\n";
  return out.str();
}

double SubjectRecord::total_time() const {
  double t = 0.0;
  for (const auto& c : courses) t += c.waiting_time;
  return t;
}

double Cohort::max_observed_death() const {
  double m = 0.0;
  for (const auto& s : subjects)
    if (!s.courses.empty() && s.courses.back().indicator == kDeath)
      m = std::max(m, s.total_time());
  return m;
}

static void validate_subject(const SubjectRecord& s, const CovariateSchema& schema) {
  const std::string who = "subject " + s.subject_id;
  if (s.courses.empty()) throw ValidationError(who + ": no courses");
  const int kappa = s.kappa();
  if (kappa > schema.K)
    throw ValidationError(who + ": " + std::to_string(kappa) + " courses exceeds K=" +
                          std::to_string(schema.K));
  for (int j = 0; j < kappa; ++j) {
    const auto& c = s.courses[j];
    if (c.k != j + 1)
      throw ValidationError(who + ": course indices not contiguous from 1");
    if (!(c.waiting_time > 0.0) || !std::isfinite(c.waiting_time))
      throw ValidationError(who + " course " + std::to_string(c.k) +
                            ": nonpositive waiting time");
    if (c.treatment != 0 && c.treatment != 1)
      throw ValidationError(who + " course " + std::to_string(c.k) + ": treatment not in {0,1}");
    if (c.indicator != kDeath && c.indicator != kCensored && c.indicator != kNextTreatment)
      throw ValidationError(who + " course " + std::to_string(c.k) +
                            ": indicator not in {-1,0,1}");
    if (j < kappa - 1 && c.indicator != kNextTreatment)
      throw ValidationError(who + " course " + std::to_string(c.k) +
                            ": non-final course must have delta=-1");
    if (j == kappa - 1 && c.indicator == kNextTreatment)
      throw ValidationError(who + ": last course has delta=-1 (next treatment implied but absent)");
    if (c.covariates.size() != schema.covariates.size())
      throw ValidationError(who + " course " + std::to_string(c.k) + ": covariate count mismatch");
    for (std::size_t p = 0; p < c.covariates.size(); ++p) {
      const auto& spec = schema.covariates[p];
      const double v = c.covariates[p];
      if (!std::isfinite(v))
        throw ValidationError(who + ": non-finite covariate " + spec.name);
      if (spec.type == CovariateType::binary && v != 0.0 && v != 1.0)
        throw ValidationError(who + ": binary covariate " + spec.name + " not in {0,1}");
      if (spec.type == CovariateType::proportion && (v < 0.0 || v > 1.0))
        throw ValidationError(who + ": proportion covariate " + spec.name + " outside [0,1]");
      if (!spec.time_varying && v != s.courses[0].covariates[p])
        throw ValidationError(who + ": baseline covariate " + spec.name +
                              " varies across courses");
    }
  }
}

void Cohort::validate() const {
  schema.validate();
  if (subjects.empty()) throw ValidationError("cohort has no subjects");
  for (const auto& s : subjects) validate_subject(s, schema);
}

int encode_waiting_time(double w, std::span<const double> cutpoints) {
  for (std::size_t i = 1; i < cutpoints.size(); ++i)
    if (!(cutpoints[i] > cutpoints[i - 1]))
      throw ValidationError("waiting-time cutpoints must be strictly ascending");
  int level = 1;
  for (double c : cutpoints)
    if (c < w) ++level;
  return level;
}

History history(const SubjectRecord& s, int k) {
  if (k < 1 || k > s.kappa())
    throw ValidationError("subject " + s.subject_id + ": course " + std::to_string(k) +
                          " out of range (kappa=" + std::to_string(s.kappa()) + ")");
  History h;
  h.rows.reserve(k);
  for (int j = 0; j < k; ++j) {
    h.rows.push_back(s.courses[j].covariates);
    h.a.push_back(s.courses[j].treatment);
    h.w.push_back(s.courses[j].waiting_time);
  }
  return h;
}

static double standardized(double v, const CovariateSpec& spec, const CovariateSchema& schema) {
  if (schema.standardize && spec.type == CovariateType::continuous)
    return (v - spec.center) / spec.scale;
  return v;
}

static void append_lag_block(std::vector<double>& x, const History& h, int lag_course,
                             const CovariateSchema& schema) {
  // lag_course is 1-based; caller guarantees rows/a/w cover it
  const auto& row = h.rows[lag_course - 1];
  for (int idx : schema.time_varying_indices())
    x.push_back(standardized(row[idx], schema.covariates[idx], schema));
  x.push_back(static_cast<double>(h.a[lag_course - 1]));
  if (schema.w_cutpoints.empty())
    throw ValidationError("waiting-time cutpoints not resolved; set schema.w_cutpoints");
  const int level = encode_waiting_time(h.w[lag_course - 1], schema.w_cutpoints);
  for (int l = 2; l <= 4; ++l) x.push_back(level == l ? 1.0 : 0.0);
}

static int lag_block_dim(const CovariateSchema& schema) {
  return static_cast<int>(schema.time_varying_indices().size()) + 1 + 3;
}

static int first_lag_course(const CovariateSchema& schema, int k) {
  if (schema.lag == LagPolicy::full_history) return 1;
  return k - 1;  // current_previous
}

std::vector<double> encode_model_design(const History& h, int k, const CovariateSchema& schema) {
  if (h.courses() < k) throw ValidationError("history has fewer than k courses");
  std::vector<double> x;
  x.reserve(static_cast<std::size_t>(model_design_dim(schema, k)));
  const auto& row = h.rows[k - 1];
  for (int idx : schema.time_varying_indices())
    x.push_back(standardized(row[idx], schema.covariates[idx], schema));
  for (int idx : schema.baseline_indices())
    x.push_back(standardized(h.rows[0][idx], schema.covariates[idx], schema));
  for (int j = k - 1; j >= std::max(1, first_lag_course(schema, k)); --j)
    append_lag_block(x, h, j, schema);
  return x;
}

std::vector<double> encode_hazard_design(const History& h, int k, int a_k,
                                         const CovariateSchema& schema) {
  auto x = encode_model_design(h, k, schema);
  x.push_back(static_cast<double>(a_k));
  return x;
}

std::vector<double> encode_confounder_design(const History& h, int k,
                                             const CovariateSchema& schema) {
  if (k < 2) throw ValidationError("confounder design requires k >= 2");
  if (h.courses() < k - 1 || static_cast<int>(h.a.size()) < k - 1 ||
      static_cast<int>(h.w.size()) < k - 1)
    throw ValidationError("history too short for course-k confounder design");
  std::vector<double> z;
  z.reserve(static_cast<std::size_t>(confounder_design_dim(schema, k)));
  z.push_back(1.0);
  for (int idx : schema.baseline_indices())
    z.push_back(standardized(h.rows[0][idx], schema.covariates[idx], schema));
  for (int j = k - 1; j >= std::max(1, first_lag_course(schema, k)); --j)
    append_lag_block(z, h, j, schema);
  return z;
}

int model_design_dim(const CovariateSchema& schema, int k) {
  const int tv = static_cast<int>(schema.time_varying_indices().size());
  const int base = static_cast<int>(schema.baseline_indices().size());
  const int n_lags = (k <= 1) ? 0
                     : (schema.lag == LagPolicy::full_history ? k - 1 : 1);
  return tv + base + n_lags * lag_block_dim(schema);
}

int confounder_design_dim(const CovariateSchema& schema, int k) {
  const int base = static_cast<int>(schema.baseline_indices().size());
  const int n_lags = (schema.lag == LagPolicy::full_history) ? k - 1 : 1;
  return 1 + base + n_lags * lag_block_dim(schema);
}

void fit_standardization(Cohort& cohort) {
  auto& schema = cohort.schema;
  for (std::size_t p = 0; p < schema.covariates.size(); ++p) {
    auto& spec = schema.covariates[p];
    if (spec.type != CovariateType::continuous) continue;
    double sum = 0.0, sumsq = 0.0;
    std::size_t n = 0;
    for (const auto& s : cohort.subjects) {
      if (spec.time_varying) {
        for (const auto& c : s.courses) {
          sum += c.covariates[p];
          sumsq += c.covariates[p] * c.covariates[p];
          ++n;
        }
      } else {
        sum += s.courses[0].covariates[p];
        sumsq += s.courses[0].covariates[p] * s.courses[0].covariates[p];
        ++n;
      }
    }
    if (n == 0) continue;
    const double mean = sum / static_cast<double>(n);
    double var = sumsq / static_cast<double>(n) - mean * mean;
    spec.center = mean;
    spec.scale = var > 1e-12 ? std::sqrt(var) : 1.0;
  }
}

Cohort ingest_text(const std::string& csv_text, const CovariateSchema& schema) {
  schema.validate();
  std::istringstream in(csv_text);
  std::string line;
  int lineno = 0;
  if (!std::getline(in, line)) throw ParseError("empty cohort file");
  ++lineno;
  // header check
  {
    auto cols = split(trim(line), ',');
    std::vector<std::string> expect = {"subject_id", "k", "a", "w", "delta"};
    for (const auto& c : schema.covariates) expect.push_back(c.name);
    if (cols.size() != expect.size())
      throw ParseError("header has " + std::to_string(cols.size()) + " columns, schema needs " +
                       std::to_string(expect.size()));
    for (std::size_t i = 0; i < cols.size(); ++i)
      if (trim(cols[i]) != expect[i])
        throw ParseError("header column " + std::to_string(i + 1) + " is '" + trim(cols[i]) +
                         "', expected '" + expect[i] + "'");
  }

  Cohort cohort;
  cohort.schema = schema;
  std::map<std::string, std::size_t> subject_pos;
  std::set<std::pair<std::string, int>> seen_course;

  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    auto cols = split(line, ',');
    const std::string ctx = "line " + std::to_string(lineno);
    if (cols.size() != 5 + schema.covariates.size())
      throw ParseError(ctx + ": expected " + std::to_string(5 + schema.covariates.size()) +
                       " columns, got " + std::to_string(cols.size()));
    CourseRecord rec;
    const std::string sid = trim(cols[0]);
    if (sid.empty()) throw ParseError(ctx + ": empty subject_id");
    try {
      rec.k = std::stoi(trim(cols[1]));
      rec.treatment = std::stoi(trim(cols[2]));
      rec.waiting_time = std::stod(trim(cols[3]));
      rec.indicator = std::stoi(trim(cols[4]));
      for (std::size_t p = 0; p < schema.covariates.size(); ++p)
        rec.covariates.push_back(std::stod(trim(cols[5 + p])));
    } catch (const std::exception&) {
      throw ParseError(ctx + ": malformed numeric field");
    }
    if (!seen_course.insert({sid, rec.k}).second)
      throw ValidationError("subject " + sid + ": duplicate course " + std::to_string(rec.k));
    auto it = subject_pos.find(sid);
    if (it == subject_pos.end()) {
      subject_pos[sid] = cohort.subjects.size();
      cohort.subjects.push_back(SubjectRecord{sid, {}});
      it = subject_pos.find(sid);
    }
    cohort.subjects[it->second].courses.push_back(rec);
  }

  for (auto& s : cohort.subjects)
    std::sort(s.courses.begin(), s.courses.end(),
              [](const CourseRecord& a, const CourseRecord& b) { return a.k < b.k; });
  cohort.validate();
  return cohort;
}

Cohort ingest(const std::filesystem::path& csv_path, const CovariateSchema& schema) {
  return ingest_text(read_file(csv_path), schema);
}

std::string export_csv(const Cohort& cohort) {
  std::ostringstream out;
  out << "subject_id,k,a,w,delta";
  for (const auto& c : cohort.schema.covariates) out << "," << c.name;
  out << "\n";
  for (const auto& s : cohort.subjects) {
    for (const auto& c : s.courses) {
      out << s.subject_id << "," << c.k << "," << c.treatment << ","
          << format_double(c.waiting_time) << "," << c.indicator;
      for (double v : c.covariates) out << "," << format_double(v);
      out << "\n";
    }
  }
  return out.str();
}

}  // namespace dtr
