#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <json.hpp>

#include "leafid/features.hpp"

namespace leafid {

struct FitOptions {
  /// Ridge added to the pooled covariance: factor * trace(S) / d.
  double ridge_factor = 1e-6;
};

struct Posterior {
  std::vector<double> probs;
};

/// Gaussian class-conditional densities sharing one pooled covariance.
///
/// Features are standardised with the training mean and standard deviation
/// before fitting. Posteriors use uniform priors unless set otherwise.
class ClassModel {
 public:
  ClassModel() = default;

  /// Builds a model from explicit parameters in the (already standardised)
  /// feature space. Shift 0 / scale 1 gives an identity standardiser.
  ClassModel(Eigen::MatrixXd means, Eigen::MatrixXd covariance, Eigen::VectorXd priors, Eigen::VectorXd shift,
             Eigen::VectorXd scale, double ridge)
      : means_(std::move(means)),
        cov_(std::move(covariance)),
        priors_(std::move(priors)),
        shift_(std::move(shift)),
        scale_(std::move(scale)),
        ridge_(ridge) {
    validate_and_factor();
  }

  int classes() const noexcept { return static_cast<int>(means_.rows()); }
  int dimension() const noexcept { return static_cast<int>(means_.cols()); }
  const Eigen::MatrixXd& means() const noexcept { return means_; }
  const Eigen::MatrixXd& covariance() const noexcept { return cov_; }
  const Eigen::VectorXd& priors() const noexcept { return priors_; }
  const Eigen::VectorXd& shift() const noexcept { return shift_; }
  const Eigen::VectorXd& scale() const noexcept { return scale_; }
  double ridge() const noexcept { return ridge_; }

  // Descriptive metadata carried into saved models.
  FeatureSetSpec layout = FeatureSetSpec::full_layout();
  ExtractionParams params;
  std::vector<std::string> class_names;

  Eigen::VectorXd standardize(std::span<const double> x) const {
    if (static_cast<int>(x.size()) != dimension()) {
      throw Error(Errc::dimension, "model expects " + std::to_string(dimension()) + " features, got " +
                                       std::to_string(x.size()));
    }
    Eigen::VectorXd z(dimension());
    for (int k = 0; k < dimension(); ++k) z[k] = (x[static_cast<std::size_t>(k)] - shift_[k]) / scale_[k];
    return z;
  }

  /// log p(x | class) + log prior, up to one constant shared by all classes.
  std::vector<double> log_scores(std::span<const double> x) const {
    const Eigen::VectorXd z = standardize(x);
    std::vector<double> out(static_cast<std::size_t>(classes()));
    for (int i = 0; i < classes(); ++i) {
      const Eigen::VectorXd diff = z - means_.row(i).transpose();
      const Eigen::VectorXd half = llt_.matrixL().solve(diff);
      out[static_cast<std::size_t>(i)] = -0.5 * half.squaredNorm() + std::log(priors_[i]);
    }
    return out;
  }

 private:
  void validate_and_factor() {
    const auto c = means_.rows();
    const auto d = means_.cols();
    if (c < 2 || d < 1) throw Error(Errc::model, "model needs at least 2 classes and 1 feature");
    if (cov_.rows() != d || cov_.cols() != d || priors_.size() != c || shift_.size() != d || scale_.size() != d) {
      throw Error(Errc::model, "inconsistent model dimensions");
    }
    if (std::abs(priors_.sum() - 1.0) > 1e-12 || (priors_.array() < 0.0).any()) {
      throw Error(Errc::model, "priors must be nonnegative and sum to 1");
    }
    if (!(scale_.array() > 0.0).all()) throw Error(Errc::model, "standardiser scales must be positive");
    if (!(ridge_ >= 0.0)) throw Error(Errc::model, "ridge must be nonnegative");
    Eigen::MatrixXd regularized = cov_;
    regularized.diagonal().array() += ridge_;
    llt_.compute(regularized);
    if (llt_.info() != Eigen::Success) throw Error(Errc::model, "pooled covariance is not positive definite");
  }

  Eigen::MatrixXd means_;
  Eigen::MatrixXd cov_;
  Eigen::VectorXd priors_;
  Eigen::VectorXd shift_;
  Eigen::VectorXd scale_;
  double ridge_ = 0.0;
  Eigen::LLT<Eigen::MatrixXd> llt_;
};

/// Fits class means, the pooled within-class covariance (divisor n - c) and
/// uniform priors on standardised features. Labels must be dense 0..c-1.
inline ClassModel fit(std::span<const FeatureVector> samples, const FitOptions& options = {}) {
  if (samples.empty()) throw Error(Errc::model, "no training samples");
  const FeatureSetSpec layout = samples.front().layout;
  const std::size_t d = samples.front().values.size();
  if (d == 0) throw Error(Errc::model, "feature dimension is zero");

  int c = 0;
  for (const auto& s : samples) {
    if (!s.label) throw Error(Errc::model, "training sample '" + s.source + "' has no label");
    if (*s.label < 0) throw Error(Errc::model, "negative label");
    if (s.values.size() != d || !(s.layout == layout)) throw Error(Errc::dimension, "training layouts differ");
    for (double v : s.values) {
      if (!std::isfinite(v)) throw Error(Errc::model, "non-finite feature in '" + s.source + "'");
    }
    c = std::max(c, *s.label + 1);
  }
  std::vector<int> counts(static_cast<std::size_t>(c), 0);
  for (const auto& s : samples) ++counts[static_cast<std::size_t>(*s.label)];
  if (c < 2) throw Error(Errc::model, "need at least 2 classes");
  for (int i = 0; i < c; ++i) {
    if (counts[static_cast<std::size_t>(i)] < 2) {
      throw Error(Errc::model, "class " + std::to_string(i) + " has fewer than 2 samples");
    }
  }
  const auto n = static_cast<Eigen::Index>(samples.size());
  const auto dim = static_cast<Eigen::Index>(d);

  Eigen::MatrixXd X(n, dim);
  for (Eigen::Index r = 0; r < n; ++r) {
    for (Eigen::Index k = 0; k < dim; ++k) X(r, k) = samples[static_cast<std::size_t>(r)].values[static_cast<std::size_t>(k)];
  }
  const Eigen::VectorXd shift = X.colwise().mean().transpose();
  Eigen::VectorXd scale(dim);
  for (Eigen::Index k = 0; k < dim; ++k) {
    const double var = (X.col(k).array() - shift[k]).square().mean();
    scale[k] = var > 0.0 ? std::sqrt(var) : 1.0;
  }
  for (Eigen::Index r = 0; r < n; ++r) X.row(r) = ((X.row(r).transpose() - shift).array() / scale.array()).transpose();

  Eigen::MatrixXd means = Eigen::MatrixXd::Zero(c, dim);
  for (Eigen::Index r = 0; r < n; ++r) means.row(*samples[static_cast<std::size_t>(r)].label) += X.row(r);
  for (int i = 0; i < c; ++i) means.row(i) /= counts[static_cast<std::size_t>(i)];

  Eigen::MatrixXd centered(n, dim);
  for (Eigen::Index r = 0; r < n; ++r) centered.row(r) = X.row(r) - means.row(*samples[static_cast<std::size_t>(r)].label);
  Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(n - c);
  cov = 0.5 * (cov + cov.transpose());

  const double ridge = options.ridge_factor * cov.trace() / static_cast<double>(dim);
  Eigen::VectorXd priors = Eigen::VectorXd::Constant(c, 1.0 / c);
  ClassModel model(std::move(means), std::move(cov), std::move(priors), shift, scale, ridge);
  model.layout = layout;
  return model;
}

inline ClassModel fit(const std::vector<FeatureVector>& samples, const FitOptions& options = {}) {
  return fit(std::span<const FeatureVector>(samples), options);
}

/// Normalised posterior probabilities (log-sum-exp).
inline Posterior posterior(const ClassModel& model, std::span<const double> x) {
  const auto scores = model.log_scores(x);
  const double top = *std::max_element(scores.begin(), scores.end());
  double total = 0.0;
  for (double s : scores) total += std::exp(s - top);
  const double log_norm = top + std::log(total);
  Posterior p;
  p.probs.reserve(scores.size());
  for (double s : scores) p.probs.push_back(std::exp(s - log_norm));
  return p;
}

inline void check_layout(const ClassModel& model, const FeatureVector& x) {
  if (x.values.size() != static_cast<std::size_t>(model.dimension()) || !(x.layout == model.layout)) {
    throw Error(Errc::dimension, "feature layout '" + x.layout.name() + "' (" + std::to_string(x.values.size()) +
                                     ") does not match model layout '" + model.layout.name() + "' (" +
                                     std::to_string(model.dimension()) + ")");
  }
}

inline Posterior posterior(const ClassModel& model, const FeatureVector& x) {
  check_layout(model, x);
  return posterior(model, std::span<const double>(x.values));
}

/// Index of the largest log score; ties go to the lowest index.
inline int classify(const ClassModel& model, std::span<const double> x) {
  const auto scores = model.log_scores(x);
  return static_cast<int>(std::max_element(scores.begin(), scores.end()) - scores.begin());
}

inline int classify(const ClassModel& model, const FeatureVector& x) {
  check_layout(model, x);
  return classify(model, std::span<const double>(x.values));
}

// ---------------------------------------------------------------------------
// Model file: a JSON header line, then one line each for shift, scale and
// priors, c lines of class means and d lines of pooled covariance rows.

inline constexpr int kModelFormatVersion = 1;

namespace detail {

inline void write_row(std::ostream& out, std::string_view tag, const Eigen::Ref<const Eigen::RowVectorXd>& row) {
  out << tag;
  for (Eigen::Index k = 0; k < row.size(); ++k) out << (k ? ',' : ' ') << format_double(row[k]);
  out << '\n';
}

inline Eigen::RowVectorXd read_row(std::istream& in, std::string_view tag, Eigen::Index expected) {
  std::string line;
  if (!std::getline(in, line)) throw Error(Errc::model, "truncated model file (missing " + std::string(tag) + ")");
  if (line.rfind(std::string(tag) + ' ', 0) != 0) throw Error(Errc::model, "expected '" + std::string(tag) + "' row");
  std::string_view rest = std::string_view(line).substr(tag.size() + 1);
  std::vector<double> values;
  try {
    while (!rest.empty()) {
      const auto comma = rest.find(',');
      values.push_back(parse_double(rest.substr(0, comma)));
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
  } catch (const Error& e) {
    throw Error(Errc::model, "row '" + std::string(tag) + "': " + e.what());
  }
  if (static_cast<Eigen::Index>(values.size()) != expected) {
    throw Error(Errc::model, "row '" + std::string(tag) + "' has the wrong length");
  }
  return Eigen::Map<Eigen::RowVectorXd>(values.data(), expected);
}

}  // namespace detail

inline void save_model(const std::filesystem::path& path, const ClassModel& model,
                       const nlohmann::ordered_json& config_echo = nlohmann::ordered_json::object()) {
  nlohmann::ordered_json header;
  header["format"] = "leafid-model";
  header["version"] = kModelFormatVersion;
  header["classes"] = model.classes();
  header["dimension"] = model.dimension();
  header["layout"] = layout_json(model.layout);
  header["params"] = to_json(model.params);
  header["ridge"] = model.ridge();
  header["class_names"] = model.class_names;
  header["config"] = config_echo;

  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::io, "cannot write '" + path.string() + "'");
  out << header.dump() << '\n';
  detail::write_row(out, "shift", model.shift().transpose());
  detail::write_row(out, "scale", model.scale().transpose());
  detail::write_row(out, "prior", model.priors().transpose());
  for (int i = 0; i < model.classes(); ++i) detail::write_row(out, "mean", model.means().row(i));
  for (int k = 0; k < model.dimension(); ++k) detail::write_row(out, "cov", model.covariance().row(k));
  if (!out) throw Error(Errc::io, "failed writing '" + path.string() + "'");
}

inline ClassModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io, "cannot open '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line)) throw Error(Errc::model, "'" + path.string() + "' is empty");

  int c = 0;
  int d = 0;
  double ridge = 0.0;
  FeatureSetSpec layout;
  ExtractionParams params;
  std::vector<std::string> names;
  try {
    const auto header = nlohmann::json::parse(line);
    if (header.at("format").get<std::string>() != "leafid-model") throw Error(Errc::model, "not a model file");
    if (header.at("version").get<int>() != kModelFormatVersion) throw Error(Errc::model, "unsupported model version");
    c = header.at("classes").get<int>();
    d = header.at("dimension").get<int>();
    ridge = header.at("ridge").get<double>();
    layout = layout_from_json(header.at("layout"));
    params = extraction_params_from_json(header.at("params"));
    names = header.at("class_names").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::model, "bad header in '" + path.string() + "': " + e.what());
  } catch (const Error& e) {
    if (e.code() == Errc::model) throw;
    throw Error(Errc::model, "bad header in '" + path.string() + "': " + e.what());
  }
  if (c < 2 || d < 1 || static_cast<std::size_t>(d) != layout.dimension()) {
    throw Error(Errc::model, "header dimensions are inconsistent");
  }

  const Eigen::VectorXd shift = detail::read_row(in, "shift", d).transpose();
  const Eigen::VectorXd scale = detail::read_row(in, "scale", d).transpose();
  const Eigen::VectorXd priors = detail::read_row(in, "prior", c).transpose();
  Eigen::MatrixXd means(c, d);
  for (int i = 0; i < c; ++i) means.row(i) = detail::read_row(in, "mean", d);
  Eigen::MatrixXd cov(d, d);
  for (int k = 0; k < d; ++k) cov.row(k) = detail::read_row(in, "cov", d);

  ClassModel model(std::move(means), std::move(cov), priors, shift, scale, ridge);
  model.layout = layout;
  model.params = params;
  model.class_names = std::move(names);
  return model;
}

}  // namespace leafid
