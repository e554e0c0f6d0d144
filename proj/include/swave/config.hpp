#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "swave/dynamics.hpp"
#include "swave/energy.hpp"
#include "swave/estimators.hpp"

namespace swave {

/// Validation failure tied to a dotted config path, e.g. "ensemble.dt".
class ConfigError : public std::invalid_argument
{
  public:
    ConfigError(std::string field, std::string const& message)
        : std::invalid_argument(field + ": " + message), field_(std::move(field))
    {
    }
    std::string const& field() const { return field_; }

  private:
    std::string field_;
};

struct AnalysisSpec
{
    std::optional<double> lambda;
    std::optional<double> alpha1;
    std::vector<std::string> functionals{"energy"};
    std::optional<std::pair<double, double>> fit_window;
    QvRule qv_rule = QvRule::realized;
    bool per_path = false;

    // verify kinds
    std::vector<double> dts;                          ///< energy-identity, appendix-moment
    std::vector<std::pair<double, double>> points;    ///< stationary
    std::vector<double> lambdas;                      ///< lemma33
    std::size_t states = 10000;                       ///< lemma33
    std::vector<int> powers{2, 4};                    ///< appendix-moment
    double sigma = 1.0;                               ///< appendix-moment frozen amplitude
    double horizon = 1.0;                             ///< appendix-moment
    std::vector<double> xi2_u, xi2_v;                 ///< coupling second start
    double g_max = 10.0;                              ///< lipschitz
    double early = 5.0, late = 20.0;                  ///< lipschitz
    std::size_t resamples = 1000;                     ///< stability bootstrap

    // check-conditions
    double eps = 0.01, eps1 = 0.01, eps2 = 0.01;
    std::optional<double> lambda_max;
};

struct OutputSpec
{
    std::string directory = "out";
    std::vector<std::string> formats{"csv", "json"};

    bool wants(std::string const& fmt) const;
};

struct RunConfig
{
    ModelSpec model;
    EnsembleConfig ensemble;
    AnalysisSpec analysis;
    OutputSpec output;
};

/// Parses TOML text. Unknown keys, wrong types and keys that do not apply to
/// the selected drift/noise kind are rejected with their field path.
RunConfig parse_config(std::string const& text);
RunConfig load_config(std::string const& path);

/// Checks the parsed config against the module preconditions.
void validate_config(RunConfig const& cfg);

/// Fully resolved config (defaults included) as TOML text that parses back
/// to the same RunConfig.
std::string resolved_toml(RunConfig const& cfg);

}  // namespace swave
