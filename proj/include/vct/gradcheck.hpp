#pragma once

#include <functional>
#include <string>

#include "vct/params.hpp"

namespace vct {

template <typename T>
struct GradCheckReport {
  T max_rel_err = 0;
  std::string worst_param;
  int64_t worst_index = -1;
  T worst_analytic = 0;
  T worst_numeric = 0;
  int64_t entries_checked = 0;
};

// Central finite differences against the analytic gradients currently stored
// in `store` (run backward before calling). `loss_fn` recomputes the scalar
// loss from the store's current parameter values; entries are perturbed in
// place and restored. Probes up to `probes_per_param` random entries of each
// parameter (all entries if the parameter is small enough). `filter`, when
// set, restricts the check to parameters it accepts.
template <typename T>
GradCheckReport<T> check_gradients(
    ParameterStore<T>& store, const std::function<T()>& loss_fn, T step,
    int probes_per_param, Rng& rng,
    const std::function<bool(const std::string&)>& filter = {});

extern template GradCheckReport<float> check_gradients<float>(
    ParameterStore<float>&, const std::function<float()>&, float, int, Rng&,
    const std::function<bool(const std::string&)>&);
extern template GradCheckReport<double> check_gradients<double>(
    ParameterStore<double>&, const std::function<double()>&, double, int, Rng&,
    const std::function<bool(const std::string&)>&);

}  // namespace vct
