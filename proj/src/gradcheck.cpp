#include "vct/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace vct {

template <typename T>
GradCheckReport<T> check_gradients(
    ParameterStore<T>& store, const std::function<T()>& loss_fn, T step,
    int probes_per_param, Rng& rng,
    const std::function<bool(const std::string&)>& filter) {
  GradCheckReport<T> rep;
  for (size_t pi = 0; pi < store.size(); ++pi) {
    Parameter<T>& p = store.at(pi);
    if (filter && !filter(p.name)) continue;
    const int64_t n = p.value.numel();
    const bool exhaustive = n <= probes_per_param;
    const int64_t probes = exhaustive ? n : probes_per_param;
    for (int64_t k = 0; k < probes; ++k) {
      const int64_t idx = exhaustive ? k : rng.uniform_int(n);
      const T saved = p.value[idx];
      p.value[idx] = saved + step;
      const T fp = loss_fn();
      p.value[idx] = saved - step;
      const T fm = loss_fn();
      p.value[idx] = saved;
      const T fd = (fp - fm) / (T(2) * step);
      const T an = p.grad[idx];
      const T rel = std::abs(an - fd) / std::max(std::abs(fd), static_cast<T>(1e-6));
      ++rep.entries_checked;
      if (rel > rep.max_rel_err) {
        rep.max_rel_err = rel;
        rep.worst_param = p.name;
        rep.worst_index = idx;
        rep.worst_analytic = an;
        rep.worst_numeric = fd;
      }
    }
  }
  return rep;
}

template GradCheckReport<float> check_gradients<float>(
    ParameterStore<float>&, const std::function<float()>&, float, int, Rng&,
    const std::function<bool(const std::string&)>&);
template GradCheckReport<double> check_gradients<double>(
    ParameterStore<double>&, const std::function<double()>&, double, int, Rng&,
    const std::function<bool(const std::string&)>&);

}  // namespace vct
