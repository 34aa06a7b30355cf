#include "l2aug/grad_check.hpp"

#include <cmath>

#include "l2aug/error.hpp"

namespace l2aug::ad {

namespace {

double eval_at(const std::vector<Tensor>& point, const GraphFn& f) {
  Tape tape(false);
  std::vector<Var> vars;
  vars.reserve(point.size());
  for (const Tensor& p : point) vars.push_back(tape.leaf(p));
  Var out = f(tape, vars);
  const Tensor& y = tape.value(out);
  if (y.numel() != 1) throw ShapeError("grad_check: graph output must be scalar");
  return y.data[0];
}

}  // namespace

double grad_check(const std::vector<Tensor>& params, const GraphFn& f, double eps) {
  if (!(eps > 0.0 && eps <= 1e-2)) {
    throw Error("grad_check: eps must be in (0, 1e-2]");
  }

  Tape tape(true);
  std::vector<Var> vars;
  vars.reserve(params.size());
  for (const Tensor& p : params) vars.push_back(tape.leaf(p));
  Var out = f(tape, vars);
  tape.backward(out);

  std::vector<Tensor> point = params;
  double worst = 0.0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    const Tensor analytic = tape.grad(vars[pi]);
    for (std::size_t j = 0; j < point[pi].numel(); ++j) {
      const double saved = point[pi].data[j];
      point[pi].data[j] = saved + eps;
      const double up = eval_at(point, f);
      point[pi].data[j] = saved - eps;
      const double down = eval_at(point, f);
      point[pi].data[j] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double err = std::abs(analytic.data[j] - numeric) / std::max(1.0, std::abs(numeric));
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace l2aug::ad
