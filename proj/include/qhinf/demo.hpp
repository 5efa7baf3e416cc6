#pragma once

// End-to-end rebuild of the OPO design example: plant, bisection, synthesis,
// augmentation, closed-loop verification, the printed controller's checks,
// and the optical parameter inversion, compared against the printed values.

#include "qhinf/analysis.hpp"
#include "qhinf/io.hpp"
#include "qhinf/optics.hpp"
#include "qhinf/realizability.hpp"
#include "qhinf/synthesis.hpp"

#include <cstdio>
#include <string>
#include <vector>

namespace qhinf::demo {

enum class Mark { pass, flag, fail };

inline const char* to_string(Mark m) {
  switch (m) {
    case Mark::pass: return "PASS";
    case Mark::flag: return "FLAG";
    case Mark::fail: return "FAIL";
  }
  return "?";
}

struct Comparison {
  std::string stage;
  std::string quantity;
  double computed = 0.0;
  double reference = 0.0;  // NaN when there is no printed value
  double tolerance = 0.0;
  Mark mark = Mark::pass;
  std::string note;
};

/// A stage that could not run; carries the stage name.
class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, const std::string& what)
      : std::runtime_error(stage + ": " + what), stage_(std::move(stage)) {}
  [[nodiscard]] const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

struct DemoOptions {
  double g_lo = 1e-3;
  double g_hi = 1.0;
  double tol_g = 1e-5;
  double kappa_prime = optics::reference::kKappaPrime;
  lmi::SolverOptions solver;
};

struct DemoReport {
  std::vector<Comparison> rows;
  double g_star = 0.0;
  std::optional<Controller> synthesized;  // augmented
  std::optional<ClosedLoopReport> synthesized_check;
  std::optional<ClosedLoopReport> printed_check;

  [[nodiscard]] int count(Mark m) const {
    int c = 0;
    for (const auto& r : rows) c += r.mark == m;
    return c;
  }
  [[nodiscard]] bool ok() const { return count(Mark::fail) == 0; }
};

namespace detail {

inline constexpr double kNoReference = std::numeric_limits<double>::quiet_NaN();

/// |computed - reference| <= tol passes; otherwise the row gets `miss`.
inline Comparison compare(std::string stage, std::string quantity, double computed, double reference, double tol,
                          Mark miss = Mark::fail, std::string note = {}) {
  Comparison c{std::move(stage), std::move(quantity), computed, reference, tol, Mark::pass, std::move(note)};
  if (!(std::abs(computed - reference) <= tol)) c.mark = miss;
  return c;
}

inline Comparison check(std::string stage, std::string quantity, double computed, bool ok, std::string note = {}) {
  return {std::move(stage), std::move(quantity), computed, kNoReference, 0.0, ok ? Mark::pass : Mark::fail,
          std::move(note)};
}

template <class F>
auto stage(const char* name, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

}  // namespace detail

inline DemoReport run_reference_demo(const DemoOptions& opts = {}) {
  using detail::compare;
  using detail::check;
  namespace ref = optics::reference;
  DemoReport rep;
  auto& rows = rep.rows;
  const auto& printed = ref::printed_modes();

  // Plant.
  const JumpPlant plant = detail::stage("plant", [] { return ref::plant(); });
  for (int i = 0; i < plant.modes(); ++i) {
    const auto& want = ref::plant_a_diagonals()[std::size_t(i)];
    const std::string m = " mode " + std::to_string(i + 1);
    rows.push_back(compare("plant", "A11" + m, plant.a(i)(0, 0), want.first, kPrintedValueTol));
    rows.push_back(compare("plant", "A22" + m, plant.a(i)(1, 1), want.second, kPrintedValueTol));
  }
  const auto plant_pr = plant_realizability(plant);
  double plant_res = 0.0;
  for (std::size_t i = 0; i < plant_pr.cr_residual_norm.size(); ++i)
    plant_res = std::max({plant_res, plant_pr.cr_residual_norm[i], plant_pr.output_residual_norm[i]});
  rows.push_back(check("plant", "plant realizability residual", plant_res, plant_pr.realizable));

  // Bisection and synthesis.
  const auto search = detail::stage("bisection", [&] {
    return min_attenuation(plant, opts.g_lo, opts.g_hi, opts.tol_g, opts.solver);
  });
  rep.g_star = search.g_star;
  rows.push_back(check("synthesis", "certified attenuation g*", search.g_star, search.result.feasible(),
                       "bracket [" + std::to_string(search.g_lower) + ", " + std::to_string(search.g_star) + "]"));
  rows.push_back(check("synthesis", "LMI margin at g*", search.result.solution.margin,
                       search.result.solution.margin >= opts.solver.eps_strict));

  // Augmentation and closed-loop verification of the synthesized controller.
  const Controller synthesized =
      detail::stage("augmentation", [&] { return augment_controller(*search.result.controller); });
  rep.synthesized = synthesized;
  const auto synth_pr = controller_realizability(synthesized);
  double synth_res = 0.0;
  for (std::size_t i = 0; i < synth_pr.cr_residual_norm.size(); ++i)
    synth_res = std::max({synth_res, synth_pr.cr_residual_norm[i], synth_pr.output_residual_norm[i]});
  rows.push_back(check("augmentation", "synthesized controller realizability residual", synth_res,
                       synth_pr.realizable));
  const auto synth_check =
      detail::stage("verification", [&] { return verify_closed_loop(plant, synthesized, search.g_star, opts.solver); });
  rep.synthesized_check = synth_check;
  for (std::size_t i = 0; i < synth_check.hurwitz.size(); ++i)
    rows.push_back(check("verification", "synthesized closed loop spectral abscissa mode " + std::to_string(i + 1),
                         synth_check.spectral_abscissa[i], synth_check.hurwitz[i]));
  rows.push_back(check("verification", "coupled certificate margin at g*", synth_check.certificate.epsilon,
                       synth_check.certificate.feasible()));

  // Printed controller: realizability with the printed noise blocks.
  const Controller printed_aug = ref::controller_augmented();
  const auto printed_pr = controller_realizability(printed_aug, kPrintedValueTol);
  for (std::size_t i = 0; i < printed_pr.cr_residual_norm.size(); ++i) {
    const std::string m = " mode " + std::to_string(i + 1);
    rows.push_back(compare("printed controller", "commutation residual" + m, printed_pr.cr_residual_norm[i], 0.0,
                           kPrintedValueTol));
    const auto& k = printed_aug.mode(int(i));
    const Matrix e1 = k.E.leftCols(2);
    const double out_res =
        linalg::max_abs(e1 - linalg::symplectic_j() * k.C.transpose() * linalg::symplectic_j());
    rows.push_back(compare("printed controller", "output-channel residual" + m, out_res, 0.0, 1e-4));
  }
  const auto core_pr = controller_realizability(ref::controller_core(), kPrintedValueTol);
  rows.push_back(check("printed controller", "realizable without added noise (expected no)",
                       core_pr.cr_residual_norm.front(), !core_pr.realizable));

  const auto printed_check =
      detail::stage("printed closed loop", [&] { return verify_closed_loop(plant, printed_aug, 1.0, opts.solver); });
  rep.printed_check = printed_check;
  for (std::size_t i = 0; i < printed_check.hurwitz.size(); ++i)
    rows.push_back(check("printed closed loop", "spectral abscissa mode " + std::to_string(i + 1),
                         printed_check.spectral_abscissa[i], printed_check.hurwitz[i]));

  // Augmentation of the printed (A, B, C) against the printed extra noise blocks.
  const Controller printed_augmented = detail::stage("augmentation", [&] {
    return augment_controller(ref::controller_core());
  });
  const double e_tol[3] = {1e-3, 2e-3, 1e-3};
  for (int i = 0; i < printed_augmented.modes(); ++i) {
    const auto& e = printed_augmented.mode(i).E;
    const Matrix extra = e.middleCols(2, e.cols() - 2);
    const bool scalar = extra.cols() == 2 && std::abs(extra(0, 1)) < 1e-12 && std::abs(extra(1, 0)) < 1e-12 &&
                        std::abs(extra(0, 0) - extra(1, 1)) < 1e-12;
    rows.push_back(compare("augmentation", "E_extra scalar mode " + std::to_string(i + 1), scalar ? extra(0, 0) : 0.0,
                           printed[std::size_t(i)].e2, e_tol[i]));
  }

  // Mode parameters and optical inversion.
  for (int i = 0; i < int(printed.size()); ++i) {
    const auto& p = printed[std::size_t(i)];
    const auto& k = printed_aug.mode(i);
    const std::string m = " mode " + std::to_string(i + 1);
    rows.push_back(compare("optics", "kappa = -tr A" + m, -k.A.trace(), p.kappa, 2e-3));
    rows.push_back(compare("optics", "chi = (A22 - A11)/2" + m, (k.A(1, 1) - k.A(0, 0)) / 2.0, p.chi, 2e-3));
    rows.push_back(compare("optics", "kappa1 = B11 B22" + m, k.B(0, 0) * k.B(1, 1), p.kappa1, 2e-3));
    const auto real = detail::stage("optics", [&] {
      return optics::realize_controller_optics(k.A, k.B, k.E.leftCols(2), k.E.middleCols(2, 2), opts.kappa_prime);
    });
    rows.push_back(compare("optics", "kappa2 = e1^2" + m, real.realization.kappa2, p.kappa2, 1e-3));
    rows.push_back(compare("optics", "kappa3 = e2^2" + m, real.realization.kappa3, p.kappa3, 1e-3));
    rows.push_back(compare("optics", "kappa1 = kappa - kappa2 - kappa3" + m, real.realization.kappa1, p.kappa1, 2e-3));
    rows.push_back(compare("optics", "chi' from gain ratio" + m, real.realization.chi_prime, p.chi_prime, 2e-3,
                           Mark::flag, "the listed chi' does not reproduce the B gain ratio"));
  }
  const Matrix gain = optics::static_squeezer_gain(opts.kappa_prime, printed.front().chi_prime);
  rows.push_back(compare("optics", "static gain (1,1) at listed chi' mode 1", gain(0, 0), 0.7782, 1e-4));
  rows.push_back(compare("optics", "static gain (2,2) at listed chi' mode 1", gain(1, 1), 1.2851, 1e-4));
  return rep;
}

inline io::Json report_to_json(const DemoReport& r) {
  io::Json j = io::Json::object();
  j["g_star"] = r.g_star;
  io::Json rows = io::Json::array();
  for (const auto& c : r.rows) {
    io::Json row = io::Json::object();
    row["stage"] = c.stage;
    row["quantity"] = c.quantity;
    row["computed"] = c.computed;
    if (std::isnan(c.reference))
      row["reference"] = nullptr;
    else
      row["reference"] = c.reference;
    row["tolerance"] = c.tolerance;
    row["mark"] = to_string(c.mark);
    if (!c.note.empty()) row["note"] = c.note;
    rows.push_back(std::move(row));
  }
  j["rows"] = std::move(rows);
  j["summary"] = {{"pass", r.count(Mark::pass)}, {"flag", r.count(Mark::flag)}, {"fail", r.count(Mark::fail)}};
  if (r.synthesized) j["controller"] = io::controller_to_json(*r.synthesized);
  return j;
}

inline std::string report_to_text(const DemoReport& r) {
  std::string out;
  char buf[512];
  std::snprintf(buf, sizeof buf, "%-20s %-52s %14s %12s %9s  %s\n", "stage", "quantity", "computed", "reference",
                "tol", "mark");
  out += buf;
  for (const auto& c : r.rows) {
    char refbuf[32];
    if (std::isnan(c.reference))
      std::snprintf(refbuf, sizeof refbuf, "-");
    else
      std::snprintf(refbuf, sizeof refbuf, "%.6g", c.reference);
    std::snprintf(buf, sizeof buf, "%-20s %-52s %14.8g %12s %9.1e  %s%s%s\n", c.stage.c_str(), c.quantity.c_str(),
                  c.computed, refbuf, c.tolerance, to_string(c.mark), c.note.empty() ? "" : "  ", c.note.c_str());
    out += buf;
  }
  std::snprintf(buf, sizeof buf, "summary: %d PASS, %d FLAG, %d FAIL (g* = %.8g)\n", r.count(Mark::pass),
                r.count(Mark::flag), r.count(Mark::fail), r.g_star);
  out += buf;
  return out;
}

}  // namespace qhinf::demo
