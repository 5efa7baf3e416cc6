// qhinf: synthesis, realizability checks, verification, simulation and optical
// realization of coherent H-infinity controllers for jump quantum systems.
//
// Exit codes: 0 success/pass, 1 verification failure, 2 infeasible, 3 input error.

#include "qhinf/qhinf.hpp"

#include <CLI11.hpp>
#include <openssl/evp.h>

#include <cstdio>
#include <filesystem>
#include <iostream>

namespace fs = std::filesystem;
using qhinf::Matrix;
using qhinf::Vector;
using qhinf::io::Json;

namespace {

constexpr const char* kToolVersion = "0.1.0";

enum Exit : int { kOk = 0, kVerifyFail = 1, kInfeasible = 2, kInputError = 3 };

class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

std::string sha256_hex(const std::string& data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("SHA-256 digest failed");
  std::string hex;
  char buf[3];
  for (unsigned i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", md[i]);
    hex += buf;
  }
  return hex;
}

struct Globals {
  std::string out;
  std::string format = "text";
  qhinf::lmi::SolverOptions solver;
};

/// Records what a run read, how it was configured and what it wrote.
class RunManifest {
 public:
  RunManifest(std::string command, const Globals& g) : command_(std::move(command)), globals_(g) {}

  std::string read(const std::string& path) {
    std::string text = qhinf::io::read_file(path);
    inputs_.push_back({{"path", path}, {"sha256", sha256_hex(text)}});
    return text;
  }

  qhinf::io::SystemDocument load(const std::string& path) {
    return qhinf::io::from_json(qhinf::io::parse_text(read(path), path));
  }

  void write(const std::string& path, const std::string& text) {
    qhinf::io::write_file(path, text);
    outputs_.push_back({{"path", path}, {"sha256", sha256_hex(text)}});
  }

  void param(const std::string& key, Json value) { params_[key] = std::move(value); }
  void seed(std::uint64_t s) { seed_ = s; }

  [[nodiscard]] Json to_json() const {
    Json j = Json::object();
    j["command"] = command_;
    j["tool_version"] = kToolVersion;
    j["inputs"] = inputs_;
    j["solver"] = {{"eps_strict", globals_.solver.eps_strict},
                   {"tol", globals_.solver.tol},
                   {"max_iter", globals_.solver.max_iter}};
    j["parameters"] = params_;
    if (seed_)
      j["seed"] = *seed_;
    else
      j["seed"] = nullptr;
    j["outputs"] = outputs_;
    return j;
  }

  /// Next to --out when given (a directory gets manifest.json), stderr otherwise.
  void emit(const std::string& out) const {
    const std::string text = qhinf::io::dump(to_json());
    if (out.empty()) {
      std::cerr << text;
      return;
    }
    fs::path p(out);
    if (fs::is_directory(p))
      p /= "manifest.json";
    else
      p.replace_extension(".manifest.json");
    qhinf::io::write_file(p.string(), text);
  }

 private:
  std::string command_;
  Globals globals_;
  Json inputs_ = Json::array();
  Json outputs_ = Json::array();
  Json params_ = Json::object();
  std::optional<std::uint64_t> seed_;
};

std::string sibling(const std::string& out, const std::string& suffix) {
  fs::path p(out);
  p.replace_extension(suffix);
  return p.string();
}

/// Prints the text rendering or the document on stdout and writes the
/// document to --out.
void emit(const Globals& g, RunManifest& m, const Json& doc, const std::string& text) {
  const std::string body = qhinf::io::dump(doc);
  if (g.format == "doc")
    std::cout << body;
  else
    std::cout << text;
  if (!g.out.empty()) m.write(g.out, body);
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

const qhinf::JumpPlant& need_plant(const qhinf::io::SystemDocument& d, const std::string& path) {
  if (!d.plant) throw InputError(path + ": document has no plant");
  return *d.plant;
}

const qhinf::Controller& need_controller(const qhinf::io::SystemDocument& d, const std::string& path) {
  if (!d.controller) throw InputError(path + ": document has no controller");
  return *d.controller;
}

Json realizability_json(const qhinf::RealizabilityReport& r) {
  Json j = Json::object();
  j["cr_residual"] = r.cr_residual_norm;
  j["output_residual"] = r.output_residual_norm;
  j["tolerance"] = r.tolerance;
  j["realizable"] = r.realizable;
  return j;
}

std::string realizability_text(const std::string& name, const qhinf::RealizabilityReport& r) {
  std::string s = fmt("%s (tolerance %.1e)\n  %-6s %16s %16s\n", name.c_str(), r.tolerance, "mode", "commutation",
                      "output");
  for (std::size_t i = 0; i < r.cr_residual_norm.size(); ++i)
    s += fmt("  %-6zu %16.6e %16.6e\n", i + 1, r.cr_residual_norm[i], r.output_residual_norm[i]);
  s += fmt("  realizable: %s\n", r.realizable ? "yes" : "no");
  return s;
}

Json certificate_json(const qhinf::BoundedRealCertificate& c) {
  Json j = Json::object();
  j["g"] = c.g;
  j["status"] = qhinf::lmi::to_string(c.status);
  j["feasible"] = c.feasible();
  j["epsilon"] = c.epsilon;
  j["lambda"] = c.lambda;
  Json p = Json::array();
  for (const auto& m : c.P_modes) p.push_back(qhinf::io::matrix_to_json(m));
  j["P"] = std::move(p);
  return j;
}

// ---------------------------------------------------------------------------

struct SynthArgs {
  std::string plant;
  std::optional<double> g;
  bool min_g = false;
  double g_lo = 1e-3;
  double g_hi = 1.0;
  double tol_g = 1e-5;
  bool augment = false;
};

int cmd_synth(const Globals& gl, const SynthArgs& a) {
  RunManifest man("synth", gl);
  if (a.g.has_value() == a.min_g) throw InputError("synth: give exactly one of --g or --min-g");
  const auto doc = man.load(a.plant);
  const auto& plant = need_plant(doc, a.plant);
  man.param("augment", a.augment);

  Json cert = Json::object();
  qhinf::SynthesisResult result;
  if (a.min_g) {
    man.param("min_g", {{"g_lo", a.g_lo}, {"g_hi", a.g_hi}, {"tol_g", a.tol_g}});
    try {
      auto s = qhinf::min_attenuation(plant, a.g_lo, a.g_hi, a.tol_g, gl.solver);
      cert["g_lower"] = s.g_lower;
      cert["solves"] = s.solves;
      result = std::move(s.result);
    } catch (const std::runtime_error& e) {
      std::cerr << "synth: " << e.what() << "\n";
      man.emit(gl.out);
      return kInfeasible;
    }
  } else {
    man.param("g", *a.g);
    result = qhinf::synthesize(plant, *a.g, gl.solver);
  }
  cert["g"] = result.g;
  cert["status"] = qhinf::lmi::to_string(result.solution.status);
  cert["margin"] = result.solution.margin;
  cert["iterations"] = result.solution.iterations;
  cert["eps_strict"] = result.solution.eps_strict;
  cert["constraint_margins"] = result.solution.constraint_margins;
  cert["coupling_condition"] = result.coupling_condition;

  std::string text = fmt("level g        %.10g\nstatus         %s\nmargin         %.6e\niterations     %d\n", result.g,
                         qhinf::lmi::to_string(result.solution.status), result.solution.margin,
                         result.solution.iterations);
  if (!result.feasible()) {
    std::cout << (gl.format == "doc" ? qhinf::io::dump(cert) : text);
    if (!gl.out.empty()) man.write(sibling(gl.out, ".certificate.json"), qhinf::io::dump(cert));
    man.emit(gl.out);
    return kInfeasible;
  }
  qhinf::Controller ctrl = *result.controller;
  if (a.augment) ctrl = qhinf::augment_controller(ctrl);
  qhinf::io::SystemDocument out;
  out.plant = plant;
  out.controller = ctrl;
  const Json sys = qhinf::io::to_json(out);
  for (std::size_t i = 0; i < result.coupling_condition.size(); ++i)
    text += fmt("cond mode %-4zu %.3e\n", i + 1, result.coupling_condition[i]);
  text += fmt("noise channels %ld\n", long(ctrl.n_nu()));

  if (gl.format == "doc")
    std::cout << qhinf::io::dump(cert);
  else
    std::cout << text;
  if (!gl.out.empty()) {
    man.write(gl.out, qhinf::io::dump(sys));
    man.write(sibling(gl.out, ".certificate.json"), qhinf::io::dump(cert));
  }
  man.emit(gl.out);
  return kOk;
}

// ---------------------------------------------------------------------------

struct CheckArgs {
  std::string system;
  double pr_tol = qhinf::kRealizabilityTol;
};

int cmd_check_pr(const Globals& gl, const CheckArgs& a) {
  RunManifest man("check-pr", gl);
  man.param("pr_tol", a.pr_tol);
  const auto doc = man.load(a.system);
  Json out = Json::object();
  std::string text;
  bool ok = true;
  bool any = false;
  auto add = [&](const std::string& key, const std::string& title, const qhinf::RealizabilityReport& r) {
    out[key] = realizability_json(r);
    text += realizability_text(title, r);
    ok = ok && r.realizable;
    any = true;
  };
  if (doc.plant) add("plant", "plant", qhinf::plant_realizability(*doc.plant, a.pr_tol));
  if (doc.controller) {
    const auto& k = *doc.controller;
    add("controller", k.augmented() ? "controller" : "controller (no noise channels)",
        qhinf::controller_realizability(k, a.pr_tol));
  }
  if (doc.physical) {
    const auto ss = qhinf::physical_to_statespace(*doc.physical, *doc.physical_theta);
    const auto fields = ss.B.cols();
    add("physical", "physical system",
        qhinf::is_physically_realizable(std::vector<qhinf::QuantumSystemMode>{{ss.A, ss.B, ss.C, ss.D}}, *doc.physical_theta,
                                        qhinf::linalg::block_diag_j(fields / 2), a.pr_tol));
  }
  if (!any) throw InputError(a.system + ": nothing to check (need plant, controller or physical)");
  out["realizable"] = ok;
  emit(gl, man, out, text);
  man.emit(gl.out);
  return ok ? kOk : kVerifyFail;
}

// ---------------------------------------------------------------------------

int cmd_augment(const Globals& gl, const std::string& path) {
  RunManifest man("augment", gl);
  auto doc = man.load(path);
  const auto& k = need_controller(doc, path);
  std::vector<qhinf::ControllerMode> core;
  for (const auto& m : k.mode_list()) core.push_back({m.A, m.B, m.C, {}, {}});
  const qhinf::Controller aug = qhinf::augment_controller(qhinf::Controller(std::move(core), k.theta()));
  std::string text = fmt("noise channels %ld (output channel %ld)\n", long(aug.n_nu()), long(aug.n_u()));
  for (int i = 0; i < aug.modes(); ++i) {
    const auto& e = aug.mode(i).E;
    text += fmt("mode %-3d |E_out| %.6g  |E_extra| %.6g\n", i + 1, e.leftCols(aug.n_u()).norm(),
                e.rightCols(e.cols() - aug.n_u()).norm());
  }
  const auto pr = qhinf::controller_realizability(aug);
  text += realizability_text("augmented controller", pr);
  doc.controller = aug;
  emit(gl, man, qhinf::io::to_json(doc), text);
  man.emit(gl.out);
  return pr.realizable ? kOk : kVerifyFail;
}

// ---------------------------------------------------------------------------

struct AnalyzeArgs {
  std::string plant;
  std::string controller;
  double g = 0.0;
  std::string reading = "row-index";
};

int cmd_analyze(const Globals& gl, const AnalyzeArgs& a) {
  RunManifest man("analyze", gl);
  man.param("g", a.g);
  man.param("reading", a.reading);
  const auto pd = man.load(a.plant);
  const auto cd = a.controller == a.plant ? pd : man.load(a.controller);
  const auto reading =
      a.reading == "literal" ? qhinf::CouplingReading::literal : qhinf::CouplingReading::row_index;
  const auto rep = qhinf::verify_closed_loop(need_plant(pd, a.plant), need_controller(cd, a.controller), a.g,
                                             gl.solver, reading);
  Json out = Json::object();
  out["g"] = rep.g;
  out["reading"] = a.reading;
  Json modes = Json::array();
  std::string text = fmt("closed loop at g = %.10g (%s coupling)\n  %-6s %18s %8s\n", rep.g, a.reading.c_str(),
                         "mode", "spectral abscissa", "Hurwitz");
  for (std::size_t i = 0; i < rep.hurwitz.size(); ++i) {
    modes.push_back({{"spectral_abscissa", rep.spectral_abscissa[i]}, {"hurwitz", bool(rep.hurwitz[i])}});
    text += fmt("  %-6zu %18.8g %8s\n", i + 1, rep.spectral_abscissa[i], rep.hurwitz[i] ? "yes" : "no");
  }
  out["modes"] = std::move(modes);
  out["certificate"] = certificate_json(rep.certificate);
  text += fmt("certificate    %s, margin %.6e, noise throughput %.6g\n",
              qhinf::lmi::to_string(rep.certificate.status), rep.certificate.epsilon, rep.certificate.lambda);
  if (rep.realizability) {
    out["realizability"] = realizability_json(*rep.realizability);
    text += realizability_text("controller", *rep.realizability);
  }
  out["pass"] = rep.pass;
  text += fmt("result         %s\n", rep.pass ? "PASS" : "FAIL");
  emit(gl, man, out, text);
  man.emit(gl.out);
  return rep.pass ? kOk : kVerifyFail;
}

// ---------------------------------------------------------------------------

struct SimArgs {
  std::string system;
  int paths = 100;
  double t_end = 50.0;
  std::uint64_t seed = 1;
  std::vector<std::string> disturbances;
  double dt = 1e-2;
  int initial_mode = 1;
  unsigned threads = 0;
  std::optional<double> g;
  std::string columns;
};

void write_columns(RunManifest& man, const std::string& path, const qhinf::ClosedLoop& cl,
                   const qhinf::MarkovPath& mp, const qhinf::Disturbance& d, double dt) {
  const auto n = cl.dim();
  qhinf::MomentOptions mo;
  mo.dt = std::min(dt, qhinf::stable_step(cl));
  const auto traj = qhinf::propagate_moments(cl, mp, d.signal, Vector::Zero(n), Matrix::Zero(n, n), mo);
  std::string s = "# t";
  for (Eigen::Index i = 0; i < n; ++i) s += fmt(" m%ld", long(i));
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index k = i; k < n; ++k) s += fmt(" Q%ld_%ld", long(i), long(k));
  s += " E_out E_in\n";
  double e_out = 0.0, e_in = 0.0, prev_out = 0.0, prev_in = 0.0;
  for (std::size_t r = 0; r < traj.t.size(); ++r) {
    const auto& c = cl.modes[std::size_t(mp.mode_at(traj.t[r]))].C;
    const double p_out = (c * traj.Q[r] * c.transpose()).trace();
    const double p_in = d.signal(traj.t[r]).squaredNorm();
    if (r > 0) {
      const double h = traj.t[r] - traj.t[r - 1];
      e_out += 0.5 * h * (p_out + prev_out);
      e_in += 0.5 * h * (p_in + prev_in);
    }
    prev_out = p_out;
    prev_in = p_in;
    s += fmt("%.10g", traj.t[r]);
    for (Eigen::Index i = 0; i < n; ++i) s += fmt(" %.10g", traj.mean[r](i));
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index k = i; k < n; ++k) s += fmt(" %.10g", traj.Q[r](i, k));
    s += fmt(" %.10g %.10g\n", e_out, e_in);
  }
  man.write(path, s);
}

int cmd_simulate(const Globals& gl, const SimArgs& a) {
  RunManifest man("simulate", gl);
  man.seed(a.seed);
  man.param("paths", a.paths);
  man.param("t_end", a.t_end);
  man.param("dt", a.dt);
  man.param("initial_mode", a.initial_mode);
  man.param("disturbances", a.disturbances);
  if (a.g) man.param("g", *a.g);
  const auto doc = man.load(a.system);
  const auto& plant = need_plant(doc, a.system);
  const auto cl = qhinf::assemble_closed_loop(plant, need_controller(doc, a.system));
  if (a.initial_mode < 1 || a.initial_mode > plant.modes()) throw InputError("--initial-mode out of range");

  std::vector<qhinf::Disturbance> family;
  if (a.disturbances.empty())
    family = qhinf::default_disturbances(plant.n_w());
  else
    for (const auto& s : a.disturbances) family.push_back(qhinf::parse_disturbance(s, plant.n_w()));

  qhinf::AttenuationOptions opts;
  opts.t_end = a.t_end;
  opts.n_paths = a.paths;
  opts.master_seed = a.seed;
  opts.initial_mode = a.initial_mode - 1;
  opts.dt = a.dt;
  opts.threads = a.threads;
  const auto est = qhinf::estimate_attenuation(cl, family, opts);

  Json out = Json::object();
  out["paths"] = a.paths;
  out["t_end"] = a.t_end;
  out["seed"] = a.seed;
  Json dist = Json::array();
  std::string text = fmt("%d paths, horizon %.6g, seed %llu\n  %-24s %16s %16s\n", a.paths, a.t_end,
                         static_cast<unsigned long long>(a.seed), "disturbance", "mean ratio", "max ratio");
  for (std::size_t d = 0; d < est.labels.size(); ++d) {
    double worst = 0.0;
    for (double r : est.ratio[d]) worst = std::max(worst, r);
    dist.push_back({{"label", est.labels[d]}, {"mean_ratio", est.mean_ratio[d]}, {"max_ratio", worst}});
    text += fmt("  %-24s %16.8g %16.8g\n", est.labels[d].c_str(), est.mean_ratio[d], worst);
  }
  out["disturbances"] = std::move(dist);
  out["max_mean_ratio"] = est.max_mean_ratio;
  out["max_path_ratio"] = est.max_path_ratio;
  Json paths = Json::array();
  for (std::size_t p = 0; p < est.paths.size(); ++p)
    paths.push_back({{"index", p}, {"seed", est.paths[p].seed}, {"jumps", est.paths[p].jump_times.size()}});
  out["path_summary"] = std::move(paths);
  text += fmt("max mean ratio %.8g\nmax path ratio %.8g\n", est.max_mean_ratio, est.max_path_ratio);
  bool ok = true;
  if (a.g) {
    ok = est.below(*a.g);
    out["g"] = *a.g;
    out["bound"] = *a.g * *a.g;
    out["below"] = ok;
    text += fmt("bound g^2      %.8g (%s)\n", *a.g * *a.g, ok ? "below" : "EXCEEDED");
  }
  if (!a.columns.empty()) write_columns(man, a.columns, cl, est.paths.front(), family.front(), a.dt);
  emit(gl, man, out, text);
  man.emit(gl.out);
  return ok ? kOk : kVerifyFail;
}

// ---------------------------------------------------------------------------

int cmd_optics_realize(const Globals& gl, const std::string& path, double kappa_prime) {
  RunManifest man("optics realize", gl);
  man.param("kappa_prime", kappa_prime);
  const auto doc = man.load(path);
  qhinf::Controller k = need_controller(doc, path);
  if (!k.augmented()) k = qhinf::augment_controller(k);
  if (k.n_k() != 2 || k.n_y() != 2 || k.n_u() != 2)
    throw InputError("optics realize: needs a single-mode controller with two quadratures per port");
  if (k.n_nu() < 4) throw InputError("optics realize: needs an output channel and one extra noise channel");
  for (const auto& m : k.mode_list())
    if (k.n_nu() > 4 && qhinf::linalg::max_abs(m.E.rightCols(k.n_nu() - 4)) > 0.0)
      throw InputError("optics realize: more than one extra noise channel is not a three-mirror cavity");

  Json modes = Json::array();
  std::string text = fmt("kappa' = %.6g\n  %-5s %10s %10s %10s %10s %10s %10s %12s %s\n", kappa_prime, "mode", "kappa",
                         "chi", "kappa1", "kappa2", "kappa3", "chi'", "|B11B22-k1|", "consistent");
  bool ok = true;
  for (int i = 0; i < k.modes(); ++i) {
    const auto& m = k.mode(i);
    const auto rep = qhinf::optics::realize_controller_optics(m.A, m.B, m.E.leftCols(2), m.E.middleCols(2, 2),
                                                              kappa_prime);
    const auto& r = rep.realization;
    modes.push_back({{"kappa", r.kappa},
                     {"chi", r.chi},
                     {"kappa1", r.kappa1},
                     {"kappa2", r.kappa2},
                     {"kappa3", r.kappa3},
                     {"kappa_prime", r.kappa_prime},
                     {"chi_prime", r.chi_prime},
                     {"b_sign", r.b_sign},
                     {"product_residual", rep.product_residual},
                     {"product_consistent", rep.product_consistent}});
    text += fmt("  %-5d %10.6g %10.6g %10.6g %10.6g %10.6g %10.6g %12.3e %s\n", i + 1, r.kappa, r.chi, r.kappa1,
                r.kappa2, r.kappa3, r.chi_prime, rep.product_residual, rep.product_consistent ? "yes" : "no");
    ok = ok && rep.product_consistent;
  }
  Json out = Json::object();
  out["modes"] = std::move(modes);
  out["consistent"] = ok;
  emit(gl, man, out, text);
  man.emit(gl.out);
  return ok ? kOk : kVerifyFail;
}

int cmd_demo_paper(const Globals& gl, const std::string& command) {
  RunManifest man(command, gl);
  qhinf::demo::DemoOptions opts;
  opts.solver = gl.solver;
  man.param("g_lo", opts.g_lo);
  man.param("g_hi", opts.g_hi);
  man.param("tol_g", opts.tol_g);
  man.param("kappa_prime", opts.kappa_prime);
  qhinf::demo::DemoReport rep;
  try {
    rep = qhinf::demo::run_reference_demo(opts);
  } catch (const qhinf::demo::StageError& e) {
    std::cerr << "demo-paper: stage '" << e.stage() << "' failed: " << e.what() << "\n";
    man.emit(gl.out);
    return e.stage() == "bisection" ? kInfeasible : kVerifyFail;
  }
  const Json doc = qhinf::demo::report_to_json(rep);
  const std::string text = qhinf::demo::report_to_text(rep);
  std::cout << (gl.format == "doc" ? qhinf::io::dump(doc) : text);
  if (!gl.out.empty()) {
    fs::create_directories(gl.out);
    const fs::path dir(gl.out);
    man.write((dir / "report.json").string(), qhinf::io::dump(doc));
    man.write((dir / "report.txt").string(), text);
    qhinf::io::SystemDocument sys;
    sys.plant = qhinf::optics::reference::plant();
    sys.controller = rep.synthesized;
    man.write((dir / "synthesized.json").string(), qhinf::io::dump(qhinf::io::to_json(sys)));
    sys.controller = qhinf::optics::reference::controller_augmented();
    man.write((dir / "printed.json").string(), qhinf::io::dump(qhinf::io::to_json(sys)));
  }
  man.emit(gl.out);
  return rep.ok() ? kOk : kVerifyFail;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Coherent H-infinity control of Markovian-jump linear quantum systems"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", kToolVersion);

  Globals gl;
  app.add_option("--out", gl.out, "Output document (a directory for demo-paper)");
  app.add_option("--format", gl.format, "Standard output format")->check(CLI::IsMember({"text", "doc"}));
  app.add_option("--eps-strict", gl.solver.eps_strict, "Strictness margin for LMI certificates")
      ->check(CLI::PositiveNumber);
  app.add_option("--tol", gl.solver.tol, "LMI solver tolerance")->check(CLI::PositiveNumber);
  app.add_option("--max-iter", gl.solver.max_iter, "LMI solver iteration limit")->check(CLI::PositiveNumber);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Synthesize a mode-dependent controller");
  s->add_option("--plant", synth.plant, "System document with plant and rates")->required()->check(CLI::ExistingFile);
  auto* g_opt = s->add_option("--g", synth.g, "Attenuation level")->check(CLI::PositiveNumber);
  auto* min_opt = s->add_flag("--min-g", synth.min_g, "Bisect for the smallest certified level");
  g_opt->excludes(min_opt);
  s->add_option("--g-lo", synth.g_lo, "Initial lower bracket for --min-g")->check(CLI::PositiveNumber);
  s->add_option("--g-hi", synth.g_hi, "Initial upper bracket for --min-g")->check(CLI::PositiveNumber);
  s->add_option("--tol-g", synth.tol_g, "Bracket width for --min-g")->check(CLI::PositiveNumber);
  s->add_flag("--augment", synth.augment, "Add the noise channels needed for realizability");

  CheckArgs check;
  auto* c = app.add_subcommand("check-pr", "Physical realizability report");
  c->add_option("--system", check.system, "System document")->required()->check(CLI::ExistingFile);
  c->add_option("--pr-tol", check.pr_tol, "Residual tolerance")->check(CLI::PositiveNumber);

  std::string augment_path;
  auto* au = app.add_subcommand("augment", "Add vacuum noise channels to a controller");
  au->add_option("--controller", augment_path, "System document with a controller")
      ->required()
      ->check(CLI::ExistingFile);

  AnalyzeArgs analyze;
  auto* an = app.add_subcommand("analyze", "Verify a closed loop at a given level");
  an->add_option("--plant", analyze.plant, "System document with plant and rates")
      ->required()
      ->check(CLI::ExistingFile);
  an->add_option("--controller", analyze.controller, "System document with a controller")
      ->required()
      ->check(CLI::ExistingFile);
  an->add_option("--g", analyze.g, "Attenuation level")->required()->check(CLI::PositiveNumber);
  an->add_option("--reading", analyze.reading, "Coupling term of the mode inequalities")
      ->check(CLI::IsMember({"row-index", "literal"}));

  SimArgs sim;
  auto* si = app.add_subcommand("simulate", "Moment simulation along sampled fault paths");
  si->add_option("--system", sim.system, "System document with plant, rates and controller")
      ->required()
      ->check(CLI::ExistingFile);
  si->add_option("--paths", sim.paths, "Number of fault paths")->check(CLI::PositiveNumber);
  si->add_option("--t-end", sim.t_end, "Horizon")->check(CLI::PositiveNumber);
  si->add_option("--seed", sim.seed, "Master seed");
  si->add_option("--disturbance", sim.disturbances, "sin:<w> or step (repeatable; default family otherwise)");
  si->add_option("--dt", sim.dt, "Largest integration step")->check(CLI::PositiveNumber);
  si->add_option("--initial-mode", sim.initial_mode, "Initial mode (1-based)");
  si->add_option("--threads", sim.threads, "Worker threads (0: all cores)");
  si->add_option("--g", sim.g, "Compare the estimate against g^2")->check(CLI::PositiveNumber);
  si->add_option("--columns", sim.columns, "Plain-text plot columns for the first path and disturbance");

  auto* op = app.add_subcommand("optics", "Optical realization");
  op->require_subcommand(1);
  std::string optics_ctrl;
  double kappa_prime = qhinf::optics::reference::kKappaPrime;
  auto* re = op->add_subcommand("realize", "Optical parameters of a diagonal controller");
  re->add_option("--controller", optics_ctrl, "System document with a controller")
      ->required()
      ->check(CLI::ExistingFile);
  re->add_option("--kappa-prime", kappa_prime, "Static squeezer decay rate")->check(CLI::PositiveNumber);
  auto* op_demo = op->add_subcommand("demo-paper", "Rebuild the OPO design example");

  auto* demo = app.add_subcommand("demo-paper", "Rebuild the OPO design example");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kInputError;
  }

  try {
    if (*s) return cmd_synth(gl, synth);
    if (*c) return cmd_check_pr(gl, check);
    if (*au) return cmd_augment(gl, augment_path);
    if (*an) return cmd_analyze(gl, analyze);
    if (*si) return cmd_simulate(gl, sim);
    if (*re) return cmd_optics_realize(gl, optics_ctrl, kappa_prime);
    if (*op_demo) return cmd_demo_paper(gl, "optics demo-paper");
    if (*demo) return cmd_demo_paper(gl, "demo-paper");
  } catch (const qhinf::io::DocumentError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kInputError;
  } catch (const std::invalid_argument& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kInputError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kVerifyFail;
  }
  return kInputError;
}
