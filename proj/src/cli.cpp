#include "dckit/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "dckit/dckit.hpp"

namespace dckit::cli {
namespace {

using io::json;

struct Source {
  std::string problem;
  std::string gallery;
  std::string generate;
  std::uint64_t seed = 0;
  int dim = 5;
  int pieces = 4;
  int parts = 2;
  int users = 2;
  int carriers = 2;
  int jammers = 1;

  void add_to(CLI::App* app) {
    app->add_option("--problem", problem, "Problem JSON file");
    app->add_option("--gallery", gallery, "Named toy instance");
    app->add_option("--generate", generate, "Generator: random | random-constrained | secrecy | qpcc-toy");
    app->add_option("--seed", seed, "Seed for generators and randomized methods");
    app->add_option("--dim", dim, "Dimension for random generators");
    app->add_option("--pieces", pieces, "Pieces per group for random generators");
    app->add_option("--parts", parts, "Constraint parts for random-constrained");
    app->add_option("--users", users, "Secrecy: users Q");
    app->add_option("--carriers", carriers, "Secrecy: carriers N");
    app->add_option("--jammers", jammers, "Secrecy: jammers J");
  }
};

struct Loaded {
  std::string label;
  DcProgram program;
  std::optional<ConstrainedDcProgram> constrained;
  Vector start;
};

Loaded load(const Source& s) {
  const int given = !s.problem.empty() + !s.gallery.empty() + !s.generate.empty();
  if (given != 1) throw InvalidParams("give exactly one of --problem, --gallery, --generate");
  Loaded L;
  if (!s.problem.empty()) {
    const json j = io::read_json_file(s.problem);
    io::Problem p = io::problem_from_json(j);
    L.label = s.problem;
    L.program = p.program;
    if (p.constraint) L.constrained = p.constrained();
    L.start = j.contains("start") ? io::detail::vector(j["start"], "$.start", L.program.dim())
                                  : Vector::Zero(L.program.dim());
    return L;
  }
  if (!s.gallery.empty()) {
    GalleryEntry e = toy_gallery(s.gallery);
    L.label = "gallery:" + e.name;
    L.program = e.program;
    L.constrained = e.constrained;
    L.start = e.start;
    return L;
  }
  L.label = "generate:" + s.generate + ":seed=" + std::to_string(s.seed);
  if (s.generate == "random") {
    L.program = random_dc_program(s.seed, s.dim, s.pieces);
  } else if (s.generate == "random-constrained") {
    ConstrainedDcProgram C = random_constrained_program(s.seed, s.dim, s.pieces, s.parts);
    L.program = C.base;
    L.constrained = std::move(C);
  } else if (s.generate == "secrecy") {
    SecrecyProgram sp = secrecy_rate_program(random_secrecy_params(s.users, s.carriers, s.jammers, s.seed));
    L.program = sp.program;
    L.constrained = sp.constrained;
    L.start = sp.start;
  } else if (s.generate == "qpcc-toy") {
    ConstrainedDcProgram C = qpcc_program(qpcc_toy_data());
    L.program = C.base;
    L.constrained = std::move(C);
  } else {
    throw UnknownName("unknown generator '" + s.generate + "'");
  }
  if (L.start.size() == 0) L.start = Vector::Zero(L.program.dim());
  return L;
}

Vector to_vector(const std::vector<double>& v, Index n, const char* what) {
  if (static_cast<Index>(v.size()) != n) {
    throw InvalidParams(std::string(what) + " needs " + std::to_string(n) + " entries, got " + std::to_string(v.size()));
  }
  return Eigen::Map<const Vector>(v.data(), n);
}

int threads_from(int flag) {
  int t = flag;
  if (const char* env = std::getenv("DCKIT_THREADS")) {
    const int cap = std::atoi(env);
    if (cap > 0) t = t > 0 ? std::min(t, cap) : cap;
  }
  return t;
}

void emit(const json& j, const std::string& path, std::ostream& out) {
  const std::string text = j.dump(2) + "\n";
  if (path.empty()) {
    out << text;
  } else {
    io::write_text_file(path, text);
  }
}

json certificate_or_note(const std::function<Certificate()>& fn) {
  try {
    return io::to_json(fn());
  } catch (const UnsupportedStructure& e) {
    return json{{"verdict", "Unsupported"}, {"note", e.what()}};
  } catch (const TupleExplosion& e) {
    return json{{"verdict", "Skipped"}, {"note", e.what()}};
  }
}

json certificate_if_feasible(const std::function<Certificate()>& fn) {
  try {
    return certificate_or_note(fn);
  } catch (const NotFeasible& e) {
    return json{{"verdict", "Skipped"}, {"note", e.what()}};
  }
}

int termination_code(Termination t) { return t == Termination::StepBelowTol ? kOk : kNotConverged; }

struct SolveArgs {
  Source source;
  std::string method = "auto";
  SolveOptions opt;
  PenaltyOptions popt;
  ConsensusOptions copt;
  std::vector<double> x0;
  std::string trace;
  std::string report;
  double cert_tol = 1e-6;
  int threads = 0;
  double rho0 = std::numeric_limits<double>::quiet_NaN();
  double gamma = std::numeric_limits<double>::quiet_NaN();
  double rho_max = std::numeric_limits<double>::quiet_NaN();
};

int do_solve(SolveArgs& a, std::ostream& out) {
  const Loaded L = load(a.source);
  a.opt.seed = a.source.seed;
  a.opt.threads = threads_from(a.threads);
  for (double* p : {&a.popt.rho0, &a.copt.rho0}) {
    if (!std::isnan(a.rho0)) *p = a.rho0;
  }
  for (double* p : {&a.popt.gamma, &a.copt.gamma}) {
    if (!std::isnan(a.gamma)) *p = a.gamma;
  }
  for (double* p : {&a.popt.rho_max, &a.copt.rho_max}) {
    if (!std::isnan(a.rho_max)) *p = a.rho_max;
  }
  const Vector x0 = a.x0.empty() ? L.start : to_vector(a.x0, L.program.dim(), "--x0");

  std::string method = a.method;
  if (method == "auto") {
    method = !L.constrained ? "algorithm1" : L.constrained->feasible(x0) ? "algorithm2" : "penalty";
  }
  const bool needs_constraint = method == "algorithm2" || method == "penalty";
  if (needs_constraint && !L.constrained) throw InvalidParams("method " + method + " needs a dc constraint");
  if (!needs_constraint && L.constrained) {
    throw InvalidParams("problem has a dc constraint; use --method algorithm2 or penalty");
  }

  json rep;
  SolveReport sr;
  int code = kOk;
  if (method == "algorithm1" || method == "algorithm1-random" || method == "dca-baseline") {
    sr = method == "algorithm1"          ? algorithm_one(L.program, x0, a.opt)
         : method == "algorithm1-random" ? algorithm_one_randomized(L.program, x0, a.opt)
                                         : dca_baseline(L.program, x0, a.opt);
    rep = io::to_json(sr);
    rep["certificates"]["d"] = certificate_or_note([&] { return check_d_stationary(L.program, sr.x, a.cert_tol); });
    code = termination_code(sr.termination);
  } else if (method == "algorithm2") {
    sr = algorithm_two(*L.constrained, x0, a.opt);
    rep = io::to_json(sr);
    rep["certificates"]["B"] =
        certificate_or_note([&] { return check_B_stationary(*L.constrained, sr.x, a.cert_tol); });
    code = termination_code(sr.termination);
  } else if (method == "penalty") {
    const PenaltyReport pr = penalty_solve(*L.constrained, x0, a.popt, a.opt);
    sr = pr.report;
    rep = io::to_json(sr);
    rep["classification"] = to_string(pr.classification);
    rep["rho"] = pr.rho;
    rep["outer_iterations"] = pr.outer_iterations;
    rep["rho_exhausted"] = pr.rho_exhausted;
    if (sr.constraint_residual <= 1e-6) {
      rep["certificates"]["B"] =
          certificate_if_feasible([&] { return check_B_stationary(*L.constrained, sr.x, a.cert_tol); });
    }
    code = pr.classification == PenaltyClass::InfeasibleStationary ? kInvalid : termination_code(sr.termination);
  } else if (method == "consensus") {
    a.copt.cert_tol = a.cert_tol;
    const ConsensusReport cr = consensus_solve(L.program, x0, a.copt, a.opt);
    sr = cr.report;
    rep = io::to_json(sr);
    rep["consensus_residual"] = cr.consensus_residual;
    rep["phase_residuals"] = cr.phase_residuals;
    rep["singleton_active"] = cr.singleton_active;
    rep["rho_exhausted"] = cr.rho_exhausted;
    if (cr.certificate) rep["certificates"]["d"] = io::to_json(*cr.certificate);
    code = termination_code(sr.termination);
  } else {
    throw UnknownName("unknown method '" + method + "'");
  }
  rep["problem"] = L.label;
  if (!a.trace.empty()) {
    std::ostringstream csv;
    write_trace_csv(csv, sr);
    io::write_text_file(a.trace, csv.str());
  }
  emit(rep, a.report, out);
  return code;
}

struct CertifyArgs {
  Source source;
  std::vector<double> point;
  double tol = 1e-6;
  std::vector<std::string> kinds;
  std::string report;
};

int do_certify(const CertifyArgs& a, std::ostream& out) {
  const Loaded L = load(a.source);
  const Vector x = to_vector(a.point, L.program.dim(), "--point");
  std::vector<std::string> kinds = a.kinds;
  if (kinds.empty()) kinds = L.constrained ? std::vector<std::string>{"B"} : std::vector<std::string>{"d", "critical", "clarke"};
  json verdicts = json::object();
  json certs = json::object();
  for (const auto& k : kinds) {
    json c;
    if (k == "d") {
      c = certificate_or_note([&] { return check_d_stationary(L.program, x, a.tol); });
    } else if (k == "critical") {
      c = certificate_or_note([&] { return check_critical(L.program, x, a.tol); });
    } else if (k == "clarke") {
      c = certificate_or_note([&] { return check_clarke(L.program, x, a.tol); });
    } else if (k == "B") {
      if (!L.constrained) throw InvalidParams("B certificate needs a dc constraint");
      c = certificate_or_note([&] { return check_B_stationary(*L.constrained, x, a.tol); });
    } else {
      throw UnknownName("unknown certificate kind '" + k + "'");
    }
    verdicts[k] = c["verdict"];
    certs[k] = c;
  }
  emit(json{{"problem", L.label}, {"point", io::detail::to_json(x)}, {"tol", a.tol}, {"verdicts", verdicts},
            {"certificates", certs}},
       a.report, out);
  return kOk;
}

struct DecomposeArgs {
  std::string model;
  std::string report;
  std::string export_problem;
};

int do_decompose(const DecomposeArgs& a, std::ostream& out) {
  const BivariateModel m = io::model_from_json(io::read_json_file(a.model));
  const DecompositionResult r = build_dc(m);
  json rep = io::to_json(r.decomposition);
  rep["model"] = a.model;
  rep["agents"] = m.agents.size();
  if (!a.export_problem.empty()) io::write_text_file(a.export_problem, io::to_json(r.program).dump(2) + "\n");
  emit(rep, a.report, out);
  return kOk;
}

int do_generate(const Source& s, const std::string& path, std::ostream& out) {
  const Loaded L = load(s);
  json j = L.constrained ? io::to_json(*L.constrained) : io::to_json(L.program);
  j["start"] = io::detail::to_json(L.start);
  emit(j, path, out);
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"dc programming toolkit: solve, certify, decompose, generate"};
  app.require_subcommand(1);

  SolveArgs sa;
  CLI::App* solve = app.add_subcommand("solve", "Run a method and write a JSON report");
  sa.source.add_to(solve);
  solve->add_option("--method", sa.method,
                    "auto | algorithm1 | algorithm1-random | dca-baseline | algorithm2 | penalty | consensus");
  solve->add_option("--epsilon", sa.opt.epsilon, "Epsilon-active margin");
  solve->add_option("--tol-step", sa.opt.tol_step, "Step tolerance");
  solve->add_option("--max-iter", sa.opt.max_iter, "Iteration cap");
  solve->add_option("--rho0", sa.rho0, "Initial penalty");
  solve->add_option("--gamma", sa.gamma, "Penalty growth factor");
  solve->add_option("--rho-max", sa.rho_max, "Penalty cap");
  solve->add_option("--x0", sa.x0, "Start point, comma separated")->delimiter(',');
  solve->add_option("--trace", sa.trace, "Trace CSV path");
  solve->add_option("--report", sa.report, "Report JSON path (default stdout)");
  solve->add_option("--cert-tol", sa.cert_tol, "Certificate tolerance");
  solve->add_option("--threads", sa.threads, "Thread cap (DCKIT_THREADS also caps)");
  solve->add_flag("--timing", sa.opt.timing, "Record wall-clock times in the trace");

  CertifyArgs ca;
  CLI::App* certify = app.add_subcommand("certify", "Check stationarity certificates at a point");
  ca.source.add_to(certify);
  certify->add_option("--point", ca.point, "Point, comma separated")->required()->delimiter(',');
  certify->add_option("--tol", ca.tol, "Certificate tolerance");
  certify->add_option("--kinds", ca.kinds, "d,critical,clarke,B")->delimiter(',');
  certify->add_option("--report", ca.report, "Output path (default stdout)");

  DecomposeArgs da;
  CLI::App* decompose = app.add_subcommand("decompose", "Build the u + v decomposition of a bivariate model");
  decompose->add_option("--model", da.model, "Model JSON file")->required();
  decompose->add_option("--report", da.report, "Summary path (default stdout)");
  decompose->add_option("--export-problem", da.export_problem, "Write the minimization problem JSON");

  Source gs;
  std::string gen_out;
  CLI::App* generate = app.add_subcommand("generate", "Export an instance as problem JSON");
  gs.add_to(generate);
  generate->add_option("--out", gen_out, "Output path (default stdout)");

  std::vector<std::string> rev(args.rbegin(), args.rend() - (args.empty() ? 0 : 1));
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    if (*solve) return do_solve(sa, out);
    if (*certify) return do_certify(ca, out);
    if (*decompose) return do_decompose(da, out);
    return do_generate(gs, gen_out, out);
  } catch (const NonConvergence& e) {
    err << "error: " << e.what() << "\n";
    return kNotConverged;
  } catch (const std::ios_base::failure& e) {
    err << "error: " << e.what() << "\n";
    return kIoError;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kInvalid;
  }
}

}  // namespace dckit::cli
