#pragma once
// Verification suites, one per acceptance criterion. Each suite reads its
// cases and parameters from the config and returns check records and tables.

#include "paralab/harness/report.hpp"

#include <map>

namespace paralab::harness {

// ---------------------------------------------------------------------------
// helpers

/// A bounded real function on [0,1)^d, drawn once and sampled on any grid:
/// a few cosine modes plus a square wave, with sup <= 1.
struct SmoothDraw {
  struct Mode {
    std::vector<int> k;
    double amp = 0.0;
    double phase = 0.0;
  };
  std::vector<Mode> modes;
  Mode step;

  static SmoothDraw draw(Rng& rng, int dims, int kmax = 6, int terms = 4) {
    std::uniform_int_distribution<int> freq(-kmax, kmax);
    std::uniform_real_distribution<double> amp(0.2, 1.0), phase(0.0, 2.0 * kPi);
    auto mode = [&] {
      Mode m;
      m.k.resize(static_cast<std::size_t>(dims));
      do {
        for (int& k : m.k) k = freq(rng);
      } while (std::all_of(m.k.begin(), m.k.end(), [](int k) { return k == 0; }));
      m.amp = amp(rng);
      m.phase = phase(rng);
      return m;
    };
    SmoothDraw d;
    for (int i = 0; i < terms; ++i) d.modes.push_back(mode());
    d.step = mode();
    double total = d.step.amp;
    for (const auto& m : d.modes) total += m.amp;
    for (auto& m : d.modes) m.amp /= total;
    d.step.amp /= total;
    return d;
  }

  CVector sample(const MetricMeasureSpace& sp) const {
    CVector v(static_cast<Eigen::Index>(sp.size()));
    const auto& dims = sp.dims();
    for (std::size_t i = 0; i < sp.size(); ++i) {
      const auto c = sp.coords(i);
      auto arg = [&](const Mode& m) {
        double a = m.phase;
        for (std::size_t d = 0; d < dims.size(); ++d) a += 2.0 * kPi * m.k[d] * double(c[d]) / dims[d];
        return a;
      };
      double s = step.amp * (std::cos(arg(step)) >= 0.0 ? 1.0 : -1.0);
      for (const auto& m : modes) s += m.amp * std::cos(arg(m));
      v[static_cast<Eigen::Index>(i)] = s;
    }
    return v;
  }
};

inline std::vector<SmoothDraw> draws(std::uint64_t seed, int count, int dims) {
  Rng rng(seed);
  std::vector<SmoothDraw> out;
  for (int i = 0; i < count; ++i) out.push_back(SmoothDraw::draw(rng, dims));
  return out;
}

/// Points with every coordinate in [at, at + width), then the same box
/// shifted by width + gap along the first axis.
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> box_pair(const MetricMeasureSpace& sp, int at,
                                                                              int width, int gap) {
  std::vector<std::size_t> E, F;
  const auto& dims = sp.dims();
  for (std::size_t i = 0; i < sp.size(); ++i) {
    const auto c = sp.coords(i);
    bool inE = true, inF = true;
    for (std::size_t d = 0; d < dims.size(); ++d) {
      const int lo = d == 0 ? at : 0;
      inE = inE && c[d] >= lo && c[d] < lo + width;
      const int flo = d == 0 ? at + width + gap : 0;
      inF = inF && c[d] >= flo && c[d] < flo + width;
    }
    if (inE) E.push_back(i);
    if (inF) F.push_back(i);
  }
  if (E.empty() || F.empty()) throw InvalidArgument("box_pair: empty set (grid too small for width/gap)");
  return {E, F};
}

inline std::string case_label(const io::CaseDesc& c) {
  std::string dims;
  for (std::size_t d = 0; d < c.space.dims.size(); ++d) dims += (d ? "x" : "") + std::to_string(c.space.dims[d]);
  return dims + "/" + to_string(c.space.topology) + "/" + c.op.coefficients;
}

inline std::vector<int> ladder(const ExperimentConfig& c, std::vector<int> fallback) {
  auto l = c.param<std::vector<int>>("ladder", std::move(fallback));
  if (l.size() < 2) throw InvalidArgument("params.ladder needs at least two sizes");
  return l;
}

/// Largest relative change between consecutive entries.
inline double max_drift(const std::vector<double>& v) {
  double d = 0.0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    const double ref = std::min(std::abs(v[i - 1]), std::abs(v[i]));
    d = std::max(d, ref > 0.0 ? std::abs(v[i] - v[i - 1]) / ref : std::numeric_limits<double>::infinity());
  }
  return d;
}

inline OperatorPtr build(const ExperimentConfig& c, const io::CaseDesc& k) {
  return io::build_operator_cached(k, c.cache_dir ? std::optional<io::fs::path>(*c.cache_dir) : std::nullopt);
}

// ---------------------------------------------------------------------------
// 1. contour calculus against the spectral oracle

inline ExperimentReport suite_oracle(const ExperimentConfig& c) {
  const std::string anchor = "holomorphic functional calculus by contour integral";
  ExperimentReport rep;
  const double tol = c.tol("rel_err", 1e-8);
  auto& samples = rep.table("errors", "samples", {"case", "log10_s", "rel_err"});
  double worst_all = 0.0;
  for (std::size_t i = 0; i < c.cases.size(); ++i) {
    const auto op = build(c, c.cases[i]);
    if (!op->oracle_available()) throw InvalidArgument("oracle suite: case " + case_label(c.cases[i]) + " has no oracle");
    const auto [lmin, lmax] = op->spectral_range();
    Rng rng(c.seed + 1000 * i);
    std::uniform_real_distribution<double> logs(std::log(0.1 / lmax), std::log(10.0 / lmin));
    std::uniform_real_distribution<double> order(0.5, 3.0);
    std::bernoulli_distribution family(0.5);
    double worst = 0.0;
    for (int t = 0; t < c.trials; ++t) {
      const PsiFunction psi = family(rng) ? PsiFunction::exp_monomial(order(rng))
                                          : PsiFunction::rational(order(rng), order(rng));
      const double s = std::exp(logs(rng));
      const double tt = std::pow(s, 1.0 / op->order_2m());
      const CVector f = random_gaussian(static_cast<Eigen::Index>(op->size()), rng);
      const double err = relative_error(apply_psi(*op, psi, tt, CMatrix(f), c.contour()).col(0),
                                        oracle_psi(*op, psi, tt, CMatrix(f)).col(0));
      worst = std::max(worst, err);
      samples.rows.push_back({double(i), std::log10(s), err});
    }
    worst_all = std::max(worst_all, worst);
    auto& r = rep.le("max_rel_err[" + case_label(c.cases[i]) + (op->self_adjoint() ? ",self-adjoint" : ",non-self-adjoint") + "]",
                     worst, tol, anchor);
    r.extra = {{"oracle_condition", op->oracle().condition}};
  }
  rep.info("max_rel_err", worst_all, anchor);
  return rep;
}

// ---------------------------------------------------------------------------
// 2. quadratic estimate with the closed-form constant 1/4

inline ExperimentReport suite_quadratic(const ExperimentConfig& c) {
  const std::string anchor = "quadratic estimate for psi(z) = z e^{-z}";
  ExperimentReport rep;
  const auto op = build(c, c.cases.at(0));
  const PsiFunction psi = c.make_psi();
  const double expected = c.param("constant", 0.25);
  const auto [lmin, lmax] = op->spectral_range();
  // psi(s L) with s geometric: the grid is in the s variable directly
  const TGrid grid(c.tgrid.lo / lmax, c.tgrid.hi / lmin, c.tgrid.q);
  Rng rng(c.seed);
  const auto n = static_cast<Eigen::Index>(op->size());
  CMatrix F(n, c.trials);
  for (int t = 0; t < c.trials; ++t) F.col(t) = random_gaussian(n, rng);
  const RVector q = quadratic_norm(*op, psi, F, grid, c.contour());
  auto& samples = rep.table("ratios", "samples", {"trial", "ratio"});
  double worst = 0.0;
  for (int t = 0; t < c.trials; ++t) {
    const double pf = op->space().norm(CVector(op->project_range(CMatrix(F.col(t))).col(0)));
    const double ratio = q[t] * q[t] / (pf * pf);
    samples.rows.push_back({double(t), ratio});
    worst = std::max(worst, std::abs(ratio / expected - 1.0));
  }
  rep.le("max_relative_deviation_from_" + std::to_string(expected).substr(0, 4), worst, c.tol("relative", 0.02), anchor)
      .extra = {{"grid", io::to_json(grid)}};
  return rep;
}

// ---------------------------------------------------------------------------
// 3. Calderon reproducing formula

inline ExperimentReport suite_calderon(const ExperimentConfig& c) {
  const std::string anchor = "Calderon reproducing formula";
  ExperimentReport rep;
  const auto op = build(c, c.cases.at(0));
  const PsiFunction psi = c.make_psi(), pt = c.make_psi_tilde();
  Rng rng(c.seed);
  const auto n = static_cast<Eigen::Index>(op->size());
  CMatrix F(n, c.trials);
  for (int t = 0; t < c.trials; ++t) F.col(t) = random_gaussian(n, rng);
  auto residual = [&](const TGrid& g) { return calderon_reconstruct(*op, psi, pt, F, g, c.contour()).residual; };

  const TGrid wide = c.tgrid.resolve(*op);
  const double rw = residual(wide);
  rep.le("residual_wide_grid", rw, c.tol("residual", 1e-3), anchor).extra = {{"grid", io::to_json(wide)}};

  // widening a narrow grid
  io::TGridDesc narrow_desc = c.tgrid;
  narrow_desc.lo = c.param("narrow_lo", 0.1);
  narrow_desc.hi = c.param("narrow_hi", 2.0);
  const TGrid narrow = narrow_desc.resolve(*op);
  auto& widen = rep.table("residual_vs_widening", "curve", {"factor", "residual"});
  std::vector<double> rws;
  for (double a : c.param<std::vector<double>>("widen", {1.0, 2.0, 4.0, 8.0, 16.0})) {
    rws.push_back(residual(narrow.widened(a)));
    widen.rows.push_back({a, rws.back()});
  }
  int up = 0;
  for (std::size_t i = 1; i < rws.size(); ++i) up += rws[i] >= rws[i - 1];
  rep.le("widening_non_decreasing_steps", up, 0, anchor);

  // q-doubling on the wide grid
  auto& qt = rep.table("residual_vs_q", "curve", {"q", "residual"});
  std::vector<double> rq;
  const auto qs = c.param<std::vector<int>>("q_ladder", {1, 2, 4});
  for (int q : qs) {
    rq.push_back(residual(wide.with_q(q)));
    qt.rows.push_back({double(q), rq.back()});
  }
  int qup = 0;
  double order = std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i < rq.size(); ++i) {
    qup += rq[i] >= rq[i - 1];
    order = std::min(order, std::log(rq[i - 1] / rq[i]) / std::log(double(qs[i]) / qs[i - 1]));
  }
  rep.le("q_doubling_non_decreasing_steps", qup, 0, anchor);
  rep.ge("q_doubling_min_order", order, c.tol("min_order", 1.0), anchor);

  // pairing form of the reproducing formula
  const CVector g = op->project_range(CMatrix(random_gaussian(n, rng))).col(0);
  const auto pr = reproducing_pairing_check(*op, psi, pt, F.col(0), g, wide, c.contour());
  rep.le("pairing_relative_residual", pr.residual / (op->space().norm(F.col(0)) * op->space().norm(g)),
         c.tol("pairing", 1e-3), anchor);
  return rep;
}

// ---------------------------------------------------------------------------
// 4. off-diagonal bounds for psi(t^{2m} L)

inline ExperimentReport suite_offdiag(const ExperimentConfig& c) {
  const std::string anchor = "off-diagonal bounds for psi(t^{2m} L)";
  ExperimentReport rep;
  const PsiFunction psi = c.psi.is_null() ? PsiFunction::rational(2, 2) : c.make_psi();
  const double need = c.tol("gamma_min", 1.7);
  const json configs = c.params.value("configs", json::array());
  if (configs.empty()) throw InvalidArgument("offdiag suite: params.configs is empty");
  std::map<std::size_t, OperatorPtr> ops;
  int count = 0;
  for (std::size_t i = 0; i < configs.size(); ++i) {
    const auto& g = configs[i];
    const auto ci = g.value("case", std::size_t{0});
    if (!ops.count(ci)) ops[ci] = build(c, c.cases.at(ci));
    const auto& op = *ops[ci];
    const auto [E, F] = box_pair(op.space(), g.value("at", 0), g.value("width", 4), g.value("gap", 64));
    const double D = op.space().set_distance(E, F);
    const TGrid fit(op.space().spacing(), 2.0 * D, g.value("q", 4));
    const auto r = measure_offdiag(op.space(), psi_family(op, psi, fit, c.contour()), E, F, fit, op.order_2m());
    const std::string tag = "[" + case_label(c.cases.at(ci)) + ",D=" + std::to_string(static_cast<int>(std::lround(D / op.space().spacing()))) + "h]";
    rep.ge("gamma" + tag, r.fitted ? r.gamma : std::numeric_limits<double>::quiet_NaN(), need, anchor).extra = {
        {"C", r.C}, {"saturated", r.saturated}};
    ++count;
    auto& t = rep.table("fit_" + std::to_string(i), "fit", {"log_distance_ratio", "log_norm"});
    for (std::size_t k = 0; k < r.t.size(); ++k) {
      if (r.used[k]) t.rows.push_back({std::log(D / r.t[k]), std::log(r.envelope[k])});
    }
  }
  rep.ge("configurations", count, c.param("min_configs", 5), anchor);
  return rep;
}

// ---------------------------------------------------------------------------
// 5. conservation

inline ExperimentReport suite_conservation(const ExperimentConfig& c) {
  const std::string anchor = "conservation e^{-tL}1 = 1 and psi(t^{2m}L)1 = 0";
  ExperimentReport rep;
  const PsiFunction psi = c.make_psi();
  for (const auto& k : c.cases) {
    if (k.space.topology != Topology::periodic) throw InvalidArgument("conservation suite: periodic cases only");
    const auto op = build(c, k);
    const auto r = conservation_check(*op, psi, c.tgrid.resolve(*op), c.contour());
    rep.le("semigroup_defect[" + case_label(k) + "]", r.semigroup_defect, c.tol("defect", 1e-9), anchor);
    rep.le("psi_of_one[" + case_label(k) + "]", r.psi_of_one, c.tol("defect", 1e-9), anchor);
    Rng rng(c.seed);
    const auto d = doubling_report(op->space(), 200, rng);
    rep.info("doubling_A1[" + case_label(k) + "]", d.A1, "doubling measure");
  }
  return rep;
}

// ---------------------------------------------------------------------------
// 6. Carleson characterization of BMO_L

inline ExperimentReport suite_carleson(const ExperimentConfig& c) {
  const std::string anchor = "Carleson measure characterization of BMO_L";
  ExperimentReport rep;
  const PsiFunction psi = c.make_psi();
  const auto sizes = ladder(c, {64, 128});
  const auto fs = draws(c.seed, c.trials, static_cast<int>(c.cases.at(0).space.dims.size()));
  std::vector<double> lo, hi;
  auto& curve = rep.table("interval_vs_N", "curve", {"N", "c", "C"});
  auto& samples = rep.table("ratios", "samples", {"N", "ratio"});
  for (int N : sizes) {
    const auto op = build(c, io::resized(c.cases.at(0), N));
    const TGrid grid = c.tgrid.resolve(*op);
    const int M = default_bmo_order(*op);
    double a = std::numeric_limits<double>::infinity(), b = 0.0;
    for (const auto& d : fs) {
      const auto r = carleson_characterization(*op, psi, d.sample(op->space()), grid, M, c.contour());
      if (r.vacuous) continue;
      a = std::min(a, r.ratio);
      b = std::max(b, r.ratio);
      samples.rows.push_back({double(N), r.ratio});
    }
    lo.push_back(a);
    hi.push_back(b);
    curve.rows.push_back({double(N), a, b});
    rep.le("C_over_c[N=" + std::to_string(N) + "]", b / a, c.tol("spread", 50.0), anchor);
  }
  rep.le("lower_endpoint_drift", max_drift(lo), c.tol("drift", 0.3), anchor);
  rep.le("upper_endpoint_drift", max_drift(hi), c.tol("drift", 0.3), anchor);
  return rep;
}

// ---------------------------------------------------------------------------
// 7. L^2 boundedness of Pi_b

inline ExperimentReport suite_para_l2(const ExperimentConfig& c) {
  const std::string anchor = "L^2 boundedness of the paraproduct";
  ExperimentReport rep;
  const PsiFunction psi = c.make_psi(), pt = c.make_psi_tilde();
  const auto sizes = ladder(c, {128, 256, 512});
  const auto b_draw = draws(c.seed, 1, static_cast<int>(c.cases.at(0).space.dims.size()))[0];
  std::vector<double> sups;
  auto& curve = rep.table("sup_vs_N", "curve", {"N", "sup_ratio", "sup_ratio_linf"});
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    const int N = sizes[i];
    const auto op = build(c, io::resized(c.cases.at(0), N));
    auto spec = make_paraproduct_spec(*op, psi, pt, c.tgrid.resolve(*op));
    spec.contour = c.contour();
    const CVector b = b_draw.sample(op->space());
    const auto r = measure_para_l2(*op, spec, b, c.trials, c.seed);
    sups.push_back(r.sup_ratio);
    curve.rows.push_back({double(N), r.sup_ratio, r.sup_ratio_linf});
    auto& rec = rep.le("sup_ratio[N=" + std::to_string(N) + "]", r.sup_ratio, c.tol("finite", 1e6), anchor);
    rec.extra = {{"argmax", r.argmax}, {"bmo", r.bmo}, {"linf", r.linf}, {"degenerate", r.degenerate},
                 {"hypothesis_ok", r.hypothesis_ok}, {"grid", io::to_json(spec.grid)}};
    if (i == 0) {
      rep.truth("hypothesis_psi_order_at_0", spec.hypotheses.l2, anchor);
      auto& s = rep.table("ratios", "samples", {"probe", "ratio"});
      for (std::size_t k = 0; k < r.ratios.size(); ++k) s.rows.push_back({double(k), r.ratios[k]});
      const auto li = measure_para_linf_l2(*op, spec, std::max(4, c.trials / 10), c.seed + 1);
      rep.le("linf_l2_sup_ratio", li.sup_ratio, c.tol("finite", 1e6), "L^inf x L^2 -> L^2 bound for Pi");
      rep.le("linf_l2_constant_probe_deviation", std::abs(li.constant_ratio - 1.0), c.tol("constant_probe", 0.05),
             "L^inf x L^2 -> L^2 bound for Pi");
      const int lp_trials = std::max(4, c.trials / 10);
      const auto p4 = measure_para_lp_hp(*op, spec, b, 4.0, lp_trials, c.seed + 2);
      rep.le("lp_hp_sup_ratio[p=4]", p4.sup_ratio, c.tol("finite", 1e6), "L^p -> H^p_L bound for Pi_b");
      const auto pinf = measure_para_lp_hp(*op, spec, b, std::numeric_limits<double>::infinity(), 2, c.seed + 3);
      rep.le("linf_bmo_sup_ratio", pinf.sup_ratio, c.tol("finite", 1e6), "L^inf -> BMO_L bound for Pi_b");
      Rng rng(c.seed + 4);
      const auto probes = para_probes(*op, 4, rng, true);
      rep.le("average_heat_constant", average_heat_constant(*op, spec.grid, probes.columns), c.tol("finite", 1e6),
             "uniform L^inf bound for A_t e^{-t^{2m}L}");
    }
  }
  const double lo = *std::min_element(sups.begin(), sups.end()), hi = *std::max_element(sups.begin(), sups.end());
  rep.le("sup_ratio_spread", hi / lo - 1.0, c.tol("stability", 0.25), anchor);
  return rep;
}

// ---------------------------------------------------------------------------
// 8. Pi_b(1) = b, Pi_b^*(1) = 0

inline ExperimentReport suite_para_identity(const ExperimentConfig& c) {
  const std::string anchor = "Pi_b(1) = b and Pi_b^*(1) = 0";
  ExperimentReport rep;
  const PsiFunction psi = c.make_psi(), pt = c.make_psi_tilde();
  for (std::size_t i = 0; i < c.cases.size(); ++i) {
    const auto& k = c.cases[i];
    const auto op = build(c, k);
    auto spec = make_paraproduct_spec(*op, psi, pt, c.tgrid.resolve(*op));
    spec.contour = c.contour();
    const CVector b = draws(c.seed + i, 1, static_cast<int>(k.space.dims.size()))[0].sample(op->space());
    const auto r = para_identity_check(*op, spec, b);
    const std::string tag = "[" + case_label(k) + "]";
    auto& rec = rep.le("identity_residual" + tag, r.residual, r.budget, anchor);
    rec.extra = {{"calderon_residual", r.calderon_residual},
                 {"conservation_residual", r.conservation_residual},
                 {"conservation_term", r.conservation_term}};
    if (k.space.topology == Topology::periodic) {
      rep.le("adjoint_at_one_over_linf" + tag, r.adjoint_ratio, c.tol("adjoint", 1e-2), anchor);
    }
    // adjoint consistency of the dual of Pi(f, .)
    Rng rng(c.seed + 77 + i);
    const auto n = static_cast<Eigen::Index>(op->size());
    const CVector f = random_uniform_real(n, rng), g = random_gaussian(n, rng), h = random_gaussian(n, rng);
    const auto& sp = op->space();
    const Complex lhs = sp.inner(para_bilinear(*op, spec, CMatrix(f), CMatrix(g)).col(0), h);
    const Complex rhs = sp.inner(g, para_dual(*op, spec, f, CMatrix(h)).col(0));
    rep.le("dual_consistency" + tag, std::abs(lhs - rhs) / (max_abs(f) * sp.norm(g) * sp.norm(h)),
           c.tol("dual", 1e-8), "dual operator of Pi(f, .)");
    const CVector bb = random_gaussian(n, rng);
    const Complex l2 = sp.inner(paraproduct_apply(*op, spec, bb, CMatrix(g)).col(0), h);
    const Complex r2 = sp.inner(g, paraproduct_adjoint_apply(*op, spec, bb, CMatrix(h)).col(0));
    rep.le("adjoint_consistency" + tag, std::abs(l2 - r2) / (sp.norm(bb) * sp.norm(g) * sp.norm(h)),
           c.tol("dual", 1e-8), "adjoint of Pi_b");
  }
  return rep;
}

// ---------------------------------------------------------------------------
// 9. off-diagonal decay of phi(t^{2m} L) Pi(f, .)

inline ExperimentReport suite_para_offdiag(const ExperimentConfig& c) {
  const std::string anchor = "off-diagonal decay of phi(t^{2m}L) Pi(f, .)";
  ExperimentReport rep;
  const PsiFunction psi = c.make_psi(), pt = c.make_psi_tilde();
  const auto op = build(c, c.cases.at(0));
  auto spec = make_paraproduct_spec(*op, psi, pt, c.tgrid.resolve(*op));
  spec.contour = c.contour();
  const int M = c.param("M", static_cast<int>(std::ceil(critical_order(*op))) + 1);
  const CVector f = draws(c.seed, 1, static_cast<int>(c.cases[0].space.dims.size()))[0].sample(op->space());
  const json configs = c.params.value("configs", json::array({json{{"at", 0}, {"width", 4}, {"gap", 64}}}));
  const double slack = c.tol("gamma_slack", 0.5);
  for (std::size_t i = 0; i < configs.size(); ++i) {
    const auto& g = configs[i];
    const auto [E, F] = box_pair(op->space(), g.value("at", 0), g.value("width", 4), g.value("gap", 64));
    const double D = op->space().set_distance(E, F);
    const TGrid fit(op->space().spacing(), 2.0 * D, g.value("q", 4));
    for (auto kind : {OffdiagMultiplier::Kind::one_minus_heat, OffdiagMultiplier::Kind::heat_monomial}) {
      const OffdiagMultiplier phi{kind, M};
      const auto r = para_offdiag(*op, spec, f, E, F, phi, fit);
      const std::string tag = "[" + phi.label() + ",D=" + std::to_string(static_cast<int>(std::lround(D / op->space().spacing()))) + "h]";
      auto& rec = rep.ge("gamma" + tag, r.fit.fitted ? r.fit.gamma : std::numeric_limits<double>::quiet_NaN(),
                         r.admissible - slack, anchor);
      rec.extra = {{"admissible", r.admissible}, {"ceiling", r.ceiling}, {"C", r.fit.C},
                   {"distance_to_bound", r.fit.gamma - r.admissible}, {"hypothesis_ok", r.hypothesis_ok}};
      auto& t = rep.table("fit_" + std::to_string(i) + (kind == OffdiagMultiplier::Kind::one_minus_heat ? "_heat" : "_monomial"),
                          "fit", {"log_distance_ratio", "log_norm"});
      for (std::size_t k = 0; k < r.fit.t.size(); ++k) {
        if (r.fit.used[k]) t.rows.push_back({std::log(D / r.fit.t[k]), std::log(r.fit.envelope[k])});
      }
    }
  }
  return rep;
}

// ---------------------------------------------------------------------------
// 10. fractional Leibniz rule

inline ExperimentReport suite_leibniz(const ExperimentConfig& c) {
  const std::string anchor = "fractional Leibniz rule for paraproducts";
  ExperimentReport rep;
  const PsiFunction psi = c.psi.is_null() ? PsiFunction::exp_monomial(2) : c.make_psi();
  const PsiFunction pt = normalize_pair(psi, c.psi_tilde.is_null() ? psi : io::psi_from(c.psi_tilde));
  const auto sizes = ladder(c, {64, 128});
  const auto ss = c.param<std::vector<double>>("s", {0.5, 1.0, 1.5});
  const int dims = static_cast<int>(c.cases.at(0).space.dims.size());
  const auto fs = draws(c.seed, c.trials, dims), gs = draws(c.seed + 1, c.trials, dims);
  std::vector<std::vector<double>> ratios(ss.size());
  std::vector<double> worst(ss.size(), 0.0);
  auto& curve = rep.table("norm_ratio_vs_N", "curve", {"N", "s", "sup_norm_ratio", "max_residual"});
  for (int N : sizes) {
    const auto op = build(c, io::resized(c.cases.at(0), N));
    auto spec = make_paraproduct_spec(*op, psi, pt, c.tgrid.resolve(*op));
    spec.contour = c.contour();
    for (std::size_t si = 0; si < ss.size(); ++si) {
      double sup = 0.0, res = 0.0;
      for (int t = 0; t < c.trials; ++t) {
        const auto r = leibniz_check(*op, spec, ss[si], fs[static_cast<std::size_t>(t)].sample(op->space()),
                                     gs[static_cast<std::size_t>(t)].sample(op->space()));
        res = std::max(res, r.residual);
        sup = std::max(sup, r.norm_ratio);
      }
      worst[si] = std::max(worst[si], res);
      ratios[si].push_back(sup);
      curve.rows.push_back({double(N), ss[si], sup, res});
    }
  }
  for (std::size_t si = 0; si < ss.size(); ++si) {
    const std::string tag = "[s=" + std::to_string(ss[si]).substr(0, 4) + "]";
    rep.le("max_residual" + tag, worst[si], c.tol("residual", 1e-6), anchor);
    rep.le("norm_ratio_drift" + tag, max_drift(ratios[si]), c.tol("stability", 0.3), anchor);
  }
  return rep;
}

// ---------------------------------------------------------------------------
// 11. tent-space duality

inline ExperimentReport suite_tent_duality(const ExperimentConfig& c) {
  const std::string anchor = "tent space duality inequalities";
  ExperimentReport rep;
  const PsiFunction psi = c.make_psi();
  const auto sizes = ladder(c, {64, 128, 256});
  const auto qs = c.param<std::vector<int>>("q_list", {8, 16});
  const int dims = static_cast<int>(c.cases.at(0).space.dims.size());
  const auto fs = draws(c.seed, c.trials, dims), gs = draws(c.seed + 1, c.trials, dims);
  const std::vector<std::string> names = {"cone_p2", "holder_p2", "cone_carleson_p1", "carleson_duality", "product_p4"};
  auto& curve = rep.table("constants", "curve", {"q", "N", "cone_p2", "holder_p2", "cone_carleson_p1",
                                                 "carleson_duality", "product_p4"});
  const double bound = c.tol("bound", 1e3), growth_max = c.tol("growth", 1.25);
  for (int q : qs) {
    std::vector<std::vector<double>> consts(names.size());
    for (int N : sizes) {
      const auto op = build(c, io::resized(c.cases.at(0), N));
      io::TGridDesc gd = c.tgrid;
      gd.q = q;
      const TGrid grid = gd.resolve(*op);
      std::vector<double> best(names.size(), 0.0);
      for (int t = 0; t < c.trials; ++t) {
        const FieldFunction F = psi_field(*op, psi, fs[static_cast<std::size_t>(t)].sample(op->space()), grid, c.contour());
        const FieldFunction G = psi_field(*op, psi, gs[static_cast<std::size_t>(t)].sample(op->space()), grid, c.contour());
        const auto d2 = duality_checks(op->space(), F, G, 2.0);
        const auto d1 = duality_checks(op->space(), F, G, 1.0);
        const auto d4 = duality_checks(op->space(), F, G, 4.0);
        const double vals[] = {d2.cone_ratio, d2.holder_ratio, d1.carleson_ratio,
                               carleson_duality_ratio(op->space(), F, G.abs2()), d4.product_ratio};
        for (std::size_t k = 0; k < names.size(); ++k) best[k] = std::max(best[k], vals[k]);
      }
      std::vector<double> row = {double(q), double(N)};
      for (std::size_t k = 0; k < names.size(); ++k) {
        consts[k].push_back(best[k]);
        row.push_back(best[k]);
      }
      curve.rows.push_back(row);
    }
    for (std::size_t k = 0; k < names.size(); ++k) {
      const auto& v = consts[k];
      const std::string tag = "[" + names[k] + ",q=" + std::to_string(q) + "]";
      rep.le("max_constant" + tag, *std::max_element(v.begin(), v.end()), bound, anchor);
      bool monotone = true;
      for (std::size_t i = 1; i < v.size(); ++i) monotone = monotone && v[i] > v[i - 1];
      // growth factor counts only when every refinement increases the constant
      rep.le("monotone_growth" + tag, monotone ? v.back() / v.front() : 1.0, growth_max, anchor)
          .extra = {{"last_over_first", v.back() / v.front()}, {"monotone", monotone}};
    }
  }
  // non-tangential control of the heat field against the L^2 maximal function
  const auto op = build(c, io::resized(c.cases.at(0), sizes.front()));
  const TGrid grid = c.tgrid.resolve(*op);
  const CVector f = fs[0].sample(op->space());
  const RVector nh = maximal_Nh(*op, f, grid), m2 = uncentered_M2(op->space(), f);
  rep.le("Nh_over_M2", nh.cwiseQuotient(m2).maxCoeff(), c.tol("bound", 1e3), "non-tangential maximal function N_{h,L}");
  return rep;
}

// ---------------------------------------------------------------------------
// 12. molecules

inline ExperimentReport suite_molecules(const ExperimentConfig& c) {
  const std::string anchor = "molecules in H^1_L and the H^1 -> L^1 paraproduct bound";
  ExperimentReport rep;
  const PsiFunction psi = c.make_psi(), pt = c.make_psi_tilde();
  const auto sizes = ladder(c, {64, 128});
  const auto radii = c.param<std::vector<double>>("radii", {1.0 / 64, 1.0 / 32, 1.0 / 16, 1.0 / 8});
  const auto centers = c.param<std::vector<double>>("centers", {0.1, 0.3, 0.5, 0.7, 0.9});
  const double eps = c.param("eps", 1.0);
  const auto f_draw = draws(c.seed, 1, static_cast<int>(c.cases.at(0).space.dims.size()))[0];
  std::vector<double> hsup, psup;
  auto& curve = rep.table("sup_vs_N", "curve", {"N", "hardy_sup", "para_sup"});
  for (int N : sizes) {
    const auto op = build(c, io::resized(c.cases.at(0), N));
    const auto& sp = op->space();
    const int M = c.param("M", default_bmo_order(*op));
    const TGrid grid = c.tgrid.resolve(*op);
    std::vector<Molecule> ms;
    for (double r : radii) {
      for (double x : centers) {
        std::vector<int> coord(sp.dims().size());
        for (std::size_t d = 0; d < coord.size(); ++d) {
          coord[d] = static_cast<int>(std::lround(x * sp.dims()[d])) % sp.dims()[d];
        }
        ms.push_back(molecule_make(*op, {sp.index(coord), r * c.cases[0].space.length}, M, eps));
      }
    }
    int invalid = 0;
    double hs = 0.0;
    for (const auto& m : ms) {
      invalid += !m.valid;
      hs = std::max(hs, hardy_norm(*op, m.m, 1.0, psi, grid, c.contour()).value);
    }
    rep.le("invalid_molecules[N=" + std::to_string(N) + "]", invalid, 0, anchor);
    auto spec = make_paraproduct_spec(*op, psi, pt, grid);
    spec.contour = c.contour();
    const auto pr = measure_para_hp_l1(*op, spec, f_draw.sample(sp), ms);
    hsup.push_back(hs);
    psup.push_back(pr.sup_ratio);
    curve.rows.push_back({double(N), hs, pr.sup_ratio});
    rep.le("hardy_sup[N=" + std::to_string(N) + "]", hs, c.tol("finite", 1e6), anchor);
    rep.le("para_l1_sup[N=" + std::to_string(N) + "]", pr.sup_ratio, c.tol("finite", 1e6), anchor)
        .extra = {{"hypothesis_ok", pr.hypothesis_ok}};
  }
  rep.le("hardy_sup_drift", max_drift(hsup), c.tol("stability", 0.3), anchor);
  rep.le("para_l1_sup_drift", max_drift(psup), c.tol("stability", 0.3), anchor);
  return rep;
}

// ---------------------------------------------------------------------------
// dispatch

ExperimentReport run_suite(const ExperimentConfig& c);

// 13. determinism: each target config run twice single-threaded and once
// with four threads; the serialized reports must agree byte for byte.
inline ExperimentReport suite_determinism(const ExperimentConfig& c) {
  ExperimentReport rep;
  const json targets = c.params.value("targets", json::array());
  if (targets.empty()) throw InvalidArgument("determinism suite: params.targets is empty");
  const auto threads = c.param<std::vector<int>>("threads", {1, 4});
  const int saved = thread_count();
  for (const auto& tj : targets) {
    const ExperimentConfig t = parse_config(tj);
    if (t.suite == "determinism") throw InvalidArgument("determinism suite: nested determinism target");
    std::vector<std::string> runs;
    set_thread_count(threads.front());
    runs.push_back(serialize(run_suite(t)));
    for (int th : threads) {
      set_thread_count(th);
      runs.push_back(serialize(run_suite(t)));
    }
    set_thread_count(saved);
    bool same = true;
    for (const auto& r : runs) same = same && r == runs.front();
    rep.truth("identical_reports[" + t.suite + "]", same, "plumbing")
        .extra = {{"digest", io::hex64(io::fnv1a(runs.front()))}};
  }
  return rep;
}

inline const std::map<std::string, ExperimentReport (*)(const ExperimentConfig&)>& suite_table() {
  static const std::map<std::string, ExperimentReport (*)(const ExperimentConfig&)> table = {
      {"oracle", suite_oracle},
      {"quadratic", suite_quadratic},
      {"calderon", suite_calderon},
      {"offdiag", suite_offdiag},
      {"conservation", suite_conservation},
      {"carleson", suite_carleson},
      {"para_l2", suite_para_l2},
      {"para_identity", suite_para_identity},
      {"para_offdiag", suite_para_offdiag},
      {"leibniz", suite_leibniz},
      {"tent_duality", suite_tent_duality},
      {"molecules", suite_molecules},
      {"determinism", suite_determinism},
  };
  return table;
}

inline const char* library_version() { return "paralab 0.1.0"; }

/// Runs the configured suite; the report carries the config hash and versions.
inline ExperimentReport run_suite(const ExperimentConfig& c) {
  const auto it = suite_table().find(c.suite);
  if (it == suite_table().end()) throw InvalidArgument("unknown suite \"" + c.suite + "\"");
  ExperimentReport rep = it->second(c);
  rep.suite = c.suite;
  rep.provenance = {{"config_hash", config_hash(c)},
                    {"seed", c.seed},
                    {"version", library_version()},
                    {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                  std::to_string(EIGEN_MINOR_VERSION)}};
  return rep;
}

}  // namespace paralab::harness
