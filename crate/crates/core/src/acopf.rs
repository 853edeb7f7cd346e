//! Single-period AC power flow in rectangular voltages: residuals, analytic
//! derivatives and the augmented-Lagrangian period subproblem.

use serde::{Deserialize, Serialize};

use crate::network::NetworkCase;
use crate::nlp::{self, Dims, Options, Problem, Triplets, INFINITE_BOUND};
use crate::Error;

/// Variable and row offsets of one period.
///
/// Variables: `e[bus]`, `f[bus]`, `p[gen]`, `q[gen]`, then per monitored
/// branch `(i_re, i_im, current_sq)`. Equality rows: real balance per bus,
/// reactive balance per bus, then three current rows per monitored branch.
/// Inequality rows: two voltage rows per bus, three angle rows per branch.
#[derive(Debug, Clone, PartialEq)]
pub struct AcLayout {
    pub n_bus: usize,
    pub n_gen: usize,
    pub n_branch: usize,
    /// Branch index of each monitored branch.
    pub monitored: Vec<usize>,
    /// Position in `monitored` of each branch, if monitored.
    pub monitored_pos: Vec<Option<usize>>,
}

impl AcLayout {
    pub fn new(case: &NetworkCase) -> Self {
        let monitored: Vec<usize> = case
            .branches
            .iter()
            .enumerate()
            .filter(|(_, b)| b.is_monitored())
            .map(|(i, _)| i)
            .collect();
        let mut monitored_pos = vec![None; case.branches.len()];
        for (m, &b) in monitored.iter().enumerate() {
            monitored_pos[b] = Some(m);
        }
        AcLayout {
            n_bus: case.buses.len(),
            n_gen: case.generators.len(),
            n_branch: case.branches.len(),
            monitored,
            monitored_pos,
        }
    }

    pub fn n(&self) -> usize {
        2 * self.n_bus + 2 * self.n_gen + 3 * self.monitored.len()
    }
    pub fn n_eq(&self) -> usize {
        2 * self.n_bus + 3 * self.monitored.len()
    }
    pub fn n_ineq(&self) -> usize {
        2 * self.n_bus + 3 * self.n_branch
    }
    pub fn e(&self, bus: usize) -> usize {
        bus
    }
    pub fn f(&self, bus: usize) -> usize {
        self.n_bus + bus
    }
    pub fn p(&self, gen: usize) -> usize {
        2 * self.n_bus + gen
    }
    pub fn q(&self, gen: usize) -> usize {
        2 * self.n_bus + self.n_gen + gen
    }
    pub fn i_re(&self, m: usize) -> usize {
        2 * self.n_bus + 2 * self.n_gen + 3 * m
    }
    pub fn i_im(&self, m: usize) -> usize {
        self.i_re(m) + 1
    }
    pub fn current_sq(&self, m: usize) -> usize {
        self.i_re(m) + 2
    }

    pub fn unpack(&self, x: &[f64]) -> AcPeriodVars {
        let nm = self.monitored.len();
        AcPeriodVars {
            e: x[..self.n_bus].to_vec(),
            f: x[self.n_bus..2 * self.n_bus].to_vec(),
            p: (0..self.n_gen).map(|g| x[self.p(g)]).collect(),
            q: (0..self.n_gen).map(|g| x[self.q(g)]).collect(),
            i_re: (0..nm).map(|m| x[self.i_re(m)]).collect(),
            i_im: (0..nm).map(|m| x[self.i_im(m)]).collect(),
            current_sq: (0..nm).map(|m| x[self.current_sq(m)]).collect(),
        }
    }

    pub fn pack(&self, v: &AcPeriodVars, x: &mut [f64]) {
        x[..self.n_bus].copy_from_slice(&v.e);
        x[self.n_bus..2 * self.n_bus].copy_from_slice(&v.f);
        for g in 0..self.n_gen {
            x[self.p(g)] = v.p[g];
            x[self.q(g)] = v.q[g];
        }
        for m in 0..self.monitored.len() {
            x[self.i_re(m)] = v.i_re[m];
            x[self.i_im(m)] = v.i_im[m];
            x[self.current_sq(m)] = v.current_sq[m];
        }
    }
}

/// Primal values of one period, p.u.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcPeriodVars {
    pub e: Vec<f64>,
    pub f: Vec<f64>,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    /// Per monitored branch, in [`AcLayout::monitored`] order.
    pub i_re: Vec<f64>,
    pub i_im: Vec<f64>,
    pub current_sq: Vec<f64>,
}

impl AcPeriodVars {
    /// `e = 1`, `f = 0`, mid-range generation, currents at zero.
    pub fn flat_start(case: &NetworkCase, layout: &AcLayout) -> Self {
        let nm = layout.monitored.len();
        AcPeriodVars {
            e: vec![1.0; layout.n_bus],
            f: vec![0.0; layout.n_bus],
            p: case.generators.iter().map(|g| 0.5 * (g.p_min + g.p_max)).collect(),
            q: case.generators.iter().map(|g| 0.5 * (g.q_min + g.q_max)).collect(),
            i_re: vec![0.0; nm],
            i_im: vec![0.0; nm],
            current_sq: vec![0.0; nm],
        }
    }
}

/// Violations of the three angle rows of a branch; positive means violated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngleResidual {
    /// `S - tan(angle_max) C`
    pub upper: f64,
    /// `tan(angle_min) C - S`
    pub lower: f64,
    /// `-C`
    pub orientation: f64,
}

impl AngleResidual {
    pub fn max(&self) -> f64 {
        self.upper.max(self.lower).max(self.orientation)
    }
}

fn cs(e: &[f64], f: &[f64], i: usize, j: usize) -> (f64, f64) {
    (e[i] * e[j] + f[i] * f[j], f[i] * e[j] - e[i] * f[j])
}

pub fn angle_residual(vars: &AcPeriodVars, case: &NetworkCase, branch: usize) -> AngleResidual {
    let b = &case.branches[branch];
    let (c, s) = cs(&vars.e, &vars.f, b.from, b.to);
    AngleResidual {
        upper: s - b.angle_max.tan() * c,
        lower: b.angle_min.tan() * c - s,
        orientation: -c,
    }
}

/// Constraint evaluation of one period at a variable offset inside a larger
/// vector. `caps[m]` bounds the squared current of monitored branch `m`.
#[derive(Debug, Clone)]
pub struct PeriodModel<'a> {
    pub case: &'a NetworkCase,
    pub layout: &'a AcLayout,
    pub t: usize,
    pub caps: Vec<f64>,
}

impl<'a> PeriodModel<'a> {
    /// Monitored caps: `caps[branch]` where given, else the branch's static
    /// limit, else none.
    pub fn new(case: &'a NetworkCase, layout: &'a AcLayout, t: usize, caps: &[Option<f64>]) -> Self {
        let caps = layout
            .monitored
            .iter()
            .map(|&b| {
                caps.get(b)
                    .copied()
                    .flatten()
                    .or(case.branches[b].current_sq_limit_pu)
                    .unwrap_or(INFINITE_BOUND)
            })
            .collect();
        PeriodModel {
            case,
            layout,
            t,
            caps,
        }
    }

    pub fn bounds(&self, lower: &mut [f64], upper: &mut [f64]) {
        let l = self.layout;
        for (i, bus) in self.case.buses.iter().enumerate() {
            lower[l.e(i)] = -bus.v_max;
            upper[l.e(i)] = bus.v_max;
            lower[l.f(i)] = -bus.v_max;
            upper[l.f(i)] = bus.v_max;
        }
        let r = self.case.reference_bus;
        lower[l.f(r)] = 0.0;
        upper[l.f(r)] = 0.0;
        lower[l.e(r)] = 0.0;
        for (g, gen) in self.case.generators.iter().enumerate() {
            lower[l.p(g)] = gen.p_min;
            upper[l.p(g)] = gen.p_max;
            lower[l.q(g)] = gen.q_min;
            upper[l.q(g)] = gen.q_max;
        }
        for m in 0..l.monitored.len() {
            lower[l.i_re(m)] = -INFINITE_BOUND;
            upper[l.i_re(m)] = INFINITE_BOUND;
            lower[l.i_im(m)] = -INFINITE_BOUND;
            upper[l.i_im(m)] = INFINITE_BOUND;
            lower[l.current_sq(m)] = 0.0;
            upper[l.current_sq(m)] = self.caps[m];
        }
    }

    /// Generation cost of the period, $/h.
    pub fn cost(&self, x: &[f64]) -> f64 {
        let base = self.case.base_mva;
        self.case
            .generators
            .iter()
            .enumerate()
            .map(|(g, gen)| gen.cost.eval_mw(base * x[self.layout.p(g)]))
            .sum()
    }

    /// Adds `scale * grad cost` into `grad` at `off`.
    pub fn cost_gradient(&self, x: &[f64], scale: f64, off: usize, grad: &mut [f64]) {
        let base = self.case.base_mva;
        for (g, gen) in self.case.generators.iter().enumerate() {
            let p = x[self.layout.p(g)];
            grad[off + self.layout.p(g)] +=
                scale * base * (2.0 * gen.cost.c2 * base * p + gen.cost.c1);
        }
    }

    pub fn cost_hessian(&self, scale: f64, off: usize, out: &mut Triplets) {
        let base = self.case.base_mva;
        for (g, gen) in self.case.generators.iter().enumerate() {
            let k = off + self.layout.p(g);
            out.push((k, k, scale * 2.0 * gen.cost.c2 * base * base));
        }
    }

    pub fn equalities(&self, x: &[f64], out: &mut [f64]) {
        let l = self.layout;
        let (e, f) = (&x[..l.n_bus], &x[l.n_bus..2 * l.n_bus]);
        let nb = l.n_bus;
        for (i, bus) in self.case.buses.iter().enumerate() {
            let nu = e[i] * e[i] + f[i] * f[i];
            let d = self.case.demand[i][self.t];
            out[i] = bus.shunt_conductance * nu + d.p;
            out[nb + i] = -bus.shunt_susceptance * nu + d.q;
        }
        for (g, gen) in self.case.generators.iter().enumerate() {
            out[gen.bus] -= x[l.p(g)];
            out[nb + gen.bus] -= x[l.q(g)];
        }
        for br in &self.case.branches {
            let (g, b, bc) = (br.conductance, br.susceptance, br.charging);
            for (a, o) in [(br.from, br.to), (br.to, br.from)] {
                let nu = e[a] * e[a] + f[a] * f[a];
                let (c, s) = cs(e, f, a, o);
                out[a] += g * (nu - c) - b * s;
                out[nb + a] += -b * (nu - c) - g * s - 0.5 * bc * nu;
            }
        }
        let row0 = 2 * nb;
        for (m, &bi) in l.monitored.iter().enumerate() {
            let br = &self.case.branches[bi];
            let (g, b) = (br.conductance, br.susceptance);
            let de = e[br.from] - e[br.to];
            let df = f[br.from] - f[br.to];
            let (ir, ii) = (x[l.i_re(m)], x[l.i_im(m)]);
            out[row0 + 3 * m] = ir - (g * de - b * df);
            out[row0 + 3 * m + 1] = ii - (g * df + b * de);
            out[row0 + 3 * m + 2] = x[l.current_sq(m)] - ir * ir - ii * ii;
        }
    }

    pub fn inequalities(&self, x: &[f64], out: &mut [f64]) {
        let l = self.layout;
        let (e, f) = (&x[..l.n_bus], &x[l.n_bus..2 * l.n_bus]);
        for (i, bus) in self.case.buses.iter().enumerate() {
            let nu = e[i] * e[i] + f[i] * f[i];
            out[2 * i] = bus.v_min * bus.v_min - nu;
            out[2 * i + 1] = nu - bus.v_max * bus.v_max;
        }
        let row0 = 2 * l.n_bus;
        for (k, br) in self.case.branches.iter().enumerate() {
            let (c, s) = cs(e, f, br.from, br.to);
            out[row0 + 3 * k] = s - br.angle_max.tan() * c;
            out[row0 + 3 * k + 1] = br.angle_min.tan() * c - s;
            out[row0 + 3 * k + 2] = -c;
        }
    }

    /// Appends Jacobian entries with variables shifted by `off` and rows by
    /// `eq_off` / `ineq_off`.
    pub fn jacobian(
        &self,
        x: &[f64],
        off: usize,
        eq_off: usize,
        ineq_off: usize,
        eq: &mut Triplets,
        ineq: &mut Triplets,
    ) {
        let l = self.layout;
        let nb = l.n_bus;
        let (e, f) = (&x[..nb], &x[nb..2 * nb]);
        let (ve, vf) = (|i: usize| off + l.e(i), |i: usize| off + l.f(i));
        for (i, bus) in self.case.buses.iter().enumerate() {
            let (gs, bs) = (bus.shunt_conductance, bus.shunt_susceptance);
            if gs != 0.0 {
                eq.push((eq_off + i, ve(i), 2.0 * gs * e[i]));
                eq.push((eq_off + i, vf(i), 2.0 * gs * f[i]));
            }
            if bs != 0.0 {
                eq.push((eq_off + nb + i, ve(i), -2.0 * bs * e[i]));
                eq.push((eq_off + nb + i, vf(i), -2.0 * bs * f[i]));
            }
        }
        for (g, gen) in self.case.generators.iter().enumerate() {
            eq.push((eq_off + gen.bus, off + l.p(g), -1.0));
            eq.push((eq_off + nb + gen.bus, off + l.q(g), -1.0));
        }
        for br in &self.case.branches {
            let (g, b, bc) = (br.conductance, br.susceptance, br.charging);
            for (a, o) in [(br.from, br.to), (br.to, br.from)] {
                let (rp, rq) = (eq_off + a, eq_off + nb + a);
                eq.push((rp, ve(a), g * (2.0 * e[a] - e[o]) + b * f[o]));
                eq.push((rp, vf(a), g * (2.0 * f[a] - f[o]) - b * e[o]));
                eq.push((rp, ve(o), -g * e[a] - b * f[a]));
                eq.push((rp, vf(o), -g * f[a] + b * e[a]));
                eq.push((rq, ve(a), -b * (2.0 * e[a] - e[o]) + g * f[o] - bc * e[a]));
                eq.push((rq, vf(a), -b * (2.0 * f[a] - f[o]) - g * e[o] - bc * f[a]));
                eq.push((rq, ve(o), b * e[a] - g * f[a]));
                eq.push((rq, vf(o), b * f[a] + g * e[a]));
            }
        }
        let row0 = eq_off + 2 * nb;
        for (m, &bi) in l.monitored.iter().enumerate() {
            let br = &self.case.branches[bi];
            let (g, b) = (br.conductance, br.susceptance);
            let (i, j) = (br.from, br.to);
            let r = row0 + 3 * m;
            eq.push((r, off + l.i_re(m), 1.0));
            eq.push((r, ve(i), -g));
            eq.push((r, ve(j), g));
            eq.push((r, vf(i), b));
            eq.push((r, vf(j), -b));
            eq.push((r + 1, off + l.i_im(m), 1.0));
            eq.push((r + 1, vf(i), -g));
            eq.push((r + 1, vf(j), g));
            eq.push((r + 1, ve(i), -b));
            eq.push((r + 1, ve(j), b));
            eq.push((r + 2, off + l.current_sq(m), 1.0));
            eq.push((r + 2, off + l.i_re(m), -2.0 * x[l.i_re(m)]));
            eq.push((r + 2, off + l.i_im(m), -2.0 * x[l.i_im(m)]));
        }

        for i in 0..nb {
            ineq.push((ineq_off + 2 * i, ve(i), -2.0 * e[i]));
            ineq.push((ineq_off + 2 * i, vf(i), -2.0 * f[i]));
            ineq.push((ineq_off + 2 * i + 1, ve(i), 2.0 * e[i]));
            ineq.push((ineq_off + 2 * i + 1, vf(i), 2.0 * f[i]));
        }
        let row0 = ineq_off + 2 * nb;
        for (k, br) in self.case.branches.iter().enumerate() {
            let (i, j) = (br.from, br.to);
            // dC = (e_j, e_i, f_j, f_i) on (e_i, e_j, f_i, f_j)
            // dS = (-f_j, f_i, e_j, -e_i)
            let dc = [e[j], e[i], f[j], f[i]];
            let ds = [-f[j], f[i], e[j], -e[i]];
            let cols = [ve(i), ve(j), vf(i), vf(j)];
            let (tmax, tmin) = (br.angle_max.tan(), br.angle_min.tan());
            for q in 0..4 {
                ineq.push((row0 + 3 * k, cols[q], ds[q] - tmax * dc[q]));
                ineq.push((row0 + 3 * k + 1, cols[q], tmin * dc[q] - ds[q]));
                ineq.push((row0 + 3 * k + 2, cols[q], -dc[q]));
            }
        }
    }

    /// Appends the lower triangle of the multiplier-weighted constraint
    /// Hessian; all rows are quadratic so the result is independent of `x`.
    pub fn constraint_hessian(&self, off: usize, lam_eq: &[f64], lam_ineq: &[f64], out: &mut Triplets) {
        let l = self.layout;
        let nb = l.n_bus;
        let mut push = |a: usize, b: usize, v: f64| {
            if v != 0.0 {
                let (a, b) = (off + a, off + b);
                out.push(if a >= b { (a, b, v) } else { (b, a, v) });
            }
        };
        for (i, bus) in self.case.buses.iter().enumerate() {
            let d = 2.0 * bus.shunt_conductance * lam_eq[i] - 2.0 * bus.shunt_susceptance * lam_eq[nb + i]
                + 2.0 * (lam_ineq[2 * i + 1] - lam_ineq[2 * i]);
            push(l.e(i), l.e(i), d);
            push(l.f(i), l.f(i), d);
        }
        for br in &self.case.branches {
            let (g, b, bc) = (br.conductance, br.susceptance, br.charging);
            for (a, o) in [(br.from, br.to), (br.to, br.from)] {
                let (lp, lq) = (lam_eq[a], lam_eq[nb + a]);
                let diag = lp * 2.0 * g + lq * (-2.0 * b - bc);
                push(l.e(a), l.e(a), diag);
                push(l.f(a), l.f(a), diag);
                let same = -g * lp + b * lq;
                push(l.e(a), l.e(o), same);
                push(l.f(a), l.f(o), same);
                push(l.e(a), l.f(o), b * lp + g * lq);
                push(l.f(a), l.e(o), -b * lp - g * lq);
            }
        }
        let row0 = 2 * nb;
        for m in 0..l.monitored.len() {
            let lam = lam_eq[row0 + 3 * m + 2];
            push(l.i_re(m), l.i_re(m), -2.0 * lam);
            push(l.i_im(m), l.i_im(m), -2.0 * lam);
        }
        let row0 = 2 * nb;
        for (k, br) in self.case.branches.iter().enumerate() {
            let (i, j) = (br.from, br.to);
            let (l1, l2, l3) = (lam_ineq[row0 + 3 * k], lam_ineq[row0 + 3 * k + 1], lam_ineq[row0 + 3 * k + 2]);
            let wc = -br.angle_max.tan() * l1 + br.angle_min.tan() * l2 - l3;
            let ws = l1 - l2;
            push(l.e(i), l.e(j), wc);
            push(l.f(i), l.f(j), wc);
            push(l.f(i), l.e(j), ws);
            push(l.e(i), l.f(j), -ws);
        }
    }
}

/// Which period variable a coupling term acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CoupledVar {
    Power(usize),
    /// Monitored-branch position.
    CurrentSq(usize),
}

/// `dual * r + rho/2 * r^2` with `r = target - sigma * x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingTerm {
    pub var: CoupledVar,
    pub sigma: f64,
    pub target: f64,
    pub dual: f64,
}

#[derive(Debug, Clone)]
pub struct AcSubproblemSpec {
    pub t: usize,
    pub rho: f64,
    pub terms: Vec<CouplingTerm>,
    /// Squared-current caps per branch, p.u.^2.
    pub caps: Vec<Option<f64>>,
    pub warm_start: Option<AcPeriodVars>,
    /// Multiplier applied to $/h costs inside the subproblem.
    pub cost_scale: f64,
}

#[derive(Debug, Clone)]
pub struct AcSolution {
    pub vars: AcPeriodVars,
    /// Generation cost, $/h.
    pub cost: f64,
    pub iterations: usize,
    pub kkt_residual: f64,
}

struct AcProblem<'a> {
    model: PeriodModel<'a>,
    spec: &'a AcSubproblemSpec,
    start: AcPeriodVars,
}

impl AcProblem<'_> {
    fn index(&self, v: CoupledVar) -> usize {
        match v {
            CoupledVar::Power(g) => self.model.layout.p(g),
            CoupledVar::CurrentSq(m) => self.model.layout.current_sq(m),
        }
    }
}

impl Problem for AcProblem<'_> {
    fn dims(&self) -> Dims {
        let l = self.model.layout;
        Dims {
            n: l.n(),
            n_eq: l.n_eq(),
            n_ineq: l.n_ineq(),
        }
    }
    fn bounds(&self, lower: &mut [f64], upper: &mut [f64]) {
        self.model.bounds(lower, upper);
    }
    fn initial_point(&self, z: &mut [f64]) {
        self.model.layout.pack(&self.start, z);
    }
    fn objective(&self, z: &[f64]) -> f64 {
        let mut v = self.spec.cost_scale * self.model.cost(z);
        for term in &self.spec.terms {
            let r = term.target - term.sigma * z[self.index(term.var)];
            v += term.dual * r + 0.5 * self.spec.rho * r * r;
        }
        v
    }
    fn gradient(&self, z: &[f64], grad: &mut [f64]) {
        grad.fill(0.0);
        self.model.cost_gradient(z, self.spec.cost_scale, 0, grad);
        for term in &self.spec.terms {
            let k = self.index(term.var);
            let r = term.target - term.sigma * z[k];
            grad[k] -= term.sigma * (term.dual + self.spec.rho * r);
        }
    }
    fn constraints(&self, z: &[f64], eq: &mut [f64], ineq: &mut [f64]) {
        self.model.equalities(z, eq);
        self.model.inequalities(z, ineq);
    }
    fn jacobian(&self, z: &[f64], eq: &mut Triplets, ineq: &mut Triplets) {
        self.model.jacobian(z, 0, 0, 0, eq, ineq);
    }
    fn hessian(&self, _: &[f64], obj: f64, le: &[f64], li: &[f64], out: &mut Triplets) -> bool {
        self.model.cost_hessian(obj * self.spec.cost_scale, 0, out);
        for term in &self.spec.terms {
            let k = self.index(term.var);
            out.push((k, k, obj * self.spec.rho * term.sigma * term.sigma));
        }
        self.model.constraint_hessian(0, le, li, out);
        true
    }
}

/// Solves the period subproblem, retrying once from a flat start when a
/// warm start fails.
pub fn solve_ac_subproblem(
    spec: &AcSubproblemSpec,
    case: &NetworkCase,
    layout: &AcLayout,
    options: &Options,
) -> Result<AcSolution, Error> {
    let demand = case.total_demand(spec.t).p;
    let capacity: f64 = case.generators.iter().map(|g| g.p_max).sum();
    if demand > capacity {
        return Err(Error::SubproblemFailure {
            context: format!("period {}: demand {demand:.4} p.u. exceeds capacity {capacity:.4} p.u.", spec.t),
            iterations: 0,
            residual: f64::INFINITY,
        });
    }
    let model = PeriodModel::new(case, layout, spec.t, &spec.caps);
    let mut starts = Vec::new();
    if let Some(w) = &spec.warm_start {
        starts.push(w.clone());
    }
    starts.push(AcPeriodVars::flat_start(case, layout));
    let mut last = None;
    for start in starts {
        let problem = AcProblem {
            model: model.clone(),
            spec,
            start,
        };
        let r = nlp::minimize(&problem, options);
        if r.acceptable(options) {
            return Ok(AcSolution {
                cost: model.cost(&r.z),
                vars: layout.unpack(&r.z),
                iterations: r.iterations,
                kkt_residual: r.kkt_residual,
            });
        }
        last = Some(r);
    }
    let r = last.expect("at least one start");
    Err(Error::SubproblemFailure {
        context: format!("period {} ({:?})", spec.t, r.status),
        iterations: r.iterations,
        residual: r.kkt_residual,
    })
}

/// Largest violation per constraint family of one period.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ResidualSummary {
    pub power_balance: f64,
    pub current: f64,
    pub voltage: f64,
    pub angle: f64,
    pub bounds: f64,
}

impl ResidualSummary {
    pub fn max(&self) -> f64 {
        self.power_balance
            .max(self.current)
            .max(self.voltage)
            .max(self.angle)
            .max(self.bounds)
    }

    pub fn merge(&self, o: &ResidualSummary) -> ResidualSummary {
        ResidualSummary {
            power_balance: self.power_balance.max(o.power_balance),
            current: self.current.max(o.current),
            voltage: self.voltage.max(o.voltage),
            angle: self.angle.max(o.angle),
            bounds: self.bounds.max(o.bounds),
        }
    }
}

pub fn residual_summary(model: &PeriodModel, vars: &AcPeriodVars) -> ResidualSummary {
    let l = model.layout;
    let mut x = vec![0.0; l.n()];
    l.pack(vars, &mut x);
    let mut eq = vec![0.0; l.n_eq()];
    let mut ineq = vec![0.0; l.n_ineq()];
    model.equalities(&x, &mut eq);
    model.inequalities(&x, &mut ineq);
    let nb = l.n_bus;
    let amax = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let pmax = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(*x));
    let mut lo = vec![0.0; l.n()];
    let mut hi = vec![0.0; l.n()];
    model.bounds(&mut lo, &mut hi);
    let bounds = (0..l.n()).fold(0.0f64, |m, j| m.max(lo[j] - x[j]).max(x[j] - hi[j]));
    ResidualSummary {
        power_balance: amax(&eq[..2 * nb]),
        current: amax(&eq[2 * nb..]),
        voltage: pmax(&ineq[..2 * nb]).max(0.0),
        angle: pmax(&ineq[2 * nb..]).max(0.0),
        bounds,
    }
}
