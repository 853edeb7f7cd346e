use super::ldl::Ldl;
use super::{Dims, HessianMode, Kkt, NlpResult, Options, Problem, Status, Triplets, INFINITE_BOUND};

const TAU_MIN: f64 = 0.995;
const KAPPA_EPS: f64 = 10.0;
const KAPPA_SIGMA: f64 = 1e10;
const S_MAX: f64 = 100.0;
const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACK: usize = 40;
const MAX_LS_FAILURES: usize = 8;
const MAX_SOC: usize = 4;
const KAPPA_SOC: f64 = 0.99;
const DELTA_C_MAX: f64 = 1e-2;

type SparseRows = Vec<Vec<(usize, f64)>>;

struct Eval {
    f: f64,
    grad: Vec<f64>,
    ce: Vec<f64>,
    ci: Vec<f64>,
    je: SparseRows,
    ji: SparseRows,
}

struct Setup {
    n: usize,
    /// Problem equalities; fixed variables follow as extra rows.
    n_eq: usize,
    n_ineq: usize,
    fixed: Vec<usize>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    has_lower: Vec<bool>,
    has_upper: Vec<bool>,
}

impl Setup {
    fn me(&self) -> usize {
        self.n_eq + self.fixed.len()
    }
}

fn to_rows(t: &Triplets, rows: usize) -> SparseRows {
    let mut out = vec![Vec::new(); rows];
    for &(r, c, v) in t {
        if v != 0.0 {
            out[r].push((c, v));
        }
    }
    out
}

fn evaluate<P: Problem + ?Sized>(p: &P, st: &Setup, x: &[f64], sf: f64, with_derivs: bool) -> Eval {
    let mut ce = vec![0.0; st.me()];
    let mut ci = vec![0.0; st.n_ineq];
    p.constraints(x, &mut ce[..st.n_eq], &mut ci);
    for (k, &j) in st.fixed.iter().enumerate() {
        ce[st.n_eq + k] = x[j] - st.lower[j];
    }
    let f = sf * p.objective(x);
    let mut grad = Vec::new();
    let mut je = Vec::new();
    let mut ji = Vec::new();
    if with_derivs {
        grad = vec![0.0; st.n];
        p.gradient(x, &mut grad);
        grad.iter_mut().for_each(|g| *g *= sf);
        let mut te = Triplets::new();
        let mut ti = Triplets::new();
        p.jacobian(x, &mut te, &mut ti);
        for (k, &j) in st.fixed.iter().enumerate() {
            te.push((st.n_eq + k, j, 1.0));
        }
        je = to_rows(&te, st.me());
        ji = to_rows(&ti, st.n_ineq);
    }
    Eval {
        f,
        grad,
        ce,
        ci,
        je,
        ji,
    }
}

fn finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn one_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

/// `out += J^T y`.
fn add_jt(rows: &SparseRows, y: &[f64], out: &mut [f64]) {
    for (r, row) in rows.iter().enumerate() {
        let yr = y[r];
        if yr != 0.0 {
            for &(c, v) in row {
                out[c] += v * yr;
            }
        }
    }
}

fn jx(rows: &SparseRows, x: &[f64]) -> Vec<f64> {
    rows.iter()
        .map(|row| row.iter().map(|&(c, v)| v * x[c]).sum())
        .collect()
}

#[derive(Clone)]
struct Iterate {
    x: Vec<f64>,
    s: Vec<f64>,
    le: Vec<f64>,
    li: Vec<f64>,
    zl: Vec<f64>,
    zu: Vec<f64>,
}

struct Direction {
    dx: Vec<f64>,
    ds: Vec<f64>,
    le_new: Vec<f64>,
    dli: Vec<f64>,
    dzl: Vec<f64>,
    dzu: Vec<f64>,
}

struct Residuals {
    kkt: Kkt,
    e_mu: f64,
}

fn residuals(st: &Setup, it: &Iterate, ev: &Eval, mu: f64) -> Residuals {
    let mut rd = ev.grad.clone();
    add_jt(&ev.je, &it.le, &mut rd);
    add_jt(&ev.ji, &it.li, &mut rd);
    for j in 0..st.n {
        rd[j] += it.zu[j] - it.zl[j];
    }
    let mut primal = inf_norm(&ev.ce);
    for r in 0..st.n_ineq {
        primal = primal.max((ev.ci[r] + it.s[r]).abs());
    }
    let (mut comp0, mut comp_mu) = (0.0f64, 0.0f64);
    let mut acc = |a: f64| {
        comp0 = comp0.max(a.abs());
        comp_mu = comp_mu.max((a - mu).abs());
    };
    for r in 0..st.n_ineq {
        acc(it.s[r] * it.li[r]);
    }
    let mut n_bound = 0usize;
    let mut z_sum = 0.0;
    for j in 0..st.n {
        if st.has_lower[j] {
            acc((it.x[j] - st.lower[j]) * it.zl[j]);
            n_bound += 1;
            z_sum += it.zl[j].abs();
        }
        if st.has_upper[j] {
            acc((st.upper[j] - it.x[j]) * it.zu[j]);
            n_bound += 1;
            z_sum += it.zu[j].abs();
        }
    }
    let m_all = st.me() + st.n_ineq + n_bound;
    let sd = if m_all == 0 {
        1.0
    } else {
        S_MAX.max((one_norm(&it.le) + one_norm(&it.li) + z_sum) / m_all as f64) / S_MAX
    };
    let m_c = st.n_ineq + n_bound;
    let sc = if m_c == 0 {
        1.0
    } else {
        S_MAX.max((one_norm(&it.li) + z_sum) / m_c as f64) / S_MAX
    };
    let stat = inf_norm(&rd) / sd;
    Residuals {
        kkt: Kkt {
            stationarity: stat,
            primal,
            complementarity: comp0 / sc,
        },
        e_mu: stat.max(primal).max(comp_mu / sc),
    }
}

struct Linear {
    ldl: Ldl,
    delta_c: f64,
    /// Condensed primal matrix `W + J_I^T S J_I + S_bounds + delta_w I` (lower).
    wc: Vec<f64>,
}

struct Regularization {
    last_delta_w: f64,
}

/// Factors the condensed KKT matrix, correcting inertia by a diagonal shift.
fn factor(
    st: &Setup,
    w: &[f64],
    it: &Iterate,
    ev: &Eval,
    reg: &mut Regularization,
) -> Option<Linear> {
    let n = st.n;
    let me = st.me();
    let nn = n + me;
    let mut base = w.to_vec();
    for (r, row) in ev.ji.iter().enumerate() {
        let sig = it.li[r] / it.s[r];
        for &(a, va) in row {
            for &(b, vb) in row {
                if b <= a {
                    base[a * n + b] += sig * va * vb;
                }
            }
        }
    }
    for j in 0..n {
        let mut d = 0.0;
        if st.has_lower[j] {
            d += it.zl[j] / (it.x[j] - st.lower[j]);
        }
        if st.has_upper[j] {
            d += it.zu[j] / (st.upper[j] - it.x[j]);
        }
        base[j * n + j] += d;
    }

    let assemble = |delta_w: f64, delta_c: f64| {
        let mut k = vec![0.0; nn * nn];
        for i in 0..n {
            k[i * nn..i * nn + i + 1].copy_from_slice(&base[i * n..i * n + i + 1]);
            k[i * nn + i] += delta_w;
        }
        for (r, row) in ev.je.iter().enumerate() {
            let i = n + r;
            for &(c, v) in row {
                k[i * nn + c] += v;
            }
            k[i * nn + i] = -delta_c;
        }
        k
    };

    let mut delta_w = 0.0;
    let mut delta_c = 0.0;
    let mut first = true;
    for _ in 0..60 {
        let ldl = Ldl::factor(assemble(delta_w, delta_c), nn);
        let inertia = ldl.inertia;
        if inertia.positive == n && inertia.negative == me && inertia.zero == 0 {
            if delta_w > 0.0 {
                reg.last_delta_w = delta_w;
            }
            let mut wc = base;
            for j in 0..n {
                wc[j * n + j] += delta_w;
            }
            return Some(Linear { ldl, delta_c, wc });
        }
        if inertia.zero > 0 && inertia.positive == n && delta_c < DELTA_C_MAX {
            // Only the constraint block is singular. Large barrier terms can
            // put the zero-pivot threshold above a fixed shift, so the shift
            // grows until the block is resolved.
            delta_c = if delta_c == 0.0 { 1e-8 } else { delta_c * 10.0 };
            continue;
        }
        if inertia.zero > 0 && delta_c == 0.0 {
            delta_c = 1e-8;
            if first {
                continue;
            }
        }
        delta_w = if delta_w == 0.0 {
            if reg.last_delta_w == 0.0 {
                1e-4
            } else {
                (reg.last_delta_w / 3.0).max(1e-20)
            }
        } else if first && reg.last_delta_w == 0.0 {
            delta_w * 100.0
        } else {
            delta_w * 8.0
        };
        first = false;
        if delta_w > 1e40 {
            return None;
        }
    }
    None
}

#[allow(clippy::too_many_arguments)]
fn direction(
    st: &Setup,
    lin: &Linear,
    it: &Iterate,
    ev: &Eval,
    mu: f64,
    r_e: &[f64],
    r_i: &[f64],
) -> Option<Direction> {
    let n = st.n;
    let me = st.me();
    let mut rhs = vec![0.0; n + me];
    let mut weights = vec![0.0; st.n_ineq];
    for r in 0..st.n_ineq {
        let sig = it.li[r] / it.s[r];
        weights[r] = mu / it.s[r] + sig * r_i[r];
    }
    for j in 0..n {
        rhs[j] = -ev.grad[j];
        if st.has_lower[j] {
            rhs[j] += mu / (it.x[j] - st.lower[j]);
        }
        if st.has_upper[j] {
            rhs[j] -= mu / (st.upper[j] - it.x[j]);
        }
    }
    let mut t = vec![0.0; n];
    add_jt(&ev.ji, &weights, &mut t);
    for j in 0..n {
        rhs[j] -= t[j];
    }
    for r in 0..me {
        rhs[n + r] = -r_e[r] - lin.delta_c * it.le[r];
    }
    lin.ldl.solve(&mut rhs);
    if !finite(&rhs) {
        return None;
    }
    let dx = rhs[..n].to_vec();
    let le_new = rhs[n..].to_vec();
    let jdx = jx(&ev.ji, &dx);
    let mut ds = vec![0.0; st.n_ineq];
    let mut dli = vec![0.0; st.n_ineq];
    for r in 0..st.n_ineq {
        ds[r] = -r_i[r] - jdx[r];
        dli[r] = mu / it.s[r] - it.li[r] - it.li[r] / it.s[r] * ds[r];
    }
    let mut dzl = vec![0.0; n];
    let mut dzu = vec![0.0; n];
    for j in 0..n {
        if st.has_lower[j] {
            let gap = it.x[j] - st.lower[j];
            dzl[j] = mu / gap - it.zl[j] - it.zl[j] / gap * dx[j];
        }
        if st.has_upper[j] {
            let gap = st.upper[j] - it.x[j];
            dzu[j] = mu / gap - it.zu[j] + it.zu[j] / gap * dx[j];
        }
    }
    Some(Direction {
        dx,
        ds,
        le_new,
        dli,
        dzl,
        dzu,
    })
}

fn max_step(values: &[f64], deltas: &[f64], tau: f64, mask: Option<&[bool]>) -> f64 {
    let mut alpha = 1.0f64;
    for i in 0..values.len() {
        if mask.is_none_or(|m| m[i]) && deltas[i] < 0.0 {
            alpha = alpha.min(-tau * values[i] / deltas[i]);
        }
    }
    alpha
}

fn primal_max_step(st: &Setup, it: &Iterate, d: &Direction, tau: f64) -> f64 {
    let mut alpha = max_step(&it.s, &d.ds, tau, None);
    for j in 0..st.n {
        if st.has_lower[j] && d.dx[j] < 0.0 {
            alpha = alpha.min(-tau * (it.x[j] - st.lower[j]) / d.dx[j]);
        }
        if st.has_upper[j] && d.dx[j] > 0.0 {
            alpha = alpha.min(tau * (st.upper[j] - it.x[j]) / d.dx[j]);
        }
    }
    alpha
}

fn barrier(st: &Setup, x: &[f64], s: &[f64], f: f64, mu: f64) -> f64 {
    let mut b = f;
    for &v in s {
        b -= mu * v.ln();
    }
    for j in 0..st.n {
        if st.has_lower[j] {
            b -= mu * (x[j] - st.lower[j]).ln();
        }
        if st.has_upper[j] {
            b -= mu * (st.upper[j] - x[j]).ln();
        }
    }
    b
}

fn infeasibility(ce: &[f64], ci: &[f64], s: &[f64]) -> f64 {
    one_norm(ce) + ci.iter().zip(s).map(|(c, s)| (c + s).abs()).sum::<f64>()
}

fn bfgs_update(b: &mut [f64], n: usize, s: &[f64], y: &[f64], first: &mut bool) {
    let sy: f64 = s.iter().zip(y).map(|(a, b)| a * b).sum();
    let ss: f64 = s.iter().map(|a| a * a).sum();
    if ss < 1e-300 {
        return;
    }
    if *first {
        let yy: f64 = y.iter().map(|a| a * a).sum();
        let scale = if sy > 0.0 { (yy / sy).clamp(1e-6, 1e6) } else { 1.0 };
        b.fill(0.0);
        for i in 0..n {
            b[i * n + i] = scale;
        }
        *first = false;
    }
    let bs: Vec<f64> = (0..n)
        .map(|i| (0..n).map(|j| b[i * n + j] * s[j]).sum())
        .collect();
    let sbs: f64 = s.iter().zip(&bs).map(|(a, b)| a * b).sum();
    if sbs <= 0.0 {
        return;
    }
    let (r, rs) = if sy >= 0.2 * sbs {
        (y.to_vec(), sy)
    } else {
        let th = 0.8 * sbs / (sbs - sy);
        let r: Vec<f64> = y.iter().zip(&bs).map(|(y, b)| th * y + (1.0 - th) * b).collect();
        let rs = s.iter().zip(&r).map(|(a, b)| a * b).sum();
        (r, rs)
    };
    for i in 0..n {
        for j in 0..n {
            b[i * n + j] += r[i] * r[j] / rs - bs[i] * bs[j] / sbs;
        }
    }
}

fn lagrangian_grad(ev: &Eval, le: &[f64], li: &[f64]) -> Vec<f64> {
    let mut g = ev.grad.clone();
    add_jt(&ev.je, le, &mut g);
    add_jt(&ev.ji, li, &mut g);
    g
}

/// Primal-dual interior point method with a monotone barrier update, an
/// l1 merit line search with one second-order correction, and inertia
/// correction of the KKT system.
pub fn minimize<P: Problem + ?Sized>(problem: &P, options: &Options) -> NlpResult {
    let Dims { n, n_eq, n_ineq } = problem.dims();
    let mut lower = vec![0.0; n];
    let mut upper = vec![0.0; n];
    problem.bounds(&mut lower, &mut upper);
    let mut fixed = Vec::new();
    let mut has_lower = vec![false; n];
    let mut has_upper = vec![false; n];
    for j in 0..n {
        let (l, u) = (lower[j], upper[j]);
        if l > -INFINITE_BOUND && u < INFINITE_BOUND && (u - l).abs() <= 1e-12 * l.abs().max(1.0) {
            fixed.push(j);
            continue;
        }
        has_lower[j] = l > -INFINITE_BOUND;
        has_upper[j] = u < INFINITE_BOUND;
    }
    let st = Setup {
        n,
        n_eq,
        n_ineq,
        fixed,
        lower,
        upper,
        has_lower,
        has_upper,
    };
    let me = st.me();

    let mut x = vec![0.0; n];
    problem.initial_point(&mut x);
    for j in 0..n {
        let (l, u) = (st.lower[j], st.upper[j]);
        if st.fixed.contains(&j) {
            x[j] = l;
            continue;
        }
        let width = if st.has_lower[j] && st.has_upper[j] { u - l } else { f64::INFINITY };
        if st.has_lower[j] {
            let push = (1e-2 * l.abs().max(1.0)).min(1e-2 * width);
            x[j] = x[j].max(l + push);
        }
        if st.has_upper[j] {
            let push = (1e-2 * u.abs().max(1.0)).min(1e-2 * width);
            x[j] = x[j].min(u - push);
        }
    }

    let sf = if options.scale_objective {
        let mut g = vec![0.0; n];
        problem.gradient(&x, &mut g);
        let gmax = inf_norm(&g);
        if gmax.is_finite() && gmax > 100.0 {
            100.0 / gmax
        } else {
            1.0
        }
    } else {
        1.0
    };

    let mut mu = options.mu_init;
    let mut ev = evaluate(problem, &st, &x, sf, true);
    let s: Vec<f64> = ev
        .ci
        .iter()
        .map(|&c| (-c).max(1e-2 * c.abs().max(1.0)))
        .collect();
    let li: Vec<f64> = s.iter().map(|&s| mu / s).collect();
    let zl: Vec<f64> = (0..n)
        .map(|j| if st.has_lower[j] { mu / (x[j] - st.lower[j]) } else { 0.0 })
        .collect();
    let zu: Vec<f64> = (0..n)
        .map(|j| if st.has_upper[j] { mu / (st.upper[j] - x[j]) } else { 0.0 })
        .collect();
    let mut it = Iterate {
        x,
        s,
        le: vec![0.0; me],
        li,
        zl,
        zu,
    };

    let mut use_bfgs = options.hessian == HessianMode::Bfgs;
    let mut bfgs = vec![0.0; n * n];
    for i in 0..n {
        bfgs[i * n + i] = 1.0;
    }
    let mut bfgs_first = true;
    let mut reg = Regularization { last_delta_w: 0.0 };
    let mut nu = 1.0f64;
    let mut ls_failures = 0usize;
    let mut best: Option<(f64, Iterate, Kkt)> = None;
    let status;
    let mut iterations = 0usize;
    let mut hess_t = Triplets::new();

    let finish = |it: &Iterate, kkt: Kkt, iterations: usize, status: Status| {
        let f = problem.objective(&it.x);
        let unscale = |v: &[f64]| v.iter().map(|x| x / sf).collect::<Vec<f64>>();
        NlpResult {
            z: it.x.clone(),
            objective: f,
            lambda_eq: unscale(&it.le[..n_eq]),
            lambda_ineq: unscale(&it.li),
            z_lower: unscale(&it.zl),
            z_upper: unscale(&it.zu),
            kkt,
            kkt_residual: kkt.max(),
            iterations,
            status,
            objective_scale: sf,
        }
    };

    let mut last_kkt;
    loop {
        if !finite(&ev.grad) || !finite(&ev.ce) || !finite(&ev.ci) || !ev.f.is_finite() {
            log::debug!("ipm {iterations}: non-finite problem values");
            status = Status::Diverged;
            last_kkt = Kkt {
                stationarity: f64::INFINITY,
                primal: f64::INFINITY,
                complementarity: f64::INFINITY,
            };
            break;
        }
        let mut res = residuals(&st, &it, &ev, mu);
        last_kkt = res.kkt;
        let e0 = res.kkt.max();
        if best.as_ref().is_none_or(|(b, _, _)| e0 < *b) {
            best = Some((e0, it.clone(), res.kkt));
        }
        if e0 <= options.tol {
            status = Status::Converged;
            break;
        }
        if iterations >= options.max_iter {
            status = Status::MaxIter;
            break;
        }
        let mu_min = options.tol / 10.0;
        while res.e_mu <= KAPPA_EPS * mu && mu > mu_min {
            mu = mu_min.max((0.2 * mu).min(mu.powf(1.5)));
            res = residuals(&st, &it, &ev, mu);
        }
        iterations += 1;

        // Lagrangian Hessian.
        let mut w = vec![0.0; n * n];
        if !use_bfgs {
            hess_t.clear();
            if problem.hessian(&it.x, sf, &it.le[..n_eq], &it.li, &mut hess_t) {
                for &(r, c, v) in &hess_t {
                    let (r, c) = if r >= c { (r, c) } else { (c, r) };
                    w[r * n + c] += v;
                }
            } else {
                use_bfgs = true;
            }
        }
        if use_bfgs {
            for i in 0..n {
                w[i * n..i * n + i + 1].copy_from_slice(&bfgs[i * n..i * n + i + 1]);
            }
        }

        let Some(lin) = factor(&st, &w, &it, &ev, &mut reg) else {
            log::debug!("ipm {iterations}: inertia correction failed");
            status = Status::Diverged;
            break;
        };
        let r_i: Vec<f64> = ev.ci.iter().zip(&it.s).map(|(c, s)| c + s).collect();
        let Some(d) = direction(&st, &lin, &it, &ev, mu, &ev.ce, &r_i) else {
            log::debug!("ipm {iterations}: non-finite search direction");
            status = Status::Diverged;
            break;
        };

        let tau = TAU_MIN.max(1.0 - mu);
        let alpha_max = primal_max_step(&st, &it, &d, tau);
        let alpha_dual = max_step(&it.li, &d.dli, tau, None)
            .min(max_step(&it.zl, &d.dzl, tau, Some(&st.has_lower)))
            .min(max_step(&it.zu, &d.dzu, tau, Some(&st.has_upper)));

        // Merit function and its directional derivative.
        let phi0 = barrier(&st, &it.x, &it.s, ev.f, mu);
        let theta0 = infeasibility(&ev.ce, &ev.ci, &it.s);
        let mut grad_phi_d = 0.0;
        for j in 0..n {
            let mut g = ev.grad[j];
            if st.has_lower[j] {
                g -= mu / (it.x[j] - st.lower[j]);
            }
            if st.has_upper[j] {
                g += mu / (st.upper[j] - it.x[j]);
            }
            grad_phi_d += g * d.dx[j];
        }
        for r in 0..n_ineq {
            grad_phi_d -= mu / it.s[r] * d.ds[r];
        }
        let mut curv = 0.0;
        for i in 0..n {
            let mut row = 0.0;
            for j in 0..n {
                let v = if j <= i { lin.wc[i * n + j] } else { lin.wc[j * n + i] };
                row += v * d.dx[j];
            }
            curv += row * d.dx[i];
        }
        if theta0 > 1e-14 {
            let required = (grad_phi_d + 0.5 * curv.max(0.0)) / (0.9 * theta0);
            if nu < required {
                nu = required * 1.1 + 1e-4;
            }
        }
        let merit0 = phi0 + nu * theta0;
        let dmerit = grad_phi_d - nu * theta0;

        let trial = |x: &[f64], s: &[f64]| -> Option<(f64, f64)> {
            let ev_t = evaluate(problem, &st, x, sf, false);
            if !ev_t.f.is_finite() || !finite(&ev_t.ce) || !finite(&ev_t.ci) {
                return None;
            }
            let th = infeasibility(&ev_t.ce, &ev_t.ci, s);
            Some((barrier(&st, x, s, ev_t.f, mu) + nu * th, th))
        };
        let step_to = |dd: &Direction, a: f64| -> (Vec<f64>, Vec<f64>) {
            let x: Vec<f64> = it.x.iter().zip(&dd.dx).map(|(x, d)| x + a * d).collect();
            let s: Vec<f64> = it.s.iter().zip(&dd.ds).map(|(s, d)| s + a * d).collect();
            (x, s)
        };
        let sufficient = |m: f64, a: f64| {
            if dmerit < 0.0 {
                m <= merit0 + ARMIJO * a * dmerit
            } else {
                m <= merit0 + 1e-12 * merit0.abs().max(1.0)
            }
        };

        let mut accepted: Option<(Vec<f64>, Vec<f64>, f64)> = None;
        let mut alpha = alpha_max;
        for k in 0..MAX_BACKTRACK {
            let (xt, stt) = step_to(&d, alpha);
            match trial(&xt, &stt) {
                Some((m, _)) if sufficient(m, alpha) => {
                    accepted = Some((xt, stt, alpha));
                    break;
                }
                Some((_, th)) if k == 0 && th >= theta0 && th > 0.0 => {
                    // Second-order corrections for the full step.
                    let mut ev_t = evaluate(problem, &st, &xt, sf, false);
                    let mut rce = ev.ce.clone();
                    let mut rci = r_i.clone();
                    let (mut a_prev, mut s_t, mut th_prev) = (alpha, stt.clone(), th);
                    for _ in 0..MAX_SOC {
                        for r in 0..me {
                            rce[r] = a_prev * rce[r] + ev_t.ce[r];
                        }
                        for r in 0..n_ineq {
                            rci[r] = a_prev * rci[r] + ev_t.ci[r] + s_t[r];
                        }
                        let Some(dsoc) = direction(&st, &lin, &it, &ev, mu, &rce, &rci) else {
                            break;
                        };
                        let a_soc = primal_max_step(&st, &it, &dsoc, tau);
                        let (xs, ss) = step_to(&dsoc, a_soc);
                        let Some((m, th_soc)) = trial(&xs, &ss) else {
                            break;
                        };
                        if sufficient(m, alpha) {
                            accepted = Some((xs, ss, a_soc));
                            break;
                        }
                        if th_soc > KAPPA_SOC * th_prev {
                            break;
                        }
                        ev_t = evaluate(problem, &st, &xs, sf, false);
                        (a_prev, s_t, th_prev) = (a_soc, ss, th_soc);
                    }
                    if accepted.is_some() {
                        break;
                    }
                }
                _ => {}
            }
            alpha *= 0.5;
            if alpha < 1e-14 {
                break;
            }
        }
        let (xn, sn, a_p) = match accepted {
            Some(a) => {
                ls_failures = 0;
                a
            }
            None => {
                ls_failures += 1;
                if ls_failures > MAX_LS_FAILURES {
                    log::debug!("ipm {iterations}: line search failed {ls_failures} times in a row");
                    status = Status::Diverged;
                    break;
                }
                // Accept a short step to escape a stalled line search.
                let a = alpha_max * 1e-2;
                let (xt, stt) = step_to(&d, a);
                (xt, stt, a)
            }
        };
        let a_p = a_p.min(1.0);
        log::trace!(
            "ipm {iterations}: mu {mu:.2e} err {e0:.3e} primal {:.2e} alpha {a_p:.2e}/{alpha_max:.2e} nu {nu:.2e} dw {:.1e}",
            res.kkt.primal,
            reg.last_delta_w
        );

        let le_old = it.le.clone();
        for r in 0..me {
            it.le[r] += a_p * (d.le_new[r] - le_old[r]);
        }
        for r in 0..n_ineq {
            it.li[r] += alpha_dual * d.dli[r];
        }
        for j in 0..n {
            it.zl[j] += alpha_dual * d.dzl[j];
            it.zu[j] += alpha_dual * d.dzu[j];
        }
        let x_old = std::mem::replace(&mut it.x, xn);
        it.s = sn;
        for r in 0..n_ineq {
            let c = mu / it.s[r];
            it.li[r] = it.li[r].clamp(c / KAPPA_SIGMA, c * KAPPA_SIGMA);
        }
        for j in 0..n {
            if st.has_lower[j] {
                let c = mu / (it.x[j] - st.lower[j]);
                it.zl[j] = it.zl[j].clamp(c / KAPPA_SIGMA, c * KAPPA_SIGMA);
            }
            if st.has_upper[j] {
                let c = mu / (st.upper[j] - it.x[j]);
                it.zu[j] = it.zu[j].clamp(c / KAPPA_SIGMA, c * KAPPA_SIGMA);
            }
        }
        let ev_new = evaluate(problem, &st, &it.x, sf, true);
        if use_bfgs && finite(&ev_new.grad) {
            let g_new = lagrangian_grad(&ev_new, &it.le, &it.li);
            let g_old = lagrangian_grad(&ev, &it.le, &it.li);
            let sx: Vec<f64> = it.x.iter().zip(&x_old).map(|(a, b)| a - b).collect();
            let y: Vec<f64> = g_new.iter().zip(&g_old).map(|(a, b)| a - b).collect();
            bfgs_update(&mut bfgs, n, &sx, &y, &mut bfgs_first);
        }
        ev = ev_new;
        if inf_norm(&it.x) > 1e20 {
            status = Status::Diverged;
            break;
        }
    }

    match status {
        Status::Converged => finish(&it, last_kkt, iterations, status),
        _ => {
            let (_, b, kkt) = best.unwrap_or_else(|| (f64::INFINITY, it.clone(), last_kkt));
            finish(&b, kkt, iterations, status)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::tests::Quad;
    use super::super::*;

    struct Shifted;
    impl Problem for Shifted {
        fn dims(&self) -> Dims {
            Dims {
                n: 1,
                n_eq: 0,
                n_ineq: 0,
            }
        }
        fn bounds(&self, l: &mut [f64], u: &mut [f64]) {
            l[0] = -INFINITE_BOUND;
            u[0] = INFINITE_BOUND;
        }
        fn initial_point(&self, z: &mut [f64]) {
            z[0] = 0.0;
        }
        fn objective(&self, z: &[f64]) -> f64 {
            (z[0] - 3.0).powi(2)
        }
        fn gradient(&self, z: &[f64], g: &mut [f64]) {
            g[0] = 2.0 * (z[0] - 3.0);
        }
        fn constraints(&self, _: &[f64], _: &mut [f64], _: &mut [f64]) {}
        fn jacobian(&self, _: &[f64], _: &mut Triplets, _: &mut Triplets) {}
        fn hessian(&self, _: &[f64], s: f64, _: &[f64], _: &[f64], out: &mut Triplets) -> bool {
            out.push((0, 0, 2.0 * s));
            true
        }
    }

    struct Circle {
        exact: bool,
    }
    impl Problem for Circle {
        fn dims(&self) -> Dims {
            Dims {
                n: 2,
                n_eq: 1,
                n_ineq: 0,
            }
        }
        fn bounds(&self, l: &mut [f64], u: &mut [f64]) {
            l.fill(-INFINITE_BOUND);
            u.fill(INFINITE_BOUND);
        }
        fn initial_point(&self, z: &mut [f64]) {
            z[0] = -0.5;
            z[1] = -0.2;
        }
        fn objective(&self, z: &[f64]) -> f64 {
            z[0] + z[1]
        }
        fn gradient(&self, _: &[f64], g: &mut [f64]) {
            g.fill(1.0);
        }
        fn constraints(&self, z: &[f64], eq: &mut [f64], _: &mut [f64]) {
            eq[0] = z[0] * z[0] + z[1] * z[1] - 1.0;
        }
        fn jacobian(&self, z: &[f64], eq: &mut Triplets, _: &mut Triplets) {
            eq.push((0, 0, 2.0 * z[0]));
            eq.push((0, 1, 2.0 * z[1]));
        }
        fn hessian(&self, _: &[f64], _: f64, le: &[f64], _: &[f64], out: &mut Triplets) -> bool {
            if !self.exact {
                return false;
            }
            out.push((0, 0, 2.0 * le[0]));
            out.push((1, 1, 2.0 * le[0]));
            true
        }
    }

    #[test]
    fn unconstrained_quadratic() {
        let opts = Options {
            tol: 1e-9,
            ..Options::default()
        };
        let r = minimize(&Shifted, &opts);
        assert!(r.converged());
        assert!((r.z[0] - 3.0).abs() < 1e-8);
        assert!(r.kkt_residual <= 1e-8);
    }

    #[test]
    fn circle_by_symmetry() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        for exact in [true, false] {
            let r = minimize(&Circle { exact }, &Options::default());
            assert!(r.converged(), "exact={exact} {:?}", r.status);
            assert!((r.z[0] + h).abs() < 1e-5 && (r.z[1] + h).abs() < 1e-5, "{:?}", r.z);
            assert!((r.lambda_eq[0] - h).abs() < 1e-4);
        }
    }

    #[test]
    fn equality_constrained_nonconvex_objective() {
        let r = minimize(&Quad { corrupt: false }, &Options::default());
        assert!(r.converged(), "{:?}", r.status);
        let z = &r.z;
        assert!((z[0] * z[0] + z[1] - 1.0).abs() < 1e-6);
    }
}
