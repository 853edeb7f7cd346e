//! Property tests over randomized conductors, weather, cases and programs.

use std::f64::consts::FRAC_PI_2;

use proptest::prelude::*;

use dlr_core::fixtures::{self, WeatherRegime};
use dlr_core::network::{parse_case_file, NetworkCase};
use dlr_core::nlp::qp::Qp;
use dlr_core::nlp::{minimize, Dims, Options, Problem, Triplets, INFINITE_BOUND};
use dlr_core::ratings::{effective_weather, RatingScheme, Season, SUMMER_AMBIENT};
use dlr_core::thermal::{exact_convection, quartic_roots, ConductorParams, ThermalPeriod, WeatherSample};

fn conductor() -> impl Strategy<Value = ConductorParams> {
    (4e-5..2.5e-4f64, 0.5..2.0f64, 750.0..950.0f64, 0.01..0.04f64, 0.3..0.95f64, 0.3..0.95f64, 343.15..393.15f64).prop_map(
        |(r, m, c, d, e, a, tmax)| ConductorParams {
            resistance_per_length: r,
            mass_per_length: m,
            specific_heat: c,
            diameter: d,
            emissivity: e,
            absorptivity: a,
            max_temperature: tmax,
        },
    )
}

fn weather() -> impl Strategy<Value = WeatherSample> {
    (0.0..10.0f64, 0.0..FRAC_PI_2, 260.0..320.0f64, 0.0..30.0f64).prop_map(|(w, a, t, s)| WeatherSample {
        wind_speed: w,
        wind_angle: a,
        ambient_temp: t,
        solar_gain: s,
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn trajectories_move_monotonically_toward_equilibrium(
        c in conductor(), w in weather(), start in 270.0..380.0f64, frac in 0.0..1.2f64,
    ) {
        let p = ThermalPeriod::fit(c, w).unwrap();
        let i2 = frac * p.ampacity(c.max_temperature).current_sq;
        let s1 = p.steady_state(i2).unwrap();
        let sign = (s1 - start).signum();
        let mut prev = start;
        for k in 1..=12 {
            let t = p.step(start, i2, 100.0 * k as f64).unwrap();
            // Never crosses the equilibrium and never moves backwards.
            prop_assert!(sign * (s1 - t) >= -1e-9);
            prop_assert!(sign * (t - prev) >= -1e-9);
            prev = t;
        }
        prop_assert!((s1 - prev).abs() <= (s1 - start).abs() + 1e-9);
    }

    #[test]
    fn quartic_factorization_identities(c in conductor(), w in weather(), frac in 0.0..1.2f64) {
        let p = ThermalPeriod::fit(c, w).unwrap();
        let i2 = frac * p.ampacity(c.max_temperature).current_sq;
        let k = p.coefficients(i2).unwrap();
        let r = quartic_roots(&k).unwrap();
        let (s1, s2) = (r.s1, r.s2);
        prop_assert!(s2 > s1);
        let lin = (s2 - s1) * (s1 * s1 + s2 * s2);
        let cst = s1 * s2 * (s1 * s1 - s1 * s2 + s2 * s2);
        prop_assert!((lin - k.k1 / k.k4).abs() <= 1e-8 * (k.k1 / k.k4), "{} vs {}", lin, k.k1 / k.k4);
        prop_assert!((cst - k.k0 / k.k4).abs() <= 1e-8 * (k.k0 / k.k4), "{} vs {}", cst, k.k0 / k.k4);
    }

    #[test]
    fn ampacity_round_trip(c in conductor(), w in weather()) {
        let p = ThermalPeriod::fit(c, w).unwrap();
        let amp = p.ampacity(c.max_temperature);
        prop_assume!(!amp.clamped);
        let back = p.steady_state(amp.current_sq).unwrap();
        prop_assert!((back - c.max_temperature).abs() <= 1e-6);
    }

    #[test]
    fn capacity_ordering_under_its_weather_precondition(c in conductor(), w in weather()) {
        let slr = RatingScheme::slr(Season::Summer);
        let aar = RatingScheme::aar();
        let ss = RatingScheme::dlr_ss();
        // Precondition: the actual weather cools at least as well as the
        // conservative assumption, and it is no hotter than the seasonal ambient.
        let conservative = effective_weather(&aar, &w);
        let cooling = |x: &WeatherSample| exact_convection(&c, x, c.max_temperature) / (c.max_temperature - x.ambient_temp);
        prop_assume!(w.ambient_temp <= SUMMER_AMBIENT);
        prop_assume!(w.wind_speed >= conservative.wind_speed && cooling(&w) >= cooling(&conservative));
        let cap = |s: &RatingScheme| {
            let e = effective_weather(s, &w);
            ThermalPeriod::fit(c, e).unwrap().ampacity(c.max_temperature).current_sq
        };
        let (a, m, d) = (cap(&slr), cap(&aar), cap(&ss));
        prop_assert!(a <= m && m <= d * (1.0 + 1e-9), "{} {} {}", a, m, d);
    }

    #[test]
    fn fixture_cases_reserialize_canonically(family in 0usize..3, regime in 0usize..3, horizon in 1usize..6) {
        let regime = WeatherRegime::ALL[regime];
        let file = match family {
            0 => fixtures::two_bus(regime, horizon),
            1 => fixtures::wscc9(regime, horizon),
            _ => fixtures::synthetic30(regime, horizon),
        };
        let text = file.to_canonical_json();
        let case = NetworkCase::from_file(&parse_case_file(&text).unwrap()).unwrap();
        prop_assert_eq!(case.to_case_file().to_canonical_json(), text);
    }

    #[test]
    fn branch_admittance_inverts_impedance(r in 0.0..0.1f64, x in 0.001..0.5f64) {
        let mut file = fixtures::two_bus(WeatherRegime::WindyCool, 1);
        file.branches[0].r = r;
        file.branches[0].x = x;
        let case = NetworkCase::from_file(&file).unwrap();
        let b = &case.branches[0];
        let (g, s) = (b.conductance, b.susceptance);
        // (g + j s)(r + j x) = 1
        prop_assert!((g * r - s * x - 1.0).abs() <= 1e-12);
        prop_assert!((g * x + s * r).abs() <= 1e-12);
    }
}

/// Dense solve of a small linear system by Gaussian elimination with partial pivoting.
fn gauss(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| a[i][k] * x[k]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    Some(x)
}

#[derive(Debug)]
struct DenseQp {
    n: usize,
    h: Vec<f64>,
    g: Vec<f64>,
    rows: Vec<f64>,
    rhs: Vec<f64>,
    start: Vec<f64>,
}

impl DenseQp {
    fn objective(&self, y: &[f64]) -> f64 {
        let n = self.n;
        (0..n)
            .map(|i| y[i] * (0.5 * (0..n).map(|j| self.h[i * n + j] * y[j]).sum::<f64>() + self.g[i]))
            .sum()
    }

    /// Optimum by enumerating active sets and keeping the KKT point.
    fn enumerate(&self) -> Vec<f64> {
        let (n, m) = (self.n, self.rhs.len());
        let mut best: Option<(f64, Vec<f64>)> = None;
        for mask in 0u32..(1 << m) {
            let act: Vec<usize> = (0..m).filter(|i| mask & (1 << i) != 0).collect();
            let k = act.len();
            let mut a = vec![vec![0.0; n + k]; n + k];
            let mut b = vec![0.0; n + k];
            for i in 0..n {
                for j in 0..n {
                    a[i][j] = self.h[i * n + j];
                }
                b[i] = -self.g[i];
            }
            for (r, &c) in act.iter().enumerate() {
                for j in 0..n {
                    a[n + r][j] = self.rows[c * n + j];
                    a[j][n + r] = self.rows[c * n + j];
                }
                b[n + r] = self.rhs[c];
            }
            let Some(sol) = gauss(a, b) else { continue };
            let (y, mult) = sol.split_at(n);
            let feasible = (0..m).all(|i| (0..n).map(|j| self.rows[i * n + j] * y[j]).sum::<f64>() <= self.rhs[i] + 1e-9);
            if feasible && mult.iter().all(|&l| l >= -1e-9) {
                let f = self.objective(y);
                if best.as_ref().is_none_or(|(bf, _)| f < *bf) {
                    best = Some((f, y.to_vec()));
                }
            }
        }
        best.expect("a strictly convex feasible QP has a KKT point").1
    }
}

impl Problem for DenseQp {
    fn dims(&self) -> Dims {
        Dims {
            n: self.n,
            n_eq: 0,
            n_ineq: self.rhs.len(),
        }
    }
    fn bounds(&self, lower: &mut [f64], upper: &mut [f64]) {
        lower.fill(-INFINITE_BOUND);
        upper.fill(INFINITE_BOUND);
    }
    fn initial_point(&self, z: &mut [f64]) {
        z.copy_from_slice(&self.start);
    }
    fn objective(&self, z: &[f64]) -> f64 {
        DenseQp::objective(self, z)
    }
    fn gradient(&self, z: &[f64], grad: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            grad[i] = self.g[i] + (0..n).map(|j| self.h[i * n + j] * z[j]).sum::<f64>();
        }
    }
    fn constraints(&self, z: &[f64], _: &mut [f64], ineq: &mut [f64]) {
        let n = self.n;
        for (i, c) in ineq.iter_mut().enumerate() {
            *c = (0..n).map(|j| self.rows[i * n + j] * z[j]).sum::<f64>() - self.rhs[i];
        }
    }
    fn jacobian(&self, _: &[f64], _: &mut Triplets, ineq: &mut Triplets) {
        let n = self.n;
        for i in 0..self.rhs.len() {
            for j in 0..n {
                ineq.push((i, j, self.rows[i * n + j]));
            }
        }
    }
    fn hessian(&self, _: &[f64], obj_factor: f64, _: &[f64], _: &[f64], out: &mut Triplets) -> bool {
        let n = self.n;
        for i in 0..n {
            for j in 0..=i {
                out.push((i, j, obj_factor * self.h[i * n + j]));
            }
        }
        true
    }
}

fn dense_qp() -> impl Strategy<Value = DenseQp> {
    let n = 3;
    let m = 4;
    (
        prop::collection::vec(-1.0..1.0f64, n * n),
        prop::collection::vec(-3.0..3.0f64, n),
        prop::collection::vec(-1.0..1.0f64, m * n),
        prop::collection::vec(0.05..1.0f64, m),
        prop::collection::vec(-1.0..1.0f64, n),
    )
        .prop_map(move |(l, g, rows, slack, start)| {
            // H = L L^T + I is strictly convex; the start is strictly feasible.
            let mut h = vec![0.0; n * n];
            for i in 0..n {
                for j in 0..n {
                    h[i * n + j] = (0..n).map(|k| l[i * n + k] * l[j * n + k]).sum::<f64>() + if i == j { 1.0 } else { 0.0 };
                }
            }
            let rhs = (0..m)
                .map(|i| (0..n).map(|j| rows[i * n + j] * start[j]).sum::<f64>() + slack[i])
                .collect();
            DenseQp { n, h, g, rows, rhs, start }
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn convex_qp_solvers_match_active_set_enumeration(qp in dense_qp()) {
        let oracle = qp.enumerate();
        let f_star = qp.objective(&oracle);

        let active_set = Qp { n: qp.n, h_mat: &qp.h, g: &qp.g, g_rows: &qp.rows, h: &qp.rhs }
            .solve(&qp.start);
        prop_assert!(active_set.is_some(), "active set failed");
        let active_set = active_set.unwrap();
        let dist = active_set.y.iter().zip(&oracle).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        prop_assert!(dist <= 1e-8, "active set off by {}", dist);

        let r = minimize(&qp, &Options { tol: 1e-8, ..Options::default() });
        prop_assert!(r.converged(), "{:?} kkt {:e} iters {}", r.status, r.kkt_residual, r.iterations);
        let f = qp.objective(&r.z);
        prop_assert!((f - f_star).abs() <= 1e-6 * f_star.abs().max(1.0), "{} vs {}", f, f_star);
    }
}
