//! Acceptance suite. Runs every criterion, prints one line each, and exits
//! non-zero if any of them fails.

use std::time::{Duration, Instant};

use num_rational::Rational64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use coiso_lab::catalog;
use coiso_lab::convergence::fit_order;
use coiso_lab::dual::{dual_pair_check, reduce};
use coiso_lab::harness::{build_tangent, characteristic_match, coisotropy_verdict, AmbientDiscretization, TangentModel};
use coiso_lab::lemmas::{annihilator_instance, coisotropic_chain, AnnihilatorInstance};
use coiso_lab::path::{momentum, p_drift, solve_cell_flow, solve_compatible, TimeDependentOneForm};
use coiso_lab::runner::{base_pair, gauge_growth, gauge_parameter, momentum_form, run, Command, RunOptions};
use coiso_lab::scenario::Scenario;
use coiso_lab::symplin::{annihilator_lemma_check, reduction_in_stages_check};
use coiso_lab::tensor::{jacobiator, BivectorField};

struct Outcome {
    ok: bool,
    detail: String,
}

fn outcome(ok: bool, detail: impl Into<String>) -> Outcome {
    Outcome { ok, detail: detail.into() }
}

fn model(s: &Scenario, n: usize) -> (AmbientDiscretization, TangentModel) {
    let pair = base_pair(s, n).expect("base pair");
    let amb = AmbientDiscretization::build(&s.pi, &s.conn, &pair, s.c0.as_ref(), s.c1.as_ref(), &s.tol).expect("model");
    let t = build_tangent(&amb).expect("tangent");
    (amb, t)
}

/// Jacobiator by central differences of the bivector, entry `[i][j][k]`.
fn fd_jacobiator(pi: &BivectorField, x: &[f64]) -> Vec<f64> {
    let m = x.len();
    let h = 1e-4;
    let p = pi.eval(x);
    let dp: Vec<_> = (0..m)
        .map(|l| {
            let mut a = x.to_vec();
            let mut b = x.to_vec();
            a[l] += h;
            b[l] -= h;
            (pi.eval(&a) - pi.eval(&b)) / (2.0 * h)
        })
        .collect();
    let mut out = vec![0.0; m * m * m];
    for i in 0..m {
        for j in 0..m {
            for k in 0..m {
                let mut v = 0.0;
                for l in 0..m {
                    v += p[(i, l)] * dp[l][(j, k)] + p[(j, l)] * dp[l][(k, i)] + p[(k, l)] * dp[l][(i, j)];
                }
                out[(i * m + j) * m + k] = v;
            }
        }
    }
    out
}

fn c1_poisson() -> Outcome {
    let so3 = catalog::builtin("so3-lie-poisson").unwrap();
    let np = catalog::builtin("nonpoisson-r4").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0_f64;
    let mut oracle_gap = 0.0_f64;
    for _ in 0..100 {
        let x: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
        let j = jacobiator(&so3.pi, &x).unwrap();
        worst = worst.max(j.max_abs());
        let fd = fd_jacobiator(&so3.pi, &x);
        for i in 0..3 {
            for a in 0..3 {
                for b in 0..3 {
                    oracle_gap = oracle_gap.max((j.get(i, a, b) - fd[(i * 3 + a) * 3 + b]).abs());
                }
            }
        }
    }
    let x = [1.0, 0.0, 0.0, 0.0];
    let j234 = jacobiator(&np.pi, &x).unwrap().get(1, 2, 3).abs();
    let fd234 = fd_jacobiator(&np.pi, &x)[(4 + 2) * 4 + 3].abs();
    let ok = worst <= 1e-12 && (0.9..=1.1).contains(&j234) && (j234 - fd234).abs() <= 1e-6 && oracle_gap <= 1e-6;
    outcome(ok, format!("so3 max |J| = {worst:.1e}, |J^234| = {j234:.6} (finite differences {fd234:.6})"))
}

fn c2_p_constancy() -> Outcome {
    let base = catalog::builtin("so3-lie-poisson").unwrap();
    let ns = [16, 32, 64];
    let mut worst_order = f64::INFINITY;
    let mut worst_drift = 0.0_f64;
    let mut ok = true;
    for seed in 0..20u64 {
        let mut s = base.clone();
        s.reseed(1000 + seed);
        let drifts: Vec<f64> = ns
            .iter()
            .map(|&n| p_drift(&base_pair(&s, n).unwrap(), &s.pi, &s.conn).unwrap())
            .collect();
        let fit = fit_order(&ns, &drifts, s.tol.order_floor);
        ok &= fit.meets(1.9) && drifts[2] <= 1e-3;
        worst_order = worst_order.min(fit.order().unwrap_or(f64::INFINITY));
        worst_drift = worst_drift.max(drifts[2]);
    }
    outcome(ok, format!("20 eta, lowest order {worst_order:.3}, largest drift at N=64 {worst_drift:.2e}"))
}

fn c3_drift_detector() -> Outcome {
    let s = catalog::builtin("nonpoisson-r4").unwrap();
    let d: Vec<f64> = [32, 64]
        .iter()
        .map(|&n| p_drift(&base_pair(&s, n).unwrap(), &s.pi, &s.conn).unwrap())
        .collect();
    outcome(d.iter().all(|v| *v >= 0.05), format!("p_drift {:.4} (N=32), {:.4} (N=64)", d[0], d[1]))
}

fn verdicts(names: &[&str], expect: bool, ns: &[usize]) -> (bool, Vec<String>) {
    let mut ok = true;
    let mut notes = Vec::new();
    for name in names {
        let s = catalog::builtin(name).unwrap();
        assert!(s.dim() <= 4);
        for &n in ns {
            let (amb, t) = model(&s, n);
            let v = coisotropy_verdict(&amb, &t, s.tol.inclusion).unwrap();
            let good = if expect {
                v.coisotropic && v.worst_residual <= 1e-8
            } else {
                !v.coisotropic && v.defect >= 1
            };
            ok &= good;
            if !good || n == *ns.last().unwrap() {
                notes.push(format!("{name} N={n} defect {} residual {:.1e}", v.defect, v.worst_residual));
            }
        }
    }
    (ok, notes)
}

fn c4_dichotomy() -> Outcome {
    let ns = [4, 8, 16];
    let (a, mut notes) = verdicts(&["zero-pi-r2", "symplectic-r2-free", "so3-lie-poisson"], true, &ns);
    let (b, more) = verdicts(&["nonpoisson-r4"], false, &ns);
    notes.extend(more);
    outcome(a && b, notes.join("; "))
}

fn c5_boundary() -> Outcome {
    let ns = [4, 8, 16];
    let (a, mut notes) = verdicts(&["zero-pi-intersecting-lines", "symplectic-r2"], true, &ns);
    let (b, more) = verdicts(&["symplectic-r4"], false, &ns);
    notes.extend(more);
    outcome(a && b, notes.join("; "))
}

fn c6_circle() -> Outcome {
    let ns = [4, 8, 16];
    let (a, mut notes) = verdicts(&["circle-so3"], true, &ns);
    let (b, more) = verdicts(&["nonpoisson-r4-circle"], false, &ns);
    notes.extend(more);
    outcome(a && b, notes.join("; "))
}

const COISOTROPIC: [&str; 6] = [
    "zero-pi-r2",
    "zero-pi-intersecting-lines",
    "symplectic-r2",
    "symplectic-r2-free",
    "so3-lie-poisson",
    "circle-so3",
];

fn c7_characteristic() -> Outcome {
    let mut ok = true;
    let mut worst = 0.0_f64;
    let mut notes = Vec::new();
    for name in COISOTROPIC {
        let s = catalog::builtin(name).unwrap();
        let ns = [16, 32, 64];
        let d: Vec<f64> = ns
            .iter()
            .map(|&n| {
                let (amb, t) = model(&s, n);
                characteristic_match(&amb, &t).unwrap().defect
            })
            .collect();
        let fit = fit_order(&ns, &d, s.tol.order_floor);
        ok &= d[1] <= 1e-7 && fit.meets(1.9);
        worst = worst.max(d[1]);
        if !fit.meets(1.9) {
            notes.push(format!("{name}: {fit:?}"));
        }
    }
    outcome(ok, format!("worst defect at N=32 {worst:.1e}{}", if notes.is_empty() { String::new() } else { format!("; {}", notes.join("; ")) }))
}

const POISSON: [&str; 7] = [
    "zero-pi-r2",
    "zero-pi-intersecting-lines",
    "symplectic-r2",
    "symplectic-r2-free",
    "symplectic-r4",
    "so3-lie-poisson",
    "circle-so3",
];

fn c8_gauge() -> Outcome {
    let mut ok = true;
    let mut ratios: Vec<f64> = Vec::new();
    let mut exact = 0;
    let mut mu_orders = Vec::new();
    for name in POISSON {
        let s = catalog::builtin(name).unwrap();
        for &n in s.grid() {
            let pair = solve_cell_flow(&s.pi, s.x0(), &s.eta_cells(n), s.periodic(), s.tol.closure).unwrap();
            let beta = gauge_parameter(&s, &pair, 77).unwrap();
            let (d1, d2) = gauge_growth(&s, &pair, &beta, 1e-3).unwrap();
            if d2 <= s.tol.order_floor {
                exact += 1;
            } else {
                let r = d2 / d1;
                ok &= (3.5..=4.5).contains(&r);
                ratios.push(r);
            }
        }
        let ns = [16, 32, 64];
        let b = |n| TimeDependentOneForm::constant(momentum_form(s.dim()), n);
        let mut flow_mu = Vec::new();
        for &n in &ns {
            let eta = s.eta_cells(n);
            let mid = solve_compatible(&s.pi, s.x0(), &eta, false, s.tol.solve, s.tol.closure).unwrap();
            let flow = solve_cell_flow(&s.pi, s.x0(), &eta, false, s.tol.closure).unwrap();
            ok &= momentum(&mid, &s.pi, &b(n)).unwrap().abs() <= s.tol.order_floor;
            flow_mu.push(momentum(&flow, &s.pi, &b(n)).unwrap().abs());
        }
        let fit = fit_order(&ns, &flow_mu, s.tol.order_floor);
        ok &= fit.meets(1.9);
        if let Some(o) = fit.order() {
            mu_orders.push(o);
        }
    }
    let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ratios.iter().copied().fold(0.0, f64::max);
    let mo = mu_orders.iter().copied().fold(f64::INFINITY, f64::min);
    outcome(
        ok,
        format!("ratios in [{lo:.3}, {hi:.3}], {exact} grids gauge-exact; lowest mu_B order {mo:.3}"),
    )
}

/// Rank over the rationals by Gaussian elimination.
fn exact_rank(rows: &[Vec<Rational64>]) -> usize {
    let mut a = rows.to_vec();
    let cols = a.first().map_or(0, Vec::len);
    let mut rank = 0;
    for c in 0..cols {
        let Some(p) = (rank..a.len()).find(|&r| a[r][c] != Rational64::from_integer(0)) else {
            continue;
        };
        a.swap(rank, p);
        for r in 0..a.len() {
            if r != rank && a[r][c] != Rational64::from_integer(0) {
                let f = a[r][c] / a[rank][c];
                for k in c..cols {
                    let sub = f * a[rank][k];
                    a[r][k] -= sub;
                }
            }
        }
        rank += 1;
    }
    rank
}

/// Basis of the vectors orthogonal to every vector of `t`, over the rationals.
fn exact_left_null(t: &[Vec<i64>], p: usize) -> Vec<Vec<Rational64>> {
    // the spanning vectors are the rows of t^T; free columns give the null vectors
    let mut a: Vec<Vec<Rational64>> = t.iter().map(|v| v.iter().map(|&x| Rational64::from_integer(x)).collect()).collect();
    let zero = Rational64::from_integer(0);
    let mut pivots = Vec::new();
    let mut row = 0;
    for c in 0..p {
        let Some(q) = (row..a.len()).find(|&r| a[r][c] != zero) else {
            continue;
        };
        a.swap(row, q);
        let inv = Rational64::from_integer(1) / a[row][c];
        for k in 0..p {
            a[row][k] *= inv;
        }
        for r in 0..a.len() {
            if r != row && a[r][c] != zero {
                let f = a[r][c];
                for k in 0..p {
                    let sub = f * a[row][k];
                    a[r][k] -= sub;
                }
            }
        }
        pivots.push(c);
        row += 1;
    }
    (0..p)
        .filter(|c| !pivots.contains(c))
        .map(|free| {
            let mut v = vec![zero; p];
            v[free] = Rational64::from_integer(1);
            for (r, &pc) in pivots.iter().enumerate() {
                v[pc] = -a[r][free];
            }
            v
        })
        .collect()
}

/// Exact dimension of both sides: `rank(A^T F)` with A spanning Ann(T).
fn annihilator_oracle(inst: &AnnihilatorInstance) -> usize {
    let ann = exact_left_null(&inst.t, inst.p());
    let rows: Vec<Vec<Rational64>> = ann
        .iter()
        .map(|y| {
            (0..inst.q())
                .map(|c| (0..inst.p()).fold(Rational64::from_integer(0), |acc, r| acc + y[r] * Rational64::from_integer(inst.f[r][c])))
                .collect()
        })
        .collect();
    exact_rank(&rows)
}

fn c9_annihilator() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let instances: Vec<AnnihilatorInstance> = (0..500).map(|_| annihilator_instance(&mut rng)).collect();
    let start = Instant::now();
    let reports: Vec<_> = instances
        .iter()
        .map(|i| annihilator_lemma_check(&i.f_matrix(), &i.t_subspace(1e-10), 1e-10).unwrap())
        .collect();
    let elapsed = start.elapsed();
    let mut failures = 0;
    let mut worst = 0.0_f64;
    for (inst, r) in instances.iter().zip(&reports) {
        assert!(inst.p() <= 6 && inst.q() <= 6);
        let exact = annihilator_oracle(inst);
        if !r.holds || r.lhs_dim != exact || r.rhs_dim != exact {
            failures += 1;
        }
        worst = worst.max(r.distance);
    }
    outcome(
        failures == 0 && elapsed < Duration::from_secs(1),
        format!("{failures} of 500 failed, worst distance {worst:.1e}, check time {:.3}s", elapsed.as_secs_f64()),
    )
}

fn c10_stages() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let chains: Vec<_> = (0..100).map(|_| coisotropic_chain(4, &mut rng)).collect();
    let start = Instant::now();
    let reports: Vec<_> = chains
        .iter()
        .map(|c| reduction_in_stages_check(&c.space, &c.v, &c.w, 1e-9).unwrap())
        .collect();
    let elapsed = start.elapsed();
    let mut failures = 0;
    for (c, r) in chains.iter().zip(&reports) {
        assert_eq!(c.space.dim(), 8);
        if !r.all_pass() || r.direct_dim != 2 * c.kept_w || r.staged_dim != r.direct_dim {
            failures += 1;
        }
    }
    outcome(
        failures == 0 && elapsed < Duration::from_secs(2),
        format!("{failures} of 100 failed, check time {:.3}s", elapsed.as_secs_f64()),
    )
}

fn c11_dual_pair() -> Outcome {
    let mut ok = true;
    let mut worst = 0.0_f64;
    for name in ["symplectic-r2", "zero-pi-r2", "zero-pi-intersecting-lines"] {
        let s = catalog::builtin(name).unwrap();
        for &n in s.grid() {
            let (amb, t) = model(&s, n);
            let r = dual_pair_check(&amb, &t, &s.tol).unwrap();
            ok &= r.orthogonality_residual <= 1e-8 && r.two_sided_defect == 0;
            worst = worst.max(r.orthogonality_residual);
        }
    }
    // pi = 0 reduces to the cotangent bundle of C0 cap C1; the symplectic case
    // to the product of the reduced boundary manifolds
    let closed_forms = [
        ("zero-pi-intersecting-lines", 0),
        ("zero-pi-r2", 2 * 2),
        ("symplectic-r2-free", 2 + 2),
    ];
    let mut dims = Vec::new();
    for (name, expected) in closed_forms {
        let s = catalog::builtin(name).unwrap();
        for &n in s.grid() {
            let (amb, t) = model(&s, n);
            let d = reduce(&amb, &t, s.tol.inclusion).unwrap().dim();
            ok &= d == expected;
            if n == *s.grid().last().unwrap() {
                dims.push(d);
            }
        }
    }
    outcome(ok, format!("worst orthogonality residual {worst:.1e}, reduced dimensions {dims:?}"))
}

fn c12_determinism() -> Outcome {
    let opts = RunOptions {
        seed: 12,
        ..RunOptions::default()
    };
    let scenarios = catalog::all();
    let mut a = run(Command::All, &scenarios, &opts).unwrap();
    let mut b = run(Command::All, &scenarios, &opts).unwrap();
    a.generated_at = 0;
    b.generated_at = 0;
    let same = a.to_json() == b.to_json();
    outcome(same, format!("{} records, identical: {same}", a.records.len()))
}

/// Name, runtime budget in seconds, check.
type Criterion = (&'static str, Option<f64>, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 12] = [
        ("poisson detection", Some(1.0), c1_poisson),
        ("p-constancy", Some(10.0), c2_p_constancy),
        ("p-drift detector", Some(5.0), c3_drift_detector),
        ("free-free dichotomy", Some(60.0), c4_dichotomy),
        ("boundary conditions", Some(60.0), c5_boundary),
        ("circle", Some(60.0), c6_circle),
        ("characteristic distribution", None, c7_characteristic),
        ("gauge symmetry and momentum", None, c8_gauge),
        ("annihilator identity", None, c9_annihilator),
        ("reduction in stages", None, c10_stages),
        ("dual pair", None, c11_dual_pair),
        ("determinism", None, c12_determinism),
    ];
    let mut failed = 0;
    for (k, (name, budget, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let mut o = f();
        let secs = start.elapsed().as_secs_f64();
        if let Some(b) = budget {
            if secs >= *b {
                o.ok = false;
                o.detail.push_str(&format!("; over the {b}s budget"));
            }
        }
        if !o.ok {
            failed += 1;
        }
        println!(
            "{} {:>2} {:<28} {:>7.3}s  {}",
            if o.ok { "PASS" } else { "FAIL" },
            k + 1,
            name,
            secs,
            o.detail
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
