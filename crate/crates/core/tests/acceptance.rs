//! Acceptance gate. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any criterion fails.

use std::time::{Duration, Instant};

use fbl_ec::channel::{avg_received_snr, db_to_linear, Link, SystemParams};
use fbl_ec::effcap::{
    ec_cap, ec_expint, ec_lower_bound, ec_quadrature, gamma_surrogate, inner_t, SurrogateParams,
};
use fbl_ec::mcsim::{ec_monte_carlo, McConfig};
use fbl_ec::optim::{alternate_optimize, optimize_grid, OptimOptions};
use fbl_ec::specfun::{expint_v, q_func, q_inv, quad_oracle, Tolerance};
use fbl_ec::sweep::{cmd_sweep, metadata_path, SweepSpec, SweptField, Units};
use fbl_ec::Method;

type Check = Result<String, String>;
type Criterion = fn() -> Check;

const THETA: f64 = 0.01;
const N: u32 = 300;
/// Error probability used on the 3×3×3 validation grid.
const GRID_EPS: f64 = 1e-4;

fn grid_points() -> Vec<SystemParams> {
    let mut out = Vec::new();
    for db in [3.0, 6.0, 9.0] {
        for m in [1, 5, 7] {
            for n_t in [10, 20, 40] {
                out.push(Link::new(THETA, N, m, db_to_linear(db)).with(n_t, GRID_EPS));
            }
        }
    }
    out
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn e<E: std::fmt::Display>(err: E) -> String {
    err.to_string()
}

fn within_time(start: Instant, budget: Duration, what: &str) -> Result<(), String> {
    let took = start.elapsed();
    ensure(took < budget, || {
        format!("{what} took {took:?}, budget {budget:?}")
    })
}

fn oracle_equivalence() -> Check {
    let start = Instant::now();
    let tol = Tolerance::new(1e-13, 0.0, 10_000).map_err(e)?;
    let mut worst: f64 = 0.0;
    for p in grid_points() {
        let a = ec_expint(&p).map_err(e)?.value;
        let b = ec_quadrature(&p, tol).map_err(e)?.value;
        let rel = ((a - b) / b).abs();
        worst = worst.max(rel);
        ensure(rel <= 1e-8, || format!("rel err {rel:e} at {p:?}"))?;
    }
    within_time(start, Duration::from_secs(10), "oracle grid")?;
    Ok(format!(
        "max rel err {worst:.2e} over 27 points in {:?}",
        start.elapsed()
    ))
}

fn monte_carlo_agreement() -> Check {
    let start = Instant::now();
    let mut worst_z: f64 = 0.0;
    for (i, p) in grid_points().iter().enumerate() {
        let cfg = McConfig::new(1_000_000, 0x5eed_0000 + i as u64);
        let mc = ec_monte_carlo(p, &cfg).map_err(e)?;
        let exact = ec_expint(p).map_err(e)?.value;
        let z = (mc.value - exact).abs() / mc.stderr;
        worst_z = worst_z.max(z);
        ensure(z <= 3.0, || {
            format!(
                "|mc - expint| = {:.3e} exceeds 3 stderr ({:.3e}) at {p:?}",
                (mc.value - exact).abs(),
                mc.stderr
            )
        })?;
    }
    within_time(start, Duration::from_secs(60), "Monte-Carlo grid")?;
    Ok(format!(
        "max |z| {worst_z:.2} over 27 points in {:?}",
        start.elapsed()
    ))
}

fn bound_ordering() -> Check {
    let mut count = 0;
    for p in grid_points() {
        let lb = ec_lower_bound(&p).map_err(e)?.value;
        let ex = ec_expint(&p).map_err(e)?.value;
        ensure(lb <= ex, || {
            format!("lower bound {lb} > expint {ex} at {p:?}")
        })?;
        count += 1;
    }
    for db in [3.0, 6.0, 9.0] {
        for m in 1..=10 {
            for n_t in 5..=40 {
                for eps in [4.33e-6, 7.92e-5, 2.02e-7, 1e-10] {
                    let p = Link::new(THETA, N, m, db_to_linear(db)).with(n_t, eps);
                    let lb = ec_lower_bound(&p).map_err(e)?.value;
                    let ex = ec_expint(&p).map_err(e)?.value;
                    ensure(lb <= ex, || {
                        format!("lower bound {lb} > expint {ex} at {p:?}")
                    })?;
                    count += 1;
                }
            }
        }
    }
    let gaps: Vec<f64> = [3.0, 6.0, 9.0]
        .iter()
        .map(|&db| {
            let p = Link::new(THETA, N, 5, db_to_linear(db)).with(19, 4.33e-6);
            Ok(ec_expint(&p).map_err(e)?.value - ec_lower_bound(&p).map_err(e)?.value)
        })
        .collect::<Result<_, String>>()?;
    ensure(gaps[0] > gaps[1] && gaps[1] > gaps[2], || {
        format!("gaps not decreasing: {gaps:?}")
    })?;
    Ok(format!(
        "{count} points ordered; gap 3/6/9 dB = {:.3}/{:.3}/{:.3}",
        gaps[0], gaps[1], gaps[2]
    ))
}

fn second_diffs(v: &[f64]) -> impl Iterator<Item = f64> + '_ {
    v.windows(3).map(|w| w[2] - 2.0 * w[1] + w[0])
}

fn theorem_suite() -> Check {
    let mut checks = 0;

    // T(ε) convex: second divided differences on a log-spaced grid
    for (db, m, n_t) in [(3.0, 5, 19), (6.0, 5, 18), (9.0, 3, 17), (6.0, 1, 20)] {
        let link = Link::new(THETA, N, m, db_to_linear(db));
        let eps: Vec<f64> = (0..=80)
            .map(|i| 10f64.powf(-9.0 + i as f64 * 0.1))
            .collect();
        let t: Vec<f64> = eps
            .iter()
            .map(|&x| inner_t(&link.with(n_t, x)).map_err(e))
            .collect::<Result<_, _>>()?;
        for i in 1..eps.len() - 1 {
            let d = 2.0
                * ((t[i + 1] - t[i]) / (eps[i + 1] - eps[i])
                    - (t[i] - t[i - 1]) / (eps[i] - eps[i - 1]))
                / (eps[i + 1] - eps[i - 1]);
            ensure(d >= -1e-9, || {
                format!("T not convex at eps={:e}: {d:e}", eps[i])
            })?;
            checks += 1;
        }
    }

    // concave in integer n_t while n_t/n < 0.2
    for db in [3.0, 6.0, 9.0] {
        for m in [1, 5, 7] {
            for eps in [1e-10, 4.33e-6, 1e-3] {
                let link = Link::new(THETA, N, m, db_to_linear(db));
                let v: Vec<f64> = (1..60)
                    .map(|n_t| ec_expint(&link.with(n_t, eps)).map(|x| x.value).map_err(e))
                    .collect::<Result<_, _>>()?;
                for (i, d) in second_diffs(&v).enumerate() {
                    ensure(d <= 1e-9, || {
                        format!(
                            "not concave in n_t at n_t={} ({db} dB, m={m}, eps={eps:e}): {d:e}",
                            i + 2
                        )
                    })?;
                    checks += 1;
                }
            }
        }
    }

    // increasing and concave in γ0 (linear) where G >= 0.5, for both forms
    for m in [1, 3, 5, 7] {
        for n_t in [10, 20, 40] {
            for eps in [1e-10, 1e-5] {
                let gammas: Vec<f64> = (0..=40).map(|i| 1.0 + 0.5 * i as f64).collect();
                ensure(avg_received_snr(n_t as f64, gammas[0]) >= 0.5, || {
                    "grid start below G = 0.5".into()
                })?;
                for f in [ec_expint as fn(&SystemParams) -> _, ec_lower_bound] {
                    let v: Vec<f64> = gammas
                        .iter()
                        .map(|&g| {
                            f(&Link::new(THETA, N, m, g).with(n_t, eps))
                                .map(|x| x.value)
                                .map_err(e)
                        })
                        .collect::<Result<_, _>>()?;
                    for w in v.windows(2) {
                        ensure(w[1] > w[0], || {
                            format!("not increasing in gamma0 (m={m}, n_t={n_t}, eps={eps:e})")
                        })?;
                    }
                    for d in second_diffs(&v) {
                        ensure(d <= 1e-9, || {
                            format!("not concave in gamma0 (m={m}, n_t={n_t}, eps={eps:e}): {d:e}")
                        })?;
                        checks += 1;
                    }
                }
            }
        }
    }

    // increasing in m, never above the cap
    for db in [3.0, 6.0, 9.0] {
        for eps in [1e-10, 1e-5, 1e-3] {
            let cap = ec_cap(THETA, eps);
            let v: Vec<f64> = (1..=20)
                .map(|m| {
                    ec_expint(&Link::new(THETA, N, m, db_to_linear(db)).with(20, eps))
                        .map(|x| x.value)
                        .map_err(e)
                })
                .collect::<Result<_, _>>()?;
            // strictly increasing until the value meets the cap in floating point
            for w in v.windows(2) {
                let saturated = cap - w[0] <= 1e-12 * cap && w[1] >= w[0];
                ensure(w[1] > w[0] || saturated, || {
                    format!("not increasing in m ({db} dB, eps={eps:e})")
                })?;
            }
            ensure(v.iter().all(|&x| x <= cap + 1e-9), || {
                format!("cap {cap} exceeded")
            })?;
            checks += v.len();
        }
    }

    // Γ concave in α
    for db in [3.0, 6.0, 9.0] {
        for m in [1, 5, 10] {
            for eps in [1e-9, 7.92e-5, 1e-2] {
                let sp = SurrogateParams {
                    m,
                    gamma0: db_to_linear(db),
                    eps,
                    theta: THETA,
                    n: N,
                };
                let v: Vec<f64> = (1..=19)
                    .map(|i| gamma_surrogate(&sp, i as f64 * 0.01).map_err(e))
                    .collect::<Result<_, _>>()?;
                for d in second_diffs(&v) {
                    ensure(d <= 1e-9, || {
                        format!("Gamma not concave ({db} dB, m={m}, eps={eps:e}): {d:e}")
                    })?;
                    checks += 1;
                }
            }
        }
    }
    Ok(format!("{checks} finite-difference checks"))
}

fn optimizer_reproduction() -> Check {
    let start = Instant::now();
    let opts = OptimOptions::default();
    let mut n_ts = Vec::new();
    for (db, allowed) in [(3.0, 18..=20), (6.0, 17..=19), (9.0, 16..=18)] {
        let r = alternate_optimize(&Link::new(THETA, N, 5, db_to_linear(db)), &opts).map_err(e)?;
        ensure(allowed.contains(&r.n_t_star), || {
            format!("n_t* = {} at {db} dB, want {allowed:?}", r.n_t_star)
        })?;
        n_ts.push(r.n_t_star);
    }
    ensure(n_ts[0] >= n_ts[1] && n_ts[1] >= n_ts[2], || {
        format!("n_t* not non-increasing in SNR: {n_ts:?}")
    })?;

    // full grid: m 1..10, SNR 3..12 dB
    let ms: Vec<u32> = (1..=10).collect();
    let dbs: Vec<f64> = (3..=12).map(|d| d as f64).collect();
    let base = Link::new(THETA, N, 1, 1.0);
    let grid = optimize_grid(&base, &ms, &dbs, &opts);
    let mut max_iter = 0;
    for p in &grid {
        let r = p
            .result
            .as_ref()
            .map_err(|err| format!("m={} {} dB: {err}", p.m, p.snr_db))?;
        max_iter = max_iter.max(r.iterations);
        ensure(r.iterations <= 10, || {
            format!("{} iterations at m={} {} dB", r.iterations, p.m, p.snr_db)
        })?;
        let mut prev = f64::NEG_INFINITY;
        for s in &r.trace {
            ensure(
                s.ec_after_pilot >= prev - 1e-9 && s.ec_after_eps >= s.ec_after_pilot - 1e-9,
                || format!("trace not monotone at m={} {} dB", p.m, p.snr_db),
            )?;
            prev = s.ec_after_eps;
        }
    }
    let eps_at = |m: u32, db: f64| -> f64 {
        grid.iter()
            .find(|p| p.m == m && p.snr_db == db)
            .and_then(|p| p.result.as_ref().ok())
            .map(|r| r.eps_star)
            .unwrap_or(f64::NAN)
    };
    // ε* vs m (m = 1..8) at 3, 6, 9 dB
    for db in [3.0, 6.0, 9.0] {
        for m in 1..8 {
            let (a, b) = (eps_at(m, db), eps_at(m + 1, db));
            ensure(b < a, || {
                format!(
                    "eps* not decreasing in m at {db} dB: m={m} {a:e}, m={} {b:e}",
                    m + 1
                )
            })?;
        }
    }
    // ε* vs SNR (3..9 dB) at m = 1, 3, 5, 7
    for m in [1, 3, 5, 7] {
        for d in 3..9 {
            let (a, b) = (eps_at(m, d as f64), eps_at(m, d as f64 + 1.0));
            ensure(b < a, || {
                format!(
                    "eps* not decreasing in SNR at m={m}: {d} dB {a:e}, {} dB {b:e}",
                    d + 1
                )
            })?;
        }
    }
    within_time(start, Duration::from_secs(30), "optimizer grid")?;
    Ok(format!(
        "n_t* 3/6/9 dB = {:?}; max {max_iter} iterations over 100 grid points in {:?}",
        n_ts,
        start.elapsed()
    ))
}

fn special_functions() -> Check {
    let tol = Tolerance::default();
    let mut worst: f64 = 0.0;
    for v in [1.5, 2.0, 4.04, 10.0] {
        for x in [0.05, 0.3, 1.0, 5.0] {
            let got = expint_v(v, x).map_err(e)?;
            let oracle =
                quad_oracle(|u| (-x * (1.0 + u)).exp() * (1.0 + u).powf(-v), tol).map_err(e)?;
            let rel = ((got - oracle) / oracle).abs();
            worst = worst.max(rel);
            ensure(rel <= 1e-10, || {
                format!("E_{v}({x}) = {got}, oracle {oracle}")
            })?;
            let bound = (-x).exp() / (v + x - 1.0);
            ensure(got <= bound, || {
                format!("E_{v}({x}) = {got} above bound {bound}")
            })?;
        }
    }
    let mut worst_rt: f64 = 0.0;
    for i in 0..=200 {
        let p = 10f64.powf(-12.0 + i as f64 * (12.0 + 0.5f64.log10()) / 200.0);
        let rt = (q_func(q_inv(p).map_err(e)?) / p - 1.0).abs();
        worst_rt = worst_rt.max(rt);
        ensure(rt <= 1e-9, || format!("Q(Q^-1({p:e})) rel err {rt:e}"))?;
    }
    Ok(format!(
        "E_v max rel err {worst:.1e}; Q round trip max {worst_rt:.1e}"
    ))
}

fn determinism() -> Check {
    let p = Link::new(THETA, N, 5, db_to_linear(6.0)).with(20, 1e-4);
    let cfg = McConfig {
        batch: 10_000,
        ..McConfig::new(200_000, 77)
    };
    let pool = |n| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(e)
    };
    let one = pool(1)?;
    let many = pool(4)?;
    let a = one.install(|| ec_monte_carlo(&p, &cfg)).map_err(e)?;
    let b = many.install(|| ec_monte_carlo(&p, &cfg)).map_err(e)?;
    ensure(
        a.value.to_bits() == b.value.to_bits() && a.stderr.to_bits() == b.stderr.to_bits(),
        || format!("MC differs across worker counts: {a:?} vs {b:?}"),
    )?;

    let dir = tempfile::tempdir().map_err(e)?;
    let spec = SweepSpec {
        swept: SweptField::NT,
        grid: (5..=40).step_by(5).map(f64::from).collect(),
        fixed: p,
        methods: vec![Method::Expint, Method::LowerBound, Method::MonteCarlo],
        mc: Some(McConfig::new(20_000, 5)),
        units: Units::BitsPerBlock,
    };
    let (pa, pb) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    one.install(|| cmd_sweep(&spec, &pa)).map_err(e)?;
    many.install(|| cmd_sweep(&spec, &pb)).map_err(e)?;
    let read = |path: &std::path::Path| std::fs::read(path).map_err(e);
    ensure(read(&pa)? == read(&pb)?, || "sweep CSVs differ".into())?;
    let (ma, mb) = (read(&metadata_path(&pa))?, read(&metadata_path(&pb))?);
    ensure(ma == mb, || "sweep metadata differs".into())?;
    Ok("MC bits and sweep CSV/metadata bytes identical for 1 and 4 workers".into())
}

fn main() {
    let criteria: [(&str, Criterion); 7] = [
        (
            "oracle equivalence (expint vs quadrature, rel <= 1e-8, < 10 s)",
            oracle_equivalence,
        ),
        (
            "Monte-Carlo agreement (1e6 samples, within 3 stderr, < 60 s)",
            monte_carlo_agreement,
        ),
        ("bound ordering and gap tightening with SNR", bound_ordering),
        (
            "theorem suite (finite differences, tol 1e-9)",
            theorem_suite,
        ),
        (
            "optimizer reproduction (n_t*, eps* trends, <= 10 iterations, < 30 s)",
            optimizer_reproduction,
        ),
        (
            "special functions (E_v <= 1e-10, bound, Q round trip <= 1e-9)",
            special_functions,
        ),
        ("determinism (seeds, worker count, CSV bytes)", determinism),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        match run() {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why}");
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
