//! End-to-end property suite with independently derived oracles.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use log::{debug, info};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::basis::{BasisSpec, FunctionRep};
use crate::error::Result;
use crate::livsic::{
    cell_averaged_residual, coboundary, detect_scanned, normalize_transfer_function, periodic_obstructions,
    recover_with, sample_grid, symmetric_grid, RecoveryMethod, Tolerances, Verdict,
};
use crate::maps::{AnalyticCircleMap, BetaTransformation, IntervalMap, MapModel, TsujiiSkewProduct};
use crate::spectral::{leading_eigen, PerturbedEigenData, TwistedFamily};
use crate::transfer::{assemble, duality_residual, DualityProbe, TestFamily};
use crate::vexp::{certify, criterion_value, min_expanding_m, CriterionMap, CriterionQuery, WeightVariant};

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
}

impl CheckResult {
    pub fn line(&self) -> String {
        format!(
            "{} criterion {:>2} {}: {} ({:.1}s)",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.detail,
            self.elapsed.as_secs_f64()
        )
    }
}

pub const CRITERIA: [(u8, &str); 11] = [
    (1, "doubling invariant density"),
    (2, "golden beta invariant density"),
    (3, "coboundary lambda curve"),
    (4, "variance oracle"),
    (5, "analytic recovery round trip"),
    (6, "BV recovery round trip"),
    (7, "periodic obstructions"),
    (8, "duality residuals"),
    (9, "Riesz projection health"),
    (10, "virtual expansion"),
    (11, "gauge invariance"),
];

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(checks: &[(bool, String)]) -> Outcome {
    Outcome {
        passed: checks.iter().all(|(ok, _)| *ok),
        detail: checks.iter().map(|(_, d)| d.as_str()).collect::<Vec<_>>().join("; "),
    }
}

fn check(ok: bool, detail: String) -> (bool, String) {
    (ok, detail)
}

pub fn run_criterion(id: u8) -> CheckResult {
    let name = CRITERIA.iter().find(|(i, _)| *i == id).map_or("unknown", |(_, n)| n);
    let start = Instant::now();
    let result = match id {
        1 => doubling_density(),
        2 => golden_density(),
        3 => coboundary_curve(),
        4 => variance_oracle(),
        5 => analytic_round_trip(),
        6 => bv_round_trip(),
        7 => obstructions(),
        8 => duality(),
        9 => projection_health(),
        10 => virtual_expansion(),
        11 => gauge_invariance(),
        _ => Ok(Outcome {
            passed: false,
            detail: format!("no criterion {id}"),
        }),
    };
    let (passed, detail) = match result {
        Ok(o) => (o.passed, o.detail),
        Err(e) => (false, format!("error: {e}")),
    };
    let r = CheckResult {
        id,
        name,
        passed,
        detail,
        elapsed: start.elapsed(),
    };
    debug!("{}", r.line());
    r
}

pub fn run_all() -> Vec<CheckResult> {
    CRITERIA.iter().map(|(id, _)| run_criterion(*id)).collect()
}

fn doubling() -> MapModel {
    MapModel::Circle(AnalyticCircleMap::doubling())
}

fn perturbed_circle() -> MapModel {
    MapModel::Circle(AnalyticCircleMap::new(2, 0.05).expect("valid circle map"))
}

fn cos_k(k: f64) -> impl Fn(f64) -> f64 + Copy {
    move |x| (2.0 * PI * k * x).cos()
}

fn doubling_density() -> Result<Outcome> {
    let e = leading_eigen(&assemble(&doubling(), BasisSpec::Fourier(32))?)?;
    let lambda_err = (e.eigenvalue - 1.0).norm();
    let sup = sample_grid(512)
        .into_iter()
        .map(|x| (e.density.eval(x) - 1.0).norm())
        .fold(0.0, f64::max);
    Ok(outcome(&[
        check(lambda_err <= 1e-12, format!("|lambda-1| = {lambda_err:.1e}")),
        check(sup <= 1e-12, format!("sup|chi-1| = {sup:.1e}")),
    ]))
}

/// Histogram of a long orbit, `bins` equal bins, normalized to a density.
fn orbit_histogram(map: &dyn IntervalMap, steps: usize, bins: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x: f64 = rng.random();
    let mut counts = vec![0usize; bins];
    for _ in 0..1000 {
        x = map.evaluate(x);
    }
    for _ in 0..steps {
        x = map.evaluate(x);
        if x == 0.0 {
            x = rng.random();
        }
        counts[((x * bins as f64) as usize).min(bins - 1)] += 1;
    }
    counts.iter().map(|&c| c as f64 * bins as f64 / steps as f64).collect()
}

fn golden_density() -> Result<Outcome> {
    let beta = BetaTransformation::golden();
    let n = 4096;
    let e = leading_eigen(&assemble(&MapModel::Beta(beta), BasisSpec::Ulam(n))?)?;
    let parry = beta.parry_density(64);
    let cells: Vec<f64> = e.density.as_slice().iter().map(|c| c.re).collect();
    let l1 = cells
        .iter()
        .enumerate()
        .map(|(i, v)| (v - parry.average(i as f64 / n as f64, (i + 1) as f64 / n as f64)).abs())
        .sum::<f64>()
        / n as f64;
    let bins = 64;
    let hist = orbit_histogram(&beta, 10_000_000, bins, 11);
    let hist_l1 = hist
        .iter()
        .enumerate()
        .map(|(i, h)| (h - parry.average(i as f64 / bins as f64, (i + 1) as f64 / bins as f64)).abs())
        .sum::<f64>()
        / bins as f64;
    let min = cells.iter().copied().fold(f64::INFINITY, f64::min);
    let floor = 1.0 - 1.0 / beta.beta() - 0.01;
    Ok(outcome(&[
        check(l1 <= 0.01, format!("L1(chi, Parry) = {l1:.2e}")),
        check(hist_l1 <= 0.01, format!("L1(histogram, Parry) = {hist_l1:.2e}")),
        check(min >= floor, format!("min cell = {min:.4} >= {floor:.4}")),
        check(
            (parry.eval(0.3) - 1.1708).abs() < 1e-4 && (parry.eval(0.9) - 0.7236).abs() < 1e-4,
            format!("Parry levels {:.4}/{:.4}", parry.eval(0.3), parry.eval(0.9)),
        ),
    ]))
}

fn coboundary_curve() -> Result<Outcome> {
    let basis = BasisSpec::Fourier(64);
    let f = FunctionRep::project_real(basis, |x| cos_k(2.0)(x) - cos_k(1.0)(x));
    let fam = TwistedFamily::new(&doubling(), basis, &f)?;
    let grid = symmetric_grid(0.5, 21);
    let points = fam.lambda_curve(&grid).into_iter().collect::<Result<Vec<_>>>()?;
    let dev = points.iter().map(|d| (d.lambda - 1.0).norm()).fold(0.0, f64::max);
    Ok(outcome(&[check(
        dev <= 1e-8,
        format!("max|lambda(t)-1| = {dev:.1e} over 21 points"),
    )]))
}

/// `∫f² + 2Σ_{n≥1}∫f·(f∘Tⁿ)` by midpoint quadrature against Lebesgue.
fn green_kubo(map: &dyn IntervalMap, f: impl Fn(f64) -> f64, terms: usize, points: usize) -> f64 {
    let xs = sample_grid(points);
    let mut total = 0.0;
    for n in 0..=terms {
        let c: f64 = xs.iter().map(|&x| f(x) * f(map.iterate(x, n))).sum::<f64>() / points as f64;
        total += if n == 0 { c } else { 2.0 * c };
    }
    total
}

fn variance_oracle() -> Result<Outcome> {
    let basis = BasisSpec::Fourier(64);
    let map = doubling();
    let f = FunctionRep::project_real(basis, cos_k(1.0));
    let fam = TwistedFamily::new(&map, basis, &f)?;
    let d = fam.derivatives_at_zero(1e-2, 16)?;
    let sigma2 = -d.lambda_second.re;
    let oracle = green_kubo(map.as_interval().expect("circle map"), cos_k(1.0), 10, 1 << 14);
    let grid = symmetric_grid(0.5, 21);
    let points = fam.lambda_curve(&grid).into_iter().collect::<Result<Vec<_>>>()?;
    let contracting = points.iter().filter(|p| p.t.re != 0.0).all(|p| p.lambda.norm() < 1.0);
    Ok(outcome(&[
        check((sigma2 - 0.5).abs() <= 1e-4, format!("-lambda''(0) = {sigma2:.8}")),
        check(
            (oracle - 0.5).abs() <= 1e-10,
            format!("Green-Kubo quadrature = {oracle:.10}"),
        ),
        check(
            d.lambda_prime.norm() <= 1e-9,
            format!("|lambda'(0)| = {:.1e}", d.lambda_prime.norm()),
        ),
        check(contracting, "|lambda(t)| < 1 for t != 0".into()),
    ]))
}

fn analytic_round_trip() -> Result<Outcome> {
    let basis = BasisSpec::Fourier(64);
    let mut checks = Vec::new();
    for (label, map) in [("doubling", doubling()), ("k=2 eps=0.05", perturbed_circle())] {
        let f = coboundary(&map, basis, cos_k(1.0))?;
        let fam = TwistedFamily::new(&map, basis, &f)?;
        let truth = normalize_transfer_function(&FunctionRep::project_real(basis, cos_k(1.0)), fam.density())?;
        let a = recover_with(&fam, RecoveryMethod::Cauchy)?;
        let b = recover_with(&fam, RecoveryMethod::Resolvent)?;
        let xs = sample_grid(512);
        let sup = |h: &FunctionRep| {
            xs.iter()
                .map(|&x| (h.eval(x) - truth.eval(x)).norm())
                .fold(0.0, f64::max)
        };
        let (ea, eb) = (sup(&a.h), sup(&b.h));
        let agree = xs
            .iter()
            .map(|&x| (a.h.eval(x) - b.h.eval(x)).norm())
            .fold(0.0, f64::max);
        checks.push(check(
            ea <= 1e-6 && eb <= 1e-6,
            format!("{label}: sup error cauchy {ea:.1e}, resolvent {eb:.1e}"),
        ));
        checks.push(check(agree <= 1e-6, format!("{label}: methods agree to {agree:.1e}")));
    }
    Ok(outcome(&checks))
}

fn bv_round_trip() -> Result<Outcome> {
    let beta = BetaTransformation::golden();
    let map = MapModel::Beta(beta);
    let n = 8192;
    let basis = BasisSpec::Ulam(n);
    let cut = 1.0 / beta.beta();
    let parry = beta.parry_density(64);
    let mean = parry.average(0.0, cut) * cut;
    let h = move |x: f64| if x < cut { 1.0 - mean } else { -mean };
    let f = coboundary(&map, basis, h)?;
    let fam = TwistedFamily::new(&map, basis, &f)?;
    let rec = recover_with(&fam, RecoveryMethod::Resolvent)?;
    let truth = FunctionRep::project_real_averaged(basis, h, 64);
    let l1 = rec.h.sub(&truth)?.l1_norm(0);
    let residual = cell_averaged_residual(&map, &f, &rec.h, 32)?;
    Ok(outcome(&[
        check(l1 <= 0.02, format!("L1 recovery error = {l1:.2e}")),
        check(
            residual <= 0.02,
            format!("cell-averaged cocycle residual = {residual:.2e}"),
        ),
    ]))
}

fn obstructions() -> Result<Outcome> {
    let basis = BasisSpec::Fourier(64);
    let mut checks = Vec::new();
    let f = FunctionRep::project_real(basis, |x| cos_k(2.0)(x) - cos_k(1.0)(x));
    let p = periodic_obstructions(&doubling(), &f, 10)?;
    checks.push(check(
        p.max_abs <= 1e-10,
        format!(
            "doubling coboundary: max |sum| = {:.1e} over {} orbits",
            p.max_abs,
            p.orbits.len()
        ),
    ));
    let map = perturbed_circle();
    let circle = map.as_interval().expect("circle map");
    let h = |x: f64| cos_k(1.0)(x) + 0.3 * (4.0 * PI * x).sin();
    let mut max_abs: f64 = 0.0;
    let mut count = 0;
    for n in 1..=10 {
        for orbit in map.periodic_points(n)?.into_iter().filter(|o| o.period == n) {
            let sum: f64 = orbit.points.iter().map(|&x| h(circle.evaluate(x)) - h(x)).sum();
            max_abs = max_abs.max(sum.abs());
            count += 1;
        }
    }
    checks.push(check(
        max_abs <= 1e-10,
        format!("k=2 eps=0.05 coboundary: max |sum| = {max_abs:.1e} over {count} orbits"),
    ));
    let cos = FunctionRep::project_real(basis, cos_k(1.0));
    let fixed = periodic_obstructions(&doubling(), &cos, 1)?;
    let value = fixed.orbits.first().map_or(f64::NAN, |(_, s)| *s);
    checks.push(check(
        (value - 1.0).abs() <= 1e-14,
        format!("cos fixed-point obstruction = {value}"),
    ));
    Ok(outcome(&checks))
}

fn duality() -> Result<Outcome> {
    let trig = |trials| DualityProbe {
        trials,
        seed: 3,
        family: TestFamily::Trigonometric,
    };
    let fourier = duality_residual(&doubling(), &assemble(&doubling(), BasisSpec::Fourier(32))?, &trig(20))?;
    let eps = duality_residual(
        &perturbed_circle(),
        &assemble(&perturbed_circle(), BasisSpec::Fourier(32))?,
        &trig(20),
    )?;
    let dyadic = MapModel::Beta(BetaTransformation::new(2.0)?);
    let exact = duality_residual(
        &dyadic,
        &assemble(&dyadic, BasisSpec::Ulam(64))?,
        &DualityProbe {
            trials: 20,
            seed: 5,
            family: TestFamily::CellIndicators,
        },
    )?;
    let golden = MapModel::Beta(BetaTransformation::golden());
    let r = |n| duality_residual(&golden, &assemble(&golden, BasisSpec::Ulam(n))?, &trig(20));
    let (r2, r4, r8) = (r(2048)?, r(4096)?, r(8192)?);
    let ratios = (r2 / r4, r4 / r8);
    let decays = [ratios.0, ratios.1].iter().all(|q| (1.5..=3.0).contains(q));
    Ok(outcome(&[
        check(
            fourier <= 1e-10 && eps <= 1e-10,
            format!("Fourier {fourier:.1e} / {eps:.1e}"),
        ),
        check(exact <= 1e-12, format!("dyadic Ulam {exact:.1e}")),
        check(r4 <= 1e-3, format!("golden Ulam N=4096 {r4:.2e}")),
        check(
            decays,
            format!("refinement ratios {:.2}, {:.2} (N=2048/4096/8192)", ratios.0, ratios.1),
        ),
    ]))
}

fn health(points: &[PerturbedEigenData]) -> (f64, f64, f64) {
    points.iter().fold((0.0, 0.0, 0.0), |(d, r, t), p| {
        (
            f64::max(d, p.projection_defect),
            f64::max(r, p.rank_witness),
            f64::max(t, (p.trace - 1.0).norm()),
        )
    })
}

fn projection_health() -> Result<Outcome> {
    let fourier = BasisSpec::Fourier(64);
    let grid = symmetric_grid(0.5, 21);
    let mut all = Vec::new();
    let runs: Vec<(MapModel, FunctionRep)> = vec![
        (doubling(), FunctionRep::project_real(fourier, cos_k(1.0))),
        (
            doubling(),
            FunctionRep::project_real(fourier, |x| cos_k(2.0)(x) - cos_k(1.0)(x)),
        ),
        (
            perturbed_circle(),
            FunctionRep::project_real(fourier, |x| (2.0 * PI * x).sin() + 0.2),
        ),
    ];
    for (map, f) in runs {
        let fam = TwistedFamily::new(&map, fourier, &f)?;
        all.extend(fam.lambda_curve(&grid).into_iter().filter_map(|r| r.ok()));
        all.extend(fam.derivatives_at_zero(1e-2, 16)?.nodes);
    }
    let ulam = BasisSpec::Ulam(4096);
    let golden = MapModel::Beta(BetaTransformation::golden());
    let fam = TwistedFamily::new(&golden, ulam, &FunctionRep::project_real(ulam, |x| x - 0.4))?;
    all.extend(
        fam.lambda_curve(&symmetric_grid(0.3, 7))
            .into_iter()
            .collect::<Result<Vec<_>>>()?,
    );
    let (defect, rank, trace) = health(&all);
    Ok(outcome(&[
        check(defect <= 1e-8, format!("max ||P^2-P|| = {defect:.1e}")),
        check(rank <= 1e-8, format!("max sigma_2(P) = {rank:.1e}")),
        check(
            trace <= 1e-6,
            format!("max |tr P - 1| = {trace:.1e} over {} projections", all.len()),
        ),
    ]))
}

fn virtual_expansion() -> Result<Outcome> {
    let mut worst: f64 = 0.0;
    for k in [2u32, 3, 4] {
        let map = CriterionMap::Conformal(MapModel::Circle(AnalyticCircleMap::new(k, 0.0)?));
        for s in [0.5, 1.0, 2.0] {
            for n in [1, 2] {
                let want = f64::from(k).powf(-(n as f64) * s);
                for variant in [WeightVariant::Printed, WeightVariant::ReciprocalPullback] {
                    let q = CriterionQuery::new(map.clone(), s, n, variant).with_resolution(64, 64);
                    worst = worst.max((criterion_value(&q)?.value - want).abs());
                }
            }
        }
    }
    let (m, cert) = min_expanding_m(2.0, 2, 2..=64, WeightVariant::ReciprocalPullback, (256, 256))?;
    let printed = certify(
        &CriterionQuery::new(
            CriterionMap::Skew(TsujiiSkewProduct::new(m)?),
            2.0,
            1,
            WeightVariant::Printed,
        ),
        2,
    )?;
    if printed.value >= 1.0 {
        info!("printed variant at m = {m}: value {:.6} >= 1", printed.value);
    }
    Ok(outcome(&[
        check(worst <= 1e-12, format!("conformal k^(-ns) error {worst:.1e}")),
        check(
            cert.certified && cert.margin > 1e-3 && m <= 64 && cert.n <= 2,
            format!(
                "reciprocal-pullback certifies m = {m}, n = {}, margin {:.4}",
                cert.n, cert.margin
            ),
        ),
        check(
            !printed.certified && printed.value >= 1.0,
            format!("printed variant at m = {m}: value {:.4}", printed.value),
        ),
    ]))
}

fn gauge_invariance() -> Result<Outcome> {
    let basis = BasisSpec::Fourier(64);
    let map = doubling();
    let g = |x: f64| 0.3 * (2.0 * PI * x).sin() - 0.2 * (4.0 * PI * x).cos() + 0.1 * (6.0 * PI * x).sin();
    let shift = coboundary(&map, basis, g)?;
    let grid = symmetric_grid(0.5, 21);
    let tol = Tolerances::FOURIER;
    let mut checks = Vec::new();
    for (label, f) in [
        ("cos", FunctionRep::project_real(basis, cos_k(1.0))),
        (
            "coboundary",
            FunctionRep::project_real(basis, |x| cos_k(2.0)(x) - cos_k(1.0)(x)),
        ),
    ] {
        let a = TwistedFamily::new(&map, basis, &f)?;
        let b = a.with_observable(&f.add(&shift)?)?;
        let (ra, la) = detect_scanned(&a, &grid, &tol)?;
        let (rb, lb) = detect_scanned(&b, &grid, &tol)?;
        let full = la.points.len() == grid.len() && lb.points.len() == grid.len();
        let diff = la
            .points
            .iter()
            .zip(&lb.points)
            .map(|(p, q)| (p.lambda - q.lambda).norm())
            .fold(if full { 0.0 } else { f64::INFINITY }, f64::max);
        let (va, vb) = (ra.verdict, rb.verdict);
        checks.push(check(
            diff <= 1e-8,
            format!("{label}: lambda curves differ by {diff:.1e}"),
        ));
        checks.push(check(
            va == vb && va != Verdict::Inconclusive,
            format!("{label}: verdicts {va}/{vb}"),
        ));
    }
    Ok(outcome(&checks))
}
