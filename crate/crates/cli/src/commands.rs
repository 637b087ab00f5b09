use std::error::Error;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use livsic_core::livsic::{self, periodic_obstructions, recover_with, sample_grid, scan_lambda, LambdaScan};
use livsic_core::spectral::leading_eigen;
use livsic_core::transfer::assemble;
use livsic_core::vexp::{certify, min_expanding_m, CriterionMap, CriterionQuery};
use livsic_core::{selftest, Certificate, Error as CoreError, MapModel, TwistedFamily, Verdict};
use log::info;
use serde_json::{json, Value};

use crate::config::{ConfigInvalid, ExperimentConfig};

pub type CmdResult = Result<Outcome, Box<dyn Error>>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    /// Inconclusive verdict, negative certificate or failed check.
    Negative,
}

/// One invocation: config, output directory and the files written so far.
pub struct Run {
    command: &'static str,
    cfg: ExperimentConfig,
    threads: usize,
    dump_operator: bool,
    started: Instant,
    outputs: Vec<String>,
}

impl Run {
    pub fn new(command: &'static str, cfg: ExperimentConfig, threads: usize, dump_operator: bool) -> Self {
        Self {
            command,
            cfg,
            threads,
            dump_operator,
            started: Instant::now(),
            outputs: Vec::new(),
        }
    }

    fn dir(&self) -> PathBuf {
        self.cfg.out.clone().unwrap_or_else(|| PathBuf::from("out"))
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<(), Box<dyn Error>> {
        let dir = self.dir();
        std::fs::create_dir_all(&dir)?;
        std::fs::write(dir.join(name), contents)?;
        info!("wrote {}", dir.join(name).display());
        self.outputs.push(name.to_string());
        Ok(())
    }

    /// Writes `<command>.provenance.json` describing every output of the run.
    fn finish(mut self, summary: Value, outcome: Outcome) -> CmdResult {
        let provenance = json!({
            "command": self.command,
            "version": env!("CARGO_PKG_VERSION"),
            "config": self.cfg,
            "tolerances": self.cfg.tolerances(),
            "threads": if self.threads == 0 { rayon::current_num_threads() } else { self.threads },
            "outputs": self.outputs,
            "summary": summary,
            "timings": { "total_seconds": self.started.elapsed().as_secs_f64() },
        });
        let name = format!("{}.provenance.json", self.command);
        self.write(&name, &serde_json::to_string_pretty(&provenance)?)?;
        Ok(outcome)
    }
}

fn num(x: f64) -> String {
    format!("{x:.17e}")
}

fn family(cfg: &ExperimentConfig) -> Result<(MapModel, TwistedFamily), Box<dyn Error>> {
    let map = cfg.map()?;
    let f = cfg.observable()?;
    let fam = TwistedFamily::new(&map, cfg.basis, &f)?;
    Ok((map, fam))
}

fn lambda_csv(scan: &LambdaScan) -> String {
    let mut out = String::from("t,re_lambda,im_lambda,abs_lambda,eigen_residual,proj_defect\n");
    for p in &scan.points {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            num(p.t.re),
            num(p.lambda.re),
            num(p.lambda.im),
            num(p.lambda.norm()),
            num(p.eigen_residual),
            num(p.projection_defect)
        );
    }
    out
}

fn samples_csv(name: &str, h: &livsic_core::FunctionRep, n: usize) -> String {
    let mut out = format!("x,re_{name},im_{name}\n");
    for x in sample_grid(n) {
        let v = h.eval(x);
        let _ = writeln!(out, "{},{},{}", num(x), num(v.re), num(v.im));
    }
    out
}

pub fn density(mut run: Run) -> CmdResult {
    let map = run.cfg.map()?;
    let op = assemble(&map, run.cfg.basis)?;
    if run.dump_operator {
        run.write("operator.csv", &op.to_csv())?;
    }
    let e = leading_eigen(&op)?;
    run.write("density.csv", &samples_csv("chi", &e.density, run.cfg.samples))?;
    run.write("density_coefficients.csv", &e.density.to_csv())?;
    let summary = json!({
        "lambda": { "re": e.eigenvalue.re, "im": e.eigenvalue.im },
        "second_modulus": e.second_modulus,
        "gap": e.gap,
        "residual": e.residual,
    });
    println!(
        "lambda = {:.15} {:+.3e}i, gap = {:.6}, residual = {:.3e}",
        e.eigenvalue.re, e.eigenvalue.im, e.gap, e.residual
    );
    run.finish(summary, Outcome::Success)
}

pub fn lambda_curve(mut run: Run) -> CmdResult {
    let (_, fam) = family(&run.cfg)?;
    if run.dump_operator {
        run.write("operator.csv", &fam.plain().to_csv())?;
    }
    let scan = scan_lambda(&fam, &run.cfg.t_values())?;
    run.write("lambda_curve.csv", &lambda_csv(&scan))?;
    println!(
        "{} points, working |t| <= {}, max |lambda - 1| = {:.3e}",
        scan.points.len(),
        scan.working_t_max,
        scan.max_deviation
    );
    let summary = json!({
        "points": scan.points.len(),
        "working_t_max": scan.working_t_max,
        "max_deviation": scan.max_deviation,
    });
    run.finish(summary, Outcome::Success)
}

pub fn detect(mut run: Run) -> CmdResult {
    let (map, fam) = family(&run.cfg)?;
    let tol = run.cfg.tolerances();
    let (mut report, scan) = livsic::detect_scanned(&fam, &run.cfg.t_values(), &tol)?;
    if map.as_interval().is_some() {
        let p = periodic_obstructions(&map, fam.observable(), run.cfg.n_max)?;
        report.periodic_obstruction = Some(p.max_abs);
    }
    if report.verdict == Verdict::Coboundary {
        let rec = recover_with(&fam, run.cfg.method)?;
        report.recovered_h = Some(rec.h.to_csv());
        report.cocycle_residual = Some(rec.residual);
    }
    run.write("lambda_curve.csv", &lambda_csv(&scan))?;
    run.write("report.json", &report.to_json())?;
    println!(
        "verdict {}: drift {:.3e}, variance {:.8}, max |lambda - 1| = {:.3e}",
        report.verdict,
        report.drift.norm(),
        report.variance,
        report.lambda_deviation
    );
    let outcome = if report.verdict == Verdict::Inconclusive {
        Outcome::Negative
    } else {
        Outcome::Success
    };
    run.finish(serde_json::to_value(&report)?, outcome)
}

pub fn recover(mut run: Run) -> CmdResult {
    let (_, fam) = family(&run.cfg)?;
    let rec = recover_with(&fam, run.cfg.method)?;
    run.write("h.csv", &samples_csv("h", &rec.h, run.cfg.samples))?;
    run.write("h_coefficients.csv", &rec.h.to_csv())?;
    let summary = json!({
        "method": rec.method,
        "residual": rec.residual,
        "residual_kind": rec.residual_kind,
        "imaginary_defect": rec.imaginary_defect,
    });
    run.write("recovery.json", &serde_json::to_string_pretty(&summary)?)?;
    println!("{:?} recovery, residual {:.3e}", rec.method, rec.residual);
    run.finish(summary, Outcome::Success)
}

pub fn periodic(mut run: Run) -> CmdResult {
    let map = run.cfg.map()?;
    let f = run.cfg.observable()?;
    let p = periodic_obstructions(&map, &f, run.cfg.n_max)?;
    let mut csv = String::from("period,orbit,x0,birkhoff_sum,closure_residual\n");
    for (i, (orbit, sum)) in p.orbits.iter().enumerate() {
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            orbit.period,
            i,
            num(orbit.points[0]),
            num(*sum),
            num(orbit.closure_residual)
        );
    }
    run.write("periodic.csv", &csv)?;
    println!(
        "{} orbits up to period {}, max |sum| = {:.3e}",
        p.orbits.len(),
        run.cfg.n_max,
        p.max_abs
    );
    let summary = json!({ "orbits": p.orbits.len(), "max_abs": p.max_abs, "heuristic": p.heuristic });
    run.finish(summary, Outcome::Success)
}

pub fn vexp_certify(mut run: Run) -> CmdResult {
    let cfg = &run.cfg;
    let resolution = (cfg.resolution[0], cfg.resolution[1]);
    let cert: Option<Certificate> = match (cfg.m_range, &cfg.map) {
        (Some([lo, hi]), _) => match min_expanding_m(cfg.s, cfg.n, lo..=hi, cfg.variant, resolution) {
            Ok((_, c)) => Some(c),
            Err(CoreError::NoneCertified) => None,
            Err(e) => return Err(e.into()),
        },
        (None, Some(_)) => {
            let q = CriterionQuery::new(CriterionMap::from_model(&cfg.map()?), cfg.s, 1, cfg.variant)
                .with_resolution(resolution.0, resolution.1);
            Some(certify(&q, cfg.n)?)
        }
        (None, None) => return Err(ConfigInvalid("vexp-certify needs `map` or `m_range`".into()).into()),
    };
    let mut csv = format!("{}\n", Certificate::CSV_HEADER);
    if let Some(c) = &cert {
        csv.push_str(&c.csv_row());
        csv.push('\n');
    }
    run.write("certificate.csv", &csv)?;
    let certified = cert.as_ref().is_some_and(|c| c.certified);
    match &cert {
        Some(c) => println!(
            "{} (m = {:?}, n = {}, variant {}): value {:.6}, margin {:.6}",
            if c.certified { "certified" } else { "not certified" },
            c.m,
            c.n,
            c.variant,
            c.value,
            c.margin
        ),
        None => println!("no m in the range certified"),
    }
    let summary = json!({ "certified": certified, "certificate": cert });
    run.finish(summary, if certified { Outcome::Success } else { Outcome::Negative })
}

pub fn selftest(mut run: Run) -> CmdResult {
    let ids: Vec<u8> = run
        .cfg
        .criteria
        .clone()
        .unwrap_or_else(|| selftest::CRITERIA.iter().map(|(id, _)| *id).collect());
    let mut csv = String::from("id,name,passed,detail\n");
    let mut timings = serde_json::Map::new();
    let mut all = true;
    for id in ids {
        let r = selftest::run_criterion(id);
        println!("{}", r.line());
        all &= r.passed;
        let _ = writeln!(
            csv,
            "{},{},{},\"{}\"",
            r.id,
            r.name,
            r.passed,
            r.detail.replace('"', "'")
        );
        timings.insert(r.id.to_string(), json!(r.elapsed.as_secs_f64()));
    }
    run.write("selftest.csv", &csv)?;
    let summary = json!({ "passed": all, "seconds": timings });
    run.finish(summary, if all { Outcome::Success } else { Outcome::Negative })
}
