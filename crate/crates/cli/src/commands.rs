use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use gabor_core::flow::{
    integrate_trajectory, write_trajectory_csv, BumpSpec, TruncatedHamiltonian,
};
use gabor_core::format::{csv_row, sig17};
use gabor_core::frame::{
    compare_reports, ellipsoid_deform_from, frame_bounds, BoundsDomain, DeformationReport,
    ReportSummary,
};
use gabor_core::lattice::{count_in_ellipsoid, max_safe_epsilon};
use gabor_core::metaplectic::{covariance_defect_with, ProbeSet};
use gabor_core::{GridSpec, PhasePoint};
use serde_json::json;

use crate::config::ScenarioConfig;
use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Bounds,
    Deform,
    Flow,
    Epsilon,
    Count,
    Covariance,
}

/// Output directory and whether CSV files start with a timestamp line.
#[derive(Clone, Debug)]
pub struct Output {
    pub dir: PathBuf,
    pub timestamp: bool,
}

impl Output {
    fn create(&self, name: &str) -> Result<(PathBuf, fs::File), CliError> {
        fs::create_dir_all(&self.dir).map_err(|e| io_err(&self.dir, e))?;
        let path = self.dir.join(name);
        let f = fs::File::create(&path).map_err(|e| io_err(&path, e))?;
        Ok((path, f))
    }

    fn stamp(&self, f: &mut impl Write, path: &Path) -> Result<(), CliError> {
        if self.timestamp {
            let secs = SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0);
            writeln!(f, "# generated_unix={secs}").map_err(|e| io_err(path, e))?;
        }
        Ok(())
    }

    fn csv(&self, name: &str, header: &str, rows: &[String]) -> Result<PathBuf, CliError> {
        let (path, mut f) = self.create(name)?;
        self.stamp(&mut f, &path)?;
        let mut text = String::new();
        text.push_str(header);
        text.push('\n');
        for r in rows {
            text.push_str(r);
            text.push('\n');
        }
        f.write_all(text.as_bytes()).map_err(|e| io_err(&path, e))?;
        Ok(path)
    }

    fn json(&self, name: &str, value: &serde_json::Value) -> Result<PathBuf, CliError> {
        let (path, mut f) = self.create(name)?;
        let text =
            serde_json::to_string_pretty(value).map_err(|e| CliError::Config(e.to_string()))?;
        writeln!(f, "{text}").map_err(|e| io_err(&path, e))?;
        Ok(path)
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Config(format!("{}: {e}", path.display()))
}

/// Runs one subcommand; returns the files written.
pub fn run(cmd: Command, cfg: &ScenarioConfig, out: &Output) -> Result<Vec<PathBuf>, CliError> {
    match cmd {
        Command::Bounds => bounds(cfg, out),
        Command::Deform => deform(cfg, out),
        Command::Flow => flow(cfg, out),
        Command::Epsilon => epsilon(cfg, out),
        Command::Count => count(cfg, out),
        Command::Covariance => covariance(cfg, out),
    }
}

fn bounds(cfg: &ScenarioConfig, out: &Output) -> Result<Vec<PathBuf>, CliError> {
    let sys = cfg.system()?;
    let domain = cfg.domain(&sys)?;
    let dim = match &domain {
        BoundsDomain::Full => sys.grid().n,
        BoundsDomain::Probe(p) => p.dim(),
    };
    let b = frame_bounds(&sys, &domain)?;
    println!(
        "A = {}  B = {}  B/A = {}  is_frame = {}",
        sig17(b.a),
        sig17(b.b),
        sig17(b.condition()),
        b.is_frame
    );
    let row = format!(
        "{},{},{},{},{}",
        sys.len(),
        dim,
        csv_row(&[b.a, b.b]),
        if b.a > 0.0 {
            sig17(b.condition())
        } else {
            "inf".into()
        },
        b.is_frame
    );
    let csv = out.csv(
        "bounds.csv",
        "points,domain_dim,A,B,B_over_A,is_frame",
        &[row],
    )?;
    let js = out.json(
        "bounds.json",
        &json!({ "points": sys.len(), "domain_dim": dim, "bounds": b, "wrapped": sys.wrapped().len() }),
    )?;
    Ok(vec![csv, js])
}

/// The report sweep behind `deform`: every configured energy × time.
pub fn deformation_sweep(
    cfg: &ScenarioConfig,
) -> Result<(Vec<DeformationReport>, ReportSummary), CliError> {
    let sys = cfg.system()?;
    let opts = cfg.deform_options(&sys)?;
    let before = frame_bounds(&sys, &opts.domain)?;
    let mut reports = Vec::new();
    for e in cfg.energies() {
        let ell = cfg.ellipsoid_at(e)?;
        for &t in &cfg.deformation.t {
            let (_, r) = ellipsoid_deform_from(&sys, &ell, t, &opts, before)?;
            log::info!(
                "E = {e}, t = {t}: rel_dA = {:e}, rel_dB = {:e}",
                r.rel_da,
                r.rel_db
            );
            reports.push(r);
        }
    }
    let summary = compare_reports(&reports)?;
    Ok((reports, summary))
}

fn deform(cfg: &ScenarioConfig, out: &Output) -> Result<Vec<PathBuf>, CliError> {
    let (reports, summary) = deformation_sweep(cfg)?;
    println!(
        "{} reports, max rel_dA = {}, max rel_dB = {}",
        summary.reports,
        sig17(summary.max_rel_da),
        sig17(summary.max_rel_db)
    );
    let rows: Vec<String> = reports.iter().map(|r| r.csv_row()).collect();
    let csv = out.csv("deform.csv", DeformationReport::CSV_HEADER, &rows)?;
    let sum = out.csv(
        "deform_summary.csv",
        ReportSummary::CSV_HEADER,
        &summary.csv_rows(),
    )?;
    let js = out.json(
        "deform.json",
        &json!({ "reports": reports, "summary": summary }),
    )?;
    Ok(vec![csv, sum, js])
}

fn flow(cfg: &ScenarioConfig, out: &Output) -> Result<Vec<PathBuf>, CliError> {
    let ell = cfg.ellipsoid()?;
    let th = TruncatedHamiltonian::new(BumpSpec::new(ell, cfg.flow.eps)?);
    let z0 = PhasePoint::new(cfg.flow.start.clone())?;
    if z0.dof() != th.bump().ellipsoid().dof() {
        return Err(CliError::Config(
            "flow.start does not match the dimension of ellipsoid.M".into(),
        ));
    }
    let traj = integrate_trajectory(&z0, &th, cfg.flow.t, cfg.tolerances.dt_max)?;
    let last = traj.last().expect("trajectory has a start sample");
    println!(
        "z({}) = [{}]  H_eps = {}",
        sig17(last.t),
        csv_row(last.z.coords()),
        sig17(last.h_eps)
    );
    let (path, mut f) = out.create("trajectory.csv")?;
    out.stamp(&mut f, &path)?;
    let mut buf = Vec::new();
    write_trajectory_csv(&traj, &mut buf)?;
    f.write_all(&buf).map_err(|e| io_err(&path, e))?;
    Ok(vec![path])
}

fn epsilon(cfg: &ScenarioConfig, out: &Output) -> Result<Vec<PathBuf>, CliError> {
    let points = cfg.points()?;
    let mut rows = Vec::new();
    for e in cfg.energies() {
        let ell = cfg.ellipsoid_at(e)?;
        let eps = max_safe_epsilon(
            &points,
            &ell,
            cfg.tolerances.boundary,
            cfg.tolerances.eps_max,
        )?;
        println!("E = {}  eps* = {}", sig17(e), sig17(eps));
        rows.push(format!(
            "{},{}",
            csv_row(&[e, eps, cfg.tolerances.eps_max]),
            points.len()
        ));
    }
    Ok(vec![out.csv(
        "epsilon.csv",
        "E,eps_star,eps_max,points",
        &rows,
    )?])
}

fn count(cfg: &ScenarioConfig, out: &Output) -> Result<Vec<PathBuf>, CliError> {
    let points = cfg.points()?;
    let mut rows = Vec::new();
    for e in cfg.energies() {
        let c = count_in_ellipsoid(&points, &cfg.ellipsoid_at(e)?)?;
        println!("E = {}  count = {c}", sig17(e));
        rows.push(format!("{},{c}", sig17(e)));
    }
    Ok(vec![out.csv("count.csv", "E,count", &rows)?])
}

fn covariance(cfg: &ScenarioConfig, out: &Output) -> Result<Vec<PathBuf>, CliError> {
    let m = cfg.planar_m()?;
    let g = cfg.grid.build()?;
    let probes = cfg.probes(&g)?;
    let coarse: Option<(GridSpec, ProbeSet)> = match &cfg.covariance.coarse {
        Some(c) => {
            let cg = c.build()?;
            Some((cg, cfg.probes(&cg)?))
        }
        None => None,
    };
    let mut rows = Vec::new();
    let mut worst = 0.0_f64;
    for &t in &cfg.covariance.t {
        for &[q, p] in &cfg.covariance.z {
            let z = PhasePoint::planar(q, p);
            let d = covariance_defect_with(&m, t, &z, &g, &probes)?;
            worst = worst.max(d);
            let mut row = csv_row(&[t, q, p, d]);
            if let Some((cg, cp)) = &coarse {
                let dc = covariance_defect_with(&m, t, &z, cg, cp)?;
                let ratio = if dc > 0.0 { d / dc } else { f64::NAN };
                row = format!(
                    "{row},{},{}",
                    sig17(dc),
                    if ratio.is_nan() {
                        "nan".into()
                    } else {
                        sig17(ratio)
                    }
                );
            }
            rows.push(row);
        }
    }
    println!("{} cases, max defect = {}", rows.len(), sig17(worst));
    let header = if coarse.is_some() {
        "t,q,p,defect,defect_coarse,ratio"
    } else {
        "t,q,p,defect"
    };
    Ok(vec![out.csv("covariance.csv", header, &rows)?])
}
