//! Experiment orchestration: parameters → fields → scalar runs → ensembles,
//! with every output hashed into a manifest.
//!
//! Each step is keyed by the SHA-256 of the canonical config, the step name
//! and its input file hashes.  A re-run skips a step whose key matches the
//! previous manifest and whose outputs still hash to the recorded values.
//! Outputs are written to `<file>.partial` and renamed on success, so a
//! failed stage leaves its partial output behind.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anodiss_core::bq::build_bq;
use anodiss_core::params::{build_table_with, desk_table, paper_table, ParamTable, Regime, TableSpec};
use anodiss_core::tree::build_tree;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, KappaSource, RegimeKind, Stage, VelocitySource};
use crate::ensemble::{endpoint_variance_on_d, fldiss_with_solution, Drift, EnsembleSpec};
use crate::error::{Error, Result};
use crate::fields::{build_uq, required_resolution, GridVector};
use crate::initial::Theta0;
use crate::io;
use crate::ns3d::ns3d_assemble_from;
use crate::solver::{solve_adv_diff, SolverConfig};

/// The paper regime refuses to build fields finer than this.
pub const PAPER_MIN_SCALE: f64 = 1e-6;

pub const MANIFEST: &str = "manifest.json";
pub const CONFIG_COPY: &str = "config.txt";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub stage: String,
    pub name: String,
    pub key: String,
    /// Input file (relative to the run directory) → SHA-256.
    pub inputs: BTreeMap<String, String>,
    /// Output file → SHA-256.
    pub outputs: BTreeMap<String, String>,
    pub wall_time_s: f64,
    pub skipped: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub code_version: String,
    pub steps: Vec<StepRecord>,
}

impl RunManifest {
    /// Output file → hash over all steps (wall-times and skip flags left out).
    pub fn output_hashes(&self) -> BTreeMap<String, String> {
        self.steps.iter().flat_map(|s| s.outputs.clone()).collect()
    }
}

pub fn load_manifest(dir: &Path) -> Result<RunManifest> {
    let p = dir.join(MANIFEST);
    let f = File::open(&p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
    Ok(serde_json::from_reader(f)?)
}

/// Builds the parameter table a config describes.
pub fn config_table(cfg: &ExperimentConfig) -> Result<ParamTable> {
    let q_max = cfg.q_list.iter().copied().max().unwrap_or(0).max(1);
    let table = match cfg.regime {
        RegimeKind::Desk => desk_table(cfg.a0.unwrap_or(0.1), cfg.delta, cfg.eps, q_max)?,
        RegimeKind::Paper => {
            let alpha = cfg.alpha.ok_or_else(|| Error::Config("paper regime needs alpha".into()))?;
            let eps = cfg.eps.ok_or_else(|| Error::Config("paper regime needs eps".into()))?;
            match cfg.a0 {
                None => paper_table(alpha, eps, cfg.delta, q_max)?,
                Some(a0) => build_table_with(TableSpec {
                    log_a0: a0.ln(),
                    eps,
                    delta: cfg.delta,
                    alpha: Some(alpha),
                    q_max,
                    regime: Regime::Paper,
                })?,
            }
        }
    };
    Ok(table)
}

/// Diffusivities used for level `q`.
pub fn config_kappas(cfg: &ExperimentConfig, table: &ParamTable, q: usize) -> Vec<f64> {
    match &cfg.kappa {
        KappaSource::Table => vec![table.level(q).kappa],
        KappaSource::TableCapped(c) => vec![table.level(q).kappa.min(*c)],
        KappaSource::List(l) => l.clone(),
    }
}

/// Grid size and smallest resolved scale of the velocity at level `q`.
pub fn config_resolution(cfg: &ExperimentConfig, table: &ParamTable, q: usize) -> Result<(usize, f64)> {
    match cfg.velocity {
        VelocitySource::Zero => Ok((cfg.grid_res, f64::INFINITY)),
        VelocitySource::Built => {
            let (scale, need) = required_resolution(table, q);
            if cfg.regime == RegimeKind::Paper && scale < PAPER_MIN_SCALE {
                return Err(Error::Config(format!(
                    "paper regime: u_{q} has scale {scale:.3e} below {PAPER_MIN_SCALE:e}; fields are built in the desk regime"
                )));
            }
            Ok((if cfg.grid_res == 0 { need } else { cfg.grid_res }, scale))
        }
    }
}

pub fn field_file(q: usize) -> String {
    format!("field_q{q}.bin")
}
pub fn tree_file(q: usize) -> String {
    format!("tree_q{q}.json")
}
pub fn run_file(q: usize, k: usize) -> String {
    format!("run_q{q}_k{k}.csv")
}
pub fn theta_file(q: usize, k: usize) -> String {
    format!("theta_q{q}_k{k}.bin")
}
pub fn fldiss_file(q: usize, k: usize) -> String {
    format!("fldiss_q{q}_k{k}.json")
}
pub fn mc_file(q: usize, k: usize) -> String {
    format!("mc_q{q}_k{k}.csv")
}
pub fn ns3d_file(q: usize) -> String {
    format!("ns3d_q{q}.json")
}
pub fn variance_file(q: usize) -> String {
    format!("variance_q{q}.json")
}
pub const PARAMS_FILE: &str = "params.csv";
pub const LADDER_FILE: &str = "ladder.csv";
pub const LADDER_HEADER: [&str; 6] = ["q", "kappa", "e0", "diss", "ratio", "energy_residual"];

/// `(|e(T) + 2D(T) − e(0)|, relative)` from a time series.
pub fn energy_residual_of(rows: &[io::RunRow]) -> (f64, f64) {
    match (rows.first(), rows.last()) {
        (Some(a), Some(b)) => {
            let abs = (b.energy + 2.0 * b.cum_diss - a.energy).abs();
            (abs, if a.energy > 0.0 { abs / a.energy } else { abs })
        }
        _ => (0.0, 0.0),
    }
}

fn with_context(e: Error, ctx: &str) -> Error {
    match e {
        Error::Config(m) => Error::Config(format!("{ctx}: {m}")),
        Error::Numeric(m) => Error::Numeric(format!("{ctx}: {m}")),
        Error::Geometry(m) => Error::Geometry(format!("{ctx}: {m}")),
        Error::Io(e) => Error::Config(format!("{ctx}: {e}")),
    }
}

struct Runner<'a> {
    dir: PathBuf,
    config_hash: String,
    prev: Option<RunManifest>,
    manifest: RunManifest,
    log: &'a mut dyn FnMut(&str),
}

impl Runner<'_> {
    fn hash_of(&self, rel: &str) -> Result<String> {
        let p = self.dir.join(rel);
        if !p.exists() {
            return Err(Error::Config(format!("missing input {rel} (enable the stage that writes it)")));
        }
        io::sha256_file(&p)
    }

    fn save_manifest(&self) -> Result<()> {
        io::write_file_atomic(&self.dir.join(MANIFEST), |w| {
            serde_json::to_writer_pretty(&mut *w, &self.manifest)?;
            w.write_all(b"\n")?;
            Ok(())
        })?;
        Ok(())
    }

    /// Runs (or skips) one step; `body` writes the outputs under `dir`.
    fn step<F>(&mut self, stage: Stage, name: &str, inputs: &[String], outputs: &[String], body: F) -> Result<()>
    where
        F: FnOnce(&Path) -> Result<()>,
    {
        let mut in_hashes = BTreeMap::new();
        for i in inputs {
            in_hashes.insert(i.clone(), self.hash_of(i).map_err(|e| with_context(e, name))?);
        }
        let mut key_src = format!("{}\n{name}\n", self.config_hash);
        for (k, v) in &in_hashes {
            key_src.push_str(&format!("{k} {v}\n"));
        }
        let key = io::sha256_bytes(key_src.as_bytes());
        let previous = self
            .prev
            .as_ref()
            .and_then(|m| m.steps.iter().find(|s| s.name == name && s.key == key))
            .cloned();
        if let Some(p) = previous {
            let intact = outputs.iter().all(|o| {
                p.outputs.get(o).is_some_and(|h| {
                    let path = self.dir.join(o);
                    path.exists() && io::sha256_file(&path).is_ok_and(|x| &x == h)
                })
            });
            if intact {
                (self.log)(&format!("skip  {name} (unchanged)"));
                self.manifest.steps.push(StepRecord {
                    wall_time_s: 0.0,
                    skipped: true,
                    ..p
                });
                return self.save_manifest();
            }
        }
        (self.log)(&format!("run   {name}"));
        let t0 = Instant::now();
        if let Err(e) = body(&self.dir) {
            // outputs the step completed before failing are kept as partials
            for o in outputs {
                let p = self.dir.join(o);
                if p.exists() {
                    fs::rename(&p, io::partial_path(&p))?;
                }
            }
            return Err(with_context(e, &format!("stage {} ({name})", stage.name())));
        }
        let mut out_hashes = BTreeMap::new();
        for o in outputs {
            out_hashes.insert(o.clone(), self.hash_of(o)?);
        }
        self.manifest.steps.push(StepRecord {
            stage: stage.name().into(),
            name: name.into(),
            key,
            inputs: in_hashes,
            outputs: out_hashes,
            wall_time_s: t0.elapsed().as_secs_f64(),
            skipped: false,
        });
        self.save_manifest()
    }
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    io::write_file_atomic(path, |w| {
        serde_json::to_writer_pretty(&mut *w, v)?;
        w.write_all(b"\n")?;
        Ok(())
    })?;
    Ok(())
}

fn read_run(path: &Path) -> Result<Vec<io::RunRow>> {
    io::read_run_csv(File::open(path)?)
}

fn load_velocity(dir: &Path, q: usize) -> Result<GridVector> {
    Ok(io::load_field(&dir.join(field_file(q)))?.1)
}

/// Runs the stages named in `cfg` in pipeline order and returns the manifest
/// (also written to `out_dir/manifest.json`).
pub fn run_pipeline(cfg: &ExperimentConfig, log: &mut dyn FnMut(&str)) -> Result<RunManifest> {
    cfg.validate()?;
    let dir = cfg.out_dir.clone();
    fs::create_dir_all(&dir)?;
    let text = cfg.serialize();
    let config_hash = io::sha256_bytes(text.as_bytes());
    io::write_file_atomic(&dir.join(CONFIG_COPY), |w| Ok(w.write_all(text.as_bytes())?))?;
    let prev = load_manifest(&dir).ok();
    let mut r = Runner {
        dir: dir.clone(),
        config_hash: config_hash.clone(),
        prev,
        manifest: RunManifest {
            config_hash,
            code_version: env!("CARGO_PKG_VERSION").into(),
            steps: Vec::new(),
        },
        log,
    };
    let table = config_table(cfg)?;
    let thash = io::table_hash(&table)?;
    let has = |s: Stage| cfg.stages.contains(&s);
    let solver = SolverConfig::default();

    if has(Stage::Params) {
        r.step(Stage::Params, "params", &[], &[PARAMS_FILE.into()], |d| {
            io::save_params(&d.join(PARAMS_FILE), &table).map(|_| ())
        })?;
    }
    if has(Stage::Tree) {
        for &q in &cfg.q_list {
            config_resolution(cfg, &table, q)?;
            r.step(Stage::Tree, &format!("tree q={q}"), &[], &[tree_file(q)], |d| {
                let b = build_bq(&table, q)?;
                let tree = build_tree(&b)?;
                io::write_file_atomic(&d.join(tree_file(q)), |w| io::write_tree_json(w, &tree))?;
                Ok(())
            })?;
        }
    }
    if has(Stage::Field) {
        for &q in &cfg.q_list {
            let (res, _) = config_resolution(cfg, &table, q)?;
            let header = io::SnapshotHeader {
                grid_res: res,
                q,
                table_hash: thash.clone(),
            };
            r.step(Stage::Field, &format!("field q={q}"), &[], &[field_file(q)], |d| {
                let u = match cfg.velocity {
                    VelocitySource::Zero => GridVector::zeros(res),
                    VelocitySource::Built => build_uq(&table, q, res)?.flow.u,
                };
                io::write_file_atomic(&d.join(field_file(q)), |w| io::write_field(w, &header, &u))?;
                Ok(())
            })?;
        }
    }
    if has(Stage::Solve) {
        for &q in &cfg.q_list {
            for (k, &kappa) in config_kappas(cfg, &table, q).iter().enumerate() {
                let outs = [run_file(q, k), theta_file(q, k)];
                r.step(Stage::Solve, &format!("solve q={q} k={k}"), &[field_file(q)], &outs, |d| {
                    let u = load_velocity(d, q)?;
                    let th = Theta0::new(cfg.theta0, u.n, Some(&u))?;
                    let uu = (cfg.velocity == VelocitySource::Built).then_some(&u);
                    let res = solve_adv_diff(uu, &th.grid, kappa, cfg.t_end, &solver)?;
                    io::write_file_atomic(&d.join(run_file(q, k)), |w| io::write_run_csv(w, &res))?;
                    let h = io::SnapshotHeader {
                        grid_res: u.n,
                        q,
                        table_hash: thash.clone(),
                    };
                    io::write_file_atomic(&d.join(theta_file(q, k)), |w| io::write_scalar(w, &h, &res.theta_final))?;
                    Ok(())
                })?;
            }
        }
    }
    if has(Stage::Fldiss) {
        for &q in &cfg.q_list {
            let (_, scale) = config_resolution(cfg, &table, q)?;
            for (k, &kappa) in config_kappas(cfg, &table, q).iter().enumerate() {
                let ins = [field_file(q), run_file(q, k)];
                let outs = [fldiss_file(q, k), mc_file(q, k)];
                r.step(Stage::Fldiss, &format!("fldiss q={q} k={k}"), &ins, &outs, |d| {
                    let u = load_velocity(d, q)?;
                    let rows = read_run(&d.join(run_file(q, k)))?;
                    let (pde_tol, _) = energy_residual_of(&rows);
                    let rhs = 2.0 * rows.last().map_or(0.0, |x| x.cum_diss);
                    let th = Theta0::new(cfg.theta0, u.n, Some(&u))?;
                    let drift = Drift::grid(&u, scale);
                    let spec = EnsembleSpec::new(cfg.mc.n_traj, cfg.mc.dt.min(cfg.t_end.max(f64::MIN_POSITIVE)), cfg.t_end, cfg.mc.seed);
                    let (rep, batch) = fldiss_with_solution(&drift, &th, kappa, &spec, cfg.mc.m, rhs, pde_tol)?;
                    write_json(&d.join(fldiss_file(q, k)), &rep)?;
                    io::write_file_atomic(&d.join(mc_file(q, k)), |w| io::write_mc_csv(w, &batch))?;
                    Ok(())
                })?;
            }
        }
    }
    if has(Stage::Ladder) {
        let mut ins = Vec::new();
        let mut rungs = Vec::new();
        for &q in &cfg.q_list {
            for (k, &kappa) in config_kappas(cfg, &table, q).iter().enumerate() {
                ins.push(run_file(q, k));
                rungs.push((q, kappa, run_file(q, k)));
            }
        }
        r.step(Stage::Ladder, "ladder", &ins, &[LADDER_FILE.into()], |d| {
            io::write_file_atomic(&d.join(LADDER_FILE), |w| {
                let mut wr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
                wr.write_record(LADDER_HEADER)?;
                for (q, kappa, f) in &rungs {
                    let rows = read_run(&d.join(f))?;
                    let e0 = rows.first().map_or(0.0, |x| x.energy);
                    let diss = rows.last().map_or(0.0, |x| x.cum_diss);
                    let (_, rel) = energy_residual_of(&rows);
                    let ratio = if e0 > 0.0 { diss / e0 } else { 0.0 };
                    wr.write_record([
                        q.to_string(),
                        io::fmt_f64(*kappa),
                        io::fmt_f64(e0),
                        io::fmt_f64(diss),
                        io::fmt_f64(ratio),
                        io::fmt_f64(rel),
                    ])?;
                }
                wr.flush()?;
                Ok(())
            })?;
            Ok(())
        })?;
    }
    if has(Stage::Ns3d) {
        for &q in &cfg.q_list {
            let nu = config_kappas(cfg, &table, q)[0];
            let ins = [field_file(q), run_file(q, 0)];
            r.step(Stage::Ns3d, &format!("ns3d q={q}"), &ins, &[ns3d_file(q)], |d| {
                let u = load_velocity(d, q)?;
                let rows = read_run(&d.join(run_file(q, 0)))?;
                let (_, rel) = energy_residual_of(&rows);
                let ns = ns3d_assemble_from(&u, nu, nu, u.n, rel)?;
                write_json(&d.join(ns3d_file(q)), &ns.report)
            })?;
        }
    }
    if has(Stage::Variance) {
        for &q in &cfg.q_list {
            let (_, scale) = config_resolution(cfg, &table, q)?;
            let kappa = config_kappas(cfg, &table, q)[0];
            r.step(Stage::Variance, &format!("variance q={q}"), &[field_file(q)], &[variance_file(q)], |d| {
                let u = load_velocity(d, q)?;
                let b = build_bq(&table, q)?;
                let tree = build_tree(&b)?;
                let drift = Drift::grid(&u, scale);
                let spec = EnsembleSpec::new(cfg.mc.n_traj, cfg.mc.dt, cfg.t_end, cfg.mc.seed);
                let (rep, _) = endpoint_variance_on_d(&drift, &tree, &b, q, kappa, &spec, cfg.mc.d_starts)?;
                write_json(&d.join(variance_file(q)), &rep)
            })?;
        }
    }
    Ok(r.manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TAU: f64 = std::f64::consts::TAU;

    fn quiet() -> impl FnMut(&str) {
        |_| {}
    }

    #[test]
    fn heat_decay_run_matches_the_closed_form() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = ExperimentConfig::builtin("heat").unwrap();
        c.out_dir = dir.path().to_path_buf();
        c.t_end = 0.5;
        let m = run_pipeline(&c, &mut quiet()).unwrap();
        assert_eq!(m.steps.len(), 4);
        let rows = read_run(&dir.path().join(run_file(0, 0))).unwrap();
        let kappa = 1e-3;
        for r in &rows {
            let e = 0.5 * (-2.0 * TAU * TAU * kappa * r.t).exp();
            assert!((r.energy - e).abs() <= 1e-10 * e, "{} {}", r.energy, e);
            assert!((r.cum_diss - (0.5 - e) / 2.0).abs() <= 1e-10 * 0.5);
        }
        assert!(dir.path().join(LADDER_FILE).exists());
    }

    #[test]
    fn fldiss_smoke_agrees_and_reruns_identically() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = ExperimentConfig::builtin("fldiss-smoke").unwrap();
        c.out_dir = dir.path().to_path_buf();
        let m1 = run_pipeline(&c, &mut quiet()).unwrap();
        let rep: serde_json::Value =
            serde_json::from_reader(File::open(dir.path().join(fldiss_file(0, 0))).unwrap()).unwrap();
        let (lhs, rhs, se) = (
            rep["lhs"].as_f64().unwrap(),
            rep["rhs"].as_f64().unwrap(),
            rep["mc_se"].as_f64().unwrap(),
        );
        assert!((lhs - rhs).abs() <= 3.0 * se, "{lhs} {rhs} {se}");
        assert!((rep["rel_err"].as_f64().unwrap() - (lhs - rhs).abs() / rhs).abs() < 1e-15);

        // the re-run skips every step and reproduces every hash
        let mut lines = Vec::new();
        let m2 = run_pipeline(&c, &mut |s: &str| lines.push(s.to_string())).unwrap();
        assert!(m2.steps.iter().all(|s| s.skipped), "{lines:?}");
        assert_eq!(m1.output_hashes(), m2.output_hashes());

        // a fresh directory recomputes everything and still matches
        let dir2 = tempfile::tempdir().unwrap();
        c.out_dir = dir2.path().to_path_buf();
        let m3 = run_pipeline(&c, &mut quiet()).unwrap();
        assert!(m3.steps.iter().all(|s| !s.skipped));
        assert_eq!(m1.output_hashes(), m3.output_hashes());
        assert_ne!(m1.config_hash, m3.config_hash, "out_dir is part of the config");
    }

    #[test]
    fn changed_input_invalidates_dependents() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = ExperimentConfig::builtin("heat").unwrap();
        c.out_dir = dir.path().to_path_buf();
        c.t_end = 0.1;
        run_pipeline(&c, &mut quiet()).unwrap();
        // tamper with the run output: its step re-runs, restoring the file
        let p = dir.path().join(run_file(0, 0));
        fs::write(&p, "garbage").unwrap();
        let m = run_pipeline(&c, &mut quiet()).unwrap();
        let solve = m.steps.iter().find(|s| s.stage == "solve").unwrap();
        assert!(!solve.skipped);
        assert!(read_run(&p).is_ok());
    }

    #[test]
    fn failing_stage_keeps_partial_output_and_reports_the_stage() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = ExperimentConfig::builtin("fldiss-smoke").unwrap();
        c.out_dir = dir.path().to_path_buf();
        c.kappa = KappaSource::List(vec![f64::MAX]);
        let e = run_pipeline(&c, &mut quiet()).unwrap_err();
        assert!(matches!(e, Error::Numeric(_)));
        let msg = e.to_string();
        assert!(msg.contains("stage fldiss"), "{msg}");
        // the manifest records the steps that completed
        let m = load_manifest(dir.path()).unwrap();
        assert_eq!(
            m.steps.iter().map(|s| s.stage.as_str()).collect::<Vec<_>>(),
            ["params", "field", "solve"]
        );
        assert!(!dir.path().join(fldiss_file(0, 0)).exists());

        // a step that wrote one of its outputs before failing
        let mut log = quiet();
        let mut r = Runner {
            dir: dir.path().to_path_buf(),
            config_hash: "h".into(),
            prev: None,
            manifest: m,
            log: &mut log,
        };
        let outs = ["a.csv".to_string(), "b.csv".to_string()];
        let e = r
            .step(Stage::Solve, "two outputs", &[], &outs, |d| {
                fs::write(d.join("a.csv"), "done")?;
                Err(Error::Numeric("second output failed".into()))
            })
            .unwrap_err();
        assert!(e.to_string().contains("two outputs"));
        assert!(!dir.path().join("a.csv").exists());
        assert_eq!(fs::read_to_string(dir.path().join("a.csv.partial")).unwrap(), "done");
    }

    #[test]
    fn paper_regime_refuses_to_build_fields() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = ExperimentConfig::default();
        c.regime = RegimeKind::Paper;
        c.alpha = Some(0.5);
        c.delta = 2f64.powi(-6);
        c.eps = Some(2f64.powi(-18));
        c.a0 = None;
        c.q_list = vec![1];
        c.stages = vec![Stage::Params, Stage::Field];
        c.out_dir = dir.path().to_path_buf();
        match run_pipeline(&c, &mut quiet()) {
            Err(Error::Config(m)) => assert!(m.contains("paper regime"), "{m}"),
            other => panic!("{other:?}"),
        }
        assert!(dir.path().join(PARAMS_FILE).exists());
    }
}
