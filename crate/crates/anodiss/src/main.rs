//! `anodiss` command-line interface.
//!
//! Exit codes: 0 success, 2 configuration/input error, 3 numeric failure,
//! 4 geometry failure.  `ANODISS_THREADS` caps the worker threads.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anodiss::config::ExperimentConfig;
use anodiss::core::bq::build_bq;
use anodiss::core::params::{
    build_table_with, desk_table, find_eps_delta, paper_table, verify_bounds, ParamTable, Regime, TableSpec,
};
use anodiss::core::tree::build_tree;
use anodiss::ensemble::{backward_flow_ensemble, d_set_starts, fldiss_check, grid_starts, Drift, EnsembleSpec};
use anodiss::fields::{build_uq, required_resolution, GridVector};
use anodiss::initial::{Theta0, Theta0Kind};
use anodiss::io;
use anodiss::ns3d::ns3d_assemble;
use anodiss::pde_checks::dissipation_ladder;
use anodiss::pipeline::run_pipeline;
use anodiss::report::report_render;
use anodiss::solver::{solve_adv_diff, SolverConfig};
use anodiss::{Error, Result};
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "anodiss", version, about = "Anomalous-dissipation construction, solver and stochastic-flow checks")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum RegimeArg {
    Paper,
    Desk,
}

#[derive(Subcommand)]
enum Cmd {
    /// Build the scale table and write it as CSV (natural logs).
    Params {
        #[arg(long, value_enum, default_value = "paper")]
        regime: RegimeArg,
        /// Hölder exponent; in the paper regime (eps, delta) default to a
        /// feasible pair for it.
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long)]
        delta: Option<f64>,
        /// First scale; the paper regime defaults to the summability threshold.
        #[arg(long)]
        a0: Option<f64>,
        #[arg(long, default_value_t = 10)]
        qmax: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sample the mollified field u_q on an N×N grid.
    BuildField {
        #[arg(long)]
        table: PathBuf,
        #[arg(long)]
        q: usize,
        /// Grid size (default: the smallest power of two that resolves u_q).
        #[arg(long)]
        res: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the rectangle tree of b_q as JSON.
    Tree {
        #[arg(long)]
        table: PathBuf,
        #[arg(long)]
        q: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve the advection–diffusion equation and write the time series.
    Solve {
        /// Field snapshot, or `zero` for u = 0 (then --res is required).
        #[arg(long)]
        field: String,
        #[arg(long, default_value = "cosx")]
        theta0: String,
        #[arg(long)]
        kappa: f64,
        #[arg(long = "T", default_value_t = 1.0)]
        t_end: f64,
        #[arg(long)]
        res: Option<usize>,
        /// Fixed time step (must satisfy the CFL bound).
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        out: PathBuf,
        /// Optional snapshot of θ(T).
        #[arg(long)]
        snapshot: Option<PathBuf>,
    },
    /// Backward stochastic flow ensemble; writes the endpoints.
    Mc {
        #[arg(long)]
        field: String,
        #[arg(long)]
        res: Option<usize>,
        #[arg(long)]
        kappa: f64,
        #[arg(long = "T", default_value_t = 1.0)]
        t_end: f64,
        #[arg(long)]
        ntraj: usize,
        #[arg(long)]
        dt: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// `grid:m`, `dset:q` (needs --table) or a CSV file with columns x,y.
        #[arg(long)]
        starts: String,
        /// Parameter table (for `dset:q` starts and the field's smallest scale).
        #[arg(long)]
        table: Option<PathBuf>,
        /// Number of D_q starts for `dset:q`.
        #[arg(long, default_value_t = 64)]
        dcap: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fluctuation–dissipation check; prints a one-line JSON report.
    Fldiss {
        #[arg(long)]
        field: String,
        #[arg(long)]
        res: Option<usize>,
        #[arg(long, default_value = "cosx")]
        theta0: String,
        #[arg(long)]
        kappa: f64,
        #[arg(long = "T", default_value_t = 1.0)]
        t_end: f64,
        #[arg(long)]
        ntraj: usize,
        #[arg(long)]
        dt: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Side of the uniform start grid.
        #[arg(long, default_value_t = 16)]
        m: usize,
        #[arg(long)]
        table: Option<PathBuf>,
        /// Optional endpoint CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Dissipation D_q(T)/e(0) over a list of levels.
    Ladder {
        #[arg(long)]
        table: PathBuf,
        /// Comma-separated levels.
        #[arg(long, value_delimiter = ',')]
        q: Vec<usize>,
        #[arg(long, default_value = "cosx")]
        theta0: String,
        /// Cap on the table diffusivities.
        #[arg(long)]
        kappa_cap: Option<f64>,
        #[arg(long = "T", default_value_t = 1.0)]
        t_end: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Assemble the 2½-dimensional Navier–Stokes solution and its residual.
    Ns3d {
        #[arg(long)]
        field: PathBuf,
        #[arg(long)]
        nu: f64,
        #[arg(long, default_value = "cosx")]
        theta0: String,
        #[arg(long = "T", default_value_t = 1.0)]
        t_end: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render report.md and SVG plots for a run directory.
    Report {
        #[arg(long)]
        dir: PathBuf,
    },
    /// Run a configured pipeline (file or built-in) with `--set key=value` overrides.
    Run {
        #[arg(long, conflicts_with = "builtin")]
        config: Option<PathBuf>,
        #[arg(long)]
        builtin: Option<String>,
        #[arg(long = "set")]
        set: Vec<String>,
        /// Print the effective config and exit.
        #[arg(long)]
        print_config: bool,
    },
}

fn cfg_err<E: std::fmt::Display>(what: &Path) -> impl FnOnce(E) -> Error + '_ {
    move |e| Error::Config(format!("{}: {e}", what.display()))
}

fn create(path: &Path) -> Result<std::io::BufWriter<File>> {
    if let Some(d) = path.parent() {
        if !d.as_os_str().is_empty() {
            std::fs::create_dir_all(d)?;
        }
    }
    Ok(std::io::BufWriter::new(File::create(path).map_err(cfg_err(path))?))
}

/// Loads `--field`: a snapshot path or `zero` (with `--res`).
fn load_velocity(field: &str, res: Option<usize>) -> Result<(Option<io::SnapshotHeader>, GridVector)> {
    if field == "zero" {
        let n = res.ok_or_else(|| Error::Config("--field zero needs --res".into()))?;
        return Ok((None, GridVector::zeros(n)));
    }
    let (h, u) = io::load_field(Path::new(field))?;
    if let Some(r) = res {
        if r != u.n {
            return Err(Error::Config(format!("--res {r} differs from the field's grid {}", u.n)));
        }
    }
    Ok((Some(h), u))
}

/// Smallest feature of a loaded field: from the table when given, else four
/// grid cells (the construction resolves every scale by at least that).
fn field_min_scale(u: &GridVector, header: Option<&io::SnapshotHeader>, table: Option<&ParamTable>) -> f64 {
    if u.max_speed() == 0.0 {
        return f64::INFINITY;
    }
    match (header, table) {
        (Some(h), Some(t)) if h.q <= t.q_max() => required_resolution(t, h.q).0,
        _ => 4.0 / u.n as f64,
    }
}

fn load_table_opt(p: &Option<PathBuf>) -> Result<Option<ParamTable>> {
    p.as_ref().map(|p| io::load_params(p)).transpose()
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Params {
            regime,
            alpha,
            eps,
            delta,
            a0,
            qmax,
            out,
        } => {
            let table = match regime {
                RegimeArg::Paper => {
                    let alpha = alpha.ok_or_else(|| Error::Config("paper regime needs --alpha".into()))?;
                    let (eps, delta) = match (eps, delta) {
                        (Some(e), Some(d)) => (e, d),
                        (None, None) => find_eps_delta(alpha)?,
                        _ => return Err(Error::Config("give both --eps and --delta or neither".into())),
                    };
                    match a0 {
                        None => paper_table(alpha, eps, delta, qmax)?,
                        Some(a0) => build_table_with(TableSpec {
                            log_a0: a0.ln(),
                            eps,
                            delta,
                            alpha: Some(alpha),
                            q_max: qmax,
                            regime: Regime::Paper,
                        })?,
                    }
                }
                RegimeArg::Desk => desk_table(a0.unwrap_or(0.1), delta.unwrap_or(0.3), eps, qmax)?,
            };
            for w in &table.warnings {
                eprintln!("warning: {w}");
            }
            let rep = verify_bounds(&table);
            let failures: Vec<_> = rep.failures().collect();
            eprintln!(
                "params: eps = {:e}, delta = {:e}, ln a0 = {:e}; {} checks, {} failing",
                table.eps,
                table.delta,
                table.log_a0,
                rep.entries.len(),
                failures.len()
            );
            for f in failures.iter().take(20) {
                eprintln!("  q = {}: {} (slack {:e})", f.q, f.name, f.slack_log);
            }
            io::save_params(&out, &table)?;
        }
        Cmd::BuildField { table, q, res, out } => {
            let t = io::load_params(&table)?;
            let (scale, need) = required_resolution(&t, q);
            let res = res.unwrap_or(need);
            let f = build_uq(&t, q, res)?;
            let h = io::SnapshotHeader {
                grid_res: res,
                q,
                table_hash: io::table_hash(&t)?,
            };
            io::write_file_atomic(&out, |w| io::write_field(w, &h, f.u()))?;
            eprintln!(
                "u_{q}: {res}², smallest scale {scale:.3e}, max speed {:.6}, Leray-removed fraction {:.3e}",
                f.u().max_speed(),
                f.leray_removed
            );
        }
        Cmd::Tree { table, q, out } => {
            let t = io::load_params(&table)?;
            let b = build_bq(&t, q)?;
            let tree = build_tree(&b)?;
            io::write_file_atomic(&out, |w| io::write_tree_json(w, &tree))?;
            eprintln!("tree of b_{q}: {} rectangles", tree.nodes.len());
        }
        Cmd::Solve {
            field,
            theta0,
            kappa,
            t_end,
            res,
            dt,
            out,
            snapshot,
        } => {
            let (h, u) = load_velocity(&field, res)?;
            let kind: Theta0Kind = theta0.parse()?;
            let th = Theta0::new(kind, u.n, Some(&u))?;
            let cfg = SolverConfig { dt, ..SolverConfig::default() };
            let uu = (u.max_speed() > 0.0).then_some(&u);
            let r = solve_adv_diff(uu, &th.grid, kappa, t_end, &cfg)?;
            io::write_file_atomic(&out, |w| io::write_run_csv(w, &r))?;
            if let Some(s) = snapshot {
                let hh = h.unwrap_or(io::SnapshotHeader {
                    grid_res: u.n,
                    q: 0,
                    table_hash: "none".into(),
                });
                io::write_file_atomic(&s, |w| io::write_scalar(w, &hh, &r.theta_final))?;
            }
            eprintln!(
                "solve: {} steps of {:.3e}, e(T) = {:.6e}, D(T) = {:.6e}, energy residual {:.3e}",
                r.steps,
                r.dt,
                r.final_energy(),
                r.final_cum_diss(),
                r.energy_residual
            );
            if !r.energy_ok() {
                return Err(Error::Numeric(format!(
                    "energy residual {:.3e} exceeds {:.1e}",
                    r.energy_residual, r.tol_energy
                )));
            }
        }
        Cmd::Mc {
            field,
            res,
            kappa,
            t_end,
            ntraj,
            dt,
            seed,
            starts,
            table,
            dcap,
            out,
        } => {
            let (h, u) = load_velocity(&field, res)?;
            let t = load_table_opt(&table)?;
            let pts = if let Some(m) = starts.strip_prefix("grid:") {
                grid_starts(m.parse().map_err(|_| Error::Config(format!("bad start grid '{m}'")))?)
            } else if let Some(q) = starts.strip_prefix("dset:") {
                let q: usize = q.parse().map_err(|_| Error::Config(format!("bad level '{q}'")))?;
                let t = t.as_ref().ok_or_else(|| Error::Config("dset starts need --table".into()))?;
                let b = build_bq(t, q)?;
                let tree = build_tree(&b)?;
                d_set_starts(&tree, &b, q, dcap, seed)?
            } else {
                let p = Path::new(&starts);
                io::read_starts_csv(File::open(p).map_err(cfg_err(p))?)?
            };
            let drift = Drift::grid(&u, field_min_scale(&u, h.as_ref(), t.as_ref()));
            let spec = EnsembleSpec::new(ntraj, dt, t_end, seed);
            let b = backward_flow_ensemble(&drift, kappa, &spec, &pts)?;
            io::write_file_atomic(&out, |w| io::write_mc_csv(w, &b))?;
            eprintln!("mc: {} starts × {ntraj} trajectories", pts.len());
        }
        Cmd::Fldiss {
            field,
            res,
            theta0,
            kappa,
            t_end,
            ntraj,
            dt,
            seed,
            m,
            table,
            out,
        } => {
            let (h, u) = load_velocity(&field, res)?;
            let t = load_table_opt(&table)?;
            let th = Theta0::new(theta0.parse()?, u.n, Some(&u))?;
            let drift = Drift::grid(&u, field_min_scale(&u, h.as_ref(), t.as_ref()));
            let spec = EnsembleSpec::new(ntraj, dt, t_end, seed);
            let uu = (u.max_speed() > 0.0).then_some(&u);
            let (rep, batch) = fldiss_check(&drift, uu, &th, kappa, &spec, m, &SolverConfig::default())?;
            if let Some(o) = out {
                io::write_file_atomic(&o, |w| io::write_mc_csv(w, &batch))?;
            }
            println!("{}", serde_json::to_string(&rep.line())?);
        }
        Cmd::Ladder {
            table,
            q,
            theta0,
            kappa_cap,
            t_end,
            out,
        } => {
            let t = io::load_params(&table)?;
            if q.is_empty() {
                return Err(Error::Config("--q needs at least one level".into()));
            }
            let res = q.iter().map(|&k| required_resolution(&t, k).1).max().unwrap_or(64);
            let fields = q.iter().map(|&k| build_uq(&t, k, res)).collect::<Result<Vec<_>>>()?;
            let kind: Theta0Kind = theta0.parse()?;
            let th = Theta0::new(kind, res, Some(fields[0].u()))?;
            let rungs: Vec<_> = q
                .iter()
                .zip(&fields)
                .map(|(&k, f)| {
                    let kap = t.level(k).kappa;
                    let kap = kappa_cap.map_or(kap, |c| kap.min(c));
                    (format!("u_{k}"), k, kap, Some(f.u()))
                })
                .collect();
            let rows = dissipation_ladder(&rungs, &th.grid, t_end, &SolverConfig::default())?;
            io::write_file_atomic(&out, |w| {
                let mut wr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
                wr.write_record(anodiss::pipeline::LADDER_HEADER)?;
                for r in &rows {
                    wr.write_record([
                        r.q.to_string(),
                        io::fmt_f64(r.kappa),
                        io::fmt_f64(r.e0),
                        io::fmt_f64(r.diss),
                        io::fmt_f64(r.ratio),
                        io::fmt_f64(r.energy_residual),
                    ])?;
                }
                wr.flush()?;
                Ok(())
            })?;
            for r in &rows {
                eprintln!("q = {}: kappa = {:.3e}, D(T)/e(0) = {:.6e}", r.q, r.kappa, r.ratio);
            }
        }
        Cmd::Ns3d {
            field,
            nu,
            theta0,
            t_end,
            out,
        } => {
            let (_, u) = io::load_field(&field)?;
            let th = Theta0::new(theta0.parse()?, u.n, Some(&u))?;
            let r = solve_adv_diff(Some(&u), &th.grid, nu, t_end, &SolverConfig::default())?;
            let ns = ns3d_assemble(&u, nu, &r)?;
            let mut w = create(&out)?;
            serde_json::to_writer_pretty(&mut w, &ns.report)?;
            writeln!(w)?;
            eprintln!(
                "ns3d: residual {:.3e} (theta energy residual {:.3e})",
                ns.report.residual, ns.report.theta_energy_residual
            );
        }
        Cmd::Report { dir } => {
            let s = report_render(&dir)?;
            eprintln!("wrote {} and {} plots", s.markdown.display(), s.plots.len());
            for m in &s.missing {
                eprintln!("  not drawn: {m}");
            }
        }
        Cmd::Run {
            config,
            builtin,
            set,
            print_config,
        } => {
            let mut cfg = match (config, builtin) {
                (Some(p), None) => {
                    ExperimentConfig::parse(&std::fs::read_to_string(&p).map_err(cfg_err(&p))?)?
                }
                (None, Some(b)) => ExperimentConfig::builtin(&b)?,
                (None, None) => ExperimentConfig::default(),
                (Some(_), Some(_)) => unreachable!("clap rejects both"),
            };
            for kv in &set {
                cfg.apply_override(kv)?;
            }
            cfg.validate()?;
            if print_config {
                print!("{}", cfg.serialize());
                return Ok(());
            }
            let m = run_pipeline(&cfg, &mut |s| eprintln!("{s}"))?;
            eprintln!(
                "pipeline '{}' done: {} steps ({} skipped), manifest in {}",
                cfg.name,
                m.steps.len(),
                m.steps.iter().filter(|s| s.skipped).count(),
                cfg.out_dir.display()
            );
        }
    }
    Ok(())
}

fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var("ANODISS_THREADS") {
        let n: usize = v
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Error::Config(format!("ANODISS_THREADS = '{v}' is not a positive integer")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match init_threads().and_then(|_| run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
