//! Markdown summary and SVG line plots of a run directory, generated from
//! the CSV/JSON outputs alone.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::io;
use crate::pipeline::{LADDER_FILE, LADDER_HEADER, PARAMS_FILE};

pub const REPORT_FILE: &str = "report.md";

/// Files the renderer looks for.
pub const EXPECTED: [&str; 7] = [
    "params.csv",
    "run_q*_k*.csv",
    "ladder.csv",
    "fldiss_q*_k*.json",
    "variance_q*.json",
    "ns3d_q*.json",
    "tree_q*.json",
];

/// What [`report_render`] produced.
#[derive(Clone, Debug, PartialEq)]
pub struct ReportSummary {
    pub markdown: PathBuf,
    pub plots: Vec<PathBuf>,
    /// One line per plot that could not be drawn.
    pub missing: Vec<String>,
}

/// One polyline of a plot.
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

const W: f64 = 640.0;
const H: f64 = 400.0;
const M: f64 = 60.0;

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// A minimal SVG line chart; `log_x`/`log_y` plot log10 of positive values.
pub fn line_plot_svg(title: &str, xlabel: &str, ylabel: &str, series: &[Series], log_x: bool, log_y: bool) -> String {
    let tx = |x: f64| if log_x { x.log10() } else { x };
    let ty = |y: f64| if log_y { y.log10() } else { y };
    let pts: Vec<Vec<(f64, f64)>> = series
        .iter()
        .map(|s| {
            s.points
                .iter()
                .filter(|(x, y)| (!log_x || *x > 0.0) && (!log_y || *y > 0.0))
                .map(|&(x, y)| (tx(x), ty(y)))
                .filter(|(x, y)| x.is_finite() && y.is_finite())
                .collect()
        })
        .collect();
    let all = pts.iter().flatten();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !(x0.is_finite() && y0.is_finite()) {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 == x0 {
        x1 = x0 + 1.0;
    }
    if y1 == y0 {
        let pad = if y0 == 0.0 { 1.0 } else { y0.abs() * 0.1 };
        y0 -= pad;
        y1 += pad;
    }
    let px = |x: f64| M + (x - x0) / (x1 - x0) * (W - 2.0 * M);
    let py = |y: f64| H - M - (y - y0) / (y1 - y0) * (H - 2.0 * M);
    let colours = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="16">{}</text>"#,
        W / 2.0,
        esc(title)
    );
    let _ = writeln!(
        s,
        r#"<line x1="{M}" y1="{}" x2="{}" y2="{}" stroke="black"/><line x1="{M}" y1="{M}" x2="{M}" y2="{}" stroke="black"/>"#,
        H - M,
        W - M,
        H - M,
        H - M
    );
    let lx = if log_x { format!("log10 {xlabel}") } else { xlabel.to_string() };
    let ly = if log_y { format!("log10 {ylabel}") } else { ylabel.to_string() };
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle" font-size="12">{}</text>"#,
        W / 2.0,
        H - 15.0,
        esc(&lx)
    );
    let _ = writeln!(
        s,
        r#"<text x="15" y="{}" text-anchor="middle" font-size="12" transform="rotate(-90 15 {})">{}</text>"#,
        H / 2.0,
        H / 2.0,
        esc(&ly)
    );
    for (v, anchor, x, y) in [
        (x0, "start", M, H - M + 16.0),
        (x1, "end", W - M, H - M + 16.0),
    ] {
        let _ = writeln!(s, r#"<text x="{x}" y="{y}" text-anchor="{anchor}" font-size="10">{v:.4e}</text>"#);
    }
    for (v, y) in [(y0, H - M), (y1, M)] {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{y}" text-anchor="end" font-size="10">{v:.4e}</text>"#,
            M - 4.0
        );
    }
    for (k, (ser, p)) in series.iter().zip(&pts).enumerate() {
        let c = colours[k % colours.len()];
        let coords: Vec<String> = p.iter().map(|&(x, y)| format!("{:.3},{:.3}", px(x), py(y))).collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{c}" stroke-width="1.5" points="{}"/>"#,
            coords.join(" ")
        );
        if p.len() <= 32 {
            for &(x, y) in p {
                let _ = writeln!(s, r#"<circle cx="{:.3}" cy="{:.3}" r="3" fill="{c}"/>"#, px(x), py(y));
            }
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="11" fill="{c}">{}</text>"#,
            W - M - 150.0,
            M + 14.0 * (k as f64 + 1.0),
            esc(&ser.label)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn sorted_matching(dir: &Path, prefix: &str, suffix: &str) -> Result<Vec<String>> {
    let mut v: Vec<String> = fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .filter_map(|e| e.file_name().into_string().ok())
        .filter(|n| n.starts_with(prefix) && n.ends_with(suffix))
        .collect();
    v.sort();
    Ok(v)
}

fn read_json(path: &Path) -> Result<serde_json::Value> {
    Ok(serde_json::from_reader(File::open(path)?)?)
}

fn num(v: &serde_json::Value, key: &str) -> String {
    match v.get(key) {
        Some(serde_json::Value::Number(n)) => format!("{:.6e}", n.as_f64().unwrap_or(f64::NAN)),
        Some(serde_json::Value::Bool(b)) => b.to_string(),
        Some(x) => x.to_string(),
        None => "—".into(),
    }
}

/// Renders `report.md` and the SVG plots for a completed run directory.
pub fn report_render(dir: &Path) -> Result<ReportSummary> {
    if !dir.is_dir() {
        return Err(Error::Config(format!("{} is not a directory", dir.display())));
    }
    let runs = sorted_matching(dir, "run_", ".csv")?;
    let fldiss = sorted_matching(dir, "fldiss_", ".json")?;
    let variance = sorted_matching(dir, "variance_", ".json")?;
    let ns3d = sorted_matching(dir, "ns3d_", ".json")?;
    let trees = sorted_matching(dir, "tree_", ".json")?;
    let has_params = dir.join(PARAMS_FILE).exists();
    let has_ladder = dir.join(LADDER_FILE).exists();
    if runs.is_empty() && fldiss.is_empty() && variance.is_empty() && ns3d.is_empty() && trees.is_empty() && !has_params && !has_ladder {
        return Err(Error::Config(format!(
            "{} contains no run outputs; expected any of: {}",
            dir.display(),
            EXPECTED.join(", ")
        )));
    }
    let mut md = String::new();
    let mut plots = Vec::new();
    let mut missing = Vec::new();
    let title = fs::read_to_string(dir.join(crate::pipeline::CONFIG_COPY))
        .ok()
        .and_then(|c| c.lines().find_map(|l| l.strip_prefix("name = ").map(str::to_owned)))
        .unwrap_or_else(|| dir.display().to_string());
    let _ = writeln!(md, "# Run report: {title}\n");

    if has_params {
        let t = io::load_params(&dir.join(PARAMS_FILE))?;
        let _ = writeln!(md, "## Parameters\n");
        let _ = writeln!(md, "a0 = {:.6e}, eps = {:.6e}, delta = {:.6e}, regime = {:?}\n", t.a0(), t.eps, t.delta, t.regime);
        let _ = writeln!(md, "| q | a_q | n_q | A_q | B_q | L_q | v_q | kappa_q | ell_q |");
        let _ = writeln!(md, "|---|---|---|---|---|---|---|---|---|");
        for r in &t.rows {
            let _ = writeln!(
                md,
                "| {} | {:.4e} | {:.4e} | {:.4e} | {:.4e} | {:.4e} | {:.4e} | {:.4e} | {:.4e} |",
                r.q,
                r.log_a.exp(),
                r.log_n_rounded.exp(),
                r.log_big_a.exp(),
                r.log_b.exp(),
                r.log_l.exp(),
                r.log_v.exp(),
                r.log_kappa.exp(),
                r.log_ell.exp()
            );
        }
        md.push('\n');
    }

    if !trees.is_empty() {
        let _ = writeln!(md, "## Rectangle trees\n");
        let _ = writeln!(md, "| file | rectangles | levels |");
        let _ = writeln!(md, "|---|---|---|");
        for f in &trees {
            let recs = io::read_tree_json(File::open(dir.join(f))?)?;
            let levels = recs.iter().map(|r| r.level).max().map_or(0, |l| l + 1);
            let _ = writeln!(md, "| {f} | {} | {levels} |", recs.len());
        }
        md.push('\n');
    }

    if runs.is_empty() {
        missing.push("energy plots: no run_q*_k*.csv".to_string());
    } else {
        let _ = writeln!(md, "## Scalar runs\n");
        let _ = writeln!(md, "| run | e(0) | e(T) | D(T) | D(T)/e(0) | energy residual |");
        let _ = writeln!(md, "|---|---|---|---|---|---|");
        for f in &runs {
            let rows = io::read_run_csv(File::open(dir.join(f))?)?;
            let (Some(a), Some(b)) = (rows.first(), rows.last()) else {
                missing.push(format!("energy plot for {f}: file has no rows"));
                continue;
            };
            let (_, rel) = crate::pipeline::energy_residual_of(&rows);
            let ratio = if a.energy > 0.0 { b.cum_diss / a.energy } else { 0.0 };
            let _ = writeln!(
                md,
                "| {f} | {:.6e} | {:.6e} | {:.6e} | {:.6e} | {:.3e} |",
                a.energy, b.energy, b.cum_diss, ratio, rel
            );
            let stem = f.trim_end_matches(".csv");
            let svg = line_plot_svg(
                &format!("energy and cumulative dissipation, {stem}"),
                "t",
                "value",
                &[
                    Series {
                        label: "e(t)".into(),
                        points: rows.iter().map(|r| (r.t, r.energy)).collect(),
                    },
                    Series {
                        label: "D(t)".into(),
                        points: rows.iter().map(|r| (r.t, r.cum_diss)).collect(),
                    },
                ],
                false,
                false,
            );
            let p = dir.join(format!("{stem}_energy.svg"));
            fs::write(&p, svg)?;
            let _ = writeln!(md, "\n![{stem}]({stem}_energy.svg)\n");
            plots.push(p);
        }
        md.push('\n');
    }

    if has_ladder {
        let mut rd = csv::Reader::from_reader(File::open(dir.join(LADDER_FILE))?);
        if rd.headers()?.iter().ne(LADDER_HEADER.iter().copied()) {
            return Err(Error::Config(format!("{LADDER_FILE}: unexpected header")));
        }
        let _ = writeln!(md, "## Dissipation ladder\n");
        let _ = writeln!(md, "| q | kappa | D(T)/e(0) | energy residual |");
        let _ = writeln!(md, "|---|---|---|---|");
        let mut by_q: Vec<(usize, Vec<(f64, f64)>)> = Vec::new();
        for rec in rd.records() {
            let rec = rec?;
            let q: usize = rec[0].parse().map_err(|_| Error::Config(format!("{LADDER_FILE}: bad q")))?;
            let f = |k: usize| rec[k].parse::<f64>().map_err(|_| Error::Config(format!("{LADDER_FILE}: bad number")));
            let (kappa, ratio, res) = (f(1)?, f(4)?, f(5)?);
            let _ = writeln!(md, "| {q} | {kappa:.4e} | {ratio:.6e} | {res:.3e} |");
            match by_q.iter_mut().find(|(qq, _)| *qq == q) {
                Some((_, v)) => v.push((kappa, ratio)),
                None => by_q.push((q, vec![(kappa, ratio)])),
            }
        }
        let series: Vec<Series> = by_q
            .into_iter()
            .map(|(q, mut pts)| {
                pts.sort_by(|a, b| a.0.total_cmp(&b.0));
                Series {
                    label: format!("q = {q}"),
                    points: pts,
                }
            })
            .collect();
        let p = dir.join("dissipation_vs_kappa.svg");
        fs::write(&p, line_plot_svg("D(T)/e(0) against kappa", "kappa", "D(T)/e(0)", &series, true, false))?;
        let _ = writeln!(md, "\n![dissipation vs kappa](dissipation_vs_kappa.svg)\n");
        plots.push(p);
    } else {
        missing.push(format!("dissipation vs kappa: missing {LADDER_FILE}"));
    }

    if !fldiss.is_empty() {
        let _ = writeln!(md, "## Fluctuation–dissipation checks\n");
        let _ = writeln!(md, "| file | lhs | rhs | mc_se | pde_tol | rel_err | agrees |");
        let _ = writeln!(md, "|---|---|---|---|---|---|---|");
        for f in &fldiss {
            let v = read_json(&dir.join(f))?;
            let _ = writeln!(
                md,
                "| {f} | {} | {} | {} | {} | {} | {} |",
                num(&v, "lhs"),
                num(&v, "rhs"),
                num(&v, "mc_se"),
                num(&v, "pde_tol"),
                num(&v, "rel_err"),
                num(&v, "agrees")
            );
        }
        md.push('\n');
    }

    if variance.is_empty() {
        missing.push("variance vs q: no variance_q*.json".to_string());
    } else {
        let _ = writeln!(md, "## Endpoint variance on the dissipative sets\n");
        let _ = writeln!(md, "| q | kappa | starts | min variance | mean variance | 4 kappa T | |D_q| |");
        let _ = writeln!(md, "|---|---|---|---|---|---|---|");
        let mut pts = Vec::new();
        for f in &variance {
            let v = read_json(&dir.join(f))?;
            let _ = writeln!(
                md,
                "| {} | {} | {} | {} | {} | {} | {} |",
                v["q"],
                num(&v, "kappa"),
                v["n_starts"],
                num(&v, "min_variance"),
                num(&v, "mean_variance"),
                num(&v, "brownian"),
                num(&v, "d_measure")
            );
            if let (Some(q), Some(m)) = (v["q"].as_f64(), v["min_variance"].as_f64()) {
                pts.push((q, m));
            }
        }
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let p = dir.join("variance_vs_q.svg");
        fs::write(
            &p,
            line_plot_svg(
                "minimum endpoint variance over D_q",
                "q",
                "min variance",
                &[Series {
                    label: "min over starts".into(),
                    points: pts,
                }],
                false,
                false,
            ),
        )?;
        let _ = writeln!(md, "\n![variance vs q](variance_vs_q.svg)\n");
        plots.push(p);
    }

    if !ns3d.is_empty() {
        let _ = writeln!(md, "## 2½-dimensional Navier–Stokes residuals\n");
        let _ = writeln!(md, "| file | nu | velocity residual (rel) | theta residual | residual |");
        let _ = writeln!(md, "|---|---|---|---|---|");
        for f in &ns3d {
            let v = read_json(&dir.join(f))?;
            let _ = writeln!(
                md,
                "| {f} | {} | {} | {} | {} |",
                num(&v, "nu"),
                num(&v, "velocity_residual_rel"),
                num(&v, "theta_residual"),
                num(&v, "residual")
            );
        }
        md.push('\n');
    }

    if !missing.is_empty() {
        let _ = writeln!(md, "## Plots not drawn\n");
        for m in &missing {
            let _ = writeln!(md, "- {m}");
        }
    }
    let markdown = dir.join(REPORT_FILE);
    fs::write(&markdown, md)?;
    Ok(ReportSummary { markdown, plots, missing })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{ExperimentConfig, KappaSource};
    use crate::pipeline::run_pipeline;

    fn polyline_ys(svg: &str) -> Vec<f64> {
        let start = svg.find("points=\"").unwrap() + 8;
        let end = start + svg[start..].find('"').unwrap();
        svg[start..end]
            .split(' ')
            .map(|p| p.split(',').nth(1).unwrap().parse().unwrap())
            .collect()
    }

    #[test]
    fn heat_run_plots_a_decreasing_energy() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = ExperimentConfig::builtin("heat").unwrap();
        c.out_dir = dir.path().to_path_buf();
        c.kappa = KappaSource::List(vec![1e-2, 1e-3]);
        run_pipeline(&c, &mut |_| {}).unwrap();
        let r = report_render(dir.path()).unwrap();
        let svg = fs::read_to_string(dir.path().join("run_q0_k0_energy.svg")).unwrap();
        let ys = polyline_ys(&svg);
        assert!(ys.len() > 10);
        // SVG y grows downwards: a decreasing e(t) has increasing y
        assert!(ys.windows(2).all(|w| w[1] >= w[0]));
        assert!(ys.last().unwrap() > ys.first().unwrap());
        let md = fs::read_to_string(&r.markdown).unwrap();
        assert!(md.contains("## Dissipation ladder"));
        assert!(md.contains("| 0 | 1.0000e-2 |"));
        assert!(r.plots.iter().any(|p| p.ends_with("dissipation_vs_kappa.svg")));
        assert_eq!(r.missing, vec!["variance vs q: no variance_q*.json".to_string()]);
    }

    #[test]
    fn empty_directory_lists_the_expected_files() {
        let dir = tempfile::tempdir().unwrap();
        match report_render(dir.path()) {
            Err(Error::Config(m)) => {
                for f in EXPECTED {
                    assert!(m.contains(f), "{m}");
                }
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn svg_handles_degenerate_data() {
        let s = line_plot_svg("t", "x", "y", &[Series { label: "<a>".into(), points: vec![(1.0, 2.0)] }], true, true);
        assert!(s.contains("&lt;a&gt;"));
        assert!(s.ends_with("</svg>\n"));
        let e = line_plot_svg("t", "x", "y", &[], false, false);
        assert!(e.contains("<svg"));
    }
}
