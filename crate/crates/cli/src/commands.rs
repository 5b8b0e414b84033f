use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use gossiplab::analysis::{self, EpsilonReport, SpectralReport};
use gossiplab::graph::{self, DiGraph};
use gossiplab::protocol::{build_scheme, ParamScheme, SchemeKind};
use gossiplab::sim::{self, fmt_float, SeriesMode};
use gossiplab::spectra::{ComplexSpectrum, C64};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{parse_scheme_list, slug, EpsilonSpec, ResolvedEpsilon, Settings};
use crate::error::CliError;
use crate::svg;

const GRAPH_KEYS: &[&str] = &["graph", "n", "radius", "p_asym", "graph_seed"];

/// Output context shared by all commands.
pub struct Workspace {
    pub out_dir: PathBuf,
}

impl Workspace {
    pub fn path(&self, rel: &str) -> PathBuf {
        self.out_dir.join(rel)
    }

    fn create(&self, rel: &str) -> Result<(PathBuf, BufWriter<File>), CliError> {
        fs::create_dir_all(&self.out_dir)?;
        let path = self.path(rel);
        let file = File::create(&path)
            .map_err(|e| CliError::Config(format!("cannot create {}: {e}", path.display())))?;
        Ok((path, BufWriter::new(file)))
    }
}

fn keys(groups: &[&[&'static str]]) -> Vec<&'static str> {
    groups.iter().flat_map(|g| g.iter().copied()).collect()
}

fn radius_for(settings: &Settings, n: usize) -> Result<f64, CliError> {
    match settings.require("radius")? {
        "auto" => Ok(graph::auto_radius(n)),
        _ => settings.parse("radius"),
    }
}

/// Loads the configured graph or generates one. Fills `graph_seed` in when
/// generating so headers are complete.
pub fn obtain_graph(settings: &mut Settings, ws: &Workspace) -> Result<DiGraph, CliError> {
    if let Some(path) = settings.get("graph") {
        let g = DiGraph::read_edge_list(ws.path(path))?;
        if !g.is_strongly_connected() {
            return Err(CliError::Config(format!("graph {path} is not strongly connected")));
        }
        return Ok(g);
    }
    if settings.get("graph_seed").is_none() {
        let seed = settings.require("seed")?.to_string();
        settings.set("graph_seed", seed);
    }
    generate_graph(settings)
}

fn generate_graph(settings: &Settings) -> Result<DiGraph, CliError> {
    let n: usize = settings.parse("n")?;
    let radius = radius_for(settings, n)?;
    let p_asym: f64 = settings.parse("p_asym")?;
    let seed: u64 = settings.parse("graph_seed")?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = graph::random_geometric_graph(n, radius, &mut rng)?;
    Ok(graph::directify(&g, p_asym, &mut rng)?)
}

fn build(
    kind: SchemeKind,
    g: &DiGraph,
    eps: f64,
    settings: &Settings,
    ws: &Workspace,
) -> Result<ParamScheme, CliError> {
    let gamma: f64 = settings.parse("gamma")?;
    let eps = if kind == SchemeKind::Classic { 0.0 } else { eps };
    let scheme = build_scheme(kind, g, eps, gamma)?;
    match settings.get("mixing") {
        Some(path) => Ok(scheme.with_custom_a(read_mixing(&ws.path(path), g.n())?)?),
        None => Ok(scheme),
    }
}

/// Reads `j k a` lines (1-based receiver, transmitter, weight); `#` starts a
/// comment. Unlisted pairs are zero.
fn read_mixing(path: &std::path::Path, n: usize) -> Result<DMatrix<f64>, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut a = DMatrix::zeros(n, n);
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let bad = || CliError::Config(format!("{} line {}: expected `j k a`", path.display(), i + 1));
        let f: Vec<&str> = line.split_whitespace().collect();
        let [j, k, w] = f[..] else { return Err(bad()) };
        let j: usize = j.parse().map_err(|_| bad())?;
        let k: usize = k.parse().map_err(|_| bad())?;
        let w: f64 = w.parse().map_err(|_| bad())?;
        if !(1..=n).contains(&j) || !(1..=n).contains(&k) {
            return Err(bad());
        }
        a[(j - 1, k - 1)] = w;
    }
    Ok(a)
}

fn write_header<W: Write>(w: &mut W, header: &[String]) -> Result<(), CliError> {
    for line in header {
        writeln!(w, "# {line}")?;
    }
    Ok(())
}

pub fn generate(mut settings: Settings, ws: &Workspace) -> Result<(), CliError> {
    if settings.get("graph_seed").is_none() {
        let seed = settings.require("seed")?.to_string();
        settings.set("graph_seed", seed);
    }
    let output = settings.get("output").unwrap_or("graph.txt").to_string();
    settings.set("output", output.clone());
    let g = generate_graph(&settings)?;
    let n = g.n();
    let radius = radius_for(&settings, n)?;
    let xi = analysis::laplacian_spectrum(&g)?;

    let header = settings.header("generate", &["n", "radius", "p_asym", "graph_seed", "output"]);
    let (path, mut w) = ws.create(&output)?;
    write_header(&mut w, &header)?;
    w.write_all(g.to_edge_list().as_bytes())?;
    w.flush()?;

    println!("n={n}");
    println!("radius={radius}");
    println!("edges={}", g.edge_count());
    println!("symmetric={}", g.is_symmetric());
    println!("strongly_connected={}", g.is_strongly_connected());
    println!("xi2={}", fmt_c(xi.values()[1]));
    println!("xi_n={}", fmt_c(xi.values()[n - 1]));
    println!("wrote {}", path.display());
    Ok(())
}

fn fmt_c(z: C64) -> String {
    if z.im == 0.0 {
        fmt_float(z.re)
    } else {
        format!("{}{:+.16e}i", fmt_float(z.re), z.im)
    }
}

fn pairs(s: &ComplexSpectrum) -> Vec<[f64; 2]> {
    s.values().iter().map(|z| [z.re, z.im]).collect()
}

#[derive(Serialize)]
struct SecondMomentJson {
    rho: f64,
    left_residual: f64,
    right_residual: f64,
    pass: bool,
}

#[derive(Serialize)]
struct GuidanceJson {
    laplacian_spectrum: Vec<[f64; 2]>,
    spectrum_real: bool,
    eta_formula: Option<f64>,
    eta_practical: f64,
    epsilon_star: f64,
    lambda2_at_star: f64,
    approximate: bool,
}

#[derive(Serialize)]
struct ReportJson {
    version: &'static str,
    command: &'static str,
    config: BTreeMap<String, String>,
    n: usize,
    scheme: String,
    epsilon: f64,
    epsilon_note: Option<String>,
    gamma: Option<f64>,
    expected_spectrum: Vec<[f64; 2]>,
    is_simple_one: bool,
    second_largest_modulus: f64,
    second_largest_value: [f64; 2],
    w1: Option<Vec<f64>>,
    w2: Option<Vec<f64>>,
    guidance: Option<GuidanceJson>,
    second_moment: Option<SecondMomentJson>,
}

fn resolve_epsilon(
    kind: SchemeKind,
    spec: EpsilonSpec,
    report: &EpsilonReport,
) -> ResolvedEpsilon {
    if kind == SchemeKind::Classic {
        return ResolvedEpsilon {
            value: 0.0,
            note: Some("classic scheme runs with inert companions".into()),
        };
    }
    spec.resolve(report)
}

pub fn analyze(mut settings: Settings, ws: &Workspace) -> Result<(), CliError> {
    let g = obtain_graph(&mut settings, ws)?;
    let n = g.n();
    let kind = settings.scheme()?;
    let guidance = analysis::epsilon_report(&g)?;
    let eps = resolve_epsilon(kind, settings.epsilon_spec()?, &guidance);
    let scheme = build(kind, &g, eps.value, &settings, ws)?;
    let report = analysis::classify_expectation(&scheme)?;
    let grid = settings.grid()?;

    let second_moment = match settings.get("check") {
        None | Some("none") => None,
        Some("second-moment") => {
            if kind == SchemeKind::Classic {
                return Err(CliError::Config("second-moment check needs a companion scheme".into()));
            }
            let v = analysis::stationary_vector(&scheme.b)?;
            let sm = analysis::second_moment_matrix(&scheme, &v)?;
            let (l, r) = sm.eigenvector_residuals();
            let rho = sm.spectral_radius()?;
            Some(SecondMomentJson {
                rho,
                left_residual: l,
                right_residual: r,
                pass: rho < 1.0,
            })
        }
        Some(other) => return Err(CliError::Config(format!("unknown check `{other}` (none or second-moment)"))),
    };

    let cfg_keys = keys(&[GRAPH_KEYS, &["scheme", "epsilon", "gamma", "mixing", "grid", "check"]]);
    print_spectral(&settings, kind, &eps, &report, n);
    if kind != SchemeKind::Classic {
        print_guidance(&guidance);
    } else {
        println!("eta, epsilon_star: not reported (formulas hold for BBGA weights)");
    }
    if let Some(sm) = &second_moment {
        println!(
            "second_moment_rho={} residuals=({:.3e}, {:.3e})",
            fmt_float(sm.rho),
            sm.left_residual,
            sm.right_residual
        );
        println!("rho<1: {}", if sm.pass { "PASS" } else { "FAIL" });
    }

    let json = ReportJson {
        version: env!("CARGO_PKG_VERSION"),
        command: "analyze",
        config: settings.subset(&cfg_keys),
        n,
        scheme: kind.to_string(),
        epsilon: eps.value,
        epsilon_note: eps.note.clone(),
        gamma: (kind == SchemeKind::Classic).then_some(scheme.gamma),
        expected_spectrum: pairs(&report.spectrum),
        is_simple_one: report.is_simple_one,
        second_largest_modulus: report.second_largest_modulus,
        second_largest_value: [report.second_largest_value.re, report.second_largest_value.im],
        w1: report.w1.as_ref().map(|w| w.iter().copied().collect()),
        w2: report.w2.as_ref().map(|w| w.iter().copied().collect()),
        guidance: (kind != SchemeKind::Classic).then(|| GuidanceJson {
            laplacian_spectrum: pairs(&guidance.xi),
            spectrum_real: guidance.spectrum_real,
            eta_formula: guidance.eta_formula,
            eta_practical: guidance.eta_practical,
            epsilon_star: guidance.epsilon_star,
            lambda2_at_star: guidance.lambda2_at_star,
            approximate: guidance.approximate,
        }),
        second_moment,
    };
    let (json_path, mut w) = ws.create("report.json")?;
    serde_json::to_writer_pretty(&mut w, &json)?;
    writeln!(w)?;
    w.flush()?;

    // One CSV row per analysed perturbation value.
    let rows: Vec<(f64, f64, bool)> = match (&grid, kind) {
        (Some(grid), k) if k != SchemeKind::Classic => analysis::analytic_sweep(&scheme, grid)?
            .into_iter()
            .map(|p| (p.epsilon, p.second_largest_modulus, p.is_simple_one))
            .collect(),
        _ => vec![(eps.value, report.second_largest_modulus, report.is_simple_one)],
    };
    let (csv_path, mut w) = ws.create("report.csv")?;
    write_header(&mut w, &settings.header("analyze", &cfg_keys))?;
    writeln!(w, "epsilon,second_largest_modulus,is_simple_one,eta,epsilon_star")?;
    let (eta, star) = if kind == SchemeKind::Classic {
        ("NA".to_string(), "NA".to_string())
    } else {
        (
            guidance.eta_formula.map(fmt_float).unwrap_or_else(|| "NA".into()),
            fmt_float(guidance.epsilon_star),
        )
    };
    for (e, m, simple) in rows {
        writeln!(w, "{},{},{simple},{eta},{star}", fmt_float(e), fmt_float(m))?;
    }
    w.flush()?;
    println!("wrote {}", json_path.display());
    println!("wrote {}", csv_path.display());
    Ok(())
}

fn print_spectral(settings: &Settings, kind: SchemeKind, eps: &ResolvedEpsilon, r: &SpectralReport, n: usize) {
    println!("n={n} scheme={kind} epsilon={}", fmt_float(eps.value));
    if kind == SchemeKind::Classic {
        println!("gamma={}", settings.get("gamma").unwrap_or("?"));
    }
    if let Some(note) = &eps.note {
        println!("epsilon_note={note}");
    }
    println!("is_simple_one={}", r.is_simple_one);
    println!(
        "second_largest_modulus={} second_largest_value={}",
        fmt_float(r.second_largest_modulus),
        fmt_c(r.second_largest_value)
    );
    match &r.w1 {
        Some(w1) => println!(
            "consensus prediction: w1^T x0 with w1 in [{}, {}]",
            fmt_float(w1.min()),
            fmt_float(w1.max())
        ),
        None => println!("consensus prediction: unavailable (1 is not simple and dominant)"),
    }
}

fn print_guidance(g: &EpsilonReport) {
    println!("xi2={} xi_n={} spectrum_real={}", fmt_c(g.xi2()), fmt_c(g.xi_n()), g.spectrum_real);
    match g.eta_formula {
        Some(eta) => println!("eta={} eta_practical={}", fmt_float(eta), fmt_float(g.eta_practical)),
        None => println!("eta=NA eta_practical={}", fmt_float(g.eta_practical)),
    }
    println!(
        "epsilon_star={} lambda2_at_star={}{}",
        fmt_float(g.epsilon_star),
        fmt_float(g.lambda2_at_star),
        if g.approximate { " (approximate)" } else { "" }
    );
}

const RUN_KEYS: &[&str] = &["init", "trials", "threshold", "stop", "max_iters", "stride", "seed"];

pub fn sweep(mut settings: Settings, ws: &Workspace) -> Result<(), CliError> {
    if settings.get("grid").is_none() {
        settings.set("grid", "default");
    }
    let g = obtain_graph(&mut settings, ws)?;
    let kind = settings.scheme()?;
    if kind == SchemeKind::Classic {
        return Err(CliError::Config("the classic scheme has no perturbation to sweep".into()));
    }
    let output = settings
        .get("output")
        .map(str::to_string)
        .unwrap_or_else(|| format!("sweep_{kind}.csv"));
    settings.set("output", output.clone());
    let grid = settings.grid()?.expect("grid set above");
    let trials: usize = settings.parse("trials")?;
    let seed: u64 = settings.parse("seed")?;
    let init = settings.init()?;
    let mut config = settings.trial_config()?;
    config.check_mass = kind.is_unbiased();
    config.series = SeriesMode::None;

    let base = build(kind, &g, grid[0], &settings, ws)?;
    let points = sim::epsilon_sweep(&base, &g, &grid, init, trials, &config, seed)?;
    let analytic = analysis::analytic_sweep(&base, &grid)?;
    let lambda: Vec<f64> = analytic.iter().map(|p| p.second_largest_modulus).collect();

    let cfg_keys = keys(&[GRAPH_KEYS, &["scheme", "gamma", "mixing", "grid"], RUN_KEYS, &["output"]]);
    let (path, mut w) = ws.create(&output)?;
    sim::write_sweep_csv(&mut w, &settings.header("sweep", &cfg_keys), &points, Some(&lambda))?;
    w.flush()?;

    let guidance = analysis::epsilon_report(&g)?;
    let best = points
        .iter()
        .min_by(|a, b| a.aggregate.mean_broadcasts.total_cmp(&b.aggregate.mean_broadcasts))
        .expect("non-empty grid");
    let best_analytic = analytic
        .iter()
        .min_by(|a, b| a.second_largest_modulus.total_cmp(&b.second_largest_modulus))
        .expect("non-empty grid");
    println!("scheme={kind} points={} trials={trials}", grid.len());
    println!(
        "empirical_argmin={} mean_broadcasts={}",
        fmt_float(best.epsilon),
        fmt_float(best.aggregate.mean_broadcasts)
    );
    println!("analytic_argmin={}", fmt_float(best_analytic.epsilon));
    println!(
        "epsilon_star={}{}",
        fmt_float(guidance.epsilon_star),
        if guidance.approximate { " (approximate)" } else { "" }
    );
    println!("wrote {}", path.display());
    let failed: usize = points.iter().map(|p| p.aggregate.failed).sum();
    if failed > 0 {
        return Err(CliError::Numerical(format!("{failed} trials failed")));
    }
    Ok(())
}

pub fn simulate(mut settings: Settings, ws: &Workspace) -> Result<(), CliError> {
    let g = obtain_graph(&mut settings, ws)?;
    let entries = parse_scheme_list(settings.require("schemes")?)?;
    let default_eps = settings.epsilon_spec()?;
    let trials: usize = settings.parse("trials")?;
    let seed: u64 = settings.parse("seed")?;
    let init = settings.init()?;
    let base_config = settings.trial_config()?;
    let per_trial = settings.flag("per_trial")?;
    let want_svg = settings.flag("svg")?;
    let guidance = analysis::epsilon_report(&g)?;

    let cfg_keys = keys(&[
        GRAPH_KEYS,
        &["schemes", "epsilon", "gamma", "mixing", "series", "per_trial", "svg"],
        RUN_KEYS,
    ]);
    let header = settings.header("simulate", &cfg_keys);

    let mut summary = Vec::new();
    let mut curves = Vec::new();
    let mut failed_total = 0;
    for entry in &entries {
        let eps = resolve_epsilon(entry.kind, entry.epsilon.unwrap_or(default_eps), &guidance);
        let scheme = build(entry.kind, &g, eps.value, &settings, ws)?;
        let mut config = base_config.clone();
        config.check_mass = entry.kind.is_unbiased();
        let mc = sim::monte_carlo(&scheme, &g, init, trials, &config, seed)?;
        let traj = sim::aggregate_trajectory(&mc.records);

        let mut scheme_header = header.clone();
        scheme_header.push(format!("scheme_entry={} resolved_epsilon={}", entry.label, fmt_float(eps.value)));
        if let Some(note) = &eps.note {
            scheme_header.push(format!("epsilon_note={note}"));
        }
        let name = slug(&entry.label);
        let (path, mut w) = ws.create(&format!("traj_{name}.csv"))?;
        sim::write_aggregate_csv(&mut w, &scheme_header, &traj)?;
        w.flush()?;
        println!("wrote {}", path.display());
        if per_trial {
            for (i, rec) in mc.records.iter().enumerate() {
                let mut h = scheme_header.clone();
                h.push(format!("trial={i} trial_seed={}", rec.seed.unwrap_or_default()));
                let (_, mut w) = ws.create(&format!("traj_{name}_trial{i:04}.csv"))?;
                sim::write_trajectory_csv(&mut w, &h, rec)?;
                w.flush()?;
            }
        }
        failed_total += mc.aggregate.failed;
        curves.push(svg::Series {
            label: entry.label.clone(),
            points: traj.iter().map(|&(t, r, _)| (t as f64, r)).collect(),
        });
        summary.push((entry.label.clone(), eps.value, mc.aggregate));
    }

    let (path, mut w) = ws.create("summary.csv")?;
    write_header(&mut w, &header)?;
    writeln!(
        w,
        "scheme,epsilon,mean_broadcasts,median_broadcasts,mean_q_final,mean_r_final,trials,converged,failed"
    )?;
    println!("{:<24} {:>12} {:>16} {:>12} {:>12}", "scheme", "epsilon", "mean_broadcasts", "mean_r", "mean_q");
    for (label, eps, a) in &summary {
        writeln!(
            w,
            "{label},{},{},{},{},{},{},{},{}",
            fmt_float(*eps),
            fmt_float(a.mean_broadcasts),
            fmt_float(a.median_broadcasts),
            fmt_float(a.mean_q_final),
            fmt_float(a.mean_r_final),
            a.trials,
            a.converged,
            a.failed
        )?;
        println!(
            "{label:<24} {eps:>12.6} {:>16.1} {:>12.3e} {:>12.3e}",
            a.mean_broadcasts, a.mean_r_final, a.mean_q_final
        );
    }
    w.flush()?;
    println!("wrote {}", path.display());

    if want_svg {
        let chart = svg::log_line_chart("mean r(t)", "broadcasts", "r(t)", &curves);
        let path = ws.path("traj_r.svg");
        fs::write(&path, chart)?;
        println!("wrote {}", path.display());
    }
    if failed_total > 0 {
        return Err(CliError::Numerical(format!("{failed_total} trials failed")));
    }
    Ok(())
}

/// Rayon pool size from `GOSSIPLAB_THREADS`, if set.
pub fn configure_threads(var: Option<String>) -> Result<(), CliError> {
    let Some(raw) = var else { return Ok(()) };
    let threads: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|t| *t > 0)
        .ok_or_else(|| CliError::Config(format!("GOSSIPLAB_THREADS must be a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Config(e.to_string()))
}
