use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};

use gacredit::analysis::{
    attention_heatmap, classify_regimes, component_evolution, components_to_csv, crisis_correlation, heatmap_to_csv,
    nowcast, nowcasts_to_csv, pca_to_csv, pca_trajectory, regimes_to_csv,
};
use gacredit::artifact;
use gacredit::attribution::{attribute, reports_to_csv, stress_test, Scenario};
use gacredit::checks::{run_selfcheck_with_table, SelfCheckReport};
use gacredit::clifford::{format_f64, BLADE_TABLE};
use gacredit::config::{RunConfig, Target};
use gacredit::model::{contexts, predict_series, Prediction};
use gacredit::panel::{build_monthly_panel, build_quarterly_panel, load_csv, PanelInputs, RawSeries};
use gacredit::train::{fit, TrainError};
use gacredit::{svg, ModelParams, MonthlyPanel, QuarterlyPanel};

use crate::{Cli, Command, Common};

pub const EXIT_DATA: u8 = 2;
pub const EXIT_GATE: u8 = 3;
pub const EXIT_ARTIFACT: u8 = 4;
pub const EXIT_INTERNAL: u8 = 5;

pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

type Result<T> = std::result::Result<T, Failure>;

trait Code<T> {
    fn code(self, code: u8) -> Result<T>;
}

impl<T, E: Into<anyhow::Error>> Code<T> for std::result::Result<T, E> {
    fn code(self, code: u8) -> Result<T> {
        self.map_err(|e| Failure { code, error: e.into() })
    }
}

fn fail(code: u8, msg: String) -> Failure {
    Failure { code, error: anyhow!(msg) }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display())).code(EXIT_DATA)
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display())).code(EXIT_DATA)?;
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display())).code(EXIT_DATA)?;
    log::info!("wrote {} ({} bytes)", path.display(), contents.len());
    Ok(path)
}

fn resolve_config(c: &Common) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &c.config {
        let text = read(path)?;
        cfg.apply_text(&text).with_context(|| format!("config {}", path.display())).code(EXIT_DATA)?;
    }
    let mut set = |k: &str, v: Option<String>| -> Result<()> {
        if let Some(v) = v {
            cfg.set(k, &v).code(EXIT_DATA)?;
        }
        Ok(())
    };
    set("seed", c.seed.map(|v| v.to_string()))?;
    set("steps", c.steps.map(|v| v.to_string()))?;
    set("learning_rate", c.lr.map(format_f64))?;
    set("lambda_qk", c.lambda_qk.map(format_f64))?;
    set("lambda_v", c.lambda_v.map(format_f64))?;
    set("head", c.head.clone())?;
    set("window", c.window.map(|v| v.to_string()))?;
    set("target", c.target.clone())?;
    if !c.crisis_window.is_empty() {
        set("crisis_windows", Some(c.crisis_window.join(",")))?;
    }
    cfg.regimes().code(EXIT_DATA)?;
    Ok(cfg)
}

pub fn moments_path(panel: &Path) -> PathBuf {
    let stem = panel.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    panel.with_file_name(format!("{stem}.moments.csv"))
}

fn load_panel(c: &Common) -> Result<QuarterlyPanel> {
    let path = c.panel.as_ref().ok_or_else(|| fail(EXIT_DATA, "--panel is required".into()))?;
    let text = read(path)?;
    let mpath = moments_path(path);
    let moments = if mpath.exists() { Some(read(&mpath)?) } else { None };
    QuarterlyPanel::parse(&text, moments.as_deref()).with_context(|| format!("panel {}", path.display())).code(EXIT_DATA)
}

fn load_model(c: &Common) -> Result<ModelParams> {
    let path = c.model.as_ref().ok_or_else(|| fail(EXIT_DATA, "--model is required".into()))?;
    let text = read(path)?;
    let params = artifact::load(&text).with_context(|| format!("model {}", path.display())).code(EXIT_ARTIFACT)?;
    params.validate().with_context(|| format!("model {}", path.display())).code(EXIT_ARTIFACT)?;
    Ok(params)
}

fn target_index(cfg: &RunConfig, panel: &QuarterlyPanel) -> Result<usize> {
    if panel.len() < 2 {
        return Err(fail(EXIT_DATA, format!("panel has {} rows; need at least 2", panel.len())));
    }
    match cfg.target {
        Target::Last => Ok(panel.len() - 1),
        Target::Quarter(q) => match panel.index_of(q) {
            Some(0) => Err(fail(EXIT_DATA, format!("target {q} has no history"))),
            Some(i) => Ok(i),
            None => Err(fail(EXIT_DATA, format!("target {q} is not in the panel"))),
        },
    }
}

fn echo(c: &Common, cfg: &RunConfig) -> Result<()> {
    write(&c.out_dir, "config.txt", &cfg.to_text()).map(|_| ())
}

pub fn run(cli: Cli) -> Result<()> {
    let c = &cli.common;
    let cfg = resolve_config(c)?;
    match &cli.command {
        Command::Ingest(a) => ingest(c, &cfg, a),
        Command::Fit(a) => cmd_fit(c, &cfg, a.skip_gradient_gate),
        Command::Predict => predict(c, &cfg),
        Command::Nowcast(a) => cmd_nowcast(c, &cfg, &a.monthly),
        Command::Attribute(a) => cmd_attribute(c, &cfg, a.all),
        Command::Stress => stress(c, &cfg),
        Command::ExportFigures(a) => export_figures(c, &cfg, a.svg),
        Command::Selfcheck(a) => selfcheck(c, &cfg, a.inject_sign_error),
    }
}

fn ingest(c: &Common, cfg: &RunConfig, a: &crate::IngestArgs) -> Result<()> {
    let pick = |explicit: &Option<PathBuf>, name: &str| -> Result<PathBuf> {
        match (explicit, &a.data_dir) {
            (Some(p), _) => Ok(p.clone()),
            (None, Some(d)) => Ok(d.join(format!("{name}.csv"))),
            (None, None) => Err(fail(EXIT_DATA, format!("no path for {name}; pass --{} or --data-dir", name.to_lowercase()))),
        }
    };
    let mut dropped = String::new();
    let mut load = |path: PathBuf| -> Result<RawSeries> {
        if !path.exists() {
            return Err(fail(EXIT_DATA, format!("missing input file {}", path.display())));
        }
        let (s, rep) = load_csv(&path).with_context(|| format!("loading {}", path.display())).code(EXIT_DATA)?;
        let _ = writeln!(dropped, "{}: {} observations, {} missing rows dropped", s.name, s.len(), rep.missing_dropped);
        Ok(s)
    };
    let inputs = PanelInputs {
        unrate: load(pick(&a.unrate, "UNRATE")?)?,
        pce: load(pick(&a.pce, "PCE")?)?,
        psavert: load(pick(&a.psavert, "PSAVERT")?)?,
        revolsl: load(pick(&a.revolsl, "REVOLSL")?)?,
        corcacbs: load(pick(&a.corcacbs, "CORCACBS")?)?,
    };
    let (panel, report) = build_quarterly_panel(&inputs, &cfg.panel()).code(EXIT_DATA)?;
    write(&c.out_dir, "panel.csv", &panel.to_csv())?;
    write(&c.out_dir, "panel.moments.csv", &panel.moments_csv())?;
    print!("{dropped}");
    for (name, qs) in &report.dropped_quarters {
        let list: Vec<String> = qs.iter().map(|q| q.to_string()).collect();
        println!("{name}: incomplete quarters dropped: {}", list.join(" "));
    }
    println!("quarterly panel: {} rows", panel.len());

    match build_monthly_panel(&inputs.unrate, &inputs.pce, &inputs.psavert, &inputs.revolsl, &cfg.panel()) {
        Ok(m) => {
            write(&c.out_dir, "monthly_panel.csv", &m.to_csv())?;
            println!("monthly panel: {} rows", m.len());
        }
        Err(e) => println!("monthly panel skipped: {e}"),
    }

    let mut corr = String::from("window,rho,observations\n");
    for w in &cfg.crisis_windows {
        match crisis_correlation(&inputs.unrate, &inputs.corcacbs, *w) {
            Ok(r) => {
                let _ = writeln!(corr, "{w},{},{}", format_f64(r.rho), r.observations);
                println!("unemployment/charge-off correlation {w}: {:.3} ({} quarters)", r.rho, r.observations);
            }
            Err(e) => println!("correlation {w} skipped: {e}"),
        }
    }
    write(&c.out_dir, "crisis_correlations.csv", &corr)?;
    echo(c, cfg)
}

fn cmd_fit(c: &Common, cfg: &RunConfig, skip_gate: bool) -> Result<()> {
    let panel = load_panel(c)?;
    let seed = cfg.require_seed().code(EXIT_DATA)?;
    let mut ocfg = cfg.optimizer().code(EXIT_DATA)?;
    if skip_gate {
        ocfg.gradient_gate = None;
    }
    let mut init = ModelParams::init(&cfg.model(), seed);
    init.projection.feature_map = cfg.feature_map;
    let (params, report) = match fit(&panel, &init, &cfg.loss(), &ocfg) {
        Ok(r) => r,
        Err(e @ TrainError::GradientGate { .. }) => return Err(Failure { code: EXIT_GATE, error: e.into() }),
        Err(e @ (TrainError::TooFewRows(_) | TrainError::Config(_))) => return Err(Failure { code: EXIT_DATA, error: e.into() }),
        Err(e) => return Err(Failure { code: EXIT_INTERNAL, error: e.into() }),
    };
    write(&c.out_dir, "model.gam", &artifact::save(&params))?;
    let mut traj = String::from("step,total_loss\n");
    for (i, l) in report.loss_trajectory.iter().enumerate() {
        let _ = writeln!(traj, "{i},{}", format_f64(*l));
    }
    write(&c.out_dir, "loss_trajectory.csv", &traj)?;
    let mut text = String::new();
    let _ = writeln!(text, "protocol = full-batch gradient descent, global-norm clip, no train/test split");
    let _ = writeln!(text, "steps = {}", ocfg.steps);
    let _ = writeln!(text, "learning_rate = {}", format_f64(ocfg.learning_rate));
    let _ = writeln!(text, "gradient_clip = {}", format_f64(ocfg.gradient_clip));
    let _ = writeln!(text, "seed = {seed}");
    let _ = writeln!(text, "initial_loss = {}", format_f64(report.initial_loss));
    let _ = writeln!(text, "initial_mse = {}", format_f64(report.initial_mse));
    let _ = writeln!(text, "final_loss = {}", format_f64(report.final_loss));
    let _ = writeln!(text, "final_mse = {}", format_f64(report.final_mse));
    let _ = writeln!(text, "final_reg = {}", format_f64(report.final_reg));
    let _ = writeln!(text, "best_step = {}", report.best_step);
    match report.grad_check {
        Some(g) => {
            let _ = writeln!(text, "grad_check_max_relative_deviation = {}", format_f64(g.max_relative_deviation));
            let _ = writeln!(text, "grad_check_checked = {}", g.checked);
            let _ = writeln!(text, "grad_check_skipped_at_kinks = {}", g.skipped_at_kinks);
        }
        None => text.push_str("grad_check = skipped\n"),
    }
    let _ = writeln!(text, "failed = {}", report.failed);
    write(&c.out_dir, "train_report.txt", &text)?;
    print!("{text}");
    echo(c, cfg)
}

fn predictions(panel: &QuarterlyPanel, params: &ModelParams) -> Result<Vec<Prediction>> {
    predict_series(panel, params).code(EXIT_INTERNAL)
}

fn historical_fit_csv(panel: &QuarterlyPanel, preds: &[Prediction]) -> String {
    let mut out = String::from("quarter,actual,predicted,actual_std,predicted_std\n");
    for p in preds {
        let t = p.index;
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            p.quarter,
            format_f64(panel.destandardize(t, panel.target[t])),
            format_f64(p.destandardized),
            format_f64(panel.target[t]),
            format_f64(p.standardized)
        );
    }
    out
}

fn predict(c: &Common, cfg: &RunConfig) -> Result<()> {
    let panel = load_panel(c)?;
    let params = load_model(c)?;
    target_index(cfg, &panel)?;
    let preds = predictions(&panel, &params)?;
    let path = write(&c.out_dir, "historical_fit.csv", &historical_fit_csv(&panel, &preds))?;
    println!("{} predictions -> {}", preds.len(), path.display());
    echo(c, cfg)
}

fn cmd_nowcast(c: &Common, cfg: &RunConfig, monthly: &Path) -> Result<()> {
    let panel = load_panel(c)?;
    let params = load_model(c)?;
    let m = MonthlyPanel::parse(&read(monthly)?).with_context(|| format!("monthly panel {}", monthly.display())).code(EXIT_DATA)?;
    let rows = nowcast(&m, &panel, &params).code(EXIT_DATA)?;
    let path = write(&c.out_dir, "nowcast.csv", &nowcasts_to_csv(&rows))?;
    println!("{} nowcasts -> {}", rows.len(), path.display());
    echo(c, cfg)
}

fn cmd_attribute(c: &Common, cfg: &RunConfig, all: bool) -> Result<()> {
    let panel = load_panel(c)?;
    let params = load_model(c)?;
    let ts: Vec<usize> = if all { (1..panel.len()).collect() } else { vec![target_index(cfg, &panel)?] };
    let reports = ts.iter().map(|&t| attribute(&panel, t, &params).code(EXIT_INTERNAL)).collect::<Result<Vec<_>>>()?;
    let path = write(&c.out_dir, "attribution.csv", &reports_to_csv(&reports))?;
    println!("{} quarter(s) attributed -> {}", reports.len(), path.display());
    echo(c, cfg)
}

fn stress(c: &Common, cfg: &RunConfig) -> Result<()> {
    let panel = load_panel(c)?;
    let params = load_model(c)?;
    let t = target_index(cfg, &panel)?;
    let scenario = match &c.scenario {
        Some(p) => read(p)?.parse::<Scenario>().with_context(|| format!("scenario {}", p.display())).code(EXIT_DATA)?,
        None => Scenario::default(),
    };
    let report = stress_test(&panel, t, &scenario, &params).code(EXIT_DATA)?;
    let path = write(&c.out_dir, "stress.csv", &report.to_csv())?;
    println!(
        "{}: baseline {} combined delta {} -> {}",
        report.quarter,
        format_f64(report.baseline),
        format_f64(report.combined_direct),
        path.display()
    );
    echo(c, cfg)
}

pub const FIGURE_FILES: [&str; 5] = [
    "historical_fit.csv",
    "pca_trajectory.csv",
    "component_evolution.csv",
    "attention_heatmap.csv",
    "regimes.csv",
];

fn export_figures(c: &Common, cfg: &RunConfig, with_svg: bool) -> Result<()> {
    let panel = load_panel(c)?;
    let params = load_model(c)?;
    target_index(cfg, &panel)?;
    let preds = predictions(&panel, &params)?;
    let ctx = contexts(&panel, &params).code(EXIT_INTERNAL)?;
    let pca = pca_trajectory(&ctx).code(EXIT_DATA)?;
    let mags = component_evolution(&panel, &params);
    let heat = attention_heatmap(&panel, &params).code(EXIT_INTERNAL)?;
    let th = cfg.regimes().code(EXIT_DATA)?;
    let labels = classify_regimes(&mags, th);
    let contents = [
        historical_fit_csv(&panel, &preds),
        pca_to_csv(&panel.quarters[1..], &pca),
        components_to_csv(&mags),
        heatmap_to_csv(&heat),
        regimes_to_csv(&labels, th),
    ];
    for (name, body) in FIGURE_FILES.iter().zip(&contents) {
        write(&c.out_dir, name, body)?;
    }
    if with_svg {
        let actual: Vec<f64> = preds.iter().map(|p| panel.target[p.index]).collect();
        let fitted: Vec<f64> = preds.iter().map(|p| p.standardized).collect();
        write(&c.out_dir, "historical_fit.svg", &svg::line_chart("standardized charge-offs", &[("actual", &actual), ("fitted", &fitted)]))?;
        let rows: Vec<Vec<Option<f64>>> =
            (0..params.lookback).map(|k| heat.iter().map(|col| col.weights[k]).collect()).collect();
        write(&c.out_dir, "attention_heatmap.svg", &svg::heatmap("attention by lag", &rows))?;
    }
    println!(
        "wrote {} figure files to {} (PC1 {:.3}, PC2 {:.3})",
        FIGURE_FILES.len(),
        c.out_dir.display(),
        pca.explained[0],
        pca.explained[1]
    );
    echo(c, cfg)
}

fn selfcheck(c: &Common, cfg: &RunConfig, inject: bool) -> Result<()> {
    let mut table = BLADE_TABLE;
    if inject {
        table.sign[5][8] = -table.sign[5][8];
    }
    let report: SelfCheckReport = run_selfcheck_with_table(cfg.seed.unwrap_or(0), &table);
    let text = report.to_text();
    print!("{text}");
    write(&c.out_dir, "selfcheck.txt", &text)?;
    if report.passed() {
        Ok(())
    } else {
        Err(fail(EXIT_INTERNAL, "selfcheck failed".into()))
    }
}
