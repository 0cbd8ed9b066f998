use std::f64::consts::PI;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use surfspin::fitting::{
    derive_t1, fit_angle, fit_peak_positions, fit_resonance, fit_saturation, fit_sweep, fit_temperature,
    resonance_model, saturation_model, Covariance, FitResult, LmOptions, PositionFitOptions, SweepFit,
    SweepFitOptions, TemperatureFit, TemperatureFitOptions,
};
use surfspin::geometry::{alpha, density_breakdown, spin_density_with_sensitivity, DensityResult, StripGeometry};
use surfspin::io::{self, fmt_f64, write_table};
use surfspin::lineshape::{background_loss, SpectrumModel};
use surfspin::spin_levels::{eigensystem, transitions, SpinSystem};
use surfspin::synth::{scenario_from_json, synthesize, Dataset};

use crate::output::{derived_path, write_atomic, Envelope, Status};
use crate::svg::{self, Plot, Series, Style};
use crate::{Cli, CliError, Command, Config, SpinChoice, EXIT_OK};

struct Ctx<'a> {
    cli: &'a Cli,
    config: Config,
    hash: String,
}

impl Ctx<'_> {
    fn out_dir(&self, input: &Path) -> PathBuf {
        if let Some(d) = self.cli.out_dir.as_ref().or(self.config.paths.output_dir.as_ref()) {
            return d.clone();
        }
        input.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf)
    }

    fn plots(&self) -> bool {
        self.config.fit.plots && !self.cli.no_plots
    }

    fn provenance(&self, command: &str, input: &Path) -> Vec<(&'static str, String)> {
        vec![
            ("tool", crate::output::TOOL.to_string()),
            ("version", crate::output::VERSION.to_string()),
            ("config_hash", self.hash.clone()),
            ("command", command.to_string()),
            ("input", input.display().to_string()),
        ]
    }

    /// `#` comment line heading every CSV output.
    fn csv_banner(&self, command: &str) -> String {
        format!(
            "# {} {} command={command} config_hash={}\n",
            crate::output::TOOL,
            crate::output::VERSION,
            self.hash
        )
    }
}

/// What a per-file analysis hands back for writing.
struct Analysis {
    result: serde_json::Value,
    converged: bool,
    warnings: Vec<String>,
    /// `(suffix, header, rows)`
    tables: Vec<(&'static str, Vec<String>, Vec<Vec<String>>)>,
    plot: Option<(String, String, String, Vec<(String, Vec<f64>, Vec<f64>, Style)>)>,
}

impl Analysis {
    fn new<T: Serialize>(value: &T, converged: bool, warnings: Vec<String>) -> Result<Self, CliError> {
        Ok(Analysis {
            result: serde_json::to_value(value).map_err(surfspin::Error::from)?,
            converged,
            warnings,
            tables: Vec::new(),
            plot: None,
        })
    }
}

pub(crate) fn execute(cli: &Cli) -> Result<i32, CliError> {
    let (config, _) = Config::resolve(cli.config.as_deref())?;
    let ctx = Ctx { cli, hash: config.hash(), config };
    match &cli.command {
        Command::FitResonance(a) => Ok(per_file(&ctx, "fit-resonance", &a.inputs, resonance)),
        Command::FitSweep(a) => Ok(per_file(&ctx, "fit-sweep", &a.files.inputs, |c, p| sweep(c, p, a))),
        Command::FitLevels(a) => Ok(per_file(&ctx, "fit-levels", &a.inputs, levels_fit)),
        Command::FitTemperature(a) => Ok(per_file(&ctx, "fit-temperature", &a.inputs, temperature)),
        Command::FitSaturation(a) => {
            let q = a.q.or(ctx.config.saturation.q);
            let q_ext = a.q_ext.or(ctx.config.saturation.q_ext);
            let (Some(q), Some(q_ext)) = (q, q_ext) else {
                return Err(CliError::Usage(
                    "fit-saturation needs --q and --q-ext (or saturation.q and saturation.q_ext)".into(),
                ));
            };
            let t2e = a.t2e.or(ctx.config.saturation.t2e_s);
            Ok(per_file(&ctx, "fit-saturation", &a.files.inputs, |c, p| saturation(c, p, q, q_ext, t2e)))
        }
        Command::FitAngle(a) => Ok(per_file(&ctx, "fit-angle", &a.inputs, angle)),
        Command::SpinDensity(a) => density(&ctx, a),
        Command::Levels(a) => levels_table(&ctx, a),
        Command::Simulate(a) => simulate(&ctx, a),
        Command::Report(a) => Ok(report(&a.inputs)),
    }
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|source| CliError::Read { path: path.to_path_buf(), source })
}

fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|source| CliError::Read { path: path.to_path_buf(), source })
}

/// Runs `analyse` on every input in parallel and writes its outputs; the
/// returned code is the largest over all files.
fn per_file<F>(ctx: &Ctx, command: &str, inputs: &[PathBuf], analyse: F) -> i32
where
    F: Fn(&Ctx, &Path) -> Result<Analysis, CliError> + Sync,
{
    let outcomes: Vec<(i32, String)> = inputs
        .par_iter()
        .map(|input| process(ctx, command, input, &analyse))
        .collect();
    let mut code = EXIT_OK;
    for (c, msg) in outcomes {
        if c == EXIT_OK {
            println!("{msg}");
        } else {
            eprintln!("{msg}");
        }
        code = code.max(c);
    }
    code
}

fn process<F>(ctx: &Ctx, command: &str, input: &Path, analyse: &F) -> (i32, String)
where
    F: Fn(&Ctx, &Path) -> Result<Analysis, CliError>,
{
    let dir = ctx.out_dir(input);
    let json_path = derived_path(&dir, input, &format!("{command}.json"));
    let envelope = Envelope::new(command, &ctx.hash, Some(input));
    let analysis = match analyse(ctx, input) {
        Ok(a) => a,
        Err(e) => {
            let code = e.exit_code();
            // a fit that could not finish still leaves a record behind
            if code == crate::EXIT_FIT {
                let env = Envelope { status: Status::Failed, error: Some(e.to_string()), ..envelope };
                if let Err(w) = write_atomic(&json_path, env.to_json().as_bytes()) {
                    return (code, format!("{}: {e}; {w}", input.display()));
                }
            }
            return (code, format!("{}: {e}", input.display()));
        }
    };
    let mut env = Envelope {
        status: if analysis.converged { Status::Ok } else { Status::NotConverged },
        result: analysis.result,
        warnings: analysis.warnings,
        ..envelope
    };
    for (suffix, header, rows) in &analysis.tables {
        let path = derived_path(&dir, input, suffix);
        let mut buf = ctx.csv_banner(command).into_bytes();
        let cols: Vec<&str> = header.iter().map(String::as_str).collect();
        let res = write_table(&mut buf, &cols, rows.iter().cloned())
            .map_err(CliError::from)
            .and_then(|_| write_atomic(&path, &buf));
        if let Err(e) = res {
            return (e.exit_code(), format!("{}: {e}", input.display()));
        }
    }
    if ctx.plots() {
        if let Some((title, xl, yl, series)) = &analysis.plot {
            let plot = Plot {
                title,
                x_label: xl,
                y_label: yl,
                series: series
                    .iter()
                    .map(|(n, x, y, s)| Series { name: n, x, y, style: *s })
                    .collect(),
            };
            let path = derived_path(&dir, input, &format!("{command}.svg"));
            // plotting problems are reported but never change the exit code
            let written = svg::render(&plot, &ctx.provenance(command, input))
                .and_then(|text| write_atomic(&path, text.as_bytes()).map_err(|e| e.to_string()));
            if let Err(e) = written {
                env.warnings.push(format!("plot not written: {e}"));
            }
        }
    }
    if let Err(e) = write_atomic(&json_path, env.to_json().as_bytes()) {
        return (e.exit_code(), format!("{}: {e}", input.display()));
    }
    if analysis.converged {
        (EXIT_OK, format!("{}: ok -> {}", input.display(), json_path.display()))
    } else {
        let e = CliError::NotConverged(format!("partial results in {}", json_path.display()));
        (e.exit_code(), format!("{}: {e}", input.display()))
    }
}

fn fit_summary(fit: &FitResult) -> (bool, Vec<String>) {
    let mut warnings = fit.warnings.clone();
    if !fit.converged {
        warnings.push(format!("{}: {}", fit.model_id, fit.termination));
    }
    (fit.converged, warnings)
}

fn resonance(ctx: &Ctx, input: &Path) -> Result<Analysis, CliError> {
    let trace = io::read_s21(open(input)?)?;
    let fit = fit_resonance(&trace, &ctx.config.lm_options())?;
    let (converged, warnings) = fit_summary(&fit);
    let mut a = Analysis::new(&fit, converged, warnings)?;
    let v = |n: &str| fit.value(n).unwrap_or(f64::NAN);
    let qc = Complex64::from_polar(v("Qc_abs"), v("Qc_phase"));
    let model: Vec<Complex64> = trace.rows.iter().map(|r| resonance_model(r.f, v("f0"), v("Q"), qc)).collect();
    a.tables.push((
        "fit-resonance.csv",
        ["f_hz", "s21_re", "s21_im", "model_re", "model_im"].map(String::from).to_vec(),
        trace
            .rows
            .iter()
            .zip(&model)
            .map(|(r, m)| vec![fmt_f64(r.f), fmt_f64(r.re), fmt_f64(r.im), fmt_f64(m.re), fmt_f64(m.im)])
            .collect(),
    ));
    let f: Vec<f64> = trace.rows.iter().map(|r| r.f).collect();
    a.plot = Some((
        "Transmission magnitude".into(),
        "f (Hz)".into(),
        "|S21|".into(),
        vec![
            ("data".into(), f.clone(), trace.rows.iter().map(|r| r.re.hypot(r.im)).collect(), Style::Points),
            ("fit".into(), f, model.iter().map(|m| m.norm()).collect(), Style::Line),
        ],
    ));
    Ok(a)
}

#[derive(Serialize)]
struct SweepReport<'a> {
    #[serde(flatten)]
    fit: &'a SweepFit,
    /// Per-line spin densities, when all three lines were fitted.
    density: Option<DensityResult>,
}

fn sweep(ctx: &Ctx, input: &Path, args: &crate::SweepArgs) -> Result<Analysis, CliError> {
    let cfg = &ctx.config;
    let trace = io::read_sweep(open(input)?)?;
    let template: SpectrumModel = match &args.template {
        Some(p) => serde_json::from_str(&read_text(p)?).map_err(surfspin::Error::from)?,
        None => {
            let f0 = args.f0.or(cfg.sweep.f0_hz).unwrap_or(trace.rows[0].f0);
            cfg.sweep_template(f0)?
        }
    };
    let opts = SweepFitOptions {
        robust: args.robust || cfg.fit.robust,
        use_frequency: args.use_frequency || cfg.fit.use_frequency,
        fixed: cfg.sweep.fixed.clone(),
        lm: LmOptions { covariance: Covariance::Sandwich, ..cfg.lm_options() },
        ..SweepFitOptions::default()
    };
    let sf = fit_sweep(&trace, &template, &opts)?;
    let (converged, mut warnings) = fit_summary(&sf.fit);

    let coupling = |l: &str| sf.model.peaks.iter().find(|p| p.label == l).map(|p| p.coupling);
    let omega0 = sf.model.resonator.omega0;
    let density = match (coupling("central"), coupling("sat_low"), coupling("sat_high")) {
        (Some(c), Some(lo), Some(hi)) => {
            match density_breakdown(c, lo, hi, cfg.density.temperature_k, &cfg.geometry, omega0) {
                Ok(d) => Some(d),
                Err(e) => {
                    warnings.push(format!("density not computed: {e}"));
                    None
                }
            }
        }
        _ => None,
    };
    let mut a = Analysis::new(&SweepReport { fit: &sf, density }, converged, warnings)?;

    let fields = trace.fields();
    let qb = trace.qb_inv();
    let df = trace.df();
    let points = sf.model.evaluate_sweep(&fields);
    let qb_model: Vec<f64> = points.iter().map(|p| p.qb_inv + sf.offset_qb).collect();
    let df_model: Vec<f64> = points.iter().map(|p| p.df + sf.offset_df_hz).collect();
    let bg: Vec<f64> = fields.iter().map(|&b| background_loss(&sf.model.background, b)).collect();
    let components: Vec<Vec<f64>> = (0..sf.model.peaks.len())
        .map(|k| fields.iter().map(|&b| sf.model.peak_component(k, b).qb_inv).collect())
        .collect();

    let mut header: Vec<String> = [
        "B_tesla",
        "qb_data",
        "qb_model",
        "qb_residual",
        "df_data_hz",
        "df_model_hz",
        "df_residual_hz",
        "bg_q_inv",
    ]
    .map(String::from)
    .to_vec();
    header.extend(sf.model.peaks.iter().map(|p| format!("{}_q_inv", p.label)));
    let rows = (0..fields.len())
        .map(|i| {
            let mut r = vec![
                fmt_f64(fields[i]),
                fmt_f64(qb[i]),
                fmt_f64(qb_model[i]),
                fmt_f64(qb[i] - qb_model[i]),
                fmt_f64(df[i]),
                fmt_f64(df_model[i]),
                fmt_f64(df[i] - df_model[i]),
                fmt_f64(bg[i]),
            ];
            r.extend(components.iter().map(|c| fmt_f64(c[i])));
            r
        })
        .collect();
    a.tables.push(("fit-sweep.csv", header, rows));

    let mut series = vec![
        ("data".to_string(), fields.clone(), qb, Style::Points),
        ("fit".to_string(), fields.clone(), qb_model, Style::Line),
        ("background".to_string(), fields.clone(), bg, Style::Line),
    ];
    for (p, c) in sf.model.peaks.iter().zip(components) {
        series.push((p.label.clone(), fields.clone(), c, Style::Line));
    }
    a.plot = Some(("Field-sweep decomposition".into(), "B (T)".into(), "Q⁻¹(B) − Q⁻¹(0)".into(), series));
    Ok(a)
}

fn levels_fit(ctx: &Ctx, input: &Path) -> Result<Analysis, CliError> {
    let data = io::read_peaks(open(input)?)?;
    let s = &ctx.config.spin;
    let opts = PositionFitOptions {
        g_e_init: s.g_e,
        hyperfine_init_hz: s.hyperfine_hz,
        g_central_init: s.g_central,
        include_nuclear_zeeman: s.include_nuclear_zeeman,
        lm: ctx.config.lm_options(),
        ..PositionFitOptions::default()
    };
    let fit = fit_peak_positions(&data, &opts)?;
    let (converged, warnings) = fit_summary(&fit);
    Analysis::new(&fit, converged, warnings)
}

fn temperature(ctx: &Ctx, input: &Path) -> Result<Analysis, CliError> {
    let ts = io::read_temperature(open(input)?)?;
    let cfg = &ctx.config;
    let opts = TemperatureFitOptions {
        f0_hz: cfg.temperature.f0_hz,
        fields: cfg.peak_fields()?,
        hydrogen: cfg.hydrogen_spin(),
        lm: cfg.lm_options(),
    };
    let fit: TemperatureFit = fit_temperature(&ts, &cfg.hypotheses(), &opts)?;
    let fits = fit.ranking.iter().map(|h| &h.fit).chain(fit.satellites.as_ref());
    let mut converged = true;
    let mut warnings = fit.warnings.clone();
    for f in fits {
        let (c, w) = fit_summary(f);
        converged &= c;
        warnings.extend(w);
    }
    Analysis::new(&fit, converged, warnings)
}

fn saturation(ctx: &Ctx, input: &Path, q: f64, q_ext: f64, t2e: Option<f64>) -> Result<Analysis, CliError> {
    let curve = io::read_saturation(open(input)?, q, q_ext)?;
    let mut fit = fit_saturation(&curve, &ctx.config.lm_options())?;
    if let Some(t2e) = t2e {
        let a = alpha(&ctx.config.geometry)?;
        let p_sat = fit.value("p_sat").unwrap_or(f64::NAN);
        let t1 = derive_t1(p_sat, t2e, a, ctx.config.saturation.g_e)?;
        // T1 ∝ 1/P_sat
        let s = fit.stderr("p_sat").map(|s| t1 * s / p_sat);
        fit.push_derived("alpha", a, None);
        fit.push_derived("T1", t1, s);
    }
    let (converged, warnings) = fit_summary(&fit);
    let mut a = Analysis::new(&fit, converged, warnings)?;
    let v = |n: &str| fit.value(n).unwrap_or(f64::NAN);
    let p0: Vec<f64> = curve.rows.iter().map(|r| curve.circulating_power(r.p_drive)).collect();
    let model: Vec<f64> = p0.iter().map(|&p| saturation_model(p, v("qs0_inv"), v("p_sat"), v("epsilon"))).collect();
    a.tables.push((
        "fit-saturation.csv",
        ["p_watt", "p_circ_watt", "q_inv", "q_inv_model"].map(String::from).to_vec(),
        curve
            .rows
            .iter()
            .zip(p0.iter().zip(&model))
            .map(|(r, (p, m))| vec![fmt_f64(r.p_drive), fmt_f64(*p), fmt_f64(r.qs_inv), fmt_f64(*m)])
            .collect(),
    ));
    let log = |v: &[f64]| v.iter().map(|x| x.log10()).collect::<Vec<_>>();
    let q_data: Vec<f64> = curve.rows.iter().map(|r| r.qs_inv).collect();
    a.plot = Some((
        "Power saturation".into(),
        "log10 circulating power (W)".into(),
        "log10 Q_s⁻¹".into(),
        vec![
            ("data".into(), log(&p0), log(&q_data), Style::Points),
            ("fit".into(), log(&p0), log(&model), Style::Line),
        ],
    ));
    Ok(a)
}

fn angle(ctx: &Ctx, input: &Path) -> Result<Analysis, CliError> {
    let series = io::read_angle(open(input)?)?;
    let fit = fit_angle(&series, &ctx.config.lm_options())?;
    let (converged, warnings) = fit_summary(&fit);
    Analysis::new(&fit, converged, warnings)
}

#[derive(Serialize)]
struct DensityReport {
    omega: f64,
    temperature_k: f64,
    f0_hz: f64,
    geometry: StripGeometry,
    /// Spins per m² for the given coupling.
    n: f64,
    /// Sensitivity to the edge cutoff, m⁻³.
    dn_dcutoff: f64,
    breakdown: Option<DensityResult>,
}

fn density(ctx: &Ctx, args: &crate::DensityArgs) -> Result<i32, CliError> {
    let cfg = &ctx.config;
    let geometry = match &args.geometry {
        Some(p) => {
            let g: StripGeometry = toml::from_str(&read_text(p)?)
                .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            g.validate().map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            g
        }
        None => cfg.geometry,
    };
    let t = args.temperature.unwrap_or(cfg.density.temperature_k);
    let f0 = args.f0.unwrap_or(cfg.density.f0_hz);
    let omega0 = 2.0 * PI * f0;
    let est = spin_density_with_sensitivity(args.omega, t, &geometry, omega0)?;
    let breakdown = match (args.omega_sat_low, args.omega_sat_high) {
        (Some(lo), Some(hi)) => Some(density_breakdown(args.omega, lo, hi, t, &geometry, omega0)?),
        _ => None,
    };
    let report = DensityReport {
        omega: args.omega,
        temperature_k: t,
        f0_hz: f0,
        geometry,
        n: est.n,
        dn_dcutoff: est.dn_dcutoff,
        breakdown,
    };
    let env = Envelope::new("spin-density", &ctx.hash, None).with_result(&report)?;
    write_atomic(&args.output, env.to_json().as_bytes())?;
    println!("n = {:.4e} m^-2, dn/dδ = {:.4e} m^-3 -> {}", est.n, est.dn_dcutoff, args.output.display());
    if let Some(b) = breakdown {
        println!(
            "central {:.4e}, sat_low {:.4e}, sat_high {:.4e}, total {:.4e} m^-2, n_H/n_e = {:.4}",
            b.n_central, b.n_sat_low, b.n_sat_high, b.n, b.ratio_h_e
        );
    }
    Ok(EXIT_OK)
}

/// Parses `start:stop:count` into an inclusive grid.
pub(crate) fn parse_grid(s: &str) -> Result<Vec<f64>, CliError> {
    let bad = || CliError::Usage(format!("--B expects START:STOP:COUNT, got `{s}`"));
    let parts: Vec<&str> = s.split(':').collect();
    let [a, b, n] = parts[..] else { return Err(bad()) };
    let start: f64 = a.trim().parse().map_err(|_| bad())?;
    let stop: f64 = b.trim().parse().map_err(|_| bad())?;
    let count: usize = n.trim().parse().map_err(|_| bad())?;
    if !(start.is_finite() && stop.is_finite()) || count == 0 || (count == 1 && start != stop) {
        return Err(bad());
    }
    if count == 1 {
        return Ok(vec![start]);
    }
    let step = (stop - start) / (count - 1) as f64;
    Ok((0..count).map(|i| if i + 1 == count { stop } else { start + step * i as f64 }).collect())
}

fn levels_table(ctx: &Ctx, args: &crate::LevelsArgs) -> Result<i32, CliError> {
    let cfg = &ctx.config;
    let spin = match args.spin {
        SpinChoice::Hydrogen => cfg.hydrogen_spin(),
        SpinChoice::Free => cfg.central_spin(),
        SpinChoice::Triplet => SpinSystem::triplet(cfg.spin.g_central, args.zfs),
    };
    spin.validate()?;
    let grid = parse_grid(&args.b)?;
    if grid.iter().any(|&b| b < 0.0) {
        return Err(CliError::Usage("--B: fields must be non-negative".into()));
    }
    let dim = spin.dim();
    let rows = grid
        .par_iter()
        .map(|&b| {
            let l = eigensystem(&spin, b)?;
            // transitions inside a degenerate manifold carry no frequency
            let spread = l.energies[l.len() - 1] - l.energies[0];
            let mut tr: Vec<_> = transitions(&spin, b, 0.0)?
                .into_iter()
                .filter(|t| t.frequency > 1e-9 * spread)
                .collect();
            tr.sort_by(|x, y| y.strength.total_cmp(&x.strength).then(x.frequency.total_cmp(&y.frequency)));
            let mut row = vec![fmt_f64(b)];
            row.extend(l.energies.iter().map(|&e| fmt_f64(e)));
            for k in 0..2 {
                match tr.get(k) {
                    Some(t) => row.extend([fmt_f64(t.frequency), fmt_f64(t.strength), t.label.as_str().to_string()]),
                    None => row.extend([String::new(), String::new(), String::new()]),
                }
            }
            Ok(row)
        })
        .collect::<Result<Vec<_>, surfspin::Error>>()?;
    let mut header = vec!["B_tesla".to_string()];
    header.extend((1..=dim).map(|k| format!("E{k}_hz")));
    for k in 1..=2 {
        header.extend([format!("t{k}_f_hz"), format!("t{k}_strength"), format!("t{k}_label")]);
    }
    let cols: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut buf = ctx.csv_banner("levels").into_bytes();
    write_table(&mut buf, &cols, rows)?;
    write_atomic(&args.output, &buf)?;
    println!("{} fields -> {}", grid.len(), args.output.display());
    Ok(EXIT_OK)
}

fn simulate(ctx: &Ctx, args: &crate::SimulateArgs) -> Result<i32, CliError> {
    let mut scenario = scenario_from_json(&read_text(&args.scenario)?)?;
    if let Some(seed) = args.seed {
        scenario.seed = seed;
    }
    let syn = synthesize(&scenario)?;
    let mut buf = ctx.csv_banner("simulate").into_bytes();
    match &syn.dataset {
        Dataset::S21Trace(t) => io::write_s21(&mut buf, t)?,
        Dataset::Sweep(t) => io::write_sweep(&mut buf, t)?,
        Dataset::Saturation(c) => io::write_saturation(&mut buf, c)?,
        Dataset::TemperatureSeries(t) => io::write_temperature(&mut buf, t)?,
        Dataset::AngleSeries(s) => io::write_angle(&mut buf, s)?,
        Dataset::PeakPositions(p) => io::write_peaks(&mut buf, p)?,
    }
    write_atomic(&args.output, &buf)?;
    let dir = args.output.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf);
    let manifest_path = derived_path(&dir, &args.output, "manifest.json");
    let env = Envelope::new("simulate", &ctx.hash, Some(&args.scenario)).with_result(&syn.manifest)?;
    write_atomic(&manifest_path, env.to_json().as_bytes())?;
    println!("{} + {}", args.output.display(), manifest_path.display());
    Ok(EXIT_OK)
}

fn summarise(env: &Envelope) -> String {
    let mut out = format!(
        "{} {} ({}), status {:?}, config {}\n",
        env.command,
        env.input.as_deref().unwrap_or("-"),
        env.version,
        env.status,
        &env.config_hash[..env.config_hash.len().min(12)]
    );
    let mut push_params = |params: &serde_json::Value| {
        for p in params.as_array().into_iter().flatten() {
            let name = p["name"].as_str().unwrap_or("?");
            let value = p["value"].as_f64().unwrap_or(f64::NAN);
            match p["stderr"].as_f64() {
                Some(s) => out.push_str(&format!("  {name:<20} {value:>14.6e} ± {s:.2e}\n")),
                None => out.push_str(&format!("  {name:<20} {value:>14.6e}\n")),
            }
        }
    };
    let r = &env.result;
    if r.get("params").is_some() {
        push_params(&r["params"]);
        push_params(&r["derived"]);
    } else if r.get("fit").is_some() {
        push_params(&r["fit"]["params"]);
        push_params(&r["fit"]["derived"]);
    }
    for w in &env.warnings {
        out.push_str(&format!("  warning: {w}\n"));
    }
    if let Some(e) = &env.error {
        out.push_str(&format!("  error: {e}\n"));
    }
    out
}

/// Re-reads saved envelopes and writes them back as `<stem>.report.json`,
/// which is byte-identical to a well-formed input.
fn report(inputs: &[PathBuf]) -> i32 {
    let mut code = EXIT_OK;
    for input in inputs {
        let res = read_text(input).and_then(|text| {
            let env = Envelope::from_json(&text)?;
            let dir = input.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf);
            let out = derived_path(&dir, input, "report.json");
            write_atomic(&out, env.to_json().as_bytes())?;
            Ok((env, out))
        });
        match res {
            Ok((env, out)) => {
                print!("{}", summarise(&env));
                println!("  -> {}", out.display());
            }
            Err(e) => {
                eprintln!("{}: {e}", input.display());
                code = code.max(e.exit_code());
            }
        }
    }
    code
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids() {
        let g = parse_grid("0:0.3:4").unwrap();
        for (x, want) in g.iter().zip([0.0, 0.1, 0.2, 0.3]) {
            assert!((x - want).abs() < 1e-15, "{g:?}");
        }
        assert_eq!(g[3], 0.3);
        assert_eq!(parse_grid("0.2:0.2:1").unwrap(), vec![0.2]);
        assert_eq!(parse_grid("0:1:1000").unwrap().len(), 1000);
        for bad in ["0:1", "a:1:3", "0:1:0", "0:1:1", "0:1:2:3"] {
            assert!(parse_grid(bad).is_err(), "{bad}");
        }
    }
}
