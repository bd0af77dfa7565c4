mod figures;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;
use superlattice_core::arc::{band_average_transmission, design_rule_of_thumb};
use superlattice_core::kard::{decompose, BandInterval};
use superlattice_core::medium::{validate_stack, EnergyGrid, PhysConstants, StackSpec, ValidatedStack};
use superlattice_core::playmodel::PlayModel;
use superlattice_core::resonance::{approx_curves, fit_all, refined_energies};
use superlattice_core::scattering::{default_window, dwell_time, smith_matrix};
use superlattice_core::tdse::{evolve, evolve_free, packet_delay, predictions, Detection, Grid1D, WavePacket};
use superlattice_core::timing::{envelopes, phase_time_oracle, timing_curve, transmission_sweep};
use superlattice_core::tmatrix::{amplitudes, stack_matrix, PhysicalCell, StackScatterer, UnitCell};
use superlattice_core::{Error, Result};

use figures::{band_label, first_band, segment_label};
use output::{emit, summary, Table};

#[derive(Parser, Serialize)]
#[command(name = "superlattice", version, about = "Transmission, Bloch phase and traversal times of finite superlattices")]
struct Cli {
    /// Write the result here instead of stdout.
    #[arg(short, long, global = true)]
    output: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Serialize, Clone)]
struct Source {
    /// Stack description (JSON).
    #[arg(long, conflicts_with = "playmodel")]
    stack: Option<PathBuf>,
    /// Use the analytic play model instead of a stack.
    #[arg(long)]
    playmodel: bool,
}

#[derive(Args, Serialize, Clone)]
struct Energies {
    /// Lower end of the energy sweep, meV.
    #[arg(long)]
    e_min: Option<f64>,
    /// Upper end of the energy sweep, meV.
    #[arg(long)]
    e_max: Option<f64>,
    /// Number of energies.
    #[arg(long, default_value_t = 2001)]
    count: usize,
}

#[derive(Subcommand, Serialize)]
enum Command {
    /// Bloch phase and Kard parameters of one cell.
    Kard {
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        energies: Energies,
    },
    /// N-cell transmission with the envelope of minima.
    Transmission {
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        energies: Energies,
        /// Number of cells (defaults to the stack's replica count, 9 for the play model).
        #[arg(long = "N")]
        cells: Option<usize>,
    },
    /// Phase time with the loci at transmission maxima and minima.
    Phasetime {
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        energies: Energies,
        #[arg(long = "N")]
        cells: Option<usize>,
        /// Derivative step, meV.
        #[arg(long)]
        h: Option<f64>,
    },
    /// Dwell time over a window around the stack.
    Dwell {
        #[arg(long)]
        stack: PathBuf,
        #[command(flatten)]
        energies: Energies,
        /// Left end of the window, nm (stack centred on x = 0).
        #[arg(long)]
        x_left: Option<f64>,
        /// Right end of the window, nm.
        #[arg(long)]
        x_right: Option<f64>,
        #[arg(long)]
        h: Option<f64>,
    },
    /// Resonance fits at every transmission maximum and minimum.
    Resonances {
        #[command(flatten)]
        source: Source,
        #[arg(long = "N")]
        cells: Option<usize>,
        #[arg(long)]
        h: Option<f64>,
        /// Also write the approximation curves to this CSV file.
        #[arg(long)]
        curve: Option<PathBuf>,
        /// Base number of energies for the curves.
        #[arg(long, default_value_t = 2001)]
        count: usize,
    },
    /// CSV sweeps of the play model.
    Playmodel {
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=6))]
        figure: u8,
        #[arg(long = "N", default_value_t = 9)]
        cells: usize,
        #[arg(long, default_value_t = 2001)]
        count: usize,
    },
    /// Anti-reflection cell design and evaluation.
    Arc {
        #[command(subcommand)]
        action: ArcAction,
    },
    /// Wave-packet simulation through a stack.
    Tdse(TdseArgs),
    /// CSV data behind each figure.
    Reproduce {
        #[arg(long, value_parser = clap::value_parser!(u8).range(0..=9))]
        figure: u8,
        #[arg(long, default_value_t = 2001)]
        count: usize,
    },
}

#[derive(Subcommand, Serialize)]
enum ArcAction {
    /// Searches for a single-cell ARC and writes the coated stack as JSON.
    Design {
        #[arg(long)]
        stack: PathBuf,
    },
    /// Band-average transmission with and without the stack's ARC cells.
    Evaluate {
        #[arg(long)]
        stack: PathBuf,
        #[arg(long, default_value_t = 4000)]
        samples: usize,
    },
}

#[derive(Args, Serialize)]
struct TdseArgs {
    #[arg(long)]
    stack: PathBuf,
    /// Central energy, meV.
    #[arg(long)]
    e0: f64,
    /// Width of |Ψ|², nm.
    #[arg(long, default_value_t = 60.0)]
    sigma_x: f64,
    #[arg(long, default_value_t = 0.2)]
    dx: f64,
    #[arg(long, default_value_t = 1.0)]
    dt: f64,
    /// Detector position, nm (default 12 packet widths past the stack).
    #[arg(long)]
    detector: Option<f64>,
    /// Time allowed beyond free flight to the detector, fs.
    #[arg(long, default_value_t = 800.0)]
    allowance: f64,
    /// Write the JSON summary here (stderr if omitted).
    #[arg(long)]
    summary: Option<PathBuf>,
}

fn load(path: &Path, cells: Option<usize>) -> Result<ValidatedStack> {
    let mut spec = StackSpec::load(path)?;
    if let Some(n) = cells {
        spec.replicas = n;
    }
    validate_stack(&spec)
}

enum Model {
    Play(PlayModel),
    Stack(PhysicalCell, ValidatedStack),
}

impl Model {
    fn open(source: &Source, cells: Option<usize>) -> Result<Model> {
        match (&source.stack, source.playmodel) {
            (Some(p), false) => {
                let stack = load(p, cells)?;
                let cell = PhysicalCell::new(stack.spec().core.clone(), stack.outside());
                Ok(Model::Stack(cell, stack))
            }
            (None, true) => Ok(Model::Play(PlayModel::default())),
            _ => Err(Error::Invalid(vec!["give either --stack FILE or --playmodel".into()])),
        }
    }

    fn cell(&self) -> &dyn UnitCell {
        match self {
            Model::Play(m) => m,
            Model::Stack(c, _) => c,
        }
    }

    fn cells(&self, requested: Option<usize>) -> usize {
        match self {
            Model::Play(_) => requested.unwrap_or(9),
            Model::Stack(_, s) => s.spec().replicas,
        }
    }

    fn band(&self) -> Result<BandInterval> {
        match self {
            Model::Play(m) => Ok(m.band()),
            Model::Stack(c, _) => first_band(c),
        }
    }

    fn arc_stack(&self) -> Option<&ValidatedStack> {
        match self {
            Model::Stack(_, s) if s.has_arc() => Some(s),
            _ => None,
        }
    }
}

/// Explicit range if given, else the band interior, else `fallback`.
fn energy_grid(e: &Energies, band: Option<BandInterval>, fallback: (f64, f64)) -> Result<Vec<f64>> {
    match (e.e_min, e.e_max, band) {
        (Some(lo), Some(hi), _) => Ok(EnergyGrid::uniform(lo, hi, e.count)?.samples),
        (lo, hi, Some(b)) => {
            let margin = 2e-3 * b.width();
            let lo = lo.unwrap_or(b.lower + margin);
            let hi = hi.unwrap_or(b.upper - margin);
            Ok(EnergyGrid::uniform(lo, hi, e.count)?.samples)
        }
        (lo, hi, None) => Ok(EnergyGrid::uniform(lo.unwrap_or(fallback.0), hi.unwrap_or(fallback.1), e.count)?.samples),
    }
}

fn run(cli: &Cli) -> Result<()> {
    let out = cli.output.as_deref();
    let consts = PhysConstants::default();
    match &cli.command {
        Command::Kard { source, energies } => {
            let model = Model::open(source, None)?;
            let fallback = match model {
                Model::Play(_) => (45.0, 80.0),
                Model::Stack(..) => (0.5, 150.0),
            };
            let mut t = Table::new("Kard parameters of one cell", &["E_meV", "cos_phi", "phi", "mu", "chi", "band"]);
            let mut prev = None;
            for e in energy_grid(energies, None, fallback)? {
                let cos = model.cell().half_trace(e)?;
                let row = match model.cell().matrix(e) {
                    Ok(m) => {
                        let k = decompose(&m, prev.as_ref());
                        prev = Some(k);
                        vec![e.into(), cos.into(), k.phi.into(), k.mu.into(), k.chi.into(), band_label(k.band).into()]
                    }
                    // the play model is only defined inside its band
                    Err(Error::NotAllowed(_)) => {
                        prev = None;
                        let nan = f64::NAN;
                        vec![e.into(), cos.into(), nan.into(), nan.into(), nan.into(), "forbidden".into()]
                    }
                    Err(other) => return Err(other),
                };
                t.push(row);
            }
            emit(&t.render(cli), out)
        }
        Command::Transmission { source, energies, cells } => {
            let model = Model::open(source, *cells)?;
            let n = model.cells(*cells);
            let grid = energy_grid(energies, None, (0.5, 150.0))?;
            let grid = match (&model, energies.e_min, energies.e_max) {
                (Model::Play(m), None, None) => m.band().interior_samples(energies.count, 1e-9),
                _ => grid,
            };
            let mut t = Table::new("N-cell transmission", &["E_meV", "T_N", "T_1", "T_min_envelope", "band"]);
            let sweep = transmission_sweep(model.cell(), n, &grid)?;
            for s in sweep {
                let t_n = match model.arc_stack() {
                    Some(stack) => amplitudes(&stack_matrix(stack, s.energy, &consts)?).transmission(),
                    None => s.t_n,
                };
                t.push(vec![s.energy.into(), t_n.into(), s.t_1.into(), s.envelope.into(), band_label(s.band).into()]);
            }
            emit(&t.render(cli), out)
        }
        Command::Phasetime { source, energies, cells, h } => {
            let model = Model::open(source, *cells)?;
            let n = model.cells(*cells);
            let band = model.band()?;
            let h = h.unwrap_or(band.default_step());
            let grid = energy_grid(energies, Some(band), (0.0, 0.0))?;
            let mut t = Table::new(
                "phase time with loci and Bloch time",
                &["E_meV", "T_N", "tau_ph_fs", "env_max_fs", "env_min_fs", "bloch_fs"],
            );
            match model.arc_stack() {
                None => {
                    for s in timing_curve(model.cell(), n, &grid, h)? {
                        t.push(vec![
                            s.energy.into(),
                            s.t2.into(),
                            s.tau_ph.into(),
                            s.env_max.into(),
                            s.env_min.into(),
                            s.tau_bloch_total.into(),
                        ]);
                    }
                }
                Some(stack) => {
                    let scatterer = StackScatterer::new(stack.clone());
                    for e in grid {
                        let Ok(env) = envelopes(model.cell(), n, e, h) else { continue };
                        t.push(vec![
                            e.into(),
                            amplitudes(&stack_matrix(stack, e, &consts)?).transmission().into(),
                            phase_time_oracle(&scatterer, 1, e, h)?.into(),
                            env.env_max.into(),
                            env.env_min.into(),
                            env.bloch_total.into(),
                        ]);
                    }
                }
            }
            emit(&t.render(cli), out)
        }
        Command::Dwell { stack, energies, x_left, x_right, h } => {
            let stack = load(stack, None)?;
            let cell = PhysicalCell::new(stack.spec().core.clone(), stack.outside());
            let band = first_band(&cell).ok();
            let grid = energy_grid(energies, band, (0.0, 0.0))?;
            let (dl, dr) = default_window(&stack);
            let (xl, xr) = (x_left.unwrap_or(dl), x_right.unwrap_or(dr));
            let h = h.unwrap_or(1e-4);
            let mut t = Table::new(
                "dwell time over the measurement window",
                &["E_meV", "tau_dwell_fs", "tau_osc_fs", "tau_numeric_fs", "tau11_fs"],
            );
            for e in grid {
                let d = dwell_time(&stack, e, xl, xr, h, &consts)?;
                let s = smith_matrix(&stack, e, h, &consts)?;
                t.push(vec![
                    e.into(),
                    d.closed_total.into(),
                    d.oscillatory_term.into(),
                    d.numeric_total.into(),
                    s.tau11.into(),
                ]);
            }
            emit(&t.render(cli), out)
        }
        Command::Resonances { source, cells, h, curve, count } => {
            let model = Model::open(source, *cells)?;
            let n = model.cells(*cells);
            let band = model.band()?;
            let h = h.unwrap_or(band.default_step());
            let fits = fit_all(model.cell(), n, &band, h)?;
            let mut t = Table::new(
                "resonance fits: b for peaks, C and D for valleys",
                &["kind", "index", "E_meV", "gamma_meV", "b_or_C", "D", "tau_fs", "edge_degraded"],
            );
            for p in &fits.peaks {
                let nan = f64::NAN;
                t.push(vec![
                    "peak".into(),
                    p.m.into(),
                    p.energy.into(),
                    p.gamma.into(),
                    p.b.into(),
                    nan.into(),
                    p.tau_peak.into(),
                    false.into(),
                ]);
            }
            for v in &fits.valleys {
                t.push(vec![
                    "valley".into(),
                    v.p.into(),
                    v.energy.into(),
                    v.gamma.into(),
                    v.c.into(),
                    v.d.into(),
                    v.tau_valley.into(),
                    v.edge_degraded.into(),
                ]);
            }
            if let Some(path) = curve {
                let energies = refined_energies(&fits, &band, *count, 2e-3, 40);
                let exact = timing_curve(model.cell(), n, &energies, h)?;
                let approx = approx_curves(&fits, &exact.iter().map(|s| s.energy).collect::<Vec<_>>());
                let mut c = Table::new(
                    "exact curves and resonance approximations",
                    &["E_meV", "T_exact", "T_approx", "tau_exact_fs", "tau_approx_fs", "t_segment", "tau_segment"],
                );
                for (s, a) in exact.iter().zip(&approx) {
                    c.push(vec![
                        s.energy.into(),
                        s.t2.into(),
                        a.t_approx.into(),
                        s.tau_ph.into(),
                        a.tau_approx.into(),
                        segment_label(a.t_segment).into(),
                        segment_label(a.tau_segment).into(),
                    ]);
                }
                emit(&c.render(cli), Some(path))?;
            }
            emit(&t.render(cli), out)
        }
        Command::Playmodel { figure, cells, count } => {
            emit(&figures::playmodel_figure(*figure, *cells, *count)?.render(cli), out)
        }
        Command::Reproduce { figure, count } => emit(&figures::reproduce(*figure, *count)?.render(cli), out),
        Command::Arc { action } => match action {
            ArcAction::Design { stack } => {
                let stack = load(stack, None)?;
                let spec = stack.spec().clone();
                let band = first_band(&PhysicalCell::new(spec.core.clone(), spec.outside))?;
                let design = design_rule_of_thumb(&spec.core, &spec.outside, &band, &consts)?;
                let coated = design.apply(spec.without_arc());
                log::info!(
                    "ARC scales {:.6} (lead-material layers) and {:.6} (others), residual {:.3e}",
                    design.well_scale,
                    design.barrier_scale,
                    design.residual
                );
                eprint!("{}", summary(cli, json!({ "band": band, "design": design })));
                let mut text = coated.to_json();
                text.push('\n');
                emit(&text, out)
            }
            ArcAction::Evaluate { stack, samples } => {
                let stack = load(stack, None)?;
                if !stack.has_arc() {
                    return Err(Error::Invalid(vec!["stack has no ARC cells to evaluate".into()]));
                }
                let spec = stack.spec();
                let band = first_band(&PhysicalCell::new(spec.core.clone(), spec.outside))?;
                let bare = validate_stack(&spec.clone().without_arc())?;
                let with = band_average_transmission(&stack, &band, *samples, &consts)?;
                let without = band_average_transmission(&bare, &band, *samples, &consts)?;
                let result = json!({
                    "band": band,
                    "samples": samples,
                    "average_transmission_with_arc": with,
                    "average_transmission_without_arc": without,
                });
                emit(&summary(cli, result), out)
            }
        },
        Command::Tdse(args) => run_tdse(cli, args, &consts),
    }
}

fn run_tdse(cli: &Cli, args: &TdseArgs, consts: &PhysConstants) -> Result<()> {
    let stack = load(&args.stack, None)?;
    let lead = stack.outside();
    let margin = 12.0 * args.sigma_x;
    let packet = WavePacket::new(stack.left() - margin, args.sigma_x, args.e0, &lead, consts)?;
    let cell = PhysicalCell::new(stack.spec().core.clone(), lead);
    let band = first_band(&cell)?;
    if let Err(e) = packet.check_band(band.lower, band.upper, consts) {
        log::warn!("{e}");
    }
    let detector = args.detector.unwrap_or(stack.right() + margin);
    let det = Detection {
        split: stack.right(),
        detector,
    };
    let grid = Grid1D::for_run(&stack, &packet, detector, args.allowance, args.dx, args.dt, consts)?;
    log::info!("{} points, {} steps", grid.n_points, grid.n_steps);
    let run = evolve(&stack, &grid, &packet, det, consts)?;
    let free = evolve_free(&stack, &grid, &packet, det, consts)?;
    let pred = predictions(&stack, &packet, band.default_step(), consts)?;
    let delay = packet_delay(&run, &free, pred.bloch_total)?;
    let mut t = Table::new(
        "transmitted part of the packet against time",
        &["t_fs", "transmitted", "centroid_nm", "beyond_detector", "norm"],
    );
    for p in &run.series {
        t.push(vec![p.time.into(), p.transmitted.into(), p.centroid.into(), p.beyond_detector.into(), p.norm.into()]);
    }
    let result = json!({
        "packet": packet,
        "grid": grid,
        "detection": det,
        "delay": delay,
        "norm_drift": run.norm_drift,
        "energy_drift": run.energy_drift,
        "predictions": pred,
    });
    let text = summary(cli, result);
    match &args.summary {
        Some(path) => emit(&text, Some(path))?,
        None => eprint!("{text}"),
    }
    emit(&t.render(cli), cli.output.as_deref())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 3 } else { 4 })
        }
    }
}
