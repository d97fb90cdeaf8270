mod output;
mod verify;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use compliance_iv::bayesnet::{build_net, closed_form_observables};
use compliance_iv::effects::{date, date_weights, ite_stochastic, late};
use compliance_iv::identification::{iv_from_observables, verify_theorem1, verify_theorem2};
use compliance_iv::io::{load_population, population_to_string, write_atomic};
use compliance_iv::population::{
    classify_stochastic, degree_of_compliance, lift_deterministic, GeneralComplianceClass,
};
use compliance_iv::scenarios::{
    defier_family, generate_population, parse_grid, ClassFractions, GeneratorKind, GeneratorSpec,
};
use compliance_iv::trial::{
    bias_sweep, empirical_conditionals, exact_group_moments, iv_estimate, simulate_trial,
    wald_standard_error, SweepConfig,
};
use compliance_iv::{effects::ate, AnyPopulation, Error, Exact, Scalar};
use serde_json::json;

use output::{Cell, Format, Report, Table};
use verify::Status;

const EXIT_FAILURE: u8 = 1;
const EXIT_STRICT: u8 = 3;
const EXIT_IO: u8 = 4;
const FLOAT_WEAK_TOL: f64 = 1e-9;

#[derive(Debug, Parser)]
#[command(name = "compliance-iv", version, about = "Exact and simulated IV analysis of noncompliance trials")]
struct Cli {
    /// Arithmetic for model quantities.
    #[arg(long, global = true, value_enum, default_value_t = Mode::Rational)]
    mode: Mode,

    /// Probability of assignment to the treatment group.
    #[arg(long, global = true, default_value = "0.5")]
    assign_prob: String,

    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Output file, written atomically. Standard output when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Defaults to `csv` for `sweep` and `table` elsewhere.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,

    /// Exit with status 3 when the population violates the compliance assumptions.
    #[arg(long, global = true)]
    strict: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Rational,
    Float,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum KindArg {
    DeterministicMix,
    StochasticRandom,
    StochasticMonotone,
}

impl From<KindArg> for GeneratorKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::DeterministicMix => GeneratorKind::DeterministicMix,
            KindArg::StochasticRandom => GeneratorKind::StochasticRandom,
            KindArg::StochasticMonotone => GeneratorKind::StochasticMonotone,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a population file.
    Generate {
        #[arg(long, value_enum, default_value_t = KindArg::DeterministicMix)]
        kind: KindArg,
        #[arg(long, default_value_t = 20)]
        size: usize,
        #[arg(long, default_value_t = 0.5)]
        complier: f64,
        #[arg(long, default_value_t = 0.0)]
        defier: f64,
        #[arg(long, default_value_t = 0.25)]
        always_taker: f64,
        /// Slots not claimed by the other classes are never-takers as well.
        #[arg(long, default_value_t = 0.0)]
        never_taker: f64,
        #[arg(long, default_value_t = 1000)]
        grid_denominator: u32,
    },
    /// Individual and average treatment effects.
    Effects {
        population: PathBuf,
        /// List every individual instead of the summary.
        #[arg(long)]
        individuals: bool,
    },
    /// Compare LATE or DATE with the IV estimand of the population's net.
    Identify { population: PathBuf },
    /// Simulate a trial; writes the dataset CSV and a JSON manifest next to it.
    Simulate {
        population: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        n: usize,
        /// Add the latent individual index as a `latent_u` column.
        #[arg(long)]
        latent: bool,
    },
    /// Run the invariant suite; exits 0 only if every check passes.
    Verify {
        population: PathBuf,
        /// Records per simulation check.
        #[arg(long, default_value_t = 10_000)]
        sim_n: usize,
    },
    /// IV bias as the defier fraction grows, exact and Monte Carlo.
    Sweep {
        /// `start:stop:step` or a single value.
        #[arg(long, default_value = "0:0.3:0.05")]
        defier_fraction: String,
        /// Comma-separated sample sizes.
        #[arg(long, value_delimiter = ',', default_value = "1000")]
        n: Vec<usize>,
        /// Seeds per point, counting up from `--seed`.
        #[arg(long, default_value_t = 20)]
        seeds: u64,
        #[arg(long, default_value_t = 20)]
        size: usize,
    },
    /// Dump the causal Bayes net.
    Net {
        population: PathBuf,
        /// Every entry of the joint over (U, Assign, Take, Cure) instead of the parameter table.
        #[arg(long)]
        joint: bool,
    },
}

enum Failure {
    Model(Error),
    Strict(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Model(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Model(Error::Io(e))
    }
}

type CmdResult = Result<ExitCode, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.mode {
        Mode::Rational => run::<Exact>(&cli),
        Mode::Float => run::<f64>(&cli),
    };
    match result {
        Ok(code) => code,
        Err(Failure::Strict(why)) => {
            eprintln!("error[assumption_violation]: {why}");
            ExitCode::from(EXIT_STRICT)
        }
        Err(Failure::Model(e)) => {
            eprintln!("error[{}]: {e}", e.kind());
            ExitCode::from(if matches!(e, Error::Io(_)) { EXIT_IO } else { EXIT_FAILURE })
        }
    }
}

fn run<S: Scalar>(cli: &Cli) -> CmdResult {
    let assign_prob = S::parse_text(&cli.assign_prob).ok_or_else(|| {
        Error::InvalidParams(format!("assignment probability `{}` is not a number", cli.assign_prob))
    })?;
    let format = |default| cli.format.unwrap_or(default);
    match &cli.command {
        Command::Generate {
            kind,
            size,
            complier,
            defier,
            always_taker,
            never_taker,
            grid_denominator,
        } => {
            let spec = GeneratorSpec {
                kind: (*kind).into(),
                size: *size,
                fractions: ClassFractions {
                    complier: *complier,
                    defier: *defier,
                    always_taker: *always_taker,
                    never_taker: *never_taker,
                },
                seed: cli.seed,
                grid_denominator: *grid_denominator,
            };
            let pop = generate_population::<S>(&spec)?;
            emit(cli.out.as_deref(), &population_to_string(&pop))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Effects { population, individuals } => {
            let pop = load_population::<S>(population)?;
            let report = effects_report(&pop, *individuals)?;
            emit(cli.out.as_deref(), &report.render(format(Format::Table)))?;
            strict_check(cli, &pop)
        }
        Command::Identify { population } => {
            let pop = load_population::<S>(population)?;
            let r = match &pop {
                AnyPopulation::Deterministic(p) => verify_theorem1(p, assign_prob)?,
                AnyPopulation::Stochastic(p) => verify_theorem2(p, assign_prob, &S::default_tol())?,
            };
            let lhs_name = match &pop {
                AnyPopulation::Deterministic(_) => "late",
                AnyPopulation::Stochastic(_) => "date",
            };
            let mut t = Table::new(&["quantity", "value"]);
            let o = &r.observables;
            for (name, cell) in [
                (lhs_name, Cell::opt(r.estimand_lhs.as_ref())),
                ("iv_estimand", Cell::opt(r.estimand_rhs.as_ref())),
                ("abs_gap", Cell::opt(r.abs_gap.as_ref())),
                ("pr_cure_given_assign1", Cell::num(&o.cure_given_assign1)),
                ("pr_cure_given_assign0", Cell::num(&o.cure_given_assign0)),
                ("pr_take_given_assign1", Cell::num(&o.take_given_assign1)),
                ("pr_take_given_assign0", Cell::num(&o.take_given_assign0)),
                ("exists_complier", Cell::int(r.assumptions.exists_complier)),
                ("no_defiers", Cell::int(r.assumptions.no_defiers)),
                ("applicable", Cell::int(r.applicable())),
                ("numeric_mode", Cell::int(r.numeric_mode)),
            ] {
                t.push(vec![Cell::text(name), cell]);
            }
            let json = serde_json::to_value(&r).expect("report serializes");
            emit(cli.out.as_deref(), &Report { json, table: t }.render(format(Format::Table)))?;
            strict_check(cli, &pop)
        }
        Command::Simulate { population, n, latent } => {
            let pop = load_population::<S>(population)?;
            simulate(cli, &pop, assign_prob, *n, *latent, format(Format::Table))?;
            strict_check(cli, &pop)
        }
        Command::Verify { population, sim_n } => {
            let pop = load_population::<S>(population)?;
            let checks = verify::run_suite(&pop, &assign_prob, cli.seed, *sim_n)?;
            let failed = checks.iter().filter(|c| c.status == Status::Fail).count();
            let mut t = Table::new(&["check", "status", "detail"]);
            for c in &checks {
                let status = serde_json::to_value(c.status).expect("status serializes");
                t.push(vec![
                    Cell::text(c.name),
                    Cell::text(status.as_str().unwrap_or_default()),
                    Cell::text(&c.detail),
                ]);
            }
            let json = json!({ "population": pop.name(), "passed": failed == 0, "checks": checks });
            emit(cli.out.as_deref(), &Report { json, table: t }.render(format(Format::Table)))?;
            Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::from(EXIT_FAILURE) })
        }
        Command::Sweep { defier_fraction, n, seeds, size } => {
            let grid = parse_grid(defier_fraction)?;
            let config = SweepConfig {
                assign_prob: assign_prob.to_f64(),
                sample_sizes: n.clone(),
                seeds: (cli.seed..cli.seed.saturating_add(*seeds)).collect(),
                weak_tol: FLOAT_WEAK_TOL,
            };
            let rows = bias_sweep::<S, _>(&grid, |f| Ok(lift_deterministic::<S>(&defier_family(*size, f)?)), &config)?;
            let mut t = Table::new(&[
                "defier_fraction",
                "n",
                "no_defiers",
                "exact_estimand",
                "exact_target",
                "gap",
                "mc_mean",
                "mc_sd",
                "mc_failures",
            ]);
            for r in &rows {
                t.push(vec![
                    Cell::int(r.parameter),
                    Cell::int(r.n),
                    Cell::int(r.no_defiers),
                    Cell::opt(r.exact_estimand.as_ref()),
                    Cell::opt(r.exact_target.as_ref()),
                    Cell::opt(r.gap.as_ref()),
                    Cell::float(r.mc_mean),
                    Cell::float(r.mc_sd),
                    Cell::int(r.mc_failures),
                ]);
            }
            let json = serde_json::to_value(&rows).expect("rows serialize");
            emit(cli.out.as_deref(), &Report { json, table: t }.render(format(Format::Csv)))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Net { population, joint } => {
            let pop = load_population::<S>(population)?;
            let net = build_net(&pop.to_stochastic(), assign_prob)?;
            let report = if *joint {
                let entries = net.joint_table();
                let mut t = Table::new(&["u", "assign", "take", "cure", "prob"]);
                for e in &entries {
                    t.push(vec![
                        Cell::int(e.u),
                        Cell::int(u8::from(e.assign)),
                        Cell::int(u8::from(e.take)),
                        Cell::int(u8::from(e.cure)),
                        Cell::num(&e.prob),
                    ]);
                }
                Report { json: serde_json::to_value(&entries).expect("entries serialize"), table: t }
            } else {
                let mut t = Table::new(&["u", "t", "t_star", "c", "c_star"]);
                for (u, p) in net.params().iter().enumerate() {
                    t.push(vec![
                        Cell::int(u),
                        Cell::num(p.t()),
                        Cell::num(p.t_star()),
                        Cell::num(p.c()),
                        Cell::num(p.c_star()),
                    ]);
                }
                Report { json: serde_json::to_value(net.to_json()).expect("net serializes"), table: t }
            };
            emit(cli.out.as_deref(), &report.render(format(Format::Table)))?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(path) => write_atomic(path, text.as_bytes())?,
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.flush()?;
        }
    }
    Ok(())
}

fn strict_check<S: Scalar>(cli: &Cli, pop: &AnyPopulation<S>) -> CmdResult {
    let v = pop.validate(&S::default_tol());
    if cli.strict && !v.holds() {
        return Err(Failure::Strict(format!(
            "population `{}` has {} compliers and {} defiers",
            pop.name(),
            v.complier_count,
            v.defier_count
        )));
    }
    Ok(ExitCode::SUCCESS)
}

fn class_label(class: &GeneralComplianceClass) -> &'static str {
    match class {
        GeneralComplianceClass::Complier => "complier",
        GeneralComplianceClass::Defier => "defier",
        GeneralComplianceClass::IndifferentTaker { is_always_taker: true, .. } => "always_taker",
        GeneralComplianceClass::IndifferentTaker { is_never_taker: true, .. } => "never_taker",
        GeneralComplianceClass::IndifferentTaker { .. } => "indifferent",
    }
}

fn effects_report<S: Scalar>(pop: &AnyPopulation<S>, individuals: bool) -> Result<Report, Failure> {
    let tol = S::default_tol();
    let stoch = pop.to_stochastic();
    let weights = date_weights(&stoch, &tol).ok();
    let date = date(&stoch, &tol).ok();
    let (ate, late) = match pop {
        AnyPopulation::Deterministic(p) => (Some(ate::<S>(p)), late::<S>(p).ok()),
        AnyPopulation::Stochastic(_) => (None, None),
    };

    let mut rows = Vec::with_capacity(stoch.len());
    let mut per = Table::new(&["u", "class", "t", "t_star", "c", "c_star", "dc", "ite", "date_weight"]);
    for (u, ind) in stoch.iter().enumerate() {
        let class = class_label(&classify_stochastic(ind, &tol));
        let (dc, ite) = (degree_of_compliance(ind), ite_stochastic(ind));
        let weight = weights.as_ref().map(|w| w[u].clone());
        per.push(vec![
            Cell::int(u),
            Cell::text(class),
            Cell::num(ind.t()),
            Cell::num(ind.t_star()),
            Cell::num(ind.c()),
            Cell::num(ind.c_star()),
            Cell::num(&dc),
            Cell::num(&ite),
            Cell::opt(weight.as_ref()),
        ]);
        rows.push(json!({
            "u": u,
            "class": class,
            "dc": scalar_json(&dc),
            "ite": scalar_json(&ite),
            "date_weight": weight.as_ref().map(scalar_json),
        }));
    }

    let mut summary = Table::new(&["quantity", "value", "detail"]);
    if let Some(a) = &ate {
        summary.push(vec![Cell::text("ate"), Cell::num(a), Cell::text("mean ITE")]);
    }
    if let AnyPopulation::Deterministic(_) = pop {
        let detail = late.as_ref().map_or("no compliers".to_string(), |l| {
            format!("{} compliers", l.n_contributing)
        });
        summary.push(vec![Cell::text("late"), Cell::opt(late.as_ref().map(|l| &l.value)), Cell::text(detail)]);
    }
    let detail = date.as_ref().map_or("no compliers".to_string(), |d| {
        format!("{} positive-DC individuals", d.n_contributing)
    });
    summary.push(vec![Cell::text("date"), Cell::opt(date.as_ref().map(|d| &d.value)), Cell::text(detail)]);

    let json = json!({
        "population": pop.name(),
        "kind": pop.kind(),
        "ate": ate.as_ref().map(scalar_json),
        "late": late.map(|l| serde_json::to_value(l).expect("report serializes")),
        "date": date.map(|d| serde_json::to_value(d).expect("report serializes")),
        "individuals": rows,
    });
    Ok(Report { json, table: if individuals { per } else { summary } })
}

fn scalar_json<S: Scalar>(v: &S) -> serde_json::Value {
    match S::MODE {
        compliance_iv::NumericMode::Float => json!(v.to_f64()),
        compliance_iv::NumericMode::Rational => json!(v.to_text()),
    }
}

fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("manifest.json")
}

fn simulate<S: Scalar>(
    cli: &Cli,
    pop: &AnyPopulation<S>,
    assign_prob: S,
    n: usize,
    latent: bool,
    format: Format,
) -> Result<(), Failure> {
    let stoch = pop.to_stochastic();
    let p = assign_prob.to_f64();
    let ds = simulate_trial(&stoch, p, n, cli.seed)?;
    let mut csv = Vec::new();
    ds.write_csv(&mut csv, latent)?;

    let estimate = iv_estimate(ds.observed(), FLOAT_WEAK_TOL);
    let net = build_net(&stoch, assign_prob)?;
    let exact = iv_from_observables(&closed_form_observables(&net), &S::default_weak_tol()).ok();
    let se = match empirical_conditionals(ds.observed()) {
        Ok(e) if exact.is_some() => {
            let (treat, control) = exact_group_moments(&net)?;
            Some(wald_standard_error(&treat, &control, e.n_assign1, e.n_assign0))
        }
        _ => None,
    };
    let (estimate_value, estimate_error) = match &estimate {
        Ok(v) => (Some(*v), None),
        Err(e) => (None, Some(e.kind())),
    };

    let mut manifest = ds.manifest();
    manifest.has_latent = latent;
    let summary = json!({
        "manifest": manifest,
        "iv_estimate": estimate_value,
        "iv_estimate_error": estimate_error,
        "exact_estimand": exact.as_ref().map(scalar_json),
        "standard_error": se,
    });

    let mut t = Table::new(&["quantity", "value"]);
    t.push(vec![Cell::text("n"), Cell::int(n)]);
    t.push(vec![Cell::text("seed"), Cell::int(cli.seed)]);
    t.push(vec![Cell::text("iv_estimate"), Cell::float(estimate_value)]);
    t.push(vec![Cell::text("exact_estimand"), Cell::opt(exact.as_ref())]);
    t.push(vec![Cell::text("standard_error"), Cell::float(se)]);
    let report = Report { json: summary.clone(), table: t }.render(format);

    match &cli.out {
        Some(path) => {
            write_atomic(path, &csv)?;
            let mut side = serde_json::to_string_pretty(&summary).expect("JSON values serialize");
            side.push('\n');
            write_atomic(sidecar_path(path), side.as_bytes())?;
            emit(None, &report)?;
        }
        None => {
            emit(None, std::str::from_utf8(&csv).expect("CSV is ASCII"))?;
            eprint!("{report}");
        }
    }
    Ok(())
}
