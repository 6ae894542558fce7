//! `scr`: aggregate, allocate and compare standard-formula capital trees.

mod input;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use scr_core::diagnostics::Status;
use scr_core::{
    aggregate_tree, allocate_cut, calibrate_rho, compare_principles, run_property_suite, Cut, Principle,
    PrincipleSpec, RiskTree, ScrError,
};

use report::{Cell, Format, Report};

#[derive(Parser)]
#[command(
    name = "scr",
    version,
    about = "Square-root capital aggregation and Euler allocation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Output {
    #[arg(long, value_enum, default_value = "table")]
    format: Format,
    /// Decimal places in table mode.
    #[arg(long, default_value_t = 2)]
    precision: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Aggregated SCR and diversification effect of every node.
    Aggregate {
        #[arg(long)]
        tree: PathBuf,
        #[command(flatten)]
        output: Output,
    },
    /// Allocate the BSCR over one cut of the tree.
    Allocate {
        #[arg(long)]
        tree: PathBuf,
        #[arg(long)]
        principle: Principle,
        /// `node_id,driver` rows for the market-driven principle.
        #[arg(long)]
        drivers: Option<PathBuf>,
        /// `node_id,covariance` rows; switches the covariance principle from
        /// the SCR proxy to explicit covariances.
        #[arg(long)]
        covariances: Option<PathBuf>,
        /// Variance paired with `--covariances` (default: their sum).
        #[arg(long, requires = "covariances")]
        variance: Option<f64>,
        /// Depth, node id (its children), comma-separated ids, or `leaves`.
        #[arg(long, default_value = "1")]
        at: Cut,
        #[command(flatten)]
        output: Output,
    },
    /// Allocate one cut under several principles, with deviations from SFEP.
    Compare {
        #[arg(long)]
        tree: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        principles: Vec<Principle>,
        #[arg(long)]
        drivers: Option<PathBuf>,
        #[arg(long, default_value = "1")]
        at: Cut,
        #[command(flatten)]
        output: Output,
    },
    /// Correlation implied by pairs of VaRs and their joint VaR.
    Calibrate {
        /// `var_x,var_y,var_xy` rows.
        #[arg(long)]
        vars: PathBuf,
        #[command(flatten)]
        output: Output,
    },
    /// Run the property checks on a tree and randomized perturbations of it.
    Check {
        #[arg(long)]
        tree: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        trials: usize,
    },
}

#[derive(Debug)]
pub enum Failure {
    Validation(String),
    Computation(String),
    Io { path: PathBuf, message: String },
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 1,
            Failure::Computation(_) => 2,
            Failure::Io { .. } => 3,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Validation(m) => write!(f, "invalid input: {m}"),
            Failure::Computation(m) => write!(f, "computation failed: {m}"),
            Failure::Io { path, message } => write!(f, "cannot read {}: {message}", path.display()),
        }
    }
}

impl From<ScrError> for Failure {
    fn from(e: ScrError) -> Self {
        use ScrError::*;
        match e {
            IndefiniteAggregation { .. }
            | LengthMismatch { .. }
            | ZeroMarginalVar
            | InvalidCalibration(_)
            | ZeroWeights(_)
            | NegativeWeight { .. }
            | NonPositiveDenominator(_)
            | ZeroVariance => Failure::Computation(e.to_string()),
            _ => Failure::Validation(e.to_string()),
        }
    }
}

fn name_of(tree: &RiskTree, id: &str) -> String {
    tree.node(id).map(|n| n.name.clone()).unwrap_or_default()
}

fn aggregate(tree: &RiskTree) -> Result<Report, Failure> {
    let agg = aggregate_tree(tree)?;
    let mut r = Report::new(["node", "name", "depth", "scr", "diversification"]);
    for id in tree.depth_first() {
        let a = agg.get(id).expect("every node is aggregated");
        let depth = tree.depth(id).unwrap_or(0);
        r.rows.push(vec![
            Cell::text(id),
            Cell::text(format!("{}{}", "  ".repeat(depth), name_of(tree, id))),
            Cell::Count(depth),
            Cell::Amount(a.aggregated_scr),
            Cell::Amount(a.diversification_effect),
        ]);
    }
    Ok(r)
}

fn spec_for(
    principle: Principle,
    drivers: Option<&PathBuf>,
    covariances: Option<&PathBuf>,
    variance: Option<f64>,
) -> Result<PrincipleSpec, Failure> {
    let mut spec = PrincipleSpec::new(principle);
    if let Some(path) = drivers {
        spec.drivers = Some(input::load_node_values(path)?);
    }
    if let Some(path) = covariances {
        spec.covariances = Some(input::load_node_values(path)?);
        spec.variance = variance;
    }
    Ok(spec)
}

fn allocate(tree: &RiskTree, spec: &PrincipleSpec, cut: &Cut) -> Result<Report, Failure> {
    let agg = aggregate_tree(tree)?;
    let a = allocate_cut(tree, &agg, spec, cut)?;
    let with_ratio = a.ratios.is_some();
    let mut columns = vec!["node", "name", "standalone", "allocated"];
    if with_ratio {
        columns.push("allocation_ratio");
    }
    let mut r = Report::new(columns);
    for (i, id) in a.nodes.iter().enumerate() {
        let mut row = vec![
            Cell::text(id),
            Cell::text(name_of(tree, id)),
            Cell::Amount(a.standalone[i]),
            Cell::Amount(a.allocated[i]),
        ];
        if let Some(ratios) = &a.ratios {
            row.push(Cell::Percent((a.standalone[i] != 0.0).then_some(ratios[i])));
        }
        r.rows.push(row);
    }
    let mut total = vec![
        Cell::text("total"),
        Cell::text(""),
        Cell::Amount(a.standalone.iter().sum()),
        Cell::Amount(a.allocated.iter().sum()),
    ];
    if with_ratio {
        total.push(Cell::Percent(None));
    }
    r.footer.push(total);
    Ok(r)
}

fn compare(tree: &RiskTree, specs: &[PrincipleSpec], cut: &Cut) -> Result<Report, Failure> {
    let c = compare_principles(tree, specs, cut)?;
    let mut columns = vec!["node".to_string(), "name".into(), "standalone".into()];
    columns.extend(c.principles.iter().map(|p| p.to_string()));
    columns.extend(
        c.principles
            .iter()
            .filter(|&&p| p != Principle::Sfep)
            .map(|p| format!("{p}_vs_sfep")),
    );
    let mut r = Report::new(columns);
    let deviation_columns: Vec<usize> = (0..c.principles.len())
        .filter(|&k| c.principles[k] != Principle::Sfep)
        .collect();
    for row in &c.rows {
        let mut cells = vec![
            Cell::text(&row.node),
            Cell::text(&row.name),
            Cell::Amount(row.standalone),
        ];
        cells.extend(row.allocated.iter().map(|&a| Cell::Amount(a)));
        cells.extend(
            deviation_columns
                .iter()
                .map(|&k| Cell::Percent(row.deviation_vs_sfep[k])),
        );
        r.rows.push(cells);
    }
    let mut total = vec![
        Cell::text("total"),
        Cell::text(""),
        Cell::Amount(c.rows.iter().map(|r| r.standalone).sum()),
    ];
    total.extend(c.totals.iter().map(|&t| Cell::Amount(t)));
    total.extend(deviation_columns.iter().map(|_| Cell::Percent(None)));
    r.footer.push(total);
    Ok(r)
}

fn calibrate(rows: &[[f64; 3]]) -> Result<Report, Failure> {
    let mut r = Report::new(["var_x", "var_y", "var_xy", "rho", "clamped"]);
    for [x, y, xy] in rows {
        let c = calibrate_rho(*x, *y, *xy)?;
        r.rows.push(vec![
            Cell::Real(*x),
            Cell::Real(*y),
            Cell::Real(*xy),
            Cell::Real(c.rho),
            Cell::Flag(c.clamped),
        ]);
    }
    Ok(r)
}

fn check(tree: &RiskTree, seed: u64, trials: usize) -> Result<String, Failure> {
    let findings = run_property_suite(tree, seed, trials);
    let mut out = String::new();
    for f in &findings {
        out.push_str(&format!("{f}\n"));
    }
    let failed = findings.iter().filter(|f| f.status == Status::Failed).count();
    if failed == 0 {
        out.push_str("all properties passed\n");
        return Ok(out);
    }
    print!("{out}");
    if findings.iter().any(|f| f.property == "validation") {
        Err(Failure::Validation(format!("{failed} validation finding(s)")))
    } else {
        Err(Failure::Computation(format!("{failed} properties failed")))
    }
}

fn run(cli: Cli) -> Result<String, Failure> {
    match cli.command {
        Command::Aggregate { tree, output } => {
            let tree = input::load_tree(&tree)?;
            Ok(aggregate(&tree)?.render(output.format, output.precision))
        }
        Command::Allocate {
            tree,
            principle,
            drivers,
            covariances,
            variance,
            at,
            output,
        } => {
            let tree = input::load_tree(&tree)?;
            let spec = spec_for(principle, drivers.as_ref(), covariances.as_ref(), variance)?;
            Ok(allocate(&tree, &spec, &at)?.render(output.format, output.precision))
        }
        Command::Compare {
            tree,
            principles,
            drivers,
            at,
            output,
        } => {
            let tree = input::load_tree(&tree)?;
            let specs = principles
                .into_iter()
                .map(|p| spec_for(p, drivers.as_ref(), None, None))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(compare(&tree, &specs, &at)?.render(output.format, output.precision))
        }
        Command::Calibrate { vars, output } => {
            let rows = input::load_vars(&vars)?;
            Ok(calibrate(&rows)?.render(output.format, output.precision))
        }
        Command::Check { tree, seed, trials } => {
            let tree = input::load_tree(&tree)?;
            check(&tree, seed, trials)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("scr: {e}");
            ExitCode::from(e.code())
        }
    }
}
