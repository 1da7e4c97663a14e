use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use lipext::corpus::{corpus_sweep, rows_to_csv, standard_corpus, SubsetRule, SweepSpec};
use lipext::error::{Error, Result};
use lipext::extension::{
    bound_report_for, build_operator, lipschitz_constant, operator_norm_exact, NormKind,
};
use lipext::free_space::{kr_norm, kr_norm_dual};
use lipext::generators::{GeneratorKind, GeneratorSpec};
use lipext::io::{self, Manifest};
use lipext::lift::{certify_all, DEFAULT_GRID_SIZE};
use lipext::measures::{family_constants, FamilySpec, MeasureFamily, DEFAULT_DILATIONS};
use lipext::metric::{matrix_from_rows, validate_metric, FiniteMetricSpace};
use lipext::nets::{check_order_bound, max_separated_net};
use lipext::whitney::WhitneyApparatus;

#[derive(Parser)]
#[command(name = "lipext", version, about = "Lipschitz extension operators on finite metric spaces")]
struct Cli {
    /// Write output here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Seed recorded in the manifest and used by randomized steps.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
    Table,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a space and write it in explicit-matrix form.
    Gen {
        #[command(subcommand)]
        kind: GenKind,
    },
    /// Check the metric axioms of a space file.
    Validate {
        #[arg(long)]
        space: PathBuf,
    },
    /// Greedy maximal separated net.
    Net {
        #[arg(long)]
        space: PathBuf,
        #[arg(long)]
        epsilon: f64,
    },
    /// Cover radii, selected pairs and the pre-extension matrix.
    Whitney {
        #[arg(long)]
        space: PathBuf,
        #[arg(long)]
        subset: String,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Doubling, consistency, uniformity and dilation constants.
    Constants {
        #[command(flatten)]
        input: FamilyInput,
        #[arg(long)]
        rmax: Option<f64>,
        /// Comma-separated dilation factors.
        #[arg(long)]
        dilations: Option<String>,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
    /// Certify the three lifting lemmas.
    Lift {
        #[command(flatten)]
        input: FamilyInput,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        rmax: Option<f64>,
        #[arg(long, default_value_t = DEFAULT_GRID_SIZE)]
        grid_size: usize,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Extend boundary values with the operator.
    Extend {
        #[command(flatten)]
        input: FamilyInput,
        #[arg(long)]
        subset: String,
        /// Values on S: JSON array (scalar) or matrix (|S| x k).
        #[arg(long = "f")]
        values: PathBuf,
        #[arg(long, default_value = "linf")]
        norm: String,
    },
    /// Exact operator norm with attaining pair and extremal function.
    Opnorm {
        #[command(flatten)]
        input: FamilyInput,
        #[arg(long)]
        subset: String,
    },
    /// Transport norm of a balanced chain.
    Kr {
        #[arg(long)]
        space: PathBuf,
        #[arg(long)]
        chain: PathBuf,
        #[arg(long, default_value_t = 0)]
        basepoint: usize,
    },
    /// Full bound report.
    Report {
        #[command(flatten)]
        input: FamilyInput,
        #[arg(long)]
        subset: String,
        #[arg(long)]
        rmax: Option<f64>,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
    /// Bound reports over a corpus, as CSV.
    Sweep {
        /// Sweep file with an "instances" list.
        #[arg(long, conflicts_with = "standard")]
        spec: Option<PathBuf>,
        /// Generate this many standard instances instead.
        #[arg(long)]
        standard: Option<usize>,
        #[arg(long, default_value_t = 40)]
        max_points: usize,
        #[arg(long)]
        rmax: Option<f64>,
    },
}

#[derive(Subcommand)]
enum GenKind {
    Path {
        #[arg(long)]
        n: usize,
    },
    Grid {
        #[arg(long)]
        k: usize,
    },
    Tree {
        #[arg(long)]
        branching: usize,
        #[arg(long)]
        depth: usize,
    },
    EuclideanCloud {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        dim: usize,
    },
    H2Cloud {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        radius: f64,
    },
}

#[derive(Args)]
struct FamilyInput {
    /// Space file; optional when the family file embeds its space.
    #[arg(long)]
    space: Option<PathBuf>,
    /// counting | dirac | kernel:SCALE | path to a family file.
    #[arg(long)]
    family: String,
}

impl FamilyInput {
    fn load(&self) -> Result<Arc<MeasureFamily>> {
        let base = self.space.as_deref().map(io::read_space).transpose()?.map(Arc::new);
        let builtin = match self.family.as_str() {
            "counting" => Some(FamilySpec::Counting),
            "dirac" => Some(FamilySpec::Dirac),
            s => match s.strip_prefix("kernel:") {
                Some(scale) => Some(FamilySpec::Kernel {
                    scale: scale.parse().map_err(|_| Error::Parameter(format!("bad kernel scale {scale:?}")))?,
                }),
                None => None,
            },
        };
        let family = match builtin {
            Some(spec) => {
                let base = base.ok_or_else(|| Error::Parameter("--space is required for a built-in family".into()))?;
                spec.build(base)?
            }
            None => io::read_family(Path::new(&self.family), base)?,
        };
        Ok(Arc::new(family))
    }

    fn names(&self) -> Vec<String> {
        let mut v: Vec<String> = self.space.iter().map(|p| p.display().to_string()).collect();
        v.push(self.family.clone());
        v
    }
}

/// `all`, `net:FRACTION`, `random:FRACTION` or a comma-separated index list.
fn parse_subset(spec: &str, space: &FiniteMetricSpace, seed: u64) -> Result<Vec<usize>> {
    let rule = if spec == "all" {
        SubsetRule::All
    } else if let Some(f) = spec.strip_prefix("net:") {
        SubsetRule::Net { fraction: f.parse().map_err(|_| Error::Parameter(format!("bad net fraction {f:?}")))? }
    } else if let Some(f) = spec.strip_prefix("random:") {
        SubsetRule::Random {
            fraction: f.parse().map_err(|_| Error::Parameter(format!("bad fraction {f:?}")))?,
            seed,
        }
    } else {
        SubsetRule::Explicit { points: io::parse_index_list(spec)? }
    };
    rule.select(space)
}

fn parse_f64_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| Error::Parameter(format!("bad number {t:?}"))))
        .collect()
}

struct Output {
    text: String,
    /// Exit 1 after writing, e.g. when a certificate fails.
    failed: bool,
}

impl Output {
    fn json<T: Serialize>(manifest: &Manifest, result: &T, failed: bool) -> Result<Self> {
        Ok(Self { text: io::to_pretty(&io::envelope(manifest, result)?), failed })
    }
}

fn manifest_comment(manifest: &Manifest) -> String {
    format!(
        "# lipext {} {} seed={} inputs={}\n",
        manifest.version,
        manifest.command,
        manifest.seed.map_or("-".into(), |s| s.to_string()),
        manifest.inputs.join(";")
    )
}

fn run(cli: &Cli) -> Result<Output> {
    let seed = cli.seed;
    match &cli.command {
        Command::Gen { kind } => {
            let kind = match *kind {
                GenKind::Path { n } => GeneratorKind::Path { n },
                GenKind::Grid { k } => GeneratorKind::Grid { k },
                GenKind::Tree { branching, depth } => GeneratorKind::Tree { branching, depth },
                GenKind::EuclideanCloud { n, dim } => GeneratorKind::EuclideanCloud { n, dim },
                GenKind::H2Cloud { n, radius } => GeneratorKind::H2Cloud { n, radius },
            };
            let spec = GeneratorSpec::new(kind, seed);
            let mut v = io::space_to_json(&spec.build()?);
            v["manifest"] = json!(Manifest::new("gen", vec![spec.name()], Some(seed)));
            Ok(Output { text: io::to_pretty(&v), failed: false })
        }
        Command::Validate { space } => {
            let manifest = Manifest::new("validate", vec![space.display().to_string()], None);
            let raw = io::read_json(space)?;
            if raw.get("generator").is_some() {
                let s = io::parse_space(&raw)?;
                return Output::json(&manifest, &json!({"ok": true, "points": s.size(), "violations": []}), false);
            }
            if raw.get("format").and_then(Value::as_str) != Some(io::FORMAT) {
                return Err(Error::Format(format!("space: missing \"format\": \"{}\"", io::FORMAT)));
            }
            let rows: Vec<Vec<f64>> = serde_json::from_value(raw.get("dist").cloned().unwrap_or(Value::Null))
                .map_err(|e| Error::Format(format!("space.dist: {e}")))?;
            let report = validate_metric(&matrix_from_rows(&rows)?)?;
            let result = json!({
                "ok": report.is_ok(),
                "points": rows.len(),
                "violations": report.violations,
            });
            Output::json(&manifest, &result, !report.is_ok())
        }
        Command::Net { space, epsilon } => {
            let s = io::read_space(space)?;
            let net = max_separated_net(&s, *epsilon)?;
            let manifest = Manifest::new("net", vec![space.display().to_string()], None);
            let mut result = json!({ "epsilon": epsilon, "points": net.points });
            if s.coords().is_some() {
                result["order_bound"] = json!(check_order_bound(&s, *epsilon)?);
            }
            Output::json(&manifest, &result, false)
        }
        Command::Whitney { space, subset, format } => {
            let s = io::read_space(space)?;
            let subset = parse_subset(subset, &s, seed)?;
            let app = WhitneyApparatus::build(&s, &subset)?;
            let manifest = Manifest::new("whitney", vec![space.display().to_string()], Some(seed));
            match format {
                Format::Json => Output::json(&manifest, &app, false),
                Format::Csv | Format::Table => {
                    let mut text = manifest_comment(&manifest);
                    let header: Vec<&str> = app.subset.iter().map(|&k| s.label(k)).collect();
                    let _ = writeln!(text, "point,radius,m1,{}", header.join(","));
                    for m in 0..s.size() {
                        let radius = app.cover.as_ref().and_then(|c| c.radius(m));
                        let m1 = app.selected.iter().find(|p| p.alpha == m).map(|p| s.label(p.m1).to_owned());
                        let row: Vec<String> = app.matrix.row(m).iter().map(|v| v.to_string()).collect();
                        let _ = writeln!(
                            text,
                            "{},{},{},{}",
                            s.label(m),
                            radius.map_or(String::new(), |r| r.to_string()),
                            m1.unwrap_or_default(),
                            row.join(",")
                        );
                    }
                    Ok(Output { text, failed: false })
                }
            }
        }
        Command::Constants { input, rmax, dilations, format } => {
            let family = input.load()?;
            let dil = match dilations {
                Some(s) => parse_f64_list(s)?,
                None => DEFAULT_DILATIONS.to_vec(),
            };
            let c = family_constants(&family, *rmax, &dil)?;
            let manifest = Manifest::new("constants", input.names(), None);
            match format {
                Format::Json => Output::json(&manifest, &c, false),
                Format::Csv | Format::Table => {
                    let mut text = manifest_comment(&manifest);
                    text.push_str("quantity,l,value\n");
                    let _ = writeln!(text, "D,,{}", c.doubling);
                    let _ = writeln!(text, "C,,{}", c.consistency);
                    let _ = writeln!(text, "R_max,,{}", c.r_max);
                    let _ = writeln!(text, "K,,{}", c.uniformity);
                    for e in &c.dilation_table {
                        let _ = writeln!(text, "D(l),{},{}", e.l, e.value);
                    }
                    Ok(Output { text, failed: false })
                }
            }
        }
        Command::Lift { input, n, rmax, grid_size, format } => {
            let family = input.load()?;
            let report = certify_all(&family, *n, *rmax, *grid_size)?;
            let failed = !report.all_pass();
            let manifest = Manifest::new("lift", input.names(), None);
            match format {
                Format::Json => Output::json(&manifest, &report, failed),
                Format::Csv | Format::Table => {
                    let mut text = manifest_comment(&manifest);
                    let _ = writeln!(
                        text,
                        "n = {}, D = {}, C = {} on (0, {}], {} radii",
                        report.n, report.base_doubling, report.base_consistency, report.r_max, report.grid_size
                    );
                    let _ = writeln!(text, "{:<18} {:>14} {:>14} {:>14}  result", "lemma", "sup_found", "bound", "margin");
                    for c in &report.certificates {
                        let _ = writeln!(
                            text,
                            "{:<18} {:>14.6} {:>14.6} {:>14.6}  {}",
                            c.lemma,
                            c.sup_found,
                            c.bound,
                            c.margin,
                            if c.pass { "pass" } else { "FAIL" }
                        );
                    }
                    Ok(Output { text, failed })
                }
            }
        }
        Command::Extend { input, subset, values, norm } => {
            let family = input.load()?;
            let subset = parse_subset(subset, family.base(), seed)?;
            let op = build_operator(&family, &subset)?;
            let kind: NormKind = norm.parse()?;
            let f = io::parse_values(&io::read_json(values)?)?;
            let ext = op.apply(&f)?;
            let result = json!({
                "subset": op.subset(),
                "norm": kind,
                "lipschitz_f": lipschitz_constant(op.subspace(), &f, kind),
                "lipschitz_extension": lipschitz_constant(op.space(), &ext, kind),
                "values": io::values_to_json(&ext),
            });
            let mut inputs = input.names();
            inputs.push(values.display().to_string());
            Output::json(&Manifest::new("extend", inputs, Some(seed)), &result, false)
        }
        Command::Opnorm { input, subset } => {
            let family = input.load()?;
            let subset = parse_subset(subset, family.base(), seed)?;
            let op = build_operator(&family, &subset)?;
            let norm = operator_norm_exact(&op)?;
            let result = json!({ "subset": op.subset(), "operator_norm": norm });
            Output::json(&Manifest::new("opnorm", input.names(), Some(seed)), &result, false)
        }
        Command::Kr { space, chain, basepoint } => {
            let s = io::read_space(space)?;
            let c = io::parse_chain(&io::read_json(chain)?, &s)?;
            let primal = kr_norm(&s, &c)?;
            let dual = kr_norm_dual(&s, &c, *basepoint)?;
            let result = json!({ "value": primal.value, "plan": primal.plan, "dual": dual });
            let inputs = vec![space.display().to_string(), chain.display().to_string()];
            Output::json(&Manifest::new("kr", inputs, None), &result, false)
        }
        Command::Report { input, subset, rmax, format } => {
            let family = input.load()?;
            let subset = parse_subset(subset, family.base(), seed)?;
            let op = build_operator(&family, &subset)?;
            let report = bound_report_for(&op, *rmax)?;
            let manifest = Manifest::new("report", input.names(), Some(seed));
            match format {
                Format::Json => Output::json(&manifest, &report, false),
                Format::Csv | Format::Table => {
                    let mut w = csv::Writer::from_writer(Vec::new());
                    w.serialize(&report).map_err(|e| Error::Format(format!("csv: {e}")))?;
                    let body = String::from_utf8(w.into_inner().map_err(|e| Error::Format(e.to_string()))?)
                        .expect("csv output is UTF-8");
                    Ok(Output { text: manifest_comment(&manifest) + &body, failed: false })
                }
            }
        }
        Command::Sweep { spec, standard, max_points, rmax } => {
            let (sweep, inputs) = match (spec, standard) {
                (Some(path), None) => {
                    let v = io::read_json(path)?;
                    if v.get("format").and_then(Value::as_str) != Some(io::FORMAT) {
                        return Err(Error::Format(format!("sweep: missing \"format\": \"{}\"", io::FORMAT)));
                    }
                    let mut s: SweepSpec =
                        serde_json::from_value(v).map_err(|e| Error::Format(format!("sweep: {e}")))?;
                    if rmax.is_some() {
                        s.r_max = *rmax;
                    }
                    (s, vec![path.display().to_string()])
                }
                (None, Some(count)) => (
                    SweepSpec { instances: standard_corpus(*count, *max_points, seed), r_max: *rmax },
                    vec![format!("standard:{count}:{max_points}")],
                ),
                _ => return Err(Error::Parameter("give exactly one of --spec or --standard".into())),
            };
            let rows = corpus_sweep(&sweep);
            let manifest = Manifest::new("sweep", inputs, Some(seed));
            Ok(Output { text: manifest_comment(&manifest) + &rows_to_csv(&rows)?, failed: false })
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Parameter(_) | Error::Format(_) | Error::Io(_) | Error::Json(_) => 2,
        Error::InvariantViolation(_) | Error::PremiseViolation(_) | Error::Solver(_) => 1,
    }
}

fn kind(e: &Error) -> &'static str {
    match e {
        Error::Parameter(_) => "parameter",
        Error::Format(_) => "format",
        Error::Io(_) => "io",
        Error::Json(_) => "json",
        Error::InvariantViolation(_) => "invariant_violation",
        Error::PremiseViolation(_) => "premise_violation",
        Error::Solver(_) => "solver",
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(out) => {
            let written = match &cli.out {
                Some(path) => fs::write(path, &out.text),
                None => {
                    print!("{}", out.text);
                    Ok(())
                }
            };
            if let Err(e) = written {
                eprintln!("{}", json!({ "error": "io", "message": e.to_string() }));
                return ExitCode::from(2);
            }
            ExitCode::from(u8::from(out.failed))
        }
        Err(e) => {
            eprintln!("{}", json!({ "error": kind(&e), "message": e.to_string() }));
            ExitCode::from(exit_code(&e))
        }
    }
}
