use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use clap::{Args, Subcommand};
use hua_core::acceptance::{run_suite, Tier};
use hua_core::actions::Cylinder;
use hua_core::experiments::{collect_draws, non_parabolic, rn_check, unitarity_test};
use hua_core::lattice::lattice_beta_partial_sum;
use hua_core::linalg::smith_profile_with_corank;
use hua_core::measures::{hua_constant, hua_series, vol_gl};
use hua_core::padic::format_rational;
use hua_core::projective::{
    pushforward_test, random_band_element, stabilization_check, tower_test, BandElement, BandKind,
};
use hua_core::samplers::{sample_mu0, sample_mu_s, SampleStatus, DEFAULT_BAND};
use hua_core::{Flavor, HuaError, MeasureSpec, PadicMatrix, RandomStream, Real};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{ExperimentConfig, Ratio};
use crate::CliError;

const SIGMAS: f64 = 4.0;

#[derive(Subcommand, Debug, Serialize)]
#[serde(untagged)]
pub enum Command {
    /// Closed form of the Hua integral c(n, alpha).
    HuaConst(HuaConstArgs),
    /// Stratified series for the Hua integral with its tail bound.
    HuaSeries(HuaSeriesArgs),
    /// Partial sum of vol(Q)^{n-t} vol(Q ∩ O^n)^t over lattices Q.
    LatticeBeta(LatticeBetaArgs),
    /// gamma(z) of a matrix.
    Gamma(MatrixArgs),
    /// Smith profile of a matrix.
    Smith(MatrixArgs),
    /// Weighted draws from mu_s, one JSON object per line.
    Sample(SampleArgs),
    /// Exact chain rule, height and round-trip identities on random words.
    RnCheck(RnCheckArgs),
    /// Monte Carlo check that the representation preserves L^2 norms.
    UnitarityTest(UnitarityArgs),
    /// Chi-square of corner-projected draws against exact bins.
    PushTest(PushArgs),
    /// Coherent towers of corners against exact and direct bins.
    Tower(TowerArgs),
    /// Level independence of a band element's stabilized determinant.
    StabDet(StabArgs),
    /// The acceptance suite.
    Acceptance(AcceptanceArgs),
}

#[derive(Args, Debug, Serialize)]
pub struct HuaConstArgs {
    /// Matrix size.
    #[arg(long)]
    pub n: usize,
    /// The prime p.
    #[arg(long)]
    pub p: u64,
    /// Exponent alpha, an exact rational.
    #[arg(long)]
    pub alpha: Ratio,
}

#[derive(Args, Debug, Serialize)]
pub struct HuaSeriesArgs {
    /// Matrix size.
    #[arg(long)]
    pub n: usize,
    /// The prime p.
    #[arg(long)]
    pub p: u64,
    /// Exponent alpha, an exact rational.
    #[arg(long)]
    pub alpha: Ratio,
    #[arg(long, default_value_t = 10)]
    pub kmax: i64,
    #[arg(long, default_value_t = 4)]
    pub depth: i64,
    /// Matrix space: gl, symm or asymm.
    #[arg(long, default_value = "gl")]
    pub flavor: Flavor,
}

#[derive(Args, Debug, Serialize)]
pub struct LatticeBetaArgs {
    /// Matrix size.
    #[arg(long)]
    pub n: usize,
    /// The prime p.
    #[arg(long)]
    pub p: u64,
    #[arg(long)]
    pub t: Ratio,
    #[arg(long, default_value_t = 2)]
    pub depth: i64,
}

#[derive(Args, Debug, Serialize)]
pub struct MatrixArgs {
    /// The prime p.
    #[arg(long)]
    pub p: u64,
    /// Rows separated by ';', entries by ',', each a rational such as 3/4.
    #[arg(long)]
    pub matrix: String,
    /// `asymm` marks the structural kernel of odd antisymmetric matrices.
    #[arg(long, default_value = "gl")]
    pub flavor: Flavor,
}

#[derive(Args, Debug, Serialize)]
pub struct SpecArgs {
    /// Matrix size.
    #[arg(long)]
    pub n: usize,
    /// The prime p.
    #[arg(long)]
    pub p: u64,
    /// Exponent s, an exact rational such as 1 or 3/2.
    #[arg(long, allow_hyphen_values = true)]
    pub s: Ratio,
    /// Matrix space: gl, symm or asymm.
    #[arg(long, default_value = "gl")]
    pub flavor: Flavor,
}

impl SpecArgs {
    fn spec(&self) -> Result<MeasureSpec, HuaError> {
        MeasureSpec::new(self.p, self.n, self.s.0, self.flavor)
    }
}

#[derive(Args, Debug, Serialize)]
pub struct SampleArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub spec: SpecArgs,
    #[arg(long, default_value_t = 1000)]
    pub count: usize,
    /// Shells of the proposal for the symmetric and alternating spaces.
    #[arg(long, default_value_t = DEFAULT_BAND)]
    pub band: usize,
}

#[derive(Args, Debug, Serialize)]
pub struct RnCheckArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub spec: SpecArgs,
    #[arg(long, default_value_t = 3)]
    pub words: usize,
    #[arg(long, default_value_t = 1000)]
    pub trials: usize,
}

#[derive(Args, Debug, Serialize)]
pub struct UnitarityArgs {
    /// Matrix size.
    #[arg(long, default_value_t = 2)]
    pub n: usize,
    /// The prime p.
    #[arg(long, default_value_t = 2)]
    pub p: u64,
    /// Exponent s, an exact rational such as 1 or 3/2.
    #[arg(long, allow_hyphen_values = true)]
    pub s: Ratio,
    #[arg(long, default_value_t = 100_000)]
    pub samples: usize,
    /// Number of random non-parabolic group elements.
    #[arg(long, default_value_t = 5)]
    pub elements: usize,
    /// Angle of the unramified character on det(a + zc).
    #[arg(long, default_value_t = 0.7)]
    pub theta: f64,
}

#[derive(Args, Debug, Serialize)]
pub struct PushArgs {
    /// Size of the target; draws are taken at size n + 1.
    #[command(flatten)]
    #[serde(flatten)]
    pub spec: SpecArgs,
    #[arg(long, default_value_t = 100_000)]
    pub samples: usize,
    #[arg(long, default_value_t = DEFAULT_BAND)]
    pub band: usize,
}

#[derive(Args, Debug, Serialize)]
pub struct TowerArgs {
    /// The prime p.
    #[arg(long)]
    pub p: u64,
    /// Exponent s, an exact rational such as 1 or 3/2.
    #[arg(long, allow_hyphen_values = true)]
    pub s: Ratio,
    #[arg(long, default_value_t = 3)]
    pub levels: usize,
    #[arg(long, default_value_t = 10_000)]
    pub samples: usize,
}

#[derive(Args, Debug, Serialize)]
pub struct StabArgs {
    /// Band element JSON; a random one is drawn when absent.
    #[arg(long)]
    pub band_spec: Option<PathBuf>,
    /// Point of size at least k0 + extra, as for --matrix; drawn from mu_0 when absent.
    #[arg(long)]
    pub z: Option<String>,
    /// The prime p.
    #[arg(long, default_value_t = 2)]
    pub p: u64,
    /// Core size of the random band element.
    #[arg(long, default_value_t = 2)]
    pub k0: usize,
    #[arg(long, default_value = "finite_support", value_parser = parse_kind)]
    pub kind: BandKind,
    #[arg(long, default_value_t = 3)]
    pub extra: usize,
    /// Exponent s, an exact rational such as 1 or 3/2.
    #[arg(long, default_value = "1", allow_hyphen_values = true)]
    pub s: Ratio,
}

#[derive(Args, Debug, Serialize)]
pub struct AcceptanceArgs {
    #[arg(long, default_value = "fast")]
    pub tier: Tier,
    /// Only `primary` exists.
    #[arg(long, default_value = "primary", value_parser = ["primary"])]
    pub suite: String,
    /// Comma-separated criterion ids; all when absent.
    #[arg(long, value_delimiter = ',')]
    pub only: Vec<u32>,
}

fn parse_kind(s: &str) -> Result<BandKind, String> {
    serde_json::from_value(json!(s)).map_err(|_| format!("unknown band kind {s:?}"))
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::HuaConst(_) => "hua-const",
            Command::HuaSeries(_) => "hua-series",
            Command::LatticeBeta(_) => "lattice-beta",
            Command::Gamma(_) => "gamma",
            Command::Smith(_) => "smith",
            Command::Sample(_) => "sample",
            Command::RnCheck(_) => "rn-check",
            Command::UnitarityTest(_) => "unitarity-test",
            Command::PushTest(_) => "push-test",
            Command::Tower(_) => "tower",
            Command::StabDet(_) => "stab-det",
            Command::Acceptance(_) => "acceptance",
        }
    }

    pub fn parameters(&self) -> Value {
        serde_json::to_value(self).unwrap_or(Value::Null)
    }
}

pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(headers: &[&str]) -> Self {
        Table {
            headers: headers.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }
}

pub struct Outcome {
    pub result: Value,
    /// `None` for computations without a verdict.
    pub passed: Option<bool>,
    pub table: Option<Table>,
    /// Wall-clock detail reported next to the total.
    pub timing: Option<Value>,
    pub report_path: Option<PathBuf>,
    /// False when standard output already carries the data.
    pub emit: bool,
}

impl Outcome {
    fn value(result: Value, config: &ExperimentConfig) -> Self {
        Outcome {
            result,
            passed: None,
            table: None,
            timing: None,
            report_path: config.out.clone(),
            emit: true,
        }
    }

    fn verdict(result: Value, passed: bool, config: &ExperimentConfig) -> Self {
        Outcome {
            passed: Some(passed),
            ..Self::value(result, config)
        }
    }

    fn with_table(mut self, table: Table) -> Self {
        self.table = Some(table);
        self
    }
}

fn to_value<T: Serialize>(x: &T) -> Result<Value, CliError> {
    serde_json::to_value(x).map_err(|e| CliError::Io(e.to_string()))
}

fn parse_matrix(p: u64, text: &str) -> Result<PadicMatrix, CliError> {
    let rows: Vec<Vec<&str>> = text
        .split(';')
        .map(|r| r.split(',').map(str::trim).collect())
        .collect();
    Ok(PadicMatrix::from_strs(p, &rows)?)
}

pub fn execute(command: &Command, config: &ExperimentConfig) -> Result<Outcome, CliError> {
    let rs = RandomStream::new(config.seed);
    let prec = config.precision;
    match command {
        Command::HuaConst(a) => {
            let c = hua_constant(a.n, a.alpha.0, a.p)?;
            Ok(Outcome::value(
                json!({"closed_form": c.to_json(), "value": c.value()}),
                config,
            ))
        }
        Command::HuaSeries(a) => {
            let series = hua_series(a.n, a.alpha.0, a.p, a.kmax, a.depth, a.flavor)?;
            let mut result = json!({
                "partial_sum": series.partial_sum.to_json(),
                "partial_sum_value": series.partial_sum.value(),
                "tail_bound": series.tail_bound,
            });
            if a.flavor == Flavor::Gl {
                let closed = hua_constant(a.n, a.alpha.0, a.p)?;
                result["closed_form"] = closed.to_json();
                result["abs_error"] = json!(closed.sub(&series.partial_sum).value().abs());
            }
            Ok(Outcome::value(result, config))
        }
        Command::LatticeBeta(a) => {
            let beta = lattice_beta_partial_sum(a.n, a.t.0, a.depth, a.p)?;
            let closed = hua_constant(a.n, a.t.0, a.p)?.div(&Real::Exact(vol_gl(a.n, a.p)));
            Ok(Outcome::value(
                json!({
                    "partial_sum": beta.partial_sum.to_json(),
                    "partial_sum_value": beta.partial_sum.value(),
                    "tail_bound": beta.tail_bound,
                    "closed_form": closed.to_json(),
                    "abs_error": closed.sub(&beta.partial_sum).value().abs(),
                    "lattices": beta.lattices,
                }),
                config,
            ))
        }
        Command::Gamma(a) | Command::Smith(a) => {
            let z = parse_matrix(a.p, &a.matrix)?;
            let profile = smith_profile_with_corank(&z, a.flavor.structural_corank(z.rows()))?;
            let mut result = json!({
                "gamma": format_rational(&profile.gamma()),
                "gamma_exponent": profile.gamma_exponent(),
            });
            if matches!(command, Command::Smith(_)) {
                result["profile"] = profile.to_json();
                result["det_norm"] = if profile.is_full_rank() {
                    json!(format_rational(&profile.det_norm()))
                } else {
                    json!("0")
                };
            }
            Ok(Outcome::value(result, config))
        }
        Command::Sample(a) => sample(a, config, &rs),
        Command::RnCheck(a) => {
            let rep = rn_check(
                a.spec.flavor,
                a.spec.n,
                a.spec.p,
                a.spec.s.0,
                a.words,
                a.trials,
                prec,
                &rs,
            )?;
            let mut table = Table::new(&["identity", "checked", "failed", "skipped", "passed"]);
            for t in &rep.identities {
                table.rows.push(vec![
                    t.identity.to_string(),
                    t.checked.to_string(),
                    t.failed.to_string(),
                    t.skipped.to_string(),
                    t.passed.to_string(),
                ]);
            }
            Ok(Outcome::verdict(to_value(&rep)?, rep.passed, config).with_table(table))
        }
        Command::UnitarityTest(a) => unitarity(a, config, &rs),
        Command::PushTest(a) => {
            let top = MeasureSpec::new(a.spec.p, a.spec.n + 1, a.spec.s.0, a.spec.flavor)?;
            let rep = pushforward_test(&top, a.samples, prec, a.band, &rs)?;
            let mut table = Table::new(&["bin", "expected", "observed"]);
            for (i, label) in rep.labels.iter().enumerate() {
                table.rows.push(vec![
                    label.clone(),
                    rep.expected_probabilities[i].to_string(),
                    rep.observed_frequencies[i].to_string(),
                ]);
            }
            Ok(Outcome::verdict(to_value(&rep)?, rep.passed, config).with_table(table))
        }
        Command::Tower(a) => {
            let spec = MeasureSpec::new(a.p, a.levels, a.s.0, Flavor::Gl)?;
            let levels = tower_test(&spec, a.levels, a.samples, prec, &rs)?;
            let passed = levels.iter().all(|l| l.passed);
            let mut table = Table::new(&["level", "exact_p_value", "direct_p_value", "passed"]);
            for l in &levels {
                table.rows.push(vec![
                    l.level.to_string(),
                    l.exact.p_value.to_string(),
                    l.versus_direct.p_value.to_string(),
                    l.passed.to_string(),
                ]);
            }
            Ok(
                Outcome::verdict(json!({"levels": to_value(&levels)?}), passed, config)
                    .with_table(table),
            )
        }
        Command::StabDet(a) => {
            let mut r = rs.clone();
            let g = match &a.band_spec {
                Some(path) => {
                    let text = fs::read_to_string(path)?;
                    let value: Value = serde_json::from_str(&text)
                        .map_err(|e| CliError::Usage(format!("band spec: {e}")))?;
                    BandElement::from_json(&value)?
                }
                None => random_band_element(a.k0, a.p, a.kind, 2, 2, prec, &mut r)?,
            };
            let z = match &a.z {
                Some(text) => parse_matrix(g.prime(), text)?,
                None => sample_mu0(g.k0() + a.extra, g.prime(), prec, &mut r)?,
            };
            let rep = stabilization_check(&g, &z, a.extra, a.s.0)?;
            let result =
                json!({"band_element": g.to_json(), "z": z.to_json(), "report": to_value(&rep)?});
            Ok(Outcome::verdict(result, rep.passed, config))
        }
        Command::Acceptance(a) => {
            let rep = run_suite(a.tier, config.seed, &a.only);
            let mut result = rep.to_json();
            let timings = result.as_object_mut().and_then(|o| o.remove("timings"));
            let mut table = Table::new(&["criterion", "passed", "title", "anchor", "summary"]);
            for c in &rep.criteria {
                table.rows.push(vec![
                    c.id.to_string(),
                    c.passed.to_string(),
                    c.title.to_string(),
                    c.anchor.to_string(),
                    c.summary.clone(),
                ]);
            }
            let mut out = Outcome::verdict(result, rep.passed, config).with_table(table);
            out.timing = timings;
            Ok(out)
        }
    }
}

fn sample(
    a: &SampleArgs,
    config: &ExperimentConfig,
    rs: &RandomStream,
) -> Result<Outcome, CliError> {
    if config.format != crate::config::Format::Json {
        return Err(CliError::Usage("samples are written as JSON lines".into()));
    }
    let spec = a.spec.spec()?;
    let draws = collect_draws(rs, a.count, |r| {
        sample_mu_s(&spec, config.precision, a.band, r)
    })?;
    let mut sink: Box<dyn Write> = match &config.out {
        Some(path) => Box::new(BufWriter::new(fs::File::create(path)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    };
    for d in &draws {
        writeln!(sink, "{}", d.to_json())?;
    }
    sink.flush()?;
    drop(sink);
    let tally = |s: SampleStatus| draws.iter().filter(|d| d.status == s).count();
    let accepted = tally(SampleStatus::Accepted);
    let result = json!({
        "proposals": draws.len(),
        "accepted": accepted,
        "rejected": tally(SampleStatus::Rejected),
        "exhausted": tally(SampleStatus::Exhausted),
        "acceptance_rate": accepted as f64 / draws.len().max(1) as f64,
    });
    // The summary goes to standard output only when the samples do not.
    let mut out = Outcome::value(result, config);
    out.report_path = None;
    out.emit = config.out.is_some();
    Ok(out)
}

fn unitarity(
    a: &UnitarityArgs,
    config: &ExperimentConfig,
    rs: &RandomStream,
) -> Result<Outcome, CliError> {
    let spec = MeasureSpec::new(a.p, a.n, a.s.0, Flavor::Gl)?;
    let fs = [
        Cylinder::EntryValuationAtLeast { i: 0, j: 0, k: 0 },
        Cylinder::Character {
            i: 0,
            j: a.n - 1,
            depth: 2,
        },
        Cylinder::BallIndicator { k: -1 },
    ];
    let mut rows = Vec::new();
    let mut passed = true;
    let mut table = Table::new(&[
        "element",
        "f",
        "mean_difference",
        "std_err",
        "sigmas",
        "passed",
    ]);
    for gi in 0..a.elements {
        let mut r = rs.split(gi as u64);
        let g = non_parabolic(a.n, a.p, Flavor::Gl, config.precision, &mut r)?;
        let estimates = unitarity_test(
            &spec,
            &g,
            &fs,
            a.theta,
            a.samples,
            config.precision,
            SIGMAS,
            &r.split(1),
        )?;
        for e in &estimates {
            passed &= e.passed;
            table.rows.push(vec![
                gi.to_string(),
                e.f.to_string(),
                e.estimate.mean.to_string(),
                e.estimate.std_err.to_string(),
                e.sigmas.to_string(),
                e.passed.to_string(),
            ]);
        }
        rows.push(json!({"g": g.to_json(), "estimates": to_value(&estimates)?}));
    }
    Ok(Outcome::verdict(json!({"elements": rows}), passed, config).with_table(table))
}
