use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use num_bigint::BigUint;
use num_rational::BigRational;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use pfdim::abelian::{self, Residues, SymbolicConfig};
use pfdim::dimension::{self, ChainStep, Thresholds};
use pfdim::engine::{count_with, Bindings, EngineConfig, DEFAULT_BUDGET};
use pfdim::families::{self, FamilyHandle, FiniteGroup, Homocyclic, VectorSpace, WordExpr};
use pfdim::logic::{free_variables, Assignment, FiniteStructure, Formula};
use pfdim::measure::{self, Event, FiniteMeasureSpace, KIntersection, MeasureSpec, PairwiseResult, SearchOptions, Strategy};
use pfdim::parser::{parse_formula, parse_structure, structure_to_json};
use pfdim::serde_util::{parse_rational, rational_to_string};
use pfdim::vs::{self, CosetCountSpec, ThetaPart, VectorTermSpec, VsParams};

/// Exact counting and dimension experiments on finite structures.
#[derive(Parser)]
#[command(name = "pfdim", version)]
struct Cli {
    /// Worker threads for counting (default: available parallelism).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Seed for every randomized option.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct FamilyArgs {
    /// Family name, see `family --list`.
    #[arg(long)]
    family: String,
    /// Generator parameter `name=value`, repeatable.
    #[arg(long = "param", value_name = "NAME=VALUE")]
    params: Vec<String>,
    /// Comma-separated increasing indices.
    #[arg(long, value_delimiter = ',', required = true)]
    indices: Vec<u64>,
}

#[derive(Args, Clone)]
struct ThresholdArgs {
    /// Log-ratio band for "equal" (default ln 10).
    #[arg(long)]
    tau: Option<f64>,
    /// First index position checked for "equal" (default half the samples).
    #[arg(long)]
    burn_in: Option<usize>,
    /// Fewer samples give "undetermined" (default 4).
    #[arg(long)]
    min_samples: Option<usize>,
}

#[derive(Args, Clone)]
struct SpaceArgs {
    /// Measure space JSON `{weights, events}`, or `-` for stdin.
    #[arg(long, conflicts_with = "generate")]
    input: Option<String>,
    /// Random space `ATOMS,EVENTS` with every event of measure >= --floor.
    #[arg(long, value_name = "ATOMS,EVENTS")]
    generate: Option<String>,
    #[arg(long, default_value = "1/3")]
    floor: String,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    Exhaustive,
    Recursive,
}

#[derive(Subcommand)]
enum Command {
    /// Count the tuples satisfying a formula.
    Count {
        /// Structure JSON, or `-` for stdin.
        #[arg(long, required_unless_present = "family", conflicts_with = "family")]
        structure: Option<String>,
        #[arg(long, requires = "index")]
        family: Option<String>,
        #[arg(long = "param", value_name = "NAME=VALUE")]
        params: Vec<String>,
        #[arg(long)]
        index: Option<u64>,
        #[arg(long)]
        formula: String,
        /// `var=value,...`: element ids for --structure, selectors for --family.
        #[arg(long, value_delimiter = ',')]
        fix: Vec<String>,
        /// Variables to count (default: every free variable not fixed).
        #[arg(long, value_delimiter = ',')]
        count_vars: Vec<String>,
    },
    /// Generate a family member as structure JSON, or list families.
    Family {
        #[arg(long)]
        list: bool,
        #[arg(long, required_unless_present = "list")]
        name: Option<String>,
        #[arg(long = "param", value_name = "NAME=VALUE")]
        params: Vec<String>,
        #[arg(long, required_unless_present = "list")]
        index: Option<u64>,
        /// Output file, or `-` for stdout.
        #[arg(long, default_value = "-")]
        out: String,
    },
    /// Compare the growth of two definable sets along a family.
    DimCompare {
        #[command(flatten)]
        family: FamilyArgs,
        #[arg(long)]
        x: String,
        #[arg(long, value_delimiter = ',')]
        x_select: Vec<String>,
        #[arg(long)]
        y: String,
        #[arg(long, value_delimiter = ',')]
        y_select: Vec<String>,
        #[command(flatten)]
        thresholds: ThresholdArgs,
        /// Also write the log-count table as CSV.
        #[arg(long)]
        csv: Option<String>,
    },
    /// Measure a chain of nested conjunctions.
    Chain {
        #[command(flatten)]
        family: FamilyArgs,
        /// `FORMULA` or `FORMULA @ var=selector,...`, repeatable, in order.
        #[arg(long = "step", required = true)]
        steps: Vec<String>,
        #[command(flatten)]
        thresholds: ThresholdArgs,
    },
    /// Cluster the fiber sizes of a formula over all parameter values.
    Spectrum {
        #[command(flatten)]
        family: FamilyArgs,
        #[arg(long)]
        formula: String,
        /// Parameters `name:sort`, comma-separated.
        #[arg(long = "params", value_delimiter = ',', required = true)]
        parameters: Vec<String>,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        csv: Option<String>,
    },
    /// Symbolic count of a conjunction in (Z/p^n)^m, optionally evaluated.
    AbelianCount {
        #[arg(long)]
        formula: String,
        #[arg(long, requires_all = ["n", "m"])]
        p: Option<u64>,
        #[arg(long)]
        n: Option<u32>,
        #[arg(long)]
        m: Option<u32>,
        /// Parameter values: residues comma-separated, parameters `;`-separated.
        #[arg(long)]
        params: Option<String>,
        /// Cross-check this many random parameter choices.
        #[arg(long, default_value_t = 0, requires = "p")]
        check: usize,
        #[arg(long)]
        max_negations: Option<usize>,
        #[arg(long)]
        max_counted: Option<usize>,
    },
    /// Count a vector-space instance and report its polynomial.
    VsCount {
        /// `{q, dim, theta | coset, params}` JSON, or `-` for stdin.
        #[arg(long)]
        spec: String,
        /// Recount by enumeration.
        #[arg(long)]
        check: bool,
    },
    /// Search for k events with a large common intersection.
    MeasureKcap {
        #[command(flatten)]
        space: SpaceArgs,
        #[arg(long)]
        k: usize,
        #[arg(long, value_enum)]
        strategy: Option<StrategyArg>,
        #[arg(long)]
        budget: Option<u64>,
    },
    /// Check the pairwise intersection threshold N(eps).
    PairwiseCheck {
        #[command(flatten)]
        space: SpaceArgs,
        #[arg(long)]
        eps: String,
    },
    /// Image of a word map on a finite group.
    WordImage {
        /// Built-in group name.
        #[arg(long, required_unless_present = "structure", conflicts_with = "structure")]
        group: Option<String>,
        /// Group structure JSON with `mul`, `inv` and `e`.
        #[arg(long)]
        structure: Option<String>,
        #[arg(long)]
        word: String,
        /// Three words `w1;w2;w3`: check whether their images multiply to the group.
        #[arg(long)]
        triple: Option<String>,
    },
}

struct Outcome {
    payload: Value,
    violation: Option<String>,
}

impl Outcome {
    fn ok(payload: Value) -> Self {
        Outcome { payload, violation: None }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(out) => {
            let text = serde_json::to_string_pretty(&out.payload).expect("json");
            // a closed pipe (e.g. `| head`) is not an error
            let _ = writeln!(std::io::stdout().lock(), "{text}");
            match out.violation {
                None => ExitCode::SUCCESS,
                Some(msg) => {
                    eprintln!("property violation: {msg}");
                    ExitCode::from(2)
                }
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn engine_config(workers: Option<usize>) -> Result<EngineConfig> {
    let mut cfg = EngineConfig::default().with_budget(DEFAULT_BUDGET);
    if let Ok(b) = std::env::var("PFDIM_BUDGET") {
        let b: u64 = b.trim().parse().with_context(|| format!("PFDIM_BUDGET `{b}`"))?;
        cfg = cfg.with_budget(b);
    }
    if let Some(w) = workers {
        if w == 0 {
            bail!("--workers must be positive");
        }
        cfg = cfg.with_workers(w);
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<Outcome> {
    let cfg = engine_config(cli.workers)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cli.seed);
    match cli.command {
        Command::Count {
            structure,
            family,
            params,
            index,
            formula,
            fix,
            count_vars,
        } => {
            let fix = pairs(&fix, '=')?;
            let count = match (structure, family) {
                (Some(path), _) => {
                    let m = parse_structure(&read_input(&path)?)?;
                    let f = parse_formula(&formula, m.signature())?;
                    count_in_structure(&f, &m, &fix, &count_vars, &cfg)?
                }
                (None, Some(name)) => {
                    let fam = FamilyHandle::new(&name, &param_map(&params)?)?;
                    let index = index.expect("clap requires index");
                    let model = fam.model(index)?;
                    let f = parse_formula(&formula, model.signature())?;
                    let fixed = families::bind_selector(&fam, &fix, index)?;
                    let counted = counted_vars(&f, &fixed, &count_vars);
                    let counted: Vec<&str> = counted.iter().map(String::as_str).collect();
                    model.count(&f, &fixed, &counted, &cfg)?.into_value()
                }
                (None, None) => unreachable!("clap requires one source"),
            };
            Ok(Outcome::ok(json!({ "count": count.to_string() })))
        }
        Command::Family {
            list,
            name,
            params,
            index,
            out,
        } => {
            if list {
                return Ok(Outcome::ok(json!({ "families": families::list_families() })));
            }
            let name = name.expect("clap requires name");
            let index = index.expect("clap requires index");
            let fam = FamilyHandle::new(&name, &param_map(&params)?)?;
            let m = fam.generate(index)?;
            let js = structure_to_json(&m, STRUCTURE_TUPLE_LIMIT)
                .ok_or_else(|| anyhow!("member {index} of {name} is too large to export"))?;
            let payload = serde_json::to_value(&js)?;
            if out == "-" {
                Ok(Outcome::ok(payload))
            } else {
                std::fs::write(&out, serde_json::to_string(&payload)?).with_context(|| format!("writing {out}"))?;
                Ok(Outcome::ok(json!({
                    "family": fam.describe(),
                    "index": index,
                    "out": out,
                    "sizes": m.sizes(),
                })))
            }
        }
        Command::DimCompare {
            family,
            x,
            x_select,
            y,
            y_select,
            thresholds,
            csv,
        } => {
            let fam = FamilyHandle::new(&family.family, &param_map(&family.params)?)?;
            let sig = fam.model(family.indices[0])?.signature().clone();
            let (fx, fy) = (parse_formula(&x, &sig)?, parse_formula(&y, &sig)?);
            let (sx, sy) = (pairs(&x_select, '=')?, pairs(&y_select, '=')?);
            let cx = families::count_family(&fx, &fam, &family.indices, &sx, &cfg)?;
            let cy = families::count_family(&fy, &fam, &family.indices, &sy, &cfg)?;
            let verdict = dimension::delta_compare(&cx, &cy, &thresholds.build())?;
            if let Some(path) = csv {
                let table = dimension::log_table_csv(&[("x", &cx), ("y", &cy)])?;
                std::fs::write(&path, table).with_context(|| format!("writing {path}"))?;
            }
            Ok(Outcome::ok(json!({ "x": cx, "y": cy, "verdict": verdict })))
        }
        Command::Chain {
            family,
            steps,
            thresholds,
        } => {
            let fam = FamilyHandle::new(&family.family, &param_map(&family.params)?)?;
            let sig = fam.model(family.indices[0])?.signature().clone();
            let steps = steps
                .iter()
                .map(|s| {
                    let (text, sel) = match s.split_once('@') {
                        Some((t, sel)) => (t, sel.split(',').map(str::to_string).collect::<Vec<_>>()),
                        None => (s.as_str(), Vec::new()),
                    };
                    Ok(ChainStep {
                        formula: parse_formula(text.trim(), &sig)?,
                        selector: pairs(&sel, '=')?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let report = dimension::chain_detect(&steps, &fam, &family.indices, &thresholds.build(), &cfg)?;
            Ok(Outcome::ok(serde_json::to_value(&report)?))
        }
        Command::Spectrum {
            family,
            formula,
            parameters,
            gamma,
            csv,
        } => {
            let fam = FamilyHandle::new(&family.family, &param_map(&family.params)?)?;
            let sig = fam.model(family.indices[0])?.signature().clone();
            let f = parse_formula(&formula, &sig)?;
            let params = pairs(&parameters, ':')?;
            let gamma = gamma.unwrap_or(Thresholds::default().gamma);
            let report = dimension::fmv_spectrum(&f, &fam, &family.indices, &params, gamma, &cfg)?;
            if let Some(path) = csv {
                std::fs::write(&path, report.to_csv()).with_context(|| format!("writing {path}"))?;
            }
            Ok(Outcome::ok(serde_json::to_value(&report)?))
        }
        Command::AbelianCount {
            formula,
            p,
            n,
            m,
            params,
            check,
            max_negations,
            max_counted,
        } => abelian_count(
            &formula,
            p.zip(n).zip(m).map(|((p, n), m)| (p, n, m)),
            params.as_deref(),
            check,
            max_negations,
            max_counted,
            &mut rng,
        ),
        Command::VsCount { spec, check } => vs_count(&read_input(&spec)?, check, &cfg),
        Command::MeasureKcap {
            space,
            k,
            strategy,
            budget,
        } => {
            let (sp, events) = space.load(&mut rng)?;
            let mut opts = SearchOptions {
                workers: cfg.workers,
                strategy: strategy.map(|s| match s {
                    StrategyArg::Exhaustive => Strategy::Exhaustive,
                    StrategyArg::Recursive => Strategy::Recursive,
                }),
                ..SearchOptions::default()
            };
            if let Some(b) = budget {
                opts.budget = b;
            }
            let eps = measure::epsilon(&sp, &events).ok_or_else(|| anyhow!("no events"))?;
            let result = measure::find_k_intersection(&sp, &events, k, &opts)?;
            let violation = kcap_violation(&sp, &events, k, &eps, &result)?;
            Ok(Outcome {
                payload: json!({
                    "space": MeasureSpec::from_parts(&sp, &events),
                    "epsilon": rational_to_string(&eps),
                    "k": k,
                    "result": result,
                }),
                violation,
            })
        }
        Command::PairwiseCheck { space, eps } => {
            let (sp, events) = space.load(&mut rng)?;
            let eps = parse_rational(&eps).ok_or_else(|| anyhow!("bad --eps `{eps}`"))?;
            let result = measure::pairwise_threshold_check(&sp, &events, &eps)?;
            let dagger = measure::truncated_inclusion_exclusion(&sp, &events);
            let mut violation = None;
            if dagger > BigRational::from_integer(1.into()) {
                violation = Some(format!("truncated inclusion-exclusion is {}", rational_to_string(&dagger)));
            }
            let all_large = events.iter().all(|e| sp.mu(e) >= eps);
            if let PairwiseResult::Counterexample { threshold, .. } = &result {
                if all_large {
                    violation = Some(format!("no pair among the first {threshold} events reaches eps^3"));
                }
            }
            Ok(Outcome {
                payload: json!({
                    "space": MeasureSpec::from_parts(&sp, &events),
                    "eps": rational_to_string(&eps),
                    "hypothesisHolds": all_large,
                    "result": result,
                    "truncatedInclusionExclusion": rational_to_string(&dagger),
                }),
                violation,
            })
        }
        Command::WordImage {
            group,
            structure,
            word,
            triple,
        } => {
            let g = match (group, structure) {
                (Some(name), _) => FiniteGroup::builtin(&name).ok_or_else(|| {
                    anyhow!(
                        "unknown group `{name}`, expected one of {}",
                        FiniteGroup::builtin_names().join(", ")
                    )
                })?,
                (None, Some(path)) => FiniteGroup::from_structure(&parse_structure(&read_input(&path)?)?)?,
                (None, None) => unreachable!("clap requires one source"),
            };
            let w = WordExpr::parse(&word)?;
            let image = families::word_image(&w, &g, cfg.workers)?;
            let mut payload = json!({
                "group": g.name(),
                "order": g.order(),
                "word": word,
                "imageSize": image.len(),
                "image": image,
            });
            if let Some(t) = triple {
                let ws: Vec<&str> = t.split(';').map(str::trim).collect();
                let [a, b, c] = ws[..] else {
                    bail!("--triple needs three words separated by `;`")
                };
                let imgs = [a, b, c]
                    .iter()
                    .map(|s| Ok(families::word_image(&WordExpr::parse(s)?, &g, cfg.workers)?))
                    .collect::<Result<Vec<_>>>()?;
                let tp = families::triple_product_covers(&imgs[0], &imgs[1], &imgs[2], &g, cfg.workers);
                payload["triple"] = json!({ "words": [a, b, c], "result": tp });
            }
            Ok(Outcome::ok(payload))
        }
    }
}

const STRUCTURE_TUPLE_LIMIT: u64 = 10_000_000;

impl ThresholdArgs {
    fn build(&self) -> Thresholds {
        let d = Thresholds::default();
        Thresholds {
            tau: self.tau.unwrap_or(d.tau),
            burn_in: self.burn_in.or(d.burn_in),
            gamma: d.gamma,
            min_samples: self.min_samples.unwrap_or(d.min_samples),
        }
    }
}

impl SpaceArgs {
    fn load(&self, rng: &mut ChaCha8Rng) -> Result<(FiniteMeasureSpace, Vec<Event>)> {
        match (&self.input, &self.generate) {
            (Some(path), _) => {
                let spec: MeasureSpec = serde_json::from_str(&read_input(path)?).context("measure space JSON")?;
                Ok(spec.build()?)
            }
            (None, Some(g)) => {
                let (a, e) = g
                    .split_once(',')
                    .and_then(|(a, e)| Some((a.trim().parse().ok()?, e.trim().parse().ok()?)))
                    .ok_or_else(|| anyhow!("--generate expects ATOMS,EVENTS"))?;
                let floor = parse_rational(&self.floor).ok_or_else(|| anyhow!("bad --floor"))?;
                Ok(measure::random_space(rng, a, e, &floor)?)
            }
            (None, None) => bail!("one of --input or --generate is required"),
        }
    }
}

/// A found witness is re-measured; a miss is a violation only where the
/// guarantee is unconditional (k = 1, or k = 2 with at least N(eps) events).
fn kcap_violation(
    sp: &FiniteMeasureSpace,
    events: &[Event],
    k: usize,
    eps: &BigRational,
    result: &KIntersection,
) -> Result<Option<String>> {
    Ok(match result {
        KIntersection::Found { indices, bound, .. } => {
            let mut it = events[indices[0]].clone();
            for &i in &indices[1..] {
                it = it.intersect(&events[i]);
            }
            let mu = sp.mu(&it);
            (mu < *bound).then(|| format!("witness {indices:?} has measure {}", rational_to_string(&mu)))
        }
        KIntersection::NotFound { .. } => {
            let guaranteed = k == 1 || (k == 2 && events.len() as u64 >= measure::pair_threshold(eps)?);
            guaranteed.then(|| format!("no {k}-intersection found among {} events", events.len()))
        }
        KIntersection::Exhausted { .. } => None,
    })
}

fn abelian_count(
    formula: &str,
    group: Option<(u64, u32, u32)>,
    params: Option<&str>,
    check: usize,
    max_negations: Option<usize>,
    max_counted: Option<usize>,
    rng: &mut ChaCha8Rng,
) -> Result<Outcome> {
    let conj = abelian::parse_conjunction(formula)?;
    let mut cfg = SymbolicConfig::default();
    if let Some(v) = max_negations {
        cfg.max_negations = v;
    }
    if let Some(v) = max_counted {
        cfg.max_counted = v;
    }
    let sym = abelian::symbolic_count(&conj, &cfg)?;
    let mut payload = json!({ "symbolic": sym });
    let Some((p, n, m)) = group else {
        if params.is_some() {
            bail!("--params needs --p, --n and --m");
        }
        return Ok(Outcome::ok(payload));
    };
    let g = Homocyclic::new(p, n, m)?;
    let mut violation = None;
    let mut evaluate = |ys: &[Residues]| -> Result<Value> {
        let firing = sym.firing(p, n, m, ys)?;
        let mut row = json!({ "params": ys, "firing": firing });
        if firing.len() != 1 {
            violation = Some(format!("{} guards fire at {ys:?}", firing.len()));
            return Ok(row);
        }
        let value = sym.evaluate(p, n, m, ys)?;
        row["count"] = json!(value.to_string());
        let mut reference: Option<(&str, BigUint)> = None;
        if conj.counted() == 1 {
            reference = Some(("exact", abelian::exact_count(&conj, &g, ys)?));
        } else if g.order().checked_pow(conj.counted() as u32).is_some_and(|t| t <= 1 << 20) {
            reference = Some(("bruteForce", abelian::brute_force_count(&conj, &g, ys)?.into()));
        }
        if let Some((label, r)) = reference {
            row[label] = json!(r.to_string());
            if r != value {
                violation = Some(format!("symbolic {value} but {label} {r} at {ys:?}"));
            }
        }
        Ok(row)
    };
    if let Some(text) = params {
        let ys = parse_residues(text)?;
        payload["evaluation"] = evaluate(&ys)?;
    }
    if check > 0 {
        let q = g.modulus();
        let rows = (0..check)
            .map(|_| {
                let ys: Vec<Residues> = (0..conj.params())
                    .map(|_| (0..m).map(|_| rng.gen_range(0..q)).collect())
                    .collect();
                evaluate(&ys)
            })
            .collect::<Result<Vec<_>>>()?;
        payload["checks"] = Value::Array(rows);
    }
    Ok(Outcome { payload, violation })
}

#[derive(serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct VsSpec {
    q: u32,
    dim: u32,
    #[serde(default)]
    theta: Option<VectorTermSpec>,
    #[serde(default)]
    coset: Option<CosetCountSpec>,
    #[serde(default)]
    params: VsParams,
}

fn vs_count(text: &str, check: bool, cfg: &EngineConfig) -> Result<Outcome> {
    let spec: VsSpec = serde_json::from_str(text).context("vs-count spec JSON")?;
    let space = VectorSpace::new(spec.q, spec.dim)?;
    let (mut payload, count, poly, formula) = match (&spec.theta, &spec.coset) {
        (Some(t), None) => {
            let c = vs::count_theta_case(&space, t, &spec.params)?;
            let f = t.to_formula(&space, ThetaPart::Whole);
            (serde_json::to_value(&c)?, c.count, c.polynomial, f)
        }
        (None, Some(cs)) => {
            let c = vs::count_coset_difference(&space, cs, &spec.params)?;
            (serde_json::to_value(&c)?, c.count, c.polynomial, cs.to_formula(&space))
        }
        _ => bail!("`--spec` JSON needs exactly one of `theta` and `coset`"),
    };
    let mut violation = None;
    if poly.evaluate_at(spec.q, spec.dim).as_ref() != Some(&count) {
        violation = Some(format!("polynomial {poly} does not evaluate to {count}"));
    }
    if check {
        let m = space.structure();
        let brute = count_with(&formula, &m, &spec.params.assignment(), &["u"], cfg)?.into_value();
        payload["bruteForce"] = json!(brute.to_string());
        if brute != count {
            violation = Some(format!("count {count} but enumeration gives {brute}"));
        }
    }
    Ok(Outcome { payload, violation })
}

fn count_in_structure(
    f: &Formula,
    m: &FiniteStructure,
    fix: &[(String, String)],
    count_vars: &[String],
    cfg: &EngineConfig,
) -> Result<BigUint> {
    let free = free_variables(f);
    let mut a = Assignment::new();
    for (var, val) in fix {
        let sort = free
            .iter()
            .find(|(n, _)| n == var)
            .map(|(_, s)| s.clone())
            .ok_or_else(|| anyhow!("`{var}` is not free in the formula"))?;
        let id = val.parse().with_context(|| format!("element id `{val}` for {var}"))?;
        a.insert(var, &sort, id);
    }
    let counted: Vec<String> = if count_vars.is_empty() {
        free.into_iter()
            .map(|(n, _)| n)
            .filter(|n| !fix.iter().any(|(v, _)| v == n))
            .collect()
    } else {
        count_vars.to_vec()
    };
    let counted: Vec<&str> = counted.iter().map(String::as_str).collect();
    Ok(count_with(f, m, &a, &counted, cfg)?.into_value())
}

fn counted_vars(f: &Formula, fixed: &Bindings, explicit: &[String]) -> Vec<String> {
    if !explicit.is_empty() {
        return explicit.to_vec();
    }
    free_variables(f)
        .into_iter()
        .map(|(n, _)| n)
        .filter(|n| !fixed.contains_key(n))
        .collect()
}

fn read_input(path: &str) -> Result<String> {
    if path == "-" {
        let mut s = String::new();
        std::io::stdin().read_to_string(&mut s)?;
        Ok(s)
    } else {
        std::fs::read_to_string(path).with_context(|| format!("reading {path}"))
    }
}

fn pairs(items: &[String], sep: char) -> Result<Vec<(String, String)>> {
    items
        .iter()
        .filter(|s| !s.trim().is_empty())
        .map(|s| {
            let (a, b) = s
                .split_once(sep)
                .ok_or_else(|| anyhow!("expected `name{sep}value`, got `{s}`"))?;
            Ok((a.trim().to_string(), b.trim().to_string()))
        })
        .collect()
}

fn param_map(items: &[String]) -> Result<BTreeMap<String, u64>> {
    pairs(items, '=')?
        .into_iter()
        .map(|(k, v)| Ok((k, v.parse().with_context(|| format!("parameter value `{v}`"))?)))
        .collect()
}

fn parse_residues(text: &str) -> Result<Vec<Residues>> {
    text.split(';')
        .filter(|s| !s.trim().is_empty())
        .map(|p| {
            p.split(',')
                .map(|v| v.trim().parse().with_context(|| format!("residue `{v}`")))
                .collect()
        })
        .collect()
}
