use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use super::document::{
    load_and_validate, CatchmentDoc, Document, LexiconDoc, LoadError, ReportsDoc, ScenarioDoc, SupplyChainDoc,
};
use crate::beef::{
    self, compile_chain, score_supplier, sourcing_mass, BeefError, ScoreKind, SupplierScores, VAR_A, VAR_F, VAR_L,
    VAR_N,
};
use crate::controversy::{bayes_update_compliance, ControversyError, Lexicon};
use crate::inference::{enumerate_joint, marginalize, Evidence, InferenceError};
use crate::optimizer::{optimize, optimum_distribution, OptimizeError, OptimizerConfig};
use crate::scenario::{run_scenario, ScenarioError, ScenarioOutcome};
use crate::validation::{ptr, Violation};
use crate::water::{self, expected_outputs_mcmc, McmcSettings, SimOptions, Trajectory, WaterError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Validate,
    ScoreBeef,
    Scenario,
    OptimizeWater,
    ProjectWater,
    Report,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub inputs: Vec<PathBuf>,
    pub scenario: Option<PathBuf>,
    pub output: PathBuf,
    pub seed: u64,
    pub horizon: Option<usize>,
    pub threads: Option<usize>,
    pub oracle: bool,
    pub strict_paper_sigmoid: bool,
    pub draws: Option<usize>,
    pub burn_in: Option<usize>,
}

impl RunConfig {
    pub fn new(command: Command, output: impl Into<PathBuf>) -> Self {
        RunConfig {
            command,
            inputs: Vec::new(),
            scenario: None,
            output: output.into(),
            seed: 0,
            horizon: None,
            threads: None,
            oracle: false,
            strict_paper_sigmoid: false,
            draws: None,
            burn_in: None,
        }
    }

    fn sim(&self) -> SimOptions {
        SimOptions {
            strict_paper_sigmoid: self.strict_paper_sigmoid,
        }
    }

    fn mcmc(&self, draws: usize) -> McmcSettings {
        let d = McmcSettings::default();
        McmcSettings {
            n_draws: draws,
            burn_in: self.burn_in.unwrap_or(d.burn_in),
            proposal_scale: d.proposal_scale,
            seed: self.seed,
        }
    }
}

pub mod exit {
    pub const OK: u8 = 0;
    pub const USAGE: u8 = 1;
    pub const INFEASIBLE: u8 = 5;
    pub const IMPOSSIBLE_EVIDENCE: u8 = 6;
    pub const INVARIANT: u8 = 4;
}

/// Result of one CLI run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub exit_code: u8,
    /// Files written, relative to the output directory, in write order.
    pub files: Vec<String>,
    /// Diagnostics, one per line, each `error[CODE] locus: message`.
    pub diagnostics: Vec<String>,
}

#[derive(Debug)]
struct Failure {
    exit: u8,
    file: Option<String>,
    violations: Vec<Violation>,
}

impl Failure {
    fn new(exit: u8, code: &'static str, pointer: impl Into<String>, message: impl Into<String>) -> Self {
        Failure {
            exit,
            file: None,
            violations: vec![Violation::new(code, pointer, message)],
        }
    }

    fn in_file(mut self, file: &str) -> Self {
        self.file = Some(file.to_string());
        self
    }

    fn lines(&self) -> Vec<String> {
        let file = self.file.as_deref().unwrap_or("");
        self.violations
            .iter()
            .map(|v| format!("error[{}] {file}#{}: {}", v.code, v.pointer, v.message))
            .collect()
    }
}

fn from_load(file: &str, e: LoadError) -> Failure {
    Failure {
        exit: e.stage.exit_code(),
        file: Some(file.to_string()),
        violations: e.violations,
    }
}

impl From<BeefError> for Failure {
    fn from(e: BeefError) -> Self {
        match e {
            BeefError::Inference(InferenceError::ImpossibleEvidence { .. }) => Failure::new(
                exit::IMPOSSIBLE_EVIDENCE,
                "E_IMPOSSIBLE_EVIDENCE",
                "/graph",
                e.to_string(),
            ),
            other => Failure::new(exit::INVARIANT, "E_CONFIG", "/graph", other.to_string()),
        }
    }
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        match e {
            ScenarioError::Beef(b) => b.into(),
            ScenarioError::NoValidSourcing { .. } => Failure::new(
                exit::IMPOSSIBLE_EVIDENCE,
                "E_NO_VALID_SOURCING",
                "/scenario",
                e.to_string(),
            ),
            other => Failure::new(exit::INVARIANT, "E_CONFIG", "/scenario", other.to_string()),
        }
    }
}

impl From<ControversyError> for Failure {
    fn from(e: ControversyError) -> Self {
        match e {
            ControversyError::ContradictoryEvidence => Failure::new(
                exit::IMPOSSIBLE_EVIDENCE,
                "E_CONTRADICTORY_EVIDENCE",
                "/corpus/reports",
                e.to_string(),
            ),
            other => Failure::new(exit::INVARIANT, "E_CONFIG", "/corpus", other.to_string()),
        }
    }
}

impl From<WaterError> for Failure {
    fn from(e: WaterError) -> Self {
        match e {
            WaterError::Inference(i) => Failure::new(exit::USAGE, "E_SAMPLER", "/priors", i.to_string()),
            other => Failure::new(exit::INVARIANT, "E_CONFIG", "/catchment", other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::new(exit::USAGE, "E_IO", "", e.to_string())
    }
}

fn display_name(path: &Path) -> String {
    path.file_name()
        .map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned())
}

#[derive(Default)]
struct Inputs {
    supply_chain: Option<SupplyChainDoc>,
    catchment: Option<CatchmentDoc>,
    reports: Option<ReportsDoc>,
    lexicon: Option<LexiconDoc>,
    scenario: Option<ScenarioDoc>,
}

impl Inputs {
    fn load(cfg: &RunConfig) -> Result<Inputs, Failure> {
        let mut out = Inputs::default();
        for path in &cfg.inputs {
            let name = display_name(path);
            let doc = load_and_validate(path).map_err(|e| from_load(&name, e))?;
            let kind = doc.type_name();
            let taken = match doc {
                Document::SupplyChain(d) => out.supply_chain.replace(d).is_some(),
                Document::Catchment(d) => out.catchment.replace(d).is_some(),
                Document::Reports(d) => out.reports.replace(d).is_some(),
                Document::Lexicon(d) => out.lexicon.replace(d).is_some(),
                Document::Scenario(_) => {
                    return Err(Failure::new(
                        exit::USAGE,
                        "E_USAGE",
                        "/type",
                        "scenario documents are passed with --scenario",
                    )
                    .in_file(&name))
                }
            };
            if taken {
                return Err(
                    Failure::new(exit::USAGE, "E_USAGE", "/type", format!("more than one `{kind}` input"))
                        .in_file(&name),
                );
            }
        }
        if let Some(path) = &cfg.scenario {
            let name = display_name(path);
            match load_and_validate(path).map_err(|e| from_load(&name, e))? {
                Document::Scenario(d) => out.scenario = Some(d),
                other => {
                    return Err(Failure::new(
                        exit::USAGE,
                        "E_USAGE",
                        "/type",
                        format!("--scenario expects a scenario document, found `{}`", other.type_name()),
                    )
                    .in_file(&name))
                }
            }
        }
        out.cross_check()?;
        Ok(out)
    }

    fn cross_check(&self) -> Result<(), Failure> {
        let mut v = Vec::new();
        if let (Some(sc), Some(s)) = (&self.supply_chain, &self.scenario) {
            v.extend(s.scenario.validate(Some(&sc.graph), Some(&sc.farm_states), "/scenario"));
        }
        if let (Some(sc), Some(r)) = (&self.supply_chain, &self.reports) {
            for (i, rep) in r.corpus.reports.iter().enumerate() {
                if !sc.graph.has_supplier(&rep.subject) {
                    v.push(Violation::new(
                        "E_DANGLING_ID",
                        ptr(&ptr("/corpus/reports", i), "subject"),
                        format!("report subject `{}` is not a supplier", rep.subject),
                    ));
                }
            }
        }
        if let (Some(l), Some(r)) = (&self.lexicon, &self.reports) {
            for c in &l.lexicon.classes {
                if r.corpus.likelihood.index(c).is_none() {
                    v.push(Violation::new(
                        "E_DANGLING_ID",
                        "/lexicon/classes",
                        format!("lexicon class `{c}` has no likelihood"),
                    ));
                }
            }
        }
        if v.is_empty() {
            Ok(())
        } else {
            Err(Failure {
                exit: exit::INVARIANT,
                file: None,
                violations: v,
            })
        }
    }

    fn need_supply_chain(&self) -> Result<&SupplyChainDoc, Failure> {
        self.supply_chain
            .as_ref()
            .ok_or_else(|| Failure::new(exit::USAGE, "E_USAGE", "", "a supply_chain input is required"))
    }

    fn need_catchment(&self) -> Result<&CatchmentDoc, Failure> {
        self.catchment
            .as_ref()
            .ok_or_else(|| Failure::new(exit::USAGE, "E_USAGE", "", "a catchment input is required"))
    }
}

/// Writes artifacts inside the output directory only.
struct Sink {
    dir: PathBuf,
    files: Vec<String>,
}

impl Sink {
    fn new(dir: &Path) -> Result<Sink, Failure> {
        std::fs::create_dir_all(dir)?;
        Ok(Sink {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn text(&mut self, name: &str, body: &str) -> Result<(), Failure> {
        std::fs::write(self.dir.join(name), body)?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), Failure> {
        let mut s =
            serde_json::to_string_pretty(value).map_err(|e| Failure::new(exit::USAGE, "E_IO", "", e.to_string()))?;
        s.push('\n');
        self.text(name, &s)
    }

    fn csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<(), Failure> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Failure::new(exit::USAGE, "E_IO", "", e.to_string());
        w.write_record(header).map_err(io)?;
        for r in rows {
            w.write_record(r).map_err(io)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Failure::new(exit::USAGE, "E_IO", "", e.to_string()))?;
        self.text(name, &String::from_utf8_lossy(&bytes))
    }
}

/// Shortest round-trip decimal, with an exponent for very large or small values.
fn num(x: f64) -> String {
    serde_json::to_string(&x).unwrap_or_default()
}

/// Executes one command. Diagnostics are returned, not printed.
pub fn run(cfg: &RunConfig) -> RunOutcome {
    let exec = || {
        let mut sink = match Sink::new(&cfg.output) {
            Ok(s) => s,
            Err(f) => return (f.exit, Vec::new(), f.lines()),
        };
        let result = dispatch(cfg, &mut sink);
        let (code, diags) = match result {
            Ok(code) => (code, Vec::new()),
            Err(f) => (f.exit, f.lines()),
        };
        (code, sink.files, diags)
    };
    let (exit_code, files, diagnostics) = match cfg.threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(exec),
            Err(e) => (exit::USAGE, Vec::new(), vec![format!("error[E_USAGE] #: {e}")]),
        },
        None => exec(),
    };
    RunOutcome {
        exit_code,
        files,
        diagnostics,
    }
}

fn dispatch(cfg: &RunConfig, sink: &mut Sink) -> Result<u8, Failure> {
    if cfg.command == Command::Validate {
        return validate(cfg, sink);
    }
    let inputs = Inputs::load(cfg)?;
    match cfg.command {
        Command::Validate => unreachable!(),
        Command::ScoreBeef => score_beef(cfg, &inputs, sink),
        Command::Scenario => scenario(cfg, &inputs, sink),
        Command::OptimizeWater => optimize_water(cfg, &inputs, sink),
        Command::ProjectWater => project_water(cfg, &inputs, sink),
        Command::Report => report(cfg, &inputs, sink),
    }
}

fn validate(cfg: &RunConfig, sink: &mut Sink) -> Result<u8, Failure> {
    let mut entries = Vec::new();
    let mut first: Option<Failure> = None;
    let paths = cfg.inputs.iter().chain(cfg.scenario.iter());
    for path in paths {
        let name = display_name(path);
        match load_and_validate(path) {
            Ok(doc) => entries.push(json!({"file": name, "type": doc.type_name(), "status": "ok", "violations": []})),
            Err(e) => {
                entries.push(json!({"file": name, "status": e.stage, "violations": e.violations}));
                first.get_or_insert(from_load(&name, e));
            }
        }
    }
    if first.is_none() {
        if let Err(f) = Inputs::load(cfg) {
            entries.push(json!({"file": Value::Null, "status": "cross_document", "violations": f.violations}));
            first = Some(f);
        }
    }
    sink.json("validation.json", &json!({ "documents": entries }))?;
    match first {
        None => Ok(exit::OK),
        Some(f) => Err(f),
    }
}

#[derive(Debug, Clone, Serialize)]
struct ActorScore {
    supplier: String,
    actor: String,
    actor_kind: &'static str,
    path_probability: f64,
    e_score_forest: f64,
    e_score_nrp: f64,
}

#[derive(Debug, Clone, Serialize)]
struct OracleRow {
    supplier: String,
    engine_forest: f64,
    enumeration_forest: f64,
    engine_nrp: f64,
    enumeration_nrp: f64,
    max_abs_diff: f64,
}

#[derive(Debug, Clone, Serialize)]
struct Posterior {
    supplier: String,
    prior: f64,
    n_reports: usize,
    posterior: f64,
}

pub const ORACLE_TOL: f64 = 1e-9;

struct BeefResults {
    suppliers: Vec<SupplierScores>,
    actors: Vec<ActorScore>,
    oracle: Option<Vec<OracleRow>>,
    posteriors: Option<Vec<Posterior>>,
}

fn beef_results(cfg: &RunConfig, inputs: &Inputs) -> Result<BeefResults, Failure> {
    let sc = inputs.need_supply_chain()?;
    let (g, st) = (&sc.graph, &sc.farm_states);
    let mut suppliers = Vec::new();
    let mut actors = Vec::new();
    let mut oracle = cfg.oracle.then(Vec::new);
    for s in &g.suppliers {
        let scores = score_supplier(g, st, s)?;
        let mass = sourcing_mass(g, s)?;
        if mass > 0.0 {
            let model = compile_chain(g, st, s)?;
            let none = Evidence::new();
            let p_a = marginalize(&model, &[VAR_A], &none).map_err(BeefError::from)?;
            let p_f = marginalize(&model, &[VAR_F], &none).map_err(BeefError::from)?;
            let named = g
                .abattoirs
                .iter()
                .zip(p_a.values())
                .map(|(a, &p)| (a.clone(), "abattoir", p))
                .chain(
                    g.farms
                        .iter()
                        .zip(p_f.values())
                        .map(|(f, &p)| (f.id.clone(), "farm", p)),
                );
            for (actor, kind, p) in named {
                if p > 0.0 {
                    actors.push(ActorScore {
                        supplier: s.clone(),
                        e_score_forest: beef::actor_e_score(g, st, s, &actor, ScoreKind::Forest)?,
                        e_score_nrp: beef::actor_e_score(g, st, s, &actor, ScoreKind::Nrp)?,
                        actor,
                        actor_kind: kind,
                        path_probability: p,
                    });
                }
            }
            if let Some(rows) = oracle.as_mut() {
                match (
                    enumerate_joint(&model, &[VAR_L], &none),
                    enumerate_joint(&model, &[VAR_N], &none),
                ) {
                    (Ok(l), Ok(n)) => {
                        let forest = mass * l.values()[1];
                        let nrp: f64 = st.nrp_bins.iter().zip(n.values()).map(|(b, q)| b * mass * q).sum();
                        let diff = (forest - scores.e_score_forest)
                            .abs()
                            .max((nrp - scores.e_score_nrp).abs());
                        rows.push(OracleRow {
                            supplier: s.clone(),
                            engine_forest: scores.e_score_forest,
                            enumeration_forest: forest,
                            engine_nrp: scores.e_score_nrp,
                            enumeration_nrp: nrp,
                            max_abs_diff: diff,
                        });
                    }
                    (Err(InferenceError::StateSpaceTooLarge { .. }), _)
                    | (_, Err(InferenceError::StateSpaceTooLarge { .. })) => {}
                    (Err(e), _) | (_, Err(e)) => return Err(BeefError::from(e).into()),
                }
            }
        }
        suppliers.push(scores);
    }
    let posteriors = match &inputs.reports {
        None => None,
        Some(r) => {
            let lexicon = inputs
                .lexicon
                .as_ref()
                .map(|l| l.lexicon.clone())
                .unwrap_or_else(|| Lexicon {
                    classes: r.corpus.likelihood.classes.clone(),
                    words: BTreeMap::new(),
                });
            let mut out = Vec::new();
            for s in &suppliers {
                let reports: Vec<_> = r.corpus.for_subject(&s.supplier).cloned().collect();
                let posterior = bayes_update_compliance(s.e_score_forest, &reports, &lexicon, &r.corpus.likelihood)?;
                out.push(Posterior {
                    supplier: s.supplier.clone(),
                    prior: s.e_score_forest,
                    n_reports: reports.len(),
                    posterior,
                });
            }
            Some(out)
        }
    };
    Ok(BeefResults {
        suppliers,
        actors,
        oracle,
        posteriors,
    })
}

fn score_beef(cfg: &RunConfig, inputs: &Inputs, sink: &mut Sink) -> Result<u8, Failure> {
    let r = beef_results(cfg, inputs)?;
    let mut doc = json!({ "suppliers": r.suppliers, "actors": r.actors });
    if let Some(o) = &r.oracle {
        doc["oracle"] = json!({ "tolerance": ORACLE_TOL, "rows": o });
    }
    if let Some(p) = &r.posteriors {
        doc["controversy"] = json!(p);
    }
    sink.json("beef_scores.json", &doc)?;

    let mut header = vec!["supplier", "e_score_forest", "e_score_nrp", "expected_return"];
    if r.posteriors.is_some() {
        header.push("posterior_compliance");
    }
    if r.oracle.is_some() {
        header.extend(["oracle_e_score_forest", "oracle_max_abs_diff"]);
    }
    let rows: Vec<Vec<String>> = r
        .suppliers
        .iter()
        .map(|s| {
            let mut row = vec![
                s.supplier.clone(),
                num(s.e_score_forest),
                num(s.e_score_nrp),
                num(s.expected_return),
            ];
            if let Some(p) = &r.posteriors {
                let q = p
                    .iter()
                    .find(|x| x.supplier == s.supplier)
                    .map_or(f64::NAN, |x| x.posterior);
                row.push(num(q));
            }
            if let Some(o) = &r.oracle {
                match o.iter().find(|x| x.supplier == s.supplier) {
                    Some(x) => row.extend([num(x.enumeration_forest), num(x.max_abs_diff)]),
                    None => row.extend([String::new(), String::new()]),
                }
            }
            row
        })
        .collect();
    sink.csv("beef_scores.csv", &header, &rows)?;
    let actor_rows: Vec<Vec<String>> = r
        .actors
        .iter()
        .map(|a| {
            vec![
                a.supplier.clone(),
                a.actor.clone(),
                a.actor_kind.to_string(),
                num(a.path_probability),
                num(a.e_score_forest),
                num(a.e_score_nrp),
            ]
        })
        .collect();
    sink.csv(
        "beef_actors.csv",
        &[
            "supplier",
            "actor",
            "actor_kind",
            "path_probability",
            "e_score_forest",
            "e_score_nrp",
        ],
        &actor_rows,
    )?;
    if let Some(o) = &r.oracle {
        if let Some(bad) = o.iter().find(|x| !(x.max_abs_diff <= ORACLE_TOL)) {
            return Err(Failure::new(
                exit::USAGE,
                "E_ORACLE",
                "/graph",
                format!(
                    "supplier `{}` differs from enumeration by {}",
                    bad.supplier, bad.max_abs_diff
                ),
            ));
        }
    }
    Ok(exit::OK)
}

fn scenario_outcome(cfg: &RunConfig, inputs: &Inputs) -> Result<ScenarioOutcome, Failure> {
    let sc = inputs.need_supply_chain()?;
    let mut spec = inputs
        .scenario
        .as_ref()
        .ok_or_else(|| Failure::new(exit::USAGE, "E_USAGE", "", "--scenario is required"))?
        .scenario
        .clone();
    if let Some(h) = cfg.horizon {
        spec.horizon = h;
    }
    Ok(run_scenario(&sc.graph, &sc.farm_states, &spec)?)
}

fn scenario(cfg: &RunConfig, inputs: &Inputs, sink: &mut Sink) -> Result<u8, Failure> {
    let outcome = scenario_outcome(cfg, inputs)?;
    sink.json("scenario.json", &outcome)?;
    let score_rows = |phase: &str, v: &[SupplierScores]| -> Vec<Vec<String>> {
        v.iter()
            .map(|s| {
                vec![
                    phase.to_string(),
                    s.supplier.clone(),
                    num(s.e_score_forest),
                    num(s.e_score_nrp),
                    num(s.expected_return),
                ]
            })
            .collect()
    };
    let header = ["phase", "supplier", "e_score_forest", "e_score_nrp", "expected_return"];
    match &outcome {
        ScenarioOutcome::Portfolio { suppliers, .. } => {
            sink.csv("scenario.csv", &header, &score_rows("current", suppliers))?
        }
        ScenarioOutcome::Divestment { before, after } => {
            let mut rows = score_rows("before", before);
            rows.extend(score_rows("after", after));
            sink.csv("scenario.csv", &header, &rows)?
        }
        ScenarioOutcome::EmbargoDynamics { projections, .. } => {
            let rows: Vec<Vec<String>> = projections
                .iter()
                .flat_map(|(s, steps)| {
                    steps.iter().map(move |p| {
                        vec![
                            s.clone(),
                            p.step.to_string(),
                            num(p.expected_return),
                            num(p.e_score_forest),
                            num(p.surviving_mass),
                        ]
                    })
                })
                .collect();
            sink.csv(
                "scenario.csv",
                &[
                    "supplier",
                    "step",
                    "expected_return",
                    "e_score_forest",
                    "surviving_mass",
                ],
                &rows,
            )?
        }
    }
    Ok(exit::OK)
}

fn horizon_for(cfg: &RunConfig, doc: &CatchmentDoc) -> usize {
    cfg.horizon.unwrap_or_else(|| doc.catchment.max_horizon())
}

const TRAJECTORY_HEADER: [&str; 11] = [
    "t",
    "pollution",
    "chemical_cost",
    "fine",
    "nbs_cost",
    "repayment",
    "income",
    "other_expenses",
    "balance",
    "reputation",
    "e_score",
];

fn trajectory_rows(tr: &Trajectory) -> Vec<Vec<String>> {
    let mut rows = vec![vec![
        "0".to_string(),
        String::new(),
        String::new(),
        String::new(),
        String::new(),
        String::new(),
        String::new(),
        String::new(),
        num(tr.initial_balance),
        num(1.0),
        String::new(),
    ]];
    rows.extend(tr.steps.iter().map(|s| {
        vec![
            s.t.to_string(),
            num(s.pollution),
            num(s.chemical_cost),
            num(s.fine),
            num(s.nbs_cost),
            num(s.repayment),
            num(s.income),
            num(s.other_expenses),
            num(s.balance),
            num(s.reputation),
            num(s.e_score),
        ]
    }));
    rows
}

fn optimize_water(cfg: &RunConfig, inputs: &Inputs, sink: &mut Sink) -> Result<u8, Failure> {
    let doc = inputs.need_catchment()?;
    let horizon = horizon_for(cfg, doc);
    let ocfg = OptimizerConfig {
        sim: cfg.sim(),
        ..OptimizerConfig::default()
    };
    let mut code = exit::OK;
    let mut pending = None;
    match optimize(&doc.catchment, horizon, &ocfg) {
        Ok(sol) => {
            sink.json("assignment.json", &json!({ "horizon": horizon, "solution": sol }))?;
            sink.csv("trajectory.csv", &TRAJECTORY_HEADER, &trajectory_rows(&sol.trajectory))?;
        }
        Err(OptimizeError::Infeasible(report)) => {
            sink.json("infeasibility.json", &json!({ "horizon": horizon, "report": report }))?;
            sink.csv(
                "trajectory.csv",
                &TRAJECTORY_HEADER,
                &trajectory_rows(&report.trajectory),
            )?;
            code = exit::INFEASIBLE;
            pending = Some(Failure::new(
                exit::INFEASIBLE,
                "E_INFEASIBLE",
                "/catchment/finance",
                OptimizeError::Infeasible(report).to_string(),
            ));
        }
        Err(OptimizeError::Water(e)) => return Err(e.into()),
    }
    if let Some(draws) = cfg.draws {
        match optimum_distribution(&doc.catchment, horizon, &doc.priors, &cfg.mcmc(draws), &ocfg) {
            Ok(d) => sink.json("optimum_distribution.json", &d)?,
            Err(OptimizeError::Water(e)) => return Err(e.into()),
            Err(OptimizeError::Infeasible(_)) => unreachable!("infeasible draws are counted"),
        }
    }
    match pending {
        Some(f) => Err(f),
        None => Ok(code),
    }
}

fn project_water(cfg: &RunConfig, inputs: &Inputs, sink: &mut Sink) -> Result<u8, Failure> {
    let doc = inputs.need_catchment()?;
    let horizon = horizon_for(cfg, doc);
    let plan = doc.catchment.resolve_plan(&doc.plan)?;
    let tr = water::simulate(&doc.catchment, &plan, horizon, cfg.sim())?;
    sink.json(
        "projection.json",
        &json!({ "horizon": horizon, "plan": doc.catchment.plan_ids(&plan), "trajectory": tr }),
    )?;
    sink.csv("trajectory.csv", &TRAJECTORY_HEADER, &trajectory_rows(&tr))?;
    if let Some(draws) = cfg.draws {
        let s = expected_outputs_mcmc(&doc.catchment, &plan, horizon, &doc.priors, &cfg.mcmc(draws), cfg.sim())?;
        sink.json("mcmc_summary.json", &s)?;
        let metrics = ["pollution", "chemical_cost", "fine", "balance", "reputation", "e_score"];
        let mut header = vec!["t".to_string()];
        for m in metrics {
            header.extend([format!("{m}_mean"), format!("{m}_sd"), format!("{m}_se")]);
        }
        let rows: Vec<Vec<String>> = s
            .steps
            .iter()
            .map(|st| {
                let mut row = vec![st.t.to_string()];
                for x in [
                    st.pollution,
                    st.chemical_cost,
                    st.fine,
                    st.balance,
                    st.reputation,
                    st.e_score,
                ] {
                    row.extend([num(x.mean), num(x.sd), num(x.std_error)]);
                }
                row
            })
            .collect();
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        sink.csv("mcmc_summary.csv", &header, &rows)?;
    }
    Ok(exit::OK)
}

fn fmt4(x: f64) -> String {
    format!("{x:.4}")
}

fn report(cfg: &RunConfig, inputs: &Inputs, sink: &mut Sink) -> Result<u8, Failure> {
    let mut md = String::from("# Nature-related risk report\n\n");
    let _ = writeln!(md, "Seed: {}\n", cfg.seed);
    if inputs.supply_chain.is_some() {
        let r = beef_results(cfg, inputs)?;
        md.push_str("## Beef supply chain\n\n| supplier | forest E-score | NRP E-score | expected return |\n|---|---|---|---|\n");
        for s in &r.suppliers {
            let _ = writeln!(
                md,
                "| {} | {} | {} | {:.2} |",
                s.supplier,
                fmt4(s.e_score_forest),
                fmt4(s.e_score_nrp),
                s.expected_return
            );
        }
        if let Some(p) = &r.posteriors {
            md.push_str("\n### Controversy reports\n\n| supplier | reports | prior | posterior |\n|---|---|---|---|\n");
            for x in p {
                let _ = writeln!(
                    md,
                    "| {} | {} | {} | {} |",
                    x.supplier,
                    x.n_reports,
                    fmt4(x.prior),
                    fmt4(x.posterior)
                );
            }
        }
        md.push('\n');
        if inputs.scenario.is_some() {
            md.push_str("### Scenario\n\n");
            match scenario_outcome(cfg, inputs)? {
                ScenarioOutcome::Portfolio { portfolio, .. } => {
                    let _ = writeln!(
                        md,
                        "Portfolio forest E-score {}, NRP E-score {}.\n",
                        fmt4(portfolio.forest),
                        fmt4(portfolio.nrp)
                    );
                }
                ScenarioOutcome::Divestment { before, after } => {
                    md.push_str("| supplier | forest before | forest after |\n|---|---|---|\n");
                    for (b, a) in before.iter().zip(&after) {
                        let _ = writeln!(
                            md,
                            "| {} | {} | {} |",
                            b.supplier,
                            fmt4(b.e_score_forest),
                            fmt4(a.e_score_forest)
                        );
                    }
                    md.push('\n');
                }
                ScenarioOutcome::EmbargoDynamics {
                    legislation_strength,
                    projections,
                    ..
                } => {
                    let _ = writeln!(md, "Embargo under `{legislation_strength}` legislation.\n");
                    md.push_str("| supplier | step | expected return | forest E-score |\n|---|---|---|---|\n");
                    for (s, steps) in &projections {
                        for p in steps {
                            let _ = writeln!(
                                md,
                                "| {s} | {} | {:.2} | {} |",
                                p.step,
                                p.expected_return,
                                fmt4(p.e_score_forest)
                            );
                        }
                    }
                    md.push('\n');
                }
            }
        }
    }
    if let Some(doc) = &inputs.catchment {
        let horizon = horizon_for(cfg, doc);
        let plan = doc.catchment.resolve_plan(&doc.plan)?;
        let tr = water::simulate(&doc.catchment, &plan, horizon, cfg.sim())?;
        md.push_str("## Water catchment\n\n");
        let _ = writeln!(
            md,
            "Configured plan over {horizon} intervals: final balance {:.2}, final reputation {}, first insolvent step {}.\n",
            tr.final_balance(),
            fmt4(tr.final_reputation()),
            tr.first_insolvent_step().map_or("none".to_string(), |t| t.to_string())
        );
        let ocfg = OptimizerConfig {
            sim: cfg.sim(),
            ..OptimizerConfig::default()
        };
        match optimize(&doc.catchment, horizon, &ocfg) {
            Ok(sol) => {
                md.push_str("Optimal NbS assignment:\n\n| field | option |\n|---|---|\n");
                for (f, o) in &sol.assignment.choices {
                    let _ = writeln!(md, "| {f} | {o} |");
                }
                let _ = writeln!(
                    md,
                    "\nSummed balance {:.2}; final reputation {}; final E-score {}.\n",
                    sol.assignment.objective,
                    fmt4(sol.trajectory.final_reputation()),
                    fmt4(sol.trajectory.steps.last().map_or(1.0, |s| s.e_score))
                );
            }
            Err(OptimizeError::Infeasible(r)) => {
                let _ = writeln!(
                    md,
                    "No assignment stays solvent. The least-violating plan first goes negative at step {} (minimum balance {:.2}).\n",
                    r.first_insolvent_step, r.min_balance
                );
            }
            Err(OptimizeError::Water(e)) => return Err(e.into()),
        }
    }
    if inputs.supply_chain.is_none() && inputs.catchment.is_none() {
        return Err(Failure::new(
            exit::USAGE,
            "E_USAGE",
            "",
            "report needs a supply_chain or catchment input",
        ));
    }
    sink.text("report.md", &md)?;
    Ok(exit::OK)
}
