//! Audit sessions: configuration, the persisted record, and the state machine.
//!
//! A session is fully described by its [`SessionFile`]. The live test
//! statistics are rebuilt on load by replaying the draw log from the seed
//! through the same code path that produced it, and the result is checked
//! against the statistics stored in the file.

use std::collections::{BTreeMap, HashSet};

use chrono::{DateTime, Utc};
use rla_core::assorters::CardInterpretation;
use rla_core::batch::{Batch, BatchCollection, BatchDrawState};
use rla_core::martingale::eta_to_lambda;
use rla_core::sampling::{SelectionStream, WeightedSelectionStream};
use rla_core::serde_ext::extended_f64;
use rla_core::{ComparatorSpec, EstimatorSpec, Sampling, SequentialTest, ShrinkTrunc, Status, TestConfig, TestState};
use serde::{Deserialize, Serialize};

use crate::error::{Result, ServiceError};

pub const SCHEMA_VERSION: u32 = 1;

/// Prior weight used when an assertion does not name a test.
pub const DEFAULT_D: f64 = 100.0;

/// Every assertion claims an assorter mean above one half.
pub const NULL_MEAN: f64 = 0.5;

/// Largest number of draws dealt by one request.
pub const MAX_DEAL: u64 = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AssorterSpec {
    /// Winner/loser pair of a plurality contest; entries are votes.
    Plurality { winner: String, loser: String },
    /// Arbitrary assorter with values in `[0, upper]`; entries are values.
    Generic { upper: f64 },
}

impl AssorterSpec {
    pub fn upper(&self) -> f64 {
        match self {
            Self::Plurality { .. } => 1.0,
            Self::Generic { upper } => *upper,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssertionConfig {
    pub id: String,
    pub assorter: AssorterSpec,
    /// Reported assorter mean, used as the alternative.
    pub eta0: f64,
    /// Test to run; defaults to ALPHA with the truncated-shrinkage estimator
    /// anchored at `eta0` with `d = 100`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test: Option<ComparatorSpec>,
}

impl AssertionConfig {
    pub fn comparator(&self, config: &TestConfig) -> ComparatorSpec {
        self.test.clone().unwrap_or_else(|| {
            ComparatorSpec::alpha(EstimatorSpec::ShrinkTrunc(ShrinkTrunc::new(self.eta0, DEFAULT_D, config)))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchUnit {
    pub id: String,
    pub cards: u64,
}

/// Request to open a session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    #[serde(default)]
    pub session_id: Option<String>,
    pub seed: u64,
    /// Number of cards. Derived from `batches` when those are given.
    #[serde(default)]
    pub population: Option<u64>,
    pub sampling: Sampling,
    pub alpha: f64,
    pub assertions: Vec<AssertionConfig>,
    /// Sample batches (chosen with chance proportional to size) instead of cards.
    #[serde(default)]
    pub batches: Option<Vec<BatchUnit>>,
    #[serde(default)]
    pub compliance_attested: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    Open,
    AllConfirmed,
    Escalated,
}

impl SessionStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Open => "open",
            Self::AllConfirmed => "all_confirmed",
            Self::Escalated => "escalated",
        }
    }
}

/// A unit dealt but not yet interpreted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PendingDraw {
    pub seq: u64,
    /// Card index in `0..N`, or batch position.
    pub index: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrawRecord {
    pub seq: u64,
    pub index: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch_id: Option<String>,
    pub entries: BTreeMap<String, CardInterpretation>,
    pub recorded_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssertionRecord {
    pub config: AssertionConfig,
    pub state: TestState,
}

/// Everything persisted about a session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionFile {
    pub schema_version: u32,
    pub session_id: String,
    pub created_at: DateTime<Utc>,
    pub seed: u64,
    pub population: u64,
    pub sampling: Sampling,
    pub alpha: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batches: Option<Vec<BatchUnit>>,
    pub compliance_attested: bool,
    pub assertions: Vec<AssertionRecord>,
    pub draw_log: Vec<DrawRecord>,
    pub pending: Vec<PendingDraw>,
    pub status: SessionStatus,
}

/// Interpretation of one dealt unit, keyed by assertion id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interpretation {
    pub seq: u64,
    pub entries: BTreeMap<String, CardInterpretation>,
}

/// One interpretation or several, applied in order and atomically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Interpretations {
    Many { records: Vec<Interpretation> },
    One(Interpretation),
}

impl Interpretations {
    pub fn records(&self) -> &[Interpretation] {
        match self {
            Self::Many { records } => records,
            Self::One(r) => std::slice::from_ref(r),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssertionReport {
    pub id: String,
    pub draws: u64,
    pub p_value: f64,
    /// `min(1, 1/max T)`.
    pub measured_risk: f64,
    #[serde(with = "extended_f64")]
    pub log_t: f64,
    pub status: Status,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionReport {
    pub schema_version: u32,
    pub session_id: String,
    pub status: SessionStatus,
    pub seed: u64,
    pub population: u64,
    pub sampling: Sampling,
    pub alpha: f64,
    pub draws: u64,
    pub pending: Vec<PendingDraw>,
    pub assertions: Vec<AssertionReport>,
    pub compliance_attested: bool,
}

impl SessionReport {
    /// Report computed from the persisted record alone.
    pub fn from_file(file: &SessionFile) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            session_id: file.session_id.clone(),
            status: file.status,
            seed: file.seed,
            population: file.population,
            sampling: file.sampling,
            alpha: file.alpha,
            draws: file.draw_log.len() as u64,
            pending: file.pending.clone(),
            assertions: file
                .assertions
                .iter()
                .map(|a| AssertionReport {
                    id: a.config.id.clone(),
                    draws: a.state.draws,
                    p_value: a.state.p_value(),
                    measured_risk: a.state.p_value(),
                    log_t: a.state.log_t,
                    status: a.state.status,
                })
                .collect(),
            compliance_attested: file.compliance_attested,
        }
    }
}

#[derive(Debug, Clone)]
enum Runtime {
    Card(SequentialTest),
    Batch { state: Box<BatchDrawState>, est: EstimatorSpec },
}

impl Runtime {
    fn state(&self) -> &TestState {
        match self {
            Self::Card(t) => t.state(),
            Self::Batch { state, .. } => state.test(),
        }
    }
}

#[derive(Debug, Clone)]
enum Selector {
    Cards(SelectionStream),
    Batches(WeightedSelectionStream),
}

/// A live session.
#[derive(Debug, Clone)]
pub struct Session {
    file: SessionFile,
    runtime: Vec<Runtime>,
    selector: Selector,
}

fn invalid(msg: impl Into<String>) -> ServiceError {
    ServiceError::InvalidConfig(msg.into())
}

/// Session ids double as file names, so they are restricted to a safe alphabet.
pub fn valid_session_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 64 && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

impl Session {
    pub fn create(config: SessionConfig, now: DateTime<Utc>) -> Result<Self> {
        let session_id = match config.session_id {
            Some(id) if valid_session_id(&id) => id,
            Some(id) => return Err(invalid(format!("session id {id:?} must match [A-Za-z0-9_-]{{1,64}}"))),
            None => uuid::Uuid::new_v4().to_string(),
        };
        if !(config.alpha > 0.0 && config.alpha < 1.0) {
            return Err(invalid(format!("alpha must be in (0, 1), got {}", config.alpha)));
        }
        if config.assertions.is_empty() {
            return Err(invalid("a session needs at least one assertion"));
        }
        let mut ids = HashSet::new();
        for a in &config.assertions {
            if a.id.is_empty() {
                return Err(invalid("assertion ids must be nonempty"));
            }
            if !ids.insert(a.id.as_str()) {
                return Err(invalid(format!("duplicate assertion id {:?}", a.id)));
            }
            if let AssorterSpec::Plurality { winner, loser } = &a.assorter {
                if winner == loser {
                    return Err(invalid(format!("assertion {:?}: winner and loser must differ", a.id)));
                }
            }
        }
        let population = match &config.batches {
            Some(batches) => {
                if batches.is_empty() {
                    return Err(invalid("batch list is empty"));
                }
                let mut seen = HashSet::new();
                for b in batches {
                    if b.cards == 0 {
                        return Err(invalid(format!("batch {:?} has no cards", b.id)));
                    }
                    if !seen.insert(b.id.as_str()) {
                        return Err(invalid(format!("duplicate batch id {:?}", b.id)));
                    }
                }
                let cards: u64 = batches.iter().map(|b| b.cards).sum();
                if let Some(n) = config.population {
                    if n != cards {
                        return Err(invalid(format!("population {n} differs from the {cards} cards in the batches")));
                    }
                }
                cards
            }
            None => match config.population {
                Some(n) if n >= 1 => n,
                _ => return Err(invalid("population must be ≥ 1")),
            },
        };
        let file = SessionFile {
            schema_version: SCHEMA_VERSION,
            session_id,
            created_at: now,
            seed: config.seed,
            population,
            sampling: config.sampling,
            alpha: config.alpha,
            batches: config.batches,
            compliance_attested: config.compliance_attested,
            assertions: config
                .assertions
                .into_iter()
                .map(|config| AssertionRecord { config, state: fresh_state() })
                .collect(),
            draw_log: Vec::new(),
            pending: Vec::new(),
            status: SessionStatus::Open,
        };
        Self::blank(file)
    }

    /// Rebuilds a session from its persisted record, checking that replay
    /// reproduces the stored statistics exactly.
    pub fn from_file(file: SessionFile) -> Result<Self> {
        if file.schema_version != SCHEMA_VERSION {
            return Err(ServiceError::Corrupt(format!(
                "schema version {} is not supported (expected {SCHEMA_VERSION})",
                file.schema_version
            )));
        }
        let mut start = file.clone();
        start.draw_log.clear();
        start.pending.clear();
        start.status = SessionStatus::Open;
        for a in &mut start.assertions {
            a.state = fresh_state();
        }
        let mut s = Self::blank(start)?;
        for record in &file.draw_log {
            let dealt = s.deal_one()?;
            if dealt.index != record.index || dealt.seq != record.seq {
                return Err(ServiceError::Corrupt(format!(
                    "draw {} selected {} but replay selects {}",
                    record.seq, record.index, dealt.index
                )));
            }
            s.record_one(&Interpretation { seq: record.seq, entries: record.entries.clone() }, record.recorded_at)
                .map_err(|e| ServiceError::Corrupt(format!("replaying draw {}: {e}", record.seq)))?;
        }
        for p in &file.pending {
            if s.deal_one()? != *p {
                return Err(ServiceError::Corrupt(format!("pending draw {} does not match replay", p.seq)));
            }
        }
        for (a, b) in s.file.assertions.iter().zip(&file.assertions) {
            if a.state != b.state {
                return Err(ServiceError::Corrupt(format!(
                    "assertion {} does not replay to its stored state",
                    b.config.id
                )));
            }
        }
        match (s.file.status, file.status) {
            (x, y) if x == y => {}
            (SessionStatus::Open, SessionStatus::Escalated) => s.file.status = SessionStatus::Escalated,
            (x, y) => {
                return Err(ServiceError::Corrupt(format!(
                    "stored status {} but replay gives {}",
                    y.as_str(),
                    x.as_str()
                )))
            }
        }
        Ok(s)
    }

    fn blank(file: SessionFile) -> Result<Self> {
        let mut runtime = Vec::with_capacity(file.assertions.len());
        for a in &file.assertions {
            let upper = a.config.assorter.upper();
            let config = TestConfig {
                alpha: file.alpha,
                upper,
                null_mean: NULL_MEAN,
                population: match file.sampling {
                    Sampling::WithReplacement => None,
                    Sampling::WithoutReplacement => Some(file.population),
                },
                sampling: file.sampling,
            };
            let comparator = a.config.comparator(&config);
            let rt = match &file.batches {
                None => Runtime::Card(
                    SequentialTest::new(&comparator, config)
                        .map_err(|e| invalid(format!("assertion {:?}: {e}", a.config.id)))?,
                ),
                Some(batches) => {
                    let est = batch_estimator(&comparator, &config)
                        .map_err(|e| invalid(format!("assertion {:?}: {e}", a.config.id)))?;
                    let collection = BatchCollection::new(
                        batches
                            .iter()
                            .map(|b| Batch {
                                id: b.id.clone(),
                                cards: b.cards,
                                total: 0.0,
                                bound: upper * b.cards as f64,
                            })
                            .collect(),
                    )?;
                    let state = BatchDrawState::new(collection, file.alpha, NULL_MEAN, file.sampling)?;
                    Runtime::Batch { state: Box::new(state), est }
                }
            };
            runtime.push(rt);
        }
        let selector = match &file.batches {
            None => Selector::Cards(SelectionStream::new(file.seed, file.population, file.sampling)?),
            Some(batches) => Selector::Batches(WeightedSelectionStream::new(
                file.seed,
                batches.iter().map(|b| b.cards as f64).collect(),
                file.sampling,
            )?),
        };
        Ok(Self { file, runtime, selector })
    }

    pub fn file(&self) -> &SessionFile {
        &self.file
    }

    pub fn into_file(self) -> SessionFile {
        self.file
    }

    pub fn id(&self) -> &str {
        &self.file.session_id
    }

    pub fn status(&self) -> SessionStatus {
        self.file.status
    }

    pub fn report(&self) -> SessionReport {
        SessionReport::from_file(&self.file)
    }

    /// Live statistics, recomputed from the tests rather than the record.
    pub fn states(&self) -> Vec<TestState> {
        self.runtime.iter().map(|r| *r.state()).collect()
    }

    fn ensure_open(&self) -> Result<()> {
        match self.file.status {
            SessionStatus::Open => Ok(()),
            s => Err(ServiceError::SessionClosed(s.as_str())),
        }
    }

    fn deal_one(&mut self) -> Result<PendingDraw> {
        let seq = (self.file.draw_log.len() + self.file.pending.len()) as u64 + 1;
        let (index, batch_id) = match &mut self.selector {
            Selector::Cards(s) => (s.next_index().map_err(map_exhausted)?, None),
            Selector::Batches(s) => {
                let k = s.next_index().map_err(map_exhausted)?;
                let id = self.file.batches.as_ref().map(|b| b[k].id.clone());
                (k as u64, id)
            }
        };
        let p = PendingDraw { seq, index, batch_id };
        self.file.pending.push(p.clone());
        Ok(p)
    }

    /// Ensures at least `count` draws are pending and returns the first
    /// `count`. Repeating the call deals nothing new.
    pub fn draw(&mut self, count: u64) -> Result<Vec<PendingDraw>> {
        self.ensure_open()?;
        if count == 0 || count > MAX_DEAL {
            return Err(ServiceError::InvalidRequest(format!("count must be in 1..={MAX_DEAL}")));
        }
        while (self.file.pending.len() as u64) < count {
            match self.deal_one() {
                Ok(_) => {}
                Err(ServiceError::Exhausted) if !self.file.pending.is_empty() => break,
                Err(ServiceError::Exhausted) => {
                    self.file.status = SessionStatus::Escalated;
                    return Err(ServiceError::Exhausted);
                }
                Err(e) => return Err(e),
            }
        }
        Ok(self.file.pending.iter().take(count as usize).cloned().collect())
    }

    /// Applies interpretations in order. Either all are applied or none.
    pub fn record(&mut self, batch: &Interpretations, now: DateTime<Utc>) -> Result<SessionReport> {
        if batch.records().is_empty() {
            return Err(ServiceError::InvalidRequest("no interpretations given".into()));
        }
        if let [one] = batch.records() {
            // record_one validates everything before it changes anything.
            self.record_one(one, now)?;
        } else {
            let mut work = self.clone();
            for r in batch.records() {
                work.record_one(r, now)?;
            }
            *self = work;
        }
        Ok(self.report())
    }

    fn record_one(&mut self, rec: &Interpretation, now: DateTime<Utc>) -> Result<()> {
        self.ensure_open()?;
        let last = self.file.draw_log.last().map_or(0, |d| d.seq);
        if rec.seq <= last {
            return Err(ServiceError::StaleSequence { expected: last + 1, got: rec.seq });
        }
        let pending = match self.file.pending.first() {
            Some(p) if p.seq == rec.seq => p.clone(),
            other => return Err(ServiceError::OutOfOrder { expected: other.map(|p| p.seq), got: rec.seq }),
        };
        for id in rec.entries.keys() {
            if !self.file.assertions.iter().any(|a| &a.config.id == id) {
                return Err(ServiceError::InvalidRequest(format!("unknown assertion {id:?}")));
            }
        }
        let cards = self.file.batches.as_ref().map(|b| b[pending.index as usize].cards);
        // Validate everything before touching any test.
        let mut values = Vec::with_capacity(self.runtime.len());
        for (a, rt) in self.file.assertions.iter().zip(&self.runtime) {
            if !rt.state().is_running() {
                values.push(None);
                continue;
            }
            let id = &a.config.id;
            let entry = rec
                .entries
                .get(id)
                .ok_or_else(|| ServiceError::InvalidRequest(format!("missing entry for assertion {id:?}")))?;
            let upper = a.config.assorter.upper();
            let x = match (cards, entry) {
                (None, CardInterpretation::Vote { vote }) => match a.config.assorter {
                    AssorterSpec::Plurality { .. } => rla_core::assorters::plurality_assort(*vote),
                    AssorterSpec::Generic { .. } => {
                        return Err(ServiceError::InvalidRequest(format!(
                            "assertion {id:?} takes numeric values, not votes"
                        )))
                    }
                },
                (None, CardInterpretation::Value { value }) => *value,
                (Some(_), CardInterpretation::Vote { .. }) => {
                    return Err(ServiceError::InvalidRequest(format!(
                        "batch entries for {id:?} must be assorter totals"
                    )))
                }
                (Some(_), CardInterpretation::Value { value }) => *value,
            };
            let high = cards.map_or(upper, |c| upper * c as f64);
            if !(x >= 0.0 && x <= high) {
                return Err(ServiceError::OutOfRange { assertion: id.clone(), value: x, high });
            }
            values.push(Some(x));
        }
        for ((rt, a), x) in self.runtime.iter_mut().zip(&mut self.file.assertions).zip(values) {
            let Some(x) = x else { continue };
            match rt {
                Runtime::Card(test) => {
                    test.step(x)?;
                }
                Runtime::Batch { state, est } => {
                    let draw = state.observe_total(pending.index as usize, x)?;
                    state.batch_alpha_step(&draw, est)?;
                }
            }
            a.state = *rt.state();
        }
        self.file.pending.remove(0);
        self.file.draw_log.push(DrawRecord {
            seq: rec.seq,
            index: pending.index,
            batch_id: pending.batch_id,
            entries: rec.entries.clone(),
            recorded_at: now,
        });
        let states: Vec<Status> = self.runtime.iter().map(|r| r.state().status).collect();
        if states.iter().all(|s| *s == Status::Rejected) {
            self.file.status = SessionStatus::AllConfirmed;
        } else if !states.contains(&Status::Running) {
            // Some assertion survived a full count: the reported outcome stands refuted.
            self.file.status = SessionStatus::Escalated;
        }
        Ok(())
    }

    pub fn escalate(&mut self) -> Result<SessionReport> {
        self.ensure_open()?;
        self.file.status = SessionStatus::Escalated;
        Ok(self.report())
    }
}

fn map_exhausted(e: rla_core::Error) -> ServiceError {
    match e {
        rla_core::Error::Exhausted => ServiceError::Exhausted,
        e => e.into(),
    }
}

fn fresh_state() -> TestState {
    TestState { draws: 0, log_t: 0.0, max_log_t: 0.0, sum: 0.0, null_mean: NULL_MEAN, status: Status::Running }
}

/// Batch audits run ALPHA-family tests only.
fn batch_estimator(comparator: &ComparatorSpec, config: &TestConfig) -> rla_core::Result<EstimatorSpec> {
    let est = match comparator {
        ComparatorSpec::Alpha { estimator } => *estimator,
        ComparatorSpec::SprtWor { eta } => EstimatorSpec::Fixed { eta: *eta },
        ComparatorSpec::AprioriKelly { eta } => {
            EstimatorSpec::FromLambda { lambda: eta_to_lambda(*eta, config.null_mean, config.upper)? }
        }
        _ => {
            return Err(rla_core::Error::InvalidConfig(
                "batch sessions support ALPHA, SPRT and a priori Kelly tests only".into(),
            ))
        }
    };
    est.validate(config)?;
    Ok(est)
}
