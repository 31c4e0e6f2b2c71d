//! Stateful facade over the graph, ID registry, trace state and infection
//! forest, with on-disk persistence.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{self, snapshot, ContactGraph, GraphStats};
use crate::ids::{IdMode, IdRegistry, IdRegistryState, VirtualIdTable};
use crate::model::{ConfigParams, TraceConfig, UserId};
use crate::pathways::{Cluster, ForestState, InfectionForest};
use crate::stream::{self, StreamRecord};
use crate::trace::{trace_contacts, TraceResult};

pub const SNAPSHOT_FILE: &str = "graph.cskg";
pub const SIDECAR_FILE: &str = "state.json";
const SIDECAR_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepPolicy {
    #[default]
    AfterEachIngest,
    Manual,
}

/// Contents of a configuration file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AppConfig {
    pub trace: ConfigParams,
    #[serde(default)]
    pub ids: IdMode,
    #[serde(default)]
    pub sweep: SweepPolicy,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct IngestReport {
    pub streams: u64,
    pub samples: u64,
    pub gaps: u64,
    pub contacts_installed: u64,
    pub contacts_stale: u64,
    pub edges_created: u64,
    pub edges_expired: u64,
    /// Streams rejected as a whole (wire errors or unusable headers).
    pub parse_errors: u64,
    /// Samples rejected inside otherwise valid streams.
    pub sample_errors: u64,
    pub errors: Vec<String>,
}

impl IngestReport {
    pub fn absorb(&mut self, other: IngestReport) {
        self.streams += other.streams;
        self.samples += other.samples;
        self.gaps += other.gaps;
        self.contacts_installed += other.contacts_installed;
        self.contacts_stale += other.contacts_stale;
        self.edges_created += other.edges_created;
        self.edges_expired += other.edges_expired;
        self.parse_errors += other.parse_errors;
        self.sample_errors += other.sample_errors;
        self.errors.extend(other.errors);
    }
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct EngineStats {
    pub graph: GraphStats,
    pub epoch: u64,
    pub infected: usize,
    pub suspected: usize,
    pub chi_edges: usize,
    pub clusters: usize,
    /// Sizing-model estimate for the configured population, in GB (2^33 bits).
    pub space_estimate_gb: f64,
    pub reference_estimate: ReferenceEstimate,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReferenceEstimate {
    pub users: u64,
    pub q: u64,
    pub n: u64,
    pub gb: f64,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    version: u32,
    config: AppConfig,
    ids: IdRegistryState,
    trace: TraceResult,
    forest: ForestState,
}

#[derive(Debug, Clone)]
pub struct Engine {
    app: AppConfig,
    graph: ContactGraph,
    ids: IdRegistry,
    trace: TraceResult,
    forest: InfectionForest,
}

impl Engine {
    pub fn new(app: AppConfig) -> Result<Self> {
        let config = TraceConfig::new(app.trace.clone())?;
        let table = VirtualIdTable::assign(config.population(), config.r(), app.ids)?;
        Ok(Engine {
            forest: InfectionForest::new(config.population()),
            graph: ContactGraph::new(config),
            ids: IdRegistry::new(table),
            trace: TraceResult::default(),
            app,
        })
    }

    /// Builds an engine from the text of a configuration file.
    pub fn from_config_json(text: &str) -> Result<Self> {
        let app: AppConfig = serde_json::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        Self::new(app)
    }

    pub fn app_config(&self) -> &AppConfig {
        &self.app
    }

    pub fn config(&self) -> &TraceConfig {
        self.graph.config()
    }

    pub fn graph(&self) -> &ContactGraph {
        &self.graph
    }

    pub fn ids(&self) -> &IdRegistry {
        &self.ids
    }

    pub fn rotate_ids(&mut self, seed: u64) -> u64 {
        self.ids.rotate(seed).epoch()
    }

    pub fn trace_state(&self) -> &TraceResult {
        &self.trace
    }

    /// Processes one parsed stream.
    pub fn ingest_records(&mut self, records: &[StreamRecord]) -> IngestReport {
        let mut report = IngestReport {
            streams: 1,
            ..IngestReport::default()
        };
        match stream::process(&mut self.graph, records, &self.ids) {
            Ok(r) => {
                report.samples = r.samples;
                report.gaps = r.gaps;
                report.contacts_installed = r.contacts_installed;
                report.contacts_stale = r.contacts_stale;
                report.edges_created = r.edges_created;
                report.sample_errors = r.diagnostics.len() as u64;
                report.errors = r
                    .diagnostics
                    .into_iter()
                    .map(|d| format!("record {}: {}", d.record, d.message))
                    .collect();
            }
            Err(e) => {
                report.parse_errors = 1;
                report.errors.push(e.to_string());
            }
        }
        report
    }

    /// Parses and processes every stream in `bytes`, then sweeps expired
    /// edges if the policy says so.
    pub fn ingest_bytes(&mut self, bytes: &[u8]) -> IngestReport {
        let mut report = IngestReport::default();
        for parsed in stream::parse_streams(bytes) {
            match parsed {
                Ok(records) => report.absorb(self.ingest_records(&records)),
                Err(e) => {
                    report.streams += 1;
                    report.parse_errors += 1;
                    report.errors.push(e.to_string());
                }
            }
        }
        if self.app.sweep == SweepPolicy::AfterEachIngest {
            report.edges_expired += self.sweep() as u64;
        }
        report
    }

    /// Frees every edge with no contact left in the window.
    pub fn sweep(&mut self) -> usize {
        match self.graph.now() {
            Some(now) => self.graph.expire(now),
            None => 0,
        }
    }

    /// Traces `infected` and folds the outcome into the accumulated state and
    /// the infection forest. Returns the accumulated state.
    pub fn trace(&mut self, infected: &[UserId], levels: u32) -> Result<&TraceResult> {
        let next = trace_contacts(&self.graph, infected, &self.trace, levels)?;
        let fresh = &next.chi[self.trace.chi.len()..];
        self.forest.build_disjoint_set(fresh, &next.infected, &next.gamma)?;
        self.trace = next;
        Ok(&self.trace)
    }

    pub fn clusters(&mut self) -> Vec<Cluster> {
        self.forest.clusters()
    }

    pub fn forest(&self) -> &InfectionForest {
        &self.forest
    }

    pub fn stats(&mut self) -> Result<EngineStats> {
        let cfg = self.config().clone();
        let (users, q, n) = (10_000_000, 64, 1344);
        Ok(EngineStats {
            graph: self.graph.stats(),
            epoch: self.ids.current().epoch(),
            infected: self.trace.infected.len(),
            suspected: self.trace.gamma.len(),
            chi_edges: self.trace.chi.len(),
            clusters: self.forest.clusters().len(),
            space_estimate_gb: graph::space_estimate(cfg.population().into(), cfg.q().into(), cfg.n().into())?
                / graph::GB_BITS,
            reference_estimate: ReferenceEstimate {
                users,
                q,
                n,
                gb: graph::space_estimate(users, q, n)? / graph::GB_BITS,
            },
        })
    }

    /// Writes the graph snapshot and the JSON sidecar into `dir`, each by
    /// write-then-rename.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        snapshot::save(&self.graph, self.ids.current().epoch(), &dir.join(SNAPSHOT_FILE))?;
        let sidecar = Sidecar {
            version: SIDECAR_VERSION,
            config: self.app.clone(),
            ids: self.ids.state(),
            trace: self.trace.clone(),
            forest: self.forest.state(),
        };
        let json = serde_json::to_vec_pretty(&sidecar).map_err(|e| Error::Sidecar(e.to_string()))?;
        snapshot::write_atomic(&dir.join(SIDECAR_FILE), &json)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let raw = fs::read(dir.join(SIDECAR_FILE))?;
        let sidecar: Sidecar = serde_json::from_slice(&raw).map_err(|e| Error::Sidecar(e.to_string()))?;
        if sidecar.version != SIDECAR_VERSION {
            return Err(Error::Sidecar(format!(
                "unsupported sidecar version {}",
                sidecar.version
            )));
        }
        let config = TraceConfig::new(sidecar.config.trace.clone())?;
        let (graph, epoch) = snapshot::load(&dir.join(SNAPSHOT_FILE), &config)?;
        let ids = IdRegistry::from_state(&sidecar.ids)?;
        if ids.current().epoch() != epoch {
            return Err(Error::Sidecar(format!(
                "snapshot epoch {epoch} does not match sidecar epoch {}",
                ids.current().epoch()
            )));
        }
        let forest = InfectionForest::from_state(&sidecar.forest)?;
        if forest.users() != config.population() {
            return Err(Error::Sidecar("forest size does not match population".into()));
        }
        Ok(Engine {
            app: sidecar.config,
            graph,
            ids,
            trace: sidecar.trace,
            forest,
        })
    }

    /// True if `dir` holds a saved engine.
    pub fn exists(dir: &Path) -> bool {
        dir.join(SNAPSHOT_FILE).exists() || dir.join(SIDECAR_FILE).exists()
    }
}
