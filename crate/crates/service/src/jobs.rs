use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use raytwin::antenna::AntennaPattern;
use raytwin::channel::{coverage, ChannelError, CoverageOptions};
use raytwin::engine::Endpoint;
use serde::{Deserialize, Serialize};
use uuid::Uuid;

use crate::api::{antenna, CoverageRequest};
use crate::{now_unix_ms, AppState, ServiceError, API_SCHEMA_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobStatus {
    Queued,
    Running,
    Done,
    Failed,
    Cancelled,
}

impl JobStatus {
    pub fn is_final(self) -> bool {
        matches!(self, JobStatus::Done | JobStatus::Failed | JobStatus::Cancelled)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobRecord {
    pub schema_version: u32,
    pub job_id: Uuid,
    pub kind: String,
    pub status: JobStatus,
    pub progress: f64,
    pub request: CoverageRequest,
    pub created_unix_ms: u64,
    pub started_unix_ms: Option<u64>,
    pub finished_unix_ms: Option<u64>,
    pub error: Option<String>,
    pub covered_fraction: Option<f64>,
}

impl JobRecord {
    pub fn new(request: CoverageRequest) -> Self {
        JobRecord {
            schema_version: API_SCHEMA_VERSION,
            job_id: Uuid::new_v4(),
            kind: "coverage".into(),
            status: JobStatus::Queued,
            progress: 0.0,
            request,
            created_unix_ms: now_unix_ms(),
            started_unix_ms: None,
            finished_unix_ms: None,
            error: None,
            covered_fraction: None,
        }
    }
}

/// Job records plus an append-only JSON-lines journal of status changes.
pub(crate) struct JobTable {
    pub records: BTreeMap<Uuid, JobRecord>,
    pub cancel: HashMap<Uuid, Arc<AtomicBool>>,
    journal: File,
}

impl JobTable {
    /// Replay the journal (last snapshot per job wins), compact it, and
    /// return the jobs to queue again in submission order.
    pub fn open(path: &Path) -> Result<(JobTable, Vec<Uuid>), ServiceError> {
        let mut records = BTreeMap::new();
        if path.exists() {
            for (n, line) in BufReader::new(File::open(path)?).lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<JobRecord>(&line) {
                    Ok(r) => {
                        records.insert(r.job_id, r);
                    }
                    // A torn final line from a crash is dropped.
                    Err(e) => log::warn!("journal line {}: {e}", n + 1),
                }
            }
        }
        let mut pending: Vec<&mut JobRecord> = records.values_mut().filter(|r| !r.status.is_final()).collect();
        pending.sort_by_key(|r| r.created_unix_ms);
        let mut queue = Vec::new();
        for r in pending {
            r.status = JobStatus::Queued;
            r.progress = 0.0;
            r.started_unix_ms = None;
            queue.push(r.job_id);
        }
        let tmp = path.with_extension("jsonl.tmp");
        {
            let mut f = File::create(&tmp)?;
            for r in records.values() {
                writeln!(f, "{}", serde_json::to_string(r).map_err(|e| ServiceError::Journal(e.to_string()))?)?;
            }
            f.sync_all()?;
        }
        std::fs::rename(&tmp, path)?;
        let journal = OpenOptions::new().append(true).open(path)?;
        let cancel = queue.iter().map(|&id| (id, Arc::new(AtomicBool::new(false)))).collect();
        Ok((JobTable { records, cancel, journal }, queue))
    }

    fn append(&mut self, id: Uuid) {
        let line = serde_json::to_string(&self.records[&id]).expect("record serializes");
        if let Err(e) = writeln!(self.journal, "{line}").and_then(|_| self.journal.sync_data()) {
            log::error!("journal write failed: {e}");
        }
    }

    pub fn insert(&mut self, r: JobRecord) {
        let id = r.job_id;
        self.cancel.insert(id, Arc::new(AtomicBool::new(false)));
        self.records.insert(id, r);
        self.append(id);
    }

    /// Apply `f` to a record and journal the result.
    pub fn update(&mut self, id: Uuid, f: impl FnOnce(&mut JobRecord)) {
        if let Some(r) = self.records.get_mut(&id) {
            f(r);
            self.append(id);
        }
    }
}

fn write_atomic(path: &Path, text: &str) -> std::io::Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = File::create(&tmp)?;
        f.write_all(text.as_bytes())?;
        f.sync_all()?;
    }
    std::fs::rename(tmp, path)
}

/// Cells per tracing batch: a few progress updates and cancellation
/// checks per job without retracing the ray tree too often.
fn batch_size(cells: usize) -> usize {
    cells.div_ceil(10).max(256)
}

enum Failure {
    Cancelled,
    Error(String),
}

impl From<String> for Failure {
    fn from(s: String) -> Self {
        Failure::Error(s)
    }
}

fn run_job(state: &Arc<AppState>, id: Uuid, req: &CoverageRequest, cancel: &AtomicBool) -> Result<f64, Failure> {
    let scene = state
        .scenes
        .read()
        .expect("scene lock")
        .get(&req.scene_id)
        .map(|s| s.scene.clone())
        .ok_or_else(|| "scene no longer exists".to_string())?;
    let cfg = req.engine().map_err(|e| e.to_string())?;
    let tx = Endpoint::new(req.tx.pos, antenna(req.tx.antenna.as_deref())?);
    let rx_ant: AntennaPattern = antenna(req.rx_antenna.as_deref())?;
    let progress = |p: f64| {
        if let Some(r) = state.jobs.lock().expect("job lock").records.get_mut(&id) {
            r.progress = p;
        }
    };
    let opts = CoverageOptions {
        time_s: req.time_s,
        tx_power_dbm: req.tx.power_dbm,
        batch_size: batch_size(req.grid.cell_count()),
        progress: Some(&progress),
        cancel: Some(cancel),
        ..CoverageOptions::default()
    };
    match coverage(&scene, &tx, &rx_ant, &req.grid, req.freq_hz, &cfg, &opts) {
        Ok(grid) => {
            write_atomic(&state.result_path(id), &grid.to_json()).map_err(|e| Failure::Error(format!("writing result: {e}")))?;
            Ok(grid.covered_fraction())
        }
        Err(ChannelError::Cancelled) => Err(Failure::Cancelled),
        Err(e) => Err(e.to_string().into()),
    }
}

/// Take job ids from the shared FIFO queue and run them one at a time.
pub(crate) async fn worker(state: Arc<AppState>) {
    loop {
        let Some(id) = state.pending.lock().await.recv().await else { return };
        let job = {
            let mut t = state.jobs.lock().expect("job lock");
            let ready = t.records.get(&id).is_some_and(|r| r.status == JobStatus::Queued);
            if !ready {
                continue;
            }
            t.update(id, |r| {
                r.status = JobStatus::Running;
                r.started_unix_ms = Some(now_unix_ms());
            });
            let cancel = t.cancel.entry(id).or_default().clone();
            (t.records[&id].request.clone(), cancel)
        };
        let st = state.clone();
        let outcome = tokio::task::spawn_blocking(move || run_job(&st, id, &job.0, &job.1))
            .await
            .unwrap_or_else(|e| Err(Failure::Error(format!("worker panicked: {e}"))));
        let mut t = state.jobs.lock().expect("job lock");
        t.update(id, |r| {
            r.finished_unix_ms = Some(now_unix_ms());
            match outcome {
                Ok(frac) => {
                    r.status = JobStatus::Done;
                    r.progress = 1.0;
                    r.covered_fraction = Some(frac);
                }
                Err(Failure::Cancelled) => r.status = JobStatus::Cancelled,
                Err(Failure::Error(msg)) => {
                    r.status = JobStatus::Failed;
                    r.error = Some(msg);
                }
            }
        });
        t.cancel.remove(&id);
    }
}

/// Request cancellation. Queued jobs are cancelled at once; running jobs
/// stop at the next batch boundary.
pub(crate) fn cancel(state: &AppState, id: Uuid) -> Option<JobRecord> {
    let mut t = state.jobs.lock().expect("job lock");
    let status = t.records.get(&id)?.status;
    if let Some(flag) = t.cancel.get(&id) {
        flag.store(true, Ordering::Relaxed);
    }
    if status == JobStatus::Queued {
        t.update(id, |r| {
            r.status = JobStatus::Cancelled;
            r.finished_unix_ms = Some(now_unix_ms());
        });
    }
    t.records.get(&id).cloned()
}
