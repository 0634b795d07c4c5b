//! The single writer. One thread owns the event log and the authoritative
//! state; request handlers send it commands and await the outcome, while
//! readers take the latest published state without blocking it.

use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use chrono::{DateTime, Utc};
use courseops_core::ops::{read_snapshot, restore, write_snapshot, Commit, EventLog, OpsCommand, OpsContext, OpsError, OpsState};
use tokio::sync::{mpsc, oneshot, watch};

use crate::data::{EVENTS, SNAPSHOT};

/// The outcome of a command and the state right after it.
#[derive(Debug, Clone)]
pub struct Applied {
    pub commit: Commit,
    pub state: Arc<OpsState>,
}

struct Job {
    command: OpsCommand,
    key: Option<String>,
    now: DateTime<Utc>,
    reply: oneshot::Sender<Result<Applied, OpsError>>,
}

pub struct Store {
    sender: Mutex<Option<mpsc::Sender<Job>>>,
    state: watch::Receiver<Arc<OpsState>>,
    writer: Mutex<Option<JoinHandle<Result<(), OpsError>>>>,
    snapshot_path: PathBuf,
}

impl Store {
    /// Restores state from the snapshot and log in `dir` and starts the writer.
    /// A corrupt log is refused with the offending seq.
    pub fn open(dir: &Path, ctx: Arc<OpsContext>, snapshot_every: u64) -> Result<Store, OpsError> {
        std::fs::create_dir_all(dir)?;
        let snapshot_path = dir.join(SNAPSHOT);
        let (log, records) = EventLog::open(dir.join(EVENTS))?;
        let state = restore(read_snapshot(&snapshot_path)?, &records)?;
        tracing::info!(events = records.len(), last_seq = state.last_seq, "state restored");

        let (state_tx, state_rx) = watch::channel(Arc::new(state.clone()));
        let (job_tx, job_rx) = mpsc::channel::<Job>(256);
        let path = snapshot_path.clone();
        let writer = std::thread::Builder::new()
            .name("courseops-writer".into())
            .spawn(move || write_loop(log, state, ctx, job_rx, state_tx, &path, snapshot_every))?;
        Ok(Store {
            sender: Mutex::new(Some(job_tx)),
            state: state_rx,
            writer: Mutex::new(Some(writer)),
            snapshot_path,
        })
    }

    /// The latest committed state.
    pub fn state(&self) -> Arc<OpsState> {
        self.state.borrow().clone()
    }

    pub async fn submit(&self, command: OpsCommand, key: Option<String>, now: DateTime<Utc>) -> Result<Applied, OpsError> {
        let sender = self
            .sender
            .lock()
            .expect("sender lock")
            .clone()
            .ok_or_else(|| OpsError::Io("service is shutting down".into()))?;
        let (reply, outcome) = oneshot::channel();
        sender
            .send(Job { command, key, now, reply })
            .await
            .map_err(|_| OpsError::Io("writer has stopped".into()))?;
        outcome.await.map_err(|_| OpsError::Io("writer has stopped".into()))?
    }

    /// Stops accepting commands, lets the writer drain and write its final
    /// snapshot. Blocks until it has.
    pub fn close(&self) -> Result<(), OpsError> {
        self.sender.lock().expect("sender lock").take();
        match self.writer.lock().expect("writer lock").take() {
            Some(handle) => handle.join().map_err(|_| OpsError::Io("writer panicked".into()))?,
            None => Ok(()),
        }
    }

    pub fn snapshot_path(&self) -> &Path {
        &self.snapshot_path
    }
}

fn write_loop(
    mut log: EventLog,
    mut state: OpsState,
    ctx: Arc<OpsContext>,
    mut jobs: mpsc::Receiver<Job>,
    publish: watch::Sender<Arc<OpsState>>,
    snapshot_path: &Path,
    snapshot_every: u64,
) -> Result<(), OpsError> {
    let mut since_snapshot = 0u64;
    while let Some(job) = jobs.blocking_recv() {
        let result = state.commit(&ctx, job.command, job.key, job.now, |records| log.append(records));
        let result = result.map(|commit| {
            since_snapshot += commit.records.len() as u64;
            let shared = Arc::new(state.clone());
            if !commit.records.is_empty() {
                publish.send_replace(shared.clone());
            }
            Applied { commit, state: shared }
        });
        // the caller may have given up; the command still happened
        let _ = job.reply.send(result);
        if snapshot_every > 0 && since_snapshot >= snapshot_every {
            match write_snapshot(snapshot_path, &state) {
                Ok(()) => since_snapshot = 0,
                Err(e) => tracing::warn!(error = %e, "snapshot failed; the log remains authoritative"),
            }
        }
    }
    write_snapshot(snapshot_path, &state)?;
    tracing::info!(last_seq = state.last_seq, "final snapshot written");
    Ok(())
}
