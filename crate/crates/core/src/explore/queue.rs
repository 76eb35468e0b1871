//! Judgement task queue with leases.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use crate::judgements::{JudgementTask, TaskStatus};

pub trait Clock: Send + Sync {
    /// Seconds since the Unix epoch.
    fn now(&self) -> u64;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> u64 {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0)
    }
}

/// A clock that only moves when told to.
#[derive(Debug, Clone, Default)]
pub struct ManualClock(Arc<AtomicU64>);

impl ManualClock {
    pub fn new(start: u64) -> Self {
        ManualClock(Arc::new(AtomicU64::new(start)))
    }

    pub fn advance(&self, seconds: u64) {
        self.0.fetch_add(seconds, Ordering::SeqCst);
    }
}

impl Clock for ManualClock {
    fn now(&self) -> u64 {
        self.0.load(Ordering::SeqCst)
    }
}

#[derive(Debug, Clone)]
pub struct TaskQueue {
    tasks: Vec<JudgementTask>,
    lease_until: Vec<Option<u64>>,
    lease_seconds: u64,
}

impl TaskQueue {
    pub fn new(tasks: Vec<JudgementTask>, lease_seconds: u64) -> Self {
        let n = tasks.len();
        TaskQueue {
            tasks,
            lease_until: vec![None; n],
            lease_seconds,
        }
    }

    pub fn tasks(&self) -> &[JudgementTask] {
        &self.tasks
    }

    /// Leases the pending task with the most draws (ties in pair order).
    pub fn next(&mut self, now: u64) -> Option<JudgementTask> {
        let k = (0..self.tasks.len())
            .filter(|&k| self.tasks[k].status == TaskStatus::Pending)
            .filter(|&k| self.lease_until[k].is_none_or(|until| until <= now))
            .max_by(|&a, &b| {
                self.tasks[a]
                    .draw_count
                    .cmp(&self.tasks[b].draw_count)
                    .then(b.cmp(&a))
            })?;
        self.lease_until[k] = Some(now + self.lease_seconds);
        Some(self.tasks[k].clone())
    }

    /// Records an answer for the unordered pair `{i, j}`.
    pub fn resolve(&mut self, i: &str, j: &str, status: TaskStatus) {
        for (k, t) in self.tasks.iter_mut().enumerate() {
            if (t.i == i && t.j == j) || (t.i == j && t.j == i) {
                if t.status != TaskStatus::Answered {
                    t.status = status;
                }
                self.lease_until[k] = None;
            }
        }
    }

    pub fn count(&self, status: TaskStatus) -> usize {
        self.tasks.iter().filter(|t| t.status == status).count()
    }
}
