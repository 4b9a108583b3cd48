use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::po::PoFixture;
use super::BatchStats;
use crate::agents::{Orchestrator, OrchestratorParts, RequestClass, ResponseStatus, WorkflowTrace};
use crate::backends::{BackendDescriptor, BackendRole, BackendSet, MockBackend, MockSpec, MockVisionFixture};
use crate::clock::{Clock, SystemClock};
use crate::error::{Error, Result};
use crate::store::Store;

/// Allowed processing time on top of injected backend delay.
pub const OVERHEAD_BUDGET_MS: u64 = 200;

/// Time from receipt to reply.
pub fn compute_latency(trace: &WorkflowTrace) -> Result<Duration> {
    let out = trace
        .tau_out
        .ok_or_else(|| Error::integrity("trace has no reply timestamp"))?;
    (out - trace.tau_in)
        .to_std()
        .map_err(|_| Error::integrity("reply timestamp precedes receipt"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencySample {
    pub id: String,
    pub class: RequestClass,
    pub latency_s: f64,
    pub injected_s: f64,
    pub within_budget: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyRun {
    pub delay_ms: u64,
    pub budget_ms: u64,
    pub samples: Vec<LatencySample>,
    pub stats: Option<BatchStats>,
    /// Replies stamped at the receipt instant.
    pub degenerate: usize,
}

/// Sends each fixture request through the canonical workflow against mocks
/// that sleep `delay_ms` per call, in wall-clock time.
pub fn run_latency(fixture: &PoFixture, vision: &MockVisionFixture, delay_ms: u64, requests: usize) -> Result<LatencyRun> {
    let dir = tempfile::tempdir().map_err(|e| Error::io(std::env::temp_dir(), e))?;
    let spec = MockSpec {
        delay_ms,
        ..MockSpec::default()
    };
    let make = |role| MockBackend::new(BackendDescriptor::mock(role, spec.clone()), vision.clone()).map(Arc::new);
    let mocks = [
        make(BackendRole::Vision)?,
        make(BackendRole::Dialog)?,
        make(BackendRole::ControllerAssist)?,
        make(BackendRole::FileAssist)?,
    ];
    let backends = BackendSet {
        vision: mocks[0].clone(),
        dialog: mocks[1].clone(),
        controller: mocks[2].clone(),
        file: mocks[3].clone(),
    };
    let injected = || mocks.iter().map(|m| m.injected_delay()).sum::<Duration>();
    let store = Arc::new(Store::open(dir.path())?);
    let orch = Orchestrator::new(OrchestratorParts::standard(store, backends, Arc::new(SystemClock))?);
    let profile = super::suite::eval_profile("latency");
    orch.write_profile(&profile)?;

    let mut samples = Vec::with_capacity(requests);
    let mut degenerate = 0;
    for (n, label) in fixture.traces.iter().cycle().take(requests).enumerate() {
        let now = SystemClock.now();
        let mut msg = fixture.message(label, &profile.user_id, orch.local_date(&profile, now)?, now);
        msg.meal_id = Some(format!("{}-{n}", label.id));
        let before = injected();
        let (resp, trace) = orch.handle(&msg);
        if resp.status == ResponseStatus::Error {
            return Err(Error::integrity(format!("request {} failed: {:?}", label.id, resp.error)));
        }
        let latency = compute_latency(&trace)?;
        if latency.is_zero() {
            degenerate += 1;
        }
        let inj = injected() - before;
        samples.push(LatencySample {
            id: label.id.clone(),
            class: trace.class,
            latency_s: latency.as_secs_f64(),
            injected_s: inj.as_secs_f64(),
            within_budget: latency >= inj && latency <= inj + Duration::from_millis(OVERHEAD_BUDGET_MS),
        });
    }
    let stats = BatchStats::of(&samples.iter().map(|s| s.latency_s).collect::<Vec<_>>());
    Ok(LatencyRun {
        delay_ms,
        budget_ms: OVERHEAD_BUDGET_MS,
        samples,
        stats,
        degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::Utc;

    #[test]
    fn latency_is_reply_minus_receipt() {
        let t0 = Utc::now();
        let mut t = WorkflowTrace::new(RequestClass::MealLog, t0);
        assert!(compute_latency(&t).is_err());
        t.tau_out = Some(t0 + chrono::Duration::milliseconds(65_400));
        assert_eq!(compute_latency(&t).unwrap(), Duration::from_millis(65_400));
        t.tau_out = Some(t0);
        assert!(compute_latency(&t).unwrap().is_zero());
    }
}
