use std::collections::BTreeMap;

use crate::diagnostics::{record, record_with_twin, DiagnosticsRecord};
use crate::grid::Field;

use super::{EvolveError, StepPlan};

/// When to snapshot fields and when to record diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckpointSchedule {
    /// Model times at which to emit a checkpoint; rounded to the nearest step.
    pub times: Vec<f64>,
    /// Diagnostics cadence in steps (0 means only at the start and end).
    pub diagnostics_every: usize,
}

impl CheckpointSchedule {
    /// A checkpoint every `interval` from `t0` through `t1` inclusive.
    pub fn every(interval: f64, t0: f64, t1: f64, diagnostics_every: usize) -> Self {
        let mut times = Vec::new();
        if interval > 0.0 {
            let n = ((t1 - t0) / interval + 1e-9).floor() as usize;
            times.extend((0..=n).map(|k| t0 + k as f64 * interval));
        }
        Self {
            times,
            diagnostics_every,
        }
    }
}

pub trait Observer {
    fn on_diagnostics(&mut self, record: &DiagnosticsRecord) -> Result<(), EvolveError>;
    fn on_checkpoint(&mut self, field: &Field) -> Result<(), EvolveError>;
}

pub trait TwinObserver {
    fn on_diagnostics(&mut self, quantum: &DiagnosticsRecord, classical: &DiagnosticsRecord)
        -> Result<(), EvolveError>;
    fn on_checkpoint(&mut self, quantum: &Field, classical: &Field) -> Result<(), EvolveError>;
}

/// Keeps everything in memory.
#[derive(Default, Debug)]
pub struct Recorder {
    pub diagnostics: Vec<DiagnosticsRecord>,
    pub checkpoints: Vec<Field>,
}

impl Observer for Recorder {
    fn on_diagnostics(&mut self, record: &DiagnosticsRecord) -> Result<(), EvolveError> {
        self.diagnostics.push(record.clone());
        Ok(())
    }

    fn on_checkpoint(&mut self, field: &Field) -> Result<(), EvolveError> {
        self.checkpoints.push(field.clone());
        Ok(())
    }
}

#[derive(Default, Debug)]
pub struct TwinRecorder {
    pub quantum: Vec<DiagnosticsRecord>,
    pub classical: Vec<DiagnosticsRecord>,
    pub checkpoints: Vec<(Field, Field)>,
    /// Keep checkpoints in memory; diagnostics are always kept.
    pub keep_fields: bool,
}

impl TwinObserver for TwinRecorder {
    fn on_diagnostics(
        &mut self,
        quantum: &DiagnosticsRecord,
        classical: &DiagnosticsRecord,
    ) -> Result<(), EvolveError> {
        self.quantum.push(quantum.clone());
        self.classical.push(classical.clone());
        Ok(())
    }

    fn on_checkpoint(&mut self, quantum: &Field, classical: &Field) -> Result<(), EvolveError> {
        if self.keep_fields {
            self.checkpoints.push((quantum.clone(), classical.clone()));
        }
        Ok(())
    }
}

#[derive(Default, Clone, Copy)]
struct Event {
    diagnostics: bool,
    checkpoint: bool,
}

fn step_count(t0: f64, t1: f64, dt: f64) -> Result<usize, EvolveError> {
    if !(t1 >= t0) {
        return Err(EvolveError::BadInterval { t0, t1 });
    }
    Ok(((t1 - t0) / dt).round() as usize)
}

fn events(t0: f64, dt: f64, nsteps: usize, schedule: &CheckpointSchedule) -> BTreeMap<usize, Event> {
    let mut ev: BTreeMap<usize, Event> = BTreeMap::new();
    ev.entry(0).or_default().diagnostics = true;
    ev.entry(nsteps).or_default().diagnostics = true;
    if schedule.diagnostics_every > 0 {
        for s in (0..=nsteps).step_by(schedule.diagnostics_every) {
            ev.entry(s).or_default().diagnostics = true;
        }
    }
    for &t in &schedule.times {
        let s = ((t - t0) / dt).round();
        if s >= 0.0 && s as usize <= nsteps {
            ev.entry(s as usize).or_default().checkpoint = true;
        }
    }
    ev
}

/// Advances `initial` to `t1` (rounded to a whole number of steps), reporting
/// diagnostics and checkpoints to `observer` as they happen. Anything already
/// reported stays reported if a later step fails.
pub fn evolve(
    initial: &Field,
    t1: f64,
    plan: &mut StepPlan,
    schedule: &CheckpointSchedule,
    margin: f64,
    observer: &mut dyn Observer,
) -> Result<Field, EvolveError> {
    let t0 = initial.time;
    let nsteps = step_count(t0, t1, plan.dt())?;
    let mut field = initial.clone();
    if nsteps == 0 {
        return Ok(field);
    }
    plan.reset_reference();
    let params = plan.params().clone();
    let mut done = 0;
    for (s, e) in events(t0, plan.dt(), nsteps, schedule) {
        plan.advance(&mut field, s - done)?;
        done = s;
        field.time = t0 + s as f64 * plan.dt();
        if e.diagnostics {
            observer.on_diagnostics(&record(&field, &params, margin))?;
        }
        if e.checkpoint {
            observer.on_checkpoint(&field)?;
        }
    }
    Ok(field)
}

/// Quantum and classical evolutions of the same initial field in lockstep, with
/// field distances attached to every diagnostics record. Returns
/// `(quantum, classical)` final fields.
pub fn evolve_twin(
    initial: &Field,
    t1: f64,
    quantum: &mut StepPlan,
    classical: &mut StepPlan,
    schedule: &CheckpointSchedule,
    margin: f64,
    observer: &mut dyn TwinObserver,
) -> Result<(Field, Field), EvolveError> {
    let t0 = initial.time;
    if quantum.dt() != classical.dt() {
        return Err(EvolveError::BadStep(classical.dt()));
    }
    let dt = quantum.dt();
    let nsteps = step_count(t0, t1, dt)?;
    let mut fq = initial.clone();
    let mut fc = initial.clone();
    if nsteps == 0 {
        return Ok((fq, fc));
    }
    quantum.reset_reference();
    classical.reset_reference();
    let pq = quantum.params().clone();
    let pc = classical.params().clone();
    let mut done = 0;
    for (s, e) in events(t0, dt, nsteps, schedule) {
        let n = s - done;
        let (rq, rc) = rayon::join(|| quantum.advance(&mut fq, n), || classical.advance(&mut fc, n));
        rq?;
        rc?;
        done = s;
        fq.time = t0 + s as f64 * dt;
        fc.time = fq.time;
        if e.diagnostics {
            let dq = record_with_twin(&fq, &fc, &pq, margin).expect("twin grids match");
            let dc = record_with_twin(&fc, &fq, &pc, margin).expect("twin grids match");
            observer.on_diagnostics(&dq, &dc)?;
        }
        if e.checkpoint {
            observer.on_checkpoint(&fq, &fc)?;
        }
    }
    Ok((fq, fc))
}
