// Copyright 2026 The hetpilot Authors
// SPDX-License-Identifier: Apache-2.0

//! Clocks and payload runners.
//!
//! A [`Driver`] owns the pilot clock. [`SimDriver`] advances virtual time over
//! an event heap; [`RealDriver`] follows the wall clock and runs payloads as
//! OS processes (or in-process sleeps/spins) on worker threads, reporting
//! completions through one ordered channel.

use std::collections::{BinaryHeap, HashMap, VecDeque};
use std::cmp::Ordering;
use std::process::{Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::scheduler::Payload;
use crate::time::Micros;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PayloadOutcome {
    pub success: bool,
    pub detail: Option<String>,
}

impl PayloadOutcome {
    pub fn ok() -> Self {
        PayloadOutcome { success: true, detail: None }
    }

    pub fn failed(detail: impl Into<String>) -> Self {
        PayloadOutcome { success: false, detail: Some(detail.into()) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Fired<E> {
    Timer(E),
    Payload(E, PayloadOutcome),
}

pub trait Driver<E> {
    fn now(&self) -> Micros;
    /// Fires `ev` at `at` (or immediately if `at` has passed).
    fn schedule(&mut self, at: Micros, ev: E);
    /// Runs `payload`; `ev` fires when it ends. `duration` is the sampled run time.
    fn spawn_payload(&mut self, ev: E, payload: &Payload, duration: Micros);
    fn next(&mut self) -> Option<(Micros, Fired<E>)>;
    /// Whether another event is due at exactly the current instant.
    fn has_due(&mut self) -> bool;
}

struct Entry<E> {
    at: Micros,
    seq: u64,
    fired: Fired<E>,
}

impl<E> PartialEq for Entry<E> {
    fn eq(&self, other: &Self) -> bool {
        (self.at, self.seq) == (other.at, other.seq)
    }
}
impl<E> Eq for Entry<E> {}
impl<E> PartialOrd for Entry<E> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<E> Ord for Entry<E> {
    // Min-heap on (time, insertion order).
    fn cmp(&self, other: &Self) -> Ordering {
        (other.at, other.seq).cmp(&(self.at, self.seq))
    }
}

/// Discrete-event clock. Events at equal times fire in insertion order.
pub struct SimDriver<E> {
    now: Micros,
    seq: u64,
    heap: BinaryHeap<Entry<E>>,
}

impl<E> Default for SimDriver<E> {
    fn default() -> Self {
        SimDriver { now: 0, seq: 0, heap: BinaryHeap::new() }
    }
}

impl<E> SimDriver<E> {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, at: Micros, fired: Fired<E>) {
        let at = at.max(self.now);
        self.heap.push(Entry { at, seq: self.seq, fired });
        self.seq += 1;
    }

    pub fn pending(&self) -> usize {
        self.heap.len()
    }
}

impl<E> Driver<E> for SimDriver<E> {
    fn now(&self) -> Micros {
        self.now
    }

    fn schedule(&mut self, at: Micros, ev: E) {
        self.push(at, Fired::Timer(ev));
    }

    fn spawn_payload(&mut self, ev: E, _payload: &Payload, duration: Micros) {
        self.push(self.now + duration, Fired::Payload(ev, PayloadOutcome::ok()));
    }

    fn next(&mut self) -> Option<(Micros, Fired<E>)> {
        let e = self.heap.pop()?;
        self.now = e.at;
        Some((e.at, e.fired))
    }

    fn has_due(&mut self) -> bool {
        self.heap.peek().is_some_and(|e| e.at == self.now)
    }
}

/// How the real driver executes sleep payloads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RealMode {
    /// Spawn `sleep <seconds>` as a child process.
    #[default]
    Subprocess,
    /// Sleep on a worker thread.
    Thread,
    /// Busy-spin a worker thread for the duration.
    Spin,
}

struct Timer {
    at: Micros,
    seq: u64,
    id: u64,
}

impl PartialEq for Timer {
    fn eq(&self, o: &Self) -> bool {
        (self.at, self.seq) == (o.at, o.seq)
    }
}
impl Eq for Timer {}
impl PartialOrd for Timer {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Timer {
    fn cmp(&self, o: &Self) -> Ordering {
        (o.at, o.seq).cmp(&(self.at, self.seq))
    }
}

/// Wall-clock driver. Timestamps never go backwards.
pub struct RealDriver<E> {
    start: Instant,
    mode: RealMode,
    last: Micros,
    seq: u64,
    timers: BinaryHeap<Timer>,
    parked: HashMap<u64, E>,
    outstanding: usize,
    tx: Sender<(u64, PayloadOutcome)>,
    rx: Receiver<(u64, PayloadOutcome)>,
    ready: VecDeque<(u64, PayloadOutcome)>,
}

impl<E> RealDriver<E> {
    pub fn new(mode: RealMode) -> Self {
        let (tx, rx) = mpsc::channel();
        RealDriver {
            start: Instant::now(),
            mode,
            last: 0,
            seq: 0,
            timers: BinaryHeap::new(),
            parked: HashMap::new(),
            outstanding: 0,
            tx,
            rx,
            ready: VecDeque::new(),
        }
    }

    fn park(&mut self, ev: E) -> u64 {
        let id = self.seq;
        self.seq += 1;
        self.parked.insert(id, ev);
        id
    }

    fn wall(&self) -> Micros {
        (self.start.elapsed().as_micros() as Micros).max(self.last)
    }

    fn stamp(&mut self) -> Micros {
        self.last = self.wall();
        self.last
    }
}

fn run_payload(mode: RealMode, payload: &Payload, duration: Duration) -> PayloadOutcome {
    let status = match payload {
        Payload::Command { argv, .. } if !argv.is_empty() => {
            Command::new(&argv[0]).args(&argv[1..]).stdout(Stdio::null()).stderr(Stdio::null()).status()
        }
        Payload::Command { .. } => return PayloadOutcome::failed("empty command"),
        Payload::Sleep { .. } => match mode {
            RealMode::Subprocess => Command::new("sleep")
                .arg(format!("{:.6}", duration.as_secs_f64()))
                .stdout(Stdio::null())
                .stderr(Stdio::null())
                .status(),
            RealMode::Thread => {
                thread::sleep(duration);
                return PayloadOutcome::ok();
            }
            RealMode::Spin => {
                let until = Instant::now() + duration;
                while Instant::now() < until {
                    std::hint::spin_loop();
                }
                return PayloadOutcome::ok();
            }
        },
    };
    match status {
        Ok(s) if s.success() => PayloadOutcome::ok(),
        Ok(s) => PayloadOutcome::failed(format!("exit status {s}")),
        Err(e) => PayloadOutcome::failed(format!("spawn failed: {e}")),
    }
}

impl<E> Driver<E> for RealDriver<E> {
    fn now(&self) -> Micros {
        self.last
    }

    fn schedule(&mut self, at: Micros, ev: E) {
        let id = self.park(ev);
        let seq = self.seq;
        self.seq += 1;
        self.timers.push(Timer { at, seq, id });
    }

    fn spawn_payload(&mut self, ev: E, payload: &Payload, duration: Micros) {
        let id = self.park(ev);
        self.outstanding += 1;
        let tx = self.tx.clone();
        let payload = payload.clone();
        let mode = self.mode;
        let duration = Duration::from_micros(duration);
        thread::spawn(move || {
            let out = run_payload(mode, &payload, duration);
            // The receiver only disappears when the driver is dropped.
            let _ = tx.send((id, out));
        });
    }

    fn next(&mut self) -> Option<(Micros, Fired<E>)> {
        loop {
            if let Some((id, out)) = self.ready.pop_front() {
                self.outstanding -= 1;
                let ev = self.parked.remove(&id).expect("parked payload event");
                return Some((self.stamp(), Fired::Payload(ev, out)));
            }
            let now = self.wall();
            if let Some(t) = self.timers.peek() {
                if t.at <= now {
                    let t = self.timers.pop().expect("peeked");
                    let ev = self.parked.remove(&t.id).expect("parked timer event");
                    return Some((self.stamp(), Fired::Timer(ev)));
                }
            }
            if self.timers.is_empty() && self.outstanding == 0 {
                return None;
            }
            let msg = match self.timers.peek() {
                Some(t) => match self.rx.recv_timeout(Duration::from_micros(t.at - now)) {
                    Ok(m) => Some(m),
                    Err(RecvTimeoutError::Timeout) => None,
                    Err(RecvTimeoutError::Disconnected) => unreachable!("driver holds a sender"),
                },
                None => Some(self.rx.recv().expect("driver holds a sender")),
            };
            if let Some(m) = msg {
                self.ready.push_back(m);
            }
        }
    }

    fn has_due(&mut self) -> bool {
        while let Ok(m) = self.rx.try_recv() {
            self.ready.push_back(m);
        }
        !self.ready.is_empty() || self.timers.peek().is_some_and(|t| t.at <= self.wall())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sim_orders_by_time_then_insertion() {
        let mut d = SimDriver::new();
        d.schedule(10, "b");
        d.schedule(5, "a");
        d.schedule(10, "c");
        d.spawn_payload("p", &Payload::sleep(0.0), 7);
        let order: Vec<_> = std::iter::from_fn(|| d.next()).map(|(t, f)| match f {
            Fired::Timer(e) | Fired::Payload(e, _) => (t, e),
        }).collect();
        assert_eq!(order, vec![(5, "a"), (7, "p"), (10, "b"), (10, "c")]);
    }

    #[test]
    fn sim_reports_batch() {
        let mut d = SimDriver::new();
        d.schedule(3, 1);
        d.schedule(3, 2);
        d.next();
        assert!(d.has_due());
        d.next();
        assert!(!d.has_due());
    }

    #[test]
    fn real_runs_payloads_in_parallel() {
        let mut d = RealDriver::new(RealMode::Thread);
        for i in 0..4 {
            d.spawn_payload(i, &Payload::sleep(0.05), 50_000);
        }
        d.schedule(10_000, 99);
        let mut seen = Vec::new();
        while let Some((t, f)) = d.next() {
            seen.push((t, f));
        }
        assert_eq!(seen.len(), 5);
        assert!(matches!(seen[0].1, Fired::Timer(99)));
        let last = seen.last().unwrap().0;
        assert!((50_000..150_000).contains(&last), "parallel sleeps ended at {last}us");
        assert!(seen.windows(2).all(|w| w[0].0 <= w[1].0));
    }

    #[test]
    fn real_subprocess_failure_reported() {
        let mut d = RealDriver::new(RealMode::Subprocess);
        let cmd = Payload::Command { argv: vec!["false".into()], expected_seconds: 0.0 };
        d.spawn_payload((), &cmd, 0);
        let (_, f) = d.next().unwrap();
        assert!(matches!(f, Fired::Payload((), PayloadOutcome { success: false, .. })));
    }
}
