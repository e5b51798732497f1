// Copyright 2026 The hetpilot Authors
// SPDX-License-Identifier: Apache-2.0

//! The pilot clock: integer microseconds since pilot acquisition.

/// Microseconds since the pilot was acquired.
pub type Micros = u64;

pub const MICROS_PER_SEC: u64 = 1_000_000;

/// Converts non-negative seconds to clock ticks, rounding to the nearest microsecond.
pub fn from_secs(secs: f64) -> Micros {
    assert!(
        secs.is_finite() && secs >= 0.0,
        "duration must be finite and non-negative, got {secs}"
    );
    (secs * MICROS_PER_SEC as f64).round() as Micros
}

pub fn to_secs(t: Micros) -> f64 {
    t as f64 / MICROS_PER_SEC as f64
}
